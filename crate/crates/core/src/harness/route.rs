//! Envelopes and per-level bounded queues.

use std::sync::atomic::{AtomicU64, Ordering};

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};

use super::store::LEVELS;
use crate::error::{Error, Result};
use crate::hierarchy::ClassStat;
use crate::value::{RelabeledTransition, Transition};

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Level0(RelabeledTransition),
    Level1(Transition),
    Level2(ClassStat),
    /// Primitive-action transition of the flat baseline.
    Flat(Transition),
}

impl Payload {
    /// Level whose learner may store this payload.
    pub fn level(&self) -> usize {
        match self {
            Payload::Level0(_) | Payload::Flat(_) => 0,
            Payload::Level1(_) => 1,
            Payload::Level2(_) => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionEnvelope {
    pub level: usize,
    pub actor: usize,
    pub episode: u64,
    pub payload: Payload,
}

/// Senders for every level plus back-pressure accounting.
#[derive(Debug)]
pub struct Router {
    senders: Vec<Sender<TransitionEnvelope>>,
    sent: [AtomicU64; LEVELS],
    backpressure: AtomicU64,
}

impl Router {
    pub fn new(capacity: usize) -> (Self, Vec<Receiver<TransitionEnvelope>>) {
        let (senders, receivers) = (0..LEVELS).map(|_| bounded(capacity)).unzip();
        (Self { senders, sent: Default::default(), backpressure: AtomicU64::new(0) }, receivers)
    }

    /// Enqueues on the queue of `envelope.level`, blocking while it is full.
    pub fn route(&self, envelope: TransitionEnvelope) -> Result<()> {
        let level = envelope.level;
        let tx = self.senders.get(level).ok_or(Error::UnknownLevel(level))?;
        match tx.try_send(envelope) {
            Ok(()) => {}
            Err(TrySendError::Full(envelope)) => {
                self.backpressure.fetch_add(1, Ordering::Relaxed);
                tx.send(envelope).map_err(|_| Error::Disconnected(format!("level {level} learner")))?;
            }
            Err(TrySendError::Disconnected(_)) => return Err(Error::Disconnected(format!("level {level} learner"))),
        }
        self.sent[level].fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn sent(&self) -> [u64; LEVELS] {
        std::array::from_fn(|k| self.sent[k].load(Ordering::Relaxed))
    }

    pub fn backpressure(&self) -> u64 {
        self.backpressure.load(Ordering::Relaxed)
    }
}
