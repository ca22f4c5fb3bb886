//! Versioned parameter snapshots.

use std::sync::Arc;

use parking_lot::RwLock;

use crate::error::{Error, Result};
use crate::hierarchy::{FlatAgent, LevelOneAgent, LevelTwoAgent, LevelZeroAgent};

pub const LEVELS: usize = 3;

#[derive(Clone, Debug)]
pub enum SnapshotPayload {
    Level0(Arc<LevelZeroAgent>),
    Level1(Arc<LevelOneAgent>),
    Level2(LevelTwoAgent),
    Flat(Arc<FlatAgent>),
}

impl SnapshotPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            SnapshotPayload::Level0(_) => "level0",
            SnapshotPayload::Level1(_) => "level1",
            SnapshotPayload::Level2(_) => "level2",
            SnapshotPayload::Flat(_) => "flat",
        }
    }
}

/// Immutable once published.
#[derive(Clone, Debug)]
pub struct ParameterSnapshot {
    pub level: usize,
    pub version: u64,
    pub checksum: u64,
    pub payload: SnapshotPayload,
}

/// Latest snapshot per level, swapped atomically.
#[derive(Debug)]
pub struct ParameterStore {
    checksum: u64,
    slots: [RwLock<Option<Arc<ParameterSnapshot>>>; LEVELS],
}

impl ParameterStore {
    pub fn new(checksum: u64) -> Self {
        Self { checksum, slots: Default::default() }
    }

    fn slot(&self, level: usize) -> Result<&RwLock<Option<Arc<ParameterSnapshot>>>> {
        self.slots.get(level).ok_or(Error::UnknownLevel(level))
    }

    /// Publishes `payload` as the next version of `level`.
    pub fn publish(&self, level: usize, payload: SnapshotPayload) -> Result<u64> {
        let slot = self.slot(level)?;
        let mut guard = slot.write();
        let version = guard.as_ref().map_or(0, |s| s.version) + 1;
        *guard = Some(Arc::new(ParameterSnapshot { level, version, checksum: self.checksum, payload }));
        Ok(version)
    }

    pub fn fetch(&self, level: usize) -> Result<Arc<ParameterSnapshot>> {
        self.slot(level)?.read().clone().ok_or(Error::NoSnapshot(level))
    }

    pub fn version(&self, level: usize) -> u64 {
        self.slots.get(level).and_then(|s| s.read().as_ref().map(|s| s.version)).unwrap_or(0)
    }
}
