//! Gesture goals executed as options.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::level0::GesturePolicy;
use crate::env::{EnvStep, Environment, PrimitiveAction};
use crate::error::{Error, Result};
use crate::gesture::{cumulant, GestureGoal};
use crate::value::{epsilon_greedy, HerStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    Timeout,
    EpisodeEnd,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Timeout => "timeout",
            Termination::EpisodeEnd => "episode_end",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptionExecution {
    pub goal: GestureGoal,
    /// Primitive steps taken.
    pub steps: usize,
    /// Undiscounted environment reward accrued during the option.
    pub reward: f64,
    pub rewards: Vec<f64>,
    pub termination: Termination,
    pub final_step: EnvStep,
    /// Goal-conditioned trajectory for hindsight relabeling.
    pub trajectory: Vec<HerStep>,
}

/// Runs `goal` until its cumulant fires, `max_len` steps pass, or the
/// episode ends. Completion takes precedence when the final step does both.
pub fn run_option<P: GesturePolicy + ?Sized, R: Rng + ?Sized>(
    env: &mut Environment,
    policy: &P,
    goal: GestureGoal,
    epsilon: f64,
    max_len: usize,
    rng: &mut R,
) -> Result<OptionExecution> {
    if max_len == 0 {
        return Err(Error::InvalidConfig("option timeout must be at least 1".into()));
    }
    if env.is_done() {
        return Err(Error::EpisodeEnded);
    }
    let geometry = *env.geometry();
    let mask = vec![true; PrimitiveAction::space_size(&geometry)];
    let mut trajectory = Vec::with_capacity(max_len);
    let mut rewards = Vec::with_capacity(max_len);
    let mut termination = Termination::Timeout;
    let mut last = None;
    for _ in 0..max_len {
        let history = env.history().clone();
        let q = policy.gesture_q(&goal, &history);
        let a = epsilon_greedy(&q, &mask, epsilon, rng)?;
        let out = env.step(PrimitiveAction::from_index(&geometry, a))?;
        trajectory.push(HerStep { history, action: a, next_history: env.history().clone() });
        rewards.push(out.reward);
        let ended = out.episode_end;
        last = Some(out);
        if cumulant(&geometry, &goal, env.history()) == 1.0 {
            termination = Termination::Completed;
            break;
        }
        if ended {
            termination = Termination::EpisodeEnd;
            break;
        }
    }
    Ok(OptionExecution {
        goal,
        steps: trajectory.len(),
        reward: rewards.iter().sum(),
        rewards,
        termination,
        final_step: last.expect("at least one step"),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_task, TaskConfig};
    use crate::gesture::{Cell, GridGeometry};
    use crate::hierarchy::level0::LevelZeroEncoder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scripted policy that prefers a fixed action sequence by history length.
    struct Scripted {
        encoder: LevelZeroEncoder,
        plan: Vec<PrimitiveAction>,
        step: std::cell::Cell<usize>,
    }

    impl GesturePolicy for Scripted {
        fn encoder(&self) -> &LevelZeroEncoder {
            &self.encoder
        }

        fn gesture_q(&self, _goal: &GestureGoal, _history: &crate::gesture::TouchHistory) -> Vec<f64> {
            let g = *self.encoder.geometry();
            let i = self.step.get();
            self.step.set(i + 1);
            let mut q = vec![0.0; 2 * g.n_cells()];
            q[self.plan[i.min(self.plan.len() - 1)].index(&g)] = 1.0;
            q
        }
    }

    fn pad(rows: usize, cols: usize) -> Environment {
        let geometry = GridGeometry::new(rows, cols).unwrap();
        let cfg = TaskConfig {
            name: "gesture_pad".into(),
            geometry,
            seed: 0,
            latency_ticks: 0,
            episode_limit: 1000,
        };
        let mut env = make_task(&cfg).unwrap();
        env.reset();
        env
    }

    fn scripted(env: &Environment, plan: Vec<PrimitiveAction>) -> Scripted {
        Scripted { encoder: LevelZeroEncoder::new(*env.geometry(), 0.99), plan, step: 0.into() }
    }

    #[test]
    fn tap_completes_in_two_steps() {
        let mut env = pad(4, 3);
        let c = Cell(5);
        let p = scripted(&env, vec![PrimitiveAction::touch(c), PrimitiveAction::lift()]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = run_option(&mut env, &p, GestureGoal::Tap(c), 0.0, 10, &mut rng).unwrap();
        assert_eq!(o.steps, 2);
        assert_eq!(o.termination, Termination::Completed);
        assert_eq!(o.trajectory.len(), 2);
    }

    #[test]
    fn swipe_completes_in_three_steps() {
        let mut env = pad(4, 3);
        let (s, e) = (Cell(0), Cell(11));
        let plan = vec![PrimitiveAction::touch(s), PrimitiveAction::touch(e), PrimitiveAction::lift()];
        let p = scripted(&env, plan);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = run_option(&mut env, &p, GestureGoal::Swipe { start: s, end: e }, 0.0, 10, &mut rng).unwrap();
        assert_eq!((o.steps, o.termination), (3, Termination::Completed));
    }

    #[test]
    fn never_exceeds_max_len() {
        let mut env = pad(4, 3);
        let p = scripted(&env, vec![PrimitiveAction::touch(Cell(1))]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = run_option(&mut env, &p, GestureGoal::Tap(Cell(0)), 0.0, 10, &mut rng).unwrap();
        assert_eq!((o.steps, o.termination), (10, Termination::Timeout));
        for max_len in 1..12 {
            let o = run_option(&mut env, &p, GestureGoal::Tap(Cell(2)), 1.0, max_len, &mut rng).unwrap();
            assert!(o.steps <= max_len);
            let done = cumulant(env.geometry(), &o.goal, env.history()) == 1.0;
            assert_eq!(done, o.termination == Termination::Completed);
        }
    }

    #[test]
    fn episode_end_stops_option() {
        let geometry = GridGeometry::new(4, 3).unwrap();
        let cfg = TaskConfig { name: "gesture_pad".into(), geometry, seed: 0, latency_ticks: 0, episode_limit: 3 };
        let mut env = make_task(&cfg).unwrap();
        env.reset();
        let p = scripted(&env, vec![PrimitiveAction::touch(Cell(1))]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = run_option(&mut env, &p, GestureGoal::Tap(Cell(0)), 0.0, 10, &mut rng).unwrap();
        assert_eq!((o.steps, o.termination), (3, Termination::EpisodeEnd));
        assert!(o.final_step.episode_end);
        assert!(matches!(
            run_option(&mut env, &p, GestureGoal::Tap(Cell(0)), 0.0, 10, &mut rng),
            Err(Error::EpisodeEnded)
        ));
    }
}
