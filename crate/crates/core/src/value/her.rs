//! Hindsight relabeling of gesture trajectories.
//!
//! A trajectory is acted under one behavior goal, but the cumulant and
//! continuation of every goal can be recomputed from the stored touch
//! histories. Each goal that completed somewhere in the trajectory gets its
//! own copy of the trajectory, labeled from scratch.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::features::FeatureVector;
use super::td::Transition;
use crate::gesture::{completed_gestures, cumulant, GestureGoal, GridGeometry, TouchHistory};

/// Default number of hindsight goals per trajectory.
pub const DEFAULT_RELABEL_BUDGET: usize = 16;

/// Turns a (goal, touch history) pair into approximator input.
pub trait GoalEncoder {
    fn geometry(&self) -> &GridGeometry;
    fn base_discount(&self) -> f64;
    fn encode(&self, goal: &GestureGoal, history: &TouchHistory) -> FeatureVector;
    fn action_mask(&self, goal: &GestureGoal) -> Arc<[bool]>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct HerStep {
    pub history: TouchHistory,
    pub action: usize,
    pub next_history: TouchHistory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelabeledTransition {
    pub goal: GestureGoal,
    /// Position of the step within its trajectory.
    pub step: usize,
    pub transition: Transition,
}

/// Goals completed on any step of the trajectory, in goal order.
pub fn achieved_goals(geometry: &GridGeometry, trajectory: &[HerStep]) -> BTreeSet<GestureGoal> {
    trajectory.iter().flat_map(|s| completed_gestures(geometry, &s.next_history)).collect()
}

/// Labels the whole trajectory for the behavior goal plus up to
/// `relabel_budget` achieved goals, drawn uniformly when more completed.
pub fn her_relabel<E: GoalEncoder, R: Rng + ?Sized>(
    trajectory: &[HerStep],
    behavior_goal: GestureGoal,
    relabel_budget: usize,
    encoder: &E,
    rng: &mut R,
) -> Vec<RelabeledTransition> {
    let mut hindsight: Vec<GestureGoal> = achieved_goals(encoder.geometry(), trajectory)
        .into_iter()
        .filter(|g| *g != behavior_goal)
        .collect();
    if hindsight.len() > relabel_budget {
        hindsight = hindsight.choose_multiple(rng, relabel_budget).copied().collect();
        hindsight.sort();
    }
    let mut out = Vec::with_capacity(trajectory.len() * (1 + hindsight.len()));
    for goal in std::iter::once(behavior_goal).chain(hindsight) {
        label_for_goal(trajectory, goal, encoder, &mut out);
    }
    out
}

fn label_for_goal<E: GoalEncoder>(
    trajectory: &[HerStep],
    goal: GestureGoal,
    encoder: &E,
    out: &mut Vec<RelabeledTransition>,
) {
    let geometry = encoder.geometry();
    let mask = encoder.action_mask(&goal);
    let mut features = trajectory.first().map(|s| encoder.encode(&goal, &s.history));
    for (i, step) in trajectory.iter().enumerate() {
        let c = cumulant(geometry, &goal, &step.next_history);
        let next_features = encoder.encode(&goal, &step.next_history);
        let current = match features.take() {
            Some(f) if i == 0 || trajectory[i - 1].next_history == step.history => f,
            _ => encoder.encode(&goal, &step.history),
        };
        out.push(RelabeledTransition {
            goal,
            step: i,
            transition: Transition {
                features: current,
                actions: vec![step.action],
                cumulant: c,
                continuation: encoder.base_discount() * (1.0 - c),
                next_features: next_features.clone(),
                next_action_mask: Arc::clone(&mask),
            },
        });
        features = Some(next_features);
    }
}
