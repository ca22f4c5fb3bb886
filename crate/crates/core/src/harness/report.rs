//! Training reports: a JSON summary plus CSV curves.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::store::{ParameterStore, LEVELS};
use super::{HarnessConfig, LearnerSlot, RunStats};
use crate::env::TaskConfig;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub actor: usize,
    pub actor_episode: u64,
    pub steps: u64,
    pub episode_return: f64,
    pub per_event: f64,
    pub success: bool,
    /// Class of the first option; empty for the flat baseline.
    pub class: String,
    pub options: u64,
    /// Snapshot versions the episode acted under.
    pub versions: [u64; LEVELS],
    /// Global primitive steps once this episode was counted.
    pub global_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub level: usize,
    pub update: u64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub emitted: u64,
    pub received: u64,
    pub stored: u64,
    pub violations: u64,
    pub updates: u64,
    pub final_version: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub policy: String,
    pub mode: String,
    pub task: String,
    pub grid: String,
    pub seed: u64,
    pub config_hash: String,
    pub goal_checksum: u64,
    pub actors: usize,
    pub budget: u64,
    pub total_steps: u64,
    pub backpressure: u64,
    pub snapshots_monotone: bool,
    pub actor_episodes: Vec<u64>,
    pub levels: Vec<LevelStats>,
    pub episodes: Vec<EpisodeRow>,
    pub losses: Vec<LossRow>,
}

/// First 16 hex digits of a SHA-256 over the canonical JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configs serialize");
    Sha256::digest(&json)[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl TrainingReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        config: &HarnessConfig,
        task: &TaskConfig,
        budget: u64,
        checksum: u64,
        episodes: Vec<EpisodeRow>,
        slots: &[LearnerSlot],
        stats: RunStats,
        store: &ParameterStore,
    ) -> Self {
        let mut levels: Vec<LevelStats> = slots
            .iter()
            .map(|s| {
                let level = s.learner.level();
                LevelStats {
                    level,
                    emitted: stats.emitted[level],
                    received: s.received,
                    stored: s.learner.stored(),
                    violations: s.violations,
                    updates: s.updates,
                    final_version: store.version(level),
                }
            })
            .collect();
        levels.sort_by_key(|l| l.level);
        let mut losses: Vec<LossRow> = slots.iter().flat_map(|s| s.losses.iter().cloned()).collect();
        losses.sort_by_key(|l| (l.level, l.update));
        Self {
            policy: config.policy.label().to_string(),
            mode: format!("{:?}", config.mode).to_lowercase(),
            task: task.name.clone(),
            grid: task.geometry.to_string(),
            seed: config.seed,
            config_hash: config_hash(&(config, task)),
            goal_checksum: checksum,
            actors: config.actors,
            budget,
            total_steps: episodes.iter().map(|e| e.steps).sum(),
            backpressure: stats.backpressure,
            snapshots_monotone: stats.monotone,
            actor_episodes: stats.actor_episodes,
            levels,
            episodes,
            losses,
        }
    }

    pub fn total_violations(&self) -> u64 {
        self.levels.iter().map(|l| l.violations).sum()
    }

    /// Transitions emitted but never received by their learner.
    pub fn lost(&self) -> u64 {
        self.levels.iter().map(|l| l.emitted.saturating_sub(l.received)).sum()
    }

    /// Summary JSON without the per-episode and per-update rows.
    pub fn summary_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("episodes");
            m.remove("losses");
            m.insert("episode_count".into(), self.episodes.len().into());
            let n = self.episodes.len().max(1) as f64;
            let tail = &self.episodes[self.episodes.len().saturating_sub(100)..];
            let mean = |xs: &[EpisodeRow], f: fn(&EpisodeRow) -> f64| {
                xs.iter().map(f).sum::<f64>() / (xs.len().max(1) as f64)
            };
            m.insert("mean_return".into(), (self.episodes.iter().map(|e| e.episode_return).sum::<f64>() / n).into());
            m.insert("last100_mean_return".into(), mean(tail, |e| e.episode_return).into());
            m.insert("last100_success".into(), mean(tail, |e| f64::from(u8::from(e.success))).into());
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn episodes_csv(&self) -> String {
        let mut s = format!("# seed={} config_hash={}\n", self.seed, self.config_hash);
        s.push_str("actor,actor_episode,steps,return,per_event,success,class,options,v0,v1,v2,global_steps\n");
        for e in &self.episodes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                e.actor,
                e.actor_episode,
                e.steps,
                e.episode_return,
                e.per_event,
                u8::from(e.success),
                e.class,
                e.options,
                e.versions[0],
                e.versions[1],
                e.versions[2],
                e.global_steps
            );
        }
        s
    }

    pub fn losses_csv(&self) -> String {
        let mut s = format!("# seed={} config_hash={}\n", self.seed, self.config_hash);
        s.push_str("level,update,loss\n");
        for l in &self.losses {
            let _ = writeln!(s, "{},{},{}", l.level, l.update, l.loss);
        }
        s
    }

    pub fn queues_csv(&self) -> String {
        let mut s = format!("# seed={} config_hash={}\n", self.seed, self.config_hash);
        s.push_str("level,emitted,received,stored,violations,updates,final_version\n");
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                l.level, l.emitted, l.received, l.stored, l.violations, l.updates, l.final_version
            );
        }
        let _ = writeln!(s, "# backpressure={}", self.backpressure);
        s
    }

    /// Writes `summary.json`, `episodes.csv`, `losses.csv` and `queues.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        std::fs::write(dir.join("episodes.csv"), self.episodes_csv())?;
        std::fs::write(dir.join("losses.csv"), self.losses_csv())?;
        std::fs::write(dir.join("queues.csv"), self.queues_csv())?;
        Ok(())
    }

    /// Every report byte in one buffer, for identity checks.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = self.summary_json()?.into_bytes();
        out.extend(self.episodes_csv().into_bytes());
        out.extend(self.losses_csv().into_bytes());
        out.extend(self.queues_csv().into_bytes());
        Ok(out)
    }
}
