//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are sectioned
//! with dots (`task.name`, `harness.actors`, `level1.lr`); every key is
//! optional and unknown or repeated keys are rejected. Lists such as hidden
//! layer sizes and gesture classes are comma separated.

use std::collections::BTreeSet;
use std::path::PathBuf;

use crate::env::TaskConfig;
use crate::error::{Error, Result};
use crate::gesture::{GestureClass, GridGeometry};
use crate::harness::{HarnessConfig, Mode, PolicyKind};
use crate::hierarchy::{BackendKind, ClassFrequency, PretrainConfig};
use crate::value::{EpsilonSchedule, TdConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task_name: String,
    /// Grid override; the task's registered default otherwise.
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub latency_ticks: u32,
    pub episode_limit: Option<u64>,
    pub harness: HarnessConfig,
    /// Primitive steps of task training.
    pub budget: u64,
    pub level0_path: Option<PathBuf>,
    pub pretrain: PretrainConfig,
    /// Swipe goals sampled when measuring completion rates.
    pub swipe_goals: usize,
    pub completion_threshold: f64,
    /// Pretrain level 0 in-process when `train` gets no parameter file.
    pub inline_pretrain: bool,
    pub eval_episodes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task_name: "catch".into(),
            rows: None,
            cols: None,
            latency_ticks: 0,
            episode_limit: None,
            harness: HarnessConfig::default(),
            budget: 200_000,
            level0_path: None,
            pretrain: PretrainConfig::default(),
            swipe_goals: 50,
            completion_threshold: 0.9,
            inline_pretrain: false,
            eval_episodes: 100,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s.trim())).collect()
}

fn list_text(values: &[usize]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn parse_mode(value: &str) -> Result<Mode> {
    match value {
        "concurrent" => Ok(Mode::Concurrent),
        "deterministic" => Ok(Mode::Deterministic),
        _ => Err(Error::InvalidConfig(format!("unknown mode {value:?}"))),
    }
}

fn mode_text(mode: Mode) -> &'static str {
    match mode {
        Mode::Concurrent => "concurrent",
        Mode::Deterministic => "deterministic",
    }
}

fn parse_class(value: &str) -> Result<GestureClass> {
    GestureClass::ALL
        .into_iter()
        .find(|c| c.name() == value)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown gesture class {value:?}")))
}

fn set_td(td: &mut TdConfig, field: &str, key: &str, value: &str) -> Result<bool> {
    match field {
        "lr" => td.learning_rate = parse(key, value)?,
        "batch" => td.batch_size = parse(key, value)?,
        "sync" => td.target_sync_period = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn td_lines(prefix: &str, td: &TdConfig, out: &mut Vec<String>) {
    out.push(format!("{prefix}.lr = {}", td.learning_rate));
    out.push(format!("{prefix}.batch = {}", td.batch_size));
    out.push(format!("{prefix}.sync = {}", td.target_sync_period));
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", no + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::InvalidConfig(format!("line {}: duplicate key {key}", no + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let h = &mut self.harness;
        let (section, field) = key.split_once('.').unwrap_or(("", key));
        match (section, field) {
            ("", "seed") => self.seed = parse(key, value)?,
            ("task", "name") => self.task_name = value.to_string(),
            ("task", "rows") => self.rows = Some(parse(key, value)?),
            ("task", "cols") => self.cols = Some(parse(key, value)?),
            ("task", "latency_ticks") => self.latency_ticks = parse(key, value)?,
            ("task", "episode_limit") => self.episode_limit = Some(parse(key, value)?),
            ("harness", "actors") => h.actors = parse(key, value)?,
            ("harness", "queue_capacity") => h.queue_capacity = parse(key, value)?,
            ("harness", "fetch_period") => h.fetch_period = parse(key, value)?,
            ("harness", "publish_period") => h.publish_period = parse(key, value)?,
            ("harness", "updates_per_round") => h.updates_per_round = parse(key, value)?,
            ("harness", "mode") => h.mode = parse_mode(value)?,
            ("harness", "policy") => h.policy = parse_policy(value)?,
            ("harness", "budget") => self.budget = parse(key, value)?,
            ("harness", "epsilon_start") => h.epsilon.start = parse(key, value)?,
            ("harness", "epsilon_end") => h.epsilon.end = parse(key, value)?,
            ("harness", "epsilon_decay") => h.epsilon.decay_steps = parse(key, value)?,
            ("harness", "level2_epsilon") => h.level2_epsilon = parse(key, value)?,
            ("harness", "train_level0") => h.train_level0 = parse_bool(key, value)?,
            ("episode", "option_timeout") => {
                h.episode.option_timeout = parse(key, value)?;
                self.pretrain.option_timeout = h.episode.option_timeout;
            }
            ("episode", "class_frequency") => {
                h.episode.class_frequency = match value {
                    "per_episode" => ClassFrequency::PerEpisode,
                    "per_option" => ClassFrequency::PerOption,
                    _ => return Err(Error::InvalidConfig(format!("{key}: unknown value {value:?}"))),
                }
            }
            ("level0", "backend") => {
                h.level0.backend = match value {
                    "table" => BackendKind::Table,
                    "network" => BackendKind::Network,
                    _ => return Err(Error::InvalidConfig(format!("{key}: unknown backend {value:?}"))),
                }
            }
            ("level0", "hidden") => h.level0.hidden = parse_list(key, value)?,
            ("level0", "replay") => h.level0.replay_capacity = parse(key, value)?,
            ("level0", "relabel_budget") => {
                h.level0.relabel_budget = parse(key, value)?;
                h.episode.relabel_budget = h.level0.relabel_budget;
            }
            ("level0", "base_discount") => h.level0.base_discount = parse(key, value)?,
            ("level0", "path") => self.level0_path = Some(PathBuf::from(value)),
            ("level0", f) if set_td(&mut h.level0.td, f, key, value)? => {}
            ("level1", "hidden") => h.level1.hidden = parse_list(key, value)?,
            ("level1", "replay") => h.level1.replay_capacity = parse(key, value)?,
            ("level1", "gamma_env") => {
                h.level1.gamma_env = parse(key, value)?;
                h.episode.gamma_env = h.level1.gamma_env;
            }
            ("level1", f) if set_td(&mut h.level1.td, f, key, value)? => {}
            ("flat", "hidden") => h.flat.hidden = parse_list(key, value)?,
            ("flat", "replay") => h.flat.replay_capacity = parse(key, value)?,
            ("flat", f) if set_td(&mut h.flat.td, f, key, value)? => {}
            ("pretrain", "budget") => self.pretrain.budget = parse(key, value)?,
            ("pretrain", "updates_per_step") => self.pretrain.updates_per_step = parse(key, value)?,
            ("pretrain", "epsilon_start") => self.pretrain.epsilon.start = parse(key, value)?,
            ("pretrain", "epsilon_end") => self.pretrain.epsilon.end = parse(key, value)?,
            ("pretrain", "epsilon_decay") => self.pretrain.epsilon.decay_steps = parse(key, value)?,
            ("pretrain", "classes") => {
                self.pretrain.classes = value.split(',').map(|c| parse_class(c.trim())).collect::<Result<_>>()?
            }
            ("pretrain", "swipe_goals") => self.swipe_goals = parse(key, value)?,
            ("pretrain", "threshold") => self.completion_threshold = parse(key, value)?,
            ("pretrain", "inline") => self.inline_pretrain = parse_bool(key, value)?,
            ("eval", "episodes") => self.eval_episodes = parse(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown key {key}"))),
        }
        Ok(())
    }

    /// Canonical text: every key, fixed order. Parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let h = &self.harness;
        let mut out = vec![format!("seed = {}", self.seed), format!("task.name = {}", self.task_name)];
        if let Some(r) = self.rows {
            out.push(format!("task.rows = {r}"));
        }
        if let Some(c) = self.cols {
            out.push(format!("task.cols = {c}"));
        }
        out.push(format!("task.latency_ticks = {}", self.latency_ticks));
        if let Some(l) = self.episode_limit {
            out.push(format!("task.episode_limit = {l}"));
        }
        out.extend([
            format!("harness.actors = {}", h.actors),
            format!("harness.queue_capacity = {}", h.queue_capacity),
            format!("harness.fetch_period = {}", h.fetch_period),
            format!("harness.publish_period = {}", h.publish_period),
            format!("harness.updates_per_round = {}", h.updates_per_round),
            format!("harness.mode = {}", mode_text(h.mode)),
            format!("harness.policy = {}", h.policy.label()),
            format!("harness.budget = {}", self.budget),
            format!("harness.epsilon_start = {}", h.epsilon.start),
            format!("harness.epsilon_end = {}", h.epsilon.end),
            format!("harness.epsilon_decay = {}", h.epsilon.decay_steps),
            format!("harness.level2_epsilon = {}", h.level2_epsilon),
            format!("harness.train_level0 = {}", h.train_level0),
            format!("episode.option_timeout = {}", h.episode.option_timeout),
            format!(
                "episode.class_frequency = {}",
                match h.episode.class_frequency {
                    ClassFrequency::PerEpisode => "per_episode",
                    ClassFrequency::PerOption => "per_option",
                }
            ),
            format!(
                "level0.backend = {}",
                match h.level0.backend {
                    BackendKind::Table => "table",
                    BackendKind::Network => "network",
                }
            ),
            format!("level0.hidden = {}", list_text(&h.level0.hidden)),
            format!("level0.replay = {}", h.level0.replay_capacity),
            format!("level0.relabel_budget = {}", h.level0.relabel_budget),
            format!("level0.base_discount = {}", h.level0.base_discount),
        ]);
        if let Some(p) = &self.level0_path {
            out.push(format!("level0.path = {}", p.display()));
        }
        td_lines("level0", &h.level0.td, &mut out);
        out.push(format!("level1.hidden = {}", list_text(&h.level1.hidden)));
        out.push(format!("level1.replay = {}", h.level1.replay_capacity));
        out.push(format!("level1.gamma_env = {}", h.level1.gamma_env));
        td_lines("level1", &h.level1.td, &mut out);
        out.push(format!("flat.hidden = {}", list_text(&h.flat.hidden)));
        out.push(format!("flat.replay = {}", h.flat.replay_capacity));
        td_lines("flat", &h.flat.td, &mut out);
        let p = &self.pretrain;
        out.extend([
            format!("pretrain.budget = {}", p.budget),
            format!("pretrain.updates_per_step = {}", p.updates_per_step),
            format!("pretrain.epsilon_start = {}", p.epsilon.start),
            format!("pretrain.epsilon_end = {}", p.epsilon.end),
            format!("pretrain.epsilon_decay = {}", p.epsilon.decay_steps),
            format!("pretrain.classes = {}", p.classes.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")),
            format!("pretrain.swipe_goals = {}", self.swipe_goals),
            format!("pretrain.threshold = {}", self.completion_threshold),
            format!("pretrain.inline = {}", self.inline_pretrain),
            format!("eval.episodes = {}", self.eval_episodes),
        ]);
        let mut text = out.join("\n");
        text.push('\n');
        text
    }

    pub fn config_hash(&self) -> String {
        crate::harness::report::config_hash(&self.to_text())
    }

    /// The task with grid and limit overrides applied, seeded with `seed`.
    pub fn task(&self) -> Result<TaskConfig> {
        let mut task = TaskConfig::for_task(&self.task_name, self.seed)?;
        if self.rows.is_some() || self.cols.is_some() {
            let rows = self.rows.unwrap_or(task.geometry.rows());
            let cols = self.cols.unwrap_or(task.geometry.cols());
            task.geometry = GridGeometry::new(rows, cols)?;
        }
        if let Some(l) = self.episode_limit {
            task.episode_limit = l;
        }
        task.latency_ticks = self.latency_ticks;
        Ok(task)
    }

    /// Harness settings with the experiment seed applied.
    pub fn harness_config(&self) -> HarnessConfig {
        HarnessConfig { seed: self.seed, ..self.harness.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.task()?;
        self.harness_config().validate()?;
        if let Some(p) = &self.level0_path {
            if !p.exists() {
                return Err(Error::InvalidConfig(format!("level0.path {} does not exist", p.display())));
            }
        }
        if self.pretrain.classes.is_empty() {
            return Err(Error::InvalidConfig("pretrain.classes is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.completion_threshold) {
            return Err(Error::InvalidConfig("pretrain.threshold must lie in [0, 1]".into()));
        }
        let eps = |e: EpsilonSchedule| (0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.end);
        if !eps(self.pretrain.epsilon) || !eps(self.harness.epsilon) {
            return Err(Error::InvalidConfig("epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

pub fn parse_policy(value: &str) -> Result<PolicyKind> {
    match value {
        "hierarchy" => Ok(PolicyKind::Hierarchy),
        "flat" => Ok(PolicyKind::Flat),
        _ => Err(Error::InvalidConfig(format!("policy {value:?} cannot be trained"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sectioned_keys() {
        let text = "# catch run\nseed = 7\ntask.name = button_sparse\n\nlevel1.hidden = 64, 32\nlevel1.lr = 0.003\n\
                    harness.mode = concurrent\npretrain.classes = tap,fling\nlevel1.gamma_env = 0.9\n";
        let cfg = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.harness.level1.hidden, vec![64, 32]);
        assert_eq!(cfg.harness.level1.td.learning_rate, 0.003);
        assert_eq!(cfg.harness.mode, Mode::Concurrent);
        assert_eq!(cfg.pretrain.classes, vec![GestureClass::Tap, GestureClass::Fling]);
        assert_eq!(cfg.harness.episode.gamma_env, 0.9);
        let task = cfg.task().unwrap();
        assert_eq!((task.geometry.rows(), task.geometry.cols(), task.seed), (9, 6, 7));
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = ExperimentConfig::from_text("task.rows = 4\ntask.cols = 3\nlevel0.backend = network").unwrap();
        cfg.harness.episode.class_frequency = ClassFrequency::PerOption;
        let back = ExperimentConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
        let other = ExperimentConfig { seed: 1, ..cfg.clone() };
        assert_ne!(other.config_hash(), cfg.config_hash());
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["nokey", "seed = x", "bogus.key = 1", "seed = 1\nseed = 2", "harness.mode = fast", "level0.backend = tree"]
        {
            assert!(matches!(ExperimentConfig::from_text(text), Err(Error::InvalidConfig(_))), "{text}");
        }
        let cfg = ExperimentConfig::from_text("level0.path = /definitely/not/here.bin").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_text("task.name = pinball").unwrap();
        assert!(matches!(cfg.task(), Err(Error::UnknownTask(_))));
    }
}
