//! TOML experiment configuration. Every table and key is optional; command
//! line flags override file values.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rlqite::dppo::TrainConfig;
use rlqite::env::{RewardMode, DEFAULT_EPISODE_LENGTH};
use rlqite::models::{build_sk, build_tfim, sample_sk, SkSpec, TfimSpec};
use rlqite::qite::{NormalizationPolicy, OrderingSchedule, QiteConfig};
use rlqite::{Hamiltonian, Statevector};

/// Raised for anything wrong with the configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub qite: QiteSection,
    pub schedule: ScheduleConfig,
    pub sweep: SweepConfig,
    pub train: TrainSection,
    pub scaling: ScalingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: false,
            out: PathBuf::from("results"),
            model: ModelConfig::default(),
            qite: QiteSection::default(),
            schedule: ScheduleConfig::default(),
            sweep: SweepConfig::default(),
            train: TrainSection::default(),
            scaling: ScalingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Tfim,
    Sk,
    Bandit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub num_qubits: usize,
    #[serde(rename = "J")]
    pub coupling: f64,
    #[serde(rename = "h")]
    pub field: f64,
    /// SK couplings: `"table3"`, a JSON file path, or `"random"`.
    pub couplings: String,
    /// Seed for `couplings = "random"`.
    pub couplings_seed: u64,
    /// Bandit target rows (0-based term indices).
    pub target: Vec<Vec<usize>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Tfim,
            num_qubits: 4,
            coupling: 1.0,
            field: 1.0,
            couplings: "table3".into(),
            couplings_seed: 0,
            target: vec![vec![2, 0, 1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QiteSection {
    pub beta: f64,
    pub num_trotter_steps: usize,
    pub domain_size: usize,
    pub regularization_cutoff: f64,
    pub normalization: NormalizationPolicy,
}

impl Default for QiteSection {
    fn default() -> Self {
        Self {
            beta: 0.9,
            num_trotter_steps: 4,
            domain_size: 2,
            regularization_cutoff: 1e-8,
            normalization: NormalizationPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Comma-separated subset of standard, randomized, replay, trained.
    pub scheme: String,
    /// `table2`, `table4` or a path to a label-grid JSON file.
    pub replay: Option<String>,
    pub randomized_seeds: Vec<u64>,
    /// Checkpoint directory or file for the `trained` scheme.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            scheme: "standard".into(),
            replay: None,
            randomized_seeds: (0..5).collect(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// `start:stop:step`, inclusive of `stop`.
    pub beta_grid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub episode_length: usize,
    pub reward_mode: RewardMode,
    pub num_evaluators: usize,
    pub episodes_per_evaluator: usize,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub update_steps: usize,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub hidden: Vec<usize>,
    /// Use the published 4×1024 body instead of `hidden`.
    pub paper_widths: bool,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            episode_length: DEFAULT_EPISODE_LENGTH,
            reward_mode: RewardMode::default(),
            num_evaluators: t.num_evaluators,
            episodes_per_evaluator: t.episodes_per_evaluator,
            clip_epsilon: t.clip_epsilon,
            gamma: t.gamma,
            update_steps: t.update_steps,
            entropy_coeff: t.entropy_coeff,
            value_coeff: t.value_coeff,
            learning_rate: t.learning_rate,
            iterations: t.iterations,
            hidden: t.hidden,
            paper_widths: false,
            checkpoint_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub gap_target: f64,
    /// Train an agent per size; otherwise the RL columns stay empty.
    pub train: bool,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: (2..=8).collect(),
            gap_target: 1e-3,
            train: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(format!("config: {e}")))
    }

    pub fn qite_config(&self) -> Result<QiteConfig> {
        self.qite_config_at(self.qite.beta)
    }

    pub fn qite_config_at(&self, beta: f64) -> Result<QiteConfig> {
        let q = &self.qite;
        let cfg = QiteConfig::new(beta, q.num_trotter_steps, q.domain_size)
            .map_err(|e| config_err(e.to_string()))?
            .with_cutoff(q.regularization_cutoff)
            .with_normalization(q.normalization);
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            num_evaluators: t.num_evaluators,
            episodes_per_evaluator: t.episodes_per_evaluator,
            clip_epsilon: t.clip_epsilon,
            gamma: t.gamma,
            update_steps: t.update_steps,
            entropy_coeff: t.entropy_coeff,
            value_coeff: t.value_coeff,
            learning_rate: t.learning_rate,
            iterations: t.iterations,
            seed: self.seed,
            hidden: if t.paper_widths {
                rlqite::dppo::PAPER_HIDDEN.to_vec()
            } else {
                t.hidden.clone()
            },
            parallel: true,
            deterministic: self.deterministic,
            checkpoint_every: t.checkpoint_every,
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    /// Hamiltonian for the configured model, with `num_qubits` overridden
    /// when given.
    pub fn hamiltonian(&self, num_qubits: Option<usize>) -> Result<Arc<Hamiltonian>> {
        let m = &self.model;
        let n = num_qubits.unwrap_or(m.num_qubits);
        let h = match m.kind {
            ModelKind::Tfim => {
                let spec = TfimSpec::new(n, m.coupling, m.field).map_err(|e| config_err(e.to_string()))?;
                build_tfim(&spec)?
            }
            ModelKind::Sk => {
                let spec = match m.couplings.as_str() {
                    "table3" => SkSpec::bundled_six_qubit(),
                    "random" => sample_sk(n, m.couplings_seed),
                    path => SkSpec::load(Path::new(path)).map_err(|e| config_err(format!("couplings {path}: {e}")))?,
                };
                if num_qubits.is_some_and(|k| k != spec.num_qubits) {
                    bail!(config_err(format!(
                        "couplings describe {} qubits, {n} requested",
                        spec.num_qubits
                    )));
                }
                build_sk(&spec).map_err(|e| config_err(e.to_string()))?
            }
            ModelKind::Bandit => bail!(config_err("the bandit model has no Hamiltonian")),
        };
        Ok(Arc::new(h))
    }

    pub fn bandit_target(&self) -> Result<OrderingSchedule> {
        let rows = &self.model.target;
        let m = rows.first().map_or(0, Vec::len);
        OrderingSchedule::new(m, rows.clone()).map_err(|e| config_err(format!("bandit target: {e}")))
    }

    pub fn initial_state(&self, num_qubits: usize) -> Result<Arc<Statevector>> {
        Ok(Arc::new(Statevector::plus_state(num_qubits)?))
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>> {
        let mut out = Vec::new();
        for s in self.schedule.scheme.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let scheme = match s {
                "standard" => Scheme::Standard,
                "randomized" => Scheme::Randomized,
                "replay" => Scheme::Replay,
                "trained" => Scheme::Trained,
                other => bail!(config_err(format!("unknown scheme {other:?}"))),
            };
            if !out.contains(&scheme) {
                out.push(scheme);
            }
        }
        if out.is_empty() {
            bail!(config_err("no scheme selected"));
        }
        if out.contains(&Scheme::Replay) && self.schedule.replay.is_none() {
            bail!(config_err("scheme replay needs --replay or schedule.replay"));
        }
        if out.contains(&Scheme::Trained) && self.schedule.checkpoint.is_none() {
            bail!(config_err("scheme trained needs --checkpoint or schedule.checkpoint"));
        }
        if out.contains(&Scheme::Randomized) && self.schedule.randomized_seeds.is_empty() {
            bail!(config_err("scheme randomized needs at least one seed"));
        }
        Ok(out)
    }

    pub fn betas(&self) -> Result<Vec<f64>> {
        match &self.sweep.beta_grid {
            Some(g) => parse_grid(g),
            None => Ok(vec![self.qite.beta]),
        }
    }

    /// SHA-256 over the canonical JSON of the resolved configuration.
    /// Hash of the canonical config. The output directory is excluded so the
    /// same experiment written to two places carries the same hash.
    pub fn manifest_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("out");
        }
        let canonical = value.to_string();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Standard,
    Randomized,
    Replay,
    Trained,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Standard => "standard",
            Scheme::Randomized => "randomized",
            Scheme::Replay => "replay",
            Scheme::Trained => "trained",
        }
    }
}

/// `start:stop:step` with `stop` included when it lands on the grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!(config_err(format!("beta grid {spec:?} is not start:stop:step")));
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| config_err(format!("beta grid {spec:?}: {e}")))?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(start >= 0.0) || !(stop >= start) || !stop.is_finite() {
        bail!(config_err(format!("beta grid {spec:?} needs 0 <= start <= stop and step > 0")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        bail!(config_err(format!("beta grid {spec:?} has {count} points")));
    }
    // Round to the step's precision so 0.1 + 0.2 prints as 0.3.
    Ok((0..count)
        .map(|i| {
            let b = start + i as f64 * step;
            (b * 1e12).round() / 1e12
        })
        .collect())
}

pub fn resolve_replay(name: &str) -> Result<rlqite::qite::PathTable> {
    use rlqite::qite::PathTable;
    if PathTable::bundled_names().contains(&name) {
        return Ok(PathTable::bundled(name)?);
    }
    PathTable::load(Path::new(name)).with_context(|| format!("replay schedule {name}"))
        .map_err(|e| config_err(format!("{e:#}")))
}
