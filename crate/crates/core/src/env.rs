//! Term-ordering MDP: the state is the current schedule, an action is a mask
//! of adjacent swaps (one bit per neighbouring pair in each Trotter step),
//! and the only reward arrives after the last step of an episode.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pauli::Hamiltonian;
use crate::qite::{run_qite, standard_schedule, OrderingSchedule, PathTable, QiteConfig};
use crate::state::Statevector;

pub const DEFAULT_EPISODE_LENGTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// `−1` if `E ≤ E_std`, otherwise `−1 / ln clip(E/E_std − 1, 0.01, 1.99)`.
    PaperLiteral,
    /// `(E_std − E) / |E_std|`, clipped to `[−2, 2]`.
    #[default]
    Shaped,
}

impl RewardMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardMode::PaperLiteral => "paper-literal",
            RewardMode::Shaped => "shaped",
        }
    }
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(RewardMode::PaperLiteral),
            "shaped" => Ok(RewardMode::Shaped),
            other => Err(Error::Parse(format!("unknown reward mode {other:?}"))),
        }
    }
}

/// `clip(f, c, d)` for `c ≤ d`.
pub fn clip(f: f64, c: f64, d: f64) -> f64 {
    debug_assert!(c <= d);
    if f > d {
        d
    } else if f < c {
        c
    } else {
        f
    }
}

/// Terminal reward for output energy `e` against the standard-path energy.
pub fn reward_fn(e: f64, e_std: f64, mode: RewardMode) -> f64 {
    debug_assert!(e_std != 0.0, "reward needs a nonzero reference energy");
    match mode {
        RewardMode::PaperLiteral => {
            if e <= e_std {
                -1.0
            } else {
                -1.0 / clip(e / e_std - 1.0, 0.01, 1.99).ln()
            }
        }
        RewardMode::Shaped => clip((e_std - e) / e_std.abs(), -2.0, 2.0),
    }
}

/// Slot values `index / (m − 1)`, Trotter step major.
pub fn encode_observation(schedule: &OrderingSchedule) -> Vec<f64> {
    let m = schedule.num_terms();
    let scale = if m > 1 { (m - 1) as f64 } else { 1.0 };
    schedule
        .orderings()
        .iter()
        .flat_map(|row| row.iter().map(move |&i| i as f64 / scale))
        .collect()
}

pub fn decode_observation(obs: &[f64], num_steps: usize, num_terms: usize) -> Result<OrderingSchedule> {
    if obs.len() != num_steps * num_terms {
        return Err(invalid(format!(
            "observation length {} != {num_steps}·{num_terms}",
            obs.len()
        )));
    }
    let scale = if num_terms > 1 { (num_terms - 1) as f64 } else { 1.0 };
    let rows = obs
        .chunks(num_terms.max(1))
        .map(|row| {
            row.iter()
                .map(|&x| {
                    if !(0.0..=1.0).contains(&x) {
                        return Err(invalid(format!("observation entry {x} outside [0, 1]")));
                    }
                    Ok((x * scale).round() as usize)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    OrderingSchedule::new(num_terms, rows)
}

/// Length of a swap mask for `n` steps of `m` terms.
pub fn mask_len(num_steps: usize, num_terms: usize) -> usize {
    num_steps * num_terms.saturating_sub(1)
}

/// Within each step, positions `0..m−1` are scanned left to right and a set
/// bit at `p` exchanges whatever currently sits at `p` and `p + 1`.
pub fn apply_swaps(schedule: &OrderingSchedule, mask: &[bool]) -> Result<OrderingSchedule> {
    let m = schedule.num_terms();
    let n = schedule.num_steps();
    if mask.len() != mask_len(n, m) {
        return Err(invalid(format!(
            "swap mask has {} bits, expected {}",
            mask.len(),
            mask_len(n, m)
        )));
    }
    let mut out = schedule.clone();
    for s in 0..n {
        for p in 0..m - 1 {
            if mask[s * (m - 1) + p] {
                out.swap_adjacent(s, p);
            }
        }
    }
    debug_assert!(out.is_valid());
    Ok(out)
}

/// Differing bits between two episodes' concatenated masks.
pub fn hamming_distance(a: &[Vec<bool>], b: &[Vec<bool>]) -> Result<usize> {
    let la: usize = a.iter().map(Vec::len).sum();
    let lb: usize = b.iter().map(Vec::len).sum();
    if la != lb {
        return Err(invalid(format!("protocol lengths differ: {la} vs {lb}")));
    }
    Ok(a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .filter(|(x, y)| x != y)
        .count())
}

/// What a trainer sees of an environment.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn episode_length(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, mask: &[bool]) -> Result<StepOutcome>;
    /// Schedule the environment currently holds.
    fn schedule(&self) -> &OrderingSchedule;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Figure of merit of the final schedule (lower is better); set on the
    /// terminal step only.
    pub energy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub qite: QiteConfig,
    pub hamiltonian: Arc<Hamiltonian>,
    pub initial_state: Arc<Statevector>,
    pub episode_length: usize,
    pub reward_mode: RewardMode,
    e_std: f64,
}

impl EnvConfig {
    /// Evaluates the standard path once and caches its energy.
    pub fn new(
        hamiltonian: Arc<Hamiltonian>,
        initial_state: Arc<Statevector>,
        qite: QiteConfig,
        episode_length: usize,
        reward_mode: RewardMode,
    ) -> Result<Self> {
        if episode_length < 1 {
            return Err(invalid("episode_length must be >= 1"));
        }
        if hamiltonian.num_terms() < 2 {
            return Err(invalid("ordering needs at least two terms"));
        }
        let standard = standard_schedule(&hamiltonian, qite.num_trotter_steps)?;
        let (state, _) = run_qite(&hamiltonian, &initial_state, &qite, &standard, None)?;
        let e_std = state.expectation(&hamiltonian)?;
        if e_std == 0.0 || !e_std.is_finite() {
            return Err(Error::DegenerateInput(format!(
                "standard-path energy {e_std} cannot serve as reward reference"
            )));
        }
        Ok(Self {
            qite,
            hamiltonian,
            initial_state,
            episode_length,
            reward_mode,
            e_std,
        })
    }

    pub fn e_std(&self) -> f64 {
        self.e_std
    }

    pub fn num_steps(&self) -> usize {
        self.qite.num_trotter_steps
    }

    pub fn num_terms(&self) -> usize {
        self.hamiltonian.num_terms()
    }

    /// Runs QITE along `schedule` and returns the final state.
    pub fn evaluate_state(&self, schedule: &OrderingSchedule) -> Result<Statevector> {
        Ok(run_qite(&self.hamiltonian, &self.initial_state, &self.qite, schedule, None)?.0)
    }

    pub fn evaluate(&self, schedule: &OrderingSchedule) -> Result<f64> {
        self.evaluate_state(schedule)?.expectation(&self.hamiltonian)
    }
}

/// One line of the JSON-lines episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: usize,
    pub observation_hash: String,
    pub mask: String,
    pub reward: f64,
    pub reward_mode: RewardMode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub e_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub schedule: Option<PathTable>,
}

pub fn write_episode_log<W: Write>(records: &[StepLog], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// FNV-1a over the IEEE bit patterns; stable across platforms and builds.
pub fn observation_hash(obs: &[f64]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for x in obs {
        for byte in x.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    format!("{h:016x}")
}

fn mask_string(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub struct OrderingEnv {
    cfg: EnvConfig,
    schedule: OrderingSchedule,
    t: usize,
    log: Vec<StepLog>,
    energy_cache: HashMap<OrderingSchedule, f64>,
}

impl OrderingEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        let schedule = standard_schedule(&cfg.hamiltonian, cfg.num_steps())?;
        Ok(Self {
            cfg,
            schedule,
            t: 0,
            log: Vec::new(),
            energy_cache: HashMap::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.episode_length
    }

    /// Log of the current (or just finished) episode.
    pub fn episode_log(&self) -> &[StepLog] {
        &self.log
    }

    /// Energy of `schedule`, memoized per instance.
    pub fn energy_of(&mut self, schedule: &OrderingSchedule) -> Result<f64> {
        if let Some(&e) = self.energy_cache.get(schedule) {
            return Ok(e);
        }
        let e = self.cfg.evaluate(schedule)?;
        self.energy_cache.insert(schedule.clone(), e);
        Ok(e)
    }
}

impl Environment for OrderingEnv {
    fn observation_dim(&self) -> usize {
        self.cfg.num_steps() * self.cfg.num_terms()
    }

    fn action_dim(&self) -> usize {
        mask_len(self.cfg.num_steps(), self.cfg.num_terms())
    }

    fn episode_length(&self) -> usize {
        self.cfg.episode_length
    }

    fn reset(&mut self) -> Vec<f64> {
        self.schedule = standard_schedule(&self.cfg.hamiltonian, self.cfg.num_steps())
            .expect("config validated at construction");
        self.t = 0;
        self.log.clear();
        encode_observation(&self.schedule)
    }

    fn step(&mut self, mask: &[bool]) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::InvalidState("step called on a finished episode".into()));
        }
        let obs_before = encode_observation(&self.schedule);
        self.schedule = apply_swaps(&self.schedule, mask)?;
        self.t += 1;
        let done = self.is_done();
        let mut record = StepLog {
            t: self.t,
            observation_hash: observation_hash(&obs_before),
            mask: mask_string(mask),
            reward: 0.0,
            reward_mode: self.cfg.reward_mode,
            energy: None,
            e_std: None,
            schedule: None,
        };
        let mut energy = None;
        if done {
            let schedule = self.schedule.clone();
            let e = self.energy_of(&schedule)?;
            record.reward = reward_fn(e, self.cfg.e_std, self.cfg.reward_mode);
            record.energy = Some(e);
            record.e_std = Some(self.cfg.e_std);
            record.schedule = Some(schedule.to_table(&self.cfg.hamiltonian)?);
            energy = Some(e);
        }
        let reward = record.reward;
        self.log.push(record);
        Ok(StepOutcome {
            observation: encode_observation(&self.schedule),
            reward,
            done,
            energy,
        })
    }

    fn schedule(&self) -> &OrderingSchedule {
        &self.schedule
    }
}

/// Pure ordering puzzle: reward 1 iff the final schedule equals `target`.
/// The reported energy is `1 − reward`.
#[derive(Debug, Clone)]
pub struct ToyBandit {
    target: OrderingSchedule,
    schedule: OrderingSchedule,
    episode_length: usize,
    t: usize,
}

impl ToyBandit {
    pub fn new(target: OrderingSchedule, episode_length: usize) -> Result<Self> {
        if episode_length < 1 {
            return Err(invalid("episode_length must be >= 1"));
        }
        let m = target.num_terms();
        if m < 2 {
            return Err(invalid("ordering needs at least two terms"));
        }
        let schedule = OrderingSchedule::new(m, vec![(0..m).collect(); target.num_steps()])?;
        Ok(Self {
            target,
            schedule,
            episode_length,
            t: 0,
        })
    }

    pub fn target(&self) -> &OrderingSchedule {
        &self.target
    }
}

impl Environment for ToyBandit {
    fn observation_dim(&self) -> usize {
        self.target.num_steps() * self.target.num_terms()
    }

    fn action_dim(&self) -> usize {
        mask_len(self.target.num_steps(), self.target.num_terms())
    }

    fn episode_length(&self) -> usize {
        self.episode_length
    }

    fn reset(&mut self) -> Vec<f64> {
        let m = self.target.num_terms();
        self.schedule = OrderingSchedule::new(m, vec![(0..m).collect(); self.target.num_steps()])
            .expect("identity rows are permutations");
        self.t = 0;
        encode_observation(&self.schedule)
    }

    fn step(&mut self, mask: &[bool]) -> Result<StepOutcome> {
        if self.t >= self.episode_length {
            return Err(Error::InvalidState("step called on a finished episode".into()));
        }
        self.schedule = apply_swaps(&self.schedule, mask)?;
        self.t += 1;
        let done = self.t >= self.episode_length;
        let (reward, energy) = if done {
            let r = if self.schedule == self.target { 1.0 } else { 0.0 };
            (r, Some(1.0 - r))
        } else {
            (0.0, None)
        };
        Ok(StepOutcome {
            observation: encode_observation(&self.schedule),
            reward,
            done,
            energy,
        })
    }

    fn schedule(&self) -> &OrderingSchedule {
        &self.schedule
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_tfim, TfimSpec};

    fn three_terms() -> OrderingSchedule {
        OrderingSchedule::new(3, vec![vec![0, 1, 2]]).unwrap()
    }

    #[test]
    fn swap_scan_order() {
        let s = three_terms();
        assert_eq!(apply_swaps(&s, &[false, false]).unwrap(), s);
        assert_eq!(apply_swaps(&s, &[true, false]).unwrap().row(0), [1, 0, 2]);
        assert_eq!(apply_swaps(&s, &[true, true]).unwrap().row(0), [1, 2, 0]);
        assert!(apply_swaps(&s, &[true]).is_err());
    }

    #[test]
    fn literal_reward_values() {
        assert_eq!(reward_fn(-4.0, -4.0, RewardMode::PaperLiteral), -1.0);
        assert_eq!(reward_fn(-5.0, -4.0, RewardMode::PaperLiteral), -1.0);
        // E/E_std − 1 < 0.01 is clipped up to 0.01.
        let r = reward_fn(-3.99, -4.0, RewardMode::PaperLiteral);
        assert!((r - 0.217_147_240_951_625_5).abs() < 1e-12);
        let hi = reward_fn(10.0, 2.0, RewardMode::PaperLiteral);
        assert!((hi + 1.0 / 1.99f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shaped_reward() {
        assert_eq!(reward_fn(-4.0, -4.0, RewardMode::Shaped), 0.0);
        assert!(reward_fn(-4.1, -4.0, RewardMode::Shaped) > 0.0);
        assert!(reward_fn(-3.9, -4.0, RewardMode::Shaped) < 0.0);
        assert_eq!(reward_fn(-40.0, -4.0, RewardMode::Shaped), 2.0);
    }

    #[test]
    fn clip_boundaries() {
        assert_eq!(clip(0.8, 0.8, 1.2), 0.8);
        assert_eq!(clip(1.2, 0.8, 1.2), 1.2);
        assert_eq!(clip(1.2000001, 0.8, 1.2), 1.2);
        assert_eq!(clip(0.7999999, 0.8, 1.2), 0.8);
        assert_eq!(clip(1.0, 0.8, 1.2), 1.0);
        assert_eq!(clip(5.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn hamming() {
        let a = vec![vec![true, false], vec![false, false]];
        let b = vec![vec![false, true], vec![true, true]];
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        assert_eq!(hamming_distance(&a, &b).unwrap(), 4);
        let c = vec![vec![true, false], vec![false, true]];
        assert_eq!(hamming_distance(&a, &c).unwrap(), 1);
        assert!(hamming_distance(&a, &[vec![true]]).is_err());
    }

    fn tfim_env(episode_length: usize) -> OrderingEnv {
        let h = Arc::new(build_tfim(&TfimSpec::new(3, 1.0, 1.0).unwrap()).unwrap());
        let init = Arc::new(Statevector::plus_state(3).unwrap());
        let qite = QiteConfig::new(0.6, 2, 2).unwrap();
        OrderingEnv::new(EnvConfig::new(h, init, qite, episode_length, RewardMode::Shaped).unwrap()).unwrap()
    }

    #[test]
    fn episode_reward_is_terminal_only() {
        let mut env = tfim_env(3);
        let obs = env.reset();
        assert_eq!(obs.len(), 10);
        let std = decode_observation(&obs, 2, 5).unwrap();
        assert_eq!(std, standard_schedule(&env.cfg.hamiltonian, 2).unwrap());
        let mask = vec![true; env.action_dim()];
        let a = env.step(&mask).unwrap();
        let b = env.step(&mask).unwrap();
        assert_eq!((a.reward, a.done, b.reward, b.done), (0.0, false, 0.0, false));
        let c = env.step(&mask).unwrap();
        assert!(c.done && c.energy.is_some());
        assert!(matches!(env.step(&mask), Err(Error::InvalidState(_))));
        assert_eq!(env.episode_log().len(), 3);
        assert!(env.episode_log()[2].schedule.is_some());
    }

    #[test]
    fn noop_episode_earns_standard_reward() {
        let mut env = tfim_env(1);
        env.reset();
        let out = env.step(&vec![false; env.action_dim()]).unwrap();
        assert!((out.energy.unwrap() - env.cfg.e_std()).abs() < 1e-14);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn episode_log_is_json_lines() {
        let mut env = tfim_env(2);
        env.reset();
        env.step(&vec![true; env.action_dim()]).unwrap();
        env.step(&vec![false; env.action_dim()]).unwrap();
        let mut buf = Vec::new();
        write_episode_log(env.episode_log(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<StepLog> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines, env.episode_log());
        assert!(text.contains("\"reward_mode\":\"shaped\""));
    }
}
