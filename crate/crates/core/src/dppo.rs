//! Distributed PPO: evaluators roll out episodes in parallel under a frozen
//! snapshot, a single learner applies clipped-surrogate updates.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{clip, Environment};
use crate::error::{invalid, Error, Result};
use crate::nn::{adam_step, AdamState, Checkpoint, MlpSpec, ParamSet, DEFAULT_LEARNING_RATE};
use crate::qite::OrderingSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub num_evaluators: usize,
    pub episodes_per_evaluator: usize,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub update_steps: usize,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Run evaluators on separate threads. Results do not depend on this.
    pub parallel: bool,
    /// Record zero wall time so output files are byte-reproducible.
    pub deterministic: bool,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
}

pub const PAPER_HIDDEN: [usize; 4] = [1024; 4];
pub const DESK_HIDDEN: [usize; 4] = [128; 4];

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_evaluators: 4,
            episodes_per_evaluator: 1,
            clip_epsilon: 0.2,
            gamma: 0.99,
            update_steps: 4,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            learning_rate: DEFAULT_LEARNING_RATE,
            iterations: 1000,
            seed: 0,
            hidden: DESK_HIDDEN.to_vec(),
            parallel: true,
            deterministic: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Values from the published hyper-parameter table.
    pub fn paper() -> Self {
        Self {
            num_evaluators: 12,
            iterations: 8000,
            hidden: PAPER_HIDDEN.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_evaluators < 1 || self.episodes_per_evaluator < 1 {
            return Err(invalid("need at least one evaluator and one episode each"));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(invalid(format!("clip_epsilon must be in (0, 1), got {}", self.clip_epsilon)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning_rate must be > 0"));
        }
        if self.num_evaluators > u16::MAX as usize {
            return Err(invalid("too many evaluators"));
        }
        Ok(())
    }
}

fn sigmoid(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^l)` without overflow.
fn softplus(l: f64) -> f64 {
    l.max(0.0) + (-l.abs()).exp().ln_1p()
}

/// Joint log-probability of `mask` under independent Bernoulli slots.
pub fn mask_log_prob(logits: &[f64], mask: &[bool]) -> f64 {
    logits
        .iter()
        .zip(mask)
        .map(|(&l, &a)| if a { l } else { 0.0 } - softplus(l))
        .sum()
}

/// Sum of per-slot Bernoulli entropies.
pub fn policy_entropy(logits: &[f64]) -> f64 {
    logits.iter().map(|&l| softplus(l) - l * sigmoid(l)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub mask: Vec<bool>,
    /// Behaviour-policy joint log-probability.
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub evaluator: usize,
    pub steps: Vec<Transition>,
    pub terminal: bool,
    pub final_energy: Option<f64>,
    pub final_schedule: OrderingSchedule,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn masks(&self) -> Vec<Vec<bool>> {
        self.steps.iter().map(|s| s.mask.clone()).collect()
    }
}

/// Sampling stream for one evaluator in one iteration.
pub fn evaluator_rng(seed: u64, iteration: u64, evaluator: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((iteration << 16) | evaluator as u64);
    rng
}

fn run_episode<E: Environment, R: Rng>(
    params: &ParamSet,
    env: &mut E,
    rng: &mut R,
    evaluator: usize,
) -> Result<Trajectory> {
    let mut obs = env.reset();
    let mut steps = Vec::with_capacity(env.episode_length());
    let final_energy;
    loop {
        let out = params.forward(&obs)?;
        let mask: Vec<bool> = out
            .logits
            .iter()
            .map(|&l| rng.gen::<f64>() < sigmoid(l))
            .collect();
        let log_prob = mask_log_prob(&out.logits, &mask);
        if !log_prob.is_finite() {
            return Err(Error::Numeric(format!("non-finite behaviour log-prob {log_prob}")));
        }
        let step = env.step(&mask)?;
        steps.push(Transition {
            observation: std::mem::replace(&mut obs, step.observation),
            mask,
            log_prob,
            value: out.value,
            reward: step.reward,
        });
        if step.done {
            final_energy = step.energy;
            break;
        }
    }
    Ok(Trajectory {
        evaluator,
        steps,
        terminal: true,
        final_energy,
        final_schedule: env.schedule().clone(),
    })
}

/// Each evaluator plays `episodes` complete episodes on its own environment
/// with its own RNG stream. Output is ordered by evaluator index, so
/// threaded and sequential collection agree exactly.
pub fn collect<E: Environment + Send>(
    params: &ParamSet,
    envs: &mut [E],
    episodes: usize,
    seed: u64,
    iteration: u64,
    parallel: bool,
) -> Result<Vec<Trajectory>> {
    if envs.is_empty() {
        return Err(invalid("need at least one evaluator"));
    }
    let work = |k: usize, env: &mut E| -> Result<Vec<Trajectory>> {
        let mut rng = evaluator_rng(seed, iteration, k);
        (0..episodes).map(|_| run_episode(params, env, &mut rng, k)).collect()
    };
    let per_eval: Vec<Result<Vec<Trajectory>>> = if parallel && envs.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = envs
                .iter_mut()
                .enumerate()
                .map(|(k, env)| s.spawn(move || work(k, env)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::InternalInconsistency("evaluator panicked".into()))))
                .collect()
        })
    } else {
        envs.iter_mut().enumerate().map(|(k, env)| work(k, env)).collect()
    };
    let mut out = Vec::with_capacity(envs.len() * episodes);
    for (k, r) in per_eval.into_iter().enumerate() {
        out.extend(r.map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("evaluator {k}: {m}")),
            other => other,
        })?);
    }
    Ok(out)
}

/// One flattened training tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observation: Vec<f64>,
    pub mask: Vec<bool>,
    pub old_log_prob: f64,
    pub old_value: f64,
    pub ret: f64,
    pub advantage: f64,
}

/// Discounted returns by backward recursion, advantages `G − V` normalized
/// over the whole batch (population std, floored at 1e-8).
pub fn compute_returns_advantages(trajs: &[Trajectory], gamma: f64) -> Result<Vec<Sample>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must be in [0, 1], got {gamma}")));
    }
    let mut out = Vec::new();
    for tr in trajs {
        let mut g = 0.0;
        let mut rets = vec![0.0; tr.steps.len()];
        for (t, s) in tr.steps.iter().enumerate().rev() {
            g = s.reward + gamma * g;
            rets[t] = g;
        }
        for (s, ret) in tr.steps.iter().zip(rets) {
            out.push(Sample {
                observation: s.observation.clone(),
                mask: s.mask.clone(),
                old_log_prob: s.log_prob,
                old_value: s.value,
                ret,
                advantage: ret - s.value,
            });
        }
    }
    if out.is_empty() {
        return Err(invalid("empty batch"));
    }
    normalize_advantages(&mut out);
    Ok(out)
}

pub fn normalize_advantages(samples: &mut [Sample]) {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for s in samples {
        s.advantage = (s.advantage - mean) / std;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of samples whose surrogate took the clipped branch.
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip_epsilon: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
}

impl From<&TrainConfig> for LossWeights {
    fn from(c: &TrainConfig) -> Self {
        Self {
            clip_epsilon: c.clip_epsilon,
            entropy_coeff: c.entropy_coeff,
            value_coeff: c.value_coeff,
        }
    }
}

/// Batch-mean loss `−min(rA, clip(r)A) + c_v·max((V−G)², (V_old + clip(V−V_old, ±ε) − G)²) − c_e·H`
/// and its parameter gradient.
pub fn ppo_loss(params: &ParamSet, batch: &[Sample], w: LossWeights) -> Result<(LossParts, ParamSet)> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let eps = w.clip_epsilon;
    let inv_n = 1.0 / batch.len() as f64;
    let mut grad = ParamSet::zeros(&params.spec)?;
    let mut parts = LossParts::default();
    let mut dlogits = Vec::new();
    for (i, s) in batch.iter().enumerate() {
        if !s.old_log_prob.is_finite() {
            return Err(Error::Numeric(format!("tuple {i}: non-finite behaviour log-prob")));
        }
        let (out, cache) = params.forward_cached(&s.observation)?;
        let log_prob = mask_log_prob(&out.logits, &s.mask);
        let ratio = (log_prob - s.old_log_prob).exp();
        if !ratio.is_finite() {
            return Err(Error::Numeric(format!(
                "tuple {i}: likelihood ratio is not finite (log-ratio {})",
                log_prob - s.old_log_prob
            )));
        }
        let a = s.advantage;
        let unclipped = ratio * a;
        let clipped = clip(ratio, 1.0 - eps, 1.0 + eps) * a;
        let (surr, dsurr_dlogp) = if unclipped <= clipped {
            (unclipped, ratio * a)
        } else {
            parts.clip_fraction += inv_n;
            (clipped, 0.0)
        };

        let v = out.value;
        let plain = (v - s.ret).powi(2);
        let delta = v - s.old_value;
        let v_clipped = s.old_value + clip(delta, -eps, eps);
        let boxed = (v_clipped - s.ret).powi(2);
        let (vloss, dv) = if plain >= boxed {
            (plain, 2.0 * (v - s.ret))
        } else if delta > -eps && delta < eps {
            (boxed, 2.0 * (v_clipped - s.ret))
        } else {
            (boxed, 0.0)
        };

        let entropy = policy_entropy(&out.logits);
        parts.surrogate += surr * inv_n;
        parts.value_loss += vloss * inv_n;
        parts.entropy += entropy * inv_n;

        dlogits.clear();
        dlogits.extend(out.logits.iter().zip(&s.mask).map(|(&l, &act)| {
            let p = sigmoid(l);
            let dlogp = if act { 1.0 } else { 0.0 } - p;
            let dent = -l * p * (1.0 - p);
            (-dsurr_dlogp * dlogp - w.entropy_coeff * dent) * inv_n
        }));
        params.backward_into(&cache, &dlogits, w.value_coeff * dv * inv_n, &mut grad)?;
    }
    parts.total = -parts.surrogate + w.value_coeff * parts.value_loss - w.entropy_coeff * parts.entropy;
    Ok((parts, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub iteration: usize,
    pub mean_reward: f64,
    pub best_energy: f64,
    pub wall_time_s: f64,
}

pub fn write_curve_csv<W: Write>(curve: &[CurveRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "mean_reward", "best_E", "wall_time_s"])?;
    for r in curve {
        w.write_record([
            r.iteration.to_string(),
            format!("{:.12}", r.mean_reward),
            format!("{:.12}", r.best_energy),
            format!("{:.3}", r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSchedule {
    pub energy: f64,
    pub iteration: usize,
    pub schedule: OrderingSchedule,
}

/// Everything needed to continue an interrupted run, besides the network
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub completed_iterations: usize,
    pub best: Option<BestSchedule>,
    pub curve: Vec<CurveRecord>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_STATE_FILE: &str = "train_state.json";

impl TrainState {
    pub fn save(&self, dir: &Path, checkpoint: &Checkpoint) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
        std::fs::write(dir.join(TRAIN_STATE_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, Checkpoint)> {
        let ck = Checkpoint::load(&dir.join(CHECKPOINT_FILE))?;
        let text = std::fs::read_to_string(dir.join(TRAIN_STATE_FILE))?;
        let st = serde_json::from_str(&text).map_err(|e| Error::Load(e.to_string()))?;
        Ok((st, ck))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub adam: AdamState,
    pub state: TrainState,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            adam: Some(self.adam.clone()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory for periodic and final checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from a previous run's checkpoint directory.
    pub resume_from: Option<PathBuf>,
}

/// Collect, compute advantages, take `update_steps` full-batch Adam steps,
/// repeat. `make_env(k)` builds evaluator `k`'s environment.
pub fn train<E, F>(cfg: &TrainConfig, make_env: F, opts: &TrainOptions) -> Result<TrainOutcome>
where
    E: Environment + Send,
    F: Fn(usize) -> Result<E>,
{
    cfg.validate()?;
    let mut envs = (0..cfg.num_evaluators).map(&make_env).collect::<Result<Vec<_>>>()?;
    let spec = MlpSpec::new(envs[0].observation_dim(), cfg.hidden.clone(), envs[0].action_dim())?;
    if envs
        .iter()
        .any(|e| e.observation_dim() != spec.input_dim || e.action_dim() != spec.policy_dim)
    {
        return Err(invalid("evaluator environments disagree on dimensions"));
    }

    let (mut params, mut adam, mut state) = match &opts.resume_from {
        Some(dir) => {
            let (st, ck) = TrainState::load(dir)?;
            if ck.params.spec != spec {
                return Err(Error::Load(format!(
                    "checkpoint network {:?} does not match environment {:?}",
                    ck.params.spec, spec
                )));
            }
            let adam = match ck.adam {
                Some(a) => a,
                None => AdamState::new(&spec, cfg.learning_rate)?,
            };
            (ck.params, adam, st)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (
                ParamSet::init(&spec, &mut rng)?,
                AdamState::new(&spec, cfg.learning_rate)?,
                TrainState {
                    completed_iterations: 0,
                    best: None,
                    curve: Vec::new(),
                },
            )
        }
    };
    adam.learning_rate = cfg.learning_rate;

    let started = Instant::now();
    let weights = LossWeights::from(cfg);
    for it in state.completed_iterations + 1..=cfg.iterations {
        let tag = |e: Error| match e {
            Error::Numeric(m) => Error::Numeric(format!("iteration {it}: {m}")),
            other => other,
        };
        let trajs = collect(
            &params,
            &mut envs,
            cfg.episodes_per_evaluator,
            cfg.seed,
            it as u64,
            cfg.parallel,
        )
        .map_err(tag)?;
        for tr in &trajs {
            if let Some(e) = tr.final_energy {
                if state.best.as_ref().map_or(true, |b| e < b.energy) {
                    state.best = Some(BestSchedule {
                        energy: e,
                        iteration: it,
                        schedule: tr.final_schedule.clone(),
                    });
                }
            }
        }
        let mean_reward = trajs.iter().map(Trajectory::total_reward).sum::<f64>() / trajs.len() as f64;
        let batch = compute_returns_advantages(&trajs, cfg.gamma)?;
        for _ in 0..cfg.update_steps {
            let (_, grad) = ppo_loss(&params, &batch, weights).map_err(tag)?;
            adam_step(&mut params, &grad, &mut adam).map_err(tag)?;
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("iteration {it}: parameters became non-finite")));
        }
        state.curve.push(CurveRecord {
            iteration: it,
            mean_reward,
            best_energy: state.best.as_ref().map_or(f64::NAN, |b| b.energy),
            wall_time_s: if cfg.deterministic {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            },
        });
        state.completed_iterations = it;
        if it % 100 == 0 {
            info!("iteration {it}: mean reward {mean_reward:.4}");
        }
        if let Some(dir) = &opts.checkpoint_dir {
            if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 {
                state.save(dir, &Checkpoint { params: params.clone(), adam: Some(adam.clone()) })?;
            }
        }
    }
    let outcome = TrainOutcome { params, adam, state };
    if let Some(dir) = &opts.checkpoint_dir {
        outcome.state.save(dir, &outcome.checkpoint())?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRollout {
    pub schedule: OrderingSchedule,
    pub energy: Option<f64>,
    pub masks: Vec<Vec<bool>>,
}

/// Deterministic episode: a slot swaps iff its probability is at least 0.5.
pub fn greedy_rollout<E: Environment>(params: &ParamSet, env: &mut E) -> Result<GreedyRollout> {
    let mut obs = env.reset();
    let mut masks = Vec::new();
    loop {
        let out = params.forward(&obs)?;
        let mask: Vec<bool> = out.logits.iter().map(|&l| sigmoid(l) >= 0.5).collect();
        let step = env.step(&mask)?;
        masks.push(mask);
        obs = step.observation;
        if step.done {
            return Ok(GreedyRollout {
                schedule: env.schedule().clone(),
                energy: step.energy,
                masks,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ToyBandit;

    fn toy_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            num_evaluators: 2,
            iterations: 5,
            hidden: vec![16, 16],
            seed,
            ..TrainConfig::default()
        }
    }

    fn bandit(_: usize) -> Result<ToyBandit> {
        ToyBandit::new(OrderingSchedule::new(3, vec![vec![2, 0, 1]])?, 2)
    }

    #[test]
    fn log_prob_and_entropy() {
        let logits = [0.0, 2.0, -1.0];
        let p: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let mask = [true, false, true];
        let expect = p[0].ln() + (1.0 - p[1]).ln() + p[2].ln();
        assert!((mask_log_prob(&logits, &mask) - expect).abs() < 1e-14);
        let h: f64 = p.iter().map(|&q| -q * q.ln() - (1.0 - q) * (1.0 - q).ln()).sum();
        assert!((policy_entropy(&logits) - h).abs() < 1e-14);
        assert!(mask_log_prob(&[800.0, -800.0], &[true, false]).is_finite());
    }

    fn traj(rewards: &[f64], values: &[f64]) -> Trajectory {
        Trajectory {
            evaluator: 0,
            steps: rewards
                .iter()
                .zip(values)
                .map(|(&r, &v)| Transition {
                    observation: vec![0.0],
                    mask: vec![false],
                    log_prob: -0.7,
                    value: v,
                    reward: r,
                })
                .collect(),
            terminal: true,
            final_energy: None,
            final_schedule: OrderingSchedule::new(2, vec![vec![0, 1]]).unwrap(),
        }
    }

    #[test]
    fn discounted_returns() {
        let t = traj(&[0.0, 0.0, 0.0, 2.0], &[0.0; 4]);
        let mut s = compute_returns_advantages(&[t.clone()], 0.5).unwrap();
        let rets: Vec<f64> = s.iter().map(|x| x.ret).collect();
        assert_eq!(rets, vec![0.25, 0.5, 1.0, 2.0]);
        s = compute_returns_advantages(&[t], 0.0).unwrap();
        assert_eq!(s.iter().map(|x| x.ret).collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 2.0]);
        assert!(compute_returns_advantages(&[], 0.9).is_err());
        assert!(compute_returns_advantages(&[traj(&[1.0], &[0.0])], 1.5).is_err());
    }

    #[test]
    fn constant_advantages_normalize_to_zero() {
        let s = compute_returns_advantages(&[traj(&[1.0, 1.0], &[0.0, 0.0])], 0.0).unwrap();
        assert!(s.iter().all(|x| x.advantage == 0.0));
    }

    #[test]
    fn identity_ratio_surrogate_vanishes() {
        let spec = MlpSpec::new(1, vec![4], 1).unwrap();
        let p = ParamSet::init(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut trajs = vec![traj(&[0.0, 1.0], &[0.0, 0.0]), traj(&[0.0, -1.0], &[0.0, 0.0])];
        for t in &mut trajs {
            for s in &mut t.steps {
                let out = p.forward(&s.observation).unwrap();
                s.log_prob = mask_log_prob(&out.logits, &s.mask);
                s.value = out.value;
            }
        }
        let batch = compute_returns_advantages(&trajs, 0.9).unwrap();
        let w = LossWeights {
            clip_epsilon: 0.2,
            entropy_coeff: 0.0,
            value_coeff: 0.0,
        };
        let (parts, _) = ppo_loss(&p, &batch, w).unwrap();
        assert!(parts.surrogate.abs() < 1e-12);
        assert_eq!(parts.clip_fraction, 0.0);
    }

    #[test]
    fn saturated_clip_has_no_policy_gradient() {
        let spec = MlpSpec::new(1, vec![], 1).unwrap();
        let p = ParamSet::zeros(&spec).unwrap();
        // r = 0.5/0.25 = 2 > 1.2 with A > 0.
        let batch = vec![Sample {
            observation: vec![1.0],
            mask: vec![true],
            old_log_prob: 0.25f64.ln(),
            old_value: 0.0,
            ret: 0.0,
            advantage: 1.0,
        }];
        let w = LossWeights {
            clip_epsilon: 0.2,
            entropy_coeff: 0.0,
            value_coeff: 0.0,
        };
        let (parts, grad) = ppo_loss(&p, &batch, w).unwrap();
        assert!((parts.surrogate - 1.2).abs() < 1e-12);
        assert_eq!(parts.clip_fraction, 1.0);
        assert!(grad.flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_finite_ratio_names_tuple() {
        let spec = MlpSpec::new(1, vec![], 1).unwrap();
        let p = ParamSet::zeros(&spec).unwrap();
        let mut s = Sample {
            observation: vec![1.0],
            mask: vec![true],
            old_log_prob: -0.5,
            old_value: 0.0,
            ret: 0.0,
            advantage: 1.0,
        };
        let mut batch = vec![s.clone()];
        s.old_log_prob = -1e6;
        batch.push(s);
        let err = ppo_loss(&p, &batch, LossWeights::from(&TrainConfig::default())).unwrap_err();
        assert!(err.to_string().contains("tuple 1"), "{err}");
    }

    #[test]
    fn collection_is_reproducible_and_thread_independent() {
        let spec = MlpSpec::new(3, vec![8], 2).unwrap();
        let p = ParamSet::init(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut a: Vec<_> = (0..3).map(|k| bandit(k).unwrap()).collect();
        let mut b = a.clone();
        let par = collect(&p, &mut a, 2, 7, 3, true).unwrap();
        let seq = collect(&p, &mut b, 2, 7, 3, false).unwrap();
        assert_eq!(par, seq);
        assert_eq!(par.len(), 6);
        assert!(par.iter().all(|t| t.steps.len() == 2));
        let again = collect(&p, &mut a, 2, 7, 3, true).unwrap();
        assert_eq!(par, again);
    }

    #[test]
    fn training_is_deterministic() {
        let mut cfg = toy_cfg(3);
        cfg.deterministic = true;
        let a = train(&cfg, bandit, &TrainOptions::default()).unwrap();
        let b = train(&cfg, bandit, &TrainOptions::default()).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_cfg(4);
        cfg.deterministic = true;
        cfg.iterations = 6;
        let full = train(&cfg, bandit, &TrainOptions::default()).unwrap();
        let mut half = cfg.clone();
        half.iterations = 3;
        let opts = TrainOptions {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            resume_from: None,
        };
        train(&half, bandit, &opts).unwrap();
        let resumed = train(
            &cfg,
            bandit,
            &TrainOptions {
                checkpoint_dir: None,
                resume_from: Some(dir.path().to_path_buf()),
            },
        )
        .unwrap();
        assert_eq!(resumed.state, full.state);
        assert_eq!(resumed.params, full.params);
    }

    #[test]
    fn greedy_tie_rule_swaps() {
        let spec = MlpSpec::new(3, vec![4], 2).unwrap();
        let p = ParamSet::zeros(&spec).unwrap();
        let mut env = bandit(0).unwrap();
        let r = greedy_rollout(&p, &mut env).unwrap();
        assert_eq!(r.masks, vec![vec![true, true]; 2]);
        assert!(r.schedule.is_valid());
    }

    #[test]
    fn curve_csv_header() {
        let mut buf = Vec::new();
        write_curve_csv(
            &[CurveRecord {
                iteration: 1,
                mean_reward: 0.5,
                best_energy: -1.0,
                wall_time_s: 0.0,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,mean_reward,best_E,wall_time_s\n1,"));
    }
}
