use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde_json::json;

use rlqite::dppo::{greedy_rollout, train, write_curve_csv, TrainOptions, TrainOutcome, CHECKPOINT_FILE};
use rlqite::env::{hamming_distance, EnvConfig, Environment, OrderingEnv, ToyBandit};
use rlqite::models::{adaptive_beta, ground_probability, ground_solution, GroundSolution, DEFAULT_DEGENERACY_TOL};
use rlqite::nn::Checkpoint;
use rlqite::qite::{
    randomized_schedule, replay_schedule, run_qite, standard_schedule, OrderingSchedule, PathTable, QiteConfig,
    TraceTracker,
};
use rlqite::{Hamiltonian, Statevector};

use crate::config::{config_err, resolve_replay, ExperimentConfig, ModelKind, Scheme};
use crate::output::{beta_tag, fmt_f, fmt_opt, OutDir};

/// Ordered parallel map over a small work list.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len()).max(1);
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<R>>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break;
                        }
                        done.push((i, f(&items[i])));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every item visited")).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
    Checkpoint::load(&file).map_err(|e| config_err(format!("checkpoint {}: {e}", file.display())))
}

fn env_config(cfg: &ExperimentConfig, h: &Arc<Hamiltonian>, init: &Arc<Statevector>, qite: QiteConfig) -> Result<EnvConfig> {
    Ok(EnvConfig::new(
        h.clone(),
        init.clone(),
        qite,
        cfg.train.episode_length,
        cfg.train.reward_mode,
    )?)
}

/// Greedy protocol of `ck` on `env`; dimension mismatches are config errors.
fn greedy<E: Environment>(ck: &Checkpoint, env: &mut E, name: &str) -> Result<rlqite::dppo::GreedyRollout> {
    let spec = &ck.params.spec;
    if spec.input_dim != env.observation_dim() || spec.policy_dim != env.action_dim() {
        bail!(config_err(format!(
            "checkpoint {name} expects {} inputs / {} outputs, environment has {} / {}",
            spec.input_dim,
            spec.policy_dim,
            env.observation_dim(),
            env.action_dim()
        )));
    }
    Ok(greedy_rollout(&ck.params, env)?)
}

struct RunJob {
    beta: f64,
    scheme: Scheme,
    seed: Option<u64>,
}

struct RunRow {
    beta: f64,
    scheme: Scheme,
    seed: Option<u64>,
    energy: f64,
    fidelity: f64,
    p_gs: Option<f64>,
    alg_error: Option<f64>,
    continued: usize,
    trace: rlqite::qite::QiteTrace,
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.model.kind == ModelKind::Bandit {
        bail!(config_err("run needs a Hamiltonian model"));
    }
    let h = cfg.hamiltonian(None)?;
    let n = h.num_qubits();
    let init = cfg.initial_state(n)?;
    let gs = ground_solution(&h, DEFAULT_DEGENERACY_TOL)?;
    let schemes = cfg.schemes()?;
    let betas = cfg.betas()?;
    let steps = cfg.qite.num_trotter_steps;
    cfg.qite_config()?;

    let replay = match (&cfg.schedule.replay, schemes.contains(&Scheme::Replay)) {
        (Some(name), true) => {
            let table = resolve_replay(name)?;
            let s = replay_schedule(&table, &h).map_err(|e| config_err(format!("replay {name}: {e}")))?;
            if s.num_steps() != steps {
                bail!(config_err(format!(
                    "replay {name} has {} Trotter steps, config has {steps}",
                    s.num_steps()
                )));
            }
            Some(s)
        }
        _ => None,
    };
    let trained = match (&cfg.schedule.checkpoint, schemes.contains(&Scheme::Trained)) {
        (Some(p), true) => Some(load_checkpoint(p)?),
        _ => None,
    };

    let tracker = TraceTracker::new(&h, &init)?;
    let mut jobs = Vec::new();
    for &beta in &betas {
        for &scheme in &schemes {
            if scheme == Scheme::Randomized {
                for &seed in &cfg.schedule.randomized_seeds {
                    jobs.push(RunJob { beta, scheme, seed: Some(seed) });
                }
            } else {
                jobs.push(RunJob { beta, scheme, seed: None });
            }
        }
    }
    let diagonal = h.is_diagonal();
    let rows = par_map(&jobs, |job| {
        let qite = cfg.qite_config_at(job.beta)?;
        let schedule = match job.scheme {
            Scheme::Standard => standard_schedule(&h, steps)?,
            Scheme::Randomized => randomized_schedule(&h, steps, job.seed.expect("seeded"))?,
            Scheme::Replay => replay.clone().expect("resolved above"),
            Scheme::Trained => {
                let mut env = OrderingEnv::new(env_config(cfg, &h, &init, qite)?)?;
                greedy(trained.as_ref().expect("loaded above"), &mut env, "trained")?.schedule
            }
        };
        let (state, trace) = run_qite(&h, &init, &qite, &schedule, Some(&tracker))
            .map_err(anyhow::Error::from)
            .with_context(|| format!("beta = {}, scheme {}", job.beta, job.scheme.name()))?;
        Ok(RunRow {
            beta: job.beta,
            scheme: job.scheme,
            seed: job.seed,
            energy: state.expectation(&h)?,
            fidelity: gs.fidelity(&state)?,
            p_gs: if diagonal { Some(ground_probability(&state, &gs)?) } else { None },
            alg_error: trace.final_alg_error(),
            continued: trace.continued_steps(),
            trace,
        })
    })?;

    let mut out = OutDir::create(cfg)?;
    let mut table = Vec::new();
    for r in &rows {
        let tag = match r.seed {
            Some(s) => format!("{}_s{s}", r.scheme.name()),
            None => r.scheme.name().to_string(),
        };
        let rel = format!("traces/{tag}_beta{}.csv", beta_tag(r.beta));
        let w = out.csv_writer(&rel)?;
        r.trace.write_csv(w)?;
        table.push(vec![
            fmt_f(r.beta),
            r.scheme.name().into(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            fmt_f(r.energy),
            fmt_f(r.fidelity),
            fmt_opt(r.p_gs),
            fmt_opt(r.alg_error),
            r.continued.to_string(),
        ]);
    }
    for &beta in &betas {
        let fam: Vec<&RunRow> = rows
            .iter()
            .filter(|r| r.beta == beta && r.scheme == Scheme::Randomized)
            .collect();
        if fam.is_empty() {
            continue;
        }
        let med = |f: &dyn Fn(&RunRow) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = fam.iter().map(|r| f(r)).collect();
            v.map(median)
        };
        table.push(vec![
            fmt_f(beta),
            "randomized".into(),
            "median".into(),
            fmt_opt(med(&|r| Some(r.energy))),
            fmt_opt(med(&|r| Some(r.fidelity))),
            fmt_opt(med(&|r| r.p_gs)),
            fmt_opt(med(&|r| r.alg_error)),
            String::new(),
        ]);
    }
    out.write_csv(
        "results.csv",
        &["beta", "scheme", "seed", "energy", "fidelity", "p_gs", "alg_error", "continued_steps"],
        &table,
    )?;
    for r in &rows {
        let seed = r.seed.map(|s| format!(" seed {s}")).unwrap_or_default();
        println!(
            "beta {:.4} {}{seed}: E = {:.6}  F = {:.6}{}{}",
            r.beta,
            r.scheme.name(),
            r.energy,
            r.fidelity,
            r.p_gs.map(|p| format!("  P_gs = {p:.6}")).unwrap_or_default(),
            r.alg_error.map(|e| format!("  eps_alg = {e:.6}")).unwrap_or_default(),
        );
    }
    out.finish(
        cfg,
        "run",
        json!({
            "ground_energy": gs.energy,
            "ground_degeneracy": gs.degeneracy,
            "num_qubits": n,
        }),
    )
}

fn write_train_outputs(out: &mut OutDir, outcome: &TrainOutcome) -> Result<()> {
    let w = out.csv_writer("learning_curve.csv")?;
    write_curve_csv(&outcome.state.curve, w)?;
    out.record(CHECKPOINT_FILE);
    out.record(rlqite::dppo::TRAIN_STATE_FILE);
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    let tcfg = cfg.train_config()?;
    let mut out = OutDir::create(cfg)?;
    let opts = TrainOptions {
        checkpoint_dir: Some(out.root.clone()),
        resume_from: if resume { Some(out.root.clone()) } else { None },
    };
    if resume && !out.path(CHECKPOINT_FILE).exists() {
        bail!(config_err(format!("nothing to resume in {}", out.root.display())));
    }

    if cfg.model.kind == ModelKind::Bandit {
        let target = cfg.bandit_target()?;
        let len = cfg.train.episode_length;
        let outcome = train(&tcfg, |_| ToyBandit::new(target.clone(), len), &opts)?;
        write_train_outputs(&mut out, &outcome)?;
        let mut env = ToyBandit::new(target.clone(), len)?;
        let g = greedy_rollout(&outcome.params, &mut env)?;
        let reached = g.schedule == target;
        println!("greedy schedule {:?}, target reached: {reached}", g.schedule.orderings());
        out.write_json("best_schedule.json", &outcome.state.best.as_ref().map(|b| &b.schedule))?;
        return out.finish(
            cfg,
            "train",
            json!({
                "final_mean_reward": outcome.state.curve.last().map(|r| r.mean_reward),
                "greedy_schedule": g.schedule.orderings(),
                "greedy_reached_target": reached,
            }),
        );
    }

    let h = cfg.hamiltonian(None)?;
    let init = cfg.initial_state(h.num_qubits())?;
    let env_cfg = env_config(cfg, &h, &init, cfg.qite_config()?)?;
    let gs = ground_solution(&h, DEFAULT_DEGENERACY_TOL)?;
    let outcome = train(&tcfg, |_| OrderingEnv::new(env_cfg.clone()), &opts)?;
    write_train_outputs(&mut out, &outcome)?;

    let std_state = env_cfg.evaluate_state(&standard_schedule(&h, cfg.qite.num_trotter_steps)?)?;
    let mut env = OrderingEnv::new(env_cfg.clone())?;
    let g = greedy_rollout(&outcome.params, &mut env)?;
    let greedy_state = env_cfg.evaluate_state(&g.schedule)?;
    let best = outcome
        .state
        .best
        .as_ref()
        .ok_or_else(|| anyhow!("training produced no terminal episode"))?;
    let best_state = env_cfg.evaluate_state(&best.schedule)?;
    best.schedule.to_table(&h)?.save(&out.path("best_schedule.json"))?;
    out.record("best_schedule.json");
    g.schedule.to_table(&h)?.save(&out.path("greedy_schedule.json"))?;
    out.record("greedy_schedule.json");
    let masks: Vec<String> = g
        .masks
        .iter()
        .map(|m| m.iter().map(|&b| if b { '1' } else { '0' }).collect())
        .collect();
    out.write_json("greedy_protocol.json", &json!({ "masks": masks, "energy": g.energy }))?;

    let summary = json!({
        "ground_energy": gs.energy,
        "e_std": env_cfg.e_std(),
        "f_std": gs.fidelity(&std_state)?,
        "best_energy": best.energy,
        "best_fidelity": gs.fidelity(&best_state)?,
        "best_iteration": best.iteration,
        "greedy_energy": g.energy,
        "greedy_fidelity": gs.fidelity(&greedy_state)?,
    });
    println!(
        "E_std = {:.6}  best E = {:.6} (iteration {})  greedy E = {:.6}",
        env_cfg.e_std(),
        best.energy,
        best.iteration,
        g.energy.unwrap_or(f64::NAN)
    );
    out.finish(cfg, "train", summary)
}

struct ScalingRow {
    n: usize,
    beta: f64,
    e_std: f64,
    f_std: f64,
    e_rand: f64,
    f_rand: f64,
    rl: Option<(f64, f64)>,
}

fn energy_fidelity(
    h: &Hamiltonian,
    init: &Statevector,
    qite: &QiteConfig,
    s: &OrderingSchedule,
    gs: &GroundSolution,
) -> Result<(f64, f64)> {
    let (state, _) = run_qite(h, init, qite, s, None)?;
    Ok((state.expectation(h)?, gs.fidelity(&state)?))
}

pub fn cmd_scaling(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.model.kind != ModelKind::Tfim {
        bail!(config_err("scaling supports model.kind = \"tfim\" only"));
    }
    if cfg.scaling.sizes.is_empty() {
        bail!(config_err("scaling.sizes is empty"));
    }
    let tcfg = cfg.train_config()?;
    cfg.qite_config()?;
    let rows = par_map(&cfg.scaling.sizes, |&n| {
        let h = cfg.hamiltonian(Some(n))?;
        let init = cfg.initial_state(n)?;
        let gs = ground_solution(&h, DEFAULT_DEGENERACY_TOL)?;
        let beta = adaptive_beta(&h, &init, cfg.scaling.gap_target).with_context(|| format!("N = {n}"))?;
        let qite = cfg.qite_config_at(beta)?;
        let steps = qite.num_trotter_steps;
        let (e_std, f_std) = energy_fidelity(&h, &init, &qite, &standard_schedule(&h, steps)?, &gs)
            .with_context(|| format!("N = {n}, beta = {beta}, standard"))?;
        let mut es = Vec::new();
        let mut fs = Vec::new();
        for &seed in &cfg.schedule.randomized_seeds {
            let (e, f) = energy_fidelity(&h, &init, &qite, &randomized_schedule(&h, steps, seed)?, &gs)?;
            es.push(e);
            fs.push(f);
        }
        let rl = if cfg.scaling.train {
            let env_cfg = env_config(cfg, &h, &init, qite)?;
            let mut t = tcfg.clone();
            t.parallel = false;
            let outcome = train(&t, |_| OrderingEnv::new(env_cfg.clone()), &TrainOptions::default())
                .with_context(|| format!("training at N = {n}"))?;
            let best = outcome.state.best.expect("episodes always terminate");
            let f = gs.fidelity(&env_cfg.evaluate_state(&best.schedule)?)?;
            info!("N = {n}: E_std {e_std:.6}, E_RL {:.6}", best.energy);
            Some((best.energy, f))
        } else {
            None
        };
        Ok(ScalingRow {
            n,
            beta,
            e_std,
            f_std,
            e_rand: if es.is_empty() { f64::NAN } else { median(es) },
            f_rand: if fs.is_empty() { f64::NAN } else { median(fs) },
            rl,
        })
    })?;
    let mut out = OutDir::create(cfg)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt_f(r.beta),
                fmt_f(r.e_std),
                fmt_opt(r.rl.map(|x| x.0)),
                fmt_opt(r.rl.map(|x| x.0 / r.e_std)),
                fmt_f(r.f_std),
                fmt_opt(r.rl.map(|x| x.1)),
                fmt_f(r.e_rand),
                fmt_f(r.f_rand),
            ]
        })
        .collect();
    out.write_csv(
        "scaling.csv",
        &["N", "beta", "E_std", "E_RL", "E_RL/E_std", "F_std", "F_RL", "E_rand", "F_rand"],
        &table,
    )?;
    for r in &rows {
        println!("N = {}: beta = {:.4}  E_std = {:.6}  F_std = {:.6}", r.n, r.beta, r.e_std, r.f_std);
    }
    out.finish(cfg, "scaling", json!({}))
}

pub fn cmd_hamming(cfg: &ExperimentConfig, checkpoints: &[PathBuf]) -> Result<()> {
    if checkpoints.len() < 2 {
        bail!(config_err("hamming needs at least two checkpoints"));
    }
    let mut protocols = Vec::new();
    for p in checkpoints {
        let ck = load_checkpoint(p)?;
        let name = p.display().to_string();
        let g = if cfg.model.kind == ModelKind::Bandit {
            let mut env = ToyBandit::new(cfg.bandit_target()?, cfg.train.episode_length)?;
            greedy(&ck, &mut env, &name)?
        } else {
            let h = cfg.hamiltonian(None)?;
            let init = cfg.initial_state(h.num_qubits())?;
            let mut env = OrderingEnv::new(env_config(cfg, &h, &init, cfg.qite_config()?)?)?;
            greedy(&ck, &mut env, &name)?
        };
        protocols.push(g.masks);
    }
    let k = protocols.len();
    let mut matrix = vec![vec![0usize; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = hamming_distance(&protocols[i], &protocols[j]).map_err(|e| config_err(e.to_string()))?;
            matrix[i][j] = d;
            matrix[j][i] = d;
        }
    }
    let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
    let mut header = vec!["checkpoint"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = vec![names[i].clone()];
            r.extend(row.iter().map(|d| d.to_string()));
            r
        })
        .collect();
    let mut out = OutDir::create(cfg)?;
    out.write_csv("hamming.csv", &header, &rows)?;
    for r in &rows {
        println!("{}", r.join(" "));
    }
    let sources: Vec<String> = checkpoints.iter().map(|p| p.display().to_string()).collect();
    out.finish(cfg, "hamming", json!({ "checkpoints": sources }))
}

pub fn cmd_replay_list() -> Result<()> {
    for name in PathTable::bundled_names() {
        let t = PathTable::bundled(name)?;
        let cols = t.0.first().map_or(0, Vec::len);
        println!("{name}: {} steps x {cols} terms, first step {}", t.0.len(), t.0[0].join(" "));
    }
    Ok(())
}
