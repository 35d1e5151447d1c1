use std::io::Write;

use serde::Serialize;

use super::step::{choose_domain, local_approximation_step};
use super::{OrderingSchedule, QiteConfig};
use crate::error::{invalid, Error, Result};
use crate::pauli::Hamiltonian;
use crate::state::{ImaginaryTimeOracle, Statevector};

/// Exact imaginary-time reference for the algorithmic error.
///
/// After the k-th local operation of a run with `m` terms per step, the
/// reference is `e^{−τ_k H}|init⟩` normalized, `τ_k = k·Δτ/m`.
#[derive(Debug, Clone)]
pub struct TraceTracker {
    oracle: ImaginaryTimeOracle,
}

impl TraceTracker {
    pub fn new(h: &Hamiltonian, init: &Statevector) -> Result<Self> {
        Ok(Self {
            oracle: ImaginaryTimeOracle::new(h, init)?,
        })
    }

    pub fn oracle(&self) -> &ImaginaryTimeOracle {
        &self.oracle
    }

    /// `(ε_alg, fidelity)` of `state` against the reference at `tau`.
    /// `state` is phase-aligned to the reference before the distance is taken.
    pub fn compare(&self, state: &Statevector, tau: f64) -> Result<(f64, f64)> {
        let target = self.oracle.state_at(tau)?;
        let aligned = state.phase_aligned_to(&target)?;
        Ok((aligned.distance_sqr(&target)?, target.fidelity(state)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QiteRecord {
    /// 1-based index of the local operation.
    pub k: usize,
    /// 0-based Trotter step.
    pub step: usize,
    pub term_index: usize,
    pub term_label: String,
    pub energy: f64,
    pub alg_error: Option<f64>,
    pub fidelity: Option<f64>,
    /// Normalization estimate was non-positive and continued into ℂ.
    pub continued: bool,
    /// Linear system fell entirely below the cutoff.
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QiteTrace {
    pub records: Vec<QiteRecord>,
}

impl QiteTrace {
    pub fn final_alg_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.alg_error)
    }

    pub fn final_energy(&self) -> Option<f64> {
        self.records.last().map(|r| r.energy)
    }

    pub fn continued_steps(&self) -> usize {
        self.records.iter().filter(|r| r.continued).count()
    }

    pub fn truncated_steps(&self) -> usize {
        self.records.iter().filter(|r| r.truncated).count()
    }

    /// CSV with header `k,term_label,energy,alg_error,fidelity`; untracked
    /// columns are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "term_label", "energy", "alg_error", "fidelity"])?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.term_label.clone(),
                format!("{:.12}", r.energy),
                r.alg_error.map(|v| format!("{v:.12}")).unwrap_or_default(),
                r.fidelity.map(|v| format!("{v:.12}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs Trotterized QITE along `schedule`, replacing each factor with its
/// local unitary approximation. With `beta = 0` every step is the identity.
pub fn run_qite(
    h: &Hamiltonian,
    init: &Statevector,
    cfg: &QiteConfig,
    schedule: &OrderingSchedule,
    tracker: Option<&TraceTracker>,
) -> Result<(Statevector, QiteTrace)> {
    cfg.validate()?;
    if schedule.num_steps() != cfg.num_trotter_steps {
        return Err(invalid(format!(
            "schedule has {} rows, config expects {}",
            schedule.num_steps(),
            cfg.num_trotter_steps
        )));
    }
    let m = h.num_terms();
    if schedule.num_terms() != m {
        return Err(invalid(format!(
            "schedule permutes {} terms, hamiltonian has {m}",
            schedule.num_terms()
        )));
    }
    if init.num_qubits() != h.num_qubits() {
        return Err(invalid("initial state and hamiltonian sizes differ"));
    }
    let n_qubits = h.num_qubits();
    let domains = h
        .terms()
        .iter()
        .map(|t| choose_domain(t, cfg.domain_size, n_qubits))
        .collect::<Result<Vec<_>>>()?;
    let labels = h.labels();
    let dt = cfg.dt();

    let mut state = init.clone();
    let mut trace = QiteTrace {
        records: Vec::with_capacity(schedule.num_steps() * m),
    };
    let mut k = 0;
    for (step, row) in schedule.orderings().iter().enumerate() {
        for &j in row {
            k += 1;
            let mut continued = false;
            let mut truncated = false;
            if dt > 0.0 {
                let out = local_approximation_step(
                    &state,
                    &h.terms()[j],
                    &domains[j],
                    dt,
                    cfg.regularization_cutoff,
                    cfg.normalization,
                )
                .map_err(|e| Error::AtStep {
                    k,
                    label: labels[j].clone(),
                    source: Box::new(e),
                })?;
                continued = out.continued;
                truncated = out.truncated();
                state = out.state;
            }
            let (alg_error, fidelity) = match tracker {
                Some(t) => {
                    let (e, f) = t.compare(&state, k as f64 * dt / m as f64)?;
                    (Some(e), Some(f))
                }
                None => (None, None),
            };
            trace.records.push(QiteRecord {
                k,
                step,
                term_index: j,
                term_label: labels[j].clone(),
                energy: state.expectation(h)?,
                alg_error,
                fidelity,
                continued,
                truncated,
            });
        }
    }
    Ok((state, trace))
}
