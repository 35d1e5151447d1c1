//! Trotterized quantum imaginary time evolution with the unitary local
//! approximation.
//!
//! Each non-unitary factor `e^{−Δτ ĥ[j]}` is replaced by `e^{−iΔτ Â[j]}`, with
//! `Â[j]` expanded over the non-identity Pauli strings of a D-qubit domain
//! around the term and found from a linear system built out of expectation
//! values on the current state.

mod run;
mod schedule;
mod step;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use run::{run_qite, QiteRecord, QiteTrace, TraceTracker};
pub use schedule::{randomized_schedule, replay_schedule, standard_schedule, OrderingSchedule, PathTable};
pub use step::{choose_domain, local_approximation_step, LocalStep};

/// How a step treats a non-positive first-order normalization estimate
/// `1 − 2Δτ⟨ĥ⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationPolicy {
    /// Divide by the principal complex square root and keep going; the step
    /// is flagged in the trace.
    #[default]
    ComplexContinuation,
    /// Fail with [`crate::Error::StepIntervalTooLarge`].
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QiteConfig {
    pub beta: f64,
    pub num_trotter_steps: usize,
    pub domain_size: usize,
    #[serde(default = "default_cutoff")]
    pub regularization_cutoff: f64,
    #[serde(default)]
    pub normalization: NormalizationPolicy,
}

fn default_cutoff() -> f64 {
    1e-8
}

impl QiteConfig {
    pub fn new(beta: f64, num_trotter_steps: usize, domain_size: usize) -> Result<Self> {
        let cfg = Self {
            beta,
            num_trotter_steps,
            domain_size,
            regularization_cutoff: default_cutoff(),
            normalization: NormalizationPolicy::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.regularization_cutoff = cutoff;
        self
    }

    pub fn with_normalization(mut self, policy: NormalizationPolicy) -> Self {
        self.normalization = policy;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.num_trotter_steps < 1 {
            return Err(invalid("num_trotter_steps must be >= 1"));
        }
        if !(1..=crate::state::MAX_DOMAIN_QUBITS).contains(&self.domain_size) {
            return Err(invalid(format!(
                "domain_size must be in 1..={}, got {}",
                crate::state::MAX_DOMAIN_QUBITS,
                self.domain_size
            )));
        }
        if !(self.regularization_cutoff >= 0.0) {
            return Err(invalid("regularization_cutoff must be >= 0"));
        }
        Ok(())
    }

    /// Step interval Δτ = β / n.
    pub fn dt(&self) -> f64 {
        self.beta / self.num_trotter_steps as f64
    }
}

/// True when `perm` is a bijection on `0..m`.
pub fn is_permutation(perm: &[usize], m: usize) -> bool {
    if perm.len() != m {
        return false;
    }
    let mut seen = vec![false; m];
    for &p in perm {
        if p >= m || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(QiteConfig::new(0.9, 4, 2).is_ok());
        assert!(QiteConfig::new(-0.1, 4, 2).is_err());
        assert!(QiteConfig::new(0.9, 0, 2).is_err());
        assert!(QiteConfig::new(0.9, 4, 0).is_err());
        assert!(QiteConfig::new(0.9, 4, 7).is_err());
        assert!((QiteConfig::new(0.9, 4, 2).unwrap().dt() - 0.225).abs() < 1e-15);
    }

    #[test]
    fn permutation_check() {
        assert!(is_permutation(&[2, 0, 1], 3));
        assert!(!is_permutation(&[0, 0, 1], 3));
        assert!(!is_permutation(&[0, 1], 3));
        assert!(!is_permutation(&[0, 1, 3], 3));
    }
}
