use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::NormalizationPolicy;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::pauli::{LocalTerm, PauliString};
use crate::state::Statevector;

/// Qubits an `Â` for `term` acts on: the term's support, interior gaps
/// filled first, then grown one qubit at a time alternating right and left
/// (right first) until it holds `min(domain_size, num_qubits)` qubits. A side
/// that hits the end of the chain yields to the other.
pub fn choose_domain(term: &LocalTerm, domain_size: usize, num_qubits: usize) -> Result<Vec<usize>> {
    let support = term.support();
    if support.len() > domain_size {
        return Err(invalid(format!(
            "term {} has support {} larger than domain size {domain_size}",
            term.label(),
            support.len()
        )));
    }
    if support.iter().any(|&q| q >= num_qubits) {
        return Err(invalid(format!(
            "term {} exceeds {num_qubits}-qubit register",
            term.label()
        )));
    }
    let target = domain_size.min(num_qubits);
    let mut domain = if support.is_empty() { vec![0] } else { support };

    let (lo, hi) = (domain[0], domain[domain.len() - 1]);
    for q in lo..=hi {
        if domain.len() >= target {
            break;
        }
        if !domain.contains(&q) {
            domain.push(q);
        }
    }
    domain.sort_unstable();

    let mut right_turn = true;
    while domain.len() < target {
        let lo = domain[0];
        let hi = domain[domain.len() - 1];
        let can_right = hi + 1 < num_qubits;
        let can_left = lo > 0;
        if (right_turn && can_right) || !can_left {
            domain.push(hi + 1);
        } else {
            domain.insert(0, lo - 1);
        }
        right_turn = !right_turn;
    }
    Ok(domain)
}

/// Outcome of one local-approximation step.
#[derive(Debug, Clone)]
pub struct LocalStep {
    pub domain: Vec<usize>,
    /// Coefficients of `Â` on the non-identity Pauli strings of the domain.
    pub a_coeffs: Vec<(PauliString, f64)>,
    pub state: Statevector,
    /// Number of eigen-directions of `S + Sᵀ` above the cutoff.
    pub rank: usize,
    /// The first-order normalization estimate was non-positive and the
    /// complex continuation was used.
    pub continued: bool,
}

impl LocalStep {
    /// Every direction fell below the cutoff; the step was the identity.
    pub fn truncated(&self) -> bool {
        self.rank == 0
    }
}

/// The linear system `(S + Sᵀ) a = b` for one step, kept in complex form so
/// the symmetry of `S + Sᵀ` can be checked.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub basis: Vec<PauliString>,
    /// `S_IJ = ⟨Ψ|σ_I† σ_J|Ψ⟩`.
    pub s: DMatrix<Complex64>,
    /// `b_I = i⟨Ψ|σ_I†|Δ₀⟩ − i⟨Δ₀|σ_I|Ψ⟩`.
    pub b: DVector<Complex64>,
}

impl LinearSystem {
    pub fn build(state: &Statevector, domain: &[usize], delta0: &Statevector) -> Result<Self> {
        let basis = PauliString::basis_on(domain);
        let images = basis
            .iter()
            .map(|p| state.apply_pauli(p))
            .collect::<Result<Vec<_>>>()?;
        let k = basis.len();
        let mut s = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = images[i].inner_product(&images[j])?;
                s[(i, j)] = v;
                s[(j, i)] = v.conj();
            }
        }
        let i_unit = Complex64::new(0.0, 1.0);
        let b = DVector::from_iterator(
            k,
            images.iter().map(|img| {
                let forward = img.inner_product(delta0).expect("same register");
                let backward = delta0.inner_product(img).expect("same register");
                i_unit * forward - i_unit * backward
            }),
        );
        Ok(Self { basis, s, b })
    }

    /// `S + Sᵀ` (complex; its imaginary part vanishes for Hermitian `S`).
    pub fn symmetrized(&self) -> DMatrix<Complex64> {
        &self.s + self.s.transpose()
    }
}

/// Replaces `e^{−dt·ĥ}` by `e^{−i·dt·Â}` on `domain`.
///
/// `Â` minimizes `‖Δ₀ + iÂ|Ψ⟩‖` with `Δ₀ = (|Ψ̄′⟩ − |Ψ⟩)/dt` and the
/// first-order `|Ψ̄′⟩ = (1 − dt·ĥ)|Ψ⟩ / √(1 − 2dt⟨ĥ⟩)`. The stationarity
/// condition of that quadratic form is `(S + Sᵀ) a = b`.
pub fn local_approximation_step(
    state: &Statevector,
    term: &LocalTerm,
    domain: &[usize],
    dt: f64,
    cutoff: f64,
    policy: NormalizationPolicy,
) -> Result<LocalStep> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("dt must be finite and > 0, got {dt}")));
    }
    let support = term.support();
    if support.iter().any(|q| !domain.contains(q)) {
        return Err(invalid(format!(
            "domain {domain:?} does not cover support of {}",
            term.label()
        )));
    }
    let basis_len = (1usize << (2 * domain.len())) - 1;
    if term.coefficient == 0.0 {
        return Ok(LocalStep {
            domain: domain.to_vec(),
            a_coeffs: PauliString::basis_on(domain).into_iter().map(|p| (p, 0.0)).collect(),
            state: state.clone(),
            rank: basis_len,
            continued: false,
        });
    }

    let h_psi = state.apply_pauli(&term.pauli)?.scaled(Complex64::new(term.coefficient, 0.0));
    let energy = state.inner_product(&h_psi)?.re;
    let estimate = 1.0 - 2.0 * dt * energy;
    let (scale, continued) = if estimate > 0.0 {
        (Complex64::new(estimate.sqrt().recip(), 0.0), false)
    } else if estimate < 0.0 && policy == NormalizationPolicy::ComplexContinuation {
        // Principal root of a negative real: i·√|x|.
        (Complex64::new(0.0, (-estimate).sqrt()).inv(), true)
    } else {
        return Err(Error::StepIntervalTooLarge { estimate, dt });
    };

    let inv_dt = dt.recip();
    let delta0_amps = state
        .amplitudes()
        .iter()
        .zip(h_psi.amplitudes())
        .map(|(psi, hpsi)| (((psi - hpsi * dt) * scale) - psi) * inv_dt)
        .collect();
    let delta0 = Statevector::new(state.num_qubits(), delta0_amps)?;

    let system = LinearSystem::build(state, domain, &delta0)?;
    let lhs = system.symmetrized().map(|z| z.re);
    let rhs = system.b.map(|z| z.re);
    let solve = linalg::solve_symmetric_truncated(&lhs, &rhs, cutoff)?;
    if solve.rank == 0 {
        warn!(
            "local system for {} on {:?} is entirely below cutoff {cutoff:e}; identity step",
            term.label(),
            domain
        );
    }
    let a_coeffs: Vec<(PauliString, f64)> = system
        .basis
        .into_iter()
        .zip(solve.x.iter().copied())
        .collect();
    let new_state = state.apply_domain_unitary(&a_coeffs, domain, dt)?;
    Ok(LocalStep {
        domain: domain.to_vec(),
        a_coeffs,
        state: new_state,
        rank: solve.rank,
        continued,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Pauli;

    fn x(q: usize) -> LocalTerm {
        LocalTerm::new(-1.0, PauliString::single(q, Pauli::X))
    }

    fn zz(a: usize, b: usize) -> LocalTerm {
        LocalTerm::new(-1.0, PauliString::zz(a, b).unwrap())
    }

    #[test]
    fn domain_expansion_rule() {
        assert_eq!(choose_domain(&x(2), 2, 4).unwrap(), vec![2, 3]);
        assert_eq!(choose_domain(&zz(1, 2), 2, 4).unwrap(), vec![1, 2]);
        assert_eq!(choose_domain(&x(3), 2, 4).unwrap(), vec![2, 3]);
        assert_eq!(choose_domain(&x(0), 2, 4).unwrap(), vec![0, 1]);
        assert_eq!(choose_domain(&x(1), 3, 4).unwrap(), vec![0, 1, 2]);
        assert_eq!(choose_domain(&x(1), 4, 4).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(choose_domain(&x(1), 6, 4).unwrap(), vec![0, 1, 2, 3]);
        // Non-adjacent support fills the gap before growing outward.
        assert_eq!(choose_domain(&zz(0, 3), 2, 6).unwrap(), vec![0, 3]);
        assert_eq!(choose_domain(&zz(0, 3), 6, 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert!(choose_domain(&zz(0, 1), 1, 4).is_err());
    }

    #[test]
    fn zero_coefficient_leaves_state() {
        let s = Statevector::plus_state(3).unwrap();
        let term = LocalTerm::new(0.0, PauliString::single(1, Pauli::X));
        let step = local_approximation_step(&s, &term, &[1, 2], 0.1, 1e-8, Default::default()).unwrap();
        assert!(step.a_coeffs.iter().all(|(_, a)| *a == 0.0));
        assert_eq!(step.state, s);
    }

    #[test]
    fn eigenstate_is_unchanged() {
        // |+++⟩ is an eigenstate of X₂.
        let s = Statevector::plus_state(3).unwrap();
        let step = local_approximation_step(&s, &x(1), &[1, 2], 0.2, 1e-8, Default::default()).unwrap();
        let aligned = step.state.phase_aligned_to(&s).unwrap();
        assert!(aligned.distance_sqr(&s).unwrap().sqrt() < 1e-8);
    }

    #[test]
    fn symmetrized_system_is_real_symmetric() {
        let amps = (0..8)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let s = Statevector::new(3, amps).unwrap().normalized().unwrap();
        let d0 = s.apply_pauli(&PauliString::single(0, Pauli::Y)).unwrap();
        let sys = LinearSystem::build(&s, &[0, 1], &d0).unwrap();
        let m = sys.symmetrized();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                assert!(m[(i, j)].im.abs() < 1e-10);
                assert!((m[(i, j)] - m[(j, i)]).norm() < 1e-10);
            }
        }
        assert!(sys.b.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn strict_policy_rejects_nonpositive_estimate() {
        // ⟨X⟩ = 1 on |+⟩ with coefficient +1: 1 − 2·dt < 0 for dt = 0.6.
        let s = Statevector::plus_state(2).unwrap();
        let term = LocalTerm::new(1.0, PauliString::single(0, Pauli::X));
        let err = local_approximation_step(&s, &term, &[0, 1], 0.6, 1e-8, NormalizationPolicy::Strict);
        assert!(matches!(err, Err(Error::StepIntervalTooLarge { .. })));
        let cont = local_approximation_step(&s, &term, &[0, 1], 0.6, 1e-8, Default::default()).unwrap();
        assert!(cont.continued);
        assert!((cont.state.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_domain_missing_support() {
        let s = Statevector::plus_state(3).unwrap();
        assert!(local_approximation_step(&s, &zz(0, 1), &[1, 2], 0.1, 1e-8, Default::default()).is_err());
        assert!(local_approximation_step(&s, &x(0), &[0, 1], 0.0, 1e-8, Default::default()).is_err());
    }
}
