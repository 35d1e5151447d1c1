//! Dense statevectors, Pauli actions, expectation values and the exact
//! imaginary-time-evolution oracle.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, HermitianEigen};
use crate::pauli::{Hamiltonian, PauliString};
use crate::MAX_DENSE_QUBITS;

/// Largest domain accepted by [`Statevector::apply_domain_unitary`].
pub const MAX_DOMAIN_QUBITS: usize = 6;

/// Dense amplitude vector over `num_qubits` qubits. Qubit 0 is the most
/// significant bit of the amplitude index.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    pub fn new(num_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(invalid("statevector needs at least one qubit"));
        }
        if num_qubits > 30 || amps.len() != 1usize << num_qubits {
            return Err(invalid(format!(
                "{} amplitudes do not describe {num_qubits} qubits",
                amps.len()
            )));
        }
        Ok(Self { num_qubits, amps })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(invalid(format!("basis index {index} >= {dim}")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Self::new(num_qubits, amps)
    }

    /// `(|0⟩ + |1⟩)^⊗N / √(2^N)`.
    pub fn plus_state(num_qubits: usize) -> Result<Self> {
        if num_qubits < 1 {
            return Err(invalid("plus_state needs num_qubits >= 1"));
        }
        let dim = 1usize << num_qubits;
        let mut a = 0.5f64.powi((num_qubits / 2) as i32);
        if num_qubits % 2 == 1 {
            a *= std::f64::consts::FRAC_1_SQRT_2;
        }
        Self::new(num_qubits, vec![Complex64::new(a, 0.0); dim])
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(Error::DegenerateInput(format!("cannot normalize state of norm {n:e}")));
        }
        Ok(self.scaled(Complex64::new(n.recip(), 0.0)))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            num_qubits: self.num_qubits,
            amps: self.amps.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Computational-basis state with every qubit flipped (|x⟩ → |x̄⟩).
    pub fn bit_flipped(&self) -> Self {
        let mask = self.dim() - 1;
        let mut amps = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (x, a) in self.amps.iter().enumerate() {
            amps[x ^ mask] = *a;
        }
        Self {
            num_qubits: self.num_qubits,
            amps,
        }
    }

    /// `σ_p |ψ⟩`.
    pub fn apply_pauli(&self, p: &PauliString) -> Result<Self> {
        let masks = p.masks(self.num_qubits)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (x, a) in self.amps.iter().enumerate() {
            let (y, phase) = masks.act(x);
            out[y] = phase * a;
        }
        Ok(Self {
            num_qubits: self.num_qubits,
            amps: out,
        })
    }

    /// `⟨ψ|σ_p|ψ⟩` without allocating the image state.
    pub fn pauli_expectation(&self, p: &PauliString) -> Result<Complex64> {
        let masks = p.masks(self.num_qubits)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(x, a)| {
                let (y, phase) = masks.act(x);
                self.amps[y].conj() * phase * a
            })
            .sum())
    }

    /// `⟨ψ|H|ψ⟩`. Fails if the accumulated imaginary part exceeds 1e-8.
    pub fn expectation(&self, h: &Hamiltonian) -> Result<f64> {
        if h.num_qubits() != self.num_qubits {
            return Err(invalid(format!(
                "hamiltonian on {} qubits, state on {}",
                h.num_qubits(),
                self.num_qubits
            )));
        }
        let mut total = Complex64::new(0.0, 0.0);
        for t in h.terms() {
            total += self.pauli_expectation(&t.pauli)? * t.coefficient;
        }
        if total.im.abs() > 1e-8 {
            return Err(Error::InternalInconsistency(format!(
                "expectation has imaginary part {:e}",
                total.im
            )));
        }
        Ok(total.re)
    }

    /// `⟨self|other⟩`.
    pub fn inner_product(&self, other: &Statevector) -> Result<Complex64> {
        if self.num_qubits != other.num_qubits {
            return Err(invalid(format!(
                "inner product of {}- and {}-qubit states",
                self.num_qubits, other.num_qubits
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Pure-state fidelity |⟨a|b⟩|.
    pub fn fidelity(&self, other: &Statevector) -> Result<f64> {
        Ok(self.inner_product(other)?.norm())
    }

    /// ‖a − b‖².
    pub fn distance_sqr(&self, other: &Statevector) -> Result<f64> {
        if self.num_qubits != other.num_qubits {
            return Err(invalid("distance between states of different size"));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }

    /// Copy of `self` multiplied by the unit phase that makes
    /// `⟨reference|self⟩` real and non-negative.
    pub fn phase_aligned_to(&self, reference: &Statevector) -> Result<Self> {
        let ov = reference.inner_product(self)?;
        if ov.norm() < 1e-300 {
            return Ok(self.clone());
        }
        Ok(self.scaled(ov.conj() / ov.norm()))
    }

    /// Applies `exp(−i·dt·A)` with `A = Σ a_I σ_I` supported on `domain`.
    pub fn apply_domain_unitary(
        &self,
        a_coeffs: &[(PauliString, f64)],
        domain: &[usize],
        dt: f64,
    ) -> Result<Self> {
        let a = domain_matrix(a_coeffs, domain)?;
        if a.iter().all(|z| z.norm() == 0.0) || dt == 0.0 {
            return Ok(self.clone());
        }
        let u = linalg::unitary_exp(&a, dt)?;
        self.apply_local_matrix(&u, domain)
    }

    /// Applies a 2^D × 2^D matrix to the qubits in `domain` (sorted, first
    /// entry most significant in the local index).
    pub fn apply_local_matrix(&self, u: &DMatrix<Complex64>, domain: &[usize]) -> Result<Self> {
        check_domain(domain, self.num_qubits)?;
        let d = domain.len();
        let local_dim = 1usize << d;
        if u.nrows() != local_dim || u.ncols() != local_dim {
            return Err(invalid(format!(
                "{}x{} matrix on a {d}-qubit domain",
                u.nrows(),
                u.ncols()
            )));
        }
        let n = self.num_qubits;
        let offsets: Vec<usize> = (0..local_dim)
            .map(|l| {
                (0..d)
                    .filter(|pos| l >> (d - 1 - pos) & 1 == 1)
                    .map(|pos| 1usize << (n - 1 - domain[pos]))
                    .sum()
            })
            .collect();
        let domain_mask: usize = offsets[local_dim - 1];
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        let mut gathered = vec![Complex64::new(0.0, 0.0); local_dim];
        for base in (0..self.dim()).filter(|b| b & domain_mask == 0) {
            for (l, off) in offsets.iter().enumerate() {
                gathered[l] = self.amps[base | off];
            }
            for (r, off) in offsets.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, g) in gathered.iter().enumerate() {
                    acc += u[(r, c)] * g;
                }
                out[base | off] = acc;
            }
        }
        Ok(Self {
            num_qubits: n,
            amps: out,
        })
    }
}

fn check_domain(domain: &[usize], num_qubits: usize) -> Result<()> {
    if domain.is_empty() {
        return Err(invalid("empty domain"));
    }
    if domain.len() > MAX_DOMAIN_QUBITS {
        return Err(Error::CapacityExceeded {
            what: "domain size",
            got: domain.len(),
            limit: MAX_DOMAIN_QUBITS,
        });
    }
    if domain.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("domain {domain:?} must be strictly increasing")));
    }
    if domain.iter().any(|&q| q >= num_qubits) {
        return Err(invalid(format!(
            "domain {domain:?} exceeds {num_qubits}-qubit register"
        )));
    }
    Ok(())
}

/// Hermitian matrix `Σ a_I σ_I` on the domain.
pub fn domain_matrix(a_coeffs: &[(PauliString, f64)], domain: &[usize]) -> Result<DMatrix<Complex64>> {
    if domain.len() > MAX_DOMAIN_QUBITS {
        return Err(Error::CapacityExceeded {
            what: "domain size",
            got: domain.len(),
            limit: MAX_DOMAIN_QUBITS,
        });
    }
    let dim = 1usize << domain.len();
    let mut a = DMatrix::zeros(dim, dim);
    for (p, c) in a_coeffs {
        if !c.is_finite() {
            return Err(invalid(format!("coefficient on {p} is not a finite real")));
        }
        if *c == 0.0 {
            continue;
        }
        let local = p.relabel_onto(domain)?;
        let masks = local.masks(domain.len())?;
        for col in 0..dim {
            let (row, phase) = masks.act(col);
            a[(row, col)] += phase * *c;
        }
    }
    Ok(a)
}

/// Eigen-decomposed Hamiltonian projected on an initial state; yields the
/// normalized exact imaginary-time state for any β in O(4^N).
#[derive(Debug, Clone)]
pub struct ImaginaryTimeOracle {
    eig: HermitianEigen,
    /// `V† |init⟩`.
    weights: Vec<Complex64>,
    num_qubits: usize,
}

impl ImaginaryTimeOracle {
    pub fn new(h: &Hamiltonian, init: &Statevector) -> Result<Self> {
        if h.num_qubits() > MAX_DENSE_QUBITS {
            return Err(Error::CapacityExceeded {
                what: "num_qubits",
                got: h.num_qubits(),
                limit: MAX_DENSE_QUBITS,
            });
        }
        if h.num_qubits() != init.num_qubits() {
            return Err(invalid("hamiltonian and initial state sizes differ"));
        }
        let eig = linalg::eigh(&h.to_matrix()?)?;
        let weights = (0..init.dim())
            .map(|c| {
                eig.vectors
                    .column(c)
                    .iter()
                    .zip(init.amplitudes())
                    .map(|(v, a)| v.conj() * a)
                    .sum()
            })
            .collect();
        Ok(Self {
            eig,
            weights,
            num_qubits: h.num_qubits(),
        })
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eig
    }

    /// `e^{−βH}|init⟩ / ‖e^{−βH}|init⟩‖`.
    pub fn state_at(&self, beta: f64) -> Result<Statevector> {
        if !(beta >= 0.0) {
            return Err(invalid(format!("beta must be >= 0, got {beta}")));
        }
        // Shift by the lowest eigenvalue carrying weight so the largest factor is 1.
        let shift = self
            .eig
            .values
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| w.norm() > 1e-14)
            .map(|(l, _)| *l)
            .fold(f64::INFINITY, f64::min);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let scaled: Vec<Complex64> = self
            .eig
            .values
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * (-beta * (l - shift)).exp())
            .collect();
        let norm = scaled.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm >= 1e-300) {
            return Err(Error::DegenerateInput(
                "initial state has no overlap with any weighted eigenvector".into(),
            ));
        }
        let dim = scaled.len();
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        for (c, s) in scaled.iter().enumerate() {
            if *s == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (r, amp) in amps.iter_mut().enumerate() {
                *amp += self.eig.vectors[(r, c)] * s;
            }
        }
        Ok(Statevector::new(self.num_qubits, amps)?.scaled(Complex64::new(norm.recip(), 0.0)))
    }
}

/// Normalized `e^{−βH}|init⟩` via dense eigendecomposition.
pub fn exact_ite(h: &Hamiltonian, init: &Statevector, beta: f64) -> Result<Statevector> {
    ImaginaryTimeOracle::new(h, init)?.state_at(beta)
}
