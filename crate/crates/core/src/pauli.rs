//! Pauli strings, weighted local terms and k-local Hamiltonians.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    fn letter(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Bit masks describing how a Pauli string acts on computational basis
/// states: `σ|x⟩ = i^y_count · (−1)^{popcount(x & z)} |x ⊕ x_mask⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliMasks {
    pub x: usize,
    pub z: usize,
    pub y_count: u32,
}

impl PauliMasks {
    /// Image index and phase of basis state `index`.
    #[inline]
    pub fn act(&self, index: usize) -> (usize, Complex64) {
        let sign = if (index & self.z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let phase = match self.y_count % 4 {
            0 => Complex64::new(sign, 0.0),
            1 => Complex64::new(0.0, sign),
            2 => Complex64::new(-sign, 0.0),
            _ => Complex64::new(0.0, -sign),
        };
        (index ^ self.x, phase)
    }
}

/// Tensor product of single-qubit Paulis. The identity is the empty string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliString {
    ops: Vec<(usize, Pauli)>,
}

impl PauliString {
    pub fn identity() -> Self {
        Self { ops: Vec::new() }
    }

    /// Builds a string from `(qubit, pauli)` pairs; qubits must be strictly
    /// increasing.
    pub fn new(ops: Vec<(usize, Pauli)>) -> Result<Self> {
        if ops.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid(format!(
                "pauli string qubits must be strictly increasing: {ops:?}"
            )));
        }
        Ok(Self { ops })
    }

    pub fn single(qubit: usize, pauli: Pauli) -> Self {
        Self {
            ops: vec![(qubit, pauli)],
        }
    }

    pub fn zz(a: usize, b: usize) -> Result<Self> {
        Self::new(vec![(a, Pauli::Z), (b, Pauli::Z)])
    }

    pub fn ops(&self) -> &[(usize, Pauli)] {
        &self.ops
    }

    pub fn is_identity(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        self.ops.iter().map(|&(q, _)| q).collect()
    }

    pub fn weight(&self) -> usize {
        self.ops.len()
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.ops.last().map(|&(q, _)| q)
    }

    /// True when only Z factors appear (diagonal in the computational basis).
    pub fn is_diagonal(&self) -> bool {
        self.ops.iter().all(|&(_, p)| p == Pauli::Z)
    }

    /// Masks for an `num_qubits` register, qubit 0 being the most significant bit.
    pub fn masks(&self, num_qubits: usize) -> Result<PauliMasks> {
        let mut masks = PauliMasks {
            x: 0,
            z: 0,
            y_count: 0,
        };
        for &(q, p) in &self.ops {
            if q >= num_qubits {
                return Err(invalid(format!(
                    "qubit {q} out of range for {num_qubits}-qubit register"
                )));
            }
            let bit = 1usize << (num_qubits - 1 - q);
            match p {
                Pauli::X => masks.x |= bit,
                Pauli::Z => masks.z |= bit,
                Pauli::Y => {
                    masks.x |= bit;
                    masks.z |= bit;
                    masks.y_count += 1;
                }
            }
        }
        Ok(masks)
    }

    /// 1-based label, e.g. `X1` or `Z1Z2`; the identity prints as `I`.
    pub fn label(&self) -> String {
        if self.ops.is_empty() {
            return "I".to_string();
        }
        self.ops
            .iter()
            .map(|&(q, p)| format!("{}{}", p.letter(), q + 1))
            .collect()
    }

    /// Parses a 1-based label such as `Z3Z4` or `X1`.
    pub fn parse_label(label: &str) -> Result<Self> {
        let label = label.trim();
        if label == "I" {
            return Ok(Self::identity());
        }
        let mut ops = Vec::new();
        let mut chars = label.chars().peekable();
        while let Some(c) = chars.next() {
            let pauli = match c {
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                _ => return Err(Error::Parse(format!("bad pauli letter {c:?} in {label:?}"))),
            };
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            let qubit: usize = digits
                .parse()
                .map_err(|_| Error::Parse(format!("missing qubit index in {label:?}")))?;
            if qubit == 0 {
                return Err(Error::Parse(format!("labels are 1-based, got 0 in {label:?}")));
            }
            ops.push((qubit - 1, pauli));
        }
        if ops.is_empty() {
            return Err(Error::Parse("empty pauli label".into()));
        }
        ops.sort_by_key(|&(q, _)| q);
        Self::new(ops).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Dense matrix of this string restricted to `domain` (sorted qubits,
    /// first entry most significant). Every qubit of the string must lie in
    /// the domain.
    pub fn local_matrix(&self, domain: &[usize]) -> Result<DMatrix<Complex64>> {
        let local = self.relabel_onto(domain)?;
        let d = domain.len();
        let dim = 1usize << d;
        let masks = local.masks(d)?;
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let (row, phase) = masks.act(col);
            m[(row, col)] = phase;
        }
        Ok(m)
    }

    /// Re-indexes the string onto positions within `domain`.
    pub fn relabel_onto(&self, domain: &[usize]) -> Result<PauliString> {
        let ops = self
            .ops
            .iter()
            .map(|&(q, p)| {
                domain
                    .iter()
                    .position(|&d| d == q)
                    .map(|pos| (pos, p))
                    .ok_or_else(|| invalid(format!("qubit {q} not in domain {domain:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ops = ops;
        ops.sort_by_key(|&(q, _)| q);
        PauliString::new(ops)
    }

    /// All 4^D − 1 non-identity strings on `domain`, ordered lexicographically
    /// over (I, X, Y, Z) with the first domain qubit as the leading digit.
    pub fn basis_on(domain: &[usize]) -> Vec<PauliString> {
        let d = domain.len();
        let total = 1usize << (2 * d);
        (1..total)
            .map(|code| {
                let ops = domain
                    .iter()
                    .enumerate()
                    .filter_map(|(pos, &q)| {
                        let digit = (code >> (2 * (d - 1 - pos))) & 3;
                        match digit {
                            0 => None,
                            1 => Some((q, Pauli::X)),
                            2 => Some((q, Pauli::Y)),
                            _ => Some((q, Pauli::Z)),
                        }
                    })
                    .collect();
                PauliString { ops }
            })
            .collect()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// One weighted term `c · σ` of a local Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTerm {
    pub coefficient: f64,
    pub pauli: PauliString,
}

impl LocalTerm {
    pub fn new(coefficient: f64, pauli: PauliString) -> Self {
        Self { coefficient, pauli }
    }

    pub fn support(&self) -> Vec<usize> {
        self.pauli.support()
    }

    pub fn label(&self) -> String {
        self.pauli.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    num_qubits: usize,
    terms: Vec<LocalTerm>,
}

impl Hamiltonian {
    pub fn new(num_qubits: usize, terms: Vec<LocalTerm>) -> Result<Self> {
        if num_qubits == 0 {
            return Err(invalid("hamiltonian needs at least one qubit"));
        }
        for t in &terms {
            if let Some(q) = t.pauli.max_qubit() {
                if q >= num_qubits {
                    return Err(invalid(format!(
                        "term {} exceeds {num_qubits}-qubit register",
                        t.label()
                    )));
                }
            }
            if !t.coefficient.is_finite() {
                return Err(invalid(format!("non-finite coefficient on {}", t.label())));
            }
        }
        Ok(Self { num_qubits, terms })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(LocalTerm::label).collect()
    }

    /// Index of the term carrying `label`, if any.
    pub fn term_index(&self, label: &str) -> Option<usize> {
        let target = PauliString::parse_label(label).ok()?;
        self.terms.iter().position(|t| t.pauli == target)
    }

    /// Largest term support, i.e. the k in k-local.
    pub fn locality(&self) -> usize {
        self.terms.iter().map(|t| t.pauli.weight()).max().unwrap_or(0)
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(|t| t.pauli.is_diagonal())
    }

    /// Classical energies of every basis state; only meaningful when
    /// [`Self::is_diagonal`] holds.
    pub fn diagonal_energies(&self) -> Result<Vec<f64>> {
        if !self.is_diagonal() {
            return Err(invalid("hamiltonian is not diagonal"));
        }
        let masks = self
            .terms
            .iter()
            .map(|t| Ok((t.coefficient, t.pauli.masks(self.num_qubits)?.z)))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.dim())
            .map(|x| {
                masks
                    .iter()
                    .map(|&(c, z)| if (x & z).count_ones() % 2 == 0 { c } else { -c })
                    .sum()
            })
            .collect())
    }

    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>> {
        if self.num_qubits > crate::MAX_DENSE_QUBITS {
            return Err(Error::CapacityExceeded {
                what: "num_qubits",
                got: self.num_qubits,
                limit: crate::MAX_DENSE_QUBITS,
            });
        }
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for t in &self.terms {
            let masks = t.pauli.masks(self.num_qubits)?;
            for col in 0..dim {
                let (row, phase) = masks.act(col);
                m[(row, col)] += phase * t.coefficient;
            }
        }
        Ok(m)
    }

    /// Same Hamiltonian with its term list permuted: new term `i` is old term
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if !crate::qite::is_permutation(perm, self.terms.len()) {
            return Err(invalid("not a permutation of the term list"));
        }
        Ok(Self {
            num_qubits: self.num_qubits,
            terms: perm.iter().map(|&i| self.terms[i].clone()).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for label in ["X1", "Z1Z2", "Z3Z4", "Y2", "X1Y3Z4"] {
            let p = PauliString::parse_label(label).unwrap();
            assert_eq!(p.label(), label);
        }
        assert!(PauliString::parse_label("Q1").is_err());
        assert!(PauliString::parse_label("X0").is_err());
        assert!(PauliString::parse_label("Z").is_err());
    }

    #[test]
    fn rejects_unsorted_ops() {
        assert!(PauliString::new(vec![(2, Pauli::X), (1, Pauli::Z)]).is_err());
        assert!(PauliString::new(vec![(1, Pauli::X), (1, Pauli::Z)]).is_err());
    }

    #[test]
    fn basis_has_four_pow_d_minus_one_strings() {
        assert_eq!(PauliString::basis_on(&[3]).len(), 3);
        let b = PauliString::basis_on(&[0, 2]);
        assert_eq!(b.len(), 15);
        assert_eq!(b[0].label(), "X3");
        assert_eq!(b[2].label(), "Z3");
        assert_eq!(b[3].label(), "X1");
        assert!(b.iter().all(|p| !p.is_identity()));
    }

    #[test]
    fn y_matrix_matches_definition() {
        let y = PauliString::single(0, Pauli::Y).local_matrix(&[0]).unwrap();
        assert_eq!(y[(1, 0)], Complex64::new(0.0, 1.0));
        assert_eq!(y[(0, 1)], Complex64::new(0.0, -1.0));
    }

    #[test]
    fn hamiltonian_matrix_is_hermitian() {
        let terms = vec![
            LocalTerm::new(0.3, PauliString::parse_label("X1Y2").unwrap()),
            LocalTerm::new(-1.1, PauliString::parse_label("Z2Z3").unwrap()),
            LocalTerm::new(0.7, PauliString::parse_label("Y3").unwrap()),
        ];
        let h = Hamiltonian::new(3, terms).unwrap();
        let m = h.to_matrix().unwrap();
        let diff = crate::linalg::max_abs(&(&m - m.adjoint()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn diagonal_energies_match_matrix() {
        let terms = vec![
            LocalTerm::new(0.5, PauliString::parse_label("Z1Z2").unwrap()),
            LocalTerm::new(-0.25, PauliString::parse_label("Z2Z3").unwrap()),
        ];
        let h = Hamiltonian::new(3, terms).unwrap();
        let m = h.to_matrix().unwrap();
        for (x, e) in h.diagonal_energies().unwrap().into_iter().enumerate() {
            assert!((m[(x, x)].re - e).abs() < 1e-14);
        }
    }
}
