//! Problem instances: the open transverse-field Ising chain and the
//! Sherrington–Kirkpatrick spin glass, plus ground-state utilities.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::pauli::{Hamiltonian, LocalTerm, Pauli, PauliString};
use crate::state::{ImaginaryTimeOracle, Statevector};
use crate::MAX_DENSE_QUBITS;

const TABLE3_JSON: &str = include_str!("../fixtures/sk_n6_couplings.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfimSpec {
    pub num_qubits: usize,
    #[serde(rename = "J")]
    pub coupling: f64,
    #[serde(rename = "h")]
    pub field: f64,
}

impl TfimSpec {
    pub fn new(num_qubits: usize, coupling: f64, field: f64) -> Result<Self> {
        if num_qubits < 2 {
            return Err(invalid("TFIM chain needs at least 2 qubits"));
        }
        Ok(Self {
            num_qubits,
            coupling,
            field,
        })
    }
}

/// `H = −Σ_j (J Z_j Z_{j+1} + h X_j)` on an open chain, terms ordered
/// `X1..XN, Z1Z2..Z(N−1)ZN`.
pub fn build_tfim(spec: &TfimSpec) -> Result<Hamiltonian> {
    let n = spec.num_qubits;
    if n < 2 {
        return Err(invalid("TFIM chain needs at least 2 qubits"));
    }
    let mut terms: Vec<LocalTerm> = (0..n)
        .map(|j| LocalTerm::new(-spec.field, PauliString::single(j, Pauli::X)))
        .collect();
    for j in 0..n - 1 {
        terms.push(LocalTerm::new(-spec.coupling, PauliString::zz(j, j + 1)?));
    }
    Hamiltonian::new(n, terms)
}

/// All-to-all couplings `J_ij`, stored 0-based with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkSpec {
    pub num_qubits: usize,
    pub couplings: BTreeMap<(usize, usize), f64>,
}

/// On-disk form: 1-based `[i, j, J_ij]` triples.
#[derive(Serialize, Deserialize)]
struct SkSpecFile {
    num_qubits: usize,
    couplings: Vec<(usize, usize, f64)>,
}

impl SkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SkSpecFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("SK spec: {e}")))?;
        let mut couplings = BTreeMap::new();
        for (i, j, v) in file.couplings {
            if i == 0 || j == 0 || i >= j || j > file.num_qubits {
                return Err(Error::Parse(format!("bad coupling pair ({i}, {j})")));
            }
            if couplings.insert((i - 1, j - 1), v).is_some() {
                return Err(Error::Parse(format!("duplicate coupling pair ({i}, {j})")));
            }
        }
        Ok(Self {
            num_qubits: file.num_qubits,
            couplings,
        })
    }

    pub fn to_json(&self) -> String {
        let file = SkSpecFile {
            num_qubits: self.num_qubits,
            couplings: self
                .couplings
                .iter()
                .map(|(&(i, j), &v)| (i + 1, j + 1, v))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("SK spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// The published six-qubit instance.
    pub fn bundled_six_qubit() -> Self {
        Self::from_json(TABLE3_JSON).expect("bundled SK couplings parse")
    }

    /// Coupling for the 0-based pair `(i, j)` in either order.
    pub fn coupling(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.couplings.get(&key).copied()
    }
}

/// `H = Σ_{i<j} J_ij Z_i Z_j` with terms in lexicographic `(i, j)` order.
pub fn build_sk(spec: &SkSpec) -> Result<Hamiltonian> {
    let n = spec.num_qubits;
    let mut terms = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let c = spec
                .coupling(i, j)
                .ok_or_else(|| invalid(format!("missing coupling J{}{}", i + 1, j + 1)))?;
            terms.push(LocalTerm::new(c, PauliString::zz(i, j)?));
        }
    }
    if spec.couplings.len() != terms.len() {
        return Err(invalid("coupling map has pairs outside the register"));
    }
    Hamiltonian::new(n, terms)
}

/// Couplings drawn i.i.d. from the open interval (−1, 1).
pub fn sample_sk(num_qubits: usize, seed: u64) -> SkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut couplings = BTreeMap::new();
    for i in 0..num_qubits {
        for j in i + 1..num_qubits {
            let v = loop {
                let v: f64 = rng.gen_range(-1.0..1.0);
                if v > -1.0 {
                    break v;
                }
            };
            couplings.insert((i, j), v);
        }
    }
    SkSpec {
        num_qubits,
        couplings,
    }
}

#[derive(Debug, Clone)]
pub enum GroundSpace {
    /// Basis-state indices, for diagonal Hamiltonians.
    Bitstrings(Vec<usize>),
    /// Orthonormal eigenvectors.
    Vectors(Vec<Statevector>),
}

#[derive(Debug, Clone)]
pub struct GroundSolution {
    pub energy: f64,
    pub degeneracy: usize,
    pub ground_space: GroundSpace,
}

impl GroundSolution {
    /// One ground vector (the first basis element).
    pub fn representative(&self, num_qubits: usize) -> Result<Statevector> {
        match &self.ground_space {
            GroundSpace::Bitstrings(b) => Statevector::basis(num_qubits, b[0]),
            GroundSpace::Vectors(v) => Ok(v[0].clone()),
        }
    }

    /// `max_g |⟨g|ψ⟩|` style fidelity generalized to the ground space:
    /// `‖P ψ‖`, which equals `|⟨g|ψ⟩|` for a unique ground state.
    pub fn fidelity(&self, state: &Statevector) -> Result<f64> {
        Ok(ground_probability(state, self)?.sqrt())
    }
}

pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

/// Ground energy and ground space by dense diagonalization (or by
/// enumerating classical energies when `h` is diagonal).
pub fn ground_solution(h: &Hamiltonian, degeneracy_tol: f64) -> Result<GroundSolution> {
    if h.num_qubits() > MAX_DENSE_QUBITS {
        return Err(Error::CapacityExceeded {
            what: "num_qubits",
            got: h.num_qubits(),
            limit: MAX_DENSE_QUBITS,
        });
    }
    if h.is_diagonal() {
        let energies = h.diagonal_energies()?;
        let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let ground: Vec<usize> = energies
            .iter()
            .enumerate()
            .filter(|(_, &e)| e - min <= degeneracy_tol)
            .map(|(i, _)| i)
            .collect();
        return Ok(GroundSolution {
            energy: min,
            degeneracy: ground.len(),
            ground_space: GroundSpace::Bitstrings(ground),
        });
    }
    let eig = linalg::eigh(&h.to_matrix()?)?;
    let min = eig.values[0];
    let vectors = eig
        .values
        .iter()
        .enumerate()
        .take_while(|(_, &l)| l - min <= degeneracy_tol)
        .map(|(c, _)| Statevector::new(h.num_qubits(), eig.vectors.column(c).iter().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundSolution {
        energy: min,
        degeneracy: vectors.len(),
        ground_space: GroundSpace::Vectors(vectors),
    })
}

/// `‖P_gs |ψ⟩‖²`.
pub fn ground_probability(state: &Statevector, gs: &GroundSolution) -> Result<f64> {
    let p = match &gs.ground_space {
        GroundSpace::Bitstrings(bits) => {
            let amps = state.amplitudes();
            if let Some(&b) = bits.iter().find(|&&b| b >= amps.len()) {
                return Err(invalid(format!("ground bitstring {b} outside state of dim {}", amps.len())));
            }
            bits.iter().map(|&b| amps[b].norm_sqr()).sum()
        }
        GroundSpace::Vectors(vs) => {
            let mut total = 0.0;
            for v in vs {
                total += v.inner_product(state)?.norm_sqr();
            }
            total
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

const ADAPTIVE_BETA_MAX: f64 = 100.0;

/// Imaginary time at which the exact ITE state sits `gap_target` above the
/// ground energy (within ±10%), located by bisection to relative width 1e-3.
pub fn adaptive_beta(h: &Hamiltonian, init: &Statevector, gap_target: f64) -> Result<f64> {
    if !(gap_target > 0.0) {
        return Err(invalid("gap_target must be > 0"));
    }
    let gs = ground_solution(h, DEFAULT_DEGENERACY_TOL)?;
    if ground_probability(init, &gs)? < 1e-24 {
        return Err(Error::DegenerateInput(
            "initial state has no overlap with the ground space".into(),
        ));
    }
    let oracle = ImaginaryTimeOracle::new(h, init)?;
    let gap = |beta: f64| -> Result<f64> { Ok(oracle.state_at(beta)?.expectation(h)? - gs.energy) };

    if gap(0.0)? <= gap_target {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 0.5;
    while gap(hi)? > gap_target {
        lo = hi;
        hi *= 2.0;
        if hi > ADAPTIVE_BETA_MAX {
            if gap(ADAPTIVE_BETA_MAX)? > gap_target * 1.1 {
                return Err(Error::NotConverged(format!(
                    "energy gap stays above {gap_target:e} up to beta = {ADAPTIVE_BETA_MAX}"
                )));
            }
            hi = ADAPTIVE_BETA_MAX;
            break;
        }
    }
    // Invariant: gap(lo) > target >= gap(hi).
    for _ in 0..200 {
        if hi - lo <= 1e-3 * hi {
            let g = gap(hi)?;
            if g >= 0.9 * gap_target && g <= 1.1 * gap_target {
                break;
            }
        }
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > gap_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tfim_term_layout() {
        let h = build_tfim(&TfimSpec::new(4, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(h.num_terms(), 7);
        assert_eq!(h.labels(), ["X1", "X2", "X3", "X4", "Z1Z2", "Z2Z3", "Z3Z4"]);
        assert!(h.terms().iter().all(|t| t.coefficient == -1.0));
        let h2 = build_tfim(&TfimSpec::new(2, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(h2.num_terms(), 3);
        assert!(TfimSpec::new(1, 1.0, 1.0).is_err());
    }

    #[test]
    fn bundled_sk_couplings() {
        let spec = SkSpec::bundled_six_qubit();
        assert_eq!(spec.coupling(0, 1), Some(0.5554));
        assert_eq!(spec.coupling(0, 2), Some(-0.5249));
        assert_eq!(spec.coupling(4, 5), Some(-0.2543));
        let h = build_sk(&spec).unwrap();
        assert_eq!(h.num_terms(), 15);
        assert_eq!(h.labels()[0], "Z1Z2");
        assert_eq!(h.labels()[14], "Z5Z6");
    }

    #[test]
    fn sk_json_round_trip() {
        let spec = sample_sk(5, 17);
        let back = SkSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, back);
        assert!(SkSpec::from_json(r#"{"num_qubits":3,"couplings":[[2,1,0.5]]}"#).is_err());
    }

    #[test]
    fn missing_pair_is_rejected() {
        let mut spec = sample_sk(4, 3);
        spec.couplings.remove(&(1, 3));
        assert!(matches!(build_sk(&spec), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_couplings_make_everything_ground() {
        let spec = SkSpec {
            num_qubits: 3,
            couplings: (0..3)
                .flat_map(|i| (i + 1..3).map(move |j| ((i, j), 0.0)))
                .collect(),
        };
        let gs = ground_solution(&build_sk(&spec).unwrap(), DEFAULT_DEGENERACY_TOL).unwrap();
        assert_eq!(gs.degeneracy, 8);
        assert_eq!(gs.energy, 0.0);
    }

    #[test]
    fn sampling_is_reproducible_and_open_interval() {
        assert_eq!(sample_sk(6, 9), sample_sk(6, 9));
        assert_ne!(sample_sk(6, 9), sample_sk(6, 10));
        assert!(sample_sk(8, 1).couplings.values().all(|v| *v > -1.0 && *v < 1.0));
    }

    #[test]
    fn sk_ground_pairs_are_complements() {
        for seed in 0..5 {
            let h = build_sk(&sample_sk(5, seed)).unwrap();
            let gs = ground_solution(&h, DEFAULT_DEGENERACY_TOL).unwrap();
            assert_eq!(gs.degeneracy % 2, 0);
            let GroundSpace::Bitstrings(bits) = &gs.ground_space else {
                panic!("SK is diagonal")
            };
            for b in bits {
                assert!(bits.contains(&(b ^ 0b11111)));
            }
        }
    }

    #[test]
    fn table3_ground_space() {
        let h = build_sk(&SkSpec::bundled_six_qubit()).unwrap();
        let gs = ground_solution(&h, DEFAULT_DEGENERACY_TOL).unwrap();
        assert_eq!(gs.degeneracy, 2);
        let plus = Statevector::plus_state(6).unwrap();
        assert!((ground_probability(&plus, &gs).unwrap() - 0.03125).abs() < 1e-14);
        let GroundSpace::Bitstrings(bits) = &gs.ground_space else {
            panic!("SK is diagonal")
        };
        let one = Statevector::basis(6, bits[0]).unwrap();
        assert!((ground_probability(&one, &gs).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn general_path_matches_fast_path_for_diagonal() {
        let h = build_sk(&sample_sk(4, 2)).unwrap();
        let fast = ground_solution(&h, 1e-9).unwrap();
        let eig = linalg::eigh(&h.to_matrix().unwrap()).unwrap();
        assert!((fast.energy - eig.values[0]).abs() < 1e-12);
    }

    #[test]
    fn adaptive_beta_limits() {
        let h = build_tfim(&TfimSpec::new(3, 1.0, 1.0).unwrap()).unwrap();
        let init = Statevector::plus_state(3).unwrap();
        assert_eq!(adaptive_beta(&h, &init, 100.0).unwrap(), 0.0);
        assert!(adaptive_beta(&h, &init, 0.0).is_err());
        let beta = adaptive_beta(&h, &init, 1e-2).unwrap();
        let gs = ground_solution(&h, 1e-9).unwrap();
        let gap = crate::state::exact_ite(&h, &init, beta).unwrap().expectation(&h).unwrap() - gs.energy;
        assert!((0.9e-2..=1.1e-2).contains(&gap), "gap {gap}");
    }
}
