use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::is_permutation;
use crate::error::{invalid, Error, Result};
use crate::pauli::Hamiltonian;

/// Per-Trotter-step permutation of the Hamiltonian's term indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderingSchedule {
    num_terms: usize,
    orderings: Vec<Vec<usize>>,
}

impl OrderingSchedule {
    pub fn new(num_terms: usize, orderings: Vec<Vec<usize>>) -> Result<Self> {
        if orderings.is_empty() {
            return Err(invalid("schedule needs at least one Trotter step"));
        }
        for (s, row) in orderings.iter().enumerate() {
            if !is_permutation(row, num_terms) {
                return Err(invalid(format!(
                    "row {s} is not a permutation of {num_terms} terms: {row:?}"
                )));
            }
        }
        Ok(Self {
            num_terms,
            orderings,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.orderings.len()
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    pub fn orderings(&self) -> &[Vec<usize>] {
        &self.orderings
    }

    pub fn row(&self, step: usize) -> &[usize] {
        &self.orderings[step]
    }

    /// Swaps positions `p` and `p + 1` of Trotter step `step`.
    pub fn swap_adjacent(&mut self, step: usize, p: usize) {
        self.orderings[step].swap(p, p + 1);
    }

    /// Applies a relabeling of term indices: old index `i` becomes `relabel[i]`.
    pub fn relabeled(&self, relabel: &[usize]) -> Result<Self> {
        if !is_permutation(relabel, self.num_terms) {
            return Err(invalid("relabeling is not a permutation"));
        }
        Self::new(
            self.num_terms,
            self.orderings
                .iter()
                .map(|row| row.iter().map(|&i| relabel[i]).collect())
                .collect(),
        )
    }

    /// Term-label grid for this schedule against `h`.
    pub fn to_table(&self, h: &Hamiltonian) -> Result<PathTable> {
        if h.num_terms() != self.num_terms {
            return Err(invalid("schedule and hamiltonian term counts differ"));
        }
        let labels = h.labels();
        Ok(PathTable(
            self.orderings
                .iter()
                .map(|row| row.iter().map(|&i| labels[i].clone()).collect())
                .collect(),
        ))
    }

    pub fn is_valid(&self) -> bool {
        self.orderings.iter().all(|r| is_permutation(r, self.num_terms))
    }
}

/// Grid of 1-based term labels, one row per Trotter step. Serialized as a
/// bare JSON array of string arrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathTable(pub Vec<Vec<String>>);

const TABLE2_JSON: &str = include_str!("../../fixtures/tfim_n4_beta0.9_path.json");
const TABLE4_JSON: &str = include_str!("../../fixtures/sk_n6_beta5_path.json");

impl PathTable {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("schedule file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<String> = self
            .0
            .iter()
            .map(|r| serde_json::to_string(r).expect("string rows serialize"))
            .collect();
        format!("[\n  {}\n]\n", rows.join(",\n  "))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Published optimized paths shipped with the crate: `table2` (TFIM,
    /// N = 4, β = 0.9) and `table4` (six-qubit SK, β = 5).
    pub fn bundled(name: &str) -> Result<Self> {
        match name {
            "table2" => Self::from_json(TABLE2_JSON),
            "table4" => Self::from_json(TABLE4_JSON),
            other => Err(Error::Parse(format!("no bundled path named {other:?}"))),
        }
    }

    pub fn bundled_names() -> &'static [&'static str] {
        &["table2", "table4"]
    }
}

/// Every row is the identity permutation over the Hamiltonian's term order.
pub fn standard_schedule(h: &Hamiltonian, n: usize) -> Result<OrderingSchedule> {
    let m = h.num_terms();
    OrderingSchedule::new(m, vec![(0..m).collect(); n])
}

/// Each row an independent shuffle drawn from a generator seeded with `seed`.
pub fn randomized_schedule(h: &Hamiltonian, n: usize, seed: u64) -> Result<OrderingSchedule> {
    let m = h.num_terms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<usize> = (0..m).collect();
            row.shuffle(&mut rng);
            row
        })
        .collect();
    OrderingSchedule::new(m, rows)
}

/// Resolves a label grid against the Hamiltonian's canonical term list.
pub fn replay_schedule(table: &PathTable, h: &Hamiltonian) -> Result<OrderingSchedule> {
    let rows = table
        .0
        .iter()
        .enumerate()
        .map(|(s, row)| {
            row.iter()
                .map(|label| {
                    h.term_index(label).ok_or_else(|| {
                        Error::Parse(format!("unknown term label {label:?} in step {}", s + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    OrderingSchedule::new(h.num_terms(), rows).map_err(|e| Error::Parse(e.to_string()))
}
