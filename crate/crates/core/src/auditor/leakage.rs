//! What the plain sum reveals about the inputs when they are not uniform
//! over the whole field.
//!
//! Inputs are independent and uniform over small per-user alphabets. The
//! posterior `P(W_1..W_K | Σ W = s)` is computed exactly by enumeration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::field::{FieldError, FieldSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LeakageError {
    #[error("at least 2 alphabets are required, got {0}")]
    TooFewUsers(usize),
    #[error("alphabet of user {0} is empty")]
    EmptyAlphabet(usize),
    #[error("alphabet of user {user} repeats the value {value}")]
    DuplicateSymbol { user: usize, value: u64 },
    #[error("alphabet of user {user} contains {value}, which is not a residue mod {modulus}")]
    OutOfField { user: usize, value: u64, modulus: u64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakagePreset {
    /// `{0,1,2}`, `{0,10,20}`, `{0,100,200}` over `F_1009`.
    ThreeUser,
    /// `{0,1}`, `{0,1}` over `F_3`.
    BinaryF3,
}

impl LeakagePreset {
    pub fn alphabets(self) -> (Vec<Vec<u64>>, u64) {
        match self {
            LeakagePreset::ThreeUser => (vec![vec![0, 1, 2], vec![0, 10, 20], vec![0, 100, 200]], 1009),
            LeakagePreset::BinaryF3 => (vec![vec![0, 1], vec![0, 1]], 3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LeakagePreset::ThreeUser => "three-user",
            LeakagePreset::BinaryF3 => "binary-f3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PosteriorRow {
    pub sum: u64,
    /// `P(Σ W = sum)`.
    #[serde(serialize_with = "ser_ratio")]
    pub probability: Ratio<u64>,
    /// Input tuples consistent with the sum, each with its posterior.
    #[serde(serialize_with = "ser_posterior")]
    pub posterior: Vec<(Vec<u64>, Ratio<u64>)>,
    pub deterministic: bool,
}

fn ser_ratio<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn ser_posterior<S: serde::Serializer>(p: &[(Vec<u64>, Ratio<u64>)], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(p.len()))?;
    for (inputs, r) in p {
        seq.serialize_element(&(inputs, r.to_string()))?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeakageTable {
    pub modulus: u64,
    pub alphabets: Vec<Vec<u64>>,
    pub rows: Vec<PosteriorRow>,
}

impl LeakageTable {
    pub fn row(&self, sum: u64) -> Option<&PosteriorRow> {
        self.rows.iter().find(|r| r.sum == sum)
    }

    /// `P(W = inputs | Σ W = sum)`; zero when inconsistent.
    pub fn posterior(&self, sum: u64, inputs: &[u64]) -> Ratio<u64> {
        self.row(sum)
            .and_then(|r| r.posterior.iter().find(|(w, _)| w == inputs))
            .map(|(_, p)| *p)
            .unwrap_or_else(|| Ratio::from_integer(0))
    }

    /// True when every achievable sum pins the inputs exactly.
    pub fn fully_invertible(&self) -> bool {
        self.rows.iter().all(|r| r.deterministic)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "sum leakage over F_{} with alphabets {:?}",
            self.modulus, self.alphabets
        );
        for row in &self.rows {
            let _ = write!(out, "sum={:<5} P={:<8}", row.sum, row.probability.to_string());
            for (w, p) in &row.posterior {
                let _ = write!(out, " {w:?}:{p}");
            }
            if row.deterministic {
                out.push_str("  <- inputs fully determined");
            }
            out.push('\n');
        }
        out
    }
}

pub fn sum_leakage(alphabets: &[Vec<u64>], modulus: u64) -> Result<LeakageTable, LeakageError> {
    let field = FieldSpec::new(modulus)?;
    if alphabets.len() < 2 {
        return Err(LeakageError::TooFewUsers(alphabets.len()));
    }
    for (i, a) in alphabets.iter().enumerate() {
        let user = i + 1;
        if a.is_empty() {
            return Err(LeakageError::EmptyAlphabet(user));
        }
        let mut seen = a.clone();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(LeakageError::DuplicateSymbol { user, value: w[0] });
        }
        if let Some(&value) = a.iter().find(|&&v| !field.contains(v)) {
            return Err(LeakageError::OutOfField { user, value, modulus });
        }
    }

    let total: u64 = alphabets.iter().map(|a| a.len() as u64).product();
    let mut by_sum: BTreeMap<u64, Vec<Vec<u64>>> = BTreeMap::new();
    let mut index = vec![0usize; alphabets.len()];
    loop {
        let tuple: Vec<u64> = index.iter().zip(alphabets).map(|(&i, a)| a[i]).collect();
        let sum = tuple.iter().fold(0, |acc, &w| field.add(acc, w));
        by_sum.entry(sum).or_default().push(tuple);
        // odometer step
        let mut pos = 0;
        loop {
            if pos == index.len() {
                let rows = by_sum
                    .into_iter()
                    .map(|(sum, tuples)| {
                        let n = tuples.len() as u64;
                        PosteriorRow {
                            sum,
                            probability: Ratio::new(n, total),
                            deterministic: n == 1,
                            posterior: tuples.into_iter().map(|t| (t, Ratio::new(1, n))).collect(),
                        }
                    })
                    .collect();
                return Ok(LeakageTable {
                    modulus,
                    alphabets: alphabets.to_vec(),
                    rows,
                });
            }
            index[pos] += 1;
            if index[pos] < alphabets[pos].len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
    }
}

pub fn preset_leakage(preset: LeakagePreset) -> LeakageTable {
    let (alphabets, q) = preset.alphabets();
    sum_leakage(&alphabets, q).expect("presets are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_user_preset_is_invertible() {
        let t = preset_leakage(LeakagePreset::ThreeUser);
        assert_eq!(t.rows.len(), 27);
        assert!(t.fully_invertible());
        assert_eq!(t.posterior(221, &[1, 20, 200]), Ratio::from_integer(1));
    }

    #[test]
    fn binary_over_f3() {
        let t = preset_leakage(LeakagePreset::BinaryF3);
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.posterior(2, &[1, 1]), Ratio::from_integer(1));
        assert_eq!(t.posterior(0, &[0, 0]), Ratio::from_integer(1));
        assert_eq!(t.posterior(1, &[0, 1]), Ratio::new(1, 2));
        assert_eq!(t.row(1).unwrap().probability, Ratio::new(1, 2));
        assert!(!t.fully_invertible());
    }

    #[test]
    fn wraparound_merges_sums() {
        // over F_2 the sum of {0,1}+{0,1} hides which input is 1, and 1+1 = 0
        let t = sum_leakage(&[vec![0, 1], vec![0, 1]], 2).unwrap();
        assert_eq!(t.posterior(0, &[1, 1]), Ratio::new(1, 2));
        assert!(t.rows.iter().all(|r| !r.deterministic));
    }

    #[test]
    fn validation() {
        assert_eq!(sum_leakage(&[vec![0, 1]], 3), Err(LeakageError::TooFewUsers(1)));
        assert_eq!(sum_leakage(&[vec![0], vec![]], 3), Err(LeakageError::EmptyAlphabet(2)));
        assert_eq!(
            sum_leakage(&[vec![0, 0], vec![1]], 3),
            Err(LeakageError::DuplicateSymbol { user: 1, value: 0 })
        );
        assert_eq!(
            sum_leakage(&[vec![0], vec![3]], 3),
            Err(LeakageError::OutOfField {
                user: 2,
                value: 3,
                modulus: 3
            })
        );
        assert!(matches!(
            sum_leakage(&[vec![0], vec![1]], 4),
            Err(LeakageError::Field(_))
        ));
    }
}
