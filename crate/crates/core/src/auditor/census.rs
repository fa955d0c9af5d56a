//! Exhaustive enumeration of the probability space and exact count tests.
//!
//! The space is every assignment of inputs `W_1..W_K` and source noise
//! `N_1..N_K`, i.e. `q^{2KL}` equally likely states. An observable maps a
//! state to a triple `(condition, target, observed)` of symbol tuples, and a
//! [`JointCensus`] counts how often each triple occurs.
//!
//! Conditional independence of target and observed given the condition is
//! checked by cross-multiplication within each conditioning cell:
//! `n(a,b,c) * n(c) == n(a,c) * n(b,c)` for every `a`, `b` seen in cell `c`.
//! Pairs that never co-occur count as `n(a,b,c) = 0` and still have to
//! satisfy the identity.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::report::{Counterexample, Verdict};
use super::{AuditError, Budget};
use crate::dealer::{SessionParams, SourceKey, UserId};
use crate::field::FieldVector;
use crate::protocol::{AggregationScheme, ProtocolError};

pub type Symbols = Vec<u64>;

/// One enumerated state with everything derived from it.
#[derive(Debug, Clone)]
pub struct World<K> {
    pub index: u64,
    pub inputs: Vec<FieldVector>,
    pub source: SourceKey,
    pub keys: Vec<K>,
    pub messages: Vec<FieldVector>,
}

impl<K> World<K> {
    pub fn input(&self, user: UserId) -> &FieldVector {
        &self.inputs[user.index()]
    }

    pub fn key(&self, user: UserId) -> &K {
        &self.keys[user.index()]
    }

    pub fn message(&self, user: UserId) -> &FieldVector {
        &self.messages[user.index()]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    pub condition: Symbols,
    pub target: Symbols,
    pub observed: Symbols,
}

/// Exact occurrence counts of observation triples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JointCensus {
    total: u64,
    counts: BTreeMap<Observation, u64>,
}

impl JointCensus {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<Observation, u64> {
        &self.counts
    }

    pub fn record(&mut self, obs: Observation) {
        self.total += 1;
        *self.counts.entry(obs).or_insert(0) += 1;
    }

    /// Adds `other` into `self`; associative and commutative.
    pub fn merge(mut self, other: JointCensus) -> JointCensus {
        if self.counts.len() < other.counts.len() {
            return other.merge(self);
        }
        self.total += other.total;
        for (k, n) in other.counts {
            *self.counts.entry(k).or_insert(0) += n;
        }
        self
    }

    fn cells(&self) -> BTreeMap<&Symbols, Cell<'_>> {
        let mut cells: BTreeMap<&Symbols, Cell<'_>> = BTreeMap::new();
        for (obs, &n) in &self.counts {
            let cell = cells.entry(&obs.condition).or_default();
            cell.total += n;
            *cell.target.entry(&obs.target).or_insert(0) += n;
            *cell.observed.entry(&obs.observed).or_insert(0) += n;
            cell.joint.insert((&obs.target, &obs.observed), n);
        }
        cells
    }
}

#[derive(Default)]
struct Cell<'a> {
    total: u64,
    target: BTreeMap<&'a Symbols, u64>,
    observed: BTreeMap<&'a Symbols, u64>,
    joint: BTreeMap<(&'a Symbols, &'a Symbols), u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestOutcome {
    pub verdict: Verdict,
    /// Conditioning cells visited.
    pub cells: u64,
    /// Count identities evaluated.
    pub comparisons: u64,
    pub counterexample: Option<Counterexample>,
}

/// Exact test of `target ⫫ observed | condition`.
///
/// Reports [`Verdict::PassDegenerate`] when the condition pins the target in
/// every cell, which makes the independence vacuous.
pub fn conditional_independence(census: &JointCensus) -> TestOutcome {
    let mut comparisons = 0u64;
    let mut degenerate = true;
    let cells = census.cells();
    for (cond, cell) in &cells {
        if cell.target.len() > 1 {
            degenerate = false;
        }
        for (a, &na) in &cell.target {
            for (b, &nb) in &cell.observed {
                comparisons += 1;
                let nab = cell.joint.get(&(*a, *b)).copied().unwrap_or(0);
                let lhs = nab as u128 * cell.total as u128;
                let rhs = na as u128 * nb as u128;
                if lhs != rhs {
                    return TestOutcome {
                        verdict: Verdict::Fail,
                        cells: cells.len() as u64,
                        comparisons,
                        counterexample: Some(Counterexample {
                            condition: (*cond).clone(),
                            target: (*a).clone(),
                            observed: (*b).clone(),
                            lhs,
                            rhs,
                            note: format!(
                                "n(target,observed,cell)={nab}, n(cell)={}, n(target,cell)={na}, n(observed,cell)={nb}",
                                cell.total
                            ),
                        }),
                    };
                }
            }
        }
    }
    TestOutcome {
        verdict: if degenerate {
            Verdict::PassDegenerate
        } else {
            Verdict::Pass
        },
        cells: cells.len() as u64,
        comparisons,
        counterexample: None,
    }
}

/// Exact uniformity test: within every conditioning cell the target takes
/// `support` distinct values (at least `support` when `at_least` is set),
/// all with the same count.
pub fn uniform_within_cells(census: &JointCensus, support: u128, at_least: bool) -> (TestOutcome, BTreeMap<u64, u64>) {
    let cells = census.cells();
    let mut comparisons = 0;
    // distinct-value count -> number of cells with that count
    let mut support_histogram = BTreeMap::new();
    for (cond, cell) in &cells {
        let distinct = cell.target.len() as u64;
        *support_histogram.entry(distinct).or_insert(0) += 1;
        let support_ok = if at_least {
            distinct as u128 >= support
        } else {
            distinct as u128 == support
        };
        let (first, &first_n) = cell.target.iter().next().expect("cells are nonempty");
        if !support_ok {
            return (
                TestOutcome {
                    verdict: Verdict::Fail,
                    cells: cells.len() as u64,
                    comparisons,
                    counterexample: Some(Counterexample {
                        condition: (*cond).clone(),
                        target: (*first).clone(),
                        observed: Vec::new(),
                        lhs: distinct as u128,
                        rhs: support,
                        note: format!(
                            "cell supports {distinct} values, need {}{support}",
                            if at_least { ">= " } else { "" }
                        ),
                    }),
                },
                support_histogram,
            );
        }
        for (value, &n) in &cell.target {
            comparisons += 1;
            if n != first_n {
                return (
                    TestOutcome {
                        verdict: Verdict::Fail,
                        cells: cells.len() as u64,
                        comparisons,
                        counterexample: Some(Counterexample {
                            condition: (*cond).clone(),
                            target: (*value).clone(),
                            observed: (*first).clone(),
                            lhs: n as u128,
                            rhs: first_n as u128,
                            note: "unequal counts within cell".into(),
                        }),
                    },
                    support_histogram,
                );
            }
        }
    }
    (
        TestOutcome {
            verdict: Verdict::Pass,
            cells: cells.len() as u64,
            comparisons,
            counterexample: None,
        },
        support_histogram,
    )
}

/// Number of states in the enumeration, `q^{2KL}`, or `None` on overflow.
pub fn state_count(params: &SessionParams) -> Option<u128> {
    let exponent = u32::try_from(2 * params.users() * params.len()).ok()?;
    (params.field().modulus() as u128).checked_pow(exponent)
}

pub(crate) fn build_world<S: AggregationScheme>(scheme: &S, index: u64) -> Result<World<S::Key>, ProtocolError> {
    let params = scheme.params();
    let q = params.field().modulus();
    let (users, len) = (params.users(), params.len());
    let mut digits = Vec::with_capacity(2 * users * len);
    let mut rest = index;
    for _ in 0..2 * users * len {
        digits.push(rest % q);
        rest /= q;
    }
    let vectors = |d: &[u64]| -> Vec<FieldVector> {
        d.chunks(len)
            .map(|c| FieldVector::new(params.field(), c.to_vec()).expect("digits are residues"))
            .collect()
    };
    let inputs = vectors(&digits[..users * len]);
    let source = SourceKey::from_noise(params, vectors(&digits[users * len..]))?;
    let keys = params
        .user_ids()
        .map(|k| scheme.user_key(&source, k))
        .collect::<Result<Vec<_>, _>>()?;
    let messages = params
        .user_ids()
        .map(|k| scheme.phase_one(k, &inputs[k.index()], &keys[k.index()]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(World {
        index,
        inputs,
        source,
        keys,
        messages,
    })
}

const CHUNK: u64 = 1 << 12;

/// Counts `observe` over the whole space, in parallel.
pub fn enumerate<S, F>(scheme: &S, budget: Budget, observe: F) -> Result<JointCensus, AuditError>
where
    S: AggregationScheme,
    F: Fn(&World<S::Key>) -> Result<Observation, ProtocolError> + Sync,
{
    let total = budget.admit(scheme.params())?;
    let census = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut local = JointCensus::default();
            for index in chunk * CHUNK..((chunk + 1) * CHUNK).min(total) {
                local.record(observe(&build_world(scheme, index)?)?);
            }
            Ok::<_, ProtocolError>(local)
        })
        .try_reduce(JointCensus::default, |a, b| Ok(a.merge(b)))?;
    Ok(census)
}

/// Single-threaded enumeration over an explicit index order.
pub fn enumerate_in_order<S, F, I>(scheme: &S, budget: Budget, order: I, observe: F) -> Result<JointCensus, AuditError>
where
    S: AggregationScheme,
    F: Fn(&World<S::Key>) -> Result<Observation, ProtocolError>,
    I: IntoIterator<Item = u64>,
{
    let total = budget.admit(scheme.params())?;
    let mut census = JointCensus::default();
    for index in order {
        assert!(index < total, "state index {index} outside the space");
        census.record(observe(&build_world(scheme, index)?)?);
    }
    Ok(census)
}

/// Lowest-indexed state for which `check` reports a problem.
pub fn first_violation<S, F>(scheme: &S, budget: Budget, check: F) -> Result<Option<(u64, Counterexample)>, AuditError>
where
    S: AggregationScheme,
    F: Fn(&World<S::Key>) -> Result<Option<Counterexample>, ProtocolError> + Sync,
{
    let total = budget.admit(scheme.params())?;
    let found = (0..total)
        .into_par_iter()
        .map(|index| {
            build_world(scheme, index)
                .and_then(|w| check(&w))
                .map(|c| c.map(|c| (index, c)))
        })
        .find_map_first(|r| match r {
            Ok(None) => None,
            other => Some(other),
        });
    match found {
        None => Ok(None),
        Some(r) => Ok(r?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn census(rows: &[(&[u64], &[u64], &[u64], u64)]) -> JointCensus {
        let mut c = JointCensus::default();
        for &(cond, a, b, n) in rows {
            for _ in 0..n {
                c.record(Observation {
                    condition: cond.to_vec(),
                    target: a.to_vec(),
                    observed: b.to_vec(),
                });
            }
        }
        c
    }

    #[test]
    fn independent_table_passes() {
        let c = census(&[
            (&[], &[0], &[0], 2),
            (&[], &[0], &[1], 2),
            (&[], &[1], &[0], 2),
            (&[], &[1], &[1], 2),
        ]);
        let out = conditional_independence(&c);
        assert_eq!(out.verdict, Verdict::Pass);
        assert_eq!(out.comparisons, 4);
    }

    #[test]
    fn missing_pair_is_caught() {
        // a determines b: (0,0) and (1,1) only
        let c = census(&[(&[], &[0], &[0], 1), (&[], &[1], &[1], 1)]);
        let out = conditional_independence(&c);
        assert_eq!(out.verdict, Verdict::Fail);
        let cx = out.counterexample.unwrap();
        assert_eq!((cx.lhs, cx.rhs), (2, 1));
    }

    #[test]
    fn conditioning_can_restore_independence() {
        let c = census(&[(&[0], &[0], &[0], 1), (&[1], &[1], &[1], 1)]);
        assert_eq!(conditional_independence(&c).verdict, Verdict::PassDegenerate);
    }

    #[test]
    fn uniformity() {
        let c = census(&[(&[], &[0], &[], 3), (&[], &[1], &[], 3), (&[], &[2], &[], 3)]);
        assert_eq!(uniform_within_cells(&c, 3, false).0.verdict, Verdict::Pass);
        assert_eq!(uniform_within_cells(&c, 2, true).0.verdict, Verdict::Pass);
        assert_eq!(uniform_within_cells(&c, 4, true).0.verdict, Verdict::Fail);
        let skew = census(&[(&[], &[0], &[], 3), (&[], &[1], &[], 1)]);
        let (out, _) = uniform_within_cells(&skew, 2, false);
        assert_eq!(out.verdict, Verdict::Fail);
        assert_eq!(out.counterexample.unwrap().note, "unequal counts within cell");
    }

    #[test]
    fn merge_is_order_free() {
        let a = census(&[(&[], &[0], &[1], 2)]);
        let b = census(&[(&[], &[0], &[1], 1), (&[], &[1], &[1], 5)]);
        let c = census(&[(&[1], &[0], &[0], 3)]);
        let left = a.clone().merge(b.clone()).merge(c.clone());
        let right = c.merge(b.merge(a));
        assert_eq!(left, right);
        assert_eq!(left.total(), 11);
    }
}
