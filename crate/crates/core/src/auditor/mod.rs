//! Exact verification of the security, entropy and correctness constraints
//! by enumerating every input and noise assignment at small parameters.
//!
//! Every check reduces to integer count identities over a [`JointCensus`];
//! there are no tolerances anywhere in this module.

pub mod census;
pub mod leakage;
pub mod planted;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::dealer::{Scheme, SessionParams, UserId};
use crate::protocol::{AggregationScheme, ProtocolError, SurvivorSet};

pub use census::{
    conditional_independence, enumerate, enumerate_in_order, first_violation, state_count, uniform_within_cells,
    JointCensus, Observation, TestOutcome, World,
};
pub use leakage::{preset_leakage, sum_leakage, LeakageError, LeakagePreset, LeakageTable};
pub use report::{AuditEntry, AuditReport, Counterexample, Verdict};

pub const DEFAULT_BUDGET: u64 = 1 << 26;
pub const BUDGET_ENV: &str = "OBAGG_AUDIT_BUDGET";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("enumeration needs {} states, budget is {budget}", match .required { Some(n) => n.to_string(), None => "more than 2^128".into() })]
    BudgetExceeded { required: Option<u128>, budget: u64 },
    #[error("colluder set must be a nonempty proper subset of the users: {0}")]
    InvalidColluders(String),
    #[error(
        "collusion is audited only for the no-dropout scheme; the dropout-tolerant keys reveal every input to any user"
    )]
    CollusionRequiresNoDropout,
    #[error("user {user} is not in the survivor set {survivors}")]
    NotASurvivor { user: UserId, survivors: SurvivorSet },
    #[error("invalid {BUDGET_ENV} value {0:?}")]
    BadBudget(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Upper bound on enumerated states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget(pub u64);

impl Default for Budget {
    fn default() -> Self {
        Budget(DEFAULT_BUDGET)
    }
}

impl Budget {
    /// Default budget, overridden by `OBAGG_AUDIT_BUDGET` when set.
    pub fn from_env() -> Result<Self, AuditError> {
        match std::env::var(BUDGET_ENV) {
            Ok(v) => v.trim().parse().map(Budget).map_err(|_| AuditError::BadBudget(v)),
            Err(_) => Ok(Budget::default()),
        }
    }

    /// The state count if it fits, otherwise a refusal naming it.
    pub fn admit(self, params: &SessionParams) -> Result<u64, AuditError> {
        let required = state_count(params);
        match required {
            Some(n) if n <= self.0 as u128 => Ok(n as u64),
            _ => Err(AuditError::BudgetExceeded {
                required,
                budget: self.0,
            }),
        }
    }
}

fn entry(name: impl Into<String>, anchor: &str, out: TestOutcome, detail: Option<String>) -> AuditEntry {
    AuditEntry {
        name: name.into(),
        anchor: anchor.into(),
        verdict: out.verdict,
        cells_examined: out.cells,
        comparisons: out.comparisons,
        detail,
        counterexample: out.counterexample,
    }
}

fn flat<'a>(vs: impl IntoIterator<Item = &'a crate::field::FieldVector>) -> Vec<u64> {
    vs.into_iter().flat_map(|v| v.elems().iter().copied()).collect()
}

fn survivor_messages<K>(world: &World<K>, survivors: &SurvivorSet) -> BTreeMap<UserId, crate::field::FieldVector> {
    survivors.ids().iter().map(|&u| (u, world.message(u).clone())).collect()
}

/// The server's view `(X_1..X_K)` is independent of the inputs.
pub fn check_server_security<S: AggregationScheme>(scheme: &S, budget: Budget) -> Result<AuditEntry, AuditError> {
    let census = enumerate(scheme, budget, |w| {
        Ok(Observation {
            condition: Vec::new(),
            target: flat(&w.inputs),
            observed: flat(&w.messages),
        })
    })?;
    Ok(entry(
        "server-security",
        "I(W_1..W_K; X_1..X_K) = 0",
        conditional_independence(&census),
        None,
    ))
}

/// Survivor sets a scheme must serve: the full set only for the no-dropout
/// scheme, every nonempty subset otherwise.
pub fn survivor_sets(params: &SessionParams) -> Vec<SurvivorSet> {
    match params.scheme() {
        Scheme::NoDropout => vec![SurvivorSet::full(params.users())],
        Scheme::DropoutTolerant => SurvivorSet::all_nonempty(params.users()).collect(),
    }
}

/// Given `(Σ_{u∈U} W_u, W_k, Z_k)`, user `k`'s reply says nothing more about
/// the inputs.
pub fn check_user_security<S: AggregationScheme>(
    scheme: &S,
    user: UserId,
    survivors: &SurvivorSet,
    budget: Budget,
) -> Result<AuditEntry, AuditError> {
    let params = scheme.params();
    params.check_user(user).map_err(ProtocolError::from)?;
    if !survivors.contains(user) {
        return Err(AuditError::NotASurvivor {
            user,
            survivors: survivors.clone(),
        });
    }
    if params.scheme() == Scheme::NoDropout && !survivors.is_full(params.users()) {
        return Err(ProtocolError::DroppedUserUnderNoDropoutScheme {
            missing: survivors.missing(params.users()),
        }
        .into());
    }
    let census = enumerate(scheme, budget, |w| {
        let target_sum = crate::field::FieldVector::sum(survivors.ids().iter().map(|&u| w.input(u)))?;
        let mut condition = target_sum.into_elems();
        condition.extend_from_slice(w.input(user).elems());
        condition.extend(scheme.key_symbols(w.key(user)));
        let reply = scheme.reply(user, survivors, &survivor_messages(w, survivors))?;
        Ok(Observation {
            condition,
            target: flat(&w.inputs),
            observed: reply.into_elems(),
        })
    })?;
    Ok(entry(
        format!("user-security k={user} U={survivors}"),
        "I(W_1..W_K; Y_k^U | sum_U W, W_k, Z_k) = 0",
        conditional_independence(&census),
        None,
    ))
}

/// The three entropy identities, as uniformity of exact counts.
pub fn check_entropy_identities<S: AggregationScheme>(
    scheme: &S,
    budget: Budget,
) -> Result<Vec<AuditEntry>, AuditError> {
    let params = scheme.params();
    let q = params.field().modulus() as u128;
    let per_message = q.pow(params.len() as u32);
    let mut out = Vec::new();

    // (a) every user's message carries a full L symbols given everything else
    let mut worst: Option<AuditEntry> = None;
    let (mut cells, mut comparisons) = (0, 0);
    for u in params.user_ids() {
        let census = enumerate(scheme, budget, |w| {
            let mut condition = scheme.key_symbols(w.key(u));
            for k in params.user_ids().filter(|&k| k != u) {
                condition.extend_from_slice(w.input(k).elems());
                condition.extend(scheme.key_symbols(w.key(k)));
            }
            Ok(Observation {
                condition,
                target: w.message(u).elems().to_vec(),
                observed: Vec::new(),
            })
        })?;
        let (res, _) = uniform_within_cells(&census, per_message, false);
        cells += res.cells;
        comparisons += res.comparisons;
        if res.verdict == Verdict::Fail {
            worst = Some(entry(
                "entropy-message-given-rest",
                "H(X_u | Z_u, (W_k, Z_k)_{k!=u}) = L",
                res,
                Some(format!("user {u}")),
            ));
            break;
        }
    }
    out.push(worst.unwrap_or(AuditEntry {
        name: "entropy-message-given-rest".into(),
        anchor: "H(X_u | Z_u, (W_k, Z_k)_{k!=u}) = L".into(),
        verdict: Verdict::Pass,
        cells_examined: cells,
        comparisons,
        detail: Some(format!("every user, {per_message} equally likely values per cell")),
        counterexample: None,
    }));

    // (b) X_1 given Z_1
    let first = UserId(1);
    let census = enumerate(scheme, budget, |w| {
        Ok(Observation {
            condition: scheme.key_symbols(w.key(first)),
            target: w.message(first).elems().to_vec(),
            observed: Vec::new(),
        })
    })?;
    let (res, hist) = uniform_within_cells(&census, per_message, true);
    out.push(entry(
        "entropy-message-given-key",
        "H(X_1 | Z_1) >= L",
        res,
        Some(support_detail(&hist)),
    ));

    // (c) the tuple of all messages
    let census = enumerate(scheme, budget, |w| {
        Ok(Observation {
            condition: Vec::new(),
            target: flat(&w.messages),
            observed: Vec::new(),
        })
    })?;
    let all_messages = q.pow((params.users() * params.len()) as u32);
    let (res, hist) = uniform_within_cells(&census, all_messages, true);
    out.push(entry(
        "entropy-all-messages",
        "H(X_1..X_K) >= KL",
        res,
        Some(support_detail(&hist)),
    ));
    Ok(out)
}

fn support_detail(hist: &BTreeMap<u64, u64>) -> String {
    hist.iter()
        .map(|(distinct, cells)| format!("{cells} cell(s) with {distinct} equally likely values"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Given the sum and the colluders' inputs and keys, the whole server view
/// and the reply say nothing about the other users' inputs.
pub fn check_collusion_nodropout<S: AggregationScheme>(
    scheme: &S,
    colluders: &BTreeSet<UserId>,
    budget: Budget,
) -> Result<AuditEntry, AuditError> {
    let params = scheme.params();
    if params.scheme() != Scheme::NoDropout {
        return Err(AuditError::CollusionRequiresNoDropout);
    }
    if colluders.is_empty() || colluders.len() >= params.users() {
        return Err(AuditError::InvalidColluders(format!(
            "{} of {} users",
            colluders.len(),
            params.users()
        )));
    }
    if let Some(u) = colluders.iter().find(|u| params.check_user(**u).is_err()) {
        return Err(AuditError::InvalidColluders(format!("user {u} does not exist")));
    }
    let full = SurvivorSet::full(params.users());
    // the reply is the same for every recipient in this scheme
    let recipient = *colluders.iter().next().unwrap();
    let census = enumerate(scheme, budget, |w| {
        let mut condition = crate::field::FieldVector::sum(&w.inputs)?.into_elems();
        for &c in colluders {
            condition.extend_from_slice(w.input(c).elems());
            condition.extend(scheme.key_symbols(w.key(c)));
        }
        let mut observed = flat(&w.messages);
        observed.extend(
            scheme
                .reply(recipient, &full, &survivor_messages(w, &full))?
                .into_elems(),
        );
        Ok(Observation {
            condition,
            target: flat(params.user_ids().filter(|k| !colluders.contains(k)).map(|k| w.input(k))),
            observed,
        })
    })?;
    let names: Vec<String> = colluders.iter().map(|c| c.to_string()).collect();
    Ok(entry(
        format!("collusion C={{{}}}", names.join(",")),
        "I(W_notC; X, Y | sum W, (W_c, Z_c)_C) = 0",
        conditional_independence(&census),
        None,
    ))
}

/// Every survivor decodes `Σ_{u∈U} W_u` in every state, for every `U`.
pub fn check_correctness<S: AggregationScheme>(
    scheme: &S,
    sets: &[SurvivorSet],
    budget: Budget,
) -> Result<AuditEntry, AuditError> {
    let total = budget.admit(scheme.params())?;
    let found = first_violation(scheme, budget, |w| {
        for u in sets {
            let expected = crate::field::FieldVector::sum(u.ids().iter().map(|&k| w.input(k)))?;
            let received = survivor_messages(w, u);
            for &k in u.ids() {
                let reply = scheme.reply(k, u, &received)?;
                let got = scheme.decode(k, w.input(k), w.key(k), u, &reply)?;
                if got != expected {
                    return Ok(Some(Counterexample {
                        condition: u.ids().iter().map(|id| id.get() as u64).collect(),
                        target: expected.into_elems(),
                        observed: got.into_elems(),
                        lhs: k.get() as u128,
                        rhs: w.index as u128,
                        note: format!("user {k} decoded the wrong sum over U={u} in state {}", w.index),
                    }));
                }
            }
        }
        Ok(None)
    })?;
    Ok(AuditEntry {
        name: "correctness".into(),
        anchor: "H(sum_U W | Y_k^U, W_k, Z_k) = 0".into(),
        verdict: if found.is_some() { Verdict::Fail } else { Verdict::Pass },
        cells_examined: total,
        comparisons: total * sets.iter().map(|u| u.len() as u64).sum::<u64>(),
        detail: Some(format!("{} survivor set(s)", sets.len())),
        counterexample: found.map(|(_, c)| c),
    })
}

/// What [`audit`] covers.
#[derive(Debug, Clone, Default)]
pub struct AuditPlan {
    /// Survivor sets for user security and correctness; `None` means every
    /// set the scheme must serve.
    pub survivors: Option<Vec<SurvivorSet>>,
    pub colluders: Option<BTreeSet<UserId>>,
}

/// Runs every check and collects one report.
pub fn audit<S: AggregationScheme>(scheme: &S, plan: &AuditPlan, budget: Budget) -> Result<AuditReport, AuditError> {
    let params = scheme.params();
    let states = budget.admit(params)?;
    let sets = plan.survivors.clone().unwrap_or_else(|| survivor_sets(params));
    let mut entries = vec![check_server_security(scheme, budget)?];
    for u in &sets {
        for &k in u.ids() {
            entries.push(check_user_security(scheme, k, u, budget)?);
        }
    }
    entries.extend(check_entropy_identities(scheme, budget)?);
    if let Some(c) = &plan.colluders {
        entries.push(check_collusion_nodropout(scheme, c, budget)?);
    }
    entries.push(check_correctness(scheme, &sets, budget)?);
    Ok(AuditReport {
        scheme: scheme.name().to_string(),
        modulus: params.field().modulus(),
        users: params.users(),
        len: params.len(),
        states,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use crate::protocol::StandardScheme;

    fn params(k: usize, q: u64, scheme: Scheme) -> SessionParams {
        SessionParams::new(k, FieldSpec::new(q).unwrap(), 1, scheme).unwrap()
    }

    fn set(ids: &[u32], users: usize) -> SurvivorSet {
        SurvivorSet::new(ids.iter().map(|&i| UserId(i)), users).unwrap()
    }

    #[test]
    fn server_security_examples() {
        let b = Budget::default();
        let s = StandardScheme::new(params(2, 2, Scheme::NoDropout));
        let e = check_server_security(&s, b).unwrap();
        assert_eq!(e.verdict, Verdict::Pass);
        let s = StandardScheme::new(params(3, 3, Scheme::DropoutTolerant));
        assert_eq!(check_server_security(&s, b).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn planted_noise_reuse_fails_with_counterexample() {
        let s = planted::noise_reuse(params(2, 2, Scheme::NoDropout));
        let e = check_server_security(&s, Budget::default()).unwrap();
        assert_eq!(e.verdict, Verdict::Fail);
        let cx = e.counterexample.unwrap();
        assert_ne!(cx.lhs, cx.rhs);
        let s = planted::reply_mask_reuse(params(2, 2, Scheme::NoDropout));
        assert_eq!(
            check_server_security(&s, Budget::default()).unwrap().verdict,
            Verdict::Fail
        );
    }

    #[test]
    fn planted_schemes_still_decode() {
        for scheme in [Scheme::NoDropout, Scheme::DropoutTolerant] {
            let p = params(3, 3, scheme);
            let sets = survivor_sets(&p);
            for e in [
                check_correctness(&planted::noise_reuse(p), &sets, Budget::default()).unwrap(),
                check_correctness(&planted::reply_mask_reuse(p), &sets, Budget::default()).unwrap(),
            ] {
                assert_eq!(e.verdict, Verdict::Pass, "{scheme}");
            }
        }
    }

    #[test]
    fn user_security_examples() {
        let b = Budget::default();
        let s = StandardScheme::new(params(2, 2, Scheme::NoDropout));
        let e = check_user_security(&s, UserId(1), &set(&[1, 2], 2), b).unwrap();
        // with two users the sum and W_1 pin W_2
        assert_eq!(e.verdict, Verdict::PassDegenerate);
        let s = StandardScheme::new(params(3, 3, Scheme::DropoutTolerant));
        let e = check_user_security(&s, UserId(3), &set(&[1, 3], 3), b).unwrap();
        assert_eq!(e.verdict, Verdict::Pass);
    }

    #[test]
    fn user_security_preconditions() {
        let b = Budget::default();
        let s = StandardScheme::new(params(3, 2, Scheme::NoDropout));
        assert!(matches!(
            check_user_security(&s, UserId(1), &set(&[1, 3], 3), b),
            Err(AuditError::Protocol(
                ProtocolError::DroppedUserUnderNoDropoutScheme { .. }
            ))
        ));
        assert!(matches!(
            check_user_security(&s, UserId(2), &set(&[1, 3], 3), b),
            Err(AuditError::NotASurvivor { .. })
        ));
    }

    #[test]
    fn entropy_identity_examples() {
        let b = Budget::default();
        for p in [params(2, 2, Scheme::NoDropout), params(2, 3, Scheme::DropoutTolerant)] {
            let entries = check_entropy_identities(&StandardScheme::new(p), b).unwrap();
            assert_eq!(entries.len(), 3);
            assert!(entries.iter().all(|e| e.verdict == Verdict::Pass), "{entries:?}");
        }
        let s = StandardScheme::new(params(3, 2, Scheme::NoDropout));
        let census = enumerate(&s, b, |w| {
            Ok(Observation {
                target: flat(&w.messages),
                ..Default::default()
            })
        })
        .unwrap();
        let (res, hist) = uniform_within_cells(&census, 8, false);
        assert_eq!(res.verdict, Verdict::Pass);
        assert_eq!(hist, BTreeMap::from([(8, 1)]));
        assert!(census.counts().values().all(|&n| n == 8));
    }

    #[test]
    fn collusion_examples() {
        let b = Budget::default();
        let s = StandardScheme::new(params(3, 2, Scheme::NoDropout));
        let e = check_collusion_nodropout(&s, &BTreeSet::from([UserId(3)]), b).unwrap();
        assert_eq!(e.verdict, Verdict::Pass);
        let s = StandardScheme::new(params(3, 3, Scheme::NoDropout));
        let e = check_collusion_nodropout(&s, &BTreeSet::from([UserId(2), UserId(3)]), b).unwrap();
        assert_eq!(e.verdict, Verdict::PassDegenerate);
        let d = StandardScheme::new(params(3, 3, Scheme::DropoutTolerant));
        assert_eq!(
            check_collusion_nodropout(&d, &BTreeSet::from([UserId(3)]), b),
            Err(AuditError::CollusionRequiresNoDropout)
        );
        assert!(matches!(
            check_collusion_nodropout(&s, &BTreeSet::new(), b),
            Err(AuditError::InvalidColluders(_))
        ));
        assert!(matches!(
            check_collusion_nodropout(&s, &BTreeSet::from([UserId(1), UserId(2), UserId(3)]), b),
            Err(AuditError::InvalidColluders(_))
        ));
    }

    #[test]
    fn dropout_keys_leak_to_colluders() {
        // a single dropout-tolerant key holds every N_k, so the colluder
        // reads every input straight off the messages
        let p = params(2, 2, Scheme::DropoutTolerant);
        let s = StandardScheme::new(p);
        let census = enumerate(&s, Budget::default(), |w| {
            let mut condition = w.inputs[0].elems().to_vec();
            condition.extend(s.key_symbols(&w.keys[0]));
            Ok(Observation {
                condition,
                target: w.inputs[1].elems().to_vec(),
                observed: flat(&w.messages),
            })
        })
        .unwrap();
        assert_eq!(conditional_independence(&census).verdict, Verdict::Fail);
    }

    #[test]
    fn budget_guard() {
        let p = SessionParams::new(3, FieldSpec::new(7).unwrap(), 4, Scheme::NoDropout).unwrap();
        let err = Budget::default().admit(&p).unwrap_err();
        assert_eq!(
            err,
            AuditError::BudgetExceeded {
                required: Some(7u128.pow(24)),
                budget: DEFAULT_BUDGET
            }
        );
        assert_eq!(Budget(16).admit(&params(2, 2, Scheme::NoDropout)), Ok(16));
        assert!(Budget(15).admit(&params(2, 2, Scheme::NoDropout)).is_err());
    }

    #[test]
    fn enumeration_is_order_independent() {
        let s = StandardScheme::new(params(2, 3, Scheme::DropoutTolerant));
        let obs = |w: &World<_>| {
            Ok(Observation {
                condition: w.inputs[0].elems().to_vec(),
                target: flat(&w.inputs),
                observed: flat(&w.messages),
            })
        };
        let parallel = enumerate(&s, Budget::default(), obs).unwrap();
        let reversed = enumerate_in_order(&s, Budget::default(), (0..81).rev(), obs).unwrap();
        // a fixed stride coprime to 81 visits every state once
        let strided = enumerate_in_order(&s, Budget::default(), (0..81u64).map(|i| (i * 40) % 81), obs).unwrap();
        assert_eq!(parallel, reversed);
        assert_eq!(parallel, strided);
        assert_eq!(parallel.total(), 81);
    }

    #[test]
    fn full_audit_report() {
        let s = StandardScheme::new(params(3, 3, Scheme::DropoutTolerant));
        let plan = AuditPlan {
            survivors: Some(vec![set(&[1, 3], 3)]),
            colluders: None,
        };
        let r = audit(&s, &plan, Budget::default()).unwrap();
        assert!(r.all_pass(), "{}", r.to_text());
        assert_eq!(r.states, 729);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["entries"][0]["name"], "server-security");
        assert_eq!(json["entries"][0]["verdict"], "pass");
    }
}
