//! Symbol accounting against the optimal rate regions.
//!
//! Lengths are measured from serialized artifacts: phase-one and phase-two
//! payloads from the wire codec and keys from the key-file format, with the
//! fixed framing fields subtracted. A scheme that pads anything shows up as
//! a larger rate.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::auditor::{self, survivor_sets, AuditError, AuditPlan, Budget};
use crate::dealer::{encode_key_file, generate_source_key, parse_key_file, Scheme, SessionParams};
use crate::field::FieldVector;
use crate::protocol::{AggregationScheme, PhaseOneMsg, PhaseTwoMsg, ProtocolError, StandardScheme, SurvivorSet};
use crate::transport::{encode_phase_one, encode_phase_two};

pub type Rate = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RateError {
    #[error("at least 2 users are required, got {0}")]
    TooFewUsers(usize),
    #[error("input length must be at least 1")]
    ZeroLength,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

/// Measured symbol counts per session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Lengths {
    pub l: u64,
    pub l_x: u64,
    pub l_y: u64,
    pub l_z: u64,
    pub l_z_sigma: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateTuple {
    pub x: Rate,
    pub y: Rate,
    pub z: Rate,
    pub z_sigma: Rate,
}

impl RateTuple {
    pub fn from_integers(x: u64, y: u64, z: u64, z_sigma: u64) -> Self {
        Self {
            x: Rate::from_integer(x),
            y: Rate::from_integer(y),
            z: Rate::from_integer(z),
            z_sigma: Rate::from_integer(z_sigma),
        }
    }

    pub fn from_lengths(len: &Lengths) -> Result<Self, RateError> {
        if len.l == 0 {
            return Err(RateError::ZeroLength);
        }
        Ok(Self {
            x: Rate::new(len.l_x, len.l),
            y: Rate::new(len.l_y, len.l),
            z: Rate::new(len.l_z, len.l),
            z_sigma: Rate::new(len.l_z_sigma, len.l),
        })
    }

    fn components(&self) -> [Rate; 4] {
        [self.x, self.y, self.z, self.z_sigma]
    }

    /// Componentwise `self >= other`.
    pub fn dominates(&self, other: &RateTuple) -> bool {
        self.components().iter().zip(other.components()).all(|(a, b)| *a >= b)
    }
}

impl fmt::Display for RateTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.z, self.z_sigma)
    }
}

impl Serialize for RateTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<&str, String> = [
            ("R_X", self.x.to_string()),
            ("R_Y", self.y.to_string()),
            ("R_Z", self.z.to_string()),
            ("R_Z_sigma", self.z_sigma.to_string()),
        ]
        .into_iter()
        .collect();
        m.serialize(s)
    }
}

/// Lower corner of the optimal region: `(1, 1, 2, K)` without dropouts,
/// `(1, 1, K, K)` with them.
pub fn optimal_region(users: usize, scheme: Scheme) -> Result<RateTuple, RateError> {
    if users < 2 {
        return Err(RateError::TooFewUsers(users));
    }
    let k = users as u64;
    Ok(match scheme {
        Scheme::NoDropout => RateTuple::from_integers(1, 1, 2, k),
        Scheme::DropoutTolerant => RateTuple::from_integers(1, 1, k, k),
    })
}

/// Survivor sets whose replies get measured. All of them when there are few
/// users, otherwise the full set, every set missing one user and every
/// singleton.
fn measured_sets(params: &SessionParams) -> Vec<SurvivorSet> {
    let k = params.users();
    if params.scheme() == Scheme::NoDropout || k <= 10 {
        return survivor_sets(params);
    }
    let mut sets = vec![SurvivorSet::full(k)];
    for u in params.user_ids() {
        sets.push(SurvivorSet::new(params.user_ids().filter(|&v| v != u), k).expect("nonempty"));
        sets.push(SurvivorSet::new([u], k).expect("nonempty"));
    }
    sets
}

fn key_file_symbols(params: &SessionParams, holder: u32, symbols: Vec<u64>) -> u64 {
    let flat = FieldVector::new(params.field(), symbols).expect("key symbols are residues");
    let bytes = encode_key_file(params, holder, &flat);
    let (_, body) = parse_key_file(&bytes).expect("freshly encoded");
    (body.len() / params.field().element_bytes()) as u64
}

/// Measures the maximal serialized length of each artifact of one seeded
/// session run through `scheme`.
pub fn measure_lengths<S: AggregationScheme>(scheme: &S, seed: u64) -> Result<Lengths, RateError> {
    let params = scheme.params();
    let eb = params.field().element_bytes();
    let mut rng = crate::transport::sim::key_rng(seed);
    let src = generate_source_key(params, &mut rng);
    let inputs: Vec<FieldVector> = params
        .user_ids()
        .map(|_| FieldVector::sample_uniform(params.field(), params.len(), &mut rng))
        .collect();

    let mut l = Lengths {
        l: params.len() as u64,
        l_x: 0,
        l_y: 0,
        l_z: 0,
        l_z_sigma: key_file_symbols(params, 0, src.symbols()),
    };
    let mut messages = BTreeMap::new();
    for user in params.user_ids() {
        let key = scheme.user_key(&src, user)?;
        l.l_z = l
            .l_z
            .max(key_file_symbols(params, user.get(), scheme.key_symbols(&key)));
        let payload = scheme.phase_one(user, &inputs[user.index()], &key)?;
        let bytes = encode_phase_one(
            &PhaseOneMsg {
                user,
                payload: payload.clone(),
            },
            params,
        );
        l.l_x = l.l_x.max(((bytes.len() - 4) / eb) as u64);
        messages.insert(user, payload);
    }
    for survivors in measured_sets(params) {
        let received: BTreeMap<_, _> = survivors.ids().iter().map(|&u| (u, messages[&u].clone())).collect();
        for &user in survivors.ids() {
            let payload = scheme.reply(user, &survivors, &received)?;
            let framing = 4 + 4 * survivors.len();
            let bytes = encode_phase_two(
                &PhaseTwoMsg {
                    survivors: survivors.clone(),
                    payload,
                },
                params,
            );
            l.l_y = l.l_y.max(((bytes.len() - framing) / eb) as u64);
        }
    }
    Ok(l)
}

pub fn measure_rates(params: &SessionParams) -> Result<RateTuple, RateError> {
    RateTuple::from_lengths(&measure_lengths(&StandardScheme::new(*params), 0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateVerdict {
    /// Meets every bound with equality.
    Optimal,
    /// Above some bound, with every exact audit passing.
    SuboptimalValid,
    /// Below a bound, or above one without passing audits.
    Invalid,
}

impl RateVerdict {
    pub fn label(self) -> &'static str {
        match self {
            RateVerdict::Optimal => "OK",
            RateVerdict::SuboptimalValid => "SUBOPTIMAL",
            RateVerdict::Invalid => "INVALID",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RateReport {
    pub scheme: String,
    pub users: usize,
    pub len: usize,
    pub measured: RateTuple,
    pub optimal: RateTuple,
    pub verdict: RateVerdict,
}

impl RateReport {
    pub fn is_optimal(&self) -> bool {
        self.verdict == RateVerdict::Optimal
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rates scheme={} K={} L={}", self.scheme, self.users, self.len);
        let _ = writeln!(out, "{:<10} {:>10} {:>10}", "", "measured", "optimal");
        let rows = [
            ("R_X", self.measured.x, self.optimal.x),
            ("R_Y", self.measured.y, self.optimal.y),
            ("R_Z", self.measured.z, self.optimal.z),
            ("R_Z_sigma", self.measured.z_sigma, self.optimal.z_sigma),
        ];
        for (name, m, o) in rows {
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10}{}",
                name,
                m.to_string(),
                o.to_string(),
                if m == o { "" } else { "  *" }
            );
        }
        let _ = writeln!(out, "verdict: {}", self.verdict.label());
        out
    }
}

/// Grades a measured tuple. `audits_pass` only matters when the tuple lies
/// strictly above the bound.
pub fn grade(measured: &RateTuple, optimal: &RateTuple, audits_pass: bool) -> RateVerdict {
    if measured == optimal {
        RateVerdict::Optimal
    } else if measured.dominates(optimal) && audits_pass {
        RateVerdict::SuboptimalValid
    } else {
        RateVerdict::Invalid
    }
}

/// Checks a shipped scheme's measured rates against the optimal corner.
pub fn verify_optimality(params: &SessionParams) -> Result<RateReport, RateError> {
    let measured = measure_rates(params)?;
    let optimal = optimal_region(params.users(), params.scheme())?;
    Ok(RateReport {
        scheme: params.scheme().to_string(),
        users: params.users(),
        len: params.len(),
        measured,
        optimal,
        // a shipped scheme off the corner is a bug, whatever the audits say
        verdict: grade(&measured, &optimal, false),
    })
}

/// Grades any scheme, running the exact audit when its rates are above the
/// bound.
pub fn verify_scheme<S: AggregationScheme>(scheme: &S, budget: Budget) -> Result<RateReport, RateError> {
    let params = scheme.params();
    let measured = RateTuple::from_lengths(&measure_lengths(scheme, 0)?)?;
    let optimal = optimal_region(params.users(), params.scheme())?;
    let audits_pass = if measured != optimal && measured.dominates(&optimal) {
        auditor::audit(scheme, &AuditPlan::default(), budget)?.all_pass()
    } else {
        false
    };
    Ok(RateReport {
        scheme: scheme.name().to_string(),
        users: params.users(),
        len: params.len(),
        measured,
        optimal,
        verdict: grade(&measured, &optimal, audits_pass),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auditor::planted;
    use crate::field::FieldSpec;

    fn params(k: usize, q: u64, l: usize, scheme: Scheme) -> SessionParams {
        SessionParams::new(k, FieldSpec::new(q).unwrap(), l, scheme).unwrap()
    }

    #[test]
    fn measured_examples() {
        assert_eq!(
            measure_rates(&params(4, 257, 8, Scheme::NoDropout)).unwrap(),
            RateTuple::from_integers(1, 1, 2, 4)
        );
        assert_eq!(
            measure_rates(&params(4, 257, 8, Scheme::DropoutTolerant)).unwrap(),
            RateTuple::from_integers(1, 1, 4, 4)
        );
        assert_eq!(
            measure_rates(&params(2, 2, 1, Scheme::NoDropout)).unwrap(),
            RateTuple::from_integers(1, 1, 2, 2)
        );
    }

    #[test]
    fn region_examples() {
        assert_eq!(
            optimal_region(2, Scheme::NoDropout).unwrap(),
            RateTuple::from_integers(1, 1, 2, 2)
        );
        assert_eq!(
            optimal_region(5, Scheme::DropoutTolerant).unwrap(),
            RateTuple::from_integers(1, 1, 5, 5)
        );
        assert_eq!(
            optimal_region(2, Scheme::DropoutTolerant).unwrap(),
            optimal_region(2, Scheme::NoDropout).unwrap()
        );
        assert_eq!(optimal_region(1, Scheme::NoDropout), Err(RateError::TooFewUsers(1)));
    }

    #[test]
    fn shipped_schemes_are_optimal() {
        for k in 2..=6 {
            for scheme in [Scheme::NoDropout, Scheme::DropoutTolerant] {
                let r = verify_optimality(&params(k, 97, 3, scheme)).unwrap();
                assert!(r.is_optimal(), "{}", r.to_text());
            }
        }
    }

    #[test]
    fn rates_do_not_depend_on_length() {
        for scheme in [Scheme::NoDropout, Scheme::DropoutTolerant] {
            let a = measure_rates(&params(3, 5, 1, scheme)).unwrap();
            for l in [2, 7, 16] {
                assert_eq!(measure_rates(&params(3, 5, l, scheme)).unwrap(), a);
            }
        }
    }

    #[test]
    fn tampered_reply_length_is_rejected() {
        let tampered = Lengths {
            l: 8,
            l_x: 8,
            l_y: 7,
            l_z: 16,
            l_z_sigma: 32,
        };
        let measured = RateTuple::from_lengths(&tampered).unwrap();
        assert_eq!(measured.y, Rate::new(7, 8));
        let optimal = optimal_region(4, Scheme::NoDropout).unwrap();
        assert_eq!(grade(&measured, &optimal, true), RateVerdict::Invalid);
    }

    #[test]
    fn padded_key_is_suboptimal_but_valid() {
        let p = params(2, 2, 1, Scheme::NoDropout);
        let r = verify_scheme(&planted::padded_key(p), Budget::default()).unwrap();
        assert_eq!(r.measured, RateTuple::from_integers(1, 1, 3, 2));
        assert_eq!(r.verdict, RateVerdict::SuboptimalValid);

        let p = params(3, 2, 1, Scheme::DropoutTolerant);
        let r = verify_scheme(&planted::padded_key(p), Budget::default()).unwrap();
        assert_eq!(r.measured.z, Rate::from_integer(4));
        assert_eq!(r.verdict, RateVerdict::SuboptimalValid);
    }

    #[test]
    fn rate_report_renders() {
        let r = verify_optimality(&params(5, 97, 2, Scheme::DropoutTolerant)).unwrap();
        let text = r.to_text();
        assert!(text.contains("verdict: OK"));
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["measured"]["R_Z"], "5");
        assert_eq!(json["verdict"], "optimal");
    }
}
