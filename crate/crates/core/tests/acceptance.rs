//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Every criterion is exact; there are no
//! tolerances.

use std::time::{Duration, Instant};

use num_rational::Ratio;
use oblivious_aggregation::auditor::{
    self, check_entropy_identities, check_server_security, check_user_security, enumerate, planted, preset_leakage,
    survivor_sets, AuditPlan, Budget, LeakagePreset, Observation, Verdict,
};
use oblivious_aggregation::dealer::UserId;
use oblivious_aggregation::protocol::{reconstruct_inputs, subset_sums, PhaseOneMsg, PhaseTwoMsg};
use oblivious_aggregation::rates::{measure_rates, optimal_region, RateTuple};
use oblivious_aggregation::transport::codec::{hello_frame, phase_one_frame, phase_two_frame};
use oblivious_aggregation::transport::{
    decode_phase_one, decode_phase_two, run_session, DropPlan, Frame, FrameType, SessionHello,
};
use oblivious_aggregation::{
    AggregationScheme, FieldSpec, FieldVector, Scheme, SessionParams, StandardScheme, SurvivorSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

const P63: u64 = 9223372036854775783;
const SCHEMES: [Scheme; 2] = [Scheme::NoDropout, Scheme::DropoutTolerant];

fn params(k: usize, q: u64, l: usize, scheme: Scheme) -> SessionParams {
    SessionParams::new(k, FieldSpec::new(q).unwrap(), l, scheme).unwrap()
}

fn grid() -> Vec<SessionParams> {
    let mut out = Vec::new();
    for q in [2, 3, 5] {
        for k in [2, 3] {
            for scheme in SCHEMES {
                out.push(params(k, q, 1, scheme));
            }
        }
    }
    out
}

fn within(start: Instant, limit: Duration, summary: String) -> Outcome {
    let took = start.elapsed();
    if took > limit {
        Err(format!("{summary}, but took {took:.2?} (limit {limit:?})"))
    } else {
        Ok(format!("{summary} in {took:.2?}"))
    }
}

fn security_audits() -> Outcome {
    let start = Instant::now();
    let budget = Budget::default();
    let (mut pass, mut degenerate) = (0, 0);
    for p in grid() {
        let s = StandardScheme::new(p);
        let mut entries = vec![check_server_security(&s, budget).map_err(|e| e.to_string())?];
        for u in survivor_sets(&p) {
            for &k in u.ids() {
                entries.push(check_user_security(&s, k, &u, budget).map_err(|e| e.to_string())?);
            }
        }
        for e in entries {
            match e.verdict {
                Verdict::Pass => pass += 1,
                Verdict::PassDegenerate => degenerate += 1,
                Verdict::Fail => {
                    return Err(format!(
                        "{} failed at q={} K={} {}",
                        e.name,
                        p.field().modulus(),
                        p.users(),
                        p.scheme()
                    ))
                }
            }
        }
    }
    within(
        start,
        Duration::from_secs(10),
        format!("{pass} exact passes, {degenerate} degenerate passes"),
    )
}

fn entropy_identities() -> Outcome {
    let budget = Budget::default();
    let mut checked = 0;
    for p in grid() {
        let s = StandardScheme::new(p);
        for e in check_entropy_identities(&s, budget).map_err(|e| e.to_string())? {
            if e.verdict != Verdict::Pass {
                return Err(format!("{} {:?} at {p:?}", e.name, e.verdict));
            }
            checked += 1;
        }
        // the message tuple is uniform on exactly q^{KL} values
        let census = enumerate(&s, budget, |w| {
            Ok(Observation {
                target: w.messages.iter().flat_map(|m| m.elems().to_vec()).collect(),
                ..Default::default()
            })
        })
        .map_err(|e| e.to_string())?;
        let q = p.field().modulus();
        let cells = q.pow((p.users() * p.len()) as u32);
        let per_cell = census.total() / cells;
        if census.counts().len() as u64 != cells || census.counts().values().any(|&n| n != per_cell) {
            return Err(format!(
                "message tuple census has {} cells, expected {cells}",
                census.counts().len()
            ));
        }
    }
    Ok(format!("{checked} identities, message tuples uniform on q^(KL) cells"))
}

fn oracle_sum(inputs: &[Vec<u64>], survivors: &SurvivorSet, q: u64) -> Vec<u64> {
    let len = inputs[0].len();
    (0..len)
        .map(|i| {
            let s: u128 = survivors.ids().iter().map(|u| inputs[u.index()][i] as u128).sum();
            (s % q as u128) as u64
        })
        .collect()
}

fn correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let combos: Vec<(usize, u64, usize)> = [2, 3, 5, 8]
        .iter()
        .flat_map(|&k| {
            [2, 97, P63]
                .into_iter()
                .flat_map(move |q| [1, 16].into_iter().map(move |l| (k, q, l)))
        })
        .collect();
    let (mut sessions, mut decodes) = (0u64, 0u64);
    for n in 0..10_000u64 {
        let (k, q, l) = combos[n as usize % combos.len()];
        let scheme = SCHEMES[(n / combos.len() as u64) as usize % 2];
        let p = params(k, q, l, scheme);
        let raw: Vec<Vec<u64>> = (0..k).map(|_| (0..l).map(|_| rng.gen_range(0..q)).collect()).collect();
        let inputs: Vec<FieldVector> = raw
            .iter()
            .map(|w| FieldVector::new(p.field(), w.clone()).unwrap())
            .collect();
        let plan = match scheme {
            Scheme::NoDropout => DropPlan::none(),
            Scheme::DropoutTolerant => loop {
                let plan = DropPlan::random(&p, 0.3, &mut rng);
                if plan.before_send.len() < k {
                    let stays: Vec<UserId> = p.user_ids().filter(|u| !plan.before_send.contains(u)).collect();
                    let leaves = stays.iter().copied().filter(|_| rng.gen_bool(0.1));
                    break plan.clone().with_after_send(leaves);
                }
            },
        };
        let outcome = run_session(&p, &inputs, &plan, n).map_err(|e| format!("session {n}: {e}"))?;
        let expected = oracle_sum(&raw, &outcome.survivors, q);
        let present = outcome.survivors.len() - outcome.departed.len();
        if outcome.decoded.len() != present {
            return Err(format!(
                "session {n}: {} of {present} present survivors decoded",
                outcome.decoded.len()
            ));
        }
        for (user, r) in &outcome.decoded {
            match r {
                Ok(v) if v.elems() == expected.as_slice() => decodes += 1,
                other => return Err(format!("session {n} user {user}: {other:?}, oracle {expected:?}")),
            }
        }
        sessions += 1;
    }
    within(
        start,
        Duration::from_secs(30),
        format!("{sessions} sessions, {decodes} decoded sums match the oracle"),
    )
}

fn rate_optimality() -> Outcome {
    for k in 2..=8 {
        for scheme in SCHEMES {
            let expected = match scheme {
                Scheme::NoDropout => RateTuple::from_integers(1, 1, 2, k as u64),
                Scheme::DropoutTolerant => RateTuple::from_integers(1, 1, k as u64, k as u64),
            };
            if optimal_region(k, scheme).unwrap() != expected {
                return Err(format!("optimal region for K={k} {scheme}"));
            }
            for l in [1, 5] {
                let m = measure_rates(&params(k, 257, l, scheme)).map_err(|e| e.to_string())?;
                if m != expected {
                    return Err(format!("K={k} L={l} {scheme}: measured {m}, expected {expected}"));
                }
            }
        }
    }
    Ok("measured (R_X,R_Y,R_Z,R_Zsigma) equals the optimum for K=2..8".into())
}

fn input_reconstruction() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let moduli = [2, 3, 97, 65537, P63];
    for n in 0..1000 {
        let k = rng.gen_range(2..=6);
        let q = moduli[rng.gen_range(0..moduli.len())];
        let l = rng.gen_range(1..=4);
        let f = FieldSpec::new(q).unwrap();
        let raw: Vec<Vec<u64>> = (0..k).map(|_| (0..l).map(|_| rng.gen_range(0..q)).collect()).collect();
        let w: Vec<FieldVector> = raw.iter().map(|v| FieldVector::new(f, v.clone()).unwrap()).collect();
        // forward map computed directly: full sum, then leave out K, K-1, ..., 3
        let expect: Vec<Vec<u64>> = std::iter::once(None)
            .chain((3..=k).rev().map(Some))
            .map(|skip| {
                (0..l)
                    .map(|i| {
                        let s: u128 = (1..=k)
                            .filter(|&u| Some(u) != skip)
                            .map(|u| raw[u - 1][i] as u128)
                            .sum();
                        (s % q as u128) as u64
                    })
                    .collect()
            })
            .collect();
        let sums = subset_sums(&w).map_err(|e| e.to_string())?;
        if sums.iter().map(|s| s.elems().to_vec()).collect::<Vec<_>>() != expect {
            return Err(format!("instance {n}: forward map differs from direct sums"));
        }
        if reconstruct_inputs(&w[0], &sums).map_err(|e| e.to_string())? != w {
            return Err(format!("instance {n}: reconstruction failed for K={k} q={q}"));
        }
    }
    Ok("1000 random instances reconstructed".into())
}

fn detection<S: AggregationScheme>(scheme: &S) -> Result<String, String> {
    let r = auditor::audit(scheme, &AuditPlan::default(), Budget::default()).map_err(|e| e.to_string())?;
    let fails: Vec<_> = r
        .failures()
        .filter(|e| e.counterexample.as_ref().is_some_and(|c| c.lhs != c.rhs))
        .collect();
    if fails.is_empty() {
        return Err(format!("{} passed every audit", scheme.name()));
    }
    Ok(format!("{}: {} FAIL ({})", scheme.name(), fails.len(), fails[0].name))
}

fn detection_power() -> Outcome {
    let p = params(2, 2, 1, Scheme::NoDropout);
    let a = detection(&planted::noise_reuse(p))?;
    let b = detection(&planted::reply_mask_reuse(p))?;
    Ok(format!("{a}; {b}"))
}

fn leakage() -> Outcome {
    let t = preset_leakage(LeakagePreset::ThreeUser);
    if t.rows.len() != 27 || !t.fully_invertible() {
        return Err("three-user preset is not fully invertible".into());
    }
    let b = preset_leakage(LeakagePreset::BinaryF3);
    let p = b.posterior(2, &[1, 1]);
    if p != Ratio::from_integer(1) {
        return Err(format!("P(W1=W2=1 | sum=2) = {p}"));
    }
    Ok("27/27 sums deterministic; P(W1=W2=1 | sum=2) = 1".into())
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn wire_format() -> Outcome {
    let p1 = params(8, 257, 2, Scheme::DropoutTolerant);
    let f = Frame::decode(&fixture("phase_one.bin")).map_err(|e| e.to_string())?;
    let m =
        decode_phase_one(f.expect(FrameType::PhaseOne).map_err(|e| e.to_string())?, &p1).map_err(|e| e.to_string())?;
    if m.user != UserId(7) || m.payload.elems() != [255, 256] {
        return Err(format!("phase-one fixture decoded to {m:?}"));
    }
    let p2 = params(3, 5, 1, Scheme::DropoutTolerant);
    let f = Frame::decode(&fixture("phase_two.bin")).map_err(|e| e.to_string())?;
    let m =
        decode_phase_two(f.expect(FrameType::PhaseTwo).map_err(|e| e.to_string())?, &p2).map_err(|e| e.to_string())?;
    if m.survivors.ids() != [UserId(1), UserId(3)] || m.payload.elems() != [0] {
        return Err(format!("phase-two fixture decoded to {m:?}"));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(88);
    let moduli = [2, 3, 5, 251, 257, 65537, 4294967311, P63];
    for n in 0..100_000 {
        let k = rng.gen_range(2..=12);
        let q = moduli[rng.gen_range(0..moduli.len())];
        let l = rng.gen_range(1..=8);
        let scheme = SCHEMES[rng.gen_range(0..2)];
        let p = params(k, q, l, scheme);
        let v = FieldVector::sample_uniform(p.field(), l, &mut rng);
        let ok = match n % 3 {
            0 => {
                let m = PhaseOneMsg {
                    user: UserId(rng.gen_range(1..=k as u32)),
                    payload: v,
                };
                let f = Frame::decode(&phase_one_frame(&m, &p).encode()).map_err(|e| e.to_string())?;
                decode_phase_one(&f.payload, &p).ok() == Some(m) && f.kind == FrameType::PhaseOne
            }
            1 => {
                let ids: Vec<UserId> = p.user_ids().filter(|_| rng.gen_bool(0.5)).collect();
                let survivors = if ids.is_empty() {
                    SurvivorSet::full(k)
                } else {
                    SurvivorSet::new(ids, k).unwrap()
                };
                let m = PhaseTwoMsg { survivors, payload: v };
                let f = Frame::decode(&phase_two_frame(&m, &p).encode()).map_err(|e| e.to_string())?;
                decode_phase_two(&f.payload, &p).ok() == Some(m) && f.kind == FrameType::PhaseTwo
            }
            _ => {
                let f = Frame::decode(&hello_frame(&p).encode()).map_err(|e| e.to_string())?;
                SessionHello::decode(&f.payload).and_then(|h| h.to_params(false)).ok() == Some(p)
            }
        };
        if !ok {
            return Err(format!("frame {n} did not round-trip (K={k} q={q} L={l})"));
        }
    }
    Ok("fixtures decode bit-exactly; 100000 random frames round-trip".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 exact security audits", security_audits),
        ("2 entropy identities", entropy_identities),
        ("3 correctness against oracle", correctness),
        ("4 rate optimality", rate_optimality),
        ("5 input reconstruction", input_reconstruction),
        ("6 detection power", detection_power),
        ("7 leakage demonstrations", leakage),
        ("8 wire format", wire_format),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(msg) => println!("PASS  {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
