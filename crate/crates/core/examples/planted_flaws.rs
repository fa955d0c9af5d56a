//! Flawed schemes that still decode correctly but leak to the server.
//!
//! cargo run --example planted_flaws

use oblivious_aggregation::auditor::{check_correctness, check_server_security, planted, survivor_sets, Budget};
use oblivious_aggregation::{AggregationScheme, FieldSpec, Scheme, SessionParams};

fn show<S: AggregationScheme>(scheme: &S) {
    let sets = survivor_sets(scheme.params());
    let ok = check_correctness(scheme, &sets, Budget::default()).unwrap();
    let sec = check_server_security(scheme, Budget::default()).unwrap();
    println!(
        "{}: correctness {}, server security {}",
        scheme.name(),
        ok.verdict.label(),
        sec.verdict.label()
    );
    if let Some(c) = sec.counterexample {
        println!(
            "  W={:?} X={:?}: {} != {} ({})",
            c.target, c.observed, c.lhs, c.rhs, c.note
        );
    }
}

fn main() {
    let params = SessionParams::new(2, FieldSpec::new(2).unwrap(), 1, Scheme::NoDropout).unwrap();
    show(&planted::noise_reuse(params));
    show(&planted::reply_mask_reuse(params));
    show(&planted::padded_key(params));
}
