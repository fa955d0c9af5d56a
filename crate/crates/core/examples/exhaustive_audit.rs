//! Exact audit of both shipped schemes at q=3, K=3, L=1 (729 states each).
//!
//! cargo run --release --example exhaustive_audit

use std::collections::BTreeSet;

use oblivious_aggregation::auditor::{audit, check_collusion_nodropout, AuditPlan, Budget};
use oblivious_aggregation::dealer::UserId;
use oblivious_aggregation::{FieldSpec, Scheme, SessionParams, StandardScheme};

fn main() {
    let field = FieldSpec::new(3).unwrap();
    for scheme in [Scheme::NoDropout, Scheme::DropoutTolerant] {
        let params = SessionParams::new(3, field, 1, scheme).unwrap();
        let report = audit(&StandardScheme::new(params), &AuditPlan::default(), Budget::default()).unwrap();
        print!("{}", report.to_text());
        println!();
    }

    let params = SessionParams::new(3, field, 1, Scheme::NoDropout).unwrap();
    let scheme = StandardScheme::new(params);
    for colluders in [BTreeSet::from([UserId(3)]), BTreeSet::from([UserId(2), UserId(3)])] {
        let e = check_collusion_nodropout(&scheme, &colluders, Budget::default()).unwrap();
        println!("{} -> {}", e.name, e.verdict.label());
    }

    let too_big = SessionParams::new(3, FieldSpec::new(7).unwrap(), 4, Scheme::NoDropout).unwrap();
    println!(
        "{}",
        audit(&StandardScheme::new(too_big), &AuditPlan::default(), Budget::default()).unwrap_err()
    );
}
