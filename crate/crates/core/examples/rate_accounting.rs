//! Measured rates against the optimal corner for K = 2..8.
//!
//! cargo run --example rate_accounting

use oblivious_aggregation::auditor::{planted, Budget};
use oblivious_aggregation::rates::{verify_optimality, verify_scheme};
use oblivious_aggregation::{FieldSpec, Scheme, SessionParams};

fn main() {
    let field = FieldSpec::new(257).unwrap();
    println!(
        "{:<10} {:>2} {:>22} {:>22}  verdict",
        "scheme", "K", "measured", "optimal"
    );
    for scheme in [Scheme::NoDropout, Scheme::DropoutTolerant] {
        for k in 2..=8 {
            let r = verify_optimality(&SessionParams::new(k, field, 4, scheme).unwrap()).unwrap();
            println!(
                "{:<10} {:>2} {:>22} {:>22}  {}",
                scheme.to_string(),
                k,
                r.measured.to_string(),
                r.optimal.to_string(),
                r.verdict.label()
            );
        }
    }

    let small = SessionParams::new(2, FieldSpec::new(2).unwrap(), 1, Scheme::NoDropout).unwrap();
    let r = verify_scheme(&planted::padded_key(small), Budget::default()).unwrap();
    println!(
        "\npadded key: measured {} vs {} -> {}",
        r.measured,
        r.optimal,
        r.verdict.label()
    );
}
