//! Three users aggregate over F_257 with everyone present.
//!
//! cargo run --example basic_session

use oblivious_aggregation::transport::{run_session, DropPlan};
use oblivious_aggregation::{FieldSpec, FieldVector, Scheme, SessionParams};

fn main() {
    let field = FieldSpec::new(257).unwrap();
    let params = SessionParams::new(3, field, 4, Scheme::NoDropout).unwrap();
    let inputs: Vec<FieldVector> = [[1, 2, 3, 4], [10, 20, 30, 40], [250, 250, 250, 250]]
        .iter()
        .map(|w| FieldVector::new(field, w.to_vec()).unwrap())
        .collect();

    let outcome = run_session(&params, &inputs, &DropPlan::none(), 42).unwrap();
    println!("survivors: {}", outcome.survivors);
    for (user, sum) in outcome.sums() {
        println!("user {user} learned {sum}");
    }
}
