//! Dropout-tolerant aggregation: user 2 never sends, user 4 sends and then
//! disappears. The remaining survivors learn the sum over U = {1,3,4}.
//!
//! cargo run --example dropout_session

use oblivious_aggregation::dealer::UserId;
use oblivious_aggregation::transport::{expected_sum, run_session, DropPlan};
use oblivious_aggregation::{FieldSpec, FieldVector, Scheme, SessionParams};

fn main() {
    let field = FieldSpec::new(97).unwrap();
    let params = SessionParams::new(4, field, 2, Scheme::DropoutTolerant).unwrap();
    let inputs: Vec<FieldVector> = (1..=4u64)
        .map(|k| FieldVector::new(field, vec![k, 10 * k]).unwrap())
        .collect();

    let plan = DropPlan::before_send([UserId(2)]).with_after_send([UserId(4)]);
    let outcome = run_session(&params, &inputs, &plan, 7).unwrap();

    println!("U = {}", outcome.survivors);
    println!(
        "left after sending: {:?}",
        outcome.departed.iter().map(|u| u.get()).collect::<Vec<_>>()
    );
    println!("oracle: {}", expected_sum(&inputs, &outcome.survivors).unwrap());
    for (user, sum) in outcome.sums() {
        println!("user {user} decoded {sum}");
    }

    // the no-dropout scheme refuses the same plan
    let strict = SessionParams::new(4, field, 2, Scheme::NoDropout).unwrap();
    let err = run_session(&strict, &inputs, &plan, 7).unwrap_err();
    println!("no-dropout scheme: {err}");
}
