//! Subset sums `Σ_[K], Σ_[K]\{K}, ..., Σ_[K]\{3}` together with `W_1` pin
//! down every input. This is why a dropout-tolerant user key has to be as
//! large as it is.
//!
//! cargo run --example reconstruct_inputs

use oblivious_aggregation::protocol::{reconstruct_inputs, subset_sums};
use oblivious_aggregation::{FieldSpec, FieldVector};

fn main() {
    let field = FieldSpec::new(7).unwrap();
    let inputs: Vec<FieldVector> = [1, 2, 3]
        .iter()
        .map(|&w| FieldVector::new(field, vec![w]).unwrap())
        .collect();
    let sums = subset_sums(&inputs).unwrap();
    println!("inputs {:?}", inputs.iter().map(|v| v.to_string()).collect::<Vec<_>>());
    println!("sums   {:?}", sums.iter().map(|v| v.to_string()).collect::<Vec<_>>());
    let back = reconstruct_inputs(&inputs[0], &sums).unwrap();
    println!("back   {:?}", back.iter().map(|v| v.to_string()).collect::<Vec<_>>());
    assert_eq!(back, inputs);
}
