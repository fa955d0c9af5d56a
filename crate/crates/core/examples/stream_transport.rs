//! The same session over loopback TCP, one thread per user.
//!
//! cargo run --example stream_transport

use oblivious_aggregation::dealer::UserId;
use oblivious_aggregation::transport::{run_session_tcp, DropPlan};
use oblivious_aggregation::{FieldSpec, FieldVector, Scheme, SessionParams};

fn main() {
    let field = FieldSpec::new(9223372036854775783).unwrap();
    let params = SessionParams::new(5, field, 3, Scheme::DropoutTolerant)
        .unwrap()
        .with_broadcast_reply(true);
    let inputs: Vec<FieldVector> = (0..5u64)
        .map(|k| FieldVector::new(field, vec![k, u64::MAX / 3, 9223372036854775782]).unwrap())
        .collect();

    let outcome = run_session_tcp(&params, &inputs, &DropPlan::before_send([UserId(5)]), 3).unwrap();
    println!("U = {}", outcome.survivors);
    for (user, sum) in outcome.sums() {
        println!("user {user}: {sum}");
    }
    let t = outcome.traffic;
    println!(
        "uplink {} bytes in {} frames, downlink {} bytes in {} frame",
        t.uplink_bytes, t.uplink_frames, t.downlink_bytes, t.downlink_frames
    );
}
