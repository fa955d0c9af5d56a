//! Encoding and decoding the three frame types.
//!
//! cargo run --example wire_codec

use oblivious_aggregation::dealer::UserId;
use oblivious_aggregation::protocol::{PhaseOneMsg, PhaseTwoMsg};
use oblivious_aggregation::transport::codec::{hello_frame, phase_one_frame, phase_two_frame};
use oblivious_aggregation::transport::{decode_phase_one, Frame, FrameType};
use oblivious_aggregation::{FieldSpec, FieldVector, Scheme, SessionParams, SurvivorSet};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}

fn main() {
    let field = FieldSpec::new(257).unwrap();
    let params = SessionParams::new(8, field, 2, Scheme::DropoutTolerant).unwrap();

    let hello = hello_frame(&params);
    println!("hello     {}", hex(&hello.encode()));

    let msg = PhaseOneMsg {
        user: UserId(7),
        payload: FieldVector::new(field, vec![255, 256]).unwrap(),
    };
    let frame = phase_one_frame(&msg, &params);
    let bytes = frame.encode();
    println!("phase one {}", hex(&bytes));

    let back = Frame::decode(&bytes).unwrap();
    let decoded = decode_phase_one(back.expect(FrameType::PhaseOne).unwrap(), &params).unwrap();
    assert_eq!(decoded, msg);
    println!("decoded   user={} X={}", decoded.user, decoded.payload);

    let reply = PhaseTwoMsg {
        survivors: SurvivorSet::new([UserId(1), UserId(3)], 8).unwrap(),
        payload: FieldVector::new(field, vec![0, 1]).unwrap(),
    };
    println!("phase two {}", hex(&phase_two_frame(&reply, &params).encode()));

    // a 256 is fine in F_257 but the same bytes are rejected in F_251
    let small = SessionParams::new(8, FieldSpec::new(251).unwrap(), 2, Scheme::DropoutTolerant).unwrap();
    println!(
        "in F_251: {}",
        decode_phase_one(back.expect(FrameType::PhaseOne).unwrap(), &small).unwrap_err()
    );
}
