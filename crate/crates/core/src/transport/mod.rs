//! Moving protocol messages between users and the server.

pub mod codec;
pub mod sim;
pub mod stream;

pub use codec::{
    decode_phase_one, decode_phase_two, encode_phase_one, encode_phase_two, Frame, FrameType, SessionHello, WireError,
};
pub use sim::{expected_sum, run_session, Delivery, DropPlan, SessionError, SessionOutcome, SimNetwork, Traffic};
pub use stream::{read_frame, run_session_tcp, write_frame};
