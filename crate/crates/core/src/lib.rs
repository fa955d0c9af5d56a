//! Secure aggregation with an oblivious server.
//!
//! `K` users each hold a vector `W_k` over a prime field and want every
//! (surviving) user to learn `Σ W_k` through a relay server that learns
//! nothing about the inputs. Correlated one-time-pad keys are handed out by
//! a trusted dealer ahead of time. Two schemes are provided: one that needs
//! every user to take part and one that tolerates any pattern of dropouts.
//!
//! - [`field`]: prime-field vectors and their wire packing.
//! - [`dealer`]: session parameters, source keys, user keys and key files.
//! - [`protocol`]: user and server state machines.
//! - [`transport`]: the frame codec, an in-process network and a TCP runner.
//! - [`auditor`]: exact security and entropy checks by full enumeration.
//! - [`rates`]: symbol accounting against the optimal rate region.
//! - [`cli`]: the `obagg` command line.

pub mod auditor;
pub mod cli;
pub mod dealer;
pub mod field;
pub mod protocol;
pub mod rates;
pub mod transport;

pub use dealer::{Scheme, SessionParams, UserId};
pub use field::{FieldSpec, FieldVector};
pub use protocol::{AggregationScheme, StandardScheme, SurvivorSet};
