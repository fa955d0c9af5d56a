//! In-process simulated network.
//!
//! Every message crosses the simulated links as encoded frames, so a session
//! exercises the same codec as a real byte stream. Dropouts are injected from
//! a [`DropPlan`]; the server notices a dropped user only because its
//! phase-one frame never arrives.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::codec::{
    decode_phase_one, decode_phase_two, hello_frame, phase_one_frame, phase_two_frame, Frame, FrameType, SessionHello,
    WireError,
};
use crate::dealer::{provision, DealerError, SessionParams, UserId};
use crate::field::FieldVector;
use crate::protocol::{ProtocolError, ServerState, SurvivorSet, UserState};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("expected {expected} inputs, got {found}")]
    InputCount { expected: usize, found: usize },
    #[error("user {0} is listed at both drop points")]
    ConflictingDrop(UserId),
    #[error("invalid input for user {user}: {source}")]
    BadInput { user: UserId, source: ProtocolError },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Params(#[from] DealerError),
    #[error("stream transport: {0}")]
    Io(#[from] std::io::Error),
}

impl SessionError {
    /// True for errors caused by the scheme itself rather than bad inputs or I/O.
    pub fn is_protocol(&self) -> bool {
        matches!(self, SessionError::Protocol(_))
    }
}

/// Which users drop, and when.
///
/// A user dropping *before* sending never delivers `X_k` and is therefore not
/// in `U`. A user dropping *after* sending is in `U` (its message counts
/// toward the sum) but leaves before the reply and decodes nothing. A message
/// lost in flight is indistinguishable from a before-send drop.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DropPlan {
    pub before_send: BTreeSet<UserId>,
    pub after_send: BTreeSet<UserId>,
}

impl DropPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn before_send(users: impl IntoIterator<Item = UserId>) -> Self {
        Self {
            before_send: users.into_iter().collect(),
            after_send: BTreeSet::new(),
        }
    }

    pub fn with_after_send(mut self, users: impl IntoIterator<Item = UserId>) -> Self {
        self.after_send.extend(users);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.before_send.is_empty() && self.after_send.is_empty()
    }

    pub fn validate(&self, params: &SessionParams) -> Result<(), SessionError> {
        for &u in self.before_send.iter().chain(&self.after_send) {
            params.check_user(u)?;
        }
        if let Some(&u) = self.before_send.intersection(&self.after_send).next() {
            return Err(SessionError::ConflictingDrop(u));
        }
        Ok(())
    }

    /// Random plan: each user independently drops before sending with
    /// probability `p`.
    pub fn random<R: rand::Rng + ?Sized>(params: &SessionParams, p: f64, rng: &mut R) -> Self {
        Self::before_send(params.user_ids().filter(|_| rng.gen_bool(p)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub uplink_frames: usize,
    pub uplink_bytes: usize,
    pub downlink_frames: usize,
    pub downlink_bytes: usize,
}

#[derive(Debug)]
pub struct SessionOutcome {
    /// The realized survivor set `U`.
    pub survivors: SurvivorSet,
    /// Result for every survivor still present at phase two.
    pub decoded: BTreeMap<UserId, Result<FieldVector, ProtocolError>>,
    /// Survivors that dropped after sending.
    pub departed: Vec<UserId>,
    pub traffic: Traffic,
}

impl SessionOutcome {
    /// Decoded sums of users that succeeded.
    pub fn sums(&self) -> impl Iterator<Item = (UserId, &FieldVector)> {
        self.decoded
            .iter()
            .filter_map(|(k, r)| r.as_ref().ok().map(|v| (*k, v)))
    }
}

/// Phase-one delivery order at the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delivery {
    /// Increasing user id.
    #[default]
    Ordered,
    /// Seeded random permutation.
    Shuffled,
    /// Every user on its own thread; the server drains a channel in arrival order.
    Concurrent,
}

#[derive(Debug, Clone, Copy)]
pub struct SimNetwork {
    params: SessionParams,
    delivery: Delivery,
}

/// Direct recomputation of `Σ_{u∈U} W_u`, independent of the protocol.
pub fn expected_sum(inputs: &[FieldVector], survivors: &SurvivorSet) -> Result<FieldVector, ProtocolError> {
    Ok(FieldVector::sum(survivors.ids().iter().map(|u| &inputs[u.index()]))?)
}

pub(crate) fn check_inputs(params: &SessionParams, inputs: &[FieldVector]) -> Result<(), SessionError> {
    if inputs.len() != params.users() {
        return Err(SessionError::InputCount {
            expected: params.users(),
            found: inputs.len(),
        });
    }
    Ok(())
}

pub(crate) fn key_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

impl SimNetwork {
    pub fn new(params: SessionParams) -> Self {
        Self {
            params,
            delivery: Delivery::Ordered,
        }
    }

    pub fn with_delivery(mut self, delivery: Delivery) -> Self {
        self.delivery = delivery;
        self
    }

    pub fn run(&self, inputs: &[FieldVector], plan: &DropPlan, seed: u64) -> Result<SessionOutcome, SessionError> {
        let params = &self.params;
        check_inputs(params, inputs)?;
        plan.validate(params)?;

        let mut traffic = Traffic::default();
        let (_, keys) = provision(params, &mut key_rng(seed));

        let hello = hello_frame(params).encode();
        let mut users = Vec::with_capacity(params.users());
        for (key, input) in keys.into_iter().zip(inputs) {
            let user = key.user();
            let announced = SessionHello::decode(Frame::decode(&hello)?.expect(FrameType::SessionHello)?)?;
            if announced.to_params(params.broadcast_reply())? != *params {
                return Err(WireError::HelloMismatch.into());
            }
            let st = UserState::new(*params, input.clone(), key)
                .map_err(|source| SessionError::BadInput { user, source })?;
            users.push(st);
        }

        let senders: Vec<usize> = (0..users.len())
            .filter(|&i| !plan.before_send.contains(&UserId::from_index(i)))
            .collect();
        let mut uplink = self.phase_one(&mut users, &senders)?;
        if self.delivery == Delivery::Shuffled {
            let mut rng = key_rng(seed);
            rng.set_stream(1);
            uplink.shuffle(&mut rng);
        }

        let mut server = ServerState::new(*params);
        for bytes in &uplink {
            traffic.uplink_frames += 1;
            traffic.uplink_bytes += bytes.len();
            let frame = Frame::decode(bytes)?;
            server.receive(decode_phase_one(frame.expect(FrameType::PhaseOne)?, params)?)?;
        }
        let replies = server.close_and_reply()?;
        let survivors = replies
            .values()
            .next()
            .map(|m| m.survivors.clone())
            .ok_or(ProtocolError::EmptySurvivorSet)?;

        // the server cannot tell who left after sending, so every member of
        // U gets a reply; departed users just never read it
        let mut downlink: BTreeMap<UserId, Vec<u8>> = BTreeMap::new();
        if params.broadcast_reply() {
            let any = replies.values().next().expect("nonempty survivors");
            let bytes = phase_two_frame(any, params).encode();
            traffic.downlink_frames += 1;
            traffic.downlink_bytes += bytes.len();
            for &u in survivors.ids() {
                downlink.insert(u, bytes.clone());
            }
        } else {
            for &u in survivors.ids() {
                let bytes = phase_two_frame(&replies[&u], params).encode();
                traffic.downlink_frames += 1;
                traffic.downlink_bytes += bytes.len();
                downlink.insert(u, bytes);
            }
        }
        downlink.retain(|u, _| !plan.after_send.contains(u));

        let mut decoded = BTreeMap::new();
        for (u, bytes) in downlink {
            let frame = Frame::decode(&bytes)?;
            let msg = decode_phase_two(frame.expect(FrameType::PhaseTwo)?, params)?;
            decoded.insert(u, users[u.index()].decode(&msg));
        }

        Ok(SessionOutcome {
            departed: survivors
                .ids()
                .iter()
                .copied()
                .filter(|u| plan.after_send.contains(u))
                .collect(),
            survivors,
            decoded,
            traffic,
        })
    }

    fn phase_one(&self, users: &mut [UserState], senders: &[usize]) -> Result<Vec<Vec<u8>>, SessionError> {
        let params = &self.params;
        match self.delivery {
            Delivery::Ordered | Delivery::Shuffled => senders
                .iter()
                .map(|&i| Ok(phase_one_frame(&users[i].phase_one()?, params).encode()))
                .collect(),
            Delivery::Concurrent => {
                let (tx, rx) = mpsc::channel();
                std::thread::scope(|scope| {
                    for (i, st) in users.iter_mut().enumerate() {
                        if !senders.contains(&i) {
                            continue;
                        }
                        let tx = tx.clone();
                        scope.spawn(move || {
                            let frame = st.phase_one().map(|m| phase_one_frame(&m, params).encode());
                            tx.send(frame).expect("server side of the channel is alive");
                        });
                    }
                });
                drop(tx);
                rx.into_iter().map(|r| r.map_err(SessionError::from)).collect()
            }
        }
    }
}

/// Runs one complete session over the simulated network with ordered delivery.
pub fn run_session(
    params: &SessionParams,
    inputs: &[FieldVector],
    plan: &DropPlan,
    seed: u64,
) -> Result<SessionOutcome, SessionError> {
    SimNetwork::new(*params).run(inputs, plan, seed)
}
