//! User and server state machines for the two-phase exchange.
//!
//! Phase one: user `k` uploads `X_k = W_k + N_k`. Phase two: once the server
//! closes collection, the survivor set `U` is fixed to the ids it received
//! and every survivor gets `(U, Σ_{u∈U} X_u)`. Decoding subtracts the
//! matching noise total, which each user can form from its key.
//!
//! The same reply goes to every survivor, so broadcast fan-out needs no
//! change here.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::dealer::{derive_user_key, DealerError, KeyPayload, Scheme, SessionParams, SourceKey, UserId, UserKey};
use crate::field::{FieldError, FieldVector};

fn join_ids(ids: &[UserId]) -> String {
    ids.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("operation needs phase {expected}, state is in {found}")]
    WrongPhase {
        expected: &'static str,
        found: &'static str,
    },
    #[error("key is for the {key} scheme but the session runs {session}")]
    SchemeMismatch { session: Scheme, key: Scheme },
    #[error("vector has length {found}, session length is {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("DroppedUserUnderNoDropoutScheme: no-dropout scheme cannot serve a partial survivor set; missing users {}", join_ids(.missing))]
    DroppedUserUnderNoDropoutScheme { missing: Vec<UserId> },
    #[error("survivor set is empty")]
    EmptySurvivorSet,
    #[error("duplicate user {0} in survivor set")]
    DuplicateSurvivor(UserId),
    #[error("survivor ids are not sorted")]
    UnsortedSurvivors,
    #[error("user {0} is not in the survivor set")]
    NotASurvivor(UserId),
    #[error("user {0} already delivered a phase-one message")]
    DuplicateMessage(UserId),
    #[error("expected {expected} subset sums, got {found}")]
    WrongVectorCount { expected: usize, found: usize },
    #[error(transparent)]
    Dealer(#[from] DealerError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn check_shape(params: &SessionParams, v: &FieldVector) -> Result<(), ProtocolError> {
    if v.spec() != params.field() {
        return Err(FieldError::SpecMismatch {
            left: params.field().modulus(),
            right: v.spec().modulus(),
        }
        .into());
    }
    if v.len() != params.len() {
        return Err(ProtocolError::WrongLength {
            expected: params.len(),
            found: v.len(),
        });
    }
    Ok(())
}

/// Uplink message `X_k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhaseOneMsg {
    pub user: UserId,
    pub payload: FieldVector,
}

/// Nonempty, sorted, duplicate-free subset of `[1, K]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SurvivorSet(Vec<UserId>);

impl SurvivorSet {
    /// Sorts `ids` and validates them against `users`.
    pub fn new(ids: impl IntoIterator<Item = UserId>, users: usize) -> Result<Self, ProtocolError> {
        let mut ids: Vec<UserId> = ids.into_iter().collect();
        ids.sort();
        Self::from_sorted(ids, users)
    }

    /// Like [`SurvivorSet::new`] but rejects input that is not already sorted.
    pub fn from_sorted(ids: Vec<UserId>, users: usize) -> Result<Self, ProtocolError> {
        if ids.is_empty() {
            return Err(ProtocolError::EmptySurvivorSet);
        }
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(ProtocolError::DuplicateSurvivor(w[0]));
            }
            if w[0] > w[1] {
                return Err(ProtocolError::UnsortedSurvivors);
            }
        }
        for &id in &ids {
            if id.0 == 0 || id.0 as usize > users {
                return Err(DealerError::UserOutOfRange { user: id, users }.into());
            }
        }
        Ok(Self(ids))
    }

    pub fn full(users: usize) -> Self {
        Self((1..=users as u32).map(UserId).collect())
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.0.binary_search(&user).is_ok()
    }

    pub fn ids(&self) -> &[UserId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_full(&self, users: usize) -> bool {
        self.0.len() == users
    }

    /// Users of `[1, users]` not in the set.
    pub fn missing(&self, users: usize) -> Vec<UserId> {
        (1..=users as u32).map(UserId).filter(|u| !self.contains(*u)).collect()
    }

    /// Every nonempty subset of `[1, users]`, ordered by bitmask.
    pub fn all_nonempty(users: usize) -> impl Iterator<Item = SurvivorSet> {
        (1u64..(1u64 << users)).map(move |mask| {
            SurvivorSet(
                (0..users)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(UserId::from_index)
                    .collect(),
            )
        })
    }
}

impl fmt::Display for SurvivorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
        }
        f.write_str("}")
    }
}

/// Downlink message `(U, Y_k^U)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhaseTwoMsg {
    pub survivors: SurvivorSet,
    pub payload: FieldVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserPhase {
    Fresh,
    Sent,
    Decoded,
}

impl UserPhase {
    fn name(self) -> &'static str {
        match self {
            UserPhase::Fresh => "Fresh",
            UserPhase::Sent => "Sent",
            UserPhase::Decoded => "Decoded",
        }
    }
}

#[derive(Debug, Clone)]
pub struct UserState {
    params: SessionParams,
    input: FieldVector,
    key: UserKey,
    phase: UserPhase,
}

impl UserState {
    pub fn new(params: SessionParams, input: FieldVector, key: UserKey) -> Result<Self, ProtocolError> {
        params.check_user(key.user())?;
        if key.scheme() != params.scheme() {
            return Err(ProtocolError::SchemeMismatch {
                session: params.scheme(),
                key: key.scheme(),
            });
        }
        check_shape(&params, &input)?;
        check_shape(&params, key.own_noise())?;
        Ok(Self {
            params,
            input,
            key,
            phase: UserPhase::Fresh,
        })
    }

    pub fn user(&self) -> UserId {
        self.key.user()
    }

    pub fn phase(&self) -> UserPhase {
        self.phase
    }

    pub fn input(&self) -> &FieldVector {
        &self.input
    }

    fn expect_phase(&self, expected: UserPhase) -> Result<(), ProtocolError> {
        if self.phase != expected {
            return Err(ProtocolError::WrongPhase {
                expected: expected.name(),
                found: self.phase.name(),
            });
        }
        Ok(())
    }

    /// `X_k = W_k + N_k`.
    pub fn phase_one(&mut self) -> Result<PhaseOneMsg, ProtocolError> {
        self.expect_phase(UserPhase::Fresh)?;
        let payload = self.input.add(self.key.own_noise())?;
        self.phase = UserPhase::Sent;
        Ok(PhaseOneMsg {
            user: self.user(),
            payload,
        })
    }

    /// Recovers `Σ_{u∈U} W_u` from the server's reply.
    pub fn decode(&mut self, msg: &PhaseTwoMsg) -> Result<FieldVector, ProtocolError> {
        self.expect_phase(UserPhase::Sent)?;
        check_shape(&self.params, &msg.payload)?;
        if !msg.survivors.contains(self.user()) {
            return Err(ProtocolError::NotASurvivor(self.user()));
        }
        let mask = match self.key.payload() {
            KeyPayload::NoDropout { noise_total, .. } => {
                if !msg.survivors.is_full(self.params.users()) {
                    return Err(ProtocolError::DroppedUserUnderNoDropoutScheme {
                        missing: msg.survivors.missing(self.params.users()),
                    });
                }
                noise_total.clone()
            }
            KeyPayload::DropoutTolerant { all_noise } => {
                for id in msg.survivors.ids() {
                    self.params.check_user(*id)?;
                }
                FieldVector::sum(msg.survivors.ids().iter().map(|u| &all_noise[u.index()]))?
            }
        };
        let sum = msg.payload.sub(&mask)?;
        self.phase = UserPhase::Decoded;
        Ok(sum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerPhase {
    Collecting,
    Closed,
}

/// Oblivious relay. Holds no key material.
#[derive(Debug, Clone)]
pub struct ServerState {
    params: SessionParams,
    received: BTreeMap<UserId, PhaseOneMsg>,
    phase: ServerPhase,
}

impl ServerState {
    pub fn new(params: SessionParams) -> Self {
        Self {
            params,
            received: BTreeMap::new(),
            phase: ServerPhase::Collecting,
        }
    }

    pub fn phase(&self) -> ServerPhase {
        self.phase
    }

    pub fn received(&self) -> &BTreeMap<UserId, PhaseOneMsg> {
        &self.received
    }

    /// Single serialized ingestion point for phase-one messages.
    pub fn receive(&mut self, msg: PhaseOneMsg) -> Result<(), ProtocolError> {
        if self.phase != ServerPhase::Collecting {
            return Err(ProtocolError::WrongPhase {
                expected: "Collecting",
                found: "Closed",
            });
        }
        self.params.check_user(msg.user)?;
        check_shape(&self.params, &msg.payload)?;
        if self.received.contains_key(&msg.user) {
            return Err(ProtocolError::DuplicateMessage(msg.user));
        }
        self.received.insert(msg.user, msg);
        Ok(())
    }

    /// Fixes `U` to the received ids and computes one reply per survivor.
    pub fn close_and_reply(&mut self) -> Result<BTreeMap<UserId, PhaseTwoMsg>, ProtocolError> {
        if self.phase != ServerPhase::Collecting {
            return Err(ProtocolError::WrongPhase {
                expected: "Collecting",
                found: "Closed",
            });
        }
        if self.received.is_empty() {
            return Err(ProtocolError::EmptySurvivorSet);
        }
        let survivors = SurvivorSet::new(self.received.keys().copied(), self.params.users())?;
        if self.params.scheme() == Scheme::NoDropout && !survivors.is_full(self.params.users()) {
            return Err(ProtocolError::DroppedUserUnderNoDropoutScheme {
                missing: survivors.missing(self.params.users()),
            });
        }
        let payload = FieldVector::sum(self.received.values().map(|m| &m.payload))?;
        self.phase = ServerPhase::Closed;
        Ok(survivors
            .ids()
            .iter()
            .map(|&k| {
                (
                    k,
                    PhaseTwoMsg {
                        survivors: survivors.clone(),
                        payload: payload.clone(),
                    },
                )
            })
            .collect())
    }
}

/// Forward map `(Σ_{[K]} W, Σ_{[K]∖{K}} W, Σ_{[K]∖{K-1}} W, ..., Σ_{[K]∖{3}} W)`.
///
/// These are the sums a user sees under the survivor sets `[K]` and
/// `[K]∖{j}` for `j = K, K-1, ..., 3`.
pub fn subset_sums(inputs: &[FieldVector]) -> Result<Vec<FieldVector>, ProtocolError> {
    let users = inputs.len();
    if users < 2 {
        return Err(DealerError::TooFewUsers(users).into());
    }
    let total = FieldVector::sum(inputs)?;
    let mut out = Vec::with_capacity(users - 1);
    out.push(total.clone());
    for excluded in (3..=users).rev() {
        out.push(total.sub(&inputs[excluded - 1])?);
    }
    Ok(out)
}

/// Inverts [`subset_sums`] given `W_1`.
pub fn reconstruct_inputs(first: &FieldVector, sums: &[FieldVector]) -> Result<Vec<FieldVector>, ProtocolError> {
    if sums.is_empty() {
        return Err(ProtocolError::WrongVectorCount { expected: 1, found: 0 });
    }
    let users = sums.len() + 1;
    let total = &sums[0];
    // sums[i] omits user users + 1 - i, for i >= 1
    let mut tail = Vec::with_capacity(users - 2);
    for j in 3..=users {
        tail.push(total.sub(&sums[users + 1 - j])?);
    }
    let mut second = total.sub(first)?;
    for w in &tail {
        second = second.sub(w)?;
    }
    let mut out = Vec::with_capacity(users);
    out.push(first.clone());
    out.push(second);
    out.extend(tail);
    Ok(out)
}

/// A complete two-phase aggregation scheme, as seen by the auditor and the
/// rate accountant.
///
/// Every scheme draws the same source key `(N_1, ..., N_K)`; schemes differ
/// in how keys, messages and replies are formed from it. Phase-one messages
/// may depend only on `(W_k, Z_k)` and replies only on the messages of the
/// survivors, which the signatures enforce.
pub trait AggregationScheme: Sync {
    type Key: Clone + Send;

    fn name(&self) -> &str;

    fn params(&self) -> &SessionParams;

    fn user_key(&self, src: &SourceKey, user: UserId) -> Result<Self::Key, ProtocolError>;

    /// The key's symbols in storage order.
    fn key_symbols(&self, key: &Self::Key) -> Vec<u64>;

    fn phase_one(&self, user: UserId, input: &FieldVector, key: &Self::Key) -> Result<FieldVector, ProtocolError>;

    fn reply(
        &self,
        recipient: UserId,
        survivors: &SurvivorSet,
        received: &BTreeMap<UserId, FieldVector>,
    ) -> Result<FieldVector, ProtocolError>;

    fn decode(
        &self,
        user: UserId,
        input: &FieldVector,
        key: &Self::Key,
        survivors: &SurvivorSet,
        reply: &FieldVector,
    ) -> Result<FieldVector, ProtocolError>;
}

/// The shipped schemes, driven through [`UserState`] and [`ServerState`].
#[derive(Debug, Clone, Copy)]
pub struct StandardScheme {
    params: SessionParams,
}

impl StandardScheme {
    pub fn new(params: SessionParams) -> Self {
        Self { params }
    }
}

impl AggregationScheme for StandardScheme {
    type Key = UserKey;

    fn name(&self) -> &str {
        match self.params.scheme() {
            Scheme::NoDropout => "no-dropout",
            Scheme::DropoutTolerant => "dropout-tolerant",
        }
    }

    fn params(&self) -> &SessionParams {
        &self.params
    }

    fn user_key(&self, src: &SourceKey, user: UserId) -> Result<UserKey, ProtocolError> {
        Ok(derive_user_key(src, user, &self.params)?)
    }

    fn key_symbols(&self, key: &UserKey) -> Vec<u64> {
        key.symbols()
    }

    fn phase_one(&self, _user: UserId, input: &FieldVector, key: &UserKey) -> Result<FieldVector, ProtocolError> {
        let mut st = UserState::new(self.params, input.clone(), key.clone())?;
        Ok(st.phase_one()?.payload)
    }

    fn reply(
        &self,
        recipient: UserId,
        survivors: &SurvivorSet,
        received: &BTreeMap<UserId, FieldVector>,
    ) -> Result<FieldVector, ProtocolError> {
        let mut server = ServerState::new(self.params);
        for &u in survivors.ids() {
            let payload = received.get(&u).ok_or(ProtocolError::NotASurvivor(u))?.clone();
            server.receive(PhaseOneMsg { user: u, payload })?;
        }
        let mut replies = server.close_and_reply()?;
        replies
            .remove(&recipient)
            .map(|m| m.payload)
            .ok_or(ProtocolError::NotASurvivor(recipient))
    }

    fn decode(
        &self,
        _user: UserId,
        input: &FieldVector,
        key: &UserKey,
        survivors: &SurvivorSet,
        reply: &FieldVector,
    ) -> Result<FieldVector, ProtocolError> {
        let mut st = UserState::new(self.params, input.clone(), key.clone())?;
        st.phase_one()?;
        st.decode(&PhaseTwoMsg {
            survivors: survivors.clone(),
            payload: reply.clone(),
        })
    }
}
