//! Deliberately flawed schemes, used to show that the audits can fail.
//!
//! The first two keep the standard message and reply maps but derive user
//! keys from a tampered copy of the noise, so every user still decodes the
//! right sum while the server's view leaks. The third is secure but stores
//! a redundant key symbol, which only the rate accounting notices.

use std::collections::BTreeMap;

use crate::dealer::{derive_user_key, SessionParams, SourceKey, UserId, UserKey};
use crate::field::FieldVector;
use crate::protocol::{AggregationScheme, ProtocolError, StandardScheme, SurvivorSet};

type NoiseMap = fn(&SessionParams, &SourceKey) -> SourceKey;

/// The standard scheme run on keys derived from `transform(Z_Σ)`.
#[derive(Debug, Clone, Copy)]
pub struct TamperedNoise {
    inner: StandardScheme,
    name: &'static str,
    transform: NoiseMap,
}

impl TamperedNoise {
    pub fn new(params: SessionParams, name: &'static str, transform: NoiseMap) -> Self {
        Self {
            inner: StandardScheme::new(params),
            name,
            transform,
        }
    }
}

fn reuse_first(params: &SessionParams, src: &SourceKey) -> SourceKey {
    let mut noise = src.noise().to_vec();
    *noise.last_mut().unwrap() = noise[0].clone();
    SourceKey::from_noise(params, noise).unwrap()
}

fn reply_mask_is_first(params: &SessionParams, src: &SourceKey) -> SourceKey {
    // N_2..N_K forced to sum to zero, so the noise total equals N_1
    let mut noise = src.noise().to_vec();
    let k = noise.len();
    let middle =
        FieldVector::sum(&noise[1..k - 1]).unwrap_or_else(|_| FieldVector::zeros(params.field(), params.len()));
    noise[k - 1] = FieldVector::zeros(params.field(), params.len()).sub(&middle).unwrap();
    SourceKey::from_noise(params, noise).unwrap()
}

/// User `K` masks with `N_1`, so `X_1 - X_K = W_1 - W_K` is visible to the server.
pub fn noise_reuse(params: SessionParams) -> TamperedNoise {
    TamperedNoise::new(params, "planted:noise-reuse", reuse_first)
}

/// The reply mask `Σ N_u` is user 1's phase-one mask; the remaining
/// users' masks cancel, exposing `Σ_{k≥2} W_k` to the server.
pub fn reply_mask_reuse(params: SessionParams) -> TamperedNoise {
    TamperedNoise::new(params, "planted:reply-mask-reuse", reply_mask_is_first)
}

impl AggregationScheme for TamperedNoise {
    type Key = UserKey;

    fn name(&self) -> &str {
        self.name
    }

    fn params(&self) -> &SessionParams {
        self.inner.params()
    }

    fn user_key(&self, src: &SourceKey, user: UserId) -> Result<UserKey, ProtocolError> {
        let tampered = (self.transform)(self.params(), src);
        Ok(derive_user_key(&tampered, user, self.params())?)
    }

    fn key_symbols(&self, key: &UserKey) -> Vec<u64> {
        key.symbols()
    }

    fn phase_one(&self, user: UserId, input: &FieldVector, key: &UserKey) -> Result<FieldVector, ProtocolError> {
        self.inner.phase_one(user, input, key)
    }

    fn reply(
        &self,
        recipient: UserId,
        survivors: &SurvivorSet,
        received: &BTreeMap<UserId, FieldVector>,
    ) -> Result<FieldVector, ProtocolError> {
        self.inner.reply(recipient, survivors, received)
    }

    fn decode(
        &self,
        user: UserId,
        input: &FieldVector,
        key: &UserKey,
        survivors: &SurvivorSet,
        reply: &FieldVector,
    ) -> Result<FieldVector, ProtocolError> {
        self.inner.decode(user, input, key, survivors, reply)
    }
}

/// Standard scheme whose keys carry a second copy of the user's own noise.
#[derive(Debug, Clone, Copy)]
pub struct PaddedKey {
    inner: StandardScheme,
}

pub fn padded_key(params: SessionParams) -> PaddedKey {
    PaddedKey {
        inner: StandardScheme::new(params),
    }
}

impl AggregationScheme for PaddedKey {
    type Key = UserKey;

    fn name(&self) -> &str {
        "planted:padded-key"
    }

    fn params(&self) -> &SessionParams {
        self.inner.params()
    }

    fn user_key(&self, src: &SourceKey, user: UserId) -> Result<UserKey, ProtocolError> {
        self.inner.user_key(src, user)
    }

    fn key_symbols(&self, key: &UserKey) -> Vec<u64> {
        let mut symbols = key.symbols();
        symbols.extend_from_slice(key.own_noise().elems());
        symbols
    }

    fn phase_one(&self, user: UserId, input: &FieldVector, key: &UserKey) -> Result<FieldVector, ProtocolError> {
        self.inner.phase_one(user, input, key)
    }

    fn reply(
        &self,
        recipient: UserId,
        survivors: &SurvivorSet,
        received: &BTreeMap<UserId, FieldVector>,
    ) -> Result<FieldVector, ProtocolError> {
        self.inner.reply(recipient, survivors, received)
    }

    fn decode(
        &self,
        user: UserId,
        input: &FieldVector,
        key: &UserKey,
        survivors: &SurvivorSet,
        reply: &FieldVector,
    ) -> Result<FieldVector, ProtocolError> {
        self.inner.decode(user, input, key, survivors, reply)
    }
}
