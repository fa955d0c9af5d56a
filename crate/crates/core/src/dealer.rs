//! Session parameters and the trusted dealer.
//!
//! The dealer draws the source key `Z_Σ = (N_1, ..., N_K)` of i.i.d. uniform
//! noise vectors and derives each user's key from it:
//!
//! * [`Scheme::NoDropout`]: `Z_k = (N_k, N_1 + ... + N_K)`, `2L` symbols.
//! * [`Scheme::DropoutTolerant`]: `Z_k = (N_1, ..., N_K)`, `KL` symbols.
//!
//! Keys are provisioned before phase one; no dealer channel is modelled.
//! Key files use the `OBKY` layout documented on [`encode_key_file`].

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, FieldSpec, FieldVector};

/// 1-based user index in `[1, K]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl UserId {
    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position, for indexing per-user arrays.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        UserId(index as u32 + 1)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    NoDropout,
    DropoutTolerant,
}

impl Scheme {
    pub fn wire_code(self) -> u8 {
        match self {
            Scheme::NoDropout => 0,
            Scheme::DropoutTolerant => 1,
        }
    }

    pub fn from_wire_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Scheme::NoDropout),
            1 => Some(Scheme::DropoutTolerant),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::NoDropout => "nodropout",
            Scheme::DropoutTolerant => "dropout",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nodropout" | "no-dropout" => Ok(Scheme::NoDropout),
            "dropout" | "dropout-tolerant" => Ok(Scheme::DropoutTolerant),
            other => Err(format!("unknown scheme `{other}` (expected nodropout or dropout)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DealerError {
    #[error("at least 2 users are required, got {0}")]
    TooFewUsers(usize),
    #[error("user count {0} does not fit the wire format")]
    TooManyUsers(usize),
    #[error("input length must be at least 1")]
    EmptyInputs,
    #[error("user {user} is outside [1, {users}]")]
    UserOutOfRange { user: UserId, users: usize },
    #[error("source key has {found} noise vectors, expected {expected}")]
    WrongNoiseCount { expected: usize, found: usize },
    #[error("noise vector has length {found}, expected {expected}")]
    WrongNoiseLength { expected: usize, found: usize },
    #[error("noise vector lives in F_{found}, expected F_{expected}")]
    WrongField { expected: u64, found: u64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Everything that fixes the shape of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionParams {
    users: usize,
    field: FieldSpec,
    len: usize,
    scheme: Scheme,
    broadcast_reply: bool,
}

impl SessionParams {
    pub fn new(users: usize, field: FieldSpec, len: usize, scheme: Scheme) -> Result<Self, DealerError> {
        if users < 2 {
            return Err(DealerError::TooFewUsers(users));
        }
        if users > u32::MAX as usize {
            return Err(DealerError::TooManyUsers(users));
        }
        if len == 0 {
            return Err(DealerError::EmptyInputs);
        }
        Ok(Self {
            users,
            field,
            len,
            scheme,
            broadcast_reply: false,
        })
    }

    /// Fan the phase-two reply out as a single broadcast frame.
    pub fn with_broadcast_reply(mut self, broadcast: bool) -> Self {
        self.broadcast_reply = broadcast;
        self
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn broadcast_reply(&self) -> bool {
        self.broadcast_reply
    }

    pub fn user_ids(&self) -> impl Iterator<Item = UserId> {
        (1..=self.users as u32).map(UserId)
    }

    pub fn check_user(&self, user: UserId) -> Result<(), DealerError> {
        if user.0 == 0 || user.0 as usize > self.users {
            return Err(DealerError::UserOutOfRange {
                user,
                users: self.users,
            });
        }
        Ok(())
    }

    /// Symbols held by each user key under this scheme.
    pub fn user_key_symbols(&self) -> usize {
        match self.scheme {
            Scheme::NoDropout => 2 * self.len,
            Scheme::DropoutTolerant => self.users * self.len,
        }
    }

    pub fn source_key_symbols(&self) -> usize {
        self.users * self.len
    }
}

/// `Z_Σ`: one uniform noise vector per user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourceKey {
    noise: Vec<FieldVector>,
}

impl SourceKey {
    pub fn from_noise(params: &SessionParams, noise: Vec<FieldVector>) -> Result<Self, DealerError> {
        if noise.len() != params.users() {
            return Err(DealerError::WrongNoiseCount {
                expected: params.users(),
                found: noise.len(),
            });
        }
        for n in &noise {
            if n.spec() != params.field() {
                return Err(DealerError::WrongField {
                    expected: params.field().modulus(),
                    found: n.spec().modulus(),
                });
            }
            if n.len() != params.len() {
                return Err(DealerError::WrongNoiseLength {
                    expected: params.len(),
                    found: n.len(),
                });
            }
        }
        Ok(Self { noise })
    }

    pub fn noise(&self) -> &[FieldVector] {
        &self.noise
    }

    pub fn noise_of(&self, user: UserId) -> &FieldVector {
        &self.noise[user.index()]
    }

    pub fn symbols(&self) -> Vec<u64> {
        self.noise.iter().flat_map(|n| n.elems().iter().copied()).collect()
    }

    pub fn symbol_count(&self) -> usize {
        self.noise.iter().map(FieldVector::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum KeyPayload {
    NoDropout {
        own_noise: FieldVector,
        noise_total: FieldVector,
    },
    DropoutTolerant {
        all_noise: Vec<FieldVector>,
    },
}

/// `Z_k`, the key provisioned to one user.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UserKey {
    user: UserId,
    payload: KeyPayload,
}

impl UserKey {
    pub fn new(user: UserId, payload: KeyPayload) -> Self {
        Self { user, payload }
    }

    pub fn user(&self) -> UserId {
        self.user
    }

    pub fn payload(&self) -> &KeyPayload {
        &self.payload
    }

    pub fn scheme(&self) -> Scheme {
        match self.payload {
            KeyPayload::NoDropout { .. } => Scheme::NoDropout,
            KeyPayload::DropoutTolerant { .. } => Scheme::DropoutTolerant,
        }
    }

    /// The mask this user applies in phase one.
    pub fn own_noise(&self) -> &FieldVector {
        match &self.payload {
            KeyPayload::NoDropout { own_noise, .. } => own_noise,
            KeyPayload::DropoutTolerant { all_noise } => &all_noise[self.user.index()],
        }
    }

    fn vectors(&self) -> Vec<&FieldVector> {
        match &self.payload {
            KeyPayload::NoDropout { own_noise, noise_total } => vec![own_noise, noise_total],
            KeyPayload::DropoutTolerant { all_noise } => all_noise.iter().collect(),
        }
    }

    /// Key contents flattened in storage order.
    pub fn symbols(&self) -> Vec<u64> {
        self.vectors()
            .into_iter()
            .flat_map(|v| v.elems().iter().copied())
            .collect()
    }

    pub fn symbol_count(&self) -> usize {
        self.vectors().into_iter().map(FieldVector::len).sum()
    }
}

pub fn generate_source_key<R: RngCore + ?Sized>(params: &SessionParams, rng: &mut R) -> SourceKey {
    let noise = (0..params.users())
        .map(|_| FieldVector::sample_uniform(params.field(), params.len(), rng))
        .collect();
    SourceKey { noise }
}

pub fn derive_user_key(src: &SourceKey, user: UserId, params: &SessionParams) -> Result<UserKey, DealerError> {
    params.check_user(user)?;
    if src.noise.len() != params.users() {
        return Err(DealerError::WrongNoiseCount {
            expected: params.users(),
            found: src.noise.len(),
        });
    }
    let payload = match params.scheme() {
        Scheme::NoDropout => KeyPayload::NoDropout {
            own_noise: src.noise_of(user).clone(),
            noise_total: FieldVector::sum(&src.noise)?,
        },
        Scheme::DropoutTolerant => KeyPayload::DropoutTolerant {
            all_noise: src.noise.clone(),
        },
    };
    Ok(UserKey { user, payload })
}

/// Draws a source key and derives every user's key from it.
pub fn provision<R: RngCore + ?Sized>(params: &SessionParams, rng: &mut R) -> (SourceKey, Vec<UserKey>) {
    let src = generate_source_key(params, rng);
    let keys = params
        .user_ids()
        .map(|k| derive_user_key(&src, k, params).expect("user ids come from params"))
        .collect();
    (src, keys)
}

// ---------------------------------------------------------------------------
// Key files
// ---------------------------------------------------------------------------

pub const KEY_MAGIC: [u8; 4] = *b"OBKY";
pub const KEY_FILE_VERSION: u8 = 1;
/// `holder` value marking a source-key file.
pub const SOURCE_KEY_HOLDER: u32 = 0;
const KEY_HEADER_LEN: usize = 4 + 1 + 1 + 4 + 4 + 8 + 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyFileError {
    #[error("key file too short: {0} bytes")]
    Truncated(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported key file version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown scheme code {0}")]
    UnknownScheme(u8),
    #[error("key file is for {found}, expected {expected}")]
    WrongKind { expected: &'static str, found: String },
    #[error("element section is {found} bytes, expected {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error(transparent)]
    Params(#[from] DealerError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Parsed `OBKY` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyFileHeader {
    pub scheme: Scheme,
    pub users: u32,
    pub len: u32,
    pub modulus: u64,
    pub holder: u32,
}

/// Writes `"OBKY" | version u8 | scheme u8 | K u32 | L u32 | q u64 | holder u32`
/// followed by the packed key symbols. All integers are little-endian;
/// `holder` is 0 for the source key and `k` for user `k`'s key.
pub fn encode_key_file(params: &SessionParams, holder: u32, symbols: &FieldVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(KEY_HEADER_LEN + symbols.len() * params.field().element_bytes());
    out.extend_from_slice(&KEY_MAGIC);
    out.push(KEY_FILE_VERSION);
    out.push(params.scheme().wire_code());
    out.extend_from_slice(&(params.users() as u32).to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    out.extend_from_slice(&params.field().modulus().to_le_bytes());
    out.extend_from_slice(&holder.to_le_bytes());
    symbols.pack_into(&mut out);
    out
}

/// Splits a key file into its header and the raw element section.
pub fn parse_key_file(bytes: &[u8]) -> Result<(KeyFileHeader, &[u8]), KeyFileError> {
    if bytes.len() < KEY_HEADER_LEN {
        return Err(KeyFileError::Truncated(bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != KEY_MAGIC {
        return Err(KeyFileError::BadMagic(magic));
    }
    if bytes[4] != KEY_FILE_VERSION {
        return Err(KeyFileError::UnsupportedVersion(bytes[4]));
    }
    let scheme = Scheme::from_wire_code(bytes[5]).ok_or(KeyFileError::UnknownScheme(bytes[5]))?;
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let header = KeyFileHeader {
        scheme,
        users: u32_at(6),
        len: u32_at(10),
        modulus: u64::from_le_bytes(bytes[14..22].try_into().unwrap()),
        holder: u32_at(22),
    };
    Ok((header, &bytes[KEY_HEADER_LEN..]))
}

impl KeyFileHeader {
    pub fn params(&self) -> Result<SessionParams, KeyFileError> {
        let field = FieldSpec::new(self.modulus)?;
        Ok(SessionParams::new(
            self.users as usize,
            field,
            self.len as usize,
            self.scheme,
        )?)
    }
}

fn unpack_exact(field: FieldSpec, count: usize, body: &[u8]) -> Result<Vec<u64>, KeyFileError> {
    let expected = count * field.element_bytes();
    if body.len() != expected {
        return Err(KeyFileError::WrongLength {
            expected,
            found: body.len(),
        });
    }
    Ok(FieldVector::unpack(field, count, body)?.0.into_elems())
}

fn split_vectors(field: FieldSpec, len: usize, flat: Vec<u64>) -> Vec<FieldVector> {
    flat.chunks(len)
        .map(|c| FieldVector::new(field, c.to_vec()).expect("unpacked elements are in range"))
        .collect()
}

pub fn encode_source_key(params: &SessionParams, src: &SourceKey) -> Vec<u8> {
    let flat = FieldVector::new(params.field(), src.symbols()).expect("noise is in range");
    encode_key_file(params, SOURCE_KEY_HOLDER, &flat)
}

pub fn decode_source_key(bytes: &[u8]) -> Result<(SessionParams, SourceKey), KeyFileError> {
    let (header, body) = parse_key_file(bytes)?;
    if header.holder != SOURCE_KEY_HOLDER {
        return Err(KeyFileError::WrongKind {
            expected: "source key",
            found: format!("user {} key", header.holder),
        });
    }
    let params = header.params()?;
    let flat = unpack_exact(params.field(), params.source_key_symbols(), body)?;
    let noise = split_vectors(params.field(), params.len(), flat);
    let src = SourceKey::from_noise(&params, noise)?;
    Ok((params, src))
}

pub fn encode_user_key(params: &SessionParams, key: &UserKey) -> Vec<u8> {
    let flat = FieldVector::new(params.field(), key.symbols()).expect("key is in range");
    encode_key_file(params, key.user().get(), &flat)
}

pub fn decode_user_key(bytes: &[u8]) -> Result<(SessionParams, UserKey), KeyFileError> {
    let (header, body) = parse_key_file(bytes)?;
    if header.holder == SOURCE_KEY_HOLDER {
        return Err(KeyFileError::WrongKind {
            expected: "user key",
            found: "source key".into(),
        });
    }
    let params = header.params()?;
    let user = UserId(header.holder);
    params.check_user(user)?;
    let flat = unpack_exact(params.field(), params.user_key_symbols(), body)?;
    let mut vectors = split_vectors(params.field(), params.len(), flat);
    let payload = match params.scheme() {
        Scheme::NoDropout => {
            let noise_total = vectors.pop().unwrap();
            let own_noise = vectors.pop().unwrap();
            KeyPayload::NoDropout { own_noise, noise_total }
        }
        Scheme::DropoutTolerant => KeyPayload::DropoutTolerant { all_noise: vectors },
    };
    Ok((params, UserKey::new(user, payload)))
}
