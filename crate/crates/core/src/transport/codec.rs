//! Bit-exact wire format.
//!
//! A frame is `length u32 | type_tag u8 | payload`, with `length` counting
//! payload bytes only. All integers are little-endian and field elements use
//! the fixed per-field width from [`FieldSpec::element_bytes`].
//!
//! | tag    | payload                                              |
//! |--------|------------------------------------------------------|
//! | `0x01` | `user u32`, `L` packed elements                      |
//! | `0x02` | `\|U\| u32`, `\|U\|` sorted `u32` ids, `L` packed elements |
//! | `0x03` | `version u8`, `scheme u8`, `K u32`, `L u32`, `q u64`  |
//!
//! [`FieldSpec::element_bytes`]: crate::field::FieldSpec::element_bytes

use thiserror::Error;

use crate::dealer::{DealerError, Scheme, SessionParams, UserId};
use crate::field::{FieldError, FieldSpec, FieldVector};
use crate::protocol::{PhaseOneMsg, PhaseTwoMsg, ProtocolError, SurvivorSet};

pub const FRAME_HEADER_LEN: usize = 5;
pub const WIRE_VERSION: u8 = 1;
/// Upper bound on a payload accepted from a byte stream.
pub const MAX_FRAME_PAYLOAD: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("unknown frame type tag {0:#04x}")]
    UnknownFrameType(u8),
    #[error("expected a {expected:?} frame, got {found:?}")]
    UnexpectedFrame { expected: FrameType, found: FrameType },
    #[error("frame payload of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown scheme code {0}")]
    UnknownScheme(u8),
    #[error("user id {user} is outside [1, {users}]")]
    UserOutOfRange { user: u32, users: usize },
    #[error("survivor count {count} exceeds {users} users")]
    TooManySurvivors { count: usize, users: usize },
    #[error("bad survivor set: {0}")]
    BadSurvivors(ProtocolError),
    #[error("session hello does not match local parameters")]
    HelloMismatch,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Params(#[from] DealerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    PhaseOne = 0x01,
    PhaseTwo = 0x02,
    SessionHello = 0x03,
}

impl FrameType {
    pub fn from_tag(tag: u8) -> Result<Self, WireError> {
        match tag {
            0x01 => Ok(FrameType::PhaseOne),
            0x02 => Ok(FrameType::PhaseTwo),
            0x03 => Ok(FrameType::SessionHello),
            other => Err(WireError::UnknownFrameType(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameType, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `bytes`; returns it with the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        let mut r = Reader::new(bytes);
        let len = r.u32()? as usize;
        let kind = FrameType::from_tag(r.u8()?)?;
        let payload = r.take(len)?.to_vec();
        Ok((Self { kind, payload }, r.pos))
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let (frame, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(WireError::TrailingBytes(bytes.len() - used));
        }
        Ok(frame)
    }

    pub fn expect(&self, kind: FrameType) -> Result<&[u8], WireError> {
        if self.kind != kind {
            return Err(WireError::UnexpectedFrame {
                expected: kind,
                found: self.kind,
            });
        }
        Ok(&self.payload)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(WireError::Truncated { needed: n, available });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vector(&mut self, field: FieldSpec, len: usize) -> Result<FieldVector, WireError> {
        let rest = &self.bytes[self.pos..];
        let (v, used) = FieldVector::unpack(field, len, rest).map_err(|e| match e {
            FieldError::Truncated { expected, found } => WireError::Truncated {
                needed: expected,
                available: found,
            },
            other => other.into(),
        })?;
        self.pos += used;
        Ok(v)
    }

    fn finish(&self) -> Result<(), WireError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            n => Err(WireError::TrailingBytes(n)),
        }
    }
}

fn check_payload(params: &SessionParams, v: &FieldVector) {
    assert_eq!(v.spec(), params.field(), "payload field differs from session");
    assert_eq!(v.len(), params.len(), "payload length differs from session");
}

fn user_in_range(params: &SessionParams, raw: u32) -> Result<UserId, WireError> {
    if raw == 0 || raw as usize > params.users() {
        return Err(WireError::UserOutOfRange {
            user: raw,
            users: params.users(),
        });
    }
    Ok(UserId(raw))
}

/// Payload bytes of a phase-one message.
///
/// Panics if the message does not match `params`; messages built by the
/// protocol state machines always do.
pub fn encode_phase_one(msg: &PhaseOneMsg, params: &SessionParams) -> Vec<u8> {
    check_payload(params, &msg.payload);
    let mut out = Vec::with_capacity(4 + params.len() * params.field().element_bytes());
    out.extend_from_slice(&msg.user.get().to_le_bytes());
    msg.payload.pack_into(&mut out);
    out
}

pub fn decode_phase_one(bytes: &[u8], params: &SessionParams) -> Result<PhaseOneMsg, WireError> {
    let mut r = Reader::new(bytes);
    let user = user_in_range(params, r.u32()?)?;
    let payload = r.vector(params.field(), params.len())?;
    r.finish()?;
    Ok(PhaseOneMsg { user, payload })
}

pub fn encode_phase_two(msg: &PhaseTwoMsg, params: &SessionParams) -> Vec<u8> {
    check_payload(params, &msg.payload);
    let ids = msg.survivors.ids();
    let mut out = Vec::with_capacity(4 + 4 * ids.len() + params.len() * params.field().element_bytes());
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&id.get().to_le_bytes());
    }
    msg.payload.pack_into(&mut out);
    out
}

pub fn decode_phase_two(bytes: &[u8], params: &SessionParams) -> Result<PhaseTwoMsg, WireError> {
    let mut r = Reader::new(bytes);
    let count = r.u32()? as usize;
    if count > params.users() {
        return Err(WireError::TooManySurvivors {
            count,
            users: params.users(),
        });
    }
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(user_in_range(params, r.u32()?)?);
    }
    let survivors = SurvivorSet::from_sorted(ids, params.users()).map_err(WireError::BadSurvivors)?;
    let payload = r.vector(params.field(), params.len())?;
    r.finish()?;
    Ok(PhaseTwoMsg { survivors, payload })
}

/// Session announcement sent by the server before phase one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionHello {
    pub version: u8,
    pub scheme: Scheme,
    pub users: u32,
    pub len: u32,
    pub modulus: u64,
}

impl SessionHello {
    pub const ENCODED_LEN: usize = 18;

    pub fn from_params(params: &SessionParams) -> Self {
        Self {
            version: WIRE_VERSION,
            scheme: params.scheme(),
            users: params.users() as u32,
            len: params.len() as u32,
            modulus: params.field().modulus(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::ENCODED_LEN);
        out.push(self.version);
        out.push(self.scheme.wire_code());
        out.extend_from_slice(&self.users.to_le_bytes());
        out.extend_from_slice(&self.len.to_le_bytes());
        out.extend_from_slice(&self.modulus.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.u8()?;
        if version != WIRE_VERSION {
            return Err(WireError::UnsupportedVersion(version));
        }
        let code = r.u8()?;
        let scheme = Scheme::from_wire_code(code).ok_or(WireError::UnknownScheme(code))?;
        let hello = Self {
            version,
            scheme,
            users: r.u32()?,
            len: r.u32()?,
            modulus: r.u64()?,
        };
        r.finish()?;
        Ok(hello)
    }

    /// Validates the announced parameters; `broadcast_reply` is not carried
    /// on the wire.
    pub fn to_params(&self, broadcast_reply: bool) -> Result<SessionParams, WireError> {
        let field = FieldSpec::new(self.modulus)?;
        Ok(
            SessionParams::new(self.users as usize, field, self.len as usize, self.scheme)?
                .with_broadcast_reply(broadcast_reply),
        )
    }
}

pub fn phase_one_frame(msg: &PhaseOneMsg, params: &SessionParams) -> Frame {
    Frame::new(FrameType::PhaseOne, encode_phase_one(msg, params))
}

pub fn phase_two_frame(msg: &PhaseTwoMsg, params: &SessionParams) -> Frame {
    Frame::new(FrameType::PhaseTwo, encode_phase_two(msg, params))
}

pub fn hello_frame(params: &SessionParams) -> Frame {
    Frame::new(FrameType::SessionHello, SessionHello::from_params(params).encode())
}
