//! The wire codec over `Read`/`Write` byte streams, and a loopback TCP
//! session runner that uses it.
//!
//! Each user holds one connection to the server. A user that drops before
//! sending closes its connection without writing; the server treats EOF as a
//! dropout and closes collection once every connection has either delivered
//! a phase-one frame or ended.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;

use super::codec::{
    decode_phase_one, decode_phase_two, hello_frame, phase_one_frame, phase_two_frame, Frame, FrameType, SessionHello,
    WireError, FRAME_HEADER_LEN, MAX_FRAME_PAYLOAD,
};
use super::sim::{check_inputs, key_rng, DropPlan, SessionError, SessionOutcome, Traffic};
use crate::dealer::{provision, SessionParams, UserId, UserKey};
use crate::field::FieldVector;
use crate::protocol::{PhaseOneMsg, ProtocolError, ServerState, UserState};

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

/// Reads one frame. Returns `Ok(None)` on a clean EOF before the header.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, SessionError> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    let mut filled = 0;
    while filled < header.len() {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(WireError::Truncated {
                    needed: FRAME_HEADER_LEN,
                    available: filled,
                }
                .into())
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let kind = FrameType::from_tag(header[4])?;
    if len > MAX_FRAME_PAYLOAD {
        return Err(WireError::FrameTooLarge(len).into());
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            SessionError::Wire(WireError::Truncated {
                needed: len,
                available: 0,
            })
        } else {
            e.into()
        }
    })?;
    Ok(Some(Frame::new(kind, payload)))
}

enum Behaviour {
    Participate,
    DropBeforeSend,
    DropAfterSend,
}

fn user_side(
    params: SessionParams,
    key: UserKey,
    input: FieldVector,
    behaviour: Behaviour,
    addr: std::net::SocketAddr,
) -> Result<Option<Result<FieldVector, ProtocolError>>, SessionError> {
    let user = key.user();
    let mut conn = TcpStream::connect(addr)?;
    // identify the connection; ids are not secret
    conn.write_all(&user.get().to_le_bytes())?;
    let hello = read_frame(&mut conn)?.ok_or(WireError::Truncated {
        needed: FRAME_HEADER_LEN,
        available: 0,
    })?;
    let announced = SessionHello::decode(hello.expect(FrameType::SessionHello)?)?;
    if announced.to_params(params.broadcast_reply())? != params {
        return Err(WireError::HelloMismatch.into());
    }
    let mut st = UserState::new(params, input, key).map_err(|source| SessionError::BadInput { user, source })?;
    if let Behaviour::DropBeforeSend = behaviour {
        conn.shutdown(Shutdown::Both)?;
        return Ok(None);
    }
    write_frame(&mut conn, &phase_one_frame(&st.phase_one()?, &params))?;
    if let Behaviour::DropAfterSend = behaviour {
        conn.shutdown(Shutdown::Both)?;
        return Ok(None);
    }
    match read_frame(&mut conn)? {
        Some(frame) => {
            let msg = decode_phase_two(frame.expect(FrameType::PhaseTwo)?, &params)?;
            Ok(Some(st.decode(&msg)))
        }
        // server aborted the session
        None => Ok(None),
    }
}

/// Runs a session with the server on the calling thread and one thread per
/// user, all talking over loopback TCP.
pub fn run_session_tcp(
    params: &SessionParams,
    inputs: &[FieldVector],
    plan: &DropPlan,
    seed: u64,
) -> Result<SessionOutcome, SessionError> {
    check_inputs(params, inputs)?;
    plan.validate(params)?;
    let params = *params;
    let (_, keys) = provision(&params, &mut key_rng(seed));

    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    let addr = listener.local_addr()?;

    let handles: Vec<_> = keys
        .into_iter()
        .zip(inputs.iter().cloned())
        .map(|(key, input)| {
            let behaviour = if plan.before_send.contains(&key.user()) {
                Behaviour::DropBeforeSend
            } else if plan.after_send.contains(&key.user()) {
                Behaviour::DropAfterSend
            } else {
                Behaviour::Participate
            };
            let user = key.user();
            (
                user,
                thread::spawn(move || user_side(params, key, input, behaviour, addr)),
            )
        })
        .collect();

    let served = serve(&params, &listener);
    // User threads always terminate: the server drops every connection on
    // return, which unblocks any pending read.
    let mut results = BTreeMap::new();
    for (user, handle) in handles {
        let r = handle.join().expect("user thread panicked");
        results.insert(user, r);
    }
    let (survivors, traffic) = served?;

    let mut decoded = BTreeMap::new();
    for (user, r) in results {
        if let Some(outcome) = r? {
            decoded.insert(user, outcome);
        }
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

fn serve(
    params: &SessionParams,
    listener: &TcpListener,
) -> Result<(crate::protocol::SurvivorSet, Traffic), SessionError> {
    let mut conns: BTreeMap<UserId, TcpStream> = BTreeMap::new();
    let hello = hello_frame(params);
    for _ in 0..params.users() {
        let (mut conn, _) = listener.accept()?;
        let mut id = [0u8; 4];
        conn.read_exact(&mut id)?;
        let user = UserId(u32::from_le_bytes(id));
        params.check_user(user)?;
        write_frame(&mut conn, &hello)?;
        conns.insert(user, conn);
    }

    // one reader per connection, funnelled into a single ingestion point
    let (tx, rx) = mpsc::channel::<(UserId, Result<Option<Frame>, SessionError>)>();
    for (&user, conn) in &conns {
        let mut reader = conn.try_clone()?;
        let tx = tx.clone();
        thread::spawn(move || {
            let _ = tx.send((user, read_frame(&mut reader)));
        });
    }
    drop(tx);

    let mut traffic = Traffic::default();
    let mut server = ServerState::new(*params);
    for (_, frame) in rx {
        let Some(frame) = frame? else { continue };
        traffic.uplink_frames += 1;
        traffic.uplink_bytes += frame.encoded_len();
        let msg: PhaseOneMsg = decode_phase_one(frame.expect(FrameType::PhaseOne)?, params)?;
        server.receive(msg)?;
    }

    let replies = server.close_and_reply()?;
    let survivors = replies
        .values()
        .next()
        .map(|m| m.survivors.clone())
        .ok_or(ProtocolError::EmptySurvivorSet)?;
    let broadcast = params
        .broadcast_reply()
        .then(|| phase_two_frame(replies.values().next().unwrap(), params));
    if let Some(f) = &broadcast {
        traffic.downlink_frames += 1;
        traffic.downlink_bytes += f.encoded_len();
    }
    for (user, msg) in &replies {
        let frame = match &broadcast {
            Some(f) => f.clone(),
            None => {
                let f = phase_two_frame(msg, params);
                traffic.downlink_frames += 1;
                traffic.downlink_bytes += f.encoded_len();
                f
            }
        };
        // departed users may have closed their end already
        let _ = write_frame(conns.get_mut(user).expect("survivors are connected"), &frame);
    }
    Ok((survivors, traffic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn read_frame_handles_eof_and_truncation() {
        let frame = Frame::new(FrameType::PhaseOne, vec![1, 2, 3]);
        let mut bytes = frame.encode();
        bytes.extend(Frame::new(FrameType::PhaseTwo, vec![]).encode());
        let mut cur = Cursor::new(bytes);
        assert_eq!(read_frame(&mut cur).unwrap(), Some(frame));
        assert_eq!(read_frame(&mut cur).unwrap().unwrap().kind, FrameType::PhaseTwo);
        assert!(read_frame(&mut cur).unwrap().is_none());

        let mut cur = Cursor::new(vec![3, 0, 0]);
        assert!(matches!(
            read_frame(&mut cur),
            Err(SessionError::Wire(WireError::Truncated { .. }))
        ));
        let mut cur = Cursor::new(vec![3, 0, 0, 0, 1, 9]);
        assert!(matches!(
            read_frame(&mut cur),
            Err(SessionError::Wire(WireError::Truncated { .. }))
        ));
        let mut cur = Cursor::new(vec![0xff, 0xff, 0xff, 0xff, 1]);
        assert!(matches!(
            read_frame(&mut cur),
            Err(SessionError::Wire(WireError::FrameTooLarge(_)))
        ));
    }

    #[test]
    fn write_then_read() {
        let mut buf = Vec::new();
        let frame = Frame::new(FrameType::SessionHello, vec![9; 18]);
        write_frame(&mut buf, &frame).unwrap();
        assert_eq!(read_frame(&mut Cursor::new(buf)).unwrap(), Some(frame));
    }
}
