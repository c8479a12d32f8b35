//! Role drivers and the single-shot session runner.
//!
//! Message flow for one session:
//!
//! ```text
//! Alice -> Bob     RANDOMNESS (r1, r2, r3)      Bob -> Alice   ACK
//! Alice -> Server  SHARE_UPLOAD (C1, C3, ...)   Server -> Alice ACK
//! Bob   -> Server  SHARE_UPLOAD (C2, C4, ...)   Server -> Bob   ACK
//! ```
//!
//! The server answers input parties with ACK or ERROR only.

use std::net::TcpListener;
use std::time::{Duration, Instant};

use crate::encoding::DotRandomness;
use crate::error::{Error, Result};
use crate::protocol::{
    alice_setup, assemble_gram, build_share_bundle, shuffle_dataset, FeatureMatrix, GramMatrix,
    LabelVector, Role, ShareBundle,
};
use crate::ring::{FixedPointCodec, RingRng};

use super::frame::{Frame, SessionId};
use super::link::{memory_pair, Connection, Endpoint, Recorded, TcpLink, Transcript};
use super::message::{decode_message, encode_message, error_code, ByteAccount, Message};

/// Default per-message timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Overrides [`DEFAULT_TIMEOUT`] when set to a whole number of seconds.
pub const TIMEOUT_ENV: &str = "REK_TIMEOUT_SECS";

pub fn timeout_from_env() -> Duration {
    std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_secs)
        .unwrap_or(DEFAULT_TIMEOUT)
}

/// Where Alice's masks come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomnessSource {
    Seeded(u64),
    Os,
    /// All-zero masks. Audit only.
    Zero,
}

impl RandomnessSource {
    pub fn rng(self) -> RingRng {
        match self {
            RandomnessSource::Seeded(s) => RingRng::seeded(s),
            RandomnessSource::Os => RingRng::os(),
            RandomnessSource::Zero => RingRng::zero(),
        }
    }
}

/// A party's private data: real-valued sample columns and gaze labels.
#[derive(Clone, Debug)]
pub struct PartyInput {
    pub samples: Vec<Vec<f64>>,
    pub labels: LabelVector,
    pub shuffle_seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct SessionParams {
    pub session_id: SessionId,
    pub codec: FixedPointCodec,
    pub timeout: Duration,
}

impl Default for SessionParams {
    fn default() -> Self {
        SessionParams {
            session_id: [0; 16],
            codec: FixedPointCodec::default(),
            timeout: timeout_from_env(),
        }
    }
}

/// Derives a session id from a 64-bit seed.
pub fn session_id_from_seed(seed: u64) -> SessionId {
    let mut id = [0u8; 16];
    id[..8].copy_from_slice(b"regaze\0\0");
    id[8..].copy_from_slice(&seed.to_le_bytes());
    id
}

#[derive(Clone, Debug)]
pub struct PartyReport {
    /// Shuffle, mask generation (Alice) and share construction.
    pub encode_time: Duration,
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct ServerOutput {
    pub gram: GramMatrix,
    /// Pooled labels, Alice's rows first.
    pub labels: LabelVector,
    pub assemble_time: Duration,
}

fn send(conn: &mut dyn Connection, sid: SessionId, msg: &Message) -> Result<()> {
    let (payload, account) = encode_message(msg);
    let frame = Frame {
        msg_type: msg.msg_type(),
        session_id: sid,
        payload,
    };
    conn.send_accounted(&frame, account)
}

fn recv(conn: &mut dyn Connection, sid: SessionId, timeout: Duration) -> Result<Message> {
    let frame = conn.recv_frame(timeout)?;
    if frame.session_id != sid {
        let _ = send(
            conn,
            frame.session_id,
            &Message::Error {
                code: error_code::SESSION_MISMATCH,
                message: "unexpected session id".into(),
            },
        );
        return Err(Error::Protocol(format!(
            "session id mismatch: expected {}, got {}",
            hex::encode(sid),
            hex::encode(frame.session_id)
        )));
    }
    match decode_message(frame.msg_type, &frame.payload)? {
        Message::Error { code, message } => Err(Error::PeerError { code, message }),
        m => Ok(m),
    }
}

fn expect_ack(conn: &mut dyn Connection, sid: SessionId, timeout: Duration) -> Result<()> {
    match recv(conn, sid, timeout) {
        Ok(Message::Ack) => Ok(()),
        Ok(other) => Err(Error::Protocol(format!(
            "expected ACK, got {:?}",
            other.msg_type()
        ))),
        Err(Error::Timeout(t, _)) => Err(Error::Timeout(t, "ACK")),
        Err(e) => Err(e),
    }
}

fn prepare(input: &PartyInput, codec: &FixedPointCodec) -> Result<(FeatureMatrix, LabelVector)> {
    if input.samples.is_empty() {
        return Err(Error::DimensionMismatch("party holds no samples".into()));
    }
    let features = FeatureMatrix::from_real(codec, &input.samples)?;
    let (features, labels, _perm) =
        shuffle_dataset(features, input.labels.clone(), input.shuffle_seed)?;
    Ok((features, labels))
}

/// Alice: shuffle, draw masks, send them to Bob, upload `(C1, C3)`.
pub fn run_alice(
    input: &PartyInput,
    randomness: RandomnessSource,
    params: &SessionParams,
    bob: &mut dyn Connection,
    server: &mut dyn Connection,
) -> Result<PartyReport> {
    let sid = params.session_id;
    let start = Instant::now();
    let (features, labels) = prepare(input, &params.codec)?;
    let r = alice_setup(features.n_f(), &mut randomness.rng())?;
    let mut encode_time = start.elapsed();

    send(bob, sid, &Message::Randomness(r.clone()))?;
    expect_ack(bob, sid, params.timeout)?;

    let start = Instant::now();
    let bundle = build_share_bundle(Role::Left, &params.codec, &features, &labels, &r)?;
    encode_time += start.elapsed();
    send(server, sid, &Message::ShareUpload(bundle))?;
    expect_ack(server, sid, params.timeout)?;
    Ok(PartyReport {
        encode_time,
        n: features.n(),
    })
}

/// Bob: shuffle, wait for Alice's masks, upload `(C2, C4)`.
pub fn run_bob(
    input: &PartyInput,
    params: &SessionParams,
    alice: &mut dyn Connection,
    server: &mut dyn Connection,
) -> Result<PartyReport> {
    let sid = params.session_id;
    let start = Instant::now();
    let (features, labels) = prepare(input, &params.codec)?;
    let mut encode_time = start.elapsed();

    let r: DotRandomness = match recv(alice, sid, params.timeout)? {
        Message::Randomness(r) => r,
        other => {
            return Err(Error::Protocol(format!(
                "expected RANDOMNESS, got {:?}",
                other.msg_type()
            )))
        }
    };
    if r.n_f() != features.n_f() {
        let msg = format!(
            "randomness has n_f = {}, data has {}",
            r.n_f(),
            features.n_f()
        );
        let _ = send(
            alice,
            sid,
            &Message::Error {
                code: error_code::MALFORMED,
                message: msg.clone(),
            },
        );
        return Err(Error::DimensionMismatch(msg));
    }
    send(alice, sid, &Message::Ack)?;

    let start = Instant::now();
    let bundle = build_share_bundle(Role::Right, &params.codec, &features, &labels, &r)?;
    encode_time += start.elapsed();
    send(server, sid, &Message::ShareUpload(bundle))?;
    expect_ack(server, sid, params.timeout)?;
    Ok(PartyReport {
        encode_time,
        n: features.n(),
    })
}

fn receive_upload(conn: &mut dyn Connection, params: &SessionParams) -> Result<ShareBundle> {
    let sid = params.session_id;
    match recv(conn, sid, params.timeout)? {
        Message::ShareUpload(b) => match b.validate() {
            Ok(()) => Ok(b),
            Err(e) => {
                let _ = send(
                    conn,
                    sid,
                    &Message::Error {
                        code: error_code::MALFORMED,
                        message: e.to_string(),
                    },
                );
                Err(e)
            }
        },
        other => {
            let _ = send(
                conn,
                sid,
                &Message::Error {
                    code: error_code::UNEXPECTED,
                    message: format!("expected SHARE_UPLOAD, got {:?}", other.msg_type()),
                },
            );
            Err(Error::Protocol(format!(
                "expected SHARE_UPLOAD, got {:?}",
                other.msg_type()
            )))
        }
    }
}

/// Server: accept both uploads concurrently, acknowledge, assemble `K`.
pub fn run_server(
    params: &SessionParams,
    first: &mut dyn Connection,
    second: &mut dyn Connection,
) -> Result<ServerOutput> {
    let (a, b) = std::thread::scope(|s| {
        let h = s.spawn(|| receive_upload(&mut *second, params));
        let a = receive_upload(&mut *first, params);
        (a, h.join().expect("upload receiver panicked"))
    });
    let (a, b) = (a?, b?);
    let sid = params.session_id;
    if a.role == b.role {
        let msg = Message::Error {
            code: error_code::ROLE_CONFLICT,
            message: format!("both uploads claim role {}", a.role.name()),
        };
        let _ = send(first, sid, &msg);
        let _ = send(second, sid, &msg);
        return Err(Error::RoleConflict(a.role.name()));
    }
    let start = Instant::now();
    let gram = match assemble_gram(&a, &b, &params.codec) {
        Ok(g) => g,
        Err(e) => {
            let msg = Message::Error {
                code: error_code::MALFORMED,
                message: e.to_string(),
            };
            let _ = send(first, sid, &msg);
            let _ = send(second, sid, &msg);
            return Err(e);
        }
    };
    let assemble_time = start.elapsed();
    send(first, sid, &Message::Ack)?;
    send(second, sid, &Message::Ack)?;
    let (left, right) = if a.role == Role::Left { (a, b) } else { (b, a) };
    Ok(ServerOutput {
        gram,
        labels: left.labels.concat(&right.labels),
        assemble_time,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    /// Loopback TCP on ephemeral ports.
    TcpLoopback,
}

#[derive(Clone, Debug)]
pub struct SessionOutcome {
    pub server: ServerOutput,
    pub alice: PartyReport,
    pub bob: PartyReport,
    pub transcript: Transcript,
}

impl SessionOutcome {
    /// Masked-vector payload bytes across all messages.
    pub fn protocol_bytes(&self) -> u64 {
        self.transcript.total_account().protocol
    }

    pub fn auxiliary_bytes(&self) -> u64 {
        self.transcript.total_account().auxiliary
    }

    pub fn byte_account(&self) -> ByteAccount {
        self.transcript.total_account()
    }
}

type Link = Box<dyn Connection>;

struct Links {
    alice_bob: Link,
    bob_alice: Link,
    alice_server: Link,
    server_alice: Link,
    bob_server: Link,
    server_bob: Link,
}

fn memory_links() -> Links {
    let (ab, ba) = memory_pair();
    let (as_, sa) = memory_pair();
    let (bs, sb) = memory_pair();
    Links {
        alice_bob: Box::new(ab),
        bob_alice: Box::new(ba),
        alice_server: Box::new(as_),
        server_alice: Box::new(sa),
        bob_server: Box::new(bs),
        server_bob: Box::new(sb),
    }
}

fn tcp_links(timeout: Duration) -> Result<Links> {
    let pair = || -> Result<(Link, Link)> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let client = TcpLink::connect(addr, timeout)?;
        let server = TcpLink::accept(&listener, timeout)?;
        Ok((Box::new(client), Box::new(server)))
    };
    let (alice_bob, bob_alice) = pair()?;
    let (alice_server, server_alice) = pair()?;
    let (bob_server, server_bob) = pair()?;
    Ok(Links {
        alice_bob,
        bob_alice,
        alice_server,
        server_alice,
        bob_server,
        server_bob,
    })
}

/// Runs all three roles on their own threads over the chosen transport.
pub fn run_session(
    kind: TransportKind,
    alice: &PartyInput,
    alice_randomness: RandomnessSource,
    bob: &PartyInput,
    params: &SessionParams,
    keep_frames: bool,
) -> Result<SessionOutcome> {
    let links = match kind {
        TransportKind::InProcess => memory_links(),
        TransportKind::TcpLoopback => tcp_links(params.timeout)?,
    };
    let transcript = Transcript::new(keep_frames);
    let rec = |c: Link, from, to| Recorded::new(c, from, to, transcript.clone());
    let mut a_bob = rec(links.alice_bob, Endpoint::Alice, Endpoint::Bob);
    let mut a_srv = rec(links.alice_server, Endpoint::Alice, Endpoint::Server);
    let mut b_alice = rec(links.bob_alice, Endpoint::Bob, Endpoint::Alice);
    let mut b_srv = rec(links.bob_server, Endpoint::Bob, Endpoint::Server);
    let mut s_alice = rec(links.server_alice, Endpoint::Server, Endpoint::Alice);
    let mut s_bob = rec(links.server_bob, Endpoint::Server, Endpoint::Bob);

    let (ra, rb, rs) = std::thread::scope(|s| {
        // Links move into the party threads so a failing party hangs up
        // instead of leaving its peers waiting for the timeout.
        let ha =
            s.spawn(move || run_alice(alice, alice_randomness, params, &mut a_bob, &mut a_srv));
        let hb = s.spawn(move || run_bob(bob, params, &mut b_alice, &mut b_srv));
        let rs = run_server(params, &mut s_alice, &mut s_bob);
        drop((s_alice, s_bob));
        (
            ha.join().expect("alice panicked"),
            hb.join().expect("bob panicked"),
            rs,
        )
    });
    match (ra, rb, rs) {
        (Ok(alice), Ok(bob), Ok(server)) => Ok(SessionOutcome {
            server,
            alice,
            bob,
            transcript,
        }),
        (ra, rb, rs) => {
            // Report the root cause rather than the knock-on timeouts.
            let errors: Vec<Error> = [ra.err(), rb.err(), rs.err()]
                .into_iter()
                .flatten()
                .collect();
            let root = errors
                .iter()
                .position(|e| !matches!(e, Error::Timeout(..) | Error::ChannelClosed))
                .unwrap_or(0);
            Err(errors.into_iter().nth(root).expect("at least one error"))
        }
    }
}
