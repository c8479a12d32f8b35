//! Point-to-point links carrying serialized frames.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::frame::{
    deserialize_frame_with_cap, parse_header, serialize_frame, Frame, MessageType,
    DEFAULT_MAX_PAYLOAD, HEADER_LEN,
};
use super::message::ByteAccount;

/// A bidirectional, ordered, reliable frame link.
pub trait Connection: Send {
    fn send_frame(&mut self, frame: &Frame) -> Result<()>;
    fn recv_frame(&mut self, timeout: Duration) -> Result<Frame>;

    /// Sends a frame whose payload split is already known. Recording links
    /// log the split; plain links ignore it.
    fn send_accounted(&mut self, frame: &Frame, _account: ByteAccount) -> Result<()> {
        self.send_frame(frame)
    }
}

impl<C: Connection + ?Sized> Connection for Box<C> {
    fn send_frame(&mut self, frame: &Frame) -> Result<()> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Frame> {
        (**self).recv_frame(timeout)
    }

    fn send_accounted(&mut self, frame: &Frame, account: ByteAccount) -> Result<()> {
        (**self).send_accounted(frame, account)
    }
}

/// In-process link over a pair of channels. Frames travel serialized so
/// that both transports move identical bytes.
pub struct MemoryLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    max_payload: u64,
}

/// Two connected ends.
pub fn memory_pair() -> (MemoryLink, MemoryLink) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        MemoryLink {
            tx: a_tx,
            rx: a_rx,
            max_payload: DEFAULT_MAX_PAYLOAD,
        },
        MemoryLink {
            tx: b_tx,
            rx: b_rx,
            max_payload: DEFAULT_MAX_PAYLOAD,
        },
    )
}

impl Connection for MemoryLink {
    fn send_frame(&mut self, frame: &Frame) -> Result<()> {
        self.tx
            .send(serialize_frame(frame))
            .map_err(|_| Error::ChannelClosed)
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Frame> {
        match self.rx.recv_timeout(timeout) {
            Ok(bytes) => deserialize_frame_with_cap(&bytes, self.max_payload),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(timeout, "frame")),
            Err(RecvTimeoutError::Disconnected) => Err(Error::ChannelClosed),
        }
    }
}

pub struct TcpLink {
    stream: TcpStream,
    max_payload: u64,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpLink {
            stream,
            max_payload: DEFAULT_MAX_PAYLOAD,
        })
    }

    /// Connects, retrying refused attempts until `timeout` elapses.
    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self> {
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
        let deadline = Instant::now() + timeout;
        loop {
            for a in &addrs {
                let left = deadline.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    break;
                }
                if let Ok(s) = TcpStream::connect_timeout(a, left) {
                    return TcpLink::new(s);
                }
            }
            if Instant::now() >= deadline {
                return Err(Error::Timeout(timeout, "peer connection"));
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    /// Accepts one connection or times out.
    pub fn accept(listener: &TcpListener, timeout: Duration) -> Result<Self> {
        listener.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        let res = loop {
            match listener.accept() {
                Ok((s, _)) => break Ok(s),
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        break Err(Error::Timeout(timeout, "incoming connection"));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => break Err(e.into()),
            }
        };
        listener.set_nonblocking(false)?;
        let s = res?;
        s.set_nonblocking(false)?;
        TcpLink::new(s)
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.stream.peer_addr().ok()
    }
}

fn map_timeout(e: std::io::Error, timeout: Duration) -> Error {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Timeout(timeout, "frame"),
        ErrorKind::UnexpectedEof => Error::ChannelClosed,
        _ => Error::Io(e),
    }
}

impl Connection for TcpLink {
    fn send_frame(&mut self, frame: &Frame) -> Result<()> {
        self.stream.write_all(&serialize_frame(frame))?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Frame> {
        self.stream.set_read_timeout(Some(timeout))?;
        let mut header = [0u8; HEADER_LEN];
        self.stream
            .read_exact(&mut header)
            .map_err(|e| map_timeout(e, timeout))?;
        let h = parse_header(&header, self.max_payload)?;
        let mut payload = vec![0u8; h.payload_len as usize];
        self.stream
            .read_exact(&mut payload)
            .map_err(|e| map_timeout(e, timeout))?;
        Ok(Frame {
            msg_type: h.msg_type,
            session_id: h.session_id,
            payload,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Alice,
    Bob,
    Server,
}

#[derive(Clone, Debug)]
pub struct TranscriptEntry {
    pub from: Endpoint,
    pub to: Endpoint,
    pub msg_type: MessageType,
    pub payload_len: u64,
    pub account: ByteAccount,
    /// SHA-256 of the serialized frame.
    pub digest: [u8; 32],
    /// Full serialized frame, when the transcript keeps them.
    pub frame: Option<Vec<u8>>,
}

/// Ordered log of every frame sent during a session.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    inner: Arc<Mutex<Vec<TranscriptEntry>>>,
    keep_frames: bool,
}

impl Transcript {
    pub fn new(keep_frames: bool) -> Self {
        Transcript {
            inner: Arc::default(),
            keep_frames,
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.inner.lock().unwrap().clone()
    }

    /// Everything delivered to `who`.
    pub fn view_of(&self, who: Endpoint) -> Vec<TranscriptEntry> {
        self.entries().into_iter().filter(|e| e.to == who).collect()
    }

    pub fn count(&self, msg_type: MessageType) -> usize {
        self.inner
            .lock()
            .unwrap()
            .iter()
            .filter(|e| e.msg_type == msg_type)
            .count()
    }

    pub fn total_account(&self) -> ByteAccount {
        let mut acc = ByteAccount::default();
        for e in self.inner.lock().unwrap().iter() {
            acc += e.account;
        }
        acc
    }

    /// Bytes spent on frame headers.
    pub fn framing_bytes(&self) -> u64 {
        self.inner.lock().unwrap().len() as u64 * HEADER_LEN as u64
    }

    fn record(&self, from: Endpoint, to: Endpoint, frame: &Frame, account: ByteAccount) {
        let bytes = serialize_frame(frame);
        let digest: [u8; 32] = Sha256::digest(&bytes).into();
        let entry = TranscriptEntry {
            from,
            to,
            msg_type: frame.msg_type,
            payload_len: frame.payload.len() as u64,
            account,
            digest,
            frame: self.keep_frames.then_some(bytes),
        };
        self.inner.lock().unwrap().push(entry);
    }
}

/// Wraps a connection and logs every outgoing frame.
pub struct Recorded<C> {
    inner: C,
    from: Endpoint,
    to: Endpoint,
    transcript: Transcript,
}

impl<C: Connection> Recorded<C> {
    pub fn new(inner: C, from: Endpoint, to: Endpoint, transcript: Transcript) -> Self {
        Recorded {
            inner,
            from,
            to,
            transcript,
        }
    }
}

impl<C: Connection> Connection for Recorded<C> {
    fn send_frame(&mut self, frame: &Frame) -> Result<()> {
        let account = ByteAccount {
            protocol: 0,
            auxiliary: frame.payload.len() as u64,
        };
        self.send_accounted(frame, account)
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Frame> {
        self.inner.recv_frame(timeout)
    }

    fn send_accounted(&mut self, frame: &Frame, account: ByteAccount) -> Result<()> {
        self.transcript.record(self.from, self.to, frame, account);
        self.inner.send_frame(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(kind: MessageType, payload: Vec<u8>) -> Frame {
        Frame {
            msg_type: kind,
            session_id: [1; 16],
            payload,
        }
    }

    #[test]
    fn memory_roundtrip_and_timeout() {
        let (mut a, mut b) = memory_pair();
        a.send_frame(&frame(MessageType::Ack, vec![])).unwrap();
        assert_eq!(
            b.recv_frame(Duration::from_secs(1)).unwrap(),
            frame(MessageType::Ack, vec![])
        );
        assert!(matches!(
            b.recv_frame(Duration::from_millis(20)),
            Err(Error::Timeout(..))
        ));
        drop(a);
        assert!(matches!(
            b.recv_frame(Duration::from_millis(20)),
            Err(Error::ChannelClosed)
        ));
    }

    #[test]
    fn tcp_roundtrip_and_timeout() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let t = std::thread::spawn(move || {
            let mut server = TcpLink::accept(&listener, Duration::from_secs(5)).unwrap();
            let f = server.recv_frame(Duration::from_secs(5)).unwrap();
            server.send_frame(&f).unwrap();
        });
        let mut client = TcpLink::connect(addr, Duration::from_secs(5)).unwrap();
        let f = frame(MessageType::Randomness, (0..=255).collect());
        client.send_frame(&f).unwrap();
        assert_eq!(client.recv_frame(Duration::from_secs(5)).unwrap(), f);
        t.join().unwrap();
        // peer gone: EOF
        assert!(client.recv_frame(Duration::from_millis(200)).is_err());
    }

    #[test]
    fn tcp_connect_times_out_without_listener() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let res = TcpLink::connect(("127.0.0.1", port), Duration::from_millis(150));
        assert!(matches!(res, Err(Error::Timeout(..))));
    }

    #[test]
    fn recorder_logs_sends() {
        let (a, mut b) = memory_pair();
        let t = Transcript::new(true);
        let mut rec = Recorded::new(a, Endpoint::Alice, Endpoint::Bob, t.clone());
        rec.send_accounted(
            &frame(MessageType::Randomness, vec![1, 2, 3, 4]),
            ByteAccount {
                protocol: 3,
                auxiliary: 1,
            },
        )
        .unwrap();
        b.recv_frame(Duration::from_secs(1)).unwrap();
        let e = t.entries();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].account.protocol, 3);
        assert_eq!(e[0].frame.as_ref().unwrap().len(), HEADER_LEN + 4);
        assert_eq!(t.view_of(Endpoint::Bob).len(), 1);
        assert!(t.view_of(Endpoint::Server).is_empty());
    }
}
