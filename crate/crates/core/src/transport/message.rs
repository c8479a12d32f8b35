//! Payload encodings for each [`MessageType`].
//!
//! `RANDOMNESS`:
//! `n_f u64 | r1 [n_f x u64] | r2 [n_f x u64] | r3 u64`
//!
//! `SHARE_UPLOAD`:
//! `role u8 | n_f u64 | n u64 | masked_matrix [n columns x n_f x u64] |
//!  masked_scalars [n x u64] | local_gram [n x n x f64, row-major] |
//!  labels [n x (pitch f64, yaw f64)]`
//!
//! `ACK`: empty. `ERROR`: `code u16 | utf-8 message`.
//!
//! Every encoder also reports how many of the bytes it wrote carry masked
//! vectors (`protocol`) and how many are headers, the scalar `r3`, local
//! gram blocks or labels (`auxiliary`).

use std::ops::AddAssign;

use crate::encoding::DotRandomness;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::protocol::{LabelVector, Role, ShareBundle};
use crate::ring::RingElement;

use super::frame::MessageType;

pub mod error_code {
    pub const SESSION_MISMATCH: u16 = 1;
    pub const ROLE_CONFLICT: u16 = 2;
    pub const MALFORMED: u16 = 3;
    pub const UNEXPECTED: u16 = 4;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Randomness(DotRandomness),
    ShareUpload(ShareBundle),
    Ack,
    Error { code: u16, message: String },
}

impl Message {
    pub fn msg_type(&self) -> MessageType {
        match self {
            Message::Randomness(_) => MessageType::Randomness,
            Message::ShareUpload(_) => MessageType::ShareUpload,
            Message::Ack => MessageType::Ack,
            Message::Error { .. } => MessageType::Error,
        }
    }
}

/// Split of payload bytes into masked-vector traffic and everything else.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ByteAccount {
    pub protocol: u64,
    pub auxiliary: u64,
}

impl ByteAccount {
    pub fn total(&self) -> u64 {
        self.protocol + self.auxiliary
    }
}

impl AddAssign for ByteAccount {
    fn add_assign(&mut self, rhs: ByteAccount) {
        self.protocol += rhs.protocol;
        self.auxiliary += rhs.auxiliary;
    }
}

struct Writer {
    buf: Vec<u8>,
    account: ByteAccount,
}

impl Writer {
    fn with_capacity(cap: usize) -> Self {
        Writer {
            buf: Vec::with_capacity(cap),
            account: ByteAccount::default(),
        }
    }

    fn tally(&mut self, start: usize, protocol: bool) {
        let written = (self.buf.len() - start) as u64;
        if protocol {
            self.account.protocol += written;
        } else {
            self.account.auxiliary += written;
        }
    }

    fn u8(&mut self, v: u8) {
        let s = self.buf.len();
        self.buf.push(v);
        self.tally(s, false);
    }

    fn u16(&mut self, v: u16) {
        let s = self.buf.len();
        self.buf.extend_from_slice(&v.to_le_bytes());
        self.tally(s, false);
    }

    fn u64(&mut self, v: u64) {
        let s = self.buf.len();
        self.buf.extend_from_slice(&v.to_le_bytes());
        self.tally(s, false);
    }

    fn ring(&mut self, values: &[RingElement], protocol: bool) {
        let s = self.buf.len();
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.tally(s, protocol);
    }

    fn reals(&mut self, values: &[f64]) {
        let s = self.buf.len();
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.tally(s, false);
    }

    fn bytes(&mut self, b: &[u8]) {
        let s = self.buf.len();
        self.buf.extend_from_slice(b);
        self.tally(s, false);
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        match end {
            Some(end) => {
                let s = &self.data[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.data.len(),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        // Reject sizes that could not possibly fit in the remaining bytes.
        if v > self.data.len() as u64 {
            return Err(Error::Malformed(format!(
                "{what} = {v} exceeds payload size"
            )));
        }
        Ok(v as usize)
    }

    fn ring_vec(&mut self, n: usize) -> Result<Vec<RingElement>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(overflow)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| RingElement::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn real_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(overflow)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.data[self.pos..];
        self.pos = self.data.len();
        s
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::LengthMismatch(format!(
                "{} unread payload bytes",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn overflow() -> Error {
    Error::Malformed("size overflow".into())
}

/// Serializes a message payload and reports its byte split.
pub fn encode_message(msg: &Message) -> (Vec<u8>, ByteAccount) {
    let w = match msg {
        Message::Randomness(r) => {
            let mut w = Writer::with_capacity(16 + 16 * r.n_f() + 8);
            w.u64(r.n_f() as u64);
            w.ring(&r.r1, true);
            w.ring(&r.r2, true);
            w.ring(&[r.r3], false);
            w
        }
        Message::ShareUpload(b) => {
            let (n, n_f) = (b.n(), b.n_f());
            let mut w = Writer::with_capacity(17 + 8 * (n * n_f + n + n * n + 2 * n));
            w.u8(b.role.to_byte());
            w.u64(n_f as u64);
            w.u64(n as u64);
            for col in &b.masked_matrix {
                w.ring(col, true);
            }
            w.ring(&b.masked_scalars, true);
            w.reals(b.local_gram.as_slice());
            for t in &b.labels.targets {
                w.reals(t);
            }
            w
        }
        Message::Ack => Writer::with_capacity(0),
        Message::Error { code, message } => {
            let mut w = Writer::with_capacity(2 + message.len());
            w.u16(*code);
            w.bytes(message.as_bytes());
            w
        }
    };
    (w.buf, w.account)
}

pub fn decode_message(msg_type: MessageType, payload: &[u8]) -> Result<Message> {
    let mut r = Reader::new(payload);
    let msg = match msg_type {
        MessageType::Randomness => {
            let n_f = r.count("n_f")?;
            let r1 = r.ring_vec(n_f)?;
            let r2 = r.ring_vec(n_f)?;
            let r3 = r.ring_vec(1)?[0];
            Message::Randomness(DotRandomness { r1, r2, r3 })
        }
        MessageType::ShareUpload => {
            let role = Role::from_byte(r.u8()?)?;
            let n_f = r.count("n_f")?;
            let n = r.count("n")?;
            let mut masked_matrix = Vec::with_capacity(n);
            for _ in 0..n {
                masked_matrix.push(r.ring_vec(n_f)?);
            }
            let masked_scalars = r.ring_vec(n)?;
            let gram = r.real_vec(n.checked_mul(n).ok_or_else(overflow)?)?;
            let flat = r.real_vec(n.checked_mul(2).ok_or_else(overflow)?)?;
            let targets = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            Message::ShareUpload(ShareBundle {
                role,
                masked_matrix,
                masked_scalars,
                local_gram: DenseMatrix::from_row_major(n, n, gram),
                labels: LabelVector::new(targets),
            })
        }
        MessageType::Ack => Message::Ack,
        MessageType::Error => {
            let code = r.u16()?;
            let message = String::from_utf8(r.rest().to_vec())
                .map_err(|e| Error::Malformed(format!("error message is not utf-8: {e}")))?;
            Message::Error { code, message }
        }
    };
    r.finish()?;
    Ok(msg)
}
