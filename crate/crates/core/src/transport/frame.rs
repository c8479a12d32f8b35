//! Frame layout, little-endian throughout:
//!
//! ```text
//! magic "REK1" (4) | msg_type (1) | session_id (16) | payload_len u64 (8) | payload
//! ```

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"REK1";
pub const HEADER_LEN: usize = 4 + 1 + 16 + 8;
/// Default cap on `payload_len`.
pub const DEFAULT_MAX_PAYLOAD: u64 = 1 << 32;

pub type SessionId = [u8; 16];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    /// Alice to Bob: `n_f`, `r1`, `r2`, `r3`.
    Randomness = 0x01,
    /// Party to server: role, sizes, masked shares, local gram, labels.
    ShareUpload = 0x02,
    Ack = 0x03,
    /// Error code and UTF-8 message.
    Error = 0x04,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0x01 => Ok(MessageType::Randomness),
            0x02 => Ok(MessageType::ShareUpload),
            0x03 => Ok(MessageType::Ack),
            0x04 => Ok(MessageType::Error),
            other => Err(Error::UnknownType(other)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MessageType,
    pub session_id: SessionId,
    pub payload: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub msg_type: MessageType,
    pub session_id: SessionId,
    pub payload_len: u64,
}

pub fn serialize_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&frame.session_id);
    out.extend_from_slice(&(frame.payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    out
}

pub fn parse_header(bytes: &[u8], max_payload: u64) -> Result<FrameHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let msg_type = MessageType::from_byte(bytes[4])?;
    let session_id: SessionId = bytes[5..21].try_into().unwrap();
    let payload_len = u64::from_le_bytes(bytes[21..29].try_into().unwrap());
    if payload_len > max_payload {
        return Err(Error::LengthMismatch(format!(
            "payload_len {payload_len} exceeds cap {max_payload}"
        )));
    }
    Ok(FrameHeader {
        msg_type,
        session_id,
        payload_len,
    })
}

pub fn deserialize_frame(bytes: &[u8]) -> Result<Frame> {
    deserialize_frame_with_cap(bytes, DEFAULT_MAX_PAYLOAD)
}

pub fn deserialize_frame_with_cap(bytes: &[u8], max_payload: u64) -> Result<Frame> {
    let header = parse_header(bytes, max_payload)?;
    let body = &bytes[HEADER_LEN..];
    let len = header.payload_len as usize;
    if body.len() < len {
        return Err(Error::Truncated {
            needed: HEADER_LEN + len,
            available: bytes.len(),
        });
    }
    if body.len() > len {
        return Err(Error::LengthMismatch(format!(
            "payload_len says {len} but {} bytes follow the header",
            body.len()
        )));
    }
    Ok(Frame {
        msg_type: header.msg_type,
        session_id: header.session_id,
        payload: body.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ack() -> Frame {
        Frame {
            msg_type: MessageType::Ack,
            session_id: [7; 16],
            payload: vec![],
        }
    }

    #[test]
    fn empty_ack_is_29_bytes() {
        let bytes = serialize_frame(&ack());
        assert_eq!(bytes.len(), 29);
        assert_eq!(&bytes[..4], b"REK1");
        assert_eq!(bytes[4], 0x03);
        assert_eq!(deserialize_frame(&bytes).unwrap(), ack());
    }

    #[test]
    fn corrupt_magic() {
        let mut bytes = serialize_frame(&ack());
        bytes[1] ^= 0xff;
        assert!(matches!(deserialize_frame(&bytes), Err(Error::BadMagic(_))));
    }

    #[test]
    fn unknown_type() {
        let mut bytes = serialize_frame(&ack());
        bytes[4] = 0x09;
        assert!(matches!(
            deserialize_frame(&bytes),
            Err(Error::UnknownType(0x09))
        ));
    }

    #[test]
    fn truncated_and_trailing() {
        let f = Frame {
            msg_type: MessageType::Randomness,
            session_id: [0; 16],
            payload: vec![1, 2, 3, 4],
        };
        let bytes = serialize_frame(&f);
        assert!(matches!(
            deserialize_frame(&bytes[..10]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            deserialize_frame(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            deserialize_frame(&long),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn cap_enforced() {
        let f = Frame {
            msg_type: MessageType::Randomness,
            session_id: [0; 16],
            payload: vec![0; 100],
        };
        let bytes = serialize_frame(&f);
        assert!(matches!(
            deserialize_frame_with_cap(&bytes, 99),
            Err(Error::LengthMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn roundtrip(kind in 1u8..=4, sid: [u8; 16], payload in proptest::collection::vec(any::<u8>(), 0..512)) {
            let f = Frame { msg_type: MessageType::from_byte(kind).unwrap(), session_id: sid, payload };
            let bytes = serialize_frame(&f);
            prop_assert_eq!(bytes.len(), HEADER_LEN + f.payload.len());
            prop_assert_eq!(deserialize_frame(&bytes).unwrap(), f);
        }
    }
}
