//! Wire protocol and transports.
//!
//! Frames are fixed-width little-endian binary so that measured payload
//! sizes can be compared byte-for-byte with the protocol's communication
//! cost. Links are either in-process channels or TCP streams; both carry
//! identical serialized frames.

mod frame;
mod link;
mod message;
mod session;

pub use frame::{
    deserialize_frame, deserialize_frame_with_cap, parse_header, serialize_frame, Frame,
    FrameHeader, MessageType, SessionId, DEFAULT_MAX_PAYLOAD, HEADER_LEN, MAGIC,
};
pub use link::{
    memory_pair, Connection, Endpoint, MemoryLink, Recorded, TcpLink, Transcript, TranscriptEntry,
};
pub use message::{decode_message, encode_message, error_code, ByteAccount, Message};
pub use session::{
    run_alice, run_bob, run_server, run_session, session_id_from_seed, timeout_from_env,
    PartyInput, PartyReport, RandomnessSource, ServerOutput, SessionOutcome, SessionParams,
    TransportKind, DEFAULT_TIMEOUT, TIMEOUT_ENV,
};
