//! Bit-exact framed wire protocol plus byte accounting.
//!
//! Frame layout: magic "CHTA" (4B) | version (1B, = 1) | msg_type (1B) |
//! payload_len (4B LE) | payload | crc32 (4B LE) over msg_type + payload.
//!
//! One duplex byte stream carries one session; messages strictly alternate
//! per the protocol state machine, and sequence numbers inside CT_UPLOAD /
//! BLINDED_LINEAR identify ciphertext order. INDICATORS frames are the
//! offline-capable messages; their bytes are tallied separately so online
//! cost comparisons exclude them.

mod channel;

pub use channel::{connect, loopback, serve, serve_once, Channel, Duplex, StreamDuplex};

use crate::crc32::crc32;

pub const MAGIC: [u8; 4] = *b"CHTA";
pub const VERSION: u8 = 1;
pub const DEFAULT_PORT: u16 = 7462;
pub const ADDR_ENV: &str = "CHEETAH_ADDR";

/// Deterministic error codes carried by ERROR frames.
pub mod errcode {
    pub const PARAMS_DIGEST: u16 = 1;
    pub const NETWORK_DIGEST: u16 = 2;
    pub const UNEXPECTED_MESSAGE: u16 = 3;
    pub const BAD_FRAME: u16 = 4;
    pub const CRYPTO: u16 = 5;
    pub const INTERNAL: u16 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("crc mismatch")]
    Crc,
    #[error("frame length {got} out of bounds (max {max})")]
    Length { got: usize, max: usize },
    #[error("malformed {0} payload")]
    Malformed(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Hello = 0,
    CtUpload = 1,
    BlindedLinear = 2,
    Indicators = 3,
    NonlinearShare = 4,
    Result = 5,
    Error = 6,
}

impl MsgType {
    pub const COUNT: usize = 7;

    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            0 => MsgType::Hello,
            1 => MsgType::CtUpload,
            2 => MsgType::BlindedLinear,
            3 => MsgType::Indicators,
            4 => MsgType::NonlinearShare,
            5 => MsgType::Result,
            6 => MsgType::Error,
            other => return Err(WireError::UnknownType(other)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Hello => "HELLO",
            MsgType::CtUpload => "CT_UPLOAD",
            MsgType::BlindedLinear => "BLINDED_LINEAR",
            MsgType::Indicators => "INDICATORS",
            MsgType::NonlinearShare => "NONLINEAR_SHARE",
            MsgType::Result => "RESULT",
            MsgType::Error => "ERROR",
        }
    }

    /// Offline-capable messages are excluded from online byte tallies.
    pub fn is_offline(self) -> bool {
        matches!(self, MsgType::Indicators)
    }
}

/// Which offline vector an INDICATORS frame carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum IndicatorKind {
    Id1 = 0,
    Id2 = 1,
    ExpR1 = 2,
    VVec = 3,
    R2 = 4,
}

impl IndicatorKind {
    fn from_byte(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            0 => IndicatorKind::Id1,
            1 => IndicatorKind::Id2,
            2 => IndicatorKind::ExpR1,
            3 => IndicatorKind::VVec,
            4 => IndicatorKind::R2,
            _ => return Err(WireError::Malformed("indicator kind")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        params_digest: u64,
        network_digest: u64,
    },
    CtUpload {
        layer: u16,
        seq: u16,
        ct: Vec<u8>,
    },
    BlindedLinear {
        layer: u16,
        seq: u16,
        ct: Vec<u8>,
    },
    /// One frame per indicator vector; multiple ciphertexts are
    /// concatenated (all serialized ciphertexts have the same length).
    Indicators {
        layer: u16,
        which: IndicatorKind,
        cts: Vec<Vec<u8>>,
    },
    NonlinearShare {
        layer: u16,
        ct: Vec<u8>,
    },
    Result {
        ct: Vec<u8>,
    },
    Error {
        code: u16,
        message: String,
    },
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::Hello { .. } => MsgType::Hello,
            Message::CtUpload { .. } => MsgType::CtUpload,
            Message::BlindedLinear { .. } => MsgType::BlindedLinear,
            Message::Indicators { .. } => MsgType::Indicators,
            Message::NonlinearShare { .. } => MsgType::NonlinearShare,
            Message::Result { .. } => MsgType::Result,
            Message::Error { .. } => MsgType::Error,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            Message::Hello {
                params_digest,
                network_digest,
            } => {
                let mut p = Vec::with_capacity(16);
                p.extend_from_slice(&params_digest.to_le_bytes());
                p.extend_from_slice(&network_digest.to_le_bytes());
                p
            }
            Message::CtUpload { layer, seq, ct } | Message::BlindedLinear { layer, seq, ct } => {
                let mut p = Vec::with_capacity(4 + ct.len());
                p.extend_from_slice(&layer.to_le_bytes());
                p.extend_from_slice(&seq.to_le_bytes());
                p.extend_from_slice(ct);
                p
            }
            Message::Indicators { layer, which, cts } => {
                let mut p = Vec::with_capacity(3 + cts.iter().map(Vec::len).sum::<usize>());
                p.extend_from_slice(&layer.to_le_bytes());
                p.push(*which as u8);
                for ct in cts {
                    p.extend_from_slice(ct);
                }
                p
            }
            Message::NonlinearShare { layer, ct } => {
                let mut p = Vec::with_capacity(2 + ct.len());
                p.extend_from_slice(&layer.to_le_bytes());
                p.extend_from_slice(ct);
                p
            }
            Message::Result { ct } => ct.clone(),
            Message::Error { code, message } => {
                let mut p = Vec::with_capacity(2 + message.len());
                p.extend_from_slice(&code.to_le_bytes());
                p.extend_from_slice(message.as_bytes());
                p
            }
        }
    }

    /// Parse a payload; `ct_len` is the fixed serialized-ciphertext size
    /// for the session's parameters.
    pub fn parse(msg_type: MsgType, payload: &[u8], ct_len: usize) -> Result<Message, WireError> {
        fn u16le(b: &[u8]) -> u16 {
            u16::from_le_bytes([b[0], b[1]])
        }
        Ok(match msg_type {
            MsgType::Hello => {
                if payload.len() != 16 {
                    return Err(WireError::Malformed("HELLO"));
                }
                Message::Hello {
                    params_digest: u64::from_le_bytes(payload[0..8].try_into().unwrap()),
                    network_digest: u64::from_le_bytes(payload[8..16].try_into().unwrap()),
                }
            }
            MsgType::CtUpload | MsgType::BlindedLinear => {
                if payload.len() != 4 + ct_len {
                    return Err(WireError::Malformed("ciphertext message"));
                }
                let layer = u16le(&payload[0..2]);
                let seq = u16le(&payload[2..4]);
                let ct = payload[4..].to_vec();
                if msg_type == MsgType::CtUpload {
                    Message::CtUpload { layer, seq, ct }
                } else {
                    Message::BlindedLinear { layer, seq, ct }
                }
            }
            MsgType::Indicators => {
                if payload.len() < 3 || (payload.len() - 3) % ct_len != 0 || payload.len() == 3 {
                    return Err(WireError::Malformed("INDICATORS"));
                }
                Message::Indicators {
                    layer: u16le(&payload[0..2]),
                    which: IndicatorKind::from_byte(payload[2])?,
                    cts: payload[3..]
                        .chunks_exact(ct_len)
                        .map(<[u8]>::to_vec)
                        .collect(),
                }
            }
            MsgType::NonlinearShare => {
                if payload.len() != 2 + ct_len {
                    return Err(WireError::Malformed("NONLINEAR_SHARE"));
                }
                Message::NonlinearShare {
                    layer: u16le(&payload[0..2]),
                    ct: payload[2..].to_vec(),
                }
            }
            MsgType::Result => {
                if payload.len() != ct_len {
                    return Err(WireError::Malformed("RESULT"));
                }
                Message::Result {
                    ct: payload.to_vec(),
                }
            }
            MsgType::Error => {
                if payload.len() < 2 {
                    return Err(WireError::Malformed("ERROR"));
                }
                Message::Error {
                    code: u16le(&payload[0..2]),
                    message: String::from_utf8_lossy(&payload[2..]).into_owned(),
                }
            }
        })
    }
}

/// Hard cap on frame payloads; generous for the largest MIMO indicator
/// bundles at n = 4096 and two ciphertext primes.
pub const MAX_PAYLOAD: usize = 256 << 20;

pub fn frame_encode(msg: &Message) -> Vec<u8> {
    let payload = msg.payload();
    assert!(payload.len() <= MAX_PAYLOAD);
    let mut out = Vec::with_capacity(14 + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    let t = msg.msg_type() as u8;
    out.push(t);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    let mut crc_input = Vec::with_capacity(1 + payload.len());
    crc_input.push(t);
    crc_input.extend_from_slice(&payload);
    out.extend_from_slice(&crc32(&crc_input).to_le_bytes());
    out
}

/// Decode one full frame from a byte slice; returns the message and the
/// total frame length consumed.
pub fn frame_decode(bytes: &[u8], ct_len: usize) -> Result<(Message, usize), WireError> {
    if bytes.len() < 14 {
        return Err(WireError::Length {
            got: bytes.len(),
            max: MAX_PAYLOAD,
        });
    }
    if bytes[0..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(WireError::BadVersion(bytes[4]));
    }
    let t = bytes[5];
    let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::Length {
            got: len,
            max: MAX_PAYLOAD,
        });
    }
    if bytes.len() < 14 + len {
        return Err(WireError::Length {
            got: bytes.len(),
            max: 14 + len,
        });
    }
    let payload = &bytes[10..10 + len];
    let crc = u32::from_le_bytes(bytes[10 + len..14 + len].try_into().unwrap());
    let mut crc_input = Vec::with_capacity(1 + len);
    crc_input.push(t);
    crc_input.extend_from_slice(payload);
    if crc32(&crc_input) != crc {
        return Err(WireError::Crc);
    }
    let msg_type = MsgType::from_byte(t)?;
    Ok((Message::parse(msg_type, payload, ct_len)?, 14 + len))
}

/// Per-direction byte tallies with the online/offline split and a
/// per-message-type histogram.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ByteCounters {
    pub online_sent: u64,
    pub online_received: u64,
    pub offline_sent: u64,
    pub offline_received: u64,
    pub sent_by_type: [u64; MsgType::COUNT],
    pub received_by_type: [u64; MsgType::COUNT],
}

impl ByteCounters {
    pub fn total_sent(&self) -> u64 {
        self.online_sent + self.offline_sent
    }
    pub fn total_received(&self) -> u64 {
        self.online_received + self.offline_received
    }

    pub fn note_sent(&mut self, t: MsgType, bytes: usize) {
        if t.is_offline() {
            self.offline_sent += bytes as u64;
        } else {
            self.online_sent += bytes as u64;
        }
        self.sent_by_type[t as usize] += bytes as u64;
    }

    pub fn note_received(&mut self, t: MsgType, bytes: usize) {
        if t.is_offline() {
            self.offline_received += bytes as u64;
        } else {
            self.online_received += bytes as u64;
        }
        self.received_by_type[t as usize] += bytes as u64;
    }
}
