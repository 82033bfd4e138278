//! Wire format of the quantum protocol (QP) frame.
//!
//! A frame is a 20-byte Ethernet header followed by a 20-byte QP header. There is
//! no payload: the data travelling with a frame are the qubits on the paired
//! quantum link.
//!
//! ```text
//! Ethernet header                         QP header
//!  0..6   destination MAC                  20..24  sequence number
//!  6..12  source MAC                       24..28  ack sequence number
//! 12..14  EtherType (0x88B5)               28      message type (7 MSB) | ack flag (LSB)
//! 14..16  payload length (announced N_q)   29..37  end-to-end entanglement id
//! 16..20  CRC-32                           37      level
//!                                          38..40  token id
//! ```
//!
//! All integers are big-endian. The CRC covers bytes `0..16` and `20..40`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// EtherType announcing a quantum protocol frame (IEEE 802 local experimental).
pub const QUANTUM_ETHERTYPE: u16 = 0x88B5;
pub const ETH_HEADER_LEN: usize = 20;
pub const QP_HEADER_LEN: usize = 20;
pub const FRAME_LEN: usize = ETH_HEADER_LEN + QP_HEADER_LEN;
pub const FRAME_BITS: u32 = (FRAME_LEN * 8) as u32;

const CRC_OFFSET: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);

    /// Locally administered unicast address built from a 40-bit suffix.
    pub fn local(suffix: u64) -> Self {
        let b = suffix.to_be_bytes();
        MacAddr([0x02, b[3], b[4], b[5], b[6], b[7]])
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid MAC address `{0}`")]
pub struct ParseMacError(String);

impl FromStr for MacAddr {
    type Err = ParseMacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(|| ParseMacError(s.to_owned()))?;
            if part.len() != 2 {
                return Err(ParseMacError(s.to_owned()));
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| ParseMacError(s.to_owned()))?;
        }
        if parts.next().is_some() {
            return Err(ParseMacError(s.to_owned()));
        }
        Ok(MacAddr(out))
    }
}

/// QP message types. Codes 16..=127 are reserved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MessageType {
    DiscoveryRequest = 0,
    DiscoveryReply = 1,
    EstablishmentRequest = 2,
    EstablishmentReply = 3,
    EstablishmentInterrupted = 4,
    KeepAlive = 5,
    PtpEntanglementRequest = 6,
    PtpEntanglementReply = 7,
    SwappingRequest = 8,
    SwappingReply = 9,
    SwappingError = 10,
    ErrorAck = 11,
    TokenTransfer = 12,
    TokenAck = 13,
    SwappingComplete = 14,
    CompleteAck = 15,
}

impl MessageType {
    pub const ALL: [MessageType; 16] = [
        MessageType::DiscoveryRequest,
        MessageType::DiscoveryReply,
        MessageType::EstablishmentRequest,
        MessageType::EstablishmentReply,
        MessageType::EstablishmentInterrupted,
        MessageType::KeepAlive,
        MessageType::PtpEntanglementRequest,
        MessageType::PtpEntanglementReply,
        MessageType::SwappingRequest,
        MessageType::SwappingReply,
        MessageType::SwappingError,
        MessageType::ErrorAck,
        MessageType::TokenTransfer,
        MessageType::TokenAck,
        MessageType::SwappingComplete,
        MessageType::CompleteAck,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageType::DiscoveryRequest => "DiscoveryRequest",
            MessageType::DiscoveryReply => "DiscoveryReply",
            MessageType::EstablishmentRequest => "EstablishmentRequest",
            MessageType::EstablishmentReply => "EstablishmentReply",
            MessageType::EstablishmentInterrupted => "EstablishmentInterrupted",
            MessageType::KeepAlive => "KeepAlive",
            MessageType::PtpEntanglementRequest => "PtpEntanglementRequest",
            MessageType::PtpEntanglementReply => "PtpEntanglementReply",
            MessageType::SwappingRequest => "SwappingRequest",
            MessageType::SwappingReply => "SwappingReply",
            MessageType::SwappingError => "SwappingError",
            MessageType::ErrorAck => "ErrorAck",
            MessageType::TokenTransfer => "TokenTransfer",
            MessageType::TokenAck => "TokenAck",
            MessageType::SwappingComplete => "SwappingComplete",
            MessageType::CompleteAck => "CompleteAck",
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<u8> for MessageType {
    type Error = DecodeError;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        MessageType::ALL
            .get(code as usize)
            .copied()
            .ok_or(DecodeError::UnknownMessageType(code))
    }
}

/// Ethernet header without its CRC field; the CRC is derived on encode and
/// checked on decode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EthernetHeader {
    pub dst: MacAddr,
    pub src: MacAddr,
    pub ether_type: u16,
    /// Number of qubits announced for the upcoming quantum transmission.
    pub payload_len: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QpHeader {
    pub seq: u32,
    pub ack_seq: u32,
    pub msg_type: MessageType,
    pub ack: bool,
    pub e2e_id: u64,
    pub level: u8,
    pub token_id: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QpFrame {
    pub eth: EthernetHeader,
    pub qp: QpHeader,
}

impl QpFrame {
    /// A frame with the quantum EtherType and every optional field zeroed.
    pub fn new(dst: MacAddr, src: MacAddr, msg_type: MessageType, seq: u32, e2e_id: u64) -> Self {
        QpFrame {
            eth: EthernetHeader {
                dst,
                src,
                ether_type: QUANTUM_ETHERTYPE,
                payload_len: 0,
            },
            qp: QpHeader {
                seq,
                ack_seq: 0,
                msg_type,
                ack: false,
                e2e_id,
                level: 0,
                token_id: 0,
            },
        }
    }

    pub fn msg_type(&self) -> MessageType {
        self.qp.msg_type
    }

    pub fn encode(&self) -> [u8; FRAME_LEN] {
        encode_frame(self)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("frame too short: {0} bytes, need {FRAME_LEN}")]
    TooShort(usize),
    #[error("trailing bytes after frame: {0} bytes, expected {FRAME_LEN}")]
    TrailingBytes(usize),
    #[error("CRC mismatch: carried {carried:#010x}, computed {computed:#010x}")]
    BadCrc { carried: u32, computed: u32 },
    #[error("unknown EtherType {0:#06x}")]
    UnknownEtherType(u16),
    #[error("unknown message type code {0}")]
    UnknownMessageType(u8),
    #[error("invalid hex: {0}")]
    Hex(String),
}

const CRC_TABLE: [u32; 256] = {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 {
                0xEDB8_8320 ^ (c >> 1)
            } else {
                c >> 1
            };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

fn crc32_update(mut crc: u32, bytes: &[u8]) -> u32 {
    for &b in bytes {
        crc = CRC_TABLE[((crc ^ b as u32) & 0xff) as usize] ^ (crc >> 8);
    }
    crc
}

/// Ethernet FCS: reflected CRC-32, polynomial 0x04C11DB7, init and final xor all ones.
pub fn crc32(bytes: &[u8]) -> u32 {
    !crc32_update(!0, bytes)
}

fn frame_crc(buf: &[u8; FRAME_LEN]) -> u32 {
    let crc = crc32_update(!0, &buf[..CRC_OFFSET]);
    !crc32_update(crc, &buf[ETH_HEADER_LEN..])
}

pub fn encode_frame(f: &QpFrame) -> [u8; FRAME_LEN] {
    let mut buf = [0u8; FRAME_LEN];
    buf[0..6].copy_from_slice(&f.eth.dst.0);
    buf[6..12].copy_from_slice(&f.eth.src.0);
    buf[12..14].copy_from_slice(&f.eth.ether_type.to_be_bytes());
    buf[14..16].copy_from_slice(&f.eth.payload_len.to_be_bytes());

    let qp = &mut buf[ETH_HEADER_LEN..];
    qp[0..4].copy_from_slice(&f.qp.seq.to_be_bytes());
    qp[4..8].copy_from_slice(&f.qp.ack_seq.to_be_bytes());
    qp[8] = (f.qp.msg_type.code() << 1) | f.qp.ack as u8;
    qp[9..17].copy_from_slice(&f.qp.e2e_id.to_be_bytes());
    qp[17] = f.qp.level;
    qp[18..20].copy_from_slice(&f.qp.token_id.to_be_bytes());

    let crc = frame_crc(&buf);
    buf[CRC_OFFSET..ETH_HEADER_LEN].copy_from_slice(&crc.to_be_bytes());
    buf
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

pub fn decode_frame(bytes: &[u8]) -> Result<QpFrame, DecodeError> {
    if bytes.len() < FRAME_LEN {
        return Err(DecodeError::TooShort(bytes.len()));
    }
    if bytes.len() > FRAME_LEN {
        return Err(DecodeError::TrailingBytes(bytes.len() - FRAME_LEN));
    }
    let buf: &[u8; FRAME_LEN] = bytes.try_into().expect("length checked");

    let carried = be_u32(&buf[CRC_OFFSET..ETH_HEADER_LEN]);
    let computed = frame_crc(buf);
    if carried != computed {
        return Err(DecodeError::BadCrc { carried, computed });
    }

    let ether_type = be_u16(&buf[12..14]);
    if ether_type != QUANTUM_ETHERTYPE {
        return Err(DecodeError::UnknownEtherType(ether_type));
    }

    let qp = &buf[ETH_HEADER_LEN..];
    let msg_type = MessageType::try_from(qp[8] >> 1)?;
    Ok(QpFrame {
        eth: EthernetHeader {
            dst: MacAddr(buf[0..6].try_into().unwrap()),
            src: MacAddr(buf[6..12].try_into().unwrap()),
            ether_type,
            payload_len: be_u16(&buf[14..16]),
        },
        qp: QpHeader {
            seq: be_u32(&qp[0..4]),
            ack_seq: be_u32(&qp[4..8]),
            msg_type,
            ack: qp[8] & 1 == 1,
            e2e_id: u64::from_be_bytes(qp[9..17].try_into().unwrap()),
            level: qp[17],
            token_id: be_u16(&qp[18..20]),
        },
    })
}

/// One frame as a line of lowercase hex, the trace dump format.
pub fn to_hex_line(f: &QpFrame) -> String {
    hex::encode(encode_frame(f))
}

pub fn decode_hex_line(line: &str) -> Result<QpFrame, DecodeError> {
    let bytes = hex::decode(line.trim()).map_err(|e| DecodeError::Hex(e.to_string()))?;
    decode_frame(&bytes)
}
