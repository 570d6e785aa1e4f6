//! Length-prefixed binary frames for the control-loop wire protocol:
//! magic `EFC1`, a version byte, a type byte, a 32-bit little-endian
//! payload length, then the payload. Ciphertext payloads embed the
//! homomorphic-backend wire form unchanged.

use std::io::{Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"EFC1";
pub const VERSION: u8 = 1;

/// Hard cap against absurd length prefixes from corrupt peers.
const MAX_PAYLOAD: u32 = 64 << 20;

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    BadType(u8),
    #[error("payload length {0} exceeds the frame cap")]
    Oversized(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    Params = 2,
    SensorData = 3,
    ControlAction = 4,
    StateRefreshDown = 5,
    StateRefreshUp = 6,
    Bye = 7,
}

impl MsgType {
    fn from_u8(v: u8) -> Result<Self, ProtoError> {
        Ok(match v {
            1 => MsgType::Hello,
            2 => MsgType::Params,
            3 => MsgType::SensorData,
            4 => MsgType::ControlAction,
            5 => MsgType::StateRefreshDown,
            6 => MsgType::StateRefreshUp,
            7 => MsgType::Bye,
            other => return Err(ProtoError::BadType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ProtoError> {
        w.write_all(&MAGIC)?;
        w.write_all(&[VERSION, self.msg_type as u8])?;
        w.write_all(&(self.payload.len() as u32).to_le_bytes())?;
        w.write_all(&self.payload)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ProtoError> {
        let mut head = [0u8; 10];
        r.read_exact(&mut head)?;
        let magic: [u8; 4] = head[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(ProtoError::BadMagic(magic));
        }
        if head[4] != VERSION {
            return Err(ProtoError::BadVersion(head[4]));
        }
        let msg_type = MsgType::from_u8(head[5])?;
        let len = u32::from_le_bytes(head[6..10].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Err(ProtoError::Oversized(len));
        }
        let mut payload = vec![0u8; len as usize];
        r.read_exact(&mut payload)?;
        Ok(Self { msg_type, payload })
    }
}

/// Split a payload that concatenates several ciphertext wire forms.
pub fn split_ciphertexts(
    payload: &[u8],
    params: &crate::he::HeParams,
    expected: usize,
) -> Result<Vec<crate::he::Ciphertext>, crate::he::HeError> {
    let mut out = Vec::with_capacity(expected);
    let mut off = 0;
    for _ in 0..expected {
        let (ct, used) = crate::he::wire::decode_ciphertext(&payload[off..], params)?;
        out.push(ct);
        off += used;
    }
    if off != payload.len() {
        return Err(crate::he::HeError::BadWireData(format!(
            "{} trailing bytes after {} ciphertexts",
            payload.len() - off,
            expected
        )));
    }
    Ok(out)
}

pub fn join_ciphertexts(cts: &[crate::he::Ciphertext]) -> Vec<u8> {
    let mut out = Vec::new();
    for ct in cts {
        out.extend_from_slice(&crate::he::wire::encode_ciphertext(ct));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let msg = WireMessage::new(MsgType::SensorData, vec![1, 2, 3, 4, 5]);
        let mut buf = Vec::new();
        msg.write_to(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"EFC1");
        assert_eq!(buf[4], 1);
        assert_eq!(buf[5], 3);
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 5);
        let back = WireMessage::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn frame_rejects_garbage() {
        let mut buf = Vec::new();
        WireMessage::new(MsgType::Bye, vec![]).write_to(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            WireMessage::read_from(&mut buf.as_slice()),
            Err(ProtoError::BadMagic(_))
        ));
        buf[0] = b'E';
        buf[5] = 99;
        assert!(matches!(
            WireMessage::read_from(&mut buf.as_slice()),
            Err(ProtoError::BadType(99))
        ));
    }
}
