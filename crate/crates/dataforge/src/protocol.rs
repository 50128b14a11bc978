//! Coordinator wire protocol.
//!
//! A frame is a 4-byte big-endian body length followed by a UTF-8 JSON
//! object whose `kind` field names the message. Requests from workers are
//! answered with exactly one frame: `ASSIGN` or `SHUTDOWN` for an assign
//! request, `ERROR` on failure, and an echo of the request kind otherwise.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use dataforge_core::orchestrator::{JobSpec, Stage};

/// Largest accepted frame body.
pub const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Register {
        worker_id: String,
        capabilities: Vec<Stage>,
    },
    AssignRequest {
        worker_id: String,
    },
    Assign {
        job: Option<JobSpec>,
    },
    Result {
        worker_id: String,
        job_id: String,
        payload_ref: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kept: Option<bool>,
        /// Set on the reply when the coordinator had already recorded a
        /// result for the job.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        discarded: bool,
    },
    Heartbeat {
        worker_id: String,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        worker_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        job_id: Option<String>,
        message: String,
    },
    Shutdown,
}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(u32),
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("connection closed inside a frame")]
    Truncated,
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("messages serialize");
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_body(body: &[u8]) -> Result<Message, ProtocolError> {
    Ok(serde_json::from_slice(body)?)
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), ProtocolError> {
    w.write_all(&encode(msg))?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `None` on a clean end of stream before any byte.
pub fn read_frame<R: Read>(r: &mut R, max_len: u32) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut len = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut len[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len);
    if len > max_len {
        return Err(ProtocolError::FrameTooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Truncated,
        _ => e.into(),
    })?;
    Ok(Some(body))
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>, ProtocolError> {
    match read_frame(r, MAX_FRAME_LEN)? {
        Some(body) => decode_body(&body).map(Some),
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn frame_layout() {
        let bytes = encode(&Message::Shutdown);
        assert_eq!(&bytes[..4], &[0, 0, 0, 19]);
        assert_eq!(&bytes[4..], br#"{"kind":"SHUTDOWN"}"#);
    }

    #[test]
    fn round_trip_stream() {
        let msgs = [
            Message::Register {
                worker_id: "w0".into(),
                capabilities: vec![Stage::Vad, Stage::AsrA],
            },
            Message::AssignRequest { worker_id: "w0".into() },
            Message::Assign { job: None },
            Message::Result {
                worker_id: "w0".into(),
                job_id: "a:vad".into(),
                payload_ref: "artifacts/a/vad.json".into(),
                kept: Some(true),
                discarded: false,
            },
            Message::Error {
                worker_id: None,
                job_id: Some("a:vad".into()),
                message: "boom".into(),
            },
        ];
        let mut buf = Vec::new();
        for m in &msgs {
            write_message(&mut buf, m).unwrap();
        }
        let mut cur = Cursor::new(buf);
        for m in &msgs {
            assert_eq!(read_message(&mut cur).unwrap().as_ref(), Some(m));
        }
        assert!(read_message(&mut cur).unwrap().is_none());
    }

    #[test]
    fn rejects_bad_frames() {
        let mut body = br#"{"worker_id":"w"}"#.to_vec();
        let mut frame = (body.len() as u32).to_be_bytes().to_vec();
        frame.append(&mut body);
        assert!(matches!(
            read_message(&mut Cursor::new(frame)),
            Err(ProtocolError::Malformed(_))
        ));
        let huge = (MAX_FRAME_LEN + 1).to_be_bytes().to_vec();
        assert!(matches!(
            read_message(&mut Cursor::new(huge)),
            Err(ProtocolError::FrameTooLarge(_))
        ));
        assert!(matches!(
            read_message(&mut Cursor::new(vec![0, 0])),
            Err(ProtocolError::Truncated)
        ));
        assert!(matches!(
            read_message(&mut Cursor::new(vec![0, 0, 0, 5, b'{'])),
            Err(ProtocolError::Truncated)
        ));
    }
}
