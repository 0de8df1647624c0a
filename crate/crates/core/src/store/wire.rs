//! Feature-pull wire protocol. Little-endian.
//!
//! ```text
//! request  = u8 msg_type (1 = SYNC_PULL, 2 = VECTOR_PULL) | u32 id_count | u64 x id_count
//! response = u8 status (0 = OK, 1 = NOT_OWNED, 2 = MALFORMED) | u32 row_count | u32 feat_dim
//!            | f32 x (row_count * feat_dim), rows in request order
//! frame    = u32 payload_len | payload
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Upper bound on an accepted frame, to reject garbage length prefixes.
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    SyncPull = 1,
    VectorPull = 2,
}

impl TryFrom<u8> for MsgType {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        match b {
            1 => Ok(MsgType::SyncPull),
            2 => Ok(MsgType::VectorPull),
            _ => Err(Error::Protocol(format!("unknown message type {b}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    NotOwned = 1,
    Malformed = 2,
}

impl TryFrom<u8> for Status {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Status::Ok),
            1 => Ok(Status::NotOwned),
            2 => Ok(Status::Malformed),
            _ => Err(Error::Protocol(format!("unknown status {b}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub kind: MsgType,
    pub ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: Status,
    pub feat_dim: u32,
    pub row_count: u32,
    pub rows: Vec<f32>,
}

impl Response {
    pub fn error(status: Status, feat_dim: u32) -> Self {
        Self { status, feat_dim, row_count: 0, rows: Vec::new() }
    }
}

pub fn encode_request(req: &Request) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 8 * req.ids.len());
    out.push(req.kind as u8);
    out.extend_from_slice(&(req.ids.len() as u32).to_le_bytes());
    for &id in &req.ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

pub fn decode_request(buf: &[u8]) -> Result<Request> {
    if buf.len() < 5 {
        return Err(Error::Protocol("request shorter than its header".into()));
    }
    let kind = MsgType::try_from(buf[0])?;
    let count = u32::from_le_bytes(buf[1..5].try_into().unwrap()) as usize;
    let body = &buf[5..];
    if body.len() != count * 8 {
        return Err(Error::Protocol(format!("request declares {count} ids but carries {} bytes", body.len())));
    }
    let ids = body.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Request { kind, ids })
}

pub fn encode_response(resp: &Response) -> Vec<u8> {
    let mut out = vec![0u8; 9 + 4 * resp.rows.len()];
    out[0] = resp.status as u8;
    out[1..5].copy_from_slice(&resp.row_count.to_le_bytes());
    out[5..9].copy_from_slice(&resp.feat_dim.to_le_bytes());
    for (b, x) in out[9..].chunks_exact_mut(4).zip(&resp.rows) {
        b.copy_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_response(buf: &[u8]) -> Result<Response> {
    if buf.len() < 9 {
        return Err(Error::Protocol("response shorter than its header".into()));
    }
    let status = Status::try_from(buf[0])?;
    let row_count = u32::from_le_bytes(buf[1..5].try_into().unwrap());
    let feat_dim = u32::from_le_bytes(buf[5..9].try_into().unwrap());
    let body = &buf[9..];
    let expected = row_count as usize * feat_dim as usize * 4;
    if body.len() != expected {
        return Err(Error::Protocol(format!("response declares {expected} payload bytes but carries {}", body.len())));
    }
    let rows = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Response { status, feat_dim, row_count, rows })
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {} bytes exceeds limit", payload.len())));
    }
    w.write_all(&(payload.len() as u32).to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}
