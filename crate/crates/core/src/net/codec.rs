//! Binary encoding of tuples, templates and protocol frames.
//!
//! Everything is little-endian. A frame is `u32 length | u8 msg_type |
//! u64 request_id | body`, where `length` covers everything after itself.

use std::io::{self, Read};

use crate::tuple::{PatternField, Template, Tuple, Value, ValueKind};

/// Largest accepted frame length (64 MiB).
pub const MAX_FRAME: u32 = 64 * 1024 * 1024;

/// Bytes of `msg_type` plus `request_id`.
const FRAME_HEADER: u32 = 9;

const ANY_TAG: u8 = 0x10;

/// Wire value of an infinite RD/IN timeout.
pub const INFINITE_TIMEOUT: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Malformed {
    #[error("input truncated")]
    Truncated,
    #[error("unknown field tag {0:#04x}")]
    UnknownTag(u8),
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error("declared length {0} exceeds the remaining input")]
    LengthOverflow(u64),
    #[error("zero arity")]
    EmptyArity,
    #[error("{0} trailing bytes after body")]
    Trailing(usize),
    #[error("frame length {0} out of range")]
    FrameLength(u32),
    #[error("unknown message type {0}")]
    UnknownMessage(u8),
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Malformed> {
        if self.buf.len() < n {
            return Err(Malformed::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, Malformed> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, Malformed> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, Malformed> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, Malformed> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A block whose size is declared by the sender.
    fn declared(&mut self, count: u32, width: usize) -> Result<&'a [u8], Malformed> {
        let len = count as u64 * width as u64;
        if len > self.buf.len() as u64 {
            return Err(Malformed::LengthOverflow(len));
        }
        self.take(len as usize)
    }

    fn finish(self) -> Result<(), Malformed> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(Malformed::Trailing(n)),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("length fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn encode_value(out: &mut Vec<u8>, v: &Value) {
    out.push(v.kind().tag());
    match v {
        Value::Int64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Float64(x) => out.extend_from_slice(&x.to_bits().to_le_bytes()),
        Value::Str(s) => {
            put_u32(out, s.len());
            out.extend_from_slice(s.as_bytes());
        }
        Value::Bytes(b) => {
            put_u32(out, b.len());
            out.extend_from_slice(b);
        }
        Value::IntArray(xs) => {
            put_u32(out, xs.len());
            out.reserve(xs.len() * 8);
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Value::FloatArray(xs) => {
            put_u32(out, xs.len());
            out.reserve(xs.len() * 8);
            for x in xs {
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
    }
}

fn decode_payload(cur: &mut Cursor<'_>, kind: ValueKind) -> Result<Value, Malformed> {
    Ok(match kind {
        ValueKind::Int64 => Value::Int64(cur.u64()? as i64),
        ValueKind::Float64 => Value::Float64(f64::from_bits(cur.u64()?)),
        ValueKind::Str => {
            let n = cur.u32()?;
            let raw = cur.declared(n, 1)?;
            Value::Str(String::from_utf8(raw.to_vec()).map_err(|_| Malformed::InvalidUtf8)?)
        }
        ValueKind::Bytes => {
            let n = cur.u32()?;
            Value::Bytes(cur.declared(n, 1)?.to_vec())
        }
        ValueKind::IntArray => {
            let n = cur.u32()?;
            let raw = cur.declared(n, 8)?;
            Value::IntArray(raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
        }
        ValueKind::FloatArray => {
            let n = cur.u32()?;
            let raw = cur.declared(n, 8)?;
            Value::FloatArray(
                raw.chunks_exact(8).map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap()))).collect(),
            )
        }
    })
}

fn arity(cur: &mut Cursor<'_>) -> Result<usize, Malformed> {
    match cur.u32()? {
        0 => Err(Malformed::EmptyArity),
        // Every field takes at least one byte.
        n if n as usize > cur.buf.len() => Err(Malformed::LengthOverflow(n as u64)),
        n => Ok(n as usize),
    }
}

fn read_tuple(cur: &mut Cursor<'_>) -> Result<Tuple, Malformed> {
    let n = arity(cur)?;
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        let tag = cur.u8()?;
        let kind = ValueKind::from_tag(tag).ok_or(Malformed::UnknownTag(tag))?;
        fields.push(decode_payload(cur, kind)?);
    }
    Ok(Tuple::new(fields).expect("arity checked"))
}

fn read_template(cur: &mut Cursor<'_>) -> Result<Template, Malformed> {
    let n = arity(cur)?;
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        let tag = cur.u8()?;
        let field = if tag == ANY_TAG {
            PatternField::Any
        } else if let Some(kind) = tag.checked_sub(ANY_TAG).and_then(ValueKind::from_tag) {
            PatternField::Type(kind)
        } else {
            let kind = ValueKind::from_tag(tag).ok_or(Malformed::UnknownTag(tag))?;
            PatternField::Literal(decode_payload(cur, kind)?)
        };
        fields.push(field);
    }
    Ok(Template::new(fields).expect("arity checked"))
}

fn write_tuple(out: &mut Vec<u8>, t: &Tuple) {
    put_u32(out, t.arity());
    for v in t.fields() {
        encode_value(out, v);
    }
}

fn write_template(out: &mut Vec<u8>, t: &Template) {
    put_u32(out, t.arity());
    for f in t.fields() {
        match f {
            PatternField::Literal(v) => encode_value(out, v),
            PatternField::Type(k) => out.push(ANY_TAG + k.tag()),
            PatternField::Any => out.push(ANY_TAG),
        }
    }
}

pub fn encode_tuple(t: &Tuple) -> Vec<u8> {
    let mut out = Vec::new();
    write_tuple(&mut out, t);
    out
}

/// Decodes exactly one tuple; trailing bytes are an error.
pub fn decode_tuple(bytes: &[u8]) -> Result<Tuple, Malformed> {
    let mut cur = Cursor { buf: bytes };
    let t = read_tuple(&mut cur)?;
    cur.finish()?;
    Ok(t)
}

pub fn encode_template(t: &Template) -> Vec<u8> {
    let mut out = Vec::new();
    write_template(&mut out, t);
    out
}

pub fn decode_template(bytes: &[u8]) -> Result<Template, Malformed> {
    let mut cur = Cursor { buf: bytes };
    let t = read_template(&mut cur)?;
    cur.finish()?;
    Ok(t)
}

/// Message type codes.
pub mod msg {
    pub const OUT: u8 = 1;
    pub const RDP: u8 = 2;
    pub const INP: u8 = 3;
    pub const RD: u8 = 4;
    pub const IN: u8 = 5;
    pub const REPLY_TUPLE: u8 = 6;
    pub const REPLY_NONE: u8 = 7;
    pub const REPLY_ERR: u8 = 8;
    pub const HELLO: u8 = 9;
    pub const CANCEL: u8 = 10;
    pub const COUNT: u8 = 11;
    pub const COUNT_REPLY: u8 = 12;
}

/// REPLY_ERR codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    Malformed = 1,
    Unsupported = 2,
    Timeout = 3,
    ShuttingDown = 4,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Out(Tuple),
    Rdp(Template),
    Inp(Template),
    Rd { timeout_ms: u64, template: Template },
    In { timeout_ms: u64, template: Template },
    ReplyTuple(Tuple),
    ReplyNone,
    ReplyErr { code: u16, message: String },
    Hello { version: u16, name: String },
    Cancel { target: u64 },
    Count(Template),
    CountReply(u64),
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Out(_) => msg::OUT,
            Message::Rdp(_) => msg::RDP,
            Message::Inp(_) => msg::INP,
            Message::Rd { .. } => msg::RD,
            Message::In { .. } => msg::IN,
            Message::ReplyTuple(_) => msg::REPLY_TUPLE,
            Message::ReplyNone => msg::REPLY_NONE,
            Message::ReplyErr { .. } => msg::REPLY_ERR,
            Message::Hello { .. } => msg::HELLO,
            Message::Cancel { .. } => msg::CANCEL,
            Message::Count(_) => msg::COUNT,
            Message::CountReply(_) => msg::COUNT_REPLY,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Message {
        Message::ReplyErr { code: code as u16, message: message.into() }
    }

    fn write_body(&self, out: &mut Vec<u8>) {
        match self {
            Message::Out(t) | Message::ReplyTuple(t) => write_tuple(out, t),
            Message::Rdp(t) | Message::Inp(t) | Message::Count(t) => write_template(out, t),
            Message::Rd { timeout_ms, template } | Message::In { timeout_ms, template } => {
                out.extend_from_slice(&timeout_ms.to_le_bytes());
                write_template(out, template);
            }
            Message::ReplyNone => {}
            Message::ReplyErr { code, message } => {
                out.extend_from_slice(&code.to_le_bytes());
                put_u32(out, message.len());
                out.extend_from_slice(message.as_bytes());
            }
            Message::Hello { version, name } => {
                out.extend_from_slice(&version.to_le_bytes());
                put_u32(out, name.len());
                out.extend_from_slice(name.as_bytes());
            }
            Message::Cancel { target } => out.extend_from_slice(&target.to_le_bytes()),
            Message::CountReply(n) => out.extend_from_slice(&n.to_le_bytes()),
        }
    }

    /// Decodes a body of the given message type.
    pub fn decode(msg_type: u8, body: &[u8]) -> Result<Message, Malformed> {
        let mut cur = Cursor { buf: body };
        let text = |cur: &mut Cursor<'_>| -> Result<String, Malformed> {
            let n = cur.u32()?;
            String::from_utf8(cur.declared(n, 1)?.to_vec()).map_err(|_| Malformed::InvalidUtf8)
        };
        let m = match msg_type {
            msg::OUT => Message::Out(read_tuple(&mut cur)?),
            msg::RDP => Message::Rdp(read_template(&mut cur)?),
            msg::INP => Message::Inp(read_template(&mut cur)?),
            msg::RD => Message::Rd { timeout_ms: cur.u64()?, template: read_template(&mut cur)? },
            msg::IN => Message::In { timeout_ms: cur.u64()?, template: read_template(&mut cur)? },
            msg::REPLY_TUPLE => Message::ReplyTuple(read_tuple(&mut cur)?),
            msg::REPLY_NONE => Message::ReplyNone,
            msg::REPLY_ERR => Message::ReplyErr { code: cur.u16()?, message: text(&mut cur)? },
            msg::HELLO => Message::Hello { version: cur.u16()?, name: text(&mut cur)? },
            msg::CANCEL => Message::Cancel { target: cur.u64()? },
            msg::COUNT => Message::Count(read_template(&mut cur)?),
            msg::COUNT_REPLY => Message::CountReply(cur.u64()?),
            other => return Err(Malformed::UnknownMessage(other)),
        };
        cur.finish()?;
        Ok(m)
    }
}

/// A frame split into header fields and raw body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub request_id: u64,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn message(&self) -> Result<Message, Malformed> {
        Message::decode(self.msg_type, &self.body)
    }
}

pub fn encode_frame(request_id: u64, message: &Message) -> Vec<u8> {
    let mut out = vec![0u8; 4];
    out.push(message.msg_type());
    out.extend_from_slice(&request_id.to_le_bytes());
    message.write_body(&mut out);
    let len = (out.len() - 4) as u32;
    out[..4].copy_from_slice(&len.to_le_bytes());
    out
}

fn check_length(len: u32) -> Result<(), Malformed> {
    if !(FRAME_HEADER..=MAX_FRAME).contains(&len) {
        return Err(Malformed::FrameLength(len));
    }
    Ok(())
}

/// Decodes one complete frame from the front of `bytes`, returning the
/// request id, message and number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(u64, Message, usize), Malformed> {
    let mut cur = Cursor { buf: bytes };
    let len = cur.u32()?;
    check_length(len)?;
    let rest = cur.take(len as usize)?;
    let msg_type = rest[0];
    let request_id = u64::from_le_bytes(rest[1..9].try_into().unwrap());
    let message = Message::decode(msg_type, &rest[9..])?;
    Ok((request_id, message, 4 + len as usize))
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Malformed(#[from] Malformed),
}

/// Reads one frame. `Ok(None)` on a clean end of stream between frames.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, ReadError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Malformed::Truncated.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(len);
    check_length(len)?;
    let mut rest = vec![0u8; len as usize];
    r.read_exact(&mut rest).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ReadError::Malformed(Malformed::Truncated),
        _ => ReadError::Io(e),
    })?;
    let msg_type = rest[0];
    let request_id = u64::from_le_bytes(rest[1..9].try_into().unwrap());
    rest.drain(..9);
    Ok(Some(Frame { msg_type, request_id, body: rest }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{arb_template, arb_tuple};
    use crate::{template, tuple};
    use proptest::prelude::*;

    #[test]
    fn minimal_tuple_layout() {
        let bytes = encode_tuple(&tuple![0i64]);
        assert_eq!(bytes, [1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(decode_tuple(&bytes), Ok(tuple![0i64]));
    }

    #[test]
    fn goofy_round_trip() {
        let t = tuple!["goofy", 4i64, 10.4];
        assert_eq!(decode_tuple(&encode_tuple(&t)), Ok(t));
    }

    #[test]
    fn template_tags() {
        let t = template![PatternField::Any, ValueKind::Str, 7i64];
        let bytes = encode_template(&t);
        assert_eq!(&bytes[..6], &[3, 0, 0, 0, 0x10, 0x13]);
        assert_eq!(decode_template(&bytes), Ok(t));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(decode_tuple(&[1, 0, 0, 0, 9]), Err(Malformed::UnknownTag(9)));
        assert_eq!(decode_tuple(&[0, 0, 0, 0]), Err(Malformed::EmptyArity));
        assert_eq!(decode_tuple(&[1, 0, 0, 0, 3, 2, 0, 0, 0, 0xff, 0xfe]), Err(Malformed::InvalidUtf8));
        assert_eq!(decode_tuple(&[1, 0, 0, 0, 3, 9, 0, 0, 0, b'a']), Err(Malformed::LengthOverflow(9)));
        let mut extra = encode_tuple(&tuple![1i64]);
        extra.push(0);
        assert_eq!(decode_tuple(&extra), Err(Malformed::Trailing(1)));
        // A tuple tag is not a template's wildcard and vice versa.
        assert_eq!(decode_tuple(&[1, 0, 0, 0, 0x10]), Err(Malformed::UnknownTag(0x10)));
    }

    #[test]
    fn frame_limits() {
        let mut big = vec![];
        big.extend_from_slice(&(MAX_FRAME + 1).to_le_bytes());
        assert_eq!(decode_frame(&big), Err(Malformed::FrameLength(MAX_FRAME + 1)));
        let mut short = vec![];
        short.extend_from_slice(&3u32.to_le_bytes());
        assert_eq!(decode_frame(&short), Err(Malformed::FrameLength(3)));
    }

    #[test]
    fn every_message_round_trips() {
        let tpl = template!["a", PatternField::Any];
        let msgs = vec![
            Message::Out(tuple!["a", 1i64]),
            Message::Rdp(tpl.clone()),
            Message::Inp(tpl.clone()),
            Message::Rd { timeout_ms: INFINITE_TIMEOUT, template: tpl.clone() },
            Message::In { timeout_ms: 0, template: tpl.clone() },
            Message::ReplyTuple(tuple![vec![1.5, 2.5]]),
            Message::ReplyNone,
            Message::error(ErrorCode::Timeout, "timeout"),
            Message::Hello { version: 1, name: "worker3".into() },
            Message::Cancel { target: 77 },
            Message::Count(tpl),
            Message::CountReply(12),
        ];
        for (i, m) in msgs.into_iter().enumerate() {
            let bytes = encode_frame(i as u64, &m);
            assert_eq!(decode_frame(&bytes), Ok((i as u64, m.clone(), bytes.len())));
            let frame = read_frame(&mut &bytes[..]).unwrap().unwrap();
            assert_eq!(frame.message(), Ok(m));
        }
    }

    proptest! {
        #[test]
        fn tuple_round_trip(t in arb_tuple()) {
            prop_assert_eq!(decode_tuple(&encode_tuple(&t)), Ok(t));
        }

        #[test]
        fn template_round_trip(t in arb_template()) {
            prop_assert_eq!(decode_template(&encode_template(&t)), Ok(t));
        }

        #[test]
        fn truncated_frames_never_decode(t in arb_tuple(), cut in any::<prop::sample::Index>()) {
            let bytes = encode_frame(5, &Message::Out(t));
            let n = cut.index(bytes.len());
            prop_assert!(decode_frame(&bytes[..n]).is_err());
            prop_assert!(read_frame(&mut &bytes[..n]).map(|f| f.is_none() && n == 0).unwrap_or(true));
        }
    }
}
