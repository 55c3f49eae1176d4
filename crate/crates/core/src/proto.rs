//! Coordinator/worker messages and their wire framing.
//!
//! Every frame is a big-endian `u32` length (not counting itself), a tag
//! byte and the payload. See `docs/protocol.md` for the byte layout.

use std::io::{self, Read, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::engine::{PathVector, RegionStats, SearchStrategy};
use crate::solve::Test;

pub const TAG_TASK: u8 = 0x01;
pub const TAG_FINISH: u8 = 0x02;
pub const TAG_PROVIDE_WORK: u8 = 0x03;
pub const TAG_OFFLOAD: u8 = 0x04;
pub const TAG_NO_WORK: u8 = 0x05;
pub const TAG_TERMINATE: u8 = 0x06;

/// Frames above this size are rejected before allocating.
pub const MAX_FRAME: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Task {
        strategy: SearchStrategy,
        test: Test,
        test_depth: u32,
        final_depth: u32,
    },
    Finish {
        stats: RegionStats,
    },
    ProvideWork,
    Offload {
        test: Test,
        test_depth: u32,
    },
    NoWork,
    Terminate,
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Task { .. } => TAG_TASK,
            Message::Finish { .. } => TAG_FINISH,
            Message::ProvideWork => TAG_PROVIDE_WORK,
            Message::Offload { .. } => TAG_OFFLOAD,
            Message::NoWork => TAG_NO_WORK,
            Message::Terminate => TAG_TERMINATE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Task { .. } => "Task",
            Message::Finish { .. } => "Finish",
            Message::ProvideWork => "ProvideWork",
            Message::Offload { .. } => "Offload",
            Message::NoWork => "NoWork",
            Message::Terminate => "Terminate",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unknown message tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("truncated frame: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("frame length {0} exceeds limit")]
    TooLarge(u32),
}

pub fn encode(m: &Message) -> Vec<u8> {
    let mut out = vec![0, 0, 0, 0, m.tag()];
    match m {
        Message::Task {
            strategy,
            test,
            test_depth,
            final_depth,
        } => {
            put_strategy(&mut out, *strategy);
            put_test(&mut out, test);
            out.extend_from_slice(&test_depth.to_be_bytes());
            out.extend_from_slice(&final_depth.to_be_bytes());
        }
        Message::Finish { stats } => put_stats(&mut out, stats),
        Message::Offload { test, test_depth } => {
            put_test(&mut out, test);
            out.extend_from_slice(&test_depth.to_be_bytes());
        }
        Message::ProvideWork | Message::NoWork | Message::Terminate => {}
    }
    let len = (out.len() - 4) as u32;
    out[..4].copy_from_slice(&len.to_be_bytes());
    out
}

/// Decodes exactly one complete frame.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader::new(bytes);
    let len = r.u32()? as usize;
    let body = r.take(len)?;
    if r.remaining() > 0 {
        return Err(DecodeError::TrailingBytes(r.remaining()));
    }
    decode_body(body)
}

/// Decodes a tag byte plus payload (a frame without its length prefix).
pub fn decode_body(body: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader::new(body);
    let tag = r.u8()?;
    let m = match tag {
        TAG_TASK => Message::Task {
            strategy: r.strategy()?,
            test: r.test()?,
            test_depth: r.u32()?,
            final_depth: r.u32()?,
        },
        TAG_FINISH => Message::Finish { stats: r.stats()? },
        TAG_PROVIDE_WORK => Message::ProvideWork,
        TAG_OFFLOAD => Message::Offload {
            test: r.test()?,
            test_depth: r.u32()?,
        },
        TAG_NO_WORK => Message::NoWork,
        TAG_TERMINATE => Message::Terminate,
        t => return Err(DecodeError::UnknownTag(t)),
    };
    if r.remaining() > 0 {
        return Err(DecodeError::TrailingBytes(r.remaining()));
    }
    Ok(m)
}

pub fn write_frame(w: &mut impl Write, m: &Message) -> io::Result<()> {
    w.write_all(&encode(m))?;
    w.flush()
}

/// Reads one frame. `Ok(None)` on a clean end of stream before a frame.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Message>, FrameError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(decode_body(&body)?))
}

pub fn encode_test(test: &Test) -> Vec<u8> {
    let mut out = Vec::new();
    put_test(&mut out, test);
    out
}

pub fn decode_test(bytes: &[u8]) -> Result<Test, DecodeError> {
    let mut r = Reader::new(bytes);
    let t = r.test()?;
    if r.remaining() > 0 {
        return Err(DecodeError::TrailingBytes(r.remaining()));
    }
    Ok(t)
}

fn put_test(out: &mut Vec<u8>, test: &Test) {
    let values = test.values();
    assert!(values.len() <= u16::MAX as usize, "too many test entries");
    out.extend_from_slice(&(values.len() as u16).to_be_bytes());
    for (name, v) in values {
        assert!(name.len() <= u16::MAX as usize, "input name too long");
        out.extend_from_slice(&(name.len() as u16).to_be_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&v.to_be_bytes());
    }
}

fn put_strategy(out: &mut Vec<u8>, s: SearchStrategy) {
    match s {
        SearchStrategy::Dfs => out.push(0),
        SearchStrategy::Bfs => out.push(1),
        SearchStrategy::Random { seed } => {
            out.push(2);
            out.extend_from_slice(&seed.to_be_bytes());
        }
    }
}

fn put_paths(out: &mut Vec<u8>, paths: &[PathVector]) {
    out.extend_from_slice(&(paths.len() as u32).to_be_bytes());
    for p in paths {
        out.extend_from_slice(&(p.len() as u32).to_be_bytes());
        for chunk in p.bits().chunks(8) {
            let mut byte = 0u8;
            for (i, &b) in chunk.iter().enumerate() {
                if b {
                    byte |= 0x80 >> i;
                }
            }
            out.push(byte);
        }
    }
}

fn put_stats(out: &mut Vec<u8>, s: &RegionStats) {
    for v in [
        s.states_created,
        s.states_suspended,
        s.solver_queries,
        s.cache_hits,
        s.instructions,
        s.wall_micros,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.push(s.partial as u8);
    put_paths(out, &s.completed);
    put_paths(out, &s.frontier);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated {
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("slice length"))
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        self.array().map(u16::from_be_bytes)
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        self.array().map(u32::from_be_bytes)
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        self.array().map(u64::from_be_bytes)
    }

    fn i64(&mut self) -> Result<i64, DecodeError> {
        self.array().map(i64::from_be_bytes)
    }

    fn test(&mut self) -> Result<Test, DecodeError> {
        let n = self.u16()?;
        let mut values = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let len = self.u16()? as usize;
            let name = std::str::from_utf8(self.take(len)?)
                .map_err(|_| DecodeError::Malformed("input name is not UTF-8".into()))?;
            let v = self.i64()?;
            values.push((Arc::from(name), v));
        }
        Ok(Test::new(values))
    }

    fn strategy(&mut self) -> Result<SearchStrategy, DecodeError> {
        match self.u8()? {
            0 => Ok(SearchStrategy::Dfs),
            1 => Ok(SearchStrategy::Bfs),
            2 => Ok(SearchStrategy::Random { seed: self.u64()? }),
            b => Err(DecodeError::Malformed(format!("strategy byte {b}"))),
        }
    }

    fn paths(&mut self) -> Result<Vec<PathVector>, DecodeError> {
        let n = self.u32()? as usize;
        // each entry takes at least four bytes
        let mut paths = Vec::with_capacity(n.min(self.remaining() / 4));
        for _ in 0..n {
            let bits = self.u32()? as usize;
            let bytes = self.take(bits.div_ceil(8))?;
            let v: Vec<bool> = (0..bits)
                .map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0)
                .collect();
            if !bits.is_multiple_of(8) && bytes[bits / 8] & (0xff >> (bits % 8)) != 0 {
                return Err(DecodeError::Malformed("nonzero padding bits".into()));
            }
            paths.push(PathVector::from_bits(v));
        }
        Ok(paths)
    }

    fn stats(&mut self) -> Result<RegionStats, DecodeError> {
        let mut s = RegionStats {
            states_created: self.u64()?,
            states_suspended: self.u64()?,
            solver_queries: self.u64()?,
            cache_hits: self.u64()?,
            instructions: self.u64()?,
            wall_micros: self.u64()?,
            ..RegionStats::default()
        };
        s.partial = match self.u8()? {
            0 => false,
            1 => true,
            b => return Err(DecodeError::Malformed(format!("partial flag {b}"))),
        };
        s.completed = self.paths()?;
        s.frontier = self.paths()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hex(m: &Message) -> String {
        encode(m)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn golden_frames() {
        assert_eq!(hex(&Message::Terminate), "00 00 00 01 06");
        assert_eq!(hex(&Message::ProvideWork), "00 00 00 01 03");
        assert_eq!(hex(&Message::NoWork), "00 00 00 01 05");
        let offload = Message::Offload {
            test: Test::from_pairs(&[("x", 1), ("y", -1)]),
            test_depth: 2,
        };
        assert_eq!(
            hex(&offload),
            "00 00 00 1d 04 00 02 00 01 78 00 00 00 00 00 00 00 01 \
             00 01 79 ff ff ff ff ff ff ff ff 00 00 00 02"
        );
        let task = Message::Task {
            strategy: SearchStrategy::Random { seed: 258 },
            test: Test::from_pairs(&[("z", 0)]),
            test_depth: 0,
            final_depth: 3,
        };
        assert_eq!(
            hex(&task),
            "00 00 00 1f 01 02 00 00 00 00 00 00 01 02 00 01 00 01 7a \
             00 00 00 00 00 00 00 00 00 00 00 00 00 00 00 03"
        );
    }

    #[test]
    fn offload_roundtrip() {
        let m = Message::Offload {
            test: Test::from_pairs(&[("x", 1), ("y", 0), ("z", 0)]),
            test_depth: 2,
        };
        assert_eq!(decode(&encode(&m)), Ok(m));
    }

    #[test]
    fn finish_paths_pack_msb_first() {
        let stats = RegionStats {
            completed: vec!["101".parse().unwrap(), "".parse().unwrap()],
            frontier: vec!["111111111".parse().unwrap()],
            ..RegionStats::default()
        };
        let bytes = encode(&Message::Finish {
            stats: stats.clone(),
        });
        let tail = &bytes[bytes.len() - 23..];
        assert_eq!(
            tail,
            [
                0,
                0,
                0,
                2,
                0,
                0,
                0,
                3,
                0b1010_0000,
                0,
                0,
                0,
                0, //
                0,
                0,
                0,
                1,
                0,
                0,
                0,
                9,
                0xff,
                0x80,
            ]
        );
        assert_eq!(decode(&bytes), Ok(Message::Finish { stats }));
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            decode(&[0, 0, 0, 1, 0xff]),
            Err(DecodeError::UnknownTag(0xff))
        );
        assert!(matches!(
            decode(&[0, 0, 0, 5, 0x04, 0]),
            Err(DecodeError::Truncated { .. })
        ));
        assert_eq!(
            decode(&[0, 0, 0, 1, 0x06, 0]),
            Err(DecodeError::TrailingBytes(1))
        );
        assert_eq!(
            decode(&[0, 0, 0, 2, 0x06, 0]),
            Err(DecodeError::TrailingBytes(1))
        );
        assert!(matches!(
            decode(&[0, 0, 0, 2, 0x01, 7]),
            Err(DecodeError::Malformed(_))
        ));
        assert!(matches!(
            decode(&[0, 0]),
            Err(DecodeError::Truncated { .. })
        ));
    }

    #[test]
    fn nonzero_padding_rejected() {
        let stats = RegionStats {
            completed: vec!["1".parse().unwrap()],
            ..RegionStats::default()
        };
        let mut bytes = encode(&Message::Finish { stats });
        // completed list is followed by an empty frontier list (4 bytes)
        let n = bytes.len();
        bytes[n - 5] |= 0x01;
        assert!(matches!(decode(&bytes), Err(DecodeError::Malformed(_))));
    }

    #[test]
    fn stream_framing() {
        let msgs = [Message::ProvideWork, Message::NoWork, Message::Terminate];
        let mut buf = Vec::new();
        for m in &msgs {
            write_frame(&mut buf, m).unwrap();
        }
        let mut r = &buf[..];
        for m in &msgs {
            assert_eq!(read_frame(&mut r).unwrap().as_ref(), Some(m));
        }
        assert!(read_frame(&mut r).unwrap().is_none());
        let mut short = &[0u8, 0, 0, 9, 1][..];
        assert!(matches!(read_frame(&mut short), Err(FrameError::Io(_))));
    }

    fn arb_test() -> impl Strategy<Value = Test> {
        prop::collection::vec(("[a-z_][a-z0-9_]{0,6}", any::<i64>()), 0..5).prop_map(|v| {
            Test::new(
                v.into_iter()
                    .map(|(n, x)| (Arc::from(n.as_str()), x))
                    .collect(),
            )
        })
    }

    fn arb_paths() -> impl Strategy<Value = Vec<PathVector>> {
        prop::collection::vec(prop::collection::vec(any::<bool>(), 0..20), 0..6)
            .prop_map(|v| v.into_iter().map(PathVector::from_bits).collect())
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let strategy = prop_oneof![
            Just(SearchStrategy::Dfs),
            Just(SearchStrategy::Bfs),
            any::<u64>().prop_map(|seed| SearchStrategy::Random { seed }),
        ];
        prop_oneof![
            (strategy, arb_test(), any::<u32>(), any::<u32>()).prop_map(|(s, t, d, f)| {
                Message::Task {
                    strategy: s,
                    test: t,
                    test_depth: d,
                    final_depth: f,
                }
            }),
            (any::<[u64; 6]>(), any::<bool>(), arb_paths(), arb_paths()).prop_map(
                |(c, partial, completed, frontier)| Message::Finish {
                    stats: RegionStats {
                        states_created: c[0],
                        states_suspended: c[1],
                        solver_queries: c[2],
                        cache_hits: c[3],
                        instructions: c[4],
                        wall_micros: c[5],
                        partial,
                        completed,
                        frontier,
                    }
                }
            ),
            Just(Message::ProvideWork),
            (arb_test(), any::<u32>())
                .prop_map(|(test, test_depth)| Message::Offload { test, test_depth }),
            Just(Message::NoWork),
            Just(Message::Terminate),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn roundtrip(m in arb_message()) {
            let bytes = encode(&m);
            prop_assert_eq!(decode(&bytes), Ok(m.clone()));
            prop_assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 4);
        }

        #[test]
        fn injective(a in arb_message(), b in arb_message()) {
            prop_assert_eq!(a == b, encode(&a) == encode(&b));
        }

        #[test]
        fn any_prefix_is_truncated(m in arb_message(), cut in 0usize..64) {
            let bytes = encode(&m);
            let cut = cut.min(bytes.len() - 1);
            let is_truncated = matches!(decode(&bytes[..cut]), Err(DecodeError::Truncated { .. }));
            prop_assert!(is_truncated);
        }
    }
}
