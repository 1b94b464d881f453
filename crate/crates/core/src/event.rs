//! Event and frame types, time binning and the `.evf` binary container.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Sign of a brightness change. Stored on disk as 1 (on) / 0 (off).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn from_sign(sign: i8) -> Self {
        if sign > 0 {
            Polarity::On
        } else {
            Polarity::Off
        }
    }

    /// +1 for brightening, -1 for darkening.
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => 0,
        }
    }

    /// Channel index used by frames and the filterbank: on = 0, off = 1.
    pub fn index(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
    /// Microseconds.
    pub t: u64,
}

impl Event {
    pub fn new(x: u16, y: u16, p: Polarity, t: u64) -> Self {
        Event { x, y, p, t }
    }
}

/// Time-ordered events from one sensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventStream {
    width: u16,
    height: u16,
    events: Vec<Event>,
}

impl EventStream {
    pub fn empty(width: u16, height: u16) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
        }
    }

    /// Validates bounds and timestamp order.
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(Error::Data(format!(
                    "event {i} at ({}, {}) out of bounds for {width}x{height}",
                    e.x, e.y
                )));
            }
            if i > 0 && events[i - 1].t > e.t {
                return Err(Error::Data(format!("event {i} timestamp decreases")));
            }
        }
        Ok(EventStream {
            width,
            height,
            events,
        })
    }

    /// Drops out-of-bounds events and stable-sorts by timestamp.
    pub fn from_unsorted(width: u16, height: u16, mut events: Vec<Event>) -> Self {
        events.retain(|e| e.x < width && e.y < height);
        events.sort_by_key(|e| e.t);
        EventStream {
            width,
            height,
            events,
        }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_t(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_t(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    /// Events with `t0 <= t < t1`.
    pub fn window(&self, t0: u64, t1: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        &self.events[lo..hi.max(lo)]
    }

    /// Appends a stream whose events all start at or after this one's last event.
    pub fn extend(&mut self, other: &EventStream) -> Result<()> {
        if other.width != self.width || other.height != self.height {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if let (Some(a), Some(b)) = (self.last_t(), other.first_t()) {
            if b < a {
                return Err(Error::Data("appended stream overlaps in time".into()));
            }
        }
        self.events.extend_from_slice(&other.events);
        Ok(())
    }
}

/// Per-pixel event counts over a half-open time interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountFrame {
    pub t_start: u64,
    pub t_end: u64,
    width: u16,
    height: u16,
    pos: Vec<u16>,
    neg: Vec<u16>,
}

impl CountFrame {
    pub fn zeros(width: u16, height: u16, t_start: u64, t_end: u64) -> Self {
        let n = width as usize * height as usize;
        CountFrame {
            t_start,
            t_end,
            width,
            height,
            pos: vec![0; n],
            neg: vec![0; n],
        }
    }

    /// Counts every event in `events` regardless of its timestamp.
    pub fn from_events(width: u16, height: u16, t_start: u64, t_end: u64, events: &[Event]) -> Self {
        let mut f = Self::zeros(width, height, t_start, t_end);
        for e in events {
            f.add(e);
        }
        f
    }

    #[inline]
    pub fn add(&mut self, e: &Event) {
        let i = e.y as usize * self.width as usize + e.x as usize;
        let grid = match e.p {
            Polarity::On => &mut self.pos,
            Polarity::Off => &mut self.neg,
        };
        grid[i] = grid[i].saturating_add(1);
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    /// Row-major (`y * width + x`) counts for one polarity.
    pub fn grid(&self, p: Polarity) -> &[u16] {
        match p {
            Polarity::On => &self.pos,
            Polarity::Off => &self.neg,
        }
    }

    pub fn get(&self, p: Polarity, x: usize, y: usize) -> u16 {
        self.grid(p)[y * self.width as usize + x]
    }

    pub fn total(&self) -> u64 {
        self.pos.iter().chain(&self.neg).map(|&c| c as u64).sum()
    }

    /// Pixel coordinates with at least one event of either polarity.
    pub fn active_pixels(&self) -> Vec<(usize, usize)> {
        let w = self.width as usize;
        self.pos
            .iter()
            .zip(&self.neg)
            .enumerate()
            .filter(|(_, (p, n))| **p > 0 || **n > 0)
            .map(|(i, _)| (i % w, i / w))
            .collect()
    }
}

/// Bins `[t0, t1)` into frames of `dt_us`. Frame `k` covers `[t0 + k*dt, t0 + (k+1)*dt)`;
/// the last frame may extend past `t1` but only receives events before `t1`.
pub fn bin_events(stream: &EventStream, dt_us: u64, t0: u64, t1: u64) -> Vec<CountFrame> {
    assert!(dt_us > 0, "bin width must be positive");
    assert!(t0 <= t1, "window start after end");
    let n = (t1 - t0).div_ceil(dt_us) as usize;
    let (w, h) = (stream.width(), stream.height());
    let mut frames: Vec<CountFrame> = (0..n as u64)
        .map(|k| CountFrame::zeros(w, h, t0 + k * dt_us, t0 + (k + 1) * dt_us))
        .collect();
    for e in stream.window(t0, t1) {
        let k = ((e.t - t0) / dt_us) as usize;
        frames[k].add(e);
    }
    frames
}

// ---------------------------------------------------------------------------
// .evf container

pub const EVF_MAGIC: &[u8; 4] = b"EVF1";
pub const EVF_VERSION: u16 = 1;
pub const EVF_HEADER_LEN: usize = 24;
pub const EVF_RECORD_LEN: usize = 14;

pub fn encode_events(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVF_HEADER_LEN + EVF_RECORD_LEN * stream.len());
    out.extend_from_slice(EVF_MAGIC);
    out.extend_from_slice(&EVF_VERSION.to_le_bytes());
    out.extend_from_slice(&stream.width.to_le_bytes());
    out.extend_from_slice(&stream.height.to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    out.extend_from_slice(&[0u8; 6]);
    for e in &stream.events {
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p.bit());
        out.push(0);
        out.extend_from_slice(&e.t.to_le_bytes());
    }
    out
}

pub fn decode_events(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < EVF_HEADER_LEN {
        return Err(Error::parse(bytes.len() as u64, "truncated header"));
    }
    if &bytes[0..4] != EVF_MAGIC {
        return Err(Error::parse(0, "bad magic"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != EVF_VERSION {
        return Err(Error::parse(4, format!("unsupported version {version}")));
    }
    let width = u16_at(6);
    let height = u16_at(8);
    let count = u64_at(10);
    let body = &bytes[EVF_HEADER_LEN..];
    let expected = count
        .checked_mul(EVF_RECORD_LEN as u64)
        .ok_or_else(|| Error::parse(10, "event count overflows"))?;
    if (body.len() as u64) < expected {
        let whole = body.len() / EVF_RECORD_LEN;
        let offset = EVF_HEADER_LEN + whole * EVF_RECORD_LEN;
        return Err(Error::parse(offset as u64, "truncated record"));
    }
    if body.len() as u64 > expected {
        return Err(Error::parse(EVF_HEADER_LEN as u64 + expected, "trailing bytes after last record"));
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut last_t = 0u64;
    for (i, rec) in body.chunks_exact(EVF_RECORD_LEN).enumerate() {
        let offset = (EVF_HEADER_LEN + i * EVF_RECORD_LEN) as u64;
        let x = u16::from_le_bytes([rec[0], rec[1]]);
        let y = u16::from_le_bytes([rec[2], rec[3]]);
        let p = match rec[4] {
            0 => Polarity::Off,
            1 => Polarity::On,
            b => return Err(Error::parse(offset + 4, format!("invalid polarity byte {b}"))),
        };
        let t = u64::from_le_bytes(rec[6..14].try_into().unwrap());
        if x >= width || y >= height {
            return Err(Error::parse(offset, "event out of bounds"));
        }
        if t < last_t {
            return Err(Error::parse(offset + 6, "non-monotone timestamp"));
        }
        last_t = t;
        events.push(Event { x, y, p, t });
    }
    Ok(EventStream {
        width,
        height,
        events,
    })
}

pub fn write_events(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_events(stream)).map_err(|e| Error::io(path, e))
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_events(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn on(x: u16, y: u16, t: u64) -> Event {
        Event::new(x, y, Polarity::On, t)
    }

    #[test]
    fn empty_stream_is_header_only() {
        let s = EventStream::empty(640, 480);
        let bytes = encode_events(&s);
        assert_eq!(bytes.len(), 24);
        assert_eq!(decode_events(&bytes).unwrap(), s);
    }

    #[test]
    fn record_layout_is_fixed_stride() {
        let s = EventStream::new(10, 10, vec![on(3, 4, 0x0102030405060708)]).unwrap();
        let b = encode_events(&s);
        assert_eq!(b.len(), 24 + 14);
        assert_eq!(&b[24..30], &[3, 0, 4, 0, 1, 0]);
        assert_eq!(&b[30..38], &0x0102030405060708u64.to_le_bytes());
    }

    #[test]
    fn x_equal_to_width_is_rejected() {
        let s = EventStream::new(10, 10, vec![on(9, 0, 5)]).unwrap();
        let mut b = encode_events(&s);
        b[24] = 10;
        match decode_events(&b) {
            Err(Error::Parse { offset, msg }) => {
                assert_eq!(offset, 24);
                assert_eq!(msg, "event out of bounds");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let s = EventStream::new(10, 10, vec![on(1, 1, 5), on(2, 2, 9)]).unwrap();
        let good = encode_events(&s);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_events(&bad_magic), Err(Error::Parse { offset: 0, .. })));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(decode_events(truncated), Err(Error::Parse { offset: 38, .. })));

        let mut backwards = good.clone();
        backwards[38 + 6..38 + 14].copy_from_slice(&1u64.to_le_bytes());
        assert!(matches!(decode_events(&backwards), Err(Error::Parse { offset: 44, .. })));
    }

    #[test]
    fn binning_single_event() {
        let s = EventStream::new(8, 8, vec![on(3, 4, 0)]).unwrap();
        let frames = bin_events(&s, 200, 0, 1000);
        assert_eq!(frames.len(), 5);
        assert_eq!(frames[0].get(Polarity::On, 3, 4), 1);
        assert_eq!(frames[0].total(), 1);
        assert!(frames[1..].iter().all(|f| f.total() == 0));
    }

    #[test]
    fn binning_empty_window_and_stream() {
        let s = EventStream::empty(4, 4);
        assert!(bin_events(&s, 200, 100, 100).is_empty());
        let frames = bin_events(&s, 200, 0, 600);
        assert_eq!(frames.len(), 3);
        assert!(frames.iter().all(|f| f.total() == 0));
    }

    #[test]
    fn counts_saturate() {
        let events = vec![on(0, 0, 0); 70_000];
        let s = EventStream::new(1, 1, events).unwrap();
        let f = &bin_events(&s, 10, 0, 10)[0];
        assert_eq!(f.get(Polarity::On, 0, 0), u16::MAX);
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..64, 1u16..64).prop_flat_map(|(w, h)| {
            prop::collection::vec((0..w, 0..h, any::<bool>(), 0u64..1_000_000), 0..1000).prop_map(
                move |raw| {
                    let events = raw
                        .into_iter()
                        .map(|(x, y, p, t)| Event::new(x, y, if p { Polarity::On } else { Polarity::Off }, t))
                        .collect();
                    EventStream::from_unsorted(w, h, events)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn evf_round_trip(s in arb_stream()) {
            let bytes = encode_events(&s);
            prop_assert_eq!(bytes.len(), 24 + 14 * s.len());
            let back = decode_events(&bytes).unwrap();
            prop_assert_eq!(encode_events(&back), bytes);
            prop_assert_eq!(back, s);
        }

        #[test]
        fn binning_conserves_events(s in arb_stream(), dt in 1u64..50_000) {
            let frames = bin_events(&s, dt, 0, 1_000_000);
            let total: u64 = frames.iter().map(|f| f.total()).sum();
            prop_assert_eq!(total, s.len() as u64);
            // Each event sits in exactly the frame that contains its timestamp.
            for e in s.events() {
                let k = (e.t / dt) as usize;
                prop_assert!(frames[k].get(e.p, e.x as usize, e.y as usize) > 0);
                prop_assert!(frames[k].t_start <= e.t && e.t < frames[k].t_end);
            }
        }

        #[test]
        fn binning_commutes_with_concatenation(s in arb_stream(), split_frames in 1u64..20) {
            let dt = 10_000;
            let split = split_frames * dt;
            let (a, b): (Vec<Event>, Vec<Event>) = s.events().iter().partition(|e| e.t < split);
            let sa = EventStream::new(s.width(), s.height(), a).unwrap();
            let sb = EventStream::new(s.width(), s.height(), b).unwrap();
            let mut joined = sa.clone();
            joined.extend(&sb).unwrap();
            let whole = bin_events(&joined, dt, 0, 1_000_000);
            let mut parts = bin_events(&sa, dt, 0, split);
            parts.extend(bin_events(&sb, dt, split, 1_000_000));
            prop_assert_eq!(whole, parts);
        }
    }
}
