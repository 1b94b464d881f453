//! Multi-scale exponential filterbank over polarity count frames.
//!
//! Each pixel carries `2 × SCALES` first-order low-pass filters
//! `y[n] = α·y[n-1] + (1-α)·x[n]` updated on a fixed step. Pixels that see no
//! events are not touched: their decay is applied lazily as `α^k` when they are
//! next read or excited, which is exact for the zero-input recursion and keeps
//! the cost proportional to the event count rather than the sensor area.
//!
//! Channel `c` of a snapshot is polarity `c / SCALES` (on = 0, off = 1) at time
//! scale `c % SCALES`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{CountFrame, Event, EventStream, Polarity};
use crate::real::Real;

pub const SCALES: usize = 10;
pub const CHANNELS: usize = 2 * SCALES;

/// Filter periods in microseconds, fastest first.
pub const DEFAULT_TIME_CONSTANTS_US: [f64; SCALES] =
    [200.0, 477.0, 1_130.0, 2_710.0, 6_470.0, 15_440.0, 36_840.0, 87_871.0, 200_000.0, 500_000.0];

pub const DEFAULT_STEP_US: u64 = 200;
/// Per-step input cap; filter values stay in `[0, x_cap]`.
pub const DEFAULT_X_CAP: f64 = 4.0;
pub const BALL_OUTPUT_PERIOD_US: u64 = 3_000;
pub const DART_OUTPUT_PERIOD_US: u64 = 1_000;

const POW_TABLE_LEN: usize = 4096;

/// How a filter value is mapped onto the 8-bit range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scaling {
    /// `q = 255·y/x_cap`: full scale is a sustained rate of `x_cap` events per step.
    #[default]
    Rate,
    /// `q = 255·y/((1-α)·x_cap)`: each channel reads as a leaky event count,
    /// so a single event has the same height on every time scale.
    Count,
}

impl Scaling {
    pub fn name(self) -> &'static str {
        match self {
            Scaling::Rate => "rate",
            Scaling::Count => "count",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rate" => Ok(Scaling::Rate),
            "count" => Ok(Scaling::Count),
            other => Err(Error::Config(format!("unknown filter scaling {other:?} (expected rate or count)"))),
        }
    }
}

/// `α_i = exp(-dt / T_i)`.
pub fn alphas_from_time_constants<T: Real>(time_constants_us: &[f64], dt_us: u64) -> Result<Vec<T>> {
    time_constants_us
        .iter()
        .map(|&tc| {
            if !(tc >= dt_us as f64) {
                return Err(Error::Config(format!("time constant {tc} us is shorter than the {dt_us} us step")));
            }
            Ok(T::lit((-(dt_us as f64) / tc).exp()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterBankConfig {
    pub time_constants_us: Vec<f64>,
    pub dt_us: u64,
    pub output_period_us: u64,
    /// Output (height, width) after downscaling.
    pub crop: (usize, usize),
    pub downscale: usize,
    pub x_cap: f64,
    pub scaling: Scaling,
}

impl Default for FilterBankConfig {
    fn default() -> Self {
        FilterBankConfig {
            time_constants_us: DEFAULT_TIME_CONSTANTS_US.to_vec(),
            dt_us: DEFAULT_STEP_US,
            output_period_us: BALL_OUTPUT_PERIOD_US,
            crop: (240, 240),
            downscale: 2,
            x_cap: DEFAULT_X_CAP,
            scaling: Scaling::Rate,
        }
    }
}

impl FilterBankConfig {
    /// Filter value that quantises to 255, per channel.
    pub fn full_scale(&self) -> Result<[f64; CHANNELS]> {
        let alphas: Vec<f64> = alphas_from_time_constants(&self.time_constants_us, self.dt_us)?;
        let mut out = [self.x_cap; CHANNELS];
        if self.scaling == Scaling::Count {
            for (c, v) in out.iter_mut().enumerate() {
                *v *= 1.0 - alphas[c % SCALES];
            }
        }
        Ok(out)
    }

    pub fn with_period(mut self, output_period_us: u64) -> Self {
        self.output_period_us = output_period_us;
        self
    }

    pub fn with_crop(mut self, h: usize, w: usize) -> Self {
        self.crop = (h, w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_constants_us.len() != SCALES {
            return Err(Error::Config(format!("expected {SCALES} time constants, got {}", self.time_constants_us.len())));
        }
        if !self.time_constants_us.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("time constants must be strictly increasing".into()));
        }
        if self.dt_us == 0 || self.output_period_us == 0 || self.output_period_us % self.dt_us != 0 {
            return Err(Error::Config(format!(
                "output period {} us must be a positive multiple of the {} us step",
                self.output_period_us, self.dt_us
            )));
        }
        if self.downscale == 0 || self.crop.0 == 0 || self.crop.1 == 0 {
            return Err(Error::Config("downscale and crop must be positive".into()));
        }
        if !(self.x_cap > 0.0) {
            return Err(Error::Config("x_cap must be positive".into()));
        }
        let alphas: Vec<f64> = alphas_from_time_constants(&self.time_constants_us, self.dt_us)?;
        if alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Config("every alpha must lie strictly inside (0, 1)".into()));
        }
        Ok(())
    }

    /// Checks that a sensor covers the `downscale × crop` region.
    pub fn check_sensor(&self, width: u16, height: u16) -> Result<()> {
        let (ch, cw) = self.crop;
        if (width as usize) < cw * self.downscale || (height as usize) < ch * self.downscale {
            return Err(Error::Config(format!(
                "sensor {width}x{height} smaller than the {}x{} region needed for a {cw}x{ch} crop",
                cw * self.downscale,
                ch * self.downscale
            )));
        }
        Ok(())
    }
}

/// Quantised network input with its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTensor {
    pub channels: u16,
    pub height: u16,
    pub width: u16,
    pub t_us: u64,
    pub tau_ms: f64,
    pub r_bin: u8,
    pub theta_bin: u8,
    /// Channel-major bytes.
    pub data: Vec<u8>,
}

pub const SMP_HEADER_LEN: usize = 24;

impl SampleTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        SampleTensor {
            channels: channels as u16,
            height: height as u16,
            width: width as u16,
            t_us: 0,
            tau_ms: 0.0,
            r_bin: 0,
            theta_bin: 0,
            data: vec![0; channels * height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels as usize, self.height as usize, self.width as usize)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u8 {
        self.data[(c * self.height as usize + y) * self.width as usize + x]
    }

    pub fn tau_s(&self) -> f64 {
        self.tau_ms / 1000.0
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.t_us.to_le_bytes());
        out.extend_from_slice(&self.tau_ms.to_le_bytes());
        out.push(self.r_bin);
        out.push(self.theta_bin);
        out.extend_from_slice(&self.data);
    }

    /// Decodes one record starting at `bytes[0]`; returns it and its encoded length.
    pub fn decode(bytes: &[u8], base_offset: u64) -> Result<(Self, usize)> {
        if bytes.len() < SMP_HEADER_LEN {
            return Err(Error::parse(base_offset, "truncated sample header"));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let channels = u16_at(0);
        let height = u16_at(2);
        let width = u16_at(4);
        let t_us = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let tau_ms = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let r_bin = bytes[22];
        let theta_bin = bytes[23];
        if r_bin as usize >= crate::geom::R_BINS || theta_bin as usize >= crate::geom::THETA_BINS {
            return Err(Error::parse(base_offset + 22, "label bin out of range"));
        }
        let n = channels as usize * height as usize * width as usize;
        let end = SMP_HEADER_LEN + n;
        if bytes.len() < end {
            return Err(Error::parse(base_offset + bytes.len() as u64, "truncated sample body"));
        }
        Ok((
            SampleTensor {
                channels,
                height,
                width,
                t_us,
                tau_ms,
                r_bin,
                theta_bin,
                data: bytes[SMP_HEADER_LEN..end].to_vec(),
            },
            end,
        ))
    }
}

/// Writes samples back to back into one `.smp` file.
pub fn write_samples(samples: &[SampleTensor], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for s in samples {
        s.encode_into(&mut out);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<SampleTensor>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut off = 0usize;
    while off < bytes.len() {
        let (s, n) = SampleTensor::decode(&bytes[off..], off as u64)?;
        out.push(s);
        off += n;
    }
    Ok(out)
}

/// Anything that turns an event stream into periodic network inputs.
pub trait Encoder {
    fn channels(&self) -> usize;

    /// Output (height, width).
    fn output_shape(&self) -> (usize, usize);

    /// Consumes all events of `stream` with `t < t_us`.
    fn advance_to(&mut self, stream: &EventStream, t_us: u64) -> Result<()>;

    fn snapshot(&self) -> SampleTensor;
}

/// Average-pools `downscale × downscale` blocks of the centre crop and quantises to 8 bits.
fn pool_and_quantize(
    value_at: impl Fn(usize, usize, usize) -> f64,
    channels: usize,
    sensor: (usize, usize),
    crop: (usize, usize),
    downscale: usize,
    full_scale: &[f64],
) -> Vec<u8> {
    let (sw, sh) = sensor;
    let (ch, cw) = crop;
    let ox = (sw / downscale - cw) / 2;
    let oy = (sh / downscale - ch) / 2;
    let norm = 1.0 / (downscale * downscale) as f64;
    let mut out = vec![0u8; channels * ch * cw];
    for c in 0..channels {
        for i in 0..ch {
            for j in 0..cw {
                let mut acc = 0.0;
                for dy in 0..downscale {
                    for dx in 0..downscale {
                        acc += value_at(c, (ox + j) * downscale + dx, (oy + i) * downscale + dy);
                    }
                }
                out[(c * ch + i) * cw + j] = quantize(acc * norm, full_scale[c]);
            }
        }
    }
    out
}

#[inline]
pub fn quantize(v: f64, x_cap: f64) -> u8 {
    (255.0 * (v / x_cap).clamp(0.0, 1.0)).round() as u8
}

/// Exponential filterbank state at full sensor resolution.
#[derive(Clone, Debug)]
pub struct FilterBank<T> {
    config: FilterBankConfig,
    width: u16,
    height: u16,
    alphas: [T; SCALES],
    gains: [T; SCALES],
    x_cap: T,
    full_scale: [f64; CHANNELS],
    /// `pow[k][i] = alpha_i^k` for `k < POW_TABLE_LEN`.
    pow: Vec<[T; SCALES]>,
    /// `[pixel][polarity][scale]`, valid as of step `last[pixel]`.
    y: Vec<T>,
    last: Vec<u32>,
    steps: u32,
    t0: u64,
    // Scratch for the event-driven path.
    scratch: Vec<[u16; 2]>,
    touched: Vec<u32>,
    cursor: usize,
}

impl<T: Real> FilterBank<T> {
    pub fn new(config: FilterBankConfig, width: u16, height: u16, t0_us: u64) -> Result<Self> {
        config.validate()?;
        config.check_sensor(width, height)?;
        let a: Vec<T> = alphas_from_time_constants(&config.time_constants_us, config.dt_us)?;
        let mut alphas = [T::zero(); SCALES];
        alphas.copy_from_slice(&a);
        let gains = alphas.map(|a| T::one() - a);
        let pow = (0..POW_TABLE_LEN).map(|k| alphas.map(|a| a.powi(k as i32))).collect();
        let npix = width as usize * height as usize;
        Ok(FilterBank {
            x_cap: T::lit(config.x_cap),
            full_scale: config.full_scale()?,
            config,
            width,
            height,
            alphas,
            gains,
            pow,
            y: vec![T::zero(); npix * CHANNELS],
            last: vec![0; npix],
            steps: 0,
            t0: t0_us,
            scratch: vec![[0, 0]; npix],
            touched: Vec::new(),
            cursor: 0,
        })
    }

    pub fn config(&self) -> &FilterBankConfig {
        &self.config
    }

    pub fn alphas(&self) -> &[T; SCALES] {
        &self.alphas
    }

    pub fn t_now(&self) -> u64 {
        self.t0 + self.steps as u64 * self.config.dt_us
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn reset(&mut self, t0_us: u64) {
        self.y.iter_mut().for_each(|v| *v = T::zero());
        self.last.iter_mut().for_each(|v| *v = 0);
        self.steps = 0;
        self.t0 = t0_us;
        self.cursor = 0;
    }

    #[inline]
    fn decay(&self, scale: usize, k: u32) -> T {
        if (k as usize) < POW_TABLE_LEN {
            self.pow[k as usize][scale]
        } else {
            self.alphas[scale].powi(k as i32)
        }
    }

    /// Current filter output for channel `c` at pixel `(x, y)`.
    pub fn value(&self, c: usize, x: usize, y: usize) -> T {
        let pix = y * self.width as usize + x;
        let k = self.steps - self.last[pix];
        self.y[pix * CHANNELS + c] * self.decay(c % SCALES, k)
    }

    /// Applies one step with capped counts `(on, off)` at `pix`. `self.steps`
    /// must already point at the step being applied.
    #[inline]
    fn excite(&mut self, pix: usize, counts: [u16; 2]) {
        let k = self.steps - self.last[pix];
        let mut decay = [T::zero(); SCALES];
        for (s, d) in decay.iter_mut().enumerate() {
            *d = self.decay(s, k);
        }
        let base = pix * CHANNELS;
        for (pol, &count) in counts.iter().enumerate() {
            let x = T::lit(count as f64).min(self.x_cap);
            let ys = &mut self.y[base + pol * SCALES..base + (pol + 1) * SCALES];
            for s in 0..SCALES {
                ys[s] = decay[s] * ys[s] + self.gains[s] * x;
            }
        }
        self.last[pix] = self.steps;
    }

    /// One update from a frame covering exactly `[t_now, t_now + dt)`.
    pub fn step(&mut self, frame: &CountFrame) -> Result<()> {
        if frame.width() != self.width || frame.height() != self.height {
            return Err(Error::Shape(format!(
                "frame {}x{} vs filter {}x{}",
                frame.width(),
                frame.height(),
                self.width,
                self.height
            )));
        }
        let t = self.t_now();
        if frame.t_start != t || frame.t_end != t + self.config.dt_us {
            return Err(Error::Data(format!(
                "frame covers [{}, {}) but the filter expects [{t}, {})",
                frame.t_start,
                frame.t_end,
                t + self.config.dt_us
            )));
        }
        self.steps += 1;
        let (on, off) = (frame.grid(Polarity::On), frame.grid(Polarity::Off));
        for pix in 0..on.len() {
            if on[pix] != 0 || off[pix] != 0 {
                self.excite(pix, [on[pix], off[pix]]);
            }
        }
        Ok(())
    }

    /// Steps through `events` (all inside `[t_now, t_end)`) up to `t_end`, which
    /// must be on the step grid. Equivalent to binning and calling [`step`](Self::step).
    pub fn consume(&mut self, events: &[Event], t_end: u64) -> Result<()> {
        let dt = self.config.dt_us;
        if t_end < self.t_now() || (t_end - self.t0) % dt != 0 {
            return Err(Error::Data(format!("{t_end} us is not a step boundary at or after {}", self.t_now())));
        }
        let w = self.width as usize;
        let mut i = 0;
        while self.t_now() < t_end {
            let step_end = self.t_now() + dt;
            if i < events.len() && events[i].t < self.t_now() {
                return Err(Error::Data(format!("event at {} us precedes filter time {}", events[i].t, self.t_now())));
            }
            // Skip runs of empty steps at once.
            if i >= events.len() || events[i].t >= step_end {
                let next = if i < events.len() { events[i].t.min(t_end) } else { t_end };
                let skip = ((next - self.t_now()) / dt).max(1);
                self.steps += skip as u32;
                continue;
            }
            self.steps += 1;
            while i < events.len() && events[i].t < step_end {
                let e = &events[i];
                let pix = e.y as usize * w + e.x as usize;
                let slot = &mut self.scratch[pix];
                if slot[0] == 0 && slot[1] == 0 {
                    self.touched.push(pix as u32);
                }
                let c = &mut slot[e.p.index()];
                *c = c.saturating_add(1);
                i += 1;
            }
            let touched = std::mem::take(&mut self.touched);
            for &pix in &touched {
                let counts = std::mem::replace(&mut self.scratch[pix as usize], [0, 0]);
                self.excite(pix as usize, counts);
            }
            self.touched = touched;
            self.touched.clear();
        }
        if i != events.len() {
            return Err(Error::Data("events beyond the requested end time".into()));
        }
        Ok(())
    }

    /// Quantised, downscaled, centre-cropped view of the current state.
    pub fn snapshot(&self) -> SampleTensor {
        let (ch, cw) = self.config.crop;
        let data = pool_and_quantize(
            |c, x, y| self.value(c, x, y).as_f64(),
            CHANNELS,
            (self.width as usize, self.height as usize),
            self.config.crop,
            self.config.downscale,
            &self.full_scale,
        );
        SampleTensor {
            channels: CHANNELS as u16,
            height: ch as u16,
            width: cw as u16,
            t_us: self.t_now(),
            tau_ms: 0.0,
            r_bin: 0,
            theta_bin: 0,
            data,
        }
    }
}

impl<T: Real> Encoder for FilterBank<T> {
    fn channels(&self) -> usize {
        CHANNELS
    }

    fn output_shape(&self) -> (usize, usize) {
        self.config.crop
    }

    fn advance_to(&mut self, stream: &EventStream, t_us: u64) -> Result<()> {
        let events = stream.events();
        let start = self.cursor;
        let end = start + events[start..].partition_point(|e| e.t < t_us);
        self.consume(&events[start..end], t_us)?;
        self.cursor = end;
        Ok(())
    }

    fn snapshot(&self) -> SampleTensor {
        FilterBank::snapshot(self)
    }
}

/// Two-channel input made of raw counts over a short trailing window, used
/// when the filterbank is ablated.
#[derive(Clone, Debug)]
pub struct BinnedEncoder {
    pub window_us: u64,
    pub crop: (usize, usize),
    pub downscale: usize,
    pub x_cap: f64,
    width: u16,
    height: u16,
    frame: CountFrame,
}

pub const ABLATION_BIN_US: u64 = 477;

impl BinnedEncoder {
    pub fn new(config: &FilterBankConfig, window_us: u64, width: u16, height: u16) -> Result<Self> {
        config.check_sensor(width, height)?;
        Ok(BinnedEncoder {
            window_us,
            crop: config.crop,
            downscale: config.downscale,
            x_cap: config.x_cap,
            width,
            height,
            frame: CountFrame::zeros(width, height, 0, 0),
        })
    }
}

impl Encoder for BinnedEncoder {
    fn channels(&self) -> usize {
        2
    }

    fn output_shape(&self) -> (usize, usize) {
        self.crop
    }

    fn advance_to(&mut self, stream: &EventStream, t_us: u64) -> Result<()> {
        let t0 = t_us.saturating_sub(self.window_us);
        self.frame = CountFrame::from_events(self.width, self.height, t0, t_us, stream.window(t0, t_us));
        Ok(())
    }

    fn snapshot(&self) -> SampleTensor {
        let w = self.width as usize;
        let data = pool_and_quantize(
            |c, x, y| {
                let p = if c == 0 { Polarity::On } else { Polarity::Off };
                self.frame.grid(p)[y * w + x] as f64
            },
            2,
            (self.width as usize, self.height as usize),
            self.crop,
            self.downscale,
            &[self.x_cap; 2],
        );
        SampleTensor {
            channels: 2,
            height: self.crop.0 as u16,
            width: self.crop.1 as u16,
            t_us: self.frame.t_end,
            tau_ms: 0.0,
            r_bin: 0,
            theta_bin: 0,
            data,
        }
    }
}

/// Result of a bin + filter throughput measurement.
#[derive(Clone, Copy, Debug)]
pub struct Throughput {
    pub events: usize,
    pub seconds: f64,
    pub events_per_sec: f64,
}

/// Synthetic stream for benchmarking: `n` events scattered uniformly over the
/// sensor and spread evenly over `duration_us`.
pub fn bench_stream(width: u16, height: u16, n: usize, duration_us: u64, seed: u64) -> EventStream {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let events = (0..n)
        .map(|i| {
            Event::new(
                rng.gen_range(0..width),
                rng.gen_range(0..height),
                if rng.gen::<bool>() { Polarity::On } else { Polarity::Off },
                (i as u128 * duration_us as u128 / n as u128) as u64,
            )
        })
        .collect();
    EventStream::new(width, height, events).expect("generated stream is valid")
}

/// Runs the event-driven bin + filter path over `stream` and times it.
pub fn measure_throughput<T: Real>(stream: &EventStream, config: &FilterBankConfig) -> Result<Throughput> {
    let mut fb = FilterBank::<T>::new(config.clone(), stream.width(), stream.height(), 0)?;
    let dt = config.dt_us;
    let end = stream.last_t().map_or(0, |t| (t / dt + 1) * dt);
    let start = std::time::Instant::now();
    fb.advance_to(stream, end)?;
    let seconds = start.elapsed().as_secs_f64();
    // Keep the optimiser from discarding the work.
    std::hint::black_box(fb.value(0, 0, 0));
    Ok(Throughput {
        events: stream.len(),
        seconds,
        events_per_sec: stream.len() as f64 / seconds.max(1e-12),
    })
}
