use rand::Rng;

use crate::error::{Error, Result};
use crate::filterbank::{SampleTensor, CHANNELS};
use crate::geom::{R_BINS, THETA_BINS};
use crate::real::Real;
use crate::seed;

use super::layers::*;
use super::tensor::Tensor;

pub const CONV_LAYERS: usize = 7;
pub const POOLS: usize = 2;
/// θ and r logits share the class head output.
pub const CLASS_OUTPUTS: usize = THETA_BINS + R_BINS;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// `(channels, height, width)` of the input.
    pub input: (usize, usize, usize),
    pub convs: Vec<ConvSpec>,
    /// Indices of the conv layers followed by a 2× max pool.
    pub pool_after: [usize; POOLS],
    /// Side of the average-pooling readout grid; 1 is global average pooling.
    pub readout_grid: usize,
    pub tau_hidden: usize,
    pub class_hidden: usize,
    /// τ is regressed as `τ / tau_scale` (seconds).
    pub tau_scale: f64,
}

fn chain(input_c: usize, widths: [usize; CONV_LAYERS]) -> Vec<ConvSpec> {
    let mut c = input_c;
    widths
        .iter()
        .map(|&w| {
            let s = ConvSpec::same3x3(c, w);
            c = w;
            s
        })
        .collect()
}

impl ModelConfig {
    /// 20×240×240 input, widths 32-32-64-64-96-96-128, global average pooling.
    pub fn full(tau_scale: f64) -> Self {
        ModelConfig {
            input: (CHANNELS, 240, 240),
            convs: chain(CHANNELS, [32, 32, 64, 64, 96, 96, 128]),
            pool_after: [1, 3],
            readout_grid: 1,
            tau_hidden: 64,
            class_hidden: 64,
            tau_scale,
        }
    }

    /// 20×60×60 input with quarter widths and a 5×5 readout grid.
    pub fn desk(tau_scale: f64) -> Self {
        ModelConfig {
            input: (CHANNELS, 60, 60),
            convs: chain(CHANNELS, [8, 8, 16, 16, 24, 24, 32]),
            pool_after: [1, 3],
            readout_grid: 5,
            tau_hidden: 32,
            class_hidden: 32,
            tau_scale,
        }
    }

    /// Same topology with arbitrary input shape and widths; used by tests.
    pub fn custom(input: (usize, usize, usize), widths: [usize; CONV_LAYERS], readout_grid: usize, hidden: usize) -> Self {
        ModelConfig {
            input,
            convs: chain(input.0, widths),
            pool_after: [1, 3],
            readout_grid,
            tau_hidden: hidden,
            class_hidden: hidden,
            tau_scale: 1.0,
        }
    }

    pub fn with_input(mut self, c: usize, h: usize, w: usize) -> Self {
        self.input = (c, h, w);
        if let Some(first) = self.convs.first_mut() {
            first.in_c = c;
        }
        self
    }

    pub fn feature_len(&self) -> usize {
        self.convs.last().map_or(0, |c| c.out_c) * self.readout_grid * self.readout_grid
    }

    pub fn validate(&self) -> Result<Layout> {
        if self.convs.len() != CONV_LAYERS {
            return Err(Error::Config(format!("model needs exactly {CONV_LAYERS} conv layers, got {}", self.convs.len())));
        }
        if self.pool_after[0] >= self.pool_after[1] || self.pool_after[1] >= CONV_LAYERS {
            return Err(Error::Config(format!("pool placement {:?} must be two increasing conv indices", self.pool_after)));
        }
        if !(self.tau_scale > 0.0 && self.tau_scale.is_finite()) {
            return Err(Error::Config(format!("tau_scale must be positive, got {}", self.tau_scale)));
        }
        if self.tau_hidden == 0 || self.class_hidden == 0 || self.readout_grid == 0 {
            return Err(Error::Config("head widths and readout grid must be positive".into()));
        }
        let (mut c, mut h, mut w) = self.input;
        let mut offset = 0;
        let mut conv = Vec::with_capacity(CONV_LAYERS);
        for (i, s) in self.convs.iter().enumerate() {
            if s.in_c != c {
                return Err(Error::Config(format!("conv{i} expects {} input channels but receives {c}", s.in_c)));
            }
            if s.kernel == 0 || s.stride == 0 || s.out_c == 0 || h + 2 * s.pad < s.kernel || w + 2 * s.pad < s.kernel {
                return Err(Error::Config(format!("conv{i} {s:?} invalid for a {h}x{w} input")));
            }
            (h, w) = s.out_hw(h, w);
            c = s.out_c;
            conv.push((offset, offset + s.weight_len()));
            offset += s.weight_len() + s.out_c;
            if self.pool_after.contains(&i) {
                if h < 2 || w < 2 {
                    return Err(Error::Config(format!("pool after conv{i} on a {h}x{w} map")));
                }
                (h, w) = (h / 2, w / 2);
            }
        }
        if h < self.readout_grid || w < self.readout_grid {
            return Err(Error::Config(format!("final {h}x{w} map smaller than readout grid {}", self.readout_grid)));
        }
        let f = self.feature_len();
        let mut dense = |n_in: usize, n_out: usize| {
            let d = DenseSlot {
                w: offset,
                b: offset + n_in * n_out,
                n_in,
                n_out,
            };
            offset += n_in * n_out + n_out;
            d
        };
        let tau1 = dense(f, self.tau_hidden);
        let tau2 = dense(self.tau_hidden, 1);
        let cls1 = dense(f, self.class_hidden);
        let cls2 = dense(self.class_hidden, CLASS_OUTPUTS);
        Ok(Layout {
            conv,
            tau1,
            tau2,
            cls1,
            cls2,
            final_hw: (h, w),
            len: offset,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "input = {},{},{}\npool_after = {},{}\nreadout_grid = {}\ntau_hidden = {}\nclass_hidden = {}\ntau_scale = {:?}\n",
            self.input.0,
            self.input.1,
            self.input.2,
            self.pool_after[0],
            self.pool_after[1],
            self.readout_grid,
            self.tau_hidden,
            self.class_hidden,
            self.tau_scale
        );
        for (i, c) in self.convs.iter().enumerate() {
            s += &format!("conv{i} = {},{},{},{},{}\n", c.in_c, c.out_c, c.kernel, c.stride, c.pad);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig {
            input: (0, 0, 0),
            convs: vec![ConvSpec::same3x3(0, 0); CONV_LAYERS],
            pool_after: [1, 3],
            readout_grid: 1,
            tau_hidden: 0,
            class_hidden: 0,
            tau_scale: 1.0,
        };
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::parse(n as u64 + 1, format!("{m}: {line:?}"));
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            let ints = || -> Result<Vec<usize>> { v.split(',').map(|p| p.trim().parse().map_err(|_| bad("bad integer"))).collect() };
            let one = || -> Result<usize> { v.parse().map_err(|_| bad("bad integer")) };
            match k {
                "input" => match ints()?[..] {
                    [c, h, w] => cfg.input = (c, h, w),
                    _ => return Err(bad("input needs 3 values")),
                },
                "pool_after" => match ints()?[..] {
                    [a, b] => cfg.pool_after = [a, b],
                    _ => return Err(bad("pool_after needs 2 values")),
                },
                "readout_grid" => cfg.readout_grid = one()?,
                "tau_hidden" => cfg.tau_hidden = one()?,
                "class_hidden" => cfg.class_hidden = one()?,
                "tau_scale" => cfg.tau_scale = v.parse().map_err(|_| bad("bad number"))?,
                _ if k.starts_with("conv") => {
                    let i: usize = k[4..].parse().map_err(|_| bad("bad conv index"))?;
                    if i >= CONV_LAYERS {
                        return Err(bad("conv index out of range"));
                    }
                    match ints()?[..] {
                        [in_c, out_c, kernel, stride, pad] => {
                            cfg.convs[i] = ConvSpec {
                                in_c,
                                out_c,
                                kernel,
                                stride,
                                pad,
                            }
                        }
                        _ => return Err(bad("conv needs in,out,kernel,stride,pad")),
                    }
                }
                _ => return Err(bad("unknown model key")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseSlot {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

/// Offsets of every parameter block inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    /// `(weight offset, bias offset)` per conv layer.
    pub conv: Vec<(usize, usize)>,
    pub tau1: DenseSlot,
    pub tau2: DenseSlot,
    pub cls1: DenseSlot,
    pub cls2: DenseSlot,
    pub final_hw: (usize, usize),
    pub len: usize,
}

/// Raw network outputs for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub tau_s: T,
    pub theta_logits: Vec<T>,
    pub r_logits: Vec<T>,
}

/// Intermediate values kept for the backward pass.
pub struct Trace<T> {
    conv_in_hw: Vec<(usize, usize)>,
    cols: Vec<Vec<T>>,
    conv_out: Vec<Tensor<T>>,
    pools: Vec<(Vec<u32>, (usize, usize, usize))>,
    features: Vec<T>,
    tau_h: Vec<T>,
    cls_h: Vec<T>,
}

/// Gradient of the loss with respect to one sample's outputs.
pub struct OutputGrad<T> {
    pub tau_s: T,
    pub theta: Vec<T>,
    pub r: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    config: ModelConfig,
    layout: Layout,
    pub params: Vec<T>,
}

fn finite<T: Real>(v: &[T], layer: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation after {layer}")))
    }
}

impl<T: Real> Network<T> {
    /// Fan-in scaled uniform weights, zero biases, zero final head layers.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let layout = config.validate()?;
        let mut params = vec![T::zero(); layout.len];
        let mut rng = seed::rng(seed);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut Vec<T>| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = T::lit(rng.gen_range(-bound..bound));
            }
        };
        for (s, &(w, _)) in config.convs.iter().zip(&layout.conv) {
            fill(w..w + s.weight_len(), s.patch(), &mut params);
        }
        for d in [layout.tau1, layout.cls1] {
            fill(d.w..d.b, d.n_in, &mut params);
        }
        Ok(Network { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self> {
        let layout = config.validate()?;
        if params.len() != layout.len {
            return Err(Error::Shape(format!("model expects {} parameters, got {}", layout.len, params.len())));
        }
        Ok(Network { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.len
    }

    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != self.config.input {
            return Err(Error::Shape(format!("model expects input {:?}, got {:?}", self.config.input, x.shape())));
        }
        Ok(())
    }

    fn dense(&self, d: DenseSlot, x: &[T]) -> Result<Vec<T>> {
        linear_forward(x, &self.params[d.w..d.b], &self.params[d.b..d.b + d.n_out])
    }

    /// Forward pass retaining everything the backward pass needs.
    pub fn forward_trace(&self, input: &Tensor<T>) -> Result<(Prediction<T>, Trace<T>)> {
        self.check_input(input)?;
        let mut trace = Trace {
            conv_in_hw: Vec::with_capacity(CONV_LAYERS),
            cols: Vec::with_capacity(CONV_LAYERS),
            conv_out: Vec::with_capacity(CONV_LAYERS),
            pools: Vec::with_capacity(POOLS),
            features: Vec::new(),
            tau_h: Vec::new(),
            cls_h: Vec::new(),
        };
        let mut x = input.clone();
        for (i, (s, &(w, b))) in self.config.convs.iter().zip(&self.layout.conv).enumerate() {
            let mut col = Vec::new();
            let mut y = conv2d_forward(&x, &self.params[w..b], &self.params[b..b + s.out_c], s, &mut col)?;
            elu_forward(&mut y.data);
            finite(&y.data, &format!("conv{i}"))?;
            trace.conv_in_hw.push((x.h, x.w));
            trace.cols.push(col);
            x = if self.config.pool_after.contains(&i) {
                let (p, arg) = maxpool2x2_forward(&y)?;
                trace.pools.push((arg, y.shape()));
                trace.conv_out.push(y);
                p
            } else {
                trace.conv_out.push(y.clone());
                y
            };
        }
        let features = grid_pool_forward(&x, self.config.readout_grid)?;
        let mut tau_h = self.dense(self.layout.tau1, &features)?;
        elu_forward(&mut tau_h);
        finite(&tau_h, "tau hidden")?;
        let tau = self.dense(self.layout.tau2, &tau_h)?[0];
        let mut cls_h = self.dense(self.layout.cls1, &features)?;
        elu_forward(&mut cls_h);
        finite(&cls_h, "class hidden")?;
        let logits = self.dense(self.layout.cls2, &cls_h)?;
        finite(&logits, "class output")?;
        finite(&[tau], "tau output")?;
        let pred = Prediction {
            tau_s: tau * T::lit(self.config.tau_scale),
            theta_logits: logits[..THETA_BINS].to_vec(),
            r_logits: logits[THETA_BINS..].to_vec(),
        };
        trace.features = features;
        trace.tau_h = tau_h;
        trace.cls_h = cls_h;
        Ok((pred, trace))
    }

    pub fn forward_one(&self, input: &Tensor<T>) -> Result<Prediction<T>> {
        Ok(self.forward_trace(input)?.0)
    }

    /// Batch forward; rows are computed independently.
    pub fn forward(&self, batch: &[SampleTensor]) -> Result<Vec<Prediction<T>>> {
        batch.iter().map(|s| self.forward_one(&Tensor::from_sample(s))).collect()
    }

    /// Accumulates parameter gradients for one sample into `grads`.
    pub fn backward(&self, trace: &Trace<T>, dout: &OutputGrad<T>, grads: &mut [T]) {
        let l = &self.layout;
        let p = &self.params;
        let split = |d: DenseSlot, x: &[T], dy: &[T], grads: &mut [T]| {
            let (gw, gb) = grads[d.w..d.b + d.n_out].split_at_mut(d.n_in * d.n_out);
            linear_backward(x, dy, &p[d.w..d.b], gw, gb)
        };
        let dtau = [dout.tau_s * T::lit(self.config.tau_scale)];
        let mut dh = split(l.tau2, &trace.tau_h, &dtau, grads);
        elu_backward(&trace.tau_h, &mut dh);
        let mut dfeat = split(l.tau1, &trace.features, &dh, grads);
        let dlogits: Vec<T> = dout.theta.iter().chain(&dout.r).copied().collect();
        let mut dh = split(l.cls2, &trace.cls_h, &dlogits, grads);
        elu_backward(&trace.cls_h, &mut dh);
        for (a, b) in dfeat.iter_mut().zip(split(l.cls1, &trace.features, &dh, grads)) {
            *a += b;
        }
        let last = self.config.convs[CONV_LAYERS - 1].out_c;
        let (fh, fw) = l.final_hw;
        let mut dx = grid_pool_backward(&dfeat, (last, fh, fw), self.config.readout_grid);
        let mut pool = POOLS;
        for i in (0..CONV_LAYERS).rev() {
            if self.config.pool_after.contains(&i) {
                pool -= 1;
                let (arg, shape) = &trace.pools[pool];
                dx = maxpool2x2_backward(&dx, arg, *shape);
            }
            elu_backward(&trace.conv_out[i].data, &mut dx.data);
            let s = &self.config.convs[i];
            let (w, b) = l.conv[i];
            let (gw, gb) = grads[w..b + s.out_c].split_at_mut(s.weight_len());
            match conv2d_backward(trace.conv_in_hw[i], &trace.cols[i], &dx, &p[w..b], s, gw, gb, i > 0) {
                Some(d) => dx = d,
                None => break,
            }
        }
    }
}
