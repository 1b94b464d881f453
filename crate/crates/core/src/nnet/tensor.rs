use crate::error::{Error, Result};
use crate::filterbank::SampleTensor;
use crate::real::Real;

/// `(channels, height, width)` activation, row-major within each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::Shape(format!("{} values for shape ({c}, {h}, {w})", data.len())));
        }
        Ok(Tensor { c, h, w, data })
    }

    /// Quantised sample scaled to `[0, 1]`.
    pub fn from_sample(s: &SampleTensor) -> Self {
        let (c, h, w) = s.shape();
        let scale = T::lit(1.0 / 255.0);
        Tensor {
            c,
            h,
            w,
            data: s.data.iter().map(|&q| T::lit(q as f64) * scale).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
