//! Rank-3 tensor `(batch, channels, time)` with a time-contiguous layout.
//!
//! All signals and activations in this crate are carried by [`Tensor`].
//! The element type is selectable between `f32` (inference, benchmarks)
//! and `f64` (gradient checks, reproducible training).

use crate::error::{Error, Result};

/// Scalar types the numeric core runs on.
pub trait Real:
    num_traits::Float + num_traits::FloatConst + rustfft::FftNum + Send + Sync + 'static
{
    const DTYPE: &'static str;
    fn real_from(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    #[inline]
    fn real_from(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    #[inline]
    fn real_from(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// `(batch, channels, time)` dense array. Row `(b, c)` occupies the
/// contiguous slice `[(b*channels + c)*time, +time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    data: Vec<F>,
    batch: usize,
    channels: usize,
    time: usize,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(batch: usize, channels: usize, time: usize) -> Self {
        Tensor {
            data: vec![F::zero(); batch * channels * time],
            batch,
            channels,
            time,
        }
    }

    pub fn from_vec(data: Vec<F>, batch: usize, channels: usize, time: usize) -> Result<Self> {
        if data.len() != batch * channels * time {
            return Err(Error::ShapeMismatch {
                context: "Tensor::from_vec",
                expected: format!("{} elements ({batch}x{channels}x{time})", batch * channels * time),
                got: format!("{}", data.len()),
            });
        }
        Ok(Tensor {
            data,
            batch,
            channels,
            time,
        })
    }

    /// Single-row tensor `(1, 1, n)`; handy in tests and for scalars.
    pub fn from_slice(v: &[F]) -> Self {
        Tensor {
            data: v.to_vec(),
            batch: 1,
            channels: 1,
            time: v.len(),
        }
    }

    pub fn scalar(x: F) -> Self {
        Tensor {
            data: vec![x],
            batch: 1,
            channels: 1,
            time: 1,
        }
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.batch
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn time(&self) -> usize {
        self.time
    }
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.time)
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    /// Contiguous time row for `(b, c)`.
    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[F] {
        let o = (b * self.channels + c) * self.time;
        &self.data[o..o + self.time]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [F] {
        let o = (b * self.channels + c) * self.time;
        &mut self.data[o..o + self.time]
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, t: usize) -> F {
        self.data[(b * self.channels + c) * self.time + t]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, v: F) {
        self.data[(b * self.channels + c) * self.time + t] = v;
    }

    /// Value of a `(1,1,1)` tensor.
    pub fn item(&self) -> F {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            data: self.data.iter().map(|&x| f(x)).collect(),
            batch: self.batch,
            channels: self.channels,
            time: self.time,
        }
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            data: self.data.iter().map(|&x| G::real_from(x.as_f64())).collect(),
            batch: self.batch,
            channels: self.channels,
            time: self.time,
        }
    }

    /// Largest absolute element, 0 for empty tensors.
    pub fn max_abs(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |m, &x| if x.abs() > m { x.abs() } else { m })
    }
}

/// Max absolute difference between equally shaped tensors.
pub fn max_abs_diff<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> F {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .fold(F::zero(), |m, (&x, &y)| {
            let d = (x - y).abs();
            if d > m {
                d
            } else {
                m
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_time_contiguous() {
        let mut t = Tensor::<f64>::zeros(2, 3, 4);
        t.set(1, 2, 3, 7.0);
        assert_eq!(t.data()[(1 * 3 + 2) * 4 + 3], 7.0);
        assert_eq!(t.row(1, 2)[3], 7.0);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(vec![0.0f32; 5], 1, 2, 3).is_err());
    }
}
