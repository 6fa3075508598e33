//! Dilated 1-D convolution with weight normalization, plus pointwise
//! nonlinearities.
//!
//! Weights are stored in the weight-norm decomposition `w = g * v / |v|`
//! (per output channel) and the effective kernel is materialized on use.
//! The inner loops stream along the time axis in tiles so large inputs
//! stay cache-resident.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Time-axis padding rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad `(k-1)*dilation/2` on each side; output time == input time.
    /// Requires an odd kernel.
    Same,
    /// No padding; output time == input time - (k-1)*dilation.
    Valid,
}

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    /// `x` for `x >= 0`, `alpha * x` otherwise; `alpha` in (0, 1).
    LeakyRelu(f64),
}

impl Activation {
    #[inline]
    pub fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::LeakyRelu(a) => {
                if x >= F::zero() {
                    x
                } else {
                    F::real_from(a) * x
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Elementwise nonlinearity; rejects non-finite inputs.
pub fn pointwise<F: Real>(x: &Tensor<F>, f: Activation) -> Result<Tensor<F>> {
    if let Activation::LeakyRelu(a) = f {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Format(format!(
                "leaky ReLU alpha {a} outside (0, 1)"
            )));
        }
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("pointwise input"));
    }
    Ok(x.map(|v| f.apply(v)))
}

/// Weight-normalized convolution kernel: direction `v` (out, in, k),
/// per-output-channel magnitude `g` and bias, and a dilation factor.
#[derive(Debug, Clone)]
pub struct ConvWeight<F> {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub v: Vec<F>,
    pub g: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Real> ConvWeight<F> {
    /// Wrap a plain kernel: `v = w`, `g = |w|` per row, so the effective
    /// weight reproduces `w` exactly.
    pub fn from_direct(
        w: Vec<F>,
        out_ch: usize,
        in_ch: usize,
        kernel: usize,
        dilation: usize,
        bias: Vec<F>,
    ) -> Self {
        assert_eq!(w.len(), out_ch * in_ch * kernel);
        assert_eq!(bias.len(), out_ch);
        let g = row_norms(&w, out_ch, in_ch * kernel);
        ConvWeight {
            out_ch,
            in_ch,
            kernel,
            dilation,
            v: w,
            g,
            bias,
        }
    }

    /// Effective weight `g * v / |v|`, flattened (out, in, k). Rows with a
    /// zero direction produce zero weights.
    pub fn effective(&self) -> Vec<F> {
        effective_weight(&self.v, &self.g, self.out_ch, self.in_ch * self.kernel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilation < 1 {
            return Err(Error::Format("dilation must be >= 1".into()));
        }
        if self.v.len() != self.out_ch * self.in_ch * self.kernel
            || self.g.len() != self.out_ch
            || self.bias.len() != self.out_ch
        {
            return Err(Error::ShapeMismatch {
                context: "ConvWeight",
                expected: format!(
                    "v {}x{}x{}, g/bias {}",
                    self.out_ch, self.in_ch, self.kernel, self.out_ch
                ),
                got: format!(
                    "v len {}, g len {}, bias len {}",
                    self.v.len(),
                    self.g.len(),
                    self.bias.len()
                ),
            });
        }
        Ok(())
    }
}

pub(crate) fn row_norms<F: Real>(w: &[F], rows: usize, row_len: usize) -> Vec<F> {
    (0..rows)
        .map(|r| {
            w[r * row_len..(r + 1) * row_len]
                .iter()
                .fold(F::zero(), |s, &x| s + x * x)
                .sqrt()
        })
        .collect()
}

pub(crate) fn effective_weight<F: Real>(v: &[F], g: &[F], rows: usize, row_len: usize) -> Vec<F> {
    let mut w = vec![F::zero(); rows * row_len];
    for r in 0..rows {
        let n = v[r * row_len..(r + 1) * row_len]
            .iter()
            .fold(F::zero(), |s, &x| s + x * x)
            .sqrt();
        if n > F::zero() {
            let s = g[r] / n;
            for i in 0..row_len {
                w[r * row_len + i] = v[r * row_len + i] * s;
            }
        }
    }
    w
}

/// Backward through the weight-norm reparameterization: maps the gradient
/// w.r.t. the effective weight to gradients w.r.t. `v` and `g`.
pub(crate) fn weight_norm_backward<F: Real>(
    v: &[F],
    g: &[F],
    dw: &[F],
    rows: usize,
    row_len: usize,
    dv: &mut [F],
    dg: &mut [F],
) {
    for r in 0..rows {
        let vr = &v[r * row_len..(r + 1) * row_len];
        let dwr = &dw[r * row_len..(r + 1) * row_len];
        let n = vr.iter().fold(F::zero(), |s, &x| s + x * x).sqrt();
        if n <= F::zero() {
            continue;
        }
        let dot = vr
            .iter()
            .zip(dwr)
            .fold(F::zero(), |s, (&a, &b)| s + a * b);
        dg[r] = dg[r] + dot / n;
        let gn = g[r] / n;
        let coef = gn * dot / (n * n);
        let dvr = &mut dv[r * row_len..(r + 1) * row_len];
        for i in 0..row_len {
            dvr[i] = dvr[i] + gn * dwr[i] - coef * vr[i];
        }
    }
}

pub(crate) fn pad_amount(kernel: usize, dilation: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => (kernel - 1) * dilation / 2,
        Padding::Valid => 0,
    }
}

pub(crate) fn out_time(time: usize, kernel: usize, dilation: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => time,
        Padding::Valid => time - (kernel - 1) * dilation,
    }
}

/// Dilated 1-D convolution. `Same` keeps the time axis, `Valid` trims
/// `(k-1)*dilation` samples.
pub fn conv1d<F: Real>(x: &Tensor<F>, w: &ConvWeight<F>, padding: Padding) -> Result<Tensor<F>> {
    w.validate()?;
    check_conv_pre(x, w.in_ch, w.kernel, w.dilation, padding)?;
    let weff = w.effective();
    Ok(conv_forward_raw(
        x, &weff, &w.bias, w.out_ch, w.in_ch, w.kernel, w.dilation, padding,
    ))
}

pub(crate) fn check_conv_pre<F: Real>(
    x: &Tensor<F>,
    in_ch: usize,
    kernel: usize,
    dilation: usize,
    padding: Padding,
) -> Result<()> {
    if x.channels() != in_ch {
        return Err(Error::ChannelMismatch {
            input: x.channels(),
            expected: in_ch,
        });
    }
    if padding == Padding::Same && kernel % 2 == 0 {
        return Err(Error::EvenKernel(kernel));
    }
    if x.time() == 0 {
        return Err(Error::EmptyTime);
    }
    if padding == Padding::Valid && x.time() <= (kernel - 1) * dilation {
        return Err(Error::InputTooShort {
            len: x.time(),
            needed: (kernel - 1) * dilation + 1,
        });
    }
    Ok(())
}

/// Time tile for the convolution inner loops; keeps the accumulator row in
/// L1 and the input window in L2.
const TILE: usize = 2048;

/// Forward convolution on a pre-validated input with an already
/// materialized effective weight (out, in, k).
pub(crate) fn conv_forward_raw<F: Real>(
    x: &Tensor<F>,
    w: &[F],
    bias: &[F],
    out_ch: usize,
    in_ch: usize,
    kernel: usize,
    dilation: usize,
    padding: Padding,
) -> Tensor<F> {
    let (batch, _, time) = x.shape();
    let pad = pad_amount(kernel, dilation, padding);
    let t_out = out_time(time, kernel, dilation, padding);
    let mut out = Tensor::zeros(batch, out_ch, t_out);
    let padded_len = time + 2 * pad;
    let mut xp = vec![F::zero(); in_ch * padded_len];

    for b in 0..batch {
        for c in 0..in_ch {
            let row = &mut xp[c * padded_len..(c + 1) * padded_len];
            row[..pad].fill(F::zero());
            row[pad..pad + time].copy_from_slice(x.row(b, c));
            row[pad + time..].fill(F::zero());
        }
        for t0 in (0..t_out).step_by(TILE) {
            let tl = TILE.min(t_out - t0);
            for oc in 0..out_ch {
                let orow = &mut out.row_mut(b, oc)[t0..t0 + tl];
                orow.fill(bias[oc]);
                for ic in 0..in_ch {
                    let wrow = &w[(oc * in_ch + ic) * kernel..][..kernel];
                    let xrow = &xp[ic * padded_len..(ic + 1) * padded_len];
                    accumulate_taps(orow, xrow, t0, dilation, wrow);
                }
            }
        }
    }
    out
}

/// `acc[i] += sum_j w[j] * xrow[t0 + i + j*d]`, with the three-tap case
/// fused into one pass so it vectorizes.
#[inline]
pub(crate) fn accumulate_taps<F: Real>(acc: &mut [F], xrow: &[F], t0: usize, d: usize, w: &[F]) {
    let tl = acc.len();
    if w.len() == 3 {
        let (w0, w1, w2) = (w[0], w[1], w[2]);
        let s0 = &xrow[t0..t0 + tl];
        let s1 = &xrow[t0 + d..t0 + d + tl];
        let s2 = &xrow[t0 + 2 * d..t0 + 2 * d + tl];
        for i in 0..tl {
            acc[i] = acc[i] + w0 * s0[i] + w1 * s1[i] + w2 * s2[i];
        }
    } else if w.len() == 1 {
        let w0 = w[0];
        let s0 = &xrow[t0..t0 + tl];
        for i in 0..tl {
            acc[i] = acc[i] + w0 * s0[i];
        }
    } else {
        for (j, &wj) in w.iter().enumerate() {
            let s = &xrow[t0 + j * d..t0 + j * d + tl];
            for i in 0..tl {
                acc[i] = acc[i] + wj * s[i];
            }
        }
    }
}

/// Gradients of [`conv_forward_raw`] w.r.t. input, effective weight, and
/// bias. Returns `(dx, dw, dbias)`.
pub(crate) fn conv_backward_raw<F: Real>(
    x: &Tensor<F>,
    w: &[F],
    dout: &Tensor<F>,
    out_ch: usize,
    in_ch: usize,
    kernel: usize,
    dilation: usize,
    padding: Padding,
) -> (Tensor<F>, Vec<F>, Vec<F>) {
    let (batch, _, time) = x.shape();
    let pad = pad_amount(kernel, dilation, padding);
    let t_out = dout.time();
    let padded_len = time + 2 * pad;

    let mut dx = Tensor::zeros(batch, in_ch, time);
    let mut dw = vec![F::zero(); out_ch * in_ch * kernel];
    let mut dbias = vec![F::zero(); out_ch];
    let mut xp = vec![F::zero(); in_ch * padded_len];
    let mut dxp = vec![F::zero(); in_ch * padded_len];

    for b in 0..batch {
        for c in 0..in_ch {
            let row = &mut xp[c * padded_len..(c + 1) * padded_len];
            row[..pad].fill(F::zero());
            row[pad..pad + time].copy_from_slice(x.row(b, c));
            row[pad + time..].fill(F::zero());
        }
        dxp.fill(F::zero());
        for oc in 0..out_ch {
            let dorow = dout.row(b, oc);
            dbias[oc] = dorow.iter().fold(dbias[oc], |s, &v| s + v);
            for ic in 0..in_ch {
                let xrow = &xp[ic * padded_len..(ic + 1) * padded_len];
                let dxrow = &mut dxp[ic * padded_len..(ic + 1) * padded_len];
                for j in 0..kernel {
                    let off = j * dilation;
                    let mut acc = F::zero();
                    let xs = &xrow[off..off + t_out];
                    for t in 0..t_out {
                        acc = acc + dorow[t] * xs[t];
                    }
                    let wi = (oc * in_ch + ic) * kernel + j;
                    dw[wi] = dw[wi] + acc;
                    let wj = w[wi];
                    let ds = &mut dxrow[off..off + t_out];
                    for t in 0..t_out {
                        ds[t] = ds[t] + wj * dorow[t];
                    }
                }
            }
        }
        for c in 0..in_ch {
            let src = &dxp[c * padded_len + pad..c * padded_len + pad + time];
            dx.row_mut(b, c).copy_from_slice(src);
        }
    }
    (dx, dw, dbias)
}
