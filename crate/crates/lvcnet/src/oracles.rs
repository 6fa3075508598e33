//! Reference implementations used by tests and the acceptance suite.
//!
//! These are deliberately naive (per-sample loops, explicit index math)
//! and independent of the tiled kernels they check.

use crate::conv::Padding;
use crate::lvc::KernelSet;
use crate::tensor::{Real, Tensor};

/// Brute-force O(B*Co*Ci*K*T) convolution loop.
pub fn conv1d_loop_oracle<F: Real>(
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
    let (t_out, shift) = match padding {
        Padding::Same => (time, -(((kernel - 1) * dilation / 2) as isize)),
        Padding::Valid => (time - (kernel - 1) * dilation, 0),
    };
    let mut out = Tensor::zeros(batch, out_ch, t_out);
    for b in 0..batch {
        for oc in 0..out_ch {
            for t in 0..t_out {
                let mut acc = bias[oc];
                for ic in 0..in_ch {
                    for j in 0..kernel {
                        let s = t as isize + shift + (j * dilation) as isize;
                        if s >= 0 && (s as usize) < time {
                            acc = acc
                                + w[(oc * in_ch + ic) * kernel + j] * x.at(b, ic, s as usize);
                        }
                    }
                }
                out.set(b, oc, t, acc);
            }
        }
    }
    out
}

/// Per-sample LVC oracle: for every output sample `t` it selects kernel
/// set `t / hop` and sums the dilated taps explicitly (zeros past the
/// sequence ends), then applies the gated activation.
pub fn lvc_sample_oracle<F: Real>(
    x: &Tensor<F>,
    kernels: &[KernelSet<F>],
    dilation: usize,
    hop: usize,
) -> Tensor<F> {
    let (batch, in_ch, time) = x.shape();
    let lay = kernels[0].layout;
    let (co, k) = (lay.out_ch, lay.kernel);
    let center = ((k - 1) / 2) as isize;
    let mut out = Tensor::zeros(batch, co, time);
    for b in 0..batch {
        let set = &kernels[b];
        for t in 0..time {
            let i = t / hop;
            for oc in 0..co {
                let mut f = set.bf[i * co + oc];
                let mut g = set.bg[i * co + oc];
                for ic in 0..in_ch {
                    for j in 0..k {
                        let s = t as isize + (j as isize - center) * dilation as isize;
                        if s >= 0 && (s as usize) < time {
                            let xv = x.at(b, ic, s as usize);
                            let e = ((i * co + oc) * in_ch + ic) * k + j;
                            f = f + set.wf[e] * xv;
                            g = g + set.wg[e] * xv;
                        }
                    }
                }
                let sig = F::one() / (F::one() + (-g).exp());
                out.set(b, oc, t, f.tanh() * sig);
            }
        }
    }
    out
}

/// One-sided radius of the nonzero support of `d out[t0] / d x`, measured
/// from a gradient probe. `grad` is that gradient as a `(1, C, T)` tensor.
pub fn probe_radius<F: Real>(grad: &Tensor<F>, t0: usize) -> usize {
    let mut radius = 0;
    for c in 0..grad.channels() {
        for (t, &v) in grad.row(0, c).iter().enumerate() {
            if v != F::zero() {
                let d = t.abs_diff(t0);
                if d > radius {
                    radius = d;
                }
            }
        }
    }
    radius
}
