//! Location-variable convolution: interval splitting, the kernel
//! predictor, and the gated per-frame convolution.
//!
//! Every conditioning frame owns one `hop`-sample interval of the input.
//! The kernel predictor maps the conditioning sequence to one set of
//! filter/gate kernels and biases per frame; the convolution applies each
//! frame's kernels to its interval. Kernels are selected per output
//! interval, but dilated taps read true neighboring samples across
//! interval boundaries (zero padding at sequence ends only), so the output
//! keeps the input length and frame edges stay artifact-free.

use crate::conv::{self, Activation};
use crate::engine::{ConvSpec, DirectEngine, Engine};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

/// Channel geometry of one LVC layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LvcLayout {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
}

impl LvcLayout {
    /// Per-frame coefficient count: filter + gate kernels plus their
    /// biases, `2*out*in*k + 2*out`.
    pub fn block_width(&self) -> usize {
        2 * self.out_ch * self.in_ch * self.kernel + 2 * self.out_ch
    }

    fn kernel_elems(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel
    }
}

/// Per-frame filter/gate kernels and biases for one LVC layer.
///
/// `wf`/`wg` are `(frames, out, in, k)` row-major; `bf`/`bg` are
/// `(frames, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet<F> {
    pub layout: LvcLayout,
    pub frames: usize,
    pub wf: Vec<F>,
    pub wg: Vec<F>,
    pub bf: Vec<F>,
    pub bg: Vec<F>,
}

impl<F: Real> KernelSet<F> {
    pub fn zeros(layout: LvcLayout, frames: usize) -> Self {
        KernelSet {
            layout,
            frames,
            wf: vec![F::zero(); frames * layout.kernel_elems()],
            wg: vec![F::zero(); frames * layout.kernel_elems()],
            bf: vec![F::zero(); frames * layout.out_ch],
            bg: vec![F::zero(); frames * layout.out_ch],
        }
    }

    /// Replicate one kernel pair across all frames (the degenerate case in
    /// which LVC collapses to an ordinary gated convolution).
    pub fn broadcast(
        layout: LvcLayout,
        frames: usize,
        wf: &[F],
        wg: &[F],
        bf: &[F],
        bg: &[F],
    ) -> Self {
        assert_eq!(wf.len(), layout.kernel_elems());
        assert_eq!(bf.len(), layout.out_ch);
        let mut out = KernelSet::zeros(layout, frames);
        for i in 0..frames {
            out.wf[i * wf.len()..(i + 1) * wf.len()].copy_from_slice(wf);
            out.wg[i * wg.len()..(i + 1) * wg.len()].copy_from_slice(wg);
            out.bf[i * bf.len()..(i + 1) * bf.len()].copy_from_slice(bf);
            out.bg[i * bg.len()..(i + 1) * bg.len()].copy_from_slice(bg);
        }
        out
    }

    /// Extract batch item `b` of a flat coefficient block
    /// `(batch, block_width, frames)` laid out `[wf | wg | bf | bg]` along
    /// the channel axis.
    pub fn from_block(block: &Tensor<F>, b: usize, layout: LvcLayout) -> Self {
        let frames = block.time();
        let ke = layout.kernel_elems();
        debug_assert_eq!(block.channels(), layout.block_width());
        let mut set = KernelSet::zeros(layout, frames);
        for i in 0..frames {
            for e in 0..ke {
                set.wf[i * ke + e] = block.at(b, e, i);
                set.wg[i * ke + e] = block.at(b, ke + e, i);
            }
            for o in 0..layout.out_ch {
                set.bf[i * layout.out_ch + o] = block.at(b, 2 * ke + o, i);
                set.bg[i * layout.out_ch + o] = block.at(b, 2 * ke + layout.out_ch + o, i);
            }
        }
        set
    }

    /// Inverse of [`KernelSet::from_block`] for a single batch item.
    pub fn to_block(&self) -> Tensor<F> {
        let ke = self.layout.kernel_elems();
        let w = self.layout.block_width();
        let mut block = Tensor::zeros(1, w, self.frames);
        for i in 0..self.frames {
            for e in 0..ke {
                block.set(0, e, i, self.wf[i * ke + e]);
                block.set(0, ke + e, i, self.wg[i * ke + e]);
            }
            for o in 0..self.layout.out_ch {
                block.set(0, 2 * ke + o, i, self.bf[i * self.layout.out_ch + o]);
                block.set(
                    0,
                    2 * ke + self.layout.out_ch + o,
                    i,
                    self.bg[i * self.layout.out_ch + o],
                );
            }
        }
        block
    }

    /// Total scalar count, matching `block_width * frames`.
    pub fn coefficient_count(&self) -> usize {
        self.wf.len() + self.wg.len() + self.bf.len() + self.bg.len()
    }
}

/// Split the time axis into `frames` contiguous intervals of length `hop`.
/// Concatenating the result reproduces the input exactly.
pub fn split_intervals<F: Real>(
    x: &Tensor<F>,
    frames: usize,
    hop: usize,
) -> Result<Vec<Tensor<F>>> {
    if x.time() != frames * hop {
        return Err(Error::BadSplit {
            time: x.time(),
            frames,
            hop,
        });
    }
    let (batch, channels, _) = x.shape();
    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        let mut part = Tensor::zeros(batch, channels, hop);
        for b in 0..batch {
            for c in 0..channels {
                part.row_mut(b, c)
                    .copy_from_slice(&x.row(b, c)[i * hop..(i + 1) * hop]);
            }
        }
        out.push(part);
    }
    Ok(out)
}

/// Concatenate interval tensors along time.
pub fn concat_intervals<F: Real>(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
    if parts.is_empty() {
        return Err(Error::EmptyTime);
    }
    let (batch, channels, hop) = parts[0].shape();
    let mut out = Tensor::zeros(batch, channels, hop * parts.len());
    for (i, p) in parts.iter().enumerate() {
        if p.shape() != (batch, channels, hop) {
            return Err(Error::ShapeMismatch {
                context: "concat_intervals",
                expected: format!("{:?}", (batch, channels, hop)),
                got: format!("{:?}", p.shape()),
            });
        }
        for b in 0..batch {
            for c in 0..channels {
                out.row_mut(b, c)[i * hop..(i + 1) * hop].copy_from_slice(p.row(b, c));
            }
        }
    }
    Ok(out)
}

/// Pre-activation filter and gate accumulators, kept for the backward pass.
#[derive(Debug)]
pub struct PreAct<F> {
    pub f: Tensor<F>,
    pub g: Tensor<F>,
}

pub(crate) fn check_lvc_pre<F: Real>(
    x: &Tensor<F>,
    kern: &Tensor<F>,
    layout: LvcLayout,
    hop: usize,
) -> Result<()> {
    if layout.kernel % 2 == 0 {
        return Err(Error::EvenKernel(layout.kernel));
    }
    if x.channels() != layout.in_ch {
        return Err(Error::ChannelMismatch {
            input: x.channels(),
            expected: layout.in_ch,
        });
    }
    if x.time() == 0 {
        return Err(Error::EmptyTime);
    }
    if kern.channels() != layout.block_width() || kern.batch() != x.batch() {
        return Err(Error::ShapeMismatch {
            context: "lvc kernels",
            expected: format!("({}, {}, frames)", x.batch(), layout.block_width()),
            got: format!("{:?}", kern.shape()),
        });
    }
    if x.time() != kern.time() * hop {
        return Err(Error::BadSplit {
            time: x.time(),
            frames: kern.time(),
            hop,
        });
    }
    Ok(())
}

/// Gated LVC forward on the flat coefficient block
/// `(batch, block_width, frames)`. Assumes inputs pre-validated.
pub(crate) fn lvc_forward_raw<F: Real>(
    x: &Tensor<F>,
    kern: &Tensor<F>,
    layout: LvcLayout,
    dilation: usize,
    hop: usize,
    want_pre: bool,
) -> (Tensor<F>, Option<PreAct<F>>) {
    let (batch, in_ch, time) = x.shape();
    let frames = kern.time();
    let (co, k) = (layout.out_ch, layout.kernel);
    let ke = layout.kernel_elems();
    let pad = (k - 1) * dilation / 2;
    let padded_len = time + 2 * pad;

    let mut out = Tensor::zeros(batch, co, time);
    let mut pre = if want_pre {
        Some(PreAct {
            f: Tensor::zeros(batch, co, time),
            g: Tensor::zeros(batch, co, time),
        })
    } else {
        None
    };

    let mut xp = vec![F::zero(); in_ch * padded_len];
    let mut kcol = vec![F::zero(); layout.block_width()];
    let mut fseg = vec![F::zero(); hop];
    let mut gseg = vec![F::zero(); hop];

    for b in 0..batch {
        for c in 0..in_ch {
            let row = &mut xp[c * padded_len..(c + 1) * padded_len];
            row[..pad].fill(F::zero());
            row[pad..pad + time].copy_from_slice(x.row(b, c));
            row[pad + time..].fill(F::zero());
        }
        for i in 0..frames {
            for (w, slot) in kcol.iter_mut().enumerate() {
                *slot = kern.at(b, w, i);
            }
            let (wf, rest) = kcol.split_at(ke);
            let (wg, biases) = rest.split_at(ke);
            let (bf, bg) = biases.split_at(co);
            let t0 = i * hop;
            for oc in 0..co {
                fseg.fill(bf[oc]);
                gseg.fill(bg[oc]);
                for ic in 0..in_ch {
                    let xrow = &xp[ic * padded_len..(ic + 1) * padded_len];
                    // pad == (k-1)/2 * dilation cancels the centering shift,
                    // so the segment start in padded coordinates is t0.
                    conv::accumulate_taps(
                        &mut fseg,
                        xrow,
                        t0,
                        dilation,
                        &wf[(oc * in_ch + ic) * k..][..k],
                    );
                    conv::accumulate_taps(
                        &mut gseg,
                        xrow,
                        t0,
                        dilation,
                        &wg[(oc * in_ch + ic) * k..][..k],
                    );
                }
                let orow = &mut out.row_mut(b, oc)[t0..t0 + hop];
                for t in 0..hop {
                    orow[t] = fseg[t].tanh() * conv::sigmoid(gseg[t]);
                }
                if let Some(p) = pre.as_mut() {
                    p.f.row_mut(b, oc)[t0..t0 + hop].copy_from_slice(&fseg);
                    p.g.row_mut(b, oc)[t0..t0 + hop].copy_from_slice(&gseg);
                }
            }
        }
    }
    (out, pre)
}

/// Gradients of [`lvc_forward_raw`] w.r.t. the input and the coefficient
/// block. Returns `(dx, dkernels)`.
pub(crate) fn lvc_backward_raw<F: Real>(
    x: &Tensor<F>,
    kern: &Tensor<F>,
    layout: LvcLayout,
    dilation: usize,
    hop: usize,
    pre: &PreAct<F>,
    dout: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>) {
    let (batch, in_ch, time) = x.shape();
    let frames = kern.time();
    let (co, k) = (layout.out_ch, layout.kernel);
    let ke = layout.kernel_elems();
    let pad = (k - 1) * dilation / 2;
    let padded_len = time + 2 * pad;

    let mut dx = Tensor::zeros(batch, in_ch, time);
    let mut dkern = Tensor::zeros(batch, layout.block_width(), frames);

    let mut xp = vec![F::zero(); in_ch * padded_len];
    let mut dxp = vec![F::zero(); in_ch * padded_len];
    let mut kcol = vec![F::zero(); layout.block_width()];
    let mut dfseg = vec![F::zero(); hop];
    let mut dgseg = vec![F::zero(); hop];

    for b in 0..batch {
        for c in 0..in_ch {
            let row = &mut xp[c * padded_len..(c + 1) * padded_len];
            row[..pad].fill(F::zero());
            row[pad..pad + time].copy_from_slice(x.row(b, c));
            row[pad + time..].fill(F::zero());
        }
        dxp.fill(F::zero());
        for i in 0..frames {
            for (w, slot) in kcol.iter_mut().enumerate() {
                *slot = kern.at(b, w, i);
            }
            let t0 = i * hop;
            for oc in 0..co {
                let dorow = &dout.row(b, oc)[t0..t0 + hop];
                let frow = &pre.f.row(b, oc)[t0..t0 + hop];
                let grow = &pre.g.row(b, oc)[t0..t0 + hop];
                for t in 0..hop {
                    let th = frow[t].tanh();
                    let sg = conv::sigmoid(grow[t]);
                    dfseg[t] = dorow[t] * sg * (F::one() - th * th);
                    dgseg[t] = dorow[t] * th * sg * (F::one() - sg);
                }
                let sum_f = dfseg.iter().fold(F::zero(), |s, &v| s + v);
                let sum_g = dgseg.iter().fold(F::zero(), |s, &v| s + v);
                let bf_ch = 2 * ke + oc;
                let bg_ch = 2 * ke + co + oc;
                dkern.set(b, bf_ch, i, dkern.at(b, bf_ch, i) + sum_f);
                dkern.set(b, bg_ch, i, dkern.at(b, bg_ch, i) + sum_g);
                for ic in 0..in_ch {
                    let xrow = &xp[ic * padded_len..(ic + 1) * padded_len];
                    let dxrow = &mut dxp[ic * padded_len..(ic + 1) * padded_len];
                    for j in 0..k {
                        let off = t0 + j * dilation;
                        let xs = &xrow[off..off + hop];
                        let mut acc_f = F::zero();
                        let mut acc_g = F::zero();
                        for t in 0..hop {
                            acc_f = acc_f + dfseg[t] * xs[t];
                            acc_g = acc_g + dgseg[t] * xs[t];
                        }
                        let wch = (oc * in_ch + ic) * k + j;
                        dkern.set(b, wch, i, dkern.at(b, wch, i) + acc_f);
                        dkern.set(b, ke + wch, i, dkern.at(b, ke + wch, i) + acc_g);
                        let wfv = kcol[wch];
                        let wgv = kcol[ke + wch];
                        let ds = &mut dxrow[off..off + hop];
                        for t in 0..hop {
                            ds[t] = ds[t] + wfv * dfseg[t] + wgv * dgseg[t];
                        }
                    }
                }
            }
        }
        for c in 0..in_ch {
            let src = &dxp[c * padded_len + pad..c * padded_len + pad + time];
            dx.row_mut(b, c).copy_from_slice(src);
        }
    }
    (dx, dkern)
}

/// Gated location-variable convolution: interval `i` of the output uses
/// kernel set `i`, while dilated taps read the full sequence.
///
/// `kernels` carries one [`KernelSet`] per batch item.
pub fn lvc_forward<F: Real>(
    x: &Tensor<F>,
    kernels: &[KernelSet<F>],
    dilation: usize,
    hop: usize,
) -> Result<Tensor<F>> {
    if kernels.is_empty() || kernels.len() != x.batch() {
        return Err(Error::ShapeMismatch {
            context: "lvc_forward",
            expected: format!("{} kernel sets", x.batch()),
            got: format!("{}", kernels.len()),
        });
    }
    let layout = kernels[0].layout;
    let frames = kernels[0].frames;
    let mut block = Tensor::zeros(x.batch(), layout.block_width(), frames);
    for (b, set) in kernels.iter().enumerate() {
        if set.layout != layout || set.frames != frames {
            return Err(Error::ShapeMismatch {
                context: "lvc_forward",
                expected: format!("uniform kernel sets {layout:?} x {frames}"),
                got: format!("{:?} x {}", set.layout, set.frames),
            });
        }
        let one = set.to_block();
        for c in 0..layout.block_width() {
            block.row_mut(b, c).copy_from_slice(one.row(0, c));
        }
    }
    check_lvc_pre(x, &block, layout, hop)?;
    let (out, _) = lvc_forward_raw(x, &block, layout, dilation, hop, false);
    Ok(out)
}

/// Kernel predictor: entry convolution for conditioning/waveform alignment
/// plus a 1x1 residual trunk and a stacked 1x1 output projection wide
/// enough for every served LVC layer.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPredictorConfig {
    pub cond_channels: usize,
    pub hidden_channels: usize,
    /// Number of 1x1 residual layers in the trunk.
    pub residual_layers: usize,
    /// Entry kernel size; the entry convolution uses Valid padding and
    /// trims `entry_kernel - 1` frames.
    pub entry_kernel: usize,
    /// Intermediate width of the stacked output projection.
    pub expand_channels: usize,
    pub leaky_alpha: f64,
    /// One layout per LVC layer served, in slicing order.
    pub targets: Vec<LvcLayout>,
}

impl KernelPredictorConfig {
    /// Output channel count: sum over targets of `2*out*in*k + 2*out`.
    pub fn output_width(&self) -> usize {
        self.targets.iter().map(|t| t.block_width()).sum()
    }

    /// Frames surviving the Valid entry convolution.
    pub fn usable_frames(&self, cond_frames: usize) -> Result<usize> {
        if cond_frames < self.entry_kernel {
            return Err(Error::CondTooShort {
                frames: cond_frames,
                needed: self.entry_kernel,
            });
        }
        Ok(cond_frames - (self.entry_kernel - 1))
    }

    /// Register predictor parameters under `prefix`. The output head starts
    /// with a small effective magnitude so predicted kernels begin near
    /// zero.
    pub fn init_params<F: Real>(
        &self,
        store: &mut ParamStore<F>,
        prefix: &str,
        rng: &mut impl rand::Rng,
    ) {
        store.init_conv(
            &format!("{prefix}.entry"),
            self.hidden_channels,
            self.cond_channels,
            self.entry_kernel,
            rng,
            1.0,
        );
        for j in 0..self.residual_layers {
            store.init_conv(
                &format!("{prefix}.res{j}"),
                self.hidden_channels,
                self.hidden_channels,
                1,
                rng,
                1.0,
            );
        }
        store.init_conv(
            &format!("{prefix}.expand"),
            self.expand_channels,
            self.hidden_channels,
            1,
            rng,
            1.0,
        );
        store.init_conv(
            &format!("{prefix}.out"),
            self.output_width(),
            self.expand_channels,
            1,
            rng,
            0.01,
        );
    }

    /// Predictor forward: `(batch, cond, frames)` conditioning to the flat
    /// coefficient block `(batch, output_width, frames - entry_kernel + 1)`.
    pub fn forward<F: Real, E: Engine<F>>(
        &self,
        eng: &mut E,
        h: &E::Val,
        prefix: &str,
    ) -> Result<E::Val> {
        let (_, _, frames) = eng.shape(h);
        self.usable_frames(frames)?;
        let leaky = Activation::LeakyRelu(self.leaky_alpha);
        let entry = eng.conv(
            h,
            &format!("{prefix}.entry"),
            ConvSpec::valid(self.hidden_channels, self.cond_channels, self.entry_kernel),
        )?;
        let mut p = eng.act(&entry, leaky)?;
        for j in 0..self.residual_layers {
            let c = eng.conv(
                &p,
                &format!("{prefix}.res{j}"),
                ConvSpec::pointwise(self.hidden_channels, self.hidden_channels),
            )?;
            let c = eng.act(&c, leaky)?;
            p = eng.add(&p, &c)?;
        }
        let e = eng.conv(
            &p,
            &format!("{prefix}.expand"),
            ConvSpec::pointwise(self.expand_channels, self.hidden_channels),
        )?;
        let e = eng.act(&e, leaky)?;
        eng.conv(
            &e,
            &format!("{prefix}.out"),
            ConvSpec::pointwise(self.output_width(), self.expand_channels),
        )
    }
}

/// Run the kernel predictor and carve the output into one [`KernelSet`]
/// per target layer, in declared order. Conditioning batch must be 1.
pub fn predict_kernels<F: Real>(
    h: &Tensor<F>,
    cfg: &KernelPredictorConfig,
    params: &ParamStore<F>,
    prefix: &str,
) -> Result<Vec<KernelSet<F>>> {
    if h.batch() != 1 {
        return Err(Error::ShapeMismatch {
            context: "predict_kernels",
            expected: "batch 1".into(),
            got: format!("{}", h.batch()),
        });
    }
    let mut eng = DirectEngine::new(params);
    let hv = h.clone();
    let block = cfg.forward(&mut eng, &hv, prefix)?;
    carve_kernel_sets(&block, &cfg.targets)
}

/// Slice a flat predictor output `(1, total_width, frames)` into per-layer
/// kernel sets.
pub fn carve_kernel_sets<F: Real>(
    block: &Tensor<F>,
    targets: &[LvcLayout],
) -> Result<Vec<KernelSet<F>>> {
    let total: usize = targets.iter().map(|t| t.block_width()).sum();
    if block.channels() != total {
        return Err(Error::ShapeMismatch {
            context: "carve_kernel_sets",
            expected: format!("{total} channels"),
            got: format!("{}", block.channels()),
        });
    }
    let mut out = Vec::with_capacity(targets.len());
    let mut off = 0;
    for &lay in targets {
        let w = lay.block_width();
        let mut sub = Tensor::zeros(1, w, block.time());
        for c in 0..w {
            sub.row_mut(0, c).copy_from_slice(block.row(0, off + c));
        }
        out.push(KernelSet::from_block(&sub, 0, lay));
        off += w;
    }
    Ok(out)
}
