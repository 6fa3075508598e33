//! Define-by-run reverse-mode tape.
//!
//! Values are computed eagerly as operations are recorded; `backward`
//! walks the records once in reverse creation order (which is topological
//! by construction) and accumulates adjoints. The tape is rebuilt every
//! training step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{self, Activation, ConvWeight, Padding};
use crate::dsp::{self, Spectra, StftSpec};
use crate::error::{Error, Result};
use crate::lvc::{self, LvcLayout, PreAct};
use crate::tensor::{Real, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Elementwise functions the tape can differentiate. The public
/// [`Activation`] set is a subset.
#[derive(Debug, Clone, Copy)]
pub(crate) enum PointFn {
    Act(Activation),
    Square,
    Abs,
    /// `ln(max(x, floor))`.
    LogFloor(f64),
    /// `a * x + b`.
    Affine(f64, f64),
    Sqrt,
}

impl PointFn {
    fn apply<F: Real>(self, x: F) -> F {
        match self {
            PointFn::Act(a) => a.apply(x),
            PointFn::Square => x * x,
            PointFn::Abs => x.abs(),
            PointFn::LogFloor(f) => x.max(F::real_from(f)).ln(),
            PointFn::Affine(a, b) => F::real_from(a) * x + F::real_from(b),
            PointFn::Sqrt => x.sqrt(),
        }
    }

    /// Derivative given the input `x` and the output `y`.
    fn derivative<F: Real>(self, x: F, y: F) -> F {
        match self {
            PointFn::Act(Activation::Tanh) => F::one() - y * y,
            PointFn::Act(Activation::Sigmoid) => y * (F::one() - y),
            PointFn::Act(Activation::LeakyRelu(a)) => {
                if x >= F::zero() {
                    F::one()
                } else {
                    F::real_from(a)
                }
            }
            PointFn::Square => F::real_from(2.0) * x,
            PointFn::Abs => {
                if x > F::zero() {
                    F::one()
                } else if x < F::zero() {
                    -F::one()
                } else {
                    F::zero()
                }
            }
            PointFn::LogFloor(f) => {
                if x >= F::real_from(f) {
                    F::one() / x
                } else {
                    F::zero()
                }
            }
            PointFn::Affine(a, _) => F::real_from(a),
            PointFn::Sqrt => {
                if y > F::zero() {
                    F::real_from(0.5) / y
                } else {
                    F::zero()
                }
            }
        }
    }
}

enum Op<F: Real> {
    Leaf {
        requires_grad: bool,
    },
    Conv {
        x: Var,
        v: Var,
        g: Var,
        b: Var,
        out_ch: usize,
        in_ch: usize,
        kernel: usize,
        dilation: usize,
        padding: Padding,
        weff: Vec<F>,
    },
    Lvc {
        x: Var,
        kernels: Var,
        layout: LvcLayout,
        dilation: usize,
        hop: usize,
        pre: PreAct<F>,
    },
    Point {
        x: Var,
        f: PointFn,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    SliceCh {
        x: Var,
        lo: usize,
    },
    Upsample {
        x: Var,
        factor: usize,
    },
    StftMag {
        x: Var,
        spec: StftSpec,
        spectra: Vec<Spectra<F>>,
    },
    SumAll {
        x: Var,
    },
    MeanAll {
        x: Var,
    },
}

struct Node<F: Real> {
    value: Tensor<F>,
    op: Op<F>,
}

#[derive(Default)]
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
}

/// Adjoints produced by [`Tape::backward`]. Only leaf adjoints are retained.
pub struct Gradients<F> {
    adj: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.adj.get(v.0).and_then(|o| o.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.adj.get_mut(v.0).and_then(|o| o.take())
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf (parameter or input under test).
    pub fn leaf(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf { requires_grad: true })
    }

    /// Non-differentiable constant (targets, conditioning treated as data).
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf { requires_grad: false })
    }

    /// Weight-normalized dilated convolution over `(v, g, b)` leaves.
    pub fn conv(
        &mut self,
        x: Var,
        v: Var,
        g: Var,
        b: Var,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (out_ch, in_ch, kernel) = self.nodes[v.0].value.shape();
        conv::check_conv_pre(&self.nodes[x.0].value, in_ch, kernel, dilation, padding)?;
        let weff = conv::effective_weight(
            self.nodes[v.0].value.data(),
            self.nodes[g.0].value.data(),
            out_ch,
            in_ch * kernel,
        );
        let out = conv::conv_forward_raw(
            &self.nodes[x.0].value,
            &weff,
            self.nodes[b.0].value.data(),
            out_ch,
            in_ch,
            kernel,
            dilation,
            padding,
        );
        Ok(self.push(
            out,
            Op::Conv {
                x,
                v,
                g,
                b,
                out_ch,
                in_ch,
                kernel,
                dilation,
                padding,
                weff,
            },
        ))
    }

    /// Gated location-variable convolution; `kernels` is the flat per-frame
    /// coefficient block `(batch, layout.block_width(), frames)`.
    pub fn lvc(
        &mut self,
        x: Var,
        kernels: Var,
        layout: LvcLayout,
        dilation: usize,
        hop: usize,
    ) -> Result<Var> {
        lvc::check_lvc_pre(
            &self.nodes[x.0].value,
            &self.nodes[kernels.0].value,
            layout,
            hop,
        )?;
        let (out, pre) = lvc::lvc_forward_raw(
            &self.nodes[x.0].value,
            &self.nodes[kernels.0].value,
            layout,
            dilation,
            hop,
            true,
        );
        Ok(self.push(
            out,
            Op::Lvc {
                x,
                kernels,
                layout,
                dilation,
                hop,
                pre: pre.expect("pre-activations requested"),
            },
        ))
    }

    pub fn act(&mut self, x: Var, f: Activation) -> Var {
        self.point(x, PointFn::Act(f))
    }

    pub(crate) fn point(&mut self, x: Var, f: PointFn) -> Var {
        let out = self.nodes[x.0].value.map(|v| f.apply(v));
        self.push(out, Op::Point { x, f })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.point(x, PointFn::Square)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.point(x, PointFn::Abs)
    }

    pub fn log_floor(&mut self, x: Var, floor: f64) -> Var {
        self.point(x, PointFn::LogFloor(floor))
    }

    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        self.point(x, PointFn::Affine(a, b))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.point(x, PointFn::Sqrt)
    }

    fn binary_shapes(&self, a: Var, b: Var, what: &'static str) -> Result<()> {
        let sa = self.nodes[a.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        if sa != sb {
            return Err(Error::ShapeMismatch {
                context: what,
                expected: format!("{sa:?}"),
                got: format!("{sb:?}"),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "add")?;
        let out = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "sub")?;
        let out = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        Ok(self.push(out, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "mul")?;
        let out = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn slice_channels(&mut self, x: Var, lo: usize, hi: usize) -> Result<Var> {
        let (batch, channels, time) = self.nodes[x.0].value.shape();
        if lo >= hi || hi > channels {
            return Err(Error::ShapeMismatch {
                context: "slice_channels",
                expected: format!("range within 0..{channels}"),
                got: format!("{lo}..{hi}"),
            });
        }
        let mut out = Tensor::zeros(batch, hi - lo, time);
        for b in 0..batch {
            for c in lo..hi {
                out.row_mut(b, c - lo)
                    .copy_from_slice(self.nodes[x.0].value.row(b, c));
            }
        }
        Ok(self.push(out, Op::SliceCh { x, lo }))
    }

    /// Nearest-neighbor repeat along time.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::Format("upsample factor must be >= 1".into()));
        }
        let out = upsample_nearest_raw(&self.nodes[x.0].value, factor);
        Ok(self.push(out, Op::Upsample { x, factor }))
    }

    /// One-sided STFT magnitudes of a 1-channel signal: `(batch, bins, frames)`.
    pub fn stft_mag(&mut self, x: Var, spec: StftSpec) -> Result<Var> {
        let (batch, channels, _time) = self.nodes[x.0].value.shape();
        if channels != 1 {
            return Err(Error::ShapeMismatch {
                context: "stft_mag",
                expected: "1 channel".into(),
                got: format!("{channels}"),
            });
        }
        let mut spectra = Vec::with_capacity(batch);
        for b in 0..batch {
            spectra.push(dsp::stft_complex(self.nodes[x.0].value.row(b, 0), spec)?);
        }
        let frames = spectra[0].frames;
        let bins = spectra[0].bins;
        let mut out = Tensor::zeros(batch, bins, frames);
        for (b, sp) in spectra.iter().enumerate() {
            for t in 0..frames {
                for k in 0..bins {
                    out.set(b, k, t, sp.data[t * bins + k].norm());
                }
            }
        }
        Ok(self.push(out, Op::StftMag { x, spec, spectra }))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0]
            .value
            .data()
            .iter()
            .fold(F::zero(), |a, &v| a + v);
        self.push(Tensor::scalar(s), Op::SumAll { x })
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].value.len();
        let s = self.nodes[x.0]
            .value
            .data()
            .iter()
            .fold(F::zero(), |a, &v| a + v);
        self.push(
            Tensor::scalar(s / F::real_from(n as f64)),
            Op::MeanAll { x },
        )
    }

    /// Reverse pass from a scalar loss. Returns adjoints for leaves.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::ShapeMismatch {
                context: "backward",
                expected: "scalar loss".into(),
                got: format!("{:?}", self.nodes[loss.0].value.shape()),
            });
        }
        let mut adj: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(F::one()));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            let Some(d) = adj[id].take() else { continue };
            self.backprop_node(id, &d, &mut adj);
        }
        // Drop adjoints of constants.
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { requires_grad: false } = node.op {
                adj[id] = None;
            }
        }
        Ok(Gradients { adj })
    }

    fn backprop_node(&self, id: usize, d: &Tensor<F>, adj: &mut [Option<Tensor<F>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Conv {
                x,
                v,
                g,
                b,
                out_ch,
                in_ch,
                kernel,
                dilation,
                padding,
                weff,
            } => {
                debug_assert!(x.0 < id && v.0 < id && g.0 < id && b.0 < id);
                let (dx, dweff, dbias) = conv::conv_backward_raw(
                    &self.nodes[x.0].value,
                    weff,
                    d,
                    *out_ch,
                    *in_ch,
                    *kernel,
                    *dilation,
                    *padding,
                );
                let row_len = in_ch * kernel;
                let mut dv = vec![F::zero(); out_ch * row_len];
                let mut dg = vec![F::zero(); *out_ch];
                conv::weight_norm_backward(
                    self.nodes[v.0].value.data(),
                    self.nodes[g.0].value.data(),
                    &dweff,
                    *out_ch,
                    row_len,
                    &mut dv,
                    &mut dg,
                );
                accumulate(adj, *x, dx);
                accumulate(
                    adj,
                    *v,
                    Tensor::from_vec(dv, *out_ch, *in_ch, *kernel).expect("dv dims"),
                );
                accumulate(adj, *g, Tensor::from_vec(dg, 1, 1, *out_ch).expect("dg dims"));
                accumulate(
                    adj,
                    *b,
                    Tensor::from_vec(dbias, 1, 1, *out_ch).expect("db dims"),
                );
            }
            Op::Lvc {
                x,
                kernels,
                layout,
                dilation,
                hop,
                pre,
            } => {
                debug_assert!(x.0 < id && kernels.0 < id);
                let (dx, dkern) = lvc::lvc_backward_raw(
                    &self.nodes[x.0].value,
                    &self.nodes[kernels.0].value,
                    *layout,
                    *dilation,
                    *hop,
                    pre,
                    d,
                );
                accumulate(adj, *x, dx);
                accumulate(adj, *kernels, dkern);
            }
            Op::Point { x, f } => {
                let xin = &self.nodes[x.0].value;
                let mut dx = Tensor::zeros(xin.batch(), xin.channels(), xin.time());
                for ((o, &dv), (&xi, &yi)) in dx
                    .data_mut()
                    .iter_mut()
                    .zip(d.data())
                    .zip(xin.data().iter().zip(node.value.data()))
                {
                    *o = dv * f.derivative(xi, yi);
                }
                accumulate(adj, *x, dx);
            }
            Op::Add { a, b } => {
                accumulate(adj, *a, d.clone());
                accumulate(adj, *b, d.clone());
            }
            Op::Sub { a, b } => {
                accumulate(adj, *a, d.clone());
                accumulate(adj, *b, d.map(|v| -v));
            }
            Op::Mul { a, b } => {
                let da = zip_map(d, &self.nodes[b.0].value, |x, y| x * y);
                let db = zip_map(d, &self.nodes[a.0].value, |x, y| x * y);
                accumulate(adj, *a, da);
                accumulate(adj, *b, db);
            }
            Op::SliceCh { x, lo } => {
                let xin = &self.nodes[x.0].value;
                let mut dx = Tensor::zeros(xin.batch(), xin.channels(), xin.time());
                for b in 0..d.batch() {
                    for c in 0..d.channels() {
                        dx.row_mut(b, lo + c).copy_from_slice(d.row(b, c));
                    }
                }
                accumulate(adj, *x, dx);
            }
            Op::Upsample { x, factor } => {
                let xin = &self.nodes[x.0].value;
                let mut dx = Tensor::zeros(xin.batch(), xin.channels(), xin.time());
                for b in 0..xin.batch() {
                    for c in 0..xin.channels() {
                        let drow = d.row(b, c);
                        let xrow = dx.row_mut(b, c);
                        for (t, o) in xrow.iter_mut().enumerate() {
                            let seg = &drow[t * factor..(t + 1) * factor];
                            *o = seg.iter().fold(F::zero(), |s, &v| s + v);
                        }
                    }
                }
                accumulate(adj, *x, dx);
            }
            Op::StftMag { x, spec, spectra } => {
                let xin = &self.nodes[x.0].value;
                let mut dx = Tensor::zeros(xin.batch(), 1, xin.time());
                for (b, sp) in spectra.iter().enumerate() {
                    let mut dmag = vec![F::zero(); sp.frames * sp.bins];
                    for t in 0..sp.frames {
                        for k in 0..sp.bins {
                            dmag[t * sp.bins + k] = d.at(b, k, t);
                        }
                    }
                    let g = dsp::stft_magnitude_backward(xin.time(), *spec, sp, &dmag);
                    dx.row_mut(b, 0).copy_from_slice(&g);
                }
                accumulate(adj, *x, dx);
            }
            Op::SumAll { x } => {
                let xin = &self.nodes[x.0].value;
                let s = d.item();
                accumulate(
                    adj,
                    *x,
                    Tensor::from_vec(
                        vec![s; xin.len()],
                        xin.batch(),
                        xin.channels(),
                        xin.time(),
                    )
                    .expect("shape"),
                );
            }
            Op::MeanAll { x } => {
                let xin = &self.nodes[x.0].value;
                let s = d.item() / F::real_from(xin.len() as f64);
                accumulate(
                    adj,
                    *x,
                    Tensor::from_vec(
                        vec![s; xin.len()],
                        xin.batch(),
                        xin.channels(),
                        xin.time(),
                    )
                    .expect("shape"),
                );
            }
        }
    }
}

fn zip_map<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_vec(data, a.batch(), a.channels(), a.time()).expect("shape")
}

fn accumulate<F: Real>(adj: &mut [Option<Tensor<F>>], v: Var, t: Tensor<F>) {
    match &mut adj[v.0] {
        Some(existing) => {
            debug_assert_eq!(existing.shape(), t.shape());
            for (a, &b) in existing.data_mut().iter_mut().zip(t.data()) {
                *a = *a + b;
            }
        }
        slot @ None => *slot = Some(t),
    }
}

pub(crate) fn upsample_nearest_raw<F: Real>(x: &Tensor<F>, factor: usize) -> Tensor<F> {
    let (batch, channels, time) = x.shape();
    let mut out = Tensor::zeros(batch, channels, time * factor);
    for b in 0..batch {
        for c in 0..channels {
            let src = x.row(b, c);
            let dst = out.row_mut(b, c);
            for t in 0..time {
                dst[t * factor..(t + 1) * factor].fill(src[t]);
            }
        }
    }
    out
}

/// Convenience pure-op backward wrapper: the spec-level `conv1d` operation
/// differentiated with respect to `x`, `v`, `g` and `bias`.
pub fn conv1d_backward<F: Real>(
    x: &Tensor<F>,
    w: &ConvWeight<F>,
    padding: Padding,
    dout: &Tensor<F>,
) -> Result<(Tensor<F>, ConvWeight<F>)> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let vv = tape.leaf(Tensor::from_vec(w.v.clone(), w.out_ch, w.in_ch, w.kernel)?);
    let gv = tape.leaf(Tensor::from_vec(w.g.clone(), 1, 1, w.out_ch)?);
    let bv = tape.leaf(Tensor::from_vec(w.bias.clone(), 1, 1, w.out_ch)?);
    let y = tape.conv(xv, vv, gv, bv, w.dilation, padding)?;
    // Contract the given cotangent with a weighted sum node.
    let dconst = tape.constant(dout.clone());
    let prod = tape.mul(y, dconst)?;
    let loss = tape.sum_all(prod);
    let mut grads = tape.backward(loss)?;
    let dx = grads.take(xv).expect("dx");
    let dv = grads.take(vv).expect("dv");
    let dg = grads.take(gv).expect("dg");
    let db = grads.take(bv).expect("db");
    Ok((
        dx,
        ConvWeight {
            out_ch: w.out_ch,
            in_ch: w.in_ch,
            kernel: w.kernel,
            dilation: w.dilation,
            v: dv.into_vec(),
            g: dg.into_vec(),
            bias: db.into_vec(),
        },
    ))
}

/// Max relative error between tape gradients and central finite
/// differences (64-bit, epsilon 1e-5):
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// The builder must be a pure function of the input tensors and return a
/// scalar node.
pub fn grad_check<B>(build: &B, inputs: &[Tensor<f64>]) -> Result<f64>
where
    B: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    grad_check_subsampled(build, inputs, usize::MAX, 0)
}

/// [`grad_check`] probing at most `max_coords` coordinates per input,
/// chosen by a seeded RNG (large composites would otherwise need one
/// forward pair per scalar).
pub fn grad_check_subsampled<B>(
    build: &B,
    inputs: &[Tensor<f64>],
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    B: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    if tape.value(loss).len() != 1 {
        return Err(Error::ShapeMismatch {
            context: "grad_check",
            expected: "scalar loss".into(),
            got: format!("{:?}", tape.value(loss).shape()),
        });
    }
    let grads = tape.backward(loss)?;

    let eps = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();

    for (i, input) in inputs.iter().enumerate() {
        let n = input.len();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            let mut set = std::collections::BTreeSet::new();
            while set.len() < max_coords {
                set.insert(rng.random_range(0..n));
            }
            set.into_iter().collect()
        };
        let zero;
        let analytic = match grads.get(vars[i]) {
            Some(t) => t,
            None => {
                zero = Tensor::zeros(input.batch(), input.channels(), input.time());
                &zero
            }
        };
        for c in coords {
            let orig = work[i].data()[c];
            work[i].data_mut()[c] = orig + eps;
            let fp = eval(&work)?;
            work[i].data_mut()[c] = orig - eps;
            let fm = eval(&work)?;
            work[i].data_mut()[c] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.data()[c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
