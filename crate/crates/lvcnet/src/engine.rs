//! Execution engines: the same network wiring runs either directly on
//! tensors (inference, no graph retained) or on the autograd tape
//! (training). Models are written once against [`Engine`] so the two
//! paths cannot drift.

use indexmap::IndexMap;

use crate::autograd::{Tape, Var};
use crate::conv::{self, Activation, Padding};
use crate::error::{Error, Result};
use crate::lvc::{self, LvcLayout};
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

/// Static convolution geometry; the named weights must match.
#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn same(out_ch: usize, in_ch: usize, kernel: usize, dilation: usize) -> Self {
        ConvSpec {
            out_ch,
            in_ch,
            kernel,
            dilation,
            padding: Padding::Same,
        }
    }

    pub fn valid(out_ch: usize, in_ch: usize, kernel: usize) -> Self {
        ConvSpec {
            out_ch,
            in_ch,
            kernel,
            dilation: 1,
            padding: Padding::Valid,
        }
    }

    pub fn pointwise(out_ch: usize, in_ch: usize) -> Self {
        ConvSpec::same(out_ch, in_ch, 1, 1)
    }
}

pub trait Engine<F: Real> {
    type Val: Clone;

    fn constant(&mut self, t: Tensor<F>) -> Self::Val;
    fn shape(&self, v: &Self::Val) -> (usize, usize, usize);

    /// Weight-normalized convolution with parameters `<base>.{v,g,b}`.
    fn conv(&mut self, x: &Self::Val, base: &str, spec: ConvSpec) -> Result<Self::Val>;
    fn lvc(
        &mut self,
        x: &Self::Val,
        kernels: &Self::Val,
        layout: LvcLayout,
        dilation: usize,
        hop: usize,
    ) -> Result<Self::Val>;
    fn act(&mut self, x: &Self::Val, f: Activation) -> Result<Self::Val>;
    fn add(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn mul(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn slice_channels(&mut self, x: &Self::Val, lo: usize, hi: usize) -> Result<Self::Val>;
    fn upsample_nearest(&mut self, x: &Self::Val, factor: usize) -> Result<Self::Val>;
}

fn check_spec_against_store<F: Real>(
    store: &ParamStore<F>,
    base: &str,
    spec: &ConvSpec,
) -> Result<()> {
    let v = store.get(&format!("{base}.v"))?;
    let want = vec![spec.out_ch, spec.in_ch, spec.kernel];
    if v.dims != want {
        return Err(Error::ShapeMismatch {
            context: "conv weights",
            expected: format!("{base}.v dims {want:?}"),
            got: format!("{:?}", v.dims),
        });
    }
    Ok(())
}

/// Eager evaluation on plain tensors; intermediates are freed as soon as
/// the caller drops them.
pub struct DirectEngine<'a, F> {
    store: &'a ParamStore<F>,
}

impl<'a, F: Real> DirectEngine<'a, F> {
    pub fn new(store: &'a ParamStore<F>) -> Self {
        DirectEngine { store }
    }
}

impl<F: Real> Engine<F> for DirectEngine<'_, F> {
    type Val = Tensor<F>;

    fn constant(&mut self, t: Tensor<F>) -> Tensor<F> {
        t
    }

    fn shape(&self, v: &Tensor<F>) -> (usize, usize, usize) {
        v.shape()
    }

    fn conv(&mut self, x: &Tensor<F>, base: &str, spec: ConvSpec) -> Result<Tensor<F>> {
        check_spec_against_store(self.store, base, &spec)?;
        conv::check_conv_pre(x, spec.in_ch, spec.kernel, spec.dilation, spec.padding)?;
        let v = self.store.get(&format!("{base}.v"))?;
        let g = self.store.get(&format!("{base}.g"))?;
        let b = self.store.get(&format!("{base}.b"))?;
        let weff = conv::effective_weight(&v.data, &g.data, spec.out_ch, spec.in_ch * spec.kernel);
        Ok(conv::conv_forward_raw(
            x,
            &weff,
            &b.data,
            spec.out_ch,
            spec.in_ch,
            spec.kernel,
            spec.dilation,
            spec.padding,
        ))
    }

    fn lvc(
        &mut self,
        x: &Tensor<F>,
        kernels: &Tensor<F>,
        layout: LvcLayout,
        dilation: usize,
        hop: usize,
    ) -> Result<Tensor<F>> {
        lvc::check_lvc_pre(x, kernels, layout, hop)?;
        let (out, _) = lvc::lvc_forward_raw(x, kernels, layout, dilation, hop, false);
        Ok(out)
    }

    fn act(&mut self, x: &Tensor<F>, f: Activation) -> Result<Tensor<F>> {
        Ok(x.map(|v| f.apply(v)))
    }

    fn add(&mut self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                context: "add",
                expected: format!("{:?}", a.shape()),
                got: format!("{:?}", b.shape()),
            });
        }
        let mut out = a.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
            *o = *o + v;
        }
        Ok(out)
    }

    fn mul(&mut self, a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                context: "mul",
                expected: format!("{:?}", a.shape()),
                got: format!("{:?}", b.shape()),
            });
        }
        let mut out = a.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
            *o = *o * v;
        }
        Ok(out)
    }

    fn slice_channels(&mut self, x: &Tensor<F>, lo: usize, hi: usize) -> Result<Tensor<F>> {
        if lo >= hi || hi > x.channels() {
            return Err(Error::ShapeMismatch {
                context: "slice_channels",
                expected: format!("range within 0..{}", x.channels()),
                got: format!("{lo}..{hi}"),
            });
        }
        let mut out = Tensor::zeros(x.batch(), hi - lo, x.time());
        for b in 0..x.batch() {
            for c in lo..hi {
                out.row_mut(b, c - lo).copy_from_slice(x.row(b, c));
            }
        }
        Ok(out)
    }

    fn upsample_nearest(&mut self, x: &Tensor<F>, factor: usize) -> Result<Tensor<F>> {
        if factor == 0 {
            return Err(Error::Format("upsample factor must be >= 1".into()));
        }
        Ok(crate::autograd::upsample_nearest_raw(x, factor))
    }
}

/// Records onto a [`Tape`]; parameters become differentiable leaves,
/// created once per name and shared across uses.
pub struct TapeEngine<'a, F: Real> {
    tape: &'a mut Tape<F>,
    store: &'a ParamStore<F>,
    leaves: IndexMap<String, Var>,
}

impl<'a, F: Real> TapeEngine<'a, F> {
    pub fn new(tape: &'a mut Tape<F>, store: &'a ParamStore<F>) -> Self {
        TapeEngine {
            tape,
            store,
            leaves: IndexMap::new(),
        }
    }

    pub fn tape(&mut self) -> &mut Tape<F> {
        self.tape
    }

    /// Leaf var for a named parameter, created on first use.
    pub fn param_var(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.leaves.get(name) {
            return Ok(v);
        }
        let p = self.store.get(name)?;
        let var = self.tape.leaf(p.as_tensor());
        self.leaves.insert(name.to_string(), var);
        Ok(var)
    }

    /// All parameter leaves touched so far, in first-use order.
    pub fn leaves(&self) -> impl Iterator<Item = (&String, Var)> {
        self.leaves.iter().map(|(n, &v)| (n, v))
    }
}

impl<F: Real> Engine<F> for TapeEngine<'_, F> {
    type Val = Var;

    fn constant(&mut self, t: Tensor<F>) -> Var {
        self.tape.constant(t)
    }

    fn shape(&self, v: &Var) -> (usize, usize, usize) {
        self.tape.value(*v).shape()
    }

    fn conv(&mut self, x: &Var, base: &str, spec: ConvSpec) -> Result<Var> {
        check_spec_against_store(self.store, base, &spec)?;
        let v = self.param_var(&format!("{base}.v"))?;
        let g = self.param_var(&format!("{base}.g"))?;
        let b = self.param_var(&format!("{base}.b"))?;
        self.tape.conv(*x, v, g, b, spec.dilation, spec.padding)
    }

    fn lvc(
        &mut self,
        x: &Var,
        kernels: &Var,
        layout: LvcLayout,
        dilation: usize,
        hop: usize,
    ) -> Result<Var> {
        self.tape.lvc(*x, *kernels, layout, dilation, hop)
    }

    fn act(&mut self, x: &Var, f: Activation) -> Result<Var> {
        Ok(self.tape.act(*x, f))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.add(*a, *b)
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.mul(*a, *b)
    }

    fn slice_channels(&mut self, x: &Var, lo: usize, hi: usize) -> Result<Var> {
        self.tape.slice_channels(*x, lo, hi)
    }

    fn upsample_nearest(&mut self, x: &Var, factor: usize) -> Result<Var> {
        self.tape.upsample_nearest(*x, factor)
    }
}
