//! Named parameter tensors and the binary checkpoint container.
//!
//! Weight-normalized convolutions are stored as three entries per layer:
//! `<base>.v` (direction, out x in x k), `<base>.g` (magnitude, out) and
//! `<base>.b` (bias, out). Iteration order is insertion order and is the
//! order entries are written to checkpoints.
//!
//! Checkpoint container (all integers little-endian u32):
//! magic, count, then per entry: name length, name bytes (UTF-8), rank,
//! dims, and the payload as little-endian floats. Magic `LVC1` carries an
//! f32 payload (inference checkpoints); magic `LVT8` carries f64 (training
//! state). Round-trips are byte-exact.

use std::io::{Read, Write};

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub dims: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Param<F> {
    pub fn new(dims: Vec<usize>, data: Vec<F>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len());
        Param { dims, data }
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Param {
            dims,
            data: vec![F::zero(); n],
        }
    }

    /// Canonical rank-3 tensor view: `[a]` -> (1,1,a), `[a,b]` -> (1,a,b),
    /// `[a,b,c]` -> (a,b,c).
    pub fn as_tensor(&self) -> Tensor<F> {
        let (b, c, t) = match self.dims.as_slice() {
            [a] => (1, 1, *a),
            [a, b] => (1, *a, *b),
            [a, b, c] => (*a, *b, *c),
            d => panic!("unsupported param rank {}", d.len()),
        };
        Tensor::from_vec(self.data.clone(), b, c, t).expect("param dims")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<F> {
    map: IndexMap<String, Param<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            map: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, p: Param<F>) {
        let name = name.into();
        assert!(
            self.map.insert(name.clone(), p).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn get(&self, name: &str) -> Result<&Param<F>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<F>> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<F>)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total scalar count across all entries.
    pub fn total_scalars(&self) -> usize {
        self.map.values().map(|p| p.data.len()).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        let mut out = ParamStore::new();
        for (name, p) in self.iter() {
            out.insert(
                name.clone(),
                Param::new(
                    p.dims.clone(),
                    p.data.iter().map(|&x| G::real_from(x.as_f64())).collect(),
                ),
            );
        }
        out
    }

    /// Register a weight-normalized convolution `<base>.{v,g,b}`.
    /// Directions are drawn N(0, gain^2 / (in*k)); `g` is initialized to the
    /// row norm so the initial effective weight equals `v`; biases start at
    /// zero. `g_scale` shrinks the effective weight after that (used for the
    /// kernel-predictor output head).
    pub fn init_conv(
        &mut self,
        base: &str,
        out_ch: usize,
        in_ch: usize,
        kernel: usize,
        rng: &mut impl Rng,
        g_scale: f64,
    ) {
        let fan = (in_ch * kernel) as f64;
        let std = 1.0 / fan.sqrt();
        let v: Vec<F> = (0..out_ch * in_ch * kernel)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                F::real_from(z * std)
            })
            .collect();
        let g = crate::conv::row_norms(&v, out_ch, in_ch * kernel)
            .into_iter()
            .map(|n| n * F::real_from(g_scale))
            .collect();
        self.insert(format!("{base}.v"), Param::new(vec![out_ch, in_ch, kernel], v));
        self.insert(format!("{base}.g"), Param::new(vec![out_ch], g));
        self.insert(
            format!("{base}.b"),
            Param::new(vec![out_ch], vec![F::zero(); out_ch]),
        );
    }

    /// Set every entry to zero (tests use this to probe identity paths).
    pub fn zero_all(&mut self) {
        for (_, p) in self.map.iter_mut() {
            p.data.fill(F::zero());
        }
    }
}

const MAGIC_F32: &[u8; 4] = b"LVC1";
const MAGIC_F64: &[u8; 4] = b"LVT8";

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Write an f32 checkpoint (magic `LVC1`).
pub fn save_checkpoint(store: &ParamStore<f32>, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC_F32)?;
    write_u32(w, store.len() as u32)?;
    for (name, p) in store.iter() {
        write_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        write_u32(w, p.dims.len() as u32)?;
        for &d in &p.dims {
            write_u32(w, d as u32)?;
        }
        for &x in &p.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read an f32 checkpoint (magic `LVC1`).
pub fn load_checkpoint(r: &mut impl Read) -> Result<ParamStore<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC_F32 {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?}, expected LVC1",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u32(r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let (name, dims, n) = read_entry_header(r)?;
        let mut data = vec![0f32; n];
        let mut b = [0u8; 4];
        for x in data.iter_mut() {
            r.read_exact(&mut b)?;
            *x = f32::from_le_bytes(b);
        }
        store.insert(name, Param::new(dims, data));
    }
    Ok(store)
}

/// Write an f64 state container (magic `LVT8`), same grammar as `LVC1`.
pub fn save_state_f64(store: &ParamStore<f64>, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC_F64)?;
    write_u32(w, store.len() as u32)?;
    for (name, p) in store.iter() {
        write_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        write_u32(w, p.dims.len() as u32)?;
        for &d in &p.dims {
            write_u32(w, d as u32)?;
        }
        for &x in &p.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read an f64 state container (magic `LVT8`).
pub fn load_state_f64(r: &mut impl Read) -> Result<ParamStore<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC_F64 {
        return Err(Error::Format(format!(
            "bad state magic {:?}, expected LVT8",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u32(r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let (name, dims, n) = read_entry_header(r)?;
        let mut data = vec![0f64; n];
        let mut b = [0u8; 8];
        for x in data.iter_mut() {
            r.read_exact(&mut b)?;
            *x = f64::from_le_bytes(b);
        }
        store.insert(name, Param::new(dims, data));
    }
    Ok(store)
}

fn read_entry_header(r: &mut impl Read) -> Result<(String, Vec<usize>, usize)> {
    let name_len = read_u32(r)? as usize;
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| Error::Format("non-UTF8 tensor name".into()))?;
    let rank = read_u32(r)? as usize;
    if rank > 4 {
        return Err(Error::Format(format!("tensor `{name}` has rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(read_u32(r)? as usize);
    }
    Ok((name, dims.clone(), dims.iter().product()))
}

/// Copy `loaded` into `template`, checking every named tensor's dims.
/// The first offending tensor aborts with a mismatch error.
pub fn load_into<F: Real>(template: &mut ParamStore<F>, loaded: &ParamStore<f32>) -> Result<()> {
    for (name, want) in template.map.iter() {
        let got = loaded.get(name)?;
        if got.dims != want.dims {
            return Err(Error::CheckpointMismatch {
                name: name.clone(),
                expected: format!("{:?}", want.dims),
                got: format!("{:?}", got.dims),
            });
        }
    }
    for (name, got) in loaded.iter() {
        if !template.contains(name) {
            return Err(Error::CheckpointMismatch {
                name: name.clone(),
                expected: "absent".into(),
                got: format!("{:?}", got.dims),
            });
        }
    }
    for (name, src) in loaded.iter() {
        let dst = template.map.get_mut(name).expect("checked above");
        dst.data = src.data.iter().map(|&x| F::real_from(x as f64)).collect();
    }
    Ok(())
}
