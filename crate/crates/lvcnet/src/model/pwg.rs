//! Parallel-WaveGAN style baseline generator: a non-causal WaveNet stack
//! of 30 gated layers in 3 dilation cycles, per-layer 1x1 conditioning
//! convs, residual and skip paths at the configured width, and a two-conv
//! post-net (leaky rectification between, no output squashing).
//!
//! Conditioning must be upsampled to sample rate first; the parameter-free
//! nearest-neighbor upsampler below matches the hop.

use super::{gaussian_noise, ParamBreakdown};
use crate::conv::Activation;
use crate::engine::{ConvSpec, DirectEngine, Engine};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PwgConfig {
    pub layers: usize,
    /// Dilations repeat `1, 2, 4, ...` every `dilation_cycle` layers.
    pub dilation_cycle: usize,
    pub residual_channels: usize,
    pub kernel_size: usize,
    pub cond_channels: usize,
    pub hop: usize,
    pub leaky_alpha: f64,
}

impl Default for PwgConfig {
    fn default() -> Self {
        PwgConfig {
            layers: 30,
            dilation_cycle: 10,
            residual_channels: 64,
            kernel_size: 3,
            cond_channels: 80,
            hop: 256,
            leaky_alpha: 0.2,
        }
    }
}

impl PwgConfig {
    /// Standard variant with the given residual width (32, 48 or 64).
    pub fn with_width(width: usize) -> Self {
        PwgConfig {
            residual_channels: width,
            ..Default::default()
        }
    }

    pub fn dilation(&self, layer: usize) -> usize {
        2usize.pow((layer % self.dilation_cycle) as u32)
    }

    fn gate_channels(&self) -> usize {
        2 * self.residual_channels
    }
}

#[derive(Debug, Clone)]
pub struct PwgGenerator {
    pub cfg: PwgConfig,
}

impl PwgGenerator {
    pub fn new(cfg: PwgConfig) -> Self {
        PwgGenerator { cfg }
    }

    pub fn init_params<F: Real>(&self, seed: u64) -> ParamStore<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = self.cfg.residual_channels;
        let gc = self.cfg.gate_channels();
        store.init_conv("first", c, 1, 1, &mut rng, 1.0);
        for i in 0..self.cfg.layers {
            store.init_conv(
                &format!("layer{i}.conv"),
                gc,
                c,
                self.cfg.kernel_size,
                &mut rng,
                1.0,
            );
            store.init_conv(
                &format!("layer{i}.cond"),
                gc,
                self.cfg.cond_channels,
                1,
                &mut rng,
                1.0,
            );
            store.init_conv(&format!("layer{i}.res"), c, c, 1, &mut rng, 1.0);
            store.init_conv(&format!("layer{i}.skip"), c, c, 1, &mut rng, 1.0);
        }
        store.init_conv("post1", c, c, 1, &mut rng, 1.0);
        store.init_conv("post2", 1, c, 1, &mut rng, 1.0);
        store
    }

    /// Forward over noise `(B, 1, T)` and upsampled conditioning
    /// `(B, cond, T)`; output keeps the input length.
    pub fn forward<F: Real, E: Engine<F>>(
        &self,
        eng: &mut E,
        noise: &E::Val,
        mel_upsampled: &E::Val,
    ) -> Result<E::Val> {
        let cfg = &self.cfg;
        let (_, _, noise_t) = eng.shape(noise);
        let (_, cond_ch, cond_t) = eng.shape(mel_upsampled);
        if cond_t != noise_t {
            return Err(Error::ShapeMismatch {
                context: "pwg conditioning",
                expected: format!("time {noise_t}"),
                got: format!("time {cond_t}"),
            });
        }
        if cond_ch != cfg.cond_channels {
            return Err(Error::ChannelMismatch {
                input: cond_ch,
                expected: cfg.cond_channels,
            });
        }
        let c = cfg.residual_channels;
        let gc = cfg.gate_channels();
        let leaky = Activation::LeakyRelu(cfg.leaky_alpha);

        let mut x = eng.conv(noise, "first", ConvSpec::pointwise(c, 1))?;
        let mut skip_sum: Option<E::Val> = None;
        for i in 0..cfg.layers {
            let z = eng.conv(
                &x,
                &format!("layer{i}.conv"),
                ConvSpec::same(gc, c, cfg.kernel_size, cfg.dilation(i)),
            )?;
            let cz = eng.conv(
                mel_upsampled,
                &format!("layer{i}.cond"),
                ConvSpec::pointwise(gc, cfg.cond_channels),
            )?;
            let z = eng.add(&z, &cz)?;
            let zf = eng.slice_channels(&z, 0, c)?;
            let zg = eng.slice_channels(&z, c, gc)?;
            let tf = eng.act(&zf, Activation::Tanh)?;
            let sg = eng.act(&zg, Activation::Sigmoid)?;
            let h = eng.mul(&tf, &sg)?;
            let res = eng.conv(&h, &format!("layer{i}.res"), ConvSpec::pointwise(c, c))?;
            x = eng.add(&x, &res)?;
            let s = eng.conv(&h, &format!("layer{i}.skip"), ConvSpec::pointwise(c, c))?;
            skip_sum = Some(match skip_sum {
                None => s,
                Some(acc) => eng.add(&acc, &s)?,
            });
        }
        let skips = skip_sum.expect("at least one layer");
        let y = eng.act(&skips, leaky)?;
        let y = eng.conv(&y, "post1", ConvSpec::pointwise(c, c))?;
        let y = eng.act(&y, leaky)?;
        eng.conv(&y, "post2", ConvSpec::pointwise(1, c))
    }

    /// Synthesis from mel frames: nearest-neighbor upsample to sample rate,
    /// seeded noise, direct evaluation.
    pub fn synthesize<F: Real>(
        &self,
        store: &ParamStore<F>,
        mel: &Tensor<F>,
        seed: u64,
    ) -> Result<Tensor<F>> {
        let mut eng = DirectEngine::new(store);
        let mel_up = eng.upsample_nearest(mel, self.cfg.hop)?;
        let noise = gaussian_noise(1, 1, mel_up.time(), seed);
        self.forward(&mut eng, &noise, &mel_up)
    }
}

/// Closed-form parameter breakdown of the baseline; equals store
/// enumeration.
pub fn pwg_param_breakdown(cfg: &PwgConfig) -> ParamBreakdown {
    let c = cfg.residual_channels;
    let gc = 2 * c;
    let scal = |out: usize, inc: usize, k: usize| out * inc * k + 2 * out;
    let parts = vec![
        ("first".to_string(), scal(c, 1, 1)),
        (
            "layers.conv".to_string(),
            cfg.layers * scal(gc, c, cfg.kernel_size),
        ),
        (
            "layers.cond".to_string(),
            cfg.layers * scal(gc, cfg.cond_channels, 1),
        ),
        ("layers.res".to_string(), cfg.layers * scal(c, c, 1)),
        ("layers.skip".to_string(), cfg.layers * scal(c, c, 1)),
        ("post".to_string(), scal(c, c, 1) + scal(1, c, 1)),
    ];
    ParamBreakdown { parts }
}

pub fn pwg_count_params(cfg: &PwgConfig) -> usize {
    pwg_param_breakdown(cfg).total()
}
