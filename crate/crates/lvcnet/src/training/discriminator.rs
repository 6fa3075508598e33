//! Parallel-WaveGAN style discriminator: ten weight-normalized dilated
//! convolutions at a fixed width with linearly increasing dilations and
//! leaky rectification, mapping a waveform to per-sample scores of the
//! same length.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conv::Activation;
use crate::engine::{ConvSpec, DirectEngine, Engine};
use crate::error::Result;
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub layers: usize,
    pub kernel_size: usize,
    pub channels: usize,
    pub leaky_alpha: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            layers: 10,
            kernel_size: 3,
            channels: 64,
            leaky_alpha: 0.2,
        }
    }
}

impl DiscriminatorConfig {
    /// Dilation schedule `1, 1, 2, 3, ...` with the output layer back at 1.
    pub fn dilation(&self, layer: usize) -> usize {
        if layer + 1 == self.layers {
            1
        } else {
            layer.max(1)
        }
    }

    fn in_ch(&self, layer: usize) -> usize {
        if layer == 0 {
            1
        } else {
            self.channels
        }
    }

    fn out_ch(&self, layer: usize) -> usize {
        if layer + 1 == self.layers {
            1
        } else {
            self.channels
        }
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub cfg: DiscriminatorConfig,
}

impl Discriminator {
    pub fn new(cfg: DiscriminatorConfig) -> Self {
        Discriminator { cfg }
    }

    pub fn init_params<F: Real>(&self, seed: u64) -> ParamStore<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for i in 0..self.cfg.layers {
            store.init_conv(
                &format!("layer{i}"),
                self.cfg.out_ch(i),
                self.cfg.in_ch(i),
                self.cfg.kernel_size,
                &mut rng,
                1.0,
            );
        }
        store
    }

    /// 1-channel waveform to 1-channel per-sample scores, length preserved.
    pub fn forward<F: Real, E: Engine<F>>(&self, eng: &mut E, x: &E::Val) -> Result<E::Val> {
        let leaky = Activation::LeakyRelu(self.cfg.leaky_alpha);
        let mut h = x.clone();
        for i in 0..self.cfg.layers {
            h = eng.conv(
                &h,
                &format!("layer{i}"),
                ConvSpec::same(
                    self.cfg.out_ch(i),
                    self.cfg.in_ch(i),
                    self.cfg.kernel_size,
                    self.cfg.dilation(i),
                ),
            )?;
            if i + 1 < self.cfg.layers {
                h = eng.act(&h, leaky)?;
            }
        }
        Ok(h)
    }

    /// Direct scoring without a tape.
    pub fn score<F: Real>(&self, store: &ParamStore<F>, x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut eng = DirectEngine::new(store);
        let xv = x.clone();
        self.forward(&mut eng, &xv)
    }
}
