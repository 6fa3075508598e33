//! The LVC generator: entry 1x1 conv, stacked LVC blocks with one kernel
//! predictor each, block-level residuals (removed on the first block),
//! and a tanh-squashed exit 1x1 conv.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{gaussian_noise, GeneratorConfig};
use crate::engine::{ConvSpec, DirectEngine, Engine};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct LvcNetGenerator {
    pub cfg: GeneratorConfig,
}

impl LvcNetGenerator {
    pub fn new(cfg: GeneratorConfig) -> Self {
        LvcNetGenerator { cfg }
    }

    /// Fresh parameter store; naming is fixed and is the checkpoint order.
    pub fn init_params<F: Real>(&self, seed: u64) -> ParamStore<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = self.cfg.residual_channels;
        store.init_conv("entry", c, 1, 1, &mut rng, 1.0);
        let kp = self.cfg.predictor_config();
        for i in 0..self.cfg.blocks {
            kp.init_params(&mut store, &format!("block{i}.kp"), &mut rng);
        }
        store.init_conv("exit", 1, c, 1, &mut rng, 1.0);
        store
    }

    /// Noise samples required for a conditioning sequence of `mel_frames`.
    pub fn noise_len(&self, mel_frames: usize) -> Result<usize> {
        let usable = self
            .cfg
            .predictor_config()
            .usable_frames(mel_frames)?;
        Ok(usable * self.cfg.hop)
    }

    /// Map 1-channel noise plus mel conditioning to a 1-channel waveform.
    ///
    /// Alignment contract: `noise.time == (mel frames - trim) * hop` where
    /// `trim` is the predictor's Valid entry loss (4 frames by default).
    pub fn forward<F: Real, E: Engine<F>>(
        &self,
        eng: &mut E,
        noise: &E::Val,
        mel: &E::Val,
    ) -> Result<E::Val> {
        let cfg = &self.cfg;
        let (_, noise_ch, noise_t) = eng.shape(noise);
        let (_, mel_ch, mel_frames) = eng.shape(mel);
        if noise_ch != 1 {
            return Err(Error::ChannelMismatch {
                input: noise_ch,
                expected: 1,
            });
        }
        if mel_ch != cfg.cond_channels {
            return Err(Error::ChannelMismatch {
                input: mel_ch,
                expected: cfg.cond_channels,
            });
        }
        let kp = cfg.predictor_config();
        let usable = kp.usable_frames(mel_frames)?;
        if noise_t != usable * cfg.hop {
            return Err(Error::Alignment {
                wave: noise_t,
                frames: mel_frames,
                hop: cfg.hop,
            });
        }

        let c = cfg.residual_channels;
        let mut x = eng.conv(noise, "entry", ConvSpec::pointwise(c, 1))?;
        for i in 0..cfg.blocks {
            x = self.block_forward(eng, &x, mel, i)?;
        }
        let y = eng.conv(&x, "exit", ConvSpec::pointwise(1, c))?;
        eng.act(&y, crate::conv::Activation::Tanh)
    }

    /// One LVC block: its kernel predictor feeds all layers via channel
    /// slicing; dilations run `base^0 .. base^(L-1)`. Blocks past the
    /// first wrap the stack in a residual connection (the first keeps
    /// only the feed-forward path unless configured otherwise).
    pub fn block_forward<F: Real, E: Engine<F>>(
        &self,
        eng: &mut E,
        x: &E::Val,
        mel: &E::Val,
        block_idx: usize,
    ) -> Result<E::Val> {
        let cfg = &self.cfg;
        let layout = cfg.layer_layout();
        let kp = cfg.predictor_config();
        let pred = kp.forward(eng, mel, &format!("block{block_idx}.kp"))?;
        let w = layout.block_width();
        let mut h = x.clone();
        for j in 0..cfg.layers_per_block {
            let kb = eng.slice_channels(&pred, j * w, (j + 1) * w)?;
            h = eng.lvc(&h, &kb, layout, cfg.dilation(j), cfg.hop)?;
        }
        if block_idx > 0 || cfg.first_block_residual {
            h = eng.add(&h, x)?;
        }
        Ok(h)
    }

    /// Inference entry point: seeded noise, direct evaluation, waveform in
    /// [-1, 1]. Deterministic per (params, mel, seed).
    pub fn synthesize<F: Real>(
        &self,
        store: &ParamStore<F>,
        mel: &Tensor<F>,
        seed: u64,
    ) -> Result<Tensor<F>> {
        let noise = gaussian_noise(1, 1, self.noise_len(mel.time())?, seed);
        let mut eng = DirectEngine::new(store);
        self.forward(&mut eng, &noise, mel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::engine::TapeEngine;
    use crate::tensor::max_abs_diff;

    fn tiny_cfg() -> GeneratorConfig {
        GeneratorConfig {
            blocks: 2,
            layers_per_block: 3,
            residual_channels: 2,
            kernel_size: 3,
            dilation_base: 2,
            cond_channels: 5,
            hop: 4,
            first_block_residual: false,
            kp_hidden: 6,
            kp_expand: 7,
            kp_residual_layers: 2,
            kp_entry_kernel: 5,
            leaky_alpha: 0.1,
        }
    }

    fn tiny_mel(frames: usize, seed: u64) -> Tensor<f64> {
        gaussian_noise(1, 5, frames, seed)
    }

    #[test]
    fn output_length_and_range() {
        let gen = LvcNetGenerator::new(tiny_cfg());
        let store = gen.init_params::<f64>(1);
        let mel = tiny_mel(12, 2);
        let wave = gen.synthesize(&store, &mel, 3).unwrap();
        assert_eq!(wave.shape(), (1, 1, (12 - 4) * 4));
        assert!(wave.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn alignment_violation_is_rejected() {
        let gen = LvcNetGenerator::new(tiny_cfg());
        let store = gen.init_params::<f64>(1);
        let mel = tiny_mel(12, 2);
        let noise = gaussian_noise::<f64>(1, 1, 13, 3);
        let mut eng = DirectEngine::new(&store);
        assert!(matches!(
            gen.forward(&mut eng, &noise, &mel),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let gen = LvcNetGenerator::new(tiny_cfg());
        let store = gen.init_params::<f64>(4);
        let mel = tiny_mel(10, 5);
        let a = gen.synthesize(&store, &mel, 6).unwrap();
        let b = gen.synthesize(&store, &mel, 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn direct_and_tape_paths_agree_bitwise() {
        let gen = LvcNetGenerator::new(tiny_cfg());
        let store = gen.init_params::<f64>(7);
        let mel = tiny_mel(11, 8);
        let noise = gaussian_noise::<f64>(1, 1, (11 - 4) * 4, 9);

        let mut direct = DirectEngine::new(&store);
        let d = gen.forward(&mut direct, &noise, &mel).unwrap();

        let mut tape = Tape::new();
        let mut te = TapeEngine::new(&mut tape, &store);
        let nv = te.constant(noise);
        let mv = te.constant(mel);
        let tv = gen.forward(&mut te, &nv, &mv).unwrap();
        assert_eq!(max_abs_diff(&d, tape.value(tv)), 0.0);
    }

    #[test]
    fn zeroed_block_is_identity_or_zero_by_index() {
        let gen = LvcNetGenerator::new(tiny_cfg());
        let mut store = gen.init_params::<f64>(2);
        store.zero_all();
        let mel = tiny_mel(12, 3);
        let x = gaussian_noise::<f64>(1, 2, (12 - 4) * 4, 4);
        let mut eng = DirectEngine::new(&store);
        // Zeroed parameters make F(x) == 0, so a residual block is the
        // identity while the first block kills the signal.
        let y1 = gen.block_forward(&mut eng, &x, &mel, 1).unwrap();
        assert_eq!(y1, x);
        let y0 = gen.block_forward(&mut eng, &x, &mel, 0).unwrap();
        assert!(y0.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_block_locality_radius_is_dilation_sum() {
        // Dilations {1, 2, 4} at k=3: perturbing one input sample may move
        // outputs up to 7 samples away and no further.
        let mut cfg = tiny_cfg();
        cfg.blocks = 1;
        cfg.layers_per_block = 3;
        let gen = LvcNetGenerator::new(cfg.clone());
        let store = gen.init_params::<f64>(5);
        let mel = tiny_mel(20, 6);
        let x = gaussian_noise::<f64>(1, 2, (20 - 4) * 4, 7);
        let mut eng = DirectEngine::new(&store);
        let base = gen.block_forward(&mut eng, &x, &mel, 0).unwrap();
        let s = x.time() / 2;
        let mut xp = x.clone();
        xp.set(0, 0, s, xp.at(0, 0, s) + 0.5);
        let bumped = gen.block_forward(&mut eng, &xp, &mel, 0).unwrap();
        let mut max_reach = 0usize;
        for c in 0..2 {
            for t in 0..x.time() {
                if (base.at(0, c, t) - bumped.at(0, c, t)).abs() > 0.0 {
                    max_reach = max_reach.max(t.abs_diff(s));
                }
            }
        }
        assert_eq!(max_reach, 7);
    }

    #[test]
    fn zeroed_blocks_behave_per_residual_rule() {
        // With all parameters zeroed the first (residual-free) block kills
        // the signal, so the whole generator emits tanh(0) == 0.
        let gen = LvcNetGenerator::new(tiny_cfg());
        let mut store = gen.init_params::<f64>(1);
        store.zero_all();
        let mel = tiny_mel(10, 2);
        let wave = gen.synthesize(&store, &mel, 3).unwrap();
        assert!(wave.data().iter().all(|&v| v == 0.0));
    }
}
