//! Desk-scale adversarial training.
//!
//! Least-squares GAN with the multi-resolution STFT auxiliary loss. The
//! discriminator joins after a warm-up step count. Each step derives its
//! randomness from `(seed, step)` via a dedicated ChaCha stream, so a
//! resumed run reproduces the loss trajectory bit-wise (in f64).

mod adam;
mod discriminator;
mod loss;

pub use adam::{Adam, AdamConfig};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use loss::{
    d_loss_tape, g_adv_tape, gan_losses, multires_stft_loss, multires_stft_loss_tape,
    StftLossConfig, LOG_MAG_FLOOR, SC_DENOM_FLOOR,
};

use std::io::Write;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{MelSpectrogram, Waveform, SAMPLE_RATE};
use crate::autograd::{Tape, Var};
use crate::engine::{Engine, TapeEngine};
use crate::error::{Error, Result};
use crate::model::{GeneratorConfig, LvcNetGenerator};
use crate::params::{Param, ParamStore};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub stft_loss: StftLossConfig,
    /// Weight of the adversarial term in the generator objective.
    pub lambda_adv: f64,
    /// Steps before the discriminator and adversarial term activate.
    pub warmup_steps: u64,
    pub lr_gen: f64,
    pub lr_disc: f64,
    /// Mel frames per crop; the waveform crop is `(crop_frames - trim) * hop`.
    pub crop_frames: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            stft_loss: StftLossConfig::default(),
            lambda_adv: 4.0,
            warmup_steps: 100,
            lr_gen: 1e-4,
            lr_disc: 5e-5,
            crop_frames: 12,
        }
    }
}

/// Per-step loss record. Adversarial terms are 0 before warm-up ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub stft_sc: f64,
    pub stft_mag: f64,
    pub g_adv: f64,
    pub d_loss: f64,
}

impl StepLosses {
    pub fn combined_stft(&self) -> f64 {
        self.stft_sc + self.stft_mag
    }
}

/// Everything needed to stop and resume a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<F> {
    pub gen: ParamStore<F>,
    pub disc: ParamStore<F>,
    pub gen_opt: Adam<F>,
    pub disc_opt: Adam<F>,
    pub step: u64,
    pub seed: u64,
}

impl<F: Real> TrainState<F> {
    pub fn new(cfg: &TrainConfig, seed: u64) -> Self {
        let gen = LvcNetGenerator::new(cfg.generator.clone()).init_params(seed);
        let disc = Discriminator::new(cfg.discriminator.clone()).init_params(seed ^ 0x9e3779b9);
        let gen_opt = Adam::new(&gen, AdamConfig::with_lr(cfg.lr_gen));
        let disc_opt = Adam::new(&disc, AdamConfig::with_lr(cfg.lr_disc));
        TrainState {
            gen,
            disc,
            gen_opt,
            disc_opt,
            step: 0,
            seed,
        }
    }
}

/// One training clip: waveform `(1, 1, n)` and conditioning `(1, mel, m)`.
#[derive(Debug, Clone)]
pub struct Clip<F> {
    pub wave: Tensor<F>,
    pub mel: Tensor<F>,
}

impl<F: Real> Clip<F> {
    pub fn from_pair(wave: &Waveform, mel: &MelSpectrogram) -> Self {
        let w = Tensor::from_vec(
            wave.samples.iter().map(|&s| F::real_from(s as f64)).collect(),
            1,
            1,
            wave.samples.len(),
        )
        .expect("wave shape");
        Clip {
            wave: w,
            mel: mel.to_tensor(),
        }
    }
}

pub struct Trainer<F: Real> {
    pub cfg: TrainConfig,
    pub state: TrainState<F>,
    generator: LvcNetGenerator,
    discriminator: Discriminator,
    clips: Vec<Clip<F>>,
}

impl<F: Real> Trainer<F> {
    pub fn new(cfg: TrainConfig, clips: Vec<Clip<F>>, seed: u64) -> Result<Self> {
        let state = TrainState::new(&cfg, seed);
        Trainer::from_state(cfg, clips, state)
    }

    pub fn from_state(cfg: TrainConfig, clips: Vec<Clip<F>>, state: TrainState<F>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::Format("training needs at least one clip".into()));
        }
        let trim = cfg.generator.frame_trim();
        if cfg.crop_frames <= trim {
            return Err(Error::Format(format!(
                "crop_frames {} must exceed the predictor trim {trim}",
                cfg.crop_frames
            )));
        }
        for (i, c) in clips.iter().enumerate() {
            if c.mel.time() < cfg.crop_frames {
                return Err(Error::CondTooShort {
                    frames: c.mel.time(),
                    needed: cfg.crop_frames,
                });
            }
            if c.mel.channels() != cfg.generator.cond_channels {
                return Err(Error::ChannelMismatch {
                    input: c.mel.channels(),
                    expected: cfg.generator.cond_channels,
                });
            }
            if max_start(c, &cfg).is_none() {
                return Err(Error::Format(format!("clip {i} too short for crops")));
            }
        }
        Ok(Trainer {
            generator: LvcNetGenerator::new(cfg.generator.clone()),
            discriminator: Discriminator::new(cfg.discriminator.clone()),
            cfg,
            state,
            clips,
        })
    }

    /// Advance one step. Draw order per step is fixed: clip index, crop
    /// start, then the noise samples.
    pub fn step(&mut self) -> Result<StepLosses> {
        let s = self.state.step + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.state.seed);
        rng.set_stream(s);

        let clip_idx = rng.random_range(0..self.clips.len());
        let clip = &self.clips[clip_idx];
        let hop = self.cfg.generator.hop;
        let trim = self.cfg.generator.frame_trim();
        let crop = self.cfg.crop_frames;
        let start = rng.random_range(0..=max_start(clip, &self.cfg).expect("validated"));

        let mut mel_win = Tensor::zeros(1, clip.mel.channels(), crop);
        for c in 0..clip.mel.channels() {
            mel_win
                .row_mut(0, c)
                .copy_from_slice(&clip.mel.row(0, c)[start..start + crop]);
        }
        let wave_len = (crop - trim) * hop;
        let wave_off = (start + trim / 2) * hop;
        let target = Tensor::from_vec(
            clip.wave.row(0, 0)[wave_off..wave_off + wave_len].to_vec(),
            1,
            1,
            wave_len,
        )?;
        let noise = Tensor::from_vec(
            (0..wave_len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    F::real_from(z)
                })
                .collect(),
            1,
            1,
            wave_len,
        )?;

        let adversarial = s > self.cfg.warmup_steps;

        // Generator step.
        let mut tape = Tape::new();
        let (y_hat, gen_leaves) = {
            let mut eng = TapeEngine::new(&mut tape, &self.state.gen);
            let nv = eng.constant(noise);
            let mv = eng.constant(mel_win);
            let y = self.generator.forward(&mut eng, &nv, &mv)?;
            let leaves: Vec<(String, Var)> =
                eng.leaves().map(|(n, v)| (n.clone(), v)).collect();
            (y, leaves)
        };
        let (sc, mag) = multires_stft_loss_tape(&mut tape, y_hat, &target, &self.cfg.stft_loss)?;
        let sc_val = tape.value(sc).item().as_f64();
        let mag_val = tape.value(mag).item().as_f64();
        check_finite(sc_val, s, "stft_sc")?;
        check_finite(mag_val, s, "stft_mag")?;
        let mut total = tape.add(sc, mag)?;
        let mut g_adv_val = 0.0;
        if adversarial {
            let scores = {
                let mut deng = TapeEngine::new(&mut tape, &self.state.disc);
                self.discriminator.forward(&mut deng, &y_hat)?
            };
            let g_adv = g_adv_tape(&mut tape, scores)?;
            g_adv_val = tape.value(g_adv).item().as_f64();
            check_finite(g_adv_val, s, "g_adv")?;
            let scaled = tape.affine(g_adv, self.cfg.lambda_adv, 0.0);
            total = tape.add(total, scaled)?;
        }
        let grads = tape.backward(total)?;
        let gmap = collect_gradients(&grads, &gen_leaves, &self.state.gen);
        let fake = tape.value(y_hat).clone();
        drop(tape);
        self.state.gen_opt.step(&mut self.state.gen, &gmap)?;

        // Discriminator step.
        let mut d_loss_val = 0.0;
        if adversarial {
            let mut dtape = Tape::new();
            let (sr, sf, disc_leaves) = {
                let mut deng = TapeEngine::new(&mut dtape, &self.state.disc);
                let rv = deng.constant(target.clone());
                let fv = deng.constant(fake);
                let sr = self.discriminator.forward(&mut deng, &rv)?;
                let sf = self.discriminator.forward(&mut deng, &fv)?;
                let leaves: Vec<(String, Var)> =
                    deng.leaves().map(|(n, v)| (n.clone(), v)).collect();
                (sr, sf, leaves)
            };
            let dl = d_loss_tape(&mut dtape, sr, sf)?;
            d_loss_val = dtape.value(dl).item().as_f64();
            check_finite(d_loss_val, s, "d_loss")?;
            let dgrads = dtape.backward(dl)?;
            let dmap = collect_gradients(&dgrads, &disc_leaves, &self.state.disc);
            drop(dtape);
            self.state.disc_opt.step(&mut self.state.disc, &dmap)?;
        }

        self.state.step = s;
        Ok(StepLosses {
            step: s,
            stft_sc: sc_val,
            stft_mag: mag_val,
            g_adv: g_adv_val,
            d_loss: d_loss_val,
        })
    }

    pub fn run(&mut self, steps: u64) -> Result<Vec<StepLosses>> {
        let mut curve = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            curve.push(self.step()?);
        }
        Ok(curve)
    }
}

fn max_start<F: Real>(clip: &Clip<F>, cfg: &TrainConfig) -> Option<usize> {
    let hop = cfg.generator.hop;
    let trim = cfg.generator.frame_trim();
    let by_mel = clip.mel.time().checked_sub(cfg.crop_frames)?;
    // The target window must stay inside the waveform.
    let by_wave = (clip.wave.time() / hop + trim / 2).checked_sub(cfg.crop_frames)?;
    Some(by_mel.min(by_wave))
}

fn check_finite(v: f64, step: u64, term: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NanLoss { step, term })
    }
}

/// Leaf adjoints keyed by parameter name. Every parameter of the store
/// must have been touched by the forward pass; a silent dead parameter is
/// a wiring bug.
fn collect_gradients<F: Real>(
    grads: &crate::autograd::Gradients<F>,
    leaves: &[(String, Var)],
    store: &ParamStore<F>,
) -> IndexMap<String, Tensor<F>> {
    let mut map = IndexMap::new();
    for (name, var) in leaves {
        let g = grads
            .get(*var)
            .unwrap_or_else(|| panic!("parameter {name} received no gradient"));
        map.insert(name.clone(), g.clone());
    }
    for name in store.names() {
        assert!(map.contains_key(name), "parameter {name} never used");
    }
    map
}

/// Desk-scale training entry point over decoded clips. Requires each clip
/// to be at least one second long.
pub fn train_toy(
    dataset: &[(Waveform, MelSpectrogram)],
    cfg: &TrainConfig,
    steps: u64,
    seed: u64,
) -> Result<(Vec<StepLosses>, TrainState<f64>)> {
    if dataset.is_empty() {
        return Err(Error::Format("empty dataset".into()));
    }
    for (w, _) in dataset {
        if w.samples.len() < SAMPLE_RATE as usize {
            return Err(Error::InputTooShort {
                len: w.samples.len(),
                needed: SAMPLE_RATE as usize,
            });
        }
    }
    let clips = dataset
        .iter()
        .map(|(w, m)| Clip::from_pair(w, m))
        .collect();
    let mut trainer = Trainer::<f64>::new(cfg.clone(), clips, seed)?;
    let curve = trainer.run(steps)?;
    Ok((curve, trainer.state))
}

/// Write the loss curve as CSV: `step,stft_sc,stft_mag,g_adv,d_loss`.
pub fn write_loss_csv(mut w: impl Write, curve: &[StepLosses]) -> Result<()> {
    writeln!(w, "step,stft_sc,stft_mag,g_adv,d_loss")?;
    for l in curve {
        writeln!(
            w,
            "{},{},{},{},{}",
            l.step, l.stft_sc, l.stft_mag, l.g_adv, l.d_loss
        )?;
    }
    Ok(())
}

const META_KEY: &str = "_meta";

/// Flatten a training state into one `LVT8` container.
pub fn save_train_state(state: &TrainState<f64>, w: &mut impl Write) -> Result<()> {
    let mut flat = ParamStore::<f64>::new();
    let seed_lo = (state.seed & 0xffff_ffff) as f64;
    let seed_hi = (state.seed >> 32) as f64;
    flat.insert(
        META_KEY,
        Param::new(
            vec![5],
            vec![
                state.step as f64,
                seed_lo,
                seed_hi,
                state.gen_opt.t as f64,
                state.disc_opt.t as f64,
            ],
        ),
    );
    let sections: [(&str, &ParamStore<f64>); 6] = [
        ("gen", &state.gen),
        ("disc", &state.disc),
        ("optg.m", &state.gen_opt.m),
        ("optg.v", &state.gen_opt.v),
        ("optd.m", &state.disc_opt.m),
        ("optd.v", &state.disc_opt.v),
    ];
    for (prefix, store) in sections {
        for (name, p) in store.iter() {
            flat.insert(format!("{prefix}.{name}"), p.clone());
        }
    }
    crate::params::save_state_f64(&flat, w)
}

/// Restore a training state saved by [`save_train_state`]; shapes are
/// checked against a fresh state for the same config.
pub fn load_train_state(r: &mut impl std::io::Read, cfg: &TrainConfig) -> Result<TrainState<f64>> {
    let flat = crate::params::load_state_f64(r)?;
    let meta = flat.get(META_KEY)?;
    if meta.data.len() != 5 {
        return Err(Error::Format("bad training meta entry".into()));
    }
    let step = meta.data[0] as u64;
    let seed = (meta.data[1] as u64) | ((meta.data[2] as u64) << 32);
    let mut state = TrainState::<f64>::new(cfg, seed);
    state.step = step;
    state.gen_opt.t = meta.data[3] as u64;
    state.disc_opt.t = meta.data[4] as u64;
    {
        let sections: [(&str, &mut ParamStore<f64>); 6] = [
            ("gen", &mut state.gen),
            ("disc", &mut state.disc),
            ("optg.m", &mut state.gen_opt.m),
            ("optg.v", &mut state.gen_opt.v),
            ("optd.m", &mut state.disc_opt.m),
            ("optd.v", &mut state.disc_opt.v),
        ];
        for (prefix, store) in sections {
            let names: Vec<String> = store.names().cloned().collect();
            for name in names {
                let key = format!("{prefix}.{name}");
                let src = flat.get(&key)?;
                let dst = store.get_mut(&name)?;
                if src.dims != dst.dims {
                    return Err(Error::CheckpointMismatch {
                        name: key,
                        expected: format!("{:?}", dst.dims),
                        got: format!("{:?}", src.dims),
                    });
                }
                dst.data.copy_from_slice(&src.data);
            }
        }
    }
    Ok(state)
}
