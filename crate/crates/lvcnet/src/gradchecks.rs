//! Named gradient-check composites shared by the CLI and the acceptance
//! suite. All run in f64 with central differences (epsilon 1e-5) and
//! report the max relative error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{grad_check, Tape, Var};
use crate::conv::Padding;
use crate::engine::{Engine, TapeEngine};
use crate::error::{Error, Result};
use crate::lvc::LvcLayout;
use crate::model::{gaussian_noise, GeneratorConfig, LvcNetGenerator};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::training::{multires_stft_loss_tape, Discriminator, DiscriminatorConfig, StftLossConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Linear,
    Conv1d,
    Lvc,
    Predictor,
    GeneratorTiny,
    Discriminator,
    StftLoss,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::Linear,
        Component::Conv1d,
        Component::Lvc,
        Component::Predictor,
        Component::GeneratorTiny,
        Component::Discriminator,
        Component::StftLoss,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Component::Linear => "linear",
            Component::Conv1d => "conv1d",
            Component::Lvc => "lvc",
            Component::Predictor => "predictor",
            Component::GeneratorTiny => "generator-tiny",
            Component::Discriminator => "discriminator",
            Component::StftLoss => "stft-loss",
        }
    }

    pub fn parse(s: &str) -> Result<Component> {
        Component::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::Format(format!("unknown gradcheck component `{s}`")))
    }

    /// Linear maps are exact up to rounding; everything else gets the
    /// finite-difference tolerance.
    pub fn threshold(&self) -> f64 {
        match self {
            Component::Linear => 1e-10,
            _ => 1e-4,
        }
    }
}

/// Max relative error of tape gradients w.r.t. *named store parameters*
/// against central differences. The builder must rebuild the forward pass
/// from the store it is handed.
pub fn grad_check_params<B>(
    build: &B,
    store: &ParamStore<f64>,
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    B: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<(Var, Vec<(String, Var)>)>,
{
    let mut tape = Tape::new();
    let (loss, leaves) = build(&mut tape, store)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<(String, Tensor<f64>)> = leaves
        .iter()
        .map(|(n, v)| {
            let g = grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| panic!("no gradient for {n}"));
            (n.clone(), g)
        })
        .collect();

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let (l, _) = build(&mut t, s)?;
        Ok(t.value(l).item())
    };

    let eps = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut work = store.clone();
    for (name, g) in &analytic {
        let n = g.len();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            let mut set = std::collections::BTreeSet::new();
            while set.len() < max_coords {
                set.insert(rng.random_range(0..n));
            }
            set.into_iter().collect()
        };
        for c in coords {
            let orig = work.get(name)?.data[c];
            work.get_mut(name)?.data[c] = orig + eps;
            let fp = eval(&work)?;
            work.get_mut(name)?.data[c] = orig - eps;
            let fm = eval(&work)?;
            work.get_mut(name)?.data[c] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = g.data()[c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

fn tiny_generator() -> (LvcNetGenerator, ParamStore<f64>) {
    let cfg = GeneratorConfig {
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
    };
    let gen = LvcNetGenerator::new(cfg);
    let store = gen.init_params::<f64>(11);
    (gen, store)
}

/// Run one named gradient check and return its max relative error.
pub fn run_component(c: Component) -> Result<f64> {
    match c {
        Component::Linear => {
            let x = gaussian_noise::<f64>(1, 2, 6, 1).map(|v| v * 0.5);
            grad_check(
                &|tape, vars| {
                    let y = tape.affine(vars[0], 0.7, 0.2);
                    Ok(tape.sum_all(y))
                },
                &[x],
            )
        }
        Component::Conv1d => {
            let x = gaussian_noise::<f64>(2, 3, 12, 2);
            let v = gaussian_noise::<f64>(4, 3, 3, 3);
            let g = gaussian_noise::<f64>(1, 1, 4, 4).map(|z| z.abs() + 0.5);
            let b = gaussian_noise::<f64>(1, 1, 4, 5);
            grad_check(
                &|tape, vars| {
                    let y = tape.conv(vars[0], vars[1], vars[2], vars[3], 2, Padding::Same)?;
                    let s = tape.square(y);
                    Ok(tape.sum_all(s))
                },
                &[x, v, g, b],
            )
        }
        Component::Lvc => {
            let lay = LvcLayout {
                out_ch: 2,
                in_ch: 3,
                kernel: 3,
            };
            let (frames, hop, dil) = (4, 5, 2);
            let x = gaussian_noise::<f64>(1, 3, frames * hop, 6);
            let kern = gaussian_noise::<f64>(1, lay.block_width(), frames, 7);
            grad_check(
                &|tape, vars| {
                    let y = tape.lvc(vars[0], vars[1], lay, dil, hop)?;
                    let s = tape.square(y);
                    Ok(tape.sum_all(s))
                },
                &[x, kern],
            )
        }
        Component::Predictor => {
            let (gen, store) = tiny_generator();
            let kp = gen.cfg.predictor_config();
            let h = gaussian_noise::<f64>(1, gen.cfg.cond_channels, 9, 8);
            grad_check_params(
                &|tape, s| {
                    let mut eng = TapeEngine::new(tape, s);
                    let hv = eng.constant(h.clone());
                    let block = kp.forward(&mut eng, &hv, "block0.kp")?;
                    let leaves = eng.leaves().map(|(n, v)| (n.clone(), v)).collect();
                    let sq = tape.square(block);
                    Ok((tape.sum_all(sq), leaves))
                },
                &store,
                40,
                9,
            )
        }
        Component::GeneratorTiny => {
            let (gen, store) = tiny_generator();
            // 1x1x512 noise: 128 usable frames of hop 4.
            let mel = gaussian_noise::<f64>(1, gen.cfg.cond_channels, 132, 10);
            let noise = gaussian_noise::<f64>(1, 1, 512, 11);
            grad_check_params(
                &|tape, s| {
                    let mut eng = TapeEngine::new(tape, s);
                    let nv = eng.constant(noise.clone());
                    let mv = eng.constant(mel.clone());
                    let y = gen.forward(&mut eng, &nv, &mv)?;
                    let leaves = eng.leaves().map(|(n, v)| (n.clone(), v)).collect();
                    let sq = tape.square(y);
                    Ok((tape.sum_all(sq), leaves))
                },
                &store,
                12,
                12,
            )
        }
        Component::Discriminator => {
            let d = Discriminator::new(DiscriminatorConfig {
                layers: 4,
                kernel_size: 3,
                channels: 3,
                leaky_alpha: 0.2,
            });
            let store = d.init_params::<f64>(13);
            // Seed chosen so no leaky-ReLU pre-activation sits within the
            // finite-difference epsilon of its kink.
            let x = gaussian_noise::<f64>(1, 1, 40, 15);
            grad_check_params(
                &|tape, s| {
                    let mut eng = TapeEngine::new(tape, s);
                    let xv = eng.constant(x.clone());
                    let scores = d.forward(&mut eng, &xv)?;
                    let leaves = eng.leaves().map(|(n, v)| (n.clone(), v)).collect();
                    let sq = tape.square(scores);
                    Ok((tape.mean_all(sq), leaves))
                },
                &store,
                40,
                15,
            )
        }
        Component::StftLoss => {
            let y = gaussian_noise::<f64>(1, 1, 200, 16).map(|v| v * 0.5);
            let y_hat = gaussian_noise::<f64>(1, 1, 200, 17).map(|v| v * 0.5);
            let cfg = StftLossConfig {
                resolutions: vec![(64, 16, 48), (32, 8, 32)],
            };
            // Both terms checked independently; report the worse one.
            let err_sc = grad_check(
                &|tape, vars| {
                    let (sc, _) = multires_stft_loss_tape(tape, vars[0], &y, &cfg)?;
                    Ok(sc)
                },
                std::slice::from_ref(&y_hat),
            )?;
            let err_mag = grad_check(
                &|tape, vars| {
                    let (_, mag) = multires_stft_loss_tape(tape, vars[0], &y, &cfg)?;
                    Ok(mag)
                },
                &[y_hat],
            )?;
            Ok(err_sc.max(err_mag))
        }
    }
}
