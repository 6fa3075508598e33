//! Waveform generators: the LVC-based generator, the Parallel-WaveGAN
//! style baseline, parameter accounting, and receptive-field arithmetic.

mod generator;
mod pwg;

pub use generator::LvcNetGenerator;
pub use pwg::{pwg_count_params, pwg_param_breakdown, PwgConfig, PwgGenerator};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::lvc::{KernelPredictorConfig, LvcLayout};
use crate::tensor::{Real, Tensor};

/// Hyperparameters of the LVC generator.
///
/// Layer `j` of every block runs at dilation `dilation_base^j`. The kernel
/// predictor is one per block, serving all of that block's layers through
/// channel slicing of a single output.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub blocks: usize,
    pub layers_per_block: usize,
    pub residual_channels: usize,
    pub kernel_size: usize,
    pub dilation_base: usize,
    pub cond_channels: usize,
    pub hop: usize,
    /// The first block keeps only its feed-forward path.
    pub first_block_residual: bool,
    pub kp_hidden: usize,
    pub kp_expand: usize,
    pub kp_residual_layers: usize,
    pub kp_entry_kernel: usize,
    pub leaky_alpha: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            blocks: 3,
            layers_per_block: 10,
            residual_channels: 8,
            kernel_size: 3,
            dilation_base: 2,
            cond_channels: 80,
            hop: 256,
            first_block_residual: false,
            kp_hidden: 64,
            kp_expand: 96,
            kp_residual_layers: 3,
            kp_entry_kernel: 5,
            leaky_alpha: 0.1,
        }
    }
}

impl GeneratorConfig {
    /// Standard variant with the given residual channel width (4, 6 or 8).
    pub fn with_width(width: usize) -> Self {
        GeneratorConfig {
            residual_channels: width,
            ..Default::default()
        }
    }

    pub fn dilation(&self, layer: usize) -> usize {
        self.dilation_base.pow(layer as u32)
    }

    pub fn layer_layout(&self) -> LvcLayout {
        LvcLayout {
            out_ch: self.residual_channels,
            in_ch: self.residual_channels,
            kernel: self.kernel_size,
        }
    }

    pub fn predictor_config(&self) -> KernelPredictorConfig {
        KernelPredictorConfig {
            cond_channels: self.cond_channels,
            hidden_channels: self.kp_hidden,
            residual_layers: self.kp_residual_layers,
            entry_kernel: self.kp_entry_kernel,
            expand_channels: self.kp_expand,
            leaky_alpha: self.leaky_alpha,
            targets: vec![self.layer_layout(); self.layers_per_block],
        }
    }

    /// Conditioning frames trimmed by the predictor's Valid entry conv.
    pub fn frame_trim(&self) -> usize {
        self.kp_entry_kernel - 1
    }
}

/// Named parameter counts that sum to the total exactly.
#[derive(Debug, Clone)]
pub struct ParamBreakdown {
    pub parts: Vec<(String, usize)>,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.parts.iter().map(|(_, n)| n).sum()
    }
}

/// Scalars of one weight-normalized conv: `v` + `g` + bias.
fn conv_scalars(out_ch: usize, in_ch: usize, kernel: usize) -> usize {
    out_ch * in_ch * kernel + 2 * out_ch
}

/// Closed-form parameter breakdown of the LVC generator; equals the
/// enumeration of the initialized `ParamStore`.
pub fn lvcnet_param_breakdown(cfg: &GeneratorConfig) -> ParamBreakdown {
    let c = cfg.residual_channels;
    let kp = cfg.predictor_config();
    let mut parts = vec![("entry".to_string(), conv_scalars(c, 1, 1))];
    let kp_entry = conv_scalars(kp.hidden_channels, kp.cond_channels, kp.entry_kernel);
    let kp_res = kp.residual_layers * conv_scalars(kp.hidden_channels, kp.hidden_channels, 1);
    let kp_expand = conv_scalars(kp.expand_channels, kp.hidden_channels, 1);
    let kp_out = conv_scalars(kp.output_width(), kp.expand_channels, 1);
    for i in 0..cfg.blocks {
        parts.push((
            format!("block{i}.kernel_predictor"),
            kp_entry + kp_res + kp_expand + kp_out,
        ));
    }
    parts.push(("exit".to_string(), conv_scalars(1, c, 1)));
    ParamBreakdown { parts }
}

/// Total parameter count of the LVC generator for a config.
pub fn count_params(cfg: &GeneratorConfig) -> usize {
    lvcnet_param_breakdown(cfg).total()
}

/// One-sided receptive-field radius of the generator's waveform path, in
/// samples: `blocks * sum_j (k-1)/2 * base^j`. The entry/exit layers and
/// the block residuals are pointwise and add nothing.
pub fn receptive_field(cfg: &GeneratorConfig) -> usize {
    let per_layer: usize = (0..cfg.layers_per_block)
        .map(|j| (cfg.kernel_size - 1) / 2 * cfg.dilation(j))
        .sum();
    cfg.blocks * per_layer
}

/// Deterministic standard-normal tensor; draws are f64 and cast, so the
/// stream is identical across dtypes.
pub fn gaussian_noise<F: Real>(batch: usize, channels: usize, time: usize, seed: u64) -> Tensor<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..batch * channels * time)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            F::real_from(z)
        })
        .collect();
    Tensor::from_vec(data, batch, channels, time).expect("noise shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_closed_form() {
        let mut cfg = GeneratorConfig::default();
        assert_eq!(receptive_field(&cfg), 3 * 1023);
        cfg.blocks = 1;
        cfg.layers_per_block = 3;
        assert_eq!(receptive_field(&cfg), 1 + 2 + 4);
        cfg.kernel_size = 1;
        assert_eq!(receptive_field(&cfg), 0);
    }

    #[test]
    fn breakdown_matches_store_enumeration() {
        for width in [4, 6, 8] {
            let cfg = GeneratorConfig::with_width(width);
            let gen = LvcNetGenerator::new(cfg.clone());
            let store = gen.init_params::<f64>(0);
            assert_eq!(count_params(&cfg), store.total_scalars(), "width {width}");
        }
    }

    #[test]
    fn paper_scale_counts() {
        // Table targets: 0.47 M / 0.84 M / 1.34 M within 15%.
        for (width, target) in [(4, 0.47e6), (6, 0.84e6), (8, 1.34e6)] {
            let got = count_params(&GeneratorConfig::with_width(width)) as f64;
            let rel = (got - target).abs() / target;
            assert!(rel < 0.15, "width {width}: {got} vs {target} ({rel:.3})");
        }
    }

    #[test]
    fn doubling_width_roughly_quadruples_predictor_targets() {
        // The 2*C*C*k term dominates the per-layer coefficient width.
        let w4 = GeneratorConfig::with_width(4)
            .predictor_config()
            .output_width() as f64;
        let w8 = GeneratorConfig::with_width(8)
            .predictor_config()
            .output_width() as f64;
        let ratio = w8 / w4;
        assert!((3.5..=4.0).contains(&ratio), "ratio {ratio}");
    }
}
