//! Location-variable convolution vocoder toolkit.
//!
//! A small differentiable tensor core (dilated convolutions, weight
//! normalization, a define-by-run tape), the location-variable convolution
//! mechanism with its kernel predictor, an LVC waveform generator plus a
//! Parallel-WaveGAN style baseline, a mel feature front-end with WAV/MEL
//! file I/O, and desk-scale adversarial training.

pub mod audio;
pub mod autograd;
pub mod conv;
pub mod dsp;
pub mod engine;
pub mod gradchecks;
pub mod error;
pub mod lvc;
pub mod model;
pub mod oracles;
pub mod params;
pub mod rtf;
pub mod tensor;
pub mod training;

pub use conv::{conv1d, pointwise, Activation, ConvWeight, Padding};
pub use error::{Error, Result};
pub use lvc::{
    carve_kernel_sets, lvc_forward, predict_kernels, split_intervals, KernelPredictorConfig,
    KernelSet, LvcLayout,
};
pub use model::{
    count_params, gaussian_noise, lvcnet_param_breakdown, receptive_field, GeneratorConfig,
    LvcNetGenerator, ParamBreakdown, PwgConfig, PwgGenerator,
};
pub use params::{load_checkpoint, save_checkpoint, Param, ParamStore};
pub use tensor::{Real, Tensor};
