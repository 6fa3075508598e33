//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("channel mismatch: input has {input} channels, weight expects {expected}")]
    ChannelMismatch { input: usize, expected: usize },

    #[error("same-padded convolution requires an odd kernel size, got {0}")]
    EvenKernel(usize),

    #[error("empty time axis")]
    EmptyTime,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("time axis of length {time} does not split into {frames} frames of hop {hop}")]
    BadSplit {
        time: usize,
        frames: usize,
        hop: usize,
    },

    #[error("conditioning too short: {frames} frames, entry convolution needs at least {needed}")]
    CondTooShort { frames: usize, needed: usize },

    #[error("alignment violation: waveform length {wave} != (mel frames {frames} - 4) * hop {hop}")]
    Alignment {
        wave: usize,
        frames: usize,
        hop: usize,
    },

    #[error("checkpoint mismatch on tensor `{name}`: expected {expected}, got {got}")]
    CheckpointMismatch {
        name: String,
        expected: String,
        got: String,
    },

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("sample rate mismatch: file has {got} Hz, pipeline requires {required} Hz (resampling refused)")]
    SampleRate { got: u32, required: u32 },

    #[error("input too short: {len} samples, need at least {needed}")]
    InputTooShort { len: usize, needed: usize },

    #[error("non-finite loss at step {step} in term `{term}`")]
    NanLoss { step: u64, term: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
