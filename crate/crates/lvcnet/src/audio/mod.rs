//! Feature front-end and file I/O.
//!
//! Fixed pipeline settings: 22,050 Hz mono audio, 1024-point FFT and
//! window with 256-sample hop, 80 mel channels spanning 80 Hz to 7.6 kHz.
//! Mel values are `log10(max(mel_mat * magnitude, 1e-5))`; features are
//! computed in f64 and stored as f32 in `MEL1` files.

mod mel;
mod wav;

pub use mel::{mel_filterbank, mel_spectrogram, read_mel, write_mel, MelSpectrogram};
pub use wav::{load_wav, save_wav};

use crate::dsp::{self, StftSpec};
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 22_050;
pub const FFT_SIZE: usize = 1024;
pub const WIN_SIZE: usize = 1024;
pub const HOP_SIZE: usize = 256;
pub const N_MELS: usize = 80;
pub const FMIN_HZ: f64 = 80.0;
pub const FMAX_HZ: f64 = 7_600.0;
pub const LOG_FLOOR: f64 = 1e-5;

/// Mono waveform with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub fn pipeline_spec() -> StftSpec {
    StftSpec::new(FFT_SIZE, HOP_SIZE, WIN_SIZE)
}

/// Centered STFT magnitudes of a pipeline-rate waveform, `(frames, 513)`
/// row-major, computed in f64. Frame count is `1 + len/hop`.
pub fn stft(x: &Waveform) -> Result<(Vec<f64>, usize, usize)> {
    if x.samples.is_empty() {
        return Err(Error::EmptyTime);
    }
    let xs: Vec<f64> = x.samples.iter().map(|&v| v as f64).collect();
    dsp::stft_magnitude(&xs, pipeline_spec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize) -> Waveform {
        let samples = (0..len)
            .map(|n| {
                (2.0 * std::f64::consts::PI * freq * n as f64 / SAMPLE_RATE as f64).sin() as f32
                    * 0.5
            })
            .collect();
        Waveform::new(samples, SAMPLE_RATE)
    }

    #[test]
    fn sine_at_bin_center_peaks_there() {
        // f = k * sr / fft for k = 64.
        let k = 64;
        let freq = k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
        let w = sine(freq, 4096);
        let (mag, frames, bins) = stft(&w).unwrap();
        assert_eq!(frames, 17);
        // Interior frame: the peak bin must be k.
        let frame = 8;
        let row = &mag[frame * bins..(frame + 1) * bins];
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, k);
    }

    #[test]
    fn parseval_on_interior_frame() {
        let w = sine(997.0, 4096);
        let spec = pipeline_spec();
        let xs: Vec<f64> = w.samples.iter().map(|&v| v as f64).collect();
        let (mag, _, bins) = stft(&w).unwrap();
        // Reconstruct the windowed frame energy for frame 8 directly.
        let t = 8usize;
        let window: Vec<f64> = crate::dsp::hann(WIN_SIZE);
        let start = t * HOP_SIZE - FFT_SIZE / 2; // interior, no padding involved
        let energy: f64 = (0..WIN_SIZE)
            .map(|i| {
                let s = window[i] * xs[start + i];
                s * s
            })
            .sum();
        let row = &mag[t * bins..(t + 1) * bins];
        let spectral = row[0] * row[0]
            + row[bins - 1] * row[bins - 1]
            + 2.0 * row[1..bins - 1].iter().map(|m| m * m).sum::<f64>();
        let lhs = spectral / spec.fft as f64;
        assert!(
            (lhs - energy).abs() / energy < 1e-4,
            "parseval: {lhs} vs {energy}"
        );
    }

    #[test]
    fn hop_shift_moves_frames_by_one() {
        let w = sine(442.0, 4096 + HOP_SIZE);
        let shifted = Waveform::new(w.samples[HOP_SIZE..].to_vec(), SAMPLE_RATE);
        let base = Waveform::new(w.samples[..4096].to_vec(), SAMPLE_RATE);
        let (ma, fa, bins) = stft(&base).unwrap();
        let (mb, _fb, _) = stft(&shifted).unwrap();
        // Interior frames of the shifted signal equal the originals offset
        // by one hop.
        for t in 3..fa - 3 {
            for k in 0..bins {
                let a = ma[t * bins + k];
                let b = mb[(t - 1) * bins + k];
                assert!((a - b).abs() < 1e-6, "frame {t} bin {k}: {a} vs {b}");
            }
        }
    }
}
