//! Mel filterbank, log-mel extraction, and the `MEL1` file format.
//!
//! Mel scale is the HTK formula `2595 * log10(1 + f/700)`; filters are
//! peak-1 triangles (no area normalization) with all support inside
//! [80 Hz, 7.6 kHz]. Both choices are frozen by the golden feature files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{stft, Waveform, FFT_SIZE, FMAX_HZ, FMIN_HZ, HOP_SIZE, LOG_FLOOR, N_MELS, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Log-mel conditioning matrix, `(frames, 80)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub hop: usize,
}

impl MelSpectrogram {
    /// Conditioning tensor `(1, bins, frames)` in the requested dtype.
    pub fn to_tensor<F: Real>(&self) -> Tensor<F> {
        let mut t = Tensor::zeros(1, self.bins, self.frames);
        for i in 0..self.frames {
            for m in 0..self.bins {
                t.set(0, m, i, F::real_from(self.values[i * self.bins + m]));
            }
        }
        t
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `(80, 513)` row-major.
pub fn mel_filterbank() -> Vec<f64> {
    let bins = FFT_SIZE / 2 + 1;
    let mel_lo = hz_to_mel(FMIN_HZ);
    let mel_hi = hz_to_mel(FMAX_HZ);
    let points: Vec<f64> = (0..N_MELS + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (N_MELS + 1) as f64))
        .collect();
    let mut fb = vec![0.0; N_MELS * bins];
    for m in 0..N_MELS {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..bins {
            let f = k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            fb[m * bins + k] = w;
        }
    }
    fb
}

/// Log-mel features: `log10(max(mel_mat * |STFT|, 1e-5))` per frame.
pub fn mel_spectrogram(x: &Waveform) -> Result<MelSpectrogram> {
    if x.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate {
            got: x.sample_rate,
            required: SAMPLE_RATE,
        });
    }
    let (mag, frames, bins) = stft(x)?;
    let fb = mel_filterbank();
    let mut values = vec![0.0; frames * N_MELS];
    for t in 0..frames {
        let row = &mag[t * bins..(t + 1) * bins];
        for m in 0..N_MELS {
            let frow = &fb[m * bins..(m + 1) * bins];
            let mut acc = 0.0;
            for k in 0..bins {
                acc += frow[k] * row[k];
            }
            values[t * N_MELS + m] = acc.max(LOG_FLOOR).log10();
        }
    }
    Ok(MelSpectrogram {
        values,
        frames,
        bins: N_MELS,
        hop: HOP_SIZE,
    })
}

const MEL_MAGIC: &[u8; 4] = b"MEL1";

/// Write the `MEL1` container: magic, frames, bins, hop (u32 LE), then
/// row-major little-endian f32 values.
pub fn write_mel(path: impl AsRef<Path>, mel: &MelSpectrogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MEL_MAGIC)?;
    w.write_all(&(mel.frames as u32).to_le_bytes())?;
    w.write_all(&(mel.bins as u32).to_le_bytes())?;
    w.write_all(&(mel.hop as u32).to_le_bytes())?;
    for &v in &mel.values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mel(path: impl AsRef<Path>) -> Result<MelSpectrogram> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MEL_MAGIC {
        return Err(Error::Format("bad MEL1 magic".into()));
    }
    let mut b = [0u8; 4];
    let mut next_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    };
    let frames = next_u32(&mut r)? as usize;
    let bins = next_u32(&mut r)? as usize;
    let hop = next_u32(&mut r)? as usize;
    let mut values = vec![0.0f64; frames * bins];
    let mut fb = [0u8; 4];
    for v in values.iter_mut() {
        r.read_exact(&mut fb)?;
        *v = f32::from_le_bytes(fb) as f64;
    }
    Ok(MelSpectrogram {
        values,
        frames,
        bins,
        hop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filterbank_shape_and_support() {
        let fb = mel_filterbank();
        let bins = FFT_SIZE / 2 + 1;
        assert_eq!(fb.len(), N_MELS * bins);
        assert!(fb.iter().all(|&w| w >= 0.0));
        for k in 0..bins {
            let f = k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
            if f < FMIN_HZ || f > FMAX_HZ {
                for m in 0..N_MELS {
                    assert_eq!(fb[m * bins + k], 0.0, "bin {k} ({f} Hz) in filter {m}");
                }
            }
        }
        // Every filter covers at least one bin, support is contiguous.
        for m in 0..N_MELS {
            let row = &fb[m * bins..(m + 1) * bins];
            let first = row.iter().position(|&w| w > 0.0);
            assert!(first.is_some(), "filter {m} empty");
            let last = row.iter().rposition(|&w| w > 0.0).unwrap();
            for k in first.unwrap()..=last {
                assert!(row[k] > 0.0, "hole in filter {m} at bin {k}");
            }
        }
    }

    #[test]
    fn zero_signal_hits_log_floor() {
        let w = Waveform::new(vec![0.0; 4096], SAMPLE_RATE);
        let mel = mel_spectrogram(&w).unwrap();
        assert_eq!(mel.frames, 17);
        assert!(mel.values.iter().all(|&v| v == -5.0));
    }

    #[test]
    fn mel1_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.mel");
        let p2 = dir.path().join("b.mel");
        let w = Waveform::new(
            (0..6000).map(|i| ((i % 101) as f32 / 101.0) - 0.5).collect(),
            SAMPLE_RATE,
        );
        let mel = mel_spectrogram(&w).unwrap();
        write_mel(&p1, &mel).unwrap();
        let loaded = read_mel(&p1).unwrap();
        write_mel(&p2, &loaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded.frames, mel.frames);
        assert_eq!(loaded.hop, HOP_SIZE);
    }
}
