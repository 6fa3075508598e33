//! Minimal RIFF/WAVE codec: 16-bit PCM mono only.
//!
//! Loading scales samples to [-1, 1] by 1/32768; saving quantizes back,
//! so a load/save round-trip of a PCM16 file is byte-exact in the data
//! chunk. Out-of-range samples are clamped and counted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_tag(r: &mut impl Read) -> Result<[u8; 4]> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Load a 16-bit PCM mono RIFF file at the pipeline rate. Other encodings
/// are rejected; sample-rate mismatches are refused rather than resampled.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    if &read_tag(&mut r)? != b"RIFF" {
        return Err(Error::Format("missing RIFF header".into()));
    }
    let _riff_size = read_u32(&mut r)?;
    if &read_tag(&mut r)? != b"WAVE" {
        return Err(Error::Format("missing WAVE tag".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    loop {
        let tag = match read_tag(&mut r) {
            Ok(t) => t,
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Err(Error::Format("no data chunk".into()))
            }
            Err(e) => return Err(e),
        };
        let size = read_u32(&mut r)? as usize;
        match &tag {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too small".into()));
                }
                let audio_format = read_u16(&mut r)?;
                let channels = read_u16(&mut r)?;
                let sample_rate = read_u32(&mut r)?;
                let _byte_rate = read_u32(&mut r)?;
                let _block_align = read_u16(&mut r)?;
                let bits = read_u16(&mut r)?;
                skip(&mut r, size - 16 + (size & 1))?;
                fmt = Some((audio_format, channels, sample_rate, bits));
            }
            b"data" => {
                let (audio_format, channels, sample_rate, bits) =
                    fmt.ok_or_else(|| Error::Format("data chunk before fmt".into()))?;
                if audio_format != 1 || bits != 16 {
                    return Err(Error::Format(format!(
                        "unsupported encoding: format {audio_format}, {bits} bits (PCM16 only)"
                    )));
                }
                if channels != 1 {
                    return Err(Error::Format(format!(
                        "unsupported channel count {channels} (mono only)"
                    )));
                }
                if sample_rate != SAMPLE_RATE {
                    return Err(Error::SampleRate {
                        got: sample_rate,
                        required: SAMPLE_RATE,
                    });
                }
                let n = size / 2;
                let mut bytes = vec![0u8; n * 2];
                r.read_exact(&mut bytes)?;
                let samples = bytes
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
                    .collect();
                return Ok(Waveform::new(samples, sample_rate));
            }
            _ => skip(&mut r, size + (size & 1))?,
        }
    }
}

fn skip(r: &mut impl Read, n: usize) -> Result<()> {
    std::io::copy(&mut r.take(n as u64), &mut std::io::sink())?;
    Ok(())
}

/// Write 16-bit PCM mono. Returns the number of samples clamped to the
/// representable range (callers warn when it is nonzero).
pub fn save_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<usize> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    let n = wave.samples.len();
    let data_bytes = (n * 2) as u32;

    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_bytes).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&wave.sample_rate.to_le_bytes())?;
    w.write_all(&(wave.sample_rate * 2).to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&16u16.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&data_bytes.to_le_bytes())?;

    let mut clipped = 0usize;
    for &s in &wave.samples {
        let scaled = (s as f64 * 32768.0).round();
        let q = if scaled > i16::MAX as f64 {
            clipped += 1;
            i16::MAX
        } else if scaled < i16::MIN as f64 {
            clipped += 1;
            i16::MIN
        } else {
            scaled as i16
        };
        w.write_all(&q.to_le_bytes())?;
    }
    w.flush()?;
    Ok(clipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.wav");
        let p2 = dir.path().join("b.wav");
        let samples: Vec<f32> = (0..1000)
            .map(|i| {
                let s = ((i * 37 % 65536) - 32768) as i16;
                s as f32 / 32768.0
            })
            .collect();
        save_wav(&p1, &Waveform::new(samples, SAMPLE_RATE)).unwrap();
        let loaded = load_wav(&p1).unwrap();
        save_wav(&p2, &loaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn zero_waveform_stays_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.wav");
        save_wav(&p, &Waveform::new(vec![0.0; 64], SAMPLE_RATE)).unwrap();
        let w = load_wav(&p).unwrap();
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn overflow_clips_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        let clipped = save_wav(
            &p,
            &Waveform::new(vec![1.5, -2.0, 0.25], SAMPLE_RATE),
        )
        .unwrap();
        assert_eq!(clipped, 2);
        let w = load_wav(&p).unwrap();
        assert_eq!(w.samples[0], 32767.0 / 32768.0);
        assert_eq!(w.samples[1], -1.0);
        assert_eq!(w.samples[2], 0.25);
    }

    #[test]
    fn rejects_malformed_and_mismatched() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"not a riff file").unwrap();
        assert!(matches!(load_wav(&p), Err(Error::Format(_))));

        let p48 = dir.path().join("rate.wav");
        save_wav(&p48, &Waveform::new(vec![0.0; 16], 48_000)).unwrap();
        assert!(matches!(load_wav(&p48), Err(Error::SampleRate { .. })));
    }
}
