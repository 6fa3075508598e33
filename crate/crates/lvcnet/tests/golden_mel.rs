//! Golden feature file: a fixed 1-second chirp's mel matrix is pinned
//! byte-for-byte, and cross-checked against an independent naive-DFT mel
//! pipeline.

use lvcnet::audio::{
    mel_filterbank, mel_spectrogram, read_mel, write_mel, Waveform, FFT_SIZE, HOP_SIZE,
    LOG_FLOOR, N_MELS, SAMPLE_RATE, WIN_SIZE,
};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/chirp.mel");

/// Linear chirp 220 -> 1760 Hz over one second, amplitude 0.5, quantized
/// through PCM16 so the WAV round-trip yields these exact samples.
fn golden_chirp() -> Waveform {
    let n = SAMPLE_RATE as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let phase = 2.0 * std::f64::consts::PI * (220.0 * t + 770.0 * t * t);
            let q = (0.5 * phase.sin() * 32768.0).round().clamp(-32768.0, 32767.0);
            (q / 32768.0) as f32
        })
        .collect();
    Waveform::new(samples, SAMPLE_RATE)
}

/// Naive mel pipeline: direct DFT per frame (no FFT), same framing,
/// window, filterbank, and log rules. Kept independent of the library's
/// FFT-based path.
fn naive_mel(w: &Waveform) -> Vec<f64> {
    let x: Vec<f64> = w.samples.iter().map(|&s| s as f64).collect();
    let pad = FFT_SIZE / 2;
    let mut padded = Vec::with_capacity(x.len() + 2 * pad);
    for i in 0..pad {
        padded.push(x[pad - i]);
    }
    padded.extend_from_slice(&x);
    for j in 0..pad {
        padded.push(x[x.len() - 2 - j]);
    }
    let window: Vec<f64> = (0..WIN_SIZE)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / WIN_SIZE as f64).cos())
        .collect();
    let frames = 1 + x.len() / HOP_SIZE;
    let bins = FFT_SIZE / 2 + 1;
    let fb = mel_filterbank();
    let mut out = Vec::with_capacity(frames * N_MELS);
    for t in 0..frames {
        let seg = &padded[t * HOP_SIZE..t * HOP_SIZE + FFT_SIZE];
        let f: Vec<f64> = (0..FFT_SIZE)
            .map(|i| if i < WIN_SIZE { window[i] * seg[i] } else { 0.0 })
            .collect();
        let mut mags = vec![0.0; bins];
        for (k, m) in mags.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in f.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (k * n) as f64 / FFT_SIZE as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            *m = (re * re + im * im).sqrt();
        }
        for m in 0..N_MELS {
            let acc: f64 = fb[m * bins..(m + 1) * bins]
                .iter()
                .zip(&mags)
                .map(|(w, v)| w * v)
                .sum();
            out.push(acc.max(LOG_FLOOR).log10());
        }
    }
    out
}

#[test]
fn golden_mel_is_reproduced_byte_exactly() {
    let mel = mel_spectrogram(&golden_chirp()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let fresh = dir.path().join("fresh.mel");
    write_mel(&fresh, &mel).unwrap();
    let committed = std::fs::read(GOLDEN).expect("committed golden file");
    let ours = std::fs::read(&fresh).unwrap();
    assert_eq!(committed, ours, "golden mel bytes diverged");
}

#[test]
fn golden_mel_matches_independent_dft_pipeline() {
    let w = golden_chirp();
    let mel = read_mel(GOLDEN).expect("committed golden file");
    let oracle = naive_mel(&w);
    assert_eq!(mel.values.len(), oracle.len());
    for (i, (a, b)) in mel.values.iter().zip(&oracle).enumerate() {
        assert!((a - b).abs() < 1e-3, "index {i}: {a} vs {b}");
    }
}

/// Regenerate the golden artifact (maintenance path):
/// `cargo test -p lvcnet --test golden_mel regen -- --ignored`
#[test]
#[ignore = "writes the golden file"]
fn regen() {
    let mel = mel_spectrogram(&golden_chirp()).unwrap();
    write_mel(GOLDEN, &mel).unwrap();
    eprintln!("wrote {GOLDEN} ({} frames)", mel.frames);
}
