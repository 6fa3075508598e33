//! Shared STFT machinery: centered framing with reflect padding, periodic
//! Hann windows, forward magnitudes, and the adjoint used by the spectral
//! losses.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::tensor::Real;

/// One STFT resolution. Framing is centered: the signal is reflect-padded
/// by `fft/2` on each side and frame `t` is the `fft`-sample window whose
/// center sits at sample `t*hop`. The Hann window of length `win` is
/// zero-padded symmetrically to `fft`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftSpec {
    pub fft: usize,
    pub hop: usize,
    pub win: usize,
}

impl StftSpec {
    pub fn new(fft: usize, hop: usize, win: usize) -> Self {
        assert!(win <= fft, "window {win} longer than FFT {fft}");
        assert!(hop > 0);
        StftSpec { fft, hop, win }
    }

    pub fn bins(&self) -> usize {
        self.fft / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    fn min_input(&self) -> usize {
        self.fft / 2 + 1
    }
}

/// Periodic Hann window: `0.5 - 0.5 cos(2 pi n / len)`.
pub fn hann<F: Real>(len: usize) -> Vec<F> {
    let half = F::real_from(0.5);
    (0..len)
        .map(|n| {
            let phase = F::real_from(2.0 * std::f64::consts::PI * n as f64 / len as f64);
            half - half * phase.cos()
        })
        .collect()
}

fn reflect_padded<F: Real>(x: &[F], pad: usize) -> Vec<F> {
    let len = x.len();
    let mut out = Vec::with_capacity(len + 2 * pad);
    for i in 0..pad {
        out.push(x[pad - i]);
    }
    out.extend_from_slice(x);
    for j in 0..pad {
        out.push(x[len - 2 - j]);
    }
    out
}

/// Complex one-sided spectra, frame-major: `spectra[t * bins + k]`.
pub struct Spectra<F> {
    pub data: Vec<Complex<F>>,
    pub frames: usize,
    pub bins: usize,
}

impl<F: Real> Spectra<F> {
    pub fn magnitudes(&self) -> Vec<F> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

pub fn stft_complex<F: Real>(x: &[F], spec: StftSpec) -> Result<Spectra<F>> {
    if x.is_empty() {
        return Err(Error::EmptyTime);
    }
    if x.len() < spec.min_input() {
        return Err(Error::InputTooShort {
            len: x.len(),
            needed: spec.min_input(),
        });
    }
    let pad = spec.fft / 2;
    let padded = reflect_padded(x, pad);
    let window: Vec<F> = hann(spec.win);
    let woff = (spec.fft - spec.win) / 2;
    let frames = spec.frames(x.len());
    let bins = spec.bins();

    let fft = FftPlanner::<F>::new().plan_fft_forward(spec.fft);
    let mut buf = vec![Complex::new(F::zero(), F::zero()); spec.fft];
    let mut data = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let seg = &padded[t * spec.hop..t * spec.hop + spec.fft];
        for c in buf.iter_mut() {
            *c = Complex::new(F::zero(), F::zero());
        }
        for (i, &w) in window.iter().enumerate() {
            buf[woff + i] = Complex::new(w * seg[woff + i], F::zero());
        }
        fft.process(&mut buf);
        data.extend(buf[..bins].iter().copied());
    }
    Ok(Spectra { data, frames, bins })
}

/// Magnitudes only, frame-major `(frames, bins)`.
pub fn stft_magnitude<F: Real>(x: &[F], spec: StftSpec) -> Result<(Vec<F>, usize, usize)> {
    let s = stft_complex(x, spec)?;
    Ok((s.magnitudes(), s.frames, s.bins))
}

/// Adjoint of [`stft_magnitude`]: given `dmag` (frame-major, one-sided) and
/// the forward spectra, returns the gradient w.r.t. the input signal.
///
/// Only the one-sided bins enter the loss, so no hermitian doubling is
/// applied; bins with zero magnitude get a zero subgradient.
pub fn stft_magnitude_backward<F: Real>(
    x_len: usize,
    spec: StftSpec,
    spectra: &Spectra<F>,
    dmag: &[F],
) -> Vec<F> {
    assert_eq!(dmag.len(), spectra.frames * spectra.bins);
    let pad = spec.fft / 2;
    let window: Vec<F> = hann(spec.win);
    let woff = (spec.fft - spec.win) / 2;
    let bins = spectra.bins;

    let ifft = FftPlanner::<F>::new().plan_fft_inverse(spec.fft);
    let mut buf = vec![Complex::new(F::zero(), F::zero()); spec.fft];
    let mut dpad = vec![F::zero(); x_len + 2 * pad];

    for t in 0..spectra.frames {
        for c in buf.iter_mut() {
            *c = Complex::new(F::zero(), F::zero());
        }
        for k in 0..bins {
            let xk = spectra.data[t * bins + k];
            let m = xk.norm();
            if m > F::zero() {
                let scale = dmag[t * bins + k] / m;
                buf[k] = Complex::new(xk.re * scale, xk.im * scale);
            }
        }
        // Unnormalized inverse FFT gives sum_k c_k e^{+2 pi i k n / N}; its
        // real part is exactly d|X|/d(frame sample).
        ifft.process(&mut buf);
        let base = t * spec.hop;
        for (i, &w) in window.iter().enumerate() {
            dpad[base + woff + i] = dpad[base + woff + i] + w * buf[woff + i].re;
        }
    }

    // Fold the padded adjoint back through the reflect padding.
    let mut dx = vec![F::zero(); x_len];
    for (p, &v) in dpad.iter().enumerate() {
        let o = if p < pad {
            pad - p
        } else if p < pad + x_len {
            p - pad
        } else {
            2 * x_len - 2 - (p - pad)
        };
        dx[o] = dx[o] + v;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive DFT magnitude oracle with the same framing conventions,
    /// independent of the FFT path.
    pub(crate) fn dft_magnitude_oracle(x: &[f64], spec: StftSpec) -> Vec<f64> {
        let pad = spec.fft / 2;
        let padded = reflect_padded(x, pad);
        let window: Vec<f64> = hann(spec.win);
        let woff = (spec.fft - spec.win) / 2;
        let frames = spec.frames(x.len());
        let bins = spec.bins();
        let mut out = Vec::with_capacity(frames * bins);
        for t in 0..frames {
            let seg = &padded[t * spec.hop..t * spec.hop + spec.fft];
            let mut f = vec![0.0; spec.fft];
            for (i, &w) in window.iter().enumerate() {
                f[woff + i] = w * seg[woff + i];
            }
            for k in 0..bins {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &v) in f.iter().enumerate() {
                    let ph = -2.0 * std::f64::consts::PI * (k * n) as f64 / spec.fft as f64;
                    re += v * ph.cos();
                    im += v * ph.sin();
                }
                out.push((re * re + im * im).sqrt());
            }
        }
        out
    }

    #[test]
    fn fft_matches_naive_dft() {
        let spec = StftSpec::new(64, 16, 48);
        let x: Vec<f64> = (0..200)
            .map(|i| (0.13 * i as f64).sin() + 0.3 * (0.711 * i as f64).cos())
            .collect();
        let (mag, frames, bins) = stft_magnitude(&x, spec).unwrap();
        assert_eq!(frames, 1 + 200 / 16);
        assert_eq!(bins, 33);
        let oracle = dft_magnitude_oracle(&x, spec);
        for (a, b) in mag.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_signal_zero_magnitudes() {
        let spec = StftSpec::new(64, 16, 64);
        let x = vec![0.0f64; 128];
        let (mag, _, _) = stft_magnitude(&x, spec).unwrap();
        assert!(mag.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn magnitude_backward_matches_finite_difference() {
        let spec = StftSpec::new(32, 8, 24);
        let n = 70;
        let x: Vec<f64> = (0..n).map(|i| (0.31 * i as f64).sin() + 0.05).collect();
        // Loss: weighted sum of magnitudes.
        let weights: Vec<f64> = (0..spec.bins() * spec.frames(n))
            .map(|i| ((i % 7) as f64 - 3.0) * 0.25)
            .collect();
        let spectra = stft_complex(&x, spec).unwrap();
        let analytic = stft_magnitude_backward(n, spec, &spectra, &weights);
        let eps = 1e-6;
        for s in [0usize, 1, 7, 33, n - 2, n - 1] {
            let mut xp = x.clone();
            xp[s] += eps;
            let (mp, _, _) = stft_magnitude(&xp, spec).unwrap();
            let mut xm = x.clone();
            xm[s] -= eps;
            let (mm, _, _) = stft_magnitude(&xm, spec).unwrap();
            let num: f64 = mp
                .iter()
                .zip(&mm)
                .zip(&weights)
                .map(|((p, m), w)| w * (p - m) / (2.0 * eps))
                .sum();
            let a = analytic[s];
            assert!(
                (a - num).abs() / a.abs().max(num.abs()).max(1e-8) < 1e-5,
                "sample {s}: analytic {a} vs numeric {num}"
            );
        }
    }
}
