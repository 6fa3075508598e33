//! Real-time-factor benchmark: wall-clock synthesis time divided by the
//! duration of audio produced (lower is faster).
//!
//! Inputs are synthetic conditioning sequences from a fixed seed so
//! results do not depend on corpus availability. Warm-up runs are
//! excluded; reported figures are the median and p90 over the timed
//! repeats.

use std::time::Instant;

use crate::audio::{HOP_SIZE, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::model::{
    count_params, gaussian_noise, pwg_count_params, GeneratorConfig, LvcNetGenerator, PwgConfig,
    PwgGenerator,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    Lvcnet(usize),
    Pwg(usize),
}

impl ModelVariant {
    pub fn label(&self) -> String {
        match self {
            ModelVariant::Lvcnet(w) => format!("lvcnet-{w}"),
            ModelVariant::Pwg(w) => format!("pwg-{w}"),
        }
    }

    /// Parse labels like `lvcnet-8` or `pwg-64`.
    pub fn parse(s: &str) -> Result<Self> {
        let (family, width) = s
            .rsplit_once('-')
            .ok_or_else(|| Error::Format(format!("bad variant `{s}`")))?;
        let w: usize = width
            .parse()
            .map_err(|_| Error::Format(format!("bad variant width `{width}`")))?;
        match family {
            "lvcnet" if matches!(w, 4 | 6 | 8) => Ok(ModelVariant::Lvcnet(w)),
            "pwg" if matches!(w, 32 | 48 | 64) => Ok(ModelVariant::Pwg(w)),
            _ => Err(Error::Format(format!("unknown variant `{s}`"))),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelVariant::Lvcnet(w) => count_params(&GeneratorConfig::with_width(*w)),
            ModelVariant::Pwg(w) => pwg_count_params(&PwgConfig::with_width(*w)),
        }
    }

    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::Lvcnet(4),
        ModelVariant::Lvcnet(6),
        ModelVariant::Lvcnet(8),
        ModelVariant::Pwg(32),
        ModelVariant::Pwg(48),
        ModelVariant::Pwg(64),
    ];
}

#[derive(Debug, Clone, Copy)]
pub struct BenchSpec {
    pub duration_secs: f64,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            duration_secs: 10.0,
            repeats: 5,
            warmup: 1,
            seed: 17,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub variant: String,
    pub params: usize,
    pub rtf_median: f64,
    pub rtf_p90: f64,
}

/// Log-mel-like synthetic conditioning, fixed seed.
fn synthetic_mel(frames: usize, seed: u64) -> Tensor<f32> {
    gaussian_noise::<f32>(1, 80, frames, seed).map(|v| v - 2.0)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() as f64 * p).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Benchmark one variant with f32 inference. With `threads > 1`, each
/// repeat synthesizes one utterance per thread and the RTF is wall time
/// over total audio produced (a throughput figure).
pub fn bench_variant(variant: ModelVariant, spec: &BenchSpec) -> Result<BenchRow> {
    let target_samples = (spec.duration_secs * SAMPLE_RATE as f64).ceil() as usize;
    let usable_frames = target_samples.div_ceil(HOP_SIZE);

    let run: Box<dyn Fn(u64) -> Result<usize> + Sync> = match variant {
        ModelVariant::Lvcnet(w) => {
            let cfg = GeneratorConfig::with_width(w);
            let gen = LvcNetGenerator::new(cfg.clone());
            let store = gen.init_params::<f32>(spec.seed);
            let mel = synthetic_mel(usable_frames + cfg.frame_trim(), spec.seed);
            Box::new(move |noise_seed| {
                let wave = gen.synthesize(&store, &mel, noise_seed)?;
                Ok(wave.time())
            })
        }
        ModelVariant::Pwg(w) => {
            let cfg = PwgConfig::with_width(w);
            let gen = PwgGenerator::new(cfg);
            let store = gen.init_params::<f32>(spec.seed);
            let mel = synthetic_mel(usable_frames, spec.seed);
            Box::new(move |noise_seed| {
                let wave = gen.synthesize(&store, &mel, noise_seed)?;
                Ok(wave.time())
            })
        }
    };

    for i in 0..spec.warmup {
        run(spec.seed ^ (i as u64 + 1))?;
    }

    let mut rtfs = Vec::with_capacity(spec.repeats);
    for r in 0..spec.repeats {
        let noise_seed = spec.seed.wrapping_add(100 + r as u64);
        let start = Instant::now();
        let samples = if spec.threads <= 1 {
            run(noise_seed)?
        } else {
            let results: Vec<Result<usize>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..spec.threads)
                    .map(|t| {
                        let run = &run;
                        scope.spawn(move || run(noise_seed.wrapping_add(t as u64)))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
            let mut total = 0;
            for r in results {
                total += r?;
            }
            total
        };
        let wall = start.elapsed().as_secs_f64();
        let audio_secs = samples as f64 / SAMPLE_RATE as f64;
        rtfs.push(wall / audio_secs);
    }
    rtfs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    Ok(BenchRow {
        variant: variant.label(),
        params: variant.param_count(),
        rtf_median: percentile(&rtfs, 0.5),
        rtf_p90: percentile(&rtfs, 0.9),
    })
}

/// Benchmark a set of variants; also returns `rtf(pwg-64) / rtf(lvcnet-8)`
/// when both are present.
pub fn bench_report(variants: &[ModelVariant], spec: &BenchSpec) -> Result<(Vec<BenchRow>, Option<f64>)> {
    let mut rows = Vec::new();
    for &v in variants {
        rows.push(bench_variant(v, spec)?);
    }
    let find = |label: &str| rows.iter().find(|r| r.variant == label);
    let ratio = match (find("pwg-64"), find("lvcnet-8")) {
        (Some(p), Some(l)) => Some(p.rtf_median / l.rtf_median),
        _ => None,
    };
    Ok((rows, ratio))
}

/// CSV header + one row per variant: `variant,params,rtf_median,rtf_p90`.
pub fn write_bench_csv(mut w: impl std::io::Write, rows: &[BenchRow]) -> Result<()> {
    writeln!(w, "variant,params,rtf_median,rtf_p90")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6},{:.6}",
            r.variant, r.params, r.rtf_median, r.rtf_p90
        )?;
    }
    Ok(())
}
