//! Command-line front end: feature extraction, synthesis, desk-scale
//! training, parameter accounting, gradient checks, and the RTF benchmark.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error,
//! 3 numerical failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use lvcnet::audio::{load_wav, mel_spectrogram, read_mel, save_wav, write_mel, Waveform, SAMPLE_RATE};
use lvcnet::gradchecks::{run_component, Component};
use lvcnet::model::{
    lvcnet_param_breakdown, pwg_param_breakdown, GeneratorConfig, LvcNetGenerator, PwgConfig,
    PwgGenerator,
};
use lvcnet::params::{load_checkpoint, load_into, save_checkpoint};
use lvcnet::rtf::{bench_report, write_bench_csv, BenchSpec, ModelVariant};
use lvcnet::training::{
    load_train_state, save_train_state, train_toy, write_loss_csv, Clip, Trainer, TrainConfig,
};

#[derive(Parser)]
#[command(name = "lvcnet", version, about = "Location-variable convolution vocoder toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract log-mel features from a 22,050 Hz PCM16 mono WAV into a MEL1 file
    ExtractMel {
        wav_in: PathBuf,
        mel_out: PathBuf,
    },
    /// Synthesize a waveform from a MEL1 file and a checkpoint
    Synth {
        #[arg(long)]
        mel: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model family: lvcnet or pwg
        #[arg(long, default_value = "lvcnet")]
        model: String,
        /// Residual width: 4|6|8 for lvcnet, 32|48|64 for pwg
        #[arg(long, default_value_t = 8)]
        width: usize,
    },
    /// Desk-scale adversarial training on a directory of WAV clips
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 500)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (losses.csv, generator.lvc1, state.lvt8)
        #[arg(long, default_value = "train_out")]
        out: PathBuf,
        /// key=value hyperparameter file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Resume from a state.lvt8 written by a previous run
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Benchmark synthesis speed (real-time factor)
    Bench {
        /// Seconds of audio per synthesis
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Worker threads (each synthesizes its own utterance)
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// Write the CSV report here as well as stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated variants, e.g. lvcnet-8,pwg-64 (default: all)
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
    },
    /// Parameter count with per-module breakdown
    Params {
        #[arg(long, default_value = "lvcnet")]
        model: String,
        #[arg(long, default_value_t = 8)]
        width: usize,
    },
    /// Finite-difference gradient checks (f64)
    Gradcheck {
        /// linear|conv1d|lvc|predictor|generator-tiny|discriminator|stft-loss|all
        #[arg(long, default_value = "all")]
        component: String,
    },
}

enum CliError {
    Usage(String),
    Data(anyhow::Error),
    Numerical(String),
}

impl From<lvcnet::Error> for CliError {
    fn from(e: lvcnet::Error) -> Self {
        match e {
            lvcnet::Error::NanLoss { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Data(other.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::ExtractMel { wav_in, mel_out } => cmd_extract_mel(&wav_in, &mel_out),
        Cmd::Synth {
            mel,
            ckpt,
            out,
            seed,
            model,
            width,
        } => cmd_synth(&mel, &ckpt, &out, seed, &model, width),
        Cmd::Train {
            data,
            steps,
            seed,
            out,
            config,
            resume,
        } => cmd_train(&data, steps, seed, &out, config.as_deref(), resume.as_deref()),
        Cmd::Bench {
            duration,
            repeats,
            warmup,
            threads,
            seed,
            out,
            variants,
        } => cmd_bench(duration, repeats, warmup, threads, seed, out.as_deref(), variants),
        Cmd::Params { model, width } => cmd_params(&model, width),
        Cmd::Gradcheck { component } => cmd_gradcheck(&component),
    }
}

fn cmd_extract_mel(wav_in: &Path, mel_out: &Path) -> Result<(), CliError> {
    let wave = load_wav(wav_in)
        .with_context(|| format!("reading {}", wav_in.display()))
        .map_err(CliError::Data)?;
    let mel = mel_spectrogram(&wave)?;
    write_mel(mel_out, &mel)
        .with_context(|| format!("writing {}", mel_out.display()))
        .map_err(CliError::Data)?;
    println!(
        "{} -> {} ({} frames x {} bins)",
        wav_in.display(),
        mel_out.display(),
        mel.frames,
        mel.bins
    );
    Ok(())
}

fn check_lvcnet_width(width: usize) -> Result<(), CliError> {
    if matches!(width, 4 | 6 | 8) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "lvcnet width must be 4, 6 or 8 (got {width})"
        )))
    }
}

fn check_pwg_width(width: usize) -> Result<(), CliError> {
    if matches!(width, 32 | 48 | 64) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "pwg width must be 32, 48 or 64 (got {width})"
        )))
    }
}

fn cmd_synth(
    mel_path: &Path,
    ckpt: &Path,
    out: &Path,
    seed: u64,
    model: &str,
    width: usize,
) -> Result<(), CliError> {
    let mel = read_mel(mel_path)
        .with_context(|| format!("reading {}", mel_path.display()))
        .map_err(CliError::Data)?;
    let ckpt_file = File::open(ckpt)
        .with_context(|| format!("opening {}", ckpt.display()))
        .map_err(CliError::Data)?;
    let loaded = load_checkpoint(&mut BufReader::new(ckpt_file))?;

    let wave = match model {
        "lvcnet" => {
            check_lvcnet_width(width)?;
            let gen = LvcNetGenerator::new(GeneratorConfig::with_width(width));
            let mut store = gen.init_params::<f32>(0);
            load_into(&mut store, &loaded)?;
            gen.synthesize(&store, &mel.to_tensor::<f32>(), seed)?
        }
        "pwg" => {
            check_pwg_width(width)?;
            let gen = PwgGenerator::new(PwgConfig::with_width(width));
            let mut store = gen.init_params::<f32>(0);
            load_into(&mut store, &loaded)?;
            gen.synthesize(&store, &mel.to_tensor::<f32>(), seed)?
        }
        other => return Err(CliError::Usage(format!("unknown model `{other}`"))),
    };

    let samples = wave.into_vec();
    let n = samples.len();
    let clipped = save_wav(out, &Waveform::new(samples, SAMPLE_RATE))
        .with_context(|| format!("writing {}", out.display()))
        .map_err(CliError::Data)?;
    if clipped > 0 {
        eprintln!("warning: {clipped} samples clipped to PCM16 range");
    }
    println!(
        "{} -> {} ({n} samples, {:.3} s, seed {seed})",
        mel_path.display(),
        out.display(),
        n as f64 / SAMPLE_RATE as f64
    );
    Ok(())
}

/// Apply `key=value` lines ('#' starts a comment) onto the training config.
fn apply_config_file(cfg: &mut TrainConfig, steps: &mut u64, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::Data)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let parse_usize = || -> Result<usize, CliError> {
            value
                .parse()
                .map_err(|_| CliError::Usage(format!("bad value for {key}: `{value}`")))
        };
        let parse_f64 = || -> Result<f64, CliError> {
            value
                .parse()
                .map_err(|_| CliError::Usage(format!("bad value for {key}: `{value}`")))
        };
        match key {
            "width" | "residual_channels" => cfg.generator.residual_channels = parse_usize()?,
            "blocks" => cfg.generator.blocks = parse_usize()?,
            "layers_per_block" => cfg.generator.layers_per_block = parse_usize()?,
            "kernel_size" => cfg.generator.kernel_size = parse_usize()?,
            "dilation_base" => cfg.generator.dilation_base = parse_usize()?,
            "crop_frames" => cfg.crop_frames = parse_usize()?,
            "warmup_steps" => cfg.warmup_steps = parse_usize()? as u64,
            "lambda_adv" => cfg.lambda_adv = parse_f64()?,
            "lr_gen" => cfg.lr_gen = parse_f64()?,
            "lr_disc" => cfg.lr_disc = parse_f64()?,
            "steps" => *steps = parse_usize()? as u64,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown config key `{other}` in {}",
                    path.display()
                )))
            }
        }
    }
    Ok(())
}

fn cmd_train(
    data: &Path,
    mut steps: u64,
    seed: u64,
    out: &Path,
    config: Option<&Path>,
    resume: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = TrainConfig::default();
    if let Some(c) = config {
        apply_config_file(&mut cfg, &mut steps, c)?;
    }

    let mut wavs: Vec<PathBuf> = std::fs::read_dir(data)
        .with_context(|| format!("reading {}", data.display()))
        .map_err(CliError::Data)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!(
            "no .wav files in {}",
            data.display()
        )));
    }

    let mut dataset = Vec::new();
    for p in &wavs {
        let wave = load_wav(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(CliError::Data)?;
        let mel = mel_spectrogram(&wave)?;
        dataset.push((wave, mel));
    }
    println!("loaded {} clip(s) from {}", dataset.len(), data.display());

    let (curve, state) = match resume {
        None => train_toy(&dataset, &cfg, steps, seed)?,
        Some(path) => {
            let f = File::open(path)
                .with_context(|| format!("opening {}", path.display()))
                .map_err(CliError::Data)?;
            let state = load_train_state(&mut BufReader::new(f), &cfg)?;
            println!("resuming at step {}", state.step);
            let clips = dataset
                .iter()
                .map(|(w, m)| Clip::from_pair(w, m))
                .collect();
            let mut trainer = Trainer::from_state(cfg.clone(), clips, state)?;
            let curve = trainer.run(steps)?;
            (curve, trainer.state)
        }
    };

    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(CliError::Data)?;
    let csv_path = out.join("losses.csv");
    write_loss_csv(
        BufWriter::new(File::create(&csv_path).map_err(|e| CliError::Data(e.into()))?),
        &curve,
    )?;
    let gen_path = out.join("generator.lvc1");
    save_checkpoint(
        &state.gen.cast::<f32>(),
        &mut BufWriter::new(File::create(&gen_path).map_err(|e| CliError::Data(e.into()))?),
    )?;
    let state_path = out.join("state.lvt8");
    save_train_state(
        &state,
        &mut BufWriter::new(File::create(&state_path).map_err(|e| CliError::Data(e.into()))?),
    )?;

    if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
        println!(
            "steps {}..{}: combined stft {:.4} -> {:.4}",
            first.step,
            last.step,
            first.combined_stft(),
            last.combined_stft()
        );
    }
    println!(
        "wrote {}, {}, {}",
        csv_path.display(),
        gen_path.display(),
        state_path.display()
    );
    Ok(())
}

fn cmd_bench(
    duration: f64,
    repeats: usize,
    warmup: usize,
    threads: usize,
    seed: u64,
    out: Option<&Path>,
    variants: Option<Vec<String>>,
) -> Result<(), CliError> {
    if !(duration > 0.0) || repeats == 0 || threads == 0 {
        return Err(CliError::Usage(
            "duration, repeats and threads must be positive".into(),
        ));
    }
    let variants: Vec<ModelVariant> = match variants {
        None => ModelVariant::ALL.to_vec(),
        Some(labels) => {
            let mut v = Vec::new();
            for l in labels {
                v.push(ModelVariant::parse(&l).map_err(|e| CliError::Usage(e.to_string()))?);
            }
            v
        }
    };
    let spec = BenchSpec {
        duration_secs: duration,
        repeats,
        warmup,
        seed,
        threads,
    };
    eprintln!(
        "benchmarking {} variant(s): {duration} s audio, {repeats} repeats, {warmup} warmup, {threads} thread(s)",
        variants.len()
    );
    let (rows, ratio) = bench_report(&variants, &spec)?;
    let mut stdout = std::io::stdout().lock();
    write_bench_csv(&mut stdout, &rows)?;
    if let Some(r) = ratio {
        writeln!(stdout, "# rtf(pwg-64) / rtf(lvcnet-8) = {r:.2}").map_err(lvcnet::Error::from)?;
    }
    if let Some(path) = out {
        write_bench_csv(
            BufWriter::new(File::create(path).map_err(|e| CliError::Data(e.into()))?),
            &rows,
        )?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_params(model: &str, width: usize) -> Result<(), CliError> {
    let breakdown = match model {
        "lvcnet" => {
            check_lvcnet_width(width)?;
            lvcnet_param_breakdown(&GeneratorConfig::with_width(width))
        }
        "pwg" => {
            check_pwg_width(width)?;
            pwg_param_breakdown(&PwgConfig::with_width(width))
        }
        other => return Err(CliError::Usage(format!("unknown model `{other}`"))),
    };
    println!("{model}-{width} parameter breakdown:");
    for (name, n) in &breakdown.parts {
        println!("  {name:<28} {n:>10}");
    }
    let total = breakdown.total();
    println!("  {:<28} {total:>10} ({:.3} M)", "total", total as f64 / 1e6);
    Ok(())
}

fn cmd_gradcheck(component: &str) -> Result<(), CliError> {
    let comps: Vec<Component> = if component == "all" {
        Component::ALL.to_vec()
    } else {
        vec![Component::parse(component).map_err(|e| CliError::Usage(e.to_string()))?]
    };
    let mut failed = Vec::new();
    for c in comps {
        let err = run_component(c)?;
        let thr = c.threshold();
        let ok = err < thr;
        println!(
            "{:<16} max_rel_error {:>12.3e}  threshold {:.0e}  {}",
            c.label(),
            err,
            thr,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(c.label());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}
