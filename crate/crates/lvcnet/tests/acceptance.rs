//! Acceptance suite: every criterion runs in sequence and prints one
//! PASS/FAIL line (run with `--nocapture` to see them live). The single
//! test keeps benchmark timings free of concurrent test noise.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lvcnet::audio::{
    load_wav, mel_spectrogram, read_mel, save_wav, write_mel, Waveform, SAMPLE_RATE,
};
use lvcnet::autograd::Tape;
use lvcnet::conv::{conv1d, pointwise, Activation, ConvWeight, Padding};
use lvcnet::engine::{DirectEngine, Engine, TapeEngine};
use lvcnet::gradchecks::{run_component, Component};
use lvcnet::lvc::{lvc_forward, KernelSet, LvcLayout};
use lvcnet::model::{
    count_params, gaussian_noise, lvcnet_param_breakdown, pwg_count_params, pwg_param_breakdown,
    receptive_field, GeneratorConfig, LvcNetGenerator, PwgConfig,
};
use lvcnet::oracles::{lvc_sample_oracle, probe_radius};
use lvcnet::params::{load_checkpoint, save_checkpoint, ParamStore};
use lvcnet::rtf::{bench_report, BenchSpec, ModelVariant};
use lvcnet::tensor::{max_abs_diff, Tensor};
use lvcnet::training::{
    load_train_state, save_train_state, Clip, DiscriminatorConfig, StftLossConfig, TrainConfig,
    Trainer,
};

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

// ---------------------------------------------------------------- C1

/// lvc_forward vs the per-sample brute-force oracle on >=100 random
/// instances (f32, 1e-6), plus the degenerate collapse to a gated
/// dilated convolution.
fn c1_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..110 {
        let lay = LvcLayout {
            out_ch: rng.random_range(1..4),
            in_ch: rng.random_range(1..4),
            kernel: [1usize, 3, 5][rng.random_range(0..3)],
        };
        let frames = rng.random_range(1..6);
        let hop = rng.random_range(1..9);
        let dilation = rng.random_range(1..8);
        let x = Tensor::<f32>::from_vec(
            rand_vec(&mut rng, lay.in_ch * frames * hop, 1.0)
                .into_iter()
                .map(|v| v as f32)
                .collect(),
            1,
            lay.in_ch,
            frames * hop,
        )
        .unwrap();
        let ke = lay.out_ch * lay.in_ch * lay.kernel;
        let set = KernelSet::<f32> {
            layout: lay,
            frames,
            wf: rand_vec(&mut rng, frames * ke, 1.0).into_iter().map(|v| v as f32).collect(),
            wg: rand_vec(&mut rng, frames * ke, 1.0).into_iter().map(|v| v as f32).collect(),
            bf: rand_vec(&mut rng, frames * lay.out_ch, 1.0).into_iter().map(|v| v as f32).collect(),
            bg: rand_vec(&mut rng, frames * lay.out_ch, 1.0).into_iter().map(|v| v as f32).collect(),
        };
        let got = lvc_forward(&x, std::slice::from_ref(&set), dilation, hop).unwrap();
        let want = lvc_sample_oracle(&x, std::slice::from_ref(&set), dilation, hop);
        let d = max_abs_diff(&got, &want);
        assert!(d < 1e-6, "case {case}: oracle diff {d}");
    }

    // Degenerate equivalence: identical per-frame kernels collapse to an
    // ordinary gated dilated convolution.
    for case in 0..20 {
        let c = rng.random_range(1..4);
        let lay = LvcLayout {
            out_ch: c,
            in_ch: c,
            kernel: 3,
        };
        let frames = rng.random_range(2..6);
        let hop = rng.random_range(2..9);
        let dilation = rng.random_range(1..6);
        let t = frames * hop;
        let x = Tensor::<f32>::from_vec(
            rand_vec(&mut rng, c * t, 1.0).into_iter().map(|v| v as f32).collect(),
            1,
            c,
            t,
        )
        .unwrap();
        let ke = lay.out_ch * lay.in_ch * lay.kernel;
        let wf: Vec<f32> = rand_vec(&mut rng, ke, 1.0).into_iter().map(|v| v as f32).collect();
        let wg: Vec<f32> = rand_vec(&mut rng, ke, 1.0).into_iter().map(|v| v as f32).collect();
        let bf: Vec<f32> = rand_vec(&mut rng, c, 1.0).into_iter().map(|v| v as f32).collect();
        let bg: Vec<f32> = rand_vec(&mut rng, c, 1.0).into_iter().map(|v| v as f32).collect();
        let set = KernelSet::broadcast(lay, frames, &wf, &wg, &bf, &bg);
        let got = lvc_forward(&x, std::slice::from_ref(&set), dilation, hop).unwrap();

        let cf = ConvWeight::from_direct(wf, c, c, 3, dilation, bf);
        let cg = ConvWeight::from_direct(wg, c, c, 3, dilation, bg);
        let f = pointwise(&conv1d(&x, &cf, Padding::Same).unwrap(), Activation::Tanh).unwrap();
        let g = pointwise(&conv1d(&x, &cg, Padding::Same).unwrap(), Activation::Sigmoid).unwrap();
        let mut want = Tensor::<f32>::zeros(1, c, t);
        for (o, (&a, &b)) in want.data_mut().iter_mut().zip(f.data().iter().zip(g.data())) {
            *o = a * b;
        }
        let d = max_abs_diff(&got, &want);
        assert!(d < 1e-6, "degenerate case {case}: diff {d}");
    }

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 10.0, "criterion 1 took {secs:.1} s (budget 10 s)");
    println!("  130 instances checked in {secs:.2} s");
}

// ---------------------------------------------------------------- C2

fn c2_gradient_correctness() {
    let start = Instant::now();
    for c in Component::ALL {
        let err = run_component(c).unwrap();
        println!("  {:<16} max_rel_error {err:.3e}", c.label());
        assert!(
            err < c.threshold(),
            "{}: {err} >= {}",
            c.label(),
            c.threshold()
        );
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "criterion 2 took {secs:.1} s (budget 60 s)");
}

// ---------------------------------------------------------------- C3

/// Gradient of one output sample of an LVC stack w.r.t. the input, with
/// fixed random per-frame kernels; returns the measured one-sided radius.
fn measure_stack_radius(
    blocks: usize,
    layers: usize,
    channels: usize,
    kernel: usize,
    base: usize,
    hop: usize,
    seed: u64,
) -> usize {
    let lay = LvcLayout {
        out_ch: channels,
        in_ch: channels,
        kernel,
    };
    let per_block: usize = (0..layers).map(|j| (kernel - 1) / 2 * base.pow(j as u32)).sum();
    let radius = blocks * per_block;
    let frames = 2 * radius.div_ceil(hop) + 3;
    let t = frames * hop;
    let t0 = t / 2;
    assert!(t0 >= radius && t0 + radius < t);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::<f64>::new();
    let x_leaf = tape.leaf(
        Tensor::from_vec(rand_vec(&mut rng, channels * t, 0.5), 1, channels, t).unwrap(),
    );
    let mut x = x_leaf;
    for b in 0..blocks {
        let block_in = x;
        for j in 0..layers {
            let kern = tape.constant(
                Tensor::from_vec(
                    rand_vec(&mut rng, lay.block_width() * frames, 0.3),
                    1,
                    lay.block_width(),
                    frames,
                )
                .unwrap(),
            );
            x = tape.lvc(x, kern, lay, base.pow(j as u32), hop).unwrap();
        }
        if b > 0 {
            x = tape.add(x, block_in).unwrap();
        }
    }
    let mut delta = Tensor::<f64>::zeros(1, channels, t);
    delta.set(0, 0, t0, 1.0);
    let dv = tape.constant(delta);
    let picked = tape.mul(x, dv).unwrap();
    let loss = tape.sum_all(picked);
    let grads = tape.backward(loss).unwrap();
    probe_radius(grads.get(x_leaf).unwrap(), t0)
}

fn c3_receptive_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..10 {
        let blocks = rng.random_range(1..3);
        let layers = rng.random_range(1..5);
        let channels = rng.random_range(1..4);
        let kernel = [1usize, 3, 5][rng.random_range(0..3)];
        let base = rng.random_range(2..4);
        let hop = rng.random_range(4..9);
        let cfg = GeneratorConfig {
            blocks,
            layers_per_block: layers,
            residual_channels: channels,
            kernel_size: kernel,
            dilation_base: base,
            hop,
            ..Default::default()
        };
        let formula = receptive_field(&cfg);
        let measured = measure_stack_radius(blocks, layers, channels, kernel, base, hop, 900 + case);
        assert_eq!(
            formula, measured,
            "case {case}: blocks {blocks} layers {layers} k {kernel} base {base}"
        );
    }

    // Paper-scale config: 3 blocks x dilations 1..512, k=3.
    let paper = GeneratorConfig::default();
    let formula = receptive_field(&paper);
    assert_eq!(formula, 3069);
    let measured = measure_stack_radius(3, 10, 8, 3, 2, 256, 42);
    assert_eq!(measured, 3069);
    println!("  10 random configs + paper config (radius 3069) match the probe exactly");
}

// ---------------------------------------------------------------- C4

fn c4_parameter_counts() {
    for (width, target) in [(4usize, 0.47e6), (6, 0.84e6), (8, 1.34e6)] {
        let cfg = GeneratorConfig::with_width(width);
        let breakdown = lvcnet_param_breakdown(&cfg);
        let store = LvcNetGenerator::new(cfg.clone()).init_params::<f32>(0);
        assert_eq!(breakdown.total(), store.total_scalars());
        assert_eq!(breakdown.total(), count_params(&cfg));
        let got = breakdown.total() as f64;
        let rel = (got - target) / target;
        println!("  lvcnet-{width}: {got:.0} vs {target:.0} ({:+.1}%)", rel * 100.0);
        for (name, n) in &breakdown.parts {
            println!("    {name:<26} {n:>9}");
        }
        assert!(rel.abs() < 0.15, "lvcnet-{width} off by {:.1}%", rel * 100.0);
    }
    for (width, target) in [(32usize, 0.44e6), (48, 0.83e6), (64, 1.35e6)] {
        let cfg = PwgConfig::with_width(width);
        let breakdown = pwg_param_breakdown(&cfg);
        assert_eq!(breakdown.total(), pwg_count_params(&cfg));
        let got = breakdown.total() as f64;
        let rel = (got - target) / target;
        println!("  pwg-{width}: {got:.0} vs {target:.0} ({:+.1}%)", rel * 100.0);
        for (name, n) in &breakdown.parts {
            println!("    {name:<26} {n:>9}");
        }
        assert!(rel.abs() < 0.15, "pwg-{width} off by {:.1}%", rel * 100.0);
    }
}

// ---------------------------------------------------------------- C5

fn c5_relative_speed() {
    let spec = BenchSpec {
        duration_secs: 10.0,
        repeats: 5,
        warmup: 1,
        seed: 17,
        threads: 1,
    };
    let (rows, ratio) = bench_report(&[ModelVariant::Pwg(64), ModelVariant::Lvcnet(8)], &spec).unwrap();
    for r in &rows {
        println!(
            "  {:<10} rtf_median {:.4} rtf_p90 {:.4} ({} params)",
            r.variant, r.rtf_median, r.rtf_p90, r.params
        );
    }
    let ratio = ratio.expect("both variants present");
    println!("  rtf(pwg-64) / rtf(lvcnet-8) = {ratio:.2} (required >= 3.0)");
    assert!(ratio >= 3.0, "speed ratio {ratio:.2} below 3.0");

    // Secondary check: within each family, RTF grows with width.
    let quick = BenchSpec {
        duration_secs: 1.5,
        repeats: 3,
        warmup: 1,
        seed: 17,
        threads: 1,
    };
    let (rows, _) = bench_report(&ModelVariant::ALL, &quick).unwrap();
    let rtf = |label: &str| rows.iter().find(|r| r.variant == label).unwrap().rtf_median;
    assert!(rtf("lvcnet-4") < rtf("lvcnet-6") && rtf("lvcnet-6") < rtf("lvcnet-8"));
    assert!(rtf("pwg-32") < rtf("pwg-48") && rtf("pwg-48") < rtf("pwg-64"));
    println!("  RTF is monotone in width within each family");
}

// ---------------------------------------------------------------- C6

/// Deterministic 3-second test clip: vibrato harmonics over a -34 dB
/// noise floor.
fn training_clip() -> Waveform {
    let n = 3 * SAMPLE_RATE as usize;
    let noise = gaussian_noise::<f64>(1, 1, n, 99);
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let f0 = 180.0 + 20.0 * (2.0 * std::f64::consts::PI * 2.0 * t).sin();
            let ph = 2.0 * std::f64::consts::PI * f0 * t;
            let harm = 0.4 * ph.sin() + 0.2 * (2.0 * ph).sin() + 0.1 * (3.0 * ph).sin();
            (harm + 0.02 * noise.data()[i]) as f32
        })
        .collect();
    Waveform::new(samples, SAMPLE_RATE)
}

fn c6_toy_training() {
    let start = Instant::now();
    let wave = training_clip();
    assert!(wave.duration_secs() >= 3.0);
    let mel = mel_spectrogram(&wave).unwrap();
    let cfg = TrainConfig {
        warmup_steps: 500,
        ..Default::default()
    };
    let clips = vec![Clip::from_pair(&wave, &mel)];
    let mut trainer = Trainer::<f64>::new(cfg, clips, 42).unwrap();
    let curve = trainer.run(700).unwrap();

    let early: f64 = curve[..10].iter().map(|l| l.combined_stft()).sum::<f64>() / 10.0;
    let late: f64 = curve[490..500].iter().map(|l| l.combined_stft()).sum::<f64>() / 10.0;
    let drop = 1.0 - late / early;
    println!(
        "  500 generator-only steps: combined stft {early:.3} -> {late:.3} ({:.1}% drop, >= 50% required)",
        drop * 100.0
    );
    assert!(drop >= 0.5, "loss drop {:.1}% below 50%", drop * 100.0);

    for l in &curve[500..] {
        assert!(
            l.stft_sc.is_finite()
                && l.stft_mag.is_finite()
                && l.g_adv.is_finite()
                && l.d_loss.is_finite(),
            "non-finite loss at adversarial step {}",
            l.step
        );
    }
    let adv = &curve[699];
    println!(
        "  200 adversarial steps finite: sc {:.3} mag {:.3} g_adv {:.3} d {:.3}",
        adv.stft_sc, adv.stft_mag, adv.g_adv, adv.d_loss
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 900.0, "criterion 6 took {secs:.0} s (budget 900 s)");
    println!("  completed in {secs:.0} s (budget 900 s)");
}

// ---------------------------------------------------------------- C7

fn c7_determinism_roundtrips() {
    // Fixed-seed synthesis from independently constructed state is
    // bit-identical.
    let cfg = GeneratorConfig {
        blocks: 2,
        layers_per_block: 3,
        residual_channels: 4,
        cond_channels: 80,
        hop: 32,
        ..Default::default()
    };
    let mel = gaussian_noise::<f32>(1, 80, 12, 7).map(|v| v - 2.0);
    let synth = |_: ()| {
        let gen = LvcNetGenerator::new(cfg.clone());
        let store = gen.init_params::<f32>(5);
        gen.synthesize(&store, &mel, 9).unwrap()
    };
    let a = synth(());
    let b = synth(());
    assert!(
        a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()),
        "synthesis not bit-identical"
    );

    // Checkpoint bytes survive a load/save cycle.
    let store = LvcNetGenerator::new(cfg.clone()).init_params::<f32>(5);
    let mut bytes = Vec::new();
    save_checkpoint(&store, &mut bytes).unwrap();
    let loaded = load_checkpoint(&mut bytes.as_slice()).unwrap();
    let mut bytes2 = Vec::new();
    save_checkpoint(&loaded, &mut bytes2).unwrap();
    assert_eq!(bytes, bytes2, "checkpoint round-trip not byte-exact");

    // MEL1 and WAV round-trips are byte-exact.
    let dir = tempfile::tempdir().unwrap();
    let wav = training_clip();
    let m = mel_spectrogram(&wav).unwrap();
    let p1 = dir.path().join("a.mel");
    let p2 = dir.path().join("b.mel");
    write_mel(&p1, &m).unwrap();
    let m2 = read_mel(&p1).unwrap();
    write_mel(&p2, &m2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let w1 = dir.path().join("a.wav");
    let w2 = dir.path().join("b.wav");
    save_wav(&w1, &wav).unwrap();
    let decoded = load_wav(&w1).unwrap();
    save_wav(&w2, &decoded).unwrap();
    assert_eq!(std::fs::read(&w1).unwrap(), std::fs::read(&w2).unwrap());

    // Resumed training reproduces the trajectory bit-wise (f64).
    let tcfg = TrainConfig {
        generator: GeneratorConfig {
            blocks: 2,
            layers_per_block: 2,
            residual_channels: 2,
            cond_channels: 6,
            hop: 16,
            kp_hidden: 5,
            kp_expand: 6,
            kp_residual_layers: 1,
            ..Default::default()
        },
        discriminator: DiscriminatorConfig {
            layers: 3,
            kernel_size: 3,
            channels: 4,
            leaky_alpha: 0.2,
        },
        stft_loss: StftLossConfig {
            resolutions: vec![(32, 8, 24)],
        },
        warmup_steps: 2,
        crop_frames: 9,
        ..Default::default()
    };
    let clips = || {
        vec![Clip::<f64> {
            wave: gaussian_noise::<f64>(1, 1, 20 * 16, 2).map(|v| v * 0.3),
            mel: gaussian_noise::<f64>(1, 6, 20, 1),
        }]
    };
    let full = Trainer::<f64>::new(tcfg.clone(), clips(), 11).unwrap().run(6).unwrap();
    let mut half = Trainer::<f64>::new(tcfg.clone(), clips(), 11).unwrap();
    half.run(3).unwrap();
    let mut state_bytes = Vec::new();
    save_train_state(&half.state, &mut state_bytes).unwrap();
    let restored = load_train_state(&mut state_bytes.as_slice(), &tcfg).unwrap();
    let tail = Trainer::from_state(tcfg, clips(), restored).unwrap().run(3).unwrap();
    assert_eq!(&full[3..], tail.as_slice(), "resumed curve diverged");
    println!("  synthesis, checkpoint, MEL1, WAV, and training-resume all exact");
}

// ---------------------------------------------------------------- C8

fn c8_locality() {
    // (a) Kernel-set perturbation touches only its interval.
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let lay = LvcLayout {
        out_ch: 3,
        in_ch: 3,
        kernel: 3,
    };
    let (frames, hop, dilation) = (6, 8, 4);
    let ke = lay.out_ch * lay.in_ch * lay.kernel;
    let x = Tensor::<f64>::from_vec(rand_vec(&mut rng, 3 * frames * hop, 1.0), 1, 3, frames * hop)
        .unwrap();
    let mut set = KernelSet::<f64> {
        layout: lay,
        frames,
        wf: rand_vec(&mut rng, frames * ke, 1.0),
        wg: rand_vec(&mut rng, frames * ke, 1.0),
        bf: rand_vec(&mut rng, frames * lay.out_ch, 1.0),
        bg: rand_vec(&mut rng, frames * lay.out_ch, 1.0),
    };
    let base = lvc_forward(&x, std::slice::from_ref(&set), dilation, hop).unwrap();
    let target = 3usize;
    set.wf[target * ke + 4] += 0.7;
    set.bg[target * lay.out_ch] -= 0.4;
    let bumped = lvc_forward(&x, std::slice::from_ref(&set), dilation, hop).unwrap();
    let mut touched = false;
    for c in 0..3 {
        for t in 0..frames * hop {
            let d = (base.at(0, c, t) - bumped.at(0, c, t)).abs();
            if t / hop == target {
                touched |= d > 0.0;
            } else {
                assert_eq!(d, 0.0, "kernel perturbation leaked to t={t}");
            }
        }
    }
    assert!(touched);

    // (b) Mel-frame perturbation stays within its interval dilated by the
    // receptive radius plus the 2-frame predictor context per side.
    let cfg = GeneratorConfig {
        blocks: 2,
        layers_per_block: 3,
        residual_channels: 4,
        cond_channels: 80,
        hop: 16,
        ..Default::default()
    };
    let radius = receptive_field(&cfg); // 2 * (1+2+4) = 14
    let gen = LvcNetGenerator::new(cfg.clone());
    let store = gen.init_params::<f64>(3);
    let mel_frames = 24;
    let usable = mel_frames - cfg.frame_trim();
    let t_len = usable * cfg.hop;
    let mel = gaussian_noise::<f64>(1, 80, mel_frames, 4);
    let noise = gaussian_noise::<f64>(1, 1, t_len, 5);
    let mut eng = DirectEngine::new(&store);
    let base = gen.forward(&mut eng, &noise, &mel).unwrap();
    let frame = 10usize;
    let mut mel_pert = mel.clone();
    for c in 0..20 {
        let v = mel_pert.at(0, c * 4, frame);
        mel_pert.set(0, c * 4, frame, v + 0.5);
    }
    let bumped = gen.forward(&mut eng, &noise, &mel_pert).unwrap();
    let lo = ((frame - cfg.frame_trim()) * cfg.hop).saturating_sub(radius);
    let hi = ((frame + 1) * cfg.hop + radius).min(t_len);
    let mut inside = false;
    for t in 0..t_len {
        let d = (base.at(0, 0, t) - bumped.at(0, 0, t)).abs();
        if t >= lo && t < hi {
            inside |= d > 0.0;
        } else {
            assert_eq!(d, 0.0, "mel perturbation leaked to t={t} (allowed [{lo},{hi}))");
        }
    }
    assert!(inside, "mel perturbation had no effect at all");

    // (c) Input perturbation respects the dilation-sum radius through an
    // LVC stack with fixed kernels.
    let lay = LvcLayout {
        out_ch: 2,
        in_ch: 2,
        kernel: 3,
    };
    let (blocks, layers, base_dil, hop) = (2usize, 3usize, 2usize, 8usize);
    let radius: usize = blocks * (0..layers).map(|j| base_dil.pow(j as u32)).sum::<usize>();
    let frames = 2 * radius.div_ceil(hop) + 3;
    let t_len = frames * hop;
    let x0 = Tensor::<f64>::from_vec(rand_vec(&mut rng, 2 * t_len, 0.5), 1, 2, t_len).unwrap();
    let kerns: Vec<Vec<Tensor<f64>>> = (0..blocks)
        .map(|_| {
            (0..layers)
                .map(|_| {
                    Tensor::from_vec(
                        rand_vec(&mut rng, lay.block_width() * frames, 0.3),
                        1,
                        lay.block_width(),
                        frames,
                    )
                    .unwrap()
                })
                .collect()
        })
        .collect();
    let run_stack = |input: &Tensor<f64>| {
        let store = ParamStore::<f64>::new();
        let mut tape = Tape::new();
        let mut eng = TapeEngine::new(&mut tape, &store);
        let mut x = eng.constant(input.clone());
        for (b, block) in kerns.iter().enumerate() {
            let xin = x;
            for (j, k) in block.iter().enumerate() {
                let kv = eng.constant(k.clone());
                x = eng
                    .lvc(&x, &kv, lay, base_dil.pow(j as u32), hop)
                    .unwrap();
            }
            if b > 0 {
                x = eng.add(&x, &xin).unwrap();
            }
        }
        tape.value(x).clone()
    };
    let base_out = run_stack(&x0);
    let s = t_len / 2;
    let mut x1 = x0.clone();
    x1.set(0, 1, s, x1.at(0, 1, s) + 0.25);
    let bumped_out = run_stack(&x1);
    for c in 0..2 {
        for t in 0..t_len {
            let d = (base_out.at(0, c, t) - bumped_out.at(0, c, t)).abs();
            if t.abs_diff(s) > radius {
                assert_eq!(d, 0.0, "input perturbation leaked to t={t} (radius {radius})");
            }
        }
    }
    println!("  kernel-interval, mel-frame, and input-radius locality all hold");
}

// ----------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Box<dyn Fn()>)> = vec![
        ("1 oracle equivalence", Box::new(c1_oracle_equivalence)),
        ("2 gradient correctness", Box::new(c2_gradient_correctness)),
        ("3 receptive field", Box::new(c3_receptive_field)),
        ("4 parameter counts", Box::new(c4_parameter_counts)),
        ("5 relative speed", Box::new(c5_relative_speed)),
        ("6 toy training", Box::new(c6_toy_training)),
        ("7 determinism & round-trips", Box::new(c7_determinism_roundtrips)),
        ("8 locality suite", Box::new(c8_locality)),
    ];
    let mut failures = Vec::new();
    for (name, f) in criteria {
        let start = Instant::now();
        println!("criterion {name}:");
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(()) => println!("PASS criterion {name} ({:.1} s)", start.elapsed().as_secs_f64()),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                println!("FAIL criterion {name}: {msg}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
