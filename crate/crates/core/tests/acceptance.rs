//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p msma-core --test acceptance -- --nocapture` to see
//! the report. The test fails if any criterion fails.

mod support;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use msma_core::datastore::{decode_tensor, encode_tensor, load_dataset, synth_dataset, synth_dataset_with, Split, SynthConfig};
use msma_core::diffcore::{Tape, Tensor};
use msma_core::frontend::{mfcc, AudioClip, MfccConfig};
use msma_core::fusion::{cross_attention_with_weights, CrossAttentionParams};
use msma_core::mas::{expand_group, MasConfig, Sample, Scenario, GROUP_SIZE};
use msma_core::metrics::{average_of, evaluate, robustness_report, trait_accuracy, MetricsInput, Predictor};
use msma_core::trainer::{lr_at_epoch, train_on, Checkpoint, EpochRecord, TrainConfig};
use msma_core::{BigFiveScores, Error, Trait};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::grad_suite;
use support::mfcc_ref::{reference_mfcc, sine};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_secs as f64,
        format!("took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64()),
    )
}

fn random(dims: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        seed: 7,
        initial_lr: 0.5,
        epochs: 3,
        milestones: vec![2],
        frames: 2,
        image_size: 8,
        width: 8,
        visual_channels: vec![4, 4],
        audio_channels: 4,
        audio_stride: 4,
        ..TrainConfig::default()
    }
}

fn train(train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> (Checkpoint, Vec<EpochRecord>) {
    let mut hist = Vec::new();
    let ckpt = train_on(train, val, cfg, &mut |r| hist.push(r.clone())).unwrap();
    (ckpt, hist)
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut results = Vec::new();
    for case in grad_suite::ALL {
        case(&mut results);
    }
    let worst = results.iter().map(|o| o.worst).fold(0.0, f64::max);
    for o in &results {
        ensure(o.pass, format!("{} worst relative error {:e}", o.what, o.worst))?;
    }
    within(start.elapsed(), 120)?;
    Ok(format!("{} checks, worst relative error {worst:.2e}", results.len()))
}

fn attention_oracle() -> Outcome {
    let mut tape = Tape::new();
    let eye = || Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let (wq, wk, wv) = (tape.constant(eye()), tape.constant(eye()), tape.constant(eye()));
    let p = CrossAttentionParams::from_vars(&tape, wq, wk, wv).unwrap();
    let fq = tape.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
    let fkv = tape.constant(Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap());
    let (out, _) = cross_attention_with_weights(&mut tape, fq, fkv, &p).unwrap();
    let got = tape.value(out).values().to_vec();
    let dev = got.iter().zip([0.6698, 0.3302]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(dev < 1e-4, format!("output {got:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_row: f64 = 0.0;
    for _ in 0..1000 {
        let (n, m, d, dk) = (
            rng.random_range(1..5),
            rng.random_range(1..7),
            rng.random_range(1..6),
            rng.random_range(1..4),
        );
        let mut tape = Tape::new();
        let wq = tape.constant(random(&[d, dk], 3.0, &mut rng));
        let wk = tape.constant(random(&[d, dk], 3.0, &mut rng));
        let wv = tape.constant(random(&[d, 2], 1.0, &mut rng));
        let p = CrossAttentionParams::from_vars(&tape, wq, wk, wv).unwrap();
        let fq = tape.constant(random(&[n, d], 1.0, &mut rng));
        let fkv = tape.constant(random(&[m, d], 1.0, &mut rng));
        let (_, w) = cross_attention_with_weights(&mut tape, fq, fkv, &p).unwrap();
        for row in tape.value(w).values().chunks(m) {
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(worst_row < 1e-6, format!("row sum off by {worst_row:e}"))?;
    Ok(format!("output [{:.4}, {:.4}], worst row-sum error {worst_row:.1e}", got[0], got[1]))
}

fn metric_arithmetic() -> Outcome {
    let avg = average_of(&[0.920, 0.916, 0.913, 0.918, 0.915]);
    ensure(format!("{avg:.4}") == "0.9164", format!("average {avg}"))?;

    let rows = vec![[0.1, 0.5, 0.9, 0.3, 0.7], [0.2, 0.4, 0.6, 0.8, 1.0]];
    let perfect = MetricsInput::new(rows.clone(), rows).unwrap();
    for t in Trait::ALL {
        ensure(trait_accuracy(&perfect, t).unwrap() == 1.0, "perfect predictions do not score 1.0")?;
    }
    let errs = MetricsInput::new(vec![[0.1; 5], [0.3; 5]], vec![[0.0; 5]; 2]).unwrap();
    for t in Trait::ALL {
        let a = trait_accuracy(&errs, t).unwrap();
        ensure(a == 0.8, format!("errors 0.1, 0.3 give {a}"))?;
    }
    Ok(format!("average {avg:.4}; identities exact"))
}

fn lr_schedule() -> Outcome {
    let cfg = TrainConfig::default();
    let expect = [(0, 0.04), (30, 0.004), (45, 0.0004), (55, 0.00004), (60, 0.000004)];
    for (epoch, lr) in expect {
        let got = lr_at_epoch(epoch, &cfg).unwrap();
        ensure(got == lr, format!("epoch {epoch}: {got} != {lr}"))?;
    }
    Ok("0.04 / 0.004 / 0.0004 / 0.00004 / 0.000004 at 0 / 30 / 45 / 55 / 60".into())
}

fn mfcc_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = MfccConfig::default();
    let x = sine(440.0, 1.0, 16_000);
    let ours = mfcc(&AudioClip::new(x.clone(), 16_000).unwrap(), &cfg).unwrap();
    let reference = reference_mfcc(&x, &cfg);
    ensure(ours.frames() == reference.len(), "frame counts differ")?;
    let mut worst: f64 = 0.0;
    for (t, row) in reference.iter().enumerate() {
        for (a, b) in ours.row(t).iter().zip(row) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-3, format!("max deviation {worst:e}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("{} frames, max deviation {worst:.1e}", ours.frames()))
}

/// Desk configuration with a faster schedule, fit to all 16 samples.
fn overfit_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        initial_lr: 2.0,
        epochs: 300,
        milestones: vec![200, 250, 280],
        ..TrainConfig::default()
    }
}

fn capacity() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = overfit_config();
    let manifest = synth_dataset(dir.path(), 16, 7).unwrap();
    let samples = load_dataset(&manifest, &cfg.frontend(), None).unwrap().all_samples();
    let (ckpt, _) = train(&samples, &[], &cfg);
    let avg = average_of(&evaluate(&ckpt, &samples).unwrap());
    ensure(avg >= 0.98, format!("training-set average accuracy {avg:.4}"))?;
    within(start.elapsed(), 300)?;
    Ok(format!("training-set average accuracy {avg:.4} in {:.0}s", start.elapsed().as_secs_f64()))
}

fn robustness_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        initial_lr: 2.0,
        epochs: 60,
        milestones: vec![40, 52],
        frames: 4,
        image_size: 16,
        ..TrainConfig::default()
    }
}

fn mas_robustness() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let base = robustness_config();
    let manifest = synth_dataset_with(dir.path(), 200, 11, &SynthConfig::default()).unwrap();
    let data = load_dataset(&manifest, &base.frontend(), None).unwrap();
    let (tr, va, te) = (data.samples(Split::Train), data.samples(Split::Val), data.samples(Split::Test));
    let mut wins = 0;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut diffs = Vec::new();
    for seed in 1..=3 {
        let mut scores = Vec::new();
        for use_mas in [true, false] {
            let cfg = TrainConfig { seed, use_mas, ..base.clone() };
            let (ckpt, _) = train(&tr, &va, &cfg);
            let report = robustness_report(&ckpt, "m", &te, 5).unwrap();
            scores.push((
                report.non_ideal_mean().average,
                report.row(Scenario::OnlyVideo).average,
                report.row(Scenario::OnlyAudio).average,
            ));
        }
        let (mas, plain) = (scores[0], scores[1]);
        let diff = mas.0 - plain.0;
        diffs.push(diff);
        if diff >= 0.05 {
            wins += 1;
        }
        if mas.1 <= plain.1 || mas.2 <= plain.2 {
            failures.push(format!("seed {seed}: only-video/only-audio not above baseline"));
        }
        lines.push(format!(
            "seed {seed}: non-ideal {:.4} vs {:.4} (diff {diff:+.4}), only-video {:.4} vs {:.4}, only-audio {:.4} vs {:.4}",
            mas.0, plain.0, mas.1, plain.1, mas.2, plain.2
        ));
    }
    for l in &lines {
        println!("      {l}");
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    ensure(wins >= 2, format!("gap >= 0.05 in only {wins} of 3 seeds (mean gap {mean:.4})"))?;
    ensure(failures.is_empty(), failures.join("; "))?;
    within(start.elapsed(), 1200)?;
    Ok(format!("gap >= 0.05 in {wins}/3 seeds, mean gap {mean:.4}, {:.0}s", start.elapsed().as_secs_f64()))
}

fn mas_mechanics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = Sample {
        visual: random(&[2, 3, 4, 4], 0.5, &mut rng).map(|v| v + 0.5),
        audio: random(&[12, 10], 4.0, &mut rng),
        label: BigFiveScores::new([0.1, 0.3, 0.5, 0.7, 0.9]).unwrap(),
    };
    let g = expand_group(&s, &mut rng, &MasConfig::default());
    ensure(g.forms().len() == GROUP_SIZE, format!("{} forms", g.forms().len()))?;
    ensure(g.forms().iter().all(|f| f.label == s.label), "labels differ within a group")?;
    ensure(g.forms()[1].audio.values().iter().all(|&v| v == 0.0), "audio-empty form is not all zero")?;
    ensure(g.forms()[2].visual.values().iter().all(|&v| v == 0.0), "visual-empty form is not all zero")?;

    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(dir.path(), 10, 17).unwrap();
    let train_set = load_dataset(&manifest, &tiny_config().frontend(), None).unwrap().samples(Split::Train);
    let (_, with) = train(&train_set, &[], &tiny_config());
    let (_, without) = train(&train_set, &[], &TrainConfig { use_mas: false, ..tiny_config() });
    let n = train_set.len();
    ensure(with.iter().all(|r| r.samples_seen == 6 * n), "MAS epoch is not 6x the base size")?;
    ensure(without.iter().all(|r| r.samples_seen == n), "plain epoch is not the base size")?;
    Ok(format!("6 forms, zeroed forms all zero, {} vs {n} samples per epoch", 6 * n))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(&dir.path().join("data"), 10, 17).unwrap();
    let data = load_dataset(&manifest, &tiny_config().frontend(), None).unwrap();
    let (tr, va) = (data.samples(Split::Train), data.samples(Split::Val));
    for i in 0..2 {
        let (ckpt, _) = train(&tr, &va, &tiny_config());
        ckpt.save(&dir.path().join(format!("run{i}"))).unwrap();
    }
    ensure(tree(&dir.path().join("run0")) == tree(&dir.path().join("run1")), "checkpoints differ")?;
    let ckpt = Checkpoint::load(&dir.path().join("run0")).unwrap();
    let test = data.samples(Split::Test);
    let a = robustness_report(&ckpt, "m", &test, 4).unwrap().to_json();
    let b = robustness_report(&ckpt, "m", &test, 4).unwrap().to_json();
    ensure(a == b, "robustness reports differ")?;
    Ok("checkpoints and robustness reports byte-identical".into())
}

fn persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let specials = [0.0, -0.0, f32::MIN_POSITIVE as f64, 1e-40f32 as f64, f32::MAX as f64, -3.5];
    for dims in [vec![7], vec![2, 3], vec![2, 3, 4, 5]] {
        let n: usize = dims.iter().product();
        let values = (0..n)
            .map(|i| specials.get(i).copied().unwrap_or_else(|| rng.random_range(-10.0f32..10.0) as f64))
            .collect();
        let t = Tensor::new(dims, values).unwrap();
        let back = decode_tensor(&encode_tensor(&t).unwrap()).unwrap();
        ensure(back.dims() == t.dims(), "dims changed")?;
        let same = t.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, "tensor values changed")?;
    }
    let good = encode_tensor(&Tensor::vector(vec![0.25; 4])).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[..4].copy_from_slice(b"NOPE");
    ensure(matches!(decode_tensor(&bad_magic), Err(Error::Format(_))), "bad magic is not a format error")?;
    for cut in [1, 4, good.len() - 8] {
        let short = &good[..good.len() - cut];
        ensure(matches!(decode_tensor(short), Err(Error::Corruption(_))), "truncation is not corruption")?;
    }

    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(&dir.path().join("data"), 10, 17).unwrap();
    let data = load_dataset(&manifest, &tiny_config().frontend(), None).unwrap();
    let (ckpt, _) = train(&data.samples(Split::Train), &[], &tiny_config());
    let out = dir.path().join("ckpt");
    ckpt.save(&out).unwrap();
    let loaded = Checkpoint::load(&out).unwrap();
    for s in data.all_samples() {
        let (a, b) = (ckpt.predict(&s).unwrap(), loaded.predict(&s).unwrap());
        let same = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same, "reloaded checkpoint predicts differently")?;
    }
    Ok("tensor round-trip bit-exact, header errors classified, reloaded outputs bit-exact".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("cross-attention oracle", attention_oracle),
        ("metric arithmetic", metric_arithmetic),
        ("learning-rate schedule", lr_schedule),
        ("MFCC oracle", mfcc_oracle),
        ("capacity/overfit", capacity),
        ("MAS robustness", mas_robustness),
        ("MAS mechanics", mas_mechanics),
        ("determinism", determinism),
        ("persistence", persistence),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
