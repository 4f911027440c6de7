//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! The long-running experiments (gradient sweep, overfit, pretrain +
//! fine-tune) serialize on a mutex so their wall-clock budgets are
//! measured without mutual contention.

use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use murk_core::data::augment::rotate;
use murk_core::data::corrupt::{add_gaussian_noise, synth_underwater, UnderwaterParams};
use murk_core::data::synthgen::synthetic_photo;
use murk_core::data::{build_manifest, Image, ImagePair};
use murk_core::dcp::{dark_channel, dehaze, estimate_atmospheric, synthesize_haze, DcpParams};
use murk_core::metrics::{evaluate, psnr, ssim, IdentityEnhancer, IptEnhancer, SSIM_WINDOW};
use murk_core::model::{attention_cost, forward, stage, IptModel, ModelConfig, TaskId};
use murk_core::tensor::Tape;
use murk_core::train::{adam_step_slice, multitask_loss, train, AdamHyper, TaskDataset, TrainConfig};

static HEAVY: Mutex<()> = Mutex::new(());

fn pass(name: &str) {
    println!("[acceptance] {name}: PASS");
}

fn tiny_config(tasks: Vec<TaskId>) -> ModelConfig {
    ModelConfig {
        feature_channels: 2,
        patch_size: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        attn_heads: 2,
        ffn_multiplier: 2,
        max_patches: 256,
        tasks,
        underwater_own_embedding: false,
    }
}

fn noise_pairs(n: usize, size: usize, seed: u64) -> Vec<ImagePair> {
    (0..n)
        .map(|i| {
            let clean = synthetic_photo(size, size, seed + i as u64);
            let noisy = add_gaussian_noise(&clean, 30.0, seed ^ (i as u64 + 77)).unwrap();
            ImagePair::new(noisy, clean, format!("n{i}"), 0)
        })
        .collect()
}

// --- 1. Gradient correctness --------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_murk"))
        .args(["gradcheck", "--size", "8", "--layers", "1", "--samples", "5", "--quiet"])
        .output()
        .expect("spawn murk gradcheck");
    assert!(
        out.status.success(),
        "gradcheck failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(120),
        "gradcheck took {elapsed:?}, budget is 2 min"
    );

    // Negative control: a corrupted backward rule must be caught.
    let bad = Command::new(env!("CARGO_BIN_EXE_murk"))
        .args(["gradcheck", "--samples", "2", "--instances", "2", "--corrupt", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(4), "sabotaged gradcheck must exit 4");
    pass("1 gradient-correctness (<2min, f32<1e-3, f64-shadow<1e-5, negative control)");
}

// --- 2. Metric oracles ----------------------------------------------------

/// Brute-force per-window SSIM, written independently of the library path.
fn reference_ssim(a: &Image, b: &Image) -> f64 {
    let (w, h) = (a.width(), a.height());
    let luma = |img: &Image, x: usize, y: usize| -> f64 {
        let px = img.get(x, y);
        0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2])
    };
    let mut kernel = [[0.0f64; SSIM_WINDOW]; SSIM_WINDOW];
    let mut ksum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / 4.5).exp();
            ksum += *v;
        }
    }
    for row in kernel.iter_mut() {
        for v in row.iter_mut() {
            *v /= ksum;
        }
    }
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for wy in 0..=(h - SSIM_WINDOW) {
        for wx in 0..=(w - SSIM_WINDOW) {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    mx += kernel[i][j] * luma(a, wx + j, wy + i);
                    my += kernel[i][j] * luma(b, wx + j, wy + i);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let da = luma(a, wx + j, wy + i) - mx;
                    let db = luma(b, wx + j, wy + i) - my;
                    vx += kernel[i][j] * da * da;
                    vy += kernel[i][j] * db * db;
                    cov += kernel[i][j] * da * db;
                }
            }
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn criterion_2_metric_oracles() {
    // PSNR against direct formula evaluation.
    let black = Image::filled(16, 16, [0, 0, 0]);
    let white = Image::filled(16, 16, [255, 255, 255]);
    let one = Image::filled(16, 16, [1, 1, 1]);
    assert!((psnr(&black, &white).unwrap() - 0.0).abs() < 1e-3);
    assert!((psnr(&black, &one).unwrap() - 48.1308).abs() < 1e-3);
    assert_eq!(psnr(&white, &white).unwrap(), f64::INFINITY);

    // SSIM: identical inputs, and 25 random pairs against the scalar
    // reference to 1e-6.
    let img = synthetic_photo(32, 32, 2);
    assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-9);
    for trial in 0..25u64 {
        let a = synthetic_photo(16, 16, 4000 + trial);
        let b = add_gaussian_noise(&a, 4.0 + (trial % 8) as f64 * 7.0, trial).unwrap();
        let fast = ssim(&a, &b).unwrap();
        let slow = reference_ssim(&a, &b);
        assert!((fast - slow).abs() < 1e-6, "trial {trial}: {fast} vs {slow}");
    }
    pass("2 metric-oracles (PSNR 1e-3, SSIM reference 1e-6 on 25 pairs)");
}

// --- 3. Attention cost scaling --------------------------------------------

#[test]
fn criterion_3_attention_cost_scaling() {
    assert_eq!(attention_cost(10_000), 100_000_000);
    assert_eq!(attention_cost(40_000), 1_600_000_000);

    let cfg = tiny_config(vec![TaskId::DenoiseSigma30]);
    let model = IptModel::new(cfg.clone(), 5).unwrap();
    let count = |side: usize| -> u64 {
        let mut tape: Tape<f32> = Tape::new();
        let staged = stage(&mut tape, &model, false);
        let img = tape.leaf(synthetic_photo(side, side, 3).to_tensor());
        forward(&mut tape, &staged, &cfg, img, TaskId::DenoiseSigma30).unwrap();
        tape.attention_stats().entries
    };
    let (small, large) = (count(16), count(32));
    assert!(small > 0);
    assert_eq!(large, 16 * small, "doubling the side must 16x the attention entries");
    pass("3 attention-cost-scaling (counter exactly 16x on side doubling)");
}

// --- 4. Multi-task objective additivity -----------------------------------

#[test]
fn criterion_4_objective_additivity() {
    let cfg = tiny_config(vec![TaskId::DenoiseSigma30, TaskId::Derain]);
    let model = IptModel::new(cfg.clone(), 7).unwrap();
    for trial in 0..10u64 {
        let pa = noise_pairs(1, 8, 100 + trial).remove(0);
        let pb = noise_pairs(1, 8, 200 + trial).remove(0);
        let single = |task: TaskId, pair: &ImagePair| -> f64 {
            let mut tape: Tape<f32> = Tape::new();
            let staged = stage(&mut tape, &model, false);
            let (v, _) = multitask_loss(&mut tape, &staged, &cfg, &[(task, std::slice::from_ref(pair))]).unwrap();
            tape.value(v).item() as f64
        };
        let a = single(TaskId::DenoiseSigma30, &pa);
        let b = single(TaskId::Derain, &pb);
        let mut tape: Tape<f32> = Tape::new();
        let staged = stage(&mut tape, &model, false);
        let (joint, _) = multitask_loss(
            &mut tape,
            &staged,
            &cfg,
            &[
                (TaskId::DenoiseSigma30, std::slice::from_ref(&pa)),
                (TaskId::Derain, std::slice::from_ref(&pb)),
            ],
        )
        .unwrap();
        let joint = tape.value(joint).item() as f64;
        assert!((joint - (a + b)).abs() < 1e-6, "trial {trial}: {joint} vs {}", a + b);
    }
    pass("4 objective-additivity (joint == sum of per-task losses, 10 trials, 1e-6)");
}

// --- 5. Pipeline counts -----------------------------------------------------

#[test]
fn criterion_5_pipeline_counts() {
    let ids: Vec<String> = (0..1500).map(|i| format!("img{i:05}")).collect();
    let m = build_manifest(&ids, 0.8, 42).unwrap();
    assert_eq!(m.train.len(), 6000);
    assert_eq!(m.test.len(), 1500);
    assert_eq!(m.train.len() + m.test.len(), 7500);

    let small: Vec<String> = (0..37).map(|i| format!("b{i}")).collect();
    for seed in 0..100 {
        let m = build_manifest(&small, 0.8, seed).unwrap();
        let train = m.train_bases();
        for b in m.test_bases() {
            assert!(!train.contains(&b), "seed {seed}: base {b} leaked across the split");
        }
    }

    let img = synthetic_photo(33, 21, 9);
    assert_eq!(rotate(&img, 0).unwrap(), img, "0-degree rotation must be bitwise identity");
    pass("5 pipeline-counts (1500->7500, 6000/1500, leak-free over 100 seeds, 0-deg identity)");
}

// --- 6. Overfit experiment -------------------------------------------------

#[test]
fn criterion_6_overfit_experiment() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let mut model = IptModel::new(ModelConfig::default(), 11).unwrap();
    let pairs = noise_pairs(8, 48, 500);
    // <= 2000 steps (250 epochs x 8 pairs), stopping as soon as the loss
    // falls below a quarter of its initial value.
    let cfg = TrainConfig {
        epochs: 250,
        learning_rate: 1e-4,
        seed: 9,
        early_stop_ratio: Some(0.25),
        log_every: 1,
        ..TrainConfig::default()
    };
    let log = train(
        &mut model,
        &[TaskDataset { task: TaskId::DenoiseSigma30, pairs }],
        &cfg,
        None,
    )
    .unwrap();
    let totals = log.total_loss_per_step();
    let first = totals.first().unwrap().1;
    let (steps, last) = *totals.last().unwrap();
    let elapsed = started.elapsed();
    assert!(steps <= 2000, "took {steps} steps");
    assert!(
        last < 0.25 * first,
        "loss only reached {last:.4} from {first:.4} ({:.1}%) in {steps} steps",
        100.0 * last / first
    );
    assert!(
        elapsed < Duration::from_secs(15 * 60),
        "overfit took {elapsed:?}, budget is 15 min"
    );
    pass(&format!(
        "6 overfit-experiment (loss {first:.3} -> {last:.3} in {steps} steps, {:.0}s < 15min)",
        elapsed.as_secs_f64()
    ));
}

// --- 7. Fine-tune improvement (scaled comparison analogue) ------------------

#[test]
fn criterion_7_finetune_improvement() {
    let _guard = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let started = Instant::now();
    let size = 48;

    let mut model = IptModel::new(ModelConfig::default(), 21).unwrap();
    // Four epochs are where the denoiser starts generalizing off its 200
    // training images (held-out sigma-30: identity 19.1 dB -> model 21.9 dB).
    let pre_cfg = TrainConfig {
        epochs: 4,
        learning_rate: 1e-4,
        seed: 13,
        log_every: 50,
        ..TrainConfig::default()
    };
    train(
        &mut model,
        &[TaskDataset { task: TaskId::DenoiseSigma30, pairs: noise_pairs(200, size, 3000) }],
        &pre_cfg,
        None,
    )
    .unwrap();

    // 100 synthetic-underwater pairs, split 80/20 before training.
    let all: Vec<ImagePair> = (0..100)
        .map(|i| {
            let clean = synthetic_photo(size, size, 9000 + i as u64);
            let uw = synth_underwater(&clean, &UnderwaterParams::default(), 9000 ^ (i as u64 + 31)).unwrap();
            ImagePair::new(uw, clean, format!("u{i}"), 0)
        })
        .collect();
    let (train_pairs, held_out) = all.split_at(80);
    let ft_cfg = TrainConfig {
        epochs: 6,
        learning_rate: 5e-5,
        seed: 17,
        log_every: 20,
        ..TrainConfig::default()
    };
    train(
        &mut model,
        &[TaskDataset { task: TaskId::Underwater, pairs: train_pairs.to_vec() }],
        &ft_cfg,
        None,
    )
    .unwrap();

    let corrupted = evaluate(&IdentityEnhancer, held_out).unwrap();
    let restored = evaluate(&IptEnhancer { model: &model, task: TaskId::Underwater }, held_out).unwrap();
    let d_psnr = restored.mean_psnr_db - corrupted.mean_psnr_db;
    let d_ssim = restored.mean_ssim - corrupted.mean_ssim;
    let elapsed = started.elapsed();
    assert!(
        d_psnr >= 1.0,
        "mean PSNR gain {d_psnr:.2} dB < 1 dB ({:.2} -> {:.2})",
        corrupted.mean_psnr_db,
        restored.mean_psnr_db
    );
    assert!(
        d_ssim >= 0.02,
        "mean SSIM gain {d_ssim:.4} < 0.02 ({:.4} -> {:.4})",
        corrupted.mean_ssim,
        restored.mean_ssim
    );
    assert!(
        elapsed < Duration::from_secs(60 * 60),
        "experiment took {elapsed:?}, budget is 60 min"
    );
    pass(&format!(
        "7 finetune-improvement (+{d_psnr:.2} dB, +{d_ssim:.4} SSIM on held-out 20, {:.0}s < 60min)",
        elapsed.as_secs_f64()
    ));
}

// --- 8. Adam oracle ----------------------------------------------------------

#[test]
fn criterion_8_adam_oracle() {
    let hp = AdamHyper { learning_rate: 2e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    for problem in 0..10u64 {
        let mut rng = murk_core::rng::derive_rng(500 + problem, &["acceptance-adam"]);
        use rand::Rng as _;
        let mut p: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p_ref = p.clone();
        let (mut m, mut v) = (vec![0.0f64; 10], vec![0.0f64; 10]);
        let (mut m_ref, mut v_ref) = (vec![0.0f64; 10], vec![0.0f64; 10]);
        for step in 1..=50u64 {
            let g: Vec<f64> = (0..10)
                .map(|i| p_ref[i] * 0.5 + rng.random_range(-0.4..0.4))
                .collect();
            adam_step_slice(&mut p, &g, &mut m, &mut v, step, &hp).unwrap();
            // Straight-line update, written out independently.
            for i in 0..10 {
                m_ref[i] = 0.9 * m_ref[i] + 0.1 * g[i];
                v_ref[i] = 0.999 * v_ref[i] + 0.001 * g[i] * g[i];
                let mhat = m_ref[i] / (1.0 - 0.9f64.powi(step as i32));
                let vhat = v_ref[i] / (1.0 - 0.999f64.powi(step as i32));
                p_ref[i] -= 2e-3 * mhat / (vhat.sqrt() + 1e-8);
            }
        }
        for i in 0..10 {
            assert!(
                (p[i] - p_ref[i]).abs() < 1e-7,
                "problem {problem} param {i}: {} vs {}",
                p[i],
                p_ref[i]
            );
        }
    }
    pass("8 adam-oracle (matches straight-line reference to 1e-7 over 50 steps)");
}

// --- 9. Dark-channel inversion ------------------------------------------------

#[test]
fn criterion_9_dcp_inversion() {
    let params = DcpParams::default();
    for seed in 0..10u64 {
        let mut rng = murk_core::rng::derive_rng(seed, &["acceptance-dcp"]);
        use rand::Rng as _;
        let mut clean = synthetic_photo(64, 64, 600 + seed);
        for cy in (4..64).step_by(8) {
            for cx in (4..64).step_by(8) {
                clean.set(cx, cy, [2, 2, 2]);
            }
        }
        let a = [
            rng.random_range(215.0f64..250.0).round(),
            rng.random_range(215.0f64..250.0).round(),
            rng.random_range(215.0f64..250.0).round(),
        ];
        // Depth gradient: nearly opaque haze at the top of the frame.
        let t: Vec<f64> = (0..64 * 64)
            .map(|i| 0.02 + 0.78 * ((i / 64) as f64 / 63.0))
            .collect();
        let hazy = synthesize_haze(&clean, a, &t);

        let est = estimate_atmospheric(&hazy, &dark_channel(&hazy, params.patch_radius), params.atmospheric_percentile);
        for c in 0..3 {
            assert!(
                (est[c] - a[c]).abs() <= 5.0,
                "seed {seed}: A[{c}] estimated {} vs true {}",
                est[c],
                a[c]
            );
        }
        let restored = dehaze(&hazy, &params);
        let before = psnr(&hazy, &clean).unwrap();
        let after = psnr(&restored, &clean).unwrap();
        assert!(after > before, "seed {seed}: psnr {before:.2} -> {after:.2}");
    }
    pass("9 dcp-inversion (A within ±5/channel, PSNR improved on 10/10 instances)");
}

// --- 10. CLI determinism --------------------------------------------------------

#[test]
fn criterion_10_cli_determinism() {
    let murk = env!("CARGO_BIN_EXE_murk");
    let tmp = tempfile::tempdir().unwrap();
    // Each pass runs the identical command lines (relative paths) from
    // its own working directory, so "identical seed/config" holds
    // literally and every artifact byte is comparable.
    let run = |cwd: &std::path::Path, args: &[&str]| {
        let out = Command::new(murk).current_dir(cwd).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "murk {args:?}:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let digest = |dir: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        fn walk(d: &std::path::Path, out: &mut Vec<std::path::PathBuf>) {
            for e in std::fs::read_dir(d).unwrap().flatten() {
                let p = e.path();
                if p.is_dir() {
                    walk(&p, out);
                } else {
                    out.push(p);
                }
            }
        }
        let mut files = Vec::new();
        walk(dir, &mut files);
        files.sort();
        files
            .into_iter()
            .map(|p| {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                let bytes = if rel.ends_with("loss.csv") {
                    // elapsed_ms is a timing field: strip the last column.
                    String::from_utf8(std::fs::read(&p).unwrap())
                        .unwrap()
                        .lines()
                        .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
                        .collect::<Vec<_>>()
                        .join("\n")
                        .into_bytes()
                } else {
                    std::fs::read(&p).unwrap()
                };
                (rel, bytes)
            })
            .collect()
    };

    for pass_dir in ["one", "two"] {
        let root = tmp.path().join(pass_dir);
        std::fs::create_dir_all(&root).unwrap();
        run(&root, &[
            "synth", "--kind", "underwater", "--n", "3", "--size", "16x16", "--ext", "ppm",
            "--seed", "17", "--out", "raw", "--quiet",
        ]);
        run(&root, &[
            "prepare", "--data", "raw", "--out", "prep", "--ext", "ppm", "--seed", "17", "--quiet",
        ]);
        run(&root, &[
            "pretrain", "--manifest", "prep/manifest.tsv",
            "--out", "trained", "--epochs", "1", "--lr", "1e-4", "--seed", "17",
            "--channels", "2", "--patch", "2", "--enc-layers", "1", "--dec-layers", "1",
            "--heads", "2", "--ffn-mult", "2", "--quiet",
        ]);
        run(&root, &[
            "enhance", "--model", "trained/model.ckpt", "--in", "raw/corrupted",
            "--out", "enhanced", "--quiet",
        ]);
        run(&root, &[
            "eval", "--manifest", "prep/manifest.tsv", "--with-identity", "--baseline", "dcp",
            "--report", "report.csv", "--quiet", "--seed", "17",
        ]);
    }

    let strip_report_timing = |entries: Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
        entries
            .into_iter()
            .map(|(rel, bytes)| {
                if rel.ends_with("report.csv") {
                    let text = String::from_utf8(bytes).unwrap();
                    let stripped = text
                        .lines()
                        .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
                        .collect::<Vec<_>>()
                        .join("\n");
                    (rel, stripped.into_bytes())
                } else {
                    (rel, bytes)
                }
            })
            .collect()
    };
    let one = strip_report_timing(digest(&tmp.path().join("one")));
    let two = strip_report_timing(digest(&tmp.path().join("two")));
    assert_eq!(one.len(), two.len());
    for ((ra, ba), (rb, bb)) in one.iter().zip(&two) {
        assert_eq!(ra, rb);
        assert_eq!(ba, bb, "artifact {ra} differs between identical runs");
    }
    pass("10 determinism (byte-identical artifacts across reruns, timing fields excluded)");
}
