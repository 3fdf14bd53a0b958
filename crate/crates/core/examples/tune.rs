// temporary tuning harness for acceptance fixtures
use nmnf_core::forecaster::{build_ablation, ForecasterConfig, FutureInput, Variant};
use nmnf_core::grammar::{generate_samples, ActionGrammar, FeaturePrototypes};
use nmnf_core::harness::{evaluate_with, run_ablations, EvalProtocol, LabelSource, ModelPredictor, TrainConfig};
use nmnf_core::memory::MemoryConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    match args.get(1).map(|s| s.as_str()) {
        Some("cycle") => cycle(),
        Some("timing") => timing(),
        Some("ablate") => ablate_mode(),
        Some("dprobe") => dprobe(),
        _ => eprintln!("usage: tune cycle|timing|ablate"),
    }
}

fn cycle_config(hv: usize, hl: usize, lv: usize, ll: usize) -> ForecasterConfig {
    ForecasterConfig {
        num_classes: 3,
        feature_dim: 8,
        hidden_visual: hv,
        hidden_label: hl,
        mem_visual: MemoryConfig { slots: lv, slot_dim: hv },
        mem_label: MemoryConfig { slots: ll, slot_dim: hl },
        decoder_hidden: hv,
        persist_memory: false,
        future_visual_input: FutureInput::Zeros,
    }
}

fn cycle() {
    let grammar = ActionGrammar::cycle(3, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let protos = FeaturePrototypes::random(3, 8, 0.3, &mut rng).unwrap();
    let train_set = generate_samples(&grammar, &protos, 30, 48, &mut rng).unwrap();
    let test_set = generate_samples(&grammar, &protos, 50, 48, &mut rng).unwrap();

    for (lr, epochs, bs) in [(3e-3, 60, 4), (1e-3, 120, 4), (3e-3, 120, 8)] {
        let start = Instant::now();
        let cfg = cycle_config(16, 8, 6, 4);
        let mut model = build_ablation(Variant::Full, &cfg, 1).unwrap();
        let tcfg = TrainConfig {
            epochs,
            batch_size: bs,
            learning_rate: lr,
            seed: 1,
            stop_loss: Some(0.03),
            ..TrainConfig::default()
        };
        let report = nmnf_core::harness::train(&mut model, &train_set, &tcfg).unwrap();
        let mut predictor = ModelPredictor::new(&model);
        let eval = evaluate_with(
            &mut predictor, &test_set,
            &EvalProtocol::single_cell(0.3, 0.5),
            LabelSource::GroundTruth, 3, "full", 1,
        ).unwrap();
        println!(
            "lr={lr} epochs={}/{epochs} bs={bs}: loss {:.4} -> {:.4}, acc {:.4} ({:.0}s)",
            report.epochs_run,
            report.epoch_losses[0],
            report.epoch_losses.last().unwrap(),
            eval.rows[0].accuracy,
            start.elapsed().as_secs_f64()
        );
    }
}

fn timing() {
    // One epoch cost on the composed corpus at compact dims.
    let grammar = nmnf_core::grammar::ComposedGrammar::shared_prefix_menu((5, 20), (5, 20)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let protos = FeaturePrototypes::random(8, 16, 0.5, &mut rng).unwrap();
    let train_set = generate_samples(&grammar, &protos, 100, 120, &mut rng).unwrap();
    let cfg = ForecasterConfig {
        num_classes: 8,
        feature_dim: 16,
        hidden_visual: 32,
        hidden_label: 16,
        mem_visual: MemoryConfig { slots: 10, slot_dim: 32 },
        mem_label: MemoryConfig { slots: 8, slot_dim: 16 },
        decoder_hidden: 32,
        persist_memory: false,
        future_visual_input: FutureInput::Zeros,
    };
    let mut model = build_ablation(Variant::Full, &cfg, 1).unwrap();
    let tcfg = TrainConfig { epochs: 2, batch_size: 8, seed: 1, ..TrainConfig::default() };
    let start = Instant::now();
    let report = nmnf_core::harness::train(&mut model, &train_set, &tcfg).unwrap();
    println!(
        "2 epochs x 100 seqs of T=120: {:.1}s total, losses {:?}",
        start.elapsed().as_secs_f64(),
        report.epoch_losses
    );
    let _ = run_ablations; // keep import
}

// appended: ablation landscape exploration
fn ablate_mode() {
    let args: Vec<String> = std::env::args().collect();
    let dur_lo: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let dur_hi: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20);
    let seq_len: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(120);
    let n_train: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(100);
    let epochs: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let noise: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let seeds: Vec<u64> = args.get(9).map(|s| s.split(',').map(|x| x.parse().unwrap()).collect()).unwrap_or(vec![1]);
    let hv: usize = args.get(10).and_then(|s| s.parse().ok()).unwrap_or(32);
    let hl: usize = args.get(11).and_then(|s| s.parse().ok()).unwrap_or(16);

    let grammar = nmnf_core::grammar::ComposedGrammar::shared_prefix_menu((dur_lo, dur_hi), (dur_lo, dur_hi)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let protos = FeaturePrototypes::random(8, 16, noise, &mut rng).unwrap();
    let train_set = generate_samples(&grammar, &protos, n_train, seq_len, &mut rng).unwrap();
    let test_set = generate_samples(&grammar, &protos, 50, seq_len, &mut rng).unwrap();
    let cfg = ForecasterConfig {
        num_classes: 8,
        feature_dim: 16,
        hidden_visual: hv,
        hidden_label: hl,
        mem_visual: MemoryConfig { slots: 10, slot_dim: hv },
        mem_label: MemoryConfig { slots: 8, slot_dim: hl },
        decoder_hidden: hv,
        persist_memory: false,
        future_visual_input: FutureInput::Zeros,
    };
    let warmup: usize = std::env::args().nth(12).and_then(|s| s.parse().ok()).unwrap_or(15);
    let tcfg = TrainConfig { epochs, batch_size: 8, learning_rate: lr, teacher_forcing: false, tf_warmup_epochs: warmup, ..TrainConfig::default() };
    let protocol = EvalProtocol { observed_fractions: vec![0.3], predicted_fractions: vec![0.1, 0.5] };
    let start = Instant::now();
    let report = run_ablations(&train_set, &test_set, &cfg, &tcfg, &Variant::ALL, &seeds, &protocol).unwrap();
    println!("== dur {dur_lo}-{dur_hi} T={seq_len} train={n_train} epochs={epochs} lr={lr} noise={noise} hv={hv} hl={hl} seeds={seeds:?} ({:.0}s)", start.elapsed().as_secs_f64());
    for v in Variant::ALL {
        let a10 = report.mean_accuracy(v.code(), 0.3, 0.1).unwrap();
        let a50 = report.mean_accuracy(v.code(), 0.3, 0.5).unwrap();
        let drop = (a10 - a50) / a10.max(1e-9);
        println!("  {:>4}: pred10 {:.4}  pred50 {:.4}  rel-drop {:.3}", v.code(), a10, a50, drop);
    }
    for run in &report.runs {
        if run.seed == seeds[0] {
            println!("  {:>4}: params {:>7} final_loss {:.4} epochs {}", run.variant, run.num_params, run.final_loss, run.epochs_run);
        }
    }
}

// appended: decoder-width sweep
fn dprobe() {
    use nmnf_core::grammar::ComposedGrammar;
    let grammar = ComposedGrammar::shared_prefix_menu((5, 15), (5, 15)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let protos = FeaturePrototypes::random(8, 16, 0.5, &mut rng).unwrap();
    let train_set = generate_samples(&grammar, &protos, 80, 120, &mut rng).unwrap();
    let test_set = generate_samples(&grammar, &protos, 50, 120, &mut rng).unwrap();
    for dec in [12usize, 8] {
        let cfg = ForecasterConfig {
            num_classes: 8,
            feature_dim: 16,
            hidden_visual: 24,
            hidden_label: 8,
            mem_visual: MemoryConfig { slots: 24, slot_dim: 24 },
            mem_label: MemoryConfig { slots: 20, slot_dim: 8 },
            decoder_hidden: dec,
            persist_memory: false,
            future_visual_input: FutureInput::Zeros,
        };
        for variant in [Variant::LabelMemory, Variant::LabelOnly] {
            let mut accs = Vec::new();
            for seed in [1u64, 2, 3] {
                let mut m = build_ablation(variant, &cfg, seed).unwrap();
                let t = TrainConfig {
                    epochs: 60, batch_size: 8, learning_rate: 2e-3,
                    teacher_forcing: false, tf_warmup_epochs: 15, seed,
                    ..TrainConfig::default()
                };
                let _ = nmnf_core::harness::train(&mut m, &train_set, &t).unwrap();
                let mut p = ModelPredictor::new(&m);
                let ev = evaluate_with(&mut p, &test_set,
                    &EvalProtocol { observed_fractions: vec![0.3], predicted_fractions: vec![0.1, 0.5] },
                    LabelSource::GroundTruth, 8, variant.code(), seed).unwrap();
                accs.push((ev.rows[0].accuracy, ev.rows[1].accuracy));
            }
            let m10: f64 = accs.iter().map(|a| a.0).sum::<f64>() / 3.0;
            let m50: f64 = accs.iter().map(|a| a.1).sum::<f64>() / 3.0;
            println!("dec={dec} {}: mean10 {:.4} mean50 {:.4}  per-seed50 {:?}",
                variant.code(), m10, m50,
                accs.iter().map(|a| (a.1 * 1000.0).round() / 1000.0).collect::<Vec<_>>());
        }
    }
}
