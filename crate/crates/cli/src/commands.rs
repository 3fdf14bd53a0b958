//! Subcommand implementations.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nmnf_core::config::{load_config, AppConfig};
use nmnf_core::dataio::{
    read_corpus_meta, read_grammar, read_split, write_corpus, CorpusMeta, GrammarFile,
};
use nmnf_core::forecaster::{build_ablation, tiny_gradcheck, Variant};
use nmnf_core::grammar::{generate_samples, ActionGrammar, ComposedGrammar, FeaturePrototypes};
use nmnf_core::harness::{evaluate, run_ablations, run_sensitivity, EvalProtocol, TrainConfig};
use nmnf_core::{checkpoint, Error, Result};

use crate::plot;

fn app_config(path: Option<&Path>) -> Result<AppConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(AppConfig::default()),
    }
}

fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed {s:?} in seed list")))
        })
        .collect()
}

fn parse_levels(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad corruption level {s:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("corruption level {v} outside [0, 1]")));
            }
            Ok(v)
        })
        .collect()
}

fn preset_grammar(name: &str) -> Result<GrammarFile> {
    match name {
        "cycle3" => Ok(GrammarFile::Plain(ActionGrammar::cycle(3, 4)?)),
        "composed8" => Ok(GrammarFile::Composed(ComposedGrammar::shared_prefix_menu((5, 20), (5, 20))?)),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}, expected cycle3 or composed8"
        ))),
    }
}

pub fn generate(
    out: &Path,
    preset: &str,
    grammar_path: Option<&Path>,
    config_path: Option<&Path>,
    seed: u64,
) -> Result<()> {
    let cfg = app_config(config_path)?;
    let grammar = match grammar_path {
        Some(p) => read_grammar(p)?,
        None => preset_grammar(preset)?,
    };
    let corpus = &cfg.corpus;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes = FeaturePrototypes::random(
        grammar.num_classes(),
        corpus.feature_dim,
        corpus.noise_std,
        &mut rng,
    )?;
    let train = generate_samples(
        grammar.sampler(),
        &prototypes,
        corpus.train_sequences,
        corpus.sequence_len,
        &mut rng,
    )?;
    let test = generate_samples(
        grammar.sampler(),
        &prototypes,
        corpus.test_sequences,
        corpus.sequence_len,
        &mut rng,
    )?;
    let meta = CorpusMeta {
        num_classes: grammar.num_classes(),
        feature_dim: corpus.feature_dim,
        sequence_len: corpus.sequence_len,
        train_sequences: corpus.train_sequences,
        test_sequences: corpus.test_sequences,
        noise_std: corpus.noise_std,
        seed,
    };
    write_corpus(out, &meta, &grammar, &train, &test)?;
    println!(
        "wrote corpus to {}: {} classes, {} train + {} test sequences of length {}",
        out.display(),
        meta.num_classes,
        meta.train_sequences,
        meta.test_sequences,
        meta.sequence_len
    );
    Ok(())
}

pub fn train(
    corpus: &Path,
    out: &Path,
    config_path: Option<&Path>,
    seed: u64,
    variant: &str,
) -> Result<()> {
    let cfg = app_config(config_path)?;
    let meta = read_corpus_meta(corpus)?;
    let fcfg = cfg.forecaster.resolve(meta.num_classes, meta.feature_dim)?;
    let variant = Variant::parse(variant)?;
    let data = read_split(corpus, "train")?;
    let tcfg = TrainConfig { seed, ..cfg.train };

    let mut model = build_ablation(variant, &fcfg, seed)?;
    let report = nmnf_core::harness::train(&mut model, &data, &tcfg)?;
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {epoch}: mean loss {loss:.6}");
    }

    fs::create_dir_all(out)?;
    checkpoint::save(&out.join("model.ckpt"), &model)?;
    fs::write(out.join("loss.csv"), report.to_csv())?;
    println!(
        "trained variant {} ({} parameters, {} epochs) -> {}",
        variant,
        model.num_params(),
        report.epochs_run,
        out.join("model.ckpt").display()
    );
    Ok(())
}

pub fn eval(
    corpus: &Path,
    model_path: &Path,
    out: &Path,
    config_path: Option<&Path>,
    seed: u64,
) -> Result<()> {
    let cfg = app_config(config_path)?;
    let meta = read_corpus_meta(corpus)?;
    let fcfg = cfg.forecaster.resolve(meta.num_classes, meta.feature_dim)?;
    let model = checkpoint::load(model_path, &fcfg)?;
    let test = read_split(corpus, "test")?;
    let mut report = evaluate(&model, &test, &cfg.protocol)?;
    for row in &mut report.rows {
        row.seed = seed;
    }
    report.sort();
    fs::create_dir_all(out)?;
    report.write_csv(&out.join("report.csv"))?;
    report.write_summary(&out.join("summary.toml"))?;
    print!("{}", report.to_csv());
    Ok(())
}

pub fn ablate(
    corpus: &Path,
    out: &Path,
    config_path: Option<&Path>,
    seeds: &str,
    obs: f64,
    pred: f64,
) -> Result<()> {
    let cfg = app_config(config_path)?;
    let meta = read_corpus_meta(corpus)?;
    let fcfg = cfg.forecaster.resolve(meta.num_classes, meta.feature_dim)?;
    let seeds = parse_seeds(seeds)?;
    let train_set = read_split(corpus, "train")?;
    let test_set = read_split(corpus, "test")?;
    let report = run_ablations(
        &train_set,
        &test_set,
        &fcfg,
        &cfg.train,
        &Variant::ALL,
        &seeds,
        &EvalProtocol::single_cell(obs, pred),
    )?;
    fs::create_dir_all(out)?;
    report.write_csv(&out.join("ablation.csv"))?;
    report.write_summary(&out.join("ablation_summary.toml"))?;
    print!("{}", report.to_csv());
    for v in Variant::ALL {
        if let Some(acc) = report.mean_accuracy(v.code(), obs, pred) {
            println!("variant {:>4}: mean accuracy {:.4}", v.code(), acc);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn sensitivity(
    corpus: &Path,
    out: &Path,
    config_path: Option<&Path>,
    seeds: &str,
    levels: &str,
    obs: f64,
    pred: f64,
) -> Result<()> {
    let cfg = app_config(config_path)?;
    let meta = read_corpus_meta(corpus)?;
    let fcfg = cfg.forecaster.resolve(meta.num_classes, meta.feature_dim)?;
    let seeds = parse_seeds(seeds)?;
    let levels = parse_levels(levels)?;
    let train_set = read_split(corpus, "train")?;
    let test_set = read_split(corpus, "test")?;
    let report = run_sensitivity(
        &train_set,
        &test_set,
        &fcfg,
        &cfg.train,
        &levels,
        &seeds,
        &EvalProtocol::single_cell(obs, pred),
    )?;
    fs::create_dir_all(out)?;
    report.write_csv(&out.join("sensitivity.csv"))?;
    report.write_summary(&out.join("sensitivity_summary.toml"))?;
    print!("{}", report.to_csv());
    Ok(())
}

pub fn gradcheck(seed: u64) -> Result<()> {
    let report = tiny_gradcheck(seed)?;
    println!("{}", report.summary());
    if report.pass {
        Ok(())
    } else {
        Err(Error::Evaluation(format!(
            "gradient check failed: max relative error {:.3e} at tolerance {:.1e}",
            report.max_relative_error, report.tolerance
        )))
    }
}

pub fn plot_report(report: &Path, out: &Path) -> Result<()> {
    let svg = plot::render_csv(report)?;
    fs::write(out, svg)?;
    println!("wrote {}", out.display());
    Ok(())
}
