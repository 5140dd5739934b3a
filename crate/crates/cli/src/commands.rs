use std::fs;
use std::path::{Path, PathBuf};

use sparse_stgcn::ensemble::{assemble_predict, confidence_report, param_counts, EnsembleSpec};
use sparse_stgcn::net::Checkpoint;
use sparse_stgcn::skeleton::{io, synth_dataset, Dataset, SkeletonGraph, Split, SynthConfig};
use sparse_stgcn::sparsity::sparsity_report;
use sparse_stgcn::trainer::{init_network, predict_proba, score_probabilities, train_with, TrainMode};
use sparse_stgcn::{Error, Result};

use crate::config::{convert, RunConfig};
use crate::{AssembleArgs, EvalArgs, ReportArgs, SynthArgs, TrainArgs};

pub const RESOLVED_CONFIG: &str = "resolved.toml";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const WARMUP_CHECKPOINT: &str = "warmup.stgw";
pub const FINAL_CHECKPOINT: &str = "final.stgw";

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| Error::Usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::Usage(format!("config {}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = a.num_classes {
        cfg.num_classes = v;
    }
    if let Some(v) = a.samples_per_class {
        cfg.samples_per_class = v;
    }
    if let Some(v) = a.test_per_class {
        cfg.test_per_class = v;
    }
    if let Some(v) = a.joints {
        cfg.joints = v;
    }
    if let Some(v) = a.frames {
        cfg.frames = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_sigma = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let (train, test) = synth_dataset(&cfg)?;
    fs::create_dir_all(&a.out)?;
    io::save(a.out.join("train.skel"), &train)?;
    io::save(a.out.join("test.skel"), &test)?;
    let manifest = toml::to_string(&cfg).map_err(|e| Error::Usage(e.to_string()))?;
    fs::write(a.out.join("manifest.toml"), manifest)?;
    println!(
        "wrote {} train and {} test sequences to {}",
        train.len(),
        test.len(),
        a.out.display()
    );
    Ok(())
}

/// Applies command-line overrides on top of the file configuration.
fn apply_overrides(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(p) = &a.train {
        cfg.data.train = Some(p.clone());
    }
    if let Some(p) = &a.test {
        cfg.data.test = Some(p.clone());
    }
    if let Some(m) = a.modality {
        cfg.data.modality = m;
    }
    let t = &mut cfg.train;
    if let Some(v) = a.mode {
        t.mode = v;
    }
    if let Some(v) = a.sparsity {
        t.sparsity = v;
    }
    if let Some(v) = a.lambda {
        t.lambda = v;
    }
    if let Some(v) = a.warmup_epochs {
        t.warmup_epochs = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.eval_every {
        t.eval_every = v;
    }
    if let Some(v) = &a.channels {
        cfg.net.channels = v.clone();
    }
    if let Some(v) = a.temporal_half_window {
        cfg.net.temporal_half_window = v;
    }
}

/// Rejects flag combinations that have no meaning for the chosen mode.
fn check_conflicts(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let mode = cfg.train.mode;
    if mode == TrainMode::Dense && cfg.train.sparsity != 0.0 {
        let source = if a.sparsity.is_some() { "--sparsity" } else { "train.sparsity" };
        return Err(Error::Usage(format!("{source} {} conflicts with --mode dense", cfg.train.sparsity)));
    }
    if mode != TrainMode::Generator {
        if a.lambda.is_some() {
            return Err(Error::Usage(format!("--lambda conflicts with --mode {mode}")));
        }
        if a.warmup_epochs.is_some() {
            return Err(Error::Usage(format!("--warmup-epochs conflicts with --mode {mode}")));
        }
    }
    Ok(())
}

fn check_splits(train: &Dataset, test: Option<&Dataset>) -> Result<()> {
    if let Some(t) = test {
        if (t.num_classes, t.joints, t.frames, t.dims) != (train.num_classes, train.joints, train.frames, train.dims) {
            return Err(Error::Input(format!(
                "test split (classes {}, N {}, T {}, d {}) does not match train split (classes {}, N {}, T {}, d {})",
                t.num_classes, t.joints, t.frames, t.dims, train.num_classes, train.joints, train.frames, train.dims
            )));
        }
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    apply_overrides(&mut cfg, a);
    check_conflicts(&cfg, a)?;
    cfg.train.validate()?;

    let (train_raw, test_raw) = cfg.load_data()?;
    check_splits(&train_raw, test_raw.as_ref())?;
    cfg.resolve_net(&train_raw)?;
    let graph = cfg.graph()?;
    let modality = cfg.data.modality;
    let (train, test) = convert(&graph, modality, &train_raw, test_raw.as_ref());

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join(RESOLVED_CONFIG), cfg.to_toml()?)?;

    let net = init_network(&cfg.net, cfg.train.seed)?;
    let verbose = a.verbose;
    let outcome = train_with(net, &train, test.as_ref(), &cfg.train, |r| {
        if verbose {
            eprintln!(
                "epoch {} {} loss {:.4} penalty {:.4} wstar {:.4} train {:.4} test {}",
                r.epoch,
                r.stage,
                r.class_loss,
                r.penalty,
                r.wstar_norm,
                r.train_acc,
                r.test_acc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
            );
        }
    })?;
    outcome.log.save(a.out.join(TRAIN_LOG))?;
    if let Some(w) = outcome.warmup_net {
        Checkpoint::new(w, outcome.mask.clone(), modality, "warmup")?.save(a.out.join(WARMUP_CHECKPOINT))?;
    }
    let kept = outcome.mask.as_ref().map(|m| m.kept() as f64 / m.total() as f64);
    Checkpoint::new(outcome.net, outcome.mask, modality, "final")?.save(a.out.join(FINAL_CHECKPOINT))?;

    println!("mode {}", cfg.train.mode);
    if let Some(k) = kept {
        println!("kept_fraction {k}");
    }
    if let Some(acc) = outcome.log.final_test_acc() {
        println!("test_accuracy {acc}");
    }
    println!("output {}", a.out.display());
    Ok(())
}

/// Errors unless `data` has the checkpoint's input layout and class count.
fn check_compatible(ckpt: &Checkpoint, data: &Dataset) -> Result<()> {
    let net = &ckpt.meta.net;
    if data.joints != net.parents.len() || data.dims != net.in_channels || data.num_classes != net.num_classes {
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: checkpoint expects {} joints, {} coordinates, {} classes; data has {}, {}, {}",
            net.parents.len(),
            net.in_channels,
            net.num_classes,
            data.joints,
            data.dims,
            data.num_classes
        )));
    }
    Ok(())
}

fn sample_ids(data: &Dataset) -> Vec<u64> {
    data.sequences.iter().map(|s| s.sample_id).collect()
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let raw = io::load(&a.data, Split::Test)?;
    let ckpt = match &a.config {
        Some(path) => {
            let mut cfg = RunConfig::load(Some(path))?;
            cfg.resolve_net(&raw)?;
            Checkpoint::load_for(&a.checkpoint, &cfg.net)?
        }
        None => Checkpoint::load(&a.checkpoint)?,
    };
    check_compatible(&ckpt, &raw)?;
    let graph = SkeletonGraph::from_parents(&ckpt.meta.net.parents)?;
    let data = raw.to_modality(&graph, ckpt.meta.modality);
    let mask = if a.ignore_mask { None } else { ckpt.mask.as_ref() };

    let probs = predict_proba(&ckpt.net, mask, &data)?;
    let result = score_probabilities(&probs, &data.labels());
    let report = confidence_report(&probs, &sample_ids(&data), a.threshold)?;
    let out = a.out.clone().unwrap_or_else(|| with_suffix(&a.checkpoint, ".confidence.csv"));
    fs::write(&out, report.to_csv())?;

    println!("accuracy {} ({}/{})", result.accuracy, result.correct, data.len());
    println!("below_threshold {} ({})", report.below, report.below_fraction());
    println!("confidence {}", out.display());
    Ok(())
}

pub fn assemble(a: &AssembleArgs) -> Result<()> {
    let (spec, members) = EnsembleSpec::load(&a.spec)?;
    let raw = io::load(&a.data, Split::Test)?;
    for (i, m) in members.iter().enumerate() {
        check_compatible(&m.checkpoint, &raw).map_err(|e| Error::Spec(format!("member {i}: {e}")))?;
    }
    let (probs, tables) = assemble_predict(&members, spec.aggregation, &raw)?;
    let labels = raw.labels();
    for (i, (m, table)) in spec.members.iter().zip(&tables).enumerate() {
        let r = score_probabilities(table, &labels);
        println!(
            "member {i} {} sparsity {} modality {} accuracy {}",
            m.checkpoint.display(),
            m.sparsity,
            m.modality,
            r.accuracy
        );
    }
    let result = score_probabilities(&probs, &labels);
    let (kept, total) = param_counts(&members)?;
    let report = confidence_report(&probs, &sample_ids(&raw), a.threshold)?;
    let out = a.out.clone().unwrap_or_else(|| with_suffix(&a.spec, ".confidence.csv"));
    fs::write(&out, report.to_csv())?;

    println!("ensemble accuracy {} ({}/{})", result.accuracy, result.correct, raw.len());
    println!("param_fraction {} ({kept}/{total})", kept as f64 / total as f64);
    println!("below_threshold {} ({})", report.below, report.below_fraction());
    println!("confidence {}", out.display());
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    println!("stage {}", ckpt.meta.stage);
    println!("modality {}", ckpt.meta.modality);
    let registry = ckpt.registry();
    match &ckpt.mask {
        Some(mask) => {
            println!("sparsity {}", mask.sparsity());
            print!("{}", sparsity_report(mask, &registry)?.render());
        }
        None => {
            let total = registry.count_params(true);
            println!("no mask: {total} of {total} maskable parameters kept");
        }
    }
    Ok(())
}
