use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use vaeconf_core::dataset::{load_csv_with, split_by_date_unchecked, write_csv, CsvOptions};
use vaeconf_core::export::{
    join_errors, read_latent_csv, read_scores_csv, write_latent_csv, write_scores_csv,
};
use vaeconf_core::pipeline::{score_split, train_model};
use vaeconf_core::synthgen::{meta_path, write_meta_csv};
use vaeconf_core::{
    generate, load_csv, load_model, project, save_model, split_by_date, Activation, EvalReport,
    ReferenceSet, ScoreOptions, Space, SynthConfig, TrainHistory, VaeConfig,
};

use crate::args::{
    ActivationArg, EvalArgs, ExportArgs, ReferenceArg, ScoreArgs, SpaceArg, SplitArg, SynthArgs,
    TrainArgs,
};

fn usize_of(v: u64, name: &str) -> Result<usize> {
    usize::try_from(v).with_context(|| format!("--{name} {v} is too large"))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("cannot write {}", path.display()))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_train: usize_of(a.n_train, "n-train")?,
        n_test: usize_of(a.n_test, "n-test")?,
        n_features: usize_of(a.n_features, "n-features")?,
        n_clusters: usize_of(a.n_clusters, "n-clusters")?,
        shifted_cluster_fraction: a.shifted_fraction,
        noise_low: a.noise_low,
        noise_high: a.noise_high,
        seed: a.seed,
    };
    let out = generate(&cfg)?;
    write_csv(&out.combined()?, &a.out)?;
    let meta = meta_path(&a.out);
    write_meta_csv(&out.meta, &meta)?;
    println!(
        "wrote {} ({} train, {} test rows) and {}",
        a.out.display(),
        out.train.len(),
        out.test.len(),
        meta.display()
    );
    Ok(())
}

fn history_path(a: &TrainArgs) -> PathBuf {
    a.history_out.clone().unwrap_or_else(|| {
        let stem = a
            .model_out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        a.model_out.with_file_name(format!("{stem}.history.csv"))
    })
}

fn write_history(h: &TrainHistory, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["epoch", "total", "regression", "kl"])?;
    for i in 0..h.len() {
        w.write_record([
            (i + 1).to_string(),
            h.total[i].to_string(),
            h.regression[i].to_string(),
            h.kl[i].to_string(),
        ])?;
    }
    w.flush()
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let data = load_csv(&a.data)?;
    let (train, _) = split_by_date_unchecked(&data, a.cutoff);
    ensure!(
        !train.is_empty(),
        "no training rows dated on or before {}",
        a.cutoff
    );
    let cfg = VaeConfig {
        input_dim: train.arity(),
        encoder_hidden: a.encoder_hidden.clone(),
        latent_dim: usize_of(a.latent_dim, "latent-dim")?,
        decoder_hidden: a.decoder_hidden.clone(),
        activation: match a.activation {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Softplus => Activation::Softplus,
        },
        kl_weight: a.kl_weight,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: usize_of(a.batch_size, "batch-size")?,
        seed: a.seed,
    };
    if cfg.epochs == 0 {
        eprintln!("warning: --epochs 0 saves the untrained initial model");
    }
    let (model, history) = train_model(&train, &cfg, !a.no_standardize)?;
    save_model(&model, &a.model_out)?;
    let hist = history_path(a);
    write_history(&history, &hist)?;
    match (history.total.last(), history.regression.last(), history.kl.last()) {
        (Some(t), Some(r), Some(k)) => println!(
            "trained {} epochs on {} rows: loss {t:.4} (mse {r:.4}, kl {k:.4})",
            history.len(),
            train.len()
        ),
        _ => println!("saved untrained model for {} rows", train.len()),
    }
    println!("model: {}  history: {}", a.model_out.display(), hist.display());
    Ok(())
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = load_csv(&a.data)?;
    let (train, test) = split_by_date(&data, a.cutoff)?;
    let opts = ScoreOptions {
        m: usize_of(a.m, "m")?,
        reference: match a.reference {
            ReferenceArg::Reliable => ReferenceSet::Reliable,
            ReferenceArg::All => ReferenceSet::AllTrain,
        },
        threads: usize_of(a.threads, "threads")?,
    };
    let space = match a.space {
        SpaceArg::Latent => Space::Latent,
        SpaceArg::Feature => Space::Feature,
        SpaceArg::Geo => Space::Geographic,
    };
    let run = score_split(&model, &train, &test, space, &opts)?;
    write_scores_csv(&run.report, &a.out)?;
    if let Some(path) = &a.latent_out {
        write_latent_csv(&run.test_latent, test.targets().as_deref(), path)?;
    }
    if run.report.degenerate_k {
        eprintln!(
            "warning: only {} reference points for M={}",
            run.report.reliable_count, opts.m
        );
    }
    println!(
        "space={} M={} T={} reliable={}/{} scored={}",
        space,
        opts.m,
        run.partition.threshold,
        run.partition.plus.len(),
        train.len(),
        test.len()
    );
    Ok(())
}

/// File name only, so reports do not depend on the working directory.
fn file_label(path: &Path) -> String {
    path.file_name()
        .unwrap_or(path.as_os_str())
        .to_string_lossy()
        .into_owned()
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let (labels, _) = read_latent_csv(&a.labels)
        .with_context(|| format!("reading labels {}", a.labels.display()))?;
    if labels.errors.is_none() {
        bail!(
            "{} has no abs_error column; export it from labeled rows",
            a.labels.display()
        );
    }
    let mut reports = Vec::with_capacity(a.scores.len());
    for path in &a.scores {
        let table =
            read_scores_csv(path).with_context(|| format!("reading scores {}", path.display()))?;
        let errors = join_errors(&table.ids, &labels)
            .with_context(|| format!("matching {} to labels", path.display()))?;
        let report = EvalReport::from_scores(
            &table.scores,
            &errors,
            a.fraction,
            table.space,
            table.m,
            table.threshold,
        )?;
        reports.push((file_label(path), report));
    }

    let text = reports
        .iter()
        .map(|(path, r)| format!("scores={path}\n{}", r.to_text()))
        .collect::<Vec<_>>()
        .join("\n");
    match &a.out {
        Some(path) => create(path)?
            .write_all(text.as_bytes())
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    if let Some(path) = &a.csv_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        let mut header = vec!["scores"];
        header.extend(EvalReport::CSV_HEADER);
        w.write_record(&header)?;
        for (p, r) in &reports {
            let mut rec = vec![p.clone()];
            rec.extend(r.csv_record());
            w.write_record(&rec)?;
        }
        w.flush()
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn export_latent(a: &ExportArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = load_csv_with(
        &a.data,
        CsvOptions {
            require_target: false,
        },
    )?;
    let rows = match a.split {
        SplitArg::All => data,
        SplitArg::Train => split_by_date_unchecked(&data, a.cutoff).0,
        SplitArg::Test => split_by_date_unchecked(&data, a.cutoff).1,
    };
    ensure!(!rows.is_empty(), "no rows selected for export");
    let scaled = model.scaler.apply(&rows)?;
    let latent = project(&model, &scaled)?;
    write_latent_csv(&latent, rows.targets().as_deref(), &a.out)?;
    println!(
        "wrote {} rows x {} latent dims to {}{}",
        latent.len(),
        latent.points.dim(),
        a.out.display(),
        if rows.is_labeled() { "" } else { " (unlabeled)" }
    );
    Ok(())
}
