//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs sequentially on one thread so the runtime budgets mean one core.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vaeconf_core::confidence::{partition_errors, score_points};
use vaeconf_core::evaluation::{build_report, tail_mae, Tail};
use vaeconf_core::pipeline::{score_split, train_model};
use vaeconf_core::vae::Batch;
use vaeconf_core::{
    generate, grad_check, init_model, kl_divergence, knn_oracle, load_model, mean_knn_distance,
    pearson, save_model, EvalReport, Points, ScoreOptions, Space, SynthConfig, VaeConfig,
    VaeModel,
};

const GRAD_TOL: f64 = 1e-4;
const GRAD_PROBES: usize = 200;
const GRAD_BUDGET: Duration = Duration::from_secs(10);
const KNN_TOL: f64 = 1e-12;
const KNN_BUDGET: Duration = Duration::from_secs(30);
const LATENT_MIN_R: f64 = 0.25;
const PIPELINE_BUDGET: Duration = Duration::from_secs(300);
const GEO_MAX_ABS_R: f64 = 0.15;
const UNIT_TOL: f64 = 1e-9;
const TAIL_FRACTION: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = Result<Outcome, String>;

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn gradient_correctness() -> Check {
    let start = Instant::now();
    let cfg = VaeConfig::new(12);
    let model = init_model(&cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = (0..16).map(|_| normal_vec(&mut rng, 12)).collect();
    let targets = normal_vec(&mut rng, 16);
    let batch = Batch::new(inputs, targets).map_err(|e| e.to_string())?;
    let err = grad_check(&model, &batch, GRAD_PROBES).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    Ok(Outcome::new(
        err < GRAD_TOL && took < GRAD_BUDGET,
        format!("max rel error {err:.3e} over {GRAD_PROBES} probes (< {GRAD_TOL:e}), {took:.2?} (< {GRAD_BUDGET:?})"),
    ))
}

fn knn_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for set in 0..100 {
        let dim = [2, 8, 32][set % 3];
        let m = [1, 3, 10][(set / 3) % 3];
        let reference = Points::new(dim, normal_vec(&mut rng, 1000 * dim)).map_err(|e| e.to_string())?;
        let queries = Points::new(dim, normal_vec(&mut rng, 20 * dim)).map_err(|e| e.to_string())?;
        let all: Vec<usize> = (0..1000).collect();
        let (scores, _) = score_points(&queries, &reference, &all, m, 1).map_err(|e| e.to_string())?;
        for (j, q) in queries.rows().enumerate() {
            let oracle = knn_oracle(q, &reference, m).map_err(|e| e.to_string())?;
            let direct = mean_knn_distance(q, &reference, m).map_err(|e| e.to_string())?;
            worst = worst.max((scores[j] - oracle).abs()).max((direct - oracle).abs());
            compared += 1;
        }
    }
    let took = start.elapsed();
    Ok(Outcome::new(
        worst <= KNN_TOL && took < KNN_BUDGET,
        format!("{compared} queries in 100 sets, max |production - oracle| {worst:.3e} (<= {KNN_TOL:e}), {took:.2?} (< {KNN_BUDGET:?})"),
    ))
}

struct Benchmark {
    latent: EvalReport,
    geo: EvalReport,
    model: VaeModel,
    took: Duration,
}

fn run_benchmark() -> Result<Benchmark, String> {
    let start = Instant::now();
    let synth = SynthConfig::default();
    let data = generate(&synth).map_err(|e| e.to_string())?;
    let cfg = VaeConfig::new(synth.n_features);
    let (model, _) = train_model(&data.train, &cfg, true).map_err(|e| e.to_string())?;
    let opts = ScoreOptions::default();
    let report = |space| -> Result<EvalReport, String> {
        let run = score_split(&model, &data.train, &data.test, space, &opts).map_err(|e| e.to_string())?;
        build_report(&run.report, &run.test_latent, TAIL_FRACTION).map_err(|e| e.to_string())
    };
    let latent = report(Space::Latent)?;
    let geo = report(Space::Geographic)?;
    Ok(Benchmark {
        latent,
        geo,
        model,
        took: start.elapsed(),
    })
}

fn directional(b: &Benchmark) -> Check {
    let r = &b.latent;
    let corr = r.correlation.ok_or("latent correlation undefined")?;
    let ordered = r.mae_most_reliable < r.overall_mae && r.overall_mae < r.mae_most_unreliable;
    Ok(Outcome::new(
        corr >= LATENT_MIN_R && ordered && b.took < PIPELINE_BUDGET,
        format!(
            "latent r {corr:.4} (>= {LATENT_MIN_R}), MAE reliable {:.2} < overall {:.2} < unreliable {:.2}, {:.2?} (< {PIPELINE_BUDGET:?})",
            r.mae_most_reliable, r.overall_mae, r.mae_most_unreliable, b.took
        ),
    ))
}

fn baseline_contrast(b: &Benchmark) -> Check {
    let geo = b.geo.correlation.ok_or("geographic correlation undefined")?;
    let latent = b.latent.correlation.ok_or("latent correlation undefined")?;
    Ok(Outcome::new(
        geo.abs() < GEO_MAX_ABS_R && geo < latent,
        format!("geo r {geo:.4} (|r| < {GEO_MAX_ABS_R}), latent r {latent:.4}"),
    ))
}

fn unit_fidelity() -> Check {
    let e = |x: vaeconf_core::Error| x.to_string();
    let close = |a: f64, b: f64| (a - b).abs() <= UNIT_TOL;
    let mut failed = Vec::new();
    let mut total = 0usize;
    let mut check = |name: &str, ok: bool| {
        total += 1;
        if !ok {
            failed.push(name.to_string());
        }
    };

    check("kl zero", close(kl_divergence(&[0.0], &[0.0]).map_err(e)?, 0.0));
    check("kl mu=1", close(kl_divergence(&[1.0], &[0.0]).map_err(e)?, 0.5));
    let ln2 = std::f64::consts::LN_2;
    check("kl ln2", close(kl_divergence(&[0.0], &[ln2]).map_err(e)?, 0.5 * (1.0 - ln2)));

    let r = |c: &[f64], x: &[f64]| pearson(c, x).map_err(e);
    check("pearson +1", r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])?.is_some_and(|v| close(v, 1.0)));
    check("pearson -1", r(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0])?.is_some_and(|v| close(v, -1.0)));
    check(
        "pearson 0.8315",
        r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 5.0])?.is_some_and(|v| close(v, 5.5 / (5.0f64 * 8.75).sqrt())),
    );

    let origin = [0.0, 0.0];
    let single = Points::new(2, vec![0.0, 0.0]).map_err(e)?;
    check("knn coincident", close(mean_knn_distance(&origin, &single, 1).map_err(e)?, 0.0));
    let four = Points::new(2, vec![0.0, 1.0, 3.0, 4.0, 6.0, 8.0, 5.0, 12.0]).map_err(e)?;
    check("knn 16/3", close(mean_knn_distance(&origin, &four, 3).map_err(e)?, 16.0 / 3.0));
    let two = Points::new(2, vec![0.0, 1.0, 3.0, 4.0]).map_err(e)?;
    let (s, degenerate) = score_points(&Points::new(2, origin.to_vec()).map_err(e)?, &two, &[0, 1], 5, 1).map_err(e)?;
    check("knn k=min(M,n)", close(s[0], 3.0) && degenerate);

    let p = partition_errors(&[2.0, 4.0, 6.0], Default::default()).map_err(e)?;
    check("partition 2,4,6", close(p.threshold, 4.0) && p.plus == [0, 1] && p.minus == [2]);
    let p = partition_errors(&[3.0, 3.0, 3.0], Default::default()).map_err(e)?;
    check("partition constant", close(p.threshold, 3.0) && p.plus.len() == 3 && p.minus.is_empty());

    let (scores, errors) = ([1.0, 9.0], [0.1, 7.0]);
    check("tail lowest", close(tail_mae(&scores, &errors, 0.5, Tail::Lowest).map_err(e)?, 0.1));
    check("tail highest", close(tail_mae(&scores, &errors, 0.5, Tail::Highest).map_err(e)?, 7.0));
    check("tail fraction 1.0 rejected", tail_mae(&scores, &errors, 1.0, Tail::Lowest).is_err());
    let ten: Vec<f64> = (0..10).map(f64::from).collect();
    check("tail floor rule", close(tail_mae(&ten, &ten, 0.2, Tail::Highest).map_err(e)?, 8.5));
    let tied = [1.0; 4];
    check("tail stable ties", close(tail_mae(&tied, &[5.0, 7.0, 0.0, 0.0], 0.5, Tail::Lowest).map_err(e)?, 6.0));

    Ok(Outcome::new(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{total} examples within {UNIT_TOL:e}")
        } else {
            format!("failed: {}", failed.join(", "))
        },
    ))
}

fn vaeconf(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vaeconf"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn pipeline_outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    vaeconf(dir, &["synth", "--out", "d.csv", "--n-train", "400", "--n-test", "100", "--seed", "42"])?;
    vaeconf(dir, &["train", "--data", "d.csv", "--model-out", "m.vaec", "--epochs", "20", "--seed", "42"])?;
    for space in ["latent", "feature", "geo"] {
        let out = format!("{space}.csv");
        vaeconf(dir, &["score", "--model", "m.vaec", "--data", "d.csv", "--space", space, "--out", &out, "--latent-out", "l.csv"])?;
    }
    let stdout = vaeconf(
        dir,
        &["eval", "--scores", "latent.csv", "--scores", "feature.csv", "--scores", "geo.csv", "--labels", "l.csv", "--out", "report.txt", "--csv-out", "report.csv"],
    )?;
    let mut files = vec![("eval stdout".to_string(), stdout)];
    for name in ["d.csv", "d.meta.csv", "m.vaec", "m.history.csv", "latent.csv", "feature.csv", "geo.csv", "l.csv", "report.txt", "report.csv"] {
        files.push((name.to_string(), std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?));
    }
    Ok(files)
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_outputs(a.path())?;
    let second = pipeline_outputs(b.path())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Ok(Outcome::new(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across two runs", first.len())
        } else {
            format!("differ: {}", differing.join(", "))
        },
    ))
}

fn persistence(model: &VaeModel) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.vaec");
    save_model(model, &path).map_err(|e| e.to_string())?;
    let loaded = load_model(&path).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut mismatches = 0;
    for _ in 0..100 {
        let x = normal_vec(&mut rng, model.input_dim());
        let before = model.predict(&x).map_err(|e| e.to_string())?;
        let after = loaded.predict(&x).map_err(|e| e.to_string())?;
        mismatches += usize::from(before.to_bits() != after.to_bits());
    }
    Ok(Outcome::new(
        mismatches == 0,
        format!("{mismatches}/100 predictions differ bitwise after reload"),
    ))
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters pass arguments; this suite has one entry.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }

    let benchmark = run_benchmark();
    let results: Vec<(&str, Check)> = vec![
        ("1 gradient correctness", gradient_correctness()),
        ("2 kNN oracle equivalence", knn_equivalence()),
        ("3 latent directional claim", benchmark.as_ref().map_err(Clone::clone).and_then(directional)),
        ("4 geographic baseline contrast", benchmark.as_ref().map_err(Clone::clone).and_then(baseline_contrast)),
        ("5 unit fidelity", unit_fidelity()),
        ("6 pipeline determinism", determinism()),
        (
            "7 model persistence",
            benchmark.as_ref().map_err(Clone::clone).and_then(|b| persistence(&b.model)),
        ),
    ];

    let mut all = true;
    for (name, result) in results {
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(msg) => (false, format!("error: {msg}")),
        };
        all &= pass;
        println!("{} criterion {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
