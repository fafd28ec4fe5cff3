//! Trains on the default synthetic benchmark and prints one report per space.
//!
//! cargo run --release -p vaeconf-core --example synthetic_report [seed]

use std::time::Instant;

use vaeconf_core::confidence::{ScoreOptions, Space};
use vaeconf_core::evaluation::build_report;
use vaeconf_core::pipeline::{score_split, train_model};
use vaeconf_core::{generate, SynthConfig, VaeConfig};

fn main() -> vaeconf_core::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42);
    let data = generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    let cfg = VaeConfig {
        seed,
        ..VaeConfig::new(data.train.arity())
    };
    let start = Instant::now();
    let (model, history) = train_model(&data.train, &cfg, true)?;
    println!(
        "trained {} epochs in {:.1?}: loss {:.2} -> {:.2}",
        history.len(),
        start.elapsed(),
        history.total.first().copied().unwrap_or(f64::NAN),
        history.total.last().copied().unwrap_or(f64::NAN)
    );
    for space in Space::ALL {
        let run = score_split(&model, &data.train, &data.test, space, &ScoreOptions::default())?;
        let report = build_report(&run.report, &run.test_latent, 0.2)?;
        println!("--- reliable {} / {}", run.partition.plus.len(), run.train_latent.len());
        print!("{}", report.to_text());
    }
    Ok(())
}
