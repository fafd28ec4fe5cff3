//! Synthetic trap-count datasets with distribution shift and heteroscedastic noise.
//!
//! Features come from Gaussian clusters. Training rows use the `n_clusters`
//! "seen" clusters only; a share of the test rows comes from extra clusters
//! that never appear in training and carry much larger target noise. The
//! target is a smooth nonlinear function of the features plus noise, clipped
//! at zero.
//!
//! Coordinates are drawn from one shared grid of trap sites regardless of
//! cluster or noise regime, so geographic distance carries no information
//! about prediction difficulty.

use std::fs::File;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, Observation};
use crate::error::{Error, Result};

const BASE_COUNT: f64 = 200.0;
const CENTER_SPREAD: f64 = 3.0;
const BLEND_WIDTH: f64 = 2.0;
const SITE_GRID: usize = 8;
const SITE_JITTER_DEG: f64 = 0.01;
const LAT_RANGE: (f64, f64) = (45.0, 46.0);
const LON_RANGE: (f64, f64) = (11.0, 12.6);

const FEATURE_NAMES: [&str; 12] = [
    "lst_day",
    "lst_night",
    "ndvi",
    "ndwi",
    "ndmi",
    "ndbi",
    "precipitation",
    "elevation",
    "slope",
    "aspect",
    "dist_water",
    "land_cover",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub n_clusters: usize,
    /// Share of test rows drawn from clusters absent in training.
    pub shifted_cluster_fraction: f64,
    pub noise_low: f64,
    pub noise_high: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 500,
            n_features: 12,
            n_clusters: 4,
            shifted_cluster_fraction: 0.3,
            noise_low: 5.0,
            noise_high: 80.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be positive");
        }
        if self.n_features == 0 || self.n_clusters == 0 {
            return bad("n_features and n_clusters must be positive");
        }
        if !(0.0..=1.0).contains(&self.shifted_cluster_fraction) {
            return bad("shifted_cluster_fraction must lie in [0, 1]");
        }
        if !(self.noise_low.is_finite() && self.noise_high.is_finite()) || self.noise_low < 0.0 {
            return bad("noise levels must be finite and non-negative");
        }
        if self.noise_low > self.noise_high {
            return bad("noise_low must not exceed noise_high");
        }
        Ok(())
    }

    /// Clusters that only ever appear in the test split.
    pub fn held_out_clusters(&self) -> usize {
        self.n_clusters.div_ceil(2)
    }
}

/// Ground truth for one generated row; never part of the features.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMeta {
    pub id: String,
    pub cluster: usize,
    pub shifted: bool,
    pub noise_std: f64,
    /// Noise-free mean count `g(x)` before clipping.
    pub signal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    /// Train rows first, then test rows.
    pub meta: Vec<SynthMeta>,
}

impl SynthOutput {
    /// Both splits in one dataset; train rows are dated 2010–2020, test rows 2021.
    pub fn combined(&self) -> Result<Dataset> {
        self.train.concat(&self.test)
    }
}

/// Last day of the training period; `split_by_date` with this cutoff recovers the splits.
pub fn train_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 12, 31).expect("valid date")
}

struct Cluster {
    center: Vec<f64>,
    level: f64,
    amplitude: f64,
    frequency: Vec<f64>,
    slope: Vec<f64>,
}

struct Signal {
    clusters: Vec<Cluster>,
}

impl Signal {
    fn draw(n_clusters: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let clusters = (0..n_clusters)
            .map(|_| Cluster {
                center: gaussian_vec(rng, dim, CENTER_SPREAD),
                level: gaussian(rng, 40.0),
                amplitude: rng.random_range(10.0..30.0),
                frequency: gaussian_vec(rng, dim, scale),
                slope: gaussian_vec(rng, dim, 4.0 * scale),
            })
            .collect();
        Self { clusters }
    }

    /// Softmax-blended sum of per-cluster sinusoid-plus-linear terms.
    fn eval(&self, x: &[f64]) -> f64 {
        let logits: Vec<f64> = self
            .clusters
            .iter()
            .map(|c| {
                let d2: f64 = x.iter().zip(&c.center).map(|(a, b)| (a - b) * (a - b)).sum();
                -d2 / (2.0 * BLEND_WIDTH * BLEND_WIDTH)
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let norm: f64 = weights.iter().sum();
        let mix: f64 = self
            .clusters
            .iter()
            .zip(&weights)
            .map(|(c, w)| {
                let (phase, lin) = x.iter().zip(&c.center).zip(c.frequency.iter().zip(&c.slope)).fold(
                    (0.0, 0.0),
                    |(p, l), ((xi, ci), (fi, si))| (p + fi * (xi - ci), l + si * (xi - ci)),
                );
                w * (c.level + c.amplitude * phase.sin() + lin)
            })
            .sum();
        BASE_COUNT + mix / norm
    }
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    std * z
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng, std)).collect()
}

fn feature_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|j| match FEATURE_NAMES.get(j) {
            Some(name) => name.to_string(),
            None => format!("feature_{j:02}"),
        })
        .collect()
}

fn random_date(rng: &mut ChaCha8Rng, from: NaiveDate, to: NaiveDate) -> NaiveDate {
    let span = (to - from).num_days() as u64;
    from + Days::new(rng.random_range(0..=span))
}

/// Deterministic per seed.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seen = cfg.n_clusters;
    let total_clusters = seen + cfg.held_out_clusters();
    let signal = Signal::draw(total_clusters, cfg.n_features, &mut rng);

    let sites: Vec<(f64, f64)> = (0..SITE_GRID * SITE_GRID)
        .map(|s| {
            let (r, c) = (s / SITE_GRID, s % SITE_GRID);
            let step = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * (i as f64 + 0.5) / SITE_GRID as f64;
            (step(LAT_RANGE, r), step(LON_RANGE, c))
        })
        .collect();

    let n_shifted = (cfg.shifted_cluster_fraction * cfg.n_test as f64).round() as usize;
    let mut test_shifted: Vec<bool> = (0..cfg.n_test).map(|i| i < n_shifted).collect();
    test_shifted.shuffle(&mut rng);

    let day = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
    let train_period = (day(2010, 1, 1), train_cutoff());
    let test_period = (day(2021, 1, 1), day(2021, 12, 31));

    let mut meta = Vec::with_capacity(cfg.n_train + cfg.n_test);
    let mut make_rows = |n: usize, shifted_of: &dyn Fn(usize) -> bool, period: (NaiveDate, NaiveDate), rng: &mut ChaCha8Rng| {
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let shifted = shifted_of(i);
            let cluster = if shifted {
                seen + rng.random_range(0..total_clusters - seen)
            } else {
                rng.random_range(0..seen)
            };
            let features: Vec<f64> = signal.clusters[cluster]
                .center
                .iter()
                .map(|c| c + gaussian(rng, 1.0))
                .collect();
            let noise_std = if shifted { cfg.noise_high } else { cfg.noise_low };
            let mean = signal.eval(&features);
            let noise = gaussian(rng, noise_std);
            let (lat0, lon0) = sites[rng.random_range(0..sites.len())];
            let lat = lat0 + gaussian(rng, SITE_JITTER_DEG);
            let lon = lon0 + gaussian(rng, SITE_JITTER_DEG);
            let id = format!("obs-{:06}", meta.len() + 1);
            meta.push(SynthMeta {
                id: id.clone(),
                cluster,
                shifted,
                noise_std,
                signal: mean,
            });
            rows.push(Observation {
                id,
                lat,
                lon,
                date: random_date(rng, period.0, period.1),
                features,
                target: Some((mean + noise).max(0.0)),
            });
        }
        rows
    };

    let train_rows = make_rows(cfg.n_train, &|_| false, train_period, &mut rng);
    let test_rows = make_rows(cfg.n_test, &|i| test_shifted[i], test_period, &mut rng);
    let names = feature_names(cfg.n_features);
    Ok(SynthOutput {
        train: Dataset::new(names.clone(), train_rows)?,
        test: Dataset::new(names, test_rows)?,
        meta,
    })
}

/// Sidecar `id,cluster,shifted,noise_std`.
pub fn write_meta_csv(meta: &[SynthMeta], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["id", "cluster", "shifted", "noise_std"])?;
    for m in meta {
        w.write_record([
            m.id.clone(),
            m.cluster.to_string(),
            u8::from(m.shifted).to_string(),
            m.noise_std.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `<dir>/<stem>.meta.csv` next to a dataset path.
pub fn meta_path(dataset_path: &Path) -> std::path::PathBuf {
    let stem = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    dataset_path.with_file_name(format!("{stem}.meta.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split_by_date;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_train: 200,
            n_test: 100,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(&small(1)).unwrap(), generate(&small(1)).unwrap());
        assert_ne!(generate(&small(1)).unwrap().train, generate(&small(2)).unwrap().train);
    }

    #[test]
    fn split_by_cutoff_recovers_splits() {
        let out = generate(&small(3)).unwrap();
        let (train, test) = split_by_date(&out.combined().unwrap(), train_cutoff()).unwrap();
        assert_eq!(train, out.train);
        assert_eq!(test, out.test);
    }

    #[test]
    fn shift_fraction_controls_test_mixture() {
        let out = generate(&small(4)).unwrap();
        let test_meta = &out.meta[200..];
        assert_eq!(test_meta.iter().filter(|m| m.shifted).count(), 30);
        assert!(out.meta[..200].iter().all(|m| !m.shifted && m.cluster < 4));
        assert!(test_meta.iter().filter(|m| m.shifted).all(|m| m.cluster >= 4));

        let none = generate(&SynthConfig {
            shifted_cluster_fraction: 0.0,
            ..small(4)
        })
        .unwrap();
        assert!(none.meta.iter().all(|m| !m.shifted && m.cluster < 4 && m.noise_std == 5.0));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(generate(&SynthConfig {
            noise_low: 10.0,
            noise_high: 1.0,
            ..small(0)
        })
        .is_err());
        assert!(generate(&SynthConfig {
            shifted_cluster_fraction: 1.5,
            ..small(0)
        })
        .is_err());
        assert!(generate(&SynthConfig {
            n_test: 0,
            ..small(0)
        })
        .is_err());
    }

    #[test]
    fn meta_sidecar_name() {
        assert_eq!(meta_path(Path::new("/tmp/d.csv")), Path::new("/tmp/d.meta.csv"));
    }
}
