//! Latent projection, reliable-set partition and nearest-neighbour confidence distances.
//!
//! Training observations whose absolute error is at most the threshold `T`
//! form the reliable set. The confidence distance of a query is the mean
//! Euclidean distance to its `k = min(M, |reliable|)` nearest reliable
//! training points. The same engine scores three representations of the
//! data: latent means, standardized features, and `(lat, lon)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::vae::VaeModel;

/// Row-major matrix of equally sized points.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values cannot form rows of width {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::ArityMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn scaled(&self, s: f64) -> Points {
        Points {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points {
            dim: self.dim,
            data,
        }
    }
}

/// Latent means and predictions for a dataset, row-aligned with its ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    pub ids: Vec<String>,
    pub points: Points,
    pub predictions: Vec<f64>,
    /// `|ŷ − y|`, present when the dataset is labeled.
    pub errors: Option<Vec<f64>>,
}

impl LatentSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Targets recovered as `prediction ± error` are not stored; callers keep the dataset.
    pub fn errors(&self) -> Result<&[f64]> {
        self.errors.as_deref().ok_or(Error::MissingErrors)
    }
}

/// Encodes every observation of a standardized dataset with the posterior mean
/// and decodes it.
pub fn project(m: &VaeModel, d: &Dataset) -> Result<LatentSet> {
    if d.arity() != m.input_dim() {
        return Err(Error::ArityMismatch {
            expected: m.input_dim(),
            found: d.arity(),
        });
    }
    let mut data = Vec::with_capacity(d.len() * m.latent_dim());
    let mut predictions = Vec::with_capacity(d.len());
    for obs in d.observations() {
        let (mu, _) = m.encode(&obs.features)?;
        predictions.push(m.decode(&mu)?);
        data.extend(mu);
    }
    let errors = d.targets().map(|ys| {
        predictions
            .iter()
            .zip(ys)
            .map(|(p, y)| (p - y).abs())
            .collect()
    });
    Ok(LatentSet {
        ids: d.ids(),
        points: Points::new(m.latent_dim(), data)?,
        predictions,
        errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    /// `T` = mean absolute training error.
    #[default]
    MeanError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliablePartition {
    /// Indices with error ≤ threshold.
    pub plus: Vec<usize>,
    /// Indices with error > threshold.
    pub minus: Vec<usize>,
    pub threshold: f64,
}

pub fn partition_reliable(train: &LatentSet, rule: ThresholdRule) -> Result<ReliablePartition> {
    let errors = train.errors()?;
    partition_errors(errors, rule)
}

/// Partition over a bare error vector.
pub fn partition_errors(errors: &[f64], rule: ThresholdRule) -> Result<ReliablePartition> {
    if errors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let threshold = match rule {
        ThresholdRule::MeanError => errors.iter().sum::<f64>() / errors.len() as f64,
    };
    let (plus, minus): (Vec<usize>, Vec<usize>) =
        (0..errors.len()).partition(|&i| errors[i] <= threshold);
    if plus.is_empty() {
        return Err(Error::EmptyReliableSet);
    }
    Ok(ReliablePartition {
        plus,
        minus,
        threshold,
    })
}

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc.sqrt()
}

/// Mean of the `k` smallest distances and `k` itself.
fn knn_mean(q: &[f64], points: &Points, subset: Option<&[usize]>, m: usize, scratch: &mut Vec<f64>) -> (f64, usize) {
    scratch.clear();
    match subset {
        Some(idx) => scratch.extend(idx.iter().map(|&i| euclidean(q, points.row(i)))),
        None => scratch.extend(points.rows().map(|r| euclidean(q, r))),
    }
    let k = m.min(scratch.len());
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    }
    let nearest = &mut scratch[..k];
    nearest.sort_unstable_by(f64::total_cmp);
    (nearest.iter().sum::<f64>() / k as f64, k)
}

fn check_query(q: &[f64], points: &Points, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    if points.is_empty() {
        return Err(Error::EmptyReliableSet);
    }
    if q.len() != points.dim() {
        return Err(Error::ArityMismatch {
            expected: points.dim(),
            found: q.len(),
        });
    }
    Ok(())
}

/// Mean Euclidean distance from `q` to its `min(m, n)` nearest rows of `reliable`.
pub fn mean_knn_distance(q: &[f64], reliable: &Points, m: usize) -> Result<f64> {
    check_query(q, reliable, m)?;
    Ok(knn_mean(q, reliable, None, m, &mut Vec::new()).0)
}

/// Brute-force reference for [`mean_knn_distance`]: every distance, full sort,
/// average of the first `k`.
pub fn knn_oracle(q: &[f64], points: &Points, m: usize) -> Result<f64> {
    check_query(q, points, m)?;
    let mut all: Vec<f64> = points
        .rows()
        .map(|r| {
            r.iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let k = m.min(all.len());
    Ok(all[..k].iter().sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Latent,
    Feature,
    Geographic,
}

impl Space {
    pub const ALL: [Space; 3] = [Space::Latent, Space::Feature, Space::Geographic];

    pub fn as_str(self) -> &'static str {
        match self {
            Space::Latent => "latent",
            Space::Feature => "feature",
            Space::Geographic => "geo",
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" | "ls" => Ok(Space::Latent),
            "feature" | "fs" => Ok(Space::Feature),
            "geo" | "geographic" | "gs" => Ok(Space::Geographic),
            other => Err(Error::InvalidArgument(format!("unknown space `{other}`"))),
        }
    }
}

/// Which training rows a query is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceSet {
    /// Only the reliable partition.
    #[default]
    Reliable,
    /// Every training row.
    AllTrain,
}

impl FromStr for ReferenceSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reliable" => Ok(ReferenceSet::Reliable),
            "all" => Ok(ReferenceSet::AllTrain),
            other => Err(Error::InvalidArgument(format!("unknown reference set `{other}`"))),
        }
    }
}

/// A standardized dataset together with its projection.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub data: &'a Dataset,
    pub latent: &'a LatentSet,
}

impl<'a> Split<'a> {
    pub fn new(data: &'a Dataset, latent: &'a LatentSet) -> Result<Self> {
        if data.len() != latent.len()
            || data
                .observations()
                .iter()
                .zip(&latent.ids)
                .any(|(o, id)| &o.id != id)
        {
            return Err(Error::IdMismatch(
                "dataset rows and latent rows are not aligned".into(),
            ));
        }
        Ok(Self { data, latent })
    }

    /// Coordinates of every row in `space`.
    pub fn representation(&self, space: Space) -> Result<Points> {
        match space {
            Space::Latent => Ok(self.latent.points.clone()),
            Space::Feature => {
                let rows: Vec<&[f64]> = self
                    .data
                    .observations()
                    .iter()
                    .map(|o| o.features.as_slice())
                    .collect();
                Points::from_rows(self.data.arity(), &rows)
            }
            Space::Geographic => {
                let data = self
                    .data
                    .observations()
                    .iter()
                    .flat_map(|o| [o.lat, o.lon])
                    .collect();
                Points::new(2, data)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOptions {
    pub m: usize,
    pub reference: ReferenceSet,
    /// Worker threads; 0 or 1 scores sequentially. Results never depend on it.
    pub threads: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            m: 3,
            reference: ReferenceSet::Reliable,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReport {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub space: Space,
    pub m: usize,
    pub threshold: f64,
    pub reliable_count: usize,
    pub reference: ReferenceSet,
    /// Set when fewer than `m` reference points were available.
    pub degenerate_k: bool,
}

/// Scores each query row against `reference` rows restricted to `subset`.
/// This is the one engine behind every space.
pub fn score_points(
    queries: &Points,
    reference: &Points,
    subset: &[usize],
    m: usize,
    threads: usize,
) -> Result<(Vec<f64>, bool)> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    if subset.is_empty() {
        return Err(Error::EmptyReliableSet);
    }
    if queries.dim() != reference.dim() {
        return Err(Error::ArityMismatch {
            expected: reference.dim(),
            found: queries.dim(),
        });
    }
    let degenerate = subset.len() < m;
    let one = |q: &[f64], scratch: &mut Vec<f64>| knn_mean(q, reference, Some(subset), m, scratch).0;

    let scores = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..queries.len())
                .into_par_iter()
                .map_init(Vec::new, |scratch, j| one(queries.row(j), scratch))
                .collect()
        })
    } else {
        let mut scratch = Vec::new();
        queries.rows().map(|q| one(q, &mut scratch)).collect()
    };
    Ok((scores, degenerate))
}

/// Confidence distances of every test row in `space`.
pub fn score(
    space: Space,
    train: Split<'_>,
    test: Split<'_>,
    part: &ReliablePartition,
    opts: &ScoreOptions,
) -> Result<ConfidenceReport> {
    let n_train = train.latent.len();
    if part.plus.iter().chain(&part.minus).any(|&i| i >= n_train)
        || part.plus.len() + part.minus.len() != n_train
    {
        return Err(Error::InvalidArgument(
            "partition does not cover the training rows".into(),
        ));
    }
    let reference = train.representation(space)?;
    let queries = test.representation(space)?;
    let all: Vec<usize>;
    let subset = match opts.reference {
        ReferenceSet::Reliable => part.plus.as_slice(),
        ReferenceSet::AllTrain => {
            all = (0..n_train).collect();
            &all
        }
    };
    let (scores, degenerate_k) = score_points(&queries, &reference, subset, opts.m, opts.threads)?;
    Ok(ConfidenceReport {
        ids: test.latent.ids.clone(),
        scores,
        space,
        m: opts.m,
        threshold: part.threshold,
        reliable_count: part.plus.len(),
        reference: opts.reference,
        degenerate_k,
    })
}
