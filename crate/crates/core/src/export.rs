//! CSV files exchanged between commands.
//!
//! Scores: `id,score,space,M,T,degenerate_k`, one row per test observation.
//! Latent export: `id,dim_0,...,dim_{L-1},prediction[,target,abs_error]`.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use crate::confidence::{ConfidenceReport, LatentSet, Points, Space};
use crate::error::{Error, Result};

/// Scores read back from a score CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub space: Space,
    pub m: usize,
    pub threshold: f64,
    pub degenerate_k: bool,
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_f64(raw: &str, row: usize, col: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::row(row, format!("`{col}` value `{raw}` is not a finite number")))
}

fn column(header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

pub fn write_scores_csv(report: &ConfidenceReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["id", "score", "space", "M", "T", "degenerate_k"])?;
    let (space, m, t, degenerate) = (
        report.space.to_string(),
        report.m.to_string(),
        report.threshold.to_string(),
        u8::from(report.degenerate_k).to_string(),
    );
    for (id, s) in report.ids.iter().zip(&report.scores) {
        w.write_record([id.as_str(), &s.to_string(), &space, &m, &t, &degenerate])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let mut r = open(path.as_ref())?;
    let header = r.headers()?.clone();
    let cols = ["id", "score", "space", "M", "T", "degenerate_k"]
        .map(|c| column(&header, c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut table: Option<ScoreTable> = None;
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let get = |k: usize| rec.get(cols[k]).unwrap_or("");
        let space: Space = get(2).parse()?;
        let m: usize = get(3)
            .parse()
            .map_err(|_| Error::row(row, format!("bad M `{}`", get(3))))?;
        let threshold = parse_f64(get(4), row, "T")?;
        let degenerate_k = get(5) == "1";
        let t = table.get_or_insert_with(|| ScoreTable {
            ids: Vec::new(),
            scores: Vec::new(),
            space,
            m,
            threshold,
            degenerate_k,
        });
        if t.space != space || t.m != m || t.threshold.to_bits() != threshold.to_bits() {
            return Err(Error::row(row, "score file mixes scoring runs"));
        }
        t.ids.push(get(0).to_string());
        t.scores.push(parse_f64(get(1), row, "score")?);
    }
    table.ok_or(Error::EmptyDataset)
}

/// Writes latent means and predictions; `targets`, when given, adds `target` and `abs_error`.
pub fn write_latent_csv(
    latent: &LatentSet,
    targets: Option<&[f64]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(t) = targets {
        if t.len() != latent.len() {
            return Err(Error::LengthMismatch {
                what: "targets vs latent rows",
                left: t.len(),
                right: latent.len(),
            });
        }
    }
    let mut w = create(path)?;
    let dim = latent.points.dim();
    let mut header: Vec<String> = vec!["id".into()];
    header.extend((0..dim).map(|j| format!("dim_{j}")));
    header.push("prediction".into());
    if targets.is_some() {
        header.push("target".into());
        header.push("abs_error".into());
    }
    w.write_record(&header)?;
    for (i, id) in latent.ids.iter().enumerate() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(id.clone());
        rec.extend(latent.points.row(i).iter().map(f64::to_string));
        let pred = latent.predictions[i];
        rec.push(pred.to_string());
        if let Some(t) = targets {
            rec.push(t[i].to_string());
            rec.push((pred - t[i]).abs().to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a latent export; returns the set and the targets when present.
pub fn read_latent_csv(path: impl AsRef<Path>) -> Result<(LatentSet, Option<Vec<f64>>)> {
    let mut r = open(path.as_ref())?;
    let header = r.headers()?.clone();
    let id_col = column(&header, "id")?;
    let pred_col = column(&header, "prediction")?;
    let dims: Vec<usize> = (0..)
        .map_while(|j| header.iter().position(|h| h == format!("dim_{j}")))
        .collect();
    if dims.is_empty() {
        return Err(Error::MissingColumn("dim_0".into()));
    }
    let target_col = header.iter().position(|h| h == "target");
    let error_col = header.iter().position(|h| h == "abs_error");

    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut predictions = Vec::new();
    let mut targets = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let get = |c: usize| rec.get(c).unwrap_or("");
        ids.push(get(id_col).to_string());
        for &c in &dims {
            data.push(parse_f64(get(c), row, &header[c])?);
        }
        predictions.push(parse_f64(get(pred_col), row, "prediction")?);
        if let Some(c) = target_col {
            targets.push(parse_f64(get(c), row, "target")?);
        }
        if let Some(c) = error_col {
            errors.push(parse_f64(get(c), row, "abs_error")?);
        }
    }
    let latent = LatentSet {
        ids,
        points: Points::new(dims.len(), data)?,
        predictions,
        errors: error_col.map(|_| errors),
    };
    Ok((latent, target_col.map(|_| targets)))
}

/// Reorders absolute errors from `labels` to follow `ids`.
pub fn join_errors(ids: &[String], labels: &LatentSet) -> Result<Vec<f64>> {
    let errors = labels.errors()?;
    let by_id: HashMap<&str, f64> = labels
        .ids
        .iter()
        .map(String::as_str)
        .zip(errors.iter().copied())
        .collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::IdMismatch(format!("no labeled row for score id `{id}`")))
        })
        .collect()
}
