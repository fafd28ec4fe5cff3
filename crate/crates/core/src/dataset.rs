//! Tabular observations: CSV ingestion, date splits and feature standardization.
//!
//! The on-disk layout is `id,lat,lon,date,<feature...>,target`. Columns are
//! located by name; every column that is not one of the five reserved names is
//! a feature, kept in header order. Targets are raw counts and are never
//! scaled.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

const RESERVED: [&str; 5] = ["id", "lat", "lon", "date", "target"];
const DATE_FORMAT: &str = "%Y-%m-%d";

/// Floor applied to per-column standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub date: NaiveDate,
    pub features: Vec<f64>,
    /// Observed count. `None` only for datasets loaded without a target column.
    pub target: Option<f64>,
}

/// An ordered collection of observations sharing one feature schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    observations: Vec<Observation>,
}

impl Dataset {
    /// Builds a dataset, checking arity, id uniqueness and value ranges.
    pub fn new(feature_names: Vec<String>, observations: Vec<Observation>) -> Result<Self> {
        let arity = feature_names.len();
        let mut seen = HashSet::with_capacity(observations.len());
        for (i, obs) in observations.iter().enumerate() {
            validate_observation(obs, arity).map_err(|msg| Error::row(i + 1, msg))?;
            if !seen.insert(obs.id.as_str()) {
                return Err(Error::DuplicateId(obs.id.clone()));
            }
        }
        Ok(Self {
            feature_names,
            observations,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn arity(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// True when every observation carries a target.
    pub fn is_labeled(&self) -> bool {
        self.observations.iter().all(|o| o.target.is_some())
    }

    pub fn ids(&self) -> Vec<String> {
        self.observations.iter().map(|o| o.id.clone()).collect()
    }

    /// Targets of a fully labeled dataset.
    pub fn targets(&self) -> Option<Vec<f64>> {
        self.observations.iter().map(|o| o.target).collect()
    }

    /// Concatenates two datasets with the same feature schema.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::InvalidArgument(
                "cannot concatenate datasets with different feature columns".into(),
            ));
        }
        let mut observations = self.observations.clone();
        observations.extend(other.observations.iter().cloned());
        Dataset::new(self.feature_names.clone(), observations)
    }
}

fn validate_observation(obs: &Observation, arity: usize) -> std::result::Result<(), String> {
    if obs.id.is_empty() {
        return Err("empty id".into());
    }
    if obs.features.len() != arity {
        return Err(format!(
            "expected {arity} features, found {}",
            obs.features.len()
        ));
    }
    if let Some(j) = obs.features.iter().position(|v| !v.is_finite()) {
        return Err(format!("feature {j} is not finite"));
    }
    if !(obs.lat.is_finite() && (-90.0..=90.0).contains(&obs.lat)) {
        return Err(format!("lat {} outside [-90, 90]", obs.lat));
    }
    if !(obs.lon.is_finite() && (-180.0..=180.0).contains(&obs.lon)) {
        return Err(format!("lon {} outside [-180, 180]", obs.lon));
    }
    if let Some(t) = obs.target {
        if !(t.is_finite() && t >= 0.0) {
            return Err(format!("target {t} must be finite and non-negative"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    /// Reject files without a `target` column.
    pub require_target: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            require_target: true,
        }
    }
}

/// Loads a labeled dataset. Row numbers in errors are 1-based and exclude the header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_csv_with(path, CsvOptions::default())
}

pub fn load_csv_with(path: impl AsRef<Path>, opts: CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

pub fn read_csv<R: std::io::Read>(reader: R, opts: CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();

    let find = |name: &str| header.iter().position(|h| h == name);
    let col = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let id_col = col("id")?;
    let lat_col = col("lat")?;
    let lon_col = col("lon")?;
    let date_col = col("date")?;
    let target_col = if opts.require_target {
        Some(col("target")?)
    } else {
        find("target")
    };

    let feature_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !RESERVED.contains(h))
        .map(|(i, _)| i)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::MissingColumn("<feature>".into()));
    }
    let feature_names = feature_cols.iter().map(|&i| header[i].to_string()).collect();

    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |c: usize, name: &str| -> Result<&str> {
            match record.get(c) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::row(row, format!("empty `{name}` cell"))),
            }
        };
        let number = |c: usize, name: &str| -> Result<f64> {
            let raw = cell(c, name)?;
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::row(row, format!("`{name}` value `{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::row(row, format!("`{name}` value `{raw}` is not finite")));
            }
            Ok(v)
        };

        let raw_date = cell(date_col, "date")?;
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT)
            .map_err(|_| Error::row(row, format!("date `{raw_date}` is not YYYY-MM-DD")))?;
        let features = feature_cols
            .iter()
            .map(|&c| number(c, &header[c]))
            .collect::<Result<Vec<_>>>()?;
        let target = target_col.map(|c| number(c, "target")).transpose()?;

        let obs = Observation {
            id: cell(id_col, "id")?.to_string(),
            lat: number(lat_col, "lat")?,
            lon: number(lon_col, "lon")?,
            date,
            features,
            target,
        };
        validate_observation(&obs, feature_cols.len()).map_err(|m| Error::row(row, m))?;
        observations.push(obs);
    }
    Dataset::new(feature_names, observations)
}

/// Writes `id,lat,lon,date,<features>,target`; the target column is omitted
/// for unlabeled datasets. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(d, file)
}

pub fn write_csv_to<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let labeled = d.is_labeled();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = vec!["id", "lat", "lon", "date"];
    header.extend(d.feature_names.iter().map(String::as_str));
    if labeled {
        header.push("target");
    }
    wtr.write_record(&header)?;
    for obs in &d.observations {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(obs.id.clone());
        rec.push(obs.lat.to_string());
        rec.push(obs.lon.to_string());
        rec.push(obs.date.format(DATE_FORMAT).to_string());
        rec.extend(obs.features.iter().map(f64::to_string));
        if let (true, Some(t)) = (labeled, obs.target) {
            rec.push(t.to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Rows dated on or before `cutoff` train; later rows test.
pub fn split_by_date(d: &Dataset, cutoff: NaiveDate) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_by_date_unchecked(d, cutoff);
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    Ok((train, test))
}

/// Like [`split_by_date`] but allows either side to be empty.
pub fn split_by_date_unchecked(d: &Dataset, cutoff: NaiveDate) -> (Dataset, Dataset) {
    let (train, test): (Vec<_>, Vec<_>) = d
        .observations
        .iter()
        .cloned()
        .partition(|o| o.date <= cutoff);
    let make = |observations| Dataset {
        feature_names: d.feature_names.clone(),
        observations,
    };
    (make(train), make(test))
}

/// Per-feature affine standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Scaler {
    pub fn new(means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if means.len() != stds.len() {
            return Err(Error::LengthMismatch {
                what: "scaler means/stds",
                left: means.len(),
                right: stds.len(),
            });
        }
        if means.iter().any(|m| !m.is_finite()) || stds.iter().any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::InvalidArgument(
                "scaler means must be finite and stds strictly positive".into(),
            ));
        }
        Ok(Self { means, stds })
    }

    pub fn identity(arity: usize) -> Self {
        Self {
            means: vec![0.0; arity],
            stds: vec![1.0; arity],
        }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn arity(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z.len())?;
        Ok(z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }

    /// Standardizes every feature vector; ids, coordinates, dates and targets are untouched.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        self.check(d.arity())?;
        let observations = d
            .observations
            .iter()
            .map(|o| {
                Ok(Observation {
                    features: self.transform(&o.features)?,
                    ..o.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            feature_names: d.feature_names.clone(),
            observations,
        })
    }

    fn check(&self, found: usize) -> Result<()> {
        if found != self.arity() {
            return Err(Error::ArityMismatch {
                expected: self.arity(),
                found,
            });
        }
        Ok(())
    }
}

/// Column means and population standard deviations over `train`.
pub fn fit_scaler(train: &Dataset) -> Result<Scaler> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = train.len() as f64;
    let arity = train.arity();
    let mut means = vec![0.0; arity];
    for o in &train.observations {
        for (m, v) in means.iter_mut().zip(&o.features) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);

    let mut vars = vec![0.0; arity];
    for o in &train.observations {
        for ((acc, v), m) in vars.iter_mut().zip(&o.features).zip(&means) {
            *acc += (v - m) * (v - m);
        }
    }
    let stds = vars
        .into_iter()
        .map(|ss| (ss / n).sqrt().max(STD_FLOOR))
        .collect();
    Ok(Scaler { means, stds })
}

pub fn apply_scaler(s: &Scaler, d: &Dataset) -> Result<Dataset> {
    s.apply(d)
}
