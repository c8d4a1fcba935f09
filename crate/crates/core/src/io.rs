//! JSON checkpoints and headerless CSV sample files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::couplings::CouplingKind;
use crate::error::{Error, Result};
use crate::potential::GaussianMixturePotential;
use crate::processes::{PairBatch, TrajectoryBatch};
use crate::samples::Samples;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub iterations: usize,
    pub seed: u64,
    pub sampler: CouplingKind,
    /// Last batch loss; absent before training or when it was not finite.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub eps: f64,
    pub dim: usize,
    pub n_components: usize,
    pub raw_weights: Vec<f64>,
    /// One row of length `dim` per component.
    pub means: Vec<Vec<f64>>,
    pub raw_log_vars: Vec<Vec<f64>>,
    pub train_meta: TrainMeta,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), msg: msg.into() }
}

impl Checkpoint {
    pub fn from_potential(v: &GaussianMixturePotential, train_meta: TrainMeta) -> Self {
        let d = v.dim();
        Self {
            format_version: FORMAT_VERSION,
            eps: v.eps(),
            dim: d,
            n_components: v.n_components(),
            raw_weights: v.raw_weights().to_vec(),
            means: v.means().chunks(d).map(<[f64]>::to_vec).collect(),
            raw_log_vars: v.raw_log_vars().chunks(d).map(<[f64]>::to_vec).collect(),
            train_meta,
        }
    }

    pub fn to_potential(&self) -> Result<GaussianMixturePotential> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        let k = self.n_components;
        let rows_ok = |rows: &[Vec<f64>]| rows.len() == k && rows.iter().all(|r| r.len() == self.dim);
        if self.raw_weights.len() != k || !rows_ok(&self.means) || !rows_ok(&self.raw_log_vars) {
            return Err(Error::InvalidArgument("checkpoint arrays disagree with dim/n_components".into()));
        }
        GaussianMixturePotential::from_parts(
            self.eps,
            self.dim,
            &self.raw_weights,
            &self.means.concat(),
            &self.raw_log_vars.concat(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint fields are serializable")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| io_err(path, e))?;
        f.write_all(self.to_json().as_bytes()).map_err(|e| io_err(path, e))?;
        f.write_all(b"\n").map_err(|e| io_err(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut s = String::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_string(&mut s))
            .map_err(|e| io_err(path, e))?;
        let ck = Self::from_json(&s).map_err(|e| parse_err(path, e.to_string()))?;
        ck.to_potential().map_err(|e| parse_err(path, e.to_string()))?;
        Ok(ck)
    }
}

/// Shortest text that is guaranteed to parse back to the same bits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r)
}

/// Reads a headerless numeric CSV; every row must have the same width.
pub fn read_samples_from<R: Read>(r: R, path: &Path) -> Result<Samples> {
    let mut rdr = csv_reader(r);
    let mut dim = None;
    let mut data = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let width = *dim.get_or_insert(rec.len());
        if rec.len() != width {
            return Err(parse_err(path, format!("row {} has {} columns, expected {width}", line + 1, rec.len())));
        }
        for field in rec.iter() {
            let x: f64 = field
                .parse()
                .map_err(|_| parse_err(path, format!("row {}: not a number: {field:?}", line + 1)))?;
            if !x.is_finite() {
                return Err(parse_err(path, format!("row {}: non-finite value", line + 1)));
            }
            data.push(x);
        }
    }
    let dim = dim.ok_or_else(|| parse_err(path, "no data rows"))?;
    Samples::new(dim, data)
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Samples> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_samples_from(BufReader::new(f), path)
}

fn write_rows<I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(f));
    for row in rows {
        w.write_record(&row).map_err(|e| parse_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_samples(path: impl AsRef<Path>, samples: &Samples) -> Result<()> {
    write_rows(path.as_ref(), samples.rows().map(|r| r.iter().copied().map(format_f64).collect()))
}

/// One file with `2D` columns: x₀ then x₁.
pub fn write_pairs(path: impl AsRef<Path>, pairs: &PairBatch) -> Result<()> {
    let rows = pairs.x0.rows().zip(pairs.x1.rows()).map(|(a, b)| a.iter().chain(b).copied().map(format_f64).collect());
    write_rows(path.as_ref(), rows)
}

/// Splits a `2D`-column file into aligned source and target stores.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<PairBatch> {
    let path = path.as_ref();
    let joint = read_samples(path)?;
    if joint.dim() % 2 != 0 {
        return Err(parse_err(path, format!("paired file needs an even column count, got {}", joint.dim())));
    }
    let d = joint.dim() / 2;
    let mut x0 = Vec::with_capacity(joint.len() * d);
    let mut x1 = Vec::with_capacity(joint.len() * d);
    for r in joint.rows() {
        x0.extend_from_slice(&r[..d]);
        x1.extend_from_slice(&r[d..]);
    }
    PairBatch::new(Samples::new(d, x0)?, Samples::new(d, x1)?)
}

/// Rows `t, x₁, …, x_D`, grouped by trajectory.
pub fn write_trajectories(path: impl AsRef<Path>, traj: &TrajectoryBatch) -> Result<()> {
    let rows = (0..traj.n_trajectories()).flat_map(|n| {
        traj.times().iter().enumerate().map(move |(l, &t)| {
            std::iter::once(t).chain(traj.point(n, l).iter().copied()).map(format_f64).collect()
        })
    });
    write_rows(path.as_ref(), rows)
}

/// Two-column CSV of `(iteration, loss)`.
pub fn write_trace(path: impl AsRef<Path>, trace: &[crate::trainer::TracePoint]) -> Result<()> {
    write_rows(path.as_ref(), trace.iter().map(|p| vec![p.iteration.to_string(), format_f64(p.loss)]))
}

/// Headerless rows `t, column₁, column₂, …`.
pub fn write_curve(path: impl AsRef<Path>, curve: &crate::metrics::MetricCurve) -> Result<()> {
    let path = path.as_ref();
    if curve.columns.iter().any(|(_, c)| c.len() != curve.ts.len()) {
        return Err(Error::InvalidArgument("curve columns differ in length from the time grid".into()));
    }
    let rows = curve.ts.iter().enumerate().map(|(i, &t)| {
        std::iter::once(t).chain(curve.columns.iter().map(|(_, c)| c[i])).map(format_f64).collect()
    });
    write_rows(path, rows)
}
