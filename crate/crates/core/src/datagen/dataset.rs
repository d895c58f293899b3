use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifold::manifold_inputs;
use super::noise::NoiseModel;
use super::prng::PrngStream;
use super::targets::TargetFn;
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// How the covariates are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputSpec {
    /// i.i.d. Uniform[0,1]^d.
    #[default]
    Uniform,
    /// Near a `d_m`-dimensional manifold, see [`super::manifold`].
    Manifold { d_m: usize, rho: f64 },
}

/// Options for [`make_dataset_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct DatasetOptions {
    pub inputs: InputSpec,
    /// Test hook: skip noise so `y = f0(x)` exactly. The noise stream is
    /// still consumed so the covariates do not change.
    pub force_zero_noise: bool,
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub format_version: u32,
    pub target: String,
    pub noise: String,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub stream_id: u64,
    #[serde(default)]
    pub inputs: InputSpec,
    #[serde(default)]
    pub noiseless: bool,
}

/// `n` samples `(x_i, y_i)` with `x_i ∈ [0,1]^d` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub d: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    /// Writes `x1..xd,y` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .x(i)
                .iter()
                .chain(std::iter::once(&self.ys[i]))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    /// Parses the CSV body written by [`Dataset::write_csv`]. The column count
    /// must match `provenance.d + 1` and the row count `provenance.n`.
    pub fn read_csv<R: Read>(input: R, provenance: Provenance) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let d = provenance.d;
        let header = r.headers().map_err(csv_err)?.clone();
        let expected: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Format(format!(
                "dataset header must be {}, got {}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != d + 1 {
                return Err(Error::Format(format!("row {}: expected {} fields", line + 1, d + 1)));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: bad number `{field}`", line + 1)))?;
                if !v.is_finite() {
                    return Err(Error::Format(format!("row {}: non-finite value", line + 1)));
                }
                if j < d {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Format(format!("row {}: x outside [0,1]", line + 1)));
                    }
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
        }
        if ys.len() != provenance.n || ys.is_empty() {
            return Err(Error::Format(format!(
                "provenance says n={}, file has {} rows",
                provenance.n,
                ys.len()
            )));
        }
        Ok(Dataset { xs, ys, d, provenance })
    }

    /// Writes `<stem>.csv` and `<stem>.json` (provenance sidecar).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let json_path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&self.provenance).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json_path = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let provenance: Provenance = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if provenance.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset format version {}",
                provenance.format_version
            )));
        }
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        Dataset::read_csv(std::io::BufReader::new(f), provenance)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Covariates for `n` points: uniform on the cube, or near a manifold.
pub fn sample_inputs(inputs: &InputSpec, d: usize, n: usize, rng: &mut PrngStream) -> Result<Vec<f64>> {
    match *inputs {
        InputSpec::Uniform => Ok((0..n * d).map(|_| rng.uniform01()).collect()),
        InputSpec::Manifold { d_m, rho } => manifold_inputs(d_m, d, rho, n, rng),
    }
}

/// `y_i = f0(x_i) + η_i` with uniform covariates.
pub fn make_dataset(target: &TargetFn, noise: &NoiseModel, n: usize, rng: &mut PrngStream) -> Result<Dataset> {
    make_dataset_with(target, noise, n, &DatasetOptions::default(), rng)
}

/// Draws all covariates first, then all noise terms, from `rng`.
pub fn make_dataset_with(
    target: &TargetFn,
    noise: &NoiseModel,
    n: usize,
    opts: &DatasetOptions,
    rng: &mut PrngStream,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset needs n >= 1"));
    }
    noise.validate()?;
    let provenance = Provenance {
        format_version: DATASET_FORMAT_VERSION,
        target: target.name(),
        noise: noise.to_string(),
        n,
        d: target.dim(),
        seed: rng.seed(),
        stream_id: rng.stream_id(),
        inputs: opts.inputs,
        noiseless: opts.force_zero_noise,
    };
    let d = target.dim();
    let xs = sample_inputs(&opts.inputs, d, n, rng)?;
    let ys = xs
        .chunks_exact(d)
        .map(|x| {
            let eta = noise.sample(rng);
            target.eval_unchecked(x) + if opts.force_zero_noise { 0.0 } else { eta }
        })
        .collect();
    Ok(Dataset { xs, ys, d, provenance })
}
