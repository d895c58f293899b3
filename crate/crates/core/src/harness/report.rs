use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{CellResult, Report};
use crate::error::{Error, Result};

/// Written as the first line of every report CSV.
pub const REPORT_NOTE: &str =
    "# sd is the sample standard deviation (divisor R-1) over non-divergent replications; mean/sd hold excess risks unless the config disables them, raw_mean/raw_sd hold raw testing risks";

pub const REPORT_COLUMNS: [&str; 12] = [
    "target",
    "noise",
    "train_loss",
    "test_loss",
    "n",
    "R",
    "mean",
    "sd",
    "divergences",
    "seed",
    "raw_mean",
    "raw_sd",
];

/// One line of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub target: String,
    pub noise: String,
    pub train_loss: String,
    pub test_loss: String,
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub mean: f64,
    pub sd: f64,
    pub divergences: usize,
    pub seed: u64,
    pub raw_mean: f64,
    pub raw_sd: f64,
}

impl Report {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.cells
            .iter()
            .flat_map(|c| {
                c.stats.iter().map(move |s| ReportRow {
                    target: c.target.clone(),
                    noise: c.noise.to_string(),
                    train_loss: c.train_loss.to_string(),
                    test_loss: s.test_loss.to_string(),
                    n: c.n,
                    r: c.replications,
                    mean: s.mean,
                    sd: s.sd,
                    divergences: c.divergences(),
                    seed: c.seed,
                    raw_mean: s.raw_mean,
                    raw_sd: s.raw_sd,
                })
            })
            .collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Writes the note line and one row per (cell, test loss).
pub fn emit_csv<W: Write>(report: &Report, mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_NOTE}").map_err(|e| Error::Format(e.to_string()))?;
    let mut w = csv::Writer::from_writer(out);
    for row in report.rows() {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Parses a report CSV; `#` lines are skipped and the header must match.
pub fn parse_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(REPORT_COLUMNS.iter().copied()) {
        return Err(Error::Format(format!(
            "report header must be {}",
            REPORT_COLUMNS.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Per-replication values of one cell.
pub fn emit_raw_csv<W: Write>(cell: &CellResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rep", "status", "test_loss", "value", "raw", "delta2"])
        .map_err(csv_err)?;
    let mut kept = 0;
    for rep in 0..cell.replications {
        if cell.diverged.contains(&rep) {
            w.write_record([rep.to_string(), "diverged".into(), String::new(), String::new(), String::new(), String::new()])
                .map_err(csv_err)?;
            continue;
        }
        for s in &cell.stats {
            w.write_record([
                rep.to_string(),
                "ok".into(),
                s.test_loss.to_string(),
                s.values[kept].to_string(),
                s.raw_values[kept].to_string(),
                cell.delta2[kept].to_string(),
            ])
            .map_err(csv_err)?;
        }
        kept += 1;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// File stem for a cell, safe on any filesystem.
pub fn cell_slug(cell: &CellResult) -> String {
    let raw = format!("{}_{}_{}_n{}", cell.target, cell.noise.slug(), cell.train_loss, cell.n);
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect::<String>()
        .to_ascii_lowercase()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunProvenance {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_secs: f64,
    pub threads: usize,
    /// Per-cell stream keys, in report order.
    pub cells: Vec<CellStream>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellStream {
    pub noise: String,
    pub train_loss: String,
    pub n: usize,
    pub stream_key: u64,
    pub diverged: Vec<usize>,
}

pub fn provenance(report: &Report, threads: usize) -> RunProvenance {
    RunProvenance {
        config: report.config.clone(),
        config_hash: report.config_hash(),
        seed: report.config.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: report.wall_time_secs,
        threads,
        cells: report
            .cells
            .iter()
            .map(|c| CellStream {
                noise: c.noise.to_string(),
                train_loss: c.train_loss.to_string(),
                n: c.n,
                stream_key: c.stream_key,
                diverged: c.diverged.clone(),
            })
            .collect(),
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Writes `report.csv`, `raw/<cell>.csv` and `provenance.json` under
/// `out`. Returns the paths written.
pub fn write_outputs(report: &Report, out: &Path, threads: usize) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = out.join("report.csv");
    emit_csv(report, std::io::BufWriter::new(create(&path)?))?;
    written.push(path);
    for cell in &report.cells {
        let path = out.join("raw").join(format!("{}.csv", cell_slug(cell)));
        emit_raw_csv(cell, std::io::BufWriter::new(create(&path)?))?;
        written.push(path);
    }
    let path = out.join("provenance.json");
    let json = serde_json::to_string_pretty(&provenance(report, threads)).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Reads `report.csv` back from an output directory.
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{NoiseModel, TargetSpec};
    use crate::harness::{run_table, RunOptions};
    use crate::losses::LossSpec;

    fn tiny_report() -> Report {
        let mut cfg = ExperimentConfig::new(TargetSpec::Heavisine, vec![32]);
        cfg.hidden = vec![8];
        cfg.test_size = 200;
        cfg.replications = 3;
        cfg.train.epochs = 10;
        cfg.train.allow_short_epochs = true;
        cfg.noises = vec![NoiseModel::contaminated()];
        cfg.train_losses = vec![LossSpec::lad()];
        run_table(&cfg, &RunOptions::default()).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let report = tiny_report();
        let mut buf = Vec::new();
        emit_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# sd is the sample standard deviation"));
        assert!(text.contains("\"Mixture(0.8,100)\""));
        let rows = parse_csv(buf.as_slice()).unwrap();
        let expect = report.rows();
        assert_eq!(rows.len(), 5);
        for (a, b) in rows.iter().zip(&expect) {
            assert_eq!((&a.target, &a.noise, &a.test_loss, a.n, a.r), (&b.target, &b.noise, &b.test_loss, b.n, b.r));
            for (x, y) in [(a.mean, b.mean), (a.sd, b.sd), (a.raw_mean, b.raw_mean), (a.raw_sd, b.raw_sd)] {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn parse_rejects_wrong_header() {
        assert!(parse_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn outputs_land_in_out_dir() {
        let report = tiny_report();
        let dir = tempfile::tempdir().unwrap();
        let written = write_outputs(&report, dir.path(), 1).unwrap();
        assert!(written.iter().all(|p| p.starts_with(dir.path())));
        assert_eq!(read_report(&dir.path().join("report.csv")).unwrap().len(), 5);
        let raw = fs::read_to_string(&written[1]).unwrap();
        assert_eq!(raw.lines().count(), 1 + 3 * 5);
        let prov: RunProvenance =
            serde_json::from_str(&fs::read_to_string(dir.path().join("provenance.json")).unwrap()).unwrap();
        assert_eq!(prov.config, report.config);
    }
}
