use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::metrics::{delta2_from, mean_loss, mean_sd, Clamped, Predictor};
use crate::datagen::{make_dataset_with, Dataset, DatasetOptions, NoiseModel, PrngStream, TargetFn};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::mlp::MlpParams;
use crate::optim::{train, TrainTrace};

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub threads: usize,
    /// Keep the first replication's model, trace and training data.
    pub keep_first: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            threads: 1,
            keep_first: false,
        }
    }
}

/// Per test loss: excess (or raw) risks over the non-divergent replications.
#[derive(Debug, Clone, PartialEq)]
pub struct TestLossStats {
    pub test_loss: LossSpec,
    /// Reported values: excess risks, or raw risks when excess is off.
    pub values: Vec<f64>,
    pub raw_values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub raw_mean: f64,
    pub raw_sd: f64,
}

/// First replication's artifacts, for plots.
#[derive(Debug, Clone)]
pub struct FirstRep {
    pub params: MlpParams,
    pub trace: TrainTrace,
    pub train: Dataset,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub target: String,
    pub noise: NoiseModel,
    pub train_loss: LossSpec,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub stream_key: u64,
    pub stats: Vec<TestLossStats>,
    pub delta2: Vec<f64>,
    /// Indices of replications that diverged and were excluded.
    pub diverged: Vec<usize>,
    pub first: Option<FirstRep>,
}

impl CellResult {
    pub fn divergences(&self) -> usize {
        self.diverged.len()
    }

    pub fn stats_for(&self, test_loss: &LossSpec) -> Option<&TestLossStats> {
        self.stats.iter().find(|s| &s.test_loss == test_loss)
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let head = self
            .stats
            .iter()
            .map(|s| format!("{}={:.4}({:.4})", s.test_loss, s.mean, s.sd))
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "{} {} n={} train={} R={} div={} | {}",
            self.target,
            self.noise,
            self.n,
            self.train_loss,
            self.replications,
            self.divergences(),
            head
        )
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub wall_time_secs: f64,
}

impl Report {
    pub fn total_divergences(&self) -> usize {
        self.cells.iter().map(CellResult::divergences).sum()
    }

    pub fn cell(&self, noise: &NoiseModel, n: usize, train_loss: &LossSpec) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| &c.noise == noise && c.n == n && &c.train_loss == train_loss)
    }

    /// SHA-256 of the canonical config JSON.
    pub fn config_hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(&self.config).expect("config serializes")))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable stream id of a (target, noise, n) cell. The train loss is left
/// out on purpose: every loss sees the same data and initial weights.
pub fn cell_stream_key(target: &str, noise: &NoiseModel, n: usize) -> u64 {
    let noise = serde_json::to_string(noise).expect("noise serializes");
    let digest = Sha256::digest(format!("{target}|{noise}|{n}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn replication_stream(seed: u64, key: u64, rep: usize) -> PrngStream {
    let mut h = Sha256::new();
    h.update(key.to_le_bytes());
    h.update((rep as u64).to_le_bytes());
    let digest = h.finalize();
    PrngStream::with_stream(seed, u64::from_le_bytes(digest[..8].try_into().unwrap()))
}

/// Training set, test set and training stream of one replication.
#[derive(Debug, Clone)]
pub struct ReplicationDraw {
    pub train: Dataset,
    pub test: Dataset,
    /// Drives weight initialization and shuffling.
    pub train_rng: PrngStream,
}

/// The draw replication `rep` of the (noise, n) cell uses in [`run_table`].
pub fn replication_draw(
    cfg: &ExperimentConfig,
    target: &TargetFn,
    noise: &NoiseModel,
    n: usize,
    rep: usize,
) -> Result<ReplicationDraw> {
    let key = cell_stream_key(&target.name(), noise, n);
    let mut stream = replication_stream(cfg.seed, key, rep);
    let mut data_rng = stream.split();
    let mut test_rng = stream.split();
    let train_rng = stream.split();
    let opts = DatasetOptions {
        inputs: cfg.inputs,
        force_zero_noise: cfg.force_zero_noise,
    };
    Ok(ReplicationDraw {
        train: make_dataset_with(target, noise, n, &opts, &mut data_rng)?,
        test: make_dataset_with(target, noise, cfg.test_size, &opts, &mut test_rng)?,
        train_rng,
    })
}

#[derive(Debug, Clone, Copy)]
struct CellSpec {
    noise: NoiseModel,
    n: usize,
    train_loss: LossSpec,
}

enum RepOutcome {
    Done {
        excess: Vec<f64>,
        raw: Vec<f64>,
        delta2: f64,
        first: Option<Box<FirstRep>>,
    },
    Diverged,
}

fn cells_of(cfg: &ExperimentConfig) -> Vec<CellSpec> {
    let mut out = Vec::new();
    for noise in &cfg.noises {
        for &n in &cfg.n {
            for loss in &cfg.train_losses {
                out.push(CellSpec {
                    noise: *noise,
                    n,
                    train_loss: *loss,
                });
            }
        }
    }
    out
}

fn run_replication(
    cfg: &ExperimentConfig,
    target: &TargetFn,
    cell: &CellSpec,
    rep: usize,
    keep: bool,
) -> Result<RepOutcome> {
    let ReplicationDraw {
        train: data,
        test,
        mut train_rng,
    } = replication_draw(cfg, target, &cell.noise, cell.n, rep)?;
    let shape = cfg.shape()?;

    let (params, trace) = match train(&data, &shape, &cell.train_loss, &cfg.train, &mut train_rng) {
        Ok(ok) => ok,
        Err(Error::Diverged { .. }) => return Ok(RepOutcome::Diverged),
        Err(e) => return Err(e),
    };

    let preds = if cfg.clamp_eval {
        let lo = data.ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Clamped {
            inner: &params,
            lo,
            hi,
        }
        .predict(&test.xs)?
    } else {
        params.predict(&test.xs)?
    };
    if preds.iter().any(|p| !p.is_finite()) {
        return Ok(RepOutcome::Diverged);
    }
    let truth = target.predict(&test.xs)?;

    let mut excess = Vec::with_capacity(cfg.test_losses.len());
    let mut raw = Vec::with_capacity(cfg.test_losses.len());
    for loss in &cfg.test_losses {
        let r = mean_loss(&preds, &test.ys, loss)?;
        raw.push(r);
        excess.push(r - mean_loss(&truth, &test.ys, loss)?);
    }
    let first = (keep && rep == 0).then(|| Box::new(FirstRep { params, trace, train: data }));
    Ok(RepOutcome::Done {
        excess,
        raw,
        delta2: delta2_from(&preds, &truth),
        first,
    })
}

fn assemble(cfg: &ExperimentConfig, target: &TargetFn, cell: &CellSpec, outcomes: Vec<RepOutcome>) -> Result<CellResult> {
    let mut diverged = Vec::new();
    let mut excess_cols: Vec<Vec<f64>> = vec![Vec::new(); cfg.test_losses.len()];
    let mut raw_cols: Vec<Vec<f64>> = vec![Vec::new(); cfg.test_losses.len()];
    let mut delta2 = Vec::new();
    let mut first = None;
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            RepOutcome::Diverged => diverged.push(rep),
            RepOutcome::Done {
                excess,
                raw,
                delta2: d2,
                first: f,
            } => {
                for (col, v) in excess_cols.iter_mut().zip(excess) {
                    col.push(v);
                }
                for (col, v) in raw_cols.iter_mut().zip(raw) {
                    col.push(v);
                }
                delta2.push(d2);
                if f.is_some() {
                    first = f.map(|b| *b);
                }
            }
        }
    }
    if diverged.len() == cfg.replications {
        return Err(Error::Diverged {
            epoch: 0,
            detail: format!(
                "all {} replications diverged for {} / {} / {} / n={}",
                cfg.replications,
                target.name(),
                cell.noise,
                cell.train_loss,
                cell.n
            ),
        });
    }
    let stats = cfg
        .test_losses
        .iter()
        .zip(excess_cols.into_iter().zip(raw_cols))
        .map(|(loss, (ex, raw))| {
            let values = if cfg.excess { ex } else { raw.clone() };
            let (mean, sd) = mean_sd(&values);
            let (raw_mean, raw_sd) = mean_sd(&raw);
            TestLossStats {
                test_loss: *loss,
                values,
                raw_values: raw,
                mean,
                sd,
                raw_mean,
                raw_sd,
            }
        })
        .collect();
    Ok(CellResult {
        target: target.name(),
        noise: cell.noise,
        train_loss: cell.train_loss,
        n: cell.n,
        replications: cfg.replications,
        seed: cfg.seed,
        stream_key: cell_stream_key(&target.name(), &cell.noise, cell.n),
        stats,
        delta2,
        diverged,
        first,
    })
}

/// Runs the whole grid. Replications run on a pool of `opts.threads`
/// workers; each draws from its own keyed stream and results are gathered
/// by index, so the report does not depend on the thread count.
pub fn run_table(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    cfg.validate()?;
    let started = Instant::now();
    let target = cfg.target.build()?;
    let cells = cells_of(cfg);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<Result<RepOutcome>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_replication(cfg, &target, &cells[c], r, opts.keep_first))
            .collect()
    });

    let mut per_cell: Vec<Vec<RepOutcome>> = (0..cells.len()).map(|_| Vec::new()).collect();
    for ((c, _), out) in jobs.iter().zip(outcomes) {
        per_cell[*c].push(out?);
    }
    let results = cells
        .iter()
        .zip(per_cell)
        .map(|(cell, outs)| assemble(cfg, &target, cell, outs))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        config: cfg.clone(),
        cells: results,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// A single (noise, train loss, n) cell of `cfg`.
pub fn run_cell(cfg: &ExperimentConfig, noise: &NoiseModel, train_loss: &LossSpec, n: usize, opts: &RunOptions) -> Result<CellResult> {
    let mut one = cfg.clone();
    one.noises = vec![*noise];
    one.train_losses = vec![*train_loss];
    one.n = vec![n];
    Ok(run_table(&one, opts)?.cells.remove(0))
}

/// Human-readable plan of the cells a config would run.
pub fn plan(cfg: &ExperimentConfig) -> Vec<String> {
    let target = cfg.target.build().map(|t| t.name()).unwrap_or_else(|_| "?".into());
    cells_of(cfg)
        .iter()
        .enumerate()
        .map(|(i, c)| {
            format!(
                "cell {}: target={} noise={} n={} train_loss={} R={} T={} epochs={}",
                i + 1,
                target,
                c.noise,
                c.n,
                c.train_loss,
                cfg.replications,
                cfg.test_size,
                cfg.train.epochs
            )
        })
        .collect()
}

/// Least-squares slope of `log y` on `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_abscissa(xs)?;
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if ys.iter().any(|y| !(*y > 0.0)) {
        return Err(Error::invalid("log-log slope needs positive ordinates"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn check_abscissa(xs: &[f64]) -> Result<()> {
    if xs.len() < 2 {
        return Err(Error::invalid("need at least two points"));
    }
    if xs.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::invalid("log-log slope needs positive abscissae"));
    }
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return Err(Error::invalid("abscissae have zero variance"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    /// Fitted `d log(mean) / d log n`; `None` when a mean is not positive.
    pub slope: Option<f64>,
}

/// Runs one (noise, train loss) cell at each `n` and scores it under
/// `test_loss`. Each `n` draws from the same keyed stream a full table
/// would use.
pub fn convergence_sweep(
    cfg: &ExperimentConfig,
    noise: &NoiseModel,
    train_loss: &LossSpec,
    test_loss: &LossSpec,
    n_list: &[usize],
    opts: &RunOptions,
) -> Result<Sweep> {
    if n_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("n_list must be sorted ascending"));
    }
    let xs: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    check_abscissa(&xs)?;
    let mut one = cfg.clone();
    one.noises = vec![*noise];
    one.train_losses = vec![*train_loss];
    one.test_losses = vec![*test_loss];
    one.n = n_list.to_vec();
    let report = run_table(&one, opts)?;
    let points: Vec<SweepPoint> = report
        .cells
        .iter()
        .map(|c| {
            let s = &c.stats[0];
            SweepPoint {
                n: c.n,
                mean: s.mean,
                sd: s.sd,
                median: super::metrics::median(&s.values),
            }
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean).collect();
    Ok(Sweep {
        slope: loglog_slope(&xs, &ys).ok(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::TargetSpec;

    fn small(target: TargetSpec) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(target, vec![64]);
        cfg.hidden = vec![16, 16];
        cfg.test_size = 500;
        cfg.replications = 2;
        cfg.train.epochs = 30;
        cfg.train.allow_short_epochs = true;
        cfg.noises = vec![NoiseModel::Normal];
        cfg.train_losses = vec![LossSpec::ls(), LossSpec::huber(1.345).unwrap()];
        cfg.seed = 17;
        cfg
    }

    #[test]
    fn deterministic_across_threads() {
        let cfg = small(TargetSpec::Doppler);
        let a = run_table(&cfg, &RunOptions::default()).unwrap();
        let b = run_table(
            &cfg,
            &RunOptions {
                threads: 3,
                keep_first: false,
            },
        )
        .unwrap();
        assert_eq!(a.cells.len(), 2);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.stats, y.stats);
            assert_eq!(x.delta2, y.delta2);
        }
    }

    #[test]
    fn cell_matches_table_entry() {
        let cfg = small(TargetSpec::Bumps);
        let table = run_table(&cfg, &RunOptions::default()).unwrap();
        let huber = LossSpec::huber(1.345).unwrap();
        let cell = run_cell(&cfg, &NoiseModel::Normal, &huber, 64, &RunOptions::default()).unwrap();
        assert_eq!(table.cell(&NoiseModel::Normal, 64, &huber).unwrap().stats, cell.stats);
    }

    #[test]
    fn single_replication_has_zero_sd() {
        let mut cfg = small(TargetSpec::Blocks);
        cfg.replications = 1;
        let r = run_table(&cfg, &RunOptions::default()).unwrap();
        assert!(r.cells.iter().all(|c| c.stats.iter().all(|s| s.sd == 0.0 && s.values.len() == 1)));
    }

    #[test]
    fn empty_train_losses_rejected() {
        let mut cfg = small(TargetSpec::Blocks);
        cfg.train_losses.clear();
        assert!(matches!(run_table(&cfg, &RunOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn constant_target_noiseless_is_learned() {
        let mut cfg = small(TargetSpec::Constant { d: 1, value: 0.7 });
        cfg.force_zero_noise = true;
        cfg.n = vec![128];
        cfg.train.epochs = 400;
        cfg.replications = 1;
        cfg.train_losses = LossSpec::experiment_set();
        let r = run_table(&cfg, &RunOptions::default()).unwrap();
        for c in &r.cells {
            for s in &c.stats {
                assert!(s.mean.abs() < 1e-2, "{}: {} {}", c.train_loss, s.test_loss, s.mean);
            }
        }
    }

    #[test]
    fn slope_rejects_degenerate() {
        assert!(loglog_slope(&[128.0, 128.0], &[1.0, 0.5]).is_err());
        assert!((loglog_slope(&[10.0, 100.0, 1000.0], &[1.0, 0.1, 0.01]).unwrap() + 1.0).abs() < 1e-12);
        let cfg = small(TargetSpec::Blocks);
        let ls = LossSpec::ls();
        assert!(convergence_sweep(&cfg, &NoiseModel::Normal, &ls, &ls, &[128, 128], &RunOptions::default()).is_err());
        assert!(convergence_sweep(&cfg, &NoiseModel::Normal, &ls, &ls, &[256, 128], &RunOptions::default()).is_err());
    }

    #[test]
    fn stream_keys_stable_and_distinct() {
        let a = cell_stream_key("Blocks", &NoiseModel::Normal, 512);
        assert_eq!(a, cell_stream_key("Blocks", &NoiseModel::Normal, 512));
        assert_ne!(a, cell_stream_key("Blocks", &NoiseModel::Normal, 128));
        assert_ne!(a, cell_stream_key("Blocks", &NoiseModel::Cauchy, 512));
        assert_ne!(a, cell_stream_key("Bumps", &NoiseModel::Normal, 512));
    }
}
