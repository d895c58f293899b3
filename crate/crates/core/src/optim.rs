//! Mini-batch Adam on the empirical risk.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, PrngStream};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::mlp::{Gradients, MlpParams, NetworkShape, Workspace};

/// Epoch budgets below this are rejected unless `allow_short_epochs` is set.
pub const MIN_EPOCHS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(alias = "learning_rate")]
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Batch size is `⌈n · batch_fraction⌉`.
    pub batch_fraction: f64,
    pub shuffle: bool,
    pub seed: u64,
    /// Permit budgets under [`MIN_EPOCHS`] (smoke tests, quick runs).
    pub allow_short_epochs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            epochs: 1000,
            batch_fraction: 0.25,
            shuffle: true,
            seed: 0,
            allow_short_epochs: false,
        }
    }
}

impl TrainConfig {
    /// All violated constraints, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("lr must be > 0, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                out.push(format!("{name} must lie in (0,1), got {b}"));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            out.push(format!("eps must be > 0, got {}", self.eps));
        }
        if self.epochs == 0 {
            out.push("epochs must be >= 1".into());
        } else if self.epochs < MIN_EPOCHS && !self.allow_short_epochs {
            out.push(format!(
                "epochs must be >= {MIN_EPOCHS} (got {}); set allow_short_epochs to override",
                self.epochs
            ));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            out.push(format!("batch_fraction must lie in (0,1], got {}", self.batch_fraction));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn batch_size(&self, n: usize) -> usize {
        ((n as f64 * self.batch_fraction).ceil() as usize).clamp(1, n.max(1))
    }
}

/// Adam moment estimates, flat like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(shape: &NetworkShape) -> Self {
        let s = shape.param_count();
        AdamState {
            m: vec![0.0; s],
            v: vec![0.0; s],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place. `epoch` is only used to label a
/// divergence error.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut MlpParams,
    grads: &Gradients,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<()> {
    let theta = params.as_mut_slice();
    let g = grads.as_slice();
    if state.m.len() != theta.len() || g.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: g.len().min(state.m.len()),
        });
    }
    if !grads.is_finite() {
        return Err(Error::Diverged {
            epoch,
            detail: "non-finite gradient".into(),
        });
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let mut finite = true;
    for (((p, &gi), m), v) in theta.iter_mut().zip(g).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * gi;
        *v = b2 * *v + (1.0 - b2) * gi * gi;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        finite &= p.is_finite();
    }
    if !finite {
        return Err(Error::Diverged {
            epoch,
            detail: "non-finite parameter after update".into(),
        });
    }
    Ok(())
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// `epoch,loss` with 1-based epochs.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "loss"]).map_err(|e| Error::Format(e.to_string()))?;
        for (i, l) in self.losses.iter().enumerate() {
            w.write_record([(i + 1).to_string(), l.to_string()])
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Initializes a network from `rng` and runs `cfg.epochs` epochs of
/// mini-batch Adam, reshuffling from the same stream each epoch.
pub fn train(
    dataset: &Dataset,
    shape: &NetworkShape,
    loss: &LossSpec,
    cfg: &TrainConfig,
    rng: &mut PrngStream,
) -> Result<(MlpParams, TrainTrace)> {
    train_with_hook(dataset, shape, loss, cfg, rng, |_, _, _| {})
}

/// [`train`] with a callback `(epoch, params, epoch_loss)` after each epoch.
pub fn train_with_hook<F>(
    dataset: &Dataset,
    shape: &NetworkShape,
    loss: &LossSpec,
    cfg: &TrainConfig,
    rng: &mut PrngStream,
    mut hook: F,
) -> Result<(MlpParams, TrainTrace)>
where
    F: FnMut(usize, &MlpParams, f64),
{
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if dataset.d != shape.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: shape.input_dim(),
            got: dataset.d,
        });
    }
    let n = dataset.len();
    let d = dataset.d;
    let batch = cfg.batch_size(n);

    let mut params = MlpParams::init(shape, rng);
    let mut state = AdamState::new(shape);
    let mut grads = Gradients::zeros(shape);
    let mut ws = Workspace::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut bx = Vec::with_capacity(batch * d);
    let mut by = Vec::with_capacity(batch);
    let mut trace = TrainTrace {
        losses: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(dataset.x(i));
                by.push(dataset.ys[i]);
            }
            let risk = params.risk_and_grad(&bx, &by, loss, &mut ws, &mut grads)?;
            if !risk.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: "non-finite training loss".into(),
                });
            }
            total += risk * chunk.len() as f64;
            adam_step(&mut state, &mut params, &grads, cfg, epoch)?;
        }
        let epoch_loss = total / n as f64;
        trace.losses.push(epoch_loss);
        hook(epoch, &params, epoch_loss);
    }
    Ok((params, trace))
}
