use crate::datagen::TargetFn;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::mlp::{MlpParams, Workspace};

/// Anything that maps row-major inputs to predictions.
pub trait Predictor: Sync {
    fn dim(&self) -> usize;
    fn predict(&self, xs: &[f64]) -> Result<Vec<f64>>;
}

const PREDICT_CHUNK: usize = 2048;

impl Predictor for MlpParams {
    fn dim(&self) -> usize {
        self.shape().input_dim()
    }

    fn predict(&self, xs: &[f64]) -> Result<Vec<f64>> {
        check_rows(xs, self.dim())?;
        let mut ws = Workspace::default();
        let mut out = Vec::with_capacity(xs.len() / self.dim());
        for chunk in xs.chunks(PREDICT_CHUNK * self.dim()) {
            out.extend(self.forward_batch(chunk, &mut ws)?);
        }
        Ok(out)
    }
}

impl Predictor for TargetFn {
    fn dim(&self) -> usize {
        TargetFn::dim(self)
    }

    fn predict(&self, xs: &[f64]) -> Result<Vec<f64>> {
        check_rows(xs, self.dim())?;
        xs.chunks_exact(self.dim()).map(|x| self.eval(x)).collect()
    }
}

/// Clips another predictor's output to `[lo, hi]`.
pub struct Clamped<'a, P: Predictor + ?Sized> {
    pub inner: &'a P,
    pub lo: f64,
    pub hi: f64,
}

impl<P: Predictor + ?Sized> Predictor for Clamped<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn predict(&self, xs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inner.predict(xs)?.into_iter().map(|v| v.clamp(self.lo, self.hi)).collect())
    }
}

fn check_rows(xs: &[f64], d: usize) -> Result<()> {
    if d == 0 || !xs.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: xs.len() % d.max(1),
        });
    }
    Ok(())
}

/// Mean of `L(pred_t, y_t)`.
pub fn mean_loss(preds: &[f64], ys: &[f64], loss: &LossSpec) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if preds.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: ys.len(),
            got: preds.len(),
        });
    }
    let mut total = 0.0;
    for (&a, &y) in preds.iter().zip(ys) {
        total += loss.value(a, y)?;
    }
    Ok(total / preds.len() as f64)
}

/// `(1/T) Σ L(f(X_t), Y_t)`.
pub fn testing_risk(model: &dyn Predictor, test_xs: &[f64], test_ys: &[f64], loss: &LossSpec) -> Result<f64> {
    if test_ys.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if test_xs.len() != test_ys.len() * model.dim() {
        return Err(Error::DimensionMismatch {
            expected: test_ys.len() * model.dim(),
            got: test_xs.len(),
        });
    }
    mean_loss(&model.predict(test_xs)?, test_ys, loss)
}

/// Testing risk of `model` minus that of `f0`, on the same test draw.
pub fn excess_risk(model: &dyn Predictor, target: &TargetFn, test_xs: &[f64], test_ys: &[f64], loss: &LossSpec) -> Result<f64> {
    Ok(testing_risk(model, test_xs, test_ys, loss)? - testing_risk(target, test_xs, test_ys, loss)?)
}

/// Mean of `min(|e|, e²)` over the pointwise errors `e = f(x) − f0(x)`.
pub fn delta2_from(preds: &[f64], truth: &[f64]) -> f64 {
    let total: f64 = preds
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let e = (p - t).abs();
            e.min(e * e)
        })
        .sum();
    total / preds.len().max(1) as f64
}

/// Empirical `Δ²(f, f0) = E[min{|f − f0|, |f − f0|²}]`.
pub fn delta2_metric(model: &dyn Predictor, target: &TargetFn, test_xs: &[f64]) -> Result<f64> {
    Ok(delta2_from(&model.predict(test_xs)?, &target.predict(test_xs)?))
}

/// Mean and sample sd (divisor `len − 1`, 0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Median (mean of the middle pair for even counts).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{CustomTarget, DjKind, PrngStream};
    use crate::mlp::NetworkShape;
    use proptest::prelude::*;

    fn constant(v: f64) -> TargetFn {
        TargetFn::Custom(CustomTarget::constant(1, v))
    }

    #[test]
    fn testing_risk_examples() {
        let zero = constant(0.0);
        let xs = [0.1, 0.5, 0.9];
        let ys = [1.0, -1.0, 3.0];
        assert!((testing_risk(&zero, &xs, &ys, &LossSpec::lad()).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!((testing_risk(&zero, &xs, &ys, &LossSpec::ls()).unwrap() - 11.0 / 3.0).abs() < 1e-15);
        assert!(testing_risk(&zero, &[], &[], &LossSpec::ls()).is_err());
        assert!(testing_risk(&zero, &xs, &ys[..2], &LossSpec::ls()).is_err());
    }

    #[test]
    fn oracle_has_zero_excess() {
        let f0 = TargetFn::Dj(DjKind::Doppler);
        let mut rng = PrngStream::new(1);
        let xs: Vec<f64> = (0..200).map(|_| rng.uniform01()).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f0.eval(&[x]).unwrap() + rng.standard_normal()).collect();
        for loss in LossSpec::experiment_set() {
            assert_eq!(excess_risk(&f0, &f0, &xs, &ys, &loss).unwrap(), 0.0);
        }
        assert_eq!(delta2_metric(&f0, &f0, &xs).unwrap(), 0.0);
    }

    #[test]
    fn shifted_oracle_excess_is_c_squared() {
        let f0 = TargetFn::Dj(DjKind::Heavisine);
        let f0c = f0.clone();
        let shifted = TargetFn::Custom(CustomTarget::new("shift", 1, true, move |x| f0c.eval(x).unwrap() + 0.3));
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let ys = f0.predict(&xs).unwrap();
        let e = excess_risk(&shifted, &f0, &xs, &ys, &LossSpec::ls()).unwrap();
        assert!((e - 0.09).abs() < 1e-12);
    }

    #[test]
    fn noiseless_excess_ls_is_mse() {
        let f0 = TargetFn::Dj(DjKind::Bumps);
        let net = MlpParams::init(&NetworkShape::new(vec![1, 8, 1]).unwrap(), &mut PrngStream::new(3));
        let xs: Vec<f64> = (0..300).map(|i| i as f64 / 299.0).collect();
        let ys = f0.predict(&xs).unwrap();
        let preds = net.predict(&xs).unwrap();
        let mse = preds.iter().zip(&ys).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / 300.0;
        let e = excess_risk(&net, &f0, &xs, &ys, &LossSpec::ls()).unwrap();
        assert!((e - mse).abs() < 1e-12 * (1.0 + mse));
    }

    #[test]
    fn delta2_examples() {
        let f0 = constant(1.0);
        let xs = [0.2, 0.4];
        assert_eq!(delta2_metric(&constant(1.5), &f0, &xs).unwrap(), 0.25);
        assert_eq!(delta2_metric(&constant(3.0), &f0, &xs).unwrap(), 2.0);
    }

    #[test]
    fn clamp_wrapper() {
        let c = Clamped {
            inner: &constant(5.0),
            lo: -1.0,
            hi: 2.0,
        };
        assert_eq!(c.predict(&[0.3]).unwrap(), vec![2.0]);
    }

    #[test]
    fn stats() {
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    proptest! {
        #[test]
        fn delta2_sandwich(errs in prop::collection::vec(-10.0f64..10.0, 1..50)) {
            let truth = vec![0.0; errs.len()];
            let d2 = delta2_from(&errs, &truth);
            let n = errs.len() as f64;
            let l1 = errs.iter().map(|e| e.abs()).sum::<f64>() / n;
            let l2 = errs.iter().map(|e| e * e).sum::<f64>() / n;
            prop_assert!(d2 <= l1 + 1e-12 && d2 <= l2 + 1e-12);
            prop_assert!(d2 <= l1 + l2);
        }
    }
}
