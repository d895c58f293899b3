//! Inputs concentrated near a `d_M`-dimensional curved manifold in `[0,1]^d`.
//!
//! The embedding is a fixed smooth map: the latent `z ∈ [0,1]^{d_M}` is
//! expanded into the `3·d_M` features `(z, (1 + sin 2πz)/2, (1 + cos 2πz)/2)`,
//! each ambient coordinate is a convex combination of those features, and the
//! result is rescaled into `[0.1, 0.9]`. A uniform sup-norm perturbation of
//! radius `rho` is then added and the point clipped to the unit cube.

use super::prng::PrngStream;
use crate::error::{Error, Result};

/// Convex weights of ambient coordinate `j` over the `3·d_m` features.
fn mixing_row(j: usize, d_m: usize) -> Vec<f64> {
    let k = 3 * d_m;
    let mut row = vec![0.1 / k as f64; k];
    row[j % k] += 0.4;
    row[j % d_m] += 0.5;
    row
}

/// `φ(z)`, the noiseless embedding.
pub fn embed(z: &[f64], d: usize) -> Vec<f64> {
    let d_m = z.len();
    let tau = std::f64::consts::TAU;
    let features: Vec<f64> = z
        .iter()
        .copied()
        .chain(z.iter().map(|&v| 0.5 * (1.0 + (tau * v).sin())))
        .chain(z.iter().map(|&v| 0.5 * (1.0 + (tau * v).cos())))
        .collect();
    (0..d)
        .map(|j| {
            let mix: f64 = mixing_row(j, d_m).iter().zip(&features).map(|(w, f)| w * f).sum();
            0.1 + 0.8 * mix
        })
        .collect()
}

/// Samples `n` points (row-major `n × d`) together with their latents
/// (row-major `n × d_m`).
pub fn manifold_inputs_with_latents(
    d_m: usize,
    d: usize,
    rho: f64,
    n: usize,
    rng: &mut PrngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if d_m == 0 || d_m >= d {
        return Err(Error::invalid(format!("need 1 <= d_M < d, got d_M={d_m}, d={d}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    let mut xs = Vec::with_capacity(n * d);
    let mut zs = Vec::with_capacity(n * d_m);
    for _ in 0..n {
        let z: Vec<f64> = (0..d_m).map(|_| rng.uniform01()).collect();
        for v in embed(&z, d) {
            let p = if rho > 0.0 { rng.uniform(-rho, rho) } else { 0.0 };
            xs.push((v + p).clamp(0.0, 1.0));
        }
        zs.extend(z);
    }
    Ok((xs, zs))
}

/// Samples `n` points near the embedded manifold, row-major `n × d`.
pub fn manifold_inputs(d_m: usize, d: usize, rho: f64, n: usize, rng: &mut PrngStream) -> Result<Vec<f64>> {
    manifold_inputs_with_latents(d_m, d, rho, n, rng).map(|(xs, _)| xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn zero_rho_lies_on_manifold() {
        let mut rng = PrngStream::new(3);
        let (xs, zs) = manifold_inputs_with_latents(2, 5, 0.0, 50, &mut rng).unwrap();
        for (x, z) in xs.chunks(5).zip(zs.chunks(2)) {
            assert_eq!(x, embed(z, 5).as_slice());
        }
    }

    #[test]
    fn perturbation_bounded_and_in_cube() {
        let mut rng = PrngStream::new(4);
        let (d, rho) = (6, 0.3);
        let (xs, zs) = manifold_inputs_with_latents(2, d, rho, 500, &mut rng).unwrap();
        for (x, z) in xs.chunks(d).zip(zs.chunks(2)) {
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
            let phi = embed(z, d);
            let dist = x.iter().zip(&phi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(dist <= rho * (d as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn curve_distances_track_latent_distances() {
        let mut rng = PrngStream::new(5);
        let (xs, zs) = manifold_inputs_with_latents(1, 3, 0.0, 100, &mut rng).unwrap();
        let mut ambient = Vec::new();
        let mut latent = Vec::new();
        for i in 0..100 {
            for j in i + 1..100 {
                let a = &xs[3 * i..3 * i + 3];
                let b = &xs[3 * j..3 * j + 3];
                ambient.push(a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt());
                latent.push((zs[i] - zs[j]).abs());
            }
        }
        let rho = pearson(&ranks(&ambient), &ranks(&latent));
        assert!(rho > 0.9, "rank correlation {rho}");
    }

    #[test]
    fn preconditions() {
        let mut rng = PrngStream::new(6);
        assert!(manifold_inputs(3, 3, 0.1, 10, &mut rng).is_err());
        assert!(manifold_inputs(0, 3, 0.1, 10, &mut rng).is_err());
        assert!(manifold_inputs(1, 3, 1.0, 10, &mut rng).is_err());
    }
}
