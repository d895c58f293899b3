//! Fully connected ReLU networks `x ↦ L_D ∘ σ ∘ L_{D−1} ∘ ⋯ ∘ σ ∘ L_0(x)`.
//!
//! Parameters live in one flat buffer. Layer `i` maps `d_i → d_{i+1}` and
//! occupies `d_{i+1}·d_i` weights (row-major, one row per output unit)
//! followed by `d_{i+1}` biases. [`Gradients`] uses the same layout, which
//! lets the optimizer treat parameters as a single vector.
//!
//! Batched passes go through `matrixmultiply::dgemm`; all arithmetic is f64.

use std::io::Read;

use crate::datagen::PrngStream;
use crate::error::{Error, Result};
use crate::losses::LossSpec;

/// Layer widths `(d_0, d_1, …, d_D, 1)`: input, `D` hidden layers, scalar
/// output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkShape {
    widths: Vec<usize>,
}

impl NetworkShape {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("a shape needs at least input and output widths"));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("all layer widths must be >= 1"));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::invalid("the output width must be 1"));
        }
        Ok(NetworkShape { widths })
    }

    /// `D` hidden layers of equal width `w` on input dimension `d`.
    pub fn rectangle(d: usize, width: usize, depth: usize) -> Result<Self> {
        let mut widths = vec![d];
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(1);
        Self::new(widths)
    }

    /// `(d, 256, 256, 256, 256, 256, 1)`.
    pub fn nets256(d: usize) -> Self {
        Self::rectangle(d, 256, 5).expect("valid shape")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `D`, the number of hidden layers.
    pub fn depth(&self) -> usize {
        self.widths.len() - 2
    }

    /// `W`, the widest hidden layer (0 without hidden layers).
    pub fn width(&self) -> usize {
        self.hidden().iter().copied().max().unwrap_or(0)
    }

    /// `U`, the number of hidden units.
    pub fn neuron_count(&self) -> usize {
        self.hidden().iter().sum()
    }

    /// `S = Σ d_{i+1}(d_i + 1)`.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn hidden(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    /// Offset of layer `i`'s weights within the flat buffer.
    fn layer_offset(&self, i: usize) -> usize {
        self.widths[..=i].windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn layers(&self) -> impl Iterator<Item = LayerView> + '_ {
        let mut offset = 0;
        self.widths.windows(2).map(move |w| {
            let v = LayerView {
                fan_in: w[0],
                fan_out: w[1],
                w_off: offset,
                b_off: offset + w[0] * w[1],
            };
            offset += w[1] * (w[0] + 1);
            v
        })
    }
}

/// Crude pseudo-dimension bracket `c_lo·S·D·log(S/D) ≤ Pdim ≤ c_hi·S·D·log S`.
pub fn pdim_bounds(shape: &NetworkShape, c_lo: f64, c_hi: f64) -> Result<(f64, f64)> {
    let s = shape.param_count() as f64;
    let d = shape.depth() as f64;
    if shape.depth() == 0 || s <= d {
        return Err(Error::invalid(format!("pdim bounds need S > D >= 1, got S={s}, D={d}")));
    }
    Ok((c_lo * s * d * (s / d).ln(), c_hi * s * d * s.ln()))
}

#[derive(Debug, Clone, Copy)]
struct LayerView {
    fan_in: usize,
    fan_out: usize,
    w_off: usize,
    b_off: usize,
}

/// Weights and biases of a network, flat.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    shape: NetworkShape,
    data: Vec<f64>,
}

/// Gradient of the mean empirical risk; same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    shape: NetworkShape,
    data: Vec<f64>,
}

impl Gradients {
    pub fn zeros(shape: &NetworkShape) -> Self {
        Gradients {
            shape: shape.clone(),
            data: vec![0.0; shape.param_count()],
        }
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|g| g.is_finite())
    }
}

impl MlpParams {
    /// Uniform(−1/√fan_in, 1/√fan_in) for weights and biases, layer by
    /// layer, weights before biases.
    pub fn init(shape: &NetworkShape, rng: &mut PrngStream) -> Self {
        let mut data = Vec::with_capacity(shape.param_count());
        for layer in shape.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let count = layer.fan_out * (layer.fan_in + 1);
            data.extend((0..count).map(|_| rng.uniform(-bound, bound)));
        }
        MlpParams {
            shape: shape.clone(),
            data,
        }
    }

    pub fn zeros(shape: &NetworkShape) -> Self {
        MlpParams {
            shape: shape.clone(),
            data: vec![0.0; shape.param_count()],
        }
    }

    /// Builds from a flat buffer in the documented layout.
    pub fn from_flat(shape: &NetworkShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.param_count() {
            return Err(Error::DimensionMismatch {
                expected: shape.param_count(),
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(MlpParams {
            shape: shape.clone(),
            data,
        })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row-major `d_{i+1} × d_i` weight matrix of layer `i`.
    pub fn weights(&self, i: usize) -> &[f64] {
        let off = self.shape.layer_offset(i);
        &self.data[off..off + self.shape.widths[i] * self.shape.widths[i + 1]]
    }

    pub fn weights_mut(&mut self, i: usize) -> &mut [f64] {
        let off = self.shape.layer_offset(i);
        let len = self.shape.widths[i] * self.shape.widths[i + 1];
        &mut self.data[off..off + len]
    }

    pub fn biases(&self, i: usize) -> &[f64] {
        let off = self.shape.layer_offset(i) + self.shape.widths[i] * self.shape.widths[i + 1];
        &self.data[off..off + self.shape.widths[i + 1]]
    }

    pub fn biases_mut(&mut self, i: usize) -> &mut [f64] {
        let off = self.shape.layer_offset(i) + self.shape.widths[i] * self.shape.widths[i + 1];
        let len = self.shape.widths[i + 1];
        &mut self.data[off..off + len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// f(x) for a single input.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.shape.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.shape.input_dim(),
                got: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let n_layers = self.shape.n_layers();
        for (i, layer) in self.shape.layers().enumerate() {
            let w = &self.data[layer.w_off..layer.b_off];
            let b = &self.data[layer.b_off..layer.b_off + layer.fan_out];
            let next: Vec<f64> = w
                .chunks_exact(layer.fan_in)
                .zip(b)
                .map(|(row, bias)| {
                    let z = bias + row.iter().zip(&cur).map(|(a, c)| a * c).sum::<f64>();
                    if i + 1 < n_layers {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            cur = next;
        }
        Ok(cur[0])
    }

    /// Outputs for `m` row-major inputs.
    pub fn forward_batch(&self, xs: &[f64], ws: &mut Workspace) -> Result<Vec<f64>> {
        let d = self.shape.input_dim();
        if !xs.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: xs.len() % d,
            });
        }
        let m = xs.len() / d;
        self.forward_cached(xs, m, ws);
        Ok(ws.acts.last().unwrap()[..m].to_vec())
    }

    /// Runs the batch forward pass, leaving per-layer post-activations in
    /// `ws.acts` (the last entry holds the raw outputs).
    fn forward_cached(&self, xs: &[f64], m: usize, ws: &mut Workspace) {
        ws.prepare(&self.shape, m);
        let n_layers = self.shape.n_layers();
        for (i, layer) in self.shape.layers().enumerate() {
            let (inp, out): (&[f64], &mut Vec<f64>) = if i == 0 {
                (xs, &mut ws.acts[0])
            } else {
                let (lo, hi) = ws.acts.split_at_mut(i);
                (&lo[i - 1][..], &mut hi[0])
            };
            let out = &mut out[..m * layer.fan_out];
            let w = &self.data[layer.w_off..layer.b_off];
            let b = &self.data[layer.b_off..layer.b_off + layer.fan_out];
            for row in out.chunks_exact_mut(layer.fan_out) {
                row.copy_from_slice(b);
            }
            // out (m × fan_out) += inp (m × fan_in) · wᵀ (fan_in × fan_out)
            gemm(
                m,
                layer.fan_in,
                layer.fan_out,
                (&inp[..m * layer.fan_in], layer.fan_in as isize, 1),
                (w, 1, layer.fan_in as isize),
                1.0,
                (out, layer.fan_out as isize, 1),
            );
            if i + 1 < n_layers {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
    }

    /// Mean loss over a batch and its exact gradient (ReLU′(0) = 0, loss
    /// subgradients as in [`LossSpec::psi_prime`]). `xs` is row-major
    /// `m × d_0`.
    pub fn risk_and_grad(
        &self,
        xs: &[f64],
        ys: &[f64],
        loss: &LossSpec,
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let m = ys.len();
        let d = self.shape.input_dim();
        if m == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if xs.len() != m * d {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                got: xs.len(),
            });
        }
        if grads.shape != self.shape {
            return Err(Error::invalid("gradient buffer shape does not match the network"));
        }
        self.forward_cached(xs, m, ws);

        let n_layers = self.shape.n_layers();
        let inv_m = 1.0 / m as f64;
        let mut risk = 0.0;
        {
            let out = &ws.acts[n_layers - 1][..m];
            let delta = &mut ws.delta[..m];
            for ((dl, &f), &y) in delta.iter_mut().zip(out).zip(ys) {
                let r = f - y;
                risk += loss.psi(r);
                *dl = loss.psi_prime(r) * inv_m;
            }
        }
        risk *= inv_m;

        let layers: Vec<LayerView> = self.shape.layers().collect();
        for (i, layer) in layers.iter().enumerate().rev() {
            let inp: &[f64] = if i == 0 { xs } else { &ws.acts[i - 1][..m * layer.fan_in] };
            let delta = &ws.delta[..m * layer.fan_out];
            let (gw, gb) = grads.data[layer.w_off..layer.b_off + layer.fan_out].split_at_mut(layer.fan_in * layer.fan_out);
            // gw (fan_out × fan_in) = deltaᵀ (fan_out × m) · inp (m × fan_in)
            gemm(
                layer.fan_out,
                m,
                layer.fan_in,
                (delta, 1, layer.fan_out as isize),
                (inp, layer.fan_in as isize, 1),
                0.0,
                (gw, layer.fan_in as isize, 1),
            );
            gb.fill(0.0);
            for row in delta.chunks_exact(layer.fan_out) {
                for (g, dv) in gb.iter_mut().zip(row) {
                    *g += dv;
                }
            }
            if i > 0 {
                let w = &self.data[layer.w_off..layer.b_off];
                let back = &mut ws.back[..m * layer.fan_in];
                // back (m × fan_in) = delta (m × fan_out) · w (fan_out × fan_in)
                gemm(
                    m,
                    layer.fan_out,
                    layer.fan_in,
                    (delta, layer.fan_out as isize, 1),
                    (w, layer.fan_in as isize, 1),
                    0.0,
                    (back, layer.fan_in as isize, 1),
                );
                for (b, &a) in back.iter_mut().zip(inp) {
                    if a <= 0.0 {
                        *b = 0.0;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.back);
            }
        }
        Ok(risk)
    }

    /// `(risk, grads)` for a batch of `(x, y)` pairs.
    pub fn backward(&self, batch: &[(Vec<f64>, f64)], loss: &LossSpec) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let d = self.shape.input_dim();
        let mut xs = Vec::with_capacity(batch.len() * d);
        for (x, _) in batch {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            xs.extend_from_slice(x);
        }
        let ys: Vec<f64> = batch.iter().map(|(_, y)| *y).collect();
        let mut ws = Workspace::default();
        let mut grads = Gradients::zeros(&self.shape);
        let risk = self.risk_and_grad(&xs, &ys, loss, &mut ws, &mut grads)?;
        Ok((risk, grads))
    }
}

/// Reusable activation and backprop buffers.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, shape: &NetworkShape, m: usize) {
        let n_layers = shape.n_layers();
        self.acts.resize_with(n_layers, Vec::new);
        for (buf, &w) in self.acts.iter_mut().zip(&shape.widths[1..]) {
            if buf.len() < m * w {
                buf.resize(m * w, 0.0);
            }
        }
        let widest = shape.widths.iter().copied().max().unwrap_or(1);
        for buf in [&mut self.delta, &mut self.back] {
            if buf.len() < m * widest {
                buf.resize(m * widest, 0.0);
            }
        }
    }
}

/// `c = alpha_c·c + a·b` with explicit strides; `a` is `m × k`, `b` is
/// `k × n`, `c` is `m × n`.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: (&mut [f64], isize, isize),
) {
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
        }
    };
    assert!(a.0.len() >= extent(m, k, a.1, a.2));
    assert!(b.0.len() >= extent(k, n, b.1, b.2));
    assert!(c.0.len() >= extent(m, n, c.1, c.2));
    // SAFETY: the extents above keep every strided access in bounds, and `c`
    // is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.0.as_mut_ptr(),
            c.1,
            c.2,
        );
    }
}

const MODEL_MAGIC: &[u8; 6] = b"RBNET\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAX_WIDTH: usize = 1 << 20;

impl MlpParams {
    /// Binary record: magic, format version (u32 LE), number of widths
    /// (u32 LE), each width (u32 LE), then every parameter as f64 LE in the
    /// flat layout (per layer: row-major weights, then biases).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + 4 * self.shape.widths.len() + 8 * self.data.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.shape.widths.len() as u32).to_le_bytes());
        for &w in &self.shape.widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`MlpParams::to_bytes`]; rejects truncated, oversized,
    /// trailing or non-finite input.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 6];
        read_exact(&mut r, &mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {version}")));
        }
        let n_widths = read_u32(&mut r)? as usize;
        if !(2..=1024).contains(&n_widths) {
            return Err(Error::Format(format!("implausible layer count {n_widths}")));
        }
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            let w = read_u32(&mut r)? as usize;
            if w > MAX_WIDTH {
                return Err(Error::Format(format!("layer width {w} too large")));
            }
            widths.push(w);
        }
        let shape = NetworkShape::new(widths).map_err(|e| Error::Format(e.to_string()))?;
        let expected = shape
            .widths
            .windows(2)
            .try_fold(0usize, |acc, w| w[1].checked_mul(w[0] + 1).and_then(|s| acc.checked_add(s)))
            .and_then(|s| s.checked_mul(8))
            .ok_or_else(|| Error::Format("parameter count overflows".into()))?;
        if r.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} parameter bytes, found {}",
                r.len()
            )));
        }
        let data: Vec<f64> = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        MlpParams::from_flat(&shape, data).map_err(|e| Error::Format(e.to_string()))
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated model file".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;
    use proptest::prelude::*;

    fn shape(w: &[usize]) -> NetworkShape {
        NetworkShape::new(w.to_vec()).unwrap()
    }

    #[test]
    fn structure_formulas() {
        let s = shape(&[2, 3, 1]);
        assert_eq!((s.param_count(), s.neuron_count(), s.depth(), s.width()), (13, 3, 1, 3));
        let n256 = NetworkShape::nets256(1);
        assert_eq!(n256.param_count(), 263_937);
        assert_eq!(n256.neuron_count(), 1280);
        // One hidden layer: S = W(d+1) + (W+1).
        for (d, w) in [(1, 5), (4, 7), (10, 1)] {
            assert_eq!(shape(&[d, w, 1]).param_count(), w * (d + 1) + w + 1);
        }
    }

    #[test]
    fn invalid_shapes() {
        assert!(NetworkShape::new(vec![1]).is_err());
        assert!(NetworkShape::new(vec![1, 0, 1]).is_err());
        assert!(NetworkShape::new(vec![1, 3, 2]).is_err());
    }

    #[test]
    fn pdim_examples() {
        let (lo, hi) = pdim_bounds(&shape(&[1, 3, 1]), 1.0, 1.0).unwrap();
        assert!((hi - 10.0 * 10f64.ln()).abs() < 1e-12);
        assert!((hi - 23.03).abs() < 0.01);
        assert_eq!(lo, hi);
        // S = 100, D = 1 needs d·W + W + W + 1 = 100: d = 97, W = 1.
        let s100 = shape(&[97, 1, 1]);
        assert_eq!(s100.param_count(), 100);
        let (lo, _) = pdim_bounds(&s100, 1.0, 1.0).unwrap();
        assert!((lo - 460.517).abs() < 1e-3);
        assert!(pdim_bounds(&shape(&[3, 1]), 1.0, 1.0).is_err());
        let (lo, hi) = pdim_bounds(&shape(&[3, 4, 4, 1]), 1.0, 1.0).unwrap();
        assert!(lo <= hi);
    }

    #[test]
    fn init_deterministic_and_bounded() {
        let s = shape(&[2, 3, 1]);
        let a = MlpParams::init(&s, &mut PrngStream::new(1));
        let b = MlpParams::init(&s, &mut PrngStream::new(1));
        assert_eq!(a.to_bytes(), b.to_bytes());
        let bound = 1.0 / 2f64.sqrt();
        assert!(a.weights(0).iter().chain(a.biases(0)).all(|v| v.abs() <= bound));
        let bound1 = 1.0 / 3f64.sqrt();
        assert!(a.weights(1).iter().chain(a.biases(1)).all(|v| v.abs() <= bound1));
    }

    #[test]
    fn forward_examples() {
        let s = shape(&[1, 1, 1]);
        let mut p = MlpParams::zeros(&s);
        p.weights_mut(0)[0] = 1.0;
        p.biases_mut(0)[0] = -0.5;
        p.weights_mut(1)[0] = 2.0;
        assert_eq!(p.forward(&[1.0]).unwrap(), 1.0);
        assert_eq!(p.forward(&[0.0]).unwrap(), 0.0);
        assert!(p.forward(&[1.0, 2.0]).is_err());

        let mut z = MlpParams::zeros(&shape(&[3, 4, 4, 1]));
        z.biases_mut(2)[0] = 1.75;
        for x in [[0.0, 0.0, 0.0], [0.3, 0.9, 0.1]] {
            assert_eq!(z.forward(&x).unwrap(), 1.75);
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let s = shape(&[3, 8, 5, 1]);
        let p = MlpParams::init(&s, &mut PrngStream::new(4));
        let mut rng = PrngStream::new(5);
        let xs: Vec<f64> = (0..30).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut ws = Workspace::default();
        let out = p.forward_batch(&xs, &mut ws).unwrap();
        for (i, x) in xs.chunks(3).enumerate() {
            assert!((out[i] - p.forward(x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_model_gradient() {
        let s = shape(&[2, 1]);
        let p = MlpParams::from_flat(&s, vec![0.5, -1.0, 0.25]).unwrap();
        let x = vec![2.0, 3.0];
        let (risk, g) = p.backward(&[(x.clone(), 1.0)], &LossSpec::ls()).unwrap();
        let f = 0.5 * 2.0 - 3.0 + 0.25;
        assert_eq!(risk, (f - 1.0) * (f - 1.0));
        let r = 2.0 * (f - 1.0);
        assert_eq!(g.as_slice(), &[r * 2.0, r * 3.0, r]);
    }

    #[test]
    fn tukey_plateau_zero_gradient() {
        let s = shape(&[1, 4, 1]);
        let p = MlpParams::init(&s, &mut PrngStream::new(8));
        let batch: Vec<(Vec<f64>, f64)> = (0..6).map(|i| (vec![i as f64 / 6.0], 100.0 + i as f64)).collect();
        let (_, g) = p.backward(&batch, &LossSpec::tukey(4.685).unwrap()).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(p.backward(&[], &LossSpec::ls()).is_err());
    }

    fn fd_check(shape: &NetworkShape, loss: &LossSpec, seed: u64, m: usize) {
        let mut rng = PrngStream::new(seed);
        let p = MlpParams::init(shape, &mut rng);
        let d = shape.input_dim();
        let batch: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|_| ((0..d).map(|_| rng.uniform01()).collect(), rng.uniform(-2.0, 2.0)))
            .collect();
        let (_, g) = p.backward(&batch, loss).unwrap();
        let h = 1e-5;
        for k in 0..shape.param_count() {
            let mut plus = p.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = p.clone();
            minus.as_mut_slice()[k] -= h;
            let fd = (plus.backward(&batch, loss).unwrap().0 - minus.backward(&batch, loss).unwrap().0) / (2.0 * h);
            let gk = g.as_slice()[k];
            assert!(
                (gk - fd).abs() <= f64::max(1e-6, 1e-4 * gk.abs()),
                "{loss} param {k}: analytic {gk}, fd {fd}"
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = shape(&[2, 4, 3, 1]);
        for (i, loss) in [
            LossSpec::ls(),
            LossSpec::huber(1.345).unwrap(),
            LossSpec::cauchy(1.0).unwrap(),
            LossSpec::tukey(4.685).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            fd_check(&s, loss, 30 + i as u64, 8);
        }
    }

    #[test]
    fn last_layer_homogeneity() {
        let s = shape(&[2, 5, 5, 1]);
        let p = MlpParams::init(&s, &mut PrngStream::new(3));
        let mut q = p.clone();
        let last = s.n_layers() - 1;
        for v in q.weights_mut(last) {
            *v *= 3.0;
        }
        for v in q.biases_mut(last) {
            *v *= 3.0;
        }
        for x in [[0.1, 0.7], [0.9, 0.2]] {
            assert!((q.forward(&x).unwrap() - 3.0 * p.forward(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn model_bytes_roundtrip_and_rejects_garbage() {
        let s = shape(&[2, 3, 1]);
        let p = MlpParams::init(&s, &mut PrngStream::new(2));
        let bytes = p.to_bytes();
        let back = MlpParams::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert!(MlpParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(MlpParams::from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(MlpParams::from_bytes(&bad).is_err());
        let mut nan = bytes;
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(MlpParams::from_bytes(&nan).is_err());
    }

    fn any_shape() -> impl Strategy<Value = NetworkShape> {
        (1usize..6, prop::collection::vec(1usize..12, 0..5)).prop_map(|(d, hidden)| {
            let mut w = vec![d];
            w.extend(hidden);
            w.push(1);
            NetworkShape::new(w).unwrap()
        })
    }

    proptest! {
        #[test]
        fn counts_match_enumeration(s in any_shape()) {
            // Enumerate allocated parameters layer by layer.
            let p = MlpParams::zeros(&s);
            let enumerated: usize = (0..s.n_layers()).map(|i| p.weights(i).len() + p.biases(i).len()).sum();
            prop_assert_eq!(enumerated, s.param_count());
            prop_assert_eq!(p.as_slice().len(), s.param_count());
            let units: usize = (0..s.n_layers() - 1).map(|i| p.biases(i).len()).sum();
            prop_assert_eq!(units, s.neuron_count());
            prop_assert!(s.width().max(s.depth()) <= s.param_count());
        }

        #[test]
        fn piecewise_linear_within_region(seed in 0u64..500, lam in 0.0f64..1.0) {
            let s = shape(&[2, 6, 6, 1]);
            let p = MlpParams::init(&s, &mut PrngStream::new(seed));
            let mut rng = PrngStream::new(seed + 1000);
            let x1 = [rng.uniform01(), rng.uniform01()];
            let x2 = [x1[0] + 1e-4 * rng.uniform(-1.0, 1.0), x1[1] + 1e-4 * rng.uniform(-1.0, 1.0)];
            prop_assume!(pattern(&p, &x1) == pattern(&p, &x2));
            let xm = [lam * x1[0] + (1.0 - lam) * x2[0], lam * x1[1] + (1.0 - lam) * x2[1]];
            prop_assume!(pattern(&p, &xm) == pattern(&p, &x1));
            let lin = lam * p.forward(&x1).unwrap() + (1.0 - lam) * p.forward(&x2).unwrap();
            prop_assert!((p.forward(&xm).unwrap() - lin).abs() <= 1e-9);
        }

        #[test]
        fn bytes_roundtrip(s in any_shape(), seed in any::<u64>()) {
            let p = MlpParams::init(&s, &mut PrngStream::new(seed));
            prop_assert_eq!(MlpParams::from_bytes(&p.to_bytes()).unwrap(), p);
        }
    }

    /// Activation pattern of every hidden unit at `x`.
    fn pattern(p: &MlpParams, x: &[f64]) -> Vec<bool> {
        let s = p.shape();
        let mut cur = x.to_vec();
        let mut pat = Vec::new();
        for i in 0..s.n_layers() - 1 {
            cur = p
                .weights(i)
                .chunks(s.widths()[i])
                .zip(p.biases(i))
                .map(|(row, b)| b + row.iter().zip(&cur).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            pat.extend(cur.iter().map(|&v| v > 0.0));
            cur.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        pat
    }

    #[test]
    fn loss_kinds_all_supported_in_backward() {
        let s = shape(&[1, 3, 1]);
        let p = MlpParams::init(&s, &mut PrngStream::new(1));
        for kind in LossKind::ALL {
            let loss = LossSpec::new(kind, 0.5).unwrap();
            let (risk, g) = p.backward(&[(vec![0.3], 1.0)], &loss).unwrap();
            assert!(risk.is_finite() && g.is_finite());
        }
    }
}
