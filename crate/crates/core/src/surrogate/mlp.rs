//! Fully connected network with LayerNorm and GELU after each hidden layer.
//!
//! All trainable values live in one flat vector so the optimizer and the
//! model file can treat them uniformly. Per layer the order is
//! `W (out x in, row-major), b, [gain, offset]` with the normalization pair
//! present on hidden layers only.

use rand::Rng;

use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;
const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Layer sizes: 4 inputs, hidden 256 and 128, 6 outputs.
pub const DEFAULT_LAYERS: [usize; 4] = [4, 256, 128, 6];

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu_exact(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

fn gelu_grad_exact(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

const GELU_SPAN: f64 = 8.0;
const GELU_STEPS_PER_UNIT: f64 = 128.0;

/// Cubic Hermite interpolants of the erf-based GELU and of its derivative on
/// `[-8, 8]`, spacing 1/128, stored as per-interval polynomial coefficients
/// in the local coordinate. Interpolation error is below 3e-11 for both
/// functions. Outside the span the exact forms are used.
struct GeluTables {
    value: Vec<[f64; 4]>,
    grad: Vec<[f64; 4]>,
}

fn hermite_coefficients(p0: f64, m0: f64, p1: f64, m1: f64, h: f64) -> [f64; 4] {
    let (d0, d1) = (h * m0, h * m1);
    [p0, d0, 3.0 * (p1 - p0) - 2.0 * d0 - d1, 2.0 * (p0 - p1) + d0 + d1]
}

static GELU_TABLES: std::sync::LazyLock<GeluTables> = std::sync::LazyLock::new(|| {
    let n = (2.0 * GELU_SPAN * GELU_STEPS_PER_UNIT) as usize;
    let h = 1.0 / GELU_STEPS_PER_UNIT;
    let nodes: Vec<[f64; 3]> = (0..=n)
        .map(|i| {
            let x = -GELU_SPAN + i as f64 * h;
            let phi = INV_SQRT_2PI * (-0.5 * x * x).exp();
            [gelu_exact(x), gelu_grad_exact(x), phi * (2.0 - x * x)]
        })
        .collect();
    let pairs = || nodes.windows(2);
    GeluTables {
        value: pairs().map(|w| hermite_coefficients(w[0][0], w[0][1], w[1][0], w[1][1], h)).collect(),
        grad: pairs().map(|w| hermite_coefficients(w[0][1], w[0][2], w[1][1], w[1][2], h)).collect(),
    }
});

#[inline]
fn interpolate(table: &[[f64; 4]], x: f64) -> Option<f64> {
    let t = (x + GELU_SPAN) * GELU_STEPS_PER_UNIT;
    if !(t >= 0.0 && t < table.len() as f64) {
        return None;
    }
    let i = t as usize;
    let s = t - i as f64;
    let c = &table[i];
    Some(c[0] + s * (c[1] + s * (c[2] + s * c[3])))
}

#[inline]
fn gelu(table: &[[f64; 4]], x: f64) -> f64 {
    interpolate(table, x).unwrap_or_else(|| gelu_exact(x))
}

#[inline]
fn gelu_grad(table: &[[f64; 4]], x: f64) -> f64 {
    interpolate(table, x).unwrap_or_else(|| gelu_grad_exact(x))
}

/// `c (m x n) = a (m x k) * b^T` with `b` stored `n x k` row-major.
fn matmul_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: the slices cover the strided extents asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m x n) += a^T * b` with `a` stored `k x m`, `b` stored `k x n`.
fn matmul_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m x n) = a (m x k) * b (k x n)`.
fn matmul_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Offsets of one layer's blocks inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
struct LayerSlots {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
    /// `(gain, offset)` for hidden layers.
    norm: Option<(usize, usize)>,
}

fn layout(sizes: &[usize]) -> (Vec<LayerSlots>, usize) {
    let n_layers = sizes.len() - 1;
    let mut slots = Vec::with_capacity(n_layers);
    let mut at = 0;
    for l in 0..n_layers {
        let (i, o) = (sizes[l], sizes[l + 1]);
        let weight = at;
        at += i * o;
        let bias = at;
        at += o;
        let norm = if l + 1 < n_layers {
            let g = at;
            at += o;
            let b = at;
            at += o;
            Some((g, b))
        } else {
            None
        };
        slots.push(LayerSlots { inputs: i, outputs: o, weight, bias, norm });
    }
    (slots, at)
}

/// Affine standardization `z = (x - mean) / scale` per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean / population standard deviation of row-major `data`; a zero
    /// spread is replaced by 1.
    pub fn fit(data: &[f64], dim: usize) -> Self {
        let n = (data.len() / dim).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() { sd } else { 1.0 }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &mut [f64]) {
        let d = self.dim();
        for row in data.chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
    }

    pub fn invert(&self, data: &mut [f64]) {
        let d = self.dim();
        for row in data.chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = *v * s + m;
            }
        }
    }

    fn is_valid(&self) -> bool {
        self.mean.len() == self.scale.len()
            && self.mean.iter().all(|m| m.is_finite())
            && self.scale.iter().all(|s| *s > 0.0 && s.is_finite())
    }
}

/// Distance compensation of the outputs: the network predicts
/// `y (rho / r_ref)^p` for output `y` with power `p`, where `rho` is the
/// norm of the first two inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialScaling {
    pub r_ref: f64,
    pub powers: Vec<i32>,
}

impl RadialScaling {
    pub fn validate(&self, n_inputs: usize, n_outputs: usize) -> Result<()> {
        if n_inputs < 2 || self.powers.len() != n_outputs {
            return Err(Error::Shape(format!(
                "radial scaling needs 2+ inputs and {n_outputs} powers, got {} inputs and {} powers",
                n_inputs,
                self.powers.len()
            )));
        }
        if !(self.r_ref > 0.0 && self.r_ref.is_finite()) || self.powers.iter().any(|p| p.abs() > 16) {
            return Err(Error::Validation(format!("invalid radial scaling {self:?}")));
        }
        Ok(())
    }

    fn apply(&self, inputs: &[f64], n_inputs: usize, outputs: &mut [f64], sign: i32) {
        let n_out = self.powers.len();
        for (x, y) in inputs.chunks_exact(n_inputs).zip(outputs.chunks_exact_mut(n_out)) {
            let ratio = x[0].hypot(x[1]) / self.r_ref;
            for (v, p) in y.iter_mut().zip(&self.powers) {
                *v *= ratio.powi(sign * p);
            }
        }
    }

    /// Physical values to network targets.
    pub fn compress(&self, inputs: &[f64], n_inputs: usize, values: &mut [f64]) {
        self.apply(inputs, n_inputs, values, 1);
    }

    /// Network outputs to physical values.
    pub fn expand(&self, inputs: &[f64], n_inputs: usize, values: &mut [f64]) {
        self.apply(inputs, n_inputs, values, -1);
    }
}

/// Network weights plus the input/output standardization used at inference.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    slots: Vec<LayerSlots>,
    values: Vec<f64>,
    pub input_scaler: Standardizer,
    pub output_scaler: Standardizer,
    pub radial: Option<RadialScaling>,
}

/// Intermediate activations of a batch forward pass.
struct Tape {
    batch: usize,
    /// Input to each layer (standardized network input for layer 0).
    inputs: Vec<Vec<f64>>,
    /// Normalized pre-activations x_hat of each hidden layer.
    normed: Vec<Vec<f64>>,
    /// Per-row 1/sigma of each hidden layer.
    inv_std: Vec<Vec<f64>>,
    /// Post-normalization values fed to GELU.
    pre_act: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl MlpParams {
    /// PyTorch-style initialization: weights and biases uniform in
    /// `+-1/sqrt(fan_in)`, unit gains, zero offsets.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        for s in p.slots.clone() {
            let bound = 1.0 / (s.inputs as f64).sqrt();
            for v in &mut p.values[s.weight..s.weight + s.inputs * s.outputs] {
                *v = rng.random_range(-bound..bound);
            }
            for v in &mut p.values[s.bias..s.bias + s.outputs] {
                *v = rng.random_range(-bound..bound);
            }
            if let Some((g, _)) = s.norm {
                p.values[g..g + s.outputs].fill(1.0);
            }
        }
        Ok(p)
    }

    /// All-zero weights, biases and normalization parameters with identity
    /// standardization.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let (slots, n) = layout(sizes);
        Ok(MlpParams {
            sizes: sizes.to_vec(),
            slots,
            values: vec![0.0; n],
            input_scaler: Standardizer::identity(sizes[0]),
            output_scaler: Standardizer::identity(*sizes.last().unwrap()),
            radial: None,
        })
    }

    /// Rebuilds from a flat parameter vector (model file path).
    pub fn from_parts(
        sizes: &[usize],
        values: Vec<f64>,
        input_scaler: Standardizer,
        output_scaler: Standardizer,
    ) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        if values.len() != p.values.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                p.values.len(),
                values.len()
            )));
        }
        if input_scaler.dim() != sizes[0] || output_scaler.dim() != *sizes.last().unwrap() {
            return Err(Error::Shape("standardization size does not match layers".into()));
        }
        if !input_scaler.is_valid() || !output_scaler.is_valid() {
            return Err(Error::Format("standardization statistics are invalid".into()));
        }
        p.values = values;
        p.input_scaler = input_scaler;
        p.output_scaler = output_scaler;
        Ok(p)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Final-layer bias (standardized output units).
    pub fn output_bias(&self) -> &[f64] {
        let s = self.slots.last().unwrap();
        &self.values[s.bias..s.bias + s.outputs]
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let s = *self.slots.last().unwrap();
        &mut self.values[s.bias..s.bias + s.outputs]
    }

    fn forward_tape(&self, x_std: &[f64], batch: usize) -> Tape {
        let table = GELU_TABLES.value.as_slice();
        let n_layers = self.slots.len();
        let mut tape = Tape {
            batch,
            inputs: Vec::with_capacity(n_layers),
            normed: Vec::new(),
            inv_std: Vec::new(),
            pre_act: Vec::new(),
            output: Vec::new(),
        };
        let mut current = x_std.to_vec();
        for s in &self.slots {
            let (i, o) = (s.inputs, s.outputs);
            let w = &self.values[s.weight..s.weight + i * o];
            let b = &self.values[s.bias..s.bias + o];
            let mut z = vec![0.0; batch * o];
            matmul_nt(&current, w, &mut z, batch, i, o);
            for row in z.chunks_exact_mut(o) {
                for (v, bb) in row.iter_mut().zip(b) {
                    *v += bb;
                }
            }
            tape.inputs.push(std::mem::take(&mut current));
            match s.norm {
                Some((g, beta)) => {
                    let gain = &self.values[g..g + o];
                    let off = &self.values[beta..beta + o];
                    let mut inv_std = vec![0.0; batch];
                    let mut y = vec![0.0; batch * o];
                    let mut act = vec![0.0; batch * o];
                    for (r, row) in z.chunks_exact_mut(o).enumerate() {
                        let mean = row.iter().sum::<f64>() / o as f64;
                        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / o as f64;
                        let is = 1.0 / (var + LN_EPS).sqrt();
                        inv_std[r] = is;
                        for c in 0..o {
                            let xh = (row[c] - mean) * is;
                            row[c] = xh;
                            let yy = gain[c] * xh + off[c];
                            y[r * o + c] = yy;
                            act[r * o + c] = gelu(table, yy);
                        }
                    }
                    tape.normed.push(z);
                    tape.inv_std.push(inv_std);
                    tape.pre_act.push(y);
                    current = act;
                }
                None => {
                    tape.output = z;
                }
            }
        }
        tape
    }

    /// Standardized-space forward pass over `batch` row-major inputs.
    /// Keeps no intermediates; bit-identical to the training forward pass.
    pub fn forward_standardized(&self, x_std: &[f64], batch: usize) -> Vec<f64> {
        let table = GELU_TABLES.value.as_slice();
        let mut current = x_std.to_vec();
        for s in &self.slots {
            let (i, o) = (s.inputs, s.outputs);
            let w = &self.values[s.weight..s.weight + i * o];
            let b = &self.values[s.bias..s.bias + o];
            let mut z = vec![0.0; batch * o];
            matmul_nt(&current, w, &mut z, batch, i, o);
            for row in z.chunks_exact_mut(o) {
                for (v, bb) in row.iter_mut().zip(b) {
                    *v += bb;
                }
            }
            if let Some((g, beta)) = s.norm {
                let gain = &self.values[g..g + o];
                let off = &self.values[beta..beta + o];
                for row in z.chunks_exact_mut(o) {
                    let mean = row.iter().sum::<f64>() / o as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / o as f64;
                    let is = 1.0 / (var + LN_EPS).sqrt();
                    for c in 0..o {
                        let xh = (row[c] - mean) * is;
                        row[c] = gelu(table, gain[c] * xh + off[c]);
                    }
                }
            }
            current = z;
        }
        current
    }

    /// Physical-unit forward pass over a batch of row-major inputs.
    pub fn forward_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let d = self.n_inputs();
        if inputs.len() % d != 0 {
            return Err(Error::Shape(format!(
                "input length {} is not a multiple of {d}",
                inputs.len()
            )));
        }
        let batch = inputs.len() / d;
        let mut x = inputs.to_vec();
        self.input_scaler.apply(&mut x);
        let mut y = self.forward_standardized(&x, batch);
        self.output_scaler.invert(&mut y);
        if let Some(r) = &self.radial {
            r.expand(inputs, d, &mut y);
        }
        Ok(y)
    }

    /// Smooth-L1 (transition 1) loss averaged over all batch entries, with
    /// its gradient w.r.t. every parameter.
    pub fn loss_and_gradient(&self, x_std: &[f64], y_std: &[f64], batch: usize) -> (f64, Vec<f64>) {
        let tape = self.forward_tape(x_std, batch);
        let o_last = self.n_outputs();
        let count = (batch * o_last) as f64;
        let mut loss = 0.0;
        let mut grad_out = vec![0.0; batch * o_last];
        for ((g, p), t) in grad_out.iter_mut().zip(&tape.output).zip(y_std) {
            let d = p - t;
            if d.abs() < 1.0 {
                loss += 0.5 * d * d;
                *g = d / count;
            } else {
                loss += d.abs() - 0.5;
                *g = d.signum() / count;
            }
        }
        (loss / count, self.backward(&tape, grad_out))
    }

    fn backward(&self, tape: &Tape, mut upstream: Vec<f64>) -> Vec<f64> {
        let table = GELU_TABLES.grad.as_slice();
        let batch = tape.batch;
        let mut grad = vec![0.0; self.values.len()];
        let n_layers = self.slots.len();
        for l in (0..n_layers).rev() {
            let s = self.slots[l];
            let (i, o) = (s.inputs, s.outputs);
            // upstream is d loss / d (layer output) before any normalization
            let dz = if let Some((g, beta)) = s.norm {
                let gain = &self.values[g..g + o];
                let xh = &tape.normed[l];
                let y = &tape.pre_act[l];
                let inv_std = &tape.inv_std[l];
                let mut dz = vec![0.0; batch * o];
                let (gg, gb) = {
                    let (head, tail) = grad.split_at_mut(beta);
                    (&mut head[g..g + o], &mut tail[..o])
                };
                let mut dxh = vec![0.0; o];
                for r in 0..batch {
                    let base = r * o;
                    let mut mean_d = 0.0;
                    let mut mean_dx = 0.0;
                    for c in 0..o {
                        let dy = upstream[base + c] * gelu_grad(table, y[base + c]);
                        gg[c] += dy * xh[base + c];
                        gb[c] += dy;
                        let d = dy * gain[c];
                        dxh[c] = d;
                        mean_d += d;
                        mean_dx += d * xh[base + c];
                    }
                    mean_d /= o as f64;
                    mean_dx /= o as f64;
                    let is = inv_std[r];
                    for c in 0..o {
                        dz[base + c] = is * (dxh[c] - mean_d - xh[base + c] * mean_dx);
                    }
                }
                dz
            } else {
                std::mem::take(&mut upstream)
            };
            let input = &tape.inputs[l];
            matmul_tn_acc(&dz, input, &mut grad[s.weight..s.weight + i * o], o, batch, i);
            {
                let gb = &mut grad[s.bias..s.bias + o];
                for row in dz.chunks_exact(o) {
                    for (g, v) in gb.iter_mut().zip(row) {
                        *g += v;
                    }
                }
            }
            if l > 0 {
                let w = &self.values[s.weight..s.weight + i * o];
                let mut dx = vec![0.0; batch * i];
                matmul_nn(&dz, w, &mut dx, batch, o, i);
                upstream = dx;
            }
        }
        grad
    }
}

/// Inference-only copy of a network for small batches, with weights
/// regrouped into 16-column blocks so each block accumulates in registers.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceNet {
    layers: Vec<DenseLayer>,
    input_scaler: Standardizer,
    output_scaler: Standardizer,
    radial: Option<RadialScaling>,
}

const BLOCK: usize = 16;

#[derive(Clone, Debug, PartialEq)]
struct DenseLayer {
    inputs: usize,
    outputs: usize,
    /// Block-major weights: for block `b`, entries `b*inputs..(b+1)*inputs`
    /// hold one input's weights to the block's columns, zero-padded.
    blocks: Vec<[f64; BLOCK]>,
    bias: Vec<[f64; BLOCK]>,
    norm: Option<(Vec<f64>, Vec<f64>)>,
}

#[inline(always)]
fn madd<const FMA: bool>(a: f64, b: f64, c: f64) -> f64 {
    if FMA { a.mul_add(b, c) } else { a * b + c }
}

/// `out = bias + x * W` for `R` rows, with `xk[k][r]` the `k`-th input of
/// row `r` and `out` holding the `R` output rows.
#[inline(always)]
fn dense_rows<const R: usize, const FMA: bool>(xk: &[[f64; R]], layer: &DenseLayer, out: &mut [f64]) {
    let o = layer.outputs;
    for (jb, (wb, b)) in layer.blocks.chunks_exact(layer.inputs).zip(&layer.bias).enumerate() {
        let mut acc = [*b; R];
        for (w, xv) in wb.iter().zip(xk) {
            for r in 0..R {
                for l in 0..BLOCK {
                    acc[r][l] = madd::<FMA>(xv[r], w[l], acc[r][l]);
                }
            }
        }
        let start = jb * BLOCK;
        let width = (o - start).min(BLOCK);
        for (a, orow) in acc.iter().zip(out.chunks_exact_mut(o)) {
            orow[start..start + width].copy_from_slice(&a[..width]);
        }
    }
}

#[inline(always)]
fn dense_group<const R: usize, const FMA: bool>(x: &[f64], layer: &DenseLayer, out: &mut [f64]) -> usize {
    let (i, o) = (layer.inputs, layer.outputs);
    let mut xk = vec![[0.0; R]; i];
    let mut done = 0;
    for (xg, og) in x.chunks_exact(R * i).zip(out.chunks_exact_mut(R * o)) {
        for (r, row) in xg.chunks_exact(i).enumerate() {
            for (dst, v) in xk.iter_mut().zip(row) {
                dst[r] = *v;
            }
        }
        dense_rows::<R, FMA>(&xk, layer, og);
        done += R;
    }
    done
}

#[inline(always)]
fn dense_body<const R: usize, const FMA: bool>(x: &[f64], layer: &DenseLayer, out: &mut [f64]) {
    let (i, o) = (layer.inputs, layer.outputs);
    let done = dense_group::<R, FMA>(x, layer, out);
    dense_group::<1, FMA>(&x[done * i..], layer, &mut out[done * o..]);
}

#[cfg(target_arch = "x86_64")]
mod simd {
    use super::{DenseLayer, BLOCK};
    use std::arch::x86_64::*;

    fn store<const R: usize>(acc: &[[f64; BLOCK]; R], out: &mut [f64], o: usize, start: usize) {
        let width = (o - start).min(BLOCK);
        for (a, orow) in acc.iter().zip(out.chunks_exact_mut(o)) {
            orow[start..start + width].copy_from_slice(&a[..width]);
        }
    }

    fn transpose<const R: usize>(xg: &[f64], i: usize, xk: &mut [[f64; R]]) {
        for (r, row) in xg.chunks_exact(i).enumerate() {
            for (dst, v) in xk.iter_mut().zip(row) {
                dst[r] = *v;
            }
        }
    }

    /// Two column blocks per pass, so `2 R` rows of accumulators are live.
    #[target_feature(enable = "avx512f")]
    fn rows_avx512<const R: usize>(xk: &[[f64; R]], layer: &DenseLayer, out: &mut [f64]) {
        let i = layer.inputs;
        let mut blocks = layer.blocks.chunks_exact(i).zip(&layer.bias).enumerate().peekable();
        while let Some((jb, (wa, ba))) = blocks.next() {
            let second = blocks.next();
            // SAFETY: every load and store covers a full [f64; 16] array.
            unsafe {
                let load = |b: &[f64; BLOCK]| [_mm512_loadu_pd(b.as_ptr()), _mm512_loadu_pd(b.as_ptr().add(8))];
                let (wb, bb) = match second {
                    Some((_, (wb, bb))) => (wb, bb),
                    None => (wa, ba),
                };
                let bias = [load(ba), load(bb)];
                let mut acc = [bias; R];
                for ((wa, wb), xv) in wa.iter().zip(wb).zip(xk) {
                    let w = [load(wa), load(wb)];
                    for r in 0..R {
                        let v = _mm512_set1_pd(xv[r]);
                        for h in 0..2 {
                            for q in 0..2 {
                                acc[r][h][q] = _mm512_fmadd_pd(v, w[h][q], acc[r][h][q]);
                            }
                        }
                    }
                }
                let mut lanes = [[[0.0; BLOCK]; R]; 2];
                for (r, a) in acc.iter().enumerate() {
                    for h in 0..2 {
                        _mm512_storeu_pd(lanes[h][r].as_mut_ptr(), a[h][0]);
                        _mm512_storeu_pd(lanes[h][r].as_mut_ptr().add(8), a[h][1]);
                    }
                }
                store(&lanes[0], out, layer.outputs, jb * BLOCK);
                if second.is_some() {
                    store(&lanes[1], out, layer.outputs, (jb + 1) * BLOCK);
                }
            }
        }
    }

    #[target_feature(enable = "avx2,fma")]
    fn rows_avx2<const R: usize>(xk: &[[f64; R]], layer: &DenseLayer, out: &mut [f64]) {
        for (jb, (wb, b)) in layer.blocks.chunks_exact(layer.inputs).zip(&layer.bias).enumerate() {
            // SAFETY: every load and store covers a full [f64; 16] array.
            unsafe {
                let p = b.as_ptr();
                let bias = [
                    _mm256_loadu_pd(p),
                    _mm256_loadu_pd(p.add(4)),
                    _mm256_loadu_pd(p.add(8)),
                    _mm256_loadu_pd(p.add(12)),
                ];
                let mut acc = [bias; R];
                for (w, xv) in wb.iter().zip(xk) {
                    let p = w.as_ptr();
                    let ws = [
                        _mm256_loadu_pd(p),
                        _mm256_loadu_pd(p.add(4)),
                        _mm256_loadu_pd(p.add(8)),
                        _mm256_loadu_pd(p.add(12)),
                    ];
                    for r in 0..R {
                        let v = _mm256_set1_pd(xv[r]);
                        for q in 0..4 {
                            acc[r][q] = _mm256_fmadd_pd(v, ws[q], acc[r][q]);
                        }
                    }
                }
                let mut lanes = [[0.0; BLOCK]; R];
                for (dst, a) in lanes.iter_mut().zip(&acc) {
                    for q in 0..4 {
                        _mm256_storeu_pd(dst.as_mut_ptr().add(4 * q), a[q]);
                    }
                }
                store(&lanes, out, layer.outputs, jb * BLOCK);
            }
        }
    }

    /// In-place GELU from the coefficient table, four lanes at a time. Lanes
    /// outside the table span fall back to the scalar path.
    #[target_feature(enable = "avx2,fma")]
    pub(super) fn gelu_avx2(values: &mut [f64], table: &[[f64; 4]]) {
        let (head, rest) = values.as_chunks_mut::<4>();
        let base = table.as_ptr() as *const f64;
        let span = _mm256_set1_pd(super::GELU_SPAN);
        let steps = _mm256_set1_pd(super::GELU_STEPS_PER_UNIT);
        let upper = _mm256_set1_pd(table.len() as f64);
        for chunk in head {
            // SAFETY: lanes are checked to lie inside the table before the
            // gathers; loads and stores cover the 4-element chunk.
            unsafe {
                let x = _mm256_loadu_pd(chunk.as_ptr());
                let t = _mm256_mul_pd(_mm256_add_pd(x, span), steps);
                let ok = _mm256_and_pd(
                    _mm256_cmp_pd::<_CMP_GE_OQ>(t, _mm256_setzero_pd()),
                    _mm256_cmp_pd::<_CMP_LT_OQ>(t, upper),
                );
                if _mm256_movemask_pd(ok) != 0b1111 {
                    for v in chunk.iter_mut() {
                        *v = super::gelu(table, *v);
                    }
                    continue;
                }
                let fl = _mm256_floor_pd(t);
                let s = _mm256_sub_pd(t, fl);
                let idx = _mm_slli_epi32::<2>(_mm256_cvttpd_epi32(fl));
                let c0 = _mm256_i32gather_pd::<8>(base, idx);
                let c1 = _mm256_i32gather_pd::<8>(base.add(1), idx);
                let c2 = _mm256_i32gather_pd::<8>(base.add(2), idx);
                let c3 = _mm256_i32gather_pd::<8>(base.add(3), idx);
                let y = _mm256_fmadd_pd(s, _mm256_fmadd_pd(s, _mm256_fmadd_pd(s, c3, c2), c1), c0);
                _mm256_storeu_pd(chunk.as_mut_ptr(), y);
            }
        }
        for v in rest {
            *v = super::gelu(table, *v);
        }
    }

    macro_rules! driver {
        ($name:ident, $rows:ident, $feat:literal, $r:literal) => {
            #[target_feature(enable = $feat)]
            pub(super) fn $name(x: &[f64], layer: &DenseLayer, out: &mut [f64]) {
                let (i, o) = (layer.inputs, layer.outputs);
                let mut xk = vec![[0.0; $r]; i];
                let mut done = 0;
                for (xg, og) in x.chunks_exact($r * i).zip(out.chunks_exact_mut($r * o)) {
                    transpose(xg, i, &mut xk);
                    $rows::<$r>(&xk, layer, og);
                    done += $r;
                }
                let mut x1 = vec![[0.0; 1]; i];
                for (xg, og) in x[done * i..].chunks_exact(i).zip(out[done * o..].chunks_exact_mut(o)) {
                    transpose(xg, i, &mut x1);
                    $rows::<1>(&x1, layer, og);
                }
            }
        };
    }

    driver!(dense_avx512, rows_avx512, "avx512f", 3);
    driver!(dense_avx2, rows_avx2, "avx2,fma", 2);
}

/// Sum of `f(v)` over eight interleaved partial sums.
#[inline(always)]
fn lane_sum(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let (head, rest) = values.as_chunks::<8>();
    let mut acc = [0.0; 8];
    for chunk in head {
        for l in 0..8 {
            acc[l] += f(chunk[l]);
        }
    }
    let tail: f64 = rest.iter().map(|v| f(*v)).sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn gelu_in_place(values: &mut [f64], table: &[[f64; 4]]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the enabled features were detected at runtime.
        return unsafe { simd::gelu_avx2(values, table) };
    }
    for v in values {
        *v = gelu(table, *v);
    }
}

/// `out (batch x o) = x (batch x i) * W^T + b`.
fn dense(x: &[f64], layer: &DenseLayer, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::is_x86_feature_detected as has;
        if has!("avx512f") {
            // SAFETY: the enabled feature was detected at runtime.
            return unsafe { simd::dense_avx512(x, layer, out) };
        }
        if has!("avx2") && has!("fma") {
            // SAFETY: as above.
            return unsafe { simd::dense_avx2(x, layer, out) };
        }
    }
    dense_body::<2, false>(x, layer, out)
}

impl InferenceNet {
    pub fn new(params: &MlpParams) -> Self {
        let layers = params
            .slots
            .iter()
            .map(|s| {
                let (i, o) = (s.inputs, s.outputs);
                let w = &params.values[s.weight..s.weight + i * o];
                let b = &params.values[s.bias..s.bias + o];
                let n_blocks = o.div_ceil(BLOCK);
                let mut blocks = vec![[0.0; BLOCK]; n_blocks * i];
                let mut bias = vec![[0.0; BLOCK]; n_blocks];
                for j in 0..o {
                    let (blk, l) = (j / BLOCK, j % BLOCK);
                    bias[blk][l] = b[j];
                    for k in 0..i {
                        blocks[blk * i + k][l] = w[j * i + k];
                    }
                }
                DenseLayer {
                    inputs: i,
                    outputs: o,
                    blocks,
                    bias,
                    norm: s.norm.map(|(g, b)| {
                        (params.values[g..g + o].to_vec(), params.values[b..b + o].to_vec())
                    }),
                }
            })
            .collect();
        InferenceNet {
            layers,
            input_scaler: params.input_scaler.clone(),
            output_scaler: params.output_scaler.clone(),
            radial: params.radial.clone(),
        }
    }

    /// Agrees with [`MlpParams::forward_batch`] up to summation order.
    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let d = self.layers[0].inputs;
        if inputs.len() % d != 0 {
            return Err(Error::Shape(format!(
                "input length {} is not a multiple of {d}",
                inputs.len()
            )));
        }
        let batch = inputs.len() / d;
        let table = GELU_TABLES.value.as_slice();
        let mut current = inputs.to_vec();
        self.input_scaler.apply(&mut current);
        for layer in &self.layers {
            let o = layer.outputs;
            let mut z = vec![0.0; batch * o];
            dense(&current, layer, &mut z);
            if let Some((gain, off)) = &layer.norm {
                for row in z.chunks_exact_mut(o) {
                    let mean = lane_sum(row, |v| v) / o as f64;
                    let var = lane_sum(row, |v| (v - mean) * (v - mean)) / o as f64;
                    let is = 1.0 / (var + LN_EPS).sqrt();
                    for ((v, g), b) in row.iter_mut().zip(gain).zip(off) {
                        *v = g * ((*v - mean) * is) + b;
                    }
                }
                gelu_in_place(&mut z, table);
            }
            current = z;
        }
        self.output_scaler.invert(&mut current);
        if let Some(r) = &self.radial {
            r.expand(inputs, d, &mut current);
        }
        Ok(current)
    }
}

/// Single-sample inference in physical units.
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != params.n_inputs() {
        return Err(Error::Shape(format!(
            "expected {} inputs, got {}",
            params.n_inputs(),
            input.len()
        )));
    }
    params.forward_batch(input)
}
