//! Training-side arithmetic on toy tensors: projection-weight extension for a
//! second modality, the depth-loss ramp, closed-form forward noising,
//! v-prediction targets and the staged objectives.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::LengthMismatch {
                context: "matrix row",
                expected: cols,
                actual: bad.len(),
            });
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                context: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `xᵀ · self` for a row vector `x` of length `rows`.
    ///
    /// Accumulates in row order starting from `+0.0`.
    pub fn left_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::LengthMismatch {
                context: "vector-matrix product",
                expected: self.rows,
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, xr) in x.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += xr * w;
            }
        }
        Ok(out)
    }
}

/// Input/output projections around the transformer body.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionWeights {
    /// `C_v × C_t`.
    pub w_in: Matrix,
    /// `C_t`.
    pub b_in: Vec<f64>,
    /// `C_t × C_v`.
    pub w_out: Matrix,
    /// `C_v`.
    pub b_out: Vec<f64>,
}

impl ProjectionWeights {
    pub fn new(w_in: Matrix, b_in: Vec<f64>, w_out: Matrix, b_out: Vec<f64>) -> Result<Self> {
        let w = Self { w_in, b_in, w_out, b_out };
        w.validate()?;
        Ok(w)
    }

    pub fn latent_dim(&self) -> usize {
        self.w_in.rows()
    }

    pub fn token_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn validate(&self) -> Result<()> {
        check_projection_shapes(&self.w_in, &self.b_in, &self.w_out, &self.b_out)
    }
}

/// Projections for paired latents `[z_rgb; z_d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedProjectionWeights {
    /// `2C_v × C_t`.
    pub w_in_plus: Matrix,
    /// `C_t`.
    pub b_in_plus: Vec<f64>,
    /// `C_t × 2C_v`.
    pub w_out_plus: Matrix,
    /// `2C_v`.
    pub b_out_plus: Vec<f64>,
}

impl ExtendedProjectionWeights {
    pub fn validate(&self) -> Result<()> {
        check_projection_shapes(&self.w_in_plus, &self.b_in_plus, &self.w_out_plus, &self.b_out_plus)?;
        if !self.w_in_plus.rows().is_multiple_of(2) {
            return Err(invalid("w_in_plus", "row count must be even"));
        }
        Ok(())
    }
}

fn check_projection_shapes(w_in: &Matrix, b_in: &[f64], w_out: &Matrix, b_out: &[f64]) -> Result<()> {
    let (cv, ct) = (w_in.rows(), w_in.cols());
    let mismatch = |context, expected, actual| Err(Error::LengthMismatch { context, expected, actual });
    if b_in.len() != ct {
        return mismatch("input bias", ct, b_in.len());
    }
    if w_out.rows() != ct {
        return mismatch("output projection rows", ct, w_out.rows());
    }
    if w_out.cols() != cv {
        return mismatch("output projection columns", cv, w_out.cols());
    }
    if b_out.len() != cv {
        return mismatch("output bias", cv, b_out.len());
    }
    let finite = w_in.is_finite() && w_out.is_finite() && b_in.iter().chain(b_out).all(|v| v.is_finite());
    if !finite {
        return Err(invalid("weights", "all entries must be finite"));
    }
    Ok(())
}

/// Zero-pads the input projection and duplicates the output projection:
///
/// ```text
/// W_in⁺ = [W_in; 0]   b_in⁺ = b_in   W_out⁺ = [W_out  W_out]   b_out⁺ = [b_out; b_out]
/// ```
pub fn extend_projections(w: &ProjectionWeights) -> ExtendedProjectionWeights {
    let (cv, ct) = (w.latent_dim(), w.token_dim());
    let mut w_in_plus = Matrix::zeros(2 * cv, ct);
    for r in 0..cv {
        for c in 0..ct {
            w_in_plus.set(r, c, w.w_in.get(r, c));
        }
    }
    let mut w_out_plus = Matrix::zeros(ct, 2 * cv);
    for r in 0..ct {
        for c in 0..cv {
            w_out_plus.set(r, c, w.w_out.get(r, c));
            w_out_plus.set(r, cv + c, w.w_out.get(r, c));
        }
    }
    let mut b_out_plus = w.b_out.clone();
    b_out_plus.extend_from_slice(&w.b_out);
    ExtendedProjectionWeights {
        w_in_plus,
        b_in_plus: w.b_in.clone(),
        w_out_plus,
        b_out_plus,
    }
}

fn project_token(w_in: &Matrix, b_in: &[f64], w_out: &Matrix, b_out: &[f64], latent: &[f64]) -> Result<Vec<f64>> {
    let mut token = w_in.left_mul(latent)?;
    for (t, b) in token.iter_mut().zip(b_in) {
        *t += b;
    }
    // Identity transformer body.
    let mut out = w_out.left_mul(&token)?;
    for (o, b) in out.iter_mut().zip(b_out) {
        *o += b;
    }
    Ok(out)
}

/// `(latentᵀ · W_in + b_in) · W_out + b_out` with an identity body.
pub fn toy_forward(w: &ProjectionWeights, latent: &[f64]) -> Result<Vec<f64>> {
    project_token(&w.w_in, &w.b_in, &w.w_out, &w.b_out, latent)
}

/// Extended model on `[z_rgb; z_d]`; returns `[out_rgb; out_d]`.
pub fn toy_forward_extended(w: &ExtendedProjectionWeights, latent: &[f64]) -> Result<Vec<f64>> {
    project_token(&w.w_in_plus, &w.b_in_plus, &w.w_out_plus, &w.b_out_plus, latent)
}

/// Ramp increment and geometric-loss weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha_ramp: f64,
    pub lambda_geo: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_ramp: 0.0001,
            lambda_geo: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_ramp > 0.0 && self.alpha_ramp.is_finite()) {
            return Err(invalid("alpha_ramp", format!("must be positive, got {}", self.alpha_ramp)));
        }
        if !(self.lambda_geo >= 0.0 && self.lambda_geo.is_finite()) {
            return Err(invalid("lambda_geo", format!("must be non-negative, got {}", self.lambda_geo)));
        }
        Ok(())
    }
}

/// `min(1, 0.1 + α·step)`.
pub fn lambda_depth(step: u64, weights: &LossWeights) -> f64 {
    (0.1 + weights.alpha_ramp * step as f64).min(1.0)
}

/// `L_rgb + λ_depth(step) · L_d`.
pub fn stage1_loss(l_rgb: f64, l_d: f64, step: u64, weights: &LossWeights) -> f64 {
    l_rgb + lambda_depth(step, weights) * l_d
}

/// `L_rgb + λ_depth(step) · L_d + λ_geo · L_geo`.
pub fn total_loss(l_rgb: f64, l_d: f64, l_geo: f64, step: u64, weights: &LossWeights) -> f64 {
    stage1_loss(l_rgb, l_d, step, weights) + weights.lambda_geo * l_geo
}

/// Mean squared error between a prediction and its target.
pub fn diffusion_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            context: "diffusion loss",
            expected: target.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("diffusion loss over empty tensors"));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Cumulative signal fractions `ᾱ_t` for `t = 0..=S`, with `ᾱ_0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// From per-step `α_t ∈ (0, 1]`, `t = 1..=S`.
    pub fn from_alphas(alphas: &[f64]) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::EmptyInput("noise schedule has no steps"));
        }
        let mut alpha_bars = Vec::with_capacity(alphas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for (t, a) in alphas.iter().enumerate() {
            if !(*a > 0.0 && *a <= 1.0) {
                return Err(invalid("alphas", format!("α_{} = {a} outside (0, 1]", t + 1)));
            }
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Self { alpha_bars })
    }

    /// From cumulative `ᾱ_1..=ᾱ_S`: non-increasing values in `[0, 1]`.
    pub fn from_alpha_bars(bars: &[f64]) -> Result<Self> {
        if bars.is_empty() {
            return Err(Error::EmptyInput("noise schedule has no steps"));
        }
        let mut alpha_bars = Vec::with_capacity(bars.len() + 1);
        alpha_bars.push(1.0);
        for (t, b) in bars.iter().enumerate() {
            let prev = *alpha_bars.last().unwrap_or(&1.0);
            if !(0.0..=prev).contains(b) {
                return Err(invalid(
                    "alpha_bars",
                    format!("ᾱ_{} = {b} must lie in [0, ᾱ_{}] = [0, {prev}]", t + 1, t),
                ));
            }
            alpha_bars.push(*b);
        }
        Ok(Self { alpha_bars })
    }

    /// `ᾱ_t = 1 − t/S`, reaching pure noise at `t = S`.
    pub fn linear(steps: usize) -> Result<Self> {
        let s = steps as f64;
        let bars: Vec<f64> = (1..=steps).map(|t| 1.0 - t as f64 / s).collect();
        Self::from_alpha_bars(&bars)
    }

    pub fn steps(&self) -> usize {
        self.alpha_bars.len() - 1
    }

    /// `ᾱ_t` for `t ∈ 0..=S`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars
            .get(t)
            .copied()
            .ok_or(Error::TimestepOutOfRange { t, steps: self.steps() })
    }

    fn check_t(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps() {
            return Err(Error::TimestepOutOfRange { t, steps: self.steps() });
        }
        self.alpha_bar(t)
    }
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            context: "latent vs noise",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// `z_t = √ᾱ_t · z0 + √(1 − ᾱ_t) · ε` for `1 <= t <= S`.
pub fn add_noise(z0: &[f64], eps: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    check_same_len(z0, eps)?;
    let ab = sched.check_t(t)?;
    let (a, b) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
    Ok(z0.iter().zip(eps).map(|(z, e)| a * z + b * e).collect())
}

/// `v = √ᾱ_t · ε − √(1 − ᾱ_t) · z0`.
pub fn v_target(z0: &[f64], eps: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    check_same_len(z0, eps)?;
    let ab = sched.check_t(t)?;
    let (a, b) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
    Ok(z0.iter().zip(eps).map(|(z, e)| a * e - b * z).collect())
}

/// Recovers `z0 = √ᾱ_t · z_t − √(1 − ᾱ_t) · v`.
pub fn z0_from_v(z_t: &[f64], v: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    check_same_len(z_t, v)?;
    let ab = sched.check_t(t)?;
    let (a, b) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
    Ok(z_t.iter().zip(v).map(|(z, v)| a * z - b * v).collect())
}
