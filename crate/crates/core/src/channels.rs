//! Scalar and small-vector Gaussian channel primitives.
//!
//! * Rademacher signal through `Y = sqrt(q) X + Z`: posterior mean
//!   `tanh(sqrt(q) Y)`, overlap `F(q) = E[tanh(sqrt(q) Z + q)]` and the Bayes
//!   risk of `sgn(Y)`, `P(Z > sqrt(q))`.
//! * Correlated Gaussian signals `X ~ N(0, M)` through `Y_t = sqrt(snr_t) X_t + Z_t`:
//!   the linear MMSE estimator `X̂ = B Y` and the per-coordinate overlap
//!   `E[X_t X̂_t] = [M - M (I + D_snr M)^{-1}]_tt`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Ten-point Gauss-Legendre abscissae on [-1, 1] (positive half).
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// Truncation of the standard normal support; the mass outside is ~1.5e-23.
const NORMAL_SUPPORT: f64 = 10.0;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A fixed rule for `E[g(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Composite ten-point Gauss-Legendre rule on `[-10, 10]` with panels no
    /// wider than `panel_width`, weighted by the standard normal density.
    ///
    /// Each panel integrates polynomials of degree 19 exactly, so the rule is
    /// exact up to truncation for polynomial moments; for integrands with
    /// complex singularities at distance `d` from the real axis the panel
    /// width should stay below `d`.
    pub fn standard_normal(panel_width: f64) -> Self {
        let panels = libm::ceil(2.0 * NORMAL_SUPPORT / panel_width).max(1.0) as usize;
        let h = 2.0 * NORMAL_SUPPORT / panels as f64;
        let half = 0.5 * h;
        let mut nodes = Vec::with_capacity(10 * panels);
        let mut weights = Vec::with_capacity(10 * panels);
        for p in 0..panels {
            let center = -NORMAL_SUPPORT + (p as f64 + 0.5) * h;
            for (&x, &w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                for z in [center - half * x, center + half * x] {
                    nodes.push(z);
                    weights.push(half * w * INV_SQRT_2PI * libm::exp(-0.5 * z * z));
                }
            }
        }
        Self { nodes, weights }
    }

    /// The rule used for `F(q)`: panel width tracks the distance
    /// `pi / (2 sqrt(q))` of the integrand's poles from the real axis.
    pub fn for_overlap(q: f64) -> Self {
        let width = if q > 0.0 { 1.0 / libm::sqrt(q) } else { 0.5 };
        Self::standard_normal(width.clamp(0.1, 0.5))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(&z, &w)| w * g(z))
            .sum()
    }
}

fn check_nonnegative(q: f64) -> Result<()> {
    if q >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeInput { value: q })
    }
}

/// Largest double strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// `F(q) = E[tanh(sqrt(q) Z + q)]`, the overlap of a Rademacher signal seen
/// through a Gaussian channel of SNR `q`.
///
/// The integrand is symmetrized over `±Z`,
/// `(tanh(q + b) + tanh(q - b)) / 2 = sinh(2q) / (cosh(2q) + cosh(2b))`,
/// which is positive and free of cancellation as `q -> 0` (so `F(q) / q -> 1`
/// is resolved to full relative precision). Results saturate below 1: for very
/// large `q` the output is clamped to the largest double under one.
pub fn overlap_f(q: f64) -> Result<f64> {
    check_nonnegative(q)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    let root = libm::sqrt(q);
    let rule = QuadratureRule::for_overlap(q);
    let value = rule.expect(|z| symmetric_tanh(q, (root * z).abs()));
    Ok(value.clamp(0.0, BELOW_ONE))
}

/// `(tanh(a + b) + tanh(a - b)) / 2` for `a > 0`, `b >= 0`, scaled by
/// `exp(-2 max(a, b))` so nothing overflows.
fn symmetric_tanh(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    let num = -libm::exp(2.0 * (a - m)) * libm::expm1(-4.0 * a);
    let den = libm::exp(2.0 * (a - m))
        + libm::exp(-2.0 * (a + m))
        + libm::exp(2.0 * (b - m))
        + libm::exp(-2.0 * (b + m));
    num / den
}

/// Standard normal upper tail `P(Z > x)`.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Bayes risk `P(Z > sqrt(q))` of the Rademacher channel with SNR `q`.
pub fn rademacher_bayes_risk(q: f64) -> Result<f64> {
    check_nonnegative(q)?;
    Ok(normal_tail(libm::sqrt(q)))
}

/// Posterior mean `E[X | Y = y] = tanh(sqrt(q) y)` of a Rademacher signal.
pub fn mmse_rademacher(y: f64, q: f64) -> Result<f64> {
    check_nonnegative(q)?;
    Ok(libm::tanh(libm::sqrt(q) * y))
}

fn check_channel(m: &DMatrix<f64>, snr: &[f64]) -> Result<Vec<f64>> {
    let t = m.nrows();
    if m.ncols() != t {
        return Err(Error::DimensionMismatch {
            what: "M columns",
            expected: t,
            found: m.ncols(),
        });
    }
    if snr.len() != t {
        return Err(Error::DimensionMismatch {
            what: "snr",
            expected: t,
            found: snr.len(),
        });
    }
    snr.iter()
        .map(|&s| {
            check_nonnegative(s)?;
            Ok(libm::sqrt(s))
        })
        .collect()
}

/// `B = M S (I + S M S)^{-1}` with `S = D_snr^{1/2}`, so that `X̂ = B Y`.
///
/// The inverse is taken through a Cholesky factorization of the symmetric
/// positive definite `I + S M S`.
pub fn gaussian_vector_mmse_matrix(m: &DMatrix<f64>, snr: &[f64]) -> Result<DMatrix<f64>> {
    let roots = check_channel(m, snr)?;
    mmse_matrix_with_roots(m, &roots)
}

fn mmse_matrix_with_roots(m: &DMatrix<f64>, roots: &[f64]) -> Result<DMatrix<f64>> {
    let t = m.nrows();
    // S M, row t scaled by sqrt(snr_t).
    let mut sm = m.clone();
    for (i, &r) in roots.iter().enumerate() {
        sm.row_mut(i).scale_mut(r);
    }
    let mut k = DMatrix::identity(t, t);
    for i in 0..t {
        for j in 0..t {
            k[(i, j)] += sm[(i, j)] * roots[j];
        }
    }
    linalg::symmetrize(&mut k);
    // K symmetric, so B = (K^{-1} S M)ᵀ.
    Ok(linalg::spd_solve(k, &sm)?.transpose())
}

/// Per-coordinate overlaps `diag(M - M (I + D_snr M)^{-1})`.
///
/// Evaluated as `diag(B S M)`, which equals the expression above but avoids
/// the cancellation of the difference form at small SNR. Each entry lies in
/// `[0, M_tt]`.
pub fn gaussian_vector_overlap(m: &DMatrix<f64>, snr: &[f64]) -> Result<Vec<f64>> {
    let roots = check_channel(m, snr)?;
    let b = mmse_matrix_with_roots(m, &roots)?;
    let t = m.nrows();
    Ok((0..t)
        .map(|i| {
            let v: f64 = (0..t).map(|s| b[(i, s)] * roots[s] * m[(s, i)]).sum();
            v.clamp(0.0, m[(i, i)].max(0.0))
        })
        .collect())
}
