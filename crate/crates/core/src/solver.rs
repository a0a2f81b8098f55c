//! Fixed-point solver for the task overlaps.
//!
//! For every task the overlaps `(q_u, q_v)` satisfy
//!
//! ```text
//! q_u = diag(M - M (I + D M)^{-1}),   D = diag(alpha_t q_v_t)
//! q_v = eta + (1 - eta) F(q_u)
//! ```
//!
//! and the asymptotic Bayes risk of task `t` is `P(Z > sqrt(q_u_t))`.
//!
//! The map `q_v -> eta + (1 - eta) F(overlap(alpha q_v))` is monotone, so the
//! damped iteration started at the fully informative point `q_v = 1` descends
//! monotonically to the largest fixed point. Tasks that are not linked by a
//! nonzero entry of `M` decouple and are solved block by block.
//!
//! An unsupervised block may converge to the trivial point `q = 0`; the
//! iteration reaches it only geometrically (or, at the critical SNR,
//! algebraically), which no finite tolerance turns into an exact zero. Once
//! every iterate of such a block falls into the linear regime, the solver
//! measures the growth factor of its own map at a tiny probe scale and, when
//! the trivial point attracts, returns it exactly.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::channels;
use crate::error::{Error, Result};
use crate::model::ValidatedEnsemble;

/// Overlaps below this are reported as exactly zero.
pub const ZERO_SNAP: f64 = 1e-14;
/// Growth factors within this band above 1 count as marginal (trivial point
/// attracting), matching the weak inequality of the stability criterion.
pub const BOUNDARY_BAND: f64 = 1e-9;

/// `max q_v` below which an unsupervised block is probed for attraction to
/// the trivial point.
const LINEAR_REGIME: f64 = 1e-3;
const PROBE_SCALE: f64 = 1e-10;
const MAX_PROBE_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Weight `gamma` of the new iterate: `q_v <- (1 - gamma) q_v + gamma G(q_v)`.
    pub damping: f64,
    /// Sup-norm tolerance on `G(q_v) - q_v`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

impl SolverOptions {
    fn check(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::OutOfRange {
                what: "damping",
                value: self.damping,
                expected: "0 < damping <= 1",
            });
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::OutOfRange {
                what: "tol",
                value: self.tol,
                expected: "0 < tol < inf",
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidSize {
                what: "max_iter must be positive",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlaps {
    /// Overlap of `U_t / sigma_t`, in `[0, lambda_t]`.
    pub q_u: Vec<f64>,
    /// Overlap of the label vector, in `[eta_t, 1]` (or exactly 0 for an
    /// impossible unsupervised task).
    pub q_v: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm of `G(q_v) - q_v` at the returned point.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub risk: Vec<f64>,
    pub overlaps: Overlaps,
}

fn check_qv(t: usize, q_v: &[f64]) -> Result<()> {
    if q_v.len() != t {
        return Err(Error::DimensionMismatch {
            what: "q_v",
            expected: t,
            found: q_v.len(),
        });
    }
    match q_v.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::OutOfRangeScalar {
            field: "q_v",
            index,
            value: q_v[index],
            expected: "0 <= q_v <= 1",
        }),
        None => Ok(()),
    }
}

/// One undamped application of the fixed-point map: returns `(q_u, G(q_v))`.
pub fn iterate_once(ens: &ValidatedEnsemble, q_v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_qv(ens.tasks(), q_v)?;
    let m = ens.effective_matrices().m;
    Block {
        m,
        alpha: ens.alpha().to_vec(),
        eta: ens.eta().to_vec(),
    }
    .map(q_v)
}

/// Tasks coupled through `M`, solved independently of the others.
struct Block {
    m: DMatrix<f64>,
    alpha: Vec<f64>,
    eta: Vec<f64>,
}

struct BlockSolution {
    q_u: Vec<f64>,
    q_v: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

impl Block {
    fn map(&self, q_v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let snr: Vec<f64> = self.alpha.iter().zip(q_v).map(|(a, q)| a * q).collect();
        let q_u = channels::gaussian_vector_overlap(&self.m, &snr)?;
        let next = q_u
            .iter()
            .zip(&self.eta)
            .map(|(&qu, &eta)| Ok(eta + (1.0 - eta) * channels::overlap_f(qu)?))
            .collect::<Result<Vec<_>>>()?;
        Ok((q_u, next))
    }

    fn is_unsupervised(&self) -> bool {
        self.eta.iter().all(|&e| e == 0.0)
    }

    fn solve(&self, opts: &SolverOptions) -> Result<BlockSolution> {
        let n = self.eta.len();
        let mut q_v = vec![1.0; n];
        let mut probed = !self.is_unsupervised();
        for it in 1..=opts.max_iter {
            let (q_u, next) = self.map(&q_v)?;
            let residual = sup_diff(&next, &q_v);
            if residual < opts.tol {
                return Ok(BlockSolution {
                    q_u,
                    q_v,
                    iterations: it,
                    residual,
                    converged: true,
                });
            }
            if !probed && q_v.iter().all(|&v| v < LINEAR_REGIME) {
                probed = true;
                if self.trivial_point_attracts()? {
                    return Ok(BlockSolution {
                        q_u: vec![0.0; n],
                        q_v: vec![0.0; n],
                        iterations: it,
                        residual: 0.0,
                        converged: true,
                    });
                }
            }
            for (v, nv) in q_v.iter_mut().zip(&next) {
                *v = (1.0 - opts.damping) * *v + opts.damping * nv;
            }
        }
        let (q_u, next) = self.map(&q_v)?;
        let residual = sup_diff(&next, &q_v);
        Ok(BlockSolution {
            q_u,
            q_v,
            iterations: opts.max_iter,
            residual,
            converged: false,
        })
    }

    /// Power iteration on `x -> G(s x) / s` for a tiny scale `s`, i.e. on the
    /// linearization of the map at zero (a nonnegative, primitive matrix for a
    /// connected block). Collatz-Wielandt bounds `min_t (Jx)_t / x_t <= rho <=
    /// max_t (Jx)_t / x_t` decide whether the spectral radius exceeds one.
    fn trivial_point_attracts(&self) -> Result<bool> {
        let n = self.eta.len();
        let mut x = vec![1.0; n];
        for _ in 0..MAX_PROBE_STEPS {
            let probe: Vec<f64> = x.iter().map(|v| v * PROBE_SCALE).collect();
            let (_, g) = self.map(&probe)?;
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for (gi, pi) in g.iter().zip(&probe) {
                let r = gi / pi;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            if hi <= 1.0 + BOUNDARY_BAND {
                return Ok(true);
            }
            if lo > 1.0 + BOUNDARY_BAND {
                return Ok(false);
            }
            let top = g.iter().cloned().fold(0.0, f64::max);
            if top <= 0.0 {
                return Ok(true);
            }
            x = g.iter().map(|v| v / top).collect();
        }
        // Undecided inside the boundary band: marginal, hence attracting.
        Ok(true)
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| f64::max(acc, (x - y).abs()))
}

/// Groups of tasks connected through nonzero entries of `M`.
fn components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let t = m.nrows();
    let mut label = vec![usize::MAX; t];
    let mut groups = Vec::new();
    for start in 0..t {
        if label[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = vec![start];
        label[start] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for j in 0..t {
                if label[j] == usize::MAX && j != i && m[(i, j)] != 0.0 {
                    label[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

/// Solves the fixed-point equations from the informative start `q_v = 1`.
///
/// On non-convergence the error carries the last iterate and its residual.
pub fn solve(ens: &ValidatedEnsemble, opts: &SolverOptions) -> Result<Overlaps> {
    opts.check()?;
    let t = ens.tasks();
    let m = ens.effective_matrices().m;
    let mut out = Overlaps {
        q_u: vec![0.0; t],
        q_v: vec![0.0; t],
        iterations: 0,
        residual: 0.0,
    };
    let mut converged = true;
    for group in components(&m) {
        let block = Block {
            m: DMatrix::from_fn(group.len(), group.len(), |i, j| m[(group[i], group[j])]),
            alpha: group.iter().map(|&i| ens.alpha()[i]).collect(),
            eta: group.iter().map(|&i| ens.eta()[i]).collect(),
        };
        let sol = block.solve(opts)?;
        for (k, &i) in group.iter().enumerate() {
            out.q_u[i] = if sol.q_u[k] < ZERO_SNAP {
                0.0
            } else {
                sol.q_u[k]
            };
            out.q_v[i] = sol.q_v[k];
        }
        out.iterations = out.iterations.max(sol.iterations);
        out.residual = out.residual.max(sol.residual);
        converged &= sol.converged;
    }
    if converged {
        Ok(out)
    } else {
        Err(Error::NoConvergence(Box::new(out)))
    }
}

/// Maps overlaps to per-task Bayes risks `P(Z > sqrt(q_u))`.
pub fn risk_from_overlaps(overlaps: Overlaps) -> Result<RiskReport> {
    let risk = overlaps
        .q_u
        .iter()
        .map(|&q| channels::rademacher_bayes_risk(q))
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskReport { risk, overlaps })
}

pub fn risk_report(ens: &ValidatedEnsemble, opts: &SolverOptions) -> Result<RiskReport> {
    risk_from_overlaps(solve(ens, opts)?)
}
