//! Finite-dimensional realizations of the mixture model, the optimal
//! supervised classifier and plug-in parameter estimators.
//!
//! Randomness comes from ChaCha8 streams keyed by the user seed and indexed by
//! `(purpose, task, index)`, so every point of a dataset is a pure function of
//! `(seed, task, index)` regardless of generation order.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channels;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ValidatedEnsemble;

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Purpose {
    Frame = 1,
    Point = 2,
    Test = 3,
}

const TASK_BITS: u32 = 20;
const INDEX_BITS: u32 = 40;

fn stream(seed: u64, purpose: Purpose, task: usize, index: usize) -> ChaCha8Rng {
    debug_assert!((task as u64) < (1 << TASK_BITS) && (index as u64) < (1 << INDEX_BITS));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(
        ((purpose as u64) << (TASK_BITS + INDEX_BITS))
            | ((task as u64) << INDEX_BITS)
            | index as u64,
    );
    rng
}

fn fill_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

fn label(rng: &mut ChaCha8Rng) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Points of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSample {
    /// D×N; column `i` is the point `Y_ti`.
    pub points: DMatrix<f64>,
    /// Class `V_ti` in {-1, +1}.
    pub labels: Vec<i8>,
    /// Whether `V_ti` is revealed.
    pub labeled: Vec<bool>,
}

impl TaskSample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.iter().filter(|&&l| l).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub tasks: Vec<TaskSample>,
    /// D×T class means `U_t` (unit columns, Gram matrix `C`). Diagnostics and
    /// test-point generation only; estimators never look at it.
    pub hidden: DMatrix<f64>,
}

/// Draws one dataset with `sizes[t]` points in task `t`.
///
/// The means are built exactly: a Gaussian frame is orthonormalized
/// (Gram-Schmidt order, via QR with sign correction) and mixed with the PSD
/// square root of `C`, so `<U_t, U_s> = C_ts` holds to round-off at any `dim`.
pub fn generate(
    ens: &ValidatedEnsemble,
    dim: usize,
    sizes: &[usize],
    seed: u64,
) -> Result<Dataset> {
    let t = ens.tasks();
    if sizes.len() != t {
        return Err(Error::DimensionMismatch {
            what: "sizes",
            expected: t,
            found: sizes.len(),
        });
    }
    if dim <= t {
        return Err(Error::DimensionTooSmall { dim, tasks: t });
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidSize {
            what: "every task needs at least one point",
        });
    }
    if let Some(index) = ens.snr().iter().position(|&l| l <= 0.0) {
        return Err(Error::OutOfRangeScalar {
            field: "lambda",
            index,
            value: ens.snr()[index],
            expected: "lambda > 0 to sample data",
        });
    }
    let hidden = class_means(ens, dim, seed);
    let sigma = ens.config().sigma();
    let tasks = (0..t)
        .map(|task| {
            let n = sizes[task];
            let eta = ens.eta()[task];
            let mean = hidden.column(task);
            let mut points = DMatrix::zeros(dim, n);
            let mut labels = Vec::with_capacity(n);
            let mut labeled = Vec::with_capacity(n);
            for i in 0..n {
                let mut rng = stream(seed, Purpose::Point, task, i);
                let v = label(&mut rng);
                labeled.push(rng.random::<f64>() < eta);
                let mut col = points.column_mut(i);
                fill_normal(&mut rng, col.as_mut_slice());
                col *= sigma[task];
                col.axpy(f64::from(v), &mean, 1.0);
                labels.push(v);
            }
            TaskSample {
                points,
                labels,
                labeled,
            }
        })
        .collect();
    Ok(Dataset { dim, tasks, hidden })
}

fn class_means(ens: &ValidatedEnsemble, dim: usize, seed: u64) -> DMatrix<f64> {
    let t = ens.tasks();
    let mut frame = DMatrix::zeros(dim, t);
    for task in 0..t {
        let mut rng = stream(seed, Purpose::Frame, task, 0);
        fill_normal(&mut rng, frame.column_mut(task).as_mut_slice());
    }
    let qr = frame.qr();
    let r = qr.r();
    let mut s = qr.q();
    // Householder QR fixes Q only up to column signs; match Gram-Schmidt.
    for j in 0..t {
        if r[(j, j)] < 0.0 {
            s.column_mut(j).neg_mut();
        }
    }
    s * linalg::psd_sqrt(ens.correlation())
}

/// Weights of the optimal supervised classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierWeights {
    /// Per-task signed class means `Ȳ_t` over labeled points.
    pub ybar: Vec<DVector<f64>>,
    /// `A = M D_alpha (I + M D_alpha)^{-1}`.
    pub mixing: DMatrix<f64>,
    /// Fused directions `Ỹ_t = sum_s A_ts Ȳ_s`.
    pub ytilde: Vec<DVector<f64>>,
}

fn signed_mean(sample: &TaskSample, task: usize) -> Result<(DVector<f64>, usize)> {
    let mut sum = DVector::zeros(sample.points.nrows());
    let mut count = 0usize;
    for i in 0..sample.len() {
        if sample.labeled[i] {
            sum.axpy(f64::from(sample.labels[i]), &sample.points.column(i), 1.0);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyTask { task });
    }
    Ok((sum / count as f64, count))
}

/// Mixing matrix `A = M D_alpha (I + M D_alpha)^{-1}`, computed as
/// `A_ts = B_ts sqrt(alpha_s)` from the MMSE matrix of the vector channel with
/// SNRs `alpha`.
pub fn mixing_matrix(ens: &ValidatedEnsemble) -> Result<DMatrix<f64>> {
    let m = ens.effective_matrices().m;
    let mut a = channels::gaussian_vector_mmse_matrix(&m, ens.alpha())?;
    for (s, &alpha) in ens.alpha().iter().enumerate() {
        a.column_mut(s).scale_mut(libm::sqrt(alpha));
    }
    Ok(a)
}

/// Fits the classifier on the labeled points of every task. With every point
/// labeled this is the asymptotically Bayes-optimal supervised rule.
pub fn fit_supervised(ens: &ValidatedEnsemble, data: &Dataset) -> Result<ClassifierWeights> {
    let t = ens.tasks();
    if data.tasks.len() != t {
        return Err(Error::DimensionMismatch {
            what: "dataset tasks",
            expected: t,
            found: data.tasks.len(),
        });
    }
    let ybar = data
        .tasks
        .iter()
        .enumerate()
        .map(|(task, s)| signed_mean(s, task).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    let mixing = mixing_matrix(ens)?;
    let ytilde = (0..t)
        .map(|task| {
            let mut v = DVector::zeros(data.dim);
            for (s, yb) in ybar.iter().enumerate() {
                v.axpy(mixing[(task, s)], yb, 1.0);
            }
            v
        })
        .collect();
    Ok(ClassifierWeights {
        ybar,
        mixing,
        ytilde,
    })
}

impl ClassifierWeights {
    pub fn tasks(&self) -> usize {
        self.ytilde.len()
    }

    /// `sgn(<y, Ỹ_task>)` with `sgn(0) = +1`.
    pub fn classify(&self, task: usize, y: &[f64]) -> Result<i8> {
        let dir = self.ytilde.get(task).ok_or(Error::InvalidTask {
            task,
            tasks: self.tasks(),
        })?;
        if y.len() != dir.len() {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: dir.len(),
                found: y.len(),
            });
        }
        let dot: f64 = dir.iter().zip(y).map(|(a, b)| a * b).sum();
        Ok(if dot >= 0.0 { 1 } else { -1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub risk: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub stderr: f64,
}

/// Misclassification rate of `weights` on `n_test` fresh points of `task`,
/// drawn around the dataset's hidden mean.
pub fn empirical_risk(
    ens: &ValidatedEnsemble,
    data: &Dataset,
    weights: &ClassifierWeights,
    task: usize,
    n_test: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    let t = ens.tasks();
    if task >= t || task >= data.hidden.ncols() {
        return Err(Error::InvalidTask { task, tasks: t });
    }
    if n_test == 0 {
        return Err(Error::InvalidSize {
            what: "n_test must be positive",
        });
    }
    let sigma = 1.0 / libm::sqrt(ens.snr()[task]);
    if !sigma.is_finite() {
        return Err(Error::OutOfRangeScalar {
            field: "lambda",
            index: task,
            value: ens.snr()[task],
            expected: "lambda > 0 to sample data",
        });
    }
    let mean = data.hidden.column(task);
    let mut y = DVector::zeros(data.dim);
    let mut errors = 0usize;
    for i in 0..n_test {
        let mut rng = stream(seed, Purpose::Test, task, i);
        let v = label(&mut rng);
        fill_normal(&mut rng, y.as_mut_slice());
        y *= sigma;
        y.axpy(f64::from(v), &mean, 1.0);
        if weights.classify(task, y.as_slice())? != v {
            errors += 1;
        }
    }
    let p = errors as f64 / n_test as f64;
    Ok(RiskEstimate {
        risk: p,
        stderr: libm::sqrt(p * (1.0 - p) / n_test as f64),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEstimate {
    /// `Ĉ_ts = <Ȳ_t, Ȳ_s>` off the diagonal, 1 on it.
    pub correlation: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// Tasks whose variance estimate came out negative and was clamped to 0.
    pub clamped: Vec<bool>,
}

/// Plug-in estimates of `C` and `sigma` from labeled points.
///
/// With `Ȳ_t` the signed mean of the `n_t` labeled points,
/// `||Ȳ_t||^2 ≈ 1 + sigma_t^2 / alpha_t` where `alpha_t = n_t / D`, hence
/// `sigma_t^2 ≈ (n_t / D)(||Ȳ_t||^2 - 1)`.
pub fn estimate_parameters(data: &Dataset) -> Result<ParameterEstimate> {
    let t = data.tasks.len();
    let mut means = Vec::with_capacity(t);
    let mut sigma = Vec::with_capacity(t);
    let mut clamped = Vec::with_capacity(t);
    for (task, sample) in data.tasks.iter().enumerate() {
        let (ybar, n) = signed_mean(sample, task).map_err(|_| Error::NoLabeledData { task })?;
        let var = (n as f64 / data.dim as f64) * (ybar.norm_squared() - 1.0);
        clamped.push(var < 0.0);
        sigma.push(libm::sqrt(var.max(0.0)));
        means.push(ybar);
    }
    let mut correlation = DMatrix::identity(t, t);
    for i in 0..t {
        for j in (i + 1)..t {
            let c = means[i].dot(&means[j]);
            correlation[(i, j)] = c;
            correlation[(j, i)] = c;
        }
    }
    Ok(ParameterEstimate {
        correlation,
        sigma,
        clamped,
    })
}

/// `N_t = round(alpha_t D)`, at least one.
pub fn sizes_from_alpha(ens: &ValidatedEnsemble, dim: usize) -> Vec<usize> {
    ens.alpha()
        .iter()
        .map(|&a| (libm::round(a * dim as f64) as usize).max(1))
        .collect()
}
