//! Classification EM on the rows of `M`: hard assignments, per-cluster
//! Gaussian components, and the quasi mixture log-likelihood used for BIC.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::data::GramMatrix;
use crate::error::{Error, Result};
use crate::select::{bic, num_params};
use crate::transform::{update_m_delta, MMatrix};

pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const MIN_RIDGE: f64 = 1e-8;
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CovarianceModel {
    /// Per-coordinate variances, floored at [`VARIANCE_FLOOR`].
    #[default]
    Diagonal,
    /// Full scatter plus `relative_ridge * trace / D` on the diagonal
    /// (never less than [`MIN_RIDGE`]).
    FullRidge { relative_ridge: f64 },
}

#[derive(Debug, Clone)]
pub enum Covariance {
    Diagonal {
        variances: Array1<f64>,
        inv: Array1<f64>,
        log_det: f64,
    },
    Full {
        matrix: Array2<f64>,
        ridge: f64,
        lower: DMatrix<f64>,
        log_det: f64,
    },
}

impl Covariance {
    pub fn diagonal(variances: Array1<f64>) -> Result<Self> {
        if variances.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::SingularCovariance(0));
        }
        let log_det = variances.iter().map(|v| v.ln()).sum();
        Ok(Self::Diagonal {
            inv: variances.mapv(f64::recip),
            variances,
            log_det,
        })
    }

    /// `matrix` must already include the ridge.
    pub fn full(matrix: Array2<f64>, ridge: f64) -> Result<Self> {
        let d = matrix.nrows();
        let chol = DMatrix::from_fn(d, d, |i, j| matrix[[i, j]])
            .cholesky()
            .ok_or(Error::SingularCovariance(0))?;
        let lower = chol.unpack();
        let log_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance(0));
        }
        Ok(Self::Full {
            matrix,
            ridge,
            lower,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal { variances, .. } => variances.len(),
            Self::Full { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn log_det(&self) -> f64 {
        match self {
            Self::Diagonal { log_det, .. } | Self::Full { log_det, .. } => *log_det,
        }
    }

    /// Dense form of the covariance.
    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Self::Diagonal { variances, .. } => Array2::from_diag(variances),
            Self::Full { matrix, .. } => matrix.clone(),
        }
    }

    fn mahalanobis_sq(&self, row: ArrayView1<'_, f64>, mean: ArrayView1<'_, f64>) -> f64 {
        match self {
            Self::Diagonal { inv, .. } => row
                .iter()
                .zip(mean.iter())
                .zip(inv.iter())
                .map(|((x, m), w)| (x - m) * (x - m) * w)
                .sum(),
            Self::Full { lower, .. } => {
                let diff = nalgebra::DVector::from_iterator(row.len(), row.iter().zip(mean.iter()).map(|(x, m)| x - m));
                let z = lower
                    .solve_lower_triangular(&diff)
                    .expect("Cholesky factor has a positive diagonal");
                z.norm_squared()
            }
        }
    }

    fn log_density(&self, row: ArrayView1<'_, f64>, mean: ArrayView1<'_, f64>) -> f64 {
        let d = row.len() as f64;
        -0.5 * (d * LN_2PI + self.log_det() + self.mahalanobis_sq(row, mean))
    }
}

/// Gaussian log-density with the normalizing dimension taken from the row length.
pub fn component_density_log(row: ArrayView1<'_, f64>, mean: ArrayView1<'_, f64>, cov: &Covariance) -> Result<f64> {
    if row.len() != mean.len() || row.len() != cov.dim() {
        return Err(Error::DimensionMismatch(format!(
            "row {}, mean {}, covariance {}",
            row.len(),
            mean.len(),
            cov.dim()
        )));
    }
    if !cov.log_det().is_finite() {
        return Err(Error::SingularCovariance(0));
    }
    Ok(cov.log_density(row, mean))
}

#[derive(Debug, Clone)]
pub struct MixtureParams {
    pub weights: Array1<f64>,
    /// `K x D`, one component mean per row.
    pub means: Array2<f64>,
    pub covariances: Vec<Covariance>,
    /// Number of variances raised to [`VARIANCE_FLOOR`] (diagonal model only).
    pub floored_variances: usize,
    /// Components with at least one coordinate whose within-cluster variance
    /// is below [`VARIANCE_FLOOR`]; their density there is set by the floor,
    /// not by the data.
    pub collapsed_components: usize,
}

impl MixtureParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

/// M-step for an assignment given as 0-based component indices; fails when
/// any of the `k` components is empty.
pub fn mstep_indices(rows: &Array2<f64>, idx: &[usize], k: usize, model: CovarianceModel) -> Result<MixtureParams> {
    let (n, d) = rows.dim();
    if idx.len() != n {
        return Err(Error::LengthMismatch {
            left: idx.len(),
            right: n,
        });
    }
    let mut counts = vec![0usize; k];
    let mut means = Array2::<f64>::zeros((k, d));
    for (i, &c) in idx.iter().enumerate() {
        counts[c] += 1;
        let mut target = means.row_mut(c);
        target += &rows.row(i);
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCluster(empty + 1));
    }
    for (c, &nk) in counts.iter().enumerate() {
        means.row_mut(c).mapv_inplace(|v| v / nk as f64);
    }
    let weights = Array1::from_iter(counts.iter().map(|&c| c as f64 / n as f64));

    let mut covariances = Vec::with_capacity(k);
    let mut floored = 0usize;
    let mut collapsed = 0usize;
    for (c, &count) in counts.iter().enumerate() {
        let nk = count as f64;
        let mean = means.row(c);
        let members = idx.iter().enumerate().filter(|(_, &l)| l == c).map(|(i, _)| i);
        let cov = match model {
            CovarianceModel::Diagonal => {
                let mut var = Array1::<f64>::zeros(d);
                for i in members {
                    for ((v, x), m) in var.iter_mut().zip(rows.row(i).iter()).zip(mean.iter()) {
                        *v += (x - m) * (x - m);
                    }
                }
                let before = floored;
                var.mapv_inplace(|v| {
                    let v = v / nk;
                    if v < VARIANCE_FLOOR {
                        floored += 1;
                        VARIANCE_FLOOR
                    } else {
                        v
                    }
                });
                if floored > before {
                    collapsed += 1;
                }
                Covariance::diagonal(var)
            }
            CovarianceModel::FullRidge { relative_ridge } => {
                let mut scatter = Array2::<f64>::zeros((d, d));
                for i in members {
                    let diff = &rows.row(i) - &mean;
                    for a in 0..d {
                        for b in a..d {
                            scatter[[a, b]] += diff[a] * diff[b];
                        }
                    }
                }
                for a in 0..d {
                    for b in a..d {
                        let v = scatter[[a, b]] / nk;
                        scatter[[a, b]] = v;
                        scatter[[b, a]] = v;
                    }
                }
                let trace = scatter.diag().sum();
                if scatter.diag().iter().any(|&v| v < VARIANCE_FLOOR) {
                    collapsed += 1;
                }
                let ridge = (relative_ridge * trace / d as f64).max(MIN_RIDGE);
                for a in 0..d {
                    scatter[[a, a]] += ridge;
                }
                Covariance::full(scatter, ridge)
            }
        }
        .map_err(|_| Error::SingularCovariance(c + 1))?;
        covariances.push(cov);
    }
    Ok(MixtureParams {
        weights,
        means,
        covariances,
        floored_variances: floored,
        collapsed_components: collapsed,
    })
}

/// M-step: cluster weights, means and covariances (denominator `n_k`).
pub fn mstep(m: &MMatrix, labels: &ClusterAssignment, model: CovarianceModel) -> Result<MixtureParams> {
    mstep_indices(m.values(), &labels.indices(), labels.k(), model)
}

fn component_scores<'a>(row: ArrayView1<'a, f64>, params: &'a MixtureParams) -> impl Iterator<Item = f64> + 'a {
    let row = row.to_owned();
    (0..params.k())
        .map(move |c| params.weights[c].ln() + params.covariances[c].log_density(row.view(), params.means.row(c)))
}

/// E-step: each row goes to the component maximizing `log w_k + log φ_k`,
/// ties toward the smallest index. Returns 0-based component indices, not
/// canonicalized.
pub fn estep(m: &MMatrix, params: &MixtureParams) -> Vec<usize> {
    estep_rows(m.values(), params)
}

fn estep_rows(rows: &Array2<f64>, params: &MixtureParams) -> Vec<usize> {
    rows.rows()
        .into_iter()
        .map(|row| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (c, s) in component_scores(row, params).enumerate() {
                if s > best.1 {
                    best = (c, s);
                }
            }
            best.0
        })
        .collect()
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `Σ_i log Σ_k w_k φ(m_i; θ_k, Γ_k)`, evaluated with log-sum-exp.
pub fn mixture_loglik(rows: &Array2<f64>, params: &MixtureParams) -> f64 {
    rows.rows()
        .into_iter()
        .map(|row| log_sum_exp(component_scores(row, params)))
        .sum()
}

/// `Σ_i [log w_{δ_i} + log φ(m_i; θ_{δ_i}, Γ_{δ_i})]` for 0-based indices.
pub fn classification_loglik(rows: &Array2<f64>, idx: &[usize], params: &MixtureParams) -> f64 {
    rows.rows()
        .into_iter()
        .zip(idx)
        .map(|(row, &c)| params.weights[c].ln() + params.covariances[c].log_density(row, params.means.row(c)))
        .sum()
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub k: usize,
    pub labels: ClusterAssignment,
    /// Final parameters estimated on `M^δ̂`; absent for degenerate fits.
    pub params: Option<MixtureParams>,
    /// Quasi mixture log-likelihood of `M^δ̂`.
    pub loglik: f64,
    /// `-inf` when degenerate.
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A cluster emptied during the sweep, or a final component has a
    /// coordinate whose variance fell below the floor.
    pub degenerate: bool,
    /// Variance-floor hits summed over every M-step of the fit.
    pub floor_events: usize,
}

impl FitResult {
    fn degenerate(k: usize, idx: &[usize], iterations: usize, floor_events: usize) -> Result<Self> {
        Ok(Self {
            k,
            labels: ClusterAssignment::from_labels(idx)?,
            params: None,
            loglik: f64::NEG_INFINITY,
            bic: f64::NEG_INFINITY,
            iterations,
            converged: false,
            degenerate: true,
            floor_events,
        })
    }
}

/// Alternates M- and E-steps on the fixed `M` until the assignment stops
/// changing (or `max_iter` sweeps), then scores the result on `M^δ̂`.
pub fn cem_fit(
    g: &GramMatrix,
    m: &MMatrix,
    k: usize,
    init: &ClusterAssignment,
    max_iter: usize,
    model: CovarianceModel,
) -> Result<FitResult> {
    let n = m.n_objects();
    if init.len() != n {
        return Err(Error::LengthMismatch {
            left: init.len(),
            right: n,
        });
    }
    if init.k() != k {
        return Err(Error::InvalidConfig(format!(
            "initial assignment has {} clusters, expected {k}",
            init.k()
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }

    let rows = m.values();
    let mut idx = init.indices();
    let mut iterations = 0;
    let mut converged = false;
    let mut floor_events = 0;
    while iterations < max_iter {
        iterations += 1;
        let params = match mstep_indices(rows, &idx, k, model) {
            Ok(p) => p,
            Err(Error::EmptyCluster(_)) => return FitResult::degenerate(k, &idx, iterations, floor_events),
            Err(e) => return Err(e),
        };
        floor_events += params.floored_variances;
        let next = estep_rows(rows, &params);
        let mut occupied = vec![false; k];
        next.iter().for_each(|&c| occupied[c] = true);
        if occupied.contains(&false) {
            return FitResult::degenerate(k, &next, iterations, floor_events);
        }
        if next == idx {
            converged = true;
            break;
        }
        idx = next;
    }

    let labels = ClusterAssignment::from_labels(&idx)?;
    let m_delta = update_m_delta(g, &labels)?;
    let params = mstep(&m_delta, &labels, model)?;
    floor_events += params.floored_variances;
    // A two-member cluster always collapses here: both of its rows in M^δ̂
    // carry the same value in the two members' own columns.
    if params.collapsed_components > 0 {
        let mut fit = FitResult::degenerate(k, &idx, iterations, floor_events)?;
        fit.converged = converged;
        return Ok(fit);
    }
    let loglik = mixture_loglik(m_delta.values(), &params);
    let bic = bic(loglik, num_params(k, n, model), n);
    Ok(FitResult {
        k,
        labels,
        params: Some(params),
        loglik,
        bic,
        iterations,
        converged,
        degenerate: false,
        floor_events,
    })
}
