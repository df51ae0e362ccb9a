//! BIC scoring and the end-to-end driver that sweeps `K = 1..=kmax`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::data::{gram, preprocess_dataset, standardize_columns, FeatureMatrix};
use crate::error::{Error, Result};
use crate::hierarchy::{cut_tree, ward_dendrogram};
use crate::mixture::{cem_fit, CovarianceModel, FitResult, DEFAULT_MAX_ITER};
use crate::transform::build_m;

pub const DEFAULT_KMAX: usize = 20;

/// Number of free parameters of a `k`-component mixture on rows of length `n + 1`.
pub fn num_params(k: usize, n: usize, model: CovarianceModel) -> usize {
    let d = n + 1;
    let cov = match model {
        CovarianceModel::Diagonal => d,
        CovarianceModel::FullRidge { .. } => d * (d + 1) / 2,
    };
    (k - 1) + k * d + k * cov
}

/// `2 * loglik - nu * ln(n)`; larger is better.
pub fn bic(loglik: f64, nu: usize, n: usize) -> f64 {
    2.0 * loglik - nu as f64 * (n as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    /// Input must already be column-standardized.
    None,
    /// Column standardization only.
    Standardize,
    /// Log (when all entries are positive), median-center, sd-scale, then standardize.
    #[default]
    Paper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub kmax: usize,
    pub max_iter: usize,
    pub cov_model: CovarianceModel,
    pub preprocess: Preprocess,
    /// Worker threads for the per-K sweep; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            kmax: DEFAULT_KMAX,
            max_iter: DEFAULT_MAX_ITER,
            cov_model: CovarianceModel::Diagonal,
            preprocess: Preprocess::Paper,
            threads: None,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kmax < 1 {
            return Err(Error::InvalidConfig("kmax must be at least 1".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if let CovarianceModel::FullRidge { relative_ridge } = self.cov_model {
            if !relative_ridge.is_finite() || relative_ridge < 0.0 {
                return Err(Error::InvalidConfig("ridge must be a finite value >= 0".into()));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BicEntry {
    pub k: usize,
    /// `None` for degenerate fits.
    pub bic: Option<f64>,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub preprocess: f64,
    pub gram: f64,
    pub transform: f64,
    pub dendrogram: f64,
    /// Indexed by `K - 1`.
    pub per_k_fit: Vec<f64>,
    pub fit_total: f64,
    pub selection: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ClusterOutput {
    pub k_hat: usize,
    pub labels: ClusterAssignment,
    pub bic_trace: Vec<BicEntry>,
    pub per_fit: Vec<FitResult>,
    pub timings: Timings,
    /// `kmax` after clamping to `N`.
    pub kmax: usize,
    pub n_objects: usize,
    /// Features left after dropping constant columns.
    pub n_features: usize,
    pub dropped_columns: Vec<usize>,
    pub log_applied: bool,
    pub warnings: Vec<String>,
}

struct Prepared {
    matrix: FeatureMatrix,
    dropped_columns: Vec<usize>,
    log_applied: bool,
}

fn prepare(x: &FeatureMatrix, mode: Preprocess) -> Result<Prepared> {
    match mode {
        Preprocess::None if x.is_standardized() => Ok(Prepared {
            matrix: x.clone(),
            dropped_columns: vec![],
            log_applied: false,
        }),
        Preprocess::None => Ok(Prepared {
            matrix: FeatureMatrix::standardized(x.values().clone())?,
            dropped_columns: vec![],
            log_applied: false,
        }),
        Preprocess::Standardize => {
            let s = standardize_columns(x)?;
            Ok(Prepared {
                matrix: s.matrix,
                dropped_columns: s.dropped_columns,
                log_applied: false,
            })
        }
        Preprocess::Paper => {
            let pre = preprocess_dataset(x)?;
            // pre already dropped every constant column, so this drops none
            let s = standardize_columns(&pre.matrix)?;
            Ok(Prepared {
                matrix: s.matrix,
                dropped_columns: pre.dropped_columns,
                log_applied: pre.log_applied,
            })
        }
    }
}

/// Selects the largest finite BIC; equal values go to the smaller `K`.
pub fn select_k(trace: &[BicEntry]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    let mut sorted: Vec<&BicEntry> = trace.iter().collect();
    sorted.sort_by_key(|e| e.k);
    for e in sorted {
        if let Some(b) = e.bic.filter(|b| b.is_finite()) {
            if best.is_none_or(|(_, cur)| b > cur) {
                best = Some((e.k, b));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Runs the full pipeline: preprocessing, `G`, `M`, a Ward-initialized
/// classification-EM fit for every `K` up to `kmax`, and BIC selection.
pub fn gmcluster(x: &FeatureMatrix, config: &ClusterConfig) -> Result<ClusterOutput> {
    config.validate()?;
    let start = Instant::now();
    let mut timings = Timings::default();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let prepared = prepare(x, config.preprocess)?;
    timings.preprocess = t.elapsed().as_secs_f64();
    if !prepared.dropped_columns.is_empty() {
        warnings.push(format!("dropped {} constant column(s)", prepared.dropped_columns.len()));
    }

    let n = prepared.matrix.n_objects();
    let mut kmax = config.kmax;
    if kmax > n {
        let msg = format!("kmax {kmax} exceeds the number of objects; clamped to {n}");
        log::warn!("{msg}");
        warnings.push(msg);
        kmax = n;
    }

    let t = Instant::now();
    let g = gram(&prepared.matrix)?;
    timings.gram = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let m = build_m(&g);
    timings.transform = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let dendrogram = ward_dendrogram(m.values());
    timings.dendrogram = t.elapsed().as_secs_f64();

    let fit_one = |k: usize| -> Result<(FitResult, f64)> {
        let t = Instant::now();
        let init = if k == 1 {
            ClusterAssignment::single(n)
        } else {
            cut_tree(&dendrogram, k)?
        };
        let fit = cem_fit(&g, &m, k, &init, config.max_iter, config.cov_model)?;
        Ok((fit, t.elapsed().as_secs_f64()))
    };
    let t = Instant::now();
    let sweep = || -> Result<Vec<(FitResult, f64)>> { (1..=kmax).into_par_iter().map(fit_one).collect() };
    let fits = match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(sweep)?,
        None => sweep()?,
    };
    timings.fit_total = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (per_fit, per_k): (Vec<FitResult>, Vec<f64>) = fits.into_iter().unzip();
    timings.per_k_fit = per_k;
    let bic_trace: Vec<BicEntry> = per_fit
        .iter()
        .map(|f| BicEntry {
            k: f.k,
            bic: (!f.degenerate).then_some(f.bic),
            loglik: (!f.degenerate).then_some(f.loglik),
            iterations: f.iterations,
            converged: f.converged,
            degenerate: f.degenerate,
        })
        .collect();
    let k_hat = select_k(&bic_trace).ok_or(Error::AllFitsDegenerate)?;
    let labels = per_fit[k_hat - 1].labels.clone();
    timings.selection = t.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();

    Ok(ClusterOutput {
        k_hat,
        labels,
        bic_trace,
        per_fit,
        timings,
        kmax,
        n_objects: n,
        n_features: prepared.matrix.n_features(),
        dropped_columns: prepared.dropped_columns,
        log_applied: prepared.log_applied,
        warnings,
    })
}
