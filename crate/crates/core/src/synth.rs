//! Synthetic mixtures with known ground truth, the closed-form concentration
//! bound for `M^δ`, and Monte-Carlo harnesses that check both against draws.
//!
//! All checks here run on raw draws: the expectations `Θ` are stated for the
//! generating model, and column standardization would change `μ` and `Σ`.

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::data::{gram_unchecked, FeatureMatrix};
use crate::error::{Error, Result};
use crate::transform::{theta_expectations, update_m_delta};

pub const MIN_CONCENTRATION_REPS: usize = 30;
pub const MIN_LEMMA1_REPS: usize = 100;
pub const RAW_DATA_NOTE: &str = "computed on raw draws from the generating model; no column standardization applied";

const MAX_LABEL_ATTEMPTS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureDistribution {
    /// Independent Gaussian features given the cluster.
    #[default]
    Gaussian,
}

/// Ground-truth mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    /// `K0 x P` component means.
    pub means: Array2<f64>,
    /// `K0 x P` per-feature variances.
    pub variances: Array2<f64>,
    #[serde(default)]
    pub distribution: FeatureDistribution,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, means: Array2<f64>, variances: Array2<f64>, seed: u64) -> Result<Self> {
        let spec = Self {
            weights,
            means,
            variances,
            distribution: FeatureDistribution::Gaussian,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k0 = self.weights.len();
        if k0 == 0 {
            return Err(Error::InvalidSpec("at least one component required".into()));
        }
        if self.means.nrows() != k0 || self.variances.nrows() != k0 {
            return Err(Error::DimensionMismatch(format!(
                "{k0} weights but {} mean rows and {} variance rows",
                self.means.nrows(),
                self.variances.nrows()
            )));
        }
        if self.means.ncols() == 0 || self.means.ncols() != self.variances.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "means have {} features, variances {}",
                self.means.ncols(),
                self.variances.ncols()
            )));
        }
        if self.weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::InvalidSpec("weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!("weights sum to {total}, not 1")));
        }
        if self.variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSpec("variances must be finite and nonnegative".into()));
        }
        if self.means.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("means must be finite".into()));
        }
        Ok(())
    }

    /// Two equally weighted components with means `+shift` and `-shift` on
    /// every feature and a common variance.
    pub fn symmetric_pair(p: usize, shift: f64, variance: f64, seed: u64) -> Self {
        let means = Array2::from_shape_fn((2, p), |(a, _)| if a == 0 { shift } else { -shift });
        Self::new(vec![0.5, 0.5], means, Array2::from_elem((2, p), variance), seed).expect("valid symmetric pair")
    }

    pub fn k0(&self) -> usize {
        self.weights.len()
    }

    pub fn n_features(&self) -> usize {
        self.means.ncols()
    }
}

/// Mixture described by per-component patterns that are tiled cyclically to
/// any requested feature count; this is how a P grid is expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTemplate {
    pub weights: Vec<f64>,
    pub mean_patterns: Vec<Vec<f64>>,
    pub variance_patterns: Vec<Vec<f64>>,
    pub seed: u64,
}

impl MixtureTemplate {
    pub fn instantiate(&self, p: usize) -> Result<MixtureSpec> {
        let k0 = self.weights.len();
        if self.mean_patterns.len() != k0 || self.variance_patterns.len() != k0 {
            return Err(Error::DimensionMismatch(format!(
                "{k0} weights but {} mean patterns and {} variance patterns",
                self.mean_patterns.len(),
                self.variance_patterns.len()
            )));
        }
        if p == 0 {
            return Err(Error::InvalidSpec("P must be positive".into()));
        }
        let tile = |patterns: &[Vec<f64>]| -> Result<Array2<f64>> {
            if patterns.iter().any(Vec::is_empty) {
                return Err(Error::InvalidSpec("empty pattern".into()));
            }
            Ok(Array2::from_shape_fn((k0, p), |(a, j)| {
                patterns[a][j % patterns[a].len()]
            }))
        };
        MixtureSpec::new(
            self.weights.clone(),
            tile(&self.mean_patterns)?,
            tile(&self.variance_patterns)?,
            self.seed,
        )
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Domain {
    Labels = 0,
    Features = 1,
    ConditionedLabels = 2,
}

/// Counter-style generator: one independent ChaCha stream per
/// `(seed, replicate, domain, stream)`, so results do not depend on the order
/// in which rows or replicates are produced.
fn stream_rng(seed: u64, replicate: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    key[16..24].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

fn draw_components(spec: &MixtureSpec, n: usize, replicate: u64, domain: Domain) -> Vec<usize> {
    let mut rng = stream_rng(spec.seed, replicate, domain, 0);
    let dist = WeightedIndex::new(&spec.weights).expect("validated weights");
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Features for the given component assignment; row `i` uses its own stream.
fn draw_features(spec: &MixtureSpec, components: &[usize], replicate: u64) -> Array2<f64> {
    let p = spec.n_features();
    let mut x = Array2::<f64>::zeros((components.len(), p));
    for (i, (mut row, &a)) in x.rows_mut().into_iter().zip(components).enumerate() {
        let mut rng = stream_rng(spec.seed, replicate, Domain::Features, i as u64);
        let mean = spec.means.row(a);
        let var = spec.variances.row(a);
        for ((v, &mu), &s2) in row.iter_mut().zip(mean.iter()).zip(var.iter()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = mu + s2.sqrt() * z;
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub data: FeatureMatrix,
    pub truth: ClusterAssignment,
    /// 0-based generating component of each object.
    pub components: Vec<usize>,
}

/// Draws cluster memberships from the weights, then independent Gaussian
/// features around each member's component mean.
pub fn gen_mixture(spec: &MixtureSpec, n: usize) -> Result<SyntheticSample> {
    gen_mixture_replicate(spec, n, 0)
}

pub fn gen_mixture_replicate(spec: &MixtureSpec, n: usize, replicate: u64) -> Result<SyntheticSample> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::InvalidShape(format!("need at least 2 objects, got {n}")));
    }
    let components = draw_components(spec, n, replicate, Domain::Labels);
    let data = FeatureMatrix::new(draw_features(spec, &components, replicate))?;
    Ok(SyntheticSample {
        data,
        truth: ClusterAssignment::from_labels(&components)?,
        components,
    })
}

/// Component draw used by the Monte-Carlo checks: fixed across replicates and
/// redrawn until no cluster is a singleton, since a singleton's diagonal slot
/// in `M^δ` has no same-cluster mean.
pub fn conditioned_components(spec: &MixtureSpec, n: usize) -> Result<Vec<usize>> {
    for attempt in 0..MAX_LABEL_ATTEMPTS {
        let c = draw_components(spec, n, attempt, Domain::ConditionedLabels);
        let mut sizes = vec![0usize; spec.k0()];
        c.iter().for_each(|&a| sizes[a] += 1);
        if sizes.iter().all(|&s| s != 1) {
            return Ok(c);
        }
    }
    Err(Error::InvalidSpec(format!(
        "could not draw {n} objects without singleton clusters"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// `sup_a ||Σ_a||_1^{1/2}`.
    pub tau_p: f64,
    /// `sup_a ||Υ_a||_1^{1/2}` where `Υ_a` is the covariance of squared deviations.
    pub kappa_p: f64,
    pub mu_sup: f64,
    pub sigma_sup: f64,
    pub n: usize,
    pub p: usize,
}

impl BoundInputs {
    /// Closed forms for independent Gaussian features: `||Σ||_1 = Σ_p σ_p`
    /// and, since `Var(y²) = 2σ⁴`, `||Υ||_1 = Σ_p 2σ_p²` with `σ_p` the variance.
    pub fn from_spec(spec: &MixtureSpec, n: usize) -> Self {
        let FeatureDistribution::Gaussian = spec.distribution;
        let sup = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
        let tau_p = sup(&mut spec.variances.rows().into_iter().map(|r| r.sum().sqrt()));
        let kappa_p = sup(&mut spec
            .variances
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|s| 2.0 * s * s).sum::<f64>().sqrt()));
        Self {
            tau_p,
            kappa_p,
            mu_sup: sup(&mut spec.means.iter().map(|m| m.abs())),
            sigma_sup: sup(&mut spec.variances.iter().map(|s| s.sqrt())),
            n,
            p: spec.n_features(),
        }
    }

    pub fn tau_over_p(&self) -> f64 {
        self.tau_p / self.p as f64
    }

    pub fn kappa_over_p(&self) -> f64 {
        self.kappa_p / self.p as f64
    }
}

/// Bound on `E||m^δ_i - θ_{δ_i}||²` for a single row.
pub fn row_bound_sq(b: &BoundInputs) -> f64 {
    let p = b.p as f64;
    let off = (b.n as f64 - 1.0) * b.tau_p.powi(2) * (2.0 * b.mu_sup + b.sigma_sup).powi(2);
    let diag = (b.kappa_p + 2.0 * b.tau_p * b.mu_sup).powi(2);
    (off + diag) / (p * p)
}

/// `Δ_P`, the root of the bound on `E||M^δ - Θ||²`.
pub fn lemma2_bound(b: &BoundInputs) -> f64 {
    let p = b.p as f64;
    let n = b.n as f64;
    let inner = n
        * ((n - 1.0) * b.tau_p.powi(2) * (2.0 * b.mu_sup + b.sigma_sup).powi(2)
            + (b.kappa_p + 2.0 * b.tau_p * b.mu_sup).powi(2));
    inner.sqrt() / p
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationPoint {
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    /// Monte-Carlo mean of `||M^δ - Θ||²`.
    pub mean_sq_error: f64,
    pub std_error: f64,
    /// `Δ_P²`.
    pub bound_sq: f64,
    pub per_row_mean_sq_error: Vec<f64>,
    pub per_row_bound_sq: f64,
    pub bound_inputs: BoundInputs,
    pub tau_over_p: f64,
    pub kappa_over_p: f64,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Monte-Carlo estimate of `E||M^δ - Θ||²` at the spec's `P`, conditioned
/// on one draw of the memberships.
pub fn empirical_concentration(spec: &MixtureSpec, n: usize, reps: usize) -> Result<ConcentrationPoint> {
    if reps < MIN_CONCENTRATION_REPS {
        return Err(Error::InvalidConfig(format!(
            "reps must be at least {MIN_CONCENTRATION_REPS}, got {reps}"
        )));
    }
    spec.validate()?;
    let components = conditioned_components(spec, n)?;
    let labels = ClusterAssignment::from_labels(&components)?;
    let theta = theta_expectations(spec, &components)?;

    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let x = FeatureMatrix::new(draw_features(spec, &components, r))?;
            let md = update_m_delta(&gram_unchecked(&x), &labels)?;
            Ok(md
                .values()
                .rows()
                .into_iter()
                .zip(theta.row_means.rows())
                .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum())
                .collect())
        })
        .collect::<Result<_>>()?;

    let totals: Vec<f64> = per_rep.iter().map(|rows| rows.iter().sum()).collect();
    let (mean_sq_error, std_error) = mean_and_se(&totals);
    let mut per_row = vec![0.0; n];
    for rows in &per_rep {
        per_row.iter_mut().zip(rows).for_each(|(acc, v)| *acc += v);
    }
    per_row.iter_mut().for_each(|v| *v /= reps as f64);

    let inputs = BoundInputs::from_spec(spec, n);
    let delta = lemma2_bound(&inputs);
    Ok(ConcentrationPoint {
        p: spec.n_features(),
        n,
        reps,
        mean_sq_error,
        std_error,
        bound_sq: delta * delta,
        per_row_mean_sq_error: per_row,
        per_row_bound_sq: row_bound_sq(&inputs),
        bound_inputs: inputs,
        tau_over_p: inputs.tau_over_p(),
        kappa_over_p: inputs.kappa_over_p(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub points: Vec<ConcentrationPoint>,
    /// Least-squares slope of `ln(MSE)` on `ln(P)`; absent when fewer than two
    /// grid points have a positive MSE.
    pub log_log_slope: Option<f64>,
    pub note: &'static str,
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn concentration_sweep(
    template: &MixtureTemplate,
    n: usize,
    reps: usize,
    p_grid: &[usize],
) -> Result<ConcentrationReport> {
    let points = p_grid
        .iter()
        .map(|&p| empirical_concentration(&template.instantiate(p)?, n, reps))
        .collect::<Result<Vec<_>>>()?;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|pt| pt.mean_sq_error > 0.0)
        .map(|pt| ((pt.p as f64).ln(), pt.mean_sq_error.ln()))
        .unzip();
    let distinct_p = {
        let mut v = lx.clone();
        v.dedup();
        v.len()
    };
    Ok(ConcentrationReport {
        log_log_slope: (distinct_p >= 2).then(|| ols_slope(&lx, &ly)),
        points,
        note: RAW_DATA_NOTE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    /// Largest `|empirical mean - Θ| / MC standard error` over all entries of `M^δ`.
    pub max_std_deviation: f64,
    /// Row and column of that entry.
    pub worst_entry: (usize, usize),
    pub n_entries: usize,
    /// Same statistic for `g_ij` against `θ_{δ_i, δ_j}` over pairs in different clusters.
    pub cross_gram_max_std_deviation: f64,
    pub n_cross_pairs: usize,
    pub empirical_mean: Array2<f64>,
    pub theta: Array2<f64>,
    pub note: String,
}

/// Welford accumulator over matrices of a fixed shape.
struct RunningMoments {
    count: f64,
    mean: Array2<f64>,
    m2: Array2<f64>,
}

impl RunningMoments {
    fn new(shape: (usize, usize)) -> Self {
        Self {
            count: 0.0,
            mean: Array2::zeros(shape),
            m2: Array2::zeros(shape),
        }
    }

    fn push(&mut self, x: &Array2<f64>) {
        self.count += 1.0;
        let delta = x - &self.mean;
        self.mean.scaled_add(1.0 / self.count, &delta);
        let delta2 = x - &self.mean;
        self.m2 += &(&delta * &delta2);
    }

    fn std_error(&self) -> Array2<f64> {
        let c = self.count;
        self.m2.mapv(|m| (m / (c - 1.0) / c).sqrt())
    }
}

fn standardized_deviation(empirical: f64, expected: f64, se: f64) -> f64 {
    let diff = (empirical - expected).abs();
    if diff <= 1e-12 * expected.abs().max(1.0) {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY
    }
}

/// Compares the Monte-Carlo mean of every `M^δ` entry (true memberships)
/// with its expectation `Θ`, in units of Monte-Carlo standard error.
pub fn lemma1_check(spec: &MixtureSpec, n: usize, reps: usize) -> Result<Lemma1Report> {
    if reps < MIN_LEMMA1_REPS {
        return Err(Error::InvalidConfig(format!(
            "reps must be at least {MIN_LEMMA1_REPS}, got {reps}"
        )));
    }
    spec.validate()?;
    let components = conditioned_components(spec, n)?;
    let labels = ClusterAssignment::from_labels(&components)?;
    let theta = theta_expectations(spec, &components)?;

    let draws: Vec<(Array2<f64>, Array2<f64>)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let x = FeatureMatrix::new(draw_features(spec, &components, r))?;
            let g = gram_unchecked(&x);
            let md = update_m_delta(&g, &labels)?;
            Ok((md.values().clone(), g.values().clone()))
        })
        .collect::<Result<_>>()?;

    let mut m_moments = RunningMoments::new((n, n + 1));
    let mut g_moments = RunningMoments::new((n, n));
    for (md, g) in &draws {
        m_moments.push(md);
        g_moments.push(g);
    }

    let m_se = m_moments.std_error();
    let mut max_dev = 0.0f64;
    let mut worst = (0, 0);
    for ((i, j), &emp) in m_moments.mean.indexed_iter() {
        let d = standardized_deviation(emp, theta.row_means[[i, j]], m_se[[i, j]]);
        if d > max_dev {
            max_dev = d;
            worst = (i, j);
        }
    }

    let g_se = g_moments.std_error();
    let mut cross_max = 0.0f64;
    let mut n_cross = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if components[i] != components[j] {
                n_cross += 1;
                let expected = theta.pairwise[[components[i], components[j]]];
                cross_max = cross_max.max(standardized_deviation(g_moments.mean[[i, j]], expected, g_se[[i, j]]));
            }
        }
    }

    let n_entries = n * (n + 1);
    Ok(Lemma1Report {
        n,
        p: spec.n_features(),
        reps,
        max_std_deviation: max_dev,
        worst_entry: worst,
        n_entries,
        cross_gram_max_std_deviation: cross_max,
        n_cross_pairs: n_cross,
        empirical_mean: m_moments.mean,
        theta: theta.row_means,
        note: format!(
            "{RAW_DATA_NOTE}; maximum taken over {n_entries} correlated entries, so a 4-sigma gate \
             carries multiple-comparison slack"
        ),
    })
}

/// Per-row mean of a matrix, used in reports.
pub fn row_means(a: &Array2<f64>) -> Array1<f64> {
    a.mean_axis(ndarray::Axis(1)).expect("non-empty matrix")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_rows_equal_means() {
        let spec = MixtureSpec::new(
            vec![0.3, 0.7],
            ndarray::array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]],
            Array2::zeros((2, 3)),
            11,
        )
        .unwrap();
        let s = gen_mixture(&spec, 8).unwrap();
        for (row, &a) in s.data.values().rows().into_iter().zip(&s.components) {
            assert_eq!(row, spec.means.row(a));
        }
    }

    #[test]
    fn single_component_labels() {
        let spec = MixtureSpec::new(vec![1.0], Array2::zeros((1, 4)), Array2::ones((1, 4)), 3).unwrap();
        let s = gen_mixture(&spec, 12).unwrap();
        assert_eq!(s.truth.labels(), &[1; 12]);
    }

    #[test]
    fn balanced_weights_fraction() {
        let spec = MixtureSpec::symmetric_pair(1, 1.0, 1.0, 99);
        let s = gen_mixture(&spec, 10_000).unwrap();
        let frac = s.components.iter().filter(|&&c| c == 0).count() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn same_seed_same_draws() {
        let spec = MixtureSpec::symmetric_pair(50, 1.0, 2.0, 5);
        let a = gen_mixture(&spec, 6).unwrap();
        let b = gen_mixture(&spec, 6).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.components, b.components);
        let other = MixtureSpec { seed: 6, ..spec };
        assert_ne!(gen_mixture(&other, 6).unwrap().data, a.data);
    }

    #[test]
    fn invalid_specs() {
        assert!(MixtureSpec::new(vec![0.6, 0.6], Array2::zeros((2, 2)), Array2::ones((2, 2)), 0).is_err());
        assert!(MixtureSpec::new(vec![1.0], Array2::zeros((1, 2)), -Array2::ones((1, 2)), 0).is_err());
        assert!(MixtureSpec::new(vec![1.0], Array2::zeros((1, 2)), Array2::ones((1, 3)), 0).is_err());
    }

    #[test]
    fn template_tiles_patterns() {
        let t = MixtureTemplate {
            weights: vec![0.5, 0.5],
            mean_patterns: vec![vec![1.0, 0.0], vec![2.0]],
            variance_patterns: vec![vec![1.0], vec![0.5, 0.25, 0.0]],
            seed: 1,
        };
        let s = t.instantiate(5).unwrap();
        assert_eq!(s.means.row(0).to_vec(), vec![1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(s.variances.row(1).to_vec(), vec![0.5, 0.25, 0.0, 0.5, 0.25]);
    }

    #[test]
    fn unit_variance_bound_inputs() {
        let spec = MixtureSpec::symmetric_pair(1000, 1.0, 1.0, 0);
        let b = BoundInputs::from_spec(&spec, 10);
        assert_eq!(b.tau_p, 1000f64.sqrt());
        assert_eq!(b.kappa_p, 2000f64.sqrt());
        assert_eq!(b.mu_sup, 1.0);
        assert_eq!(b.sigma_sup, 1.0);
    }

    #[test]
    fn zero_noise_bound() {
        let b = BoundInputs {
            tau_p: 0.0,
            kappa_p: 0.0,
            mu_sup: 3.0,
            sigma_sup: 0.0,
            n: 2,
            p: 10,
        };
        assert_eq!(lemma2_bound(&b), 0.0);
    }

    #[test]
    fn bound_regression_value() {
        // (1/1000) * sqrt(10 * (9*1000*9 + (sqrt(2000) + 2*sqrt(1000))^2))
        let b = BoundInputs {
            tau_p: 1000f64.sqrt(),
            kappa_p: 2000f64.sqrt(),
            mu_sup: 1.0,
            sigma_sup: 1.0,
            n: 10,
            p: 1000,
        };
        assert!((lemma2_bound(&b) - 0.962_584_304_097_528_8).abs() < 1e-15);
        assert!((10.0 * row_bound_sq(&b) - lemma2_bound(&b).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn bound_scales_with_root_p() {
        let mk = |p: usize| BoundInputs {
            tau_p: (p as f64).sqrt(),
            kappa_p: (2.0 * p as f64).sqrt(),
            mu_sup: 0.7,
            sigma_sup: 1.3,
            n: 12,
            p,
        };
        let ratio = lemma2_bound(&mk(2000)) / lemma2_bound(&mk(1000));
        assert!((ratio - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x: Vec<f64> = [100.0f64, 1000.0, 10000.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - v).collect();
        assert!((ols_slope(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn reps_preconditions() {
        let spec = MixtureSpec::symmetric_pair(10, 1.0, 1.0, 0);
        assert!(matches!(
            empirical_concentration(&spec, 6, 29),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(lemma1_check(&spec, 6, 99), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn noiseless_concentration_is_exact() {
        // integer means and P a power of two keep every sum exact
        let spec = MixtureSpec::new(
            vec![0.5, 0.5],
            Array2::from_shape_fn((2, 16), |(a, j)| if (a + j) % 3 == 0 { 2.0 } else { -1.0 }),
            Array2::zeros((2, 16)),
            4,
        )
        .unwrap();
        let pt = empirical_concentration(&spec, 6, 30).unwrap();
        assert_eq!(pt.mean_sq_error, 0.0);
        assert!(pt.bound_sq >= 0.0);
        let l1 = lemma1_check(&spec, 6, 100).unwrap();
        assert_eq!(l1.max_std_deviation, 0.0);
        assert_eq!(l1.empirical_mean, l1.theta);
    }
}
