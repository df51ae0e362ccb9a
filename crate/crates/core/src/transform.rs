//! The `N x (N+1)` transforms of the Gram matrix.
//!
//! `M` moves the diagonal of `G` into an extra trailing column and fills each
//! vacated diagonal slot with the mean of the other entries in that column.
//! `M^δ` restricts that mean to objects sharing the slot owner's cluster, which
//! gives every member of a cluster the same expected row (`Θ`).

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::assignment::ClusterAssignment;
use crate::data::GramMatrix;
use crate::error::{Error, Result};
use crate::synth::MixtureSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum MVariant {
    Initial,
    ClusterAware(ClusterAssignment),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMatrix {
    values: Array2<f64>,
    variant: MVariant,
}

impl MMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn variant(&self) -> &MVariant {
        &self.variant
    }

    pub fn n_objects(&self) -> usize {
        self.values.nrows()
    }

    /// Row length, `N + 1`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Wraps arbitrary row vectors as an initial-variant matrix; used to feed
    /// hand-built points into the clustering stages.
    pub fn from_rows(values: Array2<f64>) -> Result<Self> {
        if values.nrows() < 1 || values.ncols() < 1 {
            return Err(Error::InvalidShape("empty M matrix".into()));
        }
        Ok(Self {
            values,
            variant: MVariant::Initial,
        })
    }
}

/// Mean of `g[j, i]` over `j != i` for which `keep(j)` holds, or `None` when
/// no such `j` exists. Summation runs in increasing `j`.
fn column_mean_excluding(g: &GramMatrix, i: usize, keep: impl Fn(usize) -> bool) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in 0..g.n_objects() {
        if j != i && keep(j) {
            sum += g.get(j, i);
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

fn assemble(g: &GramMatrix, slot: impl Fn(usize) -> f64) -> Array2<f64> {
    let n = g.n_objects();
    let mut m = Array2::<f64>::zeros((n, n + 1));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = if i == j { slot(i) } else { g.get(i, j) };
        }
        m[[i, n]] = g.get(i, i);
    }
    m
}

/// Builds the initial-variant `M` from `G`.
pub fn build_m(g: &GramMatrix) -> MMatrix {
    let values = assemble(g, |i| {
        column_mean_excluding(g, i, |_| true).expect("Gram matrix has at least two objects")
    });
    MMatrix {
        values,
        variant: MVariant::Initial,
    }
}

/// Builds the cluster-aware `M^δ`. A singleton's slot falls back to the
/// initial-variant mean over all other objects.
pub fn update_m_delta(g: &GramMatrix, labels: &ClusterAssignment) -> Result<MMatrix> {
    if labels.len() != g.n_objects() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: g.n_objects(),
        });
    }
    let l = labels.labels();
    let values = assemble(g, |i| {
        column_mean_excluding(g, i, |j| l[j] == l[i])
            .or_else(|| column_mean_excluding(g, i, |_| true))
            .expect("Gram matrix has at least two objects")
    });
    Ok(MMatrix {
        values,
        variant: MVariant::ClusterAware(labels.clone()),
    })
}

/// Expected value of `M^δ` under a mixture model, given which mixture
/// component generated each object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaMatrix {
    /// `N x (N+1)`; row `i` is the transformed cluster mean of object `i`'s component.
    pub row_means: Array2<f64>,
    /// `K0 x K0` table of `μ_aᵀ μ_b / P`.
    pub pairwise: Array2<f64>,
    /// `μ_aᵀ μ_a / P + tr(Σ_a) / P` for each component.
    pub diagonal: Array1<f64>,
    /// 0-based component index of each object.
    pub components: Vec<usize>,
}

impl ThetaMatrix {
    /// The transformed mean vector of component `a` laid out against the
    /// stored object assignment.
    pub fn cluster_vector(&self, a: usize) -> Array1<f64> {
        let n = self.components.len();
        let mut v = Array1::zeros(n + 1);
        for (j, &c) in self.components.iter().enumerate() {
            v[j] = self.pairwise[[a, c]];
        }
        v[n] = self.diagonal[a];
        v
    }

    pub fn k0(&self) -> usize {
        self.diagonal.len()
    }
}

pub fn theta_expectations(spec: &MixtureSpec, components: &[usize]) -> Result<ThetaMatrix> {
    let k0 = spec.k0();
    let p = spec.n_features();
    if spec.variances.dim() != (k0, p) {
        return Err(Error::DimensionMismatch(format!(
            "means are {k0}x{p} but variances are {:?}",
            spec.variances.dim()
        )));
    }
    if let Some(&bad) = components.iter().find(|&&c| c >= k0) {
        return Err(Error::InvalidSpec(format!(
            "component {bad} out of range for k0 = {k0}"
        )));
    }
    let pf = p as f64;
    let pairwise = spec.means.dot(&spec.means.t()) / pf;
    let diagonal = Array1::from_shape_fn(k0, |a| pairwise[[a, a]] + spec.variances.row(a).sum() / pf);

    let n = components.len();
    let mut row_means = Array2::zeros((n, n + 1));
    for (i, &a) in components.iter().enumerate() {
        for (j, &b) in components.iter().enumerate() {
            row_means[[i, j]] = pairwise[[a, b]];
        }
        row_means[[i, n]] = diagonal[a];
    }
    Ok(ThetaMatrix {
        row_means,
        pairwise,
        diagonal,
        components: components.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Separability {
    pub min_gap: f64,
    /// 1-based component indices of the closest pair.
    pub closest_pair: (usize, usize),
}

/// Smallest Euclidean distance between transformed cluster mean vectors.
/// Reported only; no threshold is applied.
pub fn separability_diagnostic(theta: &ThetaMatrix) -> Result<Separability> {
    let k0 = theta.k0();
    if k0 < 2 {
        return Err(Error::SingleCluster);
    }
    let vectors: Vec<_> = (0..k0).map(|a| theta.cluster_vector(a)).collect();
    let mut best = Separability {
        min_gap: f64::INFINITY,
        closest_pair: (1, 2),
    };
    for a in 0..k0 {
        for b in (a + 1)..k0 {
            let gap = (&vectors[a] - &vectors[b]).mapv(|d| d * d).sum().sqrt();
            if gap < best.min_gap {
                best = Separability {
                    min_gap: gap,
                    closest_pair: (a + 1, b + 1),
                };
            }
        }
    }
    Ok(best)
}

/// Squared Frobenius distance between two equally shaped matrices.
pub fn squared_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_g() -> GramMatrix {
        GramMatrix::new(array![[2.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 4.0]]).unwrap()
    }

    #[test]
    fn build_m_three_by_three() {
        let m = build_m(&small_g());
        assert_eq!(
            m.values(),
            &array![[0.5, 1.0, 0.0, 2.0], [1.0, 0.0, -1.0, 3.0], [0.0, -1.0, -0.5, 4.0]]
        );
        assert_eq!(m.variant(), &MVariant::Initial);
    }

    #[test]
    fn m_delta_with_singleton_fallback() {
        let labels = ClusterAssignment::from_labels(&[1, 1, 2]).unwrap();
        let m = update_m_delta(&small_g(), &labels).unwrap();
        let diag: Vec<f64> = (0..3).map(|i| m.values()[[i, i]]).collect();
        assert_eq!(diag, vec![1.0, 1.0, -0.5]);
        assert_eq!(m.values().column(3).to_vec(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn m_delta_single_cluster_matches_initial_bitwise() {
        let g = small_g();
        let m0 = build_m(&g);
        let m1 = update_m_delta(&g, &ClusterAssignment::single(3)).unwrap();
        assert_eq!(m0.values(), m1.values());
    }

    #[test]
    fn m_delta_rejects_wrong_length() {
        let labels = ClusterAssignment::from_labels(&[1, 2]).unwrap();
        assert!(matches!(
            update_m_delta(&small_g(), &labels),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn spec(means: Array2<f64>, variances: Array2<f64>) -> MixtureSpec {
        let k = means.nrows();
        MixtureSpec::new(vec![1.0 / k as f64; k], means, variances, 0).unwrap()
    }

    #[test]
    fn theta_opposite_means() {
        let p = 6;
        let means = Array2::from_shape_fn((2, p), |(a, _)| if a == 0 { 1.0 } else { -1.0 });
        let t = theta_expectations(&spec(means, Array2::ones((2, p))), &[0, 1]).unwrap();
        assert_eq!(t.pairwise[[0, 1]], -1.0);
        assert_eq!(t.pairwise[[1, 0]], -1.0);
        assert_eq!(t.diagonal.to_vec(), vec![2.0, 2.0]);
    }

    #[test]
    fn theta_zero_means() {
        let means = Array2::zeros((2, 5));
        let vars = Array2::from_elem((2, 5), 0.25);
        let t = theta_expectations(&spec(means, vars), &[0, 1, 1]).unwrap();
        assert_eq!(t.diagonal.to_vec(), vec![0.25, 0.25]);
        assert!(t.pairwise.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn theta_interleaved_means() {
        let means = array![[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]];
        let t = theta_expectations(&spec(means, Array2::ones((2, 4))), &[0, 1]).unwrap();
        assert_eq!(t.pairwise[[0, 1]], 0.0);
        assert_eq!(t.diagonal[0], 1.5);
    }

    #[test]
    fn theta_rows_follow_components() {
        let means = array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]];
        let t = theta_expectations(&spec(means, Array2::ones((3, 2))), &[2, 0, 2, 1]).unwrap();
        assert_eq!(t.row_means.row(0), t.row_means.row(2));
        assert_eq!(t.row_means[[0, 4]], t.diagonal[2]);
        assert_eq!(t.row_means[[1, 2]], t.pairwise[[0, 2]]);
        assert_eq!(t.row_means[[0, 0]], t.pairwise[[2, 2]]);
    }

    #[test]
    fn separability_identical_clusters() {
        let means = Array2::from_elem((2, 4), 0.5);
        let t = theta_expectations(&spec(means, Array2::ones((2, 4))), &[0, 1]).unwrap();
        assert_eq!(separability_diagnostic(&t).unwrap().min_gap, 0.0);
    }

    #[test]
    fn separability_opposite_clusters_two_objects() {
        // rows (θ_aa, θ_ab, θ_a) = (1, -1, 2) and (θ_ba, θ_bb, θ_b) = (-1, 1, 2)
        let p = 3;
        let means = Array2::from_shape_fn((2, p), |(a, _)| if a == 0 { 1.0 } else { -1.0 });
        let t = theta_expectations(&spec(means, Array2::ones((2, p))), &[0, 1]).unwrap();
        assert_eq!(t.cluster_vector(0).to_vec(), vec![1.0, -1.0, 2.0]);
        assert_eq!(t.cluster_vector(1).to_vec(), vec![-1.0, 1.0, 2.0]);
        let s = separability_diagnostic(&t).unwrap();
        assert!((s.min_gap - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.closest_pair, (1, 2));
    }

    #[test]
    fn separability_grows_with_mean_scale() {
        let base = array![[1.0, 0.0, 2.0, -1.0], [0.0, 1.0, -1.0, 1.0], [1.0, 1.0, 1.0, 1.0]];
        let comps = [0, 1, 2, 0, 1];
        let vars = Array2::ones((3, 4));
        let g1 =
            separability_diagnostic(&theta_expectations(&spec(base.clone(), vars.clone()), &comps).unwrap()).unwrap();
        let t2 = theta_expectations(&spec(&base * 2.0, vars.clone()), &comps).unwrap();
        let t1 = theta_expectations(&spec(base, vars), &comps).unwrap();
        assert_eq!(t2.pairwise, &t1.pairwise * 4.0);
        let g2 = separability_diagnostic(&t2).unwrap();
        assert!(g1.min_gap > 0.0);
        assert!(g2.min_gap > g1.min_gap);
    }

    #[test]
    fn separability_needs_two_clusters() {
        let t = theta_expectations(&spec(Array2::ones((1, 3)), Array2::ones((1, 3))), &[0, 0]).unwrap();
        assert!(matches!(separability_diagnostic(&t), Err(Error::SingleCluster)));
    }
}
