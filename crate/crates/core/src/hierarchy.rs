//! Agglomerative clustering of the rows of `M` with Ward's criterion, used to
//! seed the mixture fit for each candidate `K`.

use ndarray::Array2;
use serde::Serialize;

use crate::assignment::ClusterAssignment;
use crate::error::{Error, Result};

/// One agglomeration step. Cluster ids follow the usual convention: objects
/// are `0..N` and the cluster created by step `s` gets id `N + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Increase in total within-cluster sum of squares caused by the merge.
    pub cost: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    n: usize,
    steps: Vec<Merge>,
}

impl Dendrogram {
    pub fn steps(&self) -> &[Merge] {
        &self.steps
    }

    pub fn n_objects(&self) -> usize {
        self.n
    }
}

/// Ward agglomeration on the rows of `points` (Euclidean metric) using the
/// Lance-Williams update on sum-of-squares increments.
///
/// Equal-cost candidates are resolved toward the pair whose smallest member
/// indices are lexicographically smallest.
pub fn ward_dendrogram(points: &Array2<f64>) -> Dendrogram {
    let n = points.nrows();
    // dist[i][j]: SS increase from merging the clusters held in slots i and j.
    // A merged cluster lives in the slot of its smallest member.
    let mut dist = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist[[i, j]] = 0.5 * d2;
            dist[[j, i]] = 0.5 * d2;
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut id: Vec<usize> = (0..n).collect();
    let mut steps = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in ((i + 1)..n).filter(|&j| active[j]) {
                let d = dist[[i, j]];
                if best.is_none_or(|(_, _, c)| d < c) {
                    best = Some((i, j, d));
                }
            }
        }
        let (i, j, cost) = best.expect("at least two active clusters");
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let nk = size[k] as f64;
            let updated = ((ni + nk) * dist[[k, i]] + (nj + nk) * dist[[k, j]] - nk * cost) / (ni + nj + nk);
            dist[[k, i]] = updated;
            dist[[i, k]] = updated;
        }
        active[j] = false;
        size[i] += size[j];
        steps.push(Merge {
            a: id[i].min(id[j]),
            b: id[i].max(id[j]),
            cost: cost.max(0.0),
            size: size[i],
        });
        id[i] = n + step;
    }
    Dendrogram { n, steps }
}

/// Partition obtained by applying only the first `N - k` merges.
pub fn cut_tree(d: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = d.n;
    if k < 1 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // representative object for every cluster id
    let mut rep: Vec<usize> = (0..n).collect();
    for m in &d.steps[..n - k] {
        let ra = find(&mut parent, rep[m.a]);
        let rb = find(&mut parent, rep[m.b]);
        parent[rb] = ra;
        rep.push(ra);
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    ClusterAssignment::from_keys(&roots)
}
