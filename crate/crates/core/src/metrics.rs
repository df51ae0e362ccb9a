//! Partition agreement: contingency tables, mutual information and
//! Adjusted Mutual Information with the exact expected MI under the
//! fixed-marginals permutation model. Natural logarithms throughout.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::assignment::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmiNormalization {
    /// Arithmetic mean of the two entropies.
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `R x C`; rows follow the clusters of the first labeling.
    pub counts: Array2<usize>,
    pub n: usize,
}

impl ContingencyTable {
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        self.counts.columns().into_iter().map(|c| c.sum()).collect()
    }
}

pub fn contingency(u: &ClusterAssignment, v: &ClusterAssignment) -> Result<ContingencyTable> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut counts = Array2::<usize>::zeros((u.k(), v.k()));
    for (&a, &b) in u.labels().iter().zip(v.labels()) {
        counts[[a - 1, b - 1]] += 1;
    }
    Ok(ContingencyTable { counts, n: u.len() })
}

fn entropy_of(sizes: &[usize], n: usize) -> f64 {
    let n = n as f64;
    sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn entropy(labels: &ClusterAssignment) -> f64 {
    entropy_of(&labels.cluster_sizes(), labels.len())
}

pub fn mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.n as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let mut mi = 0.0;
    for ((i, j), &nij) in table.counts.indexed_iter() {
        if nij > 0 {
            let nij = nij as f64;
            mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
        }
    }
    mi.max(0.0)
}

/// `ln(k!)` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Exact expected mutual information of two random partitions with the
/// table's marginals (hypergeometric cell distribution).
pub fn expected_mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.n;
    let nf = n as f64;
    let lf = log_factorials(n);
    let rows = table.row_sums();
    let cols = table.col_sums();
    let mut emi = 0.0;
    for &a in &rows {
        for &b in &cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let log_p = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                emi += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

pub fn ami(u: &ClusterAssignment, v: &ClusterAssignment, norm: AmiNormalization) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let n = u.len();
    if n < 2 {
        return Err(Error::InvalidShape("AMI needs at least two objects".into()));
    }
    // One fixed argument order makes the result exactly symmetric.
    let (u, v) = if u.labels() <= v.labels() { (u, v) } else { (v, u) };
    if u == v {
        return Ok(1.0);
    }
    let table = contingency(u, v)?;
    let mi = mutual_information(&table);
    let emi = expected_mutual_information(&table);
    let (hu, hv) = (entropy(u), entropy(v));
    let scale = match norm {
        AmiNormalization::Mean => 0.5 * (hu + hv),
        AmiNormalization::Max => hu.max(hv),
    };
    let denom = scale - emi;
    // identical partitions were handled above
    if denom.abs() < f64::EPSILON {
        return Ok(0.0);
    }
    Ok(((mi - emi) / denom).min(1.0))
}
