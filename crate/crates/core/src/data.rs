//! Feature matrix handling: validation, column standardization, the
//! log/median/sd preprocessing used on expression data, and the normalized
//! left Gram matrix `G = X Xᵀ / P`.

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Columns whose sample standard deviation falls below this are dropped.
pub const CONSTANT_COLUMN_SD: f64 = 1e-12;

const STANDARDIZED_MEAN_TOL: f64 = 1e-10;
const STANDARDIZED_SD_TOL: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-12;

/// An `N x P` matrix of feature measurements, one row per object.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    standardized: bool,
}

impl FeatureMatrix {
    /// Wraps raw measurements. Requires `N >= 2`, `P >= 1` and finite entries.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, p) = values.dim();
        if n < 2 {
            return Err(Error::InvalidShape(format!("need at least 2 objects, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidShape("need at least 1 feature".into()));
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row, col });
        }
        Ok(Self {
            values,
            standardized: false,
        })
    }

    /// Wraps a matrix whose columns are already standardized, checking that
    /// every column has mean within 1e-10 of 0 and sample sd within 1e-8 of 1.
    pub fn standardized(values: Array2<f64>) -> Result<Self> {
        let mut x = Self::new(values)?;
        if !columns_are_standardized(&x.values) {
            return Err(Error::NotStandardized);
        }
        x.standardized = true;
        Ok(x)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_objects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

fn columns_are_standardized(values: &Array2<f64>) -> bool {
    values.columns().into_iter().all(|col| {
        let (mean, sd) = mean_and_sample_sd(col);
        mean.abs() < STANDARDIZED_MEAN_TOL && (sd - 1.0).abs() < STANDARDIZED_SD_TOL
    })
}

fn mean_and_sample_sd(col: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn median(col: ArrayView1<'_, f64>) -> f64 {
    let mut v = col.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

/// Result of [`standardize_columns`].
#[derive(Debug, Clone)]
pub struct Standardized {
    pub matrix: FeatureMatrix,
    /// Indices (into the input) of zero-variance columns that were removed.
    pub dropped_columns: Vec<usize>,
}

/// Result of [`preprocess_dataset`].
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub matrix: FeatureMatrix,
    pub dropped_columns: Vec<usize>,
    /// Whether the elementwise natural log was applied.
    pub log_applied: bool,
}

#[derive(Debug, Clone, Copy)]
enum Centering {
    Mean,
    Median,
}

/// Centers and scales every column; columns with sample sd below
/// [`CONSTANT_COLUMN_SD`] are dropped.
fn center_and_scale(values: &Array2<f64>, centering: Centering) -> Result<(Array2<f64>, Vec<usize>)> {
    let n = values.nrows();
    let mut kept = Vec::with_capacity(values.ncols());
    let mut dropped = Vec::new();
    for (j, col) in values.columns().into_iter().enumerate() {
        let (mean, sd) = mean_and_sample_sd(col);
        if sd < CONSTANT_COLUMN_SD || !sd.is_finite() {
            dropped.push(j);
            continue;
        }
        let center = match centering {
            Centering::Mean => mean,
            Centering::Median => median(col),
        };
        kept.push((j, center, sd));
    }
    if kept.is_empty() {
        return Err(Error::AllColumnsConstant);
    }
    let mut out = Array2::<f64>::zeros((n, kept.len()));
    for (dst, &(j, center, sd)) in kept.iter().enumerate() {
        let src = values.column(j);
        out.column_mut(dst)
            .iter_mut()
            .zip(src.iter())
            .for_each(|(o, &v)| *o = (v - center) / sd);
    }
    if !dropped.is_empty() {
        log::warn!("dropped {} constant column(s)", dropped.len());
    }
    Ok((out, dropped))
}

/// Standardizes every column to mean 0 and sample sd 1 (denominator `N - 1`).
pub fn standardize_columns(x: &FeatureMatrix) -> Result<Standardized> {
    let (values, dropped_columns) = center_and_scale(&x.values, Centering::Mean)?;
    Ok(Standardized {
        matrix: FeatureMatrix {
            values,
            standardized: true,
        },
        dropped_columns,
    })
}

/// Expression-data preprocessing: natural log when every entry is strictly
/// positive, then per column subtract the median and divide by the sample sd.
pub fn preprocess_dataset(x: &FeatureMatrix) -> Result<Preprocessed> {
    let log_applied = x.values.iter().all(|&v| v > 0.0);
    let (values, dropped_columns) = if log_applied {
        center_and_scale(&x.values.mapv(f64::ln), Centering::Median)?
    } else {
        center_and_scale(&x.values, Centering::Median)?
    };
    Ok(Preprocessed {
        matrix: FeatureMatrix {
            values,
            standardized: false,
        },
        dropped_columns,
        log_applied,
    })
}

/// The `N x N` matrix of average pairwise feature products.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Array2<f64>,
}

impl GramMatrix {
    /// Wraps an arbitrary square matrix, rejecting asymmetry beyond 1e-12
    /// (relative to the entry magnitude) and storing `(A + Aᵀ)/2`.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, c) = values.dim();
        if n != c {
            return Err(Error::InvalidShape(format!("Gram matrix must be square, got {n}x{c}")));
        }
        if n < 2 {
            return Err(Error::InvalidShape(format!("need at least 2 objects, got {n}")));
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row, col });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (values[[i, j]], values[[j, i]]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidShape(format!(
                        "Gram matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            values: symmetrize(values),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_objects(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }
}

fn symmetrize(a: Array2<f64>) -> Array2<f64> {
    let t = a.t().to_owned();
    (a + t) * 0.5
}

/// `G = X Xᵀ / P` on a standardized feature matrix.
pub fn gram(x: &FeatureMatrix) -> Result<GramMatrix> {
    if !x.standardized {
        return Err(Error::NotStandardized);
    }
    Ok(gram_unchecked(x))
}

/// Same product without the standardization requirement. The concentration
/// harness needs it because its closed-form expectations are stated for raw
/// draws.
pub fn gram_unchecked(x: &FeatureMatrix) -> GramMatrix {
    let p = x.n_features() as f64;
    let g = x.values.dot(&x.values.t()) / p;
    GramMatrix { values: symmetrize(g) }
}

/// Column sums of `G`; all near zero when `X` was column-centered.
pub fn gram_column_sums(g: &GramMatrix) -> ndarray::Array1<f64> {
    g.values.sum_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardizes_simple_column() {
        let x = FeatureMatrix::new(array![[1.0], [2.0], [3.0]]).unwrap();
        let s = standardize_columns(&x).unwrap();
        assert!(s.matrix.is_standardized());
        assert!(s.dropped_columns.is_empty());
        let col: Vec<f64> = s.matrix.values().column(0).to_vec();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_column_is_dropped() {
        let x = FeatureMatrix::new(array![[5.0, 0.0], [5.0, 1.0], [5.0, 2.0]]).unwrap();
        let s = standardize_columns(&x).unwrap();
        assert_eq!(s.dropped_columns, vec![0]);
        assert_eq!(s.matrix.n_features(), 1);
        assert_eq!(s.matrix.values().column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn all_constant_is_an_error() {
        let x = FeatureMatrix::new(array![[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(standardize_columns(&x), Err(Error::AllColumnsConstant)));
        assert!(matches!(preprocess_dataset(&x), Err(Error::AllColumnsConstant)));
    }

    #[test]
    fn rejects_non_finite_and_tiny_shapes() {
        assert!(matches!(
            FeatureMatrix::new(array![[1.0, f64::NAN], [0.0, 1.0]]),
            Err(Error::NonFiniteInput { row: 0, col: 1 })
        ));
        assert!(matches!(
            FeatureMatrix::new(array![[1.0, f64::INFINITY], [0.0, 1.0]]),
            Err(Error::NonFiniteInput { .. })
        ));
        assert!(matches!(
            FeatureMatrix::new(array![[1.0, 2.0]]),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            FeatureMatrix::new(Array2::zeros((3, 0))),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn standardize_is_idempotent() {
        let x = FeatureMatrix::new(array![[0.3, 10.0], [1.7, -2.0], [2.2, 4.5], [9.1, 0.0]]).unwrap();
        let once = standardize_columns(&x).unwrap().matrix;
        let twice = standardize_columns(&once).unwrap().matrix;
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn preprocess_logs_positive_data() {
        let e = std::f64::consts::E;
        let x = FeatureMatrix::new(array![[1.0, 3.0], [e, 1.0], [e * e, 2.0]]).unwrap();
        let pre = preprocess_dataset(&x).unwrap();
        assert!(pre.log_applied);
        let col: Vec<f64> = pre.matrix.values().column(0).to_vec();
        for (got, want) in col.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(!pre.matrix.is_standardized());
    }

    #[test]
    fn preprocess_skips_log_with_non_positive_entry() {
        let x = FeatureMatrix::new(array![[1.0, 0.0], [2.0, 1.0], [4.0, 5.0]]).unwrap();
        let pre = preprocess_dataset(&x).unwrap();
        assert!(!pre.log_applied);
        // column 0: median 2, sd of (1,2,4) = sqrt(7/3)
        let sd = (7.0f64 / 3.0).sqrt();
        let col = pre.matrix.values().column(0).to_vec();
        assert!((col[0] + 1.0 / sd).abs() < 1e-12);
        assert!(col[1].abs() < 1e-12);
        assert!((col[2] - 2.0 / sd).abs() < 1e-12);
    }

    #[test]
    fn preprocess_drops_flat_column() {
        let x = FeatureMatrix::new(array![[4.0, 1.0], [4.0, 2.0], [4.0, 6.0]]).unwrap();
        let pre = preprocess_dataset(&x).unwrap();
        assert_eq!(pre.dropped_columns, vec![0]);
        assert_eq!(pre.matrix.n_features(), 1);
    }

    #[test]
    fn gram_hand_example() {
        let x = FeatureMatrix::standardized(array![[-1.0, -1.0], [0.0, 0.0], [1.0, 1.0]]).unwrap();
        let g = gram(&x).unwrap();
        assert_eq!(g.values(), &array![[1.0, 0.0, -1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 1.0]]);
    }

    #[test]
    fn gram_requires_standardized_input() {
        let x = FeatureMatrix::new(array![[1.0], [2.0], [3.0]]).unwrap();
        assert!(matches!(gram(&x), Err(Error::NotStandardized)));
        assert!(matches!(
            FeatureMatrix::standardized(array![[1.0], [2.0], [3.0]]),
            Err(Error::NotStandardized)
        ));
    }

    #[test]
    fn duplicated_rows_share_gram_entries() {
        let raw = FeatureMatrix::new(array![
            [1.0, 4.0, -2.0],
            [0.5, 1.0, 3.0],
            [1.0, 4.0, -2.0],
            [2.0, -1.0, 0.0]
        ])
        .unwrap();
        let g = gram(&standardize_columns(&raw).unwrap().matrix).unwrap();
        assert_eq!(g.get(0, 0), g.get(2, 2));
        assert_eq!(g.get(0, 0), g.get(0, 2));
    }

    #[test]
    fn gram_new_checks_symmetry() {
        assert!(GramMatrix::new(array![[1.0, 2.0], [2.5, 1.0]]).is_err());
        assert!(GramMatrix::new(array![[1.0, 2.0, 3.0], [2.0, 1.0, 0.0]]).is_err());
        assert!(GramMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).is_ok());
    }
}
