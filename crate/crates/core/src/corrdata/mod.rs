//! Return panels, correlation matrices and rolling-window datasets.

mod io;
mod synthetic;

pub use io::{
    load_panel, load_returns_csv, read_matrix_csv, save_panel, write_matrix_csv, write_returns_csv, CsvSchema, InputKind, PanelManifest,
};
pub use synthetic::{generate_synthetic_market, Regime, SyntheticMarketConfig};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{eigh_symmetric, max_asymmetry};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-8;

/// Monthly log-returns, one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    asset_ids: Vec<String>,
    timestamps: Vec<String>,
    values: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(asset_ids: Vec<String>, timestamps: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if asset_ids.len() < 2 {
            return Err(Error::invalid("a return panel needs at least two assets"));
        }
        if values.ncols() != asset_ids.len() {
            return Err(Error::Shape(format!(
                "{} asset ids but {} value columns",
                asset_ids.len(),
                values.ncols()
            )));
        }
        if timestamps.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "{} timestamps but {} value rows",
                timestamps.len(),
                values.nrows()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &asset_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateAsset(id.clone()));
            }
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::MissingValue { row, col });
        }
        Ok(Self {
            asset_ids,
            timestamps,
            values,
        })
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn months(&self) -> usize {
        self.values.nrows()
    }

    pub fn assets(&self) -> usize {
        self.values.ncols()
    }
}

/// Symmetric, unit-diagonal, PSD matrix of asset correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    labels: Vec<String>,
    entries: DMatrix<f64>,
}

pub(crate) fn default_labels(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("a{i:02}")).collect()
}

impl CorrelationMatrix {
    /// Validates every correlation-matrix invariant.
    pub fn new(labels: Vec<String>, entries: DMatrix<f64>) -> Result<Self> {
        if labels.len() != entries.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for a {}x{} matrix",
                labels.len(),
                entries.nrows(),
                entries.ncols()
            )));
        }
        let s = Self { labels, entries };
        s.validate()?;
        Ok(s)
    }

    pub fn unlabeled(entries: DMatrix<f64>) -> Result<Self> {
        Self::new(default_labels(entries.nrows()), entries)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dim() {
            return Err(Error::Shape(format!("{} labels for dimension {}", labels.len(), self.dim())));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.entries;
        let m = a.nrows();
        if a.ncols() != m || m == 0 {
            return Err(Error::Shape(format!("correlation matrix must be square, got {}x{}", m, a.ncols())));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("correlation matrix".into()));
        }
        let asym = max_asymmetry(a);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidCorrelation(format!("asymmetry {asym:e}")));
        }
        if let Some(i) = (0..m).find(|&i| a[(i, i)] != 1.0) {
            return Err(Error::InvalidCorrelation(format!("diagonal entry {i} is {}", a[(i, i)])));
        }
        if let Some(x) = a.iter().find(|x| x.abs() > 1.0) {
            return Err(Error::InvalidCorrelation(format!("entry {x} outside [-1, 1]")));
        }
        let min = eigh_symmetric(a)?.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NotPsd(min));
        }
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Row-major flattening over all M² entries.
    pub fn flatten(&self) -> DVector<f64> {
        flatten_row_major(&self.entries)
    }

    /// Upper-triangle off-diagonal entries, row by row.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let m = self.dim();
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in (i + 1)..m {
                out.push(self.entries[(i, j)]);
            }
        }
        out
    }
}

pub fn flatten_row_major(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(a.nrows() * a.ncols(), a.transpose().iter().copied())
}

/// Inverse of [`flatten_row_major`] for a square matrix.
pub fn unflatten_square(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = (v.len() as f64).sqrt().round() as usize;
    if m * m != v.len() {
        return Err(Error::Shape(format!("{} entries do not form a square matrix", v.len())));
    }
    Ok(DMatrix::from_row_slice(m, m, v.as_slice()))
}

/// Chronological sequence of correlation matrices from rolling windows.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPanel {
    pub matrices: Vec<CorrelationMatrix>,
    pub window: usize,
    pub stride: usize,
    /// Timestamp of the last month in each window.
    pub dates: Vec<String>,
}

impl MatrixPanel {
    pub fn new(matrices: Vec<CorrelationMatrix>, window: usize, stride: usize, dates: Vec<String>) -> Result<Self> {
        if dates.len() != matrices.len() {
            return Err(Error::Shape(format!("{} dates for {} matrices", dates.len(), matrices.len())));
        }
        if let Some(first) = matrices.first() {
            if let Some((k, _)) = matrices.iter().enumerate().find(|(_, m)| m.labels() != first.labels()) {
                return Err(Error::Shape(format!("matrix {k} has different labels from matrix 0")));
            }
        }
        Ok(Self {
            matrices,
            window,
            stride,
            dates,
        })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.dim())
    }

    pub fn labels(&self) -> &[String] {
        self.matrices.first().map_or(&[], |m| m.labels())
    }

    pub fn flattened(&self) -> Vec<DVector<f64>> {
        self.matrices.iter().map(|m| m.flatten()).collect()
    }
}

/// Sample Pearson correlation of the columns of a `T' x M` window.
pub fn pearson_correlation(window: &DMatrix<f64>, labels: &[String]) -> Result<CorrelationMatrix> {
    let (t, m) = window.shape();
    if t < 3 {
        return Err(Error::invalid(format!("pearson correlation needs at least 3 rows, got {t}")));
    }
    if labels.len() != m {
        return Err(Error::Shape(format!("{} labels for {m} columns", labels.len())));
    }
    let mut centered = window.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        let mean = col.sum() / t as f64;
        let scale = col.amax();
        col.add_scalar_mut(-mean);
        let ss = col.norm_squared();
        let floor = t as f64 * f64::EPSILON * scale;
        if !ss.is_finite() || ss <= floor * floor {
            return Err(Error::ZeroVariance(labels[j].clone()));
        }
        col /= ss.sqrt();
    }
    let mut c = centered.tr_mul(&centered);
    for i in 0..m {
        c[(i, i)] = 1.0;
        for j in (i + 1)..m {
            let v = c[(i, j)].clamp(-1.0, 1.0);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    CorrelationMatrix::new(labels.to_vec(), c)
}

pub fn window_count(months: usize, window: usize, stride: usize) -> usize {
    if window == 0 || stride == 0 || window > months {
        0
    } else {
        (months - window) / stride + 1
    }
}

/// Correlation matrices over overlapping windows, oldest first.
pub fn rolling_correlations(panel: &ReturnPanel, window: usize, stride: usize) -> Result<MatrixPanel> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if window > panel.months() {
        return Err(Error::invalid(format!(
            "window {window} exceeds the {} available months",
            panel.months()
        )));
    }
    let count = window_count(panel.months(), window, stride);
    let mut matrices = Vec::with_capacity(count);
    let mut dates = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * stride;
        let rows = panel.values.rows(start, window).into_owned();
        matrices.push(pearson_correlation(&rows, &panel.asset_ids)?);
        dates.push(panel.timestamps[start + window - 1].clone());
    }
    MatrixPanel::new(matrices, window, stride, dates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn labels(m: usize) -> Vec<String> {
        default_labels(m)
    }

    fn normal_window(t: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, m, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Naive two-pass oracle: means, then covariance sums, then normalization.
    fn naive_pearson(x: &DMatrix<f64>) -> DMatrix<f64> {
        let (t, m) = x.shape();
        let means: Vec<f64> = (0..m).map(|j| (0..t).map(|i| x[(i, j)]).sum::<f64>() / t as f64).collect();
        let mut cov = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let mut s = 0.0;
                for i in 0..t {
                    s += (x[(i, a)] - means[a]) * (x[(i, b)] - means[b]);
                }
                cov[(a, b)] = s;
            }
        }
        DMatrix::from_fn(m, m, |a, b| cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt())
    }

    #[test]
    fn identical_and_negated_columns() {
        let mut x = normal_window(50, 3, 1);
        for i in 0..50 {
            x[(i, 1)] = x[(i, 0)];
            x[(i, 2)] = -x[(i, 0)];
        }
        let c = pearson_correlation(&x, &labels(3)).unwrap();
        assert!((c.get(0, 1) - 1.0).abs() < 1e-14);
        assert!((c.get(0, 2) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_two_pass_oracle() {
        let x = normal_window(100, 5, 2);
        let c = pearson_correlation(&x, &labels(5)).unwrap();
        let oracle = naive_pearson(&x);
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!((c.get(i, j) - oracle[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_variance_names_column() {
        let mut x = normal_window(20, 3, 3);
        for i in 0..20 {
            x[(i, 2)] = 0.37;
        }
        match pearson_correlation(&x, &labels(3)) {
            Err(Error::ZeroVariance(name)) => assert_eq!(name, "a02"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn affine_rescaling_invariance() {
        let x = normal_window(60, 4, 4);
        let mut y = x.clone();
        for i in 0..60 {
            y[(i, 1)] = 3.5 * x[(i, 1)] - 2.0;
            y[(i, 3)] = 0.01 * x[(i, 3)] + 100.0;
        }
        let a = pearson_correlation(&x, &labels(4)).unwrap();
        let b = pearson_correlation(&y, &labels(4)).unwrap();
        assert!((a.entries() - b.entries()).amax() < 1e-10);
    }

    #[test]
    fn iid_off_diagonals_are_small() {
        let x = normal_window(1000, 6, 5);
        let c = pearson_correlation(&x, &labels(6)).unwrap();
        let bound = 4.0 / (1000f64).sqrt();
        assert!(c.off_diagonal().iter().all(|r| r.abs() < bound));
    }

    fn panel(t: usize, m: usize) -> ReturnPanel {
        let ts = (0..t).map(|i| format!("t{i}")).collect();
        ReturnPanel::new(labels(m), ts, normal_window(t, m, 9)).unwrap()
    }

    #[test]
    fn rolling_window_counts() {
        assert_eq!(window_count(305, 100, 1), 206);
        assert_eq!(rolling_correlations(&panel(100, 3), 100, 1).unwrap().len(), 1);
        let p = rolling_correlations(&panel(110, 3), 100, 5).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.dates, vec!["t99", "t104", "t109"]);
        for m in &p.matrices {
            m.validate().unwrap();
        }
    }

    #[test]
    fn rolling_rejects_oversized_window() {
        assert!(rolling_correlations(&panel(50, 3), 60, 1).is_err());
        assert!(rolling_correlations(&panel(50, 3), 10, 0).is_err());
    }

    #[test]
    fn validation_catches_each_invariant() {
        let bad_diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.9]);
        assert!(CorrelationMatrix::unlabeled(bad_diag).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
        assert!(CorrelationMatrix::unlabeled(asym).is_err());
        let out_of_range = DMatrix::from_row_slice(2, 2, &[1.0, 1.1, 1.1, 1.0]);
        assert!(CorrelationMatrix::unlabeled(out_of_range).is_err());
        let non_psd = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        assert!(matches!(CorrelationMatrix::unlabeled(non_psd), Err(Error::NotPsd(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let v = flatten_row_major(&a);
        assert_eq!(v.as_slice(), &[1.0, 0.2, 0.2, 1.0]);
        assert_eq!(unflatten_square(&v).unwrap(), a);
    }
}
