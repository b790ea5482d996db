//! Latent-space interpretation: eigen features of the historical matrices,
//! their relation to the encodings, subgroup partitions, and the sampling grid.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoders::{Autoencoder, LatentEncoding};
use crate::corrdata::{CorrelationMatrix, MatrixPanel};
use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, eigh_symmetric, repair_to_correlation};
use crate::rng;
use crate::stats::pearson;

/// Chronological latent means, one point per historical matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSeries {
    pub timestamps: Vec<String>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
}

impl LatentSeries {
    pub fn new(timestamps: Vec<String>, mu1: Vec<f64>, mu2: Vec<f64>) -> Result<Self> {
        if timestamps.len() != mu1.len() || mu1.len() != mu2.len() {
            return Err(Error::Shape("latent series components differ in length".into()));
        }
        Ok(Self { timestamps, mu1, mu2 })
    }

    pub fn from_encodings(timestamps: Vec<String>, enc: &[LatentEncoding]) -> Result<Self> {
        Self::new(
            timestamps,
            enc.iter().map(|e| e.mu[0]).collect(),
            enc.iter().map(|e| e.mu[1]).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.mu1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu1.is_empty()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.mu1.iter().zip(&self.mu2).map(|(a, b)| [*a, *b]).collect()
    }

    pub fn last(&self) -> Option<[f64; 2]> {
        Some([*self.mu1.last()?, *self.mu2.last()?])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,mu1,mu2\n");
        for ((d, a), b) in self.timestamps.iter().zip(&self.mu1).zip(&self.mu2) {
            out.push_str(&format!("{d},{a},{b}\n"));
        }
        out
    }

    /// Read the `date`, `mu1` and `mu2` columns of a CSV; other columns are ignored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = read_columns(text, &["date", "mu1", "mu2"])?;
        let mut s = Self::new(Vec::new(), Vec::new(), Vec::new())?;
        for (row, r) in rows.into_iter().enumerate() {
            s.timestamps.push(r[0].clone());
            s.mu1.push(parse_cell(&r[1], row, 1)?);
            s.mu2.push(parse_cell(&r[2], row, 2)?);
        }
        Ok(s)
    }
}

fn parse_cell(raw: &str, row: usize, col: usize) -> Result<f64> {
    raw.parse().map_err(|_| Error::NonNumeric {
        row,
        col,
        value: raw.to_string(),
    })
}

/// Pick named columns out of a headed CSV, in the order requested.
fn read_columns(text: &str, names: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::invalid(format!("CSV header: {e}")))?.clone();
    let idx = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h.eq_ignore_ascii_case(n))
                .ok_or_else(|| Error::invalid(format!("CSV lacks a `{n}` column")))
        })
        .collect::<Result<Vec<_>>>()?;
    reader
        .records()
        .enumerate()
        .map(|(row, rec)| {
            let rec = rec.map_err(|e| Error::invalid(format!("CSV row {row}: {e}")))?;
            idx.iter()
                .enumerate()
                .map(|(col, &i)| rec.get(i).map(str::to_string).ok_or(Error::MissingValue { row, col }))
                .collect()
        })
        .collect()
}

/// Top two eigenvalues and the cosine similarity of the top two eigenvectors
/// to their across-time mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenFeatureSeries {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
}

/// Cosine similarity of each vector to the mean of all of them.
///
/// Signs are canonicalized (largest-magnitude component positive) before
/// averaging, so the result does not depend on the solver's sign choice.
pub fn cosine_to_mean(vectors: &[DVector<f64>]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or_else(|| Error::invalid("no vectors"))?;
    let canon: Vec<DVector<f64>> = vectors
        .iter()
        .map(|v| {
            let mut v = v.clone();
            canonical_sign(v.as_mut_slice());
            v
        })
        .collect();
    let mean = canon.iter().fold(DVector::zeros(first.len()), |a, v| a + v) / canon.len() as f64;
    let mean_norm = mean.norm();
    if mean_norm == 0.0 {
        return Err(Error::NonFinite("mean eigenvector has zero norm".into()));
    }
    canon
        .iter()
        .map(|v| {
            let n = v.norm();
            if n == 0.0 {
                return Err(Error::NonFinite("zero eigenvector".into()));
            }
            Ok((mean.dot(v) / (mean_norm * n)).clamp(-1.0, 1.0))
        })
        .collect()
}

pub fn eigen_features(panel: &MatrixPanel) -> Result<EigenFeatureSeries> {
    if panel.is_empty() || panel.dim() < 2 {
        return Err(Error::invalid("eigen features need a nonempty panel of at least 2x2 matrices"));
    }
    let eigs = panel
        .matrices
        .par_iter()
        .map(|m| eigh_symmetric(m.entries()))
        .collect::<Result<Vec<_>>>()?;
    let v1: Vec<DVector<f64>> = eigs.iter().map(|e| e.eigenvectors.column(0).into_owned()).collect();
    let v2: Vec<DVector<f64>> = eigs.iter().map(|e| e.eigenvectors.column(1).into_owned()).collect();
    Ok(EigenFeatureSeries {
        lambda1: eigs.iter().map(|e| e.eigenvalues[0]).collect(),
        lambda2: eigs.iter().map(|e| e.eigenvalues[1]).collect(),
        alpha1: cosine_to_mean(&v1)?,
        alpha2: cosine_to_mean(&v2)?,
    })
}

/// Pearson correlations between latent coordinates and eigen features.
/// Index `k` of each pair refers to `mu_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEigenCorrelation {
    pub mu_lambda1: [f64; 2],
    pub mu_lambda2: [f64; 2],
    pub mu_alpha1: [f64; 2],
    pub mu_alpha2: [f64; 2],
    /// `max_k |corr(mu_k, lambda1)|`; latent axis signs are not identifiable.
    pub max_abs_lambda1: f64,
}

pub fn latent_eigen_correlation(latent: &LatentSeries, feats: &EigenFeatureSeries) -> Result<LatentEigenCorrelation> {
    if latent.len() != feats.lambda1.len() {
        return Err(Error::Shape(format!(
            "{} latent points vs {} eigen features",
            latent.len(),
            feats.lambda1.len()
        )));
    }
    let pair = |s: &[f64]| -> Result<[f64; 2]> { Ok([pearson(&latent.mu1, s)?, pearson(&latent.mu2, s)?]) };
    let mu_lambda1 = pair(&feats.lambda1)?;
    Ok(LatentEigenCorrelation {
        mu_lambda1,
        mu_lambda2: pair(&feats.lambda2)?,
        mu_alpha1: pair(&feats.alpha1)?,
        mu_alpha2: pair(&feats.alpha2)?,
        max_abs_lambda1: mu_lambda1[0].abs().max(mu_lambda1[1].abs()),
    })
}

fn bounds(points: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Cell index along one axis; a point on an inner boundary goes to the lower cell.
fn cell(v: f64, lo: f64, hi: f64, cells: usize) -> usize {
    let width = (hi - lo) / cells as f64;
    if width <= 0.0 {
        return 0;
    }
    let k = ((v - lo) / width).ceil() as isize - 1;
    k.clamp(0, cells as isize - 1) as usize
}

/// Label each point with a cell of a `rows x cols` partition of the bounding box.
/// Columns split `mu1`, rows split `mu2`; label = `row * cols + col`.
pub fn partition_latent(points: &[[f64; 2]], rows: usize, cols: usize) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::invalid("no latent points to partition"));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("partition needs at least one row and column"));
    }
    let (lo, hi) = bounds(points);
    Ok(points
        .iter()
        .map(|p| cell(p[1], lo[1], hi[1], rows) * cols + cell(p[0], lo[0], hi[0], cols))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGrid {
    pub points: Vec<[f64; 2]>,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl LatentGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,z1,z2\n");
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", p[0], p[1]));
        }
        out
    }

    /// Points from a `z1,z2` CSV; the bounds become the points' bounding box.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = read_columns(text, &["z1", "z2"])?;
        let points = rows
            .iter()
            .enumerate()
            .map(|(row, r)| Ok([parse_cell(&r[0], row, 0)?, parse_cell(&r[1], row, 1)?]))
            .collect::<Result<Vec<_>>>()?;
        if points.is_empty() {
            return Err(Error::invalid("grid file has no points"));
        }
        let (lower, upper) = bounds(&points);
        Ok(Self { points, lower, upper })
    }
}

/// Jittered lattice over the bounding box of `points`, inflated on every side
/// by `margin` times the box diagonal.
///
/// The box is cut into `ceil(sqrt(count))²` cells with one seeded uniform
/// point per cell. Surplus cells are dropped from the interior so the outer
/// ring, and with it the hull around the historical points, stays intact.
pub fn build_grid(points: &[[f64; 2]], count: usize, margin: f64, seed: u64) -> Result<LatentGrid> {
    if count == 0 {
        return Err(Error::invalid("grid count must be at least 1"));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::invalid("grid margin must be non-negative"));
    }
    if points.is_empty() || points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("grid needs finite latent points"));
    }
    let (lo, hi) = bounds(points);
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    if w <= 0.0 || h <= 0.0 {
        return Err(Error::invalid("latent points span a degenerate bounding box"));
    }
    let pad = margin * w.hypot(h);
    let lower = [lo[0] - pad, lo[1] - pad];
    let upper = [hi[0] + pad, hi[1] + pad];

    let side = (count as f64).sqrt().ceil() as usize;
    let mut keep = vec![true; side * side];
    let surplus = side * side - count;
    let mut rng = rng::substream(seed, "latent-grid");
    if surplus > 0 {
        let border = |k: usize| {
            let (r, c) = (k / side, k % side);
            r == 0 || c == 0 || r + 1 == side || c + 1 == side
        };
        let mut interior: Vec<usize> = (0..side * side).filter(|&k| !border(k)).collect();
        let mut outer: Vec<usize> = (0..side * side).filter(|&k| border(k)).collect();
        interior.shuffle(&mut rng);
        outer.shuffle(&mut rng);
        for k in interior.into_iter().chain(outer).take(surplus) {
            keep[k] = false;
        }
    }
    let cw = (upper[0] - lower[0]) / side as f64;
    let ch = (upper[1] - lower[1]) / side as f64;
    let mut out = Vec::with_capacity(count);
    for (k, &kept) in keep.iter().enumerate() {
        // draw for every cell so dropping cells does not shift the stream
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        if kept {
            let (r, c) = (k / side, k % side);
            out.push([lower[0] + (c as f64 + u) * cw, lower[1] + (r as f64 + v) * ch]);
        }
    }
    Ok(LatentGrid { points: out, lower, upper })
}

/// Decode every grid point and repair it into a valid correlation matrix.
pub fn generate_synthetic_panel<A: Autoencoder + Sync>(model: &A, grid: &LatentGrid, labels: &[String]) -> Result<MatrixPanel> {
    let matrices = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(index, z)| {
            let wrap = |e: Error| Error::GridPoint {
                index,
                source: Box::new(e),
            };
            let raw = model.decode_point(z).map_err(wrap)?;
            repair_to_correlation(&raw)
                .and_then(|m| m.with_labels(labels.to_vec()))
                .map_err(wrap)
        })
        .collect::<Result<Vec<CorrelationMatrix>>>()?;
    let dates = (0..grid.len()).map(|k| format!("g{k:04}")).collect();
    MatrixPanel::new(matrices, 0, 0, dates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn one_factor(loadings: &[f64]) -> CorrelationMatrix {
        let m = loadings.len();
        let a = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { loadings[i] * loadings[j] });
        CorrelationMatrix::unlabeled(a).unwrap()
    }

    fn panel(ms: Vec<CorrelationMatrix>) -> MatrixPanel {
        let dates = (0..ms.len()).map(|k| k.to_string()).collect();
        MatrixPanel::new(ms, 1, 1, dates).unwrap()
    }

    #[test]
    fn constant_panel_is_self_similar() {
        let m = one_factor(&[0.5, 0.6, 0.7, 0.8]);
        let f = eigen_features(&panel(vec![m; 5])).unwrap();
        for t in 0..5 {
            assert!((f.alpha1[t] - 1.0).abs() < 1e-12);
            assert!((f.alpha2[t] - 1.0).abs() < 1e-12);
            assert!(f.lambda1[t] >= f.lambda2[t]);
        }
    }

    #[test]
    fn vector_orthogonal_to_mean_has_zero_similarity() {
        // v·(2 e1 + v) = 0 requires e1·v = -1/2
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![-0.5, 0.75f64.sqrt(), 0.0]);
        let a = cosine_to_mean(&[e1.clone(), e1, v]).unwrap();
        assert!(a[2].abs() < 1e-15);
    }

    #[test]
    fn similarity_ignores_input_signs() {
        let vs: Vec<DVector<f64>> = (0..6)
            .map(|t| DVector::from_fn(4, |i, _| ((t * 3 + i) as f64 * 0.7).sin() + 0.3))
            .collect();
        let flipped: Vec<DVector<f64>> = vs
            .iter()
            .enumerate()
            .map(|(t, v)| if t % 2 == 0 { -v } else { v.clone() })
            .collect();
        assert_eq!(cosine_to_mean(&vs).unwrap(), cosine_to_mean(&flipped).unwrap());
    }

    #[test]
    fn rotated_regime_dips_alpha1() {
        // long regime with rising loadings, a short one with falling loadings in the middle
        let rising: Vec<f64> = (0..8).map(|i| 0.3 + 0.08 * i as f64).collect();
        let falling: Vec<f64> = rising.iter().rev().copied().collect();
        let ms: Vec<CorrelationMatrix> = (0..30)
            .map(|t| one_factor(if (12..16).contains(&t) { &falling } else { &rising }))
            .collect();
        let f = eigen_features(&panel(ms)).unwrap();
        let inside = (12..16).map(|t| f.alpha1[t]).fold(f64::INFINITY, f64::min);
        let outside = (0..30)
            .filter(|t| !(12..16).contains(t))
            .map(|t| f.alpha1[t])
            .fold(f64::INFINITY, f64::min);
        assert!(inside < outside);
    }

    #[test]
    fn csv_round_trips() {
        let s = LatentSeries::new(vec!["a".into(), "b".into()], vec![0.1, -2.5e-7], vec![3.0, 0.30000000000000004]).unwrap();
        assert_eq!(LatentSeries::from_csv(&s.to_csv()).unwrap(), s);
        let g = build_grid(&[[0.0, 0.0], [1.0, 2.0]], 7, 0.1, 3).unwrap();
        let back = LatentGrid::from_csv(&g.to_csv()).unwrap();
        assert_eq!(back.points, g.points);
        assert!(LatentSeries::from_csv("date,mu1\na,1\n").is_err());
        assert!(LatentSeries::from_csv("date,mu1,mu2\na,1,x\n").is_err());
    }

    #[test]
    fn correlation_report_magnitudes() {
        let latent = LatentSeries::new(
            (0..5).map(|t| t.to_string()).collect(),
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.1, -0.3, 0.2, 0.0, 0.4],
        )
        .unwrap();
        let feats = EigenFeatureSeries {
            lambda1: vec![10.0, 8.0, 6.0, 4.0, 2.0],
            lambda2: vec![1.0, 1.1, 1.0, 1.2, 1.3],
            alpha1: vec![0.9, 0.95, 0.99, 0.97, 0.98],
            alpha2: vec![0.5, 0.6, 0.7, 0.6, 0.5],
        };
        let r = latent_eigen_correlation(&latent, &feats).unwrap();
        assert!((r.mu_lambda1[0] + 1.0).abs() < 1e-15);
        assert!((r.max_abs_lambda1 - 1.0).abs() < 1e-15);
        let flat = EigenFeatureSeries {
            lambda1: vec![3.0; 5],
            ..feats
        };
        assert!(latent_eigen_correlation(&latent, &flat).is_err());
    }

    #[test]
    fn partition_labels() {
        let pts = [[0.0, 0.0], [3.0, 3.0], [1.0, 0.5], [2.0, 2.9], [1.5, 1.5]];
        let labels = partition_latent(&pts, 3, 3).unwrap();
        assert_eq!(labels.len(), 5);
        assert!(labels.iter().all(|&l| l < 9));
        assert_eq!(labels[0], 0);
        assert_eq!(labels[1], 8);
        // x = 1.0 sits on the boundary between columns 0 and 1 -> column 0
        assert_eq!(labels[2], 0);
        assert_eq!(partition_latent(&pts, 1, 1).unwrap(), vec![0; 5]);
        assert!(partition_latent(&[], 3, 3).is_err());
    }

    #[test]
    fn grid_count_and_containment() {
        let unit = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let g = build_grid(&unit, 4, 0.0, 1).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.points.iter().all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])));
        let g = build_grid(&unit, 132, 0.2, 1).unwrap();
        assert_eq!(g.len(), 132);
        assert_eq!(build_grid(&unit, 132, 0.2, 1).unwrap(), g);
        assert!(build_grid(&[[1.0, 1.0], [1.0, 2.0]], 10, 0.2, 1).is_err());
        assert!(build_grid(&unit, 0, 0.2, 1).is_err());
    }
}
