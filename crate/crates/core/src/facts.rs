//! Stylized facts of financial correlation matrices: positive pairwise
//! correlations, a spectrum against Marchenko–Pastur, the Perron property,
//! hierarchical structure and the minimum spanning tree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrdata::{CorrelationMatrix, MatrixPanel};
use crate::error::{Error, Result};
use crate::linalg::eigh_symmetric;
use crate::stats::{self, Histogram};

const PAIRWISE_BINS: usize = 40;
const SPECTRUM_BINS: usize = 30;
const PERRON_GAP: f64 = 1e-8;

/// Correlation distance `sqrt(2 (1 - rho))`, in `[0, 2]`.
pub fn correlation_distance(rho: f64) -> f64 {
    (2.0 * (1.0 - rho)).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseDistribution {
    pub histogram: Histogram,
    pub mean: f64,
    pub median: f64,
    pub skewness: f64,
    pub fraction_positive: f64,
    pub count: usize,
}

/// Pooled distribution of the upper-triangle entries across the panel.
pub fn pairwise_distribution(panel: &MatrixPanel) -> Result<PairwiseDistribution> {
    if panel.is_empty() {
        return Err(Error::invalid("pairwise distribution of an empty panel"));
    }
    let values: Vec<f64> = panel.matrices.iter().flat_map(|m| m.off_diagonal()).collect();
    if values.is_empty() {
        return Err(Error::invalid("matrices have no off-diagonal entries"));
    }
    Ok(PairwiseDistribution {
        histogram: Histogram::new(&values, -1.0, 1.0, PAIRWISE_BINS),
        mean: stats::mean(&values),
        median: stats::median(&values),
        skewness: stats::skewness(&values),
        fraction_positive: values.iter().filter(|&&v| v > 0.0).count() as f64 / values.len() as f64,
        count: values.len(),
    })
}

/// Marchenko–Pastur bulk edges `(1 ± 1/sqrt(q))²` for unit variance.
pub fn marchenko_pastur_edges(q: f64) -> Result<(f64, f64)> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::invalid(format!("Marchenko-Pastur ratio q = T/M must exceed 1, got {q}")));
    }
    let r = 1.0 / q.sqrt();
    Ok(((1.0 - r).powi(2), (1.0 + r).powi(2)))
}

/// Marchenko–Pastur density at `lambda`; zero outside the bulk.
pub fn marchenko_pastur_density(lambda: f64, q: f64) -> f64 {
    let Ok((lo, hi)) = marchenko_pastur_edges(q) else {
        return 0.0;
    };
    if lambda <= lo || lambda >= hi {
        return 0.0;
    }
    q / (2.0 * std::f64::consts::PI) * ((hi - lambda) * (lambda - lo)).sqrt() / lambda
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub q: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub lambda1: f64,
    pub above_edge: usize,
    pub eigenvalues: Vec<f64>,
}

impl SpectrumReport {
    fn bulk(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().copied().filter(|&l| l <= self.lambda_plus)
    }
}

/// Bulk eigenvalue histogram with the Marchenko–Pastur density at bin centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkHistogram {
    pub histogram: Histogram,
    pub mp_density: Vec<f64>,
}

impl BulkHistogram {
    pub fn new(bulk: &[f64], q: f64) -> Result<Self> {
        let (_, hi) = marchenko_pastur_edges(q)?;
        let histogram = Histogram::new(bulk, 0.0, hi, SPECTRUM_BINS);
        let mp_density = histogram.centers().iter().map(|&c| marchenko_pastur_density(c, q)).collect();
        Ok(Self { histogram, mp_density })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper,mass,mp_density\n");
        for ((w, m), d) in self.histogram.edges.windows(2).zip(&self.histogram.masses).zip(&self.mp_density) {
            out.push_str(&format!("{},{},{},{}\n", w[0], w[1], m, d));
        }
        out
    }
}

pub fn marchenko_pastur_check(s: &CorrelationMatrix, q: f64) -> Result<SpectrumReport> {
    let (lambda_minus, lambda_plus) = marchenko_pastur_edges(q)?;
    let eig = eigh_symmetric(s.entries())?;
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    Ok(SpectrumReport {
        q,
        lambda_minus,
        lambda_plus,
        lambda1: eigenvalues[0],
        above_edge: eigenvalues.iter().filter(|&&l| l > lambda_plus).count(),
        eigenvalues,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerronCheck {
    pub holds: bool,
    /// Smallest component of the top eigenvector after sign normalization.
    pub min_component: f64,
    pub multiplicity_gap: f64,
}

pub fn perron_frobenius_check(s: &CorrelationMatrix) -> Result<PerronCheck> {
    let eig = eigh_symmetric(s.entries())?;
    let multiplicity_gap = if eig.dim() > 1 {
        eig.eigenvalues[0] - eig.eigenvalues[1]
    } else {
        f64::INFINITY
    };
    // eigenvectors already carry a positive largest component
    let min_component = eig.eigenvectors.column(0).min();
    Ok(PerronCheck {
        holds: min_component > 0.0 && multiplicity_gap > PERRON_GAP,
        min_component,
        multiplicity_gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    #[default]
    Average,
}

/// One agglomeration step. Leaves are clusters `0..M`; the cluster created
/// by merge `k` has id `M + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

pub fn hierarchical_dendrogram(s: &CorrelationMatrix, linkage: Linkage) -> Vec<Merge> {
    let m = s.dim();
    let mut dist: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| correlation_distance(s.get(i, j))).collect())
        .collect();
    // active clusters: (id, size, row in `dist`)
    let mut active: Vec<(usize, usize, usize)> = (0..m).map(|i| (i, 1, i)).collect();
    let mut merges = Vec::with_capacity(m.saturating_sub(1));
    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let d = dist[active[a].2][active[b].2];
                // strict comparison keeps the first pair in id order on ties
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let (height, a, b) = best;
        let (ida, na, ra) = active[a];
        let (idb, nb, rb) = active[b];
        for &(_, _, rk) in &active {
            if rk == ra || rk == rb {
                continue;
            }
            let d = match linkage {
                Linkage::Single => dist[ra][rk].min(dist[rb][rk]),
                Linkage::Average => (na as f64 * dist[ra][rk] + nb as f64 * dist[rb][rk]) / (na + nb) as f64,
            };
            dist[ra][rk] = d;
            dist[rk][ra] = d;
        }
        merges.push(Merge {
            left: ida.min(idb),
            right: ida.max(idb),
            height,
            size: na + nb,
        });
        // the merged cluster reuses row `ra` and moves to the end (largest id)
        active.remove(b);
        active.remove(a);
        active.push((m + merges.len() - 1, na + nb, ra));
    }
    merges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningTree {
    /// Edges `(i, j, distance)` with `i < j`, in insertion order.
    pub edges: Vec<(usize, usize, f64)>,
    pub degrees: Vec<usize>,
    /// `degree_histogram[k]` = number of nodes with degree `k`.
    pub degree_histogram: Vec<usize>,
}

impl SpanningTree {
    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,distance\n");
        for (i, j, d) in &self.edges {
            out.push_str(&format!("{i},{j},{d}\n"));
        }
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Kruskal MST on correlation distances; ties go to the lexicographically
/// smallest `(i, j)`.
pub fn minimum_spanning_tree(s: &CorrelationMatrix) -> SpanningTree {
    spanning_tree_of(s.dim(), |i, j| s.get(i, j))
}

/// MST over any symmetric similarity given entry-wise; no PSD requirement.
pub(crate) fn spanning_tree_of(m: usize, rho: impl Fn(usize, usize) -> f64) -> SpanningTree {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            candidates.push((correlation_distance(rho(i, j)), i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..m).collect();
    let mut edges = Vec::with_capacity(m.saturating_sub(1));
    let mut degrees = vec![0usize; m];
    for (d, i, j) in candidates {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri == rj {
            continue;
        }
        parent[ri.max(rj)] = ri.min(rj);
        edges.push((i, j, d));
        degrees[i] += 1;
        degrees[j] += 1;
        if edges.len() + 1 == m {
            break;
        }
    }
    let mut degree_histogram = vec![0usize; degrees.iter().copied().max().unwrap_or(0) + 1];
    for &k in &degrees {
        degree_histogram[k] += 1;
    }
    SpanningTree {
        edges,
        degrees,
        degree_histogram,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFacts {
    pub date: String,
    pub valid: bool,
    pub lambda1: f64,
    pub above_edge: usize,
    pub perron: PerronCheck,
    pub mst_edges: usize,
    pub mst_max_degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedFactReport {
    pub matrices: usize,
    pub dim: usize,
    pub q: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub pairwise: PairwiseDistribution,
    pub bulk: BulkHistogram,
    pub fraction_valid: f64,
    pub fraction_lambda1_above_edge: f64,
    pub fraction_perron: f64,
    pub all_msts_spanning: bool,
    /// Pooled over every matrix.
    pub mst_degree_histogram: Vec<usize>,
    pub mean_matrix_dendrogram: Vec<Merge>,
    pub mean_matrix_mst: SpanningTree,
    pub per_matrix: Vec<MatrixFacts>,
}

impl StylizedFactReport {
    pub fn per_matrix_csv(&self) -> String {
        let mut out = String::from("date,valid,lambda1,above_edge,perron,min_component,gap,mst_edges,mst_max_degree\n");
        for f in &self.per_matrix {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                f.date,
                f.valid,
                f.lambda1,
                f.above_edge,
                f.perron.holds,
                f.perron.min_component,
                f.perron.multiplicity_gap,
                f.mst_edges,
                f.mst_max_degree
            ));
        }
        out
    }

    pub fn dendrogram_csv(&self) -> String {
        let mut out = String::from("step,left,right,height,size\n");
        for (k, m) in self.mean_matrix_dendrogram.iter().enumerate() {
            out.push_str(&format!("{k},{},{},{},{}\n", m.left, m.right, m.height, m.size));
        }
        out
    }
}

/// Element-wise mean of the panel; a convex combination of correlation matrices.
pub fn mean_matrix(panel: &MatrixPanel) -> Result<CorrelationMatrix> {
    let first = panel.matrices.first().ok_or_else(|| Error::invalid("mean of an empty panel"))?;
    let sum = panel
        .matrices
        .iter()
        .skip(1)
        .fold(first.entries().clone(), |acc, m| acc + m.entries());
    let mut mean = sum / panel.len() as f64;
    mean.fill_diagonal(1.0);
    CorrelationMatrix::new(panel.labels().to_vec(), mean)
}

/// Run every check on each matrix of the panel. `q` is `T/M` for the
/// window length that produced (or is emulated by) the matrices.
pub fn stylized_fact_report(panel: &MatrixPanel, q: f64, linkage: Linkage) -> Result<StylizedFactReport> {
    let (lambda_minus, lambda_plus) = marchenko_pastur_edges(q)?;
    let pairwise = pairwise_distribution(panel)?;
    let rows = panel
        .matrices
        .par_iter()
        .zip(&panel.dates)
        .map(|(s, date)| {
            let spectrum = marchenko_pastur_check(s, q)?;
            let perron = perron_frobenius_check(s)?;
            let mst = minimum_spanning_tree(s);
            let facts = MatrixFacts {
                date: date.clone(),
                valid: s.validate().is_ok(),
                lambda1: spectrum.lambda1,
                above_edge: spectrum.above_edge,
                perron,
                mst_edges: mst.edges.len(),
                mst_max_degree: mst.max_degree(),
            };
            Ok((facts, spectrum, mst))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = rows.len() as f64;
    let bulk_values: Vec<f64> = rows.iter().flat_map(|(_, s, _)| s.bulk().collect::<Vec<_>>()).collect();
    let mut mst_degree_histogram = Vec::new();
    for (_, _, mst) in &rows {
        if mst_degree_histogram.len() < mst.degree_histogram.len() {
            mst_degree_histogram.resize(mst.degree_histogram.len(), 0);
        }
        for (k, c) in mst.degree_histogram.iter().enumerate() {
            mst_degree_histogram[k] += c;
        }
    }
    let mean = mean_matrix(panel)?;
    let dim = panel.dim();
    let per_matrix: Vec<MatrixFacts> = rows.into_iter().map(|(f, _, _)| f).collect();
    Ok(StylizedFactReport {
        matrices: per_matrix.len(),
        dim,
        q,
        lambda_minus,
        lambda_plus,
        pairwise,
        bulk: BulkHistogram::new(&bulk_values, q)?,
        fraction_valid: per_matrix.iter().filter(|f| f.valid).count() as f64 / n,
        fraction_lambda1_above_edge: per_matrix.iter().filter(|f| f.lambda1 > lambda_plus).count() as f64 / n,
        fraction_perron: per_matrix.iter().filter(|f| f.perron.holds).count() as f64 / n,
        all_msts_spanning: per_matrix.iter().all(|f| f.mst_edges + 1 == dim),
        mst_degree_histogram,
        mean_matrix_dendrogram: hierarchical_dendrogram(&mean, linkage),
        mean_matrix_mst: minimum_spanning_tree(&mean),
        per_matrix,
    })
}
