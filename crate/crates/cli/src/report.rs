//! Figures and a summary assembled from whatever artifacts exist.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use latentvar::fsio::{csv_text, write_atomic, write_json};
use latentvar::stats::Histogram;
use serde_json::Value;

use crate::svg::{ramp_colors, Chart, PALETTE};

const MODELS: [&str; 4] = ["vae", "ae", "linear2", "linear3"];
const PANELS: [&str; 2] = ["historical", "synthetic"];
const SCHEMES: [&str; 2] = ["simple", "block"];
const MSE_BINS: usize = 30;

/// A parsed CSV file.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .with_context(|| format!("report: reading {}", path.display()))?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("report: parsing {}", path.display()))?;
        Ok(Self { header, rows })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("report: column {name:?} missing"))
    }

    fn strings(&self, name: &str) -> Result<Vec<String>> {
        let k = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[k].clone()).collect())
    }

    /// Numeric column; empty cells become NaN.
    fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.index(name)?;
        self.rows
            .iter()
            .map(|r| {
                if r[k].is_empty() {
                    Ok(f64::NAN)
                } else {
                    r[k].parse::<f64>().with_context(|| format!("report: {name} value {:?}", r[k]))
                }
            })
            .collect()
    }
}

struct Writer<'a> {
    root: &'a Path,
    dir: &'a Path,
    inputs: Vec<String>,
    figures: Vec<(String, String)>,
}

impl Writer<'_> {
    /// Path of an upstream artifact, remembered as an input when present.
    fn input(&mut self, rel: &str) -> Option<PathBuf> {
        let p = self.root.join(rel);
        p.exists().then(|| {
            self.inputs.push(rel.to_string());
            p
        })
    }

    fn figure(&mut self, name: &str, caption: &str, chart: &Chart, data: String) -> Result<()> {
        let svg = self.dir.join(format!("{name}.svg"));
        write_atomic(&svg, chart.render().as_bytes()).with_context(|| format!("report: writing {}", svg.display()))?;
        let csv = self.dir.join(format!("{name}.csv"));
        write_atomic(&csv, data.as_bytes()).with_context(|| format!("report: writing {}", csv.display()))?;
        self.figures.push((name.to_string(), caption.to_string()));
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn read_json(path: &Path) -> Result<Value> {
    latentvar::fsio::read_json(path).with_context(|| format!("report: reading {}", path.display()))
}

fn index_axis(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

fn training(w: &mut Writer) -> Result<()> {
    let mut chart = Chart::new("Training and validation loss", "epoch", "log10 MSE");
    let mut rows = Vec::new();
    let mut any = false;
    for (k, model) in MODELS.iter().enumerate() {
        let Some(p) = w.input(&format!("model/{model}/train_report.csv")) else {
            continue;
        };
        any = true;
        let t = Table::read(&p)?;
        let epochs = t.floats("epoch")?;
        let train = t.floats("train_mse")?;
        let val = t.floats("validation_mse")?;
        let log = |v: &[f64]| v.iter().map(|x| x.log10()).collect::<Vec<_>>();
        chart.line(&epochs, &log(&train), PALETTE[k], Some(&format!("{model} train")));
        if val.iter().any(|v| v.is_finite()) {
            chart.line(&epochs, &log(&val), PALETTE[k + 4], Some(&format!("{model} validation")));
        }
        for i in 0..epochs.len() {
            rows.push(vec![model.to_string(), fmt(epochs[i]), fmt(train[i]), fmt(val[i])]);
        }
    }
    if any {
        let data = csv_text(&["model", "epoch", "train_mse", "validation_mse"], rows);
        w.figure("training_loss", "Reconstruction loss per epoch", &chart, data)?;
    }

    let Some(p) = w.input("model/per_matrix_mse.csv") else {
        return Ok(());
    };
    let t = Table::read(&p)?;
    let present: Vec<&str> = MODELS.iter().copied().filter(|m| t.index(m).is_ok()).collect();
    let cols: Vec<Vec<f64>> = present.iter().map(|m| t.floats(m)).collect::<Result<_>>()?;
    let hi = cols.iter().flatten().copied().fold(0.0f64, f64::max);
    let hi = if hi > 0.0 { hi * 1.0001 } else { 1.0 };
    let mut chart = Chart::new("Per-matrix reconstruction error", "MSE", "fraction of matrices");
    let mut rows = Vec::new();
    for (k, (m, v)) in present.iter().zip(&cols).enumerate() {
        let h = Histogram::new(v, 0.0, hi, MSE_BINS);
        chart.bars(&h.edges, &h.masses, PALETTE[k], Some(m));
        for (e, mass) in h.edges.windows(2).zip(&h.masses) {
            rows.push(vec![m.to_string(), fmt(e[0]), fmt(e[1]), fmt(*mass)]);
        }
    }
    w.figure(
        "reconstruction_mse",
        "Histogram of per-matrix MSE",
        &chart,
        csv_text(&["model", "lower", "upper", "mass"], rows),
    )
}

fn latent(w: &mut Writer) -> Result<()> {
    let Some(p) = w.input("latent/partition.csv") else {
        return Ok(());
    };
    let t = Table::read(&p)?;
    let (mu1, mu2) = (t.floats("mu1")?, t.floats("mu2")?);
    let pts: Vec<(f64, f64)> = mu1.iter().copied().zip(mu2.iter().copied()).collect();
    let regions = t.floats("region")?;
    let colors = regions.iter().map(|r| PALETTE[*r as usize % PALETTE.len()].to_string()).collect();
    let mut chart = Chart::new("Latent means by region", "mu1", "mu2");
    chart.points(&pts, colors, 3.0);
    let data = std::fs::read_to_string(&p)?;
    w.figure("latent_partition", "Encoded matrices coloured by latent region", &chart, data)?;

    let mut chart = Chart::new("Latent means over time", "window", "latent mean");
    let x = index_axis(mu1.len());
    chart
        .line(&x, &mu1, PALETTE[0], Some("mu1"))
        .line(&x, &mu2, PALETTE[1], Some("mu2"));
    let dates = t.strings("date")?;
    let rows = (0..x.len()).map(|i| vec![dates[i].clone(), fmt(mu1[i]), fmt(mu2[i])]);
    w.figure(
        "latent_series",
        "Latent coordinates per window",
        &chart,
        csv_text(&["date", "mu1", "mu2"], rows),
    )?;

    let Some(p) = w.input("latent/eigen_features.csv") else {
        return Ok(());
    };
    let e = Table::read(&p)?;
    let l1 = e.floats("lambda1")?;
    let mut chart = Chart::new("Latent means by largest eigenvalue", "mu1", "mu2");
    chart.points(&pts, ramp_colors(&l1), 3.0);
    let rows = (0..pts.len()).map(|i| vec![fmt(mu1[i]), fmt(mu2[i]), fmt(l1[i])]);
    w.figure(
        "latent_lambda1",
        "Encoded matrices coloured by lambda1",
        &chart,
        csv_text(&["mu1", "mu2", "lambda1"], rows),
    )?;

    let data = std::fs::read_to_string(&p)?;
    let mut chart = Chart::new("Leading eigenvalues", "window", "eigenvalue");
    chart
        .line(&x, &l1, PALETTE[0], Some("lambda1"))
        .line(&x, &e.floats("lambda2")?, PALETTE[1], Some("lambda2"));
    w.figure("eigenvalue_series", "Two largest eigenvalues per window", &chart, data.clone())?;
    let mut chart = Chart::new("Eigenvector stability", "window", "cosine to mean eigenvector");
    chart
        .line(&x, &e.floats("alpha1")?, PALETTE[0], Some("alpha1"))
        .line(&x, &e.floats("alpha2")?, PALETTE[1], Some("alpha2"));
    w.figure(
        "eigenvector_series",
        "Alignment of leading eigenvectors with their mean",
        &chart,
        data,
    )
}

/// Leaf order and node coordinates for a merge list over `n` leaves.
fn dendrogram_segments(n: usize, merges: &[(usize, usize, f64)]) -> Vec<((f64, f64), (f64, f64))> {
    fn order(node: usize, n: usize, merges: &[(usize, usize, f64)], out: &mut Vec<usize>) {
        if node < n {
            out.push(node);
        } else {
            let (l, r, _) = merges[node - n];
            order(l, n, merges, out);
            order(r, n, merges, out);
        }
    }
    let mut leaves = Vec::new();
    if let Some(root) = (n + merges.len()).checked_sub(1) {
        order(root, n, merges, &mut leaves);
    }
    let mut pos = vec![(0.0, 0.0); n + merges.len()];
    for (k, &leaf) in leaves.iter().enumerate() {
        pos[leaf] = (k as f64, 0.0);
    }
    let mut segs = Vec::new();
    for (k, &(l, r, h)) in merges.iter().enumerate() {
        let (a, b) = (pos[l], pos[r]);
        segs.push((a, (a.0, h)));
        segs.push((b, (b.0, h)));
        segs.push(((a.0, h), (b.0, h)));
        pos[n + k] = (0.5 * (a.0 + b.0), h);
    }
    segs
}

fn facts(w: &mut Writer, name: &str) -> Result<Option<Value>> {
    let base = format!("facts/{name}");
    let Some(summary) = w.input(&format!("{base}/facts.json")) else {
        return Ok(None);
    };
    let summary = read_json(&summary)?;

    if let Some(p) = w.input(&format!("{base}/pairwise.csv")) {
        let t = Table::read(&p)?;
        let (lo, hi) = (t.floats("lower")?, t.floats("upper")?);
        let mut edges = lo.clone();
        edges.extend(hi.last());
        let mut chart = Chart::new(&format!("Pairwise correlations ({name})"), "correlation", "mass");
        chart.bars(&edges, &t.floats("mass")?, PALETTE[0], None);
        w.figure(
            &format!("pairwise_{name}"),
            "Pooled off-diagonal correlations",
            &chart,
            std::fs::read_to_string(&p)?,
        )?;
    }
    if let Some(p) = w.input(&format!("{base}/spectrum.csv")) {
        let t = Table::read(&p)?;
        let (lo, hi) = (t.floats("lower")?, t.floats("upper")?);
        let mut edges = lo.clone();
        edges.extend(hi.last());
        let mass = t.floats("mass")?;
        let widths: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
        let density: Vec<f64> = mass.iter().zip(&widths).map(|(m, w)| m / w).collect();
        let centers: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut chart = Chart::new(&format!("Bulk spectrum vs Marchenko-Pastur ({name})"), "eigenvalue", "density");
        chart.bars(&edges, &density, PALETTE[0], Some("empirical")).line(
            &centers,
            &t.floats("mp_density")?,
            PALETTE[1],
            Some("Marchenko-Pastur"),
        );
        w.figure(
            &format!("spectrum_{name}"),
            "Eigenvalues below the noise edge",
            &chart,
            std::fs::read_to_string(&p)?,
        )?;
    }
    if let Some(p) = w.input(&format!("{base}/per_matrix.csv")) {
        let t = Table::read(&p)?;
        let min = t.floats("min_component")?;
        let x = index_axis(min.len());
        let mut chart = Chart::new(
            &format!("Perron eigenvector sign check ({name})"),
            "matrix",
            "smallest signed component",
        );
        chart.line(&x, &min, PALETTE[0], Some("min component")).line(
            &[0.0, x.len().saturating_sub(1) as f64],
            &[0.0, 0.0],
            PALETTE[7],
            None,
        );
        w.figure(
            &format!("perron_{name}"),
            "Positive values mean one-signed leading eigenvector",
            &chart,
            std::fs::read_to_string(&p)?,
        )?;
        let l1 = t.floats("lambda1")?;
        let edge = summary["lambda_plus"].as_f64().unwrap_or(f64::NAN);
        let mut chart = Chart::new(&format!("Largest eigenvalue vs noise edge ({name})"), "matrix", "lambda1");
        chart.line(&x, &l1, PALETTE[0], Some("lambda1")).line(
            &[0.0, x.len().saturating_sub(1) as f64],
            &[edge, edge],
            PALETTE[1],
            Some("upper edge"),
        );
        w.figure(
            &format!("lambda1_{name}"),
            "Largest eigenvalue per matrix",
            &chart,
            std::fs::read_to_string(&p)?,
        )?;
    }
    if let Some(p) = w.input(&format!("{base}/dendrogram.csv")) {
        let t = Table::read(&p)?;
        let (l, r, h) = (t.floats("left")?, t.floats("right")?, t.floats("height")?);
        let merges: Vec<(usize, usize, f64)> = (0..h.len()).map(|k| (l[k] as usize, r[k] as usize, h[k])).collect();
        let mut chart = Chart::new(&format!("Dendrogram of the mean matrix ({name})"), "asset (leaf order)", "distance");
        for (a, b) in dendrogram_segments(merges.len() + 1, &merges) {
            chart.segment(a, b, PALETTE[0]);
        }
        w.figure(
            &format!("dendrogram_{name}"),
            "Hierarchical clustering of assets",
            &chart,
            std::fs::read_to_string(&p)?,
        )?;
    }
    if let Some(hist) = summary["mst_degree_histogram"].as_array() {
        let counts: Vec<f64> = hist.iter().map(|v| v.as_f64().unwrap_or(0.0)).collect();
        let edges: Vec<f64> = (0..=counts.len()).map(|d| d as f64 - 0.5).collect();
        let mut chart = Chart::new(&format!("Spanning-tree degrees ({name})"), "degree", "nodes");
        chart.bars(&edges, &counts, PALETTE[2], None);
        let rows = counts.iter().enumerate().map(|(d, c)| vec![d.to_string(), fmt(*c)]);
        w.figure(
            &format!("mst_degree_{name}"),
            "Pooled node degrees of minimum spanning trees",
            &chart,
            csv_text(&["degree", "count"], rows),
        )?;
    }
    Ok(Some(summary))
}

/// Latent grid and surface figures; returns the surface nodes.
fn surface(w: &mut Writer) -> Result<Option<Vec<(f64, f64)>>> {
    let latent = w.input("latent/latent.csv").map(|p| Table::read(&p)).transpose()?;
    let latent_pts: Vec<(f64, f64)> = match &latent {
        Some(t) => t.floats("mu1")?.into_iter().zip(t.floats("mu2")?).collect(),
        None => Vec::new(),
    };
    if let Some(p) = w.input("synthetic/grid.csv") {
        let t = Table::read(&p)?;
        let grid: Vec<(f64, f64)> = t.floats("z1")?.into_iter().zip(t.floats("z2")?).collect();
        let mut chart = Chart::new("Latent grid", "z1", "z2");
        chart
            .uniform_points(&latent_pts, PALETTE[7], 2.0)
            .uniform_points(&grid, PALETTE[1], 3.0);
        w.figure(
            "latent_grid",
            "Grid points (red) over encoded matrices (grey)",
            &chart,
            std::fs::read_to_string(&p)?,
        )?;
    }
    let Some(p) = w.input("surface/surface.csv") else {
        return Ok(None);
    };
    let t = Table::read(&p)?;
    let nodes: Vec<(f64, f64)> = t.floats("z1")?.into_iter().zip(t.floats("z2")?).collect();
    let var = t.floats("var")?;
    let mut chart = Chart::new("Credit VaR over the latent space", "z1", "z2");
    chart
        .points(&nodes, ramp_colors(&var), 5.0)
        .uniform_points(&latent_pts, PALETTE[7], 1.5);
    w.figure(
        "var_surface",
        "VaR at each grid point, dark low to bright high",
        &chart,
        std::fs::read_to_string(&p)?,
    )?;
    Ok(Some(nodes))
}

fn bootstrap(w: &mut Writer, scheme: &str, nodes: &[(f64, f64)]) -> Result<Option<Value>> {
    let base = format!("bootstrap/{scheme}");
    let Some(summary) = w.input(&format!("{base}/summary.json")) else {
        return Ok(None);
    };
    let summary = read_json(&summary)?;
    if let Some(p) = w.input(&format!("{base}/var_distribution.csv")) {
        let t = Table::read(&p)?;
        let pts: Vec<(f64, f64)> = t.floats("z1")?.into_iter().zip(t.floats("z2")?).collect();
        let mut chart = Chart::new(&format!("Bootstrap endpoints ({scheme})"), "z1", "z2");
        chart
            .uniform_points(nodes, PALETTE[7], 2.0)
            .points(&pts, ramp_colors(&t.floats("var")?), 1.5);
        w.figure(
            &format!("bootstrap_endpoints_{scheme}"),
            "Endpoints coloured by interpolated VaR",
            &chart,
            std::fs::read_to_string(&p)?,
        )?;
    }
    if let Some(p) = w.input(&format!("{base}/histogram.csv")) {
        let t = Table::read(&p)?;
        let lo = t.floats("lower")?;
        let mut edges = lo.clone();
        edges.extend(t.floats("upper")?.last());
        let mass = t.floats("mass")?;
        let top = mass.iter().copied().fold(0.0, f64::max);
        let mut chart = Chart::new(&format!("VaR distribution ({scheme} bootstrap)"), "VaR", "mass");
        chart.bars(&edges, &mass, PALETTE[0], Some("bootstrap"));
        if let Some(v) = summary["current_var"].as_f64() {
            chart.line(&[v, v], &[0.0, top], PALETTE[1], Some("current"));
        }
        w.figure(
            &format!("var_distribution_{scheme}"),
            "Interpolated VaR at bootstrap endpoints",
            &chart,
            std::fs::read_to_string(&p)?,
        )?;
    }
    Ok(Some(summary))
}

/// Write every available figure and `summary.json` under `dir`; returns the
/// artifacts read, relative to `root`.
pub fn write_report(root: &Path, dir: &Path) -> Result<Vec<String>> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).with_context(|| format!("report: clearing {}", dir.display()))?;
    }
    let mut w = Writer {
        root,
        dir,
        inputs: Vec::new(),
        figures: Vec::new(),
    };
    let mut summary = BTreeMap::new();
    training(&mut w)?;
    if let Some(p) = w.input("model/comparison.json") {
        summary.insert("models".to_string(), read_json(&p)?);
    }
    latent(&mut w)?;
    if let Some(p) = w.input("latent/correlation.json") {
        summary.insert("latent_eigen_correlation".to_string(), read_json(&p)?);
    }
    for name in PANELS {
        if let Some(v) = facts(&mut w, name)? {
            summary.insert(format!("facts_{name}"), v);
        }
    }
    if let Some(p) = w.input("var/var.json") {
        summary.insert("var_mean_matrix".to_string(), read_json(&p)?);
    }
    let nodes = surface(&mut w)?.unwrap_or_default();
    if let Some(p) = w.input("surface/summary.json") {
        summary.insert("surface".to_string(), read_json(&p)?);
    }
    for scheme in SCHEMES {
        if let Some(v) = bootstrap(&mut w, scheme, &nodes)? {
            summary.insert(format!("bootstrap_{scheme}"), v);
        }
    }
    let figures: Vec<Value> = w
        .figures
        .iter()
        .map(|(n, c)| serde_json::json!({ "name": n, "svg": format!("{n}.svg"), "csv": format!("{n}.csv"), "caption": c }))
        .collect();
    summary.insert("figures".to_string(), Value::Array(figures));
    write_json(&dir.join("summary.json"), &summary).context("report: writing summary.json")?;

    let mut index = String::from("# Run report\n\n");
    for (n, c) in &w.figures {
        index.push_str(&format!("## {n}\n\n{c}\n\n![{n}]({n}.svg)\n\nData: [{n}.csv]({n}.csv)\n\n"));
    }
    write_atomic(&dir.join("index.md"), index.as_bytes()).context("report: writing index.md")?;
    let mut inputs = w.inputs;
    inputs.sort();
    inputs.dedup();
    Ok(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dendrogram_segments_cover_every_merge() {
        // Leaves 0..3; merge (0,1) at 1, then (2, 3) at 2.
        let segs = dendrogram_segments(3, &[(0, 1, 1.0), (2, 3, 2.0)]);
        assert_eq!(segs.len(), 6);
        assert_eq!(segs[2], ((1.0, 1.0), (2.0, 1.0)));
        assert_eq!(segs.last().unwrap().1 .1, 2.0);
    }

    #[test]
    fn empty_output_still_writes_summary() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = write_report(dir.path(), &dir.path().join("report")).unwrap();
        assert!(inputs.is_empty());
        let v: Value = latentvar::fsio::read_json(&dir.path().join("report/summary.json")).unwrap();
        assert_eq!(v["figures"], Value::Array(vec![]));
    }
}
