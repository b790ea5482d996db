//! Pipeline stages. Each reads upstream artifacts from the output directory,
//! writes its own atomically and records a manifest step.

use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use latentvar::autoencoders::{
    load_model, pca_oracle, save_model, split_dataset, train_ae, train_linear_ae, train_vae, Autoencoder, TrainedModel,
};
use latentvar::corrdata::{
    generate_synthetic_market, load_panel, load_returns_csv, read_matrix_csv, rolling_correlations, save_panel, write_returns_csv,
    SyntheticMarketConfig,
};
use latentvar::creditrisk::{monte_carlo_invocations, simulate_losses, var_quantile, VarReport};
use latentvar::facts::{mean_matrix, stylized_fact_report, StylizedFactReport};
use latentvar::fsio::{csv_text, write_atomic, write_json};
use latentvar::latent::{build_grid, eigen_features, generate_synthetic_panel, latent_eigen_correlation, partition_latent};
use latentvar::sensitivity::{bootstrap_latent_paths, surface_from_panel, var_distribution, BootstrapScheme, MonteCarloVar};
use latentvar::{CorrelationMatrix, LatentGrid, LatentSeries, MatrixPanel, VaeModel, VarSurface};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Stage};
use crate::manifest::{sha256_hex, Recorder};
use crate::ConfigError;

pub const HISTORICAL_PANEL: &str = "panel";
pub const SYNTHETIC_PANEL: &str = "synthetic/panel";
pub const RETURNS: &str = "data/returns.csv";
pub const VAE_DIR: &str = "model/vae";
pub const LATENT: &str = "latent/latent.csv";
pub const EIGEN: &str = "latent/eigen_features.csv";
pub const PARTITION: &str = "latent/partition.csv";
pub const GRID: &str = "synthetic/grid.csv";
pub const SURFACE: &str = "surface/surface.csv";

/// Quantiles tabulated next to every single-matrix VaR run.
const LOSS_QUANTILES: [f64; 7] = [0.5, 0.9, 0.95, 0.99, 0.995, 0.999, 0.9999];

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    digest: String,
    recorder: Recorder,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
        let recorder = Recorder::open(&out)?;
        Ok(Self {
            digest: cfg.digest(),
            cfg,
            out,
            recorder,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn record(&mut self, command: &str, seed: u64, inputs: &[&str], outputs: &[&str]) -> Result<()> {
        let ins: Vec<PathBuf> = inputs.iter().map(|p| self.path(p)).collect();
        let outs: Vec<PathBuf> = outputs.iter().map(|p| self.path(p)).collect();
        self.recorder.record(command, seed, &self.digest, &ins, &outs)
    }

    fn require(&self, rel: &str, stage: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(ConfigError(format!("{stage}: missing {} (run `latentvar {producer}` first)", p.display())).into());
        }
        Ok(p)
    }

    fn historical_panel(&self, stage: &str) -> Result<MatrixPanel> {
        let dir = self.require(HISTORICAL_PANEL, stage, "ingest` or `latentvar synthdata")?;
        load_panel(&dir).with_context(|| format!("{stage}: loading panel {}", dir.display()))
    }

    fn vae(&self, stage: &str) -> Result<VaeModel> {
        let dir = self.require(VAE_DIR, stage, "train")?;
        match load_model(&dir).with_context(|| format!("{stage}: loading model {}", dir.display()))? {
            (TrainedModel::Vae(m), _) => Ok(m),
            (other, _) => Err(ConfigError(format!(
                "{stage}: {} holds a {:?} model, expected a VAE",
                dir.display(),
                other.kind()
            ))
            .into()),
        }
    }

    fn latent(&self, stage: &str) -> Result<LatentSeries> {
        let p = self.require(LATENT, stage, "encode")?;
        let text = read_text(&p, stage)?;
        LatentSeries::from_csv(&text).with_context(|| format!("{stage}: parsing {}", p.display()))
    }

    fn grid(&self, stage: &str) -> Result<LatentGrid> {
        let p = self.require(GRID, stage, "generate")?;
        LatentGrid::from_csv(&read_text(&p, stage)?).with_context(|| format!("{stage}: parsing {}", p.display()))
    }

    fn surface(&self, stage: &str) -> Result<VarSurface> {
        let p = self.require(SURFACE, stage, "surface")?;
        VarSurface::from_csv(&read_text(&p, stage)?).with_context(|| format!("{stage}: parsing {}", p.display()))
    }

    fn write(&self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel);
        write_atomic(&p, text.as_bytes()).with_context(|| format!("writing {}", p.display()))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let p = self.path(rel);
        write_json(&p, value).with_context(|| format!("writing {}", p.display()))
    }
}

pub fn read_text(path: &Path, stage: &str) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("{stage}: reading {}", path.display()))
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn write_historical(ctx: &mut Context, returns: &latentvar::ReturnPanel, stage: &str) -> Result<()> {
    write_returns_csv(&ctx.path(RETURNS), returns).with_context(|| format!("{stage}: writing {RETURNS}"))?;
    let panel = rolling_correlations(returns, ctx.cfg.window, ctx.cfg.stride).with_context(|| format!("{stage}: rolling correlations"))?;
    let dir = ctx.path(HISTORICAL_PANEL);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).with_context(|| format!("{stage}: clearing {}", dir.display()))?;
    }
    save_panel(&dir, &panel).with_context(|| format!("{stage}: writing panel {}", dir.display()))?;
    Ok(())
}

pub fn ingest(ctx: &mut Context) -> Result<()> {
    let path = ctx
        .cfg
        .data
        .returns
        .clone()
        .ok_or_else(|| ConfigError("ingest: no input; set data.returns or pass --returns".into()))?;
    let returns = load_returns_csv(&path, &ctx.cfg.data.schema()).with_context(|| format!("ingest: reading {}", path.display()))?;
    write_historical(ctx, &returns, "ingest")?;
    let seed = ctx.cfg.seed;
    let ins = [path.to_string_lossy().into_owned()];
    let ins: Vec<&str> = ins.iter().map(String::as_str).collect();
    ctx.record("ingest", seed, &ins, &[RETURNS, HISTORICAL_PANEL])
}

pub fn synthdata(ctx: &mut Context) -> Result<()> {
    let s = &ctx.cfg.data.synthetic;
    let market = SyntheticMarketConfig::regime_switching(s.assets, s.months);
    let seed = ctx.cfg.seed_for(Stage::Market);
    let returns = generate_synthetic_market(&market, seed).context("synthdata: generating market")?;
    write_historical(ctx, &returns, "synthdata")?;
    ctx.record("synthdata", seed, &[], &[RETURNS, HISTORICAL_PANEL])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelScore {
    pub name: String,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub train_matrices: usize,
    pub validation_matrices: usize,
    /// Validation MSE of predicting every matrix by the training mean.
    pub mean_baseline_validation_mse: Option<f64>,
    pub pca2_train_mse: f64,
    pub pca3_train_mse: f64,
    pub models: Vec<ModelScore>,
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn train(ctx: &mut Context) -> Result<()> {
    let panel = ctx.historical_panel("train")?;
    let split = split_dataset(&panel, ctx.cfg.validation_fraction, ctx.cfg.seed_for(Stage::Split)).context("train: splitting panel")?;
    let tc = ctx.cfg.train_config();
    let data_hash = sha256_hex(&std::fs::read(ctx.path(HISTORICAL_PANEL).join("manifest.json")).context("train: hashing panel")?);
    let labels = panel.labels().to_vec();
    let all = panel.flattened();

    let d = all[0].len();
    let n = split.train.len() as f64;
    let train_mean: Vec<f64> = (0..d).map(|k| split.train.iter().map(|x| x[k]).sum::<f64>() / n).collect();
    let baseline: Vec<f64> = split
        .validation
        .iter()
        .map(|x| x.iter().zip(&train_mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d as f64)
        .collect();

    let mut models: Vec<(String, TrainedModel)> = Vec::new();
    let mut scores = Vec::new();
    let mut save = |ctx: &Context, name: &str, model: TrainedModel, report: &latentvar::TrainReport| -> Result<()> {
        let dir = ctx.path(&format!("model/{name}"));
        save_model(&dir, &model, &labels, tc.seed, &data_hash).with_context(|| format!("train: saving {}", dir.display()))?;
        ctx.write(&format!("model/{name}/train_report.csv"), &report.to_csv())?;
        ctx.write_json(&format!("model/{name}/train_report.json"), report)?;
        let last = report.final_epoch();
        scores.push(ModelScore {
            name: name.to_string(),
            train_mse: last.train_mse,
            validation_mse: last.validation_mse,
        });
        models.push((name.to_string(), model));
        Ok(())
    };

    let (vae, rep) = train_vae(&split, &tc).context("train: VAE")?;
    save(ctx, "vae", TrainedModel::Vae(vae), &rep)?;
    if ctx.cfg.compare_models {
        let (ae, rep) = train_ae(&split, &tc).context("train: deterministic autoencoder")?;
        save(ctx, "ae", TrainedModel::Ae(ae), &rep)?;
        for k in [2, 3] {
            let cfg = ctx.cfg.linear_train_config(k);
            let (lin, rep) = train_linear_ae(&split, &cfg).with_context(|| format!("train: linear autoencoder ({k}D)"))?;
            save(ctx, &format!("linear{k}"), TrainedModel::Linear(lin), &rep)?;
        }
    }

    let comparison = Comparison {
        train_matrices: split.train.len(),
        validation_matrices: split.validation.len(),
        mean_baseline_validation_mse: mean_of(&baseline),
        pca2_train_mse: pca_oracle(&split.train, 2).context("train: PCA oracle")?,
        pca3_train_mse: pca_oracle(&split.train, 3).context("train: PCA oracle")?,
        models: scores,
    };
    ctx.write_json("model/comparison.json", &comparison)?;

    let mut errors = Vec::new();
    for (_, m) in &models {
        let e = match m {
            TrainedModel::Vae(m) => m.reconstruction_errors(&all),
            TrainedModel::Ae(m) => m.reconstruction_errors(&all),
            TrainedModel::Linear(m) => m.reconstruction_errors(&all),
        };
        errors.push(e.context("train: reconstruction errors")?);
    }
    let mut role = vec!["train"; all.len()];
    for &i in &split.validation_indices {
        role[i] = "validation";
    }
    let mut header = vec!["date".to_string(), "split".to_string()];
    header.extend(models.iter().map(|(n, _)| n.clone()));
    let rows = (0..all.len()).map(|i| {
        let mut r = vec![panel.dates[i].clone(), role[i].to_string()];
        r.extend(errors.iter().map(|e| fmt(e[i])));
        r
    });
    ctx.write("model/per_matrix_mse.csv", &csv_text(&header, rows))?;
    ctx.record("train", tc.seed, &[HISTORICAL_PANEL], &["model"])
}

pub fn encode(ctx: &mut Context) -> Result<()> {
    let panel = ctx.historical_panel("encode")?;
    let vae = ctx.vae("encode")?;
    let enc = vae.encode_panel(&panel).context("encode: encoding panel")?;
    let series = LatentSeries::from_encodings(panel.dates.clone(), &enc).context("encode: latent series")?;
    let rows = panel
        .dates
        .iter()
        .zip(&enc)
        .map(|(d, e)| vec![d.clone(), fmt(e.mu[0]), fmt(e.mu[1]), fmt(e.sigma[0]), fmt(e.sigma[1])]);
    ctx.write(LATENT, &csv_text(&["date", "mu1", "mu2", "sigma1", "sigma2"], rows))?;

    let feats = eigen_features(&panel).context("encode: eigen features")?;
    let rows = (0..panel.len()).map(|i| {
        vec![
            panel.dates[i].clone(),
            fmt(feats.lambda1[i]),
            fmt(feats.lambda2[i]),
            fmt(feats.alpha1[i]),
            fmt(feats.alpha2[i]),
        ]
    });
    ctx.write(EIGEN, &csv_text(&["date", "lambda1", "lambda2", "alpha1", "alpha2"], rows))?;
    let corr = latent_eigen_correlation(&series, &feats).context("encode: latent/eigen correlation")?;
    ctx.write_json("latent/correlation.json", &corr)?;

    let points = series.points();
    let p = &ctx.cfg.partition;
    let regions = partition_latent(&points, p.rows, p.cols).context("encode: partition")?;
    let rows = (0..points.len()).map(|i| vec![panel.dates[i].clone(), fmt(points[i][0]), fmt(points[i][1]), regions[i].to_string()]);
    ctx.write(PARTITION, &csv_text(&["date", "mu1", "mu2", "region"], rows))?;
    let seed = ctx.cfg.seed;
    ctx.record("encode", seed, &[HISTORICAL_PANEL, VAE_DIR], &["latent"])
}

pub fn generate(ctx: &mut Context) -> Result<()> {
    let series = ctx.latent("generate")?;
    let vae = ctx.vae("generate")?;
    let labels = ctx.historical_panel("generate")?.labels().to_vec();
    let seed = ctx.cfg.seed_for(Stage::Grid);
    let grid = build_grid(&series.points(), ctx.cfg.grid.count, ctx.cfg.grid.margin, seed).context("generate: latent grid")?;
    ctx.write(GRID, &grid.to_csv())?;
    let panel = generate_synthetic_panel(&vae, &grid, &labels).context("generate: decoding grid")?;
    let dir = ctx.path(SYNTHETIC_PANEL);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).with_context(|| format!("generate: clearing {}", dir.display()))?;
    }
    save_panel(&dir, &panel).with_context(|| format!("generate: writing {}", dir.display()))?;
    ctx.record("generate", seed, &[LATENT, VAE_DIR], &[GRID, SYNTHETIC_PANEL])
}

/// Scalar findings of a stylized-fact run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactsSummary {
    pub matrices: usize,
    pub dim: usize,
    pub q: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub pairwise_mean: f64,
    pub pairwise_median: f64,
    pub pairwise_skewness: f64,
    pub pairwise_fraction_positive: f64,
    pub fraction_valid: f64,
    pub fraction_lambda1_above_edge: f64,
    pub fraction_perron: f64,
    pub all_msts_spanning: bool,
    pub mst_degree_histogram: Vec<usize>,
    pub mean_matrix_mst_max_degree: usize,
}

impl From<&StylizedFactReport> for FactsSummary {
    fn from(r: &StylizedFactReport) -> Self {
        Self {
            matrices: r.matrices,
            dim: r.dim,
            q: r.q,
            lambda_minus: r.lambda_minus,
            lambda_plus: r.lambda_plus,
            pairwise_mean: r.pairwise.mean,
            pairwise_median: r.pairwise.median,
            pairwise_skewness: r.pairwise.skewness,
            pairwise_fraction_positive: r.pairwise.fraction_positive,
            fraction_valid: r.fraction_valid,
            fraction_lambda1_above_edge: r.fraction_lambda1_above_edge,
            fraction_perron: r.fraction_perron,
            all_msts_spanning: r.all_msts_spanning,
            mst_degree_histogram: r.mst_degree_histogram.clone(),
            mean_matrix_mst_max_degree: r.mean_matrix_mst.max_degree(),
        }
    }
}

fn write_facts(ctx: &Context, name: &str, report: &StylizedFactReport) -> Result<()> {
    let base = format!("facts/{name}");
    ctx.write_json(&format!("{base}/facts.json"), &FactsSummary::from(report))?;
    ctx.write(&format!("{base}/pairwise.csv"), &report.pairwise.histogram.to_csv())?;
    ctx.write(&format!("{base}/spectrum.csv"), &report.bulk.to_csv())?;
    ctx.write(&format!("{base}/per_matrix.csv"), &report.per_matrix_csv())?;
    ctx.write(&format!("{base}/dendrogram.csv"), &report.dendrogram_csv())?;
    ctx.write(&format!("{base}/mst.csv"), &report.mean_matrix_mst.to_csv())
}

pub fn facts(ctx: &mut Context) -> Result<()> {
    let historical = ctx.historical_panel("facts")?;
    // Generated matrices stand in for windows of the same length.
    let q = ctx.cfg.window as f64 / historical.dim() as f64;
    let linkage = ctx.cfg.linkage;
    let report = stylized_fact_report(&historical, q, linkage).context("facts: historical panel")?;
    write_facts(ctx, "historical", &report)?;
    let mut inputs = vec![HISTORICAL_PANEL];
    let synthetic = ctx.path(SYNTHETIC_PANEL);
    if synthetic.exists() {
        let panel = load_panel(&synthetic).with_context(|| format!("facts: loading {}", synthetic.display()))?;
        let report = stylized_fact_report(&panel, q, linkage).context("facts: generated panel")?;
        write_facts(ctx, "synthetic", &report)?;
        inputs.push(SYNTHETIC_PANEL);
    }
    let seed = ctx.cfg.seed;
    ctx.record("facts", seed, &inputs, &["facts"])
}

pub fn var(ctx: &mut Context, matrix: Option<&Path>, portfolio: Option<&Path>) -> Result<()> {
    let (s, source) = match matrix {
        Some(p) => {
            let (labels, a) = read_matrix_csv(p).with_context(|| format!("var: reading matrix {}", p.display()))?;
            let s = CorrelationMatrix::new(labels, a).with_context(|| format!("var: matrix {}", p.display()))?;
            (s, p.to_string_lossy().into_owned())
        }
        None => {
            let panel = ctx.historical_panel("var")?;
            (mean_matrix(&panel).context("var: mean matrix")?, HISTORICAL_PANEL.to_string())
        }
    };
    let spec = ctx.cfg.portfolio(s.dim(), portfolio)?;
    let sim = ctx.cfg.sim_config();
    let dist = simulate_losses(&spec, &s, &sim).context("var: simulation")?;
    let report = VarReport::new(&dist, &spec, &sim).context("var: report")?;
    ctx.write_json("var/var.json", &report)?;
    ctx.write_json("var/portfolio.json", &spec)?;
    let mut rows = Vec::new();
    for q in LOSS_QUANTILES {
        rows.push(vec![fmt(q), fmt(var_quantile(&dist, q).context("var: quantile")?)]);
    }
    ctx.write("var/loss_quantiles.csv", &csv_text(&["quantile", "loss"], rows))?;
    let mut inputs = vec![source.as_str()];
    let port = portfolio
        .or(ctx.cfg.portfolio_file.as_deref())
        .map(|p| p.to_string_lossy().into_owned());
    if let Some(p) = &port {
        inputs.push(p);
    }
    ctx.record("var", sim.seed, &inputs, &["var"])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub method: String,
    pub nodes: usize,
    pub credit_simulations: usize,
    pub paths: usize,
    pub quantile: f64,
    pub total_ead: f64,
    pub expected_loss: f64,
    pub min_var: f64,
    pub max_var: f64,
}

pub fn surface(ctx: &mut Context) -> Result<()> {
    let grid = ctx.grid("surface")?;
    let dir = ctx.require(SYNTHETIC_PANEL, "surface", "generate")?;
    let panel = load_panel(&dir).with_context(|| format!("surface: loading {}", dir.display()))?;
    let portfolio = ctx.cfg.portfolio(panel.dim(), None)?;
    let evaluator = MonteCarloVar {
        portfolio: portfolio.clone(),
        config: ctx.cfg.sim_config(),
    };
    let before = monte_carlo_invocations();
    let surface = surface_from_panel(&grid, &panel, &evaluator).context("surface: credit VaR per grid point")?;
    let runs = monte_carlo_invocations() - before;
    ctx.write(SURFACE, &surface.to_csv())?;
    let values = surface.values();
    let summary = SurfaceSummary {
        method: VarSurface::METHOD.to_string(),
        nodes: surface.len(),
        credit_simulations: runs,
        paths: evaluator.config.paths,
        quantile: evaluator.config.quantile,
        total_ead: portfolio.total_ead(),
        expected_loss: portfolio.expected_loss(),
        min_var: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_var: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    ctx.write_json("surface/summary.json", &summary)?;
    ctx.write_json("surface/portfolio.json", &portfolio)?;
    let seed = evaluator.config.seed;
    ctx.record("surface", seed, &[GRID, SYNTHETIC_PANEL], &["surface"])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub scheme: BootstrapScheme,
    pub block_length: usize,
    pub horizon: usize,
    pub resamples: usize,
    pub seed: u64,
    pub start: [f64; 2],
    pub current_var: f64,
    pub samples: usize,
    pub clamped: usize,
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    /// Largest gap between the surface and its node values.
    pub nodal_max_error: f64,
    /// Credit Monte Carlo runs made while bootstrapping; always zero.
    pub credit_simulations: usize,
}

pub fn scheme_name(s: BootstrapScheme) -> &'static str {
    match s {
        BootstrapScheme::Simple => "simple",
        BootstrapScheme::Block => "block",
    }
}

pub fn bootstrap(ctx: &mut Context) -> Result<()> {
    let series = ctx.latent("bootstrap")?;
    let surface = ctx.surface("bootstrap")?;
    let start = series.last().ok_or_else(|| ConfigError("bootstrap: empty latent series".into()))?;
    let base = ctx.cfg.bootstrap_config();
    for scheme in [BootstrapScheme::Simple, BootstrapScheme::Block] {
        let name = scheme_name(scheme);
        let cfg = latentvar::BootstrapConfig { scheme, ..base.clone() };
        let before = monte_carlo_invocations();
        let endpoints = bootstrap_latent_paths(&series, &cfg).with_context(|| format!("bootstrap: {name} paths"))?;
        let dist = var_distribution(&surface, &endpoints).with_context(|| format!("bootstrap: {name} VaR distribution"))?;
        let current = surface.interpolate(start, true).context("bootstrap: VaR at the current point")?;
        let mut nodal = 0.0f64;
        for (p, v) in surface.points().iter().zip(surface.values()) {
            let at = surface.interpolate(*p, false).context("bootstrap: nodal check")?;
            nodal = nodal.max((at.value - v).abs());
        }
        let runs = monte_carlo_invocations() - before;
        let s = dist.summary();
        let summary = BootstrapSummary {
            scheme,
            block_length: cfg.effective_block_length(),
            horizon: cfg.horizon,
            resamples: cfg.resamples,
            seed: cfg.seed,
            start,
            current_var: current.value,
            samples: s.samples,
            clamped: s.clamped,
            mean: s.mean,
            q05: s.q05,
            q50: s.q50,
            q95: s.q95,
            nodal_max_error: nodal,
            credit_simulations: runs,
        };
        ctx.write(&format!("bootstrap/{name}/var_distribution.csv"), &dist.to_csv(&endpoints))?;
        ctx.write(&format!("bootstrap/{name}/histogram.csv"), &dist.histogram.to_csv())?;
        ctx.write_json(&format!("bootstrap/{name}/summary.json"), &summary)?;
    }
    ctx.record("bootstrap", base.seed, &[LATENT, SURFACE], &["bootstrap"])
}

pub fn report(ctx: &mut Context) -> Result<()> {
    let inputs = crate::report::write_report(&ctx.out, &ctx.path("report"))?;
    let seed = ctx.cfg.seed;
    let inputs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    ctx.record("report", seed, &inputs, &["report"])
}

pub fn run_all(ctx: &mut Context) -> Result<()> {
    if ctx.cfg.data.returns.is_some() {
        ingest(ctx)?;
    } else {
        synthdata(ctx)?;
    }
    train(ctx)?;
    encode(ctx)?;
    generate(ctx)?;
    facts(ctx)?;
    var(ctx, None, None)?;
    surface(ctx)?;
    bootstrap(ctx)?;
    report(ctx)
}
