//! `mmtensor`: build subject tensors, fit models, run benchmarks and sweeps,
//! and report ROI and modality rankings.

mod manifest;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mmtensor::baselines::Grouping;
use mmtensor::data::{
    generate_graph_cohort, generate_synthetic, load_cohort, write_cohort, AffineMap, CohortTable,
    GraphSynthConfig, Score, SynthConfig, TensorDump,
};
use mmtensor::evaluation::{
    cross_validate, fit_method, modality_mode, roi_ranking, run_benchmark_logged, sweep_k, sweep_rank,
    write_curve_csv, BenchmarkInput, FittedModel, Hyperparams, Method,
};
use mmtensor::seed::derive_seed;
use mmtensor::{Dataset, ErrorClass, GraphConfig, Modality, Representation, UnitRankTensor};

use manifest::{load_settings, Manifest, Settings};

#[derive(Parser)]
#[command(name = "mmtensor", version, about = "Sparse low-rank tensor regression on multi-modality ROI data")]
struct Cli {
    /// Base seed of every random stream (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trials, folds and grid points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// TOML or JSON settings file, or a manifest written by an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build subject tensors from a cohort CSV.
    Construct(ConstructArgs),
    /// Fit one model.
    Fit(FitArgs),
    /// Compare methods over repeated train/test trials.
    Benchmark(BenchmarkArgs),
    /// Test RMSE and sparsity against k or the rank.
    Sweep(SweepArgs),
    /// ROI and modality rankings from saved models.
    Report(ReportArgs),
    /// Generate synthetic data with a planted sparse low-rank signal.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RepKind {
    Concat,
    Connectivity,
    Stack,
}

#[derive(Args, Clone)]
struct GraphArgs {
    /// Neighbours kept per ROI (116 = fully connected).
    #[arg(long)]
    k: Option<usize>,
    /// Gaussian kernel width.
    #[arg(long)]
    sigma: Option<f64>,
}

impl GraphArgs {
    fn config(&self, settings: &Settings) -> mmtensor::Result<GraphConfig> {
        let g = GraphConfig {
            k: self.k.unwrap_or(settings.graph.k),
            sigma: self.sigma.unwrap_or(settings.graph.sigma),
            ..settings.graph
        };
        g.validate()?;
        Ok(g)
    }

    fn representation(&self, kind: RepKind, settings: &Settings) -> mmtensor::Result<Representation> {
        let g = self.config(settings)?;
        Ok(match kind {
            RepKind::Concat => Representation::Concat,
            RepKind::Connectivity => Representation::Connectivity(g),
            RepKind::Stack => Representation::Stack(g),
        })
    }
}

#[derive(Args)]
struct ConstructArgs {
    /// Cohort CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    representation: RepKind,
    #[command(flatten)]
    graph: GraphArgs,
    /// Embed this normalized score as the response of every subject.
    #[arg(long)]
    score: Option<Score>,
    /// Check that every graph is symmetric with a unit diagonal.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct InputArgs {
    /// Cohort CSV, or a tensor dump (JSON) with responses.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    graph: GraphArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    ByModality,
    ByRoi,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::ByModality => Grouping::ByModality,
            GroupingArg::ByRoi => Grouping::ByRoi,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "concat")]
    representation: RepKind,
    #[arg(long, default_value = "DSS")]
    score: Score,
    #[arg(long)]
    method: Method,
    /// Proposed: number of unit-rank terms.
    #[arg(long)]
    max_rank: Option<usize>,
    /// Lasso and Elastic Net penalty.
    #[arg(long)]
    lambda: Option<f64>,
    /// Elastic Net ℓ1 share.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda_group: Option<f64>,
    #[arg(long)]
    lambda_l1: Option<f64>,
    #[arg(long, value_enum)]
    grouping: Option<GroupingArg>,
    /// PCA + least squares: share of components kept.
    #[arg(long)]
    fraction: Option<f64>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Representations to compare (cohort input only).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "concat")]
    representations: Vec<RepKind>,
    #[arg(long, value_delimiter = ',', default_value = "pca_lr,lasso,enet,glasso,proposed")]
    methods: Vec<Method>,
    /// Scores to predict (cohort input only).
    #[arg(long, value_delimiter = ',', default_value = "DSS,ADAS13,MMSE")]
    scores: Vec<Score>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    K,
    Rank,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    kind: SweepKind,
    /// Values to sweep: a comma list whose items may be ranges `a..b`
    /// (inclusive).
    #[arg(long)]
    values: String,
    #[arg(long, value_enum, default_value = "connectivity")]
    representation: RepKind,
    #[arg(long, default_value = "DSS")]
    score: Score,
    /// Rank used at every point of a k sweep.
    #[arg(long, default_value_t = 60)]
    rank: usize,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of saved model JSON files.
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    top_n: Option<usize>,
    /// Only use models of this method.
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Random tensors with responses, written as a tensor dump.
    Tensor,
    /// Random ROI measures with scores, written as a cohort CSV.
    Cohort,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Tensor shape (tensor kind), e.g. 20,20,3.
    #[arg(long, value_delimiter = ',', default_value = "20,20,3")]
    shape: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Layout carrying the planted signal (cohort kind).
    #[arg(long, value_enum, default_value = "connectivity")]
    representation: RepKind,
    #[command(flatten)]
    graph: GraphArgs,
    /// Standard deviation of the ROI measures (cohort kind).
    #[arg(long, default_value_t = 0.5)]
    feature_scale: f64,
}

/// Bad flag combination detected after parsing.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A `--verify` check failed.
#[derive(Debug)]
struct VerifyError(String);

impl fmt::Display for VerifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerifyError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_SCHEMA: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mmtensor::Error>() {
            return match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::InputSchema => EXIT_SCHEMA,
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            };
        }
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<VerifyError>() {
            return EXIT_NUMERICAL;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_SCHEMA;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Collects output files and writes the manifest last.
struct Run {
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.add_input(path)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finish();
        let json = serde_json::to_string_pretty(&self.manifest)?;
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join("manifest.json");
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(p) => load_settings(p)?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        settings.seed = seed;
    }
    settings.protocol.seed = settings.seed;
    settings.protocol.fit.seed = settings.seed;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("starting the worker pool")?;
    }
    let name = match &cli.command {
        Command::Construct(_) => "construct",
        Command::Fit(_) => "fit",
        Command::Benchmark(_) => "benchmark",
        Command::Sweep(_) => "sweep",
        Command::Report(_) => "report",
        Command::Synth(_) => "synth",
    };
    let mut run = Run {
        out: cli.out.clone(),
        manifest: Manifest::start(name, &settings),
    };
    match &cli.command {
        Command::Construct(a) => construct(a, &settings, &mut run)?,
        Command::Fit(a) => fit(a, &settings, &mut run)?,
        Command::Benchmark(a) => benchmark(a, &mut settings, &mut run)?,
        Command::Sweep(a) => sweep(a, &mut settings, &mut run)?,
        Command::Report(a) => report(a, &settings, &mut run)?,
        Command::Synth(a) => synth(a, &settings, &mut run)?,
    }
    run.manifest.settings = settings;
    run.finish()
}

fn is_dump(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

enum Source {
    Cohort(CohortTable),
    Dump(TensorDump),
}

fn load_source(path: &Path, run: &mut Run) -> Result<Source> {
    run.input(path)?;
    if is_dump(path) {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Source::Dump(
            TensorDump::from_json(&text).with_context(|| format!("parsing {}", path.display()))?,
        ))
    } else {
        Ok(Source::Cohort(
            load_cohort(path).with_context(|| format!("loading {}", path.display()))?,
        ))
    }
}

fn shape_label(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

impl Source {
    /// Dataset and its representation label. Dumps carry their own tensors
    /// and responses, so `rep` and `score` only apply to cohorts.
    fn dataset(&self, rep: &Representation, score: Score, settings: &Settings) -> Result<(Dataset, String)> {
        match self {
            Source::Cohort(t) => Ok((t.dataset(rep, score, settings.cohort_min_max)?, rep.label())),
            Source::Dump(d) => {
                if d.subjects.iter().any(|s| s.response.is_none()) {
                    return Err(mmtensor::Error::InvalidArgument(
                        "tensor dump has subjects without a response".into(),
                    )
                    .into());
                }
                let label = d.representation.map_or_else(|| shape_label(&d.shape), |r| r.label());
                Ok((d.to_dataset(None)?, label))
            }
        }
    }
}

fn construct(a: &ConstructArgs, settings: &Settings, run: &mut Run) -> Result<()> {
    run.input(&a.input)?;
    let table = load_cohort(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    let rep = a.graph.representation(a.representation, settings)?;
    let ds = table.dataset(&rep, a.score.unwrap_or(Score::Dss), settings.cohort_min_max)?;
    if a.verify {
        verify_graphs(&ds, &rep)?;
        println!("verified {} subject tensors of shape {:?}", ds.len(), ds.shape());
    }
    let dump = TensorDump::from_dataset(&ds, Some(rep), a.score.is_some());
    run.write("tensors.json", dump.to_json()?)?;
    println!("wrote {} tensors of shape {:?}", ds.len(), ds.shape());
    Ok(())
}

/// Every 116 × 116 slice must be symmetric with ones on the diagonal.
fn verify_graphs(ds: &Dataset, rep: &Representation) -> Result<()> {
    let slices = match rep {
        Representation::Concat => return Ok(()),
        Representation::Connectivity(_) => 1,
        Representation::Stack(_) => 3,
    };
    let n = ds.shape()[0];
    for (s, id) in ds.ids().iter().enumerate() {
        let t = ds.tensor(s);
        for m in 0..slices {
            let at = |i: usize, j: usize| {
                if slices == 1 {
                    t.get(&[i, j])
                } else {
                    t.get(&[i, j, m])
                }
            };
            for i in 0..n {
                if at(i, i) != 1.0 {
                    return Err(VerifyError(format!("subject {id}: diagonal entry {i} is {}", at(i, i))).into());
                }
                for j in 0..i {
                    if at(i, j) != at(j, i) {
                        return Err(VerifyError(format!("subject {id}: entries ({i}, {j}) and ({j}, {i}) differ")).into());
                    }
                }
            }
        }
    }
    Ok(())
}

/// Hyperparameters given on the command line, or `None` when some are
/// missing and the protocol grid should be searched instead.
fn explicit_hyper(a: &FitArgs) -> Result<Option<Hyperparams>> {
    let h = match a.method {
        Method::Proposed => a.max_rank.map(|max_rank| Hyperparams::Proposed { max_rank }),
        Method::Lasso => a.lambda.map(|lambda| Hyperparams::Lasso { lambda }),
        Method::Enet => match (a.lambda, a.alpha) {
            (Some(lambda), Some(alpha)) => Some(Hyperparams::Enet { lambda, alpha }),
            (None, None) => None,
            _ => return Err(usage("enet needs both --lambda and --alpha, or neither")),
        },
        Method::Glasso => match (a.lambda_group, a.lambda_l1, a.grouping) {
            (Some(lambda_group), Some(lambda_l1), Some(g)) => Some(Hyperparams::Glasso {
                lambda_group,
                lambda_l1,
                grouping: g.into(),
            }),
            (None, None, None) => None,
            _ => {
                return Err(usage(
                    "glasso needs --lambda-group, --lambda-l1 and --grouping together, or none of them",
                ))
            }
        },
        Method::PcaLr => a.fraction.map(|fraction| Hyperparams::PcaLr { fraction }),
    };
    Ok(h)
}

#[derive(Serialize)]
struct FitDiagnostics {
    method: Method,
    hyperparams: Hyperparams,
    /// Mean validation RMSE when the hyperparameters were tuned.
    cv_rmse: Option<f64>,
    representation: String,
    n_subjects: usize,
    shape: Vec<usize>,
    train_rmse: f64,
    sparsity: f64,
    nonzero: usize,
    rank: Option<usize>,
    train_rmse_path: Option<Vec<f64>>,
    converged: bool,
}

fn fit(a: &FitArgs, settings: &Settings, run: &mut Run) -> Result<()> {
    let source = load_source(&a.input.input, run)?;
    let rep = a.input.graph.representation(a.representation, settings)?;
    let (ds, label) = source.dataset(&rep, a.score, settings)?;
    let p = &settings.protocol;
    let (hyper, cv_rmse) = match explicit_hyper(a)? {
        Some(h) => (h, None),
        None => {
            let grid = p.grids.candidates(a.method, ds.shape());
            let cv = cross_validate(&ds, &grid, p, derive_seed(settings.seed, &[0]))?;
            (cv.best, Some(cv.best_rmse))
        }
    };
    let model = fit_method(&ds, &hyper, &p.fit, &p.baseline, derive_seed(settings.seed, &[1]))?;
    let pred = model.predict_all(&ds)?;
    let coef = model.coefficient_tensor()?;
    let (rank, path, converged) = match &model {
        FittedModel::Proposed(m) => (
            Some(m.rank()),
            Some(m.train_rmse_path.clone()),
            m.components.iter().all(|c| c.diagnostics.converged),
        ),
        FittedModel::Linear(l) => (None, None, l.diagnostics.converged),
    };
    let diag = FitDiagnostics {
        method: a.method,
        hyperparams: hyper,
        cv_rmse,
        representation: label,
        n_subjects: ds.len(),
        shape: ds.shape().to_vec(),
        train_rmse: mmtensor::evaluation::rmse(ds.responses(), &pred)?,
        sparsity: model.sparsity(p.zero_tol),
        nonzero: coef.values().iter().filter(|v| v.abs() > p.zero_tol).count(),
        rank,
        train_rmse_path: path,
        converged,
    };
    run.write("model.json", model.to_json()?)?;
    run.write("diagnostics.json", serde_json::to_string_pretty(&diag)?)?;
    println!(
        "{} {}: train RMSE {:.6}, sparsity {:.2}%, {} nonzero coefficients",
        a.method,
        hyper.describe(),
        diag.train_rmse,
        diag.sparsity,
        diag.nonzero
    );
    Ok(())
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn benchmark(a: &BenchmarkArgs, settings: &mut Settings, run: &mut Run) -> Result<()> {
    if let Some(t) = a.trials {
        settings.protocol.n_trials = t;
    }
    if let Some(f) = a.folds {
        settings.protocol.cv_folds = f;
    }
    let source = load_source(&a.input.input, run)?;
    let mut inputs = Vec::new();
    match &source {
        Source::Cohort(_) => {
            for &kind in &a.representations {
                let rep = a.input.graph.representation(kind, settings)?;
                for &score in &a.scores {
                    let (dataset, label) = source.dataset(&rep, score, settings)?;
                    inputs.push(BenchmarkInput {
                        dataset,
                        representation: label,
                        score: score.to_string(),
                    });
                }
            }
        }
        Source::Dump(_) => {
            let (dataset, label) = source.dataset(&Representation::Concat, Score::Dss, settings)?;
            inputs.push(BenchmarkInput {
                dataset,
                representation: label,
                score: "response".into(),
            });
        }
    }
    let result = run_benchmark_logged(&inputs, &a.methods, &settings.protocol, None)?;
    let report = &result.report;
    run.write("report.json", report.to_json()?)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    run.write("report.csv", csv)?;
    let mut summary = Vec::new();
    report.write_summary_csv(&mut summary)?;
    run.write("summary.csv", summary)?;
    for (r, m) in report.records.iter().zip(&result.models) {
        let name = format!(
            "models/{}_{}_{}_trial{}.json",
            file_stem(&r.representation),
            file_stem(&r.score),
            r.method,
            r.trial
        );
        run.write(&name, m.to_json()?)?;
    }
    for agg in &report.aggregates {
        println!(
            "{:<8} {:<20} {:<9} RMSE {:.4} ± {:.4}  sparsity {:.2} ± {:.2}",
            agg.method.name(),
            agg.representation,
            agg.score,
            agg.rmse_mean,
            agg.rmse_std,
            agg.sparsity_mean,
            agg.sparsity_std
        );
    }
    Ok(())
}

/// Parse `1,2,5..8` into `[1, 2, 5, 6, 7, 8]`.
fn parse_values(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let bad = || usage(format!("cannot read `{item}` as a value or an a..b range"));
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if hi < lo {
                return Err(bad());
            }
            out.extend(lo..=hi);
        } else {
            out.push(item.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(usage("no sweep values given"));
    }
    Ok(out)
}

fn sweep(a: &SweepArgs, settings: &mut Settings, run: &mut Run) -> Result<()> {
    if let Some(t) = a.trials {
        settings.protocol.n_trials = t;
    }
    let values = parse_values(&a.values)?;
    let source = load_source(&a.input.input, run)?;
    let rep = a.input.graph.representation(a.representation, settings)?;
    let (curve, name, column) = match a.kind {
        SweepKind::Rank => {
            let (ds, _) = source.dataset(&rep, a.score, settings)?;
            (sweep_rank(&ds, &values, &settings.protocol)?, "curve_rank.csv", "rank")
        }
        SweepKind::K => {
            let Source::Cohort(table) = &source else {
                return Err(usage("a k sweep rebuilds the graphs, so it needs a cohort CSV"));
            };
            if matches!(rep, Representation::Concat) {
                return Err(usage("a k sweep needs --representation connectivity or stack"));
            }
            let build = |r: &Representation| table.dataset(r, a.score, settings.cohort_min_max);
            (sweep_k(build, rep, &values, a.rank, &settings.protocol)?, "curve_k.csv", "k")
        }
    };
    let mut csv = Vec::new();
    write_curve_csv(&curve, column, &mut csv)?;
    run.write(name, csv)?;
    for p in &curve {
        println!(
            "{column} = {:>3}: RMSE {:.4} ± {:.4}  sparsity {:.2} ± {:.2}{}",
            p.value,
            p.rmse_mean,
            p.rmse_std,
            p.sparsity_mean,
            p.sparsity_std,
            if p.fully_connected == Some(true) { "  (fully connected)" } else { "" }
        );
    }
    Ok(())
}

fn report(a: &ReportArgs, settings: &Settings, run: &mut Run) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.models)
        .with_context(|| format!("listing {}", a.models.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    let mut models = Vec::new();
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let m = FittedModel::from_json(&text).with_context(|| format!("parsing {}", p.display()))?;
        if a.method.is_none_or(|want| want == m.method()) {
            run.input(p)?;
            models.push(m);
        }
    }
    if models.is_empty() {
        return Err(usage(format!("no matching models in {}", a.models.display())));
    }
    let top_n = a.top_n.unwrap_or(settings.protocol.top_n);
    let coefs = models
        .iter()
        .map(FittedModel::coefficient_tensor)
        .collect::<mmtensor::Result<Vec<_>>>()?;
    let ranking = roi_ranking(&coefs, top_n, settings.protocol.zero_tol)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "roi", "label", "frequency", "mean_abs"])?;
    for (i, r) in ranking.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            (r.roi + 1).to_string(),
            r.label.clone().unwrap_or_default(),
            r.frequency.to_string(),
            r.mean_abs.to_string(),
        ])?;
    }
    run.write("roi_ranking.csv", w.into_inner().context("flushing the ROI ranking")?)?;

    let mut sums = [0.0; 3];
    let mut counted = 0usize;
    for m in &models {
        if let FittedModel::Proposed(r) = m {
            if let Some(mode) = modality_mode(&r.input_shape) {
                for (modality, v) in r.modality_contribution(mode)? {
                    sums[modality as usize] += v;
                }
                counted += 1;
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "modality", "mean_abs_weight"])?;
    if counted > 0 {
        let mut order: Vec<(Modality, f64)> =
            Modality::ALL.iter().map(|&m| (m, sums[m as usize] / counted as f64)).collect();
        order.sort_by(|x, y| y.1.total_cmp(&x.1));
        for (i, (m, v)) in order.iter().enumerate() {
            w.write_record([(i + 1).to_string(), m.to_string(), v.to_string()])?;
        }
    }
    run.write("modality_contribution.csv", w.into_inner().context("flushing the modality ranking")?)?;

    println!("{} models; top {} ROIs:", models.len(), ranking.len());
    for (i, r) in ranking.iter().enumerate() {
        println!(
            "{:>3}. {:<24} selected {} times, mean |w| {:.4}",
            i + 1,
            r.label.clone().unwrap_or_else(|| format!("ROI {}", r.roi + 1)),
            r.frequency,
            r.mean_abs
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Truth<'a, C: Serialize> {
    config: &'a C,
    map: AffineMap,
    components: &'a [UnitRankTensor],
    /// `Σ_r W_r` flattened in row-major order.
    coefficients: Vec<f64>,
    shape: Vec<usize>,
}

fn synth(a: &SynthArgs, settings: &Settings, run: &mut Run) -> Result<()> {
    match a.kind {
        SynthKind::Tensor => {
            let cfg = SynthConfig {
                n_subjects: a.n,
                shape: a.shape.clone(),
                true_rank: a.rank,
                support_density: a.density,
                noise_std: a.noise,
                seed: settings.seed,
                normalize_signal: true,
            };
            let data = generate_synthetic(&cfg)?;
            let truth = data.truth_tensor();
            run.write(
                "tensors.json",
                TensorDump::from_dataset(&data.dataset, None, true).to_json()?,
            )?;
            let t = Truth {
                config: &cfg,
                map: data.map,
                components: &data.truth,
                coefficients: truth.values().to_vec(),
                shape: truth.shape().to_vec(),
            };
            run.write("truth.json", serde_json::to_string_pretty(&t)?)?;
            println!("wrote {} subjects of shape {:?}", a.n, a.shape);
        }
        SynthKind::Cohort => {
            let cfg = GraphSynthConfig {
                n_subjects: a.n,
                feature_scale: a.feature_scale,
                representation: a.graph.representation(a.representation, settings)?,
                true_rank: a.rank,
                support_density: a.density,
                noise_std: a.noise,
                seed: settings.seed,
                normalize_signal: true,
            };
            let cohort = generate_graph_cohort(&cfg)?;
            let mut csv = Vec::new();
            write_cohort(&mut csv, &cohort.table)?;
            run.write("cohort.csv", csv)?;
            let shape = cfg.representation.shape();
            let mut coef = mmtensor::DenseTensor::zeros(&shape)?;
            for w in &cohort.truth {
                coef.add_assign(&w.materialize())?;
            }
            let t = Truth {
                config: &cfg,
                map: cohort.map,
                components: &cohort.truth,
                coefficients: coef.values().to_vec(),
                shape,
            };
            run.write("truth.json", serde_json::to_string_pretty(&t)?)?;
            println!("wrote a {}-subject cohort with signal on {}", a.n, cfg.representation.label());
        }
    }
    Ok(())
}
