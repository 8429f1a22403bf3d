use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use causaltrade_core::discovery::{
    bge_score, compare_graphs, eval_against_truth, search, skeleton_scores, BgeHyper, GraphAccuracy, OverlapReport,
    SearchConfig, SkeletonScores,
};
use causaltrade_core::fairmetrics::{MetricSummary, PredictionTable};
use causaltrade_core::inference::{effect_for, DmlConfig, EffectEstimate, Nuisance};
use causaltrade_core::scm::{random_scm, ScmConfig};
use causaltrade_core::select::{select_methods, Objective};
use causaltrade_core::tradeoff::{aggregate, analyze, export_report, TradeoffQuery};
use causaltrade_core::{load_run_table_with, AteQuery, CausalGraph, ObservationMatrix, Study};

/// Causal trade-off analysis for ML pipelines.
#[derive(Debug, Parser)]
#[command(name = "causaltrade", version, about)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Suppress progress messages on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a random SCM and write runs.csv, truth.json, study.json and scm.json.
    Simulate(SimulateArgs),
    /// Compute fairness and accuracy metrics from a prediction table.
    Metrics(MetricsArgs),
    /// Learn a causal graph from a run table.
    Discover(DiscoverArgs),
    /// Print the BGe score of a graph on a run table.
    Score(ScoreArgs),
    /// Compare two graphs; the second acts as the reference.
    Compare(CompareArgs),
    /// Estimate an average treatment effect.
    Ate(AteArgs),
    /// Detect trade-offs between metric pairs and identify their causes.
    Tradeoff(TradeoffArgs),
    /// Choose method ratios that optimize a weighted objective.
    Select(SelectArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Total number of variables.
    #[arg(long, default_value_t = 8)]
    nodes: usize,
    /// How many of them are interventional method ratios.
    #[arg(long, default_value_t = 3)]
    interventional: usize,
    /// Number of runs to sample.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Expected number of parents per node.
    #[arg(long, default_value_t = 2.0)]
    in_degree: f64,
    /// Standard deviation of the additive noise.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Smallest absolute edge weight.
    #[arg(long, default_value_t = 0.5)]
    weight_min: f64,
    /// Largest absolute edge weight.
    #[arg(long, default_value_t = 2.0)]
    weight_max: f64,
    /// Use tanh mechanisms instead of linear ones.
    #[arg(long)]
    nonlinear: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// CSV with columns sensitive,label,prediction,f1..fd.
    #[arg(long)]
    predictions: PathBuf,
    /// Neighbours used by the consistency metric.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Run table CSV.
    #[arg(long)]
    data: PathBuf,
    /// Study configuration JSON.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct DiscoverArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Search restarts; the first starts from the empty graph.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Maximum parents per node; 0 means unlimited.
    #[arg(long, default_value_t = 4)]
    max_in_degree: usize,
    /// Forbid edges pointing to an earlier pipeline stage.
    #[arg(long)]
    tiers: bool,
    /// Output graph JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write a Graphviz rendering here.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Causal graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Graph to evaluate.
    first: PathBuf,
    /// Reference graph.
    second: PathBuf,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NuisanceKind {
    Ridge,
    Knn,
}

#[derive(Debug, Args)]
struct DmlArgs {
    /// Cross-fitting folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Regressor used for the nuisance functions.
    #[arg(long, value_enum, default_value_t = NuisanceKind::Ridge)]
    nuisance: NuisanceKind,
    /// Ridge penalty.
    #[arg(long, default_value_t = 1e-3)]
    ridge_lambda: f64,
    /// Neighbours for the kNN regressor.
    #[arg(long, default_value_t = 10)]
    knn_k: usize,
}

impl DmlArgs {
    fn config(&self, seed: u64) -> DmlConfig {
        DmlConfig {
            folds: self.folds,
            nuisance: match self.nuisance {
                NuisanceKind::Ridge => Nuisance::LinearRidge {
                    lambda: self.ridge_lambda,
                },
                NuisanceKind::Knn => Nuisance::KNearest { k: self.knn_k },
            },
            seed,
            ..DmlConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct AteArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Causal graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Treatment variable.
    #[arg(long)]
    treatment: String,
    /// Outcome variable.
    #[arg(long)]
    outcome: String,
    /// Treatment level whose outcome is compared.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    x1: f64,
    /// Baseline treatment level.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x2: f64,
    #[command(flatten)]
    dml: DmlArgs,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TradeoffArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Causal graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Comma-separated methods; default: every interventional variable.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Comma-separated metric pairs written X:Y.
    #[arg(long, value_delimiter = ',', required = true)]
    pairs: Vec<String>,
    /// Ratio at which a method counts as applied.
    #[arg(long, default_value_t = 1.0)]
    t_on: f64,
    /// Ratio at which a method counts as not applied.
    #[arg(long, default_value_t = 0.0)]
    t_off: f64,
    #[command(flatten)]
    dml: DmlArgs,
    /// Output report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write a Graphviz rendering here.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Causal graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Objective JSON: {"terms": [{"metric": ..., "weight": ...}]}.
    #[arg(long)]
    objective: PathBuf,
    /// Comma-separated candidate methods; default: every interventional variable.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Spacing of candidate ratios in (0, 1].
    #[arg(long, default_value_t = 0.1)]
    grid_step: f64,
    /// Most methods a plan may switch on.
    #[arg(long, default_value_t = 2)]
    max_active: usize,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad flag values detected after parsing; exits like a parse error.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Writes via a temporary sibling and a rename so readers never see a partial file.
    fn write(&self, p: &Path, contents: &str) -> anyhow::Result<PathBuf> {
        let path = self.path(p);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let name = path
            .file_name()
            .ok_or_else(|| usage(format!("output path {} has no file name", path.display())))?;
        let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
        fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
        self.note(format!("wrote {}", path.display()));
        Ok(path)
    }

    /// Writes to `out` when given, standard output otherwise.
    fn emit(&self, out: Option<&Path>, contents: &str) -> anyhow::Result<()> {
        match out {
            Some(p) => self.write(p, contents).map(|_| ()),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(contents.as_bytes())
                    .context("writing standard output")?;
                Ok(())
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn load_inputs(input: &DataArgs) -> anyhow::Result<(Study, ObservationMatrix)> {
    let study = Study::load(&input.config).with_context(|| format!("--config {}", input.config.display()))?;
    let data = load_run_table_with(&input.data, &study).with_context(|| format!("--data {}", input.data.display()))?;
    Ok((study, data))
}

fn load_graph(path: &Path, study: &Study) -> anyhow::Result<CausalGraph> {
    CausalGraph::load(path, Some(&study.variables)).with_context(|| format!("--graph {}", path.display()))
}

fn methods_or_all(given: &[String], study: &Study) -> Vec<String> {
    if given.is_empty() {
        study
            .variables
            .iter()
            .filter(|v| v.is_interventional())
            .map(|v| v.name.clone())
            .collect()
    } else {
        given.to_vec()
    }
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> anyhow::Result<()> {
    let cfg = ScmConfig {
        n_nodes: a.nodes,
        n_interventional: a.interventional,
        expected_in_degree: a.in_degree,
        weight_range: (a.weight_min, a.weight_max),
        noise_sigma: a.noise,
        nonlinear: a.nonlinear,
        seed: ctx.seed,
    };
    let scm = random_scm(&cfg).map_err(|e| usage(format!("simulate: {e}")))?;
    if a.n < 2 {
        return Err(usage("--n must be at least 2"));
    }
    // Sampling gets its own stream so changing --n never changes the SCM.
    let data = scm.sample(a.n, ctx.seed.wrapping_add(1))?;
    let study = Study::new(scm.variables().to_vec())?;
    ctx.write(Path::new("runs.csv"), &data.to_csv())?;
    ctx.write(Path::new("truth.json"), &scm.graph().to_json())?;
    ctx.write(Path::new("study.json"), &study.to_json())?;
    ctx.write(Path::new("scm.json"), &scm.to_json())?;
    Ok(())
}

fn metrics(ctx: &Ctx, a: &MetricsArgs) -> anyhow::Result<()> {
    let table =
        PredictionTable::load(&a.predictions).with_context(|| format!("--predictions {}", a.predictions.display()))?;
    let summary =
        MetricSummary::compute(&table, a.k).with_context(|| format!("--predictions {}", a.predictions.display()))?;
    ctx.emit(a.out.as_deref(), &summary.to_csv())
}

fn discover(ctx: &Ctx, a: &DiscoverArgs) -> anyhow::Result<()> {
    let (_, data) = load_inputs(&a.input)?;
    let cfg = SearchConfig {
        restarts: a.restarts,
        max_in_degree: (a.max_in_degree > 0).then_some(a.max_in_degree),
        tier_constraints: a.tiers,
        seed: ctx.seed,
        ..SearchConfig::default()
    };
    if cfg.restarts == 0 {
        return Err(usage("--restarts must be at least 1"));
    }
    let result = search(&data, data.variables(), &BgeHyper::default(), &cfg)?;
    ctx.note(format!(
        "learned {} edges, BGe score {:.4} (restart {})",
        result.graph.edge_count(),
        result.score,
        result.restart
    ));
    ctx.write(&a.out, &result.graph.to_json())?;
    if let Some(dot) = &a.dot {
        ctx.write(dot, &result.graph.to_dot())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoreOutput {
    score: f64,
}

fn score(ctx: &Ctx, a: &ScoreArgs) -> anyhow::Result<()> {
    let (study, data) = load_inputs(&a.input)?;
    let g = load_graph(&a.graph, &study)?;
    let score = bge_score(&data, &g, &BgeHyper::default())?;
    ctx.emit(a.out.as_deref(), &to_json(&ScoreOutput { score }))
}

#[derive(Serialize)]
struct CompareOutput {
    overlap: OverlapReport,
    accuracy: GraphAccuracy,
    skeleton: SkeletonScores,
}

fn compare(ctx: &Ctx, a: &CompareArgs) -> anyhow::Result<()> {
    let g1 = CausalGraph::load(&a.first, None).with_context(|| format!("first graph {}", a.first.display()))?;
    let g2 = CausalGraph::load(&a.second, None).with_context(|| format!("second graph {}", a.second.display()))?;
    let ctx_msg = || format!("comparing {} with {}", a.first.display(), a.second.display());
    let out = CompareOutput {
        overlap: compare_graphs(&g1, &g2).with_context(ctx_msg)?,
        accuracy: eval_against_truth(&g1, &g2).with_context(ctx_msg)?,
        skeleton: skeleton_scores(&g1, &g2).with_context(ctx_msg)?,
    };
    ctx.emit(a.out.as_deref(), &to_json(&out))
}

#[derive(Serialize)]
struct AteOutput {
    treatment: String,
    outcome: String,
    x1: f64,
    x2: f64,
    ate: f64,
    #[serde(flatten)]
    estimate: EffectEstimate,
}

fn ate(ctx: &Ctx, a: &AteArgs) -> anyhow::Result<()> {
    let (study, data) = load_inputs(&a.input)?;
    let g = load_graph(&a.graph, &study)?;
    let q = AteQuery::new(&a.treatment, &a.outcome, a.x1, a.x2)
        .map_err(|e| usage(format!("--treatment/--outcome: {e}")))?;
    let cfg = a.dml.config(ctx.seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let estimate = effect_for(&data, &g, &q, &cfg)?;
    let out = AteOutput {
        ate: estimate.theta * (q.x1 - q.x2),
        treatment: q.treatment,
        outcome: q.outcome,
        x1: q.x1,
        x2: q.x2,
        estimate,
    };
    ctx.emit(a.out.as_deref(), &to_json(&out))
}

fn parse_pair(s: &str) -> anyhow::Result<(String, String)> {
    match s.split_once(':') {
        Some((x, y)) if !x.is_empty() && !y.is_empty() && !y.contains(':') => Ok((x.to_string(), y.to_string())),
        _ => Err(usage(format!("--pairs entry `{s}` must look like X:Y"))),
    }
}

fn tradeoff(ctx: &Ctx, a: &TradeoffArgs) -> anyhow::Result<()> {
    let (study, data) = load_inputs(&a.input)?;
    let g = load_graph(&a.graph, &study)?;
    let cfg = a.dml.config(ctx.seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let methods = methods_or_all(&a.methods, &study);
    if methods.is_empty() {
        return Err(usage("no methods: pass --methods or mark variables interventional"));
    }
    let mut queries = Vec::new();
    for p in &a.pairs {
        let (x, y) = parse_pair(p)?;
        let qs = methods
            .iter()
            .map(|m| {
                TradeoffQuery::with_levels(m, &x, &y, a.t_on, a.t_off).map_err(|e| usage(format!("--pairs {p}: {e}")))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        queries.push(qs);
    }
    let groups = queries
        .par_iter()
        .map(|qs| {
            let analyses = qs
                .par_iter()
                .map(|q| analyze(&data, &g, q, &cfg).with_context(|| format!("method {} on {}:{}", q.method, q.x, q.y)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let table = aggregate(&analyses)?;
            Ok((table, analyses))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    for (t, _) in &groups {
        ctx.note(format!(
            "{}:{} trade-off under {} of {} methods",
            t.x, t.y, t.count, t.methods_analyzed
        ));
    }
    let report = export_report(&groups);
    ctx.write(&a.out, &report.to_json())?;
    if let Some(dot) = &a.dot {
        ctx.write(dot, &report.to_dot(&g))?;
    }
    Ok(())
}

fn select(ctx: &Ctx, a: &SelectArgs) -> anyhow::Result<()> {
    let (study, data) = load_inputs(&a.input)?;
    let g = load_graph(&a.graph, &study)?;
    let objective =
        Objective::load(&a.objective, &study).with_context(|| format!("--objective {}", a.objective.display()))?;
    if !(a.grid_step > 0.0 && a.grid_step <= 0.5) {
        return Err(usage(format!("--grid-step must be in (0, 0.5], got {}", a.grid_step)));
    }
    if a.max_active == 0 {
        return Err(usage("--max-active must be at least 1"));
    }
    let methods = methods_or_all(&a.methods, &study);
    let plan = select_methods(&data, &g, &objective, &methods, a.grid_step, a.max_active)?;
    ctx.emit(a.out.as_deref(), &plan.to_json())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("--threads: {e}"))?;
    }
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Metrics(a) => metrics(&ctx, a),
        Command::Discover(a) => discover(&ctx, a),
        Command::Score(a) => score(&ctx, a),
        Command::Compare(a) => compare(&ctx, a),
        Command::Ate(a) => ate(&ctx, a),
        Command::Tradeoff(a) => tradeoff(&ctx, a),
        Command::Select(a) => select(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
