//! Command-line pipelines: benchmark generation, model-order estimation,
//! detection, the aggregated-average baseline, evaluation, and parameter
//! sweeps. Every subcommand is fully deterministic given `--seed`
//! (or the `MXPLEX_SEED` environment variable), and every output directory
//! carries a manifest sufficient to regenerate it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::assign::QjRule;
use crate::benchgen::{generate, BenchmarkSpec};
use crate::factorize::{
    argmax_labels, run_restarts, single_layer_onmtf, Detection, FitOptions, Selector,
};
use crate::metrics::{mean_modularity_density, modularity_density, multiplex_nmi};
use crate::model_order::{
    estimate_k_layer, estimate_model_order, null_threshold, CutRule, EstimateOptions,
    LinkageMethod, ModelOrder,
};
use crate::multiplex::{
    load_labels, load_multiplex, save_labels, save_multiplex, MultiplexNetwork, NodeLabels,
};
use crate::numerics::RandomStream;
use crate::{Error, Result};

/// Stream index used by model-order estimation, kept far away from the
/// restart indices `0..restarts`.
const ESTIMATE_STREAM: u64 = 1 << 40;
/// Base stream index for baseline restarts.
const BASELINE_STREAM: u64 = 2 << 40;
/// Base for per-realization sweep streams.
const SWEEP_STREAM: u64 = 3 << 40;

#[derive(Parser, Debug)]
#[command(name = "mxplex", version, about = "Common/private community detection in multiplex networks")]
pub struct Cli {
    /// Cap worker threads (restarts, layers, sweep realizations).
    /// Parallelism never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic benchmark network with planted communities.
    Generate(GenerateArgs),
    /// Estimate per-layer, common, and private community counts.
    EstimateK(EstimateArgs),
    /// Detect common and private communities.
    Detect(DetectArgs),
    /// Single-matrix factorization of the layer average.
    Baseline(BaselineArgs),
    /// Score partitions against each other or against a network.
    Eval(EvalArgs),
    /// Mean metric over seeded realizations along a parameter axis.
    Sweep(SweepArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutRuleArg {
    Prose,
    Literal,
}

impl From<CutRuleArg> for CutRule {
    fn from(v: CutRuleArg) -> Self {
        match v {
            CutRuleArg::Prose => CutRule::Prose,
            CutRuleArg::Literal => CutRule::Literal,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum QjRuleArg {
    Corrected,
    Legacy,
}

impl From<QjRuleArg> for QjRule {
    fn from(v: QjRuleArg) -> Self {
        match v {
            QjRuleArg::Corrected => QjRule::Corrected,
            QjRuleArg::Legacy => QjRule::Legacy,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkageArg {
    Single,
    Average,
    Complete,
}

impl From<LinkageArg> for LinkageMethod {
    fn from(v: LinkageArg) -> Self {
        match v {
            LinkageArg::Single => LinkageMethod::Single,
            LinkageArg::Average => LinkageMethod::Average,
            LinkageArg::Complete => LinkageMethod::Complete,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectorArg {
    /// NMI against ground truth when labels are supplied, else
    /// modularity density.
    Auto,
    Nmi,
    Qd,
}

#[derive(Args, Debug, Clone)]
pub struct GenerateArgs {
    /// Output directory (network.mxplex, truth_layer_<l>.txt, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, short = 'L')]
    pub layers: usize,
    /// Number of common communities.
    #[arg(long)]
    pub kc: usize,
    /// Private communities per layer: one value broadcast, or a
    /// comma-separated list of length L.
    #[arg(long, value_delimiter = ',')]
    pub kp: Vec<usize>,
    /// Nodes reserved for common communities (default: proportional split).
    #[arg(long)]
    pub nc: Option<usize>,
    /// Community mixing in [0, 1].
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    /// Inter-layer dependency in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub p1: f64,
    #[arg(long, default_value_t = 16.0)]
    pub avg_degree: f64,
    /// Presence pattern: one 0/1 string of length L per common community,
    /// comma-separated (default: every community in every layer).
    #[arg(long)]
    pub presence: Option<String>,
    #[arg(long, env = "MXPLEX_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Node count when the file has no header and ids are sparse.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, env = "MXPLEX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Null-model trials per layer.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = CutRuleArg::Prose)]
    pub cut_rule: CutRuleArg,
    #[arg(long, value_enum, default_value_t = LinkageArg::Single)]
    pub linkage: LinkageArg,
    /// Cluster raw embedding rows instead of unit-normalized ones.
    #[arg(long)]
    pub raw_rows: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Also write the machine-readable record to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DetectArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    /// Output directory (labels_layer_<l>.txt, trace.txt, summary.json,
    /// manifest.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth label files, comma-separated (one per layer, or a
    /// single file reused for all layers). Enables the NMI selector.
    #[arg(long, value_delimiter = ',')]
    pub truth: Vec<PathBuf>,
    /// Common community count; omit together with --kp to estimate.
    #[arg(long)]
    pub kc: Option<usize>,
    /// Private counts per layer (broadcast or list); omit to estimate.
    #[arg(long, value_delimiter = ',')]
    pub kp: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, env = "MXPLEX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SelectorArg::Auto)]
    pub selector: SelectorArg,
    /// Pool layers into one label vector for the NMI selector.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long, value_enum, default_value_t = QjRuleArg::Corrected)]
    pub qj_rule: QjRuleArg,
    #[arg(long, value_enum, default_value_t = CutRuleArg::Prose)]
    pub cut_rule: CutRuleArg,
    #[arg(long, value_enum, default_value_t = LinkageArg::Single)]
    pub linkage: LinkageArg,
    /// Null-model trials per layer when estimating the order.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Rescale weights by the global maximum before fitting.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BaselineArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    /// Output directory (labels.txt, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Community count; default is the spectral-gap estimate on the
    /// averaged matrix.
    #[arg(long)]
    pub k: Option<usize>,
    /// Ground-truth labels (enables the NMI selector across restarts).
    #[arg(long, value_delimiter = ',')]
    pub truth: Vec<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, env = "MXPLEX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Reference label files (comma-separated; single file = reused).
    #[arg(long, value_delimiter = ',')]
    pub truth: Vec<PathBuf>,
    /// Predicted label files.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pred: Vec<PathBuf>,
    /// Network file; adds modularity density of the predicted labels.
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Pool layers into one label vector before scoring NMI.
    #[arg(long)]
    pub pooled: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Mu,
    P1,
    Kc,
    N,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// Parameter varied along the sweep.
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    /// Axis values, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub realizations: usize,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional SVG plot of mean NMI over the axis.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, short = 'L', default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub kc: usize,
    #[arg(long, value_delimiter = ',')]
    pub kp: Vec<usize>,
    #[arg(long)]
    pub nc: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p1: f64,
    #[arg(long, default_value_t = 16.0)]
    pub avg_degree: f64,
    #[arg(long, default_value_t = 50)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Estimate the model order per realization instead of using the
    /// planted one.
    #[arg(long)]
    pub estimate_order: bool,
    #[arg(long, env = "MXPLEX_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl Cli {
    pub fn run(self) -> Result<()> {
        match self.command {
            Command::Generate(args) => cmd_generate(&args),
            Command::EstimateK(args) => cmd_estimate_k(&args),
            Command::Detect(args) => cmd_detect(&args),
            Command::Baseline(args) => cmd_baseline(&args),
            Command::Eval(args) => cmd_eval(&args),
            Command::Sweep(args) => cmd_sweep(&args),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: C,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, seed: u64, config: C) -> Result<()> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn broadcast_kp(kp: &[usize], layers: usize) -> Result<Vec<usize>> {
    match kp.len() {
        0 => Err(Error::invalid("missing --kp")),
        1 => Ok(vec![kp[0]; layers]),
        l if l == layers => Ok(kp.to_vec()),
        l => Err(Error::invalid(format!(
            "--kp has {l} entries for {layers} layers"
        ))),
    }
}

fn parse_presence(s: &str, k_c: usize, layers: usize) -> Result<Vec<Vec<bool>>> {
    let rows: Vec<&str> = s.split(',').collect();
    if rows.len() != k_c {
        return Err(Error::invalid(format!(
            "--presence has {} rows for kc = {k_c}",
            rows.len()
        )));
    }
    rows.iter()
        .map(|row| {
            if row.len() != layers {
                return Err(Error::invalid(format!(
                    "presence row {row:?} must have {layers} digits"
                )));
            }
            row.chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(Error::invalid(format!("presence digit {other:?}"))),
                })
                .collect()
        })
        .collect()
}

fn benchmark_spec_from(args: &GenerateArgs) -> Result<BenchmarkSpec> {
    let k_p = broadcast_kp(&args.kp, args.layers)?;
    let presence = match &args.presence {
        Some(s) => parse_presence(s, args.kc, args.layers)?,
        None => BenchmarkSpec::full_presence(args.kc, args.layers),
    };
    let n_c = args
        .nc
        .unwrap_or_else(|| BenchmarkSpec::default_n_c(args.n, args.kc, &k_p));
    let spec = BenchmarkSpec {
        n: args.n,
        num_layers: args.layers,
        k_c: args.kc,
        presence,
        n_c,
        k_p,
        mu: args.mu,
        p1: args.p1,
        avg_degree: args.avg_degree,
        seed: args.seed,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let spec = benchmark_spec_from(args)?;
    let (net, truth) = generate(&spec, &RandomStream::new(spec.seed, 0))?;
    fs::create_dir_all(&args.out)?;
    save_multiplex(&net, args.out.join("network.mxplex"))?;
    for (l, labels) in truth.labels.iter().enumerate() {
        save_labels(labels, args.out.join(format!("truth_layer_{l}.txt")))?;
    }
    write_manifest(&args.out, "generate", spec.seed, &spec)?;
    println!(
        "generated n={} L={} k_c={} k_p={:?} mu={} p1={} -> {}",
        spec.n,
        spec.num_layers,
        spec.k_c,
        spec.k_p,
        spec.mu,
        spec.p1,
        args.out.display()
    );
    Ok(())
}

fn estimate_options(
    trials: usize,
    linkage: LinkageArg,
    cut_rule: CutRuleArg,
    raw_rows: bool,
    max_iters: usize,
    tol: f64,
) -> EstimateOptions {
    EstimateOptions {
        trials,
        method: linkage.into(),
        cut_rule: cut_rule.into(),
        normalize_rows: !raw_rows,
        fit: FitOptions {
            max_iters,
            tol,
            ..FitOptions::default()
        },
    }
}

pub fn cmd_estimate_k(args: &EstimateArgs) -> Result<()> {
    let net = load_multiplex(&args.network, args.n)?;
    let opts = estimate_options(
        args.trials,
        args.linkage,
        args.cut_rule,
        args.raw_rows,
        args.max_iters,
        args.tol,
    );
    let order = estimate_model_order(&net, &RandomStream::new(args.seed, ESTIMATE_STREAM), &opts)?;
    println!(
        "estimated model order for {} ({} nodes, {} layers):",
        args.network.display(),
        net.n(),
        net.num_layers()
    );
    println!("{order}");
    if let Some(out) = &args.out {
        fs::write(out, format!("{order}\n"))?;
    }
    Ok(())
}

/// Echo of the detect configuration stored in its manifest.
#[derive(Serialize)]
struct DetectConfig {
    network: String,
    restarts: usize,
    max_iters: usize,
    tol: f64,
    selector: String,
    pooled: bool,
    qj_rule: String,
    cut_rule: String,
    linkage: String,
    k_l: Vec<usize>,
    k_c: usize,
    k_p: Vec<usize>,
}

#[derive(Serialize)]
struct DetectSummary {
    k_l: Vec<usize>,
    k_c: usize,
    k_p: Vec<usize>,
    cut: Option<usize>,
    selector: String,
    best_restart: usize,
    best_score: f64,
    scores: Vec<f64>,
    iterations_used: usize,
    objective_initial: f64,
    objective_final: f64,
    orthogonality_residual: f64,
    /// `presence[j][l]`: common community `j` judged present in layer `l`.
    presence: Vec<Vec<bool>>,
    q_scores: Vec<Vec<f64>>,
}

fn load_truth(paths: &[PathBuf], n: usize) -> Result<Vec<NodeLabels>> {
    paths.iter().map(|p| load_labels(p, n)).collect()
}

fn resolve_order(args: &DetectArgs, net: &MultiplexNetwork) -> Result<ModelOrder> {
    match (args.kc, args.kp.is_empty()) {
        (Some(kc), false) => Ok(ModelOrder::new(
            kc,
            broadcast_kp(&args.kp, net.num_layers())?,
        )),
        (None, true) => {
            let opts = estimate_options(
                args.trials,
                args.linkage,
                args.cut_rule,
                false,
                args.max_iters,
                args.tol,
            );
            estimate_model_order(net, &RandomStream::new(args.seed, ESTIMATE_STREAM), &opts)
        }
        _ => Err(Error::invalid("--kc and --kp must be given together")),
    }
}

pub fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let mut net = load_multiplex(&args.network, args.n)?;
    if args.normalize {
        net.normalize_by_max();
    }
    let truth = load_truth(&args.truth, net.n())?;
    let order = resolve_order(args, &net)?;

    let selector = match (args.selector, truth.is_empty()) {
        (SelectorArg::Nmi, true) => {
            return Err(Error::invalid("--selector nmi needs --truth"));
        }
        (SelectorArg::Auto, false) | (SelectorArg::Nmi, false) => Selector::Nmi {
            truth: &truth,
            pooled: args.pooled,
        },
        _ => Selector::ModularityDensity,
    };
    let selector_name = match selector {
        Selector::Nmi { .. } => "nmi",
        Selector::ModularityDensity => "qd",
    };
    let opts = FitOptions {
        max_iters: args.max_iters,
        tol: args.tol,
        ..FitOptions::default()
    };
    let detection = run_restarts(
        &net,
        &order,
        args.seed,
        args.restarts,
        selector,
        &opts,
        args.qj_rule.into(),
    )?;

    write_detection(&args.out, &order, &detection, selector_name)?;
    write_manifest(
        &args.out,
        "detect",
        args.seed,
        DetectConfig {
            network: args.network.display().to_string(),
            restarts: args.restarts,
            max_iters: args.max_iters,
            tol: args.tol,
            selector: selector_name.into(),
            pooled: args.pooled,
            qj_rule: format!("{:?}", args.qj_rule).to_lowercase(),
            cut_rule: format!("{:?}", args.cut_rule).to_lowercase(),
            linkage: format!("{:?}", args.linkage).to_lowercase(),
            k_l: order.k_l.clone(),
            k_c: order.k_c,
            k_p: order.k_p.clone(),
        },
    )?;
    println!("{order}");
    println!(
        "best restart {} of {} ({selector_name} = {}), labels in {}",
        detection.best_index,
        args.restarts,
        detection.scores[detection.best_index],
        args.out.display()
    );
    Ok(())
}

fn write_detection(
    out: &Path,
    order: &ModelOrder,
    detection: &Detection,
    selector_name: &str,
) -> Result<()> {
    fs::create_dir_all(out)?;
    for (l, labels) in detection.labels.per_layer.iter().enumerate() {
        save_labels(labels, out.join(format!("labels_layer_{l}.txt")))?;
    }
    let mut trace = String::new();
    for v in &detection.best.objective_trace {
        let _ = writeln!(trace, "{v}");
    }
    fs::write(out.join("trace.txt"), trace)?;

    let summary = DetectSummary {
        k_l: order.k_l.clone(),
        k_c: order.k_c,
        k_p: order.k_p.clone(),
        cut: order.cut,
        selector: selector_name.into(),
        best_restart: detection.best_index,
        best_score: detection.scores[detection.best_index],
        scores: detection.scores.clone(),
        iterations_used: detection.best.iterations_used,
        objective_initial: detection.best.objective_trace[0],
        objective_final: *detection
            .best
            .objective_trace
            .last()
            .expect("nonempty trace"),
        orthogonality_residual: detection.best.factors.orthogonality_diagnostic(),
        presence: detection.presence.matrix(order.k_c),
        q_scores: detection
            .presence
            .per_layer
            .iter()
            .map(|lp| lp.q.clone())
            .collect(),
    };
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct BaselineConfig {
    network: String,
    k: usize,
    restarts: usize,
    max_iters: usize,
    tol: f64,
}

pub fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let mut net = load_multiplex(&args.network, args.n)?;
    if args.normalize {
        net.normalize_by_max();
    }
    let avg = net.aggregate_average();
    let truth = load_truth(&args.truth, net.n())?;

    let k = match args.k {
        Some(k) => k,
        None => {
            // Spectral-gap estimate on the averaged matrix, null matched to
            // its nonzero-pair density.
            let n = net.n();
            let pairs = (n * n.saturating_sub(1) / 2).max(1) as f64;
            let mut present = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    if avg.get(i, j) > 0.0 {
                        present += 1;
                    }
                }
            }
            let density = (present as f64 / pairs).clamp(1.0 / pairs, 1.0 - 1.0 / pairs);
            let delta = null_threshold(
                n,
                density,
                &RandomStream::new(args.seed, ESTIMATE_STREAM),
                args.trials,
            )?;
            estimate_k_layer(&avg, delta)?
        }
    };

    let opts = FitOptions {
        max_iters: args.max_iters,
        tol: args.tol,
        ..FitOptions::default()
    };
    // Best-of-restarts, ranked like detection: NMI when truth is given,
    // modularity density otherwise.
    let fits: Vec<(NodeLabels, f64)> = {
        use rayon::prelude::*;
        (0..args.restarts.max(1))
            .into_par_iter()
            .map(|r| -> Result<(NodeLabels, f64)> {
                let stream = RandomStream::new(args.seed, BASELINE_STREAM + r as u64);
                let fit = single_layer_onmtf(&avg, k, stream, &opts)?;
                let labels = argmax_labels(&fit.u);
                let score = if truth.is_empty() {
                    modularity_density(&avg, &labels)?
                } else {
                    multiplex_nmi(
                        &vec![labels.clone(); net.num_layers()],
                        &truth,
                        false,
                    )?
                };
                Ok((labels, score))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let mut best = 0usize;
    for (i, (_, score)) in fits.iter().enumerate() {
        if *score > fits[best].1 {
            best = i;
        }
    }
    let (labels, score) = &fits[best];

    fs::create_dir_all(&args.out)?;
    save_labels(labels, args.out.join("labels.txt"))?;
    write_manifest(
        &args.out,
        "baseline",
        args.seed,
        BaselineConfig {
            network: args.network.display().to_string(),
            k,
            restarts: args.restarts,
            max_iters: args.max_iters,
            tol: args.tol,
        },
    )?;
    println!(
        "baseline k={k}, best restart {best} (score = {score}), labels in {}",
        args.out.display()
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let net = match &args.network {
        Some(path) => Some(load_multiplex(path, args.n)?),
        None => None,
    };
    let n = match (&net, args.n) {
        (Some(net), _) => net.n(),
        (None, Some(n)) => n,
        (None, None) => infer_label_count(&args.pred[0])?,
    };
    let pred: Vec<NodeLabels> = args
        .pred
        .iter()
        .map(|p| load_labels(p, n))
        .collect::<Result<_>>()?;

    if !args.truth.is_empty() {
        let truth = load_truth(&args.truth, n)?;
        let v = multiplex_nmi(&pred, &truth, args.pooled)?;
        println!("nmi\t{v}");
    }
    if let Some(net) = &net {
        let labels: Vec<NodeLabels> = if pred.len() == 1 {
            vec![pred[0].clone(); net.num_layers()]
        } else if pred.len() == net.num_layers() {
            pred.clone()
        } else {
            return Err(Error::invalid(format!(
                "{} predicted partitions for {} layers",
                pred.len(),
                net.num_layers()
            )));
        };
        let v = mean_modularity_density(net, &labels)?;
        println!("qd\t{v}");
    }
    if args.truth.is_empty() && net.is_none() {
        return Err(Error::invalid("eval needs --truth and/or --network"));
    }
    Ok(())
}

/// Node count of a labels file: `max node id + 1`.
fn infer_label_count(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path)?;
    let mut max_node = None::<usize>;
    for line in text.lines() {
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(tok) = line.split_whitespace().next() {
            if let Ok(v) = tok.parse::<usize>() {
                max_node = Some(max_node.map_or(v, |m: usize| m.max(v)));
            }
        }
    }
    max_node
        .map(|m| m + 1)
        .ok_or_else(|| Error::invalid(format!("no labels in {}", path.display())))
}

#[derive(Serialize)]
struct SweepRow {
    axis: String,
    value: f64,
    realizations: usize,
    mean_nmi: f64,
    std_nmi: f64,
    mean_seconds: f64,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let axis_name = format!("{:?}", args.axis).to_lowercase();
    let default_kp = [2usize];
    let base_kp = broadcast_kp(
        if args.kp.is_empty() { &default_kp } else { &args.kp },
        args.layers,
    )?;
    let mut rows = Vec::new();

    for (vi, &value) in args.values.iter().enumerate() {
        let mut n = args.n;
        let mut kc = args.kc;
        let mut mu = args.mu;
        let mut p1 = args.p1;
        match args.axis {
            SweepAxis::Mu => mu = value,
            SweepAxis::P1 => p1 = value,
            SweepAxis::Kc => kc = value as usize,
            SweepAxis::N => n = value as usize,
        }
        let spec = BenchmarkSpec {
            n,
            num_layers: args.layers,
            k_c: kc,
            presence: BenchmarkSpec::full_presence(kc, args.layers),
            n_c: args
                .nc
                .unwrap_or_else(|| BenchmarkSpec::default_n_c(n, kc, &base_kp)),
            k_p: base_kp.clone(),
            mu,
            p1,
            avg_degree: args.avg_degree,
            seed: args.seed,
        };
        spec.validate()?;

        let opts = FitOptions {
            max_iters: args.max_iters,
            tol: args.tol,
            ..FitOptions::default()
        };
        let mut scores = Vec::with_capacity(args.realizations);
        let mut seconds = Vec::with_capacity(args.realizations);
        for r in 0..args.realizations {
            let tag = (vi * args.realizations + r) as u64;
            let gen_stream = RandomStream::new(args.seed, SWEEP_STREAM + tag);
            let (net, truth) = generate(&spec, &gen_stream)?;
            let order = if args.estimate_order {
                let est = estimate_options(
                    50,
                    LinkageArg::Single,
                    CutRuleArg::Prose,
                    false,
                    args.max_iters,
                    args.tol,
                );
                estimate_model_order(&net, &gen_stream.child(ESTIMATE_STREAM), &est)?
            } else {
                ModelOrder::new(spec.k_c, spec.k_p.clone())
            };
            let started = Instant::now();
            let detection = run_restarts(
                &net,
                &order,
                // Per-realization master seed so restarts differ across
                // realizations too.
                gen_stream.child(0xDE7EC7).stream_index,
                args.restarts,
                Selector::Nmi {
                    truth: &truth.labels,
                    pooled: false,
                },
                &opts,
                QjRule::Corrected,
            )?;
            seconds.push(started.elapsed().as_secs_f64());
            scores.push(detection.scores[detection.best_index]);
        }
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        let var = scores
            .iter()
            .map(|s| (s - mean) * (s - mean))
            .sum::<f64>()
            / scores.len().max(1) as f64;
        rows.push(SweepRow {
            axis: axis_name.clone(),
            value,
            realizations: args.realizations,
            mean_nmi: mean,
            std_nmi: var.sqrt(),
            mean_seconds: seconds.iter().sum::<f64>() / seconds.len().max(1) as f64,
        });
        println!(
            "{axis_name}={value}: mean_nmi={mean:.4} std={:.4}",
            var.sqrt()
        );
    }

    let mut csv = String::from("axis,value,realizations,mean_nmi,std_nmi,mean_seconds\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.axis, row.value, row.realizations, row.mean_nmi, row.std_nmi, row.mean_seconds
        );
    }
    fs::write(&args.out, csv)?;
    if let Some(plot) = &args.plot {
        fs::write(plot, sweep_svg(&axis_name, &rows))?;
    }
    Ok(())
}

/// Minimal SVG line plot of mean NMI over the swept values.
fn sweep_svg(axis: &str, rows: &[SweepRow]) -> String {
    let (w, h, ml, mb) = (480.0, 320.0, 50.0, 40.0);
    let xs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = (xmax - xmin).max(1e-12);
    let px = |v: f64| ml + (v - xmin) / span * (w - ml - 20.0);
    let py = |nmi: f64| (h - mb) - nmi * (h - mb - 20.0);
    let mut path = String::new();
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(
            path,
            "{}{:.2},{:.2} ",
            if i == 0 { "M" } else { "L" },
            px(r.value),
            py(r.mean_nmi)
        );
    }
    let mut marks = String::new();
    for r in rows {
        let _ = write!(
            marks,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##,
            px(r.value),
            py(r.mean_nmi)
        );
    }
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect width="{w}" height="{h}" fill="white"/>
<line x1="{ml}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>
<line x1="{ml}" y1="20" x2="{ml}" y2="{y0}" stroke="black"/>
<path d="{path}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>
{marks}
<text x="{xc}" y="{yl}" text-anchor="middle" font-size="12">{axis}</text>
<text x="14" y="{ymid}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {ymid})">mean NMI</text>
</svg>
"##,
        y0 = h - mb,
        x1 = w - 20.0,
        xc = (ml + w - 20.0) / 2.0,
        yl = h - 8.0,
        ymid = (h - mb) / 2.0,
    )
}
