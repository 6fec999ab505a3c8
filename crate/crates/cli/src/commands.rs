use std::io::Write;
use std::path::Path;

use serde::Serialize;
use topoprune_core::compression::{eta_tau_empirical, eta_tau_network, CompressionReport, ConvOutputRule};
use topoprune_core::graph::{max_spanning_forest, normalize_weights};
use topoprune_core::overlap::{
    monte_carlo_overlap, overlap_lower_bound_sparse, random_overlap_pmf, random_overlap_tail, BoundQuery,
    OverlapEstimate, WeightDistribution,
};
use topoprune_core::persistence::{layer_diagram, total_neural_persistence, NormOrder, NpReport};
use topoprune_core::pruning::{
    build_imp_schedule, magnitude_mask, measure_overlap, run_iterative, timp_mask, ImpSchedule, Infeasibility,
    MaskMethod, OverlapReport, PruneLoop, RemovalBase, RoundMetrics, TrainSummary,
};
use topoprune_core::trainer::{train, Activation, Dataset, DenseNet, TrainConfig};
use topoprune_core::LayerWeights;

use crate::arch::{dense_dims, parse_arch};
use crate::cli::{
    ActivationArg, BoundArgs, Cli, Command, Dist, EtaArgs, LoopKind, Method, MstArgs, NpArgs, OverlapArgs,
    ProbArgs, PruneArgs, RunArgs, SimulateArgs,
};
use crate::npy::{self, Descr};
use crate::report::{write_csv, InputDigest, ReportEnvelope};
use crate::{checkpoint, CliError};

/// Runs one parsed invocation, printing its report to `out` and warnings to
/// `err`.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Eta(a) => eta(a, out),
        Command::Np(a) => np(a, out),
        Command::Mst(a) => mst(a, out),
        Command::Bound(a) => bound(a, out),
        Command::Pmf(a) => probability(a, false, out),
        Command::Tail(a) => probability(a, true, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Overlap(a) => overlap(a, out),
        Command::Prune(a) => prune(a, out),
        Command::Run(a) => run(a, out, err),
    }
}

/// Reads a weight file and its digest from a single read.
fn load_weights(path: &Path) -> Result<(LayerWeights, InputDigest), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let array = npy::read_array(&mut &bytes[..]).map_err(|e| CliError::npy(path, e))?;
    let w = npy::weights_from_array(&array).map_err(|e| CliError::npy(path, e))?;
    Ok((w, InputDigest::of_bytes(path, &bytes)))
}

fn norm_order(p: f64) -> Result<NormOrder, CliError> {
    NormOrder::new(p).map_err(CliError::from)
}

#[derive(Serialize)]
struct EtaPayload {
    conv_rule: &'static str,
    #[serde(flatten)]
    report: CompressionReport,
}

#[derive(Serialize)]
struct EtaRow {
    layer: usize,
    kind: &'static str,
    weight_count: usize,
    mst_count: usize,
    eta_tau: f64,
}

fn eta(a: EtaArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let digest = InputDigest::of_file(&a.arch)?;
    let arch = parse_arch(&a.arch)?;
    let (rule, conv_rule) = if a.paper_literal_conv {
        (ConvOutputRule::PaperLiteral, "paper-literal")
    } else {
        (ConvOutputRule::Standard, "standard")
    };
    let report = eta_tau_network(&arch, rule)?;
    if let Some(path) = &a.csv {
        write_csv(
            path,
            report.layers.iter().map(|l| EtaRow {
                layer: l.layer,
                kind: kind_name(l.kind),
                weight_count: l.weight_count,
                mst_count: l.mst_count,
                eta_tau: l.eta_tau,
            }),
        )?;
    }
    ReportEnvelope::new("eta", vec![digest], None, EtaPayload { conv_rule, report }).write_to(out)
}

fn kind_name(kind: topoprune_core::compression::LayerKind) -> &'static str {
    use topoprune_core::compression::LayerKind;
    match kind {
        LayerKind::Dense => "dense",
        LayerKind::Conv2d => "conv2d",
        LayerKind::Recurrent => "recurrent",
    }
}

#[derive(Serialize)]
struct NpLayer {
    file: String,
    rows: usize,
    cols: usize,
    #[serde(flatten)]
    report: NpReport,
}

#[derive(Serialize)]
struct NpPayload {
    p: f64,
    layers: Vec<NpLayer>,
    total_np: f64,
}

#[derive(Serialize)]
struct DiagramRow {
    birth: f64,
    death: f64,
}

fn np(a: NpArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = norm_order(a.p)?;
    if let Some(dir) = &a.csv {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut digests = Vec::new();
    let mut layers = Vec::new();
    for (k, path) in a.weights.iter().enumerate() {
        let (w, digest) = load_weights(path)?;
        let diagram = layer_diagram(&w);
        if let Some(dir) = &a.csv {
            let rows = diagram.points().iter().map(|pt| DiagramRow { birth: pt.birth, death: pt.death });
            write_csv(&dir.join(format!("layer_{k}.csv")), rows)?;
        }
        layers.push(NpLayer {
            file: digest.path.clone(),
            rows: w.rows(),
            cols: w.cols(),
            report: NpReport::from_diagram(k, &diagram, p),
        });
        digests.push(digest);
    }
    let reports: Vec<NpReport> = layers.iter().map(|l| l.report.clone()).collect();
    let payload = NpPayload { p: p.get(), total_np: total_neural_persistence(&reports), layers };
    ReportEnvelope::new("np", digests, None, payload).write_to(out)
}

#[derive(Serialize)]
struct MstPayload {
    rows: usize,
    cols: usize,
    edges: usize,
    components: usize,
    /// Sum of normalized weights on the forest.
    total_weight: f64,
    /// `|W| / |MST|` over the non-zero weights.
    eta_tau: Option<f64>,
    forest_csv: String,
}

#[derive(Serialize)]
struct ForestRow {
    row: usize,
    col: usize,
    weight: f64,
    normalized: f64,
}

fn mst(a: MstArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (w, digest) = load_weights(&a.weights)?;
    let g = normalize_weights(&w);
    let forest = max_spanning_forest(&g);
    write_csv(
        &a.out,
        forest.edges().iter().map(|e| ForestRow {
            row: e.row,
            col: e.col,
            weight: w.get(e.row, e.col),
            normalized: e.weight,
        }),
    )?;
    let payload = MstPayload {
        rows: w.rows(),
        cols: w.cols(),
        edges: forest.len(),
        components: forest.components_after(),
        total_weight: forest.weights().iter().sum(),
        eta_tau: eta_tau_empirical(&w).ok(),
        forest_csv: a.out.display().to_string(),
    };
    ReportEnvelope::new("mst", vec![digest], None, payload).write_to(out)
}

#[derive(Serialize)]
struct BoundPayload {
    m: usize,
    n: usize,
    sparsity: f64,
    alpha: usize,
    bound: f64,
}

fn bound(a: BoundArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let q = BoundQuery::dense(a.m, a.n).with_sparsity(a.sparsity.unwrap_or(1.0));
    let bound = overlap_lower_bound_sparse(&q)?;
    let payload = BoundPayload { m: q.m, n: q.n, sparsity: q.sparsity, alpha: q.alpha, bound };
    ReportEnvelope::new("bound", vec![], None, payload).write_to(out)
}

#[derive(Serialize)]
struct ProbPayload {
    m: usize,
    n: usize,
    alpha: usize,
    w: usize,
    probability: f64,
}

fn probability(a: ProbArgs, tail: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let alpha = a.alpha.unwrap_or((a.m + a.n).saturating_sub(1));
    let probability = if tail {
        random_overlap_tail(a.m, a.n, alpha, a.w)?
    } else {
        random_overlap_pmf(a.m, a.n, alpha, a.w)?
    };
    let payload = ProbPayload { m: a.m, n: a.n, alpha, w: a.w, probability };
    ReportEnvelope::new(if tail { "tail" } else { "pmf" }, vec![], None, payload).write_to(out)
}

#[derive(Serialize)]
struct SimulatePayload {
    #[serde(flatten)]
    estimate: OverlapEstimate,
    bound: f64,
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    fraction: f64,
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dist = match a.dist {
        Dist::Uniform01 => WeightDistribution::Uniform01,
        Dist::GaussianAbs => WeightDistribution::GaussianAbs,
    };
    let estimate = monte_carlo_overlap(a.m, a.n, dist, a.trials, a.seed)?;
    let bound = overlap_lower_bound_sparse(&BoundQuery::dense(a.m, a.n))?;
    if let Some(path) = &a.csv {
        write_csv(path, estimate.fractions.iter().enumerate().map(|(trial, &fraction)| TrialRow { trial, fraction }))?;
    }
    ReportEnvelope::new("simulate", vec![], Some(a.seed), SimulatePayload { estimate, bound }).write_to(out)
}

#[derive(Serialize)]
struct OverlapLayer {
    file: String,
    rows: usize,
    cols: usize,
    /// Lower bound for a dense layer of this shape.
    bound: f64,
    #[serde(flatten)]
    report: OverlapReport,
}

#[derive(Serialize)]
struct OverlapRow {
    layer: usize,
    rows: usize,
    cols: usize,
    alpha: usize,
    overlap_count: usize,
    fraction: f64,
    bound: f64,
}

fn overlap(a: OverlapArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut digests = Vec::new();
    let mut layers = Vec::new();
    for (k, path) in a.weights.iter().enumerate() {
        let (w, digest) = load_weights(path)?;
        let mut report = measure_overlap(&w)?;
        report.layer = k;
        layers.push(OverlapLayer {
            file: digest.path.clone(),
            rows: w.rows(),
            cols: w.cols(),
            bound: overlap_lower_bound_sparse(&BoundQuery::dense(w.rows(), w.cols()))?,
            report,
        });
        digests.push(digest);
    }
    if let Some(path) = &a.csv {
        write_csv(
            path,
            layers.iter().map(|l| OverlapRow {
                layer: l.report.layer,
                rows: l.rows,
                cols: l.cols,
                alpha: l.report.alpha,
                overlap_count: l.report.overlap_count,
                fraction: l.report.fraction,
                bound: l.bound,
            }),
        )?;
    }
    ReportEnvelope::new("overlap", digests, None, layers).write_to(out)
}

#[derive(Serialize)]
struct PrunePayload {
    method: MaskMethod,
    rows: usize,
    cols: usize,
    keep: usize,
    alpha: usize,
    truncated: bool,
    np_before: f64,
    np_after: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_file: Option<String>,
}

fn prune(a: PruneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (w, digest) = load_weights(&a.weights)?;
    let mask = match a.method {
        Method::Mp => magnitude_mask(&w, a.keep)?,
        Method::Timp => timp_mask(&w, a.keep, a.truncate)?,
    };
    let pruned = mask.apply(&w)?;
    if let Some(path) = &a.out {
        npy::write_mask(path, &mask).map_err(|e| CliError::npy(path, e))?;
    }
    if let Some(path) = &a.pruned_out {
        npy::write_npy(path, &pruned, Descr::F8).map_err(|e| CliError::npy(path, e))?;
    }
    let p = NormOrder::EUCLIDEAN;
    let payload = PrunePayload {
        method: mask.method(),
        rows: w.rows(),
        cols: w.cols(),
        keep: mask.nnz(),
        alpha: w.rows() + w.cols() - 1,
        truncated: mask.is_truncated(),
        np_before: topoprune_core::persistence::layer_report(0, &w, p).raw_np,
        np_after: topoprune_core::persistence::layer_report(0, &pruned, p).raw_np,
        mask_file: a.out.as_ref().map(|p| p.display().to_string()),
    };
    ReportEnvelope::new("prune", vec![digest], None, payload).write_to(out)
}

#[derive(Serialize)]
struct RunPayload {
    #[serde(rename = "loop")]
    kind: PruneLoop,
    dims: Vec<usize>,
    activation: Activation,
    train: TrainConfig,
    data: DataSummary,
    schedule: ImpSchedule,
    warnings: Vec<String>,
    rounds: Vec<RoundMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<String>,
}

#[derive(Serialize)]
struct DataSummary {
    source: &'static str,
    train_samples: usize,
    validation_samples: usize,
    features: usize,
    classes: usize,
}

#[derive(Serialize)]
struct RoundRow {
    round: usize,
    layer: usize,
    keep: usize,
    sparsity: f64,
    np_before_mask: f64,
    np_after_mask: f64,
    np_after_train: f64,
    normalized_np_after_train: f64,
    overlap: f64,
    total_np: f64,
    train_loss: f64,
    validation_loss: f64,
}

fn load_dataset(a: &RunArgs, dims: &[usize], digests: &mut Vec<InputDigest>) -> Result<(Dataset, &'static str), CliError> {
    let (inputs, classes) = (dims[0], *dims.last().unwrap());
    match (&a.features, &a.labels) {
        (Some(fp), Some(lp)) => {
            digests.push(InputDigest::of_file(fp)?);
            digests.push(InputDigest::of_file(lp)?);
            let features = npy::read_file(fp).map_err(|e| CliError::npy(fp, e))?;
            let [samples, width] = features.shape[..] else {
                return Err(CliError::npy(fp, npy::NpyError::ExpectedTwoD(features.shape.len())));
            };
            if width != inputs {
                return Err(CliError::Validation(format!(
                    "{} has {width} features but the network expects {inputs}",
                    fp.display()
                )));
            }
            let labels = npy::read_labels(lp).map_err(|e| CliError::npy(lp, e))?;
            if labels.len() != samples {
                return Err(CliError::Validation(format!("{samples} feature rows but {} labels", labels.len())));
            }
            Ok((Dataset::new(features.to_f64(), labels, width, classes)?, "files"))
        }
        _ => {
            if classes != 2 {
                return Err(CliError::Validation(format!(
                    "the synthetic task has 2 classes but the network has {classes} outputs"
                )));
            }
            Ok((Dataset::lifted_moons(a.samples, inputs, a.noise, a.seed)?, "lifted-moons"))
        }
    }
}

fn run(a: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut digests = vec![InputDigest::of_file(&a.arch)?];
    let arch = parse_arch(&a.arch)?;
    let dims = dense_dims(&arch)?;
    let p = norm_order(a.p)?;
    if !(a.validation > 0.0 && a.validation < 1.0) {
        return Err(CliError::Validation(format!("validation fraction must be in (0, 1), got {}", a.validation)));
    }
    let (data, source) = load_dataset(&a, &dims, &mut digests)?;
    let (train_set, val_set) = data.split(a.validation)?;

    let activation = match a.activation {
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Tanh => Activation::Tanh,
    };
    let mut net = DenseNet::init(&dims, activation, a.seed)?;
    let base = if a.remaining { RemovalBase::Remaining } else { RemovalBase::Original };
    let schedule = build_imp_schedule(&net.weight_shapes(), a.sparsity, a.rounds, a.iters, base)?;
    let config = TrainConfig { seed: a.seed, learning_rate: a.lr, batch_size: a.batch, iterations: a.iters };
    config.validate()?;

    let kind = match a.kind {
        LoopKind::Imp => PruneLoop::Imp,
        LoopKind::Timp => PruneLoop::Timp,
    };
    let warnings: Vec<String> = schedule
        .infeasible
        .iter()
        .map(|&i: &Infeasibility| topoprune_core::Error::from(i).to_string())
        .collect();
    if kind == PruneLoop::Imp {
        for w in &warnings {
            writeln!(err, "warning: {w}")?;
        }
    }

    let rounds = run_iterative(kind, &mut net, &schedule, p, |net, round| {
        // Each round draws its own batches.
        let cfg = TrainConfig { seed: config.seed.wrapping_add(round as u64), ..config };
        let outcome = train(net, &cfg, &train_set)?;
        Ok(TrainSummary { train_loss: outcome.final_loss(), validation_loss: net.evaluate(&val_set)?.loss })
    })?;

    if let Some(path) = &a.csv {
        write_csv(
            path,
            rounds.iter().flat_map(|r| {
                r.layers.iter().map(move |l| RoundRow {
                    round: r.round,
                    layer: l.layer,
                    keep: l.keep,
                    sparsity: r.sparsity,
                    np_before_mask: l.np_before_mask,
                    np_after_mask: l.np_after_mask,
                    np_after_train: l.np_after_train,
                    normalized_np_after_train: l.normalized_np_after_train,
                    overlap: l.overlap,
                    total_np: r.total_np,
                    train_loss: r.train_loss,
                    validation_loss: r.validation_loss,
                })
            }),
        )?;
    }
    if let Some(dir) = &a.out_dir {
        checkpoint::save(dir, &net, a.seed)?;
    }

    let payload = RunPayload {
        kind,
        dims,
        activation,
        train: config,
        data: DataSummary {
            source,
            train_samples: train_set.len(),
            validation_samples: val_set.len(),
            features: data.dim(),
            classes: data.classes(),
        },
        schedule,
        warnings,
        rounds,
        checkpoint: a.out_dir.as_ref().map(|d| d.display().to_string()),
    };
    ReportEnvelope::new("run", digests, Some(a.seed), payload).write_to(out)
}
