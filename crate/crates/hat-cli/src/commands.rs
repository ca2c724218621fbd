//! Implementations of the subcommands.

use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use hat_core::hat::{run_hat, HatConfig, ReshapeUpperLimit, ThresholdFamily};
use hat_core::metrics::{fsp_tpp_groups, partition_to_barriers, Partition};
use hat_core::pvalues::{anova_assignment, LeafObservations, PValueAssignment, Provenance};
use hat_core::regression::{
    node_pvalues_regression, RegressionData, RegressionPipelineConfig,
};
use hat_core::sim::{run_monte_carlo_with_progress, Scenario, ScenarioKind};
use hat_core::tree::{Tree, TreeFormat};

use crate::io::{
    fmt_f64, load_observations, load_partition_file, load_pvalues, load_tree, partition_to_json,
    read_to_string, RunManifest,
};
use crate::CliError;

fn parse_tree_format(s: &str) -> Result<TreeFormat, String> {
    match s {
        "newick" => Ok(TreeFormat::Newick),
        "json" => Ok(TreeFormat::Json),
        other => Err(format!("unknown tree format {other:?}")),
    }
}

fn parse_family_name(s: &str) -> Result<String, String> {
    match s {
        "independent" | "reshaped" | "lg" => Ok(s.to_string()),
        other => Err(format!(
            "unknown family {other:?} (expected independent, reshaped, or lg)"
        )),
    }
}

/// Family selector plus the super-uniformity shift: a positive shift picks
/// the corresponding shifted variant.
fn resolve_family(name: &str, epsilon0: f64) -> Result<ThresholdFamily, CliError> {
    let family = match (name, epsilon0 > 0.0) {
        ("independent", false) => ThresholdFamily::IndependentHarmonic,
        ("independent", true) => ThresholdFamily::IndependentShifted,
        ("reshaped", false) => ThresholdFamily::Reshaped,
        ("reshaped", true) => ThresholdFamily::ReshapedShifted,
        ("lg", false) => ThresholdFamily::LynchGuo,
        ("lg", true) => {
            return Err(CliError::validation(
                "epsilon0 is not defined for the lg family",
            ))
        }
        (other, _) => return Err(CliError::validation(format!("unknown family {other:?}"))),
    };
    Ok(family)
}

fn parse_reshape_upper(s: &str) -> Result<ReshapeUpperLimit, String> {
    match s {
        "printed" => Ok(ReshapeUpperLimit::DepthDegreeSum),
        "prev-depth" => Ok(ReshapeUpperLimit::PrevDepthDegreeSum),
        other => Err(format!("unknown reshape upper limit {other:?}")),
    }
}

#[derive(Args)]
pub struct TestArgs {
    /// Tree file (.json is JSON, anything else Newick).
    #[arg(long)]
    tree: PathBuf,
    /// Force the tree format.
    #[arg(long, value_parser = parse_tree_format)]
    tree_format: Option<TreeFormat>,
    /// CSV with header node,pvalue covering every internal node.
    #[arg(long)]
    pvalues: PathBuf,
    /// Target false split rate, in (0, 1).
    #[arg(long)]
    alpha: f64,
    /// Threshold family: independent, reshaped, or lg.
    #[arg(long, value_parser = parse_family_name)]
    family: String,
    /// Super-uniformity shift (selects the shifted variant when positive).
    #[arg(long, default_value_t = 0.0)]
    epsilon0: f64,
    /// Upper limit of the reshaping denominator: printed or prev-depth.
    #[arg(long, default_value = "printed", value_parser = parse_reshape_upper)]
    reshape_upper: ReshapeUpperLimit,
    /// Partition JSON destination ("-" for stdout).
    #[arg(long, default_value = "-")]
    out_partition: String,
    /// Audit CSV destination (node, depth, p-value, threshold, rejected).
    #[arg(long)]
    out_audit: Option<PathBuf>,
}

pub fn run_test(args: TestArgs) -> Result<(), CliError> {
    let tree = load_tree(&args.tree, args.tree_format)?;
    let map = load_pvalues(&args.pvalues, &tree)?;
    let pv = PValueAssignment::from_map(&tree, Provenance::External, &map)?;
    let family = resolve_family(&args.family, args.epsilon0)?;
    let mut cfg = HatConfig::new(args.alpha, family).with_epsilon0(args.epsilon0);
    cfg.reshape_upper = args.reshape_upper;
    let (rejection, partition) = run_hat(&tree, &pv, &cfg)?;

    let mut manifest = RunManifest::new(
        "test",
        json!({
            "tree": args.tree.display().to_string(),
            "pvalues": args.pvalues.display().to_string(),
            "alpha": args.alpha,
            "family": args.family,
            "epsilon0": args.epsilon0,
            "reshape_upper": format!("{:?}", args.reshape_upper),
            "out_partition": args.out_partition,
            "out_audit": args.out_audit.as_ref().map(|p| p.display().to_string()),
        }),
        vec![],
    );
    manifest.record_input(&args.tree)?;
    manifest.record_input(&args.pvalues)?;

    let partition_json = partition_to_json(&tree, &partition);
    if args.out_partition == "-" {
        print!("{partition_json}");
        std::io::stdout().flush().ok();
    } else {
        manifest.write_output(&PathBuf::from(&args.out_partition), partition_json.as_bytes())?;
    }

    if let Some(audit_path) = &args.out_audit {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["node", "depth", "pvalue", "threshold", "rejected"])
            .map_err(|e| CliError::validation(e.to_string()))?;
        for u in tree.internal_nodes() {
            let threshold = rejection
                .threshold_used(u)
                .map(fmt_f64)
                .unwrap_or_default();
            w.write_record([
                tree.label(u).to_string(),
                tree.depth(u).to_string(),
                fmt_f64(pv.get(u)?),
                threshold,
                rejection.is_rejected(u).to_string(),
            ])
            .map_err(|e| CliError::validation(e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::validation(e.to_string()))?;
        manifest.write_output(audit_path, &bytes)?;
    }
    manifest.finish()
}

#[derive(Args)]
pub struct MetricsArgs {
    /// True partition JSON ({"groups": [[leaf labels], ...]}).
    #[arg(long)]
    truth: PathBuf,
    /// Achieved partition JSON over the same leaves.
    #[arg(long)]
    achieved: PathBuf,
}

pub fn run_metrics(args: MetricsArgs) -> Result<(), CliError> {
    let truth_file = load_partition_file(&args.truth)?;
    let achieved_file = load_partition_file(&args.achieved)?;

    // The truth file's concatenated groups fix the leaf sequence; the
    // achieved groups must be contiguous runs of that same sequence.
    let mut order = Vec::new();
    let mut truth_sizes = Vec::new();
    for group in &truth_file.groups {
        if group.is_empty() {
            return Err(CliError::validation("empty group in truth partition"));
        }
        truth_sizes.push(group.len());
        order.extend(group.iter().cloned());
    }
    let position: std::collections::HashMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    if position.len() != order.len() {
        return Err(CliError::validation("duplicate leaf in truth partition"));
    }
    let total: usize = achieved_file.groups.iter().map(Vec::len).sum();
    if total != order.len() {
        return Err(CliError::validation(format!(
            "partitions cover different leaf counts: {} vs {}",
            order.len(),
            total
        )));
    }
    let mut achieved_sizes = Vec::new();
    let mut cursor = 0usize;
    for group in &achieved_file.groups {
        if group.is_empty() {
            return Err(CliError::validation("empty group in achieved partition"));
        }
        for leaf in group {
            let &pos = position.get(leaf.as_str()).ok_or_else(|| {
                CliError::validation(format!("achieved partition has unknown leaf {leaf:?}"))
            })?;
            if pos != cursor {
                return Err(CliError::validation(format!(
                    "achieved groups are not contiguous in the truth's leaf order (leaf {leaf:?})"
                )));
            }
            cursor += 1;
        }
        achieved_sizes.push(group.len());
    }

    let truth = Partition::from_sizes(truth_sizes)?;
    let achieved = Partition::from_sizes(achieved_sizes)?;
    let (fsp, tpp) = fsp_tpp_groups(&truth, &achieved)?;
    println!("FSP {} {}", fsp, fmt_f64(fsp.to_f64()));
    println!("TPP {} {}", tpp, fmt_f64(tpp.to_f64()));
    println!("TRUTH_BARRIERS {}", partition_to_barriers(&truth));
    println!("ACHIEVED_BARRIERS {}", partition_to_barriers(&achieved));
    Ok(())
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: hat_core::HatError| e.to_string())
}

#[derive(Args)]
pub struct SimulateArgs {
    /// idealized-binary, idealized-nonbinary, means-3regular,
    /// regression-rare.
    #[arg(long, value_parser = parse_scenario)]
    scenario: ScenarioKind,
    /// Number of leaves.
    #[arg(long, default_value_t = 100)]
    p: usize,
    /// Number of true groups.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Comma-separated target levels.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    alphas: Vec<f64>,
    /// Comma-separated families (independent, reshaped, lg).
    #[arg(long, value_delimiter = ',', default_value = "independent")]
    families: Vec<String>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Results CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Noise level of the means scenario.
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    /// Second shape parameter of the non-null Beta(1, shape) draws.
    #[arg(long, default_value_t = 60.0)]
    beta_shape: f64,
    /// Means scenario p-values: anova or simes.
    #[arg(long, default_value = "anova")]
    pvalues: String,
    /// Internal root children of the non-binary benchmark tree (1..=4).
    #[arg(long, default_value_t = 1)]
    nonbinary_internal: usize,
    /// Regression sample size.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Fraction of nonzero group coefficients.
    #[arg(long, default_value_t = 0.6)]
    sparsity_beta: f64,
    /// Bernoulli density of the regression design.
    #[arg(long, default_value_t = 0.2)]
    density_rho: f64,
    /// Regression noise multiplier.
    #[arg(long, default_value_t = 0.6)]
    c_sigma: f64,
    /// Cross-validation folds of the regression pipeline.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Variance floor constant.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Constraint radius multiplier lambda_n = c sqrt(log p / n).
    #[arg(long, default_value_t = 1.0)]
    lambda_n_c: f64,
}

pub fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    if args.reps == 0 {
        return Err(CliError::validation("need at least one replicate"));
    }
    let mut families = Vec::new();
    for name in &args.families {
        families.push(resolve_family(name, 0.0)?);
    }
    let use_simes = match args.pvalues.as_str() {
        "anova" => false,
        "simes" => true,
        other => {
            return Err(CliError::validation(format!(
                "unknown p-value mode {other:?} (expected anova or simes)"
            )))
        }
    };
    let mut scenario = Scenario {
        kind: args.scenario,
        p: args.p,
        k: args.k,
        alphas: args.alphas.clone(),
        families,
        reps: args.reps,
        seed: args.seed,
        beta_shape: args.beta_shape,
        sigma: args.sigma,
        use_simes,
        nonbinary_internal: args.nonbinary_internal,
        n: args.n,
        sparsity_beta: args.sparsity_beta,
        density_rho: args.density_rho,
        c_sigma: args.c_sigma,
        pipeline: RegressionPipelineConfig {
            folds: args.folds,
            tau: args.tau,
            lambda_n_c: args.lambda_n_c,
            ..Default::default()
        },
    };
    if args.scenario == ScenarioKind::IdealizedNonbinary {
        scenario.p = 5 + 9 * args.nonbinary_internal;
    }

    let reps = args.reps;
    let progress = move |done: usize| {
        if done % 25 == 0 || done == reps {
            eprintln!("replicate {done}/{reps}");
        }
    };
    let result = run_monte_carlo_with_progress(&scenario, Some(&progress))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario", "family", "alpha", "fsr", "fsr_se", "power", "power_se", "reps",
    ])
    .map_err(|e| CliError::validation(e.to_string()))?;
    for row in &result.rows {
        w.write_record([
            result.scenario.clone(),
            row.family.to_string(),
            fmt_f64(row.alpha),
            fmt_f64(row.fsr),
            fmt_f64(row.fsr_se),
            fmt_f64(row.power),
            fmt_f64(row.power_se),
            row.reps.to_string(),
        ])
        .map_err(|e| CliError::validation(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::validation(e.to_string()))?;

    let mut manifest = RunManifest::new(
        "simulate",
        json!({
            "scenario": result.scenario,
            "p": scenario.p,
            "k": scenario.k,
            "alphas": scenario.alphas,
            "families": args.families,
            "reps": scenario.reps,
            "sigma": scenario.sigma,
            "beta_shape": scenario.beta_shape,
            "pvalues": args.pvalues,
            "nonbinary_internal": scenario.nonbinary_internal,
            "n": scenario.n,
            "sparsity_beta": scenario.sparsity_beta,
            "density_rho": scenario.density_rho,
            "c_sigma": scenario.c_sigma,
            "folds": args.folds,
            "tau": args.tau,
            "lambda_n_c": args.lambda_n_c,
        }),
        vec![args.seed],
    );
    manifest.write_output(&args.out, &bytes)?;
    manifest.finish()
}

#[derive(Args)]
pub struct PvaluesAnovaArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long, value_parser = parse_tree_format)]
    tree_format: Option<TreeFormat>,
    /// CSV with header leaf,value.
    #[arg(long)]
    data: PathBuf,
    /// Known noise standard deviation.
    #[arg(long)]
    sigma: f64,
    /// Output p-value CSV (node,pvalue).
    #[arg(long, default_value = "pv.csv")]
    out: PathBuf,
}

fn write_pvalue_csv(tree: &Tree, pv: &PValueAssignment) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node", "pvalue"])
        .map_err(|e| CliError::validation(e.to_string()))?;
    for u in tree.internal_nodes() {
        w.write_record([tree.label(u).to_string(), fmt_f64(pv.get(u)?)])
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| CliError::validation(e.to_string()))
}

pub fn run_pvalues_anova(args: PvaluesAnovaArgs) -> Result<(), CliError> {
    let tree = load_tree(&args.tree, args.tree_format)?;
    let y = load_observations(&args.data, &tree)?;
    let obs = LeafObservations::new(y, args.sigma)?;
    let pv = anova_assignment(&tree, &obs)?;
    let bytes = write_pvalue_csv(&tree, &pv)?;
    let mut manifest = RunManifest::new(
        "pvalues-anova",
        json!({
            "tree": args.tree.display().to_string(),
            "data": args.data.display().to_string(),
            "sigma": args.sigma,
        }),
        vec![],
    );
    manifest.record_input(&args.tree)?;
    manifest.record_input(&args.data)?;
    manifest.write_output(&args.out, &bytes)?;
    manifest.finish()
}

#[derive(Args)]
pub struct PvaluesRegressionArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long, value_parser = parse_tree_format)]
    tree_format: Option<TreeFormat>,
    /// Design CSV: header row of leaf labels, one row per observation.
    #[arg(long = "x", visible_alias = "X")]
    x: PathBuf,
    /// Response CSV: header y, one row per observation.
    #[arg(long = "y")]
    y: PathBuf,
    /// lambda_n = c sqrt(log p / n).
    #[arg(long, default_value_t = 1.0)]
    lambda_n_c: f64,
    /// Variance floor constant.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Fold-assignment seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output p-value CSV (node,pvalue).
    #[arg(long, default_value = "pv.csv")]
    out: PathBuf,
    /// Diagnostics JSON (sigma_hat, picked penalties, per-node statistics).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

fn load_design(path: &std::path::Path, tree: &Tree) -> Result<nalgebra::DMatrix<f64>, CliError> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();
    // Columns may come in any order; they are mapped onto the leaf order.
    let mut col_of_leaf = vec![None; tree.p()];
    for (col, label) in headers.iter().enumerate() {
        let node = tree.node_by_label(label).ok_or_else(|| {
            CliError::validation(format!("{}: unknown leaf column {label:?}", path.display()))
        })?;
        let pos = tree.leaf_position(node).ok_or_else(|| {
            CliError::validation(format!("{}: column {label:?} is not a leaf", path.display()))
        })?;
        if col_of_leaf[pos].replace(col).is_some() {
            return Err(CliError::validation(format!(
                "{}: duplicate column {label:?}",
                path.display()
            )));
        }
    }
    if col_of_leaf.iter().any(Option::is_none) {
        return Err(CliError::validation(format!(
            "{}: design is missing leaf columns",
            path.display()
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(tree.p());
        for pos in 0..tree.p() {
            let col = col_of_leaf[pos].unwrap();
            let v: f64 = record.get(col).and_then(|v| v.parse().ok()).ok_or_else(|| {
                CliError::validation(format!("{}:{}: bad value", path.display(), i + 2))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no observations",
            path.display()
        )));
    }
    Ok(nalgebra::DMatrix::from_fn(rows.len(), tree.p(), |i, j| {
        rows[i][j]
    }))
}

fn load_response(path: &std::path::Path, n: usize) -> Result<nalgebra::DVector<f64>, CliError> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    if headers.len() != 1 || &headers[0] != "y" {
        return Err(CliError::validation(format!(
            "{}: expected single header column y",
            path.display()
        )));
    }
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let v: f64 = record.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| {
            CliError::validation(format!("{}:{}: bad value", path.display(), i + 2))
        })?;
        values.push(v);
    }
    if values.len() != n {
        return Err(CliError::validation(format!(
            "{}: {} responses for {} design rows",
            path.display(),
            values.len(),
            n
        )));
    }
    Ok(nalgebra::DVector::from_vec(values))
}

pub fn run_pvalues_regression(args: PvaluesRegressionArgs) -> Result<(), CliError> {
    let tree = load_tree(&args.tree, args.tree_format)?;
    let x = load_design(&args.x, &tree)?;
    let y = load_response(&args.y, x.nrows())?;
    let data = RegressionData::new(x, y)?;
    let cfg = RegressionPipelineConfig {
        folds: args.folds,
        seed: args.seed,
        lambda_n_c: args.lambda_n_c,
        tau: args.tau,
        ..Default::default()
    };
    let (pv, diagnostics) = node_pvalues_regression(&tree, &data, &cfg)?;

    let bytes = write_pvalue_csv(&tree, &pv)?;
    let mut manifest = RunManifest::new(
        "pvalues-regression",
        json!({
            "tree": args.tree.display().to_string(),
            "x": args.x.display().to_string(),
            "y": args.y.display().to_string(),
            "lambda_n_c": args.lambda_n_c,
            "tau": args.tau,
            "folds": args.folds,
        }),
        vec![args.seed],
    );
    manifest.record_input(&args.tree)?;
    manifest.record_input(&args.x)?;
    manifest.record_input(&args.y)?;
    manifest.write_output(&args.out, &bytes)?;
    if let Some(diag_path) = &args.diagnostics {
        // Per-node rows keyed by label for readability.
        let per_node: Vec<serde_json::Value> = diagnostics
            .per_node
            .iter()
            .map(|d| {
                json!({
                    "node": tree.label(d.node_id),
                    "q_debiased": d.q_debiased,
                    "var_hat": d.var_hat,
                    "pvalue": d.pvalue,
                })
            })
            .collect();
        let body = serde_json::to_string_pretty(&json!({
            "sigma_hat": diagnostics.sigma_hat,
            "lambda": diagnostics.lambda,
            "nu": diagnostics.nu,
            "lambda_n": diagnostics.lambda_n,
            "tau": diagnostics.tau,
            "fit_iterations": diagnostics.fit_iterations,
            "fit_converged": diagnostics.fit_converged,
            "fit_objective": diagnostics.fit_objective,
            "per_node": per_node,
        }))
        .expect("diagnostics serialization");
        manifest.write_output(diag_path, body.as_bytes())?;
    }
    manifest.finish()
}
