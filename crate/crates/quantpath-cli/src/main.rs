//! Command-line front end: fit solution paths from CSV data, stack
//! multi-response problems, select models by BIC, export plot data, and
//! re-certify stored paths against the optimality conditions.

mod document;
mod plot;
mod report;
mod specfile;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use quantpath::homotopy::{solve_path, SolverOptions, StopRule};
use quantpath::ingest::{self, ColumnKind, ColumnSpec, Transform};
use quantpath::path::{DegeneracyKind, SolutionPath, Termination};
use quantpath::problem::{mixed_norm, quantile_loss};
use quantpath::select::{bic_trace, BicSign};
use quantpath::subgrad::kkt_verify;

use document::{Metadata, PathDocument, SolverDoc, StdDoc};

#[derive(Parser)]
#[command(
    name = "quantpath",
    about = "Exact solution paths for group-sparse quantile regression",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum BicSignArg {
    Printed,
    Conventional,
}

impl From<BicSignArg> for BicSign {
    fn from(v: BicSignArg) -> Self {
        match v {
            BicSignArg::Printed => BicSign::Printed,
            BicSignArg::Conventional => BicSign::Conventional,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Coefficients,
    Tradeoff,
    Groupmax,
}

#[derive(clap::Args)]
struct FitFlags {
    /// CSV data file (header row; missing cells empty or NA).
    #[arg(long)]
    data: PathBuf,
    /// JSON column-spec file.
    #[arg(long)]
    spec: PathBuf,
    /// Quantile level in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Append an all-ones intercept column as its own group.
    #[arg(long, value_enum, default_value = "on")]
    intercept: OnOff,
    /// Jitter magnitude (relative to each column's standard deviation).
    #[arg(long)]
    jitter: Option<f64>,
    /// Jitter seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop before this many groups become active.
    #[arg(long = "max-groups")]
    max_groups: Option<usize>,
    /// Stop once the path reaches this norm budget.
    #[arg(long = "max-R")]
    max_r: Option<f64>,
    /// Output path document (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the full solution path for one response column.
    Fit(FitFlags),
    /// Stack several response columns and fit one simultaneous path.
    Stack {
        #[command(flatten)]
        flags: FitFlags,
        /// Comma-separated response column names.
        #[arg(long, value_delimiter = ',', required = true)]
        responses: Vec<String>,
    },
    /// BIC model selection along a stored path.
    Select {
        /// Path document written by fit or stack.
        #[arg(long)]
        path: PathBuf,
        /// Direction of the complexity term.
        #[arg(long = "bic-sign", value_enum, default_value = "printed")]
        bic_sign: BicSignArg,
    },
    /// Export plot vertices (CSV) and a line plot (SVG).
    Plot {
        #[arg(long)]
        path: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Output prefix; writes <out>.csv and <out>.svg.
        #[arg(long)]
        out: PathBuf,
        /// Draw a dashed vertical marker at this radius.
        #[arg(long = "r-bic")]
        r_bic: Option<f64>,
    },
    /// Re-verify a stored path against the optimality conditions.
    Certify {
        #[arg(long)]
        path: PathBuf,
        /// Verification tolerance (default 1e-8, or QUANTPATH_KKT_TOL).
        #[arg(long)]
        tol: Option<f64>,
    },
}

/// Errors with their process exit codes: 2 input, 3 tie, 4 singular,
/// 5 certification failure.
enum CliError {
    Input(String),
    Tie(String),
    Singular(String),
    Certify(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Tie(_) => 3,
            CliError::Singular(_) => 4,
            CliError::Certify(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Tie(m) | CliError::Singular(m) | CliError::Certify(m) => m,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn env_f64(name: &str) -> Option<f64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

/// Solver options with environment overrides for the default tolerances.
fn solver_options() -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(v) = env_f64("QUANTPATH_TIE_TOL") {
        opts.tie_tol = v;
    }
    if let Some(v) = env_f64("QUANTPATH_STRICT_MARGIN") {
        opts.strict_margin = v;
    }
    if let Some(v) = env_f64("QUANTPATH_PIVOT_TOL") {
        opts.pivot_tol = v;
    }
    if let Some(v) = env_f64("QUANTPATH_LAMBDA_FLOOR") {
        opts.lambda_floor = v;
    }
    opts
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(flags) => cmd_fit(flags),
        Command::Stack { flags, responses } => cmd_stack(flags, responses),
        Command::Select { path, bic_sign } => cmd_select(&path, bic_sign.into()),
        Command::Plot { path, kind, out, r_bic } => cmd_plot(&path, kind, &out, r_bic),
        Command::Certify { path, tol } => {
            let tol = tol.or_else(|| env_f64("QUANTPATH_KKT_TOL")).unwrap_or(1e-8);
            cmd_certify(&path, tol)
        }
    }
}

fn load_dataset(flags: &FitFlags, specs: &[ColumnSpec]) -> Result<ingest::Dataset, CliError> {
    let dataset = ingest::load_csv(&flags.data, specs).map_err(input)?;
    if dataset.provenance.dropped_rows > 0 {
        eprintln!(
            "note: dropped {} row(s) with missing values",
            dataset.provenance.dropped_rows
        );
    }
    match flags.jitter {
        Some(mag) => ingest::jitter(&dataset, mag, flags.seed).map_err(input),
        None => Ok(dataset),
    }
}

fn run_solver(
    problem: &quantpath::problem::QuantileProblem,
    flags: &FitFlags,
) -> Result<SolutionPath, CliError> {
    let stop = StopRule {
        max_active_groups: flags.max_groups,
        max_radius: flags.max_r,
        run_to_lambda_zero: true,
    };
    let path = solve_path(problem, &stop, &solver_options()).map_err(input)?;
    match path.termination() {
        Termination::Degenerate { kind: DegeneracyKind::TieBreak, detail } => {
            Err(CliError::Tie(format!("{detail}\nhint: retry with --jitter 1e-6 --seed <n>")))
        }
        Termination::Degenerate { kind: DegeneracyKind::Singular, detail } => {
            Err(CliError::Singular(detail.clone()))
        }
        _ => Ok(path),
    }
}

fn solver_doc(flags: &FitFlags) -> SolverDoc {
    let opts = solver_options();
    SolverDoc {
        tau: flags.tau,
        intercept: flags.intercept == OnOff::On,
        max_active_groups: flags.max_groups,
        max_radius: flags.max_r,
        tie_tol: opts.tie_tol,
        strict_margin: opts.strict_margin,
        pivot_tol: opts.pivot_tol,
    }
}

fn cmd_fit(flags: FitFlags) -> Result<(), CliError> {
    let specs = specfile::load_specs(&flags.spec).map_err(CliError::Input)?;
    let dataset = load_dataset(&flags, &specs)?;
    let built =
        ingest::build_problem(&dataset, &specs, flags.tau, flags.intercept == OnOff::On)
            .map_err(input)?;
    let path = run_solver(&built.problem, &flags)?;

    let metadata = Metadata {
        column_names: built.columns.iter().map(|c| c.name.clone()).collect(),
        group_names: built.group_names.clone(),
        standardization: built
            .columns
            .iter()
            .map(|c| c.standardization.map(StdDoc::from))
            .collect(),
        response_name: Some(built.response_name.clone()),
        response_standardization: built.response_standardization.map(StdDoc::from),
        layout: None,
        responses: None,
        jitter: dataset.provenance.jitter.as_ref().map(|j| document::JitterDoc {
            magnitude: j.magnitude,
            seed: j.seed,
        }),
        solver: solver_doc(&flags),
    };
    PathDocument::from_path(&path, metadata).write(&flags.out).map_err(CliError::Input)?;
    print!("{}", report::node_table(&path));
    println!("wrote {}", flags.out.display());
    Ok(())
}

fn cmd_stack(flags: FitFlags, responses: Vec<String>) -> Result<(), CliError> {
    let mut specs = specfile::load_specs(&flags.spec).map_err(CliError::Input)?;
    // The response set is named on the command line: re-type the named
    // columns, keeping only a standardize transform.
    for name in &responses {
        let spec = specs
            .iter_mut()
            .find(|s| &s.name == name)
            .ok_or_else(|| CliError::Input(format!("response column {name:?} not in the spec file")))?;
        spec.kind = ColumnKind::Response;
        spec.group = None;
        spec.transforms.retain(|t| matches!(t, Transform::Standardize));
    }
    if let Some(extra) = specs
        .iter()
        .find(|s| s.kind == ColumnKind::Response && !responses.contains(&s.name))
    {
        return Err(CliError::Input(format!(
            "column {:?} is declared as a response but missing from --responses",
            extra.name
        )));
    }

    let dataset = load_dataset(&flags, &specs)?;
    let built =
        ingest::build_stacked_problem(&dataset, &specs, flags.tau, flags.intercept == OnOff::On)
            .map_err(input)?;
    let path = run_solver(&built.problem, &flags)?;

    // Stacked column names: regressor name per response block.
    let mut column_names = Vec::with_capacity(built.layout.stacked_cols());
    let mut standardization = Vec::with_capacity(built.layout.stacked_cols());
    for response in &built.responses {
        for reg in &built.regressors {
            column_names.push(format!("{}@{}", reg.name, response));
            standardization.push(reg.standardization.map(StdDoc::from));
        }
    }
    let metadata = Metadata {
        column_names,
        group_names: built.regressors.iter().map(|r| r.name.clone()).collect(),
        standardization,
        response_name: None,
        response_standardization: None,
        layout: Some(built.layout.into()),
        responses: Some(built.responses.clone()),
        jitter: dataset.provenance.jitter.as_ref().map(|j| document::JitterDoc {
            magnitude: j.magnitude,
            seed: j.seed,
        }),
        solver: solver_doc(&flags),
    };
    PathDocument::from_path(&path, metadata).write(&flags.out).map_err(CliError::Input)?;
    print!("{}", report::node_table(&path));
    println!(
        "stacked {} responses x {} regressors into a {} x {} problem",
        built.layout.p,
        built.layout.m,
        built.layout.stacked_rows(),
        built.layout.stacked_cols()
    );
    println!("wrote {}", flags.out.display());
    Ok(())
}

fn cmd_select(doc_path: &Path, sign: BicSign) -> Result<(), CliError> {
    let doc = PathDocument::read(doc_path).map_err(CliError::Input)?;
    let path = doc.to_path().map_err(CliError::Input)?;
    let trace = bic_trace(&path, sign).map_err(input)?;

    print!("{}", report::bic_table(&trace));
    println!("selected R = {}", trace.argmin_radius);
    let selected = path
        .nodes()
        .iter()
        .find(|n| n.radius == trace.argmin_radius)
        .expect("argmin is a node");

    match &doc.metadata.layout {
        Some(layout) => {
            // Per-regressor group max-norms at the selection.
            let layout: quantpath::multiresponse::StackedLayout = (*layout).into();
            let b = quantpath::multiresponse::unstack_coefficients(&selected.beta, &layout)
                .map_err(input)?;
            println!("group max-norms at the selection (regressor x responses):");
            for k in 0..layout.m {
                let row: Vec<f64> = (0..layout.p).map(|j| b.at(k, j)).collect();
                let max = row.iter().map(|v| v.abs()).fold(0.0, f64::max);
                let name = doc
                    .metadata
                    .group_names
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("g{k}"));
                println!("  {name:<16} max {:<12.6} {}", max, report::fmt_vec(&row, 8));
            }
        }
        None => {
            println!("coefficients at the selection:");
            for (name, &b) in doc.metadata.column_names.iter().zip(&selected.beta) {
                if b.abs() > 1e-12 {
                    println!("  {name:<16} {b:.6}");
                }
            }
            if let Some(mapped) = report::back_mapped(&selected.beta, &doc.metadata) {
                if doc.metadata.standardization.iter().any(Option::is_some) {
                    println!("in source units:");
                    for (name, coef) in mapped.iter().filter(|(_, c)| c.abs() > 1e-12) {
                        println!("  {name:<16} {coef:.6}");
                    }
                }
            }
            let groups = path.problem().groups();
            println!("active groups:");
            for (k, group) in groups.iter().enumerate() {
                let max: f64 = group.iter().map(|&j| selected.beta[j].abs()).fold(0.0, f64::max);
                if max > 1e-9 {
                    let name = doc
                        .metadata
                        .group_names
                        .get(k)
                        .cloned()
                        .unwrap_or_else(|| format!("g{k}"));
                    println!("  {name:<16} max |coef| = {max:.6}");
                }
            }
        }
    }
    Ok(())
}

fn cmd_plot(doc_path: &Path, kind: PlotKind, out: &Path, r_bic: Option<f64>) -> Result<(), CliError> {
    let doc = PathDocument::read(doc_path).map_err(CliError::Input)?;
    let path = doc.to_path().map_err(CliError::Input)?;
    let nodes = path.nodes();
    let x: Vec<f64> = nodes.iter().map(|n| n.radius).collect();

    let series = match kind {
        PlotKind::Tradeoff => {
            let losses = quantpath::select::tradeoff_curve(&path);
            vec![plot::Series {
                name: "loss".to_string(),
                values: losses.into_iter().map(|(_, l)| l).collect(),
            }]
        }
        PlotKind::Coefficients => (0..path.problem().n_cols())
            .map(|j| plot::Series {
                name: doc
                    .metadata
                    .column_names
                    .get(j)
                    .cloned()
                    .unwrap_or_else(|| format!("b{j}")),
                values: nodes.iter().map(|n| n.beta[j]).collect(),
            })
            .collect(),
        PlotKind::Groupmax => path
            .problem()
            .groups()
            .iter()
            .enumerate()
            .map(|(k, group)| plot::Series {
                name: doc
                    .metadata
                    .group_names
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("g{k}")),
                values: nodes
                    .iter()
                    .map(|n| group.iter().map(|&j| n.beta[j].abs()).fold(0.0, f64::max))
                    .collect(),
            })
            .collect(),
    };

    let data = plot::PlotData { x, x_label: "R".to_string(), series, marker: r_bic };
    let csv_path = out.with_extension("csv");
    let svg_path = out.with_extension("svg");
    plot::write_csv(&data, &csv_path).map_err(CliError::Input)?;
    plot::write_svg(&data, &svg_path).map_err(CliError::Input)?;
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}

fn cmd_certify(doc_path: &Path, tol: f64) -> Result<(), CliError> {
    let doc = PathDocument::read(doc_path).map_err(CliError::Input)?;
    let path = doc.to_path().map_err(CliError::Input)?;
    let problem = path.problem();
    let mut worst: (f64, String) = (0.0, "none".to_string());
    let mut failures = 0usize;
    let mut record = |violation: f64, limit: f64, what: String| {
        if violation > worst.0 {
            worst = (violation, what.clone());
        }
        if violation > limit {
            failures += 1;
            eprintln!("FAIL {what}: violation {violation:.3e} > {limit:.3e}");
        }
    };

    for (t, node) in path.nodes().iter().enumerate() {
        let mut lambdas = vec![node.lambda_lo, node.lambda_mid()];
        if node.lambda_hi.is_finite() {
            lambdas.push(node.lambda_hi);
        }
        for lambda in lambdas {
            let u = node.u_at_lambda(lambda);
            let w = node.w_at_lambda(lambda);
            let rep = kkt_verify(&node.beta, lambda, &u, &w, problem, tol).map_err(input)?;
            record(rep.worst(), tol, format!("node {t} KKT at lambda {lambda:.6}"));
        }
        let norm = mixed_norm(&node.beta, problem.groups());
        record(
            (norm - node.radius).abs(),
            tol * node.radius.abs().max(1.0),
            format!("node {t} norm identity"),
        );
        let recomputed = quantpath::problem::residuals(&node.beta, problem);
        let max_dev = recomputed
            .iter()
            .zip(&node.residuals)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        record(max_dev, tol, format!("node {t} stored residuals"));
    }

    // Trade-off slope identity per segment. The finite difference of stored
    // node losses carries representation noise of order eps * scale / dR,
    // which is added to the budget so that short segments are judged by
    // what the stored data can resolve.
    let tau = problem.tau();
    let nodes = path.nodes();
    for t in 0..nodes.len().saturating_sub(1) {
        let (a, b) = (&nodes[t], &nodes[t + 1]);
        let mut delta_loss = 0.0;
        for (&ra, &rb) in a.residuals.iter().zip(&b.residuals) {
            delta_loss += if ra >= 0.0 && rb >= 0.0 {
                2.0 * tau * (rb - ra)
            } else if ra <= 0.0 && rb <= 0.0 {
                -2.0 * (1.0 - tau) * (rb - ra)
            } else {
                quantile_loss(rb, tau) - quantile_loss(ra, tau)
            };
        }
        let dr = b.radius - a.radius;
        let lambda = b.lambda_hi;
        let scale = 1.0 + b.radius.abs() * (1.0 + lambda.abs());
        let noise_floor = 64.0 * f64::EPSILON * scale / dr.abs().max(f64::MIN_POSITIVE);
        record(
            (delta_loss / dr + lambda).abs(),
            tol * lambda.abs().max(1.0) + noise_floor,
            format!("segment {t} slope"),
        );
    }
    record(
        doc.max_slope_defect,
        tol,
        "recorded analytic slope defect".to_string(),
    );

    println!(
        "certified {} nodes: worst violation {:.3e} ({})",
        path.nodes().len(),
        worst.0,
        worst.1
    );
    if failures > 0 {
        Err(CliError::Certify(format!(
            "{failures} check(s) failed; worst: {} at {:.3e}",
            worst.1, worst.0
        )))
    } else {
        println!("all checks within tolerance {tol:.1e}");
        Ok(())
    }
}
