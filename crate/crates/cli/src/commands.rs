//! Subcommand implementations.

// `!(x > 0.0)` deliberately treats NaN as invalid.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use stggm::eval::{auc, bic_select, default_threshold_grid, partial_auc, roc_curve, top_k_edges};
use stggm::graph::pairs;
use stggm::hyper::{resolve_hyperparams, resolve_hyperparams_cell, UserConfig};
use stggm::io;
use stggm::joint::{gibbs_joint, JointOptions};
use stggm::model::{DatasetGrid, ObservationMatrix};
use stggm::mrf::MrfParams;
use stggm::oracle::{exact_graph_posterior, exact_joint_posterior};
use stggm::simgen::{build_experiment, SimSpec};
use stggm::single::{gibbs_single, EdgeRule, GibbsSchedule, SingleOptions};

/// CLI-level error carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad inputs: files, formats, configuration, grid shape. Exit 3.
    Data(String),
    /// Numerical failures inside the estimators. Exit 4.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(m) | CliError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

fn numerical_kind(e: &stggm::Error) -> bool {
    use stggm::Error::*;
    match e {
        CholeskyFailure { .. }
        | DegenerateResidual { .. }
        | GuardExceeded { .. }
        | InfeasiblePerturbation { .. }
        | NonConvergence { .. }
        | SingularCovariance { .. } => true,
        Sweep { source, .. } => numerical_kind(source),
        InvalidConfig(_) | InvalidGrid(_) => false,
    }
}

impl From<stggm::Error> for CliError {
    fn from(e: stggm::Error) -> Self {
        if numerical_kind(&e) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        match e {
            io::IoError::Model(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn fnv1a(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Replay record written next to every command's outputs.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    version: String,
    seed: Option<u64>,
    config: serde_json::Value,
    config_hash: String,
    threads: usize,
    wall_clock_secs: f64,
    outputs: Vec<String>,
}

fn write_run_manifest(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    config: serde_json::Value,
    started: Instant,
    outputs: &[PathBuf],
) -> CliResult {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_hash: fnv1a(&config.to_string()),
        config,
        threads: rayon::current_num_threads(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        outputs: outputs
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
            .collect(),
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::data(e.to_string()))?;
    fs::write(dir.join("run_manifest.json"), text)?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<UserConfig, CliError> {
    match path {
        Some(p) => Ok(io::read_config(p)?),
        None => Ok(UserConfig::default()),
    }
}

fn config_json(config: &UserConfig) -> serde_json::Value {
    serde_json::to_value(config).unwrap_or(serde_json::Value::Null)
}

fn schedule_from(config: &UserConfig) -> GibbsSchedule {
    GibbsSchedule {
        iterations: config.iterations(),
        burn_in: config.burn_in(),
        thin: config.thin(),
    }
}

fn edge_rule_from(config: &UserConfig) -> Result<EdgeRule, CliError> {
    match config.edge_rule.as_deref() {
        None | Some("or") => Ok(EdgeRule::Or),
        Some("and") => Ok(EdgeRule::And),
        Some(other) => Err(CliError::data(format!(
            "edge_rule must be 'or' or 'and', got '{other}'"
        ))),
    }
}

pub fn simulate(spec_path: &Path, out_dir: &Path) -> CliResult {
    let started = Instant::now();
    let spec: SimSpec = io::read_sim_spec(spec_path)?;
    let experiment = build_experiment(&spec)?;
    fs::create_dir_all(out_dir.join("cells"))?;

    let grid = &experiment.grid;
    let p = grid.p().expect("generated grid has cells");
    let names: Vec<String> = (0..p).map(|i| format!("v{i}")).collect();
    let mut outputs = Vec::new();
    let mut manifest_cells = Vec::new();
    for &(b, t) in &grid.present_cells() {
        let key = grid.key(b, t);
        let rel = format!("cells/{key}.csv");
        let path = out_dir.join(&rel);
        io::write_observation_csv(&path, &names, grid.cell(b, t).unwrap())?;
        outputs.push(path);
        manifest_cells.push(io::ManifestCell {
            locus: key.locus.clone(),
            period: key.period,
            path: rel,
        });
    }
    for (key, truth) in &experiment.truths {
        let path = out_dir.join(format!("truth_{key}.csv"));
        io::write_adjacency_csv(&path, truth)?;
        outputs.push(path);
    }
    let manifest_path = out_dir.join("manifest.toml");
    io::write_manifest(
        &manifest_path,
        &io::Manifest {
            cells: manifest_cells,
        },
    )?;
    outputs.push(manifest_path);

    let config = serde_json::to_value(&spec).unwrap_or(serde_json::Value::Null);
    write_run_manifest(
        out_dir,
        "simulate",
        Some(spec.seed),
        config,
        started,
        &outputs,
    )
}

fn prepared_single(data: &Path) -> Result<ObservationMatrix, CliError> {
    let (_, x) = io::read_observation_csv(data)?;
    let grid = DatasetGrid::single(x).prepared()?;
    Ok(grid.cell(0, 0).expect("validated").clone())
}

pub fn fit_single(
    data: &Path,
    config_path: Option<&Path>,
    out: &Path,
    seed_flag: Option<u64>,
    traces: bool,
) -> CliResult {
    let started = Instant::now();
    let config = load_config(config_path)?;
    let seed = seed_flag.or(config.seed).unwrap_or(0);
    let x = prepared_single(data)?;
    let hyper = resolve_hyperparams_cell(&x, &config)?;
    let options = SingleOptions {
        symmetric: config.symmetric(),
        edge_rule: edge_rule_from(&config)?,
        fix_sigma: config.fix_sigma.clone(),
        seed,
        retain_traces: traces,
    };
    let summary = gibbs_single(&x, &hyper, schedule_from(&config), &options)?;

    fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    let score_path = out.join("edge_score.csv");
    io::write_edge_scores_csv(&score_path, &summary.edge_score)?;
    outputs.push(score_path);

    if let Some(tr) = &summary.traces {
        let p = summary.edge_score.nrows();
        let gamma_path = out.join("gamma_trace.csv");
        let mut w = csv::Writer::from_path(&gamma_path).map_err(io::IoError::from)?;
        let mut header = vec!["iter".to_string()];
        header.extend(pairs(p).map(|(i, j)| format!("g{i}_{j}")));
        w.write_record(&header).map_err(io::IoError::from)?;
        for (k, bits) in tr.gamma.iter().enumerate() {
            let iter = summary.meta.burn_in + k * summary.meta.thin;
            let mut row = vec![iter.to_string()];
            row.extend(bits.iter().map(|b| b.to_string()));
            w.write_record(&row).map_err(io::IoError::from)?;
        }
        w.flush().map_err(|e| CliError::data(e.to_string()))?;
        outputs.push(gamma_path);

        let sigma_path = out.join("sigma2_trace.csv");
        let mut w = csv::Writer::from_path(&sigma_path).map_err(io::IoError::from)?;
        let mut header = vec!["iter".to_string()];
        header.extend((0..p).map(|i| format!("sigma2_{i}")));
        w.write_record(&header).map_err(io::IoError::from)?;
        for (k, s) in tr.sigma2.iter().enumerate() {
            let iter = summary.meta.burn_in + k * summary.meta.thin;
            let mut row = vec![iter.to_string()];
            row.extend(s.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(io::IoError::from)?;
        }
        w.flush().map_err(|e| CliError::data(e.to_string()))?;
        outputs.push(sigma_path);
    }

    write_run_manifest(
        out,
        "fit-single",
        Some(seed),
        config_json(&config),
        started,
        &outputs,
    )
}

#[derive(Serialize)]
struct EtaStat {
    mean: f64,
    sd: f64,
}

#[derive(Serialize)]
struct JointSummaryFile {
    eta_s: EtaStat,
    eta_t: EtaStat,
    cells: Vec<String>,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
}

pub fn fit_joint(
    manifest: &Path,
    config_path: Option<&Path>,
    out_dir: &Path,
    seed_flag: Option<u64>,
) -> CliResult {
    let started = Instant::now();
    let config = load_config(config_path)?;
    let seed = seed_flag.or(config.seed).unwrap_or(0);
    let (_, raw) = io::load_grid(manifest)?;
    let grid = raw.prepared()?;
    let hypers = resolve_hyperparams(&grid, &config)?;
    let n_cells = grid.present_cells().len();
    let options = JointOptions {
        symmetric: config.symmetric(),
        edge_rule: edge_rule_from(&config)?,
        fix_sigma: config.fix_sigma.clone().map(|v| vec![v; n_cells]),
        seed,
        eta1: config.eta1(),
        eta_s_init: config.eta_s.unwrap_or(1.0),
        eta_t_init: config.eta_t.unwrap_or(1.0),
        fix_eta: config.fix_eta.unwrap_or(false),
        proposal_sd: config
            .proposal_sd
            .unwrap_or(stggm::hyper::DEFAULT_PROPOSAL_SD),
        raster: Default::default(),
    };
    let summary = gibbs_joint(&grid, &hypers, schedule_from(&config), &options)?;

    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    for (key, scores) in summary.cells.iter().zip(&summary.edge_scores) {
        let path = out_dir.join(format!("{key}.csv"));
        io::write_edge_scores_csv(&path, scores)?;
        outputs.push(path);
    }
    let trace_path = out_dir.join("eta_trace.csv");
    io::write_eta_trace_csv(&trace_path, &summary.eta_trace)?;
    outputs.push(trace_path);

    let summary_file = JointSummaryFile {
        eta_s: EtaStat {
            mean: summary.eta_s.mean,
            sd: summary.eta_s.sd,
        },
        eta_t: EtaStat {
            mean: summary.eta_t.mean,
            sd: summary.eta_t.sd,
        },
        cells: summary.cells.iter().map(|k| k.to_string()).collect(),
        iterations: summary.meta.iterations,
        burn_in: summary.meta.burn_in,
        thin: summary.meta.thin,
        seed,
    };
    let summary_path = out_dir.join("summary.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary_file).map_err(|e| CliError::data(e.to_string()))?,
    )?;
    outputs.push(summary_path);

    write_run_manifest(
        out_dir,
        "fit-joint",
        Some(seed),
        config_json(&config),
        started,
        &outputs,
    )
}

#[derive(Serialize)]
struct Metrics {
    auc: f64,
    partial_auc: f64,
    fp_max: f64,
    n_edges: usize,
    n_pairs: usize,
}

pub fn evaluate(scores: &Path, truth: &Path, fp_max: Option<f64>, out_dir: &Path) -> CliResult {
    let started = Instant::now();
    let score_matrix = io::read_edge_scores_csv(scores)?;
    let p = score_matrix.nrows();
    let truth_graph = io::read_adjacency_csv(truth, p)?;
    if truth_graph.edge_count() == 0 {
        return Err(CliError::data("truth adjacency has no edges"));
    }
    let curve = roc_curve(&score_matrix, &truth_graph);
    let cap = fp_max.unwrap_or(truth_graph.edge_count() as f64);
    if !(cap > 0.0) {
        return Err(CliError::data("fp_max must be positive"));
    }

    fs::create_dir_all(out_dir)?;
    let roc_path = out_dir.join("roc.csv");
    let mut w = csv::Writer::from_path(&roc_path).map_err(io::IoError::from)?;
    w.write_record(["threshold", "tp", "fp"])
        .map_err(io::IoError::from)?;
    for pt in &curve.points {
        w.write_record([
            pt.threshold.to_string(),
            pt.tp.to_string(),
            pt.fp.to_string(),
        ])
        .map_err(io::IoError::from)?;
    }
    w.flush().map_err(|e| CliError::data(e.to_string()))?;

    let metrics = Metrics {
        auc: auc(&curve),
        partial_auc: partial_auc(&curve, cap),
        fp_max: cap,
        n_edges: curve.n_pos,
        n_pairs: curve.n_pos + curve.n_neg,
    };
    let metrics_path = out_dir.join("metrics.json");
    fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&metrics).map_err(|e| CliError::data(e.to_string()))?,
    )?;

    write_run_manifest(
        out_dir,
        "evaluate",
        None,
        serde_json::json!({ "fp_max": cap }),
        started,
        &[roc_path, metrics_path],
    )
}

#[derive(Serialize)]
struct SelectionFile {
    mode: String,
    k: Option<usize>,
    threshold: Option<f64>,
    bic: Option<f64>,
    n_edges: usize,
    outcomes: Option<Vec<serde_json::Value>>,
}

pub fn select(
    data: &Path,
    scores: &Path,
    mode: crate::SelectMode,
    k: Option<usize>,
    grid: Option<&str>,
    out_dir: &Path,
) -> CliResult {
    let started = Instant::now();
    let score_matrix = io::read_edge_scores_csv(scores)?;
    let x = prepared_single(data)?;
    if x.p() != score_matrix.nrows() {
        return Err(CliError::data(format!(
            "data has {} variables but the score table covers {}",
            x.p(),
            score_matrix.nrows()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let edges_path = out_dir.join("selected_edges.csv");
    let mut outputs = vec![edges_path.clone()];

    let selection = match mode {
        crate::SelectMode::Topk => {
            let k = k.ok_or_else(|| CliError::data("--k is required in topk mode"))?;
            let edges = top_k_edges(&score_matrix, k)?;
            let graph = stggm::graph::Adjacency::from_edges(score_matrix.nrows(), &edges);
            io::write_adjacency_csv(&edges_path, &graph)?;
            SelectionFile {
                mode: "topk".into(),
                k: Some(k),
                threshold: None,
                bic: None,
                n_edges: edges.len(),
                outcomes: None,
            }
        }
        crate::SelectMode::Bic => {
            let thresholds: Vec<f64> = match grid {
                Some(text) => text
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| CliError::data(format!("bad threshold '{s}'")))
                    })
                    .collect::<Result<_, _>>()?,
                None => default_threshold_grid(&score_matrix, 200),
            };
            let result = bic_select(&x, &score_matrix, &thresholds, 1e-6, 500)?;
            io::write_adjacency_csv(&edges_path, &result.structure)?;
            let theta_path = out_dir.join("theta_hat.csv");
            let mut w = csv::Writer::from_path(&theta_path).map_err(io::IoError::from)?;
            for r in 0..result.theta.nrows() {
                let row: Vec<String> = (0..result.theta.ncols())
                    .map(|c| result.theta[(r, c)].to_string())
                    .collect();
                w.write_record(&row).map_err(io::IoError::from)?;
            }
            w.flush().map_err(|e| CliError::data(e.to_string()))?;
            outputs.push(theta_path);
            SelectionFile {
                mode: "bic".into(),
                k: None,
                threshold: Some(result.threshold),
                bic: Some(result.bic),
                n_edges: result.structure.edge_count(),
                outcomes: Some(
                    result
                        .outcomes
                        .iter()
                        .map(|o| {
                            serde_json::json!({
                                "threshold": o.threshold,
                                "n_edges": o.n_edges,
                                "bic": o.bic,
                                "error": o.error,
                            })
                        })
                        .collect(),
                ),
            }
        }
    };
    let selection_path = out_dir.join("selection.json");
    fs::write(
        &selection_path,
        serde_json::to_string_pretty(&selection).map_err(|e| CliError::data(e.to_string()))?,
    )?;
    outputs.push(selection_path);

    write_run_manifest(
        out_dir,
        "select",
        None,
        serde_json::Value::Null,
        started,
        &outputs,
    )
}

pub fn oracle_check(
    data: Option<&Path>,
    manifest: Option<&Path>,
    config_path: &Path,
    against: Option<&Path>,
    out_dir: &Path,
) -> CliResult {
    let started = Instant::now();
    let config = load_config(Some(config_path))?;
    let fix_sigma = config
        .fix_sigma
        .clone()
        .ok_or_else(|| CliError::data("oracle-check requires fix_sigma in the config"))?;
    if !config.symmetric() {
        return Err(CliError::data(
            "oracle-check enumerates symmetric graphs; set symmetric = true",
        ));
    }
    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    let mut max_dev: Option<f64> = None;

    match (data, manifest) {
        (Some(data), None) => {
            let x = prepared_single(data)?;
            let hyper = resolve_hyperparams_cell(&x, &config)?;
            let post = exact_graph_posterior(&x, &fix_sigma, &hyper)?;
            let marginals = post.edge_marginals();
            let path = out_dir.join("exact_marginals.csv");
            io::write_edge_scores_csv(&path, &marginals)?;
            outputs.push(path);
            if let Some(against) = against {
                let sampled = io::read_edge_scores_csv(against)?;
                if sampled.nrows() != marginals.nrows() {
                    return Err(CliError::data("score table size mismatch"));
                }
                let mut worst: f64 = 0.0;
                for (i, j) in pairs(marginals.nrows()) {
                    worst = worst.max((sampled[(i, j)] - marginals[(i, j)]).abs());
                }
                max_dev = Some(worst);
            }
        }
        (None, Some(manifest)) => {
            let (_, raw) = io::load_grid(manifest)?;
            let grid = raw.prepared()?;
            let eta_s = config
                .eta_s
                .ok_or_else(|| CliError::data("grid oracle-check requires eta_s in the config"))?;
            let eta_t = config
                .eta_t
                .ok_or_else(|| CliError::data("grid oracle-check requires eta_t in the config"))?;
            let phi = MrfParams::new(config.eta1(), eta_s, eta_t)?;
            let hypers = resolve_hyperparams(&grid, &config)?;
            let sigma2: Vec<Vec<f64>> = vec![fix_sigma.clone(); grid.present_cells().len()];
            let post = exact_joint_posterior(&grid, &sigma2, &hypers, &phi)?;
            let mut worst: f64 = 0.0;
            for (c, &(b, t)) in grid.present_cells().iter().enumerate() {
                let key = grid.key(b, t);
                let marginals = post.edge_marginals(c);
                let path = out_dir.join(format!("exact_marginals_{key}.csv"));
                io::write_edge_scores_csv(&path, &marginals)?;
                outputs.push(path);
                if let Some(against) = against {
                    let sampled = io::read_edge_scores_csv(&against.join(format!("{key}.csv")))?;
                    for (i, j) in pairs(marginals.nrows()) {
                        worst = worst.max((sampled[(i, j)] - marginals[(i, j)]).abs());
                    }
                }
            }
            if against.is_some() {
                max_dev = Some(worst);
            }
        }
        _ => {
            return Err(CliError::data(
                "oracle-check takes exactly one of --data or --manifest",
            ))
        }
    }

    if let Some(worst) = max_dev {
        let report_path = out_dir.join("report.json");
        fs::write(
            &report_path,
            serde_json::to_string_pretty(&serde_json::json!({ "max_abs_deviation": worst }))
                .map_err(|e| CliError::data(e.to_string()))?,
        )?;
        outputs.push(report_path);
    }
    write_run_manifest(
        out_dir,
        "oracle-check",
        None,
        config_json(&config),
        started,
        &outputs,
    )
}

pub fn benchmark(
    p_list: Option<&str>,
    graphs_list: Option<&str>,
    p_for_graphs: usize,
    n: usize,
    iters: usize,
    seed: u64,
    out_dir: &Path,
) -> CliResult {
    let started = Instant::now();
    // bare `--p N` times one single-graph run
    let fallback_p_list;
    let p_list = match (p_list, graphs_list.is_some()) {
        (None, false) => {
            fallback_p_list = p_for_graphs.to_string();
            Some(fallback_p_list.as_str())
        }
        (other, _) => other,
    };
    let parse_list = |text: &str| -> Result<Vec<usize>, CliError> {
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::data(format!("bad list entry '{s}'")))
            })
            .collect()
    };
    fs::create_dir_all(out_dir)?;
    let timings_path = out_dir.join("timings.csv");
    let mut w = csv::Writer::from_path(&timings_path).map_err(io::IoError::from)?;
    w.write_record(["kind", "size", "threads", "seconds"])
        .map_err(io::IoError::from)?;
    let threads = rayon::current_num_threads();
    let mut outputs = vec![timings_path.clone()];

    let schedule = GibbsSchedule {
        iterations: iters,
        burn_in: 0,
        thin: 1,
    };
    if let Some(text) = p_list {
        for p in parse_list(text)? {
            let spec = SimSpec {
                p,
                n,
                sparsity: 0.05,
                change_fraction: 0.0,
                perturbation_fraction: 0.0,
                n_loci: 1,
                n_periods: 1,
                entry_mode: Default::default(),
                seed,
            };
            let exp = build_experiment(&spec)?;
            let grid = exp.grid.prepared()?;
            let x = grid.cell(0, 0).unwrap();
            let hyper = resolve_hyperparams_cell(x, &UserConfig::default())?;
            let start = Instant::now();
            gibbs_single(
                x,
                &hyper,
                schedule,
                &SingleOptions {
                    seed,
                    ..Default::default()
                },
            )?;
            let secs = start.elapsed().as_secs_f64();
            w.write_record(["p", &p.to_string(), &threads.to_string(), &secs.to_string()])
                .map_err(io::IoError::from)?;
        }
    }

    if let Some(text) = graphs_list {
        let counts = parse_list(text)?;
        let mut times = Vec::new();
        for &g in &counts {
            let spec = SimSpec {
                p: p_for_graphs,
                n,
                sparsity: 0.05,
                change_fraction: 0.2,
                perturbation_fraction: 0.0,
                n_loci: g,
                n_periods: 1,
                entry_mode: Default::default(),
                seed,
            };
            let exp = build_experiment(&spec)?;
            let grid = exp.grid.prepared()?;
            let hypers = resolve_hyperparams(&grid, &UserConfig::default())?;
            let start = Instant::now();
            gibbs_joint(
                &grid,
                &hypers,
                schedule,
                &JointOptions {
                    seed,
                    ..Default::default()
                },
            )?;
            let secs = start.elapsed().as_secs_f64();
            times.push((g, secs));
            w.write_record([
                "graphs",
                &g.to_string(),
                &threads.to_string(),
                &secs.to_string(),
            ])
            .map_err(io::IoError::from)?;
        }
        if times.len() >= 2 {
            let nf = times.len() as f64;
            let mx = times.iter().map(|&(g, _)| g as f64).sum::<f64>() / nf;
            let my = times.iter().map(|&(_, t)| t).sum::<f64>() / nf;
            let sxy: f64 = times.iter().map(|&(g, t)| (g as f64 - mx) * (t - my)).sum();
            let sxx: f64 = times.iter().map(|&(g, _)| (g as f64 - mx).powi(2)).sum();
            let slope = sxy / sxx;
            let intercept = my - slope * mx;
            let ss_res: f64 = times
                .iter()
                .map(|&(g, t)| (t - intercept - slope * g as f64).powi(2))
                .sum();
            let ss_tot: f64 = times.iter().map(|&(_, t)| (t - my).powi(2)).sum();
            let r2 = 1.0 - ss_res / ss_tot;
            let fit_path = out_dir.join("fit.json");
            fs::write(
                &fit_path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "slope": slope,
                    "intercept": intercept,
                    "r2": r2,
                }))
                .map_err(|e| CliError::data(e.to_string()))?,
            )?;
            outputs.push(fit_path);
        }
    }
    w.flush().map_err(|e| CliError::data(e.to_string()))?;

    write_run_manifest(
        out_dir,
        "benchmark",
        Some(seed),
        serde_json::json!({ "n": n, "iters": iters }),
        started,
        &outputs,
    )
}
