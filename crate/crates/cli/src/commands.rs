//! The generate, fit, and eval subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use ghmm::baselines;
use ghmm::em::{self, FitResult, RestartReport};
use ghmm::io;
use ghmm::metrics::{self, EvalReport};
use ghmm::model::{
    log_likelihood, FitConfig, HeatMixtureModel, Method, ResponsibilityMatrix, SignalSet,
};
use ghmm::synth;
use ghmm::{Error, Result};

use crate::config::{parse_value, Configurable};

pub fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Sample a synthetic dataset: random connected graphs, one heat-diffusion
/// Gaussian per cluster.
#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Nodes per graph.
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    /// Edge probability of the random connected graphs.
    #[arg(long, default_value_t = 0.7)]
    pub edge_prob: f64,
    /// Number of mixture components.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Diffusion time.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Number of signals.
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives signals.csv, labels.csv, and the ground-truth bundle.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Split signals across components in exact proportion rather than by
    /// sampling labels.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub exact_counts: bool,
    /// key=value file applied where no flag is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Configurable for GenerateArgs {
    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn keys() -> &'static [&'static str] {
        &[
            "nodes",
            "edge_prob",
            "k",
            "tau",
            "m",
            "seed",
            "out_dir",
            "exact_counts",
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "nodes" => self.nodes = parse_value(key, value)?,
            "edge_prob" => self.edge_prob = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "m" => self.m = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "out_dir" => self.out_dir = parse_value(key, value)?,
            "exact_counts" => self.exact_counts = parse_value(key, value)?,
            _ => unreachable!("key list is checked by the caller"),
        }
        Ok(())
    }
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let mut spec = synth::SynthSpec::<f64>::new(args.tau, args.m).with_k(args.k);
    spec.n_nodes = args.nodes;
    spec.edge_prob = args.edge_prob;
    spec.seed = args.seed;
    spec.exact_counts = args.exact_counts;
    let (signals, model) = synth::generate(&spec)?;
    let labels = signals
        .labels()
        .expect("generated signals carry labels")
        .to_vec();
    fs::create_dir_all(&args.out_dir)?;
    io::write_signals(args.out_dir.join("signals.csv"), &signals)?;
    io::write_labels(args.out_dir.join("labels.csv"), &labels)?;
    io::save_result(&args.out_dir, &truth_result(model, &signals, &labels)?)?;
    println!(
        "wrote {} signals on {} nodes (K = {}) to {}",
        signals.n_signals(),
        signals.n_nodes(),
        args.k,
        args.out_dir.display()
    );
    Ok(())
}

/// Dress the generating model up as a fit, so a truth directory is readable
/// by everything that reads fitted bundles (self-evaluation included).
fn truth_result(
    model: HeatMixtureModel<f64>,
    signals: &SignalSet<f64>,
    labels: &[usize],
) -> Result<FitResult<f64>> {
    let ll = log_likelihood(&model, signals)?;
    let k = model.k();
    Ok(FitResult {
        model,
        responsibilities: ResponsibilityMatrix::from_hard_labels(labels, k)?,
        log_likelihood: ll,
        log_likelihood_history: vec![ll],
        n_iterations: 1,
        converged: true,
        restart_index: 0,
        ll_decrease_count: 0,
        n_empty_reinits: 0,
        restarts: vec![RestartReport {
            log_likelihood: Some(ll),
            converged: true,
            n_iterations: 1,
            error: None,
        }],
    })
}

/// Fit a model to a signal CSV and write the result as a bundle.
#[derive(Args, Debug)]
pub struct FitArgs {
    /// Input signal CSV (one row per signal).
    #[arg(long)]
    pub signals: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Sparsity weight of the graph-recovery objective.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Random initializations; the best final log-likelihood wins.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives the bundle, fit.log, and timeline.csv for timestamped input.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// ghmm, gmm, or kmeans-gl.
    #[arg(long, default_value = "ghmm", value_parser = parse_method)]
    pub method: Method,
    /// The CSV has a leading timestamp column.
    #[arg(long)]
    pub timestamps: bool,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Relative log-likelihood change below which EM stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub fista_max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub fista_tol: f64,
    /// gmm only: drop precision entries below this fraction of the largest.
    #[arg(long, default_value_t = baselines::DEFAULT_PRECISION_THRESHOLD)]
    pub precision_threshold: f64,
    /// key=value file applied where no flag is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Configurable for FitArgs {
    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn keys() -> &'static [&'static str] {
        &[
            "signals",
            "k",
            "tau",
            "beta",
            "restarts",
            "seed",
            "out_dir",
            "method",
            "timestamps",
            "max_iters",
            "tol",
            "fista_max_iters",
            "fista_tol",
            "precision_threshold",
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "signals" => self.signals = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "beta" => self.beta = parse_value(key, value)?,
            "restarts" => self.restarts = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "out_dir" => self.out_dir = parse_value(key, value)?,
            "method" => self.method = value.parse()?,
            "timestamps" => self.timestamps = parse_value(key, value)?,
            "max_iters" => self.max_iters = parse_value(key, value)?,
            "tol" => self.tol = parse_value(key, value)?,
            "fista_max_iters" => self.fista_max_iters = parse_value(key, value)?,
            "fista_tol" => self.fista_tol = parse_value(key, value)?,
            "precision_threshold" => self.precision_threshold = parse_value(key, value)?,
            _ => unreachable!("key list is checked by the caller"),
        }
        Ok(())
    }
}

pub fn fit_config(args: &FitArgs) -> Result<FitConfig<f64>> {
    let mut cfg = FitConfig::new(args.k, args.tau).with_seed(args.seed);
    cfg.n_restarts = args.restarts;
    cfg.em_max_iters = args.max_iters;
    cfg.em_tol = args.tol;
    cfg.fista.beta = args.beta;
    cfg.fista.max_iters = args.fista_max_iters;
    cfg.fista.tol = args.fista_tol;
    cfg.validate()?;
    Ok(cfg)
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let x: SignalSet<f64> = io::read_signals(&args.signals, args.timestamps)?;
    let cfg = fit_config(args)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut log = format!("method {}\n", args.method);
    let labels = match args.method {
        Method::Ghmm => {
            let res = em::fit(&x, &cfg)?;
            for (i, r) in res.restarts.iter().enumerate() {
                match (&r.log_likelihood, &r.error) {
                    (Some(ll), _) => log.push_str(&format!(
                        "restart {i}: log-likelihood {ll}, {} after {} evaluations\n",
                        if r.converged { "converged" } else { "stopped" },
                        r.n_iterations
                    )),
                    (None, Some(e)) => log.push_str(&format!("restart {i}: failed: {e}\n")),
                    (None, None) => {}
                }
            }
            log.push_str(&format!("best restart: {}\n", res.restart_index));
            if res.ll_decrease_count > 0 {
                let warning = format!(
                    "warning: log-likelihood decreased on {} update(s); \
                     the graph step optimizes a surrogate",
                    res.ll_decrease_count
                );
                eprintln!("{warning}");
                log.push_str(&warning);
                log.push('\n');
            }
            log.push_str("log-likelihood history:\n");
            for (i, ll) in res.log_likelihood_history.iter().enumerate() {
                log.push_str(&format!("  {i} {ll}\n"));
            }
            io::save_result(&args.out_dir, &res)?;
            println!(
                "fit: converged = {}, log-likelihood = {}",
                res.converged, res.log_likelihood
            );
            res.responsibilities.hard_labels()
        }
        Method::Gmm => {
            let res = baselines::gmm_fit(&x, &cfg, args.precision_threshold)?;
            log.push_str(&format!("log-likelihood {}\n", res.score));
            io::save_baseline(&args.out_dir, &res)?;
            println!("fit: method = gmm, log-likelihood = {}", res.score);
            res.predicted_labels
        }
        Method::KmeansGl => {
            let res = baselines::kmeans_then_graphs(&x, &cfg)?;
            log.push_str(&format!("within-cluster sum of squares {}\n", -res.score));
            io::save_baseline(&args.out_dir, &res)?;
            println!(
                "fit: method = kmeans-gl, within-cluster sum of squares = {}",
                -res.score
            );
            res.predicted_labels
        }
    };
    fs::write(args.out_dir.join("fit.log"), log)?;
    if let Some(stamps) = x.timestamps() {
        let mut writer = csv::Writer::from_path(args.out_dir.join("timeline.csv"))?;
        writer.write_record(["timestamp", "cluster"])?;
        for (t, l) in stamps.iter().zip(&labels) {
            writer.write_record([t.as_str(), &l.to_string()])?;
        }
        writer.flush()?;
    }
    Ok(())
}

/// Score a fitted bundle against a ground-truth directory.
#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground-truth directory (labels.csv plus a bundle).
    #[arg(long)]
    pub truth_dir: PathBuf,
    /// Fitted bundle directory to score.
    #[arg(long)]
    pub fit_dir: PathBuf,
    /// Output format: csv or json.
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Learned edges count when above this fraction of the largest weight.
    #[arg(long, default_value_t = metrics::DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    /// key=value file applied where no flag is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Configurable for EvalArgs {
    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn keys() -> &'static [&'static str] {
        &["truth_dir", "fit_dir", "format", "edge_threshold"]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "truth_dir" => self.truth_dir = parse_value(key, value)?,
            "fit_dir" => self.fit_dir = parse_value(key, value)?,
            "format" => self.format = value.to_owned(),
            "edge_threshold" => self.edge_threshold = parse_value(key, value)?,
            _ => unreachable!("key list is checked by the caller"),
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    nmse_percent: f64,
    mean_f_measure: f64,
    per_cluster_f_measure: &'a [f64],
    matched_permutation: &'a [usize],
}

pub fn evaluate_dirs(truth_dir: &Path, fit_dir: &Path, edge_threshold: f64) -> Result<EvalReport> {
    let truth: io::BundleContents<f64> = io::load_bundle(truth_dir)?;
    let labels_path = truth_dir.join("labels.csv");
    let true_labels = if labels_path.is_file() {
        io::read_labels(labels_path)?
    } else {
        truth.responsibilities.hard_labels()
    };
    let fitted: io::BundleContents<f64> = io::load_bundle(fit_dir)?;
    let predicted = fitted.responsibilities.hard_labels();
    metrics::evaluate(
        &true_labels,
        &predicted,
        &truth.graphs,
        &fitted.graphs,
        edge_threshold,
    )
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let report = evaluate_dirs(&args.truth_dir, &args.fit_dir, args.edge_threshold)?;
    match args.format.as_str() {
        "csv" => {
            let mut header = String::from("nmse_percent,mean_f_measure");
            let mut row = format!(
                "{},{}",
                report.clustering_nmse_percent, report.mean_f_measure
            );
            for (k, f) in report.per_cluster_f_measure.iter().enumerate() {
                header.push_str(&format!(",f_measure_{k}"));
                row.push_str(&format!(",{f}"));
            }
            header.push_str(",matched_permutation");
            let perm: Vec<String> = report
                .matched_permutation
                .iter()
                .map(usize::to_string)
                .collect();
            row.push_str(&format!(",{}", perm.join(";")));
            println!("{header}");
            println!("{row}");
        }
        "json" => {
            let json = JsonReport {
                nmse_percent: report.clustering_nmse_percent,
                mean_f_measure: report.mean_f_measure,
                per_cluster_f_measure: &report.per_cluster_f_measure,
                matched_permutation: &report.matched_permutation,
            };
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        other => {
            return Err(Error::InvalidConfig {
                reason: format!("format must be csv or json, got {other:?}"),
            })
        }
    }
    Ok(())
}
