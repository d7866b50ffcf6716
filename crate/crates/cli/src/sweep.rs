//! The sweep subcommand: the full protocol (generate, fit, evaluate) over a
//! grid of signal counts or diffusion times, several repeats per point,
//! emitting one long-format CSV row per (method, value, repeat).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;

use ghmm::model::{FitConfig, Method};
use ghmm::{baselines, em, metrics, synth};
use ghmm::{Error, Result};

use crate::config::{parse_value, Configurable};

/// Defaults follow the synthetic protocol: 20-node graphs at edge
/// probability 0.7, K = 2 equal clusters, best of 5 restarts, M = 200 while
/// tau varies and tau = 0.5 while M varies.
#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Which knob varies: m or tau.
    #[arg(long)]
    pub vary: String,
    /// Comma-separated values; "a..b" expands to an inclusive range.
    #[arg(long)]
    pub values: String,
    /// Step for "a..b" ranges (default 0.1 for tau, 50 for m).
    #[arg(long)]
    pub step: Option<f64>,
    /// Datasets per grid value.
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Comma-separated subset of ghmm,gmm,kmeans-gl.
    #[arg(long, default_value = "ghmm,gmm,kmeans-gl")]
    pub methods: String,
    /// Output CSV; rows are appended as trials finish.
    #[arg(long)]
    pub out: PathBuf,
    /// Fixed signal count while tau varies.
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    /// Fixed diffusion time while m varies.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0.7)]
    pub edge_prob: f64,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub fista_max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub fista_tol: f64,
    #[arg(long, default_value_t = metrics::DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    #[arg(long, default_value_t = baselines::DEFAULT_PRECISION_THRESHOLD)]
    pub precision_threshold: f64,
    /// Split signals across components in exact proportion.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub exact_counts: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Keep rows already in --out and compute only the missing ones.
    #[arg(long)]
    pub resume: bool,
    /// key=value file applied where no flag is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Configurable for SweepArgs {
    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn keys() -> &'static [&'static str] {
        &[
            "vary",
            "values",
            "step",
            "repeats",
            "methods",
            "out",
            "m",
            "tau",
            "nodes",
            "edge_prob",
            "k",
            "restarts",
            "beta",
            "seed",
            "max_iters",
            "tol",
            "fista_max_iters",
            "fista_tol",
            "edge_threshold",
            "precision_threshold",
            "exact_counts",
            "jobs",
            "resume",
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "vary" => self.vary = value.to_owned(),
            "values" => self.values = value.to_owned(),
            "step" => self.step = Some(parse_value(key, value)?),
            "repeats" => self.repeats = parse_value(key, value)?,
            "methods" => self.methods = value.to_owned(),
            "out" => self.out = parse_value(key, value)?,
            "m" => self.m = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "nodes" => self.nodes = parse_value(key, value)?,
            "edge_prob" => self.edge_prob = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "restarts" => self.restarts = parse_value(key, value)?,
            "beta" => self.beta = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "max_iters" => self.max_iters = parse_value(key, value)?,
            "tol" => self.tol = parse_value(key, value)?,
            "fista_max_iters" => self.fista_max_iters = parse_value(key, value)?,
            "fista_tol" => self.fista_tol = parse_value(key, value)?,
            "edge_threshold" => self.edge_threshold = parse_value(key, value)?,
            "precision_threshold" => self.precision_threshold = parse_value(key, value)?,
            "exact_counts" => self.exact_counts = parse_value(key, value)?,
            "jobs" => self.jobs = Some(parse_value(key, value)?),
            "resume" => self.resume = parse_value(key, value)?,
            _ => unreachable!("key list is checked by the caller"),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Vary {
    M,
    Tau,
}

impl Vary {
    fn name(self) -> &'static str {
        match self {
            Vary::M => "m",
            Vary::Tau => "tau",
        }
    }
}

const HEADER: &str = "method,vary,value,repeat,nmse_percent,f_measure,wall_time_s";

/// Streams per value index, so every (value, repeat) dataset is independent
/// of the grid layout; (0, 0) keeps the base seed itself, making a
/// single-value single-repeat sweep reproduce generate + fit + eval at the
/// same --seed.
const REPEAT_STRIDE: u64 = 1_000_000;

fn derive_seed(seed: u64, value_index: usize, repeat: usize) -> u64 {
    seed.wrapping_add((value_index as u64).wrapping_mul(REPEAT_STRIDE) + repeat as u64)
}

fn parse_vary(s: &str) -> Result<Vary> {
    match s {
        "m" => Ok(Vary::M),
        "tau" => Ok(Vary::Tau),
        other => Err(Error::InvalidConfig {
            reason: format!("--vary must be m or tau, got {other:?}"),
        }),
    }
}

fn parse_f64(token: &str) -> Result<f64> {
    token.trim().parse().map_err(|_| Error::InvalidConfig {
        reason: format!("cannot parse value {token:?}"),
    })
}

fn parse_values(spec: &str, step: Option<f64>, vary: Vary) -> Result<Vec<f64>> {
    let default_step = match vary {
        Vary::M => 50.0,
        Vary::Tau => 0.1,
    };
    let step = step.unwrap_or(default_step);
    let mut out = Vec::new();
    for token in spec.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        if let Some((a, b)) = token.split_once("..") {
            let (a, b) = (parse_f64(a)?, parse_f64(b)?);
            if step <= 0.0 || b < a {
                return Err(Error::InvalidConfig {
                    reason: format!("bad range {token:?} with step {step}"),
                });
            }
            let mut i = 0u32;
            loop {
                let v = a + step * f64::from(i);
                if v > b + step * 1e-9 {
                    break;
                }
                // Snap accumulated float error back onto the decimal grid,
                // so 0.1..0.3 lands on 0.3 and not 0.30000000000000004.
                out.push(format!("{v:.10e}").parse().expect("formatted float"));
                i += 1;
            }
        } else {
            out.push(parse_f64(token)?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "--values expanded to nothing".into(),
        });
    }
    Ok(out)
}

fn parse_methods(spec: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = spec
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse())
        .collect::<Result<_>>()?;
    let mut seen = HashSet::new();
    for m in &methods {
        if !seen.insert(m.as_str()) {
            return Err(Error::InvalidConfig {
                reason: format!("method {m} listed twice"),
            });
        }
    }
    if methods.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "--methods is empty".into(),
        });
    }
    Ok(methods)
}

fn value_string(vary: Vary, v: f64) -> String {
    match vary {
        Vary::M => format!("{}", v.round() as usize),
        Vary::Tau => format!("{v}"),
    }
}

struct Task {
    index: usize,
    value_index: usize,
    value: f64,
    repeat: usize,
    method: Method,
}

struct Row {
    method: &'static str,
    value: String,
    repeat: usize,
    nmse: f64,
    f_measure: f64,
    wall: f64,
}

fn run_trial(task: &Task, args: &SweepArgs, vary: Vary) -> Result<Row> {
    let (m, tau) = match vary {
        Vary::M => (task.value.round() as usize, args.tau),
        Vary::Tau => (args.m, task.value),
    };
    let dataset_seed = derive_seed(args.seed, task.value_index, task.repeat);
    let mut spec = synth::SynthSpec::<f64>::new(tau, m).with_k(args.k);
    spec.n_nodes = args.nodes;
    spec.edge_prob = args.edge_prob;
    spec.seed = dataset_seed;
    spec.exact_counts = args.exact_counts;
    let (x, model) = synth::generate(&spec)?;
    let truth_labels = x.labels().expect("generated signals carry labels").to_vec();

    let mut cfg = FitConfig::new(args.k, tau).with_seed(dataset_seed);
    cfg.n_restarts = args.restarts;
    cfg.em_max_iters = args.max_iters;
    cfg.em_tol = args.tol;
    cfg.fista.beta = args.beta;
    cfg.fista.max_iters = args.fista_max_iters;
    cfg.fista.tol = args.fista_tol;

    let start = Instant::now();
    let (predicted, graphs) = match task.method {
        Method::Ghmm => {
            let r = em::fit(&x, &cfg)?;
            (r.responsibilities.hard_labels(), r.model.graphs().to_vec())
        }
        Method::Gmm => {
            let r = baselines::gmm_fit(&x, &cfg, args.precision_threshold)?;
            (r.predicted_labels, r.graphs)
        }
        Method::KmeansGl => {
            let r = baselines::kmeans_then_graphs(&x, &cfg)?;
            (r.predicted_labels, r.graphs)
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let report = metrics::evaluate(
        &truth_labels,
        &predicted,
        model.graphs(),
        &graphs,
        args.edge_threshold,
    )?;
    Ok(Row {
        method: task.method.as_str(),
        value: value_string(vary, task.value),
        repeat: task.repeat,
        nmse: report.clustering_nmse_percent,
        f_measure: report.mean_f_measure,
        wall,
    })
}

/// Rows already present in an output file being resumed.
fn completed_rows(path: &Path, vary: Vary) -> Result<HashSet<(String, String, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != HEADER {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            message: format!("{} is not a sweep output file", path.display()),
        });
    }
    let mut done = HashSet::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::RaggedRows {
                row: idx + 2,
                expected: 7,
                found: fields.len(),
            });
        }
        if fields[1] != vary.name() {
            return Err(Error::Parse {
                row: idx + 2,
                col: 2,
                message: format!(
                    "existing rows vary {:?} but this run varies {:?}",
                    fields[1],
                    vary.name()
                ),
            });
        }
        let value = value_string(vary, parse_f64(fields[2])?);
        let repeat = fields[3].parse().map_err(|_| Error::Parse {
            row: idx + 2,
            col: 4,
            message: format!("bad repeat index {:?}", fields[3]),
        })?;
        done.insert((fields[0].to_owned(), value, repeat));
    }
    Ok(done)
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let vary = parse_vary(&args.vary)?;
    let values = parse_values(&args.values, args.step, vary)?;
    let methods = parse_methods(&args.methods)?;
    if args.repeats == 0 || args.repeats as u64 > REPEAT_STRIDE {
        return Err(Error::InvalidConfig {
            reason: format!("--repeats must be in 1..={REPEAT_STRIDE}"),
        });
    }

    let mut tasks = Vec::new();
    for (value_index, &value) in values.iter().enumerate() {
        for repeat in 0..args.repeats {
            for &method in &methods {
                tasks.push(Task {
                    index: tasks.len(),
                    value_index,
                    value,
                    repeat,
                    method,
                });
            }
        }
    }

    let resuming = args.resume && args.out.is_file();
    let done = if resuming {
        completed_rows(&args.out, vary)?
    } else {
        HashSet::new()
    };
    let pending: Vec<Task> = tasks
        .into_iter()
        .filter(|t| {
            !done.contains(&(
                t.method.as_str().to_owned(),
                value_string(vary, t.value),
                t.repeat,
            ))
        })
        .collect();
    let skipped = done.len();

    let mut writer = if resuming {
        BufWriter::new(fs::OpenOptions::new().append(true).open(&args.out)?)
    } else {
        if let Some(parent) = args.out.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut w = BufWriter::new(fs::File::create(&args.out)?);
        writeln!(w, "{HEADER}")?;
        w.flush()?;
        w
    };

    let pool = match args.jobs {
        Some(jobs) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig {
                    reason: format!("cannot build a {jobs}-thread pool: {e}"),
                })?,
        ),
        None => None,
    };

    // Workers push (task index, outcome); the collector writes rows in task
    // order so output is reproducible regardless of scheduling, flushing as
    // each row completes. On failure the contiguous prefix already written
    // stays valid for --resume.
    let cancel = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<Row>)>();
    let mut rows_written = 0usize;
    let mut first_err: Option<(usize, Error)> = None;

    std::thread::scope(|scope| -> Result<()> {
        let pending = &pending;
        let cancel = &cancel;
        scope.spawn(move || {
            let work = || {
                pending.par_iter().for_each_with(tx, |tx, task| {
                    if cancel.load(Ordering::Relaxed) {
                        return;
                    }
                    let outcome = run_trial(task, args, vary);
                    let _ = tx.send((task.index, outcome));
                });
            };
            match &pool {
                Some(p) => p.install(work),
                None => work(),
            }
        });

        let order: Vec<usize> = pending.iter().map(|t| t.index).collect();
        let mut buffer: BTreeMap<usize, Row> = BTreeMap::new();
        let mut write_pos = 0usize;
        for (index, outcome) in rx {
            match outcome {
                Ok(row) => {
                    buffer.insert(index, row);
                }
                Err(e) => {
                    if first_err.as_ref().is_none_or(|(i, _)| index < *i) {
                        first_err = Some((index, e));
                        cancel.store(true, Ordering::Relaxed);
                    }
                }
            }
            while write_pos < order.len() {
                let next = order[write_pos];
                if first_err.as_ref().is_some_and(|(i, _)| next >= *i) {
                    break;
                }
                let Some(row) = buffer.remove(&next) else {
                    break;
                };
                writeln!(
                    writer,
                    "{},{},{},{},{},{},{}",
                    row.method,
                    vary.name(),
                    row.value,
                    row.repeat,
                    row.nmse,
                    row.f_measure,
                    row.wall
                )?;
                writer.flush()?;
                rows_written += 1;
                write_pos += 1;
            }
        }
        Ok(())
    })?;

    if let Some((_, e)) = first_err {
        return Err(e);
    }
    if skipped > 0 {
        println!(
            "wrote {rows_written} rows to {} ({skipped} already present)",
            args.out.display()
        );
    } else {
        println!("wrote {rows_written} rows to {}", args.out.display());
    }
    Ok(())
}
