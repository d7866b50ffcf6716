//! Text formats for signals, graphs, and fitted models.
//!
//! Three formats, documented bit-exactly in docs/formats.md:
//! signal CSV (signals as rows, optional leading timestamp column),
//! edge lists ("# nodes N" header, then "i j w" lines with i < j), and
//! model bundles (a directory holding model.json, one edge list per
//! component, and a responsibilities CSV).
//!
//! Every float is written with 17 significant digits, so reading back what
//! was written reproduces the exact same values.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineResult;
use crate::em::{FitResult, RestartReport};
use crate::error::{Error, Result};
use crate::model::{HeatMixtureModel, Method, ResponsibilityMatrix, SignalSet, WeightedGraph};
use crate::scalar::Real;

pub const BUNDLE_SCHEMA: &str = "ghmm-bundle-v1";

fn fmt_float<T: Real>(x: T) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

fn parse_cell<T: Real>(cell: &str, row: usize, col: usize) -> Result<T> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        col,
        message: format!("expected a number, got {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            col,
            message: format!("non-finite value {cell:?}"),
        });
    }
    Ok(T::from_f64_lossy(v))
}

/// Numeric CSV body shared by the signal and responsibility readers.
/// Rows and columns in errors are 1-based file positions, counting the
/// header line.
fn read_csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            message: "empty file, expected a header row".into(),
        });
    }
    let header = rows.remove(0);
    for (d, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::RaggedRows {
                row: d + 2,
                expected: header.len(),
                found: row.len(),
            });
        }
    }
    Ok((header, rows))
}

/// Read a signal CSV: a header row of node names, then one row per signal.
/// With `has_timestamps` the first column holds opaque timestamp strings
/// instead of data. Columns of the returned set are the file's rows.
pub fn read_signals<T: Real>(path: impl AsRef<Path>, has_timestamps: bool) -> Result<SignalSet<T>> {
    let path = path.as_ref();
    let (header, rows) = read_csv_rows(path)?;
    let skip = usize::from(has_timestamps);
    if header.len() <= skip {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            message: "header has no node columns".into(),
        });
    }
    let n = header.len() - skip;
    let m = rows.len();
    if m == 0 {
        return Err(Error::Parse {
            row: 2,
            col: 1,
            message: "no signal rows".into(),
        });
    }
    let mut data = DMatrix::zeros(n, m);
    let mut stamps = Vec::with_capacity(m);
    for (d, row) in rows.iter().enumerate() {
        if has_timestamps {
            stamps.push(row[0].clone());
        }
        for i in 0..n {
            data[(i, d)] = parse_cell(&row[skip + i], d + 2, skip + i + 1)?;
        }
    }
    let mut out = SignalSet::new(data)?.with_node_names(header[skip..].to_vec())?;
    if has_timestamps {
        out = out.with_timestamps(stamps)?;
    }
    Ok(out)
}

/// Write signals as CSV, one row per signal. Node names become the header;
/// unnamed nodes get `node_0..node_{N-1}`. Timestamps, when present, form a
/// leading `timestamp` column.
pub fn write_signals<T: Real>(path: impl AsRef<Path>, signals: &SignalSet<T>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let names: Vec<String> = match signals.node_names() {
        Some(ns) => ns.to_vec(),
        None => (0..signals.n_nodes()).map(|i| format!("node_{i}")).collect(),
    };
    let stamps = signals.timestamps();
    let mut header = Vec::new();
    if stamps.is_some() {
        header.push("timestamp".to_owned());
    }
    header.extend(names);
    writer.write_record(&header)?;
    for m in 0..signals.n_signals() {
        let mut row = Vec::with_capacity(header.len());
        if let Some(ts) = stamps {
            row.push(ts[m].clone());
        }
        for i in 0..signals.n_nodes() {
            row.push(fmt_float(signals.data()[(i, m)]));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Read cluster labels: a `label` header, then one 0-based index per line.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let (_, rows) = read_csv_rows(path.as_ref())?;
    rows.iter()
        .enumerate()
        .map(|(d, row)| {
            row[0].trim().parse().map_err(|_| Error::Parse {
                row: d + 2,
                col: 1,
                message: format!("expected a cluster index, got {:?}", row[0]),
            })
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut out = String::from("label\n");
    for l in labels {
        out.push_str(&format!("{l}\n"));
    }
    fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Write a graph as an edge list: a `# nodes N` header, then one
/// `i j w` line per positive-weight edge with i < j.
pub fn write_graph<T: Real>(path: impl AsRef<Path>, graph: &WeightedGraph<T>) -> Result<()> {
    let n = graph.n_nodes();
    let mut file = fs::File::create(path.as_ref())?;
    writeln!(file, "# nodes {n}")?;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = graph.weights()[(i, j)];
            if w > T::zero() {
                writeln!(file, "{i} {j} {}", fmt_float(w))?;
            }
        }
    }
    Ok(())
}

/// Read an edge list written by [`write_graph`]. Lines starting with `#`
/// after the header are comments. Each edge must satisfy i < j, appear
/// once, and carry a positive weight.
pub fn read_graph<T: Real>(path: impl AsRef<Path>) -> Result<WeightedGraph<T>> {
    let file = fs::File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let n: usize = header
        .strip_prefix("# nodes ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Parse {
            row: 1,
            col: 1,
            message: format!("expected '# nodes N' header, got {header:?}"),
        })?;
    let mut w = DMatrix::zeros(n, n);
    for (idx, line) in lines.enumerate() {
        let row = idx + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::RaggedRows {
                row,
                expected: 3,
                found: fields.len(),
            });
        }
        let parse_idx = |col: usize| -> Result<usize> {
            fields[col - 1].parse().map_err(|_| Error::Parse {
                row,
                col,
                message: format!("expected a node index, got {:?}", fields[col - 1]),
            })
        };
        let i = parse_idx(1)?;
        let j = parse_idx(2)?;
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        if i >= j {
            return Err(Error::InvalidGraph {
                reason: format!("edge ({i}, {j}) at line {row}: edges must satisfy i < j"),
            });
        }
        let weight: T = parse_cell(fields[2], row, 3)?;
        if weight <= T::zero() {
            return Err(Error::InvalidGraph {
                reason: format!("edge ({i}, {j}) at line {row} has non-positive weight"),
            });
        }
        if w[(i, j)] > T::zero() {
            return Err(Error::DuplicateEdge { i, j });
        }
        w[(i, j)] = weight;
        w[(j, i)] = weight;
    }
    WeightedGraph::new(w)
}

#[derive(Serialize, Deserialize)]
struct BundleJson {
    schema: String,
    method: String,
    k: usize,
    n_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    means: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitJson>,
}

#[derive(Serialize, Deserialize)]
struct FitJson {
    log_likelihood: f64,
    log_likelihood_history: Vec<f64>,
    n_iterations: usize,
    converged: bool,
    restart_index: usize,
    ll_decrease_count: usize,
    n_empty_reinits: usize,
    #[serde(default)]
    restarts: Vec<RestartJson>,
}

#[derive(Serialize, Deserialize)]
struct RestartJson {
    log_likelihood: Option<f64>,
    converged: bool,
    n_iterations: usize,
    error: Option<String>,
}

/// Everything a bundle directory can hold. Full EM fits carry the mixture
/// model and convergence trace; baseline bundles carry only labels (as
/// one-hot responsibilities), graphs, and a method-specific score.
#[derive(Debug, Clone)]
pub struct BundleContents<T: Real> {
    pub method: Method,
    pub responsibilities: ResponsibilityMatrix<T>,
    pub graphs: Vec<WeightedGraph<T>>,
    pub model: Option<HeatMixtureModel<T>>,
    pub log_likelihood_history: Option<Vec<T>>,
    pub log_likelihood: Option<T>,
    pub n_iterations: Option<usize>,
    pub converged: Option<bool>,
    pub restart_index: Option<usize>,
    pub ll_decrease_count: Option<usize>,
    pub n_empty_reinits: Option<usize>,
    pub restarts: Option<Vec<RestartReport<T>>>,
    pub score: Option<T>,
}

fn graph_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("graph_{k}.edges"))
}

fn write_bundle<T: Real>(
    dir: &Path,
    json: &BundleJson,
    graphs: &[WeightedGraph<T>],
    gamma: &ResponsibilityMatrix<T>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(json)?)?;
    for (k, g) in graphs.iter().enumerate() {
        write_graph(graph_path(dir, k), g)?;
    }
    let mut writer = csv::Writer::from_path(dir.join("responsibilities.csv"))?;
    let header: Vec<String> = (0..gamma.k()).map(|k| format!("component_{k}")).collect();
    writer.write_record(&header)?;
    for m in 0..gamma.n_signals() {
        let row: Vec<String> = (0..gamma.k())
            .map(|k| fmt_float(gamma.gamma()[(m, k)]))
            .collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Save a full EM fit as a bundle directory.
pub fn save_result<T: Real>(dir: impl AsRef<Path>, result: &FitResult<T>) -> Result<()> {
    let model = &result.model;
    let json = BundleJson {
        schema: BUNDLE_SCHEMA.to_owned(),
        method: Method::Ghmm.as_str().to_owned(),
        k: model.k(),
        n_nodes: model.n_nodes(),
        tau: Some(model.tau().to_f64_lossy()),
        alphas: Some(model.alphas().iter().map(|a| a.to_f64_lossy()).collect()),
        means: Some(
            model
                .means()
                .iter()
                .map(|mu| mu.iter().map(|x| x.to_f64_lossy()).collect())
                .collect(),
        ),
        score: None,
        fit: Some(FitJson {
            log_likelihood: result.log_likelihood.to_f64_lossy(),
            log_likelihood_history: result
                .log_likelihood_history
                .iter()
                .map(|x| x.to_f64_lossy())
                .collect(),
            n_iterations: result.n_iterations,
            converged: result.converged,
            restart_index: result.restart_index,
            ll_decrease_count: result.ll_decrease_count,
            n_empty_reinits: result.n_empty_reinits,
            restarts: result
                .restarts
                .iter()
                .map(|r| RestartJson {
                    log_likelihood: r.log_likelihood.map(|x| x.to_f64_lossy()),
                    converged: r.converged,
                    n_iterations: r.n_iterations,
                    error: r.error.clone(),
                })
                .collect(),
        }),
    };
    write_bundle(dir.as_ref(), &json, model.graphs(), &result.responsibilities)
}

/// Save a baseline run as a bundle directory: predicted labels become
/// one-hot responsibilities.
pub fn save_baseline<T: Real>(dir: impl AsRef<Path>, result: &BaselineResult<T>) -> Result<()> {
    let k = result.graphs.len();
    let gamma = ResponsibilityMatrix::from_hard_labels(&result.predicted_labels, k)?;
    let json = BundleJson {
        schema: BUNDLE_SCHEMA.to_owned(),
        method: result.method.as_str().to_owned(),
        k,
        n_nodes: result.graphs[0].n_nodes(),
        tau: None,
        alphas: None,
        means: None,
        score: Some(result.score.to_f64_lossy()),
        fit: None,
    };
    write_bundle(dir.as_ref(), &json, &result.graphs, &gamma)
}

fn require_file(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile { path })
    }
}

/// Load any bundle directory, fitted or baseline.
pub fn load_bundle<T: Real>(dir: impl AsRef<Path>) -> Result<BundleContents<T>> {
    let dir = dir.as_ref();
    let json_path = require_file(dir.join("model.json"))?;
    let json: BundleJson = serde_json::from_str(&fs::read_to_string(json_path)?)?;
    if json.schema != BUNDLE_SCHEMA {
        return Err(Error::SchemaVersionMismatch {
            expected: BUNDLE_SCHEMA.to_owned(),
            found: json.schema,
        });
    }
    let method = Method::from_str(&json.method)?;

    let graphs: Vec<WeightedGraph<T>> = (0..json.k)
        .map(|k| read_graph(require_file(graph_path(dir, k))?))
        .collect::<Result<_>>()?;
    for g in &graphs {
        if g.n_nodes() != json.n_nodes {
            return Err(Error::DimensionMismatch {
                context: "bundle graph size".into(),
                expected: json.n_nodes,
                found: g.n_nodes(),
            });
        }
    }

    let gamma_path = require_file(dir.join("responsibilities.csv"))?;
    let (header, rows) = read_csv_rows(&gamma_path)?;
    if header.len() != json.k {
        return Err(Error::DimensionMismatch {
            context: "responsibility columns".into(),
            expected: json.k,
            found: header.len(),
        });
    }
    let mut g = DMatrix::zeros(rows.len(), json.k);
    for (d, row) in rows.iter().enumerate() {
        for k in 0..json.k {
            g[(d, k)] = parse_cell(&row[k], d + 2, k + 1)?;
        }
    }
    let responsibilities = ResponsibilityMatrix::new(g)?;

    let model = match (&json.tau, &json.alphas, &json.means) {
        (Some(tau), Some(alphas), Some(means)) => Some(HeatMixtureModel::new(
            DVector::from_iterator(alphas.len(), alphas.iter().map(|&a| T::from_f64_lossy(a))),
            means
                .iter()
                .map(|mu| {
                    DVector::from_iterator(mu.len(), mu.iter().map(|&x| T::from_f64_lossy(x)))
                })
                .collect(),
            graphs.clone(),
            T::from_f64_lossy(*tau),
        )?),
        (None, None, None) => None,
        _ => {
            return Err(Error::InvalidModel {
                reason: "bundle must carry tau, alphas, and means together or not at all".into(),
            })
        }
    };

    let fit = json.fit;
    Ok(BundleContents {
        method,
        responsibilities,
        graphs,
        model,
        log_likelihood_history: fit.as_ref().map(|f| {
            f.log_likelihood_history
                .iter()
                .map(|&x| T::from_f64_lossy(x))
                .collect()
        }),
        log_likelihood: fit.as_ref().map(|f| T::from_f64_lossy(f.log_likelihood)),
        n_iterations: fit.as_ref().map(|f| f.n_iterations),
        converged: fit.as_ref().map(|f| f.converged),
        restart_index: fit.as_ref().map(|f| f.restart_index),
        ll_decrease_count: fit.as_ref().map(|f| f.ll_decrease_count),
        n_empty_reinits: fit.as_ref().map(|f| f.n_empty_reinits),
        restarts: fit.as_ref().map(|f| {
            f.restarts
                .iter()
                .map(|r| RestartReport {
                    log_likelihood: r.log_likelihood.map(T::from_f64_lossy),
                    converged: r.converged,
                    n_iterations: r.n_iterations,
                    error: r.error.clone(),
                })
                .collect()
        }),
        score: json.score.map(T::from_f64_lossy),
    })
}

/// Load a bundle written by [`save_result`], reassembling the fit.
pub fn load_result<T: Real>(dir: impl AsRef<Path>) -> Result<FitResult<T>> {
    let contents = load_bundle(dir)?;
    let missing = |what: &str| Error::InvalidModel {
        reason: format!(
            "bundle written by method '{}' has no {what}",
            contents.method
        ),
    };
    Ok(FitResult {
        model: contents.model.clone().ok_or_else(|| missing("mixture model"))?,
        responsibilities: contents.responsibilities.clone(),
        log_likelihood: contents.log_likelihood.ok_or_else(|| missing("fit record"))?,
        log_likelihood_history: contents
            .log_likelihood_history
            .clone()
            .ok_or_else(|| missing("fit record"))?,
        n_iterations: contents.n_iterations.unwrap_or_default(),
        converged: contents.converged.unwrap_or_default(),
        restart_index: contents.restart_index.unwrap_or_default(),
        ll_decrease_count: contents.ll_decrease_count.unwrap_or_default(),
        n_empty_reinits: contents.n_empty_reinits.unwrap_or_default(),
        restarts: contents.restarts.unwrap_or_default(),
    })
}
