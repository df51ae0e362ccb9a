use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use gmcluster::synth::{ConcentrationReport, Lemma1Report, MIN_LEMMA1_REPS};
use gmcluster::{
    ami, concentration_sweep, gmcluster, lemma1_check, read_csv_path, BicEntry, ClusterAssignment, CsvOptions,
    MixtureTemplate, Timings,
};
use serde::{Deserialize, Serialize};

use crate::args::RunArgs;

pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const RESULT_FILE: &str = "result.json";
pub const BIC_FILE: &str = "bic.csv";
pub const SIMULATION_REPORT_FILE: &str = "simulation.json";
pub const CONCENTRATION_FILE: &str = "concentration.csv";

/// Failure classes that map onto process exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid input data (exit 1).
    Data(String),
    /// Invalid options or simulation spec (exit 2).
    Config(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Data(_) => 1,
            Failure::Config(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Data(m) | Failure::Config(m) => m,
        }
    }
}

impl From<gmcluster::Error> for Failure {
    fn from(e: gmcluster::Error) -> Self {
        use gmcluster::Error::*;
        match e {
            InvalidConfig(_) | InvalidSpec(_) | KOutOfRange { .. } => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: PathBuf, contents: &[u8]) -> Result<(), Failure> {
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn prepare_output_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>, Failure>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::Data(e.to_string());
    w.write_record(header).map_err(fail)?;
    fill(&mut w).map_err(fail)?;
    w.into_inner().map_err(|e| Failure::Data(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ClusterReport<'a> {
    version: &'static str,
    input: String,
    n_objects: usize,
    n_features_input: usize,
    n_features: usize,
    dropped_columns: usize,
    log_applied: bool,
    kmax: usize,
    k_hat: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ami: Option<f64>,
    bic_trace: &'a [BicEntry],
    warnings: &'a [String],
    config: &'a RunArgs,
    timings: &'a Timings,
}

pub fn cluster(input: &Path, run: &RunArgs) -> Result<(), Failure> {
    run.validate().map_err(Failure::Config)?;
    let data = read_csv_path(
        input,
        CsvOptions {
            delimiter: run.delimiter,
        },
    )
    .map_err(|e| match e {
        gmcluster::Error::Io(_) | gmcluster::Error::Parse { .. } => io_failure(input, e),
        other => other.into(),
    })?;
    let out = gmcluster(&data.matrix, &run.cluster_config())?;

    let truth_ami = match &data.labels {
        Some(labels) => {
            let truth = ClusterAssignment::from_keys(labels)?;
            Some(ami(&truth, &out.labels, run.ami_norm())?)
        }
        None => None,
    };

    prepare_output_dir(&run.output_dir)?;
    let assignments = csv_bytes(&["object_id", "label"], |w| {
        for (id, label) in data.ids.iter().zip(out.labels.labels()) {
            w.write_record([id.as_str(), &label.to_string()])?;
        }
        Ok(())
    })?;
    write_file(run.output_dir.join(ASSIGNMENTS_FILE), &assignments)?;

    let bic = csv_bytes(&["k", "bic"], |w| {
        for e in &out.bic_trace {
            let b = e.bic.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([e.k.to_string(), b])?;
        }
        Ok(())
    })?;
    write_file(run.output_dir.join(BIC_FILE), &bic)?;

    let report = ClusterReport {
        version: env!("CARGO_PKG_VERSION"),
        input: input.display().to_string(),
        n_objects: out.n_objects,
        n_features_input: data.matrix.n_features(),
        n_features: out.n_features,
        dropped_columns: out.dropped_columns.len(),
        log_applied: out.log_applied,
        kmax: out.kmax,
        k_hat: out.k_hat,
        ami: truth_ami,
        bic_trace: &out.bic_trace,
        warnings: &out.warnings,
        config: run,
        timings: &out.timings,
    };
    write_file(run.output_dir.join(RESULT_FILE), &to_json(&report)?)?;

    match truth_ami {
        Some(a) => println!("k_hat = {}, AMI vs label column = {a:.6}", out.k_hat),
        None => println!("k_hat = {}", out.k_hat),
    }
    Ok(())
}

/// Reads `object_id,label` pairs. Header names `object_id`/`id` and `label`
/// are honoured in any column order; without them the first two columns are used.
fn read_labels(path: &Path, delimiter: u8) -> Result<Vec<(String, String)>, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_failure(path, e))?;
    let headers = rdr.headers().map_err(|e| io_failure(path, e))?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let (id_col, label_col) = match (find(&["object_id", "id"]), find(&["label"])) {
        (Some(i), Some(l)) => (i, l),
        _ if headers.len() >= 2 => (0, 1),
        _ => {
            return Err(Failure::Data(format!(
                "{}: expected object_id,label columns",
                path.display()
            )))
        }
    };
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| io_failure(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let (Some(id), Some(label)) = (record.get(id_col), record.get(label_col)) else {
            return Err(Failure::Data(format!("{}: line {line}: missing field", path.display())));
        };
        if !seen.insert(id.to_string()) {
            return Err(Failure::Data(format!(
                "{}: line {line}: duplicate object id `{id}`",
                path.display()
            )));
        }
        rows.push((id.to_string(), label.to_string()));
    }
    Ok(rows)
}

pub fn eval(pred: &Path, truth: &Path, run: &RunArgs) -> Result<f64, Failure> {
    run.validate().map_err(Failure::Config)?;
    let truth_rows = read_labels(truth, run.delimiter)?;
    let pred_rows: HashMap<String, String> = read_labels(pred, run.delimiter)?.into_iter().collect();
    if pred_rows.len() != truth_rows.len() || truth_rows.iter().any(|(id, _)| !pred_rows.contains_key(id)) {
        return Err(Failure::Data(format!(
            "object ids differ between {} and {}",
            pred.display(),
            truth.display()
        )));
    }
    let truth_labels: Vec<&str> = truth_rows.iter().map(|(_, l)| l.as_str()).collect();
    let pred_labels: Vec<&str> = truth_rows.iter().map(|(id, _)| pred_rows[id].as_str()).collect();
    let value = ami(
        &ClusterAssignment::from_keys(&truth_labels)?,
        &ClusterAssignment::from_keys(&pred_labels)?,
        run.ami_norm(),
    )?;
    println!("{value:.6}");
    Ok(value)
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma1Settings {
    pub p: usize,
    pub reps: usize,
    /// Defaults to the spec's `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

/// Simulation request: a mixture whose per-component mean and variance
/// patterns are tiled to each P in the grid.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub weights: Vec<f64>,
    pub mean_patterns: Vec<Vec<f64>>,
    pub variance_patterns: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    pub p_grid: Vec<usize>,
    pub reps: usize,
    /// Defaults to the smallest grid P with `max(reps, 100)` replicates.
    #[serde(default)]
    pub lemma1: Option<Lemma1Settings>,
}

#[derive(Debug, Serialize)]
struct SimulationReport {
    version: &'static str,
    spec: SimulationSpec,
    concentration: ConcentrationReport,
    lemma1: Lemma1Report,
}

pub fn simulate(spec_path: &Path, run: &RunArgs) -> Result<(), Failure> {
    run.validate().map_err(Failure::Config)?;
    let text = fs::read_to_string(spec_path).map_err(|e| io_failure(spec_path, e))?;
    let mut spec: SimulationSpec =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", spec_path.display())))?;
    if let Some(seed) = run.seed {
        spec.seed = seed;
    }
    if spec.p_grid.is_empty() {
        return Err(Failure::Config("p_grid must not be empty".into()));
    }
    if spec.n < 2 {
        return Err(Failure::Config("n must be at least 2".into()));
    }
    let lemma1 = spec.lemma1.clone().unwrap_or(Lemma1Settings {
        p: *spec.p_grid.iter().min().expect("non-empty grid"),
        reps: spec.reps.max(MIN_LEMMA1_REPS),
        n: None,
    });
    spec.lemma1 = Some(lemma1.clone());

    let template = MixtureTemplate {
        weights: spec.weights.clone(),
        mean_patterns: spec.mean_patterns.clone(),
        variance_patterns: spec.variance_patterns.clone(),
        seed: spec.seed,
    };
    // Every failure past this point stems from the spec's contents.
    let as_config = |e: gmcluster::Error| match e {
        gmcluster::Error::Io(_) => Failure::from(e),
        other => Failure::Config(other.to_string()),
    };
    let pool = match run.threads() {
        Some(t) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Failure::Config(e.to_string()))?,
        ),
        None => None,
    };
    let work = || -> Result<_, Failure> {
        let concentration = concentration_sweep(&template, spec.n, spec.reps, &spec.p_grid).map_err(as_config)?;
        let l1_spec = template.instantiate(lemma1.p).map_err(as_config)?;
        let l1 = lemma1_check(&l1_spec, lemma1.n.unwrap_or(spec.n), lemma1.reps).map_err(as_config)?;
        Ok((concentration, l1))
    };
    let (concentration, l1) = match &pool {
        Some(p) => p.install(work)?,
        None => work()?,
    };

    prepare_output_dir(&run.output_dir)?;
    let table = csv_bytes(&["p", "empirical_mse", "bound_sq"], |w| {
        for pt in &concentration.points {
            w.write_record([pt.p.to_string(), pt.mean_sq_error.to_string(), pt.bound_sq.to_string()])?;
        }
        Ok(())
    })?;
    write_file(run.output_dir.join(CONCENTRATION_FILE), &table)?;

    for pt in &concentration.points {
        let verdict = if pt.mean_sq_error <= pt.bound_sq {
            "within"
        } else {
            "EXCEEDS"
        };
        println!(
            "P = {:>6}: E||M^d - Theta||^2 = {:.6e} ({verdict} bound {:.6e})",
            pt.p, pt.mean_sq_error, pt.bound_sq
        );
    }
    if let Some(slope) = concentration.log_log_slope {
        println!("log-log slope = {slope:.4}");
    }
    println!(
        "max standardized deviation of M^d from Theta = {:.3}",
        l1.max_std_deviation
    );

    let report = SimulationReport {
        version: env!("CARGO_PKG_VERSION"),
        spec,
        concentration,
        lemma1: l1,
    };
    write_file(run.output_dir.join(SIMULATION_REPORT_FILE), &to_json(&report)?)?;
    Ok(())
}
