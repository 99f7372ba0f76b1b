//! Command-line harness for `defect-fpp`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 estimator
//! failure (a broken pathwise invariant or too little data).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use defect_fpp::estimators::{run_experiment, ExperimentConfig, Outcome};
use defect_fpp::io::{read_centers_csv, write_centers_csv};
use defect_fpp::limits::EtaTable;
use defect_fpp::metric::{distance_graph_xi, geodesic_xi0, IntrinsicMetric};
use defect_fpp::model::{BoxRegion, DomainSpec, ModelDocument};
use defect_fpp::sampler::{sample_homogeneous, sample_inhomogeneous, RngStream};
use defect_fpp::clusters::find_clusters;
use defect_fpp::Error;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

/// Seed used when neither `--seed`, `DEFECT_FPP_SEED` nor the config sets one.
pub const DEFAULT_SEED: u64 = 20_240_917;
pub const SEED_ENV: &str = "DEFECT_FPP_SEED";

#[derive(Debug, Parser)]
#[command(name = "defect-fpp", version, about = "Monte Carlo harness for first-passage percolation through ball defects")]
pub struct Cli {
    /// Print only machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment config and write CSV, JSON summary and manifest.
    Run(RunArgs),
    /// Sample one realization and dump its centers as CSV.
    SampleDump(DumpArgs),
    /// Distance between two points of a dumped realization.
    #[command(alias = "dist")]
    DistQuery(DistArgs),
    /// Merge or validate eta tables.
    EtaTable {
        #[command(subcommand)]
        action: TableAction,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Constant intensity (rescaled units).
    #[arg(long, conflicts_with = "model")]
    pub u: Option<f64>,
    /// Sampling box as `lo:hi` per axis, e.g. `0:10,0:10`.
    #[arg(long = "box", value_name = "LO:HI,...", conflicts_with = "model")]
    pub region: Option<String>,
    /// Domain and intensity document; centers outside the domain are dropped.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Center dump written by `sample-dump`.
    #[arg(long, alias = "config")]
    pub dump: PathBuf,
    #[arg(long, value_name = "X,Y,...", allow_hyphen_values = true)]
    pub from: String,
    #[arg(long, value_name = "X,Y,...", allow_hyphen_values = true)]
    pub to: String,
    #[arg(long, default_value_t = 0.0)]
    pub xi: f64,
    /// Boundary nodes per ball for `xi > 0`.
    #[arg(long = "K", alias = "k", default_value_t = 16)]
    pub k: usize,
    /// Restrict paths to a domain given as a JSON domain spec.
    #[arg(long, alias = "restrict")]
    pub domain: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TableAction {
    Merge {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Validate { table: PathBuf },
}

/// Process exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        Error::InvalidParameter { .. } | Error::OutOfDomain(_) | Error::Json(_) => EXIT_INVALID,
        Error::InvariantViolation(_) | Error::InsufficientData(_) | Error::NotFound(_) => EXIT_FAILURE,
    }
}

/// Parses `args` and runs the command, reporting errors on stderr.
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> defect_fpp::Result<()> {
    match &cli.command {
        Command::Run(a) => run(a, cli.json),
        Command::SampleDump(a) => sample_dump(a),
        Command::DistQuery(a) => dist_query(a),
        Command::EtaTable { action } => eta_table(action, cli.json),
    }
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> defect_fpp::Result<Vec<u8>> {
    fs::read(path).map_err(with_path(path))
}

fn read_text(path: &Path) -> defect_fpp::Result<String> {
    fs::read_to_string(path).map_err(with_path(path))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a sibling temporary file.
fn write_atomic(path: &Path, bytes: &[u8], suffix: &str) -> defect_fpp::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(suffix);
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(with_path(&tmp))?;
    fs::rename(&tmp, path).map_err(with_path(path))?;
    Ok(())
}

fn env_seed() -> defect_fpp::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(SEED_ENV, format!("`{v}` is not an unsigned 64-bit integer"))),
        Err(_) => Ok(None),
    }
}

/// `--seed`, then the environment, then the config, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> defect_fpp::Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.or(config).unwrap_or(DEFAULT_SEED),
    })
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    name: String,
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    schema: u32,
    tool_version: &'static str,
    config_path: String,
    config_sha256: String,
    kind: &'static str,
    seed: u64,
    jobs: usize,
    started: String,
    finished: String,
    outputs: Vec<OutputEntry>,
}

fn run(a: &RunArgs, json_mode: bool) -> defect_fpp::Result<()> {
    let started = chrono::Utc::now().to_rfc3339();
    let bytes = read_bytes(&a.config)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::invalid("config", "file is not UTF-8"))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let seed = resolve_seed(a.seed, cfg.seed)?;
    if a.jobs == 0 {
        return Err(Error::invalid("jobs", "at least one worker is required"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    log::info!("running {} with seed {seed} on {} worker(s)", cfg.experiment.kind(), a.jobs);
    let outcome: Outcome = pool.install(|| run_experiment(&cfg, seed, &base))?;
    fs::create_dir_all(&a.out_dir).map_err(with_path(&a.out_dir))?;
    let kind = cfg.experiment.kind();
    let mut outputs = Vec::new();
    let mut emit = |name: &str, file: String, data: Vec<u8>, suffix: &str| -> defect_fpp::Result<()> {
        let path = a.out_dir.join(&file);
        write_atomic(&path, &data, suffix)?;
        outputs.push(OutputEntry {
            name: name.to_string(),
            path: file,
            sha256: sha256_hex(&data),
        });
        Ok(())
    };
    let mut csv = Vec::new();
    outcome.csv.write(&mut csv)?;
    emit("per_replica", format!("{kind}.csv"), csv, ".partial")?;
    let summary = json!({
        "schema": 1,
        "kind": kind,
        "seed": seed,
        "records": outcome.records,
        "extra": outcome.extra,
    });
    emit("summary", format!("{kind}.json"), pretty(&summary)?, ".tmp")?;
    if let Some(table) = outcome.extra.get("table") {
        let table: EtaTable = serde_json::from_value(table.clone())?;
        emit("eta_table", "eta_table.json".into(), pretty(&table)?, ".tmp")?;
    }
    let manifest = RunManifest {
        schema: 1,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_path: a.config.display().to_string(),
        config_sha256: sha256_hex(&bytes),
        kind,
        seed,
        jobs: a.jobs,
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    let m = pretty(&manifest)?;
    write_atomic(&a.out_dir.join("manifest.json"), &m, ".tmp")?;
    let mut out = std::io::stdout().lock();
    if json_mode {
        out.write_all(&m)?;
        writeln!(out)?;
    } else {
        for r in &outcome.records {
            writeln!(out, "{}: mean {} stderr {} (n = {})", r.name, r.mean, r.stderr, r.n)?;
        }
        writeln!(out, "outputs written to {}", a.out_dir.display())?;
    }
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> defect_fpp::Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn parse_box(spec: &str) -> defect_fpp::Result<BoxRegion> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in spec.split(',') {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| Error::invalid("box", format!("`{part}` is not of the form lo:hi")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid("box", format!("`{s}` is not a number")))
        };
        lo.push(parse(a)?);
        hi.push(parse(b)?);
    }
    BoxRegion::new(lo, hi)
}

fn parse_point(s: &str, what: &str) -> defect_fpp::Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(what, format!("`{v}` is not a number")))
        })
        .collect()
}

fn sample_dump(a: &DumpArgs) -> defect_fpp::Result<()> {
    let seed = resolve_seed(a.seed, None)?;
    let mut rng = RngStream::new(seed, 0).rng();
    let cfg = match &a.model {
        Some(path) => {
            let doc = ModelDocument::from_json(&read_text(path)?)?;
            let (domain, field) = doc.build(f64::INFINITY, true)?;
            sample_inhomogeneous(&field, domain.bounding_box(), &mut rng)?.filtered(|c| domain.contains(c).unwrap_or(false))
        }
        None => {
            let u = a.u.ok_or_else(|| Error::invalid("u", "either --u with --box or --model is required"))?;
            let spec = a.region.as_deref().ok_or_else(|| Error::invalid("box", "--box is required with --u"))?;
            sample_homogeneous(u, &parse_box(spec)?, &mut rng)?
        }
    };
    let mut buf = Vec::new();
    write_centers_csv(&cfg, &mut buf)?;
    match &a.out {
        Some(p) => write_atomic(p, &buf, ".partial")?,
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

fn dist_query(a: &DistArgs) -> defect_fpp::Result<()> {
    let cfg = read_centers_csv(fs::File::open(&a.dump).map_err(with_path(&a.dump))?)?;
    let x = parse_point(&a.from, "from")?;
    let y = parse_point(&a.to, "to")?;
    let res = match &a.domain {
        Some(p) => {
            let spec: DomainSpec = serde_json::from_str(&read_text(p)?)?;
            IntrinsicMetric::new(&cfg, &spec.build()?)?.distance(&x, &y, a.xi, a.k)?
        }
        None => {
            let cs = find_clusters(&cfg);
            if a.xi == 0.0 {
                geodesic_xi0(&cs, &x, &y)?
            } else {
                distance_graph_xi(&cs, a.xi, &x, &y, a.k)?
            }
        }
    };
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, &res)?;
    writeln!(out)?;
    Ok(())
}

fn eta_table(action: &TableAction, json_mode: bool) -> defect_fpp::Result<()> {
    let load = |p: &Path| -> defect_fpp::Result<EtaTable> { EtaTable::from_json(&read_text(p)?) };
    match action {
        TableAction::Merge { a, b, out } => {
            let merged = load(a)?.merge(&load(b)?)?;
            let bytes = pretty(&merged)?;
            match out {
                Some(p) => write_atomic(p, &bytes, ".tmp")?,
                None => std::io::stdout().lock().write_all(&bytes)?,
            }
        }
        TableAction::Validate { table } => {
            let t = load(table)?;
            let mut out = std::io::stdout().lock();
            if json_mode {
                writeln!(out, "{}", json!({"valid": true, "entries": t.entries.len()}))?;
            } else {
                writeln!(out, "valid: {} entries, u in [{}, {}]", t.entries.len(), t.u_range().0, t.u_range().1)?;
            }
        }
    }
    Ok(())
}
