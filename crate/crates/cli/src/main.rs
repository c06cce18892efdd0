use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use predtown_core::config::{load_config, load_grid, PipelineConfig};
use predtown_core::cube::{build_dataset, NormalizeScope};
use predtown_core::ingest::{read_clean_incidents, write_clean_incidents, CleanIncident};
use predtown_core::metrics::{kde, pairwise_friedman, FoldScores, KdeGrid, DEFAULT_BANDWIDTH, DEFAULT_GRID_POINTS};
use predtown_core::models::{Family, FittedModel, ParamMap};
use predtown_core::report::{
    emit_all, fit_family, ingest_files, month_window, read_dataset, read_report, render_markdown, run_benchmark,
    split_and_scale, tune_family, tuning_folds, write_dataset, write_json, write_predictions, write_tagged_rejects,
    ReportError,
};
use predtown_core::resample::TuneResult;
use predtown_core::synthgen::{generate, write_incidents, write_truth};
use predtown_core::Scalar;

#[derive(Parser)]
#[command(name = "predtown", version, about = "Next-month homicide prediction per neighborhood from monthly crime counts")]
struct Cli {
    /// Floating-point precision used for features and models.
    #[arg(long, value_enum, global = true, default_value_t = Precision::F64)]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and clean raw incident CSVs.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the month x neighborhood dataset with next-month labels.
    BuildDataset {
        #[arg(long)]
        config: PathBuf,
        /// Clean incidents (`date,crime_type,neighborhood`) or a raw export.
        #[arg(long)]
        incidents: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "full")]
        normalize: NormalizeScope,
    },
    /// Grid search one family with stratified k-fold AUC.
    Tune {
        #[arg(long)]
        family: Family,
        /// Grid file; without one the family's defaults are scored.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 7)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model on a training dataset.
    Train {
        #[arg(long)]
        family: Family,
        /// Parameter map, or a tune result whose best parameters are used.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Score a dataset with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise Friedman tests over per-fold scores.
    Friedman {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gaussian kernel density of per-fold scores.
    Kde {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
        bandwidth: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole protocol and write every artifact.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a finished benchmark.
    Report {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
        /// Also rewrite the CSV tables next to report.json.
        #[arg(long)]
        emit: bool,
    },
    /// Generate synthetic incidents with a known labeling rule.
    Synthgen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        holes: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Json,
}

type Result<T> = std::result::Result<T, ReportError>;

fn config(path: &Path) -> Result<PipelineConfig> {
    load_config(path).map_err(|e| ReportError::Config(e.to_string()))
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Data(format!("{}: {e}", path.display())))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| ReportError::output(dir, e)),
        None => Ok(()),
    }
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    ensure_parent(path)?;
    File::create(path).map(BufWriter::new).map_err(|e| ReportError::output(path, e))
}

/// Sibling path `<stem>.<tag>.csv`.
fn tagged(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

fn ingest(config_path: &Path, inputs: &[PathBuf], out_dir: &Path) -> Result<()> {
    let cfg = config(config_path)?;
    let outcome = ingest_files(inputs, &cfg.ingest)?;
    std::fs::create_dir_all(out_dir).map_err(|e| ReportError::output(out_dir, e))?;
    let path = out_dir.join("incidents.csv");
    write_clean_incidents(writer(&path)?, &outcome.incidents).map_err(|e| ReportError::output(&path, e))?;
    write_json(&out_dir.join("cleaning_report.json"), &outcome.report)?;
    write_tagged_rejects(&out_dir.join("rejects.csv"), &outcome.rejects)?;
    let r = &outcome.report;
    eprintln!("{} rows read, {} kept, {} rejected", r.input_count, outcome.incidents.len(), outcome.rejects.len());
    Ok(())
}

/// Clean incidents when the header is exactly the clean layout, otherwise a
/// raw export cleaned with the config's rules.
fn load_incidents(path: &Path, cfg: &PipelineConfig) -> Result<Vec<CleanIncident>> {
    let data_err = |e: &dyn std::fmt::Display| ReportError::Data(format!("{}: {e}", path.display()));
    let file = File::open(path).map_err(|e| data_err(&e))?;
    let mut header = String::new();
    BufReader::new(file).read_line(&mut header).map_err(|e| data_err(&e))?;
    let cols: Vec<&str> = header.trim_start_matches('\u{feff}').trim_end().split(',').map(str::trim).collect();
    if cols == ["date", "crime_type", "neighborhood"] {
        let file = File::open(path).map_err(|e| data_err(&e))?;
        read_clean_incidents(file).map_err(|e| data_err(&e))
    } else {
        Ok(ingest_files(&[path.to_path_buf()], &cfg.ingest)?.incidents)
    }
}

fn build<T: Scalar>(config_path: &Path, incidents: &Path, out: &Path, scope: NormalizeScope) -> Result<()> {
    let cfg = config(config_path)?;
    let incidents = load_incidents(incidents, &cfg)?;
    let taxonomy = cfg.taxonomy.build().map_err(|e| ReportError::Config(e.to_string()))?;
    let built = build_dataset::<T>(&incidents, &taxonomy, month_window(&cfg.ingest)?);
    if built.dataset.is_empty() {
        return Err(ReportError::Data("no labeled rows: the input needs at least two consecutive months per neighborhood".into()));
    }
    let b = &cfg.benchmark;
    let prepared = split_and_scale(&built.dataset, scope, b.clamp, b.train_fraction, b.stratify_year, b.seed)?;
    ensure_parent(out)?;
    write_dataset(out, &prepared.dataset, scope)?;
    write_dataset(&tagged(out, "train"), &prepared.train, scope)?;
    write_dataset(&tagged(out, "test"), &prepared.test, scope)?;
    eprintln!(
        "{} rows ({} train, {} test); {} neighborhoods removed as incomplete",
        prepared.dataset.len(),
        prepared.train.len(),
        prepared.test.len(),
        built.completeness.removed.len()
    );
    Ok(())
}

fn tune<T: Scalar>(family: Family, grid: Option<&Path>, train: &Path, k: usize, seed: u64, out: &Path) -> Result<()> {
    let grid = match grid {
        Some(p) => load_grid(p).map_err(|e| ReportError::Config(e.to_string()))?,
        None => Default::default(),
    };
    let train = read_dataset::<T>(train)?;
    let plan = tuning_folds(&train, k, seed)?;
    let result = tune_family(family, &grid, &train, &plan, seed)?;
    ensure_parent(out)?;
    write_json(out, &result)?;
    eprintln!("best mean AUC {:.4} with candidate {} of {}", result.best_mean_auc, result.best_index, result.cv_table.len());
    Ok(())
}

fn load_params(path: &Path) -> Result<ParamMap> {
    let value: serde_json::Value = read_json(path)?;
    let parsed = if value.get("best_params").is_some() {
        serde_json::from_value::<TuneResult>(value).map(|t| t.best_params)
    } else {
        serde_json::from_value::<ParamMap>(value)
    };
    parsed.map_err(|e| ReportError::Config(format!("{}: {e}", path.display())))
}

fn train<T: Scalar>(family: Family, params: Option<&Path>, train: &Path, out: &Path, seed: u64, threshold: f64) -> Result<()> {
    let params = match params {
        Some(p) => load_params(p)?,
        None => ParamMap::new(),
    };
    let train = read_dataset::<T>(train)?;
    let model = fit_family(family, &params, &train, threshold, seed)?;
    let json = model.to_json().map_err(|e| ReportError::output(out, e))?;
    let mut w = writer(out)?;
    w.write_all(json.as_bytes()).and_then(|_| w.flush()).map_err(|e| ReportError::output(out, e))
}

fn predict<T: Scalar>(model: &Path, data: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(model).map_err(|e| ReportError::Data(format!("{}: {e}", model.display())))?;
    let model = FittedModel::<T>::from_json(&text).map_err(|e| ReportError::Data(format!("{}: {e}", model.display())))?;
    let data = read_dataset::<T>(data)?;
    let predictions = model.predict(&data.matrix()).map_err(|e| ReportError::stage("predict", e))?;
    ensure_parent(out)?;
    write_predictions(out, &data, &predictions)
}

fn friedman(scores: &Path, out: &Path) -> Result<()> {
    let scores: FoldScores<f64> = read_json(scores)?;
    let result = pairwise_friedman(&scores).map_err(|e| ReportError::Data(e.to_string()))?;
    ensure_parent(out)?;
    write_json(out, &result)
}

fn density(scores: &Path, bandwidth: f64, points: usize, out: &Path) -> Result<()> {
    let scores: FoldScores<f64> = read_json(scores)?;
    if !(bandwidth > 0.0) || points < 2 {
        return Err(ReportError::Config("--bandwidth must be > 0 and --points at least 2".into()));
    }
    let grid = KdeGrid { points, range: None };
    let mut w = writer(out)?;
    let err = |e: &dyn std::fmt::Display| ReportError::output(out, e);
    writeln!(w, "model,x,density").map_err(|e| err(&e))?;
    for (name, values) in &scores {
        let curve = kde(values, bandwidth, &grid).map_err(|e| ReportError::Data(format!("{name}: {e}")))?;
        for (x, d) in curve.grid.iter().zip(&curve.density) {
            writeln!(w, "{name},{x},{d}").map_err(|e| err(&e))?;
        }
    }
    w.flush().map_err(|e| err(&e))
}

fn benchmark<T: Scalar>(config_path: &Path, out_dir: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = config(config_path)?;
    if let Some(d) = out_dir {
        cfg.benchmark.out_dir = d;
    }
    if let Some(s) = seed {
        cfg.benchmark.seed = s;
    }
    let outcome = run_benchmark::<T>(&cfg)?;
    print!("{}", render_markdown(&outcome.report));
    eprintln!("artifacts in {} ({:.1} s)", cfg.benchmark.out_dir.display(), outcome.timings.get("total").copied().unwrap_or(0.0));
    Ok(())
}

fn report(artifacts: &Path, format: Format, emit: bool) -> Result<()> {
    let report = read_report(&artifacts.join("report.json"))?;
    if emit {
        emit_all(&report, artifacts)?;
    }
    match format {
        Format::Md => print!("{}", render_markdown(&report)),
        Format::Json => {
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| ReportError::stage("report", e))?)
        }
    }
    Ok(())
}

fn synthgen(config_path: Option<&Path>, out: &Path, truth: &Path, seed: Option<u64>, holes: Option<usize>, noise: Option<f64>) -> Result<()> {
    let mut gen = match config_path {
        Some(p) => config(p)?.synthgen,
        None => Default::default(),
    };
    if let Some(s) = seed {
        gen.seed = s;
    }
    if let Some(h) = holes {
        gen.holes = h;
    }
    if let Some(n) = noise {
        gen.noise = n;
    }
    let g = generate(&gen).map_err(|e| ReportError::Config(e.to_string()))?;
    write_incidents(writer(out)?, &g.incidents).map_err(|e| ReportError::output(out, e))?;
    write_truth(writer(truth)?, &g.truth).map_err(|e| ReportError::output(truth, e))?;
    let ones = g.truth.iter().filter(|t| t.class == 1).count();
    eprintln!(
        "{} incidents; {} labeled cells ({} class 1); {} neighborhoods with holes",
        g.incidents.len(),
        g.truth.len(),
        ones,
        g.holes.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    macro_rules! dispatch {
        ($f:ident($($arg:expr),*)) => {
            match cli.precision {
                Precision::F64 => $f::<f64>($($arg),*),
                Precision::F32 => $f::<f32>($($arg),*),
            }
        };
    }
    match cli.command {
        Command::Ingest { config, input, out_dir } => ingest(&config, &input, &out_dir),
        Command::BuildDataset { config, incidents, out, normalize } => dispatch!(build(&config, &incidents, &out, normalize)),
        Command::Tune { family, grid, train, k, seed, out } => dispatch!(tune(family, grid.as_deref(), &train, k, seed, &out)),
        Command::Train { family, params, train: data, model_out, seed, threshold } => {
            dispatch!(train(family, params.as_deref(), &data, &model_out, seed, threshold))
        }
        Command::Predict { model, data, out } => dispatch!(predict(&model, &data, &out)),
        Command::Friedman { scores, out } => friedman(&scores, &out),
        Command::Kde { scores, bandwidth, points, out } => density(&scores, bandwidth, points, &out),
        Command::Benchmark { config, out_dir, seed } => dispatch!(benchmark(&config, out_dir, seed)),
        Command::Report { artifacts, format, emit } => report(&artifacts, format, emit),
        Command::Synthgen { config, out, truth, seed, holes, noise } => {
            synthgen(config.as_deref(), &out, &truth, seed, holes, noise)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("predtown: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
