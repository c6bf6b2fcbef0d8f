use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use scatlab::domain::ContrastMap;
use scatlab::inversion::nse;
use scatlab::io::{
    import_fresnel, permittivity_heatmap, render::heatmap, ColumnMap, Config, DatasetBundle, FresnelOptions,
    RenderOptions, RunRecord,
};
use scatlab::pipeline::{bundle_truth, invert, synthesize, training_set, Setup};
use scatlab::surrogate::{train, Surrogate, TrainingSet};

/// Microwave imaging with data-driven transmitter calibration.
#[derive(Parser)]
#[command(name = "scatlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured scene and write a dataset bundle.
    Forward {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a surrogate training set from the configured templates.
    GenTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the surrogate network on a training set.
    TrainSurrogate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the permittivity and calibration factors from a bundle.
    Invert {
        #[command(flatten)]
        common: Common,
        /// Bundle directory.
        #[arg(long)]
        data: PathBuf,
        /// Run record (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Surrogate model, required with `surrogate_mode = "neural"`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also write the per-iteration trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the normalized squared error between an estimate and a reference.
    ///
    /// Each argument is a run record (its final map is used) or a bundle
    /// directory (its ground truth is rasterised on the estimate's grid).
    Eval {
        estimate: PathBuf,
        reference: PathBuf,
        /// Print the per-pixel mean instead of the sum.
        #[arg(long)]
        mean: bool,
    },
    /// Convert a measured text file into a bundle.
    ImportFresnel {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Column positions, e.g. `tx=0,rx=1,freq=2,total_re=3,total_im=4,inc_re=5,inc_im=6`.
        #[arg(long)]
        column_map: Option<String>,
        /// Radius of the measurement circle, metres.
        #[arg(long, default_value_t = scatlab::io::fresnel::DEFAULT_RADIUS)]
        radius: f64,
    },
    /// Render a run record: permittivity PNG, trace CSV and, with a
    /// reference, the per-pixel error map.
    Render {
        record: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Bundle with ground truth for the error map.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Pixels per cell.
        #[arg(long, default_value_t = 8)]
        scale: u32,
    },
}

/// Config file plus overrides shared by the pipeline stages.
#[derive(Args)]
struct Common {
    /// TOML config, or a run record whose config snapshot is replayed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Termination tolerance on the cost change.
    #[arg(long = "T", value_name = "T")]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    calibration_mode: Option<String>,
    #[arg(long)]
    lambda_domain: Option<String>,
    #[arg(long)]
    surrogate_mode: Option<String>,
    /// Any config key, e.g. `--set grid.nx=24` or `--set 'freqs=[4e9]'`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_value(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> anyhow::Result<()> {
    let mut parts = key.split('.').peekable();
    let mut current = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            current.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = match entry {
            toml::Value::Table(t) => t,
            _ => bail!(scatlab::Error::Config(format!("`{part}` in `{key}` is not a table"))),
        };
    }
    bail!(scatlab::Error::Config(format!("empty override key `{key}`")))
}

impl Common {
    fn load(&self) -> anyhow::Result<Config> {
        let mut table = match &self.config {
            None => toml::Table::new(),
            Some(path) if path.extension().is_some_and(|e| e == "json") => {
                toml::from_str(&RunRecord::load(path)?.config.to_toml())?
            }
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| scatlab::Error::Io { path: path.clone(), source: e })?;
                toml::from_str(&text).map_err(|e| {
                    scatlab::Error::Config(format!("{}: {}", path.display(), e.to_string().trim_end()))
                })?
            }
        };
        let mut overrides: Vec<(&str, toml::Value)> = Vec::new();
        if let Some(v) = self.seed {
            overrides.push(("seed", toml::Value::Integer(v as i64)));
        }
        if let Some(v) = self.beta {
            overrides.push(("inversion.beta", toml::Value::Float(v)));
        }
        if let Some(v) = self.tolerance {
            overrides.push(("inversion.T", toml::Value::Float(v)));
        }
        if let Some(v) = self.max_iters {
            overrides.push(("inversion.max_iters", toml::Value::Integer(v as i64)));
        }
        for (key, v) in [
            ("inversion.calibration_mode", &self.calibration_mode),
            ("inversion.lambda_domain", &self.lambda_domain),
            ("inversion.surrogate_mode", &self.surrogate_mode),
        ] {
            if let Some(v) = v {
                overrides.push((key, toml::Value::String(v.clone())));
            }
        }
        for item in &self.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| scatlab::Error::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
            overrides.push((key.trim(), parse_value(value.trim())));
        }
        for (key, value) in overrides {
            set_key(&mut table, key, value)?;
        }
        Ok(Config::from_toml(&toml::to_string(&table)?)?)
    }
}

/// Final contrast map from a run record, or ground truth from a bundle.
fn load_map(path: &Path, grid_from: Option<&RunRecord>) -> anyhow::Result<ContrastMap> {
    if path.is_dir() {
        let bundle = DatasetBundle::import(path)?;
        let record = grid_from.context("a bundle reference needs a run record as the estimate")?;
        let grid = record.config.grid()?;
        return bundle_truth(&bundle, &grid)?
            .ok_or_else(|| scatlab::Error::Data(format!("{} has no ground truth", path.display())).into());
    }
    Ok(RunRecord::load(path)?.chi)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Forward { common, out } => {
            let config = common.load()?;
            let setup = Setup::from_config(&config)?;
            let bundle = synthesize(&config, &setup)?;
            bundle.export(&out)?;
            println!(
                "wrote bundle {} ({} frequencies, {} transmitters)",
                out.display(),
                bundle.n_freq(),
                bundle.n_tx()
            );
        }
        Command::GenTrain { common, out } => {
            let config = common.load()?;
            let setup = Setup::from_config(&config)?;
            let set = training_set(&config, &setup)?;
            set.save(&out)?;
            println!("wrote {} training samples to {}", set.samples.len(), out.display());
        }
        Command::TrainSurrogate { common, data, out } => {
            let config = common.load()?;
            let set = TrainingSet::load(&data)?;
            let model = train(&set, &config.surrogate.training_config(), config.seed)?;
            model.save(&out)?;
            let r = model.record();
            println!(
                "wrote {}: best epoch {}, validation loss {:.4e} (normalized)",
                out.display(),
                r.best_epoch,
                r.best_validation_loss
            );
        }
        Command::Invert {
            common,
            data,
            out,
            model,
            trace,
        } => {
            let config = common.load()?;
            let bundle = DatasetBundle::import(&data)?;
            let surrogate = model.as_deref().map(Surrogate::load).transpose()?;
            let outcome = invert(&config, &bundle, &data.display().to_string(), surrogate.as_ref())?;
            let record = &outcome.record;
            record.save(&out)?;
            if let Some(path) = trace {
                std::fs::write(&path, record.trace_csv()?)
                    .map_err(|e| scatlab::Error::Io { path: path.clone(), source: e })?;
            }
            let last = record.cost_history.last().unwrap_or(&record.initial_cost);
            print!(
                "wrote {}: {} iterations, converged {}, cost {:.6e}",
                out.display(),
                record.iterations,
                record.converged,
                last.total
            );
            match record.nse {
                Some(d) => println!(", Δ = {d}"),
                None => println!(),
            }
        }
        Command::Eval {
            estimate,
            reference,
            mean,
        } => {
            let record = if estimate.is_dir() { None } else { Some(RunRecord::load(&estimate)?) };
            let est = match &record {
                Some(r) => r.chi.clone(),
                None => bail!(scatlab::Error::Config("the estimate must be a run record".into())),
            };
            let truth = load_map(&reference, record.as_ref())?;
            let report = nse(&est, &truth)?;
            let value = if mean { report.mean() } else { report.nse };
            println!("Δ = {value}");
        }
        Command::ImportFresnel {
            input,
            out,
            column_map,
            radius,
        } => {
            let columns = column_map.as_deref().map(str::parse::<ColumnMap>).transpose()?.unwrap_or_default();
            let bundle = import_fresnel(&input, &FresnelOptions { columns, radius })?;
            bundle.export(&out)?;
            println!(
                "wrote bundle {} ({} frequencies, {} transmitters, {} receivers each)",
                out.display(),
                bundle.n_freq(),
                bundle.n_tx(),
                bundle.manifest.rx_counts[0]
            );
        }
        Command::Render {
            record,
            out_dir,
            truth,
            scale,
        } => {
            let rec = RunRecord::load(&record)?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| scatlab::Error::Io { path: out_dir.clone(), source: e })?;
            let options = RenderOptions { scale, ..RenderOptions::default() };
            let map = permittivity_heatmap(&rec.chi, &options)?;
            map.write_png(&out_dir.join("permittivity.png"))?;
            let trace = out_dir.join("trace.csv");
            std::fs::write(&trace, rec.trace_csv()?).map_err(|e| scatlab::Error::Io { path: trace, source: e })?;
            if let Some(dir) = truth {
                let gt = load_map(&dir, Some(&rec))?;
                let report = nse(&rec.chi, &gt)?;
                heatmap(&report.per_pixel, rec.chi.nx(), rec.chi.ny(), "per-pixel squared error", &options)?
                    .write_png(&out_dir.join("error.png"))?;
            }
            println!(
                "rendered {} (permittivity {:.4} to {:.4})",
                out_dir.display(),
                map.min,
                map.max
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<scatlab::Error>().map_or("error", |e| e.kind());
            report(kind, &format!("{e:#}"));
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}

/// One JSON object on stderr, for scripts.
fn report(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message.trim_end() } });
    eprintln!("{body}");
}
