use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ciae_core::benchmark::{run_benchmark, RunConfig};
use ciae_core::complexity::{metric_direction, ComplexityOptions, ComplexityReport, Direction, Distance};
use ciae_core::dataset::{load_csv, Dataset};
use ciae_core::eval::cv::{embed_all, Fitted, Method, MethodOptions, MethodSpec};
use ciae_core::eval::report::{aggregate_rankings, read_records_csv};
use ciae_core::Error;

#[derive(Parser)]
#[command(name = "ciae", version, about = "Class-informed autoencoders and data-complexity profiling")]
struct Cli {
    /// Seed for every random choice (overrides a config file's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the benchmark (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Distance for N3 and the ball cover: euclidean, manhattan or chebyshev.
    #[arg(long, global = true)]
    distance: Option<Distance>,
    /// Output file (complexity, reduce) or directory (benchmark, rank).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// CSV file, class in the last column.
    data: PathBuf,
    /// Class value treated as positive; any other value is negative.
    #[arg(long, default_value = "1")]
    positive: String,
    /// The first line is a header.
    #[arg(long)]
    header: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Data-complexity metrics of a dataset.
    Complexity {
        #[command(flatten)]
        input: Input,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Synthetic points for L3 (default: number of instances).
        #[arg(long)]
        n_synth: Option<usize>,
    },
    /// Learn a representation and write the embedded dataset.
    Reduce {
        #[command(flatten)]
        input: Input,
        /// identity, pca, ae, scorer, skaler or slicer.
        #[arg(long)]
        method: String,
        /// Embedding width (default: the encoding-dimension rule).
        #[arg(long)]
        dims: Option<usize>,
        /// Training epochs (default 200).
        #[arg(long)]
        epochs: Option<usize>,
        /// Penalty weight (default 0.01 / 0.1 / 1 for scorer / skaler / slicer).
        #[arg(long)]
        lambda: Option<f64>,
        /// Weight of the Slicer head's squared-residual term (default 1).
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Run every dataset × method × fold cell of a TOML config.
    Benchmark { config: PathBuf },
    /// Recompute rankings from an existing records CSV.
    Rank { records: PathBuf },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let input = err
                .chain()
                .find_map(|e| e.downcast_ref::<Error>())
                .is_some_and(Error::is_input_error);
            ExitCode::from(if input { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let seed = cli.seed.unwrap_or(0);
    let distance = cli.distance.unwrap_or_default();
    match cli.command {
        Command::Complexity { input, json, n_synth } => {
            let data = load(&input)?;
            let opts = ComplexityOptions {
                distance,
                seed,
                n_synth,
                ..ComplexityOptions::default()
            };
            let report = ComplexityReport::compute(&data, &opts)?;
            let text = if json {
                serde_json::to_string_pretty(&report.to_json())? + "\n"
            } else {
                complexity_table(&report)
            };
            emit(cli.out.as_deref(), &text)?;
        }
        Command::Reduce {
            input,
            method,
            dims,
            epochs,
            lambda,
            beta,
            batch_size,
        } => {
            let spec: MethodSpec = method.parse()?;
            if matches!(spec, MethodSpec::External(_)) {
                return Err(usage("reduce cannot run an external embedding".into()));
            }
            let Some(out) = cli.out else {
                return Err(usage("reduce needs --out for the embedding file".into()));
            };
            let data = load(&input)?;
            let opts = MethodOptions {
                lambda,
                beta,
                epochs,
                batch_size,
                dims,
                ..MethodOptions::default()
            };
            let (z, fitted) = embed_all(&data, &Method::new(spec)?, &opts, seed)?;
            write_embedding(&out, &z, &data)?;
            if let Fitted::Autoencoder(model) = &fitted {
                let log_path = sibling(&out, "training.csv");
                let file = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
                model.write_training_log(io::BufWriter::new(file))?;
                log::info!("training log written to {}", log_path.display());
            }
        }
        Command::Benchmark { config } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(d) = cli.distance {
                cfg.distance = d;
            }
            let out = cli
                .out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| usage("no output directory: set output_dir in the config or pass --out".into()))?;
            let jobs = cli
                .jobs
                .or(cfg.jobs)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let summary = run_benchmark(&cfg, &out, jobs)?;
            print!("{}", summary.rankings.to_table());
            println!(
                "{} cells ({} run, {} resumed, {} failed); results in {}",
                summary.cells_total,
                summary.cells_run,
                summary.cells_resumed,
                summary.failures.len(),
                out.display()
            );
            if !summary.success() {
                eprintln!("every cell failed for: {}", summary.failed_datasets.join(", "));
                return Ok(ExitCode::from(1));
            }
        }
        Command::Rank { records } => {
            let file = fs::File::open(&records).with_context(|| format!("opening {}", records.display()))?;
            let rankings = aggregate_rankings(&read_records_csv(io::BufReader::new(file))?)?;
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                fs::write(dir.join("summary.json"), rankings.to_json()?)?;
                fs::write(dir.join("rankings.txt"), rankings.to_table())?;
            }
            print!("{}", rankings.to_table());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn usage(message: String) -> anyhow::Error {
    Error::Validation(message).into()
}

fn load(input: &Input) -> anyhow::Result<Dataset> {
    Ok(load_csv(&input.data, &input.positive, input.header)?)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn complexity_table(report: &ComplexityReport) -> String {
    let mut s = String::from("metric    value          better\n");
    for (name, value) in report.metrics() {
        let better = match metric_direction(name) {
            Some(Direction::HigherBetter) => "higher",
            _ => "lower",
        };
        s.push_str(&format!("{name:<9} {value:<14.6} {better}\n"));
    }
    s
}

/// `emb.csv` → `emb.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_embedding(path: &Path, z: &ciae_core::eval::cv::Embedding, data: &Dataset) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(io::BufWriter::new(file));
    let mut header: Vec<String> = (0..z.ncols()).map(|j| format!("z{j}")).collect();
    header.push("class".into());
    w.write_record(&header)?;
    for (row, label) in z.rows().into_iter().zip(data.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_replaces_extension() {
        assert_eq!(sibling(Path::new("out/emb.csv"), "training.csv"), PathBuf::from("out/emb.training.csv"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
