use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use sparse_slam::config::{InputFormat, RunConfig};
use sparse_slam::data_io::{read_trajectory, write_carmen_log, write_crazyflie_csv, write_metrics, write_trajectory};
use sparse_slam::metrics::{evaluate, format_relations, parse_relations, Relation};
use sparse_slam::pipeline::{
    format_sweep, load_input, run, sweep, synthetic_log, write_outputs, SweepAxis, SYNTHETIC_RELATIONS,
};
use sparse_slam::{Error, Result};

#[derive(Parser)]
#[command(name = "sparse-slam", version, about = "Graph SLAM for a handful of range beams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map a log and write trajectory.txt, map.pgm and metrics.txt.
    Run(RunArgs),
    /// Score a trajectory file against a relation file.
    Evaluate {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        relations: PathBuf,
    },
    /// Repeat a run for each value of one parameter.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `none,k3,k5,k7`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Writes sweep.tsv here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write the built-in square-loop log with its ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        beams: usize,
        /// `carmen` or `crazyflie` (4 beams only).
        #[arg(long, default_value = "carmen")]
        format: InputFormat,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    deterministic: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long)]
    beams: Option<usize>,
    #[arg(long)]
    range_cap: Option<f64>,
    #[arg(long)]
    multiscan: Option<usize>,
    #[arg(long)]
    cell: Option<f64>,
    /// none, k3, k5 or k7.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relation file; synthetic runs draw their own when omitted.
    #[arg(long)]
    relations: Option<PathBuf>,
    /// `key = value` file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl CommonArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("format", self.format.map(|f| f.to_string())),
            ("beams", self.beams.map(|v| v.to_string())),
            ("range_cap", self.range_cap.map(|v| v.to_string())),
            ("multiscan", self.multiscan.map(|v| v.to_string())),
            ("cell_size", self.cell.map(|v| v.to_string())),
            ("kernel", self.kernel.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for o in &self.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config {
                key: o.clone(),
                message: "expected KEY=VALUE".into(),
            })?;
            cfg.set(k, v)?;
        }
        if self.log.is_some() && self.format.is_none() && self.config.is_none() {
            cfg.format = guess_format(self.log.as_deref().unwrap_or(Path::new("")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn relations(&self) -> Result<Option<Vec<Relation>>> {
        self.relations.as_deref().map(read_relations).transpose()
    }
}

fn guess_format(path: &Path) -> InputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => InputFormat::Crazyflie,
        _ => InputFormat::Carmen,
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn read_relations(path: &Path) -> Result<Vec<Relation>> {
    parse_relations(open(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_command(args: &RunArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    cfg.deterministic |= args.deterministic;
    let input = load_input(&cfg, args.common.log.as_deref())?;
    info!("{} scans, {} beams each at most", input.scans.len(), cfg.beams);
    let out = run(&cfg, &input.scans)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let relations = match (args.common.relations()?, &input.truth) {
        (Some(r), _) => Some(r),
        (None, Some(truth)) => {
            let r = truth.random_relations(SYNTHETIC_RELATIONS, cfg.seed);
            write_text(&args.out.join("relations.txt"), &format_relations(&r))?;
            write_trajectory(&truth.truth, &args.out.join("truth.txt"))?;
            Some(r)
        }
        (None, None) => None,
    };
    let report = relations.map(|r| evaluate(&out.trajectory, &r)).transpose()?;
    write_outputs(&out, report.as_ref(), &args.out)?;
    let s = out.summary;
    println!(
        "{} scans, {} submaps, {} loops, {} rollbacks",
        s.scans, s.submaps, s.loops, s.rollbacks
    );
    if let Some(r) = &report {
        println!(
            "translational error {:.4} ± {:.4} m",
            r.translational.mean, r.translational.std
        );
    }
    println!("outputs in {}", args.out.display());
    Ok(())
}

fn simulate_command(out: &Path, seed: u64, beams: usize, format: InputFormat) -> Result<()> {
    let cfg = RunConfig {
        seed,
        beams,
        ..RunConfig::default()
    };
    cfg.validate()?;
    let log = synthetic_log(&cfg);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let name = match format {
        InputFormat::Carmen => {
            let path = out.join("square_loop.log");
            let mut w = create(&path)?;
            write_carmen_log(&log.scans, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&path, e))?;
            path
        }
        InputFormat::Crazyflie => {
            let path = out.join("square_loop.csv");
            let mut w = create(&path)?;
            write_crazyflie_csv(&log.scans, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&path, e))?;
            path
        }
        InputFormat::Synthetic => {
            return Err(Error::Precondition("simulate writes carmen or crazyflie logs".into()));
        }
    };
    write_trajectory(&log.truth, &out.join("truth.txt"))?;
    let relations = log.random_relations(SYNTHETIC_RELATIONS, seed);
    write_text(&out.join("relations.txt"), &format_relations(&relations))?;
    println!("{} scans written to {}", log.scans.len(), name.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run_command(&args),
        Command::Evaluate { traj, relations } => {
            let trajectory = read_trajectory(open(&traj)?)?;
            let report = evaluate(&trajectory, &read_relations(&relations)?)?;
            print!("{}", String::from_utf8_lossy(&write_metrics(Some(&report), None)));
            Ok(())
        }
        Command::Sweep {
            axis,
            values,
            out,
            common,
        } => {
            let cfg = common.config()?;
            let relations = common.relations()?;
            let rows = sweep(&cfg, axis, &values, common.log.as_deref(), relations.as_deref())?;
            let table = format_sweep(axis, &rows);
            print!("{table}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                write_text(&dir.join("sweep.tsv"), &table)?;
            }
            Ok(())
        }
        Command::Simulate {
            out,
            seed,
            beams,
            format,
        } => simulate_command(&out, seed, beams, format),
    }
}

/// 1 for unusable input or options, 2 for failures inside the estimator.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::NoRecords
        | Error::Config { .. }
        | Error::NoRelations
        | Error::Precondition(_)
        | Error::Io { .. }
        | Error::IoStream(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
