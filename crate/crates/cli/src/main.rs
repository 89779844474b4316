use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use udnpf::validation::{run_criterion, ValidationOptions, CRITERIA};

use udnpf_cli::config::{parse_scheduler, FileConfig, McSection, MethodChoice};
use udnpf_cli::output::{write_report, write_rows, Format};
use udnpf_cli::sweep::run_sweep;
use udnpf_cli::exit_code;

#[derive(Parser)]
#[command(name = "udnpf", version, about = "Coverage and ASE of dense small-cell networks under PF and RR scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Coverage, ASE and optional Monte Carlo over a lambda/gamma grid.
    Sweep(SweepArgs),
    /// Run the acceptance checks and print one line per criterion.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Master seed for Monte Carlo drops.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// BS densities per km² (comma separated), replacing the config grid.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// SINR thresholds in dB (comma separated).
    #[arg(long = "gamma-db", value_delimiter = ',', allow_hyphen_values = true)]
    gamma_db: Vec<f64>,
    /// Minimum working SINR for ASE, in dB.
    #[arg(long = "gamma0-db", allow_hyphen_values = true)]
    gamma0_db: Option<f64>,
    /// Restrict to one scheduler.
    #[arg(long, value_parser = ["pf", "rr"])]
    scheduler: Option<String>,
    #[arg(long, value_parser = ["exact", "upper", "auto"])]
    method: Option<String>,
    /// Monte Carlo drops per lambda; enables the MC columns.
    #[arg(long = "mc-drops")]
    mc_drops: Option<usize>,
    /// Write per-drop CSV and summary JSON for each lambda into this directory.
    #[arg(long = "mc-dump")]
    mc_dump: Option<PathBuf>,
    /// Skip the ASE column.
    #[arg(long = "no-ase")]
    no_ase: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ValidateArgs {
    /// Criteria to run (comma separated); all when omitted.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
    /// Scale every Monte Carlo drop count (1.0 runs the full sizes).
    #[arg(long = "drop-scale", default_value_t = 1.0)]
    drop_scale: f64,
    #[command(flatten)]
    common: Common,
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn sweep(args: SweepArgs) -> Result<i32> {
    let mut file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let s = &mut file.sweep;
    if !args.lambda.is_empty() {
        s.lambda = args.lambda.clone();
    }
    if !args.gamma_db.is_empty() {
        s.gamma_db = args.gamma_db.clone();
    }
    if let Some(g) = args.gamma0_db {
        s.gamma0_db = g;
    }
    if let Some(sc) = &args.scheduler {
        parse_scheduler(sc)?;
        s.schedulers = vec![sc.clone()];
    }
    if let Some(m) = &args.method {
        MethodChoice::parse(m)?;
        s.method = m.clone();
    }
    if args.no_ase {
        s.ase = false;
    }
    if let Some(n) = args.mc_drops {
        file.mc.get_or_insert_with(McSection::default).drops = n;
    }
    if let (Some(seed), Some(mc)) = (args.common.seed, file.mc.as_mut()) {
        mc.seed = seed;
    }
    let spec = file.resolve()?;

    let rows = run_sweep(&spec, args.mc_dump.as_deref());
    write_rows(open_out(&args.common.out)?, &rows, args.common.format)?;
    let failed = rows.iter().filter(|r| r.failed()).count();
    for r in rows.iter().filter(|r| r.failed()) {
        log::error!("lambda {} gamma {} dB {}: {}", r.lambda, r.gamma_db, r.scheduler, r.errors);
    }
    Ok(exit_code(failed, rows.len()))
}

fn validate(args: ValidateArgs) -> Result<i32> {
    let mut opts = ValidationOptions {
        drop_scale: args.drop_scale,
        ..ValidationOptions::default()
    };
    if let Some(seed) = args.common.seed {
        opts.master_seed = seed;
    }
    let ids = if args.only.is_empty() { CRITERIA.to_vec() } else { args.only.clone() };
    let mut outcomes = Vec::new();
    for id in ids {
        let o = run_criterion(id, &opts);
        println!("{}", o.line());
        outcomes.push(o);
    }
    if args.common.out.is_some() {
        write_report(open_out(&args.common.out)?, &outcomes, args.common.format)?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    Ok(exit_code(failed, outcomes.len()))
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    };
    match code {
        Ok(c) => std::process::exit(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
