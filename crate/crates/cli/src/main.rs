use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vrmass_cli::config::parse_config_for;
use vrmass_cli::{run, sweep_into, RunConfig, Subcommand, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Mass,
    Lichnerowicz,
    Lapse,
    Evolve,
    Variation,
    Verify,
}

impl From<Cmd> for Subcommand {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Mass => Subcommand::Mass,
            Cmd::Lichnerowicz => Subcommand::Lichnerowicz,
            Cmd::Lapse => Subcommand::Lapse,
            Cmd::Evolve => Subcommand::Evolve,
            Cmd::Variation => Subcommand::Variation,
            Cmd::Verify => Subcommand::Verify,
        }
    }
}

/// Volume-renormalized mass laboratory. Several --config flags run a sweep.
#[derive(Parser, Debug)]
#[command(name = "vrmass", version)]
struct Cli {
    /// Subcommand; may instead come from the config's `subcommand` key.
    #[arg(value_enum)]
    command: Option<Cmd>,
    /// key = value config file (repeatable).
    #[arg(long)]
    config: Vec<PathBuf>,
    /// Output directory (the sweep root when several configs are given).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn load(text: &str, cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = parse_config_for(text, cli.command.map(Into::into)).map_err(|e| e.to_string())?;
    let mut given = |key: &str| cfg.defaulted.retain(|k| k != key);
    if cli.seed.is_some() {
        given("seed");
    }
    if cli.threads.is_some() {
        given("threads");
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err("--threads must be positive".into());
        }
        cfg.threads = t;
    }
    Ok(cfg)
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn main_inner(cli: Cli) -> Result<i32, (i32, String)> {
    let cfg_err = |m: String| (EXIT_CONFIG, m);
    if cli.config.len() > 1 {
        let root = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let mut configs = Vec::new();
        for p in &cli.config {
            let mut c = load(&read(p).map_err(cfg_err)?, &cli).map_err(|m| cfg_err(format!("{}: {m}", p.display())))?;
            c.out = root.join(&c.out);
            configs.push(c);
        }
        let threads = cli.threads.unwrap_or(configs[0].threads);
        let report = sweep_into(&configs, threads, &root).map_err(cfg_err)?;
        eprintln!("sweep: {} runs, {} failed", report.rows.len(), report.failures());
        return Ok(if report.failures() == 0 { EXIT_OK } else { EXIT_SOLVER });
    }
    let text = match cli.config.first() {
        Some(p) => read(p).map_err(cfg_err)?,
        None => String::new(),
    };
    if cli.command.is_none() && !text.lines().any(|l| l.trim_start().starts_with("subcommand")) {
        return Err(cfg_err("no subcommand given".into()));
    }
    let mut cfg = load(&text, &cli).map_err(cfg_err)?;
    if let Some(o) = &cli.out {
        cfg.defaulted.retain(|k| k != "out");
        cfg.out = o.clone();
    }
    let outcome = run(&cfg);
    if let Some(t) = &outcome.summary.table {
        print!("{t}");
    }
    if let Some(e) = &outcome.error {
        eprintln!("error ({}): {}", e.kind(), e.message());
    }
    Ok(outcome.code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match main_inner(cli) {
        Ok(c) => c,
        Err((c, m)) => {
            eprintln!("error: {m}");
            c
        }
    };
    ExitCode::from(code as u8)
}
