use std::io::{self, Write};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};

use scanforge_cli::config::KEYS;
use scanforge_cli::{cmd_counts, cmd_register, cmd_scaling, cmd_simulate, cmd_verify, CliError, ExperimentSpec};

const SUBCOMMANDS: [(&str, &str); 5] = [
    ("verify", "Check generated (or --network) circuits lane by lane and against size/depth formulas"),
    ("counts", "Count span and work of each circuit and compare with the formulas"),
    ("simulate", "Simulated strong scaling with theoretical speedup bounds"),
    ("register", "Register a frame series (synthetic or --manifest) through a prefix scan"),
    ("scaling", "Strong or weak scaling on the simulator or on threads"),
];

fn cli() -> Command {
    let with_keys = |cmd: Command| {
        cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value settings; flags override them"),
        )
        .args(KEYS.iter().map(|k| Arg::new(*k).long(*k).value_name("VALUE")))
    };
    Command::new("scanforge")
        .about("Prefix scans: circuits, cost model, simulator and registration benchmarks")
        .after_help("SCANFORGE_SEED sets the seed unless --seed is given.\nExit codes: 0 ok, 1 mismatch or failure, 2 usage, 3 I/O.")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(SUBCOMMANDS.map(|(name, about)| with_keys(Command::new(name).about(about))))
}

fn resolve(m: &ArgMatches) -> Result<ExperimentSpec, CliError> {
    let config = match m.get_one::<String>("config") {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?),
        None => None,
    };
    let env_seed = std::env::var("SCANFORGE_SEED").ok();
    let flags: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    ExperimentSpec::resolve(config.as_deref(), env_seed.as_deref(), &flags)
}

fn run(name: &str, m: &ArgMatches) -> Result<(), CliError> {
    let spec = resolve(m)?;
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    match name {
        "verify" => {
            let rows = cmd_verify(&spec, &mut out, &mut err)?;
            let bad: Vec<String> = rows
                .iter()
                .filter(|r| !r.ok())
                .map(|r| format!("{} n={}", r.kind, r.n))
                .collect();
            if !bad.is_empty() {
                return Err(CliError::Mismatch(format!("verification failed for {}", bad.join(", "))));
            }
        }
        "counts" => {
            let rows = cmd_counts(&spec, &mut out)?;
            let bad: Vec<String> = rows
                .iter()
                .filter(|r| !r.ok())
                .map(|r| format!("{} n={}", r.kind, r.n))
                .collect();
            if !bad.is_empty() {
                return Err(CliError::Mismatch(format!("counts differ from formulas for {}", bad.join(", "))));
            }
        }
        "simulate" => {
            cmd_simulate(&spec, &mut out)?;
        }
        "register" => {
            cmd_register(&spec, &mut out, &mut err)?;
        }
        "scaling" => {
            cmd_scaling(&spec, &mut out, &mut err)?;
        }
        _ => unreachable!("clap restricts subcommands"),
    }
    out.flush().map_err(|e| CliError::Io {
        path: "<stdout>".into(),
        message: e.to_string(),
    })
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
