use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybridns::scenarios::{parse_key_values, run, ScenarioConfig};
use hybridns::Error;

#[derive(Parser)]
#[command(name = "hybridns", version, about = "Hybrid DG Stokes / Navier-Stokes benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: stokes-mms, kovasznay, backstep, chaotic or custom.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    scenario: String,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    chi: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// Reynolds numbers (comma separated).
    #[arg(long)]
    re: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// Cell velocity orders (comma separated).
    #[arg(long)]
    order_k: Option<String>,
    #[arg(long)]
    order_kbar: Option<String>,
    #[arg(long)]
    order_m: Option<String>,
    #[arg(long)]
    order_mbar: Option<String>,
    /// Mesh resolutions (comma separated).
    #[arg(long)]
    resolutions: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    /// Random seeds (comma separated).
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    relaxation: Option<String>,
    #[arg(long)]
    pin_pressure: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Write sampled fields next to the report.
    #[arg(long)]
    fields: bool,
    #[arg(long)]
    output: Option<String>,
}

fn config(args: &RunArgs) -> hybridns::Result<ScenarioConfig> {
    let mut map = match &args.config {
        Some(path) => parse_key_values(&std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?)?,
        None => Default::default(),
    };
    if let Some(s) = map.get("scenario") {
        if *s != args.scenario {
            return Err(Error::Config(format!(
                "config file is for scenario '{s}' but '{}' was requested",
                args.scenario
            )));
        }
    }
    map.insert("scenario".into(), args.scenario.clone());
    let overrides = [
        ("alpha", &args.alpha),
        ("beta", &args.beta),
        ("chi", &args.chi),
        ("theta", &args.theta),
        ("dt", &args.dt),
        ("re", &args.re),
        ("nu", &args.nu),
        ("k", &args.order_k),
        ("kbar", &args.order_kbar),
        ("m", &args.order_m),
        ("mbar", &args.order_mbar),
        ("resolutions", &args.resolutions),
        ("steps", &args.steps),
        ("seeds", &args.seed),
        ("tol", &args.tol),
        ("max_iters", &args.max_iters),
        ("relaxation", &args.relaxation),
        ("pin_pressure", &args.pin_pressure),
        ("mode", &args.mode),
        ("output", &args.output),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            if key == "re" {
                map.remove("nu");
            }
            map.insert(key.to_string(), v.clone());
        }
    }
    if args.fields {
        map.insert("fields".into(), "true".into());
    }
    if map.contains_key("seeds") {
        map.remove("seed");
    }
    ScenarioConfig::from_map(&map)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } | Error::Singular { .. } | Error::Condensation { .. } | Error::Factorization(_) => 2,
        Error::Config(_) | Error::InvalidArgument(_) | Error::UnsupportedOrder { .. } | Error::UnsupportedDegree { .. } => 3,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run(args) = cli.command;
    let result = config(&args).and_then(|cfg| {
        let report = run(&cfg)?;
        Ok((cfg, report))
    });
    match result {
        Ok((cfg, report)) => {
            for r in &report.runs {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4e}"));
                println!(
                    "{}: dofs={} err_u={} err_p={} e_div={} mass={} reattach={}",
                    r.run,
                    r.global_dofs,
                    fmt(r.l2_velocity),
                    fmt(r.l2_pressure),
                    fmt(r.div_error),
                    fmt(r.max_mass_residual),
                    fmt(r.reattachment),
                );
            }
            println!("wrote {}", cfg.output.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
