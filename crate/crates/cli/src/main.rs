use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use floqsq::circuit::{all_presets, load_preset, write_presets, Quantity};
use serde_json::json;

mod config;
mod output;
mod scenarios;

use config::{required, Config, ConfigError};
use output::RunRecord;
use scenarios::{RunError, SCENARIOS};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "floqsq", version, about = "Dissipative spin squeezing in a parametrically driven Floquet cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set model.N=12`. Values are TOML literals.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory; takes precedence over `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List scenarios with their required keys and a minimal config.
    List,
    /// Show the platform presets, or one preset as TOML.
    Presets { name: Option<String> },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, set, out } => run(config, &set, out),
        Command::List => {
            print!("{}", listing());
            ExitCode::SUCCESS
        }
        Command::Presets { name } => presets(name.as_deref()),
    }
}

fn listing() -> String {
    let mut s = String::new();
    for sc in SCENARIOS {
        s += &format!("{}\n  {}\n  required: {}\n  minimal config:\n", sc.name, sc.description, sc.required.join(", "));
        for line in sc.minimal.lines() {
            s += &format!("    {line}\n");
        }
    }
    s
}

fn quantity(q: Option<Quantity>) -> String {
    match q {
        None => "-".into(),
        Some(q) => {
            let prefix = if q.upper_bound {
                "<"
            } else if q.approximate {
                "~"
            } else {
                ""
            };
            format!("{prefix}{}", q.value)
        }
    }
}

fn presets(name: Option<&str>) -> ExitCode {
    if let Some(name) = name {
        return match load_preset(name).and_then(|p| write_presets(&[p])) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        };
    }
    println!(
        "{:<12} {:>7} {:>10} {:>8} {:>10} {:>10} {:>10} {:>12} {:>9}",
        "name", "tunable", "ωc/2π GHz", "Q", "κ/2π MHz", "N", "√Ng/2π MHz", "γφ/2π MHz", "γ/2π Hz"
    );
    for p in all_presets() {
        println!(
            "{:<12} {:>7} {:>10} {:>8} {:>10} {:>10} {:>10} {:>12} {:>9}",
            p.name,
            p.tunable,
            quantity(p.omega_c),
            quantity(p.q),
            quantity(p.kappa),
            quantity(p.n),
            quantity(p.g_col),
            quantity(p.gamma_phi),
            quantity(p.gamma),
        );
    }
    ExitCode::SUCCESS
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

struct Setup {
    cfg: Config,
    scenario: String,
    dir: PathBuf,
    csv: bool,
    json: bool,
}

fn setup(path: &PathBuf, set: &[String], out: Option<PathBuf>) -> Result<Setup, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = Config::parse(&text)?;
    for s in set {
        cfg.apply_override(s)?;
    }
    let scenario = required("scenario", cfg.str("scenario")?)?;
    let dir_key = cfg.str("output.dir")?;
    let dir = out.unwrap_or_else(|| PathBuf::from(dir_key.unwrap_or_else(|| "out".into())));
    let formats = cfg
        .str_list("output.formats")?
        .unwrap_or_else(|| vec!["csv".into(), "json".into()]);
    if let Some(f) = formats.iter().find(|f| !matches!(f.as_str(), "csv" | "json")) {
        return Err(ConfigError::at("output.formats", format!("unknown format \"{f}\"; use \"csv\" or \"json\"")));
    }
    let csv = formats.iter().any(|f| f == "csv");
    let json = formats.iter().any(|f| f == "json");
    Ok(Setup {
        cfg,
        scenario,
        dir,
        csv,
        json,
    })
}

fn run(path: PathBuf, set: &[String], out: Option<PathBuf>) -> ExitCode {
    let s = match setup(&path, set, out) {
        Ok(s) => s,
        Err(e) => return config_failure(&e),
    };
    let prepared = match scenarios::prepare(&s.scenario, &s.cfg) {
        Ok(p) => p,
        Err(e) => return config_failure(&e),
    };
    let mut rec = RunRecord::new(s.dir.clone(), s.csv, s.json);
    rec.extra("derived", prepared.derived);
    let start = Instant::now();
    let result = (prepared.job)(&mut rec);
    let wall = start.elapsed().as_secs_f64();
    let (status, error, code) = match &result {
        Ok(()) => ("ok", None, ExitCode::SUCCESS),
        Err(e @ RunError::Numerical(inner)) => {
            rec.diagnostic("failure", json!({ "error": inner.to_string(), "detail": format!("{inner:?}") }));
            ("failed", Some(e.to_string()), ExitCode::from(EXIT_NUMERICAL))
        }
        Err(e @ RunError::Config(_)) => ("failed", Some(e.to_string()), ExitCode::from(EXIT_CONFIG)),
        Err(e @ RunError::Io(_)) => ("failed", Some(e.to_string()), ExitCode::from(EXIT_IO)),
    };
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    match rec.write_manifest(&s.scenario, status, error.as_deref(), s.cfg.echo(), s.cfg.overrides(), wall) {
        Ok(Some(p)) => println!("{}", output::display(&p)),
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: cannot write manifest: {e}");
            return ExitCode::from(EXIT_IO);
        }
    }
    code
}
