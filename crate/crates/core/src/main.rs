use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdcr::experiments::{run_scenario, run_trial, trial_rng, write_outputs, Averaging, Axis, Scenario, Scheme};
use fdcr::verify::run_checks;
use fdcr::Error;

#[derive(Parser)]
#[command(name = "fdcr", version, about = "Robust interference-leakage beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and write CSV plus manifest.
    Run(RunArgs),
    /// Run the built-in property checks and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Solve one seeded trial and dump every audit as JSON.
    Demo(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig2,
    Fig3,
    Custom,
}

#[derive(Args)]
struct SweepArgs {
    /// Antenna counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    nt: Option<Vec<usize>>,
    /// Downlink SINR target in dB: a value or start:stop:step.
    #[arg(long, value_parser = parse_range)]
    dl_sinr_db: Option<Vec<f64>>,
    #[arg(long)]
    ul_sinr_db: Option<f64>,
    /// Normalized error levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    kappa2: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "fig2")]
    scenario: Preset,
    /// TOML file with Scenario fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV; the manifest goes to `<out>.manifest`. Prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
    schemes: Option<Vec<Scheme>>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_enum)]
    averaging: Option<AveragingArg>,
    /// Leave `mean_solve_ms` empty so the CSV is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct DemoArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Trial index within the seed.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
    schemes: Option<Vec<Scheme>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Watts,
    Dbm,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| format!("unknown scheme `{s}` (expected proposed, baseline1 or baseline2)"))
}

fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, b, c] => {
            let (a, b, c) = (num(a)?, num(b)?, num(c)?);
            if !(c > 0.0) || b < a {
                return Err("expected start:stop:step with step > 0 and stop >= start".into());
            }
            let n = ((b - a) / c + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + c * i as f64).collect())
        }
        _ => Err(format!("`{s}` is neither a value nor start:stop:step")),
    }
}

fn apply_sweep(s: &mut Scenario, a: &SweepArgs) -> Result<(), String> {
    if let Some(nt) = &a.nt {
        s.nt = nt.clone();
    }
    if let Some(v) = a.ul_sinr_db {
        s.ul_sinr_db = v;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    let dl = a.dl_sinr_db.clone();
    let k = a.kappa2.clone();
    let many = |x: &Option<Vec<f64>>| x.as_ref().is_some_and(|v| v.len() > 1);
    if many(&dl) && many(&k) {
        return Err("only one of --dl-sinr-db and --kappa2 may list several values".into());
    }
    if many(&k) || (k.is_some() && !many(&dl) && s.axis == Axis::Kappa2) {
        s.axis = Axis::Kappa2;
        s.values = k.unwrap();
        if let Some(d) = dl {
            s.dl_sinr_db = d[0];
        }
    } else if dl.is_some() || k.is_some() {
        if let Some(d) = dl {
            if s.axis == Axis::Kappa2 && d.len() == 1 {
                s.dl_sinr_db = d[0];
            } else {
                s.axis = Axis::DlSinrDb;
                s.values = d;
            }
        }
        if let Some(k) = k {
            s.kappa2 = k[0];
        }
    }
    Ok(())
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn scenario_for(args: &RunArgs) -> Result<Scenario, String> {
    let mut s = match (&args.config, args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        (None, Preset::Fig2) => Scenario::fig2(),
        (None, Preset::Fig3) => Scenario::fig3(),
        (None, Preset::Custom) => Scenario { name: "custom".into(), ..Scenario::fig2() },
    };
    apply_sweep(&mut s, &args.sweep)?;
    if let Some(t) = args.trials {
        s.trials = t;
    }
    if let Some(sc) = &args.schemes {
        s.schemes = sc.clone();
    }
    if let Some(a) = args.averaging {
        s.averaging = match a {
            AveragingArg::Watts => Averaging::Watts,
            AveragingArg::Dbm => Averaging::Dbm,
        };
    }
    if args.no_timing {
        s.record_timing = false;
    }
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn run(args: RunArgs) -> ExitCode {
    let s = match scenario_for(&args) {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    let res = match run_scenario(&s, args.jobs) {
        Ok(r) => r,
        Err(e @ Error::InvalidConfig(_)) => return usage(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match &args.out {
        Some(out) => {
            if let Err(e) = write_outputs(&res, out, args.jobs) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
        None => print!("{}", res.to_csv()),
    }
    let failed = res.audit_failures();
    if failed > 0 {
        eprintln!("{failed} trial(s) failed the audit");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn verify(seed: u64) -> ExitCode {
    let checks = match run_checks(seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!("{}  {:width$}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn demo(args: DemoArgs) -> ExitCode {
    let mut s = Scenario { values: vec![10.0], nt: vec![9], ..Scenario::fig2() };
    if let Err(e) = apply_sweep(&mut s, &args.sweep) {
        return usage(e);
    }
    let cfg = s.config(s.nt[0], s.values[0]);
    if let Err(e) = cfg.validate() {
        return usage(e);
    }
    let schemes = args.schemes.unwrap_or_else(|| Scheme::ALL.to_vec());
    let res = match run_trial(&cfg, &mut trial_rng(s.seed, args.trial), &schemes, &s.solver) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let dump = serde_json::json!({ "seed": s.seed, "trial": args.trial, "config": cfg, "result": res });
    println!("{}", serde_json::to_string_pretty(&dump).expect("trial result serializes"));
    let failed = res.outcomes.iter().flat_map(|o| &o.audits).any(|a| !a.pass());
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(a) => run(a),
        Command::Verify { seed } => verify(seed),
        Command::Demo(a) => demo(a),
    }
}
