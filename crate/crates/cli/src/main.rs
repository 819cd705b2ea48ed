use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rodflow_cli::{run, write_outcome, CliError, Config};

/// Verification experiments for Brownian hard rods.
///
/// Exit codes: 0 when every check passes, 1 when a check fails or the
/// numerics break down, 2 for usage and configuration errors.
#[derive(Parser)]
#[command(name = "rodflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `section.key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and the CSV curves.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for ensembles (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Wasserstein isometry of the expansion maps, plus a brute-force oracle.
    VerifyIsometry(Common),
    /// Direct rod simulation against expanded point particles.
    VerifyMapping(Common),
    /// Particle systems against the limit equation as n grows.
    ContinuumLimit(Common),
    /// Invariant-measure sample against the free-energy minimizer.
    InvariantLdp(Common),
    /// Energy-dissipation balance along the limit equation.
    EdpCheck(Common),
    /// Order of the small-alpha approximation.
    BrunaChapman(Common),
    /// Minimizer of the free energy.
    SteadyState(Common),
    /// Cost of gradient-flow and perturbed paths.
    RateFunctional(Common),
    /// Drift recovery from compressed density paths.
    ControlRecovery(Common),
    /// Relative entropy, gamma and Ent_V.
    FunctionalIdentity(Common),
}

impl Command {
    fn split(&self) -> (&'static str, &Common) {
        match self {
            Command::VerifyIsometry(c) => ("verify-isometry", c),
            Command::VerifyMapping(c) => ("verify-mapping", c),
            Command::ContinuumLimit(c) => ("continuum-limit", c),
            Command::InvariantLdp(c) => ("invariant-ldp", c),
            Command::EdpCheck(c) => ("edp-check", c),
            Command::BrunaChapman(c) => ("bruna-chapman", c),
            Command::SteadyState(c) => ("steady-state", c),
            Command::RateFunctional(c) => ("rate-functional", c),
            Command::ControlRecovery(c) => ("control-recovery", c),
            Command::FunctionalIdentity(c) => ("functional-identity", c),
        }
    }
}

fn execute(name: &str, common: &Common) -> Result<bool, CliError> {
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    let mut cfg = Config::from_file(&common.config)?;
    if let Some(s) = common.seed {
        cfg.set("run.seed", s);
    }
    let outcome = run(name, &cfg)?;
    write_outcome(&common.out, name, &cfg, &outcome)?;
    for c in &outcome.checks {
        let mark = if c.passed { "pass" } else { "FAIL" };
        println!("{mark}  {}: {:e} {} {:e}", c.name, c.value, c.relation, c.threshold);
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = cli.command.split();
    match execute(name, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rodflow {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
