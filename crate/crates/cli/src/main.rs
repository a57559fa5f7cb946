use affvol::config::RunConfig;
use affvol::resolvent::FirstKindResolvent;
use affvol::riccati::{envelope_bounds, RiccatiSolution};
use affvol::simulate::{mc_transform, past_check, simulate_paths, McSettings};
use affvol::verify::{failed, mc_functions, run_suite};
use affvol::{output, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Affine Volterra processes with jumps: Riccati–Volterra solver, simulation and property checks.
#[derive(Parser)]
#[command(name = "affvol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for ψ, ψ̄, φ and the envelopes; writes riccati.v1.csv.
    Riccati(Common),
    /// First-kind resolvent of the kernel; writes resolvent.v1.csv.
    Resolvent(Common),
    /// Simulate mc.paths paths; writes paths.v1.csv.
    Simulate(Common),
    /// Monte Carlo transform, flatness and forward mean against theory.
    Transform(Common),
    /// Past versus forward formula and the pathwise bound on mc.past_paths paths.
    Pastcheck(Common),
    /// Run the property suite; writes verify_report.v1.csv and verify.log.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Override a config key, e.g. --set grid.n=600 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: output.dir, then $AFFVOL_OUTPUT_DIR, then ./affvol-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config, &self.overrides)?;
        if self.workers.is_some() {
            cfg.mc.workers = self.workers;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
        Ok(cfg)
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

/// Returns whether every checked property held.
fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Riccati(c) => {
            let cfg = c.load()?;
            let (model, grid, f) = (cfg.model_spec()?, cfg.grid()?, cfg.test_function()?);
            let sol = RiccatiSolution::solve(&model, &f, &grid, &cfg.solver())?;
            let env = envelope_bounds(&model, &f, &grid)?;
            let g0 = model.g0_samples(&grid);
            println!(
                "V0 = {}  V0_bar = {}  corrector iterations (max) = {}",
                sol.v0(&g0),
                sol.v0_bar(&g0),
                sol.diagnostics.max_iterations
            );
            report(&[output::write_riccati(&cfg.output_dir(), &sol, &env)?]);
            Ok(true)
        }
        Command::Resolvent(c) => {
            let cfg = c.load()?;
            let l = FirstKindResolvent::new(&cfg.kernel()?, &cfg.grid()?)?;
            println!(
                "atom = {}  provenance = {:?}  max |K*L - 1| = {:.3e}",
                l.atom(),
                l.provenance(),
                l.residual()
            );
            report(&[output::write_resolvent(&cfg.output_dir(), &l)?]);
            Ok(true)
        }
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let ens = simulate_paths(
                &cfg.model_spec()?,
                &cfg.grid()?,
                cfg.mc.paths,
                cfg.mc.seed,
                cfg.mc.workers,
            )?;
            println!("clipped fraction = {:.3e}", ens.clipped_fraction());
            report(&[output::write_paths(&cfg.output_dir(), &ens)?]);
            Ok(true)
        }
        Command::Transform(c) => {
            let cfg = c.load()?;
            let slack = cfg.tolerances.mc_slack;
            let rep = mc_transform(
                &cfg.model_spec()?,
                &cfg.grid()?,
                &mc_functions(&cfg)?,
                &cfg.mc_settings()?,
            )?;
            let mut ok = true;
            for f in &rep.functions {
                let pass = f.error() <= 3.0 * f.stderr + slack
                    && f.flatness
                        .iter()
                        .chain(&f.flatness_real)
                        .all(|r| r.deviation <= 3.0 * r.stderr + slack);
                ok &= pass;
                println!(
                    "{:<8} estimate={:.6} theory={:.6} stderr={:.2e} {}",
                    f.label,
                    f.estimate,
                    f.theory,
                    f.stderr,
                    if pass { "pass" } else { "fail" }
                );
            }
            println!("clipped fraction = {:.3e}", rep.clipped_fraction);
            report(&output::write_transform(&cfg.output_dir(), &rep, slack)?);
            Ok(ok)
        }
        Command::Pastcheck(c) => {
            let cfg = c.load()?;
            let settings = McSettings {
                paths: cfg.mc.past_paths,
                ..cfg.mc_settings()?
            };
            let rep = past_check(
                &cfg.model_spec()?,
                &cfg.grid()?,
                &cfg.test_function()?,
                &settings,
            )?;
            let t = &cfg.tolerances;
            let ok =
                rep.max_two_formula_gap <= t.two_formula && rep.max_log_excess <= t.bound.ln_1p();
            println!(
                "max |v_past - v_forward| = {:.3e}  ln C = {:.6e}  max (Re V - V_bar - ln C) = {:.3e}",
                rep.max_two_formula_gap, rep.bound.ln_c, rep.max_log_excess
            );
            report(&output::write_pastcheck(&cfg.output_dir(), &rep)?);
            Ok(ok)
        }
        Command::Verify(c) => {
            let cfg = c.load()?;
            let reports = run_suite(&cfg)?;
            let log = output::verify_log(&reports);
            print!("{log}");
            let dir = cfg.output_dir();
            let csv = output::write_verify(&dir, &reports)?;
            let log_path = dir.join("verify.log");
            std::fs::write(&log_path, &log)?;
            report(&[csv, log_path]);
            let n = failed(&reports);
            println!("{} claims, {} failed", reports.len(), n);
            Ok(n == 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
