//! The property suite: one [`PropertyReport`] per claim, in a fixed order
//! (kernel identities, Riccati, past-formula cross-checks, simulation).
//!
//! A claim fails iff `magnitude > tolerance`. Solver/invariant errors inside a claim
//! count as failures with infinite magnitude, capability errors skip the claim, and
//! anything else aborts the suite.

use crate::config::RunConfig;
use crate::conv::default_pieces;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jumps::LevyMeasure;
use crate::kernel::Kernel;
use crate::model::{InputCurve, ModelSpec, TestFunction};
use crate::pastform::{
    bound_constant, compute_pi_tilde, gap_monotonicity_violation, past_formulas,
    pi_tilde_by_definition,
};
use crate::resolvent::{FirstKindResolvent, Provenance, SecondKindResolvent};
use crate::riccati::{
    classical_riccati_oracle, comparison_check, envelope_bounds, envelope_check, solve_psi,
    RiccatiSolution, SolverConfig,
};
use crate::simulate::{
    forward_mean_curve, forward_mean_direct, mc_transform, past_check, McSettings,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::OnceCell;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub claim: String,
    pub status: Status,
    /// Worst case over everything the claim inspects.
    pub magnitude: f64,
    pub tolerance: f64,
    pub runtime: Duration,
    pub detail: String,
}

pub fn failed(reports: &[PropertyReport]) -> usize {
    reports.iter().filter(|r| r.status == Status::Fail).count()
}

enum Outcome {
    Measured {
        magnitude: f64,
        tolerance: f64,
        detail: String,
    },
    Skipped(String),
}

fn measured(magnitude: f64, tolerance: f64) -> Result<Outcome> {
    Ok(Outcome::Measured {
        magnitude,
        tolerance,
        detail: String::new(),
    })
}

fn measured_with(magnitude: f64, tolerance: f64, detail: String) -> Result<Outcome> {
    Ok(Outcome::Measured {
        magnitude,
        tolerance,
        detail,
    })
}

struct Suite<'a> {
    disable: &'a [String],
    reports: Vec<PropertyReport>,
}

impl Suite<'_> {
    fn enabled(&self, claim: &str) -> bool {
        !self.disable.iter().any(|d| match d.strip_suffix('*') {
            Some(prefix) => claim.starts_with(prefix),
            None => d == claim,
        })
    }

    fn run(&mut self, claim: &str, f: impl FnOnce() -> Result<Outcome>) -> Result<()> {
        if !self.enabled(claim) {
            return Ok(());
        }
        let start = Instant::now();
        let (status, magnitude, tolerance, detail) = match f() {
            Ok(Outcome::Measured {
                magnitude,
                tolerance,
                detail,
            }) => {
                // NaN magnitudes fail too.
                let pass = magnitude <= tolerance;
                (
                    if pass { Status::Pass } else { Status::Fail },
                    magnitude,
                    tolerance,
                    detail,
                )
            }
            Ok(Outcome::Skipped(why)) => (Status::Skipped, f64::NAN, f64::NAN, why),
            Err(e @ (Error::Solver { .. } | Error::Invariant(_))) => {
                (Status::Fail, f64::INFINITY, f64::NAN, e.to_string())
            }
            Err(e @ Error::Capability(_)) => (Status::Skipped, f64::NAN, f64::NAN, e.to_string()),
            Err(e) => return Err(e),
        };
        self.reports.push(PropertyReport {
            claim: claim.to_string(),
            status,
            magnitude,
            tolerance,
            runtime: start.elapsed(),
            detail,
        });
        Ok(())
    }
}

/// A randomized admissible model with `f ≡ iu`, `u ∈ [0.25, 4]`.
pub fn random_admissible_model<R: Rng>(rng: &mut R) -> Result<(ModelSpec, TestFunction)> {
    let kernel = match rng.random_range(0..4) {
        0 => Kernel::fractional(rng.random_range(0.55..=1.0))?,
        1 => Kernel::exponential(rng.random_range(0.5..2.0), rng.random_range(0.0..3.0))?,
        2 => Kernel::gamma(rng.random_range(0.55..=1.0), rng.random_range(0.0..3.0))?,
        _ => Kernel::constant(rng.random_range(0.5..2.0))?,
    };
    let jumps = match rng.random_range(0..3) {
        0 => LevyMeasure::none(),
        1 => LevyMeasure::exponential(rng.random_range(0.0..2.0), rng.random_range(2.0..20.0))?,
        _ => LevyMeasure::point_mass(rng.random_range(0.0..2.0), rng.random_range(0.05..0.5))?,
    };
    let model = ModelSpec::new(
        kernel,
        rng.random_range(-1.0..0.5),
        rng.random_range(0.0..0.5),
        jumps,
        InputCurve::constant(rng.random_range(0.05..1.0))?,
    )?;
    Ok((
        model,
        TestFunction::imaginary(rng.random_range(0.25..=4.0))?,
    ))
}

/// Worst comparison and envelope violations over a randomized model sweep (`T = 1`, `N = 200`).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub models: usize,
    /// `max (ℜψ - ψ̄)^+` over nodes.
    pub gap_violation: f64,
    /// `max (ℜF - F̄∘ℜ)^+` over random points.
    pub generator_violation: f64,
    pub envelope_violation: f64,
}

pub fn model_sweep(
    models: usize,
    seed: u64,
    generator_samples: usize,
    solver: &SolverConfig,
) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(1.0, 200)?;
    let mut rep = SweepReport {
        models,
        gap_violation: 0.0,
        generator_violation: 0.0,
        envelope_violation: 0.0,
    };
    for k in 0..models {
        let (m, f) = random_admissible_model(&mut rng)?;
        let sol = RiccatiSolution::solve(&m, &f, &grid, solver)?;
        let c = comparison_check(&m, &sol, generator_samples, seed.wrapping_add(k as u64));
        rep.gap_violation = rep.gap_violation.max(c.max_gap_violation);
        rep.generator_violation = rep.generator_violation.max(c.generator_violation);
        let env = envelope_bounds(&m, &f, &grid)?;
        rep.envelope_violation = rep
            .envelope_violation
            .max(envelope_check(&sol, &env).max_violation);
    }
    Ok(rep)
}

/// `‖ψ_N - ψ_{2N}‖_∞` on the coarse nodes for `N = n, 2n, 4n` (three doublings).
pub fn self_convergence(
    model: &ModelSpec,
    f: &TestFunction,
    horizon: f64,
    n: usize,
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let sols = (0..4)
        .map(|k| Ok(solve_psi(model, f, &Grid::new(horizon, n << k)?, solver)?.psi))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..3)
        .map(|k| {
            (0..=n << k)
                .map(|i| (sols[k][i] - sols[k + 1][2 * i]).norm())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// The same model with `K ≡ 1` and the flat input curve `g₀ ≡ g₀(0)`.
pub fn unit_kernel_variant(model: &ModelSpec, grid: &Grid) -> Result<ModelSpec> {
    let mut m = model.with_kernel(Kernel::constant(1.0)?);
    m.g0 = InputCurve::constant(model.g0_samples(grid)[0])?;
    Ok(m)
}

/// `ℜf` as a test function.
pub fn real_part(f: &TestFunction, grid: &Grid) -> Result<TestFunction> {
    match f.constant_value() {
        Some(w) => TestFunction::constant(Complex64::new(w.re, 0.0)),
        None => TestFunction::table(
            grid.nodes(),
            f.samples(grid)
                .iter()
                .map(|v| Complex64::new(v.re, 0.0))
                .collect(),
        ),
    }
}

/// Test functions of the Monte Carlo claims: `iu` for each `mc.cf_u`, plus the configured `f`
/// when it is not already one of them.
pub fn mc_functions(cfg: &RunConfig) -> Result<Vec<(String, TestFunction)>> {
    let mut v = cfg
        .mc
        .cf_u
        .iter()
        .map(|u| Ok((format!("u={u}"), TestFunction::imaginary(*u)?)))
        .collect::<Result<Vec<_>>>()?;
    let f = cfg.test_function()?;
    if !v.iter().any(|(_, g)| *g == f) {
        v.push(("f".to_string(), f));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    pub n: usize,
    /// Additive Monte Carlo slack at this resolution (`mc_slack · grid.n / n`).
    pub slack: f64,
    /// `max (|Ê - exp V₀| - 3·stderr - slack)` over the test functions.
    pub transform_excess: f64,
    /// `max (deviation - 3·stderr - slack)` over functions, checkpoints and both systems.
    pub flatness_excess: f64,
    pub clipped_fraction: f64,
    pub two_formula_max: f64,
    pub two_formula_mean: f64,
}

/// Re-runs the transform, flatness and two-formula experiments on `mc.refine_n`.
/// Checkpoints are rounded to the nearest node on each grid.
pub fn refinement_study(cfg: &RunConfig) -> Result<Vec<RefinementRow>> {
    let model = cfg.model_spec()?;
    let f = cfg.test_function()?;
    let functions = mc_functions(cfg)?;
    cfg.mc
        .refine_n
        .iter()
        .map(|&n| {
            let grid = Grid::new(cfg.grid.horizon, n)?;
            let checkpoints: Vec<usize> = cfg
                .mc
                .checkpoints
                .iter()
                .map(|q| ((q * n as f64).round() as usize).clamp(1, n - 1))
                .collect();
            let settings = McSettings {
                paths: cfg.mc.paths,
                seed: cfg.mc.seed,
                checkpoints,
                workers: cfg.mc.workers,
                solver: cfg.solver(),
            };
            let slack = cfg.tolerances.mc_slack * cfg.grid.n as f64 / n as f64;
            let t = mc_transform(&model, &grid, &functions, &settings)?;
            let transform_excess = t
                .functions
                .iter()
                .map(|r| r.error() - 3.0 * r.stderr - slack)
                .fold(f64::NEG_INFINITY, f64::max);
            let flatness_excess = t
                .functions
                .iter()
                .flat_map(|r| r.flatness.iter().chain(&r.flatness_real))
                .map(|row| row.deviation - 3.0 * row.stderr - slack)
                .fold(f64::NEG_INFINITY, f64::max);
            let past = past_check(
                &model,
                &grid,
                &f,
                &McSettings {
                    paths: cfg.mc.past_paths,
                    ..settings
                },
            )?;
            let gaps: Vec<f64> = past
                .rows
                .iter()
                .map(|r| (r.v_past - r.v_forward).norm())
                .collect();
            Ok(RefinementRow {
                n,
                slack,
                transform_excess,
                flatness_excess,
                clipped_fraction: t.clipped_fraction,
                two_formula_max: past.max_two_formula_gap,
                two_formula_mean: gaps.iter().sum::<f64>() / gaps.len().max(1) as f64,
            })
        })
        .collect()
}

/// Largest ratio `v[k+1] / v[k]` (0 when `v` is identically 0); the sequence strictly decreases iff this is `< 1`.
pub fn worst_ratio(v: &[f64]) -> f64 {
    v.windows(2)
        .map(|w| {
            if w[0] == 0.0 && w[1] == 0.0 {
                0.0
            } else {
                w[1] / w[0]
            }
        })
        .fold(0.0, f64::max)
}

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn run_suite(cfg: &RunConfig) -> Result<Vec<PropertyReport>> {
    cfg.validate()?;
    let model = cfg.model_spec()?;
    let grid = cfg.grid()?;
    let f = cfg.test_function()?;
    let tol = &cfg.tolerances;
    let solver = cfg.solver();
    let mut s = Suite {
        disable: &cfg.verify.disable,
        reports: Vec::new(),
    };

    s.run("kernel.cell_weights_monotone", || {
        let w = model.kernel.cell_weights(&grid);
        let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let neg = w.iter().fold(0.0f64, |m, v| m.max(-v));
        let inc = w.windows(2).fold(0.0f64, |m, p| m.max(p[1] - p[0]));
        measured(neg.max(inc), 1e-12 * scale)
    })?;
    s.run("resolvent.first_kind_identity", || {
        let l =
            FirstKindResolvent::with_tolerance(&model.kernel, &grid, f64::INFINITY, f64::INFINITY)?;
        let t = match l.provenance() {
            Provenance::Analytic => tol.resolvent_analytic,
            Provenance::DiscreteDeconvolution => tol.resolvent_discrete,
        };
        measured_with(l.residual(), t, format!("{:?}", l.provenance()))
    })?;
    s.run("resolvent.second_kind_identity", || {
        let r = SecondKindResolvent::new(&model.kernel, model.b, &grid)?;
        measured(r.residual(), tol.second_kind)
    })?;
    s.run("forward_mean.direct_method", || {
        let a = forward_mean_curve(&model, &grid)?;
        let b = forward_mean_direct(&model, &grid);
        measured(
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            tol.forward_mean_routes,
        )
    })?;
    s.run("forward_mean.unit_kernel_closed_form", || {
        let m = unit_kernel_variant(&model, &grid)?;
        let x0 = m.g0_samples(&grid)[0];
        let t = grid.horizon();
        let exact = if model.b == 0.0 {
            x0 + model.b0 * t
        } else {
            x0 * (model.b * t).exp() + model.b0 * ((model.b * t).exp() - 1.0) / model.b
        };
        let fine = Grid::new(t, grid.steps().max(1000))?;
        measured(
            (crate::simulate::forward_mean(&m, &fine)? - exact).abs(),
            tol.closed_form_mean,
        )
    })?;

    s.run("riccati.classical_oracle", || {
        if f.constant_value().is_none() {
            return Ok(Outcome::Skipped("needs a constant f".into()));
        }
        let m = unit_kernel_variant(&model, &grid)?;
        let sol = RiccatiSolution::solve(&m, &f, &grid, &solver)?;
        let o = classical_riccati_oracle(&m, &f, &grid)?;
        let err = sol
            .psi
            .iter()
            .zip(&o.psi)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        measured(err, tol.oracle)
    })?;
    s.run("riccati.self_convergence", || {
        let d = self_convergence(&model, &f, grid.horizon(), grid.steps(), &solver)?;
        measured_with(
            worst_ratio(&d),
            1.0,
            format!("diffs {:.3e} {:.3e} {:.3e}", d[0], d[1], d[2]),
        )
    })?;
    // Shared inputs are computed by the first claim that needs them (so runtimes land there).
    let sweep = OnceCell::new();
    let sweep = || {
        sweep
            .get_or_init(|| {
                model_sweep(
                    cfg.verify.sweep_models,
                    cfg.verify.sweep_seed,
                    cfg.verify.generator_samples,
                    &solver,
                )
            })
            .clone()
    };
    let configured = OnceCell::new();
    let configured = || {
        configured
            .get_or_init(|| RiccatiSolution::solve(&model, &f, &grid, &solver))
            .clone()
    };
    s.run("riccati.comparison", || {
        let sol = configured()?;
        let c = comparison_check(
            &model,
            &sol,
            cfg.verify.generator_samples,
            cfg.verify.sweep_seed,
        );
        let sw = sweep()?;
        let worst = c
            .max_gap_violation
            .max(c.generator_violation)
            .max(sw.gap_violation)
            .max(sw.generator_violation);
        measured_with(worst, tol.comparison, format!("{} sweep models", sw.models))
    })?;
    s.run("riccati.envelopes", || {
        let sol = configured()?;
        let own = envelope_check(&sol, &envelope_bounds(&model, &f, &grid)?).max_violation;
        let sw = sweep()?;
        measured_with(
            own.max(sw.envelope_violation),
            tol.envelope,
            format!("{} sweep models", sw.models),
        )
    })?;
    s.run("riccati.cf_modulus", || {
        let g0 = model.g0_samples(&grid);
        let mut worst: f64 = 0.0;
        for (_, g) in mc_functions(cfg)? {
            if g.samples(&grid).iter().all(|v| v.re == 0.0) {
                let v0 = RiccatiSolution::solve(&model, &g, &grid, &solver)?.v0(&g0);
                worst = worst.max(v0.exp().norm() - 1.0);
            }
        }
        measured(worst, 1e-12)
    })?;

    let resolvent = OnceCell::new();
    let resolvent = || {
        resolvent
            .get_or_init(|| FirstKindResolvent::new(&model.kernel, &grid))
            .clone()
    };
    let checkpoints = cfg.checkpoints()?;
    s.run("pastform.pi_tilde_routes", || {
        let sol = configured()?;
        let l = resolvent()?;
        let cells = l.cells();
        let n = grid.steps();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.verify.sweep_seed);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let lag = rng.random_range(1..n);
            let r = rng.random_range(1..=n - lag);
            let pi = compute_pi_tilde(&sol.psi, &sol.f_psi, &l, &cells, lag, r)?;
            let direct = pi_tilde_by_definition(
                &sol.f_psi,
                &model.kernel,
                &l,
                &grid,
                lag,
                grid.node(r),
                default_pieces(r),
            );
            worst = worst.max((pi.values[r] - direct).norm());
        }
        measured(worst, tol.pi_routes)
    })?;
    s.run("pastform.gap_monotone", || {
        let sol = configured()?;
        let (_, p) = past_formulas(&model, &sol, &checkpoints)?;
        let v = p
            .complex
            .iter()
            .zip(&p.real)
            .map(|(c, r)| gap_monotonicity_violation(&c.pi, &r.pi))
            .fold(0.0, f64::max);
        measured(v, tol.gap)
    })?;
    s.run("pastform.bound_constant_real_f", || {
        let fr = real_part(&f, &grid)?;
        let sol = RiccatiSolution::solve(&model, &fr, &grid, &solver)?;
        let b = bound_constant(&sol, &model.g0_samples(&grid), &resolvent()?);
        measured(b.ln_c.abs(), 0.0)
    })?;

    let samplable = crate::simulate::SimulationPlan::new(&model, &grid).map(|_| ());
    let skip = |r: &Result<()>| -> Option<Outcome> {
        r.as_ref().err().map(|e| Outcome::Skipped(e.to_string()))
    };
    let settings = cfg.mc_settings()?;
    let functions = mc_functions(cfg)?;
    let slack = tol.mc_slack;
    let mc = OnceCell::new();
    let mc = || {
        mc.get_or_init(|| mc_transform(&model, &grid, &functions, &settings))
            .clone()
    };
    s.run("sim.forward_mean", || {
        if let Some(o) = skip(&samplable) {
            return Ok(o);
        }
        let t = mc()?;
        let n = grid.steps();
        measured(
            (t.mean_mc[n] - t.mean_formula[n]).abs(),
            3.0 * t.mean_stderr[n] + slack,
        )
    })?;
    for (k, (label, _)) in functions.iter().enumerate() {
        s.run(&format!("sim.transform[{label}]"), || {
            if let Some(o) = skip(&samplable) {
                return Ok(o);
            }
            let t = mc()?;
            let r = &t.functions[k];
            measured(r.error(), 3.0 * r.stderr + slack)
        })?;
        for (sys, real) in [("flatness", false), ("flatness_real", true)] {
            s.run(&format!("sim.{sys}[{label}]"), || {
                if let Some(o) = skip(&samplable) {
                    return Ok(o);
                }
                let t = mc()?;
                let r = &t.functions[k];
                let rows = if real { &r.flatness_real } else { &r.flatness };
                measured(
                    rows.iter()
                        .map(|x| x.deviation - 3.0 * x.stderr)
                        .fold(0.0, f64::max),
                    slack,
                )
            })?;
        }
    }
    s.run("sim.jump_compensator", || {
        if let Some(o) = skip(&samplable) {
            return Ok(o);
        }
        let t = mc()?;
        measured(t.compensator_mean.abs(), 3.0 * t.compensator_stderr)
    })?;
    let past_settings = McSettings {
        paths: cfg.mc.past_paths,
        ..settings.clone()
    };
    let past = OnceCell::new();
    let past = || {
        past.get_or_init(|| past_check(&model, &grid, &f, &past_settings))
            .clone()
    };
    s.run("pastform.two_formula", || {
        if let Some(o) = skip(&samplable) {
            return Ok(o);
        }
        let p = past()?;
        measured(p.max_two_formula_gap, tol.two_formula)
    })?;
    s.run("pastform.pathwise_bound", || {
        if let Some(o) = skip(&samplable) {
            return Ok(o);
        }
        let p = past()?;
        measured_with(
            p.max_log_excess.max(0.0),
            tol.bound.ln_1p(),
            format!("ln C = {:.6e}", p.bound.ln_c),
        )
    })?;
    s.run("pastform.unit_kernel_reduction", || {
        if let Some(o) = skip(&samplable) {
            return Ok(o);
        }
        let m = unit_kernel_variant(&model, &grid)?;
        let p = past_check(&m, &grid, &f, &past_settings)?;
        let classical = p.classical_gap.unwrap_or(f64::INFINITY);
        measured(
            classical.max(p.max_two_formula_gap),
            tol.classical_reduction,
        )
    })?;

    if cfg.verify.refinement {
        let rows = OnceCell::new();
        let get = || rows.get_or_init(|| refinement_study(cfg)).clone();
        s.run("refinement.mc_slack", || {
            if let Some(o) = skip(&samplable) {
                return Ok(o);
            }
            let r = get()?;
            measured(
                r.iter()
                    .map(|x| x.transform_excess.max(x.flatness_excess))
                    .fold(f64::NEG_INFINITY, f64::max),
                0.0,
            )
        })?;
        s.run("refinement.two_formula", || {
            if let Some(o) = skip(&samplable) {
                return Ok(o);
            }
            let r = get()?;
            let means: Vec<f64> = r.iter().map(|x| x.two_formula_mean).collect();
            let max = r
                .iter()
                .map(|x| x.two_formula_max / tol.two_formula)
                .fold(0.0, f64::max);
            measured_with(
                worst_ratio(&means).max(max),
                1.0,
                format!("mean gaps {}", sci(&means)),
            )
        })?;
        s.run("refinement.clipped_fraction", || {
            if let Some(o) = skip(&samplable) {
                return Ok(o);
            }
            let r = get()?;
            let v: Vec<f64> = r.iter().map(|x| x.clipped_fraction).collect();
            measured_with(worst_ratio(&v), 1.0, format!("fractions {}", sci(&v)))
        })?;
    }
    Ok(s.reports)
}
