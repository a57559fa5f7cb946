use crate::conv::CellMoments;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{ModelSpec, TestFunction};
use crate::scalar::Scalar;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `F(t, u) = f(t) + bu + (c/2)u² + J(u)`, `ℜu <= 0`.
pub fn eval_f(model: &ModelSpec, f: Complex64, u: Complex64) -> Result<Complex64> {
    if !(u.re <= 0.0) {
        return Err(Error::Domain(format!(
            "F is evaluated on Re u <= 0 only, got {u}"
        )));
    }
    Ok(gen_complex(model, f, u))
}

/// `F̄(t, x) = ℜf(t) + bx + (c/2)x² + J(x)`, `x <= 0`.
pub fn eval_f_bar(model: &ModelSpec, re_f: f64, u: f64) -> Result<f64> {
    if !(u <= 0.0) || !(re_f <= 0.0) {
        return Err(Error::Domain(format!(
            "F-bar needs u <= 0 and Re f <= 0, got u = {u}, Re f = {re_f}"
        )));
    }
    Ok(gen_real(model, re_f, u))
}

// Both generators use the same operation order so that real inputs give
// bitwise-identical results in the two systems.
pub(crate) fn gen_complex(model: &ModelSpec, f: Complex64, u: Complex64) -> Complex64 {
    f + u * model.b + u * u * (0.5 * model.c) + model.jumps.transform_unchecked(u)
}

pub(crate) fn gen_real(model: &ModelSpec, re_f: f64, u: f64) -> f64 {
    re_f + u * model.b + u * u * (0.5 * model.c) + model.jumps.transform_real_unchecked(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Corrector stops once the update is below `tol·max(1, |ψ|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation used once an update fails to contract.
    pub damping: f64,
    /// `ℜψ` above this is reported as an invariant violation.
    pub positivity_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            max_iter: 50,
            damping: 0.5,
            positivity_eps: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverDiagnostics {
    pub max_iterations: usize,
    pub total_iterations: usize,
    /// Largest final corrector update over all nodes.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraSolution<S> {
    pub psi: Vec<S>,
    /// `F(t_i, ψ_i)`.
    pub f_psi: Vec<S>,
    pub diagnostics: SolverDiagnostics,
}

/// Product-integration solver for `ψ = K∗F(·, ψ)` with `F(t_i, ·) = gen(i, ·)`.
///
/// Predictor: rectangle rule on the already-known `F` values. Corrector:
/// fixed point on the implicit node value of the product trapezoid rule.
pub fn solve_volterra<S: Scalar>(
    cells: &CellMoments,
    gen: impl Fn(usize, S) -> S,
    cfg: &SolverConfig,
) -> Result<VolterraSolution<S>> {
    let n = cells.len();
    let mut psi = vec![S::zero(); n + 1];
    let mut fv = vec![S::zero(); n + 1];
    let mut diag = SolverDiagnostics::default();
    fv[0] = gen(0, S::zero());
    let d = cells.diagonal();
    for i in 1..=n {
        let mut x = S::zero();
        for (fj, m) in fv[..i].iter().zip(cells.mass[..i].iter().rev()) {
            x += *fj * *m;
        }
        let h = cells.history(&fv, i);
        let mut last = f64::INFINITY;
        let mut damped = false;
        let mut iters = 0;
        loop {
            iters += 1;
            let target = h + gen(i, x) * d;
            let step = target - x;
            let size = step.norm();
            if size > last {
                damped = true;
            }
            x = if damped {
                x + step * cfg.damping
            } else {
                target
            };
            if !size.is_finite() {
                return Err(Error::Solver {
                    message: format!("corrector diverged at node {i}"),
                    residual: size,
                });
            }
            if size <= cfg.tol * x.norm().max(1.0) {
                diag.max_residual = diag.max_residual.max(size);
                break;
            }
            if iters >= cfg.max_iter {
                return Err(Error::Solver {
                    message: format!(
                        "corrector did not converge at node {i} within {} iterations",
                        cfg.max_iter
                    ),
                    residual: size,
                });
            }
            last = size;
        }
        diag.max_iterations = diag.max_iterations.max(iters);
        diag.total_iterations += iters;
        if x.re() > cfg.positivity_eps {
            return Err(Error::Invariant(format!(
                "Re psi = {:e} > 0 at node {i}: solution left the closed left half-plane (grid too coarse or hypotheses violated)",
                x.re()
            )));
        }
        psi[i] = x;
        fv[i] = gen(i, x);
    }
    Ok(VolterraSolution {
        psi,
        f_psi: fv,
        diagnostics: diag,
    })
}

/// Complex solution `ψ` of the Riccati–Volterra equation.
pub fn solve_psi(
    model: &ModelSpec,
    f: &TestFunction,
    grid: &Grid,
    cfg: &SolverConfig,
) -> Result<VolterraSolution<Complex64>> {
    f.validate()?;
    let fs = f.samples(grid);
    let cells = CellMoments::from_measure(&model.kernel, grid);
    solve_volterra(&cells, |i, u| gen_complex(model, fs[i], u), cfg)
}

/// Real solution `ψ̄` of the equation with `F̄`.
pub fn solve_psi_bar(
    model: &ModelSpec,
    re_f: &[f64],
    grid: &Grid,
    cfg: &SolverConfig,
) -> Result<VolterraSolution<f64>> {
    if re_f.len() != grid.len() {
        return Err(Error::Contract("Re f samples do not match the grid".into()));
    }
    if re_f.iter().any(|v| !(*v <= 0.0)) {
        return Err(Error::Domain("Re f must be nonpositive".into()));
    }
    let cells = CellMoments::from_measure(&model.kernel, grid);
    solve_volterra(&cells, |i, u| gen_real(model, re_f[i], u), cfg)
}

/// `φ(t_i) = ∫_0^{t_i} (b₀ψ + ½A₀ψ² + J₀(ψ))` by the trapezoid rule.
pub fn compute_phi<S: Scalar>(
    model: &ModelSpec,
    psi: &[S],
    grid: &Grid,
    j0: impl Fn(S) -> S,
) -> Vec<S> {
    let d = grid.step();
    let mut out = vec![S::zero(); psi.len()];
    if model.b0 == 0.0 && model.a0 == 0.0 && model.jumps0.is_zero() {
        return out;
    }
    let integrand: Vec<S> = psi
        .iter()
        .map(|&p| p * model.b0 + p * p * (0.5 * model.a0) + j0(p))
        .collect();
    for i in 1..psi.len() {
        out[i] = out[i - 1] + (integrand[i - 1] + integrand[i]) * (0.5 * d);
    }
    out
}

pub fn phi_complex(model: &ModelSpec, psi: &[Complex64], grid: &Grid) -> Vec<Complex64> {
    compute_phi(model, psi, grid, |u| model.jumps0.transform_unchecked(u))
}

pub fn phi_real(model: &ModelSpec, psi: &[f64], grid: &Grid) -> Vec<f64> {
    compute_phi(model, psi, grid, |u| {
        model.jumps0.transform_real_unchecked(u)
    })
}

/// `φ(T) + ∫_0^T F(T - s, ψ(T - s)) g₀(s) ds` (trapezoid) from node samples.
pub fn v0_from_samples<S: Scalar>(phi_t: S, f_psi: &[S], g0: &[f64], grid: &Grid) -> S {
    let n = grid.steps();
    let tw = grid.trapezoid_weights(0, n);
    let mut acc = phi_t;
    for k in 0..=n {
        acc += f_psi[n - k] * (tw[k] * g0[k]);
    }
    acc
}

/// Everything the transform needs on one grid: `ψ`, `ψ̄`, `φ`, `φ̄` and cached generator values.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub grid: Grid,
    pub f: Vec<Complex64>,
    pub psi: Vec<Complex64>,
    pub psi_bar: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub phi_bar: Vec<f64>,
    pub f_psi: Vec<Complex64>,
    pub f_bar_psi_bar: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
    pub diagnostics_bar: SolverDiagnostics,
}

impl RiccatiSolution {
    pub fn solve(
        model: &ModelSpec,
        f: &TestFunction,
        grid: &Grid,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        let c = solve_psi(model, f, grid, cfg)?;
        let fs = f.samples(grid);
        let re_f: Vec<f64> = fs.iter().map(|v| v.re).collect();
        let r = solve_psi_bar(model, &re_f, grid, cfg)?;
        Ok(RiccatiSolution {
            grid: *grid,
            phi: phi_complex(model, &c.psi, grid),
            phi_bar: phi_real(model, &r.psi, grid),
            f: fs,
            psi: c.psi,
            psi_bar: r.psi,
            f_psi: c.f_psi,
            f_bar_psi_bar: r.f_psi,
            diagnostics: c.diagnostics,
            diagnostics_bar: r.diagnostics,
        })
    }

    /// `V₀^T`.
    pub fn v0(&self, g0: &[f64]) -> Complex64 {
        v0_from_samples(self.phi[self.grid.steps()], &self.f_psi, g0, &self.grid)
    }

    /// `V̄₀^T`.
    pub fn v0_bar(&self, g0: &[f64]) -> f64 {
        v0_from_samples(
            self.phi_bar[self.grid.steps()],
            &self.f_bar_psi_bar,
            g0,
            &self.grid,
        )
    }
}

fn is_unit_kernel(model: &ModelSpec) -> bool {
    use crate::kernel::Kernel::*;
    match model.kernel {
        Constant { k0 } => k0 == 1.0,
        Fractional { alpha } => alpha == 1.0,
        Exponential { k0, rate } => k0 == 1.0 && rate == 0.0,
        Gamma { alpha, rate } => alpha == 1.0 && rate == 0.0,
        Tabulated(_) => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// `ψ` at the grid nodes.
    pub psi: Vec<Complex64>,
    pub phi: Vec<Complex64>,
    pub v0: Complex64,
}

/// Classical Riccati ODE `ψ' = F(ψ)`, `φ' = b₀ψ + ½A₀ψ² + J₀(ψ)` by RK4 at step `Δ/4`.
/// Only valid for `K ≡ 1` and constant `f`.
pub fn classical_riccati_oracle(
    model: &ModelSpec,
    f: &TestFunction,
    grid: &Grid,
) -> Result<OracleSolution> {
    if !is_unit_kernel(model) {
        return Err(Error::Domain(
            "classical Riccati oracle requires K ≡ 1".into(),
        ));
    }
    let w = f
        .constant_value()
        .ok_or_else(|| Error::Domain("classical Riccati oracle requires constant f".into()))?;
    f.validate()?;
    let sub = 4;
    let fine = Grid::new(grid.horizon(), grid.steps() * sub)?;
    let h = fine.step();
    let rhs = |(p, _): (Complex64, Complex64)| {
        (
            gen_complex(model, w, p),
            p * model.b0 + p * p * (0.5 * model.a0) + model.jumps0.transform_unchecked(p),
        )
    };
    let add = |a: (Complex64, Complex64), b: (Complex64, Complex64), s: f64| {
        (a.0 + b.0 * s, a.1 + b.1 * s)
    };
    let mut state = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let mut path = vec![state];
    for _ in 0..fine.steps() {
        let k1 = rhs(state);
        let k2 = rhs(add(state, k1, 0.5 * h));
        let k3 = rhs(add(state, k2, 0.5 * h));
        let k4 = rhs(add(state, k3, h));
        state = (
            state.0 + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0),
            state.1 + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0),
        );
        path.push(state);
    }
    // V₀ = φ(T) + ∫_0^T ψ'(T - s) g₀(s) ds, Simpson on the fine grid.
    let g0 = model.g0_samples(&fine);
    let n = fine.steps();
    let mut integral = Complex64::new(0.0, 0.0);
    for k in 0..=n {
        let wk = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral += gen_complex(model, w, path[n - k].0) * (wk * g0[k] * h / 3.0);
    }
    Ok(OracleSolution {
        psi: (0..grid.len()).map(|i| path[i * sub].0).collect(),
        phi: (0..grid.len()).map(|i| path[i * sub].1).collect(),
        v0: path[n].1 + integral,
    })
}

/// Envelopes `|ℑψ| <= u` and `l <= ℜψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeBounds {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

/// Solves `u = K∗[|ℑf| + bu]` and `l = K∗[ℜf + bl - (c/2 + m₂/2)u²]`
/// with the same product trapezoid rule as the Riccati solver (both linear, so
/// the implicit node value is explicit).
pub fn envelope_bounds(model: &ModelSpec, f: &TestFunction, grid: &Grid) -> Result<EnvelopeBounds> {
    f.validate()?;
    let fs = f.samples(grid);
    let cells = CellMoments::from_measure(&model.kernel, grid);
    let d = cells.diagonal();
    let n = grid.len();
    let b = model.b;
    let q = 0.5 * model.c + 0.5 * model.jumps.second_moment();
    let mut u = vec![0.0; n];
    let mut qu = vec![0.0; n];
    qu[0] = fs[0].im.abs();
    for i in 1..n {
        let h = cells.history(&qu, i);
        u[i] = (h + d * fs[i].im.abs()) / (1.0 - d * b);
        qu[i] = fs[i].im.abs() + b * u[i];
    }
    let mut l = vec![0.0; n];
    let mut ql = vec![0.0; n];
    ql[0] = fs[0].re - q * u[0] * u[0];
    for i in 1..n {
        let h = cells.history(&ql, i);
        let src = fs[i].re - q * u[i] * u[i];
        l[i] = (h + d * src) / (1.0 - d * b);
        ql[i] = src + b * l[i];
    }
    Ok(EnvelopeBounds { upper: u, lower: l })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    /// `max_i max(l_i - ℜψ_i, ℜψ_i, |ℑψ_i| - u_i, 0)`.
    pub max_violation: f64,
    pub worst_node: usize,
}

pub fn envelope_check(sol: &RiccatiSolution, env: &EnvelopeBounds) -> EnvelopeReport {
    let mut rep = EnvelopeReport {
        max_violation: 0.0,
        worst_node: 0,
    };
    for (i, p) in sol.psi.iter().enumerate() {
        let v = (env.lower[i] - p.re)
            .max(p.re)
            .max(p.im.abs() - env.upper[i]);
        if v > rep.max_violation {
            rep = EnvelopeReport {
                max_violation: v,
                worst_node: i,
            };
        }
    }
    rep
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `max_i (ℜψ_i - ψ̄_i)^+`.
    pub max_gap_violation: f64,
    pub worst_node: usize,
    /// `max (ℜF(t,u) - F̄(t,ℜu))^+` over the random spot checks.
    pub generator_violation: f64,
    pub generator_samples: usize,
}

impl ComparisonReport {
    pub fn passes(&self, slack: f64) -> bool {
        self.max_gap_violation <= slack && self.generator_violation <= slack
    }
}

/// `ℜψ <= ψ̄` at every node plus `ℜF(t,u) <= F̄(t,ℜu)` at `samples` random points of `ℂ₋`.
pub fn comparison_check(
    model: &ModelSpec,
    sol: &RiccatiSolution,
    samples: usize,
    seed: u64,
) -> ComparisonReport {
    let mut rep = ComparisonReport {
        max_gap_violation: 0.0,
        worst_node: 0,
        generator_violation: 0.0,
        generator_samples: samples,
    };
    for (i, (p, pb)) in sol.psi.iter().zip(&sol.psi_bar).enumerate() {
        let v = p.re - pb;
        if v > rep.max_gap_violation {
            rep.max_gap_violation = v;
            rep.worst_node = i;
        }
    }
    let scale = sol.psi.iter().fold(1.0f64, |m, p| m.max(p.norm())) * 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let i = rng.random_range(0..sol.f.len());
        let u = Complex64::new(
            -scale * rng.random::<f64>(),
            scale * (2.0 * rng.random::<f64>() - 1.0),
        );
        let lhs = gen_complex(model, sol.f[i], u).re;
        let rhs = gen_real(model, sol.f[i].re, u.re);
        rep.generator_violation = rep.generator_violation.max(lhs - rhs);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jumps::LevyMeasure;
    use crate::kernel::Kernel;
    use crate::model::InputCurve;

    fn unit_model(b: f64, c: f64, jumps: LevyMeasure) -> ModelSpec {
        ModelSpec::new(
            Kernel::constant(1.0).unwrap(),
            b,
            c,
            jumps,
            InputCurve::constant(0.3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn generator_examples() {
        let m = unit_model(-1.0, 2.0, LevyMeasure::none());
        assert_eq!(
            eval_f(&m, Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)).unwrap(),
            Complex64::new(2.0, 0.0)
        );
        assert_eq!(
            eval_f(&m, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        let m2 = unit_model(0.0, 2.0, LevyMeasure::none());
        assert_eq!(eval_f_bar(&m2, -1.0, -1.0).unwrap(), 0.0);
        let m3 = unit_model(0.0, 0.0, LevyMeasure::point_mass(1.0, 1.0).unwrap());
        let v = eval_f(&m3, Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0)).unwrap();
        assert!((v - Complex64::new((-1.0f64).exp(), 1.0)).norm() < 1e-15);
        assert!(eval_f(&m3, Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn zero_f_gives_zero_psi() {
        let m = unit_model(-0.3, 0.09, LevyMeasure::exponential(0.5, 10.0).unwrap());
        let g = Grid::new(1.0, 50).unwrap();
        let s = RiccatiSolution::solve(&m, &TestFunction::zero(), &g, &SolverConfig::default())
            .unwrap();
        assert!(s.psi.iter().all(|p| *p == Complex64::new(0.0, 0.0)));
        assert!(s.psi_bar.iter().all(|p| *p == 0.0));
        assert_eq!(s.v0(&m.g0_samples(&g)), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn real_f_gives_identical_systems() {
        let m = ModelSpec::new(
            Kernel::fractional(0.7).unwrap(),
            -0.4,
            0.3,
            LevyMeasure::exponential(1.0, 5.0).unwrap(),
            InputCurve::constant(0.2).unwrap(),
        )
        .unwrap();
        let g = Grid::new(1.0, 64).unwrap();
        let s = RiccatiSolution::solve(
            &m,
            &TestFunction::constant(Complex64::new(-0.7, 0.0)).unwrap(),
            &g,
            &SolverConfig::default(),
        )
        .unwrap();
        for (p, pb) in s.psi.iter().zip(&s.psi_bar) {
            assert_eq!(p.re, *pb);
            assert_eq!(p.im, 0.0);
        }
    }

    #[test]
    fn oracle_requires_unit_kernel() {
        let m = ModelSpec::new(
            Kernel::fractional(0.7).unwrap(),
            0.0,
            0.0,
            LevyMeasure::none(),
            InputCurve::constant(0.2).unwrap(),
        )
        .unwrap();
        let g = Grid::new(1.0, 10).unwrap();
        assert!(classical_riccati_oracle(&m, &TestFunction::zero(), &g).is_err());
    }

    #[test]
    fn phi_with_constant_drift() {
        let m = unit_model(0.0, 0.0, LevyMeasure::none())
            .with_constant_terms(1.0, 0.0, LevyMeasure::none())
            .unwrap();
        let g = Grid::new(1.0, 100).unwrap();
        let psi: Vec<f64> = g.nodes().iter().map(|t| -t).collect();
        let phi = phi_real(&m, &psi, &g);
        for (i, p) in phi.iter().enumerate() {
            let t = g.node(i);
            assert!((p + 0.5 * t * t).abs() < 1e-10);
        }
    }
}
