use crate::conv::{pair_convolve, CellMoments};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::{CellMeasure, Kernel, Shifted};
use crate::model::ModelSpec;
use crate::resolvent::FirstKindResolvent;
use crate::riccati::RiccatiSolution;
use crate::scalar::Scalar;
use num_complex::Complex64;

/// `Π̃_h` sampled at `r_k = kΔ`, together with the pieces the past formula needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PiFunction<S> {
    pub lag_steps: usize,
    pub values: Vec<S>,
    /// `Π̃_h(r_{k+1}) - Π̃_h(r_k)`.
    pub increments: Vec<S>,
    /// Where inside cell `k` the increment sits (`0` = left end): the normalised
    /// first moment of `L` on the cell, so the singular start of `ℓ` is respected.
    pub right_fraction: Vec<f64>,
    /// `ψ(h) L({0})`.
    pub atom_coefficient: S,
    /// `∫_0^h F(s, ψ(s)) ds` (trapezoid).
    pub generator_integral: S,
}

/// `Π̃_h(r) = ∫_0^h F(s,ψ(s)) ds - ∫_{(0,h]} ψ(h - s) L(r + ds)` for `r = 0..=r_steps` cells,
/// with `h = lag_steps·Δ`; `ψ` is linear between nodes and `L` integrated exactly per cell.
pub fn compute_pi_tilde<S: Scalar>(
    psi: &[S],
    f_psi: &[S],
    resolvent: &FirstKindResolvent,
    cells: &CellMoments,
    lag_steps: usize,
    r_steps: usize,
) -> Result<PiFunction<S>> {
    let n = cells.len();
    if lag_steps + r_steps > n || lag_steps == 0 {
        return Err(Error::Contract(format!(
            "lag {lag_steps} + range {r_steps} steps exceed the resolvent grid ({n} steps)"
        )));
    }
    let d = resolvent.grid().step();
    let mut gen_int = S::zero();
    for q in 0..lag_steps {
        gen_int += (f_psi[q] + f_psi[q + 1]) * (0.5 * d);
    }
    let values: Vec<S> = (0..=r_steps)
        .map(|k| {
            let mut acc = S::zero();
            for q in 0..lag_steps {
                let (m0, m1) = (cells.mass[k + q], cells.moment[k + q]);
                acc += psi[lag_steps - q] * (m0 - m1) + psi[lag_steps - q - 1] * m1;
            }
            gen_int - acc
        })
        .collect();
    let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
    let right_fraction = (0..r_steps)
        .map(|k| {
            if cells.mass[k] > 0.0 {
                cells.moment[k] / cells.mass[k]
            } else {
                0.5
            }
        })
        .collect();
    Ok(PiFunction {
        lag_steps,
        values,
        increments,
        right_fraction,
        atom_coefficient: psi[lag_steps] * resolvent.atom(),
        generator_integral: gen_int,
    })
}

/// `Π̃_h(r)` straight from its definition `∫_0^h F(s,ψ(s)) (Δ_{h-s}K ∗ L)(r) ds`:
/// trapezoid over `s`, and each inner convolution by [`pair_convolve`].
/// Independent of [`compute_pi_tilde`]; used to cross-check it.
pub fn pi_tilde_by_definition(
    f_psi: &[Complex64],
    kernel: &Kernel,
    resolvent: &FirstKindResolvent,
    grid: &Grid,
    lag_steps: usize,
    r: f64,
    pieces: usize,
) -> Complex64 {
    let d = grid.step();
    let h = lag_steps as f64 * d;
    let mut acc = Complex64::new(0.0, 0.0);
    for (q, fq) in f_psi.iter().enumerate().take(lag_steps + 1) {
        let w = if q == 0 || q == lag_steps { 0.5 * d } else { d };
        let a = h - grid.node(q);
        let inner = if r == 0.0 {
            if a > 0.0 || !kernel.singular_at_zero() {
                resolvent.atom() * kernel.density(a)
            } else {
                0.0
            }
        } else {
            let shifted = Shifted {
                inner: kernel,
                shift: a.max(0.0),
            };
            pair_convolve(&shifted, resolvent, r, pieces)
        };
        acc += fq * (w * inner);
    }
    acc
}

/// Precomputed affine-in-the-past functional for one checkpoint `t_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PastFormula<S> {
    pub checkpoint: usize,
    pub pi: PiFunction<S>,
    /// `φ(T - t) + ∫_0^{T-t} F(s,ψ(s)) g₀(T - s) ds`.
    pub constant: S,
    /// Trapezoid weights times `f(T - t_j)`, `j = 0..=m`.
    pub f_weights: Vec<S>,
}

impl<S: Scalar> PastFormula<S> {
    /// `psi`, `f_psi`, `phi`, `f` are node samples of one system (complex or real).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        psi: &[S],
        f_psi: &[S],
        phi: &[S],
        f: &[S],
        g0: &[f64],
        resolvent: &FirstKindResolvent,
        cells: &CellMoments,
        grid: &Grid,
        checkpoint: usize,
    ) -> Result<Self> {
        let n = grid.steps();
        if checkpoint == 0 || checkpoint >= n {
            return Err(Error::Contract(format!(
                "checkpoint index {checkpoint} must lie strictly inside (0, {n})"
            )));
        }
        let lag = n - checkpoint;
        let pi = compute_pi_tilde(psi, f_psi, resolvent, cells, lag, checkpoint)?;
        let tw = grid.trapezoid_weights(0, lag);
        let mut constant = phi[lag];
        for q in 0..=lag {
            constant += f_psi[q] * (tw[q] * g0[n - q]);
        }
        let tw = grid.trapezoid_weights(0, checkpoint);
        let f_weights = (0..=checkpoint).map(|j| f[n - j] * tw[j]).collect();
        Ok(PastFormula {
            checkpoint,
            pi,
            constant,
            f_weights,
        })
    }

    /// `V_t^T` from the path history `x[0..=m]` (raw, unclipped values).
    pub fn evaluate(&self, x: &[f64], g0: &[f64]) -> S {
        let m = self.checkpoint;
        let mut acc = self.constant;
        for (w, xj) in self.f_weights.iter().zip(x) {
            acc += *w * *xj;
        }
        let y = |j: usize| x[j] - g0[j];
        acc += self.pi.atom_coefficient * y(m);
        for k in 0..m {
            let th = self.pi.right_fraction[k];
            acc += self.pi.increments[k] * ((1.0 - th) * y(m - k) + th * y(m - k - 1));
        }
        acc
    }
}

/// Both systems' past formulas for a set of checkpoints.
#[derive(Debug, Clone)]
pub struct PastFormulas {
    pub complex: Vec<PastFormula<Complex64>>,
    pub real: Vec<PastFormula<f64>>,
}

impl PastFormulas {
    pub fn new(
        sol: &RiccatiSolution,
        g0: &[f64],
        resolvent: &FirstKindResolvent,
        checkpoints: &[usize],
    ) -> Result<Self> {
        let grid = &sol.grid;
        let cells = resolvent.cells();
        let re_f: Vec<f64> = sol.f.iter().map(|v| v.re).collect();
        let mut complex = Vec::new();
        let mut real = Vec::new();
        for &m in checkpoints {
            complex.push(PastFormula::new(
                &sol.psi, &sol.f_psi, &sol.phi, &sol.f, g0, resolvent, &cells, grid, m,
            )?);
            real.push(PastFormula::new(
                &sol.psi_bar,
                &sol.f_bar_psi_bar,
                &sol.phi_bar,
                &re_f,
                g0,
                resolvent,
                &cells,
                grid,
                m,
            )?);
        }
        Ok(PastFormulas { complex, real })
    }
}

/// `max_k (G(r_k) - G(r_{k+1}))^+` over `k >= 1` for `G = Π̃̄_h - ℜΠ̃_h`: zero when the gap is nondecreasing on `(0, t]`.
pub fn gap_monotonicity_violation(pi: &PiFunction<Complex64>, pi_bar: &PiFunction<f64>) -> f64 {
    let gap: Vec<f64> = pi
        .values
        .iter()
        .zip(&pi_bar.values)
        .map(|(p, pb)| pb - p.re)
        .collect();
    gap.windows(2).skip(1).fold(0.0, |m, w| m.max(w[0] - w[1]))
}

/// The constants of the pathwise bound `|exp V| <= C exp V̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstant {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c: f64,
    /// `ln C`, kept separately since `C` itself may overflow.
    pub ln_c: f64,
}

pub fn bound_constant(
    sol: &RiccatiSolution,
    g0: &[f64],
    resolvent: &FirstKindResolvent,
) -> BoundConstant {
    let grid = &sol.grid;
    let n = grid.steps();
    let tw = grid.trapezoid_weights(0, n);
    let l2 = |v: &dyn Fn(usize) -> f64| (0..=n).map(|i| tw[i] * v(i) * v(i)).sum::<f64>().sqrt();
    let g0_norm = l2(&|i| g0[i]);
    let gen_gap = l2(&|i| sol.f_psi[i].re - sol.f_bar_psi_bar[i]);
    let c1 = g0_norm * gen_gap;
    let gap = |i: usize| sol.psi_bar[i] - sol.psi[i].re;
    let c2 = (0..=n).map(|i| gap(n - i) * g0[i]).fold(0.0, f64::max);
    let max_gap = (0..=n).map(|i| gap(i).abs()).fold(0.0, f64::max);
    let c3 = 2.0 * max_gap * resolvent.total_mass(grid.horizon());
    let max_g0 = g0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ln_c = c1 + resolvent.atom() * c2 + c3 * max_g0;
    BoundConstant {
        c1,
        c2,
        c3,
        c: ln_c.exp(),
        ln_c,
    }
}

/// `ℜV - V̄ - ln C`; the bound holds iff this is at most `ln(1 + slack)`.
pub fn bound_log_excess(v: Complex64, v_bar: f64, bound: &BoundConstant) -> f64 {
    v.re - v_bar - bound.ln_c
}

/// The past formula for a constant kernel: `φ(T-t) + ∫_0^t f(T-s)X_s ds + ψ(T-t)X_t`.
pub fn classical_past(sol: &RiccatiSolution, x: &[f64], checkpoint: usize) -> Complex64 {
    let grid = &sol.grid;
    let n = grid.steps();
    let lag = n - checkpoint;
    let tw = grid.trapezoid_weights(0, checkpoint);
    let mut acc = sol.phi[lag] + sol.psi[lag] * x[checkpoint];
    for j in 0..=checkpoint {
        acc += sol.f[n - j] * (tw[j] * x[j]);
    }
    acc
}

/// Convenience: resolvent and past formulas for a model on the solution grid.
pub fn past_formulas(
    model: &ModelSpec,
    sol: &RiccatiSolution,
    checkpoints: &[usize],
) -> Result<(FirstKindResolvent, PastFormulas)> {
    let l = FirstKindResolvent::new(&model.kernel, &sol.grid)?;
    let g0 = model.g0_samples(&sol.grid);
    let p = PastFormulas::new(sol, &g0, &l, checkpoints)?;
    Ok((l, p))
}
