use crate::conv::CellMoments;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jumps::LevyMeasure;
use crate::model::{ModelSpec, TestFunction};
use crate::pastform::{
    bound_constant, classical_past, gap_monotonicity_violation, BoundConstant, PastFormulas,
};
use crate::resolvent::{FirstKindResolvent, SecondKindResolvent};
use crate::riccati::{RiccatiSolution, SolverConfig};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Paths are simulated and reduced in blocks of this size; the block partial
/// sums are combined in block order, so results do not depend on scheduling.
pub const BLOCK: usize = 256;

/// Everything needed to step one path of `X = g₀ + K∗dZ`.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    grid: Grid,
    g0: Vec<f64>,
    /// `W_k = ∫_{kΔ}^{(k+1)Δ} K / Δ`, stored reversed for contiguous dot products.
    weights_rev: Vec<f64>,
    weights: Vec<f64>,
    b: f64,
    b0: f64,
    c: f64,
    jumps: LevyMeasure,
    compensator_rate: f64,
}

/// One simulated path. `x` holds the raw (unclipped) values; coefficients use `x⁺`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub x: Vec<f64>,
    pub dz_drift: Vec<f64>,
    pub dz_diff: Vec<f64>,
    pub dz_jump: Vec<f64>,
}

impl Path {
    pub fn new(n: usize) -> Self {
        Path {
            x: vec![0.0; n + 1],
            dz_drift: vec![0.0; n],
            dz_diff: vec![0.0; n],
            dz_jump: vec![0.0; n],
        }
    }

    pub fn dz(&self, j: usize) -> f64 {
        self.dz_drift[j] + self.dz_diff[j] + self.dz_jump[j]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

impl SimulationPlan {
    pub fn new(model: &ModelSpec, grid: &Grid) -> Result<Self> {
        model.validate()?;
        if !model.jumps.is_samplable() {
            return Err(Error::Capability(
                "simulation needs a finite-activity, samplable jump measure".into(),
            ));
        }
        if model.a0 != 0.0 || !model.jumps0.is_zero() {
            return Err(Error::Capability(
                "simulation supports the constant drift b0 only (A0 and nu0 must vanish)".into(),
            ));
        }
        let d = grid.step();
        let weights: Vec<f64> = model
            .kernel
            .cell_weights(grid)
            .iter()
            .map(|w| w / d)
            .collect();
        let mut weights_rev = weights.clone();
        weights_rev.reverse();
        Ok(SimulationPlan {
            grid: *grid,
            g0: model.g0_samples(grid),
            weights_rev,
            weights,
            b: model.b,
            b0: model.b0,
            c: model.c,
            compensator_rate: model.jumps.first_moment(),
            jumps: model.jumps.clone(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn g0(&self) -> &[f64] {
        &self.g0
    }

    /// `W_k`, the kernel weight applied to `ΔZ_j` at lag `k = i - 1 - j`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Path `index` of the ensemble with master `seed`. Per step the draws are,
    /// in order: one standard normal, then the Poisson jump count, then the sizes.
    pub fn simulate(&self, seed: u64, index: u64, path: &mut Path) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let n = self.grid.steps();
        let d = self.grid.step();
        let sd = d.sqrt();
        path.x[0] = self.g0[0];
        let mut dz = vec![0.0; n];
        for j in 0..n {
            let xp = path.x[j].max(0.0);
            let xi: f64 = StandardNormal.sample(&mut rng);
            let jump = self.jumps.sample_jump_sum(xp * d, &mut rng)?;
            path.dz_drift[j] = (self.b0 + self.b * xp) * d - xp * d * self.compensator_rate;
            path.dz_diff[j] = (self.c * xp).sqrt() * sd * xi;
            path.dz_jump[j] = jump;
            dz[j] = path.dz_drift[j] + path.dz_diff[j] + path.dz_jump[j];
            let i = j + 1;
            path.x[i] = self.g0[i] + dot(&self.weights_rev[n - i..], &dz[..i]);
        }
        Ok(())
    }

    /// `g_t(t_s) = g₀(t_s) + Σ_{j < t} W_{s-1-j} ΔZ_j`, `s > t` (node indices).
    pub fn adjusted_forward(&self, path: &Path, t: usize, s: usize) -> Result<f64> {
        if s <= t || s > self.grid.steps() {
            return Err(Error::Contract(format!(
                "adjusted forward needs t < s <= N, got t = {t}, s = {s}"
            )));
        }
        Ok(self.g0[s]
            + (0..t)
                .map(|j| self.weights[s - 1 - j] * path.dz(j))
                .sum::<f64>())
    }
}

/// Stored ensemble (for CSV export and small runs; the estimators stream instead).
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub grid: Grid,
    pub seed: u64,
    pub paths: Vec<Path>,
}

impl PathEnsemble {
    /// `max(X, 0)`, the stored state.
    pub fn clipped(&self, p: usize) -> Vec<f64> {
        self.paths[p].x.iter().map(|v| v.max(0.0)).collect()
    }

    pub fn clipped_fraction(&self) -> f64 {
        let neg: usize = self
            .paths
            .iter()
            .map(|p| p.x.iter().filter(|v| **v < 0.0).count())
            .sum();
        neg as f64 / (self.paths.len() * self.grid.len()) as f64
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Io(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Simulates `m` paths; bitwise reproducible for any worker count.
pub fn simulate_paths(
    model: &ModelSpec,
    grid: &Grid,
    m: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<PathEnsemble> {
    let plan = SimulationPlan::new(model, grid)?;
    let paths = with_workers(workers, || {
        (0..m)
            .into_par_iter()
            .map(|i| {
                let mut p = Path::new(grid.steps());
                plan.simulate(seed, i as u64, &mut p).map(|_| p)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(PathEnsemble {
        grid: *grid,
        seed,
        paths,
    })
}

/// `E[X_{t_i}] = (g₀ - R_B∗g₀ + E_B∗b₀)(t_i)` at every node.
pub fn forward_mean_curve(model: &ModelSpec, grid: &Grid) -> Result<Vec<f64>> {
    let g0 = model.g0_samples(grid);
    let r = SecondKindResolvent::new(&model.kernel, model.b, grid)?;
    let rg = r.resolvent_convolve(&g0)?;
    let e1 = r.canonical_convolve(&vec![model.b0; grid.len()])?;
    Ok((0..grid.len()).map(|i| g0[i] - rg[i] + e1[i]).collect())
}

/// `E[X]` by solving the linear Volterra equation `m = g₀ + K∗(b₀ + b m)` directly
/// (product trapezoid rule), an independent route to [`forward_mean_curve`].
pub fn forward_mean_direct(model: &ModelSpec, grid: &Grid) -> Vec<f64> {
    let cells = CellMoments::from_measure(&model.kernel, grid);
    let d = cells.diagonal();
    let g0 = model.g0_samples(grid);
    let (b, b0) = (model.b, model.b0);
    let mut m = vec![0.0; grid.len()];
    let mut q = vec![0.0; grid.len()];
    m[0] = g0[0];
    q[0] = b0 + b * m[0];
    for i in 1..grid.len() {
        m[i] = (g0[i] + cells.history(&q, i) + d * b0) / (1.0 - d * b);
        q[i] = b0 + b * m[i];
    }
    m
}

/// `E[X_T]`.
pub fn forward_mean(model: &ModelSpec, grid: &Grid) -> Result<f64> {
    Ok(*forward_mean_curve(model, grid)?
        .last()
        .expect("nonempty grid"))
}

/// `V_t^T` in forward form, precomputed for one checkpoint `t_m` of one system.
#[derive(Debug, Clone)]
pub struct ForwardFormula<S> {
    pub checkpoint: usize,
    constant: S,
    f_weights: Vec<S>,
    /// Coefficient of `ΔZ_j`, `j < m`.
    dz_weights: Vec<S>,
}

impl<S: crate::scalar::Scalar> ForwardFormula<S> {
    /// `φ(T-t) + ∫_0^t f(T-s)X_s ds + ∫_t^T F(T-s,ψ(T-s)) g_t(s) ds` by trapezoid sums.
    pub fn new(phi: &[S], f_psi: &[S], f: &[S], plan: &SimulationPlan, checkpoint: usize) -> Self {
        let grid = plan.grid();
        let n = grid.steps();
        let m = checkpoint;
        let tw = grid.trapezoid_weights(m, n);
        let mut constant = phi[n - m];
        let mut dz_weights = vec![S::zero(); m];
        for k in m..=n {
            let c = f_psi[n - k] * tw[k];
            constant += c * plan.g0()[k];
            for (j, w) in dz_weights.iter_mut().enumerate() {
                *w += c * plan.weights()[k - 1 - j];
            }
        }
        let tw = grid.trapezoid_weights(0, m);
        let f_weights = (0..=m).map(|j| f[n - j] * tw[j]).collect();
        ForwardFormula {
            checkpoint,
            constant,
            f_weights,
            dz_weights,
        }
    }

    pub fn evaluate(&self, path: &Path) -> S {
        let mut acc = self.constant;
        for (w, x) in self.f_weights.iter().zip(&path.x) {
            acc += *w * *x;
        }
        for (j, w) in self.dz_weights.iter().enumerate() {
            acc += *w * path.dz(j);
        }
        acc
    }
}

/// Running sums for a complex-valued sample mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sum: Complex64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, z: Complex64) {
        self.n += 1;
        self.sum += z;
        self.sum_sq += z.norm_sqr();
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> Complex64 {
        if self.n == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean (`sqrt((Var ℜ + Var ℑ)/n)`).
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum.norm_sqr() / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatnessRow {
    pub t: f64,
    pub estimate: Complex64,
    pub stderr: f64,
    /// `|Ê[exp V_t] - exp V_0|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionReport {
    pub label: String,
    pub v0: Complex64,
    /// `exp V₀^T`.
    pub theory: Complex64,
    /// `Ê[exp ∫_0^T f(T-s) X_s ds]`.
    pub estimate: Complex64,
    pub stderr: f64,
    pub theory_real: f64,
    pub flatness: Vec<FlatnessRow>,
    pub flatness_real: Vec<FlatnessRow>,
}

impl FunctionReport {
    pub fn error(&self) -> f64 {
        (self.estimate - self.theory).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformReport {
    pub paths: usize,
    pub seed: u64,
    pub functions: Vec<FunctionReport>,
    pub times: Vec<f64>,
    pub mean_formula: Vec<f64>,
    pub mean_mc: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    /// Fraction of raw path values (all nodes, all paths) that were negative.
    pub clipped_fraction: f64,
    /// Mean and standard error of `Σ_j (ΔZ^jump_j - X⁺_j Δ ∫ξν)` per path (should be 0).
    pub compensator_mean: f64,
    pub compensator_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct McSettings {
    pub paths: usize,
    pub seed: u64,
    /// Checkpoint node indices.
    pub checkpoints: Vec<usize>,
    pub workers: Option<usize>,
    pub solver: SolverConfig,
}

struct FunctionPlan {
    label: String,
    f_weights: Vec<Complex64>,
    fwd: Vec<ForwardFormula<Complex64>>,
    fwd_real: Vec<ForwardFormula<f64>>,
    v0: Complex64,
    v0_bar: f64,
}

#[derive(Clone)]
struct Acc {
    cf: Vec<Moments>,
    flat: Vec<Vec<Moments>>,
    flat_real: Vec<Vec<Moments>>,
    mean: Vec<Moments>,
    clipped: usize,
    comp: Moments,
}

impl Acc {
    fn new(nf: usize, nc: usize, nodes: usize) -> Self {
        Acc {
            cf: vec![Moments::default(); nf],
            flat: vec![vec![Moments::default(); nc]; nf],
            flat_real: vec![vec![Moments::default(); nc]; nf],
            mean: vec![Moments::default(); nodes],
            clipped: 0,
            comp: Moments::default(),
        }
    }

    fn merge(&mut self, o: &Acc) {
        let m2 = |a: &mut Vec<Moments>, b: &Vec<Moments>| {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y))
        };
        m2(&mut self.cf, &o.cf);
        self.flat
            .iter_mut()
            .zip(&o.flat)
            .for_each(|(a, b)| m2(a, b));
        self.flat_real
            .iter_mut()
            .zip(&o.flat_real)
            .for_each(|(a, b)| m2(a, b));
        m2(&mut self.mean, &o.mean);
        self.clipped += o.clipped;
        self.comp.merge(&o.comp);
    }
}

/// Monte Carlo of `E[exp ∫f(T-s)X_s ds]` against `exp V₀^T` for each `f`, with martingale
/// flatness at the checkpoints for both systems and the forward-mean curve, all on the same paths.
pub fn mc_transform(
    model: &ModelSpec,
    grid: &Grid,
    functions: &[(String, TestFunction)],
    settings: &McSettings,
) -> Result<TransformReport> {
    let plan = SimulationPlan::new(model, grid)?;
    let n = grid.steps();
    for &c in &settings.checkpoints {
        if c == 0 || c >= n {
            return Err(Error::Contract(format!(
                "checkpoint index {c} outside (0, {n})"
            )));
        }
    }
    let mut fplans = Vec::new();
    for (label, f) in functions {
        let sol = RiccatiSolution::solve(model, f, grid, &settings.solver)?;
        let re_f: Vec<f64> = sol.f.iter().map(|v| v.re).collect();
        let tw = grid.trapezoid_weights(0, n);
        fplans.push(FunctionPlan {
            label: label.clone(),
            f_weights: (0..=n).map(|j| sol.f[n - j] * tw[j]).collect(),
            fwd: settings
                .checkpoints
                .iter()
                .map(|&m| ForwardFormula::new(&sol.phi, &sol.f_psi, &sol.f, &plan, m))
                .collect(),
            fwd_real: settings
                .checkpoints
                .iter()
                .map(|&m| ForwardFormula::new(&sol.phi_bar, &sol.f_bar_psi_bar, &re_f, &plan, m))
                .collect(),
            v0: sol.v0(plan.g0()),
            v0_bar: sol.v0_bar(plan.g0()),
        });
    }
    let nc = settings.checkpoints.len();
    let comp_rate = model.jumps.first_moment() * grid.step();
    let blocks = settings.paths.div_ceil(BLOCK);
    let partials = with_workers(settings.workers, || {
        (0..blocks)
            .into_par_iter()
            .map(|b| -> Result<Acc> {
                let mut acc = Acc::new(fplans.len(), nc, grid.len());
                let mut path = Path::new(n);
                for p in b * BLOCK..((b + 1) * BLOCK).min(settings.paths) {
                    plan.simulate(settings.seed, p as u64, &mut path)?;
                    for (a, x) in acc.mean.iter_mut().zip(&path.x) {
                        a.push(Complex64::new(*x, 0.0));
                    }
                    acc.clipped += path.x.iter().filter(|v| **v < 0.0).count();
                    let comp: f64 = (0..n)
                        .map(|j| path.dz_jump[j] - path.x[j].max(0.0) * comp_rate)
                        .sum();
                    acc.comp.push(Complex64::new(comp, 0.0));
                    for (k, fp) in fplans.iter().enumerate() {
                        let integral: Complex64 =
                            fp.f_weights.iter().zip(&path.x).map(|(w, x)| w * x).sum();
                        acc.cf[k].push(integral.exp());
                        for c in 0..nc {
                            acc.flat[k][c].push(fp.fwd[c].evaluate(&path).exp());
                            acc.flat_real[k][c]
                                .push(Complex64::new(fp.fwd_real[c].evaluate(&path).exp(), 0.0));
                        }
                    }
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut total = Acc::new(fplans.len(), nc, grid.len());
    for p in &partials {
        total.merge(p);
    }
    let row = |mo: &Moments, m: usize, base: Complex64| FlatnessRow {
        t: grid.node(m),
        estimate: mo.mean(),
        stderr: mo.stderr(),
        deviation: (mo.mean() - base).norm(),
    };
    let functions = fplans
        .iter()
        .enumerate()
        .map(|(k, fp)| {
            let theory = fp.v0.exp();
            let theory_real = fp.v0_bar.exp();
            FunctionReport {
                label: fp.label.clone(),
                v0: fp.v0,
                theory,
                estimate: total.cf[k].mean(),
                stderr: total.cf[k].stderr(),
                theory_real,
                flatness: (0..nc)
                    .map(|c| row(&total.flat[k][c], settings.checkpoints[c], theory))
                    .collect(),
                flatness_real: (0..nc)
                    .map(|c| {
                        row(
                            &total.flat_real[k][c],
                            settings.checkpoints[c],
                            Complex64::new(theory_real, 0.0),
                        )
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(TransformReport {
        paths: settings.paths,
        seed: settings.seed,
        functions,
        times: grid.nodes(),
        mean_formula: forward_mean_curve(model, grid)?,
        mean_mc: total.mean.iter().map(|m| m.mean().re).collect(),
        mean_stderr: total.mean.iter().map(|m| m.stderr()).collect(),
        clipped_fraction: total.clipped as f64 / (settings.paths * grid.len()).max(1) as f64,
        compensator_mean: total.comp.mean().re,
        compensator_stderr: total.comp.stderr(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PastCheckRow {
    pub path: usize,
    pub t: f64,
    pub v_past: Complex64,
    pub v_forward: Complex64,
    pub v_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PastCheckReport {
    pub rows: Vec<PastCheckRow>,
    pub bound: BoundConstant,
    /// `max |v_past - v_forward|`.
    pub max_two_formula_gap: f64,
    /// `max (ℜV - V̄ - ln C)` over paths and checkpoints.
    pub max_log_excess: f64,
    /// `max |v_past - classical|` when `K ≡ 1` (else `None`).
    pub classical_gap: Option<f64>,
    pub gap_monotonicity_violation: f64,
}

/// Past versus forward form of `V_t^T` on simulated paths, plus the pathwise bound.
pub fn past_check(
    model: &ModelSpec,
    grid: &Grid,
    f: &TestFunction,
    settings: &McSettings,
) -> Result<PastCheckReport> {
    let plan = SimulationPlan::new(model, grid)?;
    let sol = RiccatiSolution::solve(model, f, grid, &settings.solver)?;
    let l = FirstKindResolvent::new(&model.kernel, grid)?;
    let past = PastFormulas::new(&sol, plan.g0(), &l, &settings.checkpoints)?;
    let fwd: Vec<_> = settings
        .checkpoints
        .iter()
        .map(|&m| ForwardFormula::new(&sol.phi, &sol.f_psi, &sol.f, &plan, m))
        .collect();
    let bound = bound_constant(&sol, plan.g0(), &l);
    let unit = matches!(model.kernel, crate::kernel::Kernel::Constant { k0 } if k0 == 1.0)
        && model.g0.is_flat();
    let gap_violation = past
        .complex
        .iter()
        .zip(&past.real)
        .map(|(c, r)| gap_monotonicity_violation(&c.pi, &r.pi))
        .fold(0.0, f64::max);
    let per_path = with_workers(settings.workers, || {
        (0..settings.paths)
            .into_par_iter()
            .map(|p| -> Result<(Vec<PastCheckRow>, f64)> {
                let mut path = Path::new(grid.steps());
                plan.simulate(settings.seed, p as u64, &mut path)?;
                let mut classical: f64 = 0.0;
                let rows = settings
                    .checkpoints
                    .iter()
                    .enumerate()
                    .map(|(c, &m)| {
                        let v_past = past.complex[c].evaluate(&path.x, plan.g0());
                        if unit {
                            classical =
                                classical.max((v_past - classical_past(&sol, &path.x, m)).norm());
                        }
                        PastCheckRow {
                            path: p,
                            t: grid.node(m),
                            v_past,
                            v_forward: fwd[c].evaluate(&path),
                            v_bar: past.real[c].evaluate(&path.x, plan.g0()),
                        }
                    })
                    .collect();
                Ok((rows, classical))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut rows = Vec::new();
    let mut classical: f64 = 0.0;
    for (r, c) in per_path {
        rows.extend(r);
        classical = classical.max(c);
    }
    let max_two_formula_gap = rows
        .iter()
        .map(|r| (r.v_past - r.v_forward).norm())
        .fold(0.0, f64::max);
    let max_log_excess = rows
        .iter()
        .map(|r| r.v_past.re - r.v_bar - bound.ln_c)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PastCheckReport {
        rows,
        bound,
        max_two_formula_gap,
        max_log_excess,
        classical_gap: unit.then_some(classical),
        gap_monotonicity_violation: gap_violation,
    })
}

/// Default checkpoints `{T/4, T/2, 3T/4}` as node indices (rounded to the grid).
pub fn default_checkpoints(grid: &Grid) -> Vec<usize> {
    let n = grid.steps();
    let mut v: Vec<usize> = [0.25, 0.5, 0.75]
        .iter()
        .map(|q| ((q * n as f64).round() as usize).clamp(1, n - 1))
        .collect();
    v.dedup();
    v
}

/// Checkpoint times (fractions of the horizon) to node indices; non-nodes are a contract error.
pub fn checkpoint_indices(grid: &Grid, fractions: &[f64]) -> Result<Vec<usize>> {
    fractions
        .iter()
        .map(|q| {
            let i = grid.index_of(q * grid.horizon())?;
            if i == 0 || i >= grid.steps() {
                return Err(Error::Contract(format!(
                    "checkpoint {q}T must lie strictly inside (0, T)"
                )));
            }
            Ok(i)
        })
        .collect()
}
