use crate::conv::{pair_convolve_nodes, CellMoments, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::{CellMeasure, Kernel, PowerLaw};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    DiscreteDeconvolution,
}

#[derive(Debug, Clone, PartialEq)]
enum Density {
    Zero,
    Power(PowerLaw),
    /// Constant value per grid cell, the last value extended to the right.
    Cells {
        step: f64,
        values: Vec<f64>,
    },
}

/// Resolvent of the first kind `L` (`K∗L ≡ 1`) as an atom at zero plus a density.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstKindResolvent {
    atom: f64,
    density: Density,
    provenance: Provenance,
    grid: Grid,
    residual: f64,
}

/// Default acceptance tolerances on `max_i |(K∗L)(t_i) - 1|`.
pub const ANALYTIC_RESOLVENT_TOL: f64 = 1e-3;
pub const DISCRETE_RESOLVENT_TOL: f64 = 1e-8;

impl FirstKindResolvent {
    pub fn new(kernel: &Kernel, grid: &Grid) -> Result<Self> {
        Self::with_tolerance(kernel, grid, ANALYTIC_RESOLVENT_TOL, DISCRETE_RESOLVENT_TOL)
    }

    pub fn with_tolerance(
        kernel: &Kernel,
        grid: &Grid,
        analytic_tol: f64,
        discrete_tol: f64,
    ) -> Result<Self> {
        if kernel.is_identically_zero() {
            return Err(Error::Domain(
                "identically zero kernel has no resolvent of the first kind".into(),
            ));
        }
        let analytic = match kernel {
            Kernel::Constant { k0 } => Some((1.0 / k0, Density::Zero)),
            Kernel::Fractional { alpha } | Kernel::Gamma { alpha, rate: 0.0 } => {
                if *alpha == 1.0 {
                    Some((1.0, Density::Zero))
                } else {
                    Some((0.0, Density::Power(PowerLaw::new(1.0 - alpha))))
                }
            }
            _ => None,
        };
        let mut r = match analytic {
            Some((atom, density)) => FirstKindResolvent {
                atom,
                density,
                provenance: Provenance::Analytic,
                grid: *grid,
                residual: 0.0,
            },
            None => Self::deconvolve(kernel, grid)?,
        };
        let res = r.identity_residuals(kernel);
        r.residual = res.iter().fold(0.0, |m, x| m.max(x.abs()));
        let tol = match r.provenance {
            Provenance::Analytic => analytic_tol,
            Provenance::DiscreteDeconvolution => discrete_tol,
        };
        if r.residual > tol {
            return Err(Error::Solver {
                message: "first-kind resolvent fails the identity K∗L = 1".into(),
                residual: r.residual,
            });
        }
        Ok(r)
    }

    fn deconvolve(kernel: &Kernel, grid: &Grid) -> Result<Self> {
        let m = CellMoments::from_measure(kernel, grid);
        let n = grid.steps();
        let (atom, k0) = if kernel.singular_at_zero() {
            (0.0, None)
        } else {
            let k = kernel.eval(0.0)?;
            (1.0 / k, Some(k))
        };
        let pivot = m.mass[0];
        if !(pivot > 0.0) {
            return Err(Error::Solver {
                message: "zero pivot in first-kind deconvolution".into(),
                residual: f64::INFINITY,
            });
        }
        let mut values = vec![0.0; n];
        for i in 1..=n {
            let rhs = match k0 {
                Some(k) => 1.0 - kernel.density(grid.node(i)) / k,
                None => 1.0,
            };
            let mut acc = 0.0;
            for (j, v) in values.iter().enumerate().take(i - 1) {
                acc += v * m.mass[i - 1 - j];
            }
            values[i - 1] = (rhs - acc) / pivot;
        }
        Ok(FirstKindResolvent {
            atom,
            density: Density::Cells {
                step: grid.step(),
                values,
            },
            provenance: Provenance::DiscreteDeconvolution,
            grid: *grid,
            residual: 0.0,
        })
    }

    /// `(K∗L)(t_i) - 1` for `i = 1..=N`.
    pub fn identity_residuals(&self, kernel: &Kernel) -> Vec<f64> {
        let g = &self.grid;
        match &self.density {
            Density::Zero => (1..g.len())
                .map(|i| self.atom * kernel.density(g.node(i)) - 1.0)
                .collect(),
            Density::Power(_) => pair_convolve_nodes(kernel, self, g)[1..]
                .iter()
                .map(|v| v - 1.0)
                .collect(),
            Density::Cells { values, .. } => {
                let m = CellMoments::from_measure(kernel, g);
                (1..g.len())
                    .map(|i| {
                        let mut acc = self.atom * kernel.density(g.node(i));
                        for (j, v) in values.iter().enumerate().take(i) {
                            acc += v * m.mass[i - 1 - j];
                        }
                        acc - 1.0
                    })
                    .collect()
            }
        }
    }

    pub fn atom(&self) -> f64 {
        self.atom
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `max_i |(K∗L)(t_i) - 1|` recorded at construction.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn has_density(&self) -> bool {
        !matches!(self.density, Density::Zero)
    }

    /// Density value at each node `t_i`, `i >= 1` (cell value for discrete resolvents).
    pub fn density_samples(&self) -> Vec<f64> {
        (1..self.grid.len())
            .map(|i| self.density(self.grid.node(i)))
            .collect()
    }

    /// `L([0, x])`.
    pub fn total_mass(&self, x: f64) -> f64 {
        self.atom + self.mass(0.0, x)
    }

    pub fn cells(&self) -> CellMoments {
        CellMoments::from_measure(self, &self.grid)
    }

    pub fn discrete(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            atom: self.atom,
            cells: self.cells(),
        }
    }
}

fn cells_integrals(step: f64, values: &[f64], a: f64, b: f64) -> (f64, f64) {
    let mut mass = 0.0;
    let mut mom = 0.0;
    let mut p = a;
    while p < b {
        let k = ((p / step).floor() as usize).min(values.len() - 1);
        let edge = if k + 1 < values.len() {
            ((k + 1) as f64 * step).min(b)
        } else {
            b
        };
        let q = if edge > p { edge } else { b.min(p + step) };
        let v = values[k];
        mass += v * (q - p);
        mom += v * 0.5 * ((q - a) * (q - a) - (p - a) * (p - a));
        p = q;
    }
    (mass, mom)
}

impl CellMeasure for FirstKindResolvent {
    fn atom(&self) -> f64 {
        self.atom
    }
    fn mass(&self, a: f64, b: f64) -> f64 {
        match &self.density {
            Density::Zero => 0.0,
            Density::Power(p) => p.mass(a, b),
            Density::Cells { step, values } => cells_integrals(*step, values, a, b).0,
        }
    }
    fn moment(&self, a: f64, b: f64) -> f64 {
        match &self.density {
            Density::Zero => 0.0,
            Density::Power(p) => p.moment(a, b),
            Density::Cells { step, values } => cells_integrals(*step, values, a, b).1,
        }
    }
    fn density(&self, t: f64) -> f64 {
        match &self.density {
            Density::Zero => 0.0,
            Density::Power(p) => p.density(t),
            Density::Cells { step, values } => {
                let k = ((t / step).ceil() as usize)
                    .saturating_sub(1)
                    .min(values.len() - 1);
                values[k]
            }
        }
    }
}

/// Resolvent of the second kind for `K̃ = -bK` together with the canonical
/// resolvent `E_B = K - R_B∗K`.
///
/// With `E_B = K + Q`, `Q` solves `Q = b(K∗K) + b(K∗Q)`, which is continuous
/// with `Q(0) = 0` even for singular `K`; `R_B = -b E_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondKindResolvent {
    b: f64,
    grid: Grid,
    kernel_cells: CellMoments,
    kernel_nodes: Vec<f64>,
    q: Vec<f64>,
    residual: f64,
}

impl SecondKindResolvent {
    pub fn new(kernel: &Kernel, b: f64, grid: &Grid) -> Result<Self> {
        let kc = CellMoments::from_measure(kernel, grid);
        let kernel_nodes: Vec<f64> = (0..grid.len())
            .map(|i| {
                if i == 0 && kernel.singular_at_zero() {
                    f64::INFINITY
                } else {
                    kernel.density(grid.node(i))
                }
            })
            .collect();
        let mut q = vec![0.0; grid.len()];
        let mut residual: f64 = 0.0;
        if b != 0.0 {
            let kk = pair_convolve_nodes(kernel, kernel, grid);
            let diag = 1.0 - b * kc.diagonal();
            if diag == 0.0 {
                return Err(Error::Solver {
                    message: "singular diagonal in second-kind resolvent".into(),
                    residual: f64::INFINITY,
                });
            }
            for i in 1..grid.len() {
                let h = kc.history(&q, i);
                q[i] = b * (kk[i] + h) / diag;
            }
            let kq = kc.convolve(&q)?;
            for i in 1..grid.len() {
                // K̃∗R - K̃ + R = b²(K∗K + K∗Q) - bQ
                let r = b * b * (kk[i] + kq[i]) - b * q[i];
                residual = residual.max(r.abs());
            }
        }
        Ok(SecondKindResolvent {
            b,
            grid: *grid,
            kernel_cells: kc,
            kernel_nodes,
            q,
            residual,
        })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `E_B(t_i)`; infinite at `t_0` for singular kernels.
    pub fn canonical(&self) -> Vec<f64> {
        self.kernel_nodes
            .iter()
            .zip(&self.q)
            .map(|(k, q)| k + q)
            .collect()
    }

    /// `R_B(t_i) = -b E_B(t_i)`.
    pub fn resolvent(&self) -> Vec<f64> {
        self.canonical()
            .iter()
            .map(|e| if self.b == 0.0 { 0.0 } else { -self.b * e })
            .collect()
    }

    /// Cell moments of `E_B` (kernel exactly, `Q` as its linear interpolant).
    pub fn canonical_cells(&self) -> CellMoments {
        let qc = CellMoments::from_samples(&self.q, &self.grid).expect("q has grid length");
        CellMoments {
            mass: self
                .kernel_cells
                .mass
                .iter()
                .zip(&qc.mass)
                .map(|(a, b)| a + b)
                .collect(),
            moment: self
                .kernel_cells
                .moment
                .iter()
                .zip(&qc.moment)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// `(E_B∗g)(t_i)`.
    pub fn canonical_convolve(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.canonical_cells().convolve(g)
    }

    /// `(R_B∗g)(t_i)`.
    pub fn resolvent_convolve(&self, g: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .canonical_convolve(g)?
            .iter()
            .map(|v| -self.b * v)
            .collect())
    }
}
