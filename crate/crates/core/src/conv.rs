use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::CellMeasure;
use crate::scalar::Scalar;
use rayon::prelude::*;

/// Per-lag cell integrals of a kernel on a uniform grid:
/// `mass[k] = ∫_{kΔ}^{(k+1)Δ} K` and `moment[k] = ∫ K(τ)(τ - kΔ)/Δ dτ` over the same cell.
///
/// Convolving against a function that is linear between nodes is then exact
/// in the kernel and in the interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMoments {
    pub mass: Vec<f64>,
    pub moment: Vec<f64>,
}

impl CellMoments {
    pub fn from_measure<M: CellMeasure + ?Sized>(m: &M, grid: &Grid) -> Self {
        let d = grid.step();
        let (mass, moment) = (0..grid.steps())
            .map(|k| {
                let (a, b) = (grid.node(k), grid.node(k + 1));
                (m.mass(a, b), m.moment(a, b) / d)
            })
            .unzip();
        CellMoments { mass, moment }
    }

    /// Moments of the piecewise-linear interpolant of `samples` (one per node).
    pub fn from_samples(samples: &[f64], grid: &Grid) -> Result<Self> {
        check_len(samples.len(), grid)?;
        let d = grid.step();
        let (mass, moment) = samples
            .windows(2)
            .map(|w| (0.5 * d * (w[0] + w[1]), d * (w[0] / 6.0 + w[1] / 3.0)))
            .unzip();
        Ok(CellMoments { mass, moment })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Weight multiplying the current node value in `(K∗g)(t_i)`.
    pub fn diagonal(&self) -> f64 {
        self.mass[0] - self.moment[0]
    }

    /// `(K∗g)(t_i)` without the contribution of `g_i` (the "history" term).
    pub fn history<S: Scalar>(&self, g: &[S], i: usize) -> S {
        let mut acc = S::zero();
        if i == 0 {
            return acc;
        }
        for j in 0..i {
            let k = i - 1 - j;
            acc += g[j] * self.moment[k];
            if j + 1 < i {
                acc += g[j + 1] * (self.mass[k] - self.moment[k]);
            }
        }
        acc
    }

    /// `(K∗g)(t_i)` for every node, `g` linear between nodes.
    pub fn convolve<S: Scalar>(&self, g: &[S]) -> Result<Vec<S>> {
        if g.len() != self.len() + 1 {
            return Err(Error::Contract(format!(
                "operand has {} samples, expected {}",
                g.len(),
                self.len() + 1
            )));
        }
        let d = self.diagonal();
        Ok((0..g.len())
            .map(|i| {
                if i == 0 {
                    S::zero()
                } else {
                    self.history(g, i) + g[i] * d
                }
            })
            .collect())
    }
}

fn check_len(n: usize, grid: &Grid) -> Result<()> {
    if n != grid.len() {
        return Err(Error::Contract(format!(
            "operand has {n} samples, expected {}",
            grid.len()
        )));
    }
    Ok(())
}

/// Atom at zero plus cell moments: the discrete form of a first-kind resolvent
/// or any other measure used as a convolution operand.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub atom: f64,
    pub cells: CellMoments,
}

impl DiscreteMeasure {
    pub fn convolve<S: Scalar>(&self, g: &[S]) -> Result<Vec<S>> {
        let mut out = self.cells.convolve(g)?;
        for (o, x) in out.iter_mut().zip(g) {
            *o += *x * self.atom;
        }
        Ok(out)
    }
}

/// Sample-vector convolution `(f∗g)(t_i)`, both operands linear between nodes.
pub fn convolve_samples<S: Scalar>(f: &[f64], g: &[S], grid: &Grid) -> Result<Vec<S>> {
    check_len(g.len(), grid)?;
    CellMoments::from_samples(f, grid)?.convolve(g)
}

/// `(a∗b)(t) = ∫_{[0,t]} a(t - s) b(ds)` for two possibly singular measures, at
/// most one of which has an atom.
///
/// `[0, t]` is split at `t/2`; on each half the operand that is singular there is
/// integrated exactly through its cell integrals while the other (smooth on that
/// half) is interpolated linearly over `pieces` subintervals.
pub fn pair_convolve<A, B>(a: &A, b: &B, t: f64, pieces: usize) -> f64
where
    A: CellMeasure + ?Sized,
    B: CellMeasure + ?Sized,
{
    if t <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * t;
    let n = pieces.max(1);
    let h = half / n as f64;
    let mut acc = 0.0;
    let mut fa = a.density(t);
    let mut fb = b.density(t);
    for k in 0..n {
        let p = k as f64 * h;
        let q = if k + 1 == n { half } else { (k + 1) as f64 * h };
        let w = q - p;
        let fa_next = a.density(t - q);
        let fb_next = b.density(t - q);
        let (bm, bmom) = (b.mass(p, q), b.moment(p, q) / w);
        let (am, amom) = (a.mass(p, q), a.moment(p, q) / w);
        acc += fa * (bm - bmom) + fa_next * bmom;
        acc += fb * (am - amom) + fb_next * amom;
        fa = fa_next;
        fb = fb_next;
    }
    acc + b.atom() * a.density(t) + a.atom() * b.density(t)
}

/// Default piece count for [`pair_convolve`] at node `i`.
pub fn default_pieces(i: usize) -> usize {
    i.div_ceil(8).max(32)
}

/// [`pair_convolve`] at every node of the grid (node 0 is reported as 0).
pub fn pair_convolve_nodes<A, B>(a: &A, b: &B, grid: &Grid) -> Vec<f64>
where
    A: CellMeasure + ?Sized,
    B: CellMeasure + ?Sized,
{
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                pair_convolve(a, b, grid.node(i), default_pieces(i))
            }
        })
        .collect()
}
