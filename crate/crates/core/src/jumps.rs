use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

/// Nonnegative jump measure `ν` on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyMeasure {
    /// Density `λβe^{-βξ}`.
    Exponential { intensity: f64, rate: f64 },
    /// `λ δ_{ξ0}`.
    PointMass { intensity: f64, size: f64 },
    /// `Σ ω_j δ_{ξ_j}`; usable in transforms but not sampled.
    Tabulated { nodes: Vec<f64>, weights: Vec<f64> },
}

impl LevyMeasure {
    pub fn none() -> Self {
        LevyMeasure::PointMass {
            intensity: 0.0,
            size: 1.0,
        }
    }

    pub fn exponential(intensity: f64, rate: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity >= 0.0) || !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Domain(format!(
                "exponential jumps need lambda >= 0, beta > 0; got {intensity}, {rate}"
            )));
        }
        Ok(LevyMeasure::Exponential { intensity, rate })
    }

    pub fn point_mass(intensity: f64, size: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity >= 0.0) || !(size.is_finite() && size > 0.0) {
            return Err(Error::Domain(format!(
                "point-mass jumps need lambda >= 0, size > 0; got {intensity}, {size}"
            )));
        }
        Ok(LevyMeasure::PointMass { intensity, size })
    }

    pub fn tabulated(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::Domain(
                "tabulated jump measure: nodes and weights differ in length".into(),
            ));
        }
        if nodes.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Domain(
                "tabulated jump measure: nodes must be positive (no mass at 0)".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain(
                "tabulated jump measure: weights must be nonnegative".into(),
            ));
        }
        Ok(LevyMeasure::Tabulated { nodes, weights })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LevyMeasure::Exponential { intensity, .. }
            | LevyMeasure::PointMass { intensity, .. } => *intensity == 0.0,
            LevyMeasure::Tabulated { weights, .. } => weights.iter().all(|w| *w == 0.0),
        }
    }

    /// `ν(ℝ₊)`.
    pub fn total_intensity(&self) -> f64 {
        match self {
            LevyMeasure::Exponential { intensity, .. }
            | LevyMeasure::PointMass { intensity, .. } => *intensity,
            LevyMeasure::Tabulated { weights, .. } => weights.iter().sum(),
        }
    }

    /// `∫ξ ν(dξ)`.
    pub fn first_moment(&self) -> f64 {
        match self {
            LevyMeasure::Exponential { intensity, rate } => intensity / rate,
            LevyMeasure::PointMass { intensity, size } => intensity * size,
            LevyMeasure::Tabulated { nodes, weights } => {
                nodes.iter().zip(weights).map(|(x, w)| x * w).sum()
            }
        }
    }

    /// `∫ξ² ν(dξ)`.
    pub fn second_moment(&self) -> f64 {
        match self {
            LevyMeasure::Exponential { intensity, rate } => 2.0 * intensity / (rate * rate),
            LevyMeasure::PointMass { intensity, size } => intensity * size * size,
            LevyMeasure::Tabulated { nodes, weights } => {
                nodes.iter().zip(weights).map(|(x, w)| x * x * w).sum()
            }
        }
    }

    /// Mean jump size `∫ξν / ν(ℝ₊)` (0 for the zero measure).
    pub fn mean_size(&self) -> f64 {
        let l = self.total_intensity();
        if l == 0.0 {
            0.0
        } else {
            self.first_moment() / l
        }
    }

    /// `J(u) = ∫(e^{uξ} - 1 - uξ) ν(dξ)` for `ℜu <= 0`.
    pub fn transform(&self, u: Complex64) -> Result<Complex64> {
        if !(u.re <= 0.0) {
            return Err(Error::Domain(format!(
                "jump transform needs Re u <= 0, got {u}"
            )));
        }
        Ok(self.transform_unchecked(u))
    }

    /// Real-axis transform `J(x)`, `x <= 0`.
    pub fn transform_real(&self, x: f64) -> Result<f64> {
        if !(x <= 0.0) {
            return Err(Error::Domain(format!(
                "jump transform needs u <= 0, got {x}"
            )));
        }
        Ok(self.transform_real_unchecked(x))
    }

    pub(crate) fn transform_real_unchecked(&self, x: f64) -> f64 {
        match self {
            LevyMeasure::Exponential { intensity, rate } => {
                // β/(β-x) - 1 - x/β = x² / (β(β-x))
                intensity * x * x / (rate * (rate - x))
            }
            LevyMeasure::PointMass { intensity, size } => intensity * e1(x * size),
            LevyMeasure::Tabulated { nodes, weights } => nodes
                .iter()
                .zip(weights)
                .map(|(xi, w)| w * e1(x * xi))
                .sum(),
        }
    }

    /// Closed forms; the imaginary-free case takes the real branch so the real
    /// and complex systems agree bitwise on real inputs.
    pub(crate) fn transform_unchecked(&self, u: Complex64) -> Complex64 {
        if u.im == 0.0 {
            return Complex64::new(self.transform_real_unchecked(u.re), 0.0);
        }
        match self {
            LevyMeasure::Exponential { intensity, rate } => {
                u * u / ((rate - u) * *rate) * *intensity
            }
            LevyMeasure::PointMass { intensity, size } => e1c(u * *size) * *intensity,
            LevyMeasure::Tabulated { nodes, weights } => nodes
                .iter()
                .zip(weights)
                .map(|(xi, w)| e1c(u * *xi) * *w)
                .sum(),
        }
    }

    /// Sum of the jumps of a compound Poisson process with intensity
    /// `ν · local_intensity` over one step. Draw order: Poisson count, then sizes.
    pub fn sample_jump_sum<R: Rng + ?Sized>(
        &self,
        local_intensity: f64,
        rng: &mut R,
    ) -> Result<f64> {
        if !(local_intensity >= 0.0) {
            return Err(Error::Domain(format!(
                "local intensity must be nonnegative, got {local_intensity}"
            )));
        }
        let mean = match self {
            LevyMeasure::Tabulated { .. } => {
                return Err(Error::Capability(
                    "tabulated jump measures are quadrature-only and cannot be sampled".into(),
                ))
            }
            _ => self.total_intensity() * local_intensity,
        };
        if mean == 0.0 {
            return Ok(0.0);
        }
        let count = Poisson::new(mean)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sample(rng) as u64;
        Ok(match self {
            LevyMeasure::Exponential { rate, .. } => {
                let d = Exp::new(*rate).map_err(|e| Error::Domain(e.to_string()))?;
                (0..count).map(|_| d.sample(rng)).sum()
            }
            LevyMeasure::PointMass { size, .. } => count as f64 * size,
            LevyMeasure::Tabulated { .. } => unreachable!(),
        })
    }

    pub fn is_samplable(&self) -> bool {
        !matches!(self, LevyMeasure::Tabulated { .. })
    }
}

/// `e^z - 1 - z`, accurate near 0.
fn e1(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        z * z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
    } else {
        z.exp_m1() - z
    }
}

fn e1c(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        z * z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
    } else {
        z.exp() - 1.0 - z
    }
}
