use crate::error::{Error, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr};

/// `P(a, x)`, extended by 0 at `x <= 0` (statrs panics there).
fn reg_lower(a: f64, x: f64) -> f64 {
    if x > 0.0 {
        gamma_lr(a, x)
    } else {
        0.0
    }
}

/// Nonnegative measure on `[0, ∞)` described through an atom at zero and
/// interval integrals of its density. Kernels, first-kind resolvents and
/// shifted kernels all implement this; convolutions only need these integrals,
/// which keeps singular densities exact near the origin.
pub trait CellMeasure: Sync {
    fn atom(&self) -> f64;
    /// `∫_a^b density`, `0 <= a <= b`.
    fn mass(&self, a: f64, b: f64) -> f64;
    /// `∫_a^b (s - a) density(s) ds`.
    fn moment(&self, a: f64, b: f64) -> f64;
    /// Point value of the density, `t > 0`.
    fn density(&self, t: f64) -> f64;
}

/// `t^{β-1}/Γ(β)` on `(0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PowerLaw {
    pub beta: f64,
    gamma_beta: f64,
    gamma_beta1: f64,
    /// `(β+1)Γ(β)`, so that `∫_0^x s·density = x^{β+1}/gamma_beta2`.
    gamma_beta2: f64,
}

impl PowerLaw {
    pub fn new(beta: f64) -> Self {
        PowerLaw {
            beta,
            gamma_beta: gamma(beta),
            gamma_beta1: gamma(beta + 1.0),
            gamma_beta2: (beta + 1.0) * gamma(beta),
        }
    }
    pub fn density(&self, t: f64) -> f64 {
        if self.beta == 1.0 {
            1.0
        } else {
            t.powf(self.beta - 1.0) / self.gamma_beta
        }
    }
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        (b.powf(self.beta) - a.powf(self.beta)) / self.gamma_beta1
    }
    pub fn moment(&self, a: f64, b: f64) -> f64 {
        if a == 0.0 {
            return b.powf(self.beta + 1.0) / self.gamma_beta2;
        }
        (b.powf(self.beta + 1.0) - a.powf(self.beta + 1.0)) / self.gamma_beta2 - a * self.mass(a, b)
    }
    pub fn derivative(&self, t: f64) -> f64 {
        (self.beta - 1.0) * t.powf(self.beta - 2.0) / self.gamma_beta
    }
}

/// Piecewise-linear kernel through `(times[i], values[i])`, constant after the last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedKernel {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Domain(
                "tabulated kernel needs >= 2 (t, K) pairs of equal length".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::Domain("tabulated kernel must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain(
                "tabulated kernel times must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(
                "tabulated kernel values must be finite and nonnegative".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Domain(
                "tabulated kernel must be nonincreasing".into(),
            ));
        }
        if values[0] <= 0.0 {
            return Err(Error::Domain("tabulated kernel is identically zero".into()));
        }
        Ok(TabulatedKernel { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let (x0, x1) = (self.times[k], self.times[k + 1]);
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        v0 + (v1 - v0) * (t - x0) / (x1 - x0)
    }

    /// Exact integrals of the interpolant: returns (∫_a^b K, ∫_a^b (s-a) K).
    fn integrals(&self, a: f64, b: f64) -> (f64, f64) {
        let mut mass = 0.0;
        let mut mom = 0.0;
        let n = self.times.len();
        let start = self.times.partition_point(|&x| x <= a).saturating_sub(1);
        let mut p = a;
        let mut k = start;
        while p < b {
            let q = if k + 1 < n {
                self.times[k + 1].min(b)
            } else {
                b
            };
            if q > p {
                let (vp, vq) = (self.eval(p), self.eval(q));
                let m = 0.5 * (p + q);
                let vm = 0.5 * (vp + vq);
                let h = q - p;
                mass += 0.5 * h * (vp + vq);
                // Simpson is exact for the quadratic (s - a) K(s) on a linear piece
                mom += h / 6.0 * ((p - a) * vp + 4.0 * (m - a) * vm + (q - a) * vq);
            }
            p = q;
            k += 1;
        }
        (mass, mom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Constant { k0: f64 },
    Fractional { alpha: f64 },
    Exponential { k0: f64, rate: f64 },
    Gamma { alpha: f64, rate: f64 },
    Tabulated(TabulatedKernel),
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0.5, 1] so that t^(alpha-1) is square-integrable near 0 (L2_loc); got {alpha}"
        )));
    }
    Ok(())
}

/// `1 - e^{-x}(1 + x)`, accurate for small `x`.
fn one_minus_exp_poly(x: f64) -> f64 {
    if x < 0.05 {
        // Σ_{n≥2} (-1)^n (n-1) x^n / n!
        let mut term = x * x / 2.0;
        let mut sum = term;
        for n in 3..12 {
            term *= -x / n as f64;
            sum += term * (n - 1) as f64;
        }
        sum
    } else {
        -(-x).exp_m1() - x * (-x).exp()
    }
}

impl Kernel {
    pub fn constant(k0: f64) -> Result<Self> {
        if !(k0.is_finite() && k0 >= 0.0) {
            return Err(Error::Domain(format!(
                "constant kernel needs k0 >= 0, got {k0}"
            )));
        }
        Ok(Kernel::Constant { k0 })
    }

    pub fn fractional(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Kernel::Fractional { alpha })
    }

    pub fn exponential(k0: f64, rate: f64) -> Result<Self> {
        if !(k0.is_finite() && k0 >= 0.0 && rate.is_finite() && rate >= 0.0) {
            return Err(Error::Domain(format!(
                "exponential kernel needs k0 >= 0, rate >= 0; got {k0}, {rate}"
            )));
        }
        Ok(Kernel::Exponential { k0, rate })
    }

    pub fn gamma(alpha: f64, rate: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::Domain(format!(
                "gamma kernel needs rate >= 0, got {rate}"
            )));
        }
        Ok(Kernel::Gamma { alpha, rate })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Ok(Kernel::Tabulated(TabulatedKernel::new(times, values)?))
    }

    pub fn singular_at_zero(&self) -> bool {
        match self {
            Kernel::Fractional { alpha } | Kernel::Gamma { alpha, .. } => *alpha < 1.0,
            _ => false,
        }
    }

    pub fn completely_monotone(&self) -> bool {
        !matches!(self, Kernel::Tabulated(_))
    }

    pub fn is_identically_zero(&self) -> bool {
        matches!(self, Kernel::Constant { k0 } | Kernel::Exponential { k0, .. } if *k0 == 0.0)
    }

    /// `K(t)`. `t = 0` is accepted only for kernels bounded at the origin.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() || (t == 0.0 && self.singular_at_zero()) {
            return Err(Error::Domain(format!("kernel evaluated at t = {t}")));
        }
        Ok(self.value(t))
    }

    fn value(&self, t: f64) -> f64 {
        match self {
            Kernel::Constant { k0 } => *k0,
            Kernel::Fractional { alpha } => PowerLaw::new(*alpha).density(t),
            Kernel::Exponential { k0, rate } => k0 * (-rate * t).exp(),
            Kernel::Gamma { alpha, rate } => PowerLaw::new(*alpha).density(t) * (-rate * t).exp(),
            Kernel::Tabulated(tab) => tab.eval(t),
        }
    }

    /// `∫_0^x K`.
    pub fn cumulative(&self, x: f64) -> f64 {
        self.integral(0.0, x)
    }

    /// `∫_a^b K(s) ds`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Kernel::Constant { k0 } => k0 * (b - a),
            Kernel::Fractional { alpha } => PowerLaw::new(*alpha).mass(a, b),
            Kernel::Exponential { k0, rate } => {
                if *rate == 0.0 {
                    k0 * (b - a)
                } else {
                    k0 * (-rate * a).exp() * -(-rate * (b - a)).exp_m1() / rate
                }
            }
            Kernel::Gamma { alpha, rate } => {
                if *rate == 0.0 {
                    PowerLaw::new(*alpha).mass(a, b)
                } else {
                    let s = rate.powf(-alpha);
                    s * (reg_lower(*alpha, rate * b) - reg_lower(*alpha, rate * a))
                }
            }
            Kernel::Tabulated(tab) => tab.integrals(a, b).0,
        }
    }

    /// `∫_a^b (s - a) K(s) ds`.
    pub fn first_moment(&self, a: f64, b: f64) -> f64 {
        match self {
            Kernel::Constant { k0 } => 0.5 * k0 * (b - a) * (b - a),
            Kernel::Fractional { alpha } => PowerLaw::new(*alpha).moment(a, b),
            Kernel::Exponential { k0, rate } => {
                let h = b - a;
                if *rate == 0.0 {
                    0.5 * k0 * h * h
                } else {
                    k0 * (-rate * a).exp() * one_minus_exp_poly(rate * h) / (rate * rate)
                }
            }
            Kernel::Gamma { alpha, rate } => {
                if *rate == 0.0 {
                    PowerLaw::new(*alpha).moment(a, b)
                } else {
                    // ∫_0^x s K(s) ds = α ρ^{-α-1} P(α+1, ρx)
                    let s = alpha * rate.powf(-alpha - 1.0);
                    s * (reg_lower(alpha + 1.0, rate * b) - reg_lower(alpha + 1.0, rate * a))
                        - a * self.integral(a, b)
                }
            }
            Kernel::Tabulated(tab) => tab.integrals(a, b).1,
        }
    }

    /// `K'(t)` for `t > 0`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!(
                "kernel derivative needs t > 0, got {t}"
            )));
        }
        match self {
            Kernel::Constant { .. } => Ok(0.0),
            Kernel::Fractional { alpha } => Ok(PowerLaw::new(*alpha).derivative(t)),
            Kernel::Exponential { k0, rate } => Ok(-rate * k0 * (-rate * t).exp()),
            Kernel::Gamma { alpha, rate } => Ok(((alpha - 1.0) / t - rate) * self.value(t)),
            Kernel::Tabulated(_) => Err(Error::Capability(
                "tabulated kernels carry no derivative information".into(),
            )),
        }
    }

    /// `(Δ_h K)'(u) = K'(u + h)`.
    pub fn shifted_derivative(&self, h: f64, u: f64) -> Result<f64> {
        if !(h > 0.0) || u < 0.0 {
            return Err(Error::Domain(format!(
                "shifted derivative needs h > 0, u >= 0; got h = {h}, u = {u}"
            )));
        }
        self.derivative(u + h)
    }

    /// `w_i = ∫_{t_i}^{t_{i+1}} K`, `i = 0..N`.
    pub fn cell_weights(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.steps())
            .map(|i| self.integral(grid.node(i), grid.node(i + 1)))
            .collect()
    }
}

impl CellMeasure for Kernel {
    fn atom(&self) -> f64 {
        0.0
    }
    fn mass(&self, a: f64, b: f64) -> f64 {
        self.integral(a, b)
    }
    fn moment(&self, a: f64, b: f64) -> f64 {
        self.first_moment(a, b)
    }
    fn density(&self, t: f64) -> f64 {
        self.value(t)
    }
}

/// The measure `s ↦ m(a + s)` restricted to `(0, ∞)`.
pub struct Shifted<'a, M: CellMeasure> {
    pub inner: &'a M,
    pub shift: f64,
}

impl<M: CellMeasure> CellMeasure for Shifted<'_, M> {
    fn atom(&self) -> f64 {
        if self.shift == 0.0 {
            self.inner.atom()
        } else {
            0.0
        }
    }
    fn mass(&self, a: f64, b: f64) -> f64 {
        self.inner.mass(self.shift + a, self.shift + b)
    }
    fn moment(&self, a: f64, b: f64) -> f64 {
        // moment about shift + a
        self.inner.moment(self.shift + a, self.shift + b)
    }
    fn density(&self, t: f64) -> f64 {
        self.inner.density(self.shift + t)
    }
}
