use crate::conv::CellMoments;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jumps::LevyMeasure;
use crate::kernel::Kernel;
use num_complex::Complex64;

/// Linear interpolation through `(times, values)`, constant outside the table.
pub(crate) fn interp<T>(times: &[f64], values: &[T], t: f64) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let n = times.len();
    if t <= times[0] {
        return values[0];
    }
    if t >= times[n - 1] {
        return values[n - 1];
    }
    let k = times.partition_point(|&x| x <= t) - 1;
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    values[k] * (1.0 - w) + values[k + 1] * w
}

fn check_table(times: &[f64], n_values: usize, what: &str) -> Result<()> {
    if times.is_empty() || times.len() != n_values {
        return Err(Error::Domain(format!(
            "{what}: table needs matching, nonempty columns"
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain(format!(
            "{what}: table times must be strictly increasing"
        )));
    }
    Ok(())
}

/// Nonnegative, locally bounded `θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta {
    Constant(f64),
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl Theta {
    fn validate(&self) -> Result<()> {
        match self {
            Theta::Constant(v) if !(v.is_finite() && *v >= 0.0) => {
                Err(Error::Domain(format!("theta must be nonnegative, got {v}")))
            }
            Theta::Table { times, values } => {
                check_table(times, values.len(), "theta")?;
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::Domain("theta table must be nonnegative".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, t: f64) -> f64 {
        match self {
            Theta::Constant(v) => *v,
            Theta::Table { times, values } => interp(times, values, t),
        }
    }
}

/// Admissible input curves `g₀`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputCurve {
    /// `g₀ = x₀ + K∗θ`.
    ConstantPlusKTheta { x0: f64, theta: Theta },
    /// Continuous nondecreasing `g₀` with `g₀(0) = 0`, linearly interpolated.
    MonotoneTable { times: Vec<f64>, values: Vec<f64> },
}

impl InputCurve {
    pub fn constant(x0: f64) -> Result<Self> {
        let c = InputCurve::ConstantPlusKTheta {
            x0,
            theta: Theta::Constant(0.0),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputCurve::ConstantPlusKTheta { x0, theta } => {
                if !(x0.is_finite() && *x0 >= 0.0) {
                    return Err(Error::Domain(format!("x0 must be nonnegative, got {x0}")));
                }
                theta.validate()
            }
            InputCurve::MonotoneTable { times, values } => {
                check_table(times, values.len(), "g0")?;
                if values[0] != 0.0 || times[0] != 0.0 {
                    return Err(Error::Domain(
                        "monotone g0 table must start at (0, 0)".into(),
                    ));
                }
                if values.windows(2).any(|w| w[1] < w[0]) || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain(
                        "monotone g0 table must be nondecreasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `g₀(t_i)` at every node. `K∗θ` uses product integration with `θ` linear between nodes.
    pub fn samples(&self, kernel: &Kernel, grid: &Grid) -> Vec<f64> {
        match self {
            InputCurve::ConstantPlusKTheta { x0, theta } => {
                if let Theta::Constant(v) = theta {
                    return grid
                        .nodes()
                        .iter()
                        .map(|&t| x0 + v * kernel.cumulative(t))
                        .collect();
                }
                let th: Vec<f64> = grid.nodes().iter().map(|&t| theta.sample(t)).collect();
                let kt = CellMoments::from_measure(kernel, grid)
                    .convolve(&th)
                    .expect("grid-length operand");
                kt.iter().map(|v| x0 + v).collect()
            }
            InputCurve::MonotoneTable { times, values } => grid
                .nodes()
                .iter()
                .map(|&t| interp(times, values, t))
                .collect(),
        }
    }

    /// `g₀ ≡ x₀` exactly (no `K∗θ` contribution).
    pub fn is_flat(&self) -> bool {
        match self {
            InputCurve::ConstantPlusKTheta {
                theta: Theta::Constant(v),
                ..
            } => *v == 0.0,
            InputCurve::ConstantPlusKTheta {
                theta: Theta::Table { values, .. },
                ..
            } => values.iter().all(|v| *v == 0.0),
            InputCurve::MonotoneTable { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }
}

/// The affine model `b(x) = b₀ + bx`, `a(x) = A₀ + cx`, jumps `ν₀ + xν`, with kernel `K`
/// and input curve `g₀`. The constant parts (`b₀`, `A₀`, `ν₀`) enter only `φ`
/// and the forward mean; the simulator supports `b₀` but rejects `A₀`, `ν₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kernel: Kernel,
    pub b: f64,
    pub c: f64,
    pub jumps: LevyMeasure,
    pub g0: InputCurve,
    pub b0: f64,
    pub a0: f64,
    pub jumps0: LevyMeasure,
}

impl ModelSpec {
    pub fn new(kernel: Kernel, b: f64, c: f64, jumps: LevyMeasure, g0: InputCurve) -> Result<Self> {
        let m = ModelSpec {
            kernel,
            b,
            c,
            jumps,
            g0,
            b0: 0.0,
            a0: 0.0,
            jumps0: LevyMeasure::none(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_constant_terms(mut self, b0: f64, a0: f64, jumps0: LevyMeasure) -> Result<Self> {
        self.b0 = b0;
        self.a0 = a0;
        self.jumps0 = jumps0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.b.is_finite() || !self.b0.is_finite() {
            return Err(Error::Domain("drift coefficients must be finite".into()));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::Domain(format!(
                "diffusion slope c must be nonnegative, got {}",
                self.c
            )));
        }
        if !(self.a0.is_finite() && self.a0 >= 0.0) {
            return Err(Error::Domain(format!(
                "constant diffusion A0 must be nonnegative, got {}",
                self.a0
            )));
        }
        if self.kernel.is_identically_zero() {
            return Err(Error::Domain("kernel must not be identically zero".into()));
        }
        self.g0.validate()
    }

    pub fn g0_samples(&self, grid: &Grid) -> Vec<f64> {
        self.g0.samples(&self.kernel, grid)
    }

    pub fn with_kernel(&self, kernel: Kernel) -> Self {
        ModelSpec {
            kernel,
            ..self.clone()
        }
    }
}

/// `f: ℝ₊ → ℂ₋`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Constant(Complex64),
    Table {
        times: Vec<f64>,
        values: Vec<Complex64>,
    },
}

impl TestFunction {
    pub fn zero() -> Self {
        TestFunction::Constant(Complex64::new(0.0, 0.0))
    }

    /// `f ≡ iu`.
    pub fn imaginary(u: f64) -> Result<Self> {
        Self::constant(Complex64::new(0.0, u))
    }

    /// `f ≡ w`, `ℜw <= 0`.
    pub fn constant(w: Complex64) -> Result<Self> {
        let f = TestFunction::Constant(w);
        f.validate()?;
        Ok(f)
    }

    pub fn table(times: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        let f = TestFunction::Table { times, values };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let vals: &[Complex64] = match self {
            TestFunction::Constant(w) => std::slice::from_ref(w),
            TestFunction::Table { times, values } => {
                check_table(times, values.len(), "f")?;
                values
            }
        };
        if let Some(v) = vals.iter().find(|v| !(v.re <= 0.0) || !v.im.is_finite()) {
            return Err(Error::Domain(format!(
                "test function must take values with Re f <= 0 (found {v}); the Riccati-Volterra solution may explode otherwise"
            )));
        }
        Ok(())
    }

    pub fn samples(&self, grid: &Grid) -> Vec<Complex64> {
        match self {
            TestFunction::Constant(w) => vec![*w; grid.len()],
            TestFunction::Table { times, values } => grid
                .nodes()
                .iter()
                .map(|&t| interp(times, values, t))
                .collect(),
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            TestFunction::Constant(w) => w.im == 0.0,
            TestFunction::Table { values, .. } => values.iter().all(|v| v.im == 0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TestFunction::Constant(w) => *w == Complex64::new(0.0, 0.0),
            TestFunction::Table { values, .. } => {
                values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
            }
        }
    }

    pub fn constant_value(&self) -> Option<Complex64> {
        match self {
            TestFunction::Constant(w) => Some(*w),
            TestFunction::Table { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_real_part_rejected() {
        assert!(TestFunction::constant(Complex64::new(0.1, 0.0)).is_err());
        assert!(TestFunction::table(
            vec![0.0, 1.0],
            vec![Complex64::new(0.0, 1.0), Complex64::new(0.2, 0.0)]
        )
        .is_err());
    }

    #[test]
    fn g0_constant_plus_k_theta() {
        let g = Grid::new(1.0, 10).unwrap();
        let k = Kernel::fractional(0.6).unwrap();
        let c = InputCurve::ConstantPlusKTheta {
            x0: 0.3,
            theta: Theta::Constant(0.1),
        };
        let s = c.samples(&k, &g);
        assert_eq!(s[0], 0.3);
        assert!((s[10] - (0.3 + 0.1 / statrs::function::gamma::gamma(1.6))).abs() < 1e-14);
        let tab = InputCurve::ConstantPlusKTheta {
            x0: 0.3,
            theta: Theta::Table {
                times: vec![0.0, 1.0],
                values: vec![0.1, 0.1],
            },
        };
        let s2 = tab.samples(&k, &g);
        for (a, b) in s.iter().zip(&s2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn monotone_table_validation() {
        assert!(InputCurve::MonotoneTable {
            times: vec![0.0, 1.0],
            values: vec![0.1, 0.2]
        }
        .validate()
        .is_err());
        assert!(InputCurve::MonotoneTable {
            times: vec![0.0, 1.0],
            values: vec![0.0, -0.2]
        }
        .validate()
        .is_err());
        assert!(InputCurve::MonotoneTable {
            times: vec![0.0, 1.0],
            values: vec![0.0, 0.2]
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn negative_parameters_rejected() {
        let k = Kernel::constant(1.0).unwrap();
        assert!(ModelSpec::new(
            k.clone(),
            0.0,
            -0.1,
            LevyMeasure::none(),
            InputCurve::constant(0.1).unwrap()
        )
        .is_err());
        assert!(InputCurve::constant(-0.1).is_err());
    }
}
