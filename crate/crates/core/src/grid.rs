use crate::error::{Error, Result};

/// Uniform grid `t_i = i T / N`, `i = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        if steps < 2 {
            return Err(Error::Domain(format!(
                "grid needs at least 2 steps, got {steps}"
            )));
        }
        Ok(Grid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_i`; the last node is the horizon itself so that `t_N = T` exactly.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.node(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the node closest to `t`, failing if `t` is not (numerically) a node.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.step();
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 || (x - i).abs() > 1e-9 * (1.0 + x.abs()) {
            return Err(Error::Contract(format!("time {t} is not a grid node")));
        }
        Ok(i as usize)
    }

    /// Composite trapezoid weights over nodes `a..=b` (zero outside).
    pub fn trapezoid_weights(&self, a: usize, b: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        if b > a {
            let d = self.step();
            for x in w.iter_mut().take(b + 1).skip(a) {
                *x = d;
            }
            w[a] = 0.5 * d;
            w[b] = 0.5 * d;
        }
        w
    }
}
