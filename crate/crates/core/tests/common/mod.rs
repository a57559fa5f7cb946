#![allow(dead_code)]

/// Double-exponential (tanh-sinh) quadrature on `[a, b]`; tolerates integrable
/// power singularities at either endpoint because nodes never touch them.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let h = 1.0 / 64.0;
    let mut acc = 0.0;
    for k in -448i32..=448 {
        let t = k as f64 * h;
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        // Distances to each end computed without cancellation.
        let left = 2.0 * half / (1.0 + (-2.0 * u).exp());
        let right = 2.0 * half / (1.0 + (2.0 * u).exp());
        let x = if t < 0.0 { a + left } else { b - right };
        if x <= a || x >= b {
            continue;
        }
        let w = half * std::f64::consts::FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        if w == 0.0 || !w.is_finite() {
            continue;
        }
        acc += w * f(x);
    }
    acc * h
}

/// Composite tanh-sinh over `pieces` equal subintervals (for long smooth ranges).
pub fn tanh_sinh_split(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| tanh_sinh(&f, a + k as f64 * h, a + (k + 1) as f64 * h))
        .sum()
}

/// Classical RK4 for `y' = f(t, y)` with complex state, `steps` steps on `[0, t_end]`.
pub fn rk4_complex(
    f: impl Fn(f64, num_complex::Complex64) -> num_complex::Complex64,
    y0: num_complex::Complex64,
    t_end: f64,
    steps: usize,
) -> Vec<num_complex::Complex64> {
    let h = t_end / steps as f64;
    let mut y = y0;
    let mut out = vec![y];
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + k1 * (0.5 * h));
        let k3 = f(t + 0.5 * h, y + k2 * (0.5 * h));
        let k4 = f(t + h, y + k3 * h);
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(y);
    }
    out
}
