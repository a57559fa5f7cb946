use affvol::conv::default_pieces;
use affvol::model::InputCurve;
use affvol::pastform::{bound_constant, compute_pi_tilde, past_formulas, pi_tilde_by_definition};
use affvol::resolvent::FirstKindResolvent;
use affvol::riccati::{RiccatiSolution, SolverConfig};
use affvol::simulate::{past_check, McSettings};
use affvol::{Complex64, Grid, Kernel, LevyMeasure, ModelSpec, TestFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn acceptance_model(kernel: Kernel) -> ModelSpec {
    let g0 = InputCurve::ConstantPlusKTheta {
        x0: 0.3,
        theta: affvol::Theta::Constant(0.1),
    };
    ModelSpec::new(
        kernel,
        -0.3,
        0.09,
        LevyMeasure::exponential(0.5, 10.0).unwrap(),
        g0,
    )
    .unwrap()
}

fn flat_model(kernel: Kernel) -> ModelSpec {
    ModelSpec::new(
        kernel,
        -0.3,
        0.09,
        LevyMeasure::exponential(0.5, 10.0).unwrap(),
        InputCurve::constant(0.3).unwrap(),
    )
    .unwrap()
}

fn settings(paths: usize, checkpoints: Vec<usize>) -> McSettings {
    McSettings {
        paths,
        seed: 5,
        checkpoints,
        workers: None,
        solver: SolverConfig::default(),
    }
}

#[test]
fn zero_f_gives_zero_pi_and_zero_v() {
    let g = Grid::new(1.0, 80).unwrap();
    let m = acceptance_model(Kernel::fractional(0.6).unwrap());
    let sol =
        RiccatiSolution::solve(&m, &TestFunction::zero(), &g, &SolverConfig::default()).unwrap();
    let (_, p) = past_formulas(&m, &sol, &[20, 40, 60]).unwrap();
    let x: Vec<f64> = (0..g.len()).map(|i| 0.3 + 0.1 * (i as f64).sin()).collect();
    for f in &p.complex {
        assert!(f.pi.values.iter().all(|v| v.norm() == 0.0));
        assert_eq!(f.evaluate(&x, &m.g0_samples(&g)), Complex64::new(0.0, 0.0));
    }
}

#[test]
fn unit_kernel_pi_is_constant_psi() {
    let g = Grid::new(1.0, 100).unwrap();
    let m = flat_model(Kernel::constant(1.0).unwrap());
    let sol = RiccatiSolution::solve(
        &m,
        &TestFunction::imaginary(1.3).unwrap(),
        &g,
        &SolverConfig::default(),
    )
    .unwrap();
    let l = FirstKindResolvent::new(&m.kernel, &g).unwrap();
    for lag in [1, 37, 60] {
        let pi =
            compute_pi_tilde(&sol.psi, &sol.f_psi, &l, &l.cells(), lag, g.steps() - lag).unwrap();
        assert!(pi.values.iter().all(|v| (v - sol.psi[lag]).norm() < 1e-12));
        assert!(pi.increments.iter().all(|d| d.norm() < 1e-12));
    }
}

#[test]
fn pi_tilde_routes_agree_at_random_points() {
    let g = Grid::new(1.0, 200).unwrap();
    let m = acceptance_model(Kernel::fractional(0.6).unwrap());
    let sol = RiccatiSolution::solve(
        &m,
        &TestFunction::imaginary(1.0).unwrap(),
        &g,
        &SolverConfig::default(),
    )
    .unwrap();
    let l = FirstKindResolvent::new(&m.kernel, &g).unwrap();
    let cells = l.cells();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..5 {
        let lag = rng.random_range(1..g.steps());
        let r = rng.random_range(1..=g.steps() - lag);
        let pi = compute_pi_tilde(&sol.psi, &sol.f_psi, &l, &cells, lag, r).unwrap();
        let direct = pi_tilde_by_definition(
            &sol.f_psi,
            &m.kernel,
            &l,
            &g,
            lag,
            g.node(r),
            default_pieces(r),
        );
        assert!(
            (pi.values[r] - direct).norm() < 1e-3,
            "h = {lag}, r = {r}: {} vs {direct}",
            pi.values[r]
        );
    }
}

#[test]
fn bound_constant_examples() {
    let g = Grid::new(1.0, 100).unwrap();
    let m = acceptance_model(Kernel::fractional(0.6).unwrap());
    let l = FirstKindResolvent::new(&m.kernel, &g).unwrap();
    let real = RiccatiSolution::solve(
        &m,
        &TestFunction::constant(Complex64::new(-0.7, 0.0)).unwrap(),
        &g,
        &SolverConfig::default(),
    )
    .unwrap();
    let b = bound_constant(&real, &m.g0_samples(&g), &l);
    assert_eq!((b.c1, b.c2, b.c3, b.c), (0.0, 0.0, 0.0, 1.0));
    let imag = RiccatiSolution::solve(
        &m,
        &TestFunction::imaginary(1.0).unwrap(),
        &g,
        &SolverConfig::default(),
    )
    .unwrap();
    let b = bound_constant(&imag, &vec![0.0; g.len()], &l);
    assert_eq!((b.c1, b.c2), (0.0, 0.0));
    let b = bound_constant(&imag, &m.g0_samples(&g), &l);
    assert!(b.c.is_finite() && b.c >= 1.0);
}

#[test]
fn unit_kernel_past_formula_is_classical() {
    let g = Grid::new(1.0, 120).unwrap();
    let m = flat_model(Kernel::constant(1.0).unwrap());
    let r = past_check(
        &m,
        &g,
        &TestFunction::imaginary(1.0).unwrap(),
        &settings(200, vec![30, 60, 90]),
    )
    .unwrap();
    assert!(r.classical_gap.unwrap() <= 1e-8);
    assert!(r.max_two_formula_gap <= 1e-8);
}

#[test]
fn past_and_forward_agree_and_bound_holds_on_fractional_model() {
    let g = Grid::new(1.0, 200).unwrap();
    let m = acceptance_model(Kernel::fractional(0.6).unwrap());
    let r = past_check(
        &m,
        &g,
        &TestFunction::imaginary(1.0).unwrap(),
        &settings(300, vec![50, 100, 150]),
    )
    .unwrap();
    assert!(r.max_two_formula_gap <= 1e-2, "{}", r.max_two_formula_gap);
    assert!(r.max_log_excess <= 1e-8f64.ln_1p());
    assert!(r.gap_monotonicity_violation <= 1e-8);
    assert!(r.classical_gap.is_none());
}

#[test]
fn real_f_bound_is_tight_with_unit_constant() {
    let g = Grid::new(1.0, 100).unwrap();
    let m = acceptance_model(Kernel::gamma(0.8, 1.0).unwrap());
    let r = past_check(
        &m,
        &g,
        &TestFunction::constant(Complex64::new(-0.5, 0.0)).unwrap(),
        &settings(50, vec![25, 50, 75]),
    )
    .unwrap();
    assert_eq!(r.bound.c, 1.0);
    for row in &r.rows {
        assert_eq!(row.v_past.re, row.v_bar);
    }
}
