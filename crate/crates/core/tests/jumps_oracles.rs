mod common;

use affvol::{Complex64, LevyMeasure};
use approx::assert_relative_eq;
use common::tanh_sinh_split;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `∫(e^{uξ} - 1 - uξ) λβe^{-βξ} dξ` by quadrature on `[0, 80/β]`.
fn exponential_transform_quadrature(lambda: f64, beta: f64, u: Complex64) -> Complex64 {
    let g = |xi: f64| ((u * xi).exp() - 1.0 - u * xi) * (lambda * beta * (-beta * xi).exp());
    let end = 80.0 / beta;
    Complex64::new(
        tanh_sinh_split(|x| g(x).re, 0.0, end, 40),
        tanh_sinh_split(|x| g(x).im, 0.0, end, 40),
    )
}

#[test]
fn transform_examples() {
    let e = LevyMeasure::exponential(1.0, 1.0).unwrap();
    assert_relative_eq!(e.transform_real(-1.0).unwrap(), 0.5, max_relative = 1e-15);
    let p = LevyMeasure::point_mass(2.0, 1.0).unwrap();
    assert_relative_eq!(
        p.transform(Complex64::new(-1.0, 0.0)).unwrap().re,
        2.0 * (-1.0f64).exp(),
        max_relative = 1e-15
    );
    assert_relative_eq!(
        p.transform(Complex64::new(-1.0, 0.0)).unwrap().re,
        0.735759,
        epsilon = 1e-6
    );
}

#[test]
fn moment_examples() {
    assert_eq!(
        LevyMeasure::point_mass(2.0, 1.0).unwrap().second_moment(),
        2.0
    );
    assert_relative_eq!(
        LevyMeasure::exponential(1.0, 2.0).unwrap().second_moment(),
        0.5,
        max_relative = 1e-15
    );
    assert_relative_eq!(
        LevyMeasure::tabulated(vec![1.0, 2.0], vec![0.1, 0.2])
            .unwrap()
            .second_moment(),
        0.9,
        max_relative = 1e-15
    );
}

#[test]
fn exponential_transform_matches_quadrature() {
    let nu = LevyMeasure::exponential(0.7, 3.0).unwrap();
    for u in [
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 2.0),
        Complex64::new(-0.5, -4.0),
        Complex64::new(-10.0, 1e-3),
        Complex64::new(-1e-4, 1e-4),
    ] {
        let q = exponential_transform_quadrature(0.7, 3.0, u);
        let v = nu.transform(u).unwrap();
        assert!(
            (v - q).norm() <= 1e-10 * q.norm().max(1e-6),
            "u = {u}: {v} vs {q}"
        );
    }
}

#[test]
fn tabulated_transform_is_weighted_sum() {
    let nu = LevyMeasure::tabulated(vec![0.5, 2.0], vec![0.3, 0.1]).unwrap();
    let u = Complex64::new(-0.4, 1.3);
    let direct: Complex64 = [(0.5, 0.3), (2.0, 0.1)]
        .iter()
        .map(|(xi, w)| ((u * xi).exp() - 1.0 - u * xi) * *w)
        .sum();
    assert!((nu.transform(u).unwrap() - direct).norm() < 1e-14);
}

fn sample_mean(nu: &LevyMeasure, local: f64, draws: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let v = nu.sample_jump_sum(local, &mut rng).unwrap();
        s += v;
        s2 += v * v;
    }
    let n = draws as f64;
    let mean = s / n;
    (mean, ((s2 / n - mean * mean) / n).sqrt())
}

#[test]
fn sampler_means() {
    let (m, se) = sample_mean(&LevyMeasure::point_mass(1.0, 2.0).unwrap(), 0.5, 1_000_000);
    assert!((m - 1.0).abs() <= 3.0 * se, "{m} ± {se}");
    let (m, se) = sample_mean(&LevyMeasure::exponential(2.0, 4.0).unwrap(), 1.0, 1_000_000);
    assert!((m - 0.5).abs() <= 3.0 * se, "{m} ± {se}");
    let (m, se) = sample_mean(&LevyMeasure::exponential(2.0, 4.0).unwrap(), 0.0, 1000);
    assert_eq!((m, se), (0.0, 0.0));
}

fn measure(kind: usize, lambda: f64, beta: f64) -> LevyMeasure {
    match kind {
        0 => LevyMeasure::exponential(lambda, beta).unwrap(),
        1 => LevyMeasure::point_mass(lambda, 1.0 / beta).unwrap(),
        _ => LevyMeasure::tabulated(vec![0.5 / beta, 2.0 / beta], vec![lambda, 0.5 * lambda])
            .unwrap(),
    }
}

proptest! {
    #[test]
    fn real_part_dominated_by_real_axis(kind in 0usize..3, lambda in 0.0f64..5.0, beta in 0.5f64..20.0, re in -50.0f64..=0.0, im in -50.0f64..50.0) {
        // |e^{uξ}| = e^{ℜu ξ} and cos <= 1 give ℜJ(u) <= J(ℜu).
        let nu = measure(kind, lambda, beta);
        let u = Complex64::new(re, im);
        let lhs = nu.transform(u).unwrap().re;
        let rhs = nu.transform_real(re).unwrap();
        prop_assert!(lhs <= rhs + 1e-12 * rhs.abs().max(1.0), "{lhs} > {rhs}");
    }

    #[test]
    fn real_axis_branch_is_bitwise_consistent(kind in 0usize..3, lambda in 0.0f64..5.0, beta in 0.5f64..20.0, x in -50.0f64..=0.0) {
        let nu = measure(kind, lambda, beta);
        prop_assert_eq!(nu.transform(Complex64::new(x, 0.0)).unwrap(), Complex64::new(nu.transform_real(x).unwrap(), 0.0));
    }

    #[test]
    fn transform_is_conjugate_symmetric(kind in 0usize..3, lambda in 0.0f64..5.0, beta in 0.5f64..20.0, re in -20.0f64..=0.0, im in -20.0f64..20.0) {
        let nu = measure(kind, lambda, beta);
        let a = nu.transform(Complex64::new(re, im)).unwrap();
        let b = nu.transform(Complex64::new(re, -im)).unwrap();
        prop_assert!((a - b.conj()).norm() <= 1e-12 * a.norm().max(1.0));
    }
}
