mod common;

use affvol::conv::{pair_convolve, CellMoments};
use affvol::kernel::CellMeasure;
use affvol::resolvent::{FirstKindResolvent, Provenance, SecondKindResolvent};
use affvol::{Grid, Kernel};
use approx::assert_relative_eq;
use common::tanh_sinh;
use proptest::prelude::*;

const GAMMA_0_6: f64 = 1.489_192_248_812_817;
const GAMMA_1_6: f64 = 0.8935153492876903;
const GAMMA_0_4: f64 = 2.218159543757688;

fn all_kernels() -> Vec<(&'static str, Kernel)> {
    vec![
        ("constant", Kernel::constant(1.7).unwrap()),
        ("fractional 0.6", Kernel::fractional(0.6).unwrap()),
        ("fractional 0.75", Kernel::fractional(0.75).unwrap()),
        ("fractional 1", Kernel::fractional(1.0).unwrap()),
        ("exponential", Kernel::exponential(1.3, 2.1).unwrap()),
        (
            "exponential tiny rate",
            Kernel::exponential(0.8, 1e-7).unwrap(),
        ),
        ("gamma 0.7", Kernel::gamma(0.7, 1.5).unwrap()),
        ("gamma 1", Kernel::gamma(1.0, 0.4).unwrap()),
        (
            "tabulated",
            Kernel::tabulated(vec![0.0, 0.3, 0.55, 1.0], vec![2.0, 1.2, 1.2, 0.4]).unwrap(),
        ),
    ]
}

#[test]
fn kernel_point_values() {
    assert_eq!(Kernel::constant(1.0).unwrap().eval(0.7).unwrap(), 1.0);
    assert_eq!(Kernel::fractional(1.0).unwrap().eval(0.5).unwrap(), 1.0);
    assert_relative_eq!(
        Kernel::fractional(0.6).unwrap().eval(0.25).unwrap(),
        0.25f64.powf(-0.4) / GAMMA_0_6,
        max_relative = 1e-14
    );
}

#[test]
fn cell_weight_examples() {
    let g = Grid::new(1.0, 10).unwrap();
    for w in Kernel::constant(1.0).unwrap().cell_weights(&g) {
        assert_relative_eq!(w, 0.1, max_relative = 1e-12);
    }
    let w = Kernel::fractional(0.6).unwrap().cell_weights(&g);
    assert_relative_eq!(w[0], 0.1f64.powf(0.6) / GAMMA_1_6, max_relative = 1e-13);
    let g2 = Grid::new(1.0, 2).unwrap();
    let w = Kernel::exponential(1.0, 2.0).unwrap().cell_weights(&g2);
    assert_relative_eq!(w[0], (1.0 - (-1.0f64).exp()) / 2.0, max_relative = 1e-14);
}

#[test]
fn shifted_derivative_examples() {
    assert_eq!(
        Kernel::constant(1.0)
            .unwrap()
            .shifted_derivative(0.3, 0.2)
            .unwrap(),
        0.0
    );
    let d = Kernel::fractional(0.6)
        .unwrap()
        .shifted_derivative(0.5, 0.0)
        .unwrap();
    assert_relative_eq!(
        d,
        -0.4 * 0.5f64.powf(-1.4) / GAMMA_0_6,
        max_relative = 1e-13
    );
    let d = Kernel::exponential(1.0, 2.0)
        .unwrap()
        .shifted_derivative(0.25, 0.25)
        .unwrap();
    assert_relative_eq!(d, -2.0 * (-1.0f64).exp(), max_relative = 1e-14);
}

#[test]
fn cell_integrals_match_quadrature() {
    let g = Grid::new(1.0, 16).unwrap();
    for (name, k) in all_kernels() {
        let cells = CellMoments::from_measure(&k, &g);
        for c in 0..g.steps() {
            let (a, b) = (g.node(c), g.node(c + 1));
            // Split at the table knots so the quadrature never straddles a kink.
            let mut cuts = vec![a];
            cuts.extend([0.3, 0.55].into_iter().filter(|x| *x > a && *x < b));
            cuts.push(b);
            let q = |f: &dyn Fn(f64) -> f64| {
                cuts.windows(2)
                    .map(|w| tanh_sinh(f, w[0], w[1]))
                    .sum::<f64>()
            };
            let mass = q(&|s| k.density(s));
            let mom = q(&|s| (s - a) * k.density(s)) / g.step();
            assert_relative_eq!(cells.mass[c], mass, max_relative = 1e-10, epsilon = 1e-14);
            assert!(
                (cells.moment[c] - mom).abs() <= 1e-10 * mom.abs() + 1e-14,
                "{name} cell {c}: {} vs {mom}",
                cells.moment[c]
            );
        }
    }
}

#[test]
fn fractional_convolved_with_one_is_closed_form() {
    let g = Grid::new(1.0, 200).unwrap();
    let c = CellMoments::from_measure(&Kernel::fractional(0.6).unwrap(), &g)
        .convolve(&vec![1.0; g.len()])
        .unwrap();
    for (i, v) in c.iter().enumerate() {
        assert!((v - g.node(i).powf(0.6) / GAMMA_1_6).abs() < 1e-6);
    }
}

#[test]
fn analytic_resolvent_density_and_identity_by_quadrature() {
    let g = Grid::new(1.0, 200).unwrap();
    let k = Kernel::fractional(0.6).unwrap();
    let l = FirstKindResolvent::new(&k, &g).unwrap();
    assert_eq!(l.provenance(), Provenance::Analytic);
    assert_eq!(l.atom(), 0.0);
    assert_relative_eq!(
        l.density(0.3),
        0.3f64.powf(-0.6) / GAMMA_0_4,
        max_relative = 1e-13
    );
    // Beta-function identity: ∫_0^t K(t-s) L(s) ds = B(α, 1-α)/(Γ(α)Γ(1-α)) = 1.
    for t in [0.05, 0.4, 1.0] {
        let v = tanh_sinh(|s| k.density(t - s) * l.density(s), 0.0, t);
        assert!((v - 1.0).abs() < 1e-9, "t = {t}: {v}");
    }
}

#[test]
fn discrete_resolvent_identity_by_quadrature() {
    let g = Grid::new(1.0, 64).unwrap();
    for k in [
        Kernel::exponential(1.0, 1.0).unwrap(),
        Kernel::gamma(0.7, 1.5).unwrap(),
        Kernel::tabulated(vec![0.0, 1.0], vec![2.0, 1.0]).unwrap(),
    ] {
        let l = FirstKindResolvent::new(&k, &g).unwrap();
        assert_eq!(l.provenance(), Provenance::DiscreteDeconvolution);
        assert!(l.residual() <= 1e-8);
        for i in [1, 7, 33, 64] {
            let t = g.node(i);
            let mut v = l.atom() * k.density(t);
            for c in 0..i {
                v += tanh_sinh(
                    |s| k.density(t - s) * l.density(s),
                    g.node(c),
                    g.node(c + 1),
                );
            }
            assert!((v - 1.0).abs() < 1e-7, "{k:?} t = {t}: {v}");
        }
    }
}

#[test]
fn exponential_resolvent_matches_closed_form() {
    // K = k0 e^{-ρt}: L = δ/k0 + (ρ/k0) dt.
    let g = Grid::new(1.0, 100).unwrap();
    let l = FirstKindResolvent::new(&Kernel::exponential(2.0, 3.0).unwrap(), &g).unwrap();
    assert_relative_eq!(l.atom(), 0.5, max_relative = 1e-12);
    assert_relative_eq!(l.total_mass(1.0), 0.5 + 1.5, max_relative = 1e-8);
}

#[test]
fn fractional_resolvent_refines_in_l2() {
    for alpha in [0.6, 0.75] {
        let k = Kernel::fractional(alpha).unwrap();
        let l2 = |n: usize| {
            let g = Grid::new(1.0, n).unwrap();
            let r = FirstKindResolvent::new(&k, &g)
                .unwrap()
                .identity_residuals(&k);
            (r.iter().map(|v| v * v).sum::<f64>() * g.step()).sqrt()
        };
        let e: Vec<f64> = [250, 500, 1000].iter().map(|n| l2(*n)).collect();
        assert!(e[1] < e[0] && e[2] < e[1], "{e:?}");
    }
}

#[test]
fn second_kind_unit_kernel_closed_form() {
    let g = Grid::new(1.0, 1000).unwrap();
    let k = Kernel::constant(1.0).unwrap();
    for b in [-0.3, 0.5] {
        let r = SecondKindResolvent::new(&k, b, &g).unwrap();
        let (e, rb) = (r.canonical(), r.resolvent());
        for i in 0..g.len() {
            let t = g.node(i);
            assert!((e[i] - (b * t).exp()).abs() < 1e-6);
            assert!((rb[i] + b * (b * t).exp()).abs() < 1e-6);
        }
    }
}

#[test]
fn pair_convolution_of_power_laws_is_beta_function() {
    // K_{0.6} ∗ K_{0.75} = K_{1.35}: t^{0.35}/Γ(1.35).
    let a = Kernel::fractional(0.6).unwrap();
    let b = Kernel::fractional(0.75).unwrap();
    let t: f64 = 0.8;
    let exact = tanh_sinh(|s| a.density(t - s) * b.density(s), 0.0, t);
    assert!((pair_convolve(&a, &b, t, 64) - exact).abs() < 1e-4);
}

fn smooth(c: [f64; 3]) -> impl Fn(f64) -> f64 {
    move |t| c[0] + c[1] * (c[2] * t).sin()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cell_weights_nonnegative_nonincreasing(kind in 0usize..4, alpha in 0.51f64..=1.0, rate in 0.0f64..5.0, k0 in 0.0f64..3.0, n in 2usize..300) {
        let k = match kind {
            0 => Kernel::constant(k0).unwrap(),
            1 => Kernel::fractional(alpha).unwrap(),
            2 => Kernel::exponential(k0, rate).unwrap(),
            _ => Kernel::gamma(alpha, rate).unwrap(),
        };
        let w = k.cell_weights(&Grid::new(1.0, n).unwrap());
        let scale = w.iter().fold(0.0f64, |m, v| m.max(*v));
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!(w.windows(2).all(|p| p[1] <= p[0] + 1e-12 * scale));
    }

    #[test]
    fn sample_convolution_is_associative(a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0), c in prop::array::uniform3(-1.0f64..1.0)) {
        let g = Grid::new(1.0, 200).unwrap();
        let s = |f: &dyn Fn(f64) -> f64| g.nodes().iter().map(|t| f(*t)).collect::<Vec<f64>>();
        let (fa, fb, fc) = (s(&smooth(a)), s(&smooth(b)), s(&smooth(c)));
        let conv = |x: &[f64], y: &[f64]| affvol::conv::convolve_samples(x, y, &g).unwrap();
        let left = conv(&conv(&fa, &fb), &fc);
        let right = conv(&fa, &conv(&fb, &fc));
        for (l, r) in left.iter().zip(&right) {
            prop_assert!((l - r).abs() < 1e-5, "{l} vs {r}");
        }
    }

    #[test]
    fn kernel_convolution_is_associative_with_smooth_functions(alpha in 0.55f64..=1.0, a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0)) {
        // (K∗a)∗b = K∗(a∗b).
        let g = Grid::new(1.0, 400).unwrap();
        let k = CellMoments::from_measure(&Kernel::fractional(alpha).unwrap(), &g);
        let s = |f: &dyn Fn(f64) -> f64| g.nodes().iter().map(|t| f(*t)).collect::<Vec<f64>>();
        let (fa, fb) = (s(&smooth(a)), s(&smooth(b)));
        let left = affvol::conv::convolve_samples(&k.convolve(&fa).unwrap(), &fb, &g).unwrap();
        let right = k.convolve(&affvol::conv::convolve_samples(&fa, &fb, &g).unwrap()).unwrap();
        for (l, r) in left.iter().zip(&right) {
            prop_assert!((l - r).abs() < 1e-3, "{l} vs {r}");
        }
    }
}
