use std::f64::consts::PI;

use deltashell::model::{
    coefficient_a, coefficient_b, denominator, denominator_derivative, initial_overlap, spectral_weight,
};
use deltashell::poles::{
    argument_principle_count, find_poles, isolation_rectangle, residue_amplitude, Rectangle, SeedStrategy,
};
use deltashell::{InitialState, ModelParams, C64};
use proptest::prelude::*;

fn params(lambda: f64) -> ModelParams {
    ModelParams::new(lambda).unwrap()
}

fn close(a: C64, b: C64, rel: f64) -> bool {
    (a - b).norm() <= rel * a.norm().max(b.norm()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reflection_amplitude_is_unimodular(lambda in 0.0..50.0f64, k in 1e-3..200.0f64) {
        let b = coefficient_b(k, &params(lambda)).unwrap();
        prop_assert!((b.norm() - 1.0).abs() < 1e-12, "|B| = {}", b.norm());
    }

    #[test]
    fn interior_amplitude_squared_is_the_weight(lambda in 0.0..50.0f64, k in 1e-3..200.0f64) {
        let p = params(lambda);
        let a2 = coefficient_a(k, &p).unwrap().norm_sqr();
        let w = spectral_weight(C64::new(k, 0.0), &p).unwrap();
        prop_assert!(w.im.abs() <= 1e-12 * w.re.abs().max(1.0));
        prop_assert!((a2 - w.re).abs() <= 1e-10 * a2.max(1e-12), "|A|^2 = {a2}, W = {}", w.re);
    }

    #[test]
    fn derivative_matches_finite_differences(
        lambda in 0.1..20.0f64,
        re in 0.1..30.0f64,
        im in -1.5..1.5f64,
    ) {
        let p = params(lambda);
        let k = C64::new(re, im);
        let h = 1e-5;
        let fd = (denominator(k + h, &p) - denominator(k - h, &p)) / (2.0 * h);
        let fd_im = (denominator(k + C64::new(0.0, h), &p) - denominator(k - C64::new(0.0, h), &p))
            / C64::new(0.0, 2.0 * h);
        let d = denominator_derivative(k, &p);
        prop_assert!(close(d, fd, 1e-7), "D' = {d}, fd = {fd}");
        prop_assert!(close(d, fd_im, 1e-7), "analytic: D' = {d}, fd = {fd_im}");
    }

    #[test]
    fn overlap_matches_quadrature(
        n in 1u32..6,
        re in 0.05..40.0f64,
        im in -2.0..0.5f64,
    ) {
        let p = params(1.0);
        let state = InitialState::new(n).unwrap();
        let k = C64::new(re, im);
        // composite Simpson with 4000 intervals
        let m = 4000;
        let h = 1.0 / m as f64;
        let mut sum = C64::new(0.0, 0.0);
        for j in 0..=m {
            let x = j as f64 * h;
            let w = if j == 0 || j == m { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * state.value(x, &p) * (k * x).sin();
        }
        let quad = sum * h / 3.0;
        let exact = initial_overlap(k, &state, &p);
        prop_assert!((exact - quad).norm() <= 1e-9 * (1.0 + quad.norm()), "closed {exact}, quadrature {quad}");
    }

    #[test]
    fn residue_matches_contour_integral(
        lambda in 0.5..12.0f64,
        index in 0usize..5,
        n in 1u32..5,
        x in 0.0..1.0f64,
    ) {
        let p = params(lambda);
        let state = InitialState::new(n).unwrap();
        let pole = find_poles(&p, 5, SeedStrategy::default()).unwrap()[index];
        let k0 = pole.momentum.as_complex();
        let r = 0.5 * (-k0.im).min(0.5);
        let g = |k: C64| initial_overlap(k, &state, &p) * spectral_weight(k, &p).unwrap() * (k * x).sin();
        // periodic trapezoid on the circle, 256 nodes
        let m = 256;
        let mut sum = C64::new(0.0, 0.0);
        for j in 0..m {
            let e = C64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64);
            sum += g(k0 + r * e) * r * e;
        }
        let res = sum / m as f64;
        let c = residue_amplitude(&pole, x, &state, &p).unwrap();
        // C = -2πi Res f with f = φ W sin(kx) / (2π)
        let expected = C64::new(0.0, 1.0) * c;
        prop_assert!((res - expected).norm() <= 1e-9 * (1.0 + expected.norm()), "contour {res}, residue {expected}");
    }

    #[test]
    fn every_pole_is_isolated(lambda in 0.2..30.0f64) {
        let poles = find_poles(&params(lambda), 8, SeedStrategy::default()).unwrap();
        for pole in &poles {
            let z = pole.momentum.as_complex();
            prop_assert!(pole.momentum.is_fourth_quadrant());
            let count = argument_principle_count(lambda, &isolation_rectangle(pole.index, z)).unwrap();
            prop_assert_eq!(count, 1, "pole {} at {}", pole.index, z);
        }
    }
}

#[test]
fn zero_free_regions_count_zero() {
    // the upper half plane holds no zeros of D
    let rect = Rectangle {
        re_min: 0.25 * PI,
        re_max: 20.0,
        im_min: 0.1,
        im_max: 3.0,
    };
    for lambda in [0.3, 1.0, 8.0] {
        assert_eq!(argument_principle_count(lambda, &rect).unwrap(), 0);
    }
}

#[test]
fn units_only_rescale_poles() {
    let unit = find_poles(&params(3.6), 4, SeedStrategy::default()).unwrap();
    let scaled_params = ModelParams::with_units(3.6, 2.5, 0.4, 1.7).unwrap();
    let scaled = find_poles(&scaled_params, 4, SeedStrategy::default()).unwrap();
    for (u, s) in unit.iter().zip(&scaled) {
        let zu = u.scaled_momentum(&params(3.6));
        let zs = s.scaled_momentum(&scaled_params);
        assert!((zu - zs).norm() < 1e-12);
        assert!((u.q_value - s.q_value).abs() < 1e-12);
        assert!((u.lifetime_over_tau0 - s.lifetime_over_tau0).abs() < 1e-12 * u.lifetime_over_tau0);
    }
}
