use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use wavepath::diagnostics::{estimate_cylinder, theorem_diagnose, DiagnosisLabel};
use wavepath::gallery;
use wavepath::path_measure::{
    atom_f, cylinder_prob, mass_nkz, mass_nkz_direct, mass_z, partial_products,
};
use wavepath::scaling_engine::{
    cascade, frame_energy_ratio, norm_phi_sq, phi_hat, wavelet_coeffs, SampledFunction,
};
use wavepath::transfer_operator::apply_rn;
use wavepath::{DigitWord, FilterSpec, PathSystem, TruncationPolicy};

fn dyadic() -> PathSystem {
    PathSystem::dyadic()
}

fn policy() -> TruncationPolicy {
    TruncationPolicy::default()
}

fn low_pass() -> [FilterSpec; 3] {
    [gallery::haar(), gallery::d4(), gallery::stretched_haar()]
}

/// `psi = (1/3)(-chi_[-1, 1/2) + chi_[1/2, 2))`.
fn stretched_psi() -> SampledFunction {
    let third = 1.0 / 3.0;
    let samples = [-third, -third, -third, third, third, third]
        .map(|v| Complex64::new(v, 0.0))
        .to_vec();
    SampledFunction::new(-1.0, 0.5, samples).unwrap()
}

/// `sum_j c_j phi(t - j)` with `phi = (1/3) chi_[0, 3)`, so the value on
/// `[t, t + 1)` is `(c_t + c_{t-1} + c_{t-2}) / 3`.
fn translate_combination(c: &[f64], j0: i64) -> SampledFunction {
    let len = c.len() + 2;
    let coef = |i: i64| if (0..c.len() as i64).contains(&i) { c[i as usize] } else { 0.0 };
    let samples = (0..len as i64)
        .map(|t| Complex64::new((coef(t) + coef(t - 1) + coef(t - 2)) / 3.0, 0.0))
        .collect();
    SampledFunction::new(j0 as f64, 1.0, samples).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stretched_haar_frame_recovers_energy(m in 8usize..=16, reps in 2usize..=3, phase in 0.0f64..(2.0 * PI)) {
        let l = m * reps;
        let j0 = -(l as i64 / 2);
        let c: Vec<f64> = (0..l)
            .map(|i| {
                let j = j0 + i as i64;
                (2.0 * PI * j as f64 / m as f64 + phase).sin() * (PI * (i as f64 + 0.5) / l as f64).sin().powi(2)
            })
            .collect();
        let f = translate_combination(&c, j0);
        let ratio = frame_energy_ratio(&stretched_psi(), &f, 6, 64);
        prop_assert!((0.99..=1.0 + 1e-9).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn nkz_factorization(x in -3.0f64..3.0, k in 1u32..=20, which in 0usize..2) {
        let spec = [gallery::haar(), gallery::d4()][which].clone();
        let s = dyadic();
        let p = partial_products(&spec, &s, x, k as usize)[k as usize - 1];
        let h = mass_z(&spec, &s, x / 2f64.powi(k as i32), &policy()).value;
        let product_route = mass_nkz(&spec, &s, x, k, &policy()).value;
        prop_assert!((p * h - product_route).abs() <= 1e-6);
        let direct = mass_nkz_direct(&spec, &s, x, k, &policy()).value;
        prop_assert!((product_route - direct).abs() <= 1e-6, "{product_route} vs {direct}");
    }

    #[test]
    fn atom_is_phi_hat_modulus(x in -6.0f64..6.0, which in 0usize..3) {
        let spec = low_pass()[which].clone();
        let s = dyadic();
        let a = atom_f(&spec, &s, x, &policy()).value;
        let ph = phi_hat(&spec, &s, x, &policy()).unwrap().value.norm_sqr();
        prop_assert!((a - ph).abs() <= 1e-10);
    }

    #[test]
    fn transfer_powers_are_walk_expectations(x in 0.0f64..1.0, n in 1usize..=6, which in 0usize..3) {
        // R^n g(x) = sum over words w of length n of P_x(A(w)) g(tau_w x)
        let spec = low_pass()[which].clone();
        let s = dyadic();
        let g = |y: f64| (2.0 * PI * y).cos() + y;
        let rn = apply_rn(&spec, &s, g, x, n).unwrap();
        let walk: f64 = (0..1usize << n)
            .map(|idx| {
                let word = DigitWord::new((0..n).map(|b| (idx >> b) & 1).collect(), 2).unwrap();
                cylinder_prob(&spec, &s, x, &word).unwrap() * g(s.tau_compose(&word, x).unwrap())
            })
            .sum();
        prop_assert!((rn - walk).abs() <= 1e-12, "{rn} vs {walk}");
        prop_assert!((apply_rn(&spec, &s, |_| 1.0, x, n).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn wavelet_energy_is_conserved(values in prop::collection::vec(-1.0f64..1.0, 64), levels in 1usize..=4) {
        let signal: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let energy: f64 = values.iter().map(|v| v * v).sum();
        let c = wavelet_coeffs(&gallery::d4(), &signal, levels).unwrap();
        prop_assert!((c.energy() - energy).abs() <= 1e-10);
    }
}

#[test]
fn theorem_consistency_over_the_gallery() {
    let s = dyadic();
    for spec in gallery::all() {
        let mut labels = Vec::new();
        for i in 0..12 {
            let x = -2.9 + 0.47 * i as f64;
            let r = theorem_diagnose(&spec, &s, x, 24, &policy()).unwrap();
            assert_ne!(r.label, DiagnosisLabel::Inconsistent, "{} x={x}", spec.label());
            labels.push(r.label);
        }
        if spec.label() == "highpass_haar" {
            assert!(labels.iter().all(|&l| l == DiagnosisLabel::HypothesisNotMet));
        }
    }
}

#[test]
fn shannon_walk_is_deterministic_toward_the_nearest_end() {
    // W is the indicator of |x| < 1/4 on the circle: each step has one choice
    let sh = gallery::shannon();
    let s = dyadic();
    let est = estimate_cylinder(&sh, &s, 0.1, &DigitWord::new(vec![0, 0, 0], 2).unwrap(), 1000, 1).unwrap();
    assert_eq!(est.estimate, 1.0);
    assert_eq!(atom_f(&sh, &s, 0.4, &policy()).value, 1.0);
    assert_eq!(atom_f(&sh, &s, 0.6, &policy()).value, 0.0);
}

#[test]
fn norms_agree_between_quadrature_and_cascade() {
    let s = dyadic();
    for spec in [gallery::haar(), gallery::d4()] {
        let q = norm_phi_sq(&spec, &s, &policy(), 6).unwrap();
        let c = cascade(&spec, &s, 10, 8).unwrap().norm_sq();
        assert!((q - c).abs() < 1e-4, "{} {q} {c}", spec.label());
    }
}
