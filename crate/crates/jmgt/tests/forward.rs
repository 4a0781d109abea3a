use jmgt::forward::*;
use jmgt::spectral::*;
use jmgt::Error;
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn basis() -> EigenBasis {
    build_interval_basis(PI, [1.0, 1.0], 8, vec![0.0]).unwrap()
}

fn random_field(rng: &mut ChaCha8Rng, m: usize, j: usize, decay: f64) -> HarmonicField {
    let mut u = HarmonicField::zeros(m, j);
    for h in 1..=m {
        for l in 0..j {
            let s = 1.0 / ((h as f64).powf(decay) * (1.0 + l as f64).powf(decay));
            u.set(h, l, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * s);
        }
    }
    u
}

#[test]
fn symbol_values() {
    let p = ModelParams::new(0.0, 0.0, 1.0, 1.0, PI, 2.0);
    assert!(harmonic_symbol(&p, 1, 1.0).norm() < 1e-15);
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, PI, 2.0);
    let s = harmonic_symbol(&p, 1, 2.0);
    assert!((s - c(-1.0, -1.0)).norm() < 1e-14);
    // independent route: (ϑ(o) + Θ(o)λ)/o² with ϑ = τo³ + σ⁰o², Θ = 1 + βo
    let o = c(0.0, 1.0);
    let d = o * o * o + o * o + (1.0 + o) * 2.0;
    assert!((s - d / (o * o)).norm() < 1e-14);
    let p = ModelParams::new(0.3, 0.7, 1.4, 1.3, 1.0, 2.0);
    for m in 1..6 {
        let want = c(1.4, 0.3 * m as f64 * 1.3);
        assert!((harmonic_symbol(&p, m, 0.0) - want).norm() < 1e-13);
    }
}

#[test]
fn params_validation() {
    let ok = ModelParams::new(0.5, 1.0, 1.0, 1.0, PI, 2.0);
    assert!(ok.violations().is_empty());
    let bad = ModelParams::new(2.0, 1.0, 1.0, 1.0, PI, 2.0);
    assert!(bad.violations().iter().any(|v| v.contains("stability requirement")));
    let mut off = ok;
    off.period = 6.0;
    assert!(!off.violations().is_empty());
    let single = ModelParams::new(0.5, 1.0, 1.0, 1.0, PI, 1.0);
    assert!(!single.violations().is_empty());
}

#[test]
fn bm_single_harmonic_square() {
    let b = basis();
    let cc = c(0.7, -0.2);
    let mut u = HarmonicField::zeros(4, b.len());
    u.set(1, 1, cc);
    let phi_sq: Vec<f64> = b.nodes.iter().map(|p| b.eval(1, *p).powi(2)).collect();
    let proj = b.project(&phi_sq).unwrap();
    let b2 = convolve_bm(&u, &u, 2, &b).unwrap();
    for j in 0..b.len() {
        assert!((b2[j] - 0.5 * cc * cc * proj[j]).norm() < 1e-13);
    }
    assert!(convolve_bm(&u, &u, 1, &b).unwrap().camax() < 1e-15);
    assert!(convolve_bm(&u, &u, 3, &b).unwrap().camax() < 1e-15);
}

#[test]
fn bm_two_harmonics_hand_expansion() {
    let b = basis();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut u = HarmonicField::zeros(5, b.len());
    for l in 0..b.len() {
        u.set(1, l, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        u.set(2, l, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    let g1 = b.synthesize_complex(&u.harmonic(1));
    let g2 = b.synthesize_complex(&u.harmonic(2));
    let prod: Vec<Complex64> = g1.iter().zip(&g2).map(|(x, y)| x * y).collect();
    let want = b.project_complex(&prod).unwrap();
    let got = convolve_bm(&u, &u, 3, &b).unwrap();
    assert!((got - want).camax() < 1e-12);
    // B_1 = ½(conj(û₁)û₂ + û₂ conj(û₁))
    let prod: Vec<Complex64> = g1.iter().zip(&g2).map(|(x, y)| x.conj() * y).collect();
    let want = b.project_complex(&prod).unwrap();
    assert!((convolve_bm(&u, &u, 1, &b).unwrap() - want).camax() < 1e-12);
}

#[test]
fn bm_matches_time_domain_product() {
    // The m-th coefficient of the real product Re(Σû e^{imωt})·Re(Σv̂ e^{imωt}),
    // computed by sampling in time, equals B_m(u, v) up to the harmonics that
    // fall outside the truncation; with û, v̂ supported on m ≤ M/2 there are none.
    let b = basis();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mm, omega) = (8, 1.3);
    let mut u = random_field(&mut rng, mm, b.len(), 1.0);
    let mut v = random_field(&mut rng, mm, b.len(), 1.0);
    for h in 5..=mm {
        for l in 0..b.len() {
            u.set(h, l, c(0.0, 0.0));
            v.set(h, l, c(0.0, 0.0));
        }
    }
    let nt = 64;
    let q = 3;
    let x = b.nodes[q];
    let at = |w: &HarmonicField, h: usize| -> Complex64 { (0..b.len()).map(|l| w.get(h, l) * b.eval(l, x)).sum() };
    for m in 1..=mm {
        let mut coef = c(0.0, 0.0);
        for n in 0..nt {
            let t = n as f64 * 2.0 * PI / omega / nt as f64;
            let ut = synthesize_time(&(1..=mm).map(|h| at(&u, h)).collect::<Vec<_>>(), omega, t);
            let vt = synthesize_time(&(1..=mm).map(|h| at(&v, h)).collect::<Vec<_>>(), omega, t);
            coef += Complex64::from_polar(2.0 / nt as f64, -(m as f64) * omega * t) * ut * vt;
        }
        let ug = to_grid(&u, &b);
        let vg = to_grid(&v, &b);
        let bm = bm_on_grid(&ug, &vg, m)[q];
        assert!((coef - bm).norm() < 1e-12, "m = {m}: {coef} vs {bm}");
    }
}

#[test]
fn bm_rejects_mismatched_fields() {
    let b = basis();
    let u = HarmonicField::zeros(4, b.len());
    let v = HarmonicField::zeros(5, b.len());
    assert!(matches!(convolve_bm(&u, &v, 1, &b), Err(Error::BasisMismatch(_))));
}

#[test]
fn linear_solve() {
    let b = basis();
    let p = ModelParams::new(0.5, 1.0, 1.0, 1.0, PI, 2.0);
    let zero = HarmonicField::zeros(6, b.len());
    assert_eq!(solve_linear_harmonics(&p, &b, &zero).unwrap(), zero);
    let mut e = HarmonicField::zeros(6, b.len());
    e.set(1, 3, c(1.0, 0.0));
    let u = solve_linear_harmonics(&p, &b, &e).unwrap();
    assert!((u.get(1, 3) - 1.0 / harmonic_symbol(&p, 1, b.lambdas[3])).norm() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = random_field(&mut rng, 6, b.len(), 0.0);
    let u = solve_linear_harmonics(&p, &b, &r).unwrap();
    assert!(apply_lm(&p, &b, &u).sub(&r).max_abs() < 1e-12);
}

#[test]
fn resonance_is_reported() {
    // undamped, τ = 0: symbol vanishes when m²ω²σ⁰ = λ
    let b = build_interval_basis(PI, [0.0, 0.0], 4, vec![0.0]).unwrap();
    let p = ModelParams::new(0.0, 0.0, 1.0, 1.0, PI, 2.0);
    let mut r = HarmonicField::zeros(3, 4);
    r.set(1, 0, c(1.0, 0.0));
    let err = solve_linear_harmonics(&p, &b, &r).unwrap_err();
    assert!(matches!(err, Error::Resonance { m: 1, j: 1, .. }), "{err:?}");
}

#[test]
fn nonlinear_solver_reduces_to_diagonal_solve() {
    let b = basis();
    let p = ModelParams::new(0.5, 1.0, 1.0, 1.0, PI, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = random_field(&mut rng, 8, b.len(), 1.0);
    let s = MaterialField::constant(&b, 1.0);
    let e = MaterialField::constant(&b, 0.0);
    let (u, rep) = solve_multiharmonic(&p, &b, &s, &e, &r, SolveOptions::default()).unwrap();
    let d = solve_linear_harmonics(&p, &b, &r).unwrap();
    assert!(u.sub(&d).max_abs() <= 1e-14);
    assert_eq!(rep.iterations, 0);
}

#[test]
fn nonlinear_residual_independent_check() {
    let b = basis();
    let p = ModelParams::new(0.5, 1.0, 1.0, 1.0, PI, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = random_field(&mut rng, 8, b.len(), 2.0);
    let s = MaterialField::from_fn(&b, |x| 1.0 + 0.1 * (x[0]).sin());
    let e = MaterialField::from_fn(&b, |x| 0.05 * (1.0 + x[0]).cos());
    let (u, rep) = solve_multiharmonic(&p, &b, &s, &e, &r, SolveOptions::default()).unwrap();
    assert!(rep.residual <= 1e-12 * r.max_harmonic_norm().max(1.0));
    let independent = residual_time_domain(&p, &b, &s, &e, &u, &r).unwrap();
    assert!(independent <= 1e-10, "time-domain residual {independent}");
    let direct = model_operator(&p, &b, &s, &e, &u).unwrap().sub(&r).max_harmonic_norm();
    assert!(direct <= 1e-12);
}

#[test]
fn second_harmonic_linear_in_eta() {
    let b = basis();
    let p = ModelParams::new(0.5, 1.0, 1.0, 1.0, PI, 2.0);
    let mut r = HarmonicField::zeros(6, b.len());
    r.set(1, 0, c(1.0, 0.0));
    let s = MaterialField::constant(&b, 1.0);
    let solve = |eta: f64| {
        let e = MaterialField::constant(&b, eta);
        solve_multiharmonic(&p, &b, &s, &e, &r, SolveOptions::default()).unwrap().0
    };
    let u1 = solve(1e-3);
    let u2 = solve(2e-3);
    let n = |u: &HarmonicField| u.harmonic(2).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    assert!(n(&u1) > 0.0);
    assert!((n(&u2) / n(&u1) - 2.0).abs() < 1e-3);
}

#[test]
fn nonconvergence_is_reported() {
    let b = basis();
    let p = ModelParams::new(0.5, 1.0, 1.0, 1.0, PI, 2.0);
    let mut r = HarmonicField::zeros(6, b.len());
    r.set(1, 0, c(50.0, 0.0));
    let s = MaterialField::constant(&b, 1.0);
    let e = MaterialField::constant(&b, 5.0);
    let opts = SolveOptions { max_iter: 30, ..SolveOptions::default() };
    assert!(matches!(solve_multiharmonic(&p, &b, &s, &e, &r, opts), Err(Error::NonConvergence { .. })));
}

#[test]
fn observations() {
    let b = build_interval_basis(PI, [1.0, 1.0], 6, vec![0.0, 1.0]).unwrap();
    let zero = HarmonicField::zeros(3, 6);
    assert!(observe(&zero, &b).values.iter().all(|z| z.norm() == 0.0));
    let mut e = HarmonicField::zeros(3, 6);
    e.set(1, 4, c(1.0, 0.0));
    let o = observe(&e, &b);
    for i in 0..2 {
        assert!((o.values[(0, i)] - b.trace[(i, 4)]).norm() < 1e-15);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = random_field(&mut rng, 3, 6, 0.0);
    let v = random_field(&mut rng, 3, 6, 0.0);
    let lhs = observe(&u.add(&v), &b);
    let rhs = observe(&u, &b).add(&observe(&v, &b));
    assert!((lhs.values - rhs.values).camax() < 1e-14);
}

#[test]
fn material_field_round_trip() {
    let b = basis();
    let mut c = DVector::zeros(b.len());
    c[2] = 0.5;
    let f = MaterialField::from_coeffs(&b, c.clone()).unwrap();
    assert!((&f.coeffs - &c).camax() < 1e-15);
    let g = MaterialField::from_values(&b, f.values.clone()).unwrap();
    assert!((&g.coeffs - &c).camax() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bm_bilinear_and_symmetric(seed in any::<u64>(), a in -2.0f64..2.0, m in 1usize..6) {
        let b = basis();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_field(&mut rng, 6, b.len(), 1.0);
        let v = random_field(&mut rng, 6, b.len(), 1.0);
        let w = random_field(&mut rng, 6, b.len(), 1.0);
        let uv = convolve_bm(&u, &v, m, &b).unwrap();
        let vu = convolve_bm(&v, &u, m, &b).unwrap();
        prop_assert!((&uv - &vu).camax() < 1e-12);
        let lhs = convolve_bm(&u.scale(a).add(&w), &v, m, &b).unwrap();
        let rhs = uv * Complex64::new(a, 0.0) + convolve_bm(&w, &v, m, &b).unwrap();
        prop_assert!((lhs - rhs).camax() < 1e-12);
        let zero = HarmonicField::zeros(6, b.len());
        prop_assert!(convolve_bm(&u, &zero, m, &b).unwrap().camax() == 0.0);
    }

    #[test]
    fn apply_then_solve_round_trip(seed in any::<u64>(), tau in 0.0f64..1.0) {
        let b = basis();
        let p = ModelParams::new(tau, 1.0, 1.0, 1.0, PI, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_field(&mut rng, 5, b.len(), 0.0);
        let back = solve_linear_harmonics(&p, &b, &apply_lm(&p, &b, &u)).unwrap();
        prop_assert!(back.sub(&u).max_abs() < 1e-12);
    }
}
