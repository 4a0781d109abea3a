use jmgt::forward::*;
use jmgt::norms::{coeff_norm, ytilde_obs_norm, NormSpec};
use jmgt::poles::{PoleSet, Selection};
use jmgt::quasirev::*;
use jmgt::reconstruct::*;
use jmgt::sources::{amplitude_modulate, design_delta_pulse};
use jmgt::spectral::{build_interval_basis, build_rectangle_basis, EigenBasis, Side};
use jmgt::Error;
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn params(tau: f64) -> ModelParams {
    ModelParams::new(tau, 1.0, 1.0, 1.0, 2.0 * PI, 2.0)
}

fn problem(tau: f64, j: usize, m: usize) -> Problem {
    let basis = build_interval_basis(PI, [1.0, 1.0], j, vec![0.0]).unwrap();
    let params = params(tau);
    let sources = amplitude_modulate(design_delta_pulse(&params, m, 0.1).unwrap(), 2.0).unwrap();
    Problem { params, basis, sources }
}

fn truth(seed: u64, m: usize, j: usize) -> LinearizedInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inp = LinearizedInput::zeros(m, j);
    for l in 0..j {
        inp.a_sigma[l] = rng.gen_range(-1.0..1.0) / (1.0 + l as f64).powi(3);
        inp.a_eta[l] = rng.gen_range(-1.0..1.0) / (1.0 + l as f64).powi(3);
    }
    for nu in 0..2 {
        for h in 1..=m {
            for l in 0..j {
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                inp.du[nu].set(h, l, z / ((1.0 + l as f64).powi(3) * (h as f64).powi(3)));
            }
        }
    }
    inp
}

fn thin_rectangle(j: usize) -> EigenBasis {
    let golden = 1.618_033_988_749_895;
    build_rectangle_basis(PI, PI / (10.0 * golden), [0.0; 4], j, Side::Bottom).unwrap()
}

#[test]
fn critical_tau_limits() {
    let p = params(1.0);
    assert_eq!(p.alpha(), 0.0);
    let t0 = 1.5;
    let cbar = compute_cbar(&p, t0, 0.5, 2.0).unwrap();
    assert!((cbar - 2.0 * ((1.0 / (2.0 * t0)) * 2.0 + 1.0f64).sqrt()).abs() < 1e-14);
    let ct = compute_ctilde(&p, t0, 0.0, 3.0).unwrap();
    assert!((ct - 3.0 / t0.sqrt()).abs() < 1e-14);
    // continuity across α = 0
    let near = compute_cbar(&params(1.0 - 1e-10), t0, 0.5, 2.0).unwrap();
    assert!((near - cbar).abs() < 1e-8);
    assert!(matches!(compute_cbar(&params(0.0), t0, 0.5, 1.0), Err(Error::Invalid(_))));
}

#[test]
fn cbar_decreasing_and_divergent() {
    let t = 2.0 * PI;
    let mut last = f64::INFINITY;
    for k in 1..=10 {
        let c = compute_cbar(&params(0.1 * k as f64), t, 0.5, 1.0).unwrap();
        assert!(c < last);
        last = c;
    }
    // with T₀ = T the exponential factor is 1 and C̄ ~ (α/τ)^{1/2}, C̃ ~ (α/τ)^{1/2}(β/τ)^{σ̌/2}
    let orti = 0.5;
    let limit = 2f64.powf((1.0 + orti) / 2.0);
    let mut ct_prev: f64 = f64::NAN;
    let mut gap_prev = f64::INFINITY;
    for k in 4..=16 {
        let tau = 2f64.powi(-k);
        let c = compute_cbar(&params(tau), t, orti, 1.0).unwrap();
        let ct = compute_ctilde(&params(tau), t, orti, 1.0).unwrap();
        assert!(c * tau.sqrt() < 1.0);
        assert!(ct * tau.powf((1.0 + orti) / 2.0) < 1.0);
        if k > 4 {
            let gap = (ct / ct_prev - limit).abs();
            assert!(k < 10 || gap < gap_prev);
            gap_prev = gap;
        }
        ct_prev = ct;
    }
    assert!(gap_prev < 5e-3);
    assert!(compute_cbar(&params(1e-7), t, orti, 1.0).unwrap() > 1e3);
}

#[test]
fn ctilde_monotone_in_orti() {
    let p = params(0.4);
    let mut last = 0.0;
    for k in 0..=4 {
        let c = compute_ctilde(&p, 3.0, 0.25 * k as f64, 1.0).unwrap();
        assert!(c >= last);
        last = c;
    }
    let tc = tau_constants(&p, 3.0, 0.5, 1.0, 1.0).unwrap();
    assert!((tc.radius - 0.5 / tc.cbar.max(1.0)).abs() < 1e-15);
}

#[test]
fn noise_has_exact_level() {
    let b = build_interval_basis(PI, [1.0, 1.0], 8, vec![0.0]).unwrap();
    let p = problem(0.5, 8, 16);
    let clean = linearized_forward(&p, &truth(1, 16, 8)).obs;
    let zero = add_noise(&clean, 0.0, 3, &b, 1.0, 1.0);
    assert_eq!(zero.obs, clean);
    let a = add_noise(&clean, 1e-3, 3, &b, 1.0, 1.0);
    let c = add_noise(&clean, 1e-3, 4, &b, 1.0, 1.0);
    for n in [&a, &c] {
        for nu in 0..2 {
            let diff = n.obs[nu].sub(&clean[nu]).sub(&observe(&n.noise[nu], &b));
            assert!(diff.values.camax() <= 1e-14 * (1.0 + clean[nu].values.camax()));
            assert!((ytilde_obs_norm(&n.noise[nu], &b, 1.0, 1.0) - 1e-3).abs() <= 1e-10 * 1e-3);
        }
    }
    assert_ne!(a.obs, c.obs);
    assert_eq!(a, add_noise(&clean, 1e-3, 3, &b, 1.0, 1.0));
}

#[test]
fn kappa_nondecreasing() {
    let b = thin_rectangle(16);
    let k: Vec<f64> = (1..=16).map(|l| kappa(&b, l, 1.0)).collect();
    for w in k.windows(2) {
        assert!(w[1] >= w[0] - 1e-12);
    }
    // the trace on the interval endpoint cannot separate two modes
    let i = build_interval_basis(PI, [1.0, 1.0], 4, vec![0.0]).unwrap();
    assert!(kappa(&i, 1, 1.0).is_finite());
    assert!(kappa(&i, 2, 1.0).is_infinite());
}

#[test]
fn smoothing_inverts_on_subspace() {
    let b = thin_rectangle(12);
    let mut c = DVector::zeros(12);
    for l in 0..6 {
        c[l] = 1.0 / (1.0 + l as f64);
    }
    let p: Vec<f64> = (0..b.n_sigma()).map(|i| (0..12).map(|l| c[l] * b.trace[(i, l)]).sum()).collect();
    let (fit, misfit) = trace_fit(&b, 6, &p).unwrap();
    assert!(misfit < 1e-12);
    for l in 0..6 {
        assert!((fit[l] - c[l]).abs() < 1e-12);
    }
    let sm = smooth_data(&b, &p, 0.0, 1.0, 1.5).unwrap();
    assert!((&sm.coeffs - &c).amax() < 1e-10);
    assert!(matches!(smooth_data(&b, &p, 1e9, 0.0, 1.5), Err(Error::SmoothingRejected)));
    assert!(matches!(trace_fit(&b, 3, &[1.0]), Err(Error::GridMismatch { .. })));
}

#[test]
fn smoothing_error_decreases_with_noise() {
    let b = thin_rectangle(16);
    let c = DVector::from_fn(16, |l, _| (if l % 2 == 0 { 1.0 } else { -0.7 }) / (1.0 + l as f64).powi(3));
    let p: Vec<f64> = (0..b.n_sigma()).map(|i| (0..16).map(|l| c[l] * b.trace[(i, l)]).sum()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut last = f64::INFINITY;
    for dt in [1e-2, 1e-3, 1e-4] {
        let n: Vec<f64> = (0..b.n_sigma()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nn = b.sigma_norm(&DVector::from_column_slice(&n));
        let d: Vec<f64> = p.iter().zip(&n).map(|(a, e)| a + e * dt / nn).collect();
        let sm = smooth_data(&b, &d, dt, 1.0, 1.5).unwrap();
        let err = coeff_norm(&(&sm.coeffs - &c), 1.0, &b);
        assert!(err < last, "delta~ {dt}: error {err} not below {last}");
        last = err;
    }
}

#[test]
fn tau_schedule_and_choice() {
    let s = TauSchedule::new(1e-4, 1.0);
    let off = s.offsets();
    assert!((off[0] - 1.0).abs() < 1e-15);
    assert!(off.last().unwrap() >= &1e-4);
    assert!(off.windows(2).all(|w| (w[0] / w[1] - 2f64.powf(0.25)).abs() < 1e-12));
    let p = params(0.5);
    let t = p.period;
    let mut last_tau = f64::INFINITY;
    let mut last_prod = f64::INFINITY;
    let mut delta = 1e-1;
    for _ in 0..30 {
        let tau = choose_tau(delta, 0.0, &p, t, 0.5, &s, 1.0, 1.0).unwrap();
        assert!(tau <= last_tau);
        let q = params(tau);
        let prod = compute_cbar(&q, t, 0.5, 1.0).unwrap().max(compute_ctilde(&q, t, 0.5, 1.0).unwrap()) * delta;
        assert!(prod <= delta.sqrt() * (1.0 + 1e-12) || tau == 1.0);
        assert!(prod < last_prod);
        last_tau = tau;
        last_prod = prod;
        delta /= 2.0;
    }
    assert!(choose_tau(1e-14, 0.0, &p, t, 0.5, &s, 1.0, 1.0).unwrap() < 1e-3);
    let tau = choose_tau(1e-6, 0.3, &p, t * 0.5, 1.0, &s, 1.0, 1.0).unwrap();
    assert!(tau > 0.3);
}

#[test]
fn choose_tau_hypotheses() {
    let p = params(0.5);
    let s = TauSchedule::new(1e-4, 1.0);
    assert!(matches!(choose_tau(1e-3, 0.0, &p, p.period, 1.0, &s, 1.0, 1.0), Err(Error::Hypothesis(_))));
    assert!(matches!(choose_tau(1e-3, 0.0, &p, 0.5 * p.period, 0.5, &s, 1.0, 1.0), Err(Error::Hypothesis(_))));
    assert!(choose_tau(-1.0, 0.1, &p, p.period, 0.5, &s, 1.0, 1.0).is_err());
}

#[test]
fn noiseless_consistent_model_is_exact() {
    let p = problem(0.5, 16, 64);
    let u = truth(3, 64, 16);
    let data = linearized_forward(&p, &u);
    let poles = PoleSet::compute(&p.basis.lambdas, &p.params, Selection::AllowReal).unwrap();
    let rec = reconstruct(&p, &poles, &data, ResidueMode::fit(), None).unwrap();
    let diff = LinearizedInput {
        a_sigma: &rec.a_sigma - &u.a_sigma,
        a_eta: &rec.a_eta - &u.a_eta,
        du: [rec.b[0].sub(&u.du[0]), rec.b[1].sub(&u.du[1])],
    };
    let spec = NormSpec::new(1.0, 0.5).unwrap();
    assert!(jmgt::norms::x_norm(&diff, &spec, &p.basis, 1.0) <= 1e-9);
}

#[test]
fn model_mismatch_error_is_linear_in_tau_offset() {
    let p = problem(0.3, 4, 128);
    let u = truth(3, 128, 4);
    let data = linearized_forward(&p, &u);
    let spec = NormSpec::new(1.0, 0.5).unwrap();
    let slopes: Vec<f64> = (1..=5)
        .map(|k| {
            let dt = 1e-3 * k as f64;
            let model = p.with_tau(0.3 + dt);
            let poles = PoleSet::compute(&model.basis.lambdas, &model.params, Selection::AllowReal).unwrap();
            let rec = reconstruct(&model, &poles, &data, ResidueMode::fit(), None).unwrap();
            let diff = LinearizedInput {
                a_sigma: &rec.a_sigma - &u.a_sigma,
                a_eta: &rec.a_eta - &u.a_eta,
                du: [rec.b[0].sub(&u.du[0]), rec.b[1].sub(&u.du[1])],
            };
            jmgt::norms::x_norm(&diff, &spec, &p.basis, 1.0) / dt
        })
        .collect();
    let (lo, hi) = slopes.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    assert!(hi <= 2.0 * lo, "slopes {slopes:?}");
}

#[test]
fn pilot_grid_interleaves() {
    let g = pilot_grid(&[1e-2, 1e-3, 1e-4]);
    assert_eq!(g.len(), 4);
    let want = [10f64.powf(-1.5), 10f64.powf(-2.5), 10f64.powf(-3.5), 10f64.powf(-4.5)];
    for (a, b) in g.iter().zip(want) {
        assert!((a / b - 1.0).abs() < 1e-12);
    }
    assert!(pilot_grid(&[]).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cbar_strictly_decreasing_in_tau(t1 in 0.01f64..0.99, t2 in 0.01f64..0.99, orti in 0.0f64..1.0, t0 in 0.5f64..6.28) {
        prop_assume!((t1 - t2).abs() > 1e-6);
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let a = compute_cbar(&params(lo), t0, orti, 1.0).unwrap();
        let b = compute_cbar(&params(hi), t0, orti, 1.0).unwrap();
        prop_assert!(a > b);
    }
}
