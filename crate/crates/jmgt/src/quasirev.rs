//! Quasi-reversibility in the relaxation time: τ-dependent constants, the
//! τ(δ) schedule, noise injection, trace-data smoothing and the τ sweep.

use crate::error::{Error, Result};
use crate::forward::{observe, HarmonicField, ModelParams, ObservationSet};
use crate::norms::{bochner_norm, growth, sobolev_weight, x_norm, ytilde_obs_norm, NormSpec};
use crate::poles::{PoleSet, Selection};
use crate::reconstruct::{linearized_forward, reconstruct, LinearizedData, LinearizedInput, Problem, ResidueMode};
use crate::spectral::EigenBasis;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn check_tau(params: &ModelParams, t0: f64) -> Result<()> {
    if !(params.tau > 0.0) {
        return Err(Error::Invalid(format!("tau must be positive, got {}", params.tau)));
    }
    if !(t0 > 0.0 && t0 <= params.period * (1.0 + 1e-12)) {
        return Err(Error::Invalid(format!("T0 must lie in (0, T], got {t0}")));
    }
    Ok(())
}

/// `(α/τ)/(1 − e^{−2(α/τ)T₀})·e^{2(α/τ)(T−T₀)}`
fn exp_factor(params: &ModelParams, t0: f64) -> f64 {
    let x = params.alpha() / params.tau;
    growth(x, t0) * (2.0 * x * (params.period - t0).max(0.0)).exp()
}

/// `C̄(τ) = C₀(g·(1 + (τ/β)^σ̌) + 1)^{1/2}`.
pub fn compute_cbar(params: &ModelParams, t0: f64, orti: f64, c0: f64) -> Result<f64> {
    check_tau(params, t0)?;
    let g = exp_factor(params, t0);
    Ok(c0 * (g * (1.0 + (params.tau / params.beta).powf(orti)) + 1.0).sqrt())
}

/// `C̃(τ) = C₁(g·((β/τ)^σ̌ + 1))^{1/2}`.
pub fn compute_ctilde(params: &ModelParams, t0: f64, orti: f64, c1: f64) -> Result<f64> {
    check_tau(params, t0)?;
    let g = exp_factor(params, t0);
    Ok(c1 * (g * ((params.beta / params.tau).powf(orti) + 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauConstants {
    pub tau: f64,
    pub alpha: f64,
    pub cbar: f64,
    pub ctilde: f64,
    /// `(2·max{1, C̄})⁻¹`
    pub radius: f64,
}

pub fn tau_constants(params: &ModelParams, t0: f64, orti: f64, c0: f64, c1: f64) -> Result<TauConstants> {
    let cbar = compute_cbar(params, t0, orti, c0)?;
    let ctilde = compute_ctilde(params, t0, orti, c1)?;
    Ok(TauConstants { tau: params.tau, alpha: params.alpha(), cbar, ctilde, radius: 0.5 / cbar.max(1.0) })
}

/// Geometric τ grid `τ₀ + τ_max·ratio^{−k}` down to `τ₀ + τ_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSchedule {
    pub tau_min: f64,
    pub tau_max: f64,
    pub ratio: f64,
    /// Tolerance multiplying `δ^{1/2}` in the admissibility test.
    pub scale: f64,
}

impl TauSchedule {
    pub fn new(tau_min: f64, tau_max: f64) -> Self {
        Self { tau_min, tau_max, ratio: 2f64.powf(0.25), scale: 1.0 }
    }

    /// Offsets above τ₀, descending.
    pub fn offsets(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = self.tau_max;
        while t >= self.tau_min * (1.0 - 1e-12) {
            out.push(t);
            t /= self.ratio;
        }
        out
    }
}

/// Smallest grid τ with `max{C̄, C̃}(τ)·δ ≤ scale·δ^{1/2}`.
///
/// The constants grow as τ shrinks, so the admissible set is an upper
/// section of the grid; with `δ = 0` the bottom of the grid is returned.
pub fn choose_tau(
    delta: f64,
    tau0: f64,
    params: &ModelParams,
    t0: f64,
    orti: f64,
    schedule: &TauSchedule,
    c0: f64,
    c1: f64,
) -> Result<f64> {
    if delta < 0.0 {
        return Err(Error::Invalid(format!("noise level must be nonnegative, got {delta}")));
    }
    if tau0 < 0.0 {
        return Err(Error::Invalid(format!("tau0 must be nonnegative, got {tau0}")));
    }
    if tau0 == 0.0 {
        if (t0 - params.period).abs() > 1e-12 * params.period {
            return Err(Error::Hypothesis(format!("tau0 = 0 needs T0 = T, got T0 = {t0}, T = {}", params.period)));
        }
        if orti >= 1.0 {
            return Err(Error::Hypothesis(format!("tau0 = 0 needs orti < 1, got {orti}")));
        }
    }
    let offsets = schedule.offsets();
    let first = *offsets.first().ok_or_else(|| Error::Invalid("empty tau grid".into()))?;
    let mut chosen = tau0 + first;
    for off in offsets {
        let tau = tau0 + off;
        if tau >= params.sigma0 * params.beta {
            continue;
        }
        let p = params.with_tau(tau);
        let c = compute_cbar(&p, t0, orti, c0)?.max(compute_ctilde(&p, t0, orti, c1)?);
        if c * delta <= schedule.scale * delta.sqrt() {
            chosen = tau;
        } else {
            break;
        }
    }
    Ok(chosen.min(params.sigma0 * params.beta))
}

/// Observations with modal noise of exact `Ỹ^obs` size.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyData {
    pub obs: [ObservationSet; 2],
    /// Interior fields whose traces are the added noise.
    pub noise: [HarmonicField; 2],
    pub delta: f64,
    pub seed: u64,
}

/// Random noise in the span of the retained `(m, ℓ)` modes, scaled so that
/// each source's perturbation has `Ỹ^obs` size `δ`.
pub fn add_noise(obs: &[ObservationSet; 2], delta: f64, seed: u64, basis: &EigenBasis, s: f64, omega: f64) -> NoisyData {
    let mm = obs[0].harmonics();
    let jj = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = [0, 1].map(|_| {
        let mut n = HarmonicField::zeros(mm, jj);
        for m in 1..=mm {
            for l in 0..jj {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                n.set(m, l, Complex64::new(re, im));
            }
        }
        let norm = ytilde_obs_norm(&n, basis, s, omega);
        if delta == 0.0 || norm == 0.0 {
            HarmonicField::zeros(mm, jj)
        } else {
            n.scale(delta / norm)
        }
    });
    let out = [obs[0].add(&observe(&noise[0], basis)), obs[1].add(&observe(&noise[1], basis))];
    NoisyData { obs: out, noise, delta, seed }
}

/// Result of the trace least-squares smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothing {
    /// Chosen number of leading modes.
    pub level: usize,
    /// Coefficients of `v_L` on the first `level` modes, padded with zeros to `J`.
    pub coeffs: DVector<f64>,
    /// `κ_L` for `L = 1..=J`; infinite where the trace map is not injective on `V_L`.
    pub kappa: Vec<f64>,
    /// Weighted trace misfit `‖tr v_L − p̃‖` for `L = 1..=J`.
    pub residuals: Vec<f64>,
}

fn weighted_trace(basis: &EigenBasis, level: usize) -> DMatrix<f64> {
    let ns = basis.n_sigma();
    DMatrix::from_fn(ns, level, |i, l| basis.sigma_weights[i].sqrt() * basis.trace[(i, l)])
}

/// `max_{v ∈ V_L} ‖v‖_{H^s}/‖tr v‖_Σ` by the generalized symmetric eigenproblem.
pub fn kappa(basis: &EigenBasis, level: usize, s: f64) -> f64 {
    let wt = weighted_trace(basis, level);
    let g = wt.transpose() * &wt;
    let Some(chol) = g.clone().cholesky() else {
        return f64::INFINITY;
    };
    let lmat = chol.l();
    let Some(linv) = lmat.clone().try_inverse() else {
        return f64::INFINITY;
    };
    let h = DMatrix::from_diagonal(&DVector::from_fn(level, |l, _| sobolev_weight(basis.lambdas[l], s)));
    let k = &linv * h * linv.transpose();
    let k = (&k + k.transpose()) * 0.5;
    let top = k.symmetric_eigenvalues().max();
    // A nearly singular Gram matrix means the trace does not control V_L.
    let ev = g.symmetric_eigenvalues();
    if ev.min() <= 1e-12 * ev.max() {
        return f64::INFINITY;
    }
    top.max(0.0).sqrt()
}

/// Least-squares trace fit over `V_L`; returns the coefficients and the misfit.
pub fn trace_fit(basis: &EigenBasis, level: usize, data: &[f64]) -> Result<(DVector<f64>, f64)> {
    if data.len() != basis.n_sigma() {
        return Err(Error::GridMismatch { expected: basis.n_sigma(), got: data.len() });
    }
    let wt = weighted_trace(basis, level);
    let rhs = DVector::from_iterator(data.len(), data.iter().zip(&basis.sigma_weights).map(|(d, w)| d * w.sqrt()));
    let sol = wt.clone().svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::Invalid(e.into()))?;
    let misfit = (&wt * &sol - &rhs).norm();
    Ok((sol, misfit))
}

/// Regularization by discretization with the discrepancy principle.
///
/// Candidates need `κ_L δ̃ ≤ ‖p̃‖`. Among them the smallest `L` with misfit at
/// most `tau_dp·δ̃` is taken, otherwise the admissible `L` of least misfit.
pub fn smooth_data(basis: &EigenBasis, data: &[f64], delta_tilde: f64, s: f64, tau_dp: f64) -> Result<Smoothing> {
    let jj = basis.len();
    let data_norm = basis.sigma_norm(&DVector::from_column_slice(data));
    let mut kap = Vec::with_capacity(jj);
    let mut residuals = Vec::with_capacity(jj);
    let mut fits = Vec::with_capacity(jj);
    for level in 1..=jj {
        kap.push(kappa(basis, level, s));
        let (c, r) = trace_fit(basis, level, data)?;
        residuals.push(r);
        fits.push(c);
    }
    let admissible: Vec<usize> = (0..jj).filter(|&i| kap[i].is_finite() && kap[i] * delta_tilde <= data_norm).collect();
    if admissible.is_empty() {
        return Err(Error::SmoothingRejected);
    }
    let pick = admissible
        .iter()
        .copied()
        .find(|&i| residuals[i] <= tau_dp * delta_tilde)
        .unwrap_or_else(|| {
            admissible.iter().copied().min_by(|&a, &b| residuals[a].partial_cmp(&residuals[b]).unwrap()).unwrap()
        });
    let mut coeffs = DVector::zeros(jj);
    coeffs.rows_mut(0, pick + 1).copy_from(&fits[pick]);
    Ok(Smoothing { level: pick + 1, coeffs, kappa: kap, residuals })
}

/// Configuration of a τ sweep on the linearized pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub tau0: f64,
    pub deltas: Vec<f64>,
    pub schedule: TauSchedule,
    pub spec: NormSpec,
    pub c0: f64,
    pub c1: f64,
    pub seed: u64,
    /// Noise levels of the calibration run; defaults to [`pilot_grid`] of `deltas`.
    pub pilot_deltas: Option<Vec<f64>>,
    pub residues: ResidueMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub tau: f64,
    pub error_x: f64,
    pub bound: f64,
    pub cbar: f64,
    pub ctilde: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Largest error-to-bound ratio over the pilot levels, applied to every row.
    pub calibration: f64,
    /// `‖∂_t u‖` of the true state.
    pub dt_norm: f64,
    pub truth_norm: f64,
}

struct Attempt {
    tau: f64,
    error: f64,
    raw_bound: f64,
    cbar: f64,
    ctilde: f64,
}

fn attempt(
    problem: &Problem,
    data: &LinearizedData,
    truth: &LinearizedInput,
    delta: f64,
    seed: u64,
    config: &SweepConfig,
    dt_norm: f64,
) -> Result<Attempt> {
    let params = &problem.params;
    let spec = &config.spec;
    let tau = choose_tau(delta, config.tau0, params, params.period, spec.orti, &config.schedule, config.c0, config.c1)?;
    let model = problem.with_tau(tau);
    let noisy = add_noise(&data.obs, delta, seed, &problem.basis, spec.s, params.omega);
    let noisy_data = LinearizedData { rhat: data.rhat.clone(), obs: noisy.obs };
    let poles = PoleSet::compute(&model.basis.lambdas, &model.params, Selection::AllowReal)?;
    let rec = reconstruct(&model, &poles, &noisy_data, config.residues, None)?;
    let diff = LinearizedInput {
        a_sigma: &rec.a_sigma - &truth.a_sigma,
        a_eta: &rec.a_eta - &truth.a_eta,
        du: [rec.b[0].sub(&truth.du[0]), rec.b[1].sub(&truth.du[1])],
    };
    let error = x_norm(&diff, spec, &problem.basis, params.omega);
    let t0 = model.params.period;
    let cbar = compute_cbar(&model.params, t0, spec.orti, config.c0)?;
    let ctilde = compute_ctilde(&model.params, t0, spec.orti, config.c1)?;
    let raw_bound = cbar.max(ctilde) * (delta + (tau - config.tau0) * dt_norm);
    Ok(Attempt { tau, error, raw_bound, cbar, ctilde })
}

/// `(Σ_ν ‖∂_t u_ν‖²_{h^σ̌(H^š)})^{1/2}`.
pub fn time_derivative_norm(du: &[HarmonicField; 2], spec: &NormSpec, basis: &EigenBasis, omega: f64) -> f64 {
    du.iter()
        .map(|u| bochner_norm(u, spec.orti + 1.0, spec.s_check(), basis, omega).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Geometric midpoints of consecutive δ plus one step beyond each end, so
/// that the calibration levels interleave the tested ones without touching them.
pub fn pilot_grid(deltas: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = deltas.iter().copied().filter(|x| *x > 0.0).collect();
    d.sort_by(|a, b| b.partial_cmp(a).unwrap());
    d.dedup();
    match d.len() {
        0 => vec![],
        1 => vec![d[0] * 10f64.sqrt(), d[0] / 10f64.sqrt()],
        n => {
            let mut out = vec![d[0] * (d[0] / d[1]).sqrt()];
            out.extend(d.windows(2).map(|w| (w[0] * w[1]).sqrt()));
            out.push(d[n - 1] * (d[n - 1] / d[n - 2]).sqrt());
            out
        }
    }
}

/// Generates data with model τ₀, perturbs them at each δ, reconstructs with
/// τ(δ) and compares against the truth in the X norm.
pub fn run_sweep(problem: &Problem, truth: &LinearizedInput, config: &SweepConfig) -> Result<SweepReport> {
    let data_problem = problem.with_tau(config.tau0);
    let data = linearized_forward(&data_problem, truth);
    let omega = problem.params.omega;
    let dt_norm = time_derivative_norm(&truth.du, &config.spec, &problem.basis, omega);
    let truth_norm = x_norm(truth, &config.spec, &problem.basis, omega);
    let pilots = config.pilot_deltas.clone().unwrap_or_else(|| pilot_grid(&config.deltas));
    let mut calibration: f64 = 0.0;
    for (k, &d) in pilots.iter().enumerate() {
        let pilot = attempt(problem, &data, truth, d, config.seed.wrapping_sub(1 + k as u64), config, dt_norm)?;
        if pilot.raw_bound > 0.0 {
            calibration = calibration.max(pilot.error / pilot.raw_bound);
        }
    }
    if calibration == 0.0 {
        calibration = 1.0;
    }
    let mut rows = Vec::with_capacity(config.deltas.len());
    for (k, &delta) in config.deltas.iter().enumerate() {
        let seed = config.seed.wrapping_add(1 + k as u64);
        let row = match attempt(problem, &data, truth, delta, seed, config, dt_norm) {
            Ok(a) => {
                let bound = calibration * a.raw_bound;
                let status = if a.error <= bound { "ok" } else { "bound_exceeded" };
                SweepRow {
                    delta,
                    tau: a.tau,
                    error_x: a.error,
                    bound,
                    cbar: a.cbar,
                    ctilde: a.ctilde,
                    status: status.into(),
                }
            }
            Err(e) => SweepRow {
                delta,
                tau: f64::NAN,
                error_x: f64::NAN,
                bound: f64::NAN,
                cbar: f64::NAN,
                ctilde: f64::NAN,
                status: format!("error: {e}"),
            },
        };
        rows.push(row);
    }
    Ok(SweepReport { rows, calibration, dt_norm, truth_norm })
}
