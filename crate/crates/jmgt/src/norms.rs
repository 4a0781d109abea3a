//! Bochner–Sobolev norms, the X / Y norms of the linearized stability
//! estimate, the amplification bound and the model-norm calibration.

use crate::error::{Error, Result};
use crate::forward::{HarmonicField, ModelParams};
use crate::poles::PoleSet;
use crate::reconstruct::{rtilde, LinearizedInput, Problem, Recovery};
use crate::sources::Vec2;
use crate::spectral::EigenBasis;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub use crate::sources::rho_t;

/// Smoothness indices `s > 1/2`, `0 ≤ σ̌ ≤ min{s, 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    pub s: f64,
    pub orti: f64,
}

impl NormSpec {
    pub fn new(s: f64, orti: f64) -> Result<Self> {
        let spec = Self { s, orti };
        match spec.violations().first() {
            Some(v) => Err(Error::Invalid(v.clone())),
            None => Ok(spec),
        }
    }

    /// `š = s − σ̌`.
    pub fn s_check(&self) -> f64 {
        self.s - self.orti
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.s > 0.5) {
            v.push(format!("norms.s must exceed 1/2, got {}", self.s));
        }
        if !(self.orti >= 0.0 && self.orti <= self.s.min(1.0)) {
            v.push(format!("norms.orti must lie in [0, min(s, 1)], got {}", self.orti));
        }
        v
    }
}

/// `λ^s` with `λ = 0` weighted by 0 for `s > 0` and `0⁰ = 1`.
pub fn sobolev_weight(lambda: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if lambda == 0.0 {
        0.0
    } else {
        lambda.powf(s)
    }
}

fn time_weight(m: usize, omega: f64, orti: f64) -> f64 {
    if orti == 0.0 {
        1.0
    } else {
        (m as f64 * omega).abs().powf(2.0 * orti)
    }
}

/// `(Σ_m |mω|^{2σ} Σ_j λ_j^s |b_m^j|²)^{1/2}`.
pub fn bochner_norm(field: &HarmonicField, orti: f64, s: f64, basis: &EigenBasis, omega: f64) -> f64 {
    let mut acc = 0.0;
    for m in 1..=field.harmonics() {
        let tw = time_weight(m, omega, orti);
        for j in 0..field.modes() {
            acc += tw * sobolev_weight(basis.lambdas[j], s) * field.get(m, j).norm_sqr();
        }
    }
    acc.sqrt()
}

/// `‖Σ a_j φ_j‖_{H^s}`.
pub fn coeff_norm(a: &DVector<f64>, s: f64, basis: &EigenBasis) -> f64 {
    a.iter().enumerate().map(|(j, x)| sobolev_weight(basis.lambdas[j], s) * x * x).sum::<f64>().sqrt()
}

/// `‖φσ̲‖²_{H^s} + ‖φ²η̲‖²_{H^s} + Σ_ν ‖u̲_ν‖²_{h^σ̌(H^š)}`, square-rooted.
pub fn x_norm(input: &LinearizedInput, spec: &NormSpec, basis: &EigenBasis, omega: f64) -> f64 {
    let mut acc = coeff_norm(&input.a_sigma, spec.s, basis).powi(2) + coeff_norm(&input.a_eta, spec.s, basis).powi(2);
    for u in &input.du {
        acc += bochner_norm(u, spec.orti, spec.s_check(), basis, omega).powi(2);
    }
    acc.sqrt()
}

/// `|o_m|^{4+2σ̌} λ^š / |D_ℓ(o_m)|²`, the harmonic weight of the image norms.
pub fn image_weight(params: &ModelParams, m: usize, lambda: f64, spec: &NormSpec) -> f64 {
    let o = params.o(m);
    o.norm().powf(4.0 + 2.0 * spec.orti) * sobolev_weight(lambda, spec.s_check()) / params.char_poly(o, lambda).norm_sqr()
}

/// Observation and model parts of the image norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YNorms {
    pub obs: f64,
    pub model: f64,
}

impl YNorms {
    /// Sum of the two parts.
    pub fn sum(&self) -> f64 {
        self.obs + self.model
    }

    /// Root-sum-square of the two parts.
    pub fn rss(&self) -> f64 {
        (self.obs * self.obs + self.model * self.model).sqrt()
    }
}

fn part_norm(problem: &Problem, spec: &NormSpec, l: usize, q: &Vec2, rhat: Option<&[HarmonicField; 2]>) -> f64 {
    let lambda = problem.basis.lambdas[l];
    let mut acc = sobolev_weight(lambda, spec.s) * q.norm_squared();
    for m in 1..=problem.harmonics() {
        let mut v = problem.sources.m(m) * q;
        if let Some(r) = rhat {
            v -= Vec2::new(r[0].get(m, l), r[1].get(m, l));
        }
        acc += image_weight(&problem.params, m, lambda, spec) * v.norm_squared();
    }
    acc
}

/// `‖p̲‖_{Y^obs}` and `‖r̲‖_{Y^mod}` from the two recovered parts.
pub fn y_norms(problem: &Problem, recovery: &Recovery, rhat: &[HarmonicField; 2], spec: &NormSpec) -> YNorms {
    let mut obs = 0.0;
    let mut model = 0.0;
    for l in 0..problem.modes() {
        obs += part_norm(problem, spec, l, &recovery.residue_part[l], None);
        model += part_norm(problem, spec, l, &recovery.source_part[l], Some(rhat));
    }
    YNorms { obs: obs.sqrt(), model: model.sqrt() }
}

/// `‖r̲‖_{Y^mod}` directly from the model residual.
pub fn ymod_norm(problem: &Problem, poles: &PoleSet, rhat: &[HarmonicField; 2], spec: &NormSpec) -> Result<f64> {
    let mut acc = 0.0;
    for l in 0..problem.modes() {
        let p = poles.pole(l);
        let q = problem.sources.invert_mtilde(p)? * rtilde(rhat, l, p, problem.params.omega);
        acc += part_norm(problem, spec, l, &q, Some(rhat));
    }
    Ok(acc.sqrt())
}

/// Harmonic surrogate of `‖T↑p̲‖_{W^{1,1}(0,T;H^{s+1})}`: `Σ_m (1+|mω|)(Σ_ℓ λ_ℓ^{s+1}|n_m^ℓ|²)^{1/2}`
/// evaluated on an interior extension `n` of the trace data.
pub fn ytilde_obs_norm(extension: &HarmonicField, basis: &EigenBasis, s: f64, omega: f64) -> f64 {
    (1..=extension.harmonics())
        .map(|m| {
            let inner: f64 = (0..extension.modes())
                .map(|l| sobolev_weight(basis.lambdas[l], s + 1.0) * extension.get(m, l).norm_sqr())
                .sum();
            (1.0 + m as f64 * omega) * inner.sqrt()
        })
        .sum()
}

/// `Ĉ_χ = (2+χ)/(2σ⁰²)·(1 + 1/(β²ω²))·(1 − τ/(βσ⁰))⁻²`.
pub fn c_hat(chi: f64, params: &ModelParams) -> f64 {
    let (s0, b, w, t) = (params.sigma0, params.beta, params.omega, params.tau);
    (2.0 + chi) / (2.0 * s0 * s0) * (1.0 + 1.0 / (b * b * w * w)) / (1.0 - t / (b * s0)).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`
    pub slack: f64,
}

/// Both sides of `|o_m|^{4+2χ}/J^χ_m(λ) ≤ Ĉ_χ(β/τ)^χ` with `J^χ_m(λ) = |ϑ(o_m)+Θ(o_m)λ|²λ^χ`.
pub fn j_bound(chi: f64, m: usize, lambda: f64, params: &ModelParams) -> Result<JBound> {
    if params.tau >= params.beta * params.sigma0 {
        return Err(Error::Hypothesis(format!(
            "amplification bound needs tau < beta*sigma0, got {} >= {}",
            params.tau,
            params.beta * params.sigma0
        )));
    }
    if chi > 0.0 && params.tau <= 0.0 {
        return Err(Error::Hypothesis("amplification bound with chi > 0 needs tau > 0".into()));
    }
    let o = params.o(m);
    let j = params.char_poly(o, lambda).norm_sqr() * lambda.powf(chi);
    let lhs = o.norm().powf(4.0 + 2.0 * chi) / j;
    let factor = if chi == 0.0 { 1.0 } else { (params.beta / params.tau).powf(chi) };
    let rhs = c_hat(chi, params) * factor;
    Ok(JBound { lhs, rhs, slack: rhs - lhs })
}

/// `C̄(τ)/C₀`, the τ-dependent form of the model-norm constant.
pub fn cbar_form(params: &ModelParams, t0: f64, orti: f64) -> f64 {
    let x = params.alpha() / params.tau;
    let g = growth(x, t0) * (2.0 * x * (params.period - t0)).exp();
    (g * (1.0 + (params.tau / params.beta).powf(orti)) + 1.0).sqrt()
}

/// `x/(1 − e^{−2xT₀})`, equal to `1/(2T₀)` at `x = 0`.
pub fn growth(x: f64, t0: f64) -> f64 {
    let z = 2.0 * x * t0;
    if z.abs() < 1e-12 {
        return 1.0 / (2.0 * t0) * (1.0 + z / 2.0);
    }
    x / -(-z).exp_m1()
}

/// Smallest `C₀` with `‖r̲‖_{Y^mod} ≤ C₀·cbar_form·‖r̲‖_{h^σ̌(H^š)}` for every model residual on
/// the retained modes; per eigenspace this is the largest singular value of a real-linear map.
pub fn calibrate_c0(problem: &Problem, poles: &PoleSet, spec: &NormSpec) -> Result<f64> {
    let mm = problem.harmonics();
    let omega = problem.params.omega;
    let mut sup: f64 = 0.0;
    for l in 0..problem.modes() {
        let lambda = problem.basis.lambdas[l];
        let p = poles.pole(l);
        let inv = problem.sources.invert_mtilde(p)?;
        let ncols = 4 * mm;
        let nrows = 4 * mm + 4;
        let mut k = DMatrix::<f64>::zeros(nrows, ncols);
        for col in 0..ncols {
            let (nu, rest) = (col / (2 * mm), col % (2 * mm));
            let (m, imag) = (rest / 2 + 1, rest % 2 == 1);
            let unit = if imag { Complex64::i() } else { Complex64::new(1.0, 0.0) };
            let bw = (time_weight(m, omega, spec.orti) * sobolev_weight(lambda, spec.s_check())).sqrt();
            if bw == 0.0 {
                continue;
            }
            let mut r = [HarmonicField::zeros(mm, 1), HarmonicField::zeros(mm, 1)];
            r[nu].set(m, 0, unit / bw);
            let q = inv * rtilde(&r, 0, p, omega);
            let sw = sobolev_weight(lambda, spec.s).sqrt();
            let mut out = Vec::with_capacity(nrows);
            out.extend([q[0].re * sw, q[0].im * sw, q[1].re * sw, q[1].im * sw]);
            for h in 1..=mm {
                let v = problem.sources.m(h) * q - Vec2::new(r[0].get(h, 0), r[1].get(h, 0));
                let w = image_weight(&problem.params, h, lambda, spec).sqrt();
                out.extend([v[0].re * w, v[0].im * w, v[1].re * w, v[1].im * w]);
            }
            for (row, val) in out.into_iter().enumerate() {
                k[(row, col)] = val;
            }
        }
        let smax = k.singular_values().max();
        sup = sup.max(smax);
    }
    Ok(sup / cbar_form(&problem.params, problem.params.t0, spec.orti))
}
