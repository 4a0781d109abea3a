//! Characteristic poles `ϑ(p) + Θ(p)λ = 0`, branch selection, asymptotics
//! and the bound fit.

use crate::error::{Error, Result};
use crate::forward::ModelParams;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// How to pick a pole when no root has positive imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Only upper half-plane roots are accepted.
    #[default]
    Strict,
    /// Overdamped modes fall back to the nonzero root nearest the imaginary axis.
    AllowReal,
}

/// Roots of `τp³ + σ⁰p² + βλp + λ` (quadratic when `τ = 0`) via companion eigenvalues.
pub fn characteristic_roots(lambda: f64, params: &ModelParams) -> Vec<Complex64> {
    let coeffs: Vec<f64> = if params.tau > 0.0 {
        vec![params.tau, params.sigma0, params.beta * lambda, lambda]
    } else {
        vec![params.sigma0, params.beta * lambda, lambda]
    };
    let n = coeffs.len() - 1;
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        comp[(0, c)] = -coeffs[c + 1] / coeffs[0];
    }
    for r in 1..n {
        comp[(r, r - 1)] = 1.0;
    }
    let mut roots: Vec<Complex64> = comp.complex_eigenvalues().iter().copied().collect();
    // One Newton step per root sharpens clustered eigenvalues.
    for r in roots.iter_mut() {
        let (f, df) = horner(&coeffs, *r);
        if df.norm() > 1e-300 {
            let cand = *r - f / df;
            if horner(&coeffs, cand).0.norm() < f.norm() {
                *r = cand;
            }
        }
    }
    roots.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap().then(a.re.partial_cmp(&b.re).unwrap()));
    roots
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut f = Complex64::new(0.0, 0.0);
    let mut df = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        df = df * z + f;
        f = f * z + c;
    }
    (f, df)
}

/// `|poly(p)|` relative to the size of its terms.
pub fn root_residual(p: Complex64, lambda: f64, params: &ModelParams) -> f64 {
    let terms = [
        params.tau * p.norm().powi(3),
        params.sigma0 * p.norm_sqr(),
        params.beta * lambda * p.norm(),
        lambda,
    ];
    let scale = terms.iter().cloned().fold(0.0, f64::max).max(1e-300);
    params.char_poly(p, lambda).norm() / scale
}

/// Two-term asymptotic pole, upper branch.
pub fn pole_asymptotic(lambda: f64, params: &ModelParams) -> Result<Complex64> {
    let (tau, beta, alpha) = (params.tau, params.beta, params.alpha());
    if tau <= 0.0 {
        return Err(Error::Invalid("pole asymptotics need tau > 0".into()));
    }
    let arg = -(beta / tau) * lambda + 2.0 * alpha / (tau * beta) + alpha * alpha / (tau * tau);
    if arg >= 0.0 {
        return Err(Error::NonOscillatory { lambda });
    }
    Ok(Complex64::new(-alpha / tau, (-arg).sqrt()))
}

/// Upper half-plane root nearest the asymptotic estimate.
pub fn select_pole(roots: &[Complex64], lambda: f64, params: &ModelParams, rule: Selection) -> Result<Complex64> {
    let scale = roots.iter().map(|r| r.norm()).fold(1.0, f64::max);
    let upper: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > 1e-12 * scale).collect();
    if !upper.is_empty() {
        let target = pole_asymptotic(lambda, params).ok();
        let best = match target {
            Some(t) => upper.iter().copied().min_by(|a, b| (a - t).norm().partial_cmp(&(b - t).norm()).unwrap()),
            None => upper.iter().copied().max_by(|a, b| a.im.partial_cmp(&b.im).unwrap()),
        };
        return Ok(best.unwrap());
    }
    match rule {
        Selection::Strict => Err(Error::NoOscillatoryRoot { lambda }),
        Selection::AllowReal => roots
            .iter()
            .copied()
            .filter(|r| r.norm() > 1e-12 * scale)
            .max_by(|a, b| a.re.partial_cmp(&b.re).unwrap())
            .ok_or(Error::NoOscillatoryRoot { lambda }),
    }
}

/// Selected pole and the full root set of one eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleEntry {
    pub lambda: f64,
    pub pole: Complex64,
    pub roots: Vec<Complex64>,
    pub asymptotic: Option<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet {
    pub entries: Vec<PoleEntry>,
}

impl PoleSet {
    pub fn compute(lambdas: &[f64], params: &ModelParams, rule: Selection) -> Result<Self> {
        let mut entries = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let roots = characteristic_roots(lambda, params);
            let pole = select_pole(&roots, lambda, params, rule)?;
            let asymptotic = pole_asymptotic(lambda, params).ok();
            entries.push(PoleEntry { lambda, pole, roots, asymptotic });
        }
        Ok(Self { entries })
    }

    pub fn pole(&self, l: usize) -> Complex64 {
        self.entries[l].pole
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundDiagnostics {
    /// Smallest C making both bounds hold.
    pub c_fit: f64,
    pub c_real: f64,
    pub c_modulus: f64,
    /// Largest `Re p` encountered; must be ≤ 0.
    pub max_re: f64,
}

/// Fits the smallest `C` with `−Re p ≤ (α/τ)(1 + C/λ)` and
/// `√(βλ/τ)(1 − Cα/λ) ≤ |p| ≤ √(βλ/τ)(1 + Cα/λ)`.
pub fn verify_bounds(poles: &PoleSet, params: &ModelParams) -> Result<BoundDiagnostics> {
    if params.tau <= 0.0 {
        return Err(Error::Invalid("pole bounds need tau > 0".into()));
    }
    let alpha = params.alpha();
    let (tau, beta) = (params.tau, params.beta);
    let mut d = BoundDiagnostics { c_fit: 0.0, c_real: 0.0, c_modulus: 0.0, max_re: f64::NEG_INFINITY };
    for (l, e) in poles.entries.iter().enumerate() {
        let p = e.pole;
        let tol = 1e-12 * p.norm().max(1.0);
        d.max_re = d.max_re.max(p.re);
        if p.re > tol {
            return Err(Error::PositiveRealPart { mode: l, re: p.re });
        }
        if e.lambda <= 0.0 || alpha <= 0.0 {
            continue;
        }
        let lam = e.lambda;
        let c_re = lam * (-p.re * tau / alpha - 1.0);
        let base = (beta * lam / tau).sqrt();
        let c_mod = lam * (p.norm() / base - 1.0).abs() / alpha;
        d.c_real = d.c_real.max(c_re);
        d.c_modulus = d.c_modulus.max(c_mod);
    }
    d.c_fit = d.c_real.max(d.c_modulus);
    Ok(d)
}
