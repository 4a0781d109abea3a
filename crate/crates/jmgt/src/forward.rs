//! Frequency-domain JMGT model: harmonic symbols, the harmonic convolution
//! `B_m`, linear and nonlinear multiharmonic solves, and trace observations.

use crate::error::{Error, Result};
use crate::spectral::EigenBasis;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const RESONANCE_TOL: f64 = 1e-12;

/// Physical scalars of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub tau: f64,
    pub beta: f64,
    pub sigma0: f64,
    pub omega: f64,
    pub period: f64,
    pub t0: f64,
    /// Modulation amplitude of the second source.
    pub a: f64,
}

impl ModelParams {
    /// Sets `period = 2π/ω`.
    pub fn new(tau: f64, beta: f64, sigma0: f64, omega: f64, t0: f64, a: f64) -> Self {
        Self { tau, beta, sigma0, omega, period: 2.0 * PI / omega, t0, a }
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self { tau, ..*self }
    }

    pub fn alpha(&self) -> f64 {
        (self.sigma0 * self.beta - self.tau) / (2.0 * self.beta)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let finite = [self.tau, self.beta, self.sigma0, self.omega, self.period, self.t0, self.a];
        if finite.iter().any(|x| !x.is_finite()) {
            v.push("params: all entries must be finite".into());
            return v;
        }
        if self.tau < 0.0 {
            v.push(format!("params.tau must be nonnegative, got {}", self.tau));
        }
        if self.beta <= 0.0 {
            v.push(format!("params.beta must be positive, got {}", self.beta));
        }
        if self.sigma0 <= 0.0 {
            v.push(format!("params.sigma0 must be positive, got {}", self.sigma0));
        }
        if self.omega <= 0.0 {
            v.push(format!("params.omega must be positive, got {}", self.omega));
        }
        if self.sigma0 * self.beta < self.tau {
            v.push(format!(
                "stability requirement sigma0*beta >= tau violated ({} < {}); the model needs beta >= tau c^2",
                self.sigma0 * self.beta,
                self.tau
            ));
        }
        if (self.period * self.omega - 2.0 * PI).abs() > 1e-14 * 2.0 * PI {
            v.push(format!("params.period * params.omega must equal 2*pi, got {}", self.period * self.omega));
        }
        if !(self.t0 > 0.0 && self.t0 <= self.period) {
            v.push(format!("params.t0 must lie in (0, T], got {} with T = {}", self.t0, self.period));
        }
        if self.a == 0.0 || self.a == 1.0 {
            v.push(format!("params.a = {} makes the source matrices singular: det carries the factor A(A-1)", self.a));
        }
        v
    }

    /// `o_m = i m ω`.
    pub fn o(&self, m: usize) -> Complex64 {
        Complex64::new(0.0, m as f64 * self.omega)
    }

    /// `ϑ(o) = τo³ + σ⁰o²`.
    pub fn vartheta(&self, o: Complex64) -> Complex64 {
        self.tau * o * o * o + self.sigma0 * o * o
    }

    /// `Θ(o) = βo + 1`.
    pub fn big_theta(&self, o: Complex64) -> Complex64 {
        self.beta * o + 1.0
    }

    /// `D(o) = ϑ(o) + Θ(o)λ`.
    pub fn char_poly(&self, o: Complex64, lambda: f64) -> Complex64 {
        self.vartheta(o) + self.big_theta(o) * lambda
    }

    /// `D'(o) = 3τo² + 2σ⁰o + βλ`.
    pub fn char_deriv(&self, o: Complex64, lambda: f64) -> Complex64 {
        3.0 * self.tau * o * o + 2.0 * self.sigma0 * o + self.beta * lambda
    }
}

/// Diagonal of `L_m(σ⁰)` on the eigenfunction with eigenvalue `lambda`.
pub fn harmonic_symbol(params: &ModelParams, m: usize, lambda: f64) -> Complex64 {
    let mw = m as f64 * params.omega;
    let i = Complex64::i();
    (i * params.tau * mw * mw * mw + mw * mw * params.sigma0 - lambda * (1.0 + i * params.beta * mw)) / (mw * mw)
}

/// Complex spectral coefficients over harmonics `m = 1..M` (rows) and modes (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicField {
    pub coeffs: DMatrix<Complex64>,
}

impl HarmonicField {
    pub fn zeros(m: usize, j: usize) -> Self {
        Self { coeffs: DMatrix::from_element(m, j, C0) }
    }

    pub fn harmonics(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn modes(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Coefficient of harmonic `m` (1-based) and mode `j`.
    pub fn get(&self, m: usize, j: usize) -> Complex64 {
        self.coeffs[(m - 1, j)]
    }

    pub fn set(&mut self, m: usize, j: usize, v: Complex64) {
        self.coeffs[(m - 1, j)] = v;
    }

    pub fn harmonic(&self, m: usize) -> Vec<Complex64> {
        self.coeffs.row(m - 1).iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { coeffs: &self.coeffs + &other.coeffs }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { coeffs: &self.coeffs - &other.coeffs }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { coeffs: self.coeffs.map(|z| z * c) }
    }

    /// Largest ℓ² norm over harmonics.
    pub fn max_harmonic_norm(&self) -> f64 {
        (0..self.harmonics()).map(|r| self.coeffs.row(r).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Real coefficient field held by grid values and spectral coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub values: Vec<f64>,
    pub coeffs: DVector<f64>,
}

impl MaterialField {
    pub fn from_values(basis: &EigenBasis, values: Vec<f64>) -> Result<Self> {
        let coeffs = basis.project(&values)?;
        Ok(Self { values, coeffs })
    }

    pub fn from_fn<F: Fn([f64; 2]) -> f64>(basis: &EigenBasis, f: F) -> Self {
        let values = basis.sample(f);
        let coeffs = basis.project(&values).expect("sampled on the basis grid");
        Self { values, coeffs }
    }

    pub fn constant(basis: &EigenBasis, c: f64) -> Self {
        Self::from_fn(basis, |_| c)
    }

    pub fn from_coeffs(basis: &EigenBasis, coeffs: DVector<f64>) -> Result<Self> {
        let values = basis.synthesize(&coeffs)?;
        Ok(Self { values, coeffs })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Grid samples of every harmonic: `out[m-1][q]`.
pub fn to_grid(u: &HarmonicField, basis: &EigenBasis) -> Vec<Vec<Complex64>> {
    (1..=u.harmonics()).map(|m| basis.synthesize_complex(&u.harmonic(m))).collect()
}

/// Grid values of `B_m(u, v)` from grid harmonics; sums truncated at `M`.
pub fn bm_on_grid(ug: &[Vec<Complex64>], vg: &[Vec<Complex64>], m: usize) -> Vec<Complex64> {
    let mm = ug.len();
    let nq = ug.first().map_or(0, |r| r.len());
    let mut out = vec![C0; nq];
    for l in 1..m {
        if l > mm || m - l > mm {
            continue;
        }
        let (a, b) = (&ug[l - 1], &vg[m - l - 1]);
        for q in 0..nq {
            out[q] += a[q] * b[q];
        }
    }
    for k in 1..=mm {
        if k + m > mm {
            break;
        }
        let (uk, vkm, umk, vk) = (&ug[k - 1], &vg[k + m - 1], &ug[m + k - 1], &vg[k - 1]);
        for q in 0..nq {
            out[q] += uk[q].conj() * vkm[q] + umk[q] * vk[q].conj();
        }
    }
    out.iter_mut().for_each(|z| *z *= 0.5);
    out
}

/// Spectral coefficients of `B_m(u, v)`.
pub fn convolve_bm(u: &HarmonicField, v: &HarmonicField, m: usize, basis: &EigenBasis) -> Result<DVector<Complex64>> {
    check_pair(u, v, basis)?;
    let ug = to_grid(u, basis);
    let vg = to_grid(v, basis);
    basis.project_complex(&bm_on_grid(&ug, &vg, m))
}

/// `B_m(u, v)` for all `m = 1..M`.
pub fn bm_all(u: &HarmonicField, v: &HarmonicField, basis: &EigenBasis) -> Result<HarmonicField> {
    check_pair(u, v, basis)?;
    let ug = to_grid(u, basis);
    let vg = to_grid(v, basis);
    let mut out = HarmonicField::zeros(u.harmonics(), u.modes());
    for m in 1..=u.harmonics() {
        let c = basis.project_complex(&bm_on_grid(&ug, &vg, m))?;
        out.coeffs.row_mut(m - 1).copy_from(&c.transpose());
    }
    Ok(out)
}

fn check_pair(u: &HarmonicField, v: &HarmonicField, basis: &EigenBasis) -> Result<()> {
    if u.harmonics() != v.harmonics() || u.modes() != v.modes() || u.modes() != basis.len() {
        return Err(Error::BasisMismatch(format!(
            "fields {}x{} and {}x{} on a basis of {} modes",
            u.harmonics(),
            u.modes(),
            v.harmonics(),
            v.modes(),
            basis.len()
        )));
    }
    Ok(())
}

/// Applies the diagonal operator `L_m(σ⁰)`.
pub fn apply_lm(params: &ModelParams, basis: &EigenBasis, u: &HarmonicField) -> HarmonicField {
    let mut out = u.clone();
    for m in 1..=u.harmonics() {
        for j in 0..u.modes() {
            out.set(m, j, harmonic_symbol(params, m, basis.lambdas[j]) * u.get(m, j));
        }
    }
    out
}

/// Diagonal solve `û_m^j = r̂_m^j / symbol(m, λ_j)`.
pub fn solve_linear_harmonics(params: &ModelParams, basis: &EigenBasis, rhat: &HarmonicField) -> Result<HarmonicField> {
    if rhat.modes() != basis.len() {
        return Err(Error::BasisMismatch(format!("field has {} modes, basis {}", rhat.modes(), basis.len())));
    }
    let mut out = rhat.clone();
    for m in 1..=rhat.harmonics() {
        for j in 0..rhat.modes() {
            let s = harmonic_symbol(params, m, basis.lambdas[j]);
            if s.norm() <= RESONANCE_TOL {
                return Err(Error::Resonance { m, j, magnitude: s.norm() });
            }
            out.set(m, j, rhat.get(m, j) / s);
        }
    }
    Ok(out)
}

/// `P[(σ-σ⁰)u] + P[η B(u,u)]` for every harmonic.
fn perturbation_terms(
    params: &ModelParams,
    basis: &EigenBasis,
    sigma: &MaterialField,
    eta: &MaterialField,
    u: &HarmonicField,
) -> Result<HarmonicField> {
    let ug = to_grid(u, basis);
    let ds: Vec<f64> = sigma.values.iter().map(|s| s - params.sigma0).collect();
    let has_sigma = ds.iter().any(|d| *d != 0.0);
    let has_eta = eta.values.iter().any(|e| *e != 0.0);
    let mut out = HarmonicField::zeros(u.harmonics(), u.modes());
    if !has_sigma && !has_eta {
        return Ok(out);
    }
    for m in 1..=u.harmonics() {
        let mut g = vec![C0; basis.n_nodes()];
        if has_eta {
            g = bm_on_grid(&ug, &ug, m);
            for (q, z) in g.iter_mut().enumerate() {
                *z *= eta.values[q];
            }
        }
        if has_sigma {
            for (q, z) in g.iter_mut().enumerate() {
                *z += ds[q] * ug[m - 1][q];
            }
        }
        let c = basis.project_complex(&g)?;
        out.coeffs.row_mut(m - 1).copy_from(&c.transpose());
    }
    Ok(out)
}

/// Model operator `L(σ)u + ηB(u,u)` with grid-space multiplications.
pub fn model_operator(
    params: &ModelParams,
    basis: &EigenBasis,
    sigma: &MaterialField,
    eta: &MaterialField,
    u: &HarmonicField,
) -> Result<HarmonicField> {
    Ok(apply_lm(params, basis, u).add(&perturbation_terms(params, basis, sigma, eta, u)?))
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 500, damping: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub damping: f64,
}

/// Damped fixed point `û ← L(σ⁰)⁻¹(r̂ − (σ−σ⁰)û − ηB(û,û))`.
///
/// Falls back to damping 0.5 when the undamped iteration does not settle.
pub fn solve_multiharmonic(
    params: &ModelParams,
    basis: &EigenBasis,
    sigma: &MaterialField,
    eta: &MaterialField,
    rhat: &HarmonicField,
    opts: SolveOptions,
) -> Result<(HarmonicField, SolveReport)> {
    match fixed_point(params, basis, sigma, eta, rhat, opts) {
        Ok(r) => Ok(r),
        Err(Error::NonConvergence { .. }) if opts.damping > 0.5 => {
            fixed_point(params, basis, sigma, eta, rhat, SolveOptions { damping: 0.5, ..opts })
        }
        Err(e) => Err(e),
    }
}

fn fixed_point(
    params: &ModelParams,
    basis: &EigenBasis,
    sigma: &MaterialField,
    eta: &MaterialField,
    rhat: &HarmonicField,
    opts: SolveOptions,
) -> Result<(HarmonicField, SolveReport)> {
    let scale = rhat.max_harmonic_norm().max(1.0);
    let mut u = solve_linear_harmonics(params, basis, rhat)?;
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let pert = perturbation_terms(params, basis, sigma, eta, &u)?;
        let res = apply_lm(params, basis, &u).add(&pert).sub(rhat);
        residual = res.max_harmonic_norm();
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tol * scale {
            return Ok((u, SolveReport { iterations: it, residual, damping: opts.damping }));
        }
        let next = solve_linear_harmonics(params, basis, &rhat.sub(&pert))?;
        u = u.scale(1.0 - opts.damping).add(&next.scale(opts.damping));
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual })
}

/// Model residual recomputed on a space-time grid: synthesis, pointwise
/// products, discrete Fourier analysis, then projection.
pub fn residual_time_domain(
    params: &ModelParams,
    basis: &EigenBasis,
    sigma: &MaterialField,
    eta: &MaterialField,
    u: &HarmonicField,
    rhat: &HarmonicField,
) -> Result<f64> {
    let mm = u.harmonics();
    let nt = 4 * mm + 4;
    let nq = basis.n_nodes();
    let ug = to_grid(u, basis);
    // Real field samples at each time.
    let mut field = vec![vec![0.0; nq]; nt];
    for (n, row) in field.iter_mut().enumerate() {
        let t = n as f64 * params.period / nt as f64;
        for (m, g) in ug.iter().enumerate() {
            let e = Complex64::from_polar(1.0, (m + 1) as f64 * params.omega * t);
            for q in 0..nq {
                row[q] += (g[q] * e).re;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for m in 1..=mm {
        let mut g = vec![C0; nq];
        for (n, row) in field.iter().enumerate() {
            let t = n as f64 * params.period / nt as f64;
            let e = Complex64::from_polar(2.0 / nt as f64, -(m as f64) * params.omega * t);
            for q in 0..nq {
                let w = (sigma.values[q] - params.sigma0) * row[q] + eta.values[q] * row[q] * row[q];
                g[q] += e * w;
            }
        }
        let proj = basis.project_complex(&g)?;
        let mut norm2 = 0.0;
        for j in 0..u.modes() {
            let r = proj[j] + harmonic_symbol(params, m, basis.lambdas[j]) * u.get(m, j) - rhat.get(m, j);
            norm2 += r.norm_sqr();
        }
        worst = worst.max(norm2.sqrt());
    }
    Ok(worst)
}

/// Trace samples `p̂_m(x₀)`: rows are harmonics, columns Σ samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub values: DMatrix<Complex64>,
}

impl ObservationSet {
    pub fn harmonics(&self) -> usize {
        self.values.nrows()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { values: &self.values + &other.values }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { values: &self.values - &other.values }
    }
}

pub fn observe(u: &HarmonicField, basis: &EigenBasis) -> ObservationSet {
    let tr = basis.trace.map(|x| Complex64::new(x, 0.0));
    ObservationSet { values: &u.coeffs * tr.transpose() }
}

/// Real time signal `Re Σ_m û_m e^{imωt}` of one mode.
pub fn synthesize_time(coeffs: &[Complex64], omega: f64, t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| (c * Complex64::from_polar(1.0, (k + 1) as f64 * omega * t)).re)
        .sum()
}
