//! Amplitude-modulated excitations, the matrices `𝔐_m`, the interpolant
//! `M̃(o)` and the separable reference state.

use crate::error::{Error, Result};
use crate::forward::{HarmonicField, ModelParams};
use crate::spectral::EigenBasis;
use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use std::f64::consts::PI;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// `(e^z − 1)/z` with the removable point at 0.
pub fn exprel(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Real band-limited periodic signal `mean + Re Σ_k c_k e^{ikωt}`.
///
/// `c_k` are `(2/T)∫s e^{-ikωt}` normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLimited {
    pub mean: f64,
    pub coeffs: Vec<Complex64>,
    pub omega: f64,
}

impl BandLimited {
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.mean
            + self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| (c * Complex64::from_polar(1.0, (k + 1) as f64 * self.omega * t)).re)
                .sum::<f64>()
    }

    /// `c_m`, zero beyond the band.
    pub fn coefficient(&self, m: usize) -> Complex64 {
        if m >= 1 && m <= self.coeffs.len() {
            self.coeffs[m - 1]
        } else {
            C0
        }
    }

    /// `(2/T)∫₀ᵀ s(t) e^{−ot} dt` in closed form.
    pub fn laplace(&self, o: Complex64) -> Complex64 {
        let t = self.period();
        let mut acc = 2.0 * self.mean * exprel(-o * t);
        for (k, c) in self.coeffs.iter().enumerate() {
            let kw = Complex64::new(0.0, (k + 1) as f64 * self.omega);
            acc += c * exprel((kw - o) * t) + c.conj() * exprel((-kw - o) * t);
        }
        acc
    }

    /// Squared signal, exact: harmonics up to twice the band.
    pub fn square(&self) -> BandLimited {
        let n = self.coeffs.len();
        let mean = self.mean * self.mean + 0.5 * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let mut coeffs = vec![C0; 2 * n];
        for (m, slot) in coeffs.iter_mut().enumerate() {
            let m = m + 1;
            *slot = bm_scalar(&self.coeffs, &self.coeffs, m) + 2.0 * self.mean * self.coefficient(m);
        }
        BandLimited { mean, coeffs, omega: self.omega }
    }

    /// `L^p` norm over one period from `n` uniform samples.
    pub fn lp_norm(&self, p: f64, n: usize) -> f64 {
        let t = self.period();
        let h = t / n as f64;
        ((0..n).map(|i| self.eval(i as f64 * h).abs().powf(p)).sum::<f64>() * h).powf(1.0 / p)
    }
}

/// Harmonic convolution `B_m` of two scalar harmonic sequences (1-based, truncated at their length).
pub fn bm_scalar(u: &[Complex64], v: &[Complex64], m: usize) -> Complex64 {
    let n = u.len().min(v.len());
    let get = |s: &[Complex64], k: usize| if k >= 1 && k <= n { s[k - 1] } else { C0 };
    let mut acc = C0;
    for l in 1..m {
        acc += get(u, l) * get(v, m - l);
    }
    for k in 1..=n {
        if k + m > n {
            break;
        }
        acc += get(u, k).conj() * get(v, k + m) + get(u, m + k) * get(v, k).conj();
    }
    0.5 * acc
}

/// Raised-cosine pulse `ψ(s) = (1/w)(1 + cos(2π(s−T₀)/w))` with unit mass, band-limited to `M` harmonics.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec {
    pub center: f64,
    pub width: f64,
    pub signal: BandLimited,
}

impl PulseSpec {
    pub fn psi_hat(&self) -> &[Complex64] {
        &self.signal.coeffs
    }

    pub fn harmonics(&self) -> usize {
        self.signal.coeffs.len()
    }

    /// Unbanded bump value at time `t` (periodic).
    pub fn bump(&self, t: f64) -> f64 {
        let period = self.signal.period();
        let s = (t - self.center + 0.5 * period).rem_euclid(period) - 0.5 * period;
        if s.abs() <= 0.5 * self.width {
            (1.0 + (2.0 * PI * s / self.width).cos()) / self.width
        } else {
            0.0
        }
    }

    /// Samples of the band-limited signal on `n` uniform times.
    pub fn time_samples(&self, n: usize) -> Vec<f64> {
        let h = self.signal.period() / n as f64;
        (0..n).map(|i| self.signal.eval(i as f64 * h)).collect()
    }
}

fn sinc_half(x: f64, w: f64) -> f64 {
    let y = 0.5 * x * w;
    if y.abs() < 1e-8 {
        1.0 - y * y / 6.0
    } else {
        y.sin() / y
    }
}

/// Fourier transform `∫ bump(s) e^{−ias} ds` of the centred unit bump.
pub fn bump_transform(a: f64, width: f64) -> f64 {
    let b = 2.0 * PI / width;
    sinc_half(a, width) + 0.5 * (sinc_half(a - b, width) + sinc_half(a + b, width))
}

pub fn design_delta_pulse(params: &ModelParams, m: usize, width: f64) -> Result<PulseSpec> {
    let period = params.period;
    if !(width > 0.0 && width < period) || !(params.t0 > 0.0 && params.t0 <= period) {
        return Err(Error::PulseWidth { width, center: params.t0, period });
    }
    let coeffs = (1..=m)
        .map(|k| {
            let a = k as f64 * params.omega;
            Complex64::from_polar(2.0 / period * bump_transform(a, width), -a * params.t0)
        })
        .collect();
    Ok(PulseSpec { center: params.t0, width, signal: BandLimited { mean: 0.0, coeffs, omega: params.omega } })
}

pub type Mat2 = Matrix2<Complex64>;
pub type Vec2 = Vector2<Complex64>;

/// Explicit Cramer inverse; `None` when `|det|` is below `tol·‖m‖²`.
pub fn cramer_inverse(m: &Mat2, tol: f64) -> Option<Mat2> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let scale = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if det.norm() <= tol * scale || det.norm() == 0.0 {
        return None;
    }
    Some(Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

pub fn frobenius_sq(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Two sources `ψ₁ = ψ`, `ψ₂ = Aψ` with their matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePair {
    pub psi: PulseSpec,
    pub a: f64,
    /// Exact square of the band-limited pulse.
    pub psi_sq: BandLimited,
    /// `𝔐_m`, `m = 1..M`.
    pub mm: Vec<Mat2>,
}

pub fn amplitude_modulate(psi: PulseSpec, a: f64) -> Result<SourcePair> {
    if a == 0.0 || a == 1.0 || !a.is_finite() {
        return Err(Error::SingularModulation(a));
    }
    let psi_sq = psi.signal.square();
    let mm = (1..=psi.harmonics())
        .map(|m| {
            let (p, q) = (psi.signal.coefficient(m), psi_sq.coefficient(m));
            Mat2::new(p, q, a * p, a * a * q)
        })
        .collect();
    Ok(SourcePair { psi, a, psi_sq, mm })
}

impl SourcePair {
    pub fn harmonics(&self) -> usize {
        self.mm.len()
    }

    /// `𝔐_m` (1-based).
    pub fn m(&self, m: usize) -> &Mat2 {
        &self.mm[m - 1]
    }

    /// `(ψ²)̂_m`.
    pub fn psi_sq_hat(&self, m: usize) -> Complex64 {
        self.psi_sq.coefficient(m)
    }

    /// Harmonic coefficients of source `ν ∈ {0, 1}`.
    pub fn psi_hat(&self, nu: usize, m: usize) -> Complex64 {
        let s = if nu == 0 { 1.0 } else { self.a };
        s * self.psi.signal.coefficient(m)
    }

    pub fn mtilde(&self, o: Complex64) -> Mat2 {
        let (p, q) = (self.psi.signal.laplace(o), self.psi_sq.laplace(o));
        Mat2::new(p, q, self.a * p, self.a * self.a * q)
    }

    pub fn det_mtilde(&self, o: Complex64) -> Complex64 {
        let m = self.mtilde(o);
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    }

    pub fn invert_mtilde(&self, o: Complex64) -> Result<Mat2> {
        let m = self.mtilde(o);
        cramer_inverse(&m, 1e-14).ok_or(Error::SingularSource {
            re: o.re,
            im: o.im,
            det: self.det_mtilde(o).norm(),
        })
    }

    pub fn invert_m(&self, m: usize) -> Result<Mat2> {
        let mat = self.m(m);
        let o = Complex64::new(0.0, m as f64 * self.psi.signal.omega);
        cramer_inverse(mat, 1e-14).ok_or(Error::SingularSource {
            re: o.re,
            im: o.im,
            det: (mat[(0, 0)] * mat[(1, 1)] - mat[(0, 1)] * mat[(1, 0)]).norm(),
        })
    }

    /// 2-norm condition number of `𝔐_m`.
    pub fn condition(&self, m: usize) -> f64 {
        let sv = self.m(m).svd(false, false).singular_values;
        sv[0].max(sv[1]) / sv[0].min(sv[1])
    }

    /// `μ² = ‖M̃(p)⁻¹‖_F² / Ρ_T(2 Re p)`.
    pub fn mu_sq(&self, p: Complex64) -> Result<f64> {
        let inv = self.invert_mtilde(p)?;
        Ok(frobenius_sq(&inv) / rho_t(2.0 * p.re, self.psi.signal.period()))
    }

    /// Cauchy–Schwarz lower bound for `μ²`: `(A⁴+A²+2)T²/(4A²(A−1)²)` over the larger of
    /// `‖ψ‖²_{L²}` and `‖ψ‖⁴_{L⁴}`.
    pub fn mu_sq_lower_bound(&self) -> f64 {
        let n = 8 * self.harmonics() + 8;
        let l2 = self.psi.signal.lp_norm(2.0, n).powi(2);
        let l4 = self.psi.signal.lp_norm(4.0, n).powi(4);
        let a = self.a;
        let t = self.psi.signal.period();
        (a.powi(4) + a * a + 2.0) * t * t / (4.0 * a * a * (a - 1.0).powi(2)) / l2.max(l4)
    }
}

/// `Ρ_T(y) = (∫₀ᵀ e^{−yt} dt)⁻¹`, so `Ρ_T(−x) = x/(e^{xT} − 1)`; equals `1/T` at 0.
pub fn rho_t(y: f64, t: f64) -> f64 {
    let z = -y * t;
    if z.abs() < 1e-12 {
        return 1.0 / t * (1.0 - z / 2.0);
    }
    -y / z.exp_m1()
}

/// Output of the interior-source recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiRecursion {
    pub omega: f64,
    pub tau: f64,
    pub psi_hat: Vec<Complex64>,
}

/// Triangular recursion for the higher harmonics generated by `η⁰ψ²` in the
/// setting `ω = √(λ/σ⁰)`, `τ = βλω⁻²`.
pub fn psi_recursion(lambda: f64, sigma0: f64, beta: f64, eta0: f64, psi1: Complex64, m_max: usize) -> Result<PsiRecursion> {
    if !(lambda > 0.0 && sigma0 > 0.0) {
        return Err(Error::Invalid("recursion needs lambda > 0 and sigma0 > 0".into()));
    }
    if psi1 == C0 {
        return Err(Error::Invalid("first harmonic must be nonzero".into()));
    }
    let omega = (lambda / sigma0).sqrt();
    let tau = beta * lambda / (omega * omega);
    let mut psi = vec![C0; m_max];
    if m_max > 0 {
        psi[0] = psi1;
    }
    for m in 2..=m_max {
        let d = recursion_denominator(lambda, sigma0, beta, tau, omega, m);
        if d.norm() <= 1e-14 * lambda {
            return Err(Error::RecursionDenominator(m));
        }
        let conv: Complex64 = (1..m).map(|j| psi[j - 1] * psi[m - j - 1]).sum();
        let mw2 = (m as f64 * omega).powi(2);
        psi[m - 1] = -mw2 * eta0 / (2.0 * d) * conv;
    }
    Ok(PsiRecursion { omega, tau, psi_hat: psi })
}

/// `λ − σ⁰m²ω² + imω(βλ − τm²ω²)`.
pub fn recursion_denominator(lambda: f64, sigma0: f64, beta: f64, tau: f64, omega: f64, m: usize) -> Complex64 {
    let mw = m as f64 * omega;
    Complex64::new(lambda - sigma0 * mw * mw, mw * (beta * lambda - tau * mw * mw))
}

/// Boundary excitation `∂_νφ · (∬ψ_ν + β∫ψ_ν)` in harmonic form.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySource {
    pub points: Vec<[f64; 2]>,
    pub normal_derivative: Vec<f64>,
    /// Harmonics of `∬ψ_ν + β∫ψ_ν` per source.
    pub time_coeffs: [Vec<Complex64>; 2],
}

#[derive(Debug, Clone)]
pub struct ReferenceState {
    pub mode: usize,
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub u0: [HarmonicField; 2],
    pub eta0: f64,
    pub boundary: BoundarySource,
    pub min_abs_phi: f64,
}

/// Grid threshold below which `φ` counts as vanishing.
pub const PHI_GUARD: f64 = 1e-6;

pub fn build_reference_state(
    basis: &EigenBasis,
    mode: usize,
    sources: &SourcePair,
    params: &ModelParams,
    eta0: f64,
) -> Result<ReferenceState> {
    if mode >= basis.len() {
        return Err(Error::Invalid(format!("reference mode {mode} outside truncation {}", basis.len())));
    }
    let lambda = basis.lambdas[mode];
    if lambda == 0.0 {
        return Err(Error::Invalid("reference profile needs a nonzero eigenvalue".into()));
    }
    let min_abs_phi = basis.min_abs_on_grid(mode);
    if min_abs_phi < PHI_GUARD {
        return Err(Error::PhiGuard(min_abs_phi));
    }
    for m in 1..=sources.harmonics() {
        sources.invert_m(m)?;
    }
    let mm = sources.harmonics();
    let mut u0 = [HarmonicField::zeros(mm, basis.len()), HarmonicField::zeros(mm, basis.len())];
    for (nu, u) in u0.iter_mut().enumerate() {
        for m in 1..=mm {
            u.set(m, mode, sources.psi_hat(nu, m));
        }
    }
    let (points, normal_derivative) = basis.boundary_normal_derivatives(mode);
    let time_coeffs = [0, 1].map(|nu| {
        (1..=mm)
            .map(|m| {
                let o = params.o(m);
                sources.psi_hat(nu, m) * (1.0 / (o * o) + params.beta / o)
            })
            .collect()
    });
    Ok(ReferenceState {
        mode,
        lambda,
        phi: basis.values.column(mode).iter().copied().collect(),
        u0,
        eta0,
        boundary: BoundarySource { points, normal_derivative, time_coeffs },
        min_abs_phi,
    })
}
