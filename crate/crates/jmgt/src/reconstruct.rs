//! Linearized forward map and its inversion through residues at the poles.

use crate::error::{Error, Result};
use crate::forward::{apply_lm, harmonic_symbol, observe, HarmonicField, MaterialField, ModelParams, ObservationSet};
use crate::poles::PoleSet;
use crate::sources::{BandLimited, SourcePair, Vec2, PHI_GUARD};
use crate::spectral::EigenBasis;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Model, basis and sources shared by the linearized operations.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: ModelParams,
    pub basis: EigenBasis,
    pub sources: SourcePair,
}

impl Problem {
    pub fn harmonics(&self) -> usize {
        self.sources.harmonics()
    }

    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self { params: self.params.with_tau(tau), ..self.clone() }
    }

    /// `o²/D_ℓ(o_m)`, the inverse harmonic symbol.
    pub fn transfer(&self, m: usize, l: usize) -> Result<Complex64> {
        let s = harmonic_symbol(&self.params, m, self.basis.lambdas[l]);
        if s.norm() <= 1e-12 {
            return Err(Error::Denominator { m, j: l });
        }
        Ok(1.0 / s)
    }
}

/// Perturbation `(φσ̲, φ²η̲, u̲)` in coefficient form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedInput {
    pub a_sigma: DVector<f64>,
    pub a_eta: DVector<f64>,
    pub du: [HarmonicField; 2],
}

impl LinearizedInput {
    pub fn zeros(m: usize, j: usize) -> Self {
        Self {
            a_sigma: DVector::zeros(j),
            a_eta: DVector::zeros(j),
            du: [HarmonicField::zeros(m, j), HarmonicField::zeros(m, j)],
        }
    }

    /// Projects `φσ̲` and `φ²η̲` from grid fields.
    pub fn from_fields(
        basis: &EigenBasis,
        phi: &[f64],
        dsigma: &MaterialField,
        deta: &MaterialField,
        du: [HarmonicField; 2],
    ) -> Result<Self> {
        let ps: Vec<f64> = phi.iter().zip(&dsigma.values).map(|(p, s)| p * s).collect();
        let pe: Vec<f64> = phi.iter().zip(&deta.values).map(|(p, e)| p * p * e).collect();
        Ok(Self { a_sigma: basis.project(&ps)?, a_eta: basis.project(&pe)?, du })
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            a_sigma: &self.a_sigma + &o.a_sigma,
            a_eta: &self.a_eta + &o.a_eta,
            du: [self.du[0].add(&o.du[0]), self.du[1].add(&o.du[1])],
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { a_sigma: &self.a_sigma * c, a_eta: &self.a_eta * c, du: [self.du[0].scale(c), self.du[1].scale(c)] }
    }

    pub fn a(&self, l: usize) -> Vec2 {
        Vec2::new(Complex64::new(self.a_sigma[l], 0.0), Complex64::new(self.a_eta[l], 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedData {
    pub rhat: [HarmonicField; 2],
    pub obs: [ObservationSet; 2],
}

/// `r̲_{ν,m} = L_m(σ⁰)u̲_{ν,m} + 𝔐_m[ν,·](a_σ, a_η)`, `p̲ = tr u̲`.
pub fn linearized_forward(problem: &Problem, input: &LinearizedInput) -> LinearizedData {
    let mm = problem.harmonics();
    let rhat = [0, 1].map(|nu| {
        let mut r = apply_lm(&problem.params, &problem.basis, &input.du[nu]);
        for m in 1..=mm {
            let mat = problem.sources.m(m);
            for l in 0..problem.modes() {
                let add = mat[(nu, 0)] * input.a_sigma[l] + mat[(nu, 1)] * input.a_eta[l];
                r.set(m, l, r.get(m, l) + add);
            }
        }
        r
    });
    let obs = [observe(&input.du[0], &problem.basis), observe(&input.du[1], &problem.basis)];
    LinearizedData { rhat, obs }
}

/// `b̄_m^ℓ = o²/D_ℓ(o_m)·(r̲̄_m^ℓ − 𝔐_m ā^ℓ)` for complex coefficient pairs.
pub fn solve_states_from_coeffs(problem: &Problem, a: &[Vec2], rhat: &[HarmonicField; 2]) -> Result<[HarmonicField; 2]> {
    let (mm, jj) = (problem.harmonics(), problem.modes());
    let mut out = [HarmonicField::zeros(mm, jj), HarmonicField::zeros(mm, jj)];
    for m in 1..=mm {
        let mat = problem.sources.m(m);
        for (l, al) in a.iter().enumerate() {
            let g = problem.transfer(m, l)?;
            let r = Vec2::new(rhat[0].get(m, l), rhat[1].get(m, l));
            let b = (r - mat * al) * g;
            out[0].set(m, l, b[0]);
            out[1].set(m, l, b[1]);
        }
    }
    Ok(out)
}

/// `r̲̃^ℓ(o)` for both sources: closed-form Laplace value of the band-limited mode signal.
pub fn rtilde(rhat: &[HarmonicField; 2], l: usize, o: Complex64, omega: f64) -> Vec2 {
    let f = |nu: usize| {
        BandLimited { mean: 0.0, coeffs: rhat[nu].coeffs.column(l).iter().copied().collect(), omega }.laplace(o)
    };
    Vec2::new(f(0), f(1))
}

/// `Θ(p)Ψ′(p)` with `Ψ = −ϑ/Θ`.
pub fn theta_psi_prime(params: &ModelParams, p: Complex64) -> Complex64 {
    let th = params.big_theta(p);
    let vt = params.vartheta(p);
    let vt_d = 3.0 * params.tau * p * p + 2.0 * params.sigma0 * p;
    -(vt_d * th - vt * params.beta) / th
}

/// Residues per eigenspace: `values[ℓ][i]` is the C² residue at Σ sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residues {
    pub values: Vec<Vec<Vec2>>,
    /// Condition number of the fit matrix (1 for the oracle).
    pub condition: f64,
    /// Relative least-squares residual of the fit (0 for the oracle).
    pub fit_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidueMode {
    Oracle,
    Fit { analytic_degree: Option<usize> },
}

impl ResidueMode {
    pub fn fit() -> Self {
        ResidueMode::Fit { analytic_degree: None }
    }
}

/// Exact residues of the data interpolant from the known input.
pub fn residues_oracle(problem: &Problem, poles: &PoleSet, input: &LinearizedInput, rhat: &[HarmonicField; 2]) -> Result<Residues> {
    let basis = &problem.basis;
    let mut values = Vec::with_capacity(problem.modes());
    for l in 0..problem.modes() {
        let p = poles.pole(l);
        let d = problem.params.char_deriv(p, basis.lambdas[l]);
        let inner = (rtilde(rhat, l, p, problem.params.omega) - problem.sources.mtilde(p) * input.a(l)) * (p * p / d);
        values.push((0..basis.n_sigma()).map(|i| inner * Complex64::new(basis.trace[(i, l)], 0.0)).collect());
    }
    Ok(Residues { values, condition: 1.0, fit_residual: 0.0 })
}

/// Least-squares residues on the known pole lattice.
///
/// For each Σ sample the data give, for both sources at once,
/// `Σ_ℓ (o²/D_ℓ) 𝔐_m g_ℓ(x₀) = Σ_ℓ (o²/D_ℓ) r̲_m^ℓ φ^ℓ(x₀) − p̲_m(x₀)`,
/// optionally plus a polynomial in `1/o` per source. The fit is done in data
/// space so no `𝔐_m⁻¹` amplifies model mismatch at high harmonics. The fitted
/// `g_ℓ` give the residue `p²/D′(p)·(r̲̃^ℓ(p)φ^ℓ(x₀) − M̃(p)g_ℓ(x₀))`.
pub fn residues_fit(
    problem: &Problem,
    poles: &PoleSet,
    obs: &[ObservationSet; 2],
    rhat: &[HarmonicField; 2],
    analytic_degree: Option<usize>,
) -> Result<Residues> {
    let (mm, jj) = (problem.harmonics(), problem.modes());
    let basis = &problem.basis;
    let extra = analytic_degree.map_or(0, |d| d + 1);
    let ncol = 2 * jj + 2 * extra;
    let mut a = DMatrix::<Complex64>::zeros(2 * mm, ncol);
    let mut transfer = DMatrix::<Complex64>::zeros(mm, jj);
    for m in 1..=mm {
        let mat = problem.sources.m(m);
        let o = problem.params.o(m);
        for l in 0..jj {
            let g = problem.transfer(m, l)?;
            transfer[(m - 1, l)] = g;
            for nu in 0..2 {
                for q in 0..2 {
                    a[(2 * (m - 1) + nu, 2 * l + q)] = g * mat[(nu, q)];
                }
            }
        }
        for k in 0..extra {
            for nu in 0..2 {
                a[(2 * (m - 1) + nu, 2 * jj + 2 * k + nu)] = o.powi(-(k as i32));
            }
        }
    }
    // Column scaling keeps the condition number meaningful.
    let scales: Vec<f64> = (0..ncol).map(|c| a.column(c).norm()).collect();
    for c in 0..ncol {
        let s = scales[c];
        if s > 0.0 {
            a.column_mut(c).iter_mut().for_each(|z| *z /= s);
        }
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let condition = sv.max() / sv.min();
    if !condition.is_finite() || condition > 1e13 {
        return Err(Error::IllConditioned { sample: 0, cond: condition });
    }
    let mut g = vec![vec![Vec2::zeros(); basis.n_sigma()]; jj];
    let mut res_num = 0.0;
    let mut res_den = 0.0;
    for i in 0..basis.n_sigma() {
        let mut rhs = DVector::<Complex64>::zeros(2 * mm);
        for m in 1..=mm {
            for nu in 0..2 {
                let mut v = -obs[nu].values[(m - 1, i)];
                for l in 0..jj {
                    v += transfer[(m - 1, l)] * basis.trace[(i, l)] * rhat[nu].get(m, l);
                }
                rhs[2 * (m - 1) + nu] = v;
            }
        }
        let sol = svd.solve(&rhs, 0.0).map_err(|e| Error::Invalid(e.into()))?;
        res_num += (&a * &sol - &rhs).norm_squared();
        res_den += rhs.norm_squared();
        for l in 0..jj {
            for q in 0..2 {
                g[l][i][q] = sol[2 * l + q] / scales[2 * l + q];
            }
        }
    }
    let mut values = Vec::with_capacity(jj);
    for l in 0..jj {
        let p = poles.pole(l);
        let d = problem.params.char_deriv(p, basis.lambdas[l]);
        let rt = rtilde(rhat, l, p, problem.params.omega);
        let mt = problem.sources.mtilde(p);
        values.push(
            (0..basis.n_sigma())
                .map(|i| (rt * Complex64::new(basis.trace[(i, l)], 0.0) - mt * g[l][i]) * (p * p / d))
                .collect(),
        );
    }
    let fit_residual = if res_den > 0.0 { (res_num / res_den).sqrt() } else { 0.0 };
    Ok(Residues { values, condition, fit_residual })
}

pub fn extract_residues(
    problem: &Problem,
    poles: &PoleSet,
    data: &LinearizedData,
    mode: ResidueMode,
    oracle_input: Option<&LinearizedInput>,
) -> Result<Residues> {
    match mode {
        ResidueMode::Oracle => {
            let input = oracle_input.ok_or_else(|| Error::Invalid("oracle residues need the true input".into()))?;
            residues_oracle(problem, poles, input, &data.rhat)
        }
        ResidueMode::Fit { analytic_degree } => residues_fit(problem, poles, &data.obs, &data.rhat, analytic_degree),
    }
}

/// Weighted least-squares coefficient of `v` on the trace of mode `l`.
pub fn trace_inverse(basis: &EigenBasis, l: usize, v: &[Complex64]) -> Result<Complex64> {
    let tr = basis.trace_on_eigenspace(l)?;
    if v.len() != tr.len() {
        return Err(Error::GridMismatch { expected: tr.len(), got: v.len() });
    }
    let mut num = C0;
    let mut den = 0.0;
    for i in 0..tr.len() {
        num += v[i] * (basis.sigma_weights[i] * tr[i]);
        den += basis.sigma_weights[i] * tr[i] * tr[i];
    }
    Ok(num / den)
}

fn trace_inverse_vec2(basis: &EigenBasis, l: usize, v: &[Vec2]) -> Result<Vec2> {
    let c0: Vec<Complex64> = v.iter().map(|x| x[0]).collect();
    let c1: Vec<Complex64> = v.iter().map(|x| x[1]).collect();
    Ok(Vec2::new(trace_inverse(basis, l, &c0)?, trace_inverse(basis, l, &c1)?))
}

/// Extension `Σ_ℓ T↑^ℓ` applied harmonic by harmonic.
pub fn extend_trace(basis: &EigenBasis, obs: &ObservationSet) -> Result<HarmonicField> {
    let mut out = HarmonicField::zeros(obs.harmonics(), basis.len());
    for m in 1..=obs.harmonics() {
        let row: Vec<Complex64> = obs.values.row(m - 1).iter().copied().collect();
        for l in 0..basis.len() {
            out.set(m, l, trace_inverse(basis, l, &row)?);
        }
    }
    Ok(out)
}

/// Split of the recovered coefficients into residue and source parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// `(ΘΨ′/p²)·Tr⁻¹[M̃(p)⁻¹ res]`
    pub residue_part: Vec<Vec2>,
    /// `M̃(p)⁻¹ r̲̃^ℓ(p)`
    pub source_part: Vec<Vec2>,
    pub a: Vec<Vec2>,
    /// Largest gap between applying `M̃⁻¹` inside or outside `Tr⁻¹`.
    pub order_gap: f64,
    /// Frobenius condition numbers of `M̃(p_ℓ)`.
    pub mtilde_condition: Vec<f64>,
}

impl Recovery {
    pub fn a_sigma(&self) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|v| v[0].re))
    }

    pub fn a_eta(&self) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|v| v[1].re))
    }

    pub fn max_imag(&self) -> f64 {
        self.a.iter().flat_map(|v| [v[0].im.abs(), v[1].im.abs()]).fold(0.0, f64::max)
    }
}

pub fn recover_coefficients(problem: &Problem, poles: &PoleSet, residues: &Residues, rhat: &[HarmonicField; 2]) -> Result<Recovery> {
    let basis = &problem.basis;
    let jj = problem.modes();
    let mut rec = Recovery {
        residue_part: Vec::with_capacity(jj),
        source_part: Vec::with_capacity(jj),
        a: Vec::with_capacity(jj),
        order_gap: 0.0,
        mtilde_condition: Vec::with_capacity(jj),
    };
    for l in 0..jj {
        let p = poles.pole(l);
        let mt = problem.sources.mtilde(p);
        let inv = problem.sources.invert_mtilde(p)?;
        let factor = theta_psi_prime(&problem.params, p) / (p * p);
        let inside: Vec<Vec2> = residues.values[l].iter().map(|r| inv * r).collect();
        let order_a = trace_inverse_vec2(basis, l, &inside)?;
        let order_b = inv * trace_inverse_vec2(basis, l, &residues.values[l])?;
        let scale = order_a.norm().max(order_b.norm()).max(1e-300);
        rec.order_gap = rec.order_gap.max((order_a - order_b).norm() / scale);
        let rp = order_a * factor;
        let sp = inv * rtilde(rhat, l, p, problem.params.omega);
        if !(rp[0].is_finite() && rp[1].is_finite() && sp[0].is_finite() && sp[1].is_finite()) {
            return Err(Error::Overflow { mode: l, re: p.re, im: p.im });
        }
        rec.residue_part.push(rp);
        rec.source_part.push(sp);
        rec.a.push(rp + sp);
        rec.mtilde_condition.push((crate::sources::frobenius_sq(&mt) * crate::sources::frobenius_sq(&inv)).sqrt());
    }
    Ok(rec)
}

/// `b̄_m^ℓ = −(o²/D_ℓ(o_m))·(𝔐_m P_ℓ + 𝔐_m M̃(p)⁻¹r̲̃^ℓ(p) − r̲̄_m^ℓ)` with the two recovered parts.
pub fn recover_states(problem: &Problem, recovery: &Recovery, rhat: &[HarmonicField; 2]) -> Result<[HarmonicField; 2]> {
    let (mm, jj) = (problem.harmonics(), problem.modes());
    let mut out = [HarmonicField::zeros(mm, jj), HarmonicField::zeros(mm, jj)];
    for m in 1..=mm {
        let mat = problem.sources.m(m);
        for l in 0..jj {
            let g = problem.transfer(m, l)?;
            let r = Vec2::new(rhat[0].get(m, l), rhat[1].get(m, l));
            let b = -(mat * recovery.residue_part[l] + mat * recovery.source_part[l] - r) * g;
            out[0].set(m, l, b[0]);
            out[1].set(m, l, b[1]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub a_sigma: DVector<f64>,
    pub a_eta: DVector<f64>,
    pub b: [HarmonicField; 2],
    pub recovery: Recovery,
    pub residues: Residues,
}

/// Residues, coefficients and states in one pass.
pub fn reconstruct(
    problem: &Problem,
    poles: &PoleSet,
    data: &LinearizedData,
    mode: ResidueMode,
    oracle_input: Option<&LinearizedInput>,
) -> Result<ReconstructionResult> {
    let residues = extract_residues(problem, poles, data, mode, oracle_input)?;
    let recovery = recover_coefficients(problem, poles, &residues, &data.rhat)?;
    let b = recover_states(problem, &recovery, &data.rhat)?;
    Ok(ReconstructionResult { a_sigma: recovery.a_sigma(), a_eta: recovery.a_eta(), b, recovery, residues })
}

/// `σ̲ = (Σ a_σ φ)/φ`, `η̲ = (Σ a_η φ)/φ²` on the grid.
pub fn assemble_fields(basis: &EigenBasis, a_sigma: &DVector<f64>, a_eta: &DVector<f64>, phi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let min = phi.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min < PHI_GUARD {
        return Err(Error::PhiGuard(min));
    }
    let s = basis.synthesize(a_sigma)?;
    let e = basis.synthesize(a_eta)?;
    Ok((
        s.iter().zip(phi).map(|(v, p)| v / p).collect(),
        e.iter().zip(phi).map(|(v, p)| v / (p * p)).collect(),
    ))
}
