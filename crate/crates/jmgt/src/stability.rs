//! Nonlinear forward map around the linearization point, the distance and
//! image norms of the stability estimate, and the empirical Lipschitz and
//! Taylor-remainder probes.

use crate::error::{Error, Result};
use crate::forward::{model_operator, observe, solve_multiharmonic, HarmonicField, MaterialField, ObservationSet, SolveOptions};
use crate::norms::{bochner_norm, calibrate_c0, cbar_form, x_norm, y_norms, NormSpec};
use crate::poles::{PoleSet, Selection};
use crate::reconstruct::{linearized_forward, recover_coefficients, residues_fit, LinearizedInput, Problem};
use crate::sources::{build_reference_state, ReferenceState};
use nalgebra::DVector;

/// `(σ, η, u_1, u_2)`
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub sigma: MaterialField,
    pub eta: MaterialField,
    pub u: [HarmonicField; 2],
}

/// Model residuals and observations of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub rhat: [HarmonicField; 2],
    pub obs: [ObservationSet; 2],
}

impl Image {
    pub fn sub(&self, o: &Self) -> Self {
        Self {
            rhat: [self.rhat[0].sub(&o.rhat[0]), self.rhat[1].sub(&o.rhat[1])],
            obs: [self.obs[0].sub(&o.obs[0]), self.obs[1].sub(&o.obs[1])],
        }
    }
}

/// Linearization point `(σ⁰, 0, φψ_ν)` with its poles and norms.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub problem: Problem,
    pub reference: ReferenceState,
    pub poles: PoleSet,
    pub spec: NormSpec,
    /// Exact model-norm constant of the retained modes.
    pub c0: f64,
    /// `C̄(τ) = C₀·cbar_form`
    pub cbar: f64,
}

impl Linearization {
    pub fn new(problem: Problem, mode: usize, spec: NormSpec) -> Result<Self> {
        let reference = build_reference_state(&problem.basis, mode, &problem.sources, &problem.params, 0.0)?;
        let poles = PoleSet::compute(&problem.basis.lambdas, &problem.params, Selection::Strict)?;
        let c0 = calibrate_c0(&problem, &poles, &spec)?;
        let cbar = c0 * cbar_form(&problem.params, problem.params.t0, spec.orti);
        Ok(Self { problem, reference, poles, spec, c0, cbar })
    }

    /// `(2·max{1, C̄})⁻¹`
    pub fn radius(&self) -> f64 {
        0.5 / self.cbar.max(1.0)
    }

    pub fn base_state(&self) -> State {
        let basis = &self.problem.basis;
        State {
            sigma: MaterialField::constant(basis, self.problem.params.sigma0),
            eta: MaterialField::constant(basis, 0.0),
            u: self.reference.u0.clone(),
        }
    }

    /// State `(σ⁰ + σ̲, η̲, u⁰ + u̲)` whose `φσ̲`, `φ²η̲` have the given coefficients.
    pub fn perturbed_state(&self, d: &LinearizedInput) -> Result<State> {
        let basis = &self.problem.basis;
        let phi = &self.reference.phi;
        let s = basis.synthesize(&d.a_sigma)?;
        let e = basis.synthesize(&d.a_eta)?;
        let sigma: Vec<f64> = s.iter().zip(phi).map(|(v, p)| self.problem.params.sigma0 + v / p).collect();
        let eta: Vec<f64> = e.iter().zip(phi).map(|(v, p)| v / (p * p)).collect();
        Ok(State {
            sigma: MaterialField::from_values(basis, sigma)?,
            eta: MaterialField::from_values(basis, eta)?,
            u: [self.reference.u0[0].add(&d.du[0]), self.reference.u0[1].add(&d.du[1])],
        })
    }

    /// Coefficients and state solving the nonlinear model for `r = r⁰ + r̲`,
    /// with `r⁰` the residual of the linearization point.
    pub fn solved_state(&self, a_sigma: &DVector<f64>, a_eta: &DVector<f64>, dr: &[HarmonicField; 2]) -> Result<State> {
        let (mm, jj) = (self.problem.harmonics(), self.problem.modes());
        let zero = LinearizedInput { a_sigma: a_sigma.clone(), a_eta: a_eta.clone(), du: [HarmonicField::zeros(mm, jj), HarmonicField::zeros(mm, jj)] };
        let mut st = self.perturbed_state(&zero)?;
        let base = self.forward(&self.base_state())?;
        for nu in 0..2 {
            let r = base.rhat[nu].add(&dr[nu]);
            let (u, _) = solve_multiharmonic(&self.problem.params, &self.problem.basis, &st.sigma, &st.eta, &r, SolveOptions::default())?;
            st.u[nu] = u;
        }
        Ok(st)
    }

    /// `F(ξ) = (L(σ)u_ν + ηB(u_ν, u_ν), tr u_ν)`.
    pub fn forward(&self, st: &State) -> Result<Image> {
        let (params, basis) = (&self.problem.params, &self.problem.basis);
        let r0 = model_operator(params, basis, &st.sigma, &st.eta, &st.u[0])?;
        let r1 = model_operator(params, basis, &st.sigma, &st.eta, &st.u[1])?;
        Ok(Image { rhat: [r0, r1], obs: [observe(&st.u[0], basis), observe(&st.u[1], basis)] })
    }

    /// `(P(φ(σ̃−σ)), P(φ²(η̃−η)), ũ − u)`.
    pub fn displacement(&self, a: &State, b: &State) -> Result<LinearizedInput> {
        let basis = &self.problem.basis;
        let phi = &self.reference.phi;
        let ds: Vec<f64> = a.sigma.values.iter().zip(&b.sigma.values).zip(phi).map(|((x, y), p)| (x - y) * p).collect();
        let de: Vec<f64> = a.eta.values.iter().zip(&b.eta.values).zip(phi).map(|((x, y), p)| (x - y) * p * p).collect();
        Ok(LinearizedInput {
            a_sigma: basis.project(&ds)?,
            a_eta: basis.project(&de)?,
            du: [a.u[0].sub(&b.u[0]), a.u[1].sub(&b.u[1])],
        })
    }

    pub fn x_distance(&self, a: &State, b: &State) -> Result<f64> {
        Ok(x_norm(&self.displacement(a, b)?, &self.spec, &self.problem.basis, self.problem.params.omega))
    }

    /// `(Σ_ν ‖r_ν‖²_{h^σ̌(H^š)})^{1/2} + ‖p‖_{Y^obs}`, the observation part taken
    /// from residues fitted at the linearization point.
    pub fn image_norm(&self, img: &Image) -> Result<f64> {
        let basis = &self.problem.basis;
        let omega = self.problem.params.omega;
        let model: f64 = img
            .rhat
            .iter()
            .map(|r| bochner_norm(r, self.spec.orti, self.spec.s_check(), basis, omega).powi(2))
            .sum::<f64>()
            .sqrt();
        let res = residues_fit(&self.problem, &self.poles, &img.obs, &img.rhat, None)?;
        let rec = recover_coefficients(&self.problem, &self.poles, &res, &img.rhat)?;
        Ok(model + y_norms(&self.problem, &rec, &img.rhat, &self.spec).obs)
    }

    /// `F(ξ̃) − F(ξ) − F′(ξ⁰)(ξ̃ − ξ)`.
    pub fn taylor_remainder(&self, a: &State, b: &State) -> Result<Image> {
        let diff = self.forward(a)?.sub(&self.forward(b)?);
        let lin = linearized_forward(&self.problem, &self.displacement(a, b)?);
        Ok(diff.sub(&Image { rhat: lin.rhat, obs: lin.obs }))
    }
}

/// One pair of the Lipschitz probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSample {
    pub x_distance: f64,
    pub image_distance: f64,
    /// `2·max{1, C̄}·image_distance`
    pub bound: f64,
    pub taylor_ratio: f64,
}

pub fn lipschitz_sample(lin: &Linearization, a: &State, b: &State) -> Result<LipschitzSample> {
    if a.u[0].harmonics() != b.u[0].harmonics() {
        return Err(Error::BasisMismatch("states with different truncations".into()));
    }
    let x = lin.x_distance(a, b)?;
    let y = lin.image_norm(&lin.forward(a)?.sub(&lin.forward(b)?))?;
    let tay = lin.image_norm(&lin.taylor_remainder(a, b)?)?;
    Ok(LipschitzSample { x_distance: x, image_distance: y, bound: 2.0 * lin.cbar.max(1.0) * y, taylor_ratio: tay / x })
}
