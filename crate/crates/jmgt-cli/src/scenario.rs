//! Scenario files: one TOML document per run.

use jmgt::forward::{HarmonicField, MaterialField, ModelParams};
use jmgt::norms::NormSpec;
use jmgt::reconstruct::LinearizedInput;
use jmgt::spectral::{DomainSpec, EigenBasis, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    BasisReport,
    ForwardSolve,
    PoleReport,
    LinearizedRoundtrip,
    StabilityProbe,
    QrSweep,
    SmoothingStudy,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::BasisReport => "basis-report",
            Preset::ForwardSolve => "forward-solve",
            Preset::PoleReport => "pole-report",
            Preset::LinearizedRoundtrip => "linearized-roundtrip",
            Preset::StabilityProbe => "stability-probe",
            Preset::QrSweep => "qr-sweep",
            Preset::SmoothingStudy => "smoothing-study",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideName {
    Bottom,
    Top,
    Left,
    Right,
}

impl From<SideName> for Side {
    fn from(s: SideName) -> Self {
        match s {
            SideName::Bottom => Side::Bottom,
            SideName::Top => Side::Top,
            SideName::Left => Side::Left,
            SideName::Right => Side::Right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Domain {
    Interval { length: f64, gamma: [f64; 2], sigma: Vec<f64> },
    Rectangle { lx: f64, ly: f64, gamma: [f64; 4], side: SideName },
}

impl Domain {
    pub fn spec(&self) -> DomainSpec {
        match self {
            Domain::Interval { length, gamma, sigma } => DomainSpec::interval(*length, *gamma, sigma.clone()),
            Domain::Rectangle { lx, ly, gamma, side } => DomainSpec::rectangle(*lx, *ly, *gamma, (*side).into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub tau: f64,
    pub beta: f64,
    pub sigma0: f64,
    pub omega: f64,
    /// Period `T`; must equal `2π/ω`.
    pub period: f64,
    /// Observation horizon `T₀ ∈ (0, T]`.
    pub t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Norms {
    pub s: f64,
    pub orti: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub modes: usize,
    pub harmonics: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub width: f64,
    pub amplitude: f64,
    pub phi_mode: usize,
    #[serde(default)]
    pub eta0: f64,
}

/// A coefficient field on the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Field {
    Constant { value: f64 },
    Gaussian { amplitude: f64, center: [f64; 2], width: f64 },
    /// Combination of the leading eigenfunctions.
    Modes { coeffs: Vec<f64> },
}

impl Field {
    pub fn sample(&self, basis: &EigenBasis) -> jmgt::Result<MaterialField> {
        match self {
            Field::Constant { value } => Ok(MaterialField::constant(basis, *value)),
            Field::Gaussian { amplitude, center, width } => Ok(MaterialField::from_fn(basis, |x| {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                amplitude * (-r2 / (2.0 * width * width)).exp()
            })),
            Field::Modes { coeffs } => {
                let mut c = nalgebra::DVector::zeros(basis.len());
                for (l, v) in coeffs.iter().enumerate() {
                    c[l] = *v;
                }
                MaterialField::from_values(basis, basis.synthesize(&c)?)
            }
        }
    }

    fn violations(&self, name: &str, modes: usize) -> Vec<String> {
        let mut v = Vec::new();
        match self {
            Field::Constant { value } if !value.is_finite() => v.push(format!("{name}.value must be finite")),
            Field::Gaussian { width, .. } if !(*width > 0.0) => v.push(format!("{name}.width must be positive, got {width}")),
            Field::Modes { coeffs } if coeffs.len() > modes => v.push(format!(
                "{name}.coeffs references {} modes but the truncation keeps {modes}",
                coeffs.len()
            )),
            _ => {}
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub sigma: Field,
    pub eta: Field,
    /// Size of the random state perturbation `u̲`, decaying like `(1+ℓ)⁻³ m⁻³`.
    #[serde(default)]
    pub state_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiRev {
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "one")]
    pub c1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Smoothing {
    pub delta_tildes: Vec<f64>,
    pub tau_dp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stability {
    pub radii: Vec<f64>,
    pub pairs: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub preset: Preset,
    pub seed: u64,
    pub output: PathBuf,
    pub domain: Domain,
    pub params: Params,
    pub norms: Norms,
    pub truncation: Truncation,
    pub source: Source,
    pub truth: Truth,
    #[serde(default)]
    pub deltas: Vec<f64>,
    pub quasirev: Option<QuasiRev>,
    pub smoothing: Option<Smoothing>,
    pub stability: Option<Stability>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn model_params(&self) -> ModelParams {
        let p = &self.params;
        ModelParams {
            tau: p.tau,
            beta: p.beta,
            sigma0: p.sigma0,
            omega: p.omega,
            period: p.period,
            t0: p.t0,
            a: self.source.amplitude,
        }
    }

    pub fn norm_spec(&self) -> NormSpec {
        NormSpec { s: self.norms.s, orti: self.norms.orti }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON echo, with the
    /// output directory left out.
    pub fn hash(&self) -> String {
        let echo = Self { output: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_string(&echo).expect("scenario serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Field-level invariant violations; empty when the scenario can run.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let modes = self.truncation.modes;
        if self.name.trim().is_empty() {
            v.push("name must not be empty".into());
        }
        if modes == 0 {
            v.push("truncation.modes must be at least 1".into());
        }
        if self.truncation.harmonics == 0 {
            v.push("truncation.harmonics must be at least 1".into());
        }
        v.extend(self.domain.spec().violations());
        for msg in self.model_params().violations() {
            v.push(msg.replace("params.a ", "source.amplitude ").replace("params.a=", "source.amplitude="));
        }
        if (self.params.period * self.params.omega - 2.0 * PI).abs() > 1e-12 && !v.iter().any(|m| m.contains("2*pi")) {
            v.push("params.period * params.omega must equal 2*pi".into());
        }
        v.extend(self.norm_spec().violations());
        let w = self.source.width;
        if !(w > 0.0 && w < self.params.period) {
            v.push(format!("source.width must lie in (0, T), got {w}"));
        }
        if self.source.phi_mode >= modes.max(1) {
            v.push(format!("source.phi_mode {} outside the truncation of {modes} modes", self.source.phi_mode));
        }
        if !self.source.eta0.is_finite() {
            v.push("source.eta0 must be finite".into());
        }
        v.extend(self.truth.sigma.violations("truth.sigma", modes));
        v.extend(self.truth.eta.violations("truth.eta", modes));
        if !(self.truth.state_amplitude >= 0.0 && self.truth.state_amplitude.is_finite()) {
            v.push("truth.state_amplitude must be nonnegative".into());
        }
        for (i, d) in self.deltas.iter().enumerate() {
            if !(*d >= 0.0 && d.is_finite()) {
                v.push(format!("deltas[{i}] must be nonnegative, got {d}"));
            }
        }
        match self.preset {
            Preset::QrSweep => match &self.quasirev {
                None => v.push("quasirev section required by preset qr-sweep".into()),
                Some(q) => {
                    if self.deltas.iter().filter(|d| **d > 0.0).count() == 0 {
                        v.push("deltas: qr-sweep needs at least one positive noise level".into());
                    }
                    if !(q.tau0 >= 0.0) {
                        v.push(format!("quasirev.tau0 must be nonnegative, got {}", q.tau0));
                    }
                    if !(q.tau_min > 0.0 && q.tau_min <= q.tau_max) {
                        v.push(format!("quasirev needs 0 < tau_min <= tau_max, got {} and {}", q.tau_min, q.tau_max));
                    }
                    if q.tau0 + q.tau_max > self.params.sigma0 * self.params.beta {
                        v.push("quasirev: tau0 + tau_max exceeds sigma0*beta (stability requirement sigma0*beta >= tau)".into());
                    }
                    if !(q.scale > 0.0 && q.c0 > 0.0 && q.c1 > 0.0) {
                        v.push("quasirev.scale, c0 and c1 must be positive".into());
                    }
                }
            },
            Preset::SmoothingStudy => {
                if !matches!(self.domain, Domain::Rectangle { .. }) {
                    v.push("domain: smoothing-study needs a rectangle observed along a side".into());
                }
                match &self.smoothing {
                    None => v.push("smoothing section required by preset smoothing-study".into()),
                    Some(s) => {
                        if s.delta_tildes.is_empty() || s.delta_tildes.iter().any(|d| !(*d >= 0.0)) {
                            v.push("smoothing.delta_tildes must be a nonempty list of nonnegative levels".into());
                        }
                        if !(s.tau_dp >= 1.0) {
                            v.push(format!("smoothing.tau_dp must be at least 1, got {}", s.tau_dp));
                        }
                    }
                }
            }
            Preset::StabilityProbe => match &self.stability {
                None => v.push("stability section required by preset stability-probe".into()),
                Some(s) => {
                    if s.radii.iter().any(|r| !(*r > 0.0)) {
                        v.push("stability.radii must be positive".into());
                    }
                }
            },
            _ => {}
        }
        v
    }

    /// Seeded random state perturbation `u̲` for both sources.
    pub fn random_states(&self, rng: &mut ChaCha8Rng) -> [HarmonicField; 2] {
        let (m, j) = (self.truncation.harmonics, self.truncation.modes);
        let amp = self.truth.state_amplitude;
        [0, 1].map(|_| {
            let mut u = HarmonicField::zeros(m, j);
            for h in 1..=m {
                for l in 0..j {
                    let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    u.set(h, l, z * amp / ((1.0 + l as f64).powi(3) * (h as f64).powi(3)));
                }
            }
            u
        })
    }

    /// Linearized truth `(P(φσ̲), P(φ²η̲), u̲)`.
    pub fn linearized_truth(&self, basis: &EigenBasis, phi: &[f64]) -> jmgt::Result<LinearizedInput> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let du = self.random_states(&mut rng);
        let s = self.truth.sigma.sample(basis)?;
        let e = self.truth.eta.sample(basis)?;
        LinearizedInput::from_fields(basis, phi, &s, &e, du)
    }
}
