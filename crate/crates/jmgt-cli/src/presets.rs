//! The seven experiment presets. Each returns its CSV tables and a summary
//! object for the manifest.

use crate::scenario::{Preset, Scenario};
use crate::RunError;
use jmgt::forward::*;
use jmgt::norms::{coeff_norm, x_norm};
use jmgt::poles::{pole_asymptotic, verify_bounds, PoleSet, Selection};
use jmgt::quasirev::{kappa, run_sweep, smooth_data, add_noise, SweepConfig, TauSchedule};
use jmgt::reconstruct::*;
use jmgt::sources::{amplitude_modulate, build_reference_state, design_delta_pulse};
use jmgt::spectral::{build_basis, EigenBasis};
use jmgt::stability::{lipschitz_sample, Linearization};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// One CSV artifact: file name, header, rows of already formatted cells.
pub struct Table {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Value,
}

fn num(ctx: &'static str) -> impl Fn(jmgt::Error) -> RunError {
    move |e| RunError::Numerical { context: ctx, source: e }
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

fn basis(sc: &Scenario) -> Result<EigenBasis, RunError> {
    build_basis(sc.domain.spec(), sc.truncation.modes).map_err(num("spectral-core"))
}

fn problem(sc: &Scenario) -> Result<Problem, RunError> {
    let params = sc.model_params();
    let pulse = design_delta_pulse(&params, sc.truncation.harmonics, sc.source.width).map_err(num("sources"))?;
    let sources = amplitude_modulate(pulse, sc.source.amplitude).map_err(num("sources"))?;
    Ok(Problem { params, basis: basis(sc)?, sources })
}

/// Largest entry of each error component over the largest truth entry.
fn relative_errors(rec: &ReconstructionResult, truth: &LinearizedInput) -> [f64; 3] {
    let den = truth.a_sigma.amax().max(truth.a_eta.amax()).max(truth.du[0].max_abs()).max(truth.du[1].max_abs());
    [
        (&rec.a_sigma - &truth.a_sigma).amax() / den,
        (&rec.a_eta - &truth.a_eta).amax() / den,
        rec.b[0].sub(&truth.du[0]).max_abs().max(rec.b[1].sub(&truth.du[1]).max_abs()) / den,
    ]
}

fn random_direction(rng: &mut ChaCha8Rng, m: usize, j: usize) -> LinearizedInput {
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

pub fn run(sc: &Scenario) -> Result<Outcome, RunError> {
    match sc.preset {
        Preset::BasisReport => basis_report(sc),
        Preset::ForwardSolve => forward_solve(sc),
        Preset::PoleReport => pole_report(sc),
        Preset::LinearizedRoundtrip => linearized_roundtrip(sc),
        Preset::StabilityProbe => stability_probe(sc),
        Preset::QrSweep => qr_sweep(sc),
        Preset::SmoothingStudy => smoothing_study(sc),
    }
}

fn basis_report(sc: &Scenario) -> Result<Outcome, RunError> {
    let b = basis(sc)?;
    let hash = sc.hash();
    let rows = (0..b.len())
        .map(|j| {
            let tr = DVector::from_iterator(b.n_sigma(), b.trace.column(j).iter().copied());
            vec![
                hash.clone(),
                j.to_string(),
                f(b.lambdas[j]),
                f(b.eigen_residual(j)),
                f(b.min_abs_on_grid(j)),
                f(b.sigma_norm(&tr)),
            ]
        })
        .collect();
    let gram = b.gram();
    let ortho = (&gram - nalgebra::DMatrix::identity(b.len(), b.len())).amax();
    Ok(Outcome {
        tables: vec![Table {
            file: "basis.csv",
            header: vec!["scenario_hash", "mode", "lambda", "eigen_residual", "min_abs_on_grid", "trace_norm"],
            rows,
        }],
        summary: json!({ "modes": b.len(), "sigma_samples": b.n_sigma(), "gram_deviation": ortho }),
    })
}

fn forward_solve(sc: &Scenario) -> Result<Outcome, RunError> {
    let pr = problem(sc)?;
    let (params, b) = (&pr.params, &pr.basis);
    let reference = build_reference_state(b, sc.source.phi_mode, &pr.sources, params, sc.source.eta0).map_err(num("sources"))?;
    let s0 = MaterialField::constant(b, params.sigma0);
    let e0 = MaterialField::constant(b, sc.source.eta0);
    let ds = sc.truth.sigma.sample(b).map_err(num("forward"))?;
    let de = sc.truth.eta.sample(b).map_err(num("forward"))?;
    let sigma = MaterialField::from_values(b, s0.values.iter().zip(&ds.values).map(|(x, y)| x + y).collect()).map_err(num("forward"))?;
    let eta = MaterialField::from_values(b, e0.values.iter().zip(&de.values).map(|(x, y)| x + y).collect()).map_err(num("forward"))?;
    let hash = sc.hash();
    let mut rows = vec![];
    let mut reports = vec![];
    for nu in 0..2 {
        let r = model_operator(params, b, &s0, &e0, &reference.u0[nu]).map_err(num("forward"))?;
        let (u, rep) = solve_multiharmonic(params, b, &sigma, &eta, &r, SolveOptions::default()).map_err(num("forward"))?;
        let check = residual_time_domain(params, b, &sigma, &eta, &u, &r).map_err(num("forward"))?;
        let obs = observe(&u, b);
        for m in 1..=u.harmonics() {
            let norm = u.harmonic(m).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let o = obs.values.row(m - 1).iter().map(|z| z.norm()).fold(0.0, f64::max);
            rows.push(vec![hash.clone(), (nu + 1).to_string(), m.to_string(), f(norm), f(o)]);
        }
        reports.push(json!({
            "source": nu + 1,
            "iterations": rep.iterations,
            "damping": rep.damping,
            "solver_residual": rep.residual,
            "time_domain_residual": check,
        }));
    }
    Ok(Outcome {
        tables: vec![Table {
            file: "forward.csv",
            header: vec!["scenario_hash", "source", "harmonic", "state_norm", "max_abs_observation"],
            rows,
        }],
        summary: json!({ "solves": reports }),
    })
}

fn pole_report(sc: &Scenario) -> Result<Outcome, RunError> {
    let b = basis(sc)?;
    let params = sc.model_params();
    let set = PoleSet::compute(&b.lambdas, &params, Selection::AllowReal).map_err(num("poles"))?;
    let hash = sc.hash();
    let mut rows = vec![];
    for (l, e) in set.entries.iter().enumerate() {
        let asym = pole_asymptotic(e.lambda, &params).ok();
        let (are, aim, rel) = match asym {
            Some(a) => (f(a.re), f(a.im), f((e.pole - a).norm() / e.pole.norm())),
            None => (String::new(), String::new(), String::new()),
        };
        rows.push(vec![
            hash.clone(),
            l.to_string(),
            f(e.lambda),
            f(e.pole.re),
            f(e.pole.im),
            are,
            aim,
            rel,
            (e.pole.im > 0.0).to_string(),
        ]);
    }
    let summary = if params.tau > 0.0 {
        let d = verify_bounds(&set, &params).map_err(num("poles"))?;
        json!({ "alpha": params.alpha(), "c_fit": d.c_fit, "c_real": d.c_real, "c_modulus": d.c_modulus, "max_re": d.max_re })
    } else {
        json!({ "alpha": params.alpha() })
    };
    Ok(Outcome {
        tables: vec![Table {
            file: "poles.csv",
            header: vec![
                "scenario_hash",
                "mode",
                "lambda",
                "pole_re",
                "pole_im",
                "asymptotic_re",
                "asymptotic_im",
                "asymptotic_rel_error",
                "oscillatory",
            ],
            rows,
        }],
        summary,
    })
}

fn linearized_roundtrip(sc: &Scenario) -> Result<Outcome, RunError> {
    let pr = problem(sc)?;
    let spec = sc.norm_spec();
    let reference = build_reference_state(&pr.basis, sc.source.phi_mode, &pr.sources, &pr.params, 0.0).map_err(num("sources"))?;
    let truth = sc.linearized_truth(&pr.basis, &reference.phi).map_err(num("reconstruct"))?;
    let poles = PoleSet::compute(&pr.basis.lambdas, &pr.params, Selection::Strict).map_err(num("poles"))?;
    let data = linearized_forward(&pr, &truth);
    let hash = sc.hash();
    let mut rows = vec![];
    let mut oracle_err = f64::NAN;
    let mut runs: Vec<(&str, f64)> = vec![("oracle", 0.0), ("fit", 0.0)];
    runs.extend(sc.deltas.iter().filter(|d| **d > 0.0).map(|d| ("fit", *d)));
    for (k, (mode, delta)) in runs.into_iter().enumerate() {
        let obs = if delta > 0.0 {
            add_noise(&data.obs, delta, sc.seed.wrapping_add(k as u64), &pr.basis, spec.s, pr.params.omega).obs
        } else {
            data.obs.clone()
        };
        let d = LinearizedData { rhat: data.rhat.clone(), obs };
        let (rm, oracle) = if mode == "oracle" { (ResidueMode::Oracle, Some(&truth)) } else { (ResidueMode::fit(), None) };
        let rec = reconstruct(&pr, &poles, &d, rm, oracle).map_err(num("reconstruct"))?;
        let e = relative_errors(&rec, &truth);
        let max = e.iter().cloned().fold(0.0, f64::max);
        if mode == "oracle" {
            oracle_err = max;
        }
        let diff = LinearizedInput {
            a_sigma: &rec.a_sigma - &truth.a_sigma,
            a_eta: &rec.a_eta - &truth.a_eta,
            du: [rec.b[0].sub(&truth.du[0]), rec.b[1].sub(&truth.du[1])],
        };
        rows.push(vec![
            hash.clone(),
            mode.into(),
            f(delta),
            f(e[0]),
            f(e[1]),
            f(e[2]),
            f(max),
            f(x_norm(&diff, &spec, &pr.basis, pr.params.omega)),
            f(rec.residues.condition),
        ]);
    }
    Ok(Outcome {
        tables: vec![Table {
            file: "roundtrip.csv",
            header: vec![
                "scenario_hash",
                "residues",
                "delta",
                "rel_error_a_sigma",
                "rel_error_a_eta",
                "rel_error_states",
                "max_rel_error",
                "x_error",
                "fit_condition",
            ],
            rows,
        }],
        summary: json!({ "max_rel_error": oracle_err, "truth_x_norm": x_norm(&truth, &spec, &pr.basis, pr.params.omega) }),
    })
}

fn stability_probe(sc: &Scenario) -> Result<Outcome, RunError> {
    let st = sc.stability.as_ref().expect("validated");
    let pr = problem(sc)?;
    let (m, j) = (pr.harmonics(), pr.modes());
    let lin = Linearization::new(pr, sc.source.phi_mode, sc.norm_spec()).map_err(num("stability"))?;
    let hash = sc.hash();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut rows = vec![];
    let d1 = random_direction(&mut rng, m, j);
    let d2 = random_direction(&mut rng, m, j);
    let mut ratios = vec![];
    for (k, &rho) in st.radii.iter().enumerate() {
        let a = lin.perturbed_state(&d1.scale(rho)).map_err(num("stability"))?;
        let b = lin.perturbed_state(&d2.scale(rho)).map_err(num("stability"))?;
        let s = lipschitz_sample(&lin, &a, &b).map_err(num("stability"))?;
        ratios.push((rho, s.taylor_ratio));
        rows.push(vec![hash.clone(), "taylor".into(), k.to_string(), f(rho), f(s.x_distance), f(s.image_distance), f(s.bound), f(s.taylor_ratio)]);
    }
    let base = lin.base_state();
    let mut worst: f64 = 0.0;
    for k in 0..st.pairs {
        let p1 = random_direction(&mut rng, m, j);
        let p2 = random_direction(&mut rng, m, j);
        let mut scale = 1e-2;
        let (a, b) = loop {
            let state = |d: &LinearizedInput| {
                lin.solved_state(&(&d.a_sigma * scale), &(&d.a_eta * (scale * 1e-2)), &[d.du[0].scale(scale), d.du[1].scale(scale)])
            };
            let a = state(&p1).map_err(num("stability"))?;
            let b = state(&p2).map_err(num("stability"))?;
            let ra = lin.x_distance(&a, &base).map_err(num("stability"))?;
            let rb = lin.x_distance(&b, &base).map_err(num("stability"))?;
            if ra.max(rb) < lin.radius() || scale < 1e-12 {
                break (a, b);
            }
            scale *= 0.5;
        };
        let s = lipschitz_sample(&lin, &a, &b).map_err(num("stability"))?;
        worst = worst.max(s.x_distance / s.bound);
        rows.push(vec![hash.clone(), "lipschitz".into(), k.to_string(), f(scale), f(s.x_distance), f(s.image_distance), f(s.bound), f(s.taylor_ratio)]);
    }
    let slopes: Vec<f64> = ratios.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect();
    Ok(Outcome {
        tables: vec![Table {
            file: "stability.csv",
            header: vec!["scenario_hash", "kind", "index", "scale", "x_distance", "image_distance", "bound", "taylor_ratio"],
            rows,
        }],
        summary: json!({
            "c0": lin.c0,
            "cbar": lin.cbar,
            "radius": lin.radius(),
            "max_x_over_bound": worst,
            "taylor_slopes": slopes,
        }),
    })
}

fn qr_sweep(sc: &Scenario) -> Result<Outcome, RunError> {
    let q = sc.quasirev.as_ref().expect("validated");
    let pr = problem(sc)?;
    let reference = build_reference_state(&pr.basis, sc.source.phi_mode, &pr.sources, &pr.params, 0.0).map_err(num("sources"))?;
    let truth = sc.linearized_truth(&pr.basis, &reference.phi).map_err(num("reconstruct"))?;
    let config = SweepConfig {
        tau0: q.tau0,
        deltas: sc.deltas.iter().copied().filter(|d| *d > 0.0).collect(),
        schedule: TauSchedule { scale: q.scale, ..TauSchedule::new(q.tau_min, q.tau_max) },
        spec: sc.norm_spec(),
        c0: q.c0,
        c1: q.c1,
        seed: sc.seed,
        pilot_deltas: None,
        residues: ResidueMode::fit(),
    };
    let rep = run_sweep(&pr, &truth, &config).map_err(num("quasirev"))?;
    let hash = sc.hash();
    let rows = rep
        .rows
        .iter()
        .map(|r| vec![hash.clone(), f(r.delta), f(r.tau), f(r.error_x), f(r.bound), f(r.cbar), f(r.ctilde), r.status.clone()])
        .collect();
    let decreasing = rep.rows.windows(2).all(|w| w[1].error_x < w[0].error_x);
    Ok(Outcome {
        tables: vec![Table {
            file: "sweep.csv",
            header: vec!["scenario_hash", "delta", "tau", "error_x", "bound", "cbar", "ctilde", "status"],
            rows,
        }],
        summary: json!({
            "calibration": rep.calibration,
            "dt_norm": rep.dt_norm,
            "truth_norm": rep.truth_norm,
            "error_decreasing": decreasing,
            "all_within_bound": rep.rows.iter().all(|r| r.status == "ok"),
        }),
    })
}

fn smoothing_study(sc: &Scenario) -> Result<Outcome, RunError> {
    let sm = sc.smoothing.as_ref().expect("validated");
    let b = basis(sc)?;
    let s = sc.norms.s;
    let target = sc.truth.sigma.sample(&b).map_err(num("quasirev"))?.coeffs;
    let clean: Vec<f64> = (0..b.n_sigma()).map(|i| (0..b.len()).map(|l| target[l] * b.trace[(i, l)]).sum()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let hash = sc.hash();
    let mut rows = vec![];
    let mut errors = vec![];
    for &dt in &sm.delta_tildes {
        let n: Vec<f64> = (0..b.n_sigma()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nn = b.sigma_norm(&DVector::from_column_slice(&n));
        let data: Vec<f64> = clean.iter().zip(&n).map(|(c, e)| if nn > 0.0 { c + e * dt / nn } else { *c }).collect();
        let out = smooth_data(&b, &data, dt, s, sm.tau_dp).map_err(num("quasirev"))?;
        let err = coeff_norm(&(&out.coeffs - &target), s, &b);
        errors.push(err);
        rows.push(vec![
            hash.clone(),
            f(dt),
            out.level.to_string(),
            f(out.kappa[out.level - 1]),
            f(out.residuals[out.level - 1]),
            f(err),
        ]);
    }
    let kappas: Vec<Vec<String>> = (1..=b.len()).map(|l| vec![hash.clone(), l.to_string(), f(kappa(&b, l, s))]).collect();
    Ok(Outcome {
        tables: vec![
            Table {
                file: "smoothing.csv",
                header: vec!["scenario_hash", "delta_tilde", "level", "kappa", "misfit", "error_hs"],
                rows,
            },
            Table { file: "kappa.csv", header: vec!["scenario_hash", "level", "kappa"], rows: kappas },
        ],
        summary: json!({ "errors": errors, "target_hs_norm": coeff_norm(&target, s, &b) }),
    })
}
