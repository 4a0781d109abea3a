//! Truncated Robin eigensystems on an interval or an incommensurate rectangle,
//! Gauss–Legendre projection/synthesis and traces on the observation set.

use crate::error::{Error, Result};
use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Tolerance on the Robin secular equation root.
const ROOT_TOL: f64 = 1e-14;
/// Eigenvalue gap below which the rectangle spectrum counts as degenerate.
const COLLISION_TOL: f64 = 1e-9;
/// Largest denominator tested by the commensurability surrogate.
const MAX_RATIO_DENOM: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// y = 0
    Bottom,
    /// y = L_y
    Top,
    /// x = 0
    Left,
    /// x = L_x
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sigma {
    /// Observation points on an interval.
    Points(Vec<f64>),
    /// A full side of a rectangle, sampled at the Gauss nodes of that side.
    Side(Side),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

/// Geometry, Robin coefficients and observation set.
///
/// `gamma` holds one coefficient per boundary part: `[x=0, x=L]` on an
/// interval, `[x=0, x=Lx, y=0, y=Ly]` on a rectangle. Zero means Neumann.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub gamma: Vec<f64>,
    pub sigma: Sigma,
}

impl DomainSpec {
    pub fn interval(length: f64, gamma: [f64; 2], sigma_points: Vec<f64>) -> Self {
        Self { kind: DomainKind::Interval { length }, gamma: gamma.to_vec(), sigma: Sigma::Points(sigma_points) }
    }

    pub fn rectangle(lx: f64, ly: f64, gamma: [f64; 4], side: Side) -> Self {
        Self { kind: DomainKind::Rectangle { lx, ly }, gamma: gamma.to_vec(), sigma: Sigma::Side(side) }
    }

    /// Lists invariant violations without building anything.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.kind {
            DomainKind::Interval { length } => {
                if !(length > 0.0 && length.is_finite()) {
                    out.push(format!("domain.length must be positive, got {length}"));
                }
                if self.gamma.len() != 2 {
                    out.push(format!("domain.gamma needs 2 entries on an interval, got {}", self.gamma.len()));
                }
                match &self.sigma {
                    Sigma::Points(p) if p.is_empty() => out.push("domain.sigma: no observation points".into()),
                    Sigma::Points(p) => {
                        for &x in p {
                            if !(0.0..=length).contains(&x) {
                                out.push(format!("domain.sigma: point {x} outside [0, {length}]"));
                            }
                        }
                    }
                    Sigma::Side(_) => out.push("domain.sigma: a side is only meaningful on a rectangle".into()),
                }
            }
            DomainKind::Rectangle { lx, ly } => {
                if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
                    out.push(format!("domain lengths must be positive, got ({lx}, {ly})"));
                } else if let Some((p, q)) = commensurate(lx / ly) {
                    out.push(format!("domain side ratio {} is commensurate ({p}/{q}); spectrum would be degenerate", lx / ly));
                }
                if self.gamma.len() != 4 {
                    out.push(format!("domain.gamma needs 4 entries on a rectangle, got {}", self.gamma.len()));
                }
                if let Sigma::Points(_) = self.sigma {
                    out.push("domain.sigma: use a side on a rectangle".into());
                }
            }
        }
        for (i, g) in self.gamma.iter().enumerate() {
            if !(*g >= 0.0 && g.is_finite()) {
                out.push(format!("domain.gamma[{i}] must be nonnegative, got {g}"));
            }
        }
        out
    }
}

/// Returns `(p, q)` when `ratio` is within 1e-9 of `p/q` with `q ≤ 64`, `p ≤ 64`.
pub fn commensurate(ratio: f64) -> Option<(u32, u32)> {
    for q in 1..=MAX_RATIO_DENOM {
        let p = (ratio * q as f64).round();
        if p >= 1.0 && p <= MAX_RATIO_DENOM as f64 && (ratio * q as f64 - p).abs() < 1e-9 {
            return Some((p as u32, q));
        }
    }
    None
}

/// One-dimensional Robin eigenfunctions on `[0, length]`.
#[derive(Debug, Clone)]
pub struct Robin1d {
    pub length: f64,
    pub g0: f64,
    pub g1: f64,
    /// Wavenumbers, `lambda = k^2`.
    pub ks: Vec<f64>,
    norms: Vec<f64>,
}

impl Robin1d {
    pub fn new(length: f64, g0: f64, g1: f64, count: usize) -> Result<Self> {
        if !(length > 0.0) || count == 0 {
            return Err(Error::Invalid(format!("need length > 0 and count >= 1, got {length}, {count}")));
        }
        if g0 < 0.0 || g1 < 0.0 {
            return Err(Error::Invalid("Robin coefficients must be nonnegative".into()));
        }
        let ks = if g0 == 0.0 && g1 == 0.0 {
            (0..count).map(|n| n as f64 * PI / length).collect()
        } else {
            robin_roots(length, g0, g1, count)?
        };
        let norms = ks
            .iter()
            .map(|&k| {
                if k == 0.0 {
                    length.sqrt()
                } else {
                    let b = g0 / k;
                    let l = length;
                    let sq = (1.0 + b * b) * l / 2.0
                        + (1.0 - b * b) * (2.0 * k * l).sin() / (4.0 * k)
                        + b * (1.0 - (2.0 * k * l).cos()) / (2.0 * k);
                    sq.sqrt()
                }
            })
            .collect();
        Ok(Self { length, g0, g1, ks, norms })
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.ks[n] * self.ks[n]
    }

    pub fn eval(&self, n: usize, x: f64) -> f64 {
        let k = self.ks[n];
        if k == 0.0 {
            return 1.0 / self.norms[n];
        }
        ((k * x).cos() + self.g0 / k * (k * x).sin()) / self.norms[n]
    }

    pub fn deriv(&self, n: usize, x: f64) -> f64 {
        let k = self.ks[n];
        if k == 0.0 {
            return 0.0;
        }
        (-k * (k * x).sin() + self.g0 * (k * x).cos()) / self.norms[n]
    }

    pub fn second(&self, n: usize, x: f64) -> f64 {
        let k = self.ks[n];
        if k == 0.0 {
            return 0.0;
        }
        (-k * k * (k * x).cos() - self.g0 * k * (k * x).sin()) / self.norms[n]
    }
}

/// Secular function divided by k, positive at k = 0+.
fn secular(k: f64, l: f64, g0: f64, g1: f64) -> f64 {
    let sinc = if k == 0.0 { l } else { (k * l).sin() / k };
    (g0 * g1 - k * k) * sinc + (g0 + g1) * (k * l).cos()
}

fn robin_roots(l: f64, g0: f64, g1: f64, count: usize) -> Result<Vec<f64>> {
    let step = PI / l / 16.0;
    let kmax = (count as f64 + 2.0) * PI / l;
    let mut roots = Vec::with_capacity(count);
    let mut a = 0.0;
    let mut fa = secular(a, l, g0, g1);
    while roots.len() < count && a < kmax {
        let b = a + step;
        let fb = secular(b, l, g0, g1);
        if fa == 0.0 && a > 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = secular(mid, l, g0, g1);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
                if hi - lo <= ROOT_TOL * hi.max(1.0) {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    if roots.len() < count {
        return Err(Error::Bracket { found: roots.len(), wanted: count });
    }
    Ok(roots)
}

fn gauss_nodes(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n.max(2)).expect("Gauss-Legendre degree >= 2");
    let half = 0.5 * (b - a);
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (a + half * (x + 1.0), half * w))
        .collect()
}

fn quad_count(max_index: usize) -> usize {
    4 * (max_index + 4)
}

/// Truncated eigensystem with quadrature grid and trace table.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub domain: DomainSpec,
    pub lambdas: Vec<f64>,
    /// Always 1: the retained spectrum is simple.
    pub multiplicity: Vec<usize>,
    modes: Vec<(usize, usize)>,
    fx: Robin1d,
    fy: Option<Robin1d>,
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// `values[(q, j)] = φ_j(node_q)`.
    pub values: DMatrix<f64>,
    pub sigma_nodes: Vec<[f64; 2]>,
    pub sigma_weights: Vec<f64>,
    /// `trace[(i, j)] = φ_j(sigma_node_i)`.
    pub trace: DMatrix<f64>,
}

pub fn build_interval_basis(length: f64, gamma: [f64; 2], j: usize, sigma_points: Vec<f64>) -> Result<EigenBasis> {
    build_basis(DomainSpec::interval(length, gamma, sigma_points), j)
}

pub fn build_rectangle_basis(lx: f64, ly: f64, gamma: [f64; 4], j: usize, side: Side) -> Result<EigenBasis> {
    build_basis(DomainSpec::rectangle(lx, ly, gamma, side), j)
}

/// Builds the `j` lowest modes of the domain.
pub fn build_basis(domain: DomainSpec, j: usize) -> Result<EigenBasis> {
    if j == 0 {
        return Err(Error::Invalid("truncation J must be at least 1".into()));
    }
    match domain.kind {
        DomainKind::Interval { length } => {
            if !(length > 0.0) {
                return Err(Error::Invalid(format!("interval length must be positive, got {length}")));
            }
            let fx = Robin1d::new(length, domain.gamma[0], domain.gamma[1], j)?;
            let lambdas: Vec<f64> = (0..j).map(|n| fx.lambda(n)).collect();
            let modes: Vec<(usize, usize)> = (0..j).map(|n| (n, 0)).collect();
            let nodes: Vec<[f64; 2]> = gauss_nodes(quad_count(j), 0.0, length).iter().map(|&(x, _)| [x, 0.0]).collect();
            let weights: Vec<f64> = gauss_nodes(quad_count(j), 0.0, length).iter().map(|&(_, w)| w).collect();
            let (sigma_nodes, sigma_weights) = match &domain.sigma {
                Sigma::Points(p) if !p.is_empty() => (p.iter().map(|&x| [x, 0.0]).collect(), vec![1.0; p.len()]),
                Sigma::Points(_) => return Err(Error::Invalid("sigma needs at least one point".into())),
                Sigma::Side(_) => return Err(Error::Invalid("a side observation set needs a rectangle".into())),
            };
            Ok(finish(domain, lambdas, modes, fx, None, nodes, weights, sigma_nodes, sigma_weights))
        }
        DomainKind::Rectangle { lx, ly } => {
            if !(lx > 0.0 && ly > 0.0) {
                return Err(Error::Invalid(format!("rectangle lengths must be positive, got ({lx}, {ly})")));
            }
            let fx = Robin1d::new(lx, domain.gamma[0], domain.gamma[1], j)?;
            let fy = Robin1d::new(ly, domain.gamma[2], domain.gamma[3], j)?;
            let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(j * j);
            for a in 0..j {
                for b in 0..j {
                    all.push((fx.lambda(a) + fy.lambda(b), a, b));
                }
            }
            all.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
            all.truncate(j);
            for w in 0..all.len().saturating_sub(1) {
                let gap = all[w + 1].0 - all[w].0;
                if gap <= COLLISION_TOL * all[w + 1].0.max(1.0) {
                    return Err(Error::Degenerate { i: w, j: w + 1, gap });
                }
            }
            let lambdas = all.iter().map(|t| t.0).collect();
            let modes: Vec<(usize, usize)> = all.iter().map(|t| (t.1, t.2)).collect();
            let mx = modes.iter().map(|m| m.0).max().unwrap();
            let my = modes.iter().map(|m| m.1).max().unwrap();
            let gx = gauss_nodes(quad_count(mx), 0.0, lx);
            let gy = gauss_nodes(quad_count(my), 0.0, ly);
            let mut nodes = Vec::with_capacity(gx.len() * gy.len());
            let mut weights = Vec::with_capacity(gx.len() * gy.len());
            for &(x, wx) in &gx {
                for &(y, wy) in &gy {
                    nodes.push([x, y]);
                    weights.push(wx * wy);
                }
            }
            let side = match &domain.sigma {
                Sigma::Side(s) => *s,
                Sigma::Points(_) => return Err(Error::Invalid("a rectangle observes along a side".into())),
            };
            let (sigma_nodes, sigma_weights): (Vec<[f64; 2]>, Vec<f64>) = match side {
                Side::Bottom => gx.iter().map(|&(x, w)| ([x, 0.0], w)).unzip(),
                Side::Top => gx.iter().map(|&(x, w)| ([x, ly], w)).unzip(),
                Side::Left => gy.iter().map(|&(y, w)| ([0.0, y], w)).unzip(),
                Side::Right => gy.iter().map(|&(y, w)| ([lx, y], w)).unzip(),
            };
            Ok(finish(domain, lambdas, modes, fx, Some(fy), nodes, weights, sigma_nodes, sigma_weights))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    domain: DomainSpec,
    lambdas: Vec<f64>,
    modes: Vec<(usize, usize)>,
    fx: Robin1d,
    fy: Option<Robin1d>,
    nodes: Vec<[f64; 2]>,
    weights: Vec<f64>,
    sigma_nodes: Vec<[f64; 2]>,
    sigma_weights: Vec<f64>,
) -> EigenBasis {
    let j = lambdas.len();
    let mut basis = EigenBasis {
        domain,
        multiplicity: vec![1; j],
        lambdas,
        modes,
        fx,
        fy,
        values: DMatrix::zeros(nodes.len(), j),
        trace: DMatrix::zeros(sigma_nodes.len(), j),
        nodes,
        weights,
        sigma_nodes,
        sigma_weights,
    };
    for c in 0..j {
        for q in 0..basis.nodes.len() {
            basis.values[(q, c)] = basis.eval(c, basis.nodes[q]);
        }
        for i in 0..basis.sigma_nodes.len() {
            basis.trace[(i, c)] = basis.eval(c, basis.sigma_nodes[i]);
        }
    }
    basis
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_sigma(&self) -> usize {
        self.sigma_nodes.len()
    }

    /// Evaluates mode `j` at a point.
    pub fn eval(&self, j: usize, p: [f64; 2]) -> f64 {
        let (a, b) = self.modes[j];
        match &self.fy {
            None => self.fx.eval(a, p[0]),
            Some(fy) => self.fx.eval(a, p[0]) * fy.eval(b, p[1]),
        }
    }

    /// Evaluates `-Δφ_j` at a point from the analytic second derivatives.
    pub fn neg_laplacian(&self, j: usize, p: [f64; 2]) -> f64 {
        let (a, b) = self.modes[j];
        match &self.fy {
            None => -self.fx.second(a, p[0]),
            Some(fy) => -(self.fx.second(a, p[0]) * fy.eval(b, p[1]) + self.fx.eval(a, p[0]) * fy.second(b, p[1])),
        }
    }

    /// Discrete L² norm of `-Δφ_j - λ_j φ_j`.
    pub fn eigen_residual(&self, j: usize) -> f64 {
        let mut acc = 0.0;
        for (q, p) in self.nodes.iter().enumerate() {
            let r = self.neg_laplacian(j, *p) - self.lambdas[j] * self.values[(q, j)];
            acc += self.weights[q] * r * r;
        }
        acc.sqrt()
    }

    /// Gram matrix of the retained modes under the quadrature.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.len(), self.len());
        for a in 0..self.len() {
            for b in a..self.len() {
                let s: f64 = (0..self.n_nodes()).map(|q| self.weights[q] * self.values[(q, a)] * self.values[(q, b)]).sum();
                g[(a, b)] = s;
                g[(b, a)] = s;
            }
        }
        g
    }

    fn check_grid(&self, n: usize) -> Result<()> {
        if n != self.n_nodes() {
            return Err(Error::GridMismatch { expected: self.n_nodes(), got: n });
        }
        Ok(())
    }

    pub fn project(&self, samples: &[f64]) -> Result<DVector<f64>> {
        self.check_grid(samples.len())?;
        let mut c = DVector::zeros(self.len());
        for j in 0..self.len() {
            c[j] = (0..self.n_nodes()).map(|q| self.weights[q] * samples[q] * self.values[(q, j)]).sum();
        }
        Ok(c)
    }

    pub fn synthesize(&self, coeffs: &DVector<f64>) -> Result<Vec<f64>> {
        if coeffs.len() != self.len() {
            return Err(Error::BasisMismatch(format!("expected {} coefficients, got {}", self.len(), coeffs.len())));
        }
        Ok((&self.values * coeffs).iter().copied().collect())
    }

    pub fn project_complex(&self, samples: &[Complex64]) -> Result<DVector<Complex64>> {
        self.check_grid(samples.len())?;
        let mut c = DVector::zeros(self.len());
        for j in 0..self.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for q in 0..self.n_nodes() {
                acc += samples[q] * (self.weights[q] * self.values[(q, j)]);
            }
            c[j] = acc;
        }
        Ok(c)
    }

    pub fn synthesize_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_nodes()];
        for (j, &c) in coeffs.iter().enumerate() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (q, o) in out.iter_mut().enumerate() {
                *o += c * self.values[(q, j)];
            }
        }
        out
    }

    /// Samples of a function on the quadrature grid.
    pub fn sample<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&p| f(p)).collect()
    }

    /// Trace of mode `l` on Σ; errors when it vanishes (rank 0 instead of 1).
    pub fn trace_on_eigenspace(&self, l: usize) -> Result<DVector<f64>> {
        let col = self.trace.column(l).into_owned();
        let norm = self.sigma_norm(&col);
        let scale = self.values.column(l).amax().max(1.0);
        if norm <= 1e-10 * scale {
            return Err(Error::TraceRank { mode: l, norm });
        }
        Ok(col)
    }

    /// Checks every retained eigenspace for a nonvanishing trace.
    pub fn check_traces(&self) -> Result<()> {
        for l in 0..self.len() {
            self.trace_on_eigenspace(l)?;
        }
        Ok(())
    }

    /// Weighted ℓ² norm on the Σ samples.
    pub fn sigma_norm(&self, v: &DVector<f64>) -> f64 {
        v.iter().zip(&self.sigma_weights).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
    }

    /// Rows `(j, lambda, trace values...)` for export.
    pub fn summary_rows(&self) -> Vec<(usize, f64, Vec<f64>)> {
        (0..self.len()).map(|j| (j, self.lambdas[j], self.trace.column(j).iter().copied().collect())).collect()
    }

    /// Minimum of |φ_j| over the quadrature grid.
    pub fn min_abs_on_grid(&self, j: usize) -> f64 {
        self.values.column(j).iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// Boundary sample points with the outward normal derivative of mode `j`.
    pub fn boundary_normal_derivatives(&self, j: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
        let (a, b) = self.modes[j];
        match (&self.domain.kind, &self.fy) {
            (DomainKind::Interval { length }, _) => {
                let l = *length;
                (vec![[0.0, 0.0], [l, 0.0]], vec![-self.fx.deriv(a, 0.0), self.fx.deriv(a, l)])
            }
            (DomainKind::Rectangle { lx, ly }, Some(fy)) => {
                let (lx, ly) = (*lx, *ly);
                let mut pts = Vec::new();
                let mut dn = Vec::new();
                for (x, _) in gauss_nodes(quad_count(a), 0.0, lx) {
                    pts.push([x, 0.0]);
                    dn.push(-self.fx.eval(a, x) * fy.deriv(b, 0.0));
                    pts.push([x, ly]);
                    dn.push(self.fx.eval(a, x) * fy.deriv(b, ly));
                }
                for (y, _) in gauss_nodes(quad_count(b), 0.0, ly) {
                    pts.push([0.0, y]);
                    dn.push(-self.fx.deriv(a, 0.0) * fy.eval(b, y));
                    pts.push([lx, y]);
                    dn.push(self.fx.deriv(a, lx) * fy.eval(b, y));
                }
                (pts, dn)
            }
            _ => (Vec::new(), Vec::new()),
        }
    }

    pub fn same_layout(&self, other: &EigenBasis) -> bool {
        self.lambdas == other.lambdas && self.n_nodes() == other.n_nodes() && self.n_sigma() == other.n_sigma()
    }
}
