//! Capacity region through supporting hyperplanes.
//!
//! For a normal direction `(γ, μ) ∈ [0,1]×[0,1/2]` the hyperplane value is
//! the maximum over structured joints of
//! `γμ·I(X;Y|U) + γ(1−μ)·I(U;Z) + (1−γ)·I(X;Y)`, and each value bounds the
//! rates by `(γμ+1−γ)·R1 + (γ(1−μ)+1−γ)·R2 ≤ value`. The region polygon is
//! the intersection of these halfplanes with the nonnegative quadrant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{joint_mass_from_ux, joint_from_aux, AuxInputLaw, ChannelPair};
use crate::error::{Error, Result};
use crate::loglin::LogLinearForm;
use crate::prob::{
    conditional_mutual_information, kl_divergence, InfoQuantity, Layout, Mask, StochasticMatrix,
    M_ALL, M_U, M_X, M_Y, M_Z,
};
use crate::simplex::{self, ascend, AscentConfig, SimplexObjective};

/// Normal direction of a supporting hyperplane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneParams {
    pub gamma: f64,
    pub mu: f64,
}

impl HyperplaneParams {
    pub fn new(gamma: f64, mu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) || !(0.0..=0.5).contains(&mu) {
            return Err(Error::Validation(format!(
                "hyperplane parameters out of range: gamma={gamma}, mu={mu}"
            )));
        }
        Ok(HyperplaneParams { gamma, mu })
    }

    /// Weights on (I(X;Y|U), I(U;Z), I(X;Y)).
    pub fn info_weights(&self) -> [f64; 3] {
        let (g, m) = (self.gamma, self.mu);
        [g * m, g * (1.0 - m), 1.0 - g]
    }

    /// Coefficients of (R1, R2) in the induced halfplane.
    pub fn rate_coefficients(&self) -> (f64, f64) {
        let [a, b, c] = self.info_weights();
        (a + c, b + c)
    }
}

/// Search effort for the inner maximizations. All fields are part of the
/// reproducible run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBudget {
    /// Low-discrepancy starts for the hyperplane maximizations.
    pub starts: usize,
    /// Low-discrepancy starts for the tilted-moment maximization.
    pub omega_starts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Point cap for lattice enumeration of the tilted moment.
    pub lattice_cap: u64,
}

impl OptimizerBudget {
    pub fn fast() -> Self {
        OptimizerBudget {
            starts: 4,
            omega_starts: 8,
            max_iters: 200,
            tol: 1e-12,
            seed: 0,
            lattice_cap: 20_000,
        }
    }

    pub fn thorough() -> Self {
        OptimizerBudget {
            starts: 32,
            omega_starts: 64,
            max_iters: 1000,
            tol: 1e-14,
            seed: 0,
            lattice_cap: 500_000,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fast" => Some(Self::fast()),
            "default" => Some(Self::default()),
            "thorough" => Some(Self::thorough()),
            _ => None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn ascent(&self) -> AscentConfig {
        AscentConfig {
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

impl Default for OptimizerBudget {
    fn default() -> Self {
        OptimizerBudget {
            starts: 8,
            omega_starts: 32,
            max_iters: 400,
            tol: 1e-13,
            seed: 0,
            lattice_cap: 100_000,
        }
    }
}

/// Terms of `w0·I(X;Y|U) + w1·I(U;Z) + w2·I(X;Y)` as a log-linear form.
pub(crate) fn info_terms(w: [f64; 3]) -> Vec<(Mask, f64)> {
    vec![
        (M_U | M_X | M_Y, w[0]),
        (M_U, w[0] - w[1]),
        (M_U | M_X, -w[0]),
        (M_U | M_Y, -w[0]),
        (M_U | M_Z, w[1]),
        (M_Z, -w[1]),
        (M_X | M_Y, w[2]),
        (M_X, -w[2]),
        (M_Y, -w[2]),
    ]
}

/// The three functionals of the rate set of one structured joint:
/// (I(X;Y|U), I(U;Z), I(X;Y)).
pub fn eval_c_p(aux: &AuxInputLaw, ch: &ChannelPair) -> Result<(f64, f64, f64)> {
    let j = joint_from_aux(aux, ch)?;
    Ok((
        conditional_mutual_information(&j, InfoQuantity::XYGivenU),
        conditional_mutual_information(&j, InfoQuantity::UZ),
        conditional_mutual_information(&j, InfoQuantity::XY),
    ))
}

/// Weighted information sum as a function of the (U,X) law.
pub(crate) struct StructuredObjective<'a> {
    ch: &'a ChannelPair,
    u_size: usize,
    form: LogLinearForm,
}

impl<'a> StructuredObjective<'a> {
    pub(crate) fn new(ch: &'a ChannelPair, u_size: usize, weights: [f64; 3]) -> Self {
        let layout = Layout::new([u_size, ch.x_size(), ch.y_size(), ch.z_size()]);
        let n = layout.n_atoms();
        StructuredObjective {
            ch,
            u_size,
            form: LogLinearForm::new(layout, vec![0.0; n], &info_terms(weights)),
        }
    }
}

impl SimplexObjective for StructuredObjective<'_> {
    fn value(&self, ux: &[f64]) -> f64 {
        self.form
            .expectation(&joint_mass_from_ux(ux, self.u_size, self.ch))
    }

    fn value_grad(&self, ux: &[f64], grad: &mut [f64]) -> f64 {
        let q = joint_mass_from_ux(ux, self.u_size, self.ch);
        let mut g = vec![0.0; q.len()];
        let v = self.form.expectation_grad(&q, &mut g);
        let (xs, ys, zs) = (self.ch.x_size(), self.ch.y_size(), self.ch.z_size());
        for u in 0..self.u_size {
            for x in 0..xs {
                let mut s = 0.0;
                for y in 0..ys {
                    for z in 0..zs {
                        let w = self.ch.w1.get(x, y) * self.ch.w2.get(x, z);
                        if w > 0.0 {
                            s += w * g[((u * xs + x) * ys + y) * zs + z];
                        }
                    }
                }
                grad[u * xs + x] = s;
            }
        }
        v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperplaneResult {
    pub value: f64,
    pub argmax: AuxInputLaw,
    /// Joint law of (U, X) at the argmax, row-major.
    pub joint_ux: Vec<f64>,
}

/// Deterministic maps U → X (at most `cap` of them), as (U,X) laws with
/// uniform p_U.
fn deterministic_ux(u_size: usize, x_size: usize, cap: usize) -> Vec<Vec<f64>> {
    let total = (x_size as u128).saturating_pow(u_size as u32);
    let count = total.min(cap as u128) as usize;
    (0..count)
        .map(|mut code| {
            let mut ux = vec![0.0; u_size * x_size];
            for u in 0..u_size {
                ux[u * x_size + code % x_size] = 1.0 / u_size as f64;
                code /= x_size;
            }
            ux
        })
        .collect()
}

/// Initial (U,X) laws for the structured maximization, in a fixed order.
fn structured_starts(ch: &ChannelPair, u_size: usize, budget: &OptimizerBudget) -> Vec<Vec<f64>> {
    let xs = ch.x_size();
    let n = u_size * xs;
    let all = vec![true; n];
    let mut starts = Vec::new();
    // constant U carrying the capacity-achieving input of W1
    if let Ok((_, input)) = ba_capacity_with_input(&ch.w1, 1e-10) {
        let mut ux = vec![0.0; n];
        for u in 0..u_size {
            for x in 0..xs {
                ux[u * xs + x] = input[x] / u_size as f64;
            }
        }
        starts.push(ux);
    }
    for d in deterministic_ux(u_size, xs, 64) {
        starts.push(d.clone());
        starts.push(simplex::smooth(&d, 1e-2, &all));
    }
    starts.extend(simplex::low_discrepancy_starts(budget.seed, budget.starts, &all));
    starts
}

/// Maximizes the weighted information sum over structured joints with the
/// default auxiliary size.
pub fn hyperplane_value(
    hp: HyperplaneParams,
    ch: &ChannelPair,
    budget: &OptimizerBudget,
) -> Result<HyperplaneResult> {
    hyperplane_value_with_aux(hp, ch, ch.structured_aux_size(), budget)
}

pub fn hyperplane_value_with_aux(
    hp: HyperplaneParams,
    ch: &ChannelPair,
    u_size: usize,
    budget: &OptimizerBudget,
) -> Result<HyperplaneResult> {
    let obj = StructuredObjective::new(ch, u_size, hp.info_weights());
    let cfg = budget.ascent();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in structured_starts(ch, u_size, budget) {
        let r = ascend(&obj, &start, &cfg);
        if r.value.is_finite() && best.as_ref().is_none_or(|(v, _)| r.value > *v) {
            best = Some((r.value, r.x));
        }
    }
    let (value, joint_ux) = best.ok_or({
        Error::NonConvergence {
            iterations: cfg.max_iters,
            lower: f64::NAN,
            upper: f64::NAN,
        }
    })?;
    let argmax = AuxInputLaw::from_joint(u_size, ch.x_size(), &joint_ux)?;
    Ok(HyperplaneResult {
        value: value.max(0.0),
        argmax,
        joint_ux,
    })
}

/// Log-linear form of the relaxed objective
/// `−α·D(q_{Y|XZU}||W1) − β·D(q_{Z|XYU}||W2) + weighted information`.
pub(crate) fn relaxed_form(
    ch: &ChannelPair,
    u_size: usize,
    alpha: f64,
    beta: f64,
    hp: HyperplaneParams,
) -> LogLinearForm {
    let layout = Layout::new([u_size, ch.x_size(), ch.y_size(), ch.z_size()]);
    let constant = (0..layout.n_atoms())
        .map(|a| {
            let [_, x, y, z] = layout.coords(a);
            let (w1, w2) = (ch.w1.get(x, y), ch.w2.get(x, z));
            if w1 > 0.0 && w2 > 0.0 {
                alpha * w1.ln() + beta * w2.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut terms = info_terms(hp.info_weights());
    terms.extend([
        (M_ALL, -(alpha + beta)),
        (M_U | M_X | M_Z, alpha),
        (M_U | M_X | M_Y, beta),
    ]);
    LogLinearForm::new(layout, constant, &terms)
}

struct ExpectationObjective<'a>(&'a LogLinearForm);

impl SimplexObjective for ExpectationObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.expectation(x)
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.0.expectation_grad(x, grad)
    }
}

/// Structured joint from a (U,X) law, embedded with a larger auxiliary
/// alphabet (extra symbols carry no mass).
pub(crate) fn embed_structured(ux: &[f64], from_u: usize, to_u: usize, ch: &ChannelPair) -> Vec<f64> {
    let xs = ch.x_size();
    let mut padded = vec![0.0; to_u * xs];
    padded[..from_u * xs].copy_from_slice(&ux[..from_u * xs]);
    joint_mass_from_ux(&padded, to_u, ch)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TildeResult {
    pub value: f64,
    /// Maximizing joint over U×X×Y×Z (row-major), auxiliary size `u_size`.
    pub argmax_q: Vec<f64>,
    pub u_size: usize,
}

/// Relaxed hyperplane value over unconstrained joints with `|U| = |Y|+|Z|−1`.
pub fn tilde_hyperplane_value(
    alpha: f64,
    beta: f64,
    hp: HyperplaneParams,
    ch: &ChannelPair,
    budget: &OptimizerBudget,
) -> Result<TildeResult> {
    let base = hyperplane_value(hp, ch, budget)?;
    tilde_hyperplane_value_with_starts(alpha, beta, hp, ch, budget, &base, &[])
}

/// As [`tilde_hyperplane_value`], reusing a structured maximizer and extra
/// warm starts (joints over the free auxiliary alphabet).
pub fn tilde_hyperplane_value_with_starts(
    alpha: f64,
    beta: f64,
    hp: HyperplaneParams,
    ch: &ChannelPair,
    budget: &OptimizerBudget,
    structured: &HyperplaneResult,
    warm: &[Vec<f64>],
) -> Result<TildeResult> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Validation(format!(
            "penalty weights must be positive: alpha={alpha}, beta={beta}"
        )));
    }
    let u_size = ch.free_aux_size();
    let form = relaxed_form(ch, u_size, alpha, beta, hp);
    let allowed = form.admissible();
    let obj = ExpectationObjective(&form);
    let cfg = budget.ascent();

    let embedded = embed_structured(
        &structured.joint_ux,
        structured.argmax.u_size(),
        u_size,
        ch,
    );
    let mut best = (form.expectation(&embedded), embedded.clone());

    let mut starts = vec![simplex::smooth(&embedded, 1e-3, &allowed)];
    // warm starts are only ascended from the best one; the rest are evaluated
    if let Some(w) = warm
        .iter()
        .map(|w| (form.expectation(w), w))
        .filter(|(v, _)| v.is_finite())
        .max_by(|a, b| a.0.total_cmp(&b.0))
    {
        if w.0 > best.0 {
            best = (w.0, w.1.clone());
        }
        starts.push(w.1.clone());
    }
    let mut uniform = vec![1.0; allowed.len()];
    simplex::restrict(&mut uniform, &allowed);
    starts.push(uniform);
    starts.extend(simplex::low_discrepancy_starts(budget.seed, budget.starts, &allowed));
    for s in starts {
        let r = ascend(&obj, &s, &cfg);
        if r.value.is_finite() && r.value > best.0 {
            best = (r.value, r.x);
        }
    }
    Ok(TildeResult {
        value: best.0,
        argmax_q: best.1,
        u_size,
    })
}

/// One entry of a relaxation sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationPoint {
    pub alpha: f64,
    pub beta: f64,
    pub value: f64,
}

/// Relaxed values at several penalty pairs for one direction.
///
/// Pairs are processed by decreasing `α+β`, and every maximizer found so far
/// seeds the later ones. The objective of a fixed joint can only grow when a
/// penalty shrinks, so estimates come out monotone in each penalty. Results
/// are returned in the input order.
pub fn relaxation_sweep(
    hp: HyperplaneParams,
    ch: &ChannelPair,
    budget: &OptimizerBudget,
    penalties: &[(f64, f64)],
) -> Result<(HyperplaneResult, Vec<RelaxationPoint>)> {
    let structured = hyperplane_value(hp, ch, budget)?;
    let mut order: Vec<usize> = (0..penalties.len()).collect();
    order.sort_by(|&i, &j| {
        let si = penalties[i].0 + penalties[i].1;
        let sj = penalties[j].0 + penalties[j].1;
        sj.total_cmp(&si).then(i.cmp(&j))
    });
    let mut warm: Vec<Vec<f64>> = Vec::new();
    let mut out = vec![None; penalties.len()];
    for i in order {
        let (a, b) = penalties[i];
        let r = tilde_hyperplane_value_with_starts(a, b, hp, ch, budget, &structured, &warm)?;
        warm.push(r.argmax_q.clone());
        out[i] = Some(RelaxationPoint {
            alpha: a,
            beta: b,
            value: r.value,
        });
    }
    Ok((structured, out.into_iter().map(|p| p.expect("filled")).collect()))
}

/// Uniform sampling plan over `[0,1] × [0,1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPlan {
    pub n_gamma: usize,
    pub n_mu: usize,
}

impl Default for GridPlan {
    fn default() -> Self {
        GridPlan {
            n_gamma: 65,
            n_mu: 33,
        }
    }
}

impl GridPlan {
    /// Grid points in row-major (γ outer) order.
    pub fn points(&self) -> Vec<HyperplaneParams> {
        let step = |i: usize, n: usize, hi: f64| {
            if n <= 1 {
                0.0
            } else {
                hi * i as f64 / (n - 1) as f64
            }
        };
        let mut pts = Vec::with_capacity(self.n_gamma * self.n_mu);
        for i in 0..self.n_gamma {
            for j in 0..self.n_mu {
                pts.push(HyperplaneParams {
                    gamma: step(i, self.n_gamma, 1.0),
                    mu: step(j, self.n_mu, 0.5),
                });
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfplane {
    pub gamma: f64,
    pub mu: f64,
    pub r1_coef: f64,
    pub r2_coef: f64,
    pub offset: f64,
}

impl Halfplane {
    pub fn slack(&self, r1: f64, r2: f64) -> f64 {
        self.offset - self.r1_coef * r1 - self.r2_coef * r2
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionBoundary {
    pub halfplanes: Vec<Halfplane>,
    /// Counter-clockwise polygon starting at the origin.
    pub vertices: Vec<(f64, f64)>,
    /// Single-user capacity of W1.
    pub capacity_w1: f64,
    /// Length of the boundary piece on `R1 + R2 = C(W1)`, measured from the
    /// vertices; zero when no such piece was found.
    pub slope_segment_length: f64,
    /// True when some grid points failed and were left out.
    pub partial: bool,
    pub failed: Vec<usize>,
}

const DEDUP_TOL: f64 = 1e-9;

/// Clips a convex polygon by `a·x + b·y ≤ c`.
fn clip(poly: &[(f64, f64)], a: f64, b: f64, c: f64) -> Vec<(f64, f64)> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    let inside = |p: (f64, f64)| a * p.0 + b * p.1 <= c + 1e-15;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let (ip, iq) = (inside(p), inside(q));
        if ip {
            out.push(p);
        }
        if ip != iq {
            let fp = a * p.0 + b * p.1 - c;
            let fq = a * q.0 + b * q.1 - c;
            let t = fp / (fp - fq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

fn tidy(poly: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(poly.len());
    for p in poly {
        let p = (clean_zero(p.0), clean_zero(p.1));
        if out
            .last()
            .is_none_or(|l| (l.0 - p.0).abs() > DEDUP_TOL || (l.1 - p.1).abs() > DEDUP_TOL)
        {
            out.push(p);
        }
    }
    while out.len() > 1 {
        let (f, l) = (out[0], out[out.len() - 1]);
        if (f.0 - l.0).abs() <= DEDUP_TOL && (f.1 - l.1).abs() <= DEDUP_TOL {
            out.pop();
        } else {
            break;
        }
    }
    // drop vertices lying on the segment between their neighbours
    let mut changed = true;
    while changed && out.len() > 2 {
        changed = false;
        for i in 0..out.len() {
            let n = out.len();
            let (p, c, q) = (out[(i + n - 1) % n], out[i], out[(i + 1) % n]);
            let cross = (c.0 - p.0) * (q.1 - p.1) - (c.1 - p.1) * (q.0 - p.0);
            let dot = (c.0 - p.0) * (q.0 - c.0) + (c.1 - p.1) * (q.1 - c.1);
            if cross.abs() <= 1e-15 && dot >= 0.0 {
                out.remove(i);
                changed = true;
                break;
            }
        }
    }
    out
}

fn clean_zero(v: f64) -> f64 {
    if v.abs() < 1e-15 {
        0.0
    } else {
        v
    }
}

/// Intersection of the halfplanes with the nonnegative quadrant.
pub fn polygon_from_halfplanes(halfplanes: &[Halfplane], extent: f64) -> Vec<(f64, f64)> {
    let mut poly = vec![(0.0, 0.0), (extent, 0.0), (extent, extent), (0.0, extent)];
    for h in halfplanes {
        poly = clip(&poly, h.r1_coef, h.r2_coef, h.offset);
        if poly.is_empty() {
            break;
        }
    }
    let mut poly = tidy(poly);
    // rotate so the origin (or the point closest to it) comes first
    if let Some(k) = (0..poly.len()).min_by(|&i, &j| {
        let di = poly[i].0.hypot(poly[i].1);
        let dj = poly[j].0.hypot(poly[j].1);
        di.total_cmp(&dj)
    }) {
        poly.rotate_left(k);
    }
    poly
}

fn slope_segment(vertices: &[(f64, f64)], capacity: f64) -> f64 {
    let on: Vec<&(f64, f64)> = vertices
        .iter()
        .filter(|v| (v.0 + v.1 - capacity).abs() <= 1e-6)
        .collect();
    let mut len: f64 = 0.0;
    for a in &on {
        for b in &on {
            len = len.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    len
}

/// Sweep entry: one grid direction with its hyperplane value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub mu: f64,
    pub value: f64,
}

/// Hyperplane values over the grid, evaluated in parallel and returned in
/// grid order. Failed points are `None`.
pub fn hyperplane_sweep(
    ch: &ChannelPair,
    grid: &GridPlan,
    budget: &OptimizerBudget,
) -> Vec<Option<SweepPoint>> {
    grid.points()
        .par_iter()
        .map(|hp| {
            hyperplane_value(*hp, ch, budget).ok().and_then(|r| {
                r.value.is_finite().then_some(SweepPoint {
                    gamma: hp.gamma,
                    mu: hp.mu,
                    value: r.value,
                })
            })
        })
        .collect()
}

/// Region polygon from a sweep over the grid.
pub fn region_boundary(
    ch: &ChannelPair,
    grid: &GridPlan,
    budget: &OptimizerBudget,
) -> Result<(RegionBoundary, Vec<Option<SweepPoint>>)> {
    if grid.n_gamma == 0 || grid.n_mu == 0 {
        return Err(Error::Validation("empty (gamma, mu) grid".into()));
    }
    let sweep = hyperplane_sweep(ch, grid, budget);
    let capacity_w1 = ba_capacity(&ch.w1, 1e-10)?;
    Ok((boundary_from_sweep(&sweep, capacity_w1, ch.x_size()), sweep))
}

pub fn boundary_from_sweep(
    sweep: &[Option<SweepPoint>],
    capacity_w1: f64,
    x_size: usize,
) -> RegionBoundary {
    let mut halfplanes = Vec::new();
    let mut failed = Vec::new();
    for (i, p) in sweep.iter().enumerate() {
        match p {
            Some(p) => {
                let hp = HyperplaneParams {
                    gamma: p.gamma,
                    mu: p.mu,
                };
                let (a, b) = hp.rate_coefficients();
                halfplanes.push(Halfplane {
                    gamma: p.gamma,
                    mu: p.mu,
                    r1_coef: a,
                    r2_coef: b,
                    offset: p.value,
                });
            }
            None => failed.push(i),
        }
    }
    let extent = (x_size as f64).ln() + 1.0;
    let vertices = polygon_from_halfplanes(&halfplanes, extent);
    let slope_segment_length = slope_segment(&vertices, capacity_w1);
    RegionBoundary {
        halfplanes,
        vertices,
        capacity_w1,
        slope_segment_length,
        partial: !failed.is_empty(),
        failed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Inside,
    Outside,
    Boundary,
}

/// Smallest slack of `(r1, r2)` over all halfplanes and the quadrant.
pub fn min_slack(r1: f64, r2: f64, boundary: &RegionBoundary) -> f64 {
    boundary
        .halfplanes
        .iter()
        .map(|h| h.slack(r1, r2))
        .fold(r1.min(r2), f64::min)
}

pub fn region_membership(r1: f64, r2: f64, boundary: &RegionBoundary, tol: f64) -> Membership {
    let s = min_slack(r1, r2, boundary);
    if s.abs() <= tol {
        Membership::Boundary
    } else if s < 0.0 {
        Membership::Outside
    } else {
        Membership::Inside
    }
}

const BA_MAX_ITERS: usize = 100_000;

/// Single-user capacity by Blahut–Arimoto.
pub fn ba_capacity(w: &StochasticMatrix, tol: f64) -> Result<f64> {
    ba_capacity_with_input(w, tol).map(|(c, _)| c)
}

/// Capacity and a capacity-achieving input. Iterates until the gap between
/// `ln Σ_x r(x)·e^{D(W_x||rW)}` and `max_x D(W_x||rW)` is below `tol`; the
/// returned value is the midpoint of that bracket.
pub fn ba_capacity_with_input(w: &StochasticMatrix, tol: f64) -> Result<(f64, Vec<f64>)> {
    let nx = w.in_size();
    let mut r = vec![1.0 / nx as f64; nx];
    let mut lower = 0.0;
    let mut upper = f64::INFINITY;
    for _ in 0..BA_MAX_ITERS {
        let out = w.output(&r);
        let d: Vec<f64> = (0..nx).map(|x| kl_divergence(w.row(x).as_slice(), &out)).collect();
        let dmax = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = r.iter().zip(&d).map(|(ri, di)| ri * (di - dmax).exp()).collect();
        let s: f64 = weights.iter().sum();
        lower = dmax + s.ln();
        upper = dmax;
        if upper - lower < tol {
            return Ok(((lower + upper) / 2.0, r));
        }
        r = weights.iter().map(|v| v / s).collect();
    }
    Err(Error::NonConvergence {
        iterations: BA_MAX_ITERS,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ProbDist;

    fn h2(p: f64) -> f64 {
        -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
    }

    fn bsc_capacity(p: f64) -> f64 {
        std::f64::consts::LN_2 - h2(p)
    }

    fn identity_useless() -> ChannelPair {
        ChannelPair::new(
            StochasticMatrix::identity(2),
            StochasticMatrix::useless(2, &ProbDist::uniform(2)),
        )
        .unwrap()
    }

    #[test]
    fn ba_closed_forms() {
        let c = ba_capacity(&StochasticMatrix::bsc(0.1), 1e-12).unwrap();
        assert!((c - bsc_capacity(0.1)).abs() < 1e-9);
        let c = ba_capacity(&StochasticMatrix::identity(2), 1e-12).unwrap();
        assert!((c - std::f64::consts::LN_2).abs() < 1e-12);
        let u = StochasticMatrix::useless(3, &ProbDist::new(vec![0.2, 0.8]).unwrap());
        assert!(ba_capacity(&u, 1e-12).unwrap().abs() < 1e-12);
        // Z-channel, closed form ln(1 + (1−p)·p^{p/(1−p)})
        let p: f64 = 0.3;
        let z = StochasticMatrix::new(vec![vec![1.0, 0.0], vec![p, 1.0 - p]]).unwrap();
        let want = (1.0 + (1.0 - p) * p.powf(p / (1.0 - p))).ln();
        assert!((ba_capacity(&z, 1e-12).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn ba_reports_bracket_on_iteration_cap() {
        let z = StochasticMatrix::new(vec![vec![1.0, 0.0], vec![0.3, 0.7]]).unwrap();
        match ba_capacity(&z, 0.0) {
            Err(Error::NonConvergence { lower, upper, .. }) => assert!(lower <= upper),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn eval_c_p_cases() {
        let ch = ChannelPair::new(StochasticMatrix::bsc(0.1), StochasticMatrix::bsc(0.3)).unwrap();
        let constant = AuxInputLaw::new(
            ProbDist::point(1, 0),
            StochasticMatrix::new(vec![vec![0.5, 0.5]]).unwrap(),
        )
        .unwrap();
        let (a, b, c) = eval_c_p(&constant, &ch).unwrap();
        assert!((a - c).abs() < 1e-15 && b.abs() < 1e-15);
        assert!((c - bsc_capacity(0.1)).abs() < 1e-14);

        let aux = AuxInputLaw::new(
            ProbDist::uniform(2),
            StochasticMatrix::new(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap(),
        )
        .unwrap();
        let (a, b, c) = eval_c_p(&aux, &ch).unwrap();
        // U → X is BSC(.1), so U → Y is BSC(.18) and U → Z is BSC(.34);
        // X is uniform, Y|U and Y|X follow binary entropies
        let ixy = bsc_capacity(0.1);
        let iuy = bsc_capacity(0.18);
        let iuz = bsc_capacity(0.34);
        assert!((c - ixy).abs() < 1e-14);
        assert!((a - (ixy - iuy)).abs() < 1e-14);
        assert!((b - iuz).abs() < 1e-14);
    }

    #[test]
    fn hyperplane_reference_values() {
        let b = OptimizerBudget::default();
        let bsc = ChannelPair::new(StochasticMatrix::bsc(0.1), StochasticMatrix::bsc(0.1)).unwrap();
        let c = bsc_capacity(0.1);
        for mu in [0.0, 0.25, 0.5] {
            let v = hyperplane_value(HyperplaneParams::new(0.0, mu).unwrap(), &bsc, &b).unwrap();
            assert!((v.value - c).abs() < 1e-9, "{}", v.value);
        }
        let v = hyperplane_value(HyperplaneParams::new(1.0, 0.5).unwrap(), &bsc, &b).unwrap();
        assert!((v.value - 0.5 * c).abs() < 1e-8, "{}", v.value);
        assert!((0.5 * c - 0.184_032).abs() < 1e-6);

        let ch = identity_useless();
        for mu in [0.0, 0.2, 0.5] {
            let v = hyperplane_value(HyperplaneParams::new(1.0, mu).unwrap(), &ch, &b).unwrap();
            assert!((v.value - mu * std::f64::consts::LN_2).abs() < 1e-8, "{}", v.value);
        }
    }

    #[test]
    fn relaxation_dominates_and_decreases() {
        let ch = ChannelPair::new(StochasticMatrix::bsc(0.1), StochasticMatrix::bsc(0.25)).unwrap();
        let hp = HyperplaneParams::new(0.6, 0.3).unwrap();
        let pens: Vec<(f64, f64)> = (0..8).map(|k| (2f64.powi(k), 2f64.powi(k))).collect();
        let (base, pts) = relaxation_sweep(hp, &ch, &OptimizerBudget::fast(), &pens).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].value <= w[0].value);
        }
        for p in &pts {
            assert!(p.value >= base.value);
        }
    }

    #[test]
    fn membership_classification() {
        let ch = identity_useless();
        let (bnd, _) = region_boundary(&ch, &GridPlan { n_gamma: 9, n_mu: 5 }, &OptimizerBudget::fast()).unwrap();
        let c = bnd.capacity_w1;
        assert_eq!(region_membership(0.0, 0.0, &bnd, 1e-6), Membership::Boundary);
        assert_eq!(region_membership(0.1, 0.0, &bnd, 1e-6), Membership::Boundary);
        assert_eq!(region_membership(c + 0.1, 0.0, &bnd, 1e-6), Membership::Outside);
        assert_eq!(region_membership(c, 0.0, &bnd, 1e-6), Membership::Boundary);

        let bsc = ChannelPair::new(StochasticMatrix::bsc(0.1), StochasticMatrix::bsc(0.2)).unwrap();
        let (bnd, _) = region_boundary(&bsc, &GridPlan { n_gamma: 9, n_mu: 5 }, &OptimizerBudget::fast()).unwrap();
        assert_eq!(region_membership(0.05, 0.05, &bnd, 1e-6), Membership::Inside);
    }

    #[test]
    fn clipping_square_to_triangle() {
        let h = [Halfplane {
            gamma: 0.0,
            mu: 0.0,
            r1_coef: 1.0,
            r2_coef: 1.0,
            offset: 1.0,
        }];
        let p = polygon_from_halfplanes(&h, 3.0);
        assert_eq!(p, vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
    }
}
