//! Tilted weights, their exponential moments, and the strong-converse
//! exponent built from them.
//!
//! For a joint `q` over U×X×Y×Z the tilted weight of an outcome is
//!
//! ```text
//! ω(u,x,y,z) = α ln(W1/q_{Y|XZU}) + β ln(W2/q_{Z|XYU})
//!            + γ[μ ln(W1/q_{Y|U}) + (1−μ) ln(q_{Z|U}/q_Z)] + (1−γ) ln(W1/q_Y)
//! ```
//!
//! and `Ω(q) = ln Σ q·exp(λω)`. The exponent at rates (R1, R2) is the
//! supremum over parameters of
//! `(λ[(γμ+1−γ)R1 + (γ(1−μ)+1−γ)R2] − max_q Ω(q)) / (1 + λ[1+α+β+(2−3μ)γ])`.

use serde::{Deserialize, Serialize};

use crate::channel::{joint_mass_from_ux, ChannelPair};
use crate::error::{Error, Result};
use crate::loglin::{tilt, LogLinearForm};
use crate::prob::{
    conditional_mutual_information, Axis, InfoQuantity, JointDistUXYZ, Layout, M_ALL, M_U, M_X,
    M_Y, M_Z,
};
use crate::region::{
    embed_structured, hyperplane_value_with_aux, GridPlan, HyperplaneParams, HyperplaneResult,
    OptimizerBudget,
};
use crate::simplex::{self, ascend, SimplexObjective};

/// Parameters of the tilted weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl TiltParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, mu: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Validation(format!(
                "alpha and beta must be positive: alpha={alpha}, beta={beta}"
            )));
        }
        HyperplaneParams::new(gamma, mu)?;
        Ok(TiltParams {
            alpha,
            beta,
            gamma,
            mu,
        })
    }

    pub fn hyperplane(&self) -> HyperplaneParams {
        HyperplaneParams {
            gamma: self.gamma,
            mu: self.mu,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> ExponentParams {
        ExponentParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            mu: self.mu,
            lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl ExponentParams {
    /// `lambda = 0` is accepted so the moment can be evaluated at the origin.
    pub fn new(alpha: f64, beta: f64, gamma: f64, mu: f64, lambda: f64) -> Result<Self> {
        let t = TiltParams::new(alpha, beta, gamma, mu)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Validation(format!("lambda must be nonnegative: {lambda}")));
        }
        Ok(t.with_lambda(lambda))
    }

    pub fn tilt(&self) -> TiltParams {
        TiltParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            mu: self.mu,
        }
    }

    /// `1 + λ[1 + α + β + (2 − 3μ)γ]`.
    pub fn denominator(&self) -> f64 {
        1.0 + self.lambda * (1.0 + self.alpha + self.beta + (2.0 - 3.0 * self.mu) * self.gamma)
    }
}

/// The tilted weight as a log-linear form over a joint with `u_size`
/// auxiliary symbols. Atoms where W1 or W2 vanishes get constant `−inf`.
pub fn omega_form(ch: &ChannelPair, u_size: usize, tp: &TiltParams) -> LogLinearForm {
    let layout = Layout::new([u_size, ch.x_size(), ch.y_size(), ch.z_size()]);
    let (a, b, g, m) = (tp.alpha, tp.beta, tp.gamma, tp.mu);
    let w1_coef = a + g * m + (1.0 - g);
    let constant = (0..layout.n_atoms())
        .map(|i| {
            let [_, x, y, z] = layout.coords(i);
            let (w1, w2) = (ch.w1.get(x, y), ch.w2.get(x, z));
            if w1 > 0.0 && w2 > 0.0 {
                w1_coef * w1.ln() + b * w2.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let terms = [
        (M_ALL, -(a + b)),
        (M_U | M_X | M_Z, a),
        (M_U | M_X | M_Y, b),
        (M_U | M_Y, -g * m),
        (M_U, -g * (1.0 - 2.0 * m)),
        (M_U | M_Z, g * (1.0 - m)),
        (M_Z, -g * (1.0 - m)),
        (M_Y, -(1.0 - g)),
    ];
    LogLinearForm::new(layout, constant, &terms)
}

fn check_dims(q: &JointDistUXYZ, ch: &ChannelPair) -> Result<()> {
    let d = q.dims();
    if d[1] != ch.x_size() || d[2] != ch.y_size() || d[3] != ch.z_size() {
        return Err(Error::Dimension(format!(
            "joint dims {:?} do not match channel ({}, {}, {})",
            d,
            ch.x_size(),
            ch.y_size(),
            ch.z_size()
        )));
    }
    Ok(())
}

/// ω at one outcome, computed directly from the conditionals of `q`.
pub fn omega_weight(
    q: &JointDistUXYZ,
    ch: &ChannelPair,
    tp: &TiltParams,
    point: (usize, usize, usize, usize),
) -> Result<f64> {
    check_dims(q, ch)?;
    let (u, x, y, z) = point;
    let d = q.dims();
    if u >= d[0] || x >= d[1] || y >= d[2] || z >= d[3] {
        return Err(Error::Contract(format!("point {point:?} outside {d:?}")));
    }
    let p = q.get(u, x, y, z);
    if p <= 0.0 {
        return Err(Error::Contract(format!("tilted weight evaluated at zero-mass point {point:?}")));
    }
    let (w1, w2) = (ch.w1.get(x, y), ch.w2.get(x, z));
    if w1 == 0.0 || w2 == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let sum = |f: &dyn Fn(usize, usize, usize, usize) -> bool| -> f64 {
        let mut s = 0.0;
        for uu in 0..d[0] {
            for xx in 0..d[1] {
                for yy in 0..d[2] {
                    for zz in 0..d[3] {
                        if f(uu, xx, yy, zz) {
                            s += q.get(uu, xx, yy, zz);
                        }
                    }
                }
            }
        }
        s
    };
    let q_uxz = sum(&|a, b, _, c| a == u && b == x && c == z);
    let q_uxy = sum(&|a, b, c, _| a == u && b == x && c == y);
    let q_u = sum(&|a, _, _, _| a == u);
    let q_uy = sum(&|a, _, c, _| a == u && c == y);
    let q_uz = sum(&|a, _, _, c| a == u && c == z);
    let q_z = sum(&|_, _, _, c| c == z);
    let q_y = sum(&|_, _, c, _| c == y);
    let y_given_xzu = p / q_uxz;
    let z_given_xyu = p / q_uxy;
    let y_given_u = q_uy / q_u;
    let z_given_u = q_uz / q_u;
    let (g, m) = (tp.gamma, tp.mu);
    Ok(tp.alpha * (w1 / y_given_xzu).ln()
        + tp.beta * (w2 / z_given_xyu).ln()
        + g * (m * (w1 / y_given_u).ln() + (1.0 - m) * (z_given_u / q_z).ln())
        + (1.0 - g) * (w1 / q_y).ln())
}

/// `Ω(q) = ln Σ q·exp(λω)` for one joint.
pub fn omega_functional(q: &JointDistUXYZ, ch: &ChannelPair, ep: &ExponentParams) -> Result<f64> {
    check_dims(q, ch)?;
    let form = omega_form(ch, q.dims()[0], &ep.tilt());
    let values = form.atom_values(q.mass());
    if !q
        .mass()
        .iter()
        .zip(&values)
        .any(|(&p, &v)| p > 0.0 && v > f64::NEG_INFINITY)
    {
        return Err(Error::Contract(
            "joint puts no mass where both channels are positive".into(),
        ));
    }
    Ok(tilt(q.mass(), &values, ep.lambda).log_moment)
}

/// `E_q[ω]`, the slope of `Ω(q, λ)` at `λ = 0`.
pub fn omega_slope_at_zero(q: &JointDistUXYZ, ch: &ChannelPair, tp: &TiltParams) -> Result<f64> {
    check_dims(q, ch)?;
    Ok(omega_form(ch, q.dims()[0], tp).expectation(q.mass()))
}

/// Two decompositions of `E_q[ω]` into divergences and informations.
///
/// `full` adds every term produced by splitting each log-ratio of ω at the
/// channel law; `short` leaves out `(1−γ)·D(q_{Y|X}||W1|q_X)`. The gap
/// between them equals that divergence term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlopeDecomposition {
    pub expectation: f64,
    pub full: f64,
    pub short: f64,
    pub y_given_x_divergence: f64,
}

pub fn slope_decomposition(
    q: &JointDistUXYZ,
    ch: &ChannelPair,
    tp: &TiltParams,
) -> Result<SlopeDecomposition> {
    let expectation = omega_slope_at_zero(q, ch, tp)?;
    let d1 = q.conditional_kl(Axis::Y, M_U | M_X | M_Z, &ch.w1);
    let d2 = q.conditional_kl(Axis::Z, M_U | M_X | M_Y, &ch.w2);
    let d_yxu = q.conditional_kl(Axis::Y, M_U | M_X, &ch.w1);
    let d_yx = q.conditional_kl(Axis::Y, M_X, &ch.w1);
    let i_cond = conditional_mutual_information(q, InfoQuantity::XYGivenU);
    let i_uz = conditional_mutual_information(q, InfoQuantity::UZ);
    let i_xy = conditional_mutual_information(q, InfoQuantity::XY);
    let (g, m) = (tp.gamma, tp.mu);
    let short = -tp.alpha * d1 - tp.beta * d2
        + g * m * (i_cond - d_yxu)
        + g * (1.0 - m) * i_uz
        + (1.0 - g) * i_xy;
    Ok(SlopeDecomposition {
        expectation,
        full: short - (1.0 - g) * d_yx,
        short,
        y_given_x_divergence: d_yx,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaResult {
    /// Best value of `max_q Ω(q)` found; `+inf` when unbounded.
    pub value: f64,
    pub argmax_q: JointDistUXYZ,
    /// True when the lattice enumeration mode contributed to the value.
    /// This is a search mode marker, not a proof of global optimality.
    pub certified: bool,
    /// True when the supremum over q is infinite.
    pub unbounded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaMode {
    /// Multi-start exponentiated-gradient ascent.
    Ascent,
    /// Ascent plus exhaustive lattice enumeration with polishing.
    Lattice,
}

struct TiltedObjective<'a> {
    form: &'a LogLinearForm,
    lambda: f64,
}

impl SimplexObjective for TiltedObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.form.tilted(x, self.lambda).log_moment
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.form.tilted_grad(x, self.lambda, grad)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Start-set seed for one parameter tuple, independent of evaluation order.
fn param_seed(seed: u64, ep: &ExponentParams) -> u64 {
    [ep.alpha, ep.beta, ep.gamma, ep.mu, ep.lambda]
        .iter()
        .fold(splitmix(seed), |h, v| splitmix(h ^ v.to_bits()))
        % (1 << 32)
}

/// Reusable inputs for repeated moment maximizations on one channel.
#[derive(Debug, Clone, Default)]
pub struct OmegaHints {
    /// Structured maximizer of the hyperplane value for the same (γ, μ).
    pub structured: Option<HyperplaneResult>,
    /// Joints over the free auxiliary alphabet to start from.
    pub warm: Vec<Vec<f64>>,
}

/// Maximizes `Ω(q)` over joints with `|U| = |Y|+|Z|−1`.
pub fn omega_max(
    ch: &ChannelPair,
    ep: &ExponentParams,
    budget: &OptimizerBudget,
    mode: OmegaMode,
) -> Result<OmegaResult> {
    omega_max_with(ch, ep, budget, mode, &OmegaHints::default())
}

pub fn omega_max_with(
    ch: &ChannelPair,
    ep: &ExponentParams,
    budget: &OptimizerBudget,
    mode: OmegaMode,
    hints: &OmegaHints,
) -> Result<OmegaResult> {
    omega_max_aux(ch, ep, ch.free_aux_size(), budget, mode, hints)
}

/// As [`omega_max_with`] with an explicit auxiliary alphabet size.
pub fn omega_max_aux(
    ch: &ChannelPair,
    ep: &ExponentParams,
    u_size: usize,
    budget: &OptimizerBudget,
    mode: OmegaMode,
    hints: &OmegaHints,
) -> Result<OmegaResult> {
    let form = omega_form(ch, u_size, &ep.tilt());
    let dims = [u_size, ch.x_size(), ch.y_size(), ch.z_size()];
    let allowed = form.admissible();
    let mut uniform = vec![1.0; allowed.len()];
    simplex::restrict(&mut uniform, &allowed);
    if ep.lambda == 0.0 {
        return Ok(OmegaResult {
            value: 0.0,
            argmax_q: JointDistUXYZ::new(dims, uniform)?,
            certified: mode == OmegaMode::Lattice,
            unbounded: false,
        });
    }
    if form.cylinder_blowup(ep.lambda) {
        return Ok(OmegaResult {
            value: f64::INFINITY,
            argmax_q: JointDistUXYZ::new(dims, uniform)?,
            certified: false,
            unbounded: true,
        });
    }
    let obj = TiltedObjective {
        form: &form,
        lambda: ep.lambda,
    };
    let cfg = budget.ascent();
    let mut best = (obj.value(&uniform), uniform.clone());
    let consider = |v: f64, x: &Vec<f64>, best: &mut (f64, Vec<f64>)| {
        if v.is_finite() && v > best.0 {
            *best = (v, x.clone());
        }
    };

    // Structured joints: their tilted moment is at least λ times the
    // hyperplane value, which keeps the estimate from collapsing.
    let structured = match &hints.structured {
        Some(s) => s.clone(),
        None => hyperplane_value_with_aux(ep.tilt().hyperplane(), ch, ch.structured_aux_size(), budget)?,
    };
    let su = structured.argmax.u_size().min(u_size);
    let embedded = embed_structured(&structured.joint_ux[..su * ch.x_size()], su, u_size, ch);
    consider(obj.value(&embedded), &embedded, &mut best);

    let mut starts = vec![simplex::smooth(&embedded, 1e-3, &allowed), uniform];
    for w in &hints.warm {
        if w.len() == allowed.len() {
            consider(obj.value(w), w, &mut best);
            starts.push(simplex::smooth(w, 1e-6, &allowed));
        }
    }
    // deterministic p_{X|U} corners with uniform p_U
    let xs = ch.x_size();
    let corners = (xs as u128).saturating_pow(u_size as u32).min(16) as usize;
    for mut code in 0..corners {
        let mut ux = vec![0.0; u_size * xs];
        for u in 0..u_size {
            ux[u * xs + code % xs] = 1.0 / u_size as f64;
            code /= xs;
        }
        let q = joint_mass_from_ux(&ux, u_size, ch);
        starts.push(simplex::smooth(&q, 1e-2, &allowed));
    }
    starts.extend(simplex::low_discrepancy_starts(
        param_seed(budget.seed, ep),
        budget.omega_starts,
        &allowed,
    ));
    for s in &starts {
        let r = ascend(&obj, s, &cfg);
        consider(r.value, &r.x, &mut best);
    }

    let mut certified = false;
    if mode == OmegaMode::Lattice {
        certified = true;
        let idx: Vec<usize> = (0..allowed.len()).filter(|&i| allowed[i]).collect();
        let m = simplex::lattice_resolution(idx.len(), budget.lattice_cap as u128);
        const KEEP: usize = 6;
        let mut top: Vec<(f64, Vec<f64>)> = Vec::with_capacity(KEEP + 1);
        let mut full = vec![0.0; allowed.len()];
        simplex::for_each_lattice_point(idx.len(), m, |p| {
            for (k, &i) in idx.iter().enumerate() {
                full[i] = p[k];
            }
            let v = obj.value(&full);
            if v.is_finite() && (top.len() < KEEP || v > top[top.len() - 1].0) {
                let pos = top.iter().position(|t| v > t.0).unwrap_or(top.len());
                top.insert(pos, (v, full.clone()));
                top.truncate(KEEP);
            }
        });
        for (v, x) in top {
            consider(v, &x, &mut best);
            let r = ascend(&obj, &simplex::smooth(&x, 1e-4, &allowed), &cfg);
            consider(r.value, &r.x, &mut best);
        }
    }

    Ok(OmegaResult {
        value: best.0,
        argmax_q: JointDistUXYZ::new(dims, best.1)?,
        certified,
        unbounded: false,
    })
}

/// The exponent function at one parameter tuple. `−inf` when the moment is
/// unbounded. May be negative.
pub fn exponent_at_params(r1: f64, r2: f64, ep: &ExponentParams, omega: &OmegaResult) -> f64 {
    if omega.unbounded || omega.value == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let (a, b) = ep.tilt().hyperplane().rate_coefficients();
    (ep.lambda * (a * r1 + b * r2) - omega.value) / ep.denominator()
}

/// Outer search over exponent parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentSearch {
    /// Number of γ values on [0, 1] (γ = 0 is taken once).
    pub gamma_points: usize,
    /// Number of μ values on [0, 1/2].
    pub mu_points: usize,
    /// Integer log2 exponents spanned by the α and β grids, inclusive.
    pub log2_penalty: (i32, i32),
    /// Integer log2 exponents spanned by the λ grid, inclusive.
    pub log2_lambda: (i32, i32),
    /// Step between consecutive log2 exponents on both grids.
    pub log2_step: i32,
    /// Restrict the coarse table to α = β.
    pub diagonal: bool,
    /// Coordinate-refinement passes around the best table entry.
    pub refine_passes: usize,
    pub budget: OptimizerBudget,
}

impl Default for ExponentSearch {
    fn default() -> Self {
        ExponentSearch {
            gamma_points: 9,
            mu_points: 5,
            log2_penalty: (-6, 6),
            log2_lambda: (-10, 4),
            log2_step: 2,
            diagonal: true,
            refine_passes: 2,
            budget: OptimizerBudget::fast(),
        }
    }
}

impl ExponentSearch {
    fn log_grid(&self, (lo, hi): (i32, i32)) -> Vec<f64> {
        let step = self.log2_step.max(1);
        let mut v = Vec::new();
        let mut k = lo;
        while k <= hi {
            v.push(2f64.powi(k));
            k += step;
        }
        if v.last().is_none_or(|&l| l < 2f64.powi(hi)) {
            v.push(2f64.powi(hi));
        }
        v
    }

    pub fn penalty_grid(&self) -> Vec<f64> {
        self.log_grid(self.log2_penalty)
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        self.log_grid(self.log2_lambda)
    }

    /// (γ, μ) directions of the coarse table.
    pub fn directions(&self) -> Vec<HyperplaneParams> {
        let mut v = Vec::new();
        let ng = self.gamma_points.max(1);
        let nm = self.mu_points.max(1);
        for i in 0..ng {
            let gamma = if ng == 1 { 0.0 } else { i as f64 / (ng - 1) as f64 };
            if gamma == 0.0 {
                v.push(HyperplaneParams { gamma, mu: 0.0 });
                continue;
            }
            for j in 0..nm {
                let mu = if nm == 1 { 0.0 } else { 0.5 * j as f64 / (nm - 1) as f64 };
                v.push(HyperplaneParams { gamma, mu });
            }
        }
        v
    }
}

/// One entry of the rate-independent parameter table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableEntry {
    pub params: ExponentParams,
    pub omega: f64,
}

/// Moment maxima over the coarse parameter grid of one channel. Bounded
/// entries only; parameters with an infinite moment are dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentTable {
    pub entries: Vec<TableEntry>,
    #[serde(skip)]
    structured: Vec<(HyperplaneParams, HyperplaneResult)>,
    #[serde(skip)]
    argmax: Vec<Vec<f64>>,
}

impl ExponentTable {
    pub fn build(ch: &ChannelPair, search: &ExponentSearch) -> Result<Self> {
        use rayon::prelude::*;
        let budget = &search.budget;
        let pens = search.penalty_grid();
        let lambdas = search.lambda_grid();
        let pairs: Vec<(f64, f64)> = if search.diagonal {
            pens.iter().map(|&p| (p, p)).collect()
        } else {
            pens.iter().flat_map(|&a| pens.iter().map(move |&b| (a, b))).collect()
        };
        let dirs = search.directions();
        let per_dir: Vec<Result<(HyperplaneResult, Vec<(TableEntry, Vec<f64>)>)>> = dirs
            .par_iter()
            .map(|hp| {
                let structured =
                    hyperplane_value_with_aux(*hp, ch, ch.structured_aux_size(), budget)?;
                let mut rows = Vec::new();
                for &(a, b) in &pairs {
                    let tp = TiltParams::new(a, b, hp.gamma, hp.mu)?;
                    // λ continuation: each maximizer seeds the next λ
                    let mut hints = OmegaHints {
                        structured: Some(structured.clone()),
                        warm: Vec::new(),
                    };
                    for &l in &lambdas {
                        let ep = tp.with_lambda(l);
                        let om = omega_max_with(ch, &ep, budget, OmegaMode::Ascent, &hints)?;
                        if om.unbounded {
                            break;
                        }
                        hints.warm = vec![om.argmax_q.mass().to_vec()];
                        rows.push((
                            TableEntry {
                                params: ep,
                                omega: om.value,
                            },
                            om.argmax_q.mass().to_vec(),
                        ));
                    }
                }
                Ok((structured, rows))
            })
            .collect();
        let mut entries = Vec::new();
        let mut structured = Vec::new();
        let mut argmax = Vec::new();
        for (hp, r) in dirs.iter().zip(per_dir) {
            let (s, rows) = r?;
            structured.push((*hp, s));
            for (e, q) in rows {
                entries.push(e);
                argmax.push(q);
            }
        }
        Ok(ExponentTable {
            entries,
            structured,
            argmax,
        })
    }

    /// Best table entry for the rates, ties broken by table order.
    fn best_entry(&self, r1: f64, r2: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let om = OmegaResult {
                value: e.omega,
                argmax_q: JointDistUXYZ::uniform([1, 1, 1, 1]),
                certified: false,
                unbounded: false,
            };
            let f = exponent_at_params(r1, r2, &e.params, &om);
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((i, f));
            }
        }
        best
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentResult {
    /// `max(0, best value found)`.
    pub value: f64,
    /// Best value before clamping.
    pub raw: f64,
    pub params: ExponentParams,
    pub omega: f64,
}

/// Exponent at one rate pair; builds the parameter table first.
pub fn exponent(r1: f64, r2: f64, ch: &ChannelPair, search: &ExponentSearch) -> Result<ExponentResult> {
    let table = ExponentTable::build(ch, search)?;
    exponent_from_table(r1, r2, ch, search, &table)
}

/// Exponent at one rate pair from a prebuilt table, with local refinement
/// around the best entry when that entry is positive.
pub fn exponent_from_table(
    r1: f64,
    r2: f64,
    ch: &ChannelPair,
    search: &ExponentSearch,
    table: &ExponentTable,
) -> Result<ExponentResult> {
    let (idx, f0) = table
        .best_entry(r1, r2)
        .ok_or_else(|| Error::Validation("empty exponent parameter table".into()))?;
    let mut best_ep = table.entries[idx].params;
    let mut best_f = f0;
    let mut best_omega = table.entries[idx].omega;
    if best_f > 0.0 && search.refine_passes > 0 {
        let mut warm = table.argmax[idx].clone();
        let hints_for = |ep: &ExponentParams, warm: &Vec<f64>| -> Result<OmegaHints> {
            let hp = ep.tilt().hyperplane();
            let structured = match table.structured.iter().find(|(h, _)| *h == hp) {
                Some((_, s)) => s.clone(),
                None => hyperplane_value_with_aux(hp, ch, ch.structured_aux_size(), &search.budget)?,
            };
            Ok(OmegaHints {
                structured: Some(structured),
                warm: vec![warm.clone()],
            })
        };
        let mut log_step = search.log2_step.max(1) as f64 / 2.0;
        let mut lin_step = 0.5 / (search.gamma_points.max(2) - 1) as f64;
        for _ in 0..search.refine_passes {
            for coord in 0..5 {
                for dir in [-1.0, 1.0] {
                    let mut ep = best_ep;
                    match coord {
                        0 => ep.alpha *= 2f64.powf(dir * log_step),
                        1 => ep.beta *= 2f64.powf(dir * log_step),
                        2 => ep.lambda *= 2f64.powf(dir * log_step),
                        3 => ep.gamma = (ep.gamma + dir * lin_step).clamp(0.0, 1.0),
                        _ => ep.mu = (ep.mu + dir * lin_step / 2.0).clamp(0.0, 0.5),
                    }
                    if ep == best_ep {
                        continue;
                    }
                    let hints = hints_for(&ep, &warm)?;
                    let om = omega_max_with(ch, &ep, &search.budget, OmegaMode::Ascent, &hints)?;
                    let f = exponent_at_params(r1, r2, &ep, &om);
                    if f > best_f {
                        best_f = f;
                        best_ep = ep;
                        best_omega = om.value;
                        warm = om.argmax_q.mass().to_vec();
                    }
                }
            }
            log_step /= 2.0;
            lin_step /= 2.0;
        }
    }
    Ok(ExponentResult {
        value: best_f.max(0.0),
        raw: best_f,
        params: best_ep,
        omega: best_omega,
    })
}

/// Deterministic sample of parameter tuples: α, β and λ drawn from the
/// search's log-grids and (γ, μ) from the hyperplane grid.
pub fn sample_grid_params(
    search: &ExponentSearch,
    grid: &GridPlan,
    count: usize,
    seed: u64,
) -> Vec<ExponentParams> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pen = search.penalty_grid();
    let lam = search.lambda_grid();
    let dirs = grid.points();
    (0..count)
        .map(|_| {
            let hp = dirs[rng.gen_range(0..dirs.len())];
            ExponentParams {
                alpha: pen[rng.gen_range(0..pen.len())],
                beta: pen[rng.gen_range(0..pen.len())],
                gamma: hp.gamma,
                mu: hp.mu,
                lambda: lam[rng.gen_range(0..lam.len())],
            }
        })
        .collect()
}

/// Convexity check of `λ ↦ Ω(q, λ)` on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    /// Second divided differences scaled by 2 (estimates of the second
    /// derivative at interior grid points).
    pub second_differences: Vec<f64>,
    /// Indices into `second_differences` below the threshold.
    pub violations: Vec<usize>,
    pub pass: bool,
}

pub const CONVEXITY_TOL: f64 = 1e-9;

pub fn convexity_check(
    q: &JointDistUXYZ,
    ch: &ChannelPair,
    tp: &TiltParams,
    lambda_grid: &[f64],
) -> Result<ConvexityReport> {
    if lambda_grid.len() < 5 {
        return Err(Error::Validation("convexity check needs at least 5 lambda values".into()));
    }
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation("lambda grid must be strictly increasing".into()));
    }
    check_dims(q, ch)?;
    let form = omega_form(ch, q.dims()[0], tp);
    let vals = form.atom_values(q.mass());
    let values: Vec<f64> = lambda_grid
        .iter()
        .map(|&l| tilt(q.mass(), &vals, l).log_moment)
        .collect();
    let mut second_differences = Vec::new();
    for i in 1..lambda_grid.len() - 1 {
        let (l0, l1, l2) = (lambda_grid[i - 1], lambda_grid[i], lambda_grid[i + 1]);
        let s01 = (values[i] - values[i - 1]) / (l1 - l0);
        let s12 = (values[i + 1] - values[i]) / (l2 - l1);
        second_differences.push(2.0 * (s12 - s01) / (l2 - l0));
    }
    let violations: Vec<usize> = second_differences
        .iter()
        .enumerate()
        .filter(|(_, &d)| !(d >= -CONVEXITY_TOL))
        .map(|(i, _)| i)
        .collect();
    Ok(ConvexityReport {
        lambdas: lambda_grid.to_vec(),
        values,
        pass: violations.is_empty(),
        second_differences,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{joint_from_aux, AuxInputLaw};
    use crate::prob::{ProbDist, StochasticMatrix};

    fn random_joint(seed: u64, dims: [usize; 4]) -> JointDistUXYZ {
        let n: usize = dims.iter().product();
        let mut s = splitmix(seed);
        let w: Vec<f64> = (0..n)
            .map(|_| {
                s = splitmix(s);
                0.02 + (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        JointDistUXYZ::from_weights(dims, w).unwrap()
    }

    fn bsc_pair() -> ChannelPair {
        ChannelPair::new(StochasticMatrix::bsc(0.1), StochasticMatrix::bsc(0.2)).unwrap()
    }

    fn tp() -> TiltParams {
        TiltParams::new(0.7, 1.3, 0.6, 0.3).unwrap()
    }

    #[test]
    fn weight_matches_log_linear_form() {
        let ch = bsc_pair();
        let q = random_joint(5, [3, 2, 2, 2]);
        let form = omega_form(&ch, 3, &tp());
        let vals = form.atom_values(q.mass());
        let layout = q.layout();
        for a in 0..24 {
            let [u, x, y, z] = layout.coords(a);
            let w = omega_weight(&q, &ch, &tp(), (u, x, y, z)).unwrap();
            assert!((w - vals[a]).abs() < 1e-12, "{w} vs {}", vals[a]);
        }
    }

    #[test]
    fn weight_contract_and_zero_channel_entries() {
        let ch = ChannelPair::new(StochasticMatrix::identity(2), StochasticMatrix::bsc(0.2)).unwrap();
        let q = random_joint(1, [3, 2, 2, 2]);
        assert_eq!(omega_weight(&q, &ch, &tp(), (0, 0, 1, 0)).unwrap(), f64::NEG_INFINITY);
        let mut m = q.mass().to_vec();
        m[0] += m[1];
        m[1] = 0.0;
        let q0 = JointDistUXYZ::new([3, 2, 2, 2], m).unwrap();
        assert!(matches!(
            omega_weight(&q0, &ch, &tp(), (0, 0, 0, 1)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn weight_vanishes_for_uniform_everything() {
        let half = ProbDist::uniform(2);
        let ch = ChannelPair::new(
            StochasticMatrix::useless(2, &half),
            StochasticMatrix::useless(2, &half),
        )
        .unwrap();
        let q = JointDistUXYZ::uniform([3, 2, 2, 2]);
        for a in [(0, 0, 0, 0), (2, 1, 0, 1), (1, 1, 1, 1)] {
            assert!(omega_weight(&q, &ch, &tp(), a).unwrap().abs() < 1e-15);
        }
        assert!(omega_slope_at_zero(&q, &ch, &tp()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn structured_weight_with_constant_aux() {
        let ch = ChannelPair::new(
            StochasticMatrix::bsc(0.15),
            StochasticMatrix::useless(2, &ProbDist::new(vec![0.3, 0.7]).unwrap()),
        )
        .unwrap();
        let aux = AuxInputLaw::new(
            ProbDist::point(1, 0),
            StochasticMatrix::new(vec![vec![0.35, 0.65]]).unwrap(),
        )
        .unwrap();
        let q = joint_from_aux(&aux, &ch).unwrap();
        let p = tp();
        let q_y = q.marginal(M_Y);
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let w = omega_weight(&q, &ch, &p, (0, x, y, z)).unwrap();
                    let want = (p.gamma * p.mu + 1.0 - p.gamma) * (ch.w1.get(x, y) / q_y[y]).ln();
                    assert!((w - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn functional_against_direct_sum() {
        let ch = bsc_pair();
        let q = random_joint(9, [3, 2, 2, 2]);
        let ep = tp().with_lambda(0.5);
        let layout = q.layout();
        // accumulate in reverse order as a second route
        let mut s = 0.0;
        for a in (0..24).rev() {
            let [u, x, y, z] = layout.coords(a);
            let w = omega_weight(&q, &ch, &tp(), (u, x, y, z)).unwrap();
            s += q.mass()[a] * (0.5 * w).exp();
        }
        let got = omega_functional(&q, &ch, &ep).unwrap();
        assert!((got - s.ln()).abs() < 1e-13);
        assert_eq!(omega_functional(&q, &ch, &tp().with_lambda(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn structured_joint_ignores_penalties() {
        let ch = bsc_pair();
        let aux = AuxInputLaw::new(
            ProbDist::new(vec![0.3, 0.7]).unwrap(),
            StochasticMatrix::new(vec![vec![0.8, 0.2], vec![0.25, 0.75]]).unwrap(),
        )
        .unwrap();
        let q = joint_from_aux(&aux, &ch).unwrap();
        let a = omega_functional(&q, &ch, &ExponentParams::new(0.1, 0.2, 0.5, 0.2, 0.8).unwrap()).unwrap();
        let b = omega_functional(&q, &ch, &ExponentParams::new(9.0, 4.0, 0.5, 0.2, 0.8).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);

        let p = TiltParams::new(2.0, 3.0, 0.5, 0.2).unwrap();
        let slope = omega_slope_at_zero(&q, &ch, &p).unwrap();
        let want = 0.5 * 0.2 * conditional_mutual_information(&q, InfoQuantity::XYGivenU)
            + 0.5 * 0.8 * conditional_mutual_information(&q, InfoQuantity::UZ)
            + 0.5 * conditional_mutual_information(&q, InfoQuantity::XY);
        assert!((slope - want).abs() < 1e-12);
    }

    #[test]
    fn slope_decompositions() {
        let ch = bsc_pair();
        let q = random_joint(21, [3, 2, 2, 2]);
        let d = slope_decomposition(&q, &ch, &tp()).unwrap();
        assert!((d.expectation - d.full).abs() < 1e-12, "{d:?}");
        assert!((d.short - d.full - (1.0 - tp().gamma) * d.y_given_x_divergence).abs() < 1e-12);
        assert!(d.y_given_x_divergence > 0.0);
    }

    #[test]
    fn second_differences_match_tilted_variance() {
        let ch = bsc_pair();
        let q = random_joint(33, [3, 2, 2, 2]);
        let h = 1e-3;
        let grid: Vec<f64> = (0..5).map(|i| 0.7 + (i as f64 - 2.0) * h).collect();
        let rep = convexity_check(&q, &ch, &tp(), &grid).unwrap();
        assert!(rep.pass);
        // pairwise form of the variance of ω under the tilted law at λ = 0.7
        let form = omega_form(&ch, 3, &tp());
        let v = form.atom_values(q.mass());
        let t = tilt(q.mass(), &v, 0.7);
        let mut var = 0.0;
        for a in 0..24 {
            for b in 0..24 {
                var += 0.5 * t.weights[a] * t.weights[b] * (v[a] - v[b]).powi(2);
            }
        }
        assert!((rep.second_differences[1] - var).abs() < 1e-5 * (1.0 + var), "{} vs {var}", rep.second_differences[1]);
    }

    #[test]
    fn point_mass_is_linear_in_lambda() {
        let ch = bsc_pair();
        let mut m = vec![0.0; 24];
        m[5] = 1.0;
        let q = JointDistUXYZ::new([3, 2, 2, 2], m).unwrap();
        let grid: Vec<f64> = (0..8).map(|i| 0.01 * 2f64.powi(i)).collect();
        let rep = convexity_check(&q, &ch, &tp(), &grid).unwrap();
        assert!(rep.second_differences.iter().all(|d| d.abs() < 1e-9), "{:?}", rep.second_differences);
    }

    #[test]
    fn moment_maximum_basic_facts() {
        let ch = bsc_pair();
        let b = OptimizerBudget::fast();
        let zero = omega_max(&ch, &tp().with_lambda(0.0), &b, OmegaMode::Ascent).unwrap();
        assert_eq!(zero.value, 0.0);
        let ep = tp().with_lambda(0.2);
        let om = omega_max(&ch, &ep, &b, OmegaMode::Ascent).unwrap();
        assert!(!om.unbounded && om.value >= 0.0);
        let hv = crate::region::hyperplane_value(tp().hyperplane(), &ch, &b).unwrap();
        assert!(om.value >= 0.2 * hv.value - 1e-12);
        let direct = omega_functional(&om.argmax_q, &ch, &ep).unwrap();
        assert!((direct - om.value).abs() < 1e-12);
        // λ(α+β) > 1 lets mass pile onto a single atom
        let big = omega_max(&ch, &tp().with_lambda(1.0), &b, OmegaMode::Ascent).unwrap();
        assert!(big.unbounded);
        assert_eq!(exponent_at_params(1.0, 1.0, &tp().with_lambda(1.0), &big), f64::NEG_INFINITY);
    }

    #[test]
    fn exponent_at_params_is_affine() {
        let ep = tp().with_lambda(0.3);
        let om = OmegaResult {
            value: 0.05,
            argmax_q: JointDistUXYZ::uniform([1, 1, 1, 1]),
            certified: false,
            unbounded: false,
        };
        let f0 = exponent_at_params(0.0, 0.0, &ep, &om);
        assert!(f0 <= 0.0);
        let d = 0.01;
        let f1 = exponent_at_params(0.2, 0.1, &ep, &om);
        let f2 = exponent_at_params(0.2 + d, 0.1, &ep, &om);
        let (a, _) = ep.tilt().hyperplane().rate_coefficients();
        assert!((f2 - f1 - ep.lambda * a * d / ep.denominator()).abs() < 1e-15);
    }
}
