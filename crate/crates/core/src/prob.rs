//! Finite probability primitives: distributions, channels, four-variable
//! joints over U×X×Y×Z and the information quantities built from them.
//!
//! All logarithms are natural, so every quantity is in nats. Terms with zero
//! probability contribute nothing (0·ln 0 = 0).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs whose total deviates from 1 by at most this much are renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;
/// Stored distributions sum to 1 within this tolerance.
pub const VALID_TOL: f64 = 1e-12;
/// Slack allowed below zero for information quantities.
pub const NONNEG_SLACK: f64 = 1e-12;

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Checks nonnegativity and the total, renormalizing small deviations.
pub(crate) fn normalize_mass(mut mass: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if mass.is_empty() {
        return Err(Error::Validation(format!("{what}: empty")));
    }
    for (i, &m) in mass.iter().enumerate() {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::Validation(format!(
                "{what}: entry {i} is {m}, expected a finite nonnegative weight"
            )));
        }
    }
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::Validation(format!(
            "{what}: weights sum to {total}, expected 1"
        )));
    }
    if total != 1.0 {
        mass.iter_mut().for_each(|m| *m /= total);
    }
    Ok(mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist {
    mass: Vec<f64>,
}

impl ProbDist {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        Ok(ProbDist {
            mass: normalize_mass(mass, "distribution")?,
        })
    }

    pub fn uniform(n: usize) -> Self {
        ProbDist {
            mass: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, at: usize) -> Self {
        let mut mass = vec![0.0; n];
        mass[at] = 1.0;
        ProbDist { mass }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, i: usize) -> f64 {
        self.mass[i]
    }
}

/// A channel from an input alphabet to distributions over an output alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    rows: Vec<ProbDist>,
    out_size: usize,
}

impl StochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dimension("stochastic matrix has no rows".into()));
        }
        let out_size = rows[0].len();
        let mut checked = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != out_size {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {out_size}",
                    row.len()
                )));
            }
            let mass = normalize_mass(row, &format!("row {i}"))?;
            checked.push(ProbDist { mass });
        }
        Ok(StochasticMatrix {
            rows: checked,
            out_size,
        })
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix {
            rows: (0..n).map(|i| ProbDist::point(n, i)).collect(),
            out_size: n,
        }
    }

    /// Every row equal to `row`: the output carries no information.
    pub fn useless(in_size: usize, row: &ProbDist) -> Self {
        StochasticMatrix {
            rows: vec![row.clone(); in_size],
            out_size: row.len(),
        }
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Self {
        StochasticMatrix::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
            .expect("crossover probability in [0, 1]")
    }

    pub fn in_size(&self) -> usize {
        self.rows.len()
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn row(&self, x: usize) -> &ProbDist {
        &self.rows[x]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.rows[x].mass[y]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.mass.clone()).collect()
    }

    /// Output distribution induced by input distribution `input`.
    pub fn output(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_size];
        for (x, &px) in input.iter().enumerate() {
            if px > 0.0 {
                for (y, o) in out.iter_mut().enumerate() {
                    *o += px * self.get(x, y);
                }
            }
        }
        out
    }
}

pub fn entropy(p: &ProbDist) -> f64 {
    -p.mass.iter().map(|&m| xlogx(m)).sum::<f64>()
}

fn entropy_raw(mass: &[f64]) -> f64 {
    -mass.iter().map(|&m| xlogx(m)).sum::<f64>()
}

/// KL divergence D(p||q) of two mass vectors; +inf on support violation.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            d += a * (a / b).ln();
        }
    }
    d
}

/// I(A;B) for a two-dimensional joint mass table.
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64> {
    if joint.is_empty() || joint[0].is_empty() {
        return Err(Error::Validation("empty joint table".into()));
    }
    let cols = joint[0].len();
    if joint.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("ragged joint table".into()));
    }
    let flat = normalize_mass(joint.concat(), "joint")?;
    let mut row_m = vec![0.0; joint.len()];
    let mut col_m = vec![0.0; cols];
    for (a, ra) in row_m.iter_mut().enumerate() {
        for (b, cb) in col_m.iter_mut().enumerate() {
            let v = flat[a * cols + b];
            *ra += v;
            *cb += v;
        }
    }
    let mut mi = 0.0;
    for (a, &ra) in row_m.iter().enumerate() {
        for (b, &cb) in col_m.iter().enumerate() {
            let v = flat[a * cols + b];
            if v > 0.0 {
                mi += v * (v / (ra * cb)).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Coordinate of a four-variable joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    U = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

/// Subset of axes, as a bit set (`U`=1, `X`=2, `Y`=4, `Z`=8).
pub type Mask = u8;

pub const M_U: Mask = 1;
pub const M_X: Mask = 2;
pub const M_Y: Mask = 4;
pub const M_Z: Mask = 8;
pub const M_ALL: Mask = 15;

/// Index arithmetic for a U×X×Y×Z table, with precomputed projections of
/// every atom onto every marginal.
#[derive(Debug, Clone)]
pub struct Layout {
    dims: [usize; 4],
    n_atoms: usize,
    proj: Vec<Vec<u32>>,
    marg_len: [usize; 16],
}

impl Layout {
    pub fn new(dims: [usize; 4]) -> Self {
        let n_atoms = dims.iter().product();
        let mut proj = Vec::with_capacity(16);
        let mut marg_len = [0usize; 16];
        for mask in 0u8..16 {
            let mut table = Vec::with_capacity(n_atoms);
            let mut len = 1;
            for (ax, &d) in dims.iter().enumerate() {
                if mask & (1 << ax) != 0 {
                    len *= d;
                }
            }
            marg_len[mask as usize] = len;
            for a in 0..n_atoms {
                let coords = Self::coords_of(&dims, a);
                let mut idx = 0usize;
                for ax in 0..4 {
                    if mask & (1 << ax) != 0 {
                        idx = idx * dims[ax] + coords[ax];
                    }
                }
                table.push(idx as u32);
            }
            proj.push(table);
        }
        Layout {
            dims,
            n_atoms,
            proj,
            marg_len,
        }
    }

    fn coords_of(dims: &[usize; 4], mut a: usize) -> [usize; 4] {
        let mut c = [0; 4];
        for ax in (0..4).rev() {
            c[ax] = a % dims[ax];
            a /= dims[ax];
        }
        c
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    #[inline]
    pub fn index(&self, u: usize, x: usize, y: usize, z: usize) -> usize {
        ((u * self.dims[1] + x) * self.dims[2] + y) * self.dims[3] + z
    }

    #[inline]
    pub fn coords(&self, a: usize) -> [usize; 4] {
        Self::coords_of(&self.dims, a)
    }

    #[inline]
    pub fn project(&self, mask: Mask, a: usize) -> usize {
        self.proj[mask as usize][a] as usize
    }

    pub fn marginal_len(&self, mask: Mask) -> usize {
        self.marg_len[mask as usize]
    }

    /// Marginal of `mass` on the axes in `mask`, row-major in U, X, Y, Z order.
    pub fn marginal(&self, mask: Mask, mass: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.marg_len[mask as usize]];
        let table = &self.proj[mask as usize];
        for (a, &m) in mass.iter().enumerate() {
            out[table[a] as usize] += m;
        }
        out
    }
}

/// Joint probability mass over U×X×Y×Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistUXYZ {
    dims: [usize; 4],
    mass: Vec<f64>,
}

impl JointDistUXYZ {
    pub fn new(dims: [usize; 4], mass: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension("alphabet of size zero".into()));
        }
        let n: usize = dims.iter().product();
        if mass.len() != n {
            return Err(Error::Dimension(format!(
                "joint has {} entries, dims {:?} need {n}",
                mass.len(),
                dims
            )));
        }
        Ok(JointDistUXYZ {
            dims,
            mass: normalize_mass(mass, "joint")?,
        })
    }

    pub fn uniform(dims: [usize; 4]) -> Self {
        let n: usize = dims.iter().product();
        JointDistUXYZ {
            dims,
            mass: vec![1.0 / n as f64; n],
        }
    }

    /// Builds from unnormalized nonnegative weights.
    pub fn from_weights(dims: [usize; 4], mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Validation("weights have no positive mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(dims, weights)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.dims)
    }

    pub fn get(&self, u: usize, x: usize, y: usize, z: usize) -> f64 {
        let d = self.dims;
        self.mass[((u * d[1] + x) * d[2] + y) * d[3] + z]
    }

    pub fn marginal(&self, mask: Mask) -> Vec<f64> {
        Layout::new(self.dims).marginal(mask, &self.mass)
    }

    fn marginal_entropy(&self, layout: &Layout, mask: Mask) -> f64 {
        entropy_raw(&layout.marginal(mask, &self.mass))
    }

    /// D(q_{T|C} || reference | q_C) where `target` is Y or Z and the
    /// context `given` contains X. The reference is indexed by x.
    pub fn conditional_kl(&self, target: Axis, given: Mask, reference: &StochasticMatrix) -> f64 {
        debug_assert!(matches!(target, Axis::Y | Axis::Z));
        debug_assert!(given & M_X != 0 && given & (1 << target as u8) == 0);
        let layout = self.layout();
        let joint_mask = given | (1 << target as u8);
        let num = layout.marginal(joint_mask, &self.mass);
        let den = layout.marginal(given, &self.mass);
        // Sum over cells of the (given ∪ target) marginal, visiting each once.
        let mut seen = vec![false; num.len()];
        let mut d = 0.0;
        for a in 0..layout.n_atoms() {
            let j = layout.project(joint_mask, a);
            if seen[j] {
                continue;
            }
            seen[j] = true;
            let p = num[j];
            if p <= 0.0 {
                continue;
            }
            let c = layout.coords(a);
            let r = reference.get(c[1], c[target as usize]);
            if r <= 0.0 {
                return f64::INFINITY;
            }
            let cond = p / den[layout.project(given, a)];
            d += p * (cond / r).ln();
        }
        d.max(0.0)
    }
}

/// Selector for the information quantities appearing in the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoQuantity {
    /// I(X;Y|U)
    XYGivenU,
    /// I(U;Z)
    UZ,
    /// I(X;Y)
    XY,
}

/// Exact evaluation of the selected quantity through marginal entropies.
pub fn conditional_mutual_information(joint: &JointDistUXYZ, which: InfoQuantity) -> f64 {
    let l = joint.layout();
    let h = |m: Mask| joint.marginal_entropy(&l, m);
    let v = match which {
        InfoQuantity::XYGivenU => h(M_U | M_X) + h(M_U | M_Y) - h(M_U | M_X | M_Y) - h(M_U),
        InfoQuantity::UZ => h(M_U) + h(M_Z) - h(M_U | M_Z),
        InfoQuantity::XY => h(M_X) + h(M_Y) - h(M_X | M_Y),
    };
    v.max(0.0)
}

/// Conditional divergence Σ_c weight(c)·D(q_cond(·|c) || reference(·|x(c))).
///
/// `input_of[c]` selects the reference row for context `c`. Returns +inf
/// when a positive-weight context puts mass where the reference has none.
pub fn conditional_kl(
    q_cond: &[Vec<f64>],
    reference: &StochasticMatrix,
    input_of: &[usize],
    weight: &[f64],
) -> Result<f64> {
    if q_cond.len() != weight.len() || input_of.len() != weight.len() {
        return Err(Error::Dimension(
            "conditional law, context map and weight disagree in length".into(),
        ));
    }
    let mut d = 0.0;
    for ((row, &x), &w) in q_cond.iter().zip(input_of).zip(weight) {
        if row.len() != reference.out_size() || x >= reference.in_size() {
            return Err(Error::Dimension("conditional row does not match reference".into()));
        }
        if w <= 0.0 {
            continue;
        }
        let k = kl_divergence(row, reference.row(x).as_slice());
        if k.is_infinite() {
            return Ok(f64::INFINITY);
        }
        d += w * k;
    }
    Ok(d.max(0.0))
}
