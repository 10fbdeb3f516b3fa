//! Exhaustive verification of correct-decoding bounds on small block codes.
//!
//! A code sends a pair of messages (k, l) with `k < K`, `l < L` in `n`
//! channel uses; receiver 1 decodes both, receiver 2 decodes `l`. Every
//! probability here is an exact finite sum over the code, the input
//! sequences and both output sequence sets.
//!
//! Sequences are indexed base-|alphabet| with the first symbol most
//! significant, and the message pair (k, l) has index `k·L + l`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelPair;
use crate::error::{Error, Result};
use crate::exponent::{exponent_at_params, ExponentParams, OmegaResult};
use crate::prob::StochasticMatrix;

/// Hard cap on weighted terms `K·L·|support|·|Y|^n·|Z|^n` of one enumeration.
pub const ENUMERATION_CAP: u128 = 1 << 22;
/// A bound check passes when `bound − p_c` is at least `−PASS_SLACK`.
pub const PASS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCode {
    pub n: usize,
    pub k_count: usize,
    pub l_count: usize,
    /// Input distribution per message pair: (sequence index, probability).
    pub encoder: Vec<Vec<(usize, f64)>>,
    /// Receiver 1 decision (k, l) per output sequence index.
    pub dec1: Vec<(usize, usize)>,
    /// Receiver 2 decision l per output sequence index.
    pub dec2: Vec<usize>,
}

fn pow(base: usize, n: usize) -> Result<usize> {
    base.checked_pow(n as u32)
        .ok_or_else(|| Error::Dimension(format!("{base}^{n} overflows")))
}

/// Symbols of sequence `index` of length `n`.
pub fn sequence_symbols(mut index: usize, n: usize, alphabet: usize) -> Vec<usize> {
    let mut s = vec![0; n];
    for t in (0..n).rev() {
        s[t] = index % alphabet;
        index /= alphabet;
    }
    s
}

pub fn sequence_index(symbols: &[usize], alphabet: usize) -> usize {
    symbols.iter().fold(0, |acc, &s| acc * alphabet + s)
}

/// Memoryless extension: `[x^n][y^n] ↦ Π_t W(y_t|x_t)`.
pub fn product_channel(w: &StochasticMatrix, n: usize) -> Result<Vec<Vec<f64>>> {
    let (nx, ny) = (pow(w.in_size(), n)?, pow(w.out_size(), n)?);
    let mut out = vec![vec![0.0; ny]; nx];
    for (xi, row) in out.iter_mut().enumerate() {
        let xs = sequence_symbols(xi, n, w.in_size());
        for (yi, v) in row.iter_mut().enumerate() {
            let ys = sequence_symbols(yi, n, w.out_size());
            *v = xs.iter().zip(&ys).map(|(&x, &y)| w.get(x, y)).product();
        }
    }
    Ok(out)
}

impl BlockCode {
    pub fn messages(&self) -> usize {
        self.k_count * self.l_count
    }

    /// Rates `(ln K / n, ln L / n)` in nats.
    pub fn rates(&self) -> (f64, f64) {
        let n = self.n as f64;
        ((self.k_count as f64).ln() / n, (self.l_count as f64).ln() / n)
    }

    /// Deterministic code from one input sequence index per message pair,
    /// with all decoders answering 0.
    pub fn deterministic(
        n: usize,
        k_count: usize,
        l_count: usize,
        codewords: &[usize],
        ch: &ChannelPair,
    ) -> Result<Self> {
        let code = BlockCode {
            n,
            k_count,
            l_count,
            encoder: codewords.iter().map(|&c| vec![(c, 1.0)]).collect(),
            dec1: vec![(0, 0); pow(ch.y_size(), n)?],
            dec2: vec![0; pow(ch.z_size(), n)?],
        };
        code.validate(ch)?;
        Ok(code)
    }

    pub fn validate(&self, ch: &ChannelPair) -> Result<()> {
        if self.n == 0 || self.k_count == 0 || self.l_count == 0 {
            return Err(Error::Validation("n, K and L must be positive".into()));
        }
        let nx = pow(ch.x_size(), self.n)?;
        let ny = pow(ch.y_size(), self.n)?;
        let nz = pow(ch.z_size(), self.n)?;
        if self.encoder.len() != self.messages() {
            return Err(Error::Dimension(format!(
                "encoder has {} entries, K·L = {}",
                self.encoder.len(),
                self.messages()
            )));
        }
        for (m, row) in self.encoder.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Validation(format!("encoder entry {m} is empty")));
            }
            let mut total = 0.0;
            for &(x, p) in row {
                if x >= nx || !(p >= 0.0) {
                    return Err(Error::Validation(format!(
                        "encoder entry {m}: bad sequence {x} or weight {p}"
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "encoder entry {m} sums to {total}"
                )));
            }
        }
        if self.dec1.len() != ny || self.dec2.len() != nz {
            return Err(Error::Dimension(format!(
                "decoders cover {} and {} outputs, expected {ny} and {nz}",
                self.dec1.len(),
                self.dec2.len()
            )));
        }
        if self
            .dec1
            .iter()
            .any(|&(k, l)| k >= self.k_count || l >= self.l_count)
            || self.dec2.iter().any(|&l| l >= self.l_count)
        {
            return Err(Error::Validation("decoder output out of range".into()));
        }
        Ok(())
    }

    /// Weighted terms of a full enumeration over this code.
    pub fn enumeration_terms(&self, ch: &ChannelPair) -> u128 {
        let support: u128 = self.encoder.iter().map(|r| r.len() as u128).sum();
        let ny = (ch.y_size() as u128).saturating_pow(self.n as u32);
        let nz = (ch.z_size() as u128).saturating_pow(self.n as u32);
        support.saturating_mul(ny).saturating_mul(nz)
    }

    fn check_budget(&self, ch: &ChannelPair) -> Result<()> {
        let terms = self.enumeration_terms(ch);
        if terms > ENUMERATION_CAP {
            return Err(Error::Budget {
                terms,
                cap: ENUMERATION_CAP,
            });
        }
        Ok(())
    }
}

/// Product-channel tables for one code length.
#[derive(Debug, Clone)]
pub struct CodeContext {
    pub n: usize,
    pub w1n: Vec<Vec<f64>>,
    pub w2n: Vec<Vec<f64>>,
}

impl CodeContext {
    pub fn new(ch: &ChannelPair, n: usize) -> Result<Self> {
        Ok(CodeContext {
            n,
            w1n: product_channel(&ch.w1, n)?,
            w2n: product_channel(&ch.w2, n)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbabilities {
    pub p_c: f64,
    pub p_e: f64,
    pub p_e1: f64,
    pub p_e2: f64,
}

/// Average probability that both receivers decode correctly.
pub fn exact_correct_probability(code: &BlockCode, ch: &ChannelPair) -> Result<f64> {
    code.validate(ch)?;
    code.check_budget(ch)?;
    let ctx = CodeContext::new(ch, code.n)?;
    Ok(correct_probability_in(code, &ctx))
}

pub(crate) fn correct_probability_in(code: &BlockCode, ctx: &CodeContext) -> f64 {
    let lc = code.l_count;
    let mut total = 0.0;
    for (m, row) in code.encoder.iter().enumerate() {
        let l = m % lc;
        for &(x, p) in row {
            let mut a = 0.0;
            for (y, &w) in ctx.w1n[x].iter().enumerate() {
                let (dk, dl) = code.dec1[y];
                if dk * lc + dl == m {
                    a += w;
                }
            }
            let mut b = 0.0;
            for (z, &w) in ctx.w2n[x].iter().enumerate() {
                if code.dec2[z] == l {
                    b += w;
                }
            }
            total += p * a * b;
        }
    }
    total / code.messages() as f64
}

/// Correct and error probabilities from a single full enumeration.
pub fn error_probabilities(code: &BlockCode, ch: &ChannelPair) -> Result<ErrorProbabilities> {
    code.validate(ch)?;
    code.check_budget(ch)?;
    let ctx = CodeContext::new(ch, code.n)?;
    let lc = code.l_count;
    let (mut c, mut e, mut e1, mut e2) = (0.0, 0.0, 0.0, 0.0);
    for (m, row) in code.encoder.iter().enumerate() {
        let l = m % lc;
        for &(x, p) in row {
            for (y, &wy) in ctx.w1n[x].iter().enumerate() {
                let (dk, dl) = code.dec1[y];
                let ok1 = dk * lc + dl == m;
                for (z, &wz) in ctx.w2n[x].iter().enumerate() {
                    let ok2 = code.dec2[z] == l;
                    let t = p * wy * wz;
                    if ok1 && ok2 {
                        c += t;
                    } else {
                        e += t;
                    }
                    if !ok1 {
                        e1 += t;
                    }
                    if !ok2 {
                        e2 += t;
                    }
                }
            }
        }
    }
    let norm = code.messages() as f64;
    Ok(ErrorProbabilities {
        p_c: c / norm,
        p_e: e / norm,
        p_e1: e1 / norm,
        p_e2: e2 / norm,
    })
}

/// Largest receiver-2 decoder space that is enumerated outright.
pub const EXACT_DECODER_CAP: u128 = 1 << 12;

/// Decoder optimization. When receiver 2 has at most `EXACT_DECODER_CAP`
/// possible decoders, each is paired with its exact best-response receiver-1
/// decoder and the best pair kept, which is a global optimum. Then (or
/// otherwise, from maximum-likelihood decoders) alternating half-rounds
/// re-decide every output sequence for one receiver with the other fixed; a
/// decision changes only on strict improvement, ties going to the lowest
/// index. `P_c` never decreases across a half-round.
pub fn optimize_decoders(code: &BlockCode, ch: &ChannelPair, rounds: usize) -> Result<BlockCode> {
    code.validate(ch)?;
    code.check_budget(ch)?;
    let ctx = CodeContext::new(ch, code.n)?;
    optimize_decoders_in(code, &ctx, rounds)
}

/// `Σ_x φ(x|m)·weight(x)·W^n(out|x)` for every message `m`.
fn message_scores(
    code: &BlockCode,
    table: &[Vec<f64>],
    out: usize,
    weight: &[Vec<f64>],
    score: &mut [f64],
) {
    for (m, row) in code.encoder.iter().enumerate() {
        score[m] = row
            .iter()
            .zip(&weight[m])
            .map(|(&(x, p), w)| p * w * table[x][out])
            .sum();
    }
}

fn argmax_lowest(score: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in score.iter().enumerate() {
        if s > score[best] {
            best = i;
        }
    }
    best
}

/// Probability that receiver 2 decodes `m`'s common part, per encoder atom.
fn dec2_hits(code: &BlockCode, ctx: &CodeContext) -> Vec<Vec<f64>> {
    let lc = code.l_count;
    code.encoder
        .iter()
        .enumerate()
        .map(|(m, row)| {
            row.iter()
                .map(|&(x, _)| {
                    ctx.w2n[x]
                        .iter()
                        .zip(&code.dec2)
                        .filter(|(_, &d)| d == m % lc)
                        .map(|(w, _)| w)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Probability that receiver 1 decodes `m`, per encoder atom.
fn dec1_hits(code: &BlockCode, ctx: &CodeContext) -> Vec<Vec<f64>> {
    let lc = code.l_count;
    code.encoder
        .iter()
        .enumerate()
        .map(|(m, row)| {
            row.iter()
                .map(|&(x, _)| {
                    ctx.w1n[x]
                        .iter()
                        .zip(&code.dec1)
                        .filter(|(_, &(k, l))| k * lc + l == m)
                        .map(|(w, _)| w)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Receiver-1 update with receiver 2 fixed. With `strict`, a decision moves
/// only to a strictly better message; otherwise it is the plain argmax.
fn update_dec1(code: &mut BlockCode, ctx: &CodeContext, strict: bool) -> bool {
    let lc = code.l_count;
    let weight = dec2_hits(code, ctx);
    let mut score = vec![0.0; code.messages()];
    let mut changed = false;
    for y in 0..code.dec1.len() {
        message_scores(code, &ctx.w1n, y, &weight, &mut score);
        let best = argmax_lowest(&score);
        let (ck, cl) = code.dec1[y];
        let cur = ck * lc + cl;
        if best != cur && (!strict || score[best] > score[cur]) {
            code.dec1[y] = (best / lc, best % lc);
            changed = true;
        }
    }
    changed
}

/// Receiver-2 update with receiver 1 fixed.
fn update_dec2(code: &mut BlockCode, ctx: &CodeContext, strict: bool) -> bool {
    let lc = code.l_count;
    let weight = dec1_hits(code, ctx);
    let mut per_msg = vec![0.0; code.messages()];
    let mut score = vec![0.0; lc];
    let mut changed = false;
    for z in 0..code.dec2.len() {
        message_scores(code, &ctx.w2n, z, &weight, &mut per_msg);
        score.iter_mut().for_each(|s| *s = 0.0);
        for (m, v) in per_msg.iter().enumerate() {
            score[m % lc] += v;
        }
        let best = argmax_lowest(&score);
        let cur = code.dec2[z];
        if best != cur && (!strict || score[best] > score[cur]) {
            code.dec2[z] = best;
            changed = true;
        }
    }
    changed
}

fn maximum_likelihood_start(code: &mut BlockCode, ctx: &CodeContext) {
    let ones: Vec<Vec<f64>> = code.encoder.iter().map(|r| vec![1.0; r.len()]).collect();
    let lc = code.l_count;
    let mut score = vec![0.0; code.messages()];
    for y in 0..code.dec1.len() {
        message_scores(code, &ctx.w1n, y, &ones, &mut score);
        let m = argmax_lowest(&score);
        code.dec1[y] = (m / lc, m % lc);
    }
    let mut common = vec![0.0; lc];
    for z in 0..code.dec2.len() {
        message_scores(code, &ctx.w2n, z, &ones, &mut score);
        common.iter_mut().for_each(|s| *s = 0.0);
        for (m, v) in score.iter().enumerate() {
            common[m % lc] += v;
        }
        code.dec2[z] = argmax_lowest(&common);
    }
}

pub(crate) fn optimize_decoders_in(
    code: &BlockCode,
    ctx: &CodeContext,
    rounds: usize,
) -> Result<BlockCode> {
    let mut code = code.clone();
    let lc = code.l_count;
    let nz = code.dec2.len();
    let space = (lc as u128).checked_pow(nz as u32);
    if space.is_some_and(|s| s <= EXACT_DECODER_CAP) {
        let mut trial = code.clone();
        let mut best_pc = f64::NEG_INFINITY;
        for c in 0..space.unwrap_or(0) as u64 {
            let mut rest = c;
            for z in (0..nz).rev() {
                trial.dec2[z] = (rest % lc as u64) as usize;
                rest /= lc as u64;
            }
            update_dec1(&mut trial, ctx, false);
            let pc = correct_probability_in(&trial, ctx);
            if pc > best_pc {
                best_pc = pc;
                code.clone_from(&trial);
            }
        }
    } else {
        maximum_likelihood_start(&mut code, ctx);
    }

    let mut before = correct_probability_in(&code, ctx);
    for _ in 0..rounds {
        let c1 = update_dec1(&mut code, ctx, true);
        let mid = correct_probability_in(&code, ctx);
        let c2 = update_dec2(&mut code, ctx, true);
        let after = correct_probability_in(&code, ctx);
        if mid < before - 1e-15 || after < mid - 1e-15 {
            return Err(Error::Contract(format!(
                "decoder update lowered P_c: {before} -> {mid} -> {after}"
            )));
        }
        before = after;
        if !c1 && !c2 {
            break;
        }
    }
    Ok(code)
}

/// What a bound check was evaluated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundParams {
    Exponent {
        params: ExponentParams,
        omega: f64,
        exponent: f64,
    },
    InformationSpectrum {
        eta: f64,
        choice: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub p_c: f64,
    pub bound: f64,
    pub slack: f64,
    pub params: BoundParams,
    pub pass: bool,
}

impl BoundReport {
    fn new(p_c: f64, bound: f64, params: BoundParams) -> Self {
        let slack = bound - p_c;
        BoundReport {
            p_c,
            bound,
            slack,
            params,
            pass: slack >= -PASS_SLACK,
        }
    }
}

/// `P_c ≤ 6·exp(−n·F)` where F is the exponent function at the code's rates
/// and the given parameters. `exponent_scale` multiplies F before use; it is
/// 1 for the actual bound and exists so the failure path can be exercised.
pub fn check_exponent_bound(
    code: &BlockCode,
    ch: &ChannelPair,
    ep: &ExponentParams,
    omega: &OmegaResult,
    exponent_scale: f64,
) -> Result<BoundReport> {
    let p_c = exact_correct_probability(code, ch)?;
    Ok(exponent_bound_report(p_c, code, ep, omega, exponent_scale))
}

pub(crate) fn exponent_bound_report(
    p_c: f64,
    code: &BlockCode,
    ep: &ExponentParams,
    omega: &OmegaResult,
    exponent_scale: f64,
) -> BoundReport {
    let (r1, r2) = code.rates();
    let f = exponent_scale * exponent_at_params(r1, r2, ep, omega);
    let bound = 6.0 * (-(code.n as f64) * f).exp();
    BoundReport::new(
        p_c,
        bound,
        BoundParams::Exponent {
            params: *ep,
            omega: omega.value,
            exponent: f,
        },
    )
}

/// Per-code bound at several parameter tuples, sharing one enumeration.
pub fn exponent_bound_reports(
    code: &BlockCode,
    ch: &ChannelPair,
    params: &[(ExponentParams, OmegaResult)],
    exponent_scale: f64,
) -> Result<Vec<BoundReport>> {
    let p_c = exact_correct_probability(code, ch)?;
    Ok(params
        .iter()
        .map(|(ep, om)| exponent_bound_report(p_c, code, ep, om, exponent_scale))
        .collect())
}

/// The five test laws of the information-spectrum bound, as tables over
/// sequence indices. Conditioning contexts are flattened row-major in the
/// order written in the field name, `l` last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTestLaws {
    /// Rows indexed by `(x^n·|Z^n| + z^n)·L + l`, columns by `y^n`.
    pub y_given_xzl: Vec<Vec<f64>>,
    /// Rows indexed by `(x^n·|Y^n| + y^n)·L + l`, columns by `z^n`.
    pub z_given_xyl: Vec<Vec<f64>>,
    /// Rows indexed by `l`, columns by `y^n`.
    pub y_given_l: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

struct Sizes {
    nx: usize,
    ny: usize,
    nz: usize,
    l: usize,
}

fn sizes(code: &BlockCode, ch: &ChannelPair) -> Result<Sizes> {
    Ok(Sizes {
        nx: pow(ch.x_size(), code.n)?,
        ny: pow(ch.y_size(), code.n)?,
        nz: pow(ch.z_size(), code.n)?,
        l: code.l_count,
    })
}

fn check_table(name: &str, rows: &[Vec<f64>], n_rows: usize, n_cols: usize) -> Result<()> {
    if rows.len() != n_rows {
        return Err(Error::Dimension(format!(
            "{name}: {} rows, expected {n_rows}",
            rows.len()
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n_cols {
            return Err(Error::Dimension(format!(
                "{name} row {i}: {} entries, expected {n_cols}",
                r.len()
            )));
        }
        let total: f64 = r.iter().sum();
        if r.iter().any(|&v| !(v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("{name} row {i} is not a distribution")));
        }
    }
    Ok(())
}

impl SpectrumTestLaws {
    pub fn validate(&self, code: &BlockCode, ch: &ChannelPair) -> Result<()> {
        let s = sizes(code, ch)?;
        check_table("y_given_xzl", &self.y_given_xzl, s.nx * s.nz * s.l, s.ny)?;
        check_table("z_given_xyl", &self.z_given_xyl, s.nx * s.ny * s.l, s.nz)?;
        check_table("y_given_l", &self.y_given_l, s.l, s.ny)?;
        check_table("z", std::slice::from_ref(&self.z), 1, s.nz)?;
        check_table("y", std::slice::from_ref(&self.y), 1, s.ny)?;
        Ok(())
    }

    /// The laws induced by the code itself: the channel laws for the first
    /// two, and the code's own output marginals for the rest.
    pub fn code_induced(code: &BlockCode, ch: &ChannelPair) -> Result<Self> {
        code.validate(ch)?;
        code.check_budget(ch)?;
        let ctx = CodeContext::new(ch, code.n)?;
        let s = sizes(code, ch)?;
        let mut y_given_xzl = Vec::with_capacity(s.nx * s.nz * s.l);
        for x in 0..s.nx {
            for _z in 0..s.nz {
                for _l in 0..s.l {
                    y_given_xzl.push(ctx.w1n[x].clone());
                }
            }
        }
        let mut z_given_xyl = Vec::with_capacity(s.nx * s.ny * s.l);
        for x in 0..s.nx {
            for _y in 0..s.ny {
                for _l in 0..s.l {
                    z_given_xyl.push(ctx.w2n[x].clone());
                }
            }
        }
        let kf = code.k_count as f64;
        let lf = code.l_count as f64;
        let mut y_given_l = vec![vec![0.0; s.ny]; s.l];
        let mut z = vec![0.0; s.nz];
        let mut y = vec![0.0; s.ny];
        for (m, row) in code.encoder.iter().enumerate() {
            let l = m % s.l;
            for &(x, p) in row {
                for yi in 0..s.ny {
                    y_given_l[l][yi] += p * ctx.w1n[x][yi] / kf;
                    y[yi] += p * ctx.w1n[x][yi] / (kf * lf);
                }
                for zi in 0..s.nz {
                    z[zi] += p * ctx.w2n[x][zi] / (kf * lf);
                }
            }
        }
        Ok(SpectrumTestLaws {
            y_given_xzl,
            z_given_xyl,
            y_given_l,
            z,
            y,
        })
    }

    /// Random laws: each row mixes the code-induced row with an independent
    /// draw, with a random mixing weight.
    pub fn random(code: &BlockCode, ch: &ChannelPair, rng: &mut ChaCha8Rng) -> Result<Self> {
        let base = Self::code_induced(code, ch)?;
        let mut mix_row = |row: &[f64]| -> Vec<f64> {
            let t: f64 = rng.gen();
            let mut draw: Vec<f64> = row
                .iter()
                .map(|_| -(rng.gen::<f64>().max(1e-300)).ln())
                .collect();
            let s: f64 = draw.iter().sum();
            draw.iter_mut().for_each(|d| *d /= s);
            let mut out: Vec<f64> = row
                .iter()
                .zip(&draw)
                .map(|(&a, &b)| t * a + (1.0 - t) * b)
                .collect();
            let s: f64 = out.iter().sum();
            out.iter_mut().for_each(|v| *v /= s);
            out
        };
        let y_given_xzl = base.y_given_xzl.iter().map(|r| mix_row(r)).collect();
        let z_given_xyl = base.z_given_xyl.iter().map(|r| mix_row(r)).collect();
        let y_given_l = base.y_given_l.iter().map(|r| mix_row(r)).collect();
        let z = mix_row(&base.z);
        let y = mix_row(&base.y);
        Ok(SpectrumTestLaws {
            y_given_xzl,
            z_given_xyl,
            y_given_l,
            z,
            y,
        })
    }
}

/// Information-spectrum bound: `P_c` is at most the probability, under the
/// code's joint law of (L, X^n, Y^n, Z^n), that all five likelihood-ratio
/// conditions hold, plus `5·e^{−nη}`.
///
/// The conditions are checked in multiplicative form, e.g.
/// `W1^n(y|x) ≥ K·e^{−nη}·Q(y|l)` for `R1 ≤ (1/n) ln(W1^n/Q) + η` with
/// `R1 = ln K / n`.
pub fn check_spectrum_bound(
    code: &BlockCode,
    ch: &ChannelPair,
    laws: &SpectrumTestLaws,
    eta: f64,
    choice: &str,
) -> Result<BoundReport> {
    if !(eta > 0.0) {
        return Err(Error::Validation(format!("eta must be positive: {eta}")));
    }
    code.validate(ch)?;
    code.check_budget(ch)?;
    laws.validate(code, ch)?;
    let ctx = CodeContext::new(ch, code.n)?;
    let p_c = correct_probability_in(code, &ctx);
    let s = sizes(code, ch)?;
    let kf = code.k_count as f64;
    let lf = code.l_count as f64;
    let slack = (-(code.n as f64) * eta).exp();

    // p(z^n | l), exact
    let mut z_given_l = vec![vec![0.0; s.nz]; s.l];
    for (m, row) in code.encoder.iter().enumerate() {
        for &(x, p) in row {
            for zi in 0..s.nz {
                z_given_l[m % s.l][zi] += p * ctx.w2n[x][zi] / kf;
            }
        }
    }

    let mut event = 0.0;
    for (m, row) in code.encoder.iter().enumerate() {
        let l = m % s.l;
        for &(x, p) in row {
            for yi in 0..s.ny {
                let w1 = ctx.w1n[x][yi];
                if w1 == 0.0 {
                    continue;
                }
                let c10 = w1 >= kf * slack * laws.y_given_l[l][yi];
                let c12 = w1 >= kf * lf * slack * laws.y[yi];
                if !(c10 && c12) {
                    continue;
                }
                for zi in 0..s.nz {
                    let w2 = ctx.w2n[x][zi];
                    if w2 == 0.0 {
                        continue;
                    }
                    let c8 = w1 >= slack * laws.y_given_xzl[(x * s.nz + zi) * s.l + l][yi];
                    let c9 = w2 >= slack * laws.z_given_xyl[(x * s.ny + yi) * s.l + l][zi];
                    let c11 = z_given_l[l][zi] >= lf * slack * laws.z[zi];
                    if c8 && c9 && c11 {
                        event += p * w1 * w2;
                    }
                }
            }
        }
    }
    let bound = event / (kf * lf) + 5.0 * slack;
    Ok(BoundReport::new(
        p_c,
        bound,
        BoundParams::InformationSpectrum {
            eta,
            choice: choice.to_string(),
        },
    ))
}

/// Information-spectrum checks with the code-induced laws and `sweeps`
/// random laws, for every `eta`.
pub fn spectrum_bound_sweep(
    code: &BlockCode,
    ch: &ChannelPair,
    etas: &[f64],
    sweeps: usize,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    let induced = SpectrumTestLaws::code_induced(code, ch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut laws = vec![("induced".to_string(), induced)];
    for i in 0..sweeps {
        laws.push((format!("random-{i}"), SpectrumTestLaws::random(code, ch, &mut rng)?));
    }
    for &eta in etas {
        for (name, q) in &laws {
            out.push(check_spectrum_bound(code, ch, q, eta, name)?);
        }
    }
    Ok(out)
}

/// Every deterministic encoder for the given sizes, in lexicographic order of
/// the codeword list (first message most significant).
pub fn all_deterministic_encoders(
    n: usize,
    k_count: usize,
    l_count: usize,
    x_size: usize,
) -> Result<impl Iterator<Item = Vec<usize>>> {
    let nx = pow(x_size, n)?;
    let msgs = k_count * l_count;
    let total = (nx as u128).checked_pow(msgs as u32).filter(|&t| t <= 1 << 32).ok_or(
        Error::Budget {
            terms: u128::MAX,
            cap: 1 << 32,
        },
    )?;
    Ok((0..total as u64).map(move |mut c| {
        let mut words = vec![0; msgs];
        for m in (0..msgs).rev() {
            words[m] = (c % nx as u64) as usize;
            c /= nx as u64;
        }
        words
    }))
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum EncoderEntry {
    Deterministic(Vec<usize>),
    Stochastic(Vec<(Vec<usize>, f64)>),
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawCode {
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    l: usize,
    encoder: Vec<EncoderEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dec1: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dec2: Option<Vec<usize>>,
}

fn word_index(symbols: &[usize], n: usize, alphabet: usize, m: usize) -> Result<usize> {
    if symbols.len() != n || symbols.iter().any(|&s| s >= alphabet) {
        return Err(Error::parse(
            format!("encoder entry {m}"),
            format!("expected {n} symbols below {alphabet}"),
        ));
    }
    Ok(sequence_index(symbols, alphabet))
}

/// Reads a code document `{"n","K","L","encoder",["dec1"],["dec2"]}`.
/// Missing decoders answer 0 everywhere. A code too large to enumerate is
/// rejected with a budget error before anything is allocated.
pub fn parse_code_spec(text: &str, ch: &ChannelPair) -> Result<BlockCode> {
    let raw: RawCode = serde_json::from_str(text).map_err(|e| {
        Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let support: u128 = raw
        .encoder
        .iter()
        .map(|e| match e {
            EncoderEntry::Deterministic(_) => 1,
            EncoderEntry::Stochastic(ws) => ws.len() as u128,
        })
        .sum();
    let terms = support
        .saturating_mul((ch.y_size() as u128).saturating_pow(raw.n as u32))
        .saturating_mul((ch.z_size() as u128).saturating_pow(raw.n as u32));
    if terms > ENUMERATION_CAP {
        return Err(Error::Budget {
            terms,
            cap: ENUMERATION_CAP,
        });
    }
    let xs = ch.x_size();
    let encoder = raw
        .encoder
        .iter()
        .enumerate()
        .map(|(m, e)| match e {
            EncoderEntry::Deterministic(w) => Ok(vec![(word_index(w, raw.n, xs, m)?, 1.0)]),
            EncoderEntry::Stochastic(ws) => ws
                .iter()
                .map(|(w, p)| Ok((word_index(w, raw.n, xs, m)?, *p)))
                .collect(),
        })
        .collect::<Result<Vec<_>>>()?;
    let ny = pow(ch.y_size(), raw.n)?;
    let nz = pow(ch.z_size(), raw.n)?;
    let code = BlockCode {
        n: raw.n,
        k_count: raw.k,
        l_count: raw.l,
        encoder,
        dec1: raw.dec1.unwrap_or_else(|| vec![(0, 0); ny]),
        dec2: raw.dec2.unwrap_or_else(|| vec![0; nz]),
    };
    code.validate(ch)?;
    Ok(code)
}

impl BlockCode {
    /// Code document for this code, decoders included.
    pub fn to_spec_json(&self, ch: &ChannelPair) -> String {
        let xs = ch.x_size();
        let encoder = self
            .encoder
            .iter()
            .map(|row| {
                if row.len() == 1 && row[0].1 == 1.0 {
                    EncoderEntry::Deterministic(sequence_symbols(row[0].0, self.n, xs))
                } else {
                    EncoderEntry::Stochastic(
                        row.iter()
                            .map(|&(x, p)| (sequence_symbols(x, self.n, xs), p))
                            .collect(),
                    )
                }
            })
            .collect();
        serde_json::to_string(&RawCode {
            n: self.n,
            k: self.k_count,
            l: self.l_count,
            encoder,
            dec1: Some(self.dec1.clone()),
            dec2: Some(self.dec2.clone()),
        })
        .expect("plain document")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ProbDist;

    fn identity_useless() -> ChannelPair {
        ChannelPair::new(
            StochasticMatrix::identity(2),
            StochasticMatrix::useless(2, &ProbDist::uniform(2)),
        )
        .unwrap()
    }

    fn bsc_pair() -> ChannelPair {
        ChannelPair::new(StochasticMatrix::bsc(0.1), StochasticMatrix::bsc(0.2)).unwrap()
    }

    /// Second transcription: loop over messages, input, outputs directly
    /// from per-letter channel entries.
    fn oracle_pc(code: &BlockCode, ch: &ChannelPair) -> f64 {
        let n = code.n;
        let mut s = 0.0;
        for k in 0..code.k_count {
            for l in 0..code.l_count {
                for &(x, p) in &code.encoder[k * code.l_count + l] {
                    let xs = sequence_symbols(x, n, 2);
                    for y in 0..(1 << n) {
                        if code.dec1[y] != (k, l) {
                            continue;
                        }
                        let ys = sequence_symbols(y, n, 2);
                        for z in 0..(1 << n) {
                            if code.dec2[z] != l {
                                continue;
                            }
                            let zs = sequence_symbols(z, n, 2);
                            let mut w = p;
                            for t in 0..n {
                                w *= ch.w1.get(xs[t], ys[t]) * ch.w2.get(xs[t], zs[t]);
                            }
                            s += w;
                        }
                    }
                }
            }
        }
        s / (code.k_count * code.l_count) as f64
    }

    #[test]
    fn noiseless_bit_with_single_common_message() {
        let ch = identity_useless();
        let mut code = BlockCode::deterministic(1, 2, 1, &[0, 1], &ch).unwrap();
        code.dec1 = vec![(0, 0), (1, 0)];
        assert_eq!(exact_correct_probability(&code, &ch).unwrap(), 1.0);
    }

    #[test]
    fn no_information_is_always_decoded() {
        let ch = bsc_pair();
        let code = BlockCode::deterministic(1, 1, 1, &[1], &ch).unwrap();
        assert!((exact_correct_probability(&code, &ch).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correct_probability_matches_oracle() {
        let ch = bsc_pair();
        let mut code = BlockCode::deterministic(2, 2, 2, &[0, 3, 1, 2], &ch).unwrap();
        code.dec1 = vec![(0, 0), (1, 0), (1, 1), (0, 1)];
        code.dec2 = vec![0, 1, 1, 0];
        let p = exact_correct_probability(&code, &ch).unwrap();
        assert!((p - oracle_pc(&code, &ch)).abs() < 1e-15);
        let e = error_probabilities(&code, &ch).unwrap();
        assert!((e.p_c + e.p_e - 1.0).abs() < 1e-15);
        assert!(e.p_e <= e.p_e1 + e.p_e2 + 1e-15);
        assert!((e.p_c - p).abs() < 1e-15);
    }

    #[test]
    fn optimized_decoders_match_exhaustive_search() {
        let ch = bsc_pair();
        for words in [[0usize, 3, 1, 2], [0, 1, 2, 3], [0, 0, 3, 3]] {
            let code = BlockCode::deterministic(2, 2, 2, &words, &ch).unwrap();
            let opt = optimize_decoders(&code, &ch, 50).unwrap();
            let got = exact_correct_probability(&opt, &ch).unwrap();
            let mut best: f64 = 0.0;
            // every dec1: 4 outputs × 4 message pairs; every dec2: 4 × 2
            for d1 in 0..256usize {
                for d2 in 0..16usize {
                    let mut c = code.clone();
                    c.dec1 = (0..4).map(|y| { let m = (d1 >> (2 * y)) & 3; (m / 2, m % 2) }).collect();
                    c.dec2 = (0..4).map(|z| (d2 >> z) & 1).collect();
                    best = best.max(oracle_pc(&c, &ch));
                }
            }
            assert!(got <= best + 1e-15);
            assert!(got >= best - 1e-12, "{words:?}: {got} vs {best}");
        }
    }

    #[test]
    fn useless_receiver_caps_success_at_a_guess() {
        let ch = identity_useless();
        let code = BlockCode::deterministic(2, 2, 2, &[0, 1, 2, 3], &ch).unwrap();
        let opt = optimize_decoders(&code, &ch, 10).unwrap();
        // receiver 2 can only guess the common message
        let p = exact_correct_probability(&opt, &ch).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn budget_is_checked_before_work() {
        let ch = bsc_pair();
        let n = 12;
        let code = BlockCode::deterministic(n, 2, 2, &[0, 1, 2, 3], &ch).unwrap();
        assert!(matches!(
            exact_correct_probability(&code, &ch),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn spectrum_bound_with_induced_and_random_laws() {
        let ch = bsc_pair();
        let code = optimize_decoders(&BlockCode::deterministic(1, 2, 1, &[0, 1], &ch).unwrap(), &ch, 10).unwrap();
        let reps = spectrum_bound_sweep(&code, &ch, &[0.1], 20, 7).unwrap();
        assert!(reps.iter().all(|r| r.pass));
        // huge η makes the slack term dominate
        let q = SpectrumTestLaws::code_induced(&code, &ch).unwrap();
        let r = check_spectrum_bound(&code, &ch, &q, 50.0, "induced").unwrap();
        assert!(r.pass);
    }

    #[test]
    fn spectrum_laws_dimension_check() {
        let ch = bsc_pair();
        let code = BlockCode::deterministic(1, 2, 1, &[0, 1], &ch).unwrap();
        let mut q = SpectrumTestLaws::code_induced(&code, &ch).unwrap();
        q.y.push(0.0);
        assert!(check_spectrum_bound(&code, &ch, &q, 0.1, "bad").is_err());
    }

    #[test]
    fn code_document_round_trip() {
        let ch = bsc_pair();
        let text = r#"{"n":2,"K":2,"L":1,"encoder":[[0,1],[[[1,1],0.5],[[1,0],0.5]]]}"#;
        let code = parse_code_spec(text, &ch).unwrap();
        assert_eq!(code.encoder[0], vec![(1, 1.0)]);
        assert_eq!(code.encoder[1], vec![(3, 0.5), (2, 0.5)]);
        let again = parse_code_spec(&code.to_spec_json(&ch), &ch).unwrap();
        assert_eq!(again, code);
        assert!(parse_code_spec(r#"{"n":2,"K":2,"L":1,"encoder":[[0,2],[1,1]]}"#, &ch).is_err());
    }

    #[test]
    fn encoder_enumeration_count() {
        assert_eq!(all_deterministic_encoders(2, 2, 2, 2).unwrap().count(), 256);
        let first: Vec<Vec<usize>> = all_deterministic_encoders(1, 1, 2, 2).unwrap().collect();
        assert_eq!(first, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }
}
