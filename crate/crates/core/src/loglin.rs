//! Per-atom functions of the form
//!
//! `v(a) = c(a) + Σ_M e_M · ln q_M(M(a))`
//!
//! where `q_M` is the marginal of the joint `q` on a subset `M` of the
//! U, X, Y, Z axes. The tilted weight and every information/divergence
//! combination used by the optimizers have this shape, which gives one
//! place for values, expectations, tilted moments and their gradients.

use crate::prob::{Layout, Mask};

#[derive(Debug, Clone)]
pub struct LogLinearForm {
    layout: Layout,
    /// Per-atom constant; `-inf` marks atoms excluded by a zero channel entry.
    constant: Vec<f64>,
    /// (marginal mask, coefficient), masks distinct.
    terms: Vec<(Mask, f64)>,
}

/// Ω(q) = ln Σ q·exp(λ v) together with its normalized tilted weights.
#[derive(Debug, Clone)]
pub struct Tilted {
    pub log_moment: f64,
    /// `q(a)·exp(λ v(a) − Ω)`, sums to 1 when the moment is finite.
    pub weights: Vec<f64>,
}

impl LogLinearForm {
    pub fn new(layout: Layout, constant: Vec<f64>, terms: &[(Mask, f64)]) -> Self {
        assert_eq!(constant.len(), layout.n_atoms());
        let mut merged: Vec<(Mask, f64)> = Vec::new();
        for &(m, e) in terms {
            match merged.iter_mut().find(|(mm, _)| *mm == m) {
                Some(slot) => slot.1 += e,
                None => merged.push((m, e)),
            }
        }
        merged.retain(|&(_, e)| e != 0.0);
        merged.sort_by_key(|&(m, _)| m);
        LogLinearForm {
            layout,
            constant,
            terms: merged,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn constant(&self) -> &[f64] {
        &self.constant
    }

    pub fn terms(&self) -> &[(Mask, f64)] {
        &self.terms
    }

    /// Atoms whose constant is finite, i.e. that can carry tilted mass.
    pub fn admissible(&self) -> Vec<bool> {
        self.constant.iter().map(|c| c.is_finite()).collect()
    }

    fn marginals(&self, q: &[f64]) -> Vec<Vec<f64>> {
        self.terms
            .iter()
            .map(|&(m, _)| self.layout.marginal(m, q))
            .collect()
    }

    fn value_with(&self, a: usize, margs: &[Vec<f64>]) -> f64 {
        let mut v = self.constant[a];
        for (t, &(m, e)) in self.terms.iter().enumerate() {
            v += e * margs[t][self.layout.project(m, a)].ln();
        }
        v
    }

    /// v(a) on the support of `q`; NaN off the support.
    pub fn atom_values(&self, q: &[f64]) -> Vec<f64> {
        let margs = self.marginals(q);
        (0..q.len())
            .map(|a| {
                if q[a] > 0.0 {
                    self.value_with(a, &margs)
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    /// Σ_a q(a)·v(a) over the support of `q`.
    pub fn expectation(&self, q: &[f64]) -> f64 {
        let margs = self.marginals(q);
        let mut s = 0.0;
        for (a, &qa) in q.iter().enumerate() {
            if qa > 0.0 {
                s += qa * self.value_with(a, &margs);
            }
        }
        s
    }

    /// Expectation and its gradient in the free coordinates q(b):
    /// `c(b) + Σ_M e_M (ln q_M(M(b)) + 1)`. Entries off the support are 0.
    pub fn expectation_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let margs = self.marginals(q);
        let shift: f64 = self.terms.iter().map(|&(_, e)| e).sum();
        let mut s = 0.0;
        for (a, &qa) in q.iter().enumerate() {
            if qa > 0.0 {
                let v = self.value_with(a, &margs);
                s += qa * v;
                grad[a] = v + shift;
            } else {
                grad[a] = 0.0;
            }
        }
        s
    }

    /// ln Σ_a q(a) exp(λ v(a)). Atoms with `v = −inf` contribute nothing.
    ///
    /// When λ·max|v| ≤ 1 the sum is formed as `ln_1p(Σ q·expm1(λ v))`, which
    /// keeps the value accurate as λ → 0; otherwise a max-shifted
    /// log-sum-exp is used.
    pub fn tilted(&self, q: &[f64], lambda: f64) -> Tilted {
        let values = self.atom_values(q);
        tilt(q, &values, lambda)
    }

    /// Tilted moment and its gradient:
    /// `∂Ω/∂q(b) = exp(λ v(b) − Ω) + λ Σ_M e_M S_M(M(b)) / q_M(M(b))`
    /// where `S_M` is the M-marginal of the tilted weights.
    pub fn tilted_grad(&self, q: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
        let margs = self.marginals(q);
        let values: Vec<f64> = (0..q.len())
            .map(|a| {
                if q[a] > 0.0 {
                    self.value_with(a, &margs)
                } else {
                    f64::NAN
                }
            })
            .collect();
        let t = tilt(q, &values, lambda);
        if !t.log_moment.is_finite() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return t.log_moment;
        }
        let slice_sums: Vec<Vec<f64>> = self
            .terms
            .iter()
            .map(|&(m, _)| self.layout.marginal(m, &t.weights))
            .collect();
        for (b, g) in grad.iter_mut().enumerate() {
            if q[b] <= 0.0 {
                *g = 0.0;
                continue;
            }
            let own = if values[b] == f64::NEG_INFINITY {
                0.0
            } else {
                (lambda * values[b] - t.log_moment).exp()
            };
            let mut cross = 0.0;
            for (k, &(m, e)) in self.terms.iter().enumerate() {
                let j = self.layout.project(m, b);
                cross += e * slice_sums[k][j] / margs[k][j];
            }
            *g = own + lambda * cross;
        }
        t.log_moment
    }

    /// Whether sup_q ln Σ q·exp(λ v) is infinite because mass can be
    /// squeezed into a cylinder set.
    ///
    /// Put mass ε on one admissible atom `a0` and keep the rest of `q` away
    /// from every atom sharing `a0`'s coordinates on the axis set `F`. Each
    /// marginal cell `M(a0)` with `M ⊇ F` then has mass ε while the others
    /// stay bounded away from 0, so the contribution of `a0` scales as
    /// `ε^{1 + λ Σ_{M⊇F} e_M}`. A negative exponent sends the moment to
    /// infinity. Axes of size 1 cannot be separated and are skipped.
    pub fn cylinder_blowup(&self, lambda: f64) -> bool {
        if lambda <= 0.0 || !self.constant.iter().any(|c| c.is_finite()) {
            return false;
        }
        let dims = self.layout.dims();
        for f in 1u8..16 {
            if (0..4).any(|ax| f & (1 << ax) != 0 && dims[ax] < 2) {
                continue;
            }
            let s: f64 = self
                .terms
                .iter()
                .filter(|&&(m, _)| m & f == f)
                .map(|&(_, e)| e)
                .sum();
            if 1.0 + lambda * s < 0.0 {
                return true;
            }
        }
        false
    }
}

/// Tilted log-moment of per-atom `values` under weights `q`.
pub fn tilt(q: &[f64], values: &[f64], lambda: f64) -> Tilted {
    let n = q.len();
    let mut weights = vec![0.0; n];
    let mut any = false;
    let mut max_abs: f64 = 0.0;
    let mut max_exp = f64::NEG_INFINITY;
    for a in 0..n {
        if q[a] > 0.0 {
            let v = values[a];
            if v == f64::NEG_INFINITY {
                continue;
            }
            if v.is_nan() || v == f64::INFINITY {
                return Tilted {
                    log_moment: f64::INFINITY,
                    weights,
                };
            }
            any = true;
            max_abs = max_abs.max(v.abs());
            max_exp = max_exp.max(lambda * v + q[a].ln());
        }
    }
    if !any {
        return Tilted {
            log_moment: f64::NEG_INFINITY,
            weights,
        };
    }
    let log_moment = if lambda * max_abs <= 1.0 {
        // Σq·e^{λv} = Σq + Σq·expm1(λv); Σq is 1 up to rounding
        let mut s = q.iter().sum::<f64>() - 1.0;
        for a in 0..n {
            if q[a] > 0.0 {
                let v = values[a];
                s += if v == f64::NEG_INFINITY {
                    -q[a]
                } else {
                    q[a] * (lambda * v).exp_m1()
                };
            }
        }
        s.ln_1p()
    } else {
        let mut s = 0.0;
        for a in 0..n {
            if q[a] > 0.0 && values[a] != f64::NEG_INFINITY {
                s += (lambda * values[a] + q[a].ln() - max_exp).exp();
            }
        }
        max_exp + s.ln()
    };
    for a in 0..n {
        if q[a] > 0.0 && values[a] != f64::NEG_INFINITY {
            weights[a] = (lambda * values[a] + q[a].ln() - log_moment).exp();
        }
    }
    Tilted {
        log_moment,
        weights,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{M_ALL, M_U, M_X, M_Y, M_Z};

    fn rand_q(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                0.05 + ((s >> 11) as f64) / ((1u64 << 53) as f64)
            })
            .collect();
        let t: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= t);
        v
    }

    fn form() -> LogLinearForm {
        let layout = Layout::new([2, 2, 2, 2]);
        let c: Vec<f64> = (0..16).map(|a| 0.1 * a as f64 - 0.7).collect();
        LogLinearForm::new(
            layout,
            c,
            &[
                (M_ALL, -0.8),
                (M_U | M_X | M_Z, 0.5),
                (M_U | M_Y, -0.3),
                (M_Z, 0.4),
                (M_Y, -0.2),
                (M_X, 0.0),
            ],
        )
    }

    fn numeric_grad(f: impl Fn(&[f64]) -> f64, q: &[f64], b: usize) -> f64 {
        let h = 1e-6;
        let mut qp = q.to_vec();
        qp[b] += h;
        let mut qm = q.to_vec();
        qm[b] -= h;
        (f(&qp) - f(&qm)) / (2.0 * h)
    }

    #[test]
    fn expectation_gradient_matches_finite_differences() {
        let f = form();
        let q = rand_q(3, 16);
        let mut g = vec![0.0; 16];
        f.expectation_grad(&q, &mut g);
        for b in 0..16 {
            let n = numeric_grad(|x| f.expectation(x), &q, b);
            assert!((g[b] - n).abs() < 1e-6, "atom {b}: {} vs {n}", g[b]);
        }
    }

    #[test]
    fn tilted_gradient_matches_finite_differences() {
        let f = form();
        let q = rand_q(7, 16);
        for lambda in [0.05, 0.7, 3.0] {
            let mut g = vec![0.0; 16];
            f.tilted_grad(&q, lambda, &mut g);
            for b in 0..16 {
                let n = numeric_grad(|x| f.tilted(x, lambda).log_moment, &q, b);
                assert!((g[b] - n).abs() < 1e-5, "λ={lambda} atom {b}: {} vs {n}", g[b]);
            }
        }
    }

    #[test]
    fn both_summation_paths_agree() {
        let q = rand_q(11, 16);
        let v: Vec<f64> = (0..16).map(|a| (a as f64 - 8.0) * 0.05).collect();
        // λ·max|v| = 0.4·... sits on the expm1 path; the shifted path is the oracle
        let lambda = 1.0;
        let fast = tilt(&q, &v, lambda).log_moment;
        let direct: f64 = q.iter().zip(&v).map(|(a, b)| a * (lambda * b).exp()).sum::<f64>().ln();
        assert!((fast - direct).abs() < 1e-14);
    }

    #[test]
    fn neg_infinite_atoms_carry_no_weight() {
        let q = vec![0.5, 0.5];
        let v = vec![f64::NEG_INFINITY, 0.0];
        let t = tilt(&q, &v, 2.0);
        assert!((t.log_moment - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(t.weights, vec![0.0, 1.0]);
    }

    #[test]
    fn cylinder_detects_full_joint_collapse() {
        let layout = Layout::new([3, 2, 2, 2]);
        let f = LogLinearForm::new(layout, vec![0.0; 24], &[(M_ALL, -2.0), (M_U, 0.5)]);
        assert!(!f.cylinder_blowup(0.4));
        assert!(f.cylinder_blowup(0.6));
    }
}
