//! Maximization over the probability simplex: exponentiated-gradient
//! ascent with backtracking, deterministic low-discrepancy starts, and a
//! composition lattice for exhaustive enumeration.

/// Objective on a simplex. `value_grad` fills `grad` (same length as `x`)
/// and returns the value; coordinates where `x` is 0 are never moved.
pub trait SimplexObjective {
    fn value(&self, x: &[f64]) -> f64;
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct AscentConfig {
    pub max_iters: usize,
    /// Stop once accepted steps improve by less than this several times in a row.
    pub tol: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            max_iters: 400,
            tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

const PATIENCE: usize = 4;
const MAX_BACKTRACK: usize = 40;

/// Multiplicative-weights ascent. Every accepted step is non-decreasing, so
/// the returned value is at least `f(x0)`.
pub fn ascend<O: SimplexObjective + ?Sized>(obj: &O, x0: &[f64], cfg: &AscentConfig) -> AscentResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = obj.value_grad(&x, &mut grad);
    if !value.is_finite() {
        return AscentResult {
            x,
            value,
            iterations: 0,
        };
    }
    let mut step = initial_step(&x, &grad);
    let mut trial = vec![0.0; n];
    let mut quiet = 0;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let gmax = x
            .iter()
            .zip(&grad)
            .filter(|(xi, g)| **xi > 0.0 && g.is_finite())
            .map(|(_, g)| *g)
            .fold(f64::NEG_INFINITY, f64::max);
        if !gmax.is_finite() {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACK {
            let mut total = 0.0;
            for i in 0..n {
                trial[i] = if x[i] > 0.0 {
                    let g = if grad[i].is_finite() { grad[i] } else { f64::NEG_INFINITY };
                    x[i] * (step * (g - gmax)).exp()
                } else {
                    0.0
                };
                total += trial[i];
            }
            trial.iter_mut().for_each(|t| *t /= total);
            let v = obj.value(&trial);
            if v >= value && v.is_finite() {
                let gain = v - value;
                std::mem::swap(&mut x, &mut trial);
                value = obj.value_grad(&x, &mut grad);
                step *= 1.5;
                accepted = true;
                if gain <= cfg.tol * (1.0 + value.abs()) {
                    quiet += 1;
                } else {
                    quiet = 0;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || quiet >= PATIENCE {
            break;
        }
    }
    AscentResult {
        x,
        value,
        iterations,
    }
}

fn initial_step(x: &[f64], grad: &[f64]) -> f64 {
    let active: Vec<f64> = x
        .iter()
        .zip(grad)
        .filter(|(xi, g)| **xi > 0.0 && g.is_finite())
        .map(|(_, g)| *g)
        .collect();
    let lo = active.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = active.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    if spread.is_finite() && spread > 1e-12 {
        1.0 / spread
    } else {
        1.0
    }
}

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Point `index` of a Halton sequence mapped to the simplex of dimension
/// `dim` by normalizing `−ln u` coordinates (a uniform draw on the simplex
/// when `u` is uniform). Dimensions beyond the prime table wrap with a
/// scrambled offset.
pub fn halton_simplex_point(index: u64, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()] as u64;
            let shift = (d / PRIMES.len()) as u64 * 7919;
            let u = radical_inverse(index + 1 + shift, base);
            -(u.clamp(1e-12, 1.0 - 1e-12)).ln()
        })
        .collect();
    let t: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= t);
    v
}

/// Deterministic start set: `count` Halton points beginning at an offset
/// derived from `seed`, restricted to the `allowed` coordinates.
pub fn low_discrepancy_starts(seed: u64, count: usize, allowed: &[bool]) -> Vec<Vec<f64>> {
    let dim = allowed.len();
    let offset = seed.wrapping_mul(1_000_003) % (1 << 40);
    (0..count as u64)
        .map(|k| {
            let mut p = halton_simplex_point(offset + k, dim);
            restrict(&mut p, allowed);
            p
        })
        .collect()
}

/// Zeroes coordinates that are not allowed and renormalizes.
pub fn restrict(p: &mut [f64], allowed: &[bool]) {
    for (x, &ok) in p.iter_mut().zip(allowed) {
        if !ok {
            *x = 0.0;
        }
    }
    let t: f64 = p.iter().sum();
    if t > 0.0 {
        p.iter_mut().for_each(|x| *x /= t);
    }
}

/// Mixture `(1−eps)·p + eps·uniform` over the allowed coordinates.
pub fn smooth(p: &[f64], eps: f64, allowed: &[bool]) -> Vec<f64> {
    let k = allowed.iter().filter(|&&a| a).count().max(1) as f64;
    let mut out: Vec<f64> = p
        .iter()
        .zip(allowed)
        .map(|(&x, &ok)| if ok { (1.0 - eps) * x + eps / k } else { 0.0 })
        .collect();
    restrict(&mut out, allowed);
    out
}

/// Number of points `k/m` on the simplex with `dim` coordinates.
pub fn lattice_size(dim: usize, m: usize) -> u128 {
    // C(m + dim − 1, dim − 1)
    let (n, k) = ((m + dim - 1) as u128, (dim - 1).min(m) as u128);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// Largest resolution whose lattice has at most `cap` points (at least 1).
pub fn lattice_resolution(dim: usize, cap: u128) -> usize {
    let mut m = 1;
    while lattice_size(dim, m + 1) <= cap {
        m += 1;
    }
    m
}

/// Visits every composition of `m` into `dim` nonnegative parts, passed as
/// probabilities `part/m`, in lexicographic order.
pub fn for_each_lattice_point(dim: usize, m: usize, mut visit: impl FnMut(&[f64])) {
    let mut parts = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    fn rec(
        i: usize,
        left: usize,
        m: usize,
        parts: &mut [usize],
        point: &mut [f64],
        visit: &mut dyn FnMut(&[f64]),
    ) {
        let dim = parts.len();
        if i == dim - 1 {
            parts[i] = left;
            for (p, &c) in point.iter_mut().zip(parts.iter()) {
                *p = c as f64 / m as f64;
            }
            visit(point);
            return;
        }
        for c in (0..=left).rev() {
            parts[i] = c;
            rec(i + 1, left - c, m, parts, point, visit);
        }
    }
    rec(0, m, m, &mut parts, &mut point, &mut visit);
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic(Vec<f64>);

    impl SimplexObjective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            -x.iter().zip(&self.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        }
        fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            for i in 0..x.len() {
                g[i] = -2.0 * (x[i] - self.0[i]);
            }
            self.value(x)
        }
    }

    #[test]
    fn ascent_finds_interior_target() {
        let obj = Quadratic(vec![0.2, 0.3, 0.5]);
        let r = ascend(&obj, &[1.0 / 3.0; 3], &AscentConfig { max_iters: 2000, tol: 0.0 });
        for (a, b) in r.x.iter().zip(&obj.0) {
            assert!((a - b).abs() < 1e-5, "{:?}", r.x);
        }
    }

    #[test]
    fn ascent_never_decreases() {
        let obj = Quadratic(vec![0.9, 0.1, 0.0]);
        let x0 = [0.1, 0.1, 0.8];
        let r = ascend(&obj, &x0, &AscentConfig::default());
        assert!(r.value >= obj.value(&x0));
    }

    #[test]
    fn lattice_counts_match_enumeration() {
        for (dim, m) in [(3, 4), (4, 5), (6, 3)] {
            let mut n = 0u128;
            for_each_lattice_point(dim, m, |p| {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                n += 1;
            });
            assert_eq!(n, lattice_size(dim, m));
        }
        assert_eq!(lattice_size(24, 6), 475_020);
        assert_eq!(lattice_resolution(24, 500_000), 6);
    }

    #[test]
    fn halton_points_lie_on_simplex() {
        for k in 0..20 {
            let p = halton_simplex_point(k, 24);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x > 0.0));
        }
        assert_ne!(halton_simplex_point(1, 4), halton_simplex_point(2, 4));
    }
}
