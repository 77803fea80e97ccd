//! Shifted orthonormal Legendre polynomials on `[0, 1]` and Gauss-Legendre rules.
//!
//! The basis satisfies `∫₀¹ P_i P_j = δ_ij`, `deg P_j = j` and `P_j(1) > 0`, so
//! `P_0 ≡ 1` and `P_1(x) = √3 (2x − 1)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{ElimError, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;

/// Recurrence coefficient `a_j = j / √(4j² − 1)` of `t P_j = a_{j+1} P_{j+1} + a_j P_{j−1}`,
/// with `t = 2x − 1`.
#[inline]
fn recurrence_coeff(j: usize) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let j = j as f64;
    j / (4.0 * j * j - 1.0).sqrt()
}

/// `ξ_i = (2√(4i² − 1))⁻¹`, the off-diagonal entries of the integration matrix.
#[inline]
pub fn xi(i: usize) -> f64 {
    debug_assert!(i >= 1);
    let i = i as f64;
    0.5 / (4.0 * i * i - 1.0).sqrt()
}

/// Evaluates `P_j(x)` via the orthonormal three-term recurrence.
pub fn legendre_eval(j: usize, x: f64) -> f64 {
    let t = 2.0 * x - 1.0;
    let mut prev = 0.0;
    let mut cur = 1.0;
    for n in 0..j {
        let next = (t * cur - recurrence_coeff(n) * prev) / recurrence_coeff(n + 1);
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[n] = P_n(x)` for every `n < out.len()`.
pub fn legendre_eval_upto(x: f64, out: &mut [f64]) {
    let t = 2.0 * x - 1.0;
    let mut prev = 0.0;
    let mut cur = 1.0;
    for (n, slot) in out.iter_mut().enumerate() {
        *slot = cur;
        let next = (t * cur - recurrence_coeff(n) * prev) / recurrence_coeff(n + 1);
        prev = cur;
        cur = next;
    }
}

/// Returns `∫₀^c P_j(x) dx`.
///
/// Uses `∫₀^c P_0 = ½ P_0(c) + ξ₁ P_1(c)` and, for `j ≥ 1`,
/// `∫₀^c P_j = ξ_{j+1} P_{j+1}(c) − ξ_j P_{j−1}(c)`.
pub fn legendre_integral(j: usize, c: f64) -> f64 {
    if j == 0 {
        return c;
    }
    let mut vals = vec![0.0; j + 2];
    legendre_eval_upto(c, &mut vals);
    xi(j + 1) * vals[j + 1] - xi(j) * vals[j - 1]
}

/// An `n`-point Gauss-Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Abscissae, strictly increasing in `(0, 1)`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Positive weights summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Classical Legendre `L_n(t)` and its derivative on `[−1, 1]`.
fn classical_legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for m in 1..n {
        let m = m as f64;
        let next = ((2.0 * m + 1.0) * t * cur - m * prev) / (m + 1.0);
        prev = cur;
        cur = next;
    }
    let n = n as f64;
    let deriv = n * (t * cur - prev) / (t * t - 1.0);
    (cur, deriv)
}

fn compute_gauss_rule(n: usize) -> Result<QuadratureRule> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots in (0, 1] of L_n on [−1, 1], largest first; the rest by mirror symmetry.
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITERS {
            let (val, d) = classical_legendre_with_derivative(n, t);
            let delta = val / d;
            t -= delta;
            if delta.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(ElimError::QuadratureNonConvergence { points: n, root: i });
        }
        if n % 2 == 1 && i == n / 2 {
            t = 0.0;
        }
        let deriv = classical_legendre_with_derivative(n, t).1;
        let w = 1.0 / ((1.0 - t * t) * deriv * deriv);
        let hi = n - 1 - i;
        nodes[hi] = 0.5 + 0.5 * t;
        nodes[i] = 0.5 - 0.5 * t;
        weights[hi] = w;
        weights[i] = w;
    }
    Ok(QuadratureRule { nodes, weights })
}

fn rule_cache() -> &'static Mutex<HashMap<usize, Arc<QuadratureRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Returns the (cached) `n`-point Gauss-Legendre rule on `[0, 1]`.
pub fn gauss_rule(n: usize) -> Result<Arc<QuadratureRule>> {
    if n == 0 {
        return Err(ElimError::InvalidArgument(
            "quadrature rule needs at least one point".into(),
        ));
    }
    if let Some(rule) = rule_cache().lock().unwrap().get(&n) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(compute_gauss_rule(n)?);
    let mut cache = rule_cache().lock().unwrap();
    Ok(Arc::clone(cache.entry(n).or_insert(rule)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite 20-point Gauss on 64 panels; independent of the rule under test
    /// only through the panel count, which is fixed.
    fn composite(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let base = compute_gauss_rule(20).unwrap();
        let panels = 64;
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * width;
                width * base.integrate(|x| f(lo + width * x))
            })
            .sum()
    }

    /// Orthonormal basis by Gram-Schmidt on monomials in exact power-sum inner
    /// products `∫₀¹ x^{a+b} = 1/(a+b+1)`, stored as coefficient vectors.
    fn gram_schmidt_basis(deg: usize) -> Vec<Vec<f64>> {
        let inner = |p: &[f64], q: &[f64]| -> f64 {
            let mut acc = 0.0;
            for (a, pa) in p.iter().enumerate() {
                for (b, qb) in q.iter().enumerate() {
                    acc += pa * qb / (a + b + 1) as f64;
                }
            }
            acc
        };
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for d in 0..=deg {
            let mut v = vec![0.0; deg + 1];
            v[d] = 1.0;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for e in &basis {
                    let proj = inner(&v, e);
                    for (vi, ei) in v.iter_mut().zip(e) {
                        *vi -= proj * ei;
                    }
                }
            }
            let norm = inner(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
        basis
    }

    fn horner(coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    #[test]
    fn low_order_values() {
        assert_eq!(legendre_eval(0, 0.3), 1.0);
        assert!((legendre_eval(1, 1.0) - 3f64.sqrt()).abs() < 1e-15);
        assert!((legendre_eval(1, 0.25) - 3f64.sqrt() * (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn degree_five_matches_gram_schmidt() {
        let basis = gram_schmidt_basis(5);
        let oracle = horner(&basis[5], 0.37);
        // P_5(1) > 0 fixes the sign of the oracle.
        let sign = horner(&basis[5], 1.0).signum();
        let got = legendre_eval(5, 0.37);
        assert!(
            (got - sign * oracle).abs() < 1e-10,
            "{got} vs {}",
            sign * oracle
        );
        // frozen from exact rational Gram-Schmidt (sympy)
        assert!((got - (-1.137_823_135_910_293_3)).abs() < 1e-13, "{got}");
    }

    #[test]
    fn eval_upto_agrees_with_single_eval() {
        let mut vals = [0.0; 12];
        legendre_eval_upto(0.71, &mut vals);
        for (j, v) in vals.iter().enumerate() {
            assert!((v - legendre_eval(j, 0.71)).abs() < 1e-14);
        }
    }

    #[test]
    fn integral_closed_form() {
        for c in [0.0, 0.13, 0.5, 0.92, 1.0] {
            assert_eq!(legendre_integral(0, c), c);
        }
        for j in 1..15 {
            assert!(legendre_integral(j, 1.0).abs() < 1e-14, "j={j}");
            assert!(legendre_integral(j, 0.0).abs() < 1e-14, "j={j}");
        }
    }

    #[test]
    fn integral_matches_quadrature_oracle() {
        let oracle = composite(|x| legendre_eval(2, x), 0.0, 0.4);
        let got = legendre_integral(2, 0.4);
        assert!((got - oracle).abs() < 1e-13, "{got} vs {oracle}");
        // frozen: ∫₀^0.4 √5(6x² − 6x + 1) dx = √5 · 0.048
        assert!((got - 5f64.sqrt() * 0.048).abs() < 1e-14);
        for j in 0..10 {
            for c in [0.1, 0.33, 0.77] {
                let o = composite(|x| legendre_eval(j, x), 0.0, c);
                assert!((legendre_integral(j, c) - o).abs() < 1e-13, "j={j} c={c}");
            }
        }
    }

    #[test]
    fn small_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(r1.nodes(), &[0.5]);
        assert!((r1.weights()[0] - 1.0).abs() < 1e-15);
        let r2 = gauss_rule(2).unwrap();
        let d = 3f64.sqrt() / 6.0;
        assert!((r2.nodes()[0] - (0.5 - d)).abs() < 1e-15);
        assert!((r2.nodes()[1] - (0.5 + d)).abs() < 1e-15);
        assert!((r2.weights()[0] - 0.5).abs() < 1e-15);
        assert!((r2.weights()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn five_point_rule_matches_bisection_oracle() {
        // Bisection on sign changes of P_5 followed by Newton polishing.
        let f = |x: f64| legendre_eval(5, x);
        let grid = 2001; // odd, so no grid point lands on the root at 0.5
        let mut roots = Vec::new();
        for i in 0..grid {
            let (mut a, mut b) = (i as f64 / grid as f64, (i + 1) as f64 / grid as f64);
            if f(a) * f(b) < 0.0 {
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if f(a) * f(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                let mut x = 0.5 * (a + b);
                for _ in 0..3 {
                    let dfx = (f(x + 1e-7) - f(x - 1e-7)) / 2e-7;
                    x -= f(x) / dfx;
                }
                roots.push(x);
            }
        }
        assert_eq!(roots.len(), 5);
        let rule = gauss_rule(5).unwrap();
        for (r, c) in roots.iter().zip(rule.nodes()) {
            assert!((r - c).abs() < 1e-14, "{r} vs {c}");
        }
        // weights from exactness on the Lagrange basis: w_i = ∫ ℓ_i
        for i in 0..5 {
            let li = |x: f64| {
                (0..5)
                    .filter(|&m| m != i)
                    .map(|m| (x - roots[m]) / (roots[i] - roots[m]))
                    .product::<f64>()
            };
            let w = composite(li, 0.0, 1.0);
            assert!((w - rule.weights()[i]).abs() < 1e-14, "i={i}");
        }
    }

    #[test]
    fn rule_invariants_up_to_64() {
        for n in 1..=64 {
            let rule = gauss_rule(n).unwrap();
            assert_eq!(rule.len(), n);
            let total: f64 = rule.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "n={n} total={total}");
            for w in rule.nodes().windows(2) {
                assert!(w[0] < w[1]);
            }
            for i in 0..n {
                let c = rule.nodes()[i];
                assert!(c > 0.0 && c < 1.0);
                assert!(rule.weights()[i] > 0.0);
                assert!((c + rule.nodes()[n - 1 - i] - 1.0).abs() < 1e-14);
                assert!(
                    legendre_eval(n, c).abs() <= 1e-13 * (n as f64).max(1.0),
                    "n={n}"
                );
            }
        }
    }

    #[test]
    fn rule_exact_for_monomials() {
        for n in 1..=20 {
            let rule = gauss_rule(n).unwrap();
            for d in 0..2 * n {
                let exact = 1.0 / (d + 1) as f64;
                let got = rule.integrate(|x| x.powi(d as i32));
                assert!(((got - exact) / exact).abs() < 1e-12, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn orthonormality() {
        let rule = gauss_rule(12).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                let v = rule.integrate(|x| legendre_eval(i, x) * legendre_eval(j, x));
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-12, "i={i} j={j} v={v}");
            }
        }
    }

    #[test]
    fn rejects_zero_points() {
        assert!(gauss_rule(0).is_err());
    }

    #[test]
    fn cached_rule_is_shared() {
        let a = gauss_rule(7).unwrap();
        let b = gauss_rule(7).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn antiderivative_matches_finite_difference(j in 0usize..12, x in 0.01f64..0.99) {
                let step = 1e-6;
                let fd = (legendre_integral(j, x + step) - legendre_integral(j, x - step)) / (2.0 * step);
                prop_assert!((fd - legendre_eval(j, x)).abs() < 1e-6);
            }
        }
    }
}
