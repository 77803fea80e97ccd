//! Fixed-point solution of one HBVM / ELIM step in the space of the `s`
//! coefficient vectors `γ̂_j`.

use nalgebra::{DMatrix, DVector};

use super::{MethodConfig, StepWorkspace};
use crate::error::{ElimError, Result};
use crate::linalg::solve_conditioned;
use crate::polybasis::{gauss_rule, legendre_integral};
use crate::problems::{apply_j, HamiltonianProblem, InvariantSet};
use crate::tableau::{basis_matrix, integral_matrix};
use crate::State;

/// Node data for one quadrature: `P_j(c_ℓ)` pre-multiplied by `b_ℓ`, and `∫₀^{c_ℓ} P_j`.
#[derive(Debug, Clone)]
struct NodeTable {
    weighted_basis: DMatrix<f64>,
    integrals: DMatrix<f64>,
}

impl NodeTable {
    fn new(points: usize, s: usize) -> Result<Self> {
        let rule = gauss_rule(points)?;
        let mut weighted_basis = basis_matrix(rule.nodes(), s);
        for (mut row, w) in weighted_basis.row_iter_mut().zip(rule.weights()) {
            row *= *w;
        }
        Ok(Self {
            weighted_basis,
            integrals: integral_matrix(rule.nodes(), s),
        })
    }

    fn points(&self) -> usize {
        self.integrals.nrows()
    }
}

/// Precomputed quadrature tables for a fixed `(r, k, s)`.
#[derive(Debug, Clone)]
pub struct StepKernel {
    s: usize,
    hamiltonian_nodes: NodeTable,
    invariant_nodes: NodeTable,
    /// `b_ℓ P_j(c_ℓ)` for `j = s, …, k−1`, present when `r = k`.
    tail_basis: Option<DMatrix<f64>>,
}

impl StepKernel {
    pub fn new(config: &MethodConfig) -> Result<Self> {
        let hamiltonian_nodes = NodeTable::new(config.k, config.s)?;
        let shared = config.r == config.k;
        let invariant_nodes = if shared {
            hamiltonian_nodes.clone()
        } else {
            NodeTable::new(config.r, config.s)?
        };
        let tail_basis = shared.then(|| {
            let rule = gauss_rule(config.k).expect("rule built above");
            let full = basis_matrix(rule.nodes(), config.k);
            let mut tail = full.columns(config.s, config.k - config.s).into_owned();
            for (mut row, w) in tail.row_iter_mut().zip(rule.weights()) {
                row *= *w;
            }
            tail
        });
        Ok(Self {
            s: config.s,
            hamiltonian_nodes,
            invariant_nodes,
            tail_basis,
        })
    }
}

/// `h^{2(s−1−j)}` for the corrected indices `j = s−ν, …, s−1`.
///
/// These powers scale the columns of `Γ̂` and are unwound in `η̂_j`; both
/// sites go through this function.
pub fn correction_powers(s: usize, nu: usize, h: f64) -> Vec<f64> {
    (s - nu..s)
        .map(|j| h.powi(2 * (s - 1 - j) as i32))
        .collect()
}

fn eta_from_alpha(s: usize, alpha: &DVector<f64>, powers: &[f64]) -> Vec<f64> {
    let nu = alpha.len();
    let mut eta = vec![1.0; s];
    for i in 0..nu {
        eta[s - nu + i] = 1.0 - powers[i] * alpha[i];
    }
    eta
}

/// `u(ch) = y₀ + h Σ_j (∫₀^c P_j) η̂_j γ̂_j`.
pub fn stage_polynomial(y0: &State, h: f64, gamma: &[State], eta: &[f64], c: f64) -> State {
    assert_eq!(gamma.len(), eta.len());
    let mut u = y0.clone();
    for (j, (g, e)) in gamma.iter().zip(eta).enumerate() {
        let w = h * e * legendre_integral(j, c);
        if w != 0.0 {
            u.axpy(w, g, 1.0);
        }
    }
    u
}

/// Stage values `u_ℓ` at every node of `table`, given `hη̂_jγ̂_j` in `scaled`.
fn stage_values<'a>(
    table: &'a NodeTable,
    y0: &'a State,
    scaled: &'a [State],
) -> impl Iterator<Item = State> + 'a {
    (0..table.points()).map(move |l| {
        let mut u = y0.clone();
        for (j, g) in scaled.iter().enumerate() {
            u.axpy(table.integrals[(l, j)], g, 1.0);
        }
        u
    })
}

/// Max norm that propagates NaN.
fn max_abs(v: &State) -> f64 {
    v.iter().fold(0.0, |acc: f64, x| {
        if x.is_nan() || acc.is_nan() {
            f64::NAN
        } else {
            acc.max(x.abs())
        }
    })
}

/// Safety factor on the round-off estimate of `α̂`.
const ALPHA_NOISE_FACTOR: f64 = 64.0;
/// An `α̂` update counts as stalled once it shrinks by less than this factor.
const ALPHA_STALL_RATIO: f64 = 0.5;
/// Relative `γ̂` change below which `α̂` may be frozen.
const ALPHA_FREEZE_GAMMA_TOL: f64 = 1e-9;

/// Round-off level of `α̂ = Γ̂⁻¹ b̂`: `b̂` is a cancelling sum of products
/// `φ̂_jᵀγ̂_j`, so its absolute error scales with the sum of their magnitudes.
fn alpha_noise(phi: &[DMatrix<f64>], gamma: &[State], inverse_norm1: f64) -> f64 {
    let nu = phi.first().map_or(0, |m| m.ncols());
    let magnitude = (0..nu)
        .map(|i| {
            phi.iter()
                .zip(gamma)
                .map(|(m, g)| m.column(i).abs().dot(&g.abs()))
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    ALPHA_NOISE_FACTOR * f64::EPSILON * magnitude * inverse_norm1
}

/// Solves one step. `invariants` with `ν ≥ 1` switches on the ELIM correction.
///
/// Each sweep rebuilds the stage values from the current `(γ̂, η̂)`, updates
/// `γ̂` by `k`-point quadrature of `J∇H`, `φ̂` by `r`-point quadrature of `∇L`,
/// and re-solves `Γ̂α̂ = b̂`. Once `γ̂` is nearly settled and two consecutive
/// `α̂` updates have stopped contracting at its round-off level, `α̂` is held fixed and the remaining sweeps only
/// settle `γ̂`.
pub(crate) fn solve_step(
    kernel: &StepKernel,
    problem: &HamiltonianProblem,
    invariants: Option<&InvariantSet>,
    config: &MethodConfig,
    y0: &State,
    h: f64,
    warm: Option<&StepWorkspace>,
) -> Result<(State, StepWorkspace)> {
    let s = kernel.s;
    let dim = problem.dim();
    let nu = invariants.map_or(0, InvariantSet::nu);
    config.validate(nu)?;
    if y0.len() != dim {
        return Err(ElimError::InvalidArgument(format!(
            "state has length {}, problem expects {dim}",
            y0.len()
        )));
    }
    let powers = correction_powers(s, nu, h);
    let tol = config.fp_tolerance;

    let mut gamma = vec![State::zeros(dim); s];
    let mut alpha = DVector::zeros(nu);
    let cold = match warm.filter(|_| config.warm_start) {
        Some(ws) if ws.gamma.len() == s && ws.alpha.len() == nu => {
            gamma.clone_from(&ws.gamma);
            alpha.copy_from(&ws.alpha);
            false
        }
        _ => true,
    };
    let mut eta = eta_from_alpha(s, &alpha, &powers);

    let mut phi = vec![DMatrix::zeros(dim, nu); s];
    let mut gamma_matrix = DMatrix::zeros(nu, nu);
    let mut rhs = DVector::zeros(nu);
    let mut fallback = false;
    let mut fallback_sweeps = 0;
    let mut alpha_frozen = false;
    let mut quiet_alpha_updates = 0;
    let mut previous_alpha_change = f64::INFINITY;
    let mut residual = f64::INFINITY;

    for sweep in 1..=config.fp_max_iters {
        let scaled: Vec<State> = gamma.iter().zip(&eta).map(|(g, e)| g * (h * e)).collect();

        let mut next = vec![State::zeros(dim); s];
        let table = &kernel.hamiltonian_nodes;
        let stages: Vec<State> = stage_values(table, y0, &scaled).collect();
        let forces: Vec<State> = stages
            .iter()
            .map(|u| apply_j(&problem.gradient(u)))
            .collect();
        for (l, f) in forces.iter().enumerate() {
            for (j, g) in next.iter_mut().enumerate() {
                g.axpy(table.weighted_basis[(l, j)], f, 1.0);
            }
        }

        let gamma_change = next
            .iter()
            .zip(&gamma)
            .map(|(a, b)| max_abs(&(a - b)))
            .fold(
                0.0,
                |acc: f64, x| if x.is_nan() { f64::NAN } else { acc.max(x) },
            );
        let gamma_scale = 1.0 + max_abs(&next[0]);

        let mut next_alpha = alpha.clone();
        if let Some(inv) = invariants {
            let table = &kernel.invariant_nodes;
            phi.iter_mut().for_each(|m| m.fill(0.0));
            rhs.fill(0.0);
            if let Some(tail) = &kernel.tail_basis {
                // Same nodes for both quadratures: by discrete orthonormality
                // Σ_{j<k} φ̂_jᵀγ̂_j = Σ_ℓ b_ℓ ∇L(u_ℓ)ᵀJ∇H(u_ℓ) = 0, so b̂ equals
                // minus the tail, which carries no cancellation.
                let grads: Vec<DMatrix<f64>> = stages.iter().map(|u| inv.jacobian_t(u)).collect();
                for (l, grad) in grads.iter().enumerate() {
                    for (j, m) in phi.iter_mut().enumerate() {
                        *m += grad * table.weighted_basis[(l, j)];
                    }
                }
                for t in 0..tail.ncols() {
                    let mut phi_t = DMatrix::zeros(dim, nu);
                    let mut gamma_t = State::zeros(dim);
                    for (l, (grad, f)) in grads.iter().zip(&forces).enumerate() {
                        phi_t += grad * tail[(l, t)];
                        gamma_t.axpy(tail[(l, t)], f, 1.0);
                    }
                    rhs -= phi_t.tr_mul(&gamma_t);
                }
            } else {
                for (l, u) in stage_values(table, y0, &scaled).enumerate() {
                    let grad = inv.jacobian_t(&u);
                    for (j, m) in phi.iter_mut().enumerate() {
                        *m += &grad * table.weighted_basis[(l, j)];
                    }
                }
                for (m, g) in phi.iter().zip(&next) {
                    rhs += m.tr_mul(g);
                }
            }
            for i in 0..nu {
                let j = s - nu + i;
                gamma_matrix.set_column(i, &(phi[j].tr_mul(&next[j]) * powers[i]));
            }
            // From a zero guess the first sweep sees u ≡ y₀, where Γ̂ vanishes
            // identically; only the γ̂ update is meaningful.
            if !alpha_frozen && !(cold && sweep == 1) {
                let mut noise = 0.0;
                match solve_conditioned(&gamma_matrix, &rhs) {
                    Some(sol) if sol.condition <= config.gamma_fallback_threshold => {
                        noise = alpha_noise(&phi, &next, sol.inverse_norm1);
                        next_alpha = sol.solution;
                        fallback = false;
                    }
                    _ => {
                        next_alpha.fill(0.0);
                        fallback = true;
                        fallback_sweeps += 1;
                    }
                }
                let change = (&next_alpha - &alpha).amax();
                let stalled = change >= ALPHA_STALL_RATIO * previous_alpha_change;
                let gamma_settled = gamma_change <= ALPHA_FREEZE_GAMMA_TOL * gamma_scale;
                previous_alpha_change = change;
                if change <= tol * (1.0 + next_alpha.amax())
                    || (change <= noise && stalled && gamma_settled)
                {
                    quiet_alpha_updates += 1;
                } else {
                    quiet_alpha_updates = 0;
                }
                if quiet_alpha_updates >= 2 && change > tol * (1.0 + next_alpha.amax()) {
                    alpha_frozen = true;
                }
            }
        }

        let alpha_change = (&next_alpha - &alpha).amax();
        let alpha_scale = 1.0 + next_alpha.amax();
        residual = (gamma_change / gamma_scale).max(alpha_change / alpha_scale);
        if !residual.is_finite() || next_alpha.iter().any(|a| !a.is_finite()) {
            return Err(ElimError::NonConvergence {
                iterations: sweep,
                residual: f64::NAN,
            });
        }

        gamma = next;
        alpha = next_alpha;
        eta = eta_from_alpha(s, &alpha, &powers);

        let alpha_settled = alpha_frozen || alpha_change <= tol * alpha_scale;
        if gamma_change <= tol * gamma_scale && alpha_settled {
            let mut y1 = y0.clone();
            y1.axpy(h, &gamma[0], 1.0);
            let ws = StepWorkspace {
                gamma,
                phi,
                eta,
                alpha,
                gamma_matrix,
                rhs,
                iterations: sweep,
                gamma_fallback_used: fallback,
                fallback_sweeps,
                residual,
            };
            return Ok((y1, ws));
        }
    }
    Err(ElimError::NonConvergence {
        iterations: config.fp_max_iters,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_polynomial_endpoints() {
        let y0 = State::from_vec(vec![0.3, -1.2]);
        let gamma = vec![
            State::from_vec(vec![1.0, 2.0]),
            State::from_vec(vec![-0.5, 0.7]),
            State::from_vec(vec![0.1, 0.1]),
        ];
        let eta = [1.0, 0.8, 1.3];
        assert_eq!(stage_polynomial(&y0, 0.2, &gamma, &eta, 0.0), y0);
        let end = stage_polynomial(&y0, 0.2, &gamma, &eta, 1.0);
        let expected = &y0 + &gamma[0] * 0.2;
        assert!((end - expected).amax() < 1e-15);
    }

    #[test]
    fn stage_polynomial_midpoint() {
        let y0 = State::zeros(2);
        let gamma = vec![
            State::from_vec(vec![1.0, 0.0]),
            State::from_vec(vec![0.0, 1.0]),
        ];
        let u = stage_polynomial(&y0, 1.0, &gamma, &[1.0, 1.0], 0.5);
        // ∫₀^{1/2} √3(2x − 1) dx = −√3/4, cross-checked by 2-point Gauss on [0, 1/2]
        let rule = gauss_rule(2).unwrap();
        let oracle = 0.5 * rule.integrate(|x| 3f64.sqrt() * (2.0 * (0.5 * x) - 1.0));
        assert!((oracle + 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert!((u[0] - 0.5).abs() < 1e-15);
        assert!((u[1] - oracle).abs() < 1e-15);
    }

    #[test]
    fn powers_are_descending_even() {
        let p = correction_powers(3, 2, 0.5);
        assert_eq!(p, vec![0.25, 1.0]);
        assert_eq!(correction_powers(4, 1, 0.3), vec![1.0]);
        assert!(correction_powers(3, 0, 0.1).is_empty());
    }
}
