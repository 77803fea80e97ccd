//! Small dense solves with a 1-norm condition estimate.

use nalgebra::{DMatrix, DVector};

/// Result of solving a small square system through LU with partial pivoting.
#[derive(Debug, Clone)]
pub struct ConditionedSolve {
    pub solution: DVector<f64>,
    /// `‖A⁻¹‖₁`, with the inverse taken from the LU factors.
    pub inverse_norm1: f64,
    /// `‖A‖₁ · ‖A⁻¹‖₁`.
    pub condition: f64,
}

pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `a x = b`. Returns `None` when `a` is exactly singular or the
/// result is not finite.
pub fn solve_conditioned(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<ConditionedSolve> {
    assert!(a.is_square() && a.nrows() == b.len());
    let lu = a.clone().lu();
    let solution = lu.solve(b)?;
    let inverse = lu.try_inverse()?;
    let inverse_norm1 = norm1(&inverse);
    let condition = norm1(a) * inverse_norm1;
    if !condition.is_finite() || solution.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(ConditionedSolve {
        solution,
        inverse_norm1,
        condition,
    })
}
