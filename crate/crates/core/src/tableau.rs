//! Butcher matrices of HBVM(k,s) and of the RK-type form of ELIM(r,k,s).
//!
//! With `P` (k×s) holding `P_{j}(c_i)`, `I` (k×s) holding `∫₀^{c_i} P_j` and
//! `Ω = diag(b)`, the HBVM matrix is `A = I Pᵀ Ω` and the ELIM matrix is
//! `A = I Σ Pᵀ Ω` with `Σ = diag(1, η̂₁, …, η̂_{s−1})`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ElimError, Result};
use crate::polybasis::{gauss_rule, legendre_eval_upto, legendre_integral, xi};

#[derive(Debug, Clone)]
pub struct TableauMatrices {
    pub s: usize,
    pub k: usize,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    /// `P_{j}(c_i)`, k×s.
    pub p: DMatrix<f64>,
    /// `∫₀^{c_i} P_j`, k×s.
    pub integrals: DMatrix<f64>,
    pub omega: DVector<f64>,
    /// k×k Butcher matrix.
    pub a: DMatrix<f64>,
}

/// Values `P_j(c_i)` for `j < cols` at the given nodes.
pub fn basis_matrix(nodes: &[f64], cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nodes.len(), cols);
    let mut row = vec![0.0; cols];
    for (i, &c) in nodes.iter().enumerate() {
        legendre_eval_upto(c, &mut row);
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Values `∫₀^{c_i} P_j` for `j < cols` at the given nodes.
pub fn integral_matrix(nodes: &[f64], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nodes.len(), cols, |i, j| legendre_integral(j, nodes[i]))
}

/// The (s+1)×s matrix `X̂_s` with `I_s = P_{s+1} X̂_s`.
pub fn integration_matrix(s: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(s + 1, s);
    x[(0, 0)] = 0.5;
    for j in 0..s {
        x[(j + 1, j)] = xi(j + 1);
        if j >= 1 {
            x[(j - 1, j)] = -xi(j);
        }
    }
    x
}

fn validate_sizes(k: usize, s: usize) -> Result<()> {
    if s == 0 {
        return Err(ElimError::Config("s must be positive".into()));
    }
    if k < s {
        return Err(ElimError::Config(format!(
            "k = {k} quadrature points cannot be fewer than s = {s}"
        )));
    }
    Ok(())
}

pub fn build_hbvm_tableau(k: usize, s: usize) -> Result<TableauMatrices> {
    validate_sizes(k, s)?;
    let rule = gauss_rule(k)?;
    let c = rule.nodes().to_vec();
    let b = rule.weights().to_vec();
    let p = basis_matrix(&c, s);
    let integrals = integral_matrix(&c, s);
    let omega = DVector::from_column_slice(&b);
    let a = &integrals * weighted_transpose(&p, &omega);
    Ok(TableauMatrices {
        s,
        k,
        c,
        b,
        p,
        integrals,
        omega,
        a,
    })
}

/// `Pᵀ Ω`, s×k.
fn weighted_transpose(p: &DMatrix<f64>, omega: &DVector<f64>) -> DMatrix<f64> {
    let mut pt = p.transpose();
    for (mut col, w) in pt.column_iter_mut().zip(omega.iter()) {
        col *= *w;
    }
    pt
}

impl TableauMatrices {
    /// `P_{s+1} X̂_s Pᵀ Ω`, which must coincide with [`TableauMatrices::a`].
    pub fn w_transformed(&self) -> DMatrix<f64> {
        let p_ext = basis_matrix(&self.c, self.s + 1);
        p_ext * integration_matrix(self.s) * weighted_transpose(&self.p, &self.omega)
    }

    pub fn to_json(&self) -> TableauJson {
        TableauJson {
            s: self.s,
            k: self.k,
            c: self.c.clone(),
            b: self.b.clone(),
            a: self
                .a
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

/// Serialized tableau: `{ s, k, c[], b[], A[][] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableauJson {
    pub s: usize,
    pub k: usize,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
}

/// Diagonal scaling `Σ = diag(η̂₀, …, η̂_{s−1})` with `η̂₀ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaScaling {
    eta: Vec<f64>,
}

impl SigmaScaling {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        match eta.first() {
            None => Err(ElimError::Config("Σ needs at least one entry".into())),
            Some(&e0) if e0 != 1.0 => Err(ElimError::Config(format!(
                "the leading entry of Σ must be exactly 1, got {e0}"
            ))),
            Some(_) => Ok(Self { eta }),
        }
    }

    /// The HBVM case, `Σ = I`.
    pub fn identity(s: usize) -> Self {
        Self { eta: vec![1.0; s] }
    }

    pub fn s(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
}

/// `I Σ Pᵀ Ω`, the k×k matrix of the RK-type formulation of ELIM.
pub fn build_elim_tableau(k: usize, s: usize, sigma: &SigmaScaling) -> Result<DMatrix<f64>> {
    validate_sizes(k, s)?;
    if sigma.s() != s {
        return Err(ElimError::Config(format!(
            "Σ has {} entries, expected s = {s}",
            sigma.s()
        )));
    }
    let t = build_hbvm_tableau(k, s)?;
    let mut scaled = t.integrals.clone();
    for (mut col, eta) in scaled.column_iter_mut().zip(sigma.eta()) {
        col *= *eta;
    }
    Ok(scaled * weighted_transpose(&t.p, &t.omega))
}
