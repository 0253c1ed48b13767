//! Linear objective over a product of linear matrix inequalities:
//!
//! ```text
//! minimize    c' z
//! subject to  F0_j + sum_i z_i F_ij  >= 0      for every block j
//! ```
//!
//! Solved by a primal-dual interior-point method on the homogeneous
//! self-dual embedding with Nesterov-Todd scaling (see [`solve`]).

mod ipm;
mod structure;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use ipm::solve;

/// One coefficient of a block. Off-diagonal terms are symmetric: a term at
/// `(row, col)` also contributes to `(col, row)`. Stored with `row <= col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiTerm {
    /// `None` for the constant matrix `F0`.
    pub var: Option<usize>,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    size: usize,
    terms: Vec<LmiTerm>,
}

impl LmiBlock {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            terms: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn terms(&self) -> &[LmiTerm] {
        &self.terms
    }

    fn push(&mut self, var: Option<usize>, row: usize, col: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.terms.push(LmiTerm {
            var,
            row,
            col,
            value,
        });
    }

    /// Adds `value` to `F0[row, col]` (and its mirror).
    pub fn add_constant(&mut self, row: usize, col: usize, value: f64) {
        self.push(None, row, col, value);
    }

    /// Adds `value` to `F_var[row, col]` (and its mirror).
    pub fn add_term(&mut self, var: usize, row: usize, col: usize, value: f64) {
        self.push(Some(var), row, col, value);
    }

    /// Adds the linear form `sum_k coeffs[k].1 * z_{coeffs[k].0}` at `(row, col)`.
    pub fn add_form(&mut self, row: usize, col: usize, coeffs: &[(usize, f64)]) {
        for &(var, v) in coeffs {
            self.add_term(var, row, col, v);
        }
    }

    /// The dense coefficient matrix of `var` (`None` for `F0`).
    pub fn matrix(&self, var: Option<usize>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for t in self.terms.iter().filter(|t| t.var == var) {
            m[(t.row, t.col)] += t.value;
            if t.row != t.col {
                m[(t.col, t.row)] += t.value;
            }
        }
        m
    }

    /// `F0 + sum_i z_i F_i`.
    pub fn evaluate(&self, z: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for t in &self.terms {
            let v = match t.var {
                None => t.value,
                Some(i) => t.value * z[i],
            };
            m[(t.row, t.col)] += v;
            if t.row != t.col {
                m[(t.col, t.row)] += v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    num_vars: usize,
    objective: Vec<f64>,
    blocks: Vec<LmiBlock>,
}

impl LmiProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            blocks: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn set_objective(&mut self, var: usize, value: f64) {
        self.objective[var] = value;
    }

    pub fn add_objective(&mut self, var: usize, value: f64) {
        self.objective[var] += value;
    }

    pub fn add_block(&mut self, block: LmiBlock) -> usize {
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(LmiBlock::size).collect()
    }

    /// Checks sizes, indices and finiteness.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedProblem(msg));
        if self.objective.len() != self.num_vars {
            return bad(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.num_vars
            ));
        }
        if let Some(i) = self.objective.iter().position(|v| !v.is_finite()) {
            return bad(format!("objective entry {i} is not finite"));
        }
        if self.blocks.is_empty() {
            return bad("no LMI blocks".into());
        }
        for (j, b) in self.blocks.iter().enumerate() {
            if b.size == 0 {
                return bad(format!("block {j} has size 0"));
            }
            for t in &b.terms {
                if t.row >= b.size || t.col >= b.size {
                    return bad(format!(
                        "block {j}: entry ({}, {}) outside size {}",
                        t.row, t.col, b.size
                    ));
                }
                if let Some(v) = t.var {
                    if v >= self.num_vars {
                        return bad(format!("block {j}: variable {v} >= num_vars {}", self.num_vars));
                    }
                }
                if !t.value.is_finite() {
                    return bad(format!("block {j}: non-finite coefficient"));
                }
            }
        }
        Ok(())
    }

    /// Every block evaluated at `z`.
    pub fn evaluate(&self, z: &[f64]) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.evaluate(z)).collect()
    }

    /// Smallest eigenvalue of every block at `z`, recomputed from scratch.
    pub fn block_min_eigenvalues(&self, z: &[f64]) -> Vec<f64> {
        self.evaluate(z).iter().map(linalg::min_eigenvalue).collect()
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, v)| c * v).sum()
    }

    /// JSON dump: `num_vars`, `c`, `blocks[].size`, `blocks[].entries` as
    /// `[var_index, row, col, value]` with `var_index = -1` for `F0`. Both
    /// triangles of every off-diagonal coefficient are written.
    pub fn to_json(&self) -> Result<String> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut entries = Vec::with_capacity(2 * b.terms.len());
                for t in &b.terms {
                    let var = t.var.map_or(-1, |v| v as i64);
                    entries.push((var, t.row, t.col, t.value));
                    if t.row != t.col {
                        entries.push((var, t.col, t.row, t.value));
                    }
                }
                BlockJson {
                    size: b.size,
                    entries,
                }
            })
            .collect();
        Ok(serde_json::to_string_pretty(&ProblemJson {
            num_vars: self.num_vars,
            c: self.objective.clone(),
            blocks,
        })?)
    }

    /// Inverse of [`LmiProblem::to_json`]. Duplicate entries are summed; each
    /// assembled coefficient matrix must be symmetric to `1e-12`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ProblemJson = serde_json::from_str(text)?;
        let mut problem = LmiProblem::new(raw.num_vars);
        if raw.c.len() != raw.num_vars {
            return Err(Error::MalformedProblem(format!(
                "`c` has {} entries for num_vars = {}",
                raw.c.len(),
                raw.num_vars
            )));
        }
        problem.objective = raw.c;
        for (j, b) in raw.blocks.into_iter().enumerate() {
            let mut acc: BTreeMap<(i64, usize, usize), f64> = BTreeMap::new();
            for (var, row, col, value) in b.entries {
                if var < -1 || (var >= 0 && var as usize >= raw.num_vars) {
                    return Err(Error::MalformedProblem(format!("block {j}: bad var_index {var}")));
                }
                if row >= b.size || col >= b.size {
                    return Err(Error::MalformedProblem(format!(
                        "block {j}: entry ({row}, {col}) outside size {}",
                        b.size
                    )));
                }
                *acc.entry((var, row, col)).or_insert(0.0) += value;
            }
            let mut block = LmiBlock::new(b.size);
            for (&(var, row, col), &value) in &acc {
                if row > col {
                    continue;
                }
                let v = if row == col {
                    value
                } else {
                    let mirror = acc.get(&(var, col, row)).copied().unwrap_or(0.0);
                    if (value - mirror).abs() > 1e-12 * value.abs().max(mirror.abs()).max(1.0) {
                        return Err(Error::MalformedProblem(format!(
                            "block {j}: coefficient of var {var} is not symmetric at ({row}, {col})"
                        )));
                    }
                    0.5 * (value + mirror)
                };
                block.push((var >= 0).then_some(var as usize), row, col, v);
            }
            // lower-triangle entries without an upper partner
            for (&(var, row, col), &value) in &acc {
                if row > col && !acc.contains_key(&(var, col, row)) && value.abs() > 1e-12 {
                    return Err(Error::MalformedProblem(format!(
                        "block {j}: coefficient of var {var} is not symmetric at ({row}, {col})"
                    )));
                }
            }
            problem.add_block(block);
        }
        problem.validate()?;
        Ok(problem)
    }
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    size: usize,
    entries: Vec<(i64, usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    num_vars: usize,
    c: Vec<f64>,
    blocks: Vec<BlockJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalTrouble,
    IterLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    /// Primal point; for `DualInfeasible` a direction of unbounded descent.
    pub z: Vec<f64>,
    pub objective_value: f64,
    /// `-<F0, Z>` at the dual iterate.
    pub dual_objective: f64,
    pub status: SolveStatus,
    /// `|c'z - dual_objective| / max(1, |c'z|)` at the returned iterate.
    pub gap: f64,
    /// Smallest block eigenvalue of `F(z)`, recomputed independently.
    pub feas: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Variables fixed at zero because their coefficient matrices are linear
    /// combinations of the others.
    pub eliminated_vars: usize,
    #[serde(skip)]
    pub dual: Vec<DMatrix<f64>>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_preserves_the_problem() {
        let mut p = LmiProblem::new(2);
        p.set_objective(0, 1.0);
        p.set_objective(1, -0.5);
        let mut b = LmiBlock::new(2);
        b.add_term(0, 0, 0, 1.0);
        b.add_constant(0, 1, 1.0);
        b.add_term(1, 1, 0, 2.5);
        b.add_term(0, 1, 1, 1.0);
        p.add_block(b);
        let text = p.to_json().unwrap();
        let back = LmiProblem::from_json(&text).unwrap();
        let z = [0.3, -1.2];
        assert_eq!(back.evaluate(&z), p.evaluate(&z));
        assert_eq!(back.objective(), p.objective());
    }

    #[test]
    fn json_rejects_asymmetric_coefficients() {
        let text = r#"{"num_vars":1,"c":[1.0],"blocks":[{"size":2,"entries":[[0,0,1,1.0]]}]}"#;
        assert!(LmiProblem::from_json(text).is_err());
        let text = r#"{"num_vars":1,"c":[1.0],"blocks":[{"size":2,"entries":[[0,0,1,1.0],[0,1,0,2.0]]}]}"#;
        assert!(LmiProblem::from_json(text).is_err());
        let text = r#"{"num_vars":1,"c":[1.0],"blocks":[{"size":2,"entries":[[3,0,0,1.0]]}]}"#;
        assert!(LmiProblem::from_json(text).is_err());
    }

    #[test]
    fn validation_catches_bad_indices() {
        let mut p = LmiProblem::new(1);
        let mut b = LmiBlock::new(1);
        b.add_term(2, 0, 0, 1.0);
        p.add_block(b);
        assert!(p.validate().is_err());
        assert!(LmiProblem::new(1).validate().is_err());
        let mut p = LmiProblem::new(1);
        let mut b = LmiBlock::new(1);
        b.add_term(0, 0, 1, 1.0);
        p.add_block(b);
        assert!(p.validate().is_err());
    }
}
