//! Per-round bandwidth allocation over the selected set.
//!
//! With `c_i = P_i·G / (B·log2(1 + g_i²P_i/N0))` the round's transmission
//! energy is `Σ c_i / β_i`, minimised subject to `Σ β_i = 1`, `β_i ≥ β_min`.
//! [`solve_analytic`] returns the KKT point `β_i ∝ √c_i`; [`solve_sqp`] reaches
//! the same optimum iteratively, and the two are cross-checked in tests.

use serde::{Deserialize, Serialize};

use crate::device::{ChannelEnv, Device};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Analytic,
    Sqp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub cost_coefficients: Vec<f64>,
    pub min_beta: f64,
}

impl AllocationProblem {
    /// Uses the default floor `β_min = 1e-6 / n`.
    pub fn new(cost_coefficients: Vec<f64>) -> Result<Self> {
        let n = cost_coefficients.len();
        if n == 0 {
            return Err(Error::EmptyProblem);
        }
        Self::with_min_beta(cost_coefficients, 1e-6 / n as f64)
    }

    pub fn with_min_beta(cost_coefficients: Vec<f64>, min_beta: f64) -> Result<Self> {
        let n = cost_coefficients.len();
        if n == 0 {
            return Err(Error::EmptyProblem);
        }
        if let Some(c) = cost_coefficients.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument(format!("cost coefficient {c} must be positive")));
        }
        if !(min_beta > 0.0 && min_beta < 1.0 / n as f64) {
            return Err(Error::InvalidArgument(format!("min_beta {min_beta} outside (0, 1/n)")));
        }
        Ok(Self { cost_coefficients, min_beta })
    }

    pub fn from_devices<'a>(
        devices: impl IntoIterator<Item = &'a Device>,
        env: &ChannelEnv,
    ) -> Result<Self> {
        let costs = devices
            .into_iter()
            .map(|d| cost_coefficient(d, env))
            .collect::<Result<Vec<_>>>()?;
        Self::new(costs)
    }

    pub fn len(&self) -> usize {
        self.cost_coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost_coefficients.is_empty()
    }

    pub fn objective(&self, betas: &[f64]) -> f64 {
        self.cost_coefficients.iter().zip(betas).map(|(c, b)| c / b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub betas: Vec<f64>,
    pub objective_value: f64,
    pub solver: SolverKind,
}

/// Communication energy of `d` when it holds the whole band (β = 1).
pub fn cost_coefficient(d: &Device, env: &ChannelEnv) -> Result<f64> {
    let rate = d.comm_rate(1.0, env)?;
    if !(rate > 0.0) {
        return Err(Error::InfeasibleTransmission { id: d.id });
    }
    Ok(d.tx_power * env.model_bits / rate)
}

pub fn total_comm_energy(p: &AllocationProblem, alloc: &Allocation) -> f64 {
    p.objective(&alloc.betas)
}

/// Closed-form optimum `β_i = √c_i / Σ√c_j`. Entries that would fall below
/// the floor are pinned to it and the remaining mass is redistributed.
pub fn solve_analytic(p: &AllocationProblem) -> Result<Allocation> {
    if p.is_empty() {
        return Err(Error::EmptyProblem);
    }
    let roots: Vec<f64> = p.cost_coefficients.iter().map(|c| c.sqrt()).collect();
    let mut pinned = vec![false; roots.len()];
    let mut betas = vec![0.0; roots.len()];
    loop {
        let free_mass = 1.0 - p.min_beta * pinned.iter().filter(|x| **x).count() as f64;
        let free_root: f64 = roots.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(r, _)| r).sum();
        let mut changed = false;
        for i in 0..roots.len() {
            if pinned[i] {
                betas[i] = p.min_beta;
            } else {
                betas[i] = free_mass * roots[i] / free_root;
                if betas[i] < p.min_beta {
                    pinned[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Allocation { objective_value: p.objective(&betas), betas, solver: SolverKind::Analytic })
}

/// Equality-constrained Newton / SQP iteration.
///
/// Each step minimises the local quadratic model (gradient `-c/β²`, diagonal
/// Hessian `2c/β³`) over the null space of `Σβ = 1`, then backtracks
/// (Armijo, fraction-to-boundary against `β_min`). Stops once the Newton
/// decrement predicts an objective gap of at most `tol` relative.
pub fn solve_sqp(p: &AllocationProblem, tol: f64, max_iter: usize) -> Result<Allocation> {
    if p.is_empty() {
        return Err(Error::EmptyProblem);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let n = p.len();
    let c = &p.cost_coefficients;
    let mut beta = vec![1.0 / n as f64; n];
    let mut f = p.objective(&beta);
    let mut step = vec![0.0; n];

    for _ in 0..max_iter {
        let grad: Vec<f64> = c.iter().zip(&beta).map(|(c, b)| -c / (b * b)).collect();
        let inv_hess: Vec<f64> = c.iter().zip(&beta).map(|(c, b)| b * b * b / (2.0 * c)).collect();
        let lambda = -grad.iter().zip(&inv_hess).map(|(g, h)| g * h).sum::<f64>()
            / inv_hess.iter().sum::<f64>();
        for i in 0..n {
            step[i] = -(grad[i] + lambda) * inv_hess[i];
        }
        // Keep the step exactly in the null space of the constraint.
        let drift = step.iter().sum::<f64>() / n as f64;
        step.iter_mut().for_each(|d| *d -= drift);

        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let decrement = -slope;
        if decrement <= 0.5 * tol * f.abs() || decrement <= 0.0 {
            return Ok(Allocation { betas: beta, objective_value: f, solver: SolverKind::Sqp });
        }

        let mut t: f64 = 1.0;
        for (b, d) in beta.iter().zip(&step) {
            if *d < 0.0 {
                t = t.min(0.99 * (b - p.min_beta) / -d);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, d)| b + t * d).collect();
            let ft = p.objective(&trial);
            if ft <= f + 1e-4 * t * slope {
                let sum: f64 = trial.iter().sum();
                beta = trial.into_iter().map(|b| b / sum).collect();
                f = p.objective(&beta);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No descent left at machine precision.
            return Ok(Allocation { betas: beta, objective_value: f, solver: SolverKind::Sqp });
        }
    }
    Err(Error::SolverFailure { iterations: max_iter, objective: f, best: beta })
}

pub fn solve(p: &AllocationProblem, kind: SolverKind, tol: f64, max_iter: usize) -> Result<Allocation> {
    match kind {
        SolverKind::Analytic => solve_analytic(p),
        SolverKind::Sqp => solve_sqp(p, tol, max_iter),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Exhaustive grid search over the simplex at `step` resolution.
    fn grid_oracle(c: &[f64], step: f64) -> (Vec<f64>, f64) {
        let m = (1.0 / step).round() as usize;
        let mut best = (vec![], f64::INFINITY);
        match c.len() {
            2 => {
                for i in 1..m {
                    let b = [i as f64 * step, 1.0 - i as f64 * step];
                    let f = c[0] / b[0] + c[1] / b[1];
                    if f < best.1 {
                        best = (b.to_vec(), f);
                    }
                }
            }
            3 => {
                for i in 1..m {
                    for j in 1..(m - i) {
                        let b = [i as f64 * step, j as f64 * step, 1.0 - (i + j) as f64 * step];
                        let f = c[0] / b[0] + c[1] / b[1] + c[2] / b[2];
                        if f < best.1 {
                            best = (b.to_vec(), f);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        best
    }

    #[test]
    fn grid_oracle_confirms_frozen_optima() {
        let (b, f) = grid_oracle(&[1.0, 4.0], 1e-4);
        assert!((b[0] - 1.0 / 3.0).abs() < 1e-4 && (f - 9.0).abs() < 1e-6);
        let (b, f) = grid_oracle(&[1.0, 1.0, 4.0], 2e-3);
        assert!((b[2] - 0.5).abs() < 2e-3 && (f - 16.0).abs() < 1e-3);
    }

    #[test]
    fn analytic_examples() {
        let a = solve_analytic(&AllocationProblem::new(vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(a.betas, vec![0.5, 0.5]);
        let a = solve_analytic(&AllocationProblem::new(vec![1.0, 4.0]).unwrap()).unwrap();
        assert_relative_eq!(a.betas[0], 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(a.betas[1], 2.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(a.objective_value, 9.0, max_relative = 1e-12);
        let a = solve_analytic(&AllocationProblem::new(vec![1.0, 1.0, 4.0]).unwrap()).unwrap();
        assert_relative_eq!(a.betas[0], 0.25, max_relative = 1e-12);
        assert_relative_eq!(a.betas[2], 0.5, max_relative = 1e-12);
        assert_relative_eq!(a.objective_value, 16.0, max_relative = 1e-12);
    }

    #[test]
    fn sqp_examples() {
        let p = AllocationProblem::new(vec![1.0, 4.0]).unwrap();
        let a = solve_sqp(&p, 1e-8, 100).unwrap();
        assert!((a.betas[0] - 1.0 / 3.0).abs() < 1e-6);
        assert!((a.betas[1] - 2.0 / 3.0).abs() < 1e-6);
        assert_eq!(a.solver, SolverKind::Sqp);

        let p = AllocationProblem::new(vec![3.7; 6]).unwrap();
        let a = solve_sqp(&p, 1e-10, 100).unwrap();
        for b in &a.betas {
            assert_relative_eq!(*b, 1.0 / 6.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn sqp_reports_failure_with_best_iterate() {
        let p = AllocationProblem::new(vec![1.0, 1e4, 3.0]).unwrap();
        match solve_sqp(&p, 1e-14, 1) {
            Err(Error::SolverFailure { best, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(best.len(), 3);
                assert_relative_eq!(best.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn total_energy_examples() {
        let p = AllocationProblem::new(vec![1.0, 4.0]).unwrap();
        let opt = solve_analytic(&p).unwrap();
        assert_relative_eq!(total_comm_energy(&p, &opt), 9.0, max_relative = 1e-12);
        let uniform = Allocation { betas: vec![0.5, 0.5], objective_value: 10.0, solver: SolverKind::Analytic };
        assert_eq!(total_comm_energy(&p, &uniform), 10.0);
        let single = AllocationProblem::new(vec![2.5]).unwrap();
        let a = solve_analytic(&single).unwrap();
        assert_eq!(a.betas, vec![1.0]);
        assert_eq!(total_comm_energy(&single, &a), 2.5);
    }

    #[test]
    fn floor_clamps_and_renormalises() {
        let p = AllocationProblem::with_min_beta(vec![1e-6, 1.0, 1.0], 0.01).unwrap();
        let a = solve_analytic(&p).unwrap();
        assert_eq!(a.betas[0], 0.01);
        assert_relative_eq!(a.betas.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(a.betas[1], 0.495, max_relative = 1e-12);
    }

    #[test]
    fn invalid_problems_rejected() {
        assert!(matches!(AllocationProblem::new(vec![]), Err(Error::EmptyProblem)));
        assert!(AllocationProblem::new(vec![1.0, 0.0]).is_err());
        assert!(AllocationProblem::with_min_beta(vec![1.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn cost_coefficient_examples() {
        let d = crate::device::tests_support::unit_device(0.5, 1.0);
        let env = ChannelEnv::new(1e7, 0.5 / 1023.0, 1e7).unwrap();
        assert_relative_eq!(cost_coefficient(&d, &env).unwrap(), 0.05, max_relative = 1e-12);
        let c1 = d.comm_energy(1.0, &env).unwrap().energy;
        assert_relative_eq!(cost_coefficient(&d, &env).unwrap(), c1, max_relative = 1e-12);
        let env2 = ChannelEnv { model_bits: 2e7, ..env };
        assert_relative_eq!(cost_coefficient(&d, &env2).unwrap(), 0.1, max_relative = 1e-12);
        let dead = crate::device::tests_support::unit_device(0.5, 0.0);
        assert!(matches!(cost_coefficient(&dead, &env), Err(Error::InfeasibleTransmission { .. })));
    }
}
