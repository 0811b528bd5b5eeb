//! Backward sweep of the discrete adjoint of implicit Euler.
//!
//! With `w_N = 0`, for `n = N, …, 1`:
//!
//! ```text
//! (Δ_n·K_σd(u_n) + K_εd)·w_{n−1} = c_n·q_n + K_ε·w_n
//! ```
//!
//! on the free nodes; `w` vanishes on Dirichlet nodes. The step matrix is
//! the forward Newton Jacobian at the converged `u_n`, so every step is a
//! single linear solve shared by all quantities.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forward::{EqsModel, TransientSolution};
use crate::qoi::AdjointRhs;
use crate::sparse::SkylineCholesky;
use crate::timegrid::TimeGrid;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution<T> {
    grid: TimeGrid<T>,
    w: Vec<Vec<T>>,
}

impl<T: Scalar> AdjointSolution<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Adjoint at sample `n`.
    pub fn state(&self, n: usize) -> &[T] {
        &self.w[n]
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Solves the adjoint of every load in one backward sweep.
pub fn solve_adjoints<T: Scalar>(
    model: &EqsModel<T>,
    solution: &TransientSolution<T>,
    rhs: &[AdjointRhs<T>],
) -> Result<Vec<AdjointSolution<T>>> {
    let grid = solution.grid();
    let len = grid.len();
    if let Some(r) = rhs.iter().find(|r| r.num_samples != len || r.trapezoid.len() != len) {
        return Err(Error::invalid(format!(
            "adjoint load defined on {} samples, forward grid has {len}",
            r.num_samples
        )));
    }
    let nn = model.num_nodes();
    let dofs = model.dofs();
    let mut w: Vec<Vec<Vec<T>>> = rhs.iter().map(|_| vec![Vec::new(); len]).collect();
    for traj in &mut w {
        traj[len - 1] = vec![T::zero(); nn];
    }
    let linear = model.is_linear();
    let mut cached: Option<(T, Arc<SkylineCholesky<T>>)> = None;
    for n in (1..len).rev() {
        let dt = grid.dt(n);
        let chol = match &cached {
            Some((key, f)) if linear && *key == dt => f.clone(),
            _ => {
                let u = solution.state(n)?;
                let f = Arc::new(
                    model
                        .factor(&model.step_matrix(&u, dt), n)
                        .map_err(|e| adjoint_error(e, n))?,
                );
                cached = Some((dt, f.clone()));
                f
            }
        };
        for (k, r) in rhs.iter().enumerate() {
            let mut b = model.k_eps().mul_vec(&w[k][n]);
            if let Some(load) = r.weighted(n) {
                for (x, l) in b.iter_mut().zip(load) {
                    *x += l;
                }
            }
            let mut next = vec![T::zero(); nn];
            if dofs.num_free() > 0 {
                dofs.scatter(&chol.solve(&dofs.restrict(&b)), &mut next);
            }
            w[k][n - 1] = next;
        }
    }
    Ok(w
        .into_iter()
        .map(|w| AdjointSolution { grid: grid.clone(), w })
        .collect())
}

fn adjoint_error(e: Error, step: usize) -> Error {
    match e {
        Error::Solver { message, .. } => Error::Solver {
            step,
            message: format!("adjoint step matrix: {message}"),
        },
        other => other,
    }
}

pub fn solve_adjoint<T: Scalar>(
    model: &EqsModel<T>,
    solution: &TransientSolution<T>,
    rhs: &AdjointRhs<T>,
) -> Result<AdjointSolution<T>> {
    Ok(solve_adjoints(model, solution, std::slice::from_ref(rhs))?.remove(0))
}
