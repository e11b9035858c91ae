//! Small dense QP with a diagonal Hessian, linear equalities and box bounds:
//!
//! ```text
//! minimize   ½ Σ w_i x_i²
//! subject to A x = b,  lo ≤ x ≤ hi
//! ```
//!
//! A bounded-variable simplex on the artificial residuals finds a feasible
//! vertex; a primal active-set iteration then walks to the optimum. Equality
//! rows are scaled to unit norm internally, so callers may pass moment arms in
//! millimeters or meters without tuning tolerances.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    /// The equalities cannot be met inside the box; `residual` is the smallest
    /// reachable ℓ1 residual of the (row-normalized) equalities.
    Infeasible {
        residual: f64,
    },
    MaxIterations {
        iterations: usize,
    },
    Numerical(&'static str),
}

pub struct BoxQp<'a> {
    pub weights: &'a [f64],
    pub eq_matrix: &'a DMatrix<f64>,
    pub eq_rhs: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Equality multipliers λ with `W x = Aᵀ λ + ν`.
    pub eq_multipliers: Vec<f64>,
    /// Signed bound multipliers ν (≥ 0 at a lower bound, ≤ 0 at an upper bound).
    pub bound_multipliers: Vec<f64>,
    /// Bounds in the final working set.
    pub working_set: Vec<Option<BoundSide>>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl BoxQp<'_> {
    pub fn solve(&self, tol: f64, max_iterations: usize) -> Result<QpSolution, QpError> {
        let n = self.weights.len();
        let m = self.eq_matrix.nrows();
        assert_eq!(self.eq_matrix.ncols(), n);
        assert_eq!(self.eq_rhs.len(), m);

        let mut a = self.eq_matrix.clone();
        let mut b = DVector::from_column_slice(self.eq_rhs);
        let mut row_scale = vec![1.0; m];
        for r in 0..m {
            let norm = a.row(r).norm();
            if norm > 0.0 {
                row_scale[r] = 1.0 / norm;
                a.row_mut(r).scale_mut(row_scale[r]);
                b[r] *= row_scale[r];
            }
        }

        let feas_tol = tol * (1.0 + b.amax());
        let (x0, phase1_iters) =
            phase_one(&a, &b, self.lower, self.upper, feas_tol, max_iterations)?;
        let mut sol =
            self.phase_two(&a, &b, x0, tol, max_iterations.saturating_sub(phase1_iters))?;
        sol.iterations += phase1_iters;
        for (lam, s) in sol.eq_multipliers.iter_mut().zip(&row_scale) {
            *lam *= s;
        }
        Ok(sol)
    }

    fn phase_two(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        mut x: Vec<f64>,
        tol: f64,
        max_iterations: usize,
    ) -> Result<QpSolution, QpError> {
        let n = x.len();
        let m = a.nrows();
        let (lo, hi, w) = (self.lower, self.upper, self.weights);
        let scale = 1.0 + lo.iter().chain(hi).fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let bound_tol = 1e-12 * scale;

        let mut working: Vec<Option<BoundSide>> = (0..n)
            .map(|i| {
                if x[i] - lo[i] <= bound_tol {
                    x[i] = lo[i];
                    Some(BoundSide::Lower)
                } else if hi[i] - x[i] <= bound_tol {
                    x[i] = hi[i];
                    Some(BoundSide::Upper)
                } else {
                    None
                }
            })
            .collect();

        // Free columns must span the equality rows so that the working set is
        // linearly independent.
        while free_rank(a, &working) < m {
            let before = free_rank(a, &working);
            let pick = (0..n).find(|&i| {
                working[i].is_some() && {
                    let mut trial = working.clone();
                    trial[i] = None;
                    free_rank(a, &trial) > before
                }
            });
            match pick {
                Some(i) => working[i] = None,
                None => return Err(QpError::Numerical("equality rows are rank deficient")),
            }
        }

        for iter in 0..max_iterations.max(1) {
            let (z, mu) = self.equality_step(a, b, &x, &working)?;
            let mut p = vec![0.0; n];
            let mut step_norm = 0.0_f64;
            for i in 0..n {
                if working[i].is_none() {
                    p[i] = z[i] - x[i];
                    step_norm = step_norm.max(p[i].abs());
                }
            }

            if step_norm <= 1e-13 * scale {
                let atmu = a.transpose() * &mu;
                let mut worst: Option<(usize, f64)> = None;
                for i in 0..n {
                    let g = w[i] * x[i] - atmu[i];
                    let nu = match working[i] {
                        Some(BoundSide::Lower) => g,
                        Some(BoundSide::Upper) => -g,
                        None => continue,
                    };
                    if nu < -tol * (1.0 + atmu.amax()) && worst.is_none_or(|(_, v)| nu < v) {
                        worst = Some((i, nu));
                    }
                }
                match worst {
                    Some((i, _)) => working[i] = None,
                    None => {
                        for i in 0..n {
                            if working[i].is_none() {
                                x[i] = z[i].clamp(lo[i], hi[i]);
                            }
                        }
                        return Ok(self.finish(a, b, x, mu, working, iter + 1));
                    }
                }
                continue;
            }

            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..n {
                if working[i].is_some() || p[i] == 0.0 {
                    continue;
                }
                let (limit, side) = if p[i] < 0.0 {
                    ((lo[i] - x[i]) / p[i], BoundSide::Lower)
                } else {
                    ((hi[i] - x[i]) / p[i], BoundSide::Upper)
                };
                if limit < alpha {
                    alpha = limit.max(0.0);
                    blocking = Some((i, side));
                }
            }
            for i in 0..n {
                if working[i].is_none() {
                    x[i] = if alpha == 1.0 {
                        z[i]
                    } else {
                        x[i] + alpha * p[i]
                    };
                }
            }
            if let Some((i, side)) = blocking {
                x[i] = match side {
                    BoundSide::Lower => lo[i],
                    BoundSide::Upper => hi[i],
                };
                working[i] = Some(side);
            }
        }
        Err(QpError::MaxIterations {
            iterations: max_iterations,
        })
    }

    /// Minimizer over the free variables with working bounds held fixed.
    fn equality_step(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        x: &[f64],
        working: &[Option<BoundSide>],
    ) -> Result<(Vec<f64>, DVector<f64>), QpError> {
        let n = x.len();
        let m = a.nrows();
        let mut rhs = b.clone();
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..n {
            let col = a.column(i);
            if working[i].is_some() {
                rhs -= col * x[i];
            } else {
                schur += col * col.transpose() / self.weights[i];
            }
        }
        let chol = schur
            .cholesky()
            .ok_or(QpError::Numerical("singular reduced KKT system"))?;
        let mu = chol.solve(&rhs);
        let atmu = a.transpose() * &mu;
        let z = (0..n)
            .map(|i| {
                if working[i].is_some() {
                    x[i]
                } else {
                    atmu[i] / self.weights[i]
                }
            })
            .collect();
        Ok((z, mu))
    }

    fn finish(
        &self,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        x: Vec<f64>,
        mu: DVector<f64>,
        working: Vec<Option<BoundSide>>,
        iterations: usize,
    ) -> QpSolution {
        let n = x.len();
        let atmu = a.transpose() * &mu;
        let mut nu = vec![0.0; n];
        let mut residual = 0.0_f64;
        for i in 0..n {
            let g = self.weights[i] * x[i] - atmu[i];
            match working[i] {
                Some(BoundSide::Lower) => {
                    nu[i] = g;
                    residual = residual.max(-g);
                }
                Some(BoundSide::Upper) => {
                    nu[i] = g;
                    residual = residual.max(g);
                }
                None => residual = residual.max(g.abs()),
            }
            residual = residual.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        let ax = a * DVector::from_column_slice(&x);
        residual = residual.max((ax - b).amax());
        let objective = x
            .iter()
            .zip(self.weights)
            .map(|(xi, wi)| wi * xi * xi)
            .sum();
        QpSolution {
            x,
            eq_multipliers: mu.as_slice().to_vec(),
            bound_multipliers: nu,
            working_set: working,
            objective,
            kkt_residual: residual,
            iterations,
        }
    }
}

fn free_rank(a: &DMatrix<f64>, working: &[Option<BoundSide>]) -> usize {
    let cols: Vec<usize> = (0..working.len())
        .filter(|&i| working[i].is_none())
        .collect();
    if cols.is_empty() {
        return 0;
    }
    let sub = a.select_columns(&cols);
    let sv = sub.singular_values();
    let max = sv.max();
    sv.iter().filter(|s| **s > 1e-10 * max.max(1e-300)).count()
}

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
}

/// Bounded-variable simplex on `min Σ a_k` s.t. `A x + S a = b`, with Bland's rule.
///
/// Returns a point inside the box with `‖A x − b‖₁ ≤ feas_tol` and the number of
/// pivots used.
fn phase_one(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
    feas_tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, usize), QpError> {
    let n = lo.len();
    let m = a.nrows();
    let total = n + m;

    let x_lo = DVector::from_column_slice(lo);
    let r0 = b - a * &x_lo;
    let mut full = DMatrix::zeros(m, total);
    full.columns_mut(0, n).copy_from(a);
    for k in 0..m {
        full[(k, n + k)] = if r0[k] >= 0.0 { 1.0 } else { -1.0 };
    }
    let lower = |j: usize| if j < n { lo[j] } else { 0.0 };
    let upper = |j: usize| if j < n { hi[j] } else { f64::INFINITY };
    let cost = |j: usize| if j < n { 0.0 } else { 1.0 };

    let mut value: Vec<f64> = (0..total)
        .map(|j| if j < n { lo[j] } else { r0[j - n].abs() })
        .collect();
    let mut status = vec![Status::AtLower; total];
    let mut basis: Vec<usize> = (n..total).collect();
    for &j in &basis {
        status[j] = Status::Basic;
    }

    let pivot_tol = 1e-12;
    for iter in 0..=max_iterations {
        let infeasibility: f64 = (n..total).map(|j| value[j]).sum();
        if infeasibility <= feas_tol {
            let x = value[..n]
                .iter()
                .enumerate()
                .map(|(i, v)| v.clamp(lo[i], hi[i]))
                .collect();
            return Ok((x, iter));
        }
        if iter == max_iterations {
            break;
        }

        let bmat = full.select_columns(&basis);
        let lu = bmat.clone().lu();
        let c_b = DVector::from_iterator(m, basis.iter().map(|&j| cost(j)));
        let y = bmat
            .transpose()
            .lu()
            .solve(&c_b)
            .ok_or(QpError::Numerical("singular simplex basis"))?;

        let entering = (0..total).find_map(|j| {
            let reduced = cost(j) - full.column(j).dot(&y);
            match status[j] {
                Status::AtLower if reduced < -pivot_tol && upper(j) > lower(j) => Some((j, 1.0)),
                Status::AtUpper if reduced > pivot_tol => Some((j, -1.0)),
                _ => None,
            }
        });
        let Some((j, sigma)) = entering else {
            return Err(QpError::Infeasible {
                residual: infeasibility,
            });
        };

        let dir = lu
            .solve(&full.column(j).into_owned())
            .ok_or(QpError::Numerical("singular simplex basis"))?
            * (-sigma);

        let mut step = upper(j) - lower(j);
        let mut leaving: Option<(usize, Status)> = None;
        for (pos, &bj) in basis.iter().enumerate() {
            let d = dir[pos];
            let (limit, side) = if d < -pivot_tol {
                ((value[bj] - lower(bj)) / -d, Status::AtLower)
            } else if d > pivot_tol {
                ((upper(bj) - value[bj]) / d, Status::AtUpper)
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            let better = match leaving {
                None => limit < step,
                Some((lp, _)) => limit < step || (limit == step && bj < basis[lp]),
            };
            if better {
                step = limit;
                leaving = Some((pos, side));
            }
        }
        if !step.is_finite() {
            return Err(QpError::Numerical("unbounded phase-one direction"));
        }

        value[j] += sigma * step;
        for (pos, &bj) in basis.iter().enumerate() {
            value[bj] += step * dir[pos];
        }
        match leaving {
            None => {
                status[j] = if sigma > 0.0 {
                    Status::AtUpper
                } else {
                    Status::AtLower
                };
                value[j] = if sigma > 0.0 { upper(j) } else { lower(j) };
            }
            Some((pos, side)) => {
                let out = basis[pos];
                status[out] = side;
                value[out] = if side == Status::AtLower {
                    lower(out)
                } else {
                    upper(out)
                };
                basis[pos] = j;
                status[j] = Status::Basic;
            }
        }

        // Recompute basic values from the nonbasic ones to avoid drift.
        let mut rhs = b.clone();
        for k in 0..total {
            if status[k] != Status::Basic {
                rhs -= full.column(k) * value[k];
            }
        }
        let xb = full
            .select_columns(&basis)
            .lu()
            .solve(&rhs)
            .ok_or(QpError::Numerical("singular simplex basis"))?;
        for (pos, &bj) in basis.iter().enumerate() {
            value[bj] = xb[pos];
        }
    }
    Err(QpError::MaxIterations {
        iterations: max_iterations,
    })
}
