//! Dense primal-dual interior-point solver for small convex quadratic
//! programs
//!
//! ```text
//! minimize ½ xᵀ diag(q) x + cᵀx   subject to   A x = b,   G x ≥ h
//! ```
//!
//! with Mehrotra predictor-corrector steps. Linear programs are the case
//! `q = 0`. Redundant equality rows are dropped before the solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{MdpError, Result};

const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Default)]
pub struct QuadraticProgram {
    pub n: usize,
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub ineq: Vec<(Vec<f64>, f64)>,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the inequality rows.
    pub ineq_duals: Vec<f64>,
    pub iterations: usize,
}

impl QuadraticProgram {
    pub fn new(n: usize) -> Self {
        Self { n, q: vec![0.0; n], c: vec![0.0; n], eq: Vec::new(), ineq: Vec::new(), tol: 1e-10 }
    }

    pub fn eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq.push((row, rhs));
    }

    pub fn geq(&mut self, row: Vec<f64>, rhs: f64) {
        self.ineq.push((row, rhs));
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.q).zip(&self.c).map(|((x, q), c)| 0.5 * q * x * x + c * x).sum()
    }

    pub fn solve(&self) -> Result<QpSolution> {
        solve_qp(self)
    }
}

/// Keeps a maximal linearly independent subset of the equality rows.
fn independent_rows(rows: &[(Vec<f64>, f64)], n: usize) -> Result<Vec<usize>> {
    let mut basis: Vec<(Vec<f64>, f64, usize)> = Vec::new();
    let mut keep = Vec::new();
    for (i, (row, rhs)) in rows.iter().enumerate() {
        let mut v = row.clone();
        let mut b = *rhs;
        for (bv, bb, pivot) in &basis {
            let f = v[*pivot] / bv[*pivot];
            if f != 0.0 {
                for j in 0..n {
                    v[j] -= f * bv[j];
                }
                b -= f * bb;
            }
        }
        let scale = row.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let (pivot, mag) = v.iter().enumerate().fold((0, 0.0f64), |acc, (j, x)| if x.abs() > acc.1 { (j, x.abs()) } else { acc });
        if mag > 1e-11 * scale {
            basis.push((v, b, pivot));
            keep.push(i);
        } else if b.abs() > 1e-8 * (1.0 + rhs.abs()) {
            return Err(MdpError::Infeasible("inconsistent equality constraints".into()));
        }
    }
    Ok(keep)
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a: f64 = 1.0;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

pub fn solve_qp(prob: &QuadraticProgram) -> Result<QpSolution> {
    let n = prob.n;
    let keep = independent_rows(&prob.eq, n)?;
    let me = keep.len();
    let mi = prob.ineq.len();
    let a = DMatrix::from_fn(me, n, |i, j| prob.eq[keep[i]].0[j]);
    let b = DVector::from_iterator(me, keep.iter().map(|&i| prob.eq[i].1));
    let g = DMatrix::from_fn(mi, n, |i, j| prob.ineq[i].0[j]);
    let h = DVector::from_iterator(mi, prob.ineq.iter().map(|r| r.1));
    let c = DVector::from_column_slice(&prob.c);
    let q = DVector::from_column_slice(&prob.q);
    let tol = prob.tol;
    let norm = |v: &DVector<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (nb, nh, nc) = (norm(&b), norm(&h), norm(&c));

    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(me);
    let mut s = (&g * &x - &h).map(|v| v.max(1.0));
    let mut z = DVector::from_element(mi, 1.0);

    for it in 0..MAX_ITERATIONS {
        let rd = q.component_mul(&x) + &c - a.transpose() * &y - g.transpose() * &z;
        let rp = &a * &x - &b;
        let ri = &g * &x - &s - &h;
        let mu = if mi > 0 { s.dot(&z) / mi as f64 } else { 0.0 };
        if norm(&rp) <= tol * (1.0 + nb)
            && norm(&ri) <= tol * (1.0 + nh)
            && norm(&rd) <= tol * (1.0 + nc)
            && mu <= tol * 1e-2
        {
            let xs: Vec<f64> = x.iter().copied().collect();
            return Ok(QpSolution {
                objective: prob.objective_at(&xs),
                x: xs,
                ineq_duals: z.iter().copied().collect(),
                iterations: it,
            });
        }
        if norm(&x) > 1e13 || !mu.is_finite() {
            return Err(MdpError::Infeasible("interior-point iterates diverged".into()));
        }
        let w = z.component_div(&s);
        let mut kkt = DMatrix::zeros(n + me, n + me);
        {
            let gw = DMatrix::from_fn(mi, n, |i, j| g[(i, j)] * w[i]);
            let hess = g.transpose() * gw;
            for i in 0..n {
                for j in 0..n {
                    kkt[(i, j)] = hess[(i, j)];
                }
                kkt[(i, i)] += q[i] + 1e-13;
            }
            for i in 0..me {
                for j in 0..n {
                    kkt[(n + i, j)] = a[(i, j)];
                    kkt[(j, n + i)] = a[(i, j)];
                }
                kkt[(n + i, n + i)] = -1e-13;
            }
        }
        let lu = kkt.lu();
        let direction = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            let t = (rc + z.component_mul(&ri)).component_div(&s);
            let top = -&rd - g.transpose() * t;
            let mut rhs = DVector::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(&top);
            rhs.rows_mut(n, me).copy_from(&(-&rp));
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = -sol.rows(n, me).into_owned();
            let ds = &g * &dx + &ri;
            let dz = -(rc + z.component_mul(&ds)).component_div(&s);
            Some((dx, dy, ds, dz))
        };
        let rc_aff = s.component_mul(&z);
        let (_, _, ds_a, dz_a) =
            direction(&rc_aff).ok_or_else(|| MdpError::NonConvergence("singular interior-point system".into()))?;
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = if mi > 0 {
            (&s + alpha_aff * &ds_a).dot(&(&z + alpha_aff * &dz_a)) / mi as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };
        let rc = rc_aff + ds_a.component_mul(&dz_a) - DVector::from_element(mi, sigma * mu);
        let (dx, dy, ds, dz) =
            direction(&rc).ok_or_else(|| MdpError::NonConvergence("singular interior-point system".into()))?;
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        x += alpha * dx;
        y += alpha * dy;
        s += alpha * ds;
        z += alpha * dz;
    }
    Err(MdpError::NonConvergence(format!("interior-point solver exceeded {MAX_ITERATIONS} iterations")))
}
