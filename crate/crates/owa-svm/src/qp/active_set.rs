//! Dense active-set QP solver in the dual (Goldfarb–Idnani) style.
//!
//! Starts from the equality-constrained minimum and adds violated
//! inequalities one at a time, taking full or partial steps and dropping
//! blocking constraints as their duals hit zero. Factorizations are
//! recomputed per step, which is fine at the small sizes this solver serves:
//! it is the independent reference for the operator-splitting engine and the
//! fallback when splitting stalls on degenerate instances.

use crate::error::{Error, Result};
use crate::qp::admm::extend;
use crate::qp::ldl::{solve_refined, DenseSym};
use crate::qp::{QpProblem, QpSolution, SolveStatus};

const PIVOT_FLOOR: f64 = 1e-13;
const REG: f64 = 1e-11;

#[derive(Debug, Clone, Copy)]
struct Con {
    /// Row in the extended constraint matrix.
    row: usize,
    /// True when this one-sided constraint comes from the upper bound
    /// (normal is the negated row).
    upper_side: bool,
    eq: bool,
    rhs: f64,
}

struct Workspace {
    n: usize,
    /// Dense normals are never materialized; rows of the extended matrix are
    /// consulted through these triplet views.
    rows: Vec<(Vec<usize>, Vec<f64>)>,
}

impl Workspace {
    fn dot_row(&self, con: &Con, x: &[f64]) -> f64 {
        let (cols, vals) = &self.rows[con.row];
        let s: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        if con.upper_side {
            -s
        } else {
            s
        }
    }

    fn add_normal_into(&self, con: &Con, coeff: f64, out: &mut [f64]) {
        let (cols, vals) = &self.rows[con.row];
        let sign = if con.upper_side { -coeff } else { coeff };
        for (&c, &v) in cols.iter().zip(vals) {
            out[c] += sign * v;
        }
    }
}

/// Solves the QP by the dual active-set method. Requires a (near) strictly
/// convex quadratic term; a tiny diagonal shift is added and the final
/// iterate is re-solved without it on the terminal active set.
pub fn solve_active_set(p: &QpProblem) -> Result<QpSolution> {
    p.validate()?;
    let n = p.n_vars();
    let ext = extend(p);
    let m = ext.a.nrows;

    let mut rows = Vec::with_capacity(m);
    for r in 0..m {
        let (cols, vals) = ext.a.row(r);
        rows.push((cols.to_vec(), vals.to_vec()));
    }
    let ws = Workspace { n, rows };

    let mut eqs: Vec<Con> = Vec::new();
    let mut ineqs: Vec<Con> = Vec::new();
    for i in 0..m {
        let (l, u) = (ext.l[i], ext.u[i]);
        if u - l <= 1e-12 * u.abs().max(1.0) {
            eqs.push(Con { row: i, upper_side: false, eq: true, rhs: l });
            continue;
        }
        if l.is_finite() {
            ineqs.push(Con { row: i, upper_side: false, eq: false, rhs: l });
        }
        if u.is_finite() {
            ineqs.push(Con { row: i, upper_side: true, eq: false, rhs: -u });
        }
    }

    let p_scale = p.p.data.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    let jitter = 1e-9 * p_scale;
    let feas_tol = 1e-9 * (1.0 + ext.u.iter().chain(ext.l.iter()).fold(0.0f64, |a, &v| {
        if v.is_finite() {
            a.max(v.abs())
        } else {
            a
        }
    }));

    // Active working set: indices into `ineqs`, plus all equalities.
    let mut active: Vec<usize> = Vec::new();
    let mut duals: Vec<f64> = Vec::new(); // parallel to active
    let mut eq_duals = vec![0.0; eqs.len()];

    // EQP solve over the current working set. Returns (x, eq duals, active duals).
    let eqp = |active: &[usize], jit: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let na = eqs.len() + active.len();
        let dim = n + na;
        let mut kkt_true = DenseSym::zeros(dim);
        let mut kkt_reg = DenseSym::zeros(dim);
        for r in 0..n {
            let (cols, vals) = p.p.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if c >= r {
                    kkt_true.add(r, c, v);
                    kkt_reg.add(r, c, v);
                }
            }
            kkt_true.set_diag_add(r, jit);
            kkt_reg.set_diag_add(r, jit + REG * p_scale);
        }
        let mut rhs = vec![0.0; dim];
        for j in 0..n {
            rhs[j] = -p.q[j];
        }
        for (k, con) in eqs.iter().chain(active.iter().map(|&i| &ineqs[i])).enumerate() {
            let (cols, vals) = &ws.rows[con.row];
            let sign = if con.upper_side { -1.0 } else { 1.0 };
            for (&c, &v) in cols.iter().zip(vals) {
                kkt_true.add(n + k, c, sign * v);
                kkt_reg.add(n + k, c, sign * v);
            }
            kkt_reg.set_diag_add(n + k, -REG * p_scale);
            rhs[n + k] = con.rhs;
        }
        let sol = solve_refined(&kkt_true, &kkt_reg.factor(PIVOT_FLOOR), &rhs, 5);
        // Stationarity here is Gx + q − Σ μ_k n_k = 0 with the KKT as
        // written: Gx + Nᵀμ = −q, so μ = −(KKT dual block).
        let x = sol[..n].to_vec();
        let mu: Vec<f64> = sol[n..].iter().map(|&v| -v).collect();
        let (eq_mu, act_mu) = mu.split_at(eqs.len());
        (x, eq_mu.to_vec(), act_mu.to_vec())
    };

    let (mut x, mut eqd, _) = eqp(&active, jitter);
    eq_duals.copy_from_slice(&eqd);

    let max_outer = 4 * (ineqs.len() + n) + 40;
    let mut outer = 0;
    let mut status = SolveStatus::Optimal;
    'outer: loop {
        outer += 1;
        if outer > max_outer {
            status = SolveStatus::MaxIterations;
            break;
        }
        // Most violated inactive inequality.
        let mut worst = -feas_tol;
        let mut pick: Option<usize> = None;
        for (ci, con) in ineqs.iter().enumerate() {
            if active.contains(&ci) {
                continue;
            }
            let s = ws.dot_row(con, &x) - con.rhs;
            if s < worst {
                worst = s;
                pick = Some(ci);
            }
        }
        let Some(pidx) = pick else {
            break;
        };
        let pcon = ineqs[pidx];
        let mut u_p = 0.0;

        let max_inner = eqs.len() + ineqs.len() + n + 10;
        let mut inner = 0;
        loop {
            inner += 1;
            if inner > max_inner {
                status = SolveStatus::MaxIterations;
                break 'outer;
            }
            // Direction pair (z, r) from the working-set KKT with the new
            // normal as right-hand side.
            let na = eqs.len() + active.len();
            let dim = n + na;
            let mut kkt_true = DenseSym::zeros(dim);
            let mut kkt_reg = DenseSym::zeros(dim);
            for r in 0..n {
                let (cols, vals) = p.p.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    if c >= r {
                        kkt_true.add(r, c, v);
                        kkt_reg.add(r, c, v);
                    }
                }
                kkt_true.set_diag_add(r, jitter);
                kkt_reg.set_diag_add(r, jitter + REG * p_scale);
            }
            for (k, con) in eqs.iter().chain(active.iter().map(|&i| &ineqs[i])).enumerate() {
                let (cols, vals) = &ws.rows[con.row];
                let sign = if con.upper_side { -1.0 } else { 1.0 };
                for (&c, &v) in cols.iter().zip(vals) {
                    kkt_true.add(n + k, c, sign * v);
                    kkt_reg.add(n + k, c, sign * v);
                }
                kkt_reg.set_diag_add(n + k, -REG * p_scale);
            }
            let mut rhs = vec![0.0; dim];
            ws.add_normal_into(&pcon, 1.0, &mut rhs[..n]);
            let zr = solve_refined(&kkt_true, &kkt_reg.factor(PIVOT_FLOOR), &rhs, 5);
            let z = &zr[..n];
            // r = dual shrink direction for working-set members.
            let r_dir: Vec<f64> = zr[n..].iter().map(|&v| -v).collect();

            let z_norm = z.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            let s_p = ws.dot_row(&pcon, &x) - pcon.rhs;

            // Blocking step over active inequality duals.
            let mut t1 = f64::INFINITY;
            let mut block: Option<usize> = None;
            for (k, _) in active.iter().enumerate() {
                let r_k = r_dir[eqs.len() + k];
                if r_k > 1e-12 {
                    let t = duals[k] / r_k;
                    if t < t1 {
                        t1 = t;
                        block = Some(k);
                    }
                }
            }

            if z_norm <= 1e-11 * (1.0 + x.iter().fold(0.0f64, |a, &v| a.max(v.abs()))) {
                // Dual-only step.
                let Some(bk) = block else {
                    status = SolveStatus::Infeasible;
                    break 'outer;
                };
                for (k, d) in duals.iter_mut().enumerate() {
                    *d -= t1 * r_dir[eqs.len() + k];
                }
                for (k, d) in eq_duals.iter_mut().enumerate() {
                    *d -= t1 * r_dir[k];
                }
                u_p += t1;
                active.remove(bk);
                duals.remove(bk);
                continue;
            }

            let npz = {
                let mut tmp = vec![0.0; n];
                ws.add_normal_into(&pcon, 1.0, &mut tmp);
                tmp.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            if npz <= 0.0 {
                status = SolveStatus::MaxIterations;
                break 'outer;
            }
            let t2 = -s_p / npz;
            let t = t1.min(t2);
            for (xi, zi) in x.iter_mut().zip(z.iter()) {
                *xi += t * zi;
            }
            for (k, d) in duals.iter_mut().enumerate() {
                *d -= t * r_dir[eqs.len() + k];
            }
            for (k, d) in eq_duals.iter_mut().enumerate() {
                *d -= t * r_dir[k];
            }
            u_p += t;
            if t2 <= t1 {
                active.push(pidx);
                duals.push(u_p);
                break;
            }
            let bk = block.expect("finite t1 implies a blocking index");
            active.remove(bk);
            duals.remove(bk);
        }
    }

    // Terminal re-solve without jitter for an unbiased certificate.
    let (x_final, eqd_final, actd_final) = eqp(&active, 0.0);
    let improved = {
        let viol = |xx: &[f64]| {
            ineqs
                .iter()
                .map(|c| (c.rhs - ws.dot_row(c, xx)).max(0.0))
                .fold(0.0f64, f64::max)
        };
        viol(&x_final) <= viol(&x).max(feas_tol)
    };
    if improved {
        x = x_final;
        eqd = eqd_final;
        duals = actd_final;
    } else {
        eqd = eq_duals.clone();
    }

    // Map duals back to the row convention: Px + q + Aᵀy + z = 0 with
    // y > 0 on active upper bounds, y < 0 on active lower bounds.
    let mut y_ext = vec![0.0; m];
    for (k, con) in eqs.iter().enumerate() {
        y_ext[con.row] += -eqd[k];
    }
    for (k, &ci) in active.iter().enumerate() {
        let con = ineqs[ci];
        let u = duals[k];
        y_ext[con.row] += if con.upper_side { u } else { -u };
    }
    let mut y = vec![0.0; ext.m_orig];
    y.copy_from_slice(&y_ext[..ext.m_orig]);
    let mut zb = vec![0.0; n];
    for (k, &j) in ext.bound_vars.iter().enumerate() {
        zb[j] = y_ext[ext.m_orig + k];
    }

    if status == SolveStatus::Infeasible {
        return Err(Error::Infeasible("active-set dual step unbounded".into()));
    }
    Ok(QpSolution {
        objective: p.objective_at(&x),
        x,
        y,
        z: zb,
        status,
        iterations: outer,
        polished: true,
    })
}
