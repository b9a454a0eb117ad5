//! Operator-splitting solver: Ruiz equilibration, adaptive penalty, and an
//! active-set polishing step on the identified constraint set.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::qp::ldl::{solve_refined, DenseSym, LdlFactor};
use crate::qp::sparse::SparseMatrix;
use crate::qp::{kkt_residuals, QpProblem, QpSolution, SolveStatus, ToleranceSpec};

const RUIZ_ITERS: usize = 10;
const SIGMA: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const CHECK_INTERVAL: usize = 25;
const ADAPT_INTERVAL: usize = 100;
const PIVOT_FLOOR: f64 = 1e-13;
const EPS_INFEAS: f64 = 1e-9;

/// Cholesky probe with the spec'd 1e-10 jitter; rejects quadratic terms with
/// eigenvalues below roughly -1e-9.
pub(crate) fn verify_psd(p: &SparseMatrix) -> Result<()> {
    let n = p.nrows;
    if n == 0 {
        return Ok(());
    }
    let scale = p.data.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    let jitter = 1e-10 * scale;
    let mut dense = vec![0.0; n * n];
    for r in 0..n {
        let (cols, vals) = p.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            dense[r * n + c] = v;
        }
    }
    if !cholesky_in_place(&mut dense, n, 0.0) {
        log::debug!("quadratic term required diagonal jitter {jitter:.1e} to factor");
        let mut jittered = vec![0.0; n * n];
        for r in 0..n {
            let (cols, vals) = p.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                jittered[r * n + c] = v;
            }
        }
        if !cholesky_in_place(&mut jittered, n, jitter) {
            return Err(Error::NotPsd(format!(
                "Cholesky failed even with diagonal jitter {jitter:.1e}"
            )));
        }
    }
    Ok(())
}

fn cholesky_in_place(a: &mut [f64], n: usize, shift: f64) -> bool {
    for i in 0..n {
        a[i * n + i] += shift;
    }
    for j in 0..n {
        for k in 0..j {
            let l = a[j * n + k];
            if l != 0.0 {
                for i in j..n {
                    a[i * n + j] -= a[i * n + k] * l;
                }
            }
        }
        let d = a[j * n + j];
        if d <= 0.0 {
            return false;
        }
        let ds = d.sqrt();
        for i in j..n {
            a[i * n + j] /= ds;
        }
    }
    true
}

/// Constraint system with variable bounds appended as identity rows.
pub(crate) struct Extended {
    pub a: SparseMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    pub m_orig: usize,
    /// Variable index behind each appended bound row.
    pub bound_vars: Vec<usize>,
}

pub(crate) fn extend(p: &QpProblem) -> Extended {
    let n = p.n_vars();
    let m = p.n_rows();
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(p.a.nnz() + n);
    for r in 0..m {
        let (cols, vals) = p.a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            trip.push((r, c, v));
        }
    }
    let mut l = p.lower.clone();
    let mut u = p.upper.clone();
    let mut bound_vars = Vec::new();
    if p.var_lower.is_some() || p.var_upper.is_some() {
        let neg = vec![f64::NEG_INFINITY; n];
        let pos = vec![f64::INFINITY; n];
        let lo = p.var_lower.as_ref().unwrap_or(&neg);
        let hi = p.var_upper.as_ref().unwrap_or(&pos);
        for j in 0..n {
            if lo[j].is_finite() || hi[j].is_finite() {
                trip.push((m + bound_vars.len(), j, 1.0));
                l.push(lo[j]);
                u.push(hi[j]);
                bound_vars.push(j);
            }
        }
    }
    let m_ext = m + bound_vars.len();
    let a = SparseMatrix::from_triplets(m_ext, n, &trip).expect("extend shapes");
    Extended { a, l, u, m_orig: m, bound_vars }
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

/// Modified Ruiz equilibration over [P Aᵀ; A 0] plus cost normalization.
fn ruiz(p: &SparseMatrix, q: &[f64], a: &SparseMatrix) -> (SparseMatrix, Vec<f64>, SparseMatrix, Scaling) {
    let n = q.len();
    let m = a.nrows;
    let mut ps = p.clone();
    let mut qs = q.to_vec();
    let mut as_ = a.clone();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let mut c = 1.0;
    for _ in 0..RUIZ_ITERS {
        let pc = ps.col_abs_max();
        let ac = as_.col_abs_max();
        let mut dj = vec![1.0; n];
        for j in 0..n {
            let mag = pc[j].max(ac[j]);
            if mag > 0.0 {
                dj[j] = 1.0 / mag.sqrt();
            }
        }
        let ar = as_.row_abs_max();
        let mut ei = vec![1.0; m];
        for i in 0..m {
            if ar[i] > 0.0 {
                ei[i] = 1.0 / ar[i].sqrt();
            }
        }
        ps = ps.scaled(&dj, &dj);
        as_ = as_.scaled(&ei, &dj);
        for j in 0..n {
            qs[j] *= dj[j];
            d[j] *= dj[j];
        }
        for i in 0..m {
            e[i] *= ei[i];
        }
        // Cost scaling toward unit curvature.
        let pcols = ps.col_abs_max();
        let p_mean = if n > 0 { pcols.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let q_inf = qs.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        let gamma = 1.0 / p_mean.max(q_inf).max(1e-6).max(1.0);
        if (gamma - 1.0).abs() > 1e-12 {
            for v in ps.data.iter_mut() {
                *v *= gamma;
            }
            for v in qs.iter_mut() {
                *v *= gamma;
            }
            c *= gamma;
        }
    }
    (ps, qs, as_, Scaling { d, e, c })
}

fn assemble_kkt(ps: &SparseMatrix, as_: &SparseMatrix, rho: &[f64]) -> DenseSym {
    let n = ps.nrows;
    let m = as_.nrows;
    let mut kkt = DenseSym::zeros(n + m);
    for r in 0..n {
        let (cols, vals) = ps.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if c >= r {
                kkt.add(r, c, v);
            }
        }
        kkt.set_diag_add(r, SIGMA);
    }
    for r in 0..m {
        let (cols, vals) = as_.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            kkt.add(n + r, c, v);
        }
        kkt.set_diag_add(n + r, -1.0 / rho[r]);
    }
    kkt
}

pub(crate) fn solve(
    prob: &QpProblem,
    tol: &ToleranceSpec,
    warm: Option<(&[f64], &[f64], &[f64])>,
) -> Result<QpSolution> {
    let start = Instant::now();
    let n = prob.n_vars();
    let ext = extend(prob);
    let m = ext.a.nrows;
    let (ps, qs, as_, scal) = ruiz(&prob.p, &prob.q, &ext.a);
    let mut ls = vec![0.0; m];
    let mut us = vec![0.0; m];
    let mut is_eq = vec![false; m];
    for i in 0..m {
        ls[i] = ext.l[i] * scal.e[i];
        us[i] = ext.u[i] * scal.e[i];
        is_eq[i] = ext.u[i] - ext.l[i] <= 1e-12 * ext.u[i].abs().max(1.0);
    }

    let mut rho_base = RHO_INIT;
    let mut adaptations_left = 10usize;
    let rho_vec = |base: f64, is_eq: &[bool]| -> Vec<f64> {
        is_eq
            .iter()
            .map(|&eq| if eq { (base * RHO_EQ_FACTOR).clamp(RHO_MIN, RHO_MAX) } else { base })
            .collect()
    };
    let mut rho = rho_vec(rho_base, &is_eq);
    let mut factor: LdlFactor = assemble_kkt(&ps, &as_, &rho).factor(PIVOT_FLOOR);

    // Scaled iterates.
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    if let Some((wx, wy, wz)) = warm {
        for j in 0..n {
            x[j] = wx[j] / scal.d[j];
        }
        for i in 0..ext.m_orig {
            y[i] = scal.c * wy[i] / scal.e[i];
        }
        for (k, &j) in ext.bound_vars.iter().enumerate() {
            let i = ext.m_orig + k;
            y[i] = scal.c * wz[j] / scal.e[i];
        }
    }
    as_.matvec(&x, &mut z);
    for i in 0..m {
        z[i] = z[i].clamp(ls[i], us[i]);
    }

    let mut rhs = vec![0.0; n + m];
    let mut ax = vec![0.0; m];
    let mut px = vec![0.0; n];
    let mut aty = vec![0.0; n];
    let mut prev_y = y.clone();
    let mut prev_x = x.clone();
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIterations;

    while iterations < tol.max_iter {
        iterations += 1;
        // KKT step.
        for j in 0..n {
            rhs[j] = SIGMA * x[j] - qs[j];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho[i];
        }
        factor.solve_in_place(&mut rhs);
        // Relaxed updates.
        for j in 0..n {
            x[j] = ALPHA * rhs[j] + (1.0 - ALPHA) * x[j];
        }
        for i in 0..m {
            let nu = rhs[n + i];
            let zt = z[i] + (nu - y[i]) / rho[i];
            let zr = ALPHA * zt + (1.0 - ALPHA) * z[i];
            let znew = (zr + y[i] / rho[i]).clamp(ls[i], us[i]);
            y[i] += rho[i] * (zr - znew);
            z[i] = znew;
        }

        if iterations % CHECK_INTERVAL != 0 {
            continue;
        }
        // Residuals.
        as_.matvec(&x, &mut ax);
        ps.matvec(&x, &mut px);
        as_.matvec_t(&y, &mut aty);
        let mut rp_s = 0.0f64;
        let mut rp_u = 0.0f64;
        for i in 0..m {
            let r = (ax[i] - z[i]).abs();
            rp_s = rp_s.max(r);
            rp_u = rp_u.max(r / scal.e[i]);
        }
        let mut rd_s = 0.0f64;
        let mut rd_u = 0.0f64;
        for j in 0..n {
            let r = (px[j] + qs[j] + aty[j]).abs();
            rd_s = rd_s.max(r);
            rd_u = rd_u.max(r / (scal.d[j] * scal.c));
        }
        if rp_u <= tol.eps_feas && rd_u <= tol.eps_dual {
            status = SolveStatus::Optimal;
            break;
        }
        if let Some(limit) = tol.time_limit_secs {
            if start.elapsed().as_secs_f64() > limit {
                break;
            }
        }
        // Infeasibility certificates on the iterate differences.
        if detect_primal_infeasible(&as_, &ls, &us, &y, &prev_y)
            || detect_dual_infeasible(&ps, &qs, &as_, &ls, &us, &x, &prev_x)
        {
            status = SolveStatus::Infeasible;
            break;
        }
        prev_y.copy_from_slice(&y);
        prev_x.copy_from_slice(&x);

        // Penalty adaptation on the unscaled residual balance (the
        // termination criterion is unscaled, so the balance must be too).
        if iterations % ADAPT_INTERVAL == 0 && adaptations_left > 0 {
            let mut ax_n = 0.0f64;
            let mut z_n = 0.0f64;
            for i in 0..m {
                ax_n = ax_n.max((ax[i] / scal.e[i]).abs());
                z_n = z_n.max((z[i] / scal.e[i]).abs());
            }
            let mut px_n = 0.0f64;
            let mut q_n = 0.0f64;
            let mut aty_n = 0.0f64;
            for j in 0..n {
                let s = scal.d[j] * scal.c;
                px_n = px_n.max((px[j] / s).abs());
                q_n = q_n.max((qs[j] / s).abs());
                aty_n = aty_n.max((aty[j] / s).abs());
            }
            let num = rp_u / ax_n.max(z_n).max(1e-12);
            let den = rd_u / px_n.max(q_n).max(aty_n).max(1e-12);
            let ratio = (num / den.max(1e-16)).sqrt();
            let rho_new = (rho_base * ratio).clamp(RHO_MIN, RHO_MAX);
            if rho_new > rho_base * 5.0 || rho_new < rho_base / 5.0 {
                adaptations_left -= 1;
                rho_base = rho_new;
                rho = rho_vec(rho_base, &is_eq);
                factor = assemble_kkt(&ps, &as_, &rho).factor(PIVOT_FLOOR);
            }
        }
    }

    // Unscale.
    let mut x_u = vec![0.0; n];
    for j in 0..n {
        x_u[j] = x[j] * scal.d[j];
    }
    let mut y_ext = vec![0.0; m];
    for i in 0..m {
        y_ext[i] = scal.e[i] * y[i] / scal.c;
    }
    let mut y_u = vec![0.0; ext.m_orig];
    y_u.copy_from_slice(&y_ext[..ext.m_orig]);
    let mut z_u = vec![0.0; n];
    for (k, &j) in ext.bound_vars.iter().enumerate() {
        z_u[j] = y_ext[ext.m_orig + k];
    }

    if status == SolveStatus::MaxIterations {
        as_.matvec(&x, &mut ax);
        ps.matvec(&x, &mut px);
        as_.matvec_t(&y, &mut aty);
        let mut rp = 0.0f64;
        for i in 0..m {
            rp = rp.max((ax[i] - z[i]).abs() / scal.e[i]);
        }
        let mut rd = 0.0f64;
        for j in 0..n {
            rd = rd.max((px[j] + qs[j] + aty[j]).abs() / (scal.d[j] * scal.c));
        }
        log::debug!(
            "splitting hit max_iter: n={n} m={m} rho={rho_base:.2e} r_prim={rp:.2e} r_dual={rd:.2e}"
        );
    }
    let mut sol = QpSolution {
        objective: prob.objective_at(&x_u),
        x: x_u,
        y: y_u,
        z: z_u,
        status,
        iterations,
        polished: false,
    };
    if status == SolveStatus::Optimal || status == SolveStatus::MaxIterations {
        if let Some(pol) = polish(prob, &ext, &sol, tol) {
            sol = pol;
            sol.iterations = iterations;
        }
    }
    Ok(sol)
}

fn detect_primal_infeasible(
    as_: &SparseMatrix,
    l: &[f64],
    u: &[f64],
    y: &[f64],
    prev_y: &[f64],
) -> bool {
    let m = y.len();
    if m == 0 {
        return false;
    }
    let dy: Vec<f64> = (0..m).map(|i| y[i] - prev_y[i]).collect();
    let dy_norm = dy.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if dy_norm < 1e-12 {
        return false;
    }
    let mut at_dy = vec![0.0; as_.ncols];
    as_.matvec_t(&dy, &mut at_dy);
    let at_norm = at_dy.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if at_norm > EPS_INFEAS * dy_norm {
        return false;
    }
    let mut support = 0.0;
    for i in 0..m {
        if dy[i] > 0.0 {
            if !u[i].is_finite() {
                return false;
            }
            support += u[i] * dy[i];
        } else if dy[i] < 0.0 {
            if !l[i].is_finite() {
                return false;
            }
            support += l[i] * dy[i];
        }
    }
    support < -EPS_INFEAS * dy_norm
}

fn detect_dual_infeasible(
    ps: &SparseMatrix,
    qs: &[f64],
    as_: &SparseMatrix,
    l: &[f64],
    u: &[f64],
    x: &[f64],
    prev_x: &[f64],
) -> bool {
    let n = x.len();
    let dx: Vec<f64> = (0..n).map(|j| x[j] - prev_x[j]).collect();
    let dx_norm = dx.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if dx_norm < 1e-12 {
        return false;
    }
    let mut pdx = vec![0.0; n];
    ps.matvec(&dx, &mut pdx);
    if pdx.iter().fold(0.0f64, |a, &v| a.max(v.abs())) > EPS_INFEAS * dx_norm {
        return false;
    }
    let qdx: f64 = qs.iter().zip(&dx).map(|(a, b)| a * b).sum();
    if qdx >= -EPS_INFEAS * dx_norm {
        return false;
    }
    let mut adx = vec![0.0; as_.nrows];
    as_.matvec(&dx, &mut adx);
    for i in 0..as_.nrows {
        if u[i].is_finite() && adx[i] > EPS_INFEAS * dx_norm {
            return false;
        }
        if l[i].is_finite() && adx[i] < -EPS_INFEAS * dx_norm {
            return false;
        }
    }
    true
}

/// Solves the KKT system on the active set identified by the dual signs and
/// keeps the result when it certifies at the requested tolerances. The
/// active set is cleaned up over a few rounds: rows whose polished dual has
/// the wrong sign are dropped and rows the polished point violates are
/// added.
fn polish(
    prob: &QpProblem,
    ext: &Extended,
    sol: &QpSolution,
    tol: &ToleranceSpec,
) -> Option<QpSolution> {
    let n = prob.n_vars();
    let m = ext.a.nrows;
    // Collect extended duals back into one vector.
    let mut y_ext = vec![0.0; m];
    y_ext[..ext.m_orig].copy_from_slice(&sol.y);
    for (k, &j) in ext.bound_vars.iter().enumerate() {
        y_ext[ext.m_orig + k] = sol.z[j];
    }
    let y_norm = y_ext.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let thresh = 1e-10 * y_norm.max(1.0);

    let is_eq =
        |i: usize| ext.u[i] - ext.l[i] <= 1e-12 * ext.u[i].abs().max(1.0);
    // side: +1 upper-active, −1 lower-active, 0 equality
    let mut active: Vec<(usize, i8)> = Vec::new();
    for i in 0..m {
        if is_eq(i) {
            active.push((i, 0));
        } else if y_ext[i] > thresh && ext.u[i].is_finite() {
            active.push((i, 1));
        } else if y_ext[i] < -thresh && ext.l[i].is_finite() {
            active.push((i, -1));
        }
    }
    if n + active.len() > 6000 {
        return None;
    }

    let p_scale = prob.p.data.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    let delta = 1e-9 * p_scale;
    let feas_tol = 1e-9;
    let mut xv: Vec<f64> = Vec::new();
    let mut solved_active: Vec<(usize, i8)> = Vec::new();
    for _round in 0..5 {
        let na = active.len();
        let dim = n + na;
        let mut kkt_true = DenseSym::zeros(dim);
        let mut kkt_reg = DenseSym::zeros(dim);
        for r in 0..n {
            let (cols, vals) = prob.p.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if c >= r {
                    kkt_true.add(r, c, v);
                    kkt_reg.add(r, c, v);
                }
            }
        }
        for (k, &(row, _)) in active.iter().enumerate() {
            let (cols, vals) = ext.a.row(row);
            for (&c, &v) in cols.iter().zip(vals) {
                kkt_true.add(n + k, c, v);
                kkt_reg.add(n + k, c, v);
            }
        }
        for j in 0..n {
            kkt_reg.set_diag_add(j, delta);
        }
        for k in 0..na {
            kkt_reg.set_diag_add(n + k, -delta);
        }
        let factor = kkt_reg.factor(PIVOT_FLOOR);
        let mut rhs = vec![0.0; dim];
        for j in 0..n {
            rhs[j] = -prob.q[j];
        }
        for (k, &(row, side)) in active.iter().enumerate() {
            rhs[n + k] = if side > 0 { ext.u[row] } else { ext.l[row] };
        }
        xv = solve_refined(&kkt_true, &factor, &rhs, 6);
        solved_active = active.clone();

        // Clean up: drop wrong-sign duals, add violated rows.
        let mut changed = false;
        let mut next: Vec<(usize, i8)> = Vec::new();
        let mut in_set = vec![false; m];
        for (k, &(row, side)) in active.iter().enumerate() {
            let nu = xv[n + k];
            let keep = match side {
                0 => true,
                1 => nu >= -thresh,
                _ => nu <= thresh,
            };
            if keep {
                next.push((row, side));
                in_set[row] = true;
            } else {
                changed = true;
            }
        }
        let mut ax = vec![0.0; m];
        ext.a.matvec(&xv[..n], &mut ax);
        for i in 0..m {
            if in_set[i] || is_eq(i) {
                continue;
            }
            let scale = 1.0 + ax[i].abs();
            if ext.l[i].is_finite() && ax[i] < ext.l[i] - feas_tol * scale {
                next.push((i, -1));
                changed = true;
            } else if ext.u[i].is_finite() && ax[i] > ext.u[i] + feas_tol * scale {
                next.push((i, 1));
                changed = true;
            }
        }
        if !changed {
            break;
        }
        active = next;
        active.sort_by_key(|&(row, _)| row);
    }
    if xv.len() < n {
        return None;
    }

    let mut y_pol_ext = vec![0.0; m];
    for (k, &(row, _)) in solved_active.iter().enumerate() {
        y_pol_ext[row] = xv[n + k];
    }
    let mut y_pol = vec![0.0; ext.m_orig];
    y_pol.copy_from_slice(&y_pol_ext[..ext.m_orig]);
    let mut z_pol = vec![0.0; n];
    for (k, &j) in ext.bound_vars.iter().enumerate() {
        z_pol[j] = y_pol_ext[ext.m_orig + k];
    }
    let candidate = QpSolution {
        objective: prob.objective_at(&xv[..n]),
        x: xv[..n].to_vec(),
        y: y_pol,
        z: z_pol,
        status: SolveStatus::Optimal,
        iterations: sol.iterations,
        polished: true,
    };
    let rep_new = kkt_residuals(prob, &candidate).ok()?;
    let rep_old = kkt_residuals(prob, sol).ok()?;
    let new_score = rep_new.primal_inf.max(rep_new.dual_inf);
    let old_score = rep_old.primal_inf.max(rep_old.dual_inf);
    // A sign-infeasible dual (complementarity violation against an infinite
    // bound) disqualifies the polished point outright.
    let comp_ok = rep_new.comp_slack <= rep_old.comp_slack.max(1e-6);
    if rep_new.primal_inf <= tol.eps_feas
        && rep_new.dual_inf <= tol.eps_dual
        && new_score <= old_score
        && comp_ok
    {
        Some(candidate)
    } else {
        None
    }
}
