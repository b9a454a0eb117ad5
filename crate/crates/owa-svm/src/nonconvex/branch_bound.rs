//! Branch and bound over the sample-to-position assignment binaries.
//!
//! Nodes relax z to [0,1] boxes (tightened by fixing decisions plus
//! propagation over the row/column sum structure), bound with the QP
//! relaxation, and harvest incumbents by re-solving with z pinned to the
//! permutation that sorts the relaxation's deviations. Depth-first with a
//! best-bound restart every 500 nodes; branching picks the most fractional
//! assignment entry.

use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::nonconvex::bounds::compute_bounds;
use crate::nonconvex::{AssignmentMatrix, NcOwaSolution, NcPrimal};
use crate::qp::{kkt_residuals, QpProblem, SolveStatus, SparseMatrix, ToleranceSpec};
use crate::svm::app_owa::deviation_positions;
use crate::svm::{
    bias_from_scores, certified_solve, labeled_quadratic, solve_soft_margin_dual, KktAggregate,
};
use crate::weights::OwaWeights;

/// Search limits and knobs; defaults follow the documented budget.
#[derive(Debug, Clone)]
pub struct BbOptions {
    pub node_limit: usize,
    pub time_limit_secs: f64,
    pub rel_gap: f64,
    pub qp_tol: ToleranceSpec,
    /// Override the desk-scale size guard.
    pub force: bool,
    /// Use max λ instead of the last λ in the big-M auxiliary's quadratic
    /// bound (more conservative for non-monotone weights).
    pub use_max_lambda: bool,
    /// Optional node-trace sink: one line per node.
    pub trace_path: Option<std::path::PathBuf>,
}

impl Default for BbOptions {
    fn default() -> Self {
        BbOptions {
            node_limit: 200_000,
            time_limit_secs: 600.0,
            rel_gap: 1e-5,
            qp_tol: ToleranceSpec::default(),
            force: false,
            use_max_lambda: false,
            trace_path: None,
        }
    }
}

const EXACT_MAX_N: usize = 120;
const INTEGRALITY_TOL: f64 = 1e-6;
const RESTART_INTERVAL: usize = 500;

enum NcForm<'a> {
    Linear { x: ArrayView2<'a, f64> },
    Kernel { gram: &'a GramMatrix },
}

struct NcAssembler<'a> {
    form: NcForm<'a>,
    y: &'a [i8],
    c: f64,
    lambda: &'a [f64],
    m_big: f64,
    b_bounds: Option<(f64, f64)>,
    n: usize,
    head: usize,
    off_b: usize,
    off_xi: usize,
    off_theta: usize,
    off_z: usize,
    nv: usize,
    p: SparseMatrix,
    a: SparseMatrix,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
}

impl<'a> NcAssembler<'a> {
    fn new(
        form: NcForm<'a>,
        y: &'a [i8],
        c: f64,
        lambda: &'a [f64],
        m_big: f64,
        b_bounds: Option<(f64, f64)>,
    ) -> Result<Self> {
        let n = y.len();
        let head = match &form {
            NcForm::Linear { x } => x.ncols(),
            NcForm::Kernel { .. } => n,
        };
        let off_b = head;
        let off_xi = head + 1;
        let off_theta = off_xi + n;
        let off_z = off_theta + n;
        let nv = off_z + n * n;

        let mut p_trip = Vec::new();
        match &form {
            NcForm::Linear { .. } => {
                for j in 0..head {
                    p_trip.push((j, j, 1.0));
                }
            }
            NcForm::Kernel { gram } => {
                let q_block = labeled_quadratic(gram, y);
                for r in 0..n {
                    let (cols, vals) = q_block.row(r);
                    for (&cc, &v) in cols.iter().zip(vals) {
                        p_trip.push((r, cc, v));
                    }
                }
            }
        }
        let p = SparseMatrix::from_triplets(nv, nv, &p_trip)?;

        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        let mut row_lower = Vec::new();
        let mut row_upper = Vec::new();
        let mut row = 0usize;
        // Margins.
        for i in 0..n {
            let yi = f64::from(y[i]);
            match &form {
                NcForm::Linear { x } => {
                    for j in 0..head {
                        let v = yi * x[[i, j]];
                        if v != 0.0 {
                            trip.push((row, j, v));
                        }
                    }
                }
                NcForm::Kernel { gram } => {
                    for j in 0..n {
                        let v = yi * f64::from(y[j]) * gram.values[[i, j]];
                        if v != 0.0 {
                            trip.push((row, j, v));
                        }
                    }
                }
            }
            trip.push((row, off_b, yi));
            trip.push((row, off_xi + i, 1.0));
            row_lower.push(1.0);
            row_upper.push(f64::INFINITY);
            row += 1;
        }
        // Position links: θ_k − ξ_i − M Σ_{j≤k} z_ij ≥ −M.
        for i in 0..n {
            for k in 0..n {
                trip.push((row, off_theta + k, 1.0));
                trip.push((row, off_xi + i, -1.0));
                for j in 0..=k {
                    trip.push((row, off_z + i * n + j, -m_big));
                }
                row_lower.push(-m_big);
                row_upper.push(f64::INFINITY);
                row += 1;
            }
        }
        // Column sums and (strengthening) row sums are one.
        for j in 0..n {
            for i in 0..n {
                trip.push((row, off_z + i * n + j, 1.0));
            }
            row_lower.push(1.0);
            row_upper.push(1.0);
            row += 1;
        }
        for i in 0..n {
            for j in 0..n {
                trip.push((row, off_z + i * n + j, 1.0));
            }
            row_lower.push(1.0);
            row_upper.push(1.0);
            row += 1;
        }
        // θ monotone (value-preserving at integral assignments).
        for k in 1..n {
            trip.push((row, off_theta + k, 1.0));
            trip.push((row, off_theta + k - 1, -1.0));
            row_lower.push(0.0);
            row_upper.push(f64::INFINITY);
            row += 1;
        }
        // Σθ ≥ Σξ: every position k pins θ_k above the deviation of the
        // sample assigned there, so the sums compare at any binary z. This
        // row carries no big-M and keeps the root relaxation honest.
        for k in 0..n {
            trip.push((row, off_theta + k, 1.0));
            trip.push((row, off_xi + k, -1.0));
        }
        row_lower.push(0.0);
        row_upper.push(f64::INFINITY);
        row += 1;
        let a = SparseMatrix::from_triplets(row, nv, &trip)?;
        Ok(NcAssembler {
            form,
            y,
            c,
            lambda,
            m_big,
            b_bounds,
            n,
            head,
            off_b,
            off_xi,
            off_theta,
            off_z,
            nv,
            p,
            a,
            row_lower,
            row_upper,
        })
    }

    fn assemble(&self, z_lo: &[f64], z_hi: &[f64]) -> QpProblem {
        let mut q = vec![0.0; self.nv];
        for k in 0..self.n {
            q[self.off_theta + k] = self.c * self.lambda[k];
        }
        let mut var_lower = vec![f64::NEG_INFINITY; self.nv];
        let mut var_upper = vec![f64::INFINITY; self.nv];
        if let Some((lo, hi)) = self.b_bounds {
            var_lower[self.off_b] = lo;
            var_upper[self.off_b] = hi;
        }
        for i in 0..self.n {
            var_lower[self.off_xi + i] = 0.0;
            var_lower[self.off_theta + i] = 0.0;
        }
        for s in 0..self.n * self.n {
            var_lower[self.off_z + s] = z_lo[s];
            var_upper[self.off_z + s] = z_hi[s];
        }
        QpProblem {
            p: self.p.clone(),
            q,
            a: self.a.clone(),
            lower: self.row_lower.clone(),
            upper: self.row_upper.clone(),
            var_lower: Some(var_lower),
            var_upper: Some(var_upper),
        }
    }
}

fn propagate(z_lo: &mut [f64], z_hi: &mut [f64], n: usize) -> bool {
    loop {
        let mut changed = false;
        for axis in 0..2 {
            for a in 0..n {
                let idx = |b: usize| if axis == 0 { a * n + b } else { b * n + a };
                let mut ones = 0usize;
                let mut possible = 0usize;
                let mut last_possible = 0usize;
                for b in 0..n {
                    let s = idx(b);
                    if z_lo[s] > 0.5 {
                        ones += 1;
                    }
                    if z_hi[s] > 0.5 {
                        possible += 1;
                        last_possible = b;
                    }
                    if z_lo[s] > z_hi[s] {
                        return false;
                    }
                }
                if ones > 1 || possible == 0 {
                    return false;
                }
                if ones == 1 {
                    for b in 0..n {
                        let s = idx(b);
                        if z_lo[s] <= 0.5 && z_hi[s] > 0.5 {
                            z_hi[s] = 0.0;
                            changed = true;
                        }
                    }
                } else if possible == 1 {
                    let s = idx(last_possible);
                    if z_lo[s] <= 0.5 {
                        z_lo[s] = 1.0;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return true;
        }
    }
}

struct Incumbent {
    value: f64,
    head: Vec<f64>,
    b: f64,
    xi: Vec<f64>,
    theta: Vec<f64>,
    positions: Vec<usize>,
}

struct Node {
    z_lo: Vec<f64>,
    z_hi: Vec<f64>,
    depth: usize,
    bound: f64,
    warm: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

fn solve_bb(
    asm: &NcAssembler,
    opts: &BbOptions,
    seed_positions: Option<&[usize]>,
) -> Result<NcOwaSolution> {
    let n = asm.n;
    let start = Instant::now();
    let mut trace: Option<std::io::BufWriter<std::fs::File>> = match &opts.trace_path {
        Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => None,
    };
    let mut agg = KktAggregate::default();
    let mut tol = opts.qp_tol.clone();
    // Node relaxations fall back to the dense active-set solver early
    // rather than grinding the splitting iteration on degenerate geometry.
    tol.max_iter = tol.max_iter.min(30_000);
    let mut incumbent: Option<Incumbent> = None;
    let mut tried_perms: HashSet<Vec<usize>> = HashSet::new();
    let mut nodes = 0usize;
    let mut pops = 0usize;
    let mut hit_limit = false;

    let gap_eps = |inc: f64| opts.rel_gap * inc.abs().max(1.0);

    // Pinned-permutation solve shared by the seed and the node heuristic.
    let mut heuristic = |positions: &[usize],
                         tried: &mut HashSet<Vec<usize>>,
                         incumbent: &mut Option<Incumbent>,
                         agg: &mut KktAggregate,
                         tol: &mut ToleranceSpec|
     -> Result<()> {
        if !tried.insert(positions.to_vec()) {
            return Ok(());
        }
        let assignment = AssignmentMatrix::from_positions(positions);
        let mut z_lo = vec![0.0; n * n];
        let mut z_hi = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if assignment.z[[i, j]] > 0.5 {
                    z_lo[i * n + j] = 1.0;
                    z_hi[i * n + j] = 1.0;
                }
            }
        }
        let prob = asm.assemble(&z_lo, &z_hi);
        let sol = certified_solve(&prob, tol, None, agg)?;
        tol.assume_psd = true;
        let value = prob.objective_at(&sol.x);
        let better = incumbent.as_ref().map_or(true, |inc| value < inc.value);
        if better {
            *incumbent = Some(Incumbent {
                value,
                head: sol.x[..asm.head].to_vec(),
                b: sol.x[asm.off_b],
                xi: sol.x[asm.off_xi..asm.off_xi + n].to_vec(),
                theta: sol.x[asm.off_theta..asm.off_theta + n].to_vec(),
                positions: positions.to_vec(),
            });
        }
        Ok(())
    };

    if let Some(seed) = seed_positions {
        heuristic(seed, &mut tried_perms, &mut incumbent, &mut agg, &mut tol)?;
    }

    let root = Node {
        z_lo: vec![0.0; n * n],
        z_hi: vec![1.0; n * n],
        depth: 0,
        bound: f64::NEG_INFINITY,
        warm: None,
    };
    let mut stack = vec![root];

    while !stack.is_empty() {
        if nodes >= opts.node_limit || start.elapsed().as_secs_f64() > opts.time_limit_secs {
            hit_limit = true;
            break;
        }
        pops += 1;
        let node = if pops % RESTART_INTERVAL == 0 {
            // Best-bound restart: pull the most promising open node.
            let best = stack
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.bound.partial_cmp(&b.1.bound).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            stack.swap_remove(best)
        } else {
            stack.pop().unwrap()
        };
        nodes += 1;

        if let Some(inc) = &incumbent {
            if node.bound >= inc.value - gap_eps(inc.value) {
                continue;
            }
        }
        let prob = asm.assemble(&node.z_lo, &node.z_hi);
        let warm = node.warm.as_ref().map(|(x, y, z)| (x.as_slice(), y.as_slice(), z.as_slice()));
        let sol = match crate::qp::solve_qp_warm(&prob, &tol, warm) {
            Ok(s) => s,
            Err(Error::NotPsd(m)) => return Err(Error::NotPsd(m)),
            Err(_) => continue,
        };
        tol.assume_psd = true;
        let reliable = sol.status == SolveStatus::Optimal;
        if reliable {
            agg.absorb(&kkt_residuals(&prob, &sol)?);
        }
        let obj = prob.objective_at(&sol.x);
        let bound = if reliable {
            node.bound.max(obj - 1e-8 * (1.0 + obj.abs()))
        } else {
            node.bound
        };
        if let Some(inc) = &incumbent {
            if bound >= inc.value - gap_eps(inc.value) {
                if let Some(t) = trace.as_mut() {
                    writeln!(t, "node {nodes} depth {} bound {bound:.9e} pruned", node.depth)?;
                }
                continue;
            }
        }

        let z_part = &sol.x[asm.off_z..asm.off_z + n * n];
        let integral = z_part.iter().all(|&v| v.min(1.0 - v) < INTEGRALITY_TOL);
        if integral && reliable {
            let mut z = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    z[[i, j]] = z_part[i * n + j].round();
                }
            }
            let positions = AssignmentMatrix { z, relaxed: false }.positions();
            heuristic(&positions, &mut tried_perms, &mut incumbent, &mut agg, &mut tol)?;
            if let Some(t) = trace.as_mut() {
                writeln!(
                    t,
                    "node {nodes} depth {} bound {bound:.9e} integral incumbent {:.9e}",
                    node.depth,
                    incumbent.as_ref().map(|i| i.value).unwrap_or(f64::NAN)
                )?;
            }
            continue;
        }

        // Incumbent heuristic: pin the permutation sorting the relaxation's
        // deviations.
        let xi = &sol.x[asm.off_xi..asm.off_xi + n];
        let positions = deviation_positions(xi);
        heuristic(&positions, &mut tried_perms, &mut incumbent, &mut agg, &mut tol)?;
        if let Some(inc) = &incumbent {
            if bound >= inc.value - gap_eps(inc.value) {
                continue;
            }
        }

        // Branch on the most fractional unfixed entry.
        let mut pick = None;
        let mut best_frac = INTEGRALITY_TOL;
        for s in 0..n * n {
            if node.z_hi[s] - node.z_lo[s] > 0.5 {
                let v = z_part[s].clamp(0.0, 1.0);
                let frac = v.min(1.0 - v);
                if frac > best_frac {
                    best_frac = frac;
                    pick = Some(s);
                }
            }
        }
        let Some(pick) = pick else {
            // Fractional-free but unreliable solve: rounding fallback.
            continue;
        };
        if let Some(t) = trace.as_mut() {
            writeln!(
                t,
                "node {nodes} depth {} bound {bound:.9e} incumbent {:.9e} branch z[{}][{}]",
                node.depth,
                incumbent.as_ref().map(|i| i.value).unwrap_or(f64::NAN),
                pick / n,
                pick % n
            )?;
        }
        let warm_child = Some((sol.x.clone(), sol.y.clone(), sol.z.clone()));
        for fix_one in [false, true] {
            let mut z_lo = node.z_lo.clone();
            let mut z_hi = node.z_hi.clone();
            if fix_one {
                z_lo[pick] = 1.0;
            } else {
                z_hi[pick] = 0.0;
            }
            if propagate(&mut z_lo, &mut z_hi, n) {
                stack.push(Node {
                    z_lo,
                    z_hi,
                    depth: node.depth + 1,
                    bound,
                    warm: warm_child.clone(),
                });
            }
        }
    }

    let Some(inc) = incumbent else {
        return Err(Error::NodeLimitReached {
            limit: opts.node_limit,
            incumbent: f64::NAN,
            gap: f64::INFINITY,
        });
    };
    let open_lb = stack
        .iter()
        .map(|nd| nd.bound)
        .fold(f64::INFINITY, f64::min)
        .min(if hit_limit { f64::INFINITY } else { inc.value });
    let lb = if stack.is_empty() { inc.value } else { open_lb.min(inc.value) };
    let gap = ((inc.value - lb) / inc.value.abs().max(1.0)).max(0.0);
    if hit_limit {
        log::warn!(
            "branch and bound stopped at limits: nodes {nodes}, incumbent {:.6e}, gap {gap:.3e}",
            inc.value
        );
    }

    let primal = match asm.form {
        NcForm::Linear { .. } => NcPrimal::Linear { w: inc.head.clone() },
        NcForm::Kernel { .. } => NcPrimal::Kernel { alpha: inc.head.clone() },
    };
    Ok(NcOwaSolution {
        primal,
        b: inc.b,
        xi: inc.xi,
        theta: inc.theta,
        z: AssignmentMatrix::from_positions(&inc.positions),
        objective: inc.value,
        gap,
        nodes,
        certificates: agg,
    })
}

fn guard_size(n: usize, force: bool) -> Result<()> {
    if n > EXACT_MAX_N && !force {
        return Err(Error::TooLarge {
            n,
            limit: EXACT_MAX_N,
            hint: "exact mixed-integer training at this size needs --force or subsampling",
        });
    }
    Ok(())
}

/// Exact linear-kernel training for arbitrary nonnegative weights: the
/// mixed-integer program over (w, b, ξ, θ, z) with big-M position links.
pub fn train_nc_owa(
    x: ArrayView2<f64>,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    m_big: Option<f64>,
    opts: &BbOptions,
) -> Result<NcOwaSolution> {
    let n = y.len();
    if weights.len() != n {
        return Err(Error::LengthMismatch { weights: weights.len(), deviations: n });
    }
    guard_size(n, opts.force)?;
    let m = m_big.unwrap_or_else(|| crate::nonconvex::default_big_m(x));
    let asm = NcAssembler::new(NcForm::Linear { x: x.view() }, y, c, &weights.lambda, m, None)?;
    solve_bb(&asm, opts, None)
}

/// Kernel training by the staged method: plain dual for an incumbent, bias
/// bounds and big-M from the auxiliaries, then branch and bound with those
/// bounds installed.
pub fn train_nc_owa_kernel(
    gram: &GramMatrix,
    y: &[i8],
    c: f64,
    weights: &OwaWeights,
    opts: &BbOptions,
) -> Result<NcOwaSolution> {
    let n = y.len();
    if weights.len() != n {
        return Err(Error::LengthMismatch { weights: weights.len(), deviations: n });
    }
    guard_size(n, opts.force)?;
    let mut agg = KktAggregate::default();
    let tol = opts.qp_tol.clone();

    // Step 1: classical soft-margin dual.
    let q_block = labeled_quadratic(gram, y);
    let caps = vec![c; n];
    let step1 = solve_soft_margin_dual(&q_block, y, &caps, &tol, None, &mut agg)?;
    let mut scores = vec![0.0; n];
    for r in 0..n {
        for i in 0..n {
            scores[r] += step1.alpha[i] * f64::from(y[i]) * gram.values[[i, r]];
        }
    }
    let majority = crate::svm::l2::majority_class(y);
    let b1 = bias_from_scores(&step1.alpha, &caps, y, &scores, majority).unwrap_or(0.0);

    // Step 2: deviations of the incumbent, sorted ascending.
    let xi1: Vec<f64> =
        (0..n).map(|i| (1.0 - f64::from(y[i]) * (scores[i] + b1)).max(0.0)).collect();
    let positions = deviation_positions(&xi1);
    let mut theta_sorted = xi1.clone();
    theta_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Step 3: incumbent objective.
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += f64::from(y[i]) * f64::from(y[j]) * step1.alpha[i] * step1.alpha[j]
                * gram.values[[i, j]];
        }
    }
    let ub_star = 0.5 * quad
        + c * weights
            .lambda
            .iter()
            .zip(theta_sorted.iter())
            .map(|(l, t)| l * t)
            .sum::<f64>();

    // Steps 4–5: bias window and big-M.
    let bundle = compute_bounds(gram, y, c, weights, ub_star, opts.use_max_lambda, &tol)?;

    // Step 6: exact search with bounds installed.
    let asm = NcAssembler::new(
        NcForm::Kernel { gram },
        y,
        c,
        &weights.lambda,
        bundle.ub_m,
        Some((bundle.l_b, bundle.u_b)),
    )?;
    let mut sol = solve_bb(&asm, opts, Some(&positions))?;
    sol.certificates.merge(&agg);
    Ok(sol)
}
