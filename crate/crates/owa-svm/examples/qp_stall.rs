use ndarray::Array2;
use owa_svm::kernel::{gram, KernelSpec};
use owa_svm::qp::{solve_qp, QpProblem, SparseMatrix, ToleranceSpec};
use rand::Rng;
use rand::SeedableRng;

// Rebuilds the bias/big-M auxiliary system that stalls: minimize
// ½αᵀQα + Cλθ over margins, Σαy = 0, θ ≥ ξ_i, with boxes.
fn main() {
    env_logger::init();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    let n = 8;
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::new();
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        for j in 0..2 {
            x[[i, j]] = rng.gen_range(-1.0..1.0) + 0.3 * f64::from(label);
        }
        y.push(label);
    }
    let g = gram(&KernelSpec::Linear, x.view()).unwrap();
    let c = 1.0;
    let lambda_coeff = 1.0;
    let off_b = n;
    let off_xi = n + 1;
    let off_theta = off_xi + n;
    let nv = off_theta + 1;
    let mut p_trip = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let mut v = f64::from(y[i]) * f64::from(y[j]) * g.values[[i, j]];
            if i == j {
                v += 1e-10;
            }
            p_trip.push((i, j, v));
        }
    }
    let p = SparseMatrix::from_triplets(nv, nv, &p_trip).unwrap();
    let mut q = vec![0.0; nv];
    q[off_theta] = c * lambda_coeff;
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        trip.push((0, i, f64::from(y[i])));
    }
    for i in 0..n {
        let r = 1 + i;
        let yi = f64::from(y[i]);
        for j in 0..n {
            let v = yi * f64::from(y[j]) * g.values[[i, j]];
            if v != 0.0 {
                trip.push((r, j, v));
            }
        }
        trip.push((r, off_b, yi));
        trip.push((r, off_xi + i, 1.0));
    }
    for i in 0..n {
        let r = 1 + n + i;
        trip.push((r, off_theta, 1.0));
        trip.push((r, off_xi + i, -1.0));
    }
    let m_rows = 1 + 2 * n;
    let a = SparseMatrix::from_triplets(m_rows, nv, &trip).unwrap();
    let mut lower = vec![0.0];
    let mut upper = vec![0.0];
    lower.extend(vec![1.0; n]);
    upper.extend(vec![f64::INFINITY; n]);
    lower.extend(vec![0.0; n]);
    upper.extend(vec![f64::INFINITY; n]);
    let alpha_cap = c * 8.0;
    let mut var_lower = vec![0.0; nv];
    let mut var_upper = vec![alpha_cap; nv];
    var_lower[off_b] = f64::NEG_INFINITY;
    var_upper[off_b] = f64::INFINITY;
    for s in off_xi..=off_theta {
        var_lower[s] = 0.0;
        var_upper[s] = f64::INFINITY;
    }
    let prob = QpProblem {
        p,
        q,
        a,
        lower,
        upper,
        var_lower: Some(var_lower),
        var_upper: Some(var_upper),
    };
    let t0 = std::time::Instant::now();
    let sol = solve_qp(&prob, &ToleranceSpec::default()).unwrap();
    println!(
        "seed: status {:?} obj {:.6} iters {} polished {} in {:.2}s",
        sol.status,
        sol.objective,
        sol.iterations,
        sol.polished,
        t0.elapsed().as_secs_f64()
    );
    // Now the stalling variant: b <= -1.0366, warm-started from the seed.
    let mut prob2 = prob.clone();
    prob2.var_upper.as_mut().unwrap()[off_b] = -1.0365959799474622;
    for (name, warm) in [
        ("cold", None),
        ("warm", Some((sol.x.as_slice(), sol.y.as_slice(), sol.z.as_slice()))),
    ] {
        let t0 = std::time::Instant::now();
        match owa_svm::qp::solve_qp_warm(&prob2, &ToleranceSpec::default(), warm) {
            Ok(s2) => println!(
                "b-bounded {name}: status {:?} obj {:.6} iters {} in {:.2}s",
                s2.status, s2.objective, s2.iterations, t0.elapsed().as_secs_f64()
            ),
            Err(e) => println!("b-bounded {name}: error {e} in {:.2}s", t0.elapsed().as_secs_f64()),
        }
    }
}
