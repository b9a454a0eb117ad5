use ndarray::Array2;
use owa_svm::kernel::{gram, KernelSpec};
use owa_svm::nonconvex::{train_nc_owa, train_nc_owa_kernel, BbOptions};
use owa_svm::weights::OwaWeights;
use rand::Rng;
use rand::SeedableRng;

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
    let w = OwaWeights::uniform(n);
    let mut opts = BbOptions::default();
    opts.node_limit = 200;
    opts.time_limit_secs = 60.0;
    opts.trace_path = Some("/tmp/bb_trace.txt".into());
    let t0 = std::time::Instant::now();
    match train_nc_owa(x.view(), &y, 1.0, &w, None, &opts) {
        Ok(sol) => eprintln!(
            "linear: obj {:.6} gap {:.2e} nodes {} in {:.1}s",
            sol.objective, sol.gap, sol.nodes, t0.elapsed().as_secs_f64()
        ),
        Err(e) => eprintln!("linear failed: {e}"),
    }
    let g = gram(&KernelSpec::Linear, x.view()).unwrap();
    // Probe the auxiliary bound problems separately.
    let l2 = owa_svm::svm::train_l2_svm(&g, x.view(), &y, 1.0).unwrap();
    eprintln!("l2 objective: {:.6}", l2.objective);
    let scores = l2.training_scores(&g);
    let xi: Vec<f64> = (0..n).map(|i| (1.0 - f64::from(y[i]) * scores[i]).max(0.0)).collect();
    let mut sorted = xi.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut quad = 0.0;
    for i in 0..n { for j in 0..n {
        quad += f64::from(y[i]) * f64::from(y[j]) * l2.alpha[i] * l2.alpha[j] * g.values[[i, j]];
    } }
    let ub = 0.5 * quad + w.lambda.iter().zip(&sorted).map(|(l, t)| l * t).sum::<f64>();
    eprintln!("ub* = {ub:.6}");
    let t0 = std::time::Instant::now();
    match owa_svm::nonconvex::compute_bounds(&g, &y, 1.0, &w, ub, false, &owa_svm::qp::ToleranceSpec::default()) {
        Ok(b) => eprintln!("bounds: l_b {:.4} u_b {:.4} ub_m {:.4} in {:.1}s", b.l_b, b.u_b, b.ub_m, t0.elapsed().as_secs_f64()),
        Err(e) => eprintln!("bounds failed: {e}"),
    }
    let t0 = std::time::Instant::now();
    match train_nc_owa_kernel(&g, &y, 1.0, &w, &opts) {
        Ok(sol) => eprintln!(
            "kernel: obj {:.6} gap {:.2e} nodes {} in {:.1}s",
            sol.objective, sol.gap, sol.nodes, t0.elapsed().as_secs_f64()
        ),
        Err(e) => eprintln!("kernel failed: {e}"),
    }
}

#[allow(dead_code)]
fn unused() {}
