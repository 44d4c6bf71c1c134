use rand::Rng;
use rffid::nn::gradcheck::check;
use rffid::nn::{LossWeights, ModelState, NetworkSpec};
use rffid::rng;

fn small(rows: usize, pool: usize, decoder: bool) -> NetworkSpec {
    NetworkSpec { input_rows: rows, n_classes: 4, filters: 3, dense_units: 6, pool, dropout: 0.0, l2_dense: 0.001, decoder }
}

fn batch(spec: &NetworkSpec, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut g = rng::stream(seed, &[1]);
    let z = (0..n * spec.input_dims()).map(|_| g.random::<f64>()).collect();
    let z_hat = (0..n * spec.input_dims()).map(|_| g.random::<f64>()).collect();
    let labels = (0..n).map(|_| g.random_range(0..spec.n_classes)).collect();
    (z, z_hat, labels)
}

fn run(spec: NetworkSpec) {
    let mut state = ModelState::init(spec, 11).unwrap();
    // Zero biases put ReLUs fed by all-zero features exactly on their kink;
    // check at a generic point instead.
    let mut g = rng::stream(13, &[]);
    for p in state.params.iter_mut().filter(|p| p.name.ends_with(".bias")) {
        p.values.iter_mut().for_each(|v| *v += g.random_range(-0.1..0.1));
    }
    let (z, z_hat, labels) = batch(&spec, 3, 5);
    let res = check(&mut state, &z, &z_hat, &labels, LossWeights::default(), 20, 1e-5, 1e-6, 3).unwrap();
    for r in &res {
        eprintln!("{:28} n={:3} rel={:.2e} abs={:.2e}", r.name, r.coords, r.max_rel_err, r.max_abs_err);
    }
    for r in &res {
        assert!(r.max_rel_err <= 1e-4, "{} rel err {}", r.name, r.max_rel_err);
    }
}

#[test]
fn finite_differences_pool_two() {
    run(small(16, 2, true));
}

#[test]
fn finite_differences_pool_four() {
    run(small(32, 4, true));
}

#[test]
fn finite_differences_without_decoder() {
    run(small(16, 2, false));
}
