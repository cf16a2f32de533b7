mod common;

use std::rc::Rc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uv3_core::sparse::SparseOperator;
use uv3_core::spectral::Mass;
use uv3_core::SpectralBasis;
use uv3_nn::graph::{softplus, Graph, SparseConst, Var};

fn random(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero so kinked functions stay differentiable under the probe.
fn away_from_zero(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| {
        let v: f64 = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Compares tape gradients of `sum(f(inputs) * W)` with central differences for every input entry.
fn check(inputs: Vec<DMatrix<f64>>, f: impl Fn(&Graph, &[Var]) -> Var) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probe = {
        let g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|m| g.leaf(m.clone())).collect();
        let out = f(&g, &vars);
        random(out.shape().0, out.shape().1, &mut rng)
    };
    let eval = |ins: &[DMatrix<f64>]| -> f64 {
        let g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|m| g.leaf(m.clone())).collect();
        f(&g, &vars).value().component_mul(&probe).sum()
    };
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.leaf(m.clone())).collect();
    let out = f(&g, &vars);
    let loss = g.sum(&g.mul(&out, &g.leaf(probe.clone())));
    let grads = g.backward(&loss);
    let step = 1e-5;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zero(v);
        for j in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i][j] += step;
            let mut minus = inputs.clone();
            minus[i][j] -= step;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
            let an = analytic[j];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            assert!(err < 1e-5, "input {i} entry {j}: tape {an} vs fd {fd}");
        }
    }
}

#[test]
fn dense_algebra_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    check(vec![random(4, 3, &mut rng), random(3, 5, &mut rng)], |g, v| g.matmul(&v[0], &v[1]));
    check(vec![random(4, 3, &mut rng), random(5, 3, &mut rng)], |g, v| g.matmul_nt(&v[0], &v[1]));
    let (a, b) = (random(4, 3, &mut rng), random(4, 3, &mut rng));
    check(vec![a.clone(), b.clone()], |g, v| g.add(&v[0], &v[1]));
    check(vec![a.clone(), b.clone()], |g, v| g.sub(&v[0], &v[1]));
    check(vec![a.clone(), b.clone()], |g, v| g.mul(&v[0], &v[1]));
    check(vec![a.clone(), random(1, 3, &mut rng)], |g, v| g.add_row(&v[0], &v[1]));
    check(vec![a.clone(), random(1, 3, &mut rng)], |g, v| g.mul_row(&v[0], &v[1]));
    check(vec![a.clone()], |g, v| g.scale(&v[0], -2.5));
    check(vec![random(1, 4, &mut rng)], |g, v| g.broadcast_rows(&v[0], 6));
    check(vec![a, b.clone()], |g, v| g.sum(&g.mul(&v[0], &v[1])));
    let target = Rc::new(random(4, 3, &mut rng));
    check(vec![b], move |g, v| g.mse(&v[0], &target));
}

#[test]
fn elementwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = away_from_zero(5, 4, &mut rng) * 3.0;
    check(vec![x.clone()], |g, v| g.relu(&v[0]));
    check(vec![x.clone()], |g, v| g.silu(&v[0]));
    check(vec![x.clone()], |g, v| g.tanh(&v[0]));
    check(vec![x.clone()], |g, v| g.softplus(&v[0]));
    check(vec![x], |g, v| g.softmax_rows(&v[0]));
}

#[test]
fn indexing_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, b) = (random(5, 2, &mut rng), random(5, 3, &mut rng));
    check(vec![a.clone(), b.clone()], |g, v| g.concat_cols(&[v[0].clone(), v[1].clone(), v[0].clone()]));
    check(vec![b.clone()], |g, v| g.slice_cols(&v[0], 1, 2));
    let repeated: Rc<[usize]> = vec![4, 0, 4, 2].into();
    check(vec![b.clone()], move |g, v| g.gather_rows(&v[0], &repeated));
    let distinct: Rc<[usize]> = vec![6, 1, 3].into();
    check(vec![random(3, 2, &mut rng)], move |g, v| g.scatter_rows(&v[0], &distinct, 8));
}

#[test]
fn group_norm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    check(
        vec![random(6, 6, &mut rng), random(1, 6, &mut rng), random(1, 6, &mut rng)],
        |g, v| g.group_norm(&v[0], &v[1], &v[2], 3, 1e-5),
    );
}

#[test]
fn group_norm_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(7, 4, &mut rng);
    let g = Graph::new();
    let ones = g.leaf(DMatrix::from_element(1, 4, 1.0));
    let zeros = g.leaf(DMatrix::zeros(1, 4));
    let y = g.group_norm(&g.leaf(x.clone()), &ones, &zeros, 2, 1e-5);
    for grp in 0..2 {
        let block: Vec<f64> = (0..7).flat_map(|r| (0..2).map(move |c| (r, grp * 2 + c))).map(|i| x[i]).collect();
        let mean = block.iter().sum::<f64>() / 14.0;
        let var = block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 14.0;
        for r in 0..7 {
            for c in 0..2 {
                let want = (x[(r, grp * 2 + c)] - mean) / (var + 1e-5).sqrt();
                assert!((y.value()[(r, grp * 2 + c)] - want).abs() < 1e-12);
            }
        }
    }
}

fn path_sparse() -> Rc<SparseConst> {
    let t = [(0, 0, 2.0), (0, 1, -0.5), (1, 2, 1.5), (2, 0, 0.25), (3, 3, -1.0), (3, 1, 0.7)];
    Rc::new(SparseConst::new(SparseOperator::from_triplets(4, &t).unwrap()))
}

#[test]
fn sparse_product_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = path_sparse();
    let dense = s.operator().to_dense();
    let x = random(4, 3, &mut rng);
    let g = Graph::new();
    let y = g.sparse_matmul(&s, &g.leaf(x.clone()));
    assert!((y.value() - &dense * &x).abs().max() < 1e-14);
    check(vec![x], move |g, v| g.sparse_matmul(&s, &v[0]));
}

fn random_basis(n: usize, k: usize, diagonal: bool, seed: u64) -> Rc<SpectralBasis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = random(n, k, &mut rng);
    phi.column_mut(0).fill(1.0);
    let lam: Vec<f64> = (0..k).map(|i| i as f64 * 0.8).collect();
    let mass = if diagonal {
        Mass::Diagonal((0..n).map(|_| rng.random_range(0.5..1.5)).collect())
    } else {
        Mass::Scalar(0.3)
    };
    Rc::new(SpectralBasis::new(lam, phi, mass).unwrap())
}

#[test]
fn heat_diffusion_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for diagonal in [false, true] {
        let basis = random_basis(6, 4, diagonal, 8);
        let y = random(6, 3, &mut rng);
        let h = DMatrix::from_fn(1, 3, |_, c| 0.1 + 0.4 * c as f64);
        check(vec![y, h], move |g, v| g.heat_diffuse(&basis, &v[0], &v[1]));
    }
}

#[test]
fn heat_diffusion_matches_core() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let basis = random_basis(9, 5, true, 10);
    let y = random(9, 2, &mut rng);
    let h = [0.05, 2.0];
    let want = uv3_core::spectral::heat_diffuse(&basis, &y, &h).unwrap();
    let g = Graph::inference();
    let got = g.heat_diffuse(&basis, &g.leaf(y), &g.leaf(DMatrix::from_row_slice(1, 2, &h)));
    assert!((got.value() - want).abs().max() < 1e-12);
}

#[test]
fn long_diffusion_gives_weighted_mean() {
    let mesh = uv3_core::shapes::icosphere(1, 1.0);
    let basis = Rc::new(common::mesh_basis(&mesh, 12));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let y = random(basis.dim(), 3, &mut rng);
    let means = basis.weighted_mean(&y);
    let g = Graph::inference();
    let h = g.softplus(&g.leaf(DMatrix::from_element(1, 3, 1e3)));
    let out = g.heat_diffuse(&basis, &g.leaf(y), &h);
    for c in 0..3 {
        for r in 0..basis.dim() {
            assert!((out.value()[(r, c)] - means[c]).abs() < 1e-9);
        }
    }
}

#[test]
fn softplus_is_stable() {
    assert_eq!(softplus(800.0), 800.0);
    assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    for &y in &[1e-4, 0.03, 0.1, 5.0, 50.0] {
        assert!((softplus(uv3_nn::graph::inverse_softplus(y)) - y).abs() < 1e-12 * y.max(1.0));
    }
}

#[test]
fn inference_graph_keeps_no_operands() {
    let g = Graph::inference();
    let a = g.leaf(DMatrix::from_element(2, 2, 1.0));
    let b = g.relu(&g.scale(&a, 2.0));
    drop(a);
    assert_eq!(b.value()[(0, 0)], 2.0);
    assert!(!g.grad_enabled());
}
