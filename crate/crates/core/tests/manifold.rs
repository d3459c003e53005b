use mpo_qst::manifold::{manifold_dim, project_tangent_sparse, retract, tangent_step, SparseTensor, TangentSpace, TangentVector};
use mpo_qst::tt::{Core, DenseTensor, TtTensor};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn base(seed: u64, dims: &[usize], ranks: &[usize]) -> TtTensor {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    TtTensor::random_gaussian(dims, ranks, &mut rng).unwrap().left_orthogonalize()
}

/// Orthonormal basis of span{ d/dT_k (entry perturbations) } built densely.
fn tangent_basis(t: &TtTensor) -> DMatrix<f64> {
    let mut cols = Vec::new();
    for k in 0..t.n() {
        let c = t.core(k);
        for pos in 0..c.data().len() {
            let mut cores = t.cores().to_vec();
            let mut e = Core::zeros(c.left(), c.mode(), c.right());
            e.data_mut()[pos] = 1.0;
            cores[k] = e;
            let d = TtTensor::new(cores).unwrap().to_dense().unwrap();
            cols.push(DVector::from_column_slice(d.data()));
        }
    }
    let span = DMatrix::from_columns(&cols);
    let svd = span.svd(true, false);
    let u = svd.u.unwrap();
    let s1 = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * s1).collect();
    DMatrix::from_columns(&keep.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>())
}

fn flat(d: &DenseTensor) -> DVector<f64> {
    DVector::from_column_slice(d.data())
}

fn random_sparse(dims: &[usize], count: usize, rng: &mut ChaCha20Rng) -> SparseTensor {
    let entries = (0..count).map(|_| (dims.iter().map(|&d| rng.random_range(0..d)).collect(), rng.random::<f64>() - 0.5)).collect();
    SparseTensor::new(dims.to_vec(), entries).unwrap()
}

fn densify(s: &SparseTensor) -> DenseTensor {
    let mut d = DenseTensor::zeros(s.dims().to_vec());
    for (idx, v) in s.entries() {
        let lin = d.linear_index(idx);
        d.data_mut()[lin] += v;
    }
    d
}

#[test]
fn dimension_matches_numerical_rank() {
    let t = base(1, &[4, 4, 4], &[2, 2]);
    assert_eq!(tangent_basis(&t).ncols(), manifold_dim(&[4, 4, 4], &[2, 2]));
    let t = base(2, &[4, 3, 4], &[3, 2]);
    assert_eq!(tangent_basis(&t).ncols(), manifold_dim(&[4, 3, 4], &[3, 2]));
}

#[test]
fn sparse_projection_matches_dense_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for seed in 0..5 {
        let t = base(100 + seed, &[4, 4, 4], &[2, 2]);
        let q = tangent_basis(&t);
        let g = random_sparse(&[4, 4, 4], 5, &mut rng);
        let v = project_tangent_sparse(&t, &g).unwrap();
        let oracle = &q * (q.transpose() * flat(&densify(&g)));
        let got = flat(&v.to_dense().unwrap());
        assert!((got - &oracle).amax() < 1e-9);
        assert!(v.gauge_defect() < 1e-10);
        let vd = TangentSpace::new(&t).unwrap().project_dense(&densify(&g)).unwrap();
        assert!((flat(&vd.to_dense().unwrap()) - oracle).amax() < 1e-9);
    }
}

#[test]
fn self_projection_idempotence_and_residual() {
    let t = base(4, &[4, 4, 4], &[2, 3]);
    let space = TangentSpace::new(&t).unwrap();
    let own = space.project_dense(&t.to_dense().unwrap()).unwrap();
    assert!(own.to_tt().distance_expanded(&t).unwrap() < 1e-10 * t.norm());

    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let x = DenseTensor::new(vec![4, 4, 4], (0..64).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
    let p = space.project_dense(&x).unwrap().to_dense().unwrap();
    let pp = space.project_dense(&p).unwrap().to_dense().unwrap();
    assert!(flat(&pp.sub(&p)).amax() < 1e-9);
    let residual = flat(&x.sub(&p));
    assert!(residual.dot(&flat(&p)).abs() < 1e-9);
}

#[test]
fn unleft_orthogonal_base_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let t = TtTensor::random_gaussian(&[4, 4, 4], &[2, 2], &mut rng).unwrap();
    assert!(TangentSpace::new(&t).is_err());
}

#[test]
fn rank_deficient_base_rejected() {
    // rank-1 tensor stored with ranks (2, 2): the right parts are singular
    let t = TtTensor::ones(&[4, 4, 4]);
    let padded = mpo_qst::tt::ttsvd(&t, &[2, 2]).unwrap();
    assert!(matches!(TangentSpace::new(&padded), Err(mpo_qst::Error::RankDeficient { .. })));
}

#[test]
fn tangent_to_tt_and_step_against_dense_sum() {
    let t = base(7, &[4, 4, 4], &[2, 2]);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let xs: Vec<Core<f64>> =
        t.cores().iter().map(|c| Core::from_fn(c.left(), c.mode(), c.right(), |_, _, _| rng.random::<f64>() - 0.5)).collect();
    let v = TangentVector::from_cores(&t, xs.clone()).unwrap();
    let mut sum = DenseTensor::zeros(vec![4, 4, 4]);
    for k in 0..3 {
        let mut cores = t.cores().to_vec();
        cores[k] = xs[k].clone();
        let d = TtTensor::new(cores).unwrap().to_dense().unwrap();
        for (a, b) in sum.data_mut().iter_mut().zip(d.data()) {
            *a += b;
        }
    }
    assert!(flat(&v.to_dense().unwrap().sub(&sum)).amax() < 1e-12);
    let eta = 0.3;
    let step = tangent_step(&t, &v, eta).unwrap().to_dense().unwrap();
    let td = t.to_dense().unwrap();
    for ((s, a), b) in step.data().iter().zip(td.data()).zip(sum.data()) {
        assert!((s - (a - eta * b)).abs() < 1e-12);
    }
    assert!(TangentVector::zeros(&t).to_tt().norm() == 0.0);
    assert!(tangent_step(&t, &v, 0.0).unwrap().distance_expanded(&t).unwrap() < 1e-12);
}

#[test]
fn retraction_is_second_order() {
    let t = base(9, &[4, 4, 4, 4], &[2, 3, 2]);
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let x = DenseTensor::new(vec![4; 4], (0..256).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
    let v = TangentSpace::new(&t).unwrap().project_dense(&x).unwrap();
    let v = v.scaled(t.norm() / v.to_tt().norm());
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&s| {
            let moved = tangent_step(&t, &v, -s).unwrap();
            retract(&moved, &t.ranks(), None).unwrap().distance_expanded(&moved).unwrap()
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((50.0..200.0).contains(&ratio), "ratio {ratio}, errors {errs:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn projection_is_nonexpansive(seed in 0u64..1000, i in 0usize..4, j in 0usize..4, k in 0usize..4, g in -5.0f64..5.0) {
        let t = base(seed, &[4, 4, 4], &[2, 2]);
        let s = SparseTensor::new(vec![4, 4, 4], vec![(vec![i, j, k], g)]).unwrap();
        let v = project_tangent_sparse(&t, &s).unwrap();
        prop_assert!(v.to_tt().norm() <= s.norm() * (1.0 + 1e-10) + 1e-12);
        prop_assert!(v.gauge_defect() < 1e-10);
    }
}
