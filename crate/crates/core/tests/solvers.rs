use mpo_qst::measurement::{make_stream, MeasurementRecord, NoiseSource, Observation, ObservationSource, ReplayStream, Shots};
use mpo_qst::mpo::{make_basis, mpo_to_coeff, mps_to_mpo};
use mpo_qst::solvers::*;
use mpo_qst::states::random_mps;
use mpo_qst::tt::{coherence_report, Core, DenseTensor, TtTensor};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn random_tt(seed: u64, dims: &[usize], ranks: &[usize]) -> TtTensor {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    TtTensor::random_gaussian(dims, ranks, &mut rng).unwrap().left_orthogonalize()
}

fn qubit_target(n: usize, seed: u64) -> (TtTensor, mpo_qst::mpo::Mps) {
    let psi = random_mps(n, 2, 2, seed).unwrap();
    let t = mpo_to_coeff(&mps_to_mpo(&psi), &make_basis(2).unwrap()).unwrap();
    (t, psi)
}

fn tangent_basis(t: &TtTensor) -> DMatrix<f64> {
    let mut cols = Vec::new();
    for k in 0..t.n() {
        let c = t.core(k);
        for pos in 0..c.data().len() {
            let mut cores = t.cores().to_vec();
            let mut e = Core::zeros(c.left(), c.mode(), c.right());
            e.data_mut()[pos] = 1.0;
            cores[k] = e;
            cols.push(DVector::from_column_slice(TtTensor::new(cores).unwrap().to_dense().unwrap().data()));
        }
    }
    let svd = DMatrix::from_columns(&cols).svd(true, false);
    let u = svd.u.unwrap();
    let s1 = svd.singular_values.max();
    let keep: Vec<_> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-10 * s1).map(|i| u.column(i).into_owned()).collect();
    DMatrix::from_columns(&keep)
}

/// Sequential truncated SVDs of the dense tensor, multiplied back out.
fn dense_ttsvd(x: &[f64], dims: &[usize], ranks: &[usize]) -> Vec<f64> {
    let total: usize = dims.iter().product();
    let mut left_factors = Vec::new();
    let mut rest = DMatrix::from_column_slice(dims[0], total / dims[0], x);
    let mut r_prev = 1;
    for k in 0..dims.len() - 1 {
        let rows = r_prev * dims[k];
        let m = DMatrix::from_column_slice(rows, rest.len() / rows, rest.as_slice());
        let svd = m.clone().svd(true, false);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = svd.u.unwrap();
        let q = DMatrix::from_columns(&order[..ranks[k]].iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
        rest = q.transpose() * &m;
        left_factors.push((q, r_prev, dims[k]));
        r_prev = ranks[k];
    }
    let mut acc = rest;
    for (q, r, m) in left_factors.into_iter().rev() {
        let prod = &q * &acc;
        acc = DMatrix::from_column_slice(r, m * acc.ncols(), prod.as_slice());
    }
    acc.as_slice().to_vec()
}

fn observations(t: &TtTensor, source: NoiseSource, seed: u64, count: usize) -> Vec<Observation> {
    make_stream(t, source, seed).unwrap().next_batch(count).unwrap()
}

#[test]
fn fixed_point_and_zero_step() {
    let (t, _) = qubit_target(5, 3);
    let ranks = t.ranks();
    let batch = observations(&t, NoiseSource::Exact, 1, 20);
    let cfg = SolverConfig::new(ranks.clone(), StepSize::Alpha(4e-3), 20, 1);
    let out = orgd_step(&t, &batch, &cfg).unwrap();
    assert!(out.distance_expanded(&t).unwrap() < 1e-12);

    let other = random_tt(5, &t.mode_dims(), &ranks);
    let cfg0 = SolverConfig::new(ranks, StepSize::Fixed(0.0), 20, 1);
    let out = orgd_step(&other, &batch, &cfg0).unwrap();
    assert!(out.distance_expanded(&other).unwrap() < 1e-12);
}

#[test]
fn one_step_matches_dense_reference() {
    let dims = [4, 4, 4];
    let ranks = [2, 3];
    for seed in 0..5u64 {
        let target = random_tt(10 + seed, &dims, &ranks);
        let t = random_tt(20 + seed, &dims, &ranks);
        let batch = observations(&target, NoiseSource::Gaussian(0.01), 30 + seed, 7);
        let eta = 0.05;
        let cfg = SolverConfig::new(ranks.to_vec(), StepSize::Fixed(eta), 7, 1);
        let step = orgd_step(&t, &batch, &cfg).unwrap().to_dense().unwrap();
        let offline = rgd_offline_step(&t, &batch, &cfg).unwrap().to_dense().unwrap();

        let scale = 8.0;
        let td = t.to_dense().unwrap();
        let mut g = DenseTensor::zeros(dims.to_vec());
        for obs in &batch {
            let lin = g.linear_index(&obs.record.index);
            g.data_mut()[lin] += (scale * td.data()[lin] - scale * obs.record.value) * scale / 7.0;
        }
        let q = tangent_basis(&t);
        let gv = DVector::from_column_slice(g.data());
        let plus = DVector::from_column_slice(td.data()) - eta * (&q * (q.transpose() * gv));
        let oracle = dense_ttsvd(plus.as_slice(), &dims, &ranks);
        let diff = step.data().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "seed {seed}: {diff:e}");
        assert!(offline.data().iter().zip(step.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn trimmed_step_matches_dense_reference() {
    let dims = [4, 4, 4];
    let ranks = [2, 2];
    let target = random_tt(40, &dims, &ranks);
    let t = random_tt(41, &dims, &ranks);
    let batch = observations(&target, NoiseSource::Exact, 42, 10);
    let mut cfg = SolverConfig::new(ranks.to_vec(), StepSize::Fixed(0.02), 10, 1);
    cfg.trim_nu = Some(1.5);
    let step = orgd_step(&t, &batch, &cfg).unwrap().to_dense().unwrap();

    let td = t.to_dense().unwrap();
    let mut g = DenseTensor::zeros(dims.to_vec());
    for obs in &batch {
        let lin = g.linear_index(&obs.record.index);
        g.data_mut()[lin] += (8.0 * td.data()[lin] - 8.0 * obs.record.value) * 8.0 / 10.0;
    }
    let q = tangent_basis(&t);
    let plus = DVector::from_column_slice(td.data()) - 0.02 * (&q * (q.transpose() * DVector::from_column_slice(g.data())));
    let xi = 10.0 * plus.norm() * 1.5 / (9.0 * 8.0);
    let clipped: Vec<f64> = plus.iter().map(|x| x.clamp(-xi, xi)).collect();
    assert!(clipped.iter().zip(plus.iter()).any(|(a, b)| a != b), "trim inactive in this instance");
    let oracle = dense_ttsvd(&clipped, &dims, &ranks);
    let diff = step.data().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff:e}");
}

#[test]
fn iterates_keep_ranks_and_orthogonality() {
    let (t, psi) = qubit_target(6, 8);
    let ranks = t.ranks();
    let t0 = perturbed_init(&t, &ranks, 0.1, 1).unwrap();
    let truth = GroundTruth::new(t.clone(), Some(psi)).unwrap();
    let mut stream = make_stream(&t, NoiseSource::Exact, 2).unwrap();
    let cfg = SolverConfig::new(ranks.clone(), StepSize::Alpha(4e-3), 20, 1);
    let mut cur = t0;
    for _ in 0..30 {
        cur = orgd_step(&cur, &stream.next_batch(20).unwrap(), &cfg).unwrap();
        assert_eq!(cur.ranks(), ranks);
        assert!(cur.is_left_orthogonal());
        assert!(cur.left_orthogonality_defect() < 1e-12);
    }
    let dense = (cur.to_dense().unwrap().sub(&t.to_dense().unwrap()).norm()) / t.to_dense().unwrap().norm();
    assert!((truth.rel_error(&cur).unwrap() - dense).abs() < 1e-9);
}

#[test]
fn distance_identity_matches_dense_at_n3() {
    let dims = [4, 4, 4];
    for seed in 0..5u64 {
        let a = random_tt(50 + seed, &dims, &[2, 3]);
        let b = random_tt(60 + seed, &dims, &[3, 2]);
        let dense = a.to_dense().unwrap().sub(&b.to_dense().unwrap()).norm();
        assert!((a.distance(&b).unwrap() - dense).abs() < 1e-9);
    }
}

fn warm_run(n: usize, seed: u64, budget: usize) -> RunTrace {
    let (t, psi) = qubit_target(n, seed);
    let ranks = t.ranks();
    let t0 = perturbed_init(&t, &ranks, 0.1, seed + 1).unwrap();
    let truth = GroundTruth::new(t.clone(), Some(psi)).unwrap();
    let mut stream = make_stream(&t, NoiseSource::Exact, seed + 2).unwrap();
    let mut cfg = SolverConfig::new(ranks, StepSize::Alpha(4e-3), 20, budget);
    cfg.stopping = Stopping::RelError(1e-6);
    orgd_run(&t0, &mut stream, &cfg, Some(&truth)).unwrap().1
}

#[test]
fn warm_start_reaches_tolerance_at_n6() {
    let trace = warm_run(6, 21, 20_000);
    assert!(trace.converged);
    let last = trace.last().unwrap();
    assert!(last.rel_error.unwrap() < 1e-6);
    assert!(last.samples <= 120_000, "{} samples", last.samples);
    assert_eq!(last.samples, 20 * trace.iters as u64);
}

#[test]
fn warm_start_windows_are_nonincreasing() {
    let trace = warm_run(6, 22, 20_000);
    let errs: Vec<f64> = trace.points.iter().map(|p| p.rel_error.unwrap()).collect();
    let medians: Vec<f64> = errs
        .chunks(10)
        .map(|w| {
            let mut w = w.to_vec();
            w.sort_by(f64::total_cmp);
            w[w.len() / 2]
        })
        .collect();
    let bad = medians.windows(2).skip(1).filter(|p| p[1] > p[0]).count();
    let severe = medians.windows(2).skip(1).filter(|p| p[1] > 1.1 * p[0]).count();
    assert!(bad as f64 <= 0.05 * medians.len() as f64, "{bad} of {} windows increase", medians.len());
    assert_eq!(severe, 0);
}

#[test]
fn movement_stopping_fires_without_ground_truth() {
    let (t, _) = qubit_target(5, 31);
    let ranks = t.ranks();
    let t0 = perturbed_init(&t, &ranks, 0.05, 1).unwrap();
    let mut stream = make_stream(&t, NoiseSource::Exact, 2).unwrap();
    let mut cfg = SolverConfig::new(ranks, StepSize::Alpha(4e-3), 20, 50_000);
    cfg.stopping = Stopping::Movement { tol: 1e-9, window: 50 };
    cfg.log_every = 1000;
    let (out, trace) = orgd_run(&t0, &mut stream, &cfg, None).unwrap();
    assert!(trace.converged);
    assert!(trace.iters < 50_000);
    assert!(trace.points.iter().all(|p| p.rel_error.is_none()));
    assert!(out.distance(&t).unwrap() < 1e-6);
}

#[test]
fn shot_noise_floor_drops_with_more_shots() {
    let (t, _) = qubit_target(5, 41);
    let ranks = t.ranks();
    let truth = GroundTruth::new(t.clone(), None).unwrap();
    let floor = |shots: u64| {
        let t0 = perturbed_init(&t, &ranks, 0.1, 5).unwrap();
        let mut stream = make_stream(&t, NoiseSource::Shots(shots), 6).unwrap();
        let cfg = SolverConfig::new(ranks.clone(), StepSize::Alpha(4e-3), 20, 6000);
        let (_, trace) = orgd_run(&t0, &mut stream, &cfg, Some(&truth)).unwrap();
        let tail: Vec<f64> = trace.points.iter().rev().take(1000).map(|p| p.rel_error.unwrap()).collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let coarse = floor(4000);
    let fine = floor(8000);
    assert!(fine < coarse, "M=8000 floor {fine:e} vs M=4000 floor {coarse:e}");
}

#[test]
fn rsgd_decay_and_single_epoch_equivalence() {
    let (t, psi) = qubit_target(5, 51);
    let ranks = t.ranks();
    let t0 = perturbed_init(&t, &ranks, 0.1, 1).unwrap();
    let data = observations(&t, NoiseSource::Exact, 2, 2000);
    let solver = SolverConfig::new(ranks.clone(), StepSize::Alpha(4e-3), 20, usize::MAX);
    let cfg = RsgdConfig { solver: solver.clone(), epochs: 1, decay: 0.9, seed: 9 };
    let truth = GroundTruth::new(t.clone(), Some(psi)).unwrap();
    let (one, _) = rsgd_run(&t0, &data, &cfg, Some(&truth)).unwrap();

    let order = epoch_order(data.len(), 9, 1);
    let records: Vec<MeasurementRecord> = order.iter().map(|&i| data[i].record.clone()).collect();
    let mut replay = ReplayStream::new(records, &t.mode_dims()).unwrap();
    let (online, _) = orgd_run(&t0, &mut replay, &SolverConfig { max_iters: 100, ..solver.clone() }, None).unwrap();
    assert!(one.distance_expanded(&online).unwrap() < 1e-12);

    let a1 = 0.2;
    let a3 = a1 * 0.9f64.powi(2);
    assert!((a3 - 0.81 * a1).abs() < 1e-15);
}

#[test]
fn rsgd_error_decreases_across_epochs() {
    for seed in 0..3u64 {
        let (t, psi) = qubit_target(5, 60 + seed);
        let ranks = t.ranks();
        let t0 = perturbed_init(&t, &ranks, 0.1, seed).unwrap();
        let data = observations(&t, NoiseSource::Exact, 70 + seed, 3 * 25 * 40);
        let mut solver = SolverConfig::new(ranks, StepSize::Alpha(0.01), 75, usize::MAX);
        solver.log_every = usize::MAX;
        let cfg = RsgdConfig { solver, epochs: 4, decay: 0.9, seed };
        let truth = GroundTruth::new(t.clone(), Some(psi)).unwrap();
        let (_, trace) = rsgd_run(&t0, &data, &cfg, Some(&truth)).unwrap();
        let errs: Vec<f64> = trace.points.iter().map(|p| p.rel_error.unwrap()).collect();
        assert_eq!(errs.len(), 5);
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "seed {seed}: {errs:?}");
    }
}

#[test]
fn trace_csv_round_trip() {
    let trace = warm_run(5, 81, 300);
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("iter,samples,rel_error,fidelity,wall_ms,lambda_min\n"));
    let back = RunTrace::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.points.len(), trace.points.len());
    for (a, b) in back.points.iter().zip(&trace.points) {
        assert_eq!((a.iter, a.samples, a.rel_error, a.fidelity, a.lambda_min), (b.iter, b.samples, b.rel_error, b.fidelity, b.lambda_min));
    }
}

#[test]
fn config_validation() {
    let mut cfg = SolverConfig::new(vec![2, 2], StepSize::Fixed(-1.0), 1, 1);
    assert!(cfg.validate().is_err());
    cfg.step = StepSize::Fixed(0.1);
    cfg.batch = 0;
    assert!(cfg.validate().is_err());
    cfg.batch = 1;
    cfg.trim_nu = Some(0.0);
    assert!(cfg.validate().is_err());
    cfg.trim_nu = None;
    assert!(cfg.validate().is_ok());
    assert!(InitConfig { split: (2, 2, 1), ..InitConfig::new(6, 10, 1.0, 1.0) }.validate(6).is_err());
    assert_eq!(InitConfig::new(7, 1, 1.0, 1.0).split, (3, 2, 2));
    assert_eq!(InitConfig::new(6, 1, 1.0, 1.0).split, (2, 2, 2));
}

/// Top-`r` principal angle sine between the spans of `a` and `b` (orthonormal columns).
fn subspace_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let p = a * a.transpose() - b * b.transpose();
    p.svd(false, false).singular_values.max()
}

/// Every index listed exactly once with its exact value.
fn exhaustive(t: &TtTensor, copies: usize) -> Vec<MeasurementRecord> {
    let dense = t.to_dense().unwrap();
    let dims = t.mode_dims();
    let mut out = Vec::new();
    for _ in 0..copies {
        for lin in 0..dense.data().len() {
            let idx = mpo_qst::tt::multi_index(&dims, lin);
            out.push(MeasurementRecord { value: dense.data()[lin], index: idx, shots: Shots::Exact });
        }
    }
    out
}

#[test]
fn exhaustive_sampling_recovers_left_subspace() {
    // With every index seen once per group the first-stage matrix is an
    // exact multiple of T T^T; the recovered factor spans its top subspace.
    let dims = [4, 4, 4];
    let ranks = [2, 2];
    let t = random_tt(90, &dims, &ranks);
    let size = 64;
    let records = exhaustive(&t, 5);
    let mut replay = ReplayStream::new(records, &dims).unwrap();
    let mut cfg = InitConfig::new(3, size, 1e6, 1e6);
    cfg.k3 = size;
    let out = spectral_init(&mut replay, &dims, &cfg, &ranks).unwrap();
    let sep = t.to_dense().unwrap().separation(1);
    let (u, _) = {
        let svd = sep.clone().svd(true, false);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let u = svd.u.unwrap();
        (DMatrix::from_columns(&order[..2].iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>()), ())
    };
    let got = out.left_part(1).unwrap();
    assert!(subspace_gap(&u, &got) < 1e-8);
    // The other stages are exhaustive too, so the estimate is exact.
    assert!(out.distance(&t).unwrap() / t.norm() < 1e-8);
}

#[test]
fn first_stage_is_unbiased() {
    // Mean of 200 first-stage estimates at n = 6 against T<m1> T<m1>^T.
    let (t, _) = qubit_target(6, 95);
    let dense = t.to_dense().unwrap();
    let sep = dense.separation(2);
    let truth = &sep * sep.transpose();
    let gap = |k: usize| {
        let mut mean = DMatrix::<f64>::zeros(16, 16);
        for rep in 0..200u64 {
            let obs = observations(&t, NoiseSource::Exact, 1000 + rep, 2 * k);
            let (a, b) = obs.split_at(k);
            let mut m = DMatrix::<f64>::zeros(16, 16);
            for x in a {
                for y in b {
                    let (xi, yi) = (x.index(), y.index());
                    if xi[2..] == yi[2..] {
                        let (r, s) = (xi[0] + 4 * xi[1], yi[0] + 4 * yi[1]);
                        let w = x.scaled_value() * x.scale * y.scaled_value() * y.scale;
                        m[(r, s)] += w;
                        m[(s, r)] += w;
                    }
                }
            }
            mean += m / (2.0 * (k * k) as f64);
        }
        (mean / 200.0 - &truth).svd(false, false).singular_values.max() / truth.clone().svd(false, false).singular_values.max()
    };
    let small = gap(200);
    let large = gap(800);
    assert!(large < small, "{large} vs {small}");
    assert!(large < 0.2, "{large}");
}

#[test]
fn spectral_init_row_truncation_noop_and_failure_modes() {
    let (t, _) = qubit_target(6, 97);
    let ranks = t.ranks();
    let cap = InitConfig::new(6, 20_000, 1e9, 1e9);
    let a = spectral_init(&mut make_stream(&t, NoiseSource::Exact, 3).unwrap(), &t.mode_dims(), &cap, &ranks).unwrap();
    let huge = InitConfig { mu: 1e12, ..cap.clone() };
    let b = spectral_init(&mut make_stream(&t, NoiseSource::Exact, 3).unwrap(), &t.mode_dims(), &huge, &ranks).unwrap();
    assert!(a.distance_expanded(&b).unwrap() < 1e-12);

    let tiny = InitConfig::new(6, 1, 1.0, 1.0);
    let err = spectral_init(&mut make_stream(&t, NoiseSource::Exact, 3).unwrap(), &t.mode_dims(), &tiny, &ranks);
    assert!(matches!(err, Err(mpo_qst::Error::Initialization(_))), "{err:?}");
}

#[test]
fn spectral_init_output_is_trim_bounded() {
    let (t, _) = qubit_target(6, 99);
    let ranks = t.ranks();
    let nu = coherence_report(&t).unwrap().spikiness;
    let cfg = InitConfig::new(6, 50_000, 4.0, nu);
    let rep = spectral_init_report(&mut make_stream(&t, NoiseSource::Exact, 4).unwrap(), &t.mode_dims(), &cfg, &ranks).unwrap();
    let out = &rep.tensor;
    assert_eq!(out.ranks(), ranks);
    assert!(out.is_left_orthogonal());
    assert!(out.distance(&t).unwrap() / t.norm() < 0.5);
    let spiki = coherence_report(out).unwrap().spikiness;
    assert!(spiki <= 10.0 / 9.0 * nu * rep.assembled_norm / out.norm() * (1.0 + 1e-9));
}
