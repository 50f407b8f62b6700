mod common;

use common::*;
use mor2s::full::{EtdPropagator, Scheme, SnapshotKind, SnapshotStream};
use mor2s::io::{load_basis, load_snapshots, save_basis, save_snapshots};
use mor2s::linalg::{orthonormality_defect, truncated_svd, Tolerances};
use mor2s::pod::{inclusion_error, prune, AccumulatorState, BasisPair};
use mor2s::deim::build_deim;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Gaussian `rows × cols` of the given rank (full rank when `rank ≥ min`).
fn ranked(seed: u64, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    let mut g = rng(seed);
    let r = rank.min(rows).min(cols);
    gaussian(&mut g, rows, r) * gaussian(&mut g, r, cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncated_svd_is_optimal(seed in any::<u64>(), rows in 1usize..25, cols in 1usize..25, rank in 1usize..25, r in 1usize..25) {
        let m = ranked(seed, rows, cols, rank);
        let r = r.min(rows.min(cols));
        let t = truncated_svd(&m, r).unwrap();
        let s = singular_values_oracle(&m);
        let next = s.get(r).copied().unwrap_or(0.0);
        let gap = spectral_norm_oracle(&(&m - t.recompose())) - next;
        prop_assert!(gap <= 1e-8 * s[0], "gap {gap}");
        prop_assert!(orthonormality_defect(&t.u) <= 1e-10 * (r as f64).sqrt());
        prop_assert!(orthonormality_defect(&t.v) <= 1e-10 * (r as f64).sqrt());
    }

    #[test]
    fn accumulator_cap_and_order(seed in any::<u64>(), n in 2usize..16, kappa in 1usize..8, count in 1usize..10) {
        let mut state = AccumulatorState::<f64>::new(kappa).unwrap();
        for i in 0..count {
            state.accumulate(&ranked(seed.wrapping_add(i as u64), n, n, 1 + i % n)).unwrap();
            prop_assert!(state.rank() <= kappa);
            prop_assert!(state.st.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(state.st.iter().all(|&s| s >= state.sigma_discard_max));
        }
    }

    #[test]
    fn larger_budget_never_discards_more(seed in any::<u64>(), n in 2usize..12, kappa in 1usize..6, count in 1usize..8) {
        let snaps: Vec<_> = (0..count).map(|i| ranked(seed ^ (i as u64 * 7919), n, n, n)).collect();
        let run = |k: usize| {
            let mut s = AccumulatorState::<f64>::new(k).unwrap();
            for x in &snaps {
                s.accumulate(x).unwrap();
            }
            s.sigma_discard_max
        };
        prop_assert!(run(kappa + 1) <= run(kappa));
    }

    #[test]
    fn members_of_the_space_are_captured(seed in any::<u64>(), n in 3usize..14, k in 1usize..4) {
        let mut g = rng(seed);
        let k = k.min(n);
        let (v, w) = (orthonormal(&mut g, n, k), orthonormal(&mut g, n, k));
        let mut state = AccumulatorState::<f64>::new(10).unwrap();
        state.accumulate(&(&v * gaussian(&mut g, k, k) * w.transpose())).unwrap();
        let member = &v * gaussian(&mut g, k, k) * w.transpose();
        prop_assert!(inclusion_error(&member, &state).unwrap() <= 1e-10);
    }

    #[test]
    fn pruned_bases_are_orthonormal(seed in any::<u64>(), n in 4usize..20, count in 1usize..5, tau in 1e-4f64..0.5) {
        let mut state = AccumulatorState::<f64>::new(10).unwrap();
        for i in 0..count {
            state.accumulate(&ranked(seed.wrapping_mul(31).wrapping_add(i as u64), n, n, 3)).unwrap();
        }
        let b = prune(&state, tau, 20).unwrap();
        prop_assert!(b.nu_l() >= 1 && b.nu_r() >= 1);
        prop_assert!(orthonormality_defect(&b.vl) <= 1e-10 * (b.nu_l() as f64).sqrt());
        prop_assert!(orthonormality_defect(&b.wr) <= 1e-10 * (b.nu_r() as f64).sqrt());
    }

    #[test]
    fn exponential_steps_compose(seed in any::<u64>(), k in 1usize..9, h1 in 0.01f64..0.5, h2 in 0.01f64..0.5) {
        let mut g = rng(seed);
        let a = gaussian(&mut g, k, k);
        let a = (&a + a.transpose()) * 0.5;
        let b = gaussian(&mut g, k, k);
        let b = (&b + b.transpose()) * 0.5;
        let u = gaussian(&mut g, k, k);
        let zero = DMatrix::zeros(k, k);
        let tol = Tolerances::default();
        let step = |h: f64, x: &DMatrix<f64>| EtdPropagator::new(&a, &b, h, &tol).unwrap().step(x, &zero).unwrap();
        let joint = step(h1 + h2, &u);
        let split = step(h1, &step(h2, &u));
        prop_assert!((&joint - &split).norm() <= 1e-9 * joint.norm());
    }
}

#[test]
fn artifacts_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = rng(5);
    let basis = BasisPair::from_bases(orthonormal(&mut g, 20, 4), orthonormal(&mut g, 18, 3));
    let deim = build_deim(&basis).unwrap();
    let path = dir.path().join("basis.bin");
    save_basis(&path, &basis, Some(&deim)).unwrap();
    let (back, op) = load_basis::<f64>(&path).unwrap();
    assert_eq!(back, basis);
    assert_eq!(op.unwrap(), deim);

    let mut stream = SnapshotStream::new(SnapshotKind::State);
    for t in [0.0, 0.5, 1.0] {
        stream.push(t, gaussian(&mut g, 6, 5)).unwrap();
    }
    let path = dir.path().join("snaps.bin");
    save_snapshots(&path, &stream).unwrap();
    let back = load_snapshots::<f64>(&path).unwrap();
    assert_eq!(back.times, stream.times);
    assert_eq!(back.matrices, stream.matrices);

    std::fs::write(&path, b"not a snapshot file").unwrap();
    assert!(load_snapshots::<f64>(&path).is_err());
}

#[test]
fn imex_snapshots_converge_at_first_order() {
    use mor2s::full::{run_full, CaptureRequest, TimeGrid};
    use mor2s::problems::{build_problem, Params};
    let spec = build_problem::<f64>("ac1", 16, &Params::new()).unwrap();
    let final_state = |scheme, n_t| {
        let grid = TimeGrid::new(spec.t_final, n_t).unwrap();
        run_full(&spec, &grid, scheme, &CaptureRequest::at_times(&grid, &[], None).unwrap()).unwrap().final_state
    };
    let reference = final_state(Scheme::Etd, 12800);
    let errs: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n_t| (final_state(Scheme::Imex, n_t) - &reference).norm() / reference.norm())
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((0.8..1.3).contains(&order), "observed order {order}, errors {errs:?}");
    }
}
