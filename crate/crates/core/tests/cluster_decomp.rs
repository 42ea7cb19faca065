use idlora_core::cluster::{lloyd_kmeans, AssignmentStrategy, KMeansConfig};
use idlora_core::decomp::{sample_pivots_local, sample_pivots_uniform};
use idlora_core::linalg::default_rank_tol;
use idlora_core::{constrained_kmeans, cur_decompose, mid_fit, numerical_rank, select_basis, BasisSet, Error, Mat, PivotSet};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn constrained_kmeans_respects_min_size_and_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for inst in 0..100u64 {
        let n = rng.random_range(6..30);
        let k = rng.random_range(1..=4.min(n));
        let min_size = rng.random_range(1..=n / k);
        let pts = Mat::random_normal(n, 3, &mut rng);
        let a = constrained_kmeans(&pts, k, min_size, inst, 100, 1e-10).unwrap();
        let b = constrained_kmeans(&pts, k, min_size, inst, 100, 1e-10).unwrap();
        assert_eq!(a, b);
        assert!(a.sizes().iter().all(|&s| s >= min_size), "instance {inst}: {:?}", a.sizes());
        assert_eq!(a.sizes().iter().sum::<usize>(), n);
        assert!(a.objective_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }
}

#[test]
fn infeasible_min_size_is_a_constraint_error() {
    let pts = Mat::identity(5);
    assert!(matches!(constrained_kmeans(&pts, 2, 3, 0, 10, 1e-8), Err(Error::Constraint(_))));
}

#[test]
fn greedy_strategy_also_meets_min_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts = Mat::random_normal(20, 2, &mut rng);
    let cfg = KMeansConfig::new(3, 5).with_seed(4).with_strategy(AssignmentStrategy::GreedyRepair);
    let m = cfg.fit(&pts).unwrap();
    assert!(m.sizes().iter().all(|&s| s >= 5));
}

#[test]
fn lloyd_recovers_separated_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let centers = [[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]];
    let pts = Mat::from_fn(30, 2, |i, j| centers[i % 3][j] + rng.random_range(-1.0..1.0));
    let m = lloyd_kmeans(&pts, 3, 5, 100, 1e-12).unwrap();
    for i in 0..30 {
        assert_eq!(m.assignments[i], m.assignments[i % 3]);
    }
}

#[test]
fn basis_rows_are_disjoint_and_verbatim() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..20u64 {
        let w = Mat::random_normal(24, 7, &mut rng);
        let model = constrained_kmeans(&w, 3, 4, seed, 100, 1e-10).unwrap();
        let b = select_basis(&w, &model, 4).unwrap();
        let mut all: Vec<usize> = b.row_indices.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 12);
        for (idx, a) in b.row_indices.iter().zip(&b.bases) {
            for (p, &i) in idx.iter().enumerate() {
                assert_eq!(a.row(p), w.row(i));
                assert_eq!(model.assignments[i], model.assignments[idx[0]]);
            }
        }
        assert_eq!(BasisSet::<f64>::decode(&b.encode()).unwrap().bases, b.bases);
    }
}

#[test]
fn local_pivots_stay_inside_cluster() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let w = Mat::random_normal(20, 4, &mut rng);
    let model = constrained_kmeans(&w, 2, 5, 0, 100, 1e-10).unwrap();
    for l in 0..2 {
        let p = sample_pivots_local(&model, l, 3, 9).unwrap();
        assert!(p.indices.iter().all(|&i| model.assignments[i] == l));
        assert!(p.indices.windows(2).all(|w| w[0] < w[1]));
    }
    assert_eq!(sample_pivots_uniform(10, 4, 1).unwrap(), sample_pivots_uniform(10, 4, 1).unwrap());
}

#[test]
fn mid_is_exact_on_a_rank_three_row_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let basis = Mat::random_normal(3, 10, &mut rng);
    let w = Mat::random_normal(12, 3, &mut rng).matmul(&basis).unwrap();
    let target = Mat::random_normal(6, 3, &mut rng).matmul(&basis).unwrap();
    let pivots = PivotSet::rows(vec![1, 5, 9]).unwrap();
    assert!(mid_fit(&w, &pivots, &target).unwrap().residual < 1e-9);
}

#[test]
fn cur_is_exact_on_rank_two_six_by_six() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let w = Mat::random_normal(6, 2, &mut rng)
        .matmul(&Mat::random_normal(2, 6, &mut rng))
        .unwrap();
    let cur = cur_decompose(&w, &PivotSet::rows(vec![0, 3]).unwrap(), &PivotSet::cols(vec![2, 5]).unwrap()).unwrap();
    assert!(cur.residual < 1e-10);
    assert!(cur.reconstruct().unwrap().max_abs_diff(&w).unwrap() < 1e-10);
}

#[test]
fn cur_link_beats_random_links() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let w = Mat::random_normal(8, 7, &mut rng);
    let cur = cur_decompose(&w, &PivotSet::rows(vec![0, 2, 4]).unwrap(), &PivotSet::cols(vec![1, 3]).unwrap()).unwrap();
    for _ in 0..50 {
        let mut u = cur.u.clone();
        u.add_scaled(0.05, &Mat::random_normal(2, 3, &mut rng)).unwrap();
        let e = w.sub(&cur.c.matmul(&u).unwrap().matmul(&cur.r_mat).unwrap()).unwrap().frobenius_norm();
        assert!(cur.residual <= e + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mid_residual_never_exceeds_target_norm(seed in any::<u64>(), n in 3usize..10, d in 2usize..8, t in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Mat::random_normal(n, d, &mut rng);
        let target = Mat::random_normal(4, d, &mut rng);
        let pivots = PivotSet::rows(sample(&mut rng, n, t.min(n)).into_vec()).unwrap();
        let fit = mid_fit(&w, &pivots, &target).unwrap();
        prop_assert!(fit.residual <= target.frobenius_norm() + 1e-12);
    }

    #[test]
    fn cur_is_invariant_to_pivot_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Mat::random_normal(7, 6, &mut rng);
        let rows = sample(&mut rng, 7, 3).into_vec();
        let cols = sample(&mut rng, 6, 3).into_vec();
        let mut rows_sorted = rows.clone();
        rows_sorted.sort_unstable();
        let mut cols_rev = cols.clone();
        cols_rev.reverse();
        let a = cur_decompose(&w, &PivotSet::rows(rows).unwrap(), &PivotSet::cols(cols).unwrap()).unwrap();
        let b = cur_decompose(&w, &PivotSet::rows(rows_sorted).unwrap(), &PivotSet::cols(cols_rev).unwrap()).unwrap();
        prop_assert!((a.residual - b.residual).abs() < 1e-10);
        prop_assert!(a.reconstruct().unwrap().max_abs_diff(&b.reconstruct().unwrap()).unwrap() < 1e-10);
    }

    #[test]
    fn cur_exact_when_slices_carry_full_rank(seed in any::<u64>(), rank in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Mat::random_normal(8, rank, &mut rng).matmul(&Mat::random_normal(rank, 9, &mut rng)).unwrap();
        let rows = PivotSet::rows(sample(&mut rng, 8, rank + 1).into_vec()).unwrap();
        let cols = PivotSet::cols(sample(&mut rng, 9, rank + 1).into_vec()).unwrap();
        let tol = default_rank_tol();
        prop_assume!(numerical_rank(&w.select_rows(&rows.indices).unwrap(), tol).unwrap() == rank);
        prop_assume!(numerical_rank(&w.select_cols(&cols.indices).unwrap(), tol).unwrap() == rank);
        prop_assert!(cur_decompose(&w, &rows, &cols).unwrap().residual < 1e-8);
    }
}
