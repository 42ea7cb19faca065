use idlora_core::theory::{
    bootstrap_mean_ci, cluster_low_rank_decompose, cluster_tasks, generate_ensemble, global_low_rank_decompose,
    verify_theorem1, EnsembleConfig, PivotStudyConfig, ReconstructionStudyConfig,
};
use idlora_core::Error;

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn generated_ensembles_satisfy_their_assumptions() {
    let cfg = EnsembleConfig::default();
    for seed in 0..50 {
        let ens = generate_ensemble::<f64>(&cfg, seed).unwrap();
        ens.check_assumptions().unwrap();
        assert_eq!(ens.matrices.len(), cfg.m);
    }
}

#[test]
fn clustering_recovers_planted_labels() {
    let cfg = EnsembleConfig::default();
    for seed in 0..20 {
        let ens = generate_ensemble::<f64>(&cfg, seed).unwrap();
        let labels = cluster_tasks(&ens.matrices, cfg.k_true, seed).unwrap();
        assert!(same_partition(&labels, &ens.true_labels), "seed {seed}");
    }
}

#[test]
fn planted_k_beats_single_cluster() {
    for (k_true, m) in [(2, 12), (3, 12), (4, 16)] {
        let cfg = EnsembleConfig { k_true, m, ..Default::default() };
        for seed in 0..10 {
            let ens = generate_ensemble::<f64>(&cfg, seed).unwrap();
            let one = cluster_low_rank_decompose(&ens, 1, 2).unwrap().total_error;
            let planted = cluster_low_rank_decompose(&ens, k_true, 2).unwrap().total_error;
            assert!(planted <= one, "k_true {k_true} seed {seed}: {planted} vs {one}");
        }
    }
}

#[test]
fn staircase_holds_for_two_planted_clusters() {
    let cfg = EnsembleConfig { k_true: 2, ..Default::default() };
    for seed in 0..20 {
        let ens = generate_ensemble::<f64>(&cfg, seed).unwrap();
        let e1 = cluster_low_rank_decompose(&ens, 1, 2).unwrap().total_error;
        let e2 = cluster_low_rank_decompose(&ens, 2, 2).unwrap().total_error;
        assert!(e2 <= e1 + 1e-9);
    }
}

#[test]
fn shared_factor_can_break_the_intermediate_staircase() {
    // Merging two planted clusters forces one left factor to serve both the
    // merged group and the clean ones, which can cost more than one cluster.
    let cfg = EnsembleConfig { k_true: 4, m: 16, ..Default::default() };
    let ens = generate_ensemble::<f64>(&cfg, 1).unwrap();
    let errs: Vec<f64> = (1..=4)
        .map(|k| cluster_low_rank_decompose(&ens, k, 2).unwrap().total_error)
        .collect();
    assert!(errs[1] > errs[0]);
    assert!(errs[3] < 1e-3 * errs[0]);
}

#[test]
fn single_cluster_has_zero_gap() {
    let cfg = EnsembleConfig { k_true: 1, ..Default::default() };
    let ens = generate_ensemble::<f64>(&cfg, 3).unwrap();
    let rep = verify_theorem1(&ens, 1, 2, 2).unwrap();
    assert!(rep.delta.abs() < 1e-9 && rep.inequality_holds);
    let g = global_low_rank_decompose(&ens, 2).unwrap();
    assert!((g.total_error - rep.global_total).abs() < 1e-9);
}

#[test]
fn studies_are_deterministic_and_validated() {
    let study = ReconstructionStudyConfig { ensembles: 4, ..Default::default() };
    assert_eq!(study.run().unwrap(), study.run().unwrap());
    assert!(matches!(
        ReconstructionStudyConfig { ensembles: 0, ..Default::default() }.run(),
        Err(Error::Config(_))
    ));
    let piv = PivotStudyConfig { trials: 20, ..Default::default() };
    assert_eq!(piv.run().unwrap(), piv.run().unwrap());
    assert!(PivotStudyConfig { trials: 0, ..Default::default() }.run().is_err());
    assert!(generate_ensemble::<f64>(&EnsembleConfig { k_true: 0, ..Default::default() }, 0).is_err());
}

#[test]
fn bootstrap_interval_brackets_the_mean() {
    let diffs: Vec<f64> = (0..200).map(|i| (i % 7) as f64 - 1.0).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let (lo, hi) = bootstrap_mean_ci(&diffs, 2000, 1);
    assert!(lo < mean && mean < hi && lo > 0.0);
}
