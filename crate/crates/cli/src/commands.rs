use std::sync::Arc;

use idlora_core::adapters::{format_count, peek_adapter_config};
use idlora_core::cluster::ClusterModel;
use idlora_core::linalg::io::{decode_matrix, encode_matrix};
use idlora_core::theory::{EnsembleConfig, PivotStudyConfig, RareCluster, ReconstructionStudyConfig, TrialOutcome};
use idlora_core::train::{
    evaluate, finite_diff_check, make_multitask_data, randomize_trainable, GradCheckReport, TaskDataConfig,
    TrainConfig, TrainReport,
};
use idlora_core::{
    build_idlora, build_lora, build_moelora, constrained_kmeans, count_trainable, deserialize_adapter,
    select_basis, serialize_adapter, Adapter, AnyAdapter, ArchitectureDescriptor, Error, Mat, Method, Result,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output::{check_paths, provenance, read_file, read_text, write_atomic, write_csv, write_json};
use crate::{BasisArgs, ClusterArgs, CountArgs, EvalArgs, GradcheckArgs, MakeMatrixArgs, StudyArgs, TrainArgs};

const KMEANS_TOL: f64 = 1e-8;
const KNOWN_GAP_NOTE: &str = "ID-LoRA totals are the per-matrix formula (d_out/s)(r/s) + r summed over every adapted matrix. \
On llama3-8b this gives 2,754,304 at r=8; the commonly quoted ID-LoRA figure of 7.7M for this model is not derivable \
from that formula and is not reproduced.";

#[derive(Debug, Clone, Serialize)]
struct CountRow {
    arch: String,
    method: Method,
    r: usize,
    k: usize,
    s: usize,
    count: u64,
    display: String,
}

#[derive(Debug, Serialize)]
struct CountReport {
    arch: ArchitectureDescriptor,
    rows: Vec<CountRow>,
    notes: Vec<String>,
}

pub fn count_params(a: &CountArgs) -> Result<bool> {
    check_paths(&a.arch_file.iter().map(|p| p.as_path()).collect::<Vec<_>>(), &[a.out.as_ref(), a.csv.as_ref()])?;
    let arch = match &a.arch_file {
        Some(p) => ArchitectureDescriptor::from_toml_str(&read_text(p)?)?,
        None => ArchitectureDescriptor::builtin(&a.arch)?,
    };
    let mut rows = Vec::new();
    for &method in &a.method {
        for &r in &a.rank {
            let count = count_trainable(method, &arch, r, a.clusters, a.split)?;
            let (k, s) = match method {
                Method::MoeLora => (a.clusters, 1),
                Method::IdLora => (1, a.split),
                _ => (1, 1),
            };
            println!("{:<8} r={r:<4} k={k} s={s} {count:>14} {}", method, format_count(count));
            rows.push(CountRow { arch: arch.name.clone(), method, r, k, s, count, display: format_count(count) });
        }
    }
    let mut notes = Vec::new();
    if arch.name == "llama3-8b" && a.method.contains(&Method::IdLora) {
        println!("note: {KNOWN_GAP_NOTE}");
        notes.push(KNOWN_GAP_NOTE.to_string());
    }
    let config = serde_json::json!({
        "arch": arch.name, "methods": a.method, "ranks": a.rank, "clusters": a.clusters, "split": a.split,
    });
    if let Some(p) = &a.out {
        write_json(p, provenance("count-params", 0, &config), &CountReport { arch, rows: rows.clone(), notes })?;
    }
    if let Some(p) = &a.csv {
        write_csv(p, &rows)?;
    }
    Ok(true)
}

pub fn make_matrix(a: &MakeMatrixArgs) -> Result<bool> {
    check_paths(&[], &[Some(&a.out)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let m = if a.identity {
        if a.rows != a.cols {
            return Err(Error::Config(format!("identity needs a square shape, got {}x{}", a.rows, a.cols)));
        }
        Mat::identity(a.rows)
    } else if a.rank > 0 {
        Mat::random_normal(a.rows, a.rank, &mut rng).matmul(&Mat::random_normal(a.rank, a.cols, &mut rng))?
    } else {
        Mat::random_normal(a.rows, a.cols, &mut rng)
    };
    write_atomic(&a.out, &encode_matrix(&m))?;
    println!("wrote {}x{} matrix to {}", a.rows, a.cols, a.out.display());
    Ok(true)
}

fn read_matrix_file(path: &std::path::Path) -> Result<Mat> {
    decode_matrix(&read_file(path)?)
}

#[derive(Debug, Serialize)]
struct ClusterReport {
    sizes: Vec<usize>,
    objective: f64,
    converged: bool,
    iterations: usize,
    assignments: Vec<usize>,
}

fn cluster_report(model: &ClusterModel<f64>) -> ClusterReport {
    ClusterReport {
        sizes: model.sizes(),
        objective: model.objective(),
        converged: model.converged,
        iterations: model.iterations_run,
        assignments: model.assignments.clone(),
    }
}

fn print_clusters(model: &ClusterModel<f64>) {
    println!("cluster sizes: {:?}", model.sizes());
    println!("objective: {:.6e}", model.objective());
}

pub fn cluster(a: &ClusterArgs) -> Result<bool> {
    check_paths(&[&a.input], &[a.out.as_ref()])?;
    let w = read_matrix_file(&a.input)?;
    let model = constrained_kmeans(&w, a.clusters, a.min_size, a.seed, a.max_iter, KMEANS_TOL)?;
    print_clusters(&model);
    if let Some(p) = &a.out {
        let config = serde_json::json!({
            "input": a.input, "clusters": a.clusters, "min_size": a.min_size, "max_iter": a.max_iter,
        });
        write_json(p, provenance("cluster", a.seed, &config), &cluster_report(&model))?;
    }
    Ok(true)
}

#[derive(Debug, Serialize)]
struct BasisReport {
    clusters: ClusterReport,
    row_indices: Vec<Vec<usize>>,
}

pub fn basis(a: &BasisArgs) -> Result<bool> {
    check_paths(&[&a.input], &[Some(&a.out), a.report.as_ref()])?;
    let w = read_matrix_file(&a.input)?;
    let model = constrained_kmeans(&w, a.clusters, a.rank, a.seed, a.max_iter, KMEANS_TOL)?;
    let set = select_basis(&w, &model, a.rank)?;
    print_clusters(&model);
    for (l, idx) in set.row_indices.iter().enumerate() {
        println!("basis {l}: rows {idx:?}");
    }
    write_atomic(&a.out, &set.encode())?;
    if let Some(p) = &a.report {
        let config = serde_json::json!({
            "input": a.input, "clusters": a.clusters, "rank": a.rank, "max_iter": a.max_iter,
        });
        let report = BasisReport { clusters: cluster_report(&model), row_indices: set.row_indices.clone() };
        write_json(p, provenance("basis", a.seed, &config), &report)?;
    }
    Ok(true)
}

#[derive(Debug, Serialize)]
struct ReconstructionRow {
    seed: u64,
    k: usize,
    clustered_total: f64,
    global_total: f64,
    delta: f64,
    inequality_holds: bool,
    bound_holds: bool,
    strict: bool,
}

#[derive(Debug, Serialize)]
struct ReconstructionSummary {
    ensembles: usize,
    all_hold: bool,
    /// Ensembles where the tighter `clustered <= global - delta` form also holds.
    bound_holds: usize,
    min_delta: f64,
    positive_delta_fraction: f64,
}

pub fn verify_reconstruction(a: &StudyArgs) -> Result<bool> {
    let inputs: Vec<&std::path::Path> = a.config.iter().map(|p| p.as_path()).collect();
    check_paths(&inputs, &[a.out.as_ref(), a.csv.as_ref()])?;
    let mut cfg = match &a.config {
        Some(p) => ReconstructionStudyConfig::from_toml_str(&read_text(p)?)?,
        None => ReconstructionStudyConfig { ensembles: 100, ..Default::default() },
    };
    if let Some(s) = a.seed {
        cfg.first_seed = s;
    }
    if let Some(t) = a.trials {
        cfg.ensembles = t;
    }
    let reports = cfg.run()?;
    let rows: Vec<ReconstructionRow> = reports
        .iter()
        .map(|r| ReconstructionRow {
            seed: r.seed,
            k: r.k,
            clustered_total: r.clustered_total,
            global_total: r.global_total,
            delta: r.delta,
            inequality_holds: r.inequality_holds,
            bound_holds: r.bound_holds,
            strict: r.strict,
        })
        .collect();
    let all_hold = rows.iter().all(|r| r.inequality_holds);
    let summary = ReconstructionSummary {
        ensembles: rows.len(),
        all_hold,
        bound_holds: rows.iter().filter(|r| r.bound_holds).count(),
        min_delta: rows.iter().map(|r| r.delta).fold(f64::INFINITY, f64::min),
        positive_delta_fraction: rows.iter().filter(|r| r.delta > 1e-6).count() as f64 / rows.len() as f64,
    };
    println!(
        "{} ensembles: clustered <= global {}; min delta {:.4e}; delta > 1e-6 in {:.1}%; clustered <= global - delta in {}",
        summary.ensembles,
        if all_hold { "in all" } else { "FAILS" },
        summary.min_delta,
        100.0 * summary.positive_delta_fraction,
        summary.bound_holds
    );
    if let Some(p) = &a.out {
        let body = serde_json::json!({ "summary": summary, "ensembles": reports });
        write_json(p, provenance("verify-theorem1", cfg.first_seed, &cfg), &body)?;
    }
    if let Some(p) = &a.csv {
        write_csv(p, &rows)?;
    }
    Ok(all_hold)
}

/// Rare-cluster regime where uniform pivots can miss a cluster entirely.
pub fn default_pivot_study() -> PivotStudyConfig {
    PivotStudyConfig {
        ensemble: EnsembleConfig {
            d1: 24,
            d2: 24,
            m: 8,
            k_true: 2,
            rank: 2,
            intra_rank: 1,
            noise: 1e-6,
            rare: Some(RareCluster { rows: 2, cols: 2 }),
            ..Default::default()
        },
        ensemble_seed: 3,
        pivot_count: 4,
        trials: 500,
        seed: 7,
    }
}

pub fn verify_pivots(a: &StudyArgs) -> Result<bool> {
    let inputs: Vec<&std::path::Path> = a.config.iter().map(|p| p.as_path()).collect();
    check_paths(&inputs, &[a.out.as_ref(), a.csv.as_ref()])?;
    let mut cfg = match &a.config {
        Some(p) => PivotStudyConfig::from_toml_str(&read_text(p)?)?,
        None => default_pivot_study(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    let rep = cfg.run()?;
    let pass = rep.mean_global >= rep.mean_local && rep.ci_low >= 0.0;
    println!(
        "{} trials: mean max error global {:.4e}, local {:.4e}; 95% CI of difference [{:.4e}, {:.4e}]; bad-pivot fraction {:.3}; {}",
        rep.trials,
        rep.mean_global,
        rep.mean_local,
        rep.ci_low,
        rep.ci_high,
        rep.bad_pivot_fraction,
        if pass { "holds" } else { "FAILS" }
    );
    if let Some(p) = &a.out {
        write_json(p, provenance("verify-theorem2", cfg.seed, &cfg), &rep)?;
    }
    if let Some(p) = &a.csv {
        write_csv::<TrialOutcome>(p, &rep.outcomes)?;
    }
    Ok(pass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSpec {
    pub method: Method,
    pub r: usize,
    #[serde(default = "one")]
    pub k: usize,
    /// Defaults to 2 for ID-LoRA and 1 otherwise.
    #[serde(default)]
    pub s: Option<usize>,
    /// Defaults to `r` (unit scale).
    #[serde(default)]
    pub alpha: Option<f64>,
}

fn one() -> usize {
    1
}

impl AdapterSpec {
    fn split(&self) -> usize {
        self.s.unwrap_or(if self.method == Method::IdLora { 2 } else { 1 })
    }

    fn build(&self, w: Arc<Mat>, seed: u64) -> Result<AnyAdapter<f64>> {
        let alpha = self.alpha.unwrap_or(self.r as f64);
        Ok(match self.method {
            Method::Lora => build_lora(w, self.r, alpha, seed)?.into(),
            Method::MoeLora => build_moelora(w, self.r, self.k, alpha, seed)?.into(),
            Method::IdLora => build_idlora(w, self.k, self.r, self.split(), seed)?.with_alpha(alpha)?.into(),
            Method::Dora => return Err(Error::Config("dora is supported for counting only".into())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: TaskDataConfig,
    pub train: TrainConfig,
    pub adapter: Vec<AdapterSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: TaskDataConfig::default(),
            train: TrainConfig::default(),
            adapter: vec![AdapterSpec { method: Method::Lora, r: 4, k: 1, s: None, alpha: None }],
        }
    }
}

fn load_run_config(path: Option<&std::path::PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| Error::Config(format!("run config: {e}"))),
        None => Ok(RunConfig::default()),
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    runs: Vec<TrainReport>,
}

pub fn train(a: &TrainArgs) -> Result<bool> {
    let inputs: Vec<&std::path::Path> = a.config.iter().map(|p| p.as_path()).collect();
    check_paths(&inputs, &[a.out.as_ref(), a.report.as_ref(), a.save_adapter.as_ref()])?;
    let mut cfg = load_run_config(a.config.as_ref())?;
    if !a.method.is_empty() {
        cfg.adapter = a
            .method
            .iter()
            .map(|&method| AdapterSpec {
                method,
                r: a.rank.unwrap_or(4),
                k: a.clusters.unwrap_or(if method == Method::Lora { 1 } else { 2 }),
                s: a.split,
                alpha: a.alpha,
            })
            .collect();
    }
    if cfg.adapter.is_empty() {
        return Err(Error::Config("no adapters to train".into()));
    }
    if a.save_adapter.is_some() && cfg.adapter.len() != 1 {
        return Err(Error::Config("--save-adapter needs exactly one adapter".into()));
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.optimizer {
        cfg.train.optimizer = v;
    }
    cfg.train.seed = a.seed;
    cfg.train.validate()?;

    let data = make_multitask_data::<f64>(&cfg.data, a.seed)?;
    let w = Arc::new(data.pretrained.clone());
    let mut runs = Vec::with_capacity(cfg.adapter.len());
    let mut trained = Vec::with_capacity(cfg.adapter.len());
    for spec in &cfg.adapter {
        let mut layer = spec.build(w.clone(), a.seed)?;
        let rep = idlora_core::train::train(&mut layer, &data, &cfg.train)?;
        println!(
            "{:<8} params {:>8} steps {:>6} loss {:.6e} -> {:.6e}",
            rep.method, rep.trainable_params, rep.steps, rep.history[0], rep.final_loss
        );
        runs.push(rep);
        trained.push(layer);
    }
    if let Some(p) = &a.out {
        let rows: Vec<_> = runs.iter().flat_map(TrainReport::rows).collect();
        write_csv(p, &rows)?;
    }
    if let Some(p) = &a.report {
        write_json(p, provenance("train", a.seed, &cfg), &TrainSummary { runs })?;
    }
    if let Some(p) = &a.save_adapter {
        write_atomic(p, &serialize_adapter(&trained[0]))?;
    }
    Ok(true)
}

#[derive(Debug, Serialize)]
struct GradcheckRow {
    layer: usize,
    method: Method,
    max_rel_error: f64,
    pass: bool,
    report: GradCheckReport,
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<bool> {
    check_paths(&[], &[a.out.as_ref()])?;
    if a.layers == 0 {
        return Err(Error::Config("layers must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut rows = Vec::new();
    for layer_idx in 0..a.layers {
        let w = Arc::new(Mat::random_normal(a.d_out, a.d_in, &mut rng));
        for &method in &a.method {
            let spec = AdapterSpec {
                method,
                r: a.rank,
                k: if method == Method::Lora { 1 } else { a.clusters },
                s: Some(if method == Method::IdLora { a.split } else { 1 }),
                alpha: None,
            };
            let mut layer = spec.build(w.clone(), a.seed + layer_idx as u64)?;
            randomize_trainable(&mut layer, 0.5, &mut rng);
            let h = Mat::random_normal(1, a.d_in, &mut rng).into_vec();
            let up = Mat::random_normal(1, a.d_out, &mut rng).into_vec();
            let report = finite_diff_check(&layer, &h, &up, a.step)?;
            rows.push(GradcheckRow { layer: layer_idx, method, max_rel_error: report.max_rel_error, pass: report.pass, report });
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    for &method in &a.method {
        let mine: Vec<&GradcheckRow> = rows.iter().filter(|r| r.method == method).collect();
        let worst = mine.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        let ok = mine.iter().filter(|r| r.pass).count();
        println!("{method:<8} {ok}/{} layers pass, worst relative error {worst:.3e}", mine.len());
    }
    println!("gradcheck {}", if pass { "passed" } else { "FAILED" });
    if let Some(p) = &a.out {
        let config = serde_json::json!({
            "methods": a.method, "layers": a.layers, "d_in": a.d_in, "d_out": a.d_out, "rank": a.rank,
            "clusters": a.clusters, "split": a.split, "step": a.step,
        });
        write_json(p, provenance("gradcheck", a.seed, &config), &rows)?;
    }
    Ok(pass)
}

pub fn eval(a: &EvalArgs) -> Result<bool> {
    let mut inputs = vec![a.adapter.as_path()];
    inputs.extend(a.config.iter().map(|p| p.as_path()));
    check_paths(&inputs, &[a.out.as_ref()])?;
    let cfg = load_run_config(a.config.as_ref())?;
    let bytes = read_file(&a.adapter)?;
    let header = peek_adapter_config(&bytes)?;
    if header.d_in != cfg.data.d_in || header.d_out != cfg.data.d_out {
        return Err(Error::Input(format!(
            "adapter is {}x{} but the data config is {}x{}",
            header.d_out, header.d_in, cfg.data.d_out, cfg.data.d_in
        )));
    }
    let data = make_multitask_data::<f64>(&cfg.data, a.seed)?;
    let layer = deserialize_adapter(&bytes, data.pretrained.clone())?;
    let rep = evaluate(&layer, &data)?;
    println!("{} ({} params): mean task MSE {:.6e}", header.method, layer.trainable_count(), rep.mean);
    if let Some(p) = &a.out {
        let config = serde_json::json!({ "adapter": a.adapter, "data": cfg.data });
        write_json(p, provenance("eval", a.seed, &config), &rep)?;
    }
    Ok(true)
}
