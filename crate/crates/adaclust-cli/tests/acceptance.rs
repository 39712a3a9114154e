//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers (run with `-- --nocapture` to see
//! them). These pin the library's observable behavior at desk scale.

use std::sync::{Mutex, MutexGuard, PoisonError};
use std::time::Instant;

use adaclust::baselines::{gmm_responsibilities, kmeans_lloyd, soft_kmeans_step};
use adaclust::datagen::{make_pair, DomainPair};
use adaclust::linalg::{random_orthonormal_rows, spd_inverse, ActivationKind, Matrix};
use adaclust::metrics::{acc, ari, contingency, hungarian, nmi, oracles};
use adaclust::model::{
    self, assign, init_centroids, run_stack, BlockStackConfig, CentroidState,
    ScoreParameterization, ScoreParams,
};
use adaclust::trainer::{self, derive_seed, LabeledDataset};
use adaclust_cli::commands::run_baseline;
use adaclust_cli::config::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// The compute-heavy criteria run one at a time so wall-clock measurements
/// stay meaningful and the training runs do not thrash each other.
static EXCLUSIVE: Mutex<()> = Mutex::new(());

fn exclusive() -> MutexGuard<'static, ()> {
    EXCLUSIVE.lock().unwrap_or_else(PoisonError::into_inner)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
        .unwrap()
}

/// Generates the pair the CLI's `generate` command would produce for this
/// configuration (pair number 0).
fn pair_for(cfg: &ExperimentConfig) -> DomainPair {
    let mut spec = cfg.domain_spec();
    spec.seed = derive_seed(cfg.data_seed, 0);
    make_pair(&spec, cfg.perturbation, derive_seed(cfg.data_seed, 1)).unwrap()
}

fn train_and_eval(cfg: &ExperimentConfig, pair: &DomainPair) -> (f64, f64) {
    let train_cfg = cfg.train_config().unwrap();
    let outcome = trainer::train(&pair.source.features, &train_cfg).unwrap();
    let record = trainer::evaluate_transfer(&outcome.checkpoint, pair).unwrap();
    (record.source.unwrap().nmi, record.target.unwrap().nmi)
}

#[test]
fn criterion_01_kmeans_bridge() {
    let start = Instant::now();
    // Part 1: one identity-configured block == one soft k-means step.
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0f64;
    for _ in 0..20 {
        let n = rng.random_range(10..=50);
        let k = rng.random_range(2..=4usize);
        let b = rng.random_range(k.max(3)..=8);
        let tau = rng.random_range(0.5..2.0);
        let z = random_matrix(&mut rng, n, b, -4.0, 4.0);
        let sp = ScoreParams::identity(b, ActivationKind::Identity, tau).unwrap();
        let centroids = random_orthonormal_rows(k, b, rng.random()).unwrap();
        let state = CentroidState { centroids: centroids.clone(), block_index: 0 };
        let block_delta = assign(&z, &state, &sp).unwrap();
        let block_next = model::update_centroids(&z, &block_delta, &state).unwrap();
        let (soft_delta, soft_next) = soft_kmeans_step(&z, &centroids, tau).unwrap();
        worst = worst
            .max(block_delta.probs().sub(soft_delta.probs()).unwrap().max_abs())
            .max(block_next.centroids.sub(&soft_next).unwrap().max_abs());
    }
    assert!(worst <= 1e-12, "soft step deviation {worst}");

    // Part 2: sharp temperature, deep stack == Lloyd's labels, exactly.
    for trial in 0..10 {
        let k = 2 + trial % 3;
        let b = k.max(4);
        let mut rows = Vec::new();
        for j in 0..k {
            for _ in 0..10 {
                let mut row = vec![0.0; b];
                for (c, value) in row.iter_mut().enumerate() {
                    *value = if c == j { 10.0 } else { 0.0 } + rng.random_range(-0.5..0.5);
                }
                rows.push(row);
            }
        }
        let z = Matrix::from_rows(&rows).unwrap();
        let cfg = BlockStackConfig::new(10, b, k).unwrap();
        let sp = ScoreParams::identity(b, ActivationKind::Identity, 1e-3).unwrap();
        let trace = run_stack(&z, &cfg, &sp, 0).unwrap();
        let init = init_centroids(&cfg, 0).unwrap();
        let lloyd = kmeans_lloyd(&z, k, &init.centroids, 10, 0.0).unwrap();
        assert_eq!(trace.labels(), lloyd.labels, "trial {trial} broke the Lloyd bridge");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed:.1}s, budget 10s");
    println!(
        "acceptance criterion 1 (k-means bridge): PASS: max deviation {worst:.2e}, Lloyd labels exact, {elapsed:.2}s"
    );
}

#[test]
fn criterion_02_gmm_bridge() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst = 0f64;
    for _ in 0..20 {
        let n = rng.random_range(10..=40);
        let k = rng.random_range(2..=4usize);
        let b = rng.random_range(k.max(2)..=6);
        let tau = rng.random_range(0.5..2.0);
        let z = random_matrix(&mut rng, n, b, -3.0, 3.0);
        let a = random_matrix(&mut rng, b, b, -1.0, 1.0);
        let mut sigma = a.matmul_transposed(&a).unwrap();
        for i in 0..b {
            sigma.set(i, i, sigma.get(i, i) + 1.0);
        }
        let sp = ScoreParams::new(
            sigma.clone(),
            Matrix::identity(b),
            ActivationKind::Identity,
            tau,
            ScoreParameterization::Symmetrized,
        )
        .unwrap();
        let centroids = random_matrix(&mut rng, k, b, -2.0, 2.0);
        let state = CentroidState { centroids: centroids.clone(), block_index: 0 };
        let delta = assign(&z, &state, &sp).unwrap();
        let covariance = spd_inverse(&sigma).unwrap().scale(tau / 2.0);
        let (resp, _) = gmm_responsibilities(&z, &centroids, &covariance).unwrap();
        worst = worst.max(delta.probs().sub(&resp).unwrap().max_abs());
    }
    assert!(worst <= 1e-10, "E-step deviation {worst}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed:.1}s, budget 10s");
    println!(
        "acceptance criterion 2 (GMM bridge): PASS: max responsibility deviation {worst:.2e}, {elapsed:.2}s"
    );
}

#[test]
fn criterion_03_self_similarity_bound() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let b = rng.random_range(2..=6);
        let sp = ScoreParams::new(
            random_matrix(&mut rng, b, b, -2.0, 2.0),
            random_matrix(&mut rng, b, b, -2.0, 2.0),
            ActivationKind::ReLU,
            rng.random_range(0.1..5.0),
            ScoreParameterization::Symmetrized,
        )
        .unwrap();
        let z: Vec<f64> = (0..b).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c: Vec<f64> = (0..b).map(|_| rng.random_range(-5.0..5.0)).collect();
        if model::score(&z, &c, &sp).unwrap() > model::score(&c, &c, &sp).unwrap() {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "ReLU bound must never break");

    // Contrast: the stored counterexample breaks the unconstrained bilinear
    // score's bound.
    let wq = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let wk = Matrix::from_vec(2, 2, vec![0.0, -1.0, 0.0, -1.0]).unwrap();
    let c = [0.0, -1.0];
    let z = [1.0, 0.0];
    let away =
        model::unconstrained_bilinear_score(&z, &c, &wq, &wk, ActivationKind::Identity, 1.0)
            .unwrap();
    let at = model::unconstrained_bilinear_score(&c, &c, &wq, &wk, ActivationKind::Identity, 1.0)
        .unwrap();
    assert!(away > at, "counterexample must violate the bound");
    assert_eq!((at, away), (0.0, 2.0));
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "took {elapsed:.1}s, budget 5s");
    println!(
        "acceptance criterion 3 (self-similarity bound): PASS: 0 violations in 10^4 ReLU draws, bilinear counterexample 2 > 0, {elapsed:.2}s"
    );
}

#[test]
fn criterion_04_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0f64;
    for seed in [1u64, 2, 3] {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in [
            ("k", "2"),
            ("dim", "3"),
            ("embedding-dim", "4"),
            ("hidden-dim", "5"),
            ("num-blocks", "2"),
            ("beta", "1.0"),
            ("lambda-orth", "1.0"),
        ] {
            cfg.apply_kv(key, value).unwrap();
        }
        cfg.apply_kv("seed", &seed.to_string()).unwrap();
        let train_cfg = cfg.train_config().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let x = random_matrix(&mut rng, 8, 3, -2.0, 2.0);
        let params = trainer::init_params(&train_cfg).unwrap();
        let (_, report) = trainer::gradients_on_batch(&params, &x, &train_cfg).unwrap();
        let flat = trainer::flatten_params(&params);
        let analytic = report.flat();
        let template = params.clone();
        let outcome = adaclust::autodiff::finite_diff_check(
            |theta: &[f64]| {
                let p = trainer::unflatten_params(&template, theta)?;
                trainer::loss_eval_for_fd(&p, &x, &train_cfg)
            },
            &flat,
            &analytic,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(
            outcome.max_rel_error <= 1e-5,
            "seed {seed}: max relative error {} ({} checked, {} skipped)",
            outcome.max_rel_error,
            outcome.checked,
            outcome.skipped
        );
        assert!(outcome.checked > outcome.skipped, "seed {seed}: too many kink skips");
        worst = worst.max(outcome.max_rel_error);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed:.1}s, budget 30s");
    println!(
        "acceptance criterion 4 (gradient correctness): PASS: max relative error {worst:.2e} over 3 seeds, {elapsed:.2}s"
    );
}

/// Experiment configuration for the transfer-trend run: small domains where
/// drift at scale 0.5 reliably crosses frozen decision boundaries while the
/// adaptive model stays in its working regime.
fn transfer_cfg(k: usize, data_seed: u64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (key, value) in [
        ("k", k.to_string()),
        ("dim", "3".to_string()),
        ("n-per-cluster", "120".to_string()),
        ("center-box", "5.0".to_string()),
        ("cov-scale", "1.0".to_string()),
        ("perturbation", "0.5".to_string()),
        ("embedding-dim", "8".to_string()),
        ("hidden-dim", "16".to_string()),
        ("epochs", "250".to_string()),
        ("batch-size", "256".to_string()),
        ("data-seed", data_seed.to_string()),
        ("seed", seed.to_string()),
    ] {
        cfg.apply_kv(key, &value).unwrap();
    }
    cfg
}

#[test]
fn criterion_05_transfer_trend() {
    let _guard = exclusive();
    let start = Instant::now();
    let cells: Vec<(usize, u64)> = [2usize, 3, 5]
        .iter()
        .flat_map(|&k| (0..5u64).map(move |p| (k, k as u64 * 100 + p)))
        .collect();
    let results: Vec<(f64, f64, f64)> = cells
        .par_iter()
        .map(|&(k, data_seed)| {
            let cfg = transfer_cfg(k, data_seed, (data_seed % 100) + 1);
            let pair = pair_for(&cfg);
            let (source_nmi, target_nmi) = train_and_eval(&cfg, &pair);
            let source = LabeledDataset::from_domain(&pair.source);
            let target = LabeledDataset::from_domain(&pair.target);
            let km = run_baseline("kmeans", &cfg, &source, &target).unwrap();
            let gm = run_baseline("gmm", &cfg, &source, &target).unwrap();
            (
                source_nmi - target_nmi,
                km.diff.unwrap().nmi,
                gm.diff.unwrap().nmi,
            )
        })
        .collect();
    let n = results.len() as f64;
    let ada_diff = results.iter().map(|r| r.0).sum::<f64>() / n;
    let km_diff = results.iter().map(|r| r.1).sum::<f64>() / n;
    let gmm_diff = results.iter().map(|r| r.2).sum::<f64>() / n;
    assert!(ada_diff <= 0.10, "adaptive mean NMI diff {ada_diff:.3} exceeds 0.10");
    assert!(
        km_diff >= ada_diff + 0.05,
        "frozen k-means mean diff {km_diff:.3} does not exceed adaptive diff {ada_diff:.3} by 0.05"
    );
    assert!(
        gmm_diff >= ada_diff + 0.05,
        "frozen GMM mean diff {gmm_diff:.3} does not exceed adaptive diff {ada_diff:.3} by 0.05"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1800.0, "took {elapsed:.0}s, budget 30min");
    println!(
        "acceptance criterion 5 (transfer trend): PASS: mean NMI diff: adaptive {ada_diff:.3}, frozen k-means {km_diff:.3}, frozen GMM {gmm_diff:.3}, {elapsed:.0}s"
    );
}

#[test]
fn criterion_06_ablation_trend() {
    let _guard = exclusive();
    let start = Instant::now();
    let base = |seed: u64, variant: &str| {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in [
            ("k", "5"),
            ("dim", "3"),
            ("n-per-cluster", "100"),
            ("perturbation", "0.5"),
            ("embedding-dim", "8"),
            ("hidden-dim", "24"),
            ("epochs", "400"),
            ("batch-size", "256"),
            ("data-seed", "602"),
        ] {
            cfg.apply_kv(key, value).unwrap();
        }
        cfg.apply_kv("seed", &seed.to_string()).unwrap();
        if !variant.is_empty() {
            cfg.apply_kv(variant, "true").unwrap();
        }
        cfg
    };
    let runs: Vec<(usize, u64)> = (0..3usize)
        .flat_map(|v| (1..=5u64).map(move |s| (v, s)))
        .collect();
    let target_nmis: Vec<(usize, f64)> = runs
        .par_iter()
        .map(|&(variant_no, seed)| {
            let variant = ["", "variant-r", "variant-o"][variant_no];
            let cfg = base(seed, variant);
            let pair = pair_for(&cfg);
            let (_, target_nmi) = train_and_eval(&cfg, &pair);
            (variant_no, target_nmi)
        })
        .collect();
    let mean_of = |v: usize| -> f64 {
        let vals: Vec<f64> =
            target_nmis.iter().filter(|(n, _)| *n == v).map(|(_, t)| *t).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let full = mean_of(0);
    let without_symmetry = mean_of(1);
    let without_orthogonality = mean_of(2);
    assert!(
        full > without_symmetry,
        "full model {full:.3} must beat the symmetry ablation {without_symmetry:.3}"
    );
    assert!(
        full > without_orthogonality,
        "full model {full:.3} must beat the orthogonality ablation {without_orthogonality:.3}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1800.0, "took {elapsed:.0}s, budget 30min");
    println!(
        "acceptance criterion 6 (ablation trend): PASS: mean target NMI: full {full:.3} > no-symmetry {without_symmetry:.3}, > no-orthogonality {without_orthogonality:.3}, {elapsed:.0}s"
    );
}

#[test]
fn criterion_07_sensitivity_harness() {
    let _guard = exclusive();
    let start = Instant::now();
    let dir = std::env::temp_dir().join("adaclust_acceptance_sweep");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let mut cfg = ExperimentConfig::default();
    for (key, value) in [
        ("k", "3"),
        ("dim", "3"),
        ("n-per-cluster", "60"),
        ("embedding-dim", "6"),
        ("hidden-dim", "12"),
        ("epochs", "60"),
        ("batch-size", "128"),
    ] {
        cfg.apply_kv(key, value).unwrap();
    }
    let sweeps = [
        ("tau", vec!["0.1", "0.5", "1", "2", "5"], dir.join("tau.csv")),
        ("num-blocks", vec!["2", "4", "8", "16"], dir.join("depth.csv")),
    ];
    for (axis, values, out) in &sweeps {
        let values: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        adaclust_cli::commands::cmd_sweep(axis, &values, 2, 0, &cfg, out).unwrap();
        let table = std::fs::read_to_string(out).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(
            lines.len(),
            1 + values.len() * 2,
            "{axis}: expected a header plus one row per (value, seed)"
        );
        assert!(lines[0].starts_with("axis,value,seed,source_nmi"));
        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 12, "{axis}: malformed row `{line}`");
            for value in &fields[3..] {
                let parsed: f64 = value.parse().expect("numeric metric");
                assert!(parsed.is_finite(), "{axis}: non-finite metric in `{line}`");
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 3600.0, "took {elapsed:.0}s, budget 1h");
    println!(
        "acceptance criterion 7 (sensitivity harness): PASS: tau and depth sweeps well-formed, no NaN metrics, {elapsed:.0}s"
    );
}

#[test]
fn criterion_08_metric_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    for _ in 0..1000 {
        let n = rng.random_range(2..=10usize);
        let k = rng.random_range(1..=3usize);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let fast = acc(&pred, &truth).unwrap();
        let brute = oracles::acc_brute_force(&pred, &truth);
        assert!((fast - brute).abs() <= 1e-12, "ACC {fast} vs brute force {brute}");
    }
    // Hungarian against exhaustive permutation search.
    for _ in 0..200 {
        let n = rng.random_range(1..=5usize);
        let cost = random_matrix(&mut rng, n, n, 0.0, 20.0);
        let assignment = hungarian(&cost);
        let total: f64 = assignment.iter().enumerate().map(|(i, j)| cost.get(i, j.unwrap())).sum();
        let best = oracles::assignment_brute_force(&cost);
        assert!((total - best).abs() <= 1e-9);
    }
    // Stored contingency examples against the direct-formula oracles.
    let pred = [vec![0usize; 6], vec![1; 6]].concat();
    let truth = [vec![0usize; 5], vec![1; 1], vec![0; 1], vec![1; 5]].concat();
    let table = contingency(&pred, &truth).unwrap();
    let nmi_oracle = oracles::nmi_direct(&pred, &truth);
    assert!((nmi(&table) - nmi_oracle).abs() <= 1e-9);
    assert!((nmi_oracle - 0.3500).abs() < 1e-4);

    let pred = [0usize, 0, 1, 1];
    let truth = [0usize, 1, 0, 1];
    let table = contingency(&pred, &truth).unwrap();
    let ari_oracle = oracles::ari_pairwise(&pred, &truth);
    assert!((ari(&table) - ari_oracle).abs() <= 1e-9);
    assert!((ari_oracle + 0.5).abs() <= 1e-12);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed:.1}s, budget 10s");
    println!(
        "acceptance criterion 8 (metric correctness): PASS: 1000 ACC instances exact, Hungarian exact, NMI/ARI match oracles, {elapsed:.2}s"
    );
}

#[test]
fn criterion_09_invariant_suite() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1009);

    // Row stochasticity and convex-hull containment across random stacks.
    for _ in 0..10 {
        let n = rng.random_range(6..=30);
        let k = rng.random_range(2..=4usize);
        let b = rng.random_range(k.max(2)..=6);
        let z = random_matrix(&mut rng, n, b, -5.0, 5.0);
        let sp = ScoreParams::new(
            random_matrix(&mut rng, b, b, -1.0, 1.0),
            random_matrix(&mut rng, b, b, -1.0, 1.0),
            ActivationKind::ReLU,
            1.0,
            ScoreParameterization::Symmetrized,
        )
        .unwrap();
        let cfg = BlockStackConfig::new(3, b, k).unwrap();
        let trace = run_stack(&z, &cfg, &sp, 0).unwrap();
        for assignment in &trace.assignments {
            for row in assignment.probs().row_iter() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
        let mut lo = vec![f64::INFINITY; b];
        let mut hi = vec![f64::NEG_INFINITY; b];
        for row in z.row_iter() {
            for (c, &v) in row.iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        for state in &trace.states[1..] {
            for row in state.centroids.row_iter() {
                for (c, &v) in row.iter().enumerate() {
                    assert!(v >= lo[c] - 1e-9 && v <= hi[c] + 1e-9);
                }
            }
        }

        // Sample-permutation invariance.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let trace_perm = run_stack(&z.select_rows(&perm), &cfg, &sp, 0).unwrap();
        let final_a = &trace.states.last().unwrap().centroids;
        let final_b = &trace_perm.states.last().unwrap().centroids;
        assert!(final_a.sub(final_b).unwrap().max_abs() <= 1e-12);
    }

    // Lloyd inertia monotonicity and EM log-likelihood monotonicity.
    let z = random_matrix(&mut rng, 40, 2, -5.0, 5.0);
    let init = z.select_rows(&[0, 1, 2]);
    let mut prev = f64::INFINITY;
    for iters in 1..8 {
        let result = kmeans_lloyd(&z, 3, &init, iters, 0.0).unwrap();
        assert!(result.inertia <= prev + 1e-9, "inertia rose");
        prev = result.inertia;
    }
    let mut prev_ll = f64::NEG_INFINITY;
    for iters in 1..8 {
        let result = adaclust::baselines::gmm_em_shared(
            &z,
            3,
            &init,
            &Matrix::identity(2),
            iters,
            0.0,
            true,
        )
        .unwrap();
        assert!(result.log_likelihood >= prev_ll - 1e-9, "log-likelihood fell");
        prev_ll = result.log_likelihood;
    }

    // Checkpoint round trip is bitwise; training is seed-deterministic.
    let mut cfg = ExperimentConfig::default();
    for (key, value) in [
        ("k", "2"),
        ("dim", "3"),
        ("n-per-cluster", "15"),
        ("embedding-dim", "4"),
        ("hidden-dim", "6"),
        ("num-blocks", "2"),
        ("epochs", "3"),
        ("batch-size", "16"),
    ] {
        cfg.apply_kv(key, value).unwrap();
    }
    let pair = pair_for(&cfg);
    let train_cfg = cfg.train_config().unwrap();
    let a = trainer::train(&pair.source.features, &train_cfg).unwrap();
    let b = trainer::train(&pair.source.features, &train_cfg).unwrap();
    assert_eq!(a.checkpoint, b.checkpoint, "training must be deterministic");
    let dir = std::env::temp_dir().join("adaclust_acceptance_ckpt");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("ckpt.json");
    trainer::save_checkpoint(&a.checkpoint, &path).unwrap();
    let loaded = trainer::load_checkpoint(&path).unwrap();
    assert_eq!(loaded, a.checkpoint, "checkpoint round trip must be bitwise");
    let record_a = trainer::evaluate_transfer(&a.checkpoint, &pair).unwrap();
    let record_b = trainer::evaluate_transfer(&loaded, &pair).unwrap();
    assert_eq!(record_a.source.unwrap(), record_b.source.unwrap());
    assert_eq!(record_a.target.unwrap(), record_b.target.unwrap());

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed:.0}s, budget 2min");
    println!(
        "acceptance criterion 9 (invariant suite): PASS: stochasticity, hull, permutation, monotonicity, persistence, determinism, {elapsed:.1}s"
    );
}

#[test]
fn criterion_10_complexity_smoke() {
    let _guard = exclusive();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let b = 16;
    let k = 5;
    // Large enough that both sizes are memory-bound; otherwise the doubled
    // problem falling out of cache skews the ratio upward.
    let n = 40_000;
    let sp = ScoreParams::identity(b, ActivationKind::ReLU, 1.0).unwrap();
    let cfg = BlockStackConfig::new(4, b, k).unwrap();
    let z1 = random_matrix(&mut rng, n, b, -3.0, 3.0);
    let z2 = random_matrix(&mut rng, 2 * n, b, -3.0, 3.0);
    let time_stack = |z: &Matrix| -> f64 {
        let t0 = Instant::now();
        let trace = run_stack(z, &cfg, &sp, 0).unwrap();
        std::hint::black_box(trace.labels());
        t0.elapsed().as_secs_f64()
    };
    // Warm up, then take the median ratio of five paired trials.
    time_stack(&z1);
    time_stack(&z2);
    let mut ratios: Vec<f64> = (0..5).map(|_| time_stack(&z2) / time_stack(&z1)).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = ratios[2];
    assert!(
        (1.5..=3.0).contains(&median),
        "doubling N changed wall time by {median:.2}x, expected within [1.5, 3.0] (ratios {ratios:?})"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1}s, budget 1min");
    println!(
        "acceptance criterion 10 (complexity smoke): PASS: median time ratio {median:.2}x for 2x samples, {elapsed:.2}s"
    );
}
