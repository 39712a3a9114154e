//! Sanity experiments around the transfer protocol: the null-shift case
//! (no drift means no metric drop, for the adaptive model and the frozen
//! baselines alike) and the shape of the training loss.

use adaclust::datagen::{make_pair, DomainPair};
use adaclust::trainer::{self, derive_seed, LabeledDataset};
use adaclust_cli::commands::run_baseline;
use adaclust_cli::config::ExperimentConfig;

fn small_cfg(seed: u64, perturbation: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (key, value) in [
        ("k", "2".to_string()),
        ("dim", "3".to_string()),
        ("n-per-cluster", "100".to_string()),
        ("perturbation", perturbation.to_string()),
        ("embedding-dim", "6".to_string()),
        ("hidden-dim", "16".to_string()),
        ("epochs", "150".to_string()),
        ("batch-size", "128".to_string()),
        ("data-seed", (40 + seed).to_string()),
        ("seed", seed.to_string()),
    ] {
        cfg.apply_kv(key, &value).unwrap();
    }
    cfg
}

fn pair_for(cfg: &ExperimentConfig) -> DomainPair {
    let mut spec = cfg.domain_spec();
    spec.seed = derive_seed(cfg.data_seed, 0);
    make_pair(&spec, cfg.perturbation, derive_seed(cfg.data_seed, 1)).unwrap()
}

/// With zero perturbation the target is a fresh draw from the source
/// distribution; metrics must match up to sampling noise.
#[test]
fn null_shift_transfer_keeps_metrics() {
    let mut abs_diffs = Vec::new();
    for seed in 1..=5u64 {
        let cfg = small_cfg(seed, 0.0);
        let pair = pair_for(&cfg);
        let train_cfg = cfg.train_config().unwrap();
        let outcome = trainer::train(&pair.source.features, &train_cfg).unwrap();
        let record = trainer::evaluate_transfer(&outcome.checkpoint, &pair).unwrap();
        abs_diffs.push(record.diff.unwrap().nmi.abs());
    }
    let mean = abs_diffs.iter().sum::<f64>() / abs_diffs.len() as f64;
    assert!(mean <= 0.05, "null-shift NMI drop {mean:.3} over 5 seeds (diffs {abs_diffs:?})");
}

#[test]
fn null_shift_baseline_keeps_metrics() {
    let mut abs_diffs = Vec::new();
    for seed in 1..=5u64 {
        let cfg = small_cfg(seed, 0.0);
        let pair = pair_for(&cfg);
        let source = LabeledDataset::from_domain(&pair.source);
        let target = LabeledDataset::from_domain(&pair.target);
        let record = run_baseline("kmeans", &cfg, &source, &target).unwrap();
        abs_diffs.push(record.diff.unwrap().nmi.abs());
    }
    let mean = abs_diffs.iter().sum::<f64>() / abs_diffs.len() as f64;
    assert!(mean <= 0.05, "null-shift k-means NMI drop {mean:.3} (diffs {abs_diffs:?})");
}

/// After the initial transient, the smoothed training loss should be
/// non-increasing most of the time on well-separated blobs.
#[test]
fn training_loss_trends_downward() {
    for seed in 1..=5u64 {
        let cfg = small_cfg(seed, 0.5);
        let pair = pair_for(&cfg);
        let train_cfg = cfg.train_config().unwrap();
        let outcome = trainer::train(&pair.source.features, &train_cfg).unwrap();
        let totals: Vec<f64> = outcome.epoch_losses.iter().map(|l| l.total).collect();
        // 5-epoch moving average.
        let window = 5;
        let smoothed: Vec<f64> = (0..totals.len() - window + 1)
            .map(|i| totals[i..i + window].iter().sum::<f64>() / window as f64)
            .collect();
        let after = &smoothed[10.min(smoothed.len() - 1)..];
        let non_increasing = after.windows(2).filter(|w| w[1] <= w[0] + 1e-9).count();
        let fraction = non_increasing as f64 / (after.len() - 1).max(1) as f64;
        assert!(
            fraction >= 0.9,
            "seed {seed}: smoothed loss decreased in only {:.0}% of late epochs",
            fraction * 100.0
        );
    }
}
