//! Experimental protocol: single pipeline trials, repeated shuffled
//! evaluation with five summary statistics, grid search over (alpha, ell)
//! under a total trial budget, and frozen-model scoring on the non-obsolete
//! hold-out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pca::PcaModel;
use crate::preprocess::{backward_eliminate, BinaryNormalizer, CorrelationMode, EliminationTrace};
use crate::tree::{Tree, TreeParams};

/// Everything a single trial needs besides data and a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Correlation threshold: survivors keep pairwise correlation <= alpha.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub correlation_mode: CorrelationMode,
    /// Number of principal components kept.
    #[serde(default = "default_ell")]
    pub ell: usize,
    /// Scale features to unit variance before PCA (off: centering only).
    #[serde(default)]
    pub standardize_before_pca: bool,
    #[serde(default)]
    pub tree: TreeParams,
    /// Rows held out per trial.
    #[serde(default = "default_test_count")]
    pub test_count: usize,
    /// Master seed for repeated evaluation / search.
    #[serde(default)]
    pub seed: u64,
    /// When set, normalization and elimination run on the full dataset
    /// before the train/test split, so held-out rows influence the fitted
    /// statistics. Off by default: statistics are fitted on the training
    /// rows only and frozen before any test row is scored.
    #[serde(default)]
    pub normalize_before_split: bool,
}

fn default_alpha() -> f64 {
    0.15
}
fn default_ell() -> usize {
    7
}
fn default_test_count() -> usize {
    21
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: default_alpha(),
            correlation_mode: CorrelationMode::default(),
            ell: default_ell(),
            standardize_before_pca: false,
            tree: TreeParams::default(),
            test_count: default_test_count(),
            seed: 0,
            normalize_before_split: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha {} outside [-1, 1]", self.alpha)));
        }
        if self.ell == 0 {
            return Err(Error::InvalidParameter("ell must be >= 1".into()));
        }
        if self.test_count == 0 {
            return Err(Error::InvalidParameter("test_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// One complete fitted pipeline plus its held-out score. Carries every
/// frozen statistic needed to score unseen rows later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: PipelineConfig,
    pub seed: u64,
    pub normalizer: BinaryNormalizer,
    pub elimination: EliminationTrace,
    pub pca: PcaModel,
    pub tree: Tree,
    pub correct: usize,
    pub test_count: usize,
    pub test_accuracy: f64,
}

fn pc_names(ell: usize) -> Vec<String> {
    (1..=ell).map(|k| format!("pc{k}")).collect()
}

fn require_obsolete_only(ds: &Dataset) -> Result<()> {
    if ds.n_rows() == 0 {
        return Err(Error::EmptyDataset("trial input has no rows".into()));
    }
    if ds.obsolete.iter().any(|&o| !o) {
        return Err(Error::UniverseMismatch(
            "trial input must contain obsolete rows only (partition the dataset first)".into(),
        ));
    }
    Ok(())
}

/// Run one trial: split, normalize, eliminate, project, fit, score.
///
/// With the default (frozen) order the train/test split happens first and
/// every statistic — binary means and deviations, the correlation matrix
/// driving elimination, the PCA basis — is fitted on the training rows only,
/// then applied unchanged to the held-out rows. With
/// `normalize_before_split`, normalization and elimination instead see the
/// full dataset before the split.
pub fn run_trial(o: &Dataset, config: &PipelineConfig, seed: u64) -> Result<TrialResult> {
    config.validate()?;
    require_obsolete_only(o)?;

    let (normalizer, trace, train, test) = if config.normalize_before_split {
        let normalizer = BinaryNormalizer::fit(o)?;
        let normalized = normalizer.apply(o)?;
        let (reduced, trace) = backward_eliminate(&normalized, config.alpha, config.correlation_mode)?;
        let (train, test) = reduced.shuffle_split(config.test_count, seed)?;
        (normalizer, trace, train.materialize(), test.materialize())
    } else {
        let (train, test) = o.shuffle_split(config.test_count, seed)?;
        let (train, test) = (train.materialize(), test.materialize());
        let normalizer = BinaryNormalizer::fit(&train)?;
        let train_n = normalizer.apply(&train)?;
        let (reduced_train, trace) = backward_eliminate(&train_n, config.alpha, config.correlation_mode)?;
        let test_reduced = normalizer.apply(&test)?.select_features(&trace.surviving_indices)?;
        (normalizer, trace, reduced_train, test_reduced)
    };

    let h = train.n_features();
    if config.ell > h {
        return Err(Error::EllOutOfRange { ell: config.ell, h });
    }
    let pca = PcaModel::fit_named(
        &train.x,
        config.ell,
        &train.feature_names(),
        config.standardize_before_pca,
    )?;
    let train_scores = pca.transform(&train.x)?;
    let tree = Tree::fit_named(
        &train_scores,
        &train.labels,
        &config.tree,
        &pc_names(config.ell),
        &train.class_names,
    )?;

    let test_scores = pca.transform(&test.x)?;
    let mut correct = 0usize;
    for i in 0..test_scores.rows() {
        if tree.predict(test_scores.row(i))? == test.labels[i] {
            correct += 1;
        }
    }
    let test_count = test.n_rows();
    Ok(TrialResult {
        config: config.clone(),
        seed,
        normalizer,
        elimination: trace,
        pca,
        tree,
        correct,
        test_count,
        test_accuracy: correct as f64 / test_count as f64,
    })
}

/// Score a fitted trial on the non-obsolete hold-out using only its frozen
/// statistics: the training-time binary means/deviations, the surviving
/// feature mask, the PCA basis, and the tree. Nothing is refitted here.
pub fn evaluate_nonobsolete(trial: &TrialResult, u: &Dataset) -> Result<f64> {
    if u.n_rows() == 0 {
        return Err(Error::EmptyDataset("non-obsolete hold-out has no rows".into()));
    }
    if u.obsolete.iter().any(|&o| o) {
        return Err(Error::UniverseMismatch(
            "hold-out scoring expects non-obsolete rows only".into(),
        ));
    }
    if u.class_names != trial.tree.class_names {
        return Err(Error::SchemaMismatch(format!(
            "hold-out classes {:?} differ from training classes {:?}",
            u.class_names, trial.tree.class_names
        )));
    }
    let normalized = trial.normalizer.apply(u)?;
    let reduced = normalized.select_features(&trial.elimination.surviving_indices)?;
    let scores = trial.pca.transform(&reduced.x)?;
    let mut correct = 0usize;
    for i in 0..scores.rows() {
        if trial.tree.predict(scores.row(i))? == u.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / u.n_rows() as f64)
}

/// SplitMix64 finalizer: a bijective mixer on u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Per-trial seed for trial index `i` under `master_seed`. Bijective in `i`
/// for fixed master seed, so trial seeds are pairwise distinct.
pub fn derive_trial_seed(master_seed: u64, i: u64) -> u64 {
    splitmix64(master_seed).wrapping_add(splitmix64(i))
}

/// Run `n_trials` independent trials with seeds derived from `master_seed`,
/// in parallel, returned in trial-index order regardless of scheduling.
pub fn run_trials(o: &Dataset, config: &PipelineConfig, n_trials: usize, master_seed: u64) -> Result<Vec<TrialResult>> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
    }
    (0..n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(o, config, derive_trial_seed(master_seed, i)))
        .collect()
}

/// Five summary statistics over repeated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub n_trials: usize,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation (divide by n).
    pub std: f64,
    pub arithmetic_mean: f64,
    pub geometric_mean: f64,
    pub per_trial: Vec<(u64, f64)>,
}

impl AccuracyStats {
    /// Statistics over (seed, accuracy) pairs. The geometric mean is 0 when
    /// any accuracy is 0 (no smoothing), equals the common value when all
    /// accuracies agree, and is otherwise exp(mean(ln a)) nudged into
    /// [min, arithmetic_mean] so the min <= gm <= am <= max chain holds even
    /// when rounding would break it by one ulp.
    pub fn from_per_trial(per_trial: Vec<(u64, f64)>) -> Result<AccuracyStats> {
        if per_trial.is_empty() {
            return Err(Error::EmptyDataset("statistics over zero trials".into()));
        }
        if let Some(&(seed, bad)) = per_trial.iter().find(|(_, a)| !(0.0..=1.0).contains(a)) {
            return Err(Error::Numerical(format!("trial seed {seed} produced accuracy {bad} outside [0, 1]")));
        }
        let n = per_trial.len() as f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &(_, a) in &per_trial {
            min = min.min(a);
            max = max.max(a);
            sum += a;
        }
        let arithmetic_mean = (sum / n).clamp(min, max);
        let var = per_trial.iter().map(|&(_, a)| (a - arithmetic_mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let geometric_mean = if min == 0.0 {
            0.0
        } else if min == max {
            min
        } else {
            let mean_ln = per_trial.iter().map(|&(_, a)| a.ln()).sum::<f64>() / n;
            mean_ln.exp().clamp(min, arithmetic_mean)
        };
        Ok(AccuracyStats {
            n_trials: per_trial.len(),
            min,
            max,
            std,
            arithmetic_mean,
            geometric_mean,
            per_trial,
        })
    }
}

/// `n_trials` shuffled trials followed by the five-statistic summary.
pub fn repeated_evaluation(
    o: &Dataset,
    config: &PipelineConfig,
    n_trials: usize,
    master_seed: u64,
) -> Result<(Vec<TrialResult>, AccuracyStats)> {
    let trials = run_trials(o, config, n_trials, master_seed)?;
    let per_trial = trials.iter().map(|t| (t.seed, t.test_accuracy)).collect();
    let stats = AccuracyStats::from_per_trial(per_trial)?;
    Ok((trials, stats))
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub alpha: f64,
    pub ell: usize,
    /// Surviving feature count after eliminating on the full dataset at
    /// this alpha (the feasibility bound for ell).
    pub h: usize,
    pub n_trials: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
}

/// The default search grid for the correlation threshold: -1.0 to 1.0 in
/// steps of 0.05.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=40).map(|i| (i as f64 - 20.0) / 20.0).collect()
}

/// Grid search over (alpha, ell) under a total trial budget.
///
/// Feasible grid points are every `alpha` in `alpha_grid` paired with every
/// `ell` in `ell_grid` (or 1..=h(alpha) when `ell_grid` is empty) satisfying
/// `ell <= h(alpha)`, where h(alpha) counts the features surviving
/// elimination on the full dataset. The budget is split evenly across
/// feasible points in grid order, earlier points absorbing the remainder;
/// passing `trials_per_config` instead gives every point exactly that many
/// trials (their total must fit the budget). All points share one
/// trial-seed schedule derived from `master_seed`, so comparisons are
/// paired. Points whose trials error (e.g. a training subset drops below
/// `ell` surviving features) are excluded from the leaderboard.
///
/// Ranking: higher mean accuracy, then lower h, lower ell, lower alpha.
pub fn hyperparameter_search(
    o: &Dataset,
    base: &PipelineConfig,
    alpha_grid: &[f64],
    ell_grid: &[usize],
    trials_per_config: Option<usize>,
    budget: usize,
    master_seed: u64,
) -> Result<(PipelineConfig, Vec<LeaderboardEntry>)> {
    base.validate()?;
    require_obsolete_only(o)?;
    if alpha_grid.is_empty() {
        return Err(Error::InvalidParameter("alpha grid is empty".into()));
    }
    for &a in alpha_grid {
        if !(-1.0..=1.0).contains(&a) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("grid alpha {a} outside [-1, 1]")));
        }
    }
    if ell_grid.contains(&0) {
        return Err(Error::InvalidParameter("grid ell values must be >= 1".into()));
    }

    // h(alpha) on the full dataset, memoized per distinct alpha.
    let normalized = BinaryNormalizer::fit(o)?.apply(o)?;
    let mut h_cache: std::collections::BTreeMap<u64, usize> = std::collections::BTreeMap::new();
    let mut h_of = |alpha: f64| -> Result<usize> {
        if let Some(&h) = h_cache.get(&alpha.to_bits()) {
            return Ok(h);
        }
        let (_, trace) = backward_eliminate(&normalized, alpha, base.correlation_mode)?;
        let h = trace.surviving_indices.len();
        h_cache.insert(alpha.to_bits(), h);
        Ok(h)
    };

    // Enumerate feasible (alpha, ell) points in grid order, deduplicated.
    let mut points: Vec<(f64, usize, usize)> = Vec::new(); // (alpha, ell, h)
    let mut seen: std::collections::BTreeSet<(u64, usize)> = std::collections::BTreeSet::new();
    for &alpha in alpha_grid {
        let h = h_of(alpha)?;
        let ells: Vec<usize> = if ell_grid.is_empty() {
            (1..=h).collect()
        } else {
            ell_grid.iter().copied().filter(|&l| l <= h).collect()
        };
        for ell in ells {
            if seen.insert((alpha.to_bits(), ell)) {
                points.push((alpha, ell, h));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::AllConfigsInfeasible(
            "no (alpha, ell) grid point satisfies ell <= surviving feature count".into(),
        ));
    }

    // Allocate the trial budget.
    let g = points.len();
    let alloc: Vec<usize> = match trials_per_config {
        Some(0) => return Err(Error::InvalidParameter("trials_per_config must be >= 1".into())),
        Some(t) => {
            if t * g > budget {
                return Err(Error::InvalidParameter(format!(
                    "{t} trials x {g} grid points exceeds the budget of {budget}"
                )));
            }
            vec![t; g]
        }
        None => {
            if budget < g {
                return Err(Error::InvalidParameter(format!(
                    "budget {budget} is smaller than the {g} feasible grid points"
                )));
            }
            let base_n = budget / g;
            let rem = budget % g;
            (0..g).map(|i| base_n + usize::from(i < rem)).collect()
        }
    };

    let configs: Vec<PipelineConfig> = points
        .iter()
        .map(|&(alpha, ell, _)| PipelineConfig { alpha, ell, ..base.clone() })
        .collect();
    let tasks: Vec<(usize, u64)> = (0..g)
        .flat_map(|ci| (0..alloc[ci] as u64).map(move |i| (ci, derive_trial_seed(master_seed, i))))
        .collect();
    let outcomes: Vec<(usize, Result<f64>)> = tasks
        .par_iter()
        .map(|&(ci, seed)| (ci, run_trial(o, &configs[ci], seed).map(|t| t.test_accuracy)))
        .collect();

    let mut accs: Vec<Vec<f64>> = vec![Vec::new(); g];
    let mut failed = vec![false; g];
    for (ci, outcome) in outcomes {
        match outcome {
            Ok(a) => accs[ci].push(a),
            Err(_) => failed[ci] = true,
        }
    }

    let mut leaderboard: Vec<LeaderboardEntry> = Vec::new();
    for ci in 0..g {
        if failed[ci] || accs[ci].is_empty() {
            continue;
        }
        let (alpha, ell, h) = points[ci];
        let n = accs[ci].len();
        let mean = accs[ci].iter().sum::<f64>() / n as f64;
        let min = accs[ci].iter().cloned().fold(f64::INFINITY, f64::min);
        let max = accs[ci].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        leaderboard.push(LeaderboardEntry {
            alpha,
            ell,
            h,
            n_trials: n,
            mean_accuracy: mean,
            min_accuracy: min,
            max_accuracy: max,
        });
    }
    if leaderboard.is_empty() {
        return Err(Error::AllConfigsInfeasible(
            "every feasible grid point failed during trial evaluation".into(),
        ));
    }

    leaderboard.sort_by(|a, b| {
        b.mean_accuracy
            .partial_cmp(&a.mean_accuracy)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.h.cmp(&b.h))
            .then(a.ell.cmp(&b.ell))
            .then(a.alpha.partial_cmp(&b.alpha).unwrap_or(std::cmp::Ordering::Equal))
    });

    let best = &leaderboard[0];
    let best_config = PipelineConfig { alpha: best.alpha, ell: best.ell, ..base.clone() };
    Ok((best_config, leaderboard))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, FeatureDescriptor, FeatureKind};
    use crate::linalg::Matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two well-separated classes on one continuous feature plus a mild
    /// second feature; all rows obsolete.
    fn separable_dataset(n_per_class: usize) -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per_class {
            rows.push(vec![i as f64 * 0.01, (i % 5) as f64]);
            labels.push(0);
            rows.push(vec![100.0 + i as f64 * 0.01, (i % 7) as f64]);
            labels.push(1);
        }
        let n = rows.len();
        Dataset {
            features: vec![
                FeatureDescriptor::new("c1", FeatureKind::Continuous),
                FeatureDescriptor::new("c2", FeatureKind::Continuous),
            ],
            class_names: vec!["keep".into(), "replace".into()],
            ids: (0..n).map(|i| format!("r{i}")).collect(),
            x: Matrix::from_rows(&rows).unwrap(),
            labels,
            obsolete: vec![true; n],
        }
    }

    fn config(alpha: f64, ell: usize, test_count: usize) -> PipelineConfig {
        PipelineConfig { alpha, ell, test_count, ..Default::default() }
    }

    #[test]
    fn stub_accuracies_give_hand_computed_statistics() {
        let stats = AccuracyStats::from_per_trial(vec![(0, 0.2), (1, 0.8)]).unwrap();
        assert_eq!(stats.n_trials, 2);
        assert_eq!(stats.min, 0.2);
        assert_eq!(stats.max, 0.8);
        assert_eq!(stats.arithmetic_mean, 0.5);
        assert!((stats.geometric_mean - 0.4).abs() <= 1e-12, "gm {}", stats.geometric_mean);
        assert!((stats.std - 0.3).abs() <= 1e-12, "std {}", stats.std);
    }

    #[test]
    fn identical_accuracies_collapse_the_statistics() {
        let stats = AccuracyStats::from_per_trial(vec![(0, 0.6), (1, 0.6), (2, 0.6)]).unwrap();
        assert_eq!(stats.std, 0.0);
        assert_eq!(stats.arithmetic_mean, 0.6);
        assert_eq!(stats.geometric_mean, 0.6);
        assert_eq!(stats.min, 0.6);
        assert_eq!(stats.max, 0.6);
    }

    #[test]
    fn zero_accuracy_zeroes_the_geometric_mean() {
        let stats = AccuracyStats::from_per_trial(vec![(0, 0.0), (1, 0.9)]).unwrap();
        assert_eq!(stats.geometric_mean, 0.0);
        assert!(stats.arithmetic_mean > 0.0);
    }

    #[test]
    fn stats_reject_empty_and_out_of_range() {
        assert!(AccuracyStats::from_per_trial(vec![]).is_err());
        let err = AccuracyStats::from_per_trial(vec![(7, 1.5)]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn trial_seeds_are_pairwise_distinct_over_a_million() {
        let mut seen = std::collections::HashSet::with_capacity(1_000_000);
        for i in 0..1_000_000u64 {
            assert!(seen.insert(derive_trial_seed(42, i)));
        }
    }

    #[test]
    fn separable_data_scores_perfectly_for_any_seed() {
        let ds = separable_dataset(15);
        let cfg = config(1.0, 2, 5);
        for seed in [0u64, 1, 7, 99, 12345] {
            let trial = run_trial(&ds, &cfg, seed).unwrap();
            assert_eq!(trial.test_accuracy, 1.0, "seed {seed}");
            assert_eq!(trial.correct, 5);
            assert_eq!(trial.test_count, 5);
        }
    }

    #[test]
    fn identical_inputs_give_bit_identical_serialized_trials() {
        let ds = separable_dataset(10);
        let cfg = config(1.0, 2, 4);
        let a = run_trial(&ds, &cfg, 77).unwrap();
        let b = run_trial(&ds, &cfg, 77).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn accuracy_is_an_exact_multiple_of_one_over_test_count() {
        let ds = separable_dataset(12);
        let trial = run_trial(&ds, &config(1.0, 1, 7), 3).unwrap();
        assert_eq!(trial.test_accuracy, trial.correct as f64 / 7.0);
        assert_eq!((trial.test_accuracy * 7.0).round() as usize, trial.correct);
    }

    /// alpha = 1.0 removes nothing and ell = h keeps every component, so the
    /// trial must equal the same stages composed by hand on the same split.
    #[test]
    fn full_rank_trial_matches_hand_composed_stages() {
        let spec = crate::dataset::SynthesisSpec {
            o: 40,
            u: 4,
            class_counts: vec![22, 22],
            n_binary: 3,
            n_continuous: 3,
            redundant_pairs: vec![],
            informative_strength: 2.0,
            seed: 5,
            feature_names: None,
            class_names: None,
        };
        let full = crate::dataset::synthesize(&spec).unwrap();
        let o = full.partition().0.materialize();

        let cfg = config(1.0, 6, 8);
        let trial = run_trial(&o, &cfg, 31).unwrap();

        // Hand-composed oracle on the identical split.
        let (train_v, test_v) = o.shuffle_split(8, 31).unwrap();
        let (train, test) = (train_v.materialize(), test_v.materialize());
        let norm = BinaryNormalizer::fit(&train).unwrap();
        let train_n = norm.apply(&train).unwrap();
        let (reduced, trace) = backward_eliminate(&train_n, 1.0, CorrelationMode::Absolute).unwrap();
        assert_eq!(trace.removed.len(), 0, "alpha = 1.0 must remove nothing");
        let pca = PcaModel::fit_named(&reduced.x, 6, &reduced.feature_names(), false).unwrap();
        let scores = pca.transform(&reduced.x).unwrap();
        let names: Vec<String> = (1..=6).map(|k| format!("pc{k}")).collect();
        let tree = Tree::fit_named(&scores, &reduced.labels, &TreeParams::default(), &names, &reduced.class_names).unwrap();
        let test_n = norm.apply(&test).unwrap();
        let test_scores = pca.transform(&test_n.x).unwrap();
        let mut correct = 0;
        for i in 0..8 {
            if tree.predict(test_scores.row(i)).unwrap() == test.labels[i] {
                correct += 1;
            }
        }

        assert_eq!(trial.test_accuracy, correct as f64 / 8.0);
        assert_eq!(trial.pca, pca);
        assert_eq!(trial.tree, tree);
    }

    #[test]
    fn ell_beyond_surviving_features_is_rejected() {
        let ds = separable_dataset(10);
        let err = run_trial(&ds, &config(1.0, 5, 4), 0).unwrap_err();
        match err {
            Error::EllOutOfRange { ell, h } => {
                assert_eq!(ell, 5);
                assert_eq!(h, 2);
            }
            other => panic!("expected EllOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn trial_input_must_be_obsolete_only() {
        let mut ds = separable_dataset(10);
        ds.obsolete[3] = false;
        assert!(matches!(run_trial(&ds, &config(1.0, 1, 4), 0).unwrap_err(), Error::UniverseMismatch(_)));
    }

    #[test]
    fn normalization_order_flag_changes_the_frozen_statistics() {
        // A binary feature whose train-subset mean depends on the split.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 30;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![f64::from(rng.gen_bool(0.3)), rng.gen_range(-1.0..1.0)])
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let ds = Dataset {
            features: vec![
                FeatureDescriptor::new("b1", FeatureKind::Binary),
                FeatureDescriptor::new("c1", FeatureKind::Continuous),
            ],
            class_names: vec!["a".into(), "b".into()],
            ids: (0..n).map(|i| format!("r{i}")).collect(),
            x: Matrix::from_rows(&rows).unwrap(),
            labels,
            obsolete: vec![true; n],
        };
        let frozen = run_trial(&ds, &config(1.0, 2, 10), 4).unwrap();
        let literal = run_trial(
            &ds,
            &PipelineConfig { normalize_before_split: true, ..config(1.0, 2, 10) },
            4,
        )
        .unwrap();
        assert_ne!(frozen.normalizer, literal.normalizer);
    }

    /// Scoring the hold-out must reuse the frozen training statistics.
    /// Refitting them on the hold-out itself would flip the predictions on
    /// this construction, so the two paths are distinguishable.
    #[test]
    fn holdout_scoring_uses_frozen_not_refitted_statistics() {
        let train = Dataset {
            features: vec![FeatureDescriptor::new("b1", FeatureKind::Binary)],
            class_names: vec!["a".into(), "b".into()],
            ids: (0..4).map(|i| format!("t{i}")).collect(),
            x: Matrix::from_rows(&[vec![0.0], vec![1.0], vec![1.0], vec![1.0]]).unwrap(),
            labels: vec![0, 1, 1, 1],
            obsolete: vec![true; 4],
        };
        let normalizer = BinaryNormalizer::fit(&train).unwrap();
        let train_n = normalizer.apply(&train).unwrap();
        let (reduced, trace) = backward_eliminate(&train_n, 1.0, CorrelationMode::Absolute).unwrap();
        let pca = PcaModel::fit_named(&reduced.x, 1, &reduced.feature_names(), false).unwrap();
        let scores = pca.transform(&reduced.x).unwrap();
        let tree = Tree::fit_named(
            &scores,
            &reduced.labels,
            &TreeParams::default(),
            &["pc1".into()],
            &reduced.class_names,
        )
        .unwrap();
        let trial = TrialResult {
            config: config(1.0, 1, 1),
            seed: 0,
            normalizer,
            elimination: trace,
            pca,
            tree,
            correct: 4,
            test_count: 4,
            test_accuracy: 1.0,
        };

        let u = Dataset {
            features: vec![FeatureDescriptor::new("b1", FeatureKind::Binary)],
            class_names: vec!["a".into(), "b".into()],
            ids: (0..5).map(|i| format!("u{i}")).collect(),
            x: Matrix::from_rows(&[vec![0.0], vec![0.0], vec![0.0], vec![0.0], vec![1.0]]).unwrap(),
            labels: vec![0, 0, 0, 0, 1],
            obsolete: vec![false; 5],
        };

        let frozen_accuracy = evaluate_nonobsolete(&trial, &u).unwrap();
        assert_eq!(frozen_accuracy, 1.0);

        // Oracle for the leaky alternative: refit the normalizer and PCA
        // mean on the hold-out itself, keep the tree. The hold-out zeros
        // then normalize to 1 + 4(0 - 0.2)/0.4 = -1, center to -2, and land
        // on the wrong side of the tree threshold.
        let leaky_norm = BinaryNormalizer::fit(&u).unwrap();
        let leaky_n = leaky_norm.apply(&u).unwrap();
        let leaky_pca = PcaModel::fit_named(&leaky_n.x, 1, &leaky_n.feature_names(), false).unwrap();
        let leaky_scores = leaky_pca.transform(&leaky_n.x).unwrap();
        let mut leaky_correct = 0;
        for i in 0..5 {
            if trial.tree.predict(leaky_scores.row(i)).unwrap() == u.labels[i] {
                leaky_correct += 1;
            }
        }
        let leaky_accuracy = leaky_correct as f64 / 5.0;
        assert_eq!(leaky_accuracy, 0.2);
        assert_ne!(frozen_accuracy, leaky_accuracy);
    }

    #[test]
    fn holdout_duplicating_training_rows_scores_one() {
        let ds = separable_dataset(10);
        let trial = run_trial(&ds, &config(1.0, 2, 4), 11).unwrap();
        let mut u = ds.clone();
        u.obsolete = vec![false; u.n_rows()];
        assert_eq!(evaluate_nonobsolete(&trial, &u).unwrap(), 1.0);
    }

    #[test]
    fn holdout_rejects_bad_universes() {
        let ds = separable_dataset(10);
        let trial = run_trial(&ds, &config(1.0, 2, 4), 11).unwrap();
        // Obsolete rows in the hold-out.
        assert!(matches!(evaluate_nonobsolete(&trial, &ds).unwrap_err(), Error::UniverseMismatch(_)));
        // Empty hold-out.
        let mut empty = ds.clone();
        empty.ids.clear();
        empty.labels.clear();
        empty.obsolete.clear();
        empty.x = Matrix::zeros(0, 2);
        assert!(matches!(evaluate_nonobsolete(&trial, &empty).unwrap_err(), Error::EmptyDataset(_)));
    }

    #[test]
    fn repeated_evaluation_is_deterministic_and_ordered() {
        let ds = separable_dataset(10);
        let cfg = config(1.0, 2, 4);
        let (trials_a, stats_a) = repeated_evaluation(&ds, &cfg, 8, 123).unwrap();
        let (trials_b, stats_b) = repeated_evaluation(&ds, &cfg, 8, 123).unwrap();
        assert_eq!(trials_a, trials_b);
        assert_eq!(stats_a, stats_b);
        let expected: Vec<u64> = (0..8).map(|i| derive_trial_seed(123, i)).collect();
        let got: Vec<u64> = trials_a.iter().map(|t| t.seed).collect();
        assert_eq!(got, expected);
        assert_eq!(stats_a.arithmetic_mean, 1.0);
    }

    #[test]
    fn single_point_grid_wins_search() {
        let ds = separable_dataset(10);
        let (best, board) = hyperparameter_search(
            &ds,
            &config(0.0, 1, 4),
            &[0.5],
            &[1],
            None,
            6,
            9,
        )
        .unwrap();
        assert_eq!(best.alpha, 0.5);
        assert_eq!(best.ell, 1);
        assert_eq!(board.len(), 1);
        assert_eq!(board[0].n_trials, 6);
    }

    #[test]
    fn equal_accuracy_points_tie_break_to_smaller_ell() {
        let ds = separable_dataset(15);
        let (best, board) = hyperparameter_search(
            &ds,
            &config(0.0, 1, 5),
            &[1.0],
            &[1, 2],
            Some(3),
            10,
            2,
        )
        .unwrap();
        assert_eq!(board.len(), 2);
        assert_eq!(board[0].mean_accuracy, 1.0);
        assert_eq!(board[1].mean_accuracy, 1.0);
        assert_eq!(best.ell, 1, "equal accuracy must prefer fewer components");
        assert!(board[0].ell < board[1].ell);
    }

    /// Engineered data where a noisy feature correlated with the signal
    /// feature wrecks the one-component projection unless elimination
    /// removes it: the low-alpha arm must win, and the leaderboard means
    /// must match independently run arms.
    #[test]
    fn dominant_grid_point_wins_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 60;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = i % 2;
            let c1 = if class == 0 { -1.0 } else { 1.0 };
            let noise: f64 = rng.gen_range(-1.0..1.0);
            rows.push(vec![c1, 2.0 * c1 + 6.0 * noise]);
            labels.push(class);
        }
        let ds = Dataset {
            features: vec![
                FeatureDescriptor::new("c1", FeatureKind::Continuous),
                FeatureDescriptor::new("c2", FeatureKind::Continuous),
            ],
            class_names: vec!["a".into(), "b".into()],
            ids: (0..n).map(|i| format!("r{i}")).collect(),
            x: Matrix::from_rows(&rows).unwrap(),
            labels,
            obsolete: vec![true; n],
        };

        let base = config(0.0, 1, 10);
        let (best, board) = hyperparameter_search(&ds, &base, &[1.0, 0.2], &[1], Some(6), 12, 21).unwrap();

        // Oracle: run each arm independently on the same seed schedule.
        let arm = |alpha: f64| -> f64 {
            let cfg = PipelineConfig { alpha, ..base.clone() };
            let trials = run_trials(&ds, &cfg, 6, 21).unwrap();
            trials.iter().map(|t| t.test_accuracy).sum::<f64>() / 6.0
        };
        let mean_keep_all = arm(1.0);
        let mean_eliminate = arm(0.2);
        assert!(
            mean_eliminate > mean_keep_all,
            "elimination arm {mean_eliminate} should beat keep-all {mean_keep_all}"
        );
        assert_eq!(best.alpha, 0.2);
        let by_alpha = |a: f64| board.iter().find(|e| e.alpha == a).unwrap();
        assert_eq!(by_alpha(0.2).mean_accuracy, mean_eliminate);
        assert_eq!(by_alpha(1.0).mean_accuracy, mean_keep_all);
        assert_eq!(by_alpha(0.2).h, 1, "elimination at alpha 0.2 must drop the noisy copy");
        assert_eq!(by_alpha(1.0).h, 2);
    }

    #[test]
    fn budget_splits_evenly_with_remainder_to_earlier_points() {
        let spec = crate::dataset::SynthesisSpec {
            o: 40,
            u: 4,
            class_counts: vec![22, 22],
            n_binary: 2,
            n_continuous: 3,
            redundant_pairs: vec![],
            informative_strength: 2.0,
            seed: 6,
            feature_names: None,
            class_names: None,
        };
        let o = crate::dataset::synthesize(&spec).unwrap().partition().0.materialize();
        let (_, board) = hyperparameter_search(&o, &config(0.0, 1, 8), &[1.0], &[1, 2, 3], None, 10, 5).unwrap();
        assert_eq!(board.len(), 3);
        let total: usize = board.iter().map(|e| e.n_trials).sum();
        assert_eq!(total, 10);
        // The first grid point (ell = 1) takes the remainder.
        assert_eq!(board.iter().find(|e| e.ell == 1).unwrap().n_trials, 4);
        assert_eq!(board.iter().find(|e| e.ell == 2).unwrap().n_trials, 3);
        assert_eq!(board.iter().find(|e| e.ell == 3).unwrap().n_trials, 3);
    }

    #[test]
    fn infeasible_grids_error() {
        let ds = separable_dataset(10);
        // ell = 9 can never fit h <= 2.
        let err = hyperparameter_search(&ds, &config(0.0, 1, 4), &[1.0, 0.5], &[9], None, 10, 0).unwrap_err();
        assert!(matches!(err, Error::AllConfigsInfeasible(_)));
        // Budget below the feasible point count.
        let err = hyperparameter_search(&ds, &config(0.0, 1, 4), &[1.0], &[1, 2], None, 1, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
        // Explicit per-point trials exceeding the budget.
        let err = hyperparameter_search(&ds, &config(0.0, 1, 4), &[1.0], &[1, 2], Some(6), 10, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn leaderboard_is_sorted_by_the_ranking_keys() {
        let ds = separable_dataset(15);
        let (_, board) =
            hyperparameter_search(&ds, &config(0.0, 1, 5), &default_alpha_grid(), &[], None, 90, 3).unwrap();
        for w in board.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let key_a = (-a.mean_accuracy, a.h, a.ell, a.alpha);
            let key_b = (-b.mean_accuracy, b.h, b.ell, b.alpha);
            assert!(key_a < key_b, "leaderboard out of order: {a:?} before {b:?}");
        }
    }

    #[test]
    fn default_alpha_grid_spans_minus_one_to_one() {
        let grid = default_alpha_grid();
        assert_eq!(grid.len(), 41);
        assert_eq!(grid[0], -1.0);
        assert_eq!(grid[40], 1.0);
        // Grid points are exact f64 multiples of 0.05, so they print cleanly
        // in leaderboards and round-trip through JSON.
        assert_eq!(grid[21], 0.05);
        assert_eq!(grid[23], 0.15);
    }

    proptest! {
        /// The five statistics always satisfy the ordering chain
        /// min <= gm <= am <= max and std >= 0, even for adversarial
        /// accuracy multisets.
        #[test]
        fn statistic_chain_always_holds(accs in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let per: Vec<(u64, f64)> = accs.iter().enumerate().map(|(i, &a)| (i as u64, a)).collect();
            let s = AccuracyStats::from_per_trial(per).unwrap();
            prop_assert!(s.min <= s.geometric_mean);
            prop_assert!(s.geometric_mean <= s.arithmetic_mean);
            prop_assert!(s.arithmetic_mean <= s.max);
            prop_assert!(s.std >= 0.0);
        }

        /// Accuracies out of a trial are always exact multiples of
        /// 1/test_count.
        #[test]
        fn trial_accuracy_granularity(seed in 0u64..500) {
            let ds = separable_dataset(8);
            let trial = run_trial(&ds, &config(1.0, 2, 5), seed).unwrap();
            let scaled = trial.test_accuracy * 5.0;
            prop_assert_eq!(scaled.round(), scaled);
        }
    }
}
