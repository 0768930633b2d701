//! Feature-contribution rankings, comparison against an expert-provided
//! ordering, and report/plot-data emission.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluate::{
    evaluate_nonobsolete, AccuracyStats, LeaderboardEntry, PipelineConfig, TrialResult,
};
use crate::manifest::RunManifest;
use crate::pca::PcaModel;
use crate::preprocess::EliminationTrace;

/// Where a ranking's scores came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MeanOverTrials,
    BestModel,
    BestOnNonobsolete,
    Expert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub feature: String,
    pub score: f64,
    /// True when the feature was removed by correlation elimination (its
    /// score is 0 by definition, not by measurement).
    pub eliminated: bool,
}

/// An ordered list of features with non-negative scores, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub provenance: Provenance,
    /// The full feature universe in its original column order.
    pub universe: Vec<String>,
    /// Entries sorted by descending score; ties keep universe order, with
    /// eliminated features after surviving ones.
    pub entries: Vec<RankEntry>,
}

impl FeatureRanking {
    /// Build from per-universe-position scores, applying the canonical sort.
    pub fn from_scores(
        provenance: Provenance,
        universe: Vec<String>,
        scores: Vec<f64>,
        eliminated: Vec<bool>,
    ) -> FeatureRanking {
        let mut entries: Vec<(usize, RankEntry)> = universe
            .iter()
            .zip(scores)
            .zip(eliminated)
            .enumerate()
            .map(|(pos, ((feature, score), eliminated))| {
                (pos, RankEntry { feature: feature.clone(), score, eliminated })
            })
            .collect();
        entries.sort_by(|(pa, a), (pb, b)| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.eliminated.cmp(&b.eliminated))
                .then(pa.cmp(pb))
        });
        FeatureRanking {
            provenance,
            universe,
            entries: entries.into_iter().map(|(_, e)| e).collect(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> FeatureRanking {
        self.provenance = provenance;
        self
    }

    /// The score a ranking assigns a feature, if the feature is present.
    pub fn score_of(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.score)
    }
}

/// Propagate per-component tree importances back to original features.
///
/// The combined score of original feature j is Σ_k |W[j][k]| · imp[k] over
/// the retained components; the pure score drops the importance weights
/// (Σ_k |W[j][k]|). Features removed before PCA score 0 in both rankings.
/// Returns (combined, pure).
pub fn combined_ranking(
    pca: &PcaModel,
    imp: &[f64],
    trace: &EliminationTrace,
) -> Result<(FeatureRanking, FeatureRanking)> {
    if pca.h() != trace.surviving_indices.len() {
        return Err(Error::DimensionMismatch { expected: trace.surviving_indices.len(), got: pca.h() });
    }
    if imp.len() != pca.ell() {
        return Err(Error::DimensionMismatch { expected: pca.ell(), got: imp.len() });
    }
    let universe = trace.original_features.clone();
    let d = universe.len();
    let mut combined = vec![0.0; d];
    let mut pure = vec![0.0; d];
    let mut eliminated = vec![true; d];
    for (row, &orig) in trace.surviving_indices.iter().enumerate() {
        eliminated[orig] = false;
        for (k, &importance) in imp.iter().enumerate() {
            let w = pca.loadings[(row, k)].abs();
            combined[orig] += w * importance;
            pure[orig] += w;
        }
    }
    Ok((
        FeatureRanking::from_scores(Provenance::BestModel, universe.clone(), combined, eliminated.clone()),
        FeatureRanking::from_scores(Provenance::BestModel, universe, pure, eliminated),
    ))
}

/// Per-feature arithmetic mean of scores across rankings sharing one
/// universe. A feature eliminated in some trials averages its zeros in; it
/// is marked eliminated only when every input eliminated it.
pub fn mean_ranking(rankings: &[FeatureRanking]) -> Result<FeatureRanking> {
    let first = rankings.first().ok_or(Error::EmptyRankings)?;
    for r in rankings {
        if r.universe != first.universe {
            return Err(Error::UniverseMismatch(
                "mean over rankings requires identical feature universes".into(),
            ));
        }
    }
    let universe = first.universe.clone();
    let n = rankings.len() as f64;
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    let mut all_eliminated: BTreeMap<&str, bool> = BTreeMap::new();
    for name in &universe {
        sums.insert(name, 0.0);
        all_eliminated.insert(name, true);
    }
    for r in rankings {
        for e in &r.entries {
            *sums.get_mut(e.feature.as_str()).unwrap() += e.score;
            if !e.eliminated {
                *all_eliminated.get_mut(e.feature.as_str()).unwrap() = false;
            }
        }
    }
    let scores: Vec<f64> = universe.iter().map(|f| sums[f.as_str()] / n).collect();
    let eliminated: Vec<bool> = universe.iter().map(|f| all_eliminated[f.as_str()]).collect();
    Ok(FeatureRanking::from_scores(Provenance::MeanOverTrials, universe, scores, eliminated))
}

/// Fractional ranks (1 = highest score) of the features of `r` that appear
/// in `shared`, with tied scores assigned the average of their positions.
fn fractional_ranks(r: &FeatureRanking, shared: &BTreeSet<&str>) -> BTreeMap<String, f64> {
    let filtered: Vec<&RankEntry> =
        r.entries.iter().filter(|e| shared.contains(e.feature.as_str())).collect();
    let mut ranks = BTreeMap::new();
    let mut i = 0;
    while i < filtered.len() {
        let mut j = i;
        while j < filtered.len() && filtered[j].score == filtered[i].score {
            j += 1;
        }
        // Positions i+1 ..= j share the average rank.
        let avg = (i + 1 + j) as f64 / 2.0;
        for e in &filtered[i..j] {
            ranks.insert(e.feature.clone(), avg);
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation between two rankings over their shared
/// features. Tied scores receive average ranks; the result is in [-1, 1].
pub fn rank_agreement(a: &FeatureRanking, b: &FeatureRanking) -> Result<f64> {
    let features_a: BTreeSet<&str> = a.entries.iter().map(|e| e.feature.as_str()).collect();
    let shared: BTreeSet<&str> = b
        .entries
        .iter()
        .map(|e| e.feature.as_str())
        .filter(|f| features_a.contains(f))
        .collect();
    if shared.len() < 2 {
        return Err(Error::TooFewSharedFeatures(shared.len()));
    }
    let ranks_a = fractional_ranks(a, &shared);
    let ranks_b = fractional_ranks(b, &shared);
    let xs: Vec<f64> = shared.iter().map(|f| ranks_a[*f]).collect();
    let ys: Vec<f64> = shared.iter().map(|f| ranks_b[*f]).collect();

    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("rank variance is zero; agreement undefined".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// An expert-supplied feature ordering: (feature, rank), rank 1 = most
/// important. Ranks may tie.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRanking {
    pub entries: Vec<(String, usize)>,
}

impl ExpertRanking {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::EmptyRankings);
        }
        let mut seen = BTreeSet::new();
        for (feature, rank) in &self.entries {
            if !seen.insert(feature.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate feature '{feature}' in expert ranking")));
            }
            if *rank == 0 {
                return Err(Error::SchemaMismatch(format!("expert rank for '{feature}' must be >= 1")));
            }
        }
        Ok(())
    }

    /// Convert to a scored ranking: rank r maps to score max_rank + 1 − r,
    /// so rank 1 scores highest and tied ranks tie in score.
    pub fn to_ranking(&self) -> Result<FeatureRanking> {
        self.validate()?;
        let max_rank = self.entries.iter().map(|(_, r)| *r).max().unwrap();
        let universe: Vec<String> = self.entries.iter().map(|(f, _)| f.clone()).collect();
        let scores: Vec<f64> = self.entries.iter().map(|(_, r)| (max_rank + 1 - r) as f64).collect();
        let eliminated = vec![false; universe.len()];
        Ok(FeatureRanking::from_scores(Provenance::Expert, universe, scores, eliminated))
    }

    /// The rank the expert assigned a feature, if any.
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().find(|(f, _)| f == feature).map(|(_, r)| *r)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
            _ => unreachable!("is_io_error guarantees an io kind"),
        }
    } else {
        Error::Csv { path: path.to_path_buf(), source: e }
    }
}

/// Read a two-column `feature,rank` CSV.
pub fn load_expert_csv(path: &Path) -> Result<ExpertRanking> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "feature" || &headers[1] != "rank" {
        return Err(Error::SchemaMismatch(format!(
            "expert ranking must have header 'feature,rank', found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let feature = record.get(0).unwrap_or("").trim().to_string();
        let rank_text = record.get(1).unwrap_or("").trim();
        let rank: usize = rank_text.parse().map_err(|_| Error::NonNumericCell {
            column: "rank".into(),
            row: i + 1,
            value: rank_text.to_string(),
        })?;
        entries.push((feature, rank));
    }
    let ranking = ExpertRanking { entries };
    ranking.validate()?;
    Ok(ranking)
}

/// The best trial as scored on the non-obsolete hold-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestOnNonobsolete {
    pub seed: u64,
    pub obsolete_accuracy: f64,
    pub nonobsolete_accuracy: f64,
}

/// Expert comparison block of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertComparison {
    pub ranking: FeatureRanking,
    pub agreement_with_mean: f64,
    pub agreement_with_best: f64,
}

/// Everything a `run` produces, serializable as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub manifest: RunManifest,
    pub config: PipelineConfig,
    pub stats: AccuracyStats,
    /// Trials that scored exactly 0 (flagged because they zero the
    /// geometric mean).
    pub zero_accuracy_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaderboard: Option<Vec<LeaderboardEntry>>,
    /// The trial with the highest held-out accuracy (earliest on ties).
    pub best_trial: TrialResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_trial_nonobsolete_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_on_nonobsolete: Option<BestOnNonobsolete>,
    pub mean_ranking: FeatureRanking,
    /// Combined (importance-weighted) ranking of the best trial.
    pub best_ranking: FeatureRanking,
    /// Unweighted loading-contribution ranking of the best trial.
    pub pca_ranking: FeatureRanking,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_on_nonobsolete_ranking: Option<FeatureRanking>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<ExpertComparison>,
}

impl EvaluationReport {
    /// The rankings in table order: mean over trials, best model, best on
    /// the hold-out (when present), expert (when present).
    pub fn standard_rankings(&self) -> Vec<FeatureRanking> {
        let mut rankings = vec![self.mean_ranking.clone(), self.best_ranking.clone()];
        if let Some(r) = &self.best_on_nonobsolete_ranking {
            rankings.push(r.clone());
        }
        if let Some(e) = &self.expert {
            rankings.push(e.ranking.clone());
        }
        rankings
    }
}

/// Assemble the full report from finished trials.
///
/// The headline (red-bar) model is the trial with the highest held-out
/// accuracy, earliest trial on ties. When a non-obsolete hold-out is given,
/// every trial is additionally scored on it frozen, and the green-bar model
/// is the trial maximizing hold-out accuracy (ties: higher held-out
/// obsolete accuracy, then earliest trial).
pub fn build_report(
    o: &Dataset,
    u: Option<&Dataset>,
    trials: &[TrialResult],
    stats: &AccuracyStats,
    expert: Option<&ExpertRanking>,
    manifest: RunManifest,
    leaderboard: Option<Vec<LeaderboardEntry>>,
) -> Result<EvaluationReport> {
    if trials.is_empty() {
        return Err(Error::EmptyDataset("report over zero trials".into()));
    }

    let mut per_trial_combined = Vec::with_capacity(trials.len());
    for t in trials {
        let (combined, _) = combined_ranking(&t.pca, &t.tree.importances(), &t.elimination)?;
        per_trial_combined.push(combined);
    }
    let mean = mean_ranking(&per_trial_combined)?;

    let best_idx = trials
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.test_accuracy
                .partial_cmp(&b.test_accuracy)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .unwrap();
    let best = &trials[best_idx];
    let (best_combined, best_pure) = combined_ranking(&best.pca, &best.tree.importances(), &best.elimination)?;

    let mut best_trial_nonobsolete_accuracy = None;
    let mut best_on_nonobsolete = None;
    let mut best_on_nonobsolete_ranking = None;
    if let Some(u) = u {
        let u_scores: Vec<f64> =
            trials.iter().map(|t| evaluate_nonobsolete(t, u)).collect::<Result<_>>()?;
        best_trial_nonobsolete_accuracy = Some(u_scores[best_idx]);
        let green_idx = (0..trials.len())
            .max_by(|&ia, &ib| {
                u_scores[ia]
                    .partial_cmp(&u_scores[ib])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(
                        trials[ia]
                            .test_accuracy
                            .partial_cmp(&trials[ib].test_accuracy)
                            .unwrap_or(std::cmp::Ordering::Equal),
                    )
                    .then(ib.cmp(&ia))
            })
            .unwrap();
        let green = &trials[green_idx];
        best_on_nonobsolete = Some(BestOnNonobsolete {
            seed: green.seed,
            obsolete_accuracy: green.test_accuracy,
            nonobsolete_accuracy: u_scores[green_idx],
        });
        let (green_combined, _) = combined_ranking(&green.pca, &green.tree.importances(), &green.elimination)?;
        best_on_nonobsolete_ranking =
            Some(green_combined.with_provenance(Provenance::BestOnNonobsolete));
    }

    let expert_block = match expert {
        Some(expert) => {
            let dataset_features = o.feature_names();
            let known: BTreeSet<&str> = dataset_features.iter().map(|s| s.as_str()).collect();
            if let Some((unknown, _)) = expert.entries.iter().find(|(f, _)| !known.contains(f.as_str())) {
                return Err(Error::UniverseMismatch(format!(
                    "expert ranking names feature '{unknown}' which is not in the dataset"
                )));
            }
            let ranking = expert.to_ranking()?;
            let agreement_with_mean = rank_agreement(&mean, &ranking)?;
            let agreement_with_best = rank_agreement(&best_combined, &ranking)?;
            Some(ExpertComparison { ranking, agreement_with_mean, agreement_with_best })
        }
        None => None,
    };

    let zero_accuracy_trials = stats.per_trial.iter().filter(|&&(_, a)| a == 0.0).count();
    Ok(EvaluationReport {
        manifest,
        config: trials[0].config.clone(),
        stats: stats.clone(),
        zero_accuracy_trials,
        leaderboard,
        best_trial: best.clone(),
        best_trial_nonobsolete_accuracy,
        best_on_nonobsolete,
        mean_ranking: mean,
        best_ranking: best_combined,
        pca_ranking: best_pure,
        best_on_nonobsolete_ranking,
        expert: expert_block,
    })
}

fn fmt_float(v: f64) -> String {
    format!("{v}")
}

fn log10_or_sentinel(v: f64) -> String {
    if v > 0.0 {
        fmt_float(v.log10())
    } else {
        "-inf".to_string()
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// Write `report.json`, `rankings.csv`, `contributions_plot.csv`, and
/// `best_model_rules.txt` into `out_dir`. The CSV tables collect whatever
/// rankings are passed: the mean-over-trials, best-model, and
/// best-on-hold-out columns come from rankings with those provenances, the
/// expert column from an expert-provenance ranking. Rows follow the first
/// given ranking's entry order and include every universe feature.
/// Re-emission with equal inputs is byte-identical.
pub fn emit_report(report: &EvaluationReport, rankings: &[FeatureRanking], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io { path: out_dir.to_path_buf(), source: e })?;

    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Json { path: out_dir.join("report.json"), source: e })?;
    write_atomic(&out_dir.join("report.json"), &(json + "\n"))?;

    let by_provenance = |p: Provenance| rankings.iter().find(|r| r.provenance == p);
    let mean = by_provenance(Provenance::MeanOverTrials);
    let best = by_provenance(Provenance::BestModel);
    let green = by_provenance(Provenance::BestOnNonobsolete);
    let expert = by_provenance(Provenance::Expert);

    // Row order: first ranking's entry order, then any universe features it
    // somehow lacks (defensive; normally none).
    let mut row_features: Vec<String> = Vec::new();
    if let Some(first) = rankings.first() {
        row_features.extend(first.entries.iter().map(|e| e.feature.clone()));
        for f in &first.universe {
            if !row_features.contains(f) {
                row_features.push(f.clone());
            }
        }
    }

    let cell = |r: Option<&FeatureRanking>, f: &str| -> String {
        r.and_then(|r| r.score_of(f)).map(fmt_float).unwrap_or_default()
    };
    let expert_rank_cell = |f: &str| -> String {
        match expert {
            Some(r) => r
                .entries
                .iter()
                .position(|e| e.feature == f)
                .map(|pos| (pos + 1).to_string())
                .unwrap_or_default(),
            None => String::new(),
        }
    };

    let mut rankings_csv = String::from("feature,mean_score,best_model_score,best_on_nonobsolete_score,expert_rank\n");
    for f in &row_features {
        rankings_csv.push_str(&format!(
            "{f},{},{},{},{}\n",
            cell(mean, f),
            cell(best, f),
            cell(green, f),
            expert_rank_cell(f)
        ));
    }
    write_atomic(&out_dir.join("rankings.csv"), &rankings_csv)?;

    let mut plot_csv = String::from(
        "feature,mean,best_model,best_on_nonobsolete,log10_mean,log10_best_model,log10_best_on_nonobsolete\n",
    );
    for f in &row_features {
        let m = mean.and_then(|r| r.score_of(f));
        let b = best.and_then(|r| r.score_of(f));
        let g = green.and_then(|r| r.score_of(f));
        let raw = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        let log = |v: Option<f64>| v.map(log10_or_sentinel).unwrap_or_default();
        plot_csv.push_str(&format!(
            "{f},{},{},{},{},{},{}\n",
            raw(m),
            raw(b),
            raw(g),
            log(m),
            log(b),
            log(g)
        ));
    }
    write_atomic(&out_dir.join("contributions_plot.csv"), &plot_csv)?;

    write_atomic(&out_dir.join("best_model_rules.txt"), &report.best_trial.tree.describe())?;
    Ok(())
}
