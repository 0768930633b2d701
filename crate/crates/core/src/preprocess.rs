//! Binary-field normalization, Pearson correlation, and correlation-threshold
//! backward elimination.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Which pairwise value backward elimination compares against the threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMode {
    /// |r| > alpha — redundancy regardless of sign (the default).
    #[default]
    Absolute,
    /// r > alpha — only positive correlation counts; with this mode the
    /// whole threshold range [-1, 1] is meaningful.
    Signed,
}

/// Per-column statistics frozen at fit time for the binary rescaling
/// `x -> 1 + 4 (x - mean) / std`.
///
/// `std` is the population standard deviation (divide by n), which makes
/// the fitted column's own outputs have mean exactly 1 and population
/// standard deviation exactly 4. Applied to other data (test rows, the
/// non-obsolete hold-out) the frozen statistics are reused as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryNormalizer {
    pub columns: Vec<NormalizerColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerColumn {
    pub name: String,
    /// `Some((mean, std))` for binary columns, `None` for columns left alone.
    pub stats: Option<(f64, f64)>,
}

impl BinaryNormalizer {
    /// Capture mean/std of every binary column. Errors if a binary column is
    /// constant (the rescaling would divide by zero); callers may drop the
    /// column and retry.
    pub fn fit(ds: &Dataset) -> Result<BinaryNormalizer> {
        let n = ds.n_rows();
        if n == 0 {
            return Err(Error::EmptyDataset("cannot fit a normalizer on zero rows".into()));
        }
        let mut columns = Vec::with_capacity(ds.n_features());
        for (j, f) in ds.features.iter().enumerate() {
            let stats = if f.kind == FeatureKind::Binary {
                let col = ds.column(j);
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                if var == 0.0 {
                    return Err(Error::ZeroVarianceColumn(f.name.clone()));
                }
                Some((mean, var.sqrt()))
            } else {
                None
            };
            columns.push(NormalizerColumn { name: f.name.clone(), stats });
        }
        Ok(BinaryNormalizer { columns })
    }

    /// Apply the frozen statistics to a dataset with the same feature list.
    /// Rescaled columns are re-kinded as continuous (they no longer hold
    /// only {0,1}).
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.n_features() != self.columns.len() {
            return Err(Error::DimensionMismatch { expected: self.columns.len(), got: ds.n_features() });
        }
        for (f, c) in ds.features.iter().zip(&self.columns) {
            if f.name != c.name {
                return Err(Error::SchemaMismatch(format!(
                    "normalizer was fitted on column {:?}, dataset has {:?}",
                    c.name, f.name
                )));
            }
        }
        let mut out = ds.clone();
        for (j, c) in self.columns.iter().enumerate() {
            if let Some((mean, std)) = c.stats {
                for i in 0..out.n_rows() {
                    let v = out.x[(i, j)];
                    out.x[(i, j)] = 1.0 + 4.0 * (v - mean) / std;
                }
                out.features[j].kind = FeatureKind::Continuous;
            }
        }
        Ok(out)
    }
}

/// Fit-and-apply convenience: rescale every binary column of `ds` using its
/// own statistics. Non-binary columns are untouched.
pub fn normalize_binary_columns(ds: &Dataset) -> Result<Dataset> {
    BinaryNormalizer::fit(ds)?.apply(ds)
}

/// Symmetric Pearson correlation matrix with its feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub feature_names: Vec<String>,
    pub values: Matrix,
}

/// Pearson r for every column pair. The diagonal is exactly 1, the matrix
/// exactly symmetric, and entries are clamped into [-1, 1] to absorb
/// last-ulp rounding.
pub fn pearson_matrix(ds: &Dataset) -> Result<CorrelationMatrix> {
    let n = ds.n_rows();
    let d = ds.n_features();
    if n < 2 {
        return Err(Error::TooFewRows { need: 2, got: n });
    }
    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut ss = Vec::with_capacity(d);
    for j in 0..d {
        let col = ds.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let s: f64 = c.iter().map(|v| v * v).sum();
        if s == 0.0 {
            return Err(Error::ZeroVarianceColumn(ds.features[j].name.clone()));
        }
        centered.push(c);
        ss.push(s);
    }
    let mut values = Matrix::identity(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let num: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = (num / (ss[i] * ss[j]).sqrt()).clamp(-1.0, 1.0);
            values[(i, j)] = r;
            values[(j, i)] = r;
        }
    }
    Ok(CorrelationMatrix { feature_names: ds.feature_names(), values })
}

/// One elimination step's record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedFeature {
    pub name: String,
    /// Pearson r of the offending pair at the step where removal happened.
    pub correlation: f64,
    /// The other member of the pair (which survived that step).
    pub partner: String,
}

/// Full record of a backward-elimination pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationTrace {
    pub alpha: f64,
    pub mode: CorrelationMode,
    /// Original feature order, before anything was removed.
    pub original_features: Vec<String>,
    /// Removals in the order they happened.
    pub removed: Vec<RemovedFeature>,
    /// Indices into `original_features` of the surviving columns, ascending.
    pub surviving_indices: Vec<usize>,
}

impl EliminationTrace {
    pub fn surviving_names(&self) -> Vec<String> {
        self.surviving_indices.iter().map(|&j| self.original_features[j].clone()).collect()
    }

    pub fn h(&self) -> usize {
        self.surviving_indices.len()
    }
}

/// Iteratively remove the more redundant member of the worst correlated
/// pair until no pair exceeds `alpha` (strictly) in the chosen mode.
///
/// Correlations between surviving columns do not change when another column
/// is dropped, so the matrix is computed once and the loop just shrinks the
/// active set. That also makes the removal sequence independent of `alpha`:
/// the threshold only decides where the sequence stops, so a looser
/// threshold always removes a prefix of what a stricter one removes.
///
/// Tie-breaks, all deterministic:
/// * worst pair — first (i, j) in lexicographic original-index order;
/// * victim within the pair — the member with the larger mean absolute
///   correlation to all other surviving features, then the larger original
///   index.
pub fn backward_eliminate(
    ds: &Dataset,
    alpha: f64,
    mode: CorrelationMode,
) -> Result<(Dataset, EliminationTrace)> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside [-1, 1]")));
    }
    let corr = pearson_matrix(ds)?;
    let d = ds.n_features();
    let mut alive = vec![true; d];
    let mut removed = Vec::new();

    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for i in 0..d {
            if !alive[i] {
                continue;
            }
            for (j, &alive_j) in alive.iter().enumerate().skip(i + 1) {
                if !alive_j {
                    continue;
                }
                let r = corr.values[(i, j)];
                let value = match mode {
                    CorrelationMode::Absolute => r.abs(),
                    CorrelationMode::Signed => r,
                };
                // Strict > keeps the first (lexicographically smallest)
                // pair on exact ties.
                if worst.is_none_or(|(_, _, w)| value > w) {
                    worst = Some((i, j, value));
                }
            }
        }
        let Some((i, j, value)) = worst else { break };
        if value <= alpha {
            break;
        }

        let mean_abs = |k: usize| -> f64 {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (m, &alive_m) in alive.iter().enumerate() {
                if m != k && alive_m {
                    sum += corr.values[(k, m)].abs();
                    count += 1;
                }
            }
            sum / count as f64
        };
        let (mi, mj) = (mean_abs(i), mean_abs(j));
        let victim = if mi > mj {
            i
        } else if mj > mi {
            j
        } else {
            i.max(j)
        };
        let partner = if victim == i { j } else { i };
        removed.push(RemovedFeature {
            name: corr.feature_names[victim].clone(),
            correlation: corr.values[(i, j)],
            partner: corr.feature_names[partner].clone(),
        });
        alive[victim] = false;
    }

    let surviving: Vec<usize> = (0..d).filter(|&k| alive[k]).collect();
    if surviving.is_empty() {
        // Unreachable with pairwise removal (the last pair always leaves a
        // survivor), but kept as a hard stop rather than a silent empty set.
        return Err(Error::AlphaTooStrict(alpha));
    }
    let reduced = ds.select_features(&surviving)?;
    let trace = EliminationTrace {
        alpha,
        mode,
        original_features: corr.feature_names,
        removed,
        surviving_indices: surviving,
    };
    Ok((reduced, trace))
}
