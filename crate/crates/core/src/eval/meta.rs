//! Dataset summary statistics used as the meta-feature block of the game state.
//!
//! Every statistic ignores missing cells. Degenerate inputs fall back to 0: a column with
//! zero spread has skewness, kurtosis and target correlation 0, and averages over an
//! empty set of numeric columns are 0.

use crate::game::{MetaFeatures, META_LEN};

use super::dataset::{ColumnData, Dataset, Target};

struct Moments {
    mean: f64,
    std: f64,
    skew: f64,
    excess_kurtosis: f64,
}

fn moments(values: &[f64]) -> Moments {
    let present: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if present.is_empty() {
        return Moments {
            mean: 0.0,
            std: 0.0,
            skew: 0.0,
            excess_kurtosis: 0.0,
        };
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in &present {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();
    if std == 0.0 {
        return Moments {
            mean,
            std,
            skew: 0.0,
            excess_kurtosis: 0.0,
        };
    }
    Moments {
        mean,
        std,
        skew: m3 / (m2 * std),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

/// Pearson correlation over rows where `x` is present; 0 when undefined.
fn correlation(x: &[f64], target: &Target) -> f64 {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .map(|(i, &v)| (v, target.as_f64(i)))
        .collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

fn is_constant(data: &ColumnData) -> bool {
    match data {
        ColumnData::Numeric(v) => {
            let mut present = v.iter().filter(|x| !x.is_nan());
            match present.next() {
                None => true,
                Some(first) => present.all(|x| x == first),
            }
        }
        ColumnData::Categorical(v) => {
            let mut present = v.iter().flatten();
            match present.next() {
                None => true,
                Some(first) => present.all(|x| x == first),
            }
        }
    }
}

fn mean_or_zero(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Computes the 16 statistics on the full dataset (before any split).
pub fn meta_features(dataset: &Dataset) -> MetaFeatures {
    let n_rows = dataset.n_rows();
    let n_cols = dataset.n_features();
    let columns = dataset.columns();

    let numeric: Vec<&[f64]> = columns
        .iter()
        .filter_map(|c| match &c.data {
            ColumnData::Numeric(v) => Some(v.as_slice()),
            ColumnData::Categorical(_) => None,
        })
        .collect();
    let n_numeric = numeric.len();
    let n_categorical = n_cols - n_numeric;

    let missing: usize = columns
        .iter()
        .map(|c| (0..n_rows).filter(|&r| c.is_missing(r)).count())
        .sum();
    let cells = n_rows * n_cols;
    let missing_ratio = if cells == 0 { 0.0 } else { missing as f64 / cells as f64 };

    let (class_count, entropy, majority) = match dataset.target() {
        Target::Classes { labels, names } => {
            let mut counts = vec![0usize; names.len()];
            for &l in labels {
                counts[l] += 1;
            }
            let total = labels.len() as f64;
            let entropy = counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / total;
                    -p * p.log2()
                })
                .sum::<f64>();
            let majority = *counts.iter().max().unwrap_or(&0) as f64 / total;
            (names.len() as f64, entropy, majority)
        }
        Target::Values(_) => (0.0, 0.0, 0.0),
    };

    let stats: Vec<Moments> = numeric.iter().map(|v| moments(v)).collect();
    let corr: Vec<f64> = numeric
        .iter()
        .map(|v| correlation(v, dataset.target()).abs())
        .collect();
    let constant = columns.iter().filter(|c| is_constant(&c.data)).count();

    let ratio = |count: usize| if n_cols == 0 { 0.0 } else { count as f64 / n_cols as f64 };

    let values: [f64; META_LEN] = [
        (n_rows as f64).ln_1p(),
        n_cols as f64,
        n_numeric as f64,
        n_categorical as f64,
        missing_ratio,
        class_count,
        entropy,
        majority,
        mean_or_zero(&stats.iter().map(|m| m.mean).collect::<Vec<_>>()),
        mean_or_zero(&stats.iter().map(|m| m.std).collect::<Vec<_>>()),
        mean_or_zero(&stats.iter().map(|m| m.skew.abs()).collect::<Vec<_>>()),
        mean_or_zero(&stats.iter().map(|m| m.excess_kurtosis.abs()).collect::<Vec<_>>()),
        mean_or_zero(&corr),
        ratio(n_numeric),
        (n_rows as f64 / n_cols.max(1) as f64).ln_1p(),
        ratio(constant),
    ];
    MetaFeatures::new(values).expect("meta-features are finite and ratios bounded")
}
