use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ChainConfig, Family};
use super::fit::{fit_entry, EntryContext, FitData};
use crate::error::{Error, Result};
use crate::pack::BoundEntry;

/// Fixed shuffle seed so fold membership is reproducible.
const FOLD_SEED: u64 = 0x00c0_ffee_5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMetric {
    /// Root mean squared error on the model scale.
    Rmse,
    /// Mean negative log-likelihood per held-out row.
    LogLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub entry: String,
    pub metric: CvMetric,
    pub folds: usize,
    pub fold_sizes: Vec<usize>,
    /// `None` for skipped folds.
    pub per_fold: Vec<Option<f64>>,
    pub skipped: Vec<String>,
    pub mean: f64,
    pub sd: f64,
}

/// Fold index for each of `n` positions: a fixed-seed shuffle, then
/// round-robin, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(FOLD_SEED));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

const PROB_FLOOR: f64 = 1e-15;

/// K-fold cross-validation of one chain entry.
pub fn crossvalidate(data: FitData<'_>, config: &ChainConfig, entry: usize, folds: usize) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    if entry >= config.entries.len() {
        return Err(Error::InvalidArgument(format!("no chain entry {entry}")));
    }
    let tables = data.tables();
    let schema = tables[0].schema();
    config.validate(schema)?;
    let ctx = EntryContext::new(&tables, config, entry)?;
    let table = tables[0];
    let mut rows: Vec<usize> = ctx.eligible(table, None).into_values().flatten().collect();
    rows.sort_unstable();
    let n = rows.len();
    if n < folds {
        return Err(Error::InsufficientData { n, k: folds });
    }
    let assignment = fold_assignment(n, folds);
    let family = ctx.entry.family;
    let metric = if family.is_categorical() {
        CvMetric::LogLoss
    } else {
        CvMetric::Rmse
    };
    let codes_in = |rows: &mut dyn Iterator<Item = usize>| -> BTreeSet<u32> {
        rows.filter_map(|r| table.column(ctx.dependent).code(r)).collect()
    };
    let all_levels = if family.is_categorical() {
        codes_in(&mut rows.iter().copied())
    } else {
        BTreeSet::new()
    };

    let mut fold_sizes = vec![0; folds];
    assignment.iter().for_each(|&f| fold_sizes[f] += 1);
    let mut per_fold = Vec::with_capacity(folds);
    let mut skipped = Vec::new();
    for f in 0..folds {
        let train: Vec<usize> = rows
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a != f)
            .map(|(&r, _)| r)
            .collect();
        let test: Vec<usize> = rows
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == f)
            .map(|(&r, _)| r)
            .collect();
        if family.is_categorical() && codes_in(&mut train.iter().copied()) != all_levels {
            skipped.push(format!("fold {f}: training part lacks an outcome level"));
            per_fold.push(None);
            continue;
        }
        let fit = match fit_entry(&[table], config, entry, Some(&train)) {
            Ok(fit) => fit,
            Err(e) => {
                skipped.push(format!("fold {f}: {e}"));
                per_fold.push(None);
                continue;
            }
        };
        let bound = BoundEntry::new(&fit, schema)?;
        let mut total = 0.0;
        let mut count = 0usize;
        let mut codes = Vec::new();
        let mut eta = Vec::new();
        let mut probs = Vec::new();
        for &r in &test {
            let Some(eq) = bound.equation_for(table, r, &mut codes) else { continue };
            let mut x = vec![0.0; eq.design.ncols()];
            eq.design.fill_row(table, r, &mut x);
            match family {
                Family::Linear | Family::LogitLinear => {
                    let e = ctx.response(table, r) - eq.eta(&x);
                    total += e * e;
                }
                Family::Logistic | Family::Multinomial => {
                    eq.class_probabilities(&x, &mut eta, &mut probs);
                    let y = table.column(ctx.dependent).code(r).expect("eligible row");
                    let p = if family == Family::Logistic {
                        probs[y as usize]
                    } else {
                        eq.level_codes
                            .iter()
                            .position(|&c| c == y)
                            .map_or(0.0, |i| probs[i])
                    };
                    total -= p.max(PROB_FLOOR).ln();
                }
            }
            count += 1;
        }
        if count == 0 {
            skipped.push(format!("fold {f}: no held-out row has an equation"));
            per_fold.push(None);
            continue;
        }
        let mean = total / count as f64;
        per_fold.push(Some(if metric == CvMetric::Rmse { mean.sqrt() } else { mean }));
    }
    let done: Vec<f64> = per_fold.iter().flatten().copied().collect();
    let (mean, sd) = match done.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (done[0], 0.0),
        m => {
            let mu = done.iter().sum::<f64>() / m as f64;
            let var = done.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1) as f64;
            (mu, var.sqrt())
        }
    };
    Ok(CvReport {
        entry: ctx.entry.dependent.clone(),
        metric,
        folds,
        fold_sizes,
        per_fold,
        skipped,
        mean,
        sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_exactly() {
        let a = fold_assignment(100, 10);
        let mut sizes = [0; 10];
        a.iter().for_each(|&f| sizes[f] += 1);
        assert_eq!(sizes, [10; 10]);
        let b = fold_assignment(103, 10);
        let mut sizes = [0usize; 10];
        b.iter().for_each(|&f| sizes[f] += 1);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert_eq!(fold_assignment(100, 10), a);
    }
}
