use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ResampleError;
use crate::cube::Dataset;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Stratify on `(class, year)` instead of class alone.
    pub stratify_year: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.7, stratify_year: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSplit {
    pub class: u8,
    pub year: Option<i32>,
    pub rows: usize,
    pub train: usize,
}

/// Per-neighborhood row counts on each side of a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodCoverage {
    pub neighborhood: String,
    pub train: usize,
    pub test: usize,
    /// Absent from one side.
    pub flagged: bool,
}

/// Indices into the input dataset, each side in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub strata: Vec<StratumSplit>,
    pub coverage: Vec<NeighborhoodCoverage>,
}

impl SplitResult {
    pub fn flagged_neighborhoods(&self) -> impl Iterator<Item = &str> {
        self.coverage.iter().filter(|c| c.flagged).map(|c| c.neighborhood.as_str())
    }
}

/// Round to nearest, halves to even. Values within 1e-9 of a half count as
/// halves so that e.g. `0.7 * 5` behaves like 3.5.
pub fn round_half_even(x: f64) -> f64 {
    let floor = x.floor();
    if (x - floor - 0.5).abs() < 1e-9 {
        if floor % 2.0 == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        x.round()
    }
}

fn stratum_name(class: u8, year: Option<i32>) -> String {
    match year {
        Some(y) => format!("(class {class}, year {y})"),
        None => format!("(class {class})"),
    }
}

/// Stratified split. Rows are first put in `(year, month, neighborhood)`
/// order so the outcome depends only on the data and the seed, never on the
/// input row order. Each stratum sends `round_half_even(f * n)` rows to train
/// (at least 1, at most `n - 1`); strata are then nudged one row at a time
/// until the total equals `round_half_even(f * N)`.
pub fn stratified_split<T>(dataset: &Dataset<T>, spec: &SplitSpec) -> Result<SplitResult, ResampleError> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(ResampleError::Fraction(f));
    }
    let mut order: Vec<usize> = (0..dataset.rows.len()).collect();
    order.sort_by(|&a, &b| dataset.rows[a].meta.cmp(&dataset.rows[b].meta).then(a.cmp(&b)));

    let mut strata: BTreeMap<(u8, Option<i32>), Vec<usize>> = BTreeMap::new();
    for i in order {
        let row = &dataset.rows[i];
        let year = spec.stratify_year.then_some(row.meta.year);
        strata.entry((row.class, year)).or_default().push(i);
    }
    for ((class, year), rows) in &strata {
        if rows.len() < 2 {
            return Err(ResampleError::StratumTooSmall { stratum: stratum_name(*class, *year), rows: rows.len() });
        }
    }

    let mut sizes: Vec<usize> = strata
        .values()
        .map(|rows| {
            let n = rows.len();
            (round_half_even(f * n as f64) as usize).clamp(1, n - 1)
        })
        .collect();
    let residual = |s: usize, n: usize| f * n as f64 - s as f64;
    let lens: Vec<usize> = strata.values().map(Vec::len).collect();
    let target = round_half_even(f * dataset.rows.len() as f64) as usize;
    loop {
        let total: usize = sizes.iter().sum();
        let pick = if total < target {
            // Stratum most under its exact share that can still give a row.
            (0..sizes.len())
                .filter(|&s| sizes[s] + 1 < lens[s])
                .max_by(|&a, &b| residual(sizes[a], lens[a]).total_cmp(&residual(sizes[b], lens[b])).then(b.cmp(&a)))
                .map(|s| (s, true))
        } else if total > target {
            (0..sizes.len())
                .filter(|&s| sizes[s] > 1)
                .min_by(|&a, &b| residual(sizes[a], lens[a]).total_cmp(&residual(sizes[b], lens[b])).then(a.cmp(&b)))
                .map(|s| (s, false))
        } else {
            None
        };
        match pick {
            Some((s, true)) => sizes[s] += 1,
            Some((s, false)) => sizes[s] -= 1,
            None => break,
        }
    }

    let mut rng = stream(spec.seed, &[]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut summary = Vec::new();
    for (((class, year), rows), &size) in strata.iter().zip(&sizes) {
        let mut rows = rows.clone();
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..size]);
        test.extend_from_slice(&rows[size..]);
        summary.push(StratumSplit { class: *class, year: *year, rows: rows.len(), train: size });
    }
    train.sort_unstable();
    test.sort_unstable();

    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for &i in &train {
        counts.entry(dataset.rows[i].meta.neighborhood.as_str()).or_default().0 += 1;
    }
    for &i in &test {
        counts.entry(dataset.rows[i].meta.neighborhood.as_str()).or_default().1 += 1;
    }
    let coverage = counts
        .into_iter()
        .map(|(n, (tr, te))| NeighborhoodCoverage { neighborhood: n.to_string(), train: tr, test: te, flagged: tr == 0 || te == 0 })
        .collect();
    Ok(SplitResult { train, test, strata: summary, coverage })
}
