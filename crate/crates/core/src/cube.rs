//! Month x neighborhood aggregation of clean incidents and construction of the
//! labeled feature table.
//!
//! Each row describes one `(year, month, neighborhood)` cell: the month ordinal
//! plus one count per crime type. The class is 1 when the same neighborhood
//! records at least one homicide in the following calendar month. Year and
//! neighborhood travel with the row as metadata and are never model inputs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{normalize_text, CleanIncident};
use crate::matrix::FeatureMatrix;
use crate::Scalar;

pub const N_CRIME_TYPES: usize = 34;
/// Month ordinal plus one count per crime type.
pub const FEATURE_ARITY: usize = N_CRIME_TYPES + 1;
pub const MONTH_FEATURE: &str = "month";

pub const STANDARD_CRIME_LABELS: [&str; N_CRIME_TYPES] = [
    "BODILY INJURY",
    "THREAT",
    "ASSAULT",
    "INJURY",
    "THEFT",
    "TRAFFIC INJURY",
    "TRAFFIC DAMAGE",
    "DEFAMATION",
    "HOMICIDE",
    "ABANDONMENT OF THE HOME",
    "VICINAL CONFLICTS",
    "MARITAL CONFLICTS",
    "ESCAPE FROM HOME",
    "RAPE VULNERABLE",
    "OTHER ATYPICAL FACTS",
    "VEHICLE THEFT",
    "EMBEZZLEMENT",
    "DAMAGE",
    "CIVIL DAMAGE",
    "SLANDER",
    "FAMILY CONFLICTS",
    "DRUG TRAFFICKING",
    "AGGRESSION-FIGHT",
    "MISAPPROPRIATION",
    "PHYSICAL AGGRESSION",
    "RECEPTION",
    "RAPE",
    "DISAPPEARANCE OF PEOPLE",
    "ATTEMPTED MURDER",
    "POLLUTION SOUND",
    "OTHER FRAUDS",
    "DISOBEDIENCE",
    "CONTEMPT",
    "DISTURBANCES OF TRANQUILITY",
];

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("taxonomy must have exactly {N_CRIME_TYPES} distinct labels, got {0}")]
    TaxonomySize(usize),
    #[error("duplicate taxonomy label `{0}`")]
    DuplicateLabel(String),
    #[error("homicide label `{0}` is not in the taxonomy")]
    MissingHomicide(String),
    #[error("type alias `{alias}` points at unknown label `{label}`")]
    UnknownAliasTarget { alias: String, label: String },
    #[error("scaler arity {got} does not match {expected} crime features")]
    ScalerArity { expected: usize, got: usize },
    #[error("scaler feature {0} has min > max")]
    ScalerOrder(usize),
    #[error("invalid month window: {0}")]
    Window(String),
    #[error("dataset row {row}: {reason}")]
    BadRow { row: u64, reason: String },
    #[error("dataset header: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TaxonomyRepr", into = "TaxonomyRepr")]
pub struct CrimeTaxonomy {
    labels: Vec<String>,
    homicide_index: usize,
    /// Raw (normalized) crime type -> label index.
    aliases: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyRepr {
    labels: Vec<String>,
    homicide_label: String,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
}

impl TryFrom<TaxonomyRepr> for CrimeTaxonomy {
    type Error = CubeError;
    fn try_from(r: TaxonomyRepr) -> Result<Self, CubeError> {
        CrimeTaxonomy::new(r.labels, &r.homicide_label)?.with_aliases(&r.aliases)
    }
}

impl From<CrimeTaxonomy> for TaxonomyRepr {
    fn from(t: CrimeTaxonomy) -> Self {
        TaxonomyRepr {
            homicide_label: t.labels[t.homicide_index].clone(),
            aliases: t.aliases.iter().map(|(a, &i)| (a.clone(), t.labels[i].clone())).collect(),
            labels: t.labels,
        }
    }
}

impl CrimeTaxonomy {
    /// Labels are normalized with [`normalize_text`].
    pub fn new<S: AsRef<str>>(labels: impl IntoIterator<Item = S>, homicide_label: &str) -> Result<Self, CubeError> {
        let labels: Vec<String> = labels.into_iter().map(|l| normalize_text(l.as_ref())).collect();
        if labels.len() != N_CRIME_TYPES {
            return Err(CubeError::TaxonomySize(labels.len()));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(CubeError::DuplicateLabel(l.clone()));
            }
        }
        let homicide = normalize_text(homicide_label);
        let homicide_index = labels
            .iter()
            .position(|l| *l == homicide)
            .ok_or(CubeError::MissingHomicide(homicide))?;
        Ok(Self { labels, homicide_index, aliases: BTreeMap::new() })
    }

    pub fn standard() -> Self {
        Self::new(STANDARD_CRIME_LABELS, "HOMICIDE").expect("standard taxonomy is valid")
    }

    /// Map raw report types onto taxonomy labels.
    pub fn with_aliases(mut self, aliases: &BTreeMap<String, String>) -> Result<Self, CubeError> {
        for (alias, label) in aliases {
            let target = normalize_text(label);
            let ix = self
                .labels
                .iter()
                .position(|l| *l == target)
                .ok_or_else(|| CubeError::UnknownAliasTarget { alias: alias.clone(), label: label.clone() })?;
            self.aliases.insert(normalize_text(alias), ix);
        }
        Ok(self)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn homicide_index(&self) -> usize {
        self.homicide_index
    }

    /// Index of a canonical crime type, via labels first then aliases.
    pub fn index_of(&self, crime_type: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == crime_type).or_else(|| self.aliases.get(crime_type).copied())
    }

    /// `month` followed by the crime labels, in model input order.
    pub fn feature_names(&self) -> Vec<String> {
        std::iter::once(MONTH_FEATURE.to_string()).chain(self.labels.iter().cloned()).collect()
    }
}

/// The `[taxonomy]` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyConfig {
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default = "default_homicide_label")]
    pub homicide_label: String,
    /// Raw report type -> taxonomy label.
    #[serde(default)]
    pub type_map: BTreeMap<String, String>,
}

fn default_homicide_label() -> String {
    "HOMICIDE".into()
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        Self { labels: None, homicide_label: default_homicide_label(), type_map: BTreeMap::new() }
    }
}

impl TaxonomyConfig {
    pub fn build(&self) -> Result<CrimeTaxonomy, CubeError> {
        let base = match &self.labels {
            Some(labels) => CrimeTaxonomy::new(labels, &self.homicide_label)?,
            None => CrimeTaxonomy::new(STANDARD_CRIME_LABELS, &self.homicide_label)?,
        };
        base.with_aliases(&self.type_map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn of_date(d: NaiveDate) -> Self {
        Self { year: d.year(), month: d.month() }
    }

    /// Months since year 0, January.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + self.month as i64 - 1
    }

    fn from_ordinal(o: i64) -> Self {
        Self { year: o.div_euclid(12) as i32, month: (o.rem_euclid(12) + 1) as u32 }
    }

    /// December rolls over to January of the next year.
    pub fn next(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid year-month")
    }

    pub fn days(self) -> u32 {
        (self.next().first_day() - self.first_day()).num_days() as u32
    }
}

impl std::str::FromStr for YearMonth {
    type Err = String;

    /// `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected YYYY-MM, got `{s}`");
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Self::new(year, month).ok_or_else(bad)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Inclusive, non-empty range of calendar months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthWindow {
    start: YearMonth,
    end: YearMonth,
}

impl MonthWindow {
    pub fn new(start: YearMonth, end: YearMonth) -> Result<Self, CubeError> {
        if start > end {
            return Err(CubeError::Window(format!("{start} is after {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> YearMonth {
        self.start
    }

    pub fn end(&self) -> YearMonth {
        self.end
    }

    pub fn len(&self) -> usize {
        (self.end.ordinal() - self.start.ordinal() + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, ym: YearMonth) -> bool {
        self.start <= ym && ym <= self.end
    }

    pub fn months(&self) -> impl Iterator<Item = YearMonth> {
        (self.start.ordinal()..=self.end.ordinal()).map(YearMonth::from_ordinal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub year: i32,
    pub month: u32,
    pub neighborhood: String,
}

impl CellKey {
    pub fn new(year: i32, month: u32, neighborhood: impl Into<String>) -> Self {
        debug_assert!((1..=12).contains(&month));
        Self { year, month, neighborhood: neighborhood.into() }
    }

    pub fn year_month(&self) -> YearMonth {
        YearMonth { year: self.year, month: self.month }
    }

    pub fn successor(&self) -> CellKey {
        let next = self.year_month().next();
        CellKey { year: next.year, month: next.month, neighborhood: self.neighborhood.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrimeCounts(Vec<u32>);

impl Default for CrimeCounts {
    fn default() -> Self {
        Self(vec![0; N_CRIME_TYPES])
    }
}

impl CrimeCounts {
    pub fn from_vec(counts: Vec<u32>) -> Option<Self> {
        (counts.len() == N_CRIME_TYPES).then_some(Self(counts))
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    fn bump(&mut self, i: usize) {
        self.0[i] += 1;
    }
}

/// Aggregated cells over a month window.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellGrid {
    pub cells: BTreeMap<CellKey, CrimeCounts>,
    /// `None` only for an empty grid.
    pub window: Option<MonthWindow>,
    /// Incidents whose crime type is not in the taxonomy, by type.
    pub discarded: BTreeMap<String, usize>,
    /// Incidents dated outside an explicitly supplied window.
    pub out_of_window: usize,
}

impl CellGrid {
    pub fn discard_total(&self) -> usize {
        self.discarded.values().sum()
    }

    pub fn neighborhoods(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|k| k.neighborhood.as_str()).collect()
    }
}

/// Count incidents per `(year, month, neighborhood)` and crime type.
///
/// Every neighborhood seen in the window gets a cell for every month of the
/// window, zero-filled where it had no incidents. When `window` is `None` it is
/// the span of the incident dates.
pub fn aggregate(incidents: &[CleanIncident], taxonomy: &CrimeTaxonomy, window: Option<MonthWindow>) -> CellGrid {
    let window = window.or_else(|| {
        let months = incidents.iter().map(|i| YearMonth::of_date(i.occurrence_date));
        let lo = months.clone().min()?;
        let hi = months.max()?;
        MonthWindow::new(lo, hi).ok()
    });
    let Some(window) = window else {
        return CellGrid::default();
    };

    let mut grid = CellGrid { window: Some(window), ..Default::default() };
    let mut neighborhoods = BTreeSet::new();
    for inc in incidents {
        let ym = YearMonth::of_date(inc.occurrence_date);
        if !window.contains(ym) {
            grid.out_of_window += 1;
            continue;
        }
        neighborhoods.insert(inc.neighborhood.as_str());
        match taxonomy.index_of(&inc.crime_type) {
            Some(t) => grid
                .cells
                .entry(CellKey::new(ym.year, ym.month, inc.neighborhood.clone()))
                .or_default()
                .bump(t),
            None => *grid.discarded.entry(inc.crime_type.clone()).or_insert(0) += 1,
        }
    }
    for nb in neighborhoods {
        for ym in window.months() {
            grid.cells.entry(CellKey::new(ym.year, ym.month, nb)).or_default();
        }
    }
    grid
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub retained: Vec<String>,
    pub removed: Vec<String>,
    pub warning: Option<String>,
}

/// Keep only neighborhoods with at least one recorded crime in every month of
/// `window`; all cells of the other neighborhoods are removed.
pub fn filter_complete_neighborhoods(grid: &CellGrid, window: MonthWindow) -> (CellGrid, CompletenessReport) {
    let mut active: HashMap<&str, BTreeSet<YearMonth>> = HashMap::new();
    for (key, counts) in &grid.cells {
        let entry = active.entry(key.neighborhood.as_str()).or_default();
        if counts.total() > 0 && window.contains(key.year_month()) {
            entry.insert(key.year_month());
        }
    }
    let mut report = CompletenessReport::default();
    let mut keep = BTreeSet::new();
    for nb in grid.neighborhoods() {
        if active.get(nb).map_or(0, |m| m.len()) == window.len() {
            keep.insert(nb);
            report.retained.push(nb.to_string());
        } else {
            report.removed.push(nb.to_string());
        }
    }
    if report.retained.is_empty() {
        report.warning = Some(format!(
            "no neighborhood has recorded crimes in all {} months of {}..{}",
            window.len(),
            window.start(),
            window.end()
        ));
    }
    let cells = grid
        .cells
        .iter()
        .filter(|(k, _)| keep.contains(k.neighborhood.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let filtered = CellGrid {
        cells,
        window: Some(window),
        discarded: grid.discarded.clone(),
        out_of_window: grid.out_of_window,
    };
    (filtered, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow<T> {
    /// Carried for bookkeeping only; never a model input.
    pub meta: CellKey,
    pub month: u32,
    /// One value per crime type, taxonomy order.
    pub features: Vec<T>,
    pub class: u8,
}

impl<T: Scalar> FeatureRow<T> {
    /// Model input: month ordinal followed by the crime features.
    pub fn input_vector(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.features.len() + 1);
        v.push(T::of(self.month as f64));
        v.extend_from_slice(&self.features);
        v
    }
}

/// Emit one row per cell whose next calendar month is present in `cells`.
/// The class is 1 iff that successor cell has a positive homicide count.
/// Rows come out in `(year, month, neighborhood)` order.
pub fn label_next_month<T: Scalar>(cells: &BTreeMap<CellKey, CrimeCounts>, taxonomy: &CrimeTaxonomy) -> Vec<FeatureRow<T>> {
    let h = taxonomy.homicide_index();
    cells
        .iter()
        .filter_map(|(key, counts)| {
            let next = cells.get(&key.successor())?;
            Some(FeatureRow {
                meta: key.clone(),
                month: key.month,
                features: counts.as_slice().iter().map(|&c| T::of(c as f64)).collect(),
                class: u8::from(next.get(h) > 0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Scalar> ScalerParams<T> {
    /// Per-feature min and max over `rows`; `None` when `rows` is empty.
    pub fn fit(rows: &[FeatureRow<T>]) -> Option<Self> {
        let first = rows.first()?;
        let mut min = first.features.clone();
        let mut max = first.features.clone();
        for row in &rows[1..] {
            for (i, &v) in row.features.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        Some(Self { min, max })
    }

    pub fn validate(&self, expected: usize) -> Result<(), CubeError> {
        if self.min.len() != expected || self.max.len() != expected {
            return Err(CubeError::ScalerArity { expected, got: self.min.len().min(self.max.len()) });
        }
        if let Some(i) = (0..expected).find(|&i| !(self.min[i] <= self.max[i])) {
            return Err(CubeError::ScalerOrder(i));
        }
        Ok(())
    }

    /// `(x - min) / (max - min)`, 0 for a constant feature, optionally clamped to `[0, 1]`.
    pub fn scale(&self, i: usize, x: T, clamp: bool) -> T {
        let span = self.max[i] - self.min[i];
        if span <= T::zero() {
            return T::zero();
        }
        let v = (x - self.min[i]) / span;
        if clamp {
            v.max(T::zero()).min(T::one())
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizeScope {
    /// Fit the scaler on the whole dataset before splitting.
    #[default]
    Full,
    /// Fit on the training split only and apply to the test split.
    TrainFit,
    None,
}

impl NormalizeScope {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::TrainFit => "train-fit",
            Self::None => "none",
        }
    }
}

impl std::fmt::Display for NormalizeScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NormalizeScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Self::Full),
            "train-fit" => Ok(Self::TrainFit),
            "none" => Ok(Self::None),
            other => Err(format!("unknown normalization scope `{other}` (full, train-fit, none)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub rows: Vec<FeatureRow<T>>,
    pub taxonomy: CrimeTaxonomy,
    pub scaler: Option<ScalerParams<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(rows: Vec<FeatureRow<T>>, taxonomy: CrimeTaxonomy) -> Self {
        Self { rows, taxonomy, scaler: None }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn arity(&self) -> usize {
        FEATURE_ARITY
    }

    pub fn matrix(&self) -> FeatureMatrix<T> {
        let mut data = Vec::with_capacity(self.rows.len() * FEATURE_ARITY);
        for row in &self.rows {
            data.push(T::of(row.month as f64));
            data.extend_from_slice(&row.features);
        }
        FeatureMatrix::from_vec(self.rows.len(), FEATURE_ARITY, data)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.class).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            taxonomy: self.taxonomy.clone(),
            scaler: self.scaler.clone(),
        }
    }

    pub fn neighborhoods(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.meta.neighborhood.as_str()).collect()
    }
}

/// Min-max scale the crime features. With `reference` the given scaler is
/// applied; otherwise one is fitted on `dataset`. The month stays `1..=12`.
pub fn minmax_normalize<T: Scalar>(
    dataset: &Dataset<T>,
    reference: Option<&ScalerParams<T>>,
    clamp: bool,
) -> Result<Dataset<T>, CubeError> {
    let scaler = match reference {
        Some(s) => {
            s.validate(N_CRIME_TYPES)?;
            s.clone()
        }
        None => match ScalerParams::fit(&dataset.rows) {
            Some(s) => s,
            None => return Ok(Dataset { scaler: None, ..dataset.clone() }),
        },
    };
    let rows = dataset
        .rows
        .iter()
        .map(|row| FeatureRow {
            features: row.features.iter().enumerate().map(|(i, &x)| scaler.scale(i, x, clamp)).collect(),
            ..row.clone()
        })
        .collect();
    Ok(Dataset { rows, taxonomy: dataset.taxonomy.clone(), scaler: Some(scaler) })
}

/// `(class 0 count, class 1 count)`.
pub fn class_balance<T>(dataset: &Dataset<T>) -> (usize, usize) {
    let ones = dataset.rows.iter().filter(|r| r.class == 1).count();
    (dataset.rows.len() - ones, ones)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDataset<T> {
    /// Raw counts, not normalized.
    pub dataset: Dataset<T>,
    pub grid_window: Option<MonthWindow>,
    pub discarded: BTreeMap<String, usize>,
    pub completeness: CompletenessReport,
}

/// Aggregate, drop incomplete neighborhoods and label.
pub fn build_dataset<T: Scalar>(
    incidents: &[CleanIncident],
    taxonomy: &CrimeTaxonomy,
    window: Option<MonthWindow>,
) -> BuiltDataset<T> {
    let grid = aggregate(incidents, taxonomy, window);
    let (cells, completeness) = match grid.window {
        Some(w) => {
            let (g, r) = filter_complete_neighborhoods(&grid, w);
            (g.cells, r)
        }
        None => (BTreeMap::new(), CompletenessReport::default()),
    };
    BuiltDataset {
        dataset: Dataset::new(label_next_month(&cells, taxonomy), taxonomy.clone()),
        grid_window: grid.window,
        discarded: grid.discarded,
        completeness,
    }
}

/// Companion JSON stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar<T> {
    pub format_version: u32,
    pub taxonomy: CrimeTaxonomy,
    pub feature_order: Vec<String>,
    pub meta_columns: Vec<String>,
    pub normalization: NormalizeScope,
    pub scaler: Option<ScalerParams<T>>,
}

impl<T: Scalar> DatasetSidecar<T> {
    pub fn describe(dataset: &Dataset<T>, normalization: NormalizeScope) -> Self {
        Self {
            format_version: 1,
            taxonomy: dataset.taxonomy.clone(),
            feature_order: dataset.taxonomy.feature_names(),
            meta_columns: vec!["year".into(), "neighborhood".into()],
            normalization,
            scaler: dataset.scaler.clone(),
        }
    }
}

/// Header: `year,month,neighborhood,<crime labels>,class`.
pub fn write_dataset_csv<T: Scalar, W: Write>(w: W, dataset: &Dataset<T>) -> Result<(), CubeError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["year".to_string(), "month".into(), "neighborhood".into()];
    header.extend(dataset.taxonomy.labels().iter().cloned());
    header.push("class".into());
    wtr.write_record(&header)?;
    for row in &dataset.rows {
        let mut rec = vec![row.meta.year.to_string(), row.month.to_string(), row.meta.neighborhood.clone()];
        rec.extend(row.features.iter().map(|v| v.to_string()));
        rec.push(row.class.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a dataset CSV. Without a sidecar the taxonomy is rebuilt from the
/// header, which must then contain a `HOMICIDE` column.
pub fn read_dataset_csv<T: Scalar, R: Read>(r: R, sidecar: Option<&DatasetSidecar<T>>) -> Result<Dataset<T>, CubeError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() != N_CRIME_TYPES + 4
        || header[0] != "year"
        || header[1] != "month"
        || header[2] != "neighborhood"
        || header[header.len() - 1] != "class"
    {
        return Err(CubeError::BadHeader(format!(
            "expected year,month,neighborhood,<{N_CRIME_TYPES} crime labels>,class; got {} columns",
            header.len()
        )));
    }
    let labels = &header[3..3 + N_CRIME_TYPES];
    let taxonomy = match sidecar {
        Some(s) => {
            if s.taxonomy.labels() != labels {
                return Err(CubeError::BadHeader("crime columns do not match the sidecar taxonomy".into()));
            }
            s.taxonomy.clone()
        }
        None => CrimeTaxonomy::new(labels, "HOMICIDE")?,
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| CubeError::BadRow { row: line, reason };
        let year: i32 = rec[0].trim().parse().map_err(|_| bad(format!("bad year `{}`", &rec[0])))?;
        let month: u32 = rec[1].trim().parse().map_err(|_| bad(format!("bad month `{}`", &rec[1])))?;
        if !(1..=12).contains(&month) {
            return Err(bad(format!("month {month} outside 1..=12")));
        }
        let features = (3..3 + N_CRIME_TYPES)
            .map(|i| {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(T::of)
                    .ok_or_else(|| bad(format!("non-numeric feature `{}` in column {}", &rec[i], header[i])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let class = match rec[3 + N_CRIME_TYPES].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("class must be 0 or 1, got `{other}`"))),
        };
        rows.push(FeatureRow { meta: CellKey::new(year, month, rec[2].to_string()), month, features, class });
    }
    Ok(Dataset { rows, taxonomy, scaler: sidecar.and_then(|s| s.scaler.clone()) })
}
