//! Incident CSV parsing and cleaning.
//!
//! Raw police-report rows are parsed against a configurable column schema, then
//! passed through a fixed sequence of cleaning rules. Every record that does not
//! survive is accounted for in a [`CleaningReport`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RULE_EMPTY_LABEL: &str = "empty_label";
pub const RULE_MUNICIPALITY: &str = "municipality";
pub const RULE_EXCLUDED_NEIGHBORHOOD: &str = "excluded_neighborhood";
pub const RULE_NON_CRIME: &str = "non_crime";
pub const RULE_OUT_OF_WINDOW: &str = "out_of_window";

/// Rule names in application order.
pub const RULES: [&str; 5] = [
    RULE_EMPTY_LABEL,
    RULE_MUNICIPALITY,
    RULE_EXCLUDED_NEIGHBORHOOD,
    RULE_NON_CRIME,
    RULE_OUT_OF_WINDOW,
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("mapped column `{column}` not found in CSV header")]
    MissingColumn { column: String },
    #[error("neighborhood consolidation map has a cycle through `{alias}`")]
    ConsolidationCycle { alias: String },
    #[error("invalid study window bound `{0}` (expected YYYY-MM or YYYY-MM-DD)")]
    InvalidWindow(String),
    #[error("study window is empty: {start} > {end}")]
    EmptyWindow { start: NaiveDate, end: NaiveDate },
    #[error("clean incident file, row {row}: {reason}")]
    BadCleanRow { row: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawIncident {
    pub occurrence_date: NaiveDate,
    pub crime_type: String,
    pub municipality: String,
    pub neighborhood: String,
    /// Source columns that are not part of the schema, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CleanIncident {
    #[serde(rename = "date")]
    pub occurrence_date: NaiveDate,
    pub crime_type: String,
    pub neighborhood: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub row: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedIncidents {
    pub incidents: Vec<RawIncident>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_count: usize,
    pub output_count: usize,
    pub dropped_by_rule: BTreeMap<String, usize>,
    pub dedup_count: usize,
}

impl Default for CleaningReport {
    fn default() -> Self {
        Self {
            input_count: 0,
            output_count: 0,
            dropped_by_rule: RULES.iter().map(|r| (r.to_string(), 0)).collect(),
            dedup_count: 0,
        }
    }
}

impl CleaningReport {
    pub fn total_dropped(&self) -> usize {
        self.dropped_by_rule.values().sum()
    }

    /// `input = output + drops + dedups`.
    pub fn is_conserved(&self) -> bool {
        self.input_count == self.output_count + self.total_dropped() + self.dedup_count
    }

    /// Sum two reports, e.g. from files cleaned independently.
    pub fn merge(mut self, other: &CleaningReport) -> CleaningReport {
        self.input_count += other.input_count;
        self.output_count += other.output_count;
        self.dedup_count += other.dedup_count;
        for (rule, n) in &other.dropped_by_rule {
            *self.dropped_by_rule.entry(rule.clone()).or_insert(0) += n;
        }
        self
    }
}

fn default_date_column() -> String {
    "date".into()
}
fn default_type_column() -> String {
    "crime_type".into()
}
fn default_municipality_column() -> String {
    "municipality".into()
}
fn default_neighborhood_column() -> String {
    "neighborhood".into()
}
fn default_date_formats() -> Vec<String> {
    vec!["%Y-%m-%d".into(), "%d/%m/%Y".into()]
}

/// The `[ingest]` configuration section: column schema plus cleaning rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_type_column")]
    pub type_column: String,
    #[serde(default = "default_municipality_column")]
    pub municipality_column: String,
    #[serde(default = "default_neighborhood_column")]
    pub neighborhood_column: String,
    /// chrono format strings, tried in order.
    #[serde(default = "default_date_formats")]
    pub date_formats: Vec<String>,
    /// Empty means every municipality is accepted.
    #[serde(default)]
    pub municipality_whitelist: Vec<String>,
    #[serde(default)]
    pub excluded_neighborhoods: Vec<String>,
    #[serde(default)]
    pub non_crime_types: Vec<String>,
    /// alias -> canonical neighborhood.
    #[serde(default)]
    pub consolidation_map: BTreeMap<String, String>,
    /// `YYYY-MM` or `YYYY-MM-DD`, inclusive.
    #[serde(default)]
    pub window_start: Option<String>,
    #[serde(default)]
    pub window_end: Option<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            date_column: default_date_column(),
            type_column: default_type_column(),
            municipality_column: default_municipality_column(),
            neighborhood_column: default_neighborhood_column(),
            date_formats: default_date_formats(),
            municipality_whitelist: Vec::new(),
            excluded_neighborhoods: Vec::new(),
            non_crime_types: Vec::new(),
            consolidation_map: BTreeMap::new(),
            window_start: None,
            window_end: None,
        }
    }
}

impl IngestConfig {
    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            date_column: self.date_column.clone(),
            type_column: self.type_column.clone(),
            municipality_column: self.municipality_column.clone(),
            neighborhood_column: self.neighborhood_column.clone(),
            date_formats: self.date_formats.clone(),
        }
    }

    pub fn study_window(&self) -> Result<Option<StudyWindow>, IngestError> {
        let start = self.window_start.as_deref().map(|s| parse_bound(s, false)).transpose()?;
        let end = self.window_end.as_deref().map(|s| parse_bound(s, true)).transpose()?;
        if start.is_none() && end.is_none() {
            return Ok(None);
        }
        let window = StudyWindow {
            start: start.unwrap_or(NaiveDate::MIN),
            end: end.unwrap_or(NaiveDate::MAX),
        };
        if window.start > window.end {
            return Err(IngestError::EmptyWindow { start: window.start, end: window.end });
        }
        Ok(Some(window))
    }

    pub fn rules(&self) -> Result<CleaningRules, IngestError> {
        Ok(CleaningRules {
            municipality_whitelist: self.municipality_whitelist.clone(),
            excluded_neighborhoods: self.excluded_neighborhoods.clone(),
            non_crime_types: self.non_crime_types.clone(),
            consolidation_map: self.consolidation_map.clone(),
            window: self.study_window()?,
        })
    }
}

fn parse_bound(s: &str, is_end: bool) -> Result<NaiveDate, IngestError> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    let first = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
        .map_err(|_| IngestError::InvalidWindow(s.to_string()))?;
    if !is_end {
        return Ok(first);
    }
    let (y, m) = if first.month() == 12 { (first.year() + 1, 1) } else { (first.year(), first.month() + 1) };
    NaiveDate::from_ymd_opt(y, m, 1)
        .and_then(|d| d.pred_opt())
        .ok_or_else(|| IngestError::InvalidWindow(s.to_string()))
}

/// Names of the four semantic columns plus accepted date formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub date_column: String,
    pub type_column: String,
    pub municipality_column: String,
    pub neighborhood_column: String,
    pub date_formats: Vec<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        IngestConfig::default().schema()
    }
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleaningRules {
    pub municipality_whitelist: Vec<String>,
    pub excluded_neighborhoods: Vec<String>,
    pub non_crime_types: Vec<String>,
    pub consolidation_map: BTreeMap<String, String>,
    pub window: Option<StudyWindow>,
}

fn fold_latin1(c: char) -> Option<&'static str> {
    Some(match c {
        'À' | 'Á' | 'Â' | 'Ã' | 'Ä' | 'Å' | 'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' => "A",
        'Æ' | 'æ' => "AE",
        'Ç' | 'ç' => "C",
        'È' | 'É' | 'Ê' | 'Ë' | 'è' | 'é' | 'ê' | 'ë' => "E",
        'Ì' | 'Í' | 'Î' | 'Ï' | 'ì' | 'í' | 'î' | 'ï' => "I",
        'Ð' | 'ð' => "D",
        'Ñ' | 'ñ' => "N",
        'Ò' | 'Ó' | 'Ô' | 'Õ' | 'Ö' | 'Ø' | 'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' => "O",
        'Ù' | 'Ú' | 'Û' | 'Ü' | 'ù' | 'ú' | 'û' | 'ü' => "U",
        'Ý' | 'ý' | 'ÿ' => "Y",
        'Þ' | 'þ' => "TH",
        'ß' => "SS",
        _ => return None,
    })
}

/// Canonicalize a free-text label: fold Latin-1 accents to ASCII, keep only
/// `[A-Za-z0-9 -]`, upper-case, trim, and collapse internal whitespace.
pub fn normalize_text(raw: &str) -> String {
    let mut kept = String::with_capacity(raw.len());
    for c in raw.chars() {
        if let Some(folded) = fold_latin1(c) {
            kept.push_str(folded);
        } else if c.is_ascii_alphanumeric() || c == '-' {
            kept.push(c.to_ascii_uppercase());
        } else if c.is_whitespace() {
            kept.push(' ');
        }
    }
    kept.split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" ")
}

fn parse_date(s: &str, formats: &[String]) -> Option<NaiveDate> {
    let s = s.trim();
    formats.iter().find_map(|f| NaiveDate::parse_from_str(s, f).ok())
}

/// Parse a UTF-8 incident CSV. Malformed rows land in the reject log with
/// their line number; well-formed rows keep their input order.
pub fn parse_incidents<R: Read>(source: R, schema: &ColumnSchema) -> Result<ParsedIncidents, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn { column: name.to_string() })
    };
    let date_ix = column(&schema.date_column)?;
    let type_ix = column(&schema.type_column)?;
    let muni_ix = column(&schema.municipality_column)?;
    let nb_ix = column(&schema.neighborhood_column)?;
    let mapped = [date_ix, type_ix, muni_ix, nb_ix];

    let mut out = ParsedIncidents::default();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => {
                let row = e.position().map(|p| p.line()).unwrap_or(line);
                out.rejects.push(Reject { row, reason: "invalid UTF-8".into() });
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        let row = record.position().map(|p| p.line()).unwrap_or(line);
        let cell = |ix: usize| record.get(ix).map(str::trim).filter(|s| !s.is_empty());

        let missing: Vec<&str> = [
            (&schema.date_column, date_ix),
            (&schema.type_column, type_ix),
            (&schema.municipality_column, muni_ix),
            (&schema.neighborhood_column, nb_ix),
        ]
        .iter()
        .filter(|(_, ix)| cell(*ix).is_none())
        .map(|(name, _)| name.as_str())
        .collect();
        if !missing.is_empty() {
            out.rejects.push(Reject { row, reason: format!("missing value for {}", missing.join(", ")) });
            continue;
        }
        let raw_date = cell(date_ix).unwrap_or_default();
        let Some(occurrence_date) = parse_date(raw_date, &schema.date_formats) else {
            out.rejects.push(Reject { row, reason: format!("unparseable date `{raw_date}`") });
            continue;
        };
        let extra = headers
            .iter()
            .enumerate()
            .filter(|(ix, _)| !mapped.contains(ix))
            .map(|(ix, h)| (h.to_string(), record.get(ix).unwrap_or_default().to_string()))
            .collect();
        out.incidents.push(RawIncident {
            occurrence_date,
            crime_type: record[type_ix].to_string(),
            municipality: record[muni_ix].to_string(),
            neighborhood: record[nb_ix].to_string(),
            extra,
        });
    }
    Ok(out)
}

struct CompiledRules {
    whitelist: HashSet<String>,
    excluded: HashSet<String>,
    non_crime: HashSet<String>,
    consolidation: BTreeMap<String, String>,
    window: Option<StudyWindow>,
}

fn normalized_set(items: &[String]) -> HashSet<String> {
    items.iter().map(|s| normalize_text(s)).collect()
}

/// Normalize the alias map and resolve chains (`A -> B -> C` becomes `A -> C`).
fn resolve_consolidation(map: &BTreeMap<String, String>) -> Result<BTreeMap<String, String>, IngestError> {
    let direct: BTreeMap<String, String> = map
        .iter()
        .map(|(a, c)| (normalize_text(a), normalize_text(c)))
        .filter(|(a, c)| a != c)
        .collect();
    let mut resolved = BTreeMap::new();
    for alias in direct.keys() {
        let mut seen = BTreeSet::from([alias.as_str()]);
        let mut cur = &direct[alias];
        while let Some(next) = direct.get(cur) {
            if !seen.insert(cur.as_str()) {
                return Err(IngestError::ConsolidationCycle { alias: alias.clone() });
            }
            cur = next;
        }
        if seen.contains(cur.as_str()) {
            return Err(IngestError::ConsolidationCycle { alias: alias.clone() });
        }
        resolved.insert(alias.clone(), cur.clone());
    }
    Ok(resolved)
}

impl CleaningRules {
    fn compile(&self) -> Result<CompiledRules, IngestError> {
        Ok(CompiledRules {
            whitelist: normalized_set(&self.municipality_whitelist),
            excluded: normalized_set(&self.excluded_neighborhoods),
            non_crime: normalized_set(&self.non_crime_types),
            consolidation: resolve_consolidation(&self.consolidation_map)?,
            window: self.window,
        })
    }
}

/// Apply the cleaning rules in order: normalization, municipality filter,
/// excluded neighborhoods, non-crime types, consolidation, study window, and
/// exact-duplicate removal on `(date, type, neighborhood)`.
pub fn clean(records: &[RawIncident], rules: &CleaningRules) -> Result<(Vec<CleanIncident>, CleaningReport), IngestError> {
    let rules = rules.compile()?;
    let mut report = CleaningReport { input_count: records.len(), ..Default::default() };
    let mut drop = |rule: &str| *report.dropped_by_rule.get_mut(rule).expect("known rule") += 1;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut dedup_count = 0;
    for rec in records {
        let crime_type = normalize_text(&rec.crime_type);
        let neighborhood = normalize_text(&rec.neighborhood);
        if crime_type.is_empty() || neighborhood.is_empty() {
            drop(RULE_EMPTY_LABEL);
            continue;
        }
        if !rules.whitelist.is_empty() && !rules.whitelist.contains(&normalize_text(&rec.municipality)) {
            drop(RULE_MUNICIPALITY);
            continue;
        }
        if rules.excluded.contains(&neighborhood) {
            drop(RULE_EXCLUDED_NEIGHBORHOOD);
            continue;
        }
        if rules.non_crime.contains(&crime_type) {
            drop(RULE_NON_CRIME);
            continue;
        }
        let neighborhood = rules.consolidation.get(&neighborhood).cloned().unwrap_or(neighborhood);
        if rules.window.is_some_and(|w| !w.contains(rec.occurrence_date)) {
            drop(RULE_OUT_OF_WINDOW);
            continue;
        }
        let incident = CleanIncident { occurrence_date: rec.occurrence_date, crime_type, neighborhood };
        if seen.insert(incident.clone()) {
            out.push(incident);
        } else {
            dedup_count += 1;
        }
    }
    report.dedup_count = dedup_count;
    report.output_count = out.len();
    debug_assert!(report.is_conserved());
    Ok((out, report))
}

pub fn write_clean_incidents<W: Write>(w: W, incidents: &[CleanIncident]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "crime_type", "neighborhood"])?;
    for inc in incidents {
        wtr.write_record([inc.occurrence_date.format("%Y-%m-%d").to_string().as_str(), &inc.crime_type, &inc.neighborhood])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_clean_incidents<R: Read>(r: R) -> Result<Vec<CleanIncident>, IngestError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<CleanIncident>() {
        match rec {
            Ok(inc) => out.push(inc),
            Err(e) => {
                let row = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(IngestError::BadCleanRow { row, reason: e.to_string() });
            }
        }
    }
    Ok(out)
}

pub fn write_rejects<W: Write>(w: W, rejects: &[Reject]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["row", "reason"])?;
    for r in rejects {
        wtr.write_record([r.row.to_string().as_str(), &r.reason])?;
    }
    wtr.flush()?;
    Ok(())
}
