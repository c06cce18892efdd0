//! Synthetic incident generator with a planted, controllable signal.
//!
//! Every neighborhood draws Poisson counts per crime type and month. Whether a
//! homicide happens in month `m + 1` is a Bernoulli draw whose probability is
//! the signal rule applied to month `m`'s counts, optionally flipped with
//! probability `noise`. The truth file lists the resulting next-month labels
//! for every cell the pipeline will keep.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{CrimeTaxonomy, CubeError, YearMonth};
use crate::rng::{stream, StreamRng};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Taxonomy(#[from] CubeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Next-month homicide probability as a function of this month's counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalRule {
    Constant {
        p: f64,
    },
    /// `p_above` when the count of `crime` is at least `threshold`, else `p_below`.
    Threshold {
        crime: String,
        threshold: u32,
        #[serde(default = "one")]
        p_above: f64,
        #[serde(default)]
        p_below: f64,
    },
    /// `sigmoid(intercept + sum weight * count)`.
    Logistic {
        intercept: f64,
        weights: BTreeMap<String, f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for SignalRule {
    fn default() -> Self {
        SignalRule::Threshold { crime: "THREAT".into(), threshold: 5, p_above: 1.0, p_below: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_neighborhoods: usize,
    /// `YYYY-MM`, inclusive.
    pub start: String,
    pub end: String,
    pub municipality: String,
    /// Crime labels; the standard 34 when absent.
    pub labels: Option<Vec<String>>,
    pub homicide_label: String,
    /// Mean monthly count for types without an entry in `rates`.
    pub base_rate: f64,
    pub rates: BTreeMap<String, f64>,
    pub rule: SignalRule,
    /// Probability of flipping each homicide draw.
    pub noise: f64,
    /// Neighborhoods given one empty month, so the completeness filter drops them.
    pub holes: usize,
    pub seed: u64,
}

/// Poisson mean for THREAT with `P(count >= 5) = 0.5`, which balances the
/// classes under the default threshold rule.
pub const BALANCED_THREAT_RATE: f64 = 4.67;

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_neighborhoods: 167,
            start: "2016-01".into(),
            end: "2017-01".into(),
            municipality: "BELEM".into(),
            labels: None,
            homicide_label: "HOMICIDE".into(),
            base_rate: 0.5,
            rates: BTreeMap::from([("THREAT".to_string(), BALANCED_THREAT_RATE)]),
            rule: SignalRule::default(),
            noise: 0.0,
            holes: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedIncident {
    pub date: chrono::NaiveDate,
    pub crime_type: String,
    pub municipality: String,
    pub neighborhood: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruthRow {
    pub year: i32,
    pub month: u32,
    pub neighborhood: String,
    pub class: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub incidents: Vec<GeneratedIncident>,
    pub truth: Vec<TruthRow>,
    /// Neighborhoods with an empty month.
    pub holes: Vec<String>,
}

/// Inverse-transform Poisson draw.
pub fn poisson(rng: &mut StreamRng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut k = 0u32;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < 100_000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p == 0.0 && k as f64 > lambda {
            break;
        }
    }
    k
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Resolved {
    taxonomy: CrimeTaxonomy,
    months: Vec<YearMonth>,
    rates: Vec<f64>,
    rule: ResolvedRule,
}

enum ResolvedRule {
    Constant(f64),
    Threshold { crime: usize, threshold: u32, p_above: f64, p_below: f64 },
    Logistic { intercept: f64, weights: Vec<(usize, f64)> },
}

impl ResolvedRule {
    fn probability(&self, counts: &[u32]) -> f64 {
        match self {
            ResolvedRule::Constant(p) => *p,
            ResolvedRule::Threshold { crime, threshold, p_above, p_below } => {
                if counts[*crime] >= *threshold {
                    *p_above
                } else {
                    *p_below
                }
            }
            ResolvedRule::Logistic { intercept, weights } => {
                sigmoid(intercept + weights.iter().map(|&(i, w)| w * counts[i] as f64).sum::<f64>())
            }
        }
    }
}

fn probability_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl GenConfig {
    fn resolve(&self) -> Result<Resolved, SynthError> {
        let bad = |m: String| SynthError::Config(m);
        let taxonomy = match &self.labels {
            Some(labels) => CrimeTaxonomy::new(labels, &self.homicide_label)?,
            None => CrimeTaxonomy::new(CrimeTaxonomy::standard().labels(), &self.homicide_label)?,
        };
        let start: YearMonth = self.start.parse().map_err(bad)?;
        let end: YearMonth = self.end.parse().map_err(bad)?;
        if end.ordinal() <= start.ordinal() {
            return Err(bad(format!("window {start}..{end} needs at least two months")));
        }
        let months: Vec<YearMonth> = (0..=end.ordinal() - start.ordinal())
            .scan(start, |ym, _| {
                let cur = *ym;
                *ym = ym.next();
                Some(cur)
            })
            .collect();
        if self.n_neighborhoods == 0 {
            return Err(bad("n_neighborhoods must be >= 1".into()));
        }
        if self.holes > self.n_neighborhoods {
            return Err(bad(format!("{} holes requested for {} neighborhoods", self.holes, self.n_neighborhoods)));
        }
        if !probability_ok(self.noise) {
            return Err(bad(format!("noise must lie in [0, 1], got {}", self.noise)));
        }
        let index = |name: &str| {
            taxonomy.index_of(name).ok_or_else(|| SynthError::Config(format!("unknown crime type `{name}`")))
        };
        let mut rates = vec![self.base_rate; taxonomy.labels().len()];
        for (name, &r) in &self.rates {
            rates[index(name)?] = r;
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0 && **r <= 500.0)) {
            return Err(bad(format!("rates must lie in [0, 500], got {r}")));
        }
        let rule = match &self.rule {
            SignalRule::Constant { p } if probability_ok(*p) => ResolvedRule::Constant(*p),
            SignalRule::Threshold { crime, threshold, p_above, p_below } if probability_ok(*p_above) && probability_ok(*p_below) => {
                ResolvedRule::Threshold { crime: index(crime)?, threshold: *threshold, p_above: *p_above, p_below: *p_below }
            }
            SignalRule::Logistic { intercept, weights } if intercept.is_finite() && weights.values().all(|w| w.is_finite()) => {
                ResolvedRule::Logistic {
                    intercept: *intercept,
                    weights: weights.iter().map(|(k, &w)| Ok((index(k)?, w))).collect::<Result<_, SynthError>>()?,
                }
            }
            other => return Err(bad(format!("signal rule {other:?} yields probabilities outside [0, 1]"))),
        };
        Ok(Resolved { taxonomy, months, rates, rule })
    }
}

pub fn neighborhood_name(i: usize) -> String {
    format!("NEIGHBORHOOD {i:03}")
}

/// Generate incidents and truth labels. Each neighborhood has its own random
/// stream, so results do not depend on how many neighborhoods follow it.
pub fn generate(config: &GenConfig) -> Result<Generated, SynthError> {
    let r = config.resolve()?;
    let n_types = r.taxonomy.labels().len();
    let h = r.taxonomy.homicide_index();
    let n_months = r.months.len();

    let mut hole_rng = stream(config.seed, &[u64::MAX]);
    let mut hole_ids: Vec<usize> = sample(&mut hole_rng, config.n_neighborhoods, config.holes).into_vec();
    hole_ids.sort_unstable();

    let mut incidents = Vec::new();
    let mut truth = Vec::new();
    for nb in 0..config.n_neighborhoods {
        let name = neighborhood_name(nb);
        let mut rng = stream(config.seed, &[nb as u64]);
        let hole_month = hole_ids.binary_search(&nb).is_ok().then(|| rng.gen_range(0..n_months));
        let mut homicide_next = false;
        let mut labels = Vec::with_capacity(n_months);
        for (m, &ym) in r.months.iter().enumerate() {
            let days = ym.days();
            let mut counts: Vec<u32> = (0..n_types)
                .map(|t| if t == h { 0 } else { poisson(&mut rng, r.rates[t]).min(days) })
                .collect();
            counts[h] = u32::from(homicide_next);
            if counts.iter().all(|&c| c == 0) {
                let mut t = rng.gen_range(0..n_types - 1);
                if t >= h {
                    t += 1;
                }
                counts[t] = 1;
            }
            if hole_month == Some(m) {
                counts.iter_mut().for_each(|c| *c = 0);
            }
            if m > 0 {
                labels.push(u8::from(counts[h] > 0));
            }
            for (t, &c) in counts.iter().enumerate() {
                let mut picked = sample(&mut rng, days as usize, c as usize).into_vec();
                picked.sort_unstable();
                for d in picked {
                    incidents.push(GeneratedIncident {
                        date: ym.first_day() + chrono::Days::new(d as u64),
                        crime_type: r.taxonomy.labels()[t].clone(),
                        municipality: config.municipality.clone(),
                        neighborhood: name.clone(),
                    });
                }
            }
            let mut hit = rng.gen_bool(r.rule.probability(&counts));
            if rng.gen_bool(config.noise) {
                hit = !hit;
            }
            homicide_next = hit;
        }
        if hole_month.is_none() {
            for (m, class) in labels.into_iter().enumerate() {
                let ym = r.months[m];
                truth.push(TruthRow { year: ym.year, month: ym.month, neighborhood: name.clone(), class });
            }
        }
    }
    incidents.sort_by(|a, b| (a.date, &a.neighborhood, &a.crime_type).cmp(&(b.date, &b.neighborhood, &b.crime_type)));
    truth.sort();
    Ok(Generated { incidents, truth, holes: hole_ids.into_iter().map(neighborhood_name).collect() })
}

/// Header `date,crime_type,municipality,neighborhood`, ISO dates.
pub fn write_incidents<W: Write>(w: W, incidents: &[GeneratedIncident]) -> Result<(), SynthError> {
    let mut out = csv::Writer::from_writer(w);
    for i in incidents {
        out.serialize(i)?;
    }
    out.flush()?;
    Ok(())
}

/// Header `year,month,neighborhood,class`.
pub fn write_truth<W: Write>(w: W, truth: &[TruthRow]) -> Result<(), SynthError> {
    let mut out = csv::Writer::from_writer(w);
    for t in truth {
        out.serialize(t)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_truth<R: std::io::Read>(r: R) -> Result<Vec<TruthRow>, SynthError> {
    Ok(csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rule: SignalRule) -> GenConfig {
        GenConfig { n_neighborhoods: 6, start: "2016-11".into(), end: "2017-04".into(), rule, seed: 11, ..Default::default() }
    }

    #[test]
    fn poisson_mean_is_close() {
        let mut rng = stream(1, &[]);
        let n = 20_000;
        let mean = (0..n).map(|_| poisson(&mut rng, BALANCED_THREAT_RATE) as f64).sum::<f64>() / n as f64;
        assert!((mean - BALANCED_THREAT_RATE).abs() < 0.1, "{mean}");
        assert_eq!(poisson(&mut rng, 0.0), 0);
    }

    #[test]
    fn balanced_threat_rate_splits_at_five() {
        let lambda = BALANCED_THREAT_RATE;
        let mut below = 0.0;
        let mut term = (-lambda).exp();
        for k in 0..5 {
            if k > 0 {
                term *= lambda / k as f64;
            }
            below += term;
        }
        assert!((below - 0.5).abs() < 0.01, "{below}");
    }

    #[test]
    fn constant_rules() {
        let zero = generate(&small(SignalRule::Constant { p: 0.0 })).unwrap();
        assert!(zero.truth.iter().all(|t| t.class == 0));
        assert!(zero.incidents.iter().all(|i| i.crime_type != "HOMICIDE"));
        let all = generate(&small(SignalRule::Constant { p: 1.0 })).unwrap();
        assert!(all.truth.iter().all(|t| t.class == 1));
        assert_eq!(all.truth.len(), 6 * 5);
    }

    #[test]
    fn deterministic_and_month_covered() {
        let cfg = small(SignalRule::default());
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        let months: std::collections::BTreeSet<(String, u32)> =
            a.incidents.iter().map(|i| (i.neighborhood.clone(), chrono::Datelike::month(&i.date))).collect();
        assert_eq!(months.len(), 6 * 6);
        let other = generate(&GenConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.incidents, other.incidents);
    }

    #[test]
    fn holes_are_excluded_from_truth() {
        let g = generate(&GenConfig { holes: 2, ..small(SignalRule::default()) }).unwrap();
        assert_eq!(g.holes.len(), 2);
        assert_eq!(g.truth.len(), 4 * 5);
        assert!(g.truth.iter().all(|t| !g.holes.contains(&t.neighborhood)));
    }

    #[test]
    fn config_validation() {
        assert!(generate(&GenConfig { noise: 1.5, ..Default::default() }).is_err());
        assert!(generate(&GenConfig { end: "2016-01".into(), ..Default::default() }).is_err());
        let rule = SignalRule::Threshold { crime: "NOPE".into(), threshold: 1, p_above: 1.0, p_below: 0.0 };
        assert!(generate(&small(rule)).is_err());
        let parsed: GenConfig = toml::from_str("n_neighborhoods = 3\n[rule]\nkind = \"constant\"\np = 0.25\n").unwrap();
        assert_eq!(parsed.rule, SignalRule::Constant { p: 0.25 });
    }
}
