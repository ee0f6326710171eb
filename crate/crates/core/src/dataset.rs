//! Panel data: per-article weekly demand with static and calendar features.
//!
//! Weeks are addressed by 0-based index into the dataset timeline. A window
//! anchored at week `t` covers context weeks `t+1-P ..= t` and horizon weeks
//! `t+1 ..= t+K`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// Number of calendar channels produced by [`calendar_features`].
pub const CALENDAR_FEATURES: usize = 3;

/// Known-in-advance covariates derived from the timeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariates {
    /// [`calendar_features`].
    #[default]
    Calendar,
    /// [`seasonal_features`].
    Seasonal,
}

impl Covariates {
    pub fn width(self) -> usize {
        match self {
            Covariates::Calendar => CALENDAR_FEATURES,
            Covariates::Seasonal => 2,
        }
    }

    fn row(self, timeline: &Timeline, t: usize, total: usize) -> Vec<f64> {
        match self {
            Covariates::Calendar => calendar_features(timeline, t, total).to_vec(),
            Covariates::Seasonal => seasonal_features(timeline, t).to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimelineKind {
    /// Integer week index, consecutive weeks differ by 1.
    Index,
    /// Days since 1970-01-01, consecutive weeks differ by 7.
    Date,
}

impl TimelineKind {
    pub fn step(self) -> i64 {
        match self {
            TimelineKind::Index => 1,
            TimelineKind::Date => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub kind: TimelineKind,
    pub labels: Vec<i64>,
}

impl Timeline {
    pub fn regular(kind: TimelineKind, start: i64, len: usize) -> Self {
        let labels = (0..len as i64).map(|k| start + k * kind.step()).collect();
        Self { kind, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Label of week `t`, extrapolated past the end for known-future steps.
    pub fn label(&self, t: usize) -> i64 {
        match self.labels.first() {
            Some(&first) => first + t as i64 * self.kind.step(),
            None => t as i64 * self.kind.step(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (k, pair) in self.labels.windows(2).enumerate() {
            if pair[1] - pair[0] != self.kind.step() {
                return Err(Error::Timeline(alloc::format!(
                    "weeks {} and {} are {} apart, expected {}",
                    k,
                    k + 1,
                    pair[1] - pair[0],
                    self.kind.step()
                )));
            }
        }
        Ok(())
    }
}

/// (year, month, day) for a day count since 1970-01-01 (proleptic Gregorian).
pub fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

/// Day count since 1970-01-01 for a civil date.
pub fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y.rem_euclid(400);
    let m = i64::from(m);
    let mp = if m > 2 { m - 3 } else { m + 9 };
    let doy = (153 * mp + 2) / 5 + i64::from(d) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Calendar covariates for week `t` of a timeline spanning `total` weeks
/// (history plus known future): week-of-year sinusoid, day-of-month scaled to
/// [0, 1] and the running week number scaled to [0, 1].
pub fn calendar_features(timeline: &Timeline, t: usize, total: usize) -> [f64; CALENDAR_FEATURES] {
    let (week_of_year, day_of_month) = week_and_day(timeline, t);
    let phase = 2.0 * core::f64::consts::PI * week_of_year as f64 / 52.0;
    let week_number = if total > 1 {
        t as f64 / (total - 1) as f64
    } else {
        0.0
    };
    [math::sin(phase), (f64::from(day_of_month) - 1.0) / 30.0, week_number]
}

/// Week-of-year sine and cosine.
pub fn seasonal_features(timeline: &Timeline, t: usize) -> [f64; 2] {
    let (week_of_year, _) = week_and_day(timeline, t);
    let phase = 2.0 * core::f64::consts::PI * week_of_year as f64 / 52.0;
    [math::sin(phase), math::cos(phase)]
}

fn week_and_day(timeline: &Timeline, t: usize) -> (i64, u32) {
    let label = timeline.label(t);
    match timeline.kind {
        TimelineKind::Date => {
            let (y, _, d) = civil_from_days(label);
            let ordinal = label - days_from_civil(y, 1, 1);
            (ordinal / 7, d)
        }
        TimelineKind::Index => {
            let k = label - 1;
            (k.rem_euclid(52), (k * 7).rem_euclid(31) as u32 + 1)
        }
    }
}

/// Per-article demand panel with static features and calendar covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub article_ids: Vec<String>,
    pub timeline: Timeline,
    n_static: usize,
    /// N × T, row-major by article.
    demand: Vec<f64>,
    mask: Vec<bool>,
    /// N × M.
    static_features: Vec<f64>,
    covariates: Covariates,
    /// (T + future) × L known covariates, shared by every article.
    dynamic: Vec<f64>,
    future_weeks: usize,
}

impl PanelDataset {
    /// Build a dataset from dense arrays. `demand` and `mask` are N × T row-major,
    /// `static_features` is N × M.
    pub fn new(
        article_ids: Vec<String>,
        timeline: Timeline,
        demand: Vec<f64>,
        mask: Vec<bool>,
        static_features: Vec<f64>,
        n_static: usize,
        future_weeks: usize,
    ) -> Result<Self> {
        let n = article_ids.len();
        let t = timeline.len();
        timeline.validate()?;
        if demand.len() != n * t || mask.len() != n * t {
            return Err(Error::Shape {
                expected: (n, t),
                got: (demand.len(), mask.len()),
            });
        }
        if static_features.len() != n * n_static {
            return Err(Error::Shape {
                expected: (n, n_static),
                got: (static_features.len() / n_static.max(1), n_static),
            });
        }
        let unique: BTreeSet<&String> = article_ids.iter().collect();
        if unique.len() != n {
            return Err(Error::InvalidArgument("article ids are not unique".to_string()));
        }
        for (k, (&y, &m)) in demand.iter().zip(&mask).enumerate() {
            if m && !y.is_finite() {
                return Err(Error::NonFiniteDemand { row: k });
            }
            if m && y < 0.0 {
                return Err(Error::NegativeDemand { row: k, value: y });
            }
        }
        if let Some(k) = static_features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: k / n_static.max(1) });
        }
        let covariates = Covariates::Calendar;
        let total = t + future_weeks;
        let dynamic = (0..total).flat_map(|w| covariates.row(&timeline, w, total)).collect();
        // masked cells always hold zero demand
        let demand = demand
            .into_iter()
            .zip(&mask)
            .map(|(y, &m)| if m { y } else { 0.0 })
            .collect();
        Ok(Self {
            article_ids,
            timeline,
            n_static,
            demand,
            mask,
            static_features,
            covariates,
            dynamic,
            future_weeks,
        })
    }

    /// Recompute the known covariates with another kind.
    pub fn with_covariates(mut self, covariates: Covariates) -> Self {
        let total = self.n_weeks() + self.future_weeks;
        self.dynamic = (0..total)
            .flat_map(|w| covariates.row(&self.timeline, w, total))
            .collect();
        self.covariates = covariates;
        self
    }

    pub fn covariates(&self) -> Covariates {
        self.covariates
    }

    pub fn n_articles(&self) -> usize {
        self.article_ids.len()
    }

    pub fn n_weeks(&self) -> usize {
        self.timeline.len()
    }

    pub fn n_static(&self) -> usize {
        self.n_static
    }

    pub fn n_dynamic(&self) -> usize {
        self.covariates.width()
    }

    pub fn future_weeks(&self) -> usize {
        self.future_weeks
    }

    #[inline]
    pub fn demand(&self, article: usize, week: usize) -> f64 {
        self.demand[article * self.n_weeks() + week]
    }

    #[inline]
    pub fn observed(&self, article: usize, week: usize) -> bool {
        self.mask[article * self.n_weeks() + week]
    }

    pub fn demand_row(&self, article: usize) -> &[f64] {
        let t = self.n_weeks();
        &self.demand[article * t..(article + 1) * t]
    }

    pub fn mask_row(&self, article: usize) -> &[bool] {
        let t = self.n_weeks();
        &self.mask[article * t..(article + 1) * t]
    }

    pub fn static_row(&self, article: usize) -> &[f64] {
        &self.static_features[article * self.n_static..(article + 1) * self.n_static]
    }

    pub fn static_matrix(&self) -> &[f64] {
        &self.static_features
    }

    /// Calendar covariates at `week`; valid up to `n_weeks() + future_weeks()`.
    pub fn dynamic(&self, week: usize) -> &[f64] {
        let l = self.n_dynamic();
        &self.dynamic[week * l..(week + 1) * l]
    }

    pub fn index_of(&self, article_id: &str) -> Option<usize> {
        self.article_ids.iter().position(|id| id == article_id)
    }

    /// Weeks `range` of every article, keeping static features and ids.
    pub fn slice_time(&self, range: Range<usize>) -> Self {
        let t = self.n_weeks();
        let mut demand = Vec::with_capacity(self.n_articles() * range.len());
        let mut mask = Vec::with_capacity(demand.capacity());
        for i in 0..self.n_articles() {
            demand.extend_from_slice(&self.demand[i * t + range.start..i * t + range.end]);
            mask.extend_from_slice(&self.mask[i * t + range.start..i * t + range.end]);
        }
        let timeline = Timeline {
            kind: self.timeline.kind,
            labels: self.timeline.labels[range.clone()].to_vec(),
        };
        let future_weeks = if range.end == t { self.future_weeks } else { 0 };
        let l = self.n_dynamic();
        let dynamic = self.dynamic[range.start * l..(range.end + future_weeks) * l].to_vec();
        Self {
            article_ids: self.article_ids.clone(),
            timeline,
            n_static: self.n_static,
            demand,
            mask,
            static_features: self.static_features.clone(),
            covariates: self.covariates,
            dynamic,
            future_weeks,
        }
    }

    /// Concatenate consecutive time slices of the same article set.
    pub fn concat_time(parts: &[&PanelDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no parts to concatenate".to_string()))?;
        let mut labels = Vec::new();
        for p in parts {
            if p.article_ids != first.article_ids {
                return Err(Error::InvalidArgument("parts have different article sets".to_string()));
            }
            labels.extend_from_slice(&p.timeline.labels);
        }
        let timeline = Timeline {
            kind: first.timeline.kind,
            labels,
        };
        let mut demand = Vec::new();
        let mut mask = Vec::new();
        for i in 0..first.n_articles() {
            for p in parts {
                demand.extend_from_slice(p.demand_row(i));
                mask.extend_from_slice(p.mask_row(i));
            }
        }
        let future = parts.last().map_or(0, |p| p.future_weeks);
        Self::new(
            first.article_ids.clone(),
            timeline,
            demand,
            mask,
            first.static_features.clone(),
            first.n_static,
            future,
        )
        .map(|d| d.with_covariates(first.covariates))
    }

    /// Keep only articles whose observed weekly demand has standard deviation
    /// strictly above `min_std`.
    pub fn filter_by_demand_std(&self, min_std: f64) -> Self {
        let keep: Vec<usize> = (0..self.n_articles())
            .filter(|&i| {
                let obs: Vec<f64> = (0..self.n_weeks())
                    .filter(|&w| self.observed(i, w))
                    .map(|w| self.demand(i, w))
                    .collect();
                if obs.len() < 2 {
                    return false;
                }
                let mean = obs.iter().sum::<f64>() / obs.len() as f64;
                let var = obs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (obs.len() - 1) as f64;
                math::sqrt(var) > min_std
            })
            .collect();
        self.select_articles(&keep)
    }

    /// Subset of articles in the given order.
    pub fn select_articles(&self, keep: &[usize]) -> Self {
        let t = self.n_weeks();
        let mut out = self.clone();
        out.article_ids = keep.iter().map(|&i| self.article_ids[i].clone()).collect();
        out.demand = keep.iter().flat_map(|&i| self.demand[i * t..(i + 1) * t].iter().copied()).collect();
        out.mask = keep.iter().flat_map(|&i| self.mask[i * t..(i + 1) * t].iter().copied()).collect();
        out.static_features = keep.iter().flat_map(|&i| self.static_row(i).iter().copied()).collect();
        out
    }
}

/// One row of a long-format demand table.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandRecord {
    pub article_id: String,
    /// Integer week index or day count, matching the timeline kind.
    pub week: i64,
    pub demand: f64,
}

/// Assemble a validated panel from long-format demand rows and per-article
/// static features. Weeks absent for an article are masked with demand 0.
/// Row numbers in errors are 1-based data rows (header excluded).
pub fn assemble_panel(
    records: &[DemandRecord],
    kind: TimelineKind,
    static_ids: &[String],
    static_matrix: &[f64],
    n_static: usize,
    future_weeks: usize,
) -> Result<PanelDataset> {
    let mut seen: BTreeMap<(&str, i64), usize> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for (k, r) in records.iter().enumerate() {
        if !r.demand.is_finite() {
            return Err(Error::NonFiniteDemand { row: k + 1 });
        }
        if r.demand < 0.0 {
            return Err(Error::NegativeDemand {
                row: k + 1,
                value: r.demand,
            });
        }
        if let Some(&prev) = seen.get(&(r.article_id.as_str(), r.week)) {
            duplicates.push(prev + 1);
            duplicates.push(k + 1);
        } else {
            seen.insert((r.article_id.as_str(), r.week), k);
        }
    }
    if !duplicates.is_empty() {
        duplicates.sort_unstable();
        duplicates.dedup();
        return Err(Error::DuplicateRows { rows: duplicates });
    }

    let static_index: BTreeMap<&str, usize> =
        static_ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    let mut ids: Vec<&str> = Vec::new();
    let mut id_seen = BTreeSet::new();
    for r in records {
        if id_seen.insert(r.article_id.as_str()) {
            ids.push(r.article_id.as_str());
        }
    }
    let missing: Vec<String> = ids
        .iter()
        .filter(|id| !static_index.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingStatic { ids: missing });
    }

    let (min_week, max_week) = match (
        records.iter().map(|r| r.week).min(),
        records.iter().map(|r| r.week).max(),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidArgument("demand table is empty".to_string())),
    };
    let step = kind.step();
    if let Some(r) = records.iter().find(|r| (r.week - min_week) % step != 0) {
        return Err(Error::Timeline(alloc::format!(
            "week {} of article {} is off the weekly grid starting at {}",
            r.week, r.article_id, min_week
        )));
    }
    let t = ((max_week - min_week) / step + 1) as usize;
    let n = ids.len();
    let row_of: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    let mut demand = alloc::vec![0.0; n * t];
    let mut mask = alloc::vec![false; n * t];
    for r in records {
        let i = row_of[r.article_id.as_str()];
        let w = ((r.week - min_week) / step) as usize;
        demand[i * t + w] = r.demand;
        mask[i * t + w] = true;
    }
    let mut statics = Vec::with_capacity(n * n_static);
    for id in &ids {
        let k = static_index[id];
        statics.extend_from_slice(&static_matrix[k * n_static..(k + 1) * n_static]);
    }
    PanelDataset::new(
        ids.iter().map(|s| s.to_string()).collect(),
        Timeline::regular(kind, min_week, t),
        demand,
        mask,
        statics,
        n_static,
        future_weeks,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttributeKind {
    Categorical { vocabulary: Vec<String> },
    Numeric { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
}

/// Declared attribute kinds, before the vocabulary and ranges are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeclaredKind {
    Categorical,
    Numeric,
}

/// Frozen encoding of article attributes into the static feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub attributes: Vec<AttributeSpec>,
}

impl FeatureSchema {
    /// Learn vocabularies (sorted) and numeric ranges from raw records whose
    /// values are aligned with `declared`.
    pub fn fit(declared: &[(String, DeclaredKind)], raw: &[Vec<String>]) -> Result<Self> {
        let mut attributes = Vec::with_capacity(declared.len());
        for (col, (name, kind)) in declared.iter().enumerate() {
            let values = raw.iter().map(|r| {
                r.get(col)
                    .map(String::as_str)
                    .ok_or_else(|| Error::Schema(alloc::format!("record is missing attribute `{name}`")))
            });
            let kind = match kind {
                DeclaredKind::Categorical => {
                    let mut vocab = BTreeSet::new();
                    for v in values {
                        vocab.insert(v?.to_string());
                    }
                    AttributeKind::Categorical {
                        vocabulary: vocab.into_iter().collect(),
                    }
                }
                DeclaredKind::Numeric => {
                    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                    for v in values {
                        let x = parse_numeric(name, v?)?;
                        min = min.min(x);
                        max = max.max(x);
                    }
                    if !min.is_finite() {
                        min = 0.0;
                        max = 0.0;
                    }
                    AttributeKind::Numeric { min, max }
                }
            };
            attributes.push(AttributeSpec {
                name: name.clone(),
                kind,
            });
        }
        Ok(Self { attributes })
    }

    /// Width of the encoded feature row.
    pub fn width(&self) -> usize {
        self.attributes
            .iter()
            .map(|a| match &a.kind {
                AttributeKind::Categorical { vocabulary } => vocabulary.len(),
                AttributeKind::Numeric { .. } => 1,
            })
            .sum()
    }

    /// Encoded column names: `attr=value` for one-hot blocks, `attr` for numerics.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for a in &self.attributes {
            match &a.kind {
                AttributeKind::Categorical { vocabulary } => {
                    out.extend(vocabulary.iter().map(|v| alloc::format!("{}={}", a.name, v)))
                }
                AttributeKind::Numeric { .. } => out.push(a.name.clone()),
            }
        }
        out
    }
}

fn parse_numeric(name: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::Schema(alloc::format!("attribute `{name}`: `{v}` is not numeric")))?;
    if !x.is_finite() {
        return Err(Error::Schema(alloc::format!("attribute `{name}`: non-finite value")));
    }
    Ok(x)
}

/// Encoded static features plus a count of unseen categories per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStatic {
    /// N × width, row-major.
    pub matrix: Vec<f64>,
    pub width: usize,
    /// (attribute name, number of rows with an unseen category).
    pub unseen: Vec<(String, usize)>,
}

/// One-hot categoricals (vocabulary order) and min-max scaled numerics,
/// clamped to [0, 1]. Unseen categories encode as an all-zero block.
pub fn encode_static_features(raw: &[Vec<String>], schema: &FeatureSchema) -> Result<EncodedStatic> {
    let width = schema.width();
    let mut matrix = Vec::with_capacity(raw.len() * width);
    let mut unseen: Vec<(String, usize)> = Vec::new();
    for record in raw {
        if record.len() != schema.attributes.len() {
            return Err(Error::Schema(alloc::format!(
                "record has {} attributes, schema declares {}",
                record.len(),
                schema.attributes.len()
            )));
        }
        for (attr, value) in schema.attributes.iter().zip(record) {
            match &attr.kind {
                AttributeKind::Categorical { vocabulary } => {
                    let hit = vocabulary.iter().position(|v| v == value);
                    matrix.extend((0..vocabulary.len()).map(|k| if Some(k) == hit { 1.0 } else { 0.0 }));
                    if hit.is_none() {
                        match unseen.iter_mut().find(|(n, _)| n == &attr.name) {
                            Some((_, c)) => *c += 1,
                            None => unseen.push((attr.name.clone(), 1)),
                        }
                    }
                }
                AttributeKind::Numeric { min, max } => {
                    let x = parse_numeric(&attr.name, value)?;
                    let scaled = if max > min { (x - min) / (max - min) } else { 0.0 };
                    matrix.push(scaled.clamp(0.0, 1.0));
                }
            }
        }
    }
    for (name, count) in &unseen {
        log::warn!("{count} record(s) carry an unseen category for `{name}`");
    }
    Ok(EncodedStatic { matrix, width, unseen })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_weeks: usize,
    pub val_weeks: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_weeks: 26,
            val_weeks: 13,
        }
    }
}

/// Week ranges of the three splits within the full timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitBounds {
    pub fn new(n_weeks: usize, spec: &SplitSpec) -> Result<Self> {
        if spec.test_weeks == 0 || spec.val_weeks == 0 || n_weeks <= spec.test_weeks + spec.val_weeks {
            return Err(Error::Split {
                weeks: n_weeks,
                test: spec.test_weeks,
                val: spec.val_weeks,
            });
        }
        let test_start = n_weeks - spec.test_weeks;
        let val_start = test_start - spec.val_weeks;
        Ok(Self {
            train: 0..val_start,
            val: val_start..test_start,
            test: test_start..n_weeks,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: PanelDataset,
    pub val: PanelDataset,
    pub test: PanelDataset,
    pub bounds: SplitBounds,
}

/// Split along time: the last `test_weeks`, the `val_weeks` before them and
/// the remainder for training. Windows for the later splits read history from
/// the full dataset through `bounds`.
pub fn split_time(data: &PanelDataset, spec: &SplitSpec) -> Result<DataSplits> {
    let bounds = SplitBounds::new(data.n_weeks(), spec)?;
    Ok(DataSplits {
        train: data.slice_time(bounds.train.clone()),
        val: data.slice_time(bounds.val.clone()),
        test: data.slice_time(bounds.test.clone()),
        bounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Window {
    pub article: usize,
    /// Last context week.
    pub anchor: usize,
}

impl Window {
    pub fn context(&self, p: usize) -> Range<usize> {
        self.anchor + 1 - p..self.anchor + 1
    }

    pub fn horizon(&self, k: usize) -> Range<usize> {
        self.anchor + 1..self.anchor + 1 + k
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSet {
    pub entries: Vec<Window>,
    pub context_length: usize,
    pub horizon: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Every fully observed window over the whole timeline, ordered by
/// (anchor, article).
pub fn make_windows(data: &PanelDataset, p: usize, k: usize) -> Result<WindowSet> {
    make_windows_in(data, p, k, 0..data.n_weeks())
}

/// Fully observed windows whose horizon lies inside `horizon_weeks`; context
/// may reach back before the range.
pub fn make_windows_in(data: &PanelDataset, p: usize, k: usize, horizon_weeks: Range<usize>) -> Result<WindowSet> {
    if p == 0 || k == 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "context length and horizon must be positive (got P={p}, K={k})"
        )));
    }
    let end = horizon_weeks.end.min(data.n_weeks());
    let mut entries = Vec::new();
    let first_anchor = (p - 1).max(horizon_weeks.start.saturating_sub(1));
    if end > k {
        for anchor in first_anchor..=end - k - 1 {
            for article in 0..data.n_articles() {
                let span = anchor + 1 - p..anchor + 1 + k;
                if span.clone().all(|w| data.observed(article, w)) {
                    entries.push(Window { article, anchor });
                }
            }
        }
    }
    if entries.is_empty() {
        log::warn!("no fully observed windows for P={p}, K={k} in weeks {horizon_weeks:?}");
    }
    Ok(WindowSet {
        entries,
        context_length: p,
        horizon: k,
    })
}

/// Articles with fewer than `min_history` observed weeks strictly before
/// `at_week`.
pub fn flag_cold_starts(data: &PanelDataset, at_week: usize, min_history: usize) -> Result<Vec<bool>> {
    if at_week > data.n_weeks() {
        return Err(Error::WeekOutOfRange {
            week: at_week,
            needed: 0,
            len: data.n_weeks(),
        });
    }
    Ok((0..data.n_articles())
        .map(|i| data.mask_row(i)[..at_week].iter().filter(|&&m| m).count() < min_history)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(id: &str, week: i64, demand: f64) -> DemandRecord {
        DemandRecord {
            article_id: id.to_string(),
            week,
            demand,
        }
    }

    fn statics(ids: &[&str]) -> (Vec<String>, Vec<f64>) {
        (ids.iter().map(|s| s.to_string()).collect(), vec![1.0; ids.len()])
    }

    fn full_panel(n: usize, t: usize) -> PanelDataset {
        PanelDataset::new(
            (0..n).map(|i| alloc::format!("a{i}")).collect(),
            Timeline::regular(TimelineKind::Index, 1, t),
            (0..n * t).map(|k| k as f64).collect(),
            vec![true; n * t],
            vec![1.0; n],
            1,
            0,
        )
        .unwrap()
    }

    #[test]
    fn assembles_fully_observed_panel() {
        let recs: Vec<_> = ["A", "B"]
            .iter()
            .flat_map(|id| (1..=3).map(move |w| rec(id, w, w as f64)))
            .collect();
        let (ids, m) = statics(&["A", "B"]);
        let p = assemble_panel(&recs, TimelineKind::Index, &ids, &m, 1, 0).unwrap();
        assert_eq!((p.n_articles(), p.n_weeks()), (2, 3));
        assert!((0..2).all(|i| p.mask_row(i).iter().all(|&m| m)));
    }

    #[test]
    fn missing_week_is_masked_with_zero_demand() {
        let recs = vec![rec("A", 1, 1.0), rec("A", 2, 2.0), rec("A", 3, 3.0), rec("B", 1, 4.0), rec("B", 3, 5.0)];
        let (ids, m) = statics(&["A", "B"]);
        let p = assemble_panel(&recs, TimelineKind::Index, &ids, &m, 1, 0).unwrap();
        assert!(!p.observed(1, 1));
        assert_eq!(p.demand(1, 1), 0.0);
    }

    #[test]
    fn rejects_duplicates_with_row_numbers() {
        let recs = vec![rec("A", 1, 1.0), rec("A", 2, 2.0), rec("A", 1, 3.0)];
        let (ids, m) = statics(&["A"]);
        let err = assemble_panel(&recs, TimelineKind::Index, &ids, &m, 1, 0).unwrap_err();
        assert_eq!(err, Error::DuplicateRows { rows: vec![1, 3] });
    }

    #[test]
    fn rejects_negative_demand_and_missing_static() {
        let (ids, m) = statics(&["A"]);
        let err = assemble_panel(&[rec("A", 1, -1.0)], TimelineKind::Index, &ids, &m, 1, 0).unwrap_err();
        assert!(matches!(err, Error::NegativeDemand { row: 1, .. }));
        let err = assemble_panel(&[rec("A", 1, 1.0), rec("Z", 1, 1.0)], TimelineKind::Index, &ids, &m, 1, 0)
            .unwrap_err();
        assert_eq!(err, Error::MissingStatic { ids: vec!["Z".to_string()] });
    }

    #[test]
    fn date_timeline_must_be_weekly() {
        let (ids, m) = statics(&["A"]);
        let d0 = days_from_civil(2021, 1, 4);
        let ok = assemble_panel(&[rec("A", d0, 1.0), rec("A", d0 + 14, 1.0)], TimelineKind::Date, &ids, &m, 1, 0)
            .unwrap();
        assert_eq!(ok.n_weeks(), 3);
        let err = assemble_panel(&[rec("A", d0, 1.0), rec("A", d0 + 3, 1.0)], TimelineKind::Date, &ids, &m, 1, 0)
            .unwrap_err();
        assert!(matches!(err, Error::Timeline(_)));
    }

    #[test]
    fn civil_date_round_trip() {
        for days in [-800_000, -1, 0, 59, 18_628, 40_000] {
            let (y, m, d) = civil_from_days(days);
            assert_eq!(days_from_civil(y, m, d), days);
        }
        assert_eq!(civil_from_days(0), (1970, 1, 1));
        assert_eq!(days_from_civil(2000, 3, 1), 11_017);
    }

    #[test]
    fn one_hot_and_min_max_encoding() {
        let declared = vec![("color".to_string(), DeclaredKind::Categorical)];
        let schema = FeatureSchema {
            attributes: vec![AttributeSpec {
                name: "color".into(),
                kind: AttributeKind::Categorical {
                    vocabulary: vec!["red".into(), "blue".into()],
                },
            }],
        };
        let enc = encode_static_features(&[vec!["red".into()]], &schema).unwrap();
        assert_eq!(enc.matrix, vec![1.0, 0.0]);

        let raw = vec![vec!["10".to_string()], vec!["30".to_string()]];
        let schema = FeatureSchema::fit(&[("size".into(), DeclaredKind::Numeric)], &raw).unwrap();
        let enc = encode_static_features(&[vec!["20".into()]], &schema).unwrap();
        assert_eq!(enc.matrix, vec![0.5]);

        // sorted vocabulary, unseen → zeros
        let raw = vec![vec!["red".to_string()], vec!["blue".to_string()]];
        let schema = FeatureSchema::fit(&declared, &raw).unwrap();
        assert_eq!(schema.column_names(), vec!["color=blue", "color=red"]);
        let enc = encode_static_features(&[vec!["green".into()], vec!["red".into()]], &schema).unwrap();
        assert_eq!(enc.matrix, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(enc.unseen, vec![("color".to_string(), 1)]);
    }

    #[test]
    fn identical_attributes_encode_identically() {
        let declared = vec![
            ("color".to_string(), DeclaredKind::Categorical),
            ("size".to_string(), DeclaredKind::Numeric),
        ];
        let raw = vec![
            vec!["red".to_string(), "3".to_string()],
            vec!["red".to_string(), "3".to_string()],
            vec!["blue".to_string(), "7".to_string()],
        ];
        let schema = FeatureSchema::fit(&declared, &raw).unwrap();
        let a = encode_static_features(&raw, &schema).unwrap();
        let b = encode_static_features(&raw, &schema).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matrix[0..3], a.matrix[3..6]);
    }

    #[test]
    fn split_boundaries() {
        let s = SplitBounds::new(148, &SplitSpec::default()).unwrap();
        // 1-based weeks 1–109, 110–122, 123–148
        assert_eq!(s.train, 0..109);
        assert_eq!(s.val, 109..122);
        assert_eq!(s.test, 122..148);
        assert_eq!(SplitBounds::new(40, &SplitSpec::default()).unwrap().train.len(), 1);
        assert!(matches!(
            SplitBounds::new(39, &SplitSpec::default()),
            Err(Error::Split { weeks: 39, .. })
        ));
    }

    #[test]
    fn split_then_concat_reproduces_panel() {
        let p = full_panel(3, 45);
        let s = split_time(&p, &SplitSpec::default()).unwrap();
        let back = PanelDataset::concat_time(&[&s.train, &s.val, &s.test]).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn window_enumeration_examples() {
        let w = make_windows(&full_panel(1, 5), 2, 1).unwrap();
        // 1-based anchors 2,3,4
        assert_eq!(w.entries.iter().map(|w| w.anchor).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(make_windows(&full_panel(2, 4), 1, 1).unwrap().len(), 6);

        let mut p = full_panel(1, 12);
        for wk in 4..12 {
            p.mask[wk] = false;
        }
        assert!(make_windows(&p, 10, 1).unwrap().is_empty());
        assert!(make_windows(&p, 0, 1).is_err());
    }

    #[test]
    fn windows_restricted_to_horizon_range() {
        let p = full_panel(2, 30);
        let w = make_windows_in(&p, 5, 3, 20..26).unwrap();
        assert!(!w.is_empty());
        for e in &w.entries {
            let h = e.horizon(3);
            assert!(h.start >= 20 && h.end <= 26);
        }
        // anchors 19, 20, 21, 22 for two articles
        assert_eq!(w.len(), 8);
    }

    #[test]
    fn cold_start_boundaries() {
        let mut p = full_panel(3, 10);
        // article 0: observed 1-based weeks 1–4 only; article 2: never observed
        for wk in 4..10 {
            p.mask[wk] = false;
        }
        for wk in 0..10 {
            p.mask[20 + wk] = false;
        }
        let flags = flag_cold_starts(&p, 4, 5).unwrap();
        assert_eq!(flags, vec![true, true, true]);
        let flags = flag_cold_starts(&p, 5, 5).unwrap();
        assert_eq!(flags, vec![true, false, true]);
        assert!(flag_cold_starts(&p, 11, 5).is_err());
    }

    #[test]
    fn demand_std_filter() {
        let mut p = full_panel(2, 4);
        for w in 0..4 {
            p.demand[4 + w] = 3.0;
        }
        let f = p.filter_by_demand_std(1.0);
        assert_eq!(f.article_ids, vec!["a0".to_string()]);
    }

    #[test]
    fn calendar_features_are_bounded() {
        let tl = Timeline::regular(TimelineKind::Date, days_from_civil(2020, 12, 28), 60);
        for t in 0..64 {
            let f = calendar_features(&tl, t, 64);
            assert!(f.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        let f = calendar_features(&tl, 0, 64);
        assert_eq!(f[1], 27.0 / 30.0);
    }
}
