//! Accuracy metrics, article groups, financial loss and model comparison.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::{flag_cold_starts, PanelDataset};
use crate::graph::SimilarityGraph;
use crate::math;
use crate::model::{ForecastRecord, PointForecast};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Absent when total actual demand is zero.
    pub wmape: Option<f64>,
    pub n_obs: usize,
}

fn check_lengths(actuals: &[f64], forecasts: &[f64]) -> Result<()> {
    if actuals.len() != forecasts.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} actuals but {} forecasts",
            actuals.len(),
            forecasts.len()
        )));
    }
    if actuals.is_empty() {
        return Err(Error::InvalidArgument("no observations to score".into()));
    }
    Ok(())
}

pub fn compute_metrics(actuals: &[f64], forecasts: &[f64]) -> Result<Metrics> {
    check_lengths(actuals, forecasts)?;
    let n = actuals.len() as f64;
    let (mut sq, mut abs, mut total) = (0.0, 0.0, 0.0);
    for (&y, &f) in actuals.iter().zip(forecasts) {
        let e = y - f;
        sq += e * e;
        abs += math::abs(e);
        total += y;
    }
    Ok(Metrics {
        rmse: math::sqrt(sq / n),
        mae: abs / n,
        wmape: (total != 0.0).then(|| abs / total),
        n_obs: actuals.len(),
    })
}

/// Σ cost_under·max(0, y − ŷ) + cost_over·max(0, ŷ − y).
pub fn financial_loss(actuals: &[f64], forecasts: &[f64], cost_under: f64, cost_over: f64) -> Result<f64> {
    check_lengths(actuals, forecasts)?;
    if !(cost_under > 0.0 && cost_over > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "costs must be positive (got {cost_under}, {cost_over})"
        )));
    }
    Ok(actuals
        .iter()
        .zip(forecasts)
        .map(|(&y, &f)| cost_under * (y - f).max(0.0) + cost_over * (f - y).max(0.0))
        .sum())
}

/// Percentage reduction of the candidate's loss relative to the baseline.
pub fn uplift(baseline_loss: f64, candidate_loss: f64) -> Option<f64> {
    (baseline_loss != 0.0).then(|| 100.0 * (baseline_loss - candidate_loss) / baseline_loss)
}

/// Relative change of the candidate versus the baseline, in percent.
pub fn percent_delta(baseline: f64, candidate: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (candidate - baseline) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub train_minutes: f64,
    pub inference_minutes: f64,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.train_minutes + self.inference_minutes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub model: String,
    pub timing: Timing,
    /// Percentage difference of the total against the baseline.
    pub total_difference: Option<f64>,
}

/// The first entry is the baseline.
pub fn runtime_report(timings: &[(String, Timing)]) -> Result<Vec<RuntimeRow>> {
    let (_, base) = timings
        .first()
        .ok_or_else(|| Error::InvalidArgument("no timings".into()))?;
    if let Some((m, _)) = timings
        .iter()
        .find(|(_, t)| !(t.train_minutes > 0.0 && t.inference_minutes > 0.0))
    {
        return Err(Error::InvalidArgument(alloc::format!("timings of `{m}` must be positive")));
    }
    Ok(timings
        .iter()
        .enumerate()
        .map(|(k, (m, t))| RuntimeRow {
            model: m.clone(),
            timing: *t,
            total_difference: (k > 0).then(|| percent_delta(base.total(), t.total())).flatten(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    All,
    ColdStart,
    Connected,
    Top(usize),
}

impl Group {
    pub fn label(&self) -> String {
        match self {
            Group::All => "all".to_string(),
            Group::ColdStart => "cold_start".to_string(),
            Group::Connected => "connected".to_string(),
            Group::Top(n) => alloc::format!("top{n}"),
        }
    }
}

/// Articles in each group; `None` when the group cannot be formed.
pub fn group_members(
    data: &PanelDataset,
    graph: Option<&SimilarityGraph>,
    test: &Range<usize>,
    group: Group,
) -> Result<Option<Vec<usize>>> {
    let n = data.n_articles();
    Ok(match group {
        Group::All => Some((0..n).collect()),
        Group::ColdStart => {
            let flags = flag_cold_starts(data, test.start, 5)?;
            Some((0..n).filter(|&i| flags[i]).collect())
        }
        Group::Connected => graph.map(|g| (0..n).filter(|&i| g.stored_degree(i) >= 1).collect()),
        Group::Top(k) => {
            let mut totals: Vec<(usize, f64)> = (0..n)
                .map(|i| {
                    let s = test.clone().filter(|&w| data.observed(i, w)).map(|w| data.demand(i, w)).sum();
                    (i, s)
                })
                .collect();
            totals.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then_with(|| data.article_ids[a.0].cmp(&data.article_ids[b.0]))
            });
            Some(totals.into_iter().take(k).map(|(i, _)| i).collect())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub dataset: String,
    pub group: String,
    pub model: String,
    pub metrics: Option<Metrics>,
    pub n_articles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    /// (model, financial loss) when costs were supplied.
    pub financial: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    pub under: f64,
    pub over: f64,
}

pub struct ModelForecasts<'a> {
    pub model: &'a str,
    pub records: &'a [ForecastRecord],
}

/// Actuals and point forecasts over observed test cells of `articles`.
fn pooled(
    data: &PanelDataset,
    test: &Range<usize>,
    records: &[ForecastRecord],
    articles: &[usize],
    point: PointForecast,
) -> (Vec<f64>, Vec<f64>) {
    let mut member = alloc::vec![false; data.n_articles()];
    for &i in articles {
        member[i] = true;
    }
    let mut ys = Vec::new();
    let mut fs = Vec::new();
    for r in records {
        if member[r.article] && test.contains(&r.week) && r.week < data.n_weeks() && data.observed(r.article, r.week) {
            ys.push(data.demand(r.article, r.week));
            fs.push(r.point(point));
        }
    }
    (ys, fs)
}

/// Metrics per (group, model), pooled over (article, week) cells.
#[allow(clippy::too_many_arguments)]
pub fn group_report(
    dataset: &str,
    data: &PanelDataset,
    graph: Option<&SimilarityGraph>,
    test: Range<usize>,
    models: &[ModelForecasts<'_>],
    top_n: usize,
    point: PointForecast,
    costs: Option<Costs>,
) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        rows: Vec::new(),
        financial: Vec::new(),
        notes: Vec::new(),
    };
    for group in [Group::All, Group::ColdStart, Group::Connected, Group::Top(top_n)] {
        let Some(members) = group_members(data, graph, &test, group)? else {
            report.notes.push(alloc::format!("group `{}` omitted: no graph supplied", group.label()));
            continue;
        };
        if members.is_empty() {
            report.notes.push(alloc::format!("group `{}` is empty", group.label()));
        }
        for m in models {
            let (ys, fs) = pooled(data, &test, m.records, &members, point);
            let metrics = if ys.is_empty() { None } else { Some(compute_metrics(&ys, &fs)?) };
            report.rows.push(MetricsRow {
                dataset: dataset.to_string(),
                group: group.label(),
                model: m.model.to_string(),
                metrics,
                n_articles: members.len(),
            });
        }
    }
    if let Some(c) = costs {
        let all: Vec<usize> = (0..data.n_articles()).collect();
        for m in models {
            let (ys, fs) = pooled(data, &test, m.records, &all, point);
            if !ys.is_empty() {
                report
                    .financial
                    .push((m.model.to_string(), financial_loss(&ys, &fs, c.under, c.over)?));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub group: String,
    pub metric: String,
    pub model: String,
    pub value: Option<f64>,
    /// Change against the baseline in percent.
    pub delta_pct: Option<f64>,
    /// Lowest value among the models for this (group, metric).
    pub best: bool,
}

/// Side-by-side comparison of per-model rows against `baseline`. Every model
/// must report the same set of groups.
pub fn compare_models(rows: &[MetricsRow], baseline: &str) -> Result<Vec<ComparisonEntry>> {
    let mut models: Vec<&str> = Vec::new();
    let mut groups: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        if !groups.contains(&r.group.as_str()) {
            groups.push(&r.group);
        }
    }
    if !models.contains(&baseline) {
        return Err(Error::InvalidArgument(alloc::format!("baseline `{baseline}` not among the reports")));
    }
    let find = |g: &str, m: &str| rows.iter().find(|r| r.group == g && r.model == m);
    for m in &models {
        let missing: Vec<&str> = groups.iter().copied().filter(|g| find(g, m).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::GroupMismatch(alloc::format!(
                "model `{m}` lacks group(s) {}",
                missing.join(", ")
            )));
        }
    }
    let mut out = Vec::new();
    type Pick = fn(&Metrics) -> Option<f64>;
    let metrics: [(&str, Pick); 3] = [("rmse", |m| Some(m.rmse)), ("mae", |m| Some(m.mae)), ("wmape", |m| m.wmape)];
    for g in &groups {
        for (name, pick) in metrics {
            let value = |m: &str| find(g, m).and_then(|r| r.metrics.as_ref()).and_then(pick);
            let best = models
                .iter()
                .filter_map(|m| value(m))
                .fold(f64::INFINITY, f64::min);
            let base = value(baseline);
            for m in &models {
                let v = value(m);
                out.push(ComparisonEntry {
                    group: g.to_string(),
                    metric: name.to_string(),
                    model: m.to_string(),
                    value: v,
                    delta_pct: match (base, v) {
                        (Some(b), Some(c)) => percent_delta(b, c),
                        _ => None,
                    },
                    best: v == Some(best),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Timeline, TimelineKind};
    use alloc::vec;

    #[test]
    fn worked_example() {
        let m = compute_metrics(&[10.0, 0.0], &[8.0, 1.0]).unwrap();
        assert!((m.rmse - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.mae, 1.5);
        assert_eq!(m.wmape, Some(0.15 * 2.0));
        let z = compute_metrics(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(z.wmape, None);
        assert_eq!(z.mae, 1.5);
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
        let p = compute_metrics(&[3.0, 4.0], &[3.0, 4.0]).unwrap();
        assert_eq!((p.rmse, p.mae, p.wmape), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn financial_examples() {
        assert_eq!(financial_loss(&[10.0], &[7.0], 2.0, 1.0).unwrap(), 6.0);
        assert_eq!(financial_loss(&[10.0, 3.0], &[10.0, 3.0], 2.0, 1.0).unwrap(), 0.0);
        assert!(financial_loss(&[1.0], &[1.0], 0.0, 1.0).is_err());
        assert_eq!(uplift(0.0, 1.0), None);
        assert!((uplift(100.0, 97.95).unwrap() - 2.05).abs() < 1e-12);
    }

    #[test]
    fn runtime_examples() {
        let t = |a, b| Timing {
            train_minutes: a,
            inference_minutes: b,
        };
        let r = runtime_report(&[("base".into(), t(10.80, 0.14)), ("graph".into(), t(28.33, 0.22))]).unwrap();
        assert_eq!(r[0].total_difference, None);
        assert!((r[1].total_difference.unwrap() - 160.968_921_389_396_7).abs() < 1e-9);
        let r = runtime_report(&[("a".into(), t(1.0, 1.0)), ("b".into(), t(1.0, 1.0))]).unwrap();
        assert_eq!(r[1].total_difference, Some(0.0));
        let r = runtime_report(&[("a".into(), t(2.0, 1.0)), ("b".into(), t(1.0, 1.0))]).unwrap();
        assert!(r[1].total_difference.unwrap() < 0.0);
    }

    fn panel(totals: &[f64]) -> PanelDataset {
        let n = totals.len();
        PanelDataset::new(
            (0..n).map(|i| alloc::format!("a{i}")).collect(),
            Timeline::regular(TimelineKind::Index, 1, 2),
            totals.iter().flat_map(|&t| [1.0, t]).collect(),
            vec![true; 2 * n],
            vec![1.0; n],
            1,
            0,
        )
        .unwrap()
    }

    #[test]
    fn top_sellers_by_test_total() {
        let d = panel(&[5.0, 9.0, 2.0]);
        assert_eq!(group_members(&d, None, &(1..2), Group::Top(2)).unwrap(), Some(vec![1, 0]));
        assert_eq!(
            group_members(&d, None, &(1..2), Group::Top(10)).unwrap().unwrap().len(),
            3
        );
        assert_eq!(group_members(&d, None, &(1..2), Group::Connected).unwrap(), None);
        let iso = SimilarityGraph::isolated(3);
        assert_eq!(group_members(&d, Some(&iso), &(1..2), Group::Connected).unwrap(), Some(vec![]));
    }

    #[test]
    fn comparison_deltas() {
        let row = |m: &str, rmse: f64| MetricsRow {
            dataset: "d".into(),
            group: "all".into(),
            model: m.into(),
            metrics: Some(Metrics {
                rmse,
                mae: 1.0,
                wmape: Some(0.5),
                n_obs: 3,
            }),
            n_articles: 1,
        };
        let c = compare_models(&[row("deepar", 204.68), row("graph", 196.13)], "deepar").unwrap();
        let e = c.iter().find(|e| e.model == "graph" && e.metric == "rmse").unwrap();
        assert!((e.delta_pct.unwrap() - -4.177_252_296_267_35).abs() < 1e-9);
        assert!(e.best);
        let same = compare_models(&[row("deepar", 1.0), row("x", 1.0)], "deepar").unwrap();
        assert!(same.iter().all(|e| e.delta_pct == Some(0.0)));
        let mut other = row("x", 1.0);
        other.group = "top100".into();
        assert!(compare_models(&[row("deepar", 1.0), other], "deepar").is_err());
    }
}
