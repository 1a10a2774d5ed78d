//! Classical test theory: item difficulty and discrimination, Cronbach's
//! alpha, score summaries and group comparisons.

use serde::{Deserialize, Serialize};

use crate::dataset::{FactorSpec, Gender, Grade, ItemId, ScoredMatrix};
use crate::error::{Error, Result};
use crate::stats::{mean, pearson, sample_var, t_two_sided};

/// Whether the item is removed from the total before correlating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointBiserial {
    #[default]
    Uncorrected,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CttItemStats {
    pub item: ItemId,
    /// Proportion correct.
    pub difficulty: f64,
    /// Sample standard deviation of the 0/1 column.
    pub sd: f64,
    /// Item-total correlation, total including the item. `None` for a
    /// constant item.
    pub point_biserial: Option<f64>,
    /// Item-rest correlation, total excluding the item.
    pub point_biserial_corrected: Option<f64>,
    /// Cronbach's alpha of the remaining items.
    pub drop_alpha: Option<f64>,
}

impl CttItemStats {
    pub fn r_pb(&self, variant: PointBiserial) -> Option<f64> {
        match variant {
            PointBiserial::Uncorrected => self.point_biserial,
            PointBiserial::Corrected => self.point_biserial_corrected,
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Alpha from column indices; `None` when fewer than two items or the total
/// has no variance.
fn alpha_of_columns(ds: &ScoredMatrix, cols: &[usize]) -> Option<f64> {
    let k = cols.len();
    if k < 2 || ds.n() < 2 {
        return None;
    }
    let item_var: f64 = cols.iter().map(|&c| sample_var(&ds.column(c))).sum();
    let totals: Vec<f64> = (0..ds.n())
        .map(|r| cols.iter().map(|&c| ds.get(r, c) as f64).sum())
        .collect();
    let total_var = sample_var(&totals);
    if total_var <= 0.0 {
        return None;
    }
    let kf = k as f64;
    Some(kf / (kf - 1.0) * (1.0 - item_var / total_var))
}

/// Cronbach's alpha over `items` with the N-1 variance convention.
pub fn cronbach_alpha(ds: &ScoredMatrix, items: &[ItemId]) -> Result<f64> {
    if items.len() < 2 {
        return Err(Error::InvalidArgument("alpha needs at least two items".into()));
    }
    let cols = items
        .iter()
        .map(|&it| {
            ds.column_index(it)
                .ok_or_else(|| Error::InvalidArgument(format!("item {it} not in data")))
        })
        .collect::<Result<Vec<_>>>()?;
    alpha_of_columns(ds, &cols)
        .ok_or_else(|| Error::InvalidArgument("total score has zero variance".into()))
}

/// Alpha per factor block, `None` where a block is too small or constant.
pub fn block_alphas(ds: &ScoredMatrix, spec: &FactorSpec) -> Vec<(String, Option<f64>)> {
    spec.factors
        .iter()
        .map(|f| (f.name.clone(), cronbach_alpha(ds, &f.items).ok()))
        .collect()
}

pub fn item_analysis(ds: &ScoredMatrix) -> Result<Vec<CttItemStats>> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::SubsetTooSmall { n });
    }
    let totals = ds.totals();
    let all_cols: Vec<usize> = (0..ds.j()).collect();
    let stats: Vec<CttItemStats> = all_cols
        .iter()
        .map(|&c| {
            let col = ds.column(c);
            let rest: Vec<f64> = totals.iter().zip(&col).map(|(t, x)| t - x).collect();
            let others: Vec<usize> = all_cols.iter().copied().filter(|&o| o != c).collect();
            CttItemStats {
                item: ds.item_ids()[c],
                difficulty: mean(&col),
                sd: sample_var(&col).sqrt(),
                point_biserial: finite(pearson(&col, &totals)),
                point_biserial_corrected: finite(pearson(&col, &rest)),
                drop_alpha: alpha_of_columns(ds, &others),
            }
        })
        .collect();
    if stats.iter().all(|s| s.sd == 0.0) {
        return Err(Error::InvalidArgument("every item is constant".into()));
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Count of each total score 0..=J.
    pub histogram: Vec<usize>,
    /// Share of respondents scoring strictly below J/4.
    pub below_chance_fraction: f64,
}

pub fn score_summary(ds: &ScoredMatrix) -> Result<ScoreSummary> {
    let n = ds.n();
    if n == 0 {
        return Err(Error::SubsetTooSmall { n });
    }
    let totals = ds.totals();
    let j = ds.j();
    let mut histogram = vec![0usize; j + 1];
    for &t in &totals {
        histogram[t as usize] += 1;
    }
    let chance = j as f64 / 4.0;
    let below = totals.iter().filter(|&&t| t < chance).count();
    Ok(ScoreSummary {
        n,
        mean: mean(&totals),
        sd: if n > 1 { sample_var(&totals).sqrt() } else { 0.0 },
        histogram,
        below_chance_fraction: below as f64 / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Grade,
    Gender,
}

/// Welch t-test plus Cohen's D. Differences are `second - first`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub labels: [String; 2],
    pub n: [usize; 2],
    pub means: [f64; 2],
    pub mean_difference: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    /// Mean difference over the pooled standard deviation.
    pub cohens_d: f64,
}

pub fn compare_scores(first: &[f64], second: &[f64], labels: [&str; 2]) -> Result<GroupComparison> {
    let (n1, n2) = (first.len(), second.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::InvalidArgument(format!(
            "groups {} and {} need at least two members each (have {n1}, {n2})",
            labels[0], labels[1]
        )));
    }
    let (m1, m2) = (mean(first), mean(second));
    let (v1, v2) = (sample_var(first), sample_var(second));
    if v1 <= 0.0 && v2 <= 0.0 {
        return Err(Error::InvalidArgument("both groups have zero variance".into()));
    }
    let (a, b) = (v1 / n1 as f64, v2 / n2 as f64);
    let se = (a + b).sqrt();
    let diff = m2 - m1;
    let t = diff / se;
    let df = (a + b).powi(2) / (a * a / (n1 - 1) as f64 + b * b / (n2 - 1) as f64);
    let pooled = (((n1 - 1) as f64 * v1 + (n2 - 1) as f64 * v2) / (n1 + n2 - 2) as f64).sqrt();
    Ok(GroupComparison {
        labels: [labels[0].to_string(), labels[1].to_string()],
        n: [n1, n2],
        means: [m1, m2],
        mean_difference: diff,
        t,
        df,
        p_value: t_two_sided(t, df),
        cohens_d: diff / pooled,
    })
}

/// Grade: grade 4 minus grade 3 (mixed classrooms excluded). Gender: boys
/// minus girls (undisclosed excluded).
pub fn group_compare(ds: &ScoredMatrix, grouping: Grouping) -> Result<GroupComparison> {
    let totals = ds.totals();
    let demo = ds.demographics();
    let pick = |f: &dyn Fn(usize) -> bool| -> Vec<f64> {
        (0..ds.n()).filter(|&r| f(r)).map(|r| totals[r]).collect()
    };
    let (first, second, labels) = match grouping {
        Grouping::Grade => (
            pick(&|r| demo[r].grade == Grade::G3),
            pick(&|r| demo[r].grade == Grade::G4),
            ["g3", "g4"],
        ),
        Grouping::Gender => (
            pick(&|r| demo[r].gender == Gender::F),
            pick(&|r| demo[r].gender == Gender::M),
            ["f", "m"],
        ),
    };
    compare_scores(&first, &second, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub subset: String,
    pub item: ItemId,
    pub metric: String,
    pub value: Option<f64>,
}

/// Long-format difficulty and point-biserial series, one row per
/// (subset, item, metric).
pub fn emit_item_curves(per_subset: &[(String, Vec<CttItemStats>)], variant: PointBiserial) -> Vec<CurveRow> {
    per_subset
        .iter()
        .flat_map(|(subset, stats)| {
            stats.iter().flat_map(move |s| {
                [
                    ("difficulty", Some(s.difficulty)),
                    ("point_biserial", s.r_pb(variant)),
                ]
                .into_iter()
                .map(move |(metric, value)| CurveRow {
                    subset: subset.clone(),
                    item: s.item,
                    metric: metric.to_string(),
                    value,
                })
            })
        })
        .collect()
}
