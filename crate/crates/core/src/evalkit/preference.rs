use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ObjectProperty,
    Interaction,
    Overall,
    Physical,
    Photo,
    Semantic,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::ObjectProperty,
        Metric::Interaction,
        Metric::Overall,
        Metric::Physical,
        Metric::Photo,
        Metric::Semantic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ObjectProperty => "object_property",
            Metric::Interaction => "interaction",
            Metric::Overall => "overall",
            Metric::Physical => "physical",
            Metric::Photo => "photo",
            Metric::Semantic => "semantic",
        }
    }

    /// Metrics judged by pairwise choice, as opposed to scalar scores.
    pub fn is_pairwise(self) -> bool {
        matches!(
            self,
            Metric::ObjectProperty | Metric::Interaction | Metric::Overall
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
    #[serde(rename = "tie")]
    Tie,
}

impl Winner {
    pub fn swapped(self) -> Winner {
        match self {
            Winner::A => Winner::B,
            Winner::B => Winner::A,
            Winner::Tie => Winner::Tie,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Slight,
    Moderate,
    Strong,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judge {
    Human,
    Vlm,
}

impl Judge {
    pub fn as_str(self) -> &'static str {
        match self {
            Judge::Human => "human",
            Judge::Vlm => "vlm",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerdictError {
    #[error("a tie must carry strength `none`, and a win must not (winner {winner:?}, strength {strength:?})")]
    Inconsistent { winner: Winner, strength: Strength },
}

/// One two-alternative forced-choice judgment. `category` is a free grouping
/// label, typically the name of the method compared against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct Verdict {
    pub pair_id: String,
    pub metric: Metric,
    pub winner: Winner,
    pub strength: Strength,
    pub judge: Judge,
    #[serde(default)]
    pub category: String,
}

#[derive(Deserialize)]
struct RawVerdict {
    pair_id: String,
    metric: Metric,
    winner: Winner,
    strength: Strength,
    judge: Judge,
    #[serde(default)]
    category: String,
}

impl TryFrom<RawVerdict> for Verdict {
    type Error = VerdictError;

    fn try_from(r: RawVerdict) -> Result<Self, Self::Error> {
        Verdict::new(
            r.pair_id, r.metric, r.winner, r.strength, r.judge, r.category,
        )
    }
}

impl Verdict {
    pub fn new(
        pair_id: impl Into<String>,
        metric: Metric,
        winner: Winner,
        strength: Strength,
        judge: Judge,
        category: impl Into<String>,
    ) -> Result<Self, VerdictError> {
        check_consistent(winner, strength)?;
        Ok(Verdict {
            pair_id: pair_id.into(),
            metric,
            winner,
            strength,
            judge,
            category: category.into(),
        })
    }

    /// The same judgment with the roles of A and B exchanged.
    pub fn swapped(&self) -> Verdict {
        Verdict {
            winner: self.winner.swapped(),
            ..self.clone()
        }
    }
}

pub fn check_consistent(winner: Winner, strength: Strength) -> Result<(), VerdictError> {
    if (winner == Winner::Tie) != (strength == Strength::None) {
        return Err(VerdictError::Inconsistent { winner, strength });
    }
    Ok(())
}

/// Slight 1, moderate 2, strong 3, tie 0.
pub fn strength_weight(v: &Verdict) -> u64 {
    if v.winner == Winner::Tie {
        return 0;
    }
    match v.strength {
        Strength::Slight => 1,
        Strength::Moderate => 2,
        Strength::Strong => 3,
        Strength::None => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceResult {
    /// Strength-weighted win volume of A.
    pub s_a: u64,
    pub s_b: u64,
    pub rate_a_percent: f64,
    pub n_ties: usize,
    pub n_total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceCounts {
    pub s_a: u64,
    pub s_b: u64,
    pub n_ties: usize,
    pub n_total: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum PreferenceError {
    #[error("no verdicts")]
    Empty,
    #[error("verdicts mix metrics {0:?} and {1:?}")]
    MixedMetrics(Metric, Metric),
    #[error("every verdict is a tie; the preference rate is undefined")]
    UndefinedRate(PreferenceCounts),
}

pub fn preference_counts(verdicts: &[Verdict]) -> PreferenceCounts {
    let mut c = PreferenceCounts {
        s_a: 0,
        s_b: 0,
        n_ties: 0,
        n_total: verdicts.len(),
    };
    for v in verdicts {
        match v.winner {
            Winner::A => c.s_a += strength_weight(v),
            Winner::B => c.s_b += strength_weight(v),
            Winner::Tie => c.n_ties += 1,
        }
    }
    c
}

/// Rates are multiples of `2^-RATE_GRID_BITS` percent.
pub const RATE_GRID_BITS: u32 = 40;

/// Share of the decisive weight held by `s_a`, in percent, rounded to the
/// nearest multiple of `2^-40` (ties away from the smaller side). On that
/// grid both a rate and its complement are exact doubles, so swapping the
/// arguments yields exactly `100 - rate`.
pub fn share_percent(s_a: u64, s_b: u64) -> Option<f64> {
    let total = u128::from(s_a) + u128::from(s_b);
    if total == 0 {
        return None;
    }
    let full = 100u128 << RATE_GRID_BITS;
    let units = |small: u64| (full * u128::from(small) + total / 2) / total;
    let n = if s_a <= s_b {
        units(s_a)
    } else {
        full - units(s_b)
    };
    Some(n as f64 / (1u64 << RATE_GRID_BITS) as f64)
}

/// Weighted preference rate of A over B for verdicts on a single metric.
pub fn preference_rate(verdicts: &[Verdict]) -> Result<PreferenceResult, PreferenceError> {
    let first = verdicts.first().ok_or(PreferenceError::Empty)?;
    if let Some(other) = verdicts.iter().find(|v| v.metric != first.metric) {
        return Err(PreferenceError::MixedMetrics(first.metric, other.metric));
    }
    let c = preference_counts(verdicts);
    let rate = share_percent(c.s_a, c.s_b).ok_or(PreferenceError::UndefinedRate(c))?;
    Ok(PreferenceResult {
        s_a: c.s_a,
        s_b: c.s_b,
        rate_a_percent: rate,
        n_ties: c.n_ties,
        n_total: c.n_total,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub metric: Metric,
    pub judge: Judge,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: Metric,
    pub judge: Judge,
    pub category: String,
    pub s_a: u64,
    pub s_b: u64,
    /// `None` when every verdict in the group is a tie.
    pub rate_a_percent: Option<f64>,
    pub n_ties: usize,
    pub n_total: usize,
}

/// Preference rates per `(metric, judge, category)`, ordered by key.
pub fn aggregate(verdicts: &[Verdict]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<GroupKey, Vec<Verdict>> = BTreeMap::new();
    for v in verdicts {
        let key = GroupKey {
            metric: v.metric,
            judge: v.judge,
            category: v.category.clone(),
        };
        groups.entry(key).or_default().push(v.clone());
    }
    groups
        .into_iter()
        .map(|(key, group)| {
            let c = preference_counts(&group);
            AggregateRow {
                metric: key.metric,
                judge: key.judge,
                category: key.category,
                s_a: c.s_a,
                s_b: c.s_b,
                rate_a_percent: share_percent(c.s_a, c.s_b),
                n_ties: c.n_ties,
                n_total: c.n_total,
            }
        })
        .collect()
}

pub const CSV_HEADER: [&str; 8] = [
    "metric",
    "judge",
    "category",
    "s_a",
    "s_b",
    "rate_a_percent",
    "n_ties",
    "n_total",
];

pub fn rows_to_csv(rows: &[AggregateRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).unwrap();
    for r in rows {
        let rate = r
            .rate_a_percent
            .map(|v| format!("{v:.2}"))
            .unwrap_or_default();
        w.write_record([
            r.metric.as_str(),
            r.judge.as_str(),
            &r.category,
            &r.s_a.to_string(),
            &r.s_b.to_string(),
            &rate,
            &r.n_ties.to_string(),
            &r.n_total.to_string(),
        ])
        .unwrap();
    }
    w.into_inner().expect("writing to a Vec cannot fail")
}

pub fn rows_to_json(rows: &[AggregateRow]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(rows).expect("rows serialize");
    out.push(b'\n');
    out
}
