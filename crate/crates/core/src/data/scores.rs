use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clinical targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Score {
    #[serde(rename = "DSS")]
    Dss,
    #[serde(rename = "ADAS13")]
    Adas13,
    #[serde(rename = "MMSE")]
    Mmse,
}

impl Score {
    pub const ALL: [Score; 3] = [Score::Dss, Score::Adas13, Score::Mmse];

    /// CSV column name.
    pub fn column(self) -> &'static str {
        match self {
            Score::Dss => "DSS",
            Score::Adas13 => "ADAS13",
            Score::Mmse => "MMSE",
        }
    }

    /// Documented instrument range.
    pub fn range(self) -> (f64, f64) {
        match self {
            Score::Dss => (1.0, 5.0),
            Score::Adas13 => (0.0, 85.0),
            Score::Mmse => (0.0, 30.0),
        }
    }

    pub fn validate(self, value: f64) -> Result<()> {
        let (lo, hi) = self.range();
        if !(value >= lo && value <= hi) {
            return Err(Error::ScoreOutOfRange(format!(
                "{} = {value} outside [{lo}, {hi}]",
                self.column()
            )));
        }
        if self == Score::Dss && value.fract() != 0.0 {
            return Err(Error::ScoreOutOfRange(format!(
                "DSS = {value} is not a stage in 1..5"
            )));
        }
        Ok(())
    }

    /// Map a raw score onto [0, 1] with higher meaning more severe.
    pub fn normalize(self, value: f64) -> Result<f64> {
        self.validate(value)?;
        Ok(match self {
            Score::Dss => (value - 1.0) / 4.0,
            Score::Adas13 => value / 85.0,
            Score::Mmse => (30.0 - value) / 30.0,
        })
    }

    /// Inverse of [`Score::normalize`].
    pub fn denormalize(self, u: f64) -> f64 {
        match self {
            Score::Dss => 1.0 + 4.0 * u,
            Score::Adas13 => 85.0 * u,
            Score::Mmse => 30.0 - 30.0 * u,
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Score {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DSS" => Ok(Score::Dss),
            "ADAS13" | "ADAS-13" => Ok(Score::Adas13),
            "MMSE" => Ok(Score::Mmse),
            _ => Err(Error::InvalidArgument(format!(
                "unknown score `{s}` (expected DSS, ADAS13 or MMSE)"
            ))),
        }
    }
}

/// Raw scores of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawScores {
    pub dss: f64,
    pub adas13: f64,
    pub mmse: f64,
}

impl RawScores {
    pub fn get(&self, score: Score) -> f64 {
        match score {
            Score::Dss => self.dss,
            Score::Adas13 => self.adas13,
            Score::Mmse => self.mmse,
        }
    }
}

/// Normalized responses, one vector per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScores {
    pub dss: Vec<f64>,
    pub adas13: Vec<f64>,
    pub mmse: Vec<f64>,
}

impl NormalizedScores {
    pub fn get(&self, score: Score) -> &[f64] {
        match score {
            Score::Dss => &self.dss,
            Score::Adas13 => &self.adas13,
            Score::Mmse => &self.mmse,
        }
    }
}

fn min_max(v: &mut [f64]) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for x in v.iter_mut() {
        *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
    }
}

/// Normalize every subject's scores by the instruments' documented ranges.
///
/// With `cohort_min_max`, each target is additionally stretched to span
/// exactly [0, 1] over the given subjects (constant targets map to 0).
pub fn normalize_scores(raw: &[RawScores], cohort_min_max: bool) -> Result<NormalizedScores> {
    let column = |s: Score| -> Result<Vec<f64>> {
        let mut v = raw
            .iter()
            .map(|r| s.normalize(r.get(s)))
            .collect::<Result<Vec<_>>>()?;
        if cohort_min_max && !v.is_empty() {
            min_max(&mut v);
        }
        Ok(v)
    };
    Ok(NormalizedScores {
        dss: column(Score::Dss)?,
        adas13: column(Score::Adas13)?,
        mmse: column(Score::Mmse)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_examples() {
        let dss: Vec<f64> = (1..=5)
            .map(|d| Score::Dss.normalize(d as f64).unwrap())
            .collect();
        assert_eq!(dss, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(Score::Mmse.normalize(30.0).unwrap(), 0.0);
        assert_eq!(Score::Adas13.normalize(85.0).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert!(matches!(Score::Dss.normalize(0.0), Err(Error::ScoreOutOfRange(_))));
        assert!(Score::Dss.normalize(2.5).is_err());
        assert!(Score::Adas13.normalize(85.5).is_err());
        assert!(Score::Mmse.normalize(-1.0).is_err());
        assert!(Score::Mmse.normalize(f64::NAN).is_err());
        let raw = [RawScores {
            dss: 6.0,
            adas13: 1.0,
            mmse: 1.0,
        }];
        assert!(normalize_scores(&raw, false).is_err());
    }

    #[test]
    fn cohort_min_max_spans_unit_interval() {
        let raw = [
            RawScores { dss: 2.0, adas13: 10.0, mmse: 28.0 },
            RawScores { dss: 3.0, adas13: 20.0, mmse: 25.0 },
            RawScores { dss: 3.0, adas13: 40.0, mmse: 20.0 },
        ];
        let n = normalize_scores(&raw, true).unwrap();
        assert_eq!(n.dss, vec![0.0, 1.0, 1.0]);
        for (got, want) in n.adas13.iter().chain(&n.mmse).zip([0.0, 1.0 / 3.0, 1.0, 0.0, 0.375, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let fixed = normalize_scores(&raw, false).unwrap();
        assert_eq!(fixed.dss, vec![0.25, 0.5, 0.5]);
    }

    #[test]
    fn parses_names() {
        assert_eq!("adas13".parse::<Score>().unwrap(), Score::Adas13);
        assert!("MoCA".parse::<Score>().is_err());
    }

    proptest! {
        #[test]
        fn severity_is_monotone(a in 0.0..=85.0f64, b in 0.0..=85.0f64, m in 0.0..=30.0f64, n in 0.0..=30.0f64) {
            let (ua, ub) = (Score::Adas13.normalize(a).unwrap(), Score::Adas13.normalize(b).unwrap());
            prop_assert!((0.0..=1.0).contains(&ua));
            prop_assert!(a > b || ua <= ub);
            let (um, un) = (Score::Mmse.normalize(m).unwrap(), Score::Mmse.normalize(n).unwrap());
            prop_assert!((0.0..=1.0).contains(&um));
            // Higher MMSE is better cognition, so less severe.
            prop_assert!(m > n || um >= un);
            prop_assert!((Score::Adas13.denormalize(ua) - a).abs() < 1e-12);
        }

        #[test]
        fn dss_stages_are_ordered(d in 1u8..5) {
            let lo = Score::Dss.normalize(d as f64).unwrap();
            let hi = Score::Dss.normalize(d as f64 + 1.0).unwrap();
            prop_assert!(lo < hi);
        }
    }
}
