use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Share of days used for training plus validation.
    pub train_frac: f64,
    /// Share of the training block held out for validation.
    pub val_frac_of_train: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.70,
            val_frac_of_train: 0.20,
        }
    }
}

/// Contiguous chronological day-index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    /// Train and validation together (the full training block).
    pub fn train_full(&self) -> Range<usize> {
        self.train.start..self.val.end
    }

    /// First and last date of each split.
    pub fn boundaries(&self, calendar: &[NaiveDate]) -> [(NaiveDate, NaiveDate); 3] {
        let b = |r: &Range<usize>| (calendar[r.start], calendar[r.end - 1]);
        [b(&self.train), b(&self.val), b(&self.test)]
    }
}

fn frac_floor(x: f64, n: usize) -> usize {
    (x * n as f64 + 1e-9).floor() as usize
}

/// Splits `n_days` into train / validation / test. Training needs at least
/// `lookback + 2` days; validation and test at least 2 each (one decision
/// day plus one realized return).
pub fn split_panel(n_days: usize, spec: &SplitSpec, lookback: usize) -> Result<Splits> {
    let too_short = |reason: String| DataError::SplitTooShort { days: n_days, reason };
    for (name, f) in [("train_frac", spec.train_frac), ("val_frac_of_train", spec.val_frac_of_train)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(too_short(format!("{name} = {f} must lie strictly between 0 and 1")));
        }
    }
    let block = frac_floor(spec.train_frac, n_days);
    let val = frac_floor(spec.val_frac_of_train, block);
    let train = block - val;
    let test = n_days - block;
    if train < lookback + 2 {
        return Err(too_short(format!("train split has {train} days, needs {}", lookback + 2)));
    }
    if val < 2 {
        return Err(too_short(format!("validation split has {val} days, needs 2")));
    }
    if test < 2 {
        return Err(too_short(format!("test split has {test} days, needs 2")));
    }
    Ok(Splits {
        train: 0..train,
        val: train..block,
        test: block..n_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_arithmetic() {
        let s = split_panel(1000, &SplitSpec::default(), 30).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (560, 140, 300));
        let s = split_panel(100, &SplitSpec::default(), 30).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (56, 14, 30));
        assert_eq!(s.train_full(), 0..70);
    }

    #[test]
    fn infeasible_split_errors() {
        let spec = SplitSpec {
            train_frac: 0.99,
            ..Default::default()
        };
        assert!(matches!(split_panel(40, &spec, 30), Err(DataError::SplitTooShort { .. })));
        assert!(split_panel(20, &SplitSpec::default(), 30).is_err());
        let bad = SplitSpec {
            train_frac: 1.0,
            ..Default::default()
        };
        assert!(split_panel(1000, &bad, 30).is_err());
    }

    proptest! {
        #[test]
        fn splits_partition_the_calendar(n in 60usize..3000, tf in 0.3f64..0.95, vf in 0.05f64..0.5) {
            let spec = SplitSpec { train_frac: tf, val_frac_of_train: vf };
            if let Ok(s) = split_panel(n, &spec, 30) {
                prop_assert_eq!(s.train.start, 0);
                prop_assert_eq!(s.train.end, s.val.start);
                prop_assert_eq!(s.val.end, s.test.start);
                prop_assert_eq!(s.test.end, n);
                prop_assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
            }
        }
    }
}
