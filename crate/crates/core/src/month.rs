//! Calendar month arithmetic for cohort labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A calendar month identifying a cohort (or a prediction month).
///
/// Ordered chronologically; differences and offsets are measured in whole
/// months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CohortMonth {
    year: i32,
    month: u8,
}

impl CohortMonth {
    pub fn new(year: i32, month: u8) -> Result<Self, MonthParseError> {
        if !(1..=12).contains(&month) {
            return Err(MonthParseError {
                input: format!("{year}-{month}"),
            });
        }
        Ok(Self { year, month })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    /// The month `n` calendar months after this one (`n` may be negative).
    pub fn add_months(&self, n: i32) -> Self {
        let total = self.year * 12 + i32::from(self.month) - 1 + n;
        Self {
            year: total.div_euclid(12),
            month: (total.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn next(&self) -> Self {
        self.add_months(1)
    }

    pub fn prev(&self) -> Self {
        self.add_months(-1)
    }

    /// Signed count of months from `self` to `other`.
    pub fn months_until(&self, other: CohortMonth) -> i32 {
        (other.year - self.year) * 12 + i32::from(other.month) - i32::from(self.month)
    }
}

impl fmt::Display for CohortMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// `YYYY-MM` failed to parse.
#[derive(Debug, Clone, thiserror::Error)]
#[error("invalid month '{input}', expected YYYY-MM")]
pub struct MonthParseError {
    pub input: String,
}

impl FromStr for CohortMonth {
    type Err = MonthParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MonthParseError {
            input: s.to_string(),
        };
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        let year: i32 = y.parse().map_err(|_| err())?;
        if m.len() != 2 {
            return Err(err());
        }
        let month: u8 = m.parse().map_err(|_| err())?;
        CohortMonth::new(year, month).map_err(|_| err())
    }
}

impl TryFrom<String> for CohortMonth {
    type Error = MonthParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CohortMonth> for String {
    fn from(m: CohortMonth) -> String {
        m.to_string()
    }
}
