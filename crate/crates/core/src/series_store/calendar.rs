use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::NaiveDate;

use super::IntensityMatrix;
use crate::clock::is_weekend;
use crate::error::{Error, Result};

/// Rule for dividing the matrix's dates into train and test days.
/// Weekends are Friday and Saturday.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitPolicy {
    /// First `k` dates train, the rest test.
    FirstKTrain(usize),
    /// Weekdays only: first `k` train, remaining weekdays test.
    WeekdaysOnly(usize),
    /// Every weekday trains, every weekend day tests.
    WeekdaysTrainWeekendsTest,
    /// First `train` weekend days train, last `test` weekdays test.
    WeekendsTrainWeekdaysTest { train: usize, test: usize },
    /// Weekend days only: first `k` train, remaining weekend days test.
    WeekendsOnly(usize),
}

impl fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitPolicy::FirstKTrain(k) => write!(f, "first-k-train:{k}"),
            SplitPolicy::WeekdaysOnly(k) => write!(f, "weekdays-only:{k}"),
            SplitPolicy::WeekdaysTrainWeekendsTest => f.write_str("weekdays-train-weekends-test"),
            SplitPolicy::WeekendsTrainWeekdaysTest { train, test } => {
                write!(f, "weekends-train-weekdays-test:{train}:{test}")
            }
            SplitPolicy::WeekendsOnly(k) => write!(f, "weekends-only:{k}"),
        }
    }
}

impl FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown split policy {s:?}; expected first-k-train:K, weekdays-only:K, \
                 weekdays-train-weekends-test, weekends-train-weekdays-test:K:K or weekends-only:K"
            ))
        };
        let mut parts = s.trim().split(':');
        let name = parts.next().ok_or_else(bad)?;
        let nums: Vec<usize> = parts
            .map(|p| p.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match (name, nums.as_slice()) {
            ("first-k-train", [k]) => Ok(SplitPolicy::FirstKTrain(*k)),
            ("weekdays-only", [k]) => Ok(SplitPolicy::WeekdaysOnly(*k)),
            ("weekdays-train-weekends-test", []) => Ok(SplitPolicy::WeekdaysTrainWeekendsTest),
            ("weekends-train-weekdays-test", [a, b]) => Ok(SplitPolicy::WeekendsTrainWeekdaysTest { train: *a, test: *b }),
            ("weekends-only", [k]) => Ok(SplitPolicy::WeekendsOnly(*k)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalendarSplit {
    pub policy: Option<SplitPolicy>,
    pub train_days: BTreeSet<NaiveDate>,
    pub test_days: BTreeSet<NaiveDate>,
}

impl CalendarSplit {
    pub fn new(train_days: BTreeSet<NaiveDate>, test_days: BTreeSet<NaiveDate>) -> Result<Self> {
        if train_days.is_empty() || test_days.is_empty() {
            return Err(Error::Split(format!(
                "train ({}) and test ({}) day sets must both be non-empty",
                train_days.len(),
                test_days.len()
            )));
        }
        if let Some(d) = train_days.intersection(&test_days).next() {
            return Err(Error::Split(format!("{d} is both a train and a test day")));
        }
        Ok(CalendarSplit {
            policy: None,
            train_days,
            test_days,
        })
    }

    /// Label used in result files.
    pub fn descriptor(&self) -> String {
        match &self.policy {
            Some(p) => p.to_string(),
            None => format!("custom:{}/{}", self.train_days.len(), self.test_days.len()),
        }
    }

    pub fn all_days(&self) -> BTreeSet<NaiveDate> {
        self.train_days.union(&self.test_days).copied().collect()
    }
}

fn take_first(pool: &[NaiveDate], k: usize, label: &str) -> Result<(Vec<NaiveDate>, Vec<NaiveDate>)> {
    if k == 0 || k >= pool.len() {
        return Err(Error::Split(format!(
            "{label}: {k} train days requested but {} available (need at least one test day)",
            pool.len()
        )));
    }
    Ok((pool[..k].to_vec(), pool[k..].to_vec()))
}

/// Applies `policy` to a set of calendar dates.
pub fn split_dates(dates: &[NaiveDate], policy: SplitPolicy) -> Result<CalendarSplit> {
    let mut dates = dates.to_vec();
    dates.sort();
    dates.dedup();
    let weekdays: Vec<_> = dates.iter().copied().filter(|d| !is_weekend(*d)).collect();
    let weekends: Vec<_> = dates.iter().copied().filter(|d| is_weekend(*d)).collect();
    let (train, test) = match policy {
        SplitPolicy::FirstKTrain(k) => take_first(&dates, k, "first-k-train")?,
        SplitPolicy::WeekdaysOnly(k) => take_first(&weekdays, k, "weekdays-only")?,
        SplitPolicy::WeekendsOnly(k) => take_first(&weekends, k, "weekends-only")?,
        SplitPolicy::WeekdaysTrainWeekendsTest => {
            if weekdays.is_empty() || weekends.is_empty() {
                return Err(Error::Split(format!(
                    "weekdays-train-weekends-test needs both regimes: {} weekdays, {} weekend days",
                    weekdays.len(),
                    weekends.len()
                )));
            }
            (weekdays, weekends)
        }
        SplitPolicy::WeekendsTrainWeekdaysTest { train, test } => {
            if train == 0 || test == 0 || weekends.len() < train || weekdays.len() < test {
                return Err(Error::Split(format!(
                    "weekends-train-weekdays-test: requested {train} weekend / {test} weekdays, \
                     available {} weekend / {} weekdays",
                    weekends.len(),
                    weekdays.len()
                )));
            }
            (weekends[..train].to_vec(), weekdays[weekdays.len() - test..].to_vec())
        }
    };
    let mut split = CalendarSplit::new(train.into_iter().collect(), test.into_iter().collect())?;
    split.policy = Some(policy);
    Ok(split)
}

pub fn split_days(m: &IntensityMatrix, policy: SplitPolicy) -> Result<CalendarSplit> {
    split_dates(&m.dates(), policy)
}

/// Descriptor file: one `train YYYY-MM-DD` or `test YYYY-MM-DD` per line.
pub fn write_split<W: Write>(mut w: W, split: &CalendarSplit) -> std::io::Result<()> {
    writeln!(w, "# split {}", split.descriptor())?;
    for d in &split.train_days {
        writeln!(w, "train {d}")?;
    }
    for d in &split.test_days {
        writeln!(w, "test {d}")?;
    }
    Ok(())
}

pub fn read_split<R: BufRead>(r: R) -> Result<CalendarSplit> {
    let mut train = BTreeSet::new();
    let mut test = BTreeSet::new();
    let mut policy = None;
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<split>", e))?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# split ") {
            policy = rest.parse().ok();
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (role, date) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::Split(format!("line {}: expected `<role> <date>`", n + 1)))?;
        let date: NaiveDate = date
            .trim()
            .parse()
            .map_err(|_| Error::Split(format!("line {}: bad date {date:?}", n + 1)))?;
        match role {
            "train" => train.insert(date),
            "test" => test.insert(date),
            other => return Err(Error::Split(format!("line {}: unknown role {other:?}", n + 1))),
        };
    }
    let mut split = CalendarSplit::new(train, test)?;
    split.policy = policy;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn november_2019() -> Vec<NaiveDate> {
        (1..=30).map(|d| NaiveDate::from_ymd_opt(2019, 11, d).unwrap()).collect()
    }

    fn sizes(s: &CalendarSplit) -> (usize, usize) {
        (s.train_days.len(), s.test_days.len())
    }

    #[test]
    fn november_partition() {
        let s = split_dates(&november_2019(), SplitPolicy::WeekdaysTrainWeekendsTest).unwrap();
        assert_eq!(sizes(&s), (20, 10));
        assert!(s.test_days.iter().all(|d| is_weekend(*d)));
    }

    #[test]
    fn weekend_only_seven_three() {
        let s = split_dates(&november_2019(), SplitPolicy::WeekendsOnly(7)).unwrap();
        assert_eq!(sizes(&s), (7, 3));
    }

    #[test]
    fn cross_regime_takes_last_weekdays() {
        let s = split_dates(&november_2019(), SplitPolicy::WeekendsTrainWeekdaysTest { train: 7, test: 3 }).unwrap();
        assert_eq!(sizes(&s), (7, 3));
        let last: Vec<_> = s.test_days.iter().map(|d| d.to_string()).collect();
        assert_eq!(last, ["2019-11-26", "2019-11-27", "2019-11-28"]);
    }

    #[test]
    fn single_day_cannot_split() {
        let one = &november_2019()[..1];
        assert!(matches!(split_dates(one, SplitPolicy::FirstKTrain(1)), Err(Error::Split(_))));
    }

    #[test]
    fn policy_strings_round_trip() {
        for p in [
            SplitPolicy::FirstKTrain(20),
            SplitPolicy::WeekdaysOnly(14),
            SplitPolicy::WeekdaysTrainWeekendsTest,
            SplitPolicy::WeekendsTrainWeekdaysTest { train: 7, test: 3 },
            SplitPolicy::WeekendsOnly(7),
        ] {
            assert_eq!(p.to_string().parse::<SplitPolicy>().unwrap(), p);
        }
        assert!("weekdays-only".parse::<SplitPolicy>().is_err());
    }

    #[test]
    fn descriptor_file_round_trip() {
        let s = split_dates(&november_2019(), SplitPolicy::WeekdaysOnly(14)).unwrap();
        let mut buf = Vec::new();
        write_split(&mut buf, &s).unwrap();
        assert_eq!(read_split(buf.as_slice()).unwrap(), s);
    }
}
