use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, NaiveDateTime};

use crate::clock::seconds_of_day;
use crate::error::{Error, Result};

/// Time-of-day slot in seconds since midnight.
pub type Slot = u32;

/// Means of training intensities by (weekday, time of day), with a
/// time-of-day fallback and a global mean.
#[derive(Debug, Clone, PartialEq)]
pub struct HaModel {
    /// Keyed by (days since Monday, slot); only present when at least two
    /// distinct training dates share the weekday.
    pub slot_means: BTreeMap<(u8, Slot), f64>,
    pub fallback_means: BTreeMap<Slot, f64>,
    pub global_mean: f64,
}

#[derive(Default)]
struct Acc {
    sum: f64,
    n: usize,
    dates: BTreeSet<NaiveDate>,
}

impl Acc {
    fn add(&mut self, date: NaiveDate, v: f64) {
        self.sum += v;
        self.n += 1;
        self.dates.insert(date);
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

pub fn ha_fit<I>(observations: I) -> Result<HaModel>
where
    I: IntoIterator<Item = (NaiveDateTime, f64)>,
{
    let mut by_weekday: BTreeMap<(u8, Slot), Acc> = BTreeMap::new();
    let mut by_slot: BTreeMap<Slot, Acc> = BTreeMap::new();
    let mut total = 0.0;
    let mut n = 0usize;
    for (t, v) in observations {
        let slot = seconds_of_day(&t);
        let wd = t.weekday().num_days_from_monday() as u8;
        by_weekday.entry((wd, slot)).or_default().add(t.date(), v);
        by_slot.entry(slot).or_default().add(t.date(), v);
        total += v;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData("historical average needs at least one training observation".into()));
    }
    Ok(HaModel {
        slot_means: by_weekday
            .into_iter()
            .filter(|(_, a)| a.dates.len() >= 2)
            .map(|(k, a)| (k, a.mean()))
            .collect(),
        fallback_means: by_slot.into_iter().map(|(k, a)| (k, a.mean())).collect(),
        global_mean: total / n as f64,
    })
}

impl HaModel {
    /// Same-weekday slot mean, else the slot mean over all days, else the
    /// global mean.
    pub fn predict(&self, target: NaiveDateTime) -> f64 {
        let slot = seconds_of_day(&target);
        let wd = target.weekday().num_days_from_monday() as u8;
        self.slot_means
            .get(&(wd, slot))
            .or_else(|| self.fallback_means.get(&slot))
            .copied()
            .unwrap_or(self.global_mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(y: i32, m: u32, d: u32, h: u32, min: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, min, 0).unwrap()
    }

    #[test]
    fn two_mondays_average() {
        // 2019-11-04 and 2019-11-11 are Mondays
        let model = ha_fit([(at(2019, 11, 4, 9, 0), 10.0), (at(2019, 11, 11, 9, 0), 20.0)]).unwrap();
        assert_eq!(model.slot_means[&(0, 9 * 3600)], 15.0);
        assert_eq!(model.predict(at(2019, 11, 18, 9, 0)), 15.0);
    }

    #[test]
    fn constant_series() {
        let obs = (4..=10).flat_map(|d| (6..23).map(move |h| (at(2019, 11, d, h, 0), 3.5)));
        let model = ha_fit(obs).unwrap();
        assert!(model.slot_means.values().all(|&v| v == 3.5));
        assert!(model.fallback_means.values().all(|&v| v == 3.5));
        assert_eq!(model.global_mean, 3.5);
    }

    #[test]
    fn weekday_query_against_weekend_model_uses_time_of_day_fallback() {
        // Fridays 1, 8 and Saturdays 2, 9
        let obs = [
            (at(2019, 11, 1, 8, 0), 10.0),
            (at(2019, 11, 8, 8, 0), 20.0),
            (at(2019, 11, 2, 8, 0), 30.0),
            (at(2019, 11, 9, 8, 0), 40.0),
        ];
        let model = ha_fit(obs).unwrap();
        // Tuesday 8:00 has no weekday slot: mean over all four days
        assert_eq!(model.predict(at(2019, 11, 5, 8, 0)), 25.0);
        assert_eq!(model.predict(at(2019, 11, 15, 8, 0)), 15.0);
    }

    #[test]
    fn unseen_time_of_day_uses_global_mean() {
        let model = ha_fit([(at(2019, 11, 4, 9, 0), 10.0), (at(2019, 11, 4, 10, 0), 30.0)]).unwrap();
        assert_eq!(model.predict(at(2019, 11, 4, 11, 0)), 20.0);
    }

    #[test]
    fn single_matching_day_is_not_a_weekday_slot() {
        let model = ha_fit([(at(2019, 11, 4, 9, 0), 10.0), (at(2019, 11, 5, 9, 0), 30.0)]).unwrap();
        assert!(model.slot_means.is_empty());
        assert_eq!(model.predict(at(2019, 11, 11, 9, 0)), 20.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(ha_fit(std::iter::empty()).is_err());
    }
}
