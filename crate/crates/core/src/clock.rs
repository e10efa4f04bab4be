//! Calendar conventions shared by the pipeline: the daily capture window,
//! the base cadence, timestamp text formats and the weekend rule.

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike, Weekday};

use crate::error::{Error, Result};

/// Capture cadence of the raw frames, in seconds.
pub const BASE_CADENCE_SECS: u32 = 30;
/// Daily window start (06:00:00) as seconds since midnight.
pub const DAY_START_SECS: u32 = 6 * 3600;
/// Daily window end (23:59:59) as seconds since midnight, inclusive.
pub const DAY_END_SECS: u32 = 24 * 3600 - 1;
/// Length of the daily window in seconds (18 h).
pub const DAY_WINDOW_SECS: u32 = 18 * 3600;

const ISO_FMT: &str = "%Y-%m-%dT%H:%M:%S";
const FRAME_FMT: &str = "%Y%m%d_%H%M%S";

pub fn seconds_of_day(t: &NaiveDateTime) -> u32 {
    t.time().num_seconds_from_midnight()
}

/// Seconds elapsed since 06:00:00 on the same date, or `None` before it.
pub fn window_offset(t: &NaiveDateTime) -> Option<u32> {
    seconds_of_day(t).checked_sub(DAY_START_SECS)
}

pub fn in_day_window(t: &NaiveDateTime) -> bool {
    (DAY_START_SECS..=DAY_END_SECS).contains(&seconds_of_day(t))
}

/// Friday and Saturday.
pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Fri | Weekday::Sat)
}

pub fn format_iso(t: &NaiveDateTime) -> String {
    t.format(ISO_FMT).to_string()
}

pub fn parse_iso(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), ISO_FMT).map_err(|_| Error::Timestamp(s.to_owned()))
}

pub fn frame_file_name(t: &NaiveDateTime) -> String {
    format!("{}.png", t.format(FRAME_FMT))
}

/// Parses `YYYYMMDD_HHMMSS.png`.
pub fn parse_frame_file_name(name: &str) -> Result<NaiveDateTime> {
    let stem = name
        .strip_suffix(".png")
        .ok_or_else(|| Error::Timestamp(name.to_owned()))?;
    if stem.len() != 15 {
        return Err(Error::Timestamp(name.to_owned()));
    }
    NaiveDateTime::parse_from_str(stem, FRAME_FMT).map_err(|_| Error::Timestamp(name.to_owned()))
}

/// The base-cadence instants of one day's capture window.
pub fn day_instants(date: NaiveDate, cadence_secs: u32) -> Vec<NaiveDateTime> {
    assert!(cadence_secs > 0);
    (0..DAY_WINDOW_SECS)
        .step_by(cadence_secs as usize)
        .map(|off| {
            let secs = DAY_START_SECS + off;
            date.and_time(NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).unwrap())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_names_round_trip() {
        let t = NaiveDate::from_ymd_opt(2019, 11, 3)
            .unwrap()
            .and_hms_opt(6, 0, 30)
            .unwrap();
        let name = frame_file_name(&t);
        assert_eq!(name, "20191103_060030.png");
        assert_eq!(parse_frame_file_name(&name).unwrap(), t);
        assert!(parse_frame_file_name("20191103_0600.png").is_err());
        assert!(parse_frame_file_name("20191103_060030.jpg").is_err());
        assert!(parse_frame_file_name("20191399_060030.png").is_err());
    }

    #[test]
    fn full_day_has_2160_instants() {
        let d = NaiveDate::from_ymd_opt(2019, 11, 1).unwrap();
        let v = day_instants(d, BASE_CADENCE_SECS);
        assert_eq!(v.len(), 2160);
        assert_eq!(format_iso(&v[0]), "2019-11-01T06:00:00");
        assert_eq!(format_iso(v.last().unwrap()), "2019-11-01T23:59:30");
        assert!(v.iter().all(in_day_window));
    }

    #[test]
    fn weekend_is_friday_saturday() {
        // 2019-11-01 was a Friday
        let fri = NaiveDate::from_ymd_opt(2019, 11, 1).unwrap();
        assert!(is_weekend(fri));
        assert!(is_weekend(fri.succ_opt().unwrap()));
        assert!(!is_weekend(fri.succ_opt().unwrap().succ_opt().unwrap()));
    }
}
