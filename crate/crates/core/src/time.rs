//! Calendar helpers shared by plans, health aggregation and notifications.
//!
//! Plans and notification slots live in user-local wall-clock time
//! (`NaiveDateTime`); instants that cross the wire or the store are UTC.
//! Weeks start Monday 00:00 local.

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, TimeZone, Utc};
use chrono_tz::Tz;

pub const DAYS_PER_WEEK: i64 = 7;

/// Monday of the week containing `date`.
pub fn week_start_of(date: NaiveDate) -> NaiveDate {
    date - Duration::days(date.weekday().num_days_from_monday() as i64)
}

/// First day of the calendar month containing `date`.
pub fn month_start_of(date: NaiveDate) -> NaiveDate {
    date.with_day(1).expect("day 1 exists in every month")
}

/// First day of the following calendar month.
pub fn next_month_start(date: NaiveDate) -> NaiveDate {
    let start = month_start_of(date);
    if start.month() == 12 {
        NaiveDate::from_ymd_opt(start.year() + 1, 1, 1).expect("valid date")
    } else {
        NaiveDate::from_ymd_opt(start.year(), start.month() + 1, 1).expect("valid date")
    }
}

pub fn local_midnight(date: NaiveDate) -> NaiveDateTime {
    date.and_time(NaiveTime::MIN)
}

/// Converts a UTC instant to wall-clock time in `tz`.
pub fn to_local(instant: DateTime<Utc>, tz: Tz) -> NaiveDateTime {
    instant.with_timezone(&tz).naive_local()
}

/// Resolves local midnight of `date` in `tz` to a UTC instant.
///
/// A few zones skip midnight on DST days; the first valid instant after the gap is used.
pub fn start_of_local_day(date: NaiveDate, tz: Tz) -> DateTime<Utc> {
    let mut wall = local_midnight(date);
    // gaps are at most a couple of hours; step forward until the wall time exists
    for _ in 0..=24 * 4 {
        if let Some(t) = tz.from_local_datetime(&wall).earliest() {
            return t.with_timezone(&Utc);
        }
        wall += Duration::minutes(15);
    }
    Utc.from_utc_datetime(&local_midnight(date))
}
