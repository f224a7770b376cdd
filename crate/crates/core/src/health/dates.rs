use chrono::{DateTime, Duration, NaiveDate, Utc};
use chrono_tz::Tz;

use super::HealthError;
use crate::time::{month_start_of, to_local, week_start_of};

/// Resolves a tool-supplied reference date.
///
/// Relative phrases resolve against `now` in the user's timezone: `today`,
/// `yesterday`, `this week` / `last week` (the Monday starting that week),
/// `this month` / `last month` (the first of that month). ISO-8601 dates and
/// RFC 3339 timestamps are also accepted. Anything else is an error.
pub fn parse_reference_date(
    text: &str,
    now: DateTime<Utc>,
    tz: Tz,
) -> Result<NaiveDate, HealthError> {
    let today = to_local(now, tz).date();
    let phrase = text.trim().to_lowercase().replace(['_', '-'], " ");
    let phrase = phrase.split_whitespace().collect::<Vec<_>>().join(" ");
    let resolved = match phrase.as_str() {
        "today" | "now" => Some(today),
        "yesterday" => Some(today - Duration::days(1)),
        "this week" => Some(week_start_of(today)),
        "last week" | "previous week" => Some(week_start_of(today) - Duration::days(7)),
        "this month" => Some(month_start_of(today)),
        "last month" | "previous month" => {
            Some(month_start_of(month_start_of(today) - Duration::days(1)))
        }
        _ => None,
    };
    if let Some(date) = resolved {
        return Ok(date);
    }
    let raw = text.trim();
    if let Ok(date) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(date);
    }
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Ok(to_local(ts.with_timezone(&Utc), tz).date());
    }
    Err(HealthError::UnrecognizedDate(text.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    // 2025-05-10T14:00 local in Los Angeles
    fn now() -> DateTime<Utc> {
        "2025-05-10T21:00:00Z".parse().unwrap()
    }

    fn la() -> Tz {
        "America/Los_Angeles".parse().unwrap()
    }

    #[test]
    fn relative_phrases() {
        assert_eq!(
            parse_reference_date("today", now(), la()).unwrap(),
            d("2025-05-10")
        );
        assert_eq!(
            parse_reference_date("Yesterday", now(), la()).unwrap(),
            d("2025-05-09")
        );
        assert_eq!(
            parse_reference_date("this week", now(), la()).unwrap(),
            d("2025-05-05")
        );
        assert_eq!(
            parse_reference_date("last_week", now(), la()).unwrap(),
            d("2025-04-28")
        );
        assert_eq!(
            parse_reference_date("this month", now(), la()).unwrap(),
            d("2025-05-01")
        );
        assert_eq!(
            parse_reference_date("last month", now(), la()).unwrap(),
            d("2025-04-01")
        );
    }

    #[test]
    fn today_uses_user_local_calendar() {
        // 02:00 UTC on the 11th is still the 10th in Los Angeles
        let late = "2025-05-11T02:00:00Z".parse().unwrap();
        assert_eq!(
            parse_reference_date("today", late, la()).unwrap(),
            d("2025-05-10")
        );
        assert_eq!(
            parse_reference_date("today", late, Tz::UTC).unwrap(),
            d("2025-05-11")
        );
    }

    #[test]
    fn iso_dates() {
        assert_eq!(
            parse_reference_date("2025-05-01", now(), la()).unwrap(),
            d("2025-05-01")
        );
        assert_eq!(
            parse_reference_date("2025-05-01T03:00:00Z", now(), la()).unwrap(),
            d("2025-04-30")
        );
    }

    #[test]
    fn garbage_is_an_error() {
        assert_eq!(
            parse_reference_date("banana", now(), la()),
            Err(HealthError::UnrecognizedDate("banana".into()))
        );
        assert!(parse_reference_date("", now(), la()).is_err());
        assert!(parse_reference_date("2025-13-01", now(), la()).is_err());
    }

    #[test]
    fn last_month_across_new_year() {
        let jan = "2026-01-15T12:00:00Z".parse().unwrap();
        assert_eq!(
            parse_reference_date("last month", jan, Tz::UTC).unwrap(),
            d("2025-12-01")
        );
    }
}
