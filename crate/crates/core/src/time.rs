//! Calendar months for monthly aggregation.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const MS_PER_DAY: i64 = 86_400_000;

/// A calendar month, serialized as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthKey {
    year: i32,
    month: u8,
}

impl MonthKey {
    pub fn new(year: i32, month: u8) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    /// Month containing the given UTC epoch-millisecond timestamp.
    pub fn from_epoch_ms(ms: i64) -> Self {
        let (year, month, _) = civil_from_days(ms.div_euclid(MS_PER_DAY));
        Self { year, month }
    }

    /// First millisecond of the month (UTC).
    pub fn start_ms(&self) -> i64 {
        days_from_civil(self.year, self.month, 1) * MS_PER_DAY
    }

    pub fn next(&self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    pub fn days(&self) -> i64 {
        self.next().start_ms() / MS_PER_DAY - self.start_ms() / MS_PER_DAY
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("expected YYYY-MM, got {s:?}"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        MonthKey::new(year, month).ok_or_else(|| format!("month out of range in {s:?}"))
    }
}

impl Serialize for MonthKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// Howard Hinnant's civil calendar algorithms.
fn days_from_civil(year: i32, month: u8, day: u8) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = i64::from(month);
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(days: i64) -> (i32, u8, u8) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
    let year = yoe + era * 400 + i64::from(month <= 2);
    (year as i32, month, day)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn known_timestamps() {
        // 2018-04-01T00:00:00Z
        assert_eq!(
            MonthKey::from_epoch_ms(1_522_540_800_000).to_string(),
            "2018-04"
        );
        assert_eq!(
            MonthKey::from_epoch_ms(1_522_540_799_999).to_string(),
            "2018-03"
        );
        assert_eq!(MonthKey::from_epoch_ms(0).to_string(), "1970-01");
        assert_eq!(
            MonthKey::new(2018, 4).unwrap().start_ms(),
            1_522_540_800_000
        );
    }

    #[test]
    fn month_arithmetic() {
        let dec = MonthKey::new(2017, 12).unwrap();
        assert_eq!(dec.next(), MonthKey::new(2018, 1).unwrap());
        assert_eq!(MonthKey::new(2016, 2).unwrap().days(), 29);
        assert_eq!(MonthKey::new(2017, 2).unwrap().days(), 28);
        assert!(MonthKey::new(2017, 13).is_none());
    }

    #[test]
    fn round_trips_every_day() {
        for day in -800_000i64..800_000 {
            let (y, m, d) = civil_from_days(day);
            assert_eq!(days_from_civil(y, m, d), day);
        }
    }

    #[test]
    fn serde_as_string() {
        let m: MonthKey = serde_json::from_str("\"2017-05\"").unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), "\"2017-05\"");
        assert!("2017-00".parse::<MonthKey>().is_err());
    }
}
