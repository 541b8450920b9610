//! Injectable time source. Every time-dependent command reads the clock
//! through here so tests can pin it.

use std::time::{SystemTime, UNIX_EPOCH};

use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(u64),
}

impl Clock {
    pub fn now(self) -> u64 {
        match self {
            Clock::Fixed(t) => t,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// Accepts Unix seconds or an RFC 3339 timestamp.
pub fn parse_clock(s: &str) -> Result<Clock, String> {
    if let Ok(secs) = s.parse::<u64>() {
        return Ok(Clock::Fixed(secs));
    }
    let t = OffsetDateTime::parse(s, &Rfc3339).map_err(|e| format!("{s:?}: expected Unix seconds or RFC 3339 ({e})"))?;
    u64::try_from(t.unix_timestamp())
        .map(Clock::Fixed)
        .map_err(|_| format!("{s:?} is before 1970"))
}
