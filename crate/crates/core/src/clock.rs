//! Time and identifier sources, swappable for deterministic runs.

use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, TimeDelta, Utc};
use uuid::Uuid;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Advances by a fixed step on every reading.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    step: TimeDelta,
    ticks: AtomicU64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step: TimeDelta) -> Self {
        Self {
            start,
            step,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Default for SteppingClock {
    /// Starts at 2024-01-01T00:00:00Z and ticks one second per reading.
    fn default() -> Self {
        let start = DateTime::from_timestamp(1_704_067_200, 0).expect("valid timestamp");
        Self::new(start, TimeDelta::seconds(1))
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.start + self.step * i32::try_from(n).unwrap_or(i32::MAX)
    }
}

pub trait IdSource: Send + Sync {
    fn next_id(&self) -> Uuid;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_id(&self) -> Uuid {
        Uuid::new_v4()
    }
}

/// Ids 1, 2, 3, ... rendered as UUIDs.
#[derive(Debug, Default)]
pub struct SequentialIds {
    next: AtomicU64,
}

impl IdSource for SequentialIds {
    fn next_id(&self) -> Uuid {
        Uuid::from_u128(u128::from(self.next.fetch_add(1, Ordering::SeqCst)) + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepping_clock_and_sequential_ids() {
        let clock = SteppingClock::default();
        let a = clock.now();
        let b = clock.now();
        assert_eq!(b - a, TimeDelta::seconds(1));
        assert_eq!(a.to_rfc3339(), "2024-01-01T00:00:00+00:00");

        let ids = SequentialIds::default();
        assert_eq!(ids.next_id().to_string(), "00000000-0000-0000-0000-000000000001");
        assert_ne!(ids.next_id(), ids.next_id());
        assert_ne!(RandomIds.next_id(), RandomIds.next_id());
    }
}
