//! Piecewise-constant learning-rate schedules indexed by epoch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open epoch range `[start, end)` trained at `rate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Warm-up, tenfold boost, then stepwise decay.
    #[default]
    Convex,
    /// One constant rate for the whole run.
    Smooth,
}

pub const SMOOTH_RATE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Config("schedule has no segments".into()));
        }
        let mut expect = 0;
        for s in &segments {
            if s.start != expect || s.end <= s.start {
                return Err(Error::Config(format!(
                    "schedule segments must tile epochs contiguously from 0; bad segment [{}, {})",
                    s.start, s.end
                )));
            }
            if !(s.rate > 0.0) || !s.rate.is_finite() {
                return Err(Error::Config(format!("learning rate {} must be positive", s.rate)));
            }
            expect = s.end;
        }
        Ok(Self { segments })
    }

    /// `[0,20) 0.01, [20,60) 0.1, [60,80) 0.01, [80,110) 0.001, [110,120) 0.0001`.
    pub fn convex() -> Self {
        let rows = [(0, 20, 0.01), (20, 60, 0.1), (60, 80, 0.01), (80, 110, 0.001), (110, 120, 0.0001)];
        Self {
            segments: rows
                .iter()
                .map(|&(start, end, rate)| Segment { start, end, rate })
                .collect(),
        }
    }

    pub fn constant(rate: f64, epochs: usize) -> Result<Self> {
        Self::new(vec![Segment {
            start: 0,
            end: epochs.max(1),
            rate,
        }])
    }

    pub fn of_kind(kind: ScheduleKind, epochs: usize) -> Result<Self> {
        match kind {
            ScheduleKind::Convex => Ok(Self::convex().fit_to(epochs)),
            ScheduleKind::Smooth => Self::constant(SMOOTH_RATE, epochs),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// First epoch not covered by the schedule.
    pub fn epochs(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    /// Truncates to `[0, epochs)`, or extends the last segment to reach it.
    pub fn fit_to(&self, epochs: usize) -> Self {
        let epochs = epochs.max(1);
        let mut segments: Vec<Segment> = self.segments.iter().copied().filter(|s| s.start < epochs).collect();
        if let Some(last) = segments.last_mut() {
            last.end = epochs;
        }
        Self { segments }
    }
}

/// Rate of the segment containing `epoch`.
pub fn lr_at(schedule: &Schedule, epoch: usize) -> Result<f64> {
    schedule
        .segments
        .iter()
        .find(|s| s.start <= epoch && epoch < s.end)
        .map(|s| s.rate)
        .ok_or_else(|| Error::Domain(format!("epoch {epoch} outside schedule [0, {})", schedule.epochs())))
}
