//! Routine recommendation from average on-frequency profiles.
//!
//! The profile holds, for each minute of the day, the fraction of study days
//! on which the room was on at that minute. Sorting the profile in descending
//! order gives an L-shaped usage curve; its elbow separates the habitual
//! high-usage minutes from the background. Minutes at or above the elbow
//! threshold are grouped into daily intervals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Room, StateSeries};
use crate::MINUTES_PER_DAY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutineError {
    #[error("degenerate profile: all {len} values equal")]
    DegenerateProfile { len: usize },
}

/// Average on-frequency per minute of day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub household: String,
    pub room: Room,
    pub values: Vec<f64>,
    pub day_count: usize,
}

pub fn frequency_profile(state: &StateSeries) -> FrequencyProfile {
    let days = state.day_count();
    let mut counts = vec![0u32; MINUTES_PER_DAY];
    for day in 0..days {
        for (minute, c) in counts.iter_mut().enumerate() {
            if state.is_on(day, minute) {
                *c += 1;
            }
        }
    }
    FrequencyProfile {
        household: state.household.clone(),
        room: state.room,
        values: counts
            .into_iter()
            .map(|c| f64::from(c) / days.max(1) as f64)
            .collect(),
        day_count: days,
    }
}

/// Result of elbow detection on a descending curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knee {
    /// Last value of the high regime; select with `value >= threshold`.
    pub threshold: f64,
    /// Elbow position in the descending-sorted curve: the first index of the
    /// low regime. Indices `0..knee_index` form the high regime.
    pub knee_index: usize,
    /// True when the curve has no elbow and the mean was used instead.
    pub fallback: bool,
}

/// Tolerance under which an elbow distance counts as zero.
const FLAT_EPS: f64 = 1e-12;

/// Perpendicular distances of each point below the chord joining the first and
/// last point, after min-max normalization of both axes.
///
/// The curve is taken as given (no sorting). Positive distances mean the point
/// lies below the chord, which is where the elbow of a convex decreasing curve
/// sits.
pub fn chord_distances(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let (x_min, x_max) = min_max(xs);
    let (y_min, y_max) = min_max(ys);
    let x_span = x_max - x_min;
    let y_span = y_max - y_min;
    if x_span <= 0.0 || y_span <= 0.0 {
        return vec![0.0; n];
    }
    let norm = |i: usize| ((xs[i] - x_min) / x_span, (ys[i] - y_min) / y_span);
    let (x0, y0) = norm(0);
    let (x1, y1) = norm(n - 1);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len = (dx * dx + dy * dy).sqrt();
    (0..n)
        .map(|i| {
            let (x, y) = norm(i);
            // Signed distance, positive below the chord for a decreasing curve.
            (dy * (x - x0) - dx * (y - y0)) / len * dx.signum()
        })
        .collect()
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Index of the elbow of `(xs, ys)`: the first point of maximal distance below
/// the chord. `None` when no point lies below the chord.
pub fn elbow_index(xs: &[f64], ys: &[f64]) -> Option<usize> {
    let d = chord_distances(xs, ys);
    let best = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(best > FLAT_EPS) {
        return None;
    }
    d.iter().position(|&v| v >= best - FLAT_EPS)
}

/// Elbow threshold of a set of values.
///
/// Values are sorted descending and indexed `0..n`. The elbow is the first
/// index of maximum distance below the normalized chord. The threshold is the
/// value just before the elbow, so `>= threshold` selects exactly the high
/// regime. A curve without an elbow (collinear or concave) falls back to the
/// mean of the values.
pub fn knee_threshold(values: &[f64]) -> Result<Knee, RoutineError> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    if n == 0 || sorted[0] == sorted[n - 1] {
        return Err(RoutineError::DegenerateProfile { len: n });
    }
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    match elbow_index(&xs, &sorted) {
        Some(elbow) => Ok(Knee {
            threshold: sorted[elbow - 1],
            knee_index: elbow,
            fallback: false,
        }),
        None => {
            let mean = sorted.iter().sum::<f64>() / n as f64;
            Ok(Knee {
                threshold: mean,
                knee_index: sorted.iter().take_while(|&&v| v >= mean).count(),
                fallback: true,
            })
        }
    }
}

/// How a plan's threshold was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Elbow,
    /// Collinear usage curve; threshold is the profile mean.
    MeanFallback,
    /// Flat profile; no routine.
    NoRoutine,
}

/// Recommended daily intervals, half-open `[start, end)` in minutes of day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutinePlan {
    pub household: String,
    pub room: Room,
    pub threshold: f64,
    pub intervals: Vec<(u32, u32)>,
    pub status: PlanStatus,
}

impl RoutinePlan {
    pub fn selected_minutes(&self) -> u32 {
        self.intervals.iter().map(|(s, e)| e - s).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutineParams {
    /// Runs separated by at most this many unselected minutes are merged.
    pub merge_gap: u32,
    /// Intervals shorter than this are dropped.
    pub min_len: u32,
}

impl Default for RoutineParams {
    fn default() -> Self {
        Self {
            merge_gap: 15,
            min_len: 10,
        }
    }
}

/// Group minutes with `value >= threshold` into merged, length-filtered intervals.
pub fn routine_intervals(values: &[f64], threshold: f64, params: RoutineParams) -> Vec<(u32, u32)> {
    let mut runs: Vec<(u32, u32)> = Vec::new();
    for (minute, &v) in values.iter().enumerate() {
        if v < threshold {
            continue;
        }
        let m = minute as u32;
        match runs.last_mut() {
            Some((_, end)) if *end == m => *end = m + 1,
            _ => runs.push((m, m + 1)),
        }
    }
    let mut merged: Vec<(u32, u32)> = Vec::with_capacity(runs.len());
    for (start, end) in runs {
        match merged.last_mut() {
            Some((_, prev_end)) if start - *prev_end <= params.merge_gap => *prev_end = end,
            _ => merged.push((start, end)),
        }
    }
    merged.retain(|(s, e)| e - s >= params.min_len);
    merged
}

/// Profile → elbow threshold → intervals.
pub fn plan_from_profile(profile: &FrequencyProfile, params: RoutineParams) -> RoutinePlan {
    let (threshold, status) = match knee_threshold(&profile.values) {
        Ok(k) if k.fallback => (k.threshold, PlanStatus::MeanFallback),
        Ok(k) => (k.threshold, PlanStatus::Elbow),
        Err(RoutineError::DegenerateProfile { .. }) => {
            return RoutinePlan {
                household: profile.household.clone(),
                room: profile.room,
                threshold: profile.values.first().copied().unwrap_or(0.0),
                intervals: Vec::new(),
                status: PlanStatus::NoRoutine,
            }
        }
    };
    RoutinePlan {
        household: profile.household.clone(),
        room: profile.room,
        threshold,
        intervals: routine_intervals(&profile.values, threshold, params),
        status,
    }
}

pub fn recommend_routine(state: &StateSeries, params: RoutineParams) -> RoutinePlan {
    plan_from_profile(&frequency_profile(state), params)
}

/// `HH:MM` rendering of a minute of day; 1440 renders as `24:00`.
pub fn hhmm(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}
