//! Hub log parsing and minute-resolution state reconstruction.
//!
//! Hub logs record *orders* sent to individual light bulbs, not the state of a
//! room. [`reconstruct_state`] replays those orders per light and rasterizes
//! the result into a day × minute on/off grid per (household, room), together
//! with the scene active at each minute.
//!
//! Replay rules:
//!
//! * a light's on-state starts at an `on` or `scene` order and ends at its
//!   `off` order; an `off` for a light that is already off is a no-op;
//! * a `scene` order on an off light switches it on;
//! * a light that receives no order for [`STALE_ON_CAP_SECS`] after its last
//!   order is force-closed at that cap;
//! * a room is on at minute `t` iff some light of the room is on at any instant
//!   inside `t`;
//! * the room's scene at minute `t` is the scene of the most recent `scene`
//!   order among the lights that are on during `t`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{DEFAULT_SCENE_COUNT, MINUTES_PER_DAY};

/// Scene-grid sentinel for "no scene active".
pub const NO_SCENE: i8 = -1;

/// A light left on this long after its last order is switched off.
pub const STALE_ON_CAP_SECS: i64 = 24 * 3600;

const WORDS_PER_DAY: usize = MINUTES_PER_DAY.div_ceil(64);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("unknown room type {0:?}")]
    UnknownRoom(String),
    #[error("empty study window {first} .. {last}")]
    EmptyWindow { first: NaiveDate, last: NaiveDate },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Room {
    Room1,
    Room2,
}

impl Room {
    pub const ALL: [Room; 2] = [Room::Room1, Room::Room2];

    pub fn as_str(self) -> &'static str {
        match self {
            Room::Room1 => "room1",
            Room::Room2 => "room2",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Room::Room1 => 0,
            Room::Room2 => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Room> {
        match s {
            "room1" => Some(Room::Room1),
            "room2" => Some(Room::Room2),
            _ => None,
        }
    }
}

impl fmt::Display for Room {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Off,
    On,
    SceneSet,
}

impl Action {
    fn wire(self) -> &'static str {
        match self {
            Action::On => "on",
            Action::Off => "off",
            Action::SceneSet => "scene",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    App,
    Button,
    Switch,
    Other,
}

impl Source {
    fn parse(s: Option<&str>) -> Source {
        match s {
            Some("app") => Source::App,
            Some("button") => Source::Button,
            Some("switch") => Source::Switch,
            _ => Source::Other,
        }
    }

    fn wire(self) -> &'static str {
        match self {
            Source::App => "app",
            Source::Button => "button",
            Source::Switch => "switch",
            Source::Other => "other",
        }
    }
}

/// Color attributes carried through from the log. The pipeline does not use them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColorAttrs {
    pub brightness: Option<f64>,
    pub saturation: Option<f64>,
    pub color_x: Option<f64>,
    pub color_y: Option<f64>,
    pub color_temp: Option<f64>,
    pub color_mode: Option<String>,
}

/// One parsed log record: an order targeting a single light.
#[derive(Clone, Debug, PartialEq)]
pub struct LightEvent {
    /// Wall-clock time as logged, second resolution. No timezone conversion.
    pub timestamp: NaiveDateTime,
    pub hub_id: String,
    pub light_id: String,
    pub room: Room,
    pub action: Action,
    /// Present iff `action == Action::SceneSet`.
    pub scene_id: Option<u8>,
    pub source: Source,
    pub city: String,
    pub country: String,
    pub color: ColorAttrs,
}

impl LightEvent {
    /// Total order used before replay. Sorting by this key makes
    /// reconstruction independent of the input order, including ties.
    fn sort_key(&self) -> (NaiveDateTime, &str, Room, &str, Action, Option<u8>) {
        (
            self.timestamp,
            &self.hub_id,
            self.room,
            &self.light_id,
            self.action,
            self.scene_id,
        )
    }

    pub fn entity(&self) -> EntityKey {
        EntityKey {
            household: self.hub_id.clone(),
            room: self.room,
        }
    }

    /// Serialize as one NDJSON line (without the trailing newline).
    pub fn to_ndjson(&self) -> String {
        let wire = WireRecordOut {
            ts: self.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            hub: &self.hub_id,
            light: &self.light_id,
            room: self.room.as_str(),
            action: self.action.wire(),
            scene: self.scene_id,
            source: self.source.wire(),
            city: &self.city,
            country: &self.country,
            bri: self.color.brightness,
            sat: self.color.saturation,
            x: self.color.color_x,
            y: self.color.color_y,
            ct: self.color.color_temp,
            colormode: self.color.color_mode.as_deref(),
        };
        serde_json::to_string(&wire).expect("event serialization cannot fail")
    }
}

pub fn sort_events(events: &mut [LightEvent]) {
    events.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Serialize)]
struct WireRecordOut<'a> {
    ts: String,
    hub: &'a str,
    light: &'a str,
    room: &'a str,
    action: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<u8>,
    source: &'a str,
    city: &'a str,
    country: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    bri: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    colormode: Option<&'a str>,
}

#[derive(Deserialize)]
struct WireRecordIn {
    ts: Option<String>,
    hub: Option<String>,
    light: Option<String>,
    room: Option<String>,
    action: Option<String>,
    scene: Option<serde_json::Value>,
    source: Option<String>,
    city: Option<String>,
    country: Option<String>,
    bri: Option<f64>,
    sat: Option<f64>,
    x: Option<f64>,
    y: Option<f64>,
    ct: Option<f64>,
    colormode: Option<serde_json::Value>,
}

/// Parses NDJSON event records; scene ids must be below `scene_count`.
#[derive(Clone, Copy, Debug)]
pub struct EventParser {
    pub scene_count: u8,
}

impl Default for EventParser {
    fn default() -> Self {
        Self {
            scene_count: DEFAULT_SCENE_COUNT,
        }
    }
}

fn required(field: Option<String>, name: &str) -> Result<String, IngestError> {
    field.ok_or_else(|| IngestError::MalformedRecord(format!("missing field `{name}`")))
}

fn parse_timestamp(ts: &str) -> Result<NaiveDateTime, IngestError> {
    let parsed = DateTime::parse_from_rfc3339(ts)
        .map(|dt| dt.naive_local())
        .or_else(|_| NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M:%S"))
        .map_err(|_| IngestError::MalformedRecord(format!("unparsable timestamp {ts:?}")))?;
    Ok(parsed.with_nanosecond(0).unwrap_or(parsed))
}

impl EventParser {
    pub fn new(scene_count: u8) -> Self {
        Self { scene_count }
    }

    pub fn parse(&self, line: &str) -> Result<LightEvent, IngestError> {
        let raw: WireRecordIn = serde_json::from_str(line)
            .map_err(|e| IngestError::MalformedRecord(format!("bad json: {e}")))?;
        let timestamp = parse_timestamp(&required(raw.ts, "ts")?)?;
        let hub_id = required(raw.hub, "hub")?;
        let light_id = required(raw.light, "light")?;
        let room_raw = required(raw.room, "room")?;
        let action_raw = required(raw.action, "action")?;
        let city = required(raw.city, "city")?;
        let country = required(raw.country, "country")?;
        let action = match action_raw.as_str() {
            "on" => Action::On,
            "off" => Action::Off,
            "scene" => Action::SceneSet,
            other => {
                return Err(IngestError::MalformedRecord(format!(
                    "unknown action {other:?}"
                )))
            }
        };
        let scene_id = match action {
            Action::SceneSet => {
                let scene = raw
                    .scene
                    .as_ref()
                    .and_then(serde_json::Value::as_u64)
                    .ok_or_else(|| {
                        IngestError::MalformedRecord("scene order without integer `scene`".into())
                    })?;
                if scene >= u64::from(self.scene_count) {
                    return Err(IngestError::MalformedRecord(format!(
                        "scene {scene} outside 0..{}",
                        self.scene_count
                    )));
                }
                Some(scene as u8)
            }
            _ => None,
        };
        let room = Room::parse(&room_raw).ok_or(IngestError::UnknownRoom(room_raw))?;
        let color_mode = raw.colormode.map(|v| match v {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        });
        Ok(LightEvent {
            timestamp,
            hub_id,
            light_id,
            room,
            action,
            scene_id,
            source: Source::parse(raw.source.as_deref()),
            city,
            country,
            color: ColorAttrs {
                brightness: raw.bri,
                saturation: raw.sat,
                color_x: raw.x,
                color_y: raw.y,
                color_temp: raw.ct,
                color_mode,
            },
        })
    }
}

/// Parse one NDJSON record with the default scene count.
pub fn parse_event_record(line: &str) -> Result<LightEvent, IngestError> {
    EventParser::default().parse(line)
}

/// Inclusive calendar-date range of the study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub first: NaiveDate,
    pub last: NaiveDate,
}

impl StudyWindow {
    pub fn new(first: NaiveDate, last: NaiveDate) -> Result<Self, IngestError> {
        if last < first {
            return Err(IngestError::EmptyWindow { first, last });
        }
        Ok(Self { first, last })
    }

    /// The calendar year `year`, 1 January to 31 December.
    pub fn calendar_year(year: i32) -> Self {
        Self {
            first: NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year"),
            last: NaiveDate::from_ymd_opt(year, 12, 31).expect("valid year"),
        }
    }

    pub fn day_count(&self) -> usize {
        ((self.last - self.first).num_days() + 1).max(0) as usize
    }

    pub fn days(&self) -> Vec<NaiveDate> {
        self.first.iter_days().take(self.day_count()).collect()
    }

    fn start(&self) -> NaiveDateTime {
        self.first.and_hms_opt(0, 0, 0).expect("midnight")
    }

    /// Seconds since the window's first midnight, or `None` outside the window.
    pub fn offset_secs(&self, ts: NaiveDateTime) -> Option<i64> {
        let secs = (ts - self.start()).num_seconds();
        (secs >= 0 && secs < self.len_secs()).then_some(secs)
    }

    pub fn len_secs(&self) -> i64 {
        self.day_count() as i64 * 86_400
    }

    pub fn contains(&self, ts: NaiveDateTime) -> bool {
        self.offset_secs(ts).is_some()
    }

    pub fn at(&self, day: usize, second_of_day: i64) -> NaiveDateTime {
        self.start() + Duration::days(day as i64) + Duration::seconds(second_of_day)
    }
}

/// A (household, room) pair, the unit of routine and clustering analysis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityKey {
    pub household: String,
    pub room: Room,
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.household, self.room)
    }
}

/// Day × minute on/off grid and scene grid for one (household, room).
#[derive(Clone, Debug, PartialEq)]
pub struct StateSeries {
    pub household: String,
    pub room: Room,
    pub days: Vec<NaiveDate>,
    grid: Vec<u64>,
    scene_grid: Vec<i8>,
}

/// A maximal run of on-minutes sharing one scene value, in absolute minutes
/// from the first day's midnight. This is the persisted form of a
/// [`StateSeries`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRun {
    pub start: u32,
    pub len: u32,
    pub scene: i8,
}

impl StateSeries {
    pub fn empty(household: impl Into<String>, room: Room, days: Vec<NaiveDate>) -> Self {
        let n = days.len();
        Self {
            household: household.into(),
            room,
            days,
            grid: vec![0; n * WORDS_PER_DAY],
            scene_grid: vec![NO_SCENE; n * MINUTES_PER_DAY],
        }
    }

    pub fn key(&self) -> EntityKey {
        EntityKey {
            household: self.household.clone(),
            room: self.room,
        }
    }

    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    pub fn is_on(&self, day: usize, minute: usize) -> bool {
        let word = self.grid[day * WORDS_PER_DAY + minute / 64];
        word >> (minute % 64) & 1 == 1
    }

    /// Scene id active at (day, minute), or `None`.
    pub fn scene(&self, day: usize, minute: usize) -> Option<u8> {
        let s = self.scene_grid[day * MINUTES_PER_DAY + minute];
        (s != NO_SCENE).then_some(s as u8)
    }

    /// Raw scene grid value, [`NO_SCENE`] when none.
    pub fn scene_raw(&self, day: usize, minute: usize) -> i8 {
        self.scene_grid[day * MINUTES_PER_DAY + minute]
    }

    fn set_on(&mut self, abs_minute: usize) {
        let (day, minute) = (abs_minute / MINUTES_PER_DAY, abs_minute % MINUTES_PER_DAY);
        self.grid[day * WORDS_PER_DAY + minute / 64] |= 1 << (minute % 64);
    }

    fn set_scene(&mut self, abs_minute: usize, scene: i8) {
        self.scene_grid[abs_minute] = scene;
    }

    /// Number of on-minutes on `day` in clock hour `hour`.
    pub fn on_minutes_in_hour(&self, day: usize, hour: usize) -> u32 {
        (hour * 60..hour * 60 + 60)
            .filter(|&m| self.is_on(day, m))
            .count() as u32
    }

    pub fn total_on_minutes(&self) -> u64 {
        self.grid.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Run-length encoding of the on-minutes and their scenes.
    pub fn runs(&self) -> Vec<StateRun> {
        let total = self.days.len() * MINUTES_PER_DAY;
        let mut runs: Vec<StateRun> = Vec::new();
        for abs in 0..total {
            let (day, minute) = (abs / MINUTES_PER_DAY, abs % MINUTES_PER_DAY);
            if !self.is_on(day, minute) {
                continue;
            }
            let scene = self.scene_grid[abs];
            match runs.last_mut() {
                Some(r) if (r.start + r.len) as usize == abs && r.scene == scene => r.len += 1,
                _ => runs.push(StateRun {
                    start: abs as u32,
                    len: 1,
                    scene,
                }),
            }
        }
        runs
    }

    /// Inverse of [`StateSeries::runs`].
    pub fn from_runs(
        household: impl Into<String>,
        room: Room,
        days: Vec<NaiveDate>,
        runs: &[StateRun],
    ) -> Result<Self, IngestError> {
        let mut state = Self::empty(household, room, days);
        let total = state.days.len() * MINUTES_PER_DAY;
        for run in runs {
            let end = run.start as usize + run.len as usize;
            if end > total {
                return Err(IngestError::MalformedRecord(format!(
                    "state run ending at minute {end} exceeds {total} minutes"
                )));
            }
            for abs in run.start as usize..end {
                state.set_on(abs);
                state.set_scene(abs, run.scene);
            }
        }
        Ok(state)
    }
}

/// Per-light on-segment produced by replay, in seconds from window start.
#[derive(Clone, Copy, Debug)]
struct Segment {
    start: i64,
    end: i64,
    /// (scene, rank of the scene order within the entity's sorted events)
    scene: Option<(u8, usize)>,
}

#[derive(Default)]
struct LightReplay {
    on_since: Option<i64>,
    scene: Option<(u8, usize)>,
    last_order: i64,
}

impl LightReplay {
    fn close(&mut self, at: i64, out: &mut Vec<Segment>) {
        if let Some(start) = self.on_since.take() {
            if at > start {
                out.push(Segment {
                    start,
                    end: at,
                    scene: self.scene,
                });
            }
        }
        self.scene = None;
    }

    fn expire_if_stale(&mut self, now: i64, out: &mut Vec<Segment>) {
        if self.on_since.is_some() && now > self.last_order + STALE_ON_CAP_SECS {
            self.close(self.last_order + STALE_ON_CAP_SECS, out);
        }
    }
}

/// Replay the sorted, in-window events of one entity into light segments.
fn replay(events: &[&LightEvent], window: &StudyWindow) -> Vec<Segment> {
    let mut lights: BTreeMap<&str, LightReplay> = BTreeMap::new();
    let mut segments = Vec::new();
    for (rank, ev) in events.iter().enumerate() {
        let Some(t) = window.offset_secs(ev.timestamp) else {
            continue;
        };
        let light = lights.entry(ev.light_id.as_str()).or_default();
        light.expire_if_stale(t, &mut segments);
        match ev.action {
            Action::On => {
                if light.on_since.is_none() {
                    light.on_since = Some(t);
                    light.scene = None;
                }
            }
            Action::SceneSet => {
                let scene = ev.scene_id.map(|s| (s, rank));
                if light.on_since.is_some() {
                    light.close(t, &mut segments);
                }
                light.on_since = Some(t);
                light.scene = scene;
            }
            Action::Off => light.close(t, &mut segments),
        }
        light.last_order = t;
    }
    let end = window.len_secs();
    for light in lights.values_mut() {
        let close_at = (light.last_order + STALE_ON_CAP_SECS).min(end);
        light.close(close_at, &mut segments);
    }
    segments
}

fn rasterize(key: &EntityKey, days: Vec<NaiveDate>, mut segments: Vec<Segment>) -> StateSeries {
    let mut state = StateSeries::empty(key.household.clone(), key.room, days);
    for seg in &segments {
        for abs in (seg.start / 60)..=((seg.end - 1) / 60) {
            state.set_on(abs as usize);
        }
    }
    // Paint scenes oldest order first so the latest order wins per minute.
    segments.retain(|s| s.scene.is_some());
    segments.sort_by_key(|s| s.scene.map(|(_, rank)| rank));
    for seg in &segments {
        let (scene, _) = seg.scene.expect("retained scene segments");
        for abs in (seg.start / 60)..=((seg.end - 1) / 60) {
            state.set_scene(abs as usize, scene as i8);
        }
    }
    state
}

/// Reconstruct one entity from its events (any order).
pub fn reconstruct_entity(
    key: &EntityKey,
    events: &[&LightEvent],
    window: &StudyWindow,
) -> StateSeries {
    let mut sorted: Vec<&LightEvent> = events.to_vec();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let segments = replay(&sorted, window);
    rasterize(key, window.days(), segments)
}

/// Group events by (household, room).
pub fn group_by_entity(events: &[LightEvent]) -> BTreeMap<EntityKey, Vec<&LightEvent>> {
    let mut groups: BTreeMap<EntityKey, Vec<&LightEvent>> = BTreeMap::new();
    for ev in events {
        groups.entry(ev.entity()).or_default().push(ev);
    }
    groups
}

/// Reconstruct the state series of every (household, room) present in `events`.
pub fn reconstruct_state(
    events: &[LightEvent],
    window: &StudyWindow,
) -> Result<BTreeMap<EntityKey, StateSeries>, IngestError> {
    StudyWindow::new(window.first, window.last)?;
    let groups: Vec<(EntityKey, Vec<&LightEvent>)> = group_by_entity(events).into_iter().collect();
    let states: Vec<StateSeries> = groups
        .par_iter()
        .map(|(key, evs)| reconstruct_entity(key, evs, window))
        .collect();
    Ok(groups.into_iter().map(|(k, _)| k).zip(states).collect())
}

/// Counts describing one ingested log.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub total: usize,
    pub parsed: usize,
    pub skipped: usize,
    pub skipped_malformed: usize,
    pub skipped_unknown_room: usize,
    /// Parsed records whose timestamp falls outside the study window.
    pub outside_window: usize,
    pub households: usize,
    pub rooms: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
}

/// Parse every non-blank line, returning the parsed events and the report.
pub fn validate_log<S: AsRef<str> + Sync>(
    lines: &[S],
    parser: &EventParser,
    window: Option<&StudyWindow>,
) -> (Vec<LightEvent>, IngestReport) {
    let results: Vec<Option<Result<LightEvent, IngestError>>> = lines
        .par_iter()
        .map(|line| {
            let line = line.as_ref().trim();
            (!line.is_empty()).then(|| parser.parse(line))
        })
        .collect();
    let mut report = IngestReport::default();
    let mut events = Vec::with_capacity(results.len());
    for result in results.into_iter().flatten() {
        report.total += 1;
        match result {
            Ok(ev) => events.push(ev),
            Err(IngestError::UnknownRoom(_)) => report.skipped_unknown_room += 1,
            Err(_) => report.skipped_malformed += 1,
        }
    }
    report.parsed = events.len();
    report.skipped = report.skipped_malformed + report.skipped_unknown_room;
    let households: BTreeSet<&str> = events.iter().map(|e| e.hub_id.as_str()).collect();
    let rooms: BTreeSet<(&str, Room)> = events
        .iter()
        .map(|e| (e.hub_id.as_str(), e.room))
        .collect();
    report.households = households.len();
    report.rooms = rooms.len();
    report.first_date = events.iter().map(|e| e.timestamp.date()).min();
    report.last_date = events.iter().map(|e| e.timestamp.date()).max();
    if let Some(w) = window {
        report.outside_window = events.iter().filter(|e| !w.contains(e.timestamp)).count();
    }
    (events, report)
}

/// Household geography, taken from the household's earliest record.
pub fn household_geo(events: &[LightEvent]) -> BTreeMap<String, crate::features::Geo> {
    let mut first: HashMap<&str, &LightEvent> = HashMap::new();
    for ev in events {
        first
            .entry(ev.hub_id.as_str())
            .and_modify(|cur| {
                if ev.sort_key() < cur.sort_key() {
                    *cur = ev;
                }
            })
            .or_insert(ev);
    }
    first
        .into_iter()
        .map(|(hub, ev)| {
            (
                hub.to_string(),
                crate::features::Geo {
                    city: ev.city.clone(),
                    country: ev.country.clone(),
                },
            )
        })
        .collect()
}

/// Minute of day (0..1440) of a timestamp.
pub fn minute_of_day(ts: NaiveDateTime) -> usize {
    (ts.hour() * 60 + ts.minute()) as usize
}

/// Calendar month (1..=12) of day index `day` in `days`.
pub fn month_of(days: &[NaiveDate], day: usize) -> u32 {
    days[day].month()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    fn ev(t: &str, light: &str, action: Action, scene: Option<u8>) -> LightEvent {
        LightEvent {
            timestamp: ts(t),
            hub_id: "h1".into(),
            light_id: light.into(),
            room: Room::Room1,
            action,
            scene_id: scene,
            source: Source::App,
            city: "ames".into(),
            country: "US".into(),
            color: ColorAttrs::default(),
        }
    }

    fn window() -> StudyWindow {
        StudyWindow::new(
            NaiveDate::from_ymd_opt(2019, 3, 1).unwrap(),
            NaiveDate::from_ymd_opt(2019, 3, 10).unwrap(),
        )
        .unwrap()
    }

    fn state_of(events: &[LightEvent]) -> StateSeries {
        let map = reconstruct_state(events, &window()).unwrap();
        map.into_values().next().unwrap()
    }

    fn on_minutes(state: &StateSeries, day: usize) -> Vec<usize> {
        (0..MINUTES_PER_DAY).filter(|&m| state.is_on(day, m)).collect()
    }

    #[test]
    fn parses_on_record() {
        let e = parse_event_record(
            r#"{"ts":"2019-03-05T19:02:11Z","hub":"h1","light":"l1","room":"room1","action":"on","city":"ames","country":"US"}"#,
        )
        .unwrap();
        assert_eq!(e.action, Action::On);
        assert_eq!(e.scene_id, None);
        assert_eq!(e.room, Room::Room1);
        assert_eq!(e.source, Source::Other);
        assert_eq!(e.timestamp, ts("2019-03-05 19:02:11"));
        assert_eq!(e.color, ColorAttrs::default());
    }

    #[test]
    fn parses_scene_record_and_ignores_unknown_keys() {
        let e = parse_event_record(
            r#"{"ts":"2019-03-05T19:02:11Z","hub":"h1","light":"l1","room":"room1","action":"scene","scene":3,"source":"button","city":"ames","country":"US","bri":120,"colormode":"xy","zzz":1}"#,
        )
        .unwrap();
        assert_eq!(e.action, Action::SceneSet);
        assert_eq!(e.scene_id, Some(3));
        assert_eq!(e.source, Source::Button);
        assert_eq!(e.color.brightness, Some(120.0));
        assert_eq!(e.color.color_mode.as_deref(), Some("xy"));
    }

    #[test]
    fn rejects_bad_records() {
        let bad_ts = r#"{"ts":"not-a-time","hub":"h1","light":"l1","room":"room1","action":"on","city":"ames","country":"US"}"#;
        assert!(matches!(
            parse_event_record(bad_ts),
            Err(IngestError::MalformedRecord(_))
        ));
        let no_hub = r#"{"ts":"2019-03-05T19:02:11Z","light":"l1","room":"room1","action":"on","city":"a","country":"US"}"#;
        assert!(matches!(
            parse_event_record(no_hub),
            Err(IngestError::MalformedRecord(_))
        ));
        let scene_missing = r#"{"ts":"2019-03-05T19:02:11Z","hub":"h","light":"l1","room":"room1","action":"scene","city":"a","country":"US"}"#;
        assert!(matches!(
            parse_event_record(scene_missing),
            Err(IngestError::MalformedRecord(_))
        ));
        let scene_range = r#"{"ts":"2019-03-05T19:02:11Z","hub":"h","light":"l1","room":"room1","action":"scene","scene":9,"city":"a","country":"US"}"#;
        assert!(matches!(
            parse_event_record(scene_range),
            Err(IngestError::MalformedRecord(_))
        ));
        assert!(matches!(
            parse_event_record("{not json"),
            Err(IngestError::MalformedRecord(_))
        ));
        let kitchen = r#"{"ts":"2019-03-05T19:02:11Z","hub":"h","light":"l1","room":"kitchen","action":"on","city":"a","country":"US"}"#;
        assert_eq!(
            parse_event_record(kitchen),
            Err(IngestError::UnknownRoom("kitchen".into()))
        );
    }

    #[test]
    fn ndjson_round_trip() {
        let mut e = ev("2019-03-05 19:02:11", "l1", Action::SceneSet, Some(4));
        e.color.color_temp = Some(366.0);
        assert_eq!(parse_event_record(&e.to_ndjson()).unwrap(), e);
    }

    #[test]
    fn single_session_rasterizes_to_touched_minutes() {
        let s = state_of(&[
            ev("2019-03-05 19:00:30", "l1", Action::On, None),
            ev("2019-03-05 19:02:10", "l1", Action::Off, None),
        ]);
        assert_eq!(on_minutes(&s, 4), vec![1140, 1141, 1142]);
        assert_eq!(s.total_on_minutes(), 3);
    }

    #[test]
    fn off_without_on_is_ignored() {
        let s = state_of(&[ev("2019-03-05 19:00:30", "l1", Action::Off, None)]);
        assert_eq!(s.total_on_minutes(), 0);
    }

    #[test]
    fn session_across_midnight_splits_between_days() {
        let s = state_of(&[
            ev("2019-03-05 23:50:00", "l1", Action::On, None),
            ev("2019-03-06 00:10:00", "l1", Action::Off, None),
        ]);
        assert_eq!(on_minutes(&s, 4).len(), 10);
        assert_eq!(on_minutes(&s, 5).len(), 10);
    }

    #[test]
    fn stale_light_is_closed_at_cap() {
        let s = state_of(&[ev("2019-03-02 12:00:00", "l1", Action::On, None)]);
        assert_eq!(s.total_on_minutes(), 24 * 60);
        // An off order long after the cap changes nothing.
        let s2 = state_of(&[
            ev("2019-03-02 12:00:00", "l1", Action::On, None),
            ev("2019-03-06 12:00:00", "l1", Action::Off, None),
        ]);
        assert_eq!(s2.total_on_minutes(), 24 * 60);
    }

    #[test]
    fn scene_on_off_light_implies_on_and_latest_order_wins() {
        let s = state_of(&[
            ev("2019-03-05 19:00:00", "a", Action::SceneSet, Some(3)),
            ev("2019-03-05 19:10:00", "b", Action::SceneSet, Some(5)),
            ev("2019-03-05 19:20:00", "b", Action::Off, None),
            ev("2019-03-05 19:30:00", "a", Action::Off, None),
        ]);
        assert_eq!(on_minutes(&s, 4), (1140..1170).collect::<Vec<_>>());
        assert_eq!(s.scene(4, 1145), Some(3));
        assert_eq!(s.scene(4, 1150), Some(5));
        assert_eq!(s.scene(4, 1159), Some(5));
        assert_eq!(s.scene(4, 1160), Some(3));
        assert_eq!(s.scene(4, 1170), None);
    }

    #[test]
    fn plain_on_has_no_scene_and_scene_change_splits() {
        let s = state_of(&[
            ev("2019-03-05 08:00:00", "a", Action::On, None),
            ev("2019-03-05 08:05:00", "a", Action::SceneSet, Some(2)),
            ev("2019-03-05 08:10:00", "a", Action::SceneSet, Some(6)),
            ev("2019-03-05 08:15:00", "a", Action::Off, None),
        ]);
        assert_eq!(s.scene(4, 480), None);
        assert_eq!(s.scene(4, 486), Some(2));
        assert_eq!(s.scene(4, 491), Some(6));
        assert_eq!(s.total_on_minutes(), 15);
    }

    #[test]
    fn out_of_window_events_are_dropped() {
        let s = state_of(&[
            ev("2019-02-28 23:00:00", "a", Action::On, None),
            ev("2019-03-01 00:30:00", "a", Action::Off, None),
            ev("2019-03-01 01:00:00", "a", Action::On, None),
            ev("2019-03-01 01:01:00", "a", Action::Off, None),
        ]);
        assert_eq!(on_minutes(&s, 0), vec![60]);
    }

    #[test]
    fn empty_window_is_rejected() {
        let w = StudyWindow {
            first: NaiveDate::from_ymd_opt(2019, 3, 2).unwrap(),
            last: NaiveDate::from_ymd_opt(2019, 3, 1).unwrap(),
        };
        assert!(matches!(
            reconstruct_state(&[], &w),
            Err(IngestError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn validate_counts() {
        let good = r#"{"ts":"2019-03-05T19:02:11Z","hub":"h1","light":"l1","room":"room1","action":"on","city":"ames","country":"US"}"#;
        let other = r#"{"ts":"2019-03-05T19:02:11Z","hub":"h2","light":"l1","room":"room2","action":"off","city":"ames","country":"US"}"#;
        let lines = vec![good, good, other, "{broken", ""];
        let (events, report) = validate_log(&lines, &EventParser::default(), None);
        assert_eq!(events.len(), 3);
        assert_eq!(report.total, 4);
        assert_eq!(report.parsed, 3);
        assert_eq!(report.skipped, 1);
        assert_eq!(report.households, 2);
        assert_eq!(report.rooms, 2);

        let (_, empty) = validate_log::<&str>(&[], &EventParser::default(), None);
        assert_eq!(empty, IngestReport::default());
    }

    #[test]
    fn runs_round_trip() {
        let s = state_of(&[
            ev("2019-03-05 23:50:00", "a", Action::SceneSet, Some(1)),
            ev("2019-03-06 00:10:00", "a", Action::SceneSet, Some(2)),
            ev("2019-03-06 00:20:00", "a", Action::Off, None),
            ev("2019-03-07 10:00:00", "b", Action::On, None),
            ev("2019-03-07 10:03:00", "b", Action::Off, None),
        ]);
        let runs = s.runs();
        assert_eq!(runs.len(), 3);
        let back = StateSeries::from_runs(&s.household, s.room, s.days.clone(), &runs).unwrap();
        assert_eq!(back, s);
    }

    /// Brute-force per-second simulation of one light's on-state.
    fn brute_force_minutes(orders: &[(i64, Action)], horizon: i64) -> BTreeSet<i64> {
        let mut on = vec![false; horizon as usize];
        let mut state = false;
        let mut last_order = i64::MIN / 2;
        let mut idx = 0;
        for sec in 0..horizon {
            while idx < orders.len() && orders[idx].0 == sec {
                match orders[idx].1 {
                    Action::On | Action::SceneSet => state = true,
                    Action::Off => state = false,
                }
                last_order = sec;
                idx += 1;
            }
            if state && sec >= last_order + STALE_ON_CAP_SECS {
                state = false;
            }
            on[sec as usize] = state;
        }
        (0..horizon)
            .filter(|&s| on[s as usize])
            .map(|s| s / 60)
            .collect()
    }

    proptest! {
        #[test]
        fn rasterization_matches_per_second_simulation(
            raw in proptest::collection::vec((0i64..3 * 86_400, 0u8..3), 0..12)
        ) {
            let w = StudyWindow::new(
                NaiveDate::from_ymd_opt(2019, 3, 1).unwrap(),
                NaiveDate::from_ymd_opt(2019, 3, 3).unwrap(),
            ).unwrap();
            let mut orders: Vec<(i64, Action)> = raw
                .iter()
                .map(|&(t, a)| (t, [Action::On, Action::Off, Action::SceneSet][a as usize]))
                .collect();
            orders.sort();
            orders.dedup_by_key(|o| o.0);
            let events: Vec<LightEvent> = orders
                .iter()
                .map(|&(t, a)| {
                    let mut e = ev("2019-03-01 00:00:00", "l1", a, (a == Action::SceneSet).then_some(1));
                    e.timestamp = w.at(0, t);
                    e
                })
                .collect();
            let state = reconstruct_state(&events, &w).unwrap().into_values().next();
            let expected = brute_force_minutes(&orders, w.len_secs());
            let got: BTreeSet<i64> = match state {
                Some(s) => (0..s.day_count() * MINUTES_PER_DAY)
                    .filter(|&m| s.is_on(m / MINUTES_PER_DAY, m % MINUTES_PER_DAY))
                    .map(|m| m as i64)
                    .collect(),
                None => BTreeSet::new(),
            };
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn reconstruction_ignores_input_order(
            raw in proptest::collection::vec((0i64..2 * 86_400, 0u8..3, 0u8..3, 0u8..9), 0..20),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let w = window();
            let events: Vec<LightEvent> = raw
                .iter()
                .map(|&(t, a, light, scene)| {
                    let action = [Action::On, Action::Off, Action::SceneSet][a as usize];
                    let mut e = ev("2019-03-01 00:00:00", &format!("l{light}"), action,
                        (action == Action::SceneSet).then_some(scene));
                    e.timestamp = w.at(0, t);
                    e
                })
                .collect();
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut crate::seed::rng(perm_seed));
            let a = reconstruct_state(&events, &w).unwrap();
            let b = reconstruct_state(&shuffled, &w).unwrap();
            prop_assert_eq!(&a, &b);
            for s in a.values() {
                for d in 0..s.day_count() {
                    for m in 0..MINUTES_PER_DAY {
                        if s.scene_raw(d, m) != NO_SCENE {
                            prop_assert!(s.is_on(d, m));
                        }
                    }
                }
            }
        }
    }
}
