//! Seeded synthetic hub logs with planted routines and scene preferences.
//!
//! Each household follows one persona. Every day, each of the persona's
//! active windows fires with its daily probability: a `scene` order on the
//! room's main light at the (jittered) window start and an `off` order at the
//! (jittered) window end. The scene comes from the persona's scene table,
//! flipped to a uniformly chosen other scene with the flip probability.
//! Independently, the room's accent light gets Poisson background sessions of
//! plain `on`/`off` orders.

use std::collections::BTreeSet;

use chrono::Duration;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Period;
use crate::ingest::{sort_events, Action, ColorAttrs, LightEvent, Room, Source, StudyWindow};
use crate::seed::derived_rng;
use crate::{DEFAULT_SCENE_COUNT, MINUTES_PER_DAY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid persona spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub city: String,
    pub country: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveWindow {
    pub room: Room,
    /// Minute of day, inclusive.
    pub start: u32,
    /// Minute of day, exclusive.
    pub end: u32,
    pub daily_probability: f64,
}

impl ActiveWindow {
    /// Period of the planted start, which selects the scene.
    pub fn period(&self) -> Period {
        Period::of_minute(self.start)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRule {
    pub room: Room,
    pub period: Period,
    pub scene: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    /// Mean background sessions per room and day.
    pub rate_per_day: f64,
    pub flip_probability: f64,
    pub min_session_minutes: u32,
    pub max_session_minutes: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub id: u32,
    /// Each household draws its location uniformly from this list.
    pub locations: Vec<Location>,
    pub rooms: Vec<Room>,
    pub active_windows: Vec<ActiveWindow>,
    pub scene_table: Vec<SceneRule>,
    pub noise: Noise,
    pub households: usize,
}

impl PersonaSpec {
    pub fn scene_for(&self, room: Room, period: Period) -> Option<u8> {
        self.scene_table
            .iter()
            .find(|r| r.room == room && r.period == period)
            .map(|r| r.scene)
    }

    fn validate(&self, scene_count: u8) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(format!("persona {}: {m}", self.id)));
        if self.locations.is_empty() {
            return bad("no locations".into());
        }
        if self.rooms.is_empty() {
            return bad("no rooms".into());
        }
        for w in &self.active_windows {
            if !(w.start < w.end && w.end <= MINUTES_PER_DAY as u32) {
                return bad(format!("window {}..{} outside one day", w.start, w.end));
            }
            if !(0.0..=1.0).contains(&w.daily_probability) {
                return bad(format!("daily probability {}", w.daily_probability));
            }
            if !self.rooms.contains(&w.room) {
                return bad(format!("window in {} which the persona lacks", w.room));
            }
            if self.scene_for(w.room, w.period()).is_none() {
                return bad(format!("no scene for {} in the {} period", w.room, w.period().as_str()));
            }
        }
        if let Some(r) = self.scene_table.iter().find(|r| r.scene >= scene_count) {
            return bad(format!("scene {} not below {scene_count}", r.scene));
        }
        let n = &self.noise;
        if !(n.rate_per_day >= 0.0 && n.rate_per_day.is_finite()) {
            return bad(format!("noise rate {}", n.rate_per_day));
        }
        if !(0.0..=1.0).contains(&n.flip_probability) {
            return bad(format!("flip probability {}", n.flip_probability));
        }
        if n.min_session_minutes == 0 || n.min_session_minutes > n.max_session_minutes {
            return bad("session length range".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Start and end times move uniformly within this many minutes.
    pub jitter_minutes: f64,
    pub scene_count: u8,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            jitter_minutes: 10.0,
            scene_count: DEFAULT_SCENE_COUNT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomTruth {
    pub room: Room,
    /// Planted windows as half-open minute intervals, sorted.
    pub windows: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdTruth {
    pub household: String,
    pub persona: u32,
    pub location: Location,
    pub rooms: Vec<RoomTruth>,
    pub scene_table: Vec<SceneRule>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub households: Vec<HouseholdTruth>,
}

impl GroundTruth {
    pub fn persona_of(&self, household: &str) -> Option<u32> {
        self.households
            .binary_search_by(|h| h.household.as_str().cmp(household))
            .ok()
            .map(|i| self.households[i].persona)
    }
}

pub struct SynthOutput {
    pub events: Vec<LightEvent>,
    pub truth: GroundTruth,
}

pub fn household_id(index: usize) -> String {
    format!("hh{index:04}")
}

fn light_id(room: Room, accent: bool) -> String {
    format!("{}-{}", room.as_str(), if accent { "accent" } else { "main" })
}

fn jitter_secs(rng: &mut crate::seed::Rng, minutes: f64) -> i64 {
    if minutes <= 0.0 {
        return 0;
    }
    (rng.random_range(-minutes..=minutes) * 60.0).round() as i64
}

#[allow(clippy::too_many_arguments)]
fn event(
    window: &StudyWindow,
    day: usize,
    sec: i64,
    hub: &str,
    light: String,
    room: Room,
    action: Action,
    scene: Option<u8>,
    source: Source,
    loc: &Location,
) -> LightEvent {
    LightEvent {
        timestamp: window.at(day, 0) + Duration::seconds(sec),
        hub_id: hub.to_string(),
        light_id: light,
        room,
        action,
        scene_id: scene,
        source,
        city: loc.city.clone(),
        country: loc.country.clone(),
        color: ColorAttrs::default(),
    }
}

fn household_events(
    persona: &PersonaSpec,
    index: usize,
    window: &StudyWindow,
    params: &SynthParams,
    seed: u64,
) -> (Vec<LightEvent>, HouseholdTruth) {
    let mut rng = derived_rng(seed, "synth-household", index as u64);
    let hub = household_id(index);
    let loc = persona.locations[rng.random_range(0..persona.locations.len())].clone();
    let poisson = (persona.noise.rate_per_day > 0.0).then(|| Poisson::new(persona.noise.rate_per_day).expect("rate > 0"));
    let day_secs = (MINUTES_PER_DAY * 60) as i64;
    let mut events = Vec::new();
    for day in 0..window.day_count() {
        for w in &persona.active_windows {
            if rng.random::<f64>() >= w.daily_probability {
                continue;
            }
            let start = (i64::from(w.start) * 60 + jitter_secs(&mut rng, params.jitter_minutes)).clamp(0, day_secs - 2);
            let end = (i64::from(w.end) * 60 + jitter_secs(&mut rng, params.jitter_minutes)).clamp(start + 1, day_secs - 1);
            let planted = persona.scene_for(w.room, w.period()).expect("validated");
            let scene = if rng.random::<f64>() < persona.noise.flip_probability {
                let other = rng.random_range(0..params.scene_count - 1);
                if other >= planted {
                    other + 1
                } else {
                    other
                }
            } else {
                planted
            };
            let main = light_id(w.room, false);
            events.push(event(window, day, start, &hub, main.clone(), w.room, Action::SceneSet, Some(scene), Source::App, &loc));
            events.push(event(window, day, end, &hub, main, w.room, Action::Off, None, Source::App, &loc));
        }
        if let Some(poisson) = &poisson {
            let n = &persona.noise;
            for &room in &persona.rooms {
                let sessions = poisson.sample(&mut rng) as usize;
                for _ in 0..sessions {
                    let start = rng.random_range(0..day_secs - 1);
                    let len = rng.random_range(i64::from(n.min_session_minutes) * 60..=i64::from(n.max_session_minutes) * 60);
                    let end = (start + len).min(day_secs - 1);
                    let accent = light_id(room, true);
                    events.push(event(window, day, start, &hub, accent.clone(), room, Action::On, None, Source::Switch, &loc));
                    events.push(event(window, day, end, &hub, accent, room, Action::Off, None, Source::Switch, &loc));
                }
            }
        }
    }
    let rooms: BTreeSet<Room> = persona.rooms.iter().copied().collect();
    let truth = HouseholdTruth {
        household: hub,
        persona: persona.id,
        location: loc,
        rooms: rooms
            .into_iter()
            .map(|room| {
                let mut windows: Vec<(u32, u32)> = persona
                    .active_windows
                    .iter()
                    .filter(|w| w.room == room)
                    .map(|w| (w.start, w.end))
                    .collect();
                windows.sort_unstable();
                RoomTruth { room, windows }
            })
            .collect(),
        scene_table: persona.scene_table.clone(),
    };
    (events, truth)
}

/// Events for every household of every persona, sorted, plus the planted
/// ground truth. Household ids are assigned persona by persona.
pub fn generate(personas: &[PersonaSpec], window: &StudyWindow, params: &SynthParams, seed: u64) -> Result<SynthOutput, SynthError> {
    if params.scene_count < 2 {
        return Err(SynthError::InvalidSpec("need at least two scenes".into()));
    }
    if !(params.jitter_minutes >= 0.0 && params.jitter_minutes.is_finite()) {
        return Err(SynthError::InvalidSpec(format!("jitter {}", params.jitter_minutes)));
    }
    for p in personas {
        p.validate(params.scene_count)?;
    }
    let assignments: Vec<&PersonaSpec> = personas
        .iter()
        .flat_map(|p| std::iter::repeat_n(p, p.households))
        .collect();
    let per_household: Vec<(Vec<LightEvent>, HouseholdTruth)> = assignments
        .par_iter()
        .enumerate()
        .map(|(i, p)| household_events(p, i, window, params, seed))
        .collect();
    let mut events = Vec::new();
    let mut truth = GroundTruth::default();
    for (ev, t) in per_household {
        events.extend(ev);
        truth.households.push(t);
    }
    sort_events(&mut events);
    Ok(SynthOutput { events, truth })
}

/// Household count of the default population.
pub const DEFAULT_HOUSEHOLDS: usize = 600;

pub fn default_locations() -> Vec<Location> {
    [
        ("Berlin", "DE"),
        ("Munich", "DE"),
        ("Amsterdam", "NL"),
        ("Utrecht", "NL"),
        ("Boston", "US"),
        ("Denver", "US"),
        ("Lyon", "FR"),
        ("Paris", "FR"),
    ]
    .into_iter()
    .map(|(city, country)| Location {
        city: city.into(),
        country: country.into(),
    })
    .collect()
}

pub fn default_noise() -> Noise {
    Noise {
        rate_per_day: 0.05,
        flip_probability: 0.1,
        min_session_minutes: 5,
        max_session_minutes: 30,
    }
}

fn window(room: Room, start: u32, end: u32, daily_probability: f64) -> ActiveWindow {
    ActiveWindow {
        room,
        start,
        end,
        daily_probability,
    }
}

fn rule(room: Room, period: Period, scene: u8) -> SceneRule {
    SceneRule { room, period, scene }
}

/// Three personas with distinct daily windows and usage intensities. All
/// share a short evening window whose scene differs by persona, so the
/// evening scene can only be told apart once households are grouped by
/// persona.
pub fn default_personas(households: [usize; 3]) -> Vec<PersonaSpec> {
    use Period::*;
    use Room::*;
    let base = |id: u32, rooms: Vec<Room>, active_windows, scene_table| PersonaSpec {
        id,
        locations: default_locations(),
        rooms,
        active_windows,
        scene_table,
        noise: default_noise(),
        households: households[id as usize],
    };
    vec![
        base(
            0,
            vec![Room1, Room2],
            vec![
                window(Room1, 360, 630, 0.9),
                window(Room1, 1215, 1245, 0.85),
                window(Room2, 360, 630, 0.9),
                window(Room2, 1215, 1245, 0.85),
            ],
            vec![rule(Room1, Morning, 1), rule(Room1, Evening, 2), rule(Room2, Morning, 3), rule(Room2, Evening, 2)],
        ),
        base(
            1,
            vec![Room1],
            vec![window(Room1, 720, 1050, 0.7), window(Room1, 1215, 1245, 0.85)],
            vec![rule(Room1, Afternoon, 4), rule(Room1, Evening, 5)],
        ),
        base(
            2,
            vec![Room2],
            vec![window(Room2, 30, 240, 0.97), window(Room2, 1215, 1245, 0.85)],
            vec![rule(Room2, Night, 6), rule(Room2, Evening, 7)],
        ),
    ]
}

/// Largest relative departure of a persona's household count from an equal
/// share in the default population.
pub const POPULATION_TOLERANCE: f64 = 0.1;

/// The default population: `DEFAULT_HOUSEHOLDS` households assigned to the
/// three default personas by a seeded multinomial draw, redrawn until every
/// count is within `POPULATION_TOLERANCE` of an equal share.
pub fn default_population(seed: u64) -> Vec<PersonaSpec> {
    let mut rng = derived_rng(seed, "synth-population", 0);
    let equal = DEFAULT_HOUSEHOLDS as f64 / 3.0;
    loop {
        let mut counts = [0usize; 3];
        for _ in 0..DEFAULT_HOUSEHOLDS {
            counts[rng.random_range(0..3)] += 1;
        }
        if counts.iter().all(|&c| (c as f64 - equal).abs() <= POPULATION_TOLERANCE * equal) {
            return default_personas(counts);
        }
    }
}
