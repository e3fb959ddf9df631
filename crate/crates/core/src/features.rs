//! Hourly feature rows and scene labels.
//!
//! One row describes a (household, room, month, hour) cell in which at least
//! one scene was active. Usage counts are "days with at least one on-minute in
//! that clock hour", aggregated over the month, the quarter and the whole
//! window, and each is normalized by the number of window days it covers.

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Room, StateSeries};
use crate::models::{ForestModel, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("model is untrained: {0}")]
    UntrainedModel(String),
    #[error("feature name count {names} does not match model width {width}")]
    NameMismatch { names: usize, width: usize },
    #[error("bad feature row: {0}")]
    BadRow(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Night,
    Morning,
    Afternoon,
    Evening,
}

impl Period {
    pub const ALL: [Period; 4] = [
        Period::Night,
        Period::Morning,
        Period::Afternoon,
        Period::Evening,
    ];

    /// Night 0-5, Morning 6-11, Afternoon 12-17, Evening 18-23.
    pub fn of_hour(hour: u32) -> Period {
        match hour {
            0..=5 => Period::Night,
            6..=11 => Period::Morning,
            12..=17 => Period::Afternoon,
            _ => Period::Evening,
        }
    }

    pub fn of_minute(minute: u32) -> Period {
        Period::of_hour((minute / 60) % 24)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Period::Night => "night",
            Period::Morning => "morning",
            Period::Afternoon => "afternoon",
            Period::Evening => "evening",
        }
    }

    pub fn parse(s: &str) -> Option<Period> {
        Period::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Geo {
    pub city: String,
    pub country: String,
}

/// Integer codes for categorical values. Code 0 is reserved for values not
/// seen when the table was fitted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCodes {
    pub countries: Vec<String>,
    pub cities: Vec<String>,
}

pub const UNKNOWN_CODE: u32 = 0;

impl CategoryCodes {
    pub fn fit<'a>(geos: impl IntoIterator<Item = &'a Geo>) -> Self {
        let mut countries = std::collections::BTreeSet::new();
        let mut cities = std::collections::BTreeSet::new();
        for g in geos {
            countries.insert(g.country.clone());
            cities.insert(g.city.clone());
        }
        Self {
            countries: countries.into_iter().collect(),
            cities: cities.into_iter().collect(),
        }
    }

    fn code(table: &[String], value: &str) -> u32 {
        table
            .binary_search_by(|v| v.as_str().cmp(value))
            .map(|i| i as u32 + 1)
            .unwrap_or(UNKNOWN_CODE)
    }

    pub fn country(&self, value: &str) -> u32 {
        Self::code(&self.countries, value)
    }

    pub fn city(&self, value: &str) -> u32 {
        Self::code(&self.cities, value)
    }

    /// Number of country codes including the unknown slot.
    pub fn country_cardinality(&self) -> usize {
        self.countries.len() + 1
    }
}

/// One classification instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub household: String,
    pub room: Room,
    pub country: u32,
    pub city: u32,
    pub month: u32,
    pub hour: u32,
    pub period: Period,
    pub monthly_turn_on: u32,
    pub avg_turn_on_monthly: f64,
    pub quarterly_turn_on: u32,
    pub avg_turn_on_quarterly: f64,
    pub yearly_turn_on: u32,
    pub yearly_avg_turn_on: f64,
    pub label: u8,
}

/// Model input columns, in [`FeatureRow::encode`] order.
pub const FEATURE_NAMES: [&str; 12] = [
    "room",
    "country",
    "city",
    "month",
    "hour",
    "period",
    "monthly_turn_on",
    "avg_turn_on_monthly",
    "quarterly_turn_on",
    "avg_turn_on_quarterly",
    "yearly_turn_on",
    "yearly_avg_turn_on",
];

/// CSV header of `features.csv`.
pub const CSV_COLUMNS: [&str; 14] = [
    "household",
    "room",
    "country",
    "city",
    "month",
    "hour",
    "period",
    "monthly_turn_on",
    "avg_turn_on_monthly",
    "quarterly_turn_on",
    "avg_turn_on_quarterly",
    "yearly_turn_on",
    "yearly_avg_turn_on",
    "label",
];

impl FeatureRow {
    pub fn encode(&self) -> [f64; 12] {
        [
            self.room.index() as f64,
            f64::from(self.country),
            f64::from(self.city),
            f64::from(self.month),
            f64::from(self.hour),
            self.period.index() as f64,
            f64::from(self.monthly_turn_on),
            self.avg_turn_on_monthly,
            f64::from(self.quarterly_turn_on),
            self.avg_turn_on_quarterly,
            f64::from(self.yearly_turn_on),
            self.yearly_avg_turn_on,
        ]
    }

    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.household.clone(),
            self.room.as_str().to_string(),
            self.country.to_string(),
            self.city.to_string(),
            self.month.to_string(),
            self.hour.to_string(),
            self.period.as_str().to_string(),
            self.monthly_turn_on.to_string(),
            self.avg_turn_on_monthly.to_string(),
            self.quarterly_turn_on.to_string(),
            self.avg_turn_on_quarterly.to_string(),
            self.yearly_turn_on.to_string(),
            self.yearly_avg_turn_on.to_string(),
            self.label.to_string(),
        ]
    }

    pub fn from_record<S: AsRef<str>>(rec: &[S]) -> Result<Self, FeatureError> {
        if rec.len() != CSV_COLUMNS.len() {
            return Err(FeatureError::BadRow(format!(
                "expected {} fields, got {}",
                CSV_COLUMNS.len(),
                rec.len()
            )));
        }
        let f = |i: usize| rec[i].as_ref();
        fn num<T: std::str::FromStr>(s: &str, col: &str) -> Result<T, FeatureError> {
            s.parse()
                .map_err(|_| FeatureError::BadRow(format!("column {col}: {s:?}")))
        }
        Ok(Self {
            household: f(0).to_string(),
            room: Room::parse(f(1))
                .ok_or_else(|| FeatureError::BadRow(format!("room {:?}", f(1))))?,
            country: num(f(2), "country")?,
            city: num(f(3), "city")?,
            month: num(f(4), "month")?,
            hour: num(f(5), "hour")?,
            period: Period::parse(f(6))
                .ok_or_else(|| FeatureError::BadRow(format!("period {:?}", f(6))))?,
            monthly_turn_on: num(f(7), "monthly_turn_on")?,
            avg_turn_on_monthly: num(f(8), "avg_turn_on_monthly")?,
            quarterly_turn_on: num(f(9), "quarterly_turn_on")?,
            avg_turn_on_quarterly: num(f(10), "avg_turn_on_quarterly")?,
            yearly_turn_on: num(f(11), "yearly_turn_on")?,
            yearly_avg_turn_on: num(f(12), "yearly_avg_turn_on")?,
            label: num(f(13), "label")?,
        })
    }
}

fn quarter_of(month: u32) -> usize {
    ((month - 1) / 3) as usize
}

/// Feature rows of one (household, room).
///
/// Months and quarters are months/quarters of the year; on a window longer
/// than a year the same calendar month in different years pools together.
pub fn entity_feature_rows(state: &StateSeries, geo: &Geo, codes: &CategoryCodes) -> Vec<FeatureRow> {
    let n_days = state.day_count();
    let months: Vec<u32> = state.days.iter().map(|d| d.month()).collect();
    let mut month_days = [0u32; 13];
    let mut quarter_days = [0u32; 4];
    for &m in &months {
        month_days[m as usize] += 1;
        quarter_days[quarter_of(m)] += 1;
    }

    // Days with >= 1 on-minute per (month, hour), then rolled up.
    let mut month_on = [[0u32; 24]; 13];
    // Scene-minute tallies per (month, hour); scene ids are u8.
    let mut scene_counts: BTreeMap<(u32, u32), [u32; 256]> = BTreeMap::new();
    for day in 0..n_days {
        let m = months[day];
        for hour in 0..24usize {
            if state.on_minutes_in_hour(day, hour) > 0 {
                month_on[m as usize][hour] += 1;
            }
            for minute in hour * 60..hour * 60 + 60 {
                if let Some(scene) = state.scene(day, minute) {
                    scene_counts.entry((m, hour as u32)).or_insert([0; 256])[scene as usize] += 1;
                }
            }
        }
    }
    let mut quarter_on = [[0u32; 24]; 4];
    let mut year_on = [0u32; 24];
    for m in 1..=12u32 {
        for h in 0..24 {
            quarter_on[quarter_of(m)][h] += month_on[m as usize][h];
            year_on[h] += month_on[m as usize][h];
        }
    }

    let country = codes.country(&geo.country);
    let city = codes.city(&geo.city);
    scene_counts
        .into_iter()
        .map(|((month, hour), counts)| {
            // Modal scene; max_by_key keeps the last max, so scan in reverse
            // to break ties toward the lowest scene id.
            let label = (0..256usize)
                .rev()
                .max_by_key(|&s| counts[s])
                .expect("non-empty") as u8;
            let h = hour as usize;
            let q = quarter_of(month);
            let monthly = month_on[month as usize][h];
            let quarterly = quarter_on[q][h];
            let yearly = year_on[h];
            FeatureRow {
                household: state.household.clone(),
                room: state.room,
                country,
                city,
                month,
                hour,
                period: Period::of_hour(hour),
                monthly_turn_on: monthly,
                avg_turn_on_monthly: f64::from(monthly) / f64::from(month_days[month as usize]),
                quarterly_turn_on: quarterly,
                avg_turn_on_quarterly: f64::from(quarterly) / f64::from(quarter_days[q]),
                yearly_turn_on: yearly,
                yearly_avg_turn_on: f64::from(yearly) / n_days as f64,
                label,
            }
        })
        .collect()
}

/// Feature rows for every state series, in input order. Households missing
/// from `geo` get the unknown codes.
pub fn build_feature_rows<'a>(
    states: impl IntoIterator<Item = &'a StateSeries>,
    geo: &BTreeMap<String, Geo>,
    codes: &CategoryCodes,
) -> Vec<FeatureRow> {
    let unknown = Geo {
        city: String::new(),
        country: String::new(),
    };
    states
        .into_iter()
        .flat_map(|s| entity_feature_rows(s, geo.get(&s.household).unwrap_or(&unknown), codes))
        .collect()
}

/// Mean impurity decrease per feature, normalized to sum to one, descending.
pub fn compute_feature_importance(
    model: &ForestModel,
    feature_names: &[&str],
) -> Result<Vec<(String, f64)>, FeatureError> {
    if model.trees.is_empty() {
        return Err(FeatureError::UntrainedModel("forest has no trees".into()));
    }
    if feature_names.len() != model.n_features {
        return Err(FeatureError::NameMismatch {
            names: feature_names.len(),
            width: model.n_features,
        });
    }
    let mut total = vec![0.0; model.n_features];
    for tree in &model.trees {
        for (acc, v) in total.iter_mut().zip(tree.impurity_decrease()) {
            *acc += v;
        }
    }
    let sum: f64 = total.iter().sum();
    if !(sum > 0.0) {
        return Err(FeatureError::UntrainedModel(
            "no tree in the forest has a split".into(),
        ));
    }
    let mut ranked: Vec<(String, f64)> = feature_names
        .iter()
        .zip(total)
        .map(|(name, v)| (name.to_string(), v / sum))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked)
}

/// Encode rows as a model input matrix (see [`FEATURE_NAMES`]).
pub fn encode_rows<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>) -> Matrix {
    let data: Vec<f64> = rows.into_iter().flat_map(|r| r.encode()).collect();
    Matrix::new(data.len() / FEATURE_NAMES.len(), FEATURE_NAMES.len(), data)
}
