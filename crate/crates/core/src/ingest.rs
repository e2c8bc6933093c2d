//! Station metadata and hourly observation parsing, daily aggregation.
//!
//! Observation CSV columns (UTF-8, `.` decimal separator, header required):
//!
//! ```text
//! station_id,timestamp,no2,pm10,pm25,o3,co,so2,ws,wd,t,rh,p,dp,pressure,situation
//! ```
//!
//! Only `station_id` and `timestamp` are mandatory; the remaining columns may
//! appear in any order or be absent. An empty cell or `NA` marks a value as
//! missing. Timestamps are ISO-8601 (`2020-03-16T10:00:00Z`,
//! `2020-03-16T11:00:00+01:00`; a naive `2020-03-16T10:00:00` or
//! `2020-03-16 10:00:00` is read as UTC) and are truncated to the hour.
//!
//! Station metadata CSV columns: `station_id,region,class_label,lat,lon`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-day (and per-hour) measured quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "NO2")]
    No2,
    #[serde(rename = "PM10")]
    Pm10,
    #[serde(rename = "PM2.5")]
    Pm25,
    #[serde(rename = "O3")]
    O3,
    #[serde(rename = "CO")]
    Co,
    #[serde(rename = "SO2")]
    So2,
    #[serde(rename = "WS")]
    Ws,
    #[serde(rename = "WD")]
    Wd,
    #[serde(rename = "T")]
    T,
    #[serde(rename = "RH")]
    Rh,
    #[serde(rename = "P")]
    P,
    #[serde(rename = "DP")]
    Dp,
    #[serde(rename = "pressure")]
    Pressure,
}

pub const FIELD_COUNT: usize = 13;

impl Field {
    pub const ALL: [Field; FIELD_COUNT] = [
        Field::No2,
        Field::Pm10,
        Field::Pm25,
        Field::O3,
        Field::Co,
        Field::So2,
        Field::Ws,
        Field::Wd,
        Field::T,
        Field::Rh,
        Field::P,
        Field::Dp,
        Field::Pressure,
    ];

    pub const WEATHER: [Field; 7] = [
        Field::Ws,
        Field::Wd,
        Field::T,
        Field::Rh,
        Field::P,
        Field::Dp,
        Field::Pressure,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_pollutant(self) -> bool {
        self.index() < 6
    }

    /// Column name in the observation CSV.
    pub fn column(self) -> &'static str {
        match self {
            Field::No2 => "no2",
            Field::Pm10 => "pm10",
            Field::Pm25 => "pm25",
            Field::O3 => "o3",
            Field::Co => "co",
            Field::So2 => "so2",
            Field::Ws => "ws",
            Field::Wd => "wd",
            Field::T => "t",
            Field::Rh => "rh",
            Field::P => "p",
            Field::Dp => "dp",
            Field::Pressure => "pressure",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Field::No2 => "NO2",
            Field::Pm10 => "PM10",
            Field::Pm25 => "PM2.5",
            Field::O3 => "O3",
            Field::Co => "CO",
            Field::So2 => "SO2",
            Field::Ws => "WS",
            Field::Wd => "WD",
            Field::T => "T",
            Field::Rh => "RH",
            Field::P => "P",
            Field::Dp => "DP",
            Field::Pressure => "pressure",
        }
    }

    fn from_column(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.column() == name)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Field::ALL
            .into_iter()
            .find(|f| f.column() == lower || f.label().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::InvalidInput(format!("unknown field `{s}`")))
    }
}

pub type FieldValues = [Option<f64>; FIELD_COUNT];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    EasternSwitzerland,
    LowerAustria,
    Beijing,
    Wuhan,
    Other(String),
}

impl Region {
    /// Station classes a region declares; `None` accepts any label.
    pub fn classes(&self) -> Option<&'static [&'static str]> {
        match self {
            Region::EasternSwitzerland => Some(&["No Traffic", "Low Traffic", "High Traffic"]),
            Region::LowerAustria => Some(&["Urban", "Rural", "Rural Residential", "Residential"]),
            Region::Beijing | Region::Wuhan => Some(&["Urban", "Rural", "Suburban", "Road"]),
            Region::Other(_) => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Region::EasternSwitzerland => "EasternSwitzerland",
            Region::LowerAustria => "LowerAustria",
            Region::Beijing => "Beijing",
            Region::Wuhan => "Wuhan",
            Region::Other(name) => name,
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "easternswitzerland" => Region::EasternSwitzerland,
            "loweraustria" => Region::LowerAustria,
            "beijing" => Region::Beijing,
            "wuhan" => Region::Wuhan,
            "" => return Err(Error::InvalidInput("empty region".into())),
            _ => Region::Other(s.trim().to_string()),
        })
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub region: Region,
    pub class_label: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub station_id: String,
    pub timestamp: DateTime<Utc>,
    pub values: FieldValues,
    pub situation: Option<String>,
}

impl Observation {
    pub fn new(station_id: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Observation {
            station_id: station_id.into(),
            timestamp,
            values: [None; FIELD_COUNT],
            situation: None,
        }
    }

    pub fn get(&self, field: Field) -> Option<f64> {
        self.values[field.index()]
    }

    pub fn with(mut self, field: Field, value: f64) -> Self {
        self.values[field.index()] = Some(value);
        self
    }
}

/// Result of parsing an observation file. Bad rows are skipped, not fatal.
#[derive(Debug, Clone, Default)]
pub struct ParsedObservations {
    pub observations: Vec<Observation>,
    pub row_errors: Vec<RowIssue>,
    pub unknown_columns: Vec<String>,
    /// Cells that were present but unparseable or out of their physical range.
    pub rejected_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    let parsed = DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            [
                "%Y-%m-%dT%H:%M:%S",
                "%Y-%m-%d %H:%M:%S",
                "%Y-%m-%dT%H:%M",
                "%Y-%m-%d %H:%M",
            ]
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
            .map(|n| n.and_utc())
        })?;
    parsed
        .with_minute(0)
        .and_then(|t| t.with_second(0))
        .and_then(|t| t.with_nanosecond(0))
}

/// Validates a raw value for a field; `None` means the cell is rejected.
fn admit(field: Field, value: f64) -> Option<f64> {
    if !value.is_finite() {
        return None;
    }
    match field {
        Field::Wd => Some(value.rem_euclid(360.0)),
        Field::Rh => (0.0..=100.0).contains(&value).then_some(value),
        Field::Ws | Field::P => (value >= 0.0).then_some(value),
        f if f.is_pollutant() => (value >= 0.0).then_some(value),
        _ => Some(value),
    }
}

pub fn parse_observations<R: Read>(input: R) -> Result<ParsedObservations> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();

    let mut station_col = None;
    let mut time_col = None;
    let mut situation_col = None;
    let mut field_cols = Vec::new();
    let mut unknown_columns = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        let key = name.trim().trim_start_matches('\u{feff}').to_ascii_lowercase();
        match key.as_str() {
            "station_id" => station_col = Some(i),
            "timestamp" => time_col = Some(i),
            "situation" => situation_col = Some(i),
            other => match Field::from_column(other) {
                Some(field) => field_cols.push((i, field)),
                None => unknown_columns.push(name.to_string()),
            },
        }
    }
    let (Some(station_col), Some(time_col)) = (station_col, time_col) else {
        return Err(Error::MalformedHeader(
            "observation file needs `station_id` and `timestamp` columns".into(),
        ));
    };
    if !unknown_columns.is_empty() {
        log::warn!(
            "ignoring {} unrecognized column(s): {:?}",
            unknown_columns.len(),
            unknown_columns
        );
    }

    let mut out = ParsedObservations {
        unknown_columns,
        ..Default::default()
    };
    for (row_idx, record) in reader.records().enumerate() {
        // header is line 1
        let line = row_idx as u64 + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                out.row_errors.push(RowIssue {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let station = record.get(station_col).unwrap_or("").trim();
        if station.is_empty() {
            out.row_errors.push(RowIssue {
                line,
                message: "empty station_id".into(),
            });
            continue;
        }
        let raw_time = record.get(time_col).unwrap_or("");
        let Some(timestamp) = parse_timestamp(raw_time) else {
            out.row_errors.push(RowIssue {
                line,
                message: format!("unparseable timestamp `{raw_time}`"),
            });
            continue;
        };
        let mut obs = Observation::new(station, timestamp);
        for &(col, field) in &field_cols {
            let cell = record.get(col).unwrap_or("");
            if is_missing(cell) {
                continue;
            }
            match cell.trim().parse::<f64>().ok().and_then(|v| admit(field, v)) {
                Some(v) => obs.values[field.index()] = Some(v),
                None => out.rejected_cells += 1,
            }
        }
        if let Some(col) = situation_col {
            let cell = record.get(col).unwrap_or("");
            if !is_missing(cell) {
                obs.situation = Some(cell.trim().to_string());
            }
        }
        out.observations.push(obs);
    }
    if !out.row_errors.is_empty() {
        log::warn!("skipped {} malformed observation row(s)", out.row_errors.len());
    }
    Ok(out)
}

/// Writes observations in the canonical column order.
pub fn write_observations<W: Write>(out: W, observations: &[Observation]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["station_id", "timestamp"];
    header.extend(Field::ALL.iter().map(|f| f.column()));
    header.push("situation");
    writer.write_record(&header)?;
    for obs in observations {
        let mut record = vec![
            obs.station_id.clone(),
            obs.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        ];
        record.extend(obs.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        record.push(obs.situation.clone().unwrap_or_default());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_stations<R: Read>(input: R) -> Result<Vec<StationMeta>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(id_col), Some(region_col), Some(class_col)) = (find("station_id"), find("region"), find("class_label"))
    else {
        return Err(Error::MalformedHeader(
            "station file needs `station_id`, `region` and `class_label` columns".into(),
        ));
    };
    let lat_col = find("lat");
    let lon_col = find("lon");
    let coord = |record: &csv::StringRecord, col: Option<usize>| -> Option<f64> {
        col.and_then(|c| record.get(c))
            .filter(|c| !is_missing(c))
            .and_then(|c| c.parse().ok())
    };

    let mut seen = HashSet::new();
    let mut stations = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx as u64 + 2;
        let record = record?;
        let station_id = record.get(id_col).unwrap_or("").to_string();
        if station_id.is_empty() {
            return Err(Error::Row {
                line,
                message: "empty station_id".into(),
            });
        }
        if !seen.insert(station_id.clone()) {
            return Err(Error::Row {
                line,
                message: format!("duplicate station `{station_id}`"),
            });
        }
        let region: Region = record.get(region_col).unwrap_or("").parse()?;
        let class_label = record.get(class_col).unwrap_or("").to_string();
        if let Some(classes) = region.classes() {
            if !classes.contains(&class_label.as_str()) {
                return Err(Error::Row {
                    line,
                    message: format!("class `{class_label}` is not declared for region {region}"),
                });
            }
        }
        stations.push(StationMeta {
            station_id,
            region,
            class_label,
            latitude: coord(&record, lat_col),
            longitude: coord(&record, lon_col),
        });
    }
    Ok(stations)
}

pub fn write_stations<W: Write>(out: W, stations: &[StationMeta]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["station_id", "region", "class_label", "lat", "lon"])?;
    for s in stations {
        writer.write_record([
            s.station_id.clone(),
            s.region.name().to_string(),
            s.class_label.clone(),
            s.latitude.map(|v| v.to_string()).unwrap_or_default(),
            s.longitude.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRow {
    pub date: NaiveDate,
    pub values: FieldValues,
    /// Fraction of the day's 24 hours with at least one value, per field.
    pub coverage: [f64; FIELD_COUNT],
}

impl DailyRow {
    pub fn empty(date: NaiveDate) -> Self {
        DailyRow {
            date,
            values: [None; FIELD_COUNT],
            coverage: [0.0; FIELD_COUNT],
        }
    }

    pub fn get(&self, field: Field) -> Option<f64> {
        self.values[field.index()]
    }

    pub fn set(&mut self, field: Field, value: Option<f64>) {
        self.values[field.index()] = value;
        self.coverage[field.index()] = if value.is_some() { 1.0 } else { 0.0 };
    }
}

/// Date-indexed daily means for one station. Dates are strictly increasing
/// but need not be contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub station_id: String,
    pub rows: Vec<DailyRow>,
}

impl DailySeries {
    pub fn new(station_id: impl Into<String>, mut rows: Vec<DailyRow>) -> Self {
        rows.sort_by_key(|r| r.date);
        rows.dedup_by_key(|r| r.date);
        DailySeries {
            station_id: station_id.into(),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.rows.first().map(|r| r.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.rows.last().map(|r| r.date)
    }

    pub fn row(&self, date: NaiveDate) -> Option<&DailyRow> {
        self.rows
            .binary_search_by_key(&date, |r| r.date)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn values(&self, field: Field) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.get(field)).collect()
    }

    /// Whether any row has a value for `field`.
    pub fn measures(&self, field: Field) -> bool {
        self.rows.iter().any(|r| r.get(field).is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateConfig {
    /// Minimum fraction of hours with data for a daily mean to be kept.
    pub coverage_threshold: f64,
    /// Fixed offset from UTC that defines local day boundaries.
    pub utc_offset_hours: i32,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            coverage_threshold: 0.75,
            utc_offset_hours: 0,
        }
    }
}

/// Angle in degrees of the mean of unit vectors, in `[0, 360)`.
pub fn vector_mean_direction(degrees: &[f64]) -> f64 {
    let (s, c) = degrees.iter().fold((0.0, 0.0), |(s, c), d| {
        let r = d.to_radians();
        (s + r.sin(), c + r.cos())
    });
    let angle = s.atan2(c).to_degrees().rem_euclid(360.0);
    if angle >= 360.0 {
        0.0
    } else {
        angle
    }
}

/// Aggregates hourly observations into one [`DailySeries`] per station,
/// sorted by station id.
pub fn aggregate_daily(obs: &[Observation], config: &AggregateConfig) -> Result<Vec<DailySeries>> {
    if !(config.coverage_threshold > 0.0 && config.coverage_threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "coverage threshold {} outside (0, 1]",
            config.coverage_threshold
        )));
    }
    let offset = Duration::hours(config.utc_offset_hours as i64);

    // (station, local date) -> per-field list of (utc instant, value)
    type Bucket = Vec<Vec<(i64, f64)>>;
    let mut buckets: BTreeMap<(&str, NaiveDate), Bucket> = BTreeMap::new();
    for o in obs {
        let local = o.timestamp + offset;
        let bucket = buckets
            .entry((o.station_id.as_str(), local.date_naive()))
            .or_insert_with(|| vec![Vec::new(); FIELD_COUNT]);
        for (i, v) in o.values.iter().enumerate() {
            if let Some(v) = v {
                bucket[i].push((o.timestamp.timestamp(), *v));
            }
        }
    }

    let mut by_station: BTreeMap<&str, Vec<DailyRow>> = BTreeMap::new();
    for ((station, date), mut fields) in buckets {
        let mut row = DailyRow::empty(date);
        for (i, values) in fields.iter_mut().enumerate() {
            if values.is_empty() {
                continue;
            }
            // fixed summation order regardless of input order
            values.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let mut hours: Vec<i64> = values.iter().map(|(t, _)| t.div_euclid(3600)).collect();
            hours.dedup();
            let coverage = (hours.len() as f64 / 24.0).min(1.0);
            row.coverage[i] = coverage;
            if coverage + 1e-12 < config.coverage_threshold {
                continue;
            }
            let mean = if Field::ALL[i] == Field::Wd {
                let degrees: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
                vector_mean_direction(&degrees)
            } else {
                values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64
            };
            row.values[i] = Some(mean);
        }
        by_station.entry(station).or_default().push(row);
    }
    Ok(by_station
        .into_iter()
        .map(|(station, rows)| DailySeries::new(station, rows))
        .collect())
}

/// Rows with `start <= date <= end`.
pub fn slice_period(series: &DailySeries, start: NaiveDate, end: NaiveDate) -> DailySeries {
    DailySeries {
        station_id: series.station_id.clone(),
        rows: series
            .rows
            .iter()
            .filter(|r| r.date >= start && r.date <= end)
            .cloned()
            .collect(),
    }
}
