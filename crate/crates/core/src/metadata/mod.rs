//! Satellite metadata: dialect parsing, normalization into one archival
//! record, validation, and the record's table-row form.

mod mapping;
mod parse;
mod row;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

pub use mapping::{normalize, normalize_at, FieldMapping};
pub use parse::{parse_source, Dialect, SourceMetadataDocument};
pub use row::{from_row, metadata_row_key, to_row};

use crate::error::{Error, Result};

/// Unified archival record.
///
/// Identification, both corner sets and the timing of the metadata itself are
/// always present; everything else may be absent in a given source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedMetadata {
    pub creation: DateTime<Utc>,
    pub last_update: DateTime<Utc>,
    pub image_name: Option<String>,
    pub tiles_codes: Option<String>,
    pub level: Option<i64>,
    pub satellite_id: String,
    pub sensor_id: String,
    pub receive_time: Option<DateTime<Utc>>,
    pub reference_system_id: Option<String>,
    pub time_begin: Option<DateTime<Utc>>,
    pub time_end: Option<DateTime<Utc>>,
    pub product_level: Option<String>,
    pub product_format: Option<String>,
    pub spatial_resolution: Option<f64>,
    pub processing_level: Option<String>,
    pub center_lon: Option<f64>,
    pub center_lat: Option<f64>,
    pub top_left_lat: f64,
    pub top_left_lon: f64,
    pub top_right_lat: f64,
    pub top_right_lon: f64,
    pub bottom_right_lat: f64,
    pub bottom_right_lon: f64,
    pub bottom_left_lat: f64,
    pub bottom_left_lon: f64,
    pub file_path: Option<String>,
    pub scene_row: Option<i64>,
    pub cloud_percent: Option<f64>,
    pub data_link: Option<String>,
    pub data_provider: Option<String>,
    pub data_owner: Option<String>,
}

/// Value kinds a field can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Time,
    Int,
    Float,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Text(String),
    Time(DateTime<Utc>),
    Int(i64),
    Float(f64),
}

impl FieldValue {
    /// Storage text: RFC 3339 UTC for times, shortest round-trip for floats.
    pub fn to_text(&self) -> String {
        match self {
            FieldValue::Text(s) => s.clone(),
            FieldValue::Time(t) => t.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            FieldValue::Int(i) => i.to_string(),
            FieldValue::Float(f) => f.to_string(),
        }
    }

    /// Parses stored or source text as a value of `kind`.
    pub fn parse(kind: FieldKind, text: &str) -> Option<FieldValue> {
        let text = text.trim();
        match kind {
            FieldKind::Text => Some(FieldValue::Text(text.to_owned())),
            FieldKind::Time => parse_time(text).map(FieldValue::Time),
            FieldKind::Int => text.parse().ok().map(FieldValue::Int),
            FieldKind::Float => text.parse::<f64>().ok().filter(|f| f.is_finite()).map(FieldValue::Float),
        }
    }
}

fn parse_time(text: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.with_timezone(&Utc));
    }
    let bare = text.trim_end_matches('Z');
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = chrono::NaiveDateTime::parse_from_str(bare, fmt) {
            return Some(t.and_utc());
        }
    }
    chrono::NaiveDate::parse_from_str(bare, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

macro_rules! fields {
    ($( $variant:ident => $name:literal : $kind:ident, $access:ident );+ $(;)?) => {
        /// Every field of [`UnifiedMetadata`], named as in its snake_case export.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum Field { $( $variant ),+ }

        impl Field {
            pub const ALL: &'static [Field] = &[ $( Field::$variant ),+ ];

            pub fn name(self) -> &'static str {
                match self { $( Field::$variant => $name ),+ }
            }

            pub fn kind(self) -> FieldKind {
                match self { $( Field::$variant => FieldKind::$kind ),+ }
            }
        }

        impl UnifiedMetadata {
            /// Current value of `field`, `None` when absent.
            pub fn get(&self, field: Field) -> Option<FieldValue> {
                match field { $( Field::$variant => fields!(@get self.$access, $access, $kind) ),+ }
            }

            /// Sets `field`; the value kind must match the field.
            pub fn set(&mut self, field: Field, value: FieldValue) -> Result<()> {
                match field {
                    $( Field::$variant => fields!(@set self.$access, $access, $kind, value, $name) ),+
                }
                Ok(())
            }
        }
    };
    (@get $e:expr, $access:ident, Text) => { fields!(@opt $e, $access).map(|v| FieldValue::Text(v.clone())) };
    (@get $e:expr, $access:ident, Time) => { fields!(@opt $e, $access).map(|v| FieldValue::Time(*v)) };
    (@get $e:expr, $access:ident, Int) => { fields!(@opt $e, $access).map(|v| FieldValue::Int(*v)) };
    (@get $e:expr, $access:ident, Float) => { fields!(@opt $e, $access).map(|v| FieldValue::Float(*v)) };
    (@opt $e:expr, $access:ident) => { OptRef::opt_ref(&$e) };
    (@set $e:expr, $access:ident, $kind:ident, $value:expr, $name:literal) => {
        match $value {
            fields!(@pat $kind, v) => OptSet::opt_set(&mut $e, v),
            other => return Err(Error::format(format!("field {} cannot hold {other:?}", $name))),
        }
    };
    (@pat Text, $v:ident) => { FieldValue::Text($v) };
    (@pat Time, $v:ident) => { FieldValue::Time($v) };
    (@pat Int, $v:ident) => { FieldValue::Int($v) };
    (@pat Float, $v:ident) => { FieldValue::Float($v) };
}

// Lets the field table treat required and optional members alike.
trait OptRef<T> {
    fn opt_ref(&self) -> Option<&T>;
}
impl<T> OptRef<T> for Option<T> {
    fn opt_ref(&self) -> Option<&T> {
        self.as_ref()
    }
}
macro_rules! plain_opt {
    ($($t:ty),*) => {$(
        impl OptRef<$t> for $t {
            fn opt_ref(&self) -> Option<&$t> { Some(self) }
        }
        impl OptSet<$t> for $t {
            fn opt_set(&mut self, v: $t) { *self = v; }
        }
    )*};
}
trait OptSet<T> {
    fn opt_set(&mut self, v: T);
}
impl<T> OptSet<T> for Option<T> {
    fn opt_set(&mut self, v: T) {
        *self = Some(v);
    }
}
plain_opt!(String, f64, DateTime<Utc>);

fields! {
    Creation => "creation": Time, creation;
    LastUpdate => "last_update": Time, last_update;
    ImageName => "image_name": Text, image_name;
    TilesCodes => "tiles_codes": Text, tiles_codes;
    Level => "level": Int, level;
    SatelliteId => "satellite_id": Text, satellite_id;
    SensorId => "sensor_id": Text, sensor_id;
    ReceiveTime => "receive_time": Time, receive_time;
    ReferenceSystemId => "reference_system_id": Text, reference_system_id;
    TimeBegin => "time_begin": Time, time_begin;
    TimeEnd => "time_end": Time, time_end;
    ProductLevel => "product_level": Text, product_level;
    ProductFormat => "product_format": Text, product_format;
    SpatialResolution => "spatial_resolution": Float, spatial_resolution;
    ProcessingLevel => "processing_level": Text, processing_level;
    CenterLon => "center_lon": Float, center_lon;
    CenterLat => "center_lat": Float, center_lat;
    TopLeftLat => "top_left_lat": Float, top_left_lat;
    TopLeftLon => "top_left_lon": Float, top_left_lon;
    TopRightLat => "top_right_lat": Float, top_right_lat;
    TopRightLon => "top_right_lon": Float, top_right_lon;
    BottomRightLat => "bottom_right_lat": Float, bottom_right_lat;
    BottomRightLon => "bottom_right_lon": Float, bottom_right_lon;
    BottomLeftLat => "bottom_left_lat": Float, bottom_left_lat;
    BottomLeftLon => "bottom_left_lon": Float, bottom_left_lon;
    FilePath => "file_path": Text, file_path;
    SceneRow => "scene_row": Int, scene_row;
    CloudPercent => "cloud_percent": Float, cloud_percent;
    DataLink => "data_link": Text, data_link;
    DataProvider => "data_provider": Text, data_provider;
    DataOwner => "data_owner": Text, data_owner;
}

impl Field {
    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Fields a normalized record cannot do without.
    pub const REQUIRED: &'static [Field] = &[
        Field::SatelliteId,
        Field::SensorId,
        Field::TopLeftLat,
        Field::TopLeftLon,
        Field::TopRightLat,
        Field::TopRightLon,
        Field::BottomRightLat,
        Field::BottomRightLon,
        Field::BottomLeftLat,
        Field::BottomLeftLon,
    ];

    fn is_latitude(self) -> bool {
        matches!(
            self,
            Field::CenterLat | Field::TopLeftLat | Field::TopRightLat | Field::BottomRightLat | Field::BottomLeftLat
        )
    }

    fn is_longitude(self) -> bool {
        matches!(
            self,
            Field::CenterLon | Field::TopLeftLon | Field::TopRightLon | Field::BottomRightLon | Field::BottomLeftLon
        )
    }
}

/// A broken record invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub constraint: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

/// Lists every violated record invariant; empty means the record is valid.
pub fn validate(m: &UnifiedMetadata) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |field: Field, constraint: &str| {
        out.push(Violation { field: field.name(), constraint: constraint.to_owned() })
    };
    if m.satellite_id.trim().is_empty() {
        flag(Field::SatelliteId, "must not be empty");
    }
    if m.sensor_id.trim().is_empty() {
        flag(Field::SensorId, "must not be empty");
    }
    if m.creation > m.last_update {
        flag(Field::LastUpdate, "creation must not be after last_update");
    }
    if let (Some(begin), Some(end)) = (m.time_begin, m.time_end) {
        if begin > end {
            flag(Field::TimeEnd, "time_begin must not be after time_end");
        }
    }
    if let Some(c) = m.cloud_percent {
        if !(0.0..=100.0).contains(&c) {
            flag(Field::CloudPercent, "must be within [0, 100]");
        }
    }
    for &field in Field::ALL {
        let Some(FieldValue::Float(v)) = m.get(field) else { continue };
        if field.is_latitude() && !(-90.0..=90.0).contains(&v) {
            flag(field, "latitude must be within [-90, 90]");
        }
        if field.is_longitude() && !(-180.0..=180.0).contains(&v) {
            flag(field, "longitude must be within [-180, 180]");
        }
    }
    out
}

impl UnifiedMetadata {
    /// A record with required fields only; used as the normalization seed.
    pub fn empty(now: DateTime<Utc>) -> Self {
        UnifiedMetadata {
            creation: now,
            last_update: now,
            image_name: None,
            tiles_codes: None,
            level: None,
            satellite_id: String::new(),
            sensor_id: String::new(),
            receive_time: None,
            reference_system_id: None,
            time_begin: None,
            time_end: None,
            product_level: None,
            product_format: None,
            spatial_resolution: None,
            processing_level: None,
            center_lon: None,
            center_lat: None,
            top_left_lat: 0.0,
            top_left_lon: 0.0,
            top_right_lat: 0.0,
            top_right_lon: 0.0,
            bottom_right_lat: 0.0,
            bottom_right_lon: 0.0,
            bottom_left_lat: 0.0,
            bottom_left_lon: 0.0,
            file_path: None,
            scene_row: None,
            cloud_percent: None,
            data_link: None,
            data_provider: None,
            data_owner: None,
        }
    }

    /// Errors with every violation when the record is invalid.
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid { violations: violations.iter().map(ToString::to_string).collect() })
        }
    }

    /// JSON export with snake_case field names; absent fields are `null`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn record() -> UnifiedMetadata {
        let t0 = Utc.with_ymd_and_hms(2024, 5, 1, 10, 0, 0).unwrap();
        let mut m = UnifiedMetadata::empty(t0);
        m.satellite_id = "ZY3".into();
        m.sensor_id = "NAD".into();
        m.top_left_lat = 21.0;
        m.top_left_lon = 10.0;
        m.top_right_lat = 21.0;
        m.top_right_lon = 11.0;
        m.bottom_right_lat = 20.0;
        m.bottom_right_lon = 11.0;
        m.bottom_left_lat = 20.0;
        m.bottom_left_lon = 10.0;
        m.time_begin = Some(t0);
        m.time_end = Some(t0 + chrono::Duration::seconds(30));
        m.cloud_percent = Some(12.5);
        m
    }

    #[test]
    fn valid_record_has_no_violations() {
        assert!(validate(&record()).is_empty());
    }

    #[test]
    fn violations_name_their_field() {
        let mut m = record();
        m.cloud_percent = Some(150.0);
        assert_eq!(validate(&m).iter().map(|v| v.field).collect::<Vec<_>>(), vec!["cloud_percent"]);

        let mut m = record();
        m.time_begin = m.time_end.map(|t| t + chrono::Duration::hours(1));
        assert_eq!(validate(&m)[0].field, "time_end");

        let mut m = record();
        m.top_left_lat = 91.0;
        m.center_lon = Some(-200.0);
        let fields: Vec<_> = validate(&m).iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["center_lon", "top_left_lat"]);

        let mut m = record();
        m.sensor_id = " ".into();
        m.last_update = m.creation - chrono::Duration::seconds(1);
        assert_eq!(validate(&m).len(), 2);
        assert!(matches!(m.ensure_valid(), Err(Error::Invalid { .. })));
    }

    #[test]
    fn field_names_match_json_export() {
        let json: serde_json::Value = serde_json::from_str(&record().to_json().unwrap()).unwrap();
        let obj = json.as_object().unwrap();
        assert_eq!(obj.len(), Field::ALL.len());
        for f in Field::ALL {
            assert!(obj.contains_key(f.name()), "{}", f.name());
        }
        assert_eq!(obj["satellite_id"], "ZY3");
        assert!(obj["data_owner"].is_null());
    }

    #[test]
    fn get_set_round_trip() {
        let m = record();
        let mut copy = UnifiedMetadata::empty(m.creation);
        for &f in Field::ALL {
            if let Some(v) = m.get(f) {
                copy.set(f, v).unwrap();
            }
        }
        assert_eq!(copy, m);
        assert!(copy.set(Field::Level, FieldValue::Text("x".into())).is_err());
    }

    #[test]
    fn time_formats() {
        let want = Utc.with_ymd_and_hms(2013, 4, 11, 2, 30, 5).unwrap();
        for text in ["2013-04-11T02:30:05Z", "2013-04-11T02:30:05", "2013-04-11 02:30:05", "2013-04-11T04:30:05+02:00"] {
            assert_eq!(FieldValue::parse(FieldKind::Time, text), Some(FieldValue::Time(want)), "{text}");
        }
        assert!(FieldValue::parse(FieldKind::Time, "yesterday").is_none());
        assert_eq!(
            FieldValue::parse(FieldKind::Time, "2013-04-11"),
            Some(FieldValue::Time(Utc.with_ymd_and_hms(2013, 4, 11, 0, 0, 0).unwrap()))
        );
    }
}
