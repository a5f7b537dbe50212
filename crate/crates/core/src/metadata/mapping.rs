use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Dialect, Field, FieldValue, SourceMetadataDocument, UnifiedMetadata};
use crate::error::{Error, Result};

/// Source key to unified field table for one dialect.
///
/// Mappings are plain data, so a new dialect can be loaded from JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub dialect: String,
    pub pairs: Vec<(String, Field)>,
}

const LANDSAT_MTL: &[(&str, Field)] = &[
    ("LANDSAT_PRODUCT_ID", Field::ImageName),
    ("SPACECRAFT_ID", Field::SatelliteId),
    ("SENSOR_ID", Field::SensorId),
    ("FILE_DATE", Field::ReceiveTime),
    ("DATUM", Field::ReferenceSystemId),
    ("START_TIME", Field::TimeBegin),
    ("STOP_TIME", Field::TimeEnd),
    ("DATA_TYPE", Field::ProductLevel),
    ("OUTPUT_FORMAT", Field::ProductFormat),
    ("GRID_CELL_SIZE_REFLECTIVE", Field::SpatialResolution),
    ("PROCESSING_LEVEL", Field::ProcessingLevel),
    ("CORNER_UL_LAT_PRODUCT", Field::TopLeftLat),
    ("CORNER_UL_LON_PRODUCT", Field::TopLeftLon),
    ("CORNER_UR_LAT_PRODUCT", Field::TopRightLat),
    ("CORNER_UR_LON_PRODUCT", Field::TopRightLon),
    ("CORNER_LR_LAT_PRODUCT", Field::BottomRightLat),
    ("CORNER_LR_LON_PRODUCT", Field::BottomRightLon),
    ("CORNER_LL_LAT_PRODUCT", Field::BottomLeftLat),
    ("CORNER_LL_LON_PRODUCT", Field::BottomLeftLon),
    ("WRS_ROW", Field::SceneRow),
    ("CLOUD_COVER", Field::CloudPercent),
    ("ORIGIN", Field::DataProvider),
];

const ZY3_KV: &[(&str, Field)] = &[
    ("ImageName", Field::ImageName),
    ("Satellite-ID", Field::SatelliteId),
    ("Sensor-ID", Field::SensorId),
    ("ReceiveTime", Field::ReceiveTime),
    ("ReferenceSystemID", Field::ReferenceSystemId),
    ("Time-beginposition", Field::TimeBegin),
    ("Time-endposition", Field::TimeEnd),
    ("ProductLevel", Field::ProductLevel),
    ("ProductFormat", Field::ProductFormat),
    ("SpatialResolution", Field::SpatialResolution),
    ("ProcessingLevel", Field::ProcessingLevel),
    ("CenterLongitude", Field::CenterLon),
    ("CenterLatitude", Field::CenterLat),
    ("TopLeftLatitude", Field::TopLeftLat),
    ("TopLeftLongitude", Field::TopLeftLon),
    ("TopRightLatitude", Field::TopRightLat),
    ("TopRightLongitude", Field::TopRightLon),
    ("BottomRightLatitude", Field::BottomRightLat),
    ("BottomRightLongitude", Field::BottomRightLon),
    ("BottomLeftLatitude", Field::BottomLeftLat),
    ("BottomLeftLongitude", Field::BottomLeftLon),
    ("FilePath", Field::FilePath),
    ("SceneRow", Field::SceneRow),
    ("CloudPercent", Field::CloudPercent),
    ("DataLink", Field::DataLink),
    ("DataProvider", Field::DataProvider),
    ("DataOwner", Field::DataOwner),
];

impl FieldMapping {
    pub fn new(dialect: impl Into<String>, pairs: Vec<(String, Field)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (_, field) in &pairs {
            if !seen.insert(*field) {
                return Err(Error::Schema(format!("field {} mapped twice", field.name())));
            }
            if matches!(field, Field::Creation | Field::LastUpdate) {
                return Err(Error::Schema(format!("{} is set by normalization", field.name())));
            }
        }
        Ok(FieldMapping { dialect: dialect.into(), pairs })
    }

    pub fn builtin(dialect: Dialect) -> Self {
        let table = match dialect {
            Dialect::LandsatMtl => LANDSAT_MTL,
            Dialect::Zy3Kv => ZY3_KV,
        };
        FieldMapping {
            dialect: dialect.name().to_owned(),
            pairs: table.iter().map(|(k, f)| (k.to_string(), *f)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FieldMapping = serde_json::from_str(text)?;
        FieldMapping::new(raw.dialect, raw.pairs)
    }

    /// Unified fields this mapping can fill.
    pub fn fields(&self) -> BTreeSet<Field> {
        self.pairs.iter().map(|(_, f)| *f).collect()
    }

    /// Applies the mapping, stamping `now` as creation and last update.
    pub fn apply(&self, doc: &SourceMetadataDocument, now: DateTime<Utc>) -> Result<UnifiedMetadata> {
        let mut record = UnifiedMetadata::empty(now);
        let mut filled = BTreeSet::new();
        for (key, field) in &self.pairs {
            let Some(raw) = doc.get(key).filter(|v| !v.trim().is_empty()) else { continue };
            let value = FieldValue::parse(field.kind(), raw).ok_or_else(|| {
                Error::format(format!("{key} = {raw:?} is not a valid {}", field.name()))
            })?;
            record.set(*field, value)?;
            filled.insert(*field);
        }
        let missing: Vec<String> = Field::REQUIRED
            .iter()
            .filter(|f| !filled.contains(f))
            .map(|f| f.name().to_owned())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingFields { missing });
        }
        Ok(record)
    }
}

/// Normalizes with the dialect's built-in mapping, stamped with the current time.
pub fn normalize(doc: &SourceMetadataDocument) -> Result<UnifiedMetadata> {
    normalize_at(doc, Utc::now())
}

pub fn normalize_at(doc: &SourceMetadataDocument, now: DateTime<Utc>) -> Result<UnifiedMetadata> {
    FieldMapping::builtin(doc.dialect).apply(doc, now)
}
