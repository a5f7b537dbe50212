use bytes::Bytes;

use super::{Field, FieldValue, UnifiedMetadata};
use crate::error::{Error, Result};
use crate::store::{Cell, META_FAMILY};

/// Row key of a raster's metadata row.
pub fn metadata_row_key(raster_id: u16) -> [u8; 2] {
    raster_id.to_be_bytes()
}

/// One `(qualifier, value)` pair per present field, all under family `m`.
pub fn to_row(m: &UnifiedMetadata) -> Vec<(&'static str, Bytes)> {
    Field::ALL
        .iter()
        .filter_map(|&f| m.get(f).map(|v| (f.name(), Bytes::from(v.to_text()))))
        .collect()
}

/// Rebuilds a record from the family-`m` cells of a metadata row.
pub fn from_row(cells: &[Cell]) -> Result<UnifiedMetadata> {
    let mut record = UnifiedMetadata::empty(chrono::DateTime::UNIX_EPOCH);
    let mut seen = Vec::new();
    for cell in cells.iter().filter(|c| c.family == META_FAMILY) {
        let field = Field::from_name(&cell.qualifier)
            .ok_or_else(|| Error::format(format!("unknown metadata qualifier {:?}", cell.qualifier)))?;
        let text = std::str::from_utf8(&cell.value)
            .map_err(|_| Error::format(format!("{} is not UTF-8", field.name())))?;
        let value = FieldValue::parse(field.kind(), text)
            .ok_or_else(|| Error::format(format!("bad stored value for {}: {text:?}", field.name())))?;
        record.set(field, value)?;
        seen.push(field);
    }
    let required = Field::REQUIRED.iter().chain(&[Field::Creation, Field::LastUpdate]);
    let missing: Vec<&str> = required.filter(|f| !seen.contains(f)).map(|f| f.name()).collect();
    if !missing.is_empty() {
        return Err(Error::format(format!("metadata row lacks {}", missing.join(", "))));
    }
    Ok(record)
}
