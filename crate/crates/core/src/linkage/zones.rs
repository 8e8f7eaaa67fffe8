use std::path::Path;

use geojson::{feature::Id, Feature, FeatureCollection, GeoJson, Geometry, JsonObject, JsonValue, Value};

use super::{CensusZone, LandUse, LinkageError, RatioRecord};
use crate::geo::{project, unproject, GeoPoint, PlanarPoint, Polygon};

fn ring_from_positions(ring: &[Vec<f64>], origin: GeoPoint, zone: &str) -> Result<Vec<PlanarPoint>, LinkageError> {
    ring.iter()
        .map(|pos| {
            if pos.len() < 2 {
                return Err(LinkageError::Format(format!("zone {zone}: position with {} coordinates", pos.len())));
            }
            let p = GeoPoint::new(pos[0], pos[1])?;
            Ok(project(p, origin))
        })
        .collect()
}

fn count_property(props: &JsonObject, key: &str, zone: &str) -> Result<u64, LinkageError> {
    let v = props.get(key).ok_or_else(|| LinkageError::Format(format!("zone {zone}: missing property {key}")))?;
    if let Some(n) = v.as_u64() {
        return Ok(n);
    }
    match v.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 => Ok(f as u64),
        _ => Err(LinkageError::Format(format!("zone {zone}: {key} = {v} is not a non-negative count"))),
    }
}

fn zone_id_of(f: &Feature, index: usize) -> Result<String, LinkageError> {
    let from_props = f.properties.as_ref().and_then(|p| p.get("zone_id")).and_then(|v| match v {
        JsonValue::String(s) => Some(s.clone()),
        JsonValue::Number(n) => Some(n.to_string()),
        _ => None,
    });
    let from_id = f.id.as_ref().map(|id| match id {
        Id::String(s) => s.clone(),
        Id::Number(n) => n.to_string(),
    });
    from_props.or(from_id).ok_or_else(|| LinkageError::Format(format!("feature {index} has no zone_id")))
}

fn zone_from_feature(f: &Feature, index: usize, origin: GeoPoint) -> Result<CensusZone, LinkageError> {
    let id = zone_id_of(f, index)?;
    let geometry = f.geometry.as_ref().ok_or_else(|| LinkageError::Format(format!("zone {id}: no geometry")))?;
    let rings = match &geometry.value {
        Value::Polygon(rings) => rings,
        Value::MultiPolygon(parts) if parts.len() == 1 => &parts[0],
        other => {
            return Err(LinkageError::Format(format!(
                "zone {id}: expected a single Polygon, found {}",
                other.type_name()
            )))
        }
    };
    let (exterior, holes) = rings.split_first().ok_or_else(|| LinkageError::Format(format!("zone {id}: empty polygon")))?;
    let exterior = ring_from_positions(exterior, origin, &id)?;
    let holes = holes.iter().map(|h| ring_from_positions(h, origin, &id)).collect::<Result<Vec<_>, _>>()?;
    let polygon = Polygon::new(exterior, holes)?;
    let empty = JsonObject::new();
    let props = f.properties.as_ref().unwrap_or(&empty);
    let land_use = props.get("land_use").and_then(JsonValue::as_str).map(LandUse::parse).unwrap_or_default();
    CensusZone::new(
        id.clone(),
        polygon,
        count_property(props, "residents_total", &id)?,
        count_property(props, "residents_under11", &id)?,
        count_property(props, "residents_over80", &id)?,
        land_use,
    )
}

/// Census zones from a GeoJSON FeatureCollection in lon/lat, projected about `origin`.
pub fn parse_zones(text: &str, origin: GeoPoint) -> Result<Vec<CensusZone>, LinkageError> {
    let gj: GeoJson = text.parse().map_err(|e: geojson::Error| LinkageError::Format(e.to_string()))?;
    let fc = match gj {
        GeoJson::FeatureCollection(fc) => fc,
        _ => return Err(LinkageError::Format("expected a FeatureCollection".into())),
    };
    fc.features.iter().enumerate().map(|(i, f)| zone_from_feature(f, i, origin)).collect()
}

pub fn read_zones(path: &Path, origin: GeoPoint) -> Result<Vec<CensusZone>, LinkageError> {
    let text = std::fs::read_to_string(path).map_err(|source| LinkageError::Io { path: path.to_path_buf(), source })?;
    parse_zones(&text, origin)
}

fn ring_positions(ring: &[PlanarPoint], origin: GeoPoint) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = ring
        .iter()
        .map(|p| {
            let g = unproject(*p, origin);
            vec![g.lon, g.lat]
        })
        .collect();
    if let Some(first) = out.first().cloned() {
        out.push(first);
    }
    out
}

/// Zones back in lon/lat, with ratio properties when `records` (in zone order) is given.
pub fn zones_feature_collection(
    zones: &[CensusZone],
    origin: GeoPoint,
    records: Option<&[RatioRecord]>,
) -> Result<FeatureCollection, LinkageError> {
    if let Some(r) = records {
        if r.len() != zones.len() {
            return Err(LinkageError::Consistency(format!("{} records for {} zones", r.len(), zones.len())));
        }
    }
    let features = zones
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let rings = z.polygon.rings().map(|r| ring_positions(r, origin)).collect();
            let mut props = JsonObject::new();
            props.insert("zone_id".into(), z.zone_id.clone().into());
            props.insert("residents_total".into(), z.residents_total.into());
            props.insert("residents_under11".into(), z.residents_under11.into());
            props.insert("residents_over80".into(), z.residents_over80.into());
            props.insert("residents_filtered".into(), z.residents_filtered().into());
            props.insert("land_use".into(), z.land_use.as_str().into());
            if let Some(r) = records.map(|r| &r[i]) {
                props.insert("tim_users".into(), r.tim_users.into());
                props.insert("ratio".into(), r.ratio.map_or(JsonValue::Null, Into::into));
            }
            Feature {
                bbox: None,
                geometry: Some(Geometry::new(Value::Polygon(rings))),
                id: Some(Id::String(z.zone_id.clone())),
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    Ok(FeatureCollection { bbox: None, features, foreign_members: None })
}

pub fn write_zones_geojson(path: &Path, fc: &FeatureCollection) -> Result<(), LinkageError> {
    let text = serde_json::to_string_pretty(fc).map_err(|e| LinkageError::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| LinkageError::Io { path: path.to_path_buf(), source })
}
