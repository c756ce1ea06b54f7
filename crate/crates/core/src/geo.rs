//! Geographic primitives: validated coordinates, great-circle distance and a
//! local planar projection used for clustering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MI: f64 = 3958.8;

/// Miles per degree of latitude on the mean sphere.
pub const MILES_PER_DEGREE: f64 = 69.172;

/// Maximum latitude offset from the reference point accepted by the local projection.
pub const MAX_PROJECTION_SPAN_DEG: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("point at latitude {lat} is more than {MAX_PROJECTION_SPAN_DEG} degrees from reference latitude {ref_lat}")]
    OutOfRegion { lat: f64, ref_lat: f64 },
}

/// A point on the Earth in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::InvalidCoordinate { lat, lon });
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn distance_miles(&self, other: &GeoPoint) -> f64 {
        haversine_miles(*self, *other)
    }
}

impl std::fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.lat, self.lon)
    }
}

impl std::str::FromStr for GeoPoint {
    type Err = String;

    /// Parses `lat,lon`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lat, lon) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `lat,lon`, got `{s}`"))?;
        let lat: f64 = lat.trim().parse().map_err(|_| format!("bad latitude `{lat}`"))?;
        let lon: f64 = lon.trim().parse().map_err(|_| format!("bad longitude `{lon}`"))?;
        GeoPoint::new(lat, lon).map_err(|e| e.to_string())
    }
}

/// Great-circle distance in miles.
pub fn haversine_miles(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MI * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection of `p` about `reference`, in miles (x east, y north).
pub fn project_local_miles(p: GeoPoint, reference: GeoPoint) -> Result<(f64, f64), GeoError> {
    if (p.lat - reference.lat).abs() >= MAX_PROJECTION_SPAN_DEG {
        return Err(GeoError::OutOfRegion {
            lat: p.lat,
            ref_lat: reference.lat,
        });
    }
    let y = (p.lat - reference.lat) * MILES_PER_DEGREE;
    let x = (p.lon - reference.lon) * MILES_PER_DEGREE * reference.lat.to_radians().cos();
    Ok((x, y))
}

/// Inverse of [`project_local_miles`].
pub fn unproject_local_miles(xy: (f64, f64), reference: GeoPoint) -> Result<GeoPoint, GeoError> {
    let lat = reference.lat + xy.1 / MILES_PER_DEGREE;
    let cos = reference.lat.to_radians().cos();
    let lon = if cos.abs() < 1e-12 {
        reference.lon
    } else {
        reference.lon + xy.0 / (MILES_PER_DEGREE * cos)
    };
    GeoPoint::new(lat, lon)
}

/// Coordinate-wise mean of a nonempty set of points.
pub fn centroid(points: &[GeoPoint]) -> Option<GeoPoint> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;
    let lon = points.iter().map(|p| p.lon).sum::<f64>() / n;
    GeoPoint::new(lat, lon).ok()
}
