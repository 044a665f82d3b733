//! Great-circle distance on the WGS84 mean-radius sphere.

/// Mean Earth radius in kilometres (IUGG mean radius R1).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Haversine distance in kilometres between two (lat, lon) points in degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Planar Euclidean distance treating (lat, lon) degrees as x/y coordinates.
///
/// This is the cost the assignment stage uses; trip-length evaluation uses
/// [`haversine_km`] instead.
pub fn planar_deg(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    ((lat1 - lat2).powi(2) + (lon1 - lon2).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_at_same_point() {
        assert_eq!(haversine_km(-27.47, 153.02, -27.47, 153.02), 0.0);
    }

    #[test]
    fn one_degree_longitude_on_equator() {
        let d = haversine_km(0.0, 0.0, 0.0, 1.0);
        assert!((d - 111.19508).abs() < 1e-3, "got {d}");
    }

    #[test]
    fn symmetric() {
        let a = haversine_km(-27.4, 153.0, -27.6, 152.8);
        let b = haversine_km(-27.6, 152.8, -27.4, 153.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn planar_is_pythagorean() {
        assert!((planar_deg(0.0, 0.0, 3.0, 4.0) - 5.0).abs() < 1e-12);
    }
}
