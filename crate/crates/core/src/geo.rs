//! Great-circle geodesy and the move/stop rule.

use crate::model::{GeoPoint, MotionLabel};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Displacement between consecutive 5 s fixes below which the bus counts as stopped.
pub const STOP_MOVE_THRESHOLD_M: f64 = 15.0;

/// Haversine distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.latitude().to_radians();
    let lat2 = b.latitude().to_radians();
    let half_dlat = (lat2 - lat1) / 2.0;
    let half_dlon = (b.longitude() - a.longitude()).to_radians() / 2.0;

    let h = half_dlat.sin().powi(2) + lat1.cos() * lat2.cos() * half_dlon.sin().powi(2);
    // rounding can push h a hair past 1 for antipodal points
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Labels `current` as a stop when it lies less than 15 m from `previous`.
pub fn classify_motion(previous: GeoPoint, current: GeoPoint) -> MotionLabel {
    classify_motion_with(previous, current, STOP_MOVE_THRESHOLD_M)
}

/// Same rule with a configurable threshold. A distance equal to the threshold is a move.
pub fn classify_motion_with(previous: GeoPoint, current: GeoPoint, threshold_m: f64) -> MotionLabel {
    if great_circle_distance(previous, current) < threshold_m {
        MotionLabel::Stop
    } else {
        MotionLabel::Move
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// Spherical law of cosines, an independent route to the same distance.
    fn law_of_cosines(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.latitude().to_radians(), b.latitude().to_radians());
        let dl = (b.longitude() - a.longitude()).to_radians();
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        EARTH_RADIUS_M * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn identical_points_are_zero_apart() {
        let p = pt(46.0878, -64.7782);
        assert_eq!(great_circle_distance(p, p), 0.0);
        assert_eq!(classify_motion(p, p), MotionLabel::Stop);
    }

    #[test]
    fn thousandth_of_a_degree_of_latitude() {
        let a = pt(46.0878, -64.7782);
        let b = pt(46.0888, -64.7782);
        let d = great_circle_distance(a, b);
        // law of cosines gives 111.1949 m for this pair
        assert!((law_of_cosines(a, b) - 111.19).abs() < 0.05);
        assert!((d - 111.19).abs() < 0.05, "{d}");
        assert_eq!(classify_motion(a, b), MotionLabel::Move);
    }

    #[test]
    fn antipodes_do_not_produce_nan() {
        let d = great_circle_distance(pt(0.0, 0.0), pt(0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-3);
    }

    #[test]
    fn threshold_is_strict_less_than() {
        let a = pt(46.0, -64.0);
        let b = pt(46.0001, -64.0);
        let d = great_circle_distance(a, b);
        assert_eq!(classify_motion_with(a, b, d), MotionLabel::Move);
        assert_eq!(classify_motion_with(a, b, d + 1e-9), MotionLabel::Stop);
    }

    fn city_point() -> impl Strategy<Value = GeoPoint> {
        // a ~50 km box around Moncton
        (45.9f64..46.35, -65.1f64..-64.45).prop_map(|(lat, lon)| pt(lat, lon))
    }

    proptest! {
        #[test]
        fn symmetric(a in city_point(), b in city_point()) {
            prop_assert_eq!(great_circle_distance(a, b), great_circle_distance(b, a));
        }

        #[test]
        fn matches_law_of_cosines(a in city_point(), b in city_point()) {
            let d = great_circle_distance(a, b);
            let oracle = law_of_cosines(a, b);
            prop_assume!(oracle > 1.0);
            prop_assert!((d - oracle).abs() <= 0.005 * oracle);
        }

        #[test]
        fn triangle_inequality(a in city_point(), b in city_point(), c in city_point()) {
            let ab = great_circle_distance(a, b);
            let bc = great_circle_distance(b, c);
            let ac = great_circle_distance(a, c);
            prop_assert!(ac <= ab + bc + 1e-6);
        }

        #[test]
        fn move_is_monotone_along_meridian(lat in 45.9f64..46.3, d1 in 0.0f64..40.0, extra in 0.0f64..40.0) {
            let a = pt(lat, -64.8);
            let deg = |m: f64| (m / EARTH_RADIUS_M).to_degrees();
            let near = pt(lat + deg(d1), -64.8);
            let far = pt(lat + deg(d1 + extra + 1e-6), -64.8);
            if classify_motion(a, near) == MotionLabel::Move {
                prop_assert_eq!(classify_motion(a, far), MotionLabel::Move);
            }
        }
    }
}
