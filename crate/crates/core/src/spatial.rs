//! Direction geometry: Cartesian DOAs, ACCDOA coupling, angular distance and
//! first-order ambisonic encoding gains.
//!
//! Frame convention: right-handed, x forward, y left, z up. Azimuth is measured
//! counter-clockwise from +x in the horizontal plane, elevation upward from it.
//! Angles are degrees at every public boundary.
//!
//! FOA channels use ACN order (W, Y, Z, X) with SN3D normalization.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("direction ({x}, {y}, {z}) is not unit length (norm {norm})")]
    InvalidDirection { x: f64, y: f64, z: f64, norm: f64 },
    #[error("activity {0} is outside [0, 1] or not finite")]
    InvalidActivity(f64),
}

/// Norms below this are treated as the zero vector when decoding.
pub const ZERO_NORM: f64 = 1e-8;

/// A Cartesian direction-of-arrival. Unit length whenever it describes an
/// active source; the type itself does not enforce it so that raw network
/// outputs and intermediate sums can be carried around.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CartesianDoa<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> CartesianDoa<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - T::one()).abs() <= T::unit_tolerance()
    }

    /// Returns `None` for vectors shorter than [`ZERO_NORM`].
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n > T::of(ZERO_NORM) {
            Some(Self::new(self.x / n, self.y / n, self.z / n))
        } else {
            None
        }
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn cast<U: Scalar>(&self) -> CartesianDoa<U> {
        CartesianDoa::new(
            U::of(self.x.as_f64()),
            U::of(self.y.as_f64()),
            U::of(self.z.as_f64()),
        )
    }

    fn check_unit(&self) -> Result<(), SpatialError> {
        if self.is_unit() {
            Ok(())
        } else {
            Err(SpatialError::InvalidDirection {
                x: self.x.as_f64(),
                y: self.y.as_f64(),
                z: self.z.as_f64(),
                norm: self.norm().as_f64(),
            })
        }
    }
}

/// Activity-coupled Cartesian DOA: direction is the DOA, length is the activity.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AccdoaVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> AccdoaVector<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SphericalDirection<T> {
    /// Degrees in [-180, 180).
    pub azimuth: T,
    /// Degrees in [-90, 90].
    pub elevation: T,
}

impl<T: Scalar> SphericalDirection<T> {
    /// Builds a direction, wrapping azimuth into [-180, 180) and clamping
    /// elevation into [-90, 90].
    pub fn new(azimuth: T, elevation: T) -> Self {
        Self {
            azimuth: wrap_azimuth(azimuth),
            elevation: elevation.max(T::of(-90.0)).min(T::of(90.0)),
        }
    }

    pub fn to_cartesian(&self) -> CartesianDoa<T> {
        let az = self.azimuth.to_radians();
        let el = self.elevation.to_radians();
        CartesianDoa::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Converts a non-zero vector to angles; `None` for the zero vector.
    pub fn from_cartesian(doa: &CartesianDoa<T>) -> Option<Self> {
        let u = doa.normalized()?;
        let el = u.z.max(-T::one()).min(T::one()).asin().to_degrees();
        let az = u.y.atan2(u.x).to_degrees();
        Some(Self::new(az, el))
    }
}

/// Wraps an azimuth in degrees into [-180, 180).
pub fn wrap_azimuth<T: Scalar>(az: T) -> T {
    let full = T::of(360.0);
    let half = T::of(180.0);
    let mut a = (az + half) % full;
    if a < T::zero() {
        a += full;
    }
    let wrapped = a - half;
    if wrapped >= half {
        wrapped - full
    } else {
        wrapped
    }
}

pub fn encode_accdoa<T: Scalar>(
    activity: T,
    doa: &CartesianDoa<T>,
) -> Result<AccdoaVector<T>, SpatialError> {
    if !activity.is_finite() || activity < T::zero() || activity > T::one() {
        return Err(SpatialError::InvalidActivity(activity.as_f64()));
    }
    if activity > T::zero() {
        doa.check_unit()?;
    }
    Ok(AccdoaVector::new(activity * doa.x, activity * doa.y, activity * doa.z))
}

/// Splits an ACCDOA vector into activity (its length) and unit DOA. Vectors
/// shorter than [`ZERO_NORM`] decode to `(0, None)`.
pub fn decode_accdoa<T: Scalar>(p: &AccdoaVector<T>) -> (T, Option<CartesianDoa<T>>) {
    let a = p.norm();
    if a > T::of(ZERO_NORM) {
        (a, Some(CartesianDoa::new(p.x / a, p.y / a, p.z / a)))
    } else {
        (T::zero(), None)
    }
}

/// Great-circle distance in degrees between two unit directions.
pub fn angular_distance<T: Scalar>(
    a: &CartesianDoa<T>,
    b: &CartesianDoa<T>,
) -> Result<T, SpatialError> {
    a.check_unit()?;
    b.check_unit()?;
    Ok(angular_distance_unchecked(a, b))
}

pub(crate) fn angular_distance_unchecked<T: Scalar>(a: &CartesianDoa<T>, b: &CartesianDoa<T>) -> T {
    a.dot(b).max(-T::one()).min(T::one()).acos().to_degrees()
}

/// First-order real spherical-harmonic gains in ACN order (W, Y, Z, X), SN3D.
pub fn foa_gains<T: Scalar>(dir: &SphericalDirection<T>) -> [T; 4] {
    let az = dir.azimuth.to_radians();
    let el = dir.elevation.to_radians();
    [
        T::one(),
        az.sin() * el.cos(),
        el.sin(),
        az.cos() * el.cos(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(x: f64, y: f64, z: f64) -> CartesianDoa<f64> {
        CartesianDoa::new(x, y, z)
    }

    #[test]
    fn encode_examples() {
        let p = encode_accdoa(1.0, &unit(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(p.to_array(), [1.0, 0.0, 0.0]);
        let p = encode_accdoa(0.0, &unit(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(p.to_array(), [0.0, 0.0, 0.0]);
        let p = encode_accdoa(0.5, &unit(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(p.to_array(), [0.0, 0.0, 0.5]);
    }

    #[test]
    fn encode_rejects_non_unit_direction() {
        let err = encode_accdoa(0.7, &unit(1.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, SpatialError::InvalidDirection { .. }));
        // zero activity accepts any direction
        assert!(encode_accdoa(0.0, &unit(3.0, 0.0, 0.0)).is_ok());
        assert!(matches!(
            encode_accdoa(1.5, &unit(1.0, 0.0, 0.0)),
            Err(SpatialError::InvalidActivity(_))
        ));
    }

    #[test]
    fn decode_examples() {
        let (a, d) = decode_accdoa(&AccdoaVector::new(0.0, 0.0, 0.5));
        assert_eq!(a, 0.5);
        assert_eq!(d.unwrap().to_array(), [0.0, 0.0, 1.0]);

        let (a, d) = decode_accdoa(&AccdoaVector::<f64>::zero());
        assert_eq!(a, 0.0);
        assert!(d.is_none());

        let (a, d) = decode_accdoa(&AccdoaVector::new(0.6f64, 0.8, 0.0));
        assert!((a - 1.0).abs() < 1e-15);
        let d = d.unwrap();
        assert!((d.x - 0.6).abs() < 1e-15 && (d.y - 0.8).abs() < 1e-15);
    }

    #[test]
    fn angular_distance_examples() {
        let x = unit(1.0, 0.0, 0.0);
        assert_eq!(angular_distance(&x, &x).unwrap(), 0.0);
        assert!((angular_distance(&x, &unit(0.0, 1.0, 0.0)).unwrap() - 90.0).abs() < 1e-12);
        assert!((angular_distance(&x, &unit(-1.0, 0.0, 0.0)).unwrap() - 180.0).abs() < 1e-12);
        assert!(angular_distance(&x, &unit(2.0, 0.0, 0.0)).is_err());
    }

    // Real first-order spherical harmonics evaluated from their Cartesian
    // definitions: Y1,-1 ~ y, Y1,0 ~ z, Y1,1 ~ x with SN3D weight 1.
    fn sh_oracle(az_deg: f64, el_deg: f64) -> [f64; 4] {
        let d = SphericalDirection::new(az_deg, el_deg).to_cartesian();
        [1.0, d.y, d.z, d.x]
    }

    #[test]
    fn foa_gain_examples() {
        for (az, el, expected) in [
            (0.0, 0.0, [1.0, 0.0, 0.0, 1.0]),
            (90.0, 0.0, [1.0, 1.0, 0.0, 0.0]),
            (0.0, 90.0, [1.0, 0.0, 1.0, 0.0]),
        ] {
            let g = foa_gains(&SphericalDirection::new(az, el));
            let o = sh_oracle(az, el);
            for i in 0..4 {
                assert!((g[i] - expected[i]).abs() < 1e-12, "{az} {el} {g:?}");
                assert!((g[i] - o[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn azimuth_wrapping() {
        assert_eq!(wrap_azimuth(180.0f64), -180.0);
        assert_eq!(wrap_azimuth(-180.0f64), -180.0);
        assert!((wrap_azimuth(270.0f64) + 90.0).abs() < 1e-12);
        assert!((wrap_azimuth(-190.0f64) - 170.0).abs() < 1e-12);
        assert!((wrap_azimuth(725.0f64) - 5.0).abs() < 1e-12);
    }

    fn arb_unit() -> impl Strategy<Value = CartesianDoa<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| CartesianDoa::new(x, y, z).normalized().unwrap())
    }

    proptest! {
        #[test]
        fn accdoa_round_trip(a in 1e-6f64..=1.0, r in arb_unit()) {
            let p = encode_accdoa(a, &r).unwrap();
            prop_assert!((p.norm() - a).abs() <= 4.0 * f64::EPSILON);
            let (a2, r2) = decode_accdoa(&p);
            let r2 = r2.unwrap();
            prop_assert!((a2 - a).abs() < 1e-6);
            prop_assert!((r2.x - r.x).abs() < 1e-6 && (r2.y - r.y).abs() < 1e-6 && (r2.z - r.z).abs() < 1e-6);
        }

        #[test]
        fn angular_distance_metric(a in arb_unit(), b in arb_unit(), c in arb_unit()) {
            let ab = angular_distance(&a, &b).unwrap();
            let ba = angular_distance(&b, &a).unwrap();
            let bc = angular_distance(&b, &c).unwrap();
            let ac = angular_distance(&a, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=180.0).contains(&ab));
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn foa_directional_energy_is_one(az in -180.0f64..180.0, el in -90.0f64..=90.0) {
            let g = foa_gains(&SphericalDirection::new(az, el));
            prop_assert!((g[1] * g[1] + g[2] * g[2] + g[3] * g[3] - 1.0).abs() < 1e-12);
            prop_assert_eq!(g[0], 1.0);
        }

        #[test]
        fn spherical_round_trip(az in -180.0f64..180.0, el in -89.0f64..=89.0) {
            let s = SphericalDirection::new(az, el);
            let back = SphericalDirection::from_cartesian(&s.to_cartesian()).unwrap();
            let daz = wrap_azimuth(back.azimuth - s.azimuth).abs();
            prop_assert!(daz < 1e-4, "az {} -> {}", s.azimuth, back.azimuth);
            prop_assert!((back.elevation - s.elevation).abs() < 1e-4);
        }
    }
}
