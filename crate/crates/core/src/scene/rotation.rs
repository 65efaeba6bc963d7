use super::{EventSpec, SceneAnnotation, SceneError};
use crate::features::MultichannelWave;
use crate::scalar::Scalar;
use crate::spatial::{CartesianDoa, SphericalDirection};

/// One of the sixteen direction-preserving FOA channel transforms: a yaw of
/// `quarter_turns * 90` degrees, optionally preceded by an azimuth reflection
/// (y to -y) and followed by an elevation flip (z to -z).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FoaRotation {
    pub quarter_turns: u8,
    pub reflect_azimuth: bool,
    pub flip_elevation: bool,
}

impl FoaRotation {
    pub const COUNT: u8 = 16;

    pub fn identity() -> Self {
        Self {
            quarter_turns: 0,
            reflect_azimuth: false,
            flip_elevation: false,
        }
    }

    pub fn from_id(id: u8) -> Result<Self, SceneError> {
        if id >= Self::COUNT {
            return Err(SceneError::InvalidRotation(id));
        }
        Ok(Self {
            quarter_turns: id % 4,
            reflect_azimuth: (id / 4) % 2 == 1,
            flip_elevation: id / 8 == 1,
        })
    }

    pub fn id(&self) -> u8 {
        self.quarter_turns % 4 + 4 * self.reflect_azimuth as u8 + 8 * self.flip_elevation as u8
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..Self::COUNT).map(|i| Self::from_id(i).expect("id in range"))
    }

    /// Image of a Cartesian vector.
    pub fn apply<T: Scalar>(&self, v: [T; 3]) -> [T; 3] {
        let [mut x, mut y, mut z] = v;
        if self.reflect_azimuth {
            y = -y;
        }
        for _ in 0..self.quarter_turns % 4 {
            let nx = -y;
            y = x;
            x = nx;
        }
        if self.flip_elevation {
            z = -z;
        }
        [x, y, z]
    }

    pub fn apply_doa<T: Scalar>(&self, d: &CartesianDoa<T>) -> CartesianDoa<T> {
        let [x, y, z] = self.apply([d.x, d.y, d.z]);
        CartesianDoa { x, y, z }
    }

    pub fn apply_direction(&self, d: &SphericalDirection<f64>) -> SphericalDirection<f64> {
        let c = self.apply_doa(&d.to_cartesian());
        SphericalDirection::from_cartesian(&c).unwrap_or(*d)
    }
}

/// Applies `rot` to the directional channels of an FOA wave and to every
/// event direction in its annotation. W is left untouched.
pub fn rotate_foa<T: Scalar>(
    wave: &MultichannelWave<T>,
    annotation: &SceneAnnotation,
    rot: FoaRotation,
) -> Result<(MultichannelWave<T>, SceneAnnotation), SceneError> {
    if wave.n_channels() != 4 {
        return Err(SceneError::Config(format!(
            "FOA rotation needs 4 channels, got {}",
            wave.n_channels()
        )));
    }
    let mut out = wave.clone();
    // channel order is W, Y, Z, X
    let (xs, ys, zs) = (wave.samples.row(3), wave.samples.row(1), wave.samples.row(2));
    for i in 0..wave.len() {
        let [x, y, z] = rot.apply([xs[i], ys[i], zs[i]]);
        out.samples[[3, i]] = x;
        out.samples[[1, i]] = y;
        out.samples[[2, i]] = z;
    }
    let events: Vec<EventSpec> = annotation
        .events
        .iter()
        .map(|e| EventSpec {
            direction: rot.apply_direction(&e.direction),
            ..e.clone()
        })
        .collect();
    Ok((out, SceneAnnotation::from_events(events, annotation.duration)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{spatialize, EventSource};
    use proptest::prelude::*;

    #[test]
    fn ids_round_trip_and_are_distinct() {
        let v = [0.3f64, -0.5, 0.7];
        let mut images = Vec::new();
        for r in FoaRotation::all() {
            assert_eq!(FoaRotation::from_id(r.id()).unwrap(), r);
            images.push(r.apply(v));
        }
        for i in 0..16 {
            for j in 0..i {
                assert_ne!(images[i], images[j]);
            }
        }
        assert!(matches!(FoaRotation::from_id(16), Err(SceneError::InvalidRotation(16))));
    }

    #[test]
    fn quarter_turn_moves_front_to_left() {
        let r = FoaRotation::from_id(1).unwrap();
        assert_eq!(r.apply([1.0f64, 0.0, 0.0]), [0.0, 1.0, 0.0]);
        let s = r.apply_direction(&SphericalDirection::new(10.0, 20.0));
        assert!((s.azimuth - 100.0).abs() < 1e-9 && (s.elevation - 20.0).abs() < 1e-9);
    }

    #[test]
    fn rotated_render_equals_render_of_rotated_event() {
        let e = EventSpec {
            class_id: 0,
            onset: 0.1,
            offset: 0.4,
            direction: SphericalDirection::new(-35.0, 25.0),
            source: EventSource::BandNoise {
                low_hz: 300.0,
                high_hz: 700.0,
                seed: 3,
            },
            gain: 0.9,
        };
        let wave = spatialize::<f64>(&e, 0.5, 8_000).unwrap();
        let ann = SceneAnnotation::from_events(vec![e.clone()], 0.5);
        for r in FoaRotation::all() {
            let (rw, ra) = rotate_foa(&wave, &ann, r).unwrap();
            let direct = spatialize::<f64>(&ra.events[0], 0.5, 8_000).unwrap();
            for (a, b) in rw.samples.iter().zip(direct.samples.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
            assert_eq!(ra.frame_labels.len(), ann.frame_labels.len());
            assert_eq!(rw.samples.row(0), wave.samples.row(0));
        }
    }

    proptest! {
        #[test]
        fn rotations_are_isometries(id in 0u8..16, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
                                    a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            let r = FoaRotation::from_id(id).unwrap();
            let (p, q) = (r.apply([x, y, z]), r.apply([a, b, c]));
            let dot = |u: [f64; 3], v: [f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
            prop_assert!((dot(p, q) - dot([x, y, z], [a, b, c])).abs() < 1e-12);
        }
    }
}
