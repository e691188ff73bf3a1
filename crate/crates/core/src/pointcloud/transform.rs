use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::camera::{check_rotation, CameraPose};

/// `x -> scale * R * x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRecord", into = "TransformRecord")]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!(
                "scale must be positive, got {scale}"
            )));
        }
        check_rotation(&rotation)?;
        Ok(SimilarityTransform {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rt = self.rotation.transpose();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// Camera-to-world pose expressed in the transformed world. Scale moves the
    /// center but leaves orientation (and hence image projection) unchanged.
    pub fn apply_pose(&self, pose: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * pose.rotation,
            translation: self.scale * (self.rotation * pose.translation) + self.translation,
        }
    }

    /// Largest absolute difference across scale, rotation and translation entries.
    pub fn max_param_diff(&self, other: &SimilarityTransform) -> f64 {
        (self.scale - other.scale)
            .abs()
            .max((self.rotation - other.rotation).amax())
            .max((self.translation - other.translation).amax())
    }
}

/// JSON form: `{scale, R: row-major 9 floats, t: 3 floats}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub scale: f64,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<SimilarityTransform> for TransformRecord {
    fn from(s: SimilarityTransform) -> Self {
        TransformRecord {
            scale: s.scale,
            r: row_major(&s.rotation),
            t: [s.translation.x, s.translation.y, s.translation.z],
        }
    }
}

impl TryFrom<TransformRecord> for SimilarityTransform {
    type Error = Error;

    fn try_from(r: TransformRecord) -> Result<Self> {
        SimilarityTransform::new(
            r.scale,
            Matrix3::from_row_slice(&r.r),
            Vector3::from_column_slice(&r.t),
        )
    }
}

pub(crate) fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    [
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
        m[(2, 2)],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn sample() -> SimilarityTransform {
        SimilarityTransform::new(
            2.5,
            Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner(),
            Vector3::new(1.0, -2.0, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = sample();
        let id = t.compose(&t.inverse());
        assert!(id.max_param_diff(&SimilarityTransform::identity()) < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let t = sample();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"R\""));
        let back: SimilarityTransform = serde_json::from_str(&s).unwrap();
        assert!(back.max_param_diff(&t) < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_scale() {
        assert!(SimilarityTransform::new(0.0, Matrix3::identity(), Vector3::zeros()).is_err());
        let bad = r#"{"scale":-1,"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0]}"#;
        assert!(serde_json::from_str::<SimilarityTransform>(bad).is_err());
    }
}
