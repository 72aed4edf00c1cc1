//! Plane projective transforms of pixel coordinates.

use nalgebra::{Matrix3, Vector3};

use crate::imagery::PixelCoord;
use crate::synth::SynthError;

/// Minimum |det| below which a transform is rejected as degenerate.
pub const MIN_DETERMINANT: f64 = 1e-9;

/// A 3×3 projective transform acting on homogeneous pixel coordinates,
/// normalized so the bottom-right entry is 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Homography {
    matrix: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self::from_matrix(Matrix3::identity()).expect("identity is invertible")
    }

    /// Builds from a raw matrix, normalizing the bottom-right entry to 1.
    /// Rejects non-invertible matrices.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, SynthError> {
        let det = m.determinant();
        if det.abs() <= MIN_DETERMINANT {
            return Err(SynthError::DegenerateTransform { det });
        }
        let h22 = m[(2, 2)];
        if h22.abs() <= MIN_DETERMINANT {
            return Err(SynthError::DegenerateTransform { det: h22 });
        }
        let n = m / h22;
        let mut matrix = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                matrix[r][c] = n[(r, c)];
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.matrix[r][c])
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.matrix
    }

    /// Applies the transform to a pixel coordinate.
    pub fn apply(&self, p: PixelCoord) -> PixelCoord {
        let v = self.matrix() * Vector3::new(p.x, p.y, 1.0);
        PixelCoord::new(v.x / v.z, v.y / v.z)
    }

    pub fn inverse(&self) -> Homography {
        let inv = self
            .matrix()
            .try_inverse()
            .expect("invertibility checked at construction");
        Homography::from_matrix(inv).expect("inverse of invertible matrix is invertible")
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography, SynthError> {
        Homography::from_matrix(self.matrix() * other.matrix())
    }
}

/// Builds a similarity-plus-perspective transform about `center`:
/// rotate by `rotation_deg`, scale by `scale`, add the perspective row
/// entries, all relative to `center`, then translate by `translation`.
pub fn compose_homography(
    rotation_deg: f64,
    scale: f64,
    translation: (f64, f64),
    perspective: (f64, f64),
    center: (f64, f64),
) -> Result<Homography, SynthError> {
    if scale <= 0.0 {
        return Err(SynthError::InvalidMotion {
            reason: format!("scale must be positive, got {scale}"),
        });
    }
    let th = rotation_deg.to_radians();
    let (s, c) = (th.sin(), th.cos());
    #[rustfmt::skip]
    let core = Matrix3::new(
        scale * c, -scale * s, 0.0,
        scale * s,  scale * c, 0.0,
        perspective.0, perspective.1, 1.0,
    );
    let to_center = Matrix3::new(1.0, 0.0, -center.0, 0.0, 1.0, -center.1, 0.0, 0.0, 1.0);
    let back = Matrix3::new(
        1.0,
        0.0,
        center.0 + translation.0,
        0.0,
        1.0,
        center.1 + translation.1,
        0.0,
        0.0,
        1.0,
    );
    Homography::from_matrix(back * core * to_center)
}
