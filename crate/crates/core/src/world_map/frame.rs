use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};

use crate::{Error, Result, Vec3};

/// Pinhole intrinsics in pixels. Camera axes: +x right, +y down, +z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Centered principal point with the given full fields of view (radians).
    pub fn from_fov(width: u32, height: u32, fov_x: f64, fov_y: f64) -> Self {
        let fx = width as f64 / 2.0 / (fov_x / 2.0).tan();
        let fy = height as f64 / 2.0 / (fov_y / 2.0).tan();
        Self {
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidFrame(format!("bad intrinsics {self:?}")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidFrame("zero-sized image".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Unit ray through the center of pixel `(u, v)`, camera frame.
    pub fn ray(&self, u: u32, v: u32) -> Vec3 {
        Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
        .normalize()
    }
}

/// Camera-to-world pose looking along `forward`. `up` only fixes the roll;
/// world +z is used unless `forward` is (anti)parallel to it, then +y.
pub fn look_at(position: Vec3, forward: &Vec3) -> Isometry3<f64> {
    let f = forward.normalize();
    let up = if f.z.abs() > 0.999 { Vec3::y() } else { Vec3::z() };
    let right = f.cross(&up).normalize();
    let down = f.cross(&right);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, f]));
    Isometry3::from_parts(
        Translation3::from(position),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

/// One posed RGB-D image. `depth` holds ray lengths (range) in metres;
/// zero or non-finite means no return.
#[derive(Debug, Clone)]
pub struct Frame {
    pub pose: Isometry3<f64>,
    pub intrinsics: Intrinsics,
    pub rgb: Vec<Vec3>,
    pub depth: Vec<f64>,
}

impl Frame {
    pub fn new(
        pose: Isometry3<f64>,
        intrinsics: Intrinsics,
        rgb: Vec<Vec3>,
        depth: Vec<f64>,
    ) -> Result<Self> {
        let frame = Self {
            pose,
            intrinsics,
            rgb,
            depth,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let n = self.intrinsics.pixel_count();
        if self.rgb.len() != n || self.depth.len() != n {
            return Err(Error::InvalidFrame(format!(
                "expected {n} pixels, got {} rgb / {} depth",
                self.rgb.len(),
                self.depth.len()
            )));
        }
        let r = self.pose.rotation.to_rotation_matrix();
        let err = (r.matrix().transpose() * r.matrix() - Matrix3::identity()).amax();
        if !(err <= 1e-6) || !self.pose.translation.vector.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidFrame("pose is not a rigid transform".into()));
        }
        Ok(())
    }

    pub fn camera_center(&self) -> Vec3 {
        self.pose.translation.vector
    }

    /// World-frame unit ray for pixel `(u, v)`.
    pub fn world_ray(&self, u: u32, v: u32) -> Vec3 {
        self.pose.rotation * self.intrinsics.ray(u, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_maps_optical_axis() {
        for f in [Vec3::x(), -Vec3::y(), Vec3::z(), -Vec3::z(), Vec3::new(1.0, 2.0, -0.5)] {
            let pose = look_at(Vec3::new(1.0, 2.0, 3.0), &f);
            let axis = pose.rotation * Vec3::z();
            assert!((axis - f.normalize()).norm() < 1e-12);
            assert_eq!(pose.translation.vector, Vec3::new(1.0, 2.0, 3.0));
        }
    }

    #[test]
    fn center_pixel_ray_is_optical_axis() {
        let k = Intrinsics::from_fov(64, 64, 60f64.to_radians(), 60f64.to_radians());
        let a = k.ray(31, 31);
        let b = k.ray(32, 32);
        assert!(((a + b) / 2.0).normalize().dot(&Vec3::z()) > 1.0 - 1e-12);
        // corner pixel stays inside the 30° half-FoV
        let c = k.ray(0, 0);
        assert!(c.x.abs() / c.z < 30f64.to_radians().tan());
    }

    #[test]
    fn rejects_mismatched_or_bad_frames() {
        let k = Intrinsics::from_fov(4, 4, 1.0, 1.0);
        let pose = look_at(Vec3::zeros(), &Vec3::x());
        assert!(Frame::new(pose, k, vec![Vec3::zeros(); 16], vec![0.0; 15]).is_err());
        let mut bad = k;
        bad.fx = f64::NAN;
        assert!(Frame::new(pose, bad, vec![Vec3::zeros(); 16], vec![0.0; 16]).is_err());
        assert!(Frame::new(pose, k, vec![Vec3::zeros(); 16], vec![0.0; 16]).is_ok());
    }
}
