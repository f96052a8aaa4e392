use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

/// `p(z) = origin + z·direction` for `z ∈ [near, far]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Result<Self> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("ray direction must be non-zero"));
        }
        Ok(Ray { origin, direction: direction / n })
    }

    pub fn at(&self, z: f64) -> Point3<f64> {
        self.origin + self.direction * z
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    /// `[-h, h]³`.
    pub fn cube(half: f64) -> Self {
        Aabb { min: Point3::new(-half, -half, -half), max: Point3::new(half, half, half) }
    }

    /// Slab test; returns the entry/exit depths with `exit > max(entry, 0)`.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            let o = ray.origin[a];
            let d = ray.direction[a];
            if d.abs() < 1e-300 {
                if o < self.min[a] || o > self.max[a] {
                    return None;
                }
                continue;
            }
            let (mut lo, mut hi) = ((self.min[a] - o) / d, (self.max[a] - o) / d);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        let t0 = t0.max(0.0);
        (t1 > t0).then_some((t0, t1))
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Pinhole camera. Camera space looks down `-Z` with `+Y` up and `+X` to
/// the right; `rotation` maps camera space to world space.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub position: Point3<f64>,
    pub rotation: Matrix3<f64>,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(position: Point3<f64>, rotation: Matrix3<f64>, focal: f64, width: usize, height: usize) -> Result<Self> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(Error::invalid(format!("focal length must be positive, got {focal}")));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(Error::invalid(format!("camera rotation is not orthonormal (error {err:e})")));
        }
        Ok(Camera { position, rotation, focal, width, height })
    }

    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3], focal: f64, width: usize, height: usize) -> Result<Self> {
        let eye = Point3::from(eye);
        let forward = Point3::from(target) - eye;
        if forward.norm() == 0.0 {
            return Err(Error::invalid("camera position and look-at target coincide"));
        }
        let forward = forward.normalize();
        let right = forward.cross(&Vector3::from(up));
        if right.norm() < 1e-12 {
            return Err(Error::invalid("camera up vector is parallel to the view direction"));
        }
        let right = right.normalize();
        let true_up = right.cross(&forward);
        let rotation = Matrix3::from_columns(&[right, true_up, -forward]);
        Camera::new(eye, rotation, focal, width, height)
    }

    pub fn forward(&self) -> Vector3<f64> {
        -self.rotation.column(2).into_owned()
    }

    /// Ray through the center of pixel `(x, y)`, `y` growing downwards.
    pub fn ray(&self, x: f64, y: f64) -> Ray {
        let d = Vector3::new(
            (x + 0.5 - self.width as f64 / 2.0) / self.focal,
            -(y + 0.5 - self.height as f64 / 2.0) / self.focal,
            -1.0,
        );
        Ray { origin: self.position, direction: (self.rotation * d).normalize() }
    }

    /// One ray per pixel, row-major.
    pub fn generate_rays(&self) -> Result<Vec<Ray>> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image has zero size"));
        }
        let mut rays = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                rays.push(self.ray(x as f64, y as f64));
            }
        }
        Ok(rays)
    }
}
