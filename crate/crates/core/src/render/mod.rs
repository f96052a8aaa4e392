//! Classical volume rendering: pinhole rays, depth sampling, alpha
//! compositing, whole-image rendering, image I/O and quality metrics.

mod camera;
mod composite;
mod image;
mod metrics;

pub use camera::{Aabb, Camera, Ray};
pub use composite::{composite, composite_grad, sample_depths, Composite, SampleMode, SampleSet};
pub use image::Image;
pub use metrics::{mse, psnr, ssim, LUMA_WEIGHTS, SSIM_WINDOW};

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};

/// Color and density returned by a radiance field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub color: [f64; 3],
    pub sigma: f64,
}

/// Anything that can be queried at a world point along a unit direction.
pub trait RadianceField: Sync {
    fn sample(&self, p: &Point3<f64>, dir: &Vector3<f64>) -> Result<FieldSample>;
}

impl<F> RadianceField for F
where
    F: Fn(&Point3<f64>, &Vector3<f64>) -> Result<FieldSample> + Sync,
{
    fn sample(&self, p: &Point3<f64>, dir: &Vector3<f64>) -> Result<FieldSample> {
        self(p, dir)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub samples: usize,
    pub mode: SampleMode,
    pub near: f64,
    pub far: f64,
    /// Rays are clipped to this box; rays missing it show the background.
    pub bounds: Option<Aabb>,
    pub background: [f64; 3],
    pub exec: Execution,
}

impl RenderOptions {
    pub fn new(samples: usize, near: f64, far: f64) -> Self {
        RenderOptions {
            samples,
            mode: SampleMode::Uniform,
            near,
            far,
            bounds: None,
            background: [0.0; 3],
            exec: Execution::Parallel,
        }
    }

    /// Near/far interval for `ray`, or `None` when it misses the bounds.
    pub fn interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        match &self.bounds {
            None => Some((self.near, self.far)),
            Some(b) => {
                let (t0, t1) = b.intersect(ray)?;
                let (t0, t1) = (t0.max(self.near), t1.min(self.far));
                (t1 > t0).then_some((t0, t1))
            }
        }
    }

    /// Sample set for `ray` with depths only; `None` when the ray misses.
    /// `stream` decorrelates stratified draws between rays.
    pub fn depths(&self, ray: &Ray, stream: u64) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let Some((near, far)) = self.interval(ray) else {
            return Ok(None);
        };
        let mode = match self.mode {
            SampleMode::Stratified { seed } => SampleMode::Stratified {
                seed: seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            },
            m => m,
        };
        let z = sample_depths(near, far, self.samples, mode)?;
        let deltas = SampleSet::spacings(&z, far);
        Ok(Some((z, deltas)))
    }
}

/// Renders one pixel's color and opacity.
pub fn render_ray(field: &dyn RadianceField, ray: &Ray, opts: &RenderOptions, stream: u64) -> Result<Composite> {
    let Some((depths, deltas)) = opts.depths(ray, stream)? else {
        return Ok(Composite { color: opts.background, opacity: 0.0 });
    };
    let mut colors = Vec::with_capacity(depths.len());
    let mut sigmas = Vec::with_capacity(depths.len());
    for &z in &depths {
        let s = field.sample(&ray.at(z), &ray.direction)?;
        colors.push(s.color);
        sigmas.push(s.sigma);
    }
    let set = SampleSet { depths, deltas, colors, sigmas };
    Ok(composite(&set).over(opts.background))
}

/// Ray per pixel → samples → field → composite. Pixels are independent,
/// so the parallel path produces exactly the sequential image.
pub fn render_image(field: &dyn RadianceField, camera: &Camera, opts: &RenderOptions) -> Result<Image> {
    let rays = camera.generate_rays()?;
    let width = camera.width;
    let pixels = exec::map_range(opts.exec, rays.len(), |i| {
        render_ray(field, &rays[i], opts, i as u64).map_err(|e| match e {
            Error::InvalidArgument(m) => {
                Error::InvalidArgument(format!("pixel ({}, {}): {m}", i % width, i / width))
            }
            other => other,
        })
    });
    let mut img = Image::new(camera.width, camera.height);
    for (i, px) in pixels.into_iter().enumerate() {
        img.set(i % width, i / width, px?.color);
    }
    Ok(img)
}
