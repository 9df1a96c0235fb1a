use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::depth::{DepthMap, RgbImage, MAX_DEPTH_MM};
use crate::{Error, Result};

/// Parameters of one procedurally generated room-like scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// 1 = back wall, 2 adds a floor, 3 and 4 add side walls.
    pub planes: usize,
    pub spheres: usize,
    pub boxes: usize,
    /// `[near, far]` in millimeters.
    pub depth_range: [f64; 2],
    /// Camera translation in millimeters.
    #[serde(default)]
    pub camera: [f64; 3],
    /// Standard deviation of per-pixel RGB noise.
    #[serde(default = "default_rgb_noise")]
    pub rgb_noise: f64,
}

fn default_rgb_noise() -> f64 {
    0.01
}

impl SceneSpec {
    pub fn new(seed: u64, width: usize, height: usize) -> Self {
        Self {
            seed,
            width,
            height,
            planes: 2,
            spheres: 2,
            boxes: 2,
            depth_range: [500.0, MAX_DEPTH_MM],
            camera: [0.0; 3],
            rgb_noise: default_rgb_noise(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Texture {
    Flat,
    /// Checkerboard with the given period in millimeters.
    Checker(f64),
    /// Stripes along x with the given period in millimeters.
    Stripes(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Points `p` with `normal · p = offset`; `normal` is unit length.
    Plane { normal: [f64; 3], offset: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis-aligned box.
    Cuboid { min: [f64; 3], max: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub albedo: [f64; 3],
    pub texture: Texture,
}

/// Explicit primitive list; camera at the origin looking along +z with
/// +y pointing down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    /// Focal length as a multiple of the image width.
    pub focal_scale: f64,
}

pub const DEFAULT_FOCAL_SCALE: f64 = 0.9;

/// Closest the back wall comes to the far limit, millimeters.
pub const BACK_MARGIN: f64 = 250.0;
const LIGHT: [f64; 3] = [-0.35, -0.6, -0.72];

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let l = dot(a, a).sqrt();
    [a[0] / l, a[1] / l, a[2] / l]
}

/// Ray parameter and surface normal of the nearest hit of `origin + t·dir`.
fn intersect(shape: &Shape, origin: [f64; 3], dir: [f64; 3]) -> Option<(f64, [f64; 3])> {
    match *shape {
        Shape::Plane { normal, offset } => {
            let denom = dot(normal, dir);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = (offset - dot(normal, origin)) / denom;
            let n = if denom > 0.0 { normal.map(|v| -v) } else { normal };
            (t > 0.0).then_some((t, n))
        }
        Shape::Sphere { center, radius } => {
            let oc = sub(center, origin);
            let a = dot(dir, dir);
            let b = dot(dir, oc);
            let disc = b * b - a * (dot(oc, oc) - radius * radius);
            if disc < 0.0 {
                return None;
            }
            let t = (b - disc.sqrt()) / a;
            if t <= 0.0 {
                return None;
            }
            let p = [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]];
            Some((t, unit(sub(p, center))))
        }
        Shape::Cuboid { min, max } => {
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut axis = 0;
            for k in 0..3 {
                if dir[k].abs() < 1e-12 {
                    if origin[k] < min[k] || origin[k] > max[k] {
                        return None;
                    }
                    continue;
                }
                let (mut a, mut b) = ((min[k] - origin[k]) / dir[k], (max[k] - origin[k]) / dir[k]);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                if a > t0 {
                    t0 = a;
                    axis = k;
                }
                t1 = t1.min(b);
            }
            if t0 > t1 || t0 <= 0.0 {
                return None;
            }
            let mut n = [0.0; 3];
            n[axis] = -dir[axis].signum();
            Some((t0, n))
        }
    }
}

fn texture_factor(tex: Texture, p: [f64; 3]) -> f64 {
    let cell = |v: f64, period: f64| (v / period).floor() as i64;
    match tex {
        Texture::Flat => 1.0,
        Texture::Checker(period) => {
            if (cell(p[0], period) + cell(p[1], period) + cell(p[2], period)).rem_euclid(2) == 0 {
                1.0
            } else {
                0.7
            }
        }
        Texture::Stripes(period) => {
            if cell(p[0] + p[2], period).rem_euclid(2) == 0 {
                1.0
            } else {
                0.8
            }
        }
    }
}

impl Scene {
    /// Ray-casts z-depth (millimeters) and Lambertian-shaded RGB. RGB noise
    /// is drawn from `noise_seed`.
    pub fn render(
        &self,
        width: usize,
        height: usize,
        camera: [f64; 3],
        rgb_noise: f64,
        noise_seed: u64,
    ) -> Result<(RgbImage, DepthMap)> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("render size {width}x{height}")));
        }
        if !(self.focal_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("focal scale {}", self.focal_scale)));
        }
        let f = self.focal_scale * width as f64;
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        let light = unit(LIGHT);
        let mut depth = vec![0.0; width * height];
        let mut rgb = vec![0.0; 3 * width * height];
        let plane = width * height;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = Normal::new(0.0, rgb_noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for y in 0..height {
            for x in 0..width {
                let dir = [(x as f64 + 0.5 - cx) / f, (y as f64 + 0.5 - cy) / f, 1.0];
                let hit = self
                    .primitives
                    .iter()
                    .filter_map(|p| intersect(&p.shape, camera, dir).map(|(t, n)| (t, n, p)))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                let i = y * width + x;
                let Some((t, n, prim)) = hit else {
                    continue;
                };
                // dir.z == 1, so the ray parameter is the z-depth
                depth[i] = t;
                let p = [camera[0] + t * dir[0], camera[1] + t * dir[1], camera[2] + t];
                let shade = 0.25 + 0.75 * dot(n, light).max(0.0);
                let tex = texture_factor(prim.texture, p);
                for c in 0..3 {
                    let jitter = if rgb_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    rgb[c * plane + i] = (prim.albedo[c] * tex * shade + jitter).clamp(0.0, 1.0);
                }
            }
        }
        Ok((RgbImage::new(width, height, rgb)?, DepthMap::new(width, height, depth)?))
    }

    /// Builds a random room from `spec`: a back wall, optional floor and
    /// side walls, then spheres and boxes placed inside the depth range.
    pub fn from_spec(spec: &SceneSpec) -> Result<Scene> {
        let [near, far] = spec.depth_range;
        if spec.width == 0 || spec.height == 0 {
            return Err(Error::InvalidArgument("scene resolution must be nonzero".into()));
        }
        if !(near > 0.0 && far > near + 1000.0 && far <= MAX_DEPTH_MM) {
            return Err(Error::InvalidArgument(format!("depth range [{near}, {far}]")));
        }
        if spec.planes == 0 || spec.planes > 4 {
            return Err(Error::InvalidArgument(format!("{} planes; need 1 to 4", spec.planes)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let f = DEFAULT_FOCAL_SCALE * spec.width as f64;
        // largest ray slopes, used to keep walls and floor beyond `near`
        let (sx, sy) = (spec.width as f64 / 2.0 / f, spec.height as f64 / 2.0 / f);
        let albedo = |rng: &mut ChaCha8Rng| [(); 3].map(|_| rng.random_range(0.2..0.9));
        let texture = |rng: &mut ChaCha8Rng| match rng.random_range(0..3) {
            0 => Texture::Flat,
            1 => Texture::Checker(rng.random_range(150.0..450.0)),
            _ => Texture::Stripes(rng.random_range(100.0..300.0)),
        };
        let mut prims = Vec::new();
        // margin so camera jitter keeps the back wall inside the range
        let lo = far.max(near + 1000.0) * 0.8;
        let back = rng.random_range(lo..(far - BACK_MARGIN).max(lo + 1.0).min(far));
        prims.push(Primitive {
            shape: Shape::Plane { normal: [0.0, 0.0, 1.0], offset: back },
            albedo: albedo(&mut rng),
            texture: texture(&mut rng),
        });
        // floor at y = +d, left wall at x = -d, right wall at x = +d; each
        // at least `near` away along the steepest ray that can reach it
        let walls = [([0.0, 1.0, 0.0], 1.0, sy), ([1.0, 0.0, 0.0], -1.0, sx), ([1.0, 0.0, 0.0], 1.0, sx)];
        for &(normal, sign, slope) in walls.iter().take(spec.planes - 1) {
            let dist = rng.random_range(1.2..2.0) * (near * slope).max(600.0);
            prims.push(Primitive {
                shape: Shape::Plane { normal, offset: sign * dist },
                albedo: albedo(&mut rng),
                texture: texture(&mut rng),
            });
        }
        let project = |rng: &mut ChaCha8Rng, z: f64| {
            let u = rng.random_range(-0.7..0.7) * sx * z;
            let v = rng.random_range(-0.6..0.6) * sy * z;
            (u, v)
        };
        for _ in 0..spec.spheres {
            let r = rng.random_range(120.0..400.0);
            let z = rng.random_range(near + r + 200.0..(back - r - 100.0).max(near + r + 201.0));
            let (x, y) = project(&mut rng, z);
            prims.push(Primitive {
                shape: Shape::Sphere { center: [x, y, z], radius: r },
                albedo: albedo(&mut rng),
                texture: Texture::Flat,
            });
        }
        for _ in 0..spec.boxes {
            let half = [(); 3].map(|_| rng.random_range(120.0..380.0));
            let z = rng.random_range(near + half[2] + 200.0..(back - half[2] - 100.0).max(near + half[2] + 201.0));
            let (x, y) = project(&mut rng, z);
            prims.push(Primitive {
                shape: Shape::Cuboid {
                    min: [x - half[0], y - half[1], z - half[2]],
                    max: [x + half[0], y + half[1], z + half[2]],
                },
                albedo: albedo(&mut rng),
                texture: texture(&mut rng),
            });
        }
        Ok(Scene {
            primitives: prims,
            focal_scale: DEFAULT_FOCAL_SCALE,
        })
    }
}

/// Clean depth and RGB for `spec`. Depth has no holes and lies within the
/// spec's depth range.
pub fn render_scene(spec: &SceneSpec) -> Result<(RgbImage, DepthMap)> {
    let scene = Scene::from_spec(spec)?;
    let cam_bits = spec.camera.map(f64::to_bits);
    let noise_seed = derive_seed(spec.seed, &[0x5eed, cam_bits[0], cam_bits[1], cam_bits[2]]);
    let (rgb, depth) = scene.render(spec.width, spec.height, spec.camera, spec.rgb_noise, noise_seed)?;
    let [near, far] = spec.depth_range;
    if let Some(bad) = depth.data().iter().find(|&&d| !(near - 1e-6..=far + 1e-6).contains(&d)) {
        return Err(Error::InvalidArgument(format!(
            "scene {} produced depth {bad} outside [{near}, {far}]",
            spec.seed
        )));
    }
    Ok((rgb, depth))
}
