use std::f32::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassId, PointCloud};

/// Surface primitive used to draw a class's instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    /// Vertical rectangular panel (or the ground plane for the floor class).
    Plane,
    Box,
    Sphere,
    Cylinder,
}

/// Appearance and geometry signature of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassShape {
    pub id: ClassId,
    pub name: String,
    pub kind: PrimitiveKind,
    /// Footprint width range (diameter for spheres and cylinders), meters.
    pub width: (f32, f32),
    /// Height range, meters; ignored for spheres.
    pub height: (f32, f32),
    pub color: [f32; 3],
    /// Per-instance uniform color offset bound.
    pub color_spread: f32,
    /// Per-point Gaussian color noise.
    pub color_noise: f32,
    /// Gaussian surface jitter, meters.
    pub jitter: f32,
}

#[allow(clippy::too_many_arguments)]
fn shape(
    id: ClassId,
    name: &str,
    kind: PrimitiveKind,
    width: (f32, f32),
    height: (f32, f32),
    color: [f32; 3],
) -> ClassShape {
    ClassShape {
        id,
        name: name.to_string(),
        kind,
        width,
        height,
        color,
        color_spread: 0.15,
        color_noise: 0.05,
        jitter: 0.01,
    }
}

/// Twelve classes: the floor plus eleven object classes.
pub fn default_vocabulary() -> Vec<ClassShape> {
    use PrimitiveKind::*;
    let mut floor = shape(0, "floor", Plane, (1.0, 1.0), (0.0, 0.0), [0.55, 0.5, 0.45]);
    floor.color_spread = 0.1;
    vec![
        floor,
        shape(1, "crate", Box, (0.25, 0.35), (0.2, 0.3), [0.75, 0.35, 0.2]),
        shape(2, "ball", Sphere, (0.2, 0.3), (0.0, 0.0), [0.2, 0.7, 0.25]),
        shape(
            3,
            "pillar",
            Cylinder,
            (0.12, 0.18),
            (0.5, 0.7),
            [0.2, 0.3, 0.8],
        ),
        shape(4, "board", Plane, (0.3, 0.4), (0.4, 0.6), [0.9, 0.85, 0.2]),
        shape(
            5,
            "cabinet",
            Box,
            (0.3, 0.4),
            (0.45, 0.6),
            [0.45, 0.45, 0.5],
        ),
        shape(
            6,
            "lamp",
            Sphere,
            (0.12, 0.18),
            (0.0, 0.0),
            [0.95, 0.55, 0.1],
        ),
        shape(
            7,
            "stool",
            Cylinder,
            (0.2, 0.26),
            (0.2, 0.3),
            [0.6, 0.2, 0.7],
        ),
        shape(8, "bin", Box, (0.18, 0.24), (0.3, 0.4), [0.2, 0.75, 0.8]),
        shape(9, "panel", Plane, (0.3, 0.4), (0.25, 0.4), [0.95, 0.5, 0.7]),
        shape(
            10,
            "globe",
            Sphere,
            (0.3, 0.38),
            (0.0, 0.0),
            [0.1, 0.5, 0.45],
        ),
        shape(
            11,
            "post",
            Cylinder,
            (0.1, 0.14),
            (0.6, 0.8),
            [0.5, 0.55, 0.15],
        ),
    ]
}

/// One placed object inside a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub class: ClassId,
    /// Contiguous point range in the scene's cloud.
    pub start: usize,
    pub end: usize,
    /// Axis-aligned bounds of the noise-free surface.
    pub lower: [f32; 3],
    pub upper: [f32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub instances: Vec<Instance>,
}

impl Scene {
    pub fn class_count(&self, class: ClassId) -> usize {
        self.cloud.labels().iter().filter(|&&l| l == class).count()
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.instances.iter().any(|i| i.class == class)
    }
}

pub const PLACEMENT_RETRIES: usize = 100;
const GAP: f32 = 0.02;

struct Sampler<'a, R: Rng> {
    rng: &'a mut R,
}

impl<R: Rng> Sampler<'_, R> {
    fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }
}

fn rotate_z(p: [f32; 3], angle: f32) -> [f32; 3] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

/// Uniform surface point of the primitive in its local frame (centered at
/// the origin in xy, resting on z = 0).
fn surface_point<R: Rng>(s: &mut Sampler<'_, R>, kind: PrimitiveKind, dims: [f32; 3]) -> [f32; 3] {
    let [w, d, h] = dims;
    match kind {
        PrimitiveKind::Plane => [s.uniform(-w / 2.0, w / 2.0), 0.0, s.uniform(0.0, h)],
        PrimitiveKind::Box => {
            // five faces (no bottom), area weighted
            let areas = [w * d, w * h, w * h, d * h, d * h];
            let total: f32 = areas.iter().sum();
            let mut pick = s.uniform(0.0, total);
            let mut face = 0;
            while face < 4 && pick >= areas[face] {
                pick -= areas[face];
                face += 1;
            }
            let (u, v) = (s.uniform(-0.5, 0.5), s.uniform(0.0, 1.0));
            match face {
                0 => [u * w, s.uniform(-0.5, 0.5) * d, h],
                1 => [u * w, -d / 2.0, v * h],
                2 => [u * w, d / 2.0, v * h],
                3 => [-w / 2.0, u * d, v * h],
                _ => [w / 2.0, u * d, v * h],
            }
        }
        PrimitiveKind::Sphere => {
            let r = w / 2.0;
            let z = s.uniform(-1.0, 1.0);
            let phi = s.uniform(0.0, 2.0 * PI);
            let rho = (1.0 - z * z).max(0.0).sqrt();
            [r * rho * phi.cos(), r * rho * phi.sin(), r + r * z]
        }
        PrimitiveKind::Cylinder => {
            let r = w / 2.0;
            let side = 2.0 * PI * r * h;
            let top = PI * r * r;
            let phi = s.uniform(0.0, 2.0 * PI);
            if s.uniform(0.0, side + top) < side {
                [r * phi.cos(), r * phi.sin(), s.uniform(0.0, h)]
            } else {
                let rho = r * s.uniform(0.0, 1.0).sqrt();
                [rho * phi.cos(), rho * phi.sin(), h]
            }
        }
    }
}

fn footprint_radius(kind: PrimitiveKind, dims: [f32; 3]) -> f32 {
    match kind {
        PrimitiveKind::Box => (dims[0] * dims[0] + dims[1] * dims[1]).sqrt() / 2.0,
        _ => dims[0] / 2.0,
    }
}

fn clamp_color(c: f32) -> f32 {
    c.clamp(0.0, 1.0)
}

/// Places `objects` without overlap on a 1m x 1m floor and samples `points`
/// surface points in total. The floor takes a fifth of the points; objects
/// share the rest evenly.
pub fn generate_scene<R: Rng>(
    floor: &ClassShape,
    objects: &[&ClassShape],
    points: usize,
    rng: &mut R,
) -> Result<Scene> {
    if points < objects.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{points} points cannot cover {} objects and a floor",
            objects.len()
        )));
    }
    let mut s = Sampler { rng };

    // placement first, so a failure consumes no point samples
    let mut placed: Vec<([f32; 2], f32, f32, [f32; 3])> = Vec::new();
    for obj in objects {
        let width = s.uniform(obj.width.0, obj.width.1);
        let dims = match obj.kind {
            PrimitiveKind::Box => [
                width,
                width * s.uniform(0.8, 1.2),
                s.uniform(obj.height.0, obj.height.1),
            ],
            PrimitiveKind::Sphere => [width, width, width],
            _ => [width, width, s.uniform(obj.height.0, obj.height.1)],
        };
        let radius = footprint_radius(obj.kind, dims);
        let lo = radius + GAP;
        let hi = 1.0 - radius - GAP;
        let mut spot = None;
        for _ in 0..PLACEMENT_RETRIES {
            let c = [s.uniform(lo, hi), s.uniform(lo, hi)];
            let free = placed.iter().all(|(pc, pr, _, _)| {
                let dx = pc[0] - c[0];
                let dy = pc[1] - c[1];
                (dx * dx + dy * dy).sqrt() >= pr + radius + GAP
            });
            if free {
                spot = Some(c);
                break;
            }
        }
        let center = spot.ok_or(Error::PlacementFailed(PLACEMENT_RETRIES))?;
        let angle = s.uniform(0.0, 2.0 * PI);
        placed.push((center, radius, angle, dims));
    }

    let floor_points = if objects.is_empty() {
        points
    } else {
        points / 5
    };
    let per_object = if objects.is_empty() {
        0
    } else {
        (points - floor_points) / objects.len()
    };

    let mut coords = Vec::with_capacity(points);
    let mut colors = Vec::with_capacity(points);
    let mut labels = Vec::with_capacity(points);
    let mut instances = Vec::with_capacity(objects.len());

    let draw_color = |s: &mut Sampler<'_, R>, shape: &ClassShape| -> [f32; 3] {
        let mut c = shape.color;
        for v in &mut c {
            *v += s.uniform(-shape.color_spread, shape.color_spread);
        }
        c
    };

    let floor_color = draw_color(&mut s, floor);
    let floor_jitter = Normal::new(0.0f32, floor.jitter.max(1e-6)).expect("valid");
    let color_noise = Normal::new(0.0f32, floor.color_noise.max(1e-6)).expect("valid");
    for _ in 0..floor_points {
        coords.push([
            s.uniform(0.0, 1.0),
            s.uniform(0.0, 1.0),
            floor_jitter.sample(s.rng),
        ]);
        colors.push(floor_color.map(|c| clamp_color(c + color_noise.sample(s.rng))));
        labels.push(floor.id);
    }

    for (k, (obj, (center, _, angle, dims))) in objects.iter().zip(&placed).enumerate() {
        let count = if k + 1 == objects.len() {
            points - coords.len()
        } else {
            per_object
        };
        let base_color = draw_color(&mut s, obj);
        let jitter = Normal::new(0.0f32, obj.jitter.max(1e-6)).expect("valid");
        let color_noise = Normal::new(0.0f32, obj.color_noise.max(1e-6)).expect("valid");
        let start = coords.len();
        let mut lower = [f32::INFINITY; 3];
        let mut upper = [f32::NEG_INFINITY; 3];
        for _ in 0..count {
            let local = surface_point(&mut s, obj.kind, *dims);
            let r = rotate_z(local, *angle);
            let clean = [r[0] + center[0], r[1] + center[1], r[2]];
            for a in 0..3 {
                lower[a] = lower[a].min(clean[a]);
                upper[a] = upper[a].max(clean[a]);
            }
            coords.push([
                clean[0] + jitter.sample(s.rng),
                clean[1] + jitter.sample(s.rng),
                clean[2] + jitter.sample(s.rng),
            ]);
            colors.push(base_color.map(|c| clamp_color(c + color_noise.sample(s.rng))));
            labels.push(obj.id);
        }
        instances.push(Instance {
            class: obj.id,
            start,
            end: coords.len(),
            lower,
            upper,
        });
    }

    Ok(Scene {
        cloud: PointCloud::new(coords, colors, labels)?,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn floor_only_scene() {
        let vocab = default_vocabulary();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scene = generate_scene(&vocab[0], &[], 200, &mut rng).unwrap();
        assert_eq!(scene.cloud.len(), 200);
        assert!(scene.cloud.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let vocab = default_vocabulary();
        let objs = [&vocab[1], &vocab[3], &vocab[4]];
        let a = generate_scene(&vocab[0], &objs, 512, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_scene(&vocab[0], &objs, 512, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn box_points_stay_inside_inflated_bounds() {
        let vocab = default_vocabulary();
        let mut crate_shape = vocab[1].clone();
        crate_shape.width = (0.3, 0.3);
        crate_shape.height = (0.3, 0.3);
        let scene = generate_scene(
            &vocab[0],
            &[&crate_shape],
            512,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let inst = &scene.instances[0];
        let margin = 3.0 * crate_shape.jitter + 1e-6;
        for i in inst.start..inst.end {
            let p = scene.cloud.coords()[i];
            for a in 0..3 {
                assert!(p[a] >= inst.lower[a] - margin && p[a] <= inst.upper[a] + margin);
            }
        }
        // a 0.3 box rotated about z spans at most its diagonal
        let span = inst.upper[0] - inst.lower[0];
        assert!(span <= 0.3 * 1.2f32.hypot(1.0) + 1e-4);
        assert!((inst.upper[2] - 0.3).abs() < 1e-4);
    }

    #[test]
    fn objects_share_points_and_stay_in_block() {
        let vocab = default_vocabulary();
        let objs = [&vocab[2], &vocab[5], &vocab[7], &vocab[11]];
        let scene =
            generate_scene(&vocab[0], &objs, 512, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(scene.instances.len(), 4);
        for inst in &scene.instances {
            assert!(inst.end - inst.start >= 100);
            assert!(inst.lower[0] >= 0.0 && inst.upper[0] <= 1.0);
        }
    }

    #[test]
    fn impossible_placement_errors() {
        let vocab = default_vocabulary();
        let mut huge = vocab[5].clone();
        huge.width = (0.6, 0.6);
        let objs = [&huge, &huge];
        assert!(matches!(
            generate_scene(&vocab[0], &objs, 100, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::PlacementFailed(_))
        ));
    }
}
