use nalgebra::{Rotation3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{assemble, cloud_diameter, FoldMode, GeneratorConfig, NoiseModel, SyntheticScene};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::graph::SimplicialGraph;

pub(super) const SHAPE_STREAM: u64 = 0;
pub(super) const OBSERVE_STREAM: u64 = 1;
pub(super) const EQUIAREAL_STREAM: u64 = 2;

pub(super) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Position along the bent profile at arc length `t`, walking from `t0`
/// with flat heading. Each fold `(center, angle)` turns the heading by
/// `angle` at constant curvature over `width` (a sharp hinge when zero).
fn profile(t: f64, t0: f64, folds: &[(f64, f64)], width: f64) -> (f64, f64) {
    let mut breaks: Vec<f64> = Vec::with_capacity(2 * folds.len() + 1);
    for &(c, _) in folds {
        breaks.push(c - 0.5 * width);
        breaks.push(c + 0.5 * width);
    }
    breaks.push(t);
    breaks.retain(|&b| b > t0 && b <= t);
    breaks.sort_by(f64::total_cmp);
    let (mut x, mut z, mut heading, mut cur) = (0.0, 0.0, 0.0f64, t0);
    for &b in &breaks {
        if b <= cur {
            continue;
        }
        let mid = 0.5 * (cur + b);
        let kappa: f64 = if width > 0.0 {
            folds.iter().filter(|&&(c, _)| (mid - c).abs() < 0.5 * width).map(|&(_, a)| a / width).sum()
        } else {
            0.0
        };
        let len = b - cur;
        if kappa.abs() < 1e-12 {
            x += len * heading.cos();
            z += len * heading.sin();
        } else {
            let end = heading + kappa * len;
            x += (end.sin() - heading.sin()) / kappa;
            z += (heading.cos() - end.cos()) / kappa;
            heading = end;
        }
        cur = b;
        if width == 0.0 {
            // hinge turns apply on leaving the fold line
            heading += folds.iter().filter(|&&(c, _)| c == b && b < t).map(|&(_, a)| a).sum::<f64>();
        }
    }
    (x + t0, z)
}

fn bend(template: &[Vector3<f64>], cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> PointCloud {
    let (u, w, positions): (Vector3<f64>, Vector3<f64>, Vec<f64>) = match cfg.fold_mode {
        FoldMode::Random => {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let u = Vector3::new(phi.cos(), phi.sin(), 0.0);
            let w = Vector3::new(-phi.sin(), phi.cos(), 0.0);
            let ts: Vec<f64> = template.iter().map(|p| p.dot(&w)).collect();
            let (lo, hi) = ts.iter().fold((f64::MAX, f64::MIN), |(a, b), &t| (a.min(t), b.max(t)));
            let pos = (0..cfg.folds).map(|_| rng.random_range(lo..hi)).collect();
            (u, w, pos)
        }
        FoldMode::GraphAligned => {
            let along_x = rng.random_bool(0.5);
            let (count, u, w) = if along_x {
                (cfg.m_a, Vector3::y(), Vector3::x())
            } else {
                (cfg.m_b, Vector3::x(), Vector3::y())
            };
            let c = (count - 1) as f64 / 2.0;
            let lines: Vec<f64> = (1..count - 1).map(|k| (k as f64 - c) * cfg.spacing).collect();
            let take = cfg.folds.min(lines.len());
            let pos = sample(rng, lines.len(), take).into_iter().map(|k| lines[k]).collect();
            (u, w, pos)
        }
    };
    let mut folds: Vec<(f64, f64)> =
        positions.into_iter().map(|t| (t, rng.random_range(-cfg.max_bend..=cfg.max_bend))).collect();
    folds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let width = match cfg.fold_mode {
        FoldMode::Random => cfg.bend_width * cfg.spacing,
        FoldMode::GraphAligned => 0.0,
    };
    let t0 = template.iter().map(|p| p.dot(&w)).fold(f64::MAX, f64::min);
    let mut out: PointCloud = template
        .iter()
        .map(|p| {
            let (x, z) = profile(p.dot(&w), t0, &folds, width);
            u * p.dot(&u) + w * x + Vector3::z() * z
        })
        .collect();
    let centroid = out.iter().sum::<Vector3<f64>>() / out.len() as f64;
    out.iter_mut().for_each(|p| *p -= centroid);
    out
}

fn pose(shape: &[Vector3<f64>], cfg: &GeneratorConfig, diameter: f64, rng: &mut ChaCha8Rng) -> Result<PointCloud> {
    let depth = cfg.depth_ratio * diameter;
    let r = cfg.rotation_range;
    let l = cfg.lateral_range * diameter;
    for _ in 0..50 {
        let angle = |rng: &mut ChaCha8Rng| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let (rx, ry, rz) = (angle(rng), angle(rng), angle(rng));
        let rot = Rotation3::from_euler_angles(rx, ry, rz);
        let offset = |rng: &mut ChaCha8Rng| if l > 0.0 { rng.random_range(-l..=l) } else { 0.0 };
        let t = Vector3::new(offset(rng), offset(rng), depth);
        let cloud: PointCloud = shape.iter().map(|p| rot * p + t).collect();
        if cloud.iter().all(|p| p.z > 0.05 * depth) {
            return Ok(cloud);
        }
    }
    Err(Error::Generation("could not place the surface in front of the camera".into()))
}

/// Bent and posed clouds, one per image.
pub(super) fn isometric_clouds(cfg: &GeneratorConfig, template: &[Vector3<f64>]) -> Result<Vec<PointCloud>> {
    let mut rng = stream(cfg.seed, SHAPE_STREAM);
    let diameter = cloud_diameter(template);
    (0..cfg.n)
        .map(|_| {
            let shape = bend(template, cfg, &mut rng);
            pose(&shape, cfg, diameter, &mut rng)
        })
        .collect()
}

/// Noisy pixel observations and the visibility mask.
pub(super) fn observe(cfg: &GeneratorConfig, clouds: &[PointCloud]) -> Result<(Vec<Vec<Vector2<f64>>>, Vec<Vec<bool>>)> {
    let mut rng = stream(cfg.seed, OBSERVE_STREAM);
    let m = cfg.m();
    let mut pixels = Vec::with_capacity(clouds.len());
    for (i, c) in clouds.iter().enumerate() {
        let mut row = Vec::with_capacity(m);
        for (j, p) in c.iter().enumerate() {
            if !(p.z > 0.0) {
                return Err(Error::Generation(format!("point {j} of image {i} is behind the camera")));
            }
            let mut px = cfg.camera.to_pixel(p);
            for k in 0..2 {
                let e: f64 = match cfg.noise {
                    NoiseModel::Uniform => rng.random_range(-0.5..0.5),
                    NoiseModel::Gaussian => rng.sample(StandardNormal),
                };
                px[k] += cfg.x_sigma * e;
            }
            row.push(px);
        }
        pixels.push(row);
    }
    let hidden = (cfg.hide_fraction * m as f64).round() as usize;
    let mut visibility = vec![vec![true; m]; clouds.len()];
    for i in 1..clouds.len() {
        for j in sample(&mut rng, m, hidden.min(m)) {
            visibility[i][j] = false;
            pixels[i][j] = Vector2::zeros();
        }
    }
    Ok((pixels, visibility))
}

/// Bent-grid scene: every image is an isometric deformation of the flat
/// template, posed in front of the camera and observed with pixel noise.
pub fn generate_isometric(cfg: &GeneratorConfig, graph: Option<&SimplicialGraph>) -> Result<SyntheticScene> {
    cfg.validate()?;
    let template = cfg.template();
    let graph = match graph {
        Some(g) if g.m != cfg.m() => {
            return Err(Error::Config(format!("graph has {} vertices, grid has {}", g.m, cfg.m())));
        }
        Some(g) => g.clone(),
        None => cfg.template_graph()?,
    };
    let clouds = isometric_clouds(cfg, &template)?;
    let (pixels, visibility) = observe(cfg, &clouds)?;
    assemble(cfg, template, clouds, pixels, visibility, graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_preserves_arc_length() {
        let folds = [(-0.5, 0.4), (0.7, -0.9)];
        let ts = [-1.5, -1.0, -0.5, 0.0, 0.7, 1.2, 2.0];
        let pts: Vec<(f64, f64)> = ts.iter().map(|&t| profile(t, -1.5, &folds, 0.0)).collect();
        for k in 1..ts.len() {
            let segment = (ts[k] - ts[k - 1]).abs();
            let chord = ((pts[k].0 - pts[k - 1].0).powi(2) + (pts[k].1 - pts[k - 1].1).powi(2)).sqrt();
            assert!((segment - chord).abs() < 1e-12, "{k}: {segment} vs {chord}");
        }
        // finely sampled smooth profile: summed chords approach the arc length
        let fine: Vec<f64> = (0..=3500).map(|k| -1.5 + k as f64 * 1e-3).collect();
        let pts: Vec<(f64, f64)> = fine.iter().map(|&t| profile(t, -1.5, &folds, 0.8)).collect();
        let total: f64 = pts.windows(2).map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt()).sum();
        assert!((total - 3.5).abs() < 1e-6, "{total}");
    }

    #[test]
    fn flat_when_unbent() {
        let cfg = GeneratorConfig { max_bend: 0.0, rotation_range: 0.0, lateral_range: 0.0, ..Default::default() };
        let t = cfg.template();
        let mut rng = stream(1, 0);
        let b = bend(&t, &cfg, &mut rng);
        for (p, q) in t.iter().zip(&b) {
            assert!((p - q).norm() < 1e-12);
        }
    }
}
