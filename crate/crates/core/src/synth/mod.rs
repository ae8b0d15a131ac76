//! Synthetic scenes: bent grids (isometric), their equiareal perturbations,
//! and the area-compensation sampler.

mod isg;
pub mod lemma1;
pub mod lm;
mod qsg;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area_sq, dist_sq, normalize, CameraIntrinsics, ObservationSet, PointCloud};
use crate::graph::{build_graph, E3Mode, SimplicialGraph};

pub use isg::generate_isometric;
pub use lemma1::{lemma1_sample, Lemma1Config, Lemma1Report};
pub use lm::{lm_minimize, numeric_jacobian, LmReport, LmSettings, LmStatus};
pub use qsg::{area_jacobian, area_residuals, generate_equiareal};

/// Where fold lines are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Random ruling direction and fold positions.
    #[default]
    Random,
    /// Rulings along a grid axis with folds on grid lines, so no graph edge
    /// or triangle straddles a fold.
    GraphAligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `x_sigma * U(-0.5, 0.5)` per pixel coordinate.
    #[default]
    Uniform,
    /// `x_sigma * N(0, 1)` per pixel coordinate.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub m_a: usize,
    pub m_b: usize,
    pub n: usize,
    /// Pixel noise multiplier.
    pub x_sigma: f64,
    pub chi_e: f64,
    pub seed: u64,
    pub camera: CameraIntrinsics,
    pub noise: NoiseModel,
    /// Template grid spacing.
    pub spacing: f64,
    pub folds: usize,
    /// Bending angles are drawn from `U(-max_bend, max_bend)` radians.
    pub max_bend: f64,
    /// Width of each smooth fold in grid spacings (random folds only).
    pub bend_width: f64,
    pub fold_mode: FoldMode,
    /// Euler angles of the random pose are drawn from `U(-r, r)`.
    pub rotation_range: f64,
    /// Camera distance in template diameters.
    pub depth_ratio: f64,
    /// Lateral offset range in template diameters.
    pub lateral_range: f64,
    /// Fraction of points hidden in every image but the first.
    pub hide_fraction: f64,
    pub knn: usize,
    pub e3_mode: E3Mode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            m_a: 4,
            m_b: 4,
            n: 4,
            x_sigma: 0.0,
            chi_e: 0.0,
            seed: 0,
            camera: CameraIntrinsics::default(),
            noise: NoiseModel::Uniform,
            spacing: 1.0,
            folds: 2,
            max_bend: 0.5,
            bend_width: 3.0,
            fold_mode: FoldMode::Random,
            rotation_range: 0.3,
            depth_ratio: 1.3,
            lateral_range: 0.1,
            hide_fraction: 0.0,
            knn: 4,
            e3_mode: E3Mode::All,
        }
    }
}

impl GeneratorConfig {
    pub fn m(&self) -> usize {
        self.m_a * self.m_b
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m_a < 2 || self.m_b < 2 {
            return bad(format!("grid must be at least 2x2, got {}x{}", self.m_a, self.m_b));
        }
        if self.n == 0 {
            return bad("need at least one image".into());
        }
        for (name, v) in [
            ("x_sigma", self.x_sigma),
            ("chi_e", self.chi_e),
            ("max_bend", self.max_bend),
            ("bend_width", self.bend_width),
            ("rotation_range", self.rotation_range),
            ("lateral_range", self.lateral_range),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return bad(format!("spacing must be positive, got {}", self.spacing));
        }
        if !(self.depth_ratio > 0.0 && self.depth_ratio.is_finite()) {
            return bad(format!("depth_ratio must be positive, got {}", self.depth_ratio));
        }
        if !(0.0..1.0).contains(&self.hide_fraction) {
            return bad(format!("hide_fraction must lie in [0, 1), got {}", self.hide_fraction));
        }
        self.camera.validate()
    }

    /// Flat template grid centred at the origin in the plane `Z = 0`.
    pub fn template(&self) -> PointCloud {
        let (ca, cb) = ((self.m_a - 1) as f64 / 2.0, (self.m_b - 1) as f64 / 2.0);
        let mut pts = Vec::with_capacity(self.m());
        for b in 0..self.m_b {
            for a in 0..self.m_a {
                pts.push(Vector3::new((a as f64 - ca) * self.spacing, (b as f64 - cb) * self.spacing, 0.0));
            }
        }
        pts
    }

    /// Graph built on the template grid.
    pub fn template_graph(&self) -> Result<SimplicialGraph> {
        let pts: Vec<Vector2<f64>> = self.template().iter().map(|p| Vector2::new(p.x, p.y)).collect();
        build_graph(&pts, self.knn, self.e3_mode)
    }
}

/// Generated clouds, their observations and template measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub config: GeneratorConfig,
    pub template: PointCloud,
    pub gt_clouds: Vec<PointCloud>,
    pub pixels: Vec<Vec<Vector2<f64>>>,
    pub visibility: Vec<Vec<bool>>,
    pub observations: ObservationSet,
    /// Squared template lengths of the graph edges.
    pub gt_geodesics: Vec<f64>,
    /// Squared template areas of the graph triangles.
    pub gt_areas: Vec<f64>,
    pub graph: SimplicialGraph,
    /// Largest relative edge-length deviation from the template.
    pub max_edge_deviation: f64,
    /// Per triangle, largest `|area - template area|` over images.
    pub area_residuals: Vec<f64>,
}

impl SyntheticScene {
    /// Largest pairwise distance in the ground truth, maximized over images.
    pub fn diameter(&self) -> f64 {
        self.gt_clouds.iter().map(|c| cloud_diameter(c)).fold(0.0, f64::max)
    }
}

pub fn cloud_diameter(c: &[Vector3<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for a in 0..c.len() {
        for b in a + 1..c.len() {
            best = best.max((c[a] - c[b]).norm());
        }
    }
    best
}

pub fn template_geodesics(template: &[Vector3<f64>], graph: &SimplicialGraph) -> Vec<f64> {
    graph.e2.iter().map(|&(j, q)| dist_sq(&template[j], &template[q])).collect()
}

pub fn template_areas(template: &[Vector3<f64>], graph: &SimplicialGraph) -> Vec<f64> {
    graph.e3.iter().map(|&(j, q, r)| area_sq(&template[j], &template[q], &template[r])).collect()
}

fn max_edge_deviation(clouds: &[PointCloud], graph: &SimplicialGraph, geodesics: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for c in clouds {
        for (&(j, q), &g) in graph.e2.iter().zip(geodesics) {
            let l = g.sqrt();
            worst = worst.max(((c[j] - c[q]).norm() - l).abs() / l);
        }
    }
    worst
}

fn triangle_area_residuals(clouds: &[PointCloud], graph: &SimplicialGraph, areas: &[f64]) -> Vec<f64> {
    graph
        .e3
        .iter()
        .zip(areas)
        .map(|(&(j, q, r), &a)| {
            clouds.iter().map(|c| (area_sq(&c[j], &c[q], &c[r]).sqrt() - a.sqrt()).abs()).fold(0.0, f64::max)
        })
        .collect()
}

fn assemble(
    cfg: &GeneratorConfig,
    template: PointCloud,
    clouds: Vec<PointCloud>,
    pixels: Vec<Vec<Vector2<f64>>>,
    visibility: Vec<Vec<bool>>,
    graph: SimplicialGraph,
) -> Result<SyntheticScene> {
    let observations = normalize(&pixels, &cfg.camera, &visibility)?;
    let gt_geodesics = template_geodesics(&template, &graph);
    let gt_areas = template_areas(&template, &graph);
    let max_edge_deviation = max_edge_deviation(&clouds, &graph, &gt_geodesics);
    let area_residuals = triangle_area_residuals(&clouds, &graph, &gt_areas);
    Ok(SyntheticScene {
        config: cfg.clone(),
        template,
        gt_clouds: clouds,
        pixels,
        visibility,
        observations,
        gt_geodesics,
        gt_areas,
        graph,
        max_edge_deviation,
        area_residuals,
    })
}
