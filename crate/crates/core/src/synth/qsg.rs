use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use super::isg::{isometric_clouds, observe, stream, EQUIAREAL_STREAM};
use super::lm::{lm_minimize, LmSettings};
use super::{assemble, template_areas, GeneratorConfig, SyntheticScene};
use crate::error::{Error, Result};
use crate::geometry::{area_sq, PointCloud};
use crate::graph::SimplicialGraph;

fn point(x: &DVector<f64>, j: usize) -> Vector3<f64> {
    Vector3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2])
}

/// `area_sq(triangle) - target` for every triangle, points stacked in `x`.
pub fn area_residuals(x: &DVector<f64>, triangles: &[(usize, usize, usize)], targets: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        triangles.len(),
        triangles.iter().zip(targets).map(|(&(j, q, r), &t)| area_sq(&point(x, j), &point(x, q), &point(x, r)) - t),
    )
}

/// Analytic Jacobian of [`area_residuals`].
pub fn area_jacobian(x: &DVector<f64>, triangles: &[(usize, usize, usize)]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(triangles.len(), x.len());
    for (row, &(j, q, r)) in triangles.iter().enumerate() {
        let (pj, pq, pr) = (point(x, j), point(x, q), point(x, r));
        let a = pq - pj;
        let b = pr - pj;
        let n = a.cross(&b);
        let gq = b.cross(&n) * 0.5;
        let gr = n.cross(&a) * 0.5;
        let gj = -gq - gr;
        for (v, g) in [(j, gj), (q, gq), (r, gr)] {
            for c in 0..3 {
                jac[(row, 3 * v + c)] += g[c];
            }
        }
    }
    jac
}

/// Pushes a cloud onto the template areas by least squares.
fn equiareal_projection(cloud: &PointCloud, triangles: &[(usize, usize, usize)], targets: &[f64], mean_area: f64) -> Result<PointCloud> {
    let x0 = DVector::from_iterator(3 * cloud.len(), cloud.iter().flat_map(|p| [p.x, p.y, p.z]));
    let scale = mean_area * mean_area;
    let settings = LmSettings {
        max_iter: 500,
        gtol: 1e-30 * scale,
        xtol: 1e-16,
        ftol_abs: 0.5 * (1e-9 * scale).powi(2),
        tau: 1e-6,
    };
    let rep = lm_minimize(|x| area_residuals(x, triangles, targets), |x| area_jacobian(x, triangles), x0, &settings)?;
    let out: PointCloud = (0..cloud.len()).map(|j| point(&rep.x, j)).collect();
    let worst = triangles
        .iter()
        .zip(targets)
        .map(|(&(j, q, r), &t)| (area_sq(&out[j], &out[q], &out[r]).sqrt() - t.sqrt()).abs())
        .fold(0.0, f64::max);
    if worst > 1e-6 * mean_area {
        return Err(Error::Generation(format!(
            "equiareal projection stopped ({:?}) after {} iterations with area residual {worst:e}",
            rep.status, rep.iterations
        )));
    }
    Ok(out)
}

/// Isometric scene perturbed by `chi_e * U(-0.5, 0.5)` per point (added to
/// all three coordinates) and projected back onto the template areas.
pub fn generate_equiareal(cfg: &GeneratorConfig, graph: Option<&SimplicialGraph>) -> Result<SyntheticScene> {
    cfg.validate()?;
    let template = cfg.template();
    let graph = match graph {
        Some(g) if g.m != cfg.m() => {
            return Err(Error::Config(format!("graph has {} vertices, grid has {}", g.m, cfg.m())));
        }
        Some(g) => g.clone(),
        None => cfg.template_graph()?,
    };
    if graph.e3.is_empty() {
        return Err(Error::Config("equiareal generation needs at least one triangle".into()));
    }
    let targets = template_areas(&template, &graph);
    let mean_area = targets.iter().map(|a| a.sqrt()).sum::<f64>() / targets.len() as f64;
    let mut rng = stream(cfg.seed, EQUIAREAL_STREAM);
    let mut clouds = isometric_clouds(cfg, &template)?;
    for cloud in clouds.iter_mut() {
        for p in cloud.iter_mut() {
            let s: f64 = rng.random_range(-0.5..0.5);
            *p += Vector3::repeat(cfg.chi_e * s);
        }
        *cloud = equiareal_projection(cloud, &graph.e3, &targets, mean_area)?;
    }
    let (pixels, visibility) = observe(cfg, &clouds)?;
    assemble(cfg, template, clouds, pixels, visibility, graph)
}
