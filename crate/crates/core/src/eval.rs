//! Scale alignment, point errors and isometry/equiareality deviations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area_sq, dist_sq, PointCloud};
use crate::graph::SimplicialGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scale: f64,
    pub rms: f64,
    pub med: f64,
    #[serde(rename = "gE")]
    pub g_e: Option<f64>,
    #[serde(rename = "aE", skip_serializing_if = "Option::is_none", default)]
    pub a_e: Option<f64>,
    pub per_frame: Vec<f64>,
    /// Largest ground-truth pairwise distance over images.
    pub diameter: f64,
}

impl EvalReport {
    /// RMS as a fraction of the scene diameter.
    pub fn relative_rms(&self) -> f64 {
        self.rms / self.diameter
    }
}

fn check_shapes(est: &[PointCloud], gt: &[PointCloud], mask: Option<&[Vec<bool>]>) -> Result<()> {
    if est.len() != gt.len() {
        return Err(Error::InvalidInput(format!("{} estimated images vs {} ground truth", est.len(), gt.len())));
    }
    for (i, (e, g)) in est.iter().zip(gt).enumerate() {
        if e.len() != g.len() {
            return Err(Error::InvalidInput(format!("image {i}: {} vs {} points", e.len(), g.len())));
        }
        if let Some(m) = mask {
            if m.get(i).map(|r| r.len()) != Some(e.len()) {
                return Err(Error::InvalidInput(format!("image {i}: mask does not match point count")));
            }
        }
    }
    Ok(())
}

fn selected(mask: Option<&[Vec<bool>]>, i: usize, j: usize) -> bool {
    mask.map(|m| m[i][j]).unwrap_or(true)
}

/// Least-squares global scale `s` minimizing `sum |s est - gt|^2` over the
/// selected points of all images.
pub fn align_scale(est: &[PointCloud], gt: &[PointCloud], mask: Option<&[Vec<bool>]>) -> Result<f64> {
    check_shapes(est, gt, mask)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (e, g)) in est.iter().zip(gt).enumerate() {
        for j in 0..e.len() {
            if selected(mask, i, j) {
                num += e[j].dot(&g[j]);
                den += e[j].norm_squared();
            }
        }
    }
    if !(den > 0.0) {
        return Err(Error::InvalidInput("estimate has zero norm".into()));
    }
    Ok(num / den)
}

pub fn scale_clouds(clouds: &[PointCloud], s: f64) -> Vec<PointCloud> {
    clouds.iter().map(|c| c.iter().map(|p| p * s).collect()).collect()
}

/// Root mean square and median of the point errors over selected points.
pub fn rms_med(est: &[PointCloud], gt: &[PointCloud], mask: Option<&[Vec<bool>]>) -> Result<(f64, f64)> {
    check_shapes(est, gt, mask)?;
    let mut errs = Vec::new();
    for (i, (e, g)) in est.iter().zip(gt).enumerate() {
        for j in 0..e.len() {
            if selected(mask, i, j) {
                errs.push((e[j] - g[j]).norm());
            }
        }
    }
    if errs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
    errs.sort_by(f64::total_cmp);
    let k = errs.len();
    let med = if k % 2 == 1 { errs[k / 2] } else { 0.5 * (errs[k / 2 - 1] + errs[k / 2]) };
    Ok((rms, med))
}

/// Mean absolute deviation of squared edge lengths from `geodesics`, and of
/// squared triangle areas from `areas` when triangles are present.
pub fn deviation_metrics(
    clouds: &[PointCloud],
    graph: &SimplicialGraph,
    geodesics: &[f64],
    areas: Option<&[f64]>,
) -> Result<(f64, Option<f64>)> {
    if geodesics.len() != graph.p1() {
        return Err(Error::InvalidInput("geodesic table does not match the edge set".into()));
    }
    let n = clouds.len().max(1) as f64;
    let mut g = 0.0;
    for c in clouds {
        for (&(j, q), &gl) in graph.e2.iter().zip(geodesics) {
            g += (gl - dist_sq(&c[j], &c[q])).abs();
        }
    }
    let g_e = g / (n * graph.p1().max(1) as f64);
    let a_e = match areas {
        Some(a) if !graph.e3.is_empty() => {
            if a.len() != graph.p2() {
                return Err(Error::InvalidInput("area table does not match the triangle set".into()));
            }
            let mut s = 0.0;
            for c in clouds {
                for (&(j, q, r), &al) in graph.e3.iter().zip(a) {
                    s += (al - area_sq(&c[j], &c[q], &c[r])).abs();
                }
            }
            Some(s / (n * graph.p2() as f64))
        }
        _ => None,
    };
    Ok((g_e, a_e))
}

/// Two-decimal rendering used in tables.
pub fn format_metric(x: f64) -> String {
    format!("{x:.2}")
}

/// Full report: one global scale, RMS/MED over `mask`, per-frame RMS and
/// deviation metrics on the unscaled estimate.
pub fn evaluate(
    est: &[PointCloud],
    gt: &[PointCloud],
    mask: Option<&[Vec<bool>]>,
    graph: Option<(&SimplicialGraph, &[f64], Option<&[f64]>)>,
) -> Result<EvalReport> {
    let scale = align_scale(est, gt, mask)?;
    let scaled = scale_clouds(est, scale);
    let (rms, med) = rms_med(&scaled, gt, mask)?;
    let per_frame = (0..est.len())
        .map(|i| {
            let sub = mask.map(|m| vec![m[i].clone()]);
            rms_med(&scaled[i..=i], &gt[i..=i], sub.as_deref()).map(|r| r.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let (g_e, a_e) = match graph {
        Some((g, geo, areas)) => {
            let (ge, ae) = deviation_metrics(est, g, geo, areas)?;
            (Some(ge), ae)
        }
        None => (None, None),
    };
    let diameter = gt.iter().map(|c| crate::synth::cloud_diameter(c)).fold(0.0, f64::max);
    Ok(EvalReport { scale, rms, med, g_e, a_e, per_frame, diameter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn half_scale() {
        let gt = vec![vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.5, 2.0)]];
        let est = scale_clouds(&gt, 0.5);
        assert!((align_scale(&est, &gt, None).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_estimate() {
        let gt = vec![vec![Vector3::new(1.0, 2.0, 3.0)]];
        let est = vec![vec![Vector3::zeros()]];
        assert!(align_scale(&est, &gt, None).is_err());
    }

    #[test]
    fn format_two_decimals() {
        assert_eq!(format_metric(2.1912), "2.19");
    }
}
