//! Camera normalization and closed-form geometric kernels.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self { fx: 600.0, fy: 600.0, cx: 320.0, cy: 240.0 }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    /// Maps a normalized homogeneous point back to pixels.
    pub fn to_pixel(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Normalized correspondences across `n` images of `m` points.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub n: usize,
    pub m: usize,
    /// `points[i][j]`, third component 1 (zeros when invisible).
    pub points: Vec<Vec<Vector3<f64>>>,
    /// `sightlines[i][j]`, unit norm (zeros when invisible).
    pub sightlines: Vec<Vec<Vector3<f64>>>,
    pub visibility: Vec<Vec<bool>>,
}

impl ObservationSet {
    /// Builds an observation set from normalized image points `(x, y)`.
    pub fn from_normalized(normalized: &[Vec<Vector2<f64>>], visibility: &[Vec<bool>]) -> Result<Self> {
        let n = normalized.len();
        if n == 0 {
            return Err(Error::InvalidInput("no images".into()));
        }
        let m = normalized[0].len();
        if visibility.len() != n {
            return Err(Error::InvalidInput("visibility mask has wrong image count".into()));
        }
        let mut points = Vec::with_capacity(n);
        let mut sightlines = Vec::with_capacity(n);
        for i in 0..n {
            if normalized[i].len() != m || visibility[i].len() != m {
                return Err(Error::InvalidInput(format!("image {i} has inconsistent point count")));
            }
            let mut pi = Vec::with_capacity(m);
            let mut di = Vec::with_capacity(m);
            for j in 0..m {
                if !visibility[i][j] {
                    pi.push(Vector3::zeros());
                    di.push(Vector3::zeros());
                    continue;
                }
                let q = normalized[i][j];
                if !q.x.is_finite() || !q.y.is_finite() {
                    return Err(Error::NonFinite { image: i, point: j });
                }
                let p = Vector3::new(q.x, q.y, 1.0);
                di.push(p / p.norm());
                pi.push(p);
            }
            points.push(pi);
            sightlines.push(di);
        }
        if let Some(j) = visibility[0].iter().position(|v| !v) {
            return Err(Error::InvalidInput(format!("point {j} is not visible in the first image")));
        }
        Ok(Self { n, m, points, sightlines, visibility: visibility.to_vec() })
    }

    pub fn is_visible(&self, i: usize, j: usize) -> bool {
        self.visibility[i][j]
    }

    pub fn all_visible(&self) -> bool {
        self.visibility.iter().all(|row| row.iter().all(|&v| v))
    }

    /// 2D normalized coordinates of the first image, used as the graph anchor.
    pub fn reference_points(&self) -> Vec<Vector2<f64>> {
        self.points[0].iter().map(|p| Vector2::new(p.x, p.y)).collect()
    }
}

/// Pinhole normalization of pixel tracks `pixels[i][j] = (u, v)`.
pub fn normalize(
    pixels: &[Vec<Vector2<f64>>],
    k: &CameraIntrinsics,
    visibility: &[Vec<bool>],
) -> Result<ObservationSet> {
    k.validate()?;
    let mut normalized = Vec::with_capacity(pixels.len());
    for (i, row) in pixels.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (j, px) in row.iter().enumerate() {
            let visible = visibility.get(i).and_then(|v| v.get(j)).copied().unwrap_or(false);
            if visible && !(px.x.is_finite() && px.y.is_finite()) {
                return Err(Error::NonFinite { image: i, point: j });
            }
            out.push(Vector2::new((px.x - k.cx) / k.fx, (px.y - k.cy) / k.fy));
        }
        normalized.push(out);
    }
    ObservationSet::from_normalized(&normalized, visibility)
}

/// One image's 3D points.
pub type PointCloud = Vec<Vector3<f64>>;

pub fn dist_sq(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm_squared()
}

/// Squared triangle area from the cross-product formula.
pub fn area_sq(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let v = (a - b).cross(&(c - b));
    0.25 * v.norm_squared()
}

/// Perspective projection `(X/Z, Y/Z, 1)`.
pub fn project(p: &Vector3<f64>) -> Result<Vector3<f64>> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera(p.z));
    }
    Ok(Vector3::new(p.x / p.z, p.y / p.z, 1.0))
}

/// Coefficients of the squared-area quartic in the depths of one triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaQuarticCoeffs {
    pub g: [f64; 6],
}

impl AreaQuarticCoeffs {
    /// Squared area of the triangle with depths `(dj, dq, dr)`.
    pub fn eval(&self, dj: f64, dq: f64, dr: f64) -> f64 {
        let g = &self.g;
        0.25 * ((g[0] * dq * dq + g[1] * dr * dq + g[2] * dr * dr) * dj * dj
            + (g[3] * dr * dq * dq + g[4] * dr * dr * dq) * dj
            + g[5] * dq * dq * dr * dr)
    }
}

pub fn area_quartic_coeffs(dj: &Vector3<f64>, dq: &Vector3<f64>, dr: &Vector3<f64>) -> AreaQuarticCoeffs {
    let (xj, yj, zj) = (dj.x, dj.y, dj.z);
    let (xq, yq, zq) = (dq.x, dq.y, dq.z);
    let (xr, yr, zr) = (dr.x, dr.y, dr.z);
    let g1 = (yq * yq + zq * zq) * xj * xj - 2.0 * (yq * xq * yj + zq * xq * zj) * xj
        + (zq * zq + xq * xq) * yj * yj
        - 2.0 * zq * yq * zj * yj
        + (yq * yq + xq * xq) * zj * zj;
    let g2 = -2.0 * (yq * yr + zr * zq) * xj * xj
        - 2.0 * ((-xr * yq - xq * yr) * yj + (-xr * zq - zr * xq) * zj) * xj
        - 2.0 * (zr * zq + xq * xr) * yj * yj
        + 2.0 * (zr * yq + zq * yr) * zj * yj
        - 2.0 * (yq * yr + xq * xr) * zj * zj;
    let g3 = (yr * yr + zr * zr) * xj * xj - 2.0 * (yr * xr * yj + zr * xr * zj) * xj
        + (xr * xr + zr * zr) * yj * yj
        - 2.0 * yj * zj * yr * zr
        + zj * zj * (xr * xr + yr * yr);
    let g4 = 2.0 * ((yq * yr + zr * zq) * xq - xr * (yq * yq + zq * zq)) * xj
        - 2.0 * (-zr * zq * yq - xr * yq * xq + zq * zq * yr + xq * xq * yr) * yj
        - 2.0 * (yq * yq * zr - zq * yr * yq - xr * zq * xq + xq * xq * zr) * zj;
    let g5 = 2.0 * (-(yr * yr + zr * zr) * xq - xr * (-yq * yr - zr * zq)) * xj
        - 2.0 * (-xr * yr * xq + (xr * xr + zr * zr) * yq - zq * yr * zr) * yj
        - 2.0 * (-xr * zr * xq - yr * zr * yq + zq * (xr * xr + yr * yr)) * zj;
    let g6 = (yr * yr + zr * zr) * xq * xq - 2.0 * xr * (yq * yr + zr * zq) * xq
        + (xr * xr + zr * zr) * yq * yq
        - 2.0 * zq * yr * zr * yq
        + zq * zq * (xr * xr + yr * yr);
    AreaQuarticCoeffs { g: [g1, g2, g3, g4, g5, g6] }
}

/// Squared area through the expanded nine-coordinate quartic.
#[rustfmt::skip]
pub fn area_quartic_pp(pj: &Vector3<f64>, pq: &Vector3<f64>, pr: &Vector3<f64>) -> f64 {
    let (xj, yj, zj) = (pj.x, pj.y, pj.z);
    let (xq, yq, zq) = (pq.x, pq.y, pq.z);
    let (xr, yr, zr) = (pr.x, pr.y, pr.z);
    let s = xj * xj * yq * yq - 2.0 * xj * xj * yq * yr + xj * xj * yr * yr
        + xj * xj * zq * zq - 2.0 * xj * xj * zq * zr + xj * xj * zr * zr
        - 2.0 * xj * xq * yj * yq + 2.0 * xj * xq * yj * yr + 2.0 * xj * xq * yq * yr
        - 2.0 * xj * xq * yr * yr - 2.0 * xj * xq * zj * zq + 2.0 * xj * xq * zj * zr
        + 2.0 * xj * xq * zq * zr - 2.0 * xj * xq * zr * zr + 2.0 * xj * xr * yj * yq
        - 2.0 * xj * xr * yj * yr - 2.0 * xj * xr * yq * yq + 2.0 * xj * xr * yq * yr
        + 2.0 * xj * xr * zj * zq - 2.0 * xj * xr * zj * zr - 2.0 * xj * xr * zq * zq
        + 2.0 * xj * xr * zq * zr + xq * xq * yj * yj - 2.0 * xq * xq * yj * yr
        + xq * xq * yr * yr + xq * xq * zj * zj - 2.0 * xq * xq * zj * zr
        + xq * xq * zr * zr - 2.0 * xq * xr * yj * yj + 2.0 * xq * xr * yj * yq
        + 2.0 * xq * xr * yj * yr - 2.0 * xq * xr * yq * yr - 2.0 * xq * xr * zj * zj
        + 2.0 * xq * xr * zj * zq + 2.0 * xq * xr * zj * zr - 2.0 * xq * xr * zq * zr
        + xr * xr * yj * yj - 2.0 * xr * xr * yj * yq + xr * xr * yq * yq
        + xr * xr * zj * zj - 2.0 * xr * xr * zj * zq + xr * xr * zq * zq
        + yj * yj * zq * zq - 2.0 * yj * yj * zq * zr + yj * yj * zr * zr
        - 2.0 * yj * yq * zj * zq + 2.0 * yj * yq * zj * zr + 2.0 * yj * yq * zq * zr
        - 2.0 * yj * yq * zr * zr + 2.0 * yj * yr * zj * zq - 2.0 * yj * yr * zj * zr
        - 2.0 * yj * yr * zq * zq + 2.0 * yj * yr * zq * zr + yq * yq * zj * zj
        - 2.0 * yq * yq * zj * zr + yq * yq * zr * zr - 2.0 * yq * yr * zj * zj
        + 2.0 * yq * yr * zj * zq + 2.0 * yq * yr * zj * zr - 2.0 * yq * yr * zq * zr
        + yr * yr * zj * zj - 2.0 * yr * yr * zj * zq + yr * yr * zq * zq
    ;
    0.25 * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn principal_point_maps_to_axis() {
        let k = CameraIntrinsics { fx: 500.0, fy: 400.0, cx: 100.0, cy: 50.0 };
        let obs = normalize(
            &[vec![Vector2::new(100.0, 50.0), Vector2::new(600.0, 50.0)]],
            &k,
            &[vec![true, true]],
        )
        .unwrap();
        assert_eq!(obs.points[0][0], Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(obs.sightlines[0][0], Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(obs.points[0][1], Vector3::new(1.0, 0.0, 1.0));
        assert_relative_eq!(obs.sightlines[0][1], Vector3::new(1.0, 0.0, 1.0) / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_finite_and_bad_focal() {
        let k = CameraIntrinsics::default();
        let err = normalize(&[vec![Vector2::new(f64::NAN, 0.0)]], &k, &[vec![true]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { image: 0, point: 0 }));
        let bad = CameraIntrinsics { fx: 0.0, ..k };
        assert!(normalize(&[vec![Vector2::new(1.0, 0.0)]], &bad, &[vec![true]]).is_err());
    }

    #[test]
    fn small_area_examples() {
        let o = Vector3::zeros();
        let ex = Vector3::x();
        let ey = Vector3::y();
        let ez = Vector3::z();
        assert_eq!(area_sq(&o, &Vector3::new(1.0, 1.0, 1.0), &Vector3::new(2.0, 2.0, 2.0)), 0.0);
        assert_relative_eq!(area_sq(&ex, &ey, &ez), 0.75, epsilon = 1e-15);
        assert_relative_eq!(area_sq(&o, &ex, &ey), 0.25, epsilon = 1e-15);
        assert_relative_eq!(area_quartic_pp(&ex, &ey, &ez), 0.75, epsilon = 1e-15);
        let c = area_quartic_coeffs(&ex, &ey, &ez);
        assert_relative_eq!(c.eval(1.0, 1.0, 1.0), 0.75, epsilon = 1e-15);
        assert_eq!(dist_sq(&ex, &ey), 2.0);
    }

    #[test]
    fn coincident_sightlines_give_zero_quartic() {
        let d = Vector3::new(0.3, -0.2, 1.0).normalize();
        let c = area_quartic_coeffs(&d, &d, &d);
        assert!(c.eval(1.3, 0.7, 2.1).abs() < 1e-14);
    }

    #[test]
    fn projection() {
        assert_eq!(project(&Vector3::new(0.0, 0.0, 5.0)).unwrap(), Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(project(&Vector3::new(2.0, 4.0, 2.0)).unwrap(), Vector3::new(1.0, 2.0, 1.0));
        assert!(project(&Vector3::new(1.0, 1.0, -1.0)).is_err());
    }
}
