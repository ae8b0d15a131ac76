//! Randomized check that a depth displacement on one vertex can be
//! compensated on another vertex without changing the triangle area.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area_quartic_coeffs, AreaQuarticCoeffs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Config {
    pub samples: usize,
    pub h1_max: f64,
    pub h2_max: f64,
    /// Mean edge length every sampled triangle is scaled to.
    pub edge_scale: f64,
    pub seed: u64,
}

impl Default for Lemma1Config {
    fn default() -> Self {
        Self { samples: 100_000, h1_max: 0.1, h2_max: 0.1, edge_scale: 0.6, seed: 0 }
    }
}

impl Lemma1Config {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        for (name, h) in [("h1_max", self.h1_max), ("h2_max", self.h2_max)] {
            if !(0.0..=0.1).contains(&h) {
                return Err(Error::Config(format!("{name} must lie in [0, 0.1], got {h}")));
            }
        }
        if !(self.edge_scale > 0.0 && self.edge_scale.is_finite()) {
            return Err(Error::Config(format!("edge_scale must be positive, got {}", self.edge_scale)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub samples: usize,
    /// Fraction of non-negative discriminants when only the first depth moves.
    pub first_fraction: f64,
    /// Fraction when the first two depths move.
    pub second_fraction: f64,
    pub config: Lemma1Config,
}

/// Coefficients `(a, b, c)` of the quadratic in the third depth `x` whose
/// roots give a triangle with depths `(dj, dq, x)` of squared area `target`.
pub fn compensation_quadratic(g: &AreaQuarticCoeffs, dj: f64, dq: f64, target: f64) -> (f64, f64, f64) {
    let g = &g.g;
    let a = g[2] * dj * dj + g[4] * dq * dj + g[5] * dq * dq;
    let b = g[1] * dq * dj * dj + g[3] * dq * dq * dj;
    let c = g[0] * dq * dq * dj * dj - 4.0 * target;
    (a, b, c)
}

/// Discriminant sign test with a relative rounding allowance.
pub fn has_real_root(a: f64, b: f64, c: f64) -> bool {
    let disc = b * b - 4.0 * a * c;
    disc >= -1e-12 * (b * b + (4.0 * a * c).abs())
}

fn sample_triangle(rng: &mut ChaCha8Rng, edge_scale: f64) -> ([Vector3<f64>; 3], [f64; 3]) {
    loop {
        let mut lines = [Vector3::zeros(); 3];
        let mut depths = [0.0; 3];
        for k in 0..3 {
            let v = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0);
            lines[k] = v / v.norm();
            depths[k] = rng.random_range(0.5..2.0);
        }
        let p: Vec<Vector3<f64>> = (0..3).map(|k| lines[k] * depths[k]).collect();
        let mean = ((p[0] - p[1]).norm() + (p[1] - p[2]).norm() + (p[0] - p[2]).norm()) / 3.0;
        let area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        if mean > 1e-9 && area > 1e-6 * mean * mean {
            let s = edge_scale / mean;
            return (lines, depths.map(|d| d * s));
        }
    }
}

pub fn lemma1_sample(cfg: &Lemma1Config) -> Result<Lemma1Report> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut first, mut second) = (0usize, 0usize);
    for _ in 0..cfg.samples {
        let (d, delta) = sample_triangle(&mut rng, cfg.edge_scale);
        let h1 = if cfg.h1_max > 0.0 { rng.random_range(0.0..=cfg.h1_max) } else { 0.0 };
        let h2 = if cfg.h2_max > 0.0 { rng.random_range(0.0..=cfg.h2_max) } else { 0.0 };
        let g = area_quartic_coeffs(&d[0], &d[1], &d[2]);
        let target = g.eval(delta[0], delta[1], delta[2]);
        let (a, b, c) = compensation_quadratic(&g, delta[0] + h1, delta[1], target);
        if has_real_root(a, b, c) {
            first += 1;
        }
        let (a, b, c) = compensation_quadratic(&g, delta[0] + h1, delta[1] + h2, target);
        if has_real_root(a, b, c) {
            second += 1;
        }
    }
    let total = cfg.samples as f64;
    Ok(Lemma1Report {
        samples: cfg.samples,
        first_fraction: first as f64 / total,
        second_fraction: second as f64 / total,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unperturbed_triangle_root_is_the_original_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (d, delta) = sample_triangle(&mut rng, 0.6);
            let g = area_quartic_coeffs(&d[0], &d[1], &d[2]);
            let target = g.eval(delta[0], delta[1], delta[2]);
            let (a, b, c) = compensation_quadratic(&g, delta[0], delta[1], target);
            let x = delta[2];
            assert!((a * x * x + b * x + c).abs() <= 1e-10 * (a * x * x).abs().max(c.abs()));
        }
    }

    #[test]
    fn invalid_ranges() {
        let cfg = Lemma1Config { h1_max: 0.2, ..Default::default() };
        assert!(lemma1_sample(&cfg).is_err());
        let cfg = Lemma1Config { edge_scale: 0.0, ..Default::default() };
        assert!(lemma1_sample(&cfg).is_err());
    }
}
