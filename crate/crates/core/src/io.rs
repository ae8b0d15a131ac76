//! Scene and result files: versioned JSON, ASCII PLY and CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::geometry::{normalize, CameraIntrinsics, ObservationSet, PointCloud};
use crate::graph::SimplicialGraph;
use crate::reconstruct::{Diagnostics, Method, Reconstruction};
use crate::synth::{GeneratorConfig, SyntheticScene};

pub const SCENE_VERSION: u32 = 1;
pub const RESULT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    Iso,
    Equi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: GeneratorMode,
    pub seed: u64,
    pub config: GeneratorConfig,
    pub max_edge_deviation: f64,
    /// Per triangle, largest `|area - template area|` over images.
    pub area_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub e2: Vec<(usize, usize)>,
    pub e3: Vec<(usize, usize, usize)>,
}

/// Correspondences with optional ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub version: u32,
    pub intrinsics: CameraIntrinsics,
    pub n: usize,
    pub m: usize,
    /// `pixels[i][j] = [u, v]`; ignored where `visibility[i][j]` is false.
    pub pixels: Vec<Vec<[f64; 2]>>,
    pub visibility: Vec<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_clouds: Option<Vec<Vec<[f64; 3]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphRecord>,
    /// Squared template edge lengths, aligned with `graph.e2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_geodesics: Option<Vec<f64>>,
    /// Squared template triangle areas, aligned with `graph.e3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_areas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn to3(c: &[Vector3<f64>]) -> Vec<[f64; 3]> {
    c.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn from3(c: &[[f64; 3]]) -> PointCloud {
    c.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect()
}

impl SceneFile {
    pub fn from_scene(scene: &SyntheticScene, mode: GeneratorMode) -> Self {
        SceneFile {
            version: SCENE_VERSION,
            intrinsics: scene.config.camera,
            n: scene.observations.n,
            m: scene.observations.m,
            pixels: scene.pixels.iter().map(|r| r.iter().map(|p| [p.x, p.y]).collect()).collect(),
            visibility: scene.visibility.clone(),
            gt_clouds: Some(scene.gt_clouds.iter().map(|c| to3(c)).collect()),
            graph: Some(GraphRecord { e2: scene.graph.e2.clone(), e3: scene.graph.e3.clone() }),
            gt_geodesics: Some(scene.gt_geodesics.clone()),
            gt_areas: Some(scene.gt_areas.clone()),
            provenance: Some(Provenance {
                mode,
                seed: scene.config.seed,
                config: scene.config.clone(),
                max_edge_deviation: scene.max_edge_deviation,
                area_residuals: scene.area_residuals.clone(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENE_VERSION {
            return Err(Error::InvalidInput(format!("unsupported scene version {}", self.version)));
        }
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.pixels.len() != self.n || self.visibility.len() != self.n {
            return bad(format!("scene declares {} images but stores {}", self.n, self.pixels.len()));
        }
        for i in 0..self.n {
            if self.pixels[i].len() != self.m || self.visibility[i].len() != self.m {
                return bad(format!("image {i} does not have {} points", self.m));
            }
        }
        if let Some(gt) = &self.gt_clouds {
            if gt.len() != self.n || gt.iter().any(|c| c.len() != self.m) {
                return bad("ground-truth clouds do not match n x m".into());
            }
        }
        if let Some(g) = &self.graph {
            if self.gt_geodesics.as_ref().is_some_and(|v| v.len() != g.e2.len()) {
                return bad("geodesic table does not match the edge list".into());
            }
            if self.gt_areas.as_ref().is_some_and(|v| v.len() != g.e3.len()) {
                return bad("area table does not match the triangle list".into());
            }
        }
        Ok(())
    }

    pub fn observations(&self) -> Result<ObservationSet> {
        self.validate()?;
        let pixels: Vec<Vec<Vector2<f64>>> =
            self.pixels.iter().map(|r| r.iter().map(|p| Vector2::new(p[0], p[1])).collect()).collect();
        normalize(&pixels, &self.intrinsics, &self.visibility)
    }

    pub fn graph(&self) -> Result<Option<SimplicialGraph>> {
        self.graph.as_ref().map(|g| SimplicialGraph::new(self.m, g.e2.clone(), g.e3.clone())).transpose()
    }

    pub fn ground_truth(&self) -> Option<Vec<PointCloud>> {
        self.gt_clouds.as_ref().map(|c| c.iter().map(|x| from3(x)).collect())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s: SceneFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CloudFormat {
    #[default]
    Ply,
    Csv,
}

impl CloudFormat {
    pub fn extension(self) -> &'static str {
        match self {
            CloudFormat::Ply => "ply",
            CloudFormat::Csv => "csv",
        }
    }
}

/// Reconstruction summary written next to one cloud file per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub version: u32,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub cloud_format: CloudFormat,
    /// Cloud file names relative to the result file.
    pub clouds: Vec<String>,
    pub graph: GraphRecord,
    pub geodesics: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub areas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EvalReport>,
    pub diagnostics: Diagnostics,
}

impl ResultFile {
    /// Writes the clouds beside `path` and the summary at `path`.
    pub fn write(
        rec: &Reconstruction,
        metrics: Option<EvalReport>,
        format: CloudFormat,
        path: &Path,
    ) -> Result<ResultFile> {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("result");
        let mut names = Vec::with_capacity(rec.clouds.len());
        for (i, c) in rec.clouds.iter().enumerate() {
            let name = format!("{stem}_{i:03}.{}", format.extension());
            let target = dir.join(&name);
            match format {
                CloudFormat::Ply => write_ply(&target, c)?,
                CloudFormat::Csv => write_cloud_csv(&target, c)?,
            }
            names.push(name);
        }
        let out = ResultFile {
            version: RESULT_VERSION,
            method: rec.method,
            n: rec.clouds.len(),
            m: rec.clouds.first().map_or(0, |c| c.len()),
            cloud_format: format,
            clouds: names,
            graph: GraphRecord { e2: rec.graph.e2.clone(), e3: rec.graph.e3.clone() },
            geodesics: rec.geodesics.clone(),
            areas: rec.areas.clone(),
            metrics,
            diagnostics: rec.diagnostics.clone(),
        };
        fs::write(path, serde_json::to_string_pretty(&out)? + "\n")?;
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let r: ResultFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if r.version != RESULT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported result version {}", r.version)));
        }
        if r.clouds.len() != r.n {
            return Err(Error::InvalidInput(format!("result lists {} clouds for {} images", r.clouds.len(), r.n)));
        }
        Ok(r)
    }

    /// Loads the cloud files referenced by a result at `path`.
    pub fn load_clouds(&self, path: &Path) -> Result<Vec<PointCloud>> {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(PathBuf::new);
        self.clouds
            .iter()
            .map(|name| {
                let p = dir.join(name);
                let c = match self.cloud_format {
                    CloudFormat::Ply => read_ply(&p)?,
                    CloudFormat::Csv => read_cloud_csv(&p)?,
                };
                if c.len() != self.m {
                    return Err(Error::InvalidInput(format!("{name}: {} points, expected {}", c.len(), self.m)));
                }
                Ok(c)
            })
            .collect()
    }

    pub fn graph(&self) -> Result<SimplicialGraph> {
        SimplicialGraph::new(self.m, self.graph.e2.clone(), self.graph.e3.clone())
    }
}

pub fn ply_string(cloud: &[Vector3<f64>]) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in cloud {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn write_ply(path: &Path, cloud: &[Vector3<f64>]) -> Result<()> {
    fs::write(path, ply_string(cloud))?;
    Ok(())
}

/// Reads the vertex positions of an ASCII PLY file (extra properties ignored).
pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.into() };
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(perr(0, "missing 'ply' magic")),
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let (no, line) = lines.next().ok_or_else(|| perr(0, "unterminated header"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(perr(no, "only ascii PLY is supported")),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", c] => {
                count = Some(c.parse::<usize>().map_err(|_| perr(no, "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", .., name] if in_vertex => props.push(name.to_string()),
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(perr(no, "unexpected header line")),
        }
    }
    let count = count.ok_or_else(|| perr(0, "no vertex element"))?;
    let pos = |n: &str| props.iter().position(|p| p == n);
    let (ix, iy, iz) = match (pos("x"), pos("y"), pos("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(perr(0, "vertex element lacks x, y or z")),
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (no, line) = lines.next().ok_or_else(|| perr(0, "fewer vertices than declared"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| perr(no, "bad number")))
            .collect::<Result<_>>()?;
        if vals.len() < props.len() {
            return Err(perr(no, "too few vertex properties"));
        }
        out.push(Vector3::new(vals[ix], vals[iy], vals[iz]));
    }
    Ok(out)
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    parse_ply(&fs::read_to_string(path)?)
}

pub fn cloud_csv_string(cloud: &[Vector3<f64>]) -> String {
    let mut s = String::from("x,y,z\n");
    for p in cloud {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, p.z);
    }
    s
}

pub fn write_cloud_csv(path: &Path, cloud: &[Vector3<f64>]) -> Result<()> {
    fs::write(path, cloud_csv_string(cloud))?;
    Ok(())
}

pub fn parse_cloud_csv(text: &str) -> Result<PointCloud> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse { line: no + 1, msg: "bad number".into() }))
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(Error::Parse { line: no + 1, msg: format!("expected 3 columns, got {}", vals.len()) });
        }
        out.push(Vector3::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}

pub fn read_cloud_csv(path: &Path) -> Result<PointCloud> {
    parse_cloud_csv(&fs::read_to_string(path)?)
}

/// `frame,rms` rows for plotting.
pub fn per_frame_csv(report: &EvalReport) -> String {
    let mut s = String::from("frame,rms\n");
    for (i, r) in report.per_frame.iter().enumerate() {
        let _ = writeln!(s, "{i},{r}");
    }
    s
}
