//! C ABI over the `nrsfm` library.
//!
//! Every fallible call returns an [`NrsfmStatus`]; on failure the message is
//! available from [`nrsfm_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nrsfm::eval::evaluate;
use nrsfm::graph::E3Mode;
use nrsfm::io::{GeneratorMode, SceneFile};
use nrsfm::reconstruct::{self, Completion, Method, Reconstruction, ReconstructionConfig};
use nrsfm::synth::{self, lemma1_sample, FoldMode, GeneratorConfig, Lemma1Config, NoiseModel};
use nrsfm::Error;

/// Result codes shared by all calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsfmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Generation = 3,
    Solver = 4,
    Incompatible = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsfmGenerator {
    Isometric = 0,
    Equiareal = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsfmMethod {
    SnrDsl = 0,
    SnrPp = 1,
    QnrDsl = 2,
    QnrPp = 3,
    HnrDsl = 4,
    HnrPp = 5,
    HnrPpAccel = 6,
}

impl From<NrsfmMethod> for Method {
    fn from(m: NrsfmMethod) -> Self {
        match m {
            NrsfmMethod::SnrDsl => Method::SnrDsl,
            NrsfmMethod::SnrPp => Method::SnrPp,
            NrsfmMethod::QnrDsl => Method::QnrDsl,
            NrsfmMethod::QnrPp => Method::QnrPp,
            NrsfmMethod::HnrDsl => Method::HnrDsl,
            NrsfmMethod::HnrPp => Method::HnrPp,
            NrsfmMethod::HnrPpAccel => Method::HnrPpAccel,
        }
    }
}

/// Synthetic scene parameters. Start from [`nrsfm_generator_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NrsfmGeneratorParams {
    pub generator: NrsfmGenerator,
    pub m_a: usize,
    pub m_b: usize,
    pub n: usize,
    pub x_sigma: f64,
    pub chi_e: f64,
    pub seed: u64,
    pub knn: usize,
    pub depth_ratio: f64,
    pub max_bend: f64,
    pub hide_fraction: f64,
    /// Non-zero places folds on grid lines.
    pub aligned_folds: u8,
    /// Non-zero draws Gaussian rather than uniform pixel noise.
    pub gaussian_noise: u8,
}

/// Reconstruction parameters. Start from [`nrsfm_reconstruct_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NrsfmReconstructParams {
    pub method: NrsfmMethod,
    pub lambda_i: f64,
    pub lambda_e: f64,
    /// Neighbours per point when the graph is rebuilt.
    pub knn: usize,
    /// Pseudo-neighbours for hidden points; 0 disables completion.
    pub completion: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Non-zero reuses the graph stored with the scene when there is one.
    pub use_scene_graph: u8,
}

/// Observations, with optional ground truth and graph.
pub struct NrsfmScene {
    file: SceneFile,
}

/// Solved point clouds and the graph they were solved on.
pub struct NrsfmReconstruction {
    rec: Reconstruction,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NrsfmStatus {
    match e {
        Error::Generation(_) => NrsfmStatus::Generation,
        Error::Solver(_) => NrsfmStatus::Solver,
        Error::Incompatible(_) => NrsfmStatus::Incompatible,
        Error::Io(_) => NrsfmStatus::Io,
        _ => NrsfmStatus::InvalidInput,
    }
}

fn fail(status: NrsfmStatus, msg: impl Into<String>) -> NrsfmStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), NrsfmStatus>) -> NrsfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NrsfmStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(NrsfmStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lib<T>(r: nrsfm::Result<T>) -> Result<T, NrsfmStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, NrsfmStatus> {
    p.as_ref().ok_or_else(|| fail(NrsfmStatus::NullPointer, format!("{name} is null")))
}

unsafe fn check_out<T>(p: *mut T, name: &str) -> Result<(), NrsfmStatus> {
    if p.is_null() {
        Err(fail(NrsfmStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nrsfm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn nrsfm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn nrsfm_generator_params_default() -> NrsfmGeneratorParams {
    let d = GeneratorConfig::default();
    NrsfmGeneratorParams {
        generator: NrsfmGenerator::Isometric,
        m_a: d.m_a,
        m_b: d.m_b,
        n: d.n,
        x_sigma: d.x_sigma,
        chi_e: d.chi_e,
        seed: d.seed,
        knn: d.knn,
        depth_ratio: d.depth_ratio,
        max_bend: d.max_bend,
        hide_fraction: d.hide_fraction,
        aligned_folds: 0,
        gaussian_noise: 0,
    }
}

#[no_mangle]
pub extern "C" fn nrsfm_reconstruct_params_default() -> NrsfmReconstructParams {
    let d = ReconstructionConfig::default();
    NrsfmReconstructParams {
        method: NrsfmMethod::SnrDsl,
        lambda_i: d.lambda_i,
        lambda_e: d.lambda_e,
        knn: d.knn,
        completion: 0,
        tol: d.solver.tol,
        max_iter: d.solver.max_iter,
        use_scene_graph: 1,
    }
}

/// Generates a synthetic scene.
///
/// # Safety
/// `params` must point to a valid struct and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_scene_generate(
    params: *const NrsfmGeneratorParams,
    out: *mut *mut NrsfmScene,
) -> NrsfmStatus {
    guard(|| {
        let p = deref(params, "params")?;
        check_out(out, "out")?;
        let cfg = GeneratorConfig {
            m_a: p.m_a,
            m_b: p.m_b,
            n: p.n,
            x_sigma: p.x_sigma,
            chi_e: p.chi_e,
            seed: p.seed,
            knn: p.knn,
            depth_ratio: p.depth_ratio,
            max_bend: p.max_bend,
            hide_fraction: p.hide_fraction,
            fold_mode: if p.aligned_folds != 0 { FoldMode::GraphAligned } else { FoldMode::Random },
            noise: if p.gaussian_noise != 0 { NoiseModel::Gaussian } else { NoiseModel::Uniform },
            ..GeneratorConfig::default()
        };
        let (scene, mode) = match p.generator {
            NrsfmGenerator::Isometric => (lib(synth::generate_isometric(&cfg, None))?, GeneratorMode::Iso),
            NrsfmGenerator::Equiareal => (lib(synth::generate_equiareal(&cfg, None))?, GeneratorMode::Equi),
        };
        *out = Box::into_raw(Box::new(NrsfmScene { file: SceneFile::from_scene(&scene, mode) }));
        Ok(())
    })
}

/// Builds a scene from pixel tracks laid out image-major as
/// `pixels[(i * m + j) * 2 + {0, 1}]`. `visibility` holds `n * m` bytes
/// (non-zero for visible) or is null when every point is visible.
///
/// # Safety
/// The arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_scene_from_pixels(
    n: usize,
    m: usize,
    pixels: *const f64,
    visibility: *const u8,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    out: *mut *mut NrsfmScene,
) -> NrsfmStatus {
    guard(|| {
        if pixels.is_null() {
            return Err(fail(NrsfmStatus::NullPointer, "pixels is null"));
        }
        check_out(out, "out")?;
        let len = n.checked_mul(m).ok_or_else(|| fail(NrsfmStatus::InvalidInput, "n * m overflows"))?;
        let px = std::slice::from_raw_parts(pixels, 2 * len);
        let vis: Vec<bool> = if visibility.is_null() {
            vec![true; len]
        } else {
            std::slice::from_raw_parts(visibility, len).iter().map(|&v| v != 0).collect()
        };
        let file = SceneFile {
            version: nrsfm::io::SCENE_VERSION,
            intrinsics: nrsfm::geometry::CameraIntrinsics { fx, fy, cx, cy },
            n,
            m,
            pixels: (0..n).map(|i| (0..m).map(|j| [px[2 * (i * m + j)], px[2 * (i * m + j) + 1]]).collect()).collect(),
            visibility: vis.chunks(m.max(1)).take(n).map(|c| c.to_vec()).collect(),
            gt_clouds: None,
            graph: None,
            gt_geodesics: None,
            gt_areas: None,
            provenance: None,
        };
        lib(file.intrinsics.validate())?;
        lib(file.observations())?;
        *out = Box::into_raw(Box::new(NrsfmScene { file }));
        Ok(())
    })
}

/// Parses a scene from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_scene_from_json(json: *const c_char, out: *mut *mut NrsfmScene) -> NrsfmStatus {
    guard(|| {
        if json.is_null() {
            return Err(fail(NrsfmStatus::NullPointer, "json is null"));
        }
        check_out(out, "out")?;
        let text = CStr::from_ptr(json).to_str().map_err(|_| fail(NrsfmStatus::InvalidInput, "json is not UTF-8"))?;
        let file: SceneFile = lib(serde_json::from_str(text).map_err(Error::from))?;
        lib(file.validate())?;
        *out = Box::into_raw(Box::new(NrsfmScene { file }));
        Ok(())
    })
}

/// Serializes a scene. Release the string with [`nrsfm_string_free`].
///
/// # Safety
/// `scene` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_scene_to_json(scene: *const NrsfmScene, out: *mut *mut c_char) -> NrsfmStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        check_out(out, "out")?;
        let text = lib(s.file.to_json())?;
        *out = CString::new(text).map_err(|_| fail(NrsfmStatus::InvalidInput, "interior NUL"))?.into_raw();
        Ok(())
    })
}

/// Writes the image and point counts.
///
/// # Safety
/// `scene` must be a live handle; `n` and `m` writable.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_scene_dims(scene: *const NrsfmScene, n: *mut usize, m: *mut usize) -> NrsfmStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        check_out(n, "n")?;
        check_out(m, "m")?;
        *n = s.file.n;
        *m = s.file.m;
        Ok(())
    })
}

/// Copies the ground truth as `n * m * 3` doubles, image-major.
///
/// # Safety
/// `scene` must be a live handle and `buf` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_scene_ground_truth(scene: *const NrsfmScene, buf: *mut f64, len: usize) -> NrsfmStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        check_out(buf, "buf")?;
        let gt = s.file.gt_clouds.as_ref().ok_or_else(|| fail(NrsfmStatus::InvalidInput, "scene has no ground truth"))?;
        let flat: Vec<f64> = gt.iter().flatten().flatten().copied().collect();
        copy_out(&flat, buf, len)
    })
}

/// # Safety
/// `scene` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_scene_free(scene: *mut NrsfmScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), NrsfmStatus> {
    if len < src.len() {
        return Err(fail(NrsfmStatus::InvalidInput, format!("buffer holds {len} values, need {}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Solves one of the relaxations on a scene.
///
/// # Safety
/// `scene` must be a live handle, `params` valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_reconstruct(
    scene: *const NrsfmScene,
    params: *const NrsfmReconstructParams,
    out: *mut *mut NrsfmReconstruction,
) -> NrsfmStatus {
    guard(|| {
        let s = deref(scene, "scene")?;
        let p = deref(params, "params")?;
        check_out(out, "out")?;
        let obs = lib(s.file.observations())?;
        let mut cfg = ReconstructionConfig::new(p.method.into());
        cfg.lambda_i = p.lambda_i;
        cfg.lambda_e = p.lambda_e;
        cfg.knn = p.knn;
        cfg.e3_mode = E3Mode::All;
        if p.completion > 0 {
            cfg.completion = Completion::PseudoNeighbors(p.completion);
        }
        cfg.solver.tol = p.tol;
        cfg.solver.max_iter = p.max_iter;
        lib(cfg.validate())?;
        let graph = match (p.use_scene_graph != 0, lib(s.file.graph())?) {
            (true, Some(g)) => g,
            _ => lib(reconstruct::graph_for(&obs, &cfg))?,
        };
        let rec = lib(reconstruct::reconstruct(&obs, &graph, &cfg))?;
        *out = Box::into_raw(Box::new(NrsfmReconstruction { rec }));
        Ok(())
    })
}

/// Writes the image and point counts of a reconstruction.
///
/// # Safety
/// `rec` must be a live handle; `n` and `m` writable.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_reconstruction_dims(
    rec: *const NrsfmReconstruction,
    n: *mut usize,
    m: *mut usize,
) -> NrsfmStatus {
    guard(|| {
        let r = deref(rec, "rec")?;
        check_out(n, "n")?;
        check_out(m, "m")?;
        *n = r.rec.clouds.len();
        *m = r.rec.clouds.first().map_or(0, |c| c.len());
        Ok(())
    })
}

/// Copies the unscaled points as `n * m * 3` doubles, image-major.
///
/// # Safety
/// `rec` must be a live handle and `buf` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_reconstruction_points(
    rec: *const NrsfmReconstruction,
    buf: *mut f64,
    len: usize,
) -> NrsfmStatus {
    guard(|| {
        let r = deref(rec, "rec")?;
        check_out(buf, "buf")?;
        let flat: Vec<f64> = r.rec.clouds.iter().flatten().flat_map(|p| [p.x, p.y, p.z]).collect();
        copy_out(&flat, buf, len)
    })
}

/// Scale-aligned RMS against the scene ground truth over visible points,
/// absolute and as a fraction of the scene diameter. Either output may be null.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_reconstruction_rms(
    rec: *const NrsfmReconstruction,
    scene: *const NrsfmScene,
    rms: *mut f64,
    relative: *mut f64,
) -> NrsfmStatus {
    guard(|| {
        let r = deref(rec, "rec")?;
        let s = deref(scene, "scene")?;
        let gt = s.file.ground_truth().ok_or_else(|| fail(NrsfmStatus::InvalidInput, "scene has no ground truth"))?;
        let report = lib(evaluate(&r.rec.clouds, &gt, Some(&s.file.visibility), None))?;
        if !rms.is_null() {
            *rms = report.rms;
        }
        if !relative.is_null() {
            *relative = report.relative_rms();
        }
        Ok(())
    })
}

/// # Safety
/// `rec` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_reconstruction_free(rec: *mut NrsfmReconstruction) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Runs the area-compensation sampler and writes the fractions of real
/// compensating depths for one and two displaced vertices.
///
/// # Safety
/// `first` and `second` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_lemma1(
    samples: usize,
    h1_max: f64,
    h2_max: f64,
    edge_scale: f64,
    seed: u64,
    first: *mut f64,
    second: *mut f64,
) -> NrsfmStatus {
    guard(|| {
        check_out(first, "first")?;
        check_out(second, "second")?;
        let rep = lib(lemma1_sample(&Lemma1Config { samples, h1_max, h2_max, edge_scale, seed }))?;
        *first = rep.first_fraction;
        *second = rep.second_fraction;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn nrsfm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
