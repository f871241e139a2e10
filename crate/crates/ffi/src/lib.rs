//! C ABI over the `tubeseg` library.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load`/producer function and released by the matching `*_free`.
//! Fallible functions return a [`TubesegStatus`]; on failure the message is
//! available from [`tubeseg_last_error_message`] on the same thread.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tubeseg::config::PipelineConfig;
use tubeseg::levelset::segment_tree;
use tubeseg::phantom::{dice, generate, PhantomKind, PhantomSpec};
use tubeseg::pipeline::{run_pipeline_on, PipelineRun};
use tubeseg::skeleton::{
    cpr_straighten, extract_centreline, load_centreline, resample_polyline, save_centreline, Centreline,
};
use tubeseg::volume::io::{load_mask, load_volume, save_mask, save_volume};
use tubeseg::volume::{BinaryMask, Geometry, Volume3D};
use tubeseg::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TubesegStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidArgument = -2,
    Config = -3,
    Io = -4,
    Format = -5,
    GeometryMismatch = -6,
    Empty = -7,
    NoSeed = -8,
    AortaNotFound = -9,
    NonConvergence = -10,
    Cfl = -11,
    Stagnation = -12,
    Panic = -100,
}

/// Intensity volume.
pub struct TubesegVolume(Volume3D);

/// Binary voxel mask.
pub struct TubesegMask(BinaryMask);

/// Pipeline configuration.
pub struct TubesegConfig(PipelineConfig);

/// Products and report of a pipeline run.
pub struct TubesegRun(PipelineRun);

/// Branching centreline.
pub struct TubesegCentreline(Centreline);

struct Failure {
    status: TubesegStatus,
    message: String,
}

impl Failure {
    fn new(status: TubesegStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Failure::new(TubesegStatus::NullPointer, format!("`{what}` is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure::new(TubesegStatus::InvalidArgument, message)
    }
}

fn status_of(e: &Error) -> TubesegStatus {
    match e.root() {
        Error::Io { .. } => TubesegStatus::Io,
        Error::Format(_) => TubesegStatus::Format,
        Error::InvalidArgument(_) => TubesegStatus::InvalidArgument,
        Error::Config(_) => TubesegStatus::Config,
        Error::GeometryMismatch(_) => TubesegStatus::GeometryMismatch,
        Error::Empty(_) => TubesegStatus::Empty,
        Error::NoSeed { .. } => TubesegStatus::NoSeed,
        Error::AortaNotFound => TubesegStatus::AortaNotFound,
        Error::NonConvergence { .. } => TubesegStatus::NonConvergence,
        Error::Cfl { .. } => TubesegStatus::Cfl,
        Error::Stagnation { .. } => TubesegStatus::Stagnation,
        Error::Stage { .. } => unreachable!("root never returns a stage wrapper"),
    }
}

fn chain_message(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        src = s.source();
    }
    msg
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(status_of(&e), chain_message(&e))
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TubesegStatus {
    clear_last_error();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let what = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure::new(TubesegStatus::Panic, format!("panic: {what}")))
    });
    match outcome {
        Ok(()) => TubesegStatus::Ok,
        Err(f) => {
            set_last_error(&f.message);
            f.status
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn array3<T: Copy>(p: *const T, what: &str) -> Result<[T; 3], Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok([*p, *p.add(1), *p.add(2)])
}

unsafe fn write3<T: Copy>(p: *mut T, v: [T; 3], what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    for (i, x) in v.into_iter().enumerate() {
        *p.add(i) = x;
    }
    Ok(())
}

unsafe fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    *out = std::ptr::null_mut();
    Ok(())
}

fn into_raw_string(s: String) -> *mut c_char {
    CString::new(s).map_or(std::ptr::null_mut(), CString::into_raw)
}

unsafe fn config_or_default(cfg: *const TubesegConfig) -> PipelineConfig {
    cfg.as_ref().map(|c| c.0.clone()).unwrap_or_default()
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tubeseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn tubeseg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Volume from `dims[0] * dims[1] * dims[2]` samples in x-fastest order.
/// `origin` may be NULL for a zero origin.
///
/// # Safety
/// `dims`, `spacing` and a non-NULL `origin` point to 3 readable values;
/// `data` points to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_volume_new(
    dims: *const usize,
    spacing: *const f64,
    origin: *const f64,
    data: *const f64,
    len: usize,
    out: *mut *mut TubesegVolume,
) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let dims = array3(dims, "dims")?;
        let spacing = array3(spacing, "spacing")?;
        let origin = if origin.is_null() {
            [0.0; 3]
        } else {
            array3(origin, "origin")?
        };
        if data.is_null() {
            return Err(Failure::null("data"));
        }
        let g = Geometry::new(dims, spacing, origin)?;
        let v = Volume3D::from_vec(g, std::slice::from_raw_parts(data, len).to_vec())?;
        *out = Box::into_raw(Box::new(TubesegVolume(v)));
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_volume_load(path: *const c_char, out: *mut *mut TubesegVolume) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let v = load_volume(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(TubesegVolume(v)));
        Ok(())
    })
}

/// # Safety
/// `vol` is a live volume handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_volume_save(vol: *const TubesegVolume, path: *const c_char) -> TubesegStatus {
    guard(|| Ok(save_volume(&borrow(vol, "vol")?.0, text(path, "path")?)?))
}

/// # Safety
/// `vol` is a live volume handle; `dims` has room for 3 values.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_volume_dims(vol: *const TubesegVolume, dims: *mut usize) -> TubesegStatus {
    guard(|| write3(dims, borrow(vol, "vol")?.0.dims(), "dims"))
}

/// # Safety
/// `vol` is a live volume handle; `spacing` has room for 3 values.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_volume_spacing(vol: *const TubesegVolume, spacing: *mut f64) -> TubesegStatus {
    guard(|| write3(spacing, borrow(vol, "vol")?.0.spacing(), "spacing"))
}

/// Borrowed view of the samples, valid while `vol` lives. Returns NULL if
/// `vol` is NULL.
///
/// # Safety
/// `vol` is NULL or a live volume handle; `len` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_volume_data(vol: *const TubesegVolume, len: *mut usize) -> *const f64 {
    let Some(v) = vol.as_ref() else {
        return std::ptr::null();
    };
    if let Some(l) = len.as_mut() {
        *l = v.0.data().len();
    }
    v.0.data().as_ptr()
}

/// # Safety
/// `vol` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_volume_free(vol: *mut TubesegVolume) {
    free_box(vol)
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_mask_load(path: *const c_char, out: *mut *mut TubesegMask) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let m = load_mask(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(TubesegMask(m)));
        Ok(())
    })
}

/// # Safety
/// `mask` is a live mask handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_mask_save(mask: *const TubesegMask, path: *const c_char) -> TubesegStatus {
    guard(|| Ok(save_mask(&borrow(mask, "mask")?.0, text(path, "path")?)?))
}

/// # Safety
/// `mask` is a live mask handle; `dims` has room for 3 values.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_mask_dims(mask: *const TubesegMask, dims: *mut usize) -> TubesegStatus {
    guard(|| write3(dims, borrow(mask, "mask")?.0.dims(), "dims"))
}

/// Number of foreground voxels, or 0 if `mask` is NULL.
///
/// # Safety
/// `mask` is NULL or a live mask handle.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_mask_count(mask: *const TubesegMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.count())
}

/// Copies the mask as 0/1 bytes in x-fastest order. `len` must equal the
/// voxel count.
///
/// # Safety
/// `mask` is a live mask handle; `out` has room for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_mask_copy(mask: *const TubesegMask, out: *mut u8, len: usize) -> TubesegStatus {
    guard(|| {
        let m = &borrow(mask, "mask")?.0;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        if len != m.data().len() {
            return Err(Failure::invalid(format!(
                "buffer holds {len} bytes, mask has {} voxels",
                m.data().len()
            )));
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, &b) in dst.iter_mut().zip(m.data()) {
            *d = u8::from(b);
        }
        Ok(())
    })
}

/// Dice overlap of two masks on the same grid.
///
/// # Safety
/// `a` and `b` are live mask handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_mask_dice(
    a: *const TubesegMask,
    b: *const TubesegMask,
    out: *mut f64,
) -> TubesegStatus {
    guard(|| {
        let d = dice(&borrow(a, "a")?.0, &borrow(b, "b")?.0)?;
        *borrow_mut(out, "out")? = d;
        Ok(())
    })
}

/// # Safety
/// `mask` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_mask_free(mask: *mut TubesegMask) {
    free_box(mask)
}

/// Synthetic phantom of the named kind (`tube`, `helix`, `y_bifurcation`,
/// `ball`, `plate`, `aorta_plus_coronary`) on an isotropic grid.
/// `out_truth` may be NULL.
///
/// # Safety
/// `kind` is a NUL-terminated string; `dims` points to 3 values; `out_volume`
/// is writable; `out_truth` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_phantom_generate(
    kind: *const c_char,
    dims: *const usize,
    spacing: f64,
    hard_edges: bool,
    noise_seed: u64,
    out_volume: *mut *mut TubesegVolume,
    out_truth: *mut *mut TubesegMask,
) -> TubesegStatus {
    guard(|| {
        check_out(out_volume)?;
        if !out_truth.is_null() {
            *out_truth = std::ptr::null_mut();
        }
        let kind: PhantomKind = text(kind, "kind")?.parse()?;
        let g = Geometry::new(array3(dims, "dims")?, [spacing; 3], [0.0; 3])?;
        let mut spec = PhantomSpec::preset(kind, g, None, None)?;
        if hard_edges {
            spec = spec.hard();
        }
        spec.seed = noise_seed;
        let (vol, truth) = generate(&spec)?;
        *out_volume = Box::into_raw(Box::new(TubesegVolume(vol)));
        if !out_truth.is_null() {
            *out_truth = Box::into_raw(Box::new(TubesegMask(truth.mask)));
        }
        Ok(())
    })
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_config_default(out: *mut *mut TubesegConfig) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        *out = Box::into_raw(Box::new(TubesegConfig(PipelineConfig::default())));
        Ok(())
    })
}

/// Configuration from TOML text.
///
/// # Safety
/// `toml` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_config_parse(toml: *const c_char, out: *mut *mut TubesegConfig) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let c = PipelineConfig::parse(text(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(TubesegConfig(c)));
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_config_load(path: *const c_char, out: *mut *mut TubesegConfig) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let c = PipelineConfig::load(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(TubesegConfig(c)));
        Ok(())
    })
}

/// Applies one `key=value` override. The configuration is left unchanged if
/// the result does not validate.
///
/// # Safety
/// `cfg` is a live config handle; `assignment` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_config_set(cfg: *mut TubesegConfig, assignment: *const c_char) -> TubesegStatus {
    guard(|| {
        let c = borrow_mut(cfg, "cfg")?;
        c.0 = c.0.with_overrides(&[text(assignment, "assignment")?])?;
        Ok(())
    })
}

/// TOML rendering, to be released with [`tubeseg_string_free`]. NULL if
/// `cfg` is NULL.
///
/// # Safety
/// `cfg` is NULL or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_config_to_toml(cfg: *const TubesegConfig) -> *mut c_char {
    cfg.as_ref()
        .map_or(std::ptr::null_mut(), |c| into_raw_string(c.0.to_toml()))
}

/// # Safety
/// `cfg` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_config_free(cfg: *mut TubesegConfig) {
    free_box(cfg)
}

/// Runs the full pipeline. `cfg` NULL uses defaults; `out_dir` NULL keeps
/// everything in memory. The run handle is written whenever the inputs are
/// valid, including when a stage fails, so the partial report and products
/// can be inspected.
///
/// # Safety
/// `vol` is a live volume handle; `cfg` is NULL or a live config handle;
/// `out_dir` is NULL or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_pipeline_run(
    vol: *const TubesegVolume,
    cfg: *const TubesegConfig,
    out_dir: *const c_char,
    out: *mut *mut TubesegRun,
) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let vol = &borrow(vol, "vol")?.0;
        let cfg = config_or_default(cfg);
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(text(out_dir, "out_dir")?))
        };
        let (run, res) = run_pipeline_on(vol, &cfg, dir);
        *out = Box::into_raw(Box::new(TubesegRun(run)));
        Ok(res?)
    })
}

/// Run report as JSON, to be released with [`tubeseg_string_free`]. NULL if
/// `run` is NULL.
///
/// # Safety
/// `run` is NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_run_report_json(run: *const TubesegRun) -> *mut c_char {
    run.as_ref()
        .map_or(std::ptr::null_mut(), |r| into_raw_string(r.0.report.to_json()))
}

/// Seed voxel used for segmentation.
///
/// # Safety
/// `run` is a live run handle; `ijk` has room for 3 values.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_run_seed(run: *const TubesegRun, ijk: *mut usize) -> TubesegStatus {
    guard(|| {
        let seed = borrow(run, "run")?
            .0
            .report
            .seed
            .ok_or_else(|| Failure::new(TubesegStatus::Empty, "run has no seed"))?;
        write3(ijk, seed, "ijk")
    })
}

/// Copy of the segmentation mask.
///
/// # Safety
/// `run` is a live run handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_run_mask(run: *const TubesegRun, out: *mut *mut TubesegMask) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let m = borrow(run, "run")?.0.mask.clone();
        let m = m.ok_or_else(|| Failure::new(TubesegStatus::Empty, "run has no segmentation"))?;
        *out = Box::into_raw(Box::new(TubesegMask(m)));
        Ok(())
    })
}

/// Copy of the extracted centreline.
///
/// # Safety
/// `run` is a live run handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_run_centreline(
    run: *const TubesegRun,
    out: *mut *mut TubesegCentreline,
) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let c = borrow(run, "run")?.0.centreline.clone();
        let c = c.ok_or_else(|| Failure::new(TubesegStatus::Empty, "run has no centreline"))?;
        *out = Box::into_raw(Box::new(TubesegCentreline(c)));
        Ok(())
    })
}

/// Copy of the straightened volume.
///
/// # Safety
/// `run` is a live run handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_run_cpr(run: *const TubesegRun, out: *mut *mut TubesegVolume) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let v = borrow(run, "run")?.0.cpr.clone();
        let v = v.ok_or_else(|| Failure::new(TubesegStatus::Empty, "run has no straightened volume"))?;
        *out = Box::into_raw(Box::new(TubesegVolume(v)));
        Ok(())
    })
}

/// # Safety
/// `run` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_run_free(run: *mut TubesegRun) {
    free_box(run)
}

/// Slice-by-slice segmentation from a seed voxel with the intensity gate
/// `[hu_lo, hu_hi]`. `cfg` NULL uses defaults.
///
/// # Safety
/// `vol` is a live volume handle; `seed` points to 3 values; `cfg` is NULL or
/// a live config handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_segment(
    vol: *const TubesegVolume,
    seed: *const usize,
    hu_lo: f64,
    hu_hi: f64,
    cfg: *const TubesegConfig,
    out: *mut *mut TubesegMask,
) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let vol = &borrow(vol, "vol")?.0;
        let seed = array3(seed, "seed")?;
        if (0..3).any(|a| seed[a] >= vol.dims()[a]) {
            return Err(Failure::invalid(format!(
                "seed {seed:?} outside volume {:?}",
                vol.dims()
            )));
        }
        if !(hu_lo < hu_hi) {
            return Err(Failure::invalid(format!("empty intensity gate [{hu_lo}, {hu_hi}]")));
        }
        let ep = config_or_default(cfg).evolution_params(Some([hu_lo, hu_hi]));
        let seg = segment_tree(vol, seed, None, None, &ep)?;
        *out = Box::into_raw(Box::new(TubesegMask(seg.mask)));
        Ok(())
    })
}

/// Centreline of a single-component mask. `cfg` NULL uses defaults.
///
/// # Safety
/// `mask` is a live mask handle; `cfg` is NULL or a live config handle;
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_centreline_extract(
    mask: *const TubesegMask,
    cfg: *const TubesegConfig,
    out: *mut *mut TubesegCentreline,
) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let c = extract_centreline(&borrow(mask, "mask")?.0, &config_or_default(cfg).skeleton_params())?;
        *out = Box::into_raw(Box::new(TubesegCentreline(c)));
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_centreline_load(
    path: *const c_char,
    out: *mut *mut TubesegCentreline,
) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let c = load_centreline(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(TubesegCentreline(c)));
        Ok(())
    })
}

/// # Safety
/// `cl` is a live centreline handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_centreline_save(cl: *const TubesegCentreline, path: *const c_char) -> TubesegStatus {
    guard(|| Ok(save_centreline(&borrow(cl, "cl")?.0, text(path, "path")?)?))
}

/// Number of branches, or 0 if `cl` is NULL.
///
/// # Safety
/// `cl` is NULL or a live centreline handle.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_centreline_branch_count(cl: *const TubesegCentreline) -> usize {
    cl.as_ref().map_or(0, |c| c.0.branches.len())
}

/// Borrowed view of a branch's points as `3 * len` doubles (x, y, z in mm),
/// valid while `cl` lives. NULL if `cl` is NULL or `branch` is out of range.
///
/// # Safety
/// `cl` is NULL or a live centreline handle; `len` is NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_centreline_branch_points(
    cl: *const TubesegCentreline,
    branch: usize,
    len: *mut usize,
) -> *const f64 {
    let Some(b) = cl.as_ref().and_then(|c| c.0.branches.get(branch)) else {
        return std::ptr::null();
    };
    if let Some(l) = len.as_mut() {
        *l = b.points.len();
    }
    b.points.as_ptr().cast()
}

/// Parent branch index, or -1 for the root, an out-of-range branch or NULL.
///
/// # Safety
/// `cl` is NULL or a live centreline handle.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_centreline_branch_parent(cl: *const TubesegCentreline, branch: usize) -> isize {
    cl.as_ref()
        .and_then(|c| c.0.branches.get(branch))
        .and_then(|b| b.parent)
        .map_or(-1, |p| p as isize)
}

/// Polyline length of a branch in mm.
///
/// # Safety
/// `cl` is a live centreline handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_centreline_branch_length(
    cl: *const TubesegCentreline,
    branch: usize,
    out: *mut f64,
) -> TubesegStatus {
    guard(|| {
        let c = &borrow(cl, "cl")?.0;
        let b = c
            .branches
            .get(branch)
            .ok_or_else(|| Failure::invalid(format!("branch {branch} out of range ({} branches)", c.branches.len())))?;
        *borrow_mut(out, "out")? = b.length();
        Ok(())
    })
}

/// # Safety
/// `cl` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_centreline_free(cl: *mut TubesegCentreline) {
    free_box(cl)
}

/// Straightened volume along one branch. `cfg` NULL uses defaults.
///
/// # Safety
/// `vol` and `cl` are live handles; `cfg` is NULL or a live config handle;
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn tubeseg_cpr(
    vol: *const TubesegVolume,
    cl: *const TubesegCentreline,
    branch: usize,
    cfg: *const TubesegConfig,
    out: *mut *mut TubesegVolume,
) -> TubesegStatus {
    guard(|| {
        check_out(out)?;
        let vol = &borrow(vol, "vol")?.0;
        let c = &borrow(cl, "cl")?.0;
        let b = c
            .branches
            .get(branch)
            .ok_or_else(|| Failure::invalid(format!("branch {branch} out of range ({} branches)", c.branches.len())))?;
        let cfg = config_or_default(cfg);
        let pts = resample_polyline(&b.points, cfg.cpr_step)?;
        let s = cpr_straighten(vol, &pts, &cfg.cpr_params())?;
        *out = Box::into_raw(Box::new(TubesegVolume(s.volume)));
        Ok(())
    })
}
