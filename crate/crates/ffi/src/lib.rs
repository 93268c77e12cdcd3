//! C ABI over the `layerprobe` library.
//!
//! Objects cross the boundary as opaque handles created by `lp_*_read`,
//! `lp_*_from_buffer` or `lp_*_compute` and released with the matching
//! `lp_*_free`. Every fallible call returns an [`LpStatus`]; on failure
//! `lp_last_error_message` describes the problem for the calling thread.
//! Matrices are exchanged as row-major `double` buffers whose length the
//! caller passes explicitly.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use layerprobe::classvec::{class_vectors, fix_signs, pairplot_coords, typicality_scores, ClassVecError, ClassVectorSet, Variant};
use layerprobe::ingest::{read_activation_dump, read_labels, IngestError, LayerActivations, Labels};
use layerprobe::linalg::LinalgError;
use layerprobe::probe::{confusion_matrix, ProbeError};
use layerprobe::tour::{build_tour_basis, geodesic_path, Frame, TourBasis, TourError};
use layerprobe::tsne::{tsne_embed, TsneError, TsneParams};
use nalgebra::DMatrix;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpVariant {
    Mean = 0,
    SecondMoment = 1,
    WithinClassPc1 = 2,
}

impl From<LpVariant> for Variant {
    fn from(v: LpVariant) -> Self {
        match v {
            LpVariant::Mean => Variant::Mean,
            LpVariant::SecondMoment => Variant::SecondMoment,
            LpVariant::WithinClassPc1 => Variant::WithinClassPc1,
        }
    }
}

/// One layer's N×M activations.
pub struct LpActivations(LayerActivations);
/// Class index per sample.
pub struct LpLabels(Labels);
/// Sign-fixed class vectors.
pub struct LpClassVectors(ClassVectorSet);
/// Reduced tour coordinates and their basis.
pub struct LpTourBasis(TourBasis);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(LpStatus, String);

impl Failure {
    fn new(status: LpStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let status = match e {
            IngestError::IoFailure { .. } => LpStatus::Io,
            IngestError::InvalidShape(_) | IngestError::InvalidLabels(_) => LpStatus::InvalidArgument,
            _ => LpStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<ClassVecError> for Failure {
    fn from(e: ClassVecError) -> Self {
        let status = match e {
            ClassVecError::DimensionMismatch { .. } => LpStatus::DimensionMismatch,
            ClassVecError::DegenerateClass(_) | ClassVecError::ZeroVariance { .. } => LpStatus::Numerical,
            _ => LpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<TourError> for Failure {
    fn from(e: TourError) -> Self {
        let status = match e {
            TourError::DimensionMismatch { .. } => LpStatus::DimensionMismatch,
            TourError::Linalg(_) | TourError::CollinearAxes { .. } | TourError::NotOrthonormal(_) => LpStatus::Numerical,
            _ => LpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<LinalgError> for Failure {
    fn from(e: LinalgError) -> Self {
        Failure(LpStatus::Numerical, e.to_string())
    }
}

impl From<TsneError> for Failure {
    fn from(e: TsneError) -> Self {
        let status = match e {
            TsneError::InvalidParams(_) => LpStatus::InvalidArgument,
            _ => LpStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<ProbeError> for Failure {
    fn from(e: ProbeError) -> Self {
        let status = match e {
            ProbeError::DimensionMismatch { .. } | ProbeError::LengthMismatch { .. } => LpStatus::DimensionMismatch,
            _ => LpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, turning errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            LpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(LpStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::new(LpStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::new(LpStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(LpStatus::NullPointer, "output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_matrix(m: &DMatrix<f64>, out: *mut f64, len: usize) -> Result<(), Failure> {
    let need = m.nrows() * m.ncols();
    if out.is_null() {
        return Err(Failure::new(LpStatus::NullPointer, "output buffer is null"));
    }
    if len < need {
        return Err(Failure::new(LpStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}")));
    }
    let dst = std::slice::from_raw_parts_mut(out, need);
    for (i, row) in m.row_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            dst[i * m.ncols() + j] = *v;
        }
    }
    Ok(())
}

unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize) -> Result<DMatrix<f64>, Failure> {
    if data.is_null() {
        return Err(Failure::new(LpStatus::NullPointer, "input buffer is null"));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure::new(LpStatus::InvalidArgument, "matrix size overflows"))?;
    Ok(DMatrix::from_row_slice(rows, cols, std::slice::from_raw_parts(data, len)))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_read(path: *const c_char, out: *mut *mut LpActivations) -> LpStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, LpActivations(read_activation_dump(path)?))
    })
}

/// Copies an N×M row-major buffer into a new activation handle.
///
/// # Safety
/// `data` must point to `n * m` readable doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_from_buffer(
    data: *const f64,
    n: usize,
    m: usize,
    out: *mut *mut LpActivations,
) -> LpStatus {
    guard(|| {
        let values = read_matrix(data, n, m)?;
        store(out, LpActivations(LayerActivations::new("buffer", values)?))
    })
}

/// # Safety
/// `x` must be a live handle; `n` and `m` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_shape(x: *const LpActivations, n: *mut usize, m: *mut usize) -> LpStatus {
    guard(|| {
        let x = deref(x, "activations")?;
        if n.is_null() || m.is_null() {
            return Err(Failure::new(LpStatus::NullPointer, "shape output is null"));
        }
        *n = x.0.n();
        *m = x.0.m();
        Ok(())
    })
}

/// # Safety
/// `x` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_copy(x: *const LpActivations, out: *mut f64, len: usize) -> LpStatus {
    guard(|| write_matrix(&deref(x, "activations")?.0.values, out, len))
}

/// # Safety
/// `x` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_activations_free(x: *mut LpActivations) {
    if !x.is_null() {
        drop(Box::from_raw(x));
    }
}

/// Reads an LPRB label file. `k = 0` infers the class count from the largest label.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_labels_read(path: *const c_char, k: usize, out: *mut *mut LpLabels) -> LpStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, LpLabels(read_labels(path, (k > 0).then_some(k))?))
    })
}

/// # Safety
/// `data` must point to `n` readable values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_labels_from_buffer(data: *const u32, n: usize, k: usize, out: *mut *mut LpLabels) -> LpStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::new(LpStatus::NullPointer, "label buffer is null"));
        }
        let y = std::slice::from_raw_parts(data, n).iter().map(|&v| v as usize).collect();
        store(out, LpLabels(Labels::new(y, k)?))
    })
}

/// # Safety
/// `y` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_labels_free(y: *mut LpLabels) {
    if !y.is_null() {
        drop(Box::from_raw(y));
    }
}

/// Computes sign-fixed class vectors for every class.
///
/// # Safety
/// `x`, `y` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_class_vectors_compute(
    x: *const LpActivations,
    y: *const LpLabels,
    variant: LpVariant,
    out: *mut *mut LpClassVectors,
) -> LpStatus {
    guard(|| {
        let (x, y) = (deref(x, "activations")?, deref(y, "labels")?);
        let cvs = fix_signs(class_vectors(&x.0, &y.0, variant.into())?);
        store(out, LpClassVectors(cvs))
    })
}

/// # Safety
/// `c` must be a live handle; `m` and `k` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lp_class_vectors_shape(c: *const LpClassVectors, m: *mut usize, k: *mut usize) -> LpStatus {
    guard(|| {
        let c = deref(c, "class vectors")?;
        if m.is_null() || k.is_null() {
            return Err(Failure::new(LpStatus::NullPointer, "shape output is null"));
        }
        *m = c.0.m();
        *k = c.0.k();
        Ok(())
    })
}

/// Copies the M×K matrix of unit class vectors (one per column).
///
/// # Safety
/// `c` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_class_vectors_copy(c: *const LpClassVectors, out: *mut f64, len: usize) -> LpStatus {
    guard(|| write_matrix(&deref(c, "class vectors")?.0.theta, out, len))
}

/// # Safety
/// `c` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_class_vectors_free(c: *mut LpClassVectors) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Writes the N×2 class-pair coordinates of every sample.
///
/// # Safety
/// Handles must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_pairplot(
    x: *const LpActivations,
    c: *const LpClassVectors,
    j: usize,
    k: usize,
    out: *mut f64,
    len: usize,
) -> LpStatus {
    guard(|| {
        let coords = pairplot_coords(&deref(x, "activations")?.0, &deref(c, "class vectors")?.0, j, k)?;
        write_matrix(&coords, out, len)
    })
}

/// Writes N standardised typicality scores along class `k`'s vector.
///
/// # Safety
/// Handles must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_typicality(
    x: *const LpActivations,
    y: *const LpLabels,
    c: *const LpClassVectors,
    k: usize,
    out: *mut f64,
    len: usize,
) -> LpStatus {
    guard(|| {
        let t = typicality_scores(&deref(x, "activations")?.0, &deref(y, "labels")?.0, &deref(c, "class vectors")?.0, k)?;
        write_matrix(&DMatrix::from_column_slice(t.scores.len(), 1, &t.scores), out, len)
    })
}

/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_tour_basis_build(
    x: *const LpActivations,
    c: *const LpClassVectors,
    tol: f64,
    out: *mut *mut LpTourBasis,
) -> LpStatus {
    guard(|| {
        let basis = build_tour_basis(&deref(x, "activations")?.0, &deref(c, "class vectors")?.0, tol)?;
        store(out, LpTourBasis(basis))
    })
}

/// # Safety
/// `b` must be a live handle and `rank` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_tour_basis_rank(b: *const LpTourBasis, rank: *mut usize) -> LpStatus {
    guard(|| {
        let b = deref(b, "tour basis")?;
        if rank.is_null() {
            return Err(Failure::new(LpStatus::NullPointer, "rank output is null"));
        }
        *rank = b.0.rank;
        Ok(())
    })
}

/// Projects the reduced data through an r×2 row-major frame into N×2 coordinates.
///
/// # Safety
/// `frame` must hold `rank * 2` doubles and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_tour_basis_project(b: *const LpTourBasis, frame: *const f64, out: *mut f64, len: usize) -> LpStatus {
    guard(|| {
        let b = deref(b, "tour basis")?;
        let f = Frame::new(read_matrix(frame, b.0.rank, 2)?, "")?;
        write_matrix(&(&b.0.projected * f.basis()), out, len)
    })
}

/// # Safety
/// `b` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_tour_basis_free(b: *mut LpTourBasis) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Interpolates from frame `a` to frame `b` (both dim×2, row-major). Writes
/// `steps + 1` frames back to back, `(steps + 1) * dim * 2` doubles.
///
/// # Safety
/// `a` and `b` must hold `dim * 2` doubles; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_geodesic_path(
    a: *const f64,
    b: *const f64,
    dim: usize,
    steps: usize,
    out: *mut f64,
    len: usize,
) -> LpStatus {
    guard(|| {
        let fa = Frame::new(read_matrix(a, dim, 2)?, "a")?;
        let fb = Frame::new(read_matrix(b, dim, 2)?, "b")?;
        let path = geodesic_path(&fa, &fb, steps)?;
        let per = dim * 2;
        let need = per * path.len();
        if out.is_null() {
            return Err(Failure::new(LpStatus::NullPointer, "output buffer is null"));
        }
        if len < need {
            return Err(Failure::new(LpStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}")));
        }
        for (i, f) in path.iter().enumerate() {
            write_matrix(f.basis(), out.add(i * per), per)?;
        }
        Ok(())
    })
}

/// Runs t-SNE with default schedule and writes N×2 coordinates.
///
/// # Safety
/// `x` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lp_tsne_embed(
    x: *const LpActivations,
    perplexity: f64,
    iterations: usize,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> LpStatus {
    guard(|| {
        let params = TsneParams {
            perplexity,
            iterations,
            seed,
            ..Default::default()
        };
        let r = tsne_embed(&deref(x, "activations")?.0, &params)?;
        write_matrix(&r.coords, out, len)
    })
}

/// Tallies a K×K confusion matrix (rows true, columns predicted) into
/// `counts` and its accuracy into `accuracy` (may be NULL).
///
/// # Safety
/// `predicted` and `truth` must hold `n` values; `counts` must hold `k * k`.
#[no_mangle]
pub unsafe extern "C" fn lp_confusion_matrix(
    predicted: *const u32,
    truth: *const u32,
    n: usize,
    k: usize,
    counts: *mut u64,
    accuracy: *mut f64,
) -> LpStatus {
    guard(|| {
        if predicted.is_null() || truth.is_null() || counts.is_null() {
            return Err(Failure::new(LpStatus::NullPointer, "null buffer"));
        }
        let pred: Vec<usize> = std::slice::from_raw_parts(predicted, n).iter().map(|&v| v as usize).collect();
        let y = Labels::new(std::slice::from_raw_parts(truth, n).iter().map(|&v| v as usize).collect(), k)?;
        let cm = confusion_matrix(&pred, &y)?;
        let dst = std::slice::from_raw_parts_mut(counts, k * k);
        for t in 0..k {
            for p in 0..k {
                dst[t * k + p] = cm.get(t, p);
            }
        }
        if !accuracy.is_null() {
            *accuracy = cm.accuracy();
        }
        Ok(())
    })
}
