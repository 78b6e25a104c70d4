//! C ABI over `evm-sinr`.
//!
//! Every function returns an [`EvmSinrStatus`]; results come back through
//! out-pointers. On failure the message is kept per thread and can be read
//! with [`evm_sinr_last_error_message`].
//!
//! Complex arrays are interleaved `re, im` doubles. Grids are carrier-major:
//! sample `(c, f)` of a `carriers x frames` grid sits at `c * frames + f`.

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use evm_sinr::metrics::{predict_from_percent, rms_evm, sinr_signalled, EvmReference, GradientModel};
use evm_sinr::precoding::zero_forcing;
use evm_sinr::waveform::{ComplexGrid, Constellation};
use evm_sinr::{Complex64, Error};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvmSinrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InfeasibleSpec = 3,
    IllConditioned = 4,
    DegenerateInput = 5,
    UnboundedPrediction = 6,
    NotTabulated = 7,
    Internal = 99,
}

impl From<&Error> for EvmSinrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Config { .. } | Error::Parse(_) => EvmSinrStatus::InvalidArgument,
            Error::InfeasibleSpec(_) => EvmSinrStatus::InfeasibleSpec,
            Error::IllConditioned { .. } => EvmSinrStatus::IllConditioned,
            Error::DegenerateInput(_) => EvmSinrStatus::DegenerateInput,
            Error::UnboundedPrediction => EvmSinrStatus::UnboundedPrediction,
            Error::Io(_) | Error::Csv(_) => EvmSinrStatus::Internal,
        }
    }
}

/// Opaque QAM constellation.
pub struct EvmSinrConstellation {
    inner: Constellation,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(EvmSinrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(EvmSinrStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EvmSinrStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EvmSinrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            EvmSinrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EvmSinrStatus::Internal
        }
    }
}

unsafe fn read_complex(ptr: *const f64, n: usize, what: &str) -> Result<Vec<Complex64>, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    let raw = slice::from_raw_parts(ptr, 2 * n);
    Ok(raw.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect())
}

unsafe fn read_grid(ptr: *const f64, carriers: usize, frames: usize, what: &str) -> Result<ComplexGrid, Failure> {
    let data = read_complex(ptr, carriers * frames, what)?;
    Ok(ComplexGrid::from_vec(carriers, frames, data)?)
}

unsafe fn write_out<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    *ptr = value;
    Ok(())
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a Gray-labelled unit-power constellation of `order` points.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_constellation_new(order: usize, out: *mut *mut EvmSinrConstellation) -> EvmSinrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Constellation::new(order)?;
        *out = Box::into_raw(Box::new(EvmSinrConstellation { inner }));
        Ok(())
    })
}

/// Frees a constellation. Null is ignored.
///
/// # Safety
/// `c` must be null or come from [`evm_sinr_constellation_new`], and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_constellation_free(c: *mut EvmSinrConstellation) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of points, or 0 for null.
///
/// # Safety
/// `c` must be null or a live constellation.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_constellation_order(c: *const EvmSinrConstellation) -> usize {
    c.as_ref().map_or(0, |c| c.inner.order())
}

/// Writes the points, indexed by label, into `out` (`2 * order` doubles).
///
/// # Safety
/// `c` must be a live constellation and `out` valid for `2 * len` doubles.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_constellation_points(
    c: *const EvmSinrConstellation,
    out: *mut f64,
    len: usize,
) -> EvmSinrStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("constellation"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != c.inner.order() {
            return Err(Failure(
                EvmSinrStatus::InvalidArgument,
                format!("buffer holds {len} points, constellation has {}", c.inner.order()),
            ));
        }
        let dst = slice::from_raw_parts_mut(out, 2 * len);
        for (p, slot) in c.inner.points().iter().zip(dst.chunks_exact_mut(2)) {
            slot[0] = p.re;
            slot[1] = p.im;
        }
        Ok(())
    })
}

/// RMS EVM in percent of a `carriers x frames` grid. With `reference`
/// null the nearest constellation point is used as the reference.
///
/// # Safety
/// `received` and a non-null `reference` must hold `2 * carriers * frames`
/// doubles; `out_percent` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_rms_evm(
    c: *const EvmSinrConstellation,
    received: *const f64,
    reference: *const f64,
    carriers: usize,
    frames: usize,
    out_percent: *mut f64,
) -> EvmSinrStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("constellation"))?;
        let rx = read_grid(received, carriers, frames, "received")?;
        let est = if reference.is_null() {
            rms_evm(&rx, EvmReference::DecisionDirected, &c.inner)?
        } else {
            let r = read_grid(reference, carriers, frames, "reference")?;
            rms_evm(&rx, EvmReference::DataAided(&r), &c.inner)?
        };
        write_out(out_percent, est.rms_percent, "out_percent")
    })
}

/// Predicted SINR in dB from an EVM in percent and gradient `a_value`.
///
/// # Safety
/// `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_predict(evm_percent: f64, a_value: f64, out_db: *mut f64) -> EvmSinrStatus {
    guard(|| {
        let db = predict_from_percent(evm_percent, a_value)?;
        write_out(out_db, db, "out_db")
    })
}

/// Tabulated gradient for an order and interferer count.
///
/// # Safety
/// `out_a` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_reference_gradient(
    qam_order: usize,
    n_interferers: usize,
    out_a: *mut f64,
) -> EvmSinrStatus {
    guard(|| match GradientModel::reference(qam_order, n_interferers) {
        Some(m) => write_out(out_a, m.a_value, "out_a"),
        None => Err(Failure(
            EvmSinrStatus::NotTabulated,
            format!("no tabulated gradient for {qam_order}-QAM with {n_interferers} interferers"),
        )),
    })
}

/// Signalled SINR in dB from the wanted grid, `n_interferers` interferer
/// grids and the noise variance.
///
/// # Safety
/// Every grid pointer must hold `2 * carriers * frames` doubles, and
/// `interferers` must hold `n_interferers` pointers (it may be null when
/// `n_interferers` is 0).
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_signalled(
    wanted: *const f64,
    interferers: *const *const f64,
    n_interferers: usize,
    carriers: usize,
    frames: usize,
    noise_var: f64,
    out_db: *mut f64,
) -> EvmSinrStatus {
    guard(|| {
        let w = read_grid(wanted, carriers, frames, "wanted")?;
        let ptrs: &[*const f64] = if n_interferers == 0 {
            &[]
        } else if interferers.is_null() {
            return Err(null("interferers"));
        } else {
            slice::from_raw_parts(interferers, n_interferers)
        };
        let grids = ptrs
            .iter()
            .map(|&p| read_grid(p, carriers, frames, "interferer"))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&ComplexGrid> = grids.iter().collect();
        let db = sinr_signalled(&w, &refs, noise_var)?;
        write_out(out_db, db, "out_db")
    })
}

/// Zero-forcing precoder for a flat `n_users x n_tx` channel given
/// row-major. Writes the `n_tx x n_users` weights row-major, with unit-norm
/// columns, and the channel condition number.
///
/// # Safety
/// `h` must hold `2 * n_users * n_tx` doubles, `out_w` the same, and
/// `out_condition` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn evm_sinr_zero_forcing(
    h: *const f64,
    n_users: usize,
    n_tx: usize,
    out_w: *mut f64,
    out_condition: *mut f64,
) -> EvmSinrStatus {
    guard(|| {
        let data = read_complex(h, n_users * n_tx, "h")?;
        if out_w.is_null() {
            return Err(null("out_w"));
        }
        let h = DMatrix::from_row_slice(n_users, n_tx, &data);
        let p = zero_forcing(&h)?;
        let dst = slice::from_raw_parts_mut(out_w, 2 * n_users * n_tx);
        let w = p.weights();
        for t in 0..n_tx {
            for u in 0..n_users {
                let k = 2 * (t * n_users + u);
                dst[k] = w[(t, u)].re;
                dst[k + 1] = w[(t, u)].im;
            }
        }
        if !out_condition.is_null() {
            *out_condition = p.condition();
        }
        Ok(())
    })
}
