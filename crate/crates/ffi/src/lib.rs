//! C ABI over the `dnls` lattice simulator.
//!
//! Objects cross the boundary as opaque handles. Each constructor writes a new
//! handle through an out-pointer and each handle has a matching `*_free`.
//! Fallible calls return a [`DnlsStatus`]; the message of the most recent
//! failure on the calling thread is available from [`dnls_last_error`].
//!
//! Complex arrays are interleaved `re, im` pairs of `double`, in the row-major
//! site order of the box `{-L, ..., L}^d`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use thiserror::Error;

use dnls::dynamics::{integrate, DynamicsError, Scheme, SchemeConfig, Trajectory};
use dnls::hopping::{HoppingError, HoppingPotential};
use dnls::lattice::{Field, LatticeError, LatticeShape, Site};
use dnls::observables::{
    growth_bound_report, hamiltonian, local_density, particle_number, ObservablesError,
};
use dnls::sampling::{sample_gaussian, sample_gibbs, GaussianSpec, GibbsSpec, SamplingError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnlsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BlowUp = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// Strang splitting for `dnls_integrate`.
pub const DNLS_SCHEME_STRANG: u32 = 0;
/// Classical fourth-order Runge–Kutta for `dnls_integrate`.
pub const DNLS_SCHEME_RK4: u32 = 1;

#[derive(Debug, Error)]
enum FfiError {
    #[error("null pointer passed as `{0}`")]
    Null(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    BlowUp(String),
    #[error("buffer holds {got} values, {need} needed")]
    Buffer { need: usize, got: usize },
}

impl FfiError {
    fn status(&self) -> DnlsStatus {
        match self {
            FfiError::Null(_) => DnlsStatus::NullPointer,
            FfiError::Invalid(_) => DnlsStatus::InvalidArgument,
            FfiError::BlowUp(_) => DnlsStatus::BlowUp,
            FfiError::Buffer { .. } => DnlsStatus::BufferTooSmall,
        }
    }
}

impl From<DynamicsError> for FfiError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::BlowUp { .. } => FfiError::BlowUp(e.to_string()),
            other => FfiError::Invalid(other.to_string()),
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for FfiError {
            fn from(e: $t) -> Self {
                FfiError::Invalid(e.to_string())
            }
        }
    )*};
}

invalid_from!(HoppingError, LatticeError, ObservablesError, SamplingError);

/// Finite-range symmetric hopping kernel.
pub struct DnlsPotential(HoppingPotential);

/// Complex field on a periodic box.
pub struct DnlsField(Field);

/// Snapshots of one integration run.
pub struct DnlsTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), FfiError>>(f: F) -> DnlsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DnlsStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.to_string());
            e.status()
        }
        Err(_) => {
            set_last_error("internal panic".into());
            DnlsStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, FfiError> {
    p.as_ref().ok_or(FfiError::Null(name))
}

unsafe fn put<T>(out: *mut T, value: T, name: &'static str) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(FfiError::Null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_handle<T>(out: *mut *mut T, value: T) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(FfiError::Null("out"));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, n: usize, name: &'static str) -> Result<&'a [T], FfiError> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn site(p: *const i64, dim: usize) -> Result<Site, FfiError> {
    Ok(Site::new(slice(p, dim, "site")?.to_vec()))
}

fn shape(dim: usize, half_width: usize) -> Result<LatticeShape, FfiError> {
    Ok(LatticeShape::new(dim, half_width)?)
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dnls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns its full length in bytes, or 0
/// when no call has failed yet.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dnls_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Sup-norm Laplacian in `dim` dimensions: `1` at the origin and `-1/(2 dim)`
/// on each of the `3^dim - 1` neighbours.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnls_potential_laplacian(
    dim: usize,
    out: *mut *mut DnlsPotential,
) -> DnlsStatus {
    guard(|| {
        put_handle(
            out,
            DnlsPotential(HoppingPotential::standard_laplacian(dim)?),
        )
    })
}

/// Nearest-neighbour Laplacian: `1` at the origin, `-1/(2 dim)` on the `2 dim`
/// axis neighbours.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnls_potential_nearest_neighbor(
    dim: usize,
    out: *mut *mut DnlsPotential,
) -> DnlsStatus {
    guard(|| {
        put_handle(
            out,
            DnlsPotential(HoppingPotential::nearest_neighbor_laplacian(dim)?),
        )
    })
}

/// Kernel from dense coefficients over `[-range, range]^dim`, row-major. The
/// coefficients must be symmetric under `z -> -z`.
///
/// # Safety
/// `coeffs` must point to `n` readable doubles; `out` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnls_potential_new(
    dim: usize,
    range: usize,
    coeffs: *const f64,
    n: usize,
    out: *mut *mut DnlsPotential,
) -> DnlsStatus {
    guard(|| {
        let c = slice(coeffs, n, "coeffs")?.to_vec();
        put_handle(out, DnlsPotential(HoppingPotential::new(dim, range, c)?))
    })
}

/// # Safety
/// `pot` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dnls_potential_range(
    pot: *const DnlsPotential,
    out: *mut usize,
) -> DnlsStatus {
    guard(|| put(out, get(pot, "pot")?.0.range(), "out"))
}

/// # Safety
/// `pot` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnls_potential_free(pot: *mut DnlsPotential) {
    free(pot)
}

/// Field on the box of half-width `half_width` from `n_values` interleaved
/// complex values.
///
/// # Safety
/// `values` must point to `2 * n_values` readable doubles; `out` must be valid
/// for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnls_field_new(
    dim: usize,
    half_width: usize,
    values: *const f64,
    n_values: usize,
    out: *mut *mut DnlsField,
) -> DnlsStatus {
    guard(|| {
        let raw = slice(values, 2 * n_values, "values")?;
        let v = raw
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        put_handle(out, DnlsField(Field::new(shape(dim, half_width)?, v)?))
    })
}

/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnls_field_zeros(
    dim: usize,
    half_width: usize,
    out: *mut *mut DnlsField,
) -> DnlsStatus {
    guard(|| put_handle(out, DnlsField(Field::zeros(shape(dim, half_width)?))))
}

/// Field with i.i.d. complex Gaussian sites of variance `variance`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnls_field_gaussian(
    dim: usize,
    half_width: usize,
    variance: f64,
    seed: u64,
    out: *mut *mut DnlsField,
) -> DnlsStatus {
    guard(|| {
        let f = sample_gaussian(&GaussianSpec::flat(variance), shape(dim, half_width)?, seed)?;
        put_handle(out, DnlsField(f))
    })
}

/// One state of a Metropolis chain for the grand-canonical measure
/// `exp(-beta (H - mu N))`, taken `burn_in + 1` sweeps after the zero field.
///
/// # Safety
/// `pot` must be a live handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnls_field_gibbs(
    pot: *const DnlsPotential,
    half_width: usize,
    beta: f64,
    mu: f64,
    lambda: f64,
    proposal_sigma: f64,
    burn_in: usize,
    seed: u64,
    out: *mut *mut DnlsField,
) -> DnlsStatus {
    guard(|| {
        let pot = &get(pot, "pot")?.0;
        let spec = GibbsSpec {
            beta,
            mu,
            lambda,
            proposal_sigma,
            burn_in,
            thinning: 1,
        };
        let mut run = sample_gibbs(&spec, pot, shape(pot.dim(), half_width)?, seed, 1)?;
        put_handle(out, DnlsField(run.samples.remove(0)))
    })
}

/// Number of sites.
///
/// # Safety
/// `field` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dnls_field_volume(field: *const DnlsField, out: *mut usize) -> DnlsStatus {
    guard(|| put(out, get(field, "field")?.0.shape().volume(), "out"))
}

/// Copies the field into `out` as interleaved complex values. `n_values` is the
/// capacity in complex values and must be at least the volume.
///
/// # Safety
/// `field` must be a live handle; `out` must point to `2 * n_values` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dnls_field_copy_values(
    field: *const DnlsField,
    out: *mut f64,
    n_values: usize,
) -> DnlsStatus {
    guard(|| {
        let vals = get(field, "field")?.0.values();
        if n_values < vals.len() {
            return Err(FfiError::Buffer {
                need: vals.len(),
                got: n_values,
            });
        }
        if out.is_null() {
            return Err(FfiError::Null("out"));
        }
        for (i, v) in vals.iter().enumerate() {
            *out.add(2 * i) = v.re;
            *out.add(2 * i + 1) = v.im;
        }
        Ok(())
    })
}

/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnls_field_free(field: *mut DnlsField) {
    free(field)
}

/// `N = Σ |ψ(x)|²`.
///
/// # Safety
/// `field` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dnls_particle_number(
    field: *const DnlsField,
    out: *mut f64,
) -> DnlsStatus {
    guard(|| put(out, particle_number(&get(field, "field")?.0), "out"))
}

/// `H = ⟨ψ, α*ψ⟩ + (λ/2) Σ |ψ(x)|⁴`.
///
/// # Safety
/// `field` and `pot` must be live handles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dnls_hamiltonian(
    field: *const DnlsField,
    pot: *const DnlsPotential,
    lambda: f64,
    out: *mut f64,
) -> DnlsStatus {
    guard(|| {
        let h = hamiltonian(&get(field, "field")?.0, &get(pot, "pot")?.0, lambda)?;
        put(out, h, "out")
    })
}

/// Localized density `Q_{ε,x}` at the site with coordinates `site[0..dim]`.
///
/// # Safety
/// `field` must be a live handle; `site` must point to `dim` readable
/// integers; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dnls_local_density(
    field: *const DnlsField,
    eps: f64,
    site_coords: *const i64,
    dim: usize,
    out: *mut f64,
) -> DnlsStatus {
    guard(|| {
        let q = local_density(&get(field, "field")?.0, eps, &site(site_coords, dim)?)?;
        put(out, q, "out")
    })
}

/// Integrates from `field0` to `t_end` with step `dt`, keeping every
/// `stride`-th state. `scheme` is `DNLS_SCHEME_STRANG` or `DNLS_SCHEME_RK4`.
/// Returns `DNLS_STATUS_BLOW_UP` when the state stops being finite.
///
/// # Safety
/// `field0` and `pot` must be live handles; `out` must be valid for a pointer
/// write.
#[no_mangle]
pub unsafe extern "C" fn dnls_integrate(
    field0: *const DnlsField,
    pot: *const DnlsPotential,
    scheme: u32,
    dt: f64,
    t_end: f64,
    stride: usize,
    lambda: f64,
    out: *mut *mut DnlsTrajectory,
) -> DnlsStatus {
    guard(|| {
        let scheme = match scheme {
            DNLS_SCHEME_STRANG => Scheme::Strang,
            DNLS_SCHEME_RK4 => Scheme::Rk4,
            other => return Err(FfiError::Invalid(format!("unknown scheme {other}"))),
        };
        let cfg = SchemeConfig {
            scheme,
            dt,
            t_end,
            snapshot_stride: stride,
            lambda,
        };
        let traj = integrate(
            &get(field0, "field0")?.0,
            &get(pot, "pot")?.0,
            &cfg,
            &mut [],
        )?;
        put_handle(out, DnlsTrajectory(traj))
    })
}

/// Number of snapshots, the initial state included.
///
/// # Safety
/// `traj` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dnls_trajectory_len(
    traj: *const DnlsTrajectory,
    out: *mut usize,
) -> DnlsStatus {
    guard(|| put(out, get(traj, "traj")?.0.len(), "out"))
}

/// # Safety
/// `traj` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn dnls_trajectory_time(
    traj: *const DnlsTrajectory,
    index: usize,
    out: *mut f64,
) -> DnlsStatus {
    guard(|| {
        let t = &get(traj, "traj")?.0;
        let v = *t
            .times()
            .get(index)
            .ok_or_else(|| FfiError::Invalid(format!("snapshot {index} of {}", t.len())))?;
        put(out, v, "out")
    })
}

/// Copy of snapshot `index` as a new field handle.
///
/// # Safety
/// `traj` must be a live handle; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnls_trajectory_snapshot(
    traj: *const DnlsTrajectory,
    index: usize,
    out: *mut *mut DnlsField,
) -> DnlsStatus {
    guard(|| {
        let t = &get(traj, "traj")?.0;
        let f = t
            .snapshots()
            .get(index)
            .ok_or_else(|| FfiError::Invalid(format!("snapshot {index} of {}", t.len())))?;
        put_handle(out, DnlsField(f.clone()))
    })
}

/// # Safety
/// `traj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnls_trajectory_free(traj: *mut DnlsTrajectory) {
    free(traj)
}

/// Checks `Q_{ε,x}(ψ_t) ≤ e^{ε̃ t} Q_{ε,x}(ψ_0)` over the trajectory and
/// reports the largest ratio of the two sides.
///
/// # Safety
/// `traj` and `pot` must be live handles; `site` must point to `dim` readable
/// integers; `max_ratio` and `pass` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dnls_growth_bound(
    traj: *const DnlsTrajectory,
    pot: *const DnlsPotential,
    eps: f64,
    site_coords: *const i64,
    dim: usize,
    c_const: f64,
    max_ratio: *mut f64,
    pass: *mut bool,
) -> DnlsStatus {
    guard(|| {
        let x = site(site_coords, dim)?;
        let r = growth_bound_report(&get(traj, "traj")?.0, &get(pot, "pot")?.0, eps, &x, c_const)?;
        put(max_ratio, r.max_ratio(), "max_ratio")?;
        put(pass, r.pass, "pass")
    })
}
