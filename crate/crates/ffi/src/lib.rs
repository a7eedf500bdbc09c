//! C interface to the bandit-rex reward model, diversity selector and
//! Jensen-Shannon divergence.
//!
//! Every function returns a [`BrxStatus`]; results are written through out
//! pointers. Posteriors are opaque handles owned by the caller and released
//! with [`brx_posterior_free`]. Panics never cross the boundary.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use bandit_rex::domain::{ChallengeId, DimMask};
use bandit_rex::evaluation::{jsd, DiversityDistribution};
use bandit_rex::reward_model::{expected_reward, update_posterior, FeedbackBatch, GaussianPosterior, Observation};
use bandit_rex::selector::{solve_constrained_topk, ScoredCandidate, SelectionProblem};
use bandit_rex::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrxStatus {
    Ok = 0,
    NullPointer = 1,
    LengthMismatch = 2,
    InvalidValue = 3,
    SolverFailure = 4,
    EmptyCandidates = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

impl From<&Error> for BrxStatus {
    fn from(e: &Error) -> Self {
        match e.root() {
            Error::LengthMismatch { .. } | Error::DimensionMismatch { .. } => BrxStatus::LengthMismatch,
            Error::SolverFailure { .. } => BrxStatus::SolverFailure,
            Error::EmptyCandidates => BrxStatus::EmptyCandidates,
            _ => BrxStatus::InvalidValue,
        }
    }
}

/// Opaque diagonal Gaussian posterior over reward weights.
pub struct BrxPosterior {
    inner: GaussianPosterior,
}

fn guard(f: impl FnOnce() -> Result<(), BrxStatus>) -> BrxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BrxStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => BrxStatus::Panic,
    }
}

fn status(e: Error) -> BrxStatus {
    BrxStatus::from(&e)
}

unsafe fn input<'a, T>(data: *const T, len: usize) -> Result<&'a [T], BrxStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(BrxStatus::NullPointer);
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn output<'a, T>(data: *mut T, len: usize) -> Result<&'a mut [T], BrxStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(BrxStatus::NullPointer);
    }
    Ok(slice::from_raw_parts_mut(data, len))
}

unsafe fn handle<'a>(p: *const BrxPosterior) -> Result<&'a BrxPosterior, BrxStatus> {
    p.as_ref().ok_or(BrxStatus::NullPointer)
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), BrxStatus> {
    if out.is_null() {
        return Err(BrxStatus::NullPointer);
    }
    out.write(value);
    Ok(())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn brx_status_message(status: BrxStatus) -> *const c_char {
    let s: &'static CStr = match status {
        BrxStatus::Ok => c"ok",
        BrxStatus::NullPointer => c"null pointer argument",
        BrxStatus::LengthMismatch => c"length mismatch",
        BrxStatus::InvalidValue => c"invalid value",
        BrxStatus::SolverFailure => c"posterior solver failed to converge",
        BrxStatus::EmptyCandidates => c"no candidates",
        BrxStatus::BufferTooSmall => c"output buffer too small",
        BrxStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Creates an isotropic posterior with zero mean.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_new(dim: usize, variance: f64, out: *mut *mut BrxPosterior) -> BrxStatus {
    guard(|| {
        if dim == 0 || !(variance > 0.0 && variance.is_finite()) {
            return Err(BrxStatus::InvalidValue);
        }
        let inner = GaussianPosterior::isotropic(dim, variance);
        put(out, Box::into_raw(Box::new(BrxPosterior { inner })))
    })
}

/// Creates a posterior from explicit mean and variance arrays of length
/// `dim`.
///
/// # Safety
/// `mean` and `variance` must point to `dim` doubles; `out` must be valid
/// for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_from_parts(
    mean: *const f64,
    variance: *const f64,
    dim: usize,
    out: *mut *mut BrxPosterior,
) -> BrxStatus {
    guard(|| {
        let m = input(mean, dim)?.to_vec();
        let v = input(variance, dim)?.to_vec();
        let inner = GaussianPosterior::new(m, v).map_err(status)?;
        put(out, Box::into_raw(Box::new(BrxPosterior { inner })))
    })
}

/// Parses a posterior from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writing
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_from_json(json: *const c_char, out: *mut *mut BrxPosterior) -> BrxStatus {
    guard(|| {
        if json.is_null() {
            return Err(BrxStatus::NullPointer);
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| BrxStatus::InvalidValue)?;
        let inner = GaussianPosterior::from_json(text).map_err(status)?;
        put(out, Box::into_raw(Box::new(BrxPosterior { inner })))
    })
}

/// Releases a posterior. Null is ignored.
///
/// # Safety
/// `posterior` must come from one of the constructors and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_free(posterior: *mut BrxPosterior) {
    if !posterior.is_null() {
        drop(Box::from_raw(posterior));
    }
}

/// Dimension of the posterior, 0 for null.
///
/// # Safety
/// `posterior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_dim(posterior: *const BrxPosterior) -> usize {
    posterior.as_ref().map_or(0, |p| p.inner.dim())
}

/// Copies the mean and variance into `mean_out` and `variance_out`, each of
/// length `len`. Either output may be null to skip it.
///
/// # Safety
/// Non-null outputs must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_params(
    posterior: *const BrxPosterior,
    mean_out: *mut f64,
    variance_out: *mut f64,
    len: usize,
) -> BrxStatus {
    guard(|| {
        let p = handle(posterior)?;
        if len != p.inner.dim() {
            return Err(BrxStatus::LengthMismatch);
        }
        if !mean_out.is_null() {
            output(mean_out, len)?.copy_from_slice(p.inner.mean());
        }
        if !variance_out.is_null() {
            output(variance_out, len)?.copy_from_slice(p.inner.variance());
        }
        Ok(())
    })
}

/// Laplace update with `n` observations. `contexts` is row-major `n × dim`;
/// `rewards[i]` is 0 or 1. The handle is replaced only on success.
///
/// # Safety
/// `contexts` must point to `n * dim` doubles and `rewards` to `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_update(
    posterior: *mut BrxPosterior,
    contexts: *const f64,
    rewards: *const u8,
    n: usize,
) -> BrxStatus {
    guard(|| {
        let p = posterior.as_mut().ok_or(BrxStatus::NullPointer)?;
        let d = p.inner.dim();
        let len = n.checked_mul(d).ok_or(BrxStatus::InvalidValue)?;
        let xs = input(contexts, len)?;
        let rs = input(rewards, n)?;
        if rs.iter().any(|r| *r > 1) {
            return Err(BrxStatus::InvalidValue);
        }
        let batch = FeedbackBatch::new(
            xs.chunks_exact(d.max(1))
                .zip(rs)
                .map(|(x, r)| Observation {
                    context: x.to_vec(),
                    reward: *r == 1,
                })
                .collect(),
        );
        p.inner = update_posterior(&p.inner, &batch).map_err(status)?;
        Ok(())
    })
}

/// One Thompson draw of the weights from a ChaCha8 stream seeded with
/// `seed`.
///
/// # Safety
/// `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_sample(
    posterior: *const BrxPosterior,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> BrxStatus {
    guard(|| {
        let p = handle(posterior)?;
        if len != p.inner.dim() {
            return Err(BrxStatus::LengthMismatch);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        output(out, len)?.copy_from_slice(&p.inner.sample(&mut rng));
        Ok(())
    })
}

/// `σ(mᵀv)` under the posterior mean.
///
/// # Safety
/// `context` must point to `len` doubles; `out` must be valid for one
/// double.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_expected_reward(
    posterior: *const BrxPosterior,
    context: *const f64,
    len: usize,
    out: *mut f64,
) -> BrxStatus {
    guard(|| {
        let p = handle(posterior)?;
        let v = input(context, len)?;
        put(out, expected_reward(p.inner.mean(), v).map_err(status)?)
    })
}

/// Writes the posterior's JSON document, NUL-terminated, into `buf`.
/// `written` receives the length excluding the terminator; when `capacity`
/// is too small it receives the required length and `BufferTooSmall` is
/// returned.
///
/// # Safety
/// `buf` must be valid for `capacity` bytes; `written` for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn brx_posterior_to_json(
    posterior: *const BrxPosterior,
    buf: *mut c_char,
    capacity: usize,
    written: *mut usize,
) -> BrxStatus {
    guard(|| {
        let p = handle(posterior)?;
        let json = p.inner.to_json();
        put(written, json.len())?;
        if capacity < json.len() + 1 {
            return Err(BrxStatus::BufferTooSmall);
        }
        let dst = output(buf.cast::<u8>(), capacity)?;
        dst[..json.len()].copy_from_slice(json.as_bytes());
        dst[json.len()] = 0;
        Ok(())
    })
}

/// Exact diversity-constrained top-K. Candidate `i` has id `ids[i]`, score
/// `scores[i]` and dimension bits `masks[i]` (1 weight loss, 2 diet,
/// 4 exercise). The chosen ids are written to `out_ids`, which must hold
/// `k` entries, and their count to `out_len`.
///
/// # Safety
/// `ids`, `scores` and `masks` must point to `n` entries; `out_ids` to `k`
/// entries; `out_len` to one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn brx_select_topk(
    ids: *const u32,
    scores: *const f64,
    masks: *const u8,
    n: usize,
    k: usize,
    required: u8,
    out_ids: *mut u32,
    out_len: *mut usize,
) -> BrxStatus {
    guard(|| {
        let ids = input(ids, n)?;
        let scores = input(scores, n)?;
        let masks = input(masks, n)?;
        let required = DimMask::from_bits(required).ok_or(BrxStatus::InvalidValue)?;
        let candidates = (0..n)
            .map(|i| {
                Ok(ScoredCandidate {
                    challenge_id: ChallengeId(ids[i]),
                    score: scores[i],
                    mask: DimMask::from_bits(masks[i]).ok_or(BrxStatus::InvalidValue)?,
                })
            })
            .collect::<Result<Vec<_>, BrxStatus>>()?;
        let chosen = solve_constrained_topk(&SelectionProblem::new(candidates, k, required)).map_err(status)?;
        let dst = output(out_ids, k)?;
        for (slot, id) in dst.iter_mut().zip(&chosen) {
            *slot = id.0;
        }
        put(out_len, chosen.len())
    })
}

/// Base-2 Jensen-Shannon divergence between two distributions over the
/// three dimensions.
///
/// # Safety
/// `p` and `q` must point to 3 doubles; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn brx_jsd(p: *const f64, q: *const f64, out: *mut f64) -> BrxStatus {
    guard(|| {
        let dist = |x: *const f64| -> Result<DiversityDistribution, BrxStatus> {
            let s = input(x, 3)?;
            DiversityDistribution::new([s[0], s[1], s[2]]).map_err(status)
        };
        put(out, jsd(&dist(p)?, &dist(q)?))
    })
}
