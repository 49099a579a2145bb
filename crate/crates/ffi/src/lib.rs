//! C ABI over the fusionlab library.
//!
//! Every function returns an [`FlStatus`]. On failure a message is kept per
//! thread and can be read with [`fl_last_error`]. Objects are handed out as
//! opaque pointers and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fusionlab::dataio::{
    generate_synthetic, load_corpus, save_corpus, standardize_apply, Corpus, Standardizer, SynthConfig,
};
use fusionlab::eval::FusionLearner;
use fusionlab::fusion::{load_model, model_to_bytes, ArchConfig, FusionModel};
use fusionlab::train::TrainConfig;
use fusionlab::{Error, N_CLASSES};

/// Result codes returned by every `fl_*` function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Modality = 6,
    Data = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// A loaded or generated corpus.
pub struct FlCorpus {
    inner: Corpus,
}

/// A fusion model together with its optional input standardizer.
pub struct FlModel {
    model: FusionModel,
    scaler: Option<Standardizer>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> FlStatus {
    match e {
        Error::Io { .. } => FlStatus::Io,
        Error::Format { .. } | Error::ModelFormat(_) => FlStatus::Format,
        Error::Shape(_) | Error::BatchSize(_) => FlStatus::Shape,
        Error::Modality(_) => FlStatus::Modality,
        Error::Param(_) | Error::Config(_) => FlStatus::InvalidArgument,
        Error::InsufficientData(_)
        | Error::DegenerateData(_)
        | Error::Stratification(_)
        | Error::Contract(_)
        | Error::Leakage(_) => FlStatus::Data,
        Error::Evaluation(_) | Error::MetricUndefined(_) => FlStatus::Internal,
    }
}

struct Fail(FlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            FlStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FlStatus::InvalidArgument, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the next `fl_*` call.
#[no_mangle]
pub extern "C" fn fl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of risk classes; probability rows have this many columns.
#[no_mangle]
pub extern "C" fn fl_num_classes() -> usize {
    N_CLASSES
}

/// Reads a corpus CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_corpus_load(path: *const c_char, out: *mut *mut FlCorpus) -> FlStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        put(out, FlCorpus { inner: load_corpus(path)? })
    })
}

/// Generates the synthetic complementary-modalities corpus.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_corpus_generate(
    n_per_class: usize,
    d_text: usize,
    d_image: usize,
    separation: f64,
    sigma: f64,
    labeled_fraction: f64,
    seed: u64,
    out: *mut *mut FlCorpus,
) -> FlStatus {
    guard(|| {
        let cfg = SynthConfig { n_per_class, d_text, d_image, separation, sigma, labeled_fraction, seed };
        let c = generate_synthetic(&cfg).map_err(|e| Fail(FlStatus::InvalidArgument, e.to_string()))?;
        put(out, FlCorpus { inner: c })
    })
}

/// Writes a corpus CSV atomically.
///
/// # Safety
/// `corpus` must come from this library and `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fl_corpus_save(corpus: *const FlCorpus, path: *const c_char) -> FlStatus {
    guard(|| {
        let c = deref(corpus, "corpus")?;
        let path = path_arg(path, "path")?;
        Ok(save_corpus(&c.inner, path)?)
    })
}

/// Record count and embedding widths. Any output pointer may be null.
///
/// # Safety
/// `corpus` must come from this library; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_corpus_shape(
    corpus: *const FlCorpus,
    n_records: *mut usize,
    d_text: *mut usize,
    d_image: *mut usize,
) -> FlStatus {
    guard(|| {
        let c = &deref(corpus, "corpus")?.inner;
        for (p, v) in [(n_records, c.len()), (d_text, c.d_text()), (d_image, c.d_image())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Writes 1-based labels into `labels[0..n_records]`; unlabeled records get 0.
///
/// # Safety
/// `labels` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fl_corpus_labels(corpus: *const FlCorpus, labels: *mut u8, len: usize) -> FlStatus {
    guard(|| {
        let c = &deref(corpus, "corpus")?.inner;
        if labels.is_null() {
            return Err(null("labels"));
        }
        if len < c.len() {
            return Err(Fail(FlStatus::BufferTooSmall, format!("need {} entries, got {len}", c.len())));
        }
        let dst = std::slice::from_raw_parts_mut(labels, c.len());
        for (d, r) in dst.iter_mut().zip(c.records()) {
            *d = r.label.map_or(0, |l| l.get());
        }
        Ok(())
    })
}

/// Releases a corpus. Null is ignored.
///
/// # Safety
/// `corpus` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_corpus_free(corpus: *mut FlCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Trains a fusion model on the labeled, image-bearing records of `corpus`.
///
/// `adagrad` selects the Adagrad preset instead of Adam; `max_epochs` of 0
/// keeps the default.
///
/// # Safety
/// `corpus` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_train(
    corpus: *const FlCorpus,
    seed: u64,
    adagrad: bool,
    max_epochs: usize,
    out: *mut *mut FlModel,
) -> FlStatus {
    guard(|| {
        let c = &deref(corpus, "corpus")?.inner;
        let (lab, _) = fusionlab::dataio::split_labeled(c);
        let lab = lab.require_images();
        let mut train = if adagrad { TrainConfig::adagrad() } else { TrainConfig::default() };
        if max_epochs > 0 {
            train.max_epochs = max_epochs;
        }
        let learner = FusionLearner { arch: ArchConfig::desk(c.d_text(), c.d_image()), train };
        let p = learner.fit_predictor(&lab, seed)?;
        put(out, FlModel { model: p.model, scaler: Some(p.scaler) })
    })
}

/// Loads a model file and, when `standardizer_path` is non-null, the JSON
/// standardizer written next to it by `fusionlab train`.
///
/// # Safety
/// `model_path` must be NUL-terminated, `standardizer_path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fl_model_load(
    model_path: *const c_char,
    standardizer_path: *const c_char,
    out: *mut *mut FlModel,
) -> FlStatus {
    guard(|| {
        let model = load_model(&path_arg(model_path, "model_path")?)?;
        let scaler = if standardizer_path.is_null() {
            None
        } else {
            let p = path_arg(standardizer_path, "standardizer_path")?;
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Fail(FlStatus::Format, format!("{}: {e}", p.display())))?)
        };
        put(out, FlModel { model, scaler })
    })
}

/// Writes the model file, and the standardizer JSON when `standardizer_path` is non-null.
///
/// # Safety
/// `model` must come from this library; paths must be NUL-terminated or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn fl_model_save(
    model: *const FlModel,
    model_path: *const c_char,
    standardizer_path: *const c_char,
) -> FlStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let p = path_arg(model_path, "model_path")?;
        std::fs::write(&p, model_to_bytes(&m.model)).map_err(|e| Error::io(&p, e))?;
        if !standardizer_path.is_null() {
            let sp = path_arg(standardizer_path, "standardizer_path")?;
            let scaler =
                m.scaler.as_ref().ok_or_else(|| Fail(FlStatus::InvalidArgument, "model has no standardizer".into()))?;
            let json = serde_json::to_string_pretty(scaler).map_err(|e| Fail(FlStatus::Internal, e.to_string()))?;
            std::fs::write(&sp, json).map_err(|e| Error::io(&sp, e))?;
        }
        Ok(())
    })
}

/// Class probabilities for every record, row-major into `probs[0..n * 3]`.
///
/// # Safety
/// `probs` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_model_predict_proba(
    model: *const FlModel,
    corpus: *const FlCorpus,
    probs: *mut f64,
    len: usize,
) -> FlStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let c = &deref(corpus, "corpus")?.inner;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let need = c.len() * N_CLASSES;
        if len < need {
            return Err(Fail(FlStatus::BufferTooSmall, format!("need {need} entries, got {len}")));
        }
        let input = match &m.scaler {
            Some(s) => standardize_apply(s, c)?,
            None => c.clone(),
        };
        let (_, p) = m.model.predict(&input)?;
        std::slice::from_raw_parts_mut(probs, need).copy_from_slice(p.data());
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_model_free(model: *mut FlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
