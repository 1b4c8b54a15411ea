//! C ABI over the gasflow core.
//!
//! Functions return a [`GfStatus`]; on failure the message is available from
//! [`gf_last_error`] on the same thread. Handles are opaque and owned by the
//! caller until passed to their `_free` function. Strings returned through
//! out-pointers must be released with [`gf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use chrono::NaiveDate;
use gasflow::backtest::{simulate, BacktestConfig, PurchaseLedger};
use gasflow::conllu::parse_conllu;
use gasflow::extract::{coverage_stats, extract_records, ExtractionMode};
use gasflow::model::{load_checkpoint, Checkpoint};
use gasflow::wordnet::SenseIndex;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    InvalidArgument = 5,
    Panic = 6,
}

/// WordNet sense index.
pub struct GfSenseIndex(SenseIndex);

/// Trained model with its price scaler.
pub struct GfModel(Checkpoint);

/// Result of a purchasing simulation.
pub struct GfLedger(PurchaseLedger);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GfPurchase {
    /// Day index within the simulation.
    pub day: usize,
    /// Quota units bought, one per accrued day.
    pub units: u64,
    pub volume: f64,
    pub price: f64,
}

/// Purchase decision for day `day`; write `true` to `fire` to buy. A
/// non-zero return aborts the simulation.
pub type GfDecisionFn = Option<extern "C" fn(user_data: *mut c_void, day: usize, fire: *mut bool) -> i32>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type Failure = (GfStatus, String);

fn fail(status: GfStatus, msg: impl std::fmt::Display) -> Failure {
    (status, msg.to_string())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside gasflow");
            GfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(GfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(GfStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(GfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(GfStatus::NullPointer, format!("{what} is null")))
}

fn mode_from(mode: i32) -> Result<ExtractionMode, Failure> {
    match mode {
        0 => Ok(ExtractionMode::FullPipeline),
        1 => Ok(ExtractionMode::VerbOnly),
        _ => Err(fail(GfStatus::InvalidArgument, format!("unknown extraction mode {mode}"))),
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn gf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads `index.sense` and `lexnames` from `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_sense_index_load(dir: *const c_char, out: *mut *mut GfSenseIndex) -> GfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        let index = SenseIndex::load_dir(Path::new(dir)).map_err(|e| fail(GfStatus::Io, e))?;
        *out = Box::into_raw(Box::new(GfSenseIndex(index)));
        Ok(())
    })
}

/// # Safety
/// `index` must be null or a handle from [`gf_sense_index_load`].
#[no_mangle]
pub unsafe extern "C" fn gf_sense_index_free(index: *mut GfSenseIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Extracts events from CoNLL-U text. `mode` is 0 for the full pipeline and
/// 1 for verbs only. Writes one JSON record per line to `out_json`.
///
/// # Safety
/// Pointers must be valid; `conllu` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gf_extract_events(
    index: *const GfSenseIndex,
    conllu: *const c_char,
    mode: i32,
    out_json: *mut *mut c_char,
) -> GfStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let index = handle(index, "index")?;
        let text = str_arg(conllu, "conllu")?;
        let mode = mode_from(mode)?;
        let sentences = parse_conllu(text.as_bytes()).map_err(|e| fail(GfStatus::Parse, e))?;
        let mut json = String::new();
        for rec in extract_records(&sentences, mode, &index.0) {
            json.push_str(&serde_json::to_string(&rec).map_err(|e| fail(GfStatus::Parse, e))?);
            json.push('\n');
        }
        *out = CString::new(json)
            .map_err(|e| fail(GfStatus::InvalidUtf8, e))?
            .into_raw();
        Ok(())
    })
}

/// Counts headlines and headlines with at least one event.
///
/// # Safety
/// Pointers must be valid; `conllu` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gf_coverage(
    index: *const GfSenseIndex,
    conllu: *const c_char,
    mode: i32,
    out_total: *mut usize,
    out_with_events: *mut usize,
) -> GfStatus {
    guard(|| {
        let total = out_arg(out_total, "out_total")?;
        let with = out_arg(out_with_events, "out_with_events")?;
        let index = handle(index, "index")?;
        let text = str_arg(conllu, "conllu")?;
        let sentences = parse_conllu(text.as_bytes()).map_err(|e| fail(GfStatus::Parse, e))?;
        let c = coverage_stats(&sentences, mode_from(mode)?, &index.0)
            .map_err(|e| fail(GfStatus::InvalidArgument, e))?;
        *total = c.headlines_total;
        *with = c.headlines_with_events;
        Ok(())
    })
}

/// Loads a checkpoint written by `gasflow train`.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gf_model_load(path: *const c_char, out: *mut *mut GfModel) -> GfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let f = std::fs::File::open(path).map_err(|e| fail(GfStatus::Io, format!("{path}: {e}")))?;
        let ckpt = load_checkpoint(std::io::BufReader::new(f)).map_err(|e| fail(GfStatus::Parse, e))?;
        *out = Box::into_raw(Box::new(GfModel(ckpt)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`gf_model_load`].
#[no_mangle]
pub unsafe extern "C" fn gf_model_free(model: *mut GfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Values in one input tensor, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn gf_model_input_len(model: *const GfModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.params.config.input_len())
}

/// Forecast horizon, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn gf_model_horizon(model: *const GfModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.params.config.h)
}

/// Forecasts `gf_model_horizon` prices from a prepared input tensor.
///
/// # Safety
/// `input` must hold `input_len` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn gf_model_predict(
    model: *const GfModel,
    input: *const f64,
    input_len: usize,
    out: *mut f64,
    out_len: usize,
) -> GfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if input.is_null() || out.is_null() {
            return Err(fail(GfStatus::NullPointer, "input or out is null"));
        }
        let input = std::slice::from_raw_parts(input, input_len);
        let out = std::slice::from_raw_parts_mut(out, out_len);
        let y = m
            .0
            .params
            .predict(input, &m.0.scaler)
            .map_err(|e| fail(GfStatus::InvalidArgument, e))?;
        if out.len() != y.len() {
            return Err(fail(
                GfStatus::InvalidArgument,
                format!("output buffer holds {}, horizon is {}", out.len(), y.len()),
            ));
        }
        out.copy_from_slice(&y);
        Ok(())
    })
}

/// Price in model units, using the training scaler.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gf_model_scale_price(model: *const GfModel, price: f64, out: *mut f64) -> GfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out_arg(out, "out")? = m.0.scaler.scale(price);
        Ok(())
    })
}

/// Inverse of [`gf_model_scale_price`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gf_model_unscale_price(model: *const GfModel, value: f64, out: *mut f64) -> GfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out_arg(out, "out")? = m.0.scaler.inverse_scale(value);
        Ok(())
    })
}

/// Simulates purchasing over `days` trading days. `dates` holds days since
/// 1970-01-01 and `prices` the matching prices, both of length `n >= days`.
/// `decide` is asked once per day.
///
/// # Safety
/// Arrays must hold `n` values; `out` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gf_backtest_simulate(
    dates: *const i32,
    prices: *const f64,
    n: usize,
    total_volume: f64,
    days: usize,
    force_final: bool,
    decide: GfDecisionFn,
    user_data: *mut c_void,
    out: *mut *mut GfLedger,
) -> GfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let decide = decide.ok_or_else(|| fail(GfStatus::NullPointer, "decide is null"))?;
        if dates.is_null() || prices.is_null() {
            return Err(fail(GfStatus::NullPointer, "dates or prices is null"));
        }
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        let series = std::slice::from_raw_parts(dates, n)
            .iter()
            .zip(std::slice::from_raw_parts(prices, n))
            .map(|(&d, &p)| {
                epoch
                    .checked_add_signed(chrono::TimeDelta::days(i64::from(d)))
                    .map(|date| (date, p))
                    .ok_or_else(|| fail(GfStatus::InvalidArgument, format!("date offset {d} out of range")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let config = BacktestConfig {
            total_volume,
            days,
            force_final,
            ..BacktestConfig::default()
        };
        let mut aborted = None;
        let ledger = simulate(&series, &config, |d| {
            let mut fire = false;
            let rc = decide(user_data, d, &mut fire);
            if rc != 0 {
                aborted = Some((d, rc));
                return Err(gasflow::backtest::BacktestError::Setting("decision callback failed"));
            }
            Ok(fire)
        });
        let ledger = match (ledger, aborted) {
            (_, Some((d, rc))) => {
                return Err(fail(GfStatus::InvalidArgument, format!("decision callback returned {rc} on day {d}")))
            }
            (Err(e), None) => return Err(fail(GfStatus::InvalidArgument, e)),
            (Ok(l), None) => l,
        };
        *out = Box::into_raw(Box::new(GfLedger(ledger)));
        Ok(())
    })
}

/// # Safety
/// `ledger` must be null or a handle from [`gf_backtest_simulate`].
#[no_mangle]
pub unsafe extern "C" fn gf_ledger_free(ledger: *mut GfLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

/// # Safety
/// `ledger` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn gf_ledger_purchase_count(ledger: *const GfLedger) -> usize {
    ledger.as_ref().map_or(0, |l| l.0.purchases.len())
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gf_ledger_purchase(ledger: *const GfLedger, i: usize, out: *mut GfPurchase) -> GfStatus {
    guard(|| {
        let l = handle(ledger, "ledger")?;
        let out = out_arg(out, "out")?;
        let p = l
            .0
            .purchases
            .get(i)
            .ok_or_else(|| fail(GfStatus::InvalidArgument, format!("purchase {i} out of range")))?;
        *out = GfPurchase {
            day: p.day,
            units: p.units,
            volume: p.volume,
            price: p.price,
        };
        Ok(())
    })
}

/// Volume still owed at the end of the simulation, m³.
///
/// # Safety
/// `ledger` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn gf_ledger_outstanding(ledger: *const GfLedger) -> f64 {
    ledger
        .as_ref()
        .and_then(|l| l.0.debt().last().copied())
        .unwrap_or(0.0)
}

/// Volume-weighted purchase price, 0 without purchases and NaN for a null
/// handle.
///
/// # Safety
/// `ledger` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn gf_ledger_weighted_price(ledger: *const GfLedger) -> f64 {
    ledger
        .as_ref()
        .map_or(f64::NAN, |l| gasflow::backtest::report(&l.0).weighted_average)
}
