//! C ABI over `fsm-irl`.
//!
//! Graphs, splits and models are opaque heap handles released with their
//! `*_free` function. Every fallible call returns an [`FsmStatus`]; on a
//! non-zero status [`fsm_last_error`] describes the failure on the calling
//! thread. Panics are caught at the boundary and reported as
//! [`FsmStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fsm_irl::bench::{self, BiasLevel, ExperimentSpec};
use fsm_irl::graph::load_graph;
use fsm_irl::train::{self, TrainConfig, TrainedModel};
use fsm_irl::{Error, Graph, KnownLabels, Role, SplitAssignment};
use ndarray::Array2;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Io = 5,
    Numeric = 6,
    Diverged = 7,
    Config = 8,
    Panic = 9,
}

/// Bias levels for [`fsm_split_biased`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsmBiasLevel {
    None = 0,
    Small = 1,
    Medium = 2,
    Big = 3,
}

/// Split roles, matching the values written by [`fsm_split_roles`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsmRole {
    Unused = 0,
    Train = 1,
    Validation = 2,
    Test = 3,
}

/// Opaque attributed graph.
pub struct FsmGraph(Graph);

/// Opaque train/validation/test assignment.
pub struct FsmSplit(SplitAssignment);

/// Opaque trained model.
pub struct FsmModel(TrainedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(FsmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } | Error::Json(_) => FsmStatus::Parse,
            Error::Validation(_) | Error::IndexOutOfRange { .. } | Error::IsolatedNode(_) | Error::Shape(_) => {
                FsmStatus::Validation
            }
            Error::Numeric(_) | Error::DegenerateBandwidth | Error::NonFiniteObjective { .. } => FsmStatus::Numeric,
            Error::Diverged { .. } => FsmStatus::Diverged,
            Error::Config(_) => FsmStatus::Config,
            Error::Io { .. } => FsmStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FsmStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(FsmStatus::NullPointer, format!("{name} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FsmStatus::Ok,
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
            set_error(format!("panic: {msg}"));
            FsmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = ptr::null_mut();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fsm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fsm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a function of this library documented as returning an
/// owned string, and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fsm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a graph from a nodes file and an edges file.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_graph_load(
    nodes_path: *const c_char,
    edges_path: *const c_char,
    out: *mut *mut FsmGraph,
) -> FsmStatus {
    guard(|| {
        check_out(out)?;
        let nodes = PathBuf::from(str_arg(nodes_path, "nodes_path")?);
        let edges = PathBuf::from(str_arg(edges_path, "edges_path")?);
        put(out, FsmGraph(load_graph(&nodes, &edges)?))
    })
}

/// Builds a graph from row-major features (`num_nodes * num_features`),
/// labels (`num_nodes`) and `num_edges` edges given as `2 * num_edges`
/// endpoint ids. Edges are symmetrized and deduplicated.
///
/// # Safety
/// Each array must hold the stated number of elements; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_graph_new(
    num_nodes: usize,
    num_features: usize,
    features: *const f64,
    labels: *const u32,
    num_classes: usize,
    edges: *const u64,
    num_edges: usize,
    out: *mut *mut FsmGraph,
) -> FsmStatus {
    guard(|| {
        check_out(out)?;
        let len = num_nodes
            .checked_mul(num_features)
            .ok_or_else(|| invalid("feature matrix size overflows"))?;
        let x = slice_arg(features, len, "features")?;
        let y = slice_arg(labels, num_nodes, "labels")?;
        let e = slice_arg(edges, num_edges.saturating_mul(2), "edges")?;
        let x = Array2::from_shape_vec((num_nodes, num_features), x.to_vec())
            .map_err(|err| invalid(err.to_string()))?;
        let pairs: Vec<(usize, usize)> = e.chunks_exact(2).map(|p| (p[0] as usize, p[1] as usize)).collect();
        put(out, FsmGraph(Graph::new(x, y.to_vec(), num_classes, &pairs)?))
    })
}

/// Frees a graph. NULL is ignored.
///
/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fsm_graph_free(g: *mut FsmGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of nodes, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn fsm_graph_num_nodes(g: *const FsmGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.num_nodes())
}

/// Number of undirected edges, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn fsm_graph_num_edges(g: *const FsmGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.num_edges())
}

/// Copy of `g` with a seeded fraction of its edges removed.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_graph_delete_edges(
    g: *const FsmGraph,
    fraction: f64,
    seed: u64,
    out: *mut *mut FsmGraph,
) -> FsmStatus {
    guard(|| {
        check_out(out)?;
        let g = ref_arg(g, "graph")?;
        put(out, FsmGraph(g.0.delete_edges(fraction, seed)?))
    })
}

/// Label homogeneity of node `v`.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_graph_homogeneity(g: *const FsmGraph, v: usize, out: *mut f64) -> FsmStatus {
    guard(|| {
        let g = ref_arg(g, "graph")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = g.0.label_homogeneity(v)?;
        Ok(())
    })
}

/// Homogeneity-biased split with `per_class_train` training nodes per class
/// and the default validation and test sizes.
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_split_biased(
    g: *const FsmGraph,
    level: FsmBiasLevel,
    per_class_train: usize,
    seed: u64,
    out: *mut *mut FsmSplit,
) -> FsmStatus {
    guard(|| {
        check_out(out)?;
        let g = ref_arg(g, "graph")?;
        let level = match level {
            FsmBiasLevel::None => BiasLevel::None,
            FsmBiasLevel::Small => BiasLevel::Small,
            FsmBiasLevel::Medium => BiasLevel::Medium,
            FsmBiasLevel::Big => BiasLevel::Big,
        };
        put(out, FsmSplit(bench::biased_split(&g.0, level, per_class_train, seed)?))
    })
}

/// Reads a split file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_split_read(path: *const c_char, out: *mut *mut FsmSplit) -> FsmStatus {
    guard(|| {
        check_out(out)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, FsmSplit(SplitAssignment::read(&path)?))
    })
}

/// Writes a split file.
///
/// # Safety
/// `s` must be a live split handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fsm_split_write(s: *const FsmSplit, path: *const c_char) -> FsmStatus {
    guard(|| {
        let s = ref_arg(s, "split")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Ok(s.0.write(&path)?)
    })
}

/// Number of nodes covered by the split, or 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live split handle.
#[no_mangle]
pub unsafe extern "C" fn fsm_split_len(s: *const FsmSplit) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// Writes the role of every node into `roles`, which holds `len` entries;
/// `len` must equal [`fsm_split_len`].
///
/// # Safety
/// `s` must be a live split handle; `roles` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn fsm_split_roles(s: *const FsmSplit, roles: *mut FsmRole, len: usize) -> FsmStatus {
    guard(|| {
        let s = ref_arg(s, "split")?;
        if len != s.0.len() {
            return Err(invalid(format!("roles holds {len} entries, split has {}", s.0.len())));
        }
        if roles.is_null() {
            return Err(null("roles"));
        }
        let out = std::slice::from_raw_parts_mut(roles, len);
        for (slot, role) in out.iter_mut().zip(s.0.roles()) {
            *slot = match role {
                Role::Unused => FsmRole::Unused,
                Role::Train => FsmRole::Train,
                Role::Validation => FsmRole::Validation,
                Role::Test => FsmRole::Test,
            };
        }
        Ok(())
    })
}

/// Frees a split. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fsm_split_free(s: *mut FsmSplit) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Trains a model. `config_json` is a JSON training configuration; NULL or
/// missing fields take their defaults.
///
/// # Safety
/// Handles must be live; `config_json` NULL or NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_train(
    g: *const FsmGraph,
    s: *const FsmSplit,
    config_json: *const c_char,
    out: *mut *mut FsmModel,
) -> FsmStatus {
    guard(|| {
        check_out(out)?;
        let g = ref_arg(g, "graph")?;
        let s = ref_arg(s, "split")?;
        let config: TrainConfig = match opt_str_arg(config_json, "config_json")? {
            Some(text) => serde_json::from_str(text).map_err(Error::from)?,
            None => TrainConfig::default(),
        };
        let (model, _) = train::train(&g.0, &s.0, &config)?;
        put(out, FsmModel(model))
    })
}

/// Predicted class of each of the `len` nodes in `nodes`, written to
/// `labels_out`. Prediction uses no label information.
///
/// # Safety
/// Handles must be live; both arrays must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn fsm_model_predict(
    m: *const FsmModel,
    g: *const FsmGraph,
    nodes: *const u64,
    len: usize,
    labels_out: *mut u32,
) -> FsmStatus {
    guard(|| {
        let m = ref_arg(m, "model")?;
        let g = ref_arg(g, "graph")?;
        let nodes: Vec<usize> = slice_arg(nodes, len, "nodes")?.iter().map(|&v| v as usize).collect();
        if len > 0 && labels_out.is_null() {
            return Err(null("labels_out"));
        }
        let pred = m.0.predict(&g.0, &nodes)?;
        if len > 0 {
            std::slice::from_raw_parts_mut(labels_out, len).copy_from_slice(&pred);
        }
        Ok(())
    })
}

/// Accuracy and macro-F1 of the model on the test nodes of `s`.
///
/// # Safety
/// Handles must be live; `accuracy` and `macro_f1` writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_model_evaluate(
    m: *const FsmModel,
    g: *const FsmGraph,
    s: *const FsmSplit,
    accuracy: *mut f64,
    macro_f1: *mut f64,
) -> FsmStatus {
    guard(|| {
        let m = ref_arg(m, "model")?;
        let g = ref_arg(g, "graph")?;
        let s = ref_arg(s, "split")?;
        let acc = accuracy.as_mut().ok_or_else(|| null("accuracy"))?;
        let f1 = macro_f1.as_mut().ok_or_else(|| null("macro_f1"))?;
        let nodes = s.0.nodes(Role::Test);
        let labels = KnownLabels::from_split(&g.0, &s.0, Role::Test);
        let metrics = train::evaluate(&m.0, &g.0, &nodes, &labels)?;
        *acc = metrics.accuracy;
        *f1 = metrics.macro_f1;
        Ok(())
    })
}

/// Saves a model checkpoint.
///
/// # Safety
/// `m` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fsm_model_save(m: *const FsmModel, path: *const c_char) -> FsmStatus {
    guard(|| {
        let m = ref_arg(m, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Ok(m.0.save(&path)?)
    })
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_model_load(path: *const c_char, out: *mut *mut FsmModel) -> FsmStatus {
    guard(|| {
        check_out(out)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, FsmModel(TrainedModel::load(&path)?))
    })
}

/// Frees a model. NULL is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fsm_model_free(m: *mut FsmModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Runs an experiment described by `spec_json` and stores the JSON report
/// in `report_out`, to be freed with [`fsm_string_free`]. `g` may be NULL
/// for synthetic shifts.
///
/// # Safety
/// `g` NULL or live; `spec_json` NUL-terminated; `report_out` writable.
#[no_mangle]
pub unsafe extern "C" fn fsm_bench(
    g: *const FsmGraph,
    spec_json: *const c_char,
    report_out: *mut *mut c_char,
) -> FsmStatus {
    guard(|| {
        check_out(report_out)?;
        let spec: ExperimentSpec = serde_json::from_str(str_arg(spec_json, "spec_json")?).map_err(Error::from)?;
        let report = bench::run_experiment(g.as_ref().map(|g| &g.0), &spec)?;
        let text = CString::new(report.to_json()?).map_err(|e| invalid(e.to_string()))?;
        *report_out = text.into_raw();
        Ok(())
    })
}
