//! C ABI over the `cstree` library.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call
//! returns a [`CstreeStatus`]; on failure the message is available from
//! [`cstree_last_error_message`] on the same thread. Strings returned
//! through out-parameters are NUL-terminated UTF-8 and must be released
//! with [`cstree_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cstree::csi::{context_graphs, minimal_contexts};
use cstree::enumeration::count_cstrees;
use cstree::estimation::bic;
use cstree::io::Dataset;
use cstree::learning::{bhc_cs, bhc_cs_perm};
use cstree::{CStree, ContingencyTable, Error, LearnConfig, VariableSpec};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CstreeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Invalid = 4,
    Undefined = 5,
    Unsupported = 6,
    Panic = 7,
}

/// A CStree.
pub struct CstreeTree {
    inner: CStree,
}

/// Counts over the variables of the tree they were read against.
pub struct CstreeTable {
    variables: Vec<VariableSpec>,
    table: ContingencyTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> CstreeStatus {
    match e {
        Error::Json(_) | Error::Csv(_) | Error::Data(_) => CstreeStatus::Parse,
        Error::UndefinedStage { .. } => CstreeStatus::Undefined,
        Error::Unsupported(_) | Error::BudgetExceeded { .. } => CstreeStatus::Unsupported,
        _ => CstreeStatus::Invalid,
    }
}

enum Fail {
    Null(&'static str),
    Utf8,
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CstreeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            CstreeStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CstreeStatus::NullPointer
        }
        Ok(Err(Fail::Utf8)) => {
            set_error("string is not valid UTF-8".into());
            CstreeStatus::InvalidUtf8
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CstreeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8)
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cstree_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cstree_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cstree_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a tree from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_tree_from_json(
    json: *const c_char,
    out: *mut *mut CstreeTree,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let s = str_arg(json, "json")?;
        let inner = CStree::from_json(s)?;
        *out = Box::into_raw(Box::new(CstreeTree { inner }));
        Ok(())
    })
}

/// Serializes a tree to JSON.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_tree_to_json(
    tree: *const CstreeTree,
    out: *mut *mut c_char,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let t = ref_arg(tree, "tree")?;
        *out = to_c(t.inner.to_json());
        Ok(())
    })
}

/// Releases a tree. NULL is ignored.
///
/// # Safety
/// `tree` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cstree_tree_free(tree: *mut CstreeTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Number of variables and total number of stages.
///
/// # Safety
/// `tree` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_tree_shape(
    tree: *const CstreeTree,
    variables: *mut usize,
    stages: *mut usize,
) -> CstreeStatus {
    use cstree::StagedModel;
    guard(|| {
        let t = ref_arg(tree, "tree")?;
        *out_arg(variables, "variables")? = t.inner.p();
        *out_arg(stages, "stages")? = t.inner.total_stages();
        Ok(())
    })
}

/// Minimal contexts as a JSON array of `{variable: label}` objects.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_minimal_contexts_json(
    tree: *const CstreeTree,
    out: *mut *mut c_char,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let t = &ref_arg(tree, "tree")?.inner;
        let list: Vec<_> = minimal_contexts(t)
            .iter()
            .map(|c| c.to_labels(t.variables()))
            .collect();
        *out = to_c(serde_json::to_string(&list).map_err(Error::from)?);
        Ok(())
    })
}

/// Context graphs of the minimal contexts in Graphviz DOT.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_context_graphs_dot(
    tree: *const CstreeTree,
    out: *mut *mut c_char,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let t = &ref_arg(tree, "tree")?.inner;
        *out = to_c(context_graphs(t).to_dot(t.variables()));
        Ok(())
    })
}

/// Whether two trees over the same variables are statistically
/// equivalent.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_equivalent(
    a: *const CstreeTree,
    b: *const CstreeTree,
    out: *mut bool,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (a, b) = (ref_arg(a, "a")?, ref_arg(b, "b")?);
        *out = cstree::csi::cstree_equivalent(&a.inner, &b.inner)?;
        Ok(())
    })
}

/// Reads CSV text (header row of variable names, optional `count`
/// column) against the variables of `tree`.
///
/// # Safety
/// `tree` must be a live handle, `csv` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_table_from_csv(
    tree: *const CstreeTree,
    csv: *const c_char,
    out: *mut *mut CstreeTable,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let t = &ref_arg(tree, "tree")?.inner;
        let text = str_arg(csv, "csv")?;
        let ds = Dataset::from_reader_with_spec(text.as_bytes(), t.variables(), None)?;
        *out = Box::into_raw(Box::new(CstreeTable {
            variables: ds.variables.clone(),
            table: ds.to_table(),
        }));
        Ok(())
    })
}

/// Reads CSV text, inferring variables and sorted outcome labels.
///
/// # Safety
/// `csv` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_table_from_csv_inferred(
    csv: *const c_char,
    out: *mut *mut CstreeTable,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(csv, "csv")?;
        let ds = Dataset::from_reader(text.as_bytes(), None)?;
        *out = Box::into_raw(Box::new(CstreeTable {
            variables: ds.variables.clone(),
            table: ds.to_table(),
        }));
        Ok(())
    })
}

/// Total number of observations in a table.
///
/// # Safety
/// `table` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_table_n(table: *const CstreeTable, out: *mut u64) -> CstreeStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(table, "table")?.table.n();
        Ok(())
    })
}

/// Releases a table. NULL is ignored.
///
/// # Safety
/// `table` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cstree_table_free(table: *mut CstreeTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// BIC of a tree at its maximum likelihood estimate. Fails with
/// `UNDEFINED` when a stage has no observations.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_bic(
    tree: *const CstreeTree,
    table: *const CstreeTable,
    out: *mut f64,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = &ref_arg(tree, "tree")?.inner;
        let u = ref_arg(table, "table")?;
        if u.variables != t.variables() {
            return Err(Error::VariableMismatch("table and tree use different variables".into()).into());
        }
        *out = bic(t, &u.table)?.bic;
        Ok(())
    })
}

/// Learns a tree by backward hill climbing. With `order` NULL every
/// ordering is tried (at most 8 variables); otherwise `order` is a
/// comma-separated list of variable names.
///
/// # Safety
/// `table` must be a live handle, `order` NULL or NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_learn(
    table: *const CstreeTable,
    order: *const c_char,
    out: *mut *mut CstreeTree,
) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let u = ref_arg(table, "table")?;
        let cfg = LearnConfig::default();
        let inner = if order.is_null() {
            bhc_cs_perm(&u.table, &u.variables, &cfg)?.0
        } else {
            let names = str_arg(order, "order")?;
            let perm = names
                .split(',')
                .map(|n| {
                    u.variables
                        .iter()
                        .position(|v| v.name() == n.trim())
                        .ok_or_else(|| Error::InvalidVariable(format!("unknown variable {}", n.trim())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let ord = cstree::Ordering::new(perm)?;
            bhc_cs(&u.table, &u.variables, &ord, &cfg)?
        };
        *out = Box::into_raw(Box::new(CstreeTree { inner }));
        Ok(())
    })
}

/// Number of binary CStrees on `p` variables as a decimal string.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cstree_count_cstrees(p: usize, out: *mut *mut c_char) -> CstreeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = to_c(count_cstrees(p)?.to_string());
        Ok(())
    })
}
