use std::ffi::{CStr, CString};
use std::ptr;

use cstree_ffi::*;

const FOUR_VAR: &str = include_str!("../../core/tests/fixtures/four_var_tree.json");

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    cstree_string_free(s);
    out
}

unsafe fn tree(json: &str) -> *mut CstreeTree {
    let mut t = ptr::null_mut();
    assert_eq!(cstree_tree_from_json(c(json).as_ptr(), &mut t), CstreeStatus::Ok);
    t
}

#[test]
fn round_trip_and_shape() {
    unsafe {
        let t = tree(FOUR_VAR);
        let mut s = ptr::null_mut();
        assert_eq!(cstree_tree_to_json(t, &mut s), CstreeStatus::Ok);
        let json = take(s);
        let t2 = tree(&json);
        let (mut p, mut stages) = (0usize, 0usize);
        assert_eq!(cstree_tree_shape(t2, &mut p, &mut stages), CstreeStatus::Ok);
        assert_eq!(p, 4);
        // 1 + 2 + (1 stage + 2 singletons) + (3 stages + 2 singletons)
        assert_eq!(stages, 11);
        let mut eq = false;
        assert_eq!(cstree_equivalent(t, t2, &mut eq), CstreeStatus::Ok);
        assert!(eq);
        cstree_tree_free(t);
        cstree_tree_free(t2);
    }
}

#[test]
fn minimal_contexts_and_dot() {
    unsafe {
        let t = tree(FOUR_VAR);
        let mut s = ptr::null_mut();
        assert_eq!(cstree_minimal_contexts_json(t, &mut s), CstreeStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(v, serde_json::json!([{"X1": "0"}, {"X2": "0"}, {"X3": "0"}]));
        assert_eq!(cstree_context_graphs_dot(t, &mut s), CstreeStatus::Ok);
        assert!(take(s).contains("digraph"));
        cstree_tree_free(t);
    }
}

#[test]
fn table_bic_and_learning() {
    unsafe {
        let t = tree(FOUR_VAR);
        let mut csv = String::from("X1,X2,X3,X4,count\n");
        for cell in 0..16u32 {
            let bits: Vec<String> = (0..4).map(|i| ((cell >> (3 - i)) & 1).to_string()).collect();
            csv.push_str(&format!("{},{}\n", bits.join(","), 1 + cell % 5));
        }
        let mut u = ptr::null_mut();
        assert_eq!(cstree_table_from_csv(t, c(&csv).as_ptr(), &mut u), CstreeStatus::Ok);
        let mut n = 0u64;
        assert_eq!(cstree_table_n(u, &mut n), CstreeStatus::Ok);
        assert_eq!(n, (0..16u64).map(|c| 1 + c % 5).sum::<u64>());
        let mut b = 0.0;
        assert_eq!(cstree_bic(t, u, &mut b), CstreeStatus::Ok);
        assert!(b.is_finite() && b < 0.0);

        let mut learned = ptr::null_mut();
        assert_eq!(cstree_learn(u, c("X1,X2,X3,X4").as_ptr(), &mut learned), CstreeStatus::Ok);
        let mut lb = 0.0;
        assert_eq!(cstree_bic(learned, u, &mut lb), CstreeStatus::Ok);
        let mut all = ptr::null_mut();
        assert_eq!(cstree_learn(u, ptr::null(), &mut all), CstreeStatus::Ok);
        let mut ab = 0.0;
        assert_eq!(cstree_bic(all, u, &mut ab), CstreeStatus::Ok);
        assert!(ab >= lb - 1e-9);
        cstree_tree_free(learned);
        cstree_tree_free(all);
        cstree_table_free(u);
        cstree_tree_free(t);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(cstree_tree_from_json(c("{not json").as_ptr(), &mut t), CstreeStatus::Parse);
        assert!(t.is_null());
        let msg = CStr::from_ptr(cstree_last_error_message()).to_str().unwrap();
        assert!(msg.starts_with("json:"), "{msg}");

        assert_eq!(cstree_tree_from_json(ptr::null(), &mut t), CstreeStatus::NullPointer);
        assert_eq!(cstree_tree_from_json(c("{}").as_ptr(), ptr::null_mut()), CstreeStatus::NullPointer);

        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(cstree_tree_from_json(bad.as_ptr().cast(), &mut t), CstreeStatus::InvalidUtf8);

        let tr = tree(FOUR_VAR);
        let mut u = ptr::null_mut();
        // all observations have X1=0, so stages under X1=1 are unobserved
        let csv = "X1,X2,X3,X4\n0,0,0,0\n0,1,1,1\n";
        assert_eq!(cstree_table_from_csv(tr, c(csv).as_ptr(), &mut u), CstreeStatus::Ok);
        let mut b = 0.0;
        assert_eq!(cstree_bic(tr, u, &mut b), CstreeStatus::Undefined);
        assert!(!cstree_last_error_message().is_null());

        let mut s = ptr::null_mut();
        assert_eq!(cstree_count_cstrees(99, &mut s), CstreeStatus::Unsupported);
        assert_eq!(cstree_count_cstrees(4, &mut s), CstreeStatus::Ok);
        assert_eq!(take(s), "59136");
        assert!(cstree_last_error_message().is_null());

        cstree_table_free(u);
        cstree_tree_free(tr);
        cstree_tree_free(ptr::null_mut());
        cstree_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(cstree_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
