use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use fusionlab_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = fl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generate(n: usize, frac: f64, seed: u64) -> *mut FlCorpus {
    let mut c = ptr::null_mut();
    let st = unsafe { fl_corpus_generate(n, 4, 4, 4.0, 1.0, frac, seed, &mut c) };
    assert_eq!(st, FlStatus::Ok);
    c
}

#[test]
fn corpus_roundtrip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(&dir.path().join("c.csv"));
    let c = generate(10, 0.5, 3);
    unsafe {
        assert_eq!(fl_corpus_save(c, path.as_ptr()), FlStatus::Ok);
        let mut d = ptr::null_mut();
        assert_eq!(fl_corpus_load(path.as_ptr(), &mut d), FlStatus::Ok);
        let (mut n, mut dt, mut di) = (0, 0, 0);
        assert_eq!(fl_corpus_shape(d, &mut n, &mut dt, &mut di), FlStatus::Ok);
        assert_eq!((n, dt, di), (30, 4, 4));
        let mut labels = vec![9u8; n];
        assert_eq!(fl_corpus_labels(d, labels.as_mut_ptr(), n), FlStatus::Ok);
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 15);
        assert!(labels.iter().all(|&l| l <= 3));
        assert_eq!(fl_corpus_labels(d, labels.as_mut_ptr(), n - 1), FlStatus::BufferTooSmall);
        fl_corpus_free(d);
        fl_corpus_free(c);
    }
}

#[test]
fn errors_map_to_codes_and_messages() {
    let mut c = ptr::null_mut();
    let missing = CString::new("/definitely/not/here.csv").unwrap();
    unsafe {
        assert_eq!(fl_corpus_load(missing.as_ptr(), &mut c), FlStatus::Io);
        assert!(last_error().contains("/definitely/not/here.csv"));
        assert!(c.is_null());
        assert_eq!(fl_corpus_load(ptr::null(), &mut c), FlStatus::NullPointer);
        assert_eq!(fl_corpus_generate(10, 4, 4, 0.0, 1.0, 1.0, 0, &mut c), FlStatus::InvalidArgument);
        assert_eq!(
            fl_corpus_shape(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()),
            FlStatus::NullPointer
        );
        fl_corpus_free(ptr::null_mut());
        fl_model_free(ptr::null_mut());
    }
    assert_eq!(unsafe { CStr::from_ptr(fl_version()) }.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    assert_eq!(fl_num_classes(), 3);
}

#[test]
fn train_save_load_predict() {
    let dir = tempfile::tempdir().unwrap();
    let mp = cstr(&dir.path().join("m.bin"));
    let sp = cstr(&dir.path().join("s.json"));
    let c = generate(20, 1.0, 5);
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(fl_model_train(c, 1, true, 3, &mut m), FlStatus::Ok, "{}", last_error());
        let mut p1 = vec![0.0; 180];
        assert_eq!(fl_model_predict_proba(m, c, p1.as_mut_ptr(), p1.len()), FlStatus::Ok);
        for row in p1.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(fl_model_save(m, mp.as_ptr(), sp.as_ptr()), FlStatus::Ok);
        let mut m2 = ptr::null_mut();
        assert_eq!(fl_model_load(mp.as_ptr(), sp.as_ptr(), &mut m2), FlStatus::Ok);
        let mut p2 = vec![0.0; 180];
        assert_eq!(fl_model_predict_proba(m2, c, p2.as_mut_ptr(), p2.len()), FlStatus::Ok);
        assert_eq!(p1, p2);
        assert_eq!(fl_model_predict_proba(m2, c, p2.as_mut_ptr(), 10), FlStatus::BufferTooSmall);
        fl_model_free(m);
        fl_model_free(m2);
        fl_corpus_free(c);
    }
}

fn target_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_the_exported_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fusionlab.h")).unwrap();
    for sym in [
        "fl_last_error",
        "fl_version",
        "fl_num_classes",
        "fl_corpus_load",
        "fl_corpus_generate",
        "fl_corpus_save",
        "fl_corpus_shape",
        "fl_corpus_labels",
        "fl_corpus_free",
        "fl_model_train",
        "fl_model_load",
        "fl_model_save",
        "fl_model_predict_proba",
        "fl_model_free",
        "typedef struct FlCorpus FlCorpus;",
        "FL_STATUS_BUFFER_TOO_SMALL = 8",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let profile_dir = ["debug", "release"]
        .iter()
        .map(|p| target_dir().join(p))
        .find(|d| d.join("libfusionlab_ffi.a").exists())
        .expect("static library built alongside the tests");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "fusionlab.h"
int main(void) {
    FlCorpus *c = NULL;
    if (fl_corpus_generate(5, 3, 2, 4.0, 1.0, 1.0, 7, &c) != FL_STATUS_OK) return 10;
    size_t n = 0, dt = 0, di = 0;
    if (fl_corpus_shape(c, &n, &dt, &di) != FL_STATUS_OK) return 11;
    FlCorpus *bad = NULL;
    if (fl_corpus_load("/no/such/file.csv", &bad) != FL_STATUS_IO) return 12;
    printf("%zu %zu %zu %s\n", n, dt, di, fl_last_error() ? "err" : "none");
    fl_corpus_free(c);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("include"))
        .arg(profile_dir.join("libfusionlab_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "15 3 2 err");
}
