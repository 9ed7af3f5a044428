use std::ffi::CString;
use std::path::Path;
use std::process::Command;
use std::ptr;

use remixmatch::data::{synth_dataset, SynthShape};
use remixmatch::runner::{train, TrainConfig};
use remixmatch_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { rmx_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn sharpen_align_kl_and_match() {
    let q = [0.6, 0.4];
    let mut out = [0.0; 2];
    assert_eq!(unsafe { rmx_sharpen(q.as_ptr(), 2, 0.5, out.as_mut_ptr()) }, RmxStatus::Ok);
    assert!((out[0] - 0.36 / 0.52).abs() < 1e-12);

    let p = [0.5, 0.5];
    let pt = [0.8, 0.2];
    let q = [0.8, 0.2];
    assert_eq!(unsafe { rmx_align(q.as_ptr(), p.as_ptr(), pt.as_ptr(), 2, out.as_mut_ptr()) }, RmxStatus::Ok);
    assert!((out[0] - 0.5).abs() < 1e-12);

    let mut v = 0.0;
    assert_eq!(unsafe { rmx_kl(p.as_ptr(), p.as_ptr(), 2, &mut v) }, RmxStatus::Ok);
    assert_eq!(v, 0.0);
    let one_hot = [1.0, 0.0];
    assert_eq!(unsafe { rmx_match_score(one_hot.as_ptr(), one_hot.as_ptr(), 2, &mut v) }, RmxStatus::Ok);
    assert_eq!(v, 1.0);
}

#[test]
fn errors_are_reported() {
    let mut out = [0.0; 2];
    let q = [0.6, 0.4];
    assert_eq!(unsafe { rmx_sharpen(ptr::null(), 2, 0.5, out.as_mut_ptr()) }, RmxStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { rmx_sharpen(q.as_ptr(), 2, 0.0, out.as_mut_ptr()) }, RmxStatus::Config);
    let bad = [0.7, 0.7];
    assert_eq!(unsafe { rmx_sharpen(bad.as_ptr(), 2, 0.5, out.as_mut_ptr()) }, RmxStatus::InvalidArgument);
    let mut model = ptr::null_mut();
    let missing = CString::new("/nonexistent/checkpoint.bin").unwrap();
    assert_eq!(unsafe { rmx_model_load(missing.as_ptr(), &mut model) }, RmxStatus::Checkpoint);
    assert!(model.is_null());
    let mut policy = ptr::null_mut();
    assert_eq!(unsafe { rmx_policy_new(1.5, 0.8, 2, &mut policy) }, RmxStatus::Config);
}

#[test]
fn policy_handle_lifecycle() {
    let mut policy = ptr::null_mut();
    assert_eq!(unsafe { rmx_policy_new(0.99, 0.8, 2, &mut policy) }, RmxStatus::Ok);
    let mut aug = ptr::null_mut();
    assert_eq!(unsafe { rmx_policy_sample(policy, 7, 1, &mut aug) }, RmxStatus::Ok);
    for _ in 0..500 {
        assert_eq!(unsafe { rmx_policy_update(policy, aug, 0.0) }, RmxStatus::Ok);
    }
    let pixels = vec![0.5f32; 8 * 8 * 3];
    let mut out = vec![0f32; pixels.len()];
    assert_eq!(unsafe { rmx_augmentation_apply(aug, pixels.as_ptr(), 8, 8, 3, 1, out.as_mut_ptr()) }, RmxStatus::Ok);
    assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));

    let mut below = 0;
    for kind in 0..19 {
        let mut w = [0.0; 17];
        let mut bins = 0;
        let mut param = 0;
        while unsafe { rmx_policy_weights(policy, kind, param, w.as_mut_ptr(), w.len(), &mut bins) } == RmxStatus::Ok {
            below += w[..bins].iter().filter(|&&x| x < 0.01).count();
            param += 1;
        }
    }
    assert!(below >= 1);
    let mut small = [0.0; 2];
    let mut bins = 0;
    assert_eq!(unsafe { rmx_policy_weights(policy, 1, 0, small.as_mut_ptr(), 2, &mut bins) }, RmxStatus::BufferTooSmall);
    assert_eq!(bins, 17);
    unsafe {
        rmx_augmentation_free(aug);
        rmx_policy_free(policy);
        rmx_policy_free(ptr::null_mut());
    }
}

#[test]
fn model_predicts_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::default();
    for kv in ["image_size=8", "channels=1", "classes=3", "conv_channels=2", "hidden=8", "batch=4", "steps=3", "labels=6", "eval_every=3"] {
        cfg.apply_override(kv).unwrap();
    }
    let shape = SynthShape::square(8, 1);
    let train_set = synth_dataset(30, 3, shape, 0).unwrap();
    let test_set = synth_dataset(9, 3, shape, 1).unwrap();
    train(&cfg, &train_set, &test_set, Some(dir.path())).unwrap();

    let path = CString::new(dir.path().join("checkpoint.bin").to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { rmx_model_load(path.as_ptr(), &mut model) }, RmxStatus::Ok);
    let (mut h, mut w, mut c, mut k) = (0, 0, 0, 0);
    assert_eq!(unsafe { rmx_model_shape(model, &mut h, &mut w, &mut c, &mut k) }, RmxStatus::Ok);
    assert_eq!((h, w, c, k), (8, 8, 1, 3));
    let pixels: Vec<f32> = test_set.images.iter().take(2).flat_map(|i| i.data().to_vec()).collect();
    let mut probs = vec![0.0; 6];
    assert_eq!(unsafe { rmx_model_predict(model, pixels.as_ptr(), 2, probs.as_mut_ptr()) }, RmxStatus::Ok);
    for row in probs.chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    unsafe { rmx_model_free(model) };
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/remixmatch.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["rmx_sharpen", "rmx_policy_new", "rmx_model_predict", "RMX_STATUS_OK", "typedef struct RmxPolicy RmxPolicy"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99"])
        .arg(&header)
        .status()
    else {
        return;
    };
    assert!(status.success());
}
