use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use optreset_ffi::*;

fn last_error() -> String {
    let p = optreset_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_opt(kind: OptresetOptimizerKind, alpha: f64, n: usize) -> *mut OptresetOptimizer {
    let mut h = ptr::null_mut();
    let st = unsafe { optreset_optimizer_new(kind as u32, alpha, 0.9, 0.999, 1e-8, n, &mut h) };
    assert_eq!(st, OptresetStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn adam_first_step_and_reset() {
    let h = new_opt(OptresetOptimizerKind::Adam, 0.1, 2);
    let mut params = [1.0, -1.0];
    let grad = [0.5, -2.0];
    unsafe {
        assert_eq!(optreset_optimizer_step(h, params.as_mut_ptr(), grad.as_ptr(), 2), OptresetStatus::Ok);
    }
    assert!((params[0] - 0.9).abs() < 1e-6);
    assert!((params[1] + 0.9).abs() < 1e-6);

    let (mut m, mut v, mut i) = ([0.0; 2], [0.0; 2], 0u64);
    unsafe {
        assert_eq!(
            optreset_optimizer_moments(h, m.as_mut_ptr(), v.as_mut_ptr(), 2, &mut i),
            OptresetStatus::Ok
        );
    }
    assert_eq!(i, 1);
    assert!((m[0] - 0.05).abs() < 1e-15);
    assert!((v[1] - 0.004).abs() < 1e-15);

    unsafe {
        assert_eq!(optreset_optimizer_reset(h), OptresetStatus::Ok);
        optreset_optimizer_moments(h, m.as_mut_ptr(), v.as_mut_ptr(), 2, &mut i);
        optreset_optimizer_free(h);
    }
    assert_eq!((m, v, i), ([0.0; 2], [0.0; 2], 0));
}

#[test]
fn reset_handle_matches_fresh_handle() {
    let a = new_opt(OptresetOptimizerKind::Radam, 0.01, 3);
    let b = new_opt(OptresetOptimizerKind::Radam, 0.01, 3);
    let mut pa = [0.3, 0.1, -0.2];
    let mut pb = pa;
    let g = [0.4, -0.1, 0.7];
    unsafe {
        for _ in 0..7 {
            optreset_optimizer_step(a, pa.as_mut_ptr(), g.as_ptr(), 3);
        }
        optreset_optimizer_reset(a);
        pb.copy_from_slice(&pa);
        for _ in 0..6 {
            optreset_optimizer_step(a, pa.as_mut_ptr(), g.as_ptr(), 3);
            optreset_optimizer_step(b, pb.as_mut_ptr(), g.as_ptr(), 3);
        }
        optreset_optimizer_free(a);
        optreset_optimizer_free(b);
    }
    assert_eq!(pa, pb);
}

#[test]
fn error_codes_and_messages() {
    let mut h = ptr::null_mut();
    let st = unsafe { optreset_optimizer_new(42, 0.1, 0.9, 0.999, 1e-8, 2, &mut h) };
    assert_eq!(st, OptresetStatus::InvalidArgument);
    assert!(h.is_null());
    assert!(last_error().contains("42"));

    let h = new_opt(OptresetOptimizerKind::Sgd, 0.1, 2);
    let mut p = [0.0; 3];
    let g = [1.0; 3];
    let st = unsafe { optreset_optimizer_step(h, p.as_mut_ptr(), g.as_ptr(), 3) };
    assert_eq!(st, OptresetStatus::DimensionMismatch);
    let g = [f64::NAN, 0.0];
    let st = unsafe { optreset_optimizer_step(h, p.as_mut_ptr(), g.as_ptr(), 2) };
    assert_eq!(st, OptresetStatus::NonFinite);
    let st = unsafe { optreset_optimizer_step(h, ptr::null_mut(), g.as_ptr(), 2) };
    assert_eq!(st, OptresetStatus::NullPointer);
    assert_eq!(unsafe { optreset_optimizer_reset(ptr::null_mut()) }, OptresetStatus::NullPointer);
    unsafe {
        optreset_optimizer_free(h);
        optreset_optimizer_free(ptr::null_mut());
    }

    let mut x = 0.0;
    let st = unsafe { optreset_normalize_score(1.0, 0.5, 0.5, &mut x) };
    assert_eq!(st, OptresetStatus::Degenerate);
    assert!(last_error().contains("degenerate"));
    let st = unsafe { optreset_normalize_score(0.75, 0.5, 1.0, &mut x) };
    assert_eq!(st, OptresetStatus::Ok);
    assert_eq!(x, 0.5);
    assert!(optreset_last_error_message().is_null());
}

#[test]
fn mdp_handles_and_value_iteration() {
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(optreset_mdp_gridworld(2, 1, 1, 0, 0.0, 0.5, &mut g), OptresetStatus::Ok);
    }
    let (mut ns, mut na) = (0usize, 0usize);
    unsafe { optreset_mdp_dims(g, &mut ns, &mut na) };
    assert_eq!((ns, na), (2, 4));
    let mut q = vec![0.0; ns * na];
    unsafe {
        assert_eq!(
            optreset_mdp_value_iteration(g, 1e-12, q.as_mut_ptr(), q.len()),
            OptresetStatus::Ok
        );
        assert_eq!(
            optreset_mdp_value_iteration(g, 1e-12, q.as_mut_ptr(), 3),
            OptresetStatus::DimensionMismatch
        );
        optreset_mdp_free(g);
    }
    // From state 0, moving right reaches the goal for reward 1.
    assert!((q[1] - 1.0).abs() < 1e-9);
    // Bumping into a wall costs nothing and then the goal is reached.
    assert!((q[0] - 0.5).abs() < 1e-9);
    assert_eq!(&q[4..], &[0.0; 4]);

    let mut gar = ptr::null_mut();
    unsafe {
        assert_eq!(optreset_mdp_garnet(5, 2, 2, 0.9, 3, &mut gar), OptresetStatus::Ok);
        optreset_mdp_free(gar);
        assert_eq!(
            optreset_mdp_garnet(0, 2, 2, 0.9, 3, &mut gar),
            OptresetStatus::InvalidArgument
        );
    }
}

#[test]
fn mdp_from_json_round_trip() {
    let spec = optreset::rl::make_garnet(4, 2, 2, 0.8, 11).unwrap();
    let json = CString::new(serde_json::to_string(&spec).unwrap()).unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(optreset_mdp_from_json(json.as_ptr(), &mut h), OptresetStatus::Ok);
    }
    let mut q = vec![0.0; 8];
    unsafe {
        optreset_mdp_value_iteration(h, 1e-12, q.as_mut_ptr(), 8);
        optreset_mdp_free(h);
    }
    let expected = optreset::rl::value_iteration_oracle(&spec, 1e-12).unwrap();
    for s in 0..4 {
        assert_eq!(&q[s * 2..s * 2 + 2], expected.row(s));
    }
    let bad = CString::new("{\"n_states\": 1}").unwrap();
    let st = unsafe { optreset_mdp_from_json(bad.as_ptr(), &mut h) };
    assert_eq!(st, OptresetStatus::InvalidArgument);
    let st = unsafe { optreset_mdp_from_json(ptr::null(), &mut h) };
    assert_eq!(st, OptresetStatus::NullPointer);
}

#[test]
fn train_from_toml_returns_record_json() {
    let toml = CString::new(
        r#"
inner_steps = 4
iterations = 3
batch_size = 8
prefill_steps = 50
eval_episodes = 2
hidden = [8]
[optimizer]
kind = "adam"
alpha = 0.001
[reset]
kind = "per_iteration"
[env]
kind = "garnet"
n_states = 5
n_actions = 2
seed = 1
"#,
    )
    .unwrap();
    let run = || {
        let mut out = ptr::null_mut();
        let st = unsafe { optreset_train_toml(toml.as_ptr(), &mut out) };
        assert_eq!(st, OptresetStatus::Ok, "{}", last_error());
        let s = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
        unsafe { optreset_string_free(out) };
        s
    };
    let a = run();
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["eval_returns"].as_array().unwrap().len(), 3);
    assert_eq!(v["resets"].as_array().unwrap().len(), 3);
    assert_eq!(a, run());

    let bad = CString::new("inner_steps = 0\n[env]\nkind = \"garnet\"\nn_states = 3\nn_actions = 2\nseed = 0\n").unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { optreset_train_toml(bad.as_ptr(), &mut out) };
    assert_eq!(st, OptresetStatus::Config);
    assert!(out.is_null());
}

#[test]
fn auc_through_abi() {
    let c = [0.0, 1.0, 1.0];
    let mut x = 0.0;
    unsafe {
        assert_eq!(optreset_auc(c.as_ptr(), 3, false, &mut x), OptresetStatus::Ok);
        assert_eq!(x, 1.5);
        assert_eq!(optreset_auc(c.as_ptr(), 3, true, &mut x), OptresetStatus::Ok);
        assert_eq!(x, 0.75);
        assert_ne!(optreset_auc(c.as_ptr(), 0, true, &mut x), OptresetStatus::Ok);
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/optreset.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "optreset_optimizer_new",
        "optreset_optimizer_step",
        "optreset_optimizer_reset",
        "optreset_mdp_value_iteration",
        "optreset_train_toml",
        "OPTRESET_STATUS_OK",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler available; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
