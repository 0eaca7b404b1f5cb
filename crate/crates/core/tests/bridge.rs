use std::time::Duration;

use gisbo::bridge::{BridgeError, BridgeHandle, BridgeSurrogate, Timeouts};
use gisbo::optimizer::{run_gitbo, FnObjective, RunConfig, Timing};
use gisbo::surrogate::Surrogate;
use gisbo::ObservationSet;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn echo(flags: &[&str]) -> Vec<String> {
    let mut cmd = vec![env!("CARGO_BIN_EXE_gisbo-echo-server").to_string()];
    cmd.extend(flags.iter().map(|s| s.to_string()));
    cmd
}

fn obs(n: usize, d: usize) -> ObservationSet {
    let x = DMatrix::from_fn(n, d, |i, j| ((i * d + j) % 7) as f64 / 7.0);
    let y = (0..n).map(|i| i as f64).collect();
    ObservationSet::new(x, y).unwrap()
}

#[test]
fn handshake_reports_capabilities() {
    let h = BridgeHandle::spawn(&echo(&["--max-context", "50", "--no-grad"])).unwrap();
    assert_eq!(h.version(), "1");
    assert_eq!(h.max_context_size(), 50);
    assert!(!h.grad_capable());
    assert!(h.is_live());
}

#[test]
fn spawn_failures() {
    let err = BridgeHandle::spawn(&["/nonexistent/bridge-server".to_string()]).unwrap_err();
    assert!(matches!(err, BridgeError::Spawn(_)), "{err:?}");
    let err = BridgeHandle::spawn(&echo(&["--garbage"])).unwrap_err();
    assert!(matches!(err, BridgeError::Protocol(_)), "{err:?}");
    let err = BridgeHandle::spawn(&echo(&["--wrong-id"])).unwrap_err();
    assert!(matches!(err, BridgeError::Protocol(_)), "{err:?}");
    assert!(BridgeHandle::spawn(&[]).is_err());
}

#[test]
fn infer_shapes_and_values() {
    let mut h = BridgeHandle::spawn(&echo(&[])).unwrap();
    let o = obs(6, 3);
    let cand = DMatrix::from_element(4, 3, 0.5);
    let p = h.infer(&o, &cand, true).unwrap();
    assert_eq!(p.mean, vec![2.5; 4]);
    assert_eq!(p.var, vec![1.0; 4]);
    assert_eq!(p.grad.unwrap().shape(), (4, 3));
    let p = h.infer(&o, &cand, false).unwrap();
    assert!(p.grad.is_none());
    let err = h.infer(&o, &DMatrix::zeros(2, 5), false).unwrap_err();
    assert!(matches!(err, BridgeError::Precondition(_)));
}

#[test]
fn context_cap_is_checked_client_side() {
    let mut h = BridgeHandle::spawn(&echo(&["--max-context", "10"])).unwrap();
    let o = obs(6, 2);
    assert!(h.infer(&o, &DMatrix::zeros(4, 2), false).is_ok());
    let err = h.infer(&o, &DMatrix::zeros(5, 2), false).unwrap_err();
    assert!(matches!(err, BridgeError::Precondition(_)), "{err:?}");
    // The handle survives a rejected request.
    assert!(h.infer(&o, &DMatrix::zeros(1, 2), false).is_ok());
}

#[test]
fn server_errors_surface_as_remote() {
    let mut h = BridgeHandle::spawn(&echo(&["--fail-infer"])).unwrap();
    let err = h.infer(&obs(3, 2), &DMatrix::zeros(1, 2), false).unwrap_err();
    match err {
        BridgeError::Remote(msg) => assert!(msg.contains("configured to fail")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn crash_and_shutdown_lifecycle() {
    let timeouts = Timeouts {
        infer: Duration::from_secs(10),
        ..Timeouts::default()
    };
    let mut h = BridgeHandle::spawn_with(&echo(&["--crash-on-infer"]), timeouts).unwrap();
    let err = h.infer(&obs(3, 2), &DMatrix::zeros(1, 2), false).unwrap_err();
    assert!(matches!(err, BridgeError::Protocol(_)), "{err:?}");
    h.shutdown();
    h.shutdown();
    assert!(!h.is_live());
    let err = h.infer(&obs(3, 2), &DMatrix::zeros(1, 2), false).unwrap_err();
    assert!(matches!(err, BridgeError::InvalidHandle), "{err:?}");

    let mut h = BridgeHandle::spawn(&echo(&[])).unwrap();
    h.shutdown();
    h.shutdown();
    assert!(matches!(h.echo(&[1.0]), Err(BridgeError::InvalidHandle)));
}

#[test]
fn echo_payloads_roundtrip_bit_exact() {
    let mut h = BridgeHandle::spawn(&echo(&[])).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    for _ in 0..100 {
        let n = rng.random_range(0..40);
        let v: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => f64::from_bits(rng.random::<u64>() & !(0x7ff << 52) | (rng.random_range(1..2046u64) << 52)),
                1 => rng.random::<f64>() * 1e-300,
                2 => -rng.random::<f64>(),
                _ => rng.random_range(-1e6..1e6),
            })
            .collect();
        let back = h.echo(&v).unwrap();
        let bits = |s: &[f64]| s.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&v));
    }
}

#[test]
fn bridge_surrogate_drives_the_loop_without_gradients() {
    let mut s = BridgeSurrogate::spawn(&echo(&["--no-grad", "--max-context", "200"])).unwrap();
    assert!(!s.capabilities().analytic_grad);
    assert!(s.identity().starts_with("bridge:"));
    let obj = FnObjective {
        name: "bowl".into(),
        dim: 3,
        optimum: Some(0.0),
        f: |x: &[f64]| -x.iter().map(|v| (v - 0.4).powi(2)).sum::<f64>(),
    };
    let cfg = RunConfig {
        n_init: 5,
        iters: 3,
        m_cand: 64,
        timing: Timing::Off,
        ..Default::default()
    };
    let t = run_gitbo(&cfg, &obj, &mut s).unwrap();
    assert!(t.error.is_none(), "{:?}", t.error);
    assert_eq!(t.len(), 8);
    // The stub's flat mean gives an empty spectrum, so one direction is used.
    assert!(t.search_records().iter().all(|r| r.r_selected == 1));
}
