//! End-to-end exercises of the wire protocol: a cloud served over TCP, a
//! plant-side client driving it, equivalence with the in-process path, the
//! refresh session's ciphertext accounting, and the halt on a lost refresh
//! frame.

use std::time::Duration;

use rand::SeedableRng;

use firctl_core::benchmark::{self, TapSet};
use firctl_core::encfir::{EncFirConfig, Mode};
use firctl_core::he::HeParams;
use firctl_core::lti::{Matrix, StateSpace};
use firctl_core::quant::ScalingProfile;
use firctl_core::sim::proto::MsgType;
use firctl_core::sim::roles;
use firctl_core::sim::transport::{FaultyTransport, InprocTransport, TcpTransport};
use firctl_core::sim::{
    run_scenario, BackendKind, ControllerSpec, Scenario, SimError, TransportSpec,
};

fn enc_fir_scenario(transport: TransportSpec) -> Scenario {
    Scenario {
        plant: benchmark::reactor_plant(),
        controller: ControllerSpec::EncryptedFir {
            filter: benchmark::taps(TapSet::Optimized2),
            cfg: EncFirConfig { mode: Mode::Partial, s6: 100.0, s7: 100.0, y_max: 256.0 },
            he: HeParams::partial_profile(),
            backend: BackendKind::Real,
        },
        steps: 100,
        transport,
        seed: 1234,
    }
}

#[test]
fn socket_and_inproc_traces_are_identical() {
    let cloud = roles::serve_cloud("127.0.0.1:0").unwrap();
    let addr = cloud.addr.to_string();

    let inproc = run_scenario(&enc_fir_scenario(TransportSpec::Inproc)).unwrap();
    let socket = run_scenario(&enc_fir_scenario(TransportSpec::Socket(addr))).unwrap();

    assert_eq!(inproc.len(), socket.len());
    for (a, b) in inproc.steps.iter().zip(&socket.steps) {
        // identical decrypted control values, bit for bit: same seed drives
        // the same ciphertext stream on both paths
        assert_eq!(a.u, b.u, "step {}", a.k);
        assert_eq!(a.x, b.x, "step {}", a.k);
    }
    cloud.stop();
}

#[test]
fn full_mode_session_over_socket() {
    let cloud = roles::serve_cloud("127.0.0.1:0").unwrap();
    let addr = cloud.addr.to_string();
    // full mode: tap ciphertexts travel in the handshake; the smaller
    // certified plaintext space means a scaled-down transient
    let x0: Vec<f64> = benchmark::REACTOR_X0.iter().map(|v| v / 10.0).collect();
    let sc = Scenario {
        plant: benchmark::reactor_plant().with_x0(x0).unwrap(),
        controller: ControllerSpec::EncryptedFir {
            filter: benchmark::taps(TapSet::Optimized2),
            cfg: EncFirConfig { mode: Mode::Full, s6: 4.0, s7: 4.0, y_max: 32.0 },
            he: HeParams::default(),
            backend: BackendKind::Real,
        },
        steps: 12,
        transport: TransportSpec::Socket(addr),
        seed: 99,
    };
    let trace = run_scenario(&sc).unwrap();
    assert_eq!(trace.len(), 12);
    assert!(trace.steps.iter().all(|s| !s.flags.noise_alarm));
    cloud.stop();
}

fn refresh_fixture() -> (StateSpace, StateSpace, ScalingProfile, HeParams) {
    // a comfortably stable controller whose integer form survives several
    // periods inside the partial-profile plaintext space
    let ctrl = StateSpace::new(
        Matrix::from_rows(&[vec![0.5, 0.1], vec![0.0, 0.4]]).unwrap(),
        Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        Matrix::from_rows(&[vec![0.3, -0.2]]).unwrap(),
        Matrix::from_rows(&[vec![0.1, 0.05]]).unwrap(),
        vec![0.0, 0.0],
    )
    .unwrap();
    // plant: 1 input, 2 outputs, mildly stable so signals stay small
    let plant = StateSpace::new(
        Matrix::from_rows(&[vec![0.8, 0.1], vec![0.0, 0.7]]).unwrap(),
        Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap(),
        Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        Matrix::zeros(2, 1),
        vec![2.0, -1.5],
    )
    .unwrap();
    let he = HeParams::partial_profile();
    let profile = ScalingProfile::uniform(8.0, he.t as u128).unwrap();
    (plant, ctrl, profile, he)
}

#[test]
fn refresh_session_transmits_n_ciphertexts_each_way_per_period() {
    let (plant, ctrl, profile, he) = refresh_fixture();
    let period = 4;
    let steps = 3 * period as usize + 2;
    let (trace, stats) =
        roles::run_refresh_loopback(&plant, &ctrl, &profile, period, 64.0, he, 7, steps).unwrap();
    assert_eq!(trace.len(), steps);
    assert_eq!(stats.periods, 3);
    let n = ctrl.order();
    assert!(stats.refresh_cts_down.iter().all(|c| *c == n), "{:?}", stats.refresh_cts_down);
    assert!(stats.refresh_cts_up.iter().all(|c| *c == n), "{:?}", stats.refresh_cts_up);
    assert!(trace.steps.iter().all(|s| !s.flags.overflow));
    // refresh flags appear exactly at period boundaries
    let refresh_steps: Vec<usize> =
        trace.steps.iter().filter(|s| s.flags.refreshed).map(|s| s.k).collect();
    assert_eq!(refresh_steps, vec![3, 7, 11]);
}

#[test]
fn refresh_session_over_tcp_matches_loopback() {
    let (plant, ctrl, profile, he) = refresh_fixture();
    let period = 4;
    let steps = 9;
    let (local, _) =
        roles::run_refresh_loopback(&plant, &ctrl, &profile, period, 64.0, he, 21, steps)
            .unwrap();
    let cloud = roles::serve_cloud("127.0.0.1:0").unwrap();
    let transport =
        TcpTransport::connect(&cloud.addr.to_string(), Duration::from_secs(5)).unwrap();
    let (remote, _) = roles::run_refresh_client(
        transport, &plant, &ctrl, &profile, period, 64.0, he, 21, steps,
    )
    .unwrap();
    for (a, b) in local.steps.iter().zip(&remote.steps) {
        assert_eq!(a.u, b.u, "step {}", a.k);
    }
    cloud.stop();
}

#[test]
fn dropped_refresh_frame_halts_session_with_diagnostic() {
    let (plant, ctrl, profile, he) = refresh_fixture();
    let period = 3;
    let (client_t, server_t) = InprocTransport::pair();
    let server = std::thread::spawn(move || roles::serve_session(server_t));
    let lossy = FaultyTransport::new(
        client_t,
        1.0, // drop every eligible frame
        Duration::ZERO,
        rand_chacha::ChaCha8Rng::seed_from_u64(5),
    )
    .dropping_only(MsgType::StateRefreshUp);
    let result = roles::run_refresh_client(
        lossy, &plant, &ctrl, &profile, period, 64.0, he, 31, 10,
    );
    match result {
        Err(SimError::Halted(diag)) => {
            assert!(diag.to_lowercase().contains("refresh"), "diagnostic was: {diag}")
        }
        other => panic!("expected halt, got {other:?}"),
    }
    let _ = server.join();
}

#[test]
fn latency_grows_roughly_linearly_in_order() {
    use firctl_core::lti::Matrix as M;
    // partial mode, real backend: per-step work is (N+1) plaintext products
    let orders = [2usize, 4, 8, 16];
    let mut medians = Vec::new();
    for order in orders {
        let taps: Vec<M> = (0..=order)
            .map(|j| M::new(1, 2, vec![20.0 / (j + 1) as f64, -0.3]).unwrap())
            .collect();
        let filter = firctl_core::fir::FirFilter::new(taps).unwrap();
        let cfg = EncFirConfig { mode: Mode::Partial, s6: 50.0, s7: 50.0, y_max: 10.0 };
        let backend =
            firctl_core::he::BfvSession::new(HeParams::partial_profile(), 77).unwrap();
        let mut session =
            firctl_core::encfir::EncFirSession::new(filter, cfg, backend).unwrap();
        let stats = firctl_core::sim::bench_step_latency(&mut session, 60).unwrap();
        medians.push(stats.median_ms);
    }
    // monotone growth, and going 2 -> 16 costs clearly more than 2x
    for w in medians.windows(2) {
        assert!(w[1] > w[0] * 0.9, "latency regressed: {medians:?}");
    }
    assert!(
        medians[3] > medians[0] * 2.0,
        "expected roughly linear growth in order: {medians:?}"
    );
}
