//! Service roles over the wire protocol.
//!
//! The cloud accepts one session per connection. The plant side opens the
//! session with a HELLO carrying the session description (plus encrypted
//! taps and zero-history ciphertexts), then drives one SENSOR_DATA ->
//! CONTROL_ACTION exchange per step. Refresh sessions additionally carry
//! STATE_REFRESH_DOWN (cloud to plant, every T-th step) and
//! STATE_REFRESH_UP (plant to cloud, start of the next period) frames with
//! `n` ciphertexts each. The cloud's key material is evaluation-only; the
//! secret key never leaves the plant side.

use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::proto::{join_ciphertexts, split_ciphertexts, MsgType, ProtoError, WireMessage};
use super::transport::{TcpTransport, Transport};
use super::{BackendKind, ControllerSpec, Scenario, SimError, SimTrace, StepFlags};
use crate::encfir::{self, EncFirConfig, EncFirEngine, EncryptedTaps, Mode};
use crate::he::{self, BfvSession, Ciphertext, CloudSession, HeParams, HeParamsFile, RelinKey};
use crate::quant::{self, RecoverKind, ScalingProfile};

/// Session description carried in the HELLO frame (JSON part).
#[derive(Debug, Serialize, Deserialize)]
pub struct SessionRequest {
    pub kind: SessionKind,
    pub he: HeParamsFile,
    /// Relinearization key for full-mode multiplications.
    pub rlk: Option<RelinKey>,
    pub order: usize,
    pub inputs: usize,
    pub outputs: usize,
    /// Plaintext integer taps (partial mode only).
    pub taps_plain: Option<Vec<Vec<Vec<i64>>>>,
    /// Encrypted-tap count in the binary section (full mode only).
    pub taps_encrypted: bool,
    /// Refresh sessions: period and the plaintext integer controller
    /// matrices (the reformulated controller is not confidential in the
    /// external-refresh scheme; only signals are).
    pub period: Option<u64>,
    pub a_bar: Option<Vec<Vec<i64>>>,
    pub b_bar: Option<Vec<Vec<i64>>>,
    pub c_bar: Option<Vec<Vec<i64>>>,
    pub d_bar: Option<Vec<Vec<i64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionKind {
    EncFir,
    RefreshIir,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionAck {
    accepted: bool,
    message: String,
}

/// Handle to a serving cloud; dropping it does not stop the server, call
/// [`CloudHandle::stop`].
pub struct CloudHandle {
    pub addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    join: Option<std::thread::JoinHandle<()>>,
}

impl CloudHandle {
    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

/// Start the cloud service on `addr` (use port 0 for an ephemeral port).
/// Each connection is served on its own thread; sessions share nothing.
pub fn serve_cloud(addr: &str) -> Result<CloudHandle, SimError> {
    let listener = TcpListener::bind(addr)
        .map_err(|e| SimError::Transport { step: 0, source: ProtoError::Io(e) })?;
    let bound = listener
        .local_addr()
        .map_err(|e| SimError::Transport { step: 0, source: ProtoError::Io(e) })?;
    listener
        .set_nonblocking(true)
        .map_err(|e| SimError::Transport { step: 0, source: ProtoError::Io(e) })?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let join = std::thread::spawn(move || loop {
        if flag.load(Ordering::SeqCst) {
            break;
        }
        match listener.accept() {
            Ok((stream, _peer)) => {
                stream.set_nonblocking(false).ok();
                std::thread::spawn(move || {
                    if let Ok(transport) = TcpTransport::new(stream) {
                        let _ = serve_session(transport);
                    }
                });
            }
            Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(_) => break,
        }
    });
    Ok(CloudHandle { addr: bound, shutdown, join: Some(join) })
}

fn bye(transport: &mut impl Transport, diagnostic: &str) {
    let _ = transport.send(&WireMessage::new(MsgType::Bye, diagnostic.as_bytes().to_vec()));
}

/// Serve one session on an established transport (exposed for in-process
/// loopback tests).
pub fn serve_session(mut transport: impl Transport) -> Result<(), SimError> {
    let hello = transport.recv().map_err(|e| SimError::Transport { step: 0, source: e })?;
    if hello.msg_type != MsgType::Hello {
        bye(&mut transport, "expected HELLO");
        return Err(SimError::Handshake("first frame was not HELLO".into()));
    }
    if hello.payload.len() < 4 {
        bye(&mut transport, "short HELLO");
        return Err(SimError::Handshake("short HELLO payload".into()));
    }
    let json_len = u32::from_le_bytes(hello.payload[0..4].try_into().unwrap()) as usize;
    if hello.payload.len() < 4 + json_len {
        bye(&mut transport, "truncated HELLO");
        return Err(SimError::Handshake("truncated HELLO payload".into()));
    }
    let request: SessionRequest = match serde_json::from_slice(&hello.payload[4..4 + json_len]) {
        Ok(r) => r,
        Err(e) => {
            bye(&mut transport, &format!("bad session request: {e}"));
            return Err(SimError::Handshake(format!("bad session request: {e}")));
        }
    };
    let binary = &hello.payload[4 + json_len..];
    let params = match request.he.clone().into_params() {
        Ok(p) => p,
        Err(e) => {
            bye(&mut transport, &format!("bad parameters: {e}"));
            return Err(SimError::Handshake(format!("bad parameters: {e}")));
        }
    };
    let ack = WireMessage::new(
        MsgType::Params,
        serde_json::to_vec(&SessionAck { accepted: true, message: "ready".into() }).unwrap(),
    );
    match request.kind {
        SessionKind::EncFir => {
            let rlk = request.rlk.clone().unwrap_or(RelinKey { pairs: vec![], base_log: 8 });
            let cloud = CloudSession { params, rlk };
            let l = request.inputs;
            let m = request.outputs;
            let order = request.order;
            let tap_count = if request.taps_encrypted { (order + 1) * m * l } else { 0 };
            let cts = match split_ciphertexts(binary, &params, tap_count + l) {
                Ok(c) => c,
                Err(e) => {
                    bye(&mut transport, &format!("bad HELLO ciphertexts: {e}"));
                    return Err(SimError::Handshake(format!("bad HELLO ciphertexts: {e}")));
                }
            };
            let taps: EncryptedTaps<Ciphertext> = if request.taps_encrypted {
                let mut it = cts[..tap_count].iter().cloned();
                let mut all = Vec::with_capacity(order + 1);
                for _ in 0..=order {
                    let mut rows = Vec::with_capacity(m);
                    for _ in 0..m {
                        let mut row = Vec::with_capacity(l);
                        for _ in 0..l {
                            row.push(it.next().expect("count checked"));
                        }
                        rows.push(row);
                    }
                    all.push(rows);
                }
                EncryptedTaps::Encrypted(all)
            } else {
                match &request.taps_plain {
                    Some(t) => EncryptedTaps::Plain(t.clone()),
                    None => {
                        bye(&mut transport, "partial session without plaintext taps");
                        return Err(SimError::Handshake("missing taps".into()));
                    }
                }
            };
            let enc_zero = cts[tap_count..].to_vec();
            let engine = EncFirEngine::new(cloud, taps, enc_zero, (order, l, m));
            transport.send(&ack).map_err(|e| SimError::Transport { step: 0, source: e })?;
            serve_enc_fir(transport, engine, l)
        }
        SessionKind::RefreshIir => {
            let (period, a_bar, b_bar, c_bar, d_bar) = match (
                request.period,
                &request.a_bar,
                &request.b_bar,
                &request.c_bar,
                &request.d_bar,
            ) {
                (Some(t), Some(a), Some(b), Some(c), Some(d)) => {
                    (t, a.clone(), b.clone(), c.clone(), d.clone())
                }
                _ => {
                    bye(&mut transport, "refresh session missing matrices or period");
                    return Err(SimError::Handshake("incomplete refresh request".into()));
                }
            };
            let n = a_bar.len();
            let cloud = CloudSession {
                params,
                rlk: request.rlk.clone().unwrap_or(RelinKey { pairs: vec![], base_log: 8 }),
            };
            let z = match split_ciphertexts(binary, &params, n) {
                Ok(z) => z,
                Err(e) => {
                    bye(&mut transport, &format!("bad initial state: {e}"));
                    return Err(SimError::Handshake(format!("bad initial state: {e}")));
                }
            };
            transport.send(&ack).map_err(|e| SimError::Transport { step: 0, source: e })?;
            serve_refresh_iir(transport, cloud, z, period, a_bar, b_bar, c_bar, d_bar)
        }
    }
}

fn serve_enc_fir(
    mut transport: impl Transport,
    mut engine: EncFirEngine<CloudSession>,
    l: usize,
) -> Result<(), SimError> {
    let params = engine.backend.params;
    let mut step = 0usize;
    loop {
        let msg = transport.recv().map_err(|e| SimError::Transport { step, source: e })?;
        match msg.msg_type {
            MsgType::SensorData => {
                let enc_y = split_ciphertexts(&msg.payload, &params, l)?;
                let out = match engine.step(enc_y) {
                    Ok(o) => o,
                    Err(e) => {
                        bye(&mut transport, &format!("evaluation failed: {e}"));
                        return Err(e.into());
                    }
                };
                transport
                    .send(&WireMessage::new(MsgType::ControlAction, join_ciphertexts(&out)))
                    .map_err(|e| SimError::Transport { step, source: e })?;
                step += 1;
            }
            MsgType::Bye => return Ok(()),
            other => {
                bye(&mut transport, &format!("unexpected {other:?} frame"));
                return Err(SimError::Halted(format!("unexpected {other:?} from client")));
            }
        }
    }
}

/// Homomorphic integer IIR with periodic external state refresh, cloud side.
#[allow(clippy::too_many_arguments)]
fn serve_refresh_iir(
    mut transport: impl Transport,
    cloud: CloudSession,
    mut z: Vec<Ciphertext>,
    period: u64,
    a_bar: Vec<Vec<i64>>,
    b_bar: Vec<Vec<i64>>,
    c_bar: Vec<Vec<i64>>,
    d_bar: Vec<Vec<i64>>,
) -> Result<(), SimError> {
    use crate::he::HeOps;
    let params = cloud.params;
    let n = a_bar.len();
    let l = b_bar.first().map_or(0, Vec::len);
    let mut local_k = 0u64;
    let mut awaiting_refresh = false;
    let mut step = 0usize;

    // v_i = sum_j M[i][j] (x) cts[j], accumulated homomorphically
    let mat_vec = |mat: &[Vec<i64>],
                   cts: &[Ciphertext],
                   cloud: &CloudSession|
     -> Result<Vec<Option<Ciphertext>>, SimError> {
        let mut out = Vec::with_capacity(mat.len());
        for row in mat {
            let mut acc: Option<Ciphertext> = None;
            for (j, coeff) in row.iter().enumerate() {
                if *coeff == 0 {
                    continue;
                }
                let prod = cloud.mul_plain(&cts[j], &[*coeff])?;
                acc = Some(match acc {
                    Some(prev) => cloud.add_ct(&prev, &prod)?,
                    None => prod,
                });
            }
            out.push(acc);
        }
        Ok(out)
    };

    loop {
        let msg = transport.recv().map_err(|e| SimError::Transport { step, source: e })?;
        match msg.msg_type {
            MsgType::StateRefreshUp if awaiting_refresh => {
                z = split_ciphertexts(&msg.payload, &params, n)?;
                local_k = 0;
                awaiting_refresh = false;
            }
            MsgType::SensorData if !awaiting_refresh => {
                let enc_y = split_ciphertexts(&msg.payload, &params, l)?;
                // v(k) = C_bar z + D_bar y_hat
                let cz = mat_vec(&c_bar, &z, &cloud)?;
                let dy = mat_vec(&d_bar, &enc_y, &cloud)?;
                let mut v = Vec::with_capacity(cz.len());
                for (a, b) in cz.into_iter().zip(dy) {
                    let ct = match (a, b) {
                        (Some(x), Some(y)) => cloud.add_ct(&x, &y)?,
                        (Some(x), None) | (None, Some(x)) => x,
                        (None, None) => cloud.mul_plain(&enc_y[0], &[0])?,
                    };
                    v.push(ct);
                }
                // z(k+1) = A_bar z + B_bar y_hat
                let az = mat_vec(&a_bar, &z, &cloud)?;
                let by = mat_vec(&b_bar, &enc_y, &cloud)?;
                let mut zn = Vec::with_capacity(n);
                for (a, b) in az.into_iter().zip(by) {
                    let ct = match (a, b) {
                        (Some(x), Some(y)) => cloud.add_ct(&x, &y)?,
                        (Some(x), None) | (None, Some(x)) => x,
                        (None, None) => cloud.mul_plain(&enc_y[0], &[0])?,
                    };
                    zn.push(ct);
                }
                z = zn;
                local_k += 1;
                step += 1;
                transport
                    .send(&WireMessage::new(MsgType::ControlAction, join_ciphertexts(&v)))
                    .map_err(|e| SimError::Transport { step, source: e })?;
                if local_k == period {
                    // ship the next state down for external refresh
                    transport
                        .send(&WireMessage::new(MsgType::StateRefreshDown, join_ciphertexts(&z)))
                        .map_err(|e| SimError::Transport { step, source: e })?;
                    awaiting_refresh = true;
                }
            }
            MsgType::SensorData if awaiting_refresh => {
                // The refresh frame was lost or skipped; running on would
                // overflow the scaling, so the session halts loudly instead.
                bye(&mut transport, "missed STATE_REFRESH_UP; session cannot continue safely");
                return Err(SimError::Halted("missed refresh".into()));
            }
            MsgType::Bye => return Ok(()),
            other => {
                bye(&mut transport, &format!("unexpected {other:?} frame"));
                return Err(SimError::Halted(format!("unexpected {other:?} from client")));
            }
        }
    }
}

/// Plant-side driver of a remote encrypted FIR session over `transport`.
pub fn run_enc_fir_client<T: Transport>(
    mut transport: T,
    plant: &crate::lti::StateSpace,
    filter: &crate::fir::FirFilter,
    cfg: EncFirConfig,
    he: HeParams,
    seed: u64,
    steps: usize,
) -> Result<SimTrace, SimError> {
    let mut session = BfvSession::new(he, seed)?;
    let (order, l, m) = (filter.order(), filter.inputs(), filter.outputs());
    let plain_taps = encfir::quantize_taps(filter, &cfg, he.t)?;

    let mut binary = Vec::new();
    let taps_encrypted = cfg.mode == Mode::Full;
    if taps_encrypted {
        use crate::he::HeOps;
        for rows in &plain_taps {
            for row in rows {
                for v in row {
                    let ct = session.encrypt_payload(&[*v])?;
                    binary.extend_from_slice(&crate::he::wire::encode_ciphertext(&ct));
                }
            }
        }
    }
    {
        use crate::he::HeOps;
        for _ in 0..l {
            let ct = session.encrypt_payload(&[0])?;
            binary.extend_from_slice(&crate::he::wire::encode_ciphertext(&ct));
        }
    }
    let request = SessionRequest {
        kind: SessionKind::EncFir,
        he: HeParamsFile::from_params(&he),
        rlk: taps_encrypted.then(|| session.keys.rlk.clone()),
        order,
        inputs: l,
        outputs: m,
        taps_plain: (!taps_encrypted).then_some(plain_taps),
        taps_encrypted,
        period: None,
        a_bar: None,
        b_bar: None,
        c_bar: None,
        d_bar: None,
    };
    handshake(&mut transport, &request, &binary)?;

    let scale = cfg.s6 * cfg.s7;
    let params = he;
    let trace = super::run_plant_loop(plant, steps, |step, y| {
        use crate::he::HeOps;
        let start = Instant::now();
        let mut cts = Vec::with_capacity(l);
        for v in y {
            if v.abs() > cfg.y_max {
                return Err(SimError::EncFir(encfir::EncFirError::InputOutOfRange {
                    value: *v,
                    y_max: cfg.y_max,
                }));
            }
            let z = quant::quantize(*v, cfg.s7)?;
            cts.push(session.encrypt_payload(&[z as i64])?);
        }
        transport
            .send(&WireMessage::new(MsgType::SensorData, join_ciphertexts(&cts)))
            .map_err(|e| SimError::Transport { step, source: e })?;
        let reply = transport.recv().map_err(|e| SimError::Transport { step, source: e })?;
        let mut flags = StepFlags::default();
        let u = match reply.msg_type {
            MsgType::ControlAction => {
                let v_cts = split_ciphertexts(&reply.payload, &params, m)?;
                let mut u = Vec::with_capacity(m);
                for ct in &v_cts {
                    match session.decrypt_payload(ct, 1) {
                        Ok(vals) => u.push(vals[0] as f64 / scale),
                        Err(he::HeError::NoiseOverflow { .. }) => {
                            flags.noise_alarm = true;
                            u.push(0.0);
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
                u
            }
            MsgType::Bye => {
                return Err(SimError::Halted(String::from_utf8_lossy(&reply.payload).into()))
            }
            other => return Err(SimError::Halted(format!("unexpected {other:?} from cloud"))),
        };
        Ok((u, flags, start.elapsed().as_secs_f64() * 1e3))
    })?;
    let _ = transport.send(&WireMessage::new(MsgType::Bye, Vec::new()));
    Ok(trace)
}

/// Wire-traffic accounting of a refresh session.
#[derive(Debug, Clone, Default)]
pub struct RefreshWireStats {
    pub periods: usize,
    pub refresh_cts_down: Vec<usize>,
    pub refresh_cts_up: Vec<usize>,
}

/// Plant-side driver of a remote refresh-IIR session: sends prescaled
/// encrypted measurements, applies decrypted actions, and performs the
/// periodic state refresh (decrypt, rescale, re-encrypt, send up). A local
/// plaintext mirror of the integer controller provides the error bound and
/// cross-checks the decrypted wire values.
#[allow(clippy::too_many_arguments)]
pub fn run_refresh_client<T: Transport>(
    mut transport: T,
    plant: &crate::lti::StateSpace,
    ctrl_sys: &crate::lti::StateSpace,
    profile: &ScalingProfile,
    period: u64,
    y_max: f64,
    he: HeParams,
    seed: u64,
    steps: usize,
) -> Result<(SimTrace, RefreshWireStats), SimError> {
    use crate::he::HeOps;
    if profile.q() != he.t as u128 {
        return Err(SimError::BadScenario(format!(
            "profile modulus {} must equal the plaintext modulus {}",
            profile.q(),
            he.t
        )));
    }
    let mut session = BfvSession::new(he, seed)?;
    let ctrl_int = quant::to_integer_controller(ctrl_sys, profile)?;
    let (a_bar, b_bar, c_bar, d_bar) = ctrl_int.wire_matrices();
    let mut mirror = crate::baseline::RefreshSession::new(ctrl_int, period, y_max)?;
    let n = ctrl_sys.order();
    let mut binary = Vec::new();
    for zi in mirror.controller().state() {
        let ct = session.encrypt_payload(&[*zi as i64])?;
        binary.extend_from_slice(&crate::he::wire::encode_ciphertext(&ct));
    }
    let request = SessionRequest {
        kind: SessionKind::RefreshIir,
        he: HeParamsFile::from_params(&he),
        rlk: None,
        order: n,
        inputs: ctrl_sys.inputs(),
        outputs: ctrl_sys.outputs(),
        taps_plain: None,
        taps_encrypted: false,
        period: Some(period),
        a_bar: Some(a_bar),
        b_bar: Some(b_bar),
        c_bar: Some(c_bar),
        d_bar: Some(d_bar),
    };
    handshake(&mut transport, &request, &binary)?;

    let m = ctrl_sys.outputs();
    let params = he;
    let mut stats = RefreshWireStats::default();
    let mut pending_refresh: Option<Vec<i64>> = None;
    let trace = super::run_plant_loop(plant, steps, |step, y| {
        let start = Instant::now();
        // complete a pending refresh before the next sample goes out
        if let Some(fresh_z) = pending_refresh.take() {
            let mut payload = Vec::new();
            let mut count = 0;
            for zi in &fresh_z {
                let ct = session.encrypt_payload(&[*zi])?;
                payload.extend_from_slice(&crate::he::wire::encode_ciphertext(&ct));
                count += 1;
            }
            stats.refresh_cts_up.push(count);
            transport
                .send(&WireMessage::new(MsgType::StateRefreshUp, payload))
                .map_err(|e| SimError::Transport { step, source: e })?;
        }
        // local mirror computes the same integers and the error bound
        let mirror_step = mirror.step(y)?;
        let local_k = if mirror_step.refreshed.is_some() {
            // mirror already wrapped around; wire-side index of this step
            period - 1
        } else {
            mirror.controller().step_index() - 1
        };
        // sensor-side prescale round(s1^{k+1} s5 y) on the real measurement
        let s1 = profile.s(1);
        let s5 = profile.s(5);
        let mut cts = Vec::with_capacity(y.len());
        for v in y {
            let z = quant::quantize(*v, s1.powi(local_k as i32 + 1) * s5)?;
            cts.push(session.encrypt_payload(&[z as i64])?);
        }
        transport
            .send(&WireMessage::new(MsgType::SensorData, join_ciphertexts(&cts)))
            .map_err(|e| SimError::Transport { step, source: e })?;
        let reply = transport.recv().map_err(|e| SimError::Transport { step, source: e })?;
        let u = match reply.msg_type {
            MsgType::ControlAction => {
                let v_cts = split_ciphertexts(&reply.payload, &params, m)?;
                let mut v = Vec::with_capacity(m);
                for ct in &v_cts {
                    v.push(session.decrypt_payload(ct, 1)?[0] as i128);
                }
                debug_assert_eq!(v, mirror_step.v, "wire and mirror integers diverged");
                quant::recover(&v, local_k, profile, RecoverKind::Input)
            }
            MsgType::Bye => {
                return Err(SimError::Halted(String::from_utf8_lossy(&reply.payload).into()))
            }
            other => return Err(SimError::Halted(format!("unexpected {other:?} from cloud"))),
        };
        let mut flags =
            StepFlags { overflow: mirror_step.overflowed, ..Default::default() };
        // period boundary: the cloud ships z(T) down
        if mirror_step.refreshed.is_some() {
            let down = transport.recv().map_err(|e| SimError::Transport { step, source: e })?;
            if down.msg_type != MsgType::StateRefreshDown {
                return Err(SimError::Halted(format!(
                    "expected STATE_REFRESH_DOWN, got {:?}",
                    down.msg_type
                )));
            }
            let z_cts = split_ciphertexts(&down.payload, &params, n)?;
            stats.refresh_cts_down.push(z_cts.len());
            stats.periods += 1;
            let mut z = Vec::with_capacity(n);
            for ct in &z_cts {
                z.push(session.decrypt_payload(ct, 1)?[0] as i128);
            }
            // actuator recovers x(T), sensor re-quantizes with fresh scale
            let x = quant::recover(&z, period, profile, RecoverKind::State);
            let fresh: Vec<i64> =
                x.iter().map(|xi| quant::quantize(*xi, profile.s(0)).map(|v| v as i64)).collect::<Result<_, _>>()?;
            pending_refresh = Some(fresh);
            flags.refreshed = true;
        }
        Ok((u, flags, start.elapsed().as_secs_f64() * 1e3))
    })?;
    let _ = transport.send(&WireMessage::new(MsgType::Bye, Vec::new()));
    Ok((trace, stats))
}

fn handshake(
    transport: &mut impl Transport,
    request: &SessionRequest,
    binary: &[u8],
) -> Result<(), SimError> {
    let json = serde_json::to_vec(request)
        .map_err(|e| SimError::Handshake(format!("request serialization: {e}")))?;
    let mut payload = Vec::with_capacity(4 + json.len() + binary.len());
    payload.extend_from_slice(&(json.len() as u32).to_le_bytes());
    payload.extend_from_slice(&json);
    payload.extend_from_slice(binary);
    transport
        .send(&WireMessage::new(MsgType::Hello, payload))
        .map_err(|e| SimError::Transport { step: 0, source: e })?;
    let reply = transport.recv().map_err(|e| SimError::Transport { step: 0, source: e })?;
    match reply.msg_type {
        MsgType::Params => {
            let ack: SessionAck = serde_json::from_slice(&reply.payload)
                .map_err(|e| SimError::Handshake(format!("bad PARAMS ack: {e}")))?;
            if !ack.accepted {
                return Err(SimError::Handshake(ack.message));
            }
            Ok(())
        }
        MsgType::Bye => Err(SimError::Halted(String::from_utf8_lossy(&reply.payload).into())),
        other => Err(SimError::Handshake(format!("expected PARAMS, got {other:?}"))),
    }
}

/// Run a scenario whose controller lives behind a serving cloud.
pub fn run_remote_scenario(sc: &Scenario, addr: &str) -> Result<SimTrace, SimError> {
    let transport = TcpTransport::connect(addr, Duration::from_secs(5))
        .map_err(|e| SimError::Transport { step: 0, source: e })?;
    match &sc.controller {
        ControllerSpec::EncryptedFir { filter, cfg, he, backend } => {
            if *backend != BackendKind::Real {
                return Err(SimError::BadScenario(
                    "socket transport requires the real backend".into(),
                ));
            }
            run_enc_fir_client(transport, &sc.plant, filter, *cfg, *he, sc.seed, sc.steps)
        }
        _ => Err(SimError::BadScenario(
            "only encrypted controllers can run over the socket transport".into(),
        )),
    }
}

/// Convenience: an integer controller stepped entirely in process through
/// the wire protocol against an in-memory cloud (loopback without TCP).
#[allow(clippy::too_many_arguments)]
pub fn run_refresh_loopback(
    plant: &crate::lti::StateSpace,
    ctrl_sys: &crate::lti::StateSpace,
    profile: &ScalingProfile,
    period: u64,
    y_max: f64,
    he: HeParams,
    seed: u64,
    steps: usize,
) -> Result<(SimTrace, RefreshWireStats), SimError> {
    let (client_t, server_t) = super::transport::InprocTransport::pair();
    let server = std::thread::spawn(move || serve_session(server_t));
    let out =
        run_refresh_client(client_t, plant, ctrl_sys, profile, period, y_max, he, seed, steps);
    let _ = server.join();
    out
}

/// Helper mirroring [`run_refresh_loopback`] for encrypted FIR sessions.
pub fn run_enc_fir_loopback(
    plant: &crate::lti::StateSpace,
    filter: &crate::fir::FirFilter,
    cfg: EncFirConfig,
    he: HeParams,
    seed: u64,
    steps: usize,
) -> Result<SimTrace, SimError> {
    let (client_t, server_t) = super::transport::InprocTransport::pair();
    let server = std::thread::spawn(move || serve_session(server_t));
    let out = run_enc_fir_client(client_t, plant, filter, cfg, he, seed, steps);
    let _ = server.join();
    out
}


