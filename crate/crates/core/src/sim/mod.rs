//! Closed-loop execution: the plant simulator, controller drivers (plain,
//! reset, FIR, encrypted FIR), the sensor/cloud/actuator roles over
//! in-process or socket transports, scenario configuration, and latency
//! measurement.

pub mod proto;
pub mod roles;
pub mod scenario;
pub mod transport;

use std::time::Instant;

use thiserror::Error;

use crate::baseline::{BaselineError, ResetController};
use crate::encfir::{EncFirConfig, EncFirError, EncFirSession};
use crate::fir::{self, FirError, FirFilter, InputHistory};
use crate::he::{BfvSession, HeError, HeParams, MockSession};
use crate::lti::{self, LtiError, Matrix, StateSpace};
use crate::quant::QuantError;
use proto::ProtoError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Fir(#[from] FirError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    EncFir(#[from] EncFirError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error("transport failure at step {step}: {source}")]
    Transport {
        step: usize,
        #[source]
        source: ProtoError,
    },
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("controller I/O ({ctrl_in} in, {ctrl_out} out) does not match plant ({plant_out} out, {plant_in} in)")]
    LoopMismatch { ctrl_in: usize, ctrl_out: usize, plant_out: usize, plant_in: usize },
    #[error("plant feedthrough must be zero for step simulation (algebraic loop)")]
    PlantFeedthrough,
    #[error("session halted by peer: {0}")]
    Halted(String),
    #[error("bad scenario: {0}")]
    BadScenario(String),
}

/// Which homomorphic backend an encrypted scenario uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Real,
    Mock,
}

/// Controller half of a scenario.
pub enum ControllerSpec {
    /// Plain dynamic controller evaluated in the clear.
    Iir(StateSpace),
    /// Dynamic controller with a periodic state reset.
    Reset { sys: StateSpace, period: u64 },
    /// Plaintext FIR filter.
    Fir(FirFilter),
    /// Quantized FIR filter evaluated homomorphically.
    EncryptedFir { filter: FirFilter, cfg: EncFirConfig, he: HeParams, backend: BackendKind },
}

/// Where the controller runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportSpec {
    Inproc,
    /// Address of a serving cloud, e.g. `127.0.0.1:7001`. Only encrypted
    /// controllers can run remotely.
    Socket(String),
}

/// A complete closed-loop experiment description.
pub struct Scenario {
    pub plant: StateSpace,
    pub controller: ControllerSpec,
    pub steps: usize,
    pub transport: TransportSpec,
    pub seed: u64,
}

/// Per-step flags worth surfacing in traces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepFlags {
    pub overflow: bool,
    pub noise_alarm: bool,
    pub refreshed: bool,
}

#[derive(Debug, Clone)]
pub struct SimStep {
    pub k: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub norm_x: f64,
    pub latency_ms: f64,
    pub flags: StepFlags,
}

/// Time-indexed record of a closed-loop run.
#[derive(Debug, Clone, Default)]
pub struct SimTrace {
    pub steps: Vec<SimStep>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// CSV with the fixed column set
    /// `k, x_1..x_n, y_1..y_l, u_1..u_m, norm_x, latency_ms, flags`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.steps.first() {
            out.push('k');
            for i in 1..=first.x.len() {
                out.push_str(&format!(",x_{i}"));
            }
            for i in 1..=first.y.len() {
                out.push_str(&format!(",y_{i}"));
            }
            for i in 1..=first.u.len() {
                out.push_str(&format!(",u_{i}"));
            }
            out.push_str(",norm_x,latency_ms,flags\n");
        }
        for s in &self.steps {
            out.push_str(&s.k.to_string());
            for v in s.x.iter().chain(&s.y).chain(&s.u) {
                out.push_str(&format!(",{v}"));
            }
            let mut flags = String::new();
            if s.flags.overflow {
                flags.push('O');
            }
            if s.flags.noise_alarm {
                flags.push('N');
            }
            if s.flags.refreshed {
                flags.push('R');
            }
            out.push_str(&format!(",{},{:.6},{}\n", s.norm_x, s.latency_ms, flags));
        }
        out
    }

    /// Two-column `k  norm_x` data, gnuplot-ready.
    pub fn to_norm_plot(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&format!("{} {}\n", s.k, s.norm_x));
        }
        out
    }

    pub fn decrypted_u(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.u.clone()).collect()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A stepping controller: maps the current measurement to an action.
trait LoopController {
    fn step(&mut self, y: &[f64]) -> Result<(Vec<f64>, StepFlags), SimError>;
}

struct IirDriver {
    sys: StateSpace,
    x: Vec<f64>,
}

impl LoopController for IirDriver {
    fn step(&mut self, y: &[f64]) -> Result<(Vec<f64>, StepFlags), SimError> {
        let mut u = self.sys.c.matvec(&self.x)?;
        for (ui, di) in u.iter_mut().zip(self.sys.d.matvec(y)?) {
            *ui += di;
        }
        let mut xn = self.sys.a.matvec(&self.x)?;
        for (xi, bi) in xn.iter_mut().zip(self.sys.b.matvec(y)?) {
            *xi += bi;
        }
        self.x = xn;
        Ok((u, StepFlags::default()))
    }
}

struct ResetDriver(ResetController);

impl LoopController for ResetDriver {
    fn step(&mut self, y: &[f64]) -> Result<(Vec<f64>, StepFlags), SimError> {
        Ok((self.0.step(y)?, StepFlags::default()))
    }
}

struct FirDriver {
    filter: FirFilter,
    hist: InputHistory,
}

impl LoopController for FirDriver {
    fn step(&mut self, y: &[f64]) -> Result<(Vec<f64>, StepFlags), SimError> {
        self.hist.push(y.to_vec());
        Ok((fir::evaluate_fir(&self.filter, &self.hist)?, StepFlags::default()))
    }
}

/// In-process encrypted FIR: this driver plays sensor, cloud and actuator
/// in sequence each step.
struct EncFirDriver<B: crate::he::HeOps> {
    session: EncFirSession<B>,
}

impl<B: crate::he::HeOps> LoopController for EncFirDriver<B> {
    fn step(&mut self, y: &[f64]) -> Result<(Vec<f64>, StepFlags), SimError> {
        let enc = self.session.encrypt_input(y)?;
        let v = self.session.step(enc)?;
        let mut flags = StepFlags::default();
        let u = match self.session.decrypt_recover(&v) {
            Ok(u) => u,
            Err(EncFirError::He(HeError::NoiseOverflow { .. })) => {
                flags.noise_alarm = true;
                vec![0.0; self.session.outputs()]
            }
            Err(e) => return Err(e.into()),
        };
        Ok((u, flags))
    }
}

fn build_controller(sc: &Scenario) -> Result<Box<dyn LoopController>, SimError> {
    Ok(match &sc.controller {
        ControllerSpec::Iir(sys) => {
            let x = sys.x0.clone();
            Box::new(IirDriver { sys: sys.clone(), x })
        }
        ControllerSpec::Reset { sys, period } => {
            Box::new(ResetDriver(ResetController::new(sys.clone(), *period)?))
        }
        ControllerSpec::Fir(filter) => {
            let hist = InputHistory::new(filter.inputs(), filter.order());
            Box::new(FirDriver { filter: filter.clone(), hist })
        }
        ControllerSpec::EncryptedFir { filter, cfg, he, backend } => match backend {
            BackendKind::Real => {
                let session =
                    EncFirSession::new(filter.clone(), *cfg, BfvSession::new(*he, sc.seed)?)?;
                Box::new(EncFirDriver { session })
            }
            BackendKind::Mock => {
                let session =
                    EncFirSession::new(filter.clone(), *cfg, MockSession::new(*he))?;
                Box::new(EncFirDriver { session })
            }
        },
    })
}

fn controller_dims(spec: &ControllerSpec) -> (usize, usize) {
    match spec {
        ControllerSpec::Iir(sys) | ControllerSpec::Reset { sys, .. } => {
            (sys.inputs(), sys.outputs())
        }
        ControllerSpec::Fir(f) | ControllerSpec::EncryptedFir { filter: f, .. } => {
            (f.inputs(), f.outputs())
        }
    }
}

fn check_loop(sc: &Scenario) -> Result<(), SimError> {
    let (ctrl_in, ctrl_out) = controller_dims(&sc.controller);
    if ctrl_in != sc.plant.outputs() || ctrl_out != sc.plant.inputs() {
        return Err(SimError::LoopMismatch {
            ctrl_in,
            ctrl_out,
            plant_out: sc.plant.outputs(),
            plant_in: sc.plant.inputs(),
        });
    }
    if sc.plant.d.max_abs() != 0.0 {
        return Err(SimError::PlantFeedthrough);
    }
    Ok(())
}

/// Run a closed-loop scenario. In-process transport is fully deterministic
/// under a fixed seed; socket transport produces identical decrypted values
/// but wall-clock latencies of its own.
pub fn run_scenario(sc: &Scenario) -> Result<SimTrace, SimError> {
    check_loop(sc)?;
    match &sc.transport {
        TransportSpec::Inproc => {
            let mut ctrl = build_controller(sc)?;
            run_plant_loop(&sc.plant, sc.steps, |k, y| {
                let start = Instant::now();
                let (u, flags) = ctrl.step(y)?;
                let _ = k;
                Ok((u, flags, start.elapsed().as_secs_f64() * 1e3))
            })
        }
        TransportSpec::Socket(addr) => roles::run_remote_scenario(sc, addr),
    }
}

/// Shared plant-stepping loop: `y(k) = C x(k)` (plants here have no
/// feedthrough), `u(k) = ctrl(y(k))`, `x(k+1) = A x(k) + B u(k)`.
pub(crate) fn run_plant_loop(
    plant: &StateSpace,
    steps: usize,
    mut eval: impl FnMut(usize, &[f64]) -> Result<(Vec<f64>, StepFlags, f64), SimError>,
) -> Result<SimTrace, SimError> {
    let mut x = plant.x0.clone();
    let mut trace = SimTrace::default();
    for k in 0..steps {
        let y = plant.c.matvec(&x)?;
        let (u, flags, latency_ms) = eval(k, &y)?;
        let mut xn = plant.a.matvec(&x)?;
        for (xi, bi) in xn.iter_mut().zip(plant.b.matvec(&u)?) {
            *xi += bi;
        }
        trace.steps.push(SimStep {
            k,
            norm_x: norm2(&x),
            x: x.clone(),
            y,
            u,
            latency_ms,
            flags,
        });
        x = xn;
    }
    Ok(trace)
}

/// Combined state matrix of the plant/controller interconnection and its
/// Schur verdict. Handles plant feedthrough through the loop inverse
/// `(I - D_p D_c)^{-1}`, rejecting ill-posed loops.
pub fn closed_loop_matrix(
    plant: &StateSpace,
    ctrl: &StateSpace,
) -> Result<(Matrix, bool), SimError> {
    if ctrl.inputs() != plant.outputs() || ctrl.outputs() != plant.inputs() {
        return Err(SimError::LoopMismatch {
            ctrl_in: ctrl.inputs(),
            ctrl_out: ctrl.outputs(),
            plant_out: plant.outputs(),
            plant_in: plant.inputs(),
        });
    }
    let np = plant.order();
    let nc = ctrl.order();
    let l = plant.outputs();
    // S = (I - D_p D_c)^-1
    let dpdc = plant.d.matmul(&ctrl.d)?;
    let mut i_m = Matrix::identity(l);
    i_m = i_m.sub(&dpdc)?;
    let s = i_m
        .to_dmatrix()
        .try_inverse()
        .ok_or(SimError::Lti(LtiError::IllPosedLoop))?;
    let s = Matrix::from_dmatrix(&s);
    // y = S (C_p x_p + D_p C_c x_c)
    let y_from_xp = s.matmul(&plant.c)?;
    let y_from_xc = s.matmul(&plant.d.matmul(&ctrl.c)?)?;
    // x_p+ = A_p x_p + B_p (C_c x_c + D_c y)
    let mut a_cl = Matrix::zeros(np + nc, np + nc);
    let bp_dc = plant.b.matmul(&ctrl.d)?;
    let tl = plant.a.add(&bp_dc.matmul(&y_from_xp)?)?;
    let tr = plant.b.matmul(&ctrl.c)?.add(&bp_dc.matmul(&y_from_xc)?)?;
    let bl = ctrl.b.matmul(&y_from_xp)?;
    let br = ctrl.a.add(&ctrl.b.matmul(&y_from_xc)?)?;
    for i in 0..np {
        for j in 0..np {
            a_cl[(i, j)] = tl[(i, j)];
        }
        for j in 0..nc {
            a_cl[(i, np + j)] = tr[(i, j)];
        }
    }
    for i in 0..nc {
        for j in 0..np {
            a_cl[(np + i, j)] = bl[(i, j)];
        }
        for j in 0..nc {
            a_cl[(np + i, np + j)] = br[(i, j)];
        }
    }
    let stable = lti::is_schur(&a_cl)?;
    Ok((a_cl, stable))
}

/// Latency statistics of repeated encrypted steps.
#[derive(Debug, Clone)]
pub struct LatencyStats {
    pub min_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
    pub samples: usize,
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<f64>) -> LatencyStats {
        assert!(!samples.is_empty());
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = samples.len();
        let pick = |q: f64| samples[(q * (n - 1) as f64).round() as usize];
        LatencyStats {
            min_ms: samples[0],
            median_ms: pick(0.5),
            p99_ms: pick(0.99),
            mean_ms: samples.iter().sum::<f64>() / n as f64,
            samples: n,
        }
    }
}

/// Measure per-step latency of an encrypted FIR session fed synthetic
/// in-range inputs (two warm-up steps excluded).
pub fn bench_step_latency<B: crate::he::HeOps>(
    session: &mut EncFirSession<B>,
    steps: usize,
) -> Result<LatencyStats, SimError> {
    let l = session.inputs();
    let y_max = session.cfg.y_max;
    let mk_input = |k: usize| -> Vec<f64> {
        (0..l)
            .map(|c| 0.8 * y_max * ((k + c) as f64 * 0.7).sin())
            .collect()
    };
    for k in 0..2 {
        let enc = session.encrypt_input(&mk_input(k))?;
        let v = session.step(enc)?;
        session.decrypt_recover(&v)?;
    }
    let mut samples = Vec::with_capacity(steps);
    for k in 0..steps {
        let y = mk_input(k + 2);
        let start = Instant::now();
        let enc = session.encrypt_input(&y)?;
        let v = session.step(enc)?;
        let _ = session.decrypt_recover(&v)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(LatencyStats::from_samples(samples))
}
