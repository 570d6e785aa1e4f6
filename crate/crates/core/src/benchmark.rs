//! Built-in demo: a discrete-time chemical batch reactor (sampled at 0.1 s,
//! open-loop unstable and non-minimum phase) together with three published
//! FIR controller tap sets that stabilize it — an order-7 window design, an
//! order-2 optimized design for the same target controller, and an order-2
//! replacement for a slower reset-based controller.
//!
//! Note on conventions: the reactor outputs are ordered
//! `y = (x1 + x3 - x4, x2)` — the classic ordering for this model. The tap
//! tables pair their first column with the first output under exactly this
//! convention (the interconnection is unstable under the swapped order).

use crate::fir::FirFilter;
use crate::lti::{Matrix, StateSpace};

pub const REACTOR_DT: f64 = 0.1;

/// Benchmark initial state of the plant.
pub const REACTOR_X0: [f64; 4] = [-6.83, -5.18, -4.05, -3.12];

/// The batch-reactor plant: 4 states, 1 input, 2 outputs, no feedthrough.
pub fn reactor_plant() -> StateSpace {
    let a = Matrix::from_rows(&[
        vec![1.18, 0.00, 0.51, -0.40],
        vec![-0.05, 0.66, -0.01, 0.06],
        vec![0.08, 0.34, 0.56, 0.38],
        vec![0.00, 0.34, 0.09, 0.85],
    ])
    .unwrap();
    let b = Matrix::from_rows(&[vec![0.00], vec![0.47], vec![0.21], vec![0.21]]).unwrap();
    let c = Matrix::from_rows(&[vec![1.0, 0.0, 1.0, -1.0], vec![0.0, 1.0, 0.0, 0.0]]).unwrap();
    let d = Matrix::zeros(2, 1);
    StateSpace::new(a, b, c, d, REACTOR_X0.to_vec()).unwrap()
}

/// Which built-in tap set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapSet {
    /// Order-7 rectangular-window approximation of the fast target
    /// controller.
    Window7,
    /// Order-2 optimization-based approximation of the same controller.
    Optimized2,
    /// Order-2 replacement for the slow reset-based controller.
    Replacement2,
}

impl TapSet {
    pub const ALL: [TapSet; 3] = [TapSet::Window7, TapSet::Optimized2, TapSet::Replacement2];

    pub fn name(&self) -> &'static str {
        match self {
            TapSet::Window7 => "window-n7",
            TapSet::Optimized2 => "optimized-n2",
            TapSet::Replacement2 => "replacement-n2",
        }
    }
}

/// The published tap tables (each row is one `1 x 2` tap `F_j`).
pub fn taps(set: TapSet) -> FirFilter {
    let rows: &[[f64; 2]] = match set {
        TapSet::Window7 => &[
            [-49.00, -2.33],
            [50.99, 0.17],
            [-7.31, 0.04],
            [-2.42, -0.02],
            [0.88, 0.00],
            [0.03, 0.00],
            [-0.07, 0.00],
            [0.01, 0.00],
        ],
        TapSet::Optimized2 => &[[-48.93, -2.33], [50.93, 0.17], [-8.81, 0.04]],
        TapSet::Replacement2 => &[[-17.54, -3.04], [-4.44, -0.96], [17.60, -0.23]],
    };
    FirFilter::new(
        rows.iter().map(|r| Matrix::new(1, 2, r.to_vec()).unwrap()).collect(),
    )
    .expect("tap tables are consistent")
}
