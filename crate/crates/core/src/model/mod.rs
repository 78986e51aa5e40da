//! The networked plant model: coupled time-varying linear subsystems, the
//! observer-based controller gains held over switching intervals, and the
//! design configuration.
//!
//! Time-varying matrix entries are declared as parametric functions of
//! time (constant, `a0 + a1·cos(ωt)`, `a0 + a1·sin(ωt)`) so plants stay
//! declarative and can be evaluated at arbitrary instants, which the
//! switching-time computation requires.

mod pendulum;

pub use pendulum::{pendulum_adjacency, pendulum_example};

use crate::linalg::{BlockMatrix, Matrix, SymMatrix};
use crate::rng::SplitMix64;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Scalar function of time in one of the supported parametric forms.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeFun {
    Const(f64),
    /// `a0 + a1·cos(omega·t)`
    Cos { a0: f64, a1: f64, omega: f64 },
    /// `a0 + a1·sin(omega·t)`
    Sin { a0: f64, a1: f64, omega: f64 },
}

impl TimeFun {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeFun::Const(c) => c,
            TimeFun::Cos { a0, a1, omega } => a0 + a1 * (omega * t).cos(),
            TimeFun::Sin { a0, a1, omega } => a0 + a1 * (omega * t).sin(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            TimeFun::Const(_) => true,
            TimeFun::Cos { a1, omega, .. } | TimeFun::Sin { a1, omega, .. } => {
                a1 == 0.0 || omega == 0.0
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            TimeFun::Const(c) => c.is_finite(),
            TimeFun::Cos { a0, a1, omega } | TimeFun::Sin { a0, a1, omega } => {
                a0.is_finite() && a1.is_finite() && omega.is_finite()
            }
        }
    }
}

/// Matrix whose entries are parametric functions of time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<TimeFun>,
}

impl TimeMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        TimeMatrix {
            rows,
            cols,
            entries: vec![TimeFun::Const(0.0); rows * cols],
        }
    }

    pub fn constant(m: &Matrix) -> Self {
        let mut out = TimeMatrix::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                out.set(r, c, TimeFun::Const(m.get(r, c)));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, r: usize, c: usize, f: TimeFun) {
        self.entries[r * self.cols + c] = f;
    }

    pub fn get(&self, r: usize, c: usize) -> &TimeFun {
        &self.entries[r * self.cols + c]
    }

    pub fn eval(&self, t: f64) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                m.set(r, c, self.entries[r * self.cols + c].eval(t));
            }
        }
        m
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(|f| f.is_constant())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|f| f.is_finite())
    }
}

/// Per-subsystem dimensions: state / input / output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubsystemDims {
    pub n: usize,
    pub m: usize,
    pub r: usize,
}

/// One subsystem's evaluable matrices.
#[derive(Clone, Debug)]
pub struct Subsystem {
    pub a: TimeMatrix,
    pub b: TimeMatrix,
    pub c: TimeMatrix,
}

/// Bounds on the time derivatives of the aggregated plant matrices, in
/// the order (A, B, C, H).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzBounds {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub h: f64,
}

impl LipschitzBounds {
    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0 && self.c == 0.0 && self.h == 0.0
    }
}

/// Ordered set of directed links (i, j), i ≠ j, zero-based.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinkSet(BTreeSet<(usize, usize)>);

impl LinkSet {
    pub fn new() -> Self {
        LinkSet(BTreeSet::new())
    }

    pub fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        LinkSet(iter.into_iter().collect())
    }

    pub fn insert(&mut self, link: (usize, usize)) {
        self.0.insert(link);
    }

    pub fn remove(&mut self, link: &(usize, usize)) -> bool {
        self.0.remove(link)
    }

    pub fn contains(&self, link: &(usize, usize)) -> bool {
        self.0.contains(link)
    }

    pub fn is_subset(&self, other: &LinkSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.0.iter()
    }
}

impl fmt::Display for LinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (idx, (i, j)) in self.0.iter().enumerate() {
            if idx > 0 {
                write!(f, ", ")?;
            }
            // one-based in human-facing output
            write!(f, "({},{})", i + 1, j + 1)?;
        }
        write!(f, "}}")
    }
}

/// Network of coupled time-varying subsystems.
#[derive(Clone, Debug)]
pub struct Plant {
    subsystems: Vec<Subsystem>,
    couplings: BTreeMap<(usize, usize), TimeMatrix>,
    lipschitz: LipschitzBounds,
}

/// Errors from plant construction and validation.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    SelfLoop(usize),
    ShapeMismatch {
        what: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    NonFinite(String),
    BadConfig(String),
    /// A sampled derivative norm exceeded the declared bound; the declared
    /// value is kept, this is reported rather than silently replaced.
    DerivativeBoundExceeded {
        which: &'static str,
        bound: f64,
        observed: f64,
        at_t: f64,
    },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::SelfLoop(i) => write!(f, "coupling ({},{}) is a self-loop", i + 1, i + 1),
            ModelError::ShapeMismatch { what, expected, got } => write!(
                f,
                "{what}: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            ModelError::NonFinite(what) => write!(f, "{what} has non-finite entries"),
            ModelError::BadConfig(msg) => write!(f, "invalid configuration: {msg}"),
            ModelError::DerivativeBoundExceeded {
                which,
                bound,
                observed,
                at_t,
            } => write!(
                f,
                "sampled derivative of {which} at t={at_t:.6} has norm {observed:.6}, \
                 exceeding the declared bound {bound:.6}"
            ),
        }
    }
}

impl std::error::Error for ModelError {}

impl Plant {
    /// Build and shape-check a plant. Couplings map (i, j) to the block
    /// through which subsystem j's state enters subsystem i's dynamics.
    pub fn new(
        subsystems: Vec<Subsystem>,
        couplings: BTreeMap<(usize, usize), TimeMatrix>,
        lipschitz: LipschitzBounds,
    ) -> Result<Self, ModelError> {
        let n_subs = subsystems.len();
        if n_subs == 0 {
            return Err(ModelError::BadConfig("at least one subsystem".into()));
        }
        for (idx, s) in subsystems.iter().enumerate() {
            let n = s.a.rows();
            if s.a.cols() != n || n == 0 {
                return Err(ModelError::ShapeMismatch {
                    what: format!("A_{}", idx + 1),
                    expected: (n, n),
                    got: (s.a.rows(), s.a.cols()),
                });
            }
            if s.b.rows() != n || s.b.cols() == 0 {
                return Err(ModelError::ShapeMismatch {
                    what: format!("B_{}", idx + 1),
                    expected: (n, s.b.cols().max(1)),
                    got: (s.b.rows(), s.b.cols()),
                });
            }
            if s.c.cols() != n || s.c.rows() == 0 {
                return Err(ModelError::ShapeMismatch {
                    what: format!("C_{}", idx + 1),
                    expected: (s.c.rows().max(1), n),
                    got: (s.c.rows(), s.c.cols()),
                });
            }
            for (name, m) in [("A", &s.a), ("B", &s.b), ("C", &s.c)] {
                if !m.is_finite() {
                    return Err(ModelError::NonFinite(format!("{name}_{}", idx + 1)));
                }
            }
        }
        for (&(i, j), h) in &couplings {
            if i == j {
                return Err(ModelError::SelfLoop(i));
            }
            if i >= n_subs || j >= n_subs {
                return Err(ModelError::BadConfig(format!(
                    "coupling ({},{}) out of range",
                    i + 1,
                    j + 1
                )));
            }
            let expected = (subsystems[i].a.rows(), subsystems[j].a.rows());
            if (h.rows(), h.cols()) != expected {
                return Err(ModelError::ShapeMismatch {
                    what: format!("H_{}{}", i + 1, j + 1),
                    expected,
                    got: (h.rows(), h.cols()),
                });
            }
            if !h.is_finite() {
                return Err(ModelError::NonFinite(format!("H_{}{}", i + 1, j + 1)));
            }
        }
        if !(lipschitz.a >= 0.0 && lipschitz.b >= 0.0 && lipschitz.c >= 0.0 && lipschitz.h >= 0.0)
        {
            return Err(ModelError::BadConfig(
                "derivative bounds must be nonnegative".into(),
            ));
        }
        Ok(Plant {
            subsystems,
            couplings,
            lipschitz,
        })
    }

    pub fn subsystem_count(&self) -> usize {
        self.subsystems.len()
    }

    pub fn subsystem(&self, i: usize) -> &Subsystem {
        &self.subsystems[i]
    }

    pub fn dims(&self) -> Vec<SubsystemDims> {
        self.subsystems
            .iter()
            .map(|s| SubsystemDims {
                n: s.a.rows(),
                m: s.b.cols(),
                r: s.c.rows(),
            })
            .collect()
    }

    pub fn state_dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.a.rows()).collect()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.b.cols()).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.c.rows()).collect()
    }

    pub fn total_state_dim(&self) -> usize {
        self.state_dims().iter().sum()
    }

    /// Directed links (i, j) where the coupling block is declared.
    pub fn adjacency(&self) -> LinkSet {
        LinkSet::from_iter(self.couplings.keys().copied())
    }

    pub fn coupling(&self, i: usize, j: usize) -> Option<&TimeMatrix> {
        self.couplings.get(&(i, j))
    }

    pub fn lipschitz(&self) -> LipschitzBounds {
        self.lipschitz
    }

    /// True when every plant matrix is constant in time.
    pub fn is_time_invariant(&self) -> bool {
        self.subsystems
            .iter()
            .all(|s| s.a.is_constant() && s.b.is_constant() && s.c.is_constant())
            && self.couplings.values().all(|h| h.is_constant())
    }

    /// Snapshot of the aggregated plant matrices at time `t`: `A`, `B`,
    /// `C` block-diagonal, `H` with zero diagonal blocks.
    pub fn aggregate(&self, t: f64) -> PlantSnapshot {
        let a = BlockMatrix::block_diag(self.subsystems.iter().map(|s| s.a.eval(t)).collect());
        let b = {
            let mut bm = BlockMatrix::new(self.state_dims(), self.input_dims());
            for (i, s) in self.subsystems.iter().enumerate() {
                bm.set_block(i, i, s.b.eval(t));
            }
            bm
        };
        let c = {
            let mut cm = BlockMatrix::new(self.output_dims(), self.state_dims());
            for (i, s) in self.subsystems.iter().enumerate() {
                cm.set_block(i, i, s.c.eval(t));
            }
            cm
        };
        let mut h = BlockMatrix::new(self.state_dims(), self.state_dims());
        for (&(i, j), hm) in &self.couplings {
            h.set_block(i, j, hm.eval(t));
        }
        PlantSnapshot { t, a, b, c, h }
    }

    /// Sample the aggregated matrices' finite-difference derivative norms
    /// at `samples` deterministic pseudo-random times in `[0, horizon]`
    /// and compare against the declared bounds (small slack for the
    /// differencing error).
    pub fn validate_derivative_bounds(
        &self,
        horizon: f64,
        samples: usize,
        seed: u64,
    ) -> Result<(), ModelError> {
        let mut rng = SplitMix64::new(seed);
        let dt = 1e-6;
        let slack = 1e-6;
        for _ in 0..samples {
            let t = rng.uniform(dt, horizon.max(2.0 * dt));
            let lo = self.aggregate(t - dt);
            let hi = self.aggregate(t + dt);
            let checks: [(&'static str, &BlockMatrix, &BlockMatrix, f64); 4] = [
                ("A", &hi.a, &lo.a, self.lipschitz.a),
                ("B", &hi.b, &lo.b, self.lipschitz.b),
                ("C", &hi.c, &lo.c, self.lipschitz.c),
                ("H", &hi.h, &lo.h, self.lipschitz.h),
            ];
            for (which, up, down, bound) in checks {
                let diff = up.to_dense().sub(&down.to_dense()).scale(1.0 / (2.0 * dt));
                let norm = diff.spectral_norm().map_err(|_| {
                    ModelError::NonFinite(format!("derivative sample of {which}"))
                })?;
                if norm > bound + slack {
                    return Err(ModelError::DerivativeBoundExceeded {
                        which,
                        bound,
                        observed: norm,
                        at_t: t,
                    });
                }
            }
        }
        Ok(())
    }

    /// Check the increment bound `‖A(t)−A(t')‖ ≤ a·|t−t'|` (and likewise
    /// for B, C, H) on random pairs of times.
    pub fn validate_increment_bounds(
        &self,
        horizon: f64,
        pairs: usize,
        seed: u64,
    ) -> Result<(), ModelError> {
        let mut rng = SplitMix64::new(seed);
        let slack = 1e-9;
        for _ in 0..pairs {
            let t0 = rng.uniform(0.0, horizon);
            let t1 = rng.uniform(0.0, horizon);
            let gap = (t1 - t0).abs();
            let s0 = self.aggregate(t0);
            let s1 = self.aggregate(t1);
            let checks: [(&'static str, &BlockMatrix, &BlockMatrix, f64); 4] = [
                ("A", &s1.a, &s0.a, self.lipschitz.a),
                ("B", &s1.b, &s0.b, self.lipschitz.b),
                ("C", &s1.c, &s0.c, self.lipschitz.c),
                ("H", &s1.h, &s0.h, self.lipschitz.h),
            ];
            for (which, m1, m0, bound) in checks {
                let norm = m1
                    .to_dense()
                    .sub(&m0.to_dense())
                    .spectral_norm()
                    .map_err(|_| ModelError::NonFinite(format!("increment sample of {which}")))?;
                if norm > bound * gap + slack {
                    return Err(ModelError::DerivativeBoundExceeded {
                        which,
                        bound,
                        observed: norm / gap.max(1e-300),
                        at_t: t0,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Aggregated plant matrices frozen at one instant.
#[derive(Clone, Debug)]
pub struct PlantSnapshot {
    pub t: f64,
    pub a: BlockMatrix,
    pub b: BlockMatrix,
    pub c: BlockMatrix,
    pub h: BlockMatrix,
}

impl PlantSnapshot {
    pub fn state_dims(&self) -> &[usize] {
        self.a.row_dims()
    }

    /// Dense `A(t) + H(t)`.
    pub fn a_plus_h(&self) -> Matrix {
        self.a.to_dense().add(&self.h.to_dense())
    }
}

/// Design parameters: per-subsystem gain-norm caps, per-link coupling
/// caps, decay/floor margins, and solver numerics.
#[derive(Clone, Debug)]
pub struct DesignConfig {
    /// Local controller gain caps, one per subsystem.
    pub kappa: Vec<f64>,
    /// Local observer gain caps.
    pub mu: Vec<f64>,
    /// Coupling controller gain caps per directed link.
    pub iota: BTreeMap<(usize, usize), f64>,
    /// Coupling observer gain caps per directed link.
    pub omega: BTreeMap<(usize, usize), f64>,
    /// Per-subsystem decay rates.
    pub beta: Vec<f64>,
    /// Per-subsystem Lyapunov floors.
    pub epsilon: Vec<f64>,
    /// Uniform margin added to the decay inequalities.
    pub gamma: f64,
    pub solver_tol: f64,
    pub max_solver_iters: usize,
    /// Cap on the interval length (also used when a rate denominator
    /// vanishes).
    pub t_max: f64,
    /// Default integration step for simulation.
    pub ode_step: f64,
}

impl DesignConfig {
    /// Uniform caps over the given adjacency.
    pub fn uniform(
        n_subsystems: usize,
        adjacency: &LinkSet,
        kappa: f64,
        mu: f64,
        iota: f64,
        omega: f64,
        beta: f64,
        epsilon: f64,
        gamma: f64,
    ) -> Self {
        DesignConfig {
            kappa: vec![kappa; n_subsystems],
            mu: vec![mu; n_subsystems],
            iota: adjacency.iter().map(|&l| (l, iota)).collect(),
            omega: adjacency.iter().map(|&l| (l, omega)).collect(),
            beta: vec![beta; n_subsystems],
            epsilon: vec![epsilon; n_subsystems],
            gamma,
            solver_tol: 1e-7,
            max_solver_iters: 2000,
            t_max: 2.0,
            ode_step: 1e-3,
        }
    }

    pub fn validate(&self, plant: &Plant) -> Result<(), ModelError> {
        let n = plant.subsystem_count();
        for (name, v) in [
            ("kappa", &self.kappa),
            ("mu", &self.mu),
            ("beta", &self.beta),
            ("epsilon", &self.epsilon),
        ] {
            if v.len() != n {
                return Err(ModelError::BadConfig(format!(
                    "{name} must have one entry per subsystem ({n})"
                )));
            }
            if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(ModelError::BadConfig(format!(
                    "{name} entries must be strictly positive"
                )));
            }
        }
        for (name, map) in [("iota", &self.iota), ("omega", &self.omega)] {
            for (&(i, j), &v) in map {
                if !plant.adjacency().contains(&(i, j)) {
                    return Err(ModelError::BadConfig(format!(
                        "{name} bound given for ({},{}) outside the plant adjacency",
                        i + 1,
                        j + 1
                    )));
                }
                if !(v > 0.0) || !v.is_finite() {
                    return Err(ModelError::BadConfig(format!(
                        "{name} bounds must be strictly positive"
                    )));
                }
            }
            for link in plant.adjacency().iter() {
                if !map.contains_key(link) {
                    return Err(ModelError::BadConfig(format!(
                        "{name} bound missing for link ({},{})",
                        link.0 + 1,
                        link.1 + 1
                    )));
                }
            }
        }
        if !(self.gamma > 0.0) {
            return Err(ModelError::BadConfig("gamma must be positive".into()));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-3) {
            return Err(ModelError::BadConfig(
                "solver tolerance must lie in (0, 1e-3]".into(),
            ));
        }
        if !(self.t_max > 0.0) || !(self.ode_step > 0.0) {
            return Err(ModelError::BadConfig(
                "t_max and ode_step must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn min_epsilon(&self) -> f64 {
        self.epsilon.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn min_beta(&self) -> f64 {
        self.beta.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Gains and certificates held over one switching interval.
#[derive(Clone, Debug)]
pub struct GainScheduleEntry {
    /// Interval index.
    pub k: usize,
    /// Interval start, seconds.
    pub t_k: f64,
    /// Interval length, seconds.
    pub t_len: f64,
    /// Active communication links.
    pub alpha: LinkSet,
    /// Local controller gains, one m_i×n_i block per subsystem.
    pub k_gain: Vec<Matrix>,
    /// Coupling controller gains on active links.
    pub l_gain: BlockMatrix,
    /// Local observer gains, one n_i×r_i block per subsystem.
    pub m_gain: Vec<Matrix>,
    /// Coupling observer gains on active links.
    pub o_gain: BlockMatrix,
    /// Inverse-Lyapunov certificate blocks for the state loop.
    pub z: Vec<SymMatrix>,
    /// Lyapunov certificate blocks for the estimation error.
    pub phat: Vec<SymMatrix>,
}

impl GainScheduleEntry {
    pub fn t_end(&self) -> f64 {
        self.t_k + self.t_len
    }

    /// Dense combined controller gain `K + L` (inputs × states).
    pub fn controller_gain(&self, input_dims: &[usize], state_dims: &[usize]) -> Matrix {
        let mut g = BlockMatrix::new(input_dims.to_vec(), state_dims.to_vec());
        for (i, k) in self.k_gain.iter().enumerate() {
            g.set_block(i, i, k.clone());
        }
        let mut dense = g.to_dense();
        let l = self.l_gain.to_dense();
        dense = dense.add(&l);
        dense
    }

    /// Dense combined observer gain `M + O` (states × outputs).
    pub fn observer_gain(&self, state_dims: &[usize], output_dims: &[usize]) -> Matrix {
        let mut g = BlockMatrix::new(state_dims.to_vec(), output_dims.to_vec());
        for (i, m) in self.m_gain.iter().enumerate() {
            g.set_block(i, i, m.clone());
        }
        g.to_dense().add(&self.o_gain.to_dense())
    }
}

/// Closed-loop matrices for a snapshot under held gains:
/// state transition, coupling into the state from the estimation error,
/// and the error transition.
pub fn closed_loop_matrices(
    snapshot: &PlantSnapshot,
    entry: &GainScheduleEntry,
) -> Result<(Matrix, Matrix, Matrix), ModelError> {
    let state_dims = snapshot.a.row_dims().to_vec();
    let input_dims = snapshot.b.col_dims().to_vec();
    let output_dims = snapshot.c.row_dims().to_vec();
    if entry.k_gain.len() != state_dims.len() {
        return Err(ModelError::BadConfig(
            "gain entry does not match subsystem count".into(),
        ));
    }
    for (i, k) in entry.k_gain.iter().enumerate() {
        if (k.rows(), k.cols()) != (input_dims[i], state_dims[i]) {
            return Err(ModelError::ShapeMismatch {
                what: format!("K_{}", i + 1),
                expected: (input_dims[i], state_dims[i]),
                got: (k.rows(), k.cols()),
            });
        }
    }
    for (i, m) in entry.m_gain.iter().enumerate() {
        if (m.rows(), m.cols()) != (state_dims[i], output_dims[i]) {
            return Err(ModelError::ShapeMismatch {
                what: format!("M_{}", i + 1),
                expected: (state_dims[i], output_dims[i]),
                got: (m.rows(), m.cols()),
            });
        }
    }
    let a_h = snapshot.a_plus_h();
    let gain = entry.controller_gain(&input_dims, &state_dims);
    let b_cl = snapshot.b.to_dense().mul(&gain);
    let a_cl_state = a_h.add(&b_cl);
    let obs = entry.observer_gain(&state_dims, &output_dims);
    let a_cl_error = a_h.add(&obs.mul(&snapshot.c.to_dense()));
    Ok((a_cl_state, b_cl, a_cl_error))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_plant(a: f64, b: f64, c: f64) -> Plant {
        let sub = Subsystem {
            a: TimeMatrix::constant(&Matrix::from_rows(&[vec![a]])),
            b: TimeMatrix::constant(&Matrix::from_rows(&[vec![b]])),
            c: TimeMatrix::constant(&Matrix::from_rows(&[vec![c]])),
        };
        Plant::new(
            vec![sub],
            BTreeMap::new(),
            LipschitzBounds {
                a: 0.0,
                b: 0.0,
                c: 0.0,
                h: 0.0,
            },
        )
        .unwrap()
    }

    fn zero_entry(plant: &Plant) -> GainScheduleEntry {
        let dims = plant.dims();
        GainScheduleEntry {
            k: 0,
            t_k: 0.0,
            t_len: 1.0,
            alpha: LinkSet::new(),
            k_gain: dims.iter().map(|d| Matrix::zeros(d.m, d.n)).collect(),
            l_gain: BlockMatrix::new(plant.input_dims(), plant.state_dims()),
            m_gain: dims.iter().map(|d| Matrix::zeros(d.n, d.r)).collect(),
            o_gain: BlockMatrix::new(plant.state_dims(), plant.output_dims()),
            z: dims.iter().map(|d| SymMatrix::identity(d.n)).collect(),
            phat: dims.iter().map(|d| SymMatrix::identity(d.n)).collect(),
        }
    }

    #[test]
    fn single_subsystem_has_zero_coupling() {
        let plant = scalar_plant(-1.0, 1.0, 1.0);
        let snap = plant.aggregate(0.0);
        assert_eq!(snap.h.to_dense().data(), &[0.0]);
        assert_eq!(snap.h.block_count(), 0);
    }

    #[test]
    fn self_loops_rejected() {
        let sub = Subsystem {
            a: TimeMatrix::constant(&Matrix::identity(1)),
            b: TimeMatrix::constant(&Matrix::identity(1)),
            c: TimeMatrix::constant(&Matrix::identity(1)),
        };
        let mut couplings = BTreeMap::new();
        couplings.insert((0usize, 0usize), TimeMatrix::zeros(1, 1));
        let err = Plant::new(
            vec![sub],
            couplings,
            LipschitzBounds {
                a: 0.0,
                b: 0.0,
                c: 0.0,
                h: 0.0,
            },
        )
        .unwrap_err();
        assert_eq!(err, ModelError::SelfLoop(0));
    }

    #[test]
    fn closed_loop_zero_gains_is_open_loop() {
        let plant = scalar_plant(-1.0, 1.0, 1.0);
        let snap = plant.aggregate(0.0);
        let (a_cl, b_cl, a_err) = closed_loop_matrices(&snap, &zero_entry(&plant)).unwrap();
        assert_eq!(a_cl.get(0, 0), -1.0);
        assert_eq!(b_cl.get(0, 0), 0.0);
        assert_eq!(a_err.get(0, 0), -1.0);
    }

    #[test]
    fn closed_loop_scalar_arithmetic() {
        let plant = scalar_plant(-1.0, 1.0, 1.0);
        let snap = plant.aggregate(0.0);
        let mut entry = zero_entry(&plant);
        entry.k_gain[0] = Matrix::from_rows(&[vec![-2.0]]);
        let (a_cl, b_cl, _) = closed_loop_matrices(&snap, &entry).unwrap();
        assert_eq!(a_cl.get(0, 0), -3.0);
        assert_eq!(b_cl.get(0, 0), -2.0);
    }

    #[test]
    fn decoupled_pair_has_zero_h_everywhere() {
        let mk = || Subsystem {
            a: TimeMatrix::constant(&Matrix::from_rows(&[vec![-1.0]])),
            b: TimeMatrix::constant(&Matrix::from_rows(&[vec![1.0]])),
            c: TimeMatrix::constant(&Matrix::from_rows(&[vec![1.0]])),
        };
        let plant = Plant::new(
            vec![mk(), mk()],
            BTreeMap::new(),
            LipschitzBounds {
                a: 0.0,
                b: 0.0,
                c: 0.0,
                h: 0.0,
            },
        )
        .unwrap();
        for t in [0.0, 0.7, 3.1, 12.9] {
            let h = plant.aggregate(t).h.to_dense();
            assert!(h.data().iter().all(|&v| v == 0.0));
        }
        assert!(plant.adjacency().is_empty());
    }

    #[test]
    fn aggregate_is_linear_per_block() {
        let (plant, _) = pendulum_example();
        let mut doubled = plant.clone();
        // scale subsystem 0's A by 2
        let a0 = doubled.subsystems[0].a.clone();
        let mut scaled = TimeMatrix::zeros(a0.rows(), a0.cols());
        for r in 0..a0.rows() {
            for c in 0..a0.cols() {
                let f = match *a0.get(r, c) {
                    TimeFun::Const(v) => TimeFun::Const(2.0 * v),
                    TimeFun::Cos { a0, a1, omega } => TimeFun::Cos {
                        a0: 2.0 * a0,
                        a1: 2.0 * a1,
                        omega,
                    },
                    TimeFun::Sin { a0, a1, omega } => TimeFun::Sin {
                        a0: 2.0 * a0,
                        a1: 2.0 * a1,
                        omega,
                    },
                };
                scaled.set(r, c, f);
            }
        }
        doubled.subsystems[0].a = scaled;
        let orig = plant.aggregate(0.4);
        let new = doubled.aggregate(0.4);
        let b0 = orig.a.block(0, 0).unwrap();
        let b0d = new.a.block(0, 0).unwrap();
        assert_eq!(b0.scale(2.0).data(), b0d.data());
        for i in 1..3 {
            assert_eq!(
                orig.a.block(i, i).unwrap().data(),
                new.a.block(i, i).unwrap().data()
            );
        }
    }
}
