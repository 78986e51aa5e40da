//! Feasibility and linear minimization over affine matrix inequalities.
//!
//! Feasibility is decided through a slack formulation: maximize a scalar
//! `t` subject to `G_c(x) + t·I ⪯ 0` for every slack-participating
//! constraint. A strictly positive optimum certifies an interior point
//! with margin `t`; a negative upper bound (from the barrier duality gap)
//! certifies that no assignment satisfies the constraints. The path is
//! followed with a weighted log-det barrier and damped Newton steps; an
//! alternating-projection sweep acts as a fallback when Newton stalls.
//!
//! The Newton kernels work on flat row-major buffers; at the problem
//! sizes this crate produces (constraint blocks of order ≤ ~100, a few
//! hundred coordinates) dense factorizations are the fast option.

use super::problem::{
    block_offsets, Assignment, LmiError, LmiProblem, Sense, VarBlockRef, VarKind, VarValue,
};
use crate::linalg::{BlockMatrix, Matrix, SymMatrix};

/// Termination status of a feasibility solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    MaxIters,
}

/// Outcome of a feasibility solve.
#[derive(Clone, Debug)]
pub struct LmiSolution {
    pub status: SolveStatus,
    pub assignment: Assignment,
    /// Most positive residual across all constraints at the returned
    /// assignment (negative when the assignment is strictly interior).
    pub max_residual: f64,
    /// Total number of Newton steps taken.
    pub iterations: usize,
    /// Achieved slack margin when feasible; the certified upper bound on
    /// the attainable slack when infeasible.
    pub slack: f64,
}

/// Outcome of a linear minimization over a feasible region.
#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub assignment: Assignment,
    pub objective: f64,
    pub iterations: usize,
}

/// Solver knobs.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Required strict margin: the problem is reported feasible only when
    /// slack `t ≥ tol` is achieved, infeasible when the slack provably
    /// cannot reach `tol`.
    pub tol: f64,
    /// Cap on total Newton steps.
    pub max_newton_iters: usize,
    /// Stop improving the slack once the duality gap drops below this
    /// fraction of the achieved slack (keeps points well centered).
    pub margin_fraction: f64,
    /// Declare feasibility outright when the slack exceeds this value
    /// (guards unbounded slack on non-compact problems).
    pub slack_cap: f64,
}

fn trace(msg: &str) {
    if std::env::var_os("NCS_SOLVER_TRACE").is_some() {
        eprintln!("[solver] {msg}");
    }
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-7,
            max_newton_iters: 2000,
            margin_fraction: 0.25,
            slack_cap: 1e7,
        }
    }
}

// ── coordinate layout ────────────────────────────────────────────────

pub(crate) struct Layout {
    var_offsets: Vec<usize>,
    pub total: usize,
}

pub(crate) fn layout(problem: &LmiProblem) -> Layout {
    let mut offsets = Vec::with_capacity(problem.vars.len());
    let mut acc = 0;
    for v in &problem.vars {
        offsets.push(acc);
        acc += v.kind.coord_count();
    }
    Layout {
        var_offsets: offsets,
        total: acc,
    }
}

impl Layout {
    pub fn var_offset(&self, var: usize) -> usize {
        self.var_offsets[var]
    }
}

/// Flatten an assignment into the coordinate vector.
pub(crate) fn assignment_to_coords(
    problem: &LmiProblem,
    a: &Assignment,
) -> Result<Vec<f64>, LmiError> {
    problem.check_shapes(a)?;
    let lay = layout(problem);
    let mut x = vec![0.0; lay.total];
    for (vi, spec) in problem.vars.iter().enumerate() {
        let mut p = lay.var_offsets[vi];
        match (&spec.kind, &a.values[vi]) {
            (VarKind::SymBlockDiag { dims }, VarValue::Sym(blocks)) => {
                for (b, &d) in dims.iter().enumerate() {
                    for r in 0..d {
                        for c in 0..=r {
                            x[p] = blocks[b].get(r, c);
                            p += 1;
                        }
                    }
                }
            }
            (
                VarKind::RectBlocks {
                    row_dims,
                    col_dims,
                    mask,
                },
                VarValue::Blocks(grid),
            ) => {
                for &(i, j) in mask {
                    let (nr, nc) = (row_dims[i], col_dims[j]);
                    for r in 0..nr {
                        for c in 0..nc {
                            x[p] = grid.block(i, j).map(|m| m.get(r, c)).unwrap_or(0.0);
                            p += 1;
                        }
                    }
                }
            }
            (VarKind::Scalar, VarValue::Scalar(s)) => {
                x[p] = *s;
            }
            _ => unreachable!("shapes checked above"),
        }
    }
    Ok(x)
}

/// Rebuild an assignment from the coordinate vector.
pub(crate) fn coords_to_assignment(problem: &LmiProblem, x: &[f64]) -> Assignment {
    let lay = layout(problem);
    let mut values = Vec::with_capacity(problem.vars.len());
    for (vi, spec) in problem.vars.iter().enumerate() {
        let mut p = lay.var_offsets[vi];
        match &spec.kind {
            VarKind::SymBlockDiag { dims } => {
                let mut blocks = Vec::with_capacity(dims.len());
                for &d in dims {
                    let mut m = SymMatrix::zeros(d);
                    for r in 0..d {
                        for c in 0..=r {
                            m.set(r, c, x[p]);
                            p += 1;
                        }
                    }
                    blocks.push(m);
                }
                values.push(VarValue::Sym(blocks));
            }
            VarKind::RectBlocks {
                row_dims,
                col_dims,
                mask,
            } => {
                let mut grid = BlockMatrix::new(row_dims.clone(), col_dims.clone());
                for &(i, j) in mask {
                    let (nr, nc) = (row_dims[i], col_dims[j]);
                    let mut m = Matrix::zeros(nr, nc);
                    for r in 0..nr {
                        for c in 0..nc {
                            m.set(r, c, x[p]);
                            p += 1;
                        }
                    }
                    grid.set_block(i, j, m);
                }
                values.push(VarValue::Blocks(grid));
            }
            VarKind::Scalar => {
                values.push(VarValue::Scalar(x[p]));
            }
        }
    }
    Assignment { values }
}

// ── lowering to coordinate form ──────────────────────────────────────

struct LoweredCon {
    dim: usize,
    /// Constant part, normalized so the constraint reads `G(x) ⪯ 0`.
    c0: Matrix,
    coords: Vec<usize>,
    mats: Vec<Matrix>,
    slacked: bool,
    bar_w: f64,
    bar_relax: f64,
}

struct Lowered {
    cons: Vec<LoweredCon>,
    ncoords: usize,
}

fn lower(problem: &LmiProblem) -> Result<Lowered, LmiError> {
    problem.validate()?;
    let lay = layout(problem);
    let mut cons = Vec::with_capacity(problem.constraints.len());
    for c in &problem.constraints {
        let n = c.order();
        let offsets = block_offsets(&c.block_dims);
        let sign = match c.sense {
            Sense::Leq0 => 1.0,
            Sense::Geq0 => -1.0,
        };
        // constant part
        let mut e0 = Matrix::zeros(n, n);
        for t in &c.consts {
            let r0 = offsets[t.row_block];
            let c0 = offsets[t.col_block];
            for r in 0..t.matrix.rows() {
                for cc in 0..t.matrix.cols() {
                    e0.add_at(r0 + r, c0 + cc, t.matrix.get(r, cc));
                }
            }
        }
        let c0 = e0.plus_transpose().scale(sign);

        // per-coordinate derivative frames
        let mut frames: std::collections::BTreeMap<usize, Matrix> = Default::default();
        for t in &c.terms {
            let r0 = offsets[t.row_block];
            let cl0 = offsets[t.col_block];
            match t.var_block {
                VarBlockRef::Scalar => {
                    let p = lay.var_offsets[t.var];
                    let shape = match &t.left {
                        Some(l) => l.clone(),
                        None => Matrix::identity(c.block_dims[t.row_block]),
                    };
                    let frame = frames.entry(p).or_insert_with(|| Matrix::zeros(n, n));
                    for r in 0..shape.rows() {
                        for cc in 0..shape.cols() {
                            frame.add_at(r0 + r, cl0 + cc, t.scale * shape.get(r, cc));
                        }
                    }
                }
                VarBlockRef::Sym(b) => {
                    let dims = match &problem.vars[t.var].kind {
                        VarKind::SymBlockDiag { dims } => dims,
                        _ => unreachable!("validated"),
                    };
                    let mut p = lay.var_offsets[t.var];
                    for &d in dims.iter().take(b) {
                        p += d * (d + 1) / 2;
                    }
                    let d = dims[b];
                    for r in 0..d {
                        for cc in 0..=r {
                            let frame =
                                frames.entry(p).or_insert_with(|| Matrix::zeros(n, n));
                            // basis E_rc (+ E_cr when off-diagonal); transposition
                            // is a no-op on a symmetric basis
                            add_outer(frame, r0, cl0, t.scale, &t.left, &t.right, r, cc);
                            if r != cc {
                                add_outer(frame, r0, cl0, t.scale, &t.left, &t.right, cc, r);
                            }
                            p += 1;
                        }
                    }
                }
                VarBlockRef::Rect(bi, bj) => {
                    let (row_dims, col_dims, mask) = match &problem.vars[t.var].kind {
                        VarKind::RectBlocks {
                            row_dims,
                            col_dims,
                            mask,
                        } => (row_dims, col_dims, mask),
                        _ => unreachable!("validated"),
                    };
                    let mut p = lay.var_offsets[t.var];
                    for &(i, j) in mask {
                        if (i, j) == (bi, bj) {
                            break;
                        }
                        p += row_dims[i] * col_dims[j];
                    }
                    let (nr, nc) = (row_dims[bi], col_dims[bj]);
                    for r in 0..nr {
                        for cc in 0..nc {
                            let frame =
                                frames.entry(p).or_insert_with(|| Matrix::zeros(n, n));
                            // basis E_rc; transposed it lands as E_cr
                            if t.transpose {
                                add_outer(frame, r0, cl0, t.scale, &t.left, &t.right, cc, r);
                            } else {
                                add_outer(frame, r0, cl0, t.scale, &t.left, &t.right, r, cc);
                            }
                            p += 1;
                        }
                    }
                }
            }
        }

        let mut coords = Vec::with_capacity(frames.len());
        let mut mats = Vec::with_capacity(frames.len());
        for (p, frame) in frames {
            let a = frame.plus_transpose().scale(sign);
            // drop structurally zero directions
            if a.data().iter().any(|&v| v != 0.0) {
                coords.push(p);
                mats.push(a);
            }
        }
        cons.push(LoweredCon {
            dim: n,
            c0,
            coords,
            mats,
            slacked: c.slack_weight > 0.0,
            bar_w: c.barrier_weight,
            bar_relax: c.barrier_relax,
        });
    }
    Ok(Lowered {
        cons,
        ncoords: lay.total,
    })
}

// frame += scale · L[:,vr] · R[vc,:] placed at (r0, c0); L/R default to identity
fn add_outer(
    frame: &mut Matrix,
    r0: usize,
    c0: usize,
    scale: f64,
    left: &Option<Matrix>,
    right: &Option<Matrix>,
    vr: usize,
    vc: usize,
) {
    match (left, right) {
        (None, None) => frame.add_at(r0 + vr, c0 + vc, scale),
        (Some(l), None) => {
            for a in 0..l.rows() {
                let w = l.get(a, vr);
                if w != 0.0 {
                    frame.add_at(r0 + a, c0 + vc, scale * w);
                }
            }
        }
        (None, Some(r)) => {
            for b in 0..r.cols() {
                let w = r.get(vc, b);
                if w != 0.0 {
                    frame.add_at(r0 + vr, c0 + b, scale * w);
                }
            }
        }
        (Some(l), Some(r)) => {
            for a in 0..l.rows() {
                let wl = l.get(a, vr);
                if wl == 0.0 {
                    continue;
                }
                for b in 0..r.cols() {
                    let wr = r.get(vc, b);
                    if wr != 0.0 {
                        frame.add_at(r0 + a, c0 + b, scale * wl * wr);
                    }
                }
            }
        }
    }
}

// ── flat-buffer kernels ──────────────────────────────────────────────

/// In-place Cholesky of a row-major n×n buffer (lower triangle valid on
/// success). Returns false when the matrix is not positive definite.
fn chol_flat(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let dj = d.sqrt();
        a[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / dj;
        }
    }
    true
}

fn logdet_from_chol(l: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        s += l[i * n + i].ln();
    }
    2.0 * s
}

/// Solve `L X = B` in place for a row-major n×m `B` (columns solved
/// simultaneously).
fn solve_lower_multi(l: &[f64], n: usize, b: &mut [f64], m: usize) {
    for i in 0..n {
        // b[i,:] = (b[i,:] - Σ_k L[i,k]·b[k,:]) / L[i,i]
        for k in 0..i {
            let lik = l[i * n + k];
            if lik == 0.0 {
                continue;
            }
            let (head, tail) = b.split_at_mut(i * m);
            let bk = &head[k * m..k * m + m];
            let bi = &mut tail[..m];
            for c in 0..m {
                bi[c] -= lik * bk[c];
            }
        }
        let inv = 1.0 / l[i * n + i];
        for v in &mut b[i * m..(i + 1) * m] {
            *v *= inv;
        }
    }
}

fn solve_lower_t_vec(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn solve_lower_vec(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn transpose_flat(a: &mut [f64], n: usize) {
    for r in 0..n {
        for c in 0..r {
            a.swap(r * n + c, c * n + r);
        }
    }
}

// ── barrier machinery ────────────────────────────────────────────────

struct ConData {
    dim: usize,
    c0: Vec<f64>,
    /// Coordinate indices, the slack coordinate appended when active.
    coords: Vec<usize>,
    /// Contiguous row-major derivative matrices, one per coordinate.
    mats: Vec<f64>,
    bar_w: f64,
    bar_relax: f64,
}

struct Barrier {
    cons: Vec<ConData>,
    n: usize,
    obj: Vec<f64>,
    max_dim: usize,
}

struct Factored {
    /// Per-constraint Cholesky factors of the slabs.
    chol: Vec<Vec<f64>>,
    phi: f64,
}

impl Barrier {
    fn new(lowered: &Lowered, slack_idx: Option<usize>, obj: Vec<f64>) -> Barrier {
        let n = obj.len();
        let mut cons = Vec::with_capacity(lowered.cons.len());
        let mut max_dim = 0;
        for lc in &lowered.cons {
            let d = lc.dim;
            max_dim = max_dim.max(d);
            let mut coords = lc.coords.clone();
            let mut mats = Vec::with_capacity((coords.len() + 1) * d * d);
            for m in &lc.mats {
                mats.extend_from_slice(m.data());
            }
            if let Some(ti) = slack_idx {
                if lc.slacked {
                    coords.push(ti);
                    let mut eye = vec![0.0; d * d];
                    for i in 0..d {
                        eye[i * d + i] = 1.0;
                    }
                    mats.extend_from_slice(&eye);
                }
            }
            cons.push(ConData {
                dim: d,
                c0: lc.c0.data().to_vec(),
                coords,
                mats,
                bar_w: lc.bar_w,
                bar_relax: lc.bar_relax,
            });
        }
        Barrier {
            cons,
            n,
            obj,
            max_dim,
        }
    }

    fn build_slab(con: &ConData, x: &[f64], out: &mut Vec<f64>) {
        let d2 = con.dim * con.dim;
        out.clear();
        out.extend_from_slice(&con.c0);
        for (i, &p) in con.coords.iter().enumerate() {
            let xv = x[p];
            if xv == 0.0 {
                continue;
            }
            let m = &con.mats[i * d2..(i + 1) * d2];
            for (o, mi) in out.iter_mut().zip(m) {
                *o += xv * mi;
            }
        }
        for v in out.iter_mut() {
            *v = -*v;
        }
    }

    /// Factor every slab at `x`; `None` when some slab is not PD. The
    /// stored factors are of the barrier slabs (which carry any
    /// relaxation); iterates must also keep the true slabs PD.
    fn factor(&self, x: &[f64]) -> Option<Factored> {
        let mut chol = Vec::with_capacity(self.cons.len());
        let mut phi = 0.0;
        let mut buf: Vec<f64> = Vec::with_capacity(self.max_dim * self.max_dim);
        let mut raw: Vec<f64> = Vec::with_capacity(self.max_dim * self.max_dim);
        for con in &self.cons {
            Self::build_slab(con, x, &mut buf);
            if con.bar_relax > 0.0 {
                raw.clear();
                raw.extend_from_slice(&buf);
                if !chol_flat(&mut raw, con.dim) {
                    return None;
                }
                for d in 0..con.dim {
                    buf[d * con.dim + d] += con.bar_relax;
                }
            }
            if !chol_flat(&mut buf, con.dim) {
                return None;
            }
            phi -= con.bar_w * logdet_from_chol(&buf, con.dim);
            chol.push(buf.clone());
        }
        Some(Factored { chol, phi })
    }

    fn objective(&self, x: &[f64], mu: f64, phi: f64) -> f64 {
        let lin: f64 = self.obj.iter().zip(x).map(|(c, v)| c * v).sum();
        mu * lin + phi
    }

    /// Newton direction from the factored slabs; returns (delta, decrement²).
    fn newton_direction(
        &self,
        mu: f64,
        fac: &Factored,
        scratch: &mut NewtonScratch,
    ) -> Result<(Vec<f64>, f64), LmiError> {
        let n = self.n;
        let g = &mut scratch.g;
        g.clear();
        g.extend(self.obj.iter().map(|c| mu * c));
        let h = &mut scratch.h;
        h.clear();
        h.resize(n * n, 0.0);

        for (con, l) in self.cons.iter().zip(&fac.chol) {
            let dim = con.dim;
            let d2 = dim * dim;
            let k = con.coords.len();
            scratch.wflat.clear();
            scratch.wflat.resize(k * d2, 0.0);
            for local in 0..k {
                let w = &mut scratch.wflat[local * d2..(local + 1) * d2];
                w.copy_from_slice(&con.mats[local * d2..(local + 1) * d2]);
                // W = L⁻¹ A L⁻ᵀ via two triangular sweeps
                solve_lower_multi(l, dim, w, dim);
                transpose_flat(w, dim);
                solve_lower_multi(l, dim, w, dim);
                let mut tr = 0.0;
                for d in 0..dim {
                    tr += w[d * dim + d];
                }
                g[con.coords[local]] += con.bar_w * tr;
            }
            for i in 0..k {
                let wi = &scratch.wflat[i * d2..(i + 1) * d2];
                let pi = con.coords[i];
                for j in i..k {
                    let wj = &scratch.wflat[j * d2..(j + 1) * d2];
                    let mut dot = 0.0;
                    for (a, b) in wi.iter().zip(wj) {
                        dot += a * b;
                    }
                    let pj = con.coords[j];
                    h[pi * n + pj] += con.bar_w * dot;
                    if pi != pj {
                        h[pj * n + pi] += con.bar_w * dot;
                    }
                }
            }
        }

        // ridge-regularized solve
        let hmax = (0..n).map(|i| h[i * n + i]).fold(0.0f64, f64::max);
        let mut ridge = 1e-12 * hmax.max(1.0);
        loop {
            let hm = &mut scratch.hwork;
            hm.clear();
            hm.extend_from_slice(h);
            for i in 0..n {
                hm[i * n + i] += ridge;
            }
            if chol_flat(hm, n) {
                let mut delta: Vec<f64> = g.iter().map(|v| -v).collect();
                solve_lower_vec(hm, n, &mut delta);
                solve_lower_t_vec(hm, n, &mut delta);
                let dec2: f64 = -g.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>();
                return Ok((delta, dec2.max(0.0)));
            }
            ridge *= 100.0;
            if ridge > 1e8 * hmax.max(1.0) {
                return Err(LmiError::Numeric(
                    "newton system is irreparably singular".into(),
                ));
            }
        }
    }
}

#[derive(Default)]
struct NewtonScratch {
    g: Vec<f64>,
    h: Vec<f64>,
    hwork: Vec<f64>,
    wflat: Vec<f64>,
}

struct CenterOutcome {
    iterations: usize,
    stalled: bool,
    converged: bool,
}

/// Damped Newton until the decrement is tiny. `x` must be strictly
/// interior on entry and stays so.
fn center(
    barrier: &Barrier,
    x: &mut Vec<f64>,
    mu: f64,
    iter_cap: usize,
    scratch: &mut NewtonScratch,
) -> Result<CenterOutcome, LmiError> {
    let mut iterations = 0;
    let mut fac = barrier
        .factor(x)
        .ok_or_else(|| LmiError::Numeric("iterate left the interior".into()))?;
    loop {
        let f0 = barrier.objective(x, mu, fac.phi);
        let (delta, dec2) = barrier.newton_direction(mu, &fac, scratch)?;
        if dec2 <= 1e-9 * (1.0 + f0.abs()) {
            return Ok(CenterOutcome {
                iterations,
                stalled: false,
                converged: true,
            });
        }
        // backtracking line search: stay PD, require Armijo decrease
        let gdelta = -dec2;
        let mut alpha = 1.0f64;
        let mut accepted = false;
        for _ in 0..70 {
            let cand: Vec<f64> = x
                .iter()
                .zip(&delta)
                .map(|(xv, dv)| xv + alpha * dv)
                .collect();
            if let Some(fac_c) = barrier.factor(&cand) {
                let f_c = barrier.objective(&cand, mu, fac_c.phi);
                if f_c <= f0 + 0.01 * alpha * gdelta {
                    *x = cand;
                    fac = fac_c;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Ok(CenterOutcome {
                iterations,
                stalled: true,
                converged: false,
            });
        }
        if iterations >= iter_cap {
            return Ok(CenterOutcome {
                iterations,
                stalled: false,
                converged: false,
            });
        }
    }
}

/// Expand per-variable linear coefficients into coordinate space: for a
/// symmetric block-diagonal variable the coefficient applies to its
/// trace, for a scalar to its value.
fn objective_coords(
    problem: &LmiProblem,
    terms: &[(usize, f64)],
    ncoords: usize,
) -> Result<Vec<f64>, LmiError> {
    let lay = layout(problem);
    let mut obj = vec![0.0; ncoords];
    for &(var, w) in terms {
        let spec = problem.vars.get(var).ok_or_else(|| {
            LmiError::InvalidInput("objective references an unknown variable".into())
        })?;
        match &spec.kind {
            VarKind::Scalar => obj[lay.var_offset(var)] += w,
            VarKind::SymBlockDiag { dims } => {
                let mut p = lay.var_offset(var);
                for &d in dims {
                    for r in 0..d {
                        for c in 0..=r {
                            if r == c {
                                obj[p] += w;
                            }
                            p += 1;
                        }
                    }
                }
            }
            VarKind::RectBlocks { .. } => {
                return Err(LmiError::InvalidInput(
                    "linear objectives apply to symmetric and scalar variables only".into(),
                ))
            }
        }
    }
    Ok(obj)
}

/// Decide feasibility of the problem, returning a strictly interior point
/// with margin at least `opts.tol` or an infeasibility certificate.
///
/// The initial assignment, when given, seeds the search; constraints with
/// zero slack weight must already hold strictly there.
pub fn solve_feasibility(
    problem: &LmiProblem,
    init: Option<&Assignment>,
    opts: &SolveOptions,
) -> Result<LmiSolution, LmiError> {
    solve_feasibility_tilted(problem, init, opts, &[])
}

/// [`solve_feasibility`] with a preference direction: once feasibility is
/// decided, the margin-slab recentering additionally minimizes the given
/// linear functional (trace coefficients on symmetric variables, values
/// on scalars). Chained sequential designs use this to park certificates
/// against their monotonicity walls instead of letting the barrier drag
/// them toward the middle of the remaining range.
pub fn solve_feasibility_tilted(
    problem: &LmiProblem,
    init: Option<&Assignment>,
    opts: &SolveOptions,
    tilt: &[(usize, f64)],
) -> Result<LmiSolution, LmiError> {
    let lowered = lower(problem)?;
    let ncoords = lowered.ncoords;
    if lowered.cons.is_empty() {
        let assignment = init.cloned().unwrap_or_else(|| problem.zero_assignment());
        return Ok(LmiSolution {
            status: SolveStatus::Feasible,
            assignment,
            max_residual: f64::NEG_INFINITY,
            iterations: 0,
            slack: opts.slack_cap,
        });
    }
    if !lowered.cons.iter().any(|c| c.slacked) {
        return Err(LmiError::InvalidInput(
            "feasibility mode needs at least one slack-participating constraint".into(),
        ));
    }

    let x0 = match init {
        Some(a) => assignment_to_coords(problem, a)?,
        None => vec![0.0; ncoords],
    };
    let slack_idx = ncoords;
    let mut x = x0;
    x.push(0.0);

    let barrier = Barrier::new(&lowered, Some(slack_idx), {
        let mut c = vec![0.0; ncoords + 1];
        c[slack_idx] = -1.0; // maximize the slack
        c
    });

    // initial slack: strictly inside every slacked slab; hard constraints
    // must already hold strictly
    let mut worst_slacked = f64::NEG_INFINITY;
    for (lc, spec) in lowered.cons.iter().zip(&problem.constraints) {
        let mut g = lc.c0.clone();
        for (idx, &p) in lc.coords.iter().enumerate() {
            let xv = x[p];
            if xv != 0.0 {
                for r in 0..lc.dim {
                    for cc in 0..lc.dim {
                        g.add_at(r, cc, xv * lc.mats[idx].get(r, cc));
                    }
                }
            }
        }
        let lam = SymMatrix::from_dense_symmetrized(&g)
            .max_eig()
            .map_err(|e| LmiError::Numeric(format!("initial evaluation: {e}")))?;
        if lc.slacked {
            worst_slacked = worst_slacked.max(lam);
        } else if lam >= 0.0 {
            return Err(LmiError::InvalidInput(format!(
                "initial point violates hard constraint {} (residual {lam:.3e})",
                spec.id
            )));
        }
    }
    x[slack_idx] = -worst_slacked - (1e-3 + 0.02 * worst_slacked.abs());

    let nu_eff: f64 = lowered.cons.iter().map(|c| c.bar_w * c.dim as f64).sum();
    let mut mu = (nu_eff / (2.0 * x[slack_idx].abs().max(0.1))).clamp(1e-2, 1e8);
    let mut iterations = 0usize;
    let mut stalled = false;
    let mut scratch = NewtonScratch::default();

    for _stage in 0..256 {
        let budget = opts.max_newton_iters.saturating_sub(iterations).min(120);
        if budget == 0 {
            break;
        }
        let out = center(&barrier, &mut x, mu, budget, &mut scratch)?;
        iterations += out.iterations;
        let t = x[slack_idx];
        let gap = nu_eff / mu;
        trace(&format!(
            "stage mu={mu:.3e} t={t:.6e} gap={gap:.3e} iters={} converged={} stalled={}",
            out.iterations, out.converged, out.stalled
        ));
        if !out.converged && !out.stalled {
            // stage budget ran out: the gap bound is not trustworthy at an
            // off-center point, so keep working at the same mu
            if iterations >= opts.max_newton_iters {
                break;
            }
            continue;
        }
        let decided = t >= opts.slack_cap || (t >= opts.tol && gap <= opts.margin_fraction * t);
        if decided {
            // Feasibility is settled; return the analytic center of the
            // slab at half the achieved margin instead of the extreme
            // point (max-slack iterates hug the scale-limiting
            // constraints, which makes poor certificates and poor warm
            // starts).
            let theta = 0.5 * t.min(opts.slack_cap);
            let tilt_coords = objective_coords(problem, tilt, ncoords)?;
            let centered = recenter_at_margin(
                &lowered,
                &x[..ncoords],
                theta,
                &tilt_coords,
                opts.max_newton_iters.saturating_sub(iterations).min(120),
                &mut scratch,
            );
            return match centered {
                Some((xc, extra)) => finish(
                    problem,
                    &xc,
                    SolveStatus::Feasible,
                    iterations + extra,
                    theta,
                ),
                None => finish(problem, &x[..ncoords], SolveStatus::Feasible, iterations, t),
            };
        }
        let t_ub = t + 1.5 * gap;
        if out.converged && t_ub < opts.tol {
            return finish(
                problem,
                &x[..ncoords],
                SolveStatus::Infeasible,
                iterations,
                t_ub,
            );
        }
        if out.stalled {
            stalled = true;
            break;
        }
        if iterations >= opts.max_newton_iters {
            break;
        }
        mu *= 12.0;
    }

    if stalled {
        // Newton made no progress; try the projection fallback before
        // giving up.
        if let Some((xp, margin, extra)) =
            alternating_projections(&lowered, &x[..ncoords], opts.tol, 400)
        {
            return finish(
                problem,
                &xp,
                SolveStatus::Feasible,
                iterations + extra,
                margin,
            );
        }
    }
    let t = x[slack_idx];
    finish(problem, &x[..ncoords], SolveStatus::MaxIters, iterations, t)
}

/// Pure barrier centering of the margin-θ slab: every slack-participating
/// constraint is tightened to `G_c(x) + θ·I ⪯ 0` and the weighted log-det
/// barrier is minimized over `x` alone. The entry point must satisfy the
/// tightened constraints strictly.
fn recenter_at_margin(
    lowered: &Lowered,
    x0: &[f64],
    theta: f64,
    tilt: &[f64],
    iter_cap: usize,
    scratch: &mut NewtonScratch,
) -> Option<(Vec<f64>, usize)> {
    let n = x0.len();
    let mut shifted: Vec<LoweredCon> = Vec::with_capacity(lowered.cons.len());
    for lc in &lowered.cons {
        let mut c0 = lc.c0.clone();
        if lc.slacked {
            for d in 0..lc.dim {
                c0.add_at(d, d, theta);
            }
        }
        shifted.push(LoweredCon {
            dim: lc.dim,
            c0,
            coords: lc.coords.clone(),
            mats: lc.mats.clone(),
            slacked: lc.slacked,
            bar_w: lc.bar_w,
            bar_relax: lc.bar_relax,
        });
    }
    let shifted = Lowered {
        cons: shifted,
        ncoords: n,
    };
    let barrier = Barrier::new(&shifted, None, tilt.to_vec());
    let mut x = x0.to_vec();
    barrier.factor(&x)?;
    match center(&barrier, &mut x, 1.0, iter_cap, scratch) {
        Ok(out) => Some((x, out.iterations)),
        Err(_) => None,
    }
}

fn finish(
    problem: &LmiProblem,
    coords: &[f64],
    status: SolveStatus,
    iterations: usize,
    slack: f64,
) -> Result<LmiSolution, LmiError> {
    let assignment = coords_to_assignment(problem, coords);
    let residuals = problem.residuals(&assignment)?;
    let max_residual = residuals
        .iter()
        .map(|r| r.residual)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LmiSolution {
        status,
        assignment,
        max_residual,
        iterations,
        slack,
    })
}

/// Minimize a linear objective over the constraint set, starting from a
/// strictly feasible assignment. The objective is given per variable;
/// only scalar variables may carry cost here (which is all the designer
/// needs for the link relaxation).
pub fn minimize_linear(
    problem: &LmiProblem,
    objective: &[(usize, f64)],
    init: &Assignment,
    opts: &SolveOptions,
) -> Result<LinearSolution, LmiError> {
    let lowered = lower(problem)?;
    let ncoords = lowered.ncoords;
    let obj = objective_coords(problem, objective, ncoords)?;

    let mut x = assignment_to_coords(problem, init)?;
    let barrier = Barrier::new(&lowered, None, obj);
    if barrier.factor(&x).is_none() {
        return Err(LmiError::InvalidInput(
            "initial point is not strictly feasible".into(),
        ));
    }

    let nu_eff: f64 = lowered.cons.iter().map(|c| c.bar_w * c.dim as f64).sum();
    let obj0: f64 = barrier.obj.iter().zip(&x).map(|(c, v)| c * v).sum();
    let mut mu = (nu_eff / (1.0 + obj0.abs())).clamp(1e-2, 1e8);
    let mut iterations = 0usize;
    let mut scratch = NewtonScratch::default();
    for _stage in 0..64 {
        let budget = opts.max_newton_iters.saturating_sub(iterations).min(120);
        if budget == 0 {
            break;
        }
        let out = center(&barrier, &mut x, mu, budget, &mut scratch)?;
        iterations += out.iterations;
        let objective_value: f64 = barrier.obj.iter().zip(&x).map(|(c, v)| c * v).sum();
        let gap = nu_eff / mu;
        if gap <= 1e-7 * (1.0 + objective_value.abs()) || out.stalled {
            break;
        }
        if iterations >= opts.max_newton_iters {
            break;
        }
        mu *= 12.0;
    }
    let objective_value: f64 = barrier.obj.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LinearSolution {
        assignment: coords_to_assignment(problem, &x),
        objective: objective_value,
        iterations,
    })
}

// ── fallback: alternating projections ────────────────────────────────

/// Cyclic projection sweep onto the constraint spectahedra, working in
/// coordinate space: for each violated constraint, clip the offending
/// eigenvalues of the assembled matrix and take the least-squares
/// coordinate update that reproduces the clipped matrix.
///
/// Returns a point whose slacked constraints all hold with margin
/// `>= tol` (hard constraints with margin > 0) together with the achieved
/// margin, or `None` when the budget runs out.
fn alternating_projections(
    lowered: &Lowered,
    x0: &[f64],
    tol: f64,
    sweeps: usize,
) -> Option<(Vec<f64>, f64, usize)> {
    let mut x = x0.to_vec();
    let target = 2.0 * tol;
    for sweep in 0..sweeps {
        let mut worst = f64::NEG_INFINITY;
        for con in &lowered.cons {
            // assemble G(x)
            let mut g = con.c0.clone();
            for (idx, &p) in con.coords.iter().enumerate() {
                let xv = x[p];
                if xv == 0.0 {
                    continue;
                }
                let a = &con.mats[idx];
                for r in 0..con.dim {
                    for c in 0..con.dim {
                        g.add_at(r, c, xv * a.get(r, c));
                    }
                }
            }
            let sym = SymMatrix::from_dense_symmetrized(&g);
            let eig = sym.eigen().ok()?;
            let lam_max = eig.values[con.dim - 1];
            worst = worst.max(lam_max);
            if lam_max <= -target {
                continue;
            }
            if con.coords.is_empty() {
                return None; // constant constraint cannot be repaired
            }
            // desired change: push eigenvalues above -target down to it
            let mut dg = Matrix::zeros(con.dim, con.dim);
            for (k, &lam) in eig.values.iter().enumerate() {
                let excess = lam + target;
                if excess > 0.0 {
                    for r in 0..con.dim {
                        let vr = eig.vectors.get(r, k);
                        for c in 0..con.dim {
                            dg.add_at(r, c, -excess * vr * eig.vectors.get(c, k));
                        }
                    }
                }
            }
            // least-squares coordinate update: Gram system over this
            // constraint's directions
            let k = con.coords.len();
            let mut gram = Matrix::zeros(k, k);
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                for j in i..k {
                    let dot: f64 = con.mats[i]
                        .data()
                        .iter()
                        .zip(con.mats[j].data())
                        .map(|(a, b)| a * b)
                        .sum();
                    gram.set(i, j, dot);
                    gram.set(j, i, dot);
                }
                rhs[i] = con.mats[i]
                    .data()
                    .iter()
                    .zip(dg.data())
                    .map(|(a, b)| a * b)
                    .sum();
            }
            for i in 0..k {
                gram.add_at(i, i, 1e-10 * (1.0 + gram.get(i, i)));
            }
            let step = gram.cholesky().ok()?.solve_vec(&rhs);
            for (i, &p) in con.coords.iter().enumerate() {
                x[p] += step[i];
            }
        }
        if worst <= -tol {
            // margin across slacked constraints; hard ones held above
            return Some((x, -worst, sweep + 1));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::builder::ConstraintBuilder;

    // z > 0 together with 2z(1+beta) + gamma <= 0 has no solution
    fn sign_conflict_problem() -> LmiProblem {
        let mut p = LmiProblem::new();
        let z = p.add_var("z", VarKind::Scalar);
        p.add_constraint(
            ConstraintBuilder::new("decay", Sense::Leq0, vec![1])
                .scalar_term(0, 0, z, 1.01, None) // symmetrized: 2.02 z
                .const_block(0, 0, &Matrix::from_rows(&[vec![0.1]])) // + 0.2
                .build(),
        );
        p.add_constraint(
            ConstraintBuilder::new("z-pos", Sense::Geq0, vec![1])
                .scalar_term(0, 0, z, 0.5, None)
                .build(),
        );
        p
    }

    fn sign_ok_problem() -> LmiProblem {
        let mut p = LmiProblem::new();
        let z = p.add_var("z", VarKind::Scalar);
        p.add_constraint(
            ConstraintBuilder::new("decay", Sense::Leq0, vec![1])
                .scalar_term(0, 0, z, -1.0, None) // -2z
                .const_block(0, 0, &Matrix::from_rows(&[vec![0.1]])) // + 0.2
                .build(),
        );
        p.add_constraint(
            ConstraintBuilder::new("z-cap", Sense::Geq0, vec![1])
                .const_block(0, 0, &Matrix::from_rows(&[vec![10.0]])) // 20 - z >= 0
                .scalar_term(0, 0, z, -0.5, None)
                .build(),
        );
        p.add_constraint(
            ConstraintBuilder::new("z-pos", Sense::Geq0, vec![1])
                .scalar_term(0, 0, z, 0.5, None)
                .build(),
        );
        p
    }

    #[test]
    fn scalar_infeasible_by_sign() {
        let p = sign_conflict_problem();
        let sol = solve_feasibility(&p, None, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.slack < 0.0, "certified slack {}", sol.slack);
    }

    #[test]
    fn scalar_feasible_with_margin() {
        let p = sign_ok_problem();
        let sol = solve_feasibility(&p, None, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!(sol.max_residual <= -1e-7);
        let z = sol.assignment.scalar(0);
        assert!(z > 0.1 && z < 20.0, "z = {z}");
    }

    #[test]
    fn deterministic_repeat() {
        let p = sign_ok_problem();
        let a = solve_feasibility(&p, None, &SolveOptions::default()).unwrap();
        let b = solve_feasibility(&p, None, &SolveOptions::default()).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(
            a.assignment.scalar(0).to_bits(),
            b.assignment.scalar(0).to_bits()
        );
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn projection_fallback_reaches_interior() {
        let p = sign_ok_problem();
        let lowered = lower(&p).unwrap();
        let (x, margin, _) = alternating_projections(&lowered, &[0.0], 1e-7, 400).unwrap();
        assert!(margin >= 1e-7);
        assert!(x[0] > 0.0 && x[0] < 20.0);
    }

    #[test]
    fn minimize_linear_on_box() {
        // minimize a over {1/4 <= a <= 1} (box via two 1x1 cones)
        let mut p = LmiProblem::new();
        let a = p.add_var("a", VarKind::Scalar);
        p.add_constraint(
            ConstraintBuilder::new("lo", Sense::Geq0, vec![1])
                .scalar_term(0, 0, a, 0.5, None)
                .const_block(0, 0, &Matrix::from_rows(&[vec![-0.125]]))
                .build(),
        );
        p.add_constraint(
            ConstraintBuilder::new("hi", Sense::Geq0, vec![1])
                .scalar_term(0, 0, a, -0.5, None)
                .const_block(0, 0, &Matrix::from_rows(&[vec![0.5]]))
                .build(),
        );
        let mut init = p.zero_assignment();
        init.values[0] = VarValue::Scalar(0.9);
        let sol = minimize_linear(&p, &[(a, 1.0)], &init, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 0.25).abs() < 1e-5, "obj {}", sol.objective);
    }
}
