//! Assembly of the per-interval synthesis problem.
//!
//! At each switching instant the designer freezes the plant, changes
//! variables so everything becomes affine (`Z` is the inverse state
//! certificate, `W = K·Z`, `Y = L·Z` carry the controller, `Ŵ = P̂·M`,
//! `Ŷ = P̂·O` the observer), and emits one block-structured feasibility
//! problem:
//!
//! - two decay constraints keeping both closed loops contracting with a
//!   uniform margin,
//! - box/floor constraints pinning the certificates (`Z` between 0 and
//!   the inverse Lyapunov floor, `P̂` above the floor),
//! - chain constraints tying the certificates monotonically to the
//!   previous interval (absent on the first interval),
//! - norm caps on every gain, encoded with one auxiliary scalar per
//!   certificate block so the singular-value bounds become linear.
//!
//! Coupling variables exist only on the active links; removing a link
//! removes its blocks entirely.

use super::{CertPair, DesignError};
use crate::linalg::{BlockMatrix, Matrix, SymMatrix};
use crate::lmi::{
    Assignment, ConstraintBuilder, LmiProblem, Sense, VarBlockRef, VarKind, VarValue,
};
use crate::model::{DesignConfig, LinkSet, PlantSnapshot, SubsystemDims};
use std::collections::BTreeMap;

/// Relaxation applied to the certificate chain constraints so they keep a
/// usable interior even when the chain saturates; well inside the 1e-8
/// slack the schedule invariants allow per step.
pub const CHAIN_RELAX: f64 = 1e-9;
/// Fraction of the certificate box used by the first interval's state
/// certificate. Later intervals can only grow `Z`, so the first one
/// leaves headroom for the plant's time variation; tightening the box is
/// conservative and keeps the produced certificate valid for the real
/// constraint set.
pub const INITIAL_Z_HEADROOM: f64 = 0.6;

/// The assembled problem plus the variable bookkeeping needed to read a
/// solution back.
pub struct StabilityProblem {
    pub problem: LmiProblem,
    pub links: Vec<(usize, usize)>,
    pub dims: Vec<SubsystemDims>,
    var_z: usize,
    var_phat: usize,
    var_w: usize,
    var_what: usize,
    var_y: Option<usize>,
    var_yhat: Option<usize>,
    scalar_count: usize,
}

/// Everything recovered from one feasible synthesis solve.
#[derive(Clone, Debug)]
pub struct CertificateSet {
    pub z: Vec<SymMatrix>,
    pub phat: Vec<SymMatrix>,
    pub w: Vec<Matrix>,
    pub what: Vec<Matrix>,
    pub y: BTreeMap<(usize, usize), Matrix>,
    pub yhat: BTreeMap<(usize, usize), Matrix>,
    /// Interior margin achieved by the solver.
    pub slack: f64,
}

impl CertificateSet {
    /// Drop coupling blocks outside `links`, leaving everything else
    /// untouched.
    pub fn masked(&self, links: &LinkSet) -> CertificateSet {
        let mut out = self.clone();
        out.y.retain(|l, _| links.contains(l));
        out.yhat.retain(|l, _| links.contains(l));
        out
    }
}

/// Build the synthesis problem for one interval.
///
/// `prev` must be present exactly when `k >= 1`; the first interval has
/// no chain constraints.
pub fn assemble_stability_problem(
    snapshot: &PlantSnapshot,
    k: usize,
    prev: Option<&CertPair>,
    alpha: &LinkSet,
    dims: &[SubsystemDims],
    adjacency: &LinkSet,
    config: &DesignConfig,
) -> Result<StabilityProblem, DesignError> {
    if (k == 0) != prev.is_none() {
        return Err(DesignError::BadInput(
            "previous certificates must be supplied exactly for k >= 1".into(),
        ));
    }
    if !alpha.is_subset(adjacency) {
        return Err(DesignError::BadInput(
            "active links must be a subset of the plant adjacency".into(),
        ));
    }
    if let Some(p) = prev {
        if p.z.len() != dims.len() || p.phat.len() != dims.len() {
            return Err(DesignError::BadInput(
                "previous certificates do not match the subsystem count".into(),
            ));
        }
        for (i, d) in dims.iter().enumerate() {
            if p.z[i].order() != d.n || p.phat[i].order() != d.n {
                return Err(DesignError::BadInput(format!(
                    "previous certificate block {} has wrong order",
                    i + 1
                )));
            }
        }
    }

    let nsub = dims.len();
    let state_dims: Vec<usize> = dims.iter().map(|d| d.n).collect();
    let input_dims: Vec<usize> = dims.iter().map(|d| d.m).collect();
    let output_dims: Vec<usize> = dims.iter().map(|d| d.r).collect();
    let links: Vec<(usize, usize)> = alpha.iter().copied().collect();

    let mut problem = LmiProblem::new();
    let var_z = problem.add_var(
        "Z",
        VarKind::SymBlockDiag {
            dims: state_dims.clone(),
        },
    );
    let var_phat = problem.add_var(
        "Phat",
        VarKind::SymBlockDiag {
            dims: state_dims.clone(),
        },
    );
    let var_w = problem.add_var(
        "W",
        VarKind::RectBlocks {
            row_dims: input_dims.clone(),
            col_dims: state_dims.clone(),
            mask: (0..nsub).map(|i| (i, i)).collect(),
        },
    );
    let var_what = problem.add_var(
        "What",
        VarKind::RectBlocks {
            row_dims: state_dims.clone(),
            col_dims: output_dims.clone(),
            mask: (0..nsub).map(|i| (i, i)).collect(),
        },
    );
    let (var_y, var_yhat) = if links.is_empty() {
        (None, None)
    } else {
        let y = problem.add_var(
            "Y",
            VarKind::RectBlocks {
                row_dims: input_dims.clone(),
                col_dims: state_dims.clone(),
                mask: links.clone(),
            },
        );
        let yhat = problem.add_var(
            "Yhat",
            VarKind::RectBlocks {
                row_dims: state_dims.clone(),
                col_dims: output_dims.clone(),
                mask: links.clone(),
            },
        );
        (Some(y), Some(yhat))
    };

    // auxiliary scalars: controller caps need one per subsystem and one
    // per link source; observer caps one per subsystem and one per link
    // target
    let s_vars: Vec<usize> = (0..nsub)
        .map(|i| problem.add_var(format!("s:{i}"), VarKind::Scalar))
        .collect();
    let mut u_vars: BTreeMap<usize, usize> = BTreeMap::new();
    for &(_, j) in &links {
        u_vars
            .entry(j)
            .or_insert_with(|| problem.add_var(format!("u:{j}"), VarKind::Scalar));
    }
    let sh_vars: Vec<usize> = (0..nsub)
        .map(|i| problem.add_var(format!("sh:{i}"), VarKind::Scalar))
        .collect();
    let mut uh_vars: BTreeMap<usize, usize> = BTreeMap::new();
    for &(i, _) in &links {
        uh_vars
            .entry(i)
            .or_insert_with(|| problem.add_var(format!("uh:{i}"), VarKind::Scalar));
    }
    let scalar_count = s_vars.len() + u_vars.len() + sh_vars.len() + uh_vars.len();

    let eval_a: Vec<Matrix> = (0..nsub)
        .map(|i| snapshot.a.block(i, i).cloned().unwrap())
        .collect();
    let eval_b: Vec<Matrix> = (0..nsub)
        .map(|i| snapshot.b.block(i, i).cloned().unwrap())
        .collect();
    let eval_c: Vec<Matrix> = (0..nsub)
        .map(|i| snapshot.c.block(i, i).cloned().unwrap())
        .collect();

    // state decay: sym[(A+H)Z + B(W+Y) + beta∘Z] + gamma·I ⪯ 0
    {
        let mut b = ConstraintBuilder::new("decay:state", Sense::Leq0, state_dims.clone());
        for i in 0..nsub {
            b = b
                .lin_term(
                    i,
                    i,
                    var_z,
                    VarBlockRef::Sym(i),
                    Some(eval_a[i].clone()),
                    None,
                    false,
                    1.0,
                )
                .sym_term(i, i, var_z, i, config.beta[i])
                .lin_term(
                    i,
                    i,
                    var_w,
                    VarBlockRef::Rect(i, i),
                    Some(eval_b[i].clone()),
                    None,
                    false,
                    1.0,
                )
                .const_identity(i, config.gamma / 2.0);
        }
        for (&(i, j), h) in snapshot.h.blocks() {
            b = b.lin_term(
                i,
                j,
                var_z,
                VarBlockRef::Sym(j),
                Some(h.clone()),
                None,
                false,
                1.0,
            );
        }
        if let Some(y) = var_y {
            for &(i, j) in &links {
                b = b.lin_term(
                    i,
                    j,
                    y,
                    VarBlockRef::Rect(i, j),
                    Some(eval_b[i].clone()),
                    None,
                    false,
                    1.0,
                );
            }
        }
        problem.add_constraint(b.build());
    }

    // estimator decay: sym[Phat(A+H) + (What+Yhat)C + beta∘Phat] + gamma·I ⪯ 0
    {
        let mut b = ConstraintBuilder::new("decay:estimator", Sense::Leq0, state_dims.clone());
        for i in 0..nsub {
            b = b
                .lin_term(
                    i,
                    i,
                    var_phat,
                    VarBlockRef::Sym(i),
                    None,
                    Some(eval_a[i].clone()),
                    false,
                    1.0,
                )
                .sym_term(i, i, var_phat, i, config.beta[i])
                .lin_term(
                    i,
                    i,
                    var_what,
                    VarBlockRef::Rect(i, i),
                    None,
                    Some(eval_c[i].clone()),
                    false,
                    1.0,
                )
                .const_identity(i, config.gamma / 2.0);
        }
        for (&(i, j), h) in snapshot.h.blocks() {
            b = b.lin_term(
                i,
                j,
                var_phat,
                VarBlockRef::Sym(i),
                None,
                Some(h.clone()),
                false,
                1.0,
            );
        }
        if let Some(yhat) = var_yhat {
            for &(i, j) in &links {
                b = b.lin_term(
                    i,
                    j,
                    yhat,
                    VarBlockRef::Rect(i, j),
                    None,
                    Some(eval_c[j].clone()),
                    false,
                    1.0,
                );
            }
        }
        problem.add_constraint(b.build());
    }

    for i in 0..nsub {
        let n = dims[i].n;
        // 0 ≺ Z_i ⪯ eps_i⁻¹ (strictness via the slack on the lower side)
        problem.add_constraint(
            ConstraintBuilder::new(format!("z-pos:{i}"), Sense::Geq0, vec![n])
                .sym_term(0, 0, var_z, i, 0.5)
                .build(),
        );
        let z_cap = if k == 0 {
            INITIAL_Z_HEADROOM / config.epsilon[i]
        } else {
            1.0 / config.epsilon[i]
        };
        problem.add_constraint(
            ConstraintBuilder::new(format!("z-cap:{i}"), Sense::Geq0, vec![n])
                .const_identity(0, 0.5 * z_cap)
                .sym_term(0, 0, var_z, i, -0.5)
                .no_slack()
                .build(),
        );
        // Phat_i ⪰ eps_i
        problem.add_constraint(
            ConstraintBuilder::new(format!("phat-floor:{i}"), Sense::Geq0, vec![n])
                .sym_term(0, 0, var_phat, i, 0.5)
                .const_identity(0, -config.epsilon[i] / 2.0)
                .build(),
        );
        // Scale normalization: the estimator-side variables are jointly
        // ray-scalable, so without a ceiling the solve drifts to huge,
        // badly conditioned certificates. Pin the scale with the same
        // box ratio the state side has.
        problem.add_constraint(
            ConstraintBuilder::new(format!("phat-cap:{i}"), Sense::Geq0, vec![n])
                .const_identity(0, 0.5 / config.epsilon[i])
                .sym_term(0, 0, var_phat, i, -0.5)
                .no_slack()
                .build(),
        );
    }

    if let Some(p) = prev {
        for i in 0..nsub {
            let n = dims[i].n;
            let z_prev = p.z[i].to_dense().scale(-0.5);
            problem.add_constraint(
                ConstraintBuilder::new(format!("chain:z:{i}"), Sense::Geq0, vec![n])
                    .sym_term(0, 0, var_z, i, 0.5)
                    .const_block(0, 0, &z_prev)
                    .const_identity(0, CHAIN_RELAX / 2.0)
                    .no_slack()
                    .build(),
            );
            let phat_prev = p.phat[i].to_dense().scale(0.5);
            problem.add_constraint(
                ConstraintBuilder::new(format!("chain:phat:{i}"), Sense::Geq0, vec![n])
                    .const_block(0, 0, &phat_prev)
                    .sym_term(0, 0, var_phat, i, -0.5)
                    .const_identity(0, CHAIN_RELAX / 2.0)
                    .no_slack()
                    .build(),
            );
        }
    }

    // local controller caps: Z_i ⪰ s_i·I and σ_max(W_i) ≤ kappa_i·s_i
    for i in 0..nsub {
        let (n, m) = (dims[i].n, dims[i].m);
        problem.add_constraint(
            ConstraintBuilder::new(format!("kbound:floor:{i}"), Sense::Geq0, vec![n])
                .sym_term(0, 0, var_z, i, 0.5)
                .scalar_term(0, 0, s_vars[i], -0.5, None)
                .no_slack()
            .build(),
        );
        problem.add_constraint(
            ConstraintBuilder::new(format!("kbound:norm:{i}"), Sense::Geq0, vec![m, n])
                .scalar_term(0, 0, s_vars[i], config.kappa[i] / 2.0, None)
                .scalar_term(1, 1, s_vars[i], config.kappa[i] / 2.0, None)
                .lin_term(0, 1, var_w, VarBlockRef::Rect(i, i), None, None, false, 1.0)
                .no_slack()
            .build(),
        );
    }
    // coupling controller caps: Z_j ⪰ u_j·I and σ_max(Y_ij) ≤ iota_ij·u_j
    for (&j, &uj) in &u_vars {
        let n = dims[j].n;
        problem.add_constraint(
            ConstraintBuilder::new(format!("lbound:floor:{j}"), Sense::Geq0, vec![n])
                .sym_term(0, 0, var_z, j, 0.5)
                .scalar_term(0, 0, uj, -0.5, None)
                .no_slack()
            .build(),
        );
    }
    for &(i, j) in &links {
        let iota = config.iota[&(i, j)];
        let uj = u_vars[&j];
        problem.add_constraint(
            ConstraintBuilder::new(format!("lbound:norm:{i}:{j}"), Sense::Geq0, vec![
                dims[i].m,
                dims[j].n,
            ])
            .scalar_term(0, 0, uj, iota / 2.0, None)
            .scalar_term(1, 1, uj, iota / 2.0, None)
            .lin_term(
                0,
                1,
                var_y.unwrap(),
                VarBlockRef::Rect(i, j),
                None,
                None,
                false,
                1.0,
            )
            .no_slack()
            .build(),
        );
    }
    // local observer caps: Phat_i ⪰ sh_i·I and σ_max(What_i) ≤ mu_i·sh_i
    for i in 0..nsub {
        let (n, r) = (dims[i].n, dims[i].r);
        problem.add_constraint(
            ConstraintBuilder::new(format!("mbound:floor:{i}"), Sense::Geq0, vec![n])
                .sym_term(0, 0, var_phat, i, 0.5)
                .scalar_term(0, 0, sh_vars[i], -0.5, None)
                .no_slack()
            .build(),
        );
        problem.add_constraint(
            ConstraintBuilder::new(format!("mbound:norm:{i}"), Sense::Geq0, vec![n, r])
                .scalar_term(0, 0, sh_vars[i], config.mu[i] / 2.0, None)
                .scalar_term(1, 1, sh_vars[i], config.mu[i] / 2.0, None)
                .lin_term(
                    0,
                    1,
                    var_what,
                    VarBlockRef::Rect(i, i),
                    None,
                    None,
                    false,
                    1.0,
                )
                .no_slack()
            .build(),
        );
    }
    // coupling observer caps: Phat_i ⪰ uh_i·I and σ_max(Yhat_ij) ≤ omega_ij·uh_i
    for (&i, &uhi) in &uh_vars {
        let n = dims[i].n;
        problem.add_constraint(
            ConstraintBuilder::new(format!("obound:floor:{i}"), Sense::Geq0, vec![n])
                .sym_term(0, 0, var_phat, i, 0.5)
                .scalar_term(0, 0, uhi, -0.5, None)
                .no_slack()
            .build(),
        );
    }
    for &(i, j) in &links {
        let omega = config.omega[&(i, j)];
        let uhi = uh_vars[&i];
        problem.add_constraint(
            ConstraintBuilder::new(format!("obound:norm:{i}:{j}"), Sense::Geq0, vec![
                dims[i].n,
                dims[j].r,
            ])
            .scalar_term(0, 0, uhi, omega / 2.0, None)
            .scalar_term(1, 1, uhi, omega / 2.0, None)
            .lin_term(
                0,
                1,
                var_yhat.unwrap(),
                VarBlockRef::Rect(i, j),
                None,
                None,
                false,
                1.0,
            )
            .no_slack()
            .build(),
        );
    }

    Ok(StabilityProblem {
        problem,
        links,
        dims: dims.to_vec(),
        var_z,
        var_phat,
        var_w,
        var_what,
        var_y,
        var_yhat,
        scalar_count,
    })
}

impl StabilityProblem {
    pub fn scalar_var_count(&self) -> usize {
        self.scalar_count
    }

    pub fn var_z(&self) -> usize {
        self.var_z
    }

    pub fn var_phat(&self) -> usize {
        self.var_phat
    }

    /// Starting point for the solver. Certificates come from the warm
    /// hint when available (previous solve of a nearby problem), else
    /// from the chain anchors, else from neutral defaults; the point is
    /// nudged into the interior of the hard slabs (chain, caps, and the
    /// gain-cap encodings).
    pub fn initial_assignment(
        &self,
        prev: Option<&CertPair>,
        warm: Option<&CertificateSet>,
        config: &DesignConfig,
    ) -> Assignment {
        let mut a = self.problem.zero_assignment();
        let nsub = self.dims.len();

        let mut z: Vec<SymMatrix> = match (warm, prev) {
            (Some(w), _) => w.z.clone(),
            (None, Some(p)) => p.z.clone(),
            (None, None) => {
                let eps_max = config
                    .epsilon
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                self.dims
                    .iter()
                    .map(|d| {
                        SymMatrix::scaled_identity(d.n, 0.5 * INITIAL_Z_HEADROOM / eps_max)
                    })
                    .collect()
            }
        };
        let mut phat: Vec<SymMatrix> = match (warm, prev) {
            (Some(w), _) => w.phat.clone(),
            (None, Some(p)) => p.phat.clone(),
            (None, None) => self
                .dims
                .iter()
                .map(|d| SymMatrix::identity(d.n))
                .collect(),
        };
        if prev.is_some() {
            // step a little inside the chain and cap slabs
            let mut rho_z = f64::INFINITY;
            let mut rho_p = f64::INFINITY;
            for (i, d) in self.dims.iter().enumerate() {
                let cap_gap = SymMatrix::scaled_identity(d.n, 1.0 / config.epsilon[i])
                    .sub(&z[i])
                    .min_eig()
                    .unwrap_or(0.0);
                rho_z = rho_z.min(0.01 * cap_gap.max(0.0));
                let floor_gap = phat[i]
                    .sub(&SymMatrix::scaled_identity(d.n, config.epsilon[i]))
                    .min_eig()
                    .unwrap_or(0.0);
                rho_p = rho_p.min(0.01 * floor_gap.max(0.0));
            }
            let rho_z = rho_z.min(0.1);
            let rho_p = rho_p.min(0.1);
            for (i, d) in self.dims.iter().enumerate() {
                z[i] = z[i].add(&SymMatrix::scaled_identity(d.n, rho_z));
                phat[i] = phat[i].sub(&SymMatrix::scaled_identity(d.n, rho_p));
            }
        }

        let z_floor: Vec<f64> = z.iter().map(|m| m.min_eig().unwrap_or(0.0)).collect();
        let p_floor: Vec<f64> = phat.iter().map(|m| m.min_eig().unwrap_or(0.0)).collect();

        // gain blocks from the warm hint, dropped when they would leave
        // no room inside the cap encodings
        let mut w_init: Vec<Matrix> = (0..nsub)
            .map(|i| {
                warm.map(|w| w.w[i].clone())
                    .unwrap_or_else(|| Matrix::zeros(self.dims[i].m, self.dims[i].n))
            })
            .collect();
        let mut what_init: Vec<Matrix> = (0..nsub)
            .map(|i| {
                warm.map(|w| w.what[i].clone())
                    .unwrap_or_else(|| Matrix::zeros(self.dims[i].n, self.dims[i].r))
            })
            .collect();
        let mut y_init: std::collections::BTreeMap<(usize, usize), Matrix> = Default::default();
        let mut yhat_init: std::collections::BTreeMap<(usize, usize), Matrix> = Default::default();
        if let Some(wc) = warm {
            for &(i, j) in &self.links {
                if let Some(m) = wc.y.get(&(i, j)) {
                    y_init.insert((i, j), m.clone());
                }
                if let Some(m) = wc.yhat.get(&(i, j)) {
                    yhat_init.insert((i, j), m.clone());
                }
            }
        }

        // auxiliary scalars strictly between the norm demand and the
        // certificate floor; blocks that do not fit are zeroed
        let pick = |lo: f64, hi: f64| -> Option<f64> {
            if !(hi > 0.0) {
                return None;
            }
            if lo >= 0.95 * hi {
                return None;
            }
            let s = (lo.max(1e-12) * hi).sqrt().clamp(1e-9, 0.9 * hi);
            Some(if s > lo { s } else { 0.5 * (lo + hi) })
        };
        let sigma = |m: &Matrix| crate::linalg::max_singular_value(m).unwrap_or(f64::INFINITY);

        let mut scalar_values: std::collections::BTreeMap<String, f64> = Default::default();
        for i in 0..nsub {
            let lo = sigma(&w_init[i]) / config.kappa[i];
            let s = match pick(lo, z_floor[i]) {
                Some(s) => s,
                None => {
                    w_init[i] = Matrix::zeros(self.dims[i].m, self.dims[i].n);
                    pick(0.0, z_floor[i]).unwrap_or(1e-6)
                }
            };
            scalar_values.insert(format!("s:{i}"), s);

            let lo = sigma(&what_init[i]) / config.mu[i];
            let s = match pick(lo, p_floor[i]) {
                Some(s) => s,
                None => {
                    what_init[i] = Matrix::zeros(self.dims[i].n, self.dims[i].r);
                    pick(0.0, p_floor[i]).unwrap_or(1e-6)
                }
            };
            scalar_values.insert(format!("sh:{i}"), s);
        }
        let mut used_sources: std::collections::BTreeSet<usize> = Default::default();
        let mut used_targets: std::collections::BTreeSet<usize> = Default::default();
        for &(i, j) in &self.links {
            used_sources.insert(j);
            used_targets.insert(i);
        }
        for &j in &used_sources {
            let lo = self
                .links
                .iter()
                .filter(|&&(_, jj)| jj == j)
                .map(|&(i, jj)| {
                    y_init
                        .get(&(i, jj))
                        .map(|m| sigma(m) / config.iota[&(i, jj)])
                        .unwrap_or(0.0)
                })
                .fold(0.0f64, f64::max);
            let u = match pick(lo, z_floor[j]) {
                Some(u) => u,
                None => {
                    for &(i, jj) in &self.links {
                        if jj == j {
                            y_init.remove(&(i, jj));
                        }
                    }
                    pick(0.0, z_floor[j]).unwrap_or(1e-6)
                }
            };
            scalar_values.insert(format!("u:{j}"), u);
        }
        for &i in &used_targets {
            let lo = self
                .links
                .iter()
                .filter(|&&(ii, _)| ii == i)
                .map(|&(ii, j)| {
                    yhat_init
                        .get(&(ii, j))
                        .map(|m| sigma(m) / config.omega[&(ii, j)])
                        .unwrap_or(0.0)
                })
                .fold(0.0f64, f64::max);
            let u = match pick(lo, p_floor[i]) {
                Some(u) => u,
                None => {
                    for &(ii, j) in &self.links {
                        if ii == i {
                            yhat_init.remove(&(ii, j));
                        }
                    }
                    pick(0.0, p_floor[i]).unwrap_or(1e-6)
                }
            };
            scalar_values.insert(format!("uh:{i}"), u);
        }

        a.values[self.var_z] = VarValue::Sym(z);
        a.values[self.var_phat] = VarValue::Sym(phat);
        {
            let dims = &self.dims;
            let mut grid = BlockMatrix::new(
                dims.iter().map(|d| d.m).collect(),
                dims.iter().map(|d| d.n).collect(),
            );
            for (i, m) in w_init.into_iter().enumerate() {
                grid.set_block(i, i, m);
            }
            a.values[self.var_w] = VarValue::Blocks(grid);
            let mut grid = BlockMatrix::new(
                dims.iter().map(|d| d.n).collect(),
                dims.iter().map(|d| d.r).collect(),
            );
            for (i, m) in what_init.into_iter().enumerate() {
                grid.set_block(i, i, m);
            }
            a.values[self.var_what] = VarValue::Blocks(grid);
            if let (Some(vy), Some(vyh)) = (self.var_y, self.var_yhat) {
                let mut grid = BlockMatrix::new(
                    dims.iter().map(|d| d.m).collect(),
                    dims.iter().map(|d| d.n).collect(),
                );
                for ((i, j), m) in y_init {
                    grid.set_block(i, j, m);
                }
                a.values[vy] = VarValue::Blocks(grid);
                let mut grid = BlockMatrix::new(
                    dims.iter().map(|d| d.n).collect(),
                    dims.iter().map(|d| d.r).collect(),
                );
                for ((i, j), m) in yhat_init {
                    grid.set_block(i, j, m);
                }
                a.values[vyh] = VarValue::Blocks(grid);
            }
        }
        for (vi, spec) in self.problem.vars.iter().enumerate() {
            if matches!(spec.kind, VarKind::Scalar) {
                let value = scalar_values.get(&spec.name).copied().unwrap_or(1e-6);
                a.values[vi] = VarValue::Scalar(value);
            }
        }
        a
    }

    /// Read a solver assignment back into certificate matrices.
    pub fn extract(&self, assignment: &Assignment, slack: f64) -> CertificateSet {
        let z = assignment.sym_blocks(self.var_z).to_vec();
        let phat = assignment.sym_blocks(self.var_phat).to_vec();
        let wgrid = assignment.rect_blocks(self.var_w);
        let w: Vec<Matrix> = (0..self.dims.len())
            .map(|i| {
                wgrid
                    .block(i, i)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(self.dims[i].m, self.dims[i].n))
            })
            .collect();
        let whgrid = assignment.rect_blocks(self.var_what);
        let what: Vec<Matrix> = (0..self.dims.len())
            .map(|i| {
                whgrid
                    .block(i, i)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(self.dims[i].n, self.dims[i].r))
            })
            .collect();
        let mut y = BTreeMap::new();
        let mut yhat = BTreeMap::new();
        if let (Some(vy), Some(vyh)) = (self.var_y, self.var_yhat) {
            let ygrid = assignment.rect_blocks(vy);
            let yhgrid = assignment.rect_blocks(vyh);
            for &(i, j) in &self.links {
                y.insert(
                    (i, j),
                    ygrid
                        .block(i, j)
                        .cloned()
                        .unwrap_or_else(|| Matrix::zeros(self.dims[i].m, self.dims[j].n)),
                );
                yhat.insert(
                    (i, j),
                    yhgrid
                        .block(i, j)
                        .cloned()
                        .unwrap_or_else(|| Matrix::zeros(self.dims[i].n, self.dims[j].r)),
                );
            }
        }
        CertificateSet {
            z,
            phat,
            w,
            what,
            y,
            yhat,
            slack,
        }
    }
}

/// Dense decay matrices re-assembled from a certificate set, with the
/// coupling blocks restricted to `links`. Returned as
/// (state decay, estimator decay), both without the margin term — they
/// must be ⪯ −gamma·I for a valid certificate.
pub fn decay_matrices(
    snapshot: &PlantSnapshot,
    cert: &CertificateSet,
    links: &LinkSet,
    config: &DesignConfig,
) -> (Matrix, Matrix) {
    let nsub = cert.z.len();
    let state_dims: Vec<usize> = cert.z.iter().map(|z| z.order()).collect();
    let offsets = offsets_of(&state_dims);
    let n: usize = state_dims.iter().sum();

    let a_h = snapshot.a_plus_h();
    let z_dense = {
        let mut m = Matrix::zeros(n, n);
        for i in 0..nsub {
            paste(&mut m, offsets[i], offsets[i], &cert.z[i].to_dense());
        }
        m
    };
    let phat_dense = {
        let mut m = Matrix::zeros(n, n);
        for i in 0..nsub {
            paste(&mut m, offsets[i], offsets[i], &cert.phat[i].to_dense());
        }
        m
    };
    // W + Y (inputs × states) and What + Yhat (states × outputs)
    let input_dims: Vec<usize> = (0..nsub).map(|i| cert.w[i].rows()).collect();
    let output_dims: Vec<usize> = (0..nsub).map(|i| cert.what[i].cols()).collect();
    let in_off = offsets_of(&input_dims);
    let out_off = offsets_of(&output_dims);
    let m_total: usize = input_dims.iter().sum();
    let r_total: usize = output_dims.iter().sum();
    let mut wy = Matrix::zeros(m_total, n);
    for i in 0..nsub {
        paste(&mut wy, in_off[i], offsets[i], &cert.w[i]);
    }
    for (&(i, j), yb) in &cert.y {
        if links.contains(&(i, j)) {
            paste(&mut wy, in_off[i], offsets[j], yb);
        }
    }
    let mut wyh = Matrix::zeros(n, r_total);
    for i in 0..nsub {
        paste(&mut wyh, offsets[i], out_off[i], &cert.what[i]);
    }
    for (&(i, j), yb) in &cert.yhat {
        if links.contains(&(i, j)) {
            paste(&mut wyh, offsets[i], out_off[j], yb);
        }
    }

    let beta_z = {
        let mut m = Matrix::zeros(n, n);
        for i in 0..nsub {
            paste(
                &mut m,
                offsets[i],
                offsets[i],
                &cert.z[i].to_dense().scale(config.beta[i]),
            );
        }
        m
    };
    let beta_ph = {
        let mut m = Matrix::zeros(n, n);
        for i in 0..nsub {
            paste(
                &mut m,
                offsets[i],
                offsets[i],
                &cert.phat[i].to_dense().scale(config.beta[i]),
            );
        }
        m
    };

    let f_state = a_h
        .mul(&z_dense)
        .add(&snapshot.b.to_dense().mul(&wy))
        .add(&beta_z);
    let f_est = phat_dense
        .mul(&a_h)
        .add(&wyh.mul(&snapshot.c.to_dense()))
        .add(&beta_ph);
    (f_state.plus_transpose(), f_est.plus_transpose())
}

pub(crate) fn offsets_of(dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        out.push(acc);
        acc += d;
    }
    out
}

pub(crate) fn paste(dst: &mut Matrix, r0: usize, c0: usize, src: &Matrix) {
    for r in 0..src.rows() {
        for c in 0..src.cols() {
            dst.add_at(r0 + r, c0 + c, src.get(r, c));
        }
    }
}

/// Build the link relaxation: with every matrix frozen at `cert`, the
/// coupling contributions are scaled by one scalar per link in `[0, 1]`
/// and the two decay constraints must keep holding. Returns the problem,
/// the per-link scalar variable indices, and a strictly interior start.
pub fn assemble_relaxation(
    snapshot: &PlantSnapshot,
    cert: &CertificateSet,
    active: &LinkSet,
    config: &DesignConfig,
) -> (LmiProblem, Vec<((usize, usize), usize)>, Assignment) {
    let state_dims: Vec<usize> = cert.z.iter().map(|z| z.order()).collect();
    let offsets = offsets_of(&state_dims);
    let n: usize = state_dims.iter().sum();

    let mut problem = LmiProblem::new();
    let mut alpha_vars = Vec::new();
    for &(i, j) in active.iter() {
        let v = problem.add_var(format!("alpha:{i}:{j}"), VarKind::Scalar);
        alpha_vars.push(((i, j), v));
    }

    // frozen parts of the two decay matrices, at alpha = 0
    let none = LinkSet::new();
    let (g_state0, g_est0) = decay_matrices(snapshot, cert, &none, config);

    let mut bs = ConstraintBuilder::new("decay:state", Sense::Leq0, vec![n])
        .const_block(0, 0, &g_state0.scale(0.5))
        .const_identity(0, config.gamma / 2.0);
    let mut be = ConstraintBuilder::new("decay:estimator", Sense::Leq0, vec![n])
        .const_block(0, 0, &g_est0.scale(0.5))
        .const_identity(0, config.gamma / 2.0);
    for &((i, j), v) in &alpha_vars {
        let b_i = snapshot.b.block(i, i).unwrap();
        let c_j = snapshot.c.block(j, j).unwrap();
        let mut shape_s = Matrix::zeros(n, n);
        paste(&mut shape_s, offsets[i], offsets[j], &b_i.mul(&cert.y[&(i, j)]));
        let mut shape_e = Matrix::zeros(n, n);
        paste(
            &mut shape_e,
            offsets[i],
            offsets[j],
            &cert.yhat[&(i, j)].mul(c_j),
        );
        bs = bs.scalar_term(0, 0, v, 1.0, Some(shape_s));
        be = be.scalar_term(0, 0, v, 1.0, Some(shape_e));
    }
    problem.add_constraint(bs.build());
    problem.add_constraint(be.build());
    for &((i, j), v) in &alpha_vars {
        problem.add_constraint(
            ConstraintBuilder::new(format!("alpha-lo:{i}:{j}"), Sense::Geq0, vec![1])
                .scalar_term(0, 0, v, 0.5, None)
                .build(),
        );
        problem.add_constraint(
            ConstraintBuilder::new(format!("alpha-hi:{i}:{j}"), Sense::Geq0, vec![1])
                .const_block(0, 0, &Matrix::from_rows(&[vec![0.5]]))
                .scalar_term(0, 0, v, -0.5, None)
                .build(),
        );
    }

    let mut init = problem.zero_assignment();
    for &(_, v) in &alpha_vars {
        init.values[v] = VarValue::Scalar(1.0 - 1e-6);
    }
    (problem, alpha_vars, init)
}
