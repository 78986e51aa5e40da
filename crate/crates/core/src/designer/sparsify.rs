//! Link pruning for the control network.
//!
//! Three strategies share one contract: find a set of directed links
//! (a subset of the plant adjacency) for which the per-interval synthesis
//! problem is feasible, preferring fewer links.
//!
//! - linear search: solve at the current link set, relax the binary link
//!   indicators to `[0, 1]` with all matrices frozen, drop the link with
//!   the smallest nonzero relaxed value, repeat until infeasible and
//!   return the last feasible set;
//! - threshold: one relaxation, then a bisection for the largest cutoff
//!   on the relaxed values whose surviving link set still satisfies the
//!   frozen decay constraints;
//! - exhaustive: try every subset by increasing cardinality (the optimum,
//!   exponential in the link count and guarded accordingly).

use super::assemble::{
    assemble_relaxation, assemble_stability_problem, decay_matrices, CertificateSet,
};
use super::{CertPair, DesignError};
use crate::linalg::SymMatrix;
use crate::lmi::{minimize_linear, solve_feasibility_tilted, SolveOptions, SolveStatus};
use crate::model::{DesignConfig, LinkSet, PlantSnapshot, SubsystemDims};
use std::collections::BTreeMap;

/// Relaxed link values at or below this are treated as zero.
pub const ALPHA_ZERO_TOL: f64 = 1e-6;
/// Strength of the certificate-conservation preference applied after the
/// feasibility decision.
const CONSERVE_TILT: f64 = 1e5;
/// Cap on the adjacency size for the exhaustive strategy.
pub const EXHAUSTIVE_MAX_LINKS: usize = 12;

/// Pruning strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    LinearSearch,
    Threshold,
    Exhaustive,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::LinearSearch => "linear-search",
            Variant::Threshold => "threshold",
            Variant::Exhaustive => "exhaustive",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear-search" => Ok(Variant::LinearSearch),
            "threshold" => Ok(Variant::Threshold),
            "exhaustive" => Ok(Variant::Exhaustive),
            other => Err(format!(
                "unknown variant '{other}' (expected linear-search | threshold | exhaustive)"
            )),
        }
    }
}

/// What a pruning run did and decided.
#[derive(Clone, Debug)]
pub struct SparsifyReport {
    pub alpha_dagger: LinkSet,
    pub link_count: usize,
    /// Number of feasibility decisions taken (full solves, plus the
    /// frozen-matrix cutoff checks of the threshold strategy).
    pub solve_count: usize,
    pub variant: Variant,
    /// Relaxed link values from the last relaxation solve.
    pub relaxed_alpha: BTreeMap<(usize, usize), f64>,
}

/// Report plus the certificate backing the selected link set.
#[derive(Clone, Debug)]
pub struct SparsifyOutcome {
    pub report: SparsifyReport,
    pub cert: CertificateSet,
}

/// Shared inputs of one design iteration.
#[derive(Clone, Copy)]
pub struct IterationContext<'a> {
    pub k: usize,
    pub snapshot: &'a PlantSnapshot,
    pub prev: Option<&'a CertPair>,
    /// Certificates from a nearby solve, used purely as a starting point.
    pub warm: Option<&'a CertificateSet>,
    pub dims: &'a [SubsystemDims],
    pub adjacency: &'a LinkSet,
    pub config: &'a DesignConfig,
}

impl<'a> IterationContext<'a> {
    fn solver_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.config.solver_tol,
            max_newton_iters: self.config.max_solver_iters,
            ..SolveOptions::default()
        }
    }
}

enum Attempt {
    Feasible(CertificateSet),
    Infeasible { certified_slack: f64 },
}

fn attempt_with(
    ctx: &IterationContext,
    links: &LinkSet,
    warm: Option<&CertificateSet>,
) -> Result<Attempt, DesignError> {
    let sp = assemble_stability_problem(
        ctx.snapshot,
        ctx.k,
        ctx.prev,
        links,
        ctx.dims,
        ctx.adjacency,
        ctx.config,
    )?;
    let opts = ctx.solver_options();
    // Prefer large estimator certificates always, and small state
    // certificates once a chain exists: both then park against their
    // monotonicity walls with maximal room for the following intervals.
    // The first interval leaves the state certificate untilted so it
    // settles into a well-conditioned shape with room to grow.
    let mut tilt = vec![(sp.var_phat(), -CONSERVE_TILT)];
    if ctx.k >= 1 {
        tilt.push((sp.var_z(), CONSERVE_TILT));
    }
    let init = sp.initial_assignment(ctx.prev, warm, ctx.config);
    let solved = match solve_feasibility_tilted(&sp.problem, Some(&init), &opts, &tilt) {
        Ok(sol) => sol,
        Err(crate::lmi::LmiError::InvalidInput(_)) if warm.is_some() => {
            // warm start landed outside a hard slab; retry cold
            let cold = sp.initial_assignment(ctx.prev, None, ctx.config);
            solve_feasibility_tilted(&sp.problem, Some(&cold), &opts, &tilt)
                .map_err(DesignError::Lmi)?
        }
        Err(e) => return Err(DesignError::Lmi(e)),
    };
    match solved.status {
        SolveStatus::Feasible => Ok(Attempt::Feasible(
            sp.extract(&solved.assignment, solved.slack),
        )),
        _ => Ok(Attempt::Infeasible {
            certified_slack: solved.slack,
        }),
    }
}

fn attempt(ctx: &IterationContext, links: &LinkSet) -> Result<Attempt, DesignError> {
    attempt_with(ctx, links, ctx.warm)
}

fn solve_relaxation_values(
    ctx: &IterationContext,
    cert: &CertificateSet,
    active: &LinkSet,
) -> Result<BTreeMap<(usize, usize), f64>, DesignError> {
    if active.is_empty() {
        return Ok(BTreeMap::new());
    }
    let (problem, alpha_vars, init) =
        assemble_relaxation(ctx.snapshot, cert, active, ctx.config);
    let obj: Vec<(usize, f64)> = alpha_vars.iter().map(|&(_, v)| (v, 1.0)).collect();
    let sol =
        minimize_linear(&problem, &obj, &init, &ctx.solver_options()).map_err(DesignError::Lmi)?;
    Ok(alpha_vars
        .into_iter()
        .map(|(l, v)| (l, sol.assignment.scalar(v)))
        .collect())
}

/// Frozen-matrix feasibility of a masked link set: both decay matrices
/// keep their full margin (up to rounding noise).
fn masked_decay_ok(ctx: &IterationContext, cert: &CertificateSet, links: &LinkSet) -> bool {
    let (g_state, g_est) = decay_matrices(ctx.snapshot, cert, links, ctx.config);
    let tol_s = 1e-9 * g_state.frobenius_norm().max(1.0);
    let tol_e = 1e-9 * g_est.frobenius_norm().max(1.0);
    let ls = match SymMatrix::from_dense_symmetrized(&g_state).max_eig() {
        Ok(v) => v,
        Err(_) => return false,
    };
    let le = match SymMatrix::from_dense_symmetrized(&g_est).max_eig() {
        Ok(v) => v,
        Err(_) => return false,
    };
    ls <= -ctx.config.gamma + tol_s && le <= -ctx.config.gamma + tol_e
}

fn outcome(
    variant: Variant,
    links: LinkSet,
    cert: CertificateSet,
    solve_count: usize,
    relaxed: BTreeMap<(usize, usize), f64>,
) -> SparsifyOutcome {
    let cert = cert.masked(&links);
    SparsifyOutcome {
        report: SparsifyReport {
            link_count: links.len(),
            alpha_dagger: links,
            solve_count,
            variant,
            relaxed_alpha: relaxed,
        },
        cert,
    }
}

/// Relaxation-guided greedy pruning with a linear search over the sorted
/// relaxed values.
pub fn sparsify_linear_search(ctx: &IterationContext) -> Result<SparsifyOutcome, DesignError> {
    let mut active = ctx.adjacency.clone();
    let mut best: Option<(LinkSet, CertificateSet)> = None;
    let mut solve_count = 0usize;
    let mut relaxed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    loop {
        let round_warm = best.as_ref().map(|(_, c)| c).or(ctx.warm);
        match attempt_with(ctx, &active, round_warm)? {
            Attempt::Feasible(cert) => {
                solve_count += 1;
                best = Some((active.clone(), cert));
            }
            Attempt::Infeasible { certified_slack } => {
                solve_count += 1;
                match best {
                    None => {
                        return Err(DesignError::Infeasible {
                            k: ctx.k,
                            t_k: ctx.snapshot.t,
                            certified_slack,
                        })
                    }
                    Some(_) => break,
                }
            }
        }
        if active.is_empty() {
            break;
        }
        let cert = &best.as_ref().unwrap().1;
        let alphas = solve_relaxation_values(ctx, cert, &active)?;
        relaxed = alphas.clone();
        let mut smallest: Option<((usize, usize), f64)> = None;
        for (&l, &v) in &alphas {
            if v > ALPHA_ZERO_TOL && smallest.map_or(true, |(_, sv)| v < sv) {
                smallest = Some((l, v));
            }
        }
        match smallest {
            None => {
                // every relaxed value vanished: the couplings are not
                // needed at the frozen matrices
                let (kept, cert) = best.take().unwrap();
                let masked = cert.masked(&LinkSet::new());
                if masked_decay_ok(ctx, &masked, &LinkSet::new()) {
                    best = Some((LinkSet::new(), masked));
                } else {
                    best = Some((kept, cert));
                }
                break;
            }
            Some((link, _)) => {
                active.remove(&link);
            }
        }
    }
    let (links, cert) = best.expect("loop establishes a feasible set before breaking");
    Ok(outcome(Variant::LinearSearch, links, cert, solve_count, relaxed))
}

/// One relaxation followed by a bisection on the cutoff value.
pub fn sparsify_threshold(ctx: &IterationContext) -> Result<SparsifyOutcome, DesignError> {
    let active = ctx.adjacency.clone();
    let mut solve_count = 1usize;
    let cert = match attempt(ctx, &active)? {
        Attempt::Feasible(cert) => cert,
        Attempt::Infeasible { certified_slack } => {
            return Err(DesignError::Infeasible {
                k: ctx.k,
                t_k: ctx.snapshot.t,
                certified_slack,
            })
        }
    };
    if active.is_empty() {
        return Ok(outcome(
            Variant::Threshold,
            active,
            cert,
            solve_count,
            BTreeMap::new(),
        ));
    }
    let alphas = solve_relaxation_values(ctx, &cert, &active)?;
    let mut values: Vec<f64> = alphas
        .values()
        .copied()
        .filter(|&v| v > ALPHA_ZERO_TOL)
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    if values.is_empty() {
        let masked = cert.masked(&LinkSet::new());
        if masked_decay_ok(ctx, &masked, &LinkSet::new()) {
            return Ok(outcome(
                Variant::Threshold,
                LinkSet::new(),
                masked,
                solve_count,
                alphas,
            ));
        }
        return Ok(outcome(Variant::Threshold, active, cert, solve_count, alphas));
    }

    let set_for = |tau: f64| -> LinkSet {
        LinkSet::from_iter(
            alphas
                .iter()
                .filter(|&(_, &v)| v >= tau)
                .map(|(&l, _)| l),
        )
    };
    let mut checks = 0usize;
    let mut feas = |tau: f64| -> bool {
        checks += 1;
        let links = set_for(tau);
        masked_decay_ok(ctx, &cert.masked(&links), &links)
    };

    let chosen = if !feas(values[0]) {
        // even the full nonzero set fails at the frozen matrices: keep
        // everything from the feasible solve
        None
    } else if values.len() == 1 || feas(values[values.len() - 1]) {
        Some(values[values.len() - 1])
    } else {
        // invariant: values[lo] feasible, values[hi] infeasible
        let mut lo = 0usize;
        let mut hi = values.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if feas(values[mid]) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(values[lo])
    };
    solve_count += checks;
    match chosen {
        Some(tau) => {
            let links = set_for(tau);
            Ok(outcome(Variant::Threshold, links, cert, solve_count, alphas))
        }
        None => Ok(outcome(Variant::Threshold, active, cert, solve_count, alphas)),
    }
}

/// Optimal pruning by subset enumeration in increasing cardinality.
/// Candidates of equal cardinality may be solved on `jobs` threads; the
/// lexicographically first feasible subset wins either way.
pub fn sparsify_exhaustive(
    ctx: &IterationContext,
    jobs: usize,
) -> Result<SparsifyOutcome, DesignError> {
    let links: Vec<(usize, usize)> = ctx.adjacency.iter().copied().collect();
    if links.len() > EXHAUSTIVE_MAX_LINKS {
        return Err(DesignError::AdjacencyTooLarge {
            links: links.len(),
            max: EXHAUSTIVE_MAX_LINKS,
        });
    }
    let mut solve_count = 0usize;
    let mut full_slack = f64::NAN;
    for count in 0..=links.len() {
        let combos = combinations(links.len(), count);
        let attempts = solve_level(ctx, &links, &combos, jobs)?;
        solve_count += attempts.len();
        for (combo, att) in combos.iter().zip(attempts) {
            match att {
                Attempt::Feasible(cert) => {
                    let chosen = LinkSet::from_iter(combo.iter().map(|&i| links[i]));
                    return Ok(outcome(
                        Variant::Exhaustive,
                        chosen,
                        cert,
                        solve_count,
                        BTreeMap::new(),
                    ));
                }
                Attempt::Infeasible { certified_slack } => {
                    if count == links.len() {
                        full_slack = certified_slack;
                    }
                }
            }
        }
    }
    Err(DesignError::Infeasible {
        k: ctx.k,
        t_k: ctx.snapshot.t,
        certified_slack: full_slack,
    })
}

fn solve_level(
    ctx: &IterationContext,
    links: &[(usize, usize)],
    combos: &[Vec<usize>],
    jobs: usize,
) -> Result<Vec<Attempt>, DesignError> {
    let solve_one = |combo: &Vec<usize>| -> Result<Attempt, DesignError> {
        let subset = LinkSet::from_iter(combo.iter().map(|&i| links[i]));
        attempt(ctx, &subset)
    };
    if jobs <= 1 || combos.len() <= 1 {
        return combos.iter().map(solve_one).collect();
    }
    let chunk = combos.len().div_ceil(jobs);
    let mut results: Vec<Option<Result<Attempt, DesignError>>> = Vec::new();
    results.resize_with(combos.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (ci, chunk_combos) in combos.chunks(chunk).enumerate() {
            handles.push(scope.spawn(move || {
                let mut out = Vec::with_capacity(chunk_combos.len());
                for combo in chunk_combos {
                    out.push(solve_one(combo));
                }
                (ci, out)
            }));
        }
        for h in handles {
            let (ci, out) = h.join().expect("solver thread panicked");
            for (off, res) in out.into_iter().enumerate() {
                results[ci * chunk + off] = Some(res);
            }
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every candidate solved"))
        .collect()
}

/// k-subsets of {0, .., n-1} in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        if k == 0 {
            break;
        }
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// Dispatch by variant.
pub fn sparsify(
    ctx: &IterationContext,
    variant: Variant,
    jobs: usize,
) -> Result<SparsifyOutcome, DesignError> {
    match variant {
        Variant::LinearSearch => sparsify_linear_search(ctx),
        Variant::Threshold => sparsify_threshold(ctx),
        Variant::Exhaustive => sparsify_exhaustive(ctx, jobs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_order() {
        assert_eq!(combinations(3, 0), vec![vec![]]);
        assert_eq!(combinations(3, 1), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(
            combinations(4, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(combinations(2, 2), vec![vec![0, 1]]);
    }
}
