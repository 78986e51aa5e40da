//! The outer switching loop: design gains at each instant, hold them for
//! the certified interval, advance, and chain the certificates.

use super::gains::{recover_gains, switching_time};
use super::assemble::CertificateSet;
use super::sparsify::{
    sparsify, sparsify_exhaustive, sparsify_linear_search, IterationContext, SparsifyOutcome,
    SparsifyReport, Variant,
};
use super::{CertPair, DesignError};
use crate::linalg::BlockMatrix;
use crate::model::{DesignConfig, GainScheduleEntry, Plant};
use log::{debug, info};

/// A finished (or partially finished) design run.
#[derive(Clone, Debug, Default)]
pub struct DesignRun {
    pub entries: Vec<GainScheduleEntry>,
    pub reports: Vec<SparsifyReport>,
}

impl DesignRun {
    pub fn covers(&self, t_end: f64) -> bool {
        self.entries
            .last()
            .map(|e| e.t_end() >= t_end)
            .unwrap_or(false)
    }

    pub fn min_interval(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.t_len)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Abort report: whatever was designed before the failure plus the cause.
#[derive(Debug)]
pub struct DesignAbort {
    pub partial: DesignRun,
    pub error: DesignError,
}

impl std::fmt::Display for DesignAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (schedule covers [0, {:.6}) in {} intervals)",
            self.error,
            self.partial
                .entries
                .last()
                .map(|e| e.t_end())
                .unwrap_or(0.0),
            self.partial.entries.len()
        )
    }
}

impl std::error::Error for DesignAbort {}

fn build_entry(
    plant: &Plant,
    config: &DesignConfig,
    k: usize,
    t_k: f64,
    outcome: &SparsifyOutcome,
) -> Result<(GainScheduleEntry, f64), DesignError> {
    let gains = recover_gains(&outcome.cert, config)?;
    let snapshot = plant.aggregate(t_k);
    let t_len = switching_time(
        &snapshot,
        &outcome.cert,
        &outcome.report.alpha_dagger,
        config,
        plant.lipschitz(),
    )?;
    let mut l_gain = BlockMatrix::new(plant.input_dims(), plant.state_dims());
    for (&(i, j), m) in &gains.l {
        l_gain.set_block(i, j, m.clone());
    }
    let mut o_gain = BlockMatrix::new(plant.state_dims(), plant.output_dims());
    for (&(i, j), m) in &gains.o {
        o_gain.set_block(i, j, m.clone());
    }
    let entry = GainScheduleEntry {
        k,
        t_k,
        t_len,
        alpha: outcome.report.alpha_dagger.clone(),
        k_gain: gains.k,
        l_gain,
        m_gain: gains.m,
        o_gain,
        z: outcome.cert.z.clone(),
        phat: outcome.cert.phat.clone(),
    };
    Ok((entry, t_len))
}

/// Design a gain schedule covering `[0, t_end]` with the chosen pruning
/// strategy. On failure the partial schedule computed so far is returned
/// with the diagnostic.
pub fn run_design(
    plant: &Plant,
    config: &DesignConfig,
    t_end: f64,
    variant: Variant,
    jobs: usize,
) -> Result<DesignRun, DesignAbort> {
    let mut run = DesignRun::default();
    if let Err(e) = preflight(plant, config, t_end) {
        return Err(DesignAbort {
            partial: run,
            error: e,
        });
    }
    let dims = plant.dims();
    let adjacency = plant.adjacency();
    let reuse_across_time = plant.lipschitz().is_zero() && plant.is_time_invariant();
    let mut prev: Option<CertPair> = None;
    let mut warm: Option<CertificateSet> = None;
    let mut t = 0.0;
    let mut k = 0usize;
    while t < t_end {
        if reuse_across_time && k >= 1 {
            // time-invariant plant: the previous certificate and gains
            // solve the same problem at every instant
            let mut entry = run.entries[k - 1].clone();
            entry.k = k;
            entry.t_k = t;
            let t_len = entry.t_len;
            run.reports.push(run.reports[k - 1].clone());
            run.entries.push(entry);
            t += t_len;
            k += 1;
            continue;
        }
        let snapshot = plant.aggregate(t);
        let ctx = IterationContext {
            k,
            snapshot: &snapshot,
            prev: prev.as_ref(),
            warm: warm.as_ref(),
            dims: &dims,
            adjacency: &adjacency,
            config,
        };
        let step = sparsify(&ctx, variant, jobs)
            .and_then(|outcome| build_entry(plant, config, k, t, &outcome).map(|e| (outcome, e)));
        match step {
            Ok((outcome, (entry, t_len))) => {
                info!(
                    "interval {k}: t = {t:.4}, length {t_len:.4}, links {} ({} solves)",
                    outcome.report.alpha_dagger,
                    outcome.report.solve_count
                );
                prev = Some(CertPair {
                    z: entry.z.clone(),
                    phat: entry.phat.clone(),
                });
                warm = Some(outcome.cert);
                run.reports.push(outcome.report);
                run.entries.push(entry);
                t += t_len;
                k += 1;
            }
            Err(error) => {
                return Err(DesignAbort {
                    partial: run,
                    error,
                });
            }
        }
        if k > 2_000_000 {
            return Err(DesignAbort {
                partial: run,
                error: DesignError::BadInput(
                    "interval count exploded; interval lengths are degenerate".into(),
                ),
            });
        }
    }
    Ok(run)
}

/// One row of the heuristic-versus-optimal link comparison.
#[derive(Clone, Debug)]
pub struct CompareRow {
    pub k: usize,
    pub t_k: f64,
    pub heuristic_links: usize,
    pub exhaustive_links: usize,
}

/// Run the linear-search design and, at every instant of its switching
/// grid, also solve the exhaustive pruning against the same previous
/// certificates. The chain advances with the heuristic solution, so the
/// exhaustive count at each row is the optimum of the very problem the
/// heuristic solved.
pub fn run_compare(
    plant: &Plant,
    config: &DesignConfig,
    t_end: f64,
    jobs: usize,
) -> Result<(DesignRun, Vec<CompareRow>), DesignAbort> {
    let mut run = DesignRun::default();
    let mut rows = Vec::new();
    if let Err(e) = preflight(plant, config, t_end) {
        return Err(DesignAbort {
            partial: run,
            error: e,
        });
    }
    let dims = plant.dims();
    let adjacency = plant.adjacency();
    if adjacency.len() > super::sparsify::EXHAUSTIVE_MAX_LINKS {
        return Err(DesignAbort {
            partial: run,
            error: DesignError::AdjacencyTooLarge {
                links: adjacency.len(),
                max: super::sparsify::EXHAUSTIVE_MAX_LINKS,
            },
        });
    }
    let mut prev: Option<CertPair> = None;
    let mut warm: Option<CertificateSet> = None;
    let mut t = 0.0;
    let mut k = 0usize;
    while t < t_end {
        let snapshot = plant.aggregate(t);
        let ctx = IterationContext {
            k,
            snapshot: &snapshot,
            prev: prev.as_ref(),
            warm: warm.as_ref(),
            dims: &dims,
            adjacency: &adjacency,
            config,
        };
        let step = sparsify_linear_search(&ctx).and_then(|heuristic| {
            let optimal = sparsify_exhaustive(&ctx, jobs)?;
            let built = build_entry(plant, config, k, t, &heuristic)?;
            Ok((heuristic, optimal, built))
        });
        match step {
            Ok((heuristic, optimal, (entry, t_len))) => {
                debug!(
                    "compare {k}: heuristic {} vs optimal {}",
                    heuristic.report.link_count, optimal.report.link_count
                );
                rows.push(CompareRow {
                    k,
                    t_k: t,
                    heuristic_links: heuristic.report.link_count,
                    exhaustive_links: optimal.report.link_count,
                });
                prev = Some(CertPair {
                    z: entry.z.clone(),
                    phat: entry.phat.clone(),
                });
                warm = Some(heuristic.cert.clone());
                run.reports.push(heuristic.report);
                run.entries.push(entry);
                t += t_len;
                k += 1;
            }
            Err(error) => {
                return Err(DesignAbort {
                    partial: run,
                    error,
                });
            }
        }
    }
    Ok((run, rows))
}

fn preflight(plant: &Plant, config: &DesignConfig, t_end: f64) -> Result<(), DesignError> {
    if !(t_end > 0.0) {
        return Err(DesignError::BadInput("t_end must be positive".into()));
    }
    config.validate(plant)?;
    Ok(())
}
