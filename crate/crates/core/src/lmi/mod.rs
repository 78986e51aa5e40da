//! Block-structured affine matrix-inequality problems and their solver.
//!
//! A problem is a set of matrix variables (symmetric block-diagonal,
//! masked rectangular block grids, scalars) together with constraints of
//! the form `affine(vars) ⪯ 0` or `⪰ 0`. [`solve_feasibility`] decides
//! strict feasibility through slack maximization and returns an interior
//! assignment or an infeasibility certificate; [`check_solution`]
//! re-evaluates residuals through the symbolic assembly path, independent
//! of the solver internals.

pub mod builder;
mod problem;
mod solver;

pub use builder::ConstraintBuilder;
pub use problem::{
    debug_dump, AffineConstraint, Assignment, ConstTerm, ConstraintResidual, LinTerm, LmiError,
    LmiProblem, Sense, VarBlockRef, VarKind, VarSpec, VarValue,
};
pub use solver::{
    minimize_linear, solve_feasibility, solve_feasibility_tilted, LinearSolution, LmiSolution,
    SolveOptions, SolveStatus,
};

/// Per-constraint residuals of an assignment: the signed extreme
/// eigenvalue of every assembled constraint matrix (most positive
/// eigenvalue for `⪯ 0`, sign-flipped minimum for `⪰ 0`). Nonpositive
/// residuals mean the constraint is satisfied.
pub fn check_solution(
    problem: &LmiProblem,
    assignment: &Assignment,
) -> Result<Vec<ConstraintResidual>, LmiError> {
    problem.residuals(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, SymMatrix};
    use crate::rng::SplitMix64;

    fn small_sym_problem() -> (LmiProblem, usize) {
        let mut p = LmiProblem::new();
        let z = p.add_var(
            "Z",
            VarKind::SymBlockDiag {
                dims: vec![2, 1],
            },
        );
        // Z ⪰ 0 blockwise
        for b in 0..2 {
            let d = if b == 0 { 2 } else { 1 };
            p.add_constraint(
                ConstraintBuilder::new(format!("pos:{b}"), Sense::Geq0, vec![d])
                    .sym_term(0, 0, z, b, 0.5)
                    .build(),
            );
        }
        // cap: 3I - Z ⪰ 0
        for b in 0..2 {
            let d = if b == 0 { 2 } else { 1 };
            p.add_constraint(
                ConstraintBuilder::new(format!("cap:{b}"), Sense::Geq0, vec![d])
                    .const_identity(0, 1.5)
                    .sym_term(0, 0, z, b, -0.5)
                    .build(),
            );
        }
        (p, z)
    }

    #[test]
    fn feasible_solution_passes_check() {
        let (p, _) = small_sym_problem();
        let sol = solve_feasibility(&p, None, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        let residuals = check_solution(&p, &sol.assignment).unwrap();
        for r in &residuals {
            assert!(r.residual <= 1e-7, "{}: {}", r.id, r.residual);
        }
    }

    #[test]
    fn violated_assignment_flags_positivity() {
        let (p, _) = small_sym_problem();
        let mut a = p.zero_assignment();
        a.values[0] = VarValue::Sym(vec![
            SymMatrix::scaled_identity(2, -1.0),
            SymMatrix::scaled_identity(1, -1.0),
        ]);
        let residuals = check_solution(&p, &a).unwrap();
        let pos0 = residuals.iter().find(|r| r.id == "pos:0").unwrap();
        assert!(pos0.residual > 0.9, "expected violation, got {}", pos0.residual);
        let cap0 = residuals.iter().find(|r| r.id == "cap:0").unwrap();
        assert!(cap0.residual < 0.0);
    }

    #[test]
    fn residuals_match_direct_reassembly() {
        // random assignment on a randomly built problem: residuals agree
        // with a by-hand dense assembly of each constraint
        let mut rng = SplitMix64::new(5);
        let mut p = LmiProblem::new();
        let z = p.add_var("Z", VarKind::SymBlockDiag { dims: vec![3] });
        let w = p.add_var(
            "W",
            VarKind::RectBlocks {
                row_dims: vec![2],
                col_dims: vec![3],
                mask: vec![(0, 0)],
            },
        );
        let mut b = Matrix::zeros(3, 2);
        for r in 0..3 {
            for c in 0..2 {
                b.set(r, c, rng.uniform(-1.0, 1.0));
            }
        }
        let mut a_mat = Matrix::zeros(3, 3);
        for r in 0..3 {
            for c in 0..3 {
                a_mat.set(r, c, rng.uniform(-1.0, 1.0));
            }
        }
        // G = sym(A Z + B W) + I
        p.add_constraint(
            ConstraintBuilder::new("combo", Sense::Leq0, vec![3])
                .lin_term(0, 0, z, VarBlockRef::Sym(0), Some(a_mat.clone()), None, false, 1.0)
                .lin_term(0, 0, w, VarBlockRef::Rect(0, 0), Some(b.clone()), None, false, 1.0)
                .const_identity(0, 0.5)
                .build(),
        );
        let mut zval = SymMatrix::zeros(3);
        for r in 0..3 {
            for c in 0..=r {
                zval.set(r, c, rng.uniform(-1.0, 1.0));
            }
        }
        let mut wval = Matrix::zeros(2, 3);
        for r in 0..2 {
            for c in 0..3 {
                wval.set(r, c, rng.uniform(-1.0, 1.0));
            }
        }
        let mut assignment = p.zero_assignment();
        assignment.values[0] = VarValue::Sym(vec![zval.clone()]);
        let mut grid = crate::linalg::BlockMatrix::new(vec![2], vec![3]);
        grid.set_block(0, 0, wval.clone());
        assignment.values[1] = VarValue::Blocks(grid);

        let reported = check_solution(&p, &assignment).unwrap()[0].residual;

        let az = a_mat.mul(&zval.to_dense());
        let bw = b.mul(&wval);
        let e = az.add(&bw).add(&Matrix::identity(3).scale(0.5));
        let g = e.plus_transpose();
        let expected = SymMatrix::from_dense_symmetrized(&g).max_eig().unwrap();
        assert!(
            (reported - expected).abs() <= 1e-10 * expected.abs().max(1.0),
            "reported {reported} vs direct {expected}"
        );
    }

    #[test]
    fn blockwise_solutions_concatenate() {
        // two decoupled copies solved separately concatenate into the
        // joint problem with the same residual profile
        let (p1, _) = small_sym_problem();
        let sol1 = solve_feasibility(&p1, None, &SolveOptions::default()).unwrap();
        let r1 = check_solution(&p1, &sol1.assignment)
            .unwrap()
            .into_iter()
            .map(|r| r.residual)
            .fold(f64::NEG_INFINITY, f64::max);

        // joint problem: same structure twice
        let mut joint = LmiProblem::new();
        let za = joint.add_var("Za", VarKind::SymBlockDiag { dims: vec![2, 1] });
        let zb = joint.add_var("Zb", VarKind::SymBlockDiag { dims: vec![2, 1] });
        for (tag, z) in [("a", za), ("b", zb)] {
            for b in 0..2usize {
                let d = if b == 0 { 2 } else { 1 };
                joint.add_constraint(
                    ConstraintBuilder::new(format!("pos:{tag}{b}"), Sense::Geq0, vec![d])
                        .sym_term(0, 0, z, b, 0.5)
                        .build(),
                );
                joint.add_constraint(
                    ConstraintBuilder::new(format!("cap:{tag}{b}"), Sense::Geq0, vec![d])
                        .const_identity(0, 1.5)
                        .sym_term(0, 0, z, b, -0.5)
                        .build(),
                );
            }
        }
        let mut merged = joint.zero_assignment();
        merged.values[0] = sol1.assignment.values[0].clone();
        merged.values[1] = sol1.assignment.values[0].clone();
        let joint_res = check_solution(&joint, &merged).unwrap();
        let worst = joint_res
            .iter()
            .map(|r| r.residual)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((worst - r1).abs() <= 1e-12);
    }

    #[test]
    fn infeasibility_is_monotone_under_added_constraints() {
        let mut p = LmiProblem::new();
        let z = p.add_var("z", VarKind::Scalar);
        // z >= 1 and z <= -1: infeasible
        p.add_constraint(
            ConstraintBuilder::new("ge1", Sense::Geq0, vec![1])
                .scalar_term(0, 0, z, 0.5, None)
                .const_block(0, 0, &Matrix::from_rows(&[vec![-0.5]]))
                .build(),
        );
        p.add_constraint(
            ConstraintBuilder::new("leM1", Sense::Leq0, vec![1])
                .scalar_term(0, 0, z, 0.5, None)
                .const_block(0, 0, &Matrix::from_rows(&[vec![0.5]]))
                .build(),
        );
        let sol = solve_feasibility(&p, None, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        // add more constraints: still infeasible
        for extra in 0..3 {
            let mut p2 = p.clone();
            p2.add_constraint(
                ConstraintBuilder::new(format!("extra{extra}"), Sense::Leq0, vec![1])
                    .scalar_term(0, 0, z, 0.5 * (extra as f64 + 1.0), None)
                    .const_block(0, 0, &Matrix::from_rows(&[vec![1.0]]))
                    .build(),
            );
            let sol2 = solve_feasibility(&p2, None, &SolveOptions::default()).unwrap();
            assert_eq!(sol2.status, SolveStatus::Infeasible);
        }
    }

    #[test]
    fn interior_margin_when_slack_large() {
        let (p, _) = small_sym_problem();
        let opts = SolveOptions::default();
        let sol = solve_feasibility(&p, None, &opts).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!(sol.slack >= opts.tol);
        // margin at least tol/2 on every constraint
        for r in check_solution(&p, &sol.assignment).unwrap() {
            assert!(r.residual <= -opts.tol / 2.0, "{}: {}", r.id, r.residual);
        }
    }

    #[test]
    fn debug_dump_is_valid_shape() {
        let (p, _) = small_sym_problem();
        let dump = debug_dump(&p);
        assert!(dump.contains("\"variables\""));
        assert!(dump.contains("\"constraints\""));
        assert!(dump.contains("pos:0"));
    }
}
