use super::problem::{AffineConstraint, ConstTerm, LinTerm, Sense, VarBlockRef};
use crate::linalg::Matrix;

/// Incremental construction of an [`AffineConstraint`].
///
/// The assembled constraint matrix is `E + Eᵀ` of everything placed here,
/// so diagonal contributions are typically given at half weight.
pub struct ConstraintBuilder {
    id: String,
    sense: Sense,
    block_dims: Vec<usize>,
    consts: Vec<ConstTerm>,
    terms: Vec<LinTerm>,
    slack_weight: f64,
    barrier_weight: f64,
    barrier_relax: f64,
}

impl ConstraintBuilder {
    pub fn new(id: impl Into<String>, sense: Sense, block_dims: Vec<usize>) -> Self {
        ConstraintBuilder {
            id: id.into(),
            sense,
            block_dims,
            consts: Vec::new(),
            terms: Vec::new(),
            slack_weight: 1.0,
            barrier_weight: 1.0,
            barrier_relax: 0.0,
        }
    }

    /// Exclude this constraint from the phase-I slack (it must then hold
    /// strictly at the solver's starting point).
    pub fn no_slack(mut self) -> Self {
        self.slack_weight = 0.0;
        self
    }

    pub fn barrier_weight(mut self, w: f64) -> Self {
        self.barrier_weight = w;
        self
    }

    /// Soften only the barrier of this constraint by a diagonal shift;
    /// the constraint itself still has to hold.
    pub fn barrier_relax(mut self, relax: f64) -> Self {
        self.barrier_relax = relax;
        self
    }

    pub fn const_block(mut self, row_block: usize, col_block: usize, m: &Matrix) -> Self {
        self.consts.push(ConstTerm {
            row_block,
            col_block,
            matrix: m.clone(),
        });
        self
    }

    /// `scale·I` placed on diagonal frame block `b` (so the symmetrized
    /// contribution is `2·scale·I`).
    pub fn const_identity(self, b: usize, scale: f64) -> Self {
        let d = self.block_dims[b];
        let m = Matrix::identity(d).scale(scale);
        self.const_block(b, b, &m)
    }

    /// General linear term `scale · left · op(V) · right` at the given
    /// frame position.
    #[allow(clippy::too_many_arguments)]
    pub fn lin_term(
        mut self,
        row_block: usize,
        col_block: usize,
        var: usize,
        var_block: VarBlockRef,
        left: Option<Matrix>,
        right: Option<Matrix>,
        transpose: bool,
        scale: f64,
    ) -> Self {
        self.terms.push(LinTerm {
            row_block,
            col_block,
            var,
            var_block,
            left,
            right,
            transpose,
            scale,
        });
        self
    }

    /// Symmetric-block term `scale·Z_b` at the given frame position.
    pub fn sym_term(
        self,
        row_block: usize,
        col_block: usize,
        var: usize,
        block: usize,
        scale: f64,
    ) -> Self {
        self.lin_term(
            row_block,
            col_block,
            var,
            VarBlockRef::Sym(block),
            None,
            None,
            false,
            scale,
        )
    }

    /// Scalar term `scale·s·shape` (shape defaults to the identity of the
    /// placement block).
    pub fn scalar_term(
        self,
        row_block: usize,
        col_block: usize,
        var: usize,
        scale: f64,
        shape: Option<Matrix>,
    ) -> Self {
        self.lin_term(
            row_block,
            col_block,
            var,
            VarBlockRef::Scalar,
            shape,
            None,
            false,
            scale,
        )
    }

    pub fn build(self) -> AffineConstraint {
        AffineConstraint {
            id: self.id,
            sense: self.sense,
            block_dims: self.block_dims,
            consts: self.consts,
            terms: self.terms,
            slack_weight: self.slack_weight,
            barrier_weight: self.barrier_weight,
            barrier_relax: self.barrier_relax,
        }
    }
}
