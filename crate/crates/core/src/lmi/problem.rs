use crate::linalg::{BlockMatrix, Matrix, SymMatrix};
use std::fmt;

/// Errors from problem construction, evaluation, and solving.
#[derive(Debug, Clone, PartialEq)]
pub enum LmiError {
    InvalidInput(String),
    Numeric(String),
}

impl fmt::Display for LmiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LmiError::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            LmiError::Numeric(msg) => write!(f, "numeric failure: {msg}"),
        }
    }
}

impl std::error::Error for LmiError {}

/// Shape of a matrix variable.
#[derive(Clone, Debug, PartialEq)]
pub enum VarKind {
    /// Symmetric block-diagonal variable; one symmetric block per entry.
    SymBlockDiag { dims: Vec<usize> },
    /// Rectangular block grid; only the masked blocks exist (absent blocks
    /// are structural zeros). Diagonal entries stay out of the mask for
    /// coupling variables.
    RectBlocks {
        row_dims: Vec<usize>,
        col_dims: Vec<usize>,
        mask: Vec<(usize, usize)>,
    },
    Scalar,
}

impl VarKind {
    pub fn coord_count(&self) -> usize {
        match self {
            VarKind::SymBlockDiag { dims } => dims.iter().map(|d| d * (d + 1) / 2).sum(),
            VarKind::RectBlocks {
                row_dims,
                col_dims,
                mask,
            } => mask.iter().map(|&(i, j)| row_dims[i] * col_dims[j]).sum(),
            VarKind::Scalar => 1,
        }
    }
}

/// Named matrix variable of an LMI problem.
#[derive(Clone, Debug)]
pub struct VarSpec {
    pub name: String,
    pub kind: VarKind,
}

/// Value of one variable.
#[derive(Clone, Debug)]
pub enum VarValue {
    Sym(Vec<SymMatrix>),
    Blocks(BlockMatrix),
    Scalar(f64),
}

/// Assignment of values to every variable of a problem, in declaration
/// order.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    pub values: Vec<VarValue>,
}

impl Assignment {
    pub fn scalar(&self, idx: usize) -> f64 {
        match &self.values[idx] {
            VarValue::Scalar(s) => *s,
            other => panic!("variable {idx} is not scalar: {other:?}"),
        }
    }

    pub fn sym_blocks(&self, idx: usize) -> &[SymMatrix] {
        match &self.values[idx] {
            VarValue::Sym(blocks) => blocks,
            other => panic!("variable {idx} is not symmetric: {other:?}"),
        }
    }

    pub fn rect_blocks(&self, idx: usize) -> &BlockMatrix {
        match &self.values[idx] {
            VarValue::Blocks(b) => b,
            other => panic!("variable {idx} is not a block grid: {other:?}"),
        }
    }
}

/// Which part of a variable a linear term references.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarBlockRef {
    Sym(usize),
    Rect(usize, usize),
    Scalar,
}

/// Inequality direction of a constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// Constraint matrix must be negative semidefinite.
    Leq0,
    /// Constraint matrix must be positive semidefinite.
    Geq0,
}

/// One linear term of a constraint expression:
/// `scale · left · op(V) · right` placed at frame block
/// (`row_block`, `col_block`). For scalar variables the contribution is
/// `scale · s · left` (with `left` defaulting to the identity).
#[derive(Clone, Debug)]
pub struct LinTerm {
    pub row_block: usize,
    pub col_block: usize,
    pub var: usize,
    pub var_block: VarBlockRef,
    pub left: Option<Matrix>,
    pub right: Option<Matrix>,
    pub transpose: bool,
    pub scale: f64,
}

/// Constant placement inside a constraint expression.
#[derive(Clone, Debug)]
pub struct ConstTerm {
    pub row_block: usize,
    pub col_block: usize,
    pub matrix: Matrix,
}

/// Affine matrix-inequality constraint over the problem variables.
///
/// The constraint matrix is the symmetrization `G(x) = E(x) + E(x)ᵀ` of
/// the placed expression `E`, which keeps every assembled matrix exactly
/// symmetric regardless of the assignment. Diagonal placements therefore
/// enter `E` at half weight.
#[derive(Clone, Debug)]
pub struct AffineConstraint {
    pub id: String,
    pub sense: Sense,
    pub block_dims: Vec<usize>,
    pub consts: Vec<ConstTerm>,
    pub terms: Vec<LinTerm>,
    /// Participation of this constraint in the phase-I slack (0 or 1).
    /// Constraints with weight 0 must hold strictly at the initial point
    /// and are kept interior by the barrier alone.
    pub slack_weight: f64,
    /// Relative weight of this constraint's log-det barrier.
    pub barrier_weight: f64,
    /// Diagonal relaxation applied to the barrier term only: the barrier
    /// acts on `S + relax·I` while iterates are still confined to the
    /// true slab `S ≻ 0`. A relaxation sized to the opposing constraint's
    /// gap removes the artificial mid-gap attraction that would otherwise
    /// make chained certificates drift. Solving the relaxed problem can
    /// only enlarge the attainable slack, so infeasibility certificates
    /// remain valid for the true problem.
    pub barrier_relax: f64,
}

impl AffineConstraint {
    pub fn order(&self) -> usize {
        self.block_dims.iter().sum()
    }
}

/// Block-structured semidefinite feasibility problem.
#[derive(Clone, Debug, Default)]
pub struct LmiProblem {
    pub vars: Vec<VarSpec>,
    pub constraints: Vec<AffineConstraint>,
}

impl LmiProblem {
    pub fn new() -> Self {
        LmiProblem::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind) -> usize {
        self.vars.push(VarSpec {
            name: name.into(),
            kind,
        });
        self.vars.len() - 1
    }

    pub fn add_constraint(&mut self, c: AffineConstraint) {
        self.constraints.push(c);
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn coord_count(&self) -> usize {
        self.vars.iter().map(|v| v.kind.coord_count()).sum()
    }

    /// All-zero assignment matching the variable shapes.
    pub fn zero_assignment(&self) -> Assignment {
        let values = self
            .vars
            .iter()
            .map(|v| match &v.kind {
                VarKind::SymBlockDiag { dims } => {
                    VarValue::Sym(dims.iter().map(|&d| SymMatrix::zeros(d)).collect())
                }
                VarKind::RectBlocks {
                    row_dims, col_dims, ..
                } => VarValue::Blocks(BlockMatrix::new(row_dims.clone(), col_dims.clone())),
                VarKind::Scalar => VarValue::Scalar(0.0),
            })
            .collect();
        Assignment { values }
    }

    /// Check that an assignment matches the declared variable shapes.
    pub fn check_shapes(&self, a: &Assignment) -> Result<(), LmiError> {
        if a.values.len() != self.vars.len() {
            return Err(LmiError::InvalidInput(format!(
                "assignment has {} values for {} variables",
                a.values.len(),
                self.vars.len()
            )));
        }
        for (spec, value) in self.vars.iter().zip(&a.values) {
            match (&spec.kind, value) {
                (VarKind::SymBlockDiag { dims }, VarValue::Sym(blocks)) => {
                    if blocks.len() != dims.len()
                        || blocks.iter().zip(dims).any(|(b, &d)| b.order() != d)
                    {
                        return Err(LmiError::InvalidInput(format!(
                            "variable {} block dims mismatch",
                            spec.name
                        )));
                    }
                }
                (
                    VarKind::RectBlocks {
                        row_dims, col_dims, ..
                    },
                    VarValue::Blocks(b),
                ) => {
                    if b.row_dims() != &row_dims[..] || b.col_dims() != &col_dims[..] {
                        return Err(LmiError::InvalidInput(format!(
                            "variable {} grid dims mismatch",
                            spec.name
                        )));
                    }
                }
                (VarKind::Scalar, VarValue::Scalar(_)) => {}
                _ => {
                    return Err(LmiError::InvalidInput(format!(
                        "variable {} has a value of the wrong kind",
                        spec.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Structural validation of variables and constraint terms.
    pub fn validate(&self) -> Result<(), LmiError> {
        for spec in &self.vars {
            match &spec.kind {
                VarKind::SymBlockDiag { dims } => {
                    if dims.is_empty() || dims.iter().any(|&d| d == 0) {
                        return Err(LmiError::InvalidInput(format!(
                            "variable {}: block dims must be positive",
                            spec.name
                        )));
                    }
                }
                VarKind::RectBlocks {
                    row_dims,
                    col_dims,
                    mask,
                } => {
                    if row_dims.iter().any(|&d| d == 0) || col_dims.iter().any(|&d| d == 0) {
                        return Err(LmiError::InvalidInput(format!(
                            "variable {}: grid dims must be positive",
                            spec.name
                        )));
                    }
                    for &(i, j) in mask {
                        if i >= row_dims.len() || j >= col_dims.len() {
                            return Err(LmiError::InvalidInput(format!(
                                "variable {}: mask entry ({i},{j}) out of range",
                                spec.name
                            )));
                        }
                    }
                }
                VarKind::Scalar => {}
            }
        }
        for c in &self.constraints {
            let nblocks = c.block_dims.len();
            if c.block_dims.iter().any(|&d| d == 0) || nblocks == 0 {
                return Err(LmiError::InvalidInput(format!(
                    "constraint {}: frame dims must be positive",
                    c.id
                )));
            }
            if !(c.slack_weight == 0.0 || c.slack_weight == 1.0) {
                return Err(LmiError::InvalidInput(format!(
                    "constraint {}: slack weight must be 0 or 1",
                    c.id
                )));
            }
            if !(c.barrier_weight > 0.0) {
                return Err(LmiError::InvalidInput(format!(
                    "constraint {}: barrier weight must be positive",
                    c.id
                )));
            }
            if !(c.barrier_relax >= 0.0) {
                return Err(LmiError::InvalidInput(format!(
                    "constraint {}: barrier relaxation must be nonnegative",
                    c.id
                )));
            }
            for t in &c.consts {
                if t.row_block >= nblocks || t.col_block >= nblocks {
                    return Err(LmiError::InvalidInput(format!(
                        "constraint {}: const placement out of range",
                        c.id
                    )));
                }
                if (t.matrix.rows(), t.matrix.cols())
                    != (c.block_dims[t.row_block], c.block_dims[t.col_block])
                {
                    return Err(LmiError::InvalidInput(format!(
                        "constraint {}: const block shape mismatch",
                        c.id
                    )));
                }
                if !t.matrix.is_finite() {
                    return Err(LmiError::InvalidInput(format!(
                        "constraint {}: non-finite constant",
                        c.id
                    )));
                }
            }
            for t in &c.terms {
                self.validate_term(c, t)?;
            }
        }
        Ok(())
    }

    fn validate_term(&self, c: &AffineConstraint, t: &LinTerm) -> Result<(), LmiError> {
        let nblocks = c.block_dims.len();
        if t.row_block >= nblocks || t.col_block >= nblocks {
            return Err(LmiError::InvalidInput(format!(
                "constraint {}: term placement out of range",
                c.id
            )));
        }
        let frame = (c.block_dims[t.row_block], c.block_dims[t.col_block]);
        let spec = self.vars.get(t.var).ok_or_else(|| {
            LmiError::InvalidInput(format!("constraint {}: unknown variable index", c.id))
        })?;
        let vshape = match (&spec.kind, t.var_block) {
            (VarKind::SymBlockDiag { dims }, VarBlockRef::Sym(b)) => {
                let d = *dims.get(b).ok_or_else(|| {
                    LmiError::InvalidInput(format!(
                        "constraint {}: block {b} out of range for {}",
                        c.id, spec.name
                    ))
                })?;
                (d, d)
            }
            (
                VarKind::RectBlocks {
                    row_dims,
                    col_dims,
                    mask,
                },
                VarBlockRef::Rect(i, j),
            ) => {
                if !mask.contains(&(i, j)) {
                    return Err(LmiError::InvalidInput(format!(
                        "constraint {}: block ({i},{j}) not in mask of {}",
                        c.id, spec.name
                    )));
                }
                (row_dims[i], col_dims[j])
            }
            (VarKind::Scalar, VarBlockRef::Scalar) => {
                // shape comes from `left`, or the placement must be square
                if let Some(l) = &t.left {
                    if (l.rows(), l.cols()) != frame {
                        return Err(LmiError::InvalidInput(format!(
                            "constraint {}: scalar shape matrix mismatch",
                            c.id
                        )));
                    }
                } else if frame.0 != frame.1 {
                    return Err(LmiError::InvalidInput(format!(
                        "constraint {}: scalar term needs a shape matrix",
                        c.id
                    )));
                }
                if t.right.is_some() {
                    return Err(LmiError::InvalidInput(format!(
                        "constraint {}: scalar terms take no right multiplier",
                        c.id
                    )));
                }
                return Ok(());
            }
            _ => {
                return Err(LmiError::InvalidInput(format!(
                    "constraint {}: block reference does not match variable {}",
                    c.id, spec.name
                )));
            }
        };
        let op_shape = if t.transpose {
            (vshape.1, vshape.0)
        } else {
            vshape
        };
        let after_left = match &t.left {
            Some(l) => {
                if l.cols() != op_shape.0 {
                    return Err(LmiError::InvalidInput(format!(
                        "constraint {}: left multiplier cols {} != {}",
                        c.id,
                        l.cols(),
                        op_shape.0
                    )));
                }
                (l.rows(), op_shape.1)
            }
            None => op_shape,
        };
        let after_right = match &t.right {
            Some(r) => {
                if r.rows() != after_left.1 {
                    return Err(LmiError::InvalidInput(format!(
                        "constraint {}: right multiplier rows {} != {}",
                        c.id,
                        r.rows(),
                        after_left.1
                    )));
                }
                (after_left.0, r.cols())
            }
            None => after_left,
        };
        if after_right != frame {
            return Err(LmiError::InvalidInput(format!(
                "constraint {}: term shape {:?} does not fit frame block {:?}",
                c.id, after_right, frame
            )));
        }
        Ok(())
    }

    /// Assemble the constraint matrix `G(x) = E(x) + E(x)ᵀ` for the given
    /// assignment, without sense normalization. This is the reference
    /// evaluation path, independent of the solver's coordinate form.
    pub fn eval_constraint(&self, c: &AffineConstraint, a: &Assignment) -> Matrix {
        let n = c.order();
        let mut e = Matrix::zeros(n, n);
        let offsets = block_offsets(&c.block_dims);
        for t in &c.consts {
            add_block(&mut e, offsets[t.row_block], offsets[t.col_block], &t.matrix, 1.0);
        }
        for t in &c.terms {
            let contribution = self.eval_term(c, t, a);
            add_block(
                &mut e,
                offsets[t.row_block],
                offsets[t.col_block],
                &contribution,
                1.0,
            );
        }
        e.plus_transpose()
    }

    fn eval_term(&self, c: &AffineConstraint, t: &LinTerm, a: &Assignment) -> Matrix {
        let base: Matrix = match t.var_block {
            VarBlockRef::Sym(b) => a.sym_blocks(t.var)[b].to_dense(),
            VarBlockRef::Rect(i, j) => match a.rect_blocks(t.var).block(i, j) {
                Some(m) => m.clone(),
                None => {
                    let grid = a.rect_blocks(t.var);
                    Matrix::zeros(grid.row_dims()[i], grid.col_dims()[j])
                }
            },
            VarBlockRef::Scalar => {
                let s = a.scalar(t.var);
                let shape = match &t.left {
                    Some(l) => l.clone(),
                    None => Matrix::identity(c.block_dims[t.row_block]),
                };
                return shape.scale(s * t.scale);
            }
        };
        let op = if t.transpose { base.transpose() } else { base };
        let with_left = match &t.left {
            Some(l) => l.mul(&op),
            None => op,
        };
        let with_right = match &t.right {
            Some(r) => with_left.mul(r),
            None => with_left,
        };
        with_right.scale(t.scale)
    }

    /// Signed residual of each constraint at the assignment: the most
    /// positive eigenvalue for `⪯ 0` constraints, sign-flipped for `⪰ 0`.
    /// Nonpositive residuals mean the constraint holds.
    pub fn residuals(&self, a: &Assignment) -> Result<Vec<ConstraintResidual>, LmiError> {
        self.check_shapes(a)?;
        let mut out = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let g = self.eval_constraint(c, a);
            let sym = SymMatrix::from_dense_symmetrized(&g);
            let eig = sym
                .eigen()
                .map_err(|e| LmiError::Numeric(format!("constraint {}: {e}", c.id)))?;
            let residual = match c.sense {
                Sense::Leq0 => eig.values[eig.values.len() - 1],
                Sense::Geq0 => -eig.values[0],
            };
            out.push(ConstraintResidual {
                id: c.id.clone(),
                residual,
            });
        }
        Ok(out)
    }
}

/// Residual report for one constraint.
#[derive(Clone, Debug)]
pub struct ConstraintResidual {
    pub id: String,
    pub residual: f64,
}

pub(crate) fn block_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        offsets.push(acc);
        acc += d;
    }
    offsets
}

fn add_block(dst: &mut Matrix, r0: usize, c0: usize, src: &Matrix, scale: f64) {
    for r in 0..src.rows() {
        for c in 0..src.cols() {
            dst.add_at(r0 + r, c0 + c, scale * src.get(r, c));
        }
    }
}

/// Render the problem structure as a JSON document for offline
/// inspection: variables with their shapes, constraints with their term
/// skeletons. Values are structural only; no assignment is involved.
pub fn debug_dump(problem: &LmiProblem) -> String {
    let mut s = String::from("{\n  \"variables\": [\n");
    for (i, v) in problem.vars.iter().enumerate() {
        let kind = match &v.kind {
            VarKind::SymBlockDiag { dims } => {
                format!("{{\"sym_block_diag\": {dims:?}}}")
            }
            VarKind::RectBlocks {
                row_dims,
                col_dims,
                mask,
            } => format!(
                "{{\"rect_blocks\": {{\"row_dims\": {row_dims:?}, \"col_dims\": {col_dims:?}, \"mask\": {}}}}}",
                mask_json(mask)
            ),
            VarKind::Scalar => "\"scalar\"".to_string(),
        };
        s.push_str(&format!(
            "    {{\"name\": \"{}\", \"kind\": {}, \"coords\": {}}}{}\n",
            v.name,
            kind,
            v.kind.coord_count(),
            if i + 1 < problem.vars.len() { "," } else { "" }
        ));
    }
    s.push_str("  ],\n  \"constraints\": [\n");
    for (i, c) in problem.constraints.iter().enumerate() {
        let sense = match c.sense {
            Sense::Leq0 => "<=0",
            Sense::Geq0 => ">=0",
        };
        let terms: Vec<String> = c
            .terms
            .iter()
            .map(|t| {
                format!(
                    "{{\"var\": \"{}\", \"at\": [{}, {}], \"transpose\": {}, \"scale\": {}}}",
                    problem.vars[t.var].name, t.row_block, t.col_block, t.transpose, t.scale
                )
            })
            .collect();
        s.push_str(&format!(
            "    {{\"id\": \"{}\", \"sense\": \"{}\", \"dims\": {:?}, \"slack_weight\": {}, \"terms\": [{}]}}{}\n",
            c.id,
            sense,
            c.block_dims,
            c.slack_weight,
            terms.join(", "),
            if i + 1 < problem.constraints.len() { "," } else { "" }
        ));
    }
    s.push_str("  ]\n}\n");
    s
}

fn mask_json(mask: &[(usize, usize)]) -> String {
    let parts: Vec<String> = mask.iter().map(|&(i, j)| format!("[{i},{j}]")).collect();
    format!("[{}]", parts.join(", "))
}
