//! Solver-agnostic conic program representation.
//!
//! A program is a flat scalar variable vector with a linear objective,
//! affine equality rows, affine nonnegativity rows, PSD blocks (affine
//! matrix expressions required `>= 0` in the Loewner order), and
//! spectral-norm epigraph links `t >= ||M||_2`. Epigraph links are kept
//! structural here and lowered to the standard symmetric-dilation PSD
//! block `[[t I, M], [M^T, t I]]` by the backend.
//!
//! Matrix variables come in three storage kinds:
//! - full (row-major scalar slots),
//! - symmetric (upper-triangle slots, entry (i,j) aliases (j,i)),
//! - factored: the logical matrix is `basis * stored` for a fixed
//!   column-orthonormal `basis`. Factored variables let a tall decision
//!   matrix whose constraints only see `D * K` terms be carried at its
//!   intrinsic rank; `||logical||_2 = ||stored||_2` exactly because the
//!   basis is orthonormal.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Handle to a registered variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub usize);

#[derive(Debug, Clone)]
pub enum VarKind {
    Scalar,
    Full { rows: usize, cols: usize },
    Symmetric { side: usize },
    /// Logical matrix `basis * stored`; `stored` is `basis.ncols() x cols`.
    Factored { basis: DMatrix<f64>, cols: usize },
}

#[derive(Debug, Clone)]
pub struct VarInfo {
    pub name: String,
    pub kind: VarKind,
    /// First scalar slot of this variable.
    pub offset: usize,
    /// Number of scalar slots.
    pub len: usize,
}

impl VarInfo {
    /// Logical shape as seen by the model (factored vars report the tall
    /// shape, symmetric vars `side x side`, scalars `1 x 1`).
    pub fn logical_shape(&self) -> (usize, usize) {
        match &self.kind {
            VarKind::Scalar => (1, 1),
            VarKind::Full { rows, cols } => (*rows, *cols),
            VarKind::Symmetric { side } => (*side, *side),
            VarKind::Factored { basis, cols } => (basis.nrows(), *cols),
        }
    }
}

/// Sparse affine form `sum coeff_i * x_i + constant`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn scaled_var(index: usize, coeff: f64) -> Self {
        Self {
            terms: vec![(index, coeff)],
            constant: 0.0,
        }
    }

    pub fn push(&mut self, index: usize, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((index, coeff));
        }
    }

    pub fn add(&mut self, other: &LinExpr, scale: f64) {
        self.constant += other.constant * scale;
        for &(i, c) in &other.terms {
            self.push(i, c * scale);
        }
    }

    pub fn scale(&self, s: f64) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    /// Merge duplicate variable references; used before handing rows to a
    /// backend.
    pub fn compacted(&self) -> LinExpr {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (i, c) in terms {
            match out.last_mut() {
                Some((j, acc)) if *j == i => *acc += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        LinExpr {
            terms: out,
            constant: self.constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|&(_, c)| c == 0.0)
    }
}

/// Dense grid of affine forms (row-major).
#[derive(Debug, Clone)]
pub struct MatExpr {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<LinExpr>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![LinExpr::default(); rows * cols],
        }
    }

    pub fn from_data(m: &DMatrix<f64>) -> Self {
        let mut e = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                e.entry_mut(i, j).constant = m[(i, j)];
            }
        }
        e
    }

    pub fn entry(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        &mut self.entries[i * self.cols + j]
    }

    /// Accumulate `scale * other` into a sub-block anchored at `(r0, c0)`.
    pub fn add_block(&mut self, r0: usize, c0: usize, other: &MatExpr, scale: f64) {
        assert!(r0 + other.rows <= self.rows && c0 + other.cols <= self.cols);
        for i in 0..other.rows {
            for j in 0..other.cols {
                let src = other.entry(i, j).clone();
                self.entry_mut(r0 + i, c0 + j).add(&src, scale);
            }
        }
    }

    pub fn transpose(&self) -> MatExpr {
        let mut out = MatExpr::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.entry_mut(j, i) = self.entry(i, j).clone();
            }
        }
        out
    }

    /// `data * self` with a constant left factor.
    pub fn left_mul(&self, data: &DMatrix<f64>) -> MatExpr {
        assert_eq!(data.ncols(), self.rows);
        let mut out = MatExpr::zeros(data.nrows(), self.cols);
        for i in 0..data.nrows() {
            for j in 0..self.cols {
                let e = out.entry_mut(i, j);
                for k in 0..self.rows {
                    let c = data[(i, k)];
                    if c != 0.0 {
                        e.add(self.entry(k, j), c);
                    }
                }
            }
        }
        out
    }

    /// `self * data` with a constant right factor.
    pub fn right_mul(&self, data: &DMatrix<f64>) -> MatExpr {
        assert_eq!(self.cols, data.nrows());
        let mut out = MatExpr::zeros(self.rows, data.ncols());
        for i in 0..self.rows {
            for j in 0..data.ncols() {
                let e = out.entry_mut(i, j);
                for k in 0..self.cols {
                    let c = data[(k, j)];
                    if c != 0.0 {
                        e.add(self.entry(i, k), c);
                    }
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &MatExpr) -> MatExpr {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        out.add_block(0, 0, other, -1.0);
        out
    }

    /// Average with the transpose, making the expression symmetric entry
    /// by entry.
    pub fn symmetrized(&self) -> MatExpr {
        assert_eq!(self.rows, self.cols);
        let mut out = MatExpr::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let mut e = self.entry(i, j).scale(0.5);
                e.add(self.entry(j, i), 0.5);
                *out.entry_mut(i, j) = e;
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(x))
    }
}

/// An affine matrix expression constrained to the PSD cone.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub name: String,
    pub expr: MatExpr,
}

/// Structural spectral-norm link `x[t] >= ||mat||_2`.
#[derive(Debug, Clone)]
pub struct Epigraph {
    pub name: String,
    pub t: usize,
    pub mat: MatExpr,
}

/// A complete conic program over one flat scalar vector.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    vars: Vec<VarInfo>,
    n_scalars: usize,
    /// Linear objective, minimized.
    pub objective: Vec<(usize, f64)>,
    /// Each expression constrained `== 0`.
    pub equalities: Vec<LinExpr>,
    /// Each expression constrained `>= 0`.
    pub inequalities: Vec<LinExpr>,
    pub psd_blocks: Vec<PsdBlock>,
    pub epigraphs: Vec<Epigraph>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn vars(&self) -> &[VarInfo] {
        &self.vars
    }

    fn register(&mut self, name: &str, kind: VarKind, len: usize) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarInfo {
            name: name.to_string(),
            kind,
            offset: self.n_scalars,
            len,
        });
        self.n_scalars += len;
        id
    }

    pub fn add_scalar(&mut self, name: &str) -> VarId {
        self.register(name, VarKind::Scalar, 1)
    }

    pub fn add_full(&mut self, name: &str, rows: usize, cols: usize) -> VarId {
        self.register(name, VarKind::Full { rows, cols }, rows * cols)
    }

    pub fn add_symmetric(&mut self, name: &str, side: usize) -> VarId {
        self.register(name, VarKind::Symmetric { side }, side * (side + 1) / 2)
    }

    /// Register a factored variable `basis * stored`. `basis` must have
    /// orthonormal columns for the norm identity used by epigraph links.
    pub fn add_factored(&mut self, name: &str, basis: DMatrix<f64>, cols: usize) -> VarId {
        let r = basis.ncols();
        self.register(name, VarKind::Factored { basis, cols }, r * cols)
    }

    pub fn info(&self, id: VarId) -> &VarInfo {
        &self.vars[id.0]
    }

    pub fn scalar_index(&self, id: VarId) -> usize {
        debug_assert!(matches!(self.vars[id.0].kind, VarKind::Scalar));
        self.vars[id.0].offset
    }

    /// Affine form of one *stored* entry. For symmetric variables,
    /// `(i, j)` and `(j, i)` alias the same slot; for factored variables
    /// this indexes the stored (reduced) matrix.
    pub fn stored_entry(&self, id: VarId, i: usize, j: usize) -> LinExpr {
        let info = &self.vars[id.0];
        let idx = match &info.kind {
            VarKind::Scalar => {
                debug_assert!(i == 0 && j == 0);
                0
            }
            VarKind::Full { cols, .. } => i * cols + j,
            VarKind::Factored { cols, .. } => i * cols + j,
            VarKind::Symmetric { side } => {
                // row-major upper triangle: row a starts after
                // a*side - a*(a-1)/2 earlier slots
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                a * side - (a * a - a) / 2 + (b - a)
            }
        };
        LinExpr::var(info.offset + idx)
    }

    /// The stored matrix as an expression grid (reduced shape for
    /// factored variables, `side x side` for symmetric ones).
    pub fn stored_matexpr(&self, id: VarId) -> MatExpr {
        let info = &self.vars[id.0];
        let (rows, cols) = match &info.kind {
            VarKind::Scalar => (1, 1),
            VarKind::Full { rows, cols } => (*rows, *cols),
            VarKind::Symmetric { side } => (*side, *side),
            VarKind::Factored { basis, cols } => (basis.ncols(), *cols),
        };
        let mut out = MatExpr::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                *out.entry_mut(i, j) = self.stored_entry(id, i, j);
            }
        }
        out
    }

    /// Expression for `data * logical(id)`. For factored variables the
    /// basis is folded into the data factor, so the result stays in
    /// reduced coordinates.
    pub fn data_times_var(&self, data: &DMatrix<f64>, id: VarId) -> MatExpr {
        let info = &self.vars[id.0];
        match &info.kind {
            VarKind::Factored { basis, .. } => {
                let folded = data * basis;
                self.stored_matexpr(id).left_mul(&folded)
            }
            _ => self.stored_matexpr(id).left_mul(data),
        }
    }

    pub fn add_equality(&mut self, expr: LinExpr) {
        self.equalities.push(expr.compacted());
    }

    pub fn add_equalities(&mut self, exprs: &MatExpr) {
        for i in 0..exprs.rows {
            for j in 0..exprs.cols {
                self.add_equality(exprs.entry(i, j).clone());
            }
        }
    }

    pub fn add_inequality(&mut self, expr: LinExpr) {
        self.inequalities.push(expr.compacted());
    }

    pub fn add_psd_block(&mut self, name: &str, expr: MatExpr) {
        assert_eq!(expr.rows, expr.cols, "PSD block must be square");
        self.psd_blocks.push(PsdBlock {
            name: name.to_string(),
            expr: expr.symmetrized(),
        });
    }

    pub fn add_epigraph(&mut self, name: &str, t: VarId, mat: MatExpr) {
        let t_idx = self.scalar_index(t);
        self.epigraphs.push(Epigraph {
            name: name.to_string(),
            t: t_idx,
            mat,
        });
    }

    /// Reconstruct the logical value of a variable from a solution vector.
    pub fn decode(&self, id: VarId, x: &[f64]) -> DMatrix<f64> {
        let info = &self.vars[id.0];
        match &info.kind {
            VarKind::Scalar => DMatrix::from_element(1, 1, x[info.offset]),
            VarKind::Full { rows, cols } => {
                DMatrix::from_fn(*rows, *cols, |i, j| x[info.offset + i * cols + j])
            }
            VarKind::Symmetric { side } => DMatrix::from_fn(*side, *side, |i, j| {
                self.stored_entry(id, i, j).eval(x)
            }),
            VarKind::Factored { basis, cols } => {
                let stored =
                    DMatrix::from_fn(basis.ncols(), *cols, |i, j| x[info.offset + i * cols + j]);
                basis * stored
            }
        }
    }

    pub fn decode_scalar(&self, id: VarId, x: &[f64]) -> f64 {
        x[self.scalar_index(id)]
    }

    /// Write a logical value into the scalar vector (inverse of
    /// [`ConicProgram::decode`]). Symmetric targets take the upper
    /// triangle; factored targets are projected onto the basis, which is
    /// exact when the value lies in its column space.
    pub fn encode(&self, id: VarId, value: &DMatrix<f64>, x: &mut [f64]) {
        let info = &self.vars[id.0];
        match &info.kind {
            VarKind::Scalar => x[info.offset] = value[(0, 0)],
            VarKind::Full { rows, cols } => {
                for i in 0..*rows {
                    for j in 0..*cols {
                        x[info.offset + i * cols + j] = value[(i, j)];
                    }
                }
            }
            VarKind::Symmetric { side } => {
                for i in 0..*side {
                    for j in i..*side {
                        let idx = self.stored_entry(id, i, j).terms[0].0;
                        x[idx] = value[(i, j)];
                    }
                }
            }
            VarKind::Factored { basis, cols } => {
                let stored = basis.transpose() * value;
                for i in 0..basis.ncols() {
                    for j in 0..*cols {
                        x[info.offset + i * cols + j] = stored[(i, j)];
                    }
                }
            }
        }
    }

    /// Look up a variable by name (used by generic tooling and tests).
    pub fn find(&self, name: &str) -> Result<VarId> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .map(VarId)
            .ok_or_else(|| Error::invalid("variable", format!("unknown variable {name}")))
    }

    /// Plain-text export.
    ///
    /// Schema, one item per line:
    /// `var <name> logical=<r>x<c> slots=<len> kind=<scalar|full|symmetric|factored(rank)>`
    /// `min: <affine form>`
    /// `eq[<k>]: <affine form> = 0`
    /// `ineq[<k>]: <affine form> >= 0`
    /// `psd <name> side=<s>` followed by `  [<i>,<j>] <affine form>` for the
    /// upper triangle, and `epigraph <name> t=x<idx> mat=<r>x<c>` followed by
    /// entries. Affine forms are `c0 + c1*x<i1> + ...` with full-precision
    /// coefficients.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for v in &self.vars {
            let (r, c) = v.logical_shape();
            let kind = match &v.kind {
                VarKind::Scalar => "scalar".to_string(),
                VarKind::Full { .. } => "full".to_string(),
                VarKind::Symmetric { .. } => "symmetric".to_string(),
                VarKind::Factored { basis, .. } => format!("factored({})", basis.ncols()),
            };
            let _ = writeln!(
                s,
                "var {} logical={r}x{c} slots={} kind={kind}",
                v.name, v.len
            );
        }
        let mut obj = LinExpr::default();
        for &(i, c) in &self.objective {
            obj.push(i, c);
        }
        let _ = writeln!(s, "min: {}", format_expr(&obj));
        for (k, e) in self.equalities.iter().enumerate() {
            let _ = writeln!(s, "eq[{k}]: {} = 0", format_expr(e));
        }
        for (k, e) in self.inequalities.iter().enumerate() {
            let _ = writeln!(s, "ineq[{k}]: {} >= 0", format_expr(e));
        }
        for b in &self.psd_blocks {
            let _ = writeln!(s, "psd {} side={}", b.name, b.expr.rows);
            for i in 0..b.expr.rows {
                for j in i..b.expr.cols {
                    let e = b.expr.entry(i, j);
                    if !e.is_zero() {
                        let _ = writeln!(s, "  [{i},{j}] {}", format_expr(e));
                    }
                }
            }
        }
        for ep in &self.epigraphs {
            let _ = writeln!(
                s,
                "epigraph {} t=x{} mat={}x{}",
                ep.name, ep.t, ep.mat.rows, ep.mat.cols
            );
            for i in 0..ep.mat.rows {
                for j in 0..ep.mat.cols {
                    let e = ep.mat.entry(i, j);
                    if !e.is_zero() {
                        let _ = writeln!(s, "  [{i},{j}] {}", format_expr(e));
                    }
                }
            }
        }
        s
    }
}

fn format_expr(e: &LinExpr) -> String {
    let e = e.compacted();
    let mut parts = Vec::new();
    if e.constant != 0.0 || e.terms.is_empty() {
        parts.push(format!("{}", e.constant));
    }
    for (i, c) in e.terms {
        parts.push(format!("{c}*x{i}"));
    }
    parts.join(" + ")
}
