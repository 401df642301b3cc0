//! Lowering of a [`ConicProgram`] to Clarabel's `min q'x  s.t. Ax + s = b,
//! s in K` form, and the solver invocation.
//!
//! Cone layout, in row order: one zero cone covering all equality rows,
//! one nonnegative cone covering all inequality rows, then one PSD
//! triangle cone per PSD block and per lowered epigraph. PSD slacks use
//! Clarabel's scaled upper-triangle vectorization (column-major, off-
//! diagonals times sqrt(2)).

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus as ClarabelStatus,
    SupportedConeT,
};

use crate::error::{Error, Result};

use super::program::{ConicProgram, LinExpr, MatExpr};

/// Interior-point options forwarded to the backend.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub verbose: bool,
    pub max_iter: u32,
    /// Absolute/relative duality-gap targets.
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    /// Primal/dual feasibility target.
    pub tol_feas: f64,
    /// Ruiz equilibration of the problem data.
    pub equilibrate: bool,
    /// Static KKT regularization constant.
    pub static_regularization: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub max_step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            verbose: false,
            max_iter: 200,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            tol_feas: 1e-9,
            equilibrate: true,
            static_regularization: 1e-8,
            max_step_fraction: 0.99,
        }
    }
}

/// Solver verdict, normalized across backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    AlmostOptimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalError,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

/// Raw solver output: the flat variable vector plus diagnostics.
#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: u32,
    pub residual_primal: f64,
    pub residual_dual: f64,
}

/// A conic solver able to handle zero, nonnegative and PSD cones.
pub trait ConicSolver {
    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<SolverOutcome>;
}

/// Default backend, built on the pure-Rust Clarabel interior-point solver.
#[derive(Debug, Default, Clone)]
pub struct ClarabelSolver;

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    next_row: usize,
}

impl Triplets {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            b: Vec::new(),
            next_row: 0,
        }
    }

    /// Emit one row `s_row = b_row - sum coeff * x`: pass the affine form
    /// that the slack must equal, pre-scaled by the caller.
    fn push_slack_row(&mut self, e: &LinExpr) {
        let e = e.compacted();
        for (idx, coeff) in e.terms {
            self.rows.push(self.next_row);
            self.cols.push(idx);
            self.vals.push(-coeff);
        }
        self.b.push(e.constant);
        self.next_row += 1;
    }

    fn into_csc(self, ncols: usize) -> (CscMatrix<f64>, Vec<f64>) {
        let nrows = self.next_row;
        let mut order: Vec<usize> = (0..self.vals.len()).collect();
        order.sort_by_key(|&k| (self.cols[k], self.rows[k]));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(order.len());
        let mut nzval = Vec::with_capacity(order.len());
        for &k in &order {
            colptr[self.cols[k] + 1] += 1;
            rowval.push(self.rows[k]);
            nzval.push(self.vals[k]);
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        (
            CscMatrix::new(nrows, ncols, colptr, rowval, nzval),
            self.b,
        )
    }
}

/// Append the scaled upper triangle of a symmetric matrix expression in
/// Clarabel's column-major svec order.
fn push_psd_rows(t: &mut Triplets, expr: &MatExpr) {
    let side = expr.rows;
    let sqrt2 = std::f64::consts::SQRT_2;
    for j in 0..side {
        for i in 0..=j {
            let scale = if i == j { 1.0 } else { sqrt2 };
            t.push_slack_row(&expr.entry(i, j).scale(scale));
        }
    }
}

/// Symmetric dilation `[[t I_p, M], [M^T, t I_q]]` of an epigraph link.
fn dilation_expr(t_index: usize, mat: &MatExpr) -> MatExpr {
    let (p, q) = (mat.rows, mat.cols);
    let side = p + q;
    let mut out = MatExpr::zeros(side, side);
    for d in 0..side {
        *out.entry_mut(d, d) = LinExpr::var(t_index);
    }
    out.add_block(0, p, mat, 1.0);
    out.add_block(p, 0, &mat.transpose(), 1.0);
    out
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<SolverOutcome> {
        let n = prog.n_scalars();
        let mut q = vec![0.0; n];
        for &(idx, c) in &prog.objective {
            q[idx] += c;
        }

        let mut t = Triplets::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        if !prog.equalities.is_empty() {
            for e in &prog.equalities {
                t.push_slack_row(&e.scale(1.0));
            }
            cones.push(SupportedConeT::ZeroConeT(prog.equalities.len()));
        }
        if !prog.inequalities.is_empty() {
            for e in &prog.inequalities {
                t.push_slack_row(e);
            }
            cones.push(SupportedConeT::NonnegativeConeT(prog.inequalities.len()));
        }
        for block in &prog.psd_blocks {
            push_psd_rows(&mut t, &block.expr);
            cones.push(SupportedConeT::PSDTriangleConeT(block.expr.rows));
        }
        for epi in &prog.epigraphs {
            let dil = dilation_expr(epi.t, &epi.mat);
            push_psd_rows(&mut t, &dil);
            cones.push(SupportedConeT::PSDTriangleConeT(dil.rows));
        }

        let (a, b) = t.into_csc(n);
        let p = CscMatrix::zeros((n, n));

        let settings = DefaultSettingsBuilder::default()
            .verbose(opts.verbose)
            .max_iter(opts.max_iter)
            .tol_gap_abs(opts.tol_gap_abs)
            .tol_gap_rel(opts.tol_gap_rel)
            .tol_feas(opts.tol_feas)
            .equilibrate_enable(opts.equilibrate)
            .static_regularization_constant(opts.static_regularization)
            .max_step_fraction(opts.max_step_fraction)
            .build()
            .map_err(|e| Error::Solver(format!("invalid solver settings: {e}")))?;

        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("problem setup rejected: {e:?}")))?;
        solver.solve();

        let sol = &solver.solution;
        let status = match sol.status {
            ClarabelStatus::Solved => SolveStatus::Optimal,
            ClarabelStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            ClarabelStatus::PrimalInfeasible | ClarabelStatus::AlmostPrimalInfeasible => {
                SolveStatus::PrimalInfeasible
            }
            ClarabelStatus::DualInfeasible | ClarabelStatus::AlmostDualInfeasible => {
                SolveStatus::DualInfeasible
            }
            ClarabelStatus::MaxIterations | ClarabelStatus::MaxTime => SolveStatus::MaxIterations,
            _ => SolveStatus::NumericalError,
        };

        Ok(SolverOutcome {
            x: sol.x.clone(),
            status,
            objective: sol.obj_val,
            iterations: solver.info.iterations,
            residual_primal: solver.info.res_primal,
            residual_dual: solver.info.res_dual,
        })
    }
}
