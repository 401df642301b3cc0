//! Data-driven synthesis program: assembly of the semidefinite program
//! that simultaneously fits a reduced-order model relation, a quadratic
//! simulation function and an interface function to one noisy trajectory,
//! plus independent post-solve validation of every constraint.
//!
//! The decision matrices `K1`, `K2` live in `R^{T x nr}` / `R^{T x mr}`,
//! but every constraint touches them only through left data products
//! (`U K`, `X K`, `X_plus K`, `1' K`) and their spectral norms. Both are
//! therefore registered as factored variables over an orthonormal basis
//! of the row space of `[U; X; X_plus; 1']`: dropping the orthogonal
//! complement leaves all constraints untouched and can only shrink the
//! norm objective, so the reduction is exact, while the norm epigraphs
//! collapse from side `T + nr` to side `rank + nr`. The validator below
//! re-checks the original constraints on the reconstructed full-size
//! matrices and is independent of this parameterization.

pub mod backend;
pub mod program;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::jsonmat::MatrixJson;
use crate::linalg;

pub use backend::{ClarabelSolver, ConicSolver, SolveStatus, SolverOptions, SolverOutcome};
pub use program::{ConicProgram, LinExpr, MatExpr, VarId};

/// Frobenius-norm floor below which a returned `K1` is considered a
/// degenerate (all-but-zero) certificate.
pub const K1_DEGENERATE_TOL: f64 = 1e-10;

/// Relative weights on the four objective terms
/// `|K1| + |K2| + |X_plus K2 - X K1 B_hat| + beta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub k1: f64,
    pub k2: f64,
    pub mismatch: f64,
    pub beta: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            mismatch: 1.0,
            beta: 1.0,
        }
    }
}

/// Fixed problem data of the synthesis step: contraction rate, the six
/// Young's-inequality multipliers, the degeneracy threshold `eta`, the
/// chosen reduced-model matrices, and numeric tolerances.
#[derive(Debug, Clone)]
pub struct HyperParams {
    pub kappa: f64,
    pub mu: [f64; 6],
    pub eta: f64,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    /// Floor `delta` encoding strict positive definiteness of `P_bar`
    /// as `P_bar >= delta I`.
    pub pbar_floor: f64,
    /// Scale anchor `trace(P_bar) = n * pbar_scale`. The feasible set and
    /// the certified bound are invariant under joint scaling of
    /// `(P_bar, G, mu_bar, beta)`, which leaves the bare program without
    /// an attained minimum (the scale collapses onto the floor and the
    /// interior-point endgame degenerates). Pinning the trace picks one
    /// representative per ray and keeps the floor inactive.
    pub pbar_scale: f64,
    /// Acceptable PSD violation when re-validating a returned solution.
    pub psd_slack: f64,
    /// Acceptable equality residual when re-validating.
    pub eq_tol: f64,
    /// Floor on the three norm-epigraph variables. The optimal `|K2|`
    /// and mismatch norms sit many orders below the data scale, which
    /// collapses their dilation blocks onto the cone apex and stalls the
    /// interior-point endgame; a tiny floor keeps those blocks interior.
    /// The certificate always uses the exact norms of the returned
    /// matrices, never the epigraph values.
    pub norm_floor: f64,
    pub weights: ObjectiveWeights,
}

impl HyperParams {
    pub fn new(kappa: f64, mu: [f64; 6], eta: f64, a_hat: DMatrix<f64>, b_hat: DMatrix<f64>) -> Self {
        Self {
            kappa,
            mu,
            eta,
            a_hat,
            b_hat,
            pbar_floor: 1e-6,
            pbar_scale: 1.0,
            psd_slack: 1e-7,
            eq_tol: 1e-7,
            norm_floor: 1e-6,
            weights: ObjectiveWeights::default(),
        }
    }

    pub fn rom_state_dim(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn rom_input_dim(&self) -> usize {
        self.b_hat.ncols()
    }

    pub fn mu_sum_123(&self) -> f64 {
        self.mu[0] + self.mu[1] + self.mu[2]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid("kappa", format!("{} not in (0, 1)", self.kappa)));
        }
        for (i, &m) in self.mu.iter().enumerate() {
            if m <= 0.0 {
                return Err(Error::invalid("mu", format!("mu_{} = {m} must be > 0", i + 1)));
            }
        }
        if self.eta <= 0.0 {
            return Err(Error::invalid("eta", "must be > 0"));
        }
        if self.pbar_floor <= 0.0 {
            return Err(Error::invalid("pbar_floor", "must be > 0"));
        }
        if self.psd_slack < 0.0 || self.eq_tol < 0.0 {
            return Err(Error::invalid("tolerances", "must be >= 0"));
        }
        if self.a_hat.nrows() != self.a_hat.ncols() {
            return Err(Error::dimension(
                "HyperParams",
                "A_hat",
                "square",
                format!("{}x{}", self.a_hat.nrows(), self.a_hat.ncols()),
            ));
        }
        if self.b_hat.nrows() != self.a_hat.nrows() {
            return Err(Error::dimension(
                "HyperParams",
                "B_hat",
                format!("{} rows", self.a_hat.nrows()),
                format!("{} rows", self.b_hat.nrows()),
            ));
        }
        Ok(())
    }
}

/// The assembled program together with variable handles and the data
/// slices needed to decode a solver outcome.
#[derive(Debug, Clone)]
pub struct SynthesisProgram {
    pub program: ConicProgram,
    pub k1: VarId,
    pub k2: VarId,
    pub pbar: VarId,
    pub g: VarId,
    pub beta: VarId,
    pub mu_bar: VarId,
    pub t1: VarId,
    pub t2: VarId,
    pub t3: VarId,
    pub basis_rank: usize,
    /// Internal unit scale: the program is assembled over `(X, U, X+)/scale`
    /// with the decision matrices absorbing the factor. Decoding maps back
    /// to original units; see [`build_program`].
    pub data_scale: f64,
}

/// Raw decision variables returned by the solver, reconstructed at full
/// size, plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct SynthesisSolution {
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub pbar: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub beta: f64,
    pub mu_bar: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: u32,
    pub residual_primal: f64,
    pub residual_dual: f64,
}

/// Assemble the synthesis program for one dataset.
///
/// Registered constraints:
/// - `1' K1 1 >= eta` (nonnegativity row),
/// - `P_bar >= delta I` and `beta I - P_bar >= 0` (PSD blocks, side n),
/// - a trace anchor pinning the scale of the `(P_bar, G, mu_bar, beta)`
///   ray (the feasible set and the certified bound are invariant under
///   joint scaling of those variables),
/// - `X_plus K1 = X K1 A_hat` (n*nr equality rows),
/// - `X K2 = 0` (n*mr equality rows),
/// - the side `3n+m` matrix-inequality block coupling `P_bar`, `G` and
///   the multiplier `mu_bar` against the data quadratics,
/// - three spectral-norm epigraph links feeding the objective.
///
/// Unit normalization: the program is assembled over the scaled data
/// `(X, U, X+)/c` with `c` the RMS row norm of `H`. The substitution
/// `K' = c K` maps the feasible sets onto each other exactly (the data
/// quadratic scales by `1/c^2`, the multiplier by `c^2`, the exclusion
/// threshold by `c`, and the two norm objective weights by `1/c`), so the
/// solved problem is the same one in better-conditioned units.
/// [`decode_solution`] converts back.
pub fn build_program(ds: &DataSet, hp: &HyperParams) -> Result<SynthesisProgram> {
    hp.validate()?;
    let n = ds.state_dim();
    let m = ds.input_dim();
    let t = ds.horizon();
    let n_hat = hp.rom_state_dim();
    let m_hat = hp.rom_input_dim();
    if n_hat > n {
        return Err(Error::invalid(
            "A_hat",
            format!("reduced dim {n_hat} exceeds plant dim {n}"),
        ));
    }

    let h_raw = ds.stacked();
    let mut scale = (h_raw.norm_squared() / (m + n) as f64).sqrt();
    if scale <= 0.0 || !scale.is_finite() {
        scale = 1.0;
    }
    let x = ds.x() / scale;
    let u = ds.u() / scale;
    let x_plus = ds.x_plus() / scale;
    let h = &h_raw / scale;
    let delta = ds.delta() / (scale * scale);
    let eta = hp.eta * scale;

    // Orthonormal row-space basis of the stacked data (plus the all-ones
    // row feeding the degeneracy exclusion constraint).
    let mut span = DMatrix::zeros(m + 2 * n + 1, t);
    span.rows_mut(0, m).copy_from(&u);
    span.rows_mut(m, n).copy_from(&x);
    span.rows_mut(m + n, n).copy_from(&x_plus);
    span.rows_mut(m + 2 * n, 1)
        .copy_from(&DMatrix::from_element(1, t, 1.0));
    let basis = linalg::row_space_basis(&span, 1e-12);
    let rank = basis.ncols();

    let mut prog = ConicProgram::new();
    let k1 = prog.add_factored("K1", basis.clone(), n_hat);
    let k2 = prog.add_factored("K2", basis.clone(), m_hat);
    let pbar = prog.add_symmetric("P_bar", n);
    let g = prog.add_full("G", m, n);
    let beta = prog.add_scalar("beta");
    let mu_bar = prog.add_scalar("mu_bar");
    let t1 = prog.add_scalar("t1");
    let t2 = prog.add_scalar("t2");
    let t3 = prog.add_scalar("t3");

    // objective: weighted t1 + t2 + t3 + beta; the K-norm weights carry
    // the 1/scale so the optimized objective equals the original-unit one
    let w = &hp.weights;
    prog.objective = vec![
        (prog.scalar_index(t1), w.k1 / scale),
        (prog.scalar_index(t2), w.k2 / scale),
        (prog.scalar_index(t3), w.mismatch),
        (prog.scalar_index(beta), w.beta),
    ];

    // 1' K1 1 >= eta (scaled units)
    let ones_row = DMatrix::from_element(1, t, 1.0);
    let row_sums = prog.data_times_var(&ones_row, k1); // 1 x n_hat
    let mut excl = LinExpr::constant(-eta);
    for j in 0..n_hat {
        excl.add(row_sums.entry(0, j), 1.0);
    }
    prog.add_inequality(excl);

    // mu_bar >= 0
    prog.add_inequality(LinExpr::var(prog.scalar_index(mu_bar)));

    // epigraph floors keeping the dilation blocks off the cone apex
    for t_var in [t1, t2, t3] {
        let mut floor = LinExpr::var(prog.scalar_index(t_var));
        floor.constant = -hp.norm_floor;
        prog.add_inequality(floor);
    }

    // trace anchor fixing the scale of the (P_bar, G, mu_bar, beta) ray
    let pbar_expr = prog.stored_matexpr(pbar);
    let mut anchor = LinExpr::constant(-(n as f64) * hp.pbar_scale);
    for d in 0..n {
        anchor.add(pbar_expr.entry(d, d), 1.0);
    }
    prog.add_equality(anchor);

    // P_bar - delta I >= 0
    let mut floor_expr = pbar_expr.clone();
    for d in 0..n {
        floor_expr.entry_mut(d, d).constant -= hp.pbar_floor;
    }
    prog.add_psd_block("pbar_floor", floor_expr);

    // beta I - P_bar >= 0
    let mut cap_expr = MatExpr::zeros(n, n);
    cap_expr.add_block(0, 0, &pbar_expr, -1.0);
    let beta_idx = prog.scalar_index(beta);
    for d in 0..n {
        cap_expr.entry_mut(d, d).push(beta_idx, 1.0);
    }
    prog.add_psd_block("pbar_cap", cap_expr);

    // X_plus K1 - (X K1) A_hat = 0   (n * n_hat rows)
    let xp_k1 = prog.data_times_var(&x_plus, k1);
    let x_k1 = prog.data_times_var(&x, k1);
    prog.add_equalities(&xp_k1.sub(&x_k1.right_mul(&hp.a_hat)));

    // X K2 = 0   (n * m_hat rows)
    let x_k2 = prog.data_times_var(&x, k2);
    prog.add_equalities(&x_k2);

    // coupling block, side 3n + m
    let side = 3 * n + m;
    let mut lmi = MatExpr::zeros(side, side);
    // (1,1) kappa P_bar
    lmi.add_block(0, 0, &pbar_expr, hp.kappa);
    // (2,3) [G; P_bar], rows m then n, at block row n, block col 2n+m
    let g_expr = prog.stored_matexpr(g);
    lmi.add_block(n, 2 * n + m, &g_expr, 1.0);
    lmi.add_block(n + m, 2 * n + m, &pbar_expr, 1.0);
    // (3,2) transpose
    lmi.add_block(2 * n + m, n, &g_expr.transpose(), 1.0);
    lmi.add_block(2 * n + m, n + m, &pbar_expr, 1.0);
    // (3,3) P_bar / (1 + mu1 + mu2 + mu3)
    lmi.add_block(2 * n + m, 2 * n + m, &pbar_expr, 1.0 / (1.0 + hp.mu_sum_123()));
    // minus mu_bar * Q2(data, scaled units)
    let q2 = assemble_q2(&delta, &x_plus, &h);
    let mu_idx = prog.scalar_index(mu_bar);
    for i in 0..side {
        for j in 0..side {
            let c = q2[(i, j)];
            if c != 0.0 {
                lmi.entry_mut(i, j).push(mu_idx, -c);
            }
        }
    }
    prog.add_psd_block("lmi_coupling", lmi);

    // spectral-norm epigraphs; K1/K2 links use the reduced coordinates,
    // exact because the basis is orthonormal
    prog.add_epigraph("norm_k1", t1, prog.stored_matexpr(k1));
    prog.add_epigraph("norm_k2", t2, prog.stored_matexpr(k2));
    let xp_k2 = prog.data_times_var(&x_plus, k2);
    let mismatch = xp_k2.sub(&x_k1.right_mul(&hp.b_hat));
    prog.add_epigraph("norm_mismatch", t3, mismatch);

    Ok(SynthesisProgram {
        program: prog,
        k1,
        k2,
        pbar,
        g,
        beta,
        mu_bar,
        t1,
        t2,
        t3,
        basis_rank: rank,
        data_scale: scale,
    })
}

/// Run the backend on an assembled program and decode the variables.
/// Infeasibility is reported through [`SynthesisSolution::status`], not
/// as an error; hard backend failures surface as `Err`.
pub fn solve(
    sp: &SynthesisProgram,
    solver: &dyn ConicSolver,
    opts: &SolverOptions,
) -> Result<SynthesisSolution> {
    let out = solver.solve(&sp.program, opts)?;
    Ok(decode_solution(sp, &out))
}

pub fn decode_solution(sp: &SynthesisProgram, out: &SolverOutcome) -> SynthesisSolution {
    let p = &sp.program;
    let c = sp.data_scale;
    SynthesisSolution {
        k1: p.decode(sp.k1, &out.x) / c,
        k2: p.decode(sp.k2, &out.x) / c,
        pbar: p.decode(sp.pbar, &out.x),
        g: p.decode(sp.g, &out.x),
        beta: p.decode_scalar(sp.beta, &out.x),
        mu_bar: p.decode_scalar(sp.mu_bar, &out.x) / (c * c),
        t1: p.decode_scalar(sp.t1, &out.x) / c,
        t2: p.decode_scalar(sp.t2, &out.x) / c,
        t3: p.decode_scalar(sp.t3, &out.x),
        status: out.status,
        objective: out.objective,
        iterations: out.iterations,
        residual_primal: out.residual_primal,
        residual_dual: out.residual_dual,
    }
}

/// Re-solve the certificate variables `(P_bar, G, beta, mu_bar)` for
/// maximum feasibility margin with `K1`, `K2` frozen at their phase-one
/// values.
///
/// The norm objective decouples from the coupling inequality (`K1`, `K2`
/// never appear in it), so after the optimizing solve the certificate
/// block can be recentred without touching the norms: maximize `s` such
/// that `P_bar >= (delta + s) I`, `beta I - P_bar >= s I`, the coupling
/// block `>= s I`, under the same trace anchor and `beta` capped at a
/// small multiple of its phase-one value. The margin problem has a
/// strictly interior optimum, which the interior-point backend solves to
/// high accuracy where the original (degenerate-cornered) problem stalls
/// at slack levels near the validation tolerance. `s` is unconstrained in
/// sign, so the refinement itself is always feasible; the achieved margin
/// is returned alongside the updated solution.
pub fn refine_margin(
    sol: &SynthesisSolution,
    ds: &DataSet,
    hp: &HyperParams,
    solver: &dyn ConicSolver,
    opts: &SolverOptions,
    beta_budget: f64,
) -> Result<(SynthesisSolution, f64)> {
    let n = ds.state_dim();
    let m = ds.input_dim();

    // same unit normalization as build_program
    let h_raw = ds.stacked();
    let mut scale = (h_raw.norm_squared() / (m + n) as f64).sqrt();
    if scale <= 0.0 || !scale.is_finite() {
        scale = 1.0;
    }
    let q2 = assemble_q2(
        &(ds.delta() / (scale * scale)),
        &(ds.x_plus() / scale),
        &(&h_raw / scale),
    );

    let mut prog = ConicProgram::new();
    let pbar = prog.add_symmetric("P_bar", n);
    let g = prog.add_full("G", m, n);
    let beta = prog.add_scalar("beta");
    let mu_bar = prog.add_scalar("mu_bar");
    let margin = prog.add_scalar("margin");
    let margin_idx = prog.scalar_index(margin);
    prog.objective = vec![(margin_idx, -1.0)];

    let pbar_expr = prog.stored_matexpr(pbar);
    let mut anchor = LinExpr::constant(-(n as f64) * hp.pbar_scale);
    for d in 0..n {
        anchor.add(pbar_expr.entry(d, d), 1.0);
    }
    prog.add_equality(anchor);

    prog.add_inequality(LinExpr::var(prog.scalar_index(mu_bar)));
    let mut beta_cap = LinExpr::constant(sol.beta.abs().max(hp.pbar_floor) * (1.0 + beta_budget));
    beta_cap.push(prog.scalar_index(beta), -1.0);
    prog.add_inequality(beta_cap);

    // P_bar - (delta + s) I >= 0
    let mut floor_expr = pbar_expr.clone();
    for d in 0..n {
        floor_expr.entry_mut(d, d).constant -= hp.pbar_floor;
        floor_expr.entry_mut(d, d).push(margin_idx, -1.0);
    }
    prog.add_psd_block("pbar_floor", floor_expr);

    // beta I - P_bar - s I >= 0
    let mut cap_expr = MatExpr::zeros(n, n);
    cap_expr.add_block(0, 0, &pbar_expr, -1.0);
    for d in 0..n {
        cap_expr.entry_mut(d, d).push(prog.scalar_index(beta), 1.0);
        cap_expr.entry_mut(d, d).push(margin_idx, -1.0);
    }
    prog.add_psd_block("pbar_cap", cap_expr);

    // coupling block - s I >= 0
    let side = 3 * n + m;
    let mut lmi = MatExpr::zeros(side, side);
    lmi.add_block(0, 0, &pbar_expr, hp.kappa);
    let g_expr = prog.stored_matexpr(g);
    lmi.add_block(n, 2 * n + m, &g_expr, 1.0);
    lmi.add_block(n + m, 2 * n + m, &pbar_expr, 1.0);
    lmi.add_block(2 * n + m, n, &g_expr.transpose(), 1.0);
    lmi.add_block(2 * n + m, n + m, &pbar_expr, 1.0);
    lmi.add_block(2 * n + m, 2 * n + m, &pbar_expr, 1.0 / (1.0 + hp.mu_sum_123()));
    let mu_idx = prog.scalar_index(mu_bar);
    for i in 0..side {
        for j in 0..side {
            if q2[(i, j)] != 0.0 {
                lmi.entry_mut(i, j).push(mu_idx, -q2[(i, j)]);
            }
        }
    }
    for d in 0..side {
        lmi.entry_mut(d, d).push(margin_idx, -1.0);
    }
    prog.add_psd_block("lmi_coupling", lmi);

    let out = solver.solve(&prog, opts)?;
    if !out.status.is_usable() {
        return Err(Error::Solver(format!(
            "margin refinement did not converge: {:?}",
            out.status
        )));
    }
    let achieved = out.x[margin_idx];

    let mut refined = sol.clone();
    refined.pbar = prog.decode(pbar, &out.x);
    refined.g = prog.decode(g, &out.x);
    refined.beta = prog.decode_scalar(beta, &out.x);
    refined.mu_bar = prog.decode_scalar(mu_bar, &out.x) / (scale * scale);
    Ok((refined, achieved))
}

/// Margin (in units of the trace-anchored scale) below which the
/// refinement outcome is considered no better than the raw solve.
const MIN_USEFUL_MARGIN: f64 = 0.0;

/// One-call synthesis: build, solve, recenter, validate.
///
/// The two-stage scheme (optimizing solve, then margin refinement with
/// the norms frozen) exists because the optimizing solve necessarily
/// terminates in a degenerate corner where interior-point slack sits
/// near the validation tolerance. Refinement trades an epsilon of
/// objective (`beta` may grow by `beta_budget`, default one percent) for
/// constraint margins orders of magnitude above `psd_slack`. If the
/// refinement solve fails, the phase-one solution is validated as-is.
pub fn synthesize(
    ds: &DataSet,
    hp: &HyperParams,
    solver: &dyn ConicSolver,
    opts: &SolverOptions,
) -> Result<(SynthesisSolution, ValidationReport)> {
    let sp = build_program(ds, hp)?;
    let sol = solve(&sp, solver, opts)?;

    // a clean infeasibility verdict stands on its own; anything else is
    // judged by the validator, with the solver status kept as provenance
    if matches!(
        sol.status,
        SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible
    ) || !is_finite(&sol)
    {
        let report = validate_solution(&sol, ds, hp);
        return Ok((sol, report));
    }

    let polished = match refine_margin(&sol, ds, hp, solver, opts, 1e-2) {
        Ok((refined, margin)) if margin > MIN_USEFUL_MARGIN => {
            // keep whichever point validates better
            let raw_worst = worst_violation(&validate_solution(&sol, ds, hp));
            let ref_worst = worst_violation(&validate_solution(&refined, ds, hp));
            if ref_worst <= raw_worst {
                let mut out = refined;
                out.status = sol.status;
                out
            } else {
                sol
            }
        }
        _ => sol,
    };

    // tightest valid epigraph values for the final variables
    let mut polished = polished;
    polished.t1 = linalg::spectral_norm(&polished.k1);
    polished.t2 = linalg::spectral_norm(&polished.k2);
    polished.t3 =
        linalg::spectral_norm(&(ds.x_plus() * &polished.k2 - ds.x() * &polished.k1 * &hp.b_hat));
    let w = &hp.weights;
    polished.objective =
        w.k1 * polished.t1 + w.k2 * polished.t2 + w.mismatch * polished.t3 + w.beta * polished.beta;

    let report = validate_solution(&polished, ds, hp);
    Ok((polished, report))
}

fn worst_violation(report: &ValidationReport) -> f64 {
    report
        .checks
        .iter()
        .map(|c| c.violation / c.tolerance.max(1e-300))
        .fold(0.0, f64::max)
}

fn is_finite(sol: &SynthesisSolution) -> bool {
    sol.k1.iter().all(|v| v.is_finite())
        && sol.k2.iter().all(|v| v.is_finite())
        && sol.pbar.iter().all(|v| v.is_finite())
        && sol.g.iter().all(|v| v.is_finite())
        && sol.beta.is_finite()
        && sol.mu_bar.is_finite()
}

/// First quadratic block of the coupling inequality: diagonal blocks
/// `kappa P_bar`, `0_{n+m}`, `P_bar / (1 + mu1 + mu2 + mu3)` and the
/// off-diagonal stack `[G; P_bar]` in the (2,3) position. Side `3n + m`.
pub fn assemble_q1(
    pbar: &DMatrix<f64>,
    g: &DMatrix<f64>,
    kappa: f64,
    mu_sum_123: f64,
) -> DMatrix<f64> {
    let n = pbar.nrows();
    let m = g.nrows();
    let side = 3 * n + m;
    let mut q = DMatrix::zeros(side, side);
    q.view_mut((0, 0), (n, n)).copy_from(&(pbar * kappa));
    q.view_mut((n, 2 * n + m), (m, n)).copy_from(g);
    q.view_mut((n + m, 2 * n + m), (n, n)).copy_from(pbar);
    q.view_mut((2 * n + m, n), (n, m)).copy_from(&g.transpose());
    q.view_mut((2 * n + m, n + m), (n, n)).copy_from(pbar);
    q.view_mut((2 * n + m, 2 * n + m), (n, n))
        .copy_from(&(pbar / (1.0 + mu_sum_123)));
    q
}

/// Data quadratic of the coupling inequality: blocks `Delta - X+ X+'`,
/// `X+ H'`, `-H H'` with a zero third block row/column. Side `3n + m`.
pub fn assemble_q2(delta: &DMatrix<f64>, x_plus: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x_plus.nrows();
    let nm = h.nrows();
    let side = 2 * n + nm;
    let mut q = DMatrix::zeros(side, side);
    q.view_mut((0, 0), (n, n))
        .copy_from(&(delta - x_plus * x_plus.transpose()));
    let cross = x_plus * h.transpose();
    q.view_mut((0, n), (n, nm)).copy_from(&cross);
    q.view_mut((n, 0), (nm, n)).copy_from(&cross.transpose());
    q.view_mut((n, n), (nm, nm))
        .copy_from(&(-(h * h.transpose())));
    q
}

/// Schur-complement form of the first quadratic, side `2n + m`:
/// `[[kappa P_bar, 0], [0, -(1 + mu_sum) [G; P_bar] P_bar^-1 [G; P_bar]']]`.
pub fn assemble_m1(
    pbar: &DMatrix<f64>,
    g: &DMatrix<f64>,
    kappa: f64,
    mu_sum_123: f64,
) -> Result<DMatrix<f64>> {
    let n = pbar.nrows();
    let m = g.nrows();
    let p = linalg::spd_inverse(pbar, "P_bar")?;
    let mut stack = DMatrix::zeros(m + n, n);
    stack.rows_mut(0, m).copy_from(g);
    stack.rows_mut(m, n).copy_from(pbar);
    let side = 2 * n + m;
    let mut out = DMatrix::zeros(side, side);
    out.view_mut((0, 0), (n, n)).copy_from(&(pbar * kappa));
    let quad = &stack * p * stack.transpose();
    out.view_mut((n, n), (m + n, m + n))
        .copy_from(&(quad * (-(1.0 + mu_sum_123))));
    Ok(out)
}

/// Data quadratic in Schur form, side `2n + m`:
/// `[[Delta - X+ X+', X+ H'], [H X+', -H H']]`.
pub fn assemble_m2(delta: &DMatrix<f64>, x_plus: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x_plus.nrows();
    let nm = h.nrows();
    let side = n + nm;
    let mut out = DMatrix::zeros(side, side);
    out.view_mut((0, 0), (n, n))
        .copy_from(&(delta - x_plus * x_plus.transpose()));
    let cross = x_plus * h.transpose();
    out.view_mut((0, n), (n, nm)).copy_from(&cross);
    out.view_mut((n, 0), (nm, n)).copy_from(&cross.transpose());
    out.view_mut((n, n), (nm, nm))
        .copy_from(&(-(h * h.transpose())));
    out
}

/// Result of re-checking one constraint on the returned variables.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    /// Diagnostic value (a minimum eigenvalue, residual norm, or margin).
    pub value: f64,
    /// Violation magnitude, `0.0` when satisfied exactly.
    pub violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ConstraintCheck {
    fn new(name: &'static str, value: f64, violation: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            violation,
            tolerance,
            pass: violation <= tolerance,
        }
    }
}

/// Full re-validation report; `pass` requires every constraint within
/// tolerance and a non-degenerate `K1`.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
    /// `K1` is numerically zero: formally feasible but useless, since the
    /// reconstruction map collapses.
    pub degenerate_k1: bool,
    /// The multiplier is non-negative but too small for the feasibility
    /// rationale that needs `mu_bar > 0` strictly.
    pub mu_bar_tiny: bool,
    pub pass: bool,
}

impl ValidationReport {
    pub fn table(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>14} {:>12} {:>10}  {}",
            "constraint", "value", "violation", "tol", "pass"
        );
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<16} {:>14.6e} {:>12.3e} {:>10.1e}  {}",
                c.name, c.value, c.violation, c.tolerance, c.pass
            );
        }
        if self.degenerate_k1 {
            let _ = writeln!(s, "warning: K1 is numerically zero (degenerate certificate)");
        }
        if self.mu_bar_tiny {
            let _ = writeln!(s, "warning: mu_bar < 1e-12; strict positivity is lost");
        }
        s
    }
}

/// Re-check every constraint of the synthesis program on a returned
/// solution, using dense assembly only (independent of the conic
/// encoding and of the factored parameterization).
pub fn validate_solution(
    sol: &SynthesisSolution,
    ds: &DataSet,
    hp: &HyperParams,
) -> ValidationReport {
    let h = ds.stacked();
    let mut checks = Vec::new();

    // P_bar symmetric and above its floor
    let asym = (&sol.pbar - sol.pbar.transpose()).norm();
    checks.push(ConstraintCheck::new("pbar_symmetric", asym, asym, hp.eq_tol));
    let pbar_min = linalg::min_eigenvalue(&sol.pbar);
    checks.push(ConstraintCheck::new(
        "pbar_floor",
        pbar_min,
        (hp.pbar_floor - pbar_min).max(0.0),
        hp.psd_slack,
    ));

    // beta positive, P_bar <= beta I
    checks.push(ConstraintCheck::new(
        "beta_positive",
        sol.beta,
        (-sol.beta).max(0.0),
        0.0,
    ));
    let cap_min = linalg::min_eigenvalue(&(DMatrix::identity(ds.state_dim(), ds.state_dim()) * sol.beta - &sol.pbar));
    checks.push(ConstraintCheck::new(
        "pbar_cap",
        cap_min,
        (-cap_min).max(0.0),
        hp.psd_slack,
    ));

    // exclusion row: 1' K1 1 >= eta
    let k1_sum: f64 = sol.k1.iter().sum();
    checks.push(ConstraintCheck::new(
        "k1_exclusion",
        k1_sum,
        (hp.eta - k1_sum).max(0.0),
        hp.eq_tol,
    ));

    // equality residuals
    let res_rom = (ds.x_plus() * &sol.k1 - ds.x() * &sol.k1 * &hp.a_hat).norm();
    checks.push(ConstraintCheck::new("rom_consistency", res_rom, res_rom, hp.eq_tol));
    let res_ann = (ds.x() * &sol.k2).norm();
    checks.push(ConstraintCheck::new("k2_annihilation", res_ann, res_ann, hp.eq_tol));

    // multiplier sign
    checks.push(ConstraintCheck::new(
        "mu_bar_nonneg",
        sol.mu_bar,
        (-sol.mu_bar).max(0.0),
        0.0,
    ));

    // coupling LMI
    let q1 = assemble_q1(&sol.pbar, &sol.g, hp.kappa, hp.mu_sum_123());
    let q2 = assemble_q2(ds.delta(), ds.x_plus(), &h);
    let lmi_min = linalg::min_eigenvalue(&(q1 - q2 * sol.mu_bar));
    checks.push(ConstraintCheck::new(
        "lmi_coupling",
        lmi_min,
        (-lmi_min).max(0.0),
        hp.psd_slack,
    ));

    let degenerate_k1 = sol.k1.norm() < K1_DEGENERATE_TOL;
    let mu_bar_tiny = sol.mu_bar >= 0.0 && sol.mu_bar < 1e-12;
    let pass = checks.iter().all(|c| c.pass) && !degenerate_k1;
    ValidationReport {
        checks,
        degenerate_k1,
        mu_bar_tiny,
        pass,
    }
}

/// Serialized form of a solution (`solution.json`): matrices row-major at
/// full precision plus status and residuals.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionJson {
    pub k1: MatrixJson,
    pub k2: MatrixJson,
    pub pbar: MatrixJson,
    pub g: MatrixJson,
    pub beta: f64,
    pub mu_bar: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: u32,
    pub residual_primal: f64,
    pub residual_dual: f64,
}

impl From<&SynthesisSolution> for SolutionJson {
    fn from(s: &SynthesisSolution) -> Self {
        Self {
            k1: MatrixJson::from(&s.k1),
            k2: MatrixJson::from(&s.k2),
            pbar: MatrixJson::from(&s.pbar),
            g: MatrixJson::from(&s.g),
            beta: s.beta,
            mu_bar: s.mu_bar,
            t1: s.t1,
            t2: s.t2,
            t3: s.t3,
            status: s.status,
            objective: s.objective,
            iterations: s.iterations,
            residual_primal: s.residual_primal,
            residual_dual: s.residual_dual,
        }
    }
}

impl SolutionJson {
    pub fn into_solution(self) -> Result<SynthesisSolution> {
        Ok(SynthesisSolution {
            k1: self.k1.try_into()?,
            k2: self.k2.try_into()?,
            pbar: self.pbar.try_into()?,
            g: self.g.try_into()?,
            beta: self.beta,
            mu_bar: self.mu_bar,
            t1: self.t1,
            t2: self.t2,
            t3: self.t3,
            status: self.status,
            objective: self.objective,
            iterations: self.iterations,
            residual_primal: self.residual_primal,
            residual_dual: self.residual_dual,
        })
    }
}
