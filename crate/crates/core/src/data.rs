//! Single-trajectory experiment harness: runs the plant over a finite
//! horizon, assembles the data matrices, computes the disturbance cap,
//! and checks the excitation rank condition.
//!
//! The recorded disturbance sequence is quarantined behind
//! [`DataSet::oracle_w`]: it exists so tests can verify the cap chain and
//! the residual identity, and nothing on the synthesis path reads it.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::system::{BoxBounds, DisturbanceMode, DisturbanceSampler, PlantModel};

/// Relative singular-value threshold for the numeric rank decision.
pub const RANK_TOL: f64 = 1e-8;

/// Disturbance cap `eps^2 * T * I_n` bounding `W W^T` for any sequence
/// with `|w| <= eps`.
pub fn disturbance_cap(epsilon: f64, horizon: usize, n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) * (epsilon * epsilon * horizon as f64)
}

/// Input--state data from one finite-horizon experiment.
#[derive(Debug, Clone)]
pub struct DataSet {
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    x_plus: DMatrix<f64>,
    /// Oracle-only record of the realized disturbances; never read by
    /// synthesis code.
    w_true: Option<DMatrix<f64>>,
    horizon: usize,
    epsilon: f64,
    delta: DMatrix<f64>,
    seed: u64,
}

impl DataSet {
    pub fn new(
        x: DMatrix<f64>,
        u: DMatrix<f64>,
        x_plus: DMatrix<f64>,
        epsilon: f64,
        seed: u64,
        w_true: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let t = x.ncols();
        if u.ncols() != t || x_plus.ncols() != t {
            return Err(Error::dimension(
                "DataSet::new",
                "columns",
                format!("{t}"),
                format!("U: {}, X_plus: {}", u.ncols(), x_plus.ncols()),
            ));
        }
        if x_plus.nrows() != x.nrows() {
            return Err(Error::dimension(
                "DataSet::new",
                "X_plus",
                format!("{} rows", x.nrows()),
                format!("{} rows", x_plus.nrows()),
            ));
        }
        if let Some(w) = &w_true {
            if w.nrows() != x.nrows() || w.ncols() != t {
                return Err(Error::dimension(
                    "DataSet::new",
                    "W_true",
                    format!("{}x{t}", x.nrows()),
                    format!("{}x{}", w.nrows(), w.ncols()),
                ));
            }
        }
        let delta = disturbance_cap(epsilon, t, x.nrows());
        Ok(Self {
            x,
            u,
            x_plus,
            w_true,
            horizon: t,
            epsilon,
            delta,
            seed,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn x_plus(&self) -> &DMatrix<f64> {
        &self.x_plus
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn state_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Oracle-only access to the realized disturbances. Test code may use
    /// this to verify the cap chain; the synthesis path must not.
    pub fn oracle_w(&self) -> Option<&DMatrix<f64>> {
        self.w_true.as_ref()
    }

    /// Stacked data `H = [U; X]`, inputs above states.
    pub fn stacked(&self) -> DMatrix<f64> {
        let m = self.input_dim();
        let n = self.state_dim();
        let mut h = DMatrix::zeros(m + n, self.horizon);
        h.rows_mut(0, m).copy_from(&self.u);
        h.rows_mut(m, n).copy_from(&self.x);
        h
    }

    /// Numeric rank of `H = [U; X]` against the full-row-rank requirement
    /// `m + n`.
    pub fn rank_check(&self, rel_tol: f64) -> RankCheck {
        let h = self.stacked();
        let (rank, sigma_max) = linalg::numeric_rank(&h, rel_tol);
        let required = self.input_dim() + self.state_dim();
        RankCheck {
            rank,
            required,
            satisfied: rank == required,
            sigma_max,
        }
    }

    /// SHA-256 over a canonical little-endian byte encoding of the data
    /// matrices and scalars; used for certificate provenance.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        let mut push_mat = |m: &DMatrix<f64>| {
            hasher.update((m.nrows() as u64).to_le_bytes());
            hasher.update((m.ncols() as u64).to_le_bytes());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    hasher.update(m[(i, j)].to_le_bytes());
                }
            }
        };
        push_mat(&self.x);
        push_mat(&self.u);
        push_mat(&self.x_plus);
        hasher.update(self.epsilon.to_le_bytes());
        hasher.update((self.horizon as u64).to_le_bytes());
        hex_string(&hasher.finalize())
    }

    /// Write the dataset as a directory of CSV files plus `meta.json`.
    /// `W_true.csv` is written only when the oracle record is present.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_csv(&dir.join("X.csv"), &self.x)?;
        write_csv(&dir.join("U.csv"), &self.u)?;
        write_csv(&dir.join("Xplus.csv"), &self.x_plus)?;
        if let Some(w) = &self.w_true {
            write_csv(&dir.join("W_true.csv"), w)?;
        }
        let meta = DataSetMeta {
            t: self.horizon,
            epsilon: self.epsilon,
            n: self.state_dim(),
            m: self.input_dim(),
            seed: self.seed,
        };
        let f = fs::File::create(dir.join("meta.json"))?;
        serde_json::to_writer_pretty(f, &meta)?;
        Ok(())
    }

    /// Load a dataset previously written by [`DataSet::save_dir`].
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta: DataSetMeta = serde_json::from_reader(fs::File::open(&meta_path)?)?;
        let x = read_csv(&dir.join("X.csv"))?;
        let u = read_csv(&dir.join("U.csv"))?;
        let x_plus = read_csv(&dir.join("Xplus.csv"))?;
        if x.nrows() != meta.n || u.nrows() != meta.m || x.ncols() != meta.t {
            return Err(Error::Parse {
                path: meta_path.display().to_string(),
                reason: "meta.json dimensions disagree with CSV contents".into(),
            });
        }
        let w_path = dir.join("W_true.csv");
        let w_true = if w_path.exists() {
            Some(read_csv(&w_path)?)
        } else {
            None
        };
        DataSet::new(x, u, x_plus, meta.epsilon, meta.seed, w_true)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DataSetMeta {
    t: usize,
    epsilon: f64,
    n: usize,
    m: usize,
    seed: u64,
}

/// Outcome of the excitation rank check on `H = [U; X]`.
#[derive(Debug, Clone, Serialize)]
pub struct RankCheck {
    pub rank: usize,
    pub required: usize,
    pub satisfied: bool,
    pub sigma_max: f64,
}

/// How the experiment is driven.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Experiment horizon `T`; must satisfy `T >= m + n`.
    pub horizon: usize,
    /// Excitation inputs are drawn i.i.d. uniform from this box.
    pub excitation_box: BoxBounds,
    /// Seed driving both excitation and disturbances.
    pub seed: u64,
    /// Initial state `x(0)`.
    pub x0: DVector<f64>,
    pub disturbance_mode: DisturbanceMode,
    /// Record the realized disturbances for oracle tests.
    pub record_oracle: bool,
}

/// Run one finite-horizon experiment on the plant and collect
/// `X`, `U`, `X_plus` (and optionally the oracle disturbance record).
pub fn run_experiment(plant: &PlantModel, cfg: &ExperimentConfig) -> Result<DataSet> {
    let n = plant.state_dim();
    let m = plant.input_dim();
    if cfg.horizon < m + n {
        return Err(Error::invalid(
            "horizon",
            format!("T = {} < m + n = {}", cfg.horizon, m + n),
        ));
    }
    if cfg.x0.len() != n {
        return Err(Error::dimension(
            "run_experiment",
            "x0",
            format!("{n}"),
            format!("{}", cfg.x0.len()),
        ));
    }
    if cfg.excitation_box.dim() != m {
        return Err(Error::dimension(
            "run_experiment",
            "excitation_box",
            format!("{m}"),
            format!("{}", cfg.excitation_box.dim()),
        ));
    }

    let mut sampler =
        DisturbanceSampler::new(plant.disturbance_radius(), cfg.disturbance_mode, cfg.seed)?;
    // independent stream for the excitation, forked so one seed fixes both
    let mut input_rng = rand::SeedableRng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let t = cfg.horizon;

    let mut x = DMatrix::zeros(n, t);
    let mut u = DMatrix::zeros(m, t);
    let mut x_plus = DMatrix::zeros(n, t);
    let mut w_rec = if cfg.record_oracle {
        Some(DMatrix::zeros(n, t))
    } else {
        None
    };

    let mut state = cfg.x0.clone();
    for k in 0..t {
        let input = cfg
            .excitation_box
            .sample::<rand_chacha::ChaCha8Rng>(&mut input_rng);
        let w = sampler.sample(n);
        let next = plant.step(&state, &input, &w)?;
        x.set_column(k, &state);
        u.set_column(k, &input);
        x_plus.set_column(k, &next);
        if let Some(rec) = &mut w_rec {
            rec.set_column(k, &w);
        }
        state = next;
    }

    DataSet::new(x, u, x_plus, plant.disturbance_radius(), cfg.seed, w_rec)
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Row-major CSV with shortest round-trip float formatting (exact per
/// IEEE-754 double).
pub fn write_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        if let Some(first) = rows.first() {
            if vals.len() != first.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    reason: format!("ragged row at line {}", lineno + 1),
                });
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            reason: "empty file".into(),
        });
    }
    let nrows = rows.len();
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn quiet_plant(n: usize, m: usize, epsilon: f64) -> PlantModel {
        let a = DMatrix::identity(n, n) * 0.5;
        let b = DMatrix::from_fn(n, m, |i, j| if i == j { 1.0 } else { 0.2 });
        PlantModel::new(a, b, BoxBounds::centered_cube(1.0, m), epsilon).unwrap()
    }

    fn cfg(horizon: usize, seed: u64, n: usize, m: usize) -> ExperimentConfig {
        ExperimentConfig {
            horizon,
            excitation_box: BoxBounds::centered_cube(1.0, m),
            seed,
            x0: DVector::zeros(n),
            disturbance_mode: DisturbanceMode::UniformBall,
            record_oracle: true,
        }
    }

    #[test]
    fn cap_values() {
        let cap = disturbance_cap(0.0014, 300, 6);
        assert_eq!(cap, DMatrix::identity(6, 6) * 5.88e-4);
        assert_eq!(disturbance_cap(0.0, 17, 3), DMatrix::zeros(3, 3));
        assert_eq!(disturbance_cap(1.0, 1, 2), DMatrix::identity(2, 2));
    }

    #[test]
    fn zero_everything_stays_zero() {
        let plant = PlantModel::new(
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::zeros(2, 1),
            BoxBounds::centered_cube(0.0, 1),
            0.0,
        )
        .unwrap();
        let mut c = cfg(4, 0, 2, 1);
        c.excitation_box = BoxBounds::centered_cube(0.0, 1);
        let ds = run_experiment(&plant, &c).unwrap();
        assert_eq!(ds.x(), &DMatrix::zeros(2, 4));
        assert_eq!(ds.x_plus(), &DMatrix::zeros(2, 4));
        assert_eq!(ds.u(), &DMatrix::zeros(1, 4));
    }

    #[test]
    fn shift_property_links_x_and_xplus() {
        let plant = quiet_plant(3, 2, 0.01);
        let ds = run_experiment(&plant, &cfg(20, 7, 3, 2)).unwrap();
        for k in 0..ds.horizon() - 1 {
            assert_eq!(ds.x_plus().column(k), ds.x().column(k + 1));
        }
    }

    #[test]
    fn stored_delta_matches_cap_bitwise() {
        let plant = quiet_plant(3, 2, 0.0014);
        let ds = run_experiment(&plant, &cfg(300, 1, 3, 2)).unwrap();
        assert_eq!(ds.delta(), &disturbance_cap(0.0014, 300, 3));
    }

    #[test]
    fn oracle_residual_identity_and_cap_chain() {
        let plant = quiet_plant(4, 2, 0.05);
        let ds = run_experiment(&plant, &cfg(40, 3, 4, 2)).unwrap();
        let w = ds.oracle_w().unwrap();
        // X_plus = A X + B U + W_true
        let recon = plant.a() * ds.x() + plant.b() * ds.u() + w;
        assert_relative_eq!(recon, ds.x_plus().clone(), epsilon = 1e-10);
        // W W^T <= sum |w_k|^2 I <= Delta (psd orderings)
        let wwt = w * w.transpose();
        let sum_sq: f64 = (0..ds.horizon()).map(|k| w.column(k).norm_squared()).sum();
        let mid = DMatrix::identity(4, 4) * sum_sq;
        assert!(linalg::min_eigenvalue(&(mid.clone() - &wwt)) >= -1e-10);
        assert!(linalg::min_eigenvalue(&(ds.delta() - mid)) >= -1e-10);
    }

    #[test]
    fn stacked_layout() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let u = DMatrix::zeros(1, 2);
        let ds = DataSet::new(x.clone(), u.clone(), x.clone(), 0.0, 0, None).unwrap();
        let h = ds.stacked();
        assert_eq!(h.nrows(), 3);
        assert_eq!(h.row(0), u.row(0));
        assert_eq!(DMatrix::from(h.rows(1, 2)), x);
    }

    #[test]
    fn zero_input_data_fails_rank() {
        let plant = PlantModel::new(
            DMatrix::identity(2, 2) * 0.9,
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            BoxBounds::centered_cube(0.0, 1),
            0.0,
        )
        .unwrap();
        let mut c = cfg(10, 0, 2, 1);
        c.excitation_box = BoxBounds::centered_cube(0.0, 1);
        c.x0 = DVector::from_vec(vec![1.0, -1.0]);
        let ds = run_experiment(&plant, &c).unwrap();
        let rc = ds.rank_check(RANK_TOL);
        assert!(!rc.satisfied);
        assert!(rc.rank <= 2);
    }

    #[test]
    fn excited_data_passes_rank_at_minimal_horizon() {
        let plant = quiet_plant(3, 2, 0.01);
        let ds = run_experiment(&plant, &cfg(5, 11, 3, 2)).unwrap();
        let rc = ds.rank_check(RANK_TOL);
        assert!(rc.satisfied, "rank {} of {}", rc.rank, rc.required);
    }

    #[test]
    fn rank_invariant_under_column_permutation() {
        let plant = quiet_plant(3, 2, 0.01);
        let ds = run_experiment(&plant, &cfg(12, 13, 3, 2)).unwrap();
        let t = ds.horizon();
        // reverse the sample order and rebuild
        let perm: Vec<usize> = (0..t).rev().collect();
        let permute = |m: &DMatrix<f64>| {
            DMatrix::from_fn(m.nrows(), t, |i, j| m[(i, perm[j])])
        };
        let ds2 = DataSet::new(
            permute(ds.x()),
            permute(ds.u()),
            permute(ds.x_plus()),
            ds.epsilon(),
            0,
            None,
        )
        .unwrap();
        assert_eq!(ds.rank_check(RANK_TOL).rank, ds2.rank_check(RANK_TOL).rank);
    }

    #[test]
    fn horizon_below_minimum_rejected() {
        let plant = quiet_plant(3, 2, 0.0);
        let err = run_experiment(&plant, &cfg(4, 0, 3, 2)).unwrap_err();
        assert!(format!("{err}").contains("m + n"));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let plant = quiet_plant(3, 2, 0.02);
        let ds = run_experiment(&plant, &cfg(15, 21, 3, 2)).unwrap();
        let dir = std::env::temp_dir().join(format!("romsyn_ds_{}", std::process::id()));
        ds.save_dir(&dir).unwrap();
        let loaded = DataSet::load_dir(&dir).unwrap();
        assert_eq!(ds.x(), loaded.x());
        assert_eq!(ds.u(), loaded.u());
        assert_eq!(ds.x_plus(), loaded.x_plus());
        assert_eq!(ds.oracle_w(), loaded.oracle_w());
        assert_eq!(ds.epsilon(), loaded.epsilon());
        assert_eq!(ds.content_hash(), loaded.content_hash());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn same_seed_same_data() {
        let plant = quiet_plant(3, 2, 0.02);
        let a = run_experiment(&plant, &cfg(30, 5, 3, 2)).unwrap();
        let b = run_experiment(&plant, &cfg(30, 5, 3, 2)).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.u(), b.u());
        assert_eq!(a.content_hash(), b.content_hash());
    }
}
