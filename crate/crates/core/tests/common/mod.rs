//! Shared fixtures for the integration tests.

use nalgebra::{DMatrix, DVector};
use romsyn_core::data::{run_experiment, DataSet, ExperimentConfig};
use romsyn_core::sdp::HyperParams;
use romsyn_core::system::{BoxBounds, DisturbanceMode, PlantModel};

/// Six-state two-input chain with weak cross coupling; the benchmark
/// plant used across the suite.
pub fn bench_plant(epsilon: f64) -> PlantModel {
    let a = DMatrix::from_row_slice(
        6,
        6,
        &[
            0.82, 0.10, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.78, 0.12, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.75, 0.10, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.72, 0.08, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.70, 0.10, //
            0.05, 0.0, 0.0, 0.0, 0.0, 0.68,
        ],
    );
    let b = DMatrix::from_row_slice(
        6,
        2,
        &[
            0.68, 0.0, //
            0.34, 0.0, //
            0.17, 0.0, //
            0.0, 0.34, //
            0.0, 0.68, //
            0.0, 0.34,
        ],
    );
    PlantModel::new(a, b, BoxBounds::centered_cube(5.0, 2), epsilon).unwrap()
}

/// Benchmark hyperparameters: kappa = 0.7, mu = (0.5, 0.25, 0.25, 0.1,
/// 1, 1), reduced model 0.99 I / 1e-4 I in two dimensions.
pub fn bench_hyperparams() -> HyperParams {
    HyperParams::new(
        0.7,
        [0.5, 0.25, 0.25, 0.1, 1.0, 1.0],
        0.01,
        DMatrix::identity(2, 2) * 0.99,
        DMatrix::identity(2, 2) * 1e-4,
    )
}

pub fn bench_dataset(seed: u64, horizon: usize, record_oracle: bool) -> DataSet {
    let plant = bench_plant(0.0014);
    let cfg = ExperimentConfig {
        horizon,
        excitation_box: BoxBounds::centered_cube(5.0, 2),
        seed,
        x0: DVector::zeros(6),
        disturbance_mode: DisturbanceMode::UniformBall,
        record_oracle,
    };
    run_experiment(&plant, &cfg).unwrap()
}

/// Small 3-state plant for quick solver round trips.
pub fn small_plant(epsilon: f64) -> PlantModel {
    let a = DMatrix::from_row_slice(3, 3, &[0.8, 0.1, 0.0, 0.0, 0.7, 0.1, 0.05, 0.0, 0.6]);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.3, 0.5, 0.0, 1.0]);
    PlantModel::new(a, b, BoxBounds::centered_cube(2.0, 2), epsilon).unwrap()
}

pub fn small_dataset(seed: u64, epsilon: f64, horizon: usize) -> DataSet {
    let plant = small_plant(epsilon);
    let cfg = ExperimentConfig {
        horizon,
        excitation_box: BoxBounds::centered_cube(2.0, 2),
        seed,
        x0: DVector::zeros(3),
        disturbance_mode: DisturbanceMode::UniformBall,
        record_oracle: true,
    };
    run_experiment(&plant, &cfg).unwrap()
}

pub fn small_hyperparams() -> HyperParams {
    HyperParams::new(
        0.7,
        [0.5, 0.25, 0.25, 0.1, 1.0, 1.0],
        0.01,
        DMatrix::identity(2, 2) * 0.9,
        DMatrix::identity(2, 2) * 0.01,
    )
}
