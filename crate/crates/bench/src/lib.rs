//! Shared fixtures for the solver benchmarks.

use memwave_core::{CoefficientField, Family, GridSpec, MemoryKernel};

/// Gaussian potential with exponentially decaying memory on `[0, 1]`.
pub fn gaussian_memory(cells: usize) -> (GridSpec, CoefficientField, MemoryKernel) {
    let grid = GridSpec::new(1.0, cells).expect("valid grid");
    let q = CoefficientField::from_family(
        grid,
        &Family::GaussianBump {
            center: 0.5,
            width: 0.1,
            amplitude: 1.0,
        },
    )
    .expect("valid potential");
    let k = MemoryKernel::from_family(
        grid,
        &Family::ExpDecay {
            amplitude: 1.0,
            rate: 1.0,
        },
    )
    .expect("valid kernel");
    (grid, q, k)
}
