pub mod connecting;
pub mod error;
pub mod forward;
pub mod gl;
pub mod goursat;
pub mod model;

pub use connecting::{
    connecting_form_from_interior, connecting_kernel_from_response,
    connecting_kernel_from_response_with, connecting_kernel_from_w, kernel_from_galerkin,
    probe_galerkin, solve_blagoveshchenskii, ConnectingKernel, ProbeGalerkin, PsiField,
    SweepMethod,
};
pub use error::{Error, Result};
pub use forward::{
    apply_control_operator, apply_response, duhamel_eval, fd_boundary_trace, fd_forward,
    solve_control, SpaceTimeField, WaveSnapshot,
};
pub use gl::{
    composition_residual, gl_residual, operator_identity_residual, recover_potential, solve_gl,
    solve_gl_all, solve_gl_column, window_error, z_from_w, GLColumn, GLSolution, WindowError,
};
pub use goursat::{
    diagonal_residual, response_kernel, solve_goursat, GoursatSolution, ResponseData,
};
pub use model::{
    catalogue, causal_convolution, cumulative_trapezoid, trapezoid, CoefficientField,
    ControlSignal, Domain, Family, GridSpec, KernelKind, MemoryKernel, TestProblem,
    TriangularField,
};
