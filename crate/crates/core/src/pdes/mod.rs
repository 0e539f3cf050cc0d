//! Benchmark problems: residuals, boundary data, noise, reference oracles and
//! conserved quantities.

mod cole_hopf;
mod conserved;
mod problem;
mod reference;
mod sampling;
mod split_step;

pub use cole_hopf::{burgers_exact, reference_burgers, GaussHermite, RuleLadder, ORDER_DOUBLING_TOL};
pub use conserved::{conserved_quantities, trapezoid, Conserved, FieldSlice};
pub use problem::{
    burgers_residual, burgers_residual_terms, schrodinger_residual, schrodinger_residual_terms,
    Domain, ProblemKind, ProblemSpec, T, X,
};
pub use reference::{ReferenceMeta, ReferenceSolution};
pub use sampling::{
    boundary_constraints, initial_condition, latin_hypercube, linspace, noise_draw, sample,
    BoundaryKind, BoundarySample, DataSample, NoiseSpec, SampleSet, SamplingConfig,
};
pub use split_step::{reference_schrodinger, schrodinger_fixed_substeps, spectral_dx, spectral_dxx, wavenumbers, STEP_HALVING_TOL};

/// Reference solution for a problem on the default validation grid
/// (256 x 201 for Schrodinger, 256 x 101 for Burgers).
pub fn reference_for(problem: &ProblemSpec) -> crate::Result<ReferenceSolution> {
    match problem.kind {
        ProblemKind::Schrodinger => reference_schrodinger(&problem.domain, 256, 201),
        ProblemKind::Burgers => reference_burgers(&problem.domain, problem.viscosity, 256, 101),
    }
}
