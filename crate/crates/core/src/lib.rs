//! Discrete de Rham complexes on tetrahedral meshes: Laplace and Maxwell
//! eigenvalues with mixed boundary conditions and weighted coefficients,
//! pullbacks under piecewise-affine deformations, and shape derivatives of
//! simple eigenvalues checked against finite differences.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod derham;
pub mod eigsolve;
pub mod error;
pub mod hodge;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod shapederiv;
pub mod transform;

pub use assembly::{mass_matrix, stiffness_matrix, CoefficientSet, Weight, WeightMode};
pub use derham::{BoundarySide, DeRhamComplex};
pub use eigsolve::{
    dual_eigenvector, laplace_spectrum, maxwell_spectrum, rayleigh_quotient, solve_gevp,
    vector_laplacian_spectrum, Branch, EigenResult, Eigenpair, LaplaceSide, LevelOperators,
    SolveOptions, SolverPath, SpectrumReport, VectorLaplacianSpectrum,
};
pub use error::{Error, Result};
pub use hodge::{cohomology_dim, helmholtz_decompose, HodgeNorms, HodgeSplit};
pub use mesh::{generate_cube_mesh, tag_boundary, BoundaryPartition, GammaSelector, Point, TetMesh};
pub use model::Model;
pub use shapederiv::{
    fd_check, hadamard_laplace_dual, hadamard_laplace_primal, hadamard_maxwell, hellmann_feynman,
    hellmann_feynman_check, shape_derivative, FdRow, FdSummary, HellmannFeynman, Problem,
    ShapeDerivativeReport, ShapeOptions,
};
pub use transform::{
    coefficient_derivative, inverse_identities_check, make_map, pullback_dof_map,
    transform_coefficients, DerivativeWeights, PwAffineMap, VertexField,
};
