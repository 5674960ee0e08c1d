//! Fixtures shared by the benchmarks.

use derham_shape::{generate_cube_mesh, CoefficientSet, GammaSelector, Model};

/// Cube with `n³` cells, mixed boundary and random SPD coefficients.
pub fn mixed_cube(n: usize) -> Model {
    let mesh = generate_cube_mesh(n).expect("valid resolution");
    let partition = GammaSelector::parse("x=0|y=0|z=1").expect("valid selector").apply(&mesh);
    let coeffs = CoefficientSet::random(mesh.n_tets(), 7);
    Model::new(mesh, partition, coeffs).expect("consistent model")
}
