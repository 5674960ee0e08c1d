//! Discrete Helmholtz decomposition of 1-forms on the tangential free DOFs
//!
//! ```text
//! x = x_grad + x_harm + x_curl,   x_grad ∈ range G,   x_harm ∈ ker C ∩ (range G)^⊥,
//! ```
//!
//! orthogonal in the `M₁(ε)` inner product, and the dimension of the
//! harmonic space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{mass_matrix, WeightMode};
use crate::derham::{BoundarySide, DeRhamComplex};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, null_space, psd_pseudo_solve, quad_form, rank, restrict};
use crate::model::Model;

/// Threshold for numerical ranks, relative to the largest pivot.
pub const RANK_TOL: f64 = 1e-10;

/// `dim(ker C) − rank(G)` on the tangential free DOFs. The result is
/// topological, so no coefficients are needed.
pub fn cohomology_dim(complex: &DeRhamComplex) -> usize {
    let side = BoundarySide::Tangential;
    let (v, e, f) = (
        complex.free_dofs(0, side),
        complex.free_dofs(1, side),
        complex.free_dofs(2, side),
    );
    let g = restrict(complex.derivative(0).expect("degree 0"), e, v);
    let c = restrict(complex.derivative(1).expect("degree 1"), f, e);
    let nullity_c = e.len() - rank(&c, RANK_TOL);
    nullity_c - rank(&g, RANK_TOL)
}

#[derive(Debug, Clone)]
pub struct HodgeSplit {
    pub x: DVector<f64>,
    pub x_grad: DVector<f64>,
    pub x_harm: DVector<f64>,
    pub x_curl: DVector<f64>,
    /// Potential with `x_grad = G p`, on free vertices.
    pub potential: DVector<f64>,
    pub norms: HodgeNorms,
}

/// `M₁(ε)` norms of the input and its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HodgeNorms {
    pub x: f64,
    pub grad: f64,
    pub harm: f64,
    pub curl: f64,
}

impl HodgeSplit {
    /// Largest `|⟨a, b⟩| / ‖x‖²` over the three component pairs.
    pub fn max_orthogonality(&self, m: &DMatrix<f64>) -> f64 {
        let parts = [&self.x_grad, &self.x_harm, &self.x_curl];
        let scale = quad_form(m, &self.x).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                worst = worst.max((parts[i].dot(&(m * parts[j]))).abs() / scale);
            }
        }
        worst
    }

    /// `|‖x‖² − Σ‖x_i‖²| / ‖x‖²`
    pub fn pythagoras_defect(&self) -> f64 {
        let n = &self.norms;
        let total = n.x * n.x;
        (total - n.grad * n.grad - n.harm * n.harm - n.curl * n.curl).abs() / total.max(f64::MIN_POSITIVE)
    }

    /// `‖x − Σ x_i‖_∞ / ‖x‖_∞`
    pub fn reconstruction_error(&self) -> f64 {
        let sum = &self.x_grad + &self.x_harm + &self.x_curl;
        (&self.x - sum).amax() / self.x.amax().max(f64::MIN_POSITIVE)
    }
}

/// `M₁(ε)` restricted to the tangential free edges.
pub fn edge_mass(model: &Model) -> Result<DMatrix<f64>> {
    let free = model.complex.free_dofs(1, BoundarySide::Tangential);
    let m = mass_matrix(&model.mesh, 1, &model.coeffs.mass_weight(1)?, WeightMode::Spd)?;
    Ok(restrict(&m, free, free))
}

/// Splits `x` (given on the tangential free edges) into its gradient,
/// harmonic and curl parts.
pub fn helmholtz_decompose(model: &Model, x: &DVector<f64>) -> Result<HodgeSplit> {
    let side = BoundarySide::Tangential;
    let cx = &model.complex;
    let (v, e, f) = (cx.free_dofs(0, side), cx.free_dofs(1, side), cx.free_dofs(2, side));
    if x.len() != e.len() {
        return Err(Error::InvalidInput(format!(
            "field has {} entries for {} free edges",
            x.len(),
            e.len()
        )));
    }
    let m = edge_mass(model)?;
    let g = restrict(cx.derivative(0)?, e, v);
    let c = restrict(cx.derivative(1)?, f, e);

    // GᵀMG p = GᵀM x; the pseudo-inverse handles the constant kernel when
    // no vertex is constrained
    let mg = &m * &g;
    let p = psd_pseudo_solve(&(g.transpose() * &mg), &(mg.transpose() * x), 1e-12);
    let x_grad = &g * &p;
    let rest = x - &x_grad;

    // M-orthogonal projection onto ker C; rest ⊥ range G ⊂ ker C already
    let z = null_space(&c, RANK_TOL);
    let x_harm = if z.ncols() == 0 {
        DVector::zeros(x.len())
    } else {
        let mz = &m * &z;
        let gram = z.transpose() * &mz;
        let coef = cholesky(&gram)?.solve(&(mz.transpose() * &rest));
        &z * coef
    };
    let x_curl = &rest - &x_harm;
    let norm = |y: &DVector<f64>| quad_form(&m, y).max(0.0).sqrt();
    let norms = HodgeNorms {
        x: norm(x),
        grad: norm(&x_grad),
        harm: norm(&x_harm),
        curl: norm(&x_curl),
    };
    Ok(HodgeSplit {
        x: x.clone(),
        x_grad,
        x_harm,
        x_curl,
        potential: p,
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigsolve::{maxwell_spectrum, SolveOptions};
    use crate::mesh::{generate_cube_mesh, BoundaryPartition, GammaSelector, Point, TetMesh};
    use crate::CoefficientSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, sel: &str, coeffs: Option<u64>) -> Model {
        let mesh = generate_cube_mesh(n).unwrap();
        let p = GammaSelector::parse(sel).unwrap().apply(&mesh);
        let c = match coeffs {
            Some(seed) => CoefficientSet::random(mesh.n_tets(), seed),
            None => CoefficientSet::identity(mesh.n_tets()),
        };
        Model::new(mesh, p, c).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn cube_has_trivial_cohomology() {
        for sel in ["all", "none", "z0"] {
            assert_eq!(cohomology_dim(&model(2, sel, None).complex), 0, "{sel}");
        }
        let tet = TetMesh::new(
            vec![Point::zeros(), Point::x(), Point::y(), Point::z()],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        let cx = DeRhamComplex::build(&tet, &BoundaryPartition::none(&tet));
        assert_eq!(cohomology_dim(&cx), 0);
    }

    #[test]
    fn pure_gradient() {
        let md = model(2, "z0", Some(3));
        let side = BoundarySide::Tangential;
        let v = md.complex.free_dofs(0, side);
        let e = md.complex.free_dofs(1, side);
        let g = restrict(md.complex.derivative(0).unwrap(), e, v);
        let x = &g * random_vec(v.len(), 1);
        let s = helmholtz_decompose(&md, &x).unwrap();
        assert!((&s.x_grad - &x).amax() < 1e-10 * x.amax());
        assert!(s.x_harm.amax() < 1e-10 * x.amax());
        assert!(s.x_curl.amax() < 1e-10 * x.amax());
    }

    #[test]
    fn maxwell_eigenvector_is_pure_curl() {
        let md = model(2, "all", None);
        let r = maxwell_spectrum(&md, &SolveOptions::default()).unwrap();
        let x = r.vectors[0].column(0).into_owned();
        let s = helmholtz_decompose(&md, &x).unwrap();
        assert!(s.x_grad.amax() < 1e-10 * x.amax());
        assert!((&s.x_curl - &x).amax() < 1e-10 * x.amax());
    }

    #[test]
    fn random_field_orthogonal_split() {
        for (sel, seed) in [("all", Some(5)), ("none", None), ("x=0|y=1", Some(6))] {
            let md = model(2, sel, seed);
            let m = edge_mass(&md).unwrap();
            let x = random_vec(m.nrows(), 9);
            let s = helmholtz_decompose(&md, &x).unwrap();
            assert!(s.x_harm.amax() < 1e-10 * x.amax());
            assert!(s.reconstruction_error() < 1e-12);
            assert!(s.max_orthogonality(&m) < 1e-10, "{sel}");
            assert!(s.pythagoras_defect() < 1e-9);
            // idempotence on each component
            let g = helmholtz_decompose(&md, &s.x_grad).unwrap();
            assert!((&g.x_grad - &s.x_grad).amax() < 1e-9 * x.amax());
            assert!(g.x_curl.amax() < 1e-9 * x.amax());
            let c = helmholtz_decompose(&md, &s.x_curl).unwrap();
            assert!((&c.x_curl - &s.x_curl).amax() < 1e-9 * x.amax());
            assert!(c.x_grad.amax() < 1e-9 * x.amax());
        }
    }

    #[test]
    fn wrong_length_is_rejected() {
        let md = model(1, "none", None);
        assert!(matches!(
            helmholtz_decompose(&md, &DVector::zeros(3)),
            Err(Error::InvalidInput(_))
        ));
    }
}
