//! Weighted Whitney mass matrices and stiffness matrices.
//!
//! Weights are piecewise constant per tet. All element integrals are exact:
//! every Whitney product is a quadratic polynomial in barycentric
//! coordinates, integrated with `∫ λ_i λ_j = |T| (1 + δ_ij) / 20`.
//!
//! The canonical weight of each form degree is `ν` (q = 0), `ε` (q = 1),
//! `μ⁻¹` (q = 2) and `κ⁻¹` (q = 3), see [`CoefficientSet::mass_weight`].

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derham::DeRhamComplex;
use crate::error::{Error, Result};
use crate::mesh::{edge_matrix, TetMesh, LOCAL_EDGES};

/// Per-tet weight: scalar for q ∈ {0, 3}, symmetric 3×3 for q ∈ {1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Scalar(Vec<f64>),
    Tensor(Vec<Matrix3<f64>>),
}

impl Weight {
    pub fn len(&self) -> usize {
        match self {
            Weight::Scalar(v) => v.len(),
            Weight::Tensor(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scale(&self, a: f64) -> Weight {
        match self {
            Weight::Scalar(v) => Weight::Scalar(v.iter().map(|x| a * x).collect()),
            Weight::Tensor(v) => Weight::Tensor(v.iter().map(|x| a * x).collect()),
        }
    }

    /// `a·self + b·other`; both must have the same kind and length.
    pub fn combine(&self, a: f64, other: &Weight, b: f64) -> Result<Weight> {
        match (self, other) {
            (Weight::Scalar(x), Weight::Scalar(y)) if x.len() == y.len() => Ok(Weight::Scalar(
                x.iter().zip(y).map(|(p, q)| a * p + b * q).collect(),
            )),
            (Weight::Tensor(x), Weight::Tensor(y)) if x.len() == y.len() => Ok(Weight::Tensor(
                x.iter().zip(y).map(|(p, q)| a * p + b * q).collect(),
            )),
            _ => Err(Error::InvalidInput("incompatible weights".into())),
        }
    }
}

/// Whether the admissibility check (symmetric positive definite) runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Spd,
    /// Symmetric but possibly indefinite, as for shape-derivative weights.
    Signed,
}

/// Admissible material coefficients, constant on each tet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub eps: Vec<Matrix3<f64>>,
    pub mu: Vec<Matrix3<f64>>,
    pub nu: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl CoefficientSet {
    pub fn identity(n_tets: usize) -> Self {
        Self::scaled(n_tets, 1.0, 1.0, 1.0, 1.0)
    }

    /// Multiples of the identity: `ε = a·I`, `μ = b·I`, `ν = c`, `κ = d`.
    pub fn scaled(n_tets: usize, eps: f64, mu: f64, nu: f64, kappa: f64) -> Self {
        CoefficientSet {
            eps: vec![Matrix3::identity() * eps; n_tets],
            mu: vec![Matrix3::identity() * mu; n_tets],
            nu: vec![nu; n_tets],
            kappa: vec![kappa; n_tets],
        }
    }

    /// Seeded random SPD coefficients: tensors `I + 0.4·S` with `S`
    /// symmetric, entries in [-1, 1], scaled into the SPD cone, and scalars
    /// in [0.5, 2].
    pub fn random(n_tets: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensor = |rng: &mut ChaCha8Rng| {
            let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..=1.0));
            // eigenvalues of sym(a) lie in [-3, 3], so 1 + 0.3·[-3, 3] > 0
            Matrix3::identity() + sym(&a) * 0.3
        };
        let mut out = CoefficientSet::identity(n_tets);
        for t in 0..n_tets {
            out.eps[t] = tensor(&mut rng);
            out.mu[t] = tensor(&mut rng);
            out.nu[t] = rng.random_range(0.5..=2.0);
            out.kappa[t] = rng.random_range(0.5..=2.0);
        }
        out
    }

    pub fn n_tets(&self) -> usize {
        self.nu.len()
    }

    /// True when every coefficient equals the identity exactly.
    pub fn is_identity(&self) -> bool {
        let id = Matrix3::identity();
        self.eps.iter().all(|m| *m == id)
            && self.mu.iter().all(|m| *m == id)
            && self.nu.iter().all(|&x| x == 1.0)
            && self.kappa.iter().all(|&x| x == 1.0)
    }

    pub fn validate(&self, n_tets: usize) -> Result<()> {
        let lens = [self.eps.len(), self.mu.len(), self.nu.len(), self.kappa.len()];
        if lens.iter().any(|&l| l != n_tets) {
            return Err(Error::InvalidInput(format!(
                "coefficient lengths {lens:?} do not match {n_tets} tets"
            )));
        }
        for t in 0..n_tets {
            check_spd(&self.eps[t]).map_err(|reason| Error::Assembly {
                tet: t,
                reason: format!("eps {reason}"),
            })?;
            check_spd(&self.mu[t]).map_err(|reason| Error::Assembly {
                tet: t,
                reason: format!("mu {reason}"),
            })?;
            if !(self.nu[t] > 0.0) || !(self.kappa[t] > 0.0) {
                return Err(Error::Assembly {
                    tet: t,
                    reason: "nu and kappa must be positive".into(),
                });
            }
        }
        Ok(())
    }

    pub fn mu_inv(&self) -> Vec<Matrix3<f64>> {
        self.mu.iter().map(inverse3).collect()
    }

    /// Canonical mass weight of form degree `q`: `ν`, `ε`, `μ⁻¹`, `κ⁻¹`.
    pub fn mass_weight(&self, q: usize) -> Result<Weight> {
        match q {
            0 => Ok(Weight::Scalar(self.nu.clone())),
            1 => Ok(Weight::Tensor(self.eps.clone())),
            2 => Ok(Weight::Tensor(self.mu_inv())),
            3 => Ok(Weight::Scalar(self.kappa.iter().map(|k| 1.0 / k).collect())),
            _ => Err(Error::Usage(format!("form degree {q} out of range 0..=3"))),
        }
    }
}

pub(crate) fn inverse3(m: &Matrix3<f64>) -> Matrix3<f64> {
    m.try_inverse().expect("coefficient matrix is invertible")
}

pub(crate) fn sym(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn check_spd(m: &Matrix3<f64>) -> std::result::Result<(), String> {
    check_symmetric(m)?;
    let min = SymmetricEigen::new(sym(m)).eigenvalues.min();
    if min > 0.0 {
        Ok(())
    } else {
        Err(format!("not positive definite (smallest eigenvalue {min:e})"))
    }
}

fn check_symmetric(m: &Matrix3<f64>) -> std::result::Result<(), String> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err("has non-finite entries".into());
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        Err(format!("not symmetric (asymmetry {asym:e})"))
    } else {
        Ok(())
    }
}

/// Barycentric gradients of a tet (rows of the inverse edge matrix) and its volume.
pub fn barycentric_gradients(mesh: &TetMesh, t: usize) -> ([Vector3<f64>; 4], f64) {
    let b = edge_matrix(mesh.vertices(), &mesh.tets()[t]);
    let vol = b.determinant() / 6.0;
    let inv = b.try_inverse().expect("non-degenerate tet");
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    let g3 = inv.row(2).transpose();
    ([-(g1 + g2 + g3), g1, g2, g3], vol)
}

fn lambda_product(vol: f64, i: usize, j: usize) -> f64 {
    if i == j {
        vol / 10.0
    } else {
        vol / 20.0
    }
}

/// Local Whitney 1-form basis description: global edge orientation as
/// local positions `(p, q)`, so the basis is `λ_p ∇λ_q − λ_q ∇λ_p`.
fn local_edge_orientation(mesh: &TetMesh, t: usize) -> [[usize; 2]; 6] {
    let tet = mesh.tets()[t];
    LOCAL_EDGES.map(|[a, b]| if tet[a] < tet[b] { [a, b] } else { [b, a] })
}

/// Local positions of face k's vertices in global (sorted) order.
fn local_face_orientation(mesh: &TetMesh, t: usize) -> [[usize; 3]; 4] {
    let tet = mesh.tets()[t];
    let mut out = [[0; 3]; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut loc: Vec<usize> = (0..4).filter(|&i| i != k).collect();
        loc.sort_by_key(|&i| tet[i]);
        *slot = [loc[0], loc[1], loc[2]];
    }
    out
}

/// Element matrix of degree `q` on tet `t` for a constant weight, together
/// with the global DOF indices of its rows/columns.
pub fn element_mass(
    mesh: &TetMesh,
    t: usize,
    q: usize,
    scalar: f64,
    tensor: &Matrix3<f64>,
) -> (Vec<usize>, Vec<f64>) {
    let (g, vol) = barycentric_gradients(mesh, t);
    match q {
        0 => {
            let dofs = mesh.tets()[t].to_vec();
            let mut m = vec![0.0; 16];
            for i in 0..4 {
                for j in 0..4 {
                    m[4 * i + j] = scalar * lambda_product(vol, i, j);
                }
            }
            (dofs, m)
        }
        1 => {
            let orient = local_edge_orientation(mesh, t);
            let dofs = mesh.tet_edges(t).to_vec();
            let mut m = vec![0.0; 36];
            for (i, &[p, qq]) in orient.iter().enumerate() {
                for (j, &[r, s]) in orient.iter().enumerate() {
                    let e = |a: usize, b: usize| g[a].dot(&(tensor * g[b]));
                    m[6 * i + j] = lambda_product(vol, p, r) * e(qq, s)
                        - lambda_product(vol, p, s) * e(qq, r)
                        - lambda_product(vol, qq, r) * e(p, s)
                        + lambda_product(vol, qq, s) * e(p, r);
                }
            }
            (dofs, m)
        }
        2 => {
            let orient = local_face_orientation(mesh, t);
            let dofs = mesh.tet_faces(t).to_vec();
            // w_f = 2 Σ_cyc λ_a (∇λ_b × ∇λ_c)
            let terms: Vec<[(usize, Vector3<f64>); 3]> = orient
                .iter()
                .map(|&[a, b, c]| {
                    [
                        (a, g[b].cross(&g[c])),
                        (b, g[c].cross(&g[a])),
                        (c, g[a].cross(&g[b])),
                    ]
                })
                .collect();
            let mut m = vec![0.0; 16];
            for i in 0..4 {
                for j in 0..4 {
                    let mut acc = 0.0;
                    for (a, ca) in &terms[i] {
                        for (b, cb) in &terms[j] {
                            acc += lambda_product(vol, *a, *b) * ca.dot(&(tensor * cb));
                        }
                    }
                    m[4 * i + j] = 4.0 * acc;
                }
            }
            (dofs, m)
        }
        3 => (vec![t], vec![scalar / vol]),
        _ => unreachable!("form degree checked by caller"),
    }
}

/// Assembles the weighted Whitney mass matrix of degree `q`.
pub fn mass_matrix(mesh: &TetMesh, q: usize, weight: &Weight, mode: WeightMode) -> Result<CsrMatrix<f64>> {
    if q > 3 {
        return Err(Error::Usage(format!("form degree {q} out of range 0..=3")));
    }
    if weight.len() != mesh.n_tets() {
        return Err(Error::InvalidInput(format!(
            "weight has {} entries for {} tets",
            weight.len(),
            mesh.n_tets()
        )));
    }
    let n = mesh.n_dofs(q);
    let mut coo = CooMatrix::new(n, n);
    let zero = Matrix3::zeros();
    for t in 0..mesh.n_tets() {
        let (s, m) = match (q, weight) {
            (0 | 3, Weight::Scalar(w)) => {
                if mode == WeightMode::Spd && !(w[t] > 0.0) {
                    return Err(Error::Assembly {
                        tet: t,
                        reason: format!("scalar weight {} is not positive", w[t]),
                    });
                }
                if !w[t].is_finite() {
                    return Err(Error::Assembly { tet: t, reason: "non-finite weight".into() });
                }
                (w[t], &zero)
            }
            (1 | 2, Weight::Tensor(w)) => {
                let check = match mode {
                    WeightMode::Spd => check_spd(&w[t]),
                    WeightMode::Signed => check_symmetric(&w[t]),
                };
                check.map_err(|reason| Error::Assembly { tet: t, reason: format!("weight {reason}") })?;
                (0.0, &w[t])
            }
            _ => {
                return Err(Error::Usage(format!(
                    "form degree {q} needs a {} weight",
                    if q == 0 || q == 3 { "scalar" } else { "tensor" }
                )))
            }
        };
        let (dofs, local) = element_mass(mesh, t, q, s, m);
        let k = dofs.len();
        for i in 0..k {
            for j in 0..k {
                coo.push(dofs[i], dofs[j], local[k * i + j]);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// `K_ℓ = d_ℓᵀ M_{ℓ+1}(weight) d_ℓ`.
pub fn stiffness_matrix(
    mesh: &TetMesh,
    complex: &DeRhamComplex,
    level: usize,
    weight: &Weight,
    mode: WeightMode,
) -> Result<CsrMatrix<f64>> {
    let d = complex.derivative(level)?;
    let m = mass_matrix(mesh, level + 1, weight, mode)?;
    Ok(&(&d.transpose() * &m) * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derham::DeRhamComplex;
    use crate::linalg::to_dense;
    use crate::mesh::{generate_cube_mesh, BoundaryPartition, Point};
    use nalgebra::DVector;

    fn skewed_tet() -> TetMesh {
        TetMesh::new(
            vec![
                Point::new(0.1, 0.0, 0.2),
                Point::new(1.3, 0.2, 0.0),
                Point::new(0.2, 0.9, 0.1),
                Point::new(0.3, 0.4, 1.1),
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn p1_mass_closed_form() {
        let mesh = skewed_tet();
        let vol = mesh.tet_volume(0);
        let m = to_dense(&mass_matrix(&mesh, 0, &Weight::Scalar(vec![1.0]), WeightMode::Spd).unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let expect = vol * (1.0 + if i == j { 1.0 } else { 0.0 }) / 20.0;
                assert!((m[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn volume_mass() {
        let mesh = skewed_tet();
        let m = to_dense(&mass_matrix(&mesh, 3, &Weight::Scalar(vec![1.0]), WeightMode::Spd).unwrap());
        assert!((m[(0, 0)] - 1.0 / mesh.tet_volume(0)).abs() < 1e-13);
    }

    #[test]
    fn linear_in_weight() {
        let mesh = generate_cube_mesh(1).unwrap();
        let id = Weight::Tensor(vec![Matrix3::identity(); mesh.n_tets()]);
        let m1 = to_dense(&mass_matrix(&mesh, 1, &id, WeightMode::Spd).unwrap());
        let m2 = to_dense(&mass_matrix(&mesh, 1, &id.scale(2.0), WeightMode::Spd).unwrap());
        assert_eq!(m2, m1 * 2.0);
    }

    #[test]
    fn rejects_bad_weights() {
        let mesh = generate_cube_mesh(1).unwrap();
        let mut w = vec![Matrix3::identity(); mesh.n_tets()];
        w[4] = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        let err = mass_matrix(&mesh, 1, &Weight::Tensor(w.clone()), WeightMode::Spd).unwrap_err();
        assert!(matches!(err, Error::Assembly { tet: 4, .. }));
        assert!(mass_matrix(&mesh, 1, &Weight::Tensor(w), WeightMode::Signed).is_ok());
        let err = mass_matrix(&mesh, 0, &Weight::Tensor(vec![Matrix3::identity(); 6]), WeightMode::Spd);
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn stiffness_kernels() {
        let mesh = generate_cube_mesh(2).unwrap();
        let cx = DeRhamComplex::build(&mesh, &BoundaryPartition::none(&mesh));
        let c = CoefficientSet::identity(mesh.n_tets());
        let k0 = to_dense(&stiffness_matrix(&mesh, &cx, 0, &c.mass_weight(1).unwrap(), WeightMode::Spd).unwrap());
        let ones = DVector::from_element(mesh.n_vertices(), 1.0);
        assert!((k0 * ones).amax() < 1e-13);

        let k1 = stiffness_matrix(&mesh, &cx, 1, &c.mass_weight(2).unwrap(), WeightMode::Spd).unwrap();
        let g = to_dense(cx.derivative(0).unwrap());
        let kg = to_dense(&k1) * g;
        assert!(kg.amax() < 1e-12);
    }

    #[test]
    fn whitney_dof_functionals() {
        // Edge basis has unit circulation along its own edge; face basis has
        // unit flux through its own face (orientation of the sorted triple).
        let mesh = skewed_tet();
        let (g, _) = barycentric_gradients(&mesh, 0);
        let x = mesh.tet_points(0);
        let bary = |p: &Vector3<f64>| -> [f64; 4] {
            let l: Vec<f64> = (1..4).map(|i| g[i].dot(&(p - x[0]))).collect();
            [1.0 - l[0] - l[1] - l[2], l[0], l[1], l[2]]
        };
        let gauss = [(0.5 - 0.5 / 3f64.sqrt(), 0.5), (0.5 + 0.5 / 3f64.sqrt(), 0.5)];
        for (i, &[p, q]) in local_edge_orientation(&mesh, 0).iter().enumerate() {
            for (j, &[r, s]) in local_edge_orientation(&mesh, 0).iter().enumerate() {
                let tangent = x[s] - x[r];
                let mut circ = 0.0;
                for &(u, w) in &gauss {
                    let pt = x[r] + tangent * u;
                    let l = bary(&pt);
                    let wv = g[q] * l[p] - g[p] * l[q];
                    circ += w * wv.dot(&tangent);
                }
                assert!((circ - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
        // flux through face with centroid rule (integrand linear)
        for (i, &[a, b, c]) in local_face_orientation(&mesh, 0).iter().enumerate() {
            for (j, &[d, e, f]) in local_face_orientation(&mesh, 0).iter().enumerate() {
                let area_normal = (x[e] - x[d]).cross(&(x[f] - x[d])) * 0.5;
                let cen = (x[d] + x[e] + x[f]) / 3.0;
                let l = bary(&cen);
                let w = (g[b].cross(&g[c]) * l[a] + g[c].cross(&g[a]) * l[b] + g[a].cross(&g[b]) * l[c]) * 2.0;
                let flux = w.dot(&area_normal);
                assert!((flux - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13, "{i} {j} {flux}");
            }
        }
    }
}
