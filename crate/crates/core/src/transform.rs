//! Piecewise-affine deformations `Φ = id + tΨ`, the Whitney pullbacks they
//! induce, and the transformed coefficients `ε_Φ`, `μ_Φ`, `ν_Φ`, `κ_Φ`.
//!
//! Because `Φ` is affine on every tet, the pullback of a Whitney form is
//! again a Whitney form with the same DOFs. The deformation therefore acts
//! on the discrete problem only through the per-tet coefficients:
//!
//! ```text
//! ε_Φ = det J · J⁻¹ ε J⁻ᵀ      ν_Φ = det J · ν
//! μ_Φ = det J · J⁻¹ μ J⁻ᵀ      κ_Φ = det J · κ
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use nalgebra_sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{barycentric_gradients, inverse3, sym, CoefficientSet, Weight};
use crate::error::{Error, Result};
use crate::mesh::{edge_matrix, Point, TetMesh};

/// A vector per mesh vertex, interpolated linearly on each tet.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexField {
    psi: Vec<Vector3<f64>>,
}

#[derive(Serialize, Deserialize)]
struct VertexFieldFile {
    psi: Vec<[f64; 3]>,
}

impl VertexField {
    pub fn new(psi: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(i) = psi.iter().position(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidInput(format!("psi[{i}] is not finite")));
        }
        Ok(VertexField { psi })
    }

    pub fn from_fn(mesh: &TetMesh, f: impl Fn(&Point) -> Vector3<f64>) -> Self {
        VertexField {
            psi: mesh.vertices().iter().map(f).collect(),
        }
    }

    pub fn zeros(mesh: &TetMesh) -> Self {
        Self::from_fn(mesh, |_| Vector3::zeros())
    }

    /// `Ψ(x) = x`
    pub fn dilate(mesh: &TetMesh) -> Self {
        Self::from_fn(mesh, |x| *x)
    }

    /// Constant field `Ψ = dir`.
    pub fn translate(mesh: &TetMesh, dir: Vector3<f64>) -> Self {
        Self::from_fn(mesh, |_| dir)
    }

    /// `Ψ(x) = (x₂, 0, 0)`
    pub fn shear(mesh: &TetMesh) -> Self {
        Self::from_fn(mesh, |x| Vector3::new(x.y, 0.0, 0.0))
    }

    /// `Ψ(x) = (x₁, 0, 0)`
    pub fn stretch(mesh: &TetMesh) -> Self {
        Self::from_fn(mesh, |x| Vector3::new(x.x, 0.0, 0.0))
    }

    /// A seeded random quadratic polynomial field with coefficients in [-1, 1].
    pub fn random(mesh: &TetMesh, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // per component: constant, 3 linear, 6 quadratic monomials
        let coef: Vec<[f64; 10]> = (0..3)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
            .collect();
        Self::from_fn(mesh, |p| {
            let m = [
                1.0,
                p.x,
                p.y,
                p.z,
                p.x * p.x,
                p.y * p.y,
                p.z * p.z,
                p.x * p.y,
                p.y * p.z,
                p.x * p.z,
            ];
            Vector3::from_fn(|i, _| coef[i].iter().zip(&m).map(|(c, v)| c * v).sum())
        })
    }

    pub fn values(&self) -> &[Vector3<f64>] {
        &self.psi
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// `a·self + b·other`
    pub fn combine(&self, a: f64, other: &VertexField, b: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::InvalidInput("vertex fields differ in length".into()));
        }
        Ok(VertexField {
            psi: self.psi.iter().zip(&other.psi).map(|(x, y)| x * a + y * b).collect(),
        })
    }

    fn check_mesh(&self, mesh: &TetMesh) -> Result<()> {
        if self.len() != mesh.n_vertices() {
            return Err(Error::InvalidInput(format!(
                "vertex field has {} entries for {} vertices",
                self.len(),
                mesh.n_vertices()
            )));
        }
        Ok(())
    }

    /// `J_Ψ = Σ_v Ψ_v ∇λ_vᵀ` on tet `t`, evaluated as `Σ_{k≥1} (Ψ_k − Ψ_0) ∇λ_kᵀ`
    /// so that a constant field gives exactly zero.
    pub fn jacobian(&self, mesh: &TetMesh, t: usize) -> Matrix3<f64> {
        let (g, _) = barycentric_gradients(mesh, t);
        let tet = mesh.tets()[t];
        let p0 = self.psi[tet[0]];
        (1..4).map(|k| (self.psi[tet[k]] - p0) * g[k].transpose()).sum()
    }

    pub fn jacobians(&self, mesh: &TetMesh) -> Result<Vec<Matrix3<f64>>> {
        self.check_mesh(mesh)?;
        Ok((0..mesh.n_tets()).map(|t| self.jacobian(mesh, t)).collect())
    }

    pub fn divergence(&self, mesh: &TetMesh, t: usize) -> f64 {
        self.jacobian(mesh, t).trace()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = VertexFieldFile {
            psi: self.psi.iter().map(|v| [v.x, v.y, v.z]).collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VertexFieldFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(file.psi.iter().map(|v| Vector3::new(v[0], v[1], v[2])).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// A piecewise-affine map from a reference mesh onto a deformed mesh with
/// the same connectivity.
#[derive(Debug, Clone)]
pub struct PwAffineMap {
    reference: TetMesh,
    deformed: TetMesh,
    jac: Vec<Matrix3<f64>>,
    det: Vec<f64>,
}

/// `Φ_t = id + tΨ` on `mesh`.
pub fn make_map(mesh: &TetMesh, psi: &VertexField, t: f64) -> Result<PwAffineMap> {
    psi.check_mesh(mesh)?;
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("deformation parameter t = {t} is not finite")));
    }
    let jpsi: Vec<Matrix3<f64>> = (0..mesh.n_tets()).map(|k| psi.jacobian(mesh, k)).collect();
    let dets: Vec<f64> = jpsi
        .iter()
        .map(|j| (Matrix3::identity() + j * t).determinant())
        .collect();
    let (worst, &det) = dets
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("mesh has tets");
    if det <= 0.0 {
        // I + sJ stays nonsingular while |s|·‖J‖₂ < 1
        let norm = jpsi.iter().map(spectral_norm).fold(0.0, f64::max);
        return Err(Error::Admissibility {
            tet: worst,
            det,
            t_max: 1.0 / norm,
        });
    }
    let moved = mesh
        .vertices()
        .iter()
        .zip(psi.values())
        .map(|(x, p)| x + p * t)
        .collect();
    PwAffineMap::from_meshes(mesh.clone(), mesh.with_vertices(moved)?)
}

fn spectral_norm(m: &Matrix3<f64>) -> f64 {
    m.singular_values().max()
}

impl PwAffineMap {
    /// The map sending `reference` onto `deformed` vertex by vertex.
    pub fn from_meshes(reference: TetMesh, deformed: TetMesh) -> Result<Self> {
        if reference.tets() != deformed.tets() || reference.n_vertices() != deformed.n_vertices() {
            return Err(Error::ConnectivityMismatch(
                "deformed mesh does not share the reference connectivity".into(),
            ));
        }
        let mut jac = Vec::with_capacity(reference.n_tets());
        let mut det = Vec::with_capacity(reference.n_tets());
        for (t, tet) in reference.tets().iter().enumerate() {
            let b_ref = edge_matrix(reference.vertices(), tet);
            let b_def = edge_matrix(deformed.vertices(), tet);
            let j = b_def * inverse3(&b_ref);
            let d = b_def.determinant() / b_ref.determinant();
            if !(d > 0.0) {
                return Err(Error::Admissibility { tet: t, det: d, t_max: f64::NAN });
            }
            jac.push(j);
            det.push(d);
        }
        Ok(PwAffineMap {
            reference,
            deformed,
            jac,
            det,
        })
    }

    pub fn identity(mesh: &TetMesh) -> Self {
        PwAffineMap {
            reference: mesh.clone(),
            deformed: mesh.clone(),
            jac: vec![Matrix3::identity(); mesh.n_tets()],
            det: vec![1.0; mesh.n_tets()],
        }
    }

    pub fn reference(&self) -> &TetMesh {
        &self.reference
    }

    pub fn deformed(&self) -> &TetMesh {
        &self.deformed
    }

    pub fn jacobian(&self, t: usize) -> &Matrix3<f64> {
        &self.jac[t]
    }

    pub fn jacobians(&self) -> &[Matrix3<f64>] {
        &self.jac
    }

    pub fn det(&self, t: usize) -> f64 {
        self.det[t]
    }

    /// `adj J = det J · J⁻¹`
    pub fn adj(&self, t: usize) -> Matrix3<f64> {
        inverse3(&self.jac[t]) * self.det[t]
    }

    pub fn inverse(&self) -> PwAffineMap {
        PwAffineMap {
            reference: self.deformed.clone(),
            deformed: self.reference.clone(),
            jac: self.jac.iter().map(inverse3).collect(),
            det: self.det.iter().map(|d| 1.0 / d).collect(),
        }
    }

    /// `next ∘ self`; `next` must start where `self` ends.
    pub fn then(&self, next: &PwAffineMap) -> Result<PwAffineMap> {
        if next.reference.vertices() != self.deformed.vertices() || next.reference.tets() != self.deformed.tets() {
            return Err(Error::ConnectivityMismatch(
                "composed maps do not share the intermediate mesh".into(),
            ));
        }
        Ok(PwAffineMap {
            reference: self.reference.clone(),
            deformed: next.deformed.clone(),
            jac: next.jac.iter().zip(&self.jac).map(|(a, b)| a * b).collect(),
            det: next.det.iter().zip(&self.det).map(|(a, b)| a * b).collect(),
        })
    }

    /// Matrix of the discrete pullback of q-forms, see [`pullback_dof_map`].
    pub fn pullback(&self, q: usize) -> Result<CsrMatrix<f64>> {
        pullback_dof_map(q, &self.reference, &self.deformed)
    }
}

/// The matrix sending Whitney DOF vectors on `deformed` to DOF vectors on
/// `reference`. Whitney DOFs are integrals over mapped sub-simplices, so
/// with a shared enumeration this is the identity.
pub fn pullback_dof_map(q: usize, reference: &TetMesh, deformed: &TetMesh) -> Result<CsrMatrix<f64>> {
    if q > 3 {
        return Err(Error::Usage(format!("form degree {q} out of range 0..=3")));
    }
    if reference.tets() != deformed.tets() || reference.n_vertices() != deformed.n_vertices() {
        return Err(Error::ConnectivityMismatch(
            "pullback needs meshes with identical connectivity".into(),
        ));
    }
    Ok(CsrMatrix::identity(reference.n_dofs(q)))
}

/// Coefficients on the deformed mesh expressed on the reference mesh.
pub fn transform_coefficients(coeffs: &CoefficientSet, map: &PwAffineMap) -> Result<CoefficientSet> {
    let n = map.reference.n_tets();
    coeffs.validate(n)?;
    let congruence = |m: &Matrix3<f64>, t: usize| {
        let ji = inverse3(&map.jac[t]);
        sym(&(ji * m * ji.transpose() * map.det[t]))
    };
    Ok(CoefficientSet {
        eps: (0..n).map(|t| congruence(&coeffs.eps[t], t)).collect(),
        mu: (0..n).map(|t| congruence(&coeffs.mu[t], t)).collect(),
        nu: (0..n).map(|t| coeffs.nu[t] * map.det[t]).collect(),
        kappa: (0..n).map(|t| coeffs.kappa[t] * map.det[t]).collect(),
    })
}

/// Per-tet rates of change of coefficient fields that are not carried along
/// with the deformation. Zero for material coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRates {
    pub eps: Vec<Matrix3<f64>>,
    pub mu: Vec<Matrix3<f64>>,
    pub nu: Vec<f64>,
    pub kappa: Vec<f64>,
}

/// Directional derivatives at `Φ = id` of the transformed coefficients, in
/// the canonical mass weight of each form degree.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeWeights {
    /// `(div Ψ) ε − 2 sym(J_Ψ ε)`
    pub deps: Vec<Matrix3<f64>>,
    /// `(div Ψ) μ − 2 sym(J_Ψ μ)`
    pub dmu: Vec<Matrix3<f64>>,
    /// `−(div Ψ) μ⁻¹ + 2 sym(μ⁻¹ J_Ψ)`
    pub dmu_inv: Vec<Matrix3<f64>>,
    /// `(div Ψ) ν`
    pub dnu: Vec<f64>,
    /// `−(div Ψ) ν⁻¹`
    pub dnu_inv: Vec<f64>,
    /// `−(div Ψ) κ⁻¹`
    pub dkappa_inv: Vec<f64>,
}

impl DerivativeWeights {
    /// Derivative of [`CoefficientSet::mass_weight`] for degree `q`.
    pub fn weight(&self, q: usize) -> Result<Weight> {
        match q {
            0 => Ok(Weight::Scalar(self.dnu.clone())),
            1 => Ok(Weight::Tensor(self.deps.clone())),
            2 => Ok(Weight::Tensor(self.dmu_inv.clone())),
            3 => Ok(Weight::Scalar(self.dkappa_inv.clone())),
            _ => Err(Error::Usage(format!("form degree {q} out of range 0..=3"))),
        }
    }
}

/// `symtr M = 2 sym M − (tr M) I`
pub fn symtr(m: &Matrix3<f64>) -> Matrix3<f64> {
    sym(m) * 2.0 - Matrix3::identity() * m.trace()
}

/// Derivative weights for material coefficients (advected with the domain).
pub fn coefficient_derivative(mesh: &TetMesh, coeffs: &CoefficientSet, psi: &VertexField) -> Result<DerivativeWeights> {
    coefficient_derivative_with(mesh, coeffs, psi, None)
}

/// Like [`coefficient_derivative`], adding user-supplied rates for
/// coefficients that stay fixed in space.
pub fn coefficient_derivative_with(
    mesh: &TetMesh,
    coeffs: &CoefficientSet,
    psi: &VertexField,
    rates: Option<&MaterialRates>,
) -> Result<DerivativeWeights> {
    let n = mesh.n_tets();
    coeffs.validate(n)?;
    if let Some(r) = rates {
        let lens = [r.eps.len(), r.mu.len(), r.nu.len(), r.kappa.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::InvalidInput(format!(
                "material rate lengths {lens:?} do not match {n} tets"
            )));
        }
    }
    let jac = psi.jacobians(mesh)?;
    let mut out = DerivativeWeights {
        deps: Vec::with_capacity(n),
        dmu: Vec::with_capacity(n),
        dmu_inv: Vec::with_capacity(n),
        dnu: Vec::with_capacity(n),
        dnu_inv: Vec::with_capacity(n),
        dkappa_inv: Vec::with_capacity(n),
    };
    for (t, j) in jac.iter().enumerate() {
        let div = j.trace();
        let (eps, mu, nu, kappa) = (&coeffs.eps[t], &coeffs.mu[t], coeffs.nu[t], coeffs.kappa[t]);
        let mu_inv = inverse3(mu);
        let mut deps = eps * div - sym(&(j * eps)) * 2.0;
        let mut dmu = mu * div - sym(&(j * mu)) * 2.0;
        let mut dnu = div * nu;
        let mut dkappa = div * kappa;
        if let Some(r) = rates {
            deps += sym(&r.eps[t]);
            dmu += sym(&r.mu[t]);
            dnu += r.nu[t];
            dkappa += r.kappa[t];
        }
        let dmu_inv = if rates.is_some() {
            -sym(&(mu_inv * dmu * mu_inv))
        } else {
            mu_inv * (-div) + sym(&(mu_inv * j)) * 2.0
        };
        out.deps.push(deps);
        out.dmu.push(dmu);
        out.dmu_inv.push(dmu_inv);
        out.dnu.push(dnu);
        out.dnu_inv.push(-dnu / (nu * nu));
        out.dkappa_inv.push(-dkappa / (kappa * kappa));
    }
    Ok(out)
}

/// Largest per-tet deviations from `∂(μ⁻¹) = −μ⁻¹(∂μ)μ⁻¹` and the scalar
/// analogue `∂(ν⁻¹) = −ν⁻²∂ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseIdentityReport {
    pub tensor_deviation: f64,
    pub scalar_deviation: f64,
}

pub fn inverse_identities_check(mesh: &TetMesh, coeffs: &CoefficientSet, psi: &VertexField) -> Result<InverseIdentityReport> {
    let w = coefficient_derivative(mesh, coeffs, psi)?;
    let mut tensor_deviation: f64 = 0.0;
    let mut scalar_deviation: f64 = 0.0;
    for t in 0..mesh.n_tets() {
        let mi = inverse3(&coeffs.mu[t]);
        let other = -(mi * w.dmu[t] * mi);
        tensor_deviation = tensor_deviation.max((w.dmu_inv[t] - other).amax());
        let nu = coeffs.nu[t];
        scalar_deviation = scalar_deviation.max((w.dnu_inv[t] + w.dnu[t] / (nu * nu)).abs());
    }
    Ok(InverseIdentityReport {
        tensor_deviation,
        scalar_deviation,
    })
}
