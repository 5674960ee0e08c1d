//! Signed incidence matrices of the lowest-order Whitney complex and the
//! DOF masks realizing essential boundary conditions.

use std::collections::BTreeSet;

use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryPartition, TetMesh};

/// Which boundary part carries the essential conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySide {
    /// Conditions on `gamma_t` (primal spaces `H^1_t`, `R_t`, `D_t`).
    Tangential,
    /// Conditions on `gamma_n` (dual spaces).
    Normal,
}

#[derive(Debug, Clone)]
pub struct DeRhamComplex {
    grad: CsrMatrix<i32>,
    curl: CsrMatrix<i32>,
    div: CsrMatrix<i32>,
    grad_f: CsrMatrix<f64>,
    curl_f: CsrMatrix<f64>,
    div_f: CsrMatrix<f64>,
    /// `free[side][q]`
    free: [[Vec<usize>; 4]; 2],
}

impl DeRhamComplex {
    pub fn build(mesh: &TetMesh, partition: &BoundaryPartition) -> Self {
        let grad = incidence_grad(mesh);
        let curl = incidence_curl(mesh);
        let div = incidence_div(mesh);
        let free = [
            free_dofs(mesh, partition.gamma_t()),
            free_dofs(mesh, partition.gamma_n()),
        ];
        DeRhamComplex {
            grad_f: to_f64(&grad),
            curl_f: to_f64(&curl),
            div_f: to_f64(&div),
            grad,
            curl,
            div,
            free,
        }
    }

    /// Integer incidence matrix `d_q`: grad (q = 0), curl (q = 1), div (q = 2).
    pub fn derivative_matrix(&self, q: usize) -> Result<&CsrMatrix<i32>> {
        match q {
            0 => Ok(&self.grad),
            1 => Ok(&self.curl),
            2 => Ok(&self.div),
            _ => Err(Error::Usage(format!("derivative degree {q} out of range 0..=2"))),
        }
    }

    /// Same as [`derivative_matrix`](Self::derivative_matrix) with `f64` entries.
    pub fn derivative(&self, q: usize) -> Result<&CsrMatrix<f64>> {
        match q {
            0 => Ok(&self.grad_f),
            1 => Ok(&self.curl_f),
            2 => Ok(&self.div_f),
            _ => Err(Error::Usage(format!("derivative degree {q} out of range 0..=2"))),
        }
    }

    /// Sorted indices of unconstrained q-form DOFs.
    pub fn free_dofs(&self, q: usize, side: BoundarySide) -> &[usize] {
        let s = match side {
            BoundarySide::Tangential => 0,
            BoundarySide::Normal => 1,
        };
        &self.free[s][q]
    }
}

fn to_f64(m: &CsrMatrix<i32>) -> CsrMatrix<f64> {
    let values = m.values().iter().map(|&x| x as f64).collect();
    CsrMatrix::try_from_pattern_and_values(m.pattern().clone(), values)
        .expect("same sparsity pattern")
}

fn incidence_grad(mesh: &TetMesh) -> CsrMatrix<i32> {
    let mut coo = CooMatrix::new(mesh.n_edges(), mesh.n_vertices());
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        coo.push(e, a, -1);
        coo.push(e, b, 1);
    }
    CsrMatrix::from(&coo)
}

fn incidence_curl(mesh: &TetMesh) -> CsrMatrix<i32> {
    let edge = |a: usize, b: usize| {
        mesh.edges()
            .binary_search(&[a, b])
            .expect("face edge present in edge table")
    };
    let mut coo = CooMatrix::new(mesh.n_faces(), mesh.n_edges());
    // boundary of [a,b,c] = [b,c] - [a,c] + [a,b]
    for (f, &[a, b, c]) in mesh.faces().iter().enumerate() {
        coo.push(f, edge(a, b), 1);
        coo.push(f, edge(a, c), -1);
        coo.push(f, edge(b, c), 1);
    }
    CsrMatrix::from(&coo)
}

fn incidence_div(mesh: &TetMesh) -> CsrMatrix<i32> {
    let mut coo = CooMatrix::new(mesh.n_tets(), mesh.n_faces());
    for t in 0..mesh.n_tets() {
        let tet = mesh.tets()[t];
        for (k, &f) in mesh.tet_faces(t).iter().enumerate() {
            // Boundary of the positively ordered tet carries (-1)^k on the
            // face opposite local vertex k, listed in local order. Correct by
            // the parity of sorting that list into the global face order.
            let local: Vec<usize> = (0..4).filter(|&i| i != k).map(|i| tet[i]).collect();
            let sign = if k % 2 == 0 { 1 } else { -1 } * permutation_parity(&local);
            coo.push(t, f, sign);
        }
    }
    CsrMatrix::from(&coo)
}

fn permutation_parity(v: &[usize]) -> i32 {
    let mut inversions = 0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > v[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Free DOFs for essential conditions on the closure of `constrained_faces`.
fn free_dofs(mesh: &TetMesh, constrained_faces: &[usize]) -> [Vec<usize>; 4] {
    let mut fixed_vertices = BTreeSet::new();
    let mut fixed_edges = BTreeSet::new();
    let fixed_faces: BTreeSet<usize> = constrained_faces.iter().copied().collect();
    for &f in constrained_faces {
        let [a, b, c] = mesh.faces()[f];
        fixed_vertices.extend([a, b, c]);
        for e in [[a, b], [a, c], [b, c]] {
            fixed_edges.insert(mesh.edges().binary_search(&e).expect("face edge"));
        }
    }
    [
        (0..mesh.n_vertices()).filter(|v| !fixed_vertices.contains(v)).collect(),
        (0..mesh.n_edges()).filter(|e| !fixed_edges.contains(e)).collect(),
        (0..mesh.n_faces()).filter(|f| !fixed_faces.contains(f)).collect(),
        (0..mesh.n_tets()).collect(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_cube_mesh, GammaSelector, Point};

    fn single_tet() -> TetMesh {
        TetMesh::new(
            vec![
                Point::new(0., 0., 0.),
                Point::new(1., 0., 0.),
                Point::new(0., 1., 0.),
                Point::new(0., 0., 1.),
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    fn is_zero(m: &CsrMatrix<i32>) -> bool {
        m.values().iter().all(|&v| v == 0)
    }

    #[test]
    fn single_tet_grad_rows() {
        let mesh = single_tet();
        let cx = DeRhamComplex::build(&mesh, &BoundaryPartition::none(&mesh));
        let g = cx.derivative_matrix(0).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (6, 4));
        for row in g.row_iter() {
            let mut vals: Vec<i32> = row.values().to_vec();
            vals.sort();
            assert_eq!(vals, vec![-1, 1]);
        }
    }

    #[test]
    fn complex_property() {
        for n in [1, 2, 3] {
            let mesh = generate_cube_mesh(n).unwrap();
            let cx = DeRhamComplex::build(&mesh, &BoundaryPartition::all(&mesh));
            let d0 = cx.derivative_matrix(0).unwrap();
            let d1 = cx.derivative_matrix(1).unwrap();
            let d2 = cx.derivative_matrix(2).unwrap();
            assert!(is_zero(&(d1 * d0)));
            assert!(is_zero(&(d2 * d1)));
            for m in [d0, d1, d2] {
                assert!(m.values().iter().all(|v| [-1, 1].contains(v)));
            }
        }
    }

    #[test]
    fn degree_out_of_range() {
        let mesh = single_tet();
        let cx = DeRhamComplex::build(&mesh, &BoundaryPartition::none(&mesh));
        assert!(matches!(cx.derivative_matrix(3), Err(Error::Usage(_))));
    }

    #[test]
    fn div_signs_match_outward_normals() {
        let mesh = generate_cube_mesh(2).unwrap();
        let cx = DeRhamComplex::build(&mesh, &BoundaryPartition::none(&mesh));
        let d = cx.derivative_matrix(2).unwrap();
        for t in 0..mesh.n_tets() {
            let row = d.row(t);
            for (&f, &s) in row.col_indices().iter().zip(row.values()) {
                let [a, b, c] = mesh.faces()[f].map(|v| mesh.vertices()[v]);
                let n = (b - a).cross(&(c - a));
                let out = n.dot(&(mesh.face_centroid(f) - mesh.tet_centroid(t)));
                assert_eq!(out.signum() as i32, s);
            }
        }
    }

    #[test]
    fn free_dof_counts() {
        let m1 = generate_cube_mesh(1).unwrap();
        let cx = DeRhamComplex::build(&m1, &BoundaryPartition::all(&m1));
        assert!(cx.free_dofs(0, BoundarySide::Tangential).is_empty());
        assert_eq!(cx.free_dofs(0, BoundarySide::Normal).len(), 8);

        let m2 = generate_cube_mesh(2).unwrap();
        let cx = DeRhamComplex::build(&m2, &BoundaryPartition::all(&m2));
        assert_eq!(cx.free_dofs(0, BoundarySide::Tangential), &[13]);
        assert_eq!(cx.free_dofs(3, BoundarySide::Tangential).len(), 48);
        assert_eq!(
            cx.free_dofs(2, BoundarySide::Tangential).len(),
            m2.n_faces() - m2.boundary_faces().len()
        );
    }

    #[test]
    fn masks_are_monotone() {
        let mesh = generate_cube_mesh(2).unwrap();
        let sels = ["none", "z0", "x=0|z=0", "all"].map(|s| GammaSelector::parse(s).unwrap());
        let cxs: Vec<_> = sels
            .iter()
            .map(|s| DeRhamComplex::build(&mesh, &s.apply(&mesh)))
            .collect();
        for w in cxs.windows(2) {
            for q in 0..4 {
                let small: BTreeSet<_> = w[1].free_dofs(q, BoundarySide::Tangential).iter().collect();
                let big: BTreeSet<_> = w[0].free_dofs(q, BoundarySide::Tangential).iter().collect();
                assert!(small.is_subset(&big));
            }
        }
    }
}
