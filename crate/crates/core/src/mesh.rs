//! Oriented tetrahedral meshes with canonical edge/face enumeration and a
//! two-part boundary tagging.
//!
//! Edges are stored as sorted vertex pairs and faces as sorted vertex
//! triples, both in lexicographic order. The global orientation of an edge
//! runs from its lower to its higher vertex index; a face is oriented by its
//! sorted triple. Tets keep the vertex order they were given, which must be
//! positively oriented.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Local vertex pairs of the six tet edges.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    vertices: Vec<Point>,
    tets: Vec<[usize; 4]>,
    edges: Vec<[usize; 2]>,
    faces: Vec<[usize; 3]>,
    boundary_faces: Vec<usize>,
    tet_edges: Vec<[usize; 6]>,
    /// Face opposite local vertex k.
    tet_faces: Vec<[usize; 4]>,
    face_tets: Vec<Vec<usize>>,
}

impl TetMesh {
    /// Builds a mesh and derives its edge and face tables.
    ///
    /// Fails if an index is out of range, a tet is degenerate or negatively
    /// oriented, a face is shared by more than two tets, or the mesh is not
    /// connected.
    pub fn new(vertices: Vec<Point>, tets: Vec<[usize; 4]>) -> Result<Self> {
        if tets.is_empty() {
            return Err(Error::MeshValidation("mesh has no tets".into()));
        }
        for (t, tet) in tets.iter().enumerate() {
            if let Some(&v) = tet.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::MeshValidation(format!(
                    "tet {t}: vertex index {v} out of range ({} vertices)",
                    vertices.len()
                )));
            }
            let distinct: BTreeSet<_> = tet.iter().collect();
            if distinct.len() != 4 {
                return Err(Error::MeshValidation(format!("tet {t}: repeated vertex")));
            }
            if signed_volume(&vertices, tet) <= 0.0 {
                return Err(Error::MeshValidation(format!(
                    "tet {t}: non-positive orientation"
                )));
            }
        }

        let mut edge_set = BTreeSet::new();
        let mut face_set = BTreeSet::new();
        for tet in &tets {
            for [a, b] in LOCAL_EDGES {
                edge_set.insert(sorted2(tet[a], tet[b]));
            }
            for k in 0..4 {
                face_set.insert(opposite_face(tet, k));
            }
        }
        let edges: Vec<[usize; 2]> = edge_set.into_iter().collect();
        let faces: Vec<[usize; 3]> = face_set.into_iter().collect();
        let edge_index: BTreeMap<[usize; 2], usize> =
            edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let face_index: BTreeMap<[usize; 3], usize> =
            faces.iter().enumerate().map(|(i, f)| (*f, i)).collect();

        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut tet_faces = Vec::with_capacity(tets.len());
        let mut face_tets = vec![Vec::new(); faces.len()];
        for (t, tet) in tets.iter().enumerate() {
            let mut te = [0; 6];
            for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                te[k] = edge_index[&sorted2(tet[*a], tet[*b])];
            }
            let mut tf = [0; 4];
            for (k, slot) in tf.iter_mut().enumerate() {
                let f = face_index[&opposite_face(tet, k)];
                *slot = f;
                face_tets[f].push(t);
            }
            tet_edges.push(te);
            tet_faces.push(tf);
        }
        if let Some((f, ts)) = face_tets.iter().enumerate().find(|(_, ts)| ts.len() > 2) {
            return Err(Error::MeshValidation(format!(
                "face {:?} shared by {} tets",
                faces[f],
                ts.len()
            )));
        }
        let boundary_faces = (0..faces.len()).filter(|&f| face_tets[f].len() == 1).collect();

        let mesh = TetMesh {
            vertices,
            tets,
            edges,
            faces,
            boundary_faces,
            tet_edges,
            tet_faces,
            face_tets,
        };
        if !mesh.is_connected() {
            return Err(Error::MeshValidation("mesh is not connected".into()));
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Indices (into [`TetMesh::faces`]) of faces with exactly one incident tet.
    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    /// Global edge indices of a tet, in [`LOCAL_EDGES`] order.
    pub fn tet_edges(&self, t: usize) -> &[usize; 6] {
        &self.tet_edges[t]
    }

    /// Global face indices of a tet; entry k is the face opposite local vertex k.
    pub fn tet_faces(&self, t: usize) -> &[usize; 4] {
        &self.tet_faces[t]
    }

    pub fn face_tets(&self, f: usize) -> &[usize] {
        &self.face_tets[f]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    /// Number of Whitney DOFs of form degree `q`.
    pub fn n_dofs(&self, q: usize) -> usize {
        match q {
            0 => self.n_vertices(),
            1 => self.n_edges(),
            2 => self.n_faces(),
            3 => self.n_tets(),
            _ => 0,
        }
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        self.tets[t].map(|v| self.vertices[v])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.vertices, &self.tets[t]) / 6.0
    }

    pub fn tet_centroid(&self, t: usize) -> Point {
        self.tet_points(t).iter().sum::<Point>() / 4.0
    }

    pub fn face_centroid(&self, f: usize) -> Point {
        self.faces[f].iter().map(|&v| self.vertices[v]).sum::<Point>() / 3.0
    }

    /// Unit normal of a boundary face pointing out of its tet.
    pub fn outward_normal(&self, f: usize) -> Point {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        let n = (b - a).cross(&(c - a)).normalize();
        let t = self.face_tets[f][0];
        if n.dot(&(self.face_centroid(f) - self.tet_centroid(t))) >= 0.0 {
            n
        } else {
            -n
        }
    }

    /// Same connectivity with new vertex positions, re-validated.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::ConnectivityMismatch(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        TetMesh::new(vertices, self.tets.clone())
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64
            - self.n_tets() as i64
    }

    fn is_connected(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &[a, b] in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let used: BTreeSet<usize> = self.tets.iter().flatten().copied().collect();
        let roots: BTreeSet<usize> = used.iter().map(|&v| find(&mut parent, v)).collect();
        roots.len() == 1
    }
}

/// Six times the signed volume of a tet.
pub fn signed_volume(vertices: &[Point], tet: &[usize; 4]) -> f64 {
    edge_matrix(vertices, tet).determinant()
}

/// Columns `x1 - x0`, `x2 - x0`, `x3 - x0`.
pub fn edge_matrix(vertices: &[Point], tet: &[usize; 4]) -> Matrix3<f64> {
    let x0 = vertices[tet[0]];
    Matrix3::from_columns(&[
        vertices[tet[1]] - x0,
        vertices[tet[2]] - x0,
        vertices[tet[3]] - x0,
    ])
}

fn sorted2(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn opposite_face(tet: &[usize; 4], k: usize) -> [usize; 3] {
    let mut f = [0; 3];
    let mut j = 0;
    for (i, &v) in tet.iter().enumerate() {
        if i != k {
            f[j] = v;
            j += 1;
        }
    }
    f.sort_unstable();
    f
}

/// Structured `[0,1]^3` mesh with `n^3` cells, each split into six tets
/// along its main diagonal (Kuhn split).
pub fn generate_cube_mesh(n: usize) -> Result<TetMesh> {
    if n == 0 {
        return Err(Error::Usage("cube subdivisions must be >= 1".into()));
    }
    let m = n + 1;
    let idx = |i: usize, j: usize, k: usize| i + m * (j + m * k);
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity(m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                vertices.push(Point::new(i as f64 * h, j as f64 * h, k as f64 * h));
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [idx(c[0], c[1], c[2]); 4];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[s + 1] = idx(c[0], c[1], c[2]);
                    }
                    if signed_volume(&vertices, &tet) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    TetMesh::new(vertices, tets)
}

/// Boundary faces split into the tangential part `gamma_t` (essential
/// conditions on the primal side) and its complement `gamma_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryPartition {
    gamma_t: Vec<usize>,
    gamma_n: Vec<usize>,
}

impl BoundaryPartition {
    /// Builds a partition from a set of boundary face indices.
    pub fn from_gamma_t(mesh: &TetMesh, gamma_t: impl IntoIterator<Item = usize>) -> Result<Self> {
        let boundary: BTreeSet<usize> = mesh.boundary_faces().iter().copied().collect();
        let gt: BTreeSet<usize> = gamma_t.into_iter().collect();
        if let Some(f) = gt.iter().find(|f| !boundary.contains(f)) {
            return Err(Error::MeshValidation(format!(
                "face {f} tagged as gamma_t is not a boundary face"
            )));
        }
        let gamma_n = boundary.difference(&gt).copied().collect();
        Ok(BoundaryPartition {
            gamma_t: gt.into_iter().collect(),
            gamma_n,
        })
    }

    pub fn all(mesh: &TetMesh) -> Self {
        tag_boundary(mesh, |_| true)
    }

    pub fn none(mesh: &TetMesh) -> Self {
        tag_boundary(mesh, |_| false)
    }

    pub fn gamma_t(&self) -> &[usize] {
        &self.gamma_t
    }

    pub fn gamma_n(&self) -> &[usize] {
        &self.gamma_n
    }
}

/// Tags every boundary face for which `selector` (given the three face
/// vertex positions) returns true as part of `gamma_t`.
pub fn tag_boundary<F>(mesh: &TetMesh, selector: F) -> BoundaryPartition
where
    F: Fn(&[Point; 3]) -> bool,
{
    let mut gamma_t = Vec::new();
    let mut gamma_n = Vec::new();
    for &f in mesh.boundary_faces() {
        let pts = mesh.faces()[f].map(|v| mesh.vertices()[v]);
        if selector(&pts) {
            gamma_t.push(f);
        } else {
            gamma_n.push(f);
        }
    }
    BoundaryPartition { gamma_t, gamma_n }
}

/// Named boundary selectors usable from configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSelector {
    All,
    None,
    /// Faces on one or more coordinate planes, e.g. `x=0|z=1`.
    Planes(Vec<(usize, f64)>),
}

impl GammaSelector {
    /// Accepts `all`, `none`, `z0`, or a `|`-separated list of `x=a`,
    /// `y=b`, `z=c` plane conditions.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(GammaSelector::All),
            "none" => Ok(GammaSelector::None),
            "z0" => Ok(GammaSelector::Planes(vec![(2, 0.0)])),
            expr => {
                let mut planes = Vec::new();
                for term in expr.split('|') {
                    let (axis, value) = term
                        .split_once('=')
                        .ok_or_else(|| Error::Parse(format!("bad gamma-t term '{term}'")))?;
                    let axis = match axis.trim() {
                        "x" => 0,
                        "y" => 1,
                        "z" => 2,
                        other => {
                            return Err(Error::Parse(format!("unknown axis '{other}' in gamma-t")))
                        }
                    };
                    let value: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad plane value in '{term}'")))?;
                    planes.push((axis, value));
                }
                Ok(GammaSelector::Planes(planes))
            }
        }
    }

    pub fn select(&self, face: &[Point; 3]) -> bool {
        match self {
            GammaSelector::All => true,
            GammaSelector::None => false,
            GammaSelector::Planes(planes) => planes
                .iter()
                .any(|&(axis, v)| face.iter().all(|p| (p[axis] - v).abs() < 1e-12)),
        }
    }

    pub fn apply(&self, mesh: &TetMesh) -> BoundaryPartition {
        tag_boundary(mesh, |f| self.select(f))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_t_faces: Option<Vec<[usize; 3]>>,
}

/// Serializes a mesh and its partition to the mesh JSON format.
pub fn mesh_to_json(mesh: &TetMesh, partition: &BoundaryPartition) -> Result<String> {
    let file = MeshFile {
        vertices: mesh.vertices().iter().map(|p| [p.x, p.y, p.z]).collect(),
        tets: mesh.tets().to_vec(),
        gamma_t_faces: Some(partition.gamma_t().iter().map(|&f| mesh.faces()[f]).collect()),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))
}

/// Parses the mesh JSON format. A missing `gamma_t_faces` key means an
/// empty `gamma_t`.
pub fn mesh_from_json(text: &str) -> Result<(TetMesh, BoundaryPartition)> {
    let file: MeshFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let vertices = file.vertices.iter().map(|v| Point::new(v[0], v[1], v[2])).collect();
    let mesh = TetMesh::new(vertices, file.tets)?;
    let face_index: BTreeMap<[usize; 3], usize> =
        mesh.faces().iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let mut gamma_t = Vec::new();
    for (i, face) in file.gamma_t_faces.unwrap_or_default().into_iter().enumerate() {
        let mut key = face;
        key.sort_unstable();
        let f = face_index.get(&key).ok_or_else(|| {
            Error::Parse(format!("gamma_t_faces[{i}]: {face:?} is not a mesh face"))
        })?;
        gamma_t.push(*f);
    }
    let partition = BoundaryPartition::from_gamma_t(&mesh, gamma_t)?;
    Ok((mesh, partition))
}

pub fn save_mesh(mesh: &TetMesh, partition: &BoundaryPartition, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mesh_to_json(mesh, partition)?)?;
    Ok(())
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<(TetMesh, BoundaryPartition)> {
    mesh_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_counts() {
        let m1 = generate_cube_mesh(1).unwrap();
        assert_eq!((m1.n_vertices(), m1.n_tets()), (8, 6));
        let m2 = generate_cube_mesh(2).unwrap();
        assert_eq!((m2.n_vertices(), m2.n_tets()), (27, 48));
        for n in 1..=4 {
            let m = generate_cube_mesh(n).unwrap();
            assert_eq!(m.n_vertices(), (n + 1).pow(3));
            assert_eq!(m.n_tets(), 6 * n.pow(3));
            assert_eq!(m.euler_characteristic(), 1);
            // 2 n^2 triangles on each of the six sides
            assert_eq!(m.boundary_faces().len(), 12 * n * n);
        }
    }

    #[test]
    fn kuhn_volumes() {
        let m = generate_cube_mesh(1).unwrap();
        let mut total = 0.0;
        for t in 0..m.n_tets() {
            assert!((m.tet_volume(t) - 1.0 / 6.0).abs() < 1e-15);
            total += m.tet_volume(t);
        }
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn enumeration_is_canonical() {
        let a = generate_cube_mesh(2).unwrap();
        let b = generate_cube_mesh(2).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.faces(), b.faces());
        assert!(a.edges().windows(2).all(|w| w[0] < w[1]));
        assert!(a.faces().windows(2).all(|w| w[0] < w[1]));
        assert!(a.edges().iter().all(|e| e[0] < e[1]));
    }

    #[test]
    fn interior_faces_have_two_tets() {
        let m = generate_cube_mesh(3).unwrap();
        for f in 0..m.n_faces() {
            let boundary = m.boundary_faces().binary_search(&f).is_ok();
            assert_eq!(m.face_tets(f).len(), if boundary { 1 } else { 2 });
        }
    }

    #[test]
    fn outward_normals_leave_the_cube() {
        let m = generate_cube_mesh(2).unwrap();
        let center = Point::new(0.5, 0.5, 0.5);
        for &f in m.boundary_faces() {
            let n = m.outward_normal(f);
            let t = m.face_tets(f)[0];
            assert!(n.dot(&(m.face_centroid(f) - m.tet_centroid(t))) > 0.0);
            assert!(n.dot(&(m.face_centroid(f) - center)) > 0.0);
        }
    }

    #[test]
    fn tagging() {
        let m = generate_cube_mesh(2).unwrap();
        let all = BoundaryPartition::all(&m);
        assert_eq!(all.gamma_t().len(), m.boundary_faces().len());
        assert!(all.gamma_n().is_empty());
        let none = BoundaryPartition::none(&m);
        assert!(none.gamma_t().is_empty());
        let z0 = GammaSelector::parse("z0").unwrap().apply(&m);
        assert_eq!(z0.gamma_t().len(), 8);
        assert_eq!(z0.gamma_t().len() + z0.gamma_n().len(), m.boundary_faces().len());
        let two = GammaSelector::parse("x=0|z=1").unwrap().apply(&m);
        assert_eq!(two.gamma_t().len(), 16);
    }

    #[test]
    fn inverted_tet_is_rejected() {
        let m = generate_cube_mesh(1).unwrap();
        let mut tets = m.tets().to_vec();
        tets[3].swap(0, 1);
        let err = TetMesh::new(m.vertices().to_vec(), tets).unwrap_err();
        assert_eq!(err.to_string(), "mesh validation error: tet 3: non-positive orientation");
    }

    #[test]
    fn disconnected_mesh_is_rejected() {
        let mut v: Vec<Point> = vec![
            Point::new(0., 0., 0.),
            Point::new(1., 0., 0.),
            Point::new(0., 1., 0.),
            Point::new(0., 0., 1.),
        ];
        v.extend(v.clone().iter().map(|p| p + Point::new(5., 0., 0.)));
        let err = TetMesh::new(v, vec![[0, 1, 2, 3], [4, 5, 6, 7]]).unwrap_err();
        assert!(matches!(err, Error::MeshValidation(_)));
    }

    #[test]
    fn json_round_trip() {
        let m = generate_cube_mesh(1).unwrap();
        let p = GammaSelector::parse("z0").unwrap().apply(&m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.json");
        save_mesh(&m, &p, &path).unwrap();
        let (m2, p2) = load_mesh(&path).unwrap();
        assert_eq!(m, m2);
        assert_eq!(p, p2);
        for (a, b) in m.vertices().iter().zip(m2.vertices()) {
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }

    #[test]
    fn json_defaults_and_errors() {
        let text = r#"{"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]], "tets": [[0,1,2,3]]}"#;
        let (_, p) = mesh_from_json(text).unwrap();
        assert!(p.gamma_t().is_empty());
        assert_eq!(p.gamma_n().len(), 4);

        let bad = r#"{"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]], "tets": [[0,1,2,3]], "gamma_t_faces": [[2,1,0],[0,1,7]]}"#;
        let err = mesh_from_json(bad).unwrap_err();
        assert!(err.to_string().contains("gamma_t_faces[1]"), "{err}");

        let inverted = r#"{"vertices": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]], "tets": [[1,0,2,3]]}"#;
        assert!(mesh_from_json(inverted).unwrap_err().to_string().contains("tet 0"));
        assert!(matches!(mesh_from_json("{"), Err(Error::Parse(_))));
    }
}
