use crate::assembly::CoefficientSet;
use crate::derham::DeRhamComplex;
use crate::error::Result;
use crate::mesh::{BoundaryPartition, TetMesh};

/// A mesh with its boundary partition, de Rham complex and coefficients.
#[derive(Debug, Clone)]
pub struct Model {
    pub mesh: TetMesh,
    pub partition: BoundaryPartition,
    pub complex: DeRhamComplex,
    pub coeffs: CoefficientSet,
}

impl Model {
    pub fn new(mesh: TetMesh, partition: BoundaryPartition, coeffs: CoefficientSet) -> Result<Self> {
        coeffs.validate(mesh.n_tets())?;
        let complex = DeRhamComplex::build(&mesh, &partition);
        Ok(Model {
            mesh,
            partition,
            complex,
            coeffs,
        })
    }

    /// Identity coefficients.
    pub fn with_identity(mesh: TetMesh, partition: BoundaryPartition) -> Result<Self> {
        let coeffs = CoefficientSet::identity(mesh.n_tets());
        Model::new(mesh, partition, coeffs)
    }

    /// Same connectivity, boundary tags and coefficients on a moved mesh.
    pub fn with_mesh(&self, mesh: TetMesh) -> Result<Self> {
        if mesh.tets() != self.mesh.tets() {
            return Err(crate::Error::ConnectivityMismatch(
                "replacement mesh has different tets".into(),
            ));
        }
        self.coeffs.validate(mesh.n_tets())?;
        Ok(Model {
            mesh,
            partition: self.partition.clone(),
            complex: self.complex.clone(),
            coeffs: self.coeffs.clone(),
        })
    }

    pub fn with_coeffs(&self, coeffs: CoefficientSet) -> Result<Self> {
        coeffs.validate(self.mesh.n_tets())?;
        Ok(Model {
            coeffs,
            ..self.clone()
        })
    }
}
