use std::path::Path;

use derham_shape::{CoefficientSet, Error, Point, Result, TetMesh, VertexField};

/// `identity`, `scaled:eps=2,nu=0.5` (missing keys default to 1),
/// `random:<seed>`, or a JSON file with `eps`, `mu`, `nu`, `kappa` arrays.
pub fn coefficients(spec: &str, n_tets: usize) -> Result<CoefficientSet> {
    let c = if spec == "identity" {
        CoefficientSet::identity(n_tets)
    } else if let Some(rest) = spec.strip_prefix("scaled:") {
        let mut vals = [1.0; 4];
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("coeffs: expected key=value, got `{kv}`")))?;
            let slot = match k.trim() {
                "eps" => 0,
                "mu" => 1,
                "nu" => 2,
                "kappa" => 3,
                other => return Err(Error::Parse(format!("coeffs: unknown key `{other}`"))),
            };
            vals[slot] = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("coeffs: `{v}` is not a number")))?;
        }
        CoefficientSet::scaled(n_tets, vals[0], vals[1], vals[2], vals[3])
    } else if let Some(seed) = spec.strip_prefix("random:") {
        CoefficientSet::random(n_tets, parse_seed("coeffs", seed)?)
    } else if Path::new(spec).is_file() {
        let text = std::fs::read_to_string(spec)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{spec}: {e}")))?
    } else {
        return Err(Error::Parse(format!(
            "coeffs: `{spec}` is neither identity, scaled:…, random:<seed> nor an existing file"
        )));
    };
    c.validate(n_tets)?;
    Ok(c)
}

/// `dilate`, `translate`, `shear`, `stretch`, `random:<seed>` or a JSON file.
pub fn psi(spec: &str, mesh: &TetMesh) -> Result<VertexField> {
    let field = match spec {
        "dilate" => VertexField::dilate(mesh),
        "translate" => VertexField::translate(mesh, Point::x()),
        "shear" => VertexField::shear(mesh),
        "stretch" => VertexField::stretch(mesh),
        _ => {
            if let Some(seed) = spec.strip_prefix("random:") {
                VertexField::random(mesh, parse_seed("psi", seed)?)
            } else if Path::new(spec).is_file() {
                VertexField::load(spec)?
            } else {
                return Err(Error::Parse(format!(
                    "psi: `{spec}` is neither a preset, random:<seed> nor an existing file"
                )));
            }
        }
    };
    if field.len() != mesh.n_vertices() {
        return Err(Error::InvalidInput(format!(
            "psi has {} vectors for {} vertices",
            field.len(),
            mesh.n_vertices()
        )));
    }
    Ok(field)
}

fn parse_seed(what: &str, s: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::Parse(format!("{what}: bad seed `{s}`")))
}
