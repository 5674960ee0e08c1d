use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use derham_shape::assembly::{mass_matrix, WeightMode};
use derham_shape::eigsolve::LevelOperators;
use derham_shape::hodge::edge_mass;
use derham_shape::linalg::{rank, restrict};
use derham_shape::mesh::{load_mesh, mesh_to_json};
use derham_shape::shapederiv::spectrum_discrepancy;
use derham_shape::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Format, MeshSource, RunConfig};
use crate::specs;

fn build_mesh(cfg: &RunConfig) -> Result<(TetMesh, BoundaryPartition)> {
    let (mesh, stored) = match &cfg.mesh {
        MeshSource::Cube(n) => {
            let m = generate_cube_mesh(*n)?;
            let p = BoundaryPartition::none(&m);
            (m, p)
        }
        MeshSource::File(path) => load_mesh(path).with_context(|| format!("loading {}", path.display()))?,
    };
    let partition = match &cfg.gamma_t {
        Some(sel) => sel.apply(&mesh),
        None => stored,
    };
    Ok((mesh, partition))
}

fn build_model(cfg: &RunConfig) -> Result<Model> {
    let (mesh, partition) = build_mesh(cfg)?;
    let coeffs = specs::coefficients(&cfg.coeffs, mesh.n_tets())?;
    let model = Model::new(mesh, partition, coeffs)?;
    if let Some(dir) = &cfg.dump_ops {
        dump_ops(&model, dir)?;
    }
    Ok(model)
}

fn shape_options(cfg: &RunConfig) -> ShapeOptions {
    ShapeOptions {
        solve: cfg.solve,
        rho: cfg.rho,
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct MeshSummary {
    source: String,
    vertices: usize,
    edges: usize,
    faces: usize,
    tets: usize,
    gamma_t_faces: usize,
    coefficients: String,
}

fn summary(cfg: &RunConfig, model: &Model) -> MeshSummary {
    let m = &model.mesh;
    MeshSummary {
        source: match &cfg.mesh {
            MeshSource::Cube(n) => format!("cube:{n}"),
            MeshSource::File(p) => p.display().to_string(),
        },
        vertices: m.n_vertices(),
        edges: m.n_edges(),
        faces: m.n_faces(),
        tets: m.n_tets(),
        gamma_t_faces: model.partition.gamma_t().len(),
        coefficients: cfg.coeffs.clone(),
    }
}

/// Coordinate-triplet text: a `# rows cols nnz` header, then `row col value`.
fn triplets<T: std::fmt::Display>(rows: usize, cols: usize, entries: impl Iterator<Item = (usize, usize, T)>) -> String {
    let body: Vec<String> = entries.map(|(i, j, v)| format!("{i} {j} {v}")).collect();
    let mut s = format!("# {rows} {cols} {}\n", body.len());
    for line in body {
        s.push_str(&line);
        s.push('\n');
    }
    s
}

fn dump_ops(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (q, name) in [(0, "G"), (1, "C"), (2, "D")] {
        let d = model.complex.derivative_matrix(q)?;
        let text = triplets(d.nrows(), d.ncols(), d.triplet_iter().map(|(i, j, v)| (i, j, *v)));
        fs::write(dir.join(format!("{name}.txt")), text)?;
    }
    for q in 0..4 {
        let w = model.coeffs.mass_weight(q)?;
        let m = mass_matrix(&model.mesh, q, &w, WeightMode::Spd)?;
        let text = triplets(m.nrows(), m.ncols(), m.triplet_iter().map(|(i, j, v)| (i, j, *v)));
        fs::write(dir.join(format!("M{q}.txt")), text)?;
    }
    for q in 0..4 {
        let free = model.complex.free_dofs(q, BoundarySide::Tangential);
        let text: String = free.iter().map(|i| format!("{i}\n")).collect();
        fs::write(dir.join(format!("free{q}.txt")), text)?;
    }
    Ok(())
}

pub fn mesh_gen(cfg: &RunConfig) -> Result<()> {
    let (mesh, partition) = build_mesh(cfg)?;
    emit(cfg.out.as_deref(), &(mesh_to_json(&mesh, &partition)? + "\n"))
}

#[derive(Serialize)]
struct SpectrumOutput {
    mesh: MeshSummary,
    spectrum: SpectrumReport,
}

pub fn spectrum(cfg: &RunConfig) -> Result<()> {
    let model = build_model(cfg)?;
    let mut report = match cfg.problem {
        Problem::Laplace => laplace_spectrum(&model, LaplaceSide::Primal, &cfg.solve)?.report("laplace"),
        Problem::LaplaceDual => laplace_spectrum(&model, LaplaceSide::Dual, &cfg.solve)?.report("laplace-dual"),
        Problem::Maxwell => maxwell_spectrum(&model, &cfg.solve)?.report("maxwell"),
        Problem::VectorLaplacian => vector_laplacian_spectrum(&model, cfg.rho, &cfg.solve)?.report(),
    };
    let top = report.values.iter().copied().fold(0.0, f64::max);
    if report.residual_max > cfg.residual_tol * top.max(1.0) {
        return Err(Error::Consistency(format!(
            "eigenpair residual {:e} exceeds residual-tol {:e}",
            report.residual_max, cfg.residual_tol
        ))
        .into());
    }
    report.values.truncate(cfg.count);
    report.multiplicities.truncate(cfg.count);
    if let Some(b) = report.branches.as_mut() {
        b.truncate(cfg.count);
    }
    let out = SpectrumOutput {
        mesh: summary(cfg, &model),
        spectrum: report,
    };
    emit(cfg.out.as_deref(), &to_json(&out)?)
}

#[derive(Serialize)]
struct ShapeOutput {
    mesh: MeshSummary,
    psi: String,
    report: ShapeDerivativeReport,
}

pub fn shape_grad(cfg: &RunConfig) -> Result<()> {
    let model = build_model(cfg)?;
    let psi = specs::psi(&cfg.psi, &model.mesh)?;
    let report = shape_derivative(&model, cfg.problem, cfg.eigen_index, &psi, &shape_options(cfg))?;
    let out = ShapeOutput {
        mesh: summary(cfg, &model),
        psi: cfg.psi.clone(),
        report,
    };
    emit(cfg.out.as_deref(), &to_json(&out)?)
}

pub fn fd_check_cmd(cfg: &RunConfig) -> Result<()> {
    let model = build_model(cfg)?;
    let psi = specs::psi(&cfg.psi, &model.mesh)?;
    let report = fd_check(&model, cfg.problem, cfg.eigen_index, &psi, &cfg.t, &shape_options(cfg))?;
    let csv = report.fd_csv();
    if let Some(path) = &cfg.csv {
        emit(Some(path), &csv)?;
    }
    match cfg.format {
        Format::Csv => emit(cfg.out.as_deref(), &csv),
        Format::Json => {
            let out = ShapeOutput {
                mesh: summary(cfg, &model),
                psi: cfg.psi.clone(),
                report,
            };
            emit(cfg.out.as_deref(), &to_json(&out)?)
        }
    }
}

#[derive(Serialize)]
struct EquivalenceSample {
    t: f64,
    /// Relative discrepancy of the first positive eigenvalues, levels 0 and 1.
    spectrum: [f64; 2],
    /// Entrywise mass deviation relative to the largest entry, q = 0..3.
    mass: [f64; 4],
}

#[derive(Serialize)]
struct EquivalenceOutput {
    mesh: MeshSummary,
    psi: String,
    count: usize,
    spectrum_tol: f64,
    mass_tol: f64,
    samples: Vec<EquivalenceSample>,
    passed: bool,
}

const SPECTRUM_TOL: f64 = 1e-10;
const MASS_TOL: f64 = 1e-12;
const EQUIVALENCE_COUNT: usize = 10;

fn equivalence_sample(model: &Model, psi: &VertexField, t: f64, opts: &SolveOptions) -> Result<EquivalenceSample> {
    let map = make_map(&model.mesh, psi, t)?;
    let transformed = model.with_coeffs(transform_coefficients(&model.coeffs, &map)?)?;
    let deformed = model.with_mesh(map.deformed().clone())?;
    let mut spectrum = [0.0; 2];
    for (level, slot) in spectrum.iter_mut().enumerate() {
        let a = LevelOperators::new(&deformed, level)?.solve(opts)?;
        let b = LevelOperators::new(&transformed, level)?.solve(opts)?;
        *slot = spectrum_discrepancy(&a, &b, EQUIVALENCE_COUNT);
    }
    let mut mass = [0.0; 4];
    for (q, slot) in mass.iter_mut().enumerate() {
        let md = mass_matrix(&deformed.mesh, q, &model.coeffs.mass_weight(q)?, WeightMode::Spd)?;
        let mr = mass_matrix(&model.mesh, q, &transformed.coeffs.mass_weight(q)?, WeightMode::Spd)?;
        let scale = mr.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        // same sparsity pattern, so values line up
        let dev = md.values().iter().zip(mr.values()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        *slot = dev / scale;
    }
    Ok(EquivalenceSample { t, spectrum, mass })
}

pub fn equivalence_check(cfg: &RunConfig) -> Result<()> {
    let model = build_model(cfg)?;
    let psi = specs::psi(&cfg.psi, &model.mesh)?;
    let samples = cfg
        .t
        .iter()
        .map(|&t| equivalence_sample(&model, &psi, t, &cfg.solve))
        .collect::<Result<Vec<_>>>()?;
    let passed = samples
        .iter()
        .all(|s| s.spectrum.iter().all(|&d| d <= SPECTRUM_TOL) && s.mass.iter().all(|&d| d <= MASS_TOL));
    let worst = samples
        .iter()
        .flat_map(|s| s.spectrum.iter().copied())
        .fold(0.0, f64::max);
    let out = EquivalenceOutput {
        mesh: summary(cfg, &model),
        psi: cfg.psi.clone(),
        count: EQUIVALENCE_COUNT,
        spectrum_tol: SPECTRUM_TOL,
        mass_tol: MASS_TOL,
        samples,
        passed,
    };
    emit(cfg.out.as_deref(), &to_json(&out)?)?;
    if !passed {
        return Err(Error::Equivalence {
            discrepancy: worst,
            tol: SPECTRUM_TOL,
        }
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct HelmholtzOutput {
    mesh: MeshSummary,
    field: String,
    norms: HodgeNorms,
    orthogonality: f64,
    pythagoras: f64,
    reconstruction: f64,
    cohomology_dim: usize,
}

pub fn helmholtz(cfg: &RunConfig) -> Result<()> {
    let model = build_model(cfg)?;
    let side = BoundarySide::Tangential;
    let e = model.complex.free_dofs(1, side);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = match cfg.field.as_str() {
        "random" => nalgebra_vec(e.len(), &mut rng),
        "grad" => {
            let v = model.complex.free_dofs(0, side);
            let g = restrict(model.complex.derivative(0)?, e, v);
            g * nalgebra_vec(v.len(), &mut rng)
        }
        _ => maxwell_spectrum(&model, &cfg.solve)?.pair(cfg.eigen_index)?.vector,
    };
    let split = helmholtz_decompose(&model, &x)?;
    let m = edge_mass(&model)?;
    let out = HelmholtzOutput {
        mesh: summary(cfg, &model),
        field: cfg.field.clone(),
        norms: split.norms,
        orthogonality: split.max_orthogonality(&m),
        pythagoras: split.pythagoras_defect(),
        reconstruction: split.reconstruction_error(),
        cohomology_dim: cohomology_dim(&model.complex),
    };
    emit(cfg.out.as_deref(), &to_json(&out)?)
}

fn nalgebra_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

#[derive(Serialize)]
struct Check {
    name: String,
    passed: bool,
    value: f64,
    tol: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    detail: String,
}

#[derive(Serialize)]
struct VerifyOutput {
    mesh: MeshSummary,
    checks: Vec<Check>,
    passed: bool,
}

struct Checks(Vec<Check>);

impl Checks {
    /// Records `value <= tol`, or a failure carrying the error message.
    fn add(&mut self, name: &str, tol: f64, value: Result<f64>) {
        let check = match value {
            Ok(v) => Check {
                name: name.into(),
                passed: v <= tol,
                value: v,
                tol,
                detail: String::new(),
            },
            Err(e) => Check {
                name: name.into(),
                passed: false,
                value: f64::NAN,
                tol,
                detail: format!("{e:#}"),
            },
        };
        self.0.push(check);
    }
}

/// Index of the first simple eigenvalue, if any.
fn first_simple(model: &Model, level: usize, opts: &SolveOptions) -> Result<Option<usize>> {
    let r = LevelOperators::new(model, level)?.solve(opts)?;
    Ok(r.multiplicities.iter().position(|&m| m == 1))
}

pub fn verify(cfg: &RunConfig) -> Result<()> {
    let model = build_model(cfg)?;
    let opts = shape_options(cfg);
    let mut checks = Checks(Vec::new());

    checks.add(
        "complex: |CG| + |DC| (integer)",
        0.0,
        (|| -> Result<f64> {
            let g = model.complex.derivative_matrix(0)?;
            let c = model.complex.derivative_matrix(1)?;
            let d = model.complex.derivative_matrix(2)?;
            let cg = c * g;
            let dc = d * c;
            let total: i64 = cg.values().iter().chain(dc.values()).map(|v| v.abs() as i64).sum();
            Ok(total as f64)
        })(),
    );

    let free_v = model.complex.free_dofs(0, BoundarySide::Tangential);
    let free_e = model.complex.free_dofs(1, BoundarySide::Tangential);
    let coh = cohomology_dim(&model.complex);
    checks.add(
        "maxwell kernel = rank G + cohomology",
        0.0,
        (|| -> Result<f64> {
            let r = maxwell_spectrum(&model, &cfg.solve)?;
            let g = restrict(model.complex.derivative(0)?, free_e, free_v);
            let expected = rank(&g, derham_shape::hodge::RANK_TOL) + coh;
            Ok((r.kernel_dim as f64 - expected as f64).abs())
        })(),
    );

    let psi = VertexField::random(&model.mesh, cfg.seed);
    checks.add(
        "equivalence: spectra, levels 0 and 1",
        SPECTRUM_TOL,
        (|| -> Result<f64> {
            let jmax = psi
                .jacobians(&model.mesh)?
                .iter()
                .map(|j| j.norm())
                .fold(0.0, f64::max);
            let s = equivalence_sample(&model, &psi, 0.3 / jmax.max(1e-300), &cfg.solve)?;
            let mass = s.mass.iter().copied().fold(0.0, f64::max);
            if mass > MASS_TOL {
                return Err(Error::Equivalence {
                    discrepancy: mass,
                    tol: MASS_TOL,
                }
                .into());
            }
            Ok(s.spectrum[0].max(s.spectrum[1]))
        })(),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = nalgebra_vec(free_e.len(), &mut rng);
    let split = helmholtz_decompose(&model, &x).map_err(anyhow::Error::from);
    let m = edge_mass(&model);
    checks.add(
        "hodge: pairwise orthogonality",
        1e-10,
        match (&split, &m) {
            (Ok(s), Ok(m)) => Ok(s.max_orthogonality(m)),
            _ => Err(anyhow::anyhow!("decomposition failed")),
        },
    );
    checks.add(
        "hodge: pythagoras",
        1e-9,
        split.as_ref().map(|s| s.pythagoras_defect()).map_err(|e| anyhow::anyhow!("{e:#}")),
    );

    let dilate = VertexField::dilate(&model.mesh);
    let translate = VertexField::translate(&model.mesh, Point::new(0.3, -1.0, 0.7));
    for (problem, level) in [(Problem::Laplace, 0), (Problem::LaplaceDual, 0), (Problem::Maxwell, 1)] {
        let index = match first_simple(&model, level, &cfg.solve) {
            Ok(Some(i)) => i,
            Ok(None) => continue,
            Err(e) => {
                checks.add(&format!("{problem}: solve"), 0.0, Err(e));
                continue;
            }
        };
        checks.add(
            &format!("{problem}: dilation |dλ/λ + 2|"),
            1e-10,
            shape_derivative(&model, problem, index, &dilate, &opts)
                .map(|r| (r.dlambda / r.lambda + 2.0).abs())
                .map_err(Into::into),
        );
        checks.add(
            &format!("{problem}: translation |dλ|"),
            0.0,
            shape_derivative(&model, problem, index, &translate, &opts)
                .map(|r| r.dlambda.abs())
                .map_err(Into::into),
        );
        checks.add(
            &format!("{problem}: Hellmann-Feynman deviation / λ"),
            1e-12,
            hellmann_feynman(&model, problem, index, &psi, &cfg.solve)
                .map(|h| h.deviation / h.lambda)
                .map_err(Into::into),
        );
        if problem == Problem::Laplace {
            checks.add(
                "laplace: primal/dual relative difference",
                1e-9,
                (|| -> Result<f64> {
                    let a = shape_derivative(&model, Problem::Laplace, index, &psi, &opts)?;
                    let b = shape_derivative(&model, Problem::LaplaceDual, index, &psi, &opts)?;
                    Ok((a.dlambda - b.dlambda).abs() / a.dlambda.abs().max(f64::MIN_POSITIVE * a.lambda))
                })(),
            );
        }
    }

    let checks = checks.0;
    let passed = checks.iter().all(|c| c.passed);
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let out = VerifyOutput {
        mesh: summary(cfg, &model),
        checks,
        passed,
    };
    emit(cfg.out.as_deref(), &to_json(&out)?)?;
    if !passed {
        let mut msg = String::new();
        write!(msg, "{} check(s) failed: {}", failed.len(), failed.join(", "))?;
        return Err(Error::Consistency(msg).into());
    }
    Ok(())
}
