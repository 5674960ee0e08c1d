//! Hadamard shape derivatives of simple eigenvalues and their validation.
//!
//! For `Φ_t = id + tΨ` the eigenvalue `λ(t)` of the deformed problem equals
//! the eigenvalue on the reference mesh with transformed coefficients, so
//! its derivative at `t = 0` is a quadratic form of the eigenvector against
//! the derivative weights of [`coefficient_derivative`]:
//!
//! ```text
//! laplace       dλ = (Gu)ᵀ M₁(∂ε) (Gu) − λ uᵀ M₀(∂ν) u
//! maxwell       dλ = (CE)ᵀ M₂(∂μ⁻¹) (CE) − λ Eᵀ M₁(∂ε) E
//! laplace-dual  dλ = wᵀ M₀(ν² ∂ν⁻¹) w + λ Hᵀ M₁(∂ε) H,   w = A₀* H
//! ```
//!
//! [`fd_check`] compares these against central differences of `λ(t)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{mass_matrix, stiffness_matrix, Weight, WeightMode};
use crate::eigsolve::{
    dual_eigenvector, vector_laplacian_spectrum, Branch, EigenResult, Eigenpair, LevelOperators,
    SolveOptions,
};
use crate::error::{Error, Result};
use crate::linalg::{quad_form, restrict};
use crate::model::Model;
use crate::transform::{coefficient_derivative, make_map, symtr, transform_coefficients, DerivativeWeights, VertexField};

/// Eigenvectors must satisfy `|xᵀMx − 1| ≤ NORMALIZATION_TOL`.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Deformed-mesh and transformed-coefficient spectra must agree to this
/// relative tolerance.
pub const EQUIVALENCE_TOL: f64 = 1e-10;

/// Number of positive eigenvalues compared in the equivalence check.
pub const EQUIVALENCE_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Laplace,
    LaplaceDual,
    Maxwell,
    VectorLaplacian,
}

impl Problem {
    pub const ALL: [Problem; 4] = [
        Problem::Laplace,
        Problem::LaplaceDual,
        Problem::Maxwell,
        Problem::VectorLaplacian,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Problem::Laplace => "laplace",
            Problem::LaplaceDual => "laplace-dual",
            Problem::Maxwell => "maxwell",
            Problem::VectorLaplacian => "vector-laplacian",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown problem '{s}' (expected laplace, laplace-dual, maxwell or vector-laplacian)"
                ))
            })
    }
}

/// One row of a finite-difference table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdRow {
    pub t: f64,
    /// `λ(t)`
    pub lambda_t: f64,
    /// `λ(−t)`
    pub lambda_minus_t: f64,
    /// `(λ(t) − λ(−t)) / 2t`
    pub fd: f64,
    pub formula: f64,
    pub abs_err: f64,
}

/// Convergence summary of a finite-difference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSummary {
    /// `abs_err[i] / abs_err[i+1]` for consecutive rows.
    pub ratios: Vec<f64>,
    /// Richardson extrapolation of consecutive central differences.
    pub extrapolated: Vec<f64>,
    /// Largest `|extrapolated − formula|` relative to `|formula|`, or to
    /// `λ` when the formula vanishes.
    pub extrapolated_rel_err: f64,
    /// Least-squares slope of `log abs_err` against `log t`.
    pub order: Option<f64>,
    /// Largest relative discrepancy between deformed-mesh and
    /// transformed-coefficient spectra over all sampled `t`.
    pub equivalence_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDerivativeReport {
    pub problem: Problem,
    /// Index of the distinct positive eigenvalue.
    pub eigen_index: usize,
    pub lambda: f64,
    /// Always `stiffness_term + mass_term`.
    pub dlambda: f64,
    pub stiffness_term: f64,
    pub mass_term: f64,
    pub normalization_residual: f64,
    /// The same derivative through `symtr J_Ψ` weights, for identity
    /// coefficients only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symtr_form: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
    #[serde(default)]
    pub fd_table: Vec<FdRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_summary: Option<FdSummary>,
}

impl ShapeDerivativeReport {
    fn new(problem: Problem, lambda: f64, stiffness_term: f64, mass_term: f64, normalization_residual: f64) -> Self {
        ShapeDerivativeReport {
            problem,
            eigen_index: 0,
            lambda,
            dlambda: stiffness_term + mass_term,
            stiffness_term,
            mass_term,
            normalization_residual,
            symtr_form: None,
            branch: None,
            fd_table: vec![],
            fd_summary: None,
        }
    }

    /// Plot-ready CSV with columns `t,lambda_t,fd,formula,abs_err`.
    pub fn fd_csv(&self) -> String {
        let mut out = String::from("t,lambda_t,fd,formula,abs_err\n");
        for r in &self.fd_table {
            out.push_str(&format!("{:e},{:e},{:e},{:e},{:e}\n", r.t, r.lambda_t, r.fd, r.formula, r.abs_err));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeOptions {
    pub solve: SolveOptions,
    /// Laplace branch scaling of the vector Laplacian.
    pub rho: f64,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        ShapeOptions {
            solve: SolveOptions::default(),
            rho: 1.0,
        }
    }
}

fn check_simple(pair: &Eigenpair) -> Result<()> {
    if pair.multiplicity != 1 {
        return Err(Error::NotSimple {
            value: pair.value,
            multiplicity: pair.multiplicity,
        });
    }
    Ok(())
}

fn check_normalized(m: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    if x.len() != m.nrows() {
        return Err(Error::InvalidInput(format!(
            "eigenvector has {} entries for {} free DOFs",
            x.len(),
            m.nrows()
        )));
    }
    let residual = (quad_form(m, x) - 1.0).abs();
    if residual > NORMALIZATION_TOL {
        return Err(Error::Normalization { residual });
    }
    Ok(residual)
}

/// Mass matrix of a (possibly indefinite) weight on the given free DOFs.
fn signed_mass(model: &Model, q: usize, weight: &Weight, free: &[usize]) -> Result<DMatrix<f64>> {
    let m = mass_matrix(&model.mesh, q, weight, WeightMode::Signed)?;
    Ok(restrict(&m, free, free))
}

fn symtr_weights(model: &Model, psi: &VertexField) -> Result<(Weight, Weight)> {
    let jac = psi.jacobians(&model.mesh)?;
    Ok((
        Weight::Tensor(jac.iter().map(symtr).collect()),
        Weight::Scalar(jac.iter().map(|j| j.trace()).collect()),
    ))
}

/// Primal Laplace formula for a simple pair `(λ, u)` with `uᵀM₀(ν)u = 1`.
pub fn hadamard_laplace_primal(model: &Model, pair: &Eigenpair, psi: &VertexField) -> Result<ShapeDerivativeReport> {
    let ops = LevelOperators::new(model, 0)?;
    laplace_primal_with(model, &ops, pair, psi)
}

fn laplace_primal_with(
    model: &Model,
    ops: &LevelOperators,
    pair: &Eigenpair,
    psi: &VertexField,
) -> Result<ShapeDerivativeReport> {
    check_simple(pair)?;
    let (lambda, u) = (pair.value, &pair.vector);
    let residual = check_normalized(&ops.m_src, u)?;
    let w = coefficient_derivative(&model.mesh, &model.coeffs, psi)?;
    let m1 = signed_mass(model, 1, &w.weight(1)?, &ops.tgt_free)?;
    let m0 = signed_mass(model, 0, &w.weight(0)?, &ops.src_free)?;
    let gu = ops.apply(u);
    let mut report = ShapeDerivativeReport::new(
        Problem::Laplace,
        lambda,
        quad_form(&m1, &gu),
        -lambda * quad_form(&m0, u),
        residual,
    );
    if model.coeffs.is_identity() {
        // −dλ/λ = Hᵀ M₁(symtr J_Ψ) H + uᵀ M₀(div Ψ) u
        let (st, div) = symtr_weights(model, psi)?;
        let h = &gu / lambda.sqrt();
        let s1 = signed_mass(model, 1, &st, &ops.tgt_free)?;
        let s0 = signed_mass(model, 0, &div, &ops.src_free)?;
        report.symtr_form = Some(-lambda * (quad_form(&s1, &h) + quad_form(&s0, u)));
    }
    Ok(report)
}

/// Maxwell formula for a simple pair `(λ, E)` with `EᵀM₁(ε)E = 1`.
pub fn hadamard_maxwell(model: &Model, pair: &Eigenpair, psi: &VertexField) -> Result<ShapeDerivativeReport> {
    let ops = LevelOperators::new(model, 1)?;
    maxwell_with(model, &ops, pair, psi)
}

fn maxwell_with(model: &Model, ops: &LevelOperators, pair: &Eigenpair, psi: &VertexField) -> Result<ShapeDerivativeReport> {
    check_simple(pair)?;
    let (lambda, e) = (pair.value, &pair.vector);
    let residual = check_normalized(&ops.m_src, e)?;
    let w = coefficient_derivative(&model.mesh, &model.coeffs, psi)?;
    let m2 = signed_mass(model, 2, &w.weight(2)?, &ops.tgt_free)?;
    let m1 = signed_mass(model, 1, &w.weight(1)?, &ops.src_free)?;
    let ce = ops.apply(e);
    let mut report = ShapeDerivativeReport::new(
        Problem::Maxwell,
        lambda,
        quad_form(&m2, &ce),
        -lambda * quad_form(&m1, e),
        residual,
    );
    if model.coeffs.is_identity() {
        // dλ/λ = E*ᵀ M₂(symtr J_Ψ) E* + Eᵀ M₁(symtr J_Ψ) E with E* = λ^{-1/2} C E
        let (st, _) = symtr_weights(model, psi)?;
        let estar = &ce / lambda.sqrt();
        let s2 = signed_mass(model, 2, &st, &ops.tgt_free)?;
        let s1 = signed_mass(model, 1, &st, &ops.src_free)?;
        report.symtr_form = Some(lambda * (quad_form(&s2, &estar) + quad_form(&s1, e)));
    }
    Ok(report)
}

/// Dual Laplace formula for a simple pair `(λ, H)` of `A₀A₀*` on the free
/// edges with `HᵀM₁(ε)H = 1`, typically from [`dual_eigenvector`].
pub fn hadamard_laplace_dual(model: &Model, pair: &Eigenpair, psi: &VertexField) -> Result<ShapeDerivativeReport> {
    let ops = LevelOperators::new(model, 0)?;
    laplace_dual_with(model, &ops, pair, psi)
}

fn laplace_dual_with(
    model: &Model,
    ops: &LevelOperators,
    pair: &Eigenpair,
    psi: &VertexField,
) -> Result<ShapeDerivativeReport> {
    check_simple(pair)?;
    let (lambda, h) = (pair.value, &pair.vector);
    let residual = check_normalized(&ops.m_tgt, h)?;
    let w = coefficient_derivative(&model.mesh, &model.coeffs, psi)?;
    let nu = &model.coeffs.nu;
    let scaled = Weight::Scalar(w.dnu_inv.iter().zip(nu).map(|(d, n)| d * n * n).collect());
    let m0 = signed_mass(model, 0, &scaled, &ops.src_free)?;
    let m1 = signed_mass(model, 1, &w.weight(1)?, &ops.tgt_free)?;
    let astar = ops.adjoint(h)?;
    let mut report = ShapeDerivativeReport::new(
        Problem::LaplaceDual,
        lambda,
        quad_form(&m0, &astar),
        lambda * quad_form(&m1, h),
        residual,
    );
    if model.coeffs.is_identity() {
        let (st, div) = symtr_weights(model, psi)?;
        let ustar = &astar / lambda.sqrt();
        let s1 = signed_mass(model, 1, &st, &ops.tgt_free)?;
        let s0 = signed_mass(model, 0, &div, &ops.src_free)?;
        report.symtr_form = Some(-lambda * (quad_form(&s1, h) + quad_form(&s0, &ustar)));
    }
    Ok(report)
}

/// Operator level and Laplace scaling for a problem, after resolving the
/// vector Laplacian to one of its branches.
#[derive(Debug, Clone, Copy)]
struct Target {
    problem: Problem,
    level: usize,
    /// Index of the distinct value within the branch solve.
    index: usize,
    scale: f64,
    branch: Option<Branch>,
}

fn resolve_target(model: &Model, problem: Problem, index: usize, opts: &ShapeOptions) -> Result<Target> {
    let simple = |problem, level| Target {
        problem,
        level,
        index,
        scale: 1.0,
        branch: None,
    };
    match problem {
        Problem::Laplace | Problem::LaplaceDual => Ok(simple(problem, 0)),
        Problem::Maxwell => Ok(simple(problem, 1)),
        Problem::VectorLaplacian => {
            let v = vector_laplacian_spectrum(model, opts.rho, &opts.solve)?;
            let value = *v.values.get(index).ok_or_else(|| {
                Error::InvalidInput(format!("eigen index {index} out of range ({} values)", v.values.len()))
            })?;
            let (level, branch_result, scale, branch) = match v.branches[index] {
                Branch::Both => {
                    return Err(Error::NotSimple {
                        value,
                        multiplicity: v.multiplicities[index],
                    })
                }
                Branch::Laplace => (0, &v.laplace, opts.rho, Branch::Laplace),
                Branch::Maxwell => (1, &v.maxwell, 1.0, Branch::Maxwell),
            };
            let inner = branch_result
                .values
                .iter()
                .position(|&x| x * scale == value)
                .ok_or_else(|| Error::Consistency("merged value not found in its branch".into()))?;
            Ok(Target {
                problem: if level == 0 { Problem::Laplace } else { Problem::Maxwell },
                level,
                index: inner,
                scale,
                branch: Some(branch),
            })
        }
    }
}

/// Solves the requested problem and evaluates the Hadamard formula for the
/// `index`-th distinct positive eigenvalue.
pub fn shape_derivative(
    model: &Model,
    problem: Problem,
    index: usize,
    psi: &VertexField,
    opts: &ShapeOptions,
) -> Result<ShapeDerivativeReport> {
    let target = resolve_target(model, problem, index, opts)?;
    let ops = LevelOperators::new(model, target.level)?;
    let result = ops.solve(&opts.solve)?;
    let mut report = formula_for(model, &ops, &result, &target, psi)?;
    report.problem = problem;
    report.eigen_index = index;
    report.branch = target.branch;
    Ok(report)
}

fn formula_for(
    model: &Model,
    ops: &LevelOperators,
    result: &EigenResult,
    target: &Target,
    psi: &VertexField,
) -> Result<ShapeDerivativeReport> {
    let pair = result.pair(target.index)?;
    let mut report = match target.problem {
        Problem::Laplace => laplace_primal_with(model, ops, &pair, psi)?,
        Problem::Maxwell => maxwell_with(model, ops, &pair, psi)?,
        Problem::LaplaceDual => {
            check_simple(&pair)?;
            let dual = dual_eigenvector(ops, pair.value, &pair.vector)?;
            let dual_pair = Eigenpair {
                vector: dual.y,
                ..pair
            };
            laplace_dual_with(model, ops, &dual_pair, psi)?
        }
        Problem::VectorLaplacian => unreachable!("resolved to a branch"),
    };
    if target.scale != 1.0 {
        let s = target.scale;
        report.lambda *= s;
        report.stiffness_term *= s;
        report.mass_term *= s;
        report.dlambda = report.stiffness_term + report.mass_term;
        report.symtr_form = report.symtr_form.map(|v| v * s);
    }
    Ok(report)
}

/// Relative discrepancy of the first `count` positive eigenvalues.
pub fn spectrum_discrepancy(a: &EigenResult, b: &EigenResult, count: usize) -> f64 {
    let (va, vb) = (a.positive_values(), b.positive_values());
    if va.len() != vb.len() {
        return f64::INFINITY;
    }
    va.iter()
        .zip(&vb)
        .take(count)
        .map(|(x, y)| (x - y).abs() / y.abs())
        .fold(0.0, f64::max)
}

struct Sample {
    lambda: f64,
    discrepancy: f64,
}

/// Solves at `Φ_s` both ways and tracks the reference eigenvector.
fn sample(model: &Model, psi: &VertexField, s: f64, level: usize, x0: &DVector<f64>, opts: &SolveOptions) -> Result<Sample> {
    let map = make_map(&model.mesh, psi, s)?;
    let transformed = model.with_coeffs(transform_coefficients(&model.coeffs, &map)?)?;
    let deformed = model.with_mesh(map.deformed().clone())?;
    let ops = LevelOperators::new(&transformed, level)?;
    let r = ops.solve(opts)?;
    let rd = LevelOperators::new(&deformed, level)?.solve(opts)?;
    let discrepancy = spectrum_discrepancy(&rd, &r, EQUIVALENCE_COUNT);
    if !(discrepancy <= EQUIVALENCE_TOL) {
        return Err(Error::Equivalence {
            discrepancy,
            tol: EQUIVALENCE_TOL,
        });
    }
    // overlap with each cluster: norm of the M-projection of x0
    let mx0 = &ops.m_src * x0;
    let overlaps: Vec<f64> = r.vectors.iter().map(|v| (v.transpose() * &mx0).norm()).collect();
    let (best, &overlap) = overlaps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Tracking(format!("no positive eigenvalues at t = {s:e}")))?;
    if r.multiplicities[best] != 1 {
        return Err(Error::Tracking(format!(
            "tracked eigenvalue {:e} merged into a cluster of {} at t = {s:e}",
            r.values[best], r.multiplicities[best]
        )));
    }
    if overlap < 0.5 {
        return Err(Error::Tracking(format!(
            "largest eigenvector overlap {overlap:.3} at t = {s:e} is ambiguous"
        )));
    }
    Ok(Sample {
        lambda: r.values[best],
        discrepancy,
    })
}

/// Validates the Hadamard formula against central differences at each `t`.
///
/// Every sample solves the problem twice, on the deformed mesh and on the
/// reference mesh with transformed coefficients, and fails unless both
/// spectra agree to [`EQUIVALENCE_TOL`]. Samples run in parallel.
pub fn fd_check(
    model: &Model,
    problem: Problem,
    index: usize,
    psi: &VertexField,
    ts: &[f64],
    opts: &ShapeOptions,
) -> Result<ShapeDerivativeReport> {
    if ts.is_empty() {
        return Err(Error::InvalidInput("t list is empty".into()));
    }
    if let Some(t) = ts.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidInput(format!("t values must be positive, got {t}")));
    }
    let target = resolve_target(model, problem, index, opts)?;
    let ops = LevelOperators::new(model, target.level)?;
    let base = ops.solve(&opts.solve)?;
    let mut report = formula_for(model, &ops, &base, &target, psi)?;
    report.problem = problem;
    report.eigen_index = index;
    report.branch = target.branch;
    let x0 = base.pair(target.index)?.vector;

    let signed: Vec<f64> = ts.iter().flat_map(|&t| [t, -t]).collect();
    let samples: Vec<Result<Sample>> = signed
        .par_iter()
        .map(|&s| sample(model, psi, s, target.level, &x0, &opts.solve))
        .collect();
    let samples: Vec<Sample> = samples.into_iter().collect::<Result<_>>()?;

    let formula = report.dlambda;
    let scale = target.scale;
    report.fd_table = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (plus, minus) = (scale * samples[2 * i].lambda, scale * samples[2 * i + 1].lambda);
            let fd = (plus - minus) / (2.0 * t);
            FdRow {
                t,
                lambda_t: plus,
                lambda_minus_t: minus,
                fd,
                formula,
                abs_err: (fd - formula).abs(),
            }
        })
        .collect();
    let equivalence_max = samples.iter().map(|s| s.discrepancy).fold(0.0, f64::max);
    report.fd_summary = Some(summarize(&report.fd_table, formula, report.lambda, equivalence_max));
    Ok(report)
}

fn summarize(rows: &[FdRow], formula: f64, lambda: f64, equivalence_max: f64) -> FdSummary {
    let ratios = rows.windows(2).map(|w| w[0].abs_err / w[1].abs_err).collect();
    let extrapolated: Vec<f64> = rows
        .windows(2)
        .map(|w| {
            let r2 = (w[0].t / w[1].t).powi(2);
            (r2 * w[1].fd - w[0].fd) / (r2 - 1.0)
        })
        .collect();
    let denom = if formula != 0.0 { formula.abs() } else { lambda.abs() };
    let extrapolated_rel_err = extrapolated
        .iter()
        .map(|e| (e - formula).abs() / denom)
        .fold(0.0, f64::max);
    let order = if rows.len() >= 2 && rows.iter().all(|r| r.abs_err > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.abs_err.ln()).collect();
        Some(slope(&xs, &ys))
    } else {
        None
    };
    FdSummary {
        ratios,
        extrapolated,
        extrapolated_rel_err,
        order,
        equivalence_max,
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// `|formula − xᵀ(dK − λ dM)x|` for an M-normalized eigenvector `x`.
pub fn hellmann_feynman_check(
    k_dot: &DMatrix<f64>,
    m_dot: &DMatrix<f64>,
    lambda: f64,
    x: &DVector<f64>,
    formula: f64,
) -> f64 {
    let assembled = quad_form(k_dot, x) - lambda * quad_form(m_dot, x);
    (formula - assembled).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HellmannFeynman {
    pub lambda: f64,
    pub formula: f64,
    pub assembled: f64,
    pub deviation: f64,
}

/// Derivatives `dK`, `dM` of the pencil assembled from the derivative
/// weights, on the free DOFs of `ops`. For the dual Laplace pencil
/// `K = M₁ G M₀⁻¹ Gᵀ M₁` on edges the product rule is applied.
fn pencil_derivatives(
    model: &Model,
    ops: &LevelOperators,
    w: &DerivativeWeights,
    dual: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let level = ops.level;
    if !dual {
        let k = stiffness_matrix(&model.mesh, &model.complex, level, &w.weight(level + 1)?, WeightMode::Signed)?;
        let dk = restrict(&k, &ops.src_free, &ops.src_free);
        let dm = signed_mass(model, level, &w.weight(level)?, &ops.src_free)?;
        return Ok((dk, dm));
    }
    let dm1 = signed_mass(model, 1, &w.weight(1)?, &ops.tgt_free)?;
    let dm0 = signed_mass(model, 0, &w.weight(0)?, &ops.src_free)?;
    let chol = crate::linalg::cholesky(&ops.m_src)?;
    // B = M₀⁻¹ Gᵀ M₁
    let b = chol.solve(&(ops.d.transpose() * &ops.m_tgt));
    let gb = &ops.d * &b;
    let left = &dm1 * &gb;
    let dk = &left + left.transpose() - b.transpose() * &dm0 * &b;
    Ok((dk, dm1))
}

/// Hellmann–Feynman comparison for the `index`-th distinct positive
/// eigenvalue of `problem` (the vector Laplacian is not supported).
pub fn hellmann_feynman(
    model: &Model,
    problem: Problem,
    index: usize,
    psi: &VertexField,
    opts: &SolveOptions,
) -> Result<HellmannFeynman> {
    let shape_opts = ShapeOptions {
        solve: *opts,
        ..Default::default()
    };
    let target = match problem {
        Problem::VectorLaplacian => {
            return Err(Error::Usage("Hellmann-Feynman check needs laplace, laplace-dual or maxwell".into()))
        }
        _ => resolve_target(model, problem, index, &shape_opts)?,
    };
    let ops = LevelOperators::new(model, target.level)?;
    let result = ops.solve(opts)?;
    let report = formula_for(model, &ops, &result, &target, psi)?;
    let pair = result.pair(index)?;
    let w = coefficient_derivative(&model.mesh, &model.coeffs, psi)?;
    let dual = problem == Problem::LaplaceDual;
    let x = if dual {
        dual_eigenvector(&ops, pair.value, &pair.vector)?.y
    } else {
        pair.vector
    };
    let (dk, dm) = pencil_derivatives(model, &ops, &w, dual)?;
    let assembled = quad_form(&dk, &x) - pair.value * quad_form(&dm, &x);
    Ok(HellmannFeynman {
        lambda: pair.value,
        formula: report.dlambda,
        assembled,
        deviation: hellmann_feynman_check(&dk, &dm, pair.value, &x, report.dlambda),
    })
}
