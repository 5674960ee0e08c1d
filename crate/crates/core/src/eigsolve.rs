//! Generalized symmetric eigenproblems `K x = λ M x` for the discrete
//! operators `A₀*A₀`, `A₁*A₁`, their duals `A₀A₀*`, `A₁A₁*`, and the vector
//! Laplacian built as the union of the two positive spectra.
//!
//! The reference path reduces the pencil to a standard symmetric problem
//! with the Cholesky factor of `M`. A shift-invert subspace iteration is
//! available for larger problems; both must agree to 1e-9.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{mass_matrix, stiffness_matrix, WeightMode};
use crate::derham::BoundarySide;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, quad_form, restrict, symmetrize};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverPath {
    Dense,
    /// Subspace iteration with `(K − shift·M)⁻¹`, returning `count` pairs.
    ShiftInvert { shift: f64, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Eigenvalues below `zero_tol · λ_max` are reported as kernel.
    pub zero_tol: f64,
    /// Neighbouring values closer than `gap_tol · λ` form one cluster.
    pub gap_tol: f64,
    pub path: SolverPath,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            zero_tol: 1e-8,
            gap_tol: 1e-6,
            path: SolverPath::Dense,
        }
    }
}

/// An eigenvalue with one of its M-normalized eigenvectors (free-DOF coordinates).
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: DVector<f64>,
    pub multiplicity: usize,
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Distinct positive eigenvalues, ascending.
    pub values: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// M-orthonormal eigenvector block (as columns) per distinct value.
    pub vectors: Vec<DMatrix<f64>>,
    /// Individual eigenvalues of each cluster.
    pub members: Vec<Vec<f64>>,
    pub kernel_dim: usize,
    /// Kernel eigenvectors when the solver computed them.
    pub kernel: DMatrix<f64>,
    /// Per-pair `‖Kx − λMx‖ / ‖x‖_M`, grouped like `vectors`.
    pub residuals: Vec<Vec<f64>>,
    /// Free DOFs the vectors are expressed on.
    pub free: Vec<usize>,
}

impl EigenResult {
    fn empty(free: Vec<usize>) -> Self {
        EigenResult {
            values: vec![],
            multiplicities: vec![],
            vectors: vec![],
            members: vec![],
            kernel_dim: 0,
            kernel: DMatrix::zeros(free.len(), 0),
            residuals: vec![],
            free,
        }
    }

    /// Positive eigenvalues repeated according to multiplicity.
    pub fn positive_values(&self) -> Vec<f64> {
        self.members.iter().flatten().copied().collect()
    }

    pub fn residual_max(&self) -> f64 {
        self.residuals.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// The `index`-th distinct positive eigenvalue with the first vector of its block.
    pub fn pair(&self, index: usize) -> Result<Eigenpair> {
        let value = *self.values.get(index).ok_or_else(|| {
            Error::InvalidInput(format!(
                "eigen index {index} out of range ({} distinct values)",
                self.values.len()
            ))
        })?;
        Ok(Eigenpair {
            value,
            vector: self.vectors[index].column(0).into_owned(),
            multiplicity: self.multiplicities[index],
        })
    }

    pub fn report(&self, problem: &str) -> SpectrumReport {
        SpectrumReport {
            problem: problem.to_string(),
            values: self.values.clone(),
            multiplicities: self.multiplicities.clone(),
            kernel_dim: self.kernel_dim,
            residual_max: self.residual_max(),
            branches: None,
        }
    }
}

/// Serialized spectrum summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub problem: String,
    pub values: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub kernel_dim: usize,
    pub residual_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Vec<Branch>>,
}

/// Solves the pencil `(K, M)` restricted to `free`.
pub fn solve_gevp(
    k: &CsrMatrix<f64>,
    m: &CsrMatrix<f64>,
    free: &[usize],
    opts: &SolveOptions,
) -> Result<EigenResult> {
    let kd = restrict(k, free, free);
    let md = restrict(m, free, free);
    solve_dense_pencil(&kd, &md, free.to_vec(), None, opts)
}

/// Solves an already restricted dense pencil. `deflate` (shift-invert only)
/// spans a known part of the kernel that is projected out of the iterates.
pub fn solve_dense_pencil(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    free: Vec<usize>,
    deflate: Option<&DMatrix<f64>>,
    opts: &SolveOptions,
) -> Result<EigenResult> {
    if free.is_empty() {
        return Ok(EigenResult::empty(free));
    }
    match opts.path {
        SolverPath::Dense => {
            let (vals, vecs) = dense_gevp(k, m)?;
            Ok(build_result(&vals, &vecs, k, m, free, 0, opts))
        }
        SolverPath::ShiftInvert { shift, count } => {
            let (vals, vecs) = shift_invert(k, m, shift, count, deflate)?;
            let deflated = deflate.map(|z| crate::linalg::rank(z, 1e-10)).unwrap_or(0);
            Ok(build_result(&vals, &vecs, k, m, free, deflated, opts))
        }
    }
}

/// All eigenpairs of `(K, M)` by Cholesky reduction, ascending, M-orthonormal.
pub fn dense_gevp(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let l = cholesky(m)?.l();
    let lk = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
    let mut a = l
        .solve_lower_triangular(&lk.transpose())
        .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
    symmetrize(&mut a);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_columns(
        &order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>(),
    );
    let x = l
        .tr_solve_lower_triangular(&y)
        .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
    Ok((vals, x))
}

fn m_project_out(y: &mut DMatrix<f64>, z: &DMatrix<f64>, m: &DMatrix<f64>) {
    if z.ncols() == 0 {
        return;
    }
    let mz = m * z;
    let gram = z.transpose() * &mz;
    let rhs = mz.transpose() * &*y;
    let coef = crate::linalg::psd_pseudo_solve_many(&gram, &rhs, 1e-12);
    *y -= z * coef;
}

fn shift_invert(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    shift: f64,
    count: usize,
    deflate: Option<&DMatrix<f64>>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    let count = count.min(n);
    let block = (2 * count).max(count + 8).min(n);
    let lu = (k - m * shift).lu();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5);
    let mut prev: Vec<f64> = vec![f64::INFINITY; count];
    for _ in 0..1000 {
        let mut y = lu
            .solve(&(m * &x))
            .ok_or_else(|| Error::Factorization("shifted operator is singular".into()))?;
        if let Some(z) = deflate {
            m_project_out(&mut y, z, m);
        }
        let mut kr = y.transpose() * k * &y;
        let mut mr = y.transpose() * m * &y;
        symmetrize(&mut kr);
        symmetrize(&mut mr);
        let (vals, v) = dense_gevp(&kr, &mr)?;
        // order Ritz pairs by distance to the shift
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&i, &j| (vals[i] - shift).abs().total_cmp(&(vals[j] - shift).abs()));
        let v = DMatrix::from_columns(&order.iter().map(|&i| v.column(i)).collect::<Vec<_>>());
        x = &y * v;
        let cur: Vec<f64> = order.iter().take(count).map(|&i| vals[i]).collect();
        let converged = cur
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= 1e-14 * a.abs().max(1.0));
        prev = cur;
        if converged {
            break;
        }
    }
    let mut idx: Vec<usize> = (0..count).collect();
    idx.sort_by(|&i, &j| prev[i].total_cmp(&prev[j]));
    let vals = idx.iter().map(|&i| prev[i]).collect();
    let vecs = DMatrix::from_columns(&idx.iter().map(|&i| x.column(i)).collect::<Vec<_>>());
    Ok((vals, vecs))
}

fn build_result(
    vals: &[f64],
    vecs: &DMatrix<f64>,
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    free: Vec<usize>,
    extra_kernel: usize,
    opts: &SolveOptions,
) -> EigenResult {
    let lmax = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let threshold = opts.zero_tol * lmax;
    let mut out = EigenResult::empty(free);
    out.kernel_dim = extra_kernel;
    let mut kernel_cols = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        let x = vecs.column(i).into_owned();
        if lmax == 0.0 || v <= threshold {
            out.kernel_dim += 1;
            kernel_cols.push(x);
            continue;
        }
        let res = residual(k, m, v, &x);
        let starts_new = match out.members.last() {
            Some(cluster) => {
                let last = *cluster.last().unwrap();
                v - last > opts.gap_tol * v
            }
            None => true,
        };
        if starts_new {
            out.members.push(vec![v]);
            out.vectors.push(DMatrix::from_columns(&[x]));
            out.residuals.push(vec![res]);
        } else {
            out.members.last_mut().unwrap().push(v);
            let block = out.vectors.pop().unwrap();
            let mut cols: Vec<DVector<f64>> = block.column_iter().map(|c| c.into_owned()).collect();
            cols.push(x);
            out.vectors.push(DMatrix::from_columns(&cols));
            out.residuals.last_mut().unwrap().push(res);
        }
    }
    out.values = out
        .members
        .iter()
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    out.multiplicities = out.members.iter().map(Vec::len).collect();
    if !kernel_cols.is_empty() {
        out.kernel = DMatrix::from_columns(&kernel_cols);
    }
    out
}

pub fn residual(k: &DMatrix<f64>, m: &DMatrix<f64>, lambda: f64, x: &DVector<f64>) -> f64 {
    let r = k * x - m * x * lambda;
    r.norm() / quad_form(m, x).sqrt()
}

/// `xᵀKx / xᵀMx`.
pub fn rayleigh_quotient(k: &DMatrix<f64>, m: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let den = quad_form(m, x);
    if x.iter().all(|&v| v == 0.0) || den == 0.0 {
        return Err(Error::InvalidInput("Rayleigh quotient of the zero vector".into()));
    }
    Ok(quad_form(k, x) / den)
}

/// Dense operators of one complex level `A_ℓ : H_ℓ → H_{ℓ+1}` restricted to
/// the free DOFs of the tangential side.
///
/// Level 0: `d = G`, source weight `ν`, target weight `ε`.
/// Level 1: `d = C`, source weight `ε`, target weight `μ⁻¹`.
#[derive(Debug, Clone)]
pub struct LevelOperators {
    pub level: usize,
    pub src_free: Vec<usize>,
    pub tgt_free: Vec<usize>,
    pub d: DMatrix<f64>,
    pub m_src: DMatrix<f64>,
    pub m_tgt: DMatrix<f64>,
    /// `dᵀ M_tgt d`
    pub k: DMatrix<f64>,
}

impl LevelOperators {
    pub fn new(model: &Model, level: usize) -> Result<Self> {
        if level > 1 {
            return Err(Error::Usage(format!("operator level {level} not supported (0 or 1)")));
        }
        let side = BoundarySide::Tangential;
        let src_free = model.complex.free_dofs(level, side).to_vec();
        let tgt_free = model.complex.free_dofs(level + 1, side).to_vec();
        let c = &model.coeffs;
        let m_src = mass_matrix(&model.mesh, level, &c.mass_weight(level)?, WeightMode::Spd)?;
        let tgt_weight = c.mass_weight(level + 1)?;
        let m_tgt = mass_matrix(&model.mesh, level + 1, &tgt_weight, WeightMode::Spd)?;
        let k = stiffness_matrix(&model.mesh, &model.complex, level, &tgt_weight, WeightMode::Spd)?;
        let d = model.complex.derivative(level)?;
        Ok(LevelOperators {
            level,
            d: restrict(d, &tgt_free, &src_free),
            m_src: restrict(&m_src, &src_free, &src_free),
            m_tgt: restrict(&m_tgt, &tgt_free, &tgt_free),
            k: restrict(&k, &src_free, &src_free),
            src_free,
            tgt_free,
        })
    }

    /// `A x`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.d * x
    }

    /// `A* y = M_src⁻¹ dᵀ M_tgt y`
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = self.d.transpose() * (&self.m_tgt * y);
        Ok(cholesky(&self.m_src)?.solve(&rhs))
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<EigenResult> {
        solve_dense_pencil(&self.k, &self.m_src, self.src_free.clone(), None, opts)
    }
}

/// Which realization of the scalar Laplacian spectrum to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplaceSide {
    /// `A₀*A₀ = −ν⁻¹ div ε ∇` on vertex DOFs.
    Primal,
    /// `A₀A₀*` on edge DOFs, via dual eigenvectors of the primal pairs.
    Dual,
}

pub fn laplace_spectrum(model: &Model, side: LaplaceSide, opts: &SolveOptions) -> Result<EigenResult> {
    let ops = LevelOperators::new(model, 0)?;
    let primal = ops.solve(opts)?;
    match side {
        LaplaceSide::Primal => Ok(primal),
        LaplaceSide::Dual => dual_result(&ops, &primal),
    }
}

fn dual_result(ops: &LevelOperators, primal: &EigenResult) -> Result<EigenResult> {
    let mut out = EigenResult::empty(ops.tgt_free.clone());
    let n_pos: usize = primal.multiplicities.iter().sum();
    out.kernel_dim = ops.tgt_free.len().saturating_sub(n_pos);
    out.kernel = DMatrix::zeros(ops.tgt_free.len(), 0);
    out.values = primal.values.clone();
    out.multiplicities = primal.multiplicities.clone();
    out.members = primal.members.clone();
    for (c, block) in primal.vectors.iter().enumerate() {
        let mut cols = Vec::new();
        let mut res = Vec::new();
        for (j, x) in block.column_iter().enumerate() {
            let dual = dual_eigenvector(ops, primal.members[c][j], &x.into_owned())?;
            res.push(dual.pencil_residual);
            cols.push(dual.y);
        }
        out.vectors.push(DMatrix::from_columns(&cols));
        out.residuals.push(res);
    }
    Ok(out)
}

pub fn maxwell_spectrum(model: &Model, opts: &SolveOptions) -> Result<EigenResult> {
    let ops = LevelOperators::new(model, 1)?;
    match opts.path {
        SolverPath::Dense => ops.solve(opts),
        SolverPath::ShiftInvert { .. } => {
            let g = gradient_block(model, &ops)?;
            solve_dense_pencil(&ops.k, &ops.m_src, ops.src_free.clone(), Some(&g), opts)
        }
    }
}

/// `G` restricted to free edges × free vertices.
fn gradient_block(model: &Model, ops: &LevelOperators) -> Result<DMatrix<f64>> {
    let side = BoundarySide::Tangential;
    Ok(restrict(
        model.complex.derivative(0)?,
        &ops.src_free,
        model.complex.free_dofs(0, side),
    ))
}

/// Result of the dual map `y = λ^{-1/2} A x`.
#[derive(Debug, Clone)]
pub struct DualVector {
    pub y: DVector<f64>,
    /// `|yᵀ M_tgt y − 1|`
    pub norm_residual: f64,
    /// `‖M_tgt (A A* y − λ y)‖ / ‖y‖_{M_tgt}`
    pub pencil_residual: f64,
}

pub fn dual_eigenvector(ops: &LevelOperators, lambda: f64, x: &DVector<f64>) -> Result<DualVector> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dual eigenvector needs a positive eigenvalue, got {lambda:e}"
        )));
    }
    let y = ops.apply(x) / lambda.sqrt();
    let norm2 = quad_form(&ops.m_tgt, &y);
    let aay = ops.apply(&ops.adjoint(&y)?);
    let r = &ops.m_tgt * (aay - &y * lambda);
    Ok(DualVector {
        norm_residual: (norm2 - 1.0).abs(),
        pencil_residual: r.norm() / norm2.sqrt(),
        y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Laplace,
    Maxwell,
    Both,
}

/// Positive spectrum of the generalized vector Laplacian as the union of
/// `ρ·σ(A₀*A₀)` and `σ(A₁*A₁)`.
#[derive(Debug, Clone)]
pub struct VectorLaplacianSpectrum {
    pub rho: f64,
    pub values: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub branches: Vec<Branch>,
    pub laplace: EigenResult,
    pub maxwell: EigenResult,
}

impl VectorLaplacianSpectrum {
    pub fn report(&self) -> SpectrumReport {
        SpectrumReport {
            problem: "vector-laplacian".into(),
            values: self.values.clone(),
            multiplicities: self.multiplicities.clone(),
            kernel_dim: self.maxwell.kernel_dim,
            residual_max: self.laplace.residual_max().max(self.maxwell.residual_max()),
            branches: Some(self.branches.clone()),
        }
    }
}

pub fn vector_laplacian_spectrum(model: &Model, rho: f64, opts: &SolveOptions) -> Result<VectorLaplacianSpectrum> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let laplace = laplace_spectrum(model, LaplaceSide::Primal, opts)?;
    let maxwell = maxwell_spectrum(model, opts)?;
    let (values, multiplicities, branches) = merge_branches(rho, &laplace, &maxwell, opts.gap_tol);
    Ok(VectorLaplacianSpectrum {
        rho,
        values,
        multiplicities,
        branches,
        laplace,
        maxwell,
    })
}

/// Sorted union of `ρ·laplace` and `maxwell`; values within the gap
/// tolerance merge into one entry with summed multiplicity (the smaller
/// value is kept).
pub fn merge_branches(
    rho: f64,
    laplace: &EigenResult,
    maxwell: &EigenResult,
    gap_tol: f64,
) -> (Vec<f64>, Vec<usize>, Vec<Branch>) {
    let mut all: Vec<(f64, usize, Branch)> = laplace
        .values
        .iter()
        .zip(&laplace.multiplicities)
        .map(|(&v, &d)| (rho * v, d, Branch::Laplace))
        .chain(
            maxwell
                .values
                .iter()
                .zip(&maxwell.multiplicities)
                .map(|(&v, &d)| (v, d, Branch::Maxwell)),
        )
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.2 as u8).cmp(&(b.2 as u8))));
    let mut values: Vec<f64> = Vec::new();
    let mut mult: Vec<usize> = Vec::new();
    let mut branches: Vec<Branch> = Vec::new();
    for (v, d, b) in all {
        if let (Some(&last), Some(lb)) = (values.last(), branches.last_mut()) {
            if v - last <= gap_tol * v && *lb != b {
                *mult.last_mut().unwrap() += d;
                *lb = Branch::Both;
                continue;
            }
        }
        values.push(v);
        mult.push(d);
        branches.push(b);
    }
    (values, mult, branches)
}
