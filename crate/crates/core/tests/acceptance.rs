//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints its `criterion N (...): PASS|FAIL` line; exits nonzero
//! if any criterion fails.

use std::f64::consts::PI;

use derham_shape::assembly::{mass_matrix, WeightMode};
use derham_shape::eigsolve::{merge_branches, LevelOperators};
use derham_shape::hodge::edge_mass;
use derham_shape::linalg::{quad_form, to_dense};
use derham_shape::shapederiv::{slope, spectrum_discrepancy};
use derham_shape::*;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    n: usize,
    name: &'static str,
    ok: bool,
    detail: String,
}

fn report(n: usize, name: &'static str, ok: bool, detail: String) -> Outcome {
    Outcome { n, name, ok, detail }
}

fn cube(n: usize, sel: &str, coeff_seed: Option<u64>) -> Model {
    let mesh = generate_cube_mesh(n).unwrap();
    let p = GammaSelector::parse(sel).unwrap().apply(&mesh);
    let c = match coeff_seed {
        Some(s) => CoefficientSet::random(mesh.n_tets(), s),
        None => CoefficientSet::identity(mesh.n_tets()),
    };
    Model::new(mesh, p, c).unwrap()
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn criterion_1_complex_exactness() -> Outcome {
    let mut ok = true;
    let mut nnz = Vec::new();
    for n in [1, 2, 4] {
        let mesh = generate_cube_mesh(n).unwrap();
        let cx = DeRhamComplex::build(&mesh, &BoundaryPartition::none(&mesh));
        let g = cx.derivative_matrix(0).unwrap();
        let c = cx.derivative_matrix(1).unwrap();
        let d = cx.derivative_matrix(2).unwrap();
        let cg = c * g;
        let dc = d * c;
        let zero = |m: &nalgebra_sparse::CsrMatrix<i32>| m.values().iter().all(|&v| v == 0);
        ok &= zero(&cg) && zero(&dc);
        nnz.push(format!(
            "n={n}: max|CG|={} max|DC|={}",
            cg.values().iter().map(|v| v.abs()).max().unwrap_or(0),
            dc.values().iter().map(|v| v.abs()).max().unwrap_or(0)
        ));
    }
    report(1, "complex exactness", ok, nnz.join(", "))
}

fn criterion_2_analytic_spectra() -> Outcome {
    let opts = SolveOptions::default();
    let exact = 3.0 * PI * PI;
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for n in [2, 4, 6] {
        let r = laplace_spectrum(&cube(n, "all", None), LaplaceSide::Primal, &opts).unwrap();
        errs.push((r.values[0] - exact).abs() / exact);
        hs.push(1.0 / n as f64);
    }
    let order = slope(&hs.iter().map(|h| h.ln()).collect::<Vec<_>>(), &errs.iter().map(|e| e.ln()).collect::<Vec<_>>());
    let m = maxwell_spectrum(&cube(4, "all", None), &opts).unwrap();
    let maxwell_err = (m.values[0] - 2.0 * PI * PI).abs() / (2.0 * PI * PI);
    let checks = [errs[1] <= 0.10, errs[2] <= 0.04, order >= 1.8, maxwell_err <= 0.10];
    report(
        2,
        "analytic spectra",
        checks.iter().all(|&c| c),
        format!(
            "laplace rel err n=4 {:.4} (<= 0.10: {}), n=6 {:.4} (<= 0.04: {}), order {:.3} (>= 1.8: {}), maxwell n=4 rel err {:.4} (<= 0.10: {})",
            errs[1], checks[0], errs[2], checks[1], order, checks[2], maxwell_err, checks[3]
        ),
    )
}

fn criterion_3_unitary_equivalence() -> Outcome {
    let opts = SolveOptions::default();
    let base = cube(3, "x=0|y=1|z=0", Some(31));
    let mut spec_worst: f64 = 0.0;
    let mut mass_worst: f64 = 0.0;
    for seed in 0..5 {
        let psi = VertexField::random(&base.mesh, 100 + seed);
        let jmax = psi
            .jacobians(&base.mesh)
            .unwrap()
            .iter()
            .map(|j| j.singular_values().max())
            .fold(0.0, f64::max);
        let map = make_map(&base.mesh, &psi, 0.4 / jmax).unwrap();
        let transformed = base.with_coeffs(transform_coefficients(&base.coeffs, &map).unwrap()).unwrap();
        let deformed = base.with_mesh(map.deformed().clone()).unwrap();
        for level in [0, 1] {
            let a = LevelOperators::new(&deformed, level).unwrap().solve(&opts).unwrap();
            let b = LevelOperators::new(&transformed, level).unwrap().solve(&opts).unwrap();
            assert!(a.positive_values().len() >= 10);
            spec_worst = spec_worst.max(spectrum_discrepancy(&a, &b, 10));
        }
        let w = base.coeffs.mass_weight(1).unwrap();
        let wt = transformed.coeffs.mass_weight(1).unwrap();
        let md = to_dense(&mass_matrix(&deformed.mesh, 1, &w, WeightMode::Spd).unwrap());
        let mr = to_dense(&mass_matrix(&base.mesh, 1, &wt, WeightMode::Spd).unwrap());
        mass_worst = mass_worst.max((&md - &mr).amax() / mr.amax());
    }
    report(
        3,
        "unitary equivalence",
        spec_worst <= 1e-10 && mass_worst <= 1e-12,
        format!("max eigenvalue rel diff {spec_worst:.2e} (<= 1e-10), max level-1 mass rel diff {mass_worst:.2e} (<= 1e-12)"),
    )
}

fn criterion_4_hadamard_vs_finite_differences() -> Outcome {
    let model = cube(3, "all", None);
    let opts = ShapeOptions::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, psi) in [
        ("dilate", VertexField::dilate(&model.mesh)),
        ("shear", VertexField::shear(&model.mesh)),
        ("random", VertexField::random(&model.mesh, 42)),
    ] {
        for problem in [Problem::Laplace, Problem::LaplaceDual, Problem::Maxwell] {
            let r = fd_check(&model, problem, 0, &psi, &[1e-2, 5e-3], &opts).unwrap();
            let s = r.fd_summary.unwrap();
            let good = (3.5..=4.5).contains(&s.ratios[0]) && s.extrapolated_rel_err <= 1e-6;
            ok &= good;
            lines.push(format!(
                "{problem}/{name}: ratio {:.4} extrapolated {:.1e}",
                s.ratios[0], s.extrapolated_rel_err
            ));
        }
    }
    report(4, "hadamard vs finite differences", ok, lines.join("; "))
}

fn criterion_5_structural_identities() -> Outcome {
    let opts = ShapeOptions::default();
    let mut ok = true;
    let mut notes = Vec::new();

    let model = cube(3, "all", None);
    let dil = VertexField::dilate(&model.mesh);
    let mut dil_worst: f64 = 0.0;
    for problem in [Problem::Laplace, Problem::LaplaceDual, Problem::Maxwell] {
        let r = shape_derivative(&model, problem, 0, &dil, &opts).unwrap();
        dil_worst = dil_worst.max((r.dlambda / r.lambda + 2.0).abs());
    }
    ok &= dil_worst <= 1e-10;
    notes.push(format!("dilation |dλ/λ + 2| {dil_worst:.1e}"));

    let mixed = cube(3, "x=0|z=1", Some(5));
    let tr = VertexField::translate(&mixed.mesh, Vector3::new(0.7, -0.2, 1.3));
    let mut tr_max: f64 = 0.0;
    for problem in [Problem::Laplace, Problem::LaplaceDual, Problem::Maxwell] {
        tr_max = tr_max.max(shape_derivative(&mixed, problem, 0, &tr, &opts).unwrap().dlambda.abs());
    }
    ok &= tr_max == 0.0;
    notes.push(format!("translation max |dλ| {tr_max:e}"));

    let mut hf_worst: f64 = 0.0;
    let mut pd_worst: f64 = 0.0;
    for draw in 0..20u64 {
        let md = cube(2, "y=0|z=1", Some(200 + draw));
        let psi = VertexField::random(&md.mesh, 300 + draw);
        for problem in [Problem::Laplace, Problem::LaplaceDual, Problem::Maxwell] {
            let hf = hellmann_feynman(&md, problem, 0, &psi, &opts.solve).unwrap();
            hf_worst = hf_worst.max(hf.deviation / hf.lambda);
        }
        let a = shape_derivative(&md, Problem::Laplace, 0, &psi, &opts).unwrap();
        let b = shape_derivative(&md, Problem::LaplaceDual, 0, &psi, &opts).unwrap();
        pd_worst = pd_worst.max((a.dlambda - b.dlambda).abs() / a.dlambda.abs());
    }
    ok &= hf_worst <= 1e-12 && pd_worst <= 1e-9;
    notes.push(format!("Hellmann-Feynman deviation/λ {hf_worst:.1e}, primal/dual rel diff {pd_worst:.1e}"));
    report(5, "structural identities", ok, notes.join(", "))
}

fn criterion_6_operator_invariants() -> Outcome {
    let opts = SolveOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ortho: f64 = 0.0;
    let mut rq: f64 = 0.0;
    let mut fp_violations = 0;
    for (sel, seed) in [("all", None), ("none", Some(61)), ("x=0|y=1", Some(62))] {
        let md = cube(3, sel, seed);
        for level in [0, 1] {
            let ops = LevelOperators::new(&md, level).unwrap();
            let r = ops.solve(&opts).unwrap();
            let mut ys = Vec::new();
            for (c, block) in r.vectors.iter().enumerate() {
                for (j, x) in block.column_iter().enumerate() {
                    let x = x.into_owned();
                    let lambda = r.members[c][j];
                    let q = rayleigh_quotient(&ops.k, &ops.m_src, &x).unwrap();
                    rq = rq.max((q - lambda).abs() / lambda);
                    ys.push(dual_eigenvector(&ops, lambda, &x).unwrap().y);
                }
            }
            let y = DMatrix::from_columns(&ys);
            let gram = y.transpose() * &ops.m_tgt * &y;
            ortho = ortho.max((gram - DMatrix::identity(ys.len(), ys.len())).amax());

            // Friedrichs-Poincaré on the M-orthogonal complement of the kernel
            let c_a = r.values[0].powf(-0.5);
            let z = &r.kernel;
            for _ in 0..100 {
                let mut x = random_vec(ops.m_src.nrows(), &mut rng);
                if z.ncols() > 0 {
                    let coef = z.transpose() * (&ops.m_src * &x);
                    x -= z * coef;
                }
                let lhs = quad_form(&ops.m_src, &x).sqrt();
                let rhs = c_a * quad_form(&ops.m_tgt, &ops.apply(&x)).sqrt();
                if lhs > rhs * (1.0 + 1e-10) {
                    fp_violations += 1;
                }
            }
        }
    }
    report(
        6,
        "operator invariants",
        ortho <= 1e-10 && rq <= 1e-9 && fp_violations == 0,
        format!(
            "dual orthonormality defect {ortho:.1e} (<= 1e-10), Rayleigh rel err {rq:.1e} (<= 1e-9), Friedrichs-Poincaré violations {fp_violations}/600"
        ),
    )
}

fn criterion_7_hodge() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ortho: f64 = 0.0;
    let mut pyth: f64 = 0.0;
    let mut coh = Vec::new();
    for (sel, seed) in [("all", None), ("none", Some(71)), ("z=0|x=1", Some(72))] {
        let md = cube(3, sel, seed);
        let m = edge_mass(&md).unwrap();
        for _ in 0..5 {
            let x = random_vec(m.nrows(), &mut rng);
            let s = helmholtz_decompose(&md, &x).unwrap();
            ortho = ortho.max(s.max_orthogonality(&m));
            pyth = pyth.max(s.pythagoras_defect());
        }
    }
    for sel in ["none", "all"] {
        coh.push(cohomology_dim(&cube(2, sel, None).complex));
    }
    let mut kernel_ok = true;
    let mut kernels = Vec::new();
    for n in [2, 3] {
        for sel in ["all", "z=0"] {
            let md = cube(n, sel, Some(73));
            let r = maxwell_spectrum(&md, &SolveOptions::default()).unwrap();
            let free_v = md.complex.free_dofs(0, BoundarySide::Tangential).len();
            let expect = free_v + cohomology_dim(&md.complex);
            kernel_ok &= r.kernel_dim == expect;
            kernels.push(format!("n={n} {sel}: {}/{}", r.kernel_dim, expect));
        }
    }
    report(
        7,
        "hodge decomposition",
        ortho <= 1e-10 && pyth <= 1e-9 && coh.iter().all(|&c| c == 0) && kernel_ok,
        format!(
            "orthogonality {ortho:.1e}, pythagoras {pyth:.1e}, cohomology (none, all) {coh:?}, maxwell kernel vs free vertices + cohomology {}",
            kernels.join(", ")
        ),
    )
}

fn criterion_8_vector_laplacian_union() -> Outcome {
    let opts = SolveOptions::default();
    let md = cube(3, "all", None);
    let v = vector_laplacian_spectrum(&md, 1.0, &opts).unwrap();
    // every merged value is a branch value, and multiplicities add up
    let branch_vals: Vec<f64> = v.laplace.values.iter().chain(&v.maxwell.values).copied().collect();
    let total: usize = v.laplace.multiplicities.iter().chain(&v.maxwell.multiplicities).sum();
    let sorted = v.values.windows(2).all(|w| w[0] < w[1]);
    let exact_union = sorted
        && v.values.iter().all(|x| branch_vals.contains(x))
        && v.multiplicities.iter().sum::<usize>() == total;

    let n = md.mesh.n_tets();
    let mut c = CoefficientSet::identity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for t in 0..n {
        c.eps[t] *= 1.0 + 0.1 * rng.random::<f64>();
        c.mu[t] *= 1.0 + 0.1 * rng.random::<f64>();
    }
    let perturbed = md.with_coeffs(c).unwrap();
    let pv = vector_laplacian_spectrum(&perturbed, 1.0, &opts).unwrap();
    let l = laplace_spectrum(&perturbed, LaplaceSide::Primal, &opts).unwrap();
    let m = maxwell_spectrum(&perturbed, &opts).unwrap();
    let (values, mult, _) = merge_branches(1.0, &l, &m, opts.gap_tol);
    let resolve = values == pv.values && mult == pv.multiplicities;
    report(
        8,
        "vector laplacian union",
        exact_union && resolve,
        format!(
            "merged spectrum is the union: {exact_union} ({} values, {total} with multiplicity), perturbed merged == branch re-solve: {resolve}",
            v.values.len()
        ),
    )
}

fn main() {
    let criteria: [(usize, &'static str, fn() -> Outcome); 8] = [
        (1, "complex exactness", criterion_1_complex_exactness),
        (2, "analytic spectra", criterion_2_analytic_spectra),
        (3, "unitary equivalence", criterion_3_unitary_equivalence),
        (4, "hadamard vs finite differences", criterion_4_hadamard_vs_finite_differences),
        (5, "structural identities", criterion_5_structural_identities),
        (6, "operator invariants", criterion_6_operator_invariants),
        (7, "hodge decomposition", criterion_7_hodge),
        (8, "vector laplacian union", criterion_8_vector_laplacian_union),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        // a panic inside a criterion counts as a failure of that criterion only
        let out = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            report(n, name, false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {} ({}): {} [{}]",
            out.n,
            out.name,
            if out.ok { "PASS" } else { "FAIL" },
            out.detail
        );
        failed += usize::from(!out.ok);
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
