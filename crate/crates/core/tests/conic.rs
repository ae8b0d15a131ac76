use nalgebra::{DMatrix, Vector3};
use nrsfm::conic::{
    ir, solve, ConicProgram, EntryRef, LinearFunctional, SolveStatus, SolverSettings, VarBlock,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn settings() -> SolverSettings {
    SolverSettings::default()
}

fn free(i: usize, c: f64) -> LinearFunctional {
    LinearFunctional::scalar(VarBlock::Free, i, c)
}

fn nonneg(i: usize, c: f64) -> LinearFunctional {
    LinearFunctional::scalar(VarBlock::NonNeg, i, c)
}

#[test]
fn trace_with_pinned_corner() {
    let mut p = ConicProgram::new();
    let b = p.add_psd_block(2, "Y");
    let blk = VarBlock::Psd(b);
    let mut tr = LinearFunctional::new(blk);
    tr.add(0, 0, 1.0).add(1, 1, 1.0);
    p.add_objective(tr);
    p.add_constraint(vec![LinearFunctional::entry(blk, 0, 0, 1.0)], 1.0, "corner");
    let s = solve(&p, &settings()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective - 1.0).abs() < 1e-6);
    let y = &s.primal.psd[0];
    assert!((y[(0, 0)] - 1.0).abs() < 1e-6 && y[(1, 1)].abs() < 1e-6 && y[(0, 1)].abs() < 1e-6);
}

#[test]
fn bounded_free_variable() {
    // min -x  s.t. x + s = 1, s >= 0
    let mut p = ConicProgram::new();
    let x = p.add_free(1);
    let s = p.add_nonneg(1);
    p.add_objective(free(x, -1.0));
    p.add_constraint(vec![free(x, 1.0), nonneg(s, 1.0)], 1.0, "cap");
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal.free[0] - 1.0).abs() < 1e-6);
}

#[test]
fn abs_epigraph_reaches_zero() {
    let mut p = ConicProgram::new();
    let x = p.add_free(1);
    let f = [free(x, 1.0)];
    let g = [LinearFunctional::new(VarBlock::Free).with_constant(3.0)];
    let h = p.add_abs_epigraph(&f, &g, 1.0, "abs");
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.primal.nonneg[h.index].abs() < 1e-6);
    assert!((sol.primal.free[x] - 3.0).abs() < 1e-5);
}

#[test]
fn abs_epigraph_random_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let mut p = ConicProgram::new();
        let x = p.add_free(2);
        let a: [f64; 2] = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let fixed: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let target = rng.random_range(-3.0..3.0);
        for k in 0..2 {
            p.add_constraint(vec![free(x + k, 1.0)], fixed[k], format!("fix{k}"));
        }
        let mut f = LinearFunctional::new(VarBlock::Free);
        f.add(x, x, a[0]).add(x + 1, x + 1, a[1]);
        let g = [LinearFunctional::new(VarBlock::Free).with_constant(target)];
        let h = p.add_abs_epigraph(&[f], &g, 2.0, "abs");
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let expect = (a[0] * fixed[0] + a[1] * fixed[1] - target).abs();
        assert!((sol.primal.nonneg[h.index] - expect).abs() < 1e-6 * (1.0 + expect));
    }
}

#[test]
fn inverse_epigraph_fixed_values() {
    for (xv, tv) in [(2.0, 0.5), (1.0, 1.0)] {
        let mut p = ConicProgram::new();
        let x = p.add_nonneg(1);
        p.add_constraint(vec![nonneg(x, 1.0)], xv, "fix");
        let h = p.add_inverse_epigraph(EntryRef::new(VarBlock::NonNeg, x, x), 1.0, "inv");
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal.psd[h.block][(0, 0)] - tv).abs() < 1e-6);
    }
}

#[test]
fn inverse_epigraph_calculus_toy() {
    // min x + 1/x  -> x = 1, value 2
    let mut p = ConicProgram::new();
    let x = p.add_nonneg(1);
    p.add_objective(nonneg(x, 1.0));
    let h = p.add_inverse_epigraph(EntryRef::new(VarBlock::NonNeg, x, x), 1.0, "inv");
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 2.0).abs() < 1e-6);
    assert!((sol.primal.nonneg[x] - 1.0).abs() < 1e-3);
    let t = sol.primal.psd[h.block][(0, 0)];
    assert!(t * sol.primal.nonneg[x] >= 1.0 - 10.0 * settings().tol);
}

#[test]
fn square_dominance_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ys = vec![2.0, 0.0];
    ys.extend((0..4).map(|_| rng.random_range(-3.0..3.0)));
    for y in ys {
        let mut p = ConicProgram::new();
        let v = p.add_free(1);
        let z = p.add_nonneg(1);
        p.add_constraint(vec![free(v, 1.0)], y, "fix");
        p.add_objective(nonneg(z, 1.0));
        p.add_square_dominance(EntryRef::new(VarBlock::Free, v, v), EntryRef::new(VarBlock::NonNeg, z, z), "dom");
        let tight = SolverSettings { tol: 1e-10, ..settings() };
        let sol = solve(&p, &tight).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal.nonneg[z] - y * y).abs() < 1e-8, "y={y} z={}", sol.primal.nonneg[z]);
    }
}

#[test]
fn second_order_cone_projection() {
    // min t s.t. (t, x) in SOC, x = (3, 4)
    let mut p = ConicProgram::new();
    let b = p.add_soc_block(3, "q");
    let blk = VarBlock::Soc(b);
    p.add_objective(LinearFunctional::scalar(blk, 0, 1.0));
    p.add_constraint(vec![LinearFunctional::scalar(blk, 1, 1.0)], 3.0, "x");
    p.add_constraint(vec![LinearFunctional::scalar(blk, 2, 1.0)], 4.0, "y");
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 5.0).abs() < 1e-6);
}

#[test]
fn detects_primal_infeasibility() {
    let mut p = ConicProgram::new();
    let x = p.add_nonneg(1);
    p.add_objective(nonneg(x, 1.0));
    p.add_constraint(vec![nonneg(x, 1.0)], -1.0, "neg");
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn detects_unboundedness() {
    let mut p = ConicProgram::new();
    let x = p.add_nonneg(2);
    p.add_objective(nonneg(x, -1.0));
    p.add_constraint(vec![nonneg(x, 1.0), nonneg(x + 1, -1.0)], 0.0, "eq");
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Unbounded);
}

/// Trace-minimizing Gram matrix with prescribed squared distances.
fn biswas_ye(points: &[Vector3<f64>]) -> ConicProgram {
    let n = points.len();
    let mut p = ConicProgram::new();
    let blk = VarBlock::Psd(p.add_psd_block(n, "Y"));
    let mut tr = LinearFunctional::new(blk);
    for i in 0..n {
        tr.add(i, i, 1.0);
    }
    p.add_objective(tr);
    for i in 0..n {
        for k in i + 1..n {
            let mut f = LinearFunctional::new(blk);
            f.add(i, i, 1.0).add(k, k, 1.0).add(i, k, -2.0);
            p.add_constraint(vec![f], (points[i] - points[k]).norm_squared(), format!("d{i}-{k}"));
        }
    }
    p
}

fn centered_gram(points: &[Vector3<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let c: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / n as f64;
    DMatrix::from_fn(n, n, |a, b| (points[a] - c).dot(&(points[b] - c)))
}

fn random_points(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

#[test]
fn biswas_ye_recovers_centered_gram() {
    for (n, seed) in [(4, 1), (5, 2), (5, 9)] {
        let pts = random_points(n, seed);
        let prog = biswas_ye(&pts);
        assert_eq!(prog.psd_blocks.len(), 1);
        assert_eq!(prog.num_constraints(), n * (n - 1) / 2);
        let sol = solve(&prog, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.residuals.max() <= 1e-7);
        let g = centered_gram(&pts);
        let err = (&sol.primal.psd[0] - &g).norm() / g.norm();
        assert!(err < 1e-6, "n={n} err={err}");
    }
}

#[test]
fn weak_duality_and_cone_margins_at_optimum() {
    let pts = random_points(5, 4);
    let prog = biswas_ye(&pts);
    let tol = settings().tol;
    let sol = solve(&prog, &settings()).unwrap();
    assert!(sol.objective >= sol.dual_objective - tol * (1.0 + sol.objective.abs()));
    assert!(sol.min_eigenvalues.iter().all(|&e| e >= -tol));
    assert!(sol.dual_slack.min_cone_margin() >= -tol);
    assert!(sol.primal.max_equality_violation(&prog) < 1e-6);
}

#[test]
fn solve_is_deterministic() {
    let prog = biswas_ye(&random_points(4, 5));
    let a = solve(&prog, &settings()).unwrap();
    let b = solve(&prog, &settings()).unwrap();
    assert_eq!(a.primal, b.primal);
    assert_eq!(a.duals, b.duals);
}

#[test]
fn export_round_trip_and_counts() {
    let empty = ConicProgram::new();
    let text = ir::program_to_string(&empty);
    assert!(text.starts_with(ir::PROGRAM_HEADER));
    assert_eq!(ir::parse_program(&text).unwrap(), empty);

    let mut prog = biswas_ye(&random_points(5, 6));
    let x = prog.add_free(1);
    prog.add_abs_epigraph(&[free(x, 0.1)], &[LinearFunctional::new(VarBlock::Free).with_constant(1e-300)], 3.0, "odd label");
    prog.add_soc_block(3, "");
    let text = ir::program_to_string(&prog);
    let back = ir::parse_program(&text).unwrap();
    assert_eq!(back, prog);
    assert_eq!(text.matches("\nconstraint ").count(), prog.num_constraints());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ir");
    ir::export_program(&prog, &path).unwrap();
    assert_eq!(ir::import_program(&path).unwrap(), prog);
}

#[test]
fn solution_round_trip() {
    let prog = biswas_ye(&random_points(4, 8));
    let sol = solve(&prog, &settings()).unwrap();
    let text = ir::solution_to_string(&sol);
    let back = ir::parse_solution(&text, &prog).unwrap();
    assert_eq!(back.status, sol.status);
    assert_eq!(back.primal, sol.primal);
    assert_eq!(back.duals, sol.duals);
    assert_eq!(back.objective, sol.objective);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let bad = format!("{}\nversion 1\npsd 1\nx\n", ir::PROGRAM_HEADER);
    match ir::parse_program(&bad) {
        Err(nrsfm::Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("unexpected {other:?}"),
    }
    assert!(ir::parse_program("garbage").is_err());
}
