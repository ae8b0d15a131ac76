//! End-to-end acceptance suite. Slow: run with
//! `cargo test --release -p nrsfm --test acceptance -- --ignored --nocapture`.
//! `NRSFM_CRITERIA=1,4,10` restricts the run to the listed criteria.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nrsfm::conic::{solve, ConicProgram, LinearFunctional, SolveStatus, SolverSettings, VarBlock};
use nrsfm::eval::{align_scale, evaluate, rms_med, scale_clouds};
use nrsfm::geometry::{area_quartic_coeffs, area_sq, PointCloud};
use nrsfm::graph::{build_graph, E3Mode, LiftIndexMaps, SimplicialGraph};
use nrsfm::lifting::{depth_lift_vector, g_e_dsl, g_e_pp, outer, point_lift_vector};
use nrsfm::reconstruct::{
    build_program, extract_points, ground_truth_point, Completion, GroundTruthLift, Method, Reconstruction,
    ReconstructionConfig,
};
use nrsfm::synth::{
    area_jacobian, area_residuals, generate_equiareal, generate_isometric, lemma1_sample, numeric_jacobian, FoldMode,
    GeneratorConfig, Lemma1Config, SyntheticScene,
};

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn selected(id: usize) -> bool {
    match std::env::var("NRSFM_CRITERIA") {
        Ok(s) if !s.trim().is_empty() => s.split(',').any(|t| t.trim().parse::<usize>().ok() == Some(id)),
        _ => true,
    }
}

fn run(id: usize, budget_s: u64, f: impl FnOnce() -> (bool, String)) -> Option<Outcome> {
    if !selected(id) {
        return None;
    }
    let t = Instant::now();
    let (pass, detail) = f();
    let elapsed = t.elapsed();
    let budget = Duration::from_secs(budget_s);
    let o = Outcome { id, pass: pass && elapsed <= budget, detail, elapsed, budget };
    println!(
        "criterion {:2}: {} {} [{:.1}s of {}s]",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        o.elapsed.as_secs_f64(),
        o.budget.as_secs()
    );
    Some(o)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn solve_scene(scene: &SyntheticScene, cfg: &ReconstructionConfig) -> Reconstruction {
    let (prog, lay) = build_program(&scene.observations, &scene.graph, cfg).expect("program");
    let sol = solve(&prog, &cfg.solver).expect("solve");
    extract_points(&sol, &lay, &scene.observations, "embedded", &prog).expect("extract")
}

fn relative_rms(rec: &Reconstruction, scene: &SyntheticScene) -> f64 {
    evaluate(&rec.clouds, &scene.gt_clouds, Some(&scene.visibility), None).unwrap().relative_rms()
}

fn random_cloud(rng: &mut ChaCha8Rng, m: usize) -> PointCloud {
    (0..m)
        .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(1.5..4.0)))
        .collect()
}

fn projected(c: &[Vector3<f64>]) -> Vec<Vector2<f64>> {
    c.iter().map(|p| Vector2::new(p.x / p.z, p.y / p.z)).collect()
}

fn min_angle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let ang = |p: &Vector3<f64>, q: &Vector3<f64>, r: &Vector3<f64>| (q - p).angle(&(r - p));
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b))
}

/// Lifted squared areas on rank-1 lifts against the cross-product oracle.
fn criterion_1() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_t, mut worst_u, mut configs, mut tris) = (0.0f64, 0.0f64, 0, 0);
    while configs < 10_000 {
        let m = rng.random_range(3..7);
        let cloud = random_cloud(&mut rng, m);
        let Ok(graph) = build_graph(&projected(&cloud), 3, E3Mode::All) else { continue };
        if graph.e3.is_empty() {
            continue;
        }
        let maps = LiftIndexMaps::new(&graph).unwrap();
        let depths: Vec<f64> = cloud.iter().map(|p| p.norm()).collect();
        let lines: Vec<Vector3<f64>> = cloud.iter().map(|p| p / p.norm()).collect();
        let t = outer(&depth_lift_vector(&depths, &maps));
        let u = outer(&point_lift_vector(&cloud, &maps));
        for &(j, q, r) in &graph.e3 {
            if min_angle(&cloud[j], &cloud[q], &cloud[r]) < 10f64.to_radians() {
                continue;
            }
            let oracle = (cloud[q] - cloud[j]).cross(&(cloud[r] - cloud[j])).norm_squared() / 4.0;
            let coeffs = area_quartic_coeffs(&lines[j], &lines[q], &lines[r]);
            let ft = g_e_dsl(VarBlock::Psd(0), j, q, r, &coeffs, &maps).unwrap().eval_matrix(&t);
            let fu = g_e_pp(VarBlock::Psd(0), j, q, r, &maps).unwrap().eval_matrix(&u);
            worst_t = worst_t.max((ft - oracle).abs() / oracle);
            worst_u = worst_u.max((fu - oracle).abs() / oracle);
            tris += 1;
        }
        configs += 1;
    }
    let pass = worst_t <= 1e-10 && worst_u <= 1e-10;
    (pass, format!("area lifts vs oracle over {configs} configs / {tris} triangles (min angle >= 10 deg): depth {worst_t:.1e}, point {worst_u:.1e} (<= 1e-10)"))
}

fn criterion_2() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let c = random_cloud(&mut rng, 3);
        let d: Vec<f64> = c.iter().map(|p| p.norm()).collect();
        let l: Vec<Vector3<f64>> = c.iter().map(|p| p / p.norm()).collect();
        let g = area_quartic_coeffs(&l[0], &l[1], &l[2]);
        let oracle = area_sq(&c[0], &c[1], &c[2]);
        worst = worst.max((g.eval(d[0], d[1], d[2]) - oracle).abs() / oracle);
    }
    (worst <= 1e-10, format!("quartic vs area_sq over 10^4 draws: worst relative {worst:.1e} (<= 1e-10)"))
}

fn criterion_3() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let pts: Vec<Vector3<f64>> = (0..5)
        .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let n = pts.len();
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
            p.add_constraint(vec![f], (pts[i] - pts[k]).norm_squared(), format!("d{i}-{k}"));
        }
    }
    let sol = solve(&p, &SolverSettings::default()).unwrap();
    let c: Vector3<f64> = pts.iter().sum::<Vector3<f64>>() / n as f64;
    let g = DMatrix::from_fn(n, n, |a, b| (pts[a] - c).dot(&(pts[b] - c)));
    let err = (&sol.primal.psd[0] - &g).norm() / g.norm();
    let res = sol.residuals.max();
    let pass = sol.status == SolveStatus::Optimal && err <= 1e-6 && res <= 1e-7;
    (pass, format!("complete-EDM Gram recovery: {:?}, Frobenius {err:.1e} (<= 1e-6), KKT {res:.1e} (<= 1e-7)", sol.status))
}

fn criterion_4() -> (bool, String) {
    let gcfg = GeneratorConfig {
        m_a: 3,
        m_b: 3,
        n: 3,
        knn: 3,
        fold_mode: FoldMode::GraphAligned,
        seed: 4,
        ..Default::default()
    };
    let scene = generate_isometric(&gcfg, None).unwrap();
    let s = 1.0 / scene.gt_geodesics.iter().sum::<f64>().sqrt();
    let clouds = scale_clouds(&scene.gt_clouds, s);
    let geo: Vec<f64> = scene.gt_geodesics.iter().map(|g| g * s * s).collect();
    let areas: Vec<f64> = scene.gt_areas.iter().map(|a| a * s.powi(4)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for method in Method::ALL {
        let t = Instant::now();
        let cfg = ReconstructionConfig { knn: 3, ..ReconstructionConfig::new(method) };
        let (prog, lay) = build_program(&scene.observations, &scene.graph, &cfg).unwrap();
        let gt = ground_truth_point(&prog, &lay, &GroundTruthLift { clouds: &clouds, geodesics: &geo, areas: &areas })
            .unwrap();
        let viol = gt.max_equality_violation(&prog).max(-gt.min_cone_margin());
        let sol = solve(&prog, &cfg.solver).unwrap();
        let gt_obj = gt.objective(&prog);
        let slack = cfg.solver.tol * (1.0 + sol.objective.abs());
        let ok = viol <= 1e-8 && sol.status == SolveStatus::Optimal && gt_obj >= sol.objective - slack
            && t.elapsed() <= Duration::from_secs(120);
        pass &= ok;
        parts.push(format!("{method} viol {viol:.0e} gt {gt_obj:.4} >= opt {:.4}", sol.objective));
    }
    (pass, format!("GT lift feasible (<= 1e-8) and above optimum: {}", parts.join("; ")))
}

fn iso_16(seed: u64) -> SyntheticScene {
    let gcfg = GeneratorConfig { m_a: 4, m_b: 4, n: 4, knn: 4, seed, ..Default::default() };
    generate_isometric(&gcfg, None).unwrap()
}

const SEEDS_5: u64 = 5;

fn criterion_5() -> (bool, String) {
    let scenes: Vec<SyntheticScene> = (0..SEEDS_5).map(iso_16).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (method, bound) in [(Method::SnrDsl, 0.02), (Method::SnrPp, 0.02), (Method::QnrDsl, 0.03), (Method::QnrPp, 0.03)] {
        let cfg = ReconstructionConfig { knn: 4, lambda_i: 100.0, ..ReconstructionConfig::new(method) };
        let r: Vec<f64> = scenes.iter().map(|s| relative_rms(&solve_scene(s, &cfg), s)).collect();
        let m = mean(&r);
        pass &= m <= bound;
        parts.push(format!("{method} {:.2}% (<= {:.0}%)", 100.0 * m, 100.0 * bound));
    }
    (pass, format!("noiseless 4x4 grid, mean RMS/diameter over {SEEDS_5} seeds: {}", parts.join(", ")))
}

fn criterion_6() -> (bool, String) {
    let levels = [0.0, 1.0, 2.0];
    let mut per_level = vec![Vec::new(); levels.len()];
    for seed in 0..10 {
        for (k, &x) in levels.iter().enumerate() {
            let gcfg = GeneratorConfig { x_sigma: x, seed, ..Default::default() };
            let scene = generate_isometric(&gcfg, None).unwrap();
            let rec = solve_scene(&scene, &ReconstructionConfig::new(Method::QnrPp));
            per_level[k].push(relative_rms(&rec, &scene));
        }
    }
    let means: Vec<f64> = per_level.iter().map(|v| mean(v)).collect();
    let top = *means.last().unwrap();
    let pass = means[2] > means[0] && top.is_finite() && top <= 0.15;
    let shown: Vec<String> = levels.iter().zip(&means).map(|(x, m)| format!("x={x}: {:.2}%", 100.0 * m)).collect();
    (pass, format!("QNR-PP mean RMS/diameter over 10 seeds: {} (noise 2 > noise 0, top <= 15%)", shown.join(", ")))
}

fn qsg_9(seed: u64, chi: f64) -> SyntheticScene {
    let gcfg = GeneratorConfig { m_a: 3, m_b: 3, n: 3, knn: 4, chi_e: chi, seed, ..Default::default() };
    generate_equiareal(&gcfg, None).unwrap()
}

fn criterion_7() -> (bool, String) {
    let compare = |chi: f64| {
        let (mut h, mut q) = (Vec::new(), Vec::new());
        for seed in 0..20 {
            let scene = qsg_9(seed, chi);
            h.push(relative_rms(&solve_scene(&scene, &ReconstructionConfig::new(Method::HnrDsl)), &scene));
            q.push(relative_rms(&solve_scene(&scene, &ReconstructionConfig::new(Method::QnrDsl)), &scene));
        }
        (mean(&h), mean(&q))
    };
    let (h5, q5) = compare(0.5);
    let (h05, q05) = compare(0.05);
    let pass = h5 < q5;
    (
        pass,
        format!(
            "chi_E 0.5 over 20 seeds: HNR-DSL {:.2}% < QNR-DSL {:.2}%; at chi_E 0.05 (reported only): HNR-DSL {:.2}%, QNR-DSL {:.2}%",
            100.0 * h5,
            100.0 * q5,
            100.0 * h05,
            100.0 * q05
        ),
    )
}

fn criterion_8() -> (bool, String) {
    let (mut a1, mut a100, mut g1, mut g100) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10 {
        let scene = qsg_9(seed, 0.5);
        for (le, a, g) in [(1.0, &mut a1, &mut g1), (100.0, &mut a100, &mut g100)] {
            let cfg = ReconstructionConfig { lambda_e: le, ..ReconstructionConfig::new(Method::HnrDsl) };
            let rec = solve_scene(&scene, &cfg);
            let rep = evaluate(
                &rec.clouds,
                &scene.gt_clouds,
                None,
                Some((&rec.graph, &rec.geodesics, rec.areas.as_deref())),
            )
            .unwrap();
            a.push(rep.a_e.unwrap());
            g.push(rep.g_e.unwrap());
        }
    }
    let (a1, a100, g1, g100) = (mean(&a1), mean(&a100), mean(&g1), mean(&g100));
    let a_drop = (a1 - a100) / a1;
    let g_change = (g100 - g1).abs() / g1;
    let pass = a_drop >= 0.2 && g_change <= 0.25;
    (
        pass,
        format!(
            "HNR-DSL lambda_E 1 -> 100 over 10 seeds: aE {a1:.3e} -> {a100:.3e} (drop {:.1}% >= 20%), gE {g1:.3e} -> {g100:.3e} (change {:.1}% <= 25%)",
            100.0 * a_drop,
            100.0 * g_change
        ),
    )
}

fn criterion_9() -> (bool, String) {
    let (mut hidden_rms, mut seen_rms) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let gcfg = GeneratorConfig { hide_fraction: 0.2, seed, ..Default::default() };
        let scene = generate_isometric(&gcfg, None).unwrap();
        let cfg = ReconstructionConfig { completion: Completion::PseudoNeighbors(3), ..ReconstructionConfig::new(Method::QnrPp) };
        let rec = solve_scene(&scene, &cfg);
        let vis = &scene.visibility;
        let hid: Vec<Vec<bool>> = vis.iter().map(|r| r.iter().map(|v| !v).collect()).collect();
        let s = align_scale(&rec.clouds, &scene.gt_clouds, Some(vis)).unwrap();
        let est = scale_clouds(&rec.clouds, s);
        seen_rms.push(rms_med(&est, &scene.gt_clouds, Some(vis)).unwrap().0);
        hidden_rms.push(rms_med(&est, &scene.gt_clouds, Some(&hid)).unwrap().0);
    }
    let (h, o) = (mean(&hidden_rms), mean(&seen_rms));
    (h <= 3.0 * o, format!("QNR-PP, 20% hidden, s=3, 10 seeds: completed RMS {h:.4} vs observed {o:.4} (ratio {:.2} <= 3)", h / o))
}

fn criterion_10() -> (bool, String) {
    let base = Lemma1Config { samples: 100_000, h1_max: 0.1, h2_max: 0.1, edge_scale: 0.6, seed: 10 };
    let r = lemma1_sample(&base).unwrap();
    let z = lemma1_sample(&Lemma1Config { h1_max: 0.0, h2_max: 0.0, ..base }).unwrap();
    let pass = r.first_fraction >= 0.75 && r.second_fraction >= 0.75 && z.first_fraction == 1.0 && z.second_fraction == 1.0;
    (
        pass,
        format!(
            "10^5 samples: fractions {:.4} / {:.4} (>= 0.75); at zero displacement {} / {} (= 1)",
            r.first_fraction, r.second_fraction, z.first_fraction, z.second_fraction
        ),
    )
}

fn criterion_11() -> (bool, String) {
    let graph = SimplicialGraph::new(4, vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)], vec![(0, 1, 2), (1, 2, 3)]).unwrap();
    let (mut pass, mut parts) = (true, Vec::new());
    for seed in 0..3 {
        let gcfg = GeneratorConfig { m_a: 2, m_b: 2, n: 3, seed, ..Default::default() };
        let scene = generate_isometric(&gcfg, Some(&graph)).unwrap();
        let mut out = Vec::new();
        for method in [Method::HnrPp, Method::HnrPpAccel] {
            let cfg = ReconstructionConfig::new(method);
            let (prog, lay) = build_program(&scene.observations, &scene.graph, &cfg).unwrap();
            let sol = solve(&prog, &cfg.solver).unwrap();
            let rec = extract_points(&sol, &lay, &scene.observations, "embedded", &prog).unwrap();
            out.push((sol.objective, relative_rms(&rec, &scene)));
        }
        let ((full_obj, full_rms), (acc_obj, acc_rms)) = (out[0], out[1]);
        let ok = acc_obj >= full_obj - 1e-5 && (acc_rms - full_rms).abs() <= 0.25 * full_rms;
        pass &= ok;
        parts.push(format!("seed {seed}: obj {acc_obj:.6} vs {full_obj:.6}, RMS {:.3}% vs {:.3}%", 100.0 * acc_rms, 100.0 * full_rms));
    }
    (pass, format!("accelerated vs full on two triangles: {}", parts.join("; ")))
}

fn criterion_12() -> (bool, String) {
    let mut worst_area = 0.0f64;
    for chi in [0.05, 0.2, 0.5] {
        for seed in 0..5 {
            let scene = qsg_9(seed, chi);
            let mean_area = mean(&scene.gt_areas.iter().map(|a| a.sqrt()).collect::<Vec<_>>());
            let r = scene.area_residuals.iter().cloned().fold(0.0, f64::max) / mean_area;
            worst_area = worst_area.max(r);
        }
    }
    let scene = qsg_9(1, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_jac = 0.0f64;
    for c in &scene.gt_clouds {
        let x = DVector::from_iterator(3 * c.len(), c.iter().flat_map(|p| [p.x, p.y, p.z]).map(|v| v + rng.random_range(-0.05..0.05)));
        let targets = vec![0.0; scene.graph.e3.len()];
        let a = area_jacobian(&x, &scene.graph.e3);
        let f = numeric_jacobian(&|y: &DVector<f64>| area_residuals(y, &scene.graph.e3, &targets), &x, 1e-6);
        worst_jac = worst_jac.max((&a - &f).norm() / a.norm());
    }
    let pass = worst_area <= 1e-6 && worst_jac <= 1e-5;
    (
        pass,
        format!("worst area residual / mean area {worst_area:.1e} (<= 1e-6); Jacobian relative gap {worst_jac:.1e} (<= 1e-5)"),
    )
}

#[test]
#[ignore = "long-running; run in release with --ignored"]
fn acceptance_suite() {
    let outcomes: Vec<Outcome> = [
        run(1, 10, criterion_1),
        run(2, 5, criterion_2),
        run(3, 30, criterion_3),
        run(4, 7 * 120, criterion_4),
        run(5, 4 * 300, criterion_5),
        run(6, 900, criterion_6),
        run(7, 1800, criterion_7),
        run(8, 1200, criterion_8),
        run(9, 600, criterion_9),
        run(10, 60, criterion_10),
        run(11, 300, criterion_11),
        run(12, 120, criterion_12),
    ]
    .into_iter()
    .flatten()
    .collect();
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
