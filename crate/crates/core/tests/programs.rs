use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use nrsfm::conic::solve;
use nrsfm::geometry::ObservationSet;
use nrsfm::graph::{LiftIndexMaps, SimplicialGraph};
use nrsfm::lifting::{outer, point_vector};
use nrsfm::reconstruct::*;
use nrsfm::synth::{generate_equiareal, generate_isometric, FoldMode, GeneratorConfig};
use nrsfm::Error;

fn run(scene: &nrsfm::synth::SyntheticScene, cfg: &ReconstructionConfig) -> Reconstruction {
    let (prog, lay) = build_program(&scene.observations, &scene.graph, cfg).unwrap();
    let sol = solve(&prog, &cfg.solver).unwrap();
    extract_points(&sol, &lay, &scene.observations, "embedded", &prog).unwrap()
}

fn relative_rms(rec: &Reconstruction, scene: &nrsfm::synth::SyntheticScene) -> f64 {
    nrsfm::eval::evaluate(&rec.clouds, &scene.gt_clouds, None, None).unwrap().relative_rms()
}

fn rigid(seed: u64) -> nrsfm::synth::SyntheticScene {
    let cfg = GeneratorConfig { m_a: 3, m_b: 3, n: 3, max_bend: 0.0, seed, knn: 4, ..Default::default() };
    generate_isometric(&cfg, None).unwrap()
}

#[test]
fn smallest_snr_dsl_inventory() {
    let pts = vec![vec![Vector2::new(0.0, 0.0), Vector2::new(0.2, 0.1)]];
    let obs = ObservationSet::from_normalized(&pts, &[vec![true, true]]).unwrap();
    let g = SimplicialGraph::new(2, vec![(0, 1)], vec![]).unwrap();
    let (prog, lay) = build_snr_dsl(&obs, &g).unwrap();
    assert_eq!(lay.gram.len(), 1);
    assert_eq!(lay.gram_dim, 2);
    assert_eq!(lay.inverse_terms.len(), 2);
    assert_eq!(prog.count_label_prefix("iso:"), 1);
    assert_eq!(prog.count_label_prefix("scale"), 1);
}

#[test]
fn lift_block_dimensions() {
    let tri = SimplicialGraph::new(3, vec![(0, 1), (0, 2), (1, 2)], vec![(0, 1, 2)]).unwrap();
    let cfg = GeneratorConfig { m_a: 3, m_b: 3, n: 2, seed: 1, ..Default::default() };
    let s = generate_isometric(&cfg, None).unwrap();
    let obs3 = ObservationSet::from_normalized(
        &s.observations.points.iter().map(|r| r[..3].iter().map(|p| Vector2::new(p.x, p.y)).collect()).collect::<Vec<_>>(),
        &[vec![true; 3], vec![true; 3]],
    )
    .unwrap();
    let (_, lay) = build_program(&obs3, &tri, &ReconstructionConfig::new(Method::HnrPp)).unwrap();
    assert_eq!(lay.gram_dim, 28);
    assert_eq!(lay.dominance_terms.len(), 2 * 6 * 3);

    let maps = LiftIndexMaps::new(&s.graph).unwrap();
    let (_, lay) = build_program(&s.observations, &s.graph, &ReconstructionConfig::new(Method::HnrDsl)).unwrap();
    assert_eq!(lay.gram_dim, 9 + maps.p2_tilde());
    assert_eq!(lay.dominance_terms.len(), 2 * maps.p2_tilde());

    let (prog, lay) = build_program(&s.observations, &s.graph, &ReconstructionConfig::new(Method::HnrPpAccel)).unwrap();
    assert_eq!(lay.gram_dim, 28);
    for i in 0..2 {
        assert_eq!(lay.triangle_blocks[i].len(), s.graph.e3.len());
        for &b in &lay.triangle_blocks[i] {
            assert_eq!(prog.psd_blocks[b].dim, 18);
        }
    }
}

#[test]
fn hnr_needs_triangles() {
    let cfg = GeneratorConfig { m_a: 3, m_b: 3, n: 2, ..Default::default() };
    let s = generate_isometric(&cfg, None).unwrap();
    let bare = SimplicialGraph::new(9, s.graph.e2.clone(), vec![]).unwrap();
    for m in [Method::HnrDsl, Method::HnrPp, Method::HnrPpAccel] {
        assert!(build_program(&s.observations, &bare, &ReconstructionConfig::new(m)).is_err(), "{m}");
    }
}

#[test]
fn rigid_scene_is_recovered() {
    for seed in 0..3 {
        let s = rigid(seed);
        let rec = run(&s, &ReconstructionConfig::new(Method::SnrDsl));
        let r = relative_rms(&rec, &s);
        // depth pull of the objective leaves a few percent of bias even without bending
        assert!(r <= 0.05, "seed {seed}: {r}");
        assert!((rec.geodesics.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn pp_points_lie_on_their_sightlines() {
    let s = rigid(1);
    let rec = run(&s, &ReconstructionConfig::new(Method::SnrPp));
    for (i, c) in rec.clouds.iter().enumerate() {
        for (p, d) in c.iter().zip(&s.observations.sightlines[i]) {
            // reprojection is a penalty traded against the depth term
            let sin2 = p.cross(d).norm_squared() / p.norm_squared();
            assert!(sin2 <= 1e-2, "{sin2}");
            assert!(p.z >= -1e-6);
        }
    }
    assert!((rec.geodesics.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn noiseless_qnr_has_small_slacks() {
    let s = rigid(2);
    let rec = run(&s, &ReconstructionConfig::new(Method::QnrDsl));
    let iso = rec.diagnostics.objective_breakdown[&Term::Isometry];
    assert!(iso / 100.0 <= 1e-4, "{iso}");
}

#[test]
fn isometry_residual_shrinks_with_lambda() {
    let cfg = GeneratorConfig { m_a: 3, m_b: 3, n: 3, seed: 5, ..Default::default() };
    let s = generate_isometric(&cfg, None).unwrap();
    let mut last = f64::INFINITY;
    for lambda in [10.0, 100.0, 1000.0] {
        let mut c = ReconstructionConfig::new(Method::QnrDsl);
        c.lambda_i = lambda;
        let rec = run(&s, &c);
        let residual = rec.diagnostics.objective_breakdown[&Term::Isometry] / lambda;
        assert!(residual <= last + 1e-6, "lambda {lambda}: {residual} > {last}");
        last = residual;
    }
}

#[test]
fn every_method_anchors_scale_and_keeps_depths_positive() {
    let cfg = GeneratorConfig { m_a: 3, m_b: 3, n: 2, seed: 3, fold_mode: FoldMode::GraphAligned, ..Default::default() };
    let s = generate_equiareal(&GeneratorConfig { chi_e: 0.1, ..cfg }, None).unwrap();
    for m in Method::ALL {
        let rec = run(&s, &ReconstructionConfig::new(m));
        assert!((rec.geodesics.iter().sum::<f64>() - 1.0).abs() < 1e-6, "{m}");
        assert_eq!(rec.diagnostics.negative_depths, 0, "{m}");
        assert_eq!(rec.areas.is_some(), m.is_hnr());
    }
}

#[test]
fn dsl_rejects_hidden_points() {
    let cfg = GeneratorConfig { m_a: 3, m_b: 3, n: 3, hide_fraction: 0.2, ..Default::default() };
    let s = generate_isometric(&cfg, None).unwrap();
    let err = build_program(&s.observations, &s.graph, &ReconstructionConfig::new(Method::SnrDsl)).unwrap_err();
    assert!(matches!(err, Error::Incompatible(_)));
    let err = build_program(&s.observations, &s.graph, &ReconstructionConfig::new(Method::SnrPp)).unwrap_err();
    assert!(matches!(err, Error::Incompatible(_) | Error::Config(_)), "{err}");
}

#[test]
fn extraction_from_exact_grams() {
    let d = depths_from_gram(&outer(&DVector::from_vec(vec![1.0, 2.0, 3.0])));
    for (a, b) in d.iter().zip([1.0, 2.0, 3.0]) {
        assert!((a - b).abs() < 1e-12);
    }
    // rank one plus a small PSD perturbation
    let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let noise = DMatrix::from_fn(3, 3, |r, c| if r == c { 1e-6 } else { 0.5e-6 });
    let d = depths_from_gram(&(outer(&v) + noise));
    for (a, b) in d.iter().zip(v.iter()) {
        assert!((a - b).abs() < 1e-3);
    }
    let pts = vec![Vector3::new(0.1, -0.2, 2.0), Vector3::new(0.4, 0.3, 2.5)];
    assert_eq!(points_from_gram(&outer(&point_vector(&pts)), 2), pts);
}
