mod common;

use common::{dataset, max_abs_diff, prepared};
use flowcoop::artifact::{load_model, save_model, ModelArtifact, ARTIFACT_VERSION};
use flowcoop::datagen::{default_modes, generate, subset, train_test_split};
use flowcoop::flow::{similarity_matrix, FlowConfig};
use flowcoop::gp::SeKernel;
use flowcoop::planner::{combine, estimate_final_pose};
use flowcoop::reward::extract_features;
use flowcoop::trajectory::{InteractionDemo, PreprocessConfig, Trajectory};
use flowcoop::Error;
use nalgebra::Vector3;

fn humans(demos: &[InteractionDemo]) -> Vec<Trajectory> {
    demos.iter().map(|d| d.human.clone()).collect()
}

#[test]
fn modes_are_separated_under_flow_similarity() {
    let data = dataset();
    let demos = data.preprocess(&PreprocessConfig::default()).unwrap();
    let trajs = humans(&demos);
    let kernel = FlowConfig::default().resolve_kernel(&trajs);
    let d = similarity_matrix(&trajs, &kernel, 1.0).unwrap();
    let modes: Vec<&str> = data.demos.iter().map(|r| r.mode.as_deref().unwrap()).collect();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..trajs.len() {
        for j in 0..trajs.len() {
            if i == j {
                continue;
            }
            if modes[i] == modes[j] {
                intra += d[(i, j)];
                ni += 1;
            } else {
                inter += d[(i, j)];
                nx += 1;
            }
        }
    }
    let ratio = (inter / nx as f64) / (intra / ni as f64);
    assert!(ratio >= 3.0, "separation ratio {ratio}");
}

#[test]
fn modes_are_separated_in_space() {
    let data = dataset();
    let specs = default_modes();
    // every human end point is nearest to its own mode's template end point
    for r in &data.demos {
        let last = r.human.x.last().unwrap();
        let nearest = specs
            .iter()
            .min_by(|a, b| {
                let da = dist(last, a.human_waypoints.last().unwrap());
                let db = dist(last, b.human_waypoints.last().unwrap());
                da.total_cmp(&db)
            })
            .unwrap();
        assert_eq!(Some(nearest.name.as_str()), r.mode.as_deref());
    }
}

fn dist(a: &[f64], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn split_is_disjoint_and_balanced() {
    let (train, test) = train_test_split(dataset(), 1);
    assert_eq!(train.len() + test.len(), 80);
    assert!(train.iter().all(|i| !test.contains(i)));
    let per_mode = |idx: &[usize]| {
        let sub = subset(dataset(), idx);
        default_modes()
            .iter()
            .map(|m| sub.demos.iter().filter(|d| d.mode.as_deref() == Some(&m.name)).count())
            .collect::<Vec<_>>()
    };
    assert_eq!(per_mode(&train), vec![10; 4]);
    assert_eq!(per_mode(&test), vec![10; 4]);
}

#[test]
fn generation_is_seeded() {
    let a = generate(&default_modes(), 10.0, 99).unwrap();
    let b = generate(&default_modes(), 10.0, 99).unwrap();
    let c = generate(&default_modes(), 10.0, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn features_cover_every_prefix() {
    let prep = prepared();
    let demos = &prep.model.demos[..2];
    let features = extract_features(demos, &prep.model.bank).unwrap();
    assert_eq!(features.len(), 2 * (50 - 1));
    let dim = prep.model.bank.k();
    assert!(features.iter().all(|f| f.phi.len() == dim && f.xr.len() == 3));
    // the first feature pairs the two-point prefix with the second robot sample
    let first = prep.model.bank.describe(&demos[0].human.prefix(2)).unwrap();
    assert!(max_abs_diff(&features[0].phi.p, &first.p) < 1e-12);
    assert_eq!(features[0].xr, demos[0].robot.position(1));
}

#[test]
fn prefix_descriptors_match_direct_evaluation() {
    let prep = prepared();
    let bank = &prep.model.bank;
    let xi = &prep.test_demos[3].human;
    let all = bank.prefix_descriptors(xi).unwrap();
    assert_eq!(all.len(), xi.len() - 1);
    for t in [2, 10, 25, xi.len()] {
        let direct = bank.describe(&xi.prefix(t)).unwrap();
        assert!(max_abs_diff(&all[t - 2].p, &direct.p) < 1e-12);
    }
}

#[test]
fn single_demo_final_pose_is_its_endpoint() {
    let demo = prepared().model.demos[0].clone();
    let kernel = SeKernel::for_range(0.5);
    let pose = estimate_final_pose(std::slice::from_ref(&demo), &prepared().test_demos[0].human, &kernel).unwrap();
    assert_eq!(pose.weights, vec![1.0]);
    assert!((pose.position - demo.robot.last_position()).norm() < 1e-15);
    assert!((pose.velocity - demo.robot.last_velocity()).norm() < 1e-15);
}

#[test]
fn final_pose_is_dominated_by_the_matching_demo() {
    let demos = &prepared().model.demos;
    let kernel = SeKernel::for_range(0.5).with_noise(1e-6);
    let pose = estimate_final_pose(demos, &demos[4].human, &kernel).unwrap();
    let best = pose.weights.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    assert_eq!(best, 4);
    let own: f64 = demos
        .iter()
        .zip(&pose.weights)
        .filter(|(d, _)| d.mode_label == demos[4].mode_label)
        .map(|(_, w)| w)
        .sum();
    assert!(own > 0.5, "own-mode weight {own}");
}

#[test]
fn final_pose_lies_in_the_convex_hull() {
    let demos = &prepared().model.demos;
    let kernel = SeKernel::for_range(0.5);
    for test in prepared().test_demos.iter().step_by(7) {
        let pose = estimate_final_pose(demos, &test.human, &kernel).unwrap();
        assert!((pose.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..3 {
            let (lo, hi) = demos.iter().map(|d| d.robot.last_position()[j]).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), v| (lo.min(v), hi.max(v)),
            );
            assert!(pose.position[j] >= lo - 1e-12 && pose.position[j] <= hi + 1e-12);
        }
    }
}

#[test]
fn plan_starts_at_the_current_pose_and_reaches_the_goal() {
    let prep = prepared();
    let planner = &prep.planner;
    let demo = &prep.test_demos[0];
    let q_now = flowcoop::harness::start_joints(&planner.arm, planner, demo).unwrap();
    let plan = planner.plan(&demo.human, &q_now, 3, &[]).unwrap();
    assert_eq!(plan.path.shape(), (50, 3));
    assert_eq!(plan.joints.shape(), (50, 7));
    let start = planner.arm.hand(&q_now);
    for j in 0..3 {
        assert!((plan.path[(0, j)] - start[j]).abs() < 1e-6);
    }
    // the first row is a convex combination of rows pinned to q_now
    for (j, q) in q_now.iter().enumerate() {
        assert!((plan.joints[(0, j)] - q).abs() < 1e-12);
    }
    let goal = Vector3::new(
        plan.final_pose.position[0],
        plan.final_pose.position[1],
        plan.final_pose.position[2],
    );
    let end = Vector3::new(plan.path[(49, 0)], plan.path[(49, 1)], plan.path[(49, 2)]);
    assert!((end - goal).norm() < 0.02, "terminal error {}", (end - goal).norm());
    assert!((plan.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(plan.costs.is_none() && plan.clearance_mm.is_none());
    for row in plan.joints.row_iter() {
        let q: Vec<f64> = row.iter().copied().collect();
        planner.arm.check_limits(&q).unwrap();
    }
}

#[test]
fn plans_are_deterministic_per_seed() {
    let prep = prepared();
    let planner = &prep.planner;
    let demo = &prep.test_demos[5];
    let q = flowcoop::harness::start_joints(&planner.arm, planner, demo).unwrap();
    let a = planner.plan(&demo.human.observed(0.4), &q, 9, &[]).unwrap();
    let b = planner.plan(&demo.human.observed(0.4), &q, 9, &[]).unwrap();
    let c = planner.plan(&demo.human.observed(0.4), &q, 10, &[]).unwrap();
    assert_eq!(a.path, b.path);
    assert_ne!(a.path, c.path);
}

#[test]
fn combine_of_one_candidate_is_that_candidate() {
    let prep = prepared();
    let planner = &prep.planner;
    let q = planner.arm.ready_pose();
    let goal = planner.arm.solve_ik(&Vector3::new(0.45, 0.1, 0.4), &q, &planner.config.ik).unwrap();
    let samples = planner.sample_joint_paths(&q, &goal, &[0.0; 7], 1, 4).unwrap();
    let cand = planner.candidate(samples[0].clone());
    let (path, joints, w) = combine(std::slice::from_ref(&cand), &[123.4]).unwrap();
    assert_eq!(w, vec![1.0]);
    assert_eq!(path, cand.path);
    assert_eq!(joints, cand.joints);
}

#[test]
fn artifact_round_trip_reproduces_descriptors_and_plans() {
    let prep = prepared();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&prep.model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.bank.labels, prep.model.bank.labels);
    for demo in prep.test_demos.iter().take(5) {
        let a = prep.model.bank.describe(&demo.human).unwrap();
        let b = back.bank.describe(&demo.human).unwrap();
        assert!(max_abs_diff(&a.p, &b.p) < 1e-12);
    }
    let planner = back.planner().unwrap();
    let demo = &prep.test_demos[1];
    let q = flowcoop::harness::start_joints(&planner.arm, &planner, demo).unwrap();
    let a = prep.planner.plan(&demo.human, &q, 1, &[]).unwrap();
    let b = planner.plan(&demo.human, &q, 1, &[]).unwrap();
    assert!((a.path - b.path).abs().max() < 1e-9);
}

#[test]
fn artifact_rejects_wrong_version_and_corruption() {
    let text = ModelArtifact::from_model(&prepared().model).unwrap().to_json().unwrap();
    let bumped = text.replacen(ARTIFACT_VERSION, "flowcoop-model/999", 1);
    assert!(matches!(ModelArtifact::from_json(&bumped), Err(Error::Artifact(_))));
    assert!(matches!(ModelArtifact::from_json(&text[..text.len() / 2]), Err(Error::Artifact(_))));
    assert!(matches!(ModelArtifact::from_json("{\"seed\": 1}"), Err(Error::Artifact(_))));

    let mut art = ModelArtifact::from_json(&text).unwrap();
    art.probe[0] += 0.01;
    assert!(matches!(art.restore(), Err(Error::Artifact(_))));

    let mut art = ModelArtifact::from_json(&text).unwrap();
    art.bank.labels.pop();
    assert!(matches!(art.restore(), Err(Error::Artifact(_))));
}
