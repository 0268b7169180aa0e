//! Property tests for the invariants of the I/O, rendering, triangulation,
//! pose search, contact and metric modules.

use deformcap::contact::{detect_penetrations, geodesic_distances, intersection_volume, AabbTree};
use deformcap::deform::energy::{energy, EnergyInputs};
use deformcap::deform::{build_graph, Lambdas};
use deformcap::eval::{joint_error, miou, EvalReport, FrameEvalInput};
use deformcap::geometry::rotation_from_axis_angle;
use deformcap::hand::kinematics::Skeleton3D;
use deformcap::hand::triangulate::algebraic_residual;
use deformcap::hand::triangulate_keypoint;
use deformcap::io::camera::{load_cameras, save_cameras};
use deformcap::io::keypoints::KeypointObservation;
use deformcap::io::mask::{load_mask, save_mask};
use deformcap::io::obj::{load_mesh, save_mesh};
use deformcap::io::outputs::{load_pose, save_pose, FramePose};
use deformcap::object_pose::{estimate_pose, sample_loss, GaConfig, PoseFrame, PoseSample, SearchRegion};
use deformcap::raster::{rasterize, Label};
use deformcap::synth::{look_at, make_rig, render_masks};
use deformcap::{CameraParams, Mat3, MaskImage, TriMesh, Vec2, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn small_cam(id: usize, azimuth: f64, elevation: f64) -> CameraParams {
    let eye = Vec3::new(400.0 * azimuth.cos() * elevation.cos(), 400.0 * azimuth.sin() * elevation.cos(), 400.0 * elevation.sin());
    look_at(id, &eye, &Vec3::zeros(), 70.0, 64, 48)
}

fn ray_cast_label(cam: &CameraParams, x: u32, y: u32, meshes: &[(&TriMesh, Label)]) -> Label {
    let dc = cam.k.try_inverse().unwrap() * Vec3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
    let o = -(cam.r.transpose() * cam.t);
    let d = cam.r.transpose() * dc;
    let mut best = (f64::INFINITY, Label::Empty);
    for (mesh, label) in meshes {
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.triangle(f);
            let (e1, e2) = (b - a, c - a);
            let p = d.cross(&e2);
            let det = e1.dot(&p);
            if det.abs() < 1e-14 {
                continue;
            }
            let s = o - a;
            let u = s.dot(&p) / det;
            let q = s.cross(&e1);
            let v = d.dot(&q) / det;
            let t = e2.dot(&q) / det;
            if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 && t < best.0 {
                best = (t, *label);
            }
        }
    }
    best.1
}

fn inside_brute_force(mesh: &TriMesh, p: &Vec3) -> bool {
    let d = Vec3::new(0.5773, 0.5774, 0.5775).normalize();
    let mut crossings = 0;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(f);
        let (e1, e2) = (b - a, c - a);
        let q = d.cross(&e2);
        let det = e1.dot(&q);
        if det.abs() < 1e-14 {
            continue;
        }
        let s = p - a;
        let u = s.dot(&q) / det;
        let r = s.cross(&e1);
        let v = d.dot(&r) / det;
        let t = e2.dot(&r) / det;
        if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}

fn random_mask(seed: u64, view: usize, w: u32, h: u32, density: f64) -> MaskImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(density)).collect();
    MaskImage::from_fn(view, w, h, |x, y| bits[(y * w + x) as usize])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn cameras_round_trip(w in vec3(3.0), t in vec3(1000.0), f in 100.0..3000.0f64, cx in 10.0..600.0f64) {
        let cam = CameraParams {
            id: 3,
            k: Mat3::new(f, 0.0, cx, 0.0, f * 1.01, cx * 0.7, 0.0, 0.0, 1.0),
            r: rotation_from_axis_angle(&w),
            t,
            width: 640,
            height: 480,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cameras.json");
        save_cameras(&p, std::slice::from_ref(&cam)).unwrap();
        let back = load_cameras(&p).unwrap();
        prop_assert_eq!(back, vec![cam]);
    }

    #[test]
    fn meshes_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = TriMesh::icosphere(2, 30.0);
        let m = m.with_vertices(m.vertices.iter().map(|v| v * rng.random_range(0.5..2.0) + Vec3::new(1.0 / 3.0, 0.1, -7.0)).collect());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        save_mesh(&p, &m, None).unwrap();
        let back = load_mesh(&p).unwrap();
        prop_assert_eq!(back.vertices, m.vertices);
        prop_assert_eq!(back.faces, m.faces);
    }

    #[test]
    fn masks_round_trip(seed in any::<u64>(), w in 1u32..50, h in 1u32..50) {
        let m = random_mask(seed, 2, w, h, 0.4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        save_mask(&p, &m, Some("test")).unwrap();
        let back = load_mask(&p).unwrap();
        prop_assert_eq!(back.pixels, m.pixels);
        prop_assert_eq!((back.width, back.height), (w, h));
    }

    #[test]
    fn pose_files_round_trip(theta in prop::collection::vec(-10.0..10.0f64, 1..40), alpha in prop::array::uniform6(-500.0..500.0f64), loss in 0.0..5.0f64) {
        let pose = FramePose {
            frame: 9,
            hand_theta: Some(theta.clone()),
            hand_theta_raw: Some(theta.iter().map(|x| x / 3.0).collect()),
            object_alpha: Some(alpha),
            object_alpha_raw: Some(alpha.map(|x| x * 1.1)),
            object_loss: Some(loss),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pose_9.json");
        save_pose(&p, &pose).unwrap();
        prop_assert_eq!(load_pose(&p).unwrap(), pose);
    }

    #[test]
    fn rendering_matches_ray_casting(c1 in vec3(60.0), c2 in vec3(60.0), r1 in 15.0..60.0f64, r2 in 5.0..30.0f64, az in 0.0..std::f64::consts::TAU, el in -0.8..0.8f64) {
        let cam = small_cam(0, az, el);
        let object = TriMesh::icosphere(2, r1).transformed(&Mat3::identity(), &c1);
        let hand = TriMesh::capsule(&c2, &(c2 + Vec3::new(40.0, 10.0, -20.0)), r2, 4, 10);
        let meshes = [(&object, Label::Object), (&hand, Label::Hand)];
        let buf = rasterize(&meshes, &cam);
        prop_assert_eq!(&buf, &rasterize(&meshes, &cam));
        let mut mismatches = 0;
        for y in 0..48 {
            for x in 0..64 {
                if buf.label[buf.index(x, y)] != ray_cast_label(&cam, x, y, &meshes) {
                    mismatches += 1;
                }
            }
        }
        prop_assert_eq!(mismatches, 0);
    }

    #[test]
    fn mask_ignores_face_order(seed in any::<u64>(), w in vec3(3.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = TriMesh::icosphere(2, 50.0).transformed(&rotation_from_axis_angle(&w), &Vec3::new(5.0, -3.0, 2.0));
        let mut faces = m.faces.clone();
        for i in (1..faces.len()).rev() {
            faces.swap(i, rng.random_range(0..=i));
        }
        let shuffled = TriMesh::new(m.vertices.clone(), faces).unwrap();
        let cams = [small_cam(0, 0.3, 0.2), small_cam(1, 2.0, -0.4)];
        prop_assert_eq!(render_masks(&m, None, &cams), render_masks(&shuffled, None, &cams));
    }

    #[test]
    fn triangulation_is_locally_optimal(p in vec3(100.0), seed in any::<u64>()) {
        let cams = make_rig(4, 800.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs: Vec<KeypointObservation> = cams
            .iter()
            .map(|c| KeypointObservation {
                view: c.id,
                joint: 0,
                uv: c.project(&p).unwrap() + Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
                confidence: 1.0,
            })
            .collect();
        let k = triangulate_keypoint(&obs, &cams, 0.6).unwrap();
        let at = algebraic_residual(&obs, &cams, 0.6, &k);
        for _ in 0..1000 {
            let dk = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            prop_assert!(at <= algebraic_residual(&obs, &cams, 0.6, &(k + dk)) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn penetrations_match_brute_force(c in vec3(40.0), d in vec3(1.0), r in 8.0..25.0f64) {
        let object = TriMesh::icosphere(3, 50.0);
        let dir = if d.norm() > 1e-3 { d.normalize() } else { Vec3::x() };
        let hand = TriMesh::capsule(&c, &(c + dir * 60.0), r, 4, 12);
        let pairs = detect_penetrations(&object, &hand, &AabbTree::build(&hand)).unwrap();
        let mut fast: Vec<usize> = pairs.iter().map(|p| p.object_vertex).collect();
        fast.sort();
        let slow: Vec<usize> = (0..object.vertices.len()).filter(|&v| inside_brute_force(&hand, &object.vertices[v])).collect();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn geodesics_satisfy_edge_triangle_inequality(source in 0usize..642) {
        let m = TriMesh::icosphere(3, 40.0);
        let g = geodesic_distances(&m, &[source]);
        for (a, b) in m.edges() {
            let len = (m.vertices[a] - m.vertices[b]).norm();
            prop_assert!((g[a] - g[b]).abs() <= len + 1e-9);
        }
    }

    // Each slab face can be off by up to half a voxel, so the slab is kept
    // thick enough for one voxel to stay under 5% of its width.
    #[test]
    fn volume_converges_on_slabs(ox in 0.0..1.0f64, overlap in 25.0..35.0f64) {
        let a = TriMesh::cuboid(&Vec3::new(ox, 0.3, 0.2), &Vec3::new(ox + 40.0, 40.3, 40.2));
        let b = TriMesh::cuboid(&Vec3::new(ox + 40.0 - overlap, -5.0, 0.2), &Vec3::new(ox + 80.0, 45.0, 40.2));
        let coarse = intersection_volume(&a, &b, 1.0).unwrap();
        let fine = intersection_volume(&a, &b, 0.5).unwrap();
        prop_assert!((coarse - fine).abs() / fine < 0.05);
        prop_assert_eq!(coarse, intersection_volume(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn rigid_energy_vanishes_only_on_rotations(w in vec3(3.0), s in 0.5..1.5f64) {
        prop_assume!((s - 1.0).abs() > 1e-3);
        let mesh = TriMesh::icosphere(2, 40.0);
        let graph = build_graph(&mesh, 20.0, 4).unwrap();
        let inputs = EnergyInputs {
            rest: &mesh.vertices,
            targets: None,
            correspondences: &[],
            cams: &[],
            last: None,
            lambdas: Lambdas::default(),
        };
        let mut g = graph.clone();
        for tr in g.transforms.iter_mut() {
            tr.a = rotation_from_axis_angle(&w);
        }
        prop_assert!(energy(&g, &inputs).rigid < 1e-20);
        g.transforms[0].a *= s;
        prop_assert!(energy(&g, &inputs).rigid > 0.0);
    }

    #[test]
    fn miou_symmetric_and_view_order_free(seed in any::<u64>(), n in 1usize..5) {
        let a: Vec<MaskImage> = (0..n).map(|v| random_mask(seed + v as u64, v, 20, 15, 0.5)).collect();
        let b: Vec<MaskImage> = (0..n).map(|v| random_mask(seed ^ (0xabc + v as u64), v, 20, 15, 0.3)).collect();
        let ab = miou(&a, &b).unwrap();
        prop_assert_eq!(ab.percent, miou(&b, &a).unwrap().percent);
        let (mut ra, mut rb) = (a.clone(), b.clone());
        ra.reverse();
        rb.reverse();
        prop_assert!((miou(&ra, &rb).unwrap().percent - ab.percent).abs() < 1e-9);
    }

    #[test]
    fn joint_error_ignores_labels(seed in any::<u64>(), n in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = || (0..n).map(|_| Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0))).collect::<Vec<_>>();
        let (p, g) = (pts(), pts());
        let base = joint_error(&Skeleton3D::all_valid(p.clone()), &Skeleton3D::all_valid(g.clone())).unwrap();
        let perm: Vec<usize> = (0..n).rev().collect();
        let pp = perm.iter().map(|&i| p[i]).collect();
        let gp = perm.iter().map(|&i| g[i]).collect();
        let moved = joint_error(&Skeleton3D::all_valid(pp), &Skeleton3D::all_valid(gp)).unwrap();
        prop_assert!((base.0 - moved.0).abs() < 1e-9 && (base.1 - moved.1).abs() < 1e-9);
    }

    #[test]
    fn reports_round_trip(seed in any::<u64>(), v in 0.0..10.0f64) {
        let pred = vec![random_mask(seed, 0, 12, 9, 0.5), random_mask(seed + 1, 1, 12, 9, 0.5)];
        let gt = vec![random_mask(seed + 2, 0, 12, 9, 0.5), random_mask(seed + 3, 1, 12, 9, 0.5)];
        let report = EvalReport::from_frames(&[FrameEvalInput {
            frame: 0,
            joints: None,
            masks: Some((&pred, &gt)),
            intersection_cm3: Some(v),
        }])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.json");
        report.save(&p).unwrap();
        prop_assert_eq!(EvalReport::load(&p).unwrap(), report);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn pose_search_is_elitist_deterministic_and_view_order_free(seed in any::<u64>(), w in vec3(0.5), t in vec3(20.0)) {
        let template = TriMesh::cuboid(&Vec3::new(-40.0, -25.0, -15.0), &Vec3::new(40.0, 25.0, 15.0));
        let truth = PoseSample::from_parts(&w, &t);
        let cams: Vec<CameraParams> = (0..3).map(|i| small_cam(i, 2.1 * i as f64, 0.3)).collect();
        let masks = render_masks(&truth.apply(&template), None, &cams);
        let frame = PoseFrame { template: &template, hand: None, masks: &masks, cams: &cams };
        let cfg = GaConfig { population_size: 24, iterations: 4, working_scale: 1.0, seed, ..GaConfig::default() };
        let region = SearchRegion { min: Vec3::from_element(-60.0), max: Vec3::from_element(60.0) };
        let a = estimate_pose(&frame, 0, None, &region, &cfg).unwrap();
        prop_assert!(a.best_history.windows(2).all(|h| h[1] <= h[0]));
        let b = estimate_pose(&frame, 0, None, &region, &cfg).unwrap();
        prop_assert_eq!(a.best.alpha, b.best.alpha);

        let rev_cams: Vec<CameraParams> = cams.iter().rev().cloned().collect();
        let rev_masks: Vec<MaskImage> = masks.iter().rev().cloned().collect();
        let rev = PoseFrame { template: &template, hand: None, masks: &rev_masks, cams: &rev_cams };
        let l1 = sample_loss(&a.best, &frame, cfg.lambda_o).unwrap();
        let l2 = sample_loss(&a.best, &rev, cfg.lambda_o).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-12);
    }
}
