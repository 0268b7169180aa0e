//! Deterministic synthetic scenes with exact ground truth.
//!
//! The press scene is a lumpy sphere (radius 100 mm) resting in front of a
//! ring of cameras while the index finger of the generic hand approaches it
//! and indents it. The lumps make the rigid pose observable from silhouettes,
//! which a plain sphere would not be.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec2, Vec3};
use crate::hand::model::save_hand_model;
use crate::hand::{forward_kinematics, skin_hand, HandModel, HandPose};
use crate::io::camera::{save_cameras, CameraParams};
use crate::io::keypoints::{save_keypoints, KeypointObservation};
use crate::io::manifest::{save_manifest, FrameFiles, SequenceManifest};
use crate::io::mask::{save_mask, MaskImage};
use crate::io::obj::save_mesh;
use crate::mesh::TriMesh;
use crate::object_pose::{PoseSample, SearchRegion};
use crate::par;
use crate::raster::{object_visible_mask, rasterize, Label};

pub const IMAGE_WIDTH: u32 = 640;
pub const IMAGE_HEIGHT: u32 = 480;
pub const RIG_RADIUS: f64 = 800.0;
/// Camera height above the ring plane as a fraction of the ring radius.
pub const RIG_ELEVATION: f64 = 0.35;
pub const OBJECT_RADIUS: f64 = 100.0;
/// Relative semi-axes of the synthetic object; unit along the pressed axis.
pub const OBJECT_AXES: Vec3 = Vec3::new(1.0, 1.3, 0.8);
/// Taper of the x extent along y and of the z extent along x. Without it the
/// body would look the same after half turns about its axes.
pub const OBJECT_TAPER: (f64, f64) = (0.35, 0.4);
pub const OBJECT_LEVEL: u32 = 4;
pub const MAX_INDENTATION: f64 = 8.0;
/// Gap between fingertip and object on frame 0.
pub const INITIAL_GAP: f64 = 2.0;
/// Width of the ground-truth dent along the surface.
pub const DENT_SIGMA: f64 = 10.0;
pub const KEYPOINT_CONFIDENCE: f64 = 0.95;
pub const PROVENANCE: &str = "synthetic ground truth generated by deformcap synth";

/// Index fingertip of [`HandModel::generic`]: end of the index capsule.
const FINGERTIP: Vec3 = Vec3::new(179.0, -25.0, 0.0);
/// Object-frame direction of the pressed surface point.
const CONTACT_DIR: Vec3 = Vec3::new(-1.0, 0.0, 0.0);

/// Pinhole camera at `eye` looking at `target` with world `+z` up.
pub fn look_at(id: usize, eye: &Vec3, target: &Vec3, focal: f64, width: u32, height: u32) -> CameraParams {
    let forward = (target - eye).normalize();
    let right = forward.cross(&Vec3::z()).normalize();
    let down = forward.cross(&right);
    let r = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    CameraParams {
        id,
        k: Mat3::new(focal, 0.0, width as f64 / 2.0, 0.0, focal, height as f64 / 2.0, 0.0, 0.0, 1.0),
        r,
        t: -(r * eye),
        width,
        height,
    }
}

/// `n_views` cameras evenly spaced in azimuth on a ring of `radius`, raised
/// by [`RIG_ELEVATION`], aimed at the origin. The focal length makes a
/// 200 mm object span a third of the image width.
pub fn make_rig(n_views: usize, radius: f64) -> Vec<CameraParams> {
    let height = RIG_ELEVATION * radius;
    let dist = (radius * radius + height * height).sqrt();
    let focal = IMAGE_WIDTH as f64 * dist / 600.0;
    (0..n_views)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n_views as f64;
            let eye = Vec3::new(radius * a.cos(), radius * a.sin(), height);
            look_at(i, &eye, &Vec3::zeros(), focal, IMAGE_WIDTH, IMAGE_HEIGHT)
        })
        .collect()
}

/// Tapered ellipsoid with semi-axes `radius * OBJECT_AXES`, plus smooth radial
/// bumps and dimples at seeded positions away from the pressed side.
pub fn lumpy_ellipsoid(level: u32, radius: f64, seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lumps: Vec<(Vec3, f64, f64)> = Vec::new();
    // (relative height, angular width) of each bump; distinct sizes keep the
    // shape free of near-symmetries.
    let shapes = [(0.3, 0.2), (-0.15, 0.1), (0.2, 0.06), (0.12, 0.15), (-0.1, 0.08), (0.25, 0.04)];
    while lumps.len() < shapes.len() {
        let c = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = c.norm();
        if !(0.1..=1.0).contains(&n) {
            continue;
        }
        let c = c / n;
        if c.dot(&CONTACT_DIR) > 0.3 || lumps.iter().any(|(o, _, _)| o.dot(&c) > 0.6) {
            continue;
        }
        let (a, w) = shapes[lumps.len()];
        lumps.push((c, a, w));
    }
    let base = TriMesh::icosphere(level, 1.0);
    let verts = base
        .vertices
        .iter()
        .map(|u| {
            let bump: f64 = lumps.iter().map(|(c, a, w)| a * ((u.dot(c) - 1.0) / w).exp()).sum();
            let mut e = u.component_mul(&OBJECT_AXES);
            e.x *= 1.0 + OBJECT_TAPER.0 * u.y;
            e.z *= 1.0 + OBJECT_TAPER.1 * u.x;
            e * radius * (1.0 + bump)
        })
        .collect();
    base.with_vertices(verts)
}

/// Template pushed in around [`CONTACT_DIR`] by `depth` mm with a Gaussian
/// profile in arc length.
pub fn dented(template: &TriMesh, depth: f64) -> TriMesh {
    if depth <= 0.0 {
        return template.clone();
    }
    let verts = template
        .vertices
        .iter()
        .map(|v| {
            let r = v.norm();
            let u = v / r;
            let s = r * u.dot(&CONTACT_DIR).clamp(-1.0, 1.0).acos();
            let d = depth * (-s * s / (2.0 * DENT_SIGMA * DENT_SIGMA)).exp();
            u * (r - d)
        })
        .collect();
    template.with_vertices(verts)
}

/// Radius of `template` along [`CONTACT_DIR`], from the vertex closest to
/// that direction.
fn contact_radius(template: &TriMesh) -> f64 {
    template
        .vertices
        .iter()
        .max_by(|a, b| a.normalize().dot(&CONTACT_DIR).total_cmp(&b.normalize().dot(&CONTACT_DIR)))
        .map(|v| v.norm())
        .unwrap_or(OBJECT_RADIUS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Press,
    Orbit,
    Table1,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "press" => Ok(Scenario::Press),
            "orbit" => Ok(Scenario::Orbit),
            "table1" => Ok(Scenario::Table1),
            _ => Err(Error::InvalidConfig(format!("unknown scenario '{s}' (press|orbit|table1)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub seed: u64,
    pub cams: Vec<CameraParams>,
    pub hand_model: HandModel,
    pub hand_poses: Vec<HandPose>,
    pub hand_meshes: Vec<TriMesh>,
    /// Object template in its own frame.
    pub template: TriMesh,
    pub object_poses: Vec<PoseSample>,
    /// Fingertip depth below the undeformed surface; negative is a gap.
    pub indentation: Vec<f64>,
    /// Ground-truth deformed object in world coordinates.
    pub objects: Vec<TriMesh>,
    /// `masks[frame][view]`.
    pub masks: Vec<Vec<MaskImage>>,
    pub keypoints: Vec<Vec<KeypointObservation>>,
}

impl SynthScene {
    pub fn frame_count(&self) -> usize {
        self.object_poses.len()
    }

    /// Template rigidly posed at the ground-truth pose of `frame`.
    pub fn rigid_object(&self, frame: usize) -> TriMesh {
        self.object_poses[frame].apply(&self.template)
    }

    pub fn hand_joints(&self, frame: usize) -> Vec<Vec3> {
        forward_kinematics(&self.hand_model, &self.hand_poses[frame]).0.joints
    }
}

fn object_pose(frame: usize) -> PoseSample {
    let f = frame as f64;
    let w0 = Vec3::new(0.3, -0.45, 0.2);
    let spin = Vec3::new(0.004, 0.008, -0.006);
    let t0 = Vec3::new(12.0, -18.0, 6.0);
    let drift = Vec3::new(0.5, 0.4, -0.3);
    PoseSample::from_parts(&(w0 + spin * f), &(t0 + drift * f))
}

/// Flexed middle, ring and little fingers; straight index finger and thumb.
fn hand_shape(model: &HandModel, frame: usize) -> HandPose {
    let mut pose = HandPose::rest(model, frame);
    for (k, &j) in model.articulated().iter().enumerate() {
        if j >= 9 {
            pose.joint_rotations[k] = Vec3::new(0.0, 0.35, 0.0);
        }
    }
    pose
}

/// Hand pose placing the index fingertip `depth` mm inside the undeformed
/// surface along the inward normal, rotating with the object.
fn press_hand_pose(model: &HandModel, template: &TriMesh, obj: &PoseSample, depth: f64, frame: usize) -> HandPose {
    let r = obj.rotation();
    let surface = obj.translation() + r * (CONTACT_DIR * contact_radius(template));
    let inward = -(r * CONTACT_DIR);
    let tip = surface + inward * depth;
    let mut pose = hand_shape(model, frame);
    pose.root_rotation = obj.rotation_vector();
    pose.root_translation = tip - r * FINGERTIP;
    pose
}

/// Ground-truth masks of one frame: the object pixels not hidden by the hand.
pub fn render_masks(object: &TriMesh, hand: Option<&TriMesh>, cams: &[CameraParams]) -> Vec<MaskImage> {
    par::map_slice(cams, |c| {
        let mut list = Vec::with_capacity(2);
        if let Some(h) = hand {
            list.push((h, Label::Hand));
        }
        list.push((object, Label::Object));
        object_visible_mask(&rasterize(&list, c), c.id)
    })
}

/// Projects joints into every view. With `noise_px > 0` each coordinate gets
/// independent Gaussian noise from `rng`.
pub fn project_keypoints(joints: &[Vec3], cams: &[CameraParams], noise_px: f64, rng: &mut ChaCha8Rng) -> Vec<KeypointObservation> {
    let normal = Normal::new(0.0, noise_px.max(0.0)).expect("valid noise");
    let mut out = Vec::new();
    for c in cams {
        for (j, p) in joints.iter().enumerate() {
            let Some(uv) = c.project(p) else { continue };
            let uv = if noise_px > 0.0 {
                uv + Vec2::new(normal.sample(rng), normal.sample(rng))
            } else {
                uv
            };
            out.push(KeypointObservation {
                view: c.id,
                joint: j,
                uv,
                confidence: KEYPOINT_CONFIDENCE,
            });
        }
    }
    out
}

fn indentation_schedule(frames: usize, frame: usize) -> f64 {
    if frames <= 1 {
        return -INITIAL_GAP;
    }
    -INITIAL_GAP + (MAX_INDENTATION + INITIAL_GAP) * frame as f64 / (frames - 1) as f64
}

fn build_scene(frames: usize, views: usize, seed: u64, indentation: impl Fn(usize) -> f64) -> SynthScene {
    let cams = make_rig(views, RIG_RADIUS);
    let hand_model = HandModel::generic();
    let template = lumpy_ellipsoid(OBJECT_LEVEL, OBJECT_RADIUS, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut scene = SynthScene {
        seed,
        cams,
        hand_model,
        hand_poses: Vec::new(),
        hand_meshes: Vec::new(),
        template,
        object_poses: Vec::new(),
        indentation: Vec::new(),
        objects: Vec::new(),
        masks: Vec::new(),
        keypoints: Vec::new(),
    };
    for f in 0..frames {
        let obj = object_pose(f);
        let depth = indentation(f);
        let hand_pose = press_hand_pose(&scene.hand_model, &scene.template, &obj, depth, f);
        let hand = skin_hand(&scene.hand_model, &hand_pose);
        let object = obj.apply(&dented(&scene.template, depth));
        let joints = forward_kinematics(&scene.hand_model, &hand_pose).0.joints;
        scene.masks.push(render_masks(&object, Some(&hand), &scene.cams));
        scene.keypoints.push(project_keypoints(&joints, &scene.cams, 0.0, &mut rng));
        scene.hand_poses.push(hand_pose);
        scene.hand_meshes.push(hand);
        scene.object_poses.push(obj);
        scene.indentation.push(depth);
        scene.objects.push(object);
    }
    scene
}

/// Finger approaching from a 2 mm gap on frame 0 and pressing to 8 mm on
/// the last frame, while the object drifts by at most 1 mm and 1 degree per
/// frame.
pub fn make_press_sequence(frames: usize, views: usize, seed: u64) -> SynthScene {
    build_scene(frames, views, seed, |f| indentation_schedule(frames, f))
}

/// The same motion with the finger hovering 20 mm from the surface.
pub fn make_orbit_sequence(frames: usize, views: usize, seed: u64) -> SynthScene {
    build_scene(frames, views, seed, |_| -20.0)
}

/// Triangulation fixture: random points seen by rigs of increasing size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Fixture {
    pub seed: u64,
    pub noise_px: f64,
    pub points: Vec<[f64; 3]>,
    pub rigs: Vec<Table1Rig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Rig {
    pub views: usize,
    /// `observations[point]`, one detection per view.
    pub observations: Vec<Vec<Table1Obs>>,
    /// Same detections without noise.
    pub clean: Vec<Vec<Table1Obs>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Table1Obs {
    pub view: usize,
    pub uv: [f64; 2],
}

pub const TABLE1_VIEWS: [usize; 4] = [4, 6, 8, 10];
pub const TABLE1_POINTS: usize = 100;
pub const TABLE1_NOISE_PX: f64 = 2.0;

pub fn make_table1(seed: u64) -> Table1Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec3> = (0..TABLE1_POINTS)
        .map(|_| Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)))
        .collect();
    let noise = Normal::new(0.0, TABLE1_NOISE_PX).expect("valid noise");
    let rigs = TABLE1_VIEWS
        .iter()
        .map(|&n| {
            let cams = make_rig(n, RIG_RADIUS);
            let mut observations = Vec::new();
            let mut clean = Vec::new();
            for p in &points {
                let mut noisy_p = Vec::new();
                let mut clean_p = Vec::new();
                for c in &cams {
                    let uv = c.project(p).expect("points lie in front of every camera");
                    clean_p.push(Table1Obs { view: c.id, uv: [uv.x, uv.y] });
                    noisy_p.push(Table1Obs {
                        view: c.id,
                        uv: [uv.x + noise.sample(&mut rng), uv.y + noise.sample(&mut rng)],
                    });
                }
                observations.push(noisy_p);
                clean.push(clean_p);
            }
            Table1Rig {
                views: n,
                observations,
                clean,
            }
        })
        .collect();
    Table1Fixture {
        seed,
        noise_px: TABLE1_NOISE_PX,
        points: points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        rigs,
    }
}

impl Table1Rig {
    pub fn cameras(&self) -> Vec<CameraParams> {
        make_rig(self.views, RIG_RADIUS)
    }

    pub fn keypoints(&self, point: usize, noisy: bool) -> Vec<KeypointObservation> {
        let src = if noisy { &self.observations } else { &self.clean };
        src[point]
            .iter()
            .map(|o| KeypointObservation {
                view: o.view,
                joint: point,
                uv: Vec2::new(o.uv[0], o.uv[1]),
                confidence: 1.0,
            })
            .collect()
    }
}

/// Two-basin pose scene: the masks hold the object at `truth` and a shrunken
/// copy at `decoy`. Both explain part of every silhouette; only `truth`
/// explains the larger part.
#[derive(Debug, Clone)]
pub struct TwoBasinScene {
    pub cams: Vec<CameraParams>,
    pub template: TriMesh,
    pub truth: PoseSample,
    pub decoy: PoseSample,
    pub masks: Vec<MaskImage>,
    /// Workspace centred on the decoy and reaching [`SearchRegion::MARGIN`]
    /// past the true object.
    pub region: SearchRegion,
}

pub const DECOY_SCALE: f64 = 0.9;

pub fn make_two_basin(seed: u64) -> TwoBasinScene {
    let cams = make_rig(4, RIG_RADIUS);
    let template = lumpy_ellipsoid(3, 60.0, seed);
    let truth = PoseSample::from_parts(&Vec3::new(0.2, 0.1, -0.3), &Vec3::new(150.0, -150.0, 60.0));
    let decoy = PoseSample::from_parts(&Vec3::new(-0.4, 0.3, 0.1), &Vec3::new(0.0, 0.0, 0.0));
    let small = template.with_vertices(template.vertices.iter().map(|v| v * DECOY_SCALE).collect());
    let both = TriMesh::merged(&[truth.apply(&template), decoy.apply(&small)]);
    let masks = render_masks(&both, None, &cams);
    let c = decoy.translation();
    let placed = truth.apply(&template).bbox();
    let half = (placed.max - c).abs().sup(&(placed.min - c).abs()).add_scalar(SearchRegion::MARGIN);
    let region = SearchRegion { min: c - half, max: c + half };
    TwoBasinScene {
        cams,
        template,
        truth,
        decoy,
        masks,
        region,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub frame: usize,
    pub object_alpha: [f64; 6],
    pub hand_theta: Vec<f64>,
    pub hand_joints: Vec<[f64; 3]>,
    pub indentation_mm: f64,
    pub object_mesh: PathBuf,
    pub hand_mesh: PathBuf,
    pub masks: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub provenance: String,
    pub seed: u64,
    pub frames: Vec<GroundTruthFrame>,
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    crate::io::read_json(path)
}

fn frame_name(prefix: &str, frame: usize, ext: &str) -> String {
    format!("{prefix}_{frame:04}.{ext}")
}

/// Writes cameras, hand model, template, per-frame keypoints and masks, the
/// ground truth and `manifest.json` under `dir`; returns the manifest path.
pub fn write_scene(scene: &SynthScene, dir: &Path, fps: f64) -> Result<PathBuf> {
    fn rel(s: impl Into<PathBuf>) -> PathBuf {
        s.into()
    }
    save_cameras(&dir.join("cameras.json"), &scene.cams)?;
    save_hand_model(&dir.join("handmodel.json"), &scene.hand_model, "hand_rest.obj")?;
    save_mesh(&dir.join("object_template.obj"), &scene.template, Some("object template"))?;
    let mut frames = Vec::new();
    let mut gt_frames = Vec::new();
    let header = format!("{PROVENANCE}, seed {}", scene.seed);
    for f in 0..scene.frame_count() {
        let kp = rel(format!("keypoints/{}", frame_name("keypoints", f, "json")));
        save_keypoints(&dir.join(&kp), &scene.keypoints[f])?;
        let mut masks = Vec::new();
        for (v, m) in scene.masks[f].iter().enumerate() {
            let p = rel(format!("masks/mask_{f:04}_{v:02}.pgm"));
            save_mask(&dir.join(&p), m, None)?;
            masks.push(p);
        }
        let gt_masks: Vec<PathBuf> = (0..scene.cams.len()).map(|v| rel(format!("gt/mask_{f:04}_{v:02}.pgm"))).collect();
        for (p, m) in gt_masks.iter().zip(&scene.masks[f]) {
            save_mask(&dir.join(p), m, Some(&header))?;
        }
        let object_mesh = rel(format!("gt/{}", frame_name("object", f, "obj")));
        save_mesh(&dir.join(&object_mesh), &scene.objects[f], Some(&header))?;
        let hand_mesh = rel(format!("gt/{}", frame_name("hand", f, "obj")));
        save_mesh(&dir.join(&hand_mesh), &scene.hand_meshes[f], Some(&header))?;
        gt_frames.push(GroundTruthFrame {
            frame: f,
            object_alpha: scene.object_poses[f].alpha,
            hand_theta: scene.hand_poses[f].to_vec(),
            hand_joints: scene.hand_joints(f).iter().map(|p| [p.x, p.y, p.z]).collect(),
            indentation_mm: scene.indentation[f],
            object_mesh,
            hand_mesh,
            masks: gt_masks,
        });
        frames.push(FrameFiles {
            index: f,
            keypoints: kp,
            masks,
        });
    }
    let gt = GroundTruth {
        provenance: header,
        seed: scene.seed,
        frames: gt_frames,
    };
    crate::io::write_json(&dir.join("gt/ground_truth.json"), &gt)?;
    let manifest = SequenceManifest {
        frame_count: scene.frame_count(),
        fps,
        cameras: rel("cameras.json"),
        hand_model: rel("handmodel.json"),
        object_template: rel("object_template.obj"),
        frames,
        ground_truth: Some(rel("gt/ground_truth.json")),
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    save_manifest(&path, &manifest)?;
    Ok(path)
}

pub fn write_table1(fixture: &Table1Fixture, dir: &Path) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct File<'a> {
        provenance: String,
        #[serde(flatten)]
        fixture: &'a Table1Fixture,
    }
    let path = dir.join("table1.json");
    crate::io::write_json(
        &path,
        &File {
            provenance: format!("{PROVENANCE}, seed {}", fixture.seed),
            fixture,
        },
    )?;
    for rig in &fixture.rigs {
        save_cameras(&dir.join(format!("cameras_{:02}.json", rig.views)), &rig.cameras())?;
    }
    Ok(path)
}

pub fn load_table1(path: &Path) -> Result<Table1Fixture> {
    crate::io::read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{detect_penetrations, AabbTree};
    use crate::object_pose::{PoseFrame, SilhouetteLoss};

    #[test]
    fn rig_geometry() {
        let cams = make_rig(4, 800.0);
        for c in &cams {
            c.validate().unwrap();
            let uv = c.project(&Vec3::zeros()).unwrap();
            assert!((uv - Vec2::new(320.0, 240.0)).norm() < 0.5);
        }
        for i in 0..4 {
            let a = cams[i].r.row(2).transpose();
            let b = cams[(i + 1) % 4].r.row(2).transpose();
            let (a, b) = (Vec2::new(a.x, a.y).normalize(), Vec2::new(b.x, b.y).normalize());
            assert!(a.dot(&b).abs() < 1e-12);
        }
        for c in make_rig(10, 800.0) {
            c.validate().unwrap();
        }
    }

    #[test]
    fn lumpy_ellipsoid_is_closed() {
        let m = lumpy_ellipsoid(3, 100.0, 5);
        m.check_closed_genus0().unwrap();
        let r: Vec<f64> = m.vertices.iter().map(|v| v.norm()).collect();
        let (lo, hi) = r.iter().fold((f64::MAX, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!(lo < 95.0 && hi > 110.0, "{lo} {hi}");
        assert_eq!(lumpy_ellipsoid(3, 100.0, 5).vertices, m.vertices);
    }

    #[test]
    fn press_scene_ground_truth() {
        let s = make_press_sequence(3, 4, 11);
        let tree = AabbTree::build(&s.hand_meshes[0]);
        let rigid0 = s.rigid_object(0);
        assert!(detect_penetrations(&rigid0, &s.hand_meshes[0], &tree).unwrap().is_empty());
        let tree2 = AabbTree::build(&s.hand_meshes[2]);
        let pairs = detect_penetrations(&s.rigid_object(2), &s.hand_meshes[2], &tree2).unwrap();
        let deepest = pairs.iter().map(|p| p.depth).fold(0.0, f64::max);
        assert!((deepest - MAX_INDENTATION).abs() < 1.0, "{deepest}");
        let frame = PoseFrame {
            template: &s.template,
            hand: Some(&s.hand_meshes[0]),
            masks: &s.masks[0],
            cams: &s.cams,
        };
        let ev = SilhouetteLoss::new(&frame, 1).unwrap();
        assert!(ev.view_terms(&s.object_poses[0].alpha).iter().all(|d| *d == 0.0));
        for m in &s.masks[0] {
            assert!(m.count() > 1000);
        }
        for w in s.object_poses.windows(2) {
            assert!((w[1].translation() - w[0].translation()).norm() <= 1.0);
            let ang = crate::geometry::rotation_angle_between(&w[0].rotation(), &w[1].rotation());
            assert!(ang <= 1f64.to_radians());
        }
        let again = make_press_sequence(3, 4, 11);
        assert_eq!(again.masks, s.masks);
        assert_eq!(again.objects[2].vertices, s.objects[2].vertices);
    }

    #[test]
    fn scene_files_round_trip() {
        let s = make_press_sequence(2, 3, 4);
        let dir = tempfile::tempdir().unwrap();
        let mp = write_scene(&s, dir.path(), 30.0).unwrap();
        let m = crate::io::manifest::load_manifest(&mp).unwrap();
        assert!(m.missing_files().is_empty());
        let gt = load_ground_truth(&m.resolve(m.ground_truth.as_ref().unwrap())).unwrap();
        assert_eq!(gt.frames[1].object_alpha, s.object_poses[1].alpha);
        let text = std::fs::read_to_string(dir.path().join(&gt.frames[0].object_mesh)).unwrap();
        assert!(text.starts_with("# synthetic ground truth"));
    }

    #[test]
    fn table1_fixture_shape() {
        let t = make_table1(3);
        assert_eq!(t.points.len(), TABLE1_POINTS);
        assert_eq!(t.rigs.len(), 4);
        assert_eq!(t.rigs[3].observations[0].len(), 10);
    }
}
