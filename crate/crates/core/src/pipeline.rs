//! Per-sequence orchestration. Frames run strictly in order through hand
//! tracking, object pose, deformation and contact maps; every frame leaves its
//! own files so a run can be inspected, diffed and resumed.
//!
//! Per-frame outputs in the run directory: `hand_<f>.obj`, `object_<f>.obj`,
//! `trace_<f>.csv`, `contactmap_<f>.csv` and `pose_<f>.json`. The pose file is
//! written last and marks the frame complete. `config.json` holds the
//! effective configuration, `report.json` the final evaluation and
//! `timings.json` the wall-clock per stage (the only file that differs between
//! otherwise identical runs).

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::contact::{compute_contact_map, intersection_volume};
use crate::deform::solver::trace_csv;
use crate::deform::{build_graph, solve_deformation, DeformConfig, DeformFrame, DeformGraph, DeformResult};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, FrameEvalInput, StageTiming};
use crate::geometry::Vec3;
use crate::hand::model::load_hand_model;
use crate::hand::solve::rest_aligned_pose;
use crate::hand::{
    forward_kinematics, skin_hand, smooth_pose, solve_hand_pose, triangulate_skeleton, HandModel, HandPose,
    HandSolveConfig, Skeleton3D,
};
use crate::io::camera::{load_cameras, CameraParams};
use crate::io::keypoints::{load_keypoints, KeypointObservation};
use crate::io::manifest::{load_manifest, SequenceManifest};
use crate::io::mask::{load_view_mask, MaskImage};
use crate::io::obj::{load_mesh, save_mesh};
use crate::io::outputs::{
    contact_map_path, hand_mesh_path, load_pose, object_mesh_path, pose_path, save_contact_map, save_pose,
    trace_path, FramePose,
};
use crate::mesh::TriMesh;
use crate::object_pose::{estimate_pose, smooth_object_pose, GaConfig, PoseFrame, PoseSample, SearchRegion};
use crate::par;
use crate::raster::{rasterize, Label};
use crate::synth::{load_ground_truth, render_masks, GroundTruth};

pub const STAGE_HAND: &str = "hand_capture";
pub const STAGE_OBJECT: &str = "object_pose";
pub const STAGE_DEFORM: &str = "deform";
pub const STAGE_CONTACT: &str = "contact_map";
pub const STAGE_EVAL: &str = "eval";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub hand: bool,
    pub object_pose: bool,
    pub deform: bool,
    pub contact_map: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            hand: true,
            object_pose: true,
            deform: true,
            contact_map: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stages: StageToggles,
    pub hand: HandSolveConfig,
    pub hand_smoothing_alpha: f64,
    pub object_pose: GaConfig,
    pub deform: DeformConfig,
    /// Voxel pitch of intersection volumes in the report, mm.
    pub voxel_mm: f64,
    pub log_level: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stages: StageToggles::default(),
            hand: HandSolveConfig::default(),
            hand_smoothing_alpha: crate::hand::DEFAULT_SMOOTHING_ALPHA,
            object_pose: GaConfig::default(),
            deform: DeformConfig::default(),
            voxel_mm: 1.0,
            log_level: "info".into(),
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Defaults overlaid with the fields present in `path`.
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig> {
        match path {
            None => Ok(PipelineConfig::default()),
            Some(p) => {
                let text = crate::io::read_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        self.hand.validate()?;
        self.object_pose.validate()?;
        self.deform.validate()?;
        if !(self.hand_smoothing_alpha > 0.0 && self.hand_smoothing_alpha <= 1.0) {
            return bad("hand smoothing alpha must be in (0, 1]");
        }
        if !(self.voxel_mm > 0.0 && self.voxel_mm.is_finite()) {
            return bad("voxel_mm must be positive");
        }
        if self.log_level.parse::<log::LevelFilter>().is_err() {
            return bad("log_level must be one of off, error, warn, info, debug, trace");
        }
        let s = &self.stages;
        if s.deform && !s.object_pose {
            return bad("the deform stage needs the object_pose stage");
        }
        if s.contact_map && !s.deform {
            return bad("the contact_map stage needs the deform stage");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Everything shared by all frames of a sequence.
#[derive(Debug, Clone)]
pub struct SequenceInputs {
    pub manifest: SequenceManifest,
    pub cams: Vec<CameraParams>,
    pub hand_model: HandModel,
    pub template: TriMesh,
}

impl SequenceInputs {
    pub fn load(manifest_path: &Path) -> Result<SequenceInputs> {
        let manifest = load_manifest(manifest_path)?;
        let cams = load_cameras(&manifest.resolve(&manifest.cameras))?;
        let hand_model = load_hand_model(&manifest.resolve(&manifest.hand_model))?;
        let template = load_mesh(&manifest.resolve(&manifest.object_template))?;
        template.check_watertight()?;
        for (i, f) in manifest.frames.iter().enumerate() {
            if f.masks.len() != cams.len() {
                return Err(Error::InvalidInput(format!(
                    "frame {i} lists {} masks for {} cameras",
                    f.masks.len(),
                    cams.len()
                )));
            }
        }
        Ok(SequenceInputs {
            manifest,
            cams,
            hand_model,
            template,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.manifest.frame_count
    }

    pub fn keypoints(&self, frame: usize) -> Result<Vec<KeypointObservation>> {
        load_keypoints(&self.manifest.resolve(&self.manifest.frames[frame].keypoints))
    }

    pub fn masks(&self, frame: usize) -> Result<Vec<MaskImage>> {
        self.manifest.frames[frame]
            .masks
            .iter()
            .zip(&self.cams)
            .map(|(p, c)| load_view_mask(&self.manifest.resolve(p), c))
            .collect()
    }

    pub fn ground_truth(&self) -> Result<Option<GroundTruth>> {
        match &self.manifest.ground_truth {
            None => Ok(None),
            Some(p) => {
                let gt = load_ground_truth(&self.manifest.resolve(p))?;
                if gt.frames.len() != self.frame_count() {
                    return Err(Error::InvalidInput(format!(
                        "ground truth has {} frames, manifest {}",
                        gt.frames.len(),
                        self.frame_count()
                    )));
                }
                Ok(Some(gt))
            }
        }
    }
}

fn stage_err(frame: usize, stage: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        frame,
        stage,
        source: Box::new(e),
    }
}

/// Hand tracking with warm start and smoothing.
pub struct HandTracker<'a> {
    model: &'a HandModel,
    cams: &'a [CameraParams],
    cfg: HandSolveConfig,
    alpha: f64,
    prev_raw: Option<HandPose>,
    prev_smoothed: Option<HandPose>,
}

#[derive(Debug, Clone)]
pub struct HandStep {
    pub raw: HandPose,
    pub smoothed: HandPose,
    pub joints: Skeleton3D,
    pub mesh: TriMesh,
}

impl<'a> HandTracker<'a> {
    pub fn new(model: &'a HandModel, cams: &'a [CameraParams], cfg: HandSolveConfig, alpha: f64) -> Self {
        HandTracker {
            model,
            cams,
            cfg,
            alpha,
            prev_raw: None,
            prev_smoothed: None,
        }
    }

    pub fn resume(&mut self, raw: HandPose, smoothed: HandPose) {
        self.prev_raw = Some(raw);
        self.prev_smoothed = Some(smoothed);
    }

    pub fn step(&mut self, frame: usize, obs: &[KeypointObservation]) -> HandStep {
        let kp3d = triangulate_skeleton(obs, self.cams, self.model.joint_count(), self.cfg.conf_threshold);
        let init = match &self.prev_raw {
            Some(p) => HandPose { frame, ..p.clone() },
            None => rest_aligned_pose(self.model, &kp3d, frame),
        };
        let report = solve_hand_pose(self.model, &kp3d, obs, self.cams, &init, &self.cfg);
        let raw = report.pose;
        let smoothed = smooth_pose(self.prev_smoothed.as_slice(), &raw, self.alpha);
        self.prev_raw = Some(raw.clone());
        self.prev_smoothed = Some(smoothed.clone());
        HandStep {
            joints: forward_kinematics(self.model, &smoothed).0,
            mesh: skin_hand(self.model, &smoothed),
            raw,
            smoothed,
        }
    }
}

/// Object pose search, warm-started from the previous frame, with smoothing.
pub struct ObjectTracker {
    cfg: GaConfig,
    prev_raw: Option<PoseSample>,
    prev_smoothed: Option<PoseSample>,
}

impl ObjectTracker {
    pub fn new(cfg: GaConfig) -> Self {
        ObjectTracker {
            cfg,
            prev_raw: None,
            prev_smoothed: None,
        }
    }

    pub fn resume(&mut self, raw: PoseSample, smoothed: PoseSample) {
        self.prev_raw = Some(raw);
        self.prev_smoothed = Some(smoothed);
    }

    /// Returns the raw and the smoothed pose.
    pub fn step(
        &mut self,
        frame: usize,
        template: &TriMesh,
        hand: Option<&TriMesh>,
        masks: &[MaskImage],
        cams: &[CameraParams],
    ) -> Result<(PoseSample, PoseSample)> {
        let pf = PoseFrame {
            template,
            hand,
            masks,
            cams,
        };
        let region = match self.prev_raw {
            Some(_) => SearchRegion::around(&template.bbox()),
            None => SearchRegion::from_silhouettes(masks, cams)
                .ok_or_else(|| Error::InvalidInput("object mask is empty in all but one view".into()))?,
        };
        let report = estimate_pose(&pf, frame, self.prev_raw.as_ref(), &region, &self.cfg)?;
        let raw = report.best;
        let smoothed = smooth_object_pose(self.prev_smoothed.as_ref(), &raw, self.cfg.smoothing_alpha);
        self.prev_raw = Some(raw);
        self.prev_smoothed = Some(smoothed);
        Ok((raw, smoothed))
    }
}

/// Deformation with the previous frame's result carried into the temporal
/// term.
pub struct Deformer {
    graph: DeformGraph,
    cfg: DeformConfig,
    prev: Option<(PoseSample, Vec<Vec3>)>,
}

impl Deformer {
    pub fn new(template: &TriMesh, cfg: DeformConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Deformer {
            graph: build_graph(template, cfg.node_spacing, cfg.k_neighbors)?,
            cfg,
            prev: None,
        })
    }

    pub fn resume(&mut self, pose: PoseSample, vertices: Vec<Vec3>) {
        self.prev = Some((pose, vertices));
    }

    pub fn step(
        &mut self,
        frame: usize,
        template: &TriMesh,
        pose: &PoseSample,
        hand: Option<&TriMesh>,
        masks: &[MaskImage],
        cams: &[CameraParams],
    ) -> Result<DeformResult> {
        let rest = pose.apply(template);
        let last = self.prev.as_ref().map(|(p, v)| p.carry_to(pose, v));
        let df = DeformFrame {
            frame,
            rest: &rest,
            graph: self.graph.posed(&pose.rotation(), &pose.translation()),
            hand,
            masks,
            cams,
            last: last.as_deref(),
        };
        let out = solve_deformation(&df, &self.cfg)?;
        self.prev = Some((*pose, out.mesh.vertices.clone()));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub frames_run: usize,
    pub frames_skipped: usize,
    pub stages: Vec<StageTiming>,
}

impl RunTimings {
    fn add(&mut self, stage: &str, since: Instant) {
        let s = since.elapsed().as_secs_f64();
        match self.stages.iter_mut().find(|t| t.stage == stage) {
            Some(t) => t.seconds += s,
            None => self.stages.push(StageTiming {
                stage: stage.to_string(),
                seconds: s,
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub report: EvalReport,
    pub timings: RunTimings,
}

fn expected_outputs(cfg: &PipelineConfig, out: &Path, frame: usize) -> Vec<PathBuf> {
    let mut v = vec![pose_path(out, frame)];
    if cfg.stages.hand {
        v.push(hand_mesh_path(out, frame));
    }
    if cfg.stages.object_pose {
        v.push(object_mesh_path(out, frame));
    }
    if cfg.stages.deform {
        v.push(trace_path(out, frame));
    }
    if cfg.stages.contact_map {
        v.push(contact_map_path(out, frame));
    }
    v
}

fn save_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    save_mesh(path, mesh, None)
}

/// Runs every enabled stage on every frame and writes the final report. With
/// `resume`, leading frames whose outputs are all present are skipped and the
/// trackers restart from the last of them.
pub fn run_pipeline(inputs: &SequenceInputs, cfg: &PipelineConfig, out: &Path, resume: bool) -> Result<PipelineSummary> {
    cfg.validate()?;
    let n = inputs.frame_count();
    // The run directory is left out so that runs written to different
    // directories stay byte-identical.
    let recorded = PipelineConfig {
        output_dir: None,
        ..cfg.clone()
    };
    crate::io::write_bytes(&out.join("config.json"), format!("{}\n", recorded.to_json()).as_bytes())?;
    let mut timings = RunTimings {
        frames_run: 0,
        frames_skipped: 0,
        stages: Vec::new(),
    };
    let mut hand = HandTracker::new(&inputs.hand_model, &inputs.cams, cfg.hand.clone(), cfg.hand_smoothing_alpha);
    let mut object = ObjectTracker::new(cfg.object_pose.clone());
    let mut deformer = if cfg.stages.deform {
        Some(Deformer::new(&inputs.template, cfg.deform.clone())?)
    } else {
        None
    };
    let mut start = 0;
    if resume {
        while start < n && expected_outputs(cfg, out, start).iter().all(|p| p.is_file()) {
            start += 1;
        }
        if start > 0 {
            let f = start - 1;
            restore(inputs, cfg, out, f, &mut hand, &mut object, deformer.as_mut()).map_err(stage_err(f, "resume"))?;
            log::info!("resuming after frame {f}");
        }
    }
    timings.frames_skipped = start;
    for f in start..n {
        let mut pose = FramePose {
            frame: f,
            ..Default::default()
        };
        let mut hand_mesh = None;
        if cfg.stages.hand {
            let t = Instant::now();
            let obs = inputs.keypoints(f).map_err(stage_err(f, STAGE_HAND))?;
            let step = hand.step(f, &obs);
            save_obj(&hand_mesh_path(out, f), &step.mesh).map_err(stage_err(f, STAGE_HAND))?;
            pose.hand_theta = Some(step.smoothed.to_vec());
            pose.hand_theta_raw = Some(step.raw.to_vec());
            hand_mesh = Some(step.mesh);
            timings.add(STAGE_HAND, t);
        }
        if cfg.stages.object_pose {
            let t = Instant::now();
            let masks = inputs.masks(f).map_err(stage_err(f, STAGE_OBJECT))?;
            let (raw, smoothed) = object
                .step(f, &inputs.template, hand_mesh.as_ref(), &masks, &inputs.cams)
                .map_err(stage_err(f, STAGE_OBJECT))?;
            pose.object_alpha = Some(smoothed.alpha);
            pose.object_alpha_raw = Some(raw.alpha);
            pose.object_loss = Some(raw.loss);
            timings.add(STAGE_OBJECT, t);
            let rigid = smoothed.apply(&inputs.template);
            let mesh = match deformer.as_mut() {
                Some(d) => {
                    let t = Instant::now();
                    let res = d
                        .step(f, &inputs.template, &smoothed, hand_mesh.as_ref(), &masks, &inputs.cams)
                        .map_err(stage_err(f, STAGE_DEFORM))?;
                    crate::io::write_bytes(&trace_path(out, f), trace_csv(&res.trace).as_bytes())
                        .map_err(stage_err(f, STAGE_DEFORM))?;
                    timings.add(STAGE_DEFORM, t);
                    res.mesh
                }
                None => rigid.clone(),
            };
            save_obj(&object_mesh_path(out, f), &mesh).map_err(stage_err(f, STAGE_OBJECT))?;
            if cfg.stages.contact_map {
                let t = Instant::now();
                let map = compute_contact_map(&rigid, &mesh).map_err(stage_err(f, STAGE_CONTACT))?;
                save_contact_map(&contact_map_path(out, f), &map).map_err(stage_err(f, STAGE_CONTACT))?;
                timings.add(STAGE_CONTACT, t);
            }
        }
        save_pose(&pose_path(out, f), &pose).map_err(stage_err(f, STAGE_OBJECT))?;
        timings.frames_run += 1;
        log::info!("frame {f} done");
    }
    let t = Instant::now();
    let report = evaluate_run(inputs, out, cfg.voxel_mm)?;
    report.save(&out.join("report.json"))?;
    timings.add(STAGE_EVAL, t);
    crate::io::write_json(&out.join("timings.json"), &timings)?;
    Ok(PipelineSummary { report, timings })
}

fn restore(
    inputs: &SequenceInputs,
    cfg: &PipelineConfig,
    out: &Path,
    f: usize,
    hand: &mut HandTracker,
    object: &mut ObjectTracker,
    deformer: Option<&mut Deformer>,
) -> Result<()> {
    let p = load_pose(&pose_path(out, f))?;
    let missing = |what: &str| Error::InvalidInput(format!("pose file of frame {f} has no {what}"));
    if cfg.stages.hand {
        let raw = p.hand_theta_raw.as_ref().ok_or_else(|| missing("hand_theta_raw"))?;
        let smoothed = p.hand_theta.as_ref().ok_or_else(|| missing("hand_theta"))?;
        if raw.len() != inputs.hand_model.parameter_count() || smoothed.len() != raw.len() {
            return Err(Error::InvalidInput(format!("hand parameters of frame {f} do not match the model")));
        }
        hand.resume(HandPose::from_vec(f, raw), HandPose::from_vec(f, smoothed));
    }
    if cfg.stages.object_pose {
        let raw = p.object_alpha_raw.ok_or_else(|| missing("object_alpha_raw"))?;
        let smoothed = p.object_alpha.ok_or_else(|| missing("object_alpha"))?;
        let loss = p.object_loss.unwrap_or(f64::INFINITY);
        let raw = PoseSample { alpha: raw, loss };
        let smoothed = PoseSample { alpha: smoothed, loss };
        object.resume(raw, smoothed);
        if let Some(d) = deformer {
            let mesh = load_mesh(&object_mesh_path(out, f))?;
            if mesh.vertices.len() != inputs.template.vertices.len() {
                return Err(Error::InvalidInput(format!("object mesh of frame {f} does not match the template")));
            }
            d.resume(smoothed, mesh.vertices);
        }
    }
    Ok(())
}

/// Evaluates the outputs in `pred` against the sequence. With ground truth
/// the joints, masks and meshes of the ground truth are used; otherwise masks
/// are compared with the input masks and joint errors are left empty.
pub fn evaluate_run(inputs: &SequenceInputs, pred: &Path, voxel_mm: f64) -> Result<EvalReport> {
    let gt = inputs.ground_truth()?;
    struct Data {
        frame: usize,
        joints: Option<(Skeleton3D, Skeleton3D)>,
        masks: Option<(Vec<MaskImage>, Vec<MaskImage>)>,
        volume: Option<f64>,
    }
    let n = inputs.frame_count();
    let frames: Vec<usize> = (0..n).filter(|&f| pose_path(pred, f).is_file()).collect();
    let data = par::map_slice(&frames, |&f| -> Result<Data> {
        let pose = load_pose(&pose_path(pred, f))?;
        let joints = match (&gt, &pose.hand_theta) {
            (Some(g), Some(theta)) => {
                if theta.len() != inputs.hand_model.parameter_count() {
                    return Err(Error::InvalidInput(format!("hand parameters of frame {f} do not match the model")));
                }
                let p = forward_kinematics(&inputs.hand_model, &HandPose::from_vec(f, theta)).0;
                let g = Skeleton3D::all_valid(g.frames[f].hand_joints.iter().map(|j| Vec3::new(j[0], j[1], j[2])).collect());
                Some((p, g))
            }
            _ => None,
        };
        let hand_path = hand_mesh_path(pred, f);
        let hand = if hand_path.is_file() { Some(load_mesh(&hand_path)?) } else { None };
        let obj_path = object_mesh_path(pred, f);
        let object = if obj_path.is_file() {
            Some(load_mesh(&obj_path)?)
        } else {
            pose.object_alpha.map(|a| PoseSample::new(a).apply(&inputs.template))
        };
        let (mut masks, mut volume) = (None, None);
        if let Some(obj) = &object {
            let pm = render_masks(obj, hand.as_ref(), &inputs.cams);
            let gm = match &gt {
                Some(g) => g.frames[f]
                    .masks
                    .iter()
                    .zip(&inputs.cams)
                    .map(|(p, c)| load_view_mask(&inputs.manifest.resolve(p), c))
                    .collect::<Result<Vec<_>>>()?,
                None => inputs.masks(f)?,
            };
            masks = Some((pm, gm));
            if let Some(h) = &hand {
                volume = Some(intersection_volume(obj, h, voxel_mm)?);
            }
        }
        Ok(Data {
            frame: f,
            joints,
            masks,
            volume,
        })
    });
    let data: Vec<Data> = data
        .into_iter()
        .zip(&frames)
        .map(|(d, &f)| d.map_err(stage_err(f, STAGE_EVAL)))
        .collect::<Result<_>>()?;
    let inputs: Vec<FrameEvalInput> = data
        .iter()
        .map(|d| FrameEvalInput {
            frame: d.frame,
            joints: d.joints.as_ref().map(|(p, g)| (p, g)),
            masks: d.masks.as_ref().map(|(p, g)| (p.as_slice(), g.as_slice())),
            intersection_cm3: d.volume,
        })
        .collect();
    EvalReport::from_frames(&inputs)
}

/// Process exit code for a failed run: 3 for invalid inputs or configuration
/// found before any frame ran, 2 for a failure inside a stage.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Stage { .. } => 2,
        e if e.is_input_error() => 3,
        _ => 2,
    }
}

/// Loads the pose files of `dir` for every frame; frames without a file are
/// `None`.
pub fn load_poses(dir: &Path, frames: usize) -> Result<Vec<Option<FramePose>>> {
    (0..frames)
        .map(|f| {
            let p = pose_path(dir, f);
            if p.is_file() {
                load_pose(&p).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Hand stage alone: writes `pose_<f>.json` with hand parameters and
/// `hand_<f>.obj`.
pub fn run_hand_stage(inputs: &SequenceInputs, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    cfg.hand.validate()?;
    let mut tracker = HandTracker::new(&inputs.hand_model, &inputs.cams, cfg.hand.clone(), cfg.hand_smoothing_alpha);
    for f in 0..inputs.frame_count() {
        let obs = inputs.keypoints(f).map_err(stage_err(f, STAGE_HAND))?;
        let step = tracker.step(f, &obs);
        save_obj(&hand_mesh_path(out, f), &step.mesh).map_err(stage_err(f, STAGE_HAND))?;
        let pose = FramePose {
            frame: f,
            hand_theta: Some(step.smoothed.to_vec()),
            hand_theta_raw: Some(step.raw.to_vec()),
            ..Default::default()
        };
        save_pose(&pose_path(out, f), &pose).map_err(stage_err(f, STAGE_HAND))?;
    }
    Ok(())
}

/// Hand mesh of frame `f` from a hand stage directory.
fn stage_hand_mesh(inputs: &SequenceInputs, dir: &Path, f: usize) -> Result<TriMesh> {
    let mesh = hand_mesh_path(dir, f);
    if mesh.is_file() {
        return load_mesh(&mesh);
    }
    let pose = load_pose(&pose_path(dir, f))?;
    let theta = pose
        .hand_theta
        .ok_or_else(|| Error::InvalidInput(format!("{} has no hand parameters", pose_path(dir, f).display())))?;
    Ok(skin_hand(&inputs.hand_model, &HandPose::from_vec(f, &theta)))
}

fn stage_object_pose(dir: &Path, f: usize) -> Result<PoseSample> {
    let p = pose_path(dir, f);
    let pose = load_pose(&p)?;
    pose.object_alpha
        .map(PoseSample::new)
        .ok_or_else(|| Error::InvalidInput(format!("{} has no object pose", p.display())))
}

/// Object pose stage alone, optionally with hand occlusion from a hand stage
/// directory: writes `pose_<f>.json` with object fields.
pub fn run_object_stage(inputs: &SequenceInputs, hand_dir: Option<&Path>, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    cfg.object_pose.validate()?;
    let mut tracker = ObjectTracker::new(cfg.object_pose.clone());
    for f in 0..inputs.frame_count() {
        let hand = hand_dir
            .map(|d| stage_hand_mesh(inputs, d, f))
            .transpose()
            .map_err(stage_err(f, STAGE_OBJECT))?;
        let masks = inputs.masks(f).map_err(stage_err(f, STAGE_OBJECT))?;
        let (raw, smoothed) = tracker
            .step(f, &inputs.template, hand.as_ref(), &masks, &inputs.cams)
            .map_err(stage_err(f, STAGE_OBJECT))?;
        let pose = FramePose {
            frame: f,
            object_alpha: Some(smoothed.alpha),
            object_alpha_raw: Some(raw.alpha),
            object_loss: Some(raw.loss),
            ..Default::default()
        };
        save_pose(&pose_path(out, f), &pose).map_err(stage_err(f, STAGE_OBJECT))?;
    }
    Ok(())
}

/// Deformation stage alone from object poses and optional hand meshes:
/// writes `object_<f>.obj` and `trace_<f>.csv`.
pub fn run_deform_stage(
    inputs: &SequenceInputs,
    objpose_dir: &Path,
    hand_dir: Option<&Path>,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<()> {
    let mut deformer = Deformer::new(&inputs.template, cfg.deform.clone())?;
    for f in 0..inputs.frame_count() {
        let pose = stage_object_pose(objpose_dir, f).map_err(stage_err(f, STAGE_DEFORM))?;
        let hand = hand_dir
            .map(|d| stage_hand_mesh(inputs, d, f))
            .transpose()
            .map_err(stage_err(f, STAGE_DEFORM))?;
        let masks = inputs.masks(f).map_err(stage_err(f, STAGE_DEFORM))?;
        let res = deformer
            .step(f, &inputs.template, &pose, hand.as_ref(), &masks, &inputs.cams)
            .map_err(stage_err(f, STAGE_DEFORM))?;
        save_obj(&object_mesh_path(out, f), &res.mesh).map_err(stage_err(f, STAGE_DEFORM))?;
        crate::io::write_bytes(&trace_path(out, f), trace_csv(&res.trace).as_bytes()).map_err(stage_err(f, STAGE_DEFORM))?;
    }
    Ok(())
}

/// Contact maps from object poses and deformed meshes: writes
/// `contactmap_<f>.csv`.
pub fn run_contact_stage(inputs: &SequenceInputs, objpose_dir: &Path, meshes_dir: &Path, out: &Path) -> Result<()> {
    for f in 0..inputs.frame_count() {
        let run = || -> Result<()> {
            let pose = stage_object_pose(objpose_dir, f)?;
            let deformed = load_mesh(&object_mesh_path(meshes_dir, f))?;
            let map = compute_contact_map(&pose.apply(&inputs.template), &deformed)?;
            save_contact_map(&contact_map_path(out, f), &map)
        };
        run().map_err(stage_err(f, STAGE_CONTACT))?;
    }
    Ok(())
}

/// Writes the label plane of every view and frame as `render_<f>_<v>.pgm`
/// (0 empty, 128 hand, 255 object), rasterizing the object meshes (or the
/// posed template) and hand meshes found in `run_dir`.
pub fn dump_renders(inputs: &SequenceInputs, run_dir: &Path, dump_dir: &Path) -> Result<usize> {
    let mut written = 0;
    for f in 0..inputs.frame_count() {
        let obj_path = object_mesh_path(run_dir, f);
        let object = if obj_path.is_file() {
            Some(load_mesh(&obj_path)?)
        } else if pose_path(run_dir, f).is_file() {
            load_pose(&pose_path(run_dir, f))?
                .object_alpha
                .map(|a| PoseSample::new(a).apply(&inputs.template))
        } else {
            None
        };
        let hand_path = hand_mesh_path(run_dir, f);
        let hand = if hand_path.is_file() { Some(load_mesh(&hand_path)?) } else { None };
        let mut meshes = Vec::new();
        if let Some(h) = &hand {
            meshes.push((h, Label::Hand));
        }
        if let Some(o) = &object {
            meshes.push((o, Label::Object));
        }
        if meshes.is_empty() {
            continue;
        }
        for (v, cam) in inputs.cams.iter().enumerate() {
            let buf = rasterize(&meshes, cam);
            crate::io::write_bytes(&dump_dir.join(format!("render_{f:04}_{v:02}.pgm")), &buf.label_pgm())?;
            written += 1;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"object_pose": {"population_size": 40}, "stages": {"contact_map": false}}"#).unwrap();
        let c = PipelineConfig::load(Some(&p)).unwrap();
        assert_eq!(c.object_pose.population_size, 40);
        assert_eq!(c.object_pose.iterations, GaConfig::default().iterations);
        assert!(!c.stages.contact_map && c.stages.deform);
        c.validate().unwrap();
        let again: PipelineConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn bad_configs_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"object_pose": {"populaton_size": 40}}"#).unwrap();
        assert!(matches!(PipelineConfig::load(Some(&p)), Err(Error::InvalidConfig(_))));
        let mut c = PipelineConfig::default();
        c.stages.object_pose = false;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.object_pose.population_size = 1;
        assert!(c.validate().is_err());
        let c = PipelineConfig {
            log_level: "loud".into(),
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn exit_codes() {
        let input = Error::InvalidInput("x".into());
        assert_eq!(exit_code(&input), 3);
        assert_eq!(exit_code(&Error::Graph("x".into())), 2);
        let staged = Error::Stage {
            frame: 2,
            stage: STAGE_OBJECT,
            source: Box::new(input),
        };
        assert_eq!(exit_code(&staged), 2);
        assert!(staged.to_string().contains("frame 2, stage object_pose"));
    }
}
