//! Evaluation: mask mIoU, joint error, intersection volume, the per-term
//! deformation ablation and the triangulation error sweep.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contact::intersection_volume;
use crate::deform::{build_graph, solve_deformation, DeformConfig, DeformFrame, Lambdas};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hand::{triangulate_keypoint, Skeleton3D, DEFAULT_CONF_THRESHOLD};
use crate::io::mask::MaskImage;
use crate::par;
use crate::synth::{render_masks, SynthScene, Table1Fixture};

/// How mask IoUs are averaged; written into every report.
pub const MIOU_AVERAGING: &str = "flat mean of IoU over (frame, view) pairs; pairs with an empty union are skipped and counted";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiouSummary {
    /// Percent. 100 when every pair has an empty union.
    pub percent: f64,
    /// Pairs that entered the mean.
    pub pairs: usize,
    pub empty_union: usize,
}

/// Mean IoU in percent over aligned mask pairs.
pub fn miou(pred: &[MaskImage], gt: &[MaskImage]) -> Result<MiouSummary> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!("{} predicted masks vs {} ground-truth masks", pred.len(), gt.len())));
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    let mut empty_union = 0;
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        if !p.same_size(g) {
            return Err(Error::InvalidInput(format!(
                "mask pair {i}: {}x{} vs {}x{}",
                p.width, p.height, g.width, g.height
            )));
        }
        let (inter, union) = p.intersection_union(g);
        if union == 0 {
            empty_union += 1;
        } else {
            sum += inter as f64 / union as f64;
            pairs += 1;
        }
    }
    let percent = if pairs == 0 { 100.0 } else { 100.0 * sum / pairs as f64 };
    Ok(MiouSummary {
        percent,
        pairs,
        empty_union,
    })
}

/// Mean and population standard deviation (mm) of the distances between
/// joints valid in both skeletons.
pub fn joint_error(pred: &Skeleton3D, gt: &Skeleton3D) -> Result<(f64, f64)> {
    if pred.joints.len() != gt.joints.len() {
        return Err(Error::InvalidInput(format!("{} vs {} joints", pred.joints.len(), gt.joints.len())));
    }
    let d: Vec<f64> = (0..pred.joints.len())
        .filter(|&j| pred.valid[j] && gt.valid[j])
        .map(|j| (pred.joints[j] - gt.joints[j]).norm())
        .collect();
    mean_std(&d).ok_or_else(|| Error::InvalidInput("no joint is valid in both skeletons".into()))
}

pub(crate) fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub joint_error_mean_mm: Option<f64>,
    pub joint_error_std_mm: Option<f64>,
    pub miou_percent: Option<f64>,
    pub intersection_cm3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    /// Over all valid joints of all frames.
    pub joint_error_mean_mm: Option<f64>,
    pub joint_error_std_mm: Option<f64>,
    pub miou: Option<MiouSummary>,
    /// Mean over frames.
    pub intersection_cm3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    /// `None` for the undeformed initialization.
    pub lambdas: Option<Lambdas>,
    pub miou_percent: f64,
    pub intersection_cm3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou_averaging: String,
    pub frames: Vec<FrameMetrics>,
    pub aggregate: AggregateMetrics,
    #[serde(default)]
    pub timings: Vec<StageTiming>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablation: Vec<AblationRow>,
}

/// Inputs of one evaluated frame. Missing parts leave the matching metric
/// empty.
#[derive(Debug, Clone, Default)]
pub struct FrameEvalInput<'a> {
    pub frame: usize,
    pub joints: Option<(&'a Skeleton3D, &'a Skeleton3D)>,
    pub masks: Option<(&'a [MaskImage], &'a [MaskImage])>,
    pub intersection_cm3: Option<f64>,
}

impl EvalReport {
    pub fn from_frames(inputs: &[FrameEvalInput]) -> Result<EvalReport> {
        let mut frames = Vec::with_capacity(inputs.len());
        let mut dists = Vec::new();
        let (mut all_pred, mut all_gt) = (Vec::new(), Vec::new());
        let mut vols = Vec::new();
        for f in inputs {
            let (mut je_mean, mut je_std) = (None, None);
            if let Some((p, g)) = f.joints {
                let (m, s) = joint_error(p, g)?;
                je_mean = Some(m);
                je_std = Some(s);
                dists.extend(
                    (0..p.joints.len())
                        .filter(|&j| p.valid[j] && g.valid[j])
                        .map(|j| (p.joints[j] - g.joints[j]).norm()),
                );
            }
            let mut fm = None;
            if let Some((p, g)) = f.masks {
                fm = Some(miou(p, g)?.percent);
                all_pred.extend_from_slice(p);
                all_gt.extend_from_slice(g);
            }
            if let Some(v) = f.intersection_cm3 {
                vols.push(v);
            }
            frames.push(FrameMetrics {
                frame: f.frame,
                joint_error_mean_mm: je_mean,
                joint_error_std_mm: je_std,
                miou_percent: fm,
                intersection_cm3: f.intersection_cm3,
            });
        }
        let je = mean_std(&dists);
        let aggregate = AggregateMetrics {
            joint_error_mean_mm: je.map(|x| x.0),
            joint_error_std_mm: je.map(|x| x.1),
            miou: if all_gt.is_empty() { None } else { Some(miou(&all_pred, &all_gt)?) },
            intersection_cm3: mean_std(&vols).map(|x| x.0),
        };
        Ok(EvalReport {
            miou_averaging: MIOU_AVERAGING.to_string(),
            frames,
            aggregate,
            timings: Vec::new(),
            ablation: Vec::new(),
        })
    }

    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut s = format!("# mIoU: {}\n", self.miou_averaging);
        s.push_str("frame,joint_error_mean_mm,joint_error_std_mm,miou_percent,intersection_cm3\n");
        for f in &self.frames {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                f.frame,
                opt(f.joint_error_mean_mm),
                opt(f.joint_error_std_mm),
                opt(f.miou_percent),
                opt(f.intersection_cm3)
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            s,
            "all,{},{},{},{}",
            opt(a.joint_error_mean_mm),
            opt(a.joint_error_std_mm),
            opt(a.miou.map(|m| m.percent)),
            opt(a.intersection_cm3)
        );
        if !self.ablation.is_empty() {
            s.push_str("\nablation,miou_percent,intersection_cm3\n");
            for r in &self.ablation {
                let _ = writeln!(s, "{},{},{}", r.label, r.miou_percent, r.intersection_cm3);
            }
        }
        if !self.timings.is_empty() {
            s.push_str("\nstage,seconds\n");
            for t in &self.timings {
                let _ = writeln!(s, "{},{}", t.stage, t.seconds);
            }
        }
        s
    }

    /// Writes CSV when `path` ends in `.csv`, JSON otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            crate::io::write_bytes(path, self.to_csv().as_bytes())
        } else {
            crate::io::write_json(path, self)
        }
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        crate::io::read_json(path)
    }
}

/// Cumulative term subsets in ablation order: initialization, then contact,
/// regularization, rigidity, temporal and silhouette terms added one at a
/// time with their weights from `full`.
pub fn ablation_subsets(full: &Lambdas) -> Vec<(String, Option<Lambdas>)> {
    let mut l = Lambdas {
        cont: 0.0,
        silh: 0.0,
        temp: 0.0,
        rigid: 0.0,
        reg: 0.0,
    };
    let mut rows = vec![("initialization".to_string(), None)];
    type Enable = fn(&mut Lambdas, &Lambdas);
    let steps: [(&str, Enable); 5] = [
        ("cont", |l, f| l.cont = f.cont),
        ("+reg", |l, f| l.reg = f.reg),
        ("+rigid", |l, f| l.rigid = f.rigid),
        ("+temp", |l, f| l.temp = f.temp),
        ("+silh", |l, f| l.silh = f.silh),
    ];
    for (name, add) in steps {
        add(&mut l, full);
        rows.push((name.to_string(), Some(l)));
    }
    rows
}

#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub deform: DeformConfig,
    /// Frames solved in order; the temporal term links consecutive entries.
    pub frames: Vec<usize>,
    pub voxel_mm: f64,
}

/// Solves the deformation for every cumulative term subset on a synthetic
/// scene, starting each frame from the ground-truth rigid pose, and reports
/// the mIoU against the observed masks and the mean hand-object
/// intersection volume.
pub fn run_ablation(scene: &SynthScene, cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    if cfg.frames.iter().any(|&f| f >= scene.frame_count()) {
        return Err(Error::InvalidInput("ablation frame out of range".into()));
    }
    let graph = build_graph(&scene.template, cfg.deform.node_spacing, cfg.deform.k_neighbors)?;
    let mut rows = Vec::new();
    for (label, lambdas) in ablation_subsets(&cfg.deform.lambdas) {
        let mut pred = Vec::new();
        let mut gt = Vec::new();
        let mut vol = 0.0;
        let mut previous: Option<(usize, Vec<Vec3>)> = None;
        for &f in &cfg.frames {
            let pose = scene.object_poses[f];
            let rigid = scene.rigid_object(f);
            let hand = &scene.hand_meshes[f];
            let mesh = match lambdas {
                None => rigid,
                Some(l) => {
                    let last = previous
                        .as_ref()
                        .filter(|(pf, _)| pf + 1 == f)
                        .map(|(pf, v)| scene.object_poses[*pf].carry_to(&pose, v));
                    let frame = DeformFrame {
                        frame: f,
                        rest: &rigid,
                        graph: graph.posed(&pose.rotation(), &pose.translation()),
                        hand: Some(hand),
                        masks: &scene.masks[f],
                        cams: &scene.cams,
                        last: last.as_deref(),
                    };
                    let dcfg = DeformConfig { lambdas: l, ..cfg.deform.clone() };
                    solve_deformation(&frame, &dcfg)?.mesh
                }
            };
            vol += intersection_volume(&mesh, hand, cfg.voxel_mm)?;
            pred.extend(render_masks(&mesh, Some(hand), &scene.cams));
            gt.extend_from_slice(&scene.masks[f]);
            previous = Some((f, mesh.vertices));
        }
        let m = miou(&pred, &gt)?;
        let row = AblationRow {
            label,
            lambdas,
            miou_percent: m.percent,
            intersection_cm3: vol / cfg.frames.len().max(1) as f64,
        };
        log::info!("ablation {}: mIoU {:.2}%, intersection {:.4} cm3", row.label, row.miou_percent, row.intersection_cm3);
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangulationRow {
    pub views: usize,
    pub mean_mm: f64,
    pub std_mm: f64,
    /// Largest error with noise-free detections.
    pub noise_free_max_mm: f64,
}

/// Triangulates every fixture point from each rig, with and without noise.
pub fn triangulation_sweep(fixture: &Table1Fixture) -> Result<Vec<TriangulationRow>> {
    let truth: Vec<Vec3> = fixture.points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
    let gt = Skeleton3D::all_valid(truth.clone());
    fixture
        .rigs
        .iter()
        .map(|rig| {
            let cams = rig.cameras();
            let solve = |noisy: bool| -> Result<Skeleton3D> {
                let pts = par::map_range(truth.len(), |i| triangulate_keypoint(&rig.keypoints(i, noisy), &cams, DEFAULT_CONF_THRESHOLD));
                let joints = pts
                    .into_iter()
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::InvalidInput(format!("triangulation failed with {} views: {e}", rig.views)))?;
                Ok(Skeleton3D::all_valid(joints))
            };
            let (mean_mm, std_mm) = joint_error(&solve(true)?, &gt)?;
            let clean = solve(false)?;
            let noise_free_max_mm = clean.joints.iter().zip(&truth).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            Ok(TriangulationRow {
                views: rig.views,
                mean_mm,
                std_mm,
                noise_free_max_mm,
            })
        })
        .collect()
}
