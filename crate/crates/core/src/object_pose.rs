//! Rigid object pose by genetic search over silhouette agreement.
//!
//! A sample is a 6-vector: axis-angle rotation (rad) then translation (mm),
//! applied to the object template as `R(w) x + t`. Its loss is the sum over
//! views of `1 - IoU` between the rendered object mask (hidden where the hand
//! is in front) and the observed mask, plus `lambda_o * |alpha|`.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::blend_axis_angle;
use crate::geometry::{canonical_axis_angle, rotation_from_axis_angle, Aabb, Mat3, Vec2, Vec3};
use crate::io::camera::CameraParams;
use crate::io::mask::MaskImage;
use crate::mesh::TriMesh;
use crate::par;
use crate::raster::{draw_depth, draw_front_depth, ScreenVertex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub alpha: [f64; 6],
    pub loss: f64,
}

impl PoseSample {
    pub fn new(alpha: [f64; 6]) -> Self {
        PoseSample {
            alpha,
            loss: f64::INFINITY,
        }
    }

    pub fn from_parts(rotation: &Vec3, translation: &Vec3) -> Self {
        Self::new([rotation.x, rotation.y, rotation.z, translation.x, translation.y, translation.z])
    }

    pub fn rotation_vector(&self) -> Vec3 {
        Vec3::new(self.alpha[0], self.alpha[1], self.alpha[2])
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.alpha[3], self.alpha[4], self.alpha[5])
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_from_axis_angle(&self.rotation_vector())
    }

    /// Points attached to the object at this pose, moved so they stay
    /// attached at `to`.
    pub fn carry_to(&self, to: &PoseSample, points: &[Vec3]) -> Vec<Vec3> {
        let r = to.rotation() * self.rotation().transpose();
        let (t0, t1) = (self.translation(), to.translation());
        points.iter().map(|p| r * (p - t0) + t1).collect()
    }

    pub fn norm(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// The template moved by this pose.
    pub fn apply(&self, template: &TriMesh) -> TriMesh {
        template.transformed(&self.rotation(), &self.translation())
    }

    fn canonicalized(mut self) -> Self {
        let w = canonical_axis_angle(&self.rotation_vector());
        self.alpha[..3].copy_from_slice(w.as_slice());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitDistribution {
    Uniform,
    Normal,
}

impl std::str::FromStr for InitDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(InitDistribution::Uniform),
            "normal" => Ok(InitDistribution::Normal),
            _ => Err(Error::InvalidConfig(format!("unknown init distribution '{s}' (uniform|normal)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    /// Generations on the first frame.
    pub iterations: usize,
    /// Generations on later frames.
    pub tracking_iterations: usize,
    pub init: InitDistribution,
    pub rotation_half_width: f64,
    pub translation_half_width: f64,
    /// Mutation half-widths for later frames, around the previous solution.
    pub tracking_rotation_half_width: f64,
    pub tracking_translation_half_width: f64,
    /// Per-generation shrink factor of the translation mutation half-width.
    pub decay: f64,
    /// Per-generation shrink factor of the rotation mutation half-width.
    pub rotation_decay: f64,
    /// Share of each generation inherited unchanged from the previous one;
    /// the rest are mutations of the inherited samples.
    pub inherit_fraction: f64,
    pub lambda_o: f64,
    pub seed: u64,
    /// Masks and cameras are scaled by this factor for loss evaluation.
    pub working_scale: f64,
    pub smoothing_alpha: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 500,
            iterations: 20,
            tracking_iterations: 1,
            init: InitDistribution::Uniform,
            rotation_half_width: 1.0,
            translation_half_width: 25.0,
            tracking_rotation_half_width: 0.02,
            tracking_translation_half_width: 2.0,
            decay: 0.85,
            rotation_decay: 0.85,
            inherit_fraction: 0.04,
            lambda_o: 1e-4,
            seed: 7,
            working_scale: 0.25,
            smoothing_alpha: crate::hand::DEFAULT_SMOOTHING_ALPHA,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.population_size < 2 {
            return bad("population size must be at least 2");
        }
        if self.iterations < 1 || self.tracking_iterations < 1 {
            return bad("iterations must be at least 1");
        }
        let widths = [
            self.rotation_half_width,
            self.translation_half_width,
            self.tracking_rotation_half_width,
            self.tracking_translation_half_width,
        ];
        if !widths.iter().all(|h| *h > 0.0 && h.is_finite()) {
            return bad("mutation half-widths must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0 && self.rotation_decay > 0.0 && self.rotation_decay <= 1.0) {
            return bad("decay must be in (0, 1]");
        }
        if !(self.inherit_fraction > 0.0 && self.inherit_fraction < 1.0) {
            return bad("inherit fraction must be in (0, 1)");
        }
        if !(self.lambda_o >= 0.0) {
            return bad("lambda_o must be non-negative");
        }
        if !(self.working_scale > 0.0 && self.working_scale <= 1.0) {
            return bad("working scale must be in (0, 1]");
        }
        if !(self.smoothing_alpha > 0.0 && self.smoothing_alpha <= 1.0) {
            return bad("smoothing alpha must be in (0, 1]");
        }
        Ok(())
    }

    /// Integer mask downsampling factor matching `working_scale`.
    pub fn downsample_factor(&self) -> u32 {
        (1.0 / self.working_scale).round().max(1.0) as u32
    }
}

/// Translation bounds for the first frame's population; rotations cover the
/// whole pi-ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub min: Vec3,
    pub max: Vec3,
}

impl SearchRegion {
    pub const MARGIN: f64 = 100.0;

    /// A box grown by [`Self::MARGIN`] on every side.
    pub fn around(bbox: &Aabb) -> Self {
        let b = bbox.expanded(Self::MARGIN);
        SearchRegion { min: b.min, max: b.max }
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    /// Box of half-width [`Self::MARGIN`] around the point closest, in least
    /// squares, to the rays through the silhouette centroids of all views.
    /// `None` when fewer than two views see the object.
    pub fn from_silhouettes(masks: &[MaskImage], cams: &[CameraParams]) -> Option<Self> {
        let mut a = Mat3::zeros();
        let mut b = Vec3::zeros();
        let mut used = 0;
        for (m, c) in masks.iter().zip(cams) {
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
            for y in 0..m.height {
                for x in 0..m.width {
                    if m.get(x, y) {
                        sx += x as f64 + 0.5;
                        sy += y as f64 + 0.5;
                        n += 1;
                    }
                }
            }
            if n == 0 {
                continue;
            }
            let d = c.ray_direction(&Vec2::new(sx / n as f64, sy / n as f64));
            let proj = Mat3::identity() - d * d.transpose();
            a += proj;
            b += proj * c.center();
            used += 1;
        }
        if used < 2 {
            return None;
        }
        let p = a.try_inverse()? * b;
        let m = Vec3::repeat(Self::MARGIN);
        Some(SearchRegion { min: p - m, max: p + m })
    }
}

/// What one frame's loss depends on.
#[derive(Debug, Clone, Copy)]
pub struct PoseFrame<'a> {
    pub template: &'a TriMesh,
    pub hand: Option<&'a TriMesh>,
    pub masks: &'a [MaskImage],
    pub cams: &'a [CameraParams],
}

struct ViewCache {
    cam: CameraParams,
    mask: MaskImage,
    hand_depth: Vec<f64>,
}

/// Loss evaluator with per-view cameras, masks and hand depth prepared once.
pub struct SilhouetteLoss<'a> {
    template: &'a TriMesh,
    /// Template faces with outward winding, so back faces can be culled.
    faces: Vec<[usize; 3]>,
    views: Vec<ViewCache>,
}

struct Scratch {
    depth: Vec<f64>,
    screen: Vec<ScreenVertex>,
    verts: Vec<Vec3>,
}

impl<'a> SilhouetteLoss<'a> {
    /// `factor` shrinks masks and cameras by an integer factor.
    pub fn new(frame: &PoseFrame<'a>, factor: u32) -> Result<Self> {
        if frame.masks.len() != frame.cams.len() {
            return Err(Error::InvalidInput(format!(
                "{} masks for {} cameras",
                frame.masks.len(),
                frame.cams.len()
            )));
        }
        let mut views = Vec::with_capacity(frame.cams.len());
        let mut scratch = Vec::new();
        for (cam, mask) in frame.cams.iter().zip(frame.masks) {
            if (mask.width, mask.height) != (cam.width, cam.height) {
                return Err(Error::InvalidMask(format!(
                    "mask for view {} is {}x{}, camera is {}x{}",
                    cam.id, mask.width, mask.height, cam.width, cam.height
                )));
            }
            let mask = mask.downsample(factor);
            let mut cam = cam.scaled(1.0 / factor as f64);
            cam.width = mask.width;
            cam.height = mask.height;
            let mut hand_depth = vec![f64::INFINITY; mask.pixels.len()];
            if let Some(hand) = frame.hand {
                draw_depth(&mut hand_depth, &hand.vertices, &hand.faces, &cam, &mut scratch);
            }
            views.push(ViewCache { cam, mask, hand_depth });
        }
        let faces = if frame.template.signed_volume() < 0.0 {
            frame.template.faces.iter().map(|f| [f[0], f[2], f[1]]).collect()
        } else {
            frame.template.faces.clone()
        };
        Ok(SilhouetteLoss {
            template: frame.template,
            faces,
            views,
        })
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            depth: Vec::new(),
            screen: Vec::new(),
            verts: Vec::with_capacity(self.template.vertices.len()),
        }
    }

    /// Per-view `1 - IoU` terms.
    pub fn view_terms(&self, alpha: &[f64; 6]) -> Vec<f64> {
        let mut s = self.scratch();
        self.view_terms_with(&mut s, alpha)
    }

    fn view_terms_with(&self, s: &mut Scratch, alpha: &[f64; 6]) -> Vec<f64> {
        let p = PoseSample::new(*alpha);
        let (r, t) = (p.rotation(), p.translation());
        s.verts.clear();
        s.verts.extend(self.template.vertices.iter().map(|v| r * v + t));
        self.views
            .iter()
            .map(|v| {
                s.depth.clear();
                s.depth.resize(v.mask.pixels.len(), f64::INFINITY);
                draw_front_depth(&mut s.depth, &s.verts, &self.faces, &v.cam, &mut s.screen);
                let mut inter = 0usize;
                let mut uni = 0usize;
                for ((d, h), m) in s.depth.iter().zip(&v.hand_depth).zip(&v.mask.pixels) {
                    let rendered = d < h;
                    let observed = *m != 0;
                    inter += (rendered && observed) as usize;
                    uni += (rendered || observed) as usize;
                }
                if uni == 0 {
                    1.0
                } else {
                    1.0 - inter as f64 / uni as f64
                }
            })
            .collect()
    }

    pub fn loss(&self, alpha: &[f64; 6], lambda_o: f64) -> f64 {
        let mut s = self.scratch();
        self.loss_with(&mut s, alpha, lambda_o)
    }

    fn loss_with(&self, s: &mut Scratch, alpha: &[f64; 6], lambda_o: f64) -> f64 {
        let d: f64 = self.view_terms_with(s, alpha).iter().sum();
        d + lambda_o * PoseSample::new(*alpha).norm()
    }

    /// Fills in `loss` for every sample.
    pub fn evaluate(&self, samples: &mut [PoseSample], lambda_o: f64) {
        let losses = par::map_range_with(samples.len(), || self.scratch(), |s, i| self.loss_with(s, &samples[i].alpha, lambda_o));
        for (p, l) in samples.iter_mut().zip(losses) {
            p.loss = l;
        }
    }
}

/// Loss of one pose at full resolution.
pub fn sample_loss(alpha: &PoseSample, frame: &PoseFrame, lambda_o: f64) -> Result<f64> {
    Ok(SilhouetteLoss::new(frame, 1)?.loss(&alpha.alpha, lambda_o))
}

/// Fitness-proportional draws with replacement, fitness
/// `(L_max - L_i) + eps` with `eps = 1e-6 (L_max - L_min + 1)`.
pub fn roulette_select<R: Rng + ?Sized>(population: &[PoseSample], count: usize, rng: &mut R) -> Vec<PoseSample> {
    if count == 0 || population.is_empty() {
        return Vec::new();
    }
    let lmax = population.iter().map(|p| p.loss).fold(f64::NEG_INFINITY, f64::max);
    let lmin = population.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
    let eps = 1e-6 * (lmax - lmin + 1.0);
    let weights: Vec<f64> = population.iter().map(|p| (lmax - p.loss) + eps).collect();
    let dist = WeightedIndex::new(&weights).expect("roulette weights are positive and finite");
    (0..count).map(|_| population[dist.sample(rng)]).collect()
}

/// Adds an independent uniform draw in `[-h, h]` to every component, with
/// `h_rot` for the rotation block and `h_trans` for the translation block.
pub fn mutate<R: Rng + ?Sized>(parent: &PoseSample, h_rot: f64, h_trans: f64, rng: &mut R) -> PoseSample {
    let mut child = PoseSample::new(parent.alpha);
    for (i, a) in child.alpha.iter_mut().enumerate() {
        let h = if i < 3 { h_rot } else { h_trans };
        if h > 0.0 {
            *a += rng.random_range(-h..=h);
        }
    }
    child.canonicalized()
}

fn uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let w = Vec3::new(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        if w.norm() <= PI {
            return w;
        }
    }
}

fn initial_sample<R: Rng + ?Sized>(init: InitDistribution, region: &SearchRegion, rng: &mut R) -> PoseSample {
    match init {
        InitDistribution::Uniform => {
            let w = uniform_rotation(rng);
            let t = Vec3::new(
                rng.random_range(region.min.x..=region.max.x),
                rng.random_range(region.min.y..=region.max.y),
                rng.random_range(region.min.z..=region.max.z),
            );
            PoseSample::from_parts(&w, &t)
        }
        InitDistribution::Normal => {
            let unit = Normal::new(0.0, 1.0).expect("unit normal");
            let mut g = || unit.sample(rng);
            let w = Vec3::new(g(), g(), g()) * (PI / 3.0);
            let sd = (region.max - region.min) / 6.0;
            let c = region.center();
            let t = Vec3::new(c.x + sd.x * g(), c.y + sd.y * g(), c.z + sd.z * g());
            PoseSample::from_parts(&w, &t).canonicalized()
        }
    }
}

/// Independent stream per (frame, generation, sample) so that parallel
/// evaluation order never changes the draws.
fn stream_rng(seed: u64, frame: usize, generation: usize, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(((generation as u64) << 32) | index);
    rng
}

const SELECTION_STREAM: u64 = u32::MAX as u64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseReport {
    pub best: PoseSample,
    /// Best-so-far loss after initialization and after every generation.
    pub best_history: Vec<f64>,
    pub evaluations: usize,
}

/// Genetic search for one frame. Without `previous` the population is drawn
/// from `cfg.init` over `region` and evolved `cfg.iterations` generations;
/// with it, the population is mutations of `previous` and evolves
/// `cfg.tracking_iterations` generations. Each generation inherits a
/// roulette-selected share of the previous one unchanged, always including
/// its best sample, and fills the rest with mutations of the inherited
/// samples. The best sample ever evaluated is returned.
pub fn estimate_pose(
    frame: &PoseFrame,
    frame_index: usize,
    previous: Option<&PoseSample>,
    region: &SearchRegion,
    cfg: &GaConfig,
) -> Result<PoseReport> {
    cfg.validate()?;
    let evaluator = SilhouetteLoss::new(frame, cfg.downsample_factor())?;
    let n = cfg.population_size;
    let (mut h_rot, mut h_trans, generations) = match previous {
        None => (cfg.rotation_half_width, cfg.translation_half_width, cfg.iterations),
        Some(_) => (
            cfg.tracking_rotation_half_width,
            cfg.tracking_translation_half_width,
            cfg.tracking_iterations,
        ),
    };
    let mut population: Vec<PoseSample> = par::map_range(n, |i| {
        let mut rng = stream_rng(cfg.seed, frame_index, 0, i as u64);
        match previous {
            Some(p) if i == 0 => PoseSample::new(p.alpha).canonicalized(),
            Some(p) => mutate(p, h_rot, h_trans, &mut rng),
            None => initial_sample(cfg.init, region, &mut rng),
        }
    });
    evaluator.evaluate(&mut population, cfg.lambda_o);
    let mut evaluations = n;
    let mut best = best_of(&population);
    let mut best_history = vec![best.loss];
    let inherited = ((n as f64 * cfg.inherit_fraction).round() as usize).clamp(1, n - 1);
    for generation in 1..=generations {
        let mut sel_rng = stream_rng(cfg.seed, frame_index, generation, SELECTION_STREAM);
        let mut survivors = vec![best];
        survivors.extend(roulette_select(&population, inherited - 1, &mut sel_rng));
        let mut children: Vec<PoseSample> = par::map_range(n - inherited, |i| {
            let mut rng = stream_rng(cfg.seed, frame_index, generation, i as u64);
            // Each parent gets children that move both blocks, only the
            // rotation, or only the translation.
            let (hr, ht) = match (i / inherited) % 3 {
                0 => (h_rot, h_trans),
                1 => (h_rot, 0.0),
                _ => (0.0, h_trans),
            };
            mutate(&survivors[i % inherited], hr, ht, &mut rng)
        });
        evaluator.evaluate(&mut children, cfg.lambda_o);
        evaluations += children.len();
        population = survivors;
        population.extend(children);
        let gen_best = best_of(&population);
        if gen_best.loss < best.loss {
            best = gen_best;
        }
        best_history.push(best.loss);
        log::debug!("frame {frame_index} generation {generation}: best loss {:.5}", best.loss);
        h_rot *= cfg.rotation_decay;
        h_trans *= cfg.decay;
    }
    Ok(PoseReport {
        best,
        best_history,
        evaluations,
    })
}

/// First minimum-loss sample.
fn best_of(pop: &[PoseSample]) -> PoseSample {
    let mut best = pop[0];
    for p in &pop[1..] {
        if p.loss < best.loss {
            best = *p;
        }
    }
    best
}

/// Exponential moving average of object poses, `alpha * current +
/// (1 - alpha) * previous`, with axis-angle alignment.
pub fn smooth_object_pose(previous: Option<&PoseSample>, current: &PoseSample, alpha: f64) -> PoseSample {
    let Some(prev) = previous else {
        return *current;
    };
    let w = blend_axis_angle(&prev.rotation_vector(), &current.rotation_vector(), alpha);
    let t = alpha * current.translation() + (1.0 - alpha) * prev.translation();
    PoseSample {
        loss: current.loss,
        ..PoseSample::from_parts(&w, &t)
    }
}

/// Mean IoU between the object rendered at `pose` (hand-occluded) and the
/// given masks, at full resolution.
pub fn pose_miou(frame: &PoseFrame, pose: &PoseSample) -> Result<f64> {
    let terms = SilhouetteLoss::new(frame, 1)?.view_terms(&pose.alpha);
    if terms.is_empty() {
        return Ok(0.0);
    }
    Ok(terms.iter().map(|d| 1.0 - d).sum::<f64>() / terms.len() as f64)
}
