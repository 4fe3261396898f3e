//! Seeded synthetic scenes and a simple two-stage detector noise model.
//!
//! Objects are integer-grid boxes doing reflected random walks inside the
//! arena. For every frame the synthetic detector emits one jittered proposal
//! per object (unless dropped), a few clutter proposals, presence scores and
//! location candidates. Scores are quantized to `score_levels` steps so that
//! finite-support distributions built from a world have few distinct values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{ClassId, Detection, GroundTruth, ImageRecord, LocationCandidate, Proposal};
use crate::error::{Error, Result};
use crate::geometry::{same_box, BoundingBox};

const CLUTTER_ATTEMPTS: usize = 20;

/// Parameters of a synthetic world. Read from TOML; every key is optional.
///
/// ```toml
/// seed = 7
/// n_sequences = 2
/// n_frames = 60
/// n_objects = 5
/// n_classes = 2
/// arena_width = 240.0
/// arena_height = 240.0
/// object_size_min = 20.0
/// object_size_max = 40.0
/// motion_step = 3.0
/// spawn_spread = 1.0      # fraction of the arena objects start in
/// score_sharpness = 4.0   # true-label score is 1 - u^(1 + sharpness); inf = perfect
/// impostor_rate = 0.3     # impostor scores are uniform on [0, impostor_rate]
/// jitter = 2.0            # proposal box jitter, grid units
/// loc_jitter = 0.0        # jitter of the primary location candidate
/// drop_prob = 0.02        # object gets no proposal
/// suppress_prob = 0.02    # true-class presence score is missing
/// clutter_per_frame = 3
/// score_levels = 20       # 0 disables score quantization
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_sequences: u32,
    pub n_frames: u32,
    pub n_objects: u32,
    pub n_classes: u32,
    pub arena_width: f64,
    pub arena_height: f64,
    pub object_size_min: f64,
    pub object_size_max: f64,
    pub motion_step: f64,
    pub spawn_spread: f64,
    pub score_sharpness: f64,
    pub impostor_rate: f64,
    pub jitter: f64,
    pub loc_jitter: f64,
    pub drop_prob: f64,
    pub suppress_prob: f64,
    pub clutter_per_frame: u32,
    pub score_levels: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sequences: 2,
            n_frames: 60,
            n_objects: 5,
            n_classes: 2,
            arena_width: 240.0,
            arena_height: 240.0,
            object_size_min: 20.0,
            object_size_max: 40.0,
            motion_step: 3.0,
            spawn_spread: 1.0,
            score_sharpness: 4.0,
            impostor_rate: 0.3,
            jitter: 2.0,
            loc_jitter: 0.0,
            drop_prob: 0.02,
            suppress_prob: 0.02,
            clutter_per_frame: 3,
            score_levels: 20,
        }
    }
}

impl WorldConfig {
    /// No detector noise and no motion: every component and edge score of
    /// every true label is exactly 1 and every impostor score is 0. No clutter.
    pub fn noiseless() -> Self {
        Self {
            motion_step: 0.0,
            score_sharpness: f64::INFINITY,
            impostor_rate: 0.0,
            jitter: 0.0,
            loc_jitter: 0.0,
            drop_prob: 0.0,
            suppress_prob: 0.0,
            clutter_per_frame: 0,
            ..Self::default()
        }
    }

    /// Many overlapping objects of one class moving fast enough that the
    /// highest-IoU partner is sometimes the wrong object.
    pub fn crowded() -> Self {
        Self {
            n_sequences: 1,
            n_frames: 80,
            n_objects: 8,
            n_classes: 1,
            arena_width: 120.0,
            arena_height: 120.0,
            object_size_min: 24.0,
            object_size_max: 36.0,
            motion_step: 5.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("drop_prob", self.drop_prob),
            ("suppress_prob", self.suppress_prob),
            ("impostor_rate", self.impostor_rate),
            ("spawn_spread", self.spawn_spread),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        let scales = [
            ("motion_step", self.motion_step),
            ("jitter", self.jitter),
            ("loc_jitter", self.loc_jitter),
            ("score_sharpness", self.score_sharpness),
        ];
        for (name, s) in scales {
            if s.is_nan() || s < 0.0 {
                return Err(Error::Config(format!("{name} must be >= 0, got {s}")));
            }
        }
        if self.n_frames == 0 || self.n_objects == 0 || self.n_classes == 0 || self.n_sequences == 0 {
            return Err(Error::Config("counts must be positive".into()));
        }
        if !(self.object_size_min > 0.0 && self.object_size_min <= self.object_size_max) {
            return Err(Error::Config("need 0 < object_size_min <= object_size_max".into()));
        }
        if self.object_size_max > self.arena_width.min(self.arena_height) {
            return Err(Error::Config("objects do not fit in the arena".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

struct Object {
    id: u64,
    class: ClassId,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Object {
    fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.x, self.y, self.x + self.w, self.y + self.h).expect("object box is valid")
    }
}

struct Noise<'a> {
    cfg: &'a WorldConfig,
}

impl Noise<'_> {
    fn quantize(&self, s: f64) -> f64 {
        let levels = self.cfg.score_levels;
        let s = s.clamp(0.0, 1.0);
        if levels == 0 {
            s
        } else {
            (s * levels as f64).round() / levels as f64
        }
    }

    fn true_score(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.gen();
        self.quantize(1.0 - u.powf(1.0 + self.cfg.score_sharpness))
    }

    fn impostor_score(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.gen();
        self.quantize(u * self.cfg.impostor_rate)
    }

    fn jittered(&self, b: &BoundingBox, scale: f64, rng: &mut ChaCha8Rng) -> BoundingBox {
        let j = scale.round() as i64;
        if j == 0 {
            return *b;
        }
        let mut d = || rng.gen_range(-j..=j) as f64;
        let (mut x0, mut y0, mut x1, mut y1) = (b.x_min() + d(), b.y_min() + d(), b.x_max() + d(), b.y_max() + d());
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        if x0 > x1 {
            std::mem::swap(&mut x0, &mut x1);
        }
        if y0 > y1 {
            std::mem::swap(&mut y0, &mut y1);
        }
        BoundingBox::new(x0, y0, x1, y1).expect("jittered box is valid")
    }
}

fn grid(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let (lo, hi) = (lo.ceil() as i64, hi.floor() as i64);
    if hi <= lo {
        lo as f64
    } else {
        rng.gen_range(lo..=hi) as f64
    }
}

/// Generate a dataset: `n_sequences * n_frames` images with identity-labelled
/// ground truth. Deterministic in the config (including its seed).
pub fn gen_world(cfg: &WorldConfig) -> Result<Vec<ImageRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Noise { cfg };
    let mut images = Vec::with_capacity((cfg.n_sequences * cfg.n_frames) as usize);
    let mut next_id = 0u64;
    for s in 0..cfg.n_sequences {
        let seq = format!("seq{s}");
        let spawn_w = (cfg.arena_width - cfg.object_size_max) * cfg.spawn_spread;
        let spawn_h = (cfg.arena_height - cfg.object_size_max) * cfg.spawn_spread;
        let mut objects: Vec<Object> = (0..cfg.n_objects)
            .map(|_| {
                let id = next_id;
                next_id += 1;
                Object {
                    id,
                    class: rng.gen_range(0..cfg.n_classes),
                    x: grid(&mut rng, 0.0, spawn_w),
                    y: grid(&mut rng, 0.0, spawn_h),
                    w: grid(&mut rng, cfg.object_size_min, cfg.object_size_max),
                    h: grid(&mut rng, cfg.object_size_min, cfg.object_size_max),
                }
            })
            .collect();
        for t in 0..cfg.n_frames {
            if t > 0 {
                for o in &mut objects {
                    step(o, cfg, &mut rng);
                }
            }
            images.push(render_frame(&seq, t as u64, &objects, cfg, &noise, &mut rng));
        }
    }
    Ok(images)
}

fn step(o: &mut Object, cfg: &WorldConfig, rng: &mut ChaCha8Rng) {
    let m = cfg.motion_step.round() as i64;
    if m == 0 {
        return;
    }
    let reflect = |v: f64, span: f64| -> f64 {
        if v < 0.0 {
            -v
        } else if v > span {
            2.0 * span - v
        } else {
            v
        }
    };
    o.x = reflect(o.x + rng.gen_range(-m..=m) as f64, cfg.arena_width - o.w).clamp(0.0, cfg.arena_width - o.w);
    o.y = reflect(o.y + rng.gen_range(-m..=m) as f64, cfg.arena_height - o.h).clamp(0.0, cfg.arena_height - o.h);
}

fn render_frame(
    seq: &str,
    t: u64,
    objects: &[Object],
    cfg: &WorldConfig,
    noise: &Noise<'_>,
    rng: &mut ChaCha8Rng,
) -> ImageRecord {
    let mut img = ImageRecord::new(format!("{seq}-f{t}"));
    img.sequence_id = Some(seq.to_string());
    img.frame_index = Some(t);
    for o in objects {
        let truth = o.bbox();
        img.ground_truth.push(GroundTruth { detection: Detection::new(truth, o.class, true), object_id: Some(o.id) });
        if rng.gen_bool(cfg.drop_prob) {
            continue;
        }
        let r = img.proposals.len();
        img.proposals.push(Proposal { bbox: noise.jittered(&truth, cfg.jitter, rng), score: noise.true_score(rng) });
        if !rng.gen_bool(cfg.suppress_prob) {
            img.presence.insert((r, o.class), noise.true_score(rng));
        }
        let primary =
            LocationCandidate { bbox: noise.jittered(&truth, cfg.loc_jitter, rng), density: noise.true_score(rng) };
        let secondary = LocationCandidate {
            bbox: noise.jittered(&truth, 3.0 * cfg.jitter + 4.0, rng),
            density: noise.impostor_score(rng),
        };
        img.locations.insert((r, o.class), vec![primary, secondary]);
        for c in (0..cfg.n_classes).filter(|&c| c != o.class) {
            img.presence.insert((r, c), noise.impostor_score(rng));
            let bbox = img.proposals[r].bbox;
            img.locations.insert((r, c), vec![LocationCandidate { bbox, density: noise.impostor_score(rng) }]);
        }
    }
    // clutter is background: boxes identical to a truth are redrawn
    for _ in 0..cfg.clutter_per_frame {
        let bbox = (0..CLUTTER_ATTEMPTS).find_map(|_| {
            let w = grid(rng, cfg.object_size_min, cfg.object_size_max);
            let h = grid(rng, cfg.object_size_min, cfg.object_size_max);
            let x = grid(rng, 0.0, cfg.arena_width - w);
            let y = grid(rng, 0.0, cfg.arena_height - h);
            let b = BoundingBox::new(x, y, x + w, y + h).expect("clutter box is valid");
            (!img.ground_truth.iter().any(|g| same_box(&b, &g.detection.bbox))).then_some(b)
        });
        let Some(bbox) = bbox else { continue };
        let r = img.proposals.len();
        img.proposals.push(Proposal { bbox, score: noise.impostor_score(rng) });
        let c = rng.gen_range(0..cfg.n_classes);
        img.presence.insert((r, c), noise.impostor_score(rng));
        img.locations.insert((r, c), vec![LocationCandidate { bbox, density: noise.impostor_score(rng) }]);
    }
    img
}
