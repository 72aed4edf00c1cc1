//! Sequence generation: a seeded random-walk motion script rendered to a
//! dataset directory (frames, masks, consecutive-pair ground truth, script).

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imagery::ImageFrame;
use crate::rng::rng_from;
use crate::segment::ForegroundMask;
use crate::synth::{
    builtin_background, builtin_object, compose_homography, ground_truth_map, Homography,
    SynthError, TexturedObject,
};

/// Gain bounds any script must respect.
pub const GAIN_RANGE: (f64, f64) = (0.3, 1.7);

/// Foreground object source: a builtin id or a texture/alpha PNG pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ObjectSpec {
    Builtin(String),
    Files { texture: PathBuf, alpha: PathBuf },
}

impl Default for ObjectSpec {
    fn default() -> Self {
        ObjectSpec::Builtin("drill".into())
    }
}

/// Generator configuration (the `gen` section of the pipeline config).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub object: ObjectSpec,
    /// Object canvas side as a fraction of the smaller frame dimension.
    pub object_scale: f64,
    /// Builtin background ids ("flat", "cluttered") or PNG paths.
    pub backgrounds: Vec<String>,
    /// Frames per background block; 0 keeps the first background throughout.
    pub background_block: usize,
    pub max_translation_px: f64,
    pub max_rotation_deg: f64,
    /// Per-frame multiplicative scale jitter (log-scale random walk step).
    pub max_scale_jitter: f64,
    /// Per-frame perspective-row random walk step.
    pub max_perspective_jitter: f64,
    pub gain_low: f64,
    pub gain_high: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            frames: 200,
            object: ObjectSpec::default(),
            object_scale: 0.45,
            backgrounds: vec!["flat".into(), "cluttered".into()],
            background_block: 25,
            max_translation_px: 3.0,
            max_rotation_deg: 3.0,
            max_scale_jitter: 0.0,
            max_perspective_jitter: 0.0,
            gain_low: 0.7,
            gain_high: 1.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: String| Err(SynthError::InvalidConfig { reason });
        if self.frames < 2 {
            return fail(format!("frame count must be >= 2, got {}", self.frames));
        }
        if self.backgrounds.is_empty() {
            return fail("at least one background required".into());
        }
        if self.width < 16 || self.height < 16 {
            return fail(format!("frame size {}x{} too small", self.width, self.height));
        }
        if !(self.object_scale > 0.0 && self.object_scale <= 0.9) {
            return fail(format!("object_scale {} out of (0, 0.9]", self.object_scale));
        }
        if self.gain_low > self.gain_high
            || self.gain_low < GAIN_RANGE.0
            || self.gain_high > GAIN_RANGE.1
        {
            return fail(format!(
                "gain range [{}, {}] must sit inside [{}, {}]",
                self.gain_low, self.gain_high, GAIN_RANGE.0, GAIN_RANGE.1
            ));
        }
        Ok(())
    }
}

/// One script entry: the object pose for the frame (rest pose -> frame
/// coordinates, about the frame center), a brightness gain, and which
/// background the frame uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameMotion {
    pub homography: Homography,
    pub gain: f64,
    pub background: usize,
}

/// The full per-frame motion description, stored as `script.json` in every
/// generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionScript {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub backgrounds: Vec<String>,
    pub frames: Vec<FrameMotion>,
}

impl MotionScript {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.frames.len() < 2 {
            return Err(SynthError::InvalidMotion {
                reason: format!("script length {} < 2", self.frames.len()),
            });
        }
        for (i, f) in self.frames.iter().enumerate() {
            if !(GAIN_RANGE.0..=GAIN_RANGE.1).contains(&f.gain) {
                return Err(SynthError::InvalidMotion {
                    reason: format!("frame {i} gain {} outside [{}, {}]", f.gain, GAIN_RANGE.0, GAIN_RANGE.1),
                });
            }
            if f.background >= self.backgrounds.len() {
                return Err(SynthError::InvalidMotion {
                    reason: format!("frame {i} background index {} out of range", f.background),
                });
            }
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<(), SynthError> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_file(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let script: MotionScript = serde_json::from_str(&text)?;
        script.validate()?;
        Ok(script)
    }
}

pub fn frame_path(root: &Path, index: usize) -> PathBuf {
    root.join("frames").join(format!("frame_{index:06}.png"))
}

pub fn mask_path(root: &Path, index: usize) -> PathBuf {
    root.join("masks").join(format!("mask_{index:06}.png"))
}

pub fn gt_path(root: &Path, src: usize, tgt: usize) -> PathBuf {
    root.join("gt").join(format!("gt_{src:06}_{tgt:06}.gtm"))
}

pub fn script_path(root: &Path) -> PathBuf {
    root.join("script.json")
}

/// Builds the object described by the config.
pub fn load_object(config: &SynthConfig) -> Result<TexturedObject, SynthError> {
    match &config.object {
        ObjectSpec::Builtin(id) => {
            let side = ((config.width.min(config.height) as f64) * config.object_scale).round()
                as usize;
            builtin_object(id, side.max(8), config.seed)
        }
        ObjectSpec::Files { texture, alpha } => {
            let tex = ImageFrame::load_png(texture)?;
            let a = crate::segment::load_mask(alpha, None).map_err(|e| SynthError::InvalidObject {
                reason: e.to_string(),
            })?;
            let mut plane = crate::imagery::GrayImage::new(a.width, a.height);
            for y in 0..a.height {
                for x in 0..a.width {
                    plane.set(x, y, if a.get(x, y) { 1.0 } else { 0.0 });
                }
            }
            TexturedObject::new(tex, plane)
        }
    }
}

/// Builds all backgrounds described by the config at frame resolution.
pub fn load_backgrounds(config: &SynthConfig) -> Result<Vec<ImageFrame>, SynthError> {
    config
        .backgrounds
        .iter()
        .map(|id| match id.as_str() {
            "flat" | "cluttered" => builtin_background(id, config.width, config.height, config.seed),
            path => ImageFrame::load_png(Path::new(path)).map_err(SynthError::from),
        })
        .collect()
}

/// Draws the seeded random-walk motion script. Translation, perspective and
/// gain walks reflect at their bounds so the object stays inside the frame
/// and gains stay legal.
pub fn build_script(config: &SynthConfig, object_side: usize) -> Result<MotionScript, SynthError> {
    config.validate()?;
    let mut rng = rng_from(config.seed, &[0x5c21_97]);
    let center = (config.width as f64 / 2.0, config.height as f64 / 2.0);

    // Keep the (possibly scaled-up) object half-diagonal inside the frame.
    let half_diag = object_side as f64 * std::f64::consts::FRAC_1_SQRT_2;
    let max_scale = (0.223f64).exp(); // log-scale walk clamp below
    let bound_x = (config.width as f64 / 2.0 - half_diag * max_scale - 1.0).max(0.0);
    let bound_y = (config.height as f64 / 2.0 - half_diag * max_scale - 1.0).max(0.0);
    let t_bound = (
        bound_x.min(config.max_translation_px * config.frames as f64),
        bound_y.min(config.max_translation_px * config.frames as f64),
    );
    let persp_bound = 5.0 * config.max_perspective_jitter;

    let reflect = |v: f64, bound: f64| -> f64 {
        if bound <= 0.0 {
            0.0
        } else if v > bound {
            2.0 * bound - v
        } else if v < -bound {
            -2.0 * bound - v
        } else {
            v
        }
    };

    let mut angle = 0.0f64;
    let mut t = (0.0f64, 0.0f64);
    let mut log_scale = 0.0f64;
    let mut persp = (0.0f64, 0.0f64);
    let mut gain = (config.gain_low + config.gain_high) / 2.0;

    let mut frames = Vec::with_capacity(config.frames);
    for k in 0..config.frames {
        if k > 0 {
            let step = |rng: &mut rand_chacha::ChaCha8Rng, m: f64| {
                if m > 0.0 {
                    rng.gen_range(-m..=m)
                } else {
                    0.0
                }
            };
            angle += step(&mut rng, config.max_rotation_deg);
            t.0 = reflect(t.0 + step(&mut rng, config.max_translation_px), t_bound.0);
            t.1 = reflect(t.1 + step(&mut rng, config.max_translation_px), t_bound.1);
            log_scale = (log_scale + step(&mut rng, config.max_scale_jitter)).clamp(-0.223, 0.223);
            persp.0 = reflect(persp.0 + step(&mut rng, config.max_perspective_jitter), persp_bound);
            persp.1 = reflect(persp.1 + step(&mut rng, config.max_perspective_jitter), persp_bound);
            if config.gain_high > config.gain_low {
                gain += rng.gen_range(-0.08..=0.08);
                // reflect into [gain_low, gain_high]
                if gain > config.gain_high {
                    gain = 2.0 * config.gain_high - gain;
                }
                if gain < config.gain_low {
                    gain = 2.0 * config.gain_low - gain;
                }
            }
        }
        let homography =
            compose_homography(angle, log_scale.exp(), t, persp, center)?;
        let background = if config.background_block == 0 {
            0
        } else {
            (k / config.background_block) % config.backgrounds.len()
        };
        frames.push(FrameMotion {
            homography,
            gain,
            background,
        });
    }
    let script = MotionScript {
        width: config.width,
        height: config.height,
        seed: config.seed,
        backgrounds: config.backgrounds.clone(),
        frames,
    };
    script.validate()?;
    Ok(script)
}

/// Renders a script into `out_dir` (frames/, masks/, gt/ for consecutive
/// pairs, script.json). Frames render in parallel; outputs are byte-stable
/// regardless of worker count.
pub fn render_script(
    object: &TexturedObject,
    backgrounds: &[ImageFrame],
    script: &MotionScript,
    out_dir: &Path,
) -> Result<(), SynthError> {
    script.validate()?;
    for sub in ["frames", "masks", "gt"] {
        fs::create_dir_all(out_dir.join(sub)).map_err(|source| SynthError::Io {
            path: out_dir.join(sub).display().to_string(),
            source,
        })?;
    }

    let rendered: Result<Vec<(ImageFrame, ForegroundMask)>, SynthError> = script
        .frames
        .par_iter()
        .map(|fm| {
            let bg = &backgrounds[fm.background];
            crate::synth::render_frame(object, bg, &fm.homography, fm.gain as f32)
        })
        .collect();
    let rendered = rendered?;

    rendered
        .par_iter()
        .enumerate()
        .map(|(i, (frame, mask))| -> Result<(), SynthError> {
            frame.save_png(&frame_path(out_dir, i))?;
            mask.save_png(&mask_path(out_dir, i))
                .map_err(|e| SynthError::InvalidConfig {
                    reason: e.to_string(),
                })?;
            Ok(())
        })
        .collect::<Result<Vec<_>, _>>()?;

    (0..script.frames.len() - 1)
        .into_par_iter()
        .map(|i| -> Result<(), SynthError> {
            let gt = ground_truth_map(
                &script.frames[i].homography,
                &script.frames[i + 1].homography,
                &rendered[i].1,
                &rendered[i + 1].1,
                i,
                i + 1,
            );
            gt.write_file(&gt_path(out_dir, i, i + 1))
        })
        .collect::<Result<Vec<_>, _>>()?;

    script.write_file(&script_path(out_dir))
}

/// Generates a full dataset from a config: script, frames, masks, ground
/// truth. Deterministic for a given config (seed included).
pub fn generate_sequence(config: &SynthConfig, out_dir: &Path) -> Result<MotionScript, SynthError> {
    config.validate()?;
    let object = load_object(config)?;
    let backgrounds = load_backgrounds(config)?;
    let script = build_script(config, object.width().max(object.height()))?;
    render_script(&object, &backgrounds, &script, out_dir)?;
    Ok(script)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SynthConfig {
        SynthConfig {
            width: 64,
            height: 64,
            frames: 4,
            object_scale: 0.4,
            backgrounds: vec!["flat".into()],
            background_block: 0,
            max_translation_px: 1.5,
            max_rotation_deg: 1.5,
            gain_low: 0.9,
            gain_high: 1.1,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn identity_script_renders_identical_frames() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            max_translation_px: 0.0,
            max_rotation_deg: 0.0,
            gain_low: 1.0,
            gain_high: 1.0,
            frames: 2,
            ..tiny_config()
        };
        generate_sequence(&cfg, dir.path()).unwrap();
        let a = fs::read(frame_path(dir.path(), 0)).unwrap();
        let b = fs::read(frame_path(dir.path(), 1)).unwrap();
        assert_eq!(a, b);

        let gt = crate::synth::GroundTruthMap::read_file(&gt_path(dir.path(), 0, 1), 0, 1).unwrap();
        let mask = crate::segment::load_mask(&mask_path(dir.path(), 0), None).unwrap();
        for (x, y) in mask.pixels() {
            assert!(gt.visible(x, y));
            let p = gt.mapped(x, y);
            assert!((p.x - x as f64).abs() < 1e-6 && (p.y - y as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        generate_sequence(&cfg, dir1.path()).unwrap();
        generate_sequence(&cfg, dir2.path()).unwrap();
        for i in 0..cfg.frames {
            assert_eq!(
                fs::read(frame_path(dir1.path(), i)).unwrap(),
                fs::read(frame_path(dir2.path(), i)).unwrap()
            );
            assert_eq!(
                fs::read(mask_path(dir1.path(), i)).unwrap(),
                fs::read(mask_path(dir2.path(), i)).unwrap()
            );
        }
        for i in 0..cfg.frames - 1 {
            assert_eq!(
                fs::read(gt_path(dir1.path(), i, i + 1)).unwrap(),
                fs::read(gt_path(dir2.path(), i, i + 1)).unwrap()
            );
        }
        assert_eq!(
            fs::read(script_path(dir1.path())).unwrap(),
            fs::read(script_path(dir2.path())).unwrap()
        );
    }

    #[test]
    fn scripted_rotation_shows_up_in_mask_principal_axis() {
        // 2 degrees per frame; at frame 25 the mask's principal axis should
        // sit at 50 degrees (checked with an independent PCA oracle).
        let cfg = SynthConfig {
            width: 96,
            height: 96,
            frames: 26,
            backgrounds: vec!["flat".into()],
            background_block: 0,
            ..SynthConfig::default()
        };
        let object = load_object(&cfg).unwrap();
        let backgrounds = load_backgrounds(&cfg).unwrap();
        let center = (48.0, 48.0);
        let frames: Vec<FrameMotion> = (0..26)
            .map(|k| FrameMotion {
                homography: compose_homography(2.0 * k as f64, 1.0, (0.0, 0.0), (0.0, 0.0), center)
                    .unwrap(),
                gain: 1.0,
                background: 0,
            })
            .collect();
        let (_, mask0) =
            crate::synth::render_frame(&object, &backgrounds[0], &frames[0].homography, 1.0)
                .unwrap();
        let (_, mask25) =
            crate::synth::render_frame(&object, &backgrounds[0], &frames[25].homography, 1.0)
                .unwrap();

        // PCA oracle: principal angle from the 2x2 coordinate covariance.
        let principal_angle_deg = |m: &ForegroundMask| -> f64 {
            let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0.0f64);
            for (x, y) in m.pixels() {
                sx += x as f64;
                sy += y as f64;
                n += 1.0;
            }
            let (cx, cy) = (sx / n, sy / n);
            let (mut cxx, mut cyy, mut cxy) = (0.0f64, 0.0f64, 0.0f64);
            for (x, y) in m.pixels() {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                cxx += dx * dx;
                cyy += dy * dy;
                cxy += dx * dy;
            }
            (0.5 * (2.0 * cxy).atan2(cxx - cyy)).to_degrees()
        };
        let a0 = principal_angle_deg(&mask0);
        let a25 = principal_angle_deg(&mask25);
        let mut delta = a25 - a0;
        while delta < -90.0 {
            delta += 180.0;
        }
        while delta > 90.0 {
            delta -= 180.0;
        }
        assert!((delta - 50.0).abs() < 1.0, "rotation {delta} != 50");
    }

    #[test]
    fn mask_conservation_under_rotation_translation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            frames: 8,
            max_scale_jitter: 0.0,
            max_perspective_jitter: 0.0,
            ..tiny_config()
        };
        generate_sequence(&cfg, dir.path()).unwrap();
        let mut prev: Option<usize> = None;
        for i in 0..cfg.frames {
            let m = crate::segment::load_mask(&mask_path(dir.path(), i), None).unwrap();
            let c = m.count();
            if let Some(p) = prev {
                let rel = (c as f64 - p as f64).abs() / p as f64;
                assert!(rel < 0.02, "mask count jumped {rel} between frames");
            }
            prev = Some(c);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = tiny_config();
        c.frames = 1;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.backgrounds.clear();
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.gain_high = 2.5;
        assert!(c.validate().is_err());
    }
}
