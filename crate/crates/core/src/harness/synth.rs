//! Synthetic eye images with controllable presentation-attack artifacts.
//!
//! Each image has a dark pupil disk, an iris annulus filled with a random
//! band-limited polar texture and a bright sclera. Attack images add either
//! an angularly modulated ring around the iris/sclera border (`border_ring`)
//! or a dot grid over the iris (`dot_print`). The optional soft-lens class
//! carries the border ring at a reduced contrast and is labeled bona fide.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::manifest::{write_manifest, LensType, ManifestRecord, Split};
use crate::fusion::PadLabel;
use crate::imaging::{save_image, GrayImage};
use crate::segmentation::{write_segmentations, CircleParams, Segmentation};

pub const SYNTH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
    #[error("cannot write {path}: {reason}")]
    Unwritable { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactType {
    BorderRing,
    DotPrint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureParams {
    pub components: usize,
    /// Cycles across the iris band.
    pub max_radial_freq: f64,
    /// Cycles per revolution.
    pub max_angular_freq: u32,
    pub amplitude: f64,
    pub iris_intensity: f64,
    pub pupil_intensity: f64,
    pub sclera_intensity: f64,
    pub noise_sigma: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            components: 24,
            max_radial_freq: 4.0,
            max_angular_freq: 20,
            amplitude: 60.0,
            iris_intensity: 105.0,
            pupil_intensity: 20.0,
            sclera_intensity: 185.0,
            noise_sigma: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactParams {
    pub kind: ArtifactType,
    /// Ring center beyond the iris radius, in units of the iris-pupil distance.
    pub radial_position: f64,
    /// Full ring width in the same units.
    pub radial_width: f64,
    pub contrast: f64,
    pub angular_frequency: u32,
    pub dot_spacing: f64,
    pub dot_radius: f64,
}

impl Default for ArtifactParams {
    fn default() -> Self {
        Self {
            kind: ArtifactType::BorderRing,
            radial_position: 0.06,
            radial_width: 0.16,
            contrast: 30.0,
            angular_frequency: 48,
            dot_spacing: 9.0,
            dot_radius: 1.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub format_version: u32,
    pub image_size: u32,
    pub pupil_radius: [f64; 2],
    pub iris_radius: [f64; 2],
    /// Maximum offset of the iris center from the image center.
    pub center_jitter: f64,
    /// Maximum offset of the pupil center from the iris center.
    pub pupil_offset: f64,
    pub texture: TextureParams,
    pub artifact: ArtifactParams,
    pub bona_fide_count: usize,
    pub attack_count: usize,
    pub soft_lens_count: usize,
    /// Soft-lens ring contrast relative to the attack contrast.
    pub soft_lens_ratio: f64,
    /// Train, dev and test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            format_version: SYNTH_FORMAT_VERSION,
            image_size: 256,
            pupil_radius: [26.0, 40.0],
            iris_radius: [82.0, 98.0],
            center_jitter: 6.0,
            pupil_offset: 2.0,
            texture: TextureParams::default(),
            artifact: ArtifactParams::default(),
            bona_fide_count: 200,
            attack_count: 200,
            soft_lens_count: 0,
            soft_lens_ratio: 0.25,
            split: [0.6, 0.2, 0.2],
            seed: 1,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        let [p0, p1] = self.pupil_radius;
        let [i0, i1] = self.iris_radius;
        if !(p0 > 0.0 && p0 <= p1 && i0 <= i1) {
            return bad("radius ranges must be positive and ordered".into());
        }
        if p1 >= i0 {
            return bad(format!(
                "pupil radii {p0}..{p1} must stay below iris radii {i0}..{i1}"
            ));
        }
        if self.bona_fide_count == 0 || self.attack_count == 0 {
            return bad("at least one bona fide and one attack image are required".into());
        }
        if self.image_size < 16 {
            return bad("image size must be at least 16".into());
        }
        if self.split.iter().any(|f| f.is_nan() || *f < 0.0)
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad("split fractions must be non-negative and sum to 1".into());
        }
        let sigma = self.texture.noise_sigma;
        let width = self.artifact.radial_width;
        if sigma.is_nan() || sigma < 0.0 || width.is_nan() || width <= 0.0 {
            return bad("noise sigma must be non-negative and the ring width positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Component {
    amplitude: f64,
    radial_freq: f64,
    radial_phase: f64,
    angular_freq: f64,
    angular_phase: f64,
}

/// Everything needed to render one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeSpec {
    pub image_id: String,
    pub truth: PadLabel,
    pub lens_type: LensType,
    pub segmentation: Segmentation,
    /// Artifact kind and contrast, if any.
    pub artifact: Option<(ArtifactType, f64)>,
    artifact_phase: f64,
    components: Vec<Component>,
    noise_seed: u64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn eye_spec(p: &SynthParams, index: usize, id: String, lens: LensType) -> EyeSpec {
    let mut rng = stream_rng(p.seed, index as u64);
    let half = p.image_size as f64 / 2.0;
    let j = p.center_jitter;
    let icx = half + uniform(&mut rng, [-j, j]);
    let icy = half + uniform(&mut rng, [-j, j]);
    let ri = uniform(&mut rng, p.iris_radius);
    let rp = uniform(&mut rng, p.pupil_radius);
    let o = p.pupil_offset;
    let pcx = icx + uniform(&mut rng, [-o, o]);
    let pcy = icy + uniform(&mut rng, [-o, o]);
    let t = &p.texture;
    let scale = t.amplitude / (t.components.max(1) as f64).sqrt();
    let components = (0..t.components)
        .map(|_| Component {
            amplitude: scale * rng.random_range(-1.0..1.0),
            radial_freq: rng.random_range(0.0..t.max_radial_freq.max(f64::MIN_POSITIVE)),
            radial_phase: rng.random_range(0.0..2.0 * PI),
            angular_freq: rng.random_range(0..=t.max_angular_freq) as f64,
            angular_phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    let artifact = match lens {
        LensType::None => None,
        LensType::Soft => Some((
            ArtifactType::BorderRing,
            p.artifact.contrast * p.soft_lens_ratio,
        )),
        _ => Some((p.artifact.kind, p.artifact.contrast)),
    };
    let truth = lens.implied_truth();
    EyeSpec {
        image_id: id,
        truth,
        lens_type: lens,
        segmentation: Segmentation {
            pupil: CircleParams::new(pcx, pcy, rp),
            iris: CircleParams::new(icx, icy, ri),
        },
        artifact,
        artifact_phase: rng.random_range(0.0..2.0 * PI),
        components,
        noise_seed: rng.random(),
    }
}

/// Image specs in manifest order: bona fide, attack, soft lens.
pub fn eye_specs(p: &SynthParams) -> Vec<EyeSpec> {
    let attack_lens = match p.artifact.kind {
        ArtifactType::BorderRing => LensType::Textured,
        ArtifactType::DotPrint => LensType::Printout,
    };
    let groups = [
        ("bf", p.bona_fide_count, LensType::None),
        ("at", p.attack_count, attack_lens),
        ("sl", p.soft_lens_count, LensType::Soft),
    ];
    let mut out = Vec::new();
    for (prefix, count, lens) in groups {
        for i in 0..count {
            let index = out.len();
            out.push(eye_spec(p, index, format!("{prefix}{i:04}"), lens));
        }
    }
    out
}

/// `cos(k t)` and `sin(k t)` for all k by angle addition.
fn harmonics(c: f64, s: f64, cos_k: &mut [f64], sin_k: &mut [f64]) {
    let (mut ck, mut sk) = (1.0, 0.0);
    for (co, si) in cos_k.iter_mut().zip(sin_k.iter_mut()) {
        *co = ck;
        *si = sk;
        (ck, sk) = (ck * c - sk * s, sk * c + ck * s);
    }
}

/// Radial factors `amplitude * cos(2 pi f rho + phase)` tabulated over the
/// distance from the iris center.
struct RadialTable {
    step: f64,
    width: usize,
    len: usize,
    values: Vec<f64>,
}

impl RadialTable {
    const STEP: f64 = 0.05;

    fn new(spec: &EyeSpec, size: u32) -> Self {
        let seg = &spec.segmentation;
        let band = seg.iris.r - seg.pupil.r;
        let max_r = 1.5 * size as f64;
        let len = (max_r / Self::STEP) as usize + 2;
        let width = spec.components.len();
        let mut values = Vec::with_capacity(len * width);
        for i in 0..len {
            let rho = (i as f64 * Self::STEP - seg.pupil.r) / band;
            values.extend(
                spec.components
                    .iter()
                    .map(|c| c.amplitude * (2.0 * PI * c.radial_freq * rho + c.radial_phase).cos()),
            );
        }
        Self {
            step: Self::STEP,
            width,
            len,
            values,
        }
    }

    fn eval(&self, r: f64, out: &mut [f64]) {
        let pos = (r / self.step).min((self.len - 2) as f64);
        let i = pos as usize;
        let w = pos - i as f64;
        let a = &self.values[i * self.width..(i + 1) * self.width];
        let b = &self.values[(i + 1) * self.width..(i + 2) * self.width];
        for ((o, a), b) in out.iter_mut().zip(a).zip(b) {
            *o = a * (1.0 - w) + b * w;
        }
    }
}

#[inline]
fn ramp(x: f64) -> f64 {
    (0.5 + x).clamp(0.0, 1.0)
}

/// Renders `spec` with the whole scene rotated counter-clockwise by
/// `rotation` radians about the iris center.
pub fn render_eye(spec: &EyeSpec, p: &SynthParams, rotation: f64) -> GrayImage {
    let t = &p.texture;
    let a = &p.artifact;
    let seg = &spec.segmentation;
    let (cx, cy, ri, rp) = (seg.iris.cx, seg.iris.cy, seg.iris.r, seg.pupil.r);
    let band = ri - rp;
    let ring_center = ri + a.radial_position * band;
    let ring_half = a.radial_width * band / 2.0;
    let normal = Normal::new(0.0, t.noise_sigma.max(f64::MIN_POSITIVE)).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let n = p.image_size;
    let radial = RadialTable::new(spec, n);
    let max_m = spec
        .components
        .iter()
        .map(|c| c.angular_freq as usize)
        .max()
        .unwrap_or(0);
    let mut cos_k = vec![0.0; max_m + 1];
    let mut sin_k = vec![0.0; max_m + 1];
    let mut radial_k = vec![0.0; spec.components.len()];
    let phases: Vec<(usize, f64, f64)> = spec
        .components
        .iter()
        .map(|c| {
            (
                c.angular_freq as usize,
                c.angular_phase.cos(),
                c.angular_phase.sin(),
            )
        })
        .collect();
    let mut pixels = Vec::with_capacity((n * n) as usize);
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let r = dx.hypot(dy);
            let theta = (-dy).atan2(dx) - rotation;
            let (st, ct) = theta.sin_cos();
            let (ux, uy) = (r * ct, -r * st);
            harmonics(ct, st, &mut cos_k, &mut sin_k);
            radial.eval(r, &mut radial_k);
            let iris = t.iris_intensity
                + phases
                    .iter()
                    .zip(&radial_k)
                    .map(|(&(m, cp, sp), rad)| rad * (cos_k[m] * cp - sin_k[m] * sp))
                    .sum::<f64>();
            let w_iris = ramp(ri - r);
            let mut v = w_iris * iris + (1.0 - w_iris) * t.sclera_intensity;
            let dp = (ux + cx - seg.pupil.cx).hypot(uy + cy - seg.pupil.cy);
            let w_pupil = ramp(rp - dp);
            v = w_pupil * t.pupil_intensity + (1.0 - w_pupil) * v;
            match spec.artifact {
                Some((ArtifactType::BorderRing, contrast)) => {
                    let off = r - ring_center;
                    if off.abs() < ring_half {
                        let win = 0.5 * (1.0 + (PI * off / ring_half).cos());
                        v += contrast
                            * win
                            * (a.angular_frequency as f64 * theta + spec.artifact_phase).cos();
                    }
                }
                Some((ArtifactType::DotPrint, contrast)) if r > rp && r < ri => {
                    let s = a.dot_spacing;
                    let gx = ux - (ux / s).round() * s;
                    let gy = uy - (uy / s).round() * s;
                    let d2 = gx * gx + gy * gy;
                    v -= contrast * (-d2 / (2.0 * a.dot_radius * a.dot_radius)).exp();
                }
                _ => {}
            }
            if t.noise_sigma > 0.0 {
                v += normal.sample(&mut rng);
            }
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(n, n, pixels).expect("buffer matches dimensions")
}

/// Stratified split per lens type; deterministic for a fixed seed.
fn assign_splits(specs: &[EyeSpec], p: &SynthParams) -> Vec<Split> {
    let mut splits = vec![Split::Train; specs.len()];
    let mut rng = stream_rng(p.seed, u64::MAX);
    for lens in [
        LensType::None,
        LensType::Textured,
        LensType::Printout,
        LensType::Soft,
    ] {
        let mut idx: Vec<usize> = (0..specs.len())
            .filter(|&i| specs[i].lens_type == lens)
            .collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        let n = idx.len() as f64;
        let n_train = (p.split[0] * n).round() as usize;
        let n_dev = (((p.split[0] + p.split[1]) * n).round() as usize).saturating_sub(n_train);
        for (k, &i) in idx.iter().enumerate() {
            splits[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_dev {
                Split::Dev
            } else {
                Split::Test
            };
        }
    }
    splits
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest_path: PathBuf,
    pub segmentation_path: PathBuf,
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const SEGMENTATION_FILE: &str = "segmentation.txt";

/// Writes `images/*.png`, `manifest.csv`, `segmentation.txt` and
/// `synth_params.json` into `out_dir`.
pub fn synth_generate(p: &SynthParams, out_dir: &Path) -> Result<SynthOutput, SynthError> {
    p.validate()?;
    let unwritable = |path: &Path, e: &dyn std::fmt::Display| SynthError::Unwritable {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| unwritable(&image_dir, &e))?;
    let specs = eye_specs(p);
    specs.par_iter().try_for_each(|spec| {
        let path = image_dir.join(format!("{}.png", spec.image_id));
        save_image(&render_eye(spec, p, 0.0), &path).map_err(|e| unwritable(&path, &e))
    })?;
    let splits = assign_splits(&specs, p);
    let records: Vec<ManifestRecord> = specs
        .iter()
        .zip(&splits)
        .enumerate()
        .map(|(i, (s, &split))| ManifestRecord {
            image_id: s.image_id.clone(),
            path: format!("images/{}.png", s.image_id),
            split,
            truth: s.truth,
            lens_type: s.lens_type,
            segmentation_ref: Some(format!("{SEGMENTATION_FILE}#{i}")),
        })
        .collect();

    let seg_path = out_dir.join(SEGMENTATION_FILE);
    let seg_text = write_segmentations(specs.iter().map(|s| &s.segmentation));
    fs::write(&seg_path, seg_text).map_err(|e| unwritable(&seg_path, &e))?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let file = fs::File::create(&manifest_path).map_err(|e| unwritable(&manifest_path, &e))?;
    write_manifest(file, &records).map_err(|e| unwritable(&manifest_path, &e))?;

    let params_path = out_dir.join("synth_params.json");
    let json = serde_json::to_string_pretty(p).expect("params serialize");
    fs::write(&params_path, json).map_err(|e| unwritable(&params_path, &e))?;

    Ok(SynthOutput {
        manifest_path,
        segmentation_path: seg_path,
        records,
    })
}
