//! Seeded ground-truth congestion processes and their rendering as
//! traffic-layer frames.
//!
//! Each segment follows a latent value
//! `base + a·(profile(t) − base) + offset + e_t`, where `a` is the regime
//! amplitude factor and `e_t` is AR(1) noise whose innovations have standard
//! deviation `sqrt(variance)` times the regime noise factor. The latent value
//! rounded and clamped to 1..=4 is the segment's level.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{self, DAY_WINDOW_SECS};
use crate::color::Rgb;
use crate::error::{Error, Result};
use crate::frame_extraction::{PaletteFile, PixelLevel, TrafficPalette};
use crate::road_network::{write_registry, RegistryRow, RoadNetwork, SegmentMask};
use crate::series_store::IntensityMatrix;

pub const DEMO_SCENE: &str = include_str!("../scenes/demo.toml");

/// Diurnal latent level over the 06:00–24:00 window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Profile {
    Flat {
        level: f64,
    },
    Sine {
        base: f64,
        amplitude: f64,
        peak_hour: f64,
        period_hours: f64,
    },
    /// Linear interpolation through `[hour, level]` points, held flat
    /// outside them.
    Piecewise {
        base: f64,
        points: Vec<[f64; 2]>,
    },
}

impl Profile {
    pub fn base(&self) -> f64 {
        match self {
            Profile::Flat { level } => *level,
            Profile::Sine { base, .. } | Profile::Piecewise { base, .. } => *base,
        }
    }

    pub fn value(&self, t: &NaiveDateTime) -> f64 {
        let h = clock::seconds_of_day(t) as f64 / 3600.0;
        match self {
            Profile::Flat { level } => *level,
            Profile::Sine {
                base,
                amplitude,
                peak_hour,
                period_hours,
            } => base + amplitude * (2.0 * std::f64::consts::PI * (h - peak_hour) / period_hours).cos(),
            Profile::Piecewise { points, .. } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if h <= first[0] {
                    return first[1];
                }
                if h >= last[0] {
                    return last[1];
                }
                let k = points.partition_point(|p| p[0] <= h);
                let (a, b) = (points[k - 1], points[k]);
                a[1] + (b[1] - a[1]) * (h - a[0]) / (b[0] - a[0])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Profile::Sine { period_hours, .. } if !(*period_hours > 0.0) => {
                Err(Error::Config("profile period_hours must be positive".into()))
            }
            Profile::Piecewise { points, .. } => {
                if points.is_empty() || points.windows(2).any(|w| !(w[0][0] < w[1][0])) {
                    Err(Error::Config("piecewise profile needs points with increasing hours".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeFactors {
    pub weekday_amplitude: f64,
    pub weekend_amplitude: f64,
    pub weekday_noise: f64,
    pub weekend_noise: f64,
}

impl Default for RegimeFactors {
    fn default() -> Self {
        RegimeFactors {
            weekday_amplitude: 1.0,
            weekend_amplitude: 1.0,
            weekday_noise: 1.0,
            weekend_noise: 1.0,
        }
    }
}

impl RegimeFactors {
    fn for_date(&self, d: NaiveDate) -> (f64, f64) {
        if clock::is_weekend(d) {
            (self.weekend_amplitude, self.weekend_noise)
        } else {
            (self.weekday_amplitude, self.weekday_noise)
        }
    }
}

/// AR(1) noise: `e_t = phi·e_{t−1} + σ·z_t`, `σ² = variance`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub phi: f64,
    pub variance: f64,
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::Config(format!("noise phi must satisfy |phi| < 1, got {}", self.phi)));
        }
        if !(self.variance >= 0.0) {
            return Err(Error::Config(format!("noise variance must be ≥ 0, got {}", self.variance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Annotation color in the mask.
    pub color: String,
    /// `[x, y, width, height]` rectangles.
    pub rects: Vec<[u32; 4]>,
    #[serde(default)]
    pub offset: f64,
    /// Holds the segment at a fixed level.
    #[serde(default)]
    pub pin: Option<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    width: u32,
    height: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    palette: Option<PaletteFile>,
    profile: Profile,
    #[serde(default)]
    regime: RegimeFactors,
    #[serde(default)]
    noise: NoiseSpec,
    segment: Vec<SegmentSpec>,
}

/// A road network with rectangle geometry, a palette and process parameters.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub network: RoadNetwork,
    pub mask: SegmentMask,
    pub mask_image: RgbImage,
    pub palette: TrafficPalette,
    pub profile: Profile,
    pub regime: RegimeFactors,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// In network segment order.
    pub segments: Vec<SegmentSpec>,
}

impl SyntheticScene {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Config(format!("scene: {e}")))?;
        Self::build(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn demo() -> Self {
        Self::from_toml_str(DEMO_SCENE).expect("bundled scene is valid")
    }

    fn build(file: SceneFile) -> Result<Self> {
        file.profile.validate()?;
        file.noise.validate()?;
        if file.width == 0 || file.height == 0 {
            return Err(Error::Config("scene width and height must be positive".into()));
        }
        let palette = match file.palette {
            Some(p) => p.try_into()?,
            None => TrafficPalette::default(),
        };
        let mut img = RgbImage::from_pixel(file.width, file.height, Rgb::WHITE.into());
        let mut owner: Vec<Option<usize>> = vec![None; (file.width * file.height) as usize];
        for (k, s) in file.segment.iter().enumerate() {
            if let Some(p) = s.pin {
                if !(1..=4).contains(&p) {
                    return Err(Error::Config(format!("segment {}: pin must be 1..=4", s.id)));
                }
            }
            let color: Rgb = s.color.parse()?;
            if color == Rgb::WHITE {
                return Err(Error::Config(format!("segment {}: white is the background color", s.id)));
            }
            for &[x, y, w, h] in &s.rects {
                if w == 0 || h == 0 || x + w > file.width || y + h > file.height {
                    return Err(Error::Config(format!("segment {}: rectangle {:?} outside the scene", s.id, [x, y, w, h])));
                }
                for yy in y..y + h {
                    for xx in x..x + w {
                        let idx = (yy * file.width + xx) as usize;
                        match owner[idx] {
                            Some(o) if o != k => {
                                return Err(Error::Config(format!(
                                    "segments {} and {} overlap at ({xx}, {yy})",
                                    file.segment[o].id, s.id
                                )))
                            }
                            _ => owner[idx] = Some(k),
                        }
                        img.put_pixel(xx, yy, color.into());
                    }
                }
            }
        }
        let rows: Vec<RegistryRow> = file
            .segment
            .iter()
            .map(|s| RegistryRow {
                segment_id: s.id.clone(),
                color_hex: s.color.clone(),
                from_id: s.from.clone(),
                to_id: s.to.clone(),
            })
            .collect();
        let (network, mask) = RoadNetwork::load(&rows, &img)?;
        let by_id: BTreeMap<&str, &SegmentSpec> = file.segment.iter().map(|s| (s.id.as_str(), s)).collect();
        let segments = network.segments().iter().map(|s| by_id[s.id.as_str()].clone()).collect();
        Ok(SyntheticScene {
            network,
            mask,
            mask_image: img,
            palette,
            profile: file.profile,
            regime: file.regime,
            noise: file.noise,
            seed: file.seed,
            segments,
        })
    }

    pub fn registry(&self) -> Vec<RegistryRow> {
        self.network.to_registry()
    }

    /// Writes `registry.csv`, `mask.png` and `palette.toml` into `dir`.
    pub fn write_inputs(&self, dir: &Path) -> Result<SceneInputs> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let out = SceneInputs {
            registry: dir.join("registry.csv"),
            mask: dir.join("mask.png"),
            palette: dir.join("palette.toml"),
        };
        crate::io::atomic_write_with(&out.registry, |buf| write_registry(buf, &self.registry()))?;
        crate::io::write_png(&out.mask, &self.mask_image)?;
        crate::io::atomic_write(&out.palette, self.palette.to_toml_string().as_bytes())?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneInputs {
    pub registry: PathBuf,
    pub mask: PathBuf,
    pub palette: PathBuf,
}

/// Levels of every segment (network order) at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelFrame {
    pub timestamp: NaiveDateTime,
    pub levels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedProcess {
    pub frames: Vec<LevelFrame>,
    /// Count-rule intensities implied by the levels.
    pub matrix: IntensityMatrix,
}

fn instants(days: &[NaiveDate], cadence_secs: u32) -> Result<Vec<NaiveDateTime>> {
    if days.is_empty() {
        return Err(Error::Config("at least one day is required".into()));
    }
    if cadence_secs == 0 || DAY_WINDOW_SECS % cadence_secs != 0 {
        return Err(Error::Interval(format!("{cadence_secs}s does not divide the 18 h window")));
    }
    let days: BTreeSet<NaiveDate> = days.iter().copied().collect();
    Ok(days.iter().flat_map(|d| clock::day_instants(*d, cadence_secs)).collect())
}

/// AR(1) path over `ts`, started from its stationary distribution. The
/// innovation scale follows each instant's regime.
fn ar_path(ts: &[NaiveDateTime], noise: &NoiseSpec, regime: &RegimeFactors, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sd = noise.variance.sqrt();
    let mut out = Vec::with_capacity(ts.len());
    let mut e = 0.0;
    for (i, t) in ts.iter().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        let scale = sd * regime.for_date(t.date()).1;
        e = if i == 0 {
            z * scale / (1.0 - noise.phi * noise.phi).sqrt()
        } else {
            noise.phi * e + scale * z
        };
        out.push(e);
    }
    out
}

fn segment_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates every segment's level at each `cadence_secs` instant of `days`.
pub fn simulate_process(scene: &SyntheticScene, days: &[NaiveDate], cadence_secs: u32, seed: u64) -> Result<SimulatedProcess> {
    let ts = instants(days, cadence_secs)?;
    let base = scene.profile.base();
    let per_segment: Vec<Vec<u8>> = scene
        .segments
        .par_iter()
        .enumerate()
        .map(|(k, spec)| {
            if let Some(p) = spec.pin {
                return vec![p; ts.len()];
            }
            let mut rng = segment_rng(seed, k as u64);
            let noise = ar_path(&ts, &scene.noise, &scene.regime, &mut rng);
            ts.iter()
                .zip(noise)
                .map(|(t, e)| {
                    let amp = scene.regime.for_date(t.date()).0;
                    let latent = base + amp * (scene.profile.value(t) - base) + spec.offset + e;
                    latent.round().clamp(1.0, 4.0) as u8
                })
                .collect()
        })
        .collect();

    let frames: Vec<LevelFrame> = ts
        .iter()
        .enumerate()
        .map(|(i, t)| LevelFrame {
            timestamp: *t,
            levels: per_segment.iter().map(|s| s[i]).collect(),
        })
        .collect();

    let columns = scene.network.intersection_ids();
    let index: BTreeMap<&str, usize> = scene
        .network
        .segments()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let incoming: Vec<Vec<(usize, u64)>> = columns
        .iter()
        .map(|n| {
            scene
                .network
                .incoming_segments(n)
                .map(|segs| segs.iter().map(|s| (index[s.id.as_str()], s.pixel_count as u64)).collect())
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(ts.len() * columns.len());
    for f in &frames {
        for inc in &incoming {
            let v: u64 = inc.iter().filter(|(k, _)| f.levels[*k] >= 3).map(|(_, c)| c).sum();
            values.push(Some(v));
        }
    }
    let matrix = IntensityMatrix::new(ts, columns, values)?;
    Ok(SimulatedProcess { frames, matrix })
}

/// Paints one frame: mask pixels take their level's palette color, the rest
/// stays white.
pub fn render_frame(scene: &SyntheticScene, frame: &LevelFrame) -> Result<RgbImage> {
    if frame.levels.len() != scene.mask.pixels.len() {
        return Err(Error::Config(format!(
            "frame {} assigns {} levels for {} segments",
            clock::format_iso(&frame.timestamp),
            frame.levels.len(),
            scene.mask.pixels.len()
        )));
    }
    let (w, h) = scene.mask.dimensions();
    let mut img = RgbImage::from_pixel(w, h, Rgb::WHITE.into());
    let raw: &mut [u8] = &mut img;
    for (locs, &level) in scene.mask.pixels.iter().zip(&frame.levels) {
        let color = PixelLevel::new(level)
            .and_then(|l| scene.palette.color(l))
            .ok_or_else(|| Error::Config(format!("level {level} has no palette color")))?;
        for &idx in locs {
            let o = idx as usize * 3;
            raw[o..o + 3].copy_from_slice(&color.0);
        }
    }
    Ok(img)
}

/// Writes one PNG per frame into `out_dir`, named by timestamp.
pub fn render_frames(scene: &SyntheticScene, frames: &[LevelFrame], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    frames
        .par_iter()
        .map(|f| {
            let path = out_dir.join(clock::frame_file_name(&f.timestamp));
            crate::io::write_png(&path, &render_frame(scene, f)?)?;
            Ok(path)
        })
        .collect()
}

/// `profile(t) + e_t` at each `cadence_secs` instant of `days`, with no
/// regime scaling and no thresholding.
pub fn simulate_series(
    profile: &Profile,
    phi: f64,
    variance: f64,
    days: &[NaiveDate],
    cadence_secs: u32,
    seed: u64,
) -> Result<Vec<(NaiveDateTime, f64)>> {
    profile.validate()?;
    let noise = NoiseSpec { phi, variance };
    noise.validate()?;
    let ts = instants(days, cadence_secs)?;
    let mut rng = segment_rng(seed, 0);
    let e = ar_path(&ts, &noise, &RegimeFactors::default(), &mut rng);
    Ok(ts.iter().zip(e).map(|(t, e)| (*t, profile.value(t) + e)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_extraction::{classify_pixel, extract_frame, Aggregation};
    use crate::series_store::assemble_matrix;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 11, d).unwrap()
    }

    fn small_scene(profile: &str, extra: &str) -> SyntheticScene {
        let text = format!(
            r##"
width = 20
height = 10
seed = 7
[profile]
{profile}
[noise]
phi = 0.5
variance = 0.0
[[segment]]
id = "s1"
from = "A"
to = "B"
color = "#000001"
rects = [[0, 0, 5, 2]]
{extra}
[[segment]]
id = "s2"
from = "B"
to = "A"
color = "#000002"
rects = [[0, 5, 10, 1], [12, 5, 3, 3]]
"##
        );
        SyntheticScene::from_toml_str(&text).unwrap()
    }

    #[test]
    fn demo_scene_shape() {
        let s = SyntheticScene::demo();
        assert!(s.network.segments().len() >= 10);
        assert!(s.network.intersections().count() >= 4);
        for (seg, spec) in s.network.segments().iter().zip(&s.segments) {
            let area: u32 = spec.rects.iter().map(|r| r[2] * r[3]).sum();
            assert_eq!(seg.pixel_count, area);
        }
    }

    #[test]
    fn one_day_has_2160_instants() {
        let p = simulate_process(&SyntheticScene::demo(), &[day(4)], 30, 1).unwrap();
        assert_eq!(p.frames.len(), 2160);
        assert_eq!(p.matrix.rows(), 2160);
        assert!(p.frames.iter().all(|f| f.levels.iter().all(|l| (1..=4).contains(l))));
    }

    #[test]
    fn flat_level_two_gives_zero_intensity() {
        let s = small_scene("shape = \"flat\"\nlevel = 2.0", "");
        let p = simulate_process(&s, &[day(4)], 300, 3).unwrap();
        assert!((0..p.matrix.rows()).all(|r| p.matrix.row(r).iter().all(|v| *v == Some(0))));
    }

    #[test]
    fn pinned_heavy_segment_fills_head_intersection() {
        let s = small_scene("shape = \"flat\"\nlevel = 1.0", "pin = 4");
        let p = simulate_process(&s, &[day(4)], 300, 3).unwrap();
        let b = p.matrix.column_index(&crate::road_network::IntersectionId::parse("B").unwrap()).unwrap();
        let a = p.matrix.column_index(&crate::road_network::IntersectionId::parse("A").unwrap()).unwrap();
        assert!(p.matrix.column(b).all(|v| v == Some(10)));
        assert!(p.matrix.column(a).all(|v| v == Some(0)));
    }

    #[test]
    fn same_seed_same_realization() {
        let s = SyntheticScene::demo();
        let a = simulate_process(&s, &[day(4), day(8)], 60, 11).unwrap();
        let b = simulate_process(&s, &[day(8), day(4)], 60, 11).unwrap();
        let c = simulate_process(&s, &[day(4), day(8)], 60, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn render_then_extract_is_identity() {
        let s = SyntheticScene::demo();
        let p = simulate_process(&s, &[day(4)], 1800, 5).unwrap();
        let mut frames = Vec::new();
        for f in &p.frames {
            let img = render_frame(&s, f).unwrap();
            let obs = extract_frame(&img, f.timestamp, &s.network, &s.mask, &s.palette).unwrap();
            for ((seg, locs), &level) in s.network.segments().iter().zip(&s.mask.pixels).zip(&f.levels) {
                let h = obs.histograms[&seg.id];
                assert_eq!(h[level as usize], locs.len() as u32);
            }
            frames.push(obs);
        }
        let m = assemble_matrix(&frames, &s.network, Aggregation::Count).unwrap();
        assert_eq!(m, p.matrix);
    }

    #[test]
    fn single_segment_render_uses_only_level_color() {
        let s = small_scene("shape = \"flat\"\nlevel = 3.0", "");
        let frame = LevelFrame {
            timestamp: day(4).and_hms_opt(7, 0, 0).unwrap(),
            levels: vec![3, 3],
        };
        let img = render_frame(&s, &frame).unwrap();
        let l3 = s.palette.color(PixelLevel::new(3).unwrap()).unwrap();
        for p in img.pixels() {
            let c = Rgb(p.0);
            assert!(c == Rgb::WHITE || c == l3);
            if c != Rgb::WHITE {
                assert_eq!(classify_pixel(c, &s.palette).value(), 3);
            }
        }
    }

    #[test]
    fn bad_scenes_rejected() {
        let base = "width = 4\nheight = 4\n[profile]\nshape = \"flat\"\nlevel = 2.0\n";
        let overlap = format!(
            "{base}[[segment]]\nid = \"a\"\nfrom = \"A\"\nto = \"B\"\ncolor = \"#000001\"\nrects = [[0,0,2,2]]\n\
             [[segment]]\nid = \"b\"\nfrom = \"B\"\nto = \"A\"\ncolor = \"#000002\"\nrects = [[1,1,2,2]]\n"
        );
        assert!(SyntheticScene::from_toml_str(&overlap).is_err());
        let outside = format!("{base}[[segment]]\nid = \"a\"\nfrom = \"A\"\nto = \"B\"\ncolor = \"#000001\"\nrects = [[3,3,2,2]]\n");
        assert!(SyntheticScene::from_toml_str(&outside).is_err());
        let noise = format!("{base}[noise]\nphi = 1.0\n[[segment]]\nid = \"a\"\nfrom = \"A\"\nto = \"B\"\ncolor = \"#000001\"\nrects = [[0,0,1,1]]\n");
        assert!(SyntheticScene::from_toml_str(&noise).is_err());
        let s = SyntheticScene::demo();
        assert!(simulate_process(&s, &[], 30, 0).is_err());
        assert!(simulate_process(&s, &[day(4)], 7, 0).is_err());
    }

    #[test]
    fn series_without_noise_is_the_profile() {
        let p = Profile::Piecewise {
            base: 1.0,
            points: vec![[6.0, 1.0], [9.0, 4.0], [12.0, 2.0]],
        };
        let s = simulate_series(&p, 0.0, 0.0, &[day(4)], 1800, 9).unwrap();
        assert_eq!(s.len(), 36);
        assert_eq!(s[0].1, 1.0);
        assert_eq!(s[3].1, 2.5); // 07:30
        assert_eq!(s[6].1, 4.0); // 09:00
        assert_eq!(s[9].1, 3.0); // 10:30
        assert_eq!(s[20].1, 2.0);
        assert!(s.iter().all(|(t, v)| *v == p.value(t)));
    }

    #[test]
    fn series_autocorrelation_matches_phi() {
        let days: Vec<_> = (4..=8).map(day).collect();
        let flat = Profile::Flat { level: 0.0 };
        let s: Vec<f64> = simulate_series(&flat, 0.8, 1.0, &days, 30, 21).unwrap().into_iter().map(|p| p.1).collect();
        assert!(s.len() >= 10_000);
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let c0: f64 = s.iter().map(|v| (v - mean).powi(2)).sum();
        let c1: f64 = s.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((c1 / c0 - 0.8).abs() < 0.03, "{}", c1 / c0);
        let again: Vec<f64> = simulate_series(&flat, 0.8, 1.0, &days, 30, 21).unwrap().into_iter().map(|p| p.1).collect();
        assert_eq!(s, again);
    }
}
