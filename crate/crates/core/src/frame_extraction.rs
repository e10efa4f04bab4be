//! Traffic-layer pixel classification and per-segment level histograms.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock;
use crate::color::Rgb;
use crate::error::{Error, Result};
use crate::road_network::{IntersectionId, RoadNetwork, SegmentMask};

/// Congestion level of one pixel: 0 = no information, 1..=4 by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelLevel(u8);

impl PixelLevel {
    pub const NONE: PixelLevel = PixelLevel(0);

    pub fn new(value: u8) -> Option<Self> {
        (value <= 4).then_some(PixelLevel(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

/// Counts of pixels per level 0..=4.
pub type LevelHistogram = [u32; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficPalette {
    level_colors: [Rgb; 4],
    tolerance: f64,
}

pub const DEFAULT_TOLERANCE: f64 = 30.0;

impl Default for TrafficPalette {
    /// Typical traffic-layer colors. Operators should sample their own tiles.
    fn default() -> Self {
        TrafficPalette {
            level_colors: [
                Rgb::new(0x63, 0xD6, 0x68),
                Rgb::new(0xFF, 0x97, 0x4D),
                Rgb::new(0xF2, 0x3C, 0x32),
                Rgb::new(0x81, 0x1F, 0x1F),
            ],
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl TrafficPalette {
    /// `level_colors[i]` is the color of level `i + 1`.
    pub fn new(level_colors: [Rgb; 4], tolerance: f64) -> Result<Self> {
        if !(tolerance >= 0.0) || !tolerance.is_finite() {
            return Err(Error::Palette(format!("tolerance must be non-negative, got {tolerance}")));
        }
        let min_dist = Self::min_pairwise_distance(&level_colors);
        if min_dist == 0.0 {
            return Err(Error::Palette("level colors must be pairwise distinct".into()));
        }
        if tolerance >= min_dist / 2.0 {
            return Err(Error::Palette(format!(
                "tolerance {tolerance} must be below half the closest color distance ({:.3})",
                min_dist / 2.0
            )));
        }
        Ok(TrafficPalette {
            level_colors,
            tolerance,
        })
    }

    fn min_pairwise_distance(colors: &[Rgb; 4]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..4 {
            for j in i + 1..4 {
                best = best.min(colors[i].distance(&colors[j]));
            }
        }
        best
    }

    pub fn color(&self, level: PixelLevel) -> Option<Rgb> {
        match level.0 {
            1..=4 => Some(self.level_colors[level.0 as usize - 1]),
            _ => None,
        }
    }

    pub fn level_colors(&self) -> &[Rgb; 4] {
        &self.level_colors
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: PaletteFile = toml::from_str(text).map_err(|e| Error::Palette(e.to_string()))?;
        raw.try_into()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let file = PaletteFile::from(self);
        toml::to_string(&file).expect("palette serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct PaletteFile {
    pub level1: String,
    pub level2: String,
    pub level3: String,
    pub level4: String,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl TryFrom<PaletteFile> for TrafficPalette {
    type Error = Error;

    fn try_from(f: PaletteFile) -> Result<Self> {
        TrafficPalette::new(
            [f.level1.parse()?, f.level2.parse()?, f.level3.parse()?, f.level4.parse()?],
            f.tolerance,
        )
    }
}

impl From<&TrafficPalette> for PaletteFile {
    fn from(p: &TrafficPalette) -> Self {
        let c = &p.level_colors;
        PaletteFile {
            level1: c[0].to_hex(),
            level2: c[1].to_hex(),
            level3: c[2].to_hex(),
            level4: c[3].to_hex(),
            tolerance: p.tolerance,
        }
    }
}

/// Nearest palette level within tolerance, else level 0.
pub fn classify_pixel(rgb: Rgb, palette: &TrafficPalette) -> PixelLevel {
    let (best, dist_sq) = palette
        .level_colors
        .iter()
        .enumerate()
        .map(|(i, c)| (i, rgb.distance_sq(c)))
        .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    if dist_sq <= palette.tolerance * palette.tolerance {
        PixelLevel(best as u8 + 1)
    } else {
        PixelLevel::NONE
    }
}

/// One frame reduced to level histograms keyed by segment id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameObservation {
    pub timestamp: NaiveDateTime,
    pub histograms: BTreeMap<String, LevelHistogram>,
}

pub fn extract_frame(
    image: &RgbImage,
    timestamp: NaiveDateTime,
    net: &RoadNetwork,
    mask: &SegmentMask,
    palette: &TrafficPalette,
) -> Result<FrameObservation> {
    if image.dimensions() != mask.dimensions() {
        return Err(Error::Dimension {
            expected: mask.dimensions(),
            found: image.dimensions(),
        });
    }
    let raw = image.as_raw();
    let histograms = net
        .segments()
        .iter()
        .zip(&mask.pixels)
        .map(|(seg, locs)| {
            let mut hist = [0u32; 5];
            for &idx in locs {
                let o = idx as usize * 3;
                let level = classify_pixel(Rgb([raw[o], raw[o + 1], raw[o + 2]]), palette);
                hist[level.0 as usize] += 1;
            }
            (seg.id.clone(), hist)
        })
        .collect();
    Ok(FrameObservation {
        timestamp,
        histograms,
    })
}

/// Reads a PNG whose file name encodes its timestamp and extracts it.
pub fn extract_frame_file(
    path: &Path,
    net: &RoadNetwork,
    mask: &SegmentMask,
    palette: &TrafficPalette,
) -> Result<FrameObservation> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Timestamp(path.display().to_string()))?;
    let timestamp = clock::parse_frame_file_name(name)?;
    let image = crate::io::read_rgb_png(path)?;
    extract_frame(&image, timestamp, net, mask, palette)
}

/// Extracted frames plus the frames that were rejected.
#[derive(Debug, Default)]
pub struct DirectoryExtraction {
    pub frames: Vec<FrameObservation>,
    pub rejected: Vec<(PathBuf, Error)>,
}

/// Extracts every file in `dir` in parallel; output sorted by timestamp.
pub fn extract_directory(
    dir: &Path,
    net: &RoadNetwork,
    mask: &SegmentMask,
    palette: &TrafficPalette,
) -> Result<DirectoryExtraction> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_type().map(|t| t.is_file()).unwrap_or(false) {
            paths.push(entry.path());
        }
    }
    paths.sort();
    let results: Vec<_> = paths
        .into_par_iter()
        .map(|p| {
            let r = extract_frame_file(&p, net, mask, palette);
            (p, r)
        })
        .collect();
    let mut out = DirectoryExtraction::default();
    for (path, r) in results {
        match r {
            Ok(f) => out.frames.push(f),
            Err(e) => out.rejected.push((path, e)),
        }
    }
    out.frames.sort_by_key(|f| f.timestamp);
    Ok(out)
}

/// How incoming-segment histograms become an intersection intensity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Number of pixels at levels 3 and 4.
    #[default]
    Count,
    /// Sum of level values over pixels at levels 3 and 4 (3·c3 + 4·c4).
    ValueSum,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(Aggregation::Count),
            "value-sum" => Ok(Aggregation::ValueSum),
            other => Err(Error::Config(format!("aggregation must be count|value-sum, got {other:?}"))),
        }
    }
}

impl Aggregation {
    pub fn heavy(self, hist: &LevelHistogram) -> u64 {
        match self {
            Aggregation::Count => hist[3] as u64 + hist[4] as u64,
            Aggregation::ValueSum => 3 * hist[3] as u64 + 4 * hist[4] as u64,
        }
    }
}

/// Heavy-congestion measure summed over the incoming segments of `node`.
pub fn intersection_intensity(
    frame: &FrameObservation,
    net: &RoadNetwork,
    node: &IntersectionId,
    aggregation: Aggregation,
) -> Result<u64> {
    let mut total = 0;
    for seg in net.incoming_segments(node)? {
        let hist = frame
            .histograms
            .get(&seg.id)
            .ok_or_else(|| Error::MissingSegment(seg.id.clone()))?;
        total += aggregation.heavy(hist);
    }
    Ok(total)
}

pub const EXTRACTION_HEADER: [&str; 7] = ["timestamp", "segment_id", "c0", "c1", "c2", "c3", "c4"];

#[derive(Debug, Serialize, Deserialize)]
struct ExtractionRecord {
    timestamp: String,
    segment_id: String,
    c0: u32,
    c1: u32,
    c2: u32,
    c3: u32,
    c4: u32,
}

pub fn write_extraction<W: Write>(writer: W, frames: &[FrameObservation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(EXTRACTION_HEADER)?;
    for f in frames {
        let ts = clock::format_iso(&f.timestamp);
        for (seg, h) in &f.histograms {
            w.serialize(ExtractionRecord {
                timestamp: ts.clone(),
                segment_id: seg.clone(),
                c0: h[0],
                c1: h[1],
                c2: h[2],
                c3: h[3],
                c4: h[4],
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<extraction>", e))?;
    Ok(())
}

/// Groups extraction records back into frames, sorted by timestamp.
pub fn read_extraction<R: Read>(reader: R) -> Result<Vec<FrameObservation>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    crate::io::expect_header(&headers, &EXTRACTION_HEADER)?;
    let mut frames: BTreeMap<NaiveDateTime, BTreeMap<String, LevelHistogram>> = BTreeMap::new();
    for rec in rdr.deserialize::<ExtractionRecord>() {
        let rec = rec?;
        let ts = clock::parse_iso(&rec.timestamp)?;
        let hist = [rec.c0, rec.c1, rec.c2, rec.c3, rec.c4];
        if frames
            .entry(ts)
            .or_default()
            .insert(rec.segment_id.clone(), hist)
            .is_some()
        {
            return Err(Error::Schema {
                column: "segment_id".into(),
                message: format!("segment {} repeated at {}", rec.segment_id, rec.timestamp),
            });
        }
    }
    Ok(frames
        .into_iter()
        .map(|(timestamp, histograms)| FrameObservation {
            timestamp,
            histograms,
        })
        .collect())
}
