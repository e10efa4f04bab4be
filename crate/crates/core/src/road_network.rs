//! Annotated road graph: directed segments keyed by a unique annotation color,
//! joined at intersections.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::color::Rgb;
use crate::error::{Error, Result};

/// OpenStreetMap-style node identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntersectionId(String);

impl IntersectionId {
    /// Accepts non-empty ids made of ASCII alphanumerics and `-_.:/`.
    pub fn parse(raw: &str) -> Result<Self> {
        let ok = !raw.is_empty()
            && raw
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | ':' | '/'));
        if ok {
            Ok(IntersectionId(raw.to_owned()))
        } else {
            Err(Error::InvalidId(raw.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IntersectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoadSegment {
    pub id: String,
    pub color: Rgb,
    pub from: IntersectionId,
    pub to: IntersectionId,
    /// Number of mask pixels carrying `color`; zero until bound to a mask.
    pub pixel_count: u32,
}

/// One row of the segment registry CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryRow {
    pub segment_id: String,
    pub color_hex: String,
    pub from_id: String,
    pub to_id: String,
}

pub const REGISTRY_HEADER: [&str; 4] = ["segment_id", "color_hex", "from_id", "to_id"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoadNetwork {
    intersections: BTreeSet<IntersectionId>,
    /// Sorted by segment id.
    segments: Vec<RoadSegment>,
    adjacency: BTreeMap<IntersectionId, BTreeSet<IntersectionId>>,
}

/// Mask pixel locations (row-major indices) for every segment, in the
/// network's segment order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMask {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Vec<u32>>,
}

impl SegmentMask {
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

impl RoadNetwork {
    /// Builds a network without checking invariants; use [`validate`] to
    /// inspect the result.
    pub fn from_parts(
        intersections: impl IntoIterator<Item = IntersectionId>,
        segments: impl IntoIterator<Item = RoadSegment>,
    ) -> Self {
        let intersections: BTreeSet<_> = intersections.into_iter().collect();
        let mut segments: Vec<_> = segments.into_iter().collect();
        segments.sort_by(|a, b| a.id.cmp(&b.id));
        let mut adjacency: BTreeMap<IntersectionId, BTreeSet<IntersectionId>> = intersections
            .iter()
            .map(|n| (n.clone(), BTreeSet::new()))
            .collect();
        for s in &segments {
            if s.from == s.to {
                continue;
            }
            adjacency.entry(s.from.clone()).or_default().insert(s.to.clone());
            adjacency.entry(s.to.clone()).or_default().insert(s.from.clone());
        }
        RoadNetwork {
            intersections,
            segments,
            adjacency,
        }
    }

    /// Builds the topology from registry rows alone; pixel counts stay zero.
    pub fn from_registry(rows: &[RegistryRow]) -> Result<Self> {
        let segments = parse_registry_rows(rows)?;
        let nodes: Vec<_> = segments
            .iter()
            .flat_map(|s| [s.from.clone(), s.to.clone()])
            .collect();
        Ok(Self::from_parts(nodes, segments))
    }

    /// Binds registry rows to an annotation mask: each segment's pixels are the
    /// mask pixels that exactly match its color.
    pub fn load(rows: &[RegistryRow], mask: &RgbImage) -> Result<(Self, SegmentMask)> {
        let mut net = Self::from_registry(rows)?;
        let by_color: HashMap<Rgb, usize> = net
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.color, i))
            .collect();
        let mut pixels = vec![Vec::new(); net.segments.len()];
        for (idx, p) in mask.pixels().enumerate() {
            if let Some(&seg) = by_color.get(&Rgb(p.0)) {
                pixels[seg].push(idx as u32);
            }
        }
        for (seg, locs) in net.segments.iter_mut().zip(&pixels) {
            if locs.is_empty() {
                return Err(Error::ColorNotInMask {
                    segment: seg.id.clone(),
                    color: seg.color.to_hex(),
                });
            }
            seg.pixel_count = locs.len() as u32;
        }
        let mask = SegmentMask {
            width: mask.width(),
            height: mask.height(),
            pixels,
        };
        Ok((net, mask))
    }

    pub fn intersections(&self) -> impl Iterator<Item = &IntersectionId> {
        self.intersections.iter()
    }

    /// Intersection ids in sorted order.
    pub fn intersection_ids(&self) -> Vec<IntersectionId> {
        self.intersections.iter().cloned().collect()
    }

    pub fn contains(&self, node: &IntersectionId) -> bool {
        self.intersections.contains(node)
    }

    pub fn segments(&self) -> &[RoadSegment] {
        &self.segments
    }

    pub fn segment(&self, id: &str) -> Option<&RoadSegment> {
        self.segments
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.segments[i])
    }

    pub fn node(&self, raw: &str) -> Result<&IntersectionId> {
        self.intersections
            .iter()
            .find(|n| n.as_str() == raw)
            .ok_or_else(|| Error::UnknownNode(raw.to_owned()))
    }

    fn check(&self, node: &IntersectionId) -> Result<()> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(Error::UnknownNode(node.to_string()))
        }
    }

    /// Segments whose head is `node`, sorted by id.
    pub fn incoming_segments(&self, node: &IntersectionId) -> Result<Vec<&RoadSegment>> {
        self.check(node)?;
        Ok(self.segments.iter().filter(|s| &s.to == node).collect())
    }

    /// Segments whose tail is `node`, sorted by id.
    pub fn outgoing_segments(&self, node: &IntersectionId) -> Result<Vec<&RoadSegment>> {
        self.check(node)?;
        Ok(self.segments.iter().filter(|s| &s.from == node).collect())
    }

    /// Intersections sharing a segment with `node` in either direction, sorted.
    pub fn neighbors(&self, node: &IntersectionId) -> Result<Vec<&IntersectionId>> {
        self.check(node)?;
        Ok(self
            .adjacency
            .get(node)
            .map(|s| s.iter().collect())
            .unwrap_or_default())
    }

    pub fn to_registry(&self) -> Vec<RegistryRow> {
        self.segments
            .iter()
            .map(|s| RegistryRow {
                segment_id: s.id.clone(),
                color_hex: s.color.to_hex(),
                from_id: s.from.to_string(),
                to_id: s.to.to_string(),
            })
            .collect()
    }
}

fn parse_registry_rows(rows: &[RegistryRow]) -> Result<Vec<RoadSegment>> {
    let mut ids = HashMap::new();
    let mut colors: HashMap<Rgb, &str> = HashMap::new();
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        // 1-based data row, header excluded
        let n = i + 1;
        let err = |message: String| Error::Registry { row: n, message };
        if row.segment_id.is_empty() {
            return Err(err("empty segment id".into()));
        }
        if let Some(prev) = ids.insert(row.segment_id.as_str(), n) {
            return Err(err(format!(
                "duplicate segment id {:?} (first seen in row {prev})",
                row.segment_id
            )));
        }
        let color: Rgb = row
            .color_hex
            .parse()
            .map_err(|_| err(format!("bad color {:?}", row.color_hex)))?;
        if let Some(other) = colors.insert(color, &row.segment_id) {
            return Err(err(format!(
                "color {color} of segment {:?} already used by {other:?}",
                row.segment_id
            )));
        }
        let from = IntersectionId::parse(&row.from_id).map_err(|e| err(e.to_string()))?;
        let to = IntersectionId::parse(&row.to_id).map_err(|e| err(e.to_string()))?;
        if from == to {
            return Err(err(format!(
                "segment {:?} starts and ends at {from}",
                row.segment_id
            )));
        }
        out.push(RoadSegment {
            id: row.segment_id.clone(),
            color,
            from,
            to,
            pixel_count: 0,
        });
    }
    Ok(out)
}

pub fn read_registry<R: Read>(reader: R) -> Result<Vec<RegistryRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, want) in REGISTRY_HEADER.iter().enumerate() {
        if headers.get(i) != Some(*want) {
            return Err(Error::Schema {
                column: want.to_string(),
                message: format!("registry header must be {}", REGISTRY_HEADER.join(",")),
            });
        }
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_registry_file(path: &Path) -> Result<Vec<RegistryRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_registry(file)
}

pub fn write_registry<W: Write>(writer: W, rows: &[RegistryRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(REGISTRY_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<registry>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    DanglingEndpoint { segment: String, endpoint: String },
    ColorCollision { color: Rgb, segments: Vec<String> },
    ZeroPixels { segment: String },
    SelfLoop { segment: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::DanglingEndpoint { segment, endpoint } => {
                write!(f, "dangling endpoint: segment {segment} references {endpoint}")
            }
            Issue::ColorCollision { color, segments } => {
                write!(f, "color collision: {color} shared by {}", segments.join(", "))
            }
            Issue::ZeroPixels { segment } => write!(f, "zero pixels: segment {segment}"),
            Issue::SelfLoop { segment } => write!(f, "self loop: segment {segment}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Reports every broken invariant; never fails.
pub fn validate(net: &RoadNetwork) -> ValidationReport {
    let mut issues = Vec::new();
    let mut by_color: BTreeMap<Rgb, Vec<String>> = BTreeMap::new();
    for s in &net.segments {
        for end in [&s.from, &s.to] {
            if !net.intersections.contains(end) {
                issues.push(Issue::DanglingEndpoint {
                    segment: s.id.clone(),
                    endpoint: end.to_string(),
                });
            }
        }
        if s.from == s.to {
            issues.push(Issue::SelfLoop {
                segment: s.id.clone(),
            });
        }
        if s.pixel_count == 0 {
            issues.push(Issue::ZeroPixels {
                segment: s.id.clone(),
            });
        }
        by_color.entry(s.color).or_default().push(s.id.clone());
    }
    for (color, segments) in by_color {
        if segments.len() > 1 {
            issues.push(Issue::ColorCollision { color, segments });
        }
    }
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> IntersectionId {
        IntersectionId::parse(s).unwrap()
    }

    fn row(seg: &str, color: &str, from: &str, to: &str) -> RegistryRow {
        RegistryRow {
            segment_id: seg.into(),
            color_hex: color.into(),
            from_id: from.into(),
            to_id: to.into(),
        }
    }

    fn seg(sid: &str, color: [u8; 3], from: &str, to: &str, px: u32) -> RoadSegment {
        RoadSegment {
            id: sid.into(),
            color: Rgb(color),
            from: id(from),
            to: id(to),
            pixel_count: px,
        }
    }

    /// 8x8 white mask; the first `red` pixels red and the next `green` green.
    fn mask(red: usize, green: usize) -> RgbImage {
        let mut img = RgbImage::from_pixel(8, 8, image::Rgb([255, 255, 255]));
        for (i, p) in img.pixels_mut().enumerate() {
            if i < red {
                *p = image::Rgb([255, 0, 0]);
            } else if i < red + green {
                *p = image::Rgb([0, 255, 0]);
            }
        }
        img
    }

    #[test]
    fn load_two_segments_counts_pixels() {
        let rows = [row("s1", "#FF0000", "A", "B"), row("s2", "#00FF00", "B", "A")];
        let (net, m) = RoadNetwork::load(&rows, &mask(10, 12)).unwrap();
        assert_eq!(net.intersections().count(), 2);
        assert_eq!(net.segments().len(), 2);
        assert_eq!(net.segment("s1").unwrap().pixel_count, 10);
        assert_eq!(net.segment("s2").unwrap().pixel_count, 12);
        assert_eq!(m.pixels[0].len(), 10);
        assert_eq!(m.pixels[1], (10..22).collect::<Vec<u32>>());
        assert!(validate(&net).is_empty());
    }

    #[test]
    fn load_empty() {
        let blank = RgbImage::from_pixel(4, 4, image::Rgb([255, 255, 255]));
        let (net, m) = RoadNetwork::load(&[], &blank).unwrap();
        assert_eq!(net.intersections().count(), 0);
        assert!(net.segments().is_empty());
        assert!(m.pixels.is_empty());
    }

    #[test]
    fn load_rejections() {
        let m = mask(10, 12);
        let dup_id = [row("s1", "#FF0000", "A", "B"), row("s1", "#00FF00", "B", "A")];
        assert!(matches!(
            RoadNetwork::load(&dup_id, &m),
            Err(Error::Registry { row: 2, .. })
        ));
        let dup_color = [row("s1", "#FF0000", "A", "B"), row("s2", "#ff0000", "B", "A")];
        assert!(matches!(
            RoadNetwork::load(&dup_color, &m),
            Err(Error::Registry { row: 2, .. })
        ));
        let absent = [row("s1", "#FF0000", "A", "B"), row("s9", "#0000FF", "B", "A")];
        match RoadNetwork::load(&absent, &m) {
            Err(Error::ColorNotInMask { segment, .. }) => assert_eq!(segment, "s9"),
            other => panic!("unexpected {other:?}"),
        }
        let bad_node = [row("s1", "#FF0000", "A B", "B")];
        assert!(matches!(
            RoadNetwork::load(&bad_node, &m),
            Err(Error::Registry { row: 1, .. })
        ));
        let empty_node = [row("s1", "#FF0000", "", "B")];
        assert!(RoadNetwork::load(&empty_node, &m).is_err());
    }

    #[test]
    fn incoming_and_neighbors() {
        let net = RoadNetwork::from_parts(
            [id("A"), id("B")],
            [seg("ab", [1, 0, 0], "A", "B", 1), seg("ba", [2, 0, 0], "B", "A", 1)],
        );
        let inc: Vec<_> = net.incoming_segments(&id("B")).unwrap().iter().map(|s| s.id.clone()).collect();
        assert_eq!(inc, ["ab"]);
        assert_eq!(net.neighbors(&id("A")).unwrap(), [&id("B")]);
        assert!(matches!(net.incoming_segments(&id("Z")), Err(Error::UnknownNode(_))));
        assert!(matches!(net.neighbors(&id("Z")), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn one_way_edge_is_symmetric_adjacency() {
        let net = RoadNetwork::from_parts([id("A"), id("B"), id("C")], [seg("ab", [1, 0, 0], "A", "B", 1)]);
        assert_eq!(net.neighbors(&id("A")).unwrap(), [&id("B")]);
        assert_eq!(net.neighbors(&id("B")).unwrap(), [&id("A")]);
        assert!(net.neighbors(&id("C")).unwrap().is_empty());
        assert!(net.incoming_segments(&id("A")).unwrap().is_empty());
    }

    #[test]
    fn star_incoming_sorted_by_id() {
        let net = RoadNetwork::from_parts(
            [id("hub"), id("n"), id("e"), id("s"), id("w")],
            [
                seg("d", [4, 0, 0], "w", "hub", 1),
                seg("a", [1, 0, 0], "n", "hub", 1),
                seg("c", [3, 0, 0], "s", "hub", 1),
                seg("b", [2, 0, 0], "e", "hub", 1),
            ],
        );
        let inc: Vec<_> = net.incoming_segments(&id("hub")).unwrap().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(inc, ["a", "b", "c", "d"]);
    }

    #[test]
    fn triangle_neighbors() {
        let net = RoadNetwork::from_parts(
            [id("A"), id("B"), id("C")],
            [
                seg("ab", [1, 0, 0], "A", "B", 1),
                seg("ba", [2, 0, 0], "B", "A", 1),
                seg("bc", [3, 0, 0], "B", "C", 1),
                seg("cb", [4, 0, 0], "C", "B", 1),
            ],
        );
        assert_eq!(net.neighbors(&id("B")).unwrap(), [&id("A"), &id("C")]);
    }

    #[test]
    fn validation_reports() {
        let shared = RoadNetwork::from_parts(
            [id("A"), id("B")],
            [seg("x", [9, 9, 9], "A", "B", 3), seg("y", [9, 9, 9], "B", "A", 3)],
        );
        let report = validate(&shared);
        assert_eq!(
            report.issues,
            [Issue::ColorCollision {
                color: Rgb([9, 9, 9]),
                segments: vec!["x".into(), "y".into()]
            }]
        );

        let dangling = RoadNetwork::from_parts([id("A")], [seg("x", [1, 1, 1], "A", "B", 3)]);
        let report = validate(&dangling);
        assert_eq!(report.issues.len(), 1);
        assert!(report.issues[0].to_string().starts_with("dangling endpoint"));

        let zero = RoadNetwork::from_parts([id("A"), id("B")], [seg("x", [1, 1, 1], "A", "B", 0)]);
        assert_eq!(validate(&zero).issues, [Issue::ZeroPixels { segment: "x".into() }]);
    }

    #[test]
    fn registry_round_trip() {
        let rows = vec![row("s1", "#FF0000", "A", "B"), row("s2", "#00FF00", "B", "A")];
        let mut buf = Vec::new();
        write_registry(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("segment_id,color_hex,from_id,to_id\n"));
        assert_eq!(read_registry(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn registry_header_checked() {
        let text = "id,color,from,to\ns1,#FF0000,A,B\n";
        assert!(matches!(read_registry(text.as_bytes()), Err(Error::Schema { .. })));
    }
}
