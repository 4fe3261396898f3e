//! Line-oriented JSON dumps of detector output and ground truth.
//!
//! Every nonblank line is one JSON object with a `kind` field. The first
//! record must be the header; an empty file is an empty dataset.
//!
//! ```text
//! {"kind":"header","version":1}
//! {"kind":"image","image_id":"s1-0","sequence_id":"s1","frame_index":0,"proposals":[{"box":[0,0,10,10],"score":0.9}]}
//! {"kind":"presence","image_id":"s1-0","proposal_index":0,"class":1,"score":0.8}
//! {"kind":"location","image_id":"s1-0","proposal_index":0,"class":1,"box":[0,0,10,10],"density":0.7}
//! {"kind":"truth","image_id":"s1-0","box":[0,0,10,10],"class":1,"present":true,"object_id":3}
//! ```
//!
//! Records may reference images defined later in the file. Location records
//! for the same `(image, proposal, class)` accumulate in file order. A truth
//! record may repeat the image's `sequence_id` / `frame_index`; conflicting
//! values are an integrity error.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{ClassId, Detection, GroundTruth, ImageRecord, LocationCandidate, Proposal};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const DUMP_VERSION: u32 = 1;

pub type Dataset = Vec<ImageRecord>;

/// How dangling references are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Any dangling reference is an integrity error.
    #[default]
    Strict,
    /// Dangling records are dropped and counted.
    Lenient,
}

/// Records dropped in lenient mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpStats {
    pub records: usize,
    pub dropped_presence: usize,
    pub dropped_location: usize,
    pub dropped_truth: usize,
}

impl DumpStats {
    pub fn dropped(&self) -> usize {
        self.dropped_presence + self.dropped_location + self.dropped_truth
    }
}

#[derive(Serialize, Deserialize)]
struct ProposalRec {
    #[serde(rename = "box")]
    bbox: BoundingBox,
    score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Header {
        version: u32,
    },
    Image {
        image_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sequence_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_index: Option<u64>,
        proposals: Vec<ProposalRec>,
    },
    Presence {
        image_id: String,
        proposal_index: usize,
        class: ClassId,
        score: f64,
    },
    Location {
        image_id: String,
        proposal_index: usize,
        class: ClassId,
        #[serde(rename = "box")]
        bbox: BoundingBox,
        density: f64,
    },
    Truth {
        image_id: String,
        #[serde(rename = "box")]
        bbox: BoundingBox,
        class: ClassId,
        present: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        object_id: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sequence_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_index: Option<u64>,
    },
}

fn finite(line: usize, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parse { line, message: format!("{what} must be finite, got {v}") })
    }
}

/// Parse a dump from any buffered reader.
pub fn parse_dump<R: BufRead>(reader: R, mode: ParseMode) -> Result<(Dataset, DumpStats)> {
    let mut stats = DumpStats::default();
    let mut images: Vec<ImageRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut pending: Vec<(usize, Record)> = Vec::new();
    let mut header_seen = false;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        stats.records += 1;
        match rec {
            Record::Header { version } => {
                if header_seen {
                    return Err(Error::Parse { line: lineno, message: "duplicate header".into() });
                }
                if version != DUMP_VERSION {
                    return Err(Error::UnsupportedVersion(version));
                }
                header_seen = true;
            }
            _ if !header_seen => {
                return Err(Error::Parse { line: lineno, message: "first record must be the header".into() });
            }
            Record::Image { image_id, sequence_id, frame_index, proposals } => {
                if index.contains_key(&image_id) {
                    return Err(Error::Integrity(format!("line {lineno}: duplicate image id {image_id:?}")));
                }
                for p in &proposals {
                    finite(lineno, "proposal score", p.score)?;
                    if p.score < 0.0 {
                        return Err(Error::Parse { line: lineno, message: "proposal score is negative".into() });
                    }
                }
                index.insert(image_id.clone(), images.len());
                images.push(ImageRecord {
                    image_id,
                    sequence_id,
                    frame_index,
                    proposals: proposals.into_iter().map(|p| Proposal { bbox: p.bbox, score: p.score }).collect(),
                    ..Default::default()
                });
            }
            other => pending.push((lineno, other)),
        }
    }

    for (lineno, rec) in pending {
        match rec {
            Record::Presence { image_id, proposal_index, class, score } => {
                if !(0.0..=1.0).contains(&score) {
                    return Err(Error::Parse { line: lineno, message: format!("presence score {score} not in [0,1]") });
                }
                let Some(img) = resolve(&index, &mut images, &image_id, Some(proposal_index), lineno, mode)? else {
                    stats.dropped_presence += 1;
                    continue;
                };
                if img.presence.insert((proposal_index, class), score).is_some() {
                    return Err(Error::Integrity(format!(
                        "line {lineno}: duplicate presence score for image {image_id:?}, proposal {proposal_index}, class {class}"
                    )));
                }
            }
            Record::Location { image_id, proposal_index, class, bbox, density } => {
                finite(lineno, "density", density)?;
                if density < 0.0 {
                    return Err(Error::Parse { line: lineno, message: "density is negative".into() });
                }
                let Some(img) = resolve(&index, &mut images, &image_id, Some(proposal_index), lineno, mode)? else {
                    stats.dropped_location += 1;
                    continue;
                };
                img.locations.entry((proposal_index, class)).or_default().push(LocationCandidate { bbox, density });
            }
            Record::Truth { image_id, bbox, class, present, object_id, sequence_id, frame_index } => {
                let Some(img) = resolve(&index, &mut images, &image_id, None, lineno, mode)? else {
                    stats.dropped_truth += 1;
                    continue;
                };
                merge_field(&mut img.sequence_id, sequence_id, &image_id, "sequence_id", lineno)?;
                merge_field(&mut img.frame_index, frame_index, &image_id, "frame_index", lineno)?;
                img.ground_truth.push(GroundTruth { detection: Detection::new(bbox, class, present), object_id });
            }
            Record::Header { .. } | Record::Image { .. } => unreachable!("handled in the first pass"),
        }
    }
    Ok((images, stats))
}

fn resolve<'a>(
    index: &HashMap<String, usize>,
    images: &'a mut [ImageRecord],
    image_id: &str,
    proposal: Option<usize>,
    lineno: usize,
    mode: ParseMode,
) -> Result<Option<&'a mut ImageRecord>> {
    let problem = match index.get(image_id) {
        None => format!("line {lineno}: unknown image id {image_id:?}"),
        Some(&i) => match proposal {
            Some(r) if r >= images[i].proposals.len() => format!(
                "line {lineno}: image {image_id:?} has {} proposals, record references proposal {r}",
                images[i].proposals.len()
            ),
            _ => return Ok(Some(&mut images[i])),
        },
    };
    match mode {
        ParseMode::Strict => Err(Error::Integrity(problem)),
        ParseMode::Lenient => {
            log::warn!("dropping record: {problem}");
            Ok(None)
        }
    }
}

fn merge_field<T: PartialEq + std::fmt::Debug>(
    slot: &mut Option<T>,
    value: Option<T>,
    image_id: &str,
    name: &str,
    lineno: usize,
) -> Result<()> {
    match (slot.as_ref(), value) {
        (_, None) => Ok(()),
        (None, Some(v)) => {
            *slot = Some(v);
            Ok(())
        }
        (Some(old), Some(v)) if *old == v => Ok(()),
        (Some(old), Some(v)) => Err(Error::Integrity(format!(
            "line {lineno}: truth gives {name} {v:?} for image {image_id:?}, which has {old:?}"
        ))),
    }
}

pub fn parse_dump_file(path: impl AsRef<Path>, mode: ParseMode) -> Result<(Dataset, DumpStats)> {
    let f = File::open(path.as_ref())?;
    parse_dump(BufReader::new(f), mode)
}

/// Serialize a dataset. Floats are written in shortest round-trip form, so
/// parsing the output reproduces the dataset exactly.
pub fn write_dump<W: Write>(dataset: &[ImageRecord], mut w: W) -> Result<()> {
    let mut emit = |rec: &Record| -> Result<()> {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    emit(&Record::Header { version: DUMP_VERSION })?;
    for img in dataset {
        emit(&Record::Image {
            image_id: img.image_id.clone(),
            sequence_id: img.sequence_id.clone(),
            frame_index: img.frame_index,
            proposals: img.proposals.iter().map(|p| ProposalRec { bbox: p.bbox, score: p.score }).collect(),
        })?;
        for (&(r, c), &score) in &img.presence {
            emit(&Record::Presence { image_id: img.image_id.clone(), proposal_index: r, class: c, score })?;
        }
        for (&(r, c), cands) in &img.locations {
            for l in cands {
                emit(&Record::Location {
                    image_id: img.image_id.clone(),
                    proposal_index: r,
                    class: c,
                    bbox: l.bbox,
                    density: l.density,
                })?;
            }
        }
        for gt in &img.ground_truth {
            emit(&Record::Truth {
                image_id: img.image_id.clone(),
                bbox: gt.detection.bbox,
                class: gt.detection.class,
                present: gt.detection.present,
                object_id: gt.object_id,
                sequence_id: None,
                frame_index: None,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_dump_file(dataset: &[ImageRecord], path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path.as_ref())?;
    write_dump(dataset, BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, mode: ParseMode) -> Result<(Dataset, DumpStats)> {
        parse_dump(s.as_bytes(), mode)
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let (d, s) = parse("", ParseMode::Strict).unwrap();
        assert!(d.is_empty());
        assert_eq!(s.records, 0);
        assert!(parse("\n  \n", ParseMode::Strict).unwrap().0.is_empty());
    }

    #[test]
    fn header_is_mandatory_and_versioned() {
        let img = r#"{"kind":"image","image_id":"a","proposals":[]}"#;
        assert!(matches!(parse(img, ParseMode::Strict), Err(Error::Parse { line: 1, .. })));
        let v2 = r#"{"kind":"header","version":2}"#;
        assert!(matches!(parse(v2, ParseMode::Strict), Err(Error::UnsupportedVersion(2))));
        let missing = r#"{"kind":"header"}"#;
        assert!(matches!(parse(missing, ParseMode::Strict), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let s = "{\"kind\":\"header\",\"version\":1}\n\n{\"kind\":\"image\",\"image_id\":\"a\",\"proposals\":[{\"box\":[5,0,1,1],\"score\":1}]}";
        match parse(s, ParseMode::Strict) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_references() {
        let s = [
            r#"{"kind":"header","version":1}"#,
            r#"{"kind":"image","image_id":"a","proposals":[{"box":[0,0,1,1],"score":0.5}]}"#,
            r#"{"kind":"presence","image_id":"ghost","proposal_index":0,"class":0,"score":0.5}"#,
            r#"{"kind":"location","image_id":"a","proposal_index":3,"class":0,"box":[0,0,1,1],"density":1}"#,
            r#"{"kind":"truth","image_id":"ghost","box":[0,0,1,1],"class":0,"present":true}"#,
        ]
        .join("\n");
        match parse(&s, ParseMode::Strict) {
            Err(Error::Integrity(msg)) => assert!(msg.contains("ghost"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let (d, stats) = parse(&s, ParseMode::Lenient).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((stats.dropped_presence, stats.dropped_location, stats.dropped_truth), (1, 1, 1));
    }

    #[test]
    fn forward_references_resolve() {
        let s = [
            r#"{"kind":"header","version":1}"#,
            r#"{"kind":"truth","image_id":"b","box":[0,0,1,1],"class":0,"present":false,"sequence_id":"s","frame_index":4}"#,
            r#"{"kind":"image","image_id":"b","proposals":[]}"#,
        ]
        .join("\n");
        let (d, _) = parse(&s, ParseMode::Strict).unwrap();
        assert_eq!(d[0].ground_truth.len(), 1);
        assert_eq!(d[0].sequence_id.as_deref(), Some("s"));
        assert_eq!(d[0].frame_index, Some(4));
    }

    #[test]
    fn round_trip_of_simulated_world() {
        let world = crate::sim::world::gen_world(&crate::sim::world::WorldConfig {
            n_frames: 5,
            score_levels: 0,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_dump(&world, &mut buf).unwrap();
        let (back, stats) = parse_dump(buf.as_slice(), ParseMode::Strict).unwrap();
        assert_eq!(stats.dropped(), 0);
        assert_eq!(back, world);
    }
}
