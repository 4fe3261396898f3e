use std::collections::BTreeMap;

use pacset::detection::{Detection, GroundTruth, ImageRecord, LocationCandidate, Proposal};
use pacset::io::dump::{parse_dump_file, write_dump, ParseMode};
use pacset::io::parse_dump;
use pacset::tracking::{frame_pairs, transitions};
use pacset::BoundingBox;

fn bx(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
    BoundingBox::new(a, b, c, d).unwrap()
}

fn expected() -> Vec<ImageRecord> {
    let first = ImageRecord {
        image_id: "cam-0".into(),
        sequence_id: Some("cam".into()),
        frame_index: Some(0),
        proposals: vec![
            Proposal { bbox: bx(10.0, 10.0, 30.0, 40.0), score: 0.92 },
            Proposal { bbox: bx(60.0, 5.0, 80.0, 25.0), score: 0.15 },
        ],
        presence: BTreeMap::from([((0, 2), 0.8)]),
        locations: BTreeMap::from([(
            (0, 2),
            vec![
                LocationCandidate { bbox: bx(10.0, 10.0, 30.0, 40.0), density: 0.6 },
                LocationCandidate { bbox: bx(12.0, 11.0, 31.0, 42.0), density: 0.25 },
            ],
        )]),
        ground_truth: vec![GroundTruth {
            detection: Detection::new(bx(10.0, 10.0, 30.0, 40.0), 2, true),
            object_id: Some(7),
        }],
    };
    let second = ImageRecord {
        image_id: "cam-1".into(),
        sequence_id: Some("cam".into()),
        frame_index: Some(1),
        proposals: vec![Proposal { bbox: bx(14.0, 12.0, 34.0, 42.0), score: 0.875 }],
        presence: BTreeMap::from([((0, 2), 0.7)]),
        locations: BTreeMap::from([(
            (0, 2),
            vec![LocationCandidate { bbox: bx(14.0, 12.0, 34.0, 42.0), density: 0.5 }],
        )]),
        ground_truth: vec![GroundTruth {
            detection: Detection::new(bx(14.0, 12.0, 34.0, 42.0), 2, true),
            object_id: Some(7),
        }],
    };
    vec![first, second]
}

fn fixture() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_images.jsonl")
}

#[test]
fn handcrafted_fixture_parses_to_golden_records() {
    let (data, stats) = parse_dump_file(fixture(), ParseMode::Strict).unwrap();
    assert_eq!(stats.records, 10);
    assert_eq!(stats.dropped(), 0);
    assert_eq!(data, expected());
}

#[test]
fn fixture_yields_one_transition() {
    let (data, _) = parse_dump_file(fixture(), ParseMode::Strict).unwrap();
    let pairs = frame_pairs(&data);
    assert_eq!(pairs.len(), 1);
    let (trs, vanished) = transitions(&pairs[0]);
    assert_eq!((trs.len(), vanished), (1, 0));
    assert_eq!(trs[0].object_id, 7);
}

#[test]
fn fixture_round_trips() {
    let mut buf = Vec::new();
    write_dump(&expected(), &mut buf).unwrap();
    let (back, _) = parse_dump(buf.as_slice(), ParseMode::Strict).unwrap();
    assert_eq!(back, expected());
}
