use std::path::{Path, PathBuf};

use proptest::prelude::*;
use retromem::manifest::{
    build_manifest, tag_splits, Manifest, PatternHistogram, SceneRecord, SplitTag, RARE_THRESHOLD,
};
use retromem_core::synth::PatternTag;

fn record(id: &str, pattern: PatternTag, split: SplitTag) -> SceneRecord {
    SceneRecord {
        id: id.to_string(),
        image: PathBuf::from(format!("images/{id}.ppm")),
        mask: PathBuf::from(format!("masks/{id}.pgm")),
        pattern,
        split,
    }
}

/// 1000 training rows: small objects at 4.9%, large objects at 50%, no
/// edge blur.
fn training_histogram() -> PatternHistogram {
    let mut tags = vec![PatternTag::SmallObject; 49];
    tags.extend(vec![PatternTag::LargeObject; 500]);
    tags.extend(vec![PatternTag::BackgroundMatch; 451]);
    PatternHistogram::from_tags(tags)
}

#[test]
fn frequency_boundaries_choose_splits() {
    let h = training_histogram();
    assert_eq!(h.total(), 1000);
    assert!((h.frequency(PatternTag::SmallObject) - 0.049).abs() < 1e-12);
    let rows = vec![
        record("rare", PatternTag::SmallObject, SplitTag::Seen),
        record("unseen", PatternTag::EdgeBlur, SplitTag::Seen),
        record("seen", PatternTag::LargeObject, SplitTag::Rare),
        record("t", PatternTag::EdgeBlur, SplitTag::Train),
    ];
    let m = build_manifest(rows, &h).unwrap();
    let splits: Vec<SplitTag> = m.records.iter().map(|r| r.split).collect();
    assert_eq!(
        splits,
        [
            SplitTag::Rare,
            SplitTag::Unseen,
            SplitTag::Seen,
            SplitTag::Train
        ]
    );
}

#[test]
fn exactly_five_percent_is_not_rare() {
    let mut tags = vec![PatternTag::LowLight; 5];
    tags.extend(vec![PatternTag::LargeObject; 95]);
    let mut m = Manifest {
        records: vec![record("a", PatternTag::LowLight, SplitTag::Rare)],
    };
    tag_splits(&mut m, &PatternHistogram::from_tags(tags), RARE_THRESHOLD);
    assert_eq!(m.records[0].split, SplitTag::Seen);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.tsv");
    let m = Manifest {
        records: PatternTag::ALL
            .iter()
            .zip(SplitTag::ALL.iter().cycle())
            .enumerate()
            .map(|(i, (&p, &s))| record(&format!("r{i}"), p, s))
            .collect(),
    };
    m.write(&path).unwrap();
    assert_eq!(Manifest::read(&path).unwrap(), m);
}

#[test]
fn invalid_fields_are_rejected_on_write() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["", "a\tb", "a/b", "#x"] {
        let m = Manifest {
            records: vec![record(id, PatternTag::LowLight, SplitTag::Seen)],
        };
        assert!(m.write(&dir.path().join("m.tsv")).is_err(), "{id:?}");
    }
}

#[test]
fn wrong_column_count_names_the_line() {
    let e = Manifest::parse("# h\nid\timg\tmask\tlow_light\n", Path::new("m.tsv")).unwrap_err();
    assert!(e.to_string().contains("m.tsv:2"), "{e}");
}

fn arb_record() -> impl Strategy<Value = SceneRecord> {
    (
        "[a-z0-9_-]{1,12}",
        "[a-zA-Z0-9_./ -]{0,20}[a-z]",
        "[a-zA-Z0-9_./ -]{0,20}[a-z]",
        0usize..7,
        0usize..4,
    )
        .prop_map(|(id, image, mask, p, s)| SceneRecord {
            id,
            image: PathBuf::from(image),
            mask: PathBuf::from(mask),
            pattern: PatternTag::ALL[p],
            split: SplitTag::ALL[s],
        })
}

proptest! {
    #[test]
    fn parse_serialize_round_trip(rows in prop::collection::vec(arb_record(), 0..12)) {
        let mut seen = std::collections::BTreeSet::new();
        let records: Vec<SceneRecord> = rows.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
        let m = Manifest { records };
        let back = Manifest::parse(&m.serialize(), Path::new("m")).unwrap();
        prop_assert_eq!(back, m);
    }
}
