use orderless::format::{
    load_checkpoint, load_dataset, parse_dataset, save_checkpoint, save_dataset, Checkpoint, Dataset, FormatError,
};
use orderless_core::{generate, GeneratorConfig, ModelDims, ModelParameters, OrderingStrategy};

const DOC_FIXTURE: &str = "\
orderless-dataset v1 classes=3 samples=2 feature_dim=2 cells=2 seed=7
class 0 cat 2
class 1 apple 1
class 2 dog 1
sample 0 0,2 ; 0.5 -0.25 ; 1 0 0 1
sample 1 1,0 ; 0 1 ; 0 0 0.5 0.5
";

#[test]
fn documented_fixture_parses() {
    let ds = parse_dataset(DOC_FIXTURE).unwrap();
    assert_eq!(ds.seed, Some(7));
    assert_eq!(ds.vocab.names(), ["cat", "apple", "dog"]);
    assert_eq!(ds.vocab.frequencies(), [2, 1, 1]);
    assert_eq!(ds.vocab.end_token(), 4);
    assert_eq!(ds.samples[0].labels, vec![0, 2]);
    assert_eq!(ds.samples[0].global_feature, vec![0.5, -0.25]);
    assert_eq!(ds.samples[0].spatial_features, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(ds.samples[1].labels, vec![1, 0]);
    assert_eq!(ds.samples[1].spatial_features, vec![vec![0.0, 0.0], vec![0.5, 0.5]]);
}

#[test]
fn generated_dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    let (vocab, samples) = generate(&GeneratorConfig { n_samples: 200, ..GeneratorConfig::default() }).unwrap();
    let ds = Dataset { vocab, samples, seed: Some(42) };
    save_dataset(&path, &ds).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), ds);
}

#[test]
fn every_truncation_is_rejected() {
    let lines: Vec<&str> = DOC_FIXTURE.lines().collect();
    for keep in 0..lines.len() {
        let text = lines[..keep].join("\n");
        assert!(parse_dataset(&text).is_err(), "kept {keep} lines");
    }
    // Cut inside the last line.
    let cut = &DOC_FIXTURE[..DOC_FIXTURE.len() - 5];
    assert!(matches!(parse_dataset(cut), Err(FormatError::Parse { line: 6, .. })));
}

#[test]
fn bad_records_report_their_line() {
    let cases = [
        ("sample 1 1,0 ; 0 1 ; 0 0 0.5 0.5", "sample 1 1,1 ; 0 1 ; 0 0 0.5 0.5", 6),
        ("sample 1 1,0 ; 0 1 ;", "sample 1 1,9 ; 0 1 ;", 6),
        ("class 2 dog 1", "class 2 dog", 4),
        ("feature_dim=2", "feature_dim=two", 1),
        ("sample 0 0,2 ; 0.5 -0.25", "sample 0 0,2 ; 0.5 NaN", 5),
    ];
    for (from, to, line) in cases {
        let text = DOC_FIXTURE.replace(from, to);
        match parse_dataset(&text) {
            Err(FormatError::Parse { line: l, .. }) => assert_eq!(l, line, "{to}"),
            other => panic!("{to}: {other:?}"),
        }
    }
    let extra = format!("{DOC_FIXTURE}sample 2 0 ; 0 0 ; 0 0 0 0\n");
    assert!(matches!(parse_dataset(&extra), Err(FormatError::Parse { line: 7, .. })));
}

#[test]
fn checkpoint_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/ck.txt");
    let dims = ModelDims { n_classes: 4, hidden: 5, embed: 3, feature: 6, attention: 2 };
    let ck = Checkpoint {
        params: ModelParameters::random(dims, 0.08, 9),
        strategy: Some(OrderingStrategy::RandomOrder),
        use_attention: false,
    };
    save_checkpoint(&path, &ck).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ck);
    assert!(matches!(load_checkpoint(&dir.path().join("missing.txt")), Err(FormatError::Io { .. })));
}
