use std::io::Write;

use super::*;

fn spec() -> SyntheticSpec {
    SyntheticSpec {
        num_numeric: 6,
        vocab1: 3,
        vocab2: 4,
        noise_sigma: 0.0,
    }
}

fn write_file(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

fn abc_schema() -> Schema {
    Schema {
        numeric: vec!["a".into(), "b".into()],
        categorical: ["c1".into(), "c2".into()],
        target: "y".into(),
    }
}

#[test]
fn noise_free_targets_follow_generator() {
    let ds = generate_synthetic(7, 50, &spec()).unwrap();
    let g = ds.generator.as_ref().unwrap();
    for i in 0..ds.len() {
        // independent recomputation of w·x + e1[c1] + e2[c2]
        let mut acc = 0.0;
        for j in 0..6 {
            acc += g.weights[j] * ds.numeric[[i, j]];
        }
        let expected = acc + g.effects1[ds.cat1[i]] + g.effects2[ds.cat2[i]];
        assert_eq!(ds.target[i].to_bits(), expected.to_bits(), "row {i}");
    }
}

#[test]
fn synthetic_is_deterministic() {
    let mut s = spec();
    s.noise_sigma = 0.3;
    let a = generate_synthetic(11, 40, &s).unwrap();
    let b = generate_synthetic(11, 40, &s).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic(12, 40, &s).unwrap();
    assert_ne!(a.target, c.target);
}

#[test]
fn zero_generator_gives_zero_targets() {
    let s = spec();
    let ds = generate_with(3, 20, &s, Some(GeneratorParams::zeros(&s))).unwrap();
    assert!(ds.target.iter().all(|&t| t == 0.0));
}

#[test]
fn synthetic_rejects_empty() {
    assert!(matches!(generate_synthetic(1, 0, &spec()), Err(crate::Error::Config(_))));
}

#[test]
fn synthetic_is_standardized_and_in_vocab() {
    let ds = generate_synthetic(5, 300, &spec()).unwrap();
    for col in ds.numeric.columns() {
        let mean = col.sum() / 300.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 300.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
    assert!(ds.cat1.iter().all(|&c| c < 3));
    assert!(ds.cat2.iter().all(|&c| c < 4));
    // first-appearance labelling
    assert_eq!(ds.cat1[0], 0);
}

#[test]
fn load_three_rows() {
    let f = write_file("a,b,c1,c2,y\n1,2,A,x,0.5\n3,4,B,y,1.5\n5,6,A,x,2.5\n");
    let ds = load_csv(f.path(), &abc_schema()).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.cat1, vec![0, 1, 0]);
    assert_eq!(ds.labels1, vec!["A".to_string(), "B".to_string()]);
    assert_eq!(ds.vocab1, 2);
    assert_eq!(ds.target, vec![0.5, 1.5, 2.5]);
    assert!((ds.standardization.mean[0] - 3.0).abs() < 1e-12);
    assert!(ds.numeric[[1, 0]].abs() < 1e-12);
}

#[test]
fn load_missing_target_is_schema_error() {
    let f = write_file("a,b,c1,c2\n1,2,A,x\n");
    match load_csv(f.path(), &abc_schema()) {
        Err(crate::Error::Schema(msg)) => assert!(msg.contains("`y`")),
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn load_bad_number_names_line() {
    let f = write_file("a,b,c1,c2,y\n1,2,A,x,0.5\n3,oops,B,y,1.5\n");
    match load_csv(f.path(), &abc_schema()) {
        Err(crate::Error::Row { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("oops"));
        }
        other => panic!("expected row error, got {other:?}"),
    }
}

#[test]
fn load_empty_file_is_data_error() {
    let f = write_file("");
    assert!(matches!(load_csv(f.path(), &abc_schema()), Err(crate::Error::Data(_))));
    let f = write_file("a,b,c1,c2,y\n");
    assert!(matches!(load_csv(f.path(), &abc_schema()), Err(crate::Error::Data(_))));
}

#[test]
fn csv_round_trip() {
    let mut s = spec();
    s.noise_sigma = 0.5;
    let ds = generate_synthetic(21, 120, &s).unwrap();
    let f = tempfile::NamedTempFile::new().unwrap();
    write_csv(&ds, f.path()).unwrap();
    let back = load_csv(f.path(), &ds.schema).unwrap();
    assert_eq!(back.len(), ds.len());
    assert_eq!(back.cat1, ds.cat1);
    assert_eq!(back.cat2, ds.cat2);
    for (a, b) in back.numeric.iter().zip(ds.numeric.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
    for (a, b) in back.target.iter().zip(&ds.target) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn partition_paper_setting() {
    let ds = generate_synthetic(1, 1200, &spec()).unwrap();
    let shards = partition(&ds, 6, 200, 9).unwrap();
    assert_eq!(shards.len(), 6);
    let mut seen = vec![false; 1200];
    for (u, s) in shards.iter().enumerate() {
        assert_eq!(s.owner, u);
        assert_eq!(s.len(), 200);
        assert_eq!(s.data_quality, 1.0);
        for &i in &s.indices {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }
    assert!(holdout_indices(&ds, &shards).is_empty());
}

#[test]
fn partition_small_cases() {
    let ds = generate_synthetic(1, 4, &spec()).unwrap();
    let shards = partition(&ds, 2, 2, 0).unwrap();
    assert_eq!(shards.iter().map(Shard::len).collect::<Vec<_>>(), vec![2, 2]);
    let mut all: Vec<usize> = shards.iter().flat_map(|s| s.indices.clone()).collect();
    all.sort();
    assert_eq!(all, vec![0, 1, 2, 3]);

    let ds = generate_synthetic(1, 3, &spec()).unwrap();
    assert!(matches!(partition(&ds, 2, 2, 0), Err(crate::Error::Config(_))));
}

#[test]
fn holdout_is_complement() {
    let ds = generate_synthetic(1, 10, &spec()).unwrap();
    let shards = partition(&ds, 2, 3, 4).unwrap();
    let rest = holdout_indices(&ds, &shards);
    assert_eq!(rest.len(), 4);
    assert!(rest.iter().all(|i| shards.iter().all(|s| !s.indices.contains(i))));
}
