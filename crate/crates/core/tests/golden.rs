//! Committed L = 4 records against posteriors computed by dense evolution.

use std::io::BufReader;
use std::path::Path;

use chargelab::circuit::{read_records, write_records};
use chargelab::decoders::{decode_noisy, decode_optimal};
use chargelab::mps::TruncationPolicy;

const TOL: f64 = 1e-8;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn expected() -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(fixture("posteriors_L4.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            (cols[3].parse().unwrap(), cols[4].parse().unwrap())
        })
        .collect()
}

#[test]
fn decoders_reproduce_dense_posteriors() {
    let file = std::fs::File::open(fixture("records_L4.jsonl")).unwrap();
    let recs = read_records(BufReader::new(file)).unwrap();
    let want = expected();
    assert_eq!(recs.len(), want.len());
    let policy = TruncationPolicy::default();
    for (i, (rec, (opt, noisy))) in recs.iter().zip(want).enumerate() {
        let got_opt = decode_optimal(rec).unwrap().p_corr;
        let got_noisy = decode_noisy(rec, &policy).unwrap().p_corr;
        assert!((got_opt - opt).abs() < TOL, "record {i}: optimal {got_opt} vs {opt}");
        assert!((got_noisy - noisy).abs() < TOL, "record {i}: noisy {got_noisy} vs {noisy}");
    }
}

#[test]
fn record_format_is_stable() {
    let text = std::fs::read(fixture("records_L4.jsonl")).unwrap();
    let recs = read_records(text.as_slice()).unwrap();
    let mut out = Vec::new();
    write_records(&mut out, &recs).unwrap();
    assert_eq!(out, text);
}
