#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn lomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lomp"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn lomp_ok(args: &[&str]) -> String {
    let out = lomp(args);
    assert!(
        out.status.success(),
        "lomp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const FILLER: [&str; 16] = [
    "the", "a", "report", "today", "about", "new", "people", "said", "which", "one", "time",
    "year", "into", "over", "after", "some",
];

/// Lines of `space<TAB>…` and `med<TAB>…` where "rocket"/"orbit" mark space
/// and "doctor"/"patient" mark med.
pub fn planted_corpus(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 0..n {
        let space = i % 2 == 0;
        let mut words: Vec<&str> = (0..10).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
        let keys = if space { ["rocket", "orbit"] } else { ["doctor", "patient"] };
        for k in keys {
            if rng.random_bool(0.7) {
                words.insert(rng.random_range(0..words.len()), k);
            }
        }
        let label = if space { "space" } else { "med" };
        let _ = writeln!(out, "{label}\t{}", words.join(" "));
    }
    out
}

/// Vectorizes a planted corpus (with a test corpus) into `dir/data`.
pub fn prepare(dir: &Path) -> String {
    let train = dir.join("train.tsv");
    let test = dir.join("test.tsv");
    std::fs::write(&train, planted_corpus(160, 1)).unwrap();
    std::fs::write(&test, planted_corpus(60, 2)).unwrap();
    let data = dir.join("data");
    lomp_ok(&[
        "vectorize",
        "--corpus", train.to_str().unwrap(),
        "--test-corpus", test.to_str().unwrap(),
        "--labels", "med=-1,space=+1",
        "--seed", "3",
        "--out", data.to_str().unwrap(),
    ]);
    data.to_str().unwrap().to_owned()
}
