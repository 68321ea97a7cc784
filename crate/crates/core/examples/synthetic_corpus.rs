//! Writes a seeded synthetic relation corpus in FewRel layout to stdout.
//!
//!     cargo run -p relcluster-core --example synthetic_corpus -- 20 200 0 > corpus.json

use relcluster_core::synthetic::relation_corpus;

fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("usage: synthetic_corpus <relations> <per-relation> <seed>"))
        .collect();
    let (relations, per, seed) = match args[..] {
        [r, p, s] => (r, p, s as u64),
        [r, p] => (r, p, 0),
        _ => (20, 200, 0),
    };
    print!("{}", relation_corpus(relations, per, seed).to_fewrel_json());
}
