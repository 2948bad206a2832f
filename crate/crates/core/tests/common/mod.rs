//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use fsm_irl::rng::rng_from;
use fsm_irl::Graph;

/// Citation-like graph at Cora's size: 2708 nodes, 7 classes, 1433 sparse
/// binary features with class-specific vocabularies, 5278 edges of which
/// roughly 80% join same-class nodes.
pub fn cora_scale(seed: u64) -> Graph {
    let (n, d, c, m) = (2708, 1433, 7, 5278);
    let mut rng = rng_from(seed);
    let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..c) as u32).collect();
    let mut x = Array2::zeros((n, d));
    let vocab = d / c;
    for v in 0..n {
        for _ in 0..18 {
            let j = if rng.gen_bool(0.6) {
                labels[v] as usize * vocab + rng.gen_range(0..vocab)
            } else {
                rng.gen_range(0..d)
            };
            x[[v, j]] = 1.0;
        }
    }
    let mut by_class: HashMap<u32, Vec<usize>> = HashMap::new();
    for (v, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(v);
    }
    let mut edges = BTreeSet::new();
    // A spanning path keeps every node non-isolated.
    for v in 1..n {
        edges.insert((v - 1, v));
    }
    while edges.len() < m {
        let a = rng.gen_range(0..n);
        let b = if rng.gen_bool(0.8) {
            *by_class[&labels[a]].choose(&mut rng).unwrap()
        } else {
            rng.gen_range(0..n)
        };
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    Graph::new(x, labels, c, &edges).unwrap()
}

/// Writes `<dir>/cora.content` and `<dir>/cora.cites` in the public
/// citation layout: `n` papers with non-contiguous ids, `d` binary features,
/// `c` named classes and exactly `m` distinct undirected citations. Some
/// citations are also listed in the reverse direction, as in the real files.
pub fn write_citation_export(dir: &std::path::Path, n: usize, d: usize, c: usize, m: usize, seed: u64) {
    let mut rng = rng_from(seed);
    let names = ["Case_Based", "Genetic_Algorithms", "Neural_Networks", "Probabilistic_Methods",
        "Reinforcement_Learning", "Rule_Learning", "Theory"];
    let ids: Vec<u64> = (0..n as u64).map(|i| 31 + 7 * i + (i * i) % 5).collect();
    let mut content = String::new();
    for &id in &ids {
        content.push_str(&id.to_string());
        for _ in 0..d {
            content.push_str(if rng.gen_bool(0.02) { "\t1" } else { "\t0" });
        }
        content.push('\t');
        content.push_str(names[rng.gen_range(0..c)]);
        content.push('\n');
    }
    let mut pairs = BTreeSet::new();
    while pairs.len() < m {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let mut cites = String::new();
    for (a, b) in pairs {
        cites.push_str(&format!("{}\t{}\n", ids[a], ids[b]));
        if rng.gen_bool(0.03) {
            cites.push_str(&format!("{}\t{}\n", ids[b], ids[a]));
        }
    }
    std::fs::write(dir.join("cora.content"), content).unwrap();
    std::fs::write(dir.join("cora.cites"), cites).unwrap();
}
