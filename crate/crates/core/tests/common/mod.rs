#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use raptor_core::tree::{BuildConfig, Node, Tree};
use raptor_core::NodeId;

pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// A valid random tree of at most `max_nodes` nodes and at least two layers.
/// About a tenth of the nodes copy an earlier embedding so that exact score
/// ties occur.
pub fn random_tree(seed: u64, max_nodes: usize) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(2..=24);
    let n_leaves = rng.random_range(4..=(max_nodes * 3 / 5).max(4));
    let mut nodes: Vec<Node> = Vec::new();
    let push = |nodes: &mut Vec<Node>, rng: &mut ChaCha8Rng, layer: usize, children: Vec<NodeId>| {
        let id = nodes.len();
        let embedding = if id > 0 && rng.random_bool(0.1) {
            nodes[rng.random_range(0..id)].embedding.clone()
        } else {
            unit_vector(rng, dim)
        };
        nodes.push(Node {
            id,
            layer,
            text: format!("n{id}"),
            embedding,
            children,
            token_count: rng.random_range(1..=150),
            doc_id: None,
            source_offset: None,
        });
        id
    };
    let mut below: Vec<NodeId> = (0..n_leaves).map(|_| push(&mut nodes, &mut rng, 0, vec![])).collect();
    let mut layer = 0;
    while below.len() > 1 && (layer == 0 || (below.len() > 3 && rng.random_bool(0.7))) {
        layer += 1;
        let mut order = below.clone();
        order.shuffle(&mut rng);
        let mut groups: Vec<Vec<NodeId>> = Vec::new();
        let mut rest = &order[..];
        while !rest.is_empty() {
            let take = rng.random_range(1..=6).min(rest.len());
            let mut g = rest[..take].to_vec();
            g.sort_unstable();
            groups.push(g);
            rest = &rest[take..];
        }
        if nodes.len() + groups.len() > max_nodes {
            break;
        }
        below = groups.into_iter().map(|g| push(&mut nodes, &mut rng, layer, g)).collect();
    }
    Tree::from_nodes(nodes, BuildConfig::default()).expect("generated tree is valid")
}

/// Layer 1: roots 4 {0, 1} and 5 {2, 3}.
pub fn hand_fixture() -> Tree {
    let node = |id: NodeId, layer: usize, e: [f64; 3], children: Vec<NodeId>, tokens: usize| {
        let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        Node {
            id,
            layer,
            text: format!("node {id}"),
            embedding: e.iter().map(|x| x / n).collect(),
            children,
            token_count: tokens,
            doc_id: None,
            source_offset: None,
        }
    };
    Tree::from_nodes(
        vec![
            node(0, 0, [1.0, 0.1, 0.0], vec![], 10),
            node(1, 0, [0.7, 0.7, 0.0], vec![], 20),
            node(2, 0, [0.0, 0.2, 1.0], vec![], 30),
            node(3, 0, [0.0, 1.0, 0.3], vec![], 40),
            node(4, 1, [1.0, 0.5, 0.0], vec![0, 1], 15),
            node(5, 1, [0.0, 0.5, 1.0], vec![2, 3], 25),
        ],
        BuildConfig::default(),
    )
    .unwrap()
}

/// Independent collapsed-tree reference: score every node, full sort by
/// (score desc, id asc), keep the prefix that fits the budget.
pub fn brute_force_collapsed(tree: &Tree, query: &[f64], budget: usize) -> Vec<(NodeId, f64)> {
    let mut all: Vec<(NodeId, f64)> = tree
        .nodes
        .iter()
        .map(|n| {
            let dot: f64 = n.embedding.iter().zip(query).map(|(a, b)| a * b).sum();
            let na = query.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = n.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
            (n.id, (dot / (na * nb)).clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut used = 0;
    let mut out = Vec::new();
    for (id, s) in all {
        let t = tree.nodes[id].token_count;
        if used + t > budget {
            break;
        }
        used += t;
        out.push((id, s));
    }
    out
}

/// Sentences with known boundaries: capitalized words, commas, decimals and
/// quoted words, ending in `.`, `!` or `?`. Some exceed `long` tokens.
pub fn random_sentences(rng: &mut impl Rng, count: usize, long: usize) -> Vec<String> {
    const WORDS: &[&str] = &[
        "river", "stone", "lantern", "quiet", "market", "signal", "orchard", "copper", "harbor", "velvet",
        "window", "thunder", "paper", "garden", "silver", "meadow", "engine", "candle", "forest", "mirror",
    ];
    (0..count)
        .map(|_| {
            let words = if rng.random_bool(0.03) {
                rng.random_range(long + 1..long * 2)
            } else {
                rng.random_range(1..40)
            };
            let mut parts: Vec<String> = Vec::with_capacity(words);
            for i in 0..words {
                let w = match rng.random_range(0..10) {
                    0 => format!("{}.{}", rng.random_range(0..100), rng.random_range(0..100)),
                    1 => format!("\"{}\"", WORDS[rng.random_range(0..WORDS.len())]),
                    2 => format!("{},", WORDS[rng.random_range(0..WORDS.len())]),
                    _ => WORDS[rng.random_range(0..WORDS.len())].to_string(),
                };
                parts.push(w);
                if i == 0 {
                    let first = parts[0].trim_start_matches('"').to_string();
                    let mut c = first.chars();
                    let cap: String = match c.next() {
                        Some(f) if f.is_alphabetic() => f.to_uppercase().chain(c).collect(),
                        _ => format!("Item {first}"),
                    };
                    parts[0] = cap;
                }
            }
            let mut s = parts.join(" ");
            s = s.trim_end_matches(',').to_string();
            s.push(['.', '!', '?'][rng.random_range(0..3)]);
            s
        })
        .collect()
}

/// Join sentences with varied whitespace.
pub fn join_with_spacing(rng: &mut impl Rng, sentences: &[String]) -> String {
    let mut text = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            text.push_str([" ", "  ", "\n", "\n\n", " \t"][rng.random_range(0..5)]);
        }
        text.push_str(s);
    }
    text
}
