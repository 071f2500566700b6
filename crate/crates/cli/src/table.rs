//! Plain-text tables for terminal output.

use std::fmt::Write;

use raptor_core::eval::{AblationReport, EvalReport, ScalingReport};
use raptor_core::tree::TreeStats;

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn stats(s: &TreeStats) -> String {
    let mut out = String::new();
    let counts: Vec<String> = s.layer_node_counts.iter().map(ToString::to_string).collect();
    writeln!(out, "layers               {}", s.layer_node_counts.len()).unwrap();
    writeln!(out, "nodes per layer      {}", counts.join(" / ")).unwrap();
    writeln!(out, "parents              {}", s.parents).unwrap();
    writeln!(out, "avg summary tokens   {}", opt(s.avg_summary_tokens, 1)).unwrap();
    writeln!(out, "avg child tokens     {}", opt(s.avg_child_tokens, 1)).unwrap();
    writeln!(out, "avg children         {}", opt(s.avg_children_per_parent, 2)).unwrap();
    writeln!(out, "compression ratio    {}", opt(s.avg_compression_ratio, 2)).unwrap();
    out
}

pub fn scaling(r: &ScalingReport) -> String {
    let mut out = format!(
        "{:>12} {:>7} {:>13} {:>7} {:>7} {:>13} {:>9}\n",
        "target", "chunks", "corpus tokens", "nodes", "layers", "build tokens", "seconds"
    );
    for row in &r.rows {
        writeln!(
            out,
            "{:>12} {:>7} {:>13} {:>7} {:>7} {:>13} {:>9.3}",
            row.target_tokens, row.chunks, row.corpus_tokens, row.nodes, row.layers, row.build_tokens, row.seconds
        )
        .unwrap();
    }
    for (name, fit) in [("build tokens", r.token_fit), ("seconds", r.time_fit)] {
        match fit {
            Some(f) => writeln!(
                out,
                "{name}: slope {:.4e} per corpus token, intercept {:.3}, R^2 {:.4}",
                f.slope, f.intercept, f.r_squared
            )
            .unwrap(),
            None => writeln!(out, "{name}: no fit (need two distinct lengths)").unwrap(),
        }
    }
    out
}

pub fn eval(r: &EvalReport) -> String {
    let mut out = format!(
        "{} queries, budget {} tokens\n{:<16} {:>7} {:>7} {:>9} {:>9}  layer mix (%)\n",
        r.queries, r.budget, "strategy", "recall", "detail", "thematic", "non-leaf"
    );
    for s in &r.strategies {
        let mix: Vec<String> = s.layer_histogram.iter().map(|(l, p)| format!("L{l}:{p:.0}")).collect();
        writeln!(
            out,
            "{:<16} {:>7.3} {:>7} {:>9} {:>9}  {}",
            s.strategy,
            s.recall,
            opt(s.recall_detail, 3),
            opt(s.recall_thematic, 3),
            opt(s.thematic_non_leaf_fraction, 2),
            mix.join(" ")
        )
        .unwrap();
    }
    out
}

pub fn ablation(r: &AblationReport, window: usize) -> String {
    let mut out = format!(
        "{:<12} {:>8} {:>9} {:>12} {:>9}\n",
        "grouping", "purity", "parents", "compression", "recall"
    );
    let recency = format!("recency-{window}");
    for (name, v) in [("clustered", &r.clustered), (recency.as_str(), &r.recency)] {
        writeln!(
            out,
            "{:<12} {:>8} {:>9} {:>12} {:>9.3}",
            name,
            opt(v.purity, 3),
            v.stats.parents,
            opt(v.stats.avg_compression_ratio, 3),
            v.eval.strategies.first().map_or(0.0, |s| s.recall)
        )
        .unwrap();
    }
    out
}
