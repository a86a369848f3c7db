#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

/// Minimum-cost transport between two histograms on bins `0..n` with cost
/// `|i - j|`, by successive shortest augmenting paths on the bipartite
/// network. Independent of any cumulative-sum shortcut.
pub fn transport_cost(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    assert_eq!(n, q.len());
    // Nodes: source, supplies 0..n, demands n..2n, sink.
    let source = 2 * n;
    let sink = 2 * n + 1;
    let nodes = 2 * n + 2;
    let mut edges: Vec<(usize, usize, f64, f64)> = Vec::new(); // from, to, cap, cost
    let add = |edges: &mut Vec<(usize, usize, f64, f64)>, a: usize, b: usize, cap: f64, cost: f64| {
        edges.push((a, b, cap, cost));
        edges.push((b, a, 0.0, -cost));
    };
    for i in 0..n {
        add(&mut edges, source, i, p[i], 0.0);
        add(&mut edges, n + i, sink, q[i], 0.0);
        for j in 0..n {
            add(&mut edges, i, n + j, f64::INFINITY, (i as f64 - j as f64).abs());
        }
    }
    let eps = 1e-15;
    let mut total = 0.0;
    loop {
        // Bellman-Ford over residual edges.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for (k, &(a, b, cap, cost)) in edges.iter().enumerate() {
                if cap > eps && dist[a] + cost < dist[b] - 1e-12 {
                    dist[b] = dist[a] + cost;
                    via[b] = k;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let k = via[v];
            push = push.min(edges[k].2);
            v = edges[k].0;
        }
        if push <= eps {
            break;
        }
        let mut v = sink;
        while v != source {
            let k = via[v];
            edges[k].2 -= push;
            edges[k ^ 1].2 += push;
            v = edges[k].0;
        }
        total += push * dist[sink];
    }
    total
}

/// Every file under `dir` keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Prints one verdict line for an acceptance criterion.
pub fn verdict(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
