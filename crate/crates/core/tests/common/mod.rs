//! Brute-force oracles shared by the property and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use koopred::graphred::{ancestors, reduced_indices, scc, Condensation, InclusionGraph};
use nalgebra::DMatrix;
use rand::Rng;

/// Reflexive transitive closure by Floyd-Warshall.
pub fn closure(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut r: Vec<Vec<bool>> = adj.to_vec();
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Nodes that reach at least one output.
pub fn oracle_ancestors(adj: &[Vec<bool>], outputs: &[usize]) -> Vec<usize> {
    let r = closure(adj);
    (0..adj.len()).filter(|&i| outputs.iter().any(|&o| r[i][o])).collect()
}

/// Compare a condensation against the closure: component membership, DAG
/// edges, sink-first ordering and acyclicity.
pub fn check_condensation(adj: &[Vec<bool>], c: &Condensation) -> Result<(), String> {
    let n = adj.len();
    let r = closure(adj);
    if c.node_to_component.len() != n {
        return Err("node_to_component has wrong length".into());
    }
    let mut seen = vec![false; n];
    for (k, comp) in c.components.iter().enumerate() {
        if comp.is_empty() || comp.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("component {k} empty or unsorted: {comp:?}"));
        }
        for &v in comp {
            if seen[v] || c.node_to_component[v] != k {
                return Err(format!("node {v} misassigned"));
            }
            seen[v] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err("components do not cover every node".into());
    }
    for i in 0..n {
        for j in 0..n {
            let same = c.node_to_component[i] == c.node_to_component[j];
            if same != (r[i][j] && r[j][i]) {
                return Err(format!("nodes {i}, {j}: same component {same}, mutual reachability {}", !same));
            }
        }
    }
    let mut expected = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (c.node_to_component[i], c.node_to_component[j]);
            if adj[i][j] && a != b {
                expected.insert((a, b));
            }
        }
    }
    let got: BTreeSet<(usize, usize)> = c.dag_edges.iter().copied().collect();
    if got.len() != c.dag_edges.len() {
        return Err("duplicate DAG edges".into());
    }
    if got != expected {
        return Err(format!("DAG edges {got:?}, expected {expected:?}"));
    }
    // Sinks first means every edge points to an earlier component, which also
    // rules out cycles.
    if let Some(e) = c.dag_edges.iter().find(|(a, b)| b >= a) {
        return Err(format!("edge {e:?} violates sink-first order"));
    }
    Ok(())
}

pub fn random_digraph(rng: &mut impl Rng, max_nodes: usize) -> Vec<Vec<bool>> {
    let n = rng.gen_range(1..=max_nodes);
    let density: f64 = rng.gen_range(0.0..0.6);
    (0..n).map(|_| (0..n).map(|_| rng.gen_bool(density)).collect()).collect()
}

pub fn check_graph(adj: &[Vec<bool>], outputs: &[usize]) -> Result<(), String> {
    let g = InclusionGraph { adjacency: adj.to_vec(), control_rows: Vec::new(), epsilon: 0.5 };
    let c = scc(&g);
    check_condensation(adj, &c)?;
    let got = ancestors(&c, outputs).map_err(|e| e.to_string())?;
    let want = oracle_ancestors(adj, outputs);
    if got != want {
        return Err(format!("ancestors {got:?}, expected {want:?}"));
    }
    Ok(())
}

/// Random `(L + l) × L` inclusion matrix. Entries are drawn partly from a
/// small grid so that ties with the threshold occur.
pub fn random_gamma(rng: &mut impl Rng, max_obs: usize, max_inputs: usize) -> DMatrix<f64> {
    let l = rng.gen_range(1..=max_obs);
    let ni = rng.gen_range(0..=max_inputs);
    DMatrix::from_fn(l + ni, l, |_, _| {
        if rng.gen_bool(0.3) {
            [0.0, 0.1, 0.25, 0.5, 0.75, 1.0][rng.gen_range(0..6)]
        } else {
            rng.gen::<f64>()
        }
    })
}

pub fn random_outputs(rng: &mut impl Rng, l: usize) -> Vec<usize> {
    let k = rng.gen_range(1..=l.min(3));
    let mut o: Vec<usize> = (0..k).map(|_| rng.gen_range(0..l)).collect();
    o.sort_unstable();
    o.dedup();
    o
}

/// Output inclusion, monotonicity in the threshold, ancestral closure and
/// idempotence of the reduction.
pub fn check_reduction(gamma: &DMatrix<f64>, eps_lo: f64, eps_hi: f64, outputs: &[usize]) -> Result<(), String> {
    let l = gamma.ncols();
    let kept_lo = reduced_indices(gamma, eps_lo, outputs).map_err(|e| e.to_string())?;
    let kept_hi = reduced_indices(gamma, eps_hi, outputs).map_err(|e| e.to_string())?;
    for &o in outputs {
        if kept_hi.binary_search(&o).is_err() {
            return Err(format!("output {o} dropped"));
        }
    }
    if let Some(k) = kept_hi.iter().find(|k| kept_lo.binary_search(k).is_err()) {
        return Err(format!("node {k} kept at {eps_hi} but not at {eps_lo}"));
    }
    for &j in &kept_hi {
        for i in 0..l {
            if gamma[(i, j)] >= eps_hi && kept_hi.binary_search(&i).is_err() {
                return Err(format!("kept node {j} has dropped parent {i}"));
            }
        }
    }
    // Reduce the reduced problem again: nothing more should go.
    let rows: Vec<usize> = kept_hi.iter().copied().chain(l..gamma.nrows()).collect();
    let sub = gamma.select_rows(&rows).select_columns(&kept_hi);
    let sub_outputs: Vec<usize> =
        outputs.iter().map(|o| kept_hi.binary_search(o).expect("outputs kept")).collect();
    let again = reduced_indices(&sub, eps_hi, &sub_outputs).map_err(|e| e.to_string())?;
    if again != (0..kept_hi.len()).collect::<Vec<_>>() {
        return Err(format!("second reduction removed nodes: {again:?} of {}", kept_hi.len()));
    }
    Ok(())
}
