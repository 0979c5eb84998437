//! Dictionary reduction through the inclusion graph.
//!
//! The inclusion matrix `Γ` (rows: regressors, columns: targets) is
//! thresholded into a directed graph over observables with an edge `i → j`
//! when observable `i` takes part in the regression for observable `j`.
//! Everything that can reach an output observable is kept; the rest has no
//! influence on the predicted outputs and is dropped.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

/// Thresholded inclusion matrix split into observable and control parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionGraph {
    /// `adjacency[i][j]`: edge from observable `i` to observable `j`.
    pub adjacency: Vec<Vec<bool>>,
    /// `control_rows[k][j]`: input `k` takes part in the regression for `j`.
    pub control_rows: Vec<Vec<bool>>,
    pub epsilon: f64,
}

impl InclusionGraph {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Successor lists.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        self.adjacency
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j).collect())
            .collect()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.successors()
            .into_iter()
            .enumerate()
            .flat_map(|(i, s)| s.into_iter().map(move |j| (i, j)))
            .collect()
    }

    /// Edge list text, one `source target` pair per line, with optional
    /// labels in a leading comment block.
    pub fn to_edge_list(&self, labels: Option<&[String]>) -> String {
        let mut out = String::new();
        if let Some(labels) = labels {
            for (i, l) in labels.iter().enumerate() {
                let _ = writeln!(out, "# {i} {l}");
            }
        }
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Build from explicit successor lists; used for graphs that do not come
    /// from an inclusion matrix.
    pub fn from_successors(succ: &[Vec<usize>]) -> Self {
        let n = succ.len();
        let mut adjacency = vec![vec![false; n]; n];
        for (i, s) in succ.iter().enumerate() {
            for &j in s {
                adjacency[i][j] = true;
            }
        }
        InclusionGraph { adjacency, control_rows: Vec::new(), epsilon: f64::NAN }
    }
}

/// Strongly connected components and the DAG between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condensation {
    /// Components in reverse topological order (sinks first); nodes sorted.
    pub components: Vec<Vec<usize>>,
    /// Deduplicated edges between distinct components.
    pub dag_edges: Vec<(usize, usize)>,
    pub node_to_component: Vec<usize>,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

/// Threshold `gamma` (`(L + l) × L`) at `epsilon`; entries `>= epsilon` become edges.
pub fn threshold(gamma: &DMatrix<f64>, epsilon: f64) -> Result<InclusionGraph> {
    check_epsilon(epsilon)?;
    let l = gamma.ncols();
    if gamma.nrows() < l {
        return Err(Error::Dimension(format!(
            "inclusion matrix is {}x{}; expected at least as many rows as columns",
            gamma.nrows(),
            l
        )));
    }
    if let Some(v) = gamma.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("inclusion probability {v} outside [0, 1]")));
    }
    let row = |i: usize| (0..l).map(|j| gamma[(i, j)] >= epsilon).collect::<Vec<bool>>();
    Ok(InclusionGraph {
        adjacency: (0..l).map(row).collect(),
        control_rows: (l..gamma.nrows()).map(row).collect(),
        epsilon,
    })
}

/// Tarjan's algorithm with an explicit stack.
pub fn scc(g: &InclusionGraph) -> Condensation {
    let succ = g.successors();
    let n = succ.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut node_to_component = vec![0usize; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut next = 0usize;
    // (node, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    node_to_component[w] = components.len();
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }

    let mut dag_edges: Vec<(usize, usize)> = succ
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
        .map(|(i, j)| (node_to_component[i], node_to_component[j]))
        .filter(|(a, b)| a != b)
        .collect();
    dag_edges.sort_unstable();
    dag_edges.dedup();

    Condensation { components, dag_edges, node_to_component }
}

/// Every node in a component from which an output component is reachable,
/// output components included. Sorted ascending.
pub fn ancestors(c: &Condensation, output_nodes: &[usize]) -> Result<Vec<usize>> {
    if output_nodes.is_empty() {
        return Err(Error::Config("output set is empty".into()));
    }
    let n_nodes = c.node_to_component.len();
    let n_comp = c.components.len();
    let mut preds = vec![Vec::new(); n_comp];
    for &(a, b) in &c.dag_edges {
        preds[b].push(a);
    }
    let mut seen = vec![false; n_comp];
    let mut queue = Vec::new();
    for &o in output_nodes {
        if o >= n_nodes {
            return Err(Error::Config(format!("output node {o} out of range (graph has {n_nodes} nodes)")));
        }
        let comp = c.node_to_component[o];
        if !seen[comp] {
            seen[comp] = true;
            queue.push(comp);
        }
    }
    while let Some(comp) = queue.pop() {
        for &p in &preds[comp] {
            if !seen[p] {
                seen[p] = true;
                queue.push(p);
            }
        }
    }
    let mut out: Vec<usize> = (0..n_comp)
        .filter(|&k| seen[k])
        .flat_map(|k| c.components[k].iter().copied())
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Indices of observables kept at threshold `epsilon`: outputs plus their ancestors.
pub fn reduced_indices(gamma: &DMatrix<f64>, epsilon: f64, outputs: &[usize]) -> Result<Vec<usize>> {
    let g = threshold(gamma, epsilon)?;
    let c = scc(&g);
    ancestors(&c, outputs)
}

/// Full record of one reduction, suitable for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub graph: InclusionGraph,
    pub condensation: Condensation,
    pub kept: Vec<usize>,
    pub index_map: Vec<Option<usize>>,
}

/// Reduce `dict` using its inclusion matrix. Returns the reduced dictionary
/// (order preserved, outputs remapped, inputs untouched) and the old→new
/// index map.
pub fn reduce_dictionary(
    dict: &Dictionary,
    gamma: &DMatrix<f64>,
    epsilon: f64,
) -> Result<(Dictionary, Vec<Option<usize>>)> {
    let (d, r) = reduce_dictionary_detailed(dict, gamma, epsilon)?;
    Ok((d, r.index_map))
}

pub fn reduce_dictionary_detailed(
    dict: &Dictionary,
    gamma: &DMatrix<f64>,
    epsilon: f64,
) -> Result<(Dictionary, Reduction)> {
    let l = dict.len();
    if gamma.nrows() != l + dict.n_inputs || gamma.ncols() != l {
        return Err(Error::Dimension(format!(
            "inclusion matrix is {}x{}, dictionary needs {}x{}",
            gamma.nrows(),
            gamma.ncols(),
            l + dict.n_inputs,
            l
        )));
    }
    let graph = threshold(gamma, epsilon)?;
    let condensation = scc(&graph);
    let kept = ancestors(&condensation, &dict.output_indices)?;
    let (reduced, index_map) = dict.subset(&kept)?;
    Ok((reduced, Reduction { graph, condensation, kept, index_map }))
}
