use std::collections::{HashMap, HashSet, VecDeque};

use super::RawInteraction;
use crate::error::{Error, Result};

/// Keeps the maximal subgraph in which every user and every item has at least
/// `min_core` interactions. Order of the surviving interactions is preserved.
///
/// `min_core <= 1` only deduplicates.
pub fn five_core_filter(raw: &[RawInteraction], min_core: usize) -> Result<Vec<RawInteraction>> {
    if raw.is_empty() {
        return Err(Error::data("no interactions to filter"));
    }
    let mut seen = HashSet::with_capacity(raw.len());
    let edges: Vec<&RawInteraction> = raw.iter().filter(|e| seen.insert(*e)).collect();
    if min_core <= 1 {
        return Ok(edges.into_iter().cloned().collect());
    }

    // Users take node ids [0, n_users), items follow.
    let mut node_of: HashMap<(bool, &str), usize> = HashMap::new();
    let mut edge_nodes = Vec::with_capacity(edges.len());
    for (u, i) in &edges {
        let next = node_of.len();
        let a = *node_of.entry((false, u.as_str())).or_insert(next);
        let next = node_of.len();
        let b = *node_of.entry((true, i.as_str())).or_insert(next);
        edge_nodes.push((a, b));
    }
    let n = node_of.len();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &(a, b)) in edge_nodes.iter().enumerate() {
        incident[a].push(e);
        incident[b].push(e);
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut edge_alive = vec![true; edges.len()];
    let mut node_alive = vec![true; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| degree[v] < min_core).collect();
    while let Some(v) = queue.pop_front() {
        if !node_alive[v] {
            continue;
        }
        node_alive[v] = false;
        for &e in &incident[v] {
            if !edge_alive[e] {
                continue;
            }
            edge_alive[e] = false;
            let (a, b) = edge_nodes[e];
            let other = if a == v { b } else { a };
            degree[other] -= 1;
            if node_alive[other] && degree[other] < min_core {
                queue.push_back(other);
            }
        }
    }

    let kept: Vec<RawInteraction> = edges
        .into_iter()
        .zip(&edge_alive)
        .filter(|(_, &alive)| alive)
        .map(|(e, _)| e.clone())
        .collect();
    if kept.is_empty() {
        return Err(Error::data(format!(
            "dataset vanishes under {min_core}-core filter"
        )));
    }
    Ok(kept)
}
