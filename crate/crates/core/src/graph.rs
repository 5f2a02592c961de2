//! Directed acyclic graphs over variable indices.

use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// A DAG stored as one sorted, duplicate-free parent list per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn empty(num_vars: usize) -> Self {
        Self {
            parents: vec![Vec::new(); num_vars],
        }
    }

    /// Builds a graph from per-node parent lists, rejecting self loops,
    /// duplicates, out-of-range indices and cycles.
    pub fn from_parents(parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = parents.len();
        let mut clean = Vec::with_capacity(n);
        for (child, list) in parents.into_iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &p in &list {
                if p >= n {
                    return Err(Error::InvalidGraph(format!(
                        "parent {p} of node {child} is out of range"
                    )));
                }
                if p == child {
                    return Err(Error::InvalidGraph(format!("self loop on node {child}")));
                }
                if !seen.insert(p) {
                    return Err(Error::InvalidGraph(format!(
                        "duplicate parent {p} of node {child}"
                    )));
                }
            }
            clean.push(seen.into_iter().collect());
        }
        let dag = Self { parents: clean };
        if dag.topological_order().is_none() {
            return Err(Error::InvalidGraph("graph contains a cycle".into()));
        }
        Ok(dag)
    }

    /// Chain `0 → 1 → … → n−1`.
    pub fn chain(num_vars: usize) -> Self {
        let parents = (0..num_vars)
            .map(|i| if i == 0 { vec![] } else { vec![i - 1] })
            .collect();
        Self { parents }
    }

    pub fn num_vars(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn parent_lists(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// All edges as `(parent, child)` pairs, ordered by child then parent.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect()
    }

    /// Undirected edge set with each pair stored as `(min, max)`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges()
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to].binary_search(&from).is_ok()
    }

    /// Whether a directed path `from ⇝ to` exists (a node reaches itself).
    pub fn has_path(&self, from: usize, to: usize) -> bool {
        // walk parents backwards from `to`
        let mut seen = vec![false; self.num_vars()];
        let mut stack = vec![to];
        while let Some(v) = stack.pop() {
            if v == from {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.parents[v].iter().copied().filter(|&p| !seen[p]));
        }
        false
    }

    /// Kahn's algorithm, smallest ready index first; `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.num_vars();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Adds `from → to`; fails if it already exists or would close a cycle.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if from == to || from >= self.num_vars() || to >= self.num_vars() {
            return Err(Error::InvalidGraph(format!(
                "cannot add edge {from} -> {to}"
            )));
        }
        if self.has_edge(from, to) {
            return Err(Error::InvalidGraph(format!(
                "edge {from} -> {to} already present"
            )));
        }
        if self.has_path(to, from) {
            return Err(Error::InvalidGraph(format!(
                "edge {from} -> {to} would create a cycle"
            )));
        }
        let list = &mut self.parents[to];
        let pos = list.partition_point(|&p| p < from);
        list.insert(pos, from);
        Ok(())
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> Result<()> {
        match self
            .parents
            .get(to)
            .and_then(|l| l.binary_search(&from).ok())
        {
            Some(pos) => {
                self.parents[to].remove(pos);
                Ok(())
            }
            None => Err(Error::InvalidGraph(format!(
                "edge {from} -> {to} not present"
            ))),
        }
    }

    /// Replaces the parent set of `node` wholesale, checking acyclicity.
    pub fn set_parents(&mut self, node: usize, parents: Vec<usize>) -> Result<()> {
        let mut trial = self.parents.clone();
        trial[node] = parents;
        *self = Self::from_parents(trial)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_graphs() {
        assert!(Dag::from_parents(vec![vec![0]]).is_err());
        assert!(Dag::from_parents(vec![vec![1], vec![0]]).is_err());
        assert!(Dag::from_parents(vec![vec![], vec![0, 0]]).is_err());
        assert!(Dag::from_parents(vec![vec![], vec![5]]).is_err());
        assert!(Dag::from_parents(vec![vec![], vec![0], vec![1, 0]]).is_ok());
    }

    #[test]
    fn edge_edits_keep_acyclicity() {
        let mut g = Dag::chain(3);
        assert!(g.add_edge(2, 0).is_err());
        assert!(g.add_edge(0, 2).is_ok());
        assert_eq!(g.parents(2), &[0, 1]);
        assert!(g.remove_edge(1, 2).is_ok());
        assert!(g.remove_edge(1, 2).is_err());
        assert_eq!(g.edges(), vec![(0, 1), (0, 2)]);
        assert_eq!(g.topological_order().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn paths() {
        let g = Dag::chain(4);
        assert!(g.has_path(0, 3));
        assert!(!g.has_path(3, 0));
        assert!(g.has_path(2, 2));
    }

    proptest! {
        #[test]
        fn random_insertions_stay_acyclic(edges in prop::collection::vec((0usize..6, 0usize..6), 0..40)) {
            let mut g = Dag::empty(6);
            for (a, b) in edges {
                let _ = g.add_edge(a, b);
                prop_assert!(g.topological_order().is_some());
            }
            let order = g.topological_order().unwrap();
            let pos: Vec<usize> = {
                let mut p = vec![0; 6];
                for (i, &v) in order.iter().enumerate() { p[v] = i; }
                p
            };
            for (from, to) in g.edges() {
                prop_assert!(pos[from] < pos[to]);
            }
        }
    }
}
