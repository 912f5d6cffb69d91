use std::collections::BTreeMap;

use crate::geometry::norm_sq;

use super::cell_list::CellIndex;
use super::ensemble::ParticleEnsemble;

/// Union-find over `0..n` with union by size and path halving.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }

    /// Sizes of all sets, largest first.
    pub fn set_sizes(&mut self) -> Vec<usize> {
        let n = self.parent.len();
        let roots: Vec<usize> = (0..n).filter(|&i| self.find(i) == i).collect();
        let mut sizes: Vec<usize> = roots.into_iter().map(|i| self.size[i]).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSummary {
    pub count: usize,
    /// Cluster sizes, largest first.
    pub sizes: Vec<usize>,
    /// size → number of clusters of that size
    pub histogram: BTreeMap<usize, usize>,
}

/// Connected components of the graph joining particles at periodic distance
/// `≤ radius`. Isolated particles are singleton clusters.
pub fn cluster_count(ens: &ParticleEnsemble, radius: f64) -> ClusterSummary {
    let n = ens.len();
    let geom = &ens.geometry;
    let r2 = radius * radius;
    let mut sets = DisjointSet::new(n);
    let close = |i: usize, j: usize| norm_sq(geom.displacement(ens.positions[j], ens.positions[i])) <= r2;

    match CellIndex::new(geom, &ens.positions, radius) {
        Ok(cells) => {
            let mut buf = Vec::new();
            for i in 0..n {
                cells.candidates(i, &mut buf);
                for &j in buf.iter().filter(|&&j| j > i) {
                    if close(i, j) {
                        sets.union(i, j);
                    }
                }
            }
        }
        Err(_) => {
            for i in 0..n {
                for j in i + 1..n {
                    if close(i, j) {
                        sets.union(i, j);
                    }
                }
            }
        }
    }
    let sizes = sets.set_sizes();
    let mut histogram = BTreeMap::new();
    for &s in &sizes {
        *histogram.entry(s).or_insert(0) += 1;
    }
    ClusterSummary {
        count: sets.set_count(),
        sizes,
        histogram,
    }
}
