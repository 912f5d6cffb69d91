use crate::error::{Error, Result};
use crate::geometry::{TorusGeometry, Vec2};

use super::ensemble::ParticleEnsemble;

/// Uniform bucket grid over the torus with cell edge at least the search
/// radius, stored in compressed (CSR) form.
#[derive(Clone, Debug)]
pub struct CellIndex {
    dim: usize,
    per_axis: usize,
    edge: f64,
    cell_of: Vec<usize>,
    starts: Vec<usize>,
    members: Vec<usize>,
}

/// Bucket the ensemble for radius-`R` neighbour queries. Requires `R < L/2`.
pub fn build_cell_list(ens: &ParticleEnsemble, radius: f64) -> Result<CellIndex> {
    CellIndex::new(&ens.geometry, &ens.positions, radius)
}

impl CellIndex {
    pub fn new(geom: &TorusGeometry, positions: &[Vec2], radius: f64) -> Result<Self> {
        let half = 0.5 * geom.side();
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "search radius must be positive, got {radius}"
            )));
        }
        if radius >= half {
            return Err(Error::CellListDegenerate { radius, half });
        }
        let dim = geom.dim();
        let n = positions.len();
        // shave a relative 1e-12 so rounding in L/R can never make edge < R
        let by_radius = (geom.side() / radius * (1.0 - 1e-12)).floor().max(1.0) as usize;
        let by_count = ((n.max(1) as f64).powf(1.0 / dim as f64).ceil() as usize).max(3);
        let per_axis = by_radius.min(by_count);
        let edge = geom.side() / per_axis as f64;
        let n_cells = per_axis.pow(dim as u32);

        let coord = |x: f64| ((x / edge) as usize).min(per_axis - 1);
        let cell_of: Vec<usize> = positions
            .iter()
            .map(|p| {
                let cx = coord(p[0]);
                if dim == 2 {
                    coord(p[1]) * per_axis + cx
                } else {
                    cx
                }
            })
            .collect();

        let mut counts = vec![0usize; n_cells + 1];
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for c in 0..n_cells {
            counts[c + 1] += counts[c];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut members = vec![0usize; n];
        for (i, &c) in cell_of.iter().enumerate() {
            members[fill[c]] = i;
            fill[c] += 1;
        }
        Ok(CellIndex {
            dim,
            per_axis,
            edge,
            cell_of,
            starts,
            members,
        })
    }

    pub fn cells_per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    fn block(&self, cell: usize) -> ([usize; 9], usize) {
        let p = self.per_axis;
        let wrap = |c: usize, d: isize| (c as isize + d).rem_euclid(p as isize) as usize;
        let mut out = [0usize; 9];
        let mut len = 0;
        if self.dim == 1 {
            for d in -1..=1 {
                out[len] = wrap(cell, d);
                len += 1;
            }
        } else {
            let (cx, cy) = (cell % p, cell / p);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    out[len] = wrap(cy, dy) * p + wrap(cx, dx);
                    len += 1;
                }
            }
        }
        let s = &mut out[..len];
        s.sort_unstable();
        let mut uniq = 0;
        for k in 0..len {
            if k == 0 || s[k] != s[uniq - 1] {
                s[uniq] = s[k];
                uniq += 1;
            }
        }
        (out, uniq)
    }

    /// Fill `out` with every particle other than `i` in the 3^d cell block
    /// around `i`, in ascending index order. This is a superset of the
    /// particles within the radius of `i`.
    pub fn candidates(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let (cells, len) = self.block(self.cell_of[i]);
        for &c in &cells[..len] {
            out.extend(
                self.members[self.starts[c]..self.starts[c + 1]]
                    .iter()
                    .copied()
                    .filter(|&j| j != i),
            );
        }
        out.sort_unstable();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::norm_sq;
    use crate::particles::{init_uniform, ModelOrder};

    #[test]
    fn adjacent_cells_see_each_other() {
        let g = TorusGeometry::unit(2);
        let idx = CellIndex::new(&g, &[[0.195, 0.5], [0.205, 0.5]], 0.1).unwrap();
        let mut c = Vec::new();
        idx.candidates(0, &mut c);
        assert_eq!(c, vec![1]);
        idx.candidates(1, &mut c);
        assert_eq!(c, vec![0]);
    }

    #[test]
    fn seam_pair_is_found() {
        let g = TorusGeometry::unit(2);
        let idx = CellIndex::new(&g, &[[0.99, 0.01], [0.02, 0.98]], 0.1).unwrap();
        let mut c = Vec::new();
        idx.candidates(0, &mut c);
        assert_eq!(c, vec![1]);
    }

    #[test]
    fn degenerate_radius_is_rejected() {
        let g = TorusGeometry::unit(2);
        assert!(matches!(
            CellIndex::new(&g, &[[0.1, 0.1]], 0.5),
            Err(Error::CellListDegenerate { .. })
        ));
    }

    #[test]
    fn candidates_cover_all_neighbours() {
        for dim in [1, 2] {
            let g = TorusGeometry::unit(dim);
            let ens = init_uniform(500, g, 3, ModelOrder::First).unwrap();
            for &r in &[0.01, 0.07, 0.2, 0.33, 0.49] {
                let idx = build_cell_list(&ens, r).unwrap();
                assert!(idx.edge() >= r);
                let mut c = Vec::new();
                for i in 0..ens.len() {
                    idx.candidates(i, &mut c);
                    for j in 0..ens.len() {
                        let d = g.displacement(ens.positions[j], ens.positions[i]);
                        if j != i && norm_sq(d) <= r * r {
                            assert!(c.binary_search(&j).is_ok());
                        }
                    }
                }
            }
        }
    }
}
