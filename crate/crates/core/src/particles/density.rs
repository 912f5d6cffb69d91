use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

use super::cell_list::CellIndex;
use super::ensemble::ParticleEnsemble;

fn heading(ens: &ParticleEnsemble, spec: &KernelSpec, i: usize) -> Result<Option<[f64; 2]>> {
    if !spec.is_directed() {
        return Ok(None);
    }
    match &ens.velocities {
        Some(v) => Ok(Some(v[i])),
        None => Err(Error::UndefinedHeading),
    }
}

/// `ϑ_i` from a list of candidate neighbours in ascending order. Both the
/// naive and the cell-list path go through here so their sums agree bitwise.
#[inline]
fn sum_over(
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    i: usize,
    others: impl Iterator<Item = usize>,
) -> Result<f64> {
    let xi = ens.positions[i];
    let v = heading(ens, spec, i)?;
    let mut acc = 0.0;
    for j in others {
        let d = ens.geometry.displacement(ens.positions[j], xi);
        acc += spec.eval_unscaled(d, v)?;
    }
    Ok(acc * spec.scale(ens.geometry.dim()) / ens.len() as f64)
}

/// Perceived density `ϑ_i = (1/N) Σ_{j≠i} W(x_j − x_i, v_i)` by direct
/// O(N²) summation.
pub fn perceived_density_naive(ens: &ParticleEnsemble, spec: &KernelSpec) -> Result<Vec<f64>> {
    let n = ens.len();
    (0..n)
        .into_par_iter()
        .map(|i| sum_over(ens, spec, i, (0..n).filter(move |&j| j != i)))
        .collect()
}

/// Perceived density using a prebuilt cell index. Equal bit-for-bit to
/// [`perceived_density_naive`].
pub fn perceived_density_with_cells(
    ens: &ParticleEnsemble,
    spec: &KernelSpec,
    cells: &CellIndex,
) -> Result<Vec<f64>> {
    (0..ens.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            cells.candidates(i, buf);
            sum_over(ens, spec, i, buf.iter().copied())
        })
        .collect()
}

/// Perceived density of every particle; uses the cell list when the radius
/// allows it.
pub fn perceived_density_all(ens: &ParticleEnsemble, spec: &KernelSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    match CellIndex::new(&ens.geometry, &ens.positions, spec.radius) {
        Ok(cells) if ens.len() > 16 => perceived_density_with_cells(ens, spec, &cells),
        _ => perceived_density_naive(ens, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TorusGeometry;
    use crate::kernel::Cone;
    use crate::particles::{init_uniform, ModelOrder};

    fn ens(points: Vec<[f64; 2]>) -> ParticleEnsemble {
        ParticleEnsemble::from_state(TorusGeometry::unit(2), points, None, 0).unwrap()
    }

    #[test]
    fn pair_within_radius() {
        let e = ens(vec![[0.5, 0.5], [0.55, 0.5]]);
        let t = perceived_density_all(&e, &KernelSpec::indicator(0.1)).unwrap();
        assert_eq!(t, vec![0.5, 0.5]);
    }

    #[test]
    fn single_particle_sees_nothing() {
        let e = ens(vec![[0.3, 0.3]]);
        assert_eq!(perceived_density_all(&e, &KernelSpec::indicator(0.1)).unwrap(), vec![0.0]);
    }

    #[test]
    fn brute_force_count_of_four() {
        // particle 0 has particles 1 and 2 within R = 0.1, particle 3 is far
        let e = ens(vec![[0.5, 0.5], [0.57, 0.5], [0.5, 0.43], [0.8, 0.8]]);
        let t = perceived_density_all(&e, &KernelSpec::indicator(0.1)).unwrap();
        let count = (1..4)
            .filter(|&j| {
                let d = e.geometry.displacement(e.positions[j], e.positions[0]);
                d[0].hypot(d[1]) <= 0.1
            })
            .count();
        assert_eq!(count, 2);
        assert_eq!(t[0], 0.5);
    }

    #[test]
    fn coincident_points_never_count_themselves() {
        let e = ens(vec![[0.2, 0.2], [0.2, 0.2]]);
        let t = perceived_density_naive(&e, &KernelSpec::indicator(0.1)).unwrap();
        assert_eq!(t, vec![0.5, 0.5]);
    }

    #[test]
    fn directed_needs_velocities() {
        let e = ens(vec![[0.2, 0.2], [0.25, 0.2]]);
        let k = KernelSpec::indicator(0.1).with_cone(Cone::forward_half());
        assert!(matches!(perceived_density_all(&e, &k), Err(Error::UndefinedHeading)));
    }

    #[test]
    fn cell_path_equals_naive_for_bump_and_cone() {
        let g = TorusGeometry::unit(2);
        let e = init_uniform(1500, g, 99, ModelOrder::Second).unwrap();
        for spec in [
            KernelSpec::bump(0.08),
            KernelSpec::indicator(0.05).with_cone(Cone::forward_half()),
        ] {
            let cells = CellIndex::new(&g, &e.positions, spec.radius).unwrap();
            let a = perceived_density_naive(&e, &spec).unwrap();
            let b = perceived_density_with_cells(&e, &spec, &cells).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn permutation_and_translation_invariance() {
        let g = TorusGeometry::unit(2);
        let e = init_uniform(300, g, 5, ModelOrder::First).unwrap();
        let spec = KernelSpec::indicator(0.1);
        let base = perceived_density_all(&e, &spec).unwrap();

        let perm: Vec<usize> = (0..300).map(|k| (k * 7 + 3) % 300).collect();
        let permuted = ens(perm.iter().map(|&k| e.positions[k]).collect());
        let tp = perceived_density_all(&permuted, &spec).unwrap();
        for (a, &k) in perm.iter().enumerate() {
            assert_eq!(tp[a], base[k]);
        }

        let shifted = ens(e.positions.iter().map(|p| [p[0] + 0.37, p[1] + 0.81]).collect());
        let ts = perceived_density_all(&shifted, &spec).unwrap();
        // the indicator count is exact unless a pair sits within rounding of R
        let diffs = base.iter().zip(&ts).filter(|(a, b)| a != b).count();
        assert_eq!(diffs, 0);

        let smooth = KernelSpec::bump(0.1);
        let b0 = perceived_density_all(&e, &smooth).unwrap();
        let b1 = perceived_density_all(&shifted, &smooth).unwrap();
        for (a, b) in b0.iter().zip(&b1) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
