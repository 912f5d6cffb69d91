use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::geometry::TorusGeometry;
use crate::kernel::{GridStencil, KernelSpec, Side};

use super::field::DensityField;

/// Discrete periodic convolution `(W∗ρ)_i = Σ_j W(x_j − x_i) ρ_j Δx^d`
/// (uniform weights, i.e. exact circular convolution of the samples).
#[derive(Clone, Debug)]
pub struct PeriodicConvolution {
    stencil: GridStencil,
}

impl PeriodicConvolution {
    pub fn new(spec: &KernelSpec, geometry: &TorusGeometry, m: usize) -> Result<Self> {
        Self::with_side(spec, geometry, m, Side::Both)
    }

    pub fn with_side(spec: &KernelSpec, geometry: &TorusGeometry, m: usize, side: Side) -> Result<Self> {
        Ok(PeriodicConvolution {
            stencil: GridStencil::new(spec, geometry, m, side)?,
        })
    }

    pub fn stencil(&self) -> &GridStencil {
        &self.stencil
    }

    /// Direct summation over the kernel support.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let m = self.stencil.m as isize;
        let st = &self.stencil;
        if st.dim == 1 {
            (0..m)
                .map(|i| {
                    st.offsets
                        .iter()
                        .zip(&st.weights)
                        .map(|(o, &w)| w * values[(i + o[0]).rem_euclid(m) as usize])
                        .sum()
                })
                .collect()
        } else {
            (0..m * m)
                .into_par_iter()
                .map(|k| {
                    let (i, j) = (k % m, k / m);
                    st.offsets
                        .iter()
                        .zip(&st.weights)
                        .map(|(o, &w)| {
                            let ii = (i + o[0]).rem_euclid(m);
                            let jj = (j + o[1]).rem_euclid(m);
                            w * values[(jj * m + ii) as usize]
                        })
                        .sum()
                })
                .collect()
        }
    }

    /// The same convolution computed with FFTs.
    pub fn apply_fft(&self, values: &[f64]) -> Vec<f64> {
        let m = self.stencil.m;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let kern: Vec<Complex64> = self
            .stencil
            .periodic_array()
            .into_iter()
            .map(|w| Complex64::new(w, 0.0))
            .collect();
        let rho: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let (mut k_hat, mut r_hat) = (kern, rho);
        let dim = self.stencil.dim;
        transform(&fwd, &mut k_hat, m, dim);
        transform(&fwd, &mut r_hat, m, dim);
        // correlation: out_hat = conj(K_hat) · ρ_hat
        for (r, k) in r_hat.iter_mut().zip(&k_hat) {
            *r *= k.conj();
        }
        transform(&inv, &mut r_hat, m, dim);
        let scale = 1.0 / r_hat.len() as f64;
        r_hat.into_iter().map(|c| c.re * scale).collect()
    }
}

fn transform(plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64], m: usize, dim: usize) {
    if dim == 1 {
        plan.process(data);
        return;
    }
    for row in data.chunks_mut(m) {
        plan.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        for j in 0..m {
            col[j] = data[j * m + i];
        }
        plan.process(&mut col);
        for j in 0..m {
            data[j * m + i] = col[j];
        }
    }
}

/// `W∗ρ` by direct summation. Requires `R < L/2`.
pub fn convolve_periodic(field: &DensityField, spec: &KernelSpec) -> Result<DensityField> {
    let conv = PeriodicConvolution::new(spec, &field.geometry, field.m)?;
    Ok(DensityField {
        values: conv.apply(&field.values),
        ..field.clone()
    })
}

/// `W∗ρ` through the discrete Fourier transform.
pub fn convolve_periodic_fft(field: &DensityField, spec: &KernelSpec) -> Result<DensityField> {
    let conv = PeriodicConvolution::new(spec, &field.geometry, field.m)?;
    Ok(DensityField {
        values: conv.apply_fft(&field.values),
        ..field.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::kernel::Normalization;
    use crate::meanfield::random_initial_field;

    #[test]
    fn constant_field_with_grid_aligned_radius() {
        // R = 0.1 on 200 points covers 41 points: Σ = 41Δx = 2R + Δx
        let g = TorusGeometry::unit(1);
        let f = DensityField::constant(g, 200, 0.7).unwrap();
        let c = convolve_periodic(&f, &KernelSpec::indicator(0.1)).unwrap();
        for &v in &c.values {
            assert!((v - 0.7 * 41.0 * 0.005).abs() < 1e-14);
        }
    }

    #[test]
    fn spike_reproduces_sampled_kernel() {
        let g = TorusGeometry::unit(1);
        let m = 100;
        let dx = 0.01;
        let mut vals = vec![0.0; m];
        vals[30] = 1.0 / dx;
        let f = DensityField::new(g, m, vals).unwrap();
        let spec = KernelSpec::bump(0.08);
        let c = convolve_periodic(&f, &spec).unwrap();
        for i in 0..m {
            let d = g.displacement([30.0 * dx, 0.0], [i as f64 * dx, 0.0]);
            let oracle = spec.profile_at(d[0].abs());
            assert!((c.values[i] - oracle).abs() < 1e-12, "i={i}");
        }
    }

    #[test]
    fn unit_kernel_preserves_mass() {
        for dim in [1, 2] {
            let g = TorusGeometry::unit(dim);
            let f = random_initial_field(g, 64, 2).unwrap();
            let spec = KernelSpec::indicator(0.1).with_normalization(Normalization::UnitIntegral);
            let c = convolve_periodic(&f, &spec).unwrap();
            assert!((c.mass() - f.mass()).abs() < 1e-12 * f.mass());
        }
    }

    #[test]
    fn direct_and_fft_agree() {
        for dim in [1, 2] {
            let g = TorusGeometry::unit(dim);
            let f = random_initial_field(g, 90, 8).unwrap();
            for spec in [KernelSpec::indicator(0.07), KernelSpec::bump(0.2)] {
                let a = convolve_periodic(&f, &spec).unwrap();
                let b = convolve_periodic_fft(&f, &spec).unwrap();
                let scale = a.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
                for (x, y) in a.values.iter().zip(&b.values) {
                    assert!((x - y).abs() <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn one_sided_direct_and_fft_agree() {
        let g = TorusGeometry::unit(1);
        let f = random_initial_field(g, 50, 4).unwrap();
        let conv = PeriodicConvolution::with_side(&KernelSpec::indicator(0.1), &g, 50, Side::Forward).unwrap();
        let a = conv.apply(&f.values);
        let b = conv.apply_fft(&f.values);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        // forward: point i sees i..=i+5
        let oracle: f64 = (10..=15).map(|k| f.values[k]).sum::<f64>() * 0.02;
        assert!((a[10] - oracle).abs() < 1e-14);
    }

    #[test]
    fn too_wide_kernel_errors() {
        let f = DensityField::constant(TorusGeometry::unit(1), 10, 1.0).unwrap();
        assert!(matches!(
            convolve_periodic(&f, &KernelSpec::indicator(0.5)),
            Err(Error::KernelTooWide { .. })
        ));
    }
}
