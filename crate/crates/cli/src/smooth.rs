//! Least-squares Fourier smoothing of raw grid samples.

use hdfts::{CurvePanel, FourierBasis, FtsError};
use nalgebra::DMatrix;

use crate::error::Result;

/// Singular values below this fraction of the largest are dropped from the
/// design, so aliased basis functions on coarse grids do not blow up.
const RANK_TOL: f64 = 1e-10;

/// Projects every curve of `raw` onto the first `basis_dim` Fourier functions
/// (unweighted least squares over the grid points) and evaluates the fit.
pub fn smooth_panel(raw: &CurvePanel, basis_dim: usize) -> Result<CurvePanel> {
    let big_n = raw.n_points();
    if basis_dim == 0 || basis_dim > big_n {
        return Err(FtsError::InvalidParameter(format!(
            "basis dimension must lie in 1..={big_n}, got {basis_dim}"
        ))
        .into());
    }
    let basis = FourierBasis::new(raw.grid(), basis_dim)?;
    let phi = DMatrix::from_fn(big_n, basis_dim, |a, l| basis.function(l).values()[a]);
    let svd = phi.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s_max = svd.singular_values.max();
    let keep: Vec<usize> = (0..basis_dim).filter(|&l| svd.singular_values[l] > RANK_TOL * s_max).collect();
    let u_r = u.select_columns(&keep);
    let hat = &u_r * u_r.transpose();

    let mut data = raw.data().clone();
    for j in 0..raw.p() {
        let block = raw.data().columns(j * big_n, big_n) * &hat;
        data.columns_mut(j * big_n, big_n).copy_from(&block);
    }
    Ok(CurvePanel::new(raw.grid().clone(), raw.p(), data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hdfts::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn panel_from(grid: &Grid, rows: &[Vec<f64>]) -> CurvePanel {
        let data = DMatrix::from_fn(rows.len(), grid.len(), |t, a| rows[t][a]);
        CurvePanel::new(grid.clone(), 1, data).unwrap()
    }

    #[test]
    fn curves_in_span_are_unchanged() {
        let g = Grid::uniform(25).unwrap();
        let basis = FourierBasis::new(&g, 5).unwrap();
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|t| basis.combine(&[1.0, t as f64, -0.5, 0.25 * t as f64, 2.0]).into_values())
            .collect();
        let panel = panel_from(&g, &rows);
        let s = smooth_panel(&panel, 5).unwrap();
        assert!((s.data() - panel.data()).amax() < 1e-8);
    }

    #[test]
    fn one_function_gives_the_mean() {
        let g = Grid::uniform(40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let row: Vec<f64> = (0..40).map(|_| noise.sample(&mut rng)).collect();
        let mean = row.iter().sum::<f64>() / 40.0;
        let s = smooth_panel(&panel_from(&g, &[row.clone(), row]), 1).unwrap();
        for v in s.curve_values(0, 0) {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_sine_leaves_noise_variance() {
        let big_n = 401;
        let g = Grid::uniform(big_n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sd = 0.3;
        let noise = Normal::new(0.0, sd).unwrap();
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| g.points().iter().map(|u| (2.0 * PI * u).sin() + noise.sample(&mut rng)).collect())
            .collect();
        let panel = panel_from(&g, &rows);
        let s = smooth_panel(&panel, 5).unwrap();
        let resid = panel.data() - s.data();
        // residual sum of squares has (N - K) degrees of freedom per curve
        let var = resid.norm_squared() / (20.0 * (big_n - 5) as f64);
        assert!((var / (sd * sd) - 1.0).abs() < 0.05, "{var}");
        let signal_err = g
            .points()
            .iter()
            .enumerate()
            .map(|(a, u)| (s.value(0, 0, a) - (2.0 * PI * u).sin()).powi(2))
            .sum::<f64>()
            / big_n as f64;
        assert!(signal_err < 0.01, "{signal_err}");
    }

    #[test]
    fn dimension_bounds() {
        let g = Grid::uniform(5).unwrap();
        let panel = panel_from(&g, &[vec![1.0; 5], vec![-2.0; 5]]);
        assert!(smooth_panel(&panel, 6).is_err());
        assert!(smooth_panel(&panel, 0).is_err());
        // aliased functions on a coarse grid are dropped, not inverted
        let s = smooth_panel(&panel, 5).unwrap();
        assert!((s.data() - panel.data()).amax() < 1e-10);
    }
}
