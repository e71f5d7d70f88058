//! Evaluation grids, trapezoidal quadrature and grid-sampled curves.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use crate::error::{FtsError, Result};

/// `N` equally spaced points on `[0, 1]`, endpoints included, together with
/// the trapezoidal weights used for every integral in the crate.
///
/// Cloning is cheap: points and weights are shared.
#[derive(Clone, Debug)]
pub struct Grid {
    points: Arc<[f64]>,
    weights: Arc<[f64]>,
}

impl Grid {
    pub fn uniform(n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(FtsError::GridTooSmall(n_points));
        }
        let h = 1.0 / (n_points - 1) as f64;
        let points: Vec<f64> = (0..n_points)
            .map(|a| if a == n_points - 1 { 1.0 } else { a as f64 * h })
            .collect();
        let mut weights = vec![h; n_points];
        weights[0] = 0.5 * h;
        weights[n_points - 1] = 0.5 * h;
        Ok(Grid {
            points: points.into(),
            weights: weights.into(),
        })
    }

    /// Builds a grid from explicit abscissae, checking that they are the
    /// uniform grid on `[0, 1]` to within `1e-12` relative spacing error.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        let grid = Grid::uniform(points.len())?;
        let h = 1.0 / (points.len() - 1) as f64;
        for (a, (&x, &expected)) in points.iter().zip(grid.points.iter()).enumerate() {
            if !x.is_finite() || (x - expected).abs() > 1e-12 * h.max(1.0) * (a.max(1) as f64) {
                return Err(FtsError::InvalidParameter(format!(
                    "grid point {a} = {x} is not on the uniform grid (expected {expected})"
                )));
            }
        }
        Ok(grid)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.len() != other.len() {
            Err(FtsError::GridMismatch(self.len(), other.len()))
        } else {
            Ok(())
        }
    }
}

/// Uniform grids on `[0,1]` are determined by their size.
impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
    }
}

/// Trapezoidal approximation of `∫_0^1 f(u) du` from samples on `grid`.
pub fn integrate(values: &[f64], grid: &Grid) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(FtsError::LengthMismatch {
            expected: grid.len(),
            actual: values.len(),
        });
    }
    Ok(values.iter().zip(grid.weights()).map(|(f, w)| f * w).sum())
}

/// A function in `L2[0,1]`, stored by its values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    grid: Grid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FtsError::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FtsError::NonFinite("curve values"));
        }
        Ok(Curve { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&u| f(u)).collect();
        Curve {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Curve {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        inner_product(self, self).map(f64::sqrt).unwrap_or(0.0)
    }
}

/// `⟨f, g⟩ = ∫ f(u) g(u) du`.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    Ok(weighted_dot(f.values(), g.values(), f.grid.weights()))
}

#[inline]
pub(crate) fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

/// The Fourier system on `[0,1]`: the constant, then `√2 sin(2πmu)`,
/// `√2 cos(2πmu)` for `m = 1, 2, …`, truncated to `dim` functions.
#[derive(Clone, Debug)]
pub struct FourierBasis {
    grid: Grid,
    functions: Vec<Curve>,
}

impl FourierBasis {
    pub fn new(grid: &Grid, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(FtsError::InvalidParameter("Fourier basis dimension must be positive".into()));
        }
        let functions = (0..dim)
            .map(|l| {
                if l == 0 {
                    Curve::from_fn(grid, |_| 1.0)
                } else {
                    let freq = ((l + 1) / 2) as f64;
                    if l % 2 == 1 {
                        Curve::from_fn(grid, |u| SQRT_2 * (2.0 * PI * freq * u).sin())
                    } else {
                        Curve::from_fn(grid, |u| SQRT_2 * (2.0 * PI * freq * u).cos())
                    }
                }
            })
            .collect();
        Ok(FourierBasis {
            grid: grid.clone(),
            functions,
        })
    }

    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn functions(&self) -> &[Curve] {
        &self.functions
    }

    pub fn function(&self, l: usize) -> &Curve {
        &self.functions[l]
    }

    /// Evaluates `Σ_l coef[l] ψ_l` on the grid, writing into `out`.
    pub fn combine_into(&self, coef: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (c, psi) in coef.iter().zip(&self.functions) {
            for (o, v) in out.iter_mut().zip(psi.values()) {
                *o += c * v;
            }
        }
    }

    pub fn combine(&self, coef: &[f64]) -> Curve {
        let mut values = vec![0.0; self.grid.len()];
        self.combine_into(coef, &mut values);
        Curve {
            grid: self.grid.clone(),
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_endpoints_and_spacing() {
        let g = Grid::uniform(11).unwrap();
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(g.points()[10], 1.0);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(Grid::uniform(1).is_err());
    }

    #[test]
    fn grid_from_points_rejects_non_uniform() {
        assert!(Grid::from_points(&[0.0, 0.5, 1.0]).is_ok());
        assert!(Grid::from_points(&[0.0, 0.4, 1.0]).is_err());
        assert!(Grid::from_points(&[0.0, 0.5, 0.9]).is_err());
    }

    #[test]
    fn integrate_constants_and_linear() {
        for n in [2, 3, 17, 101] {
            let g = Grid::uniform(n).unwrap();
            assert_abs_diff_eq!(integrate(&vec![1.0; n], &g).unwrap(), 1.0, epsilon = 1e-14);
            let lin: Vec<f64> = g.points().to_vec();
            assert_abs_diff_eq!(integrate(&lin, &g).unwrap(), 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn integrate_quadratic() {
        let g = Grid::uniform(101).unwrap();
        let sq: Vec<f64> = g.points().iter().map(|u| u * u).collect();
        // trapezoid error is h^2/6 for u^2
        assert_abs_diff_eq!(integrate(&sq, &g).unwrap(), 1.0 / 3.0, epsilon = 1e-4);
    }

    #[test]
    fn integrate_length_mismatch() {
        let g = Grid::uniform(5).unwrap();
        assert!(matches!(
            integrate(&[1.0; 4], &g),
            Err(FtsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn inner_products_of_trig_functions() {
        let g = Grid::uniform(101).unwrap();
        let s = Curve::from_fn(&g, |u| SQRT_2 * (2.0 * PI * u).sin());
        let c = Curve::from_fn(&g, |u| (2.0 * PI * u).cos());
        let zero = Curve::zeros(&g);
        assert_eq!(inner_product(&zero, &s).unwrap(), 0.0);
        assert_abs_diff_eq!(inner_product(&s, &s).unwrap(), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(inner_product(&s, &c).unwrap(), 0.0, epsilon = 1e-3);
        let other = Curve::zeros(&Grid::uniform(7).unwrap());
        assert!(inner_product(&s, &other).is_err());
    }

    #[test]
    fn fourier_basis_is_orthonormal_on_grid() {
        let g = Grid::uniform(30).unwrap();
        let basis = FourierBasis::new(&g, 10).unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let ip = inner_product(basis.function(a), basis.function(b)).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ip, expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn curve_rejects_nan() {
        let g = Grid::uniform(3).unwrap();
        assert!(Curve::new(g, vec![0.0, f64::NAN, 1.0]).is_err());
    }
}
