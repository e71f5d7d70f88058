use hdfts::autocov::threshold;
use hdfts::fda::kernel::{hs_norm, kernel_matmul, kernel_sym_eigen, KernelProduct, ProductMode};
use hdfts::fda::linalg::sym_eigen;
use hdfts::metrics::subspace_d;
use hdfts::vmfpca::subspace_discrepancy_functional;
use hdfts::{Curve, FourierBasis, Grid, Kernel, KernelMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: u32 = 200;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_km(rng: &mut ChaCha8Rng, grid: &Grid, pr: usize, pc: usize) -> KernelMatrix {
    let n = grid.len();
    KernelMatrix::new(grid.clone(), pr, pc, random_matrix(rng, pr * n, pc * n)).unwrap()
}

fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    random_matrix(rng, rows, cols).qr().q().columns(0, cols).into_owned()
}

/// Plain double sums over the grid with trapezoid weights.
fn riemann_outer(m1: &KernelMatrix, m2: &KernelMatrix, i: usize, j: usize) -> f64 {
    let w = m1.grid().weights();
    let mut s = 0.0;
    for l in 0..m1.p_cols() {
        let (a, b) = (m1.entry(i, l), m2.entry(j, l));
        for u in 0..w.len() {
            for v in 0..w.len() {
                s += w[u] * w[v] * a.values()[(u, v)] * b.values()[(u, v)];
            }
        }
    }
    s
}

fn riemann_contract(m1: &KernelMatrix, m2: &KernelMatrix, i: usize, j: usize, u: usize, v: usize) -> f64 {
    let w = m1.grid().weights();
    let mut s = 0.0;
    for l in 0..m1.p_cols() {
        for (x, wx) in w.iter().enumerate() {
            s += wx * m1.entry(i, l).values()[(u, x)] * m2.entry(j, l).values()[(v, x)];
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn hs_triangle_inequality(seed in any::<u64>(), n in 2usize..30) {
        let g = Grid::uniform(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Kernel::new(g.clone(), random_matrix(&mut rng, n, n)).unwrap();
        let b = Kernel::new(g.clone(), random_matrix(&mut rng, n, n) * 3.0).unwrap();
        let sum = Kernel::new(g, a.values() + b.values()).unwrap();
        prop_assert!(hs_norm(&sum) <= hs_norm(&a) + hs_norm(&b) + 1e-12);
    }

    #[test]
    fn outer_product_norm_factorises(seed in any::<u64>(), n in 2usize..40) {
        let g = Grid::uniform(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Curve::new(g.clone(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let h = Curve::new(g, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let lhs = hs_norm(&Kernel::outer(&f, &h).unwrap());
        let rhs = f.norm() * h.norm();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn kernel_matmul_matches_riemann_sums(seed in any::<u64>(), p1 in 1usize..=3, p2 in 1usize..=3, q in 1usize..=3) {
        let g = Grid::uniform(21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m1 = random_km(&mut rng, &g, p1, q);
        let m2 = random_km(&mut rng, &g, p2, q);
        let KernelProduct::Matrix(r) = kernel_matmul(&m1, &m2, ProductMode::PointwiseTransposeProduct).unwrap() else {
            panic!("expected a matrix");
        };
        for i in 0..p1 {
            for j in 0..p2 {
                prop_assert!((r[(i, j)] - riemann_outer(&m1, &m2, i, j)).abs() <= 1e-8);
            }
        }
        let KernelProduct::Kernels(c) = kernel_matmul(&m1, &m2, ProductMode::WContraction).unwrap() else {
            panic!("expected kernels");
        };
        for _ in 0..8 {
            let (i, j) = (rng.random_range(0..p1), rng.random_range(0..p2));
            let (u, v) = (rng.random_range(0..21), rng.random_range(0..21));
            prop_assert!((c.entry(i, j).values()[(u, v)] - riemann_contract(&m1, &m2, i, j, u, v)).abs() <= 1e-8);
        }
    }

    #[test]
    fn eigen_reconstruction(seed in any::<u64>(), dim in 1usize..40, p in 1usize..=3, n in 2usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(&mut rng, dim, dim);
        let s = &a + a.transpose();
        let eig = sym_eigen(&s).unwrap();
        let rebuilt = &eig.vectors * DMatrix::from_diagonal(&DVector::from_vec(eig.values.clone())) * eig.vectors.transpose();
        prop_assert!((rebuilt - &s).norm() <= 1e-8 * s.norm());

        let g = Grid::uniform(n).unwrap();
        let b = random_km(&mut rng, &g, p, p);
        let k = KernelMatrix::new(g, p, p, b.data() + b.data().transpose()).unwrap();
        let ke = kernel_sym_eigen(&k).unwrap();
        let f = &ke.functions;
        let rebuilt = f * DMatrix::from_diagonal(&DVector::from_vec(ke.values.clone())) * f.transpose();
        prop_assert!((rebuilt - k.data()).norm() <= 1e-8 * k.data().norm());
    }

    #[test]
    fn threshold_idempotent_and_zero_is_identity(seed in any::<u64>(), p in 1usize..6, frac in 0.0f64..1.2) {
        let g = Grid::uniform(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // blocks of very different size so thresholds bite at every level
        let scales: Vec<f64> = (0..p * p).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut data = random_matrix(&mut rng, p * 9, p * 9);
        for c in 0..p * 9 {
            for r in 0..p * 9 {
                data[(r, c)] *= scales[(r / 9) * p + c / 9];
            }
        }
        let s = KernelMatrix::new(g, p, p, data).unwrap();
        prop_assert_eq!(threshold(&s, 0.0), s.clone());
        let omega = frac * s.hs_norms().max();
        let once = threshold(&s, omega);
        prop_assert_eq!(threshold(&once, omega), once);
    }

    #[test]
    fn discrepancies_are_bounded_with_analytic_angles(seed in any::<u64>(), r1 in 1usize..4, r2 in 1usize..4, theta in 0.0f64..std::f64::consts::PI) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e1 = random_orthonormal(&mut rng, 7, r1);
        let e2 = random_orthonormal(&mut rng, 7, r2);
        let d = subspace_d(&e1, &e2).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));

        let (c, s) = (theta.cos(), theta.sin());
        let mut a = DMatrix::zeros(4, 1);
        a[(0, 0)] = 1.0;
        let mut b = DMatrix::zeros(4, 1);
        b[(0, 0)] = c;
        b[(1, 0)] = s;
        prop_assert!((subspace_d(&a, &b).unwrap() - s.abs()).abs() < 1e-7);

        let g = Grid::uniform(31).unwrap();
        let basis = FourierBasis::new(&g, 5).unwrap();
        let col = |l: usize| DVector::from_column_slice(basis.function(l).values());
        let shared = col(0);
        let b1 = DMatrix::from_columns(&[shared.clone(), col(1)]);
        let b2 = DMatrix::from_columns(&[shared, col(1) * c + col(2) * s]);
        let dt = subspace_discrepancy_functional(&g, &b1, &b2).unwrap();
        prop_assert!((0.0..=1.0).contains(&dt));
        prop_assert!((dt - (s * s / 2.0).sqrt()).abs() < 1e-7);

        let stacked1 = random_orthonormal(&mut rng, 5, r1);
        let stacked2 = random_orthonormal(&mut rng, 5, r2);
        let lift = |m: &DMatrix<f64>| {
            let cols: Vec<DVector<f64>> = (0..m.ncols())
                .map(|j| (0..5).fold(DVector::zeros(31), |acc, l| acc + col(l) * m[(l, j)]))
                .collect();
            DMatrix::from_columns(&cols)
        };
        let dt = subspace_discrepancy_functional(&g, &lift(&stacked1), &lift(&stacked2)).unwrap();
        prop_assert!((0.0..=1.0).contains(&dt));
    }
}
