//! Finite-difference operators and quadrature on [`Field2D`].
//!
//! All stencils are centered and read values outside the interior as zero.
//! The biharmonic operator is the composition of two 5-point Laplacians in
//! which the intermediate Laplacian is extended to the boundary edges:
//! `Δu = 2u₁/h²` there for clamped grids (even ghost reflection, `u_ν = 0`)
//! and `Δu = 0` for hinged grids (odd reflection).

use crate::grid::{BoundaryCondition, Field2D, Grid2D};
use crate::parallel;

fn build<F>(grid: Grid2D, f: F) -> Field2D
where
    F: Fn(isize, isize) -> f64 + Sync + Send,
{
    let n = grid.n();
    let mut values = vec![0.0; grid.len()];
    parallel::for_each_row_mut(&mut values, n, |i, row| {
        for (j, out) in row.iter_mut().enumerate() {
            *out = f(i as isize, j as isize);
        }
    });
    Field2D::from_values(grid, values).expect("sized by construction")
}

/// 5-point Laplacian.
pub fn laplacian(u: &Field2D) -> Field2D {
    let inv_h2 = 1.0 / (u.grid().h() * u.grid().h());
    build(*u.grid(), |i, j| {
        (u.at(i + 1, j) + u.at(i - 1, j) + u.at(i, j + 1) + u.at(i, j - 1) - 4.0 * u.at(i, j))
            * inv_h2
    })
}

/// Laplacian values on the four boundary edges, as implied by the ghost
/// treatment of the grid's boundary condition. Returned in the order
/// `[x = 0, x = 1, y = 0, y = 1]`, each of length `n`.
pub fn boundary_laplacian(u: &Field2D) -> [Vec<f64>; 4] {
    let n = u.n();
    match u.grid().bc() {
        BoundaryCondition::Navier => [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        BoundaryCondition::Dirichlet => {
            let s = 2.0 / (u.grid().h() * u.grid().h());
            [
                (0..n).map(|j| s * u.get(0, j)).collect(),
                (0..n).map(|j| s * u.get(n - 1, j)).collect(),
                (0..n).map(|i| s * u.get(i, 0)).collect(),
                (0..n).map(|i| s * u.get(i, n - 1)).collect(),
            ]
        }
    }
}

/// 13-point biharmonic with the grid's ghost treatment.
pub fn biharmonic(u: &Field2D) -> Field2D {
    let lap = laplacian(u);
    let [x0, x1, y0, y1] = boundary_laplacian(u);
    let n = u.n() as isize;
    let inv_h2 = 1.0 / (u.grid().h() * u.grid().h());
    let ext = |i: isize, j: isize| -> f64 {
        if i < 0 {
            x0[j as usize]
        } else if i >= n {
            x1[j as usize]
        } else if j < 0 {
            y0[i as usize]
        } else if j >= n {
            y1[i as usize]
        } else {
            lap.at(i, j)
        }
    };
    build(*u.grid(), |i, j| {
        (ext(i + 1, j) + ext(i - 1, j) + ext(i, j + 1) + ext(i, j - 1) - 4.0 * ext(i, j)) * inv_h2
    })
}

/// Centered first differences `(u_x, u_y)`.
pub fn gradient(u: &Field2D) -> (Field2D, Field2D) {
    let s = 0.5 / u.grid().h();
    let ux = build(*u.grid(), |i, j| (u.at(i + 1, j) - u.at(i - 1, j)) * s);
    let uy = build(*u.grid(), |i, j| (u.at(i, j + 1) - u.at(i, j - 1)) * s);
    (ux, uy)
}

/// Centered second differences `(u_xx, u_yy, u_xy)`; the cross term uses
/// the 4-point diagonal stencil.
pub fn second_derivatives(u: &Field2D) -> (Field2D, Field2D, Field2D) {
    let h = u.grid().h();
    let inv_h2 = 1.0 / (h * h);
    let inv_4h2 = 0.25 * inv_h2;
    let uxx = build(*u.grid(), |i, j| {
        (u.at(i + 1, j) - 2.0 * u.at(i, j) + u.at(i - 1, j)) * inv_h2
    });
    let uyy = build(*u.grid(), |i, j| {
        (u.at(i, j + 1) - 2.0 * u.at(i, j) + u.at(i, j - 1)) * inv_h2
    });
    let uxy = build(*u.grid(), |i, j| {
        (u.at(i + 1, j + 1) - u.at(i + 1, j - 1) - u.at(i - 1, j + 1) + u.at(i - 1, j - 1))
            * inv_4h2
    });
    (uxx, uyy, uxy)
}

/// Nodewise Hessian determinant `u_xx u_yy − u_xy²`.
pub fn hessian_det(u: &Field2D) -> Field2D {
    let (uxx, uyy, uxy) = second_derivatives(u);
    let n = u.n();
    build(*u.grid(), |i, j| {
        let k = i as usize * n + j as usize;
        uxx.values()[k] * uyy.values()[k] - uxy.values()[k] * uxy.values()[k]
    })
}

/// Rectangle rule `h² Σ w` over interior nodes.
pub fn integrate(w: &Field2D) -> f64 {
    let n = w.n();
    let h = w.grid().h();
    let vals = w.values();
    h * h * parallel::ordered_sum(n, |i| vals[i * n..(i + 1) * n].iter().sum())
}

/// `integrate(a · b)` without materializing the product.
pub fn inner(a: &Field2D, b: &Field2D) -> f64 {
    let n = a.n();
    let h = a.grid().h();
    let (av, bv) = (a.values(), b.values());
    h * h
        * parallel::ordered_sum(n, |i| {
            let r = i * n..(i + 1) * n;
            av[r.clone()].iter().zip(&bv[r]).map(|(x, y)| x * y).sum()
        })
}

/// `∫|Δu|²` with the boundary-edge Laplacian values included at trapezoid
/// weight ½; this equals `h² uᵀ B u` for the grid's biharmonic matrix `B`.
pub fn laplacian_energy(u: &Field2D) -> f64 {
    let lap = laplacian(u);
    let interior = inner(&lap, &lap);
    let h = u.grid().h();
    let edges: f64 = boundary_laplacian(u)
        .iter()
        .map(|e| e.iter().map(|v| v * v).sum::<f64>())
        .sum();
    interior + 0.5 * h * h * edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, bc: BoundaryCondition) -> Grid2D {
        Grid2D::new(n, bc).unwrap()
    }

    fn max_err_where<F: Fn(usize, usize) -> bool>(a: &Field2D, b: &Field2D, keep: F) -> f64 {
        let n = a.n();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if keep(i, j) {
                    m = m.max((a.get(i, j) - b.get(i, j)).abs());
                }
            }
        }
        m
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        let g = grid(16, BoundaryCondition::Dirichlet);
        let u = Field2D::from_fn(g, |x, y| x * x + y * y);
        let lap = laplacian(&u);
        let four = Field2D::from_fn(g, |_, _| 4.0);
        // the sample is not zero on the boundary, so only nodes whose
        // stencil stays inside are compared
        assert!(max_err_where(&lap, &four, |i, j| g.depth(i, j) >= 2) < 1e-9);
        assert!(laplacian(&Field2D::zeros(g)).is_zero());
    }

    fn sine(g: Grid2D) -> Field2D {
        Field2D::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin())
    }

    #[test]
    fn laplacian_second_order_on_sine() {
        let errs: Vec<f64> = [64, 128]
            .iter()
            .map(|&n| {
                let g = grid(n, BoundaryCondition::Navier);
                let u = sine(g);
                max_err_where(&laplacian(&u), &u.scaled(-2.0 * PI * PI), |_, _| true)
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn biharmonic_exact_on_quartic() {
        let g = grid(20, BoundaryCondition::Dirichlet);
        let u = Field2D::from_fn(g, |x, y| x * x * y * y);
        let b = biharmonic(&u);
        let eight = Field2D::from_fn(g, |_, _| 8.0);
        assert!(max_err_where(&b, &eight, |i, j| g.depth(i, j) >= 3) < 1e-6);
        assert!(biharmonic(&Field2D::zeros(g)).is_zero());
    }

    #[test]
    fn navier_biharmonic_second_order_on_sine() {
        let errs: Vec<f64> = [64, 128]
            .iter()
            .map(|&n| {
                let g = grid(n, BoundaryCondition::Navier);
                let u = sine(g);
                max_err_where(&biharmonic(&u), &u.scaled(4.0 * PI.powi(4)), |_, _| true)
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn hessian_det_exact_on_quadratics() {
        let g = grid(12, BoundaryCondition::Dirichlet);
        let deep = |i: usize, j: usize| g.depth(i, j) >= 2;
        let cases: [(fn(f64, f64) -> f64, f64); 3] =
            [(|x, y| x * x + y * y, 4.0), (|x, y| x * y, -1.0), (|x, _| x * x, 0.0)];
        for (f, expect) in cases {
            let d = hessian_det(&Field2D::from_fn(g, f));
            let e = Field2D::from_fn(g, |_, _| expect);
            assert!(max_err_where(&d, &e, deep) < 1e-8);
        }
    }

    #[test]
    fn gradient_exact_on_linears() {
        let g = grid(10, BoundaryCondition::Dirichlet);
        let (ux, uy) = gradient(&Field2D::from_fn(g, |x, _| x));
        let one = Field2D::from_fn(g, |_, _| 1.0);
        let deep = |i: usize, j: usize| g.depth(i, j) >= 2;
        assert!(max_err_where(&ux, &one, deep) < 1e-12);
        assert!(max_err_where(&uy, &Field2D::zeros(g), deep) < 1e-12);
        let (zx, zy) = gradient(&Field2D::zeros(g));
        assert!(zx.is_zero() && zy.is_zero());
    }

    #[test]
    fn gradient_second_order_on_sine() {
        let errs: Vec<f64> = [64, 128]
            .iter()
            .map(|&n| {
                let g = grid(n, BoundaryCondition::Navier);
                let (ux, uy) = gradient(&sine(g));
                let ex = Field2D::from_fn(g, |x, y| PI * (PI * x).cos() * (PI * y).sin());
                let ey = Field2D::from_fn(g, |x, y| PI * (PI * x).sin() * (PI * y).cos());
                max_err_where(&ux, &ex, |_, _| true).max(max_err_where(&uy, &ey, |_, _| true))
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn integrate_closed_forms() {
        let g = grid(63, BoundaryCondition::Dirichlet);
        let n: f64 = 63.0;
        let ones = Field2D::from_fn(g, |_, _| 1.0);
        assert!((integrate(&ones) - (n / (n + 1.0)).powi(2)).abs() < 1e-13);
        let s = integrate(&sine(g));
        assert!((s - 4.0 / (PI * PI)).abs() < 1e-3);
        let b = Field2D::from_fn(g, |x, y| {
            x * x * (1.0 - x).powi(2) * y * y * (1.0 - y).powi(2)
        });
        assert!((integrate(&b) - 1.0 / 900.0).abs() < 1e-6);
    }

    #[test]
    fn laplacian_is_symmetric_for_compact_fields() {
        let g = grid(40, BoundaryCondition::Dirichlet);
        let u = Field2D::from_fn(g, |x, y| (x * (1.0 - x) * y * (1.0 - y)).powi(2));
        let v = Field2D::from_fn(g, |x, y| (x * (1.0 - x)).powi(3) * y * y * (1.0 - y).powi(2));
        let a = inner(&laplacian(&u), &v);
        let b = inner(&u, &laplacian(&v));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-14);
    }
}
