//! Uniform 2-D staggered (MAC) mesh: scalars at cell centers, normal vector
//! components at cell faces.
//!
//! Cells are indexed `(i, j)` with `i` along x and stored row-major (`j * nx + i`).
//! The x-face `(i, j)`, `0 <= i <= nx`, separates cells `(i-1, j)` and `(i, j)`; the
//! y-face `(i, j)`, `0 <= j <= ny`, separates cells `(i, j-1)` and `(i, j)`.

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<S> {
    nx: usize,
    ny: usize,
    lx: S,
    ly: S,
}

/// Values at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField<S> {
    nx: usize,
    ny: usize,
    data: Vec<S>,
}

/// Normal components on x-faces (`(nx+1) * ny`) and y-faces (`nx * (ny+1)`).
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField<S> {
    nx: usize,
    ny: usize,
    pub x: Vec<S>,
    pub y: Vec<S>,
}

impl<S: Scalar> GridSpec<S> {
    pub fn new(nx: usize, ny: usize, lx: S, ly: S) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2x2 cells, got {nx}x{ny}"
            )));
        }
        if !(lx > S::zero() && ly > S::zero()) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::InvalidParameter("domain extents must be > 0".into()));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> S {
        self.lx
    }

    pub fn ly(&self) -> S {
        self.ly
    }

    pub fn hx(&self) -> S {
        self.lx / S::from_usize_lossy(self.nx)
    }

    pub fn hy(&self) -> S {
        self.ly / S::from_usize_lossy(self.ny)
    }

    pub fn cell_volume(&self) -> S {
        self.hx() * self.hy()
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_x_faces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn num_y_faces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cell-center coordinates.
    pub fn cell_center(&self, i: usize, j: usize) -> (S, S) {
        let half = S::lit(0.5);
        (
            (S::from_usize_lossy(i) + half) * self.hx(),
            (S::from_usize_lossy(j) + half) * self.hy(),
        )
    }

    pub fn cell_field(&self, value: S) -> CellField<S> {
        CellField {
            nx: self.nx,
            ny: self.ny,
            data: vec![value; self.num_cells()],
        }
    }

    pub fn cell_field_from_fn(&self, mut f: impl FnMut(S, S) -> S) -> CellField<S> {
        let mut out = self.cell_field(S::zero());
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (x, y) = self.cell_center(i, j);
                out.data[self.cell(i, j)] = f(x, y);
            }
        }
        out
    }

    pub fn cell_field_from_vec(&self, data: Vec<S>) -> Result<CellField<S>> {
        if data.len() != self.num_cells() {
            return Err(Error::InvalidParameter(format!(
                "cell field needs {} values, got {}",
                self.num_cells(),
                data.len()
            )));
        }
        Ok(CellField {
            nx: self.nx,
            ny: self.ny,
            data,
        })
    }

    pub fn face_field(&self, value: S) -> FaceField<S> {
        FaceField {
            nx: self.nx,
            ny: self.ny,
            x: vec![value; self.num_x_faces()],
            y: vec![value; self.num_y_faces()],
        }
    }

    /// Samples `fx` at x-face centers and `fy` at y-face centers.
    pub fn face_field_from_fn(&self, mut fx: impl FnMut(S, S) -> S, mut fy: impl FnMut(S, S) -> S) -> FaceField<S> {
        let (hx, hy) = (self.hx(), self.hy());
        let half = S::lit(0.5);
        let mut out = self.face_field(S::zero());
        for j in 0..self.ny {
            for i in 0..=self.nx {
                out.x[self.x_face(i, j)] = fx(S::from_usize_lossy(i) * hx, (S::from_usize_lossy(j) + half) * hy);
            }
        }
        for j in 0..=self.ny {
            for i in 0..self.nx {
                out.y[self.y_face(i, j)] = fy((S::from_usize_lossy(i) + half) * hx, S::from_usize_lossy(j) * hy);
            }
        }
        out
    }

    fn check_cell(&self, f: &CellField<S>) {
        assert!(f.nx == self.nx && f.ny == self.ny, "cell field does not match grid");
    }

    fn check_face(&self, f: &FaceField<S>) {
        assert!(f.nx == self.nx && f.ny == self.ny, "face field does not match grid");
    }

    /// Discrete gradient on faces; zero on the boundary (homogeneous Neumann).
    pub fn grad(&self, phi: &CellField<S>) -> FaceField<S> {
        self.check_cell(phi);
        let (hx, hy) = (self.hx(), self.hy());
        let mut out = self.face_field(S::zero());
        for j in 0..self.ny {
            for i in 1..self.nx {
                out.x[self.x_face(i, j)] = (phi.data[self.cell(i, j)] - phi.data[self.cell(i - 1, j)]) / hx;
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                out.y[self.y_face(i, j)] = (phi.data[self.cell(i, j)] - phi.data[self.cell(i, j - 1)]) / hy;
            }
        }
        out
    }

    /// Discrete divergence of a face field at cell centers.
    pub fn div(&self, f: &FaceField<S>) -> CellField<S> {
        self.check_face(f);
        let (hx, hy) = (self.hx(), self.hy());
        let mut out = self.cell_field(S::zero());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.data[self.cell(i, j)] = (f.x[self.x_face(i + 1, j)] - f.x[self.x_face(i, j)]) / hx
                    + (f.y[self.y_face(i, j + 1)] - f.y[self.y_face(i, j)]) / hy;
            }
        }
        out
    }

    /// `div(grad(phi))`, the 5-point Laplacian with Neumann closure.
    pub fn laplacian(&self, phi: &CellField<S>) -> CellField<S> {
        self.div(&self.grad(phi))
    }

    /// Matrix of [`GridSpec::laplacian`] over lexicographic cells.
    pub fn laplacian_matrix(&self) -> BandMatrix<S> {
        let n = self.num_cells();
        let mut m = BandMatrix::zeros(n, self.nx, self.nx);
        let (cx, cy) = (S::one() / (self.hx() * self.hx()), S::one() / (self.hy() * self.hy()));
        for j in 0..self.ny {
            for i in 0..self.nx {
                let p = self.cell(i, j);
                for (nb, c) in self.cell_neighbors(i, j).into_iter().zip([cx, cx, cy, cy]) {
                    if let Some(q) = nb {
                        m.add(p, q, c);
                        m.add(p, p, -c);
                    }
                }
            }
        }
        m
    }

    /// West, east, south and north neighbors of a cell, `None` across the boundary.
    pub fn cell_neighbors(&self, i: usize, j: usize) -> [Option<usize>; 4] {
        [
            (i > 0).then(|| self.cell(i - 1, j)),
            (i + 1 < self.nx).then(|| self.cell(i + 1, j)),
            (j > 0).then(|| self.cell(i, j - 1)),
            (j + 1 < self.ny).then(|| self.cell(i, j + 1)),
        ]
    }

    /// Upwind face values of `phi` against the face-normal velocity `u`: the upstream
    /// cell when `u != 0`, the two-cell mean when `u == 0`. Boundary faces take the
    /// adjacent cell.
    pub fn upwind(&self, phi: &CellField<S>, u: &FaceField<S>) -> FaceField<S> {
        self.check_cell(phi);
        self.check_face(u);
        let pick = |left: S, right: S, vel: S| {
            if vel > S::zero() {
                left
            } else if vel < S::zero() {
                right
            } else {
                S::lit(0.5) * (left + right)
            }
        };
        let mut out = self.cell_to_face(phi);
        for j in 0..self.ny {
            for i in 1..self.nx {
                let f = self.x_face(i, j);
                out.x[f] = pick(phi.data[self.cell(i - 1, j)], phi.data[self.cell(i, j)], u.x[f]);
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                let f = self.y_face(i, j);
                out.y[f] = pick(phi.data[self.cell(i, j - 1)], phi.data[self.cell(i, j)], u.y[f]);
            }
        }
        out
    }

    /// Two-point averages on interior faces; boundary faces copy the adjacent cell.
    pub fn cell_to_face(&self, phi: &CellField<S>) -> FaceField<S> {
        self.check_cell(phi);
        let half = S::lit(0.5);
        let mut out = self.face_field(S::zero());
        for j in 0..self.ny {
            for i in 0..=self.nx {
                let v = if i == 0 {
                    phi.data[self.cell(0, j)]
                } else if i == self.nx {
                    phi.data[self.cell(self.nx - 1, j)]
                } else {
                    half * (phi.data[self.cell(i - 1, j)] + phi.data[self.cell(i, j)])
                };
                out.x[self.x_face(i, j)] = v;
            }
        }
        for j in 0..=self.ny {
            for i in 0..self.nx {
                let v = if j == 0 {
                    phi.data[self.cell(i, 0)]
                } else if j == self.ny {
                    phi.data[self.cell(i, self.ny - 1)]
                } else {
                    half * (phi.data[self.cell(i, j - 1)] + phi.data[self.cell(i, j)])
                };
                out.y[self.y_face(i, j)] = v;
            }
        }
        out
    }

    /// Averages the two faces bounding each cell, giving cell-centered components.
    pub fn face_to_cell(&self, u: &FaceField<S>) -> (CellField<S>, CellField<S>) {
        self.check_face(u);
        let half = S::lit(0.5);
        let mut ux = self.cell_field(S::zero());
        let mut uy = self.cell_field(S::zero());
        for j in 0..self.ny {
            for i in 0..self.nx {
                let c = self.cell(i, j);
                ux.data[c] = half * (u.x[self.x_face(i, j)] + u.x[self.x_face(i + 1, j)]);
                uy.data[c] = half * (u.y[self.y_face(i, j)] + u.y[self.y_face(i, j + 1)]);
            }
        }
        (ux, uy)
    }

    /// Cell-centered gradient, the mean of the two bounding face gradients.
    pub fn cell_gradient(&self, phi: &CellField<S>) -> (CellField<S>, CellField<S>) {
        self.face_to_cell(&self.grad(phi))
    }

    /// Control-volume weight of an x-face: `hx*hy` inside, half of it on the boundary.
    #[inline]
    pub fn x_face_weight(&self, i: usize) -> S {
        let w = self.cell_volume();
        if i == 0 || i == self.nx {
            S::lit(0.5) * w
        } else {
            w
        }
    }

    #[inline]
    pub fn y_face_weight(&self, j: usize) -> S {
        let w = self.cell_volume();
        if j == 0 || j == self.ny {
            S::lit(0.5) * w
        } else {
            w
        }
    }

    /// `sum_cells phi * hx * hy`
    pub fn integrate(&self, phi: &CellField<S>) -> S {
        self.check_cell(phi);
        phi.data.iter().fold(S::zero(), |a, &v| a + v) * self.cell_volume()
    }

    /// `sum_cells phi * psi * hx * hy`
    pub fn cell_inner(&self, phi: &CellField<S>, psi: &CellField<S>) -> S {
        self.check_cell(phi);
        self.check_cell(psi);
        phi.data.iter().zip(&psi.data).fold(S::zero(), |a, (&p, &q)| a + p * q) * self.cell_volume()
    }

    /// Face-weighted inner product of two face fields.
    pub fn face_inner(&self, f: &FaceField<S>, g: &FaceField<S>) -> S {
        self.face_weighted_sum(f, g, |a, b| a * b)
    }

    /// `sum_faces w_f * op(f_f, g_f)` over both face families.
    pub fn face_weighted_sum(&self, f: &FaceField<S>, g: &FaceField<S>, op: impl Fn(S, S) -> S) -> S {
        self.check_face(f);
        self.check_face(g);
        let mut acc = S::zero();
        for j in 0..self.ny {
            for i in 0..=self.nx {
                let k = self.x_face(i, j);
                acc = acc + self.x_face_weight(i) * op(f.x[k], g.x[k]);
            }
        }
        for j in 0..=self.ny {
            for i in 0..self.nx {
                let k = self.y_face(i, j);
                acc = acc + self.y_face_weight(j) * op(f.y[k], g.y[k]);
            }
        }
        acc
    }
}

impl<S: Scalar> CellField<S> {
    pub fn values(&self) -> &[S] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<S> {
        self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> S {
        self.data[j * self.nx + i]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> S {
        self.data.iter().fold(S::infinity(), |a, &b| a.min(b))
    }

    pub fn max(&self) -> S {
        self.data.iter().fold(S::neg_infinity(), |a, &b| a.max(b))
    }
}

impl<S: Scalar> FaceField<S> {
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn scale(&mut self, factor: S) {
        for v in self.x.iter_mut().chain(self.y.iter_mut()) {
            *v = *v * factor;
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        assert_eq!(self.dims(), other.dims());
        Self {
            nx: self.nx,
            ny: self.ny,
            x: self.x.iter().zip(&other.x).map(|(&a, &b)| f(a, b)).collect(),
            y: self.y.iter().zip(&other.y).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Whether every normal component on the domain boundary is exactly zero.
    pub fn boundary_normals_zero(&self) -> bool {
        let (nx, ny) = (self.nx, self.ny);
        (0..ny).all(|j| self.x[j * (nx + 1)] == S::zero() && self.x[j * (nx + 1) + nx] == S::zero())
            && (0..nx).all(|i| self.y[i] == S::zero() && self.y[ny * nx + i] == S::zero())
    }

    /// Maximum absolute component.
    pub fn max_abs(&self) -> S {
        self.x.iter().chain(&self.y).fold(S::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn values(&self) -> impl Iterator<Item = &S> {
        self.x.iter().chain(&self.y)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;

    fn grid(n: usize) -> GridSpec<f64> {
        GridSpec::new(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(1, 4, 1.0, 1.0).is_err());
        assert!(GridSpec::new(4, 4, 0.0, 1.0).is_err());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = grid(6);
        let f = g.grad(&g.cell_field(3.5));
        assert!(f.values().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let g = GridSpec::<f64>::new(5, 4, 2.0, 1.0).unwrap();
        let f = g.grad(&g.cell_field_from_fn(|x, _| x));
        for j in 0..4 {
            for i in 0..=5 {
                let v = f.x[g.x_face(i, j)];
                if i == 0 || i == 5 {
                    assert_eq!(v, 0.0);
                } else {
                    assert!((v - 1.0).abs() < 1e-13);
                }
            }
        }
        assert!(f.y.iter().all(|&v| v.abs() < 1e-13));
    }

    fn gradient_error(n: usize) -> f64 {
        let g = grid(n);
        let phi = g.cell_field_from_fn(|x, y| (PI * x).sin() * (2.0 * PI * y).cos());
        let f = g.grad(&phi);
        let exact = g.face_field_from_fn(
            |x, y| PI * (PI * x).cos() * (2.0 * PI * y).cos(),
            |x, y| -2.0 * PI * (PI * x).sin() * (2.0 * PI * y).sin(),
        );
        let mut err: f64 = 0.0;
        for j in 0..n {
            for i in 1..n {
                let k = g.x_face(i, j);
                err = err.max((f.x[k] - exact.x[k]).abs());
            }
        }
        for j in 1..n {
            for i in 0..n {
                let k = g.y_face(i, j);
                err = err.max((f.y[k] - exact.y[k]).abs());
            }
        }
        err
    }

    #[test]
    fn gradient_converges_second_order() {
        let (e1, e2) = (gradient_error(16), gradient_error(32));
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "observed order {order}");
    }

    #[test]
    fn divergence_of_boundary_flux_only_touches_boundary_cells() {
        let g = grid(5);
        let mut f = g.face_field(2.0);
        // a uniform field cancels inside; boundary faces carry the boundary condition
        let d = g.div(&f);
        for j in 0..5 {
            for i in 0..5 {
                assert!(d.at(i, j).abs() < 1e-12);
            }
        }
        for j in 0..5 {
            f.x[g.x_face(0, j)] = 0.0;
            f.x[g.x_face(5, j)] = 0.0;
        }
        for i in 0..5 {
            f.y[g.y_face(i, 0)] = 0.0;
            f.y[g.y_face(i, 5)] = 0.0;
        }
        let d = g.div(&f);
        for j in 1..4 {
            for i in 1..4 {
                assert!(d.at(i, j).abs() < 1e-12);
            }
        }
        assert!(d.at(0, 2) > 0.0 && d.at(4, 2) < 0.0);
    }

    #[test]
    fn laplacian_equals_five_point_neumann_stencil() {
        let g = GridSpec::new(4, 3, 2.0, 1.5).unwrap();
        let (hx, hy) = (g.hx(), g.hy());
        let m = g.laplacian_matrix();
        for col in 0..g.num_cells() {
            let mut e = g.cell_field(0.0);
            e.values_mut()[col] = 1.0;
            let lap = g.laplacian(&e);
            for row in 0..g.num_cells() {
                let (i, j) = (row % 4, row / 4);
                let (ci, cj) = (col % 4, col / 4);
                let mut expected = 0.0;
                if row == col {
                    let nx_nb = (i > 0) as usize + (i < 3) as usize;
                    let ny_nb = (j > 0) as usize + (j < 2) as usize;
                    expected = -(nx_nb as f64) / (hx * hx) - (ny_nb as f64) / (hy * hy);
                } else if cj == j && (ci as i64 - i as i64).abs() == 1 {
                    expected = 1.0 / (hx * hx);
                } else if ci == i && (cj as i64 - j as i64).abs() == 1 {
                    expected = 1.0 / (hy * hy);
                }
                assert!((lap.values()[row] - expected).abs() < 1e-12);
                assert!((m.get(row, col) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upwind_selects_upstream_cell() {
        let g = grid(4);
        let phi = g.cell_field_from_fn(|x, y| 10.0 * x + y);
        let up = g.upwind(&phi, &g.face_field(1.0));
        let down = g.upwind(&phi, &g.face_field(-1.0));
        let tie = g.upwind(&phi, &g.face_field(0.0));
        for j in 0..4 {
            for i in 1..4 {
                let k = g.x_face(i, j);
                assert_eq!(up.x[k], phi.at(i - 1, j));
                assert_eq!(down.x[k], phi.at(i, j));
                assert_eq!(tie.x[k], 0.5 * (phi.at(i - 1, j) + phi.at(i, j)));
            }
        }
        for j in 1..4 {
            for i in 0..4 {
                let k = g.y_face(i, j);
                assert_eq!(up.y[k], phi.at(i, j - 1));
                assert_eq!(down.y[k], phi.at(i, j));
            }
        }
    }

    #[test]
    fn interpolation_preserves_constants_and_linears() {
        let g = grid(5);
        let c = g.cell_to_face(&g.cell_field(4.0));
        assert!(c.values().all(|&v| v == 4.0));
        let lin = g.cell_to_face(&g.cell_field_from_fn(|x, y| 2.0 * x - y));
        let exact = g.face_field_from_fn(|x, y| 2.0 * x - y, |x, y| 2.0 * x - y);
        for j in 0..5 {
            for i in 1..5 {
                let k = g.x_face(i, j);
                assert!((lin.x[k] - exact.x[k]).abs() < 1e-13);
            }
        }
        let (ux, uy) = g.face_to_cell(&g.face_field(-1.5));
        assert!(ux.values().iter().chain(uy.values()).all(|&v| v == -1.5));
    }

    fn round_trip_error(n: usize) -> f64 {
        let g = grid(n);
        let f = |x: f64, y: f64| (PI * x).cos() * (PI * y).cos();
        let faces = g.face_field_from_fn(f, f);
        let (ux, _) = g.face_to_cell(&faces);
        let back = g.cell_to_face(&ux);
        let mut err: f64 = 0.0;
        for j in 0..n {
            for i in 1..n {
                let k = g.x_face(i, j);
                err = err.max((back.x[k] - faces.x[k]).abs());
            }
        }
        err
    }

    #[test]
    fn interpolation_round_trip_second_order() {
        let order = (round_trip_error(16) / round_trip_error(32)).log2();
        assert!(order > 1.9, "observed order {order}");
    }

    fn random_field(g: &GridSpec<f64>, seed: &[f64]) -> CellField<f64> {
        let vals = (0..g.num_cells())
            .map(|k| seed[k % seed.len()] * (1.0 + k as f64).sqrt())
            .collect();
        g.cell_field_from_vec(vals).unwrap()
    }

    proptest! {
        #[test]
        fn summation_by_parts(a in prop::collection::vec(-10.0f64..10.0, 7), b in prop::collection::vec(-10.0f64..10.0, 5)) {
            let g = GridSpec::new(6, 5, 1.3, 0.7).unwrap();
            let phi = random_field(&g, &a);
            // any face field built from a gradient has zero boundary normals
            let flux = g.grad(&random_field(&g, &b));
            prop_assert!(flux.boundary_normals_zero());
            let lhs = g.cell_inner(&phi, &g.div(&flux));
            let rhs = -g.face_inner(&flux, &g.grad(&phi));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
        }

        #[test]
        fn divergence_conserves_totals(a in prop::collection::vec(-10.0f64..10.0, 9), b in prop::collection::vec(1.0f64..10.0, 4)) {
            let g = GridSpec::new(7, 6, 2.0, 1.0).unwrap();
            let phi = random_field(&g, &b);
            let flux = g.grad(&random_field(&g, &a));
            let d = g.div(&flux);
            let before = g.integrate(&phi);
            let next = g.cell_field_from_vec(
                phi.values().iter().zip(d.values()).map(|(p, q)| p - 0.01 * q).collect()
            ).unwrap();
            let after = g.integrate(&next);
            prop_assert!((after - before).abs() <= 1e-13 * before.abs());
        }
    }
}
