//! Energy ledger, conservation totals, the pressure/chemical-potential gradient
//! identity residual, finite-difference oracles and simple interface morphology
//! measures.

use std::collections::VecDeque;

use crate::error::Result;
use crate::grid::{CellField, FaceField, GridSpec};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;
use crate::stepper::{cell_composition, chemical_potential_field, Model, PotentialMode, SimState};

/// Free and kinetic energy of one state, J (per unit depth of the 2-D domain).
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport<S> {
    pub f_bulk: S,
    pub f_grad: S,
    pub f: S,
    pub kinetic: S,
    pub total: S,
    /// Total moles of each component, mol per unit depth.
    pub moles: Vec<S>,
    pub t: S,
    pub step: usize,
}

/// `1/2 sum_ij c_ij <grad n_i, grad n_j>` over faces, with the same discrete gradient
/// the stepper uses.
pub fn gradient_energy<S: Scalar>(grid: &GridSpec<S>, influence: &DenseMatrix<S>, n: &[CellField<S>]) -> S {
    let grads: Vec<FaceField<S>> = n.iter().map(|f| grid.grad(f)).collect();
    let mut acc = S::zero();
    for (i, gi) in grads.iter().enumerate() {
        for (j, gj) in grads.iter().enumerate() {
            let c = influence[(i, j)];
            if c != S::zero() {
                acc = acc + c * grid.face_inner(gi, gj);
            }
        }
    }
    S::lit(0.5) * acc
}

/// Integrated bulk free energy `sum_cells f_b hx hy`.
pub fn bulk_energy<S: Scalar>(model: &Model<S>, n: &[CellField<S>]) -> Result<S> {
    let grid = model.grid();
    let mut acc = S::zero();
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let comp = cell_composition(n, grid.cell(i, j));
            let f = model.eos().f_bulk(&comp).map_err(|e| e.at_cell(i, j))?;
            acc = acc + f.total();
        }
    }
    Ok(acc * grid.cell_volume())
}

/// Kinetic energy `1/2 sum_faces rho_f u_f^2 w_f` with face densities from
/// arithmetic averaging.
pub fn kinetic_energy<S: Scalar>(model: &Model<S>, n: &[CellField<S>], u: &FaceField<S>) -> S {
    let rho = model.grid().cell_to_face(&model.mass_density_field(n));
    S::lit(0.5) * model.grid().face_weighted_sum(&rho, u, |r, v| r * v * v)
}

pub fn compute_energy<S: Scalar>(model: &Model<S>, state: &SimState<S>) -> Result<EnergyReport<S>> {
    let grid = model.grid();
    let f_bulk = bulk_energy(model, &state.n)?;
    let f_grad = gradient_energy(grid, model.influence(), &state.n);
    let kinetic = kinetic_energy(model, &state.n, &state.u);
    let f = f_bulk + f_grad;
    Ok(EnergyReport {
        f_bulk,
        f_grad,
        f,
        kinetic,
        total: f + kinetic,
        moles: state.n.iter().map(|c| grid.integrate(c)).collect(),
        t: state.t,
        step: state.step,
    })
}

/// Pressure including the gradient-energy contribution,
/// `p = p_b - sum_ij n_i c_ij lap n_j - 1/2 sum_ij c_ij grad n_i . grad n_j`,
/// with cell-centered gradients.
pub fn pressure_field<S: Scalar>(model: &Model<S>, n: &[CellField<S>]) -> Result<CellField<S>> {
    let grid = model.grid();
    let c = model.influence();
    let m = n.len();
    let grad_n: Vec<(CellField<S>, CellField<S>)> = n.iter().map(|f| grid.cell_gradient(f)).collect();
    let lap: Vec<CellField<S>> = n.iter().map(|f| grid.laplacian(f)).collect();
    let mut out = grid.cell_field(S::zero());
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let k = grid.cell(i, j);
            let comp = cell_composition(n, k);
            let mut p = model.eos().pressure(&comp).map_err(|e| e.at_cell(i, j))?;
            for a in 0..m {
                for b in 0..m {
                    let cab = c[(a, b)];
                    let (ax, ay) = (grad_n[a].0.values()[k], grad_n[a].1.values()[k]);
                    let (bx, by) = (grad_n[b].0.values()[k], grad_n[b].1.values()[k]);
                    p = p - comp[a] * cab * lap[b].values()[k] - S::lit(0.5) * cab * (ax * bx + ay * by);
                }
            }
            out.values_mut()[k] = p;
        }
    }
    Ok(out)
}

/// Discrete L2 norm, over cells at least two cells away from the boundary, of
/// `sum_i n_i grad mu_i - grad p - div(sum_ij c_ij grad n_i (x) grad n_j)`, where
/// `p = p_b - sum_ij n_i c_ij lap n_j - 1/2 sum_ij c_ij grad n_i . grad n_j`.
///
/// The two sides agree exactly in the continuum; on the grid the residual is a
/// truncation error.
pub fn pressure_identity_residual<S: Scalar>(model: &Model<S>, n: &[CellField<S>]) -> Result<S> {
    let grid = model.grid();
    let c = model.influence();
    let m = n.len();
    let mu = chemical_potential_field(model, n, PotentialMode::Full)?;
    let grad_n: Vec<(CellField<S>, CellField<S>)> = n.iter().map(|f| grid.cell_gradient(f)).collect();
    let grad_mu: Vec<(CellField<S>, CellField<S>)> = mu.iter().map(|f| grid.cell_gradient(f)).collect();

    let cells = grid.num_cells();
    let mut txx = vec![S::zero(); cells];
    let mut txy = vec![S::zero(); cells];
    let mut tyy = vec![S::zero(); cells];
    for k in 0..cells {
        for a in 0..m {
            for b in 0..m {
                let cab = c[(a, b)];
                let (ax, ay) = (grad_n[a].0.values()[k], grad_n[a].1.values()[k]);
                let (bx, by) = (grad_n[b].0.values()[k], grad_n[b].1.values()[k]);
                txx[k] = txx[k] + cab * ax * bx;
                txy[k] = txy[k] + cab * ax * by;
                tyy[k] = tyy[k] + cab * ay * by;
            }
        }
    }
    let pressure = pressure_field(model, n)?;
    let field = |v: Vec<S>| grid.cell_field_from_vec(v).expect("sized to grid");
    let (px, py) = grid.cell_gradient(&pressure);
    let (txx_x, _) = grid.cell_gradient(&field(txx));
    let (txy_x, txy_y) = grid.cell_gradient(&field(txy));
    let (_, tyy_y) = grid.cell_gradient(&field(tyy));

    let margin = 2;
    let mut acc = S::zero();
    for j in margin..grid.ny().saturating_sub(margin) {
        for i in margin..grid.nx().saturating_sub(margin) {
            let k = grid.cell(i, j);
            let mut rx = -(px.values()[k] + txx_x.values()[k] + txy_y.values()[k]);
            let mut ry = -(py.values()[k] + txy_x.values()[k] + tyy_y.values()[k]);
            for a in 0..m {
                let na = n[a].values()[k];
                rx = rx + na * grad_mu[a].0.values()[k];
                ry = ry + na * grad_mu[a].1.values()[k];
            }
            acc = acc + rx * rx + ry * ry;
        }
    }
    Ok((acc * grid.cell_volume()).sqrt())
}

/// Central-difference gradient of `f` at `x`, with step `rel_eps * |x_i|` per
/// coordinate (`rel_eps` when `x_i == 0`).
pub fn fd_gradient<S: Scalar>(f: impl Fn(&[S]) -> S, x: &[S], rel_eps: S) -> Vec<S> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step_size(x[i], rel_eps);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (h + h)
        })
        .collect()
}

/// Central-difference Jacobian, entry `(i, j) = d g_i / d x_j`.
pub fn fd_jacobian<S: Scalar>(g: impl Fn(&[S]) -> Vec<S>, x: &[S], rel_eps: S) -> DenseMatrix<S> {
    let m = x.len();
    let mut out = DenseMatrix::zeros(m);
    let mut probe = x.to_vec();
    for j in 0..m {
        let h = step_size(x[j], rel_eps);
        probe[j] = x[j] + h;
        let up = g(&probe);
        probe[j] = x[j] - h;
        let down = g(&probe);
        probe[j] = x[j];
        for i in 0..m {
            out[(i, j)] = (up[i] - down[i]) / (h + h);
        }
    }
    out
}

fn step_size<S: Scalar>(x: S, rel_eps: S) -> S {
    if x == S::zero() {
        rel_eps
    } else {
        rel_eps * x.abs()
    }
}

/// Cells whose value lies on the selected side of `threshold`.
pub fn threshold_mask<S: Scalar>(field: &CellField<S>, threshold: S, below: bool) -> Vec<bool> {
    field
        .values()
        .iter()
        .map(|&v| if below { v < threshold } else { v > threshold })
        .collect()
}

/// Number of 4-connected components of a cell mask.
pub fn connected_components<S: Scalar>(grid: &GridSpec<S>, mask: &[bool]) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % grid.nx(), k / grid.nx());
            for q in grid.cell_neighbors(i, j).into_iter().flatten() {
                if mask[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    count
}

/// Length of the `threshold` iso-line of a cell field, traced by marching squares over
/// the lattice of cell centers.
pub fn contour_length<S: Scalar>(grid: &GridSpec<S>, field: &CellField<S>, threshold: S) -> S {
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut total = S::zero();
    let frac = |a: S, b: S| (threshold - a) / (b - a);
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            // corners counter-clockwise from lower-left, in units of (hx, hy)
            let v = [
                field.at(i, j),
                field.at(i + 1, j),
                field.at(i + 1, j + 1),
                field.at(i, j + 1),
            ];
            let above: Vec<bool> = v.iter().map(|&x| x > threshold).collect();
            let corner = |c: usize| -> (S, S) {
                match c {
                    0 => (S::zero(), S::zero()),
                    1 => (S::one(), S::zero()),
                    2 => (S::one(), S::one()),
                    _ => (S::zero(), S::one()),
                }
            };
            let mut points = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if above[a] != above[b] {
                    let t = frac(v[a], v[b]);
                    let (pa, pb) = (corner(a), corner(b));
                    points.push((pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1)));
                }
            }
            let seg = |p: (S, S), q: (S, S)| {
                let (dx, dy) = ((q.0 - p.0) * hx, (q.1 - p.1) * hy);
                (dx * dx + dy * dy).sqrt()
            };
            match points.len() {
                2 => total = total + seg(points[0], points[1]),
                4 => {
                    // saddle: pair crossings according to the cell-center value
                    let center = (v[0] + v[1] + v[2] + v[3]) / S::lit(4.0);
                    let joined = (center > threshold) == above[0];
                    if joined {
                        total = total + seg(points[0], points[3]) + seg(points[1], points[2]);
                    } else {
                        total = total + seg(points[0], points[1]) + seg(points[2], points[3]);
                    }
                }
                _ => {}
            }
        }
    }
    total
}

/// `4 pi A / P^2` of the region on the selected side of `threshold`; 1 for a disc.
///
/// The area counts cells, the perimeter is the interpolated iso-line length.
pub fn isoperimetric_ratio<S: Scalar>(grid: &GridSpec<S>, field: &CellField<S>, threshold: S, below: bool) -> S {
    let cells = threshold_mask(field, threshold, below).iter().filter(|&&b| b).count();
    let area = S::from_usize_lossy(cells) * grid.cell_volume();
    let perimeter = contour_length(grid, field, threshold);
    if perimeter == S::zero() {
        return S::zero();
    }
    S::lit(4.0) * S::PI() * area / (perimeter * perimeter)
}
