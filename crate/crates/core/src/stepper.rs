//! Semi-implicit convex-concave splitting scheme for the coupled molar-density /
//! chemical-potential / velocity system, solved by a mixed Newton-Picard iteration.
//!
//! Per time step `k -> k+1` and iterate `l -> l+1`:
//!
//! ```text
//! (n^{l+1} - n^k)/dt + div(n^{l+1} u^l) + div J^{l+1} = 0,   J = -(D n^k / RT) grad mu
//! mu^{l+1} = mu_convex(n^l) + H_convex(n^l)(n^{l+1} - n^l) + mu_concave(n^k) - c lap n^{l+1}
//! rho^k (u^{l+1} - u^k)/dt + rho^l (u^l . grad) u^{l+1} + (sum M_w J^{l+1}) . grad u^l
//!     = -sum n^l grad mu^{l+1} + eta lap u^{l+1} + (xi + eta/3) grad div u^{l+1}
//! ```
//!
//! The mass and potential unknowns form one banded system, the face velocities a
//! second one; the two are solved one after the other inside each iterate.

use log::debug;

use crate::eos::{mass_density, MixtureSpec, PengRobinson};
use crate::error::{Error, Result};
use crate::grid::{CellField, FaceField, GridSpec};
use crate::linalg::{BandMatrix, DenseMatrix};
use crate::scalar::{diff_norm2, norm2, Scalar, DENSITY_FLOOR};

/// Velocity norm below which relative velocity changes are measured against this
/// floor instead, m/s.
pub const VELOCITY_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<S> {
    /// Time step, s.
    pub dt: S,
    pub n_steps: usize,
    /// Stop iterating once the relative change of `(n, u)` drops below this.
    pub nonlinear_tol: S,
    pub max_nonlinear_iters: usize,
    /// Relative residual required from every linear solve.
    pub linear_tol: S,
    /// Weight of the auxiliary convex term in the splitting.
    pub lambda: S,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        Self {
            dt: S::lit(1e-6),
            n_steps: 1,
            nonlinear_tol: S::lit(1e-3),
            max_nonlinear_iters: 5,
            linear_tol: S::lit(1e-9),
            lambda: S::one(),
        }
    }
}

impl<S: Scalar> SolverConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > S::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter("dt must be > 0".into()));
        }
        let unit = |x: S| x > S::zero() && x < S::one();
        if !unit(self.nonlinear_tol) || !unit(self.linear_tol) {
            return Err(Error::InvalidParameter("tolerances must lie in (0, 1)".into()));
        }
        if self.max_nonlinear_iters < 1 {
            return Err(Error::InvalidParameter("max_nonlinear_iters must be >= 1".into()));
        }
        if !(self.lambda > S::zero()) {
            return Err(Error::InvalidParameter("lambda must be > 0".into()));
        }
        Ok(())
    }
}

/// Fields advanced by the stepper.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState<S> {
    /// Molar density of each component, mol/m^3.
    pub n: Vec<CellField<S>>,
    /// Face-normal velocity, m/s.
    pub u: FaceField<S>,
    pub t: S,
    pub step: usize,
}

impl<S: Scalar> SimState<S> {
    /// Quiescent state with the given densities.
    pub fn at_rest(grid: &GridSpec<S>, n: Vec<CellField<S>>) -> Self {
        Self {
            n,
            u: grid.face_field(S::zero()),
            t: S::zero(),
            step: 0,
        }
    }

    pub fn validate(&self, model: &Model<S>) -> Result<()> {
        let grid = model.grid();
        if self.n.len() != model.num_components() {
            return Err(Error::InvalidParameter(format!(
                "state has {} density fields, mixture has {} components",
                self.n.len(),
                model.num_components()
            )));
        }
        if self.n.iter().any(|f| f.dims() != (grid.nx(), grid.ny())) || self.u.dims() != (grid.nx(), grid.ny()) {
            return Err(Error::InvalidParameter("state does not match grid".into()));
        }
        if !self.u.boundary_normals_zero() {
            return Err(Error::InvalidParameter("boundary normal velocity must be 0".into()));
        }
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let comp = cell_composition(&self.n, grid.cell(i, j));
                model.eos().f_bulk(&comp).map_err(|e| e.at_cell(i, j))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<S> {
    pub iterations: usize,
    /// Relative change of the last iterate.
    pub relative_change: S,
    /// Largest relative residual of the mass/potential solves.
    pub mass_residual: S,
    /// Largest relative residual of the momentum solves.
    pub momentum_residual: S,
    /// Whether a linearization point had to be pulled back into the feasible set.
    pub clamped: bool,
}

/// Everything the scheme needs besides the state: grid, thermodynamics, influence
/// parameters, transport coefficients.
#[derive(Clone, Debug)]
pub struct Model<S> {
    grid: GridSpec<S>,
    eos: PengRobinson<S>,
    influence: DenseMatrix<S>,
    molar_weights: Vec<S>,
    diffusion: Vec<S>,
    shear_viscosity: S,
    bulk_viscosity: S,
}

impl<S: Scalar> Model<S> {
    /// Requires `shear_viscosity > 0` and `bulk_viscosity > 2/3 shear_viscosity`.
    pub fn new(grid: GridSpec<S>, mixture: &MixtureSpec<S>, shear_viscosity: S, bulk_viscosity: S) -> Result<Self> {
        if !(shear_viscosity > S::zero()) {
            return Err(Error::InvalidParameter("shear viscosity must be > 0".into()));
        }
        if !(bulk_viscosity > S::lit(2.0 / 3.0) * shear_viscosity) {
            return Err(Error::InvalidParameter(
                "volumetric viscosity must exceed 2/3 of the shear viscosity".into(),
            ));
        }
        Ok(Self {
            grid,
            eos: PengRobinson::new(mixture)?,
            influence: mixture.influence_matrix()?,
            molar_weights: mixture.molar_weights(),
            diffusion: mixture.diffusion_coefficients(),
            shear_viscosity,
            bulk_viscosity,
        })
    }

    /// Replaces the influence matrix, e.g. to switch gradient energy off in tests.
    pub fn with_influence(mut self, influence: DenseMatrix<S>) -> Self {
        assert_eq!(influence.dim(), self.num_components());
        self.influence = influence;
        self
    }

    pub fn with_diffusion(mut self, diffusion: Vec<S>) -> Self {
        assert_eq!(diffusion.len(), self.num_components());
        self.diffusion = diffusion;
        self
    }

    pub fn grid(&self) -> &GridSpec<S> {
        &self.grid
    }

    pub fn eos(&self) -> &PengRobinson<S> {
        &self.eos
    }

    pub fn influence(&self) -> &DenseMatrix<S> {
        &self.influence
    }

    pub fn molar_weights(&self) -> &[S] {
        &self.molar_weights
    }

    pub fn diffusion(&self) -> &[S] {
        &self.diffusion
    }

    pub fn num_components(&self) -> usize {
        self.molar_weights.len()
    }

    pub fn shear_viscosity(&self) -> S {
        self.shear_viscosity
    }

    pub fn bulk_viscosity(&self) -> S {
        self.bulk_viscosity
    }

    pub fn mass_density_field(&self, n: &[CellField<S>]) -> CellField<S> {
        let mut rho = self.grid.cell_field(S::zero());
        for (k, r) in rho.values_mut().iter_mut().enumerate() {
            *r = mass_density(&self.molar_weights, &cell_composition(n, k));
        }
        rho
    }
}

/// Component densities of one cell.
pub fn cell_composition<S: Scalar>(n: &[CellField<S>], cell: usize) -> Vec<S> {
    n.iter().map(|f| f.values()[cell]).collect()
}

/// How the bulk part of the chemical potential is evaluated.
#[derive(Clone, Copy, Debug)]
pub enum PotentialMode<'a, S> {
    /// `mu_b(n)`
    Full,
    /// `mu_convex(n) + mu_concave(previous)`
    Split { previous: &'a [CellField<S>] },
}

/// `mu_i = mu_b,i - sum_j c_ij lap n_j` on every cell.
pub fn chemical_potential_field<S: Scalar>(
    model: &Model<S>,
    n: &[CellField<S>],
    mode: PotentialMode<'_, S>,
) -> Result<Vec<CellField<S>>> {
    let grid = model.grid();
    let m = n.len();
    let mut mu: Vec<CellField<S>> = (0..m).map(|_| grid.cell_field(S::zero())).collect();
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let k = grid.cell(i, j);
            let comp = cell_composition(n, k);
            let bulk = match mode {
                PotentialMode::Full => model.eos().mu_bulk(&comp),
                PotentialMode::Split { previous } => {
                    let old = cell_composition(previous, k);
                    model.eos().split_mu(&comp).and_then(|(convex, _)| {
                        let (_, concave) = model.eos().split_mu(&old)?;
                        Ok(convex.iter().zip(&concave).map(|(&a, &b)| a + b).collect())
                    })
                }
            }
            .map_err(|e| e.at_cell(i, j))?;
            for (a, v) in bulk.into_iter().enumerate() {
                mu[a].values_mut()[k] = v;
            }
        }
    }
    let lap: Vec<CellField<S>> = n.iter().map(|f| grid.laplacian(f)).collect();
    let c = model.influence();
    for (a, field) in mu.iter_mut().enumerate() {
        for (b, lb) in lap.iter().enumerate() {
            let cab = c[(a, b)];
            if cab == S::zero() {
                continue;
            }
            for (v, &l) in field.values_mut().iter_mut().zip(lb.values()) {
                *v = *v - cab * l;
            }
        }
    }
    Ok(mu)
}

/// Face mobilities `D_i max(avg n_i, floor) / RT` from the densities at time level k.
fn face_mobility<S: Scalar>(model: &Model<S>, n_k: &CellField<S>, component: usize) -> FaceField<S> {
    let floor = S::lit(DENSITY_FLOOR);
    let scale = model.diffusion()[component] / model.eos().rt();
    let mut mob = model.grid().cell_to_face(n_k);
    for v in mob.x.iter_mut().chain(mob.y.iter_mut()) {
        *v = v.max(floor) * scale;
    }
    mob
}

/// Diagonal-mobility diffusion fluxes `J_i = -(D_i n_i^k / RT) grad mu_i`.
pub fn diffusion_flux<S: Scalar>(model: &Model<S>, n_k: &[CellField<S>], mu: &[CellField<S>]) -> Vec<FaceField<S>> {
    n_k.iter()
        .zip(mu)
        .enumerate()
        .map(|(a, (n, m))| {
            let mob = face_mobility(model, n, a);
            let grad = model.grid().grad(m);
            mob.zip_with(&grad, |k, g| -k * g)
        })
        .collect()
}

/// A banded linear system.
#[derive(Clone, Debug)]
pub struct LinearSystem<S> {
    pub matrix: BandMatrix<S>,
    pub rhs: Vec<S>,
}

/// Unknown ordering of the mass/potential system: per cell `(n_1..n_M, mu_1..mu_M)`,
/// cells lexicographic.
#[derive(Clone, Copy, Debug)]
pub struct MassLayout {
    pub components: usize,
}

impl MassLayout {
    #[inline]
    pub fn density(&self, cell: usize, component: usize) -> usize {
        cell * 2 * self.components + component
    }

    #[inline]
    pub fn potential(&self, cell: usize, component: usize) -> usize {
        cell * 2 * self.components + self.components + component
    }
}

/// Assembled mass/potential system plus whether a linearization point was clamped.
///
/// The potential unknowns are offset by `potential_shift`, one constant per component,
/// which keeps them of the size of their spatial variation; add the shift back to get
/// `mu`.
#[derive(Clone, Debug)]
pub struct MassSystem<S> {
    pub system: LinearSystem<S>,
    pub layout: MassLayout,
    pub potential_shift: Vec<S>,
    pub clamped: bool,
}

/// Assembles the Newton-linearized mass balance and chemical-potential equations in
/// the unknowns `(n^{k+1,l+1}, mu^{k+1,l+1})`.
pub fn assemble_mass_system<S: Scalar>(
    model: &Model<S>,
    dt: S,
    n_k: &[CellField<S>],
    u_l: &FaceField<S>,
    n_l: &[CellField<S>],
) -> Result<MassSystem<S>> {
    let grid = model.grid();
    let eos = model.eos();
    let m = model.num_components();
    let layout = MassLayout { components: m };
    let size = grid.num_cells() * 2 * m;
    let band = 2 * m * grid.nx() + 2 * m - 1;
    let mut a = BandMatrix::zeros(size, band, band);
    let mut rhs = vec![S::zero(); size];
    let (hx, hy) = (grid.hx(), grid.hy());
    let floor = S::lit(DENSITY_FLOOR);
    let c = model.influence();
    let mut clamped = false;
    let mut shift = vec![S::zero(); m];

    // pointwise rows: identity in n, linearized potential
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let p = grid.cell(i, j);
            let mut lin = cell_composition(n_l, p);
            clamped |= eos.clamp_feasible(&mut lin, floor);
            let mut old = cell_composition(n_k, p);
            clamped |= eos.clamp_feasible(&mut old, floor);
            let (mu_convex, _) = eos.split_mu(&lin).map_err(|e| e.at_cell(i, j))?;
            let (_, mu_concave) = eos.split_mu(&old).map_err(|e| e.at_cell(i, j))?;
            let hess = eos.hessian_convex(&lin).map_err(|e| e.at_cell(i, j))?;
            let h_lin = hess.mul_vec(&lin);
            for comp in 0..m {
                let rn = layout.density(p, comp);
                a.add(rn, rn, S::one());
                rhs[rn] = n_k[comp].values()[p];

                let rm = layout.potential(p, comp);
                a.add(rm, rm, S::one());
                for b in 0..m {
                    a.add(rm, layout.density(p, b), -hess[(comp, b)]);
                }
                rhs[rm] = mu_convex[comp] - h_lin[comp] + mu_concave[comp];
                shift[comp] = shift[comp] + mu_convex[comp] + mu_concave[comp];
            }
        }
    }
    let cells = S::from_usize_lossy(grid.num_cells());
    for v in shift.iter_mut() {
        *v = *v / cells;
    }
    for p in 0..grid.num_cells() {
        for comp in 0..m {
            let rm = layout.potential(p, comp);
            rhs[rm] = rhs[rm] - shift[comp];
        }
    }

    let mobility: Vec<FaceField<S>> = (0..m).map(|comp| face_mobility(model, &n_k[comp], comp)).collect();

    // face couplings: advection, diffusion, gradient-energy Laplacian
    let mut couple = |left: usize, right: usize, face_u: S, mob: &dyn Fn(usize) -> S, h: S| {
        for comp in 0..m {
            let (rl, rr) = (layout.density(left, comp), layout.density(right, comp));
            if face_u != S::zero() {
                let up = if face_u > S::zero() { left } else { right };
                let coef = dt * face_u / h;
                a.add(rl, layout.density(up, comp), coef);
                a.add(rr, layout.density(up, comp), -coef);
            }
            let d = dt * mob(comp) / (h * h);
            if d != S::zero() {
                let (ml, mr) = (layout.potential(left, comp), layout.potential(right, comp));
                a.add(rl, ml, d);
                a.add(rl, mr, -d);
                a.add(rr, mr, d);
                a.add(rr, ml, -d);
            }
            let (pl, pr) = (layout.potential(left, comp), layout.potential(right, comp));
            for b in 0..m {
                let g = c[(comp, b)] / (h * h);
                if g == S::zero() {
                    continue;
                }
                let (nl, nr) = (layout.density(left, b), layout.density(right, b));
                a.add(pl, nr, g);
                a.add(pl, nl, -g);
                a.add(pr, nl, g);
                a.add(pr, nr, -g);
            }
        }
    };
    for j in 0..grid.ny() {
        for i in 1..grid.nx() {
            let f = grid.x_face(i, j);
            couple(
                grid.cell(i - 1, j),
                grid.cell(i, j),
                u_l.x[f],
                &|comp| mobility[comp].x[f],
                hx,
            );
        }
    }
    for j in 1..grid.ny() {
        for i in 0..grid.nx() {
            let f = grid.y_face(i, j);
            couple(
                grid.cell(i, j - 1),
                grid.cell(i, j),
                u_l.y[f],
                &|comp| mobility[comp].y[f],
                hy,
            );
        }
    }

    Ok(MassSystem {
        system: LinearSystem { matrix: a, rhs },
        layout,
        potential_shift: shift,
        clamped,
    })
}

/// Unknown ordering of the momentum system: row blocks `j = 0..=ny`, each holding the
/// x-faces of cell row `j` (when `j < ny`) followed by the y-faces at height `j`.
#[derive(Clone, Copy, Debug)]
pub struct MomentumLayout {
    pub nx: usize,
    pub ny: usize,
}

impl MomentumLayout {
    #[inline]
    pub fn u(&self, i: usize, j: usize) -> usize {
        j * (2 * self.nx + 1) + i
    }

    #[inline]
    pub fn v(&self, i: usize, j: usize) -> usize {
        if j < self.ny {
            j * (2 * self.nx + 1) + self.nx + 1 + i
        } else {
            self.ny * (2 * self.nx + 1) + i
        }
    }

    pub fn size(&self) -> usize {
        (self.nx + 1) * self.ny + self.nx * (self.ny + 1)
    }

    pub fn bandwidth(&self) -> usize {
        3 * self.nx + 2
    }

    pub fn scatter<S: Scalar>(&self, x: &[S], out: &mut FaceField<S>) {
        for j in 0..self.ny {
            for i in 0..=self.nx {
                out.x[j * (self.nx + 1) + i] = x[self.u(i, j)];
            }
        }
        for j in 0..=self.ny {
            for i in 0..self.nx {
                out.y[j * self.nx + i] = x[self.v(i, j)];
            }
        }
    }
}

/// Accumulates one momentum row.
struct Row<'a, S> {
    a: &'a mut BandMatrix<S>,
    row: usize,
}

impl<S: Scalar> Row<'_, S> {
    #[inline]
    fn add(&mut self, col: usize, v: S) {
        if v != S::zero() {
            self.a.add(self.row, col, v);
        }
    }
}

/// Assembles the linearized momentum equation in the face velocities `u^{k+1,l+1}`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_momentum_system<S: Scalar>(
    model: &Model<S>,
    dt: S,
    n_k: &[CellField<S>],
    n_l: &[CellField<S>],
    mu_new: &[CellField<S>],
    j_new: &[FaceField<S>],
    u_k: &FaceField<S>,
    u_l: &FaceField<S>,
) -> LinearSystem<S> {
    let grid = model.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let layout = MomentumLayout { nx, ny };
    let bw = layout.bandwidth();
    let mut a = BandMatrix::zeros(layout.size(), bw, bw);
    let mut rhs = vec![S::zero(); layout.size()];
    let eta = model.shear_viscosity();
    let kappa = model.bulk_viscosity() + eta / S::lit(3.0);
    let two = S::lit(2.0);
    let quarter = S::lit(0.25);

    let rho_k = grid.cell_to_face(&model.mass_density_field(n_k));
    let rho_l = grid.cell_to_face(&model.mass_density_field(n_l));

    // driving force -sum_i n_i grad mu_i with face-averaged densities
    let mut force = grid.face_field(S::zero());
    for (n, mu) in n_l.iter().zip(mu_new) {
        let nf = grid.cell_to_face(n);
        let g = grid.grad(mu);
        force = force.zip_with(&nf.zip_with(&g, |a, b| a * b), |f, t| f - t);
    }

    // mass flux carried by diffusion, sum_i M_w,i J_i
    let mut jm = grid.face_field(S::zero());
    for (w, jf) in model.molar_weights().iter().zip(j_new) {
        jm = jm.zip_with(jf, |acc, v| acc + *w * v);
    }

    let ux = |i: usize, j: usize| u_l.x[grid.x_face(i, j)];
    let vy = |i: usize, j: usize| u_l.y[grid.y_face(i, j)];

    // boundary faces carry u = 0; the rows are scaled like the interior diagonal so
    // that round-off on them stays visible in the residual
    let wall = two * (eta + kappa) * (S::one() / (hx * hx) + S::one() / (hy * hy));
    for j in 0..ny {
        for i in [0, nx] {
            a.add(layout.u(i, j), layout.u(i, j), wall);
        }
    }
    for i in 0..nx {
        for j in [0, ny] {
            a.add(layout.v(i, j), layout.v(i, j), wall);
        }
    }

    // x-momentum on interior x-faces
    for j in 0..ny {
        for i in 1..nx {
            let f = grid.x_face(i, j);
            let me = layout.u(i, j);
            let mut r = Row { a: &mut a, row: me };
            let rho_t = rho_k.x[f] / dt;
            r.add(me, rho_t);
            rhs[me] = rho_t * u_k.x[f] + force.x[f];

            // convection by u^l, upwinded
            let adv_x = ux(i, j);
            let adv_y = quarter * (vy(i - 1, j) + vy(i, j) + vy(i - 1, j + 1) + vy(i, j + 1));
            let cx = rho_l.x[f] * adv_x / hx;
            if adv_x > S::zero() {
                r.add(me, cx);
                r.add(layout.u(i - 1, j), -cx);
            } else if adv_x < S::zero() {
                r.add(layout.u(i + 1, j), cx);
                r.add(me, -cx);
            }
            let cy = rho_l.x[f] * adv_y / hy;
            if adv_y > S::zero() {
                r.add(me, cy);
                if j > 0 {
                    r.add(layout.u(i, j - 1), -cy);
                } else {
                    r.add(me, cy);
                }
            } else if adv_y < S::zero() {
                r.add(me, -cy);
                if j + 1 < ny {
                    r.add(layout.u(i, j + 1), cy);
                } else {
                    r.add(me, -cy);
                }
            }

            // shear: -eta lap u, no-slip ghosts on horizontal walls
            let (ex, ey) = (eta / (hx * hx), eta / (hy * hy));
            r.add(me, two * ex);
            r.add(layout.u(i - 1, j), -ex);
            r.add(layout.u(i + 1, j), -ex);
            for nb in [j.checked_sub(1), (j + 1 < ny).then_some(j + 1)] {
                match nb {
                    Some(jj) => {
                        r.add(me, ey);
                        r.add(layout.u(i, jj), -ey);
                    }
                    None => r.add(me, two * ey),
                }
            }

            // -kappa d/dx div u
            let kx = kappa / hx;
            for (cell_i, sign) in [(i, S::one()), (i - 1, -S::one())] {
                let s = -kx * sign;
                r.add(layout.u(cell_i + 1, j), s / hx);
                r.add(layout.u(cell_i, j), -s / hx);
                r.add(layout.v(cell_i, j + 1), s / hy);
                r.add(layout.v(cell_i, j), -s / hy);
            }

            // diffusive mass flux against grad u^l
            let jm_y = quarter
                * (jm.y[grid.y_face(i - 1, j)]
                    + jm.y[grid.y_face(i, j)]
                    + jm.y[grid.y_face(i - 1, j + 1)]
                    + jm.y[grid.y_face(i, j + 1)]);
            let dudx = (ux(i + 1, j) - ux(i - 1, j)) / (two * hx);
            let below = if j > 0 { ux(i, j - 1) } else { -ux(i, j) };
            let above = if j + 1 < ny { ux(i, j + 1) } else { -ux(i, j) };
            let dudy = (above - below) / (two * hy);
            rhs[me] = rhs[me] - (jm.x[f] * dudx + jm_y * dudy);
        }
    }

    // y-momentum on interior y-faces
    for j in 1..ny {
        for i in 0..nx {
            let f = grid.y_face(i, j);
            let me = layout.v(i, j);
            let mut r = Row { a: &mut a, row: me };
            let rho_t = rho_k.y[f] / dt;
            r.add(me, rho_t);
            rhs[me] = rho_t * u_k.y[f] + force.y[f];

            let adv_y = vy(i, j);
            let adv_x = quarter * (ux(i, j - 1) + ux(i + 1, j - 1) + ux(i, j) + ux(i + 1, j));
            let cy = rho_l.y[f] * adv_y / hy;
            if adv_y > S::zero() {
                r.add(me, cy);
                r.add(layout.v(i, j - 1), -cy);
            } else if adv_y < S::zero() {
                r.add(layout.v(i, j + 1), cy);
                r.add(me, -cy);
            }
            let cx = rho_l.y[f] * adv_x / hx;
            if adv_x > S::zero() {
                r.add(me, cx);
                if i > 0 {
                    r.add(layout.v(i - 1, j), -cx);
                } else {
                    r.add(me, cx);
                }
            } else if adv_x < S::zero() {
                r.add(me, -cx);
                if i + 1 < nx {
                    r.add(layout.v(i + 1, j), cx);
                } else {
                    r.add(me, -cx);
                }
            }

            let (ex, ey) = (eta / (hx * hx), eta / (hy * hy));
            r.add(me, two * ey);
            r.add(layout.v(i, j - 1), -ey);
            r.add(layout.v(i, j + 1), -ey);
            for nb in [i.checked_sub(1), (i + 1 < nx).then_some(i + 1)] {
                match nb {
                    Some(ii) => {
                        r.add(me, ex);
                        r.add(layout.v(ii, j), -ex);
                    }
                    None => r.add(me, two * ex),
                }
            }

            let ky = kappa / hy;
            for (cell_j, sign) in [(j, S::one()), (j - 1, -S::one())] {
                let s = -ky * sign;
                r.add(layout.u(i + 1, cell_j), s / hx);
                r.add(layout.u(i, cell_j), -s / hx);
                r.add(layout.v(i, cell_j + 1), s / hy);
                r.add(layout.v(i, cell_j), -s / hy);
            }

            let jm_x = quarter
                * (jm.x[grid.x_face(i, j - 1)]
                    + jm.x[grid.x_face(i + 1, j - 1)]
                    + jm.x[grid.x_face(i, j)]
                    + jm.x[grid.x_face(i + 1, j)]);
            let dvdy = (vy(i, j + 1) - vy(i, j - 1)) / (two * hy);
            let left = if i > 0 { vy(i - 1, j) } else { -vy(i, j) };
            let right = if i + 1 < nx { vy(i + 1, j) } else { -vy(i, j) };
            let dvdx = (right - left) / (two * hx);
            rhs[me] = rhs[me] - (jm_x * dvdx + jm.y[f] * dvdy);
        }
    }

    LinearSystem { matrix: a, rhs }
}

fn stacked_norm<S: Scalar>(fields: &[CellField<S>]) -> S {
    fields
        .iter()
        .fold(S::zero(), |acc, f| {
            let v = norm2(f.values());
            acc + v * v
        })
        .sqrt()
}

fn stacked_diff<S: Scalar>(a: &[CellField<S>], b: &[CellField<S>]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| {
            let v = diff_norm2(x.values(), y.values());
            acc + v * v
        })
        .sqrt()
}

fn face_norm<S: Scalar>(u: &FaceField<S>) -> S {
    u.values().fold(S::zero(), |a, &v| a + v * v).sqrt()
}

fn face_diff<S: Scalar>(u: &FaceField<S>, w: &FaceField<S>) -> S {
    u.values()
        .zip(w.values())
        .fold(S::zero(), |a, (&x, &y)| a + (x - y) * (x - y))
        .sqrt()
}

/// Advances `state` by one time step.
///
/// Iterates from `n^{k+1,0} = n^k`, `u^{k+1,0} = u^k` until the relative change of both
/// the densities and the velocity falls below `nonlinear_tol`, or
/// `max_nonlinear_iters` iterates have been taken.
pub fn step<S: Scalar>(
    model: &Model<S>,
    state: &SimState<S>,
    cfg: &SolverConfig<S>,
) -> Result<(SimState<S>, StepReport<S>)> {
    cfg.validate()?;
    let grid = model.grid();
    let m = model.num_components();
    let n_k = &state.n;
    let u_k = &state.u;
    let mut n_l = n_k.clone();
    let mut u_l = u_k.clone();
    let mut report = StepReport {
        iterations: 0,
        relative_change: S::infinity(),
        mass_residual: S::zero(),
        momentum_residual: S::zero(),
        clamped: false,
    };
    let velocity_floor = S::lit(VELOCITY_FLOOR);

    for _ in 0..cfg.max_nonlinear_iters {
        let mass = assemble_mass_system(model, cfg.dt, n_k, &u_l, &n_l)?;
        report.clamped |= mass.clamped;
        let (x, res) = mass.system.matrix.solve(&mass.system.rhs, cfg.linear_tol)?;
        report.mass_residual = report.mass_residual.max(res);

        let mut n_new: Vec<CellField<S>> = (0..m).map(|_| grid.cell_field(S::zero())).collect();
        let mut mu_new = n_new.clone();
        for cell in 0..grid.num_cells() {
            for comp in 0..m {
                n_new[comp].values_mut()[cell] = x[mass.layout.density(cell, comp)];
                mu_new[comp].values_mut()[cell] = x[mass.layout.potential(cell, comp)] + mass.potential_shift[comp];
            }
        }

        let j_new = diffusion_flux(model, n_k, &mu_new);
        let mom = assemble_momentum_system(model, cfg.dt, n_k, &n_l, &mu_new, &j_new, u_k, &u_l);
        let (y, res) = mom.matrix.solve(&mom.rhs, cfg.linear_tol)?;
        report.momentum_residual = report.momentum_residual.max(res);
        let mut u_new = grid.face_field(S::zero());
        MomentumLayout {
            nx: grid.nx(),
            ny: grid.ny(),
        }
        .scatter(&y, &mut u_new);

        let dn = stacked_diff(&n_new, &n_l) / stacked_norm(&n_new).max(S::min_positive_value());
        let du = face_diff(&u_new, &u_l) / face_norm(&u_new).max(velocity_floor);
        report.relative_change = dn.max(du);
        report.iterations += 1;
        n_l = n_new;
        u_l = u_new;
        debug!(
            "step {} iterate {}: dn = {:e}, du = {:e}",
            state.step + 1,
            report.iterations,
            dn.to_f64_lossy(),
            du.to_f64_lossy()
        );
        if report.relative_change < cfg.nonlinear_tol {
            break;
        }
    }

    Ok((
        SimState {
            n: n_l,
            u: u_l,
            t: state.t + cfg.dt,
            step: state.step + 1,
        },
        report,
    ))
}

#[cfg(test)]
mod tests;
