use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diagnostics::compute_energy;
use crate::eos::{ComponentDatabase, ComponentSpec};
use crate::scenario::BUILTIN_COMPONENTS;

fn components(names: &[&str]) -> Vec<ComponentSpec<f64>> {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    ComponentDatabase::from_toml_str(BUILTIN_COMPONENTS)
        .unwrap()
        .select(&names)
        .unwrap()
}

fn binary(temperature: f64) -> MixtureSpec<f64> {
    MixtureSpec::new(
        components(&["CH4", "nC10"]),
        DenseMatrix::zeros(2),
        DenseMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap(),
        1.0,
        temperature,
    )
    .unwrap()
}

fn methane(temperature: f64) -> MixtureSpec<f64> {
    MixtureSpec::new(
        components(&["CH4"]),
        DenseMatrix::zeros(1),
        DenseMatrix::zeros(1),
        1.0,
        temperature,
    )
    .unwrap()
}

fn model(nx: usize, mix: &MixtureSpec<f64>) -> Model<f64> {
    let grid = GridSpec::new(nx, nx, 20e-9, 20e-9).unwrap();
    Model::new(grid, mix, 0.01, 0.01).unwrap()
}

fn uniform(m: &Model<f64>, n: &[f64]) -> Vec<CellField<f64>> {
    n.iter().map(|&v| m.grid().cell_field(v)).collect()
}

/// Smoothed square droplet of the first example on a coarse grid.
fn droplet(m: &Model<f64>) -> Vec<CellField<f64>> {
    let (gas, liquid) = ([7133.9, 26.5], [3513.2, 3814.6]);
    let w = 2.0 * m.grid().hx();
    let phi = m.grid().cell_field_from_fn(|x, y| {
        let d = (x - 10e-9).abs().max((y - 10e-9).abs()) - 5e-9;
        0.5 * (1.0 - (d / w).tanh())
    });
    (0..2)
        .map(|c| phi.map(|p| p * liquid[c] + (1.0 - p) * gas[c]))
        .collect()
}

fn solver(dt: f64) -> SolverConfig<f64> {
    SolverConfig {
        dt,
        ..SolverConfig::default()
    }
}

fn max_rel_diff(a: &[CellField<f64>], b: &[CellField<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| ((p - q) / q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn solver_config_validation() {
    assert!(solver(1e-6).validate().is_ok());
    assert!(solver(0.0).validate().is_err());
    assert!(SolverConfig {
        nonlinear_tol: 1.0,
        ..solver(1e-6)
    }
    .validate()
    .is_err());
    assert!(SolverConfig {
        linear_tol: 0.0,
        ..solver(1e-6)
    }
    .validate()
    .is_err());
    assert!(SolverConfig {
        max_nonlinear_iters: 0,
        ..solver(1e-6)
    }
    .validate()
    .is_err());
    assert!(SolverConfig {
        lambda: 0.0,
        ..solver(1e-6)
    }
    .validate()
    .is_err());
}

#[test]
fn model_viscosity_bounds() {
    let grid = GridSpec::new(4, 4, 1e-8, 1e-8).unwrap();
    let mix = binary(320.0);
    assert!(Model::new(grid, &mix, 0.0, 0.01).is_err());
    assert!(Model::new(grid, &mix, 0.03, 0.019).is_err());
    assert!(Model::new(grid, &mix, 0.03, 0.021).is_ok());
}

#[test]
fn uniform_potential_equals_bulk() {
    let m = model(6, &binary(320.0));
    let n = uniform(&m, &[7133.9, 26.5]);
    let mu = chemical_potential_field(&m, &n, PotentialMode::Full).unwrap();
    let bulk = m.eos().mu_bulk(&[7133.9, 26.5]).unwrap();
    for (f, b) in mu.iter().zip(&bulk) {
        assert!(f.values().iter().all(|&v| v == *b));
    }
}

#[test]
fn zero_influence_gives_bulk_potential() {
    let m = model(8, &binary(320.0)).with_influence(DenseMatrix::zeros(2));
    let n = droplet(&m);
    let mu = chemical_potential_field(&m, &n, PotentialMode::Full).unwrap();
    for k in 0..m.grid().num_cells() {
        let bulk = m.eos().mu_bulk(&cell_composition(&n, k)).unwrap();
        for c in 0..2 {
            assert_eq!(mu[c].values()[k], bulk[c]);
        }
    }
}

#[test]
fn split_potential_at_equal_levels_is_full_potential() {
    let m = model(8, &binary(320.0));
    let n = droplet(&m);
    let full = chemical_potential_field(&m, &n, PotentialMode::Full).unwrap();
    let split = chemical_potential_field(&m, &n, PotentialMode::Split { previous: &n }).unwrap();
    for (a, b) in full.iter().zip(&split) {
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-10, epsilon = 1e-6);
        }
    }
}

#[test]
fn gradient_term_converges_at_second_order() {
    // n_j = n0_j + A_j cos(pi x / L) cos(pi y / L) satisfies the Neumann closure
    let mix = binary(320.0);
    let amp = [300.0, 200.0];
    let base = [5000.0, 1500.0];
    let mut errors = Vec::new();
    for nx in [10, 20, 40] {
        let m = model(nx, &mix);
        let l = 20e-9;
        let k = std::f64::consts::PI / l;
        let n: Vec<CellField<f64>> = (0..2)
            .map(|c| {
                m.grid()
                    .cell_field_from_fn(|x, y| base[c] + amp[c] * (k * x).cos() * (k * y).cos())
            })
            .collect();
        let mu = chemical_potential_field(&m, &n, PotentialMode::Full).unwrap();
        let c = m.influence();
        let mut err: f64 = 0.0;
        for j in 0..nx {
            for i in 0..nx {
                let cell = m.grid().cell(i, j);
                let (x, y) = m.grid().cell_center(i, j);
                let bulk = m.eos().mu_bulk(&cell_composition(&n, cell)).unwrap();
                let shape = (k * x).cos() * (k * y).cos();
                for a in 0..2 {
                    let exact: f64 = (0..2).map(|b| c[(a, b)] * 2.0 * k * k * amp[b] * shape).sum();
                    err = err.max((mu[a].values()[cell] - bulk[a] - exact).abs());
                }
            }
        }
        errors.push(err);
    }
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.8, "{errors:?}");
    }
}

#[test]
fn diffusion_flux_cases() {
    let m = model(6, &binary(320.0));
    let n = uniform(&m, &[7133.9, 26.5]);
    let flat = uniform(&m, &[1.0e4, -2.0e4]);
    for f in diffusion_flux(&m, &n, &flat) {
        assert_eq!(f.max_abs(), 0.0);
    }

    let still = m.clone().with_diffusion(vec![0.0, 0.0]);
    let slope = 1e12;
    let linear: Vec<CellField<f64>> = (0..2).map(|_| m.grid().cell_field_from_fn(|x, _| slope * x)).collect();
    for f in diffusion_flux(&still, &n, &linear) {
        assert_eq!(f.max_abs(), 0.0);
    }

    let flux = diffusion_flux(&m, &n, &linear);
    let g = m.grid();
    for (c, f) in flux.iter().enumerate() {
        let expect = -m.diffusion()[c] * [7133.9, 26.5][c] / m.eos().rt() * slope;
        for j in 0..g.ny() {
            for i in 0..=g.nx() {
                let v = f.x[g.x_face(i, j)];
                if i == 0 || i == g.nx() {
                    assert_eq!(v, 0.0);
                } else {
                    assert_relative_eq!(v, expect, max_relative = 1e-12);
                }
            }
        }
        assert!(f.y.iter().all(|&v| v.abs() <= 1e-12 * expect.abs()));
    }
}

#[test]
fn single_component_without_transport_is_identity() {
    let mix = methane(150.0);
    let m = model(5, &mix)
        .with_influence(DenseMatrix::zeros(1))
        .with_diffusion(vec![0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = vec![m.grid().cell_field_from_fn(|_, _| rng.gen_range(2000.0..20000.0))];
    let u = m.grid().face_field(0.0);
    let sys = assemble_mass_system(&m, 1e-6, &n, &u, &n).unwrap();
    let (x, _) = sys.system.matrix.solve(&sys.system.rhs, 1e-12).unwrap();
    for cell in 0..m.grid().num_cells() {
        assert_eq!(x[sys.layout.density(cell, 0)], n[0].values()[cell]);
    }
}

#[test]
fn mass_rows_telescope() {
    // summed over the density rows, every density column adds up to 1 and every
    // potential column to 0, whatever the velocity and mobility
    let m = model(5, &binary(320.0));
    let n = droplet(&m);
    let mut rx = ChaCha8Rng::seed_from_u64(11);
    let mut ry = ChaCha8Rng::seed_from_u64(12);
    let g = m.grid();
    let u = g.face_field_from_fn(|_, _| rx.gen_range(-1.0..1.0), |_, _| ry.gen_range(-1.0..1.0));
    let u = {
        let mut u = u;
        for j in 0..g.ny() {
            u.x[g.x_face(0, j)] = 0.0;
            u.x[g.x_face(g.nx(), j)] = 0.0;
        }
        for i in 0..g.nx() {
            u.y[g.y_face(i, 0)] = 0.0;
            u.y[g.y_face(i, g.ny())] = 0.0;
        }
        u
    };
    let sys = assemble_mass_system(&m, 1e-6, &n, &u, &n).unwrap();
    let a = &sys.system.matrix;
    let size = a.size();
    for comp in 0..2 {
        let rows: Vec<usize> = (0..g.num_cells()).map(|c| sys.layout.density(c, comp)).collect();
        for col in 0..size {
            let sum: f64 = rows.iter().map(|&r| a.get(r, col)).sum();
            let scale: f64 = rows.iter().map(|&r| a.get(r, col).abs()).sum();
            let is_own_density = (0..g.num_cells()).any(|c| sys.layout.density(c, comp) == col);
            let expect = if is_own_density { 1.0 } else { 0.0 };
            assert!((sum - expect).abs() <= 1e-12 * scale.max(1.0), "col {col}: {sum}");
        }
    }
}

#[test]
fn quiescent_uniform_state_is_a_fixed_point() {
    let m = model(6, &binary(320.0));
    let state = SimState::at_rest(m.grid(), uniform(&m, &[7133.9, 26.5]));
    let (next, report) = step(&m, &state, &solver(1e-6)).unwrap();
    assert_eq!(report.iterations, 1);
    assert!(!report.clamped);
    assert!(max_rel_diff(&next.n, &state.n) < 1e-12);
    assert!(next.u.max_abs() < 1e-20);
    assert_eq!(next.step, 1);
    assert_relative_eq!(next.t, 1e-6);
}

#[test]
fn uniform_potential_drives_no_flow() {
    let m = model(6, &binary(320.0));
    let n = droplet(&m);
    let mu = uniform(&m, &[1.5e4, -3.0e3]);
    let zero = m.grid().face_field(0.0);
    let j: Vec<FaceField<f64>> = vec![zero.clone(), zero.clone()];
    let sys = assemble_momentum_system(&m, 1e-6, &n, &n, &mu, &j, &zero, &zero);
    let (x, _) = sys.matrix.solve(&sys.rhs, 1e-12).unwrap();
    assert!(x.iter().all(|&v| v == 0.0));
}

#[test]
fn droplet_step_conserves_moles_and_dissipates() {
    let m = model(10, &binary(320.0));
    let mut state = SimState::at_rest(m.grid(), droplet(&m));
    let e0 = compute_energy(&m, &state).unwrap();
    let mut previous = e0.total;
    for _ in 0..3 {
        let (next, report) = step(&m, &state, &solver(1e-6)).unwrap();
        assert!(report.iterations <= 5);
        let e = compute_energy(&m, &next).unwrap();
        assert!(e.total < previous);
        for (a, b) in e.moles.iter().zip(&e0.moles) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
        previous = e.total;
        state = next;
    }
    assert!(state.u.max_abs() > 0.0);
    assert!(state.u.boundary_normals_zero());
}

/// Advances only the mass/potential system with `u = 0` until the iterates settle.
fn creeping_step(m: &Model<f64>, n_k: &[CellField<f64>], dt: f64) -> Vec<CellField<f64>> {
    let zero = m.grid().face_field(0.0);
    let mut n_l = n_k.to_vec();
    for _ in 0..30 {
        let sys = assemble_mass_system(m, dt, n_k, &zero, &n_l).unwrap();
        let (x, _) = sys.system.matrix.solve(&sys.system.rhs, 1e-9).unwrap();
        let next: Vec<CellField<f64>> = (0..n_k.len())
            .map(|c| {
                m.grid()
                    .cell_field_from_vec((0..m.grid().num_cells()).map(|k| x[sys.layout.density(k, c)]).collect())
                    .unwrap()
            })
            .collect();
        let change = max_rel_diff(&next, &n_l);
        n_l = next;
        if change < 1e-13 {
            break;
        }
    }
    n_l
}

#[test]
fn pure_component_without_flow_decreases_free_energy() {
    let mix = methane(150.0);
    let m = model(12, &mix).with_influence(DenseMatrix::from_rows(&[vec![2.0e-20]]).unwrap());
    let w = 2.0 * m.grid().hx();
    let mut n = vec![m.grid().cell_field_from_fn(|x, y| {
        let d = ((x - 10e-9).powi(2) + (y - 10e-9).powi(2)).sqrt() - 5e-9;
        3000.0 + 0.5 * (1.0 - (d / w).tanh()) * 17000.0
    })];
    let mut free = compute_energy(&m, &SimState::at_rest(m.grid(), n.clone())).unwrap().f;
    for _ in 0..5 {
        n = creeping_step(&m, &n, 1e-6);
        let f = compute_energy(&m, &SimState::at_rest(m.grid(), n.clone())).unwrap().f;
        assert!(f <= free, "{f} > {free}");
        free = f;
    }
}

#[test]
fn halving_the_step_converges_at_first_order() {
    let m = model(8, &binary(320.0));
    let n0 = droplet(&m);
    // well below the grid diffusion time h²/D, otherwise the splitting error dominates
    let horizon = 4e-15;
    let run = |k: usize| {
        let cfg = SolverConfig {
            dt: horizon / k as f64,
            nonlinear_tol: 1e-10,
            max_nonlinear_iters: 40,
            ..SolverConfig::default()
        };
        let mut state = SimState::at_rest(m.grid(), n0.clone());
        for _ in 0..k {
            state = step(&m, &state, &cfg).unwrap().0;
        }
        state.n
    };
    let fields: Vec<Vec<CellField<f64>>> = [2, 4, 8].iter().map(|&k| run(k)).collect();
    let dist = |a: &[CellField<f64>], b: &[CellField<f64>]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| diff_norm2(x.values(), y.values()).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let e1 = dist(&fields[0], &fields[1]);
    let e2 = dist(&fields[1], &fields[2]);
    let order = (e1 / e2).log2();
    assert!(order > 0.7 && order < 1.5, "e1 = {e1:e}, e2 = {e2:e}");
}

#[test]
fn state_validation() {
    let m = model(4, &binary(320.0));
    let good = SimState::at_rest(m.grid(), uniform(&m, &[7133.9, 26.5]));
    assert!(good.validate(&m).is_ok());
    let mut bad = good.clone();
    bad.u.x[0] = 1.0;
    assert!(bad.validate(&m).is_err());
    let mut bad = good.clone();
    bad.n[1].values_mut()[5] = -1.0;
    assert!(matches!(bad.validate(&m), Err(Error::AtCell { i: 1, j: 1, .. })));
    let short = SimState::at_rest(m.grid(), uniform(&m, &[7133.9]));
    assert!(short.validate(&m).is_err());
}
