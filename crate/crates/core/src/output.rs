//! Field snapshots (CSV, legacy VTK) and the run loop that writes the energy trace.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use crate::diagnostics::{compute_energy, pressure_field, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{CellField, GridSpec};
use crate::scalar::Scalar;
use crate::scenario::{OutputFormat, ScenarioConfig};
use crate::stepper::{chemical_potential_field, step, Model, PotentialMode, SimState, SolverConfig, StepReport};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn num<S: Scalar>(x: S) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

/// One cell field as `x,y,value` rows, row-major, cell-center coordinates.
pub fn write_field_csv<S: Scalar>(path: &Path, grid: &GridSpec<S>, field: &CellField<S>) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "x,y,value").map_err(io)?;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let (x, y) = grid.cell_center(i, j);
            writeln!(w, "{},{},{}", num(x), num(y), num(field.at(i, j))).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads back a file written by [`write_field_csv`].
pub fn read_field_csv(path: &Path) -> Result<Vec<[f64; 3]>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if k == 0 {
            if line != "x,y,value" {
                return Err(Error::Config(format!("{}: unexpected header {line:?}", path.display())));
            }
            continue;
        }
        let parts: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), k + 1)))?;
        match parts[..] {
            [x, y, v] => rows.push([x, y, v]),
            _ => {
                return Err(Error::Config(format!(
                    "{}:{}: expected 3 columns",
                    path.display(),
                    k + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// Legacy ASCII VTK structured points with one point per cell center.
pub fn write_vtk<S: Scalar>(path: &Path, grid: &GridSpec<S>, fields: &[(String, CellField<S>)]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let half = S::lit(0.5);
    write!(
        w,
        "# vtk DataFile Version 3.0\nnvtflow snapshot\nASCII\nDATASET STRUCTURED_POINTS\n\
         DIMENSIONS {nx} {ny} 1\nORIGIN {} {} 0\nSPACING {} {} 1\nPOINT_DATA {}\n",
        num(half * hx),
        num(half * hy),
        num(hx),
        num(hy),
        nx * ny
    )
    .map_err(io)?;
    for (name, field) in fields {
        writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default").map_err(io)?;
        for v in field.values() {
            writeln!(w, "{}", num(*v)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Named snapshot fields: `n_i`, `mu_i`, cell-centered `ux`, `uy` and the pressure `p`.
pub fn snapshot_fields<S: Scalar>(model: &Model<S>, state: &SimState<S>) -> Result<Vec<(String, CellField<S>)>> {
    let mut out = Vec::new();
    for (i, f) in state.n.iter().enumerate() {
        out.push((format!("n_{}", i + 1), f.clone()));
    }
    let mu = chemical_potential_field(model, &state.n, PotentialMode::Full)?;
    for (i, f) in mu.into_iter().enumerate() {
        out.push((format!("mu_{}", i + 1), f));
    }
    let (ux, uy) = model.grid().face_to_cell(&state.u);
    out.push(("ux".into(), ux));
    out.push(("uy".into(), uy));
    out.push(("p".into(), pressure_field(model, &state.n)?));
    Ok(out)
}

/// Writes `snapshots/step_NNNNNN/<field>.csv` and/or `snapshots/step_NNNNNN.vtk`.
pub fn write_snapshot<S: Scalar>(
    dir: &Path,
    model: &Model<S>,
    state: &SimState<S>,
    format: OutputFormat,
) -> Result<()> {
    let fields = snapshot_fields(model, state)?;
    let base = dir.join("snapshots");
    let name = format!("step_{:06}", state.step);
    if format.csv() {
        for (field_name, f) in &fields {
            write_field_csv(&base.join(&name).join(format!("{field_name}.csv")), model.grid(), f)?;
        }
    }
    if format.vtk() {
        write_vtk(&base.join(format!("{name}.vtk")), model.grid(), &fields)?;
    }
    Ok(())
}

/// Appends one row per state to `energy.csv`.
pub struct EnergyLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl EnergyLog {
    pub fn create(path: &Path, components: usize) -> Result<Self> {
        let mut writer = create(path)?;
        let moles: String = (1..=components).map(|i| format!(",moles_{i}")).collect();
        writeln!(writer, "step,t,F_bulk,F_grad,F,E,total{moles}").map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn append<S: Scalar>(&mut self, r: &EnergyReport<S>) -> Result<()> {
        let moles: String = r.moles.iter().map(|&m| format!(",{}", num(m))).collect();
        writeln!(
            self.writer,
            "{},{},{},{},{},{},{}{moles}",
            r.step,
            num(r.t),
            num(r.f_bulk),
            num(r.f_grad),
            num(r.f),
            num(r.kinetic),
            num(r.total)
        )
        .and_then(|_| self.writer.flush())
        .map_err(|e| Error::io(&self.path, e))
    }
}

struct SolverLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl SolverLog {
    fn create(path: &Path) -> Result<Self> {
        let mut writer = create(path)?;
        writeln!(
            writer,
            "step,iterations,relative_change,mass_residual,momentum_residual,clamped"
        )
        .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    fn append<S: Scalar>(&mut self, step: usize, r: &StepReport<S>) -> Result<()> {
        writeln!(
            self.writer,
            "{step},{},{},{},{},{}",
            r.iterations,
            num(r.relative_change),
            num(r.mass_residual),
            num(r.momentum_residual),
            r.clamped
        )
        .and_then(|_| self.writer.flush())
        .map_err(|e| Error::io(&self.path, e))
    }
}

/// Result of a full run.
#[derive(Clone, Debug)]
pub struct RunSummary<S> {
    pub initial: SimState<S>,
    pub last: SimState<S>,
    /// One entry per state, starting with the initial one.
    pub energy: Vec<EnergyReport<S>>,
    pub steps: Vec<StepReport<S>>,
}

/// Builds the scenario, advances it `n_steps` times and writes `energy.csv`,
/// `solver.csv` and snapshots under the configured output directory. Output written
/// before a failure is kept.
pub fn run<S: Scalar>(cfg: &ScenarioConfig) -> Result<RunSummary<S>> {
    let model = cfg.model::<S>()?;
    let solver: SolverConfig<S> = cfg.solver()?;
    let initial = cfg.build_initial_state::<S>()?;
    initial.validate(&model)?;
    let dir = cfg.output_dir();
    let format = cfg.output.format;
    let stride = cfg.output.snapshot_every;

    let mut energy_log = EnergyLog::create(&dir.join("energy.csv"), model.num_components())?;
    let mut solver_log = SolverLog::create(&dir.join("solver.csv"))?;
    let first = compute_energy(&model, &initial)?;
    energy_log.append(&first)?;
    write_snapshot(&dir, &model, &initial, format)?;

    let mut summary = RunSummary {
        initial: initial.clone(),
        last: initial,
        energy: vec![first],
        steps: Vec::with_capacity(solver.n_steps),
    };
    for _ in 0..solver.n_steps {
        let (next, report) = step(&model, &summary.last, &solver)?;
        let e = compute_energy(&model, &next)?;
        info!(
            "step {:>4}  t = {:.4e} s  total = {:.10e} J  iterations = {}",
            next.step,
            next.t.to_f64_lossy(),
            e.total.to_f64_lossy(),
            report.iterations
        );
        energy_log.append(&e)?;
        solver_log.append(next.step, &report)?;
        let last = next.step == solver.n_steps;
        if last || (stride > 0 && next.step % stride == 0) {
            write_snapshot(&dir, &model, &next, format)?;
        }
        summary.energy.push(e);
        summary.steps.push(report);
        summary.last = next;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_field_csv() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::<f64>::new(2, 2, 1.0, 1.0).unwrap();
        let path = dir.path().join("f.csv");
        write_field_csv(&path, &grid, &grid.cell_field(3.25)).unwrap();
        let rows = read_field_csv(&path).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r[2] == 3.25));
        assert_eq!([rows[1][0], rows[1][1]], [0.75, 0.25]);
    }

    #[test]
    fn vtk_header_and_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::<f64>::new(3, 2, 3.0, 2.0).unwrap();
        let path = dir.path().join("s.vtk");
        let fields = vec![
            ("a".to_string(), grid.cell_field(1.0)),
            ("b".to_string(), grid.cell_field(2.0)),
        ];
        write_vtk(&path, &grid, &fields).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DIMENSIONS 3 2 1\n"));
        assert!(text.contains("POINT_DATA 6\n"));
        assert_eq!(text.matches("SCALARS").count(), 2);
        assert_eq!(text.lines().count(), 8 + 2 * (2 + 6));
    }
}
