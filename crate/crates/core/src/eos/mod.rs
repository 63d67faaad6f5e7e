//! Pointwise Peng-Robinson thermodynamics in the molar-density (NVT) formulation.
//!
//! The bulk Helmholtz free energy density is the sum of an ideal, a repulsion and an
//! attraction term. [`PengRobinson`] evaluates those terms, the chemical potentials,
//! the pressure (both from the explicit equation of state and from `p = sum(mu_i n_i) - f`),
//! and the convex-concave splitting used by the time stepper together with the Hessian
//! of its convex part.

mod database;

use serde::{Deserialize, Serialize};

pub use database::ComponentDatabase;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::{Scalar, FEASIBILITY_GAP, GAS_CONSTANT};

const OMEGA_A: f64 = 0.45724;
const OMEGA_B: f64 = 0.07780;

/// Pure component data. Units: K, Pa, kg/mol, m^2/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec<S> {
    pub name: String,
    pub critical_temperature: S,
    pub critical_pressure: S,
    pub acentric_factor: S,
    pub molar_weight: S,
    #[serde(default)]
    pub diffusion_coefficient: S,
}

impl<S: Scalar> ComponentSpec<S> {
    pub fn validate(&self) -> Result<()> {
        let name = &self.name;
        if !(self.critical_temperature > S::zero()) {
            return Err(Error::Domain(format!("{name}: critical temperature must be > 0")));
        }
        if !(self.critical_pressure > S::zero()) {
            return Err(Error::Domain(format!("{name}: critical pressure must be > 0")));
        }
        if !(self.molar_weight > S::zero()) {
            return Err(Error::InvalidParameter(format!("{name}: molar weight must be > 0")));
        }
        if !(self.diffusion_coefficient >= S::zero()) {
            return Err(Error::InvalidParameter(format!(
                "{name}: diffusion coefficient must be >= 0"
            )));
        }
        if !self.acentric_factor.is_finite() {
            return Err(Error::InvalidParameter(format!("{name}: acentric factor not finite")));
        }
        Ok(())
    }

    /// Same component with every property converted to another scalar type.
    pub fn cast<T: Scalar>(&self) -> ComponentSpec<T> {
        let c = |x: S| T::lit(x.to_f64_lossy());
        ComponentSpec {
            name: self.name.clone(),
            critical_temperature: c(self.critical_temperature),
            critical_pressure: c(self.critical_pressure),
            acentric_factor: c(self.acentric_factor),
            molar_weight: c(self.molar_weight),
            diffusion_coefficient: c(self.diffusion_coefficient),
        }
    }

    /// Slope coefficient of the temperature function, with the high-acentric-factor
    /// correlation above 0.49.
    pub fn slope_coefficient(&self) -> S {
        let w = self.acentric_factor;
        if w <= S::lit(0.49) {
            S::lit(0.37464) + S::lit(1.54226) * w - S::lit(0.26992) * w * w
        } else {
            S::lit(0.379642) + S::lit(1.485030) * w - S::lit(0.164423) * w * w + S::lit(0.016666) * w * w * w
        }
    }

    /// Covolume `b_i`, m^3/mol.
    pub fn covolume(&self) -> S {
        S::lit(OMEGA_B) * S::lit(GAS_CONSTANT) * self.critical_temperature / self.critical_pressure
    }

    /// Energy parameter `a_i(T)`, Pa m^6/mol^2.
    pub fn energy_parameter(&self, temperature: S) -> S {
        let r = S::lit(GAS_CONSTANT);
        let tc = self.critical_temperature;
        let reduced = temperature / tc;
        let alpha = S::one() + self.slope_coefficient() * (S::one() - reduced.sqrt());
        S::lit(OMEGA_A) * r * r * tc * tc / self.critical_pressure * alpha * alpha
    }
}

/// A mixture of `M` components at fixed temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec<S> {
    components: Vec<ComponentSpec<S>>,
    binary_interaction: DenseMatrix<S>,
    influence_interaction: DenseMatrix<S>,
    lambda: S,
    temperature: S,
}

impl<S: Scalar> MixtureSpec<S> {
    /// `binary_interaction` is `k_ij` of the energy mixing rule, `influence_interaction`
    /// is `beta_ij` of the cross influence parameter, `lambda` scales the auxiliary
    /// convex term of the splitting.
    pub fn new(
        components: Vec<ComponentSpec<S>>,
        binary_interaction: DenseMatrix<S>,
        influence_interaction: DenseMatrix<S>,
        lambda: S,
        temperature: S,
    ) -> Result<Self> {
        let m = components.len();
        if m == 0 {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        for c in &components {
            c.validate()?;
        }
        if binary_interaction.dim() != m || influence_interaction.dim() != m {
            return Err(Error::InvalidParameter(format!("interaction matrices must be {m}x{m}")));
        }
        let tol = S::lit(1e-12);
        if !binary_interaction.is_symmetric(tol) {
            return Err(Error::InvalidParameter("k_ij must be symmetric".into()));
        }
        if !influence_interaction.is_symmetric(tol) {
            return Err(Error::InvalidParameter("beta_ij must be symmetric".into()));
        }
        if (0..m).any(|i| influence_interaction[(i, i)] != S::zero()) {
            return Err(Error::InvalidParameter("beta_ii must be 0".into()));
        }
        if !(lambda > S::zero()) {
            return Err(Error::InvalidParameter("lambda must be > 0".into()));
        }
        if !(temperature > S::zero()) {
            return Err(Error::Domain("temperature must be > 0".into()));
        }
        Ok(Self {
            components,
            binary_interaction,
            influence_interaction,
            lambda,
            temperature,
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[ComponentSpec<S>] {
        &self.components
    }

    pub fn temperature(&self) -> S {
        self.temperature
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn binary_interaction(&self) -> &DenseMatrix<S> {
        &self.binary_interaction
    }

    pub fn influence_interaction(&self) -> &DenseMatrix<S> {
        &self.influence_interaction
    }

    pub fn molar_weights(&self) -> Vec<S> {
        self.components.iter().map(|c| c.molar_weight).collect()
    }

    pub fn diffusion_coefficients(&self) -> Vec<S> {
        self.components.iter().map(|c| c.diffusion_coefficient).collect()
    }

    /// Same mixture at another temperature.
    pub fn with_temperature(&self, temperature: S) -> Result<Self> {
        Self::new(
            self.components.clone(),
            self.binary_interaction.clone(),
            self.influence_interaction.clone(),
            self.lambda,
            temperature,
        )
    }

    /// Same mixture with another splitting parameter.
    pub fn with_lambda(&self, lambda: S) -> Result<Self> {
        Self::new(
            self.components.clone(),
            self.binary_interaction.clone(),
            self.influence_interaction.clone(),
            lambda,
            self.temperature,
        )
    }

    /// Pure and cross influence parameters `c_ij`, J m^5/mol^2, constant at the mixture
    /// temperature.
    pub fn influence_matrix(&self) -> Result<DenseMatrix<S>> {
        let t = self.temperature;
        let pure: Vec<S> = self
            .components
            .iter()
            .map(|c| {
                let w = c.acentric_factor;
                let alpha = -S::lit(1e-16) / (S::lit(1.2326) + S::lit(1.3757) * w);
                let beta = S::lit(1e-16) / (S::lit(0.9051) + S::lit(1.5410) * w);
                let reduced = t / c.critical_temperature;
                c.energy_parameter(t) * c.covolume().powf(S::lit(2.0 / 3.0)) * (alpha * (S::one() - reduced) + beta)
            })
            .collect();
        if let Some((i, c)) = pure.iter().enumerate().find(|(_, c)| !(**c >= S::zero())) {
            return Err(Error::Domain(format!(
                "influence parameter of {} is negative ({:e}) at T = {}",
                self.components[i].name,
                c.to_f64_lossy(),
                t
            )));
        }
        Ok(DenseMatrix::from_fn(self.len(), |i, j| {
            (S::one() - self.influence_interaction[(i, j)]) * (pure[i] * pure[j]).sqrt()
        }))
    }
}

/// Molar-density vector of one homogeneous state, mol/m^3. Every entry is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Composition<S>(Vec<S>);

impl<S: Scalar> Composition<S> {
    pub fn new(n: Vec<S>) -> Result<Self> {
        if n.is_empty() {
            return Err(Error::Domain("empty composition".into()));
        }
        if let Some(i) = n.iter().position(|x| !(*x > S::zero()) || !x.is_finite()) {
            return Err(Error::Domain(format!(
                "molar density n_{} = {} must be positive and finite",
                i + 1,
                n[i]
            )));
        }
        Ok(Self(n))
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn total(&self) -> S {
        self.0.iter().fold(S::zero(), |a, &b| a + b)
    }

    pub fn mole_fractions(&self) -> Vec<S> {
        let n = self.total();
        self.0.iter().map(|&x| x / n).collect()
    }
}

impl<S> std::ops::Deref for Composition<S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        &self.0
    }
}

/// Mixed Peng-Robinson parameters of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct EosParams<S> {
    /// Mixture energy parameter, Pa m^6/mol^2.
    pub a: S,
    /// Mixture covolume, m^3/mol.
    pub b: S,
    pub a_i: Vec<S>,
    pub b_i: Vec<S>,
    pub m_i: Vec<S>,
}

/// The three contributions to the bulk free energy density, J/m^3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BulkEnergy<S> {
    pub ideal: S,
    pub repulsion: S,
    pub attraction: S,
}

impl<S: Scalar> BulkEnergy<S> {
    pub fn total(&self) -> S {
        self.ideal + self.repulsion + self.attraction
    }
}

/// Direct override of the equation-of-state coefficients.
///
/// Lets tests reach analytic limits (for example `a = b = 0`, the ideal gas) that no
/// physical set of critical constants produces.
#[derive(Clone, Debug)]
pub struct RawParams<S> {
    pub temperature: S,
    pub a_i: Vec<S>,
    pub b_i: Vec<S>,
    pub binary_interaction: DenseMatrix<S>,
    pub lambda: S,
}

/// Peng-Robinson model of a mixture at fixed temperature.
#[derive(Clone, Debug)]
pub struct PengRobinson<S> {
    temperature: S,
    rt: S,
    lambda: S,
    a_i: Vec<S>,
    b_i: Vec<S>,
    m_i: Vec<S>,
    /// `sqrt(a_i a_j) (1 - k_ij)`
    a_cross: DenseMatrix<S>,
}

struct StateSums<S> {
    total: S,
    /// `b n = sum_i b_i n_i`
    packing: S,
    /// `a n^2 = sum_ij n_i n_j sqrt(a_i a_j)(1 - k_ij)`
    quadratic: S,
    /// `sum_j sqrt(a_i a_j)(1 - k_ij) n_j`
    row_sums: Vec<S>,
}

impl<S: Scalar> PengRobinson<S> {
    pub fn new(mix: &MixtureSpec<S>) -> Result<Self> {
        let t = mix.temperature();
        let a_i: Vec<S> = mix.components().iter().map(|c| c.energy_parameter(t)).collect();
        let b_i: Vec<S> = mix.components().iter().map(|c| c.covolume()).collect();
        let m_i: Vec<S> = mix.components().iter().map(|c| c.slope_coefficient()).collect();
        Self::assemble(t, a_i, b_i, m_i, mix.binary_interaction(), mix.lambda())
    }

    pub fn from_raw(raw: RawParams<S>) -> Result<Self> {
        let m = raw.a_i.len();
        if raw.b_i.len() != m {
            return Err(Error::InvalidParameter("a_i and b_i lengths differ".into()));
        }
        if raw.a_i.iter().chain(&raw.b_i).any(|x| !(*x >= S::zero())) {
            return Err(Error::InvalidParameter("raw a_i, b_i must be >= 0".into()));
        }
        Self::assemble(
            raw.temperature,
            raw.a_i,
            raw.b_i,
            vec![S::zero(); m],
            &raw.binary_interaction,
            raw.lambda,
        )
    }

    fn assemble(temperature: S, a_i: Vec<S>, b_i: Vec<S>, m_i: Vec<S>, k: &DenseMatrix<S>, lambda: S) -> Result<Self> {
        if !(temperature > S::zero()) {
            return Err(Error::Domain("temperature must be > 0".into()));
        }
        if k.dim() != a_i.len() {
            return Err(Error::InvalidParameter("k_ij dimension mismatch".into()));
        }
        let a_cross = DenseMatrix::from_fn(a_i.len(), |i, j| (a_i[i] * a_i[j]).sqrt() * (S::one() - k[(i, j)]));
        Ok(Self {
            temperature,
            rt: S::lit(GAS_CONSTANT) * temperature,
            lambda,
            a_i,
            b_i,
            m_i,
            a_cross,
        })
    }

    pub fn len(&self) -> usize {
        self.a_i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_i.is_empty()
    }

    pub fn temperature(&self) -> S {
        self.temperature
    }

    /// `R T`, J/mol.
    pub fn rt(&self) -> S {
        self.rt
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn covolumes(&self) -> &[S] {
        &self.b_i
    }

    fn sums(&self, n: &[S]) -> Result<StateSums<S>> {
        if n.len() != self.len() {
            return Err(Error::Domain(format!(
                "composition has {} entries, mixture has {} components",
                n.len(),
                self.len()
            )));
        }
        if let Some(i) = n.iter().position(|x| !(*x > S::zero()) || !x.is_finite()) {
            return Err(Error::Domain(format!(
                "molar density n_{} = {} must be positive and finite",
                i + 1,
                n[i]
            )));
        }
        let total = n.iter().fold(S::zero(), |a, &b| a + b);
        let packing = n.iter().zip(&self.b_i).fold(S::zero(), |a, (&x, &b)| a + x * b);
        if !(packing < S::one()) {
            return Err(Error::Domain(format!(
                "covolume constraint violated: b n = {} >= 1",
                packing
            )));
        }
        let row_sums = self.a_cross.mul_vec(n);
        let quadratic = n.iter().zip(&row_sums).fold(S::zero(), |a, (&x, &s)| a + x * s);
        Ok(StateSums {
            total,
            packing,
            quadratic,
            row_sums,
        })
    }

    fn check_separate_packing(&self, n: &[S]) -> Result<()> {
        for (i, (&x, &b)) in n.iter().zip(&self.b_i).enumerate() {
            if !(x * b < S::one()) {
                return Err(Error::Domain(format!(
                    "separate covolume constraint violated: b_{0} n_{0} >= 1",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Mixed parameters `a`, `b` and the pure-component coefficients.
    pub fn params(&self, n: &[S]) -> Result<EosParams<S>> {
        let s = self.sums(n)?;
        Ok(EosParams {
            a: s.quadratic / (s.total * s.total),
            b: s.packing / s.total,
            a_i: self.a_i.clone(),
            b_i: self.b_i.clone(),
            m_i: self.m_i.clone(),
        })
    }

    /// `ln[(1 + (1 - sqrt2) bn) / (1 + (1 + sqrt2) bn)]`
    fn attraction_log(packing: S) -> S {
        let sqrt2 = S::SQRT_2();
        ((S::one() + (S::one() - sqrt2) * packing) / (S::one() + (S::one() + sqrt2) * packing)).ln()
    }

    fn ideal_energy(&self, n: &[S]) -> S {
        self.rt * n.iter().fold(S::zero(), |a, &x| a + x * (x.ln() - S::one()))
    }

    fn attraction_energy(&self, s: &StateSums<S>) -> S {
        if s.quadratic == S::zero() {
            S::zero()
        } else if s.packing == S::zero() {
            -s.quadratic
        } else {
            s.quadratic / (S::lit(2.0) * S::SQRT_2() * s.packing) * Self::attraction_log(s.packing)
        }
    }

    /// Bulk Helmholtz free energy density split into its three terms.
    pub fn f_bulk(&self, n: &[S]) -> Result<BulkEnergy<S>> {
        let s = self.sums(n)?;
        Ok(BulkEnergy {
            ideal: self.ideal_energy(n),
            repulsion: -s.total * self.rt * (S::one() - s.packing).ln(),
            attraction: self.attraction_energy(&s),
        })
    }

    fn mu_attraction(&self, s: &StateSums<S>) -> Vec<S> {
        if s.quadratic == S::zero() {
            return vec![S::zero(); self.len()];
        }
        if s.packing == S::zero() {
            return s.row_sums.iter().map(|&r| -S::lit(2.0) * r).collect();
        }
        let sqrt2 = S::SQRT_2();
        let two = S::lit(2.0);
        let bn = s.packing;
        let log = Self::attraction_log(bn);
        let last = s.quadratic / (bn * ((sqrt2 - S::one()) * bn - S::one()) * (S::one() + (S::one() + sqrt2) * bn));
        self.b_i
            .iter()
            .zip(&s.row_sums)
            .map(|(&b, &r)| (two * r / bn - s.quadratic * b / (bn * bn)) / (two * sqrt2) * log + b * last)
            .collect()
    }

    /// Ideal plus repulsion chemical potential.
    fn mu_ideal_repulsion(&self, n: &[S], s: &StateSums<S>) -> Vec<S> {
        let free = S::one() - s.packing;
        n.iter()
            .zip(&self.b_i)
            .map(|(&x, &b)| self.rt * (x.ln() + b * s.total / free - free.ln()))
            .collect()
    }

    /// Bulk chemical potentials `mu_i = d f_b / d n_i`, J/mol.
    pub fn mu_bulk(&self, n: &[S]) -> Result<Vec<S>> {
        let s = self.sums(n)?;
        let att = self.mu_attraction(&s);
        Ok(self
            .mu_ideal_repulsion(n, &s)
            .into_iter()
            .zip(att)
            .map(|(a, b)| a + b)
            .collect())
    }

    /// Pressure from the explicit equation of state, Pa.
    pub fn pressure(&self, n: &[S]) -> Result<S> {
        let s = self.sums(n)?;
        let bn = s.packing;
        Ok(s.total * self.rt / (S::one() - bn) - s.quadratic / (S::one() + S::lit(2.0) * bn - bn * bn))
    }

    /// Pressure from the thermodynamic relation `p = sum_i n_i mu_i - f_b`, Pa.
    pub fn pressure_identity(&self, n: &[S]) -> Result<S> {
        let f = self.f_bulk(n)?.total();
        let mu = self.mu_bulk(n)?;
        Ok(n.iter().zip(&mu).fold(S::zero(), |a, (&x, &m)| a + x * m) - f)
    }

    /// Ideal term plus the separate repulsion term, the strictly convex auxiliary energy.
    fn auxiliary_energy(&self, n: &[S]) -> S {
        let separate = n
            .iter()
            .zip(&self.b_i)
            .fold(S::zero(), |a, (&x, &b)| a + x * (S::one() - b * x).ln());
        self.ideal_energy(n) - self.rt * separate
    }

    fn mu_auxiliary(&self, n: &[S]) -> Vec<S> {
        n.iter()
            .zip(&self.b_i)
            .map(|(&x, &b)| {
                let free = S::one() - b * x;
                self.rt * (x.ln() - free.ln() + b * x / free)
            })
            .collect()
    }

    /// `(f_convex, f_concave)` with `f_convex = ideal + repulsion + lambda aux` and
    /// `f_concave = attraction - lambda aux`.
    pub fn split_energy(&self, n: &[S]) -> Result<(S, S)> {
        let bulk = self.f_bulk(n)?;
        self.check_separate_packing(n)?;
        let aux = self.lambda * self.auxiliary_energy(n);
        Ok((bulk.ideal + bulk.repulsion + aux, bulk.attraction - aux))
    }

    /// Chemical potentials of the convex and concave parts.
    pub fn split_mu(&self, n: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let s = self.sums(n)?;
        self.check_separate_packing(n)?;
        let aux = self.mu_auxiliary(n);
        let convex = self
            .mu_ideal_repulsion(n, &s)
            .into_iter()
            .zip(&aux)
            .map(|(m, &x)| m + self.lambda * x)
            .collect();
        let concave = self
            .mu_attraction(&s)
            .into_iter()
            .zip(&aux)
            .map(|(m, &x)| m - self.lambda * x)
            .collect();
        Ok((convex, concave))
    }

    /// Diagonal of the auxiliary Hessian, `RT/n_i + RT b_i/(1-b_i n_i) + RT b_i/(1-b_i n_i)^2`.
    pub fn auxiliary_hessian_diagonal(&self, n: &[S]) -> Result<Vec<S>> {
        self.sums(n)?;
        self.check_separate_packing(n)?;
        Ok(n.iter()
            .zip(&self.b_i)
            .map(|(&x, &b)| {
                let free = S::one() - b * x;
                self.rt * (S::one() / x + b / free + b / (free * free))
            })
            .collect())
    }

    /// Hessian of `f_convex`, J m^3/mol^2. Symmetric; the Newton matrix of the stepper.
    pub fn hessian_convex(&self, n: &[S]) -> Result<DenseMatrix<S>> {
        let s = self.sums(n)?;
        let aux = self.auxiliary_hessian_diagonal(n)?;
        let free = S::one() - s.packing;
        let rt = self.rt;
        Ok(DenseMatrix::from_fn(self.len(), |i, j| {
            let (bi, bj) = (self.b_i[i], self.b_i[j]);
            let mut h = rt * (bi + bj) / free + rt * s.total * bi * bj / (free * free);
            if i == j {
                h = h + rt / n[i] + self.lambda * aux[i];
            }
            h
        }))
    }

    /// Projects `n` into the interior of the feasible set: `n_i >= floor` and
    /// `b n <= 1 - gap`. Returns whether anything changed.
    pub fn clamp_feasible(&self, n: &mut [S], floor: S) -> bool {
        let mut changed = false;
        for x in n.iter_mut() {
            if !(*x >= floor) {
                *x = floor;
                changed = true;
            }
        }
        let limit = S::one() - S::lit(FEASIBILITY_GAP);
        let packing = n.iter().zip(&self.b_i).fold(S::zero(), |a, (&x, &b)| a + x * b);
        if packing > limit {
            let scale = limit / packing;
            for x in n.iter_mut() {
                *x = (*x * scale).max(floor);
            }
            changed = true;
        }
        changed
    }
}

/// Mass density `rho = sum_i n_i M_w,i`, kg/m^3.
pub fn mass_density<S: Scalar>(molar_weights: &[S], n: &[S]) -> S {
    molar_weights.iter().zip(n).fold(S::zero(), |a, (&w, &x)| a + w * x)
}
