//! Spectral fields, phase-space states and the energy functional.
//!
//! The electron field ψ lives on the Galerkin ball `k·k ≤ m`. The charge
//! density ρ and the potential Φ = Gρ live on a larger "charge" ball that
//! holds the ion density and `|ψ|²` without truncation, so that the Coulomb
//! energy of a truncated state is computed exactly.

use std::sync::Arc;

use num_complex::Complex64;

use crate::density::IonDensity;
use crate::grid::SpectralGrid;
use crate::lattice::{build_mode_set, LatticeSpec, ModeSet};
use crate::{Error, Result, Vec3};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Whether the coefficients describe a complex field or a real one
/// (`c(-ξ) = conj c(ξ)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Complex,
    Real,
}

/// Series coefficients `c(ξ)` of a field on a mode set, `f = Σ c(ξ) e^{iξx}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    modes: Arc<ModeSet>,
    coeffs: Vec<Complex64>,
    parity: Parity,
}

impl SpectralField {
    pub fn new(modes: Arc<ModeSet>, coeffs: Vec<Complex64>, parity: Parity) -> Result<Self> {
        if coeffs.len() != modes.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for {} modes",
                coeffs.len(),
                modes.len()
            )));
        }
        Ok(Self { modes, coeffs, parity })
    }

    pub fn zeros(modes: Arc<ModeSet>, parity: Parity) -> Self {
        let coeffs = vec![ZERO; modes.len()];
        Self { modes, coeffs, parity }
    }

    /// Field whose only nonzero coefficient is the constant mode.
    pub fn constant(modes: Arc<ModeSet>, value: Complex64) -> Self {
        let mut f = Self::zeros(modes, Parity::Complex);
        let z = f.modes.zero();
        f.coeffs[z] = value;
        f
    }

    pub fn modes(&self) -> &Arc<ModeSet> {
        &self.modes
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// Coefficient at integer wave vector `k`, zero outside the mode set.
    pub fn get(&self, k: [i32; 3]) -> Complex64 {
        self.modes.index_of(k).map_or(ZERO, |i| self.coeffs[i])
    }

    /// Largest `|c(ξ) − conj c(−ξ)|`, the reality defect.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.modes.negated(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    fn same_modes(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.modes, &other.modes) || *self.modes == *other.modes {
            Ok(())
        } else {
            Err(Error::IncompatibleModes)
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_modes(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self { modes: self.modes.clone(), coeffs, parity: self.parity })
    }

    /// `‖f‖²_{L²} = N³ Σ |c|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.modes.lattice().volume() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `‖f‖²_{H¹} = N³ Σ (1+|ξ|²)|c|²`.
    pub fn h1_norm_sq(&self) -> f64 {
        let v = self.modes.lattice().volume();
        v * self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (1.0 + self.modes.xi2(i)) * c.norm_sqr())
            .sum::<f64>()
    }

    /// `∫ |∇f|² = N³ Σ |ξ|²|c|²`.
    pub fn gradient_norm_sq(&self) -> f64 {
        let v = self.modes.lattice().volume();
        v * self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| self.modes.xi2(i) * c.norm_sqr())
            .sum::<f64>()
    }

    /// Real L² pairing `Re ∫ conj(f) g`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_modes(other)?;
        let v = self.modes.lattice().volume();
        Ok(v * self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a.conj() * b).re).sum::<f64>())
    }
}

fn divide_by(rho: &SpectralField, power: f64) -> SpectralField {
    let mut out = SpectralField::zeros(rho.modes.clone(), Parity::Real);
    for (i, c) in rho.coeffs.iter().enumerate() {
        let x2 = rho.modes.xi2(i);
        if x2 > 0.0 {
            out.coeffs[i] = c / x2.powf(power);
        }
    }
    out
}

/// Green operator `G = (−Δ)⁻¹` on zero-mean fields; the constant mode is annihilated.
pub fn apply_green(rho: &SpectralField) -> SpectralField {
    divide_by(rho, 1.0)
}

/// `√G`, with symbol `1/|ξ|` off the constant mode.
pub fn apply_sqrt_green(rho: &SpectralField) -> SpectralField {
    divide_by(rho, 0.5)
}

/// Ion mass in electron-mass units when none is given.
pub const DEFAULT_ION_MASS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub e: f64,
    pub z: f64,
    /// Ion mass M.
    pub mass: f64,
    pub n: usize,
}

impl ModelParams {
    pub fn new(e: f64, z: f64, mass: f64, n: usize) -> Result<Self> {
        let p = Self { e, z, mass, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("e", self.e), ("Z", self.z), ("M", self.mass)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        LatticeSpec::new(self.n).map(|_| ())
    }

    pub fn volume(&self) -> f64 {
        (self.n * self.n * self.n) as f64
    }
}

/// A phase-space point `X = (ψ, q, p)`. Ion `n` (lexicographic site order)
/// sits at `n + q(n)` and carries momentum `p(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub psi: SpectralField,
    pub q: Vec<Vec3>,
    pub p: Vec<Vec3>,
}

impl State {
    /// Validates sizes and reduces every displacement mod N.
    pub fn new(psi: SpectralField, q: Vec<Vec3>, p: Vec<Vec3>) -> Result<Self> {
        let lattice = psi.modes.lattice();
        let count = lattice.cell_count();
        if q.len() != count || p.len() != count {
            return Err(Error::InvalidParameter(format!(
                "expected {count} ion positions and momenta, got {} and {}",
                q.len(),
                p.len()
            )));
        }
        let q = q.into_iter().map(|x| lattice.wrap3(x)).collect();
        Ok(Self { psi, q, p })
    }

    pub fn lattice(&self) -> LatticeSpec {
        self.psi.modes.lattice()
    }

    /// Same state with ψ conjugated and momenta negated (time reversal).
    pub fn time_reversed(&self) -> Self {
        let mut out = self.clone();
        let modes = out.psi.modes.clone();
        let old = self.psi.coeffs();
        for i in 0..modes.len() {
            out.psi.coeffs[i] = old[modes.negated(i)].conj();
        }
        for p in out.p.iter_mut() {
            *p = [-p[0], -p[1], -p[2]];
        }
        out
    }
}

/// Electronic charge `Q = ∫|ψ|²`.
pub fn charge(x: &State) -> f64 {
    x.psi.l2_norm_sq()
}

fn euclid(v: &[Vec3]) -> f64 {
    v.iter().flat_map(|a| a.iter()).map(|c| c * c).sum::<f64>().sqrt()
}

/// `‖ψ‖_{H¹} + |p|`.
pub fn quasinorm(x: &State) -> f64 {
    x.psi.h1_norm_sq().sqrt() + euclid(&x.p)
}

/// `|q − q′|` as the Euclidean aggregate of per-component circular distances.
pub fn torus_distance(lattice: LatticeSpec, q: &[Vec3], q2: &[Vec3]) -> f64 {
    q.iter()
        .zip(q2)
        .flat_map(|(a, b)| (0..3).map(move |j| lattice.circular_diff(a[j], b[j])))
        .map(|d| d * d)
        .sum::<f64>()
        .sqrt()
}

/// `‖ψ−ψ′‖_{H¹} + |q−q′|_torus + |p−p′|`.
pub fn metric(x: &State, y: &State) -> Result<f64> {
    let dpsi = x.psi.sub(&y.psi)?;
    let dp: Vec<Vec3> = x
        .p
        .iter()
        .zip(&y.p)
        .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
        .collect();
    Ok(dpsi.h1_norm_sq().sqrt() + torus_distance(x.lattice(), &x.q, &y.q) + euclid(&dp))
}

/// The three nonnegative contributions to the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    /// `½∫|∇ψ|²`
    pub kinetic: f64,
    /// `½(ρ, Gρ)`
    pub coulomb: f64,
    /// `Σ |p|²/2M`
    pub ion_kinetic: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.kinetic + self.coulomb + self.ion_kinetic
    }
}

/// Default cutoff of the charge ball for a field cutoff `m`.
pub fn default_charge_cutoff(density: &IonDensity, m: u32) -> u32 {
    (4 * m).max(density.band_cutoff().unwrap_or(0))
}

/// The truncated model: parameters, ion density and the spectral machinery
/// shared by the energy, the dynamics and the Hessian.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    density: IonDensity,
    field: Arc<ModeSet>,
    charge: Arc<ModeSet>,
    sigma: Vec<Complex64>,
    grid: SpectralGrid,
    field_slots: Vec<usize>,
    charge_slots: Vec<usize>,
    field_in_charge: Vec<usize>,
}

impl Model {
    pub fn new(params: ModelParams, density: IonDensity, field: Arc<ModeSet>) -> Result<Self> {
        let cutoff = default_charge_cutoff(&density, field.cutoff());
        Self::with_charge_cutoff(params, density, field, cutoff)
    }

    /// Model whose ρ and Φ live on the ball `k·k ≤ charge_cutoff`. Densities that
    /// are not band-limited within that ball are used through their projection.
    pub fn with_charge_cutoff(
        params: ModelParams,
        density: IonDensity,
        field: Arc<ModeSet>,
        charge_cutoff: u32,
    ) -> Result<Self> {
        params.validate()?;
        if density.lattice().n() != params.n || field.n() != params.n {
            return Err(Error::InvalidParameter(format!(
                "lattice sizes disagree: params N = {}, density N = {}, modes N = {}",
                params.n,
                density.lattice().n(),
                field.n()
            )));
        }
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-14 * a.abs().max(b.abs());
        if !rel(density.e(), params.e) || !rel(density.z(), params.z) {
            return Err(Error::InvalidParameter(format!(
                "density charges (e = {}, Z = {}) differ from model parameters (e = {}, Z = {})",
                density.e(),
                density.z(),
                params.e,
                params.z
            )));
        }
        if charge_cutoff < 4 * field.cutoff() {
            return Err(Error::InvalidParameter(format!(
                "charge cutoff {charge_cutoff} must be at least 4m = {}",
                4 * field.cutoff()
            )));
        }
        let charge = Arc::new(build_mode_set(params.n, charge_cutoff)?);
        let sigma = charge.modes().iter().map(|&k| density.series_coeff_or_zero(k)).collect();
        let grid = SpectralGrid::new(charge.grid_dims()[0]);
        let field_slots = grid.indices(&field);
        let charge_slots = grid.indices(&charge);
        let field_in_charge = field
            .modes()
            .iter()
            .map(|&k| charge.index_of(k).expect("field ball inside charge ball"))
            .collect();
        Ok(Self {
            params,
            density,
            field,
            charge,
            sigma,
            grid,
            field_slots,
            charge_slots,
            field_in_charge,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn density(&self) -> &IonDensity {
        &self.density
    }

    pub fn field_modes(&self) -> &Arc<ModeSet> {
        &self.field
    }

    pub fn charge_modes(&self) -> &Arc<ModeSet> {
        &self.charge
    }

    pub fn lattice(&self) -> LatticeSpec {
        self.field.lattice()
    }

    /// `c_σ` on the charge modes.
    pub fn sigma_coeffs(&self) -> &[Complex64] {
        &self.sigma
    }

    /// Position of each field mode inside the charge mode list.
    pub fn field_in_charge(&self) -> &[usize] {
        &self.field_in_charge
    }

    pub(crate) fn check_state(&self, x: &State) -> Result<()> {
        if !(Arc::ptr_eq(&x.psi.modes, &self.field) || *x.psi.modes == *self.field) {
            return Err(Error::IncompatibleModes);
        }
        if x.q.len() != self.lattice().cell_count() {
            return Err(Error::InvalidParameter("ion count does not match N³".into()));
        }
        Ok(())
    }

    /// Per-axis phase tables `e^{−i(2π/N)k_j(n_j+q_j)}` for `|k_j| ≤ K`, one per ion.
    fn phase_tables(&self, q: &[Vec3]) -> Vec<[Vec<Complex64>; 3]> {
        let lattice = self.lattice();
        let kmax = self.charge.max_component();
        let unit = lattice.dual_unit();
        lattice
            .sites()
            .iter()
            .zip(q)
            .map(|(site, qn)| {
                std::array::from_fn(|j| {
                    let a = site[j] as f64 + qn[j];
                    (-kmax..=kmax).map(|k| Complex64::from_polar(1.0, -unit * k as f64 * a)).collect()
                })
            })
            .collect()
    }

    /// Conjugate structure factor `S̄(ξ) = Σ_n e^{−iξ(n+q(n))}` on the charge modes.
    pub fn structure_bar(&self, q: &[Vec3]) -> Vec<Complex64> {
        let tables = self.phase_tables(q);
        let kmax = self.charge.max_component();
        self.charge
            .modes()
            .iter()
            .map(|k| {
                let idx = k.map(|kj| (kj + kmax) as usize);
                tables.iter().map(|t| t[0][idx[0]] * t[1][idx[1]] * t[2][idx[2]]).sum()
            })
            .collect()
    }

    /// `c_{|ψ|²}` on the charge modes, exact by dealiasing.
    pub fn psi_density(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut values = self.grid.synthesize(&self.field_slots, psi);
        for v in values.iter_mut() {
            *v = Complex64::new(v.norm_sqr(), 0.0);
        }
        self.grid.analyze(values, &self.charge_slots)
    }

    /// Galerkin projection of `Φψ` onto the field modes.
    pub fn project_product(&self, phi: &[Complex64], psi: &[Complex64]) -> Vec<Complex64> {
        let a = self.grid.synthesize(&self.charge_slots, phi);
        let mut b = self.grid.synthesize(&self.field_slots, psi);
        for (x, y) in b.iter_mut().zip(&a) {
            *x *= y.re;
        }
        self.grid.analyze(b, &self.field_slots)
    }

    /// Galerkin projection of `exp(iaΦ)ψ`, the phase taken pointwise on the grid.
    pub fn phase_multiply(&self, phi: &[Complex64], psi: &[Complex64], a: f64) -> Vec<Complex64> {
        let p = self.grid.synthesize(&self.charge_slots, phi);
        let mut b = self.grid.synthesize(&self.field_slots, psi);
        for (x, y) in b.iter_mut().zip(&p) {
            *x *= Complex64::from_polar(1.0, a * y.re);
        }
        self.grid.analyze(b, &self.field_slots)
    }

    /// Charge density coefficients from a precomputed `S̄` and the field.
    pub(crate) fn rho_from(&self, sbar: &[Complex64], psi: &[Complex64]) -> Vec<Complex64> {
        let e = self.params.e;
        let dens = self.psi_density(psi);
        self.sigma
            .iter()
            .zip(sbar)
            .zip(dens)
            .map(|((s, sb), d)| s * sb - e * d)
            .collect()
    }

    /// `ρ = Σ_n σ(x−n−q(n)) − e|ψ|²` on the charge modes.
    pub fn assemble_rho(&self, x: &State) -> Result<SpectralField> {
        self.check_state(x)?;
        let sbar = self.structure_bar(&x.q);
        let rho = self.rho_from(&sbar, x.psi.coeffs());
        SpectralField::new(self.charge.clone(), rho, Parity::Real)
    }

    /// `Φ = Gρ`.
    pub fn potential(&self, x: &State) -> Result<SpectralField> {
        Ok(apply_green(&self.assemble_rho(x)?))
    }

    pub(crate) fn coulomb_from_rho(&self, rho: &[Complex64]) -> f64 {
        let v = self.lattice().volume();
        let sum: f64 = rho
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.charge.zero())
            .map(|(i, c)| c.norm_sqr() / self.charge.xi2(i))
            .sum();
        0.5 * v * sum
    }

    pub(crate) fn ion_kinetic(&self, p: &[Vec3]) -> f64 {
        p.iter().map(|a| a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sum::<f64>() / (2.0 * self.params.mass)
    }

    pub fn energy_terms(&self, x: &State) -> Result<EnergyTerms> {
        let rho = self.assemble_rho(x)?;
        Ok(EnergyTerms {
            kinetic: 0.5 * x.psi.gradient_norm_sq(),
            coulomb: self.coulomb_from_rho(rho.coeffs()),
            ion_kinetic: self.ion_kinetic(&x.p),
        })
    }

    /// Hamilton functional `E = ½∫|∇ψ|² + ½(ρ, Gρ) + Σ|p|²/2M`.
    pub fn energy(&self, x: &State) -> Result<f64> {
        Ok(self.energy_terms(x)?.total())
    }

    /// Force `f(n) = −N³ Σ_ξ Re[iξ c_Φ(ξ) conj(c_σ(ξ)) e^{iξ(n+q(n))}]` on every ion.
    pub fn forces(&self, phi: &[Complex64], q: &[Vec3]) -> Vec<Vec3> {
        let tables = self.phase_tables(q);
        let kmax = self.charge.max_component();
        let v = self.lattice().volume();
        let weights: Vec<(Vec3, Complex64)> = self
            .charge
            .modes()
            .iter()
            .enumerate()
            .map(|(i, _)| (self.charge.xi(i), Complex64::i() * phi[i] * self.sigma[i].conj()))
            .collect();
        tables
            .iter()
            .map(|t| {
                let mut f = [0.0; 3];
                for ((xi, w), k) in weights.iter().zip(self.charge.modes()) {
                    let idx = k.map(|kj| (kj + kmax) as usize);
                    // e^{+iξa} is the conjugate of the tabulated phase
                    let ph = (t[0][idx[0]] * t[1][idx[1]] * t[2][idx[2]]).conj();
                    let re = (w * ph).re;
                    for j in 0..3 {
                        f[j] -= v * xi[j] * re;
                    }
                }
                f
            })
            .collect()
    }

    /// A state on this model's field modes.
    pub fn state(&self, psi: Vec<Complex64>, q: Vec<Vec3>, p: Vec<Vec3>) -> Result<State> {
        State::new(SpectralField::new(self.field.clone(), psi, Parity::Complex)?, q, p)
    }
}
