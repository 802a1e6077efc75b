//! Ground states `S_{α,r}`, non-periodic ion arrangements and structure factors.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::{IonDensity, ANALYTIC_SCAN_CELLS};
use crate::field::{Model, State};
use crate::lattice::LatticeSpec;
use crate::{Error, Result, Vec3};

/// Default relative tolerance for the flat-density identity.
pub const FLAT_TOL: f64 = 1e-10;

/// Equilibrium displacements `q*(n)` of the ions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum IonArrangement {
    /// `q*(n) = r` for every n.
    Periodic { r: Vec3 },
    /// `q*(n) = (r₁, r₂, r₃ + τ(n₁, n₂))`, with `τ` listed as `tau[n₁·N + n₂]`.
    Staircase { r: Vec3, tau: Vec<f64> },
    /// Arbitrary displacements in site order.
    Custom { q: Vec<Vec3> },
}

impl IonArrangement {
    /// Displacements in lexicographic site order, reduced mod N.
    pub fn displacements(&self, lattice: LatticeSpec) -> Result<Vec<Vec3>> {
        let n = lattice.n();
        let sites = lattice.sites();
        let q: Vec<Vec3> = match self {
            Self::Periodic { r } => vec![*r; sites.len()],
            Self::Staircase { r, tau } => {
                if tau.len() != n * n {
                    return Err(Error::InvalidParameter(format!(
                        "staircase needs N² = {} heights, got {}",
                        n * n,
                        tau.len()
                    )));
                }
                sites.iter().map(|s| [r[0], r[1], r[2] + tau[s[0] * n + s[1]]]).collect()
            }
            Self::Custom { q } => {
                if q.len() != sites.len() {
                    return Err(Error::InvalidParameter(format!(
                        "custom arrangement needs N³ = {} points, got {}",
                        sites.len(),
                        q.len()
                    )));
                }
                q.clone()
            }
        };
        if q.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("arrangement contains non-finite coordinates".into()));
        }
        Ok(q.into_iter().map(|x| lattice.wrap3(x)).collect())
    }
}

/// `S(ξ) = Σ_n e^{iξ(n+q*(n))}` at `ξ = (2π/N)k`.
pub fn structure_factor(arrangement: &IonArrangement, lattice: LatticeSpec, k: [i32; 3]) -> Result<Complex64> {
    let q = arrangement.displacements(lattice)?;
    let xi = lattice.xi(k);
    Ok(lattice
        .sites()
        .iter()
        .zip(&q)
        .map(|(s, qn)| {
            let ph: f64 = (0..3).map(|j| xi[j] * (s[j] as f64 + qn[j])).sum();
            Complex64::from_polar(1.0, ph)
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatDensityReport {
    pub pass: bool,
    /// Mode with the largest `|c_σ(ξ)S̄(ξ)|`, ξ ≠ 0.
    pub worst_k: Option<[i32; 3]>,
    /// `max_{ξ≠0} |c_σ(ξ)S̄(ξ)| / eZ`.
    pub residual: f64,
    /// `|c_σ(0)S̄(0) − eZ| / eZ`.
    pub mean_error: f64,
}

/// Checks `Σ_n σ(x − n − q*(n)) ≡ eZ` mode by mode.
pub fn verify_flat_density(sigma: &IonDensity, arrangement: &IonArrangement, tol: f64) -> Result<FlatDensityReport> {
    let lattice = sigma.lattice();
    let ez = sigma.total_charge();
    let mut residual: f64 = 0.0;
    let mut worst_k = None;
    let mut mean_error = 0.0;
    for k in sigma.audit_modes(ANALYTIC_SCAN_CELLS) {
        let c = sigma.series_coeff(k)?;
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        // S̄(ξ) = conj S(ξ)
        let v = (c * structure_factor(arrangement, lattice, k)?.conj()).norm();
        if k == [0, 0, 0] {
            mean_error = (v - ez).abs() / ez;
        } else if v / ez > residual || worst_k.is_none() {
            residual = residual.max(v / ez);
            worst_k = Some(k);
        }
    }
    Ok(FlatDensityReport { pass: residual <= tol && mean_error <= tol, worst_k, residual, mean_error })
}

/// `S_{α,q*} = (e^{iα}√Z, q*, 0)` after verifying the flat-density identity.
pub fn make_ground_state(alpha: f64, arrangement: &IonArrangement, model: &Model, tol: f64) -> Result<State> {
    let report = verify_flat_density(model.density(), arrangement, tol)?;
    if !report.pass {
        return Err(Error::NotAGroundState {
            k: report.worst_k.filter(|_| report.residual > tol).unwrap_or([0, 0, 0]),
            residual: report.residual.max(report.mean_error),
        });
    }
    let lattice = model.lattice();
    let q = arrangement.displacements(lattice)?;
    let mut psi = vec![Complex64::new(0.0, 0.0); model.field_modes().len()];
    psi[model.field_modes().zero()] = Complex64::from_polar(model.params().z.sqrt(), alpha.rem_euclid(2.0 * PI));
    model.state(psi, q, vec![[0.0; 3]; lattice.cell_count()])
}

/// Periodic ground state `S_{α,r}`.
pub fn periodic_ground_state(alpha: f64, r: Vec3, model: &Model) -> Result<State> {
    make_ground_state(alpha, &IonArrangement::Periodic { r }, model, FLAT_TOL)
}

/// `σ̂(ξ) = 0` for `ξ₃ ∈ 2πZ∖0`, and for `ξ₃ = 0, (ξ₁,ξ₂) ∈ 2πZ²∖0`, over the
/// band (or the box `|k_j| ≤ bound·N` for analytic densities).
pub fn check_spectral_condition(sigma: &IonDensity, bound: i32) -> Result<bool> {
    let n = sigma.lattice().n() as i32;
    let tol = 1e-13 * sigma.total_charge();
    for k in sigma.audit_modes(bound) {
        let third = k[2] != 0 && k[2] % n == 0;
        let plane = k[2] == 0 && k[0] % n == 0 && k[1] % n == 0 && (k[0], k[1]) != (0, 0);
        if (third || plane) && sigma.sigma_hat(k)?.norm() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}
