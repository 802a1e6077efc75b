//! Time evolution of the Galerkin system
//!
//! ```text
//! i ψ̇ = −½Δψ − eP(Φψ),   q̇ = p/M,   ṗ = f,
//! ```
//!
//! with a split-step integrator and a Duhamel/Picard integrator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::{apply_green, metric, Model, Parity, SpectralField, State};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Strang,
    Picard,
}

/// How the split-step integrator advances the potential part of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialStep {
    /// Pointwise phase `exp(ieΦτ)` on the collocation grid followed by projection.
    GridPhase,
    /// Implicit midpoint on `(ψ, p)` with q frozen: symmetric, symplectic and
    /// charge-conserving on the Galerkin space.
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub sample_every: usize,
    pub potential_step: PotentialStep,
    /// Abort once `|E(t) − E(0)|` exceeds this fraction of `max(E(0), 1e-12)`.
    pub blowup_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Strang,
            dt: 1e-3,
            t_end: 1.0,
            picard_tol: 1e-12,
            picard_max_iters: 50,
            sample_every: 10,
            potential_step: PotentialStep::GridPhase,
            blowup_tol: 0.5,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.dt <= self.t_end * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt <= t_end (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        if self.picard_max_iters == 0 || self.sample_every == 0 {
            return Err(Error::InvalidParameter("picard_max_iters and sample_every must be >= 1".into()));
        }
        if !(self.picard_tol > 0.0 && self.blowup_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        self.steps().map(|_| ())
    }

    /// Number of steps; `t_end` must be an integer multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.t_end / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::InvalidParameter(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// The terms of the vector field besides the free Schrödinger part.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearTerms {
    /// Φ on the charge modes.
    pub phi: SpectralField,
    /// `ieP(Φψ)` on the field modes.
    pub field_term: Vec<Complex64>,
    /// `p/M`.
    pub velocity: Vec<Vec3>,
    pub force: Vec<Vec3>,
}

pub fn nonlinearity(model: &Model, x: &State) -> Result<NonlinearTerms> {
    let phi = model.potential(x)?;
    Ok(raw_terms(model, phi, x.psi.coeffs(), &x.q, &x.p))
}

fn raw_terms(model: &Model, phi: SpectralField, psi: &[Complex64], q: &[Vec3], p: &[Vec3]) -> NonlinearTerms {
    let ie = Complex64::new(0.0, model.params().e);
    let field_term = model.project_product(phi.coeffs(), psi).into_iter().map(|c| ie * c).collect();
    let force = model.forces(phi.coeffs(), q);
    let inv_m = 1.0 / model.params().mass;
    let velocity = p.iter().map(|a| a.map(|c| c * inv_m)).collect();
    NonlinearTerms { phi, field_term, velocity, force }
}

fn phi_from(model: &Model, sbar: &[Complex64], psi: &[Complex64]) -> SpectralField {
    let rho = SpectralField::new(model.charge_modes().clone(), model.rho_from(sbar, psi), Parity::Real)
        .expect("charge-mode sized");
    apply_green(&rho)
}

/// Multiplies every field coefficient by `e^{−i|ξ|²s/2}`.
fn free_propagate(model: &Model, psi: &mut [Complex64], s: f64) {
    let modes = model.field_modes();
    for (i, c) in psi.iter_mut().enumerate() {
        *c *= Complex64::from_polar(1.0, -0.5 * modes.xi2(i) * s);
    }
}

fn sup_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

const MIDPOINT_MAX_ITERS: usize = 100;

/// Potential sub-flow over `tau` with ions frozen.
fn potential_substep(model: &Model, x: &mut State, tau: f64, how: PotentialStep) -> Result<()> {
    let sbar = model.structure_bar(&x.q);
    let e = model.params().e;
    let ie_tau = Complex64::new(0.0, e * tau);
    let psi0 = x.psi.coeffs().to_vec();
    let (phi, psi1) = match how {
        PotentialStep::GridPhase => {
            let phi = phi_from(model, &sbar, &psi0);
            let psi1 = model.phase_multiply(phi.coeffs(), &psi0, e * tau);
            (phi, psi1)
        }
        PotentialStep::Midpoint => {
            let scale = sup_norm(&psi0).max(1e-300);
            let mut psi1 = psi0.clone();
            let mut last = f64::INFINITY;
            let mut iters = 0;
            loop {
                iters += 1;
                let mid: Vec<Complex64> = psi0.iter().zip(&psi1).map(|(a, b)| 0.5 * (a + b)).collect();
                let phi = phi_from(model, &sbar, &mid);
                let prod = model.project_product(phi.coeffs(), &mid);
                let next: Vec<Complex64> = psi0.iter().zip(&prod).map(|(a, b)| a + ie_tau * b).collect();
                let change = next.iter().zip(&psi1).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
                psi1 = next;
                // stop at round-off: either tiny or no longer decreasing near machine precision
                if change <= 1e-15 || (change >= last && change <= 1e-12) {
                    let mid: Vec<Complex64> = psi0.iter().zip(&psi1).map(|(a, b)| 0.5 * (a + b)).collect();
                    break (phi_from(model, &sbar, &mid), psi1);
                }
                if iters >= MIDPOINT_MAX_ITERS {
                    return Err(Error::StepSize { dt: 2.0 * tau, iters, residual: change });
                }
                last = change;
            }
        }
    };
    let f = model.forces(phi.coeffs(), &x.q);
    for (p, fi) in x.p.iter_mut().zip(&f) {
        for j in 0..3 {
            p[j] += tau * fi[j];
        }
    }
    x.psi.coeffs_mut().copy_from_slice(&psi1);
    Ok(())
}

fn drift_ions(model: &Model, x: &mut State, dt: f64) {
    let lattice = model.lattice();
    let inv_m = 1.0 / model.params().mass;
    for (q, p) in x.q.iter_mut().zip(&x.p) {
        *q = lattice.wrap3([q[0] + dt * p[0] * inv_m, q[1] + dt * p[1] * inv_m, q[2] + dt * p[2] * inv_m]);
    }
}

/// Strang step with the grid-phase potential sub-step.
pub fn step_strang(model: &Model, x: &State, dt: f64) -> Result<State> {
    step_strang_with(model, x, dt, PotentialStep::GridPhase)
}

/// Half potential step, full kinetic step and ion drift, half potential step.
pub fn step_strang_with(model: &Model, x: &State, dt: f64, how: PotentialStep) -> Result<State> {
    model.check_state(x)?;
    let mut y = x.clone();
    potential_substep(model, &mut y, 0.5 * dt, how)?;
    free_propagate(model, y.psi.coeffs_mut(), dt);
    drift_ions(model, &mut y, dt);
    potential_substep(model, &mut y, 0.5 * dt, how)?;
    Ok(y)
}

const SQRT3_6: f64 = 0.288_675_134_594_812_9;
const GAUSS_C: [f64; 2] = [0.5 - SQRT3_6, 0.5 + SQRT3_6];
const GAUSS_A: [[f64; 2]; 2] = [[0.25, 0.25 - SQRT3_6], [0.25 + SQRT3_6, 0.25]];
const GAUSS_B: [f64; 2] = [0.5, 0.5];

/// Result of one Duhamel step.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardStep {
    pub state: State,
    pub iterations: usize,
}

/// One step of the Duhamel form
/// `X(t+h) = e^{−Ah}X(t) + ∫₀ʰ e^{−A(h−s)} N(X(t+s)) ds`
/// with the integral replaced by the two-point Gauss rule at the stages, the
/// stage values being found by fixed-point iteration.
pub fn step_picard(model: &Model, x: &State, dt: f64, tol: f64, max_iters: usize) -> Result<PicardStep> {
    model.check_state(x)?;
    let propagate = |psi: &[Complex64], s: f64| {
        let mut out = psi.to_vec();
        free_propagate(model, &mut out, s);
        out
    };
    let combine = |c: f64, weights: &[f64; 2], terms: &[NonlinearTerms; 2], s: [f64; 2]| {
        // e^{−Ac h}X0 + h Σ_j w_j e^{−A(c−c_j)h} N(Y_j)
        let mut psi = propagate(x.psi.coeffs(), c * dt);
        let mut q = x.q.clone();
        let mut p = x.p.clone();
        for j in 0..2 {
            let w = dt * weights[j];
            let moved = propagate(&terms[j].field_term, s[j]);
            for (a, b) in psi.iter_mut().zip(&moved) {
                *a += w * b;
            }
            for n in 0..q.len() {
                for d in 0..3 {
                    q[n][d] += w * terms[j].velocity[n][d];
                    p[n][d] += w * terms[j].force[n][d];
                }
            }
        }
        let field = SpectralField::new(model.field_modes().clone(), psi, Parity::Complex).expect("field-mode sized");
        State { psi: field, q, p }
    };

    let mut stages: [State; 2] = std::array::from_fn(|i| {
        let mut s = x.clone();
        free_propagate(model, s.psi.coeffs_mut(), GAUSS_C[i] * dt);
        s
    });
    let mut iterations = 0;
    let terms = loop {
        iterations += 1;
        let terms: [NonlinearTerms; 2] = [nonlinearity(model, &stages[0])?, nonlinearity(model, &stages[1])?];
        let next: [State; 2] = std::array::from_fn(|i| {
            let c = GAUSS_C[i];
            combine(c, &GAUSS_A[i], &terms, [(c - GAUSS_C[0]) * dt, (c - GAUSS_C[1]) * dt])
        });
        let change = metric(&next[0], &stages[0])?.max(metric(&next[1], &stages[1])?);
        stages = next;
        if change < tol {
            break [nonlinearity(model, &stages[0])?, nonlinearity(model, &stages[1])?];
        }
        if iterations >= max_iters {
            return Err(Error::StepSize { dt, iters: iterations, residual: change });
        }
    };
    let out = combine(1.0, &GAUSS_B, &terms, [(1.0 - GAUSS_C[0]) * dt, (1.0 - GAUSS_C[1]) * dt]);
    let state = State::new(out.psi, out.q, out.p)?;
    Ok(PicardStep { state, iterations })
}

const MAX_HALVINGS: u32 = 8;

fn advance(model: &Model, x: &State, dt: f64, cfg: &IntegratorConfig, depth: u32) -> Result<State> {
    let attempt = match cfg.scheme {
        Scheme::Strang => step_strang_with(model, x, dt, cfg.potential_step),
        Scheme::Picard => step_picard(model, x, dt, cfg.picard_tol, cfg.picard_max_iters).map(|s| s.state),
    };
    match attempt {
        Err(Error::StepSize { .. }) if depth < MAX_HALVINGS => {
            let mid = advance(model, x, 0.5 * dt, cfg, depth + 1)?;
            advance(model, &mid, 0.5 * dt, cfg, depth + 1)
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: State,
    pub energy: f64,
    pub charge: f64,
}

/// Conservation record of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    pub e0: f64,
    pub q0: f64,
    /// `max_t |E(t) − E(0)|` over all steps.
    pub max_energy: f64,
    /// `max_t |Q(t) − Q(0)|` over all steps.
    pub max_charge: f64,
}

impl Drift {
    pub fn relative_energy(&self) -> f64 {
        self.max_energy / self.e0.abs().max(f64::MIN_POSITIVE)
    }

    pub fn relative_charge(&self) -> f64 {
        self.max_charge / self.q0.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub drift: Drift,
}

/// Integrates to `t_end`, sampling every `sample_every` steps (and at the end).
pub fn evolve(model: &Model, x0: &State, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let mut samples = Vec::new();
    let drift = evolve_with(model, x0, cfg, |s| samples.push(s.clone()))?;
    Ok(Trajectory { samples, drift })
}

/// Like [`evolve`] but hands each sample to `observer` instead of storing it.
pub fn evolve_with<F: FnMut(&Sample)>(
    model: &Model,
    x0: &State,
    cfg: &IntegratorConfig,
    mut observer: F,
) -> Result<Drift> {
    cfg.validate()?;
    model.check_state(x0)?;
    let steps = cfg.steps()?;
    let e0 = model.energy(x0)?;
    let q0 = crate::field::charge(x0);
    let mut drift = Drift { e0, q0, max_energy: 0.0, max_charge: 0.0 };
    observer(&Sample { t: 0.0, state: x0.clone(), energy: e0, charge: q0 });
    let bound = cfg.blowup_tol * e0.max(1e-12);
    let mut x = x0.clone();
    for i in 1..=steps {
        x = advance(model, &x, cfg.dt, cfg, 0)?;
        let t = i as f64 * cfg.dt;
        let e = model.energy(&x)?;
        let q = crate::field::charge(&x);
        let de = (e - e0).abs();
        if !(de <= bound) {
            return Err(Error::BlowUp { t, drift: de });
        }
        drift.max_energy = drift.max_energy.max(de);
        drift.max_charge = drift.max_charge.max((q - q0).abs());
        if i % cfg.sample_every == 0 || i == steps {
            observer(&Sample { t, state: x.clone(), energy: e, charge: q });
        }
    }
    Ok(drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::make_band_limited_jellium;
    use crate::field::{charge, ModelParams};
    use crate::lattice::build_mode_set;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn model(e: f64) -> Model {
        let ms = build_mode_set(2, 8).unwrap();
        let sigma = make_band_limited_jellium(&ms, e, 1.0, 0.05, 42).unwrap();
        let params = ModelParams::new(e, 1.0, 2.0, 2).unwrap();
        Model::new(params, sigma, Arc::new(build_mode_set(2, 2).unwrap())).unwrap()
    }

    fn ground(model: &Model) -> State {
        let v = model.lattice().cell_count();
        let mut psi = vec![Complex64::new(0.0, 0.0); model.field_modes().len()];
        psi[model.field_modes().zero()] = Complex64::from_polar(1.0, 0.4);
        model.state(psi, vec![[0.2, 0.1, 1.9]; v], vec![[0.0; 3]; v]).unwrap()
    }

    fn perturbed(model: &Model, seed: u64, delta: f64) -> State {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = ground(model);
        for c in x.psi.coeffs_mut() {
            *c += delta * Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        for (q, p) in x.q.iter_mut().zip(x.p.iter_mut()) {
            for j in 0..3 {
                q[j] += delta * rng.random_range(-1.0..1.0);
                p[j] += delta * rng.random_range(-1.0..1.0);
            }
        }
        State::new(x.psi, x.q, x.p).unwrap()
    }

    #[test]
    fn ground_state_is_stationary() {
        let m = model(1.0);
        let s = ground(&m);
        let terms = nonlinearity(&m, &s).unwrap();
        assert!(sup_norm(terms.phi.coeffs()) < 1e-15);
        assert!(terms.force.iter().flatten().all(|f| f.abs() < 1e-14));
        for how in [PotentialStep::Midpoint, PotentialStep::GridPhase] {
            let y = step_strang_with(&m, &s, 1e-2, how).unwrap();
            let d = y.psi.sub(&s.psi).unwrap();
            assert!(sup_norm(d.coeffs()) < 1e-12);
        }
        let pc = step_picard(&m, &s, 1e-2, 1e-12, 10).unwrap();
        assert_eq!(pc.iterations, 1);
        assert!(metric(&pc.state, &s).unwrap() < 1e-12);
    }

    #[test]
    fn free_field_matches_exact_propagator() {
        // vanishing charge switches off every coupling
        let m = model(1e-300);
        let mut x = perturbed(&m, 1, 0.1);
        for p in x.p.iter_mut() {
            *p = [0.0; 3];
        }
        let t = 0.05;
        let mut y = x.clone();
        for _ in 0..5 {
            y = step_strang(&m, &y, t / 5.0).unwrap();
        }
        let pc = step_picard(&m, &x, t, 1e-13, 20).unwrap().state;
        for (i, c) in x.psi.coeffs().iter().enumerate() {
            let exact = c * Complex64::from_polar(1.0, -0.5 * m.field_modes().xi2(i) * t);
            assert!((y.psi.coeffs()[i] - exact).norm() < 1e-14);
            assert!((pc.psi.coeffs()[i] - exact).norm() < 1e-14);
        }
    }

    #[test]
    fn midpoint_substep_conserves_charge() {
        let m = model(1.0);
        let x = perturbed(&m, 2, 0.05);
        let y = step_strang_with(&m, &x, 1e-2, PotentialStep::Midpoint).unwrap();
        assert!((charge(&y) - charge(&x)).abs() < 1e-13 * charge(&x));
    }

    #[test]
    fn strang_and_picard_agree() {
        let m = model(1.0);
        let x = perturbed(&m, 3, 1e-2);
        let dt = 1e-3;
        let mut a = x.clone();
        let mut b = x.clone();
        for _ in 0..20 {
            a = step_strang(&m, &a, dt).unwrap();
            b = step_picard(&m, &b, dt, 1e-13, 50).unwrap().state;
        }
        assert!(metric(&a, &b).unwrap() < 1e-6);
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let m = model(1.0);
        let x = perturbed(&m, 4, 1e-2);
        let cfg = IntegratorConfig {
            dt: 1e-2,
            t_end: 0.5,
            sample_every: 50,
            potential_step: PotentialStep::Midpoint,
            ..Default::default()
        };
        let fwd = evolve(&m, &x, &cfg).unwrap();
        let back = evolve(&m, &fwd.samples.last().unwrap().state.time_reversed(), &cfg).unwrap();
        let end = back.samples.last().unwrap().state.time_reversed();
        assert!(metric(&end, &x).unwrap() < 1e-10);
    }

    #[test]
    fn config_validation() {
        let bad = IntegratorConfig { dt: 0.3, t_end: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig { dt: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!(IntegratorConfig { dt: 0.1, t_end: 1.0, ..Default::default() }.steps().unwrap(), 10);
    }

    #[test]
    fn evolve_is_deterministic() {
        let m = model(1.0);
        let x = perturbed(&m, 5, 1e-2);
        let cfg = IntegratorConfig { dt: 1e-2, t_end: 0.2, sample_every: 5, ..Default::default() };
        let a = evolve(&m, &x, &cfg).unwrap();
        let b = evolve(&m, &x, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 5);
        assert!(a.samples.windows(2).all(|w| w[0].t < w[1].t));
    }
}
