//! Distance to the solitary manifold and orbital-stability experiments.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{evolve_with, IntegratorConfig};
use crate::field::{charge, Model, ModelParams, State};
use crate::groundstate::periodic_ground_state;
use crate::hessian::{assemble_hessian, constrained_min_eig, Tangent};
use crate::lattice::LatticeSpec;
use crate::{Error, Result, Vec3};

/// Fraction of the Hessian bound that the empirical constant must reach.
pub const LOWER_BOUND_MARGIN: f64 = 0.4;

pub const DEFAULT_SCAN_DELTA: f64 = 1e-3;

pub const DEFAULT_SCAN_SAMPLES: usize = 200;

/// Slack factor on `√(E(X₀)/ν)` in the trajectory bound.
pub const TRAJECTORY_SLACK: f64 = 3.0;

/// Closest point `S_{α*,r*}` of the solitary manifold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldFit {
    pub alpha: f64,
    pub r: Vec3,
    /// Phase-space metric `‖ψ−ψ_α‖_{H¹} + |q−r̄|_torus + |p|`.
    pub distance: f64,
    /// Euclidean counterpart `(‖ψ−ψ_α‖²_{L²} + |q−r̄|² + |p|²)^{1/2}`, the norm
    /// the Hessian is taken in.
    pub norm_distance: f64,
}

/// Minimizer of `Σ_i d(v_i − r)²` over the circle `R/NZ`, d the circular difference.
///
/// The objective is a smooth quadratic between the antipodes `v_i + N/2` and has
/// concave kinks at them, so the minimum is the mean of the unwrapped values on
/// one of the arcs; every arc is tried.
pub fn circular_center(lattice: LatticeSpec, values: &[f64]) -> f64 {
    let n = lattice.n() as f64;
    let cost = |r: f64| values.iter().map(|&v| lattice.circular_diff(v, r).powi(2)).sum::<f64>();
    // circular mean as first candidate
    let (s, c) = values.iter().fold((0.0, 0.0), |(s, c), &v| {
        let a = 2.0 * PI * v / n;
        (s + a.sin(), c + a.cos())
    });
    let mut best = lattice.wrap(n * s.atan2(c) / (2.0 * PI));
    let mut best_cost = cost(best);
    let mut cuts: Vec<f64> = values.iter().map(|&v| lattice.wrap(v + 0.5 * n)).collect();
    cuts.sort_by(f64::total_cmp);
    for i in 0..cuts.len() {
        let next = if i + 1 < cuts.len() { cuts[i + 1] } else { cuts[0] + n };
        let mid = 0.5 * (cuts[i] + next);
        let mean = values.iter().map(|&v| mid + lattice.circular_diff(v, mid)).sum::<f64>() / values.len() as f64;
        let r = lattice.wrap(mean);
        let c = cost(r);
        if c < best_cost {
            best = r;
            best_cost = c;
        }
    }
    best
}

/// Minimizes `metric(X, S_{α,r})` over `α` and `r`. The ψ and q terms decouple:
/// `α* = arg c_ψ(0)` and each component of `r*` solves a circular least-squares problem.
pub fn distance_to_manifold(x: &State, params: &ModelParams) -> ManifoldFit {
    let lattice = x.lattice();
    let modes = x.psi.modes();
    let c0 = x.psi.coeffs()[modes.zero()];
    let alpha = if c0.norm() > 0.0 { c0.arg().rem_euclid(2.0 * PI) } else { 0.0 };
    let v = lattice.volume();
    let target = Complex64::from_polar(params.z.sqrt(), alpha);
    let mut h1 = 0.0;
    let mut l2 = 0.0;
    for (i, c) in x.psi.coeffs().iter().enumerate() {
        let d = if i == modes.zero() { c - target } else { *c };
        h1 += (1.0 + modes.xi2(i)) * d.norm_sqr();
        l2 += d.norm_sqr();
    }
    let r: Vec3 = std::array::from_fn(|j| {
        let comp: Vec<f64> = x.q.iter().map(|q| q[j]).collect();
        circular_center(lattice, &comp)
    });
    let tq: f64 = x
        .q
        .iter()
        .flat_map(|q| (0..3).map(move |j| lattice.circular_diff(q[j], r[j]).powi(2)))
        .sum();
    let tp: f64 = x.p.iter().flatten().map(|a| a * a).sum();
    ManifoldFit {
        alpha,
        r,
        distance: (v * h1).sqrt() + tq.sqrt() + tp.sqrt(),
        norm_distance: (v * l2 + tq + tp).sqrt(),
    }
}

/// Radial rescaling of ψ onto `‖ψ‖² = ZN³`.
pub fn normalize(model: &Model, x: &State) -> Result<State> {
    let q = charge(x);
    if !(q > 0.0) {
        return Err(Error::Domain("cannot normalize a vanishing field".into()));
    }
    let mut y = x.clone();
    let s = (model.params().z * model.lattice().volume() / q).sqrt();
    for c in y.psi.coeffs_mut() {
        *c *= s;
    }
    Ok(y)
}

/// Gaussian tangent at a periodic ground state, orthogonal to the manifold
/// directions and to the charge constraint, scaled to norm `delta`.
pub fn random_normal_tangent(model: &Model, delta: f64, rng: &mut ChaCha8Rng) -> Tangent {
    let modes = model.field_modes();
    let mut g = || -> f64 { StandardNormal.sample(rng) };
    let mut y = Tangent::zeros(modes);
    for (i, c) in y.phi.iter_mut().enumerate() {
        if i != modes.zero() {
            *c = Complex64::new(g(), g());
        }
    }
    for a in y.kappa.iter_mut().chain(y.pi.iter_mut()) {
        *a = [g(), g(), g()];
    }
    let cells = y.kappa.len() as f64;
    let mean: Vec3 = std::array::from_fn(|j| y.kappa.iter().map(|k| k[j]).sum::<f64>() / cells);
    for k in y.kappa.iter_mut() {
        for j in 0..3 {
            k[j] -= mean[j];
        }
    }
    let norm = y.norm(model.lattice());
    y.scaled(delta / norm)
}

/// `normalize(S + Y)` for a random normal tangent `Y` with `‖Y‖ = delta`, seeded.
pub fn perturbed_ground_state(model: &Model, s: &State, delta: f64, seed: u64) -> Result<State> {
    if delta == 0.0 {
        return Ok(s.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = random_normal_tangent(model, delta, &mut rng);
    normalize(model, &y.displace(s, 1.0)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    /// `min E(X) / d(X)²` with d the metric distance to the manifold.
    pub nu_emp: f64,
    /// `min E(X) / d(X)²` with d the Euclidean distance.
    pub nu_emp_norm: f64,
    /// Constrained minimal Hessian eigenvalue.
    pub nu_hessian: f64,
    /// Largest `(metric distance / norm distance)²` over the samples; converts
    /// a bound in one distance into the other.
    pub conversion: f64,
    /// Samples with `E/d² < 0.4 ν_hessian`.
    pub violations: usize,
    pub samples: usize,
    pub pass: bool,
}

/// Ratios `E(X)/d²` over samples `X = normalize(S + Y)`, `‖Y‖ = δ`.
pub fn lower_bound_scan(model: &Model, s: &State, delta: f64, samples: usize, seed: u64) -> Result<LowerBoundReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    let h = assemble_hessian(model, s)?;
    let nu_hessian = constrained_min_eig(&h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nu_emp = f64::INFINITY;
    let mut nu_emp_norm = f64::INFINITY;
    let mut conversion: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..samples {
        let y = random_normal_tangent(model, delta, &mut rng);
        let x = normalize(model, &y.displace(s, 1.0)?)?;
        let fit = distance_to_manifold(&x, model.params());
        let e = model.energy(&x)?;
        let ratio = e / fit.distance.powi(2);
        nu_emp = nu_emp.min(ratio);
        nu_emp_norm = nu_emp_norm.min(e / fit.norm_distance.powi(2));
        conversion = conversion.max((fit.distance / fit.norm_distance).powi(2));
        if ratio < LOWER_BOUND_MARGIN * nu_hessian {
            violations += 1;
        }
    }
    Ok(LowerBoundReport {
        nu_emp,
        nu_emp_norm,
        nu_hessian,
        conversion,
        violations,
        samples,
        pass: nu_hessian > 0.0 && nu_emp >= LOWER_BOUND_MARGIN * nu_hessian,
    })
}

/// Parameters of an orbital-stability run.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub delta: f64,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    /// Samples and perturbation size of the lower-bound scan that fixes ν.
    pub scan_samples: usize,
    pub scan_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilitySample {
    pub t: f64,
    pub fit: ManifoldFit,
    pub energy: f64,
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub samples: Vec<StabilitySample>,
    pub e0: f64,
    pub nu_emp: f64,
    pub sup_distance: f64,
    /// `3·√(E(X₀)/ν_emp)`.
    pub bound: f64,
    pub pass: bool,
}

/// Evolves `X₀ = normalize(S + Y)`, `‖Y‖ = δ`, from `S = S_{0,0}` and checks
/// `sup_t d(t) ≤ 3√(E(X₀)/ν_emp)`.
pub fn stability_experiment(model: &Model, cfg: &StabilityConfig) -> Result<StabilityReport> {
    if !(cfg.delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {}", cfg.delta)));
    }
    let s = periodic_ground_state(0.0, [0.0; 3], model)?;
    let scan = lower_bound_scan(model, &s, cfg.scan_delta, cfg.scan_samples, cfg.seed ^ 0x5ca1)?;
    let x0 = perturbed_ground_state(model, &s, cfg.delta, cfg.seed)?;
    run_from(model, &x0, scan.nu_emp, &cfg.integrator)
}

/// Tracks the manifold distance along the trajectory from `x0`.
pub fn run_from(model: &Model, x0: &State, nu_emp: f64, integrator: &IntegratorConfig) -> Result<StabilityReport> {
    let mut samples = Vec::new();
    let drift = evolve_with(model, x0, integrator, |smp| {
        samples.push(StabilitySample {
            t: smp.t,
            fit: distance_to_manifold(&smp.state, model.params()),
            energy: smp.energy,
            charge: smp.charge,
        });
    })?;
    let sup_distance = samples.iter().map(|s| s.fit.distance).fold(0.0, f64::max);
    let bound = TRAJECTORY_SLACK * (drift.e0.max(0.0) / nu_emp).sqrt();
    // an exact ground state must stay put to round-off
    let pass = sup_distance <= bound.max(1e-10);
    Ok(StabilityReport { samples, e0: drift.e0, nu_emp, sup_distance, bound, pass })
}
