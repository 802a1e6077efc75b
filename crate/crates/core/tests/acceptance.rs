//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use jellium::density::{
    check_jellium, designer_cutoff, make_band_limited_jellium, make_char_cube_power, sigma_matrix, IonDensity,
    DEFAULT_M_CUT, DESIGNER_BETA, DESIGNER_SEED,
};
use jellium::dynamics::{evolve, IntegratorConfig, Scheme};
use jellium::field::{metric, Model, ModelParams, DEFAULT_ION_MASS};
use jellium::groundstate::{make_ground_state, periodic_ground_state, verify_flat_density, IonArrangement};
use jellium::hessian::{
    assemble_hessian, constrained_min_eig, quadratic_form, spectrum, wiener_identity_check, Tangent, KERNEL_TOL,
};
use jellium::lattice::{build_mode_set, in_gamma1, LatticeSpec};
use jellium::stability::{
    lower_bound_scan, perturbed_ground_state, stability_experiment, StabilityConfig, DEFAULT_SCAN_DELTA,
    DEFAULT_SCAN_SAMPLES,
};

const N: usize = 2;

fn designer() -> IonDensity {
    let band = build_mode_set(N, designer_cutoff(N)).unwrap();
    make_band_limited_jellium(&band, 1.0, 1.0, DESIGNER_BETA, DESIGNER_SEED).unwrap()
}

fn sigma1() -> IonDensity {
    make_char_cube_power(N, 1, 1.0, 1.0).unwrap()
}

fn model(sigma: IonDensity, m: u32) -> Model {
    let params = ModelParams::new(sigma.e(), sigma.z(), DEFAULT_ION_MASS, N).unwrap();
    Model::new(params, sigma, Arc::new(build_mode_set(N, m).unwrap())).unwrap()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Unconstrained Gaussian tangent of unit Euclidean length.
fn random_tangent(m: &Model, rng: &mut ChaCha8Rng) -> Tangent {
    let mut y = Tangent::zeros(m.field_modes());
    for c in y.phi.iter_mut() {
        *c = Complex64::new(gauss(rng), gauss(rng));
    }
    for a in y.kappa.iter_mut().chain(y.pi.iter_mut()) {
        *a = [gauss(rng), gauss(rng), gauss(rng)];
    }
    let norm = y.norm(m.lattice());
    y.scaled(1.0 / norm)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

type Outcome = (bool, String);

fn ground_state_exactness() -> Outcome {
    let m = model(designer(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_e, mut worst_rho) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let alpha = rng.random_range(0.0..2.0 * PI);
        let r = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        let s = periodic_ground_state(alpha, r, &m).unwrap();
        worst_e = worst_e.max(m.energy(&s).unwrap().abs());
        let rho = m.assemble_rho(&s).unwrap();
        worst_rho = worst_rho.max(rho.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max));
    }
    (worst_e <= 1e-12 && worst_rho <= 1e-12, format!("max E = {worst_e:.3e}, max |c_rho| = {worst_rho:.3e}"))
}

fn flat_periodization() -> Outcome {
    let a = check_jellium(&sigma1(), 1e-10).unwrap();
    let b = check_jellium(&designer(), 1e-10).unwrap();
    let ok = a.flatness_deviation < 1e-10 && b.flatness_deviation < 1e-10;
    (ok, format!("sigma_1 {:.3e}, designer {:.3e}", a.flatness_deviation, b.flatness_deviation))
}

fn conservation() -> Outcome {
    let m = model(designer(), 2);
    let s = periodic_ground_state(0.0, [0.0; 3], &m).unwrap();
    let x = perturbed_ground_state(&m, &s, 1e-2, 3).unwrap();
    let run = |dt: f64| {
        let cfg = IntegratorConfig { dt, t_end: 10.0, sample_every: 100, ..Default::default() };
        evolve(&m, &x, &cfg).unwrap().drift
    };
    let full = run(1e-3);
    let half = run(5e-4);
    let (e1, q1, e2) = (full.relative_energy(), full.relative_charge(), half.relative_energy());
    let ratio = e1 / e2;
    (
        e1 <= 1e-6 && q1 <= 1e-8 && ratio >= 3.5,
        format!("E drift {e1:.3e}, Q drift {q1:.3e}, halving ratio {ratio:.2}"),
    )
}

fn integrator_cross_oracle() -> Outcome {
    let m = model(designer(), 2);
    let s = periodic_ground_state(0.4, [0.3, 0.1, 1.7], &m).unwrap();
    let x = perturbed_ground_state(&m, &s, 0.1, 11).unwrap();
    let last = |scheme| {
        let cfg = IntegratorConfig { scheme, dt: 1e-3, t_end: 0.1, sample_every: 100, ..Default::default() };
        evolve(&m, &x, &cfg).unwrap().samples.pop().unwrap().state
    };
    let d = metric(&last(Scheme::Strang), &last(Scheme::Picard)).unwrap();
    (d <= 1e-4, format!("metric distance at t = 0.1: {d:.3e}"))
}

fn hessian_three_routes() -> Outcome {
    let m = model(designer(), 2);
    let s = periodic_ground_state(0.9, [0.5, 1.2, 0.3], &m).unwrap();
    let h = assemble_hessian(&m, &s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let y = random_tangent(&m, &mut rng);
        let c = h.coords(&y);
        let matrix = h.half_form(&c);
        let form = quadratic_form(&m, &s, &y).unwrap();
        // central second differences, Richardson-extrapolated
        let e = |u: f64| m.energy(&y.displace(&s, u).unwrap()).unwrap();
        let d2 = |t: f64| (e(t) - 2.0 * e(0.0) + e(-t)) / (2.0 * t * t);
        let fd = (4.0 * d2(5e-4) - d2(1e-3)) / 3.0;
        worst = worst.max(rel(matrix, form)).max(rel(matrix, fd)).max(rel(form, fd));
    }
    (worst <= 1e-6, format!("worst relative disagreement {worst:.3e} over 50 directions"))
}

/// `|σ̂₁(ξ)|²/(eZ)²` from the closed form `Π_j sin(ξ_j/2)/(ξ_j/2)`.
fn sigma1_hat_sq(xi: [f64; 3]) -> f64 {
    xi.iter().map(|&x| if x == 0.0 { 1.0 } else { ((0.5 * x).sin() / (0.5 * x)).powi(2) }).product()
}

/// Kernel dimensions of Σ(θ) for σ₁, summed over θ ∈ Γ*_N \ Γ*_1, by direct summation.
fn brute_force_wiener_defect() -> usize {
    let lat = LatticeSpec::new(N).unwrap();
    let cut = 16i32;
    let mut total = 0;
    for t in (0..N as i32).flat_map(|a| (0..N as i32).flat_map(move |b| (0..N as i32).map(move |c| [a, b, c]))) {
        if in_gamma1(t, N) {
            continue;
        }
        let mut sigma = Matrix3::<f64>::zeros();
        for a in -cut..=cut {
            for b in -cut..=cut {
                for c in -cut..=cut {
                    let xi = lat.xi([t[0] + N as i32 * a, t[1] + N as i32 * b, t[2] + N as i32 * c]);
                    let v = Vector3::from(xi);
                    sigma += v * v.transpose() * (sigma1_hat_sq(xi) / v.norm_squared());
                }
            }
        }
        let eig = SymmetricEigen::new(sigma).eigenvalues;
        total += eig.iter().filter(|l| l.abs() <= 1e-10).count();
    }
    total
}

fn kernel_dimensions() -> Outcome {
    let dm = model(designer(), 2);
    let h = assemble_hessian(&dm, &periodic_ground_state(0.0, [0.0; 3], &dm).unwrap()).unwrap();
    let kd = spectrum(&h, KERNEL_TOL).unwrap().kernel_dim;
    let sm = model(sigma1(), 2);
    let h1 = assemble_hessian(&sm, &periodic_ground_state(0.0, [0.0; 3], &sm).unwrap()).unwrap();
    let k1 = spectrum(&h1, KERNEL_TOL).unwrap().kernel_dim;
    let d = brute_force_wiener_defect();
    (
        kd == 5 && d > 0 && k1 == 5 + d,
        format!("designer {kd}, sigma_1 {k1} = 5 + {} (brute force d = {d})", k1 as i64 - 5),
    )
}

fn wiener_identity() -> Outcome {
    let sigma = designer();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let kappa: Vec<[f64; 3]> = (0..N * N * N).map(|_| [gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)]).collect();
        let r = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        let (lhs, rhs) = wiener_identity_check(&sigma, &kappa, r, DEFAULT_M_CUT).unwrap();
        worst = worst.max(rel(lhs, rhs));
    }
    (worst <= 1e-10, format!("worst relative gap {worst:.3e} over 20 displacements"))
}

fn cubic_remainder() -> Outcome {
    let m = model(designer(), 2);
    let s = periodic_ground_state(0.0, [0.0; 3], &m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for _ in 0..10 {
        let y = random_tangent(&m, &mut rng);
        let q = quadratic_form(&m, &s, &y).unwrap();
        let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&t: &f64| ((m.energy(&y.displace(&s, t).unwrap()).unwrap() - t * t * q) / t.powi(3)).abs())
            .collect();
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max((hi - lo) / hi);
        peak = peak.max(hi);
    }
    (
        worst <= 0.2 && peak.is_finite(),
        format!("worst variation {:.1}% of |R(t)|/t^3, largest value {peak:.3e}", 100.0 * worst),
    )
}

fn lower_energy_estimate() -> Outcome {
    let m = model(designer(), 2);
    let s = periodic_ground_state(0.0, [0.0; 3], &m).unwrap();
    let r = lower_bound_scan(&m, &s, DEFAULT_SCAN_DELTA, DEFAULT_SCAN_SAMPLES, 17).unwrap();
    (
        r.pass,
        format!(
            "nu_emp {:.4e} vs 0.4 nu_hessian {:.4e} (Euclidean nu_emp {:.4e}), {} violations",
            r.nu_emp,
            0.4 * r.nu_hessian,
            r.nu_emp_norm,
            r.violations
        ),
    )
}

fn orbital_stability() -> Outcome {
    let m = model(designer(), 2);
    let cfg = StabilityConfig {
        delta: 1e-3,
        seed: 19,
        integrator: IntegratorConfig { dt: 1e-3, t_end: 50.0, sample_every: 10, ..Default::default() },
        scan_samples: DEFAULT_SCAN_SAMPLES,
        scan_delta: DEFAULT_SCAN_DELTA,
    };
    let r = stability_experiment(&m, &cfg).unwrap();
    (r.pass, format!("sup d = {:.6e}, bound = {:.6e}", r.sup_distance, r.bound))
}

fn non_periodic_ground_states() -> Outcome {
    let m = model(sigma1(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst_flat: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    let mut all = true;
    for _ in 0..5 {
        let tau: Vec<f64> = (0..N * N).map(|_| rng.random_range(-1.0..1.0)).collect();
        let arr = IonArrangement::Staircase { r: [0.2, 0.7, 0.1], tau };
        let rep = verify_flat_density(m.density(), &arr, 1e-10).unwrap();
        all &= rep.pass;
        worst_flat = worst_flat.max(rep.residual);
        match make_ground_state(0.5, &arr, &m, 1e-10) {
            Ok(s) => worst_e = worst_e.max(m.energy(&s).unwrap().abs()),
            Err(_) => all = false,
        }
    }
    let arr = IonArrangement::Staircase { r: [0.0; 3], tau: vec![0.0, 0.25, 0.5, 0.75] };
    let designer_rejects = !verify_flat_density(&designer(), &arr, 1e-10).unwrap().pass;
    (
        all && worst_e <= 1e-10 && designer_rejects,
        format!("sigma_1 residual {worst_flat:.3e}, energy {worst_e:.3e}; designer staircase rejected: {designer_rejects}"),
    )
}

fn degeneracy() -> Outcome {
    let sm = model(sigma1(), 2);
    let h = assemble_hessian(&sm, &periodic_ground_state(0.0, [0.0; 3], &sm).unwrap()).unwrap();
    let nu = constrained_min_eig(&h).unwrap();
    let norm = spectrum(&h, KERNEL_TOL).unwrap().norm;
    let sig = sigma_matrix(&sigma1(), [0, 1, 1], DEFAULT_M_CUT).unwrap();
    let e1 = (sig.matrix * Vector3::x()).norm();
    (
        nu.abs() <= KERNEL_TOL * norm && e1 <= 1e-12,
        format!("constrained nu {nu:.3e} (threshold {:.3e}), |Sigma(0,pi,pi) e1| = {e1:.3e}", KERNEL_TOL * norm),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("ground-state exactness", ground_state_exactness),
        ("flat periodization", flat_periodization),
        ("conservation", conservation),
        ("integrator cross-oracle", integrator_cross_oracle),
        ("hessian three-route agreement", hessian_three_routes),
        ("kernel dimensions", kernel_dimensions),
        ("wiener identity", wiener_identity),
        ("cubic remainder scaling", cubic_remainder),
        ("lower energy estimate", lower_energy_estimate),
        ("orbital stability", orbital_stability),
        ("non-periodic ground states", non_periodic_ground_states),
        ("degeneracy demonstration", degeneracy),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        println!(
            "{} {:>2}. {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!ok);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
