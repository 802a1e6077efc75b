//! Ion charge densities σ and the Jellium / Wiener audits.
//!
//! Two Fourier conventions are in play. Series coefficients
//! `c_σ(ξ) = N⁻³ ∫ σ(x) e^{-iξx} dx` give `σ = Σ c_σ(ξ) e^{iξx}`; the transform
//! `σ̂(ξ) = ∫ σ(x) e^{iξx} dx` is what the Jellium and Wiener conditions are
//! stated in. For real σ they are related by `σ̂(ξ) = N³ · conj(c_σ(ξ))`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::lattice::{brillouin_class, brillouin_points, in_gamma1, LatticeSpec, ModeSet};
use crate::{Error, Result, Vec3};

/// Relative tolerance (in units of `(eZ)²`) below which a Σ(θ) eigenvalue counts as zero.
pub const WIENER_KERNEL_TOL: f64 = 1e-10;

/// Smoothing parameter of the designer density.
pub const DESIGNER_BETA: f64 = 0.05;

pub const DESIGNER_SEED: u64 = 42;

/// Σ(θ) truncation radius used for analytic densities unless overridden.
pub const DEFAULT_M_CUT: u32 = 8;

/// Band cutoff `2N²` of the designer density.
pub fn designer_cutoff(n: usize) -> u32 {
    2 * (n * n) as u32
}

/// Dual-lattice cells scanned per axis when auditing analytic densities.
pub const ANALYTIC_SCAN_CELLS: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    /// Trigonometric polynomial with explicit series coefficients on `modes`.
    BandLimited {
        modes: Arc<ModeSet>,
        coeffs: Vec<Complex64>,
        beta: f64,
        seed: u64,
    },
    /// `σ_k = eZ·χ_k(x₁)χ_k(x₂)χ_k(x₃)` with `χ_k` the k-fold self-convolution of
    /// the unit-interval indicator.
    CharCubePower { power: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IonDensity {
    lattice: LatticeSpec,
    e: f64,
    z: f64,
    kind: DensityKind,
}

fn check_charge(e: f64, z: f64) -> Result<()> {
    if !(e > 0.0 && z > 0.0 && e.is_finite() && z.is_finite()) {
        return Err(Error::InvalidParameter(format!("charges must be positive (e = {e}, Z = {z})")));
    }
    Ok(())
}

fn lex_positive(k: [i32; 3]) -> bool {
    k > [0, 0, 0]
}

fn designer_phase(seed: u64, k: [i32; 3]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = |x: i32| (x as i64 + (1 << 20)) as u64;
    rng.set_stream((enc(k[0]) << 42) | (enc(k[1]) << 21) | enc(k[2]));
    2.0 * PI * rng.random::<f64>()
}

fn band_limited(
    modes: &ModeSet,
    e: f64,
    z: f64,
    beta: f64,
    seed: u64,
    impose_jellium: bool,
    random_phase: bool,
) -> Result<IonDensity> {
    check_charge(e, z)?;
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("decay beta must be positive, got {beta}")));
    }
    let n = modes.n();
    let amp = e * z / modes.lattice().volume();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); modes.len()];
    for (i, &k) in modes.modes().iter().enumerate() {
        if k == [0, 0, 0] {
            coeffs[i] = Complex64::new(amp, 0.0);
        } else if lex_positive(k) {
            if impose_jellium && in_gamma1(k, n) {
                continue;
            }
            let phase = if random_phase { designer_phase(seed, k) } else { 0.0 };
            let c = Complex64::from_polar(amp * (-beta * modes.xi2(i)).exp(), phase);
            coeffs[i] = c;
            coeffs[modes.negated(i)] = c.conj();
        }
    }
    Ok(IonDensity {
        lattice: modes.lattice(),
        e,
        z,
        kind: DensityKind::BandLimited { modes: Arc::new(modes.clone()), coeffs, beta, seed },
    })
}

/// Band-limited density with `c_σ(0) = eZ/N³`, exact zeros on `Γ*_1 \ 0` and
/// `c_σ(ξ) = (eZ/N³)·e^{-β|ξ|²}·e^{iφ(seed,k)}` elsewhere on `modes`.
pub fn make_band_limited_jellium(modes: &ModeSet, e: f64, z: f64, beta: f64, seed: u64) -> Result<IonDensity> {
    band_limited(modes, e, z, beta, seed, true, true)
}

/// Gaussian coefficients on every mode, with no Jellium zeros imposed.
pub fn make_band_limited_gaussian(modes: &ModeSet, e: f64, z: f64, beta: f64) -> Result<IonDensity> {
    band_limited(modes, e, z, beta, 0, false, false)
}

pub fn make_char_cube_power(n: usize, power: u32, e: f64, z: f64) -> Result<IonDensity> {
    check_charge(e, z)?;
    if power == 0 {
        return Err(Error::InvalidParameter("cube power k must be >= 1".into()));
    }
    Ok(IonDensity {
        lattice: LatticeSpec::new(n)?,
        e,
        z,
        kind: DensityKind::CharCubePower { power },
    })
}

/// `[2 sin(s/2)/s]^k` at `s = (2π/N)·kj`, with exact zeros at nonzero multiples of 2π.
fn chi_hat(kj: i32, n: usize, power: u32) -> f64 {
    if kj == 0 {
        return 1.0;
    }
    if kj.rem_euclid(n as i32) == 0 {
        return 0.0;
    }
    let s = 2.0 * PI * kj as f64 / n as f64;
    (2.0 * (0.5 * s).sin() / s).powi(power as i32)
}

/// Transform-convention value `σ̂(ξ)` at `ξ = (2π/N)k`.
pub fn eval_sigma_hat(sigma: &IonDensity, k: [i32; 3]) -> Result<Complex64> {
    sigma.sigma_hat(k)
}

/// Centered cardinal B-spline of order `k`, support `[-k/2, k/2)`.
fn cardinal_bspline(x: f64, k: u32) -> f64 {
    let kf = k as f64;
    if x < -0.5 * kf || x >= 0.5 * kf {
        return 0.0;
    }
    if k == 1 {
        return 1.0;
    }
    let mut fact = 1.0;
    for i in 1..k {
        fact *= i as f64;
    }
    let mut binom = 1.0;
    let mut acc = 0.0;
    for j in 0..=k {
        let t = x + 0.5 * kf - j as f64;
        if t > 0.0 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * t.powi(k as i32 - 1);
        }
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    acc / fact
}

impl IonDensity {
    /// Band-limited density from explicit coefficients, e.g. read from a file.
    pub fn from_coefficients(
        modes: &ModeSet,
        e: f64,
        z: f64,
        beta: f64,
        seed: u64,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        check_charge(e, z)?;
        if coeffs.len() != modes.len() {
            return Err(Error::Format(format!(
                "expected {} coefficients, found {}",
                modes.len(),
                coeffs.len()
            )));
        }
        let scale = e * z / modes.lattice().volume();
        for i in 0..modes.len() {
            let j = modes.negated(i);
            if (coeffs[i] - coeffs[j].conj()).norm() > 1e-12 * scale {
                return Err(Error::Format(format!("coefficients at {:?} are not Hermitian", modes.mode(i))));
            }
        }
        let c0 = coeffs[modes.zero()];
        if (c0 - Complex64::new(scale, 0.0)).norm() > 1e-12 * scale {
            return Err(Error::Format(format!("zero mode {c0} does not carry the total charge eZ")));
        }
        Ok(Self {
            lattice: modes.lattice(),
            e,
            z,
            kind: DensityKind::BandLimited { modes: Arc::new(modes.clone()), coeffs, beta, seed },
        })
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn lattice(&self) -> LatticeSpec {
        self.lattice
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Total ion charge per cell, `eZ`.
    pub fn total_charge(&self) -> f64 {
        self.e * self.z
    }

    /// Mode cutoff of a band-limited density; `None` for analytic families.
    pub fn band_cutoff(&self) -> Option<u32> {
        match &self.kind {
            DensityKind::BandLimited { modes, .. } => Some(modes.cutoff()),
            DensityKind::CharCubePower { .. } => None,
        }
    }

    /// Same density with every coefficient multiplied by `factor` (total charge included).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = self.clone();
        out.z *= factor;
        check_charge(out.e, out.z)?;
        if let DensityKind::BandLimited { coeffs, .. } = &mut out.kind {
            for c in coeffs.iter_mut() {
                *c *= factor;
            }
        }
        Ok(out)
    }

    /// Series coefficient `c_σ(ξ)`; errors outside the band of a band-limited density.
    pub fn series_coeff(&self, k: [i32; 3]) -> Result<Complex64> {
        match &self.kind {
            DensityKind::BandLimited { modes, coeffs, .. } => modes
                .index_of(k)
                .map(|i| coeffs[i])
                .ok_or(Error::OutOfBand { k }),
            DensityKind::CharCubePower { .. } => Ok(self.analytic_hat(k) / self.lattice.volume()),
        }
    }

    /// Series coefficient, taking the band-limited density to vanish outside its band.
    pub fn series_coeff_or_zero(&self, k: [i32; 3]) -> Complex64 {
        self.series_coeff(k).unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Transform `σ̂(ξ) = ∫ e^{iξx} σ(x) dx`.
    pub fn sigma_hat(&self, k: [i32; 3]) -> Result<Complex64> {
        match &self.kind {
            DensityKind::BandLimited { .. } => Ok(self.series_coeff(k)?.conj() * self.lattice.volume()),
            DensityKind::CharCubePower { .. } => Ok(self.analytic_hat(k)),
        }
    }

    fn analytic_hat(&self, k: [i32; 3]) -> Complex64 {
        let DensityKind::CharCubePower { power } = self.kind else {
            unreachable!("analytic_hat on a band-limited density")
        };
        let n = self.lattice.n();
        let v = self.total_charge() * k.iter().map(|&kj| chi_hat(kj, n, power)).product::<f64>();
        Complex64::new(v, 0.0)
    }

    /// Point value σ(x) on the torus. The imaginary part is a reality diagnostic
    /// for band-limited densities and exactly zero for analytic ones.
    pub fn value_at(&self, x: Vec3) -> Complex64 {
        match &self.kind {
            DensityKind::BandLimited { modes, coeffs, .. } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, c) in coeffs.iter().enumerate() {
                    let xi = modes.xi(i);
                    let ph = xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2];
                    acc += c * Complex64::from_polar(1.0, ph);
                }
                acc
            }
            DensityKind::CharCubePower { power } => {
                let power = *power;
                // periodize over the torus images that can reach the support
                let n = self.lattice.n() as f64;
                let reach = (0.5 * power as f64 / n).ceil() as i32 + 1;
                let mut prod = self.total_charge();
                for &xj in x.iter() {
                    let xj = self.lattice.wrap(xj);
                    let mut s = 0.0;
                    for m in -reach..=reach {
                        s += cardinal_bspline(xj + n * m as f64, power);
                    }
                    prod *= s;
                }
                Complex64::new(prod, 0.0)
            }
        }
    }

    /// Wave vectors (integer form) used by audits: the band of a band-limited
    /// density, or the box `|k_j| ≤ cells·N` for analytic families.
    pub(crate) fn audit_modes(&self, cells: i32) -> Vec<[i32; 3]> {
        match &self.kind {
            DensityKind::BandLimited { modes, .. } => modes.modes().to_vec(),
            DensityKind::CharCubePower { .. } => {
                let b = cells * self.lattice.n() as i32;
                let mut out = Vec::new();
                for a in -b..=b {
                    for c in -b..=b {
                        for d in -b..=b {
                            out.push([a, c, d]);
                        }
                    }
                }
                out
            }
        }
    }

    /// Collocation grid used to sample real-space identities.
    fn audit_grid(&self) -> usize {
        match &self.kind {
            DensityKind::BandLimited { modes, .. } => modes.grid_dims()[0],
            // odd spacing keeps grid points off the cube faces of σ₁
            DensityKind::CharCubePower { .. } => 4 * self.lattice.n() + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JelliumReport {
    pub pass: bool,
    /// `max |σ̂(ξ)| / eZ` over `Γ*_1 \ 0`.
    pub worst_violation: f64,
    pub worst_k: Option<[i32; 3]>,
    /// `max_x |Σ_n σ(x-n) − eZ| / eZ` on the collocation grid.
    pub flatness_deviation: f64,
    /// `max_x |Im σ(x)| / eZ` on the grid.
    pub imag_residual: f64,
}

pub fn check_jellium(sigma: &IonDensity, tol: f64) -> Result<JelliumReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let n = sigma.lattice.n();
    let ez = sigma.total_charge();
    let mut worst = 0.0;
    let mut worst_k = None;
    for k in sigma.audit_modes(ANALYTIC_SCAN_CELLS) {
        if k != [0, 0, 0] && in_gamma1(k, n) {
            let v = sigma.sigma_hat(k)?.norm() / ez;
            if v > worst || worst_k.is_none() {
                worst = v;
                worst_k = Some(k);
            }
        }
    }

    let g = sigma.audit_grid();
    let h = n as f64 / g as f64;
    let sites = sigma.lattice.sites();
    let mut flat: f64 = 0.0;
    let mut imag: f64 = 0.0;
    for a in 0..g {
        for b in 0..g {
            for c in 0..g {
                let x = [a as f64 * h, b as f64 * h, c as f64 * h];
                let mut total = Complex64::new(0.0, 0.0);
                for s in &sites {
                    let v = sigma.value_at([x[0] - s[0] as f64, x[1] - s[1] as f64, x[2] - s[2] as f64]);
                    imag = imag.max(v.im.abs() / ez);
                    total += v;
                }
                flat = flat.max((total.re - ez).abs() / ez);
            }
        }
    }
    Ok(JelliumReport {
        pass: worst <= tol,
        worst_violation: worst,
        worst_k,
        flatness_deviation: flat,
        imag_residual: imag,
    })
}

/// The Wiener matrix Σ(θ) at one Brillouin point. It is real symmetric: each
/// term `ξ⊗ξ/|ξ|² |σ̂(ξ)|²` is real.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaMatrix {
    pub theta: [i32; 3],
    pub matrix: Matrix3<f64>,
    /// Truncation radius for analytic families; `None` when the sum is exact.
    pub m_cut: Option<u32>,
}

impl SigmaMatrix {
    pub fn exact(&self) -> bool {
        self.m_cut.is_none()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2]]
    }
}

pub fn sigma_matrix(sigma: &IonDensity, theta: [i32; 3], m_cut: u32) -> Result<SigmaMatrix> {
    let lattice = sigma.lattice;
    let n = lattice.n();
    if in_gamma1(theta, n) {
        return Err(Error::Domain(format!("Σ(θ) is undefined for θ = {theta:?} in 2πZ³")));
    }
    let class = brillouin_class(theta, n);
    let mut acc = Matrix3::zeros();
    let mut add = |k: [i32; 3], hat: Complex64| {
        let xi = lattice.xi(k);
        let x2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        let w = hat.norm_sqr() / x2;
        for r in 0..3 {
            for c in 0..3 {
                acc[(r, c)] += w * xi[r] * xi[c];
            }
        }
    };
    match &sigma.kind {
        DensityKind::BandLimited { modes, coeffs, .. } => {
            for (i, &k) in modes.modes().iter().enumerate() {
                if brillouin_class(k, n) == class {
                    add(k, coeffs[i].conj() * lattice.volume());
                }
            }
            Ok(SigmaMatrix { theta, matrix: acc, m_cut: None })
        }
        DensityKind::CharCubePower { .. } => {
            if m_cut == 0 {
                return Err(Error::InvalidParameter("M_cut must be >= 1 for analytic densities".into()));
            }
            let m = m_cut as i32;
            let ni = n as i32;
            for a in -m..=m {
                for b in -m..=m {
                    for c in -m..=m {
                        let k = [theta[0] + ni * a, theta[1] + ni * b, theta[2] + ni * c];
                        add(k, sigma.analytic_hat(k));
                    }
                }
            }
            Ok(SigmaMatrix { theta, matrix: acc, m_cut: Some(m_cut) })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WienerEntry {
    pub theta: [i32; 3],
    pub min_eigenvalue: f64,
    pub kernel_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WienerReport {
    pub pass: bool,
    pub entries: Vec<WienerEntry>,
    /// Smallest eigenvalue over all scanned θ (`+∞` when nothing is scanned).
    pub global_min: f64,
    /// Summed kernel dimensions, the real dimension of the degenerate subspace V.
    pub kernel_dim: usize,
    /// Largest eigenvalue change (relative to `(eZ)²`) when `M_cut` is doubled;
    /// only computed for analytic densities.
    pub tail_change: Option<f64>,
}

pub fn check_wiener(sigma: &IonDensity, m_cut: u32) -> Result<WienerReport> {
    check_wiener_with_tol(sigma, m_cut, WIENER_KERNEL_TOL)
}

pub fn check_wiener_with_tol(sigma: &IonDensity, m_cut: u32, tol: f64) -> Result<WienerReport> {
    let bz = brillouin_points(sigma.lattice.n())?;
    let thetas: Vec<[i32; 3]> = bz.outside_gamma1().map(|p| p.k).collect();
    let scale = sigma.total_charge().powi(2);
    let threshold = tol * scale;

    let spectra: Vec<[f64; 3]> = thetas
        .par_iter()
        .map(|&t| sigma_matrix(sigma, t, m_cut).map(|s| s.eigenvalues()))
        .collect::<Result<_>>()?;

    let entries: Vec<WienerEntry> = thetas
        .iter()
        .zip(&spectra)
        .map(|(&theta, ev)| WienerEntry {
            theta,
            min_eigenvalue: ev[0],
            kernel_dim: ev.iter().filter(|&&l| l <= threshold).count(),
        })
        .collect();
    let global_min = entries.iter().map(|e| e.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let kernel_dim = entries.iter().map(|e| e.kernel_dim).sum();

    let tail_change = match sigma.kind {
        DensityKind::CharCubePower { .. } if !thetas.is_empty() => {
            let doubled: Vec<[f64; 3]> = thetas
                .par_iter()
                .map(|&t| sigma_matrix(sigma, t, 2 * m_cut).map(|s| s.eigenvalues()))
                .collect::<Result<_>>()?;
            let change = spectra
                .iter()
                .zip(&doubled)
                .flat_map(|(a, b)| (0..3).map(move |i| (a[i] - b[i]).abs()))
                .fold(0.0, f64::max);
            Some(change / scale)
        }
        _ => None,
    };

    Ok(WienerReport {
        pass: global_min > threshold,
        entries,
        global_min,
        kernel_dim,
        tail_change,
    })
}
