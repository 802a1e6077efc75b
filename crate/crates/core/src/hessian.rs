//! The energy Hessian `E″(S)` at a periodic ground state.
//!
//! Tangent vectors `Y = (φ, κ, π)` are expanded in a real orthonormal basis:
//! for each block of the field (`φ₁ = Re φ`, `φ₂ = Im φ`) the functions
//! `N^{-3/2}`, `√(2/N³) cos(ξx)` and `√(2/N³) sin(ξx)` over lexicographically
//! positive modes; then the `3N³` ion displacements and the `3N³` momenta.
//! The matrix is assembled at `S_{0,0}`; tangents at `S_{α,r}` are carried
//! there by the symmetry `ψ ↦ e^{−iα}ψ(· + r)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::density::{sigma_matrix, DensityKind, IonDensity};
use crate::field::{Model, State};
use crate::lattice::{brillouin_points, LatticeSpec, ModeSet};
use crate::{Error, Result, Vec3};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default kernel tolerance relative to the spectral norm.
pub const KERNEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Const,
    Cos,
    Sin,
}

/// A tangent vector `(φ, κ, π)` with φ on the field modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub phi: Vec<Complex64>,
    pub kappa: Vec<Vec3>,
    pub pi: Vec<Vec3>,
}

impl Tangent {
    pub fn zeros(modes: &ModeSet) -> Self {
        let v = modes.lattice().cell_count();
        Self { phi: vec![ZERO; modes.len()], kappa: vec![[0.0; 3]; v], pi: vec![[0.0; 3]; v] }
    }

    /// `X + tY`, with displacements reduced mod N.
    pub fn displace(&self, x: &State, t: f64) -> Result<State> {
        let mut y = x.clone();
        for (c, d) in y.psi.coeffs_mut().iter_mut().zip(&self.phi) {
            *c += t * d;
        }
        for n in 0..y.q.len() {
            for j in 0..3 {
                y.q[n][j] += t * self.kappa[n][j];
                y.p[n][j] += t * self.pi[n][j];
            }
        }
        State::new(y.psi, y.q, y.p)
    }

    /// Euclidean norm in the orthonormal basis: `(‖φ‖²_{L²} + |κ|² + |π|²)^{1/2}`.
    pub fn norm(&self, lattice: LatticeSpec) -> f64 {
        let f: f64 = self.phi.iter().map(|c| c.norm_sqr()).sum::<f64>() * lattice.volume();
        let k: f64 = self.kappa.iter().chain(&self.pi).flatten().map(|x| x * x).sum();
        (f + k).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            phi: self.phi.iter().map(|c| c * s).collect(),
            kappa: self.kappa.iter().map(|a| a.map(|x| x * s)).collect(),
            pi: self.pi.iter().map(|a| a.map(|x| x * s)).collect(),
        }
    }
}

/// Parameters `(α, r)` of a periodic ground state, or an error if `s` is not one.
pub fn ground_state_parameters(model: &Model, s: &State) -> Result<(f64, Vec3)> {
    let modes = model.field_modes();
    let z = model.params().z;
    let c0 = s.psi.coeffs()[modes.zero()];
    let off = s
        .psi
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != modes.zero())
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max);
    if off > 1e-12 * z.sqrt() || (c0.norm() - z.sqrt()).abs() > 1e-12 * z.sqrt() {
        return Err(Error::InvalidExpansionPoint("ψ is not a constant of modulus √Z".into()));
    }
    if s.p.iter().flatten().any(|x| *x != 0.0) {
        return Err(Error::InvalidExpansionPoint("ions are not at rest".into()));
    }
    let lattice = model.lattice();
    let r = s.q[0];
    let spread = crate::field::torus_distance(lattice, &s.q, &vec![r; s.q.len()]);
    if spread > 1e-12 {
        return Err(Error::InvalidExpansionPoint("ion arrangement is not periodic".into()));
    }
    let e = model.energy(s)?;
    if e > 1e-10 {
        return Err(Error::InvalidExpansionPoint(format!("energy {e:e} is not zero; is σ Jellium?")));
    }
    Ok((c0.arg().rem_euclid(2.0 * PI), r))
}

/// Real symmetric matrix of `E″(S)` with its basis bookkeeping.
#[derive(Debug, Clone)]
pub struct HessianOperator {
    matrix: DMatrix<f64>,
    modes: Arc<ModeSet>,
    basis: Vec<(usize, BasisKind)>,
    alpha: f64,
    r: Vec3,
}

fn field_basis(modes: &ModeSet) -> Vec<(usize, BasisKind)> {
    let mut out = Vec::with_capacity(modes.len());
    for (i, &k) in modes.modes().iter().enumerate() {
        if k == [0, 0, 0] {
            out.push((i, BasisKind::Const));
        } else if k > [0, 0, 0] {
            out.push((i, BasisKind::Cos));
            out.push((i, BasisKind::Sin));
        }
    }
    out
}

impl HessianOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn basis(&self) -> &[(usize, BasisKind)] {
        &self.basis
    }

    /// Ground-state parameters `(α, r)` of the expansion point.
    pub fn expansion_point(&self) -> (f64, Vec3) {
        (self.alpha, self.r)
    }

    fn nb(&self) -> usize {
        self.basis.len()
    }

    pub fn psi1_index(&self, b: usize) -> usize {
        b
    }

    pub fn psi2_index(&self, b: usize) -> usize {
        self.nb() + b
    }

    pub fn q_index(&self, n: usize, j: usize) -> usize {
        2 * self.nb() + 3 * n + j
    }

    pub fn p_index(&self, n: usize, j: usize) -> usize {
        2 * self.nb() + 3 * self.modes.lattice().cell_count() + 3 * n + j
    }

    /// `max |H − Hᵀ|`.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    /// Orthonormal-basis coordinates of a tangent at the expansion point.
    pub fn coords(&self, y: &Tangent) -> DVector<f64> {
        let v = self.modes.lattice().volume();
        let cells = self.modes.lattice().cell_count();
        let rot = Complex64::from_polar(1.0, -self.alpha);
        // carry φ to the frame of S_{0,0}
        let phi: Vec<Complex64> = (0..self.modes.len())
            .map(|i| {
                let xi = self.modes.xi(i);
                let ph = xi[0] * self.r[0] + xi[1] * self.r[1] + xi[2] * self.r[2];
                rot * Complex64::from_polar(1.0, ph) * y.phi[i]
            })
            .collect();
        let mut out = DVector::zeros(self.dim());
        for (b, &(i, kind)) in self.basis.iter().enumerate() {
            let j = self.modes.negated(i);
            // series of Re φ and Im φ at ±ξ
            let re = |a: usize, c: usize| 0.5 * (phi[a] + phi[c].conj());
            let im = |a: usize, c: usize| (phi[a] - phi[c].conj()) / Complex64::new(0.0, 2.0);
            let project = |fp: Complex64, fm: Complex64| match kind {
                BasisKind::Const => v.sqrt() * fp.re,
                BasisKind::Cos => ((v / 2.0).sqrt() * (fp + fm)).re,
                BasisKind::Sin => ((v / 2.0).sqrt() * Complex64::i() * (fp - fm)).re,
            };
            out[self.psi1_index(b)] = project(re(i, j), re(j, i));
            out[self.psi2_index(b)] = project(im(i, j), im(j, i));
        }
        for n in 0..cells {
            for d in 0..3 {
                out[self.q_index(n, d)] = y.kappa[n][d];
                out[self.p_index(n, d)] = y.pi[n][d];
            }
        }
        out
    }

    /// Tangent at the expansion point with the given coordinates.
    pub fn tangent(&self, c: &DVector<f64>) -> Tangent {
        let v = self.modes.lattice().volume();
        let cells = self.modes.lattice().cell_count();
        let mut t = Tangent::zeros(&self.modes);
        let a = 1.0 / (2.0 * v).sqrt();
        for (b, &(i, kind)) in self.basis.iter().enumerate() {
            let j = self.modes.negated(i);
            let w = Complex64::new(c[self.psi1_index(b)], c[self.psi2_index(b)]);
            match kind {
                BasisKind::Const => t.phi[i] += w / v.sqrt(),
                BasisKind::Cos => {
                    t.phi[i] += w * a;
                    t.phi[j] += w * a;
                }
                BasisKind::Sin => {
                    t.phi[i] += w * Complex64::new(0.0, -a);
                    t.phi[j] += w * Complex64::new(0.0, a);
                }
            }
        }
        let rot = Complex64::from_polar(1.0, self.alpha);
        for i in 0..self.modes.len() {
            let xi = self.modes.xi(i);
            let ph = xi[0] * self.r[0] + xi[1] * self.r[1] + xi[2] * self.r[2];
            t.phi[i] *= rot * Complex64::from_polar(1.0, -ph);
        }
        for n in 0..cells {
            for d in 0..3 {
                t.kappa[n][d] = c[self.q_index(n, d)];
                t.pi[n][d] = c[self.p_index(n, d)];
            }
        }
        t
    }

    /// `½ yᵀ H y`.
    pub fn half_form(&self, y: &DVector<f64>) -> f64 {
        0.5 * y.dot(&(&self.matrix * y))
    }

    /// Coordinates of the five symmetry directions: `iψ` constant, `ψ₁` constant
    /// (charge constraint) and the three uniform ion shifts.
    pub fn constrained_directions(&self) -> Vec<DVector<f64>> {
        let cells = self.modes.lattice().cell_count();
        let zero = self.basis.iter().position(|&(_, k)| k == BasisKind::Const).expect("constant mode");
        let mut out = Vec::new();
        for idx in [self.psi1_index(zero), self.psi2_index(zero)] {
            let mut u = DVector::zeros(self.dim());
            u[idx] = 1.0;
            out.push(u);
        }
        for d in 0..3 {
            let mut u = DVector::zeros(self.dim());
            for n in 0..cells {
                u[self.q_index(n, d)] = 1.0 / (cells as f64).sqrt();
            }
            out.push(u);
        }
        out
    }
}

/// Assembles `E″(S)` block by block:
/// `ψ₁ψ₁ = −Δ + 4e²Z·G`, `ψ₂ψ₂ = −Δ`, `ψ₁q = 2e√Z⟨b, G∂_jσ(·−n)⟩`,
/// `qq = N³ Σ_{ξ≠0} |c_σ|² ξ_jξ_l/|ξ|² cos ξ(n−n′)`, `pp = 1/M`.
pub fn assemble_hessian(model: &Model, s: &State) -> Result<HessianOperator> {
    let (alpha, r) = ground_state_parameters(model, s)?;
    let modes = model.field_modes().clone();
    let charge = model.charge_modes();
    let lattice = model.lattice();
    let v = lattice.volume();
    let cells = lattice.cell_count();
    let sites = lattice.sites();
    let prm = model.params();
    let sigma = model.sigma_coeffs();
    let basis = field_basis(&modes);
    let nb = basis.len();
    let dim = 2 * nb + 6 * cells;
    let mut h = HessianOperator { matrix: DMatrix::zeros(dim, dim), modes: modes.clone(), basis, alpha, r };

    for (b, &(i, kind)) in h.basis.clone().iter().enumerate() {
        let x2 = modes.xi2(i);
        if kind != BasisKind::Const {
            h.matrix[(b, b)] = x2 + 4.0 * prm.e * prm.e * prm.z / x2;
            h.matrix[(nb + b, nb + b)] = x2;
        }
    }

    // ψ₁–q coupling
    let fic = model.field_in_charge();
    let site_phase = |xi: Vec3, n: usize| {
        let s = sites[n];
        Complex64::from_polar(1.0, -(xi[0] * s[0] as f64 + xi[1] * s[1] as f64 + xi[2] * s[2] as f64))
    };
    let coupling = 2.0 * prm.e * prm.z.sqrt();
    for (b, &(i, kind)) in h.basis.clone().iter().enumerate() {
        if kind == BasisKind::Const {
            continue;
        }
        let j = modes.negated(i);
        for n in 0..cells {
            for d in 0..3 {
                let g = |m: usize| {
                    let xi = modes.xi(m);
                    Complex64::i() * xi[d] * sigma[fic[m]] * site_phase(xi, n) / modes.xi2(m)
                };
                let val = match kind {
                    BasisKind::Cos => ((v / 2.0).sqrt() * (g(i) + g(j))).re,
                    BasisKind::Sin => ((v / 2.0).sqrt() * Complex64::i() * (g(i) - g(j))).re,
                    BasisKind::Const => unreachable!(),
                };
                let col = h.q_index(n, d);
                h.matrix[(b, col)] = coupling * val;
                h.matrix[(col, b)] = coupling * val;
            }
        }
    }

    // ion–ion block, a function of n − n′ only
    for n in 0..cells {
        for m in 0..cells {
            let dn: Vec3 = std::array::from_fn(|d| sites[n][d] as f64 - sites[m][d] as f64);
            let mut t = [[0.0; 3]; 3];
            for (k, c) in sigma.iter().enumerate() {
                let x2 = charge.xi2(k);
                if x2 == 0.0 || c.norm_sqr() == 0.0 {
                    continue;
                }
                let xi = charge.xi(k);
                let w = v * c.norm_sqr() / x2 * (xi[0] * dn[0] + xi[1] * dn[1] + xi[2] * dn[2]).cos();
                for a in 0..3 {
                    for b in 0..3 {
                        t[a][b] += w * xi[a] * xi[b];
                    }
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    let (ra, cb) = (h.q_index(n, a), h.q_index(m, b));
                    h.matrix[(ra, cb)] = t[a][b];
                }
            }
        }
    }
    // the ξ ↔ −ξ pairing makes T symmetric; enforce it exactly
    let sym = 0.5 * (&h.matrix + h.matrix.transpose());
    h.matrix = sym;

    for n in 0..cells {
        for d in 0..3 {
            let k = h.p_index(n, d);
            h.matrix[(k, k)] = 1.0 / prm.mass;
        }
    }
    Ok(h)
}

/// Series coefficients of `ρ⁽¹⁾ = σ⁽¹⁾ − 2e Re(conj(ψ_α)φ)` on the charge modes, where
/// `c_{σ⁽¹⁾}(ξ) = −i c_σ(ξ) e^{−iξr} ξ·Σ_n κ(n) e^{−iξn}`.
pub fn first_order_density(model: &Model, s: &State, y: &Tangent) -> Result<Vec<Complex64>> {
    let (alpha, r) = ground_state_parameters(model, s)?;
    let charge = model.charge_modes();
    let field = model.field_modes();
    let sites = model.lattice().sites();
    let prm = model.params();
    let sigma = model.sigma_coeffs();
    let rot = Complex64::from_polar(1.0, -alpha);
    let phi_at = |k: [i32; 3]| field.index_of(k).map_or(ZERO, |i| y.phi[i]);
    Ok(charge
        .modes()
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let xi = charge.xi(i);
            let mut kx = ZERO;
            for (n, s) in sites.iter().enumerate() {
                let dot = xi[0] * y.kappa[n][0] + xi[1] * y.kappa[n][1] + xi[2] * y.kappa[n][2];
                let ph = xi[0] * s[0] as f64 + xi[1] * s[1] as f64 + xi[2] * s[2] as f64;
                kx += dot * Complex64::from_polar(1.0, -ph);
            }
            let shift = Complex64::from_polar(1.0, -(xi[0] * r[0] + xi[1] * r[1] + xi[2] * r[2]));
            let s1 = -Complex64::i() * sigma[i] * shift * kx;
            let minus = [-k[0], -k[1], -k[2]];
            let el = prm.e * prm.z.sqrt() * (rot * phi_at(k) + (rot * phi_at(minus)).conj());
            s1 - el
        })
        .collect())
}

/// `½⟨Y, E″(S)Y⟩ = ½∫|∇φ|² + ½(ρ⁽¹⁾, Gρ⁽¹⁾) + Σ|π|²/2M`, evaluated from ρ⁽¹⁾.
pub fn quadratic_form(model: &Model, s: &State, y: &Tangent) -> Result<f64> {
    let rho1 = first_order_density(model, s, y)?;
    let field = model.field_modes();
    let v = model.lattice().volume();
    let grad: f64 = y.phi.iter().enumerate().map(|(i, c)| field.xi2(i) * c.norm_sqr()).sum::<f64>() * v;
    let coulomb = model.coulomb_from_rho(&rho1);
    Ok(0.5 * grad + coulomb + model.ion_kinetic(&y.pi))
}

/// Both sides of `‖√G σ⁽¹⁾‖² = N⁻³ Σ_θ ⟨K(θ), Σ(θ)K(θ)⟩` for ion displacements κ,
/// `K(θ) = Σ_n κ(n) e^{−iθn}`. Analytic densities are summed over `ξ = θ + 2πm`,
/// `|m_j| ≤ m_cut`, on both sides.
pub fn wiener_identity_check(sigma: &IonDensity, kappa: &[Vec3], r: Vec3, m_cut: u32) -> Result<(f64, f64)> {
    let lattice = sigma.lattice();
    let n = lattice.n() as i32;
    if kappa.len() != lattice.cell_count() {
        return Err(Error::InvalidParameter("κ must have N³ entries".into()));
    }
    let sites = lattice.sites();
    let k_of = |k: [i32; 3]| -> [Complex64; 3] {
        let xi = lattice.xi(k);
        let mut acc = [ZERO; 3];
        for (s, kap) in sites.iter().zip(kappa) {
            let ph = Complex64::from_polar(1.0, -(xi[0] * s[0] as f64 + xi[1] * s[1] as f64 + xi[2] * s[2] as f64));
            for d in 0..3 {
                acc[d] += kap[d] * ph;
            }
        }
        acc
    };
    let wave_vectors: Vec<[i32; 3]> = match sigma.kind() {
        DensityKind::BandLimited { modes, .. } => modes.modes().to_vec(),
        DensityKind::CharCubePower { .. } => {
            let m = m_cut as i32;
            let mut out = Vec::new();
            for p in brillouin_points(lattice.n())?.points() {
                for a in -m..=m {
                    for b in -m..=m {
                        for c in -m..=m {
                            out.push([p.k[0] + n * a, p.k[1] + n * b, p.k[2] + n * c]);
                        }
                    }
                }
            }
            out
        }
    };
    let v = lattice.volume();
    let mut lhs = 0.0;
    for k in wave_vectors {
        if k == [0, 0, 0] {
            continue;
        }
        let xi = lattice.xi(k);
        let x2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        let c = sigma.series_coeff(k)?;
        let kk = k_of(k);
        let dot = xi[0] * kk[0] + xi[1] * kk[1] + xi[2] * kk[2];
        let shift = Complex64::from_polar(1.0, -(xi[0] * r[0] + xi[1] * r[1] + xi[2] * r[2]));
        let s1 = -Complex64::i() * c * shift * dot;
        lhs += v * s1.norm_sqr() / x2;
    }
    let mut rhs = 0.0;
    for p in brillouin_points(lattice.n())?.outside_gamma1() {
        let sm = sigma_matrix(sigma, p.k, m_cut)?;
        let kk = k_of(p.k);
        for a in 0..3 {
            for b in 0..3 {
                rhs += (kk[a].conj() * sm.matrix[(a, b)] * kk[b]).re;
            }
        }
    }
    Ok((lhs, rhs / v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    /// Smallest eigenvalue above the kernel threshold.
    pub min_positive: Option<f64>,
    /// Spectral norm `max |λ|`.
    pub norm: f64,
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, f64::EPSILON, 10_000).ok_or_else(|| Error::Eigen("symmetric QR did not converge".into()))
}

fn sorted(ev: &DVector<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = ev.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn spectrum(h: &HessianOperator, kernel_tol: f64) -> Result<Spectrum> {
    let eig = eigen(h.matrix.clone())?;
    let eigenvalues = sorted(&eig.eigenvalues);
    let norm = eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let threshold = kernel_tol * norm;
    let kernel_dim = eigenvalues.iter().filter(|l| l.abs() <= threshold).count();
    let min_positive = eigenvalues.iter().copied().find(|&l| l > threshold);
    Ok(Spectrum { eigenvalues, kernel_dim, min_positive, norm })
}

/// Eigen-decomposition of H restricted to the orthogonal complement of the
/// symmetry directions and the charge constraint.
#[derive(Debug, Clone)]
pub struct ConstrainedSpectrum {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors in full coordinates (columns).
    pub vectors: DMatrix<f64>,
}

pub fn constrained_spectrum(h: &HessianOperator) -> Result<ConstrainedSpectrum> {
    let dim = h.dim();
    let dirs = h.constrained_directions();
    let mut proj = DMatrix::<f64>::identity(dim, dim);
    for u in &dirs {
        proj -= u * u.transpose();
    }
    let pe = eigen(proj)?;
    let keep: Vec<usize> = (0..dim).filter(|&i| pe.eigenvalues[i] > 0.5).collect();
    let w = DMatrix::from_fn(dim, keep.len(), |r, c| pe.eigenvectors[(r, keep[c])]);
    let reduced = w.transpose() * &h.matrix * &w;
    let reduced = 0.5 * (&reduced + reduced.transpose());
    let re = eigen(reduced)?;
    let mut order: Vec<usize> = (0..re.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| re.eigenvalues[a].total_cmp(&re.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| re.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(keep.len(), order.len(), |r, c| re.eigenvectors[(r, order[c])]);
    Ok(ConstrainedSpectrum { eigenvalues, vectors: w * vecs })
}

/// Minimal eigenvalue ν of H on the constrained subspace.
pub fn constrained_min_eig(h: &HessianOperator) -> Result<f64> {
    Ok(constrained_spectrum(h)?.eigenvalues[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_band_limited_jellium, make_char_cube_power};
    use crate::field::ModelParams;
    use crate::groundstate::periodic_ground_state;
    use crate::lattice::build_mode_set;
    use rand::{Rng, SeedableRng};

    fn model(sigma: IonDensity, m: u32) -> Model {
        let params = ModelParams::new(1.0, 1.0, 10.0, 2).unwrap();
        Model::new(params, sigma, Arc::new(build_mode_set(2, m).unwrap())).unwrap()
    }

    fn designer() -> IonDensity {
        make_band_limited_jellium(&build_mode_set(2, 8).unwrap(), 1.0, 1.0, 0.05, 42).unwrap()
    }

    fn random_tangent(model: &Model, seed: u64) -> Tangent {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tangent::zeros(model.field_modes());
        for c in t.phi.iter_mut() {
            *c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        for a in t.kappa.iter_mut().chain(t.pi.iter_mut()) {
            *a = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        }
        t
    }

    #[test]
    fn basis_round_trip() {
        let m = model(designer(), 2);
        let s = periodic_ground_state(0.8, [0.3, 0.1, 1.7], &m).unwrap();
        let h = assemble_hessian(&m, &s).unwrap();
        assert_eq!(h.dim(), 2 * 19 + 48);
        let y = random_tangent(&m, 1);
        let back = h.tangent(&h.coords(&y));
        for (a, b) in y.phi.iter().zip(&back.phi) {
            assert!((a - b).norm() < 1e-14);
        }
        let lat = m.lattice();
        assert!((h.coords(&y).norm() - y.norm(lat)).abs() < 1e-12 * y.norm(lat));
    }

    #[test]
    fn simple_blocks() {
        let m = model(designer(), 2);
        let s = periodic_ground_state(0.0, [0.0; 3], &m).unwrap();
        let h = assemble_hessian(&m, &s).unwrap();
        assert!(h.symmetry_defect() == 0.0);
        for n in 0..8 {
            for d in 0..3 {
                let k = h.p_index(n, d);
                assert_eq!(h.matrix()[(k, k)], 0.1);
            }
        }
        let b = h.basis().iter().position(|&(i, k)| m.field_modes().mode(i) == [1, 1, 0] && k == BasisKind::Sin).unwrap();
        let k = h.psi2_index(b);
        assert!((h.matrix()[(k, k)] - 2.0 * PI * PI).abs() < 1e-13);
        assert!(h.matrix().column(k).iter().enumerate().all(|(r, x)| r == k || *x == 0.0));
    }

    #[test]
    fn quadratic_form_matches_matrix() {
        let m = model(designer(), 2);
        for (alpha, r) in [(0.0, [0.0; 3]), (1.1, [0.4, 1.3, 0.2])] {
            let s = periodic_ground_state(alpha, r, &m).unwrap();
            let h = assemble_hessian(&m, &s).unwrap();
            for seed in 0..5 {
                let y = random_tangent(&m, seed);
                let a = quadratic_form(&m, &s, &y).unwrap();
                let b = h.half_form(&h.coords(&y));
                assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn matrix_matches_energy_second_differences() {
        let m = model(designer(), 1);
        let s = periodic_ground_state(0.0, [0.0; 3], &m).unwrap();
        let h = assemble_hessian(&m, &s).unwrap();
        for seed in 0..3 {
            let y = random_tangent(&m, seed);
            let d2 = |t: f64| {
                let e = |u: f64| m.energy(&y.displace(&s, u).unwrap()).unwrap();
                (e(t) - 2.0 * e(0.0) + e(-t)) / (t * t)
            };
            let rich = (4.0 * d2(5e-4) - d2(1e-3)) / 3.0;
            let c = h.coords(&y);
            let exact = c.dot(&(h.matrix() * &c));
            assert!((rich - exact).abs() <= 1e-6 * exact, "{rich} vs {exact}");
        }
    }

    #[test]
    fn tangent_to_manifold_is_null() {
        let m = model(designer(), 2);
        let s = periodic_ground_state(0.6, [0.2, 0.0, 0.0], &m).unwrap();
        let mut y = Tangent::zeros(m.field_modes());
        y.phi[m.field_modes().zero()] = Complex64::i() * s.psi.coeffs()[m.field_modes().zero()] * 0.7;
        y.kappa = vec![[0.3, -0.2, 0.5]; 8];
        assert!(quadratic_form(&m, &s, &y).unwrap().abs() < 1e-14);
        let mut y = Tangent::zeros(m.field_modes());
        y.pi[2] = [1.0, 2.0, 0.0];
        assert!((quadratic_form(&m, &s, &y).unwrap() - 5.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn designer_kernel_is_the_symmetry_space() {
        let m = model(designer(), 2);
        let s = periodic_ground_state(0.0, [0.0; 3], &m).unwrap();
        let h = assemble_hessian(&m, &s).unwrap();
        let sp = spectrum(&h, KERNEL_TOL).unwrap();
        assert_eq!(sp.kernel_dim, 5);
        assert!(sp.eigenvalues[0] >= -1e-10 * sp.norm);
        let nu = constrained_min_eig(&h).unwrap();
        assert!((nu - sp.min_positive.unwrap()).abs() < 1e-10 * sp.norm);
    }

    #[test]
    fn sigma_one_has_extra_kernel() {
        let m = model(make_char_cube_power(2, 1, 1.0, 1.0).unwrap(), 2);
        let s = periodic_ground_state(0.0, [0.0; 3], &m).unwrap();
        let h = assemble_hessian(&m, &s).unwrap();
        let sp = spectrum(&h, KERNEL_TOL).unwrap();
        assert_eq!(sp.kernel_dim, 14);
        assert!(constrained_min_eig(&h).unwrap().abs() <= KERNEL_TOL * sp.norm);
    }

    #[test]
    fn non_ground_states_are_rejected() {
        let m = model(designer(), 1);
        let mut s = periodic_ground_state(0.0, [0.0; 3], &m).unwrap();
        s.p[0][0] = 1e-3;
        assert!(matches!(assemble_hessian(&m, &s), Err(Error::InvalidExpansionPoint(_))));
    }

    #[test]
    fn wiener_identity_examples() {
        let d = designer();
        let uniform = vec![[0.2, 0.4, -0.1]; 8];
        let (l, r) = wiener_identity_check(&d, &uniform, [0.0; 3], 1).unwrap();
        assert!(l.abs() < 1e-28 && r.abs() < 1e-28);
        // single Brillouin mode θ = (π, 0, π)
        let sites = LatticeSpec::new(2).unwrap().sites();
        let kappa: Vec<Vec3> = sites.iter().map(|s| [(PI * (s[0] + s[2]) as f64).cos(), 0.5, 0.0]).collect();
        let (l, r) = wiener_identity_check(&d, &kappa, [0.3, 0.0, 0.1], 1).unwrap();
        assert!(l > 0.0 && (l - r).abs() <= 1e-10 * l);

        let s1 = make_char_cube_power(2, 1, 1.0, 1.0).unwrap();
        let kappa: Vec<Vec3> = sites.iter().map(|s| [(PI * (s[1] + s[2]) as f64).cos(), 0.0, 0.0]).collect();
        let (l, r) = wiener_identity_check(&s1, &kappa, [0.0; 3], 4).unwrap();
        assert!(l.abs() < 1e-30 && r.abs() < 1e-30);
    }
}
