//! JSON file formats for densities and states, and number rendering for CSV output.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so
//! write-then-read reproduces every value bit for bit.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::density::{make_char_cube_power, DensityKind, IonDensity};
use crate::field::{Parity, SpectralField, State};
use crate::lattice::{build_mode_set, ModeSet};
use crate::{Error, Result, Vec3};

/// One series coefficient: `[k1, k2, k3, re, im]`.
pub type CoeffEntry = (i32, i32, i32, f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityFile {
    BandLimited {
        n: usize,
        m: u32,
        e: f64,
        z: f64,
        beta: f64,
        seed: u64,
        coefficients: Vec<CoeffEntry>,
    },
    CharCube {
        n: usize,
        power: u32,
        e: f64,
        z: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub n: usize,
    pub m: u32,
    pub psi: Vec<CoeffEntry>,
    pub q: Vec<Vec3>,
    pub p: Vec<Vec3>,
}

fn entries(modes: &ModeSet, coeffs: &[Complex64]) -> Vec<CoeffEntry> {
    modes.modes().iter().zip(coeffs).map(|(k, c)| (k[0], k[1], k[2], c.re, c.im)).collect()
}

fn gather(modes: &ModeSet, entries: &[CoeffEntry]) -> Result<Vec<Complex64>> {
    let mut out = vec![None; modes.len()];
    for &(k1, k2, k3, re, im) in entries {
        let i = modes
            .index_of([k1, k2, k3])
            .ok_or_else(|| Error::Format(format!("mode {:?} is outside the cutoff {}", [k1, k2, k3], modes.cutoff())))?;
        if out[i].replace(Complex64::new(re, im)).is_some() {
            return Err(Error::Format(format!("mode {:?} listed twice", [k1, k2, k3])));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::Format(format!("mode {:?} is missing", modes.mode(i)))))
        .collect()
}

impl DensityFile {
    pub fn from_density(sigma: &IonDensity) -> Self {
        let n = sigma.lattice().n();
        match sigma.kind() {
            DensityKind::BandLimited { modes, coeffs, beta, seed } => DensityFile::BandLimited {
                n,
                m: modes.cutoff(),
                e: sigma.e(),
                z: sigma.z(),
                beta: *beta,
                seed: *seed,
                coefficients: entries(modes, coeffs),
            },
            DensityKind::CharCubePower { power } => DensityFile::CharCube { n, power: *power, e: sigma.e(), z: sigma.z() },
        }
    }

    pub fn to_density(&self) -> Result<IonDensity> {
        match self {
            DensityFile::BandLimited { n, m, e, z, beta, seed, coefficients } => {
                let modes = build_mode_set(*n, *m)?;
                let coeffs = gather(&modes, coefficients)?;
                IonDensity::from_coefficients(&modes, *e, *z, *beta, *seed, coeffs)
            }
            DensityFile::CharCube { n, power, e, z } => make_char_cube_power(*n, *power, *e, *z),
        }
    }
}

impl StateFile {
    pub fn from_state(x: &State) -> Self {
        let modes = x.psi.modes();
        StateFile {
            n: x.lattice().n(),
            m: modes.cutoff(),
            psi: entries(modes, x.psi.coeffs()),
            q: x.q.clone(),
            p: x.p.clone(),
        }
    }

    pub fn to_state(&self) -> Result<State> {
        let modes = Arc::new(build_mode_set(self.n, self.m)?);
        let coeffs = gather(&modes, &self.psi)?;
        State::new(SpectralField::new(modes, coeffs, Parity::Complex)?, self.q.clone(), self.p.clone())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_density(path: &Path) -> Result<IonDensity> {
    read_json::<DensityFile>(path)?.to_density()
}

pub fn write_density(path: &Path, sigma: &IonDensity) -> Result<()> {
    write_json(path, &DensityFile::from_density(sigma))
}

pub fn read_state(path: &Path) -> Result<State> {
    read_json::<StateFile>(path)?.to_state()
}

pub fn write_state(path: &Path, x: &State) -> Result<()> {
    write_json(path, &StateFile::from_state(x))
}

/// 17 significant digits, enough to reproduce any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `a+bi` with both parts in [`fmt_f64`] form.
pub fn fmt_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", fmt_f64(z.re), sign, fmt_f64(z.im.abs()))
}
