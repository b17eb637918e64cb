use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Overdamped Drude–Lorentz bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    /// Reorganization energy.
    pub lambda: f64,
    /// Cutoff frequency.
    pub gamma: f64,
    pub kt: f64,
}

impl BathParams {
    pub fn new(lambda: f64, gamma: f64, kt: f64) -> Result<Self> {
        let b = Self { lambda, gamma, kt };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if !(self.kt > 0.0 && self.kt.is_finite()) {
            return Err(Error::Domain(format!("kT must be > 0, got {}", self.kt)));
        }
        Ok(())
    }

    /// `k`-th bosonic Matsubara frequency `2πk·kT`.
    pub fn matsubara(&self, k: usize) -> f64 {
        2.0 * PI * self.kt * k as f64
    }
}

/// `J(ω) = (λ/2)·γω/(γ² + ω²)`.
pub fn spectral_density(omega: f64, bath: &BathParams) -> f64 {
    0.5 * bath.lambda * bath.gamma * omega / (bath.gamma * bath.gamma + omega * omega)
}

/// One exponential term `c·e^{−νt}` of the bath correlation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent {
    pub amplitude: Complex64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathExponents {
    pub terms: Vec<Exponent>,
}

impl BathExponents {
    /// `C(t) = Σ c_k e^{−ν_k t}`.
    pub fn correlation(&self, t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|e| e.amplitude * (-e.rate * t).exp())
            .sum()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

fn check_poles(bath: &BathParams) -> Result<()> {
    let ratio = bath.gamma / (2.0 * PI * bath.kt);
    let nearest = ratio.round();
    if nearest >= 1.0 && (bath.gamma - bath.matsubara(nearest as usize)).abs() < 1e-9 {
        return Err(Error::DegeneratePole {
            gamma: bath.gamma,
            nu: bath.matsubara(nearest as usize),
        });
    }
    Ok(())
}

/// Drude pole plus `k` Matsubara terms of the Drude–Lorentz correlation
/// function.
pub fn bath_exponents(bath: &BathParams, k: usize) -> Result<BathExponents> {
    bath.validate()?;
    check_poles(bath)?;
    let (lambda, gamma, kt) = (bath.lambda, bath.gamma, bath.kt);
    let cot = 1.0 / (gamma / (2.0 * kt)).tan();
    let mut terms = Vec::with_capacity(k + 1);
    terms.push(Exponent {
        amplitude: Complex64::new(lambda * gamma * cot, -lambda * gamma),
        rate: gamma,
    });
    for m in 1..=k {
        let nu = bath.matsubara(m);
        terms.push(Exponent {
            amplitude: Complex64::from(4.0 * lambda * gamma * kt * nu / (nu * nu - gamma * gamma)),
            rate: nu,
        });
    }
    Ok(BathExponents { terms })
}

/// `Σ_{m>k} c_m/ν_m`: weight of the Matsubara tail beyond `k`, used as a
/// white-noise closure of the truncated expansion.
pub fn matsubara_residual(bath: &BathParams, k: usize) -> Result<f64> {
    bath.validate()?;
    check_poles(bath)?;
    let (lambda, gamma, kt) = (bath.lambda, bath.gamma, bath.kt);
    let total = lambda * (2.0 * kt / gamma - 1.0 / (gamma / (2.0 * kt)).tan());
    let kept: f64 = (1..=k)
        .map(|m| {
            let nu = bath.matsubara(m);
            4.0 * lambda * gamma * kt / (nu * nu - gamma * gamma)
        })
        .sum();
    Ok(total - kept)
}
