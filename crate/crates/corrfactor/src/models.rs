//! Model and basis descriptors shared by the ODE builders and the
//! variational solvers.

use crate::error::{Error, Result};

/// Reference wave-function families for which the correlation-factor
/// equation can be derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Symmetric product e^(-alpha(r1 + r2)) (1s^2 singlet).
    SingletSlater,
    /// Antisymmetrized product e^(-alpha r1 - beta r2) - (r1 <-> r2) (1s2s triplet).
    TripletSlater,
    /// Symmetric Gaussian product e^(-alpha(r1^2 + r2^2)).
    GaussianSinglet,
    /// Product phi(r1) phi(r2) of a self-consistent-field orbital expanded in
    /// powers r^k e^(-alpha r).
    ScfProduct,
    /// Singlet reference supplemented by an uncorrelated two-electron basis
    /// expansion chi; f satisfies an inhomogeneous equation.
    Kutzelnigg,
}

/// Full specification of a reference model at a fixed trial energy.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub alpha: f64,
    /// Secondary exponent: the outer orbital for the triplet, the basis
    /// exponent for the Kutzelnigg complement. Equal to `alpha` otherwise.
    pub beta: f64,
    pub z: f64,
    /// Total-energy parameter E entering the equation (hartree).
    pub energy: f64,
    /// SCF orbital coefficients c_k on r^k e^(-alpha r).
    pub orbital: Vec<f64>,
    /// Symmetric coefficient matrix d_kl of the complement
    /// chi = sum d_kl r1^k r2^l e^(-beta(r1 + r2)).
    pub complement: Vec<Vec<f64>>,
}

impl ModelSpec {
    fn base(kind: ModelKind, alpha: f64, beta: f64, z: f64, energy: f64) -> Result<ModelSpec> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::Domain(format!("Z must be positive, got {z}")));
        }
        if !energy.is_finite() {
            return Err(Error::Domain("energy must be finite".into()));
        }
        Ok(ModelSpec {
            kind,
            alpha,
            beta,
            z,
            energy,
            orbital: Vec::new(),
            complement: Vec::new(),
        })
    }

    pub fn singlet(alpha: f64, z: f64, energy: f64) -> Result<ModelSpec> {
        Self::base(ModelKind::SingletSlater, alpha, alpha, z, energy)
    }

    pub fn triplet(alpha: f64, beta: f64, z: f64, energy: f64) -> Result<ModelSpec> {
        if alpha == beta {
            return Err(Error::Domain(
                "triplet reference requires distinct exponents".into(),
            ));
        }
        Self::base(ModelKind::TripletSlater, alpha, beta, z, energy)
    }

    pub fn gaussian(alpha: f64, z: f64, energy: f64) -> Result<ModelSpec> {
        Self::base(ModelKind::GaussianSinglet, alpha, alpha, z, energy)
    }

    pub fn scf_product(orbital: &[f64], alpha: f64, z: f64, energy: f64) -> Result<ModelSpec> {
        if orbital.is_empty() || orbital.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("SCF orbital coefficients must be finite and non-empty".into()));
        }
        let mut m = Self::base(ModelKind::ScfProduct, alpha, alpha, z, energy)?;
        m.orbital = orbital.to_vec();
        Ok(m)
    }

    pub fn kutzelnigg(
        alpha: f64,
        beta: f64,
        z: f64,
        energy: f64,
        complement: &[Vec<f64>],
    ) -> Result<ModelSpec> {
        let n = complement.len();
        if n == 0 || complement.iter().any(|row| row.len() != n) {
            return Err(Error::Domain(
                "complement coefficients must form a square matrix".into(),
            ));
        }
        for i in 0..n {
            for j in 0..n {
                if !complement[i][j].is_finite() || complement[i][j] != complement[j][i] {
                    return Err(Error::Domain(
                        "complement coefficient matrix must be finite and symmetric".into(),
                    ));
                }
            }
        }
        let mut m = Self::base(ModelKind::Kutzelnigg, alpha, beta, z, energy)?;
        m.complement = complement.to_vec();
        Ok(m)
    }

    /// Same model at a different trial energy.
    pub fn with_energy(&self, energy: f64) -> ModelSpec {
        ModelSpec { energy, ..self.clone() }
    }
}

/// Families of variational basis sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// f expanded in powers (r/scale)^j, j = 0..=max_power.
    PolynomialF,
    /// Symmetrized orbital products r1^k r2^l e^(-exponent (r1 + r2)),
    /// 0 <= k <= l <= max_power.
    OrbitalProducts,
    /// A fixed correlated function plus the orbital-product set.
    Mixed,
}

/// Basis-set specification for the variational solvers.
#[derive(Clone, Debug)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub max_power: u32,
    /// Length scale of polynomial powers (PolynomialF).
    pub scale: f64,
    /// Exponential parameter of orbital products (OrbitalProducts, Mixed).
    pub exponent: f64,
}

impl BasisSpec {
    pub fn polynomial_f(max_power: u32, scale: f64) -> Result<BasisSpec> {
        let b = BasisSpec { kind: BasisKind::PolynomialF, max_power, scale, exponent: 0.0 };
        b.validate()?;
        Ok(b)
    }

    pub fn orbital_products(max_power: u32, exponent: f64) -> Result<BasisSpec> {
        let b = BasisSpec { kind: BasisKind::OrbitalProducts, max_power, scale: 1.0, exponent };
        b.validate()?;
        Ok(b)
    }

    pub fn mixed(max_power: u32, exponent: f64) -> Result<BasisSpec> {
        let b = BasisSpec { kind: BasisKind::Mixed, max_power, scale: 1.0, exponent };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_power > 30 {
            return Err(Error::Range(format!(
                "basis max_power {} exceeds the supported limit 30",
                self.max_power
            )));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Domain(format!("basis scale must be positive, got {}", self.scale)));
        }
        match self.kind {
            BasisKind::PolynomialF => Ok(()),
            BasisKind::OrbitalProducts | BasisKind::Mixed => {
                if !(self.exponent > 0.0) || !self.exponent.is_finite() {
                    Err(Error::Domain(format!(
                        "basis exponent must be positive, got {}",
                        self.exponent
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}
