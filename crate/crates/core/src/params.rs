//! Relaxation parameters, the incompressible equilibrium, and moments.
//!
//! PDFs are stored centered: `f~_i = f_i - f_i^eq(rho0, 0) = f_i - w_i rho0`,
//! so an all-zero field is fluid at rest and single precision keeps accuracy
//! near equilibrium.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::stencil::{CS2, DIRECTIONS, Q, WEIGHTS};

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Precision {
    Sp,
    Dp,
}

impl Precision {
    pub fn scalar_bytes(self) -> usize {
        match self {
            Precision::Sp => 4,
            Precision::Dp => 8,
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precision::Sp => write!(f, "sp"),
            Precision::Dp => write!(f, "dp"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("relaxation time tau = {0} must exceed 0.5 for positive viscosity")]
    TauOutOfRange(f64),
}

/// Macroscopic quantities recovered from one cell's centered PDFs.
#[derive(Copy, Clone, Debug)]
pub struct Macroscopic<T> {
    pub rho: T,
    pub u: [T; 3],
    /// Ideal-gas pressure, defined as `CS2 * rho`.
    pub p: T,
}

/// Single-relaxation-time parameters shared read-only by all workers.
#[derive(Copy, Clone, Debug)]
pub struct LbmParams<T: Scalar> {
    tau: T,
    rho0: T,
    omega: T,
}

impl<T: Scalar> LbmParams<T> {
    pub fn new(tau: f64, rho0: f64) -> Result<Self, ParamsError> {
        if !(tau > 0.5) {
            return Err(ParamsError::TauOutOfRange(tau));
        }
        Ok(Self {
            tau: T::from_f64(tau),
            rho0: T::from_f64(rho0),
            omega: T::from_f64(1.0 / tau),
        })
    }

    #[inline]
    pub fn tau(&self) -> T {
        self.tau
    }

    #[inline]
    pub fn rho0(&self) -> T {
        self.rho0
    }

    /// Collision rate 1/tau.
    #[inline]
    pub fn omega(&self) -> T {
        self.omega
    }

    /// Kinematic viscosity nu = (tau - 1/2) * cs^2 (dt = 1).
    pub fn viscosity(&self) -> f64 {
        (self.tau.as_f64() - 0.5) * CS2
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    /// Centered incompressible equilibrium:
    /// `f~_i^eq = w_i [drho + rho0 (3 e_i.u + 4.5 (e_i.u)^2 - 1.5 u^2)]`
    /// with `drho = rho - rho0`.
    pub fn equilibrium(&self, rho: T, u: [T; 3]) -> [T; Q] {
        let drho = rho - self.rho0;
        let c3 = T::from_f64(3.0);
        let c45 = T::from_f64(4.5);
        let c15 = T::from_f64(1.5);
        let usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        let mut out = [T::zero(); Q];
        for i in 0..Q {
            let e = DIRECTIONS[i];
            let eu = T::from_f64(e[0] as f64) * u[0]
                + T::from_f64(e[1] as f64) * u[1]
                + T::from_f64(e[2] as f64) * u[2];
            let w = T::from_f64(WEIGHTS[i]);
            out[i] = w * (drho + self.rho0 * (c3 * eu + c45 * eu * eu - c15 * usq));
        }
        out
    }

    /// Zeroth and first moments of one cell's centered PDFs:
    /// `rho = rho0 + sum f~_i`, `rho0 u = sum e_i f~_i`, `p = cs^2 rho`.
    pub fn moments(&self, pdfs: &[T]) -> Macroscopic<T> {
        debug_assert_eq!(pdfs.len(), Q);
        let mut drho = T::zero();
        let mut m = [T::zero(); 3];
        for i in 0..Q {
            let f = pdfs[i];
            drho += f;
            let e = DIRECTIONS[i];
            if e[0] != 0 {
                m[0] += T::from_f64(e[0] as f64) * f;
            }
            if e[1] != 0 {
                m[1] += T::from_f64(e[1] as f64) * f;
            }
            if e[2] != 0 {
                m[2] += T::from_f64(e[2] as f64) * f;
            }
        }
        let rho = self.rho0 + drho;
        let inv_rho0 = T::one() / self.rho0;
        Macroscopic {
            rho,
            u: [m[0] * inv_rho0, m[1] * inv_rho0, m[2] * inv_rho0],
            p: T::from_f64(CS2) * rho,
        }
    }
}
