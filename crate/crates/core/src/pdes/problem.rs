use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffnet::Jet2;
use crate::error::{Error, Result};

/// Index of the spatial coordinate in a network input point.
pub const X: usize = 0;
/// Index of the time coordinate in a network input point.
pub const T: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, t_min: f64, t_max: f64) -> Result<Self> {
        let domain = Self {
            x_min,
            x_max,
            t_min,
            t_max,
        };
        domain.validate()?;
        Ok(domain)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !(self.t_min <= self.t_max) {
            return Err(Error::Config(format!("degenerate domain {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        x >= self.x_min && x <= self.x_max && t >= self.t_min && t <= self.t_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn duration(&self) -> f64 {
        self.t_max - self.t_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    Schrodinger,
    Burgers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Burgers viscosity; ignored for Schrodinger.
    pub viscosity: f64,
    pub domain: Domain,
}

impl ProblemSpec {
    /// `i h_t + h_xx / 2 + |h|^2 h = 0` on `[-5, 5] x [0, pi/2]`.
    pub fn schrodinger() -> Self {
        Self {
            kind: ProblemKind::Schrodinger,
            viscosity: 0.0,
            domain: Domain {
                x_min: -5.0,
                x_max: 5.0,
                t_min: 0.0,
                t_max: PI / 2.0,
            },
        }
    }

    /// `u_t + u u_x = nu u_xx` on `[-1, 1] x [0, 1]` with `nu = 0.01 / pi`.
    pub fn burgers() -> Self {
        Self {
            kind: ProblemKind::Burgers,
            viscosity: 0.01 / PI,
            domain: Domain {
                x_min: -1.0,
                x_max: 1.0,
                t_min: 0.0,
                t_max: 1.0,
            },
        }
    }

    pub fn for_kind(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Schrodinger => Self::schrodinger(),
            ProblemKind::Burgers => Self::burgers(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.kind == ProblemKind::Burgers && !(self.viscosity > 0.0) {
            return Err(Error::Config(format!(
                "Burgers viscosity must be positive, got {}",
                self.viscosity
            )));
        }
        Ok(())
    }

    /// Number of field components: `(u, v)` or `u`.
    pub fn outputs(&self) -> usize {
        match self.kind {
            ProblemKind::Schrodinger => 2,
            ProblemKind::Burgers => 1,
        }
    }

    /// Noise-free initial condition per output channel.
    pub fn clean_initial(&self, x: f64) -> Vec<f64> {
        match self.kind {
            ProblemKind::Schrodinger => vec![2.0 / x.cosh(), 0.0],
            ProblemKind::Burgers => vec![-(PI * x).sin()],
        }
    }
}

/// Nonlinear Schrodinger residual pair from plain derivative values.
#[inline]
pub fn schrodinger_residual_terms(
    u: f64,
    v: f64,
    u_t: f64,
    v_t: f64,
    u_xx: f64,
    v_xx: f64,
) -> (f64, f64) {
    let mod2 = u * u + v * v;
    (-v_t + 0.5 * u_xx + mod2 * u, u_t + 0.5 * v_xx + mod2 * v)
}

/// Residual of the coupled real form; the jet must carry `t` first and `x`
/// second derivatives.
pub fn schrodinger_residual(jet: &Jet2) -> (f64, f64) {
    schrodinger_residual_terms(
        jet.value[0],
        jet.value[1],
        jet.d1(0, T),
        jet.d1(1, T),
        jet.d2(0, X),
        jet.d2(1, X),
    )
}

#[inline]
pub fn burgers_residual_terms(u: f64, u_t: f64, u_x: f64, u_xx: f64, viscosity: f64) -> f64 {
    u_t + u * u_x - viscosity * u_xx
}

pub fn burgers_residual(jet: &Jet2, viscosity: f64) -> f64 {
    burgers_residual_terms(
        jet.value[0],
        jet.d1(0, T),
        jet.d1(0, X),
        jet.d2(0, X),
        viscosity,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_plug_ins() {
        assert_eq!(schrodinger_residual_terms(0.0, 0.0, 0.0, 0.0, 0.0, 0.0), (0.0, 0.0));
        assert_eq!(schrodinger_residual_terms(1.0, 0.0, 0.0, 0.0, 0.0, 0.0), (1.0, 0.0));
        assert_eq!(burgers_residual_terms(0.0, 0.0, 0.0, 0.0, 0.3), 0.0);
        assert_eq!(burgers_residual_terms(2.0, 1.0, 3.0, 4.0, 0.5), 5.0);
    }

    #[test]
    fn clean_initial_conditions() {
        let s = ProblemSpec::schrodinger();
        assert_eq!(s.clean_initial(0.0), vec![2.0, 0.0]);
        let b = ProblemSpec::burgers();
        assert_eq!(b.clean_initial(0.5), vec![-1.0]);
    }

    #[test]
    fn validation() {
        let mut b = ProblemSpec::burgers();
        assert!(b.validate().is_ok());
        b.viscosity = 0.0;
        assert!(b.validate().is_err());
        assert!(Domain::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Domain::new(-1.0, 1.0, 0.5, 0.5).is_ok());
    }
}
