//! Conserved functionals of the nonlinear Schrodinger field on one time slice.

use crate::error::{Error, Result};

/// Field and its x-derivative sampled on a uniform x-grid at fixed `t`.
///
/// With `periodic` set the grid omits the right endpoint and the trapezoid
/// rule closes the interval by wrap-around (all weights `dx`); otherwise the
/// grid includes both endpoints and they get half weight.
#[derive(Debug, Clone, Copy)]
pub struct FieldSlice<'a> {
    pub dx: f64,
    pub periodic: bool,
    pub u: &'a [f64],
    pub v: &'a [f64],
    pub u_x: &'a [f64],
    pub v_x: &'a [f64],
}

/// `(C1, C2, C3)`: `int |h|^2`, `int (u v_x + v u_x)`, `int (|h_x|^2 - |h|^4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conserved {
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
    /// `int (u v_x - v u_x)`, the usual momentum invariant.
    pub momentum_antisymmetric: f64,
}

pub fn trapezoid(values: &[f64], dx: f64, periodic: bool) -> f64 {
    let sum: f64 = values.iter().sum();
    if periodic || values.len() < 2 {
        sum * dx
    } else {
        (sum - 0.5 * (values[0] + values[values.len() - 1])) * dx
    }
}

pub fn conserved_quantities(slice: &FieldSlice<'_>) -> Result<Conserved> {
    let n = slice.u.len();
    if [slice.v.len(), slice.u_x.len(), slice.v_x.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(Error::Shape("field slice components differ in length".into()));
    }
    let integrand = |f: &dyn Fn(usize) -> f64| {
        let vals: Vec<f64> = (0..n).map(f).collect();
        trapezoid(&vals, slice.dx, slice.periodic)
    };
    let (u, v, ux, vx) = (slice.u, slice.v, slice.u_x, slice.v_x);
    let mod2 = |i: usize| u[i] * u[i] + v[i] * v[i];
    Ok(Conserved {
        mass: integrand(&|i| mod2(i)),
        momentum: integrand(&|i| u[i] * vx[i] + v[i] * ux[i]),
        energy: integrand(&|i| ux[i] * ux[i] + vx[i] * vx[i] - mod2(i) * mod2(i)),
        momentum_antisymmetric: integrand(&|i| u[i] * vx[i] - v[i] * ux[i]),
    })
}
