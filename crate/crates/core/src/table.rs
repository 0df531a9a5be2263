//! Lookup tables with linear and bilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.len() < 2 {
        return Err(Error::Config(format!("{name}: axis needs at least two knots")));
    }
    if axis.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{name}: non-finite knot")));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("{name}: knots must be strictly increasing")));
    }
    Ok(())
}

/// Index `i` of the cell `[axis[i], axis[i + 1]]` holding `x` and the
/// normalized position inside it. `x` must lie within the axis span.
fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let last = axis.len() - 1;
    let i = match axis.partition_point(|&k| k <= x) {
        0 => 0,
        p if p > last => last - 1,
        p => p - 1,
    };
    let i = i.min(last - 1);
    let frac = (x - axis[i]) / (axis[i + 1] - axis[i]);
    (i, frac)
}

/// Piecewise-linear function of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1d {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Table1d {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let t = Self { x, y };
        t.validate("table")?;
        Ok(t)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        check_axis(name, &self.x)?;
        if self.y.len() != self.x.len() {
            return Err(Error::Config(format!(
                "{name}: {} values for {} knots",
                self.y.len(),
                self.x.len()
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{name}: non-finite value")));
        }
        Ok(())
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// `None` outside the knot span.
    pub fn eval(&self, x: f64) -> Option<f64> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return None;
        }
        let (i, f) = locate(&self.x, x);
        Some(self.y[i] + f * (self.y[i + 1] - self.y[i]))
    }
}

/// Rectilinear grid of values `values[row][col]` with rows following
/// `omega` and columns following `power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2d {
    pub omega: Vec<f64>,
    pub power: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Grid2d {
    pub fn validate(&self, name: &str) -> Result<()> {
        check_axis(&format!("{name}.omega"), &self.omega)?;
        check_axis(&format!("{name}.power"), &self.power)?;
        if self.values.len() != self.omega.len()
            || self.values.iter().any(|r| r.len() != self.power.len())
        {
            return Err(Error::Config(format!(
                "{name}: values must be {}x{}",
                self.omega.len(),
                self.power.len()
            )));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{name}: non-finite value")));
        }
        Ok(())
    }

    pub fn contains(&self, omega: f64, power: f64) -> bool {
        omega >= self.omega[0]
            && omega <= self.omega[self.omega.len() - 1]
            && power >= self.power[0]
            && power <= self.power[self.power.len() - 1]
    }

    /// Bilinear interpolation; `None` outside the grid hull.
    pub fn eval(&self, omega: f64, power: f64) -> Option<f64> {
        if !self.contains(omega, power) {
            return None;
        }
        let (i, fw) = locate(&self.omega, omega);
        let (j, fp) = locate(&self.power, power);
        let v = &self.values;
        let lo = v[i][j] + fp * (v[i][j + 1] - v[i][j]);
        let hi = v[i + 1][j] + fp * (v[i + 1][j + 1] - v[i + 1][j]);
        Some(lo + fw * (hi - lo))
    }
}
