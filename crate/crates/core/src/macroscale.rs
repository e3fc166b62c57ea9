//! Steady one-dimensional upscaled equation and dimensional scaling.

use crate::error::{Error, Result};

/// `W c' - D c'' = -lambda (c - source)` on `[0, length]`, `c(0) = inlet`, `c'(length) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroProblem {
    /// Advective coefficient `Pe V*_x`.
    pub advective: f64,
    pub dispersion: f64,
    pub lambda: f64,
    pub source: f64,
    /// Domain length in cell lengths.
    pub length: f64,
    pub inlet: f64,
}

impl MacroProblem {
    pub fn new(advective: f64, dispersion: f64, lambda: f64, length: f64) -> Self {
        Self {
            advective,
            dispersion,
            lambda,
            source: 0.0,
            length,
            inlet: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dispersion > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dispersion {} must be positive",
                self.dispersion
            )));
        }
        if !(self.length > 0.0) {
            return Err(Error::InvalidInput(format!(
                "length {} must be positive",
                self.length
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda {} must be non-negative",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Characteristic roots `(r_plus, r_minus)`.
    pub fn roots(&self) -> (f64, f64) {
        let (w, d) = (self.advective, self.dispersion);
        let s = (w * w + 4.0 * d * self.lambda).sqrt();
        // Cancellation-free pair: r_plus * r_minus = -lambda / D.
        if w >= 0.0 {
            let rp = (w + s) / (2.0 * d);
            let rm = if rp > 0.0 {
                -self.lambda / (d * rp)
            } else {
                0.0
            };
            (rp, rm)
        } else {
            let rm = (w - s) / (2.0 * d);
            let rp = if rm < 0.0 {
                -self.lambda / (d * rm)
            } else {
                0.0
            };
            (rp, rm)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroProfile {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
}

/// Closed-form profile; the growing exponential is referenced to the outlet so nothing overflows.
pub fn solve_macro_profile(problem: &MacroProblem, x: &[f64]) -> Result<MacroProfile> {
    problem.validate()?;
    let p = *problem;
    if p.lambda == 0.0 {
        return Ok(MacroProfile {
            x: x.to_vec(),
            c: vec![p.inlet; x.len()],
        });
    }
    let (rp, rm) = p.roots();
    let l = p.length;
    let amp = p.inlet - p.source;
    let b = amp / (1.0 - (rm / rp) * ((rm - rp) * l).exp());
    let a = -b * rm * (rm * l).exp() / rp;
    let c = x
        .iter()
        .map(|&xi| p.source + a * (rp * (xi - l)).exp() + b * (rm * xi).exp())
        .collect();
    Ok(MacroProfile { x: x.to_vec(), c })
}

/// `W c' - D c'' + lambda (c - source)` of the closed-form profile at `x`, from its analytic derivatives.
pub fn ode_residual(problem: &MacroProblem, x: f64) -> Result<f64> {
    problem.validate()?;
    let p = *problem;
    if p.lambda == 0.0 {
        return Ok(0.0);
    }
    let (rp, rm) = p.roots();
    let l = p.length;
    let b = (p.inlet - p.source) / (1.0 - (rm / rp) * ((rm - rp) * l).exp());
    let a = -b * rm * (rm * l).exp() / rp;
    let ep = a * (rp * (x - l)).exp();
    let em = b * (rm * x).exp();
    let c = p.source + ep + em;
    let d1 = rp * ep + rm * em;
    let d2 = rp * rp * ep + rm * rm * em;
    Ok(p.advective * d1 - p.dispersion * d2 + p.lambda * (c - p.source))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionalScales {
    pub velocity: f64,
    pub diffusivity: f64,
    pub cell_length: f64,
    pub concentration: f64,
    pub surface_rate: f64,
}

impl DimensionalScales {
    pub fn unit() -> Self {
        Self {
            velocity: 1.0,
            diffusivity: 1.0,
            cell_length: 1.0,
            concentration: 1.0,
            surface_rate: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.velocity,
            self.diffusivity,
            self.cell_length,
            self.concentration,
            self.surface_rate,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "scales must be positive: {self:?}"
            )))
        }
    }

    pub fn peclet(&self) -> f64 {
        self.velocity * self.cell_length / self.diffusivity
    }

    pub fn damkohler(&self) -> f64 {
        self.surface_rate * self.cell_length / self.diffusivity
    }
}

/// Effective coefficients in either scaled or physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroCoefficients {
    pub velocity: [f64; 2],
    pub dispersion: [[f64; 2]; 2],
    pub lambda: f64,
    pub source: f64,
}

pub fn to_dimensional(p: &MacroCoefficients, s: &DimensionalScales) -> Result<MacroCoefficients> {
    s.validate()?;
    let mut d = p.dispersion;
    d.iter_mut().flatten().for_each(|v| *v *= s.diffusivity);
    Ok(MacroCoefficients {
        velocity: [p.velocity[0] * s.velocity, p.velocity[1] * s.velocity],
        dispersion: d,
        lambda: p.lambda * s.diffusivity / (s.cell_length * s.cell_length),
        source: p.source * s.concentration,
    })
}

pub fn from_dimensional(p: &MacroCoefficients, s: &DimensionalScales) -> Result<MacroCoefficients> {
    s.validate()?;
    let mut d = p.dispersion;
    d.iter_mut().flatten().for_each(|v| *v /= s.diffusivity);
    Ok(MacroCoefficients {
        velocity: [p.velocity[0] / s.velocity, p.velocity[1] / s.velocity],
        dispersion: d,
        lambda: p.lambda * (s.cell_length * s.cell_length) / s.diffusivity,
        source: p.source / s.concentration,
    })
}
