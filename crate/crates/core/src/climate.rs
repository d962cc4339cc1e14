//! Three-reservoir carbon cycle and two-layer temperature model.
//!
//! Reservoir order is atmosphere, upper ocean, lower ocean. Masses are GtC and
//! temperatures are degrees C above preindustrial. Default coefficients follow
//! the 5-year-step DICE-2016 calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling coefficients of the two-layer temperature update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatCoefficients {
    /// Atmospheric response speed per step.
    pub c1: f64,
    /// Atmosphere to ocean heat exchange.
    pub c3: f64,
    /// Ocean response speed per step.
    pub c4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateParams {
    /// `carbon_transfer[to][from]`, applied once per step. Columns sum to 1.
    pub carbon_transfer: [[f64; 3]; 3],
    /// Preindustrial atmospheric carbon mass, GtC.
    pub m_preindustrial: f64,
    /// Forcing from a doubling of atmospheric carbon, W/m^2.
    pub f2x: f64,
    /// Equilibrium climate sensitivity, degrees C.
    pub t2x: f64,
    pub heat_coeffs: HeatCoefficients,
    /// Exogenous forcing at step 0, W/m^2.
    pub f_exo_0: f64,
    /// Exogenous forcing increment per step, W/m^2.
    pub f_exo_slope: f64,
}

impl Default for ClimateParams {
    fn default() -> Self {
        // Equilibrium reservoir masses 588 / 360 / 1720 GtC with
        // 12% atmosphere->upper and 0.7% upper->lower exchange per step.
        let (b12, b23) = (0.12, 0.007);
        let (m_at, m_up, m_lo) = (588.0, 360.0, 1720.0);
        let b21 = b12 * m_at / m_up;
        let b32 = b23 * m_up / m_lo;
        Self {
            carbon_transfer: [
                [1.0 - b12, b21, 0.0],
                [b12, 1.0 - b21 - b23, b32],
                [0.0, b23, 1.0 - b32],
            ],
            m_preindustrial: m_at,
            f2x: 3.6813,
            t2x: 3.1,
            heat_coeffs: HeatCoefficients {
                c1: 0.1005,
                c3: 0.088,
                c4: 0.025,
            },
            f_exo_0: 0.5,
            f_exo_slope: 0.5 / 17.0,
        }
    }
}

impl ClimateParams {
    pub fn validate(&self) -> Result<()> {
        for col in 0..3 {
            let sum: f64 = (0..3).map(|row| self.carbon_transfer[row][col]).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::config(
                    format!("climate.carbon_transfer column {col}"),
                    None,
                    format!("must sum to 1 (mass conservation), sums to {sum}"),
                ));
            }
            for row in 0..3 {
                let v = self.carbon_transfer[row][col];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config(
                        "climate.carbon_transfer",
                        None,
                        "entries must be finite and >= 0",
                    ));
                }
            }
        }
        let positive = [
            ("m_preindustrial", self.m_preindustrial),
            ("f2x", self.f2x),
            ("t2x", self.t2x),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("climate.{name}"), None, "must be finite and > 0"));
            }
        }
        let h = self.heat_coeffs;
        for (name, v) in [("c1", h.c1), ("c3", h.c3), ("c4", h.c4)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    format!("climate.heat_coeffs.{name}"),
                    None,
                    "must be finite and >= 0",
                ));
            }
        }
        if !(self.f_exo_0.is_finite() && self.f_exo_slope.is_finite()) {
            return Err(Error::config("climate.f_exo", None, "must be finite"));
        }
        Ok(())
    }

    /// Climate feedback parameter `f2x / t2x`.
    pub fn feedback(&self) -> f64 {
        self.f2x / self.t2x
    }

    pub fn exogenous_forcing(&self, step_index: usize) -> f64 {
        self.f_exo_0 + self.f_exo_slope * step_index as f64
    }

    pub fn forcing(&self, m_atm: f64, step_index: usize) -> f64 {
        self.f2x * (m_atm / self.m_preindustrial).log2() + self.exogenous_forcing(step_index)
    }

    /// Preindustrial equilibrium: zero net flux between neighbouring reservoirs.
    ///
    /// Assumes the chain structure (no direct atmosphere to lower-ocean flow).
    pub fn equilibrium_state(&self) -> ClimateState {
        let b = &self.carbon_transfer;
        let m_at = self.m_preindustrial;
        let m_up = m_at * b[1][0] / b[0][1];
        let m_lo = m_up * b[2][1] / b[1][2];
        ClimateState {
            masses: [m_at, m_up, m_lo],
            temp_atmosphere: 0.0,
            temp_ocean: 0.0,
            cumulative_emissions: 0.0,
        }
    }

    fn transfer(&self, m: &[f64; 3]) -> [f64; 3] {
        let b = &self.carbon_transfer;
        [
            b[0][0] * m[0] + b[0][1] * m[1] + b[0][2] * m[2],
            b[1][0] * m[0] + b[1][1] * m[1] + b[1][2] * m[2],
            b[2][0] * m[0] + b[2][1] * m[1] + b[2][2] * m[2],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateState {
    /// Atmosphere, upper ocean, lower ocean (GtC).
    pub masses: [f64; 3],
    pub temp_atmosphere: f64,
    pub temp_ocean: f64,
    #[serde(default)]
    pub cumulative_emissions: f64,
}

impl Default for ClimateState {
    /// 2015-era reservoirs and temperatures.
    fn default() -> Self {
        Self {
            masses: [851.0, 460.0, 1740.0],
            temp_atmosphere: 0.85,
            temp_ocean: 0.0068,
            cumulative_emissions: 0.0,
        }
    }
}

impl ClimateState {
    pub fn validate(&self) -> Result<()> {
        if self.masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::config("initial_climate.masses", None, "must be finite and > 0"));
        }
        if !(self.temp_atmosphere.is_finite() && self.temp_ocean.is_finite()) {
            return Err(Error::config("initial_climate", None, "temperatures must be finite"));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Emissions over one step, GtC.
pub fn emissions(sigma: f64, mitigation_rate: f64, production: f64, delta_step: f64) -> f64 {
    sigma * (1.0 - mitigation_rate) * production * delta_step
}

/// Advance the climate by one step given the step's total emissions.
pub fn step_climate(
    state: &ClimateState,
    total_emissions: f64,
    step_index: usize,
    params: &ClimateParams,
) -> ClimateState {
    let mut masses = params.transfer(&state.masses);
    masses[0] += total_emissions;
    let forcing = params.forcing(masses[0], step_index);
    let h = params.heat_coeffs;
    let t_at = state.temp_atmosphere;
    let t_lo = state.temp_ocean;
    let temp_atmosphere = t_at + h.c1 * (forcing - params.feedback() * t_at - h.c3 * (t_at - t_lo));
    let temp_ocean = t_lo + h.c4 * (t_at - t_lo);
    ClimateState {
        masses,
        temp_atmosphere,
        temp_ocean,
        cumulative_emissions: state.cumulative_emissions + total_emissions,
    }
}
