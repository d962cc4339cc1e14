//! Per-region economic equations and trade clearing.
//!
//! Everything here is a pure function of its arguments. The time loop lives
//! in [`crate::engine`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annual exogenous total factor productivity drift inside the technology update.
pub const TFP_DRIFT: f64 = 0.0033;

/// Upper bound on the abatement cost fraction so that gross output stays positive.
pub const MAX_ABATEMENT_COST: f64 = 1.0 - 1e-9;

/// Economic constants shared by all regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalEconParams {
    /// Risk-aversion exponent of the step utility. Must not be 1.
    pub alpha: f64,
    /// Smoothing constant added to per-capita consumption.
    pub epsilon: f64,
    /// Capital elasticity of production.
    pub gamma: f64,
    /// Years per step.
    pub delta_step: f64,
    pub num_steps: usize,
    /// Armington substitution exponent.
    pub sub_rate: f64,
    pub dom_pref: f64,
    /// Foreign preference weights indexed by source region. Empty means uniform
    /// `(1 - dom_pref) / (N - 1)`, resolved when the model is built.
    #[serde(default)]
    pub for_pref: Vec<f64>,
    /// Abatement cost exponent.
    pub theta2: f64,
    pub backstop_price: f64,
    /// Annual capital depreciation rate.
    pub delta_k: f64,
    /// Annual carbon-intensity decline rate.
    pub g_sigma: f64,
    /// Damage coefficients applied to regions without their own.
    pub damage: DamageCoefficients,
}

impl Default for GlobalEconParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            epsilon: 1e-5,
            gamma: 0.3,
            delta_step: 5.0,
            num_steps: 20,
            sub_rate: 0.5,
            dom_pref: 0.5,
            for_pref: Vec::new(),
            theta2: 2.6,
            backstop_price: 550.0,
            delta_k: 0.1,
            g_sigma: 0.01,
            damage: DamageCoefficients::default(),
        }
    }
}

impl GlobalEconParams {
    /// Capital retained over one step, `(1 - delta_k)^delta_step`.
    pub fn capital_depreciation(&self) -> f64 {
        (1.0 - self.delta_k).powf(self.delta_step)
    }

    /// Foreign weights for `n` regions, honouring an explicit `for_pref`.
    pub fn resolved_for_pref(&self, n: usize) -> Vec<f64> {
        if !self.for_pref.is_empty() {
            return self.for_pref.clone();
        }
        if n < 2 {
            return vec![0.0; n];
        }
        let w = (1.0 - self.dom_pref).max(0.0) / (n - 1) as f64;
        vec![w; n]
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |ok: bool, field: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("econ.{field}"), None, reason))
            }
        };
        check(
            self.alpha.is_finite() && self.alpha != 1.0,
            "alpha",
            "must be finite and != 1",
        )?;
        check(self.epsilon > 0.0 && self.epsilon.is_finite(), "epsilon", "must be > 0")?;
        check(self.gamma > 0.0 && self.gamma < 1.0, "gamma", "must lie in (0, 1)")?;
        check(
            self.delta_step > 0.0 && self.delta_step.is_finite(),
            "delta_step",
            "must be > 0",
        )?;
        check(self.num_steps > 0, "num_steps", "must be > 0")?;
        check(
            self.sub_rate > 0.0 && self.sub_rate <= 1.0,
            "sub_rate",
            "must lie in (0, 1]",
        )?;
        check(
            self.dom_pref >= 0.0 && self.dom_pref.is_finite(),
            "dom_pref",
            "must be >= 0",
        )?;
        check(self.theta2 > 1.0 && self.theta2.is_finite(), "theta2", "must be > 1")?;
        check(
            self.backstop_price >= 0.0 && self.backstop_price.is_finite(),
            "backstop_price",
            "must be >= 0",
        )?;
        check(
            self.delta_k >= 0.0 && self.delta_k < 1.0,
            "delta_k",
            "must lie in [0, 1)",
        )?;
        check(self.g_sigma.is_finite(), "g_sigma", "must be finite")?;
        self.damage.validate(None)?;
        if !self.for_pref.is_empty() {
            if self.for_pref.len() != n {
                return Err(Error::config(
                    "econ.for_pref",
                    None,
                    format!("has {} entries for {n} regions", self.for_pref.len()),
                ));
            }
            if let Some(i) = self.for_pref.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::config(
                    "econ.for_pref",
                    Some(i),
                    "weights must be finite and >= 0",
                ));
            }
        }
        let total = self.dom_pref + self.resolved_for_pref(n).iter().sum::<f64>();
        check(total > 0.0, "dom_pref", "preference weights must not all be zero")
    }
}

/// Coefficients of `1 / (1 + a1 T + a2 T^a3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamageCoefficients {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for DamageCoefficients {
    fn default() -> Self {
        Self {
            a1: 0.0,
            a2: 0.00236,
            a3: 2.0,
        }
    }
}

impl DamageCoefficients {
    pub(crate) fn validate(&self, region: Option<usize>) -> Result<()> {
        if !(self.a1.is_finite() && self.a1 >= 0.0) {
            return Err(Error::config("damage_a1", region, "must be finite and >= 0"));
        }
        if !(self.a2.is_finite() && self.a2 >= 0.0) {
            return Err(Error::config("damage_a2", region, "must be finite and >= 0"));
        }
        if !(self.a3.is_finite() && self.a3 > 0.0) {
            return Err(Error::config("damage_a3", region, "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Static calibration of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub id: usize,
    /// Initial technology.
    pub a0: f64,
    /// Initial capital.
    pub k0: f64,
    /// Initial labor, millions.
    pub l0: f64,
    /// Long-term population, millions.
    pub l_a: f64,
    pub delta_a: f64,
    pub g_a: f64,
    /// Labor convergence speed. May be negative.
    pub l_g: f64,
    /// Initial carbon intensity.
    pub sigma0: f64,
    pub damage: DamageCoefficients,
}

impl RegionParams {
    pub fn validate(&self) -> Result<()> {
        let r = Some(self.id);
        let finite = [
            ("xA_0", self.a0),
            ("xK_0", self.k0),
            ("xL_0", self.l0),
            ("xL_a", self.l_a),
            ("xdelta_A", self.delta_a),
            ("xg_A", self.g_a),
            ("xl_g", self.l_g),
            ("xsigma_0", self.sigma0),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(name, r, "must be finite"));
            }
        }
        if self.l0 <= 0.0 {
            return Err(Error::config("xL_0", r, format!("must be > 0, got {}", self.l0)));
        }
        if self.l_a <= 0.0 {
            return Err(Error::config("xL_a", r, format!("must be > 0, got {}", self.l_a)));
        }
        if self.a0 <= 0.0 {
            return Err(Error::config("xA_0", r, format!("must be > 0, got {}", self.a0)));
        }
        if self.k0 < 0.0 {
            return Err(Error::config("xK_0", r, format!("must be >= 0, got {}", self.k0)));
        }
        if self.sigma0 < 0.0 {
            return Err(Error::config(
                "xsigma_0",
                r,
                format!("must be >= 0, got {}", self.sigma0),
            ));
        }
        self.damage.validate(r)
    }
}

/// Time-varying economy of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionState {
    pub labor: f64,
    pub technology: f64,
    pub capital: f64,
    pub sigma: f64,
    /// Aggregate consumption of the last completed step.
    pub consumption: f64,
    pub step_utility: f64,
    pub cumulative_utility: f64,
}

impl RegionState {
    pub fn initial(params: &RegionParams) -> Self {
        Self {
            labor: params.l0,
            technology: params.a0,
            capital: params.k0,
            sigma: params.sigma0,
            consumption: 0.0,
            step_utility: 0.0,
            cumulative_utility: 0.0,
        }
    }
}

/// One region's decisions for a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub savings_rate: f64,
    pub mitigation_rate: f64,
    /// Maximum export quantity in output units.
    pub export_cap: f64,
    /// Desired imports from each region, output units.
    pub import_bids: Vec<f64>,
    /// Import tariff applied to goods from each region.
    pub tariffs: Vec<f64>,
}

impl ActionVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            savings_rate: 0.0,
            mitigation_rate: 0.0,
            export_cap: 0.0,
            import_bids: vec![0.0; n],
            tariffs: vec![0.0; n],
        }
    }

    /// Constant savings and mitigation with no trade.
    pub fn rates(n: usize, savings_rate: f64, mitigation_rate: f64) -> Self {
        Self {
            savings_rate,
            mitigation_rate,
            ..Self::zeros(n)
        }
    }

    /// Clamp every field into its valid range for acting region `me`.
    ///
    /// Non-finite entries are rejected rather than clamped.
    pub fn sanitized(&self, me: usize, n: usize, step: usize) -> Result<Self> {
        let nan = |field| Error::NonFinite {
            step,
            region: Some(me),
            field,
        };
        if self.import_bids.len() != n || self.tariffs.len() != n {
            return Err(Error::InvalidArgument(format!(
                "region {me}: action vectors must have length {n} (import_bids {}, tariffs {})",
                self.import_bids.len(),
                self.tariffs.len()
            )));
        }
        if !self.savings_rate.is_finite() {
            return Err(nan("savings_rate"));
        }
        if !self.mitigation_rate.is_finite() {
            return Err(nan("mitigation_rate"));
        }
        if self.export_cap.is_nan() {
            return Err(nan("export_cap"));
        }
        let mut import_bids = Vec::with_capacity(n);
        let mut tariffs = Vec::with_capacity(n);
        for j in 0..n {
            let (b, t) = (self.import_bids[j], self.tariffs[j]);
            if !b.is_finite() {
                return Err(nan("import_bids"));
            }
            if !t.is_finite() {
                return Err(nan("tariffs"));
            }
            if j == me {
                import_bids.push(0.0);
                tariffs.push(0.0);
            } else {
                import_bids.push(b.max(0.0));
                tariffs.push(t.clamp(0.0, 1.0));
            }
        }
        Ok(Self {
            savings_rate: self.savings_rate.clamp(0.0, 1.0),
            mitigation_rate: self.mitigation_rate.clamp(0.0, 1.0),
            export_cap: self.export_cap.max(0.0),
            import_bids,
            tariffs,
        })
    }

    /// Mean import bid over trading partners.
    pub fn mean_import_bid(&self, me: usize) -> f64 {
        partner_mean(&self.import_bids, me)
    }

    /// Mean tariff over trading partners.
    pub fn mean_tariff(&self, me: usize) -> f64 {
        partner_mean(&self.tariffs, me)
    }
}

fn partner_mean(values: &[f64], me: usize) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = values
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != me)
        .map(|(_, v)| v)
        .sum();
    total / (n - 1) as f64
}

/// Realized shipments after clearing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeOutcome {
    /// `exports[i][j]` is what region `i` shipped to region `j`.
    pub exports: Vec<Vec<f64>>,
    /// `foreign_consumption[j][i]` is what region `j` received from `i` after tariffs.
    pub foreign_consumption: Vec<Vec<f64>>,
}

impl TradeOutcome {
    pub fn total_exports(&self, i: usize) -> f64 {
        self.exports[i].iter().sum()
    }

    pub fn total_imports(&self, j: usize) -> f64 {
        self.foreign_consumption[j].iter().sum()
    }
}

/// Per-step utility of a region.
pub fn step_utility(labor: f64, consumption: f64, params: &GlobalEconParams) -> f64 {
    let pop = labor / 1000.0;
    let per_capita = consumption / pop + params.epsilon;
    let one_minus_alpha = 1.0 - params.alpha;
    pop * (per_capita.powf(one_minus_alpha) - 1.0) / one_minus_alpha
}

pub fn update_labor(labor: f64, params: &RegionParams) -> f64 {
    labor * ((1.0 + params.l_a) / (1.0 + labor)).powf(params.l_g)
}

/// Technology after step `t` (1-based: the first update uses `t = 1`).
pub fn update_technology(technology: f64, t: usize, params: &RegionParams, global: &GlobalEconParams) -> f64 {
    let decay = (-params.delta_a * global.delta_step * (t as f64 - 1.0)).exp();
    (TFP_DRIFT.exp() + params.g_a * decay) * technology
}

pub fn update_capital(capital: f64, gross_output: f64, savings_rate: f64, global: &GlobalEconParams) -> f64 {
    global.capital_depreciation() * capital + global.delta_step * savings_rate * gross_output
}

/// Cobb-Douglas production `A K^gamma (L/1000)^(1-gamma)`.
pub fn production(technology: f64, capital: f64, labor: f64, gamma: f64) -> f64 {
    technology * capital.powf(gamma) * (labor / 1000.0).powf(1.0 - gamma)
}

/// Output multiplier lost to warming, in `(0, 1]`.
pub fn damages_factor(atm_temp: f64, damage: &DamageCoefficients) -> f64 {
    let t = atm_temp.max(0.0);
    1.0 / (1.0 + damage.a1 * t + damage.a2 * t.powf(damage.a3))
}

/// Fraction of production spent on abatement.
pub fn abatement_cost(mitigation_rate: f64, sigma: f64, global: &GlobalEconParams) -> f64 {
    let scale = global.backstop_price / (1000.0 * global.theta2);
    (scale * sigma * mitigation_rate.powf(global.theta2)).min(MAX_ABATEMENT_COST)
}

pub fn gross_output(damages: f64, abatement_cost: f64, production: f64) -> f64 {
    damages * (1.0 - abatement_cost) * production
}

/// What a region can ship this step: its export cap, bounded by post-investment output.
pub fn export_capacity(action: &ActionVector, gross_output: f64) -> f64 {
    let surplus = (gross_output * (1.0 - action.savings_rate)).max(0.0);
    action.export_cap.min(surplus)
}

/// Clear all bilateral import bids against exporter capacity.
///
/// Bids exceeding an exporter's capacity are scaled down proportionally.
/// Tariffs destroy the taxed share of each shipment.
pub fn clear_trade(actions: &[ActionVector], gross_outputs: &[f64]) -> TradeOutcome {
    let n = actions.len();
    let mut exports = vec![vec![0.0; n]; n];
    let mut foreign_consumption = vec![vec![0.0; n]; n];
    for (i, exporter) in actions.iter().enumerate() {
        let demanded: f64 = actions
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, importer)| importer.import_bids[i])
            .sum();
        if demanded <= 0.0 {
            continue;
        }
        let capacity = export_capacity(exporter, gross_outputs[i]);
        let scale = if demanded > capacity { capacity / demanded } else { 1.0 };
        for (j, importer) in actions.iter().enumerate() {
            if j == i {
                continue;
            }
            let shipped = importer.import_bids[i] * scale;
            exports[i][j] = shipped;
            foreign_consumption[j][i] = shipped * (1.0 - importer.tariffs[i]);
        }
    }
    TradeOutcome {
        exports,
        foreign_consumption,
    }
}

pub fn domestic_consumption(gross_output: f64, savings_rate: f64, total_exports: f64) -> f64 {
    let investment = savings_rate * gross_output;
    (gross_output - investment - total_exports).max(0.0)
}

/// CES aggregate of domestic and imported consumption.
///
/// `for_pref` and `c_for` are indexed by source region.
pub fn aggregate_consumption(c_dom: f64, c_for: &[f64], dom_pref: f64, for_pref: &[f64], sub_rate: f64) -> f64 {
    debug_assert_eq!(c_for.len(), for_pref.len());
    let mut inner = dom_pref * c_dom.powf(sub_rate);
    for (w, c) in for_pref.iter().zip(c_for) {
        if *c > 0.0 {
            inner += w * c.powf(sub_rate);
        }
    }
    inner.powf(1.0 / sub_rate)
}

pub fn update_carbon_intensity(sigma: f64, global: &GlobalEconParams) -> f64 {
    sigma * (-global.g_sigma * global.delta_step).exp()
}
