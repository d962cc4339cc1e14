//! Episode state and the per-step pipeline.
//!
//! One step runs, in order: negotiation (optional), actions, masking, trade
//! clearing, economy updates, emissions, the climate update and rewards.
//! Production, damages and abatement use the state at the start of the step,
//! including the temperature left by the previous climate update. Logged
//! region fields (labor, technology, capital, sigma) are the start-of-step
//! values the step's output and utility were computed from.

use serde::{Deserialize, Serialize};

use crate::climate::{self, ClimateState};
use crate::config::Model;
use crate::econ::{self, ActionVector, RegionState};
use crate::error::{Error, Result};
use crate::negotiation::{self, NegotiationState};
use crate::policy::{quantize, ActionMeans, Decision, Observation, PolicyAssignment};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub step_index: usize,
    pub seed: u64,
    pub regions: Vec<RegionState>,
    pub climate: ClimateState,
    /// Negotiation round of the current step; its floors mask the next
    /// `step`, which hands back a state without one.
    pub negotiation: Option<NegotiationState>,
    /// Means of the previous step's masked actions.
    pub prev_means: ActionMeans,
}

impl WorldState {
    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn floor(&self, region: usize) -> f64 {
        self.negotiation.as_ref().map_or(0.0, |n| n.floors[region])
    }
}

/// What one region did and experienced during one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub labor: f64,
    pub technology: f64,
    pub capital: f64,
    pub sigma: f64,
    pub production: f64,
    pub gross_output: f64,
    pub investment: f64,
    pub exports: f64,
    /// Foreign goods received after tariffs.
    pub imports: f64,
    pub domestic_consumption: f64,
    pub consumption: f64,
    pub utility: f64,
    pub emissions: f64,
    pub savings_rate: f64,
    pub mitigation_rate: f64,
    pub export_cap: f64,
    pub mean_import_bid: f64,
    pub mean_tariff: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Climate after this step's update.
    pub temp_atmosphere: f64,
    pub temp_ocean: f64,
    pub carbon_mass_atm: f64,
    pub emissions: f64,
    pub regions: Vec<RegionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub region_rewards: Vec<f64>,
    pub collective_reward: f64,
    pub temperature_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub num_regions: usize,
    pub num_steps: usize,
    pub seed: u64,
    pub negotiation_on: bool,
    pub initial_temperature: f64,
    pub steps: Vec<StepRecord>,
    /// Per-step negotiation rounds, kept only for verbose runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negotiation: Vec<NegotiationState>,
    pub summary: Option<EpisodeSummary>,
}

impl EpisodeLog {
    pub fn new(
        num_regions: usize,
        num_steps: usize,
        seed: u64,
        negotiation_on: bool,
        initial_temperature: f64,
    ) -> Self {
        Self {
            num_regions,
            num_steps,
            seed,
            negotiation_on,
            initial_temperature,
            steps: Vec::with_capacity(num_steps),
            negotiation: Vec::new(),
            summary: None,
        }
    }

    pub fn check_complete(&self) -> Result<()> {
        let rectangular = self.steps.iter().all(|s| s.regions.len() == self.num_regions);
        if self.steps.len() != self.num_steps || !rectangular {
            let found = format!(
                "{} steps with region counts {:?}",
                self.steps.len(),
                self.steps.iter().map(|s| s.regions.len()).collect::<Vec<_>>()
            );
            return Err(Error::IncompleteLog {
                expected_steps: self.num_steps,
                expected_regions: self.num_regions,
                found,
            });
        }
        Ok(())
    }

    /// Mean over steps and regions of each logged action field.
    pub fn action_means(&self) -> ActionMeans {
        let mut m = ActionMeans::default();
        let mut count = 0.0;
        for s in &self.steps {
            for r in &s.regions {
                m.savings_rate += r.savings_rate;
                m.mitigation_rate += r.mitigation_rate;
                m.export_cap += r.export_cap;
                m.import_bid += r.mean_import_bid;
                m.tariff += r.mean_tariff;
                count += 1.0;
            }
        }
        if count > 0.0 {
            m.savings_rate /= count;
            m.mitigation_rate /= count;
            m.export_cap /= count;
            m.import_bid /= count;
            m.tariff /= count;
        }
        m
    }

    pub fn final_temperature(&self) -> Option<f64> {
        self.steps.last().map(|s| s.temp_atmosphere)
    }
}

/// Per-region episode rewards and their sum.
pub fn episode_rewards(log: &EpisodeLog) -> Result<(Vec<f64>, f64)> {
    log.check_complete()?;
    let mut per_region = vec![0.0; log.num_regions];
    for s in &log.steps {
        for (u, r) in per_region.iter_mut().zip(&s.regions) {
            *u += r.utility;
        }
    }
    let collective = per_region.iter().sum();
    Ok((per_region, collective))
}

/// Final atmospheric temperature minus the temperature at reset.
pub fn temperature_increase(log: &EpisodeLog) -> Result<f64> {
    log.check_complete()?;
    let last = log.final_temperature().unwrap_or(log.initial_temperature);
    Ok(last - log.initial_temperature)
}

pub fn reset(model: &Model, seed: u64) -> WorldState {
    WorldState {
        step_index: 0,
        seed,
        regions: model.regions.iter().map(RegionState::initial).collect(),
        climate: model.initial_climate.clone(),
        negotiation: None,
        prev_means: ActionMeans::default(),
    }
}

pub fn build_observation(model: &Model, state: &WorldState, region: usize) -> Result<Observation> {
    let r = state
        .regions
        .get(region)
        .ok_or_else(|| Error::InvalidArgument(format!("region {region} out of range")))?;
    Ok(Observation {
        region,
        num_regions: state.num_regions(),
        step_fraction: state.step_index as f64 / model.num_steps() as f64,
        temp_atmosphere: state.climate.temp_atmosphere,
        carbon_mass_atm: state.climate.masses[0],
        labor: r.labor,
        technology: r.technology,
        capital: r.capital,
        sigma: r.sigma,
        production: econ::production(r.technology, r.capital, r.labor, model.econ.gamma),
        floor: state.floor(region),
        prev_means: state.prev_means,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: WorldState,
    pub rewards: Vec<f64>,
    pub record: StepRecord,
}

fn finite(v: f64, step: usize, region: Option<usize>, field: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { step, region, field })
    }
}

/// Advance one step. `actions` are clamped, then masked by the floors of
/// `state.negotiation` when present. The input state is left untouched.
pub fn step(model: &Model, state: &WorldState, actions: &[ActionVector]) -> Result<StepOutcome> {
    let n = state.num_regions();
    let t = state.step_index;
    if t >= model.num_steps() {
        return Err(Error::EpisodeFinished(t));
    }
    if actions.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} actions for {n} regions",
            actions.len()
        )));
    }
    let g = &model.econ;

    let mut masked = Vec::with_capacity(n);
    for (i, a) in actions.iter().enumerate() {
        let clean = a.sanitized(i, n, t)?;
        masked.push(negotiation::mask_action(&clean, state.floor(i)));
    }

    let temp = state.climate.temp_atmosphere;
    let mut productions = Vec::with_capacity(n);
    let mut gross = Vec::with_capacity(n);
    for (i, (r, a)) in state.regions.iter().zip(&masked).enumerate() {
        let p = finite(
            econ::production(r.technology, r.capital, r.labor, g.gamma),
            t,
            Some(i),
            "production",
        )?;
        let d = econ::damages_factor(temp, &model.regions[i].damage);
        let cost = econ::abatement_cost(a.mitigation_rate, r.sigma, g);
        productions.push(p);
        gross.push(finite(econ::gross_output(d, cost, p), t, Some(i), "gross_output")?);
    }

    let trade = econ::clear_trade(&masked, &gross);

    let mut next_regions = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut total_emissions = 0.0;
    for (i, (r, a)) in state.regions.iter().zip(&masked).enumerate() {
        let params = &model.regions[i];
        let exports = trade.total_exports(i);
        let c_dom = econ::domestic_consumption(gross[i], a.savings_rate, exports);
        let consumption = finite(
            econ::aggregate_consumption(
                c_dom,
                &trade.foreign_consumption[i],
                g.dom_pref,
                &g.for_pref,
                g.sub_rate,
            ),
            t,
            Some(i),
            "consumption",
        )?;
        let utility = finite(econ::step_utility(r.labor, consumption, g), t, Some(i), "utility")?;
        let emissions = econ_emissions(r.sigma, a.mitigation_rate, productions[i], g.delta_step);
        total_emissions += emissions;

        let next = RegionState {
            labor: finite(econ::update_labor(r.labor, params), t, Some(i), "labor")?,
            technology: finite(
                econ::update_technology(r.technology, t + 1, params, g),
                t,
                Some(i),
                "technology",
            )?,
            capital: finite(
                econ::update_capital(r.capital, gross[i], a.savings_rate, g),
                t,
                Some(i),
                "capital",
            )?,
            sigma: econ::update_carbon_intensity(r.sigma, g),
            consumption,
            step_utility: utility,
            cumulative_utility: r.cumulative_utility + utility,
        };
        records.push(RegionRecord {
            labor: r.labor,
            technology: r.technology,
            capital: r.capital,
            sigma: r.sigma,
            production: productions[i],
            gross_output: gross[i],
            investment: a.savings_rate * gross[i],
            exports,
            imports: trade.total_imports(i),
            domestic_consumption: c_dom,
            consumption,
            utility,
            emissions,
            savings_rate: a.savings_rate,
            mitigation_rate: a.mitigation_rate,
            export_cap: a.export_cap,
            mean_import_bid: a.mean_import_bid(i),
            mean_tariff: a.mean_tariff(i),
            floor: state.floor(i),
        });
        rewards.push(utility);
        next_regions.push(next);
    }

    let total_emissions = finite(total_emissions, t, None, "emissions")?;
    let next_climate = climate::step_climate(&state.climate, total_emissions, t, &model.climate);
    finite(next_climate.temp_atmosphere, t, None, "temp_atmosphere")?;

    let record = StepRecord {
        step: t,
        temp_atmosphere: next_climate.temp_atmosphere,
        temp_ocean: next_climate.temp_ocean,
        carbon_mass_atm: next_climate.masses[0],
        emissions: total_emissions,
        regions: records,
    };
    let next = WorldState {
        step_index: t + 1,
        seed: state.seed,
        regions: next_regions,
        climate: next_climate,
        negotiation: None,
        prev_means: ActionMeans::of(&masked),
    };
    Ok(StepOutcome {
        state: next,
        rewards,
        record,
    })
}

fn econ_emissions(sigma: f64, mitigation: f64, production: f64, delta_step: f64) -> f64 {
    climate::emissions(sigma, mitigation, production, delta_step)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub negotiation_on: bool,
    /// Keep every negotiation round in the log.
    pub verbose: bool,
    /// Quantize policy fractions to this many levels.
    pub quantize_levels: Option<u32>,
    /// Episode index mixed into the random streams.
    pub episode: u64,
}

impl RunOptions {
    pub fn negotiation(on: bool) -> Self {
        Self {
            negotiation_on: on,
            ..Default::default()
        }
    }
}

/// Run the proposal and evaluation stages for the current state.
pub fn negotiate(
    model: &Model,
    state: &WorldState,
    policies: &PolicyAssignment,
    options: &RunOptions,
) -> Result<NegotiationState> {
    let n = state.num_regions();
    let t = state.step_index as u64;
    let observations = (0..n)
        .map(|i| build_observation(model, state, i))
        .collect::<Result<Vec<_>>>()?;
    let decisions = observations
        .iter()
        .enumerate()
        .map(|(i, o)| policies.for_region(i).prepare(o))
        .collect::<Result<Vec<Decision>>>()?;

    let q = |x: f64| options.quantize_levels.map_or(x, |l| quantize(x, l));
    let mut proposal_rngs: Vec<_> = (0..n)
        .map(|i| stream(state.seed, options.episode, t, i as u64, Purpose::Proposal))
        .collect();
    let proposals = negotiation::collect_proposals(n, |i, j| {
        let (promise, request) = decisions[i].offer(j, &mut proposal_rngs[i]);
        (q(promise), q(request))
    });

    let mut eval_rngs: Vec<_> = (0..n)
        .map(|j| stream(state.seed, options.episode, t, j as u64, Purpose::Evaluation))
        .collect();
    let acceptances: Vec<bool> = proposals
        .iter()
        .map(|p| decisions[p.recipient].accepts(p, &mut eval_rngs[p.recipient]))
        .collect();
    let floors = negotiation::compute_floors(n, &proposals, &acceptances);
    Ok(NegotiationState {
        proposals,
        acceptances,
        floors,
    })
}

/// Ask every region's policy for its action in the current state.
pub fn policy_actions(
    model: &Model,
    state: &WorldState,
    policies: &PolicyAssignment,
    options: &RunOptions,
) -> Result<Vec<ActionVector>> {
    let t = state.step_index as u64;
    (0..state.num_regions())
        .map(|i| {
            let obs = build_observation(model, state, i)?;
            let mut rng = stream(state.seed, options.episode, t, i as u64, Purpose::Action);
            let mut a = policies.for_region(i).prepare(&obs)?.action(&mut rng);
            if let Some(levels) = options.quantize_levels {
                a.savings_rate = quantize(a.savings_rate, levels);
                a.mitigation_rate = quantize(a.mitigation_rate, levels);
                for x in a.tariffs.iter_mut() {
                    *x = quantize(*x, levels);
                }
            }
            Ok(a)
        })
        .collect()
}

/// Drive a full episode with a caller-supplied decision function.
///
/// `decide` receives the state at the start of each step and returns the
/// negotiation round to apply (if any) and the raw actions.
pub fn run_driven<F>(model: &Model, seed: u64, negotiation_on: bool, verbose: bool, mut decide: F) -> Result<EpisodeLog>
where
    F: FnMut(&WorldState) -> Result<(Option<NegotiationState>, Vec<ActionVector>)>,
{
    let pending = std::cell::Cell::new(Vec::new());
    run_staged(
        model,
        seed,
        negotiation_on,
        verbose,
        |state| {
            let (round, actions) = decide(state)?;
            pending.set(actions);
            Ok(round)
        },
        |_| Ok(pending.take()),
        |_, _| {},
    )
}

/// The episode loop: negotiate, store the round in the state, then act on it.
fn run_staged<N, A, O>(
    model: &Model,
    seed: u64,
    negotiation_on: bool,
    verbose: bool,
    mut negotiate: N,
    mut act: A,
    mut observe: O,
) -> Result<EpisodeLog>
where
    N: FnMut(&WorldState) -> Result<Option<NegotiationState>>,
    A: FnMut(&WorldState) -> Result<Vec<ActionVector>>,
    O: FnMut(&StepRecord, Option<&NegotiationState>),
{
    let mut state = reset(model, seed);
    let mut log = EpisodeLog::new(
        model.num_regions(),
        model.num_steps(),
        seed,
        negotiation_on,
        state.climate.temp_atmosphere,
    );
    while state.step_index < model.num_steps() {
        state.negotiation = negotiate(&state)?;
        let actions = act(&state)?;
        let out = step(model, &state, &actions)?;
        observe(&out.record, state.negotiation.as_ref());
        if verbose {
            if let Some(round) = state.negotiation.take() {
                log.negotiation.push(round);
            }
        }
        log.steps.push(out.record);
        state = out.state;
    }
    let (region_rewards, collective_reward) = episode_rewards(&log)?;
    let temperature_increase = temperature_increase(&log)?;
    log.summary = Some(EpisodeSummary {
        region_rewards,
        collective_reward,
        temperature_increase,
    });
    Ok(log)
}

pub fn run_episode(model: &Model, policies: &PolicyAssignment, seed: u64, options: &RunOptions) -> Result<EpisodeLog> {
    run_episode_observed(model, policies, seed, options, |_, _| {})
}

/// [`run_episode`] with a callback after every step.
pub fn run_episode_observed<O>(
    model: &Model,
    policies: &PolicyAssignment,
    seed: u64,
    options: &RunOptions,
    observe: O,
) -> Result<EpisodeLog>
where
    O: FnMut(&StepRecord, Option<&NegotiationState>),
{
    policies.validate(model.num_regions())?;
    run_staged(
        model,
        seed,
        options.negotiation_on,
        options.verbose,
        |state| {
            if options.negotiation_on {
                negotiate(model, state, policies, options).map(Some)
            } else {
                Ok(None)
            }
        },
        |state| policy_actions(model, state, policies, options),
        observe,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{FixedRates, PolicySpec};

    #[test]
    fn reset_initializes_from_table() {
        let model = Model::default_27();
        let s = reset(&model, 3);
        assert_eq!(s.regions.len(), 27);
        assert_eq!(s.regions[0].labor, 476.878);
        assert_eq!(s.step_index, 0);
        assert_eq!(s, reset(&model, 3));
        let small = model.truncated(3).unwrap();
        assert_eq!(reset(&small, 3).regions.len(), 3);
    }

    #[test]
    fn zero_actions_first_step() {
        let model = Model::default_27();
        let s = reset(&model, 0);
        let actions = vec![ActionVector::zeros(27); 27];
        let out = step(&model, &s, &actions).unwrap();
        let r0 = &out.state.regions[0];
        assert!((r0.labor - 482.40315188667415).abs() / 482.4 < 1e-12);
        assert!((r0.technology - 2.1065718042616).abs() / 2.1 < 1e-12);
        assert!((r0.capital - 0.239 * 0.9f64.powi(5)).abs() < 1e-15);
        assert!(out.record.regions.iter().all(|r| r.exports == 0.0 && r.imports == 0.0));
        assert_eq!(out.state.step_index, 1);
        assert_eq!(s.step_index, 0);
        // purity
        assert_eq!(step(&model, &s, &actions).unwrap(), out);
    }

    #[test]
    fn full_abatement_stops_emissions() {
        let model = Model::default_27();
        let s = reset(&model, 0);
        let actions = vec![ActionVector::rates(27, 0.2, 1.0); 27];
        let out = step(&model, &s, &actions).unwrap();
        assert_eq!(out.record.emissions, 0.0);
    }

    #[test]
    fn step_rejects_wrong_shapes_and_finished_episodes() {
        let model = Model::default_27().truncated(3).unwrap();
        let s = reset(&model, 0);
        assert!(step(&model, &s, &[ActionVector::zeros(3)]).is_err());
        let done = WorldState {
            step_index: model.num_steps(),
            ..s
        };
        assert!(matches!(
            step(&model, &done, &vec![ActionVector::zeros(3); 3]),
            Err(Error::EpisodeFinished(20))
        ));
    }

    #[test]
    fn nan_action_aborts_with_location() {
        let model = Model::default_27().truncated(3).unwrap();
        let s = reset(&model, 0);
        let mut actions = vec![ActionVector::zeros(3); 3];
        actions[2].savings_rate = f64::NAN;
        match step(&model, &s, &actions) {
            Err(Error::NonFinite {
                step: 0,
                region: Some(2),
                field,
            }) => assert_eq!(field, "savings_rate"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn episode_has_twenty_rows_per_region() {
        let model = Model::default_27();
        let log = run_episode(
            &model,
            &PolicyAssignment::Shared(PolicySpec::Zero),
            1,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(log.steps.len(), 20);
        assert!(log.steps.iter().all(|s| s.regions.len() == 27));
        let summary = log.summary.as_ref().unwrap();
        for i in 0..27 {
            let total: f64 = log.steps.iter().map(|s| s.regions[i].utility).sum();
            assert!((total - summary.region_rewards[i]).abs() <= 1e-12 * total.abs().max(1.0));
        }
    }

    #[test]
    fn zero_policy_negotiation_is_a_no_op() {
        let model = Model::default_27();
        let p = PolicyAssignment::Shared(PolicySpec::Zero);
        let off = run_episode(&model, &p, 4, &RunOptions::negotiation(false)).unwrap();
        let on = run_episode(&model, &p, 4, &RunOptions::negotiation(true)).unwrap();
        assert_eq!(off.steps, on.steps);
        assert_eq!(off.summary, on.summary);
    }

    #[test]
    fn observations() {
        let model = Model::default_27().truncated(4).unwrap();
        let s = reset(&model, 0);
        let o = build_observation(&model, &s, 2).unwrap();
        assert_eq!(o.step_fraction, 0.0);
        assert_eq!(o.floor, 0.0);
        assert!(o.features().iter().all(|f| f.is_finite()));
        assert!(build_observation(&model, &s, 4).is_err());
    }

    #[test]
    fn negotiation_floors_mask_actions() {
        let model = Model::default_27().truncated(3).unwrap();
        let keen = PolicySpec::Fixed(FixedRates {
            promise: 0.4,
            request: 0.6,
            accept_up_to: 1.0,
            ..FixedRates::rates(0.2, 0.1)
        });
        let log = run_episode(
            &model,
            &PolicyAssignment::Shared(keen),
            0,
            &RunOptions {
                negotiation_on: true,
                verbose: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(log.negotiation.len(), 20);
        for s in &log.steps {
            for r in &s.regions {
                assert_eq!(r.floor, 0.6);
                assert_eq!(r.mitigation_rate, 0.6);
            }
        }
    }

    #[test]
    fn incomplete_log_is_an_error() {
        let model = Model::default_27().truncated(2).unwrap();
        let mut log = run_episode(
            &model,
            &PolicyAssignment::Shared(PolicySpec::Zero),
            0,
            &RunOptions::default(),
        )
        .unwrap();
        log.steps.pop();
        assert!(matches!(episode_rewards(&log), Err(Error::IncompleteLog { .. })));
        assert!(temperature_increase(&log).is_err());
    }
}
