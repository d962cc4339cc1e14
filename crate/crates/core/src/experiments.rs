//! Experiment designs: negotiation on/off, and the labor/technology grid.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Model, SimConfig};
use crate::econ::RegionParams;
use crate::engine::{run_episode, RunOptions};
use crate::error::{Error, Result};
use crate::policy::{train_cem, ActionMeans, LinearPolicy, PolicyAssignment, PolicySpec, TrainBudget};
use crate::rng::derive_seed;

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// Label mixed into every training seed. Training depends only on the seed,
/// so identical configurations train identically across experiments.
const TRAIN_LABEL: u64 = 0x0074_7261_696e;

/// Relative perturbation of long-term population and technology growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ltc {
    pub labor_delta: f64,
    pub tech_delta: f64,
}

impl Ltc {
    /// Allowed values of either delta.
    pub const LEVELS: [f64; 3] = [-0.10, 0.0, 0.10];

    pub const IDENTITY: Ltc = Ltc {
        labor_delta: 0.0,
        tech_delta: 0.0,
    };

    pub fn new(labor_delta: f64, tech_delta: f64) -> Result<Self> {
        for (name, v) in [("labor_delta", labor_delta), ("tech_delta", tech_delta)] {
            if !Self::LEVELS.contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} {v} is not one of {:?}",
                    Self::LEVELS
                )));
            }
        }
        Ok(Self {
            labor_delta,
            tech_delta,
        })
    }

    /// All nine combinations, labor-major.
    pub fn grid() -> Vec<Ltc> {
        Self::LEVELS
            .iter()
            .flat_map(|&l| {
                Self::LEVELS.iter().map(move |&g| Ltc {
                    labor_delta: l,
                    tech_delta: g,
                })
            })
            .collect()
    }

    /// Short label such as `l-10_g+0`.
    pub fn label(&self) -> String {
        format!(
            "l{:+}_g{:+}",
            (self.labor_delta * 100.0).round() as i64,
            (self.tech_delta * 100.0).round() as i64
        )
    }
}

pub fn apply_ltc(params: &RegionParams, ltc: Ltc) -> RegionParams {
    RegionParams {
        l_a: params.l_a * (1.0 + ltc.labor_delta),
        g_a: params.g_a * (1.0 + ltc.tech_delta),
        ..params.clone()
    }
}

/// Representative high-, mid- and low-ranked regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetRegions {
    pub high: usize,
    pub mid: usize,
    pub low: usize,
}

impl Default for SubsetRegions {
    fn default() -> Self {
        Self {
            high: 15,
            mid: 19,
            low: 6,
        }
    }
}

impl SubsetRegions {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, r) in [("high", self.high), ("mid", self.mid), ("low", self.low)] {
            if r >= n {
                return Err(Error::config(
                    format!("experiments.{name}"),
                    Some(r),
                    format!("region out of range for {n} regions"),
                ));
            }
        }
        Ok(())
    }
}

/// Which regions receive the perturbation in a grid test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionSubset {
    All,
    High,
    Mid,
    Low,
}

impl RegionSubset {
    pub const ALL: [RegionSubset; 4] = [
        RegionSubset::All,
        RegionSubset::High,
        RegionSubset::Mid,
        RegionSubset::Low,
    ];

    pub fn letter(self) -> char {
        match self {
            RegionSubset::All => 'a',
            RegionSubset::High => 'h',
            RegionSubset::Mid => 'm',
            RegionSubset::Low => 'l',
        }
    }

    /// The single tracked region, or `None` for the whole economy.
    pub fn region(self, subsets: &SubsetRegions) -> Option<usize> {
        match self {
            RegionSubset::All => None,
            RegionSubset::High => Some(subsets.high),
            RegionSubset::Mid => Some(subsets.mid),
            RegionSubset::Low => Some(subsets.low),
        }
    }

    pub fn perturb(self, model: &Model, subsets: &SubsetRegions, ltc: Ltc) -> Result<Model> {
        let target = self.region(subsets);
        let regions = model
            .regions
            .iter()
            .map(|r| match target {
                Some(t) if t != r.id => r.clone(),
                _ => apply_ltc(r, ltc),
            })
            .collect();
        model.with_region_params(regions)
    }
}

/// Rank of each region by descending utility; ties go to the lower id.
pub fn rank_regions(utilities: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..utilities.len()).collect();
    order.sort_by(|&a, &b| utilities[b].total_cmp(&utilities[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; utilities.len()];
    for (rank, &region) in order.iter().enumerate() {
        ranks[region] = rank;
    }
    ranks
}

/// `u_nego / u_no_nego`, undefined when the denominator is zero.
pub fn gain_ratio(u_nego: f64, u_no_nego: f64) -> Option<f64> {
    if u_no_nego == 0.0 || !u_nego.is_finite() || !u_no_nego.is_finite() {
        None
    } else {
        Some(u_nego / u_no_nego)
    }
}

/// Two decimals, truncated toward zero.
pub fn format_gain(gain: Option<f64>) -> String {
    match gain {
        None => "undefined".to_string(),
        Some(g) => {
            let t = (g.abs() * 100.0 + 1e-9).floor() / 100.0;
            format!("{:.2}", t.copysign(g))
        }
    }
}

/// Relative change in whole percent, e.g. `-14%`.
pub fn format_change(new: f64, old: f64) -> String {
    match percent_change(new, old) {
        None => "undefined".to_string(),
        Some(p) => {
            let r = p.round();
            if r == 0.0 {
                "0%".to_string()
            } else {
                format!("{r:+}%")
            }
        }
    }
}

pub fn percent_change(new: f64, old: f64) -> Option<f64> {
    gain_ratio(new - old, old.abs()).map(|g| g * 100.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn aggregate_stats(samples: &[f64]) -> Result<Stats> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate zero samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(Stats { mean, std: var.sqrt() })
}

/// Spearman correlation of two rankings without ties.
pub fn spearman(a: &[usize], b: &[usize]) -> Option<f64> {
    let n = a.len();
    if n < 2 || b.len() != n {
        return None;
    }
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    let n = n as f64;
    Some(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub savings_rate: Stats,
    pub mitigation_rate: Stats,
    pub export_cap: Stats,
    pub import_bid: Stats,
    pub tariff: Stats,
}

impl ActionStats {
    fn of(samples: &[ActionMeans]) -> Result<Self> {
        let field = |f: fn(&ActionMeans) -> f64| aggregate_stats(&samples.iter().map(f).collect::<Vec<_>>());
        Ok(Self {
            savings_rate: field(|a| a.savings_rate)?,
            mitigation_rate: field(|a| a.mitigation_rate)?,
            export_cap: field(|a| a.export_cap)?,
            import_bid: field(|a| a.import_bid)?,
            tariff: field(|a| a.tariff)?,
        })
    }
}

/// Training and evaluation of one configuration under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub initial_fitness: f64,
    pub train_fitness: f64,
    pub temperature_increase: f64,
    pub collective_reward: f64,
    pub region_rewards: Vec<f64>,
    pub ranks: Vec<usize>,
    pub actions: ActionMeans,
    pub policy: PolicyAssignment,
}

/// One configuration aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub negotiation_on: bool,
    pub ltc: Ltc,
    pub temperature_increase: Stats,
    pub collective_reward: Stats,
    pub region_rewards: Vec<Stats>,
    pub region_ranks: Vec<Stats>,
    /// Ranking of the mean regional rewards.
    pub ranks: Vec<usize>,
    pub actions: ActionStats,
    pub seeds: Vec<SeedOutcome>,
}

impl RunSummary {
    fn new(label: String, negotiation_on: bool, ltc: Ltc, seeds: Vec<SeedOutcome>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::InvalidArgument(format!("{label}: no seeds")));
        }
        let n = seeds[0].region_rewards.len();
        let column = |f: &dyn Fn(&SeedOutcome) -> f64| aggregate_stats(&seeds.iter().map(f).collect::<Vec<_>>());
        let region_rewards = (0..n)
            .map(|i| column(&|s| s.region_rewards[i]))
            .collect::<Result<Vec<_>>>()?;
        let region_ranks = (0..n)
            .map(|i| column(&|s| s.ranks[i] as f64))
            .collect::<Result<Vec<_>>>()?;
        let means: Vec<f64> = region_rewards.iter().map(|s| s.mean).collect();
        Ok(Self {
            temperature_increase: column(&|s| s.temperature_increase)?,
            collective_reward: column(&|s| s.collective_reward)?,
            ranks: rank_regions(&means),
            actions: ActionStats::of(&seeds.iter().map(|s| s.actions).collect::<Vec<_>>())?,
            region_rewards,
            region_ranks,
            label,
            negotiation_on,
            ltc,
            seeds,
        })
    }

    pub fn mean_rewards(&self) -> Vec<f64> {
        self.region_rewards.iter().map(|s| s.mean).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment1 {
    pub no_nego: RunSummary,
    pub nego: RunSummary,
    /// Per region, mean reward with negotiation over mean reward without.
    pub gains: Vec<Option<f64>>,
    /// Spearman correlation of the two rankings.
    pub rank_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub label: String,
    pub subset: RegionSubset,
    pub negotiation_on: bool,
    pub subtests: Vec<RunSummary>,
}

/// Average episode reward of one tracked region with and without negotiation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub subset: RegionSubset,
    /// Tracked region; `None` averages over every region of the all-regions test.
    pub region: Option<usize>,
    /// `(no_nego, nego)` per grid point, in [`Ltc::grid`] order.
    pub per_ltc: Vec<(f64, f64)>,
    pub no_nego: f64,
    pub nego: f64,
    pub change_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment2 {
    pub tests: Vec<TestResult>,
    pub deltas: Vec<DeltaRow>,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentBody {
    Experiment1(Experiment1),
    Experiment2(Experiment2),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub build_id: String,
    pub seeds: Vec<u64>,
    pub budget: TrainBudget,
    pub quantize_levels: Option<u32>,
    pub episodes: u64,
    pub wall_time_s: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub body: ExperimentBody,
}

pub fn build_id() -> String {
    let version = env!("CARGO_PKG_VERSION");
    match option_env!("RICESIM_BUILD_ID") {
        Some(id) => format!("ricesim-{version}+{id}"),
        None => format!("ricesim-{version}"),
    }
}

/// Inputs shared by both experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub model: Model,
    pub budget: TrainBudget,
    pub seeds: Vec<u64>,
    pub quantize_levels: Option<u32>,
    pub subsets: SubsetRegions,
}

impl ExperimentSettings {
    pub fn from_config(config: &SimConfig) -> Result<Self> {
        Ok(Self {
            model: config.model()?,
            budget: config.training.clone(),
            seeds: config.seeds.clone(),
            quantize_levels: config.quantize_levels,
            subsets: config.experiments.clone(),
        })
    }

    /// SHA-256 of every input that affects the numbers.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("settings serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.budget.iterations > 0 {
            self.budget.validate()?;
        }
        Ok(())
    }

    fn metadata(&self, episodes: u64, started: Instant, notes: Vec<String>) -> Metadata {
        Metadata {
            config_hash: self.hash(),
            build_id: build_id(),
            seeds: self.seeds.clone(),
            budget: self.budget.clone(),
            quantize_levels: self.quantize_levels,
            episodes,
            wall_time_s: started.elapsed().as_secs_f64(),
            notes,
        }
    }

    fn episodes_per_seed(&self) -> u64 {
        self.budget.episodes() as u64 + 1
    }
}

/// Train from scratch under `seed`, then evaluate the trained policy.
pub fn train_and_evaluate(
    model: &Model,
    settings: &ExperimentSettings,
    negotiation_on: bool,
    seed: u64,
) -> Result<SeedOutcome> {
    let options = RunOptions {
        negotiation_on,
        quantize_levels: settings.quantize_levels,
        ..Default::default()
    };
    let template = PolicyAssignment::Shared(PolicySpec::LinearCem(LinearPolicy::zeros()));
    let trained = train_cem(
        model,
        &template,
        &settings.budget,
        derive_seed(seed, TRAIN_LABEL),
        &options,
    )?;
    let log = run_episode(model, &trained.policy, seed, &options)?;
    let summary = log.summary.clone().expect("run_episode fills the summary");
    Ok(SeedOutcome {
        seed,
        initial_fitness: trained.initial_fitness,
        train_fitness: trained.best_fitness,
        temperature_increase: summary.temperature_increase,
        collective_reward: summary.collective_reward,
        ranks: rank_regions(&summary.region_rewards),
        region_rewards: summary.region_rewards,
        actions: log.action_means(),
        policy: trained.policy,
    })
}

fn mode_label(on: bool) -> &'static str {
    if on {
        "nego"
    } else {
        "no-nego"
    }
}

pub fn run_experiment1(settings: &ExperimentSettings) -> Result<ExperimentResult> {
    settings.validate()?;
    let started = Instant::now();
    let jobs: Vec<(bool, u64)> = [false, true]
        .iter()
        .flat_map(|&on| settings.seeds.iter().map(move |&s| (on, s)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(on, seed)| train_and_evaluate(&settings.model, settings, on, seed))
        .collect::<Result<Vec<_>>>()?;
    let (off, on) = outcomes.split_at(settings.seeds.len());
    let no_nego = RunSummary::new("test-1-no-nego".into(), false, Ltc::IDENTITY, off.to_vec())?;
    let nego = RunSummary::new("test-1-nego".into(), true, Ltc::IDENTITY, on.to_vec())?;
    let gains = nego
        .mean_rewards()
        .iter()
        .zip(no_nego.mean_rewards())
        .map(|(a, b)| gain_ratio(*a, b))
        .collect();
    let rank_correlation = spearman(&no_nego.ranks, &nego.ranks);
    let episodes = settings.episodes_per_seed() * jobs.len() as u64;
    Ok(ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        metadata: settings.metadata(episodes, started, Vec::new()),
        body: ExperimentBody::Experiment1(Experiment1 {
            no_nego,
            nego,
            gains,
            rank_correlation,
        }),
    })
}

/// Grid test label such as `test-2-h-nego`.
pub fn test_label(subset: RegionSubset, negotiation_on: bool) -> String {
    format!("test-2-{}-{}", subset.letter(), mode_label(negotiation_on))
}

pub fn run_experiment2(settings: &ExperimentSettings) -> Result<ExperimentResult> {
    settings.validate()?;
    settings.subsets.validate(settings.model.num_regions())?;
    let started = Instant::now();
    let grid = Ltc::grid();

    let mut tests = Vec::new();
    for on in [false, true] {
        for subset in RegionSubset::ALL {
            tests.push((subset, on));
        }
    }
    let mut models = Vec::new();
    for &(subset, _) in &tests {
        for &ltc in &grid {
            models.push(subset.perturb(&settings.model, &settings.subsets, ltc)?);
        }
    }
    let seeds = &settings.seeds;
    let jobs: Vec<(usize, usize, u64)> = (0..tests.len())
        .flat_map(|t| (0..grid.len()).flat_map(move |g| seeds.iter().map(move |&s| (t, g, s))))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(t, g, seed)| train_and_evaluate(&models[t * grid.len() + g], settings, tests[t].1, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut chunks = outcomes.chunks(seeds.len());
    let mut results = Vec::with_capacity(tests.len());
    for &(subset, on) in &tests {
        let label = test_label(subset, on);
        let subtests = grid
            .iter()
            .map(|&ltc| {
                let chunk = chunks.next().expect("one chunk per subtest");
                RunSummary::new(format!("{label}/{}", ltc.label()), on, ltc, chunk.to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        results.push(TestResult {
            label,
            subset,
            negotiation_on: on,
            subtests,
        });
    }
    if results.len() != 8 || results.iter().any(|t| t.subtests.len() != 9) {
        return Err(Error::InvalidArgument("experiment grid is incomplete".into()));
    }

    let deltas = delta_rows(&results, &settings.subsets);
    let episodes = settings.episodes_per_seed() * jobs.len() as u64;
    let notes = vec!["labor grid read as -10%, 0%, +10% of the long-term population".to_string()];
    Ok(ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        metadata: settings.metadata(episodes, started, notes),
        body: ExperimentBody::Experiment2(Experiment2 { tests: results, deltas }),
    })
}

fn delta_rows(tests: &[TestResult], subsets: &SubsetRegions) -> Vec<DeltaRow> {
    let find = |subset: RegionSubset, on: bool| {
        tests
            .iter()
            .find(|t| t.subset == subset && t.negotiation_on == on)
            .expect("every test is present")
    };
    [
        RegionSubset::High,
        RegionSubset::Mid,
        RegionSubset::Low,
        RegionSubset::All,
    ]
    .into_iter()
    .map(|subset| {
        let region = subset.region(subsets);
        let value = |s: &RunSummary| match region {
            Some(r) => s.region_rewards[r].mean,
            None => s.collective_reward.mean / s.region_rewards.len() as f64,
        };
        let (off, on) = (find(subset, false), find(subset, true));
        let per_ltc: Vec<(f64, f64)> = off
            .subtests
            .iter()
            .zip(&on.subtests)
            .map(|(a, b)| (value(a), value(b)))
            .collect();
        let k = per_ltc.len() as f64;
        let no_nego = per_ltc.iter().map(|p| p.0).sum::<f64>() / k;
        let nego = per_ltc.iter().map(|p| p.1).sum::<f64>() / k;
        DeltaRow {
            subset,
            region,
            per_ltc,
            no_nego,
            nego,
            change_percent: percent_change(nego, no_nego),
        }
    })
    .collect()
}
