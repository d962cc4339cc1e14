//! Cross-entropy search over linear policy weights.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LinearPolicy, PolicyAssignment, PolicySpec, BASE_DIMS, LINEAR_DIMS};
use crate::config::Model;
use crate::engine::{run_episode, RunOptions};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBudget {
    pub iterations: usize,
    pub population: usize,
    pub elite_fraction: f64,
    /// Initial sampling standard deviation of every weight.
    pub init_std: f64,
    /// Lower bound on the sampling standard deviation.
    pub min_std: f64,
    /// Train one weight vector per region instead of a shared one.
    pub independent: bool,
}

impl Default for TrainBudget {
    fn default() -> Self {
        Self {
            iterations: 500,
            population: 64,
            elite_fraction: 0.125,
            init_std: 0.5,
            min_std: 0.02,
            independent: false,
        }
    }
}

impl TrainBudget {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::config(
                "training.population",
                None,
                format!("must be >= 4, got {}", self.population),
            ));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 0.5) {
            return Err(Error::config(
                "training.elite_fraction",
                None,
                format!("must be in (0, 0.5], got {}", self.elite_fraction),
            ));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::config("training.init_std", None, "must be finite and >= 0"));
        }
        if !(self.min_std >= 0.0 && self.min_std.is_finite()) {
            return Err(Error::config("training.min_std", None, "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize).clamp(1, self.population)
    }

    /// Episodes one call to [`train_cem`] simulates.
    pub fn episodes(&self) -> usize {
        1 + self.iterations * (self.population + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub policy: PolicyAssignment,
    pub initial_fitness: f64,
    pub best_fitness: f64,
    /// Best fitness seen after each iteration.
    pub history: Vec<f64>,
}

/// Mean regional episode reward of `policies`.
pub fn fitness(model: &Model, policies: &PolicyAssignment, seed: u64, options: &RunOptions) -> Result<f64> {
    let log = run_episode(model, policies, seed, options)?;
    let summary = log.summary.expect("run_episode fills the summary");
    Ok(summary.collective_reward / model.num_regions() as f64)
}

/// Flattened weights of a linear template, one block per trained policy.
fn flatten(template: &PolicyAssignment, n: usize, independent: bool) -> Result<Vec<Vec<f64>>> {
    let linear = |p: &PolicySpec| match p {
        PolicySpec::LinearCem(l) => Ok(l.weights.clone()),
        other => Err(Error::InvalidArgument(format!(
            "cannot train a `{}` policy; use a linear-cem template",
            other.kind()
        ))),
    };
    match template {
        PolicyAssignment::Shared(p) if independent => Ok(vec![linear(p)?; n]),
        PolicyAssignment::Shared(p) => Ok(vec![linear(p)?]),
        PolicyAssignment::PerRegion(ps) => ps.iter().map(linear).collect(),
    }
}

fn assemble(blocks: &[Vec<f64>], shared: bool) -> PolicyAssignment {
    let spec = |w: &Vec<f64>| PolicySpec::LinearCem(LinearPolicy { weights: w.clone() });
    if shared {
        PolicyAssignment::Shared(spec(&blocks[0]))
    } else {
        PolicyAssignment::PerRegion(blocks.iter().map(spec).collect())
    }
}

/// Cross-entropy search maximizing mean regional episode reward.
///
/// Negotiation weights are searched only when `options.negotiation_on`;
/// otherwise they keep their template values. Each population member draws
/// from its own stream, base weights first, so the two modes see the same
/// base-weight noise. Returns the best policy seen, which may be the template.
pub fn train_cem(
    model: &Model,
    template: &PolicyAssignment,
    budget: &TrainBudget,
    seed: u64,
    options: &RunOptions,
) -> Result<TrainOutcome> {
    let n = model.num_regions();
    template.validate(n)?;
    if budget.iterations == 0 {
        let f = fitness(model, template, seed, options)?;
        return Ok(TrainOutcome {
            policy: template.clone(),
            initial_fitness: f,
            best_fitness: f,
            history: Vec::new(),
        });
    }
    budget.validate()?;
    let shared = matches!(template, PolicyAssignment::Shared(_)) && !budget.independent;
    let mut mean = flatten(template, n, budget.independent)?;
    let trained = if options.negotiation_on { LINEAR_DIMS } else { BASE_DIMS };
    let mut std: Vec<Vec<f64>> = vec![vec![budget.init_std; trained]; mean.len()];

    let evaluate = |blocks: &[Vec<f64>], tag: &str| -> Result<f64> {
        let f = fitness(model, &assemble(blocks, shared), seed, options)?;
        if f.is_nan() {
            return Err(Error::Diverged(format!("fitness of {tag} is NaN")));
        }
        Ok(f)
    };

    let initial_fitness = evaluate(&mean, "the template")?;
    let mut best = (initial_fitness, mean.clone());
    let mut history = Vec::with_capacity(budget.iterations);
    let elites = budget.elite_count();

    for it in 0..budget.iterations {
        let candidates: Vec<Vec<Vec<f64>>> = (0..budget.population)
            .map(|m| {
                let mut rng = stream(seed, it as u64, m as u64, 0, Purpose::Training);
                let mut blocks = mean.clone();
                for (b, s) in blocks.iter_mut().zip(&std) {
                    for (w, sd) in b.iter_mut().zip(s) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *w += sd * z;
                    }
                }
                blocks
            })
            .collect();

        let mean_fit = evaluate(&mean, &format!("the mean at iteration {it}"))?;
        let fits = candidates
            .par_iter()
            .enumerate()
            .map(|(m, c)| evaluate(c, &format!("member {m} at iteration {it}")))
            .collect::<Result<Vec<f64>>>()?;

        if mean_fit > best.0 {
            best = (mean_fit, mean.clone());
        }
        let mut order: Vec<usize> = (0..fits.len()).collect();
        // stable sort keeps ties in member order
        order.sort_by(|&a, &b| fits[b].total_cmp(&fits[a]));
        if fits[order[0]] > best.0 {
            best = (fits[order[0]], candidates[order[0]].clone());
        }

        let top = &order[..elites];
        for (bi, (mb, sb)) in mean.iter_mut().zip(std.iter_mut()).enumerate() {
            for k in 0..trained {
                let mu = top.iter().map(|&m| candidates[m][bi][k]).sum::<f64>() / elites as f64;
                let var = top.iter().map(|&m| (candidates[m][bi][k] - mu).powi(2)).sum::<f64>() / elites as f64;
                mb[k] = mu;
                sb[k] = var.sqrt().max(budget.min_std);
            }
        }
        history.push(best.0);
    }

    Ok(TrainOutcome {
        policy: assemble(&best.1, shared),
        initial_fitness,
        best_fitness: best.0,
        history,
    })
}
