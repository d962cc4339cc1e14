//! Acceptance suite: one PASS/FAIL line per criterion, details indented below.
//!
//! Runs as a plain binary so the lines reach the terminal under `cargo test`.
//! Exits non-zero when any criterion fails.

use std::time::{Duration, Instant};

use rand::Rng;
use ricesim_core::climate::ClimateParams;
use ricesim_core::config::default_regions;
use ricesim_core::econ::{self, ActionVector, DamageCoefficients, GlobalEconParams};
use ricesim_core::engine::{self, episode_rewards, run_driven, run_episode, RunOptions};
use ricesim_core::experiments::{
    apply_ltc, format_gain, gain_ratio, rank_regions, run_experiment1, run_experiment2, ExperimentBody,
    ExperimentSettings, Ltc, RunSummary, SubsetRegions,
};
use ricesim_core::negotiation::NegotiationState;
use ricesim_core::policy::{train_cem, FixedRates, LinearPolicy, TrainBudget, LINEAR_DIMS};
use ricesim_core::report::render_table4;
use ricesim_core::rng::{stream, Purpose};
use ricesim_core::{Model, PolicyAssignment, PolicySpec, SimConfig};
use ricesim_validation::{max_rel_error, oracle, published, rel_diff, scripted_log};

const ORACLE_TOL: f64 = 1e-9;
const ORACLE_TIME: Duration = Duration::from_secs(1);
const EXP1_TIME: Duration = Duration::from_secs(30 * 60);
const SMALL_EPISODE_MS: f64 = 5.0;
const LARGE_EPISODE_MS: f64 = 100.0;
const FLOOR_PAIRS: usize = 100;

type Criterion = (&'static str, fn() -> Check);

struct Check {
    ok: bool,
    lines: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self {
            ok: true,
            lines: Vec::new(),
        }
    }

    /// A sub-check that counts towards the verdict.
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        self.ok &= ok;
        let mark = if ok { "ok  " } else { "FAIL" };
        self.lines.push(format!("{mark} {}", what.into()));
    }

    /// A reported value that does not affect the verdict.
    fn info(&mut self, what: impl Into<String>) {
        self.lines.push(format!("info {}", what.into()));
    }
}

fn report(name: &str, check: &Check, failed: &mut Vec<String>) {
    let verdict = if check.ok { "PASS" } else { "FAIL" };
    println!("[{verdict}] {name}");
    for l in &check.lines {
        println!("       {l}");
    }
    if !check.ok {
        failed.push(name.to_string());
    }
}

fn oracle_equivalence() -> Check {
    let mut c = Check::new();
    let started = Instant::now();
    let log = scripted_log(3);
    let expected = oracle::run(3);
    let (worst, at) = max_rel_error(&log, &expected);
    let elapsed = started.elapsed();
    c.expect(
        worst <= ORACLE_TOL,
        format!("max relative error {worst:.3e} (at {at}), tolerance {ORACLE_TOL:e}"),
    );
    c.expect(
        elapsed < ORACLE_TIME,
        format!("runtime {:.3} ms, limit 1 s", elapsed.as_secs_f64() * 1e3),
    );
    c
}

fn equation_suite() -> Check {
    let mut c = Check::new();
    let g = GlobalEconParams::default();
    let regions = default_regions();

    let worst_fixed_point = regions
        .iter()
        .map(|r| rel_diff(econ::update_labor(r.l_a, r), r.l_a))
        .fold(0.0, f64::max);
    c.expect(
        worst_fixed_point <= 1e-12,
        format!(
            "labor fixed point at l_a for all {} rows (worst {worst_fixed_point:.1e})",
            regions.len()
        ),
    );
    c.expect(
        econ::update_labor(500.0, &regions[0].clone().with_l_g(0.0)) == 500.0,
        "l_g = 0 keeps labor",
    );

    let model = Model::default_27();
    let s0 = engine::reset(&model, 0);
    let out = engine::step(&model, &s0, &vec![ActionVector::zeros(27); 27]).unwrap();
    let r0 = &out.state.regions[0];
    c.expect(
        format!("{:.2}", r0.labor) == "482.40",
        format!("region 0 labor after one step {:.6}", r0.labor),
    );
    c.expect(
        format!("{:.4}", r0.technology) == "2.1066",
        format!("region 0 technology after one step {:.6}", r0.technology),
    );
    c.expect(
        out.record.regions.iter().all(|r| r.exports == 0.0),
        "zero actions leave trade at zero",
    );

    let drift = econ::update_technology(1.0, 5, &regions[24], &g);
    c.expect(
        regions[24].g_a == 0.0 && (drift - 0.0033f64.exp()).abs() < 1e-15,
        format!("zero growth gives factor e^0.0033 = {drift:.7}"),
    );

    let d = DamageCoefficients::default();
    c.expect(econ::damages_factor(0.0, &d) == 1.0, "damages(0) = 1");
    let d2 = econ::damages_factor(2.0, &d);
    c.expect((d2 - 1.0 / 1.00944).abs() < 1e-15, format!("damages(2) = {d2:.6}"));
    c.expect(econ::damages_factor(4.0, &d) < d2, "damages decrease with temperature");

    let ces_ok = [0.0, 0.3, 1.0, 7.5].iter().all(|&x| {
        let v = econ::aggregate_consumption(x, &[0.0, 0.0], 1.0, &[0.0, 0.0], 0.5);
        (v - x).abs() <= 1e-15 * x.max(1.0)
    });
    c.expect(ces_ok, "CES identity with only domestic goods");
    let linear = econ::aggregate_consumption(2.0, &[0.0, 4.0], 0.5, &[0.25, 0.25], 1.0);
    c.expect(
        (linear - 2.0).abs() < 1e-15,
        "CES with unit substitution exponent is linear",
    );

    let zero = econ::step_utility(1000.0, 1.0 - g.epsilon, &g);
    c.expect(
        zero.abs() < 1e-15,
        format!("utility zero crossing at c = 1 - eps ({zero:e})"),
    );
    let plain = GlobalEconParams {
        epsilon: 0.0,
        ..g.clone()
    };
    c.expect(
        econ::step_utility(1000.0, 4.0, &plain) == 2.0,
        "utility(1000, 4) = 2 with eps = 0",
    );
    c.expect(
        econ::step_utility(476.878, 0.0, &g) < 0.0,
        "zero consumption gives negative utility",
    );

    let cap = econ::update_capital(1.0, 1.0, 0.1, &g);
    c.expect((cap - 1.09049).abs() < 1e-12, format!("capital example {cap:.6}"));
    let p0 = econ::production(1.872, 0.239, 476.878, 0.3);
    c.expect(format!("{p0:.4}") == "0.7256", format!("region 0 production {p0:.6}"));
    c.expect(
        (econ::production(1.0, 2.0, 2000.0, 0.3) - 2.0 * econ::production(1.0, 1.0, 1000.0, 0.3)).abs() < 1e-15,
        "production is homogeneous of degree 1",
    );
    c.expect(
        econ::abatement_cost(0.0, 0.5, &g) == 0.0,
        "abatement cost is zero without mitigation",
    );

    let two = Model::default_27().truncated(2).unwrap();
    let mut log = run_episode(
        &two,
        &PolicyAssignment::Shared(PolicySpec::Zero),
        0,
        &RunOptions::default(),
    )
    .unwrap();
    log.num_steps = 2;
    log.steps.truncate(2);
    for (t, step) in log.steps.iter_mut().enumerate() {
        step.regions[0].utility = [1.0, 2.0][t];
        step.regions[1].utility = [3.0, 4.0][t];
    }
    let (u_i, u) = episode_rewards(&log).unwrap();
    c.expect(
        u_i == vec![3.0, 7.0] && u == 10.0,
        "episode rewards of {1,2},{3,4} are (3, 7), total 10",
    );

    let climate = ClimateParams::default();
    let eq = climate.equilibrium_state();
    let next = ricesim_core::climate::step_climate(
        &eq,
        0.0,
        0,
        &ClimateParams {
            f_exo_0: 0.0,
            f_exo_slope: 0.0,
            ..climate
        },
    );
    c.expect(
        next.masses
            .iter()
            .zip(&eq.masses)
            .all(|(a, b)| rel_diff(*a, *b) < 1e-12),
        "carbon reservoirs are stationary at equilibrium",
    );
    c
}

trait WithLg {
    fn with_l_g(self, l_g: f64) -> Self;
}

impl WithLg for ricesim_core::econ::RegionParams {
    fn with_l_g(mut self, l_g: f64) -> Self {
        self.l_g = l_g;
        self
    }
}

fn table2_arithmetic() -> Check {
    let mut c = Check::new();
    let (u_off, u_on) = (published::U_NO_NEGO.to_vec(), published::U_NEGO.to_vec());
    let log_of = |u: &[f64]| {
        let model = Model::default_27();
        let mut log = run_episode(
            &model,
            &PolicyAssignment::Shared(PolicySpec::Zero),
            0,
            &RunOptions::default(),
        )
        .unwrap();
        for step in log.steps.iter_mut() {
            for r in step.regions.iter_mut() {
                r.utility = 0.0;
            }
        }
        for (i, v) in u.iter().enumerate() {
            log.steps[0].regions[i].utility = *v;
        }
        episode_rewards(&log).unwrap().1
    };
    let total_off = log_of(&u_off);
    let total_on = log_of(&u_on);
    c.expect(
        format!("{total_off:.1}") == published::U_TOTAL_NO_NEGO,
        format!(
            "collective reward no-nego: {total_off:.1} from the 27 printed values, printed total {}",
            published::U_TOTAL_NO_NEGO
        ),
    );
    c.info(format!(
        "collective reward nego: {total_on:.1} from the printed values, printed total {}",
        published::U_TOTAL_NEGO
    ));

    let r_off = rank_regions(&u_off);
    let r_on = rank_regions(&u_on);
    c.expect(
        r_off[15] == 0 && r_off[20] == 1 && r_off[6] == 26,
        "rank examples: region 15 -> 0, 20 -> 1, 6 -> 26",
    );
    let mismatches =
        |ours: &[usize], theirs: &[usize]| -> Vec<usize> { (0..27).filter(|&i| ours[i] != theirs[i]).collect() };
    let m_off = mismatches(&r_off, &published::RANK_NO_NEGO);
    let m_on = mismatches(&r_on, &published::RANK_NEGO);
    c.expect(
        m_off.is_empty(),
        format!("printed no-nego ranks reproduced; differing regions {m_off:?}"),
    );
    c.expect(
        m_on.is_empty(),
        format!("printed nego ranks reproduced; differing regions {m_on:?}"),
    );
    // differing regions only within groups of equal printed values
    let tie_only = |m: &[usize], u: &[f64]| m.iter().all(|&i| m.iter().any(|&j| j != i && u[j] == u[i]));
    c.info(format!(
        "all rank differences fall inside tied printed values: no-nego {}, nego {}",
        tie_only(&m_off, &u_off),
        tie_only(&m_on, &u_on)
    ));

    let gains: Vec<String> = (0..27).map(|i| format_gain(gain_ratio(u_on[i], u_off[i]))).collect();
    let bad: Vec<usize> = (0..27).filter(|&i| gains[i] != published::GAIN[i]).collect();
    c.expect(
        bad.is_empty(),
        format!("printed gains reproduced at 2 decimals; differing regions {bad:?}"),
    );
    c.expect(
        gains[0] == "0.86" && gains[3] == "0.77",
        format!("gain examples: region 0 {}, region 3 {}", gains[0], gains[3]),
    );
    c
}

fn final_temperature(model: &Model, seed: u64, actions: &[ActionVector], floors: Option<&[Vec<f64>]>) -> f64 {
    let log = run_driven(model, seed, floors.is_some(), false, |state| {
        let round = floors.map(|f| NegotiationState {
            proposals: Vec::new(),
            acceptances: Vec::new(),
            floors: f[state.step_index].clone(),
        });
        Ok((round, actions.to_vec()))
    })
    .unwrap();
    log.final_temperature().unwrap()
}

fn monotonicity() -> Check {
    let mut c = Check::new();
    let model = Model::default_27();
    let n = model.num_regions();
    let steps = model.num_steps();
    let high = final_temperature(&model, 0, &vec![ActionVector::rates(n, 0.25, 0.9); n], None);
    let low = final_temperature(&model, 0, &vec![ActionVector::rates(n, 0.25, 0.0); n], None);
    c.expect(
        high < low,
        format!("final temperature mu=0.9 {high:.4} < mu=0.0 {low:.4}"),
    );

    let mut violations = 0;
    let mut smallest_gap = f64::INFINITY;
    for k in 0..FLOOR_PAIRS {
        let mut rng = stream(2024, k as u64, 0, 0, Purpose::Evaluation);
        let actions: Vec<ActionVector> = (0..n)
            .map(|_| ActionVector::rates(n, rng.random_range(0.1..0.4), rng.random_range(0.0..0.5)))
            .collect();
        let lo: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let hi: Vec<Vec<f64>> = lo
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&f| {
                        if rng.random_bool(0.5) {
                            f
                        } else {
                            f + rng.random_range(0.0..=1.0) * (1.0 - f)
                        }
                    })
                    .collect()
            })
            .collect();
        let t_lo = final_temperature(&model, k as u64, &actions, Some(&lo));
        let t_hi = final_temperature(&model, k as u64, &actions, Some(&hi));
        smallest_gap = smallest_gap.min(t_lo - t_hi);
        if t_hi > t_lo {
            violations += 1;
        }
    }
    c.expect(
        violations == 0,
        format!("{FLOOR_PAIRS} random floor pairs: {violations} where higher floors raised the final temperature (smallest margin {smallest_gap:.3e})"),
    );
    c
}

fn summary_fields(s: &RunSummary) -> String {
    let mut s = s.clone();
    s.label.clear();
    serde_json::to_string(&s).unwrap()
}

fn experiment1_directional() -> Check {
    let mut c = Check::new();
    let settings = ExperimentSettings::from_config(&SimConfig::default()).unwrap();
    c.info(format!(
        "budget {} iterations x {} population, seeds {:?}",
        settings.budget.iterations, settings.budget.population, settings.seeds
    ));
    let started = Instant::now();
    let result = run_experiment1(&settings).unwrap();
    let elapsed = started.elapsed();
    let ExperimentBody::Experiment1(e) = result.body else {
        unreachable!()
    };
    let (off, on) = (&e.no_nego, &e.nego);
    c.expect(
        on.actions.mitigation_rate.mean >= off.actions.mitigation_rate.mean,
        format!(
            "mean mitigation nego {:.4} ± {:.4} >= no-nego {:.4} ± {:.4}",
            on.actions.mitigation_rate.mean,
            on.actions.mitigation_rate.std,
            off.actions.mitigation_rate.mean,
            off.actions.mitigation_rate.std
        ),
    );
    c.expect(
        on.temperature_increase.mean <= off.temperature_increase.mean,
        format!(
            "temperature increase nego {:.4} ± {:.4} <= no-nego {:.4} ± {:.4}",
            on.temperature_increase.mean,
            on.temperature_increase.std,
            off.temperature_increase.mean,
            off.temperature_increase.std
        ),
    );
    c.expect(
        elapsed < EXP1_TIME,
        format!(
            "wall time {:.1} s for {} episodes, limit 30 min",
            elapsed.as_secs_f64(),
            result.metadata.episodes
        ),
    );
    c.info(format!(
        "collective reward no-nego {:.3} ± {:.3}, nego {:.3} ± {:.3}",
        off.collective_reward.mean, off.collective_reward.std, on.collective_reward.mean, on.collective_reward.std
    ));
    c.info(format!(
        "Spearman rank correlation {} (target >= 0.8, informational)",
        e.rank_correlation.map_or("undefined".into(), |r| format!("{r:.3}"))
    ));
    c
}

fn determinism() -> Check {
    let mut c = Check::new();
    let model = Model::default_27();
    let mut rng = stream(77, 0, 0, 0, Purpose::Policy);
    let weights: Vec<f64> = (0..LINEAR_DIMS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let policies = [
        ("random", PolicySpec::Random { seed: 5 }),
        ("linear", PolicySpec::LinearCem(LinearPolicy { weights })),
        ("fixed", PolicySpec::Fixed(FixedRates::rates(0.25, 0.3))),
    ];
    for (name, p) in policies {
        let assignment = PolicyAssignment::Shared(p);
        let options = RunOptions {
            negotiation_on: true,
            verbose: true,
            ..Default::default()
        };
        let runs: Vec<String> = (0..3)
            .map(|_| serde_json::to_string(&run_episode(&model, &assignment, 11, &options).unwrap()).unwrap())
            .collect();
        c.expect(
            runs.windows(2).all(|w| w[0] == w[1]),
            format!("{name} policy: 3 runs bit-identical"),
        );
    }

    let small = ExperimentSettings {
        model: Model::default_27().truncated(6).unwrap(),
        budget: TrainBudget {
            iterations: 3,
            population: 8,
            elite_fraction: 0.25,
            ..Default::default()
        },
        seeds: vec![1, 2, 3],
        quantize_levels: None,
        subsets: SubsetRegions::default(),
    };
    let in_pool = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = run_experiment1(&small).unwrap();
            let t = train_cem(
                &small.model,
                &PolicyAssignment::Shared(PolicySpec::LinearCem(LinearPolicy::zeros())),
                &small.budget,
                9,
                &RunOptions::negotiation(true),
            )
            .unwrap();
            (
                serde_json::to_string(&r.body).unwrap(),
                serde_json::to_string(&t).unwrap(),
            )
        })
    };
    let one = in_pool(1);
    let four = in_pool(4);
    c.expect(one.0 == four.0, "experiment results identical with 1 and 4 threads");
    c.expect(one.1 == four.1, "trained policy identical with 1 and 4 threads");
    c
}

fn experiment2_structure() -> Check {
    let mut c = Check::new();
    let settings = ExperimentSettings {
        model: Model::default_27(),
        budget: TrainBudget {
            iterations: 2,
            population: 4,
            elite_fraction: 0.25,
            ..Default::default()
        },
        seeds: vec![1, 2],
        quantize_levels: None,
        subsets: SubsetRegions::default(),
    };
    c.info(format!(
        "reduced budget {} x {}, seeds {:?}",
        settings.budget.iterations, settings.budget.population, settings.seeds
    ));
    let r2 = run_experiment2(&settings).unwrap();
    let r1 = run_experiment1(&settings).unwrap();
    let (ExperimentBody::Experiment2(e2), ExperimentBody::Experiment1(e1)) = (&r2.body, &r1.body) else {
        unreachable!()
    };
    let counts: Vec<usize> = e2.tests.iter().map(|t| t.subtests.len()).collect();
    c.expect(
        e2.tests.len() == 8 && counts.iter().all(|&k| k == 9),
        format!("{} tests with subtest counts {counts:?}", e2.tests.len()),
    );
    let mut labels: Vec<&str> = e2.tests.iter().map(|t| t.label.as_str()).collect();
    labels.sort();
    labels.dedup();
    c.expect(labels.len() == 8, format!("distinct test labels {labels:?}"));

    let identity = |label: &str| {
        let t = e2.tests.iter().find(|t| t.label == label).unwrap();
        t.subtests.iter().find(|s| s.ltc == Ltc::IDENTITY).unwrap()
    };
    c.expect(
        summary_fields(identity("test-2-a-no-nego")) == summary_fields(&e1.no_nego),
        "test-2-a-no-nego at LTC (0, 0) equals experiment 1 no-nego bit-for-bit",
    );
    c.expect(
        summary_fields(identity("test-2-a-nego")) == summary_fields(&e1.nego),
        "test-2-a-nego at LTC (0, 0) equals experiment 1 nego bit-for-bit",
    );

    let r0 = &default_regions()[0];
    let up = apply_ltc(r0, Ltc::new(0.1, 0.0).unwrap());
    let down = apply_ltc(r0, Ltc::new(0.0, -0.1).unwrap());
    c.expect(
        format!("{:.3}", up.l_a) == "736.553",
        format!("region 0 l_a +10% = {}", up.l_a),
    );
    c.expect(
        format!("{:.4}", down.g_a) == "0.1098",
        format!("region 0 g_a -10% = {}", down.g_a),
    );
    c.expect(
        apply_ltc(r0, Ltc::IDENTITY) == *r0,
        "LTC (0, 0) leaves parameters unchanged",
    );
    let table = render_table4(e2);
    c.expect(
        table.lines().count() == 6 && table.contains('%'),
        "regional delta table has 4 rows with percent changes",
    );
    c
}

fn median_ms(mut f: impl FnMut(), runs: usize) -> f64 {
    f();
    let mut times: Vec<f64> = (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[runs / 2]
}

fn performance() -> Check {
    let mut c = Check::new();
    let policy = PolicyAssignment::Shared(PolicySpec::Fixed(FixedRates::rates(0.25, 0.3)));
    for (n, limit, runs) in [(27, SMALL_EPISODE_MS, 51), (200, LARGE_EPISODE_MS, 11)] {
        let model = Model::tiled(n).unwrap();
        for nego in [false, true] {
            let ms = median_ms(
                || {
                    run_episode(&model, &policy, 1, &RunOptions::negotiation(nego)).unwrap();
                },
                runs,
            );
            let what = format!(
                "{n} regions, negotiation {}: median {ms:.3} ms per episode, limit {limit} ms",
                if nego { "on" } else { "off" }
            );
            c.expect(ms < limit, what);
        }
    }
    c
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("equation unit suite", equation_suite),
        ("published reward table arithmetic", table2_arithmetic),
        ("mitigation monotonicity", monotonicity),
        ("directional experiment 1", experiment1_directional),
        ("determinism", determinism),
        ("experiment 2 structure", experiment2_structure),
        ("performance", performance),
    ];
    if std::env::args().any(|a| a == "--list") {
        for (name, _) in &criteria {
            println!("{name}: test");
        }
        return;
    }
    // free arguments select criteria by substring, as with libtest filters
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<_> = criteria
        .iter()
        .filter(|(name, _)| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str())))
        .collect();
    let mut failed = Vec::new();
    for (name, run) in &selected {
        let check = run();
        report(name, &check, &mut failed);
    }
    println!();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", selected.len());
    } else {
        println!(
            "acceptance: {} of {} criteria failed: {}",
            failed.len(),
            selected.len(),
            failed.join(", ")
        );
        std::process::exit(1);
    }
}
