//! Reference material for checking the simulator from the outside.
//!
//! [`oracle`] recomputes a short scripted episode with plain arithmetic and
//! literal constants, sharing no code with the engine. [`published`] holds
//! the regional episode rewards reported for the 27-region runs.

pub mod oracle;
pub mod published;

use ricesim_core::econ::ActionVector;
use ricesim_core::engine::{run_driven, EpisodeLog};
use ricesim_core::Model;

/// Relative difference with an absolute floor for values near zero.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// The oracle's scripted episode, run through the engine.
pub fn scripted_log(steps: usize) -> EpisodeLog {
    let mut econ = Model::default_27().econ;
    econ.num_steps = steps;
    econ.for_pref.clear();
    let base = Model::default_27().truncated(3).unwrap();
    let model = Model::new(econ, base.climate, base.initial_climate, base.regions).unwrap();
    let actions: Vec<ActionVector> = oracle::scripts()
        .iter()
        .map(|s| ActionVector {
            savings_rate: s.savings,
            mitigation_rate: s.mitigation,
            export_cap: s.export_cap,
            import_bids: s.bids.to_vec(),
            tariffs: s.tariffs.to_vec(),
        })
        .collect();
    run_driven(&model, 0, false, false, |_| Ok((None, actions.clone()))).unwrap()
}

/// Largest relative difference between the engine log and the oracle, and where.
pub fn max_rel_error(log: &EpisodeLog, expected: &[oracle::OracleStep]) -> (f64, String) {
    let mut worst = (0.0, String::from("nowhere"));
    if log.steps.len() != expected.len() {
        return (
            f64::INFINITY,
            format!("{} steps vs {}", log.steps.len(), expected.len()),
        );
    }
    let mut check = |what: &dyn Fn() -> String, a: f64, b: f64| {
        let d = rel_diff(a, b);
        if d > worst.0 || d.is_nan() {
            worst = (d, what());
        }
    };
    for (t, (s, o)) in log.steps.iter().zip(expected).enumerate() {
        let global = [
            ("temp_atmosphere", s.temp_atmosphere, o.temp_atmosphere),
            ("temp_ocean", s.temp_ocean, o.temp_ocean),
            ("carbon_mass_atm", s.carbon_mass_atm, o.carbon_mass_atm),
            ("emissions", s.emissions, o.emissions),
        ];
        for (name, a, b) in global {
            check(&|| format!("step {t} {name}"), a, b);
        }
        for (i, (r, q)) in s.regions.iter().zip(&o.regions).enumerate() {
            let fields = [
                ("labor", r.labor, q.labor),
                ("technology", r.technology, q.technology),
                ("capital", r.capital, q.capital),
                ("sigma", r.sigma, q.sigma),
                ("production", r.production, q.production),
                ("gross_output", r.gross_output, q.gross_output),
                ("exports", r.exports, q.exports),
                ("imports", r.imports, q.imports),
                ("domestic_consumption", r.domestic_consumption, q.domestic_consumption),
                ("consumption", r.consumption, q.consumption),
                ("utility", r.utility, q.utility),
                ("emissions", r.emissions, q.emissions),
            ];
            for (name, a, b) in fields {
                check(&|| format!("step {t} region {i} {name}"), a, b);
            }
        }
    }
    worst
}
