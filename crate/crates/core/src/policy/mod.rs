//! Decision-makers mapping observations to actions and negotiation moves.
//!
//! Trade quantities are expressed relative to the region's current
//! production: a policy emits an export share and an import share, which
//! become `export_cap = share * production` and a per-partner bid of
//! `share * production / (N - 1)`.

mod cem;

pub use cem::{train_cem, TrainBudget, TrainOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::econ::ActionVector;
use crate::error::{Error, Result};
use crate::negotiation::Proposal;

/// Version tag of the flat policy record layout.
pub const POLICY_SCHEMA_VERSION: u32 = 1;

/// Length of [`Observation::features`].
pub const FEATURES: usize = 16;

/// Per-feature heads: savings, mitigation, export share, import share, tariff.
pub const ACTION_HEADS: usize = 5;
/// Per-feature heads: promise, request.
pub const OFFER_HEADS: usize = 2;
/// The acceptance head sees the features plus the proposal's promise and request.
pub const ACCEPT_INPUTS: usize = FEATURES + 2;

/// Weights driving actions.
pub const BASE_DIMS: usize = ACTION_HEADS * FEATURES;
/// Total weights of one linear policy.
pub const LINEAR_DIMS: usize = (ACTION_HEADS + OFFER_HEADS) * FEATURES + ACCEPT_INPUTS;

/// Economy-wide means of each action field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionMeans {
    pub savings_rate: f64,
    pub mitigation_rate: f64,
    pub export_cap: f64,
    pub import_bid: f64,
    pub tariff: f64,
}

impl ActionMeans {
    pub fn of(actions: &[ActionVector]) -> Self {
        let n = actions.len().max(1) as f64;
        let mut m = Self::default();
        for (i, a) in actions.iter().enumerate() {
            m.savings_rate += a.savings_rate;
            m.mitigation_rate += a.mitigation_rate;
            m.export_cap += a.export_cap;
            m.import_bid += a.mean_import_bid(i);
            m.tariff += a.mean_tariff(i);
        }
        m.savings_rate /= n;
        m.mitigation_rate /= n;
        m.export_cap /= n;
        m.import_bid /= n;
        m.tariff /= n;
        m
    }
}

/// What a region sees before deciding.
///
/// [`Observation::features`] turns it into a fixed-length vector:
///
/// | index | feature |
/// |-------|---------|
/// | 0 | bias (1) |
/// | 1 | step fraction `t / T` |
/// | 2 | atmospheric temperature / 5 |
/// | 3 | atmospheric carbon mass / 1000 |
/// | 4 | ln(labor / 1000) |
/// | 5 | ln(technology) |
/// | 6 | ln(1 + capital) |
/// | 7 | carbon intensity |
/// | 8 | ln(1 + production) |
/// | 9 | own mitigation floor |
/// | 10 | previous mean savings rate |
/// | 11 | previous mean mitigation rate |
/// | 12 | ln(1 + previous mean export cap) |
/// | 13 | ln(1 + previous mean import bid) |
/// | 14 | previous mean tariff |
/// | 15 | region index / (N - 1) |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub region: usize,
    pub num_regions: usize,
    pub step_fraction: f64,
    pub temp_atmosphere: f64,
    pub carbon_mass_atm: f64,
    pub labor: f64,
    pub technology: f64,
    pub capital: f64,
    pub sigma: f64,
    /// Production at the current state before damages and abatement.
    pub production: f64,
    pub floor: f64,
    pub prev_means: ActionMeans,
}

impl Observation {
    pub fn features(&self) -> [f64; FEATURES] {
        let identity = if self.num_regions > 1 {
            self.region as f64 / (self.num_regions - 1) as f64
        } else {
            0.0
        };
        [
            1.0,
            self.step_fraction,
            self.temp_atmosphere / 5.0,
            self.carbon_mass_atm / 1000.0,
            (self.labor / 1000.0).ln(),
            self.technology.ln(),
            self.capital.ln_1p(),
            self.sigma,
            self.production.ln_1p(),
            self.floor,
            self.prev_means.savings_rate,
            self.prev_means.mitigation_rate,
            self.prev_means.export_cap.ln_1p(),
            self.prev_means.import_bid.ln_1p(),
            self.prev_means.tariff,
            identity,
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.region >= self.num_regions {
            return Err(Error::MalformedObservation(format!(
                "region {} out of range for {} regions",
                self.region, self.num_regions
            )));
        }
        if !(self.labor > 0.0 && self.technology > 0.0 && self.capital >= 0.0 && self.production >= 0.0) {
            return Err(Error::MalformedObservation(format!(
                "region {}: labor and technology must be > 0, capital and production >= 0",
                self.region
            )));
        }
        if let Some(k) = self.features().iter().position(|f| !f.is_finite()) {
            return Err(Error::MalformedObservation(format!(
                "region {}: feature {k} is not finite",
                self.region
            )));
        }
        Ok(())
    }
}

/// Constant behaviour. Shares are relative to production.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedRates {
    pub savings_rate: f64,
    pub mitigation_rate: f64,
    #[serde(default)]
    pub export_share: f64,
    #[serde(default)]
    pub import_share: f64,
    #[serde(default)]
    pub tariff: f64,
    #[serde(default)]
    pub promise: f64,
    #[serde(default)]
    pub request: f64,
    /// Accept proposals whose request is at most this value. Negative rejects all.
    #[serde(default = "reject_all")]
    pub accept_up_to: f64,
}

fn reject_all() -> f64 {
    -1.0
}

impl FixedRates {
    pub fn rates(savings_rate: f64, mitigation_rate: f64) -> Self {
        Self {
            savings_rate,
            mitigation_rate,
            export_share: 0.0,
            import_share: 0.0,
            tariff: 0.0,
            promise: 0.0,
            request: 0.0,
            accept_up_to: reject_all(),
        }
    }

    fn to_params(&self) -> Vec<f64> {
        vec![
            self.savings_rate,
            self.mitigation_rate,
            self.export_share,
            self.import_share,
            self.tariff,
            self.promise,
            self.request,
            self.accept_up_to,
        ]
    }
}

/// Sigmoid-squashed linear heads over [`Observation::features`].
///
/// Layout of `weights` (row-major, [`LINEAR_DIMS`] values): five action heads
/// (savings, mitigation, export share, import share, tariff), then the promise
/// and request heads, each [`FEATURES`] long, then the acceptance head of
/// [`ACCEPT_INPUTS`] weights whose last two multiply the incoming promise and
/// request. A proposal is accepted when the acceptance score is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub weights: Vec<f64>,
}

impl LinearPolicy {
    pub fn zeros() -> Self {
        Self {
            weights: vec![0.0; LINEAR_DIMS],
        }
    }

    fn head(&self, k: usize, x: &[f64; FEATURES]) -> f64 {
        let w = &self.weights[k * FEATURES..(k + 1) * FEATURES];
        w.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn accept_weights(&self) -> &[f64] {
        &self.weights[(ACTION_HEADS + OFFER_HEADS) * FEATURES..]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    /// Does nothing and rejects every proposal.
    Zero,
    Fixed(FixedRates),
    /// Uniform random decisions drawn from the engine's streams, salted by `seed`.
    Random {
        seed: u64,
    },
    LinearCem(LinearPolicy),
}

impl PolicySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicySpec::Zero => "zero",
            PolicySpec::Fixed(_) => "fixed",
            PolicySpec::Random { .. } => "random",
            PolicySpec::LinearCem(_) => "linear-cem",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolicySpec::Zero | PolicySpec::Random { .. } => Ok(()),
            PolicySpec::Fixed(f) => {
                if f.to_params().iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("fixed policy parameters must be finite".into()))
                }
            }
            PolicySpec::LinearCem(l) => {
                if l.weights.len() != LINEAR_DIMS {
                    return Err(Error::InvalidArgument(format!(
                        "linear policy needs {LINEAR_DIMS} weights, got {}",
                        l.weights.len()
                    )));
                }
                if l.weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::InvalidArgument("linear policy weights must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// Evaluate the observation once; the returned decision answers every
    /// question the engine asks the region this stage.
    pub fn prepare<'a>(&'a self, obs: &'a Observation) -> Result<Decision<'a>> {
        obs.validate()?;
        let mut heads = [0.0; ACTION_HEADS + OFFER_HEADS];
        let mut accept_base = 0.0;
        if let PolicySpec::LinearCem(l) = self {
            let x = obs.features();
            for (k, h) in heads.iter_mut().enumerate() {
                *h = sigmoid(l.head(k, &x));
            }
            let aw = l.accept_weights();
            accept_base = aw[..FEATURES].iter().zip(&x).map(|(a, b)| a * b).sum();
        }
        Ok(Decision {
            spec: self,
            obs,
            heads,
            accept_base,
        })
    }

    pub fn to_record(&self) -> PolicyRecord {
        let params = match self {
            PolicySpec::Zero => Vec::new(),
            PolicySpec::Fixed(f) => f.to_params(),
            PolicySpec::Random { seed } => vec![(seed >> 32) as f64, (seed & 0xFFFF_FFFF) as f64],
            PolicySpec::LinearCem(l) => l.weights.clone(),
        };
        PolicyRecord {
            schema_version: POLICY_SCHEMA_VERSION,
            kind: self.kind().to_string(),
            params,
        }
    }

    pub fn from_record(record: &PolicyRecord) -> Result<Self> {
        if record.schema_version != POLICY_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported policy schema version {}",
                record.schema_version
            )));
        }
        let p = &record.params;
        let expect = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{} policy record needs {n} params, got {}",
                    record.kind,
                    p.len()
                )))
            }
        };
        let spec = match record.kind.as_str() {
            "zero" => {
                expect(0)?;
                PolicySpec::Zero
            }
            "fixed" => {
                expect(8)?;
                PolicySpec::Fixed(FixedRates {
                    savings_rate: p[0],
                    mitigation_rate: p[1],
                    export_share: p[2],
                    import_share: p[3],
                    tariff: p[4],
                    promise: p[5],
                    request: p[6],
                    accept_up_to: p[7],
                })
            }
            "random" => {
                expect(2)?;
                let half = |v: f64| {
                    if v >= 0.0 && v <= u32::MAX as f64 && v.fract() == 0.0 {
                        Ok(v as u64)
                    } else {
                        Err(Error::InvalidArgument(format!("random seed half {v} is not a u32")))
                    }
                };
                PolicySpec::Random {
                    seed: (half(p[0])? << 32) | half(p[1])?,
                }
            }
            "linear-cem" => PolicySpec::LinearCem(LinearPolicy { weights: p.clone() }),
            other => return Err(Error::InvalidArgument(format!("unknown policy kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A policy evaluated against one observation.
pub struct Decision<'a> {
    spec: &'a PolicySpec,
    obs: &'a Observation,
    heads: [f64; ACTION_HEADS + OFFER_HEADS],
    accept_base: f64,
}

impl Decision<'_> {
    fn trade(&self, export_share: f64, import_share: f64, tariff: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.obs.num_regions;
        let me = self.obs.region;
        let partners = n.saturating_sub(1).max(1) as f64;
        let bid = import_share * self.obs.production / partners;
        let mut bids = vec![bid; n];
        let mut tariffs = vec![tariff; n];
        bids[me] = 0.0;
        tariffs[me] = 0.0;
        (export_share * self.obs.production, bids, tariffs)
    }

    pub fn action<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionVector {
        let n = self.obs.num_regions;
        match self.spec {
            PolicySpec::Zero => ActionVector::zeros(n),
            PolicySpec::Fixed(f) => {
                let (export_cap, import_bids, tariffs) = self.trade(f.export_share, f.import_share, f.tariff);
                ActionVector {
                    savings_rate: f.savings_rate,
                    mitigation_rate: f.mitigation_rate,
                    export_cap,
                    import_bids,
                    tariffs,
                }
            }
            PolicySpec::Random { .. } => {
                let savings_rate = rng.random::<f64>();
                let mitigation_rate = rng.random::<f64>();
                let export_cap = rng.random::<f64>() * self.obs.production;
                let partners = n.saturating_sub(1).max(1) as f64;
                let me = self.obs.region;
                let mut import_bids = Vec::with_capacity(n);
                let mut tariffs = Vec::with_capacity(n);
                for j in 0..n {
                    let (b, t) = (rng.random::<f64>(), rng.random::<f64>());
                    if j == me {
                        import_bids.push(0.0);
                        tariffs.push(0.0);
                    } else {
                        import_bids.push(b * self.obs.production / partners);
                        tariffs.push(t);
                    }
                }
                ActionVector {
                    savings_rate,
                    mitigation_rate,
                    export_cap,
                    import_bids,
                    tariffs,
                }
            }
            PolicySpec::LinearCem(_) => {
                let h = &self.heads;
                let (export_cap, import_bids, tariffs) = self.trade(h[2], h[3], h[4]);
                ActionVector {
                    savings_rate: h[0],
                    mitigation_rate: h[1],
                    export_cap,
                    import_bids,
                    tariffs,
                }
            }
        }
    }

    /// `(promise, request)` offered to `recipient`.
    pub fn offer<R: Rng + ?Sized>(&self, _recipient: usize, rng: &mut R) -> (f64, f64) {
        match self.spec {
            PolicySpec::Zero => (0.0, 0.0),
            PolicySpec::Fixed(f) => (f.promise, f.request),
            PolicySpec::Random { .. } => (rng.random::<f64>(), rng.random::<f64>()),
            PolicySpec::LinearCem(_) => (self.heads[ACTION_HEADS], self.heads[ACTION_HEADS + 1]),
        }
    }

    pub fn accepts<R: Rng + ?Sized>(&self, proposal: &Proposal, rng: &mut R) -> bool {
        match self.spec {
            PolicySpec::Zero => false,
            PolicySpec::Fixed(f) => proposal.request <= f.accept_up_to,
            PolicySpec::Random { .. } => rng.random::<bool>(),
            PolicySpec::LinearCem(l) => {
                let aw = l.accept_weights();
                let score = self.accept_base + aw[FEATURES] * proposal.promise + aw[FEATURES + 1] * proposal.request;
                score > 0.0
            }
        }
    }
}

/// Map a policy's decision onto its action vector.
pub fn act<R: Rng + ?Sized>(policy: &PolicySpec, obs: &Observation, rng: &mut R) -> Result<ActionVector> {
    Ok(policy.prepare(obs)?.action(rng))
}

/// Snap a fraction down onto `levels` evenly spaced values `0, 1/levels, ...`.
pub fn quantize(x: f64, levels: u32) -> f64 {
    let l = levels.max(1) as f64;
    ((x * l).floor().min(l - 1.0).max(0.0)) / l
}

/// Which policy each region follows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "policies", rename_all = "kebab-case")]
pub enum PolicyAssignment {
    /// One policy for every region.
    Shared(PolicySpec),
    PerRegion(Vec<PolicySpec>),
}

impl PolicyAssignment {
    pub fn for_region(&self, region: usize) -> &PolicySpec {
        match self {
            PolicyAssignment::Shared(p) => p,
            PolicyAssignment::PerRegion(ps) => &ps[region],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            PolicyAssignment::Shared(p) => p.validate(),
            PolicyAssignment::PerRegion(ps) => {
                if ps.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "{} per-region policies for {n} regions",
                        ps.len()
                    )));
                }
                ps.iter().try_for_each(PolicySpec::validate)
            }
        }
    }

    pub fn to_file(&self) -> PolicyFile {
        let (shared, policies) = match self {
            PolicyAssignment::Shared(p) => (true, vec![p.to_record()]),
            PolicyAssignment::PerRegion(ps) => (false, ps.iter().map(PolicySpec::to_record).collect()),
        };
        PolicyFile {
            schema_version: POLICY_SCHEMA_VERSION,
            shared,
            policies,
        }
    }

    pub fn from_file(file: &PolicyFile) -> Result<Self> {
        if file.schema_version != POLICY_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported policy file schema version {}",
                file.schema_version
            )));
        }
        let specs = file
            .policies
            .iter()
            .map(PolicySpec::from_record)
            .collect::<Result<Vec<_>>>()?;
        if file.shared {
            match <[PolicySpec; 1]>::try_from(specs) {
                Ok([p]) => Ok(PolicyAssignment::Shared(p)),
                Err(v) => Err(Error::InvalidArgument(format!(
                    "shared policy file must hold exactly one policy, found {}",
                    v.len()
                ))),
            }
        } else {
            Ok(PolicyAssignment::PerRegion(specs))
        }
    }
}

/// Flat numeric serialization of one policy.
///
/// `params` layout by kind: `zero` is empty; `fixed` holds savings, mitigation,
/// export share, import share, tariff, promise, request, accept-up-to; `random`
/// holds the high and low 32-bit halves of the seed; `linear-cem` holds the
/// [`LinearPolicy`] weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub schema_version: u32,
    pub kind: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub schema_version: u32,
    pub shared: bool,
    pub policies: Vec<PolicyRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn obs(region: usize, n: usize) -> Observation {
        Observation {
            region,
            num_regions: n,
            step_fraction: 0.0,
            temp_atmosphere: 1.1,
            carbon_mass_atm: 851.0,
            labor: 476.878,
            technology: 1.872,
            capital: 0.239,
            sigma: 0.456,
            production: 0.7256,
            floor: 0.0,
            prev_means: ActionMeans::default(),
        }
    }

    #[test]
    fn zero_policy_does_nothing() {
        let mut rng = stream(1, 0, 0, 0, Purpose::Action);
        let o = obs(1, 3);
        let d = PolicySpec::Zero.prepare(&o).unwrap();
        assert_eq!(d.action(&mut rng), ActionVector::zeros(3));
        assert_eq!(d.offer(0, &mut rng), (0.0, 0.0));
        assert!(!d.accepts(&Proposal::new(0, 1, 0.9, 0.0), &mut rng));
    }

    #[test]
    fn fixed_policy_repeats_its_rates() {
        let spec = PolicySpec::Fixed(FixedRates::rates(0.2, 0.3));
        let mut rng = stream(1, 0, 0, 0, Purpose::Action);
        for step in 0..5 {
            let mut o = obs(0, 4);
            o.step_fraction = step as f64 / 20.0;
            let a = act(&spec, &o, &mut rng).unwrap();
            assert_eq!(a.savings_rate, 0.2);
            assert_eq!(a.mitigation_rate, 0.3);
        }
    }

    #[test]
    fn random_policy_is_reproducible_and_bounded() {
        let spec = PolicySpec::Random { seed: 3 };
        let o = obs(2, 5);
        let run = || {
            (0..10)
                .map(|s| act(&spec, &o, &mut stream(9, 0, s, 2, Purpose::Action)).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        for v in &a {
            assert_eq!(v.sanitized(2, 5, 0).unwrap(), *v);
        }
    }

    #[test]
    fn linear_policy_outputs_are_bounded() {
        let mut w = LinearPolicy::zeros();
        for (k, x) in w.weights.iter_mut().enumerate() {
            *x = ((k * 7919) % 13) as f64 - 6.0;
        }
        let spec = PolicySpec::LinearCem(w);
        let o = obs(1, 3);
        let d = spec.prepare(&o).unwrap();
        let mut rng = stream(1, 0, 0, 0, Purpose::Action);
        let a = d.action(&mut rng);
        assert_eq!(a.sanitized(1, 3, 0).unwrap(), a);
        let (p, r) = d.offer(0, &mut rng);
        assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
    }

    #[test]
    fn malformed_observation_is_rejected() {
        let mut o = obs(3, 3);
        assert!(matches!(
            PolicySpec::Zero.prepare(&o),
            Err(Error::MalformedObservation(_))
        ));
        o.region = 0;
        o.temp_atmosphere = f64::NAN;
        assert!(PolicySpec::Zero.prepare(&o).is_err());
    }

    #[test]
    fn identity_feature_is_the_only_difference() {
        let a = obs(0, 4).features();
        let b = obs(3, 4).features();
        let differing: Vec<usize> = (0..FEATURES).filter(|&k| a[k] != b[k]).collect();
        assert_eq!(differing, vec![FEATURES - 1]);
    }

    #[test]
    fn records_round_trip() {
        let specs = vec![
            PolicySpec::Zero,
            PolicySpec::Fixed(FixedRates::rates(0.2, 0.3)),
            PolicySpec::Random { seed: u64::MAX - 5 },
            PolicySpec::LinearCem(LinearPolicy {
                weights: (0..LINEAR_DIMS).map(|k| k as f64 * 0.1 - 3.0).collect(),
            }),
        ];
        for s in specs {
            assert_eq!(PolicySpec::from_record(&s.to_record()).unwrap(), s);
        }
        let bad = PolicyRecord {
            schema_version: POLICY_SCHEMA_VERSION,
            kind: "linear-cem".into(),
            params: vec![0.0; 3],
        };
        assert!(PolicySpec::from_record(&bad).is_err());
    }

    #[test]
    fn quantize_levels() {
        assert_eq!(quantize(0.0, 10), 0.0);
        assert_eq!(quantize(0.37, 10), 0.3);
        assert_eq!(quantize(1.0, 10), 0.9);
    }
}
