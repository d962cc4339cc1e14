//! Bilateral mitigation negotiation.
//!
//! Each step every region sends one proposal to every other region: a
//! mitigation rate it promises and one it requests in return. When the
//! recipient accepts, both sides become bound. A region's floor is the
//! largest rate it is bound to, and masking raises its mitigation to at
//! least that floor.

use serde::{Deserialize, Serialize};

use crate::econ::ActionVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposer: usize,
    pub recipient: usize,
    /// Mitigation rate the proposer commits to.
    pub promise: f64,
    /// Mitigation rate demanded of the recipient.
    pub request: f64,
}

impl Proposal {
    pub fn new(proposer: usize, recipient: usize, promise: f64, request: f64) -> Self {
        debug_assert_ne!(proposer, recipient);
        Self {
            proposer,
            recipient,
            promise: clamp_unit(promise),
            request: clamp_unit(request),
        }
    }
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// One step's proposals, the recipients' answers and the resulting floors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationState {
    pub proposals: Vec<Proposal>,
    pub acceptances: Vec<bool>,
    pub floors: Vec<f64>,
}

impl NegotiationState {
    pub fn inactive(n: usize) -> Self {
        Self {
            proposals: Vec::new(),
            acceptances: Vec::new(),
            floors: vec![0.0; n],
        }
    }

    pub fn accepted_count(&self) -> usize {
        self.acceptances.iter().filter(|a| **a).count()
    }
}

/// Gather one proposal per ordered pair `(i, j)`, `i != j`, in row-major order.
///
/// `offer(i, j)` returns the raw `(promise, request)` of `i` towards `j`.
pub fn collect_proposals<F>(n: usize, mut offer: F) -> Vec<Proposal>
where
    F: FnMut(usize, usize) -> (f64, f64),
{
    let mut proposals = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (promise, request) = offer(i, j);
                proposals.push(Proposal::new(i, j, promise, request));
            }
        }
    }
    proposals
}

/// Per-region floors from accepted proposals; 0 where nothing binds.
pub fn compute_floors(n: usize, proposals: &[Proposal], acceptances: &[bool]) -> Vec<f64> {
    assert_eq!(proposals.len(), acceptances.len(), "one acceptance bit per proposal");
    let mut floors = vec![0.0; n];
    for (p, accepted) in proposals.iter().zip(acceptances) {
        if *accepted {
            floors[p.recipient] = f64::max(floors[p.recipient], p.request);
            floors[p.proposer] = f64::max(floors[p.proposer], p.promise);
        }
    }
    floors
}

/// Raise the mitigation rate to the floor; every other field passes through.
pub fn mask_action(action: &ActionVector, floor: f64) -> ActionVector {
    ActionVector {
        mitigation_rate: action.mitigation_rate.max(floor),
        ..action.clone()
    }
}
