use std::fmt;

use rand::seq::SliceRandom;

use crate::dgp::rng::{stream_rng, Stream};
use crate::error::{Error, Result};

/// Role a row plays in the sample-splitting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// Propensity training.
    D1A,
    /// Outcome-regression training.
    D1B,
    /// Second-stage regression.
    D2,
    /// Held out for MSE evaluation.
    Eval,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::D1A, Role::D1B, Role::D2, Role::Eval];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::D1A => "D1A",
            Role::D1B => "D1B",
            Role::D2 => "D2",
            Role::Eval => "EVAL",
        })
    }
}

/// Four equal folds, as in the simulation code.
pub const QUARTERS: [(Role, f64); 4] = [
    (Role::D1A, 0.25),
    (Role::D1B, 0.25),
    (Role::D2, 0.25),
    (Role::Eval, 0.25),
];

/// Three equal folds, no held-out evaluation set.
pub const THIRDS: [(Role, f64); 3] = [(Role::D1A, 1.0 / 3.0), (Role::D1B, 1.0 / 3.0), (Role::D2, 1.0 / 3.0)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    labels: Vec<Role>,
    seed: u64,
}

impl FoldAssignment {
    pub fn from_labels(labels: Vec<Role>, seed: u64) -> Self {
        Self { labels, seed }
    }

    pub fn labels(&self) -> &[Role] {
        &self.labels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices carrying `role`, ascending.
    pub fn rows(&self, role: Role) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| (r == role).then_some(i))
            .collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.labels.iter().filter(|&&r| r == role).count()
    }

    /// Rows of `role`, failing if there are none.
    pub fn require(&self, role: Role) -> Result<Vec<usize>> {
        let rows = self.rows(role);
        if rows.is_empty() {
            Err(Error::MissingRole(role))
        } else {
            Ok(rows)
        }
    }
}

/// Per-role counts by largest-remainder apportionment; ties go to the
/// role declared first.
fn apportion(n: usize, roles: &[(Role, f64)]) -> Vec<usize> {
    let targets: Vec<f64> = roles.iter().map(|&(_, p)| p * n as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..roles.len()).collect();
    // stable sort keeps declaration order among equal remainders
    order.sort_by(|&i, &j| {
        let ri = targets[i] - targets[i].floor();
        let rj = targets[j] - targets[j].floor();
        rj.partial_cmp(&ri).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &k in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Randomly partitions `n` rows into the given roles.
pub fn assign_folds(n: usize, roles: &[(Role, f64)], seed: u64) -> Result<FoldAssignment> {
    if roles.is_empty() {
        return Err(Error::invalid("at least one role is required"));
    }
    if n < roles.len() {
        return Err(Error::invalid(format!(
            "cannot split {n} rows into {} roles",
            roles.len()
        )));
    }
    for (i, (r, _)) in roles.iter().enumerate() {
        if roles[..i].iter().any(|(q, _)| q == r) {
            return Err(Error::invalid(format!("role {r} listed twice")));
        }
    }
    if roles.iter().any(|&(_, p)| !(p.is_finite() && p >= 0.0)) {
        return Err(Error::invalid("role proportions must be non-negative"));
    }
    let total: f64 = roles.iter().map(|&(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("role proportions sum to {total}, not 1")));
    }

    let counts = apportion(n, roles);
    let mut labels = Vec::with_capacity(n);
    for (&(role, _), &c) in roles.iter().zip(&counts) {
        labels.extend(std::iter::repeat_n(role, c));
    }
    let mut rng = stream_rng(seed, Stream::Folds);
    labels.shuffle(&mut rng);
    Ok(FoldAssignment { labels, seed })
}
