//! Observed records, potential outcomes, principal states and the six
//! arm-specific Weibull transition hazards of the illness-death model.

mod hazard;
mod params;

pub use hazard::{cum_hazard, hazard, log_hazard_ref, TransitionTerms};
pub use params::{ModelParams, ParamLayout, UnconstrainedParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_index(z: usize) -> Result<Self> {
        match z {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treated),
            other => Err(Error::data(format!("treatment must be 0 or 1, got {other}"))),
        }
    }

    pub fn other(self) -> Self {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

/// Illness-death transitions: healthy to ill, healthy to dead, ill to dead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// Healthy to nonterminal event (j = 1).
    Nonterminal,
    /// Healthy to death without the nonterminal event (j = 2).
    Terminal,
    /// Death after the nonterminal event, on the sojourn clock (j = 3).
    PostNonterminal,
}

impl Transition {
    pub const ALL: [Transition; 3] = [
        Transition::Nonterminal,
        Transition::Terminal,
        Transition::PostNonterminal,
    ];

    pub fn index(self) -> usize {
        match self {
            Transition::Nonterminal => 0,
            Transition::Terminal => 1,
            Transition::PostNonterminal => 2,
        }
    }

    /// One-based label used in column names.
    pub fn label(self) -> usize {
        self.index() + 1
    }
}

/// One observed unit after preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub z: Arm,
    /// First-event or censoring time.
    pub y_r: f64,
    pub delta_r: bool,
    /// Death or censoring time.
    pub y_t: f64,
    pub delta_t: bool,
    pub x: Vec<f64>,
}

impl SubjectRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::data(format!("subject {}: {msg}", self.id)));
        if !(self.y_r.is_finite() && self.y_t.is_finite()) {
            return bad("times must be finite");
        }
        if self.y_r <= 0.0 || self.y_t <= 0.0 {
            return bad("times must be strictly positive");
        }
        if self.y_r > self.y_t {
            return bad("y_r must not exceed y_t");
        }
        if !self.delta_r && self.y_r != self.y_t {
            return bad("without a nonterminal event y_r must equal y_t");
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return bad("covariates must be finite");
        }
        Ok(())
    }

    pub fn case(&self) -> ObservedCase {
        ObservedCase::from_flags(self.delta_r, self.delta_t)
    }

    /// Censoring time implied by the record when death was not observed.
    pub fn censoring_time(&self) -> Option<f64> {
        (!self.delta_t).then_some(self.y_t)
    }
}

/// The four observed-data patterns of `(delta_r, delta_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservedCase {
    Neither,
    NonterminalOnly,
    TerminalOnly,
    Both,
}

impl ObservedCase {
    pub fn from_flags(delta_r: bool, delta_t: bool) -> Self {
        match (delta_r, delta_t) {
            (false, false) => ObservedCase::Neither,
            (true, false) => ObservedCase::NonterminalOnly,
            (false, true) => ObservedCase::TerminalOnly,
            (true, true) => ObservedCase::Both,
        }
    }
}

/// Potential nonterminal event time. `Undefined` means death came first, so
/// the event can never occur; it is not a numeric infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NonterminalTime {
    At(f64),
    Undefined,
}

impl NonterminalTime {
    pub fn time(self) -> Option<f64> {
        match self {
            NonterminalTime::At(t) => Some(t),
            NonterminalTime::Undefined => None,
        }
    }

    /// `1(R < r)`; an undefined event never occurs.
    pub fn occurred_before(self, r: f64) -> bool {
        matches!(self, NonterminalTime::At(t) if t < r)
    }

    /// `min(R, r)` with `min(undefined, r) = r`.
    pub fn restricted(self, r: f64) -> f64 {
        match self {
            NonterminalTime::At(t) if t < r => t,
            _ => r,
        }
    }
}

/// Full set of potential outcomes `(R(0), T(0), R(1), T(1))` for one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialOutcomeSet {
    pub r0: NonterminalTime,
    pub t0: f64,
    pub r1: NonterminalTime,
    pub t1: f64,
}

impl PotentialOutcomeSet {
    pub fn from_arms(arm: Arm, factual: ArmOutcome, counterfactual: ArmOutcome) -> Self {
        let (c, t) = match arm {
            Arm::Control => (factual, counterfactual),
            Arm::Treated => (counterfactual, factual),
        };
        PotentialOutcomeSet {
            r0: c.r,
            t0: c.t,
            r1: t.r,
            t1: t.t,
        }
    }

    pub fn arm(&self, arm: Arm) -> ArmOutcome {
        match arm {
            Arm::Control => ArmOutcome { r: self.r0, t: self.t0 },
            Arm::Treated => ArmOutcome { r: self.r1, t: self.t1 },
        }
    }

    /// Checks `r_z < t_z` whenever `r_z` is defined and that death times are positive.
    pub fn is_valid(&self) -> bool {
        [self.arm(Arm::Control), self.arm(Arm::Treated)]
            .iter()
            .all(ArmOutcome::is_valid)
    }
}

/// Potential outcomes `(R(z), T(z))` under one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmOutcome {
    pub r: NonterminalTime,
    pub t: f64,
}

impl ArmOutcome {
    pub fn is_valid(&self) -> bool {
        let t_ok = self.t > 0.0 && !self.t.is_nan();
        match self.r {
            NonterminalTime::At(r) => t_ok && r > 0.0 && r < self.t,
            NonterminalTime::Undefined => t_ok,
        }
    }
}

/// Time-varying principal state defined by the two potential death times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrincipalState {
    /// Alive at `t` under both arms (AA).
    AlwaysAlive,
    /// Alive only under control; killed by treatment (TK).
    TreatmentKilled,
    /// Alive only under treatment; killed by control (CK).
    ControlKilled,
    /// Dead under both arms (DD).
    DoublyDead,
}

impl PrincipalState {
    pub const ALL: [PrincipalState; 4] = [
        PrincipalState::AlwaysAlive,
        PrincipalState::TreatmentKilled,
        PrincipalState::ControlKilled,
        PrincipalState::DoublyDead,
    ];

    pub fn index(self) -> usize {
        match self {
            PrincipalState::AlwaysAlive => 0,
            PrincipalState::TreatmentKilled => 1,
            PrincipalState::ControlKilled => 2,
            PrincipalState::DoublyDead => 3,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            PrincipalState::AlwaysAlive => "AA",
            PrincipalState::TreatmentKilled => "TK",
            PrincipalState::ControlKilled => "CK",
            PrincipalState::DoublyDead => "DD",
        }
    }

    pub fn from_death_times(t0: f64, t1: f64, t: f64) -> Self {
        match (t0 > t, t1 > t) {
            (true, true) => PrincipalState::AlwaysAlive,
            (true, false) => PrincipalState::TreatmentKilled,
            (false, true) => PrincipalState::ControlKilled,
            (false, false) => PrincipalState::DoublyDead,
        }
    }
}

pub fn principal_state(po: &PotentialOutcomeSet, t: f64) -> PrincipalState {
    PrincipalState::from_death_times(po.t0, po.t1, t)
}

/// Checks that all records are valid and share one covariate dimension.
pub fn validate_dataset(data: &[SubjectRecord]) -> Result<usize> {
    let first = data
        .first()
        .ok_or_else(|| Error::data("dataset is empty"))?;
    let p = first.x.len();
    for s in data {
        s.validate()?;
        if s.x.len() != p {
            return Err(Error::data(format!(
                "subject {}: expected {p} covariates, found {}",
                s.id,
                s.x.len()
            )));
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn po(t0: f64, t1: f64) -> PotentialOutcomeSet {
        PotentialOutcomeSet {
            r0: NonterminalTime::Undefined,
            t0,
            r1: NonterminalTime::Undefined,
            t1,
        }
    }

    #[test]
    fn principal_state_cases() {
        assert_eq!(principal_state(&po(50.0, 40.0), 45.0), PrincipalState::TreatmentKilled);
        assert_eq!(principal_state(&po(50.0, 40.0), 30.0), PrincipalState::AlwaysAlive);
        assert_eq!(principal_state(&po(10.0, 40.0), 45.0), PrincipalState::DoublyDead);
        assert_eq!(principal_state(&po(10.0, 40.0), 20.0), PrincipalState::ControlKilled);
        // death exactly at t counts as dead by t
        assert_eq!(principal_state(&po(45.0, 50.0), 45.0), PrincipalState::ControlKilled);
    }

    #[test]
    fn undefined_nonterminal_is_never_an_event() {
        let r = NonterminalTime::Undefined;
        assert!(!r.occurred_before(1e300));
        assert_eq!(r.restricted(25.0), 25.0);
        let r = NonterminalTime::At(10.0);
        assert!(r.occurred_before(10.5));
        assert!(!r.occurred_before(10.0));
        assert_eq!(r.restricted(25.0), 10.0);
        assert_eq!(r.restricted(5.0), 5.0);
    }

    #[test]
    fn record_invariants() {
        let mut s = SubjectRecord {
            id: "a".into(),
            z: Arm::Treated,
            y_r: 2.0,
            delta_r: true,
            y_t: 5.0,
            delta_t: false,
            x: vec![0.1],
        };
        assert!(s.validate().is_ok());
        s.delta_r = false;
        assert!(s.validate().is_err(), "y_r must equal y_t without nonterminal event");
        s.y_r = 5.0;
        assert!(s.validate().is_ok());
        s.y_r = 6.0;
        assert!(s.validate().is_err());
        s.y_r = 0.0;
        s.y_t = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn observed_case_is_function_of_flags() {
        assert_eq!(ObservedCase::from_flags(false, false), ObservedCase::Neither);
        assert_eq!(ObservedCase::from_flags(true, false), ObservedCase::NonterminalOnly);
        assert_eq!(ObservedCase::from_flags(false, true), ObservedCase::TerminalOnly);
        assert_eq!(ObservedCase::from_flags(true, true), ObservedCase::Both);
    }

    #[test]
    fn outcome_set_arm_placement() {
        let f = ArmOutcome { r: NonterminalTime::At(1.0), t: 3.0 };
        let c = ArmOutcome { r: NonterminalTime::Undefined, t: 2.0 };
        let s = PotentialOutcomeSet::from_arms(Arm::Treated, f, c);
        assert_eq!(s.arm(Arm::Treated), f);
        assert_eq!(s.arm(Arm::Control), c);
        assert!(s.is_valid());
        let bad = PotentialOutcomeSet::from_arms(Arm::Control, ArmOutcome { r: NonterminalTime::At(4.0), t: 3.0 }, c);
        assert!(!bad.is_valid());
    }
}
