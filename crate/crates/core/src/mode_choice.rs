//! Nested-logit mode choice between HV, SAV and rail.
//!
//! HV and SAV share the auto nest; rail sits alone at the upper level.
//! Demand is split per traveller segment, each with its own choice set.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Hv = 0,
    Sav = 1,
    Rail = 2,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Hv, Mode::Sav, Mode::Rail];
}

/// A subset of the three modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const EMPTY: ModeSet = ModeSet(0);
    pub const ALL: ModeSet = ModeSet(0b111);

    pub fn of(modes: &[Mode]) -> Self {
        ModeSet(modes.iter().fold(0, |acc, &m| acc | 1 << m as u8))
    }

    pub fn contains(self, mode: Mode) -> bool {
        self.0 & (1 << mode as u8) != 0
    }

    pub fn without(self, mode: Mode) -> Self {
        ModeSet(self.0 & !(1 << mode as u8))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn only(self, mode: Mode) -> bool {
        self.0 == 1 << mode as u8
    }
}

/// Choice sets of the four traveller segments: choice travellers, HV
/// travellers, rail travellers and SAV travellers.
pub const SEGMENT_MODES: [ModeSet; 4] = [
    ModeSet(0b111),
    ModeSet(0b011),
    ModeSet(0b110),
    ModeSet(0b010),
];

#[derive(Clone, Debug, PartialEq)]
pub struct UtilitySpec {
    /// utils/min
    pub time_weight: f64,
    /// min/EUR
    pub value_of_time: f64,
    pub nest_lambda: f64,
    /// Mode constants indexed by `Mode`.
    pub constants: [f64; 3],
}

impl UtilitySpec {
    pub fn from_params(p: &crate::params::ParamSet) -> Self {
        Self {
            time_weight: p.time_weight,
            value_of_time: p.value_of_time,
            nest_lambda: p.nest_lambda,
            constants: [p.asc_hv, p.asc_sav, p.asc_rail],
        }
    }
}

/// Utility of one mode on one OD pair: the mode constant minus the weighted
/// generalised time, where money is converted to minutes with the value of
/// time.
pub fn mode_utility(
    mode: Mode,
    distance_km: f64,
    t_invehicle: f64,
    t_access: f64,
    cost_per_km: f64,
    cost_fixed: f64,
    spec: &UtilitySpec,
) -> f64 {
    let money = cost_per_km * distance_km + cost_fixed;
    spec.constants[mode as usize]
        - spec.time_weight * (t_invehicle + t_access + spec.value_of_time * money)
}

/// Nested-logit probabilities `[P_H, P_S, P_R]` over the available modes.
pub fn nested_logit_shares(utilities: [f64; 3], lambda: f64, available: ModeSet) -> Result<[f64; 3]> {
    if available.is_empty() {
        return Err(Error::InvalidArgument("empty choice set".into()));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!("nest coefficient {lambda} outside (0, 1]")));
    }
    Ok(nested_logit_unchecked(utilities, lambda, available))
}

pub(crate) fn nested_logit_unchecked(u: [f64; 3], lambda: f64, available: ModeSet) -> [f64; 3] {
    let has_h = available.contains(Mode::Hv);
    let has_s = available.contains(Mode::Sav);
    let has_r = available.contains(Mode::Rail);
    let mut p = [0.0; 3];

    // lower level within the auto nest
    let (p_h_in, p_s_in, inclusive) = match (has_h, has_s) {
        (true, true) => {
            let a = u[0] / lambda;
            let b = u[1] / lambda;
            let m = a.max(b);
            let (ea, eb) = ((a - m).exp(), (b - m).exp());
            let sum = ea + eb;
            (ea / sum, eb / sum, lambda * (m + sum.ln()))
        }
        (true, false) => (1.0, 0.0, u[0]),
        (false, true) => (0.0, 1.0, u[1]),
        (false, false) => (0.0, 0.0, f64::NEG_INFINITY),
    };

    // upper level: auto nest vs rail
    let p_auto = match (has_h || has_s, has_r) {
        (true, true) => 1.0 / (1.0 + (u[2] - inclusive).exp()),
        (true, false) => 1.0,
        (false, _) => 0.0,
    };
    p[0] = p_auto * p_h_in;
    p[1] = p_auto * p_s_in;
    p[2] = if has_r { 1.0 - p_auto } else { 0.0 };
    p
}

/// Per-OD demand by mode (pax/h).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeSplit {
    pub hv: Vec<f64>,
    pub sav: Vec<f64>,
    pub rail: Vec<f64>,
}

impl ModeSplit {
    pub fn zeros(n: usize) -> Self {
        Self {
            hv: vec![0.0; n],
            sav: vec![0.0; n],
            rail: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.hv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hv.is_empty()
    }

    pub fn total_hv(&self) -> f64 {
        self.hv.iter().sum()
    }

    pub fn total_sav(&self) -> f64 {
        self.sav.iter().sum()
    }

    pub fn total_rail(&self) -> f64 {
        self.rail.iter().sum()
    }

    /// Vehicle demand on roads, one passenger per vehicle.
    pub fn car(&self) -> Vec<f64> {
        self.hv.iter().zip(&self.sav).map(|(h, s)| h + s).collect()
    }

    pub fn get(&self, mode: Mode) -> &[f64] {
        match mode {
            Mode::Hv => &self.hv,
            Mode::Sav => &self.sav,
            Mode::Rail => &self.rail,
        }
    }
}

/// Inputs for one OD pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdChoice {
    pub demand: f64,
    pub utilities: [f64; 3],
    pub rail_available: bool,
}

/// Choice set of a segment on an OD pair. Rail is dropped where the OD pair
/// has no rail service; SAV is dropped while no fleet exists unless it is the
/// segment's only remaining option.
pub fn segment_choice_set(segment: usize, rail_available: bool, sav_available: bool) -> ModeSet {
    let mut set = SEGMENT_MODES[segment];
    if !rail_available {
        set = set.without(Mode::Rail);
    }
    if !sav_available && !set.only(Mode::Sav) {
        set = set.without(Mode::Sav);
    }
    if set.is_empty() {
        set = ModeSet::of(&[Mode::Sav]);
    }
    set
}

/// Mode shares of one OD pair aggregated over segments.
pub fn od_shares(choice: &OdChoice, segment_shares: &[f64; 4], lambda: f64, sav_available: bool) -> [f64; 3] {
    let mut total = [0.0; 3];
    for (seg, &x) in segment_shares.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let set = segment_choice_set(seg, choice.rail_available, sav_available);
        let p = nested_logit_unchecked(choice.utilities, lambda, set);
        for m in 0..3 {
            total[m] += x * p[m];
        }
    }
    total
}

/// Allocate each OD pair's demand over modes and segments.
pub fn split_demand(
    choices: &[OdChoice],
    segment_shares: &[f64; 4],
    lambda: f64,
    sav_available: bool,
) -> Result<ModeSplit> {
    let sum: f64 = segment_shares.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || segment_shares.iter().any(|&x| x < 0.0) {
        return Err(Error::param("x_i", format!("segment shares must sum to 1, got {sum}")));
    }
    let mut split = ModeSplit::zeros(choices.len());
    for (i, c) in choices.iter().enumerate() {
        let p = od_shares(c, segment_shares, lambda, sav_available);
        // rail and SAV from the shares; HV takes the remainder so each OD
        // conserves its demand exactly
        split.sav[i] = c.demand * p[1];
        split.rail[i] = c.demand * p[2];
        split.hv[i] = if p[0] > 0.0 {
            (c.demand - split.sav[i] - split.rail[i]).max(0.0)
        } else {
            0.0
        };
        if p[0] == 0.0 {
            // no HV in any segment: put the rounding residue on SAV or rail
            let residue = c.demand - split.sav[i] - split.rail[i];
            if p[1] > 0.0 {
                split.sav[i] += residue;
            } else {
                split.rail[i] += residue;
            }
        }
    }
    Ok(split)
}
