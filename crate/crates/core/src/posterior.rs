//! Negative log-densities (with respect to the Gaussian reference) of the phase-field and
//! level set posteriors, the thresholding map, and the phase-field scaling resolver.

use serde::{Deserialize, Serialize};

use crate::energy::psi_coefficient;
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::observation::{ForwardMap, ObservationSet};
use crate::spectral::PriorParams;

/// Exponents that tie the prior to the noise level `eps^c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scalings {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b: f64,
}

/// Solves `a2 - a1 = 1`, `3 + 2 a1 - b = -1`, `3 + 2 a1 - 2c = 0`, `3 + 2 (a1 - a3) = a`.
pub fn resolve_scalings(c: f64, a: f64) -> Result<Scalings> {
    if !(a > 0.0) {
        return Err(Error::ScalingViolation(format!("a = {a} must be > 0")));
    }
    if !(c >= 0.0) {
        return Err(Error::ScalingViolation(format!("c = {c} must be >= 0")));
    }
    let a1 = c - 1.5;
    Ok(Scalings { a1, a2: a1 + 1.0, a3: a1 + (3.0 - a) / 2.0, b: 2.0 * a1 + 4.0 })
}

impl Scalings {
    pub fn apply(&self, p: &PriorParams) -> PriorParams {
        PriorParams { a1: self.a1, a2: self.a2, a3: self.a3, b: self.b, ..*p }
    }
}

/// Checks that `p` satisfies the phase-field scaling relations and returns the exponent
/// `a = 3 + 2 (a1 - a3)` of the `L2` term.
pub fn scaling_exponent(p: &PriorParams) -> Result<f64> {
    let tol = 1e-12;
    let a = 3.0 + 2.0 * (p.a1 - p.a3);
    let checks = [
        (p.a2 - p.a1 - 1.0, "a2 - a1 = 1"),
        (3.0 + 2.0 * p.a1 - p.b + 1.0, "3 + 2 a1 - b = -1"),
        (3.0 + 2.0 * p.a1 - 2.0 * p.c, "3 + 2 a1 - 2c = 0"),
    ];
    for (defect, rel) in checks {
        if defect.abs() > tol {
            return Err(Error::ScalingViolation(format!("{rel} violated by {defect}")));
        }
    }
    if a <= 0.0 {
        return Err(Error::ScalingViolation(format!("a = 3 + 2(a1 - a3) = {a} must be > 0")));
    }
    Ok(a)
}

/// Pointwise signum with `S(0) = 0`.
pub fn threshold(v: &GridField) -> GridField {
    let values = v
        .values()
        .iter()
        .map(|&x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    GridField::binary_from_values(v.n(), values).expect("signum values")
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    PhaseField,
    LevelSet,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::PhaseField => "phase_field",
            TargetKind::LevelSet => "level_set",
        }
    }
}

/// A posterior target: formulation, prior and data.
#[derive(Clone, Debug)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub prior: PriorParams,
    pub obs: ObservationSet,
}

impl TargetSpec {
    pub fn new(kind: TargetKind, prior: PriorParams, obs: ObservationSet) -> Result<Self> {
        prior.validate()?;
        if kind == TargetKind::PhaseField && prior.alpha != 2.0 {
            return Err(Error::Config(format!("phase-field targets use alpha = 2 (got {})", prior.alpha)));
        }
        Ok(Self { kind, prior, obs })
    }
}

/// Something that can serve as the potential `A` in `exp(-A(u))` against the Gaussian reference.
pub trait Potential {
    fn value(&self, u: &GridField) -> f64;
}

impl<F: Fn(&GridField) -> f64> Potential for F {
    fn value(&self, u: &GridField) -> f64 {
        self(u)
    }
}

/// `A` for a [`TargetSpec`] on a fixed grid, with the forward map precomputed.
#[derive(Clone, Debug)]
pub struct TargetPotential {
    kind: TargetKind,
    obs: ObservationSet,
    forward: ForwardMap,
    psi_coef: f64,
}

impl TargetPotential {
    pub fn new(target: &TargetSpec, n: usize) -> Result<Self> {
        Ok(Self {
            kind: target.kind,
            obs: target.obs.clone(),
            forward: target.obs.forward_map(n)?,
            psi_coef: psi_coefficient(&target.prior),
        })
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn forward(&self) -> &ForwardMap {
        &self.forward
    }

    pub fn evaluate(&self, u: &GridField) -> Result<f64> {
        if u.n() != self.forward.n() {
            return Err(Error::GridMismatch { expected: self.forward.n(), got: u.n() });
        }
        Ok(self.value_unchecked(u.values()))
    }

    fn value_unchecked(&self, values: &[f64]) -> f64 {
        match self.kind {
            TargetKind::PhaseField => {
                let mut well = 0.0;
                if self.psi_coef != 0.0 {
                    for &x in values {
                        let d = 1.0 - x * x;
                        well += d * d;
                    }
                    well *= 0.25 * self.psi_coef / values.len() as f64;
                }
                well + self.obs.misfit_from_ku(&self.forward.apply_values(values))
            }
            TargetKind::LevelSet => {
                let ku = if self.obs.is_empty() {
                    Vec::new()
                } else {
                    let s: Vec<f64> = values.iter().map(|&x| sign(x)).collect();
                    self.forward.apply_values(&s)
                };
                self.obs.misfit_from_ku(&ku)
            }
        }
    }
}

impl Potential for TargetPotential {
    fn value(&self, u: &GridField) -> f64 {
        self.value_unchecked(u.values())
    }
}

/// `Psi(u) + misfit(u)` for the phase field, `misfit(S(v))` for the level set.
pub fn neg_log_density(u: &GridField, target: &TargetSpec) -> Result<f64> {
    TargetPotential::new(target, u.n())?.evaluate(u)
}
