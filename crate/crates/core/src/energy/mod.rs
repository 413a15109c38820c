//! Variational functionals of the phase-field posterior, their sharp-interface limit, and
//! the perimeter estimator for binary grid fields.

mod gamma;
mod perimeter;
mod profile;

pub use gamma::{gamma_check, recovery_sequence, Disc, GammaCheckReport};
pub use perimeter::{interface_scaling_study, perimeter_estimate, InterfaceStudy, StudyRow};
pub use profile::{
    modica_mortola_bound, p_delta, profile_energy, tanh_energy, tanh_upper_bound, PDelta, PDeltaOptions, ProfileGrid,
};

use crate::error::Result;
use crate::grid::GridField;
use crate::observation::ObservationSet;
use crate::posterior::scaling_exponent;
use crate::spectral::{derivative_energies, Fft2, PriorParams, PriorSpectrum};

/// `r / eps^b`.
pub fn psi_coefficient(p: &PriorParams) -> f64 {
    p.r * p.eps.powf(-p.b)
}

/// Double-well penalty `Psi(u) = r/eps^b * int 1/4 (1 - u^2)^2`, grid quadrature.
pub fn psi(u: &GridField, p: &PriorParams) -> f64 {
    let well: f64 = u.values().iter().map(|&x| (1.0 - x * x).powi(2)).sum();
    psi_coefficient(p) * 0.25 * well / u.values().len() as f64
}

/// Onsager-Machlup functional `1/2 |u|_E^2 + Psi(u) + 1/2 eps^{-2c} |Sigma^{-1/2}(y - Ku)|^2`.
pub fn onsager_machlup(u: &GridField, obs: &ObservationSet, p: &PriorParams) -> Result<f64> {
    let cm = PriorSpectrum::new(p, u.n())?.cm_norm_sq(u)?;
    Ok(0.5 * cm + psi(u, p) + crate::observation::misfit(u, obs)?)
}

/// The individual terms of `I^eps(u)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IEpsTerms {
    /// `1/2 delta eps^3 int |Lap u|^2`
    pub curvature: f64,
    /// `1/2 delta q eps int |grad u|^2`
    pub gradient: f64,
    /// `r / (4 eps) int (1 - u^2)^2`
    pub well: f64,
    /// `1/2 delta tau^2 eps^a int u^2`
    pub mass: f64,
    /// `1/2 |Sigma^{-1/2}(y - Ku)|^2`
    pub data: f64,
}

impl IEpsTerms {
    pub fn total(&self) -> f64 {
        self.curvature + self.gradient + self.well + self.mass + self.data
    }

    /// Everything except the data term.
    pub fn regulariser(&self) -> f64 {
        self.curvature + self.gradient + self.well + self.mass
    }
}

/// Term-by-term evaluation of the rescaled functional `I^eps`. The parameters must satisfy
/// the phase-field scaling relations.
pub fn i_eps_terms(u: &GridField, obs: &ObservationSet, p: &PriorParams) -> Result<IEpsTerms> {
    let a = scaling_exponent(p)?;
    let fft = Fft2::new(u.n());
    let (lap, grad) = derivative_energies(&fft, u);
    let len = u.values().len() as f64;
    let well: f64 = u.values().iter().map(|&x| (1.0 - x * x).powi(2)).sum::<f64>() / len;
    let l2: f64 = u.values().iter().map(|&x| x * x).sum::<f64>() / len;
    let data = if obs.is_empty() {
        0.0
    } else {
        let ku = obs.forward_map(u.n())?.apply(u)?;
        0.5 * obs.weighted_residual_sq(&ku)
    };
    let e = p.eps;
    Ok(IEpsTerms {
        curvature: 0.5 * p.delta * e.powi(3) * lap,
        gradient: 0.5 * p.delta * p.q * e * grad,
        well: p.r / (4.0 * e) * well,
        mass: 0.5 * p.delta * p.tau * p.tau * e.powf(a) * l2,
        data,
    })
}

/// `I^eps(u) = eps^{2 a1 + 3} J^eps(u)` written out under the scaling relations.
pub fn i_eps(u: &GridField, obs: &ObservationSet, p: &PriorParams) -> Result<f64> {
    Ok(i_eps_terms(u, obs, p)?.total())
}
