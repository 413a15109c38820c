use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::i_eps_terms;
use super::profile::ProfileGrid;
use crate::error::{Error, Result};
use crate::grid::{FieldKind, GridField};
use crate::observation::ObservationSet;
use crate::spectral::PriorParams;

/// Disc on the periodic unit square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Disc {
    pub centre: [f64; 2],
    pub radius: f64,
}

impl Disc {
    /// `R - |x - x0|` with the minimum-image distance: positive inside.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let wrap = |d: f64| d - d.round();
        let dx = wrap(x - self.centre[0]);
        let dy = wrap(y - self.centre[1]);
        self.radius - dx.hypot(dy)
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.radius
    }

    pub fn indicator(&self, n: usize) -> GridField {
        let v = GridField::from_fn(n, |x, y| if self.signed_distance(x, y) > 0.0 { 1.0 } else { -1.0 });
        GridField::binary_from_values(n, v.into_values()).expect("signs")
    }
}

/// `u(x) = U(eta(x) / eps)` with `eta` the signed distance to the disc boundary.
pub fn recovery_sequence(q: &Disc, n: usize, eps: f64, profile: &ProfileGrid) -> Result<GridField> {
    if eps < 2.0 / n as f64 {
        return Err(Error::Resolution(format!("eps = {eps} is below two grid cells (2/N = {})", 2.0 / n as f64)));
    }
    Ok(GridField::from_fn(n, |x, y| profile.eval(q.signed_distance(x, y) / eps)))
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaCheckReport {
    pub n: usize,
    pub eps_list: Vec<f64>,
    pub i_eps: Vec<f64>,
    /// `(I^eps - target) / target`.
    pub gaps: Vec<f64>,
    /// Richardson extrapolation of the last two values, assuming an `eps^2` error.
    pub limit_estimate: f64,
    /// `P^delta` times the perimeter of the disc.
    pub target: f64,
    pub p_delta: f64,
    pub perimeter: f64,
}

impl GammaCheckReport {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("parameter,value\n");
        s.push_str(&format!("N,{}\n", self.n));
        s.push_str(&format!("p_delta,{:.12e}\n", self.p_delta));
        s.push_str(&format!("perimeter,{:.12e}\n", self.perimeter));
        s.push_str(&format!("target,{:.12e}\n", self.target));
        s.push_str(&format!("limit_estimate,{:.12e}\n", self.limit_estimate));
        for ((e, v), g) in self.eps_list.iter().zip(&self.i_eps).zip(&self.gaps) {
            s.push_str(&format!("I_eps[{e}],{v:.12e}\n"));
            s.push_str(&format!("gap[{e}],{g:.12e}\n"));
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "target": self.target,
            "estimates": self.i_eps,
            "gaps": self.gaps,
            "eps": self.eps_list,
            "limit_estimate": self.limit_estimate,
            "p_delta": self.p_delta,
            "N": self.n,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("gamma_check.csv"), self.to_csv_string())?;
        std::fs::write(dir.join("gamma_check.json"), serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

/// Evaluates `I^eps` without data on the recovery sequence of a disc along a ladder of
/// `eps`, against the sharp-interface value `P^delta * perimeter`.
///
/// `p` fixes `delta, q, tau, r` and the scaling exponents; `eps` is replaced by each ladder
/// value. `profile` is the minimiser returned by [`super::p_delta`] with value `p_delta`.
pub fn gamma_check(
    disc: &Disc,
    eps_list: &[f64],
    n: usize,
    p: &PriorParams,
    profile: &ProfileGrid,
    p_delta: f64,
) -> Result<GammaCheckReport> {
    let no_data = ObservationSet::empty(2.0 / n as f64, 1.0);
    let i_eps: Vec<f64> = eps_list
        .par_iter()
        .map(|&eps| {
            let pe = PriorParams { eps, ..*p };
            let u = recovery_sequence(disc, n, eps, profile)?;
            debug_assert_eq!(u.kind(), FieldKind::Continuous);
            Ok(i_eps_terms(&u, &no_data, &pe)?.regulariser())
        })
        .collect::<Result<_>>()?;
    let target = p_delta * disc.perimeter();
    let gaps = i_eps.iter().map(|v| (v - target) / target).collect();
    let k = i_eps.len();
    let limit_estimate = if k >= 2 {
        let ratio = eps_list[k - 2] / eps_list[k - 1];
        i_eps[k - 1] + (i_eps[k - 1] - i_eps[k - 2]) / (ratio * ratio - 1.0)
    } else {
        i_eps.first().copied().unwrap_or(f64::NAN)
    };
    Ok(GammaCheckReport {
        n,
        eps_list: eps_list.to_vec(),
        i_eps,
        gaps,
        limit_estimate,
        target,
        p_delta,
        perimeter: disc.perimeter(),
    })
}
