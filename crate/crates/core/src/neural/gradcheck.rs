//! Central finite-difference checks against the tape's analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::{ParamId, ParamStore};
use crate::error::Result;

/// One compared coordinate.
#[derive(Clone, Debug)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a - n| / max(|a|, |n|)`, with an absolute floor so that coordinates
    /// whose true gradient is essentially zero do not divide by noise.
    pub fn rel_error(&self, abs_floor: f64) -> f64 {
        let diff = (self.analytic - self.numeric).abs();
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale < abs_floor {
            diff / abs_floor
        } else {
            diff / scale
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub probes: Vec<Probe>,
}

impl Report {
    pub fn max_rel_error(&self, abs_floor: f64) -> f64 {
        self.probes
            .iter()
            .map(|p| p.rel_error(abs_floor))
            .fold(0.0, f64::max)
    }

    pub fn worst(&self, abs_floor: f64) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| {
            a.rel_error(abs_floor)
                .partial_cmp(&b.rel_error(abs_floor))
                .expect("finite")
        })
    }
}

/// Compares analytic gradients with central differences of `loss` on
/// `per_param` randomly chosen coordinates of every parameter.
///
/// `loss` evaluates the scalar objective for a given parameter state;
/// `analytic` returns the gradients for the current state.
pub fn check<R, L, A>(
    params: &mut ParamStore<f64>,
    loss: L,
    analytic: A,
    h: f64,
    per_param: usize,
    rng: &mut R,
) -> Result<Report>
where
    R: Rng + ?Sized,
    L: Fn(&ParamStore<f64>) -> Result<f64>,
    A: Fn(&ParamStore<f64>) -> Result<super::Gradients<f64>>,
{
    let grads = analytic(params)?;
    let mut report = Report::default();
    let ids: Vec<ParamId> = params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = params.value(id).len();
        let picks = sample(rng, n, per_param.min(n)).into_vec();
        for index in picks {
            let analytic = grads.get(id).map_or(0.0, |g| g[index]);
            let orig = params.value(id).data()[index];
            params.get_mut(id).value.data_mut()[index] = orig + h;
            let up = loss(params)?;
            params.get_mut(id).value.data_mut()[index] = orig - h;
            let down = loss(params)?;
            params.get_mut(id).value.data_mut()[index] = orig;
            report.probes.push(Probe {
                param: params.get(id).name.clone(),
                index,
                analytic,
                numeric: (up - down) / (2.0 * h),
            });
        }
    }
    Ok(report)
}
