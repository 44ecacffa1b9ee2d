//! Comparison envelopes for ρ, decay checks over recorded trajectories and
//! classification of limits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrinsic::extrinsic_field;
use crate::flow::{DiagnosticsRecord, Trajectory};
use crate::mapfield::MapState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvelopeVariant {
    SigmaNonneg,
    SigmaNeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub sigma: f64,
    pub c0: f64,
    pub variant: EnvelopeVariant,
}

impl EnvelopeParams {
    pub fn new(sigma: f64, c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) || !sigma.is_finite() {
            return Err(Error::InvalidEnvelope(format!("sigma = {sigma}, c0 = {c0}")));
        }
        let variant = if sigma >= 0.0 {
            EnvelopeVariant::SigmaNonneg
        } else {
            EnvelopeVariant::SigmaNeg
        };
        Ok(Self { sigma, c0, variant })
    }
}

/// `c0` for which the envelope equals `rho0_min` at `t = 0`.
pub fn fit_c0(rho0_min: f64, sigma: f64) -> Result<EnvelopeParams> {
    if !(rho0_min > 0.0) {
        return Err(Error::NotStrictlyDecreasing { rho0: rho0_min });
    }
    if !(rho0_min < 1.0) {
        return Err(Error::InvalidEnvelope(format!(
            "min rho = {rho0_min} leaves no room for an envelope"
        )));
    }
    EnvelopeParams::new(sigma, rho0_min / (1.0 - rho0_min * rho0_min).sqrt())
}

/// `x / sqrt(1 + x²)` with `x = c0 e^{σt}` (σ ≥ 0) or `x = c0 e^{2σt}` (σ < 0).
pub fn envelope(t: f64, p: &EnvelopeParams) -> f64 {
    let rate = match p.variant {
        EnvelopeVariant::SigmaNonneg => p.sigma,
        EnvelopeVariant::SigmaNeg => 2.0 * p.sigma,
    };
    let x = p.c0 * (rate * t).exp();
    if x > 1e8 {
        1.0 / (1.0 + 1.0 / (x * x)).sqrt()
    } else {
        x / (1.0 + x * x).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaSign {
    Positive,
    Zero,
    Negative,
}

impl SigmaSign {
    pub fn of(sigma: f64) -> Self {
        if sigma > 1e-12 {
            SigmaSign::Positive
        } else if sigma < -1e-12 {
            SigmaSign::Negative
        } else {
            SigmaSign::Zero
        }
    }
}

/// `ε(h, dt) = residual_factor · gauss_residual_max(t=0) + dt_factor · dt0`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeTolerance {
    pub residual_factor: f64,
    pub dt_factor: f64,
}

impl Default for EnvelopeTolerance {
    fn default() -> Self {
        Self {
            residual_factor: 5.0,
            dt_factor: 10.0,
        }
    }
}

impl EnvelopeTolerance {
    pub fn epsilon(&self, gauss_residual0: f64, dt0: f64) -> f64 {
        self.residual_factor * gauss_residual0 + self.dt_factor * dt0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseVerdict {
    pub clause: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub sigma_sign: SigmaSign,
    /// `sup_t t·max‖H‖²`
    pub sup_t_max_norm_h2: f64,
    /// `sup_t t·max‖A‖²`
    pub sup_t_max_norm_a2: f64,
    /// Time at which `t·max‖A‖²` is largest.
    pub argsup_t_max_norm_a2: f64,
    /// `sup_t t·∫‖A‖² dΩ_g`
    pub sup_t_int_norm_a2_g: f64,
    /// `sup_t t·∫‖A‖² dΩ_M`
    pub sup_t_int_norm_a2_m: f64,
    pub sup_max_norm_a2: f64,
    pub envelope_min_margin: Option<f64>,
    pub envelope_epsilon: Option<f64>,
    pub area_identity_max_error: Option<f64>,
    pub verdicts: Vec<ClauseVerdict>,
    pub pass: bool,
}

/// Whether `s` is non-increasing over records with `t ≥ t_end/2`, allowing
/// each value to exceed the running minimum by 10%.
pub fn trend_ok(times: &[f64], s: &[f64]) -> bool {
    if s.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let Some(&t_end) = times.last() else {
        return true;
    };
    let mut running = f64::INFINITY;
    for (t, v) in times.iter().zip(s) {
        if *t < 0.5 * t_end {
            continue;
        }
        if *v > 1.1 * running + 1e-12 {
            return false;
        }
        running = running.min(*v);
    }
    true
}

fn sup_with_arg(times: &[f64], s: &[f64]) -> (f64, f64) {
    times
        .iter()
        .zip(s)
        .fold((0.0, 0.0), |(m, at), (t, v)| if *v > m { (*v, *t) } else { (m, at) })
}

/// Largest relative error of the area identity `dA/dt = −∫‖H‖² dΩ_g`,
/// skipping the first and last records.
pub fn area_identity_error(records: &[DiagnosticsRecord]) -> Option<f64> {
    if records.len() < 3 {
        return None;
    }
    let inner = &records[1..records.len() - 1];
    Some(
        inner
            .iter()
            .map(|r| (r.darea_dt_est + r.int_norm_h2_gt).abs() / r.int_norm_h2_gt.max(1.0))
            .fold(0.0, f64::max),
    )
}

pub fn check_decay(traj: &Trajectory, sigma_sign: SigmaSign) -> DecayReport {
    check_decay_with(traj, sigma_sign, &EnvelopeTolerance::default())
}

pub fn check_decay_with(traj: &Trajectory, sigma_sign: SigmaSign, tol: &EnvelopeTolerance) -> DecayReport {
    let recs = &traj.records;
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let weighted = |f: &dyn Fn(&DiagnosticsRecord) -> f64| -> Vec<f64> { recs.iter().map(|r| r.t * f(r)).collect() };
    let th = weighted(&|r| r.max_norm_h2);
    let ta = weighted(&|r| r.max_norm_a2);
    let tig = weighted(&|r| r.int_norm_a2_gt);
    let tim = weighted(&|r| r.int_norm_a2_gm);
    let (sup_a, arg_a) = sup_with_arg(&times, &ta);
    let sup_max_a = recs.iter().map(|r| r.max_norm_a2).fold(0.0, f64::max);

    let mut verdicts = Vec::new();
    let mut push = |clause: &str, pass: bool| {
        verdicts.push(ClauseVerdict {
            clause: clause.to_string(),
            pass,
        })
    };
    push("t_max_norm_h2_decay", trend_ok(&times, &th));
    match sigma_sign {
        SigmaSign::Positive => push("t_max_norm_a2_decay", trend_ok(&times, &ta)),
        SigmaSign::Zero => {
            push("max_norm_a2_bounded", sup_max_a.is_finite());
            push("t_int_norm_a2_g_decay", trend_ok(&times, &tig));
            push("t_int_norm_a2_m_decay", trend_ok(&times, &tim));
        }
        SigmaSign::Negative => push("max_norm_a2_bounded", sup_max_a.is_finite()),
    }

    let margin = if traj.envelope.is_some() {
        recs.iter().map(|r| r.envelope_margin).reduce(f64::min)
    } else {
        None
    };
    let eps = traj
        .envelope
        .and(recs.first())
        .map(|r0| tol.epsilon(r0.gauss_residual_max, traj.dt0));
    if let (Some(m), Some(e)) = (margin, eps) {
        push("rho_envelope", m >= -e);
    }
    let pass = verdicts.iter().all(|v| v.pass);
    DecayReport {
        sigma_sign,
        sup_t_max_norm_h2: th.iter().cloned().fold(0.0, f64::max),
        sup_t_max_norm_a2: sup_a,
        argsup_t_max_norm_a2: arg_a,
        sup_t_int_norm_a2_g: tig.iter().cloned().fold(0.0, f64::max),
        sup_t_int_norm_a2_m: tim.iter().cloned().fold(0.0, f64::max),
        sup_max_norm_a2: sup_max_a,
        envelope_min_margin: margin,
        envelope_epsilon: eps,
        area_identity_max_error: area_identity_error(recs),
        verdicts,
        pass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitClass {
    ConstantMap,
    TotallyGeodesic,
    Minimal,
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolPack {
    pub tol_diam: f64,
    pub tol_a: f64,
    pub tol_h: f64,
}

impl TolPack {
    pub const DEFAULT_DIAM: f64 = 1e-2;

    /// Tolerances tied to a run: `tol_A = max(10·gauss_residual_max(0), 1e-10)`,
    /// `tol_H = h_tol²`.
    pub fn for_run(gauss_residual0: f64, h_tol: f64) -> Self {
        Self {
            tol_diam: Self::DEFAULT_DIAM,
            tol_a: (10.0 * gauss_residual0).max(1e-10),
            tol_h: h_tol * h_tol,
        }
    }
}

pub fn classify_limit(final_state: &MapState, tol: &TolPack) -> Result<LimitClass> {
    if final_state.image_diameter() <= tol.tol_diam {
        return Ok(LimitClass::ConstantMap);
    }
    let f = extrinsic_field(final_state)?;
    Ok(if f.max_norm_a2 <= tol.tol_a {
        LimitClass::TotallyGeodesic
    } else if f.max_norm_h2 <= tol.tol_h {
        LimitClass::Minimal
    } else {
        LimitClass::NotConverged
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn fit_examples() {
        assert_abs_diff_eq!(fit_c0(0.5f64.sqrt(), 0.0).unwrap().c0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit_c0(0.6, 1.0).unwrap().c0, 0.75, epsilon = 1e-14);
        assert!(matches!(fit_c0(0.0, 1.0), Err(Error::NotStrictlyDecreasing { .. })));
        assert!(matches!(fit_c0(-0.2, 0.0), Err(Error::NotStrictlyDecreasing { .. })));
        let mut last = 0.0;
        for r in [0.9, 0.99, 0.999, 0.9999] {
            let c = fit_c0(r, 0.0).unwrap().c0;
            assert!(c > last);
            last = c;
        }
    }

    #[test]
    fn envelope_examples() {
        let p = EnvelopeParams::new(0.0, 2.0).unwrap();
        for t in [0.0, 1.0, 50.0] {
            assert_abs_diff_eq!(envelope(t, &p), 2.0 / 5f64.sqrt(), epsilon = 1e-15);
        }
        let p = EnvelopeParams::new(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(envelope(0.0, &p), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(envelope(100.0, &p), 1.0, epsilon = 1e-15);
        let p = EnvelopeParams::new(-1.0, 1.0).unwrap();
        assert_eq!(p.variant, EnvelopeVariant::SigmaNeg);
        assert_abs_diff_eq!(envelope(1.0, &p), 0.1341126763661495, epsilon = 1e-15);
    }

    #[test]
    fn trend_rule() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        // saturating series t/(1+t) stays within the 10% slack
        let s: Vec<f64> = t.iter().map(|t| t / (1.0 + t)).collect();
        assert!(trend_ok(&t, &s));
        assert!(!trend_ok(&t, &t));
        let s: Vec<f64> = t.iter().map(|t| t * (-t).exp()).collect();
        assert!(trend_ok(&t, &s));
        let mut s2 = s.clone();
        s2[8] *= 1.05;
        assert!(trend_ok(&t, &s2));
        s2[9] = s2[8] * 1.5;
        assert!(!trend_ok(&t, &s2));
        assert!(!trend_ok(&t, &[f64::NAN; 11]));
    }

    proptest! {
        #[test]
        fn fit_inverts_envelope(rho in 1e-6f64..0.999_999, sigma in -3.0f64..3.0) {
            let p = fit_c0(rho, sigma).unwrap();
            prop_assert!((envelope(0.0, &p) - rho).abs() < 1e-12);
        }

        #[test]
        fn envelope_monotone_in_c0(c in 1e-3f64..1e3, dc in 1e-6f64..10.0, t in 0.0f64..5.0, sigma in -2.0f64..2.0) {
            let a = EnvelopeParams::new(sigma, c).unwrap();
            let b = EnvelopeParams::new(sigma, c + dc).unwrap();
            prop_assert!(envelope(t, &b) >= envelope(t, &a));
        }

        #[test]
        fn envelope_range_and_time_monotonicity(c in 1e-3f64..1e3, t in 0.0f64..5.0, dt in 0.0f64..1.0, sigma in 0.0f64..2.0) {
            let p = EnvelopeParams::new(sigma, c).unwrap();
            let a = envelope(t, &p);
            prop_assert!(a > 0.0 && a <= 1.0);
            prop_assert!(envelope(t + dt, &p) >= a);
        }
    }
}
