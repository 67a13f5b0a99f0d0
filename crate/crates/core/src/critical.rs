//! Critical values: whether `T_t φ` for the shifted model `H − c` stays
//! bounded, drifts linearly, or blows up, and a bisection for the shift at
//! which the drift changes sign.
//!
//! The drift rate is the least-squares slope of the spatial mean of `T_t φ`
//! over the trailing half of the horizon. A run is `Bounded` when that slope,
//! the slopes of the spatial max and min, and the trailing sup-norm all stay
//! under their tolerances.

use alloc::vec::Vec;
use core::fmt;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::domain::TimeGrid;
use crate::hamiltonian::{HamiltonianError, HamiltonianModel, ModelKind};
use crate::math;
use crate::propagator::{is_live, PropagatorError, Propagator, Scheme, ValueField};

#[derive(Debug, Clone, PartialEq)]
pub enum CriticalError {
    Propagator(PropagatorError),
    Hamiltonian(HamiltonianError),
    HorizonTooShort { horizon: f64 },
    /// The end points do not bracket a sign change of the drift, or the sign
    /// change is a jump between two divergent regimes.
    NoBracket { lo: DriftReport, hi: DriftReport },
}

impl fmt::Display for CriticalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriticalError::Propagator(e) => e.fmt(f),
            CriticalError::Hamiltonian(e) => e.fmt(f),
            CriticalError::HorizonTooShort { horizon } => {
                write!(f, "drift classification needs horizon >= 20, got {horizon}")
            }
            CriticalError::NoBracket { lo, hi } => write!(
                f,
                "no bracket: c = {} is {:?} and c = {} is {:?}",
                lo.c, lo.classification, hi.c, hi.classification
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CriticalError {}

impl From<PropagatorError> for CriticalError {
    fn from(e: PropagatorError) -> Self {
        CriticalError::Propagator(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    DivergesUp,
    DivergesDown,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftParams {
    pub horizon: f64,
    pub dt: f64,
    pub drift_tol: f64,
    pub k_guard: f64,
    pub window_radius: usize,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self { horizon: 50.0, dt: 1e-2, drift_tol: 1e-3, k_guard: 1e6, window_radius: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub c: f64,
    pub classification: Classification,
    /// Slope of the spatial mean over the trailing half of the finite record.
    pub drift_rate: f64,
    /// Largest `|T_t φ|` over the trailing half.
    pub trailing_sup: f64,
    /// Time at which the sup-norm first exceeded `k_guard`.
    pub overflow_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueReport {
    pub entries: Vec<DriftReport>,
    pub c_star: Option<f64>,
}

impl CriticalValueReport {
    pub fn c_tested(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.c).collect()
    }
}

/// Least-squares slope of `ys` against `ts`.
fn slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    if ts.len() < 2 {
        return 0.0;
    }
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        num += (t - tm) * (y - ym);
        den += (t - tm) * (t - tm);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

struct SliceStats {
    t: f64,
    mean: f64,
    max: f64,
    min: f64,
    sup: f64,
}

fn slice_stats(t: f64, values: &[f64]) -> Option<SliceStats> {
    let live: Vec<f64> = values.iter().copied().filter(|v| is_live(*v)).collect();
    if live.len() != values.len() {
        return None;
    }
    let mean = live.iter().sum::<f64>() / live.len() as f64;
    let max = live.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = live.iter().copied().fold(f64::INFINITY, f64::min);
    Some(SliceStats { t, mean, max, min, sup: math::abs(max).max(math::abs(min)) })
}

/// Classifies the long-time behaviour of `T_t φ` for `model` as given (its
/// shift is the `c` being tested).
pub fn classify_drift(
    model: &HamiltonianModel,
    phi: &ValueField,
    params: &DriftParams,
) -> Result<DriftReport, CriticalError> {
    if !(params.horizon >= 20.0) {
        return Err(CriticalError::HorizonTooShort { horizon: params.horizon });
    }
    let tgrid = TimeGrid::with_horizon(params.horizon, params.dt).map_err(PropagatorError::from)?;
    let prop = Propagator::new(model, phi.grid, tgrid.dt(), Scheme::explicit(params.window_radius))?;
    // boundedness is only assessed after the reachability transient
    let transient = 10.0 * tgrid.dt();
    let mut record: Vec<SliceStats> = Vec::with_capacity(tgrid.steps() + 1);
    let mut overflow_time = None;
    prop.run(phi, tgrid.steps(), |k, values| {
        let t = tgrid.time(k);
        if t < transient {
            return ControlFlow::Continue(());
        }
        match slice_stats(t, values) {
            Some(s) if s.sup > params.k_guard || !s.sup.is_finite() => {
                overflow_time = Some(t);
                ControlFlow::Break(())
            }
            Some(s) => {
                record.push(s);
                ControlFlow::Continue(())
            }
            None => ControlFlow::Continue(()),
        }
    })?;

    let end = record.last().map(|s| s.t).unwrap_or(0.0);
    let start = 0.5 * end;
    let tail: Vec<&SliceStats> = record.iter().filter(|s| s.t >= start).collect();
    let ts: Vec<f64> = tail.iter().map(|s| s.t).collect();
    let series = |f: fn(&SliceStats) -> f64| -> Vec<f64> { tail.iter().map(|s| f(s)).collect() };
    let drift_rate = slope(&ts, &series(|s| s.mean));
    let max_rate = slope(&ts, &series(|s| s.max));
    let min_rate = slope(&ts, &series(|s| s.min));
    let trailing_sup = tail.iter().map(|s| s.sup).fold(0.0, f64::max);

    let classification = if overflow_time.is_some() {
        let last_mean = record.last().map(|s| s.mean).unwrap_or(0.0);
        if last_mean >= 0.0 {
            Classification::DivergesUp
        } else {
            Classification::DivergesDown
        }
    } else if math::abs(drift_rate) <= params.drift_tol
        && math::abs(max_rate) <= params.drift_tol
        && math::abs(min_rate) <= params.drift_tol
        && trailing_sup <= params.k_guard
    {
        Classification::Bounded
    } else {
        let dominant = if math::abs(drift_rate) > params.drift_tol {
            drift_rate
        } else if math::abs(max_rate) >= math::abs(min_rate) {
            max_rate
        } else {
            min_rate
        };
        if dominant > 0.0 {
            Classification::DivergesUp
        } else {
            Classification::DivergesDown
        }
    };
    Ok(DriftReport { c: model.shift(), classification, drift_rate, trailing_sup, overflow_time })
}

/// Classifies each shift in `cs`.
pub fn classify_shifts(
    model: &HamiltonianModel,
    phi: &ValueField,
    cs: &[f64],
    params: &DriftParams,
) -> Result<CriticalValueReport, CriticalError> {
    let entries = cs
        .iter()
        .map(|&c| classify_drift(&model.with_shift(c), phi, params))
        .collect::<Result<Vec<_>, _>>()?;
    let c_star = entries.iter().find(|e| e.classification == Classification::Bounded).map(|e| e.c);
    Ok(CriticalValueReport { entries, c_star })
}

/// Bisection on the drift sign over shifts in `[c_lo, c_hi]`.
///
/// Stops early at a bounded midpoint. A sign change across which the drift
/// rate jumps by more than `10·(width + drift_tol)` separates two divergent
/// regimes and is reported as [`CriticalError::NoBracket`].
pub fn critical_search(
    model: &HamiltonianModel,
    phi: &ValueField,
    c_lo: f64,
    c_hi: f64,
    params: &DriftParams,
    max_bisect: usize,
) -> Result<CriticalValueReport, CriticalError> {
    let classify = |c: f64| classify_drift(&model.with_shift(c), phi, params);
    let mut lo = classify(c_lo)?;
    let mut hi = classify(c_hi)?;
    let mut entries = alloc::vec![lo, hi];
    if lo.classification == hi.classification {
        return Err(CriticalError::NoBracket { lo, hi });
    }
    for end in [lo, hi] {
        if end.classification == Classification::Bounded {
            return Ok(CriticalValueReport { entries, c_star: Some(end.c) });
        }
    }
    for _ in 0..max_bisect {
        let mid = classify(0.5 * (lo.c + hi.c))?;
        entries.push(mid);
        if mid.classification == Classification::Bounded {
            return Ok(CriticalValueReport { entries, c_star: Some(mid.c) });
        }
        if mid.classification == lo.classification {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let width = math::abs(hi.c - lo.c);
    let jump = math::abs(hi.drift_rate - lo.drift_rate);
    if jump > 10.0 * (width + params.drift_tol) || lo.overflow_time.is_some() || hi.overflow_time.is_some() {
        return Err(CriticalError::NoBracket { lo, hi });
    }
    Ok(CriticalValueReport { entries, c_star: Some(0.5 * (lo.c + hi.c)) })
}

/// Mañé critical value of the frozen Lagrangian `L(x, a, v)` for the
/// quadratic family: `β·a + max V`, sampled on `n_fine` points.
pub fn mane_value_frozen(
    model: &HamiltonianModel,
    a: f64,
    n_fine: usize,
    length: f64,
) -> Result<f64, CriticalError> {
    match model.kind() {
        ModelKind::Quadratic { coupling, potential, .. } => {
            Ok(coupling * a + potential.max_sampled(n_fine, length))
        }
        ModelKind::Custom(_) => Err(CriticalError::Hamiltonian(HamiltonianError::Unsupported(
            "Mane critical value of a custom model",
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PeriodicGrid;
    use crate::hamiltonian::Potential;
    use approx::assert_abs_diff_eq;

    fn quad(beta: f64, v: Potential) -> HamiltonianModel {
        HamiltonianModel::quadratic(1.0, beta, v).unwrap()
    }

    fn small() -> (PeriodicGrid, DriftParams) {
        let g = PeriodicGrid::unit(40).unwrap();
        let params = DriftParams { horizon: 30.0, dt: 0.02, window_radius: 4, ..DriftParams::default() };
        (g, params)
    }

    #[test]
    fn slope_of_line() {
        let ts = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        assert_abs_diff_eq!(slope(&ts, &ys), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn growth_model_diverges_up() {
        let (g, p) = small();
        let r = classify_drift(&quad(-1.0, Potential::zero()), &ValueField::constant(g, 1.0), &p).unwrap();
        assert_eq!(r.classification, Classification::DivergesUp);
        assert!(r.overflow_time.is_some());
    }

    #[test]
    fn decay_model_is_bounded_near_c() {
        let (g, p) = small();
        let m = quad(1.0, Potential::zero()).with_shift(3.0);
        let r = classify_drift(&m, &ValueField::constant(g, 0.0), &p).unwrap();
        assert_eq!(r.classification, Classification::Bounded);
        assert_abs_diff_eq!(r.trailing_sup, 3.0, epsilon = 1e-3);
    }

    #[test]
    fn mechanical_model_drifts_at_unit_rate() {
        let (g, p) = small();
        let m = quad(0.0, Potential::cosine(0.0, 1.0, 1.0));
        let r = classify_drift(&m, &ValueField::constant(g, 0.0), &p).unwrap();
        assert_eq!(r.classification, Classification::DivergesDown);
        assert_abs_diff_eq!(r.drift_rate.abs(), 1.0, epsilon = 0.05);
        let r2 = classify_drift(&m.with_shift(0.4), &ValueField::constant(g, 0.0), &p).unwrap();
        assert_abs_diff_eq!(r2.drift_rate - r.drift_rate, 0.4, epsilon = 0.05);
    }

    #[test]
    fn short_horizon_rejected() {
        let (g, p) = small();
        let p = DriftParams { horizon: 5.0, ..p };
        let err = classify_drift(&quad(1.0, Potential::zero()), &ValueField::constant(g, 0.0), &p).unwrap_err();
        assert!(matches!(err, CriticalError::HorizonTooShort { .. }));
    }

    #[test]
    fn search_finds_mechanical_critical_value() {
        let (g, p) = small();
        let m = quad(0.0, Potential::cosine(0.0, 1.0, 1.0));
        let r = critical_search(&m, &ValueField::constant(g, 0.0), 0.0, 2.0, &p, 12).unwrap();
        assert_abs_diff_eq!(r.c_star.unwrap(), 1.0, epsilon = 0.05);
    }

    #[test]
    fn search_reports_no_bracket_for_bounded_and_divergent_families() {
        let (g, p) = small();
        let phi = ValueField::constant(g, 0.0);
        let err = critical_search(&quad(1.0, Potential::zero()), &phi, -1.0, 1.0, &p, 5).unwrap_err();
        assert!(matches!(err, CriticalError::NoBracket { lo, hi }
            if lo.classification == Classification::Bounded && hi.classification == Classification::Bounded));

        let wavy = ValueField::from_fn(g, |x| 0.1 * libm::cos(core::f64::consts::TAU * x));
        let err = critical_search(&quad(-1.0, Potential::zero()), &wavy, -2.0, 2.0, &p, 8).unwrap_err();
        assert!(matches!(err, CriticalError::NoBracket { .. }));
    }

    #[test]
    fn mane_values() {
        let m = quad(0.0, Potential::cosine(0.0, 1.0, 1.0));
        assert_abs_diff_eq!(mane_value_frozen(&m, 3.7, 1000, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        let m = quad(1.0, Potential::zero());
        assert_eq!(mane_value_frozen(&m, 2.0, 10, 1.0).unwrap(), 2.0);
        let m = quad(0.0, Potential::cosine(0.5, 1.0, 1.0));
        assert_abs_diff_eq!(mane_value_frozen(&m, 0.0, 1000, 1.0).unwrap(), 1.5, epsilon = 1e-12);
        let custom = HamiltonianModel::custom(|_, _, p| 0.5 * p * p).unwrap();
        assert!(mane_value_frozen(&custom, 0.0, 10, 1.0).is_err());
    }
}
