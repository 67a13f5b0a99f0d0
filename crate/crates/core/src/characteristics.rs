//! Contact characteristics
//!
//! ```text
//! ẋ = H_p,   u̇ = p·H_p − H,   ṗ = −H_x − H_u·p
//! ```
//!
//! integrated with classical RK4 on the universal cover (lifted `x`), and a
//! shooting method over initial momenta that collects every characteristic
//! from `(x0, u0)` reaching a target point, for windings `|m| ≤ max_winding`.
//! The minimal `U(t)` over the hits is an independent estimate of the
//! fundamental solution, and minimizing also over source nodes gives `T_t φ`.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::hamiltonian::HamiltonianModel;
use crate::math;
use crate::par;
use crate::propagator::ValueField;

/// Trajectories with `|x|`, `|u|` or `|p|` above this are truncated.
pub const OVERFLOW_GUARD: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
pub enum CharacteristicsError {
    InvalidArgument(&'static str),
    /// No characteristic from any source reached the target.
    NoCharacteristic { target: f64 },
}

impl fmt::Display for CharacteristicsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CharacteristicsError::InvalidArgument(why) => write!(f, "invalid argument: {why}"),
            CharacteristicsError::NoCharacteristic { target } => {
                write!(f, "no characteristic reaches x = {target}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CharacteristicsError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicState {
    /// Lifted position.
    pub x: f64,
    pub u: f64,
    pub p: f64,
}

impl CharacteristicState {
    pub fn new(x: f64, u: f64, p: f64) -> Self {
        Self { x, u, p }
    }

    fn axpy(self, h: f64, d: CharacteristicState) -> Self {
        Self { x: self.x + h * d.x, u: self.u + h * d.u, p: self.p + h * d.p }
    }

    fn overflowed(&self) -> bool {
        !(math::abs(self.x) <= OVERFLOW_GUARD
            && math::abs(self.u) <= OVERFLOW_GUARD
            && math::abs(self.p) <= OVERFLOW_GUARD)
    }
}

/// Right-hand side `(ẋ, u̇, ṗ)` of the characteristic system.
pub fn ode_rhs(model: &HamiltonianModel, s: CharacteristicState) -> CharacteristicState {
    let g = model.gradient(s.x, s.u, s.p);
    let h = model.hamiltonian(s.x, s.u, s.p);
    CharacteristicState { x: g.h_p, u: s.p * g.h_p - h, p: -g.h_x - g.h_u * s.p }
}

fn rk4_step(model: &HamiltonianModel, s: CharacteristicState, h: f64) -> CharacteristicState {
    let k1 = ode_rhs(model, s);
    let k2 = ode_rhs(model, s.axpy(0.5 * h, k1));
    let k3 = ode_rhs(model, s.axpy(0.5 * h, k2));
    let k4 = ode_rhs(model, s.axpy(h, k3));
    CharacteristicState {
        x: s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        u: s.u + h / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
        p: s.p + h / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<CharacteristicState>,
    /// Stopped early at the overflow guard.
    pub truncated: bool,
}

impl Trajectory {
    pub fn last(&self) -> CharacteristicState {
        *self.states.last().expect("trajectory has an initial state")
    }
}

/// RK4 trajectory of `n_steps + 1` states over `[0, t]`.
pub fn integrate(
    model: &HamiltonianModel,
    initial: CharacteristicState,
    t: f64,
    n_steps: usize,
) -> Result<Trajectory, CharacteristicsError> {
    if !(t >= 0.0) || n_steps == 0 {
        return Err(CharacteristicsError::InvalidArgument("need t >= 0 and n_steps >= 1"));
    }
    let dt = t / n_steps as f64;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(initial);
    let mut s = initial;
    for _ in 0..n_steps {
        s = rk4_step(model, s, dt);
        if s.overflowed() {
            return Ok(Trajectory { dt, states, truncated: true });
        }
        states.push(s);
    }
    Ok(Trajectory { dt, states, truncated: false })
}

/// Final state only; `None` when the guard trips.
fn flow(model: &HamiltonianModel, initial: CharacteristicState, t: f64, n_steps: usize) -> Option<CharacteristicState> {
    let dt = t / n_steps as f64;
    let mut s = initial;
    for _ in 0..n_steps {
        s = rk4_step(model, s, dt);
        if s.overflowed() {
            return None;
        }
    }
    Some(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootParams {
    /// Initial momenta sampled uniformly in `[-p_max, p_max]`.
    pub p_max: f64,
    pub n_samples: usize,
    pub refine_iters: usize,
    /// Largest accepted `|X(t) − target|` in lifted coordinates.
    pub eps_hit: f64,
    pub max_winding: i32,
    /// Largest RK4 step.
    pub ode_dt: f64,
}

impl Default for ShootParams {
    fn default() -> Self {
        Self { p_max: 10.0, n_samples: 512, refine_iters: 60, eps_hit: 1e-10, max_winding: 3, ode_dt: 1e-2 }
    }
}

impl ShootParams {
    fn validate(&self) -> Result<(), CharacteristicsError> {
        if self.n_samples < 64 {
            return Err(CharacteristicsError::InvalidArgument("n_samples must be at least 64"));
        }
        if !(self.p_max > 0.0) || !(self.ode_dt > 0.0) || !(self.eps_hit > 0.0) || self.max_winding < 0 {
            return Err(CharacteristicsError::InvalidArgument("shoot parameters must be positive"));
        }
        Ok(())
    }

    fn ode_steps(&self, t: f64) -> usize {
        (math::ceil(t / self.ode_dt - 1e-9) as usize).max(1)
    }

    fn momentum(&self, i: usize) -> f64 {
        -self.p_max + 2.0 * self.p_max * i as f64 / (self.n_samples - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub p0: f64,
    pub winding: i32,
    pub final_state: CharacteristicState,
    pub hit_error: f64,
}

struct Sampled {
    finals: Vec<Option<CharacteristicState>>,
}

fn sample(model: &HamiltonianModel, x0: f64, u0: f64, t: f64, params: &ShootParams) -> Sampled {
    let steps = params.ode_steps(t);
    let finals = (0..params.n_samples)
        .map(|i| flow(model, CharacteristicState::new(x0, u0, params.momentum(i)), t, steps))
        .collect();
    Sampled { finals }
}

fn hits_from_samples(
    model: &HamiltonianModel,
    sampled: &Sampled,
    length: f64,
    x0: f64,
    u0: f64,
    target: f64,
    t: f64,
    params: &ShootParams,
) -> Vec<ShootResult> {
    let steps = params.ode_steps(t);
    let eval = |p: f64| flow(model, CharacteristicState::new(x0, u0, p), t, steps);
    let mut hits = Vec::new();
    for m in -params.max_winding..=params.max_winding {
        let goal = target + m as f64 * length;
        for i in 0..params.n_samples {
            let Some(si) = sampled.finals[i] else { continue };
            let fi = si.x - goal;
            if fi == 0.0 {
                hits.push(ShootResult { p0: params.momentum(i), winding: m, final_state: si, hit_error: 0.0 });
                continue;
            }
            if i + 1 == params.n_samples {
                continue;
            }
            let Some(sj) = sampled.finals[i + 1] else { continue };
            let fj = sj.x - goal;
            if fi * fj >= 0.0 {
                continue;
            }
            // bisection on the bracket [p_i, p_{i+1}]
            let (mut a, mut b) = (params.momentum(i), params.momentum(i + 1));
            let (mut fa, mut sa, mut fb, mut sb) = (fi, si, fj, sj);
            let mut lost = false;
            for _ in 0..params.refine_iters {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let Some(sm) = eval(mid) else {
                    lost = true;
                    break;
                };
                let fm = sm.x - goal;
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    fa = 0.0;
                    fb = 0.0;
                    sa = sm;
                    sb = sm;
                    break;
                }
                if (fm < 0.0) == (fa < 0.0) {
                    a = mid;
                    fa = fm;
                    sa = sm;
                } else {
                    b = mid;
                    fb = fm;
                    sb = sm;
                }
            }
            if lost {
                continue;
            }
            let (p, s, err) = if math::abs(fa) <= math::abs(fb) { (a, sa, math::abs(fa)) } else { (b, sb, math::abs(fb)) };
            if err <= params.eps_hit {
                hits.push(ShootResult { p0: p, winding: m, final_state: s, hit_error: err });
            }
        }
    }
    sort_hits(&mut hits);
    hits
}

fn sort_hits(hits: &mut [ShootResult]) {
    hits.sort_by(|a, b| {
        a.final_state
            .u
            .total_cmp(&b.final_state.u)
            .then(a.p0.total_cmp(&b.p0))
            .then(a.winding.cmp(&b.winding))
    });
}

/// Characteristics from `(x0, u0)` with `X(t) ≡ target (mod length)`,
/// sorted by `U(t)`.
pub fn shoot(
    model: &HamiltonianModel,
    length: f64,
    x0: f64,
    u0: f64,
    target: f64,
    t: f64,
    params: &ShootParams,
) -> Result<Vec<ShootResult>, CharacteristicsError> {
    params.validate()?;
    if !(t > 0.0) || !(length > 0.0) {
        return Err(CharacteristicsError::InvalidArgument("need t > 0 and length > 0"));
    }
    let sampled = sample(model, x0, u0, t, params);
    Ok(hits_from_samples(model, &sampled, length, x0, u0, target, t, params))
}

/// `min_y min { U(t) : characteristic from (y, φ(y)) hits x }` for several
/// targets at once; sources are the grid nodes of `phi`.
pub fn min_over_characteristics_many(
    model: &HamiltonianModel,
    phi: &ValueField,
    targets: &[f64],
    t: f64,
    params: &ShootParams,
) -> Result<Vec<f64>, CharacteristicsError> {
    params.validate()?;
    if !(t > 0.0) {
        return Err(CharacteristicsError::InvalidArgument("need t > 0"));
    }
    let grid = phi.grid;
    let length = grid.length();
    let per_source = par::map_indices(grid.len(), |y| {
        let x0 = grid.node(y);
        let u0 = phi.values[y];
        let sampled = sample(model, x0, u0, t, params);
        targets
            .iter()
            .map(|&target| {
                hits_from_samples(model, &sampled, length, x0, u0, grid.wrap(target), t, params)
                    .first()
                    .map(|h| h.final_state.u)
            })
            .collect::<Vec<_>>()
    });
    targets
        .iter()
        .enumerate()
        .map(|(k, &target)| {
            per_source
                .iter()
                .filter_map(|row| row[k])
                .reduce(f64::min)
                .ok_or(CharacteristicsError::NoCharacteristic { target })
        })
        .collect()
}

pub fn min_over_characteristics(
    model: &HamiltonianModel,
    phi: &ValueField,
    target: f64,
    t: f64,
    params: &ShootParams,
) -> Result<f64, CharacteristicsError> {
    Ok(min_over_characteristics_many(model, phi, &[target], t, params)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PeriodicGrid;
    use crate::hamiltonian::Potential;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::LN_2;

    fn quad(beta: f64) -> HamiltonianModel {
        HamiltonianModel::quadratic(1.0, beta, Potential::zero()).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let d = ode_rhs(&quad(-1.0), CharacteristicState::new(0.4, 0.0, 1.0));
        assert_eq!((d.x, d.u, d.p), (1.0, 0.5, 1.0));
        let d = ode_rhs(&quad(1.0), CharacteristicState::new(0.4, 0.0, 1.0));
        assert_eq!((d.x, d.u, d.p), (1.0, 0.5, -1.0));
        let d = ode_rhs(&quad(0.0), CharacteristicState::new(0.1, 7.0, 3.0));
        assert_eq!((d.u, d.p), (4.5, 0.0));
    }

    /// Closed forms: for `H = ½p² + βu` from `(0, 0, 1)`,
    /// `p = e^{−βt}`, `x = (1 − e^{−βt})/β`, `u = (e^{−βt} − e^{−2βt})/(2β)`.
    fn closed(beta: f64, t: f64) -> CharacteristicState {
        let e = libm::exp(-beta * t);
        CharacteristicState::new((1.0 - e) / beta, (e - e * e) / (2.0 * beta), e)
    }

    #[test]
    fn integrate_matches_closed_forms() {
        let tr = integrate(&quad(-1.0), CharacteristicState::new(0.0, 0.0, 1.0), LN_2, 200).unwrap();
        let s = tr.last();
        assert_abs_diff_eq!(s.x, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.u, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.p, 2.0, epsilon = 1e-8);
        assert_eq!(tr.states.len(), 201);

        let s = integrate(&quad(1.0), CharacteristicState::new(0.0, 0.0, 1.0), LN_2, 200).unwrap().last();
        assert_abs_diff_eq!(s.x, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(s.u, 0.125, epsilon = 1e-8);
        assert_abs_diff_eq!(s.p, 0.5, epsilon = 1e-8);

        let s = integrate(&quad(0.0), CharacteristicState::new(0.0, 0.0, 0.0), 3.0, 10).unwrap().last();
        assert_eq!((s.x, s.u, s.p), (0.0, 0.0, 0.0));
    }

    #[test]
    fn integrator_is_fourth_order() {
        for beta in [-1.0, 1.0] {
            let exact = closed(beta, 1.0);
            let err = |n| {
                let s = integrate(&quad(beta), CharacteristicState::new(0.0, 0.0, 1.0), 1.0, n).unwrap().last();
                (s.x - exact.x).abs().max((s.u - exact.u).abs()).max((s.p - exact.p).abs())
            };
            let ratio = err(10) / err(20);
            assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn divergent_flow_is_truncated() {
        let tr = integrate(&quad(-1.0), CharacteristicState::new(0.0, 0.0, 5.0), 30.0, 3000).unwrap();
        assert!(tr.truncated);
        assert!(tr.states.len() < 3001);
    }

    #[test]
    fn shoot_free_particle() {
        let hits = shoot(&quad(0.0), 1.0, 0.0, 0.0, 0.0, 1.0, &ShootParams::default()).unwrap();
        assert!(hits.len() >= 3);
        assert!(hits[0].p0.abs() < 1e-9);
        assert!(hits[0].final_state.u.abs() < 1e-12);
        let one_wind: Vec<_> = hits.iter().filter(|h| h.winding.abs() == 1).collect();
        assert_eq!(one_wind.len(), 2);
        for h in one_wind {
            assert_abs_diff_eq!(h.p0.abs(), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(h.final_state.u, 0.5, epsilon = 1e-9);
        }
        assert!(hits.windows(2).all(|w| w[0].final_state.u <= w[1].final_state.u));
        assert!(hits.iter().all(|h| h.hit_error <= 1e-10));
    }

    #[test]
    fn shoot_is_deterministic() {
        let m = HamiltonianModel::quadratic(1.0, -1.0, Potential::cosine(0.0, 0.2, 1.0)).unwrap();
        let a = shoot(&m, 1.0, 0.1, 0.3, 0.6, 0.7, &ShootParams::default()).unwrap();
        let b = shoot(&m, 1.0, 0.1, 0.3, 0.6, 0.7, &ShootParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shoot_pinned_growth() {
        let hits = shoot(&quad(-1.0), 1.0, 0.0, 1.0, 0.0, 0.5, &ShootParams::default()).unwrap();
        assert_abs_diff_eq!(hits[0].final_state.u, libm::exp(0.5), epsilon = 1e-3);
    }

    #[test]
    fn shoot_rejects_coarse_sampling() {
        let params = ShootParams { n_samples: 10, ..ShootParams::default() };
        assert!(shoot(&quad(0.0), 1.0, 0.0, 0.0, 0.0, 1.0, &params).is_err());
    }

    #[test]
    fn min_over_characteristics_examples() {
        let g = PeriodicGrid::unit(16).unwrap();
        let params = ShootParams { n_samples: 128, ..ShootParams::default() };
        let zero = ValueField::constant(g, 0.0);
        let v = min_over_characteristics_many(&quad(0.0), &zero, &[0.0, 0.3125, 0.75], 0.5, &params).unwrap();
        for x in v {
            assert!(x.abs() < 1e-9);
        }
        let one = ValueField::constant(g, 1.0);
        let v = min_over_characteristics(&quad(1.0), &one, 0.25, LN_2, &params).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-3);
    }

    #[test]
    fn momentum_conserved_for_free_particle() {
        let tr = integrate(&quad(0.0), CharacteristicState::new(0.2, -1.0, 1.7), 2.0, 50).unwrap();
        for w in tr.states.windows(2) {
            assert_eq!(w[0].p, w[1].p);
            assert!(w[1].u >= w[0].u);
        }
    }
}
