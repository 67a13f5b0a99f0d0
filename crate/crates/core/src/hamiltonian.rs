//! Hamiltonian models `H(x, u, p)` that are strictly convex and superlinear
//! in `p` and uniformly Lipschitz in `u`, together with their Lagrangians
//! `L(x, u, v) = sup_p [p·v − H(x, u, p)]`.
//!
//! Two kinds are supported:
//! - the mechanical family `H = (a/2)·p² + β·u + V(x) − c`, with closed-form
//!   Lagrangian `L = v²/(2a) − β·u − V(x) + c` and `λ = |β|`;
//! - a custom convex Hamiltonian given as a closure, whose Lagrangian is
//!   computed numerically (grid scan followed by golden-section refinement).
//!
//! The additive shift `c` enters as `H_c = H − c` and `L_c = L + c`.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math::{self, TAU};

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianError {
    InvalidModel(&'static str),
    /// The maximizing momentum of the Legendre transform hit `±p_max`.
    TransformOverflow { x: f64, u: f64, v: f64, p_max: f64 },
    /// Operation only defined for the quadratic family.
    Unsupported(&'static str),
}

impl fmt::Display for HamiltonianError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HamiltonianError::InvalidModel(why) => write!(f, "invalid Hamiltonian model: {why}"),
            HamiltonianError::TransformOverflow { x, u, v, p_max } => write!(
                f,
                "Legendre transform window overflow at (x={x}, u={u}, v={v}); sup not attained in [-{p_max}, {p_max}]"
            ),
            HamiltonianError::Unsupported(what) => write!(f, "unsupported for this model: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for HamiltonianError {}

/// Potential `V(x)` on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `offset + amplitude · cos(2π · frequency · x)`.
    Cosine { offset: f64, amplitude: f64, frequency: f64 },
    /// Equally spaced samples over `[0, length)`, linearly interpolated.
    Table { values: Vec<f64>, length: f64 },
}

impl Potential {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(offset: f64) -> Self {
        Potential::Cosine { offset, amplitude: 0.0, frequency: 0.0 }
    }

    pub fn cosine(offset: f64, amplitude: f64, frequency: f64) -> Self {
        Potential::Cosine { offset, amplitude, frequency }
    }

    pub fn table(values: Vec<f64>, length: f64) -> Result<Self, HamiltonianError> {
        if values.is_empty() {
            return Err(HamiltonianError::InvalidModel("empty potential table"));
        }
        if !(length > 0.0) {
            return Err(HamiltonianError::InvalidModel("potential table length must be positive"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HamiltonianError::InvalidModel("non-finite potential table entry"));
        }
        Ok(Potential::Table { values, length })
    }

    fn table_cell(values: &[f64], length: f64, x: f64) -> (usize, usize, f64, f64) {
        let m = values.len();
        let h = length / m as f64;
        let xr = x - length * math::floor(x / length);
        let s = xr / h;
        let k = (math::floor(s) as usize).min(m - 1);
        let frac = s - k as f64;
        (k, (k + 1) % m, frac, h)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::Cosine { offset, amplitude, frequency } => {
                if *amplitude == 0.0 {
                    *offset
                } else {
                    offset + amplitude * math::cos(TAU * frequency * x)
                }
            }
            Potential::Table { values, length } => {
                let (k, k1, frac, _) = Self::table_cell(values, *length, x);
                values[k] + frac * (values[k1] - values[k])
            }
        }
    }

    /// `V'(x)`; piecewise constant for tables.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Potential::Cosine { amplitude, frequency, .. } => {
                if *amplitude == 0.0 {
                    0.0
                } else {
                    -amplitude * TAU * frequency * math::sin(TAU * frequency * x)
                }
            }
            Potential::Table { values, length } => {
                let (k, k1, _, h) = Self::table_cell(values, *length, x);
                (values[k1] - values[k]) / h
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Potential::Cosine { amplitude, frequency, .. } => *amplitude == 0.0 || *frequency == 0.0,
            Potential::Table { values, .. } => values.iter().all(|v| *v == values[0]),
        }
    }

    /// Maximum over `n_fine` equally spaced samples of `[0, length)`.
    pub fn max_sampled(&self, n_fine: usize, length: f64) -> f64 {
        let n = n_fine.max(1);
        (0..n)
            .map(|i| self.value(i as f64 * length / n as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// User-supplied convex Hamiltonian `H(x, u, p)` (without the shift).
#[derive(Clone)]
pub struct CustomConvex {
    h: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    p_max: f64,
}

impl fmt::Debug for CustomConvex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomConvex").field("p_max", &self.p_max).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Quadratic { kinetic: f64, coupling: f64, potential: Potential },
    Custom(CustomConvex),
}

/// Partial derivatives of `H` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub h_x: f64,
    pub h_u: f64,
    pub h_p: f64,
}

/// A Lagrangian evaluation `L(x, u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianSample {
    pub x: f64,
    pub u: f64,
    pub v: f64,
    pub value: f64,
}

const DEFAULT_P_MAX: f64 = 20.0;
const TRANSFORM_SCAN_POINTS: usize = 401;

fn fd_step(at: f64) -> f64 {
    1e-5 * math::abs(at).max(1.0)
}

#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    kind: ModelKind,
    shift: f64,
    lambda: f64,
}

impl HamiltonianModel {
    /// `H = (kinetic/2)·p² + coupling·u + V(x)`.
    pub fn quadratic(kinetic: f64, coupling: f64, potential: Potential) -> Result<Self, HamiltonianError> {
        if !(kinetic > 0.0) || !kinetic.is_finite() {
            return Err(HamiltonianError::InvalidModel("kinetic coefficient must be positive"));
        }
        if !coupling.is_finite() {
            return Err(HamiltonianError::InvalidModel("u coupling must be finite"));
        }
        Ok(Self {
            kind: ModelKind::Quadratic { kinetic, coupling, potential },
            shift: 0.0,
            lambda: math::abs(coupling),
        })
    }

    /// Custom Hamiltonian; the transform window defaults to `|p| ≤ 20`.
    pub fn custom<F>(h: F) -> Result<Self, HamiltonianError>
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::custom_with_window(h, DEFAULT_P_MAX)
    }

    pub fn custom_with_window<F>(h: F, p_max: f64) -> Result<Self, HamiltonianError>
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(p_max > 0.0) {
            return Err(HamiltonianError::InvalidModel("transform window must be positive"));
        }
        let custom = CustomConvex { h: Arc::new(h), p_max };
        let mut model = Self { kind: ModelKind::Custom(custom), shift: 0.0, lambda: 0.0 };
        model.lambda = model.sampled_u_lipschitz();
        Ok(model)
    }

    /// Same model with `H_c = H − c`.
    pub fn with_shift(&self, c: f64) -> Self {
        Self { shift: c, ..self.clone() }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Uniform Lipschitz constant `λ` of `H` (and `L`) in `u`.
    pub fn lipschitz_constant(&self) -> f64 {
        self.lambda
    }

    pub fn is_u_independent(&self) -> bool {
        self.lambda == 0.0
    }

    /// `∂H/∂u > 0` everywhere (strict contraction regime).
    pub fn is_strictly_increasing_in_u(&self) -> bool {
        match &self.kind {
            ModelKind::Quadratic { coupling, .. } => *coupling > 0.0,
            ModelKind::Custom(_) => {
                let xs = (0..16).map(|i| i as f64 / 16.0);
                let mut min_hu = f64::INFINITY;
                for x in xs {
                    for k in -4..=4 {
                        let p = k as f64 * 0.25 * self.p_window();
                        for u in [-2.0, 0.0, 2.0] {
                            min_hu = min_hu.min(self.gradient(x, u, p).h_u);
                        }
                    }
                }
                min_hu > 0.0
            }
        }
    }

    fn p_window(&self) -> f64 {
        match &self.kind {
            ModelKind::Quadratic { .. } => DEFAULT_P_MAX,
            ModelKind::Custom(c) => c.p_max,
        }
    }

    fn unshifted(&self, x: f64, u: f64, p: f64) -> f64 {
        match &self.kind {
            ModelKind::Quadratic { kinetic, coupling, potential } => {
                0.5 * kinetic * p * p + coupling * u + potential.value(x)
            }
            ModelKind::Custom(c) => (c.h)(x, u, p),
        }
    }

    /// `H(x, u, p) − c`.
    pub fn hamiltonian(&self, x: f64, u: f64, p: f64) -> f64 {
        self.unshifted(x, u, p) - self.shift
    }

    /// `L(x, u, v) + c`.
    pub fn lagrangian(&self, x: f64, u: f64, v: f64) -> Result<f64, HamiltonianError> {
        match &self.kind {
            ModelKind::Quadratic { kinetic, coupling, potential } => {
                Ok(v * v / (2.0 * kinetic) - coupling * u - potential.value(x) + self.shift)
            }
            ModelKind::Custom(c) => {
                let (_, sup) = self.legendre_sup(c, x, u, v)?;
                Ok(sup + self.shift)
            }
        }
    }

    pub fn lagrangian_sample(&self, x: f64, u: f64, v: f64) -> Result<LagrangianSample, HamiltonianError> {
        Ok(LagrangianSample { x, u, v, value: self.lagrangian(x, u, v)? })
    }

    /// Maximizer and value of `p ↦ p·v − H(x, u, p)` on `[-p_max, p_max]`.
    fn legendre_sup(&self, c: &CustomConvex, x: f64, u: f64, v: f64) -> Result<(f64, f64), HamiltonianError> {
        let g = |p: f64| p * v - (c.h)(x, u, p);
        let m = TRANSFORM_SCAN_POINTS;
        let step = 2.0 * c.p_max / (m - 1) as f64;
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..m {
            let val = g(-c.p_max + i as f64 * step);
            if val > best_val {
                best_val = val;
                best = i;
            }
        }
        if best == 0 || best == m - 1 {
            return Err(HamiltonianError::TransformOverflow { x, u, v, p_max: c.p_max });
        }
        // golden-section on the bracketing cells
        let inv_phi = 0.5 * (math::sqrt(5.0) - 1.0);
        let mut a = -c.p_max + (best - 1) as f64 * step;
        let mut b = -c.p_max + (best + 1) as f64 * step;
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = g(x1);
        let mut f2 = g(x2);
        for _ in 0..80 {
            if b - a <= 1e-13 * (1.0 + math::abs(a)) {
                break;
            }
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = g(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = g(x1);
            }
        }
        let p = 0.5 * (a + b);
        let val = g(p).max(best_val);
        Ok((p, val))
    }

    /// `(H_x, H_u, H_p)`: closed form for the quadratic family, central
    /// differences otherwise.
    pub fn gradient(&self, x: f64, u: f64, p: f64) -> Gradient {
        match &self.kind {
            ModelKind::Quadratic { kinetic, coupling, potential } => Gradient {
                h_x: potential.derivative(x),
                h_u: *coupling,
                h_p: kinetic * p,
            },
            ModelKind::Custom(c) => {
                let h = &c.h;
                let (sx, su, sp) = (fd_step(x), fd_step(u), fd_step(p));
                Gradient {
                    h_x: (h(x + sx, u, p) - h(x - sx, u, p)) / (2.0 * sx),
                    h_u: (h(x, u + su, p) - h(x, u - su, p)) / (2.0 * su),
                    h_p: (h(x, u, p + sp) - h(x, u, p - sp)) / (2.0 * sp),
                }
            }
        }
    }

    fn sampled_u_lipschitz(&self) -> f64 {
        let pw = self.p_window();
        let mut sup = 0.0f64;
        for i in 0..16 {
            let x = i as f64 / 16.0;
            for k in -10..=10 {
                let p = k as f64 * 0.1 * pw;
                for u in [-2.0, -1.0, 0.0, 1.0, 2.0] {
                    sup = sup.max(math::abs(self.gradient(x, u, p).h_u));
                }
            }
        }
        sup
    }

    /// Coefficients `(factor, offset)` with `value + dt·L(x, value, v) =
    /// factor·value + offset`, available when `L` is affine in `u`.
    pub(crate) fn affine_increment(&self, x: f64, v: f64, dt: f64) -> Option<(f64, f64)> {
        match &self.kind {
            ModelKind::Quadratic { kinetic, coupling, potential } => {
                let factor = 1.0 - dt * coupling;
                let offset = dt * (v * v / (2.0 * kinetic) - potential.value(x) + self.shift);
                Some((factor, offset))
            }
            ModelKind::Custom(_) => None,
        }
    }

    /// One explicit action increment `value + dt·L(x, value, v)`. For the
    /// quadratic family this is evaluated as `factor·value + offset`, which is
    /// monotone in `value` under rounding when `β·dt < 1`.
    pub fn advance(&self, x: f64, value: f64, v: f64, dt: f64) -> Result<f64, HamiltonianError> {
        match self.affine_increment(x, v, dt) {
            Some((factor, offset)) => Ok(factor * value + offset),
            None => Ok(value + dt * self.lagrangian(x, value, v)?),
        }
    }

    /// `value + dt·L(x, u_arg, v)` with the `u` slot frozen at `u_arg`.
    pub fn advance_frozen(&self, x: f64, value: f64, u_arg: f64, v: f64, dt: f64) -> Result<f64, HamiltonianError> {
        Ok(value + dt * self.lagrangian(x, u_arg, v)?)
    }
}
