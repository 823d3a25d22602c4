//! Dissipation laws relating signed edge flow to potential drop.
//!
//! Every edge carries a strictly increasing law `f` where `f(phi)` is the
//! potential drop `pi_i - pi_j` caused by the flow `phi` from `i` to `j`.
//! Strict monotonicity makes `f` invertible and makes the primitive of
//! `f^-1` convex, which is what the energy minimization in [`crate::solver`]
//! rests on.
//!
//! The shipped concrete law is [`GasPipe`]: in the common quadratic pipe
//! model the squared pressures at the two ends of a pipe of length `L` and
//! friction coefficient `alpha` differ by `(L*alpha/2) * phi*|phi|`, so with
//! the potential taken to be the squared pressure the drop is
//!
//! ```text
//! f(phi) = c * phi * |phi| - b,      c = L * alpha / 2 > 0
//! ```
//!
//! where `b` is an additive boost contributed by a compressor mounted on the
//! edge (zero for a passive pipe). `b` enters on the canonical orientation;
//! the reversed view `-f(-x)` carries `+b`, matching a directional machine.
//!
//! Invariants kept by every implementation:
//!
//! * `f` strictly increasing, so `f(f^-1(y)) = y` and `f^-1(f(x)) = x`;
//! * the primitive is convex with derivative `f^-1`;
//! * the reversed law is `-f(-x)` ([`Reversed`] wraps any law that way).

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Construction errors for the shipped laws.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("resistance must be finite and positive, got {0}")]
    NonPositiveResistance(f64),
    #[error("compression offset must be finite, got {0}")]
    NonFiniteOffset(f64),
    #[error("compressor box [{lo}, {hi}] is not a finite ordered interval")]
    BadCompressorBox { lo: f64, hi: f64 },
    #[error("compression offset {b} lies outside box [{lo}, {hi}]")]
    OffsetOutsideBox { b: f64, lo: f64, hi: f64 },
}

/// A strictly increasing flow-to-drop law on one edge.
///
/// `eval` is `f`, `inverse` is `f^-1`, `primitive` is a convex antiderivative
/// of `f^-1` (any additive normalization; the solver only uses differences),
/// and `inverse_derivative` is `d f^-1 / d delta`, which may be `+inf` at
/// isolated points (the solver clamps it).
///
/// Laws that host an adjustable compressor expose its box through
/// [`compression_box`](DissipationFunction::compression_box) and produce
/// re-tuned copies through
/// [`with_compression`](DissipationFunction::with_compression); passive laws
/// keep the default `None` implementations.
pub trait DissipationFunction: fmt::Debug + Send + Sync {
    /// Potential drop produced by the signed flow: `f(phi)`.
    fn eval(&self, flow: f64) -> f64;

    /// Signed flow that produces the given potential drop: `f^-1(delta)`.
    fn inverse(&self, delta: f64) -> f64;

    /// Convex primitive of `f^-1`, evaluated at the potential drop.
    fn primitive(&self, delta: f64) -> f64;

    /// Derivative of `f^-1`; `+inf` allowed at isolated points.
    fn inverse_derivative(&self, delta: f64) -> f64;

    /// Box of the adjustable compression offset, when the edge hosts one.
    fn compression_box(&self) -> Option<(f64, f64)> {
        None
    }

    /// Current compression offset (zero for passive laws).
    fn compression(&self) -> f64 {
        0.0
    }

    /// The same law with the compression offset moved to `b`. `None` when
    /// the law has no adjustable compressor. Box membership is not enforced
    /// here; operational layers validate against
    /// [`compression_box`](DissipationFunction::compression_box).
    fn with_compression(&self, b: f64) -> Option<Arc<dyn DissipationFunction>> {
        let _ = b;
        None
    }
}

/// Quadratic gas pipe law `f(phi) = c * phi * |phi| - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GasPipe {
    c: f64,
    b: f64,
    b_box: Option<(f64, f64)>,
}

impl GasPipe {
    /// Passive pipe with resistance `c` and no compression.
    pub fn new(c: f64) -> Result<Self, LawError> {
        Self::with_offset(c, 0.0)
    }

    /// Pipe with a fixed compression offset `b`.
    pub fn with_offset(c: f64, b: f64) -> Result<Self, LawError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(LawError::NonPositiveResistance(c));
        }
        if !b.is_finite() {
            return Err(LawError::NonFiniteOffset(b));
        }
        Ok(GasPipe { c, b, b_box: None })
    }

    /// Pipe with an adjustable compressor: offset `b` inside `[lo, hi]`.
    pub fn with_compressor(c: f64, b: f64, lo: f64, hi: f64) -> Result<Self, LawError> {
        let mut pipe = Self::with_offset(c, b)?;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(LawError::BadCompressorBox { lo, hi });
        }
        if b < lo || b > hi {
            return Err(LawError::OffsetOutsideBox { b, lo, hi });
        }
        pipe.b_box = Some((lo, hi));
        Ok(pipe)
    }

    /// Resistance from physical pipe data: `c = length * alpha / 2`.
    pub fn from_length(length: f64, alpha: f64) -> Result<Self, LawError> {
        Self::new(length * alpha / 2.0)
    }

    pub fn resistance(&self) -> f64 {
        self.c
    }

    pub fn offset(&self) -> f64 {
        self.b
    }
}

impl DissipationFunction for GasPipe {
    fn eval(&self, flow: f64) -> f64 {
        self.c * flow * flow.abs() - self.b
    }

    fn inverse(&self, delta: f64) -> f64 {
        let u = delta + self.b;
        u.signum() * (u.abs() / self.c).sqrt()
    }

    fn primitive(&self, delta: f64) -> f64 {
        // Antiderivative of sign(u) * sqrt(|u| / c) in u = delta + b,
        // normalized so the minimum (zero flow, delta = -b) sits at zero.
        let u = (delta + self.b).abs();
        2.0 / 3.0 * u * u.sqrt() / self.c.sqrt()
    }

    fn inverse_derivative(&self, delta: f64) -> f64 {
        let u = (delta + self.b).abs();
        if u == 0.0 {
            f64::INFINITY
        } else {
            0.5 / (self.c * u).sqrt()
        }
    }

    fn compression_box(&self) -> Option<(f64, f64)> {
        self.b_box
    }

    fn compression(&self) -> f64 {
        self.b
    }

    fn with_compression(&self, b: f64) -> Option<Arc<dyn DissipationFunction>> {
        self.b_box.map(|b_box| {
            Arc::new(GasPipe {
                c: self.c,
                b,
                b_box: Some(b_box),
            }) as Arc<dyn DissipationFunction>
        })
    }
}

/// Linear resistive law `f(phi) = r * phi` (electric-circuit analogy).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearResistor {
    r: f64,
}

impl LinearResistor {
    pub fn new(r: f64) -> Result<Self, LawError> {
        if !(r.is_finite() && r > 0.0) {
            return Err(LawError::NonPositiveResistance(r));
        }
        Ok(LinearResistor { r })
    }

    pub fn resistance(&self) -> f64 {
        self.r
    }
}

impl DissipationFunction for LinearResistor {
    fn eval(&self, flow: f64) -> f64 {
        self.r * flow
    }

    fn inverse(&self, delta: f64) -> f64 {
        delta / self.r
    }

    fn primitive(&self, delta: f64) -> f64 {
        delta * delta / (2.0 * self.r)
    }

    fn inverse_derivative(&self, _delta: f64) -> f64 {
        1.0 / self.r
    }
}

/// View of a law from the opposite edge orientation: `-f(-x)`.
///
/// Used when an edge is registered against the canonical orientation; the
/// wrapper keeps every derived quantity (inverse, primitive, compression
/// box) consistent with the flip.
#[derive(Debug, Clone)]
pub struct Reversed(pub Arc<dyn DissipationFunction>);

impl DissipationFunction for Reversed {
    fn eval(&self, flow: f64) -> f64 {
        -self.0.eval(-flow)
    }

    fn inverse(&self, delta: f64) -> f64 {
        -self.0.inverse(-delta)
    }

    fn primitive(&self, delta: f64) -> f64 {
        self.0.primitive(-delta)
    }

    fn inverse_derivative(&self, delta: f64) -> f64 {
        self.0.inverse_derivative(-delta)
    }

    fn compression_box(&self) -> Option<(f64, f64)> {
        self.0.compression_box().map(|(lo, hi)| (-hi, -lo))
    }

    fn compression(&self) -> f64 {
        -self.0.compression()
    }

    fn with_compression(&self, b: f64) -> Option<Arc<dyn DissipationFunction>> {
        self.0
            .with_compression(-b)
            .map(|inner| Arc::new(Reversed(inner)) as Arc<dyn DissipationFunction>)
    }
}
