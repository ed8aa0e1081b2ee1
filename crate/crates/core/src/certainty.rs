//! Label-uncertainty calculus.
//!
//! A synthetic sample carries a hard label `y_hat` and an entailment certainty
//! `r`, the running estimate that its true label is 1. The label-correctness
//! penalty (`ldiv`) is the expected KL divergence between the assumed label
//! distribution `Bernoulli(y_hat)` and a Beta-distributed true conditional whose
//! mean is `r`. With hard labels the Bernoulli entropy term vanishes and the
//! expectation reduces to a digamma expression in the Beta parameters.
//!
//! Certainties propagate along augmentation edges as a two-state Markov chain:
//! the child keeps the parent's label with the link probability and flips it
//! otherwise (`update_certainty`).

use thiserror::Error;

use crate::scalar::Scalar;

/// Lower clamp for the certainty mass on the assigned label.
pub const LDIV_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("digamma argument must be positive and finite, got {0}")]
    Digamma(f64),
    #[error("certainty must lie strictly inside (0, 1), got {0}")]
    OpenCertainty(f64),
    #[error("{name} must lie in [0, 1], got {value}")]
    UnitInterval { name: &'static str, value: f64 },
    #[error("hard label must be 0 or 1, got {0}")]
    Label(u8),
}

/// Binary hard label of a synthetic sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HardLabel {
    NotEntailed = 0,
    Entailed = 1,
}

impl HardLabel {
    pub fn from_bit(bit: u8) -> Result<Self, DomainError> {
        match bit {
            0 => Ok(Self::NotEntailed),
            1 => Ok(Self::Entailed),
            other => Err(DomainError::Label(other)),
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::NotEntailed => Self::Entailed,
            Self::Entailed => Self::NotEntailed,
        }
    }

    /// Probability mass that certainty `r` places on this label.
    pub fn mass<T: Scalar>(self, r: T) -> T {
        match self {
            Self::Entailed => r,
            Self::NotEntailed => T::one() - r,
        }
    }
}

// B_{2k} / (2k) for k = 1..7.
const DIGAMMA_ASYMPTOTIC: [f64; 7] =
    [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0];

const DIGAMMA_SHIFT: f64 = 10.0;

/// Digamma function ψ(x) for positive arguments.
///
/// Shifts `x` up by whole steps until it reaches the asymptotic region, sums
/// the expansion there, then walks the recurrence ψ(x) = ψ(x+1) − 1/x back
/// down. The walk runs from the largest shifted argument to the smallest so
/// that arguments differing by an integer share every intermediate value.
pub fn digamma<T: Scalar>(x: T) -> Result<T, DomainError> {
    if !x.is_finite() || x <= T::zero() {
        return Err(DomainError::Digamma(x.to_f64().unwrap_or(f64::NAN)));
    }
    let one = T::one();
    let shift = T::lit(DIGAMMA_SHIFT);

    let mut steps = 0usize;
    let mut z = x;
    while z < shift {
        z = z + one;
        steps += 1;
    }

    let inv_sq = one / (z * z);
    let mut series = T::zero();
    let mut power = inv_sq;
    for &c in &DIGAMMA_ASYMPTOTIC {
        series = series + T::lit(c) * power;
        power = power * inv_sq;
    }
    let mut acc = z.ln() - T::lit(0.5) / z - series;

    for i in (0..steps).rev() {
        acc = acc - one / (x + T::from_usize(i).expect("small integer"));
    }
    Ok(acc)
}

/// Parameters of a Beta hyperprior over the true conditional `p(y = 1 | c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> BetaParams<T> {
    pub fn new(alpha: T, beta: T) -> Option<Self> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        (ok(alpha) && ok(beta)).then_some(Self { alpha, beta })
    }

    pub fn mean(&self) -> T {
        self.alpha / (self.alpha + self.beta)
    }

    /// Interior mode; `None` when α + β ≤ 2 (uniform or boundary-degenerate).
    pub fn mode(&self) -> Option<T> {
        let one = T::one();
        // Summing the shifted parameters keeps the boundary modes exact:
        // with β = 1 the denominator is exactly α − 1.
        let denom = (self.alpha - one) + (self.beta - one);
        (denom > T::zero()).then(|| (self.alpha - one) / denom)
    }
}

/// Beta hyperprior with mean `r` whose mode sits on a label.
///
/// When `r` puts at least half its mass on `y_hat` the mode is `y_hat`;
/// otherwise the mode mirrors to the opposite label, which keeps the
/// concentration `q` non-negative and the mean constraint intact.
pub fn solve_beta_params<T: Scalar>(r: T, y_hat: HardLabel) -> Result<BetaParams<T>, DomainError> {
    if !(r > T::zero() && r < T::one()) {
        return Err(DomainError::OpenCertainty(r.to_f64().unwrap_or(f64::NAN)));
    }
    let half = T::lit(0.5);
    let mode = if y_hat.mass(r) >= half { y_hat } else { y_hat.flipped() };
    let one = T::one();
    let (q, alpha, beta) = match mode {
        HardLabel::Entailed => {
            let q = (T::lit(2.0) * r - one) / (one - r);
            (q, q + one, one)
        }
        HardLabel::NotEntailed => {
            let q = (one - T::lit(2.0) * r) / r;
            (q, one, q + one)
        }
    };
    debug_assert!(q >= T::zero());
    BetaParams::new(alpha, beta).ok_or(DomainError::OpenCertainty(r.to_f64().unwrap_or(f64::NAN)))
}

/// Label-correctness penalty for certainty `r` under hard label `y_hat`.
///
/// Equals `ψ(α+β) − ψ(α)` (label 1) or `ψ(α+β) − ψ(β)` (label 0) with the
/// hyperprior from [`solve_beta_params`]. The certainty mass on the label is
/// clamped below at [`LDIV_CLAMP`]; full mass returns the q → ∞ limit, 0.
pub fn ldiv<T: Scalar>(r: T, y_hat: HardLabel) -> T {
    let one = T::one();
    let r = if r.is_nan() { T::lit(0.5) } else { r.max(T::zero()).min(one) };
    // The penalty depends on the mass on the label only, so both labels are
    // evaluated as label 1 with certainty `s`.
    let s = y_hat.mass(r);
    if s >= one {
        return T::zero();
    }
    let s = s.max(T::lit(LDIV_CLAMP));
    let params = solve_beta_params(s, HardLabel::Entailed).expect("clamped certainty is interior");
    let total = digamma(params.alpha + params.beta).expect("positive");
    let own = digamma(params.alpha).expect("positive");
    (total - own).max(T::zero())
}

/// Certainty of an augmented child given the parent's certainty and the
/// probability that the augmentation preserved the label.
pub fn update_certainty<T: Scalar>(r_parent: T, t_link: T) -> Result<T, DomainError> {
    check_unit("r_parent", r_parent)?;
    check_unit("t_link", t_link)?;
    let one = T::one();
    let r = r_parent * t_link + (one - r_parent) * (one - t_link);
    Ok(r.max(T::zero()).min(one))
}

fn check_unit<T: Scalar>(name: &'static str, v: T) -> Result<(), DomainError> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(DomainError::UnitInterval { name, value: v.to_f64().unwrap_or(f64::NAN) })
    }
}
