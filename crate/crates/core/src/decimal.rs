//! Fixed-point decimal strings.
//!
//! Quantities, prices and amounts never pass through floating point. They are
//! carried as strings matching `-?[0-9]+(\.[0-9]{1,10})?` and, when arithmetic
//! is needed, parsed into an exact big-integer mantissa with a decimal scale.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

/// Maximum number of fraction digits a persisted decimal may carry.
pub const MAX_SCALE: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed decimal string {0:?}")]
pub struct DecimalError(pub String);

/// Returns true when `s` is a well-formed persisted decimal string.
pub fn is_decimal(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return false;
    }
    match frac {
        None => true,
        Some(f) => !f.is_empty() && f.len() <= MAX_SCALE as usize && f.bytes().all(|b| b.is_ascii_digit()),
    }
}

/// An exact decimal value: `mantissa * 10^-scale`.
#[derive(Debug, Clone)]
pub struct Decimal {
    mantissa: BigInt,
    scale: u32,
}

impl Decimal {
    pub fn zero() -> Self {
        Decimal { mantissa: BigInt::zero(), scale: 0 }
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    fn rescaled(&self, scale: u32) -> BigInt {
        debug_assert!(scale >= self.scale);
        &self.mantissa * BigInt::from(10u32).pow(scale - self.scale)
    }

    /// Drops trailing fractional zeros.
    pub fn normalized(mut self) -> Self {
        let ten = BigInt::from(10u32);
        while self.scale > 0 && (&self.mantissa % &ten).is_zero() {
            self.mantissa /= &ten;
            self.scale -= 1;
        }
        self
    }

    /// Renders with exactly `scale` fraction digits, failing if that would lose precision.
    pub fn to_fixed(&self, scale: u32) -> Option<String> {
        let norm = self.clone().normalized();
        if norm.scale > scale {
            return None;
        }
        Some(render(&norm.rescaled(scale), scale))
    }
}

fn render(mantissa: &BigInt, scale: u32) -> String {
    let digits = mantissa.abs().to_string();
    let body = if scale == 0 {
        digits
    } else {
        let scale = scale as usize;
        let padded = format!("{:0>width$}", digits, width = scale + 1);
        let (int, frac) = padded.split_at(padded.len() - scale);
        format!("{int}.{frac}")
    };
    if mantissa.is_negative() {
        format!("-{body}")
    } else {
        body
    }
}

impl FromStr for Decimal {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if !is_decimal(s) {
            return Err(DecimalError(s.to_string()));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let joined = format!("{int}{frac}");
        let mantissa = joined.parse::<BigInt>().map_err(|_| DecimalError(s.to_string()))?;
        Ok(Decimal { mantissa, scale: frac.len() as u32 })
    }
}

/// Canonical rendering: no trailing fractional zeros, no negative zero.
impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let norm = self.clone().normalized();
        f.write_str(&render(&norm.mantissa, norm.scale))
    }
}

impl std::ops::Add for &Decimal {
    type Output = Decimal;

    fn add(self, rhs: &Decimal) -> Decimal {
        let scale = self.scale.max(rhs.scale);
        Decimal { mantissa: self.rescaled(scale) + rhs.rescaled(scale), scale }
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Decimal {}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let scale = self.scale.max(other.scale);
        self.rescaled(scale).cmp(&other.rescaled(scale))
    }
}

/// True when `s` is the canonical rendering of its own value.
pub fn is_canonical(s: &str) -> bool {
    s.parse::<Decimal>().map(|d| d.to_string() == s).unwrap_or(false)
}
