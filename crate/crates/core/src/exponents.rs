//! Lebesgue exponents shared by every operator and constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of input functions. The operators in this crate are bilinear.
pub const ARITY: usize = 2;

/// Slack used when checking the `1/p_i + 1/p_j >= 1` constraint, so that
/// exponents such as `p_i = p_j = 2` are not rejected by rounding.
const CONSTRAINT_SLACK: f64 = 1e-12;

/// `(n, m, alpha, p_1, p_2, q)` plus an optional third exponent `p_3` used by
/// the three-weight testing constants. When `p_3` is absent it defaults to `q'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTuple {
    pub dim: usize,
    #[serde(default = "default_arity")]
    pub m: usize,
    pub alpha: f64,
    pub p1: f64,
    pub p2: f64,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p3: Option<f64>,
}

fn default_arity() -> usize {
    ARITY
}

/// Hölder dual `x' = x / (x - 1)`; `+inf` at `x = 1`, negative below 1.
pub fn dual(x: f64) -> f64 {
    if x == 1.0 {
        f64::INFINITY
    } else {
        x / (x - 1.0)
    }
}

/// Reciprocal of the dual, `1/x' = 1 - 1/x`, finite for every `x > 0`.
pub fn dual_reciprocal(x: f64) -> f64 {
    1.0 - 1.0 / x
}

impl ExponentTuple {
    pub fn new(dim: usize, alpha: f64, p1: f64, p2: f64, q: f64) -> Result<Self> {
        let e = ExponentTuple {
            dim,
            m: ARITY,
            alpha,
            p1,
            p2,
            q,
            p3: None,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn with_testing_exponent(mut self, p3: f64) -> Result<Self> {
        self.p3 = Some(p3);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ExponentDomain(msg));
        if self.dim == 0 || self.dim > 2 {
            return bad(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        if self.m != ARITY {
            return bad(format!("only m = {ARITY} is supported, got {}", self.m));
        }
        let mn = (self.m * self.dim) as f64;
        if !(self.alpha >= 0.0 && self.alpha < mn) {
            return bad(format!("need 0 <= alpha < {mn}, got {}", self.alpha));
        }
        for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(p > 1.0 && p.is_finite()) {
                return bad(format!("need 1 < {name} < inf, got {p}"));
            }
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return bad(format!("need 0 < q < inf, got {}", self.q));
        }
        if self.p() > self.q * (1.0 + 1e-12) {
            return bad(format!("need p <= q, got p = {} > q = {}", self.p(), self.q));
        }
        if let Some(p3) = self.p3 {
            if !(p3 > 1.0 && p3.is_finite()) {
                return bad(format!("need 1 < p3 < inf, got {p3}"));
            }
        }
        Ok(())
    }

    /// `1/p = 1/p_1 + 1/p_2`.
    pub fn p(&self) -> f64 {
        1.0 / (1.0 / self.p1 + 1.0 / self.p2)
    }

    /// `p_i` for `i` in `{1, 2}`.
    pub fn p_i(&self, i: usize) -> f64 {
        match i {
            1 => self.p1,
            2 => self.p2,
            _ => panic!("input index {i} out of range"),
        }
    }

    pub fn p_dual(&self, i: usize) -> f64 {
        dual(self.p_i(i))
    }

    pub fn q_dual(&self) -> f64 {
        dual(self.q)
    }

    /// `alpha / n`, the exponent of `|Q|` in the fractional operators.
    pub fn alpha_over_n(&self) -> f64 {
        self.alpha / self.dim as f64
    }

    /// `(p_1, p_2, p_3)` for the three-weight testing constants, with all
    /// pairwise constraints `1/p_i + 1/p_j >= 1` checked.
    pub fn testing_exponents(&self) -> Result<[f64; 3]> {
        let p3 = match self.p3 {
            Some(p3) => p3,
            None if self.q > 1.0 => dual(self.q),
            None => {
                return Err(Error::ExponentDomain(format!(
                    "no testing exponent: p3 unset and q = {} <= 1",
                    self.q
                )))
            }
        };
        let ps = [self.p1, self.p2, p3];
        for i in 0..3 {
            for j in (i + 1)..3 {
                if 1.0 / ps[i] + 1.0 / ps[j] < 1.0 - CONSTRAINT_SLACK {
                    return Err(Error::ExponentDomain(format!(
                        "need 1/p_{} + 1/p_{} >= 1, got {} + {}",
                        i + 1,
                        j + 1,
                        1.0 / ps[i],
                        1.0 / ps[j]
                    )));
                }
            }
        }
        Ok(ps)
    }

    pub fn admits_testing(&self) -> bool {
        self.testing_exponents().is_ok()
    }
}

/// `p_ij` with `1/p_ij = 1/p_i + 1/p_j`.
pub fn pair_exponent(pi: f64, pj: f64) -> f64 {
    1.0 / (1.0 / pi + 1.0 / pj)
}

/// Permutations of `(1, 2, 3)` in lexicographic order.
pub const TRIPLES: [[usize; 3]; 6] = [
    [1, 2, 3],
    [1, 3, 2],
    [2, 1, 3],
    [2, 3, 1],
    [3, 1, 2],
    [3, 2, 1],
];

pub fn triple_label(t: [usize; 3]) -> String {
    format!("({},{},{})", t[0], t[1], t[2])
}
