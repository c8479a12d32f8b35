//! Decomposable affine randomized encoding of ring multiplication, and its
//! column-wise concatenation into a dot-product encoding.
//!
//! For a product `x1 * x2` with uniform masks `(r1, r2, r3)` the encoding is
//!
//! ```text
//! (x1 + r1,  x2 + r2,  r2*x1 + r3,  r1*x2 + r1*r2 - r3)
//! ```
//!
//! and `c1*c2 - c3 - c4` recovers the product. The dot-product form masks a
//! whole column with vectors `r1`, `r2` and folds the per-coordinate
//! correction terms into one scalar per column.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ring::{ring_dot, RingElement, RingRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MulRandomness {
    pub r1: RingElement,
    pub r2: RingElement,
    pub r3: RingElement,
}

impl MulRandomness {
    pub fn sample(rng: &mut RingRng) -> Result<Self> {
        Ok(MulRandomness {
            r1: rng.sample_uniform()?,
            r2: rng.sample_uniform()?,
            r3: rng.sample_uniform()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MulEncoding {
    pub c1: RingElement,
    pub c2: RingElement,
    pub c3: RingElement,
    pub c4: RingElement,
}

impl MulEncoding {
    pub fn components(&self) -> [RingElement; 4] {
        [self.c1, self.c2, self.c3, self.c4]
    }
}

pub fn encode_mul(x1: RingElement, x2: RingElement, r: MulRandomness) -> MulEncoding {
    MulEncoding {
        c1: x1 + r.r1,
        c2: x2 + r.r2,
        c3: r.r2 * x1 + r.r3,
        c4: r.r1 * x2 + r.r1 * r.r2 - r.r3,
    }
}

pub fn recover_mul(c: MulEncoding) -> RingElement {
    c.c1 * c.c2 - c.c3 - c.c4
}

/// Simulator: given only the output `y`, produce an encoding distributed
/// exactly like `encode_mul` output for any inputs with product `y`.
pub fn simulate_mul(
    y: RingElement,
    a1: RingElement,
    a2: RingElement,
    a3: RingElement,
) -> MulEncoding {
    MulEncoding {
        c1: a1,
        c2: a2,
        c3: a3,
        c4: a1 * a2 - y - a3,
    }
}

/// Masks for one dot-product session: `r1`, `r2` of length `n_f` and a
/// scalar `r3`. Shared between the two input parties, never with the server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DotRandomness {
    pub r1: Vec<RingElement>,
    pub r2: Vec<RingElement>,
    pub r3: RingElement,
}

impl DotRandomness {
    pub fn sample(n_f: usize, rng: &mut RingRng) -> Result<Self> {
        let r1 = rng.sample_vec(n_f)?;
        let r2 = rng.sample_vec(n_f)?;
        let r3 = rng.sample_uniform()?;
        Ok(DotRandomness { r1, r2, r3 })
    }

    pub fn zeros(n_f: usize) -> Self {
        DotRandomness {
            r1: vec![RingElement::ZERO; n_f],
            r2: vec![RingElement::ZERO; n_f],
            r3: RingElement::ZERO,
        }
    }

    pub fn n_f(&self) -> usize {
        self.r1.len()
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.r1.len() != len || self.r2.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "column has {len} features but randomness has r1: {}, r2: {}",
                self.r1.len(),
                self.r2.len()
            )));
        }
        Ok(())
    }
}

/// Left party's share of one column: `(x + r1, <r2, x> + r3)`.
pub fn encode_dot_left(
    x: &[RingElement],
    r: &DotRandomness,
) -> Result<(Vec<RingElement>, RingElement)> {
    r.check(x.len())?;
    let c1 = x.iter().zip(&r.r1).map(|(&a, &m)| a + m).collect();
    let c3 = ring_dot(&r.r2, x) + r.r3;
    Ok((c1, c3))
}

/// Right party's share of one column: `(y + r2, <r1, y> + <r1, r2> - r3)`.
pub fn encode_dot_right(
    y: &[RingElement],
    r: &DotRandomness,
) -> Result<(Vec<RingElement>, RingElement)> {
    r.check(y.len())?;
    let c2 = y.iter().zip(&r.r2).map(|(&a, &m)| a + m).collect();
    let c4 = ring_dot(&r.r1, y) + ring_dot(&r.r1, &r.r2) - r.r3;
    Ok((c2, c4))
}

pub fn recover_dot(
    c1: &[RingElement],
    c2: &[RingElement],
    c3: RingElement,
    c4: RingElement,
) -> Result<RingElement> {
    if c1.len() != c2.len() {
        return Err(Error::DimensionMismatch(format!(
            "share vectors of length {} and {}",
            c1.len(),
            c2.len()
        )));
    }
    Ok(ring_dot(c1, c2) - c3 - c4)
}

/// Encodes every column of a column-major `n_f x n` matrix with the left
/// encoding. Output is independent of thread scheduling.
pub fn encode_columns_left(
    columns: &[Vec<RingElement>],
    r: &DotRandomness,
) -> Result<(Vec<Vec<RingElement>>, Vec<RingElement>)> {
    let out: Vec<_> = columns
        .par_iter()
        .map(|col| encode_dot_left(col, r))
        .collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}

pub fn encode_columns_right(
    columns: &[Vec<RingElement>],
    r: &DotRandomness,
) -> Result<(Vec<Vec<RingElement>>, Vec<RingElement>)> {
    // <r1, r2> is shared by every column.
    r.check(columns.first().map_or(r.n_f(), Vec::len))?;
    let cross = ring_dot(&r.r1, &r.r2);
    let out: Vec<_> = columns
        .par_iter()
        .map(|col| {
            r.check(col.len())?;
            let c2 = col.iter().zip(&r.r2).map(|(&a, &m)| a + m).collect();
            Ok((c2, ring_dot(&r.r1, col) + cross - r.r3))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}
