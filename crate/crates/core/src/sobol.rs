//! Sobol low-discrepancy sequence (Joe-Kuo direction numbers, Gray-code
//! ordering, 32-bit), with the all-zero first point skipped.

use crate::error::{OedError, Result};

const BITS: usize = 32;

/// `(poly, m)` per dimension after the first. `poly` packs the primitive
/// polynomial: its bit length minus one is the degree `s`, and the inner
/// coefficients are bits `1..s`.
const DIRECTIONS: &[(u32, &[u32])] = &[
    (3, &[1]),
    (7, &[1, 3]),
    (11, &[1, 3, 1]),
    (13, &[1, 1, 1]),
    (19, &[1, 1, 3, 3]),
    (25, &[1, 3, 5, 13]),
    (37, &[1, 1, 5, 5, 17]),
    (41, &[1, 1, 5, 5, 5]),
    (47, &[1, 1, 7, 11, 19]),
    (55, &[1, 1, 5, 1, 1]),
    (59, &[1, 1, 1, 3, 11]),
    (61, &[1, 3, 5, 5, 31]),
    (67, &[1, 3, 3, 9, 7, 49]),
    (91, &[1, 1, 1, 15, 21, 21]),
    (97, &[1, 3, 1, 13, 27, 49]),
    (103, &[1, 1, 1, 15, 7, 5]),
    (109, &[1, 3, 1, 15, 13, 25]),
    (115, &[1, 1, 5, 5, 19, 61]),
    (131, &[1, 3, 7, 11, 23, 15, 103]),
    (137, &[1, 3, 7, 13, 13, 15, 69]),
];

pub const MAX_DIMENSION: usize = DIRECTIONS.len() + 1;

fn direction_vectors(dim: usize) -> Vec<[u32; BITS]> {
    let mut out = Vec::with_capacity(dim);
    let mut first = [0u32; BITS];
    for (k, v) in first.iter_mut().enumerate() {
        *v = 1 << (BITS - 1 - k);
    }
    out.push(first);
    for &(poly, m) in &DIRECTIONS[..dim - 1] {
        let s = (32 - poly.leading_zeros() - 1) as usize;
        let a = (poly >> 1) & ((1 << (s - 1)) - 1);
        let mut v = [0u32; BITS];
        for k in 0..s {
            v[k] = m[k] << (BITS - 1 - k);
        }
        for k in s..BITS {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for j in 1..s {
                if (a >> (s - 1 - j)) & 1 == 1 {
                    x ^= v[k - j];
                }
            }
            v[k] = x;
        }
        out.push(v);
    }
    out
}

/// A persistent Sobol stream. Each call to [`SobolStream::next_points`]
/// continues where the previous one stopped.
#[derive(Clone, Debug)]
pub struct SobolStream {
    dim: usize,
    index: u64,
    state: Vec<u32>,
    directions: Vec<[u32; BITS]>,
}

impl SobolStream {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(OedError::InvalidInput("Sobol dimension must be positive".into()));
        }
        if dim > MAX_DIMENSION {
            return Err(OedError::UnsupportedDimension {
                requested: dim,
                max: MAX_DIMENSION,
            });
        }
        Ok(SobolStream {
            dim,
            index: 0,
            state: vec![0; dim],
            directions: direction_vectors(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points emitted so far (the zero point not counted).
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        // Gray code: flip the direction at the lowest zero bit of the index
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < BITS, "Sobol stream exhausted");
        for (s, v) in self.state.iter_mut().zip(&self.directions) {
            *s ^= v[c];
        }
        self.index += 1;
        self.state.iter().map(|&s| s as f64 / 4_294_967_296.0).collect()
    }

    pub fn next_points(&mut self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.next_point()).collect()
    }
}
