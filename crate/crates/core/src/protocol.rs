//! Party-side logic: shuffling, share construction and server-side gram
//! assembly.
//!
//! Alice holds `X` (n_f x n_a), Bob holds `Y` (n_f x n_b). Alice draws one
//! [`DotRandomness`] and hands it to Bob. Each party masks its own columns
//! and uploads the masked matrix, one masked scalar per column, its own
//! plaintext gram block and its labels. The server recovers every cross dot
//! product `x_i . y_j` and stitches
//!
//! ```text
//! K = [[X'X, X'Y],
//!      [Y'X, Y'Y]]
//! ```
//!
//! Labels reach the server in the clear; the server needs targets to train.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::encoding::{encode_columns_left, encode_columns_right, recover_dot, DotRandomness};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::ring::{FixedPointCodec, RingElement, RingRng};

/// Size in bytes of one ring element on the wire.
pub const RING_ELEMENT_BYTES: u64 = 8;

/// Which side of the dot-product encoding a party plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Alice: sends `C1 = X + r1` and `C3`.
    Left,
    /// Bob: sends `C2 = Y + r2` and `C4`.
    Right,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Left => "left",
            Role::Right => "right",
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Role::Left => 0,
            Role::Right => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Role::Left),
            1 => Ok(Role::Right),
            other => Err(Error::Malformed(format!("unknown role byte {other}"))),
        }
    }
}

/// Column-major `n_f x n` matrix of ring elements; each column is a sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureMatrix {
    n_f: usize,
    columns: Vec<Vec<RingElement>>,
}

impl FeatureMatrix {
    pub fn new(n_f: usize, columns: Vec<Vec<RingElement>>) -> Result<Self> {
        if let Some(bad) = columns.iter().position(|c| c.len() != n_f) {
            return Err(Error::DimensionMismatch(format!(
                "column {bad} has {} features, expected {n_f}",
                columns[bad].len()
            )));
        }
        Ok(FeatureMatrix { n_f, columns })
    }

    /// Encodes real-valued sample columns.
    pub fn from_real(codec: &FixedPointCodec, samples: &[Vec<f64>]) -> Result<Self> {
        let n_f = samples.first().map_or(0, Vec::len);
        let columns = samples
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&x| codec.encode(x))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::new(n_f, columns)
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<RingElement>] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &[RingElement] {
        &self.columns[i]
    }

    /// Quantized real view of the columns.
    pub fn decode(&self, codec: &FixedPointCodec) -> Vec<Vec<f64>> {
        self.columns
            .iter()
            .map(|c| c.iter().map(|&e| codec.decode(e)).collect())
            .collect()
    }
}

/// Gaze targets, one `(pitch, yaw)` row per sample, radians.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelVector {
    pub targets: Vec<[f64; 2]>,
}

impl LabelVector {
    pub fn new(targets: Vec<[f64; 2]>) -> Self {
        LabelVector { targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn pitch(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t[0]).collect()
    }

    pub fn yaw(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t[1]).collect()
    }

    pub fn angle(&self, which: usize) -> Vec<f64> {
        self.targets.iter().map(|t| t[which]).collect()
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        LabelVector::new(idx.iter().map(|&i| self.targets[i]).collect())
    }

    pub fn concat(&self, other: &LabelVector) -> LabelVector {
        let mut targets = self.targets.clone();
        targets.extend_from_slice(&other.targets);
        LabelVector { targets }
    }
}

/// The permutation [`shuffle_dataset`] applies for `seed`.
pub fn shuffle_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    perm
}

/// Applies one seeded permutation to feature columns and label rows.
///
/// Returns `p` with `features'[i] = features[p[i]]`. The permutation stays
/// with the caller and is never transmitted.
pub fn shuffle_dataset(
    features: FeatureMatrix,
    labels: LabelVector,
    seed: u64,
) -> Result<(FeatureMatrix, LabelVector, Vec<usize>)> {
    if features.n() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature columns but {} label rows",
            features.n(),
            labels.len()
        )));
    }
    let perm = shuffle_permutation(features.n(), seed);

    let mut old_cols: Vec<Option<Vec<RingElement>>> =
        features.columns.into_iter().map(Some).collect();
    let columns = perm
        .iter()
        .map(|&p| {
            old_cols[p]
                .take()
                .expect("permutation visits each index once")
        })
        .collect();
    let targets = perm.iter().map(|&p| labels.targets[p]).collect();
    Ok((
        FeatureMatrix {
            n_f: features.n_f,
            columns,
        },
        LabelVector { targets },
        perm,
    ))
}

/// Alice's session randomness, destined for Bob only.
pub fn alice_setup(n_f: usize, rng: &mut RingRng) -> Result<DotRandomness> {
    if n_f == 0 {
        return Err(Error::DimensionMismatch("n_f must be at least 1".into()));
    }
    DotRandomness::sample(n_f, rng)
}

/// One party's upload to the server.
#[derive(Clone, Debug, PartialEq)]
pub struct ShareBundle {
    pub role: Role,
    /// `C1` (left) or `C2` (right), column-major.
    pub masked_matrix: Vec<Vec<RingElement>>,
    /// `C3` (left) or `C4` (right).
    pub masked_scalars: Vec<RingElement>,
    pub local_gram: DenseMatrix,
    pub labels: LabelVector,
}

impl ShareBundle {
    pub fn n(&self) -> usize {
        self.masked_scalars.len()
    }

    pub fn n_f(&self) -> usize {
        self.masked_matrix.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masked_scalars.len();
        if self.masked_matrix.len() != n || self.labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} bundle: {} masked columns, {} scalars, {} labels",
                self.role.name(),
                self.masked_matrix.len(),
                n,
                self.labels.len()
            )));
        }
        if self.local_gram.rows() != n || self.local_gram.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} bundle: local gram is {}x{}, expected {n}x{n}",
                self.role.name(),
                self.local_gram.rows(),
                self.local_gram.cols()
            )));
        }
        let n_f = self.n_f();
        if self.masked_matrix.iter().any(|c| c.len() != n_f) {
            return Err(Error::DimensionMismatch("ragged masked matrix".into()));
        }
        Ok(())
    }
}

/// Plaintext gram `A'A` of real sample columns, in binary64.
///
/// For quantized inputs within the codec's dot-product bound every entry
/// is exact: each product is an integer multiple of `2^-2f` well inside the
/// 53-bit mantissa.
pub fn plaintext_gram(samples: &[Vec<f64>]) -> DenseMatrix {
    cross_gram(samples, samples)
}

/// `A'B` for sample columns of `A` and `B`.
pub fn cross_gram(left: &[Vec<f64>], right: &[Vec<f64>]) -> DenseMatrix {
    let mut g = DenseMatrix::zeros(left.len(), right.len());
    g.as_mut_slice()
        .par_chunks_mut(right.len().max(1))
        .zip(left.par_iter())
        .for_each(|(row, a)| {
            for (out, b) in row.iter_mut().zip(right) {
                *out = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        });
    g
}

fn check_feature_bound(codec: &FixedPointCodec, features: &FeatureMatrix) -> Result<()> {
    let bound = codec.dot_feature_bound(features.n_f());
    let limit = codec.encode(bound).map(|e| e.signed().unsigned_abs())?;
    for (i, col) in features.columns().iter().enumerate() {
        if let Some(e) = col.iter().find(|e| e.signed().unsigned_abs() >= limit) {
            return Err(Error::OverflowDetected(format!(
                "sample {i}: feature {} exceeds dot-product bound {bound:.3}",
                codec.decode(*e)
            )));
        }
    }
    Ok(())
}

/// Masks a party's (already shuffled) columns and computes its local gram.
pub fn build_share_bundle(
    role: Role,
    codec: &FixedPointCodec,
    features: &FeatureMatrix,
    labels: &LabelVector,
    r: &DotRandomness,
) -> Result<ShareBundle> {
    if features.n() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature columns but {} label rows",
            features.n(),
            labels.len()
        )));
    }
    if features.n_f() != r.n_f() {
        return Err(Error::DimensionMismatch(format!(
            "features have n_f = {}, randomness has {}",
            features.n_f(),
            r.n_f()
        )));
    }
    check_feature_bound(codec, features)?;
    let (masked_matrix, masked_scalars) = match role {
        Role::Left => encode_columns_left(features.columns(), r)?,
        Role::Right => encode_columns_right(features.columns(), r)?,
    };
    let local_gram = plaintext_gram(&features.decode(codec));
    Ok(ShareBundle {
        role,
        masked_matrix,
        masked_scalars,
        local_gram,
        labels: labels.clone(),
    })
}

/// The pooled gram matrix; Alice's samples first, then Bob's.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub k: DenseMatrix,
    pub n_a: usize,
    pub n_b: usize,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n_a + self.n_b
    }

    pub fn checksum(&self) -> String {
        self.k.checksum()
    }
}

/// Server side: recovers the cross block and concatenates the four blocks.
pub fn assemble_gram(
    alice: &ShareBundle,
    bob: &ShareBundle,
    codec: &FixedPointCodec,
) -> Result<GramMatrix> {
    if alice.role == bob.role {
        return Err(Error::RoleConflict(alice.role.name()));
    }
    let (alice, bob) = if alice.role == Role::Left {
        (alice, bob)
    } else {
        (bob, alice)
    };
    alice.validate()?;
    bob.validate()?;
    let (n_a, n_b) = (alice.n(), bob.n());
    if n_a == 0 || n_b == 0 {
        return Err(Error::DimensionMismatch(format!(
            "empty party dataset (n_a = {n_a}, n_b = {n_b})"
        )));
    }
    if alice.n_f() != bob.n_f() {
        return Err(Error::DimensionMismatch(format!(
            "n_f differs: left {} vs right {}",
            alice.n_f(),
            bob.n_f()
        )));
    }

    let cross: Vec<Vec<f64>> = alice
        .masked_matrix
        .par_iter()
        .zip(alice.masked_scalars.par_iter())
        .map(|(c1, &c3)| {
            bob.masked_matrix
                .iter()
                .zip(&bob.masked_scalars)
                .map(|(c2, &c4)| recover_dot(c1, c2, c3, c4).map(|v| codec.decode_product(v)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let n = n_a + n_b;
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n_a {
        k.row_mut(i)[..n_a].copy_from_slice(alice.local_gram.row(i));
        k.row_mut(i)[n_a..].copy_from_slice(&cross[i]);
    }
    for j in 0..n_b {
        let row = k.row_mut(n_a + j);
        for (i, cross_row) in cross.iter().enumerate() {
            row[i] = cross_row[j];
        }
        row[n_a..].copy_from_slice(bob.local_gram.row(j));
    }
    Ok(GramMatrix { k, n_a, n_b })
}

/// Payload bytes moved by the dot-product protocol:
/// `(n_f n_a + n_f n_b + n_a + n_b + 2 n_f) * d`.
pub fn communication_bytes(n_f: u64, n_a: u64, n_b: u64, d: u64) -> u64 {
    (n_f * n_a + n_f * n_b + n_a + n_b + 2 * n_f) * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::DotRandomness;

    fn rv(v: &[u64]) -> Vec<RingElement> {
        v.iter().copied().map(RingElement).collect()
    }

    fn toy_randomness() -> DotRandomness {
        DotRandomness {
            r1: rv(&[5, 6]),
            r2: rv(&[7, 8]),
            r3: RingElement(9),
        }
    }

    /// The toy example runs on raw integers, i.e. zero fractional bits for
    /// the masked side. Scale them into fixed point for the local gram.
    fn int_codec_features(codec: &FixedPointCodec, v: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_real(codec, &[v.to_vec()]).unwrap()
    }

    #[test]
    fn toy_bundles_and_gram() {
        let codec = FixedPointCodec::default();
        let scale = 1u64 << 20;
        let rnd = DotRandomness {
            r1: rv(&[5 * scale, 6 * scale]),
            r2: rv(&[7 * scale, 8 * scale]),
            r3: RingElement(9 * scale * scale),
        };
        let x = int_codec_features(&codec, &[1.0, 2.0]);
        let y = int_codec_features(&codec, &[3.0, 4.0]);
        let la = LabelVector::new(vec![[0.1, 0.2]]);
        let lb = LabelVector::new(vec![[0.3, 0.4]]);
        let a = build_share_bundle(Role::Left, &codec, &x, &la, &rnd).unwrap();
        let b = build_share_bundle(Role::Right, &codec, &y, &lb, &rnd).unwrap();
        assert_eq!(a.masked_matrix, vec![rv(&[6 * scale, 8 * scale])]);
        assert_eq!(a.masked_scalars, vec![RingElement(32 * scale * scale)]);
        assert_eq!(a.local_gram, DenseMatrix::from_rows(&[vec![5.0]]));
        assert_eq!(b.masked_matrix, vec![rv(&[10 * scale, 12 * scale])]);
        assert_eq!(b.masked_scalars, vec![RingElement(113 * scale * scale)]);
        assert_eq!(b.local_gram, DenseMatrix::from_rows(&[vec![25.0]]));

        let g = assemble_gram(&a, &b, &codec).unwrap();
        assert_eq!(
            g.k,
            DenseMatrix::from_rows(&[vec![5.0, 11.0], vec![11.0, 25.0]])
        );
        // argument order does not matter
        assert_eq!(assemble_gram(&b, &a, &codec).unwrap(), g);
    }

    #[test]
    fn integer_codec_reproduces_encoding_example() {
        let codec = FixedPointCodec::new(0);
        let x = int_codec_features(&codec, &[1.0, 2.0]);
        let y = int_codec_features(&codec, &[3.0, 4.0]);
        let l = LabelVector::new(vec![[0.0, 0.0]]);
        let a = build_share_bundle(Role::Left, &codec, &x, &l, &toy_randomness()).unwrap();
        let b = build_share_bundle(Role::Right, &codec, &y, &l, &toy_randomness()).unwrap();
        assert_eq!(a.masked_matrix, vec![rv(&[6, 8])]);
        assert_eq!(a.masked_scalars, vec![RingElement(32)]);
        assert_eq!(b.masked_matrix, vec![rv(&[10, 12])]);
        assert_eq!(b.masked_scalars, vec![RingElement(113)]);
        let g = assemble_gram(&a, &b, &codec).unwrap();
        assert_eq!(
            g.k,
            DenseMatrix::from_rows(&[vec![5.0, 11.0], vec![11.0, 25.0]])
        );
    }

    #[test]
    fn zero_features_zero_shares() {
        let codec = FixedPointCodec::default();
        let x = FeatureMatrix::new(3, vec![rv(&[0, 0, 0]); 2]).unwrap();
        let labels = LabelVector::new(vec![[0.0, 0.0]; 2]);
        let b =
            build_share_bundle(Role::Left, &codec, &x, &labels, &DotRandomness::zeros(3)).unwrap();
        assert!(b.masked_matrix.iter().flatten().all(|e| e.0 == 0));
        assert!(b.masked_scalars.iter().all(|e| e.0 == 0));
        assert!(b.local_gram.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn role_conflict_and_empty() {
        let codec = FixedPointCodec::default();
        let x = FeatureMatrix::new(2, vec![rv(&[1, 2])]).unwrap();
        let l = LabelVector::new(vec![[0.0, 0.0]]);
        let a = build_share_bundle(Role::Left, &codec, &x, &l, &toy_randomness()).unwrap();
        assert!(matches!(
            assemble_gram(&a, &a, &codec),
            Err(Error::RoleConflict(_))
        ));

        let empty = FeatureMatrix::new(2, vec![]).unwrap();
        let none = LabelVector::default();
        let ea = build_share_bundle(Role::Left, &codec, &empty, &none, &toy_randomness()).unwrap();
        let eb = build_share_bundle(Role::Right, &codec, &empty, &none, &toy_randomness()).unwrap();
        assert!(matches!(
            assemble_gram(&ea, &eb, &codec),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn n_f_mismatch_rejected() {
        let codec = FixedPointCodec::default();
        let x = FeatureMatrix::new(3, vec![rv(&[1, 2, 3])]).unwrap();
        let l = LabelVector::new(vec![[0.0, 0.0]]);
        assert!(matches!(
            build_share_bundle(Role::Left, &codec, &x, &l, &toy_randomness()),
            Err(Error::DimensionMismatch(_))
        ));
        let short = LabelVector::default();
        let x2 = FeatureMatrix::new(2, vec![rv(&[1, 2])]).unwrap();
        assert!(matches!(
            build_share_bundle(Role::Left, &codec, &x2, &short, &toy_randomness()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn oversized_feature_flags_overflow() {
        let codec = FixedPointCodec::default();
        let x = FeatureMatrix::from_real(&codec, &[vec![3000.0, 0.0]]).unwrap();
        let l = LabelVector::new(vec![[0.0, 0.0]]);
        let r = DotRandomness::zeros(2);
        assert!(matches!(
            build_share_bundle(Role::Left, &codec, &x, &l, &r),
            Err(Error::OverflowDetected(_))
        ));
    }

    #[test]
    fn shuffle_single_is_identity() {
        let x = FeatureMatrix::new(2, vec![rv(&[1, 2])]).unwrap();
        let l = LabelVector::new(vec![[0.5, 0.25]]);
        let (x2, l2, p) = shuffle_dataset(x.clone(), l.clone(), 77).unwrap();
        assert_eq!(p, vec![0]);
        assert_eq!((x2, l2), (x, l));
    }

    #[test]
    fn shuffle_preserves_pairing() {
        let cols: Vec<Vec<RingElement>> = (0..4u64).map(|i| rv(&[i, 10 * i])).collect();
        let labels = LabelVector::new((0..4).map(|i| [i as f64, -(i as f64)]).collect());
        let x = FeatureMatrix::new(2, cols).unwrap();
        let (x2, l2, p) = shuffle_dataset(x.clone(), labels.clone(), 3).unwrap();
        let (x3, _, p3) = shuffle_dataset(x.clone(), labels.clone(), 3).unwrap();
        assert_eq!(p, p3);
        assert_eq!(x2, x3);
        for i in 0..4 {
            assert_eq!(x2.column(i), x.column(p[i]));
            assert_eq!(l2.targets[i], labels.targets[p[i]]);
        }
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn shuffle_dimension_mismatch() {
        let x = FeatureMatrix::new(2, vec![rv(&[1, 2])]).unwrap();
        assert!(matches!(
            shuffle_dataset(x, LabelVector::default(), 1),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn setup_lengths_and_hooks() {
        let mut rng = RingRng::seeded(1);
        let r = alice_setup(36, &mut rng).unwrap();
        assert_eq!((r.r1.len(), r.r2.len()), (36, 36));
        let mut other = RingRng::seeded(2);
        assert_ne!(alice_setup(36, &mut other).unwrap(), r);
        let z = alice_setup(36, &mut RingRng::zero()).unwrap();
        assert_eq!(z, DotRandomness::zeros(36));
        assert!(alice_setup(0, &mut rng).is_err());
    }

    #[test]
    fn communication_bytes_examples() {
        assert_eq!(communication_bytes(36, 8000, 8000, 8), 4_736_576);
        assert_eq!(communication_bytes(0, 0, 0, 0), 0);
        assert_eq!(communication_bytes(2, 1, 1, 8), 80);
    }
}
