//! ε-insensitive support vector regression on a precomputed kernel.
//!
//! The dual is solved over `2n` variables `(α, α*)`, each boxed in
//! `[0, C]`, with `β = α - α*`:
//!
//! ```text
//! min  ½ βᵀKβ - yᵀβ + ε Σ|β_i|     s.t.  Σ β_i = 0,  |β_i| ≤ C
//! ```
//!
//! Sequential minimal optimization updates one pair per iteration. The
//! first index is the maximal KKT violator, the second is chosen by the
//! second-order gain among violators. Training stops when the maximal
//! violation falls under `tol`.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eyegen::angles_to_gaze;
use crate::kernels::{kernel_from_gram, KernelConfig};
use crate::matrix::DenseMatrix;
use crate::protocol::LabelVector;

const TAU: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Angle {
    Pitch,
    Yaw,
}

impl Angle {
    pub fn index(self) -> usize {
        match self {
            Angle::Pitch => 0,
            Angle::Yaw => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Angle::Pitch => "pitch",
            Angle::Yaw => "yaw",
        }
    }

    pub const BOTH: [Angle; 2] = [Angle::Pitch, Angle::Yaw];
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvrHyperparams {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: KernelConfig,
    pub tol: f64,
    pub max_iter: u64,
}

impl SvrHyperparams {
    pub fn new(c: f64, epsilon: f64, kernel: KernelConfig) -> Self {
        SvrHyperparams {
            c,
            epsilon,
            kernel,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "C must be > 0, got {}",
                self.c
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        self.kernel.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvrModel {
    /// `β_i = α_i - α*_i`, each in `[-C, C]`.
    pub beta: Vec<f64>,
    pub bias: f64,
    /// Indices with `β_i != 0`.
    pub support_indices: Vec<usize>,
    pub kernel: KernelConfig,
    pub target: Angle,
    /// False when `max_iter` was hit before the KKT tolerance.
    pub converged: bool,
    pub iterations: u64,
}

impl SvrModel {
    pub fn n_train(&self) -> usize {
        self.beta.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GazeModelPair {
    pub pitch_model: SvrModel,
    pub yaw_model: SvrModel,
}

impl GazeModelPair {
    pub fn model(&self, angle: Angle) -> &SvrModel {
        match angle {
            Angle::Pitch => &self.pitch_model,
            Angle::Yaw => &self.yaw_model,
        }
    }
}

/// Minimization form of the dual objective.
pub fn dual_objective(k: &DenseMatrix, y: &[f64], beta: &[f64], epsilon: f64) -> f64 {
    let mut quad = 0.0;
    for (i, &bi) in beta.iter().enumerate() {
        if bi == 0.0 {
            continue;
        }
        let row = k.row(i);
        let kb: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        quad += bi * kb;
    }
    let lin: f64 = y.iter().zip(beta).map(|(a, b)| a * b).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    0.5 * quad - lin + epsilon * l1
}

fn check_kernel(k: &DenseMatrix, n: usize) -> Result<()> {
    if k.rows() != n || k.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {}x{} but there are {n} targets",
            k.rows(),
            k.cols()
        )));
    }
    let asym = k.max_asymmetry();
    if !(asym <= SYMMETRY_TOL) {
        return Err(Error::BadKernel(format!(
            "asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}"
        )));
    }
    if let Some(i) = (0..n).find(|&i| !(k.get(i, i) >= -SYMMETRY_TOL)) {
        return Err(Error::BadKernel(format!(
            "negative diagonal entry K[{i}][{i}] = {}",
            k.get(i, i)
        )));
    }
    Ok(())
}

struct Smo<'a> {
    k: &'a DenseMatrix,
    n: usize,
    c: f64,
    /// `alpha[t]` for `t < n` is `α_t`, for `t >= n` it is `α*_{t-n}`.
    alpha: Vec<f64>,
    grad: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(k: &'a DenseMatrix, y: &[f64], c: f64, epsilon: f64) -> Self {
        let n = y.len();
        let mut grad = Vec::with_capacity(2 * n);
        grad.extend(y.iter().map(|&yi| epsilon - yi));
        grad.extend(y.iter().map(|&yi| epsilon + yi));
        Smo {
            k,
            n,
            c,
            alpha: vec![0.0; 2 * n],
            grad,
            diag: k.diagonal(),
        }
    }

    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn sample(&self, t: usize) -> usize {
        if t < self.n {
            t
        } else {
            t - self.n
        }
    }

    /// Returns the working pair, or `None` once the violation is below `tol`.
    fn select(&self, tol: f64) -> Option<(usize, usize)> {
        let n = self.n;
        let c = self.c;
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if self.alpha[t] < c && -self.grad[t] >= gmax {
                gmax = -self.grad[t];
                i = t;
            }
        }
        for t in n..2 * n {
            if self.alpha[t] > 0.0 && self.grad[t] >= gmax {
                gmax = self.grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            return None;
        }
        let si = self.sample(i);
        let k_i = self.k.row(si);
        let kii = self.diag[si];

        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if self.alpha[t] > 0.0 {
                let g = self.grad[t];
                gmax2 = gmax2.max(g);
                let diff = gmax + g;
                if diff > 0.0 {
                    let quad = kii + self.diag[t] - 2.0 * k_i[t];
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        for t in n..2 * n {
            if self.alpha[t] < c {
                let g = self.grad[t];
                gmax2 = gmax2.max(-g);
                let diff = gmax - g;
                if diff > 0.0 {
                    let st = t - n;
                    let quad = kii + self.diag[st] - 2.0 * k_i[st];
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            return None;
        }
        Some((i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (si, sj) = (self.sample(i), self.sample(j));
        let (yi, yj) = (self.sign(i), self.sign(j));
        let kij = self.k.get(si, sj);
        let quad_raw = self.diag[si] + self.diag[sj] - 2.0 * kij;
        let quad = if quad_raw > 0.0 { quad_raw } else { TAU };
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let (gi, gj) = (self.grad[i], self.grad[j]);

        if yi != yj {
            let delta = (-gi - gj) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (gi - gj) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;

        // Gradient of the smooth part moves by K (Δβ) for α and by its
        // negation for α*.
        let dbi = yi * (ai - old_i);
        let dbj = yj * (aj - old_j);
        let n = self.n;
        let k_i = self.k.row(si);
        let k_j = self.k.row(sj);
        let (g_plus, g_minus) = self.grad.split_at_mut(n);
        for t in 0..n {
            let d = k_i[t] * dbi + k_j[t] * dbj;
            g_plus[t] += d;
            g_minus[t] -= d;
        }
    }

    fn beta(&self) -> Vec<f64> {
        (0..self.n)
            .map(|t| self.alpha[t] - self.alpha[t + self.n])
            .collect()
    }

    /// Decision-function offset: average over free variables, midpoint of
    /// the feasible interval otherwise.
    fn bias(&self) -> f64 {
        let c = self.c;
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut free = 0usize;
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            let a = self.alpha[t];
            let positive = t < self.n;
            if a >= c {
                if positive {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            } else if a <= 0.0 {
                if positive {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 {
            sum / free as f64
        } else {
            (ub + lb) / 2.0
        };
        -rho
    }
}

/// Fits one ε-SVR on a precomputed `n x n` kernel.
///
/// Hitting `max_iter` is not an error: the last iterate comes back with
/// `converged = false`.
pub fn train(k: &DenseMatrix, y: &[f64], hp: &SvrHyperparams, target: Angle) -> Result<SvrModel> {
    hp.validate()?;
    let n = y.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    check_kernel(k, n)?;

    let mut smo = Smo::new(k, y, hp.c, hp.epsilon);
    let mut iterations = 0u64;
    let mut converged = false;
    while iterations < hp.max_iter {
        match smo.select(hp.tol) {
            None => {
                converged = true;
                break;
            }
            Some((i, j)) => smo.update(i, j),
        }
        iterations += 1;
    }
    if !converged {
        // a final check: the last update may have closed the gap
        converged = smo.select(hp.tol).is_none();
    }
    if !converged {
        log::warn!(
            "SVR ({}) did not reach tol {} within {} iterations",
            target.name(),
            hp.tol,
            hp.max_iter
        );
    }
    let beta = smo.beta();
    let support_indices = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(SvrModel {
        bias: smo.bias(),
        beta,
        support_indices,
        kernel: hp.kernel,
        target,
        converged,
        iterations,
    })
}

/// `Σ β_i k_i + b` for one test sample.
pub fn predict(model: &SvrModel, k_row: &[f64]) -> Result<f64> {
    if k_row.len() != model.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel row has {} entries, model was trained on {}",
            k_row.len(),
            model.beta.len()
        )));
    }
    Ok(model
        .support_indices
        .iter()
        .map(|&i| model.beta[i] * k_row[i])
        .sum::<f64>()
        + model.bias)
}

/// Predictions for every row of a `m x n_train` kernel block.
pub fn predict_rows(model: &SvrModel, k_block: &DenseMatrix) -> Result<Vec<f64>> {
    (0..k_block.rows())
        .map(|r| predict(model, k_block.row(r)))
        .collect()
}

/// Trains pitch and yaw regressors on the same kernel.
pub fn train_gaze(
    k: &DenseMatrix,
    labels: &LabelVector,
    pitch_hp: &SvrHyperparams,
    yaw_hp: &SvrHyperparams,
) -> Result<GazeModelPair> {
    let (pitch_model, yaw_model) = rayon::join(
        || train(k, &labels.pitch(), pitch_hp, Angle::Pitch),
        || train(k, &labels.yaw(), yaw_hp, Angle::Yaw),
    );
    Ok(GazeModelPair {
        pitch_model: pitch_model?,
        yaw_model: yaw_model?,
    })
}

pub const MODEL_MAGIC: &[u8; 4] = b"REKM";
pub const MODEL_VERSION: u16 = 1;

/// Binary model file, little-endian:
///
/// ```text
/// "REKM" | version u16 | count u8 | count x model
/// model: target u8 | kernel | C f64 | epsilon f64 | converged u8 |
///        n u64 | beta [n x f64] | bias f64 | n_sv u64 | support [n_sv x u64]
/// kernel: 0 (linear) | 1, degree u32, offset f64 | 2, gamma f64
/// ```
impl GazeModelPair {
    pub fn write_to<W: std::io::Write>(&self, hp: &[SvrHyperparams; 2], mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.push(2);
        for (m, h) in [&self.pitch_model, &self.yaw_model].into_iter().zip(hp) {
            buf.push(m.target.index() as u8);
            match m.kernel {
                KernelConfig::Linear => buf.push(0),
                KernelConfig::Polynomial { degree, offset } => {
                    buf.push(1);
                    buf.extend_from_slice(&degree.to_le_bytes());
                    buf.extend_from_slice(&offset.to_le_bytes());
                }
                KernelConfig::Rbf { gamma } => {
                    buf.push(2);
                    buf.extend_from_slice(&gamma.to_le_bytes());
                }
            }
            buf.extend_from_slice(&h.c.to_le_bytes());
            buf.extend_from_slice(&h.epsilon.to_le_bytes());
            buf.push(u8::from(m.converged));
            buf.extend_from_slice(&(m.beta.len() as u64).to_le_bytes());
            for b in &m.beta {
                buf.extend_from_slice(&b.to_le_bytes());
            }
            buf.extend_from_slice(&m.bias.to_le_bytes());
            buf.extend_from_slice(&(m.support_indices.len() as u64).to_le_bytes());
            for i in &m.support_indices {
                buf.extend_from_slice(&(*i as u64).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Returns the models and the hyperparameters they were trained with.
    pub fn read_from<R: std::io::Read>(mut r: R) -> Result<(Self, [SvrHyperparams; 2])> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
        };
        let magic: [u8; 4] = cur.take(4)?.try_into().expect("4 bytes");
        if &magic != MODEL_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes"));
        if version != MODEL_VERSION {
            return Err(Error::Malformed(format!(
                "unsupported model version {version}"
            )));
        }
        if cur.u8()? != 2 {
            return Err(Error::Malformed("expected a pitch and a yaw model".into()));
        }
        let mut models = Vec::with_capacity(2);
        let mut hps = Vec::with_capacity(2);
        for expected in Angle::BOTH {
            let target = match cur.u8()? {
                0 => Angle::Pitch,
                1 => Angle::Yaw,
                t => return Err(Error::Malformed(format!("unknown target {t}"))),
            };
            if target != expected {
                return Err(Error::Malformed("models out of order".into()));
            }
            let kernel = match cur.u8()? {
                0 => KernelConfig::Linear,
                1 => {
                    let degree = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
                    KernelConfig::Polynomial {
                        degree,
                        offset: cur.f64()?,
                    }
                }
                2 => KernelConfig::Rbf { gamma: cur.f64()? },
                k => return Err(Error::Malformed(format!("unknown kernel tag {k}"))),
            };
            kernel.validate()?;
            let c = cur.f64()?;
            let epsilon = cur.f64()?;
            let converged = cur.u8()? != 0;
            let n = cur.count(8)?;
            let beta = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            let bias = cur.f64()?;
            let n_sv = cur.count(8)?;
            let support_indices = (0..n_sv)
                .map(|_| cur.u64().map(|i| i as usize))
                .collect::<Result<Vec<_>>>()?;
            if support_indices.iter().any(|&i| i >= n) {
                return Err(Error::Malformed("support index out of range".into()));
            }
            models.push(SvrModel {
                beta,
                bias,
                support_indices,
                kernel,
                target,
                converged,
                iterations: 0,
            });
            hps.push(SvrHyperparams::new(c, epsilon, kernel));
        }
        if cur.pos != bytes.len() {
            return Err(Error::LengthMismatch(format!(
                "{} trailing bytes in model file",
                bytes.len() - cur.pos
            )));
        }
        let yaw_model = models.pop().expect("two models");
        let pitch_model = models.pop().expect("two models");
        Ok((
            GazeModelPair {
                pitch_model,
                yaw_model,
            },
            [hps[0], hps[1]],
        ))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    /// A length prefix, checked against the bytes that remain.
    fn count(&mut self, elem: usize) -> Result<usize> {
        let n = self.u64()?;
        let available = (self.bytes.len() - self.pos) / elem;
        if n > available as u64 {
            return Err(Error::Truncated {
                needed: n as usize * elem,
                available: self.bytes.len() - self.pos,
            });
        }
        Ok(n as usize)
    }
}

/// Mean angle in degrees between predicted and true gaze directions.
pub fn mean_angular_error(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} ground-truth samples",
            pred.len(),
            truth.len()
        )));
    }
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let a = angles_to_gaze(p[0], p[1]);
            let b = angles_to_gaze(t[0], t[1]);
            let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
            dot.acos().to_degrees()
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Hyperparameter grid. Kernels vary slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub kernels: Vec<KernelConfig>,
    pub cs: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub tol: f64,
}

impl Grid {
    /// γ ∈ {2^-3..2^4}, C ∈ {2^-3..2^3}, ε ∈ {0.005, 0.01, 0.05, 0.1, 0.5, 1}.
    pub fn default_rbf() -> Self {
        Grid {
            kernels: (-3..=4).map(|e| KernelConfig::rbf(2f64.powi(e))).collect(),
            cs: (-3..=3).map(|e| 2f64.powi(e)).collect(),
            epsilons: vec![0.005, 0.01, 0.05, 0.1, 0.5, 1.0],
            tol: 1e-3,
        }
    }

    pub fn single(hp: &SvrHyperparams) -> Self {
        Grid {
            kernels: vec![hp.kernel],
            cs: vec![hp.c],
            epsilons: vec![hp.epsilon],
            tol: hp.tol,
        }
    }

    pub fn len(&self) -> usize {
        self.kernels.len() * self.cs.len() * self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<SvrHyperparams> {
        let mut out = Vec::with_capacity(self.len());
        for &k in &self.kernels {
            for &c in &self.cs {
                for &e in &self.epsilons {
                    out.push(SvrHyperparams::new(c, e, k).with_tol(self.tol));
                }
            }
        }
        out
    }
}

/// `folds` contiguous blocks whose sizes differ by at most one.
pub fn fold_partition(n: usize, folds: usize) -> Vec<Range<usize>> {
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    (0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvScore {
    pub hyperparams: SvrHyperparams,
    /// Mean over folds of the per-fold mean absolute error, per angle (radians).
    pub mae: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub best: [SvrHyperparams; 2],
    pub best_mae: [f64; 2],
    pub scores: Vec<CvScore>,
}

impl CvResult {
    pub fn best_for(&self, angle: Angle) -> &SvrHyperparams {
        &self.best[angle.index()]
    }
}

pub const CV_FOLDS: usize = 5;

/// Five-fold cross-validation over `grid`, entirely on sub-blocks of the
/// gram matrix. Folds are contiguous: the rows are already shuffled.
pub fn cross_validate(gram: &DenseMatrix, targets: &LabelVector, grid: &Grid) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::GridEmpty);
    }
    let n = targets.len();
    if n < CV_FOLDS {
        return Err(Error::TooFewSamples {
            needed: CV_FOLDS,
            got: n,
        });
    }
    if gram.rows() != n || gram.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "gram is {}x{}, {n} targets",
            gram.rows(),
            gram.cols()
        )));
    }
    let folds = fold_partition(n, CV_FOLDS);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = folds
        .iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|i| !f.contains(i)).collect();
            (train, f.clone().collect())
        })
        .collect();
    let angle_targets = [targets.pitch(), targets.yaw()];

    let mut scores = Vec::with_capacity(grid.len());
    for kernel in &grid.kernels {
        let k = kernel_from_gram(gram, kernel)?;
        let blocks: Vec<(DenseMatrix, DenseMatrix)> = splits
            .iter()
            .map(|(tr, va)| (k.select(tr, tr), k.select(va, tr)))
            .collect();
        drop(k);
        let mut points = Vec::new();
        for &c in &grid.cs {
            for &e in &grid.epsilons {
                points.push(SvrHyperparams::new(c, e, *kernel).with_tol(grid.tol));
            }
        }
        let kernel_scores: Vec<CvScore> = points
            .par_iter()
            .map(|hp| -> Result<CvScore> {
                let mut mae = [0.0; 2];
                for angle in Angle::BOTH {
                    let y = &angle_targets[angle.index()];
                    let mut total = 0.0;
                    for ((tr, va), (k_tr, k_va)) in splits.iter().zip(&blocks) {
                        let y_tr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
                        let model = train(k_tr, &y_tr, hp, angle)?;
                        let pred = predict_rows(&model, k_va)?;
                        let fold_mae = pred
                            .iter()
                            .zip(va)
                            .map(|(p, &i)| (p - y[i]).abs())
                            .sum::<f64>()
                            / va.len() as f64;
                        total += fold_mae;
                    }
                    mae[angle.index()] = total / splits.len() as f64;
                }
                Ok(CvScore {
                    hyperparams: *hp,
                    mae,
                })
            })
            .collect::<Result<_>>()?;
        scores.extend(kernel_scores);
    }

    let mut best = [scores[0].hyperparams; 2];
    let mut best_mae = [f64::INFINITY; 2];
    for s in &scores {
        for a in 0..2 {
            if s.mae[a] < best_mae[a] {
                best_mae[a] = s.mae[a];
                best[a] = s.hyperparams;
            }
        }
    }
    Ok(CvResult {
        best,
        best_mae,
        scores,
    })
}
