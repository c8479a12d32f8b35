//! Statistical privacy checks, oracle comparisons and benchmarks.
//!
//! The server's view of a session is the pair of SHARE_UPLOAD payloads. A
//! view audit fixes both parties' inputs, reruns the session many times with
//! fresh masks and tests every masked coordinate:
//!
//! * each byte position of each coordinate against uniform (chi-square,
//!   256 bins);
//! * each coordinate against a simulated view built from the gram entry
//!   alone (two-sample Kolmogorov-Smirnov).

use std::fmt::Write as _;
use std::time::Instant;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::encoding::{encode_mul, simulate_mul, MulRandomness};
use crate::error::{Error, Result};
use crate::eyegen::Dataset;
use crate::kernels::{kernel_block, kernel_from_gram};
use crate::matrix::DenseMatrix;
use crate::protocol::{plaintext_gram, shuffle_permutation, LabelVector, Role, ShareBundle};
use crate::ring::{ring_dot, FixedPointCodec, RingElement, RingRng};
use crate::svr::{
    cross_validate, mean_angular_error, predict_rows, train, Angle, Grid, SvrHyperparams,
};
use crate::transport::{
    decode_message, deserialize_frame, run_session, session_id_from_seed, Endpoint, Message,
    MessageType, PartyInput, RandomnessSource, SessionParams, Transcript, TransportKind,
};

pub const MIN_VIEW_TRIALS: usize = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Required fraction of passing coordinate tests.
pub const PASS_THRESHOLD: f64 = 0.95;

/// SplitMix64 step; derives independent child seeds from one seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// statistics

/// Pearson chi-square p-value for observed counts against a flat expectation.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    if k < 2 || total == 0 {
        return 0.0;
    }
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    ChiSquared::new((k - 1) as f64)
        .expect("positive degrees of freedom")
        .sf(stat)
}

/// Kolmogorov survival function `P(K > lambda)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS statistic and asymptotic p-value. Sorts both inputs.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> (f64, f64) {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return (1.0, 0.0);
    }
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    (d, kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d))
}

/// Maps a ring element onto `[0, 1)`.
#[inline]
pub fn unit_interval(e: RingElement) -> f64 {
    e.0 as f64 / 18_446_744_073_709_551_616.0
}

// ---------------------------------------------------------------------------
// view collection

/// The server's view over repeated sessions: one series per masked coordinate.
#[derive(Clone, Debug, Default)]
pub struct ViewSamples {
    pub names: Vec<String>,
    /// `series[c][t]` is coordinate `c` in trial `t`.
    pub series: Vec<Vec<RingElement>>,
    pub n_a: usize,
    pub n_b: usize,
    pub n_f: usize,
}

impl ViewSamples {
    pub fn trials(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    /// Extracts the masked coordinates from transcripts recorded with full
    /// frames. Coordinates are `C1[j][k]`, `C3[j]` from Alice and `C2[j][k]`,
    /// `C4[j]` from Bob.
    pub fn from_transcripts(transcripts: &[Transcript]) -> Result<Self> {
        let mut out = ViewSamples::default();
        for (t, tr) in transcripts.iter().enumerate() {
            let mut left = None;
            let mut right = None;
            for entry in tr.view_of(Endpoint::Server) {
                if entry.msg_type != MessageType::ShareUpload {
                    continue;
                }
                let bytes = entry.frame.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("transcript was recorded without frames".into())
                })?;
                let frame = deserialize_frame(bytes)?;
                let bundle = match decode_message(frame.msg_type, &frame.payload)? {
                    Message::ShareUpload(b) => b,
                    _ => unreachable!("frame type checked above"),
                };
                match bundle.role {
                    Role::Left => left = Some(bundle),
                    Role::Right => right = Some(bundle),
                }
            }
            let (left, right) = match (left, right) {
                (Some(l), Some(r)) => (l, r),
                _ => {
                    return Err(Error::Protocol(format!(
                        "transcript {t} lacks one of the two uploads"
                    )))
                }
            };
            if t == 0 {
                out.n_a = left.n();
                out.n_b = right.n();
                out.n_f = left.n_f();
                out.names = coordinate_names(&left, &right);
                out.series = vec![Vec::with_capacity(transcripts.len()); out.names.len()];
            } else if left.n() != out.n_a || right.n() != out.n_b || left.n_f() != out.n_f {
                return Err(Error::DimensionMismatch(format!(
                    "transcript {t} has a different shape"
                )));
            }
            for (series, v) in out
                .series
                .iter_mut()
                .zip(flatten(&left).chain(flatten(&right)))
            {
                series.push(v);
            }
        }
        Ok(out)
    }

    fn c1(&self, j: usize, k: usize) -> &[RingElement] {
        &self.series[j * self.n_f + k]
    }

    fn c3(&self, j: usize) -> &[RingElement] {
        &self.series[self.n_a * self.n_f + j]
    }

    fn c2(&self, j: usize, k: usize) -> &[RingElement] {
        &self.series[self.n_a * (self.n_f + 1) + j * self.n_f + k]
    }

    fn c4(&self, j: usize) -> &[RingElement] {
        &self.series[self.n_a * (self.n_f + 1) + self.n_b * self.n_f + j]
    }
}

fn coordinate_names(left: &ShareBundle, right: &ShareBundle) -> Vec<String> {
    let mut names = Vec::new();
    for (b, m, s) in [(left, "C1", "C3"), (right, "C2", "C4")] {
        for j in 0..b.n() {
            for k in 0..b.n_f() {
                names.push(format!("{m}[{j}][{k}]"));
            }
        }
        for j in 0..b.n() {
            names.push(format!("{s}[{j}]"));
        }
    }
    names
}

fn flatten(b: &ShareBundle) -> impl Iterator<Item = RingElement> + '_ {
    b.masked_matrix
        .iter()
        .flatten()
        .copied()
        .chain(b.masked_scalars.iter().copied())
}

/// Fresh masks for every trial, or the all-zero test hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewRandomness {
    Fresh { seed: u64 },
    Zero,
}

/// Runs `trials` in-process sessions on fixed inputs and returns the
/// server-side masked coordinates of each.
pub fn collect_server_views(
    alice: &PartyInput,
    bob: &PartyInput,
    trials: usize,
    randomness: ViewRandomness,
    codec: FixedPointCodec,
) -> Result<(ViewSamples, DenseMatrix)> {
    let params = SessionParams {
        codec,
        ..SessionParams::default()
    };
    let mut transcripts = Vec::with_capacity(trials);
    let mut gram = None;
    for t in 0..trials {
        let source = match randomness {
            ViewRandomness::Fresh { seed } => RandomnessSource::Seeded(derive_seed(seed, t as u64)),
            ViewRandomness::Zero => RandomnessSource::Zero,
        };
        let out = run_session(TransportKind::InProcess, alice, source, bob, &params, true)?;
        gram.get_or_insert(out.server.gram.k);
        transcripts.push(out.transcript);
    }
    let gram = gram.ok_or(Error::InsufficientTrials { needed: 1, got: 0 })?;
    Ok((ViewSamples::from_transcripts(&transcripts)?, gram))
}

// ---------------------------------------------------------------------------
// view tests

#[derive(Clone, Debug, PartialEq)]
pub struct TestReport {
    pub name: &'static str,
    pub tests: usize,
    pub passed: usize,
    pub alpha: f64,
    /// Coordinates (or coordinate/byte pairs) that failed.
    pub failures: Vec<String>,
}

impl TestReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.tests == 0 {
            0.0
        } else {
            self.passed as f64 / self.tests as f64
        }
    }

    pub fn passes(&self) -> bool {
        self.pass_fraction() >= PASS_THRESHOLD
    }

    /// True when the masked view is distinguishable from uniform.
    pub fn leak_flagged(&self) -> bool {
        !self.passes()
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {}/{} tests pass at alpha={} ({:.4}){}",
            self.name,
            self.passed,
            self.tests,
            self.alpha,
            self.pass_fraction(),
            if self.leak_flagged() {
                " LEAK FLAGGED"
            } else {
                ""
            }
        )
    }
}

/// Chi-square uniformity of every byte of every masked coordinate.
pub fn check_view_uniformity(views: &ViewSamples, alpha: f64) -> Result<TestReport> {
    let trials = views.trials();
    if trials < MIN_VIEW_TRIALS {
        return Err(Error::InsufficientTrials {
            needed: MIN_VIEW_TRIALS,
            got: trials,
        });
    }
    let mut report = TestReport {
        name: "view uniformity",
        tests: 0,
        passed: 0,
        alpha,
        failures: Vec::new(),
    };
    for (name, series) in views.names.iter().zip(&views.series) {
        let mut counts = [[0u64; 256]; 8];
        for e in series {
            for (byte, c) in e.0.to_le_bytes().iter().zip(counts.iter_mut()) {
                c[*byte as usize] += 1;
            }
        }
        for (pos, c) in counts.iter().enumerate() {
            report.tests += 1;
            if chi_square_uniform_p(c) > alpha {
                report.passed += 1;
            } else {
                report.failures.push(format!("{name} byte {pos}"));
            }
        }
    }
    Ok(report)
}

/// Compares each coordinate of the real view with a view simulated from the
/// cross-block gram entries alone: `C1', C2', C3'` uniform and `C4'` fixed
/// by `<C1', C2'> - C3' - C4' = K[i][n_a + j]`. One comparison per
/// (Alice column, Bob column) pair.
pub fn compare_with_simulator(
    views: &ViewSamples,
    gram: &DenseMatrix,
    codec: &FixedPointCodec,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    let trials = views.trials();
    if trials < MIN_VIEW_TRIALS {
        return Err(Error::InsufficientTrials {
            needed: MIN_VIEW_TRIALS,
            got: trials,
        });
    }
    let (n_a, n_b, n_f) = (views.n_a, views.n_b, views.n_f);
    if gram.rows() != n_a + n_b {
        return Err(Error::DimensionMismatch(format!(
            "gram has {} rows, views cover {} samples",
            gram.rows(),
            n_a + n_b
        )));
    }
    let mut rng = RingRng::seeded(seed);
    let mut report = TestReport {
        name: "simulator KS",
        tests: 0,
        passed: 0,
        alpha,
        failures: Vec::new(),
    };
    for i in 0..n_a {
        for j in 0..n_b {
            let y = codec.encode_product(gram.get(i, n_a + j))?;
            let mut sim: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); 2 * n_f + 2];
            for _ in 0..trials {
                let c1 = rng.sample_vec(n_f)?;
                let c2 = rng.sample_vec(n_f)?;
                let c3 = rng.sample_uniform()?;
                let c4 = ring_dot(&c1, &c2) - c3 - y;
                for k in 0..n_f {
                    sim[k].push(unit_interval(c1[k]));
                    sim[n_f + k].push(unit_interval(c2[k]));
                }
                sim[2 * n_f].push(unit_interval(c3));
                sim[2 * n_f + 1].push(unit_interval(c4));
            }
            let real: Vec<(&[RingElement], String)> = (0..n_f)
                .map(|k| (views.c1(i, k), format!("C1[{i}][{k}]")))
                .chain((0..n_f).map(|k| (views.c2(j, k), format!("C2[{j}][{k}]"))))
                .chain([
                    (views.c3(i), format!("C3[{i}]")),
                    (views.c4(j), format!("C4[{j}]")),
                ])
                .collect();
            for ((series, name), mut s) in real.into_iter().zip(sim) {
                let mut r: Vec<f64> = series.iter().map(|e| unit_interval(*e)).collect();
                let (_, p) = ks_two_sample(&mut r, &mut s);
                report.tests += 1;
                if p > alpha {
                    report.passed += 1;
                } else {
                    report.failures.push(format!("pair ({i},{j}) {name}"));
                }
            }
        }
    }
    Ok(report)
}

/// Real `encode_mul` outputs on fixed inputs against `simulate_mul` outputs,
/// per component and for sums and products of every component pair.
pub fn compare_mul_simulator(
    inputs: &[(RingElement, RingElement)],
    trials: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    let mut rng = RingRng::seeded(seed);
    let mut report = TestReport {
        name: "multiplication simulator KS",
        tests: 0,
        passed: 0,
        alpha,
        failures: Vec::new(),
    };
    let stats = |c: [RingElement; 4]| -> Vec<f64> {
        let mut v: Vec<f64> = c.iter().map(|e| unit_interval(*e)).collect();
        for a in 0..4 {
            for b in a + 1..4 {
                v.push(unit_interval(c[a] + c[b]));
                v.push(unit_interval(c[a] * c[b]));
            }
        }
        v
    };
    for &(x1, x2) in inputs {
        let y = x1 * x2;
        let mut real: Vec<Vec<f64>> = (0..16).map(|_| Vec::with_capacity(trials)).collect();
        let mut sim: Vec<Vec<f64>> = (0..16).map(|_| Vec::with_capacity(trials)).collect();
        for _ in 0..trials {
            let enc = encode_mul(x1, x2, MulRandomness::sample(&mut rng)?);
            let s = simulate_mul(
                y,
                rng.sample_uniform()?,
                rng.sample_uniform()?,
                rng.sample_uniform()?,
            );
            for (dst, v) in real.iter_mut().zip(stats(enc.components())) {
                dst.push(v);
            }
            for (dst, v) in sim.iter_mut().zip(stats(s.components())) {
                dst.push(v);
            }
        }
        for (idx, (mut r, mut s)) in real.into_iter().zip(sim).enumerate() {
            let (_, p) = ks_two_sample(&mut r, &mut s);
            report.tests += 1;
            if p > alpha {
                report.passed += 1;
            } else {
                report
                    .failures
                    .push(format!("x=({}, {}) statistic {idx}", x1.0, x2.0));
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// equivalence

/// Seeds for one protocol run, all derived from a single seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub alice_shuffle: u64,
    pub bob_shuffle: u64,
    pub masks: u64,
    pub session: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64) -> Self {
        RunSeeds {
            alice_shuffle: derive_seed(seed, 1),
            bob_shuffle: derive_seed(seed, 2),
            masks: derive_seed(seed, 3),
            session: derive_seed(seed, 4),
        }
    }
}

/// First half of the samples to Alice, the rest to Bob.
pub fn split_parties(data: &Dataset, seeds: &RunSeeds) -> (PartyInput, PartyInput) {
    let n_a = data.len() - data.len() / 2;
    let a = data.slice(0..n_a);
    let b = data.slice(n_a..data.len());
    (
        PartyInput {
            samples: a.features,
            labels: a.labels,
            shuffle_seed: seeds.alice_shuffle,
        },
        PartyInput {
            samples: b.features,
            labels: b.labels,
            shuffle_seed: seeds.bob_shuffle,
        },
    )
}

/// Quantized features in the order the server sees them: Alice's shuffled
/// block, then Bob's.
pub fn pooled_plaintext(
    alice: &PartyInput,
    bob: &PartyInput,
    codec: &FixedPointCodec,
) -> Result<(Vec<Vec<f64>>, LabelVector)> {
    let mut features = Vec::with_capacity(alice.samples.len() + bob.samples.len());
    let mut targets = Vec::with_capacity(features.capacity());
    for p in [alice, bob] {
        for i in shuffle_permutation(p.samples.len(), p.shuffle_seed) {
            let q = p.samples[i]
                .iter()
                .map(|&x| codec.quantize(x))
                .collect::<Result<Vec<f64>>>()?;
            features.push(q);
            targets.push(p.labels.targets[i]);
        }
    }
    Ok((features, LabelVector::new(targets)))
}

/// Runs the protocol on a 50/50 split and returns `max |K_private - K_plain|`.
pub fn check_gram_equivalence(
    data: &Dataset,
    seed: u64,
    randomness: RandomnessSource,
    codec: FixedPointCodec,
) -> Result<f64> {
    let seeds = RunSeeds::derive(seed);
    let (alice, bob) = split_parties(data, &seeds);
    let params = SessionParams {
        session_id: session_id_from_seed(seeds.session),
        codec,
        ..SessionParams::default()
    };
    let out = run_session(
        TransportKind::InProcess,
        &alice,
        randomness,
        &bob,
        &params,
        false,
    )?;
    let (plain, labels) = pooled_plaintext(&alice, &bob, &codec)?;
    if labels != out.server.labels {
        return Err(Error::Protocol(
            "pooled labels disagree with the server's".into(),
        ));
    }
    Ok(out.server.gram.k.max_abs_diff(&plaintext_gram(&plain)))
}

// ---------------------------------------------------------------------------
// benchmark

#[derive(Clone, Debug)]
pub enum HyperparamChoice {
    Fixed {
        pitch: SvrHyperparams,
        yaw: SvrHyperparams,
    },
    /// Cross-validated once per size on the first run's training block.
    CrossValidate(Grid),
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub frac_bits: u32,
    pub hyperparams: HyperparamChoice,
    pub repetitions: usize,
    pub warmup: bool,
    pub seed: u64,
    pub transport: TransportKind,
    /// Let rayon use every core; otherwise the measured path is single-threaded.
    pub parallel: bool,
    /// Also train on the plaintext gram and report its MAE.
    pub plaintext_check: bool,
    pub test_fraction: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            frac_bits: FixedPointCodec::default().frac_bits(),
            hyperparams: HyperparamChoice::CrossValidate(Grid::default_rbf()),
            repetitions: 10,
            warmup: true,
            seed: 0,
            transport: TransportKind::InProcess,
            parallel: false,
            plaintext_check: true,
            test_fraction: 0.2,
        }
    }
}

/// One measured run. Times are seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub repetition: usize,
    pub alice_encode: f64,
    pub bob_encode: f64,
    pub server_assemble: f64,
    pub server_train: f64,
    pub server_predict_total: f64,
    pub per_sample_predict_ms: f64,
    pub protocol_bytes: u64,
    pub auxiliary_bytes: u64,
    pub mae_private: f64,
    pub mae_plaintext: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub n_f: usize,
    pub n_test: usize,
    pub frac_bits: u32,
    pub hyperparams: [SvrHyperparams; 2],
    pub gram_checksum: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stat {
            mean,
            std: var.sqrt(),
        }
    }
}

/// All runs for one dataset size.
#[derive(Clone, Debug)]
pub struct BenchSummary {
    pub size: usize,
    pub runs: Vec<BenchReport>,
}

impl BenchSummary {
    pub fn stat(&self, f: impl Fn(&BenchReport) -> f64) -> Stat {
        Stat::of(&self.runs.iter().map(f).collect::<Vec<_>>())
    }
}

/// Training/test split of the pooled server-side order: the last
/// `test_fraction` of each party's block is held out.
pub fn holdout_indices(n_a: usize, n_b: usize, test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (offset, n) in [(0, n_a), (n_a, n_b)] {
        let n_test = ((n as f64) * test_fraction).round() as usize;
        let n_train = n - n_test.min(n);
        train.extend(offset..offset + n_train);
        test.extend(offset + n_train..offset + n);
    }
    (train, test)
}

/// Trains both angle models on the `train` rows of `gram` and predicts the
/// `test` rows. Returns predictions and (train, predict) seconds.
pub fn fit_and_predict(
    gram: &DenseMatrix,
    labels: &LabelVector,
    train_idx: &[usize],
    test_idx: &[usize],
    hp: &[SvrHyperparams; 2],
) -> Result<(Vec<[f64; 2]>, f64, f64)> {
    let train_labels = labels.select(train_idx);
    let g_train = gram.select(train_idx, train_idx);
    let mut train_secs = 0.0;
    let mut predict_secs = 0.0;
    let mut pred = vec![[0.0; 2]; test_idx.len()];
    for angle in Angle::BOTH {
        let a = angle.index();
        let t = Instant::now();
        let k = kernel_from_gram(&g_train, &hp[a].kernel)?;
        let model = train(&k, &train_labels.angle(a), &hp[a], angle)?;
        train_secs += t.elapsed().as_secs_f64();
        drop(k);
        let t = Instant::now();
        let k_test = kernel_block(gram, test_idx, train_idx, &hp[a].kernel)?;
        let p = predict_rows(&model, &k_test)?;
        predict_secs += t.elapsed().as_secs_f64();
        for (dst, v) in pred.iter_mut().zip(p) {
            dst[a] = v;
        }
    }
    Ok((pred, train_secs, predict_secs))
}

fn bench_once(
    data: &Dataset,
    cfg: &BenchConfig,
    repetition: usize,
    hp: &mut Option<[SvrHyperparams; 2]>,
) -> Result<BenchReport> {
    let codec = FixedPointCodec::new(cfg.frac_bits);
    let seeds = RunSeeds::derive(derive_seed(cfg.seed, repetition as u64));
    let (alice, bob) = split_parties(data, &seeds);
    let params = SessionParams {
        session_id: session_id_from_seed(seeds.session),
        codec,
        ..SessionParams::default()
    };
    let out = run_session(
        cfg.transport,
        &alice,
        RandomnessSource::Seeded(seeds.masks),
        &bob,
        &params,
        false,
    )?;
    let n_a = alice.samples.len();
    let n_b = bob.samples.len();
    let (train_idx, test_idx) = holdout_indices(n_a, n_b, cfg.test_fraction);
    if test_idx.is_empty() || train_idx.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: train_idx.len(),
        });
    }
    let gram = &out.server.gram.k;
    let labels = &out.server.labels;
    let hp = match hp {
        Some(h) => *h,
        None => {
            let chosen = match &cfg.hyperparams {
                HyperparamChoice::Fixed { pitch, yaw } => [*pitch, *yaw],
                HyperparamChoice::CrossValidate(grid) => {
                    let g = gram.select(&train_idx, &train_idx);
                    let cv = cross_validate(&g, &labels.select(&train_idx), grid)?;
                    cv.best
                }
            };
            *hp = Some(chosen);
            chosen
        }
    };
    let truth = labels.select(&test_idx).targets;
    let (pred, train_secs, predict_secs) =
        fit_and_predict(gram, labels, &train_idx, &test_idx, &hp)?;
    let mae_private = mean_angular_error(&pred, &truth)?;

    let mae_plaintext = if cfg.plaintext_check {
        let (plain, plain_labels) = pooled_plaintext(&alice, &bob, &codec)?;
        let g = plaintext_gram(&plain);
        let (p, _, _) = fit_and_predict(&g, &plain_labels, &train_idx, &test_idx, &hp)?;
        Some(mean_angular_error(
            &p,
            &plain_labels.select(&test_idx).targets,
        )?)
    } else {
        None
    };

    Ok(BenchReport {
        repetition,
        alice_encode: out.alice.encode_time.as_secs_f64(),
        bob_encode: out.bob.encode_time.as_secs_f64(),
        server_assemble: out.server.assemble_time.as_secs_f64(),
        server_train: train_secs,
        server_predict_total: predict_secs,
        per_sample_predict_ms: predict_secs * 1000.0 / test_idx.len() as f64,
        protocol_bytes: out.protocol_bytes(),
        auxiliary_bytes: out.auxiliary_bytes(),
        mae_private,
        mae_plaintext,
        n_a,
        n_b,
        n_f: data.n_f(),
        n_test: test_idx.len(),
        frac_bits: cfg.frac_bits,
        hyperparams: hp,
        gram_checksum: out.server.gram.checksum(),
    })
}

fn bench_size(data: &Dataset, cfg: &BenchConfig) -> Result<BenchSummary> {
    let mut hp = None;
    if cfg.warmup {
        bench_once(data, cfg, usize::MAX, &mut hp)?;
    }
    let runs = (0..cfg.repetitions.max(1))
        .map(|r| bench_once(data, cfg, r, &mut hp))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchSummary {
        size: data.len(),
        runs,
    })
}

/// Generates one dataset per size (seeded from `cfg.seed`) and measures it.
pub fn run_benchmark(
    sizes: &[usize],
    params: &crate::eyegen::EyeModelParams,
    cfg: &BenchConfig,
) -> Result<Vec<BenchSummary>> {
    if sizes.is_empty() {
        return Err(Error::InvalidConfig(
            "benchmark needs at least one size".into(),
        ));
    }
    let run = || {
        sizes
            .iter()
            .map(|&n| {
                let data = crate::eyegen::generate_dataset(n, params)?;
                bench_size(&data, cfg)
            })
            .collect::<Result<Vec<_>>>()
    };
    if cfg.parallel {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run)
    }
}

pub const CSV_HEADER: &str = "size,repetition,n_a,n_b,n_f,n_test,frac_bits,\
pitch_kernel,pitch_c,pitch_epsilon,yaw_kernel,yaw_c,yaw_epsilon,\
alice_encode_s,bob_encode_s,server_assemble_s,server_train_s,server_predict_total_s,\
per_sample_predict_ms,protocol_bytes,auxiliary_bytes,mae_private_deg,mae_plaintext_deg,gram_checksum";

fn kernel_label(hp: &SvrHyperparams) -> String {
    match hp.kernel {
        crate::kernels::KernelConfig::Linear => "linear".into(),
        crate::kernels::KernelConfig::Polynomial { degree, offset } => {
            format!("poly(d={degree};c={offset})")
        }
        crate::kernels::KernelConfig::Rbf { gamma } => format!("rbf(gamma={gamma})"),
    }
}

/// One CSV row per run, header first.
pub fn reports_to_csv(summaries: &[BenchSummary]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for sum in summaries {
        for r in &sum.runs {
            let [p, y] = &r.hyperparams;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{:.6},{},{}",
                sum.size,
                r.repetition,
                r.n_a,
                r.n_b,
                r.n_f,
                r.n_test,
                r.frac_bits,
                kernel_label(p),
                p.c,
                p.epsilon,
                kernel_label(y),
                y.c,
                y.epsilon,
                r.alice_encode,
                r.bob_encode,
                r.server_assemble,
                r.server_train,
                r.server_predict_total,
                r.per_sample_predict_ms,
                r.protocol_bytes,
                r.auxiliary_bytes,
                r.mae_private,
                r.mae_plaintext.map_or(String::new(), |m| format!("{m:.6}")),
                r.gram_checksum,
            );
        }
    }
    s
}

/// Mean ± standard deviation per size.
pub fn reports_to_table(summaries: &[BenchSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>7} {:>5} {:>17} {:>17} {:>17} {:>17} {:>17} {:>14} {:>14} {:>13}",
        "size",
        "runs",
        "alice enc (s)",
        "bob enc (s)",
        "assemble (s)",
        "train (s)",
        "predict (s)",
        "ms/sample",
        "proto bytes",
        "MAE (deg)"
    );
    for sum in summaries {
        let pm = |st: Stat| format!("{:.4}±{:.4}", st.mean, st.std);
        let mae = sum.stat(|r| r.mae_private);
        let _ = writeln!(
            s,
            "{:>7} {:>5} {:>17} {:>17} {:>17} {:>17} {:>17} {:>14.4} {:>14} {:>13}",
            sum.size,
            sum.runs.len(),
            pm(sum.stat(|r| r.alice_encode)),
            pm(sum.stat(|r| r.bob_encode)),
            pm(sum.stat(|r| r.server_assemble)),
            pm(sum.stat(|r| r.server_train)),
            pm(sum.stat(|r| r.server_predict_total)),
            sum.stat(|r| r.per_sample_predict_ms).mean,
            sum.runs.first().map_or(0, |r| r.protocol_bytes),
            format!("{:.4}±{:.4}", mae.mean, mae.std),
        );
    }
    s
}

/// Per-run equality of private and plaintext MAE.
pub fn plaintext_matches(report: &BenchReport) -> bool {
    report.mae_plaintext == Some(report.mae_private)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eyegen::{generate_dataset, EyeModelParams};
    use crate::kernels::KernelConfig;

    #[test]
    fn chi_square_flat_and_skewed() {
        assert!(chi_square_uniform_p(&[100; 256]) > 0.99);
        let mut skew = [100u64; 256];
        skew[0] = 400;
        assert!(chi_square_uniform_p(&skew) < 1e-6);
        assert_eq!(chi_square_uniform_p(&[0; 4]), 0.0);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let mut a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let mut b = a.clone();
        let (d, p) = ks_two_sample(&mut a, &mut b);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let mut c: Vec<f64> = a.iter().map(|x| x + 0.2).collect();
        let (d, p) = ks_two_sample(&mut a, &mut c);
        assert!((d - 0.2).abs() < 2e-3, "{d}");
        assert!(p < 1e-10);
    }

    #[test]
    fn kolmogorov_critical_value() {
        // 1.628 is the 1% point of the Kolmogorov distribution
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
    }

    #[test]
    fn derive_seed_distinct() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(5, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn holdout_split() {
        let (train, test) = holdout_indices(10, 5, 0.2);
        assert_eq!(train, vec![0, 1, 2, 3, 4, 5, 6, 7, 10, 11, 12, 13]);
        assert_eq!(test, vec![8, 9, 14]);
    }

    #[test]
    fn too_few_trials() {
        let views = ViewSamples {
            names: vec!["C3[0]".into()],
            series: vec![vec![RingElement(0); 10]],
            n_a: 1,
            n_b: 0,
            n_f: 0,
        };
        assert!(matches!(
            check_view_uniformity(&views, DEFAULT_ALPHA),
            Err(Error::InsufficientTrials { .. })
        ));
    }

    #[test]
    fn gram_equivalence_small() {
        let data = generate_dataset(40, &EyeModelParams::with_seed(4)).unwrap();
        let codec = FixedPointCodec::default();
        for src in [
            RandomnessSource::Seeded(1),
            RandomnessSource::Zero,
            RandomnessSource::Os,
        ] {
            assert_eq!(check_gram_equivalence(&data, 9, src, codec).unwrap(), 0.0);
        }
    }

    #[test]
    fn smoke_benchmark() {
        let hp = SvrHyperparams::new(1.0, 0.01, KernelConfig::rbf(1.0));
        let cfg = BenchConfig {
            hyperparams: HyperparamChoice::Fixed { pitch: hp, yaw: hp },
            repetitions: 2,
            ..BenchConfig::default()
        };
        let t = Instant::now();
        let out = run_benchmark(&[10, 20], &EyeModelParams::with_seed(1), &cfg).unwrap();
        assert!(t.elapsed().as_secs_f64() < 1.0);
        assert_eq!(out.len(), 2);
        assert!(out[0].runs[0].protocol_bytes < out[1].runs[0].protocol_bytes);
        for s in &out {
            for r in &s.runs {
                assert!(plaintext_matches(r));
                assert_eq!(
                    r.per_sample_predict_ms,
                    r.server_predict_total * 1000.0 / r.n_test as f64
                );
            }
        }
        let csv = reports_to_csv(&out);
        assert_eq!(csv.lines().count(), 5);
        let cols = CSV_HEADER.split(',').count();
        assert!(csv.lines().all(|l| l.split(',').count() == cols));
        assert_eq!(reports_to_table(&out).lines().count(), 3);
    }
}
