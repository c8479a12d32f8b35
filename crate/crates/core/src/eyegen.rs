//! Synthetic eye landmarks with known gaze.
//!
//! A sphere of radius `R` is viewed orthographically along `-z`. The iris is
//! a disc of radius `r` on the sphere surface, centred in the gaze direction.
//! Eyelids are two parabolic arcs through the corners `(±w, 0)`; the upper
//! one drops as the eye looks down. Everything is divided by the corner
//! distance `2w`.
//!
//! Feature layout (36 values):
//!
//! | index  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..16  | 8 iris-edge points `(x, y)`               |
//! | 16..24 | 4 upper-eyelid points, left to right      |
//! | 24..32 | 4 lower-eyelid points, left to right      |
//! | 32..34 | iris centre                               |
//! | 34..36 | eyeball centre minus iris centre          |

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::protocol::LabelVector;

pub const N_FEATURES: usize = 36;
pub const IRIS_POINTS: usize = 8;
pub const LID_POINTS_PER_ARC: usize = 4;
/// ±30° in radians.
pub const MAX_ANGLE: f64 = 30.0 * PI / 180.0;

const LID_X: [f64; LID_POINTS_PER_ARC] = [-0.6, -0.2, 0.2, 0.6];
const LOWER_LID_RATIO: f64 = 0.5;
const ANGLE_SLACK: f64 = 1e-12;

pub const DATASET_MAGIC: &[u8; 4] = b"REKD";
pub const DATASET_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EyeModelParams {
    pub eyeball_radius: f64,
    pub iris_radius: f64,
    /// Upper-lid apex height at zero pitch, as a fraction of the eyeball radius.
    pub eyelid_openness_base: f64,
    pub corner_half_width: f64,
    pub landmark_noise_std: f64,
    pub seed: u64,
}

impl Default for EyeModelParams {
    fn default() -> Self {
        EyeModelParams {
            eyeball_radius: 12.0,
            iris_radius: 4.8,
            eyelid_openness_base: 0.8,
            corner_half_width: 11.0,
            landmark_noise_std: 0.0,
            seed: 0,
        }
    }
}

impl EyeModelParams {
    pub fn with_seed(seed: u64) -> Self {
        EyeModelParams {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.eyeball_radius)
            || !positive(self.iris_radius)
            || !positive(self.corner_half_width)
        {
            return Err(Error::InvalidConfig("eye model radii must be > 0".into()));
        }
        if self.iris_radius >= self.eyeball_radius {
            return Err(Error::InvalidConfig(format!(
                "iris radius {} must be below eyeball radius {}",
                self.iris_radius, self.eyeball_radius
            )));
        }
        if !(self.eyelid_openness_base >= 0.0 && self.eyelid_openness_base.is_finite()) {
            return Err(Error::InvalidConfig("eyelid openness must be >= 0".into()));
        }
        if !(self.landmark_noise_std >= 0.0 && self.landmark_noise_std.is_finite()) {
            return Err(Error::InvalidConfig("noise std must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSample {
    pub features: [f64; N_FEATURES],
    pub pitch: f64,
    pub yaw: f64,
}

/// Unit gaze vector; forward is `-z`, positive pitch looks down the `-y` axis.
pub fn angles_to_gaze(pitch: f64, yaw: f64) -> [f64; 3] {
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    [-cp * sy, -sp, -cp * cy]
}

fn check_angle(a: f64) -> Result<()> {
    if !a.is_finite() || a.abs() > MAX_ANGLE + ANGLE_SLACK {
        return Err(Error::OutOfRange {
            value: a,
            bound: MAX_ANGLE,
        });
    }
    Ok(())
}

/// Landmarks for one gaze direction. Noise, if any, is drawn from a
/// generator seeded with `params.seed`.
pub fn synthesize_sample(pitch: f64, yaw: f64, params: &EyeModelParams) -> Result<LandmarkSample> {
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    synthesize_with_rng(pitch, yaw, params, &mut rng)
}

fn synthesize_with_rng(
    pitch: f64,
    yaw: f64,
    params: &EyeModelParams,
    rng: &mut ChaCha20Rng,
) -> Result<LandmarkSample> {
    params.validate()?;
    check_angle(pitch)?;
    check_angle(yaw)?;
    let big_r = params.eyeball_radius;
    let r = params.iris_radius;
    let w = params.corner_half_width;
    let g = angles_to_gaze(pitch, yaw);
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();

    let mut raw = [0.0; N_FEATURES];

    // Iris rim: circle of radius r in the plane orthogonal to g, at depth
    // sqrt(R^2 - r^2) along g. u and v span that plane.
    let depth = (big_r * big_r - r * r).sqrt();
    let u = [cy, 0.0, -sy];
    let v = [sp * sy, -cp, sp * cy];
    for k in 0..IRIS_POINTS {
        let (s, c) = (2.0 * PI * k as f64 / IRIS_POINTS as f64).sin_cos();
        raw[2 * k] = depth * g[0] + r * (c * u[0] + s * v[0]);
        raw[2 * k + 1] = depth * g[1] + r * (c * u[1] + s * v[1]);
    }

    let upper_apex = params.eyelid_openness_base * big_r * (1.0 - 0.3 * sp);
    let lower_apex = -LOWER_LID_RATIO * params.eyelid_openness_base * big_r;
    for (arc, apex) in [upper_apex, lower_apex].into_iter().enumerate() {
        for (k, t) in LID_X.iter().enumerate() {
            let at = 16 + 8 * arc + 2 * k;
            raw[at] = t * w;
            raw[at + 1] = apex * (1.0 - t * t);
        }
    }

    raw[32] = big_r * g[0];
    raw[33] = big_r * g[1];
    raw[34] = -raw[32];
    raw[35] = -raw[33];

    if params.landmark_noise_std > 0.0 {
        let normal = Normal::new(0.0, params.landmark_noise_std)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for x in raw.iter_mut() {
            *x += normal.sample(rng);
        }
    }

    let scale = 2.0 * w;
    let mut features = [0.0; N_FEATURES];
    for (f, x) in features.iter_mut().zip(raw) {
        *f = x / scale;
    }
    Ok(LandmarkSample {
        features,
        pitch,
        yaw,
    })
}

/// Generator for sample `index`; independent of how many samples precede it.
fn sample_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: LabelVector,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: LabelVector) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            let n_f = first.len();
            if features.iter().any(|f| f.len() != n_f) {
                return Err(Error::DimensionMismatch("ragged feature rows".into()));
            }
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_f(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            features: self.features[range.clone()].to_vec(),
            labels: LabelVector::new(self.labels.targets[range].to_vec()),
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.n_f() as u64).to_le_bytes())?;
        for (f, t) in self.features.iter().zip(&self.labels.targets) {
            for x in f.iter().chain(t) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let mut b2 = [0u8; 2];
        read_exact(&mut r, &mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != DATASET_VERSION {
            return Err(Error::Malformed(format!(
                "unsupported dataset version {version}"
            )));
        }
        let n = read_u64(&mut r)? as usize;
        let n_f = read_u64(&mut r)? as usize;
        if n_f > 1 << 20 {
            return Err(Error::Malformed(format!("implausible feature count {n_f}")));
        }
        let mut features = Vec::new();
        let mut targets = Vec::new();
        let mut record = vec![0u8; (n_f + 2) * 8];
        for _ in 0..n {
            read_exact(&mut r, &mut record)?;
            let vals: Vec<f64> = record
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            targets.push([vals[n_f], vals[n_f + 1]]);
            features.push(vals[..n_f].to_vec());
        }
        let mut tail = [0u8; 1];
        if r.read(&mut tail)? != 0 {
            return Err(Error::LengthMismatch(
                "trailing bytes after dataset records".into(),
            ));
        }
        Dataset::new(features, LabelVector::new(targets))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::read_from(File::open(path)?)
    }

    /// One row per sample: features `f0..`, then `pitch,yaw` in radians.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let mut header: Vec<String> = (0..self.n_f()).map(|i| format!("f{i}")).collect();
        header.push("pitch".into());
        header.push("yaw".into());
        writeln!(w, "{}", header.join(","))?;
        for (f, t) in self.features.iter().zip(&self.labels.targets) {
            let row: Vec<String> = f.iter().chain(t).map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// SHA-256 of the binary encoding, hex.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut bytes = Vec::new();
        self.write_to(&mut bytes).expect("writing to memory");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated {
            needed: buf.len(),
            available: 0,
        },
        _ => Error::Io(e),
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// `n` samples with pitch and yaw uniform in ±30°. Sample `i` depends only
/// on `(params.seed, i)`.
pub fn generate_dataset(n: usize, params: &EyeModelParams) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    params.validate()?;
    let samples: Vec<LandmarkSample> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(params.seed, i as u64);
            let pitch = rng.random_range(-MAX_ANGLE..=MAX_ANGLE);
            let yaw = rng.random_range(-MAX_ANGLE..=MAX_ANGLE);
            synthesize_with_rng(pitch, yaw, params, &mut rng)
        })
        .collect::<Result<_>>()?;
    let labels = LabelVector::new(samples.iter().map(|s| [s.pitch, s.yaw]).collect());
    let features = samples.into_iter().map(|s| s.features.to_vec()).collect();
    Dataset::new(features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Uniform};

    const DEG: f64 = PI / 180.0;

    fn plain(pitch: f64, yaw: f64) -> [f64; N_FEATURES] {
        synthesize_sample(pitch, yaw, &EyeModelParams::default())
            .unwrap()
            .features
    }

    #[test]
    fn gaze_examples() {
        assert_eq!(angles_to_gaze(0.0, 0.0), [-0.0, -0.0, -1.0]);
        let g = angles_to_gaze(30.0 * DEG, 0.0);
        assert!(g[0].abs() < 1e-15);
        assert!((g[1] + 0.5).abs() < 1e-12);
        assert!((g[2] + 0.8660254).abs() < 1e-7);
        for (p, y) in [(0.3, -1.1), (-2.0, 0.4), (1e-3, 3.0)] {
            let g = angles_to_gaze(p, y);
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_gaze_is_centred() {
        let f = plain(0.0, 0.0);
        assert_eq!(&f[32..36], &[0.0; 4]);
        for arc in 0..2 {
            for k in 0..LID_POINTS_PER_ARC {
                let a = 16 + 8 * arc + 2 * k;
                let b = 16 + 8 * arc + 2 * (LID_POINTS_PER_ARC - 1 - k);
                assert_eq!(f[a], -f[b]);
                assert_eq!(f[a + 1], f[b + 1]);
            }
        }
    }

    #[test]
    fn yaw_mirror() {
        for yaw in [1.0, 7.5, 19.0, 30.0] {
            let pos = plain(0.0, yaw * DEG);
            let neg = plain(0.0, -yaw * DEG);
            for k in 0..IRIS_POINTS {
                let m = (IRIS_POINTS + 4 - k) % IRIS_POINTS;
                assert!((pos[2 * k] + neg[2 * m]).abs() < 1e-12);
                assert!((pos[2 * k + 1] - neg[2 * m + 1]).abs() < 1e-12);
            }
            for arc in 0..2 {
                for k in 0..LID_POINTS_PER_ARC {
                    let a = 16 + 8 * arc + 2 * k;
                    let b = 16 + 8 * arc + 2 * (LID_POINTS_PER_ARC - 1 - k);
                    assert_eq!(pos[a], -neg[b]);
                    assert_eq!(pos[a + 1], neg[b + 1]);
                }
            }
            for c in [32, 34] {
                assert_eq!(pos[c], -neg[c]);
                assert_eq!(pos[c + 1], neg[c + 1]);
            }
        }
    }

    #[test]
    fn deterministic_with_noise() {
        let params = EyeModelParams {
            landmark_noise_std: 0.3,
            seed: 99,
            ..EyeModelParams::default()
        };
        let a = synthesize_sample(0.1, -0.2, &params).unwrap();
        let b = synthesize_sample(0.1, -0.2, &params).unwrap();
        assert_eq!(a, b);
        let other = synthesize_sample(
            0.1,
            -0.2,
            &EyeModelParams {
                seed: 100,
                ..params
            },
        )
        .unwrap();
        assert_ne!(a.features, other.features);
        assert_ne!(a.features, plain(0.1, -0.2));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            synthesize_sample(31.0 * DEG, 0.0, &EyeModelParams::default()),
            Err(Error::OutOfRange { .. })
        ));
        assert!(synthesize_sample(0.0, f64::NAN, &EyeModelParams::default()).is_err());
        assert!(synthesize_sample(MAX_ANGLE, -MAX_ANGLE, &EyeModelParams::default()).is_ok());
        let bad = EyeModelParams {
            iris_radius: 12.0,
            ..EyeModelParams::default()
        };
        assert!(matches!(
            synthesize_sample(0.0, 0.0, &bad),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn features_bounded() {
        for i in -30..=30 {
            for j in -30..=30 {
                let f = plain(i as f64 * DEG, j as f64 * DEG);
                assert!(f.iter().all(|x| (-4.0..=4.0).contains(x)));
            }
        }
    }

    #[test]
    fn injective_on_grid() {
        // 0.1° resolution across the full pitch and yaw ranges, compared
        // against nearest grid neighbours.
        let steps = 600;
        let at = |i: usize| (-30.0 + i as f64 * 0.1) * DEG;
        let mut min_gap = f64::INFINITY;
        let mut prev_row: Option<Vec<[f64; N_FEATURES]>> = None;
        for i in 0..=steps {
            let row: Vec<[f64; N_FEATURES]> = (0..=steps).map(|j| plain(at(i), at(j))).collect();
            for j in 0..=steps {
                if j > 0 {
                    min_gap = min_gap.min(dist(&row[j], &row[j - 1]));
                }
                if let Some(p) = &prev_row {
                    min_gap = min_gap.min(dist(&row[j], &p[j]));
                }
            }
            prev_row = Some(row);
        }
        assert!(min_gap > 1e-4, "{min_gap}");
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn full_sized_dataset() {
        let d = generate_dataset(20000, &EyeModelParams::with_seed(7)).unwrap();
        assert_eq!(d.len(), 20000);
        assert_eq!(d.n_f(), 36);
        let again = generate_dataset(1, &EyeModelParams::with_seed(7)).unwrap();
        assert_eq!(again.features[0], d.features[0]);
        assert_eq!(again.labels.targets[0], d.labels.targets[0]);
        assert!(generate_dataset(0, &EyeModelParams::default()).is_err());
    }

    #[test]
    fn angle_marginals_uniform() {
        let d = generate_dataset(100_000, &EyeModelParams::with_seed(3)).unwrap();
        let u = Uniform::new(-MAX_ANGLE, MAX_ANGLE).unwrap();
        for which in 0..2 {
            let mut a = d.labels.angle(which);
            a.sort_by(|x, y| x.total_cmp(y));
            let n = a.len() as f64;
            let dn = a
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let c = u.cdf(x);
                    (c - i as f64 / n).abs().max((i as f64 + 1.0) / n - c)
                })
                .fold(0.0, f64::max);
            // asymptotic Kolmogorov critical value at 0.01
            assert!(dn * n.sqrt() < 1.628, "D = {dn}");
        }
    }

    #[test]
    fn file_roundtrip() {
        let d = generate_dataset(17, &EyeModelParams::with_seed(1)).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 2 + 8 + 8 + 17 * 38 * 8);
        assert_eq!(Dataset::read_from(&buf[..]).unwrap(), d);
        assert!(matches!(
            Dataset::read_from(&buf[..buf.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            Dataset::read_from(&bad[..]),
            Err(Error::BadMagic(_))
        ));

        let mut csv = Vec::new();
        d.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 18);
        assert!(lines.iter().all(|l| l.split(',').count() == 38));
    }
}
