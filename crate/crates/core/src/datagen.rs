//! Synthetic scene and dataset generation, plus the binary dataset format.
//!
//! Scenes draw K targets with a circular minimum frequency separation; the
//! measurement is the steering superposition plus circular complex Gaussian
//! noise at a prescribed SNR. Every sample derives its own RNG stream from
//! (seed, index), so generation is reproducible and order-independent.

use crate::array::{steering_vector, ArrayLayout, FrequencyGrid};
use crate::error::{Error, Result};
use crate::linalg::{l2_norm_sqr, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"THDN";
const FORMAT_VERSION: u32 = 1;
/// Flag bit recording the per-component noise convention.
const FLAG_NOISE_PER_COMPONENT: u32 = 1;

const SCENE_REJECTION_CAP: usize = 100_000;

/// Ground-truth targets: off-grid frequencies and complex amplitudes.
#[derive(Debug, Clone)]
pub struct Scene {
    pub freqs: Vec<f64>,
    pub amps: Vec<C64>,
}

impl Scene {
    pub fn k(&self) -> usize {
        self.freqs.len()
    }
}

/// One dataset record: noisy measurement, gridded ground truth, SNR tag.
#[derive(Debug, Clone)]
pub struct Sample {
    pub y: Vec<C64>,
    pub x: Vec<C64>,
    pub snr_db: f64,
    pub k: u32,
}

/// SNR assignment policy over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum SnrPolicy {
    Fixed(f64),
    /// `levels` SNR steps starting at `start_db` in `step_db` increments,
    /// `per_level` consecutive samples each.
    Sweep {
        start_db: f64,
        step_db: f64,
        levels: usize,
        per_level: usize,
    },
}

impl SnrPolicy {
    pub fn count(&self) -> Option<usize> {
        match self {
            SnrPolicy::Fixed(_) => None,
            SnrPolicy::Sweep { levels, per_level, .. } => Some(levels * per_level),
        }
    }

    pub fn snr_for(&self, index: usize) -> f64 {
        match self {
            SnrPolicy::Fixed(db) => *db,
            SnrPolicy::Sweep {
                start_db,
                step_db,
                levels,
                per_level,
            } => {
                let level = (index / per_level).min(levels - 1);
                start_db + step_db * level as f64
            }
        }
    }
}

/// Full recipe for one dataset file.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub count: usize,
    pub snr: SnrPolicy,
    pub min_sep: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub noise_per_component: bool,
}

/// In-memory dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub m: usize,
    pub n: usize,
    pub flags: u32,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct SNR levels present, ascending.
    pub fn snr_levels(&self) -> Vec<f64> {
        let mut levels: Vec<f64> = Vec::new();
        for s in &self.samples {
            if !levels.contains(&s.snr_db) {
                levels.push(s.snr_db);
            }
        }
        levels.sort_by(f64::total_cmp);
        levels
    }
}

/// Circular distance on the unit-period frequency interval.
#[inline]
pub fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Draw a scene: K uniform in [k_min, k_max], frequencies rejection-sampled
/// until every circular pairwise gap is at least `min_sep`, amplitudes with
/// |x| ~ U(0,1) and uniform phase.
pub fn sample_scene(
    rng: &mut ChaCha8Rng,
    min_sep: f64,
    k_min: usize,
    k_max: usize,
) -> Result<Scene> {
    if k_min < 1 || k_max < k_min {
        return Err(Error::InvalidArgument("target count range is empty".into()));
    }
    if min_sep * k_max as f64 >= 1.0 {
        return Err(Error::Infeasible(format!(
            "{k_max} targets cannot keep circular separation {min_sep}"
        )));
    }
    let k = rng.random_range(k_min..=k_max);
    let mut freqs = vec![0.0f64; k];
    let mut accepted = false;
    for _ in 0..SCENE_REJECTION_CAP {
        for f in freqs.iter_mut() {
            *f = rng.random::<f64>() - 0.5;
        }
        let ok = (0..k).all(|i| (i + 1..k).all(|j| circ_dist(freqs[i], freqs[j]) >= min_sep));
        if ok {
            accepted = true;
            break;
        }
    }
    if !accepted {
        return Err(Error::Infeasible(format!(
            "rejection cap reached for K={k}, min_sep={min_sep}"
        )));
    }
    let amps = (0..k)
        .map(|_| {
            let mag = rng.random::<f64>();
            let phase = rng.random::<f64>() * 2.0 * PI;
            C64::from_polar(mag, phase)
        })
        .collect();
    Ok(Scene { freqs, amps })
}

/// Noise-free measurement: superposition of steering vectors at the scene's
/// off-grid frequencies.
pub fn synthesize_measurement(scene: &Scene, layout: &ArrayLayout) -> Vec<C64> {
    let m = layout.n_elements();
    let mut y = vec![C64::new(0.0, 0.0); m];
    for (f, a) in scene.freqs.iter().zip(scene.amps.iter()) {
        let sv = steering_vector(layout, *f);
        for i in 0..m {
            y[i] += a * sv[i];
        }
    }
    y
}

/// Add circular complex Gaussian noise at the requested SNR, defined as
/// 10 log10(||y_c||^2 / sigma^2).
///
/// By default sigma^2 is the total expected noise energy (per-component
/// complex variance sigma^2 / M), which makes the measured SNR match the
/// definition in expectation. `per_component` switches to per-component
/// variance sigma^2 instead.
pub fn add_noise_at_snr(
    y_clean: &[C64],
    snr_db: f64,
    rng: &mut ChaCha8Rng,
    per_component: bool,
) -> Result<(Vec<C64>, f64)> {
    let energy = l2_norm_sqr(y_clean);
    if energy == 0.0 {
        return Err(Error::InvalidArgument(
            "cannot set an SNR for a zero measurement".into(),
        ));
    }
    let sigma2 = energy / 10f64.powf(snr_db / 10.0);
    let m = y_clean.len() as f64;
    let comp_var = if per_component { sigma2 } else { sigma2 / m };
    // Box-Muller for the two Gaussian quadratures of each component.
    let scale = (comp_var / 2.0).sqrt();
    let y = y_clean
        .iter()
        .map(|&yc| {
            let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.random::<f64>();
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * PI * u2).sin_cos();
            yc + C64::new(scale * r * c, scale * r * s)
        })
        .collect();
    Ok((y, sigma2))
}

/// Nearest grid bin under circular distance; exact midpoints break toward
/// the lower index.
pub fn nearest_bin(f: f64, n: usize) -> usize {
    let t = (f + 0.5) * n as f64;
    let i = t.floor();
    let frac = t - i;
    let idx = if frac > 0.5 { i as isize + 1 } else { i as isize };
    (idx.rem_euclid(n as isize)) as usize
}

/// Gridded ground truth: each target lands on its nearest bin with its
/// complex amplitude. Returns None when two targets collide on one bin
/// (the caller regenerates the scene).
pub fn grid_ground_truth(scene: &Scene, grid: &FrequencyGrid) -> Option<Vec<C64>> {
    let n = grid.n_bins();
    let mut x = vec![C64::new(0.0, 0.0); n];
    for (f, a) in scene.freqs.iter().zip(scene.amps.iter()) {
        let bin = nearest_bin(*f, n);
        if x[bin] != C64::new(0.0, 0.0) {
            return None;
        }
        x[bin] = *a;
    }
    Some(x)
}

/// Generate sample `index` of a dataset, reproducibly: the RNG stream is
/// derived from (seed, index) alone.
pub fn generate_sample(
    layout: &ArrayLayout,
    grid: &FrequencyGrid,
    spec: &DatasetSpec,
    index: usize,
) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let snr_db = spec.snr.snr_for(index);
    loop {
        let scene = sample_scene(&mut rng, spec.min_sep, spec.k_min, spec.k_max)?;
        // Bin collisions force a full scene redraw so K-sparsity stays exact.
        let Some(x) = grid_ground_truth(&scene, grid) else {
            continue;
        };
        let y_clean = synthesize_measurement(&scene, layout);
        if l2_norm_sqr(&y_clean) == 0.0 {
            continue;
        }
        let (y, _) = add_noise_at_snr(&y_clean, snr_db, &mut rng, spec.noise_per_component)?;
        return Ok(Sample {
            y,
            x,
            snr_db,
            k: scene.k() as u32,
        });
    }
}

/// Generate a full dataset in memory (parallel across samples).
pub fn generate_in_memory(
    layout: &ArrayLayout,
    grid: &FrequencyGrid,
    spec: &DatasetSpec,
) -> Result<Dataset> {
    if let Some(required) = spec.snr.count() {
        if required != spec.count {
            return Err(Error::InvalidArgument(format!(
                "SNR sweep covers {required} samples but count is {}",
                spec.count
            )));
        }
    }
    let samples: Result<Vec<Sample>> = (0..spec.count)
        .into_par_iter()
        .map(|i| generate_sample(layout, grid, spec, i))
        .collect();
    Ok(Dataset {
        m: layout.n_elements(),
        n: grid.n_bins(),
        flags: if spec.noise_per_component {
            FLAG_NOISE_PER_COMPONENT
        } else {
            0
        },
        samples: samples?,
    })
}

/// Generate a dataset and stream it to `path`.
pub fn generate_dataset(
    layout: &ArrayLayout,
    grid: &FrequencyGrid,
    spec: &DatasetSpec,
    path: &Path,
) -> Result<Dataset> {
    let ds = generate_in_memory(layout, grid, spec)?;
    write_dataset(&ds, path)?;
    Ok(ds)
}

fn write_c64(w: &mut impl Write, z: &C64) -> std::io::Result<()> {
    w.write_all(&z.re.to_le_bytes())?;
    w.write_all(&z.im.to_le_bytes())
}

/// Serialize a dataset. Little-endian; header {magic "THDN", version u32,
/// M u32, N u32, count u64, flags u32}; per sample: snr_db f64, K u32, then
/// M complex f64 pairs (y) and N complex f64 pairs (x).
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(ds.m as u32).to_le_bytes())?;
    w.write_all(&(ds.n as u32).to_le_bytes())?;
    w.write_all(&(ds.samples.len() as u64).to_le_bytes())?;
    w.write_all(&ds.flags.to_le_bytes())?;
    for s in &ds.samples {
        w.write_all(&s.snr_db.to_le_bytes())?;
        w.write_all(&s.k.to_le_bytes())?;
        for z in &s.y {
            write_c64(&mut w, z)?;
        }
        for z in &s.x {
            write_c64(&mut w, z)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated dataset file: {e}")))?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact_array::<4>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact_array::<8>(r)?))
}

fn read_c64_vec(r: &mut impl Read, len: usize) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        out.push(C64::new(re, im));
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let magic = read_exact_array::<4>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic; not a dataset file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let m = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let count = u64::from_le_bytes(read_exact_array::<8>(&mut r)?) as usize;
    let flags = read_u32(&mut r)?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let snr_db = read_f64(&mut r)?;
        let k = read_u32(&mut r)?;
        let y = read_c64_vec(&mut r, m)?;
        let x = read_c64_vec(&mut r, n)?;
        samples.push(Sample { y, x, snr_db, k });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after last sample".into()));
    }
    Ok(Dataset {
        m,
        n,
        flags,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::subsample_positions;
    use proptest::prelude::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn test_layout() -> ArrayLayout {
        subsample_positions(30, 10, 0.5, 5).unwrap()
    }

    #[test]
    fn single_target_scene_always_accepted() {
        let mut r = rng(1);
        let s = sample_scene(&mut r, 0.4, 1, 1).unwrap();
        assert_eq!(s.k(), 1);
    }

    #[test]
    fn scene_separation_holds_over_many_draws() {
        let mut r = rng(2);
        let min_sep = 1.0 / 20.0;
        for _ in 0..10_000 {
            let s = sample_scene(&mut r, min_sep, 8, 8).unwrap();
            for i in 0..8 {
                for j in i + 1..8 {
                    assert!(circ_dist(s.freqs[i], s.freqs[j]) >= min_sep);
                }
            }
        }
    }

    #[test]
    fn scene_amplitudes_in_range() {
        let mut r = rng(3);
        for _ in 0..500 {
            let s = sample_scene(&mut r, 0.02, 1, 8).unwrap();
            for a in &s.amps {
                assert!(a.norm() < 1.0 + 1e-12);
            }
            for f in &s.freqs {
                assert!((-0.5..0.5).contains(f));
            }
        }
    }

    #[test]
    fn infeasible_separation_is_rejected() {
        let mut r = rng(4);
        assert!(sample_scene(&mut r, 0.2, 8, 8).is_err());
    }

    #[test]
    fn empty_scene_synthesizes_zero() {
        let layout = test_layout();
        let scene = Scene {
            freqs: vec![],
            amps: vec![],
        };
        let y = synthesize_measurement(&scene, &layout);
        assert!(y.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn unit_target_at_zero_frequency_is_all_ones() {
        let layout = test_layout();
        let scene = Scene {
            freqs: vec![0.0],
            amps: vec![C64::new(1.0, 0.0)],
        };
        let y = synthesize_measurement(&scene, &layout);
        for z in y {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn two_target_measurement_matches_elementwise_sum() {
        let layout = test_layout();
        let scene = Scene {
            freqs: vec![0.13, -0.31],
            amps: vec![C64::new(0.5, -0.2), C64::new(-0.1, 0.9)],
        };
        let y = synthesize_measurement(&scene, &layout);
        for (i, &p) in layout.positions().iter().enumerate() {
            let mut want = C64::new(0.0, 0.0);
            for (f, a) in scene.freqs.iter().zip(scene.amps.iter()) {
                let phase = 2.0 * PI * p as f64 * f;
                want += a * C64::new(phase.cos(), phase.sin());
            }
            assert!((y[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_sigma_formula() {
        let mut r = rng(5);
        let y = vec![C64::new(1.0, 0.0); 4]; // energy 4
        let (_, sigma2) = add_noise_at_snr(&y, 0.0, &mut r, false).unwrap();
        assert!((sigma2 - 4.0).abs() < 1e-12);
        let (_, sigma2) = add_noise_at_snr(&y, 10.0, &mut r, false).unwrap();
        assert!((sigma2 - 0.4).abs() < 1e-12);
        assert!(add_noise_at_snr(&[C64::new(0.0, 0.0)], 10.0, &mut r, false).is_err());
    }

    #[test]
    fn measured_snr_matches_target_in_expectation() {
        let mut r = rng(6);
        let layout = test_layout();
        let scene = Scene {
            freqs: vec![0.2, -0.1],
            amps: vec![C64::new(0.8, 0.1), C64::new(0.3, -0.6)],
        };
        let y_clean = synthesize_measurement(&scene, &layout);
        let energy = l2_norm_sqr(&y_clean);
        let target_db = 12.0;
        let mut noise_energy = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let (y, _) = add_noise_at_snr(&y_clean, target_db, &mut r, false).unwrap();
            noise_energy += y
                .iter()
                .zip(y_clean.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
        }
        let measured_db = 10.0 * (energy / (noise_energy / draws as f64)).log10();
        assert!(
            (measured_db - target_db).abs() < 0.1,
            "measured {measured_db} dB"
        );
    }

    #[test]
    fn on_grid_frequency_maps_to_its_bin() {
        let n = 64;
        for bin in [0usize, 1, 31, 63] {
            let f = -0.5 + bin as f64 / n as f64;
            assert_eq!(nearest_bin(f, n), bin);
        }
    }

    #[test]
    fn midpoint_breaks_to_lower_bin() {
        let n = 8;
        // Exactly between bins 2 and 3.
        let f = -0.5 + 2.5 / 8.0;
        assert_eq!(nearest_bin(f, n), 2);
    }

    proptest! {
        #[test]
        fn nearest_bin_is_within_half_spacing(f in -0.5f64..0.5) {
            let n = 128usize;
            let grid = FrequencyGrid::uniform(n, 0.5).unwrap();
            let bin = nearest_bin(f, n);
            prop_assert!(circ_dist(f, grid.freqs()[bin]) <= 0.5 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn gridded_truth_has_exactly_k_nonzeros_with_scene_amplitudes() {
        let layout = test_layout();
        let grid = FrequencyGrid::uniform(128, 0.5).unwrap();
        let spec = DatasetSpec {
            count: 200,
            snr: SnrPolicy::Fixed(15.0),
            min_sep: 0.05,
            k_min: 1,
            k_max: 8,
            seed: 7,
            noise_per_component: false,
        };
        let ds = generate_in_memory(&layout, &grid, &spec).unwrap();
        for s in &ds.samples {
            let nonzeros = s.x.iter().filter(|z| **z != C64::new(0.0, 0.0)).count();
            assert_eq!(nonzeros, s.k as usize);
        }
    }

    #[test]
    fn sweep_policy_orders_snr_levels() {
        let spec = SnrPolicy::Sweep {
            start_db: 0.0,
            step_db: 5.0,
            levels: 8,
            per_level: 10,
        };
        assert_eq!(spec.snr_for(0), 0.0);
        assert_eq!(spec.snr_for(9), 0.0);
        assert_eq!(spec.snr_for(10), 5.0);
        assert_eq!(spec.snr_for(79), 35.0);
    }

    #[test]
    fn dataset_files_are_reproducible_and_roundtrip() {
        let layout = test_layout();
        let grid = FrequencyGrid::uniform(32, 0.5).unwrap();
        let spec = DatasetSpec {
            count: 40,
            snr: SnrPolicy::Sweep {
                start_db: 0.0,
                step_db: 5.0,
                levels: 4,
                per_level: 10,
            },
            min_sep: 1.0 / 30.0,
            k_min: 1,
            k_max: 4,
            seed: 99,
            noise_per_component: false,
        };
        let dir = std::env::temp_dir();
        let p1 = dir.join("doa_unfold_test_ds1.bin");
        let p2 = dir.join("doa_unfold_test_ds2.bin");
        let ds1 = generate_dataset(&layout, &grid, &spec, &p1).unwrap();
        generate_dataset(&layout, &grid, &spec, &p2).unwrap();
        let bytes1 = std::fs::read(&p1).unwrap();
        let bytes2 = std::fs::read(&p2).unwrap();
        assert_eq!(bytes1, bytes2, "same seed must give identical files");

        let back = read_dataset(&p1).unwrap();
        assert_eq!(back.m, ds1.m);
        assert_eq!(back.n, ds1.n);
        assert_eq!(back.len(), ds1.len());
        for (a, b) in back.samples.iter().zip(ds1.samples.iter()) {
            assert_eq!(a.snr_db.to_bits(), b.snr_db.to_bits());
            assert_eq!(a.k, b.k);
            for (p, q) in a.y.iter().zip(b.y.iter()) {
                assert_eq!(p.re.to_bits(), q.re.to_bits());
                assert_eq!(p.im.to_bits(), q.im.to_bits());
            }
            for (p, q) in a.x.iter().zip(b.x.iter()) {
                assert_eq!(p.re.to_bits(), q.re.to_bits());
                assert_eq!(p.im.to_bits(), q.im.to_bits());
            }
        }
        std::fs::remove_file(&p1).ok();
        std::fs::remove_file(&p2).ok();
    }

    #[test]
    fn stored_supports_respect_min_separation() {
        // Post-hoc validation on the serialized file: gridded supports of
        // every sample keep at least min_sep - one bin of circular distance.
        let layout = test_layout();
        let grid = FrequencyGrid::uniform(64, 0.5).unwrap();
        let min_sep = 0.1;
        let spec = DatasetSpec {
            count: 300,
            snr: SnrPolicy::Fixed(10.0),
            min_sep,
            k_min: 1,
            k_max: 6,
            seed: 17,
            noise_per_component: false,
        };
        let path = std::env::temp_dir().join("doa_unfold_test_sep.bin");
        generate_dataset(&layout, &grid, &spec, &path).unwrap();
        let ds = read_dataset(&path).unwrap();
        let n = ds.n;
        for s in &ds.samples {
            let support: Vec<usize> = s
                .x
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != C64::new(0.0, 0.0))
                .map(|(i, _)| i)
                .collect();
            assert_eq!(support.len(), s.k as usize);
            for i in 0..support.len() {
                for j in i + 1..support.len() {
                    let d = support[i].abs_diff(support[j]);
                    let bin_dist = d.min(n - d) as f64;
                    // Gridding moves each frequency at most half a bin.
                    assert!(
                        bin_dist >= min_sep * n as f64 - 1.0,
                        "bins {} and {} too close",
                        support[i],
                        support[j]
                    );
                }
            }
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let layout = test_layout();
        let grid = FrequencyGrid::uniform(16, 0.5).unwrap();
        let spec = DatasetSpec {
            count: 5,
            snr: SnrPolicy::Fixed(15.0),
            min_sep: 0.05,
            k_min: 1,
            k_max: 3,
            seed: 11,
            noise_per_component: false,
        };
        let dir = std::env::temp_dir();
        let p = dir.join("doa_unfold_test_trunc.bin");
        generate_dataset(&layout, &grid, &spec, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 7]).unwrap();
        match read_dataset(&p) {
            Err(Error::Format(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
        std::fs::write(&p, b"NOPE").unwrap();
        assert!(read_dataset(&p).is_err());
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn per_component_flag_changes_noise_scale() {
        let mut r1 = rng(13);
        let mut r2 = rng(13);
        let y = vec![C64::new(1.0, 0.0); 16];
        let (a, _) = add_noise_at_snr(&y, 0.0, &mut r1, false).unwrap();
        let (b, _) = add_noise_at_snr(&y, 0.0, &mut r2, true).unwrap();
        let na: f64 = a.iter().zip(y.iter()).map(|(p, q)| (p - q).norm_sqr()).sum();
        let nb: f64 = b.iter().zip(y.iter()).map(|(p, q)| (p - q).norm_sqr()).sum();
        // Same RNG stream, so the ratio is exactly M.
        assert!((nb / na - 16.0).abs() < 1e-9);
    }
}
