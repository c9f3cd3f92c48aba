//! Peak detection, detection-rate, angular RMSE, and NMSE evaluation across
//! SNR sweeps.

use crate::array::FrequencyGrid;
use crate::datagen::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::train::{nmse_db, nmse_loss};
use rayon::prelude::*;
use std::io::Write;

/// Local maxima of an amplitude spectrum (circular neighborhoods).
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSpectrum {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Circular distance between two grid indices.
#[inline]
fn circ_index_dist(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Peaks of |x_hat|: maximal runs of equal positive magnitude strictly above
/// both circular flanks count once, at their leftmost element. A constant
/// spectrum has no strict flank and therefore no peaks.
pub fn find_peaks(x_hat: &[C64]) -> PeakSpectrum {
    let n = x_hat.len();
    let mut indices = Vec::new();
    let mut values = Vec::new();
    if n == 0 {
        return PeakSpectrum { indices, values };
    }
    let mag: Vec<f64> = x_hat.iter().map(|z| z.norm()).collect();
    if n == 1 {
        if mag[0] > 0.0 {
            indices.push(0);
            values.push(mag[0]);
        }
        return PeakSpectrum { indices, values };
    }
    // Walk maximal runs of equal magnitude starting from a run boundary so
    // circular wraparound runs are handled in one piece.
    let start = match (1..n).find(|&i| mag[i] != mag[i - 1]) {
        Some(i) => i,
        None => return PeakSpectrum { indices, values }, // constant spectrum
    };
    let mut i = start;
    let mut seen = 0usize;
    while seen < n {
        let run_value = mag[i];
        let run_start = i;
        let mut run_len = 1usize;
        while run_len < n && mag[(i + run_len) % n] == run_value {
            run_len += 1;
        }
        let prev = mag[(run_start + n - 1) % n];
        let next = mag[(run_start + run_len) % n];
        if run_value > 0.0 && run_value > prev && run_value > next {
            indices.push(run_start % n);
            values.push(run_value);
        }
        i = (run_start + run_len) % n;
        seen += run_len;
    }
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_unstable_by_key(|&k| indices[k]);
    PeakSpectrum {
        indices: order.iter().map(|&k| indices[k]).collect(),
        values: order.iter().map(|&k| values[k]).collect(),
    }
}

/// Matching outcome for one ground-truth target.
#[derive(Debug, Clone)]
pub struct TargetMatch {
    /// Ground-truth bin q.
    pub bin: usize,
    /// Peaks within delta1 bins (candidate set I_q).
    pub candidates: Vec<usize>,
    /// Amplitude-qualified subset J_q.
    pub accepted: Vec<usize>,
    pub detected: bool,
    /// Closest accepted peak (ties to the lower index).
    pub matched: Option<usize>,
}

/// Per-vector matching result over all K targets.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub targets: Vec<TargetMatch>,
}

impl MatchResult {
    pub fn k(&self) -> usize {
        self.targets.len()
    }

    pub fn n_detected(&self) -> usize {
        self.targets.iter().filter(|t| t.detected).count()
    }
}

/// Two-stage target-to-peak matching: candidates within `delta1` bins
/// (circular), accepted when peak amplitude / true amplitude >= delta2.
pub fn match_targets(
    x: &[C64],
    peaks: &PeakSpectrum,
    delta1: usize,
    delta2: f64,
) -> Result<MatchResult> {
    if !(delta2 > 0.0 && delta2 <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta2 must lie in (0, 1], got {delta2}"
        )));
    }
    let n = x.len();
    let mut targets = Vec::new();
    for (q, amp) in x.iter().enumerate() {
        let true_mag = amp.norm();
        if true_mag == 0.0 {
            continue;
        }
        let mut candidates = Vec::new();
        let mut accepted = Vec::new();
        for (j, &peak_bin) in peaks.indices.iter().enumerate() {
            if circ_index_dist(peak_bin, q, n) <= delta1 {
                candidates.push(peak_bin);
                if peaks.values[j] / true_mag >= delta2 {
                    accepted.push(peak_bin);
                }
            }
        }
        let matched = accepted
            .iter()
            .copied()
            .min_by_key(|&j| (circ_index_dist(j, q, n), j));
        targets.push(TargetMatch {
            bin: q,
            candidates,
            detected: matched.is_some(),
            matched,
            accepted,
        });
    }
    Ok(MatchResult { targets })
}

/// Fraction of detected targets.
pub fn detection_rate(m: &MatchResult) -> Result<f64> {
    if m.k() == 0 {
        return Err(Error::InvalidArgument(
            "detection rate needs at least one target".into(),
        ));
    }
    Ok(m.n_detected() as f64 / m.k() as f64)
}

/// Angular RMSE in degrees over a set of per-vector match results: for each
/// vector with at least one detection, the mean squared angular offset over
/// its detected targets; the square root of the mean of those per-vector
/// errors. None when no vector has a detection.
pub fn angular_rmse(matches: &[MatchResult], grid: &FrequencyGrid) -> Result<Option<f64>> {
    let mut per_vector = Vec::new();
    for m in matches {
        let mut sum_sq = 0.0;
        let mut n_d = 0usize;
        for t in &m.targets {
            if let Some(j) = t.matched {
                let theta_q = grid.angle_deg(t.bin)?;
                let theta_j = grid.angle_deg(j)?;
                sum_sq += (theta_q - theta_j).powi(2);
                n_d += 1;
            }
        }
        if n_d > 0 {
            per_vector.push(sum_sq / n_d as f64);
        }
    }
    if per_vector.is_empty() {
        return Ok(None);
    }
    let mean = per_vector.iter().sum::<f64>() / per_vector.len() as f64;
    Ok(Some(mean.sqrt()))
}

/// Anything that maps a measurement to a spectrum estimate. `estimate` must
/// be pure; evaluation runs samples in parallel.
pub trait Estimator: Sync {
    fn name(&self) -> &str;
    fn estimate(&self, sample: &Sample) -> Result<Vec<C64>>;
}

/// Per-(SNR, method) evaluation row.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub snr_db: f64,
    pub method: String,
    pub detection_rate: f64,
    pub rmse_deg: Option<f64>,
    pub nmse_db: f64,
    pub n_vectors: usize,
}

/// All rows of an SNR sweep for a set of methods.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn rows_for(&self, method: &str) -> Vec<&MetricsRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    /// CSV: snr_db, method, detection_rate, rmse_deg (empty when absent),
    /// nmse_db, n_vectors.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "snr_db,method,detection_rate,rmse_deg,nmse_db,n_vectors")?;
        for r in &self.rows {
            let rmse = r.rmse_deg.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.snr_db, r.method, r.detection_rate, rmse, r.nmse_db, r.n_vectors
            )?;
        }
        Ok(())
    }
}

/// Evaluate one estimator over a test set, grouped by SNR level.
pub fn evaluate_sweep(
    estimator: &dyn Estimator,
    test_set: &Dataset,
    grid: &FrequencyGrid,
    delta1: usize,
    delta2: f64,
) -> Result<MetricsReport> {
    if grid.n_bins() != test_set.n {
        return Err(Error::ShapeMismatch("grid does not match the test set".into()));
    }
    let mut report = MetricsReport::default();
    for snr in test_set.snr_levels() {
        let samples: Vec<&Sample> = test_set
            .samples
            .iter()
            .filter(|s| s.snr_db == snr)
            .collect();
        let per_sample: Result<Vec<(f64, f64, MatchResult)>> = samples
            .par_iter()
            .map(|s| {
                let x_hat = estimator.estimate(s)?;
                let nmse = nmse_loss(&x_hat, &s.x)?;
                let peaks = find_peaks(&x_hat);
                let matches = match_targets(&s.x, &peaks, delta1, delta2)?;
                let pd = detection_rate(&matches)?;
                Ok((nmse, pd, matches))
            })
            .collect();
        let per_sample = per_sample?;
        let n_vectors = per_sample.len();
        let mean_nmse = per_sample.iter().map(|r| r.0).sum::<f64>() / n_vectors as f64;
        let mean_pd = per_sample.iter().map(|r| r.1).sum::<f64>() / n_vectors as f64;
        let all_matches: Vec<MatchResult> = per_sample.into_iter().map(|r| r.2).collect();
        let rmse = angular_rmse(&all_matches, grid)?;
        report.rows.push(MetricsRow {
            snr_db: snr,
            method: estimator.name().to_string(),
            detection_rate: mean_pd,
            rmse_deg: rmse,
            nmse_db: nmse_db(mean_nmse),
            n_vectors,
        });
    }
    Ok(report)
}

/// A compiled network as an estimator.
pub struct NetworkEstimator {
    name: String,
    compiled: crate::nets::CompiledNet,
    dict: crate::array::Dictionary,
}

impl NetworkEstimator {
    pub fn new(name: impl Into<String>, net: &crate::nets::Network, dict: &crate::array::Dictionary) -> Result<Self> {
        Ok(NetworkEstimator {
            name: name.into(),
            compiled: crate::nets::compile(net)?,
            dict: dict.clone(),
        })
    }
}

impl Estimator for NetworkEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<C64>> {
        let (x_hat, _) = crate::nets::forward(&self.compiled, &self.dict, &sample.y)?;
        Ok(x_hat)
    }
}

/// Fixed-iteration ISTA baseline with prebuilt operators.
pub struct IstaEstimator {
    name: String,
    w1: crate::linalg::CMat,
    w2: crate::linalg::CMat,
    kappa: f64,
    iterations: usize,
}

impl IstaEstimator {
    pub fn new(dict: &crate::array::Dictionary, tau: f64, iterations: usize) -> Result<Self> {
        let cfg = crate::solvers::IstaConfig::for_dictionary(dict, tau, iterations)?;
        let (w1, w2) = crate::solvers::ista_operators(dict, cfg.mu)?;
        Ok(IstaEstimator {
            name: format!("ista-{iterations}"),
            w1,
            w2,
            kappa: cfg.kappa1(),
            iterations,
        })
    }
}

impl Estimator for IstaEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<C64>> {
        let n = self.w1.rows();
        let w2y = self.w2.matvec(&sample.y);
        let mut x = vec![C64::new(0.0, 0.0); n];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for _ in 0..self.iterations {
            self.w1.matvec_into(&x, &mut buf);
            for (b, q) in buf.iter_mut().zip(w2y.iter()) {
                *b += q;
            }
            for (xi, &b) in x.iter_mut().zip(buf.iter()) {
                *xi = crate::solvers::soft_threshold(b, self.kappa);
            }
        }
        Ok(x)
    }
}

/// Fixed-iteration ADMM baseline with a prebuilt Levinson factorization.
pub struct AdmmEstimator {
    name: String,
    dict: crate::array::Dictionary,
    solver: crate::toeplitz::ToeplitzSolver,
    rho: f64,
    kappa: f64,
    iterations: usize,
}

impl AdmmEstimator {
    pub fn new(
        dict: &crate::array::Dictionary,
        rho: f64,
        tau: f64,
        iterations: usize,
        convention: crate::solvers::ThresholdConvention,
    ) -> Result<Self> {
        let cfg = crate::solvers::AdmmConfig::new(rho, tau, iterations, convention)?;
        let gram = crate::toeplitz::gram_generator(dict)?;
        let solver = crate::toeplitz::ToeplitzSolver::new(&gram, rho)?;
        Ok(AdmmEstimator {
            name: format!("admm-{iterations}"),
            dict: dict.clone(),
            solver,
            rho,
            kappa: cfg.kappa2(),
            iterations,
        })
    }
}

impl Estimator for AdmmEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<C64>> {
        let n = self.dict.n();
        let q = self.dict.adjoint_apply(&sample.y);
        let mut z = vec![C64::new(0.0, 0.0); n];
        let mut v = vec![C64::new(0.0, 0.0); n];
        let mut rhs = vec![C64::new(0.0, 0.0); n];
        for _ in 0..self.iterations {
            for i in 0..n {
                rhs[i] = q[i] + self.rho * (z[i] - v[i]);
            }
            let x = self.solver.solve(&rhs)?;
            for i in 0..n {
                let w = x[i] + v[i];
                z[i] = crate::solvers::soft_threshold(w, self.kappa);
                v[i] = w - z[i];
            }
        }
        Ok(z)
    }
}

/// Returns the ground truth unchanged (harness self-test).
pub struct OracleEstimator;

impl Estimator for OracleEstimator {
    fn name(&self) -> &str {
        "oracle"
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<C64>> {
        Ok(sample.x.clone())
    }
}

/// Returns the all-zero spectrum.
pub struct ZeroEstimator;

impl Estimator for ZeroEstimator {
    fn name(&self) -> &str {
        "zero"
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<C64>> {
        Ok(vec![C64::new(0.0, 0.0); sample.x.len()])
    }
}
