//! Array geometry: element layouts, frequency/angle grids, steering vectors,
//! and the dictionary matrix used by every solver.

use crate::error::{Error, Result};
use crate::linalg::{C64, CMat};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Linear array with elements at integer multiples of `gamma * lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    positions: Vec<u32>,
    gamma: f64,
}

impl ArrayLayout {
    pub fn new(positions: Vec<u32>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        if positions.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one element".into()));
        }
        if !positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "positions must be strictly increasing".into(),
            ));
        }
        Ok(ArrayLayout { positions, gamma })
    }

    /// Uniform linear array with elements at 0..n_elements-1.
    pub fn ula(n_elements: usize, gamma: f64) -> Result<Self> {
        Self::new((0..n_elements as u32).collect(), gamma)
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_elements(&self) -> usize {
        self.positions.len()
    }

    pub fn aperture(&self) -> u32 {
        *self.positions.last().unwrap()
    }
}

/// Uniform frequency grid of `n` bins covering [-1/2, 1/2).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    freqs: Vec<f64>,
    gamma: f64,
}

impl FrequencyGrid {
    pub fn uniform(n: usize, gamma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid needs at least one bin".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        let freqs = (0..n).map(|k| -0.5 + k as f64 / n as f64).collect();
        Ok(FrequencyGrid { freqs, gamma })
    }

    pub fn n_bins(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.freqs.len() as f64
    }

    /// True iff the bins match the canonical uniform construction exactly.
    pub fn is_uniform(&self) -> bool {
        let n = self.freqs.len();
        self.freqs
            .iter()
            .enumerate()
            .all(|(k, &f)| f == -0.5 + k as f64 / n as f64)
    }

    /// Angle of bin `n` in degrees.
    pub fn angle_deg(&self, bin: usize) -> Result<f64> {
        freq_to_angle(self.freqs[bin], self.gamma)
    }
}

/// Dictionary of steering vectors over a frequency grid (M x N, unit modulus).
#[derive(Debug, Clone)]
pub struct Dictionary {
    layout: ArrayLayout,
    grid: FrequencyGrid,
    a: CMat,
}

impl Dictionary {
    pub fn layout(&self) -> &ArrayLayout {
        &self.layout
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &CMat {
        &self.a
    }

    pub fn m(&self) -> usize {
        self.layout.n_elements()
    }

    pub fn n(&self) -> usize {
        self.grid.n_bins()
    }

    /// `A^H y`, the matched-filter spectrum shared by the ADMM-family updates.
    pub fn adjoint_apply(&self, y: &[C64]) -> Vec<C64> {
        self.a.adjoint_matvec(y)
    }
}

/// Steering vector a(f): entry m is exp(j 2 pi p_m f).
pub fn steering_vector(layout: &ArrayLayout, f: f64) -> Vec<C64> {
    layout
        .positions()
        .iter()
        .map(|&p| {
            let (s, c) = (2.0 * PI * p as f64 * f).sin_cos();
            C64::new(c, s)
        })
        .collect()
}

/// Dictionary matrix A = [a(f_1) ... a(f_N)].
pub fn build_dictionary(layout: &ArrayLayout, grid: &FrequencyGrid) -> Dictionary {
    let m = layout.n_elements();
    let n = grid.n_bins();
    let mut a = CMat::zeros(m, n);
    for (j, &f) in grid.freqs().iter().enumerate() {
        a.set_col(j, &steering_vector(layout, f));
    }
    Dictionary {
        layout: layout.clone(),
        grid: grid.clone(),
        a,
    }
}

/// Draw `m` distinct element positions from {0, ..., full_aperture}, always
/// keeping both endpoints so the stated aperture is preserved. Deterministic
/// in the seed.
pub fn subsample_positions(
    full_aperture: u32,
    m: usize,
    gamma: f64,
    seed: u64,
) -> Result<ArrayLayout> {
    let slots = full_aperture as usize + 1;
    if m > slots {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {m} distinct positions from {slots} lattice points"
        )));
    }
    if full_aperture == 0 {
        return ArrayLayout::new(vec![0], gamma);
    }
    if m < 2 {
        return Err(Error::InvalidArgument(
            "subsampled layouts keep both endpoints, so m must be at least 2".into(),
        ));
    }
    let mut interior: Vec<u32> = (1..full_aperture).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    interior.shuffle(&mut rng);
    let mut positions = vec![0, full_aperture];
    positions.extend_from_slice(&interior[..m - 2]);
    positions.sort_unstable();
    ArrayLayout::new(positions, gamma)
}

/// Map a spatial frequency to an angle in degrees: asin(f / gamma).
pub fn freq_to_angle(f: f64, gamma: f64) -> Result<f64> {
    let ratio = f / gamma;
    if ratio.abs() > 1.0 {
        return Err(Error::Domain(format!(
            "frequency {f} maps outside the visible region for gamma {gamma}"
        )));
    }
    Ok(ratio.asin().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_err;

    #[test]
    fn steering_at_zero_is_all_ones() {
        let layout = ArrayLayout::new(vec![0, 3, 7, 11], 0.5).unwrap();
        let v = steering_vector(&layout, 0.0);
        for z in v {
            assert_eq!(z, C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn steering_quarter_frequency_ula() {
        let layout = ArrayLayout::ula(4, 0.5).unwrap();
        let v = steering_vector(&layout, 0.25);
        let expect = [
            C64::new(1.0, 0.0),
            C64::new(0.0, 1.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, -1.0),
        ];
        for (got, want) in v.iter().zip(expect.iter()) {
            assert!((got - want).norm() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn steering_even_positions() {
        let layout = ArrayLayout::new(vec![0, 2], 0.5).unwrap();
        let v = steering_vector(&layout, 0.25);
        assert!((v[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((v[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_conjugates_under_negated_frequency() {
        let layout = ArrayLayout::new(vec![0, 1, 4, 9, 13], 0.5).unwrap();
        for &f in &[0.1, 0.37, -0.42] {
            let pos = steering_vector(&layout, f);
            let neg = steering_vector(&layout, -f);
            for (a, b) in pos.iter().zip(neg.iter()) {
                assert!((a.conj() - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dft_dictionary_has_orthogonal_columns() {
        let m = 8;
        let layout = ArrayLayout::ula(m, 0.5).unwrap();
        let grid = FrequencyGrid::uniform(m, 0.5).unwrap();
        let dict = build_dictionary(&layout, &grid);
        let a = dict.matrix();
        for k in 0..m {
            for l in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..m {
                    acc += a.get(i, k).conj() * a.get(i, l);
                }
                let want = if k == l { m as f64 } else { 0.0 };
                assert!(
                    (acc - C64::new(want, 0.0)).norm() < 1e-9,
                    "gram[{k}][{l}] = {acc}"
                );
            }
        }
    }

    #[test]
    fn dictionary_shape_and_unit_modulus() {
        let layout = subsample_positions(50, 20, 0.5, 7).unwrap();
        let grid = FrequencyGrid::uniform(256, 0.5).unwrap();
        let dict = build_dictionary(&layout, &grid);
        assert_eq!(dict.m(), 20);
        assert_eq!(dict.n(), 256);
        for i in 0..20 {
            for j in 0..256 {
                assert!((dict.matrix().get(i, j).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dictionary_columns_are_steering_vectors() {
        let layout = ArrayLayout::new(vec![0, 2, 5], 0.5).unwrap();
        let grid = FrequencyGrid::uniform(16, 0.5).unwrap();
        let dict = build_dictionary(&layout, &grid);
        for (j, &f) in grid.freqs().iter().enumerate() {
            let col: Vec<C64> = (0..3).map(|i| dict.matrix().get(i, j)).collect();
            let want = steering_vector(&layout, f);
            assert!(rel_err(&col, &want) < 1e-14);
        }
    }

    #[test]
    fn build_dictionary_is_deterministic() {
        let layout = subsample_positions(30, 10, 0.5, 3).unwrap();
        let grid = FrequencyGrid::uniform(64, 0.5).unwrap();
        let a = build_dictionary(&layout, &grid);
        let b = build_dictionary(&layout, &grid);
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn subsample_full_ula_when_m_fills_aperture() {
        let layout = subsample_positions(50, 51, 0.5, 9).unwrap();
        assert_eq!(layout.positions(), (0..=50).collect::<Vec<u32>>().as_slice());
    }

    #[test]
    fn subsample_keeps_endpoints_and_reproduces() {
        let a = subsample_positions(50, 20, 0.5, 42).unwrap();
        let b = subsample_positions(50, 20, 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_elements(), 20);
        assert_eq!(a.positions()[0], 0);
        assert_eq!(a.aperture(), 50);
        let mut sorted = a.positions().to_vec();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
        let c = subsample_positions(50, 20, 0.5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn subsample_rejects_infeasible_request() {
        assert!(subsample_positions(10, 12, 0.5, 0).is_err());
    }

    #[test]
    fn freq_to_angle_known_values() {
        assert_eq!(freq_to_angle(0.0, 0.5).unwrap(), 0.0);
        assert!((freq_to_angle(0.5, 0.5).unwrap() - 90.0).abs() < 1e-12);
        assert!((freq_to_angle(-0.25, 0.5).unwrap() + 30.0).abs() < 1e-12);
        assert!(freq_to_angle(0.6, 0.5).is_err());
    }

    #[test]
    fn grid_bins_are_exact() {
        let grid = FrequencyGrid::uniform(256, 0.5).unwrap();
        assert!(grid.is_uniform());
        assert_eq!(grid.freqs()[0], -0.5);
        assert_eq!(grid.freqs()[128], 0.0);
        assert_eq!(grid.n_bins(), 256);
        assert!(grid.freqs().iter().all(|&f| (-0.5..0.5).contains(&f)));
    }
}
