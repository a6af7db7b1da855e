//! Map synthesis from sources and a channel model, and sensor sampling.

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellSet, GridSpec, MapTensor, SampledMap};
use crate::propagation::basis::BasisSet;
use crate::propagation::shadowing::ShadowingSampler;
use crate::seeding::rng_from;
use crate::units::{db_to_linear, linear_to_db};

/// Distances below this (meters) clamp to it in the pathloss formula.
pub const MIN_DISTANCE_M: f64 = 0.1;

/// One transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// World coordinates (x, y) in meters.
    pub position: [f64; 2],
    /// Transmit power per signal basis, dBm; length `B − 1`.
    pub powers_dbm: Vec<f64>,
    /// Antenna height in meters; metadata only.
    pub height_m: f64,
}

/// Large-scale channel behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationMode {
    /// Pathloss with a free-space-like exponent; no shadowing.
    FreeSpaceLike,
    /// Pathloss only, arbitrary exponent; no shadowing.
    PathlossOnly,
    /// Pathloss plus correlated lognormal shadowing.
    PathlossPlusShadowing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub mode: PropagationMode,
    pub pathloss_exponent: f64,
    /// Channel gain at 1 m, dB.
    pub unit_distance_gain_db: f64,
    /// Shadowing variance, dB²; used only with shadowing enabled.
    pub shadowing_variance_db2: f64,
    /// Shadowing correlation per meter of separation, in (0, 1).
    pub shadowing_decay: f64,
}

impl ChannelModel {
    /// Free-space toy channel: exponent 2, −30 dB at 1 m, no shadowing.
    pub fn free_space() -> Self {
        ChannelModel {
            mode: PropagationMode::FreeSpaceLike,
            pathloss_exponent: 2.0,
            unit_distance_gain_db: -30.0,
            shadowing_variance_db2: 0.0,
            shadowing_decay: 0.95,
        }
    }

    /// Pathloss-only channel with the default urban exponent 3.
    pub fn pathloss_only() -> Self {
        ChannelModel { mode: PropagationMode::PathlossOnly, ..ChannelModel::gudmundson() }
    }

    /// Default shadowed channel: exponent 3, −30 dB at 1 m, shadowing
    /// variance 10 dB² with correlation 0.95 per meter.
    pub fn gudmundson() -> Self {
        ChannelModel {
            mode: PropagationMode::PathlossPlusShadowing,
            pathloss_exponent: 3.0,
            unit_distance_gain_db: -30.0,
            shadowing_variance_db2: 10.0,
            shadowing_decay: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pathloss_exponent > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pathloss exponent must be positive, got {}",
                self.pathloss_exponent
            )));
        }
        if !(self.shadowing_variance_db2 >= 0.0) {
            return Err(Error::InvalidConfig("shadowing variance must be >= 0".into()));
        }
        if !(self.shadowing_decay > 0.0 && self.shadowing_decay < 1.0) {
            return Err(Error::InvalidConfig("shadowing decay must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn has_shadowing(&self) -> bool {
        matches!(self.mode, PropagationMode::PathlossPlusShadowing)
            && self.shadowing_variance_db2 > 0.0
    }
}

/// Mean channel gain (dB) at the given distance; distances below
/// [`MIN_DISTANCE_M`] clamp to it.
pub fn pathloss_gain(channel: &ChannelModel, distance_m: f64) -> f64 {
    let d = distance_m.max(MIN_DISTANCE_M);
    channel.unit_distance_gain_db - 10.0 * channel.pathloss_exponent * d.log10()
}

fn check_sources(grid: &GridSpec, sources: &[SourceConfig], n_signal: usize) -> Result<()> {
    let lo_x = grid.origin[0] - grid.delta_x / 2.0;
    let hi_x = grid.origin[0] + (grid.n_x as f64 - 0.5) * grid.delta_x;
    let lo_y = grid.origin[1] - grid.delta_y / 2.0;
    let hi_y = grid.origin[1] + (grid.n_y as f64 - 0.5) * grid.delta_y;
    for (s, src) in sources.iter().enumerate() {
        if src.powers_dbm.len() != n_signal {
            return Err(Error::ShapeMismatch(format!(
                "source {s} has {} powers, basis set has {n_signal} signal bases",
                src.powers_dbm.len()
            )));
        }
        if src.powers_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(format!("source {s} has a non-finite power")));
        }
        let [x, y] = src.position;
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidConfig(format!("source {s} has a non-finite position")));
        }
        if x < lo_x || x > hi_x || y < lo_y || y > hi_y {
            return Err(Error::InvalidConfig(format!(
                "source {s} at ({x}, {y}) lies outside the mapped area"
            )));
        }
    }
    Ok(())
}

/// Synthesizes a map and its basis coefficients using an explicit RNG; the
/// RNG is consumed only when shadowing is enabled (one field per source, in
/// source order).
pub fn synthesize_map_with(
    grid: &GridSpec,
    sources: &[SourceConfig],
    channel: &ChannelModel,
    basis: &BasisSet,
    noise_psd_dbm_per_mhz: Option<f64>,
    shadowing: Option<&ShadowingSampler>,
    rng: &mut impl Rng,
) -> Result<(MapTensor, Array3<f64>)> {
    channel.validate()?;
    let n_signal = basis.n_signal();
    check_sources(grid, sources, n_signal)?;

    let (n_y, n_x) = (grid.n_y, grid.n_x);
    let n_b = basis.n_bases();
    let mut coeffs = Array3::zeros((n_y, n_x, n_b));

    let built;
    let sampler = if channel.has_shadowing() && !sources.is_empty() {
        match shadowing {
            Some(s) => Some(s),
            None => {
                built = ShadowingSampler::new(
                    grid,
                    channel.shadowing_variance_db2,
                    channel.shadowing_decay,
                )?;
                Some(&built)
            }
        }
    } else {
        None
    };

    for src in sources {
        let shadow = sampler.map(|s| s.draw(rng));
        for i in 0..n_y {
            for j in 0..n_x {
                let p = grid.point(i, j);
                let d = ((p[0] - src.position[0]).powi(2) + (p[1] - src.position[1]).powi(2))
                    .sqrt();
                let mut gain = pathloss_gain(channel, d);
                if let Some(f) = &shadow {
                    gain += f[[i, j]];
                }
                for (b, &power) in src.powers_dbm.iter().enumerate() {
                    coeffs[[i, j, b]] += db_to_linear(power + gain);
                }
            }
        }
    }

    if let Some(psd) = noise_psd_dbm_per_mhz {
        let c = basis.noise_coefficient(db_to_linear(psd));
        for i in 0..n_y {
            for j in 0..n_x {
                coeffs[[i, j, n_b - 1]] = c;
            }
        }
    }

    let map = map_from_coefficients(grid, basis, &coeffs)?;
    Ok((map, coeffs))
}

/// Evaluates `Σ_b π_b β_b(f)` in linear units and converts to dB.
pub fn map_from_coefficients(
    grid: &GridSpec,
    basis: &BasisSet,
    coeffs: &Array3<f64>,
) -> Result<MapTensor> {
    let n_b = basis.n_bases();
    if coeffs.dim() != (grid.n_y, grid.n_x, n_b) {
        return Err(Error::ShapeMismatch(format!(
            "coefficients have shape {:?}, expected {:?}",
            coeffs.dim(),
            (grid.n_y, grid.n_x, n_b)
        )));
    }
    let beta = basis.values();
    let n_f = basis.n_f();
    let mut values = Array3::zeros((grid.n_y, grid.n_x, n_f));
    for i in 0..grid.n_y {
        for j in 0..grid.n_x {
            for f in 0..n_f {
                let mut acc = 0.0;
                for b in 0..n_b {
                    acc += coeffs[[i, j, b]] * beta[[b, f]];
                }
                values[[i, j, f]] = linear_to_db(acc);
            }
        }
    }
    MapTensor::new(grid.clone(), basis.frequencies().to_vec(), values)
}

/// Seeded wrapper around [`synthesize_map_with`].
pub fn synthesize_map(
    grid: &GridSpec,
    sources: &[SourceConfig],
    channel: &ChannelModel,
    basis: &BasisSet,
    noise_psd_dbm_per_mhz: Option<f64>,
    seed: u64,
) -> Result<(MapTensor, Array3<f64>)> {
    let mut rng = rng_from(seed, &[]);
    synthesize_map_with(grid, sources, channel, basis, noise_psd_dbm_per_mhz, None, &mut rng)
}

/// Draws `n_samples` observation cells uniformly without replacement from
/// the eligible cells and perturbs the observed values with i.i.d. Gaussian
/// noise in dB.  Eligible cells are all grid cells, or `restrict_to` when
/// given (e.g. street cells).
pub fn sample_map_with(
    map: &MapTensor,
    n_samples: usize,
    noise_std_db: f64,
    restrict_to: Option<&CellSet>,
    rng: &mut impl Rng,
) -> Result<SampledMap> {
    if !(noise_std_db >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise std must be >= 0, got {noise_std_db}")));
    }
    let grid = &map.grid;
    let mut eligible: Vec<(usize, usize)> = match restrict_to {
        None => (0..grid.n_y).flat_map(|i| (0..grid.n_x).map(move |j| (i, j))).collect(),
        Some(cells) => {
            for &(i, j) in cells {
                if i >= grid.n_y || j >= grid.n_x {
                    return Err(Error::InvalidConfig(format!(
                        "eligible cell ({i}, {j}) outside the grid"
                    )));
                }
            }
            cells.iter().copied().collect()
        }
    };
    if n_samples > eligible.len() {
        return Err(Error::NotEnoughCells { requested: n_samples, eligible: eligible.len() });
    }

    let (omega, _) = eligible.partial_shuffle(rng, n_samples);
    let omega: Vec<(usize, usize)> = omega.to_vec();

    let n_f = map.n_f();
    let mut values = Array3::from_elem((grid.n_y, grid.n_x, n_f), crate::grid::FILL_DB);
    for &(i, j) in &omega {
        for f in 0..n_f {
            let z: f64 = rng.sample(StandardNormal);
            values[[i, j, f]] = map.values[[i, j, f]] + noise_std_db * z;
        }
    }
    SampledMap::new(grid.clone(), map.frequencies.clone(), values, omega)
}

/// Seeded wrapper around [`sample_map_with`].
pub fn sample_map(
    map: &MapTensor,
    n_samples: usize,
    noise_std_db: f64,
    restrict_to: Option<&CellSet>,
    seed: u64,
) -> Result<SampledMap> {
    let mut rng = rng_from(seed, &[]);
    sample_map_with(map, n_samples, noise_std_db, restrict_to, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_source(grid: &GridSpec, power: f64) -> Vec<SourceConfig> {
        vec![SourceConfig { position: grid.point(0, 0), powers_dbm: vec![power], height_m: 1.5 }]
    }

    #[test]
    fn pathloss_matches_the_formula() {
        let ch = ChannelModel::gudmundson();
        assert_abs_diff_eq!(pathloss_gain(&ch, 1.0), -30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pathloss_gain(&ch, 10.0), -60.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pathloss_gain(&ch, 100.0), -90.0, epsilon = 1e-12);
        // Distances below the clamp collapse onto it.
        assert_eq!(pathloss_gain(&ch, 0.0), pathloss_gain(&ch, MIN_DISTANCE_M));
        assert_eq!(pathloss_gain(&ch, 0.05), pathloss_gain(&ch, MIN_DISTANCE_M));
    }

    #[test]
    fn single_source_map_at_unit_distance() {
        let grid = GridSpec::square(2, 1.0).unwrap();
        let basis = BasisSet::power_map(1400e6).unwrap();
        let ch = ChannelModel::pathloss_only();
        let (map, coeffs) =
            synthesize_map(&grid, &one_source(&grid, 11.0), &ch, &basis, None, 0).unwrap();
        // Cells (0,1) and (1,0) sit exactly 1 m from the source.
        assert_abs_diff_eq!(map.values[[0, 1, 0]], 11.0 - 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(map.values[[1, 0, 0]], 11.0 - 30.0, epsilon = 1e-9);
        // Noise channel coefficient stays zero without a noise floor.
        assert_eq!(coeffs[[0, 0, 1]], 0.0);
    }

    #[test]
    fn zero_sources_with_noise_gives_a_flat_map() {
        let grid = GridSpec::square(3, 1.0).unwrap();
        // 1 MHz band, so the normalized constant basis evaluates to 1.
        let freqs: Vec<f64> = (0..11).map(|i| 1400e6 + 1e5 * i as f64).collect();
        let basis = BasisSet::new(vec![super::super::basis::BasisKind::ConstantNoise], freqs);
        let basis = basis.unwrap();
        let ch = ChannelModel::pathloss_only();
        let (map, _) = synthesize_map(&grid, &[], &ch, &basis, Some(-90.0), 0).unwrap();
        for v in map.values.iter() {
            assert_abs_diff_eq!(*v, -90.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn doubling_linear_power_adds_3_db_everywhere() {
        let grid = GridSpec::square(4, 2.0).unwrap();
        let basis = BasisSet::power_map(1400e6).unwrap();
        let ch = ChannelModel::pathloss_only();
        let p = 8.0;
        let (a, _) = synthesize_map(&grid, &one_source(&grid, p), &ch, &basis, None, 0).unwrap();
        let double = 10.0 * 2f64.log10();
        let (b, _) =
            synthesize_map(&grid, &one_source(&grid, p + double), &ch, &basis, None, 0).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert_abs_diff_eq!(y - x, double, epsilon = 1e-9);
        }
    }

    #[test]
    fn shadowing_disabled_is_deterministic_and_seed_free() {
        let grid = GridSpec::square(4, 1.0).unwrap();
        let basis = BasisSet::power_map(1400e6).unwrap();
        let ch = ChannelModel::pathloss_only();
        let (a, _) = synthesize_map(&grid, &one_source(&grid, 5.0), &ch, &basis, None, 1).unwrap();
        let (b, _) = synthesize_map(&grid, &one_source(&grid, 5.0), &ch, &basis, None, 2).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn coefficient_reconstruction_matches_the_map() {
        let grid = GridSpec::square(5, 10.0).unwrap();
        let freqs: Vec<f64> = (0..16).map(|i| 1390e6 + 2e6 * i as f64).collect();
        let basis = BasisSet::gaussian_bank(&[1400e6, 1410e6], 5e6, freqs).unwrap();
        let sources = vec![SourceConfig {
            position: grid.point(2, 3),
            powers_dbm: vec![7.0, 9.0],
            height_m: 1.5,
        }];
        let ch = ChannelModel::gudmundson();
        let (map, coeffs) =
            synthesize_map(&grid, &sources, &ch, &basis, Some(-95.0), 99).unwrap();
        let rebuilt = map_from_coefficients(&grid, &basis, &coeffs).unwrap();
        for (a, b) in map.values.iter().zip(rebuilt.values.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn source_outside_the_area_is_rejected() {
        let grid = GridSpec::square(4, 1.0).unwrap();
        let basis = BasisSet::power_map(1400e6).unwrap();
        let ch = ChannelModel::pathloss_only();
        let src = vec![SourceConfig { position: [50.0, 0.0], powers_dbm: vec![5.0], height_m: 1.5 }];
        assert!(synthesize_map(&grid, &src, &ch, &basis, None, 0).is_err());
    }

    #[test]
    fn power_count_must_match_signal_bases() {
        let grid = GridSpec::square(4, 1.0).unwrap();
        let basis = BasisSet::power_map(1400e6).unwrap();
        let ch = ChannelModel::pathloss_only();
        let src =
            vec![SourceConfig { position: [1.0, 1.0], powers_dbm: vec![5.0, 6.0], height_m: 1.5 }];
        assert!(synthesize_map(&grid, &src, &ch, &basis, None, 0).is_err());
    }

    #[test]
    fn full_noiseless_sampling_reproduces_the_map() {
        let grid = GridSpec::square(4, 1.0).unwrap();
        let basis = BasisSet::power_map(1400e6).unwrap();
        let (map, _) = synthesize_map(
            &grid,
            &one_source(&grid, 5.0),
            &ChannelModel::pathloss_only(),
            &basis,
            None,
            0,
        )
        .unwrap();
        let s = sample_map(&map, grid.n_cells(), 0.0, None, 3).unwrap();
        assert_eq!(s.omega.len(), grid.n_cells());
        assert_eq!(s.values, map.values);
    }

    #[test]
    fn zero_samples_gives_an_empty_mask() {
        let grid = GridSpec::square(4, 1.0).unwrap();
        let map = MapTensor::new(
            grid.clone(),
            vec![1400e6],
            Array3::from_elem((4, 4, 1), -60.0),
        )
        .unwrap();
        let s = sample_map(&map, 0, 1.0, None, 3).unwrap();
        assert!(s.omega.is_empty());
        assert!(s.sample_mask.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn oversampling_is_rejected() {
        let grid = GridSpec::square(3, 1.0).unwrap();
        let map = MapTensor::new(
            grid.clone(),
            vec![1400e6],
            Array3::from_elem((3, 3, 1), -60.0),
        )
        .unwrap();
        assert!(matches!(
            sample_map(&map, 10, 0.0, None, 0),
            Err(Error::NotEnoughCells { requested: 10, eligible: 9 })
        ));
        let streets: CellSet = [(0, 0), (1, 2)].into_iter().collect();
        assert!(sample_map(&map, 3, 0.0, Some(&streets), 0).is_err());
        let s = sample_map(&map, 2, 0.0, Some(&streets), 0).unwrap();
        assert_eq!(s.omega_set(), streets);
    }

    #[test]
    fn measurement_noise_std_matches_monte_carlo() {
        let grid = GridSpec::square(2, 1.0).unwrap();
        let map = MapTensor::new(
            grid.clone(),
            vec![1400e6],
            Array3::from_elem((2, 2, 1), -60.0),
        )
        .unwrap();
        let reps = 10_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for r in 0..reps {
            let s = sample_map(&map, 1, 1.0, None, r).unwrap();
            let &(i, j) = &s.omega[0];
            let e = s.values[[i, j, 0]] + 60.0;
            acc += e;
            acc2 += e * e;
        }
        let n = reps as f64;
        let std = ((acc2 - acc * acc / n) / (n - 1.0)).sqrt();
        assert!((std - 1.0).abs() < 0.05, "empirical noise std {std}");
    }
}
