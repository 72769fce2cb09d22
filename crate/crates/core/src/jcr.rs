//! Joint confidence region maps of (core, surface) temperature.
//!
//! A map is built by sampling the germ distribution, pushing the draws
//! through the two temperature surrogates, and binning the resulting pairs on
//! a regular grid sized to the surrogates' spread. Confidence regions follow
//! the highest-density convention: the region at probability `alpha` is the
//! smallest set of highest-probability cells whose total mass reaches
//! `alpha`, which makes the regions nested by construction.

use crate::basis::{norms_and_triples, GpcSurrogate};
use crate::error::{Error, Result};
use crate::scenario::ModeLabel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Grid half-width in units of each surrogate's standard deviation; wide
/// enough that noisy measurements rarely fall off-grid.
pub const GRID_PAD_SIGMA: f64 = 3.5;

/// Regular binning grid over the (T_c, T_s) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub tc_min: f64,
    pub tc_max: f64,
    pub ts_min: f64,
    pub ts_max: f64,
    /// Bins per axis.
    pub bins: usize,
}

impl GridSpec {
    fn cell_of(&self, tc: f64, ts: f64) -> Option<(usize, usize)> {
        if tc < self.tc_min || tc > self.tc_max || ts < self.ts_min || ts > self.ts_max {
            return None;
        }
        let fx = (tc - self.tc_min) / (self.tc_max - self.tc_min);
        let fy = (ts - self.ts_min) / (self.ts_max - self.ts_min);
        let ix = ((fx * self.bins as f64) as usize).min(self.bins - 1);
        let iy = ((fy * self.bins as f64) as usize).min(self.bins - 1);
        Some((ix, iy))
    }

    /// Clamp a pair into the nearest cell; used while binning samples so the
    /// map always sums to one.
    fn clamped_cell_of(&self, tc: f64, ts: f64) -> (usize, usize) {
        let tc = tc.clamp(self.tc_min, self.tc_max);
        let ts = ts.clamp(self.ts_min, self.ts_max);
        self.cell_of(tc, ts).expect("clamped pair is on the grid")
    }

    fn tc_at(&self, ix: usize) -> f64 {
        self.tc_min + ix as f64 * (self.tc_max - self.tc_min) / self.bins as f64
    }

    fn ts_at(&self, iy: usize) -> f64 {
        self.ts_min + iy as f64 * (self.ts_max - self.ts_min) / self.bins as f64
    }
}

/// Discrete probability map over the temperature plane for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JcrMap {
    pub label: ModeLabel,
    pub grid: GridSpec,
    /// Row-major cell probabilities, `probs[ix * bins + iy]`.
    pub probs: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    /// Means of the source surrogates, kept for reporting.
    pub mean_tc: f64,
    pub mean_ts: f64,
}

/// Sample the germ space, evaluate both surrogates, and bin the pairs.
///
/// The grid spans the surrogate mean plus/minus `GRID_PAD_SIGMA` standard
/// deviations per axis. Degenerate (zero-variance) surrogates collapse that
/// axis to a single thin cell rather than erroring.
pub fn build_map(
    label: ModeLabel,
    tc: &GpcSurrogate,
    ts: &GpcSurrogate,
    n_samples: usize,
    n_bins: usize,
    seed: u64,
) -> Result<JcrMap> {
    if n_samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "n_samples = {n_samples} must be at least 100"
        )));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be positive".into()));
    }
    if !std::sync::Arc::ptr_eq(tc.basis(), ts.basis()) && tc.basis() != ts.basis() {
        return Err(Error::InvalidParameter(
            "surrogates must share one basis".into(),
        ));
    }
    let tensors = norms_and_triples(tc.basis());
    let sigma_tc = tc.std_dev(&tensors);
    let sigma_ts = ts.std_dev(&tensors);
    // A fully deterministic pair still produces a valid single-cell map.
    let half_tc = (GRID_PAD_SIGMA * sigma_tc).max(1e-9);
    let half_ts = (GRID_PAD_SIGMA * sigma_ts).max(1e-9);
    let bins = if sigma_tc == 0.0 && sigma_ts == 0.0 { 1 } else { n_bins };
    let grid = GridSpec {
        tc_min: tc.mean() - half_tc,
        tc_max: tc.mean() + half_tc,
        ts_min: ts.mean() - half_ts,
        ts_max: ts.mean() + half_ts,
        bins,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_germs = tc.basis().n_germs();
    let mut counts = vec![0u64; bins * bins];
    let mut xi = vec![0.0; n_germs];
    for _ in 0..n_samples {
        for x in xi.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        let (ix, iy) = grid.clamped_cell_of(tc.eval(&xi), ts.eval(&xi));
        counts[ix * bins + iy] += 1;
    }
    let probs = counts
        .iter()
        .map(|&c| c as f64 / n_samples as f64)
        .collect();
    Ok(JcrMap {
        label,
        grid,
        probs,
        n_samples,
        seed,
        mean_tc: tc.mean(),
        mean_ts: ts.mean(),
    })
}

impl JcrMap {
    /// Total probability mass; one up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability of the cell containing the pair; zero off-grid.
    pub fn membership(&self, tc: f64, ts: f64) -> f64 {
        match self.grid.cell_of(tc, ts) {
            Some((ix, iy)) => self.probs[ix * self.grid.bins + iy],
            None => 0.0,
        }
    }

    pub fn max_cell_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Indices of the smallest set of highest-probability cells whose mass
    /// reaches `level`.
    pub fn hdr_cells(&self, level: f64) -> Result<Vec<usize>> {
        if !(0.0 < level && level <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "contour level {level} not in (0, 1]"
            )));
        }
        if self.probs.iter().all(|&p| p == 0.0) {
            return Err(Error::InvalidParameter("empty probability map".into()));
        }
        let mut order: Vec<usize> = (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect();
        order.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut cells = Vec::new();
        let mut mass = 0.0;
        for idx in order {
            cells.push(idx);
            mass += self.probs[idx];
            if mass >= level - 1e-12 {
                break;
            }
        }
        Ok(cells)
    }

    /// Fraction of the given pairs that fall inside the `level` region.
    pub fn containment(&self, level: f64, pairs: &[(f64, f64)]) -> Result<f64> {
        let cells = self.hdr_cells(level)?;
        let member: std::collections::HashSet<usize> = cells.into_iter().collect();
        let bins = self.grid.bins;
        let inside = pairs
            .iter()
            .filter(|&&(tc, ts)| {
                self.grid
                    .cell_of(tc, ts)
                    .map(|(ix, iy)| member.contains(&(ix * bins + iy)))
                    .unwrap_or(false)
            })
            .count();
        Ok(inside as f64 / pairs.len() as f64)
    }
}

/// Iso-probability boundaries of the highest-density regions, one set of
/// closed polylines per requested level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourSet {
    pub levels: Vec<ContourLevel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourLevel {
    pub level: f64,
    /// Closed polylines in (T_c, T_s) coordinates along cell boundaries.
    pub polylines: Vec<Vec<(f64, f64)>>,
}

/// Trace the boundary of each level's highest-density cell set.
pub fn contours(map: &JcrMap, levels: &[f64]) -> Result<ContourSet> {
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let cells = map.hdr_cells(level)?;
        let polylines = trace_boundary(&map.grid, &cells);
        out.push(ContourLevel { level, polylines });
    }
    Ok(ContourSet { levels: out })
}

impl ContourSet {
    /// CSV with header `level,polyline_id,T_c,T_s`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "level,polyline_id,T_c,T_s")?;
        for lvl in &self.levels {
            for (id, line) in lvl.polylines.iter().enumerate() {
                for (tc, ts) in line {
                    writeln!(w, "{},{},{},{}", lvl.level, id, tc, ts)?;
                }
            }
        }
        Ok(())
    }
}

/// Walk the directed boundary edges of a cell set (member cells keep the
/// region on their left) and chain them into closed loops on grid nodes.
fn trace_boundary(grid: &GridSpec, cells: &[usize]) -> Vec<Vec<(f64, f64)>> {
    use std::collections::HashMap;
    let bins = grid.bins;
    let member: std::collections::HashSet<usize> = cells.iter().copied().collect();
    let is_in = |ix: i64, iy: i64| -> bool {
        ix >= 0
            && iy >= 0
            && (ix as usize) < bins
            && (iy as usize) < bins
            && member.contains(&(ix as usize * bins + iy as usize))
    };

    // Directed edges between integer grid nodes, keyed by start node.
    let mut edges: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
    let mut add = |from: (i64, i64), to: (i64, i64)| {
        edges.entry(from).or_default().push(to);
    };
    for &cell in cells {
        let ix = (cell / bins) as i64;
        let iy = (cell % bins) as i64;
        // Node (ix, iy) is the cell's low corner in index space.
        if !is_in(ix, iy - 1) {
            add((ix, iy), (ix + 1, iy)); // bottom edge, region above
        }
        if !is_in(ix + 1, iy) {
            add((ix + 1, iy), (ix + 1, iy + 1)); // right edge
        }
        if !is_in(ix, iy + 1) {
            add((ix + 1, iy + 1), (ix, iy + 1)); // top edge
        }
        if !is_in(ix - 1, iy) {
            add((ix, iy + 1), (ix, iy)); // left edge
        }
    }

    let mut polylines = Vec::new();
    while let Some((&start, _)) = edges.iter().min_by_key(|(&(x, y), _)| (x, y)) {
        let mut line = vec![start];
        let mut node = start;
        loop {
            let nexts = match edges.get_mut(&node) {
                Some(v) if !v.is_empty() => v,
                _ => break,
            };
            // Deterministic choice when loops touch at a corner.
            nexts.sort();
            let next = nexts.remove(0);
            if nexts.is_empty() {
                edges.remove(&node);
            }
            line.push(next);
            node = next;
            if node == start {
                break;
            }
        }
        polylines.push(
            line.into_iter()
                .map(|(ix, iy)| (grid.tc_at(ix as usize), grid.ts_at(iy as usize)))
                .collect(),
        );
    }
    polylines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::MultiIndexBasis;
    use crate::galerkin::{assemble, UncertainInput};
    use crate::thermal::BatteryParams;
    use std::sync::Arc;

    fn steady_surrogates(i_mean: f64, rc_mean: f64) -> (GpcSurrogate, GpcSurrogate) {
        let basis = MultiIndexBasis::new(2, 2).unwrap();
        let params = BatteryParams::default().with_r_cond(rc_mean);
        let sys = assemble(
            &params,
            UncertainInput::new(i_mean, 0.45, 0),
            UncertainInput::new(rc_mean, 0.066, 1),
            &basis,
        )
        .unwrap();
        let steady = sys.steady_state().unwrap();
        sys.surrogates(&steady).unwrap()
    }

    fn normal_map(samples: usize, bins: usize, seed: u64) -> JcrMap {
        let (tc, ts) = steady_surrogates(13.8, 1.68);
        build_map(ModeLabel::Normal, &tc, &ts, samples, bins, seed).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let map = normal_map(20_000, 40, 17);
        assert!((map.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_surrogates_collapse_to_one_cell() {
        let basis = MultiIndexBasis::new(2, 2).unwrap();
        let tc = GpcSurrogate::constant(basis.clone(), 31.0);
        let ts = GpcSurrogate::constant(basis, 27.8);
        let map = build_map(ModeLabel::Normal, &tc, &ts, 1000, 40, 1).unwrap();
        assert_eq!(map.probs.len(), 1);
        assert_eq!(map.probs[0], 1.0);
        assert_eq!(map.membership(31.0, 27.8), 1.0);
    }

    #[test]
    fn same_seed_same_map() {
        let a = normal_map(5_000, 40, 123);
        let b = normal_map(5_000, 40, 123);
        assert_eq!(a, b);
        let c = normal_map(5_000, 40, 124);
        assert_ne!(a.probs, c.probs);
    }

    #[test]
    fn mean_cell_probability_matches_an_independent_draw() {
        let map = normal_map(100_000, 40, 5);
        let p_map = map.membership(map.mean_tc, map.mean_ts);

        // Fresh draw with a different seed, counted directly.
        let (tc, ts) = steady_surrogates(13.8, 1.68);
        let mut rng = ChaCha8Rng::seed_from_u64(999);
        let n = 100_000;
        let mut hits = 0usize;
        let target = map.grid.cell_of(map.mean_tc, map.mean_ts).unwrap();
        for _ in 0..n {
            let xi = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            if map.grid.cell_of(tc.eval(&xi), ts.eval(&xi)) == Some(target) {
                hits += 1;
            }
        }
        let p_fresh = hits as f64 / n as f64;
        let band = 3.0 * (p_fresh * (1.0 - p_fresh) / n as f64).sqrt();
        assert!(
            (p_map - p_fresh).abs() < band + 3.0 * (p_map * (1.0 - p_map) / n as f64).sqrt(),
            "map {p_map} vs fresh {p_fresh}"
        );
    }

    #[test]
    fn mode_of_the_map_sits_at_the_mean() {
        // The pushforward is near-Gaussian, so the argmax cell must be the
        // mean's cell up to one cell of histogram noise, and the mean's own
        // cell probability within sampling error of the maximum.
        let map = normal_map(100_000, 40, 29);
        let argmax = (0..map.probs.len())
            .max_by(|&a, &b| map.probs[a].partial_cmp(&map.probs[b]).unwrap())
            .unwrap();
        let (ax, ay) = (argmax / map.grid.bins, argmax % map.grid.bins);
        let (mx, my) = map.grid.cell_of(map.mean_tc, map.mean_ts).unwrap();
        assert!(ax.abs_diff(mx) <= 1, "argmax {ax} vs mean cell {mx}");
        assert!(ay.abs_diff(my) <= 1, "argmax {ay} vs mean cell {my}");
        let p_mean = map.membership(map.mean_tc, map.mean_ts);
        let p_max = map.max_cell_prob();
        let noise = 3.0 * (p_max / map.n_samples as f64).sqrt();
        assert!(p_mean >= p_max - 2.0 * noise, "p_mean {p_mean} vs p_max {p_max}");
    }

    #[test]
    fn off_grid_membership_is_zero() {
        let map = normal_map(1_000, 40, 2);
        assert_eq!(map.membership(500.0, 500.0), 0.0);
        assert_eq!(map.membership(-100.0, 27.0), 0.0);
    }

    #[test]
    fn hdr_regions_nest() {
        let map = normal_map(50_000, 40, 11);
        let c50: std::collections::HashSet<_> =
            map.hdr_cells(0.5).unwrap().into_iter().collect();
        let c90: std::collections::HashSet<_> =
            map.hdr_cells(0.9).unwrap().into_iter().collect();
        let c99: std::collections::HashSet<_> =
            map.hdr_cells(0.99).unwrap().into_iter().collect();
        assert!(c50.is_subset(&c90));
        assert!(c90.is_subset(&c99));
        assert!(!c50.is_empty());
    }

    #[test]
    fn full_level_covers_every_nonzero_cell() {
        let map = normal_map(10_000, 40, 4);
        let cells = map.hdr_cells(1.0).unwrap();
        let nonzero = map.probs.iter().filter(|&&p| p > 0.0).count();
        assert_eq!(cells.len(), nonzero);
    }

    #[test]
    fn ninety_percent_region_contains_ninety_percent_of_fresh_samples() {
        let map = normal_map(100_000, 40, 31);
        let (tc, ts) = steady_surrogates(13.8, 1.68);
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        let pairs: Vec<(f64, f64)> = (0..50_000)
            .map(|_| {
                let xi = [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ];
                (tc.eval(&xi), ts.eval(&xi))
            })
            .collect();
        let frac = map.containment(0.9, &pairs).unwrap();
        assert!((frac - 0.9).abs() < 0.02, "containment {frac}");
    }

    #[test]
    fn normal_and_simultaneous_fault_half_regions_are_disjoint() {
        let map_n = normal_map(50_000, 40, 41);
        let (tc3, ts3) = steady_surrogates(16.2, 2.28);
        let map_3 = build_map(ModeLabel::Faulty3, &tc3, &ts3, 50_000, 40, 42).unwrap();
        // Regions live on different grids; compare their cell rectangles in
        // temperature space through sample containment instead.
        let cells_n = map_n.hdr_cells(0.5).unwrap();
        for idx in cells_n {
            let ix = idx / map_n.grid.bins;
            let iy = idx % map_n.grid.bins;
            let tc = map_n.grid.tc_at(ix);
            let ts = map_n.grid.ts_at(iy);
            assert_eq!(
                map_3.containment(0.5, &[(tc, ts)]).unwrap(),
                0.0,
                "cell ({tc}, {ts}) of the normal region lies in faulty3's half region"
            );
        }
    }

    #[test]
    fn contour_polylines_close_and_serialize() {
        let map = normal_map(20_000, 40, 6);
        let set = contours(&map, &[0.5, 0.9]).unwrap();
        assert_eq!(set.levels.len(), 2);
        for lvl in &set.levels {
            assert!(!lvl.polylines.is_empty());
            for line in &lvl.polylines {
                assert!(line.len() >= 5);
                assert_eq!(line.first(), line.last(), "polyline must close");
            }
        }
        let mut out = Vec::new();
        set.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("level,polyline_id,T_c,T_s\n"));
    }

    #[test]
    fn bad_levels_and_empty_maps_error() {
        let map = normal_map(1_000, 20, 8);
        assert!(map.hdr_cells(0.0).is_err());
        assert!(map.hdr_cells(1.5).is_err());
        let empty = JcrMap {
            label: ModeLabel::Normal,
            grid: map.grid,
            probs: vec![0.0; map.probs.len()],
            n_samples: 0,
            seed: 0,
            mean_tc: 0.0,
            mean_ts: 0.0,
        };
        assert!(empty.hdr_cells(0.5).is_err());
    }

    #[test]
    fn rejects_tiny_sample_counts_and_mismatched_bases() {
        let (tc, ts) = steady_surrogates(13.8, 1.68);
        assert!(build_map(ModeLabel::Normal, &tc, &ts, 10, 40, 1).is_err());
        let other = MultiIndexBasis::new(2, 3).unwrap();
        let ts_other = GpcSurrogate::constant(Arc::clone(&other), 27.0);
        assert!(build_map(ModeLabel::Normal, &tc, &ts_other, 1000, 40, 1).is_err());
    }

    #[test]
    fn map_round_trips_through_json() {
        let map = normal_map(1_000, 10, 3);
        let json = serde_json::to_string(&map).unwrap();
        let back: JcrMap = serde_json::from_str(&json).unwrap();
        assert_eq!(map, back);
    }
}
