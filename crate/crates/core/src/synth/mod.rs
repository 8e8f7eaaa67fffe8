//! Synthetic city and phone-count generator with planted day regimes and
//! antenna displacement, used where real operator data is unavailable.

mod city;

pub use city::{build_city, City, CityLayout};

use chrono::{Days, NaiveDate};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint, GridSpec, PlanarPoint};
use crate::linkage::LinkageError;
use crate::series::{DayRecord, GridFrame, GridSeries, SeriesError, SeriesMetadata, QUARTERS_PER_DAY};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Linkage(#[from] LinkageError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Raised-cosine bump over `[start, end]` quarters, 1 at the centre and
/// exactly 0 outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn shape(&self, t: f64) -> f64 {
        if t <= self.start || t >= self.end {
            return 0.0;
        }
        let u = (t - self.start) / (self.end - self.start);
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * u).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub window: Window,
    /// Peak number of event visitors at the venue.
    pub visitors_peak: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub name: String,
    /// Mixture weight; weights are normalised over all regimes.
    pub weight: f64,
    /// Share of resident users away from home at the activity peak.
    pub away_peak: f64,
    pub activity: Window,
    /// Peak number of visitors from outside the city.
    pub visitors_peak: u64,
    /// Share of active users at work places; the rest go to leisure areas.
    pub work_share: f64,
    #[serde(default)]
    pub event: Option<EventSpec>,
}

impl RegimeSpec {
    pub fn weekday() -> Self {
        Self {
            name: "weekday".into(),
            weight: 0.5,
            away_peak: 0.45,
            activity: Window { start: 26.0, end: 80.0 },
            visitors_peak: 18_000,
            work_share: 0.85,
            event: None,
        }
    }

    pub fn weekend() -> Self {
        Self {
            name: "weekend".into(),
            weight: 0.3,
            away_peak: 0.30,
            activity: Window { start: 36.0, end: 82.0 },
            visitors_peak: 8_000,
            work_share: 0.15,
            event: None,
        }
    }

    pub fn event() -> Self {
        Self {
            name: "event".into(),
            weight: 0.2,
            event: Some(EventSpec { window: Window { start: 54.0, end: 78.0 }, visitors_peak: 10_000 }),
            ..Self::weekday()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Grid to generate on; derived from the layout when absent.
    pub grid: Option<GridSpec>,
    pub cell_size_m: f64,
    /// Geographic position of the grid origin, for lon/lat export.
    pub geo_origin: GeoPoint,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub layout: CityLayout,
    pub regimes: Vec<RegimeSpec>,
    /// True operator penetration among filtered residents.
    pub p: f64,
    /// Probability that a user at home is recorded at the antenna cell.
    pub q: f64,
    pub seed: u64,
    /// Relative day-to-day spread of regime amplitudes.
    pub amplitude_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid: None,
            cell_size_m: 150.0,
            geo_origin: GeoPoint { lon: 9.13, lat: 45.43 },
            start_date: NaiveDate::from_ymd_opt(2015, 10, 1).expect("valid date"),
            n_days: 60,
            layout: CityLayout::default(),
            regimes: vec![RegimeSpec::weekday(), RegimeSpec::weekend(), RegimeSpec::event()],
            p: 0.30,
            q: 0.30,
            seed: 1,
            amplitude_jitter: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn grid_spec(&self) -> Result<GridSpec, SynthError> {
        match self.grid {
            Some(g) => {
                g.validate()?;
                Ok(g)
            }
            None => {
                let n = self.layout.side_cells();
                Ok(GridSpec::new(PlanarPoint::new(0.0, 0.0), self.cell_size_m, n, n)?)
            }
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad(format!("p = {} must lie in (0, 1)", self.p));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return bad(format!("q = {} must lie in [0, 1]", self.q));
        }
        if self.n_days == 0 {
            return bad("n_days must be positive".into());
        }
        if self.regimes.is_empty() {
            return bad("at least one regime is required".into());
        }
        for r in &self.regimes {
            if !(r.weight >= 0.0 && r.weight.is_finite()) {
                return bad(format!("regime {} has weight {}", r.name, r.weight));
            }
            if !(0.0..=1.0).contains(&r.away_peak) || !(0.0..=1.0).contains(&r.work_share) {
                return bad(format!("regime {} shares must lie in [0, 1]", r.name));
            }
            let windows = std::iter::once(r.activity).chain(r.event.as_ref().map(|e| e.window));
            for w in windows {
                if !(w.start < w.end && w.start >= 0.0 && w.end <= QUARTERS_PER_DAY as f64) {
                    return bad(format!("regime {} has window {:?} outside the day", r.name, w));
                }
            }
        }
        if self.regimes.iter().map(|r| r.weight).sum::<f64>() <= 0.0 {
            return bad("regime weights sum to zero".into());
        }
        if !(self.amplitude_jitter >= 0.0 && self.amplitude_jitter < 0.5) {
            return bad(format!("amplitude_jitter {} must lie in [0, 0.5)", self.amplitude_jitter));
        }
        if self.start_date.checked_add_days(Days::new(self.n_days as u64)).is_none() {
            return bad("date range overflows".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneTruth {
    pub zone_id: String,
    pub land_use: crate::linkage::LandUse,
    pub residents_filtered: u64,
    pub operator_users: u64,
    pub antenna_cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTruth {
    pub date: NaiveDate,
    pub regime: String,
    pub regime_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub p: f64,
    pub q: f64,
    pub grid: GridSpec,
    pub geo_origin: GeoPoint,
    pub antennas: Vec<usize>,
    pub total_residents_filtered: u64,
    pub total_operator_users: u64,
    pub zones: Vec<ZoneTruth>,
    pub days: Vec<DayTruth>,
}

impl GroundTruth {
    pub fn regime_labels(&self) -> Vec<usize> {
        self.days.iter().map(|d| d.regime_index).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub series: GridSeries,
    pub city: City,
    pub truth: GroundTruth,
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
}

/// Spreads `n` users over weighted cells by sequential conditional binomials.
fn scatter(rng: &mut ChaCha8Rng, n: u64, cells: &[(usize, f64)], out: &mut [f64]) {
    let mut left = n;
    let mut mass: f64 = cells.iter().map(|c| c.1).sum();
    for (i, &(k, w)) in cells.iter().enumerate() {
        if left == 0 {
            break;
        }
        let take = if i + 1 == cells.len() { left } else { binomial(rng, left, w / mass) };
        out[k] += take as f64;
        left -= take;
        mass -= w;
    }
}

fn day_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates the city, its census zones and `n_days` days of grid frames.
/// Output depends only on the configuration; days are generated in
/// parallel on independent random streams.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let grid = cfg.grid_spec()?;
    let mut rng = day_rng(cfg.seed, 0);
    let city = build_city(&cfg.layout, &grid, &mut rng)?;

    let users: Vec<u64> = city.zones.iter().map(|z| binomial(&mut rng, z.residents_filtered(), cfg.p)).collect();
    let total_w: f64 = cfg.regimes.iter().map(|r| r.weight).sum();
    let days: Vec<DayTruth> = (0..cfg.n_days)
        .map(|d| {
            let u = rng.random::<f64>() * total_w;
            let mut acc = 0.0;
            let mut idx = cfg.regimes.len() - 1;
            for (i, r) in cfg.regimes.iter().enumerate() {
                acc += r.weight;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            DayTruth {
                date: cfg.start_date + Days::new(d as u64),
                regime: cfg.regimes[idx].name.clone(),
                regime_index: idx,
            }
        })
        .collect();

    let records: Vec<DayRecord> = days
        .par_iter()
        .enumerate()
        .map(|(d, truth)| {
            let mut rng = day_rng(cfg.seed, 1 + d as u64);
            let regime = &cfg.regimes[truth.regime_index];
            let jitter = if cfg.amplitude_jitter > 0.0 {
                let n = Normal::new(1.0, cfg.amplitude_jitter).expect("finite sd");
                n.sample(&mut rng).clamp(0.5, 1.5)
            } else {
                1.0
            };
            let frames = (0..QUARTERS_PER_DAY)
                .map(|t| simulate_quarter(&city, &users, cfg, regime, jitter, truth.date, t, &mut rng))
                .collect();
            DayRecord { date: truth.date, frames }
        })
        .collect();

    let zones = city
        .zones
        .iter()
        .zip(&users)
        .zip(&city.zone_antenna)
        .map(|((z, &u), &a)| ZoneTruth {
            zone_id: z.zone_id.clone(),
            land_use: z.land_use,
            residents_filtered: z.residents_filtered(),
            operator_users: u,
            antenna_cell: city.antennas[a],
        })
        .collect::<Vec<_>>();
    let truth = GroundTruth {
        seed: cfg.seed,
        p: cfg.p,
        q: cfg.q,
        grid,
        geo_origin: cfg.geo_origin,
        antennas: city.antennas.clone(),
        total_residents_filtered: zones.iter().map(|z| z.residents_filtered).sum(),
        total_operator_users: users.iter().sum(),
        zones,
        days,
    };
    let metadata = SeriesMetadata { source: format!("synthetic seed={}", cfg.seed), units: "connected phones".into() };
    let series = GridSeries::new(grid, records, metadata)?;
    Ok(SynthOutput { series, city, truth })
}

#[allow(clippy::too_many_arguments)]
fn simulate_quarter(
    city: &City,
    users: &[u64],
    cfg: &SynthConfig,
    regime: &RegimeSpec,
    jitter: f64,
    date: NaiveDate,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> GridFrame {
    let grid = &city.grid;
    let mut values = vec![0.0; grid.n_cells()];
    let tf = t as f64;
    let activity = regime.activity.shape(tf);
    let away_p = (regime.away_peak * jitter * activity).clamp(0.0, 1.0);
    let mut active = 0;
    for (z, &u) in users.iter().enumerate() {
        if u == 0 {
            continue;
        }
        let away = binomial(rng, u, away_p);
        let home = u - away;
        let displaced = binomial(rng, home, cfg.q);
        values[city.antennas[city.zone_antenna[z]]] += displaced as f64;
        scatter(rng, home - displaced, &city.weights[z].entries, &mut values);
        active += away;
    }
    let pool = (regime.visitors_peak as f64 * jitter).round() as u64;
    active += binomial(rng, pool, activity);
    let work = binomial(rng, active, regime.work_share);
    scatter(rng, work, &city.work_cells, &mut values);
    scatter(rng, active - work, &city.leisure_cells, &mut values);
    if let Some(ev) = &regime.event {
        let pool = (ev.visitors_peak as f64 * jitter).round() as u64;
        let n = binomial(rng, pool, ev.window.shape(tf));
        scatter(rng, n, &city.venue_cells, &mut values);
    }
    let values = Array2::from_shape_vec((grid.n_rows, grid.n_cols), values).expect("cell count matches grid");
    GridFrame { date, quarter: t as u8, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_shape() {
        let w = Window { start: 54.0, end: 78.0 };
        assert_eq!(w.shape(54.0), 0.0);
        assert_eq!(w.shape(84.0), 0.0);
        assert!((w.shape(66.0) - 1.0).abs() < 1e-12);
        assert!((w.shape(60.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scatter_conserves_counts() {
        let mut rng = day_rng(3, 0);
        let mut out = vec![0.0; 5];
        scatter(&mut rng, 1000, &[(0, 0.2), (2, 0.5), (4, 0.3)], &mut out);
        assert_eq!(out.iter().sum::<f64>(), 1000.0);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn default_city_shape() {
        let cfg = SynthConfig::default();
        let grid = cfg.grid_spec().unwrap();
        assert_eq!((grid.n_rows, grid.n_cols), (39, 39));
        let city = build_city(&cfg.layout, &grid, &mut day_rng(1, 0)).unwrap();
        let residential = city.zones.iter().filter(|z| z.land_use == crate::linkage::LandUse::Residential).count();
        assert_eq!(residential, 72);
        assert_eq!(city.antennas.len(), 9);
        // Districts and belts tile the grid exactly.
        let area: f64 = city.zones.iter().map(|z| z.polygon.area()).sum();
        assert!((area - grid.extent().area()).abs() < 1e-6);
        for w in &city.weights {
            assert!((w.covered_fraction - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SynthConfig { p: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.p = 0.3;
        cfg.q = 1.2;
        assert!(cfg.validate().is_err());
        cfg.q = 0.5;
        cfg.grid = Some(GridSpec::new(PlanarPoint::new(0.0, 0.0), 150.0, 20, 20).unwrap());
        assert!(matches!(synth_generate(&cfg), Err(SynthError::Config(_))));
    }
}
