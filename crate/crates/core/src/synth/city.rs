use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geo::{overlap_weights, GridSpec, OverlapWeights, PlanarPoint, Polygon, Rect};
use crate::linkage::{CensusZone, LandUse};

/// Square city of `districts_per_side`^2 districts on a cell-aligned plan.
///
/// Along each axis the plan reads margin, district, belt, district, ...,
/// margin. Each district is cut into `zones_per_side`^2 census zones by a
/// jittered lattice; the central zone is commercial and hosts the district
/// antenna in its centre cell. Margins and belts are split into unpopulated
/// rectangular zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityLayout {
    pub districts_per_side: usize,
    pub district_cells: usize,
    pub zones_per_side: usize,
    pub margin_cells: usize,
    pub belt_cells: usize,
    /// Mean total residents of a residential zone.
    pub residents_mean: f64,
    pub under11_share: f64,
    pub over80_share: f64,
    /// Total residents of a commercial zone, drawn uniformly in this range.
    pub commercial_residents: (u64, u64),
    /// Lattice jitter as a fraction of the zone spacing.
    pub jitter: f64,
}

impl Default for CityLayout {
    fn default() -> Self {
        Self {
            districts_per_side: 3,
            district_cells: 9,
            zones_per_side: 3,
            margin_cells: 4,
            belt_cells: 2,
            residents_mean: 1760.0,
            under11_share: 0.10,
            over80_share: 0.055,
            commercial_residents: (15, 40),
            jitter: 0.22,
        }
    }
}

impl CityLayout {
    pub fn side_cells(&self) -> usize {
        let d = self.districts_per_side;
        2 * self.margin_cells + d * self.district_cells + d.saturating_sub(1) * self.belt_cells
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.districts_per_side == 0 || self.zones_per_side == 0 {
            return bad("districts_per_side and zones_per_side must be positive");
        }
        if self.district_cells.is_multiple_of(2) || self.zones_per_side.is_multiple_of(2) {
            return bad("district_cells and zones_per_side must be odd so districts have a centre");
        }
        if self.district_cells < self.zones_per_side {
            return bad("district_cells must be at least zones_per_side");
        }
        if self.margin_cells == 0 {
            return bad("margin_cells must be at least 1 (industrial park and venue live there)");
        }
        if self.districts_per_side > 1 && self.belt_cells == 0 {
            return bad("belt_cells must be positive when there is more than one district");
        }
        if !(0.0..0.3).contains(&self.jitter) {
            return bad("jitter must lie in [0, 0.3) so the antenna cell stays inside the commercial zone");
        }
        let spacing = self.district_cells as f64 / self.zones_per_side as f64;
        let half = self.zones_per_side / 2;
        if (half as f64 * spacing + self.jitter * spacing) > (self.district_cells / 2) as f64 {
            return bad("the commercial zone must contain the district centre cell");
        }
        if !(self.residents_mean > 0.0) {
            return bad("residents_mean must be positive");
        }
        if !(self.under11_share >= 0.0 && self.over80_share >= 0.0 && self.under11_share + self.over80_share < 1.0) {
            return bad("age shares must be non-negative and sum below 1");
        }
        if self.commercial_residents.0 > self.commercial_residents.1 {
            return bad("commercial_residents range is reversed");
        }
        Ok(())
    }

    /// Start offsets (in cells) and lengths of the bands along one axis.
    fn bands(&self) -> Vec<(usize, usize, Band)> {
        let mut out = Vec::new();
        let mut at = 0;
        let mut push = |len: usize, kind: Band, out: &mut Vec<(usize, usize, Band)>| {
            out.push((at, len, kind));
            at += len;
        };
        push(self.margin_cells, Band::Margin, &mut out);
        for d in 0..self.districts_per_side {
            if d > 0 {
                push(self.belt_cells, Band::Belt, &mut out);
            }
            push(self.district_cells, Band::District(d), &mut out);
        }
        push(self.margin_cells, Band::Margin, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Band {
    Margin,
    Belt,
    District(usize),
}

/// Generated city: zones with their overlap weights and the cell sets used
/// to place users.
#[derive(Debug, Clone)]
pub struct City {
    pub grid: GridSpec,
    pub zones: Vec<CensusZone>,
    pub weights: Vec<OverlapWeights>,
    /// Cell index of each district antenna.
    pub antennas: Vec<usize>,
    /// Nearest antenna (index into `antennas`) for each zone.
    pub zone_antenna: Vec<usize>,
    pub work_cells: Vec<(usize, f64)>,
    pub leisure_cells: Vec<(usize, f64)>,
    pub venue_cells: Vec<(usize, f64)>,
}

fn rect_cells(grid: &GridSpec, r0: usize, rows: usize, c0: usize, cols: usize) -> Vec<(usize, f64)> {
    (r0..r0 + rows).flat_map(|r| (c0..c0 + cols).map(move |c| (grid.cell_index(r, c), 1.0))).collect()
}

fn draw_residents(rng: &mut ChaCha8Rng, total: u64, layout: &CityLayout) -> (u64, u64, u64) {
    let young = Binomial::new(total, layout.under11_share).expect("share in [0,1]").sample(rng);
    let rest = total - young;
    let old_p = (layout.over80_share / (1.0 - layout.under11_share)).min(1.0);
    let old = Binomial::new(rest, old_p).expect("share in [0,1]").sample(rng);
    (total, young, old)
}

pub fn build_city(layout: &CityLayout, grid: &GridSpec, rng: &mut ChaCha8Rng) -> Result<City, SynthError> {
    layout.validate()?;
    let side = layout.side_cells();
    if grid.n_rows < side || grid.n_cols < side {
        return Err(SynthError::Config(format!(
            "layout needs a {side}x{side} grid, configured grid is {}x{}",
            grid.n_rows, grid.n_cols
        )));
    }
    let s = grid.cell_size;
    let at = |row: f64, col: f64| PlanarPoint::new(grid.origin.x + col * s, grid.origin.y + row * s);
    let bands = layout.bands();
    let zps = layout.zones_per_side;
    let spacing = layout.district_cells as f64 / zps as f64;
    let resident_sd = Normal::new(layout.residents_mean, 0.08 * layout.residents_mean).expect("finite mean");

    let mut zones = Vec::new();
    let mut antennas = Vec::new();
    let mut commercial = Vec::new();
    let mid = layout.districts_per_side / 2;
    let mut industrial_cells = Vec::new();
    let mut venue_cells = Vec::new();
    let mut leisure_cells = Vec::new();

    for &(r0, rows, rb) in &bands {
        for &(c0, cols, cb) in &bands {
            match (rb, cb) {
                (Band::District(dr), Band::District(dc)) => {
                    // Lattice points: corners fixed, edge points slide along
                    // their edge, interior points move freely.
                    let mut lattice = vec![vec![(0.0, 0.0); zps + 1]; zps + 1];
                    for (i, row) in lattice.iter_mut().enumerate() {
                        for (j, p) in row.iter_mut().enumerate() {
                            let (mut y, mut x) = (i as f64 * spacing, j as f64 * spacing);
                            let inner_i = i > 0 && i < zps;
                            let inner_j = j > 0 && j < zps;
                            if inner_i {
                                y += rng.random_range(-layout.jitter..=layout.jitter) * spacing;
                            }
                            if inner_j {
                                x += rng.random_range(-layout.jitter..=layout.jitter) * spacing;
                            }
                            *p = (r0 as f64 + y, c0 as f64 + x);
                        }
                    }
                    let half = zps / 2;
                    for zi in 0..zps {
                        for zj in 0..zps {
                            let ring: Vec<PlanarPoint> = [(zi, zj), (zi, zj + 1), (zi + 1, zj + 1), (zi + 1, zj)]
                                .iter()
                                .map(|&(i, j)| at(lattice[i][j].0, lattice[i][j].1))
                                .collect();
                            let polygon = Polygon::new(ring, vec![])?;
                            let id = format!("D{dr}{dc}-{zi}{zj}");
                            let is_centre = zi == half && zj == half;
                            let (total, young, old) = if is_centre {
                                let (lo, hi) = layout.commercial_residents;
                                let t = rng.random_range(lo..=hi);
                                draw_residents(rng, t, layout)
                            } else {
                                let t = resident_sd.sample(rng).round().max(1.0) as u64;
                                draw_residents(rng, t, layout)
                            };
                            let land = if is_centre { LandUse::Commercial } else { LandUse::Residential };
                            if is_centre {
                                commercial.push(zones.len());
                            }
                            zones.push(CensusZone::new(id, polygon, total, young, old, land)?);
                        }
                    }
                    let centre = layout.district_cells / 2;
                    antennas.push(grid.cell_index(r0 + centre, c0 + centre));
                }
                _ => {
                    if rows == 0 || cols == 0 {
                        continue;
                    }
                    let rect = Rect::new(
                        grid.origin.x + c0 as f64 * s,
                        grid.origin.y + r0 as f64 * s,
                        grid.origin.x + (c0 + cols) as f64 * s,
                        grid.origin.y + (r0 + rows) as f64 * s,
                    );
                    let id = format!("B{r0:02}{c0:02}");
                    let industrial = cb == Band::Margin && c0 == 0 && rb == Band::District(mid);
                    let venue = rb == Band::Margin && r0 == 0 && cb == Band::District(mid);
                    let cells = rect_cells(grid, r0, rows, c0, cols);
                    if industrial {
                        industrial_cells.extend(cells);
                    } else if venue {
                        // The stadium spans the centre columns of the strip.
                        let w = (cols / 3).max(1);
                        venue_cells.extend(rect_cells(grid, r0, rows, c0 + (cols - w) / 2, w));
                    } else {
                        leisure_cells.extend(cells);
                    }
                    let land = if industrial { LandUse::Industrial } else { LandUse::Other };
                    zones.push(CensusZone::new(id, Polygon::from_rect(&rect)?, 0, 0, 0, land)?);
                }
            }
        }
    }

    let weights: Vec<OverlapWeights> = zones
        .iter()
        .map(|z| overlap_weights(z.zone_id.clone(), &z.polygon, grid))
        .collect::<Result<_, _>>()?;
    let antenna_points: Vec<PlanarPoint> = antennas
        .iter()
        .map(|&a| {
            let (r, c) = grid.cell_row_col(a);
            grid.cell_center(r, c)
        })
        .collect();
    let zone_antenna = zones
        .iter()
        .map(|z| {
            let c = z.polygon.centroid();
            (0..antenna_points.len())
                .min_by(|&a, &b| c.distance(&antenna_points[a]).total_cmp(&c.distance(&antenna_points[b])))
                .expect("at least one district")
        })
        .collect();

    // Work happens in commercial zones and the industrial park; leisure in
    // the commercial zones and the open belts.
    let cell_area = grid.cell_area();
    let mut work_cells = industrial_cells;
    for &i in &commercial {
        let area = zones[i].polygon.area();
        for &(k, w) in &weights[i].entries {
            work_cells.push((k, 2.0 * w * area / cell_area));
            leisure_cells.push((k, 2.0 * w * area / cell_area));
        }
    }
    Ok(City { grid: *grid, zones, weights, antennas, zone_antenna, work_cells, leisure_cells, venue_cells })
}
