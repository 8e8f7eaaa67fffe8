use super::{GeoError, PlanarPoint, Rect};

/// Simple polygon with optional holes.
///
/// Rings are stored implicitly closed: the closing vertex is never repeated.
/// A trailing copy of the first vertex is stripped on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<PlanarPoint>,
    holes: Vec<Vec<PlanarPoint>>,
}

/// Shoelace signed area of an implicitly closed ring (positive when CCW).
pub fn ring_signed_area(ring: &[PlanarPoint]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    // Shift by the first vertex to limit cancellation on large coordinates.
    let o = ring[0];
    let mut acc = 0.0;
    for i in 1..n - 1 {
        let a = ring[i];
        let b = ring[i + 1];
        acc += (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
    }
    0.5 * acc
}

fn normalize_ring(mut ring: Vec<PlanarPoint>, what: &str) -> Result<Vec<PlanarPoint>, GeoError> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(GeoError::InvalidCoordinate(format!("{what} has a non-finite vertex")));
    }
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(GeoError::Degenerate(format!(
            "{what} has {} distinct vertices, need at least 3",
            ring.len()
        )));
    }
    if ring_signed_area(&ring) == 0.0 {
        return Err(GeoError::Degenerate(format!("{what} has zero area")));
    }
    Ok(ring)
}

fn on_segment(p: PlanarPoint, a: PlanarPoint, b: PlanarPoint, tol: f64) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = PlanarPoint::new(a.x + t * dx, a.y + t * dy);
    q.distance(&p) <= tol
}

fn ring_crossings(p: PlanarPoint, ring: &[PlanarPoint]) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Even-odd point-in-polygon test over all rings (holes excluded).
pub fn point_in_polygon(p: PlanarPoint, poly: &Polygon) -> bool {
    let mut inside = ring_crossings(p, &poly.exterior);
    for h in &poly.holes {
        if ring_crossings(p, h) {
            inside = !inside;
        }
    }
    inside
}

impl Polygon {
    pub fn new(exterior: Vec<PlanarPoint>, holes: Vec<Vec<PlanarPoint>>) -> Result<Self, GeoError> {
        let exterior = normalize_ring(exterior, "exterior ring")?;
        let scale = bbox_of(&exterior).diagonal().max(1.0);
        let tol = 1e-9 * scale;
        let mut out_holes = Vec::with_capacity(holes.len());
        for (i, h) in holes.into_iter().enumerate() {
            let h = normalize_ring(h, &format!("hole {i}"))?;
            for v in &h {
                let inside = ring_crossings(*v, &exterior)
                    || (0..exterior.len()).any(|k| {
                        on_segment(*v, exterior[k], exterior[(k + 1) % exterior.len()], tol)
                    });
                if !inside {
                    return Err(GeoError::Degenerate(format!(
                        "hole {i} has vertex ({}, {}) outside the exterior ring",
                        v.x, v.y
                    )));
                }
            }
            out_holes.push(h);
        }
        let poly = Self { exterior, holes: out_holes };
        if poly.area() <= 0.0 {
            return Err(GeoError::Degenerate("holes cover the whole exterior".into()));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle as a counter-clockwise polygon.
    pub fn from_rect(r: &Rect) -> Result<Self, GeoError> {
        Self::new(
            vec![
                PlanarPoint::new(r.min_x, r.min_y),
                PlanarPoint::new(r.max_x, r.min_y),
                PlanarPoint::new(r.max_x, r.max_y),
                PlanarPoint::new(r.min_x, r.max_y),
            ],
            vec![],
        )
    }

    /// Assembles clipped rings without validation; rings may touch or be
    /// collinear along the clip boundary.
    pub(crate) fn from_rings_unchecked(exterior: Vec<PlanarPoint>, holes: Vec<Vec<PlanarPoint>>) -> Self {
        Self { exterior, holes }
    }

    pub fn exterior(&self) -> &[PlanarPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<PlanarPoint>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[PlanarPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    /// Shoelace area of the exterior minus the holes, independent of ring
    /// orientation.
    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior).abs()
            - self.holes.iter().map(|h| ring_signed_area(h).abs()).sum::<f64>()
    }

    pub fn bbox(&self) -> Rect {
        bbox_of(&self.exterior)
    }

    /// Vertex-average of the exterior ring. Lies inside convex polygons only.
    pub fn vertex_centroid(&self) -> PlanarPoint {
        let n = self.exterior.len() as f64;
        let (sx, sy) = self.exterior.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        PlanarPoint::new(sx / n, sy / n)
    }

    /// Area centroid of the polygon (holes subtracted).
    pub fn centroid(&self) -> PlanarPoint {
        let mut a_tot = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        let o = self.exterior[0];
        for (k, ring) in self.rings().enumerate() {
            let sign = if k == 0 { 1.0 } else { -1.0 };
            let a = ring_signed_area(ring);
            let orient = if a < 0.0 { -1.0 } else { 1.0 };
            let n = ring.len();
            for i in 0..n {
                let p = PlanarPoint::new(ring[i].x - o.x, ring[i].y - o.y);
                let q = PlanarPoint::new(ring[(i + 1) % n].x - o.x, ring[(i + 1) % n].y - o.y);
                let cross = (p.x * q.y - q.x * p.y) * sign * orient;
                cx += (p.x + q.x) * cross;
                cy += (p.y + q.y) * cross;
            }
            a_tot += sign * a.abs();
        }
        PlanarPoint::new(o.x + cx / (6.0 * a_tot), o.y + cy / (6.0 * a_tot))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        let shift = |r: &Vec<PlanarPoint>| r.iter().map(|p| PlanarPoint::new(p.x + dx, p.y + dy)).collect();
        Polygon {
            exterior: shift(&self.exterior),
            holes: self.holes.iter().map(shift).collect(),
        }
    }
}

pub(crate) fn bbox_of(ring: &[PlanarPoint]) -> Rect {
    let mut r = Rect {
        min_x: f64::INFINITY,
        min_y: f64::INFINITY,
        max_x: f64::NEG_INFINITY,
        max_y: f64::NEG_INFINITY,
    };
    for p in ring {
        r.min_x = r.min_x.min(p.x);
        r.min_y = r.min_y.min(p.y);
        r.max_x = r.max_x.max(p.x);
        r.max_y = r.max_y.max(p.y);
    }
    r
}
