use super::polygon::ring_signed_area;
use super::{PlanarPoint, Polygon, Rect};

#[derive(Clone, Copy)]
pub(crate) enum Edge {
    Left(f64),
    Right(f64),
    Bottom(f64),
    Top(f64),
}

impl Edge {
    fn inside(&self, p: PlanarPoint) -> bool {
        match *self {
            Edge::Left(v) => p.x >= v,
            Edge::Right(v) => p.x <= v,
            Edge::Bottom(v) => p.y >= v,
            Edge::Top(v) => p.y <= v,
        }
    }

    fn intersect(&self, a: PlanarPoint, b: PlanarPoint) -> PlanarPoint {
        match *self {
            Edge::Left(v) | Edge::Right(v) => {
                let t = (v - a.x) / (b.x - a.x);
                PlanarPoint::new(v, a.y + t * (b.y - a.y))
            }
            Edge::Bottom(v) | Edge::Top(v) => {
                let t = (v - a.y) / (b.y - a.y);
                PlanarPoint::new(a.x + t * (b.x - a.x), v)
            }
        }
    }
}

/// One Sutherland-Hodgman pass against a single half-plane.
pub(crate) fn clip_ring_edge(ring: &[PlanarPoint], edge: Edge, out: &mut Vec<PlanarPoint>) {
    out.clear();
    let n = ring.len();
    if n == 0 {
        return;
    }
    let mut prev = ring[n - 1];
    let mut prev_in = edge.inside(prev);
    for &cur in ring {
        let cur_in = edge.inside(cur);
        if cur_in {
            if !prev_in {
                out.push(edge.intersect(prev, cur));
            }
            out.push(cur);
        } else if prev_in {
            out.push(edge.intersect(prev, cur));
        }
        prev = cur;
        prev_in = cur_in;
    }
}

/// Clips an implicitly closed ring to `rect`. The output may contain
/// zero-width bridges along the rectangle boundary when a concave ring
/// leaves and re-enters; these contribute no area.
pub fn clip_ring_to_rect(ring: &[PlanarPoint], rect: &Rect) -> Vec<PlanarPoint> {
    let mut a = ring.to_vec();
    let mut b = Vec::with_capacity(ring.len() + 4);
    for edge in [
        Edge::Left(rect.min_x),
        Edge::Right(rect.max_x),
        Edge::Bottom(rect.min_y),
        Edge::Top(rect.max_y),
    ] {
        clip_ring_edge(&a, edge, &mut b);
        std::mem::swap(&mut a, &mut b);
        if a.is_empty() {
            break;
        }
    }
    a
}

/// Clips `poly` against the four half-planes of `rect`. Returns `None` when
/// the intersection has no area.
pub fn clip_to_rect(poly: &Polygon, rect: &Rect) -> Option<Polygon> {
    let ext = clip_ring_to_rect(poly.exterior(), rect);
    if ext.len() < 3 || ring_signed_area(&ext) == 0.0 {
        return None;
    }
    let holes = poly
        .holes()
        .iter()
        .map(|h| clip_ring_to_rect(h, rect))
        .filter(|h| h.len() >= 3 && ring_signed_area(h) != 0.0)
        .collect();
    let out = Polygon::from_rings_unchecked(ext, holes);
    if out.area() <= 0.0 {
        return None;
    }
    Some(out)
}
