use crate::error::{Error, Result};
use crate::geometry::Vec2;

const EDGE_EPS: f64 = 1e-9;

fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    let (ab, ap) = (b - a, p - a);
    let cross = ab.x * ap.y - ab.y * ap.x;
    let len = ab.norm();
    if cross.abs() > EDGE_EPS * len.max(1.0) {
        return false;
    }
    let t = ab.x * ap.x + ab.y * ap.y;
    t >= -EDGE_EPS && t <= ab.x * ab.x + ab.y * ab.y + EDGE_EPS
}

/// Even-odd ray-crossing test. Points on an edge or vertex count as inside.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> Result<bool> {
    if poly.len() < 3 {
        return Err(Error::DegeneratePolygon(format!("{} vertices", poly.len())));
    }
    if !(signed_area(poly).abs() > 0.0) {
        return Err(Error::DegeneratePolygon("zero area".into()));
    }
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if on_segment(p, a, b) {
            return Ok(true);
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    Ok(inside)
}

/// Counter-clockwise convex hull (monotone chain), without collinear points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}
