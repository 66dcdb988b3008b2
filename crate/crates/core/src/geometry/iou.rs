//! Rotated-box IoU by convex polygon clipping, plus a Monte-Carlo estimate
//! used to cross-check it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{obb_to_qbb, Obb};
use crate::linalg::Vec2;

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Shoelace area, positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let j = (i + 1) % poly.len();
        acc += cross(poly[i], poly[j]);
    }
    0.5 * acc
}

/// Sutherland-Hodgman: clip `subject` against a convex CCW `clip` polygon.
fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let side = |p: Vec2| cross(edge, p - a);
        let input = std::mem::take(&mut output);
        for k in 0..input.len() {
            let cur = input[k];
            let prev = input[(k + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    output
}

fn intersect(p: Vec2, q: Vec2, sp: f64, sq: f64) -> Vec2 {
    let t = sp / (sp - sq);
    p + (q - p).scale(t)
}

fn same_vertex_set(a: &[Vec2; 4], b: &[Vec2; 4]) -> bool {
    a.iter().all(|p| b.contains(p)) && b.iter().all(|p| a.contains(p))
}

/// Intersection over union of two oriented boxes. Symmetric, in `[0, 1]`.
pub fn rotated_iou(a: &Obb, b: &Obb) -> f64 {
    let pa = obb_to_qbb(a).corners;
    let pb = obb_to_qbb(b).corners;
    if same_vertex_set(&pa, &pb) {
        return 1.0;
    }
    let inter = polygon_area(&clip_convex(&pa, &pb)).max(0.0);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn contains(b: &Obb, p: Vec2) -> bool {
    let local = (p - b.center()).rotate(-b.theta);
    local.x.abs() <= b.w / 2.0 && local.y.abs() <= b.h / 2.0
}

fn bounds(b: &Obb) -> (Vec2, Vec2) {
    let corners = obb_to_qbb(b).corners;
    let lo = corners
        .iter()
        .fold(Vec2::new(f64::INFINITY, f64::INFINITY), |m, p| {
            Vec2::new(m.x.min(p.x), m.y.min(p.y))
        });
    let hi = corners
        .iter()
        .fold(Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| {
            Vec2::new(m.x.max(p.x), m.y.max(p.y))
        });
    (lo, hi)
}

/// Monte-Carlo IoU.
///
/// Points are drawn uniformly from the bounding box of the union until
/// `samples` of them land inside the union; the estimate is the fraction of
/// those that also land in the intersection. Conditioning on union hits makes
/// the estimate binomial with exactly `samples` trials, so its standard error
/// is at most `√(0.25 / samples)`.
pub fn mc_iou(a: &Obb, b: &Obb, samples: usize, seed: u64) -> f64 {
    let (lo_a, hi_a) = bounds(a);
    let (lo_b, hi_b) = bounds(b);
    let lo = Vec2::new(lo_a.x.min(lo_b.x), lo_a.y.min(lo_b.y));
    let hi = Vec2::new(hi_a.x.max(hi_b.x), hi_a.y.max(hi_b.y));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut in_union, mut in_both) = (0usize, 0usize);
    while in_union < samples {
        let p = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
        let (ia, ib) = (contains(a, p), contains(b, p));
        if ia || ib {
            in_union += 1;
            if ia && ib {
                in_both += 1;
            }
        }
    }
    if samples == 0 {
        return 0.0;
    }
    in_both as f64 / in_union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn obb(cx: f64, cy: f64, w: f64, h: f64, t: f64) -> Obb {
        Obb::new(cx, cy, w, h, t).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = obb(1.0, 2.0, 3.0, 1.0, 0.4);
        assert_eq!(rotated_iou(&a, &a), 1.0);
        assert_eq!(mc_iou(&a, &a, 10_000, 1), 1.0);
        let b = obb(101.0, 2.0, 1.0, 1.0, 0.0);
        let c = obb(1.0, 2.0, 1.0, 1.0, 0.0);
        assert_eq!(rotated_iou(&b, &c), 0.0);
        assert_eq!(mc_iou(&b, &c, 10_000, 1), 0.0);
    }

    #[test]
    fn square_vs_rotated_square() {
        let a = obb(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = obb(0.0, 0.0, 1.0, 1.0, FRAC_PI_4);
        // Octagon of area 2(√2 - 1); union = 2 - that.
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        let exact = inter / (2.0 - inter);
        assert!((rotated_iou(&a, &b) - exact).abs() < 1e-12);
        assert!((mc_iou(&a, &b, 1_000_000, 42) - exact).abs() < 0.01);
    }

    #[test]
    fn axis_aligned_overlap() {
        let a = obb(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = obb(1.0, 0.0, 2.0, 2.0, 0.0);
        assert!((rotated_iou(&a, &b) - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn contained_box() {
        let a = obb(0.0, 0.0, 4.0, 4.0, 0.3);
        let b = obb(0.0, 0.0, 1.0, 1.0, -0.2);
        assert!((rotated_iou(&a, &b) - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn shoelace_orientation() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert_eq!(polygon_area(&sq), 1.0);
        let mut rev = sq;
        rev.reverse();
        assert_eq!(polygon_area(&rev), -1.0);
    }
}
