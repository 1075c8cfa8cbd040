use crate::ink::Point;

/// Static 2-d tree over a point set, stored as an implicit balanced tree:
/// the node of `[lo, hi)` is at `mid = (lo + hi) / 2` and splits on x at
/// even depth, y at odd depth.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point>,
    index: Vec<usize>,
}

fn coord(p: &Point, axis: usize) -> f64 {
    if axis == 0 {
        p.x
    } else {
        p.y
    }
}

impl KdTree {
    pub fn new(points: &[Point]) -> Self {
        let mut items: Vec<(Point, usize)> = points.iter().copied().zip(0..).collect();
        build(&mut items, 0);
        KdTree {
            points: items.iter().map(|(p, _)| *p).collect(),
            index: items.iter().map(|(_, i)| *i).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest stored point to `q`: `(original index, squared distance)`.
    pub fn nearest(&self, q: &Point) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.points.len(), 0, &mut best);
        Some((self.index[best.0], best.1))
    }

    fn search(&self, q: &Point, lo: usize, hi: usize, depth: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let p = &self.points[mid];
        let d = q.dist_sq(p);
        if d < best.1 {
            *best = (mid, d);
        }
        let axis = depth % 2;
        let delta = coord(q, axis) - coord(p, axis);
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if delta * delta <= best.1 {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(items: &mut [(Point, usize)], depth: usize) {
    if items.len() <= 1 {
        return;
    }
    let axis = depth % 2;
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| coord(&a.0, axis).total_cmp(&coord(&b.0, axis)));
    let (left, right) = items.split_at_mut(mid);
    build(left, depth + 1);
    build(&mut right[1..], depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 10, 57, 300] {
            let pts: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                .collect();
            let tree = KdTree::new(&pts);
            for _ in 0..50 {
                let q = Point::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0));
                let brute = pts
                    .iter()
                    .map(|p| q.dist_sq(p))
                    .fold(f64::INFINITY, f64::min);
                let (i, d) = tree.nearest(&q).unwrap();
                assert_eq!(d, brute);
                assert_eq!(q.dist_sq(&pts[i]), d);
            }
        }
        assert!(KdTree::new(&[]).nearest(&Point::default()).is_none());
    }

    #[test]
    fn duplicate_points() {
        let pts = vec![Point::new(1.0, 1.0); 9];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Point::new(1.0, 1.0)).unwrap().1, 0.0);
    }
}
