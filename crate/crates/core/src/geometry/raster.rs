use std::io;
use std::path::Path;

use crate::ink::{BBox, Point};

pub const RASTER_SIZE: usize = 100;
pub const RASTER_MARGIN: f64 = 4.0;
pub const RASTER_LINE_WIDTH: f64 = 2.0;

const CONTEXT_INTENSITY: f64 = 0.5;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn paint(&mut self, x: usize, y: usize, v: f64) {
        let px = &mut self.data[y * self.width + x];
        *px = px.max(v);
    }

    /// Binary PGM (P5) encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn write_pgm(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_pgm())
    }
}

fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(&Point::new(a.x + t * dx, a.y + t * dy))
}

fn draw_segment(img: &mut GrayImage, a: Point, b: Point, intensity: f64) {
    let reach = 0.5 * RASTER_LINE_WIDTH + 0.5;
    let x0 = (a.x.min(b.x) - reach).floor().max(0.0) as usize;
    let y0 = (a.y.min(b.y) - reach).floor().max(0.0) as usize;
    let x1 = ((a.x.max(b.x) + reach).ceil() as usize).min(img.width - 1);
    let y1 = ((a.y.max(b.y) + reach).ceil() as usize).min(img.height - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = seg_dist(Point::new(x as f64 + 0.5, y as f64 + 0.5), a, b);
            let coverage = (reach - d).clamp(0.0, 1.0);
            if coverage > 0.0 {
                img.paint(x, y, intensity * coverage);
            }
        }
    }
}

/// Renders a symbol (intensity 1) over its context traces (intensity 0.5)
/// on a `size`×`size` canvas. The joint bounding box is fit inside a 4 px
/// margin preserving aspect ratio; strokes are 2 px wide with a linear
/// antialiasing ramp; single-point traces are snapped to a pixel centre.
pub fn rasterize(primary: &[&[Point]], context: &[&[Point]], size: usize) -> GrayImage {
    let mut img = GrayImage::new(size, size);
    let bbox = BBox::of_points(primary.iter().chain(context).flat_map(|t| t.iter()));
    let Some(bbox) = bbox else {
        return img;
    };
    let avail = size as f64 - 2.0 * RASTER_MARGIN;
    let side = bbox.width().max(bbox.height());
    let scale = if side > 0.0 { avail / side } else { 0.0 };
    let off_x = RASTER_MARGIN + 0.5 * (avail - bbox.width() * scale);
    let off_y = RASTER_MARGIN + 0.5 * (avail - bbox.height() * scale);
    let map = |p: &Point| {
        Point::new(
            (p.x - bbox.min_x) * scale + off_x,
            (p.y - bbox.min_y) * scale + off_y,
        )
    };
    let snap = |p: Point| Point::new(p.x.floor() + 0.5, p.y.floor() + 0.5);
    for (traces, intensity) in [(context, CONTEXT_INTENSITY), (primary, 1.0)] {
        for t in traces {
            let pts: Vec<Point> = t.iter().map(map).collect();
            let single = pts.iter().all(|p| *p == pts[0]);
            if single {
                let p = snap(pts[0]);
                let p = Point::new(p.x.min(size as f64 - 0.5), p.y.min(size as f64 - 0.5));
                draw_segment(&mut img, p, p, intensity);
            } else {
                for w in pts.windows(2) {
                    draw_segment(&mut img, w[0], w[1], intensity);
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(pts: &[(f64, f64)]) -> Vec<Point> {
        pts.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn single_dot_reaches_full_intensity() {
        let dot = line(&[(3.0, 3.0)]);
        let img = rasterize(&[&dot], &[], RASTER_SIZE);
        let max = img.data.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        assert!(img.data.iter().filter(|&&v| v > 0.0).count() >= 1);
    }

    #[test]
    fn context_only_pixels_stay_at_half() {
        let sym = line(&[(0.0, 0.0), (0.0, 10.0)]);
        let ctx = line(&[(20.0, 0.0), (20.0, 10.0)]);
        let img = rasterize(&[&sym], &[&ctx], RASTER_SIZE);
        let frame = line(&[(0.0, 0.0), (20.0, 10.0)]);
        let primary_only = rasterize(&[&sym], &[&frame[..1], &frame[1..]], RASTER_SIZE);
        for (i, (&v, &p)) in img.data.iter().zip(&primary_only.data).enumerate() {
            assert!((0.0..=1.0).contains(&v));
            if p == 0.0 {
                assert!(v <= 0.5, "pixel {i}");
            }
        }
        assert!(img.data.contains(&0.5));
    }

    #[test]
    fn horizontal_stroke_is_a_thin_band() {
        let h = line(&[(0.0, 5.0), (10.0, 5.0)]);
        let img = rasterize(&[&h], &[], RASTER_SIZE);
        let rows: Vec<usize> = (0..RASTER_SIZE)
            .filter(|&y| (0..RASTER_SIZE).any(|x| img.get(x, y) > 0.0))
            .collect();
        assert!(rows.len() <= 3, "{rows:?}");
    }

    #[test]
    fn pgm_header() {
        let img = GrayImage::new(3, 2);
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(pgm.len(), 11 + 6);
    }
}
