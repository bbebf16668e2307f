use std::io::Write;
use std::path::Path;

use crate::anchoring::{AnchorSet, VanishingPoint};
use crate::error::Result;
use crate::geometry::Point2;
use crate::repr::{ImageSpec, LanePolyline};

pub type Rgb = [u8; 3];

pub const BACKGROUND: Rgb = [24, 24, 24];
pub const ANCHOR_COLOR: Rgb = [64, 64, 80];
pub const VP_COLOR: Rgb = [255, 40, 40];
pub const VP_DISC_RADIUS_PX: f64 = 5.0;
/// Lane colors, cycled by lane index.
pub const PALETTE: [Rgb; 8] = [
    [0, 220, 0],
    [0, 160, 255],
    [255, 200, 0],
    [255, 0, 255],
    [0, 255, 255],
    [255, 128, 0],
    [160, 100, 255],
    [255, 255, 255],
];

/// An RGB raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(3 * n);
        for _ in 0..n {
            pixels.extend_from_slice(&fill);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Sets the pixel containing `(x, y)`; points outside are ignored.
    pub fn plot(&mut self, x: f64, y: f64, c: Rgb) {
        let (px, py) = (x.floor(), y.floor());
        if px < 0.0 || py < 0.0 || px >= self.width as f64 || py >= self.height as f64 {
            return;
        }
        let i = 3 * (py as usize * self.width as usize + px as usize);
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// DDA line, one sample per pixel step along the major axis.
    pub fn line(&mut self, a: Point2, b: Point2, c: Rgb) {
        if !(a.is_finite() && b.is_finite()) {
            return;
        }
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        // Cap the step count so far off-canvas endpoints stay cheap.
        let limit = 4.0 * (self.width + self.height) as f64;
        let steps = dx.abs().max(dy.abs()).ceil().clamp(1.0, limit) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            self.plot(a.x + t * dx, a.y + t * dy, c);
        }
    }

    pub fn polyline(&mut self, pts: &[Point2], c: Rgb) {
        match pts {
            [] => {}
            [p] => self.plot(p.x, p.y, c),
            _ => pts.windows(2).for_each(|w| self.line(w[0], w[1], c)),
        }
    }

    /// Fills every pixel whose center lies within `r` of `center`.
    pub fn disc(&mut self, center: Point2, r: f64, c: Rgb) {
        let y0 = (center.y - r).floor().max(0.0) as i64;
        let y1 = (center.y + r).ceil().min(self.height as f64 - 1.0) as i64;
        let x0 = (center.x - r).floor().max(0.0) as i64;
        let x1 = (center.x + r).ceil().min(self.width as f64 - 1.0) as i64;
        for py in y0..=y1 {
            for px in x0..=x1 {
                let (fx, fy) = (px as f64 + 0.5 - center.x, py as f64 + 0.5 - center.y);
                if fx * fx + fy * fy <= r * r {
                    self.plot(px as f64, py as f64, c);
                }
            }
        }
    }

    /// Binary PPM (`P6`, maxval 255).
    pub fn write_ppm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }
}

/// Draws anchors (dim), then lanes (palette colors), then the VP disc.
pub fn draw_overlay(
    spec: &ImageSpec,
    lanes: &[LanePolyline],
    vp: Option<&VanishingPoint>,
    anchors: Option<&AnchorSet>,
) -> Canvas {
    let mut canvas = Canvas::new(spec.width, spec.height, BACKGROUND);
    let rows = spec.rows();
    if let Some(set) = anchors {
        for a in &set.anchors {
            let pts: Vec<Point2> = rows
                .iter()
                .zip(&a.sampled_xs)
                .filter(|(&y, _)| y >= a.origin.y)
                .map(|(&y, &x)| Point2::new(x, y))
                .chain(std::iter::once(a.origin))
                .collect();
            let mut pts = pts;
            pts.sort_by(|p, q| p.y.total_cmp(&q.y));
            canvas.polyline(&pts, ANCHOR_COLOR);
        }
    }
    for (k, lane) in lanes.iter().enumerate() {
        canvas.polyline(&lane.points(&rows), PALETTE[k % PALETTE.len()]);
    }
    if let Some(vp) = vp {
        canvas.disc(Point2::new(vp.x, vp.y), VP_DISC_RADIUS_PX, VP_COLOR);
    }
    canvas
}

pub fn render_overlay(
    spec: &ImageSpec,
    lanes: &[LanePolyline],
    vp: Option<&VanishingPoint>,
    anchors: Option<&AnchorSet>,
    out: &Path,
) -> Result<()> {
    let canvas = draw_overlay(spec, lanes, vp, anchors);
    let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
    canvas.write_ppm(&mut f)?;
    f.flush()?;
    Ok(())
}
