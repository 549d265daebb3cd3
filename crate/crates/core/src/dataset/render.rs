//! Procedural bridge-facade renderer.
//!
//! Each subtype is drawn in meter space from rectangles and round-capped
//! line segments, then rasterized with 4×4 supersampling so edges carry
//! fractional coverage. The 330 m horizontal window (a 300 m bridge with
//! 15 m margins) maps onto the canvas width, and the deck surface sits at
//! 88/128 of the canvas height, leaving room above for towers and arches
//! and below for piers.

use serde::{Deserialize, Serialize};

use super::Subtype;
use crate::error::{Error, Result};
use crate::raster::Image;

pub const FRAMES: usize = 16;
pub const WINDOW_METERS: f64 = 330.0;
pub const MARGIN_METERS: f64 = 15.0;
const DECK_ROW_FRACTION: f64 = 88.0 / 128.0;
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanvasSize {
    pub width: usize,
    pub height: usize,
}

impl CanvasSize {
    pub const FULL: CanvasSize = CanvasSize {
        width: 512,
        height: 128,
    };
    pub const DESK: CanvasSize = CanvasSize {
        width: 256,
        height: 64,
    };

    pub fn meters_per_pixel(self) -> f64 {
        WINDOW_METERS / self.width as f64
    }

    pub fn deck_row(self) -> f64 {
        self.height as f64 * DECK_ROW_FRACTION
    }
}

impl Default for CanvasSize {
    fn default() -> Self {
        CanvasSize::FULL
    }
}

/// Animated member width for a frame, linear from the subtype's minimum at
/// frame 0 to its maximum at frame 15.
pub fn member_width(subtype: Subtype, frame: usize) -> f64 {
    let (lo, hi) = subtype.member_range();
    lo + (hi - lo) * frame as f64 / (FRAMES - 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeRenderSpec {
    pub subtype: Subtype,
    pub frame: usize,
    pub member_width: f64,
    pub canvas: CanvasSize,
}

impl BridgeRenderSpec {
    pub fn new(subtype: Subtype, frame: usize, canvas: CanvasSize) -> Result<Self> {
        let spec = BridgeRenderSpec {
            subtype,
            frame,
            member_width: member_width(subtype, frame.min(FRAMES - 1)),
            canvas,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.canvas.meters_per_pixel()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame >= FRAMES {
            return Err(Error::InvalidArgument(format!(
                "frame {} outside 0..{FRAMES}",
                self.frame
            )));
        }
        let (lo, hi) = self.subtype.member_range();
        if !(lo..=hi).contains(&self.member_width) {
            return Err(Error::InvalidArgument(format!(
                "member width {} m outside [{lo}, {hi}] for {}",
                self.member_width, self.subtype
            )));
        }
        if self.canvas.width < 8 || self.canvas.height < 4 {
            return Err(Error::InvalidArgument(format!(
                "canvas {}x{} too small",
                self.canvas.width, self.canvas.height
            )));
        }
        Ok(())
    }
}

pub fn render_bridge(spec: &BridgeRenderSpec) -> Result<Image> {
    spec.validate()?;
    let mut sketch = Sketch::new(spec.canvas);
    let t = (spec.member_width - spec.subtype.member_range().0)
        / (spec.subtype.member_range().1 - spec.subtype.member_range().0);
    draw(&mut sketch, spec.subtype, spec.member_width, t);
    Ok(sketch.into_image())
}

/// The sixteen animation frames of one subtype.
pub fn animate_frames(subtype: Subtype, canvas: CanvasSize) -> Result<Vec<Image>> {
    (0..FRAMES)
        .map(|f| render_bridge(&BridgeRenderSpec::new(subtype, f, canvas)?))
        .collect()
}

// Fixed elevations in meters relative to the deck surface.
const FOUNDATION: f64 = -25.0;
const TOWER_TOP: f64 = 50.0;
const SLAB: f64 = 2.0;

fn draw(s: &mut Sketch, subtype: Subtype, member: f64, t: f64) {
    match subtype {
        Subtype::BeamThreeSpan => {
            s.rect(0.0, -member, 300.0, 0.0);
            for x in [80.0, 220.0] {
                s.rect(x - 1.5, FOUNDATION, x + 1.5, -member);
            }
            abutments(s, -member);
        }
        Subtype::BeamVType => {
            s.rect(0.0, -member, 300.0, 0.0);
            for x in [80.0, 220.0] {
                let node = -15.0;
                s.rect(x - 1.5, FOUNDATION, x + 1.5, node);
                s.line((x, node), (x - 18.0, -member), 2.0);
                s.line((x, node), (x + 18.0, -member), 2.0);
            }
            abutments(s, -member);
        }
        Subtype::ArchTopBear => {
            let deck = 1.5;
            s.rect(0.0, -deck, 300.0, 0.0);
            let crown = -deck - member / 2.0;
            let rib = |x: f64| parabola(x, 67.0, 233.0, FOUNDATION + 1.0, crown);
            s.polyline(&sample(67.0, 233.0, 48, rib), member);
            for k in 1..12 {
                let x = 67.0 + 166.0 * k as f64 / 12.0;
                let bottom = rib(x);
                if bottom < -deck - 0.5 {
                    s.rect(x - 0.5, bottom, x + 0.5, -deck);
                }
            }
            for x in [67.0, 233.0] {
                s.rect(x - 1.5, FOUNDATION, x + 1.5, -deck);
            }
            for x in [33.5, 266.5] {
                s.rect(x - 1.0, FOUNDATION + 8.0, x + 1.0, -deck);
            }
            abutments(s, -deck);
        }
        Subtype::ArchBottomBear => {
            s.rect(0.0, -SLAB, 300.0, 0.0);
            let rib = |x: f64| parabola(x, 67.0, 233.0, 0.0, 45.0);
            s.polyline(&sample(67.0, 233.0, 48, rib), member);
            for k in 1..14 {
                let x = 67.0 + 166.0 * k as f64 / 14.0;
                s.rect(x - 0.3, 0.0, x + 0.3, rib(x));
            }
            for x in [67.0, 233.0] {
                s.rect(x - 2.0, FOUNDATION, x + 2.0, -SLAB);
            }
            abutments(s, -SLAB);
        }
        Subtype::CableHarpShaped | Subtype::CableFanShaped => {
            s.rect(0.0, -SLAB, 300.0, 0.0);
            let stay = 0.35 + 0.65 * t;
            for tower in [67.0, 233.0] {
                s.rect(
                    tower - member / 2.0,
                    FOUNDATION,
                    tower + member / 2.0,
                    TOWER_TOP,
                );
                for k in 0..10 {
                    let (anchor, reach) = if subtype == Subtype::CableHarpShaped {
                        let y = 14.0 + 4.0 * k as f64;
                        (y, 1.3 * y)
                    } else {
                        (41.0 + 0.9 * k as f64, 10.0 + 6.0 * k as f64)
                    };
                    for dir in [-1.0, 1.0] {
                        s.line((tower, anchor), (tower + dir * reach, 0.0), stay);
                    }
                }
            }
            abutments(s, -SLAB);
        }
        Subtype::SuspensionVerticalSling | Subtype::SuspensionDiagonalSling => {
            s.rect(0.0, -SLAB, 300.0, 0.0);
            let hanger = 0.3 + 0.6 * t;
            for tower in [67.0, 233.0] {
                s.rect(tower - 1.5, FOUNDATION, tower + 1.5, TOWER_TOP + 2.0);
            }
            let main = |x: f64| parabola(x, 67.0, 233.0, TOWER_TOP, 4.0);
            let left = |x: f64| 2.0 + (TOWER_TOP - 2.0) * (x / 67.0).powi(2);
            let right = |x: f64| left(300.0 - x);
            s.polyline(&sample(67.0, 233.0, 48, main), member);
            s.polyline(&sample(0.0, 67.0, 20, left), member);
            s.polyline(&sample(233.0, 300.0, 20, right), member);
            let diagonal = subtype == Subtype::SuspensionDiagonalSling;
            let mut hangers = |x0: f64, x1: f64, n: usize, cable: &dyn Fn(f64) -> f64| {
                for k in 1..n {
                    let x = x0 + (x1 - x0) * k as f64 / n as f64;
                    if diagonal {
                        let lean = if k % 2 == 0 { 5.0 } else { -5.0 };
                        s.line((x, cable(x)), (x + lean, 0.0), hanger);
                    } else {
                        s.rect(x - hanger / 2.0, 0.0, x + hanger / 2.0, cable(x));
                    }
                }
            };
            hangers(67.0, 233.0, 16, &main);
            hangers(0.0, 67.0, 6, &left);
            hangers(233.0, 300.0, 6, &right);
            for x in [2.0, 298.0] {
                s.rect(x - 2.0, -12.0, x + 2.0, 2.0);
            }
        }
    }
}

fn abutments(s: &mut Sketch, top: f64) {
    s.rect(0.0, -10.0, 3.0, top);
    s.rect(297.0, -10.0, 300.0, top);
}

/// Parabola through `(x0, edge)`, `(x1, edge)` with vertex height `apex` midway.
fn parabola(x: f64, x0: f64, x1: f64, edge: f64, apex: f64) -> f64 {
    let mid = (x0 + x1) / 2.0;
    let half = (x1 - x0) / 2.0;
    let u = (x - mid) / half;
    edge + (apex - edge) * (1.0 - u * u)
}

fn sample(x0: f64, x1: f64, segments: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    (0..=segments)
        .map(|i| {
            let x = x0 + (x1 - x0) * i as f64 / segments as f64;
            (x, f(x))
        })
        .collect()
}

/// Shape accumulator: per-pixel bitmask of covered subsamples.
struct Sketch {
    canvas: CanvasSize,
    mpp: f64,
    deck_row: f64,
    masks: Vec<u16>,
}

impl Sketch {
    fn new(canvas: CanvasSize) -> Self {
        Sketch {
            canvas,
            mpp: canvas.meters_per_pixel(),
            deck_row: canvas.deck_row(),
            masks: vec![0; canvas.width * canvas.height],
        }
    }

    fn to_px(&self, (x, y): (f64, f64)) -> (f64, f64) {
        ((x + MARGIN_METERS) / self.mpp, self.deck_row - y / self.mpp)
    }

    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        let (ax, ay) = self.to_px((x0.min(x1), y0.max(y1)));
        let (bx, by) = self.to_px((x0.max(x1), y0.min(y1)));
        self.cover(ax, ay, bx, by, |px, py| {
            px >= ax && px < bx && py >= ay && py < by
        });
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), width: f64) {
        let (ax, ay) = self.to_px(a);
        let (bx, by) = self.to_px(b);
        let r = width / 2.0 / self.mpp;
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        self.cover(
            ax.min(bx) - r,
            ay.min(by) - r,
            ax.max(bx) + r,
            ay.max(by) + r,
            |px, py| {
                let t = if len2 > 0.0 {
                    (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (cx, cy) = (ax + t * dx - px, ay + t * dy - py);
                cx * cx + cy * cy <= r * r
            },
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], width: f64) {
        for pair in points.windows(2) {
            self.line(pair[0], pair[1], width);
        }
    }

    /// Sets subsample bits inside the pixel-space box where `inside` holds.
    fn cover(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, inside: impl Fn(f64, f64) -> bool) {
        let w = self.canvas.width as i64;
        let h = self.canvas.height as i64;
        let cx0 = (x0.floor() as i64).clamp(0, w);
        let cx1 = (x1.ceil() as i64).clamp(0, w);
        let cy0 = (y0.floor() as i64).clamp(0, h);
        let cy1 = (y1.ceil() as i64).clamp(0, h);
        let step = 1.0 / SUPERSAMPLE as f64;
        for py in cy0..cy1 {
            for px in cx0..cx1 {
                let mask = &mut self.masks[py as usize * self.canvas.width + px as usize];
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let bit = 1u16 << (sy * SUPERSAMPLE + sx);
                        if *mask & bit != 0 {
                            continue;
                        }
                        let fx = px as f64 + (sx as f64 + 0.5) * step;
                        let fy = py as f64 + (sy as f64 + 0.5) * step;
                        if inside(fx, fy) {
                            *mask |= bit;
                        }
                    }
                }
            }
        }
    }

    fn into_image(self) -> Image {
        let full = (SUPERSAMPLE * SUPERSAMPLE) as f32;
        let pixels = self
            .masks
            .iter()
            .map(|m| m.count_ones() as f32 / full)
            .collect();
        Image::new(self.canvas.width, self.canvas.height, pixels).expect("canvas-sized buffer")
    }
}
