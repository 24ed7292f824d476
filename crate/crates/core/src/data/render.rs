//! Procedural chart glyphs on a grayscale canvas.
//!
//! Coordinates are in pixels with the origin at the top-left corner. Every
//! primitive takes the maximum with what is already on the canvas, so
//! overlapping marks never darken each other.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ChartKind;

pub(crate) struct Canvas {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    fn put(&mut self, x: i64, y: i64, v: f64) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let p = &mut self.data[y as usize * self.width + x as usize];
            *p = p.max(v);
        }
    }

    fn add(&mut self, x: i64, y: i64, v: f64) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let p = &mut self.data[y as usize * self.width + x as usize];
            *p = (*p + v).min(1.0);
        }
    }

    fn plot(&mut self, x: f64, y: f64, v: f64) {
        self.put(x.round() as i64, y.round() as i64, v);
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, v: f64) {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()) * 2.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            self.plot(x0 + t * (x1 - x0), y0 + t * (y1 - y0), v);
        }
    }

    fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, v: f64) {
        let (xa, xb) = (x0.min(x1).round() as i64, x0.max(x1).round() as i64);
        let (ya, yb) = (y0.min(y1).round() as i64, y0.max(y1).round() as i64);
        for y in ya..=yb {
            for x in xa..=xb {
                self.put(x, y, v);
            }
        }
    }

    fn rect_outline(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, v: f64) {
        self.line(x0, y0, x1, y0, v);
        self.line(x1, y0, x1, y1, v);
        self.line(x1, y1, x0, y1, v);
        self.line(x0, y1, x0, y0, v);
    }

    fn dot(&mut self, cx: f64, cy: f64, radius: f64, v: f64) {
        let r = radius.ceil() as i64;
        let (ix, iy) = (cx.round() as i64, cy.round() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = ((ix + dx) as f64, (iy + dy) as f64);
                if (px - cx).powi(2) + (py - cy).powi(2) <= radius * radius + 0.25 {
                    self.put(ix + dx, iy + dy, v);
                }
            }
        }
    }

    fn circle(&mut self, cx: f64, cy: f64, radius: f64, v: f64) {
        let steps = (radius * TAU * 2.0).ceil().max(8.0) as usize;
        for s in 0..steps {
            let a = TAU * s as f64 / steps as f64;
            self.plot(cx + radius * a.cos(), cy + radius * a.sin(), v);
        }
    }

    /// Adds `v` inside the disc, saturating at 1.
    fn shade_disc(&mut self, cx: f64, cy: f64, radius: f64, v: f64) {
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= radius * radius {
                    self.add(x, y, v);
                }
            }
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], v: f64) {
        for w in pts.windows(2) {
            self.line(w[0].0, w[0].1, w[1].0, w[1].1, v);
        }
    }
}

/// Plot area inside the axes.
struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

impl Frame {
    fn width(&self) -> f64 {
        self.right - self.left
    }
    fn height(&self) -> f64 {
        self.bottom - self.top
    }
}

fn jit(rng: &mut ChaCha8Rng, amount: f64) -> f64 {
    if amount <= 0.0 {
        0.0
    } else {
        rng.random_range(-amount..=amount)
    }
}

fn axes(c: &mut Canvas, rng: &mut ChaCha8Rng, jitter: f64) -> Frame {
    let (w, h) = (c.width as f64, c.height as f64);
    let x0 = (0.1 * w + jit(rng, 0.04 * w * jitter)).round();
    let y0 = (0.9 * h + jit(rng, 0.04 * h * jitter)).round();
    let v = rng.random_range(0.75..1.0);
    c.line(x0, 0.05 * h, x0, y0, v);
    c.line(x0, y0, 0.95 * w, y0, v);
    Frame {
        left: x0 + 2.0,
        right: 0.95 * w - 1.0,
        top: 0.1 * h,
        bottom: y0 - 2.0,
    }
}

fn random_walk(rng: &mut ChaCha8Rng, f: &Frame, points: usize) -> Vec<(f64, f64)> {
    let mut y = rng.random_range(0.2..0.8);
    (0..points)
        .map(|i| {
            let x = f.left + f.width() * i as f64 / (points - 1) as f64;
            y = (y + rng.random_range(-0.3f64..0.3)).clamp(0.05, 0.95);
            (x, f.top + f.height() * y)
        })
        .collect()
}

fn scatter_points(rng: &mut ChaCha8Rng, f: &Frame, n: usize) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.random_range(f.left..f.right),
                rng.random_range(f.top..f.bottom),
            )
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

fn area(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let f = axes(c, rng, j);
    let n = rng.random_range(5..9);
    let pts = random_walk(rng, &f, n);
    let fill = rng.random_range(0.4..0.65);
    for x in f.left.round() as i64..=f.right.round() as i64 {
        let xf = x as f64;
        let seg = pts.windows(2).find(|w| xf >= w[0].0 && xf <= w[1].0);
        if let Some(w) = seg {
            let t = (xf - w[0].0) / (w[1].0 - w[0].0).max(1e-9);
            let y = w[0].1 + t * (w[1].1 - w[0].1);
            c.fill_rect(xf, y, xf, f.bottom + 1.0, fill);
        }
    }
    c.polyline(&pts, 1.0);
}

fn bars(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64, horizontal: bool) {
    let f = axes(c, rng, j);
    let n = rng.random_range(3..7);
    let span = if horizontal { f.height() } else { f.width() };
    let slot = span / n as f64;
    let thick = (slot * rng.random_range(0.45..0.75)).max(1.5);
    let v = rng.random_range(0.7..1.0);
    for i in 0..n {
        let start = slot * i as f64 + (slot - thick) / 2.0;
        let frac = rng.random_range(0.2..1.0);
        if horizontal {
            let y = f.top + start;
            c.fill_rect(f.left, y, f.left + frac * f.width(), y + thick - 1.0, v);
        } else {
            let x = f.left + start;
            c.fill_rect(x, f.bottom, x + thick - 1.0, f.bottom - frac * f.height(), v);
        }
    }
}

fn boxes(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let f = axes(c, rng, j);
    let n = rng.random_range(2..5);
    let slot = f.width() / n as f64;
    for i in 0..n {
        let cx = f.left + slot * (i as f64 + 0.5) + jit(rng, 0.1 * slot * j);
        let half = (slot * rng.random_range(0.2..0.32)).max(1.5);
        let mut qs: Vec<f64> = (0..5).map(|_| rng.random_range(0.05..0.95)).collect();
        qs.sort_by(f64::total_cmp);
        let y = |q: f64| f.top + f.height() * q;
        let v = rng.random_range(0.8..1.0);
        c.rect_outline(cx - half, y(qs[1]), cx + half, y(qs[3]), v);
        c.line(cx - half, y(qs[2]), cx + half, y(qs[2]), v);
        c.line(cx, y(qs[0]), cx, y(qs[1]), v);
        c.line(cx, y(qs[3]), cx, y(qs[4]), v);
        c.line(cx - half / 2.0, y(qs[0]), cx + half / 2.0, y(qs[0]), v);
        c.line(cx - half / 2.0, y(qs[4]), cx + half / 2.0, y(qs[4]), v);
    }
}

fn heatmap(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let (w, h) = (c.width as f64, c.height as f64);
    let cells = rng.random_range(4..9);
    let x0 = 0.08 * w + jit(rng, 0.04 * w * j);
    let y0 = 0.08 * h + jit(rng, 0.04 * h * j);
    let size = (0.84 * w.min(h)) / cells as f64;
    for r in 0..cells {
        for col in 0..cells {
            let v = rng.random_range(0.1..1.0);
            let (x, y) = (x0 + col as f64 * size, y0 + r as f64 * size);
            c.fill_rect(x, y, x + size - 1.0, y + size - 1.0, v);
        }
    }
}

fn intervals(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64, horizontal: bool) {
    let f = axes(c, rng, j);
    let n = rng.random_range(3..7);
    let span = if horizontal { f.height() } else { f.width() };
    let slot = span / n as f64;
    let cap = (slot * 0.3).clamp(1.0, 2.0);
    let v = rng.random_range(0.75..1.0);
    for i in 0..n {
        let across = slot * (i as f64 + 0.5);
        let (a, b) = (rng.random_range(0.05..0.5), rng.random_range(0.5..0.95));
        let mid = (a + b) / 2.0 + jit(rng, 0.05);
        if horizontal {
            let y = f.top + across;
            let (xa, xb) = (f.left + a * f.width(), f.left + b * f.width());
            c.line(xa, y, xb, y, v);
            c.line(xa, y - cap, xa, y + cap, v);
            c.line(xb, y - cap, xb, y + cap, v);
            c.dot(f.left + mid * f.width(), y, 1.0, 1.0);
        } else {
            let x = f.left + across;
            let (ya, yb) = (f.top + a * f.height(), f.top + b * f.height());
            c.line(x, ya, x, yb, v);
            c.line(x - cap, ya, x + cap, ya, v);
            c.line(x - cap, yb, x + cap, yb, v);
            c.dot(x, f.top + mid * f.height(), 1.0, 1.0);
        }
    }
}

fn lines(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let f = axes(c, rng, j);
    for _ in 0..rng.random_range(1..3) {
        let n = rng.random_range(5..10);
        let pts = random_walk(rng, &f, n);
        let v = rng.random_range(0.7..1.0);
        c.polyline(&pts, v);
    }
}

fn manhattan(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let f = axes(c, rng, j);
    let peaks: Vec<f64> = (0..rng.random_range(1..4))
        .map(|_| rng.random_range(f.left..f.right))
        .collect();
    let mut x = f.left;
    while x <= f.right {
        let near_peak = peaks.iter().any(|p| (p - x).abs() < 1.5);
        let frac = if near_peak {
            rng.random_range(0.6..1.0)
        } else {
            rng.random_range(0.05..0.35)
        };
        let v = rng.random_range(0.55..0.95);
        c.line(x, f.bottom, x, f.bottom - frac * f.height(), v);
        x += 1.0;
    }
}

fn map(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let (w, h) = (c.width as f64, c.height as f64);
    for _ in 0..rng.random_range(1..4) {
        let cx = w * (0.5 + jit(rng, 0.25 * j.max(0.4)));
        let cy = h * (0.5 + jit(rng, 0.25 * j.max(0.4)));
        let base = w.min(h) * rng.random_range(0.15..0.3);
        let harmonics: Vec<(f64, f64)> = (2..6)
            .map(|_| (rng.random_range(0.0..0.25), rng.random_range(0.0..TAU)))
            .collect();
        let steps = (base * TAU * 2.5).ceil() as usize;
        let v = rng.random_range(0.75..1.0);
        let mut pts = Vec::with_capacity(steps + 1);
        for s in 0..=steps {
            let a = TAU * s as f64 / steps as f64;
            let r = base
                * (1.0
                    + harmonics
                        .iter()
                        .enumerate()
                        .map(|(k, (amp, ph))| amp * ((k as f64 + 2.0) * a + ph).sin())
                        .sum::<f64>());
            pts.push((cx + r * a.cos(), cy + r * a.sin()));
        }
        c.polyline(&pts, v);
    }
}

fn pie(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let (w, h) = (c.width as f64, c.height as f64);
    let cx = w * (0.5 + jit(rng, 0.08 * j));
    let cy = h * (0.5 + jit(rng, 0.08 * j));
    let r = w.min(h) * rng.random_range(0.28..0.42);
    let n = rng.random_range(3..7);
    let mut cuts: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    cuts.sort_by(f64::total_cmp);
    let shades: Vec<f64> = (0..n).map(|_| rng.random_range(0.25..1.0)).collect();
    for y in 0..c.height as i64 {
        for x in 0..c.width as i64 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let a = dy.atan2(dx).rem_euclid(TAU);
            let sector = cuts.iter().filter(|&&cut| cut <= a).count() % n;
            c.put(x, y, shades[sector]);
        }
    }
}

fn scatter(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64, with_line: bool) {
    let f = axes(c, rng, j);
    let n = rng.random_range(16..30);
    let radius = rng.random_range(1.2..1.6);
    let pts = scatter_points(rng, &f, n);
    if with_line {
        // A trend line through a running mean of the points.
        let mut smooth = Vec::with_capacity(pts.len());
        for i in 0..pts.len() {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(pts.len());
            let y = pts[lo..hi].iter().map(|p| p.1).sum::<f64>() / (hi - lo) as f64;
            smooth.push((pts[i].0, y));
        }
        c.polyline(&smooth, rng.random_range(0.6..0.9));
        for p in &mut smooth {
            p.1 += jit(rng, 1.5);
        }
        for (x, y) in smooth.iter().step_by(2) {
            c.dot(*x, *y, radius, 1.0);
        }
    } else {
        for (x, y) in &pts {
            c.dot(*x, *y, radius, 1.0);
        }
    }
}

fn surface(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let (w, h) = (c.width as f64, c.height as f64);
    let cx = w * (0.5 + jit(rng, 0.06 * j));
    let top = h * (0.25 + jit(rng, 0.05 * j));
    let (a, b) = (w * 0.36, h * 0.22);
    let amp = h * rng.random_range(0.08..0.2);
    let (fx, fy) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0));
    let ph = rng.random_range(0.0..TAU);
    let project = |u: f64, v: f64| {
        let z = (fx * u * TAU / 2.0 + ph).sin() * (fy * v * TAU / 2.0).cos();
        (cx + (u - v) * a, top + (u + v) * b - z * amp, z)
    };
    // shaded patches
    let fine = 24;
    for iu in 0..fine {
        for iv in 0..fine {
            let (u, v) = (iu as f64 / fine as f64, iv as f64 / fine as f64);
            let (x, y, z) = project(u, v);
            c.dot(x, y, 1.0, 0.35 + 0.25 * z);
        }
    }
    let grid = rng.random_range(5..8);
    for g in 0..=grid {
        let t = g as f64 / grid as f64;
        let mut along_u = Vec::new();
        let mut along_v = Vec::new();
        for s in 0..=fine {
            let q = s as f64 / fine as f64;
            let (x, y, _) = project(q, t);
            along_u.push((x, y));
            let (x, y, _) = project(t, q);
            along_v.push((x, y));
        }
        c.polyline(&along_u, 0.95);
        c.polyline(&along_v, 0.95);
    }
}

fn venn(c: &mut Canvas, rng: &mut ChaCha8Rng, j: f64) {
    let (w, h) = (c.width as f64, c.height as f64);
    let n = rng.random_range(2..4);
    let r = w.min(h) * rng.random_range(0.22..0.3);
    let (cx, cy) = (w * (0.5 + jit(rng, 0.05 * j)), h * (0.5 + jit(rng, 0.05 * j)));
    let spread = r * rng.random_range(0.5..0.8);
    let turn = rng.random_range(0.0..TAU);
    for i in 0..n {
        let a = turn + TAU * i as f64 / n as f64;
        let (x, y) = (cx + spread * a.cos(), cy + spread * a.sin());
        c.shade_disc(x, y, r, 0.22);
        c.circle(x, y, r, 1.0);
    }
}

/// Draws one chart of `kind`; `jitter` scales positional randomness.
pub(crate) fn render(kind: ChartKind, c: &mut Canvas, rng: &mut ChaCha8Rng, jitter: f64) {
    match kind {
        ChartKind::Area => area(c, rng, jitter),
        ChartKind::BarHorizontal => bars(c, rng, jitter, true),
        ChartKind::BarVertical => bars(c, rng, jitter, false),
        ChartKind::BoxVertical => boxes(c, rng, jitter),
        ChartKind::Heatmap => heatmap(c, rng, jitter),
        ChartKind::IntervalHorizontal => intervals(c, rng, jitter, true),
        ChartKind::IntervalVertical => intervals(c, rng, jitter, false),
        ChartKind::Line => lines(c, rng, jitter),
        ChartKind::Manhattan => manhattan(c, rng, jitter),
        ChartKind::Map => map(c, rng, jitter),
        ChartKind::Pie => pie(c, rng, jitter),
        ChartKind::Scatter => scatter(c, rng, jitter, false),
        ChartKind::ScatterLine => scatter(c, rng, jitter, true),
        ChartKind::Surface => surface(c, rng, jitter),
        ChartKind::Venn => venn(c, rng, jitter),
    }
}
