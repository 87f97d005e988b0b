//! Small coverage rasterizer. A pixel `(y, x)` is sampled at its centre
//! `(x + 0.5, y + 0.5)`. All geometric tests are written in coordinates
//! relative to a shape vertex so that integer translations and mirror
//! reflections of the input give bit-identical decisions.

pub type Point = [f64; 2];

fn center(y: usize, x: usize) -> Point {
    [x as f64 + 0.5, y as f64 + 0.5]
}

fn bbox(points: &[Point], pad: f64, h: usize, w: usize) -> Option<(usize, usize, usize, usize)> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let cx0 = (x0 - pad - 1.0).floor().max(0.0) as usize;
    let cy0 = (y0 - pad - 1.0).floor().max(0.0) as usize;
    let cx1 = ((x1 + pad + 1.0).ceil().max(0.0) as usize).min(w);
    let cy1 = ((y1 + pad + 1.0).ceil().max(0.0) as usize).min(h);
    (cx0 < cx1 && cy0 < cy1).then_some((cy0, cy1, cx0, cx1))
}

/// Squared distance from `p` to segment `ab`, evaluated from both endpoints
/// so the result does not depend on the segment's orientation.
pub fn segment_dist2(p: Point, a: Point, b: Point) -> f64 {
    directed_dist2(p, a, b).min(directed_dist2(p, b, a))
}

fn directed_dist2(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (p[0] - a[0], p[1] - a[1]);
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 {
        ((dx * ex + dy * ey) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (rx, ry) = (dx - t * ex, dy - t * ey);
    rx * rx + ry * ry
}

/// Paint every pixel whose centre lies within `radius` of the polyline.
pub fn stroke_polyline(
    points: &[Point],
    closed: bool,
    radius: f64,
    h: usize,
    w: usize,
    mut paint: impl FnMut(usize, usize),
) {
    if points.is_empty() {
        return;
    }
    let mut segs: Vec<(Point, Point)> = points.windows(2).map(|s| (s[0], s[1])).collect();
    if closed && points.len() > 2 {
        segs.push((points[points.len() - 1], points[0]));
    }
    if segs.is_empty() {
        segs.push((points[0], points[0]));
    }
    let Some((y0, y1, x0, x1)) = bbox(points, radius, h, w) else {
        return;
    };
    let r2 = radius * radius;
    for y in y0..y1 {
        for x in x0..x1 {
            let p = center(y, x);
            if segs.iter().any(|&(a, b)| segment_dist2(p, a, b) <= r2) {
                paint(y, x);
            }
        }
    }
}

/// Even-odd point-in-polygon test. Points exactly on an edge may go either
/// way; callers that need them also stroke the outline.
pub fn inside_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let ey = b[1] - a[1];
            let ex = b[0] - a[0];
            let rel_x = p[0] - a[0];
            let rel_y = p[1] - a[1];
            if rel_x < ex * rel_y / ey {
                inside = !inside;
            }
        }
    }
    inside
}

/// Fill the polygon interior and stroke its outline with `radius`.
pub fn fill_polygon(
    poly: &[Point],
    radius: f64,
    h: usize,
    w: usize,
    mut paint: impl FnMut(usize, usize),
) {
    if poly.len() < 3 {
        stroke_polyline(poly, false, radius, h, w, paint);
        return;
    }
    let Some((y0, y1, x0, x1)) = bbox(poly, radius, h, w) else {
        return;
    };
    let r2 = radius * radius;
    let n = poly.len();
    for y in y0..y1 {
        for x in x0..x1 {
            let p = center(y, x);
            let on_outline = (0..n).any(|i| segment_dist2(p, poly[i], poly[(i + 1) % n]) <= r2);
            if on_outline || inside_polygon(p, poly) {
                paint(y, x);
            }
        }
    }
}

/// Fill a rotated ellipse centred at `c` with semi-axes `(a, b)` and rotation
/// `angle` (radians).
pub fn fill_ellipse(
    c: Point,
    a: f64,
    b: f64,
    angle: f64,
    h: usize,
    w: usize,
    mut paint: impl FnMut(usize, usize),
) {
    if a <= 0.0 || b <= 0.0 {
        return;
    }
    let r = a.max(b);
    let Some((y0, y1, x0, x1)) = bbox(&[c], r, h, w) else {
        return;
    };
    let (s, co) = angle.sin_cos();
    for y in y0..y1 {
        for x in x0..x1 {
            let p = center(y, x);
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            let u = dx * co + dy * s;
            let v = -dx * s + dy * co;
            if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                paint(y, x);
            }
        }
    }
}
