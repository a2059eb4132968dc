//! Minimal enclosing circles for up to three planar points.

pub type Point = (f64, f64);

pub fn distance(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Radius of the smallest circle containing `a` and `b`.
pub fn enclosing_radius2(a: Point, b: Point) -> f64 {
    distance(a, b) / 2.0
}

/// Radius of the smallest circle containing all three points.
///
/// For an acute triangle this is the circumradius; otherwise the circle
/// sits on the longest side. Points are put in a canonical order first so
/// the result does not depend on argument order, bit for bit.
pub fn enclosing_radius3(a: Point, b: Point, c: Point) -> f64 {
    let mut p = [a, b, c];
    p.sort_by(|u, v| u.0.total_cmp(&v.0).then(u.1.total_cmp(&v.1)));
    let [a, b, c] = p;
    let ab = distance(a, b);
    let bc = distance(b, c);
    let ca = distance(c, a);
    let longest = ab.max(bc).max(ca);

    let dot = |o: Point, u: Point, v: Point| (u.0 - o.0) * (v.0 - o.0) + (u.1 - o.1) * (v.1 - o.1);
    if dot(a, b, c) <= 0.0 || dot(b, a, c) <= 0.0 || dot(c, a, b) <= 0.0 {
        return longest / 2.0;
    }
    let cross = ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs();
    // acute triangles have nonzero area, so cross > 0 here
    (ab * bc * ca / (2.0 * cross)).max(longest / 2.0)
}
