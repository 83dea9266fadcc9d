//! Circular-interval helpers shared by slicing and quadrant selection.
//!
//! All angles are degrees. Arcs are described by a start angle and a
//! non-negative width; sectors are half-open `[start, start+width)`, camera
//! fields of view are closed `[start, start+width]`.

/// Normalizes to `[0, 360)`.
pub fn normalize_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r == 360.0 {
        0.0
    } else {
        r
    }
}

/// Membership of `a` in the half-open arc `[start, start+width)`.
pub fn arc_contains_half_open(start: f64, width: f64, a: f64) -> bool {
    if width >= 360.0 {
        return true;
    }
    let offset = normalize_deg(a - start);
    offset < width
}

/// Membership of `a` in the closed arc `[start, start+width]`.
pub fn arc_contains_closed(start: f64, width: f64, a: f64) -> bool {
    if width >= 360.0 {
        return true;
    }
    let offset = normalize_deg(a - start);
    offset <= width
}

/// Whether a closed arc and a half-open arc share at least one angle.
///
/// For arcs narrower than the full circle this reduces to either start being
/// contained in the other arc.
pub fn closed_arc_intersects_half_open(
    closed_start: f64,
    closed_width: f64,
    half_start: f64,
    half_width: f64,
) -> bool {
    if closed_width >= 360.0 || half_width >= 360.0 {
        return true;
    }
    arc_contains_half_open(half_start, half_width, closed_start)
        || arc_contains_closed(closed_start, closed_width, half_start)
}

/// Whether two half-open arcs share at least one angle.
pub fn half_open_arcs_intersect(a_start: f64, a_width: f64, b_start: f64, b_width: f64) -> bool {
    if a_width >= 360.0 || b_width >= 360.0 {
        return true;
    }
    arc_contains_half_open(b_start, b_width, a_start)
        || arc_contains_half_open(a_start, a_width, b_start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_deg(0.0), 0.0);
        assert_eq!(normalize_deg(360.0), 0.0);
        assert_eq!(normalize_deg(-90.0), 270.0);
        assert_eq!(normalize_deg(725.0), 5.0);
    }

    #[test]
    fn half_open_membership() {
        assert!(arc_contains_half_open(350.0, 45.0, 350.0));
        assert!(arc_contains_half_open(350.0, 45.0, 10.0));
        assert!(!arc_contains_half_open(350.0, 45.0, 35.0));
        assert!(!arc_contains_half_open(0.0, 45.0, 45.0));
    }

    #[test]
    fn closed_vs_half_open_boundary() {
        // Camera arc ending exactly at the sector start still intersects
        // because the sector includes its start angle.
        assert!(closed_arc_intersects_half_open(280.0, 70.0, 350.0, 45.0));
        // Camera arc starting exactly where the sector half-open end is does
        // not intersect.
        assert!(!closed_arc_intersects_half_open(35.0, 70.0, 350.0, 45.0));
    }

    #[test]
    fn full_circle_intersects_everything() {
        assert!(half_open_arcs_intersect(0.0, 360.0, 123.0, 1.0));
        assert!(closed_arc_intersects_half_open(7.0, 360.0, 90.0, 10.0));
    }

    #[test]
    fn disjoint_wrapping_arcs() {
        assert!(!half_open_arcs_intersect(300.0, 30.0, 40.0, 30.0));
        assert!(half_open_arcs_intersect(300.0, 100.0, 30.0, 30.0));
    }
}
