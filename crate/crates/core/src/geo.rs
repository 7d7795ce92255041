//! Planar geometry over WGS84 longitude/latitude degrees.
//!
//! Everything here treats degrees as plane coordinates. Campaign polygons are
//! city-scale, so no projection or geodesic correction is applied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance, in degrees, for treating a point as lying on a polygon edge.
pub const EDGE_TOLERANCE_DEG: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 distinct vertices")]
    FewerThanThreeVertices,
    #[error("polygon edges {first} and {second} intersect")]
    SelfIntersecting { first: usize, second: usize },
    #[error("vertex {index} repeats the previous vertex")]
    DuplicateConsecutiveVertex { index: usize },
    #[error("coordinate at vertex {index} out of range: {reason}")]
    CoordinateOutOfRange { index: usize, reason: &'static str },
}

impl GeometryError {
    pub fn code(&self) -> &'static str {
        match self {
            GeometryError::FewerThanThreeVertices => "FEWER_THAN_THREE_VERTICES",
            GeometryError::SelfIntersecting { .. } => "SELF_INTERSECTING",
            GeometryError::DuplicateConsecutiveVertex { .. } => "DUPLICATE_CONSECUTIVE_VERTEX",
            GeometryError::CoordinateOutOfRange { .. } => "COORDINATE_OUT_OF_RANGE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub const fn new(lon: f64, lat: f64) -> Self {
        GeoPoint { lon, lat }
    }

    /// Returns the reason the point is unusable, if any.
    pub fn range_violation(&self) -> Option<&'static str> {
        if !self.lon.is_finite() || !self.lat.is_finite() {
            Some("non-finite coordinate")
        } else if !(-180.0..=180.0).contains(&self.lon) {
            Some("longitude outside [-180, 180]")
        } else if !(-90.0..=90.0).contains(&self.lat) {
            Some("latitude outside [-90, 90]")
        } else {
            None
        }
    }

    pub fn is_valid(&self) -> bool {
        self.range_violation().is_none()
    }

    /// Planar distance in degrees.
    pub fn distance_deg(&self, other: &GeoPoint) -> f64 {
        (self.lon - other.lon).hypot(self.lat - other.lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl BoundingBox {
    pub fn from_point(p: GeoPoint) -> Self {
        BoundingBox { min: p, max: p }
    }

    /// Smallest box covering every point, or `None` for an empty iterator.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = BoundingBox::from_point(*iter.next()?);
        Some(iter.fold(first, |bb, p| bb.extend(*p)))
    }

    pub fn extend(self, p: GeoPoint) -> Self {
        BoundingBox {
            min: GeoPoint::new(self.min.lon.min(p.lon), self.min.lat.min(p.lat)),
            max: GeoPoint::new(self.max.lon.max(p.lon), self.max.lat.max(p.lat)),
        }
    }

    pub fn union(self, other: BoundingBox) -> Self {
        self.extend(other.min).extend(other.max)
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lon >= self.min.lon && p.lon <= self.max.lon && p.lat >= self.min.lat && p.lat <= self.max.lat
    }

    pub fn expanded(&self, by: f64) -> Self {
        BoundingBox {
            min: GeoPoint::new(self.min.lon - by, self.min.lat - by),
            max: GeoPoint::new(self.max.lon + by, self.max.lat + by),
        }
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::new((self.min.lon + self.max.lon) / 2.0, (self.min.lat + self.max.lat) / 2.0)
    }
}

/// A validated simple polygon. The ring closes implicitly from the last
/// vertex back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeoJsonPolygon", into = "GeoJsonPolygon")]
pub struct Polygon {
    vertices: Vec<GeoPoint>,
    bbox: BoundingBox,
}

impl Polygon {
    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }

    /// Iterates edges as `(start, end)` pairs, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (GeoPoint, GeoPoint)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Boundary-inclusive point-in-polygon test.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        if !self.bbox.expanded(EDGE_TOLERANCE_DEG).contains(p) {
            return false;
        }
        if self
            .edges()
            .any(|(a, b)| distance_to_segment(p, &a, &b) <= EDGE_TOLERANCE_DEG)
        {
            return true;
        }
        // Even-odd crossing count along a ray towards +lon.
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// Free-function form of [`Polygon::contains`].
pub fn contains(polygon: &Polygon, p: &GeoPoint) -> bool {
    polygon.contains(p)
}

/// Free-function form of [`Polygon::bounding_box`].
pub fn bounding_box(polygon: &Polygon) -> BoundingBox {
    polygon.bounding_box()
}

/// Validates a vertex ring into a [`Polygon`].
///
/// A trailing vertex equal to the first one is accepted as an explicit
/// closure and dropped. Edges spanning more than 180 degrees of longitude are
/// treated as antimeridian crossings and rejected.
pub fn validate_polygon(vertices: &[GeoPoint]) -> Result<Polygon, GeometryError> {
    for (index, v) in vertices.iter().enumerate() {
        if let Some(reason) = v.range_violation() {
            return Err(GeometryError::CoordinateOutOfRange { index, reason });
        }
    }
    let mut ring: Vec<GeoPoint> = vertices.to_vec();
    if ring.len() >= 2 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(GeometryError::FewerThanThreeVertices);
    }
    let n = ring.len();
    for i in 0..n {
        if ring[i] == ring[(i + 1) % n] {
            return Err(GeometryError::DuplicateConsecutiveVertex { index: (i + 1) % n });
        }
    }
    let mut distinct: Vec<GeoPoint> = Vec::with_capacity(n);
    for v in &ring {
        if !distinct.contains(v) {
            distinct.push(*v);
        }
    }
    if distinct.len() < 3 {
        return Err(GeometryError::FewerThanThreeVertices);
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a.lon - b.lon).abs() > 180.0 {
            return Err(GeometryError::CoordinateOutOfRange {
                index: i,
                reason: "edge crosses the antimeridian",
            });
        }
    }
    check_simple(&ring)?;
    let bbox = BoundingBox::from_points(&ring).expect("ring is non-empty");
    Ok(Polygon { vertices: ring, bbox })
}

fn check_simple(ring: &[GeoPoint]) -> Result<(), GeometryError> {
    let n = ring.len();
    let edge = |i: usize| (ring[i], ring[(i + 1) % n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a1, a2) = edge(i);
            let (b1, b2) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let hit = if adjacent {
                // Adjacent edges share one vertex; they only conflict when
                // they fold back over each other.
                let (shared, p, q) = if j == i + 1 { (a2, a1, b2) } else { (a1, a2, b1) };
                folds_back(&shared, &p, &q)
            } else {
                segments_intersect(&a1, &a2, &b1, &b2)
            };
            if hit {
                return Err(GeometryError::SelfIntersecting { first: i, second: j });
            }
        }
    }
    Ok(())
}

fn orient(a: &GeoPoint, b: &GeoPoint, c: &GeoPoint) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn within_span(a: &GeoPoint, b: &GeoPoint, p: &GeoPoint) -> bool {
    p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn folds_back(shared: &GeoPoint, p: &GeoPoint, q: &GeoPoint) -> bool {
    let dp = (p.lon - shared.lon, p.lat - shared.lat);
    let dq = (q.lon - shared.lon, q.lat - shared.lat);
    orient(shared, p, q) == 0.0 && dp.0 * dq.0 + dp.1 * dq.1 > 0.0
}

/// Closed-segment intersection, touching and collinear overlap included.
pub(crate) fn segments_intersect(p1: &GeoPoint, p2: &GeoPoint, q1: &GeoPoint, q2: &GeoPoint) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && within_span(q1, q2, p1))
        || (d2 == 0.0 && within_span(q1, q2, p2))
        || (d3 == 0.0 && within_span(p1, p2, q1))
        || (d4 == 0.0 && within_span(p1, p2, q2))
}

fn distance_to_segment(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance_deg(a);
    }
    let t = (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0);
    p.distance_deg(&GeoPoint::new(a.lon + t * dx, a.lat + t * dy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub col: i64,
    pub row: i64,
}

/// Half-open binning: a point on a cell's lower edge belongs to that cell.
pub fn grid_cell(p: &GeoPoint, origin: &GeoPoint, cell_deg: f64) -> GridCell {
    debug_assert!(cell_deg > 0.0);
    GridCell {
        col: ((p.lon - origin.lon) / cell_deg).floor() as i64,
        row: ((p.lat - origin.lat) / cell_deg).floor() as i64,
    }
}

/// GeoJSON `Polygon` geometry with a single exterior ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoJsonPolygon {
    #[serde(rename = "type")]
    pub kind: String,
    pub coordinates: Vec<Vec<[f64; 2]>>,
}

impl GeoJsonPolygon {
    pub fn from_vertices(vertices: &[GeoPoint]) -> Self {
        let mut ring: Vec<[f64; 2]> = vertices.iter().map(|v| [v.lon, v.lat]).collect();
        if let Some(first) = ring.first().copied() {
            ring.push(first);
        }
        GeoJsonPolygon { kind: "Polygon".into(), coordinates: vec![ring] }
    }

    /// Exterior ring vertices as given (closure vertex included if present).
    pub fn exterior(&self) -> Result<Vec<GeoPoint>, GeoJsonError> {
        if self.kind != "Polygon" {
            return Err(GeoJsonError::NotAPolygon(self.kind.clone()));
        }
        match self.coordinates.as_slice() {
            [ring] => Ok(ring.iter().map(|c| GeoPoint::new(c[0], c[1])).collect()),
            [] => Err(GeoJsonError::MissingRing),
            _ => Err(GeoJsonError::HolesUnsupported),
        }
    }

    pub fn to_polygon(&self) -> Result<Polygon, PolygonParseError> {
        let ring = self.exterior()?;
        Ok(validate_polygon(&ring)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeoJsonError {
    #[error("geometry type {0:?} is not \"Polygon\"")]
    NotAPolygon(String),
    #[error("polygon has no exterior ring")]
    MissingRing,
    #[error("polygon holes are not supported")]
    HolesUnsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolygonParseError {
    #[error(transparent)]
    GeoJson(#[from] GeoJsonError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<Polygon> for GeoJsonPolygon {
    fn from(p: Polygon) -> Self {
        GeoJsonPolygon::from_vertices(&p.vertices)
    }
}

impl TryFrom<GeoJsonPolygon> for Polygon {
    type Error = PolygonParseError;

    fn try_from(value: GeoJsonPolygon) -> Result<Self, Self::Error> {
        value.to_polygon()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(coords: &[(f64, f64)]) -> Vec<GeoPoint> {
        coords.iter().map(|&(x, y)| GeoPoint::new(x, y)).collect()
    }

    fn unit_square() -> Polygon {
        validate_polygon(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])).unwrap()
    }

    /// Brute-force all-pairs check written without the orientation helpers
    /// above: parametric solve with explicit collinear handling.
    fn oracle_edges_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
        let r = (b.0 - a.0, b.1 - a.1);
        let s = (d.0 - c.0, d.1 - c.1);
        let denom = r.0 * s.1 - r.1 * s.0;
        let qp = (c.0 - a.0, c.1 - a.1);
        if denom == 0.0 {
            return false;
        }
        let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
        let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
        (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
    }

    #[test]
    fn square_is_valid() {
        let sq = unit_square();
        assert_eq!(sq.vertices().len(), 4);
    }

    #[test]
    fn two_vertices_rejected() {
        assert_eq!(
            validate_polygon(&pts(&[(0.0, 0.0), (1.0, 1.0)])),
            Err(GeometryError::FewerThanThreeVertices)
        );
    }

    #[test]
    fn bowtie_rejected() {
        let bowtie = [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(oracle_edges_cross(bowtie[0], bowtie[1], bowtie[2], bowtie[3]));
        let err = validate_polygon(&pts(&bowtie)).unwrap_err();
        assert_eq!(err, GeometryError::SelfIntersecting { first: 0, second: 2 });
        assert_eq!(err.code(), "SELF_INTERSECTING");
    }

    #[test]
    fn duplicate_and_range_errors() {
        assert_eq!(
            validate_polygon(&pts(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (1.0, 1.0)])),
            Err(GeometryError::DuplicateConsecutiveVertex { index: 1 })
        );
        assert!(matches!(
            validate_polygon(&pts(&[(0.0, 0.0), (181.0, 0.0), (1.0, 1.0)])),
            Err(GeometryError::CoordinateOutOfRange { index: 1, .. })
        ));
        assert!(matches!(
            validate_polygon(&pts(&[(0.0, f64::NAN), (1.0, 0.0), (1.0, 1.0)])),
            Err(GeometryError::CoordinateOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            validate_polygon(&pts(&[(179.0, 0.0), (-179.0, 0.0), (-179.0, 1.0), (179.0, 1.0)])),
            Err(GeometryError::CoordinateOutOfRange { .. })
        ));
    }

    #[test]
    fn collinear_ring_rejected() {
        assert!(matches!(
            validate_polygon(&pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])),
            Err(GeometryError::SelfIntersecting { .. })
        ));
        // Spike folding back along its incoming edge.
        assert!(matches!(
            validate_polygon(&pts(&[(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (1.0, 1.0)])),
            Err(GeometryError::SelfIntersecting { .. })
        ));
    }

    #[test]
    fn explicit_closure_accepted() {
        let closed = validate_polygon(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 0.0)])).unwrap();
        assert_eq!(closed.vertices().len(), 3);
    }

    #[test]
    fn containment_basics() {
        let sq = unit_square();
        assert!(sq.contains(&GeoPoint::new(0.5, 0.5)));
        assert!(!sq.contains(&GeoPoint::new(2.0, 2.0)));
        assert!(sq.contains(&GeoPoint::new(1.0, 0.5)));
        assert!(sq.contains(&GeoPoint::new(0.5, 1.0 + 5e-10)));
        assert!(!sq.contains(&GeoPoint::new(0.5, 1.0 + 1e-6)));
        for v in sq.vertices() {
            assert!(sq.contains(v));
        }
    }

    #[test]
    fn concave_containment() {
        // U shape opening upwards.
        let u = validate_polygon(&pts(&[
            (0.0, 0.0),
            (3.0, 0.0),
            (3.0, 3.0),
            (2.0, 3.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 3.0),
            (0.0, 3.0),
        ]))
        .unwrap();
        assert!(u.contains(&GeoPoint::new(0.5, 2.0)));
        assert!(!u.contains(&GeoPoint::new(1.5, 2.0)));
        assert!(u.contains(&GeoPoint::new(1.5, 0.5)));
    }

    #[test]
    fn bounding_boxes() {
        let sq = unit_square();
        assert_eq!(
            bounding_box(&sq),
            BoundingBox { min: GeoPoint::new(0.0, 0.0), max: GeoPoint::new(1.0, 1.0) }
        );
        let tri = validate_polygon(&pts(&[(0.0, 0.0), (2.0, 0.0), (1.0, 1.0)])).unwrap();
        assert_eq!(
            tri.bounding_box(),
            BoundingBox { min: GeoPoint::new(0.0, 0.0), max: GeoPoint::new(2.0, 1.0) }
        );
    }

    #[test]
    fn grid_cell_half_open() {
        let o = GeoPoint::new(0.0, 0.0);
        assert_eq!(grid_cell(&GeoPoint::new(0.5, 0.5), &o, 1.0), GridCell { col: 0, row: 0 });
        assert_eq!(grid_cell(&GeoPoint::new(1.0, 0.0), &o, 1.0), GridCell { col: 1, row: 0 });
        assert_eq!(grid_cell(&GeoPoint::new(-0.5, 0.0), &o, 1.0), GridCell { col: -1, row: 0 });
    }

    #[test]
    fn geojson_round_trip() {
        let sq = unit_square();
        let json = serde_json::to_string(&sq).unwrap();
        assert_eq!(json, r#"{"type":"Polygon","coordinates":[[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,1.0],[0.0,0.0]]]}"#);
        let back: Polygon = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sq);
        let bad = r#"{"type":"Polygon","coordinates":[[[0,0],[1,1],[1,0],[0,1],[0,0]]]}"#;
        assert!(serde_json::from_str::<Polygon>(bad).is_err());
    }

    fn star_polygon() -> impl Strategy<Value = Vec<GeoPoint>> {
        (3usize..12, -50.0f64..50.0, -50.0f64..50.0).prop_flat_map(|(n, cx, cy)| {
            (proptest::collection::vec((0.0f64..1.0, 0.1f64..2.0), n)).prop_map(move |raw| {
                let mut angles: Vec<(f64, f64)> = raw
                    .iter()
                    .enumerate()
                    .map(|(i, (jit, r))| ((i as f64 + jit * 0.9) / n as f64 * std::f64::consts::TAU, *r))
                    .collect();
                angles.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                angles
                    .into_iter()
                    .map(|(a, r)| GeoPoint::new(cx + r * a.cos(), cy + r * a.sin()))
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn vertices_are_inside(ring in star_polygon()) {
            let poly = validate_polygon(&ring).unwrap();
            for v in poly.vertices() {
                prop_assert!(poly.contains(v));
            }
        }

        #[test]
        fn containment_implies_bbox(ring in star_polygon(), x in -53.0f64..53.0, y in -53.0f64..53.0) {
            let poly = validate_polygon(&ring).unwrap();
            let p = GeoPoint::new(x, y);
            if poly.contains(&p) {
                prop_assert!(poly.bounding_box().expanded(1e-12 + EDGE_TOLERANCE_DEG).contains(&p));
            }
        }

        #[test]
        fn bbox_matches_fold(ring in star_polygon()) {
            let poly = validate_polygon(&ring).unwrap();
            let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for v in &ring {
                lo_x = lo_x.min(v.lon); lo_y = lo_y.min(v.lat);
                hi_x = hi_x.max(v.lon); hi_y = hi_y.max(v.lat);
            }
            let bb = poly.bounding_box();
            prop_assert_eq!((bb.min.lon, bb.min.lat, bb.max.lon, bb.max.lat), (lo_x, lo_y, hi_x, hi_y));
        }

        #[test]
        fn grid_matches_floor(x in -180.0f64..180.0, y in -90.0f64..90.0, cell in 0.001f64..5.0) {
            let o = GeoPoint::new(-10.0, -5.0);
            let c = grid_cell(&GeoPoint::new(x, y), &o, cell);
            prop_assert_eq!(c.col, ((x + 10.0) / cell).floor() as i64);
            prop_assert_eq!(c.row, ((y + 5.0) / cell).floor() as i64);
        }

        // Dyadic coordinates and cell sizes keep the translation exact.
        #[test]
        fn grid_translation_increments_col(xi in -1_000_000i64..1_000_000, yi in -1_000_000i64..1_000_000, k in 0i32..12) {
            let cell = 2f64.powi(-k);
            let scale = 2f64.powi(-20);
            let o = GeoPoint::new(0.25, -0.5);
            let p = GeoPoint::new(xi as f64 * scale, yi as f64 * scale);
            let shifted = GeoPoint::new(p.lon + cell, p.lat);
            let a = grid_cell(&p, &o, cell);
            let b = grid_cell(&shifted, &o, cell);
            prop_assert_eq!(b.col, a.col + 1);
            prop_assert_eq!(b.row, a.row);
        }
    }
}
