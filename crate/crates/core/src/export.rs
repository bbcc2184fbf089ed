//! Static geometry exports: SVG 1.1 drawings of 2-objective sandwiches and
//! ASCII OFF meshes of 3-objective polyhedra.
//!
//! Both formats only show the bounded portion of the (generally unbounded)
//! polyhedra: the H-representation is intersected with a padded bounding box
//! derived from the collected vertices, and the box is reported in the
//! artifact (an SVG `<desc>` element, OFF comment lines).

use crate::benson::{Approximations, PolyDescription};
use crate::error::{Error, Result};
use crate::polyhedra::{Halfspace, Polyhedron};

/// Padded axis-aligned bounding box of a set of polyhedra's vertices.
#[derive(Debug, Clone)]
pub struct BoundingBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

fn bounding_box(descs: &[&PolyDescription], pad_fraction: f64) -> Result<BoundingBox> {
    let dim = descs
        .iter()
        .flat_map(|d| d.vertices.first())
        .map(|v| v.len())
        .next()
        .ok_or_else(|| Error::Format("no vertices to export".into()))?;
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for d in descs {
        for v in &d.vertices {
            for (j, &x) in v.iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
    }
    let span = min
        .iter()
        .zip(&max)
        .map(|(a, b)| b - a)
        .fold(0.0f64, f64::max)
        .max(1e-3);
    let pad = pad_fraction * span;
    for j in 0..dim {
        min[j] -= pad;
        max[j] += pad;
    }
    Ok(BoundingBox { min, max })
}

/// Vertices of the polyhedron clipped to the box, or `None` when the clip is
/// empty.
fn clip_to_box(desc: &PolyDescription, bbox: &BoundingBox) -> Result<Option<Vec<Vec<f64>>>> {
    let dim = bbox.min.len();
    let mut halfspaces = desc.halfspaces.clone();
    for j in 0..dim {
        let mut lo = vec![0.0; dim];
        lo[j] = 1.0;
        halfspaces.push(Halfspace::new(lo, bbox.min[j]));
        let mut hi = vec![0.0; dim];
        hi[j] = -1.0;
        halfspaces.push(Halfspace::new(hi, -bbox.max[j]));
    }
    let poly = Polyhedron::from_halfspaces(dim, halfspaces);
    let vrep = poly.dual_description()?;
    if vrep.vertices.is_empty() {
        return Ok(None);
    }
    Ok(Some(vrep.vertices))
}

/// Order 2D points counterclockwise around their centroid.
fn polygon_order(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    pts.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.partial_cmp(&tb).unwrap()
    });
    pts
}

const SVG_SIZE: f64 = 640.0;
const SVG_MARGIN: f64 = 40.0;

struct SvgMap {
    bbox: BoundingBox,
    scale: f64,
}

impl SvgMap {
    fn new(bbox: BoundingBox) -> Self {
        let span = bbox
            .min
            .iter()
            .zip(&bbox.max)
            .map(|(a, b)| b - a)
            .fold(0.0f64, f64::max)
            .max(1e-12);
        SvgMap {
            bbox,
            scale: (SVG_SIZE - 2.0 * SVG_MARGIN) / span,
        }
    }

    /// Map problem coordinates to SVG pixels (y axis flipped).
    fn pt(&self, p: &[f64]) -> (f64, f64) {
        (
            SVG_MARGIN + (p[0] - self.bbox.min[0]) * self.scale,
            SVG_SIZE - SVG_MARGIN - (p[1] - self.bbox.min[1]) * self.scale,
        )
    }

    fn path(&self, polygon: &[Vec<f64>]) -> String {
        let mut s = String::new();
        for (k, p) in polygon.iter().enumerate() {
            let (x, y) = self.pt(p);
            s.push_str(if k == 0 { "M" } else { "L" });
            s.push_str(&format!("{x:.2},{y:.2} "));
        }
        s.push('Z');
        s
    }
}

/// Render a 2-objective sandwich as an SVG 1.1 document: the outer
/// approximation, the inner approximation nested inside it, and the
/// collected solution points, all clipped to a padded bounding box.
pub fn render_sandwich_svg(approx: &Approximations, points: &[Vec<f64>]) -> Result<String> {
    render_svg_2d(&approx.outer, &approx.inner, points)
}

/// Render the geometric-dual sandwich (`D_out` around `D_in`).
pub fn render_dual_sandwich_svg(approx: &Approximations) -> Result<String> {
    render_svg_2d(&approx.dual_outer, &approx.dual_inner, &[])
}

fn render_svg_2d(
    outer: &PolyDescription,
    inner: &PolyDescription,
    points: &[Vec<f64>],
) -> Result<String> {
    let dim = outer
        .vertices
        .first()
        .or_else(|| inner.vertices.first())
        .map(|v| v.len())
        .ok_or_else(|| Error::Format("no vertices to export".into()))?;
    if dim != 2 {
        return Err(Error::Format(format!(
            "SVG export needs 2 objectives, got {dim}"
        )));
    }
    let bbox = bounding_box(&[outer, inner], 0.25)?;
    let outer_poly = clip_to_box(outer, &bbox)?
        .map(polygon_order)
        .ok_or_else(|| Error::Format("outer approximation misses the bounding box".into()))?;
    let inner_poly = clip_to_box(inner, &bbox)?
        .map(polygon_order)
        .ok_or_else(|| Error::Format("inner approximation misses the bounding box".into()))?;

    let map = SvgMap::new(bbox);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        SVG_SIZE
    ));
    svg.push_str(&format!(
        "  <desc>clip box: [{:?}, {:?}] x [{:?}, {:?}]</desc>\n",
        map.bbox.min[0], map.bbox.max[0], map.bbox.min[1], map.bbox.max[1]
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <path d=\"{}\" fill=\"#c7ddf2\" stroke=\"#2c6fad\" stroke-width=\"1.5\"/>\n",
        map.path(&outer_poly)
    ));
    svg.push_str(&format!(
        "  <path d=\"{}\" fill=\"#9dc7a4\" stroke=\"#2d7a3a\" stroke-width=\"1.5\"/>\n",
        map.path(&inner_poly)
    ));
    for p in points {
        if p.len() == 2
            && p[0] >= map.bbox.min[0]
            && p[0] <= map.bbox.max[0]
            && p[1] >= map.bbox.min[1]
            && p[1] <= map.bbox.max[1]
        {
            let (x, y) = map.pt(p);
            svg.push_str(&format!(
                "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#7a1f1f\"/>\n"
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render a 3-objective polyhedron clipped to a padded bounding box as an
/// ASCII OFF mesh (one face per active halfspace, including box faces).
pub fn render_off(desc: &PolyDescription) -> Result<String> {
    let dim = desc
        .vertices
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::Format("no vertices to export".into()))?;
    if dim != 3 {
        return Err(Error::Format(format!(
            "OFF export needs 3 objectives, got {dim}"
        )));
    }
    let bbox = bounding_box(&[desc], 0.25)?;
    let mut halfspaces = desc.halfspaces.clone();
    for j in 0..3 {
        let mut lo = vec![0.0; 3];
        lo[j] = 1.0;
        halfspaces.push(Halfspace::new(lo, bbox.min[j]));
        let mut hi = vec![0.0; 3];
        hi[j] = -1.0;
        halfspaces.push(Halfspace::new(hi, -bbox.max[j]));
    }
    let poly = Polyhedron::from_halfspaces(3, halfspaces.clone());
    let vrep = poly.dual_description()?;
    if vrep.vertices.is_empty() {
        return Err(Error::Format("polyhedron misses the bounding box".into()));
    }
    let verts = vrep.vertices;
    let scale = verts
        .iter()
        .flatten()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let on_tol = 1e-7 * scale;

    // One face per halfspace with >= 3 incident vertices, ordered around the
    // face centroid in the plane.
    let mut faces: Vec<Vec<usize>> = Vec::new();
    for h in &halfspaces {
        let idx: Vec<usize> = (0..verts.len())
            .filter(|&k| h.slack(&verts[k]).abs() <= on_tol)
            .collect();
        if idx.len() < 3 {
            continue;
        }
        // Orthonormal basis of the face plane.
        let n = &h.normal;
        let mut a = if n[0].abs() < 0.9 {
            vec![1.0, 0.0, 0.0]
        } else {
            vec![0.0, 1.0, 0.0]
        };
        let an: f64 = a.iter().zip(n).map(|(x, y)| x * y).sum();
        let nn: f64 = n.iter().map(|x| x * x).sum();
        for j in 0..3 {
            a[j] -= an / nn * n[j];
        }
        let b = vec![
            n[1] * a[2] - n[2] * a[1],
            n[2] * a[0] - n[0] * a[2],
            n[0] * a[1] - n[1] * a[0],
        ];
        let cx: Vec<f64> = (0..3)
            .map(|j| idx.iter().map(|&k| verts[k][j]).sum::<f64>() / idx.len() as f64)
            .collect();
        let mut ordered = idx.clone();
        let angle = |k: usize| {
            let d: Vec<f64> = (0..3).map(|j| verts[k][j] - cx[j]).collect();
            let u: f64 = d.iter().zip(&a).map(|(x, y)| x * y).sum();
            let v: f64 = d.iter().zip(&b).map(|(x, y)| x * y).sum();
            v.atan2(u)
        };
        ordered.sort_by(|&p, &q| angle(p).partial_cmp(&angle(q)).unwrap());
        if !faces.iter().any(|f| {
            f.len() == ordered.len() && {
                let mut s1 = f.clone();
                let mut s2 = ordered.clone();
                s1.sort_unstable();
                s2.sort_unstable();
                s1 == s2
            }
        }) {
            faces.push(ordered);
        }
    }

    let mut off = String::from("OFF\n");
    off.push_str(&format!(
        "# clip box: min {:?} max {:?}\n",
        bbox.min, bbox.max
    ));
    off.push_str(&format!("{} {} 0\n", verts.len(), faces.len()));
    for v in &verts {
        off.push_str(&format!("{:?} {:?} {:?}\n", v[0], v[1], v[2]));
    }
    for f in &faces {
        off.push_str(&f.len().to_string());
        for k in f {
            off.push_str(&format!(" {k}"));
        }
        off.push('\n');
    }
    Ok(off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedra::Halfspace;

    fn square() -> PolyDescription {
        PolyDescription {
            vertices: vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ],
            rays: vec![],
            halfspaces: vec![
                Halfspace::new(vec![1.0, 0.0], 0.0),
                Halfspace::new(vec![0.0, 1.0], 0.0),
                Halfspace::new(vec![-1.0, 0.0], -1.0),
                Halfspace::new(vec![0.0, -1.0], -1.0),
            ],
        }
    }

    fn shifted_quadrant(offset: f64) -> PolyDescription {
        PolyDescription {
            vertices: vec![vec![offset, offset]],
            rays: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            halfspaces: vec![
                Halfspace::new(vec![1.0, 0.0], offset),
                Halfspace::new(vec![0.0, 1.0], offset),
            ],
        }
    }

    #[test]
    fn svg_contains_nested_paths_and_points() {
        let approx = Approximations {
            inner: shifted_quadrant(0.5),
            outer: shifted_quadrant(0.0),
            dual_inner: square(),
            dual_outer: square(),
        };
        let svg = render_sandwich_svg(&approx, &[vec![0.5, 0.5]]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<path").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("clip box"));
        let dual = render_dual_sandwich_svg(&approx).unwrap();
        assert_eq!(dual.matches("<path").count(), 2);
    }

    #[test]
    fn svg_rejects_wrong_dimension() {
        let desc = PolyDescription {
            vertices: vec![vec![0.0, 0.0, 0.0]],
            rays: vec![],
            halfspaces: vec![],
        };
        let approx = Approximations {
            inner: desc.clone(),
            outer: desc,
            dual_inner: square(),
            dual_outer: square(),
        };
        assert!(render_sandwich_svg(&approx, &[]).is_err());
    }

    #[test]
    fn off_mesh_of_clipped_octant_is_a_closed_box() {
        let desc = PolyDescription {
            vertices: vec![vec![1.0, 2.0, 3.0]],
            rays: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            halfspaces: vec![
                Halfspace::new(vec![1.0, 0.0, 0.0], 1.0),
                Halfspace::new(vec![0.0, 1.0, 0.0], 2.0),
                Halfspace::new(vec![0.0, 0.0, 1.0], 3.0),
            ],
        };
        let off = render_off(&desc).unwrap();
        let mut lines = off.lines();
        assert_eq!(lines.next(), Some("OFF"));
        let comment = lines.next().unwrap();
        assert!(comment.starts_with("# clip box"));
        let counts: Vec<usize> = lines
            .next()
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        // A clipped translated octant is a box: 8 vertices, 6 faces.
        assert_eq!(counts[0], 8);
        assert_eq!(counts[1], 6);
    }
}
