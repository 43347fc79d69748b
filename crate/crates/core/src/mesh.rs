//! Structured P1 triangulation of a rectangle.
//!
//! Nodes are numbered row by row (`node = j * (nx + 1) + i`) and every cell
//! is cut along the diagonal from its lower-left to its upper-right corner.
//! Using the same diagonal everywhere makes `2nx × 2ny` refine `nx × ny`
//! with nested node sets.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh dimensions: {0}")]
    InvalidDimensions(String),
    #[error("boundary configuration: {0}")]
    Boundary(String),
    #[error("mesh {fine_nx}x{fine_ny} is not a nested refinement of {coarse_nx}x{coarse_ny}")]
    NotNested {
        coarse_nx: usize,
        coarse_ny: usize,
        fine_nx: usize,
        fine_ny: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s.trim() {
            "left" | "x=0" => Some(Side::Left),
            "right" | "x=L1" => Some(Side::Right),
            "bottom" | "y=0" => Some(Side::Bottom),
            "top" | "y=L2" => Some(Side::Top),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    Dirichlet,
    Neumann,
    Robin,
}

/// Which sides carry the Dirichlet value; the rest of the boundary is
/// Neumann (`robin_alpha0 == 0`) or Robin.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub dirichlet_sides: Vec<Side>,
    pub dirichlet_value: f64,
    pub robin_alpha0: f64,
}

impl BoundarySpec {
    pub fn neumann() -> Self {
        Self {
            dirichlet_sides: Vec::new(),
            dirichlet_value: 0.0,
            robin_alpha0: 0.0,
        }
    }

    pub fn dirichlet(sides: &[Side], value: f64) -> Self {
        Self {
            dirichlet_sides: sides.to_vec(),
            dirichlet_value: value,
            robin_alpha0: 0.0,
        }
    }

    pub fn is_dirichlet(&self, side: Side) -> bool {
        self.dirichlet_sides.contains(&side)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub l1: f64,
    pub l2: f64,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_tag: Vec<BoundaryTag>,
    /// Boundary edges as `(a, b, side)`.
    pub boundary_edges: Vec<(usize, usize, Side)>,
    pub h: f64,
    dirichlet_sides: [bool; 4],
}

pub fn build_rectangle_mesh(l1: f64, l2: f64, nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
        return Err(MeshError::InvalidDimensions(format!(
            "side lengths must be positive, got {l1} x {l2}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidDimensions(format!(
            "cell counts must be at least 1, got {nx} x {ny}"
        )));
    }
    let hx = l1 / nx as f64;
    let hy = l2 / ny as f64;
    let id = |i: usize, j: usize| j * (nx + 1) + i;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut boundary_tag = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // exact endpoints so boundary lookups never depend on rounding
            let x = if i == nx { l1 } else { i as f64 * hx };
            let y = if j == ny { l2 } else { j as f64 * hy };
            nodes.push([x, y]);
            let on_boundary = i == 0 || i == nx || j == 0 || j == ny;
            boundary_tag.push(if on_boundary {
                BoundaryTag::Neumann
            } else {
                BoundaryTag::Interior
            });
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (sw, se, ne, nw) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([sw, se, ne]);
            triangles.push([sw, ne, nw]);
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push((id(i, 0), id(i + 1, 0), Side::Bottom));
        boundary_edges.push((id(i + 1, ny), id(i, ny), Side::Top));
    }
    for j in 0..ny {
        boundary_edges.push((id(nx, j), id(nx, j + 1), Side::Right));
        boundary_edges.push((id(0, j + 1), id(0, j), Side::Left));
    }

    Ok(Mesh {
        l1,
        l2,
        nx,
        ny,
        nodes,
        triangles,
        boundary_tag,
        boundary_edges,
        h: (hx * hx + hy * hy).sqrt(),
        dirichlet_sides: [false; 4],
    })
}

/// Tags boundary nodes from `spec`. Nodes on a Dirichlet side, corners
/// included, become Dirichlet; the remaining boundary nodes become Neumann
/// or Robin depending on `robin_alpha0`.
pub fn classify_boundary(mesh: &Mesh, spec: &BoundarySpec) -> Result<Mesh, MeshError> {
    if !spec.dirichlet_value.is_finite() {
        return Err(MeshError::Boundary("Dirichlet value must be finite".into()));
    }
    if !spec.robin_alpha0.is_finite() || spec.robin_alpha0 < 0.0 {
        return Err(MeshError::Boundary(format!(
            "Robin coefficient must be finite and nonnegative, got {}",
            spec.robin_alpha0
        )));
    }
    let mut out = mesh.clone();
    out.dirichlet_sides = [false; 4];
    for &side in &spec.dirichlet_sides {
        out.dirichlet_sides[side.index()] = true;
    }
    let natural = if spec.robin_alpha0 > 0.0 {
        BoundaryTag::Robin
    } else {
        BoundaryTag::Neumann
    };
    for node in 0..out.node_count() {
        let sides = out.sides_of(node);
        out.boundary_tag[node] = if sides.is_empty() {
            BoundaryTag::Interior
        } else if sides.iter().any(|s| out.dirichlet_sides[s.index()]) {
            BoundaryTag::Dirichlet
        } else {
            natural
        };
    }
    Ok(out)
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Grid indices `(i, j)` of a node.
    pub fn grid_index(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..=self.nx).map(|i| self.nodes[i][0]).collect()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        (0..=self.ny).map(|j| self.nodes[self.node_id(0, j)][1]).collect()
    }

    pub fn sides_of(&self, node: usize) -> Vec<Side> {
        let (i, j) = self.grid_index(node);
        let mut sides = Vec::new();
        if i == 0 {
            sides.push(Side::Left);
        }
        if i == self.nx {
            sides.push(Side::Right);
        }
        if j == 0 {
            sides.push(Side::Bottom);
        }
        if j == self.ny {
            sides.push(Side::Top);
        }
        sides
    }

    pub fn is_dirichlet_side(&self, side: Side) -> bool {
        self.dirichlet_sides[side.index()]
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&n| self.boundary_tag[n] == BoundaryTag::Dirichlet)
            .collect()
    }

    /// Twice the signed area of a triangle.
    pub fn signed_area2(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * self.signed_area2(t)
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        [
            (self.nodes[a][0] + self.nodes[b][0] + self.nodes[c][0]) / 3.0,
            (self.nodes[a][1] + self.nodes[b][1] + self.nodes[c][1]) / 3.0,
        ]
    }

    /// Longest edge over all triangles.
    pub fn max_edge_length(&self) -> f64 {
        let len = |a: usize, b: usize| {
            let (p, q) = (self.nodes[a], self.nodes[b]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        };
        self.triangles
            .iter()
            .map(|&[a, b, c]| len(a, b).max(len(b, c)).max(len(c, a)))
            .fold(0.0, f64::max)
    }

    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|p| f(p[0], p[1])).collect()
    }

    /// For each node of `self`, the node of `fine` at the same position.
    /// Requires `fine` to be an integer refinement of `self` on the same
    /// rectangle.
    pub fn nested_lookup(&self, fine: &Mesh) -> Result<Vec<usize>, MeshError> {
        let not_nested = || MeshError::NotNested {
            coarse_nx: self.nx,
            coarse_ny: self.ny,
            fine_nx: fine.nx,
            fine_ny: fine.ny,
        };
        if self.l1 != fine.l1 || self.l2 != fine.l2 {
            return Err(not_nested());
        }
        if fine.nx % self.nx != 0 || fine.ny % self.ny != 0 {
            return Err(not_nested());
        }
        let (rx, ry) = (fine.nx / self.nx, fine.ny / self.ny);
        Ok((0..self.node_count())
            .map(|n| {
                let (i, j) = self.grid_index(n);
                fine.node_id(i * rx, j * ry)
            })
            .collect())
    }

    /// Writes `nodes.csv` and `triangles.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), MeshError> {
        std::fs::create_dir_all(dir)?;
        let mut nodes = std::io::BufWriter::new(std::fs::File::create(dir.join("nodes.csv"))?);
        writeln!(nodes, "node,x,y,tag")?;
        for (n, p) in self.nodes.iter().enumerate() {
            let tag = match self.boundary_tag[n] {
                BoundaryTag::Interior => "interior",
                BoundaryTag::Dirichlet => "dirichlet",
                BoundaryTag::Neumann => "neumann",
                BoundaryTag::Robin => "robin",
            };
            writeln!(nodes, "{n},{:?},{:?},{tag}", p[0], p[1])?;
        }
        nodes.flush()?;
        let mut tris = std::io::BufWriter::new(std::fs::File::create(dir.join("triangles.csv"))?);
        writeln!(tris, "triangle,a,b,c")?;
        for (t, [a, b, c]) in self.triangles.iter().enumerate() {
            writeln!(tris, "{t},{a},{b},{c}")?;
        }
        tris.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn smallest_mesh() {
        let m = build_rectangle_mesh(1.0, 1.0, 1, 1).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.triangle_count(), 2);
        assert!(m.boundary_tag.iter().all(|&t| t != BoundaryTag::Interior));
    }

    #[test]
    fn two_by_two_has_one_interior_node() {
        let m = build_rectangle_mesh(1.0, 1.0, 2, 2).unwrap();
        assert_eq!(m.node_count(), 9);
        assert_eq!(m.triangle_count(), 8);
        let interior: Vec<usize> = (0..9)
            .filter(|&n| m.boundary_tag[n] == BoundaryTag::Interior)
            .collect();
        assert_eq!(interior, vec![4]);
        assert_eq!(m.nodes[4], [0.5, 0.5]);
    }

    #[test]
    fn mesh_size_formula() {
        let m = build_rectangle_mesh(2.0, 1.0, 2, 1).unwrap();
        assert_eq!(m.h, 2f64.sqrt());
        assert_eq!(m.max_edge_length(), m.h);
    }

    #[test]
    fn bad_dimensions_are_rejected() {
        assert!(build_rectangle_mesh(0.0, 1.0, 2, 2).is_err());
        assert!(build_rectangle_mesh(1.0, -1.0, 2, 2).is_err());
        assert!(build_rectangle_mesh(1.0, 1.0, 0, 2).is_err());
    }

    #[test]
    fn left_edge_dirichlet() {
        let m = build_rectangle_mesh(1.0, 1.0, 2, 2).unwrap();
        let m = classify_boundary(&m, &BoundarySpec::dirichlet(&[Side::Left], 1.0)).unwrap();
        let pts: Vec<[f64; 2]> = m.dirichlet_nodes().iter().map(|&n| m.nodes[n]).collect();
        assert_eq!(pts, vec![[0.0, 0.0], [0.0, 0.5], [0.0, 1.0]]);
        let neumann = m
            .boundary_tag
            .iter()
            .filter(|&&t| t == BoundaryTag::Neumann)
            .count();
        assert_eq!(neumann, 5);
    }

    #[test]
    fn pure_neumann_and_full_dirichlet() {
        let m = build_rectangle_mesh(1.0, 1.0, 2, 2).unwrap();
        let neu = classify_boundary(&m, &BoundarySpec::neumann()).unwrap();
        assert_eq!(
            neu.boundary_tag
                .iter()
                .filter(|&&t| t == BoundaryTag::Neumann)
                .count(),
            8
        );
        let all = classify_boundary(&m, &BoundarySpec::dirichlet(&Side::ALL, 0.0)).unwrap();
        assert_eq!(all.dirichlet_nodes().len(), 8);
        assert!(all
            .boundary_tag
            .iter()
            .all(|&t| t == BoundaryTag::Dirichlet || t == BoundaryTag::Interior));
        let robin = BoundarySpec {
            robin_alpha0: 0.5,
            ..BoundarySpec::neumann()
        };
        let rob = classify_boundary(&m, &robin).unwrap();
        assert_eq!(
            rob.boundary_tag
                .iter()
                .filter(|&&t| t == BoundaryTag::Robin)
                .count(),
            8
        );
    }

    #[test]
    fn areas_positive_and_sum_to_rectangle() {
        for (l1, l2, nx, ny) in [(1.0, 1.0, 3, 5), (2.5, 0.7, 8, 3), (1.0, 3.0, 1, 7)] {
            let m = build_rectangle_mesh(l1, l2, nx, ny).unwrap();
            assert!((0..m.triangle_count()).all(|t| m.area(t) > 0.0));
            let total: f64 = (0..m.triangle_count()).map(|t| m.area(t)).sum();
            assert!((total - l1 * l2).abs() < 1e-13 * l1 * l2);
        }
    }

    #[test]
    fn edges_shared_by_two_triangles_or_on_boundary() {
        let m = build_rectangle_mesh(1.0, 2.0, 4, 3).unwrap();
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for &[a, b, c] in &m.triangles {
            for (p, q) in [(a, b), (b, c), (c, a)] {
                *count.entry((p.min(q), p.max(q))).or_default() += 1;
            }
        }
        let boundary: std::collections::HashSet<(usize, usize)> = m
            .boundary_edges
            .iter()
            .map(|&(a, b, _)| (a.min(b), a.max(b)))
            .collect();
        for (edge, n) in count {
            if boundary.contains(&edge) {
                assert_eq!(n, 1);
            } else {
                assert_eq!(n, 2, "edge {edge:?}");
            }
        }
    }

    #[test]
    fn refinement_is_nested() {
        let coarse = build_rectangle_mesh(1.0, 1.0, 3, 2).unwrap();
        let fine = build_rectangle_mesh(1.0, 1.0, 6, 4).unwrap();
        let lookup = coarse.nested_lookup(&fine).unwrap();
        for (c, &f) in lookup.iter().enumerate() {
            let (p, q) = (coarse.nodes[c], fine.nodes[f]);
            assert!((p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15);
        }
        let other = build_rectangle_mesh(1.0, 1.0, 5, 4).unwrap();
        assert!(coarse.nested_lookup(&other).is_err());
    }
}
