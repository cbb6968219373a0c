//! Conforming triangulations of the square `(-1, 1)^2`, cavity carving,
//! newest-vertex bisection and boundary-trace transfer.
//!
//! Triangles are stored counterclockwise with the *newest vertex* in slot 0,
//! so the refinement edge of `[v0, v1, v2]` is always `(v1, v2)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::MeshError;

pub type Point = [f64; 2];

/// Sides of the square, numbered counterclockwise from the bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Bottom = 0,
    Right = 1,
    Top = 2,
    Left = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn name(self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        }
    }

    pub fn from_name(s: &str) -> Option<Side> {
        Side::ALL.into_iter().find(|side| side.name() == s)
    }

    /// Coordinate along the side (x for bottom/top, y for left/right) and
    /// distance from the side's supporting line.
    fn local(self, p: Point) -> (f64, f64) {
        match self {
            Side::Bottom => (p[0], (p[1] + 1.0).abs()),
            Side::Top => (p[0], (p[1] - 1.0).abs()),
            Side::Left => (p[1], (p[0] + 1.0).abs()),
            Side::Right => (p[1], (p[0] - 1.0).abs()),
        }
    }

    fn point(self, t: f64) -> Point {
        match self {
            Side::Bottom => [t, -1.0],
            Side::Top => [t, 1.0],
            Side::Left => [-1.0, t],
            Side::Right => [1.0, t],
        }
    }
}

/// Tag carried by every boundary edge. The id of outer-boundary tags is the
/// index of the side of the square the edge lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    Dirichlet(u8),
    Neumann(u8),
    CavityWall,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, BoundaryTag::Dirichlet(_))
    }

    pub fn is_neumann(self) -> bool {
        matches!(self, BoundaryTag::Neumann(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// A closed interval `[from, to]` of one side of the square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySegment {
    pub side: Side,
    pub from: f64,
    pub to: f64,
}

impl BoundarySegment {
    pub fn whole(side: Side) -> Self {
        Self {
            side,
            from: -1.0,
            to: 1.0,
        }
    }

    fn contains(&self, p: Point) -> bool {
        let (t, d) = self.side.local(p);
        d < 1e-12 && t >= self.from - 1e-12 && t <= self.to + 1e-12
    }
}

/// Portion of the outer boundary carrying homogeneous Dirichlet conditions.
/// Everything else on the outer boundary is Neumann.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletSpec {
    pub segments: Vec<BoundarySegment>,
}

impl DirichletSpec {
    pub fn sides(sides: &[Side]) -> Self {
        Self {
            segments: sides.iter().map(|&s| BoundarySegment::whole(s)).collect(),
        }
    }

    pub fn bottom() -> Self {
        Self::sides(&[Side::Bottom])
    }

    fn contains_edge(&self, a: Point, b: Point) -> bool {
        let m = midpoint(a, b);
        self.segments.iter().any(|s| s.contains(m))
    }
}

impl Default for DirichletSpec {
    fn default() -> Self {
        Self::bottom()
    }
}

/// Conforming triangulation with tagged boundary edges.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    generation: usize,
}

pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn dist(a: Point, b: Point) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

/// Distance from `p` to the segment `[a, b]` and the projection parameter.
fn segment_distance(p: Point, a: Point, b: Point) -> (f64, f64) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2
    } else {
        0.0
    };
    let tc = t.clamp(0.0, 1.0);
    let q = [a[0] + tc * d[0], a[1] + tc * d[1]];
    (dist(p, q), t)
}

impl TriMesh {
    /// Assembles a mesh from raw parts without validation.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
    ) -> Self {
        Self {
            vertices,
            triangles,
            boundary,
            generation: 0,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Number of refinement passes this mesh has been through.
    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Smallest interior angle of triangle `t`, in degrees.
    pub fn min_angle_deg(&self, t: usize) -> f64 {
        let p = self.corners(t);
        let mut m = f64::INFINITY;
        for i in 0..3 {
            let a = p[i];
            let b = p[(i + 1) % 3];
            let c = p[(i + 2) % 3];
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * v[0] + u[1] * v[1]) / (libm::hypot(u[0], u[1]) * libm::hypot(v[0], v[1]));
            m = m.min(libm::acos(cos.clamp(-1.0, 1.0)).to_degrees());
        }
        m
    }

    /// Gradients of the three P1 hat functions of triangle `t`.
    pub fn hat_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.corners(t);
        let two_area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ]
    }

    /// Vertices lying on a Dirichlet edge.
    pub fn dirichlet_vertices(&self) -> Vec<bool> {
        self.vertices_with(BoundaryTag::is_dirichlet)
    }

    /// Vertices lying on a Neumann edge (the Σ_N nodes).
    pub fn neumann_vertices(&self) -> Vec<bool> {
        self.vertices_with(BoundaryTag::is_neumann)
    }

    fn vertices_with(&self, pred: impl Fn(BoundaryTag) -> bool) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        for e in self.boundary.iter().filter(|e| pred(e.tag)) {
            mask[e.vertices[0]] = true;
            mask[e.vertices[1]] = true;
        }
        mask
    }

    pub fn neumann_edges(&self) -> impl Iterator<Item = &BoundaryEdge> + '_ {
        self.boundary.iter().filter(|e| e.tag.is_neumann())
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        dist(self.vertices[e.vertices[0]], self.vertices[e.vertices[1]])
    }

    /// Distance from each vertex to the outer (Dirichlet or Neumann) boundary.
    pub fn distance_to_outer_boundary(&self) -> Vec<f64> {
        let outer: Vec<(Point, Point)> = self
            .boundary
            .iter()
            .filter(|e| e.tag != BoundaryTag::CavityWall)
            .map(|e| (self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]))
            .collect();
        self.vertices
            .iter()
            .map(|&p| {
                outer
                    .iter()
                    .map(|&(a, b)| segment_distance(p, a, b).0)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Triangle index pairs sharing an edge, keyed by the sorted edge.
    fn edge_triangles(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
            }
        }
        map
    }

    /// Checks positivity, conformity and boundary tagging. Returns a
    /// description of the first violation.
    pub fn validate(&self) -> Result<(), &'static str> {
        for t in 0..self.num_triangles() {
            if !(self.signed_area(t) > 0.0) {
                return Err("triangle with non-positive signed area");
            }
        }
        let edges = self.edge_triangles();
        let mut tagged = BTreeSet::new();
        for e in &self.boundary {
            if !tagged.insert(edge_key(e.vertices[0], e.vertices[1])) {
                return Err("boundary edge tagged twice");
            }
        }
        for (key, tris) in &edges {
            match tris.len() {
                1 => {
                    if !tagged.contains(key) {
                        return Err("untagged boundary edge");
                    }
                }
                2 => {
                    if tagged.contains(key) {
                        return Err("interior edge carries a boundary tag");
                    }
                }
                _ => return Err("edge shared by more than two triangles"),
            }
        }
        for key in &tagged {
            if edges.get(key).is_none_or(|t| t.len() != 1) {
                return Err("tagged edge is not a boundary edge");
            }
        }
        Ok(())
    }

    /// Connected components of the cavity-wall edge graph, each as a sorted
    /// vertex list.
    pub fn cavity_wall_loops(&self) -> Vec<Vec<usize>> {
        let walls: Vec<[usize; 2]> = self
            .boundary
            .iter()
            .filter(|e| e.tag == BoundaryTag::CavityWall)
            .map(|e| e.vertices)
            .collect();
        let mut uf = UnionFind::new(self.num_vertices());
        for &[a, b] in &walls {
            uf.union(a, b);
        }
        let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &[a, b] in &walls {
            let r = uf.find(a);
            let g = groups.entry(r).or_default();
            g.insert(a);
            g.insert(b);
        }
        groups.into_values().map(|g| g.into_iter().collect()).collect()
    }

    /// Locates the triangle containing `p` and returns its index together
    /// with the barycentric coordinates of `p`.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        for t in 0..self.num_triangles() {
            let [a, b, c] = self.corners(t);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
            let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
            let l0 = 1.0 - l1 - l2;
            if l0 >= -tol && l1 >= -tol && l2 >= -tol {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Structured triangulation of `(-1, 1)^2` with `n` cells per side. Cell
/// diagonals alternate in a checkerboard ("union jack") pattern, so every
/// triangle is right isosceles with its hypotenuse as refinement edge.
pub fn build_square_mesh(n: usize, dirichlet: &DirichletSpec) -> Result<TriMesh, MeshError> {
    if n < 2 {
        return Err(MeshError::InvalidResolution(n));
    }
    let h = 2.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            // Pin the last row/column exactly onto the boundary.
            let x = if i == n { 1.0 } else { -1.0 + h * i as f64 };
            let y = if j == n { 1.0 } else { -1.0 + h * j as f64 };
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            if (i + j) % 2 == 0 {
                triangles.push([b, c, a]);
                triangles.push([d, a, c]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([c, d, b]);
            }
        }
    }
    let mut boundary = Vec::with_capacity(4 * n);
    let push = |side: Side, a: usize, b: usize, boundary: &mut Vec<BoundaryEdge>| {
        let tag = if dirichlet.contains_edge(vertices[a], vertices[b]) {
            BoundaryTag::Dirichlet(side as u8)
        } else {
            BoundaryTag::Neumann(side as u8)
        };
        boundary.push(BoundaryEdge {
            vertices: [a, b],
            tag,
        });
    };
    for i in 0..n {
        push(Side::Bottom, idx(i, 0), idx(i + 1, 0), &mut boundary);
    }
    for j in 0..n {
        push(Side::Right, idx(n, j), idx(n, j + 1), &mut boundary);
    }
    for i in (0..n).rev() {
        push(Side::Top, idx(i + 1, n), idx(i, n), &mut boundary);
    }
    for j in (0..n).rev() {
        push(Side::Left, idx(0, j + 1), idx(0, j), &mut boundary);
    }
    if !boundary.iter().any(|e| e.tag.is_dirichlet()) {
        return Err(MeshError::EmptyDirichlet);
    }
    if !boundary.iter().any(|e| e.tag.is_neumann()) {
        return Err(MeshError::EmptyNeumann);
    }
    Ok(TriMesh::from_parts(vertices, triangles, boundary))
}

/// Geometric description of a target cavity.
#[derive(Clone, Debug, PartialEq)]
pub enum CavityShape {
    Disk { center: Point, radius: f64 },
    AxisSquare { center: Point, half_side: f64 },
    /// Simple polygon, vertices in either orientation.
    Polygon(Vec<Point>),
    Union(Vec<CavityShape>),
}

impl CavityShape {
    pub fn contains(&self, p: Point) -> bool {
        match self {
            CavityShape::Disk { center, radius } => dist(p, *center) < *radius,
            CavityShape::AxisSquare { center, half_side } => {
                (p[0] - center[0]).abs() < *half_side && (p[1] - center[1]).abs() < *half_side
            }
            CavityShape::Polygon(vs) => point_in_polygon(p, vs),
            CavityShape::Union(parts) => parts.iter().any(|s| s.contains(p)),
        }
    }

    /// Axis-aligned bounding box `[xmin, ymin, xmax, ymax]`.
    pub fn bounding_box(&self) -> [f64; 4] {
        match self {
            CavityShape::Disk { center, radius } => [
                center[0] - radius,
                center[1] - radius,
                center[0] + radius,
                center[1] + radius,
            ],
            CavityShape::AxisSquare { center, half_side } => [
                center[0] - half_side,
                center[1] - half_side,
                center[0] + half_side,
                center[1] + half_side,
            ],
            CavityShape::Polygon(vs) => vs.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, p| [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])],
            ),
            CavityShape::Union(parts) => parts.iter().map(CavityShape::bounding_box).fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, p| [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[2]), b[3].max(p[3])],
            ),
        }
    }

    /// Whether the shape keeps at least `margin` away from the boundary of
    /// the square.
    pub fn inside_square(&self, margin: f64) -> bool {
        let [x0, y0, x1, y1] = self.bounding_box();
        let lim = 1.0 - margin;
        x0 >= -lim && y0 >= -lim && x1 <= lim && y1 <= lim
    }

    /// Exact area; parts of a union are assumed disjoint.
    pub fn area(&self) -> f64 {
        match self {
            CavityShape::Disk { radius, .. } => core::f64::consts::PI * radius * radius,
            CavityShape::AxisSquare { half_side, .. } => 4.0 * half_side * half_side,
            CavityShape::Polygon(vs) => {
                let n = vs.len();
                let twice: f64 = (0..n)
                    .map(|i| {
                        let a = vs[i];
                        let b = vs[(i + 1) % n];
                        a[0] * b[1] - b[0] * a[1]
                    })
                    .sum();
                0.5 * twice.abs()
            }
            CavityShape::Union(parts) => parts.iter().map(CavityShape::area).sum(),
        }
    }

    /// Area-weighted centroid; parts of a union are assumed disjoint.
    pub fn centroid(&self) -> Point {
        match self {
            CavityShape::Disk { center, .. } | CavityShape::AxisSquare { center, .. } => *center,
            CavityShape::Polygon(vs) => {
                let n = vs.len();
                let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let p = vs[i];
                    let q = vs[(i + 1) % n];
                    let cr = p[0] * q[1] - q[0] * p[1];
                    a += cr;
                    cx += (p[0] + q[0]) * cr;
                    cy += (p[1] + q[1]) * cr;
                }
                [cx / (3.0 * a), cy / (3.0 * a)]
            }
            CavityShape::Union(parts) => {
                let total: f64 = parts.iter().map(CavityShape::area).sum();
                let mut c = [0.0, 0.0];
                for s in parts {
                    let w = s.area() / total;
                    let p = s.centroid();
                    c[0] += w * p[0];
                    c[1] += w * p[1];
                }
                c
            }
        }
    }
}

fn point_in_polygon(p: Point, vs: &[Point]) -> bool {
    let mut inside = false;
    let n = vs.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vs[i], vs[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Removes every triangle whose centroid lies inside `shape` and tags the
/// exposed edges as cavity walls. The shape must keep a distance of at least
/// `margin` from the outer boundary.
pub fn carve_cavity(mesh: &TriMesh, shape: &CavityShape, margin: f64) -> Result<TriMesh, MeshError> {
    if !shape.inside_square(margin) {
        return Err(MeshError::ShapeOutsideDomain { margin });
    }
    let keep: Vec<bool> = (0..mesh.num_triangles())
        .map(|t| !shape.contains(mesh.centroid(t)))
        .collect();
    if keep.iter().all(|&k| k) {
        return Err(MeshError::NothingRemoved);
    }

    // Connectivity of the remaining triangles through shared edges.
    let mut uf = UnionFind::new(mesh.num_triangles());
    for tris in mesh.edge_triangles().values() {
        if tris.len() == 2 && keep[tris[0]] && keep[tris[1]] {
            uf.union(tris[0], tris[1]);
        }
    }
    let roots: BTreeSet<usize> = (0..mesh.num_triangles())
        .filter(|&t| keep[t])
        .map(|t| uf.find(t))
        .collect();
    if roots.len() != 1 {
        return Err(MeshError::Disconnected {
            components: roots.len(),
        });
    }

    let mut new_index = vec![usize::MAX; mesh.num_vertices()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !keep[t] {
            continue;
        }
        let mut nt = [0usize; 3];
        for k in 0..3 {
            let v = tri[k];
            if new_index[v] == usize::MAX {
                new_index[v] = vertices.len();
                vertices.push(mesh.vertices()[v]);
            }
            nt[k] = new_index[v];
        }
        triangles.push(nt);
    }

    let mut boundary: Vec<BoundaryEdge> = mesh
        .boundary_edges()
        .iter()
        .map(|e| BoundaryEdge {
            vertices: [new_index[e.vertices[0]], new_index[e.vertices[1]]],
            tag: e.tag,
        })
        .collect();
    let outer: BTreeSet<(usize, usize)> = boundary
        .iter()
        .map(|e| edge_key(e.vertices[0], e.vertices[1]))
        .collect();
    let mut count: BTreeMap<(usize, usize), (usize, [usize; 2])> = BTreeMap::new();
    for tri in &triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            count.entry(edge_key(a, b)).or_insert((0, [a, b])).0 += 1;
        }
    }
    for (key, (c, oriented)) in count {
        if c == 1 && !outer.contains(&key) {
            boundary.push(BoundaryEdge {
                vertices: oriented,
                tag: BoundaryTag::CavityWall,
            });
        }
    }
    let mut out = TriMesh::from_parts(vertices, triangles, boundary);
    out.generation = mesh.generation;
    Ok(out)
}

/// Records how vertices created by refinement derive from their parents, so
/// nodal P1 fields can be carried over by linear interpolation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VertexTransfer {
    pub old_count: usize,
    /// Parent edge of every new vertex, in creation order.
    pub parents: Vec<[usize; 2]>,
}

impl VertexTransfer {
    pub fn identity(n: usize) -> Self {
        Self {
            old_count: n,
            parents: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn apply_scalar(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.old_count);
        let mut out = field.to_vec();
        for &[a, b] in &self.parents {
            let v = 0.5 * (out[a] + out[b]);
            out.push(v);
        }
        out
    }

    pub fn apply_vector(&self, field: &[[f64; 2]]) -> Vec<[f64; 2]> {
        assert_eq!(field.len(), self.old_count);
        let mut out = field.to_vec();
        for &[a, b] in &self.parents {
            let v = midpoint(out[a], out[b]);
            out.push(v);
        }
        out
    }
}

/// Smallest set of triangles (largest indicators first, ties by index)
/// carrying at least `fraction` of the total indicator mass.
pub fn dorfler_mark(indicator: &[f64], fraction: f64) -> Vec<usize> {
    let total: f64 = indicator.iter().sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..indicator.len()).collect();
    order.sort_by(|&a, &b| {
        indicator[b]
            .partial_cmp(&indicator[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let target = fraction * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for t in order {
        if acc >= target * (1.0 - 1e-12) || !(indicator[t] > 0.0) {
            break;
        }
        acc += indicator[t];
        marked.push(t);
    }
    marked
}

/// Newest-vertex bisection of the marked triangles plus the closure needed
/// to keep the mesh conforming.
pub fn bisect_marked(mesh: &TriMesh, marked: &[usize]) -> (TriMesh, VertexTransfer) {
    if marked.is_empty() {
        return (mesh.clone(), VertexTransfer::identity(mesh.num_vertices()));
    }
    let refinement_edge = |tri: &[usize; 3]| edge_key(tri[1], tri[2]);
    let mut marked_edges: BTreeSet<(usize, usize)> =
        marked.iter().map(|&t| refinement_edge(&mesh.triangles[t])).collect();
    // Closure: a triangle with any marked edge must also split its
    // refinement edge.
    loop {
        let mut changed = false;
        for tri in &mesh.triangles {
            let re = refinement_edge(tri);
            if marked_edges.contains(&re) {
                continue;
            }
            let has_marked = (0..3).any(|k| marked_edges.contains(&edge_key(tri[k], tri[(k + 1) % 3])));
            if has_marked {
                marked_edges.insert(re);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut transfer = VertexTransfer::identity(mesh.num_vertices());
    let mut mids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut midpoint_of = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = edge_key(a, b);
        *mids.entry(key).or_insert_with(|| {
            vertices.push(midpoint(vertices[key.0], vertices[key.1]));
            transfer.parents.push([key.0, key.1]);
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(mesh.num_triangles() * 2);
    let mut stack = Vec::new();
    for &tri in &mesh.triangles {
        stack.push(tri);
        while let Some(t) = stack.pop() {
            let re = refinement_edge(&t);
            if marked_edges.contains(&re) {
                let [v0, v1, v2] = t;
                let m = midpoint_of(v1, v2, &mut vertices);
                // Push in reverse so the first child is emitted first.
                stack.push([m, v2, v0]);
                stack.push([m, v0, v1]);
            } else {
                triangles.push(t);
            }
        }
    }

    let mut boundary = Vec::with_capacity(mesh.boundary.len());
    for e in &mesh.boundary {
        let [a, b] = e.vertices;
        if marked_edges.contains(&edge_key(a, b)) {
            let m = mids[&edge_key(a, b)];
            boundary.push(BoundaryEdge {
                vertices: [a, m],
                tag: e.tag,
            });
            boundary.push(BoundaryEdge {
                vertices: [m, b],
                tag: e.tag,
            });
        } else {
            boundary.push(*e);
        }
    }
    let refined = TriMesh {
        vertices,
        triangles,
        boundary,
        generation: mesh.generation + 1,
    };
    (refined, transfer)
}

/// Dörfler marking followed by conforming newest-vertex bisection.
pub fn refine_by_indicator(
    mesh: &TriMesh,
    indicator: &[f64],
    fraction: f64,
) -> Result<(TriMesh, VertexTransfer), MeshError> {
    if indicator.len() != mesh.num_triangles() {
        return Err(MeshError::LengthMismatch {
            expected: mesh.num_triangles(),
            found: indicator.len(),
        });
    }
    let marked = dorfler_mark(indicator, fraction);
    Ok(bisect_marked(mesh, &marked))
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct TraceSegment {
    a: Point,
    b: Point,
    ua: [f64; 2],
    ub: [f64; 2],
}

/// Piecewise-linear vector field along (part of) the outer boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrace {
    segments: Vec<TraceSegment>,
}

/// Matching tolerance when locating a point on a trace.
pub const TRACE_TOLERANCE: f64 = 1e-10;

impl BoundaryTrace {
    /// Trace of a nodal field along the Neumann edges of `mesh`.
    pub fn from_field(mesh: &TriMesh, field: &[[f64; 2]]) -> Result<Self, MeshError> {
        if field.len() != mesh.num_vertices() {
            return Err(MeshError::LengthMismatch {
                expected: mesh.num_vertices(),
                found: field.len(),
            });
        }
        let segments = mesh
            .neumann_edges()
            .map(|e| {
                let [i, j] = e.vertices;
                TraceSegment {
                    a: mesh.vertices[i],
                    b: mesh.vertices[j],
                    ua: field[i],
                    ub: field[j],
                }
            })
            .collect();
        Ok(Self { segments })
    }

    /// Rebuilds a trace from scattered boundary samples of the square by
    /// joining consecutive samples along each side.
    pub fn from_nodes(points: &[Point], values: &[[f64; 2]]) -> Result<Self, MeshError> {
        if points.len() != values.len() {
            return Err(MeshError::LengthMismatch {
                expected: points.len(),
                found: values.len(),
            });
        }
        let mut segments = Vec::new();
        for side in Side::ALL {
            let mut on_side: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter_map(|(k, &p)| {
                    let (t, d) = side.local(p);
                    (d <= TRACE_TOLERANCE).then_some((t, k))
                })
                .collect();
            on_side.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
            for w in on_side.windows(2) {
                let (ta, ka) = w[0];
                let (tb, kb) = w[1];
                if tb - ta > TRACE_TOLERANCE {
                    segments.push(TraceSegment {
                        a: side.point(ta),
                        b: side.point(tb),
                        ua: values[ka],
                        ub: values[kb],
                    });
                }
            }
        }
        Ok(Self { segments })
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// Distinct sample points and values of the trace, in segment order.
    pub fn nodes(&self) -> (Vec<Point>, Vec<[f64; 2]>) {
        let mut pts: Vec<Point> = Vec::new();
        let mut vals = Vec::new();
        for s in &self.segments {
            for (p, u) in [(s.a, s.ua), (s.b, s.ub)] {
                if !pts.iter().any(|q| dist(*q, p) <= TRACE_TOLERANCE) {
                    pts.push(p);
                    vals.push(u);
                }
            }
        }
        (pts, vals)
    }

    pub fn eval(&self, p: Point) -> Result<[f64; 2], MeshError> {
        let mut best: Option<(f64, [f64; 2])> = None;
        for s in &self.segments {
            let (d, t) = segment_distance(p, s.a, s.b);
            if d <= TRACE_TOLERANCE && best.is_none_or(|(bd, _)| d < bd) {
                let t = t.clamp(0.0, 1.0);
                let u = [
                    (1.0 - t) * s.ua[0] + t * s.ub[0],
                    (1.0 - t) * s.ua[1] + t * s.ub[1],
                ];
                best = Some((d, u));
            }
        }
        best.map(|(_, u)| u)
            .ok_or(MeshError::BoundaryMismatch { x: p[0], y: p[1] })
    }

    /// Values at the Σ_N nodes of `target`; other vertices get zero.
    pub fn sample_on(&self, target: &TriMesh) -> Result<Vec<[f64; 2]>, MeshError> {
        let mask = target.neumann_vertices();
        target
            .vertices()
            .iter()
            .zip(&mask)
            .map(|(&p, &on)| if on { self.eval(p) } else { Ok([0.0, 0.0]) })
            .collect()
    }
}

/// Evaluates the Neumann-boundary trace of `field` (defined on `source`) at
/// every Σ_N node of `target`, by linear interpolation along the source
/// boundary edges. Non-Σ_N vertices of `target` get zero.
pub fn interpolate_boundary_trace(
    source: &TriMesh,
    field: &[[f64; 2]],
    target: &TriMesh,
) -> Result<Vec<[f64; 2]>, MeshError> {
    BoundaryTrace::from_field(source, field)?.sample_on(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_counts() {
        let m = build_square_mesh(2, &DirichletSpec::bottom()).unwrap();
        assert_eq!(m.num_triangles(), 8);
        assert_eq!(m.num_vertices(), 9);
        let d = m.boundary_edges().iter().filter(|e| e.tag.is_dirichlet()).count();
        let n = m.boundary_edges().iter().filter(|e| e.tag.is_neumann()).count();
        assert_eq!((d, n), (2, 6));
        m.validate().unwrap();
    }

    #[test]
    fn area_is_four() {
        for n in [2, 3, 7, 16] {
            let m = build_square_mesh(n, &DirichletSpec::bottom()).unwrap();
            assert!((m.total_area() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fine_mesh_quality() {
        let m = build_square_mesh(64, &DirichletSpec::bottom()).unwrap();
        for t in 0..m.num_triangles() {
            assert!(m.area(t) > 0.0);
            assert!(m.min_angle_deg(t) > 20.0);
        }
    }

    #[test]
    fn rejects_bad_boundary_partition() {
        assert_eq!(
            build_square_mesh(4, &DirichletSpec { segments: vec![] }),
            Err(MeshError::EmptyDirichlet)
        );
        assert_eq!(
            build_square_mesh(4, &DirichletSpec::sides(&Side::ALL)),
            Err(MeshError::EmptyNeumann)
        );
        assert_eq!(
            build_square_mesh(1, &DirichletSpec::bottom()),
            Err(MeshError::InvalidResolution(1))
        );
    }

    #[test]
    fn partial_dirichlet_segment() {
        let spec = DirichletSpec {
            segments: vec![BoundarySegment {
                side: Side::Bottom,
                from: -0.5,
                to: 0.5,
            }],
        };
        let m = build_square_mesh(4, &spec).unwrap();
        let d = m.boundary_edges().iter().filter(|e| e.tag.is_dirichlet()).count();
        assert_eq!(d, 2);
    }

    #[test]
    fn carve_disk_area() {
        let m = build_square_mesh(64, &DirichletSpec::bottom()).unwrap();
        let shape = CavityShape::Disk {
            center: [0.0, 0.0],
            radius: 0.3,
        };
        let c = carve_cavity(&m, &shape, 0.1).unwrap();
        c.validate().unwrap();
        let removed = 4.0 - c.total_area();
        let exact = core::f64::consts::PI * 0.09;
        assert!((removed - exact).abs() < 0.1 * exact);
        assert_eq!(c.cavity_wall_loops().len(), 1);
    }

    #[test]
    fn carve_two_disks_gives_two_loops() {
        let m = build_square_mesh(48, &DirichletSpec::bottom()).unwrap();
        let shape = CavityShape::Union(vec![
            CavityShape::Disk {
                center: [-0.4, 0.1],
                radius: 0.2,
            },
            CavityShape::Disk {
                center: [0.4, 0.2],
                radius: 0.25,
            },
        ]);
        let c = carve_cavity(&m, &shape, 0.1).unwrap();
        c.validate().unwrap();
        assert_eq!(c.cavity_wall_loops().len(), 2);
    }

    #[test]
    fn carve_rejects_bad_shapes() {
        let m = build_square_mesh(16, &DirichletSpec::bottom()).unwrap();
        let near_edge = CavityShape::Disk {
            center: [0.85, 0.0],
            radius: 0.1,
        };
        assert!(matches!(
            carve_cavity(&m, &near_edge, 0.1),
            Err(MeshError::ShapeOutsideDomain { .. })
        ));
        let tiny = CavityShape::Disk {
            center: [0.01, 0.013],
            radius: 1e-4,
        };
        assert_eq!(carve_cavity(&m, &tiny, 0.1), Err(MeshError::NothingRemoved));
    }

    #[test]
    fn zero_indicator_leaves_mesh() {
        let m = build_square_mesh(4, &DirichletSpec::bottom()).unwrap();
        let (r, t) = refine_by_indicator(&m, &vec![0.0; m.num_triangles()], 0.5).unwrap();
        assert_eq!(r.triangles(), m.triangles());
        assert!(t.is_identity());
    }

    #[test]
    fn uniform_full_marking_bisects_everything() {
        let m = build_square_mesh(4, &DirichletSpec::bottom()).unwrap();
        let (r, _) = refine_by_indicator(&m, &vec![1.0; m.num_triangles()], 1.0).unwrap();
        assert_eq!(r.num_triangles(), 2 * m.num_triangles());
        r.validate().unwrap();
        assert!((r.total_area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_marked_triangle_refines_locally() {
        let m = build_square_mesh(8, &DirichletSpec::bottom()).unwrap();
        let mut ind = vec![0.0; m.num_triangles()];
        let hot = 2 * (8 * 4 + 4);
        ind[hot] = 1.0;
        let (r, t) = refine_by_indicator(&m, &ind, 0.5).unwrap();
        r.validate().unwrap();
        // The hot triangle and its hypotenuse partner split; no cascade is
        // needed on the union-jack pattern.
        assert_eq!(r.num_triangles(), m.num_triangles() + 2);
        assert_eq!(t.parents.len(), 1);
        // A second round on a child forces a closure cascade.
        let mut ind2 = vec![0.0; r.num_triangles()];
        let child = r.num_triangles() - 1;
        ind2[child] = 1.0;
        let (r2, _) = refine_by_indicator(&r, &ind2, 1.0).unwrap();
        r2.validate().unwrap();
        assert!(r2.num_triangles() > r.num_triangles() + 1);
        assert!(r2.max_diameter() <= r.max_diameter() + 1e-15);
    }

    #[test]
    fn transfer_reproduces_linear_fields() {
        let m = build_square_mesh(6, &DirichletSpec::bottom()).unwrap();
        let ind: Vec<f64> = (0..m.num_triangles()).map(|t| (t % 7) as f64).collect();
        let (r, tr) = refine_by_indicator(&m, &ind, 0.6).unwrap();
        let f = |p: Point| 0.3 + 1.7 * p[0] - 0.4 * p[1];
        let old: Vec<f64> = m.vertices().iter().map(|&p| f(p)).collect();
        let new = tr.apply_scalar(&old);
        for (p, v) in r.vertices().iter().zip(&new) {
            assert!((f(*p) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_identical_mesh_copies_values() {
        let m = build_square_mesh(5, &DirichletSpec::bottom()).unwrap();
        let field: Vec<[f64; 2]> = m.vertices().iter().map(|p| [p[0] * p[1], p[0] - 2.0]).collect();
        let out = interpolate_boundary_trace(&m, &field, &m).unwrap();
        let mask = m.neumann_vertices();
        for i in 0..m.num_vertices() {
            if mask[i] {
                assert_eq!(out[i], field[i]);
            }
        }
    }

    #[test]
    fn trace_from_nodes_matches_mesh_trace() {
        let src = build_square_mesh(12, &DirichletSpec::bottom()).unwrap();
        let dst = build_square_mesh(5, &DirichletSpec::bottom()).unwrap();
        let field: Vec<[f64; 2]> = src.vertices().iter().map(|p| [p[0] + 2.0 * p[1], -p[1]]).collect();
        let tr = BoundaryTrace::from_field(&src, &field).unwrap();
        let (pts, vals) = tr.nodes();
        let rebuilt = BoundaryTrace::from_nodes(&pts, &vals).unwrap();
        let a = tr.sample_on(&dst).unwrap();
        let b = rebuilt.sample_on(&dst).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_mismatch_is_reported() {
        let src = build_square_mesh(4, &DirichletSpec::sides(&[Side::Bottom, Side::Top])).unwrap();
        let dst = build_square_mesh(4, &DirichletSpec::bottom()).unwrap();
        let field = vec![[1.0, 1.0]; src.num_vertices()];
        // Top-side Σ_N nodes of `dst` (away from the corners) are not on the
        // Neumann part of `src`.
        assert!(matches!(
            interpolate_boundary_trace(&src, &field, &dst),
            Err(MeshError::BoundaryMismatch { .. })
        ));
    }

    #[test]
    fn polygon_geometry() {
        let l = CavityShape::Polygon(vec![
            [-0.4, -0.4],
            [0.4, -0.4],
            [0.4, 0.0],
            [0.0, 0.0],
            [0.0, 0.4],
            [-0.4, 0.4],
        ]);
        assert!((l.area() - 0.48).abs() < 1e-14);
        assert!(l.contains([-0.2, 0.2]));
        assert!(!l.contains([0.2, 0.2]));
        assert!(l.inside_square(0.1));
    }
}
