//! Triangle meshes and their discrete differential geometry.
//!
//! The per-vertex shape operator averages edge operators
//! `β(e)·|e ∩ B|·ē ēᵀ` over the barycentric dual cell `B` of the vertex,
//! where `β` is the signed dihedral angle (positive on convex hinges). The
//! eigenvector with the smallest eigenvalue magnitude is the normal. The other
//! two eigenvalues are the principal curvatures with their directions swapped,
//! because an edge operator bends across the edge, not along it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{orthogonal_complement, sym_eigen3};

#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    /// Counter-clockwise vertex triples.
    pub faces: Vec<[usize; 3]>,
    /// Per-vertex normals read from the file, if any.
    pub normals: Option<Vec<Vector3<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Incident faces with the vertex opposite to the edge in each.
    pub faces: Vec<(usize, usize)>,
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        self.faces.len() == 2
    }
}

/// Edge list and vertex-to-edge incidence.
#[derive(Clone, Debug)]
pub struct Adjacency {
    pub edges: Vec<Edge>,
    pub vertex_edges: Vec<Vec<usize>>,
    pub vertex_faces: Vec<Vec<usize>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriMesh {
            vertices,
            faces,
            normals: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("face {fi} references a missing vertex")));
            }
            if self.face_area(fi) <= 0.0 {
                return Err(Error::Mesh(format!("face {fi} is degenerate")));
            }
        }
        if let Some(nrm) = &self.normals {
            if nrm.len() != n {
                return Err(Error::Mesh("normal count does not match vertex count".into()));
            }
        }
        if self.vertices.iter().any(|v| !v.coords.iter().all(|x| x.is_finite())) {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }
        Ok(())
    }

    /// `(b − a) × (c − a)`, twice the area times the unit normal.
    pub fn face_cross(&self, fi: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[fi];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, fi: usize) -> f64 {
        0.5 * self.face_cross(fi).norm()
    }

    pub fn face_normal(&self, fi: usize) -> Vector3<f64> {
        self.face_cross(fi).normalize()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn adjacency(&self) -> Adjacency {
        let mut half: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * self.faces.len());
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b, c) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                half.push((a.min(b), a.max(b), fi, c));
            }
        }
        half.sort_unstable();
        let mut edges: Vec<Edge> = Vec::new();
        for (a, b, fi, c) in half {
            match edges.last_mut() {
                Some(e) if e.a == a && e.b == b => e.faces.push((fi, c)),
                _ => edges.push(Edge {
                    a,
                    b,
                    faces: vec![(fi, c)],
                }),
            }
        }
        let mut vertex_edges = vec![Vec::new(); self.vertices.len()];
        for (ei, e) in edges.iter().enumerate() {
            vertex_edges[e.a].push(ei);
            vertex_edges[e.b].push(ei);
        }
        let mut vertex_faces = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }
        Adjacency {
            edges,
            vertex_edges,
            vertex_faces,
        }
    }

    /// Same mesh with every face orientation reversed.
    pub fn flipped(&self) -> Self {
        TriMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            normals: self.normals.as_ref().map(|n| n.iter().map(|v| -v).collect()),
        }
    }

    pub fn transformed(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            normals: None,
        }
    }

    /// Translates the vertex centroid to the origin and scales uniformly so
    /// that every coordinate lies in `[−half_extent, half_extent]`.
    pub fn normalized(&self, half_extent: f64) -> (Self, Normalization) {
        let n = self.vertices.len().max(1) as f64;
        let center = self.vertices.iter().fold(Vector3::zeros(), |s, v| s + v.coords) / n;
        let reach = self
            .vertices
            .iter()
            .flat_map(|v| (v.coords - center).iter().map(|x| x.abs()).collect::<Vec<_>>())
            .fold(0.0f64, f64::max);
        let scale = if reach > 0.0 { half_extent / reach } else { 1.0 };
        let mut out = self.transformed(|p| Point3::from((p.coords - center) * scale));
        out.normals = self.normals.clone();
        (out, Normalization { center, scale })
    }
}

/// `p_normalized = (p − center)·scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p.coords - self.center) * self.scale)
    }

    pub fn invert(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords / self.scale + self.center)
    }
}

// --- OBJ ---------------------------------------------------------------------

fn parse_index(tok: &str, count: usize, line: usize) -> Result<Option<usize>> {
    if tok.is_empty() {
        return Ok(None);
    }
    let bad = |message: String| Error::ObjParse { line, message };
    let i: i64 = tok
        .parse()
        .map_err(|_| bad(format!("invalid index {tok:?}")))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        return Err(bad("index 0 is not valid".into()));
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(bad(format!("index {i} out of range")));
    }
    Ok(Some(resolved as usize))
}

fn parse_floats(rest: &[&str], line: usize) -> Result<[f64; 3]> {
    if rest.len() < 3 {
        return Err(Error::ObjParse {
            line,
            message: "expected three coordinates".into(),
        });
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = rest[k].parse().map_err(|_| Error::ObjParse {
            line,
            message: format!("invalid number {:?}", rest[k]),
        })?;
    }
    Ok(out)
}

/// Parses `v`, `vn` and `f` records. Polygons are fan-triangulated around
/// their first vertex; other record types are ignored.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut file_normals: Vec<Vector3<f64>> = Vec::new();
    let mut faces = Vec::new();
    let mut vertex_normals: Vec<Option<usize>> = Vec::new();
    let mut any_normal = false;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some((&kind, rest)) = toks.split_first() else {
            continue;
        };
        match kind {
            "v" => {
                let c = parse_floats(rest, line)?;
                vertices.push(Point3::from(c));
                vertex_normals.push(None);
            }
            "vn" => {
                let c = parse_floats(rest, line)?;
                file_normals.push(Vector3::from(c));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(Error::ObjParse {
                        line,
                        message: "face needs at least three vertices".into(),
                    });
                }
                let mut idx = Vec::with_capacity(rest.len());
                for tok in rest {
                    let mut parts = tok.split('/');
                    let v = parse_index(parts.next().unwrap_or(""), vertices.len(), line)?
                        .ok_or_else(|| Error::ObjParse {
                            line,
                            message: format!("missing vertex index in {tok:?}"),
                        })?;
                    let _texture = parts.next();
                    if let Some(nt) = parts.next() {
                        if let Some(n) = parse_index(nt, file_normals.len(), line)? {
                            vertex_normals[v] = Some(n);
                            any_normal = true;
                        }
                    }
                    idx.push(v);
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let normals = any_normal.then(|| {
        vertex_normals
            .iter()
            .map(|n| n.map(|i| file_normals[i].normalize()).unwrap_or_else(Vector3::zeros))
            .collect()
    });
    let mesh = TriMesh {
        vertices,
        faces,
        normals,
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn to_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_obj(mesh)).map_err(|e| Error::io(path, e))
}

// --- generators ----------------------------------------------------------------

/// Subdivided icosahedron with vertices on the sphere of `radius`.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Vector3::from(*c).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint = std::collections::BTreeMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriMesh {
        vertices: verts.into_iter().map(|v| Point3::from(v * radius)).collect(),
        faces,
        normals: None,
    }
}

/// Open cylinder around the z axis, `height` centered on the origin.
pub fn cylinder(radius: f64, height: f64, around: usize, along: usize) -> TriMesh {
    let mut vertices = Vec::new();
    for j in 0..=along {
        let z = -0.5 * height + height * j as f64 / along as f64;
        for i in 0..around {
            let t = std::f64::consts::TAU * i as f64 / around as f64;
            vertices.push(Point3::new(radius * t.cos(), radius * t.sin(), z));
        }
    }
    let mut faces = Vec::new();
    for j in 0..along {
        for i in 0..around {
            let a = j * around + i;
            let b = j * around + (i + 1) % around;
            let c = a + around;
            let d = b + around;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriMesh {
        vertices,
        faces,
        normals: None,
    }
}

/// Flat `n × n` grid of squares in the plane `z = 0`, normal `+z`.
pub fn grid(n: usize, spacing: f64) -> TriMesh {
    let mut vertices = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
        }
    }
    let mut faces = Vec::new();
    let w = n + 1;
    for j in 0..n {
        for i in 0..n {
            let a = j * w + i;
            faces.push([a, a + 1, a + w + 1]);
            faces.push([a, a + w + 1, a + w]);
        }
    }
    TriMesh {
        vertices,
        faces,
        normals: None,
    }
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, around: usize, tube: usize) -> TriMesh {
    let mut vertices = Vec::new();
    for i in 0..around {
        let u = std::f64::consts::TAU * i as f64 / around as f64;
        for j in 0..tube {
            let v = std::f64::consts::TAU * j as f64 / tube as f64;
            let ring = major + minor * v.cos();
            vertices.push(Point3::new(ring * u.cos(), ring * u.sin(), minor * v.sin()));
        }
    }
    let mut faces = Vec::new();
    for i in 0..around {
        for j in 0..tube {
            let a = i * tube + j;
            let b = ((i + 1) % around) * tube + j;
            let c = i * tube + (j + 1) % tube;
            let d = ((i + 1) % around) * tube + (j + 1) % tube;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriMesh {
        vertices,
        faces,
        normals: None,
    }
}

/// Icosphere with a smooth radial displacement, giving a closed surface with
/// a wide spread of curvature: mostly gentle regions plus a few sharp bumps.
pub fn bumpy_sphere(subdivisions: usize, radius: f64) -> TriMesh {
    let base = icosphere(subdivisions, 1.0);
    let bumps = [
        (Vector3::new(1.0, 0.3, 0.2).normalize(), 0.25, 0.12),
        (Vector3::new(-0.4, 1.0, 0.5).normalize(), 0.2, 0.08),
        (Vector3::new(0.1, -0.6, 1.0).normalize(), 0.3, 0.15),
        (Vector3::new(-0.8, -0.7, -0.6).normalize(), 0.15, 0.06),
    ];
    base.transformed(|p| {
        let d = p.coords.normalize();
        let mut r = 1.0 + 0.05 * (3.0 * d.x).sin() * (2.0 * d.y).cos();
        for (c, h, w) in &bumps {
            let ang = d.dot(c).clamp(-1.0, 1.0).acos();
            r += h * (-(ang * ang) / (2.0 * w * w)).exp();
        }
        Point3::from(d * r * radius)
    })
}

// --- vertex geometry ---------------------------------------------------------------

/// Area-weighted vertex normals. Isolated vertices get `None`.
pub fn vertex_normals(mesh: &TriMesh) -> Vec<Option<Vector3<f64>>> {
    let mut acc = vec![Vector3::zeros(); mesh.vertices.len()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let c = mesh.face_cross(fi);
        for &v in f {
            acc[v] += c;
        }
    }
    acc.into_iter()
        .map(|n| {
            let l = n.norm();
            (l > 0.0).then(|| n / l)
        })
        .collect()
}

/// Signed dihedral angle of an interior edge; positive on convex hinges.
pub fn dihedral_angle(mesh: &TriMesh, edge: &Edge) -> f64 {
    let (f1, _) = edge.faces[0];
    let (f2, opp2) = edge.faces[1];
    let n1 = mesh.face_normal(f1);
    let n2 = mesh.face_normal(f2);
    let angle = n1.cross(&n2).norm().atan2(n1.dot(&n2));
    let below = (mesh.vertices[opp2] - mesh.vertices[edge.a]).dot(&n1);
    if below <= 0.0 {
        angle
    } else {
        -angle
    }
}

/// One third of the incident face areas.
pub fn barycentric_areas(mesh: &TriMesh) -> Vec<f64> {
    let mut out = vec![0.0; mesh.vertices.len()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let a = mesh.face_area(fi) / 3.0;
        for &v in f {
            out[v] += a;
        }
    }
    out
}

/// Per-vertex flags raised while computing discrete geometry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VertexFlags {
    pub isolated: bool,
    /// Touches a boundary edge.
    pub boundary: bool,
    /// Touches an edge with more than two faces.
    pub non_manifold: bool,
    /// Operator vanishes; directions are arbitrary.
    pub flat: bool,
    /// Principal curvatures coincide; directions are arbitrary.
    pub umbilic: bool,
}

/// Shape operators of every vertex.
pub fn discrete_shape_operators(mesh: &TriMesh, adj: &Adjacency) -> Vec<Matrix3<f64>> {
    let areas = barycentric_areas(mesh);
    let edge_ops: Vec<Matrix3<f64>> = adj
        .edges
        .iter()
        .map(|e| {
            if !e.is_interior() {
                return Matrix3::zeros();
            }
            let d = mesh.vertices[e.b] - mesh.vertices[e.a];
            let len = d.norm();
            let u = d / len;
            dihedral_angle(mesh, e) * 0.5 * len * (u * u.transpose())
        })
        .collect();
    (0..mesh.vertices.len())
        .map(|v| {
            if areas[v] == 0.0 {
                return Matrix3::zeros();
            }
            let sum = adj.vertex_edges[v]
                .iter()
                .fold(Matrix3::zeros(), |s, &e| s + edge_ops[e]);
            sum / areas[v]
        })
        .collect()
}

pub fn discrete_shape_operator(mesh: &TriMesh, vertex: usize) -> Matrix3<f64> {
    discrete_shape_operators(mesh, &mesh.adjacency())[vertex]
}

#[derive(Clone, Debug, PartialEq)]
pub struct VertexGeometry {
    pub normal: Vector3<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    /// `|κ1| + |κ2|`.
    pub feature: f64,
    pub dual_area: f64,
    pub gaussian: f64,
    pub mean: f64,
    pub flags: VertexFlags,
}

/// Eigenvalues within this fraction of the spectral radius of the smallest
/// one compete for the normal; alignment with the face normals decides.
const NORMAL_TIE: f64 = 0.05;

pub fn vertex_geometry(mesh: &TriMesh) -> Vec<VertexGeometry> {
    let adj = mesh.adjacency();
    let ops = discrete_shape_operators(mesh, &adj);
    let areas = barycentric_areas(mesh);
    let normals = vertex_normals(mesh);
    let scale = mean_edge_length(mesh, &adj);
    let mut flags = vec![VertexFlags::default(); mesh.vertices.len()];
    for e in &adj.edges {
        let (boundary, nm) = (e.faces.len() == 1, e.faces.len() > 2);
        for v in [e.a, e.b] {
            flags[v].boundary |= boundary;
            flags[v].non_manifold |= nm;
        }
    }
    (0..mesh.vertices.len())
        .map(|v| {
            let mut fl = flags[v];
            let Some(area_normal) = normals[v] else {
                fl.isolated = true;
                fl.flat = true;
                return VertexGeometry {
                    normal: Vector3::zeros(),
                    kappa1: 0.0,
                    kappa2: 0.0,
                    e1: Vector3::zeros(),
                    e2: Vector3::zeros(),
                    feature: 0.0,
                    dual_area: 0.0,
                    gaussian: 0.0,
                    mean: 0.0,
                    flags: fl,
                };
            };
            let eig = sym_eigen3(&ops[v]);
            let radius = eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if radius * scale < 1e-12 {
                fl.flat = true;
                let (e1, e2) = orthogonal_complement(&area_normal);
                return VertexGeometry {
                    normal: area_normal,
                    kappa1: 0.0,
                    kappa2: 0.0,
                    e1,
                    e2,
                    feature: 0.0,
                    dual_area: areas[v],
                    gaussian: 0.0,
                    mean: 0.0,
                    flags: fl,
                };
            }
            let min_abs = eig.values.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
            // The normal spans the eigenspace of the smallest |λ|. With a tie
            // (e.g. on a cylinder) that space is degenerate and the face
            // normals pick the direction inside it.
            let tied: Vec<usize> = (0..3)
                .filter(|&i| eig.values[i].abs() <= min_abs + NORMAL_TIE * radius)
                .collect();
            let mut normal = if tied.len() == 1 {
                eig.vectors[tied[0]]
            } else {
                let proj = tied
                    .iter()
                    .fold(Vector3::zeros(), |s, &i| s + eig.vectors[i].dot(&area_normal) * eig.vectors[i]);
                if proj.norm() > 1e-12 {
                    proj.normalize()
                } else {
                    area_normal
                }
            };
            if normal.dot(&area_normal) < 0.0 {
                normal = -normal;
            }
            // principal pair from the tangential 2x2 block
            let (t1, t2) = orthogonal_complement(&normal);
            let op = &ops[v];
            let (a, b, c) = (t1.dot(&(op * t1)), t1.dot(&(op * t2)), t2.dot(&(op * t2)));
            let (m, d) = (0.5 * (a + c), 0.5 * (a - c));
            let r = (d * d + b * b).sqrt();
            let (kappa1, kappa2) = (m + r, m - r);
            let phi = 0.5 * b.atan2(d);
            // directions are permuted: κ1 bends along the eigenvector of κ2
            let e1 = (-phi.sin() * t1 + phi.cos() * t2).normalize();
            let e2 = normal.cross(&e1);
            fl.umbilic = crate::implicit_geom::is_umbilic(kappa1 * scale, kappa2 * scale);
            VertexGeometry {
                normal,
                kappa1,
                kappa2,
                e1,
                e2,
                feature: kappa1.abs() + kappa2.abs(),
                dual_area: areas[v],
                gaussian: kappa1 * kappa2,
                mean: 0.5 * (kappa1 + kappa2),
                flags: fl,
            }
        })
        .collect()
}

fn mean_edge_length(mesh: &TriMesh, adj: &Adjacency) -> f64 {
    if adj.edges.is_empty() {
        return 1.0;
    }
    adj.edges
        .iter()
        .map(|e| (mesh.vertices[e.b] - mesh.vertices[e.a]).norm())
        .sum::<f64>()
        / adj.edges.len() as f64
}

fn cot(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    u.dot(v) / u.cross(v).norm()
}

/// Cotangent-Laplacian mean curvature with mixed Voronoi areas. The sign
/// is positive where the curvature normal agrees with the vertex normal.
pub fn meyer_mean_curvature(mesh: &TriMesh) -> Vec<f64> {
    let n = mesh.vertices.len();
    let mut lap = vec![Vector3::zeros(); n];
    let mut area = vec![0.0; n];
    let x = &mesh.vertices;
    for (fi, f) in mesh.faces.iter().enumerate() {
        let t_area = mesh.face_area(fi);
        let mut cots = [0.0; 3];
        let mut obtuse = None;
        for k in 0..3 {
            let (p, q, r) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let (u, v) = (x[q] - x[p], x[r] - x[p]);
            cots[k] = cot(&u, &v);
            if u.dot(&v) < 0.0 {
                obtuse = Some(k);
            }
        }
        for k in 0..3 {
            // angle at f[k] is opposite the edge (f[k+1], f[k+2])
            let (q, r) = (f[(k + 1) % 3], f[(k + 2) % 3]);
            let d = x[q] - x[r];
            lap[q] += cots[k] * d;
            lap[r] -= cots[k] * d;
        }
        for k in 0..3 {
            let p = f[k];
            area[p] += match obtuse {
                None => {
                    let (q, r) = (f[(k + 1) % 3], f[(k + 2) % 3]);
                    let (kq, kr) = ((k + 1) % 3, (k + 2) % 3);
                    ((x[r] - x[p]).norm_squared() * cots[kq] + (x[q] - x[p]).norm_squared() * cots[kr])
                        / 8.0
                }
                Some(o) if o == k => t_area / 2.0,
                Some(_) => t_area / 4.0,
            };
        }
    }
    let normals = vertex_normals(mesh);
    (0..n)
        .map(|i| {
            let Some(nrm) = normals[i] else { return 0.0 };
            if area[i] == 0.0 {
                return 0.0;
            }
            let k = lap[i] / (2.0 * area[i]);
            let h = 0.5 * k.norm();
            if k.dot(&nrm) < 0.0 {
                -h
            } else {
                h
            }
        })
        .collect()
}

/// `index,nx,ny,nz,kappa1,kappa2,e1x,e1y,e1z,e2x,e2y,e2z,feature,mean`.
pub fn geometry_csv(geometry: &[VertexGeometry]) -> String {
    let mut s = String::from("index,nx,ny,nz,kappa1,kappa2,e1x,e1y,e1z,e2x,e2y,e2z,feature,mean\n");
    for (i, g) in geometry.iter().enumerate() {
        writeln!(
            s,
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            g.normal.x,
            g.normal.y,
            g.normal.z,
            g.kappa1,
            g.kappa2,
            g.e1.x,
            g.e1.y,
            g.e1.z,
            g.e2.x,
            g.e2.y,
            g.e2.z,
            g.feature,
            g.mean
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn obj_quad_and_formats() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n";
        let m = parse_obj(quad).unwrap();
        assert_eq!((m.vertices.len(), m.faces.len()), (4, 2));
        let fan = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert_eq!(parse_obj(fan).unwrap().faces, vec![[0, 1, 2], [0, 2, 3]]);
        let with_normals = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvn 0 0 1\nvn 0 0 2\nf 1//1 2//2 3//3\n";
        let m = parse_obj(with_normals).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert_eq!(m.normals.unwrap()[2], Vector3::z());
        let negative = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1 -2/2 -1/3\n";
        assert_eq!(parse_obj(negative).unwrap().faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let bad = "v 0 0 0\nv 1 0 0\nv 0 x 0\n";
        assert!(matches!(parse_obj(bad), Err(Error::ObjParse { line: 3, .. })));
        let out_of_range = "v 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 9\n";
        assert!(matches!(parse_obj(out_of_range), Err(Error::ObjParse { line: 5, .. })));
        let degenerate = "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n";
        assert!(matches!(parse_obj(degenerate), Err(Error::Mesh(_))));
    }

    #[test]
    fn obj_round_trip() {
        let m = icosphere(1, 1.0);
        let back = parse_obj(&to_obj(&m)).unwrap();
        assert_eq!(back.faces, m.faces);
        assert_eq!(back.vertices, m.vertices);
    }

    #[test]
    fn flat_grid() {
        let m = grid(6, 0.1);
        for n in vertex_normals(&m) {
            assert!((n.unwrap() - Vector3::z()).norm() < 1e-12);
        }
        let geo = vertex_geometry(&m);
        let interior = 3 * 7 + 3;
        assert_eq!(discrete_shape_operator(&m, interior), Matrix3::zeros());
        assert_eq!((geo[interior].kappa1, geo[interior].kappa2), (0.0, 0.0));
        assert!(geo[interior].flags.flat);
        assert!((geo[interior].normal - Vector3::z()).norm() < 1e-12);
        assert!(geo[0].flags.boundary);
        for (h, g) in meyer_mean_curvature(&m).iter().zip(&geo) {
            if !g.flags.boundary {
                assert!(h.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_triangle_normals() {
        let m = TriMesh::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        for n in vertex_normals(&m) {
            assert_eq!(n.unwrap(), Vector3::z());
        }
    }

    #[test]
    fn roof_by_hand() {
        // hinge along the y axis from (0,0,0) to (0,L,0), wings falling off at slope s
        let (l, s) = (2.0, 0.5);
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, l, 0.0),
            Point3::new(1.0, 0.0, -s),
            Point3::new(-1.0, 0.0, -s),
        ];
        let m = TriMesh::new(v, vec![[0, 2, 1], [0, 1, 3]]).unwrap();
        // both face normals lean away from the hinge: convex, β = 2·atan(s)
        let beta = 2.0 * s.atan();
        let wing = 0.5 * l * (1.0 + s * s).sqrt();
        let area = 2.0 * wing / 3.0;
        let mut expected = Matrix3::zeros();
        expected[(1, 1)] = beta * (l / 2.0) / area;
        for vtx in [0, 1] {
            let op = discrete_shape_operator(&m, vtx);
            assert!((op - expected).norm() < 1e-12, "{op}");
        }
        // reversing orientation flips the dihedral sign
        let op = discrete_shape_operator(&m.flipped(), 0);
        assert!((op + expected).norm() < 1e-12);
    }

    fn sphere_errors(subdiv: usize) -> (f64, f64) {
        let r = 1.0;
        let m = icosphere(subdiv, r);
        let geo = vertex_geometry(&m);
        let errs: Vec<f64> = geo
            .iter()
            .flat_map(|g| [(g.kappa1 - 1.0 / r).abs() * r, (g.kappa2 - 1.0 / r).abs() * r])
            .collect();
        let angle = geo
            .iter()
            .zip(&m.vertices)
            .map(|(g, p)| g.normal.dot(&p.coords.normalize()).clamp(-1.0, 1.0).acos())
            .fold(0.0f64, f64::max);
        (median(errs), angle.to_degrees())
    }

    #[test]
    fn icosphere_curvature_converges() {
        let e2 = sphere_errors(2);
        let e3 = sphere_errors(3);
        let e4 = sphere_errors(4);
        assert!(e3.0 <= e2.0 && e4.0 <= e3.0, "{e2:?} {e3:?} {e4:?}");
        assert!(e4.0 < 0.05, "{e4:?}");
        assert!(e4.1 < 3.0);
    }

    #[test]
    fn icosphere_mean_eigenvalues() {
        let r = 2.0;
        let m = icosphere(4, r);
        let geo = vertex_geometry(&m);
        let mean = geo.iter().map(|g| g.kappa1 + g.kappa2).sum::<f64>() / (2.0 * geo.len() as f64);
        assert!((mean * r - 1.0).abs() < 0.05);
        for (n, p) in vertex_normals(&icosphere(2, 1.0)).iter().zip(&icosphere(2, 1.0).vertices) {
            assert!(n.unwrap().dot(&p.coords.normalize()).acos().to_degrees() < 5.0);
        }
    }

    #[test]
    fn cylinder_directions() {
        let r = 0.5;
        let m = cylinder(r, 2.0, 64, 40);
        let geo = vertex_geometry(&m);
        let mut checked = 0;
        for (g, p) in geo.iter().zip(&m.vertices) {
            if g.flags.boundary {
                continue;
            }
            let circ = Vector3::new(-p.y, p.x, 0.0).normalize();
            assert!((g.kappa1 - 1.0 / r).abs() < 0.05 / r, "{}", g.kappa1);
            assert!(g.kappa2.abs() < 0.05 / r, "{}", g.kappa2);
            assert!(g.e1.dot(&circ).abs() > 10f64.to_radians().cos());
            checked += 1;
        }
        assert!(checked > 1000);
    }

    #[test]
    fn meyer_on_icosphere() {
        let r = 1.5;
        let m = icosphere(4, r);
        let h = meyer_mean_curvature(&m);
        let rel: Vec<f64> = h.iter().map(|h| (h - 1.0 / r).abs() * r).collect();
        assert!(median(rel) < 0.1);
        let flipped = meyer_mean_curvature(&m.flipped());
        for (a, b) in h.iter().zip(&flipped) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_and_rotation_invariance() {
        let m = bumpy_sphere(2, 1.0);
        let base = vertex_geometry(&m);
        let s = 3.7;
        let scaled = vertex_geometry(&m.transformed(|p| Point3::from(p.coords * s)));
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let rotated_mesh = m.transformed(|p| rot * p);
        let rotated = vertex_geometry(&rotated_mesh);
        let adj = m.adjacency();
        let ops = discrete_shape_operators(&m, &adj);
        let rops = discrete_shape_operators(&rotated_mesh, &rotated_mesh.adjacency());
        for i in 0..base.len() {
            let (a, b, c) = (&base[i], &scaled[i], &rotated[i]);
            let k = a.kappa1.abs().max(a.kappa2.abs()).max(1.0);
            assert!((b.kappa1 * s - a.kappa1).abs() < 1e-9 * k);
            assert!((b.kappa2 * s - a.kappa2).abs() < 1e-9 * k);
            assert!((c.kappa1 - a.kappa1).abs() < 1e-9 * k);
            assert!((c.kappa2 - a.kappa2).abs() < 1e-9 * k);
            let expect = rot.matrix() * ops[i] * rot.matrix().transpose();
            assert!((rops[i] - expect).norm() < 1e-9 * ops[i].norm().max(1.0));
            assert_eq!(ops[i], ops[i].transpose());
        }
    }

    #[test]
    fn geometry_frames_are_orthonormal() {
        for g in vertex_geometry(&bumpy_sphere(3, 0.8)) {
            assert!((g.normal.norm() - 1.0).abs() < 1e-9);
            assert!((g.e1.norm() - 1.0).abs() < 1e-9 && (g.e2.norm() - 1.0).abs() < 1e-9);
            assert!(g.e1.dot(&g.e2).abs() < 1e-6 && g.e1.dot(&g.normal).abs() < 1e-6);
            assert!(g.feature >= 0.0 && g.kappa1 >= g.kappa2);
        }
    }

    #[test]
    fn normalization_fits_box() {
        let m = bumpy_sphere(2, 3.0).transformed(|p| p + Vector3::new(5.0, -2.0, 1.0));
        let (n, t) = m.normalized(0.9);
        let reach = n.vertices.iter().flat_map(|v| v.coords.iter().map(|x| x.abs()).collect::<Vec<_>>()).fold(0.0, f64::max);
        assert!((reach - 0.9).abs() < 1e-12);
        assert!((t.invert(&n.vertices[7]) - m.vertices[7]).norm() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_vertex() {
        let m = icosphere(1, 1.0);
        let csv = geometry_csv(&vertex_geometry(&m));
        assert_eq!(csv.lines().count(), m.vertices.len() + 1);
    }
}
