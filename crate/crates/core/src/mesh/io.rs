//! Plain-text mesh files.
//!
//! Coordinates are written with the shortest representation that parses
//! back to the same `f64`, so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::planar::Vec2;
use super::{PlanarMesh, Region, SimplicialMesh, Vec3};
use crate::error::{Error, Result};

/// Contents of a mesh file of either dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshFile {
    Volume(SimplicialMesh),
    Planar(PlanarMesh),
}

pub fn write_mesh(mesh: &SimplicialMesh) -> String {
    let mut s = String::new();
    writeln!(s, "eitmesh 1").unwrap();
    writeln!(s, "nodes {}", mesh.node_count()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z).unwrap();
    }
    writeln!(s, "simplices {}", mesh.simplex_count()).unwrap();
    for (t, r) in mesh.simplices().iter().zip(mesh.regions()) {
        writeln!(s, "{} {} {} {} {}", t[0], t[1], t[2], t[3], r.code()).unwrap();
    }
    writeln!(s, "boundary {}", mesh.boundary_facets().len()).unwrap();
    for f in mesh.boundary_facets() {
        writeln!(s, "{} {} {}", f[0], f[1], f[2]).unwrap();
    }
    s
}

pub fn write_planar_mesh(mesh: &PlanarMesh) -> String {
    let mut s = String::new();
    writeln!(s, "eitmesh2 1").unwrap();
    writeln!(s, "nodes {}", mesh.nodes().len()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:?} {:?}", p.x, p.y).unwrap();
    }
    writeln!(s, "simplices {}", mesh.simplices().len()).unwrap();
    for (t, r) in mesh.simplices().iter().zip(mesh.regions()) {
        writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r.code()).unwrap();
    }
    writeln!(s, "boundary {}", mesh.boundary_segments().len()).unwrap();
    for f in mesh.boundary_segments() {
        writeln!(s, "{} {}", f[0], f[1]).unwrap();
    }
    s
}

pub fn save_mesh(mesh: &SimplicialMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_mesh(mesh)).map_err(|e| Error::io(path, e))
}

pub fn save_planar_mesh(mesh: &PlanarMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_planar_mesh(mesh)).map_err(|e| Error::io(path, e))
}

/// Loads a three-dimensional mesh; planar files are rejected.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<SimplicialMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match read_mesh(&text)? {
        MeshFile::Volume(m) => Ok(m),
        MeshFile::Planar(_) => Err(Error::Parse {
            line: 1,
            message: "expected a 3-D mesh, found header `eitmesh2 1`".into(),
        }),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Result<Vec<&'a str>> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.split_whitespace().collect())
            }
            None => Err(Error::Parse {
                line: self.line + 1,
                message: "unexpected end of file".into(),
            }),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn section(&mut self, name: &str) -> Result<usize> {
        let f = self.next_fields()?;
        if f.len() != 2 || f[0] != name {
            return Err(self.err(format!("expected `{name} <count>`")));
        }
        f[1].parse().map_err(|_| self.err(format!("invalid {name} count `{}`", f[1])))
    }

    fn row<T: std::str::FromStr>(&mut self, width: usize) -> Result<Vec<T>> {
        let f = self.next_fields()?;
        if f.len() != width {
            return Err(self.err(format!("expected {width} fields, found {}", f.len())));
        }
        f.iter()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("cannot parse `{t}`"))))
            .collect()
    }

    fn region(&self, code: usize) -> Result<Region> {
        u8::try_from(code)
            .ok()
            .and_then(Region::from_code)
            .ok_or_else(|| self.err(format!("unknown region code {code}")))
    }
}

/// Parses mesh text and validates the result.
pub fn read_mesh(text: &str) -> Result<MeshFile> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.next_fields()?;
    let planar = match header.as_slice() {
        ["eitmesh", "1"] => false,
        ["eitmesh2", "1"] => true,
        _ => return Err(lines.err("missing header `eitmesh 1` or `eitmesh2 1`")),
    };
    let dim = if planar { 2 } else { 3 };

    let n = lines.section("nodes")?;
    let mut coords = Vec::with_capacity(n);
    for _ in 0..n {
        let c: Vec<f64> = lines.row(dim)?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(lines.err("non-finite coordinate"));
        }
        coords.push(c);
    }
    let k = lines.section("simplices")?;
    let mut simplices = Vec::with_capacity(k);
    let mut regions = Vec::with_capacity(k);
    for _ in 0..k {
        let r: Vec<usize> = lines.row(dim + 2)?;
        regions.push(lines.region(r[dim + 1])?);
        simplices.push(r[..=dim].to_vec());
    }
    let f = lines.section("boundary")?;
    let mut facets = Vec::with_capacity(f);
    for _ in 0..f {
        facets.push(lines.row::<usize>(dim)?);
    }
    for (i, l) in lines.inner.by_ref() {
        if !l.trim().is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "trailing content after boundary section".into(),
            });
        }
    }

    if planar {
        PlanarMesh::new(
            coords.iter().map(|c| Vec2::new(c[0], c[1])).collect(),
            simplices.iter().map(|s| [s[0], s[1], s[2]]).collect(),
            regions,
            facets.iter().map(|s| [s[0], s[1]]).collect(),
        )
        .map(MeshFile::Planar)
    } else {
        SimplicialMesh::new(
            coords.iter().map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
            simplices.iter().map(|s| [s[0], s[1], s[2], s[3]]).collect(),
            regions,
            facets.iter().map(|s| [s[0], s[1], s[2]]).collect(),
        )
        .map(MeshFile::Volume)
    }
}
