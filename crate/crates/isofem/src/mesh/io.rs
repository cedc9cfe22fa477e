//! The ellmesh text format.
//!
//! ```text
//! ellmesh 1
//! kind {bulk|surface}
//! dim <d>  order <p>  ambient <m>
//! nodes <count>
//! <m floats per line>
//! elements <count>
//! <nref 1-based indices per line>
//! [boundary <count>]
//! [<node index> per line]
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Mesh, MeshKind};
use crate::error::{Error, Result};
use crate::reference::ndof;

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    read_mesh_from(BufReader::new(File::open(path)?))
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    write_mesh_to(mesh, BufWriter::new(File::create(path)?))
}

struct Lines<R> {
    reader: R,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-empty line with its number.
    fn next(&mut self) -> Result<(usize, String)> {
        let mut buf = String::new();
        loop {
            buf.clear();
            self.line += 1;
            if self.reader.read_line(&mut buf)? == 0 {
                return Err(parse(self.line, "unexpected end of file"));
            }
            let trimmed = buf.trim();
            if !trimmed.is_empty() {
                return Ok((self.line, trimmed.to_string()));
            }
        }
    }

    fn try_next(&mut self) -> Result<Option<(usize, String)>> {
        let mut buf = String::new();
        loop {
            buf.clear();
            self.line += 1;
            if self.reader.read_line(&mut buf)? == 0 {
                return Ok(None);
            }
            let trimmed = buf.trim();
            if !trimmed.is_empty() {
                return Ok(Some((self.line, trimmed.to_string())));
            }
        }
    }
}

fn parse(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_mesh_from(reader: impl BufRead) -> Result<Mesh> {
    let mut lines = Lines { reader, line: 0 };

    let (ln, header) = lines.next()?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("ellmesh") || parts.next() != Some("1") {
        return Err(parse(ln, "expected header `ellmesh 1`"));
    }

    let (ln, kind_line) = lines.next()?;
    let mut parts = kind_line.split_whitespace();
    if parts.next() != Some("kind") {
        return Err(parse(ln, "expected `kind {bulk|surface}`"));
    }
    let kind = match parts.next() {
        Some("bulk") => MeshKind::Bulk,
        Some("surface") => MeshKind::Surface,
        other => return Err(parse(ln, format!("unknown kind {other:?}"))),
    };

    let (ln, dims) = lines.next()?;
    let tokens: Vec<&str> = dims.split_whitespace().collect();
    if tokens.len() != 6 || tokens[0] != "dim" || tokens[2] != "order" || tokens[4] != "ambient" {
        return Err(parse(ln, "expected `dim <d>  order <p>  ambient <m>`"));
    }
    let d: usize = tokens[1].parse().map_err(|_| parse(ln, "bad dimension"))?;
    let p: usize = tokens[3].parse().map_err(|_| parse(ln, "bad order"))?;
    let m: usize = tokens[5].parse().map_err(|_| parse(ln, "bad ambient dimension"))?;
    let nref = ndof(d, p)?;
    let expect_m = match kind {
        MeshKind::Bulk => d,
        MeshKind::Surface => d + 1,
    };
    if m != expect_m {
        return Err(parse(ln, format!("ambient {m} inconsistent with {kind} d={d}")));
    }

    let (ln, nodes_line) = lines.next()?;
    let count = section_count(&nodes_line, "nodes").ok_or_else(|| parse(ln, "expected `nodes <count>`"))?;
    let mut nodes = Vec::with_capacity(count * m);
    for _ in 0..count {
        let (ln, row) = lines.next()?;
        let cols: Vec<&str> = row.split_whitespace().collect();
        if cols.len() != m {
            return Err(parse(ln, format!("expected {m} coordinates, found {}", cols.len())));
        }
        for c in cols {
            nodes.push(c.parse::<f64>().map_err(|_| parse(ln, format!("bad float `{c}`")))?);
        }
    }

    let (ln, elems_line) = lines.next()?;
    let count = section_count(&elems_line, "elements")
        .ok_or_else(|| parse(ln, "expected `elements <count>`"))?;
    if count == 0 {
        return Err(parse(ln, "element section is empty"));
    }
    let num_nodes = nodes.len() / m;
    let mut elements = Vec::with_capacity(count * nref);
    for _ in 0..count {
        let (ln, row) = lines.next()?;
        let cols: Vec<&str> = row.split_whitespace().collect();
        if cols.len() != nref {
            return Err(parse(ln, format!("expected {nref} indices, found {}", cols.len())));
        }
        for c in cols {
            let idx: usize =
                c.parse().map_err(|_| parse(ln, format!("bad index `{c}`")))?;
            if idx == 0 || idx > num_nodes {
                return Err(parse(ln, format!("node index {idx} out of bounds (1..={num_nodes})")));
            }
            elements.push((idx - 1) as u32);
        }
    }

    let boundary = match lines.try_next()? {
        None => None,
        Some((ln, bd_line)) => {
            let count = section_count(&bd_line, "boundary")
                .ok_or_else(|| parse(ln, "expected `boundary <count>` or end of file"))?;
            if kind != MeshKind::Bulk {
                return Err(parse(ln, "boundary section is only valid for bulk meshes"));
            }
            let mut list = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, row) = lines.next()?;
                let idx: usize =
                    row.trim().parse().map_err(|_| parse(ln, format!("bad index `{row}`")))?;
                if idx == 0 || idx > num_nodes {
                    return Err(parse(ln, format!("boundary index {idx} out of bounds")));
                }
                list.push((idx - 1) as u32);
            }
            Some(list)
        }
    };

    Mesh::new(kind, d, p, nodes, elements, boundary)
}

fn section_count(line: &str, name: &str) -> Option<usize> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(name) {
        return None;
    }
    parts.next()?.parse().ok()
}

pub fn write_mesh_to(mesh: &Mesh, mut out: impl Write) -> Result<()> {
    writeln!(out, "ellmesh 1")?;
    writeln!(out, "kind {}", mesh.kind)?;
    writeln!(out, "dim {}  order {}  ambient {}", mesh.d, mesh.p, mesh.m)?;
    writeln!(out, "nodes {}", mesh.num_nodes())?;
    for j in 0..mesh.num_nodes() {
        let coords: Vec<String> = mesh.node(j).iter().map(|c| format!("{c:.16e}")).collect();
        writeln!(out, "{}", coords.join(" "))?;
    }
    writeln!(out, "elements {}", mesh.num_elements())?;
    for e in 0..mesh.num_elements() {
        let idx: Vec<String> = mesh.element(e).iter().map(|&i| (i + 1).to_string()).collect();
        writeln!(out, "{}", idx.join(" "))?;
    }
    if let Some(b) = &mesh.boundary {
        writeln!(out, "boundary {}", b.len())?;
        for &i in b {
            writeln!(out, "{}", i + 1)?;
        }
    }
    Ok(())
}
