//! Text formats for solutions and study manifests.
//!
//! A solution file is line oriented:
//!
//! ```text
//! elastodpg-solution 1
//! method <name>
//! p <order>
//! generation <mesh generation>
//! slots <count>
//! slot <name> <space kind> <space order> <ndofs>
//! <one coefficient per line, 17 significant digits>
//! ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forms::ProblemData;
use crate::material::MaterialParams;
use crate::mesh::Mesh;
use crate::solver::{method_spaces, Method, SlotField, SolutionFields};

const SOLUTION_MAGIC: &str = "elastodpg-solution";
const SOLUTION_VERSION: u32 = 1;
const MANIFEST_MAGIC: &str = "elastodpg-manifest";
const MANIFEST_VERSION: u32 = 1;

/// Decimal text with 17 significant digits; parses back to the same bits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn solution_to_string(fields: &SolutionFields) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SOLUTION_MAGIC} {SOLUTION_VERSION}");
    let _ = writeln!(out, "method {}", fields.method.name());
    let _ = writeln!(out, "p {}", fields.p);
    let _ = writeln!(out, "generation {}", fields.generation);
    let _ = writeln!(out, "slots {}", fields.slots.len());
    for s in &fields.slots {
        let _ = writeln!(out, "slot {} {} {} {}", s.name, s.space.kind.name(), s.space.order, s.coeffs.len());
        for &c in &s.coeffs {
            out.push_str(&format_real(c));
            out.push('\n');
        }
    }
    out
}

pub fn save_solution(fields: &SolutionFields, path: &Path) -> Result<()> {
    fs::write(path, solution_to_string(fields)).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim()))
            .ok_or_else(|| Error::Format(format!("unexpected end of file, expected {what}")))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.trim())),
            _ => Err(Error::Format(format!("line {n}: expected `{key} <value>`, found `{line}`"))),
        }
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("line {line}: cannot parse `{s}`")))
}

/// Reads a solution written by [`save_solution`] and rebuilds its spaces on `mesh`.
pub fn parse_solution(text: &str, method: Method, mesh: &Mesh) -> Result<SolutionFields> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let (_, header) = lines.next("header")?;
    let version = match header.split_once(' ') {
        Some((magic, v)) if magic == SOLUTION_MAGIC => parse_num::<u32>(v, 1)?,
        _ => return Err(Error::Format(format!("not a solution file: `{header}`"))),
    };
    if version != SOLUTION_VERSION {
        return Err(Error::Mismatch(format!("solution format version {version}, expected {SOLUTION_VERSION}")));
    }
    let (_, name) = lines.keyed("method")?;
    if name != method.name() {
        return Err(Error::Mismatch(format!("file holds a {name} solution, expected {}", method.name())));
    }
    let (n, p) = lines.keyed("p")?;
    let p: usize = parse_num(p, n)?;
    let (n, generation) = lines.keyed("generation")?;
    let generation: usize = parse_num(generation, n)?;
    if generation != mesh.generation() {
        return Err(Error::Mismatch(format!(
            "solution generation {generation} against mesh generation {}",
            mesh.generation()
        )));
    }
    let (n, count) = lines.keyed("slots")?;
    let count: usize = parse_num(count, n)?;

    let data = ProblemData::homogeneous(MaterialParams::unit(), |_| [0.0; 2]);
    let spaces = method_spaces(method, mesh, &data, p)?;
    if spaces.len() != count {
        return Err(Error::Mismatch(format!("{count} slots in file, {} expected", spaces.len())));
    }
    let mut slots = Vec::with_capacity(count);
    for (name, mut space) in spaces {
        let (n, desc) = lines.keyed("slot")?;
        let parts: Vec<&str> = desc.split_whitespace().collect();
        let [sname, kind, order, ndofs] = parts[..] else {
            return Err(Error::Format(format!("line {n}: malformed slot descriptor `{desc}`")));
        };
        let order: usize = parse_num(order, n)?;
        let ndofs: usize = parse_num(ndofs, n)?;
        if sname != name || kind != space.kind.name() || order != space.order || ndofs != space.ndofs() {
            return Err(Error::Mismatch(format!(
                "line {n}: slot `{desc}` does not match {name} {} {} {}",
                space.kind.name(),
                space.order,
                space.ndofs()
            )));
        }
        let mut coeffs = Vec::with_capacity(ndofs);
        for _ in 0..ndofs {
            let (n, v) = lines.next("coefficient")?;
            coeffs.push(parse_num::<f64>(v, n)?);
        }
        for (g, &c) in coeffs.iter().enumerate() {
            if space.is_constrained(g) {
                space.set_prescribed(g, c);
            }
        }
        slots.push(SlotField { name, space, coeffs });
    }
    if let Some((n, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::Format(format!("line {}: trailing content `{extra}`", n + 1)));
    }
    Ok(SolutionFields { method, p, generation, slots })
}

pub fn load_solution(path: &Path, method: Method, mesh: &Mesh) -> Result<SolutionFields> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_solution(&text, method, mesh)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Config snapshot, artifact names with content hashes and the producing code version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyManifest {
    pub code_version: String,
    pub config: String,
    /// File name (relative to the manifest directory) to SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

impl StudyManifest {
    pub fn new(config: impl Into<String>) -> Self {
        Self { code_version: env!("CARGO_PKG_VERSION").to_string(), config: config.into(), artifacts: BTreeMap::new() }
    }

    /// Hashes `dir/name` and records it.
    pub fn record(&mut self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.artifacts.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MANIFEST_MAGIC} {MANIFEST_VERSION}\nversion {}\n", self.code_version);
        let config: Vec<&str> = self.config.lines().collect();
        let _ = writeln!(out, "config {}", config.len());
        for l in config {
            let _ = writeln!(out, "{l}");
        }
        let _ = writeln!(out, "artifacts {}", self.artifacts.len());
        for (name, hash) in &self.artifacts {
            let _ = writeln!(out, "{hash} {name}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines { inner: text.lines().enumerate() };
        let (_, header) = lines.next("header")?;
        if header != format!("{MANIFEST_MAGIC} {MANIFEST_VERSION}") {
            return Err(Error::Format(format!("not a version {MANIFEST_VERSION} manifest: `{header}`")));
        }
        let (_, version) = lines.keyed("version")?;
        let (n, count) = lines.keyed("config")?;
        let count: usize = parse_num(count, n)?;
        let mut config = String::new();
        for _ in 0..count {
            config.push_str(lines.next("config line")?.1);
            config.push('\n');
        }
        let (n, count) = lines.keyed("artifacts")?;
        let count: usize = parse_num(count, n)?;
        let mut artifacts = BTreeMap::new();
        for _ in 0..count {
            let (n, l) = lines.next("artifact")?;
            let (hash, name) = l.split_once(' ').ok_or_else(|| Error::Format(format!("line {n}: malformed artifact `{l}`")))?;
            artifacts.insert(name.to_string(), hash.to_string());
        }
        Ok(Self { code_version: version.to_string(), config, artifacts })
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Reads `dir/manifest.txt` and checks every artifact against its recorded hash.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m = Self::parse(&text)?;
        for (name, hash) in &m.artifacts {
            let p = dir.join(name);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if &sha256_hex(&bytes) != hash {
                return Err(Error::Mismatch(format!("{}: content hash differs from manifest", p.display())));
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::smooth_solution_2d;
    use crate::forms::Formulation;
    use crate::mesh::build_square_mesh;
    use crate::solver::solve_method;

    #[test]
    fn round_trip_is_bit_exact_for_every_method() {
        let ex = smooth_solution_2d(MaterialParams::unit());
        let data = ex.problem_data();
        let mesh = build_square_mesh(2).unwrap();
        let methods = Formulation::ALL.iter().map(|&f| Method::Dpg(f)).chain([Method::Galerkin]);
        for method in methods {
            let s = solve_method(method, &mesh, &data, 2, 1).unwrap();
            let back = parse_solution(&solution_to_string(&s), method, &mesh).unwrap();
            assert_eq!(back.slots.len(), s.slots.len());
            for (a, b) in s.slots.iter().zip(&back.slots) {
                assert_eq!(a.name, b.name);
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&a.coeffs), bits(&b.coeffs), "{method:?} {}", a.name);
                assert_eq!(bits(a.space.prescribed()), bits(b.space.prescribed()));
            }
        }
    }

    #[test]
    fn zero_solution_round_trips() {
        let mesh = build_square_mesh(1).unwrap();
        let data = ProblemData::homogeneous(MaterialParams::unit(), |_| [0.0; 2]);
        let method = Method::Dpg(Formulation::Ultraweak);
        let s = solve_method(method, &mesh, &data, 1, 1).unwrap();
        assert!(s.flat().iter().all(|&c| c == 0.0));
        let back = parse_solution(&solution_to_string(&s), method, &mesh).unwrap();
        assert_eq!(back.flat(), s.flat());
    }

    #[test]
    fn mismatches_are_rejected() {
        let ex = smooth_solution_2d(MaterialParams::unit());
        let mesh = build_square_mesh(2).unwrap();
        let method = Method::Dpg(Formulation::Primal);
        let text = solution_to_string(&solve_method(method, &mesh, &ex.problem_data(), 1, 1).unwrap());
        let finer = mesh.uniform_refine();
        assert!(matches!(parse_solution(&text, method, &finer), Err(Error::Mismatch(_))));
        assert!(matches!(parse_solution(&text, Method::Galerkin, &mesh), Err(Error::Mismatch(_))));
        let bumped = text.replacen("elastodpg-solution 1", "elastodpg-solution 9", 1);
        assert!(matches!(parse_solution(&bumped, method, &mesh), Err(Error::Mismatch(_))));
        let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_solution(&truncated, method, &mesh), Err(Error::Format(_))));
    }

    #[test]
    fn sha256_known_answer() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.csv"), "step,dofs\n0,10\n").unwrap();
        let mut m = StudyManifest::new("p = 1\nformulation = primal");
        m.record(dir.path(), "a.csv").unwrap();
        m.save(dir.path()).unwrap();
        let back = StudyManifest::load(dir.path()).unwrap();
        assert_eq!(back.artifacts, m.artifacts);
        assert_eq!(back.config.trim_end(), m.config);
        fs::write(dir.path().join("a.csv"), "step,dofs\n0,11\n").unwrap();
        assert!(matches!(StudyManifest::load(dir.path()), Err(Error::Mismatch(_))));
    }
}
