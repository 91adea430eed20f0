//! CSV and JSON writers. Numbers use Rust's shortest round-trip formatting,
//! so identical values always print identically.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::scenario::{NodeField, NoiseLattice};

/// One row per node: `node,level,t,probability,<name>_<j>...` for each field.
pub fn write_node_fields<W: Write>(mut w: W, lattice: &NoiseLattice, fields: &[(&str, &NodeField)]) -> std::io::Result<()> {
    write!(w, "node,level,t,probability")?;
    for (name, f) in fields {
        for j in 0..f.dim() {
            write!(w, ",{name}_{j}")?;
        }
    }
    writeln!(w)?;
    for v in 0..lattice.len() {
        write!(w, "{v},{},{},{}", lattice.level(v), lattice.t(v), lattice.probability(v))?;
        for (_, f) in fields {
            for x in f.get(v) {
                write!(w, ",{x}")?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Per-agent fields in long format: `node,agent,<name>_<j>...`.
pub fn write_agent_fields<W: Write>(mut w: W, lattice: &NoiseLattice, name: &str, fields: &[NodeField]) -> std::io::Result<()> {
    let dim = fields.first().map_or(0, NodeField::dim);
    write!(w, "node,agent")?;
    for j in 0..dim {
        write!(w, ",{name}_{j}")?;
    }
    writeln!(w)?;
    for v in 0..lattice.len() {
        for (i, f) in fields.iter().enumerate() {
            write!(w, "{v},{i}")?;
            for x in f.get(v) {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Create `path` (and its parent directory) and hand a buffered writer to `f`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dimensions;
    use crate::scenario::{build_lattice, TimeGrid};

    #[test]
    fn node_csv_layout() {
        let dims = Dimensions { n: 1, d0: 1, d: 0, agents: 1 };
        let lat = build_lattice(TimeGrid::new(1.0, 1).unwrap(), &dims, 2).unwrap();
        let f = NodeField::from_fn(&lat, 1, |v, o| o[0] = 0.1 * v as f64);
        let mut buf = Vec::new();
        write_node_fields(&mut buf, &lat, &[("phi", &f)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node,level,t,probability,phi_0");
        assert_eq!(lines[1], "0,0,0,1,0");
        assert_eq!(lines[2], "1,1,1,0.5,0.1");
        assert_eq!(lines.len(), 4);
    }
}
