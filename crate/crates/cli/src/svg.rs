//! File output for the 2-D diagnostics: SVG scatter plus the matching
//! coordinate CSV (id,x,y,label,mark).

use std::fs;
use std::path::Path;

use dataforge_core::projection::{render_scatter, Mark};

use crate::{Error, Result};

pub fn scatter_svg(
    path: &Path,
    coords: &[[f64; 2]],
    labels: &[usize],
    marks: &[Mark],
) -> Result<()> {
    let svg = render_scatter(coords, labels, marks)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

pub fn write_coords_csv(
    path: &Path,
    ids: &[u64],
    coords: &[[f64; 2]],
    labels: &[usize],
    marks: &[Mark],
) -> Result<()> {
    if ids.len() != coords.len() || ids.len() != labels.len() || ids.len() != marks.len() {
        return Err(Error::format(path, "ids, coords, labels, and marks must align"));
    }
    let mut text = String::from("id,x,y,label,mark\n");
    for (((id, c), label), mark) in ids.iter().zip(coords).zip(labels).zip(marks) {
        text.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            id,
            c[0],
            c[1],
            label,
            mark.as_str()
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
