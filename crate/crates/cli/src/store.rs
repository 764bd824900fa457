//! Dataset directories: `<root>/<class_name>/<id>.pgm` plus a mandatory
//! `manifest.csv` with columns id,file,label,provenance,true_label (empty
//! string when absent), UTF-8, LF line endings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use dataforge_core::dataset::{Dataset, LabeledSample, Provenance, Role};

use crate::pgm;
use crate::{Error, Result};

const MANIFEST: &str = "manifest.csv";
const HEADER: &str = "id,file,label,provenance,true_label";

/// Writes every sample as a PGM under its class directory and the manifest
/// in sample order. Existing files are overwritten; nothing is deleted.
pub fn save_pgm_dir(ds: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = String::from(HEADER);
    manifest.push('\n');
    for s in ds.samples() {
        let class = &ds.classes()[s.label];
        let dir = root.join(class);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let file = format!("{class}/{}.pgm", s.id);
        pgm::write_pgm(&root.join(&file), &s.image)?;
        let true_label = s.true_label.map(|t| t.to_string()).unwrap_or_default();
        manifest.push_str(&format!(
            "{},{},{},{},{}\n",
            s.id,
            file,
            s.label,
            s.provenance.as_str(),
            true_label
        ));
    }
    fs::write(root.join(MANIFEST), manifest).map_err(|e| Error::io(root.join(MANIFEST), e))
}

/// Loads a dataset directory back. Class names are reconstructed from the
/// manifest's file paths (label index -> directory); a class index that no
/// sample carries gets a placeholder name, which is the one lossy corner of
/// the round trip. The loaded dataset carries the train role; use
/// [`Dataset::with_role`] to retag.
pub fn load_pgm_dir(root: &Path) -> Result<Dataset> {
    let manifest_path = root.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        _ => return Err(Error::format(&manifest_path, "missing or wrong header row")),
    }
    let mut samples = Vec::new();
    let mut class_names: BTreeMap<usize, String> = BTreeMap::new();
    let mut seen_files: BTreeSet<String> = BTreeSet::new();
    let mut max_class = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::format(
                &manifest_path,
                format!("row {}: expected 5 fields, got {}", lineno + 2, fields.len()),
            ));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::format(&manifest_path, format!("row {}: bad id", lineno + 2)))?;
        let file = fields[1].to_string();
        let label: usize = fields[2]
            .parse()
            .map_err(|_| Error::format(&manifest_path, format!("row {}: bad label", lineno + 2)))?;
        let provenance = Provenance::parse(fields[3])
            .map_err(|_| Error::format(&manifest_path, format!("row {}: bad provenance", lineno + 2)))?;
        let true_label: Option<usize> = if fields[4].is_empty() {
            None
        } else {
            Some(fields[4].parse().map_err(|_| {
                Error::format(&manifest_path, format!("row {}: bad true_label", lineno + 2))
            })?)
        };
        let class_dir = file
            .split('/')
            .next()
            .filter(|c| !c.is_empty())
            .ok_or_else(|| Error::format(&manifest_path, format!("row {}: bad file path", lineno + 2)))?;
        match class_names.get(&label) {
            Some(existing) if existing != class_dir => {
                return Err(Error::format(
                    root.join(&file),
                    format!("label {label} maps to both `{existing}` and `{class_dir}`"),
                ));
            }
            None => {
                if class_names.values().any(|v| v == class_dir) {
                    return Err(Error::format(
                        root.join(&file),
                        format!("directory `{class_dir}` serves two different labels"),
                    ));
                }
                class_names.insert(label, class_dir.to_string());
            }
            _ => {}
        }
        let img_path = root.join(&file);
        if !img_path.is_file() {
            return Err(Error::format(&img_path, "listed in manifest but missing"));
        }
        let image = pgm::read_pgm(&img_path)?;
        max_class = max_class.max(label).max(true_label.unwrap_or(0));
        seen_files.insert(file);
        samples.push(LabeledSample {
            id,
            image,
            label,
            provenance,
            true_label,
        });
    }
    // Stray PGM files are a manifest/file mismatch too.
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        let class_dir = entry.file_name().to_string_lossy().into_owned();
        for file in fs::read_dir(entry.path()).map_err(|e| Error::io(entry.path(), e))? {
            let file = file.map_err(|e| Error::io(entry.path(), e))?;
            let name = file.file_name().to_string_lossy().into_owned();
            if !name.ends_with(".pgm") {
                continue;
            }
            let rel = format!("{class_dir}/{name}");
            if !seen_files.contains(&rel) {
                return Err(Error::format(file.path(), "on disk but absent from manifest"));
            }
        }
    }
    let k = (max_class + 1).max(2);
    let classes: Vec<String> = (0..k)
        .map(|c| {
            class_names
                .get(&c)
                .cloned()
                .unwrap_or_else(|| format!("class{c}"))
        })
        .collect();
    Ok(Dataset::new(classes, samples, Role::Train)?)
}
