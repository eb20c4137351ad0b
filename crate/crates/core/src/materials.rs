//! Complex refractive index tables for the materials of the device stack and
//! the fiber-side beam train.
//!
//! Tables are plain CSV files with a `wavelength_nm,n,k` header and optional
//! `#` comment lines, one file per material named `<material_id>.csv`. A set of
//! default tables is compiled into the crate; a directory of files can be used
//! instead (see [`MaterialDb::from_env`] and [`MATERIALS_DIR_ENV`]).
//!
//! Interpolation is linear in wavelength, separately for `n` and `k`. A table
//! with a single row is wavelength independent.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable overriding the default (bundled) materials.
pub const MATERIALS_DIR_ENV: &str = "SNSPD_MATERIALS_DIR";

const BUNDLED: &[(&str, &str)] = &[
    ("Au", include_str!("../data/materials/Au.csv")),
    ("MgO", include_str!("../data/materials/MgO.csv")),
    ("NbN", include_str!("../data/materials/NbN.csv")),
    ("SiO", include_str!("../data/materials/SiO.csv")),
    (
        "fiber_core",
        include_str!("../data/materials/fiber_core.csv"),
    ),
    ("vacuum", include_str!("../data/materials/vacuum.csv")),
];

/// Complex refractive index `N = n + i k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexIndex {
    pub n: f64,
    pub k: f64,
}

impl ComplexIndex {
    pub fn new(n: f64, k: f64) -> Result<Self> {
        if !(n > 0.0) || !(k >= 0.0) || !n.is_finite() || !k.is_finite() {
            return Err(Error::Domain(format!(
                "complex index requires n > 0 and k >= 0, got ({n}, {k})"
            )));
        }
        Ok(Self { n, k })
    }

    pub const fn real(n: f64) -> Self {
        Self { n, k: 0.0 }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.n, self.k)
    }

    pub fn is_lossless(self) -> bool {
        self.k == 0.0
    }
}

impl fmt::Display for ComplexIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}i", self.n, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexSample {
    /// metres
    pub wavelength: f64,
    pub n: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    id: String,
    entries: Vec<IndexSample>,
    source: String,
    sha256: String,
}

impl MaterialTable {
    /// Builds a table from samples; entries must be strictly ascending in
    /// wavelength with `n > 0` and `k >= 0`.
    pub fn new(id: impl Into<String>, entries: Vec<IndexSample>) -> Result<Self> {
        let id = id.into();
        validate_entries(&id, &entries)?;
        let mut hasher = Sha256::new();
        for e in &entries {
            hasher.update(e.wavelength.to_le_bytes());
            hasher.update(e.n.to_le_bytes());
            hasher.update(e.k.to_le_bytes());
        }
        let sha256 = hex::encode(hasher.finalize());
        Ok(Self {
            source: format!("inline:{id}"),
            id,
            entries,
            sha256,
        })
    }

    /// Parses the `wavelength_nm,n,k` CSV format.
    pub fn parse_csv(id: impl Into<String>, text: &str, source: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let source = source.into();
        let mut entries = Vec::new();
        let mut saw_header = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                let cols: Vec<_> = line.split(',').map(str::trim).collect();
                if cols != ["wavelength_nm", "n", "k"] {
                    return Err(Error::parse(
                        &source,
                        format!("expected header `wavelength_nm,n,k`, found `{line}`"),
                    ));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<_> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    &source,
                    format!(
                        "line {}: expected 3 columns, found {}",
                        lineno + 1,
                        fields.len()
                    ),
                ));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::parse(&source, format!("line {}: `{s}`: {e}", lineno + 1)))
            };
            entries.push(IndexSample {
                wavelength: num(fields[0])? * 1e-9,
                n: num(fields[1])?,
                k: num(fields[2])?,
            });
        }
        validate_entries(&id, &entries)?;
        let sha256 = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Self {
            id,
            entries,
            source,
            sha256,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("bad material file name {}", path.display())))?
            .to_string();
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(id, &text, path.display().to_string())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn entries(&self) -> &[IndexSample] {
        &self.entries
    }

    /// Where the table came from (file path or `bundled:<id>.csv`).
    pub fn source(&self) -> &str {
        &self.source
    }

    /// SHA-256 of the source text, hex encoded.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    /// Valid wavelength span in metres. Single-row tables are unbounded.
    pub fn span(&self) -> (f64, f64) {
        if self.entries.len() == 1 {
            (0.0, f64::INFINITY)
        } else {
            (
                self.entries[0].wavelength,
                self.entries[self.entries.len() - 1].wavelength,
            )
        }
    }

    /// Linearly interpolated index at `wavelength` (metres). Grid points are
    /// returned exactly.
    pub fn lookup_index(&self, wavelength: f64) -> Result<ComplexIndex> {
        let entries = &self.entries;
        if entries.len() == 1 {
            return Ok(ComplexIndex {
                n: entries[0].n,
                k: entries[0].k,
            });
        }
        let first = entries[0].wavelength;
        let last = entries[entries.len() - 1].wavelength;
        if !(wavelength >= first && wavelength <= last) {
            return Err(Error::WavelengthOutOfRange {
                material: self.id.clone(),
                wavelength_nm: wavelength * 1e9,
                min_nm: first * 1e9,
                max_nm: last * 1e9,
            });
        }
        match entries.binary_search_by(|e| e.wavelength.total_cmp(&wavelength)) {
            Ok(i) => Ok(ComplexIndex {
                n: entries[i].n,
                k: entries[i].k,
            }),
            Err(i) => {
                let (lo, hi) = (&entries[i - 1], &entries[i]);
                let t = (wavelength - lo.wavelength) / (hi.wavelength - lo.wavelength);
                Ok(ComplexIndex {
                    n: lerp_clamped(lo.n, hi.n, t),
                    k: lerp_clamped(lo.k, hi.k, t),
                })
            }
        }
    }
}

fn lerp_clamped(a: f64, b: f64, t: f64) -> f64 {
    let v = a + t * (b - a);
    v.clamp(a.min(b), a.max(b))
}

fn validate_entries(id: &str, entries: &[IndexSample]) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::Domain(format!(
            "material `{id}`: table has no entries"
        )));
    }
    for w in entries.windows(2) {
        if !(w[1].wavelength > w[0].wavelength) {
            return Err(Error::Domain(format!(
                "material `{id}`: wavelengths must be strictly ascending ({} nm then {} nm)",
                w[0].wavelength * 1e9,
                w[1].wavelength * 1e9
            )));
        }
    }
    for e in entries {
        if !(e.n > 0.0) || !(e.k >= 0.0) || !e.wavelength.is_finite() || !(e.wavelength > 0.0) {
            return Err(Error::Domain(format!(
                "material `{id}`: invalid row ({} nm, n={}, k={})",
                e.wavelength * 1e9,
                e.n,
                e.k
            )));
        }
    }
    Ok(())
}

/// Rule used to homogenise the meander (wire + gap filler) into one layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingRule {
    /// Volume-fraction weighted complex index: `f·N_wire + (1 − f)·N_ambient`.
    #[default]
    Linear,
}

/// Effective index of the meander layer for a wire fill factor in `[0, 1]`.
pub fn effective_meander_index(
    wire: ComplexIndex,
    ambient: ComplexIndex,
    fill_factor: f64,
    rule: MixingRule,
) -> Result<ComplexIndex> {
    if !(0.0..=1.0).contains(&fill_factor) {
        return Err(Error::Domain(format!(
            "fill factor must lie in [0, 1], got {fill_factor}"
        )));
    }
    match rule {
        MixingRule::Linear => {
            if fill_factor == 1.0 {
                return Ok(wire);
            }
            if fill_factor == 0.0 {
                return Ok(ambient);
            }
            Ok(ComplexIndex {
                n: fill_factor * wire.n + (1.0 - fill_factor) * ambient.n,
                k: fill_factor * wire.k + (1.0 - fill_factor) * ambient.k,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaterialSource {
    Bundled,
    Directory(PathBuf),
}

/// Immutable set of material tables keyed by material id.
#[derive(Debug, Clone)]
pub struct MaterialDb {
    tables: BTreeMap<String, MaterialTable>,
    origin: MaterialSource,
}

impl MaterialDb {
    /// Tables compiled into the crate.
    pub fn bundled() -> Self {
        let tables = BUNDLED
            .iter()
            .map(|(id, text)| {
                let table = MaterialTable::parse_csv(*id, text, format!("bundled:{id}.csv"))
                    .expect("bundled material tables are valid");
                (id.to_string(), table)
            })
            .collect();
        Self {
            tables,
            origin: MaterialSource::Bundled,
        }
    }

    /// Loads every `*.csv` in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut tables = BTreeMap::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        for path in paths {
            let table = MaterialTable::load(&path)?;
            tables.insert(table.id().to_string(), table);
        }
        if tables.is_empty() {
            return Err(Error::Config(format!(
                "no material files (*.csv) in {}",
                dir.display()
            )));
        }
        Ok(Self {
            tables,
            origin: MaterialSource::Directory(dir.to_path_buf()),
        })
    }

    /// Explicit directory if given, else `SNSPD_MATERIALS_DIR`, else bundled.
    pub fn from_env_or(dir: Option<&Path>) -> Result<Self> {
        if let Some(dir) = dir {
            return Self::from_dir(dir);
        }
        Self::from_env()
    }

    pub fn from_env() -> Result<Self> {
        match std::env::var_os(MATERIALS_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::from_dir(PathBuf::from(dir)),
            _ => Ok(Self::bundled()),
        }
    }

    pub fn with_table(mut self, table: MaterialTable) -> Self {
        self.tables.insert(table.id().to_string(), table);
        self
    }

    pub fn origin(&self) -> &MaterialSource {
        &self.origin
    }

    pub fn get(&self, id: &str) -> Result<&MaterialTable> {
        self.tables
            .get(id)
            .ok_or_else(|| Error::UnknownMaterial(id.to_string()))
    }

    pub fn index(&self, id: &str, wavelength: f64) -> Result<ComplexIndex> {
        self.get(id)?.lookup_index(wavelength)
    }

    pub fn tables(&self) -> impl Iterator<Item = &MaterialTable> {
        self.tables.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> MaterialTable {
        MaterialTable::new(
            "test",
            vec![
                IndexSample {
                    wavelength: 1300e-9,
                    n: 2.0,
                    k: 0.0,
                },
                IndexSample {
                    wavelength: 1700e-9,
                    n: 2.4,
                    k: 0.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn vacuum_is_identity() {
        let db = MaterialDb::bundled();
        let n = db.index("vacuum", 1550e-9).unwrap();
        assert_eq!(n, ComplexIndex { n: 1.0, k: 0.0 });
        // single-row tables hold everywhere
        assert_eq!(db.index("vacuum", 300e-9).unwrap().n, 1.0);
    }

    #[test]
    fn linear_interpolation_midpoint() {
        let n = two_point().lookup_index(1500e-9).unwrap();
        assert!((n.n - 2.2).abs() < 1e-12);
        assert_eq!(n.k, 0.0);
    }

    #[test]
    fn grid_points_are_exact() {
        let db = MaterialDb::bundled();
        let text = include_str!("../data/materials/MgO.csv");
        // independent read of the 1550 nm row
        let row = text
            .lines()
            .find(|l| l.starts_with("1550,"))
            .unwrap()
            .split(',')
            .map(|s| s.parse::<f64>().unwrap())
            .collect::<Vec<_>>();
        let n = db.index("MgO", 1550e-9).unwrap();
        assert_eq!(n.n.to_bits(), row[1].to_bits());
        assert_eq!(n.k.to_bits(), row[2].to_bits());
    }

    #[test]
    fn out_of_range_names_material_and_span() {
        let err = two_point().lookup_index(1800e-9).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("test"), "{msg}");
        assert!(msg.contains("1300") && msg.contains("1700"), "{msg}");
    }

    #[test]
    fn rejects_unsorted_and_negative() {
        let bad = MaterialTable::parse_csv("x", "wavelength_nm,n,k\n1500,1,0\n1400,1,0\n", "t");
        assert!(bad.is_err());
        let bad = MaterialTable::parse_csv("x", "wavelength_nm,n,k\n1500,-1,0\n", "t");
        assert!(bad.is_err());
        let bad = MaterialTable::parse_csv("x", "wavelength_nm,n,k\n1500,1,-0.1\n", "t");
        assert!(bad.is_err());
        let bad = MaterialTable::parse_csv("x", "# only a comment\nwavelength_nm,n,k\n", "t");
        assert!(bad.is_err());
    }

    #[test]
    fn meander_mixing_limits_and_value() {
        let wire = ComplexIndex::new(5.0, 5.0).unwrap();
        let amb = ComplexIndex::real(1.0);
        let r = MixingRule::Linear;
        assert_eq!(effective_meander_index(wire, amb, 1.0, r).unwrap(), wire);
        assert_eq!(effective_meander_index(wire, amb, 0.0, r).unwrap(), amb);
        let e = effective_meander_index(wire, amb, 0.625, r).unwrap();
        assert!((e.n - 3.5).abs() < 1e-12 && (e.k - 3.125).abs() < 1e-12);
        assert!(effective_meander_index(wire, amb, 1.01, r).is_err());
        assert!(effective_meander_index(wire, amb, -0.01, r).is_err());
    }

    #[test]
    fn directory_loading_tracks_source() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("glass.csv"),
            "# test\nwavelength_nm,n,k\n1000,1.5,0\n2000,1.4,0\n",
        )
        .unwrap();
        let db = MaterialDb::from_dir(dir.path()).unwrap();
        let t = db.get("glass").unwrap();
        assert!(t.source().ends_with("glass.csv"));
        assert_eq!(t.sha256().len(), 64);
        assert!(db.get("MgO").is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn interpolation_stays_between_neighbours(frac in 0.0f64..=1.0) {
            let db = MaterialDb::bundled();
            let t = db.get("Au").unwrap();
            let e = t.entries();
            let i = 2;
            let wl = e[i].wavelength + frac * (e[i + 1].wavelength - e[i].wavelength);
            let v = t.lookup_index(wl).unwrap();
            prop_assert!(v.n >= e[i].n.min(e[i + 1].n) && v.n <= e[i].n.max(e[i + 1].n));
            prop_assert!(v.k >= e[i].k.min(e[i + 1].k) && v.k <= e[i].k.max(e[i + 1].k));
        }

        #[test]
        fn mixing_is_monotone_in_fill(f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
            let wire = ComplexIndex::new(5.2, 5.8).unwrap();
            let amb = ComplexIndex::real(1.55);
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let a = effective_meander_index(wire, amb, lo, MixingRule::Linear).unwrap();
            let b = effective_meander_index(wire, amb, hi, MixingRule::Linear).unwrap();
            prop_assert!(a.n <= b.n + 1e-15 && a.k <= b.k + 1e-15);
        }
    }
}
