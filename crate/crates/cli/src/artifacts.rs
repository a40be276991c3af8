//! On-disk formats: the run manifest, diagnostics CSV, binary snapshots and
//! the summary.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use nsplane_core::{Grid, GridSpec, SpectralField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const SUMMARY: &str = "summary.json";
pub const SNAPSHOTS: &str = "snapshots";

const SNAPSHOT_MAGIC: &[u8; 8] = b"NSPLSNAP";
const SNAPSHOT_VERSION: u32 = 1;

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Resolved configuration with every default materialized.
    pub config_toml: String,
    pub seed: u64,
    pub threads: usize,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub status: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config_toml: String, seed: u64, threads: usize) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config_toml,
            seed,
            threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: None,
            status: "running".into(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self, status: &str, outputs: Vec<String>) {
        self.finished_unix = Some(unix_now());
        self.status = status.to_string();
        self.outputs = outputs;
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// A numeric table written with 17 significant digits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .context("empty CSV")?
            .split(',')
            .map(String::from)
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let row = line
                .split(',')
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if row.len() != header.len() {
                bail!(
                    "CSV row has {} cells, header has {}",
                    row.len(),
                    header.len()
                );
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Column label of an `L^p` norm.
pub fn lp_label(p: f64) -> String {
    if p.is_infinite() {
        "lp_inf".into()
    } else if p.fract() == 0.0 {
        format!("lp_{}", p as i64)
    } else {
        format!("lp_{p}")
    }
}

/// Binary snapshot: magic, version, a header (dimension, points, periods,
/// dealias fraction, components, complex flag, time) and the spectral
/// coefficients as little-endian `f64` pairs.
pub fn write_snapshot(path: &Path, field: &SpectralField, t: f64) -> Result<()> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(64 + 16 * field.coeffs().len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for &n in grid.points() {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &l in grid.periods() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    buf.extend_from_slice(&grid.spec().dealias_fraction.to_le_bytes());
    buf.extend_from_slice(&(field.components() as u32).to_le_bytes());
    buf.push(u8::from(!field.is_real()));
    buf.extend_from_slice(&t.to_le_bytes());
    for z in field.coeffs() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn read_snapshot(path: &Path) -> Result<(SpectralField, f64)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader {
        bytes: &bytes,
        at: 0,
    };
    if r.take(8)? != SNAPSHOT_MAGIC {
        bail!("{} is not a snapshot", path.display());
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        bail!("unsupported snapshot version {version}");
    }
    let dim = r.u32()? as usize;
    let points = (0..dim)
        .map(|_| r.u64().map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    let periods = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let dealias = r.f64()?;
    let components = r.u32()? as usize;
    let complex = r.take(1)?[0] == 1;
    let t = r.f64()?;
    let grid = Grid::new(GridSpec::new(&points, &periods).with_dealias(dealias))?;
    let n = components * grid.len();
    let coeffs = (0..n)
        .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
        .collect::<Result<Vec<_>>>()?;
    if r.at != bytes.len() {
        bail!("trailing bytes in {}", path.display());
    }
    Ok((
        SpectralField::from_coeffs(&grid, components, !complex, coeffs)?,
        t,
    ))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            bail!("truncated snapshot");
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into()?))
    }
}

/// One asserted invariant of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    /// Comparison used, e.g. `<=` or `in [a, b]`.
    pub relation: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            relation: "<=".into(),
        }
    }

    pub fn within(name: impl Into<String>, value: f64, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= low && value <= high,
            value,
            threshold: high,
            relation: format!("in [{low}, {high}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub subcommand: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub failure: Option<FailureRecord>,
    /// Run-specific measurements.
    pub details: serde_json::Value,
}

impl Summary {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Output directory owned by one run.
pub struct OutputDir {
    pub root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        let mut f =
            fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        f.write_all(contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn snapshot(&mut self, index: usize, field: &SpectralField, t: f64) -> Result<()> {
        fs::create_dir_all(self.root.join(SNAPSHOTS))?;
        let name = format!("{SNAPSHOTS}/state_{index:06}.bin");
        write_snapshot(&self.root.join(&name), field, t)?;
        self.written.push(name);
        Ok(())
    }

    pub fn written(&self) -> Vec<String> {
        self.written.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn csv_round_trips_exactly() {
        let mut t = Table::new(["t", "x"]);
        t.push(vec![0.1, 1.0 / 3.0]);
        t.push(vec![1e-300, f64::MAX]);
        let back = Table::parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(GridSpec::cube(3, 8)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f = SpectralField::random_band_limited(&grid, 3, 2, &mut rng);
        let path = dir.path().join("s.bin");
        write_snapshot(&path, &f, 0.25).unwrap();
        let (g, t) = read_snapshot(&path).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(g, f);
        let c = SpectralField::random_complex_band_limited(&grid, 2, &mut rng);
        write_snapshot(&path, &c, 1.0).unwrap();
        assert!(!read_snapshot(&path).unwrap().0.is_real());
    }

    #[test]
    fn labels() {
        assert_eq!(lp_label(3.0), "lp_3");
        assert_eq!(lp_label(f64::INFINITY), "lp_inf");
        assert_eq!(lp_label(2.5), "lp_2.5");
    }
}
