//! Susceptibility grids: measured or simulated `(u, v)` per attack setting.

use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacker::{AttackMeta, FeasibleSet, FlipPair};
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 5] = ["freq_hz", "amplitude_vpp", "u", "v", "n"];

/// Directory searched for fixtures given by bare name.
pub const FIXTURE_DIR_ENV: &str = "EMSI_FIXTURE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub freq_hz: f64,
    pub amplitude_vpp: f64,
    pub u: f64,
    pub v: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SusceptibilityGrid {
    /// Leading `#` lines, without the newline.
    pub comments: Vec<String>,
    pub rows: Vec<GridRow>,
}

impl SusceptibilityGrid {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            s.push_str(c);
            s.push('\n');
        }
        s.push_str(&COLUMNS.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.freq_hz, r.amplitude_vpp, r.u, r.v, r.n
            ));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn load_err(path: &Path, row: u64, msg: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        row,
        msg: msg.into(),
    }
}

pub fn load_grid(path: &Path) -> Result<SusceptibilityGrid> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_grid(text.as_bytes(), path)
}

/// Parse grid CSV; `path` only labels diagnostics.
pub fn parse_grid<R: Read>(mut input: R, path: &Path) -> Result<SusceptibilityGrid> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| load_err(path, 0, e.to_string()))?;
    let comments = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(str::to_owned)
        .collect();

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_line = rdr
        .headers()
        .map_err(|e| load_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?
        .clone();
    let header_row = header_line.position().map_or(0, |p| p.line());
    let col = |name: &str| {
        header_line
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| load_err(path, header_row, format!("missing column `{name}`")))
    };
    let idx: Vec<usize> = COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| load_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            rec.get(idx[i])
                .ok_or_else(|| load_err(path, line, format!("missing `{}`", COLUMNS[i])))
        };
        let num = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    load_err(
                        path,
                        line,
                        format!("`{}` is not a number: {s:?}", COLUMNS[i]),
                    )
                })
        };
        let row = GridRow {
            freq_hz: num(0)?,
            amplitude_vpp: num(1)?,
            u: num(2)?,
            v: num(3)?,
            n: field(4)?
                .parse()
                .map_err(|_| load_err(path, line, "`n` is not a non-negative integer"))?,
        };
        if row.freq_hz <= 0.0 || row.amplitude_vpp <= 0.0 {
            return Err(load_err(path, line, "frequency and amplitude must be > 0"));
        }
        for (name, x) in [("u", row.u), ("v", row.v)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(load_err(
                    path,
                    line,
                    format!("{name} = {x} is outside [0, 1]"),
                ));
            }
        }
        if !seen.insert((row.freq_hz.to_bits(), row.amplitude_vpp.to_bits())) {
            return Err(load_err(
                path,
                line,
                format!(
                    "duplicate row for {} Hz, {} Vpp",
                    row.freq_hz, row.amplitude_vpp
                ),
            ));
        }
        rows.push(row);
    }
    Ok(SusceptibilityGrid { comments, rows })
}

/// One pair per row, then SendNothing.
pub fn grid_to_feasible(grid: &SusceptibilityGrid) -> FeasibleSet {
    let mut pairs: Vec<FlipPair> = grid
        .rows
        .iter()
        .map(|r| FlipPair {
            u: r.u,
            v: r.v,
            meta: Some(AttackMeta {
                freq_hz: r.freq_hz,
                amplitude_vpp: r.amplitude_vpp,
            }),
        })
        .collect();
    pairs.push(FlipPair::SEND_NOTHING);
    FeasibleSet { pairs }
}

/// Resolve a fixture: the path itself if it exists, else the file name under
/// `$EMSI_FIXTURE_DIR`, else under the crate's bundled `fixtures/`.
pub fn resolve_fixture(name: &Path) -> PathBuf {
    if name.exists() {
        return name.to_path_buf();
    }
    let file = name.file_name().map(Path::new).unwrap_or(name);
    if let Some(dir) = std::env::var_os(FIXTURE_DIR_ENV) {
        let p = Path::new(&dir).join(file);
        if p.exists() {
            return p;
        }
    }
    let bundled = bundled_fixture_dir().join(file);
    if bundled.exists() {
        bundled
    } else {
        name.to_path_buf()
    }
}

pub fn bundled_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}
