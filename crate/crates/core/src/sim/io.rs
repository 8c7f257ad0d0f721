//! Scenario directories.
//!
//! ```text
//! scenario.json     header: format tag, config echo, layout description
//! block_0000.csv    one row per sensor; columns re_1,im_1,…,re_L,im_L
//! truth.csv         block,snapshot,source,theta_deg (block/source 0-based,
//!                   snapshot 1-based)
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a directory
//! back reproduces the simulated blocks bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Scenario, ScenarioConfig, SnapshotBlock, TruthTable};
use crate::array::{CMatrix, C64};
use crate::error::{Error, Result};

pub const SCENARIO_FORMAT: &str = "tldoa-scenario/1";
const HEADER_FILE: &str = "scenario.json";
const TRUTH_FILE: &str = "truth.csv";
const TRUTH_COLUMNS: &str = "block,snapshot,source,theta_deg";
const BLOCK_LAYOUT: &str = "one row per sensor (0..N-1); columns re_1,im_1,...,re_L,im_L by snapshot";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: ScenarioConfig,
    noise_variance: f64,
    num_sensors: usize,
    snapshots_per_block: usize,
    num_blocks: usize,
    block_layout: String,
    block_files: Vec<String>,
    truth_file: String,
    truth_columns: String,
}

fn block_file(b: usize) -> String {
    format!("block_{b:04}.csv")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_scenario(dir: &Path, scenario: &Scenario) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = &scenario.config;
    let header = Header {
        format: SCENARIO_FORMAT.to_string(),
        config: cfg.clone(),
        noise_variance: cfg.noise_variance(),
        num_sensors: cfg.geometry.num_sensors(),
        snapshots_per_block: cfg.snapshots_per_block,
        num_blocks: scenario.blocks.len(),
        block_layout: BLOCK_LAYOUT.to_string(),
        block_files: (0..scenario.blocks.len()).map(block_file).collect(),
        truth_file: TRUTH_FILE.to_string(),
        truth_columns: TRUTH_COLUMNS.to_string(),
    };
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    write_file(&dir.join(HEADER_FILE), &(json + "\n"))?;

    for (b, block) in scenario.blocks.iter().enumerate() {
        let y = block.data();
        let mut out = String::new();
        let cols: Vec<String> = (1..=y.ncols())
            .flat_map(|l| [format!("re_{l}"), format!("im_{l}")])
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for n in 0..y.nrows() {
            for l in 0..y.ncols() {
                let v = y[(n, l)];
                if l > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{},{}", v.re, v.im);
            }
            out.push('\n');
        }
        write_file(&dir.join(block_file(b)), &out)?;
    }

    let mut out = String::from(TRUTH_COLUMNS);
    out.push('\n');
    for b in 0..scenario.truth.num_blocks() {
        for (k, doas) in scenario.truth.block(b).iter().enumerate() {
            for (l, theta) in doas.iter().enumerate() {
                let _ = writeln!(out, "{b},{},{k},{theta}", l + 1);
            }
        }
    }
    write_file(&dir.join(TRUTH_FILE), &out)
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        reason: format!("not a number: {field:?}"),
    })
}

fn parse_usize(path: &Path, line: usize, field: &str) -> Result<usize> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        reason: format!("not a non-negative integer: {field:?}"),
    })
}

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn read_block(path: &Path, n: usize, len: usize, index: usize) -> Result<SnapshotBlock> {
    let text = read_file(path)?;
    let mut y = CMatrix::zeros(n, len);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(parse_error(path, i + 1, format!("more than {n} sensor rows")));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 * len {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected {} columns, found {}", 2 * len, fields.len()),
            ));
        }
        for l in 0..len {
            y[(rows, l)] = C64::new(
                parse_f64(path, i + 1, fields[2 * l])?,
                parse_f64(path, i + 1, fields[2 * l + 1])?,
            );
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_error(path, rows + 1, format!("expected {n} sensor rows, found {rows}")));
    }
    Ok(SnapshotBlock::new(y, index))
}

fn read_truth(path: &Path, blocks: usize, sources: usize, len: usize) -> Result<TruthTable> {
    let text = read_file(path)?;
    let mut doas = vec![vec![vec![f64::NAN; len]; sources]; blocks];
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(parse_error(path, i + 1, format!("expected 4 columns ({TRUTH_COLUMNS})")));
        }
        let (b, l, k) = (
            parse_usize(path, i + 1, f[0])?,
            parse_usize(path, i + 1, f[1])?,
            parse_usize(path, i + 1, f[2])?,
        );
        if b >= blocks || k >= sources || l == 0 || l > len {
            return Err(parse_error(path, i + 1, "index out of range"));
        }
        doas[b][k][l - 1] = parse_f64(path, i + 1, f[3])?;
    }
    if doas.iter().flatten().flatten().any(|v| v.is_nan()) {
        return Err(parse_error(path, 0, "truth table is incomplete"));
    }
    TruthTable::from_blocks(doas)
}

/// Reads a directory written by [`write_scenario`].
pub fn read_scenario(dir: &Path) -> Result<Scenario> {
    let header_path = dir.join(HEADER_FILE);
    let header: Header = serde_json::from_str(&read_file(&header_path)?).map_err(|e| Error::Json {
        path: header_path.display().to_string(),
        source: e,
    })?;
    if header.format != SCENARIO_FORMAT {
        return Err(Error::validation(
            "format",
            format!("expected {SCENARIO_FORMAT}, found {}", header.format),
        ));
    }
    header.config.validate()?;
    let n = header.config.geometry.num_sensors();
    let len = header.config.snapshots_per_block;
    if header.num_sensors != n || header.snapshots_per_block != len {
        return Err(Error::validation("scenario.json", "dimensions disagree with config"));
    }
    let blocks = header
        .block_files
        .iter()
        .enumerate()
        .map(|(b, f)| read_block(&dir.join(f), n, len, b))
        .collect::<Result<Vec<_>>>()?;
    let truth = read_truth(
        &dir.join(&header.truth_file),
        blocks.len(),
        header.config.num_sources(),
        len,
    )?;
    Ok(Scenario {
        config: header.config,
        blocks,
        truth,
    })
}
