//! Plain-text descriptor dump: one record per line,
//! `x y scale strength orientation` followed by the 64 descriptor values,
//! space separated, 9 significant digits.

use std::io::{BufRead, Write};

use super::{Descriptor, DESCRIPTOR_LEN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRecord {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub strength: f64,
    pub orientation: f64,
    pub values: [f64; DESCRIPTOR_LEN],
}

fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_dump<W: Write>(mut out: W, descriptors: &[Descriptor]) -> Result<()> {
    for d in descriptors {
        let p = &d.point;
        let mut fields: Vec<String> = [p.x, p.y, p.scale, p.strength, p.orientation].iter().map(|&v| sig9(v)).collect();
        fields.extend(d.values.iter().map(|&v| sig9(v)));
        writeln!(out, "{}", fields.join(" "))?;
    }
    Ok(())
}

pub fn read_dump<R: BufRead>(input: R) -> Result<Vec<DumpRecord>> {
    let bad = |line: usize, detail: String| Error::ArtifactFormat { what: format!("descriptor dump line {line}"), detail };
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let nums = line
            .split_ascii_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| bad(i + 1, format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if nums.len() != 5 + DESCRIPTOR_LEN {
            return Err(bad(i + 1, format!("expected {} fields, got {}", 5 + DESCRIPTOR_LEN, nums.len())));
        }
        let mut values = [0.0; DESCRIPTOR_LEN];
        values.copy_from_slice(&nums[5..]);
        out.push(DumpRecord { x: nums[0], y: nums[1], scale: nums[2], strength: nums[3], orientation: nums[4], values });
    }
    Ok(out)
}
