//! Topology text files: one directive per line, joint indices 0-based.
//!
//! ```text
//! edge 5 7
//! roi_joint 5
//! hand_joint 9
//! head_joint 0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use driver_wm_core::topology::Topology;

use crate::error::{self, Error, FormatError, Result};

pub fn parse_topology(text: &str, k: usize) -> Result<Topology, FormatError> {
    let (mut edges, mut roi, mut hands, mut head) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |message: String| FormatError::Text { line: i + 1, message };
        let words: Vec<&str> = line.split_whitespace().collect();
        let nums = words[1..]
            .iter()
            .map(|w| w.parse::<usize>().map_err(|_| fail(format!("`{}` is not a joint index", w))))
            .collect::<Result<Vec<_>, _>>()?;
        let arity = if words[0] == "edge" { 2 } else { 1 };
        if nums.len() != arity {
            return Err(fail(format!("`{}` takes {} joint indices", words[0], arity)));
        }
        match words[0] {
            "edge" => edges.push((nums[0], nums[1])),
            "roi_joint" => roi.push(nums[0]),
            "hand_joint" => hands.push(nums[0]),
            "head_joint" => head.push(nums[0]),
            other => return Err(fail(format!("unknown directive `{}`", other))),
        }
    }
    Topology::new(k, edges, roi, hands, head).map_err(|e| FormatError::Header(e.to_string()))
}

pub fn topology_text(t: &Topology) -> String {
    let mut s = String::new();
    for &(i, j) in t.edges() {
        let _ = writeln!(s, "edge {} {}", i, j);
    }
    for (kw, group) in [("roi_joint", t.roi_joints()), ("hand_joint", t.hand_joints()), ("head_joint", t.head_joints())] {
        for j in group {
            let _ = writeln!(s, "{} {}", kw, j);
        }
    }
    s
}

pub fn load_topology(path: &Path, k: usize) -> Result<Topology> {
    parse_topology(&error::read_text(path)?, k).map_err(|e| Error::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_round_trips() {
        for k in [1, 5, 17, 30] {
            let t = Topology::toy(k);
            assert_eq!(parse_topology(&topology_text(&t), k).unwrap(), t);
        }
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(parse_topology("edge 1\n", 4), Err(FormatError::Text { line: 1, .. })));
        assert!(matches!(parse_topology("# c\nbone 1 2\n", 4), Err(FormatError::Text { line: 2, .. })));
        assert!(matches!(parse_topology("edge 0 9\n", 4), Err(FormatError::Header(_))));
    }
}
