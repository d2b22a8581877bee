//! Position-exact parser for the V2000 MOL/SDF subset: counts line, atom
//! block (element symbol), bond block (orders 1/2/3). Records carrying
//! unsupported elements or features are skipped with a reason; structural
//! damage is a hard error with a line number.

use dgdm_core::graph::Graph;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SdfError {
    #[error("line {line}: malformed counts line")]
    MalformedCountsLine { line: usize },
    #[error("line {line}: truncated block (expected {expected} more lines)")]
    TruncatedBlock { line: usize, expected: usize },
}

/// Element symbols in node-type order plus the edge-type count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SdfTypeTable {
    pub elements: Vec<String>,
    pub edge_types: usize,
}

impl Default for SdfTypeTable {
    fn default() -> Self {
        Self {
            elements: ["C", "N", "O", "F"].iter().map(|s| s.to_string()).collect(),
            edge_types: 4,
        }
    }
}

impl SdfTypeTable {
    fn element_index(&self, symbol: &str) -> Option<usize> {
        self.elements.iter().position(|e| e == symbol)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipEntry {
    pub record: usize,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfParse {
    pub graphs: Vec<Graph>,
    pub skipped: Vec<SkipEntry>,
}

/// Fixed-column field as trimmed text; byte-based so arbitrary input can
/// never split a multi-byte char.
fn field(line: &[u8], start: usize, end: usize) -> String {
    let len = line.len();
    if start >= len {
        return String::new();
    }
    String::from_utf8_lossy(&line[start..end.min(len)]).trim().to_string()
}

fn parse_count(s: &str) -> Option<usize> {
    if s.is_empty() {
        return None;
    }
    s.parse::<usize>().ok()
}

fn trimmed(line: &[u8]) -> String {
    String::from_utf8_lossy(line).trim_end().to_string()
}

pub fn parse_sdf_subset(bytes: &[u8], table: &SdfTypeTable) -> Result<SdfParse, SdfError> {
    let lines: Vec<&[u8]> = bytes
        .split(|&b| b == b'\n')
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .collect();
    // A trailing newline yields one empty trailing line; drop it.
    let lines: Vec<&[u8]> = if lines.last().is_some_and(|l| l.is_empty()) {
        lines[..lines.len() - 1].to_vec()
    } else {
        lines
    };
    let mut graphs = Vec::new();
    let mut skipped = Vec::new();
    let mut pos = 0usize; // 0-based index into `lines`
    let mut record = 0usize;

    while pos < lines.len() {
        // Stop at trailing blank lines.
        if lines[pos..].iter().all(|l| trimmed(l).is_empty()) {
            break;
        }
        record += 1;
        // Header: title, program, comment.
        if pos + 3 >= lines.len() {
            return Err(SdfError::TruncatedBlock { line: lines.len(), expected: pos + 4 - lines.len() });
        }
        let counts_idx = pos + 3;
        let counts = lines[counts_idx];
        let natoms = parse_count(&field(counts, 0, 3));
        let nbonds = parse_count(&field(counts, 3, 6));
        let version_ok =
            field(counts, 34, 39) == "V2000" || trimmed(counts).ends_with("V2000");
        let (natoms, nbonds) = match (natoms, nbonds, version_ok) {
            (Some(a), Some(b), true) => (a, b),
            _ => return Err(SdfError::MalformedCountsLine { line: counts_idx + 1 }),
        };

        let atoms_start = counts_idx + 1;
        let bonds_start = atoms_start + natoms;
        let block_end = bonds_start + nbonds;
        if block_end > lines.len() {
            return Err(SdfError::TruncatedBlock {
                line: lines.len(),
                expected: block_end - lines.len(),
            });
        }

        let mut skip_reason: Option<(usize, String)> = None;
        let mut node_types = Vec::with_capacity(natoms);
        for k in 0..natoms {
            let line = lines[atoms_start + k];
            let symbol = field(line, 31, 34);
            if symbol.is_empty() {
                skip_reason = Some((atoms_start + k + 1, "missing element symbol".to_string()));
                break;
            }
            match table.element_index(&symbol) {
                Some(t) => node_types.push(t),
                None => {
                    skip_reason =
                        Some((atoms_start + k + 1, format!("unsupported element {symbol:?}")));
                    break;
                }
            }
        }

        let mut edges = Vec::with_capacity(nbonds);
        if skip_reason.is_none() {
            for k in 0..nbonds {
                let line = lines[bonds_start + k];
                let a1 = parse_count(&field(line, 0, 3));
                let a2 = parse_count(&field(line, 3, 6));
                let bt = parse_count(&field(line, 6, 9));
                match (a1, a2, bt) {
                    (Some(a1), Some(a2), Some(bt)) => {
                        if !(1..=3).contains(&bt) || bt >= table.edge_types {
                            skip_reason = Some((
                                bonds_start + k + 1,
                                format!("unsupported bond type {bt}"),
                            ));
                            break;
                        }
                        if a1 == 0 || a2 == 0 || a1 > natoms || a2 > natoms || a1 == a2 {
                            skip_reason = Some((
                                bonds_start + k + 1,
                                format!("bond endpoints {a1}-{a2} out of range"),
                            ));
                            break;
                        }
                        let (i, j) = ((a1 - 1).min(a2 - 1), (a1 - 1).max(a2 - 1));
                        edges.push((i, j, bt));
                    }
                    _ => {
                        skip_reason =
                            Some((bonds_start + k + 1, "malformed bond line".to_string()));
                        break;
                    }
                }
            }
        }

        // Advance to the record terminator: "M  END" then "$$$$" (data items
        // between them are ignored). EOF after the blocks is accepted.
        let mut cursor = block_end;
        while cursor < lines.len() && trimmed(lines[cursor]) != "M  END" {
            // Property lines (e.g. "M  CHG") are allowed before M END.
            if trimmed(lines[cursor]) == "$$$$" {
                break;
            }
            cursor += 1;
        }
        while cursor < lines.len() && trimmed(lines[cursor]) != "$$$$" {
            cursor += 1;
        }
        let next_record = if cursor < lines.len() { cursor + 1 } else { lines.len() };

        match skip_reason {
            Some((line, reason)) => skipped.push(SkipEntry { record, line, reason }),
            None => {
                match Graph::from_edges(table.elements.len(), table.edge_types, node_types, &edges) {
                    Ok(g) => graphs.push(g),
                    Err(e) => skipped.push(SkipEntry {
                        record,
                        line: counts_idx + 1,
                        reason: format!("inconsistent record: {e}"),
                    }),
                }
            }
        }
        pos = next_record;
    }

    Ok(SdfParse { graphs, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mol_block(atoms: &[&str], bonds: &[(usize, usize, usize)]) -> String {
        let mut s = String::new();
        s.push_str("test molecule\n  program\ncomment\n");
        s.push_str(&format!(
            "{:3}{:3}  0  0  0  0  0  0  0  0999 V2000\n",
            atoms.len(),
            bonds.len()
        ));
        for sym in atoms {
            s.push_str(&format!(
                "    0.0000    0.0000    0.0000 {:<3} 0  0  0  0  0  0  0  0  0  0  0  0\n",
                sym
            ));
        }
        for &(a1, a2, bt) in bonds {
            s.push_str(&format!("{:3}{:3}{:3}  0  0  0  0\n", a1, a2, bt));
        }
        s.push_str("M  END\n$$$$\n");
        s
    }

    #[test]
    fn parses_two_atom_single_bond() {
        let block = mol_block(&["C", "O"], &[(1, 2, 1)]);
        let parse = parse_sdf_subset(block.as_bytes(), &SdfTypeTable::default()).unwrap();
        assert_eq!(parse.graphs.len(), 1);
        assert!(parse.skipped.is_empty());
        let g = &parse.graphs[0];
        assert_eq!(g.n(), 2);
        assert_eq!(g.node_type(0), 0);
        assert_eq!(g.node_type(1), 2);
        assert_eq!(g.edge_type(0, 1), 1);
    }

    #[test]
    fn empty_input_is_empty_output() {
        let parse = parse_sdf_subset(b"", &SdfTypeTable::default()).unwrap();
        assert!(parse.graphs.is_empty());
        assert!(parse.skipped.is_empty());
    }

    #[test]
    fn unsupported_element_is_skipped_with_reason() {
        let good = mol_block(&["C"], &[]);
        let bad = mol_block(&["Si"], &[]);
        let both = format!("{bad}{good}");
        let parse = parse_sdf_subset(both.as_bytes(), &SdfTypeTable::default()).unwrap();
        assert_eq!(parse.graphs.len(), 1);
        assert_eq!(parse.skipped.len(), 1);
        assert_eq!(parse.skipped[0].record, 1);
        assert!(parse.skipped[0].reason.contains("Si"));
    }

    #[test]
    fn malformed_counts_line_carries_line_number() {
        let text = "title\nprog\ncomment\nnot a counts line\n";
        assert_eq!(
            parse_sdf_subset(text.as_bytes(), &SdfTypeTable::default()),
            Err(SdfError::MalformedCountsLine { line: 4 })
        );
    }

    #[test]
    fn truncated_atom_block_is_an_error() {
        let text = "title\nprog\ncomment\n  3  0  0  0  0  0  0  0  0  0999 V2000\n    0.0 0.0 0.0 C\n";
        assert!(matches!(
            parse_sdf_subset(text.as_bytes(), &SdfTypeTable::default()),
            Err(SdfError::TruncatedBlock { .. })
        ));
    }

    #[test]
    fn aromatic_bond_type_is_skipped() {
        let block = mol_block(&["C", "C"], &[(1, 2, 4)]);
        let parse = parse_sdf_subset(block.as_bytes(), &SdfTypeTable::default()).unwrap();
        assert!(parse.graphs.is_empty());
        assert!(parse.skipped[0].reason.contains("bond type 4"));
    }

    #[test]
    fn self_bond_is_skipped() {
        let block = mol_block(&["C", "C"], &[(1, 1, 1)]);
        let parse = parse_sdf_subset(block.as_bytes(), &SdfTypeTable::default()).unwrap();
        assert!(parse.graphs.is_empty());
        assert_eq!(parse.skipped.len(), 1);
    }
}
