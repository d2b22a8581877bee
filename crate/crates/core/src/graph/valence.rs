//! Valence bookkeeping for the validity metric.
//!
//! Bond orders are stored in half-units (aromatic = 3 half-units) so the
//! valence comparison is exact integer arithmetic, no float tolerance.

use super::{Graph, GraphError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceTable {
    /// Max valence per node type, in half-units.
    max_valence_x2: Vec<u32>,
    /// Bond order per edge type, in half-units. Index 0 is the no-edge type.
    order_x2: Vec<u32>,
}

impl ValenceTable {
    pub fn new(max_valence_x2: Vec<u32>, order_x2: Vec<u32>) -> Result<Self, GraphError> {
        if order_x2.first() != Some(&0) {
            return Err(GraphError::InvalidTrigger("edge type 0 must carry order 0".into()));
        }
        Ok(Self { max_valence_x2, order_x2 })
    }

    /// C, N, O, F with max valences 4, 3, 2, 1 and bond orders
    /// none/single/double/triple (plus aromatic as 1.5 when `d == 5`).
    pub fn qm9(d: usize) -> Result<Self, GraphError> {
        let orders = match d {
            4 => vec![0, 2, 4, 6],
            5 => vec![0, 2, 4, 6, 3],
            _ => {
                return Err(GraphError::DimensionMismatch(format!(
                    "qm9 table supports d = 4 or 5, got {d}"
                )))
            }
        };
        Self::new(vec![8, 6, 4, 2], orders)
    }

    pub fn node_type_count(&self) -> usize {
        self.max_valence_x2.len()
    }

    pub fn edge_type_count(&self) -> usize {
        self.order_x2.len()
    }

    pub fn max_valence_x2(&self, node_type: usize) -> Option<u32> {
        self.max_valence_x2.get(node_type).copied()
    }

    pub fn order_x2(&self, edge_type: usize) -> Option<u32> {
        self.order_x2.get(edge_type).copied()
    }
}

/// True iff every node's total incident bond order stays within its type's
/// max valence. The deficit is implicitly filled with hydrogens, so an
/// isolated carbon is CH4 and valid.
pub fn is_valid_molecule(g: &Graph, vt: &ValenceTable) -> Result<bool, GraphError> {
    let n = g.n();
    for i in 0..n {
        let cap = vt
            .max_valence_x2(g.node_type(i))
            .ok_or(GraphError::UnknownType(g.node_type(i)))?;
        let mut used: u32 = 0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let e = g.edge_type(i, j);
            let order = vt.order_x2(e).ok_or(GraphError::UnknownType(e))?;
            used += order;
        }
        if used > cap {
            return Ok(false);
        }
    }
    Ok(true)
}
