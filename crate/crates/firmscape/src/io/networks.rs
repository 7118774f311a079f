use std::path::Path;

use firmscape_core::geometry::Coord;
use firmscape_core::survey::{EdgeSpec, Node, SampleOrigin, SamplePlan, StreetNetwork};
use serde::{Deserialize, Serialize};

use super::{close_csv, csv_writer, num, read_json, write_json, write_row};
use crate::error::Result;

/// `{"nodes": [{"id", "x", "y"}], "edges": [{"from", "to", "polyline", "length"?}]}`
///
/// `polyline` may hold only the intermediate vertices or the full geometry
/// including both end nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub nodes: Vec<Node>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: u64,
    pub to: u64,
    #[serde(default)]
    pub polyline: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

impl NetworkDocument {
    pub fn into_network(self) -> Result<StreetNetwork> {
        let edges = self
            .edges
            .into_iter()
            .map(|e| EdgeSpec {
                from: e.from,
                to: e.to,
                polyline: e.polyline.into_iter().map(|[x, y]| Coord::new(x, y)).collect(),
                length: e.length,
            })
            .collect();
        Ok(StreetNetwork::new(self.nodes, edges)?)
    }

    pub fn from_network(net: &StreetNetwork) -> Self {
        let nodes = net.nodes().to_vec();
        let edges = net
            .edges()
            .iter()
            .map(|e| EdgeRecord {
                from: nodes[e.from].id,
                to: nodes[e.to].id,
                polyline: e.polyline.iter().map(|c| [c.x, c.y]).collect(),
                length: Some(e.length),
            })
            .collect();
        NetworkDocument { nodes, edges }
    }
}

pub fn read_network(path: &Path) -> Result<StreetNetwork> {
    read_json::<NetworkDocument>(path)?.into_network()
}

pub fn write_network(path: &Path, net: &StreetNetwork) -> Result<()> {
    write_json(path, &NetworkDocument::from_network(net))
}

/// `x,y,kind,node,edge,offset`; crossings fill `node`, interior points fill `edge` and `offset`.
pub fn write_sample_plan(path: &Path, plan: &SamplePlan) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, ["x", "y", "kind", "node", "edge", "offset"])?;
    for p in &plan.points {
        let (kind, node, edge, offset) = match p.origin {
            SampleOrigin::Crossing { node } => ("crossing", node.to_string(), String::new(), String::new()),
            SampleOrigin::Interior { edge, offset } => ("interior", String::new(), edge.to_string(), num(offset)),
        };
        write_row(path, &mut w, [num(p.x), num(p.y), kind.to_string(), node, edge, offset])?;
    }
    close_csv(path, w)
}
