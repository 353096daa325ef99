//! Geometric span check and load surrogate for bridge tasks.
//!
//! The gap runs along the north-south (y) axis: terrain region A occupies
//! y >= gap/2, region B occupies y <= -gap/2, both with their tops at the
//! terrain height. Spanning requires bearing blocks on both regions at a
//! common deck level, a block under the cargo drop point, and a connected
//! block path across the gap. Load capacity is the connection-strength
//! weighted min cut separating the two bearing sets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ConnectorKind};
use crate::geometry::Vec3;
use crate::scene::{BlockId, Scene};

/// Tunables of the support surrogate. Strengths are engine constants, not
/// measured game values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupportParams {
    /// Width of the gap along y.
    pub gap_width: f64,
    /// Minimum overlap depth onto a terrain region for a block to bear on it.
    pub min_bearing: f64,
    /// Maximum bottom-height difference between the two bearing sets, and the
    /// band above the lowest bearing block that still counts as bearing.
    pub deck_tolerance: f64,
    /// Cargo footprint [x, y] centered on the drop point (0, 0).
    pub cargo_footprint: [f64; 2],
    /// Load units carried per attachment edge in the cut.
    pub attachment_strength: f64,
    /// Load units carried per brace edge in the cut.
    pub brace_strength: f64,
    /// Load units carried per winch (rope) edge in the cut.
    pub winch_strength: f64,
}

impl Default for SupportParams {
    fn default() -> Self {
        SupportParams {
            gap_width: 5.0,
            min_bearing: 0.5,
            deck_tolerance: 0.5,
            cargo_footprint: [2.5, 2.5],
            attachment_strength: 10.0,
            brace_strength: 10.0,
            winch_strength: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportOutcome {
    pub spans: bool,
    /// Min-cut load capacity; zero unless the structure spans.
    pub load_capacity: f64,
    pub bearing_north: Vec<BlockId>,
    pub bearing_south: Vec<BlockId>,
}

/// Sentinel capacity when one block bears on both sides (monolithic span).
const MONOLITHIC_CAPACITY: f64 = 1e6;

pub fn evaluate_support(
    catalog: &Catalog,
    scene: &Scene,
    params: &SupportParams,
) -> SupportOutcome {
    let gap_half = params.gap_width / 2.0;
    let volumes = scene.all_volumes(catalog);

    // Per-block projected y-interval, x-interval, and bottom z.
    struct Extent {
        y: (f64, f64),
        x: (f64, f64),
        bottom: f64,
    }
    let mut extents: BTreeMap<BlockId, Extent> = BTreeMap::new();
    for (id, volume) in &volumes {
        let y = volume.projected_interval(Vec3::Y);
        let x = volume.projected_interval(Vec3::X);
        let bottom = volume.min_z();
        extents
            .entry(*id)
            .and_modify(|e| {
                e.y = (e.y.0.min(y.0), e.y.1.max(y.1));
                e.x = (e.x.0.min(x.0), e.x.1.max(x.1));
                e.bottom = e.bottom.min(bottom);
            })
            .or_insert(Extent { y, x, bottom });
    }

    let overlap_depth_north = |e: &Extent| (e.y.1 - e.y.0.max(gap_half)).max(0.0);
    let overlap_depth_south = |e: &Extent| (e.y.1.min(-gap_half) - e.y.0).max(0.0);

    let mut north: Vec<BlockId> = extents
        .iter()
        .filter(|(_, e)| overlap_depth_north(e) >= params.min_bearing)
        .map(|(id, _)| *id)
        .collect();
    let mut south: Vec<BlockId> = extents
        .iter()
        .filter(|(_, e)| overlap_depth_south(e) >= params.min_bearing)
        .map(|(id, _)| *id)
        .collect();

    // Only blocks near each side's lowest bearing block actually rest on the
    // terrain.
    let filter_to_deck = |side: &mut Vec<BlockId>| -> Option<f64> {
        let low = side
            .iter()
            .map(|id| extents[id].bottom)
            .fold(f64::INFINITY, f64::min);
        if !low.is_finite() {
            return None;
        }
        side.retain(|id| extents[id].bottom <= low + params.deck_tolerance);
        Some(low)
    };
    let z_north = filter_to_deck(&mut north);
    let z_south = filter_to_deck(&mut south);

    let deck_level = match (z_north, z_south) {
        (Some(a), Some(b)) => (a - b).abs() <= params.deck_tolerance,
        _ => false,
    };

    // The cargo drops at (0, 0); some block must sit under its footprint.
    let half_fx = params.cargo_footprint[0] / 2.0;
    let half_fy = params.cargo_footprint[1] / 2.0;
    let catches_cargo = extents
        .values()
        .any(|e| e.x.0 < half_fx && e.x.1 > -half_fx && e.y.0 < half_fy && e.y.1 > -half_fy);

    let fail = SupportOutcome {
        spans: false,
        load_capacity: 0.0,
        bearing_north: north.clone(),
        bearing_south: south.clone(),
    };
    if north.is_empty() || south.is_empty() || !deck_level || !catches_cargo {
        return fail;
    }

    let north_set: BTreeSet<BlockId> = north.iter().copied().collect();
    let south_set: BTreeSet<BlockId> = south.iter().copied().collect();
    if north_set.intersection(&south_set).next().is_some() {
        return SupportOutcome {
            spans: true,
            load_capacity: MONOLITHIC_CAPACITY,
            bearing_north: north,
            bearing_south: south,
        };
    }

    // Connection graph: attachments plus connectors, weighted separately.
    let mut edges: Vec<(BlockId, BlockId, f64)> = Vec::new();
    for block in scene.blocks() {
        if let Some(mount) = &block.mounted_on {
            edges.push((mount.parent, block.block_id, params.attachment_strength));
        }
    }
    for conn in scene.connectors() {
        let strength = match conn.kind {
            ConnectorKind::Brace => params.brace_strength,
            ConnectorKind::Winch => params.winch_strength,
        };
        edges.push((conn.endpoint_a.0, conn.endpoint_b.0, strength));
    }

    let capacity = max_flow(
        scene.blocks().map(|b| b.block_id),
        &edges,
        &north_set,
        &south_set,
    );
    if capacity <= 0.0 {
        return fail;
    }
    SupportOutcome {
        spans: true,
        load_capacity: capacity,
        bearing_north: north,
        bearing_south: south,
    }
}

/// Edmonds-Karp max flow over an undirected block graph with a super source
/// over `sources` and a super sink over `sinks`.
fn max_flow(
    nodes: impl Iterator<Item = BlockId>,
    edges: &[(BlockId, BlockId, f64)],
    sources: &BTreeSet<BlockId>,
    sinks: &BTreeSet<BlockId>,
) -> f64 {
    let ids: Vec<BlockId> = nodes.collect();
    let index: BTreeMap<BlockId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let n = ids.len() + 2;
    let source = ids.len();
    let sink = ids.len() + 1;

    // Adjacency with residual capacities; undirected edges become a pair of
    // arcs that share nothing (flow may cancel through residuals).
    struct Arc {
        to: usize,
        cap: f64,
        rev: usize,
    }
    let mut graph: Vec<Vec<Arc>> = (0..n).map(|_| Vec::new()).collect();
    let add_edge = |graph: &mut Vec<Vec<Arc>>, a: usize, b: usize, cap_ab: f64, cap_ba: f64| {
        let ra = graph[b].len();
        let rb = graph[a].len();
        graph[a].push(Arc {
            to: b,
            cap: cap_ab,
            rev: ra,
        });
        graph[b].push(Arc {
            to: a,
            cap: cap_ba,
            rev: rb,
        });
    };
    for (a, b, cap) in edges {
        let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) else {
            continue;
        };
        if ia == ib {
            continue;
        }
        add_edge(&mut graph, ia, ib, *cap, *cap);
    }
    for s in sources {
        if let Some(&i) = index.get(s) {
            add_edge(&mut graph, source, i, f64::INFINITY, 0.0);
        }
    }
    for s in sinks {
        if let Some(&i) = index.get(s) {
            add_edge(&mut graph, i, sink, f64::INFINITY, 0.0);
        }
    }

    let mut flow = 0.0;
    loop {
        // BFS for a shortest augmenting path.
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut queue = VecDeque::new();
        queue.push_back(source);
        let mut seen = vec![false; n];
        seen[source] = true;
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            for (ei, arc) in graph[u].iter().enumerate() {
                if !seen[arc.to] && arc.cap > 1e-12 {
                    seen[arc.to] = true;
                    prev[arc.to] = Some((u, ei));
                    queue.push_back(arc.to);
                }
            }
        }
        if !seen[sink] {
            break;
        }
        // Bottleneck along the path.
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while let Some((u, ei)) = prev[v] {
            bottleneck = bottleneck.min(graph[u][ei].cap);
            v = u;
        }
        if !bottleneck.is_finite() || bottleneck <= 1e-12 {
            break;
        }
        let mut v = sink;
        while let Some((u, ei)) = prev[v] {
            let rev = graph[u][ei].rev;
            graph[u][ei].cap -= bottleneck;
            graph[v][rev].cap += bottleneck;
            v = u;
        }
        flow += bottleneck;
        if flow >= MONOLITHIC_CAPACITY {
            return MONOLITHIC_CAPACITY;
        }
    }
    flow
}
