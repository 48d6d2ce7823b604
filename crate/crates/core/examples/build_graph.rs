//! Flows as a directed multigraph: hosts are nodes, every flow is an edge.

use flowsage::netgraph::{build_graph, computation_subgraph, NodeId};
use flowsage::synthgen::{generate, AttackKind, Preset};

fn main() -> flowsage::Result<()> {
    let (flows, truth) = generate(&Preset::Small.config(2))?;
    let g = build_graph(&flows)?;
    println!("{} nodes, {} edges, {} self-loops", g.node_count(), g.edge_count(), g.loop_count());
    println!("label counts: {:?}", g.label_counts());

    let busiest = (0..g.node_count()).map(NodeId).max_by_key(|&v| g.degree(v)).expect("non-empty graph");
    println!("busiest host {} with degree {}", g.node_key(busiest), g.degree(busiest));

    let bot = truth.flows_of(AttackKind::Bot)[0];
    let e = g.edge_by_flow(bot).expect("bot flow is in the graph");
    let sub = computation_subgraph(&g, e, 1);
    let bots = sub.iter().filter(|&&s| g.edge(s).label.as_ref().map(|l| l.as_str()) == Some("Bot")).count();
    println!("bot flow {bot}: 1-hop computation subgraph has {} edges, {bots} of them Bot", sub.len());
    Ok(())
}
