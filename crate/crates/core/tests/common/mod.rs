#![allow(dead_code)]

use proptest::prelude::*;
use switcheff::topology::{build_rail, build_torus, GpuId, NodeKind, RailParams, RouteMode, Topology, TorusParams};
use switcheff::traffic::FlowSet;

/// Checks that every switch forwards exactly what it takes in, using the
/// explicit paths of `flows`. A GPU in the middle of a path relays bytes
/// back into the fabric; a path ending at a switch delivers to that
/// switch's GPU. Returns per-port bytes implied by the paths.
pub fn check_switch_conservation(t: &Topology, flows: &FlowSet, mode: RouteMode) -> Result<Vec<f64>, String> {
    let links = t.links();
    let nodes = t.nodes();
    let mut inflow = vec![0.0; nodes.len()];
    let mut outflow = vec![0.0; nodes.len()];
    let mut ports = vec![0.0; t.port_count()];
    for c in &flows.classes {
        let paths = t.paths(c.src, c.dst, mode).map_err(|e| e.to_string())?;
        let w_sum: f64 = paths.iter().map(|p| p.weight).sum();
        if c.src != c.dst && (w_sum - 1.0).abs() > 1e-12 {
            return Err(format!("weights of {}->{} sum to {w_sum}", c.src, c.dst));
        }
        for p in &paths {
            let b = c.volume * c.multiplicity as f64 * p.weight;
            for (i, &port) in p.ports.iter().enumerate() {
                let l = links[port];
                if i == 0 {
                    inflow[l.src] += b;
                } else {
                    let prev = links[p.ports[i - 1]];
                    if prev.dst != l.src {
                        if nodes[prev.dst] != NodeKind::Gpu {
                            return Err(format!("path of {}->{} breaks at port {port}", c.src, c.dst));
                        }
                        inflow[l.src] += b;
                    }
                }
                outflow[l.src] += b;
                ports[port] += b;
                if nodes[l.dst] != NodeKind::Gpu {
                    inflow[l.dst] += b;
                }
            }
            if let Some(&last) = p.ports.last() {
                let l = links[last];
                if nodes[l.dst] != NodeKind::Gpu {
                    outflow[l.dst] += b;
                }
            }
        }
    }
    for (v, kind) in nodes.iter().enumerate() {
        if *kind == NodeKind::Gpu {
            continue;
        }
        let (i, o) = (inflow[v], outflow[v]);
        if (i - o).abs() > 1e-9 * i.max(1.0) {
            return Err(format!("switch {v} ({kind:?}) takes in {i} but forwards {o}"));
        }
    }
    Ok(ports)
}

/// Small fabrics of at most 64 GPUs.
pub fn toy_topology() -> impl Strategy<Value = Topology> {
    let torus = (1usize..=4, 1usize..=4, 1usize..=4)
        .prop_filter("two or more GPUs", |(x, y, z)| x * y * z >= 2)
        .prop_map(|(x, y, z)| build_torus(x * y * z, &TorusParams::new([x, y, z])).unwrap());
    let rail = (0usize..3, 1usize..=2, 0usize..3, prop::sample::select(vec![4usize, 8, 16]), 1usize..=2).prop_filter_map(
        "valid rail toy",
        |(servers_log, rails_log, split_log, radix, planes)| {
            let rails = 1 << rails_log;
            let server = rails << split_log;
            let n = server << (servers_log + 1);
            if n > 64 {
                return None;
            }
            let params = RailParams {
                gpus_per_server: server,
                rail_count: Some(rails),
                switch_radix: radix,
                plane_count: planes,
                ..RailParams::default()
            };
            build_rail(n, &params).ok()
        },
    );
    prop_oneof![torus, rail]
}

pub fn route_mode() -> impl Strategy<Value = RouteMode> {
    prop_oneof![Just(RouteMode::Shortest), Just(RouteMode::Unidirectional)]
}

/// Distinct members drawn from `0..n`, in random order.
pub fn group_of(n: usize) -> impl Strategy<Value = Vec<GpuId>> {
    Just((0..n).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_flat_map(move |v| (2usize..=n.max(2)).prop_map(move |k| v[..k.min(v.len())].to_vec()))
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
