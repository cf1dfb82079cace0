//! Closed-form bottleneck cases checked against the simulator.

use serde::Serialize;

use crate::error::Result;
use crate::flow::evaluate_workload;
use crate::metrics::{MetricsRecord, PrimitiveKind};
use crate::topology::{build_rail, build_torus, GpuId, RailParams, RouteMode, Topology, TorusParams};
use crate::traffic::{expand_a2a, expand_p2p, expand_ring_collective, A2aDirection, Phase, PhaseTag, PrimitiveInstance, Traffic, Unit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    /// `exact` checks need relative error below 1e-12; `at-least` checks
    /// need `actual >= expected`.
    pub rule: &'static str,
    pub pass: bool,
}

fn exact(name: String, expected: f64, actual: f64) -> OracleCheck {
    let pass = (actual - expected).abs() <= 1e-12 * expected.abs().max(1.0);
    OracleCheck {
        name,
        expected,
        actual,
        rule: "exact",
        pass,
    }
}

fn at_least(name: String, expected: f64, actual: f64) -> OracleCheck {
    OracleCheck {
        name,
        expected,
        actual,
        rule: "at-least",
        pass: actual >= expected,
    }
}

fn ring_unit(kind: PrimitiveKind, group: &[GpuId], d: f64, tag: PhaseTag) -> Unit {
    Unit {
        primitives: vec![PrimitiveInstance {
            kind,
            group: group.to_vec(),
            tensor_size: d,
            routed_experts: 1,
            tag,
        }],
        traffic: Traffic::Flows(expand_ring_collective(kind, group, d)),
    }
}

fn single(topo: &Topology, tag: PhaseTag, mode: RouteMode, units: Vec<Unit>) -> Result<MetricsRecord> {
    Ok(evaluate_workload(topo, &[Phase { tag, mode, units }])?.record)
}

fn p2p_unit(src: GpuId, dst: GpuId, d: f64) -> Unit {
    Unit {
        primitives: vec![PrimitiveInstance {
            kind: PrimitiveKind::PointToPoint,
            group: vec![src, dst],
            tensor_size: d,
            routed_experts: 1,
            tag: PhaseTag::Pp,
        }],
        traffic: Traffic::Flows(expand_p2p(src, dst, d)),
    }
}

/// Two-tier rail toy: 2-GPU servers, radix 8, so each rail spans four
/// leaves of four servers.
pub fn two_tier_toy() -> Result<Topology> {
    let params = RailParams {
        gpus_per_server: 2,
        ..RailParams::with_radix(8)
    };
    build_rail(32, &params)
}

/// Runs every closed-form case.
pub fn run_oracles() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    let d = 1.0e9;
    let server = build_rail(8, &RailParams::default())?;
    for n in [2usize, 4, 8] {
        let g: Vec<GpuId> = (0..n).collect();
        let rs = single(&server, PhaseTag::Dp, RouteMode::Shortest, vec![ring_unit(PrimitiveKind::ReduceScatter, &g, d, PhaseTag::Dp)])?;
        out.push(exact(format!("ring reduce-scatter gamma n={n}"), 1.0 / (n as f64 - 1.0), rs.gamma));
        let ar = single(&server, PhaseTag::Dp, RouteMode::Shortest, vec![ring_unit(PrimitiveKind::AllReduce, &g, d, PhaseTag::Dp)])?;
        out.push(exact(
            format!("ring all-reduce gamma n={n}"),
            n as f64 / (2.0 * (n as f64 - 1.0)),
            ar.gamma,
        ));
    }
    let g: Vec<GpuId> = (0..8).collect();
    for k_r in [1usize, 2, 4] {
        let c = single(
            &server,
            PhaseTag::EpCombine,
            RouteMode::Shortest,
            vec![expand_a2a(&g, d, k_r, A2aDirection::Combine, PhaseTag::EpCombine)],
        )?;
        out.push(exact(format!("all-to-all combine gamma k_r={k_r}"), 1.0 / k_r as f64, c.gamma));
    }

    let toy = two_tier_toy()?;
    // GPUs 0 and 8 share rail 0 but sit under different leaves
    let lsl = single(&toy, PhaseTag::Pp, RouteMode::Shortest, vec![p2p_unit(0, 8, d)])?;
    out.push(exact("leaf-spine-leaf delta".into(), 1.0 / 3.0, lsl.delta));
    let intra = single(&toy, PhaseTag::Pp, RouteMode::Shortest, vec![p2p_unit(0, 1, d)])?;
    out.push(exact("intra-server delta".into(), 1.0, intra.delta));

    let torus = build_torus(8, &TorusParams::new([8, 1, 1]))?;
    let tp = single(&torus, PhaseTag::Tp, RouteMode::Shortest, vec![ring_unit(PrimitiveKind::AllReduce, &g, d, PhaseTag::Tp)])?;
    out.push(exact("torus TP ring theta_spatial".into(), 2.0 / 6.0, tp.theta_spatial));
    out.push(at_least("torus TP ring theta_temporal".into(), 0.99, tp.theta_temporal));
    Ok(out)
}
