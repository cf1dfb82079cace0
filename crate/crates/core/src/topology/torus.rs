use serde::{Deserialize, Serialize};

use super::{Fabric, GpuId, Link, NodeKind, PortId, RouteMode, Tier, Topology, WeightedPath, GBPS_400};
use crate::error::{Error, Result};

/// Ports per GPU-resident switch: one per direction per dimension.
pub const PORTS_PER_CHIP: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusParams {
    /// Ring length of each dimension. A length of 1 leaves that dimension's
    /// ports unused.
    pub dims: [usize; 3],
    pub base_port_rate: f64,
    /// Extra ports added along one dimension, split evenly between the two
    /// directions and modeled as higher capacity on that dimension's links.
    pub boosted_dim: Option<(usize, usize)>,
}

impl TorusParams {
    pub fn new(dims: [usize; 3]) -> Self {
        TorusParams {
            dims,
            base_port_rate: GBPS_400,
            boosted_dim: None,
        }
    }

    /// Boost `dim` so its links run at `ratio` times the base rate.
    pub fn with_ratio(mut self, dim: usize, ratio: usize) -> Self {
        let extra = 2 * ratio.saturating_sub(1);
        self.boosted_dim = if extra == 0 { None } else { Some((dim, extra)) };
        self
    }

    pub fn dim_rates(&self) -> [f64; 3] {
        let mut rates = [self.base_port_rate; 3];
        if let Some((dim, extra)) = self.boosted_dim {
            rates[dim] *= 1.0 + extra as f64 / 2.0;
        }
        rates
    }
}

/// Most-cubic factorization of `n` into three dimensions, largest first.
pub fn cubic_dims(n: usize) -> [usize; 3] {
    let mut best = [n, 1, 1];
    let mut x = 1;
    while x * x * x <= n {
        if n % x == 0 {
            let rest = n / x;
            let mut y = x;
            while y * y <= rest {
                if rest % y == 0 {
                    let z = rest / y;
                    if z - x < best[0] - best[2] {
                        best = [z, y, x];
                    }
                }
                y += 1;
            }
        }
        x += 1;
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusLayout {
    pub dims: [usize; 3],
    pub rates: [f64; 3],
}

impl TorusLayout {
    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn coords(&self, g: GpuId) -> [usize; 3] {
        let [x, y, _] = self.dims;
        [g % x, (g / x) % y, g / (x * y)]
    }

    pub fn gpu_at(&self, c: [usize; 3]) -> GpuId {
        let [x, y, _] = self.dims;
        c[0] + x * (c[1] + y * c[2])
    }

    /// Port of GPU `g`'s switch toward dimension `dim`, `positive` direction
    /// or not.
    pub fn port(&self, g: GpuId, dim: usize, positive: bool) -> PortId {
        g * PORTS_PER_CHIP + dim * 2 + usize::from(!positive)
    }

    pub fn neighbor(&self, g: GpuId, dim: usize, positive: bool) -> GpuId {
        let mut c = self.coords(g);
        let n = self.dims[dim];
        c[dim] = if positive { (c[dim] + 1) % n } else { (c[dim] + n - 1) % n };
        self.gpu_at(c)
    }

    /// Direction options for travelling from coordinate `from` to `to` along
    /// a ring of length `n`: `(positive, hops, weight)`.
    fn ring_options(n: usize, from: usize, to: usize, mode: RouteMode) -> Vec<(bool, usize, f64)> {
        if from == to {
            return Vec::new();
        }
        let fwd = (to + n - from) % n;
        match mode {
            RouteMode::Unidirectional => vec![(true, fwd, 1.0)],
            RouteMode::Shortest => {
                let bwd = n - fwd;
                if fwd < bwd {
                    vec![(true, fwd, 1.0)]
                } else if bwd < fwd {
                    vec![(false, bwd, 1.0)]
                } else {
                    vec![(true, fwd, 0.5), (false, bwd, 0.5)]
                }
            }
        }
    }

    /// Per-dimension path segments of a dimension-ordered route.
    fn segments(&self, src: GpuId, dst: GpuId, mode: RouteMode) -> Vec<Vec<(Vec<PortId>, f64)>> {
        let target = self.coords(dst);
        let mut cur = self.coords(src);
        let mut out = Vec::new();
        for dim in 0..3 {
            let options = Self::ring_options(self.dims[dim], cur[dim], target[dim], mode);
            if options.is_empty() {
                continue;
            }
            let mut seg = Vec::with_capacity(options.len());
            for (positive, hops, weight) in options {
                let mut g = self.gpu_at(cur);
                let mut ports = Vec::with_capacity(hops);
                for _ in 0..hops {
                    ports.push(self.port(g, dim, positive));
                    g = self.neighbor(g, dim, positive);
                }
                seg.push((ports, weight));
            }
            out.push(seg);
            cur[dim] = target[dim];
        }
        out
    }

    pub(super) fn paths(&self, src: GpuId, dst: GpuId, mode: RouteMode) -> Vec<WeightedPath> {
        let mut paths = vec![WeightedPath {
            ports: Vec::new(),
            weight: 1.0,
        }];
        for seg in self.segments(src, dst, mode) {
            let mut next = Vec::with_capacity(paths.len() * seg.len());
            for p in &paths {
                for (ports, w) in &seg {
                    let mut all = p.ports.clone();
                    all.extend_from_slice(ports);
                    next.push(WeightedPath {
                        ports: all,
                        weight: p.weight * w,
                    });
                }
            }
            paths = next;
        }
        paths
    }

    pub(super) fn charge(&self, src: GpuId, dst: GpuId, bytes: f64, mode: RouteMode, port_bytes: &mut [f64]) {
        // Segments of different dimensions are independent, so each one is
        // charged with its own weight without forming the path product.
        for seg in self.segments(src, dst, mode) {
            for (ports, w) in seg {
                for p in ports {
                    port_bytes[p] += bytes * w;
                }
            }
        }
    }

    /// Dimension along which `group` forms one complete ring, if any.
    fn full_ring_dim(&self, group: &[GpuId]) -> Option<usize> {
        let first = self.coords(group[0]);
        'dims: for dim in 0..3 {
            if self.dims[dim] != group.len() {
                continue;
            }
            let mut seen = vec![false; group.len()];
            for &g in group {
                let c = self.coords(g);
                if (0..3).any(|k| k != dim && c[k] != first[k]) || seen[c[dim]] {
                    continue 'dims;
                }
                seen[c[dim]] = true;
            }
            return Some(dim);
        }
        None
    }

    /// Closed-form uniform all-to-all on a full ring. Returns false when
    /// `group` is not a complete ring of one dimension.
    pub(super) fn charge_all_to_all(
        &self,
        group: &[GpuId],
        pair_bytes: f64,
        mode: RouteMode,
        port_bytes: &mut [f64],
    ) -> bool {
        let Some(dim) = self.full_ring_dim(group) else {
            return false;
        };
        let (plus, minus) = ring_link_loads(group.len(), mode);
        for &g in group {
            port_bytes[self.port(g, dim, true)] += pair_bytes * plus;
            port_bytes[self.port(g, dim, false)] += pair_bytes * minus;
        }
        true
    }
}

/// Number of unit flows crossing each positive and each negative link when
/// every ordered pair of an `n`-ring exchanges one unit.
///
/// On a ring every offset-`j` flow family puts exactly `j` units on each link
/// of its direction, so the load is a sum over offsets.
pub fn ring_link_loads(n: usize, mode: RouteMode) -> (f64, f64) {
    match mode {
        RouteMode::Unidirectional => ((n * (n - 1) / 2) as f64, 0.0),
        RouteMode::Shortest => {
            let per_dir = if n % 2 == 1 {
                let m = (n - 1) / 2;
                (m * (m + 1) / 2) as f64
            } else {
                let m = n / 2 - 1;
                (m * (m + 1) / 2) as f64 + (n / 2) as f64 / 2.0
            };
            (per_dir, per_dir)
        }
    }
}

pub fn build_torus(cluster_size: usize, params: &TorusParams) -> Result<Topology> {
    let dims = params.dims;
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Construction("torus dimensions must be positive".into()));
    }
    let product: usize = dims.iter().product();
    if product != cluster_size {
        return Err(Error::Construction(format!(
            "torus {}x{}x{} holds {product} GPUs, not {cluster_size}",
            dims[0], dims[1], dims[2]
        )));
    }
    if let Some((dim, _)) = params.boosted_dim {
        if dim >= 3 {
            return Err(Error::Construction(format!("no torus dimension {dim}")));
        }
    }
    if !(params.base_port_rate > 0.0) {
        return Err(Error::Construction("port rate must be positive".into()));
    }
    let layout = TorusLayout {
        dims,
        rates: params.dim_rates(),
    };
    let n = cluster_size;
    let mut nodes = vec![NodeKind::Gpu; n];
    nodes.extend(std::iter::repeat(NodeKind::GpuResidentSwitch).take(n));
    let mut links = Vec::with_capacity(n * PORTS_PER_CHIP);
    for g in 0..n {
        for dim in 0..3 {
            for positive in [true, false] {
                debug_assert_eq!(links.len(), layout.port(g, dim, positive));
                links.push(Link {
                    src: n + g,
                    dst: n + layout.neighbor(g, dim, positive),
                    rate: layout.rates[dim],
                    tier: Tier::GpuResident,
                });
            }
        }
    }
    Ok(Topology::assemble(nodes, links, n, Fabric::Torus(layout)))
}

/// Relabels the torus so that parallel dimension `i` runs along axis `i`.
///
/// `assignment[i]` is `(group size, physical dimension)`. The physical
/// dimensions must be distinct and each group must fit within its ring.
/// Unassigned physical dimensions keep their relative order after the
/// assigned ones. No rewiring is modeled.
pub fn remap_torus_dimensions(topology: &Topology, assignment: &[(usize, usize)]) -> Result<Topology> {
    let Fabric::Torus(layout) = topology.fabric() else {
        return Err(Error::Mapping("dimension remapping needs a torus".into()));
    };
    if assignment.len() > 3 {
        return Err(Error::Mapping("at most three parallel dimensions".into()));
    }
    let mut used = [false; 3];
    for &(size, phys) in assignment {
        if phys >= 3 || used[phys] {
            return Err(Error::Mapping(format!("physical dimension {phys} invalid or assigned twice")));
        }
        used[phys] = true;
        if size > layout.dims[phys] {
            return Err(Error::Mapping(format!(
                "group of {size} GPUs exceeds ring length {} of dimension {phys}",
                layout.dims[phys]
            )));
        }
    }
    let mut order: Vec<usize> = assignment.iter().map(|&(_, p)| p).collect();
    order.extend((0..3).filter(|d| !used[*d]));
    let dims = [layout.dims[order[0]], layout.dims[order[1]], layout.dims[order[2]]];
    let rates = [layout.rates[order[0]], layout.rates[order[1]], layout.rates[order[2]]];
    let base = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let boosted = (0..3).find(|&d| rates[d] > base).map(|d| {
        let extra = ((rates[d] / base - 1.0) * 2.0).round() as usize;
        (d, extra)
    });
    build_torus(
        topology.gpu_count(),
        &TorusParams {
            dims,
            base_port_rate: base,
            boosted_dim: boosted,
        },
    )
}
