//! Hierarchical edge-cloud network model.
//!
//! The network is a tree of datacenters: a cloud datacenter at the root,
//! aggregation datacenters below it, and antenna-level leaves at level 0.
//! Each leaf is co-located with a point of access (PoA). Trees are either
//! built from a service area and antenna positions by recursive rectangle
//! partitioning ([`build_tree`]) or assembled by hand with [`TreeBuilder`].
//!
//! Levels count upward from the leaves: a leaf has level 0 and the root of a
//! built tree has level `height`. Links connect a child to its parent; each
//! direction carries its own latency and bandwidth price.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use crate::error::Error;

/// Datacenter identifier; indexes into the tree's node table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DcId(pub u32);

impl DcId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Axis-aligned rectangle in meters. Containment is half-open: a point
/// belongs to the rectangle when `x_min <= x < x_max` and
/// `y_min <= y < y_max`, so tiled rectangles partition the plane uniquely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Rect { x_min, y_min, x_max, y_max }
    }

    /// Degenerate rectangle covering a single point (used for leaf nodes).
    pub fn point(x: f64, y: f64) -> Self {
        Rect { x_min: x, y_min: y, x_max: x, y_max: y }
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// An antenna position feeding the topology builder. Each antenna becomes a
/// level-0 leaf datacenter co-located with its PoA.
#[derive(Debug, Clone, Copy)]
pub struct Antenna {
    pub poa_id: u64,
    pub x: f64,
    pub y: f64,
}

/// Physical parameters of one link direction.
#[derive(Debug, Clone, Copy)]
pub struct LinkParams {
    /// Propagation delay in seconds.
    pub prop_delay_s: f64,
    /// Capacity in bits per second.
    pub bandwidth: f64,
    /// Scheduler constant in bits: the largest burst a packet can wait for.
    pub sched_const: f64,
    /// Price per unit of traffic crossing this link direction.
    pub bw_cost: f64,
}

impl LinkParams {
    /// Per-traversal latency: scheduling term plus propagation.
    #[inline]
    pub fn tau(&self) -> f64 {
        self.sched_const / self.bandwidth + self.prop_delay_s
    }
}

impl Default for LinkParams {
    /// 2 ms propagation on a 1 Gbit/s link with no scheduling term, priced at
    /// 3 cost units per traffic unit.
    fn default() -> Self {
        LinkParams { prop_delay_s: 0.002, bandwidth: 1e9, sched_const: 0.0, bw_cost: 3.0 }
    }
}

/// A directed link of the tree.
#[derive(Debug, Clone, Copy)]
pub struct Link {
    pub from: DcId,
    pub to: DcId,
    pub params: LinkParams,
}

impl Link {
    /// Latency of one traversal in seconds.
    #[inline]
    pub fn tau(&self) -> f64 {
        self.params.tau()
    }
}

/// One datacenter of the tree.
#[derive(Debug, Clone)]
pub struct Datacenter {
    pub id: DcId,
    /// Height above the leaf level; leaves have level 0.
    pub level: u32,
    pub parent: Option<DcId>,
    pub children: Vec<DcId>,
    /// Processing capacity in CPU units.
    pub capacity: u64,
    /// Price of one CPU unit at this datacenter.
    pub cpu_cost: f64,
    /// Service-area rectangle this datacenter aggregates.
    pub coverage: Rect,
    /// PoA identifier for antenna-level leaves.
    pub poa_id: Option<u64>,
    /// Antenna position for leaves.
    pub position: Option<(f64, f64)>,
}

impl Datacenter {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Per-level construction parameters.
#[derive(Debug, Clone)]
pub struct LevelParams {
    /// Capacity multiplier: a level-l datacenter gets `cpu_multiplier * cpu_base` units.
    pub cpu_multiplier: u64,
    /// Price of one CPU unit at this level.
    pub cpu_cost: f64,
    /// Parameters of the link between a node at this level and its parent.
    pub link: LinkParams,
}

/// Shape and pricing parameters for [`build_tree`].
#[derive(Debug, Clone)]
pub struct TreeParams {
    /// Level of the root; the tree has levels `height ..= 0`. Must be >= 2.
    pub height: u32,
    /// Base capacity unit C_cpu; level capacity is `multiplier(level) * cpu_base`.
    pub cpu_base: u64,
    /// Per-level parameters, indexed by level; must have `height + 1` entries.
    pub levels: Vec<LevelParams>,
    /// Rectangle split (rows, cols) per level step, root split first; must
    /// have `height - 1` entries. Level-1 rectangles hold the antennas.
    pub splits: Vec<(u32, u32)>,
}

impl TreeParams {
    /// Default parameters: quadrant splits, capacity multiplier `level + 1`,
    /// CPU price `2^(height - level)`, and 2 ms links priced at 3 per unit.
    pub fn uniform(height: u32, cpu_base: u64) -> Self {
        let levels = (0..=height)
            .map(|l| LevelParams {
                cpu_multiplier: u64::from(l) + 1,
                cpu_cost: f64::powi(2.0, (height - l) as i32),
                link: LinkParams::default(),
            })
            .collect();
        let splits = vec![(2, 2); height.saturating_sub(1) as usize];
        TreeParams { height, cpu_base, levels, splits }
    }

    /// Switch the capacity rule to `multiplier(level) = level`, which prices
    /// leaves at zero capacity (aggregation-only edge nodes).
    pub fn with_level_multiplier(mut self) -> Self {
        for (l, p) in self.levels.iter_mut().enumerate() {
            p.cpu_multiplier = l as u64;
        }
        self
    }
}

/// Immutable tree of datacenters with derived path tables.
#[derive(Debug, Clone)]
pub struct NetworkTree {
    dcs: Vec<Datacenter>,
    root: DcId,
    height: u32,
    diameter: u32,
    leaves: Vec<DcId>,
    area: Option<Rect>,
    /// Uplink (child to parent) attributes, indexed by the child id.
    uplink: Vec<Option<LinkParams>>,
    /// Downlink (parent to child) attributes, indexed by the child id.
    downlink: Vec<Option<LinkParams>>,
    /// Depth from the root in edges.
    depth: Vec<u32>,
    /// Euler-tour intervals for O(1) ancestor tests.
    tin: Vec<u32>,
    tout: Vec<u32>,
    /// Cumulative uplink latency from a node to the root.
    cum_tau_up: Vec<f64>,
    /// Cumulative downlink latency from the root to a node.
    cum_tau_down: Vec<f64>,
    /// Cumulative uplink bandwidth price from a node to the root.
    cum_bw_up: Vec<f64>,
    /// Cumulative downlink bandwidth price from the root to a node.
    cum_bw_down: Vec<f64>,
}

impl NetworkTree {
    pub fn root(&self) -> DcId {
        self.root
    }

    /// Level of the root.
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Longest path between any two datacenters, in edges.
    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn len(&self) -> usize {
        self.dcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dcs.is_empty()
    }

    /// Service area the tree was built from, if any.
    pub fn area(&self) -> Option<Rect> {
        self.area
    }

    /// Leaf datacenter ids in ascending order.
    pub fn leaves(&self) -> &[DcId] {
        &self.leaves
    }

    pub fn dc(&self, id: DcId) -> Result<&Datacenter, Error> {
        self.dcs.get(id.index()).ok_or(Error::UnknownDatacenter(id))
    }

    pub fn datacenters(&self) -> impl Iterator<Item = &Datacenter> {
        self.dcs.iter()
    }

    pub fn capacity(&self, id: DcId) -> u64 {
        self.dcs[id.index()].capacity
    }

    /// Smallest positive capacity among all datacenters, if any.
    pub fn min_positive_capacity(&self) -> Option<u64> {
        self.dcs.iter().map(|d| d.capacity).filter(|&c| c > 0).min()
    }

    /// True when `anc` lies on the path from `node` to the root (inclusive).
    pub fn is_ancestor_or_self(&self, anc: DcId, node: DcId) -> bool {
        let (a, n) = (anc.index(), node.index());
        self.tin[a] <= self.tin[n] && self.tout[n] <= self.tout[a]
    }

    /// Datacenters on the path from `from` up to the root, starting at `from`.
    pub fn root_path(&self, from: DcId) -> Result<Vec<DcId>, Error> {
        self.dc(from)?;
        let mut path = vec![from];
        let mut cur = from;
        while let Some(p) = self.dcs[cur.index()].parent {
            path.push(p);
            cur = p;
        }
        Ok(path)
    }

    /// Directed links along the unique tree path from `i` to `j`. The path of
    /// a node to itself is empty.
    pub fn path(&self, i: DcId, j: DcId) -> Result<Vec<Link>, Error> {
        self.dc(i)?;
        self.dc(j)?;
        let mut up = Vec::new();
        let mut down = Vec::new();
        let (mut a, mut b) = (i, j);
        while self.depth[a.index()] > self.depth[b.index()] {
            let p = self.dcs[a.index()].parent.expect("non-root has a parent");
            up.push(Link { from: a, to: p, params: self.uplink[a.index()].unwrap() });
            a = p;
        }
        while self.depth[b.index()] > self.depth[a.index()] {
            let p = self.dcs[b.index()].parent.expect("non-root has a parent");
            down.push(Link { from: p, to: b, params: self.downlink[b.index()].unwrap() });
            b = p;
        }
        while a != b {
            let pa = self.dcs[a.index()].parent.expect("distinct roots");
            up.push(Link { from: a, to: pa, params: self.uplink[a.index()].unwrap() });
            a = pa;
            let pb = self.dcs[b.index()].parent.expect("distinct roots");
            down.push(Link { from: pb, to: b, params: self.downlink[b.index()].unwrap() });
            b = pb;
        }
        down.reverse();
        up.extend(down);
        Ok(up)
    }

    /// Sum of uplink latencies from descendant `from` to ancestor `to`.
    pub fn tau_up_between(&self, from: DcId, to: DcId) -> f64 {
        debug_assert!(self.is_ancestor_or_self(to, from));
        self.cum_tau_up[from.index()] - self.cum_tau_up[to.index()]
    }

    /// Sum of downlink latencies from ancestor `from` to descendant `to`.
    pub fn tau_down_between(&self, from: DcId, to: DcId) -> f64 {
        debug_assert!(self.is_ancestor_or_self(from, to));
        self.cum_tau_down[to.index()] - self.cum_tau_down[from.index()]
    }

    /// Sum of uplink bandwidth prices from descendant `from` to ancestor `to`.
    pub fn bw_cost_up_between(&self, from: DcId, to: DcId) -> f64 {
        debug_assert!(self.is_ancestor_or_self(to, from));
        self.cum_bw_up[from.index()] - self.cum_bw_up[to.index()]
    }

    /// Sum of downlink bandwidth prices from ancestor `from` to descendant `to`.
    pub fn bw_cost_down_between(&self, from: DcId, to: DcId) -> f64 {
        debug_assert!(self.is_ancestor_or_self(from, to));
        self.cum_bw_down[to.index()] - self.cum_bw_down[from.index()]
    }

    /// Ids of the subtree rooted at `s`, ascending.
    pub fn subtree(&self, s: DcId) -> Result<Vec<DcId>, Error> {
        self.dc(s)?;
        let (lo, hi) = (self.tin[s.index()], self.tout[s.index()]);
        Ok(self
            .dcs
            .iter()
            .filter(|d| self.tin[d.id.index()] >= lo && self.tout[d.id.index()] <= hi)
            .map(|d| d.id)
            .collect())
    }

    /// The directed link from `i` to `j`, when they are adjacent.
    pub fn link(&self, i: DcId, j: DcId) -> Option<Link> {
        if self.dcs.get(i.index())?.parent == Some(j) {
            Some(Link { from: i, to: j, params: self.uplink[i.index()]? })
        } else if self.dcs.get(j.index())?.parent == Some(i) {
            Some(Link { from: i, to: j, params: self.downlink[j.index()]? })
        } else {
            None
        }
    }

    /// Writes a plain-text dump. One `tree` header line, then one `dc` line
    /// per datacenter (ascending id) and one `link` line per link direction:
    ///
    /// ```text
    /// tree height=<h> root=<id> diameter=<d>
    /// dc id=<id> level=<l> parent=<id|-> capacity=<units> cpu_cost=<price> [poa=<id> x=<m> y=<m>]
    /// link from=<id> to=<id> tau=<seconds> bw_cost=<price>
    /// ```
    pub fn write_dump(&self, w: &mut impl Write) -> Result<(), Error> {
        writeln!(w, "tree height={} root={} diameter={}", self.height, self.root, self.diameter)?;
        for d in &self.dcs {
            let parent = d.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
            write!(
                w,
                "dc id={} level={} parent={} capacity={} cpu_cost={}",
                d.id, d.level, parent, d.capacity, d.cpu_cost
            )?;
            if let (Some(poa), Some((x, y))) = (d.poa_id, d.position) {
                write!(w, " poa={poa} x={x} y={y}")?;
            }
            writeln!(w)?;
        }
        for d in &self.dcs {
            if let Some(p) = d.parent {
                let up = self.uplink[d.id.index()].unwrap();
                let down = self.downlink[d.id.index()].unwrap();
                writeln!(w, "link from={} to={} tau={} bw_cost={}", d.id, p, up.tau(), up.bw_cost)?;
                writeln!(w, "link from={} to={} tau={} bw_cost={}", p, d.id, down.tau(), down.bw_cost)?;
            }
        }
        Ok(())
    }

    /// Finalizes a node table into a tree: computes depths, Euler intervals,
    /// latency/price prefix sums, leaf list, and the diameter.
    fn finalize(
        dcs: Vec<Datacenter>,
        root: DcId,
        uplink: Vec<Option<LinkParams>>,
        downlink: Vec<Option<LinkParams>>,
        area: Option<Rect>,
    ) -> Result<Self, Error> {
        let n = dcs.len();
        let mut depth = vec![0u32; n];
        let mut tin = vec![0u32; n];
        let mut tout = vec![0u32; n];
        let mut cum_tau_up = vec![0.0; n];
        let mut cum_tau_down = vec![0.0; n];
        let mut cum_bw_up = vec![0.0; n];
        let mut cum_bw_down = vec![0.0; n];

        let mut timer = 0u32;
        let mut visited = 0usize;
        // Iterative DFS; enter/exit markers drive the Euler intervals.
        let mut stack = vec![(root, false)];
        while let Some((id, exited)) = stack.pop() {
            let i = id.index();
            if exited {
                tout[i] = timer;
                timer += 1;
                continue;
            }
            visited += 1;
            tin[i] = timer;
            timer += 1;
            if let Some(p) = dcs[i].parent {
                depth[i] = depth[p.index()] + 1;
                let up = uplink[i].ok_or_else(|| {
                    Error::InvalidTopology(format!("missing uplink params for {id}"))
                })?;
                let down = downlink[i].ok_or_else(|| {
                    Error::InvalidTopology(format!("missing downlink params for {id}"))
                })?;
                if !(up.tau() > 0.0 && up.tau().is_finite())
                    || !(down.tau() > 0.0 && down.tau().is_finite())
                {
                    return Err(Error::InvalidTopology(format!(
                        "link latency at {id} must be positive and finite"
                    )));
                }
                cum_tau_up[i] = cum_tau_up[p.index()] + up.tau();
                cum_tau_down[i] = cum_tau_down[p.index()] + down.tau();
                cum_bw_up[i] = cum_bw_up[p.index()] + up.bw_cost;
                cum_bw_down[i] = cum_bw_down[p.index()] + down.bw_cost;
            }
            stack.push((id, true));
            for &c in dcs[i].children.iter().rev() {
                stack.push((c, false));
            }
        }
        if visited != n {
            return Err(Error::InvalidTopology(
                "node table is not a single tree rooted at the given root".into(),
            ));
        }

        let leaves: Vec<DcId> = dcs.iter().filter(|d| d.is_leaf()).map(|d| d.id).collect();

        // Tree diameter via the classic double sweep on depths.
        let far = |from: usize| -> (usize, u32) {
            let mut dist = vec![u32::MAX; n];
            dist[from] = 0;
            let mut stack = vec![from];
            let mut best = (from, 0);
            while let Some(v) = stack.pop() {
                let neighbors = dcs[v]
                    .children
                    .iter()
                    .copied()
                    .chain(dcs[v].parent)
                    .map(DcId::index);
                for u in neighbors {
                    if dist[u] == u32::MAX {
                        dist[u] = dist[v] + 1;
                        if dist[u] > best.1 {
                            best = (u, dist[u]);
                        }
                        stack.push(u);
                    }
                }
            }
            best
        };
        let (u, _) = far(root.index());
        let (_, diameter) = far(u);

        let height = dcs[root.index()].level;
        Ok(NetworkTree {
            dcs,
            root,
            height,
            diameter,
            leaves,
            area,
            uplink,
            downlink,
            depth,
            tin,
            tout,
            cum_tau_up,
            cum_tau_down,
            cum_bw_up,
            cum_bw_down,
        })
    }
}

/// Builds a tree by recursive rectangle partition of `area`.
///
/// The root covers the whole area at level `params.height`; every level-l
/// rectangle with l >= 2 splits into `params.splits` sub-rectangles, and
/// level-1 rectangles adopt the antennas they contain as level-0 leaves.
/// Rectangles containing no antenna are pruned, so every leaf is a PoA.
pub fn build_tree(params: &TreeParams, area: Rect, antennas: &[Antenna]) -> Result<NetworkTree, Error> {
    if !(area.width() > 0.0 && area.height() > 0.0) {
        return Err(Error::InvalidTopology("service area must be non-degenerate".into()));
    }
    if params.height < 2 {
        return Err(Error::InvalidTopology("tree height must be at least 2".into()));
    }
    if params.levels.len() != params.height as usize + 1 {
        return Err(Error::InvalidTopology(format!(
            "expected {} level parameter entries, got {}",
            params.height + 1,
            params.levels.len()
        )));
    }
    if params.splits.len() != params.height as usize - 1 {
        return Err(Error::InvalidTopology(format!(
            "expected {} split entries, got {}",
            params.height - 1,
            params.splits.len()
        )));
    }
    if params.splits.iter().any(|&(r, c)| r == 0 || c == 0) {
        return Err(Error::InvalidTopology("split factors must be positive".into()));
    }
    if antennas.is_empty() {
        return Err(Error::NoAntennas);
    }
    for a in antennas {
        if !area.contains(a.x, a.y) {
            return Err(Error::AntennaOutsideArea { poa_id: a.poa_id, x: a.x, y: a.y });
        }
    }
    let mut seen = BTreeSet::new();
    for a in antennas {
        if !seen.insert(a.poa_id) {
            return Err(Error::InvalidTopology(format!("duplicate PoA id {}", a.poa_id)));
        }
    }

    let mut dcs: Vec<Datacenter> = Vec::new();
    let mut uplink: Vec<Option<LinkParams>> = Vec::new();
    let mut downlink: Vec<Option<LinkParams>> = Vec::new();

    struct Ctx<'a> {
        params: &'a TreeParams,
        dcs: Vec<Datacenter>,
        uplink: Vec<Option<LinkParams>>,
        downlink: Vec<Option<LinkParams>>,
    }

    impl Ctx<'_> {
        fn add(&mut self, level: u32, parent: Option<DcId>, coverage: Rect) -> DcId {
            let id = DcId(self.dcs.len() as u32);
            let lp = &self.params.levels[level as usize];
            self.dcs.push(Datacenter {
                id,
                level,
                parent,
                children: Vec::new(),
                capacity: lp.cpu_multiplier * self.params.cpu_base,
                cpu_cost: lp.cpu_cost,
                coverage,
                poa_id: None,
                position: None,
            });
            self.uplink.push(parent.map(|_| lp.link));
            self.downlink.push(parent.map(|_| lp.link));
            id
        }

        /// Creates the node for `rect` at `level` and recurses over the
        /// antennas it contains. Returns the node id.
        fn build(&mut self, level: u32, parent: Option<DcId>, rect: Rect, ants: Vec<Antenna>) -> DcId {
            let id = self.add(level, parent, rect);
            if level == 1 {
                let mut ants = ants;
                ants.sort_by_key(|a| a.poa_id);
                for a in ants {
                    let leaf = self.add(0, Some(id), Rect::point(a.x, a.y));
                    self.dcs[leaf.index()].poa_id = Some(a.poa_id);
                    self.dcs[leaf.index()].position = Some((a.x, a.y));
                    self.dcs[id.index()].children.push(leaf);
                }
                return id;
            }
            let (rows, cols) = self.params.splits[(self.params.height - level) as usize];
            let dx = rect.width() / f64::from(cols);
            let dy = rect.height() / f64::from(rows);
            for row in 0..rows {
                for col in 0..cols {
                    let sub = Rect::new(
                        rect.x_min + f64::from(col) * dx,
                        rect.y_min + f64::from(row) * dy,
                        rect.x_min + f64::from(col + 1) * dx,
                        rect.y_min + f64::from(row + 1) * dy,
                    );
                    let inside: Vec<Antenna> =
                        ants.iter().copied().filter(|a| sub.contains(a.x, a.y)).collect();
                    if inside.is_empty() {
                        continue; // prune empty subtrees
                    }
                    let child = self.build(level - 1, Some(id), sub, inside);
                    self.dcs[id.index()].children.push(child);
                }
            }
            id
        }
    }

    let mut ctx = Ctx { params, dcs: Vec::new(), uplink: Vec::new(), downlink: Vec::new() };
    let root = ctx.build(params.height, None, area, antennas.to_vec());
    dcs.append(&mut ctx.dcs);
    uplink.append(&mut ctx.uplink);
    downlink.append(&mut ctx.downlink);

    NetworkTree::finalize(dcs, root, uplink, downlink, Some(area))
}

/// Assembles arbitrary trees node by node, for tests and synthetic instances.
///
/// Levels are derived at build time as the longest downward distance to a
/// leaf, so leaves sit at level 0 regardless of insertion order. Unlike
/// [`build_tree`] outputs, hand-built trees may contain leaves that are not
/// PoAs.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<(Option<DcId>, u64, f64)>,
    uplink: Vec<Option<LinkParams>>,
    downlink: Vec<Option<LinkParams>>,
    poa: Vec<Option<(u64, f64, f64)>>,
    area: Option<Rect>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the root; must be called exactly once, first.
    pub fn add_root(&mut self, capacity: u64, cpu_cost: f64) -> DcId {
        assert!(self.nodes.is_empty(), "root must be the first node");
        self.push(None, capacity, cpu_cost, None)
    }

    /// Adds a child with symmetric up/down link parameters.
    pub fn add_child(&mut self, parent: DcId, capacity: u64, cpu_cost: f64, link: LinkParams) -> DcId {
        assert!(parent.index() < self.nodes.len(), "unknown parent {parent}");
        self.push(Some(parent), capacity, cpu_cost, Some(link))
    }

    /// Marks a node as a PoA-co-located antenna at position (x, y).
    pub fn mark_poa(&mut self, dc: DcId, poa_id: u64, x: f64, y: f64) {
        self.poa[dc.index()] = Some((poa_id, x, y));
    }

    /// Sets the service area reported by the built tree.
    pub fn set_area(&mut self, area: Rect) {
        self.area = Some(area);
    }

    fn push(&mut self, parent: Option<DcId>, capacity: u64, cpu_cost: f64, link: Option<LinkParams>) -> DcId {
        let id = DcId(self.nodes.len() as u32);
        self.nodes.push((parent, capacity, cpu_cost));
        self.uplink.push(link);
        self.downlink.push(link);
        self.poa.push(None);
        id
    }

    pub fn build(self) -> Result<NetworkTree, Error> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidTopology("empty tree".into()));
        }
        let n = self.nodes.len();
        let mut dcs: Vec<Datacenter> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &(parent, capacity, cpu_cost))| Datacenter {
                id: DcId(i as u32),
                level: 0,
                parent,
                children: Vec::new(),
                capacity,
                cpu_cost,
                coverage: Rect::point(0.0, 0.0),
                poa_id: None,
                position: None,
            })
            .collect();
        for i in 0..n {
            if let Some(p) = dcs[i].parent {
                let id = dcs[i].id;
                dcs[p.index()].children.push(id);
            }
        }
        for (i, poa) in self.poa.iter().enumerate() {
            if let Some((poa_id, x, y)) = *poa {
                dcs[i].poa_id = Some(poa_id);
                dcs[i].position = Some((x, y));
                dcs[i].coverage = Rect::point(x, y);
            }
        }
        // Levels: longest downward distance to a leaf, computed bottom-up.
        // Children always precede parents in no particular order, so iterate
        // until a fixed point over this small table.
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                let lvl = dcs[i]
                    .children
                    .iter()
                    .map(|c| dcs[c.index()].level + 1)
                    .max()
                    .unwrap_or(0);
                if dcs[i].level != lvl {
                    dcs[i].level = lvl;
                    changed = true;
                }
            }
        }
        NetworkTree::finalize(dcs, DcId(0), self.uplink, self.downlink, self.area)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_antennas(rows: u32, cols: u32, area: Rect) -> Vec<Antenna> {
        let dx = area.width() / f64::from(cols);
        let dy = area.height() / f64::from(rows);
        let mut out = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                out.push(Antenna {
                    poa_id: u64::from(r * cols + c),
                    x: area.x_min + (f64::from(c) + 0.5) * dx,
                    y: area.y_min + (f64::from(r) + 0.5) * dy,
                });
            }
        }
        out
    }

    fn unit_area() -> Rect {
        Rect::new(0.0, 0.0, 1000.0, 1000.0)
    }

    #[test]
    fn single_antenna_yields_three_node_path() {
        let params = TreeParams::uniform(2, 10);
        let ants = [Antenna { poa_id: 7, x: 500.0, y: 500.0 }];
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        assert_eq!(tree.len(), 3);
        let root = tree.dc(tree.root()).unwrap();
        assert_eq!(root.level, 2);
        assert_eq!(root.children.len(), 1);
        let mid = tree.dc(root.children[0]).unwrap();
        assert_eq!(mid.level, 1);
        assert_eq!(mid.children.len(), 1);
        let leaf = tree.dc(mid.children[0]).unwrap();
        assert_eq!(leaf.level, 0);
        assert_eq!(leaf.poa_id, Some(7));
        assert_eq!(tree.leaves(), &[leaf.id]);
    }

    #[test]
    fn quadrant_antennas_fill_four_subtrees() {
        let params = TreeParams::uniform(2, 10);
        let ants = grid_antennas(2, 2, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        let root = tree.dc(tree.root()).unwrap();
        assert_eq!(root.children.len(), 4);
        for &c in &root.children {
            let mid = tree.dc(c).unwrap();
            assert_eq!(mid.level, 1);
            assert_eq!(mid.children.len(), 1);
        }
        assert_eq!(tree.leaves().len(), 4);
    }

    #[test]
    fn six_level_tree_has_paper_rectangle_counts() {
        // Root at level 5 with quadrant splits: 1, 4, 16, 64, 256 internal
        // rectangles, and one leaf per level-1 rectangle here.
        let params = TreeParams::uniform(5, 10);
        let ants = grid_antennas(16, 16, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        let mut by_level = std::collections::BTreeMap::new();
        for d in tree.datacenters() {
            *by_level.entry(d.level).or_insert(0u32) += 1;
        }
        assert_eq!(by_level[&5], 1);
        assert_eq!(by_level[&4], 4);
        assert_eq!(by_level[&3], 16);
        assert_eq!(by_level[&2], 64);
        assert_eq!(by_level[&1], 256);
        assert_eq!(by_level[&0], 256);
        assert_eq!(tree.diameter(), 10);
    }

    #[test]
    fn empty_rectangles_are_pruned() {
        // All antennas in one quadrant: the other three level-1 subtrees
        // disappear and so do their ancestors' empty branches.
        let params = TreeParams::uniform(3, 10);
        let ants = [
            Antenna { poa_id: 0, x: 10.0, y: 10.0 },
            Antenna { poa_id: 1, x: 40.0, y: 40.0 },
        ];
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        assert_eq!(tree.leaves().len(), 2);
        for d in tree.datacenters() {
            assert!(d.is_leaf() == (d.level == 0));
            if d.level > 0 {
                assert!(!d.children.is_empty());
            }
        }
    }

    #[test]
    fn antenna_outside_area_is_rejected_with_id() {
        let params = TreeParams::uniform(2, 10);
        let ants = [Antenna { poa_id: 42, x: 1500.0, y: 10.0 }];
        match build_tree(&params, unit_area(), &ants) {
            Err(Error::AntennaOutsideArea { poa_id, .. }) => assert_eq!(poa_id, 42),
            other => panic!("expected outside-area rejection, got {other:?}"),
        }
    }

    #[test]
    fn zero_antennas_is_an_error() {
        let params = TreeParams::uniform(2, 10);
        assert!(matches!(build_tree(&params, unit_area(), &[]), Err(Error::NoAntennas)));
    }

    #[test]
    fn level_capacities_and_prices_follow_defaults() {
        let params = TreeParams::uniform(3, 10);
        let ants = grid_antennas(4, 4, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        for d in tree.datacenters() {
            assert_eq!(d.capacity, (u64::from(d.level) + 1) * 10);
            assert_eq!(d.cpu_cost, f64::powi(2.0, (3 - d.level) as i32));
        }
        let literal = TreeParams::uniform(3, 10).with_level_multiplier();
        let tree = build_tree(&literal, unit_area(), &ants).unwrap();
        assert_eq!(tree.capacity(tree.leaves()[0]), 0);
        assert_eq!(tree.capacity(tree.root()), 30);
    }

    #[test]
    fn path_of_node_to_itself_is_empty() {
        let params = TreeParams::uniform(2, 10);
        let ants = grid_antennas(2, 2, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        assert!(tree.path(tree.root(), tree.root()).unwrap().is_empty());
    }

    #[test]
    fn leaf_to_root_path_is_all_uplinks() {
        let params = TreeParams::uniform(5, 10);
        let ants = grid_antennas(16, 16, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        let leaf = tree.leaves()[0];
        let path = tree.path(leaf, tree.root()).unwrap();
        assert_eq!(path.len(), 5);
        let mut cur = leaf;
        for link in &path {
            assert_eq!(link.from, cur);
            assert_eq!(tree.dc(cur).unwrap().parent, Some(link.to));
            cur = link.to;
        }
        let tau: f64 = path.iter().map(|l| l.tau()).sum();
        assert!((tau - 0.010).abs() < 1e-15);
    }

    #[test]
    fn cross_subtree_path_goes_through_common_ancestor() {
        let params = TreeParams::uniform(2, 10);
        let ants = grid_antennas(2, 2, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        let (a, b) = (tree.leaves()[0], tree.leaves()[3]);
        let path = tree.path(a, b).unwrap();
        // Two uplinks to the root, two downlinks back down.
        assert_eq!(path.len(), 4);
        assert_eq!(path[0].from, a);
        assert_eq!(path[1].to, tree.root());
        assert_eq!(path[2].from, tree.root());
        assert_eq!(path[3].to, b);
    }

    #[test]
    fn path_reversal_mirrors_links() {
        let params = TreeParams::uniform(3, 10);
        let ants = grid_antennas(4, 4, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        let ids: Vec<DcId> = tree.datacenters().map(|d| d.id).collect();
        for &i in &ids {
            for &j in &ids {
                let fwd = tree.path(i, j).unwrap();
                let mut rev = tree.path(j, i).unwrap();
                rev.reverse();
                assert_eq!(fwd.len(), rev.len());
                for (f, r) in fwd.iter().zip(&rev) {
                    assert_eq!((f.from, f.to), (r.to, r.from));
                }
            }
        }
    }

    #[test]
    fn subtree_of_root_is_everything_and_leaf_is_itself() {
        let params = TreeParams::uniform(2, 10);
        let ants = grid_antennas(2, 2, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        assert_eq!(tree.subtree(tree.root()).unwrap().len(), tree.len());
        let leaf = tree.leaves()[0];
        assert_eq!(tree.subtree(leaf).unwrap(), vec![leaf]);
    }

    #[test]
    fn sibling_subtrees_are_disjoint_and_cover_parent() {
        let params = TreeParams::uniform(3, 10);
        let ants = grid_antennas(4, 4, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        for d in tree.datacenters() {
            if d.is_leaf() {
                continue;
            }
            let mut seen = BTreeSet::new();
            let mut total = 1; // the parent itself
            for &c in &d.children {
                for id in tree.subtree(c).unwrap() {
                    assert!(seen.insert(id), "subtrees overlap at {id}");
                    total += 1;
                }
            }
            assert_eq!(total, tree.subtree(d.id).unwrap().len());
        }
    }

    #[test]
    fn unknown_id_is_rejected() {
        let params = TreeParams::uniform(2, 10);
        let ants = grid_antennas(2, 2, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        let bogus = DcId(u32::MAX);
        assert!(matches!(tree.dc(bogus), Err(Error::UnknownDatacenter(_))));
        assert!(tree.path(bogus, tree.root()).is_err());
        assert!(tree.subtree(bogus).is_err());
    }

    #[test]
    fn hand_built_tree_computes_levels_bottom_up() {
        let mut b = TreeBuilder::new();
        let root = b.add_root(6, 1.0);
        let mid = b.add_child(root, 4, 2.0, LinkParams::default());
        let leaf = b.add_child(mid, 2, 4.0, LinkParams::default());
        b.mark_poa(leaf, 0, 0.0, 0.0);
        let side = b.add_child(root, 4, 2.0, LinkParams::default());
        b.mark_poa(side, 1, 1.0, 1.0);
        let tree = b.build().unwrap();
        assert_eq!(tree.dc(root).unwrap().level, 2);
        assert_eq!(tree.dc(mid).unwrap().level, 1);
        assert_eq!(tree.dc(leaf).unwrap().level, 0);
        assert_eq!(tree.dc(side).unwrap().level, 0);
        assert_eq!(tree.height(), 2);
        assert_eq!(tree.diameter(), 3);
    }

    #[test]
    fn dump_lists_every_node_and_link() {
        let params = TreeParams::uniform(2, 10);
        let ants = grid_antennas(2, 2, unit_area());
        let tree = build_tree(&params, unit_area(), &ants).unwrap();
        let mut buf = Vec::new();
        tree.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("dc ")).count(), tree.len());
        let n_links = text.lines().filter(|l| l.starts_with("link ")).count();
        assert_eq!(n_links, 2 * (tree.len() - 1));
        assert!(text.starts_with("tree height=2"));
    }
}
