//! Local perturbation operators.
//!
//! These operators write data into a sampled function by carving narrow
//! cone spikes into it: the local Lipschitz modulus measured on a small
//! ball around a spike center becomes the stored symbol. All of them
//! follow the same recipe:
//!
//! 1. subtract a boundary-vanishing *headroom profile* so the carrier
//!    drops by a margin `eps1` on the interior plateau while staying
//!    bitwise untouched on the boundary layer,
//! 2. re-raise the function inside small disjoint balls with inward cone
//!    envelopes whose slopes encode the payload.
//!
//! The carved function stays within `eps` of the original in sup norm,
//! keeps values in `[0, 1]`, and its local moduli near the spike centers
//! report the chosen slopes up to a grid term `tau = 2*c_top*h/delta`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{GridKind, GridSpec, SampledFunction};
use crate::lipcore::{certify_lipschitz, local_modulus};

/// Quotient slack used when certifying Lipschitz preconditions.
pub const CERT_SLACK: f64 = 1e-9;

/// Minimum number of grid steps in a spike radius: the ring of cone data
/// must be resolved, so layouts require `delta >= MIN_RING_STEPS * h`.
pub const MIN_RING_STEPS: usize = 4;

/// Slope chain used by the stand-alone reference layout.
pub const REFERENCE_CHAIN: [f64; 4] = [0.2, 0.5, 0.75, 1.0];

fn box_radius(grid: &GridSpec) -> Result<f64> {
    match grid.kind() {
        GridKind::Box { radius } => Ok(radius),
        GridKind::Torus { .. } => Err(Error::Grid(
            "perturbation operators need a box grid with a boundary layer".into(),
        )),
    }
}

/// Largest headroom margin `eps1` compatible with `eps` and with a profile
/// of the given slope that vanishes on the boundary layer: the profile must
/// reach its plateau before the half-radius box that hosts the spikes.
fn headroom_margin(eps: f64, slope: f64, r: f64, h: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!(
            "perturbation budget must satisfy 0 < eps < 1, got {eps}"
        )));
    }
    if !(slope > 0.0) {
        return Err(Error::Parameter(format!(
            "headroom slope must be positive, got {slope}"
        )));
    }
    let collar = r / 2.0 - 2.0 * h;
    if collar <= 0.0 {
        return Err(Error::Grid(format!(
            "grid too coarse: no collar is left between the boundary layer \
             and the half-radius box (r = {r}, h = {h})"
        )));
    }
    Ok((eps / 3.0).min(slope * collar))
}

/// Subtract the headroom profile `min(eps1, slope * dist(t, boundary))`
/// from `phi`, clamping at zero. Returns the depressed function together
/// with the margin `eps1`; boundary-layer values are bitwise unchanged.
pub fn apply_headroom(
    phi: &SampledFunction,
    eps: f64,
    slope: f64,
) -> Result<(SampledFunction, f64)> {
    let grid = phi.grid();
    let r = box_radius(grid)?;
    let e1 = headroom_margin(eps, slope, r, grid.spacing())?;
    let mut vals = Vec::with_capacity(grid.num_nodes());
    for t in 0..grid.num_nodes() {
        let bump = e1.min(slope * grid.dist_to_boundary_layer(t)?);
        vals.push((phi.value(t) - bump).max(0.0));
    }
    Ok((SampledFunction::new(grid.clone(), vals)?, e1))
}

/// Shared pairwise-distance machinery: one node-index table plus one
/// `h*sqrt(k)` table, matching `GridSpec::multi_distance` bit for bit.
struct Geometry {
    dim: usize,
    m: usize,
    wrap: bool,
    multi: Vec<usize>,
    table: Vec<f64>,
}

impl Geometry {
    fn new(grid: &GridSpec) -> Self {
        let dim = grid.dim();
        let m = grid.points_per_axis();
        let wrap = grid.is_torus();
        let n = grid.num_nodes();
        let mut multi = Vec::with_capacity(n * dim);
        for t in 0..n {
            multi.extend(grid.multi_index(t));
        }
        let half = if wrap { m / 2 } else { m - 1 };
        let max_sq = dim as u64 * (half as u64) * (half as u64);
        let table = (0..=max_sq)
            .map(|k| grid.spacing() * (k as f64).sqrt())
            .collect();
        Geometry {
            dim,
            m,
            wrap,
            multi,
            table,
        }
    }

    #[inline]
    fn dist(&self, a: usize, b: usize) -> f64 {
        let ma = &self.multi[a * self.dim..(a + 1) * self.dim];
        let mb = &self.multi[b * self.dim..(b + 1) * self.dim];
        let mut sq: u64 = 0;
        for axis in 0..self.dim {
            let d = ma[axis].abs_diff(mb[axis]);
            let d = if self.wrap { d.min(self.m - d) } else { d };
            sq += (d as u64) * (d as u64);
        }
        self.table[sq as usize]
    }
}

/// Carve inward cone envelopes into `base`: inside each ball the value is
/// replaced by `min(1, min over outside nodes u of base[u] + slope * d)`.
/// Every spike reads the same unmodified `base` snapshot, so the result
/// does not depend on the spike order; the balls must be disjoint.
fn carve_spikes(
    base: &[f64],
    geo: &Geometry,
    spikes: &[(usize, f64, f64)],
) -> Result<Vec<f64>> {
    let n = base.len();
    let mut out = base.to_vec();
    let mut touched = vec![false; n];
    for &(center, radius, slope) in spikes {
        let mut inside = Vec::new();
        let mut data = Vec::with_capacity(n);
        for u in 0..n {
            if geo.dist(u, center) < radius {
                inside.push(u);
            } else {
                data.push(u);
            }
        }
        if data.is_empty() {
            return Err(Error::Grid(format!(
                "spike ball of radius {radius} swallows the whole grid"
            )));
        }
        for &t in &inside {
            if touched[t] {
                return Err(Error::Parameter(
                    "spike balls overlap; the layout is invalid".into(),
                ));
            }
            touched[t] = true;
            let mut best = 1.0f64;
            for &u in &data {
                let cand = base[u] + slope * geo.dist(t, u);
                if cand < best {
                    best = cand;
                }
            }
            out[t] = best;
        }
    }
    Ok(out)
}

/// Derived constants of the invariance-breaking perturbation.
#[derive(Debug, Clone, Copy)]
pub struct PerturbConstants {
    /// Headroom margin `eps1 = min(eps/3, slope * collar)`.
    pub epsilon_one: f64,
    /// Spike radius `delta = min(r/4, eps1/c' - 1.01*sqrt(n)*h)`.
    pub delta: f64,
    /// Grid modulus tolerance `tau = 2*c'*h/delta`.
    pub tau_grid: f64,
}

/// Compute the constants [`break_invariance`] would use on `grid`.
pub fn perturb_constants(
    grid: &GridSpec,
    eps: f64,
    c: f64,
    c_prime: f64,
) -> Result<PerturbConstants> {
    if !(c > 0.0 && c < c_prime) {
        return Err(Error::Parameter(format!(
            "slopes must satisfy 0 < c < c', got c = {c}, c' = {c_prime}"
        )));
    }
    let r = box_radius(grid)?;
    let h = grid.spacing();
    let slope = (c_prime - c) / 2.0;
    let e1 = headroom_margin(eps, slope, r, h)?;
    let root_n = (grid.dim() as f64).sqrt();
    let delta = (r / 4.0).min(e1 / c_prime - 1.01 * root_n * h);
    if delta <= 0.0 {
        return Err(Error::Parameter(format!(
            "headroom margin {e1} leaves no room for a spike of slope \
             {c_prime} at spacing {h}"
        )));
    }
    if h > delta / MIN_RING_STEPS as f64 {
        return Err(Error::Grid(format!(
            "grid too coarse to resolve the spike ring: h = {h} exceeds \
             delta/{MIN_RING_STEPS} = {}",
            delta / MIN_RING_STEPS as f64
        )));
    }
    Ok(PerturbConstants {
        epsilon_one: e1,
        delta,
        tau_grid: 2.0 * c_prime * h / delta,
    })
}

/// Perturb a `c`-Lipschitz function so that no slope bound below `c'` can
/// hold near the origin, while keeping the function within `eps` in sup
/// norm, inside `[0, 1]`, and bitwise unchanged on the boundary layer.
///
/// The returned pair is the perturbed function and the ball radius
/// `delta` on which the origin modulus reads back the slope `c'` (up to
/// the grid term of [`perturb_constants`]). Away from the origin ball the
/// function is the headroom-depressed carrier, whose modulus stays below
/// the midpoint slope `(c + c')/2` plus the same grid term.
pub fn break_invariance(
    phi: &SampledFunction,
    eps: f64,
    c: f64,
    c_prime: f64,
) -> Result<(SampledFunction, f64)> {
    let grid = phi.grid();
    let k = perturb_constants(grid, eps, c, c_prime)?;
    if !phi.range_clamped() {
        return Err(Error::Precondition(
            "carrier values must lie in [0, 1]".into(),
        ));
    }
    certify_lipschitz(phi, c, CERT_SLACK)?;
    let (phi1, _) = apply_headroom(phi, eps, (c_prime - c) / 2.0)?;
    let geo = Geometry::new(grid);
    let spikes = [(grid.origin_index(), k.delta, c_prime)];
    let out = carve_spikes(phi1.values(), &geo, &spikes)?;
    Ok((SampledFunction::new(grid.clone(), out)?, k.delta))
}

/// Nodes at distance `rho` from the origin in a fixed set of sampled
/// directions: both axis directions in one dimension, sixteen equal
/// angles in two, and the `2n` signed axis directions beyond that.
pub fn direction_anchors(grid: &GridSpec, rho: f64) -> Result<Vec<usize>> {
    let r = box_radius(grid)?;
    if !(rho > 0.0 && rho < r) {
        return Err(Error::Parameter(format!(
            "direction radius must lie in (0, {r}), got {rho}"
        )));
    }
    let n = grid.dim();
    let mut points: Vec<Vec<f64>> = Vec::new();
    match n {
        1 => {
            points.push(vec![rho]);
            points.push(vec![-rho]);
        }
        2 => {
            for j in 0..16 {
                let a = 2.0 * PI * j as f64 / 16.0;
                points.push(vec![rho * a.cos(), rho * a.sin()]);
            }
        }
        _ => {
            for axis in 0..n {
                for sign in [1.0, -1.0] {
                    let mut p = vec![0.0; n];
                    p[axis] = sign * rho;
                    points.push(p);
                }
            }
        }
    }
    let mut nodes = Vec::with_capacity(points.len());
    for p in &points {
        let node = grid.nearest_node(p)?;
        if !nodes.contains(&node) {
            nodes.push(node);
        }
    }
    Ok(nodes)
}

/// Placement plan for a family of data-carrying spikes: one steep spike at
/// the origin marking the layout, plus one spike per anchor whose slope
/// interpolates between the two middle chain entries.
///
/// The slope chain `c1 < c2 < c3 < c4` fixes the roles: carriers must be
/// `c1`-Lipschitz, anchor slopes run over `[c2, c3]`, and the origin spike
/// uses `c4`, which also bounds the carved output globally.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpLayout {
    grid: GridSpec,
    delta: f64,
    anchors: Vec<usize>,
    chain: [f64; 4],
}

/// Geometric layout constraints shared by the constructors: anchors are
/// distinct non-origin nodes of the quarter box, and the spike radius is a
/// whole number of at least [`MIN_RING_STEPS`] grid steps, at most a third
/// of any anchor norm or anchor separation and at most a quarter radius.
fn validate_geometry(
    grid: &GridSpec,
    delta: f64,
    anchors: &[usize],
    chain: [f64; 4],
) -> Result<()> {
    let r = box_radius(grid)?;
    let h = grid.spacing();
    if !(chain[0] > 0.0 && chain[0] < chain[1] && chain[1] < chain[2] && chain[2] < chain[3]) {
        return Err(Error::Parameter(format!(
            "slope chain must be positive and strictly increasing, got {chain:?}"
        )));
    }
    if anchors.is_empty() {
        return Err(Error::Parameter("layout needs at least one anchor".into()));
    }
    let steps = delta / h;
    if (steps - steps.round()).abs() > 1e-9 || steps.round() < MIN_RING_STEPS as f64 {
        return Err(Error::Grid(format!(
            "spike radius {delta} must be a whole number (>= {MIN_RING_STEPS}) \
             of grid steps h = {h}"
        )));
    }
    if delta > r / 4.0 + 1e-12 {
        return Err(Error::Parameter(format!(
            "spike radius {delta} exceeds a quarter of the box radius {r}"
        )));
    }
    let origin = grid.origin_index();
    for (i, &p) in anchors.iter().enumerate() {
        if p >= grid.num_nodes() {
            return Err(Error::Grid(format!("anchor node {p} out of range")));
        }
        if p == origin {
            return Err(Error::Parameter(
                "anchors must avoid the origin node".into(),
            ));
        }
        let sup: f64 = grid
            .coord(p)
            .iter()
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
        if sup > r / 4.0 + 1e-12 {
            return Err(Error::Parameter(format!(
                "anchor {i} sits at sup-norm {sup}, outside the quarter box"
            )));
        }
        let norm = grid.node_norm(p);
        if delta > norm / 3.0 + 1e-12 {
            return Err(Error::Parameter(format!(
                "spike radius {delta} exceeds a third of anchor {i}'s norm {norm}"
            )));
        }
        for &q in &anchors[..i] {
            if q == p {
                return Err(Error::Parameter("anchors must be distinct nodes".into()));
            }
            let sep = grid.node_distance(p, q);
            if delta > sep / 3.0 + 1e-12 {
                return Err(Error::Parameter(format!(
                    "spike radius {delta} exceeds a third of the anchor \
                     separation {sep}"
                )));
            }
        }
    }
    Ok(())
}

impl BumpLayout {
    /// Snap `anchor_points` to grid nodes and pick the largest admissible
    /// spike radius not exceeding `delta_request`: the radius shrinks in
    /// whole grid steps until the separation caps of the layout and the
    /// headroom cap `2*c4*delta < eps1(eps)` all hold.
    pub fn new(
        grid: &GridSpec,
        anchor_points: &[Vec<f64>],
        delta_request: f64,
        chain: [f64; 4],
        eps: f64,
    ) -> Result<Self> {
        let r = box_radius(grid)?;
        let h = grid.spacing();
        if !(delta_request > 0.0) {
            return Err(Error::Parameter(format!(
                "requested spike radius must be positive, got {delta_request}"
            )));
        }
        let mut anchors = Vec::with_capacity(anchor_points.len());
        for p in anchor_points {
            let node = grid.nearest_node(p)?;
            anchors.push(node);
        }
        // Geometric caps after snapping.
        let mut cap = r / 4.0;
        for (i, &p) in anchors.iter().enumerate() {
            cap = cap.min(grid.node_norm(p) / 3.0);
            for &q in &anchors[..i] {
                if q != p {
                    cap = cap.min(grid.node_distance(p, q) / 3.0);
                }
            }
        }
        let e1 = headroom_margin(eps, chain[1] - chain[0], r, h)?;
        let mut k = (delta_request.min(cap) / h + 1e-9).floor() as i64;
        while k >= MIN_RING_STEPS as i64 && 2.0 * chain[3] * (k as f64 * h) >= e1 {
            k -= 1;
        }
        if k < MIN_RING_STEPS as i64 {
            return Err(Error::Grid(format!(
                "no spike radius fits: the caps force delta below \
                 {MIN_RING_STEPS} grid steps (h = {h}, eps1 = {e1})"
            )));
        }
        let delta = k as f64 * h;
        let layout = BumpLayout {
            grid: grid.clone(),
            delta,
            anchors,
            chain,
        };
        validate_geometry(&layout.grid, layout.delta, &layout.anchors, layout.chain)?;
        Ok(layout)
    }

    /// Evenly spaced anchors on the quarter-box ring: `count` angles in
    /// two or more dimensions, at most two signed offsets in one.
    pub fn ring(grid: &GridSpec, count: usize, chain: [f64; 4], eps: f64) -> Result<Self> {
        let r = box_radius(grid)?;
        let h = grid.spacing();
        let n = grid.dim();
        if count == 0 {
            return Err(Error::Parameter("ring layout needs at least one anchor".into()));
        }
        let rho = r / 4.0 - h * (n as f64).sqrt();
        if rho <= 0.0 {
            return Err(Error::Grid(
                "grid too coarse to place a quarter-box anchor ring".into(),
            ));
        }
        let mut points: Vec<Vec<f64>> = Vec::with_capacity(count);
        if n == 1 {
            if count > 2 {
                return Err(Error::Parameter(format!(
                    "a one-dimensional ring fits at most two anchors, \
                     requested {count}"
                )));
            }
            points.push(vec![rho]);
            if count == 2 {
                points.push(vec![-rho]);
            }
        } else {
            // Capacity: neighboring anchors must stay >= 3 * (4h) apart
            // after snapping for any admissible spike radius to exist.
            if count > 1 {
                let chord = 2.0 * rho * (PI / count as f64).sin();
                let snap = h * (n as f64).sqrt();
                if chord - snap < 12.0 * h {
                    return Err(Error::Parameter(format!(
                        "anchor ring capacity exceeded: {count} anchors on a \
                         radius-{rho} ring cannot keep three spike radii apart"
                    )));
                }
            }
            for j in 0..count {
                let a = 2.0 * PI * j as f64 / count as f64;
                let mut p = vec![0.0; n];
                p[0] = rho * a.cos();
                p[1] = rho * a.sin();
                points.push(p);
            }
        }
        BumpLayout::new(grid, &points, r / 4.0, chain, eps)
    }

    /// Stand-alone reference layout on the unit box: three fixed anchors
    /// in two dimensions (or a signed pair in one), spike radius four grid
    /// steps, chain [`REFERENCE_CHAIN`].
    pub fn reference(grid: &GridSpec, eps: f64) -> Result<Self> {
        let h = grid.spacing();
        let points: Vec<Vec<f64>> = match grid.dim() {
            1 => vec![vec![16.0 * h], vec![-16.0 * h]],
            2 => vec![
                vec![16.0 * h, 0.0],
                vec![0.0, 16.0 * h],
                vec![-12.0 * h, -12.0 * h],
            ],
            n => {
                return Err(Error::Parameter(format!(
                    "reference layout is defined for one or two dimensions, got {n}"
                )))
            }
        };
        BumpLayout::new(grid, &points, 4.0 * h, REFERENCE_CHAIN, eps)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors.len()
    }

    pub fn chain(&self) -> [f64; 4] {
        self.chain
    }

    /// Grid term bounding how far a measured modulus can drift from the
    /// carved slope: `tau = 2 * c4 * h / delta`.
    pub fn tau_grid(&self) -> f64 {
        2.0 * self.chain[3] * self.grid.spacing() / self.delta
    }

    /// Sup-norm tolerance for the shifted-agreement test, `tau * delta`.
    pub fn agreement_tolerance(&self) -> f64 {
        2.0 * self.chain[3] * self.grid.spacing()
    }

    /// Serialize as a single metadata comment line (no leading `#`).
    pub fn to_comment(&self) -> String {
        let chain = self
            .chain
            .iter()
            .map(|c| format!("{c}"))
            .collect::<Vec<_>>()
            .join(",");
        let anchors = self
            .anchors
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "layout: delta={} chain={} anchors={}",
            self.delta, chain, anchors
        )
    }

    /// Parse a layout from a metadata comment produced by
    /// [`BumpLayout::to_comment`], validating it against `grid`. The
    /// headroom cap is rechecked when the layout is used to encode.
    pub fn from_comment(grid: &GridSpec, comment: &str) -> Result<Self> {
        let body = comment.trim().trim_start_matches('#').trim();
        let body = body.strip_prefix("layout:").ok_or_else(|| {
            Error::Format(format!("not a layout comment: {comment:?}"))
        })?;
        let mut delta = None;
        let mut chain = None;
        let mut anchors = None;
        for token in body.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                Error::Format(format!("malformed layout token {token:?}"))
            })?;
            match key {
                "delta" => {
                    delta = Some(value.parse::<f64>().map_err(|_| {
                        Error::Format(format!("bad delta value {value:?}"))
                    })?);
                }
                "chain" => {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|p| {
                            p.parse::<f64>().map_err(|_| {
                                Error::Format(format!("bad chain entry {p:?}"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    if parts.len() != 4 {
                        return Err(Error::Format(format!(
                            "chain needs exactly four entries, got {}",
                            parts.len()
                        )));
                    }
                    chain = Some([parts[0], parts[1], parts[2], parts[3]]);
                }
                "anchors" => {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|p| {
                            p.parse::<usize>().map_err(|_| {
                                Error::Format(format!("bad anchor index {p:?}"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    anchors = Some(parts);
                }
                other => {
                    return Err(Error::Format(format!(
                        "unknown layout field {other:?}"
                    )));
                }
            }
        }
        let (Some(delta), Some(chain), Some(anchors)) = (delta, chain, anchors) else {
            return Err(Error::Format(
                "layout comment needs delta=, chain= and anchors= fields".into(),
            ));
        };
        validate_geometry(grid, delta, &anchors, chain)?;
        Ok(BumpLayout {
            grid: grid.clone(),
            delta,
            anchors,
            chain,
        })
    }
}

/// Carve a payload `s` (one value in `[0, 1]` per anchor) into `phi`.
///
/// The carrier must be `c1`-Lipschitz with values in `[0, 1]`. The output
/// agrees bitwise with the headroom-depressed carrier outside the spike
/// balls (and with `phi` itself on the boundary layer), stays within
/// `eps` of `phi` in sup norm, and is `c4`-Lipschitz. Anchor `k` carries
/// the slope `(1 - s_k) * c2 + s_k * c3` on the ball of radius `delta`;
/// the origin ball of radius `delta/2` carries `c4`.
pub fn multibump_encode(
    phi: &SampledFunction,
    s: &[f64],
    layout: &BumpLayout,
    eps: f64,
) -> Result<SampledFunction> {
    let grid = phi.grid();
    if grid != layout.grid() {
        return Err(Error::Grid("carrier grid does not match the layout".into()));
    }
    if s.len() != layout.anchor_count() {
        return Err(Error::Parameter(format!(
            "payload length {} does not match the {} layout anchors",
            s.len(),
            layout.anchor_count()
        )));
    }
    for (k, &v) in s.iter().enumerate() {
        if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
            return Err(Error::Parameter(format!(
                "payload entry {k} must lie in [0, 1], got {v}"
            )));
        }
    }
    if !phi.range_clamped() {
        return Err(Error::Precondition(
            "carrier values must lie in [0, 1]".into(),
        ));
    }
    let chain = layout.chain();
    certify_lipschitz(phi, chain[0], CERT_SLACK)?;
    let (phi1, e1) = apply_headroom(phi, eps, chain[1] - chain[0])?;
    if 2.0 * chain[3] * layout.delta() >= e1 {
        return Err(Error::Parameter(format!(
            "headroom exhausted: need 2*c4*delta < eps1, got 2*{}*{} >= {e1}",
            chain[3],
            layout.delta()
        )));
    }
    let geo = Geometry::new(grid);
    let mut spikes = Vec::with_capacity(layout.anchor_count() + 1);
    spikes.push((grid.origin_index(), layout.delta() / 2.0, chain[3]));
    for (k, &p) in layout.anchors().iter().enumerate() {
        let sigma = (1.0 - s[k]) * chain[1] + s[k] * chain[2];
        spikes.push((p, layout.delta(), sigma));
    }
    let out = carve_spikes(phi1.values(), &geo, &spikes)?;
    SampledFunction::new(grid.clone(), out)
}

/// Read the payload back from a carved function: anchor `k` reports
/// `clamp((L_k - c2) / (c3 - c2), 0, 1)` where `L_k` is the local modulus
/// on the radius-`delta` ball around anchor `k`.
pub fn multibump_decode(phi_prime: &SampledFunction, layout: &BumpLayout) -> Result<Vec<f64>> {
    if phi_prime.grid() != layout.grid() {
        return Err(Error::Grid(
            "decoded grid does not match the layout".into(),
        ));
    }
    let chain = layout.chain();
    layout
        .anchors()
        .iter()
        .map(|&p| {
            let l = local_modulus(phi_prime, p, layout.delta())?;
            Ok(((l - chain[1]) / (chain[2] - chain[1])).clamp(0.0, 1.0))
        })
        .collect()
}

/// A finite family of sampled functions with its greedy half-`eps` cover:
/// centers, cover sets, and the cutoff weights `chi` that turn membership
/// into per-set payload values.
#[derive(Debug, Clone)]
pub struct FamilySpace {
    members: Vec<SampledFunction>,
    distances: Vec<Vec<f64>>,
    centers: Vec<usize>,
    sets: Vec<Vec<usize>>,
    chi: Vec<Vec<f64>>,
    epsilon: f64,
}

impl FamilySpace {
    pub fn members(&self) -> &[SampledFunction] {
        &self.members
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// Member indices chosen as cover centers, in greedy order.
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    /// Member indices of cover set `k` (within `eps/2` of center `k`).
    pub fn set(&self, k: usize) -> &[usize] {
        &self.sets[k]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Sup distance between members `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i][j]
    }

    /// Cutoff weight of member `i` for cover set `k`: one on the set,
    /// fading to zero at distance `eps/4` from it.
    pub fn chi(&self, k: usize, i: usize) -> f64 {
        self.chi[k][i]
    }

    /// Payload vector for member `i`: its weight in every cover set.
    pub fn chi_vector(&self, i: usize) -> Vec<f64> {
        (0..self.set_count()).map(|k| self.chi[k][i]).collect()
    }
}

/// Build the greedy half-`eps` cover of a member list.
///
/// Centers are chosen in member order, each at least `eps/2` from all
/// previous centers; set `k` collects the members within `eps/2` of
/// center `k`, so every member lands in at least one set. The support of
/// each cutoff `chi_k` (members within `eps/4` of the set) must have
/// diameter below `eps`, otherwise the family is too crowded to resolve
/// at this `eps` and an error is returned.
pub fn build_cover(members: Vec<SampledFunction>, eps: f64) -> Result<FamilySpace> {
    if members.is_empty() {
        return Err(Error::Parameter("family needs at least one member".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!(
            "cover resolution must be positive, got {eps}"
        )));
    }
    let n = members.len();
    let mut distances = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = members[i].sup_distance(&members[j])?;
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    let mut centers: Vec<usize> = Vec::new();
    for i in 0..n {
        if centers.iter().all(|&c| distances[i][c] >= eps / 2.0) {
            centers.push(i);
        }
    }
    let sets: Vec<Vec<usize>> = centers
        .iter()
        .map(|&c| {
            (0..n)
                .filter(|&i| distances[i][c] <= eps / 2.0)
                .collect()
        })
        .collect();
    let mut chi = vec![vec![0.0f64; n]; sets.len()];
    for (k, set) in sets.iter().enumerate() {
        for i in 0..n {
            let d_set = set
                .iter()
                .map(|&j| distances[i][j])
                .fold(f64::INFINITY, f64::min);
            chi[k][i] = (1.0 - d_set / (eps / 4.0)).clamp(0.0, 1.0);
        }
        // Support of chi_k: members strictly within eps/4 of the set.
        let support: Vec<usize> = (0..n).filter(|&i| chi[k][i] > 0.0).collect();
        for (a, &i) in support.iter().enumerate() {
            for &j in &support[..a] {
                if distances[i][j] >= eps {
                    return Err(Error::Parameter(format!(
                        "cover set {k} has support diameter >= eps = {eps}; \
                         the family is too crowded at this resolution"
                    )));
                }
            }
        }
    }
    Ok(FamilySpace {
        members,
        distances,
        centers,
        sets,
        chi,
        epsilon: eps,
    })
}

/// A family carved onto a shared bump layout: member `x` carries the
/// payload `chi(x)`, so members of different cover sets disagree with
/// every grid translate of one another.
#[derive(Debug, Clone)]
pub struct DistinguishedFamily {
    pub family: FamilySpace,
    pub layout: BumpLayout,
    pub encoded: Vec<SampledFunction>,
}

/// Encode every member of a `c`-Lipschitz family against the shared ring
/// layout with chain `(c, (3c + c')/4, (c + c')/2, c')`.
pub fn distinguish_family(
    members: Vec<SampledFunction>,
    eps: f64,
    c: f64,
    c_prime: f64,
) -> Result<DistinguishedFamily> {
    if !(c > 0.0 && c < c_prime) {
        return Err(Error::Parameter(format!(
            "slopes must satisfy 0 < c < c', got c = {c}, c' = {c_prime}"
        )));
    }
    let family = build_cover(members, eps)?;
    let grid = family.members()[0].grid().clone();
    let chain = [
        c,
        (3.0 * c + c_prime) / 4.0,
        (c + c_prime) / 2.0,
        c_prime,
    ];
    let layout = BumpLayout::ring(&grid, family.set_count(), chain, eps)?;
    let encoded = (0..family.member_count())
        .map(|i| {
            let s = family.chi_vector(i);
            multibump_encode(&family.members()[i], &s, &layout, eps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistinguishedFamily {
        family,
        layout,
        encoded,
    })
}

/// Search for a grid shift under which `a` matches `b` on the window.
///
/// Scans integer shifts `sigma` with `|sigma * h| <= shift_radius` in
/// row-major order and returns the first one where
/// `|a(t + sigma*h) - b(t)| <= eta` for every node `t` of the closed
/// Euclidean window ball; returns `None` when no shift matches. Requires
/// `window_radius + shift_radius <= r` so every probe stays on the grid.
pub fn shifted_agreement(
    a: &SampledFunction,
    b: &SampledFunction,
    window_radius: f64,
    shift_radius: f64,
    eta: f64,
) -> Result<Option<Vec<i64>>> {
    let grid = a.grid();
    if grid != b.grid() {
        return Err(Error::Grid("functions live on different grids".into()));
    }
    let r = box_radius(grid)?;
    if !(window_radius > 0.0) || shift_radius < 0.0 || eta < 0.0 {
        return Err(Error::Parameter(
            "window radius must be positive; shift radius and eta nonnegative".into(),
        ));
    }
    if window_radius + shift_radius > r + 1e-12 {
        return Err(Error::Parameter(format!(
            "window {window_radius} plus shift {shift_radius} exceeds the \
             box radius {r}"
        )));
    }
    let h = grid.spacing();
    let dim = grid.dim();
    let m = grid.points_per_axis();
    let window: Vec<(usize, Vec<usize>)> = (0..grid.num_nodes())
        .filter(|&t| grid.node_norm(t) <= window_radius + 1e-12)
        .map(|t| (t, grid.multi_index(t)))
        .collect();
    let s_max = (shift_radius / h + 1e-9).floor() as i64;
    let mut shift = vec![-s_max; dim];
    loop {
        let sq: i64 = shift.iter().map(|&s| s * s).sum();
        let within = h * (sq as f64).sqrt() <= shift_radius + 1e-12;
        if within {
            let mut all_match = true;
            'probe: for (t, tm) in &window {
                let mut sm = Vec::with_capacity(dim);
                for axis in 0..dim {
                    let idx = tm[axis] as i64 + shift[axis];
                    if idx < 0 || idx >= m as i64 {
                        all_match = false;
                        break 'probe;
                    }
                    sm.push(idx as usize);
                }
                let u = grid.flat_index(&sm);
                if (a.value(u) - b.value(*t)).abs() > eta {
                    all_match = false;
                    break;
                }
            }
            if all_match {
                return Ok(Some(shift));
            }
        }
        // Row-major odometer over [-s_max, s_max]^dim.
        let mut axis = dim;
        loop {
            if axis == 0 {
                return Ok(None);
            }
            axis -= 1;
            if shift[axis] < s_max {
                shift[axis] += 1;
                for digit in &mut shift[axis + 1..] {
                    *digit = -s_max;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipcore::random_lipschitz;

    fn box_grid(dim: usize, radius: f64, m: usize) -> GridSpec {
        GridSpec::make_grid(dim, GridKind::Box { radius }, m).unwrap()
    }

    fn constant(grid: &GridSpec, v: f64) -> SampledFunction {
        SampledFunction::constant(grid.clone(), v).unwrap()
    }

    #[test]
    fn constants_tighten_with_finer_grids() {
        let coarse = perturb_constants(&box_grid(1, 1.0, 65), 0.5, 0.2, 1.0).unwrap();
        let fine = perturb_constants(&box_grid(1, 1.0, 129), 0.5, 0.2, 1.0).unwrap();
        assert!(fine.delta > coarse.delta);
        assert!(fine.tau_grid < coarse.tau_grid);
        assert!(coarse.epsilon_one > 0.0 && coarse.epsilon_one <= 0.5 / 3.0);
    }

    #[test]
    fn break_invariance_certifies_the_modulus_gap() {
        let g = box_grid(1, 1.0, 129);
        let (eps, c, c_prime) = (0.5, 0.2, 1.0);
        let k = perturb_constants(&g, eps, c, c_prime).unwrap();
        let phi = random_lipschitz(&g, c, 41).unwrap();
        let (psi, delta) = break_invariance(&phi, eps, c, c_prime).unwrap();
        assert_eq!(delta, k.delta);
        // Sup-norm budget and range.
        assert!(psi.sup_distance(&phi).unwrap() < eps);
        assert!(psi.range_clamped());
        // Boundary layer bitwise untouched.
        for t in 0..g.num_nodes() {
            if g.is_boundary_node(t) {
                assert_eq!(psi.value(t), phi.value(t));
            }
        }
        // Origin modulus reads the steep slope.
        let l0 = local_modulus(&psi, g.origin_index(), delta).unwrap();
        assert!(l0 >= c_prime - k.tau_grid, "origin modulus {l0}");
        assert!(l0 <= c_prime + 1e-9, "origin modulus {l0}");
        // Direction anchors at three quarter radius stay near the carrier
        // slope midpoint.
        let mid = (c + c_prime) / 2.0;
        for q in direction_anchors(&g, 0.75).unwrap() {
            let lq = local_modulus(&psi, q, delta).unwrap();
            assert!(lq <= mid + k.tau_grid, "anchor modulus {lq}");
        }
        // Globally still c'-Lipschitz.
        certify_lipschitz(&psi, c_prime, 1e-9).unwrap();
    }

    #[test]
    fn break_invariance_rejects_bad_inputs() {
        let g = box_grid(1, 1.0, 129);
        // A step function is far from 0.2-Lipschitz.
        let vals: Vec<f64> = (0..129).map(|i| if i < 64 { 0.0 } else { 1.0 }).collect();
        let step = SampledFunction::new(g.clone(), vals).unwrap();
        match break_invariance(&step, 0.5, 0.2, 1.0) {
            Err(Error::NotLipschitz { .. }) => {}
            other => panic!("expected a Lipschitz rejection, got {other:?}"),
        }
        // Too coarse a grid: the spike ring cannot be resolved.
        let coarse = box_grid(1, 1.0, 9);
        let flat = constant(&coarse, 0.5);
        assert!(break_invariance(&flat, 0.5, 0.2, 1.0).is_err());
        // Inverted slopes.
        let flat = constant(&g, 0.5);
        assert!(break_invariance(&flat, 0.5, 1.0, 0.2).is_err());
    }

    #[test]
    fn headroom_depression_is_bitwise_trivial_on_the_boundary() {
        let g = box_grid(2, 1.0, 17);
        let phi = random_lipschitz(&g, 0.3, 5).unwrap();
        let (phi1, e1) = apply_headroom(&phi, 0.5, 0.25).unwrap();
        assert!(e1 > 0.0);
        for t in 0..g.num_nodes() {
            if g.is_boundary_node(t) {
                assert_eq!(phi1.value(t), phi.value(t));
            } else {
                assert!(phi1.value(t) <= phi.value(t));
                assert!(phi.value(t) - phi1.value(t) <= e1 + 1e-15);
            }
        }
    }

    #[test]
    fn reference_layout_snaps_and_roundtrips() {
        let g = box_grid(2, 1.0, 129);
        let layout = BumpLayout::reference(&g, 0.5).unwrap();
        let h = g.spacing();
        assert_eq!(layout.delta(), 4.0 * h);
        assert_eq!(layout.anchor_count(), 3);
        let comment = layout.to_comment();
        let back = BumpLayout::from_comment(&g, &comment).unwrap();
        assert_eq!(layout, back);
        // A '#'-prefixed copy (as stored in function files) parses too.
        let back2 = BumpLayout::from_comment(&g, &format!("# {comment}")).unwrap();
        assert_eq!(layout, back2);
    }

    #[test]
    fn layout_rejects_crowded_or_misplaced_anchors() {
        let g = box_grid(2, 1.0, 129);
        let h = g.spacing();
        // Two anchors closer than three spike radii force delta below the
        // ring resolution.
        let crowded = vec![vec![8.0 * h, 0.0], vec![11.0 * h, 0.0]];
        assert!(BumpLayout::new(&g, &crowded, 4.0 * h, REFERENCE_CHAIN, 0.5).is_err());
        // An anchor outside the quarter box.
        let outside = vec![vec![0.6, 0.0]];
        assert!(BumpLayout::new(&g, &outside, 4.0 * h, REFERENCE_CHAIN, 0.5).is_err());
        // The origin itself.
        let origin = vec![vec![0.0, 0.0]];
        assert!(BumpLayout::new(&g, &origin, 4.0 * h, REFERENCE_CHAIN, 0.5).is_err());
    }

    #[test]
    fn encode_decode_roundtrip_on_a_flat_carrier() {
        let g = box_grid(1, 1.0, 129);
        let layout = BumpLayout::reference(&g, 0.5).unwrap();
        let phi = constant(&g, 0.5);
        for s in [[0.0, 1.0], [0.25, 0.75], [1.0, 0.0]] {
            let carved = multibump_encode(&phi, &s, &layout, 0.5).unwrap();
            let decoded = multibump_decode(&carved, &layout).unwrap();
            for (k, (&want, got)) in s.iter().zip(&decoded).enumerate() {
                assert!(
                    (want - got).abs() <= 1e-9,
                    "anchor {k}: sent {want}, decoded {got}"
                );
            }
            // The origin spike reads back the top chain slope exactly on a
            // flat carrier.
            let l0 = local_modulus(&carved, g.origin_index(), layout.delta() / 2.0).unwrap();
            assert!((l0 - layout.chain()[3]).abs() <= 1e-9, "origin modulus {l0}");
            // Budget, range, and the global slope bound.
            assert!(carved.sup_distance(&phi).unwrap() < 0.5);
            assert!(carved.range_clamped());
            certify_lipschitz(&carved, layout.chain()[3], 1e-9).unwrap();
        }
    }

    #[test]
    fn encode_touches_only_the_spike_balls() {
        let g = box_grid(1, 1.0, 129);
        let layout = BumpLayout::reference(&g, 0.5).unwrap();
        let phi = random_lipschitz(&g, 0.2, 9).unwrap();
        let carved = multibump_encode(&phi, &[0.5, 0.5], &layout, 0.5).unwrap();
        let (phi1, _) = apply_headroom(&phi, 0.5, layout.chain()[1] - layout.chain()[0]).unwrap();
        let origin = g.origin_index();
        for t in 0..g.num_nodes() {
            let in_origin_ball = g.node_distance(t, origin) < layout.delta() / 2.0;
            let in_anchor_ball = layout
                .anchors()
                .iter()
                .any(|&p| g.node_distance(t, p) < layout.delta());
            if !in_origin_ball && !in_anchor_ball {
                assert_eq!(carved.value(t), phi1.value(t), "node {t} moved");
            } else {
                assert!(carved.value(t) >= phi1.value(t), "spike must raise values");
            }
            if g.is_boundary_node(t) {
                assert_eq!(carved.value(t), phi.value(t));
            }
        }
    }

    #[test]
    fn decode_is_monotone_in_the_payload() {
        let g = box_grid(1, 1.0, 129);
        let layout = BumpLayout::reference(&g, 0.5).unwrap();
        let phi = constant(&g, 0.5);
        let mut last = -1.0;
        for step in 0..5 {
            let s0 = step as f64 / 4.0;
            let carved = multibump_encode(&phi, &[s0, 0.5], &layout, 0.5).unwrap();
            let decoded = multibump_decode(&carved, &layout).unwrap();
            assert!(decoded[0] > last, "payload {s0} decoded {}", decoded[0]);
            assert!((decoded[1] - 0.5).abs() <= 1e-9);
            last = decoded[0];
        }
    }

    #[test]
    fn encode_rejects_exhausted_headroom() {
        let g = box_grid(1, 1.0, 129);
        let layout = BumpLayout::reference(&g, 0.5).unwrap();
        let phi = constant(&g, 0.5);
        // A much smaller budget than the layout was built for: eps1 drops
        // below 2*c4*delta and the encode must refuse.
        let err = multibump_encode(&phi, &[0.0, 0.0], &layout, 0.05).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)), "got {err:?}");
    }

    #[test]
    fn cover_of_separated_members_is_a_partition_of_singletons() {
        let g = box_grid(1, 1.0, 33);
        let members = vec![constant(&g, 0.1), constant(&g, 0.5), constant(&g, 0.9)];
        let fam = build_cover(members, 0.3).unwrap();
        assert_eq!(fam.set_count(), 3);
        for k in 0..3 {
            assert_eq!(fam.set(k), &[k]);
            for i in 0..3 {
                let want = if i == k { 1.0 } else { 0.0 };
                assert_eq!(fam.chi(k, i), want);
            }
        }
    }

    #[test]
    fn cover_groups_nearby_members() {
        let g = box_grid(1, 1.0, 33);
        let members = vec![constant(&g, 0.10), constant(&g, 0.12), constant(&g, 0.55)];
        let fam = build_cover(members, 0.3).unwrap();
        assert_eq!(fam.centers(), &[0, 2]);
        assert_eq!(fam.set(0), &[0, 1]);
        assert_eq!(fam.set(1), &[2]);
        // Members of a set get full weight; the far member gets none.
        assert_eq!(fam.chi(0, 0), 1.0);
        assert_eq!(fam.chi(0, 1), 1.0);
        assert_eq!(fam.chi(0, 2), 0.0);
        // Every member is covered.
        for i in 0..3 {
            assert!((0..fam.set_count()).any(|k| fam.set(k).contains(&i)));
        }
    }

    #[test]
    fn distinguish_separated_constants() {
        let g = box_grid(1, 1.0, 193);
        let (eps, c, c_prime) = (0.27, 0.2, 1.0);
        let members = vec![constant(&g, 0.25), constant(&g, 0.75)];
        let fam = distinguish_family(members, eps, c, c_prime).unwrap();
        assert_eq!(fam.family.set_count(), 2);
        assert_eq!(fam.encoded.len(), 2);
        let eta = fam.layout.agreement_tolerance();
        let r_half = 0.5;
        // Each member matches a shifted copy of itself (the zero shift).
        for gx in &fam.encoded {
            let hit = shifted_agreement(gx, gx, r_half, r_half, eta).unwrap();
            assert!(hit.is_some());
        }
        // Distinct members match no shifted copy of one another.
        let miss = shifted_agreement(&fam.encoded[0], &fam.encoded[1], r_half, r_half, eta)
            .unwrap();
        assert!(miss.is_none(), "unexpected matching shift {miss:?}");
        let miss = shifted_agreement(&fam.encoded[1], &fam.encoded[0], r_half, r_half, eta)
            .unwrap();
        assert!(miss.is_none());
    }

    #[test]
    fn ring_capacity_is_enforced() {
        let g = box_grid(1, 1.0, 193);
        assert!(BumpLayout::ring(&g, 3, REFERENCE_CHAIN, 0.5).is_err());
        // Far too many anchors for a quarter-box ring in two dimensions.
        let g2 = box_grid(2, 1.0, 65);
        assert!(BumpLayout::ring(&g2, 40, REFERENCE_CHAIN, 0.5).is_err());
    }

    #[test]
    fn agreement_scan_finds_the_exact_translate() {
        let g = box_grid(1, 1.0, 33);
        let h = g.spacing();
        // A ramp and its two-step translate: the only matching shift moves
        // the probe two nodes up.
        let ramp: Vec<f64> = (0..33).map(|i| 0.1 + 0.8 * i as f64 / 32.0).collect();
        let mut moved = vec![0.0; 33];
        for i in 0..33 {
            moved[i] = ramp[(i + 2).min(32)];
        }
        let a = SampledFunction::new(g.clone(), ramp).unwrap();
        let b = SampledFunction::new(g.clone(), moved).unwrap();
        // b(t) = a(t + 2h) on the window, so a matches b at shift +2.
        let hit = shifted_agreement(&a, &b, 0.5, 0.5, 0.8 * h / 2.0 * 0.9)
            .unwrap()
            .expect("translate must be found");
        assert_eq!(hit, vec![2]);
    }
}
