//! Grid domains, sampled functions, periodic shifts, and the LFN text format.
//!
//! Two domain kinds are supported: a box `[-r, r]^n` whose outermost node
//! layer plays the role of the boundary sphere, and a torus `R^n / M Z^n`.
//! All operators in this crate are node-to-node; nothing interpolates.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Domain kind of a [`GridSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    /// Box `[-radius, radius]^n`, nodes at `-r + i*h`, odd node count so the
    /// origin is a node.
    Box { radius: f64 },
    /// Torus `R^n / period*Z^n`, nodes at `i*h` for `i = 0..m-1`.
    Torus { period: f64 },
}

/// A finite rectangular sampling of a box or a torus with uniform spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    kind: GridKind,
    spacing: f64,
    points_per_axis: usize,
}

impl GridSpec {
    /// Construct a grid. Box grids require odd `points_per_axis >= 3` so the
    /// origin and the boundary layer are nodes; torus grids require
    /// `points_per_axis >= 2`.
    pub fn make_grid(dim: usize, kind: GridKind, points_per_axis: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Grid("dim must be >= 1".into()));
        }
        let m = points_per_axis;
        let spacing = match kind {
            GridKind::Box { radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Grid(format!("box radius must be positive, got {radius}")));
                }
                if m < 3 {
                    return Err(Error::Grid(format!("box grid needs >= 3 points per axis, got {m}")));
                }
                if m % 2 == 0 {
                    return Err(Error::Grid(format!(
                        "box grid needs an odd point count so the origin is a node, got {m}"
                    )));
                }
                2.0 * radius / (m - 1) as f64
            }
            GridKind::Torus { period } => {
                if !(period > 0.0) || !period.is_finite() {
                    return Err(Error::Grid(format!("torus period must be positive, got {period}")));
                }
                if m < 2 {
                    return Err(Error::Grid(format!("torus grid needs >= 2 points per axis, got {m}")));
                }
                period / m as f64
            }
        };
        // m^n must fit in usize; keep grids at desk scale.
        let mut nodes: usize = 1;
        for _ in 0..dim {
            nodes = nodes
                .checked_mul(m)
                .ok_or_else(|| Error::Grid(format!("grid too large: {m}^{dim} nodes")))?;
        }
        Ok(GridSpec { dim, kind, spacing, points_per_axis: m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.kind, GridKind::Torus { .. })
    }

    /// Total node count `m^n`.
    pub fn num_nodes(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Decode a flat index into per-axis indices, row-major with the last
    /// axis fastest.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        debug_assert!(flat < self.num_nodes());
        let m = self.points_per_axis;
        let mut mi = vec![0usize; self.dim];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            mi[axis] = rest % m;
            rest /= m;
        }
        mi
    }

    /// Encode per-axis indices into a flat index.
    pub fn flat_index(&self, mi: &[usize]) -> usize {
        debug_assert_eq!(mi.len(), self.dim);
        let m = self.points_per_axis;
        let mut flat = 0usize;
        for &i in mi {
            debug_assert!(i < m);
            flat = flat * m + i;
        }
        flat
    }

    /// Coordinates of a node.
    pub fn coord(&self, flat: usize) -> Vec<f64> {
        let mi = self.multi_index(flat);
        self.coord_of_multi(&mi)
    }

    /// Coordinates from per-axis indices.
    pub fn coord_of_multi(&self, mi: &[usize]) -> Vec<f64> {
        let h = self.spacing;
        match self.kind {
            GridKind::Box { radius } => mi.iter().map(|&i| -radius + i as f64 * h).collect(),
            GridKind::Torus { .. } => mi.iter().map(|&i| i as f64 * h).collect(),
        }
    }

    /// Euclidean distance between two nodes, computed from integer index
    /// deltas so it is exact under node permutations. On a torus each axis
    /// takes the minimum over periodic images, which realizes the true
    /// quotient-metric distance for every pair.
    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        let ma = self.multi_index(a);
        let mb = self.multi_index(b);
        self.multi_distance(&ma, &mb)
    }

    /// Same as [`node_distance`](Self::node_distance) on per-axis indices.
    pub fn multi_distance(&self, ma: &[usize], mb: &[usize]) -> f64 {
        let m = self.points_per_axis;
        let mut sq: u64 = 0;
        for axis in 0..self.dim {
            let d = ma[axis].abs_diff(mb[axis]);
            let d = match self.kind {
                GridKind::Box { .. } => d,
                GridKind::Torus { .. } => d.min(m - d),
            };
            sq += (d as u64) * (d as u64);
        }
        self.spacing * (sq as f64).sqrt()
    }

    /// Distance from a node to the origin node (box center, torus zero).
    pub fn node_norm(&self, flat: usize) -> f64 {
        self.node_distance(flat, self.origin_index())
    }

    /// Flat index of the origin node.
    pub fn origin_index(&self) -> usize {
        match self.kind {
            GridKind::Box { .. } => {
                let mid = (self.points_per_axis - 1) / 2;
                self.flat_index(&vec![mid; self.dim])
            }
            GridKind::Torus { .. } => 0,
        }
    }

    /// Nearest node to an arbitrary point (ties toward lower index). The
    /// point is clamped into the box, or wrapped onto the torus.
    pub fn nearest_node(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim {
            return Err(Error::Grid(format!(
                "point has dim {}, grid has dim {}",
                point.len(),
                self.dim
            )));
        }
        let m = self.points_per_axis;
        let h = self.spacing;
        let mut mi = vec![0usize; self.dim];
        for axis in 0..self.dim {
            let x = point[axis];
            if !x.is_finite() {
                return Err(Error::Grid(format!("non-finite coordinate on axis {axis}")));
            }
            let stepped = match self.kind {
                GridKind::Box { radius } => ((x + radius) / h).round().clamp(0.0, (m - 1) as f64),
                GridKind::Torus { period } => {
                    let wrapped = x.rem_euclid(period);
                    let i = (wrapped / h).round();
                    if i as usize >= m {
                        0.0
                    } else {
                        i
                    }
                }
            };
            mi[axis] = stepped as usize;
        }
        Ok(self.flat_index(&mi))
    }

    /// True if the node lies on the outermost layer of a box grid (some axis
    /// index is 0 or m-1). Always false on a torus.
    pub fn is_boundary_node(&self, flat: usize) -> bool {
        match self.kind {
            GridKind::Torus { .. } => false,
            GridKind::Box { .. } => {
                let m = self.points_per_axis;
                self.multi_index(flat).iter().any(|&i| i == 0 || i == m - 1)
            }
        }
    }

    /// Euclidean distance from a box node to the nearest boundary-layer node.
    /// The nearest boundary node sits straight out along a max-coordinate
    /// axis, so this is `r - |t|_inf` exactly.
    pub fn dist_to_boundary_layer(&self, flat: usize) -> Result<f64> {
        let GridKind::Box { radius } = self.kind else {
            return Err(Error::Grid("boundary layer is defined for box grids only".into()));
        };
        let sup = self
            .coord(flat)
            .iter()
            .map(|x| x.abs())
            .fold(0.0f64, f64::max);
        Ok((radius - sup).max(0.0))
    }
}

/// Values of a scalar function at every node of a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: GridSpec,
    values: Vec<f64>,
    range_clamped: bool,
}

impl SampledFunction {
    /// Wrap a value array; rejects length mismatch and non-finite entries.
    /// `range_clamped` is set iff every value lies in `[0, 1]`.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::Grid(format!(
                "value count {} does not match node count {}",
                values.len(),
                grid.num_nodes()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Grid(format!("non-finite value {v} at node {i}")));
            }
        }
        let range_clamped = values.iter().all(|&v| (0.0..=1.0).contains(&v));
        Ok(SampledFunction { grid, values, range_clamped })
    }

    /// The constant function.
    pub fn constant(grid: GridSpec, v: f64) -> Result<Self> {
        let n = grid.num_nodes();
        Self::new(grid, vec![v; n])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn range_clamped(&self) -> bool {
        self.range_clamped
    }

    /// Max absolute difference of values against another function on the
    /// same grid.
    pub fn sup_distance(&self, other: &SampledFunction) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Grid("sup_distance requires matching grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Evaluate a host-provided field at every node.
pub fn sample_field<F>(grid: &GridSpec, field: F) -> Result<SampledFunction>
where
    F: Fn(&[f64]) -> f64,
{
    let n = grid.num_nodes();
    let mut values = Vec::with_capacity(n);
    for flat in 0..n {
        let x = grid.coord(flat);
        let v = field(&x);
        if !v.is_finite() {
            return Err(Error::Grid(format!("field returned {v} at node {flat} ({x:?})")));
        }
        values.push(v);
    }
    SampledFunction::new(grid.clone(), values)
}

/// Shift a torus-sampled function by whole grid steps per axis:
/// `result(t) = phi(t + steps*h mod M)`. A pure index permutation.
pub fn torus_shift_steps(phi: &SampledFunction, steps: &[i64]) -> Result<SampledFunction> {
    let grid = phi.grid();
    if !grid.is_torus() {
        return Err(Error::Grid("torus_shift requires a torus grid".into()));
    }
    if steps.len() != grid.dim() {
        return Err(Error::Grid(format!(
            "shift has dim {}, grid has dim {}",
            steps.len(),
            grid.dim()
        )));
    }
    let m = grid.points_per_axis() as i64;
    let n = grid.num_nodes();
    let mut out = vec![0.0f64; n];
    for flat in 0..n {
        let mut mi = grid.multi_index(flat);
        for axis in 0..grid.dim() {
            let shifted = (mi[axis] as i64 + steps[axis]).rem_euclid(m);
            mi[axis] = shifted as usize;
        }
        out[flat] = phi.value(grid.flat_index(&mi));
    }
    SampledFunction::new(grid.clone(), out)
}

/// Shift by a grid vector given in coordinates; errors if any component is
/// not a whole number of grid steps (off-grid shifts are out of contract).
pub fn torus_shift(phi: &SampledFunction, u: &[f64]) -> Result<SampledFunction> {
    let grid = phi.grid();
    let h = grid.spacing();
    let mut steps = Vec::with_capacity(u.len());
    for (axis, &x) in u.iter().enumerate() {
        let s = x / h;
        let rounded = s.round();
        if (s - rounded).abs() > 1e-9 {
            return Err(Error::Grid(format!(
                "shift component {x} on axis {axis} is not a multiple of spacing {h}"
            )));
        }
        steps.push(rounded as i64);
    }
    torus_shift_steps(phi, &steps)
}

/// A finite offset set in a fundamental domain `[0, M)^n`, extended
/// M-periodically. Offsets live on an associated torus grid of period M.
#[derive(Debug, Clone)]
pub struct LatticeSubset {
    period: f64,
    grid: GridSpec,
    /// Per-axis indices of each offset on the associated grid.
    offsets: Vec<Vec<usize>>,
    density_radius: f64,
}

impl LatticeSubset {
    /// Build from explicit offset nodes of a period-M torus grid.
    pub fn new(grid: GridSpec, offset_nodes: &[usize]) -> Result<Self> {
        let GridKind::Torus { period } = grid.kind() else {
            return Err(Error::Grid("lattice offsets must live on a torus grid".into()));
        };
        if offset_nodes.is_empty() {
            return Err(Error::Grid("lattice subset needs at least one offset".into()));
        }
        let mut sorted = offset_nodes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != offset_nodes.len() {
            return Err(Error::Grid("lattice offsets must be pairwise distinct".into()));
        }
        let offsets: Vec<Vec<usize>> = sorted.iter().map(|&f| grid.multi_index(f)).collect();
        let density_radius = covering_radius(&grid, &sorted);
        Ok(LatticeSubset { period, grid, offsets, density_radius })
    }

    /// Offsets at every node whose per-axis indices are multiples of
    /// `stride`; `stride` must divide the axis node count.
    pub fn from_stride(grid: &GridSpec, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Grid("stride must be positive".into()));
        }
        let m = grid.points_per_axis();
        if m % stride != 0 {
            return Err(Error::Grid(format!(
                "stride {stride} does not divide the axis node count {m}"
            )));
        }
        let per_axis = m / stride;
        let n = grid.dim();
        let count = per_axis.pow(n as u32);
        let mut nodes = Vec::with_capacity(count);
        let mut mi = vec![0usize; n];
        for flat in 0..count {
            let mut rest = flat;
            for axis in (0..n).rev() {
                mi[axis] = (rest % per_axis) * stride;
                rest /= per_axis;
            }
            nodes.push(grid.flat_index(&mi));
        }
        Self::new(grid.clone(), &nodes)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// The associated period-M torus grid.
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Per-axis offset indices, in row-major coset order.
    pub fn offset_indices(&self) -> &[Vec<usize>] {
        &self.offsets
    }

    /// Offset coordinates in `[0, M)^n`.
    pub fn offset_coords(&self) -> Vec<Vec<f64>> {
        self.offsets.iter().map(|mi| self.grid.coord_of_multi(mi)).collect()
    }

    /// Covering radius of the periodic extension, measured over the nodes of
    /// the associated grid.
    pub fn density_radius(&self) -> f64 {
        self.density_radius
    }

    /// All nodes of `target` (a torus grid with the same spacing and a period
    /// that is a whole multiple of M) that lie on the periodic extension of
    /// the offsets.
    pub fn nodes_on(&self, target: &GridSpec) -> Result<Vec<usize>> {
        let GridKind::Torus { period: target_period } = target.kind() else {
            return Err(Error::Grid("lattice extension target must be a torus grid".into()));
        };
        if target.dim() != self.grid.dim() {
            return Err(Error::Grid("lattice extension target has mismatched dim".into()));
        }
        if (target.spacing() - self.grid.spacing()).abs() > 1e-12 * self.grid.spacing() {
            return Err(Error::Grid("lattice extension target must share the grid spacing".into()));
        }
        let ratio = target_period / self.period;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(Error::Grid(format!(
                "target period {target_period} is not a whole multiple of the lattice period {}",
                self.period
            )));
        }
        // Index steps per period M on the shared spacing.
        let steps_per_period = self.grid.points_per_axis();
        let mut hits = Vec::new();
        for flat in 0..target.num_nodes() {
            let mi = target.multi_index(flat);
            let reduced: Vec<usize> = mi.iter().map(|&i| i % steps_per_period).collect();
            if self.offsets.iter().any(|o| *o == reduced) {
                hits.push(flat);
            }
        }
        Ok(hits)
    }
}

/// Brute-force covering radius: max over grid nodes of the distance to the
/// nearest offset, in the torus metric.
fn covering_radius(grid: &GridSpec, offset_nodes: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for flat in 0..grid.num_nodes() {
        let nearest = offset_nodes
            .iter()
            .map(|&o| grid.node_distance(flat, o))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    worst
}

/// A loaded LFN stream: the sampled function plus any `#`-comment lines.
#[derive(Debug, Clone)]
pub struct LfnDocument {
    pub function: SampledFunction,
    pub comments: Vec<String>,
}

/// Serialize to the LFN text format. Values are printed with 17 significant
/// digits so a save/load round trip is exact.
pub fn save_lfn<W: Write>(phi: &SampledFunction, sink: &mut W) -> Result<()> {
    save_lfn_with_comments(phi, &[], sink)
}

/// Serialize with trailing comment lines (each written as `#...`).
pub fn save_lfn_with_comments<W: Write>(
    phi: &SampledFunction,
    comments: &[String],
    sink: &mut W,
) -> Result<()> {
    let grid = phi.grid();
    let mut text = String::new();
    text.push_str("lfn 1\n");
    let _ = writeln!(text, "dim={}", grid.dim());
    match grid.kind() {
        GridKind::Box { radius } => {
            let _ = writeln!(text, "kind=box radius={}", fmt_f64(radius));
        }
        GridKind::Torus { period } => {
            let _ = writeln!(text, "kind=torus period={}", fmt_f64(period));
        }
    }
    let shape: Vec<String> = (0..grid.dim())
        .map(|_| grid.points_per_axis().to_string())
        .collect();
    let _ = writeln!(text, "shape={}", shape.join(" "));
    let _ = writeln!(text, "spacing={}", fmt_f64(grid.spacing()));
    let _ = writeln!(text, "clamped={}", if phi.range_clamped() { 1 } else { 0 });
    for v in phi.values() {
        let _ = writeln!(text, "{}", fmt_f64(*v));
    }
    for c in comments {
        let _ = writeln!(text, "#{c}");
    }
    sink.write_all(text.as_bytes())?;
    Ok(())
}

/// 17 significant digits round-trips every f64 exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parse an LFN stream, ignoring `#`-comment lines in the value section.
pub fn load_lfn<R: BufRead>(source: R) -> Result<SampledFunction> {
    Ok(load_lfn_document(source)?.function)
}

/// Parse an LFN stream keeping comment lines (used by decode for layouts).
pub fn load_lfn_document<R: BufRead>(source: R) -> Result<LfnDocument> {
    let mut lines = Vec::new();
    for line in source.lines() {
        lines.push(line?);
    }
    let mut iter = lines.iter().map(|s| s.as_str());
    let magic = iter.next().ok_or_else(|| Error::Format("empty stream".into()))?;
    if magic.trim() != "lfn 1" {
        return Err(Error::Format(format!("bad magic line {magic:?}, expected \"lfn 1\"")));
    }
    let dim: usize = parse_kv(iter.next(), "dim")?
        .parse()
        .map_err(|_| Error::Format("dim is not an integer".into()))?;
    let kind_line = iter.next().ok_or_else(|| Error::Format("missing kind line".into()))?;
    let shape_line = parse_kv(iter.next(), "shape")?;
    let spacing: f64 = parse_kv(iter.next(), "spacing")?
        .parse()
        .map_err(|_| Error::Format("spacing is not a number".into()))?;
    let clamped_str = parse_kv(iter.next(), "clamped")?;
    if clamped_str != "0" && clamped_str != "1" {
        return Err(Error::Format(format!("clamped must be 0 or 1, got {clamped_str:?}")));
    }

    let shape: Vec<usize> = shape_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad shape entry {t:?}"))))
        .collect::<Result<_>>()?;
    if shape.len() != dim {
        return Err(Error::Format(format!(
            "shape lists {} axes but dim={dim}",
            shape.len()
        )));
    }
    let m = shape[0];
    if shape.iter().any(|&s| s != m) {
        return Err(Error::Format("all shape entries must be equal".into()));
    }

    let kind = parse_kind(kind_line)?;
    let grid = GridSpec::make_grid(dim, kind, m)?;
    // The header's spacing must match the one derived from size and shape.
    if (grid.spacing() - spacing).abs() > 1e-9 * grid.spacing().max(1.0) {
        return Err(Error::Format(format!(
            "declared spacing {spacing} does not match derived spacing {}",
            grid.spacing()
        )));
    }

    let mut values = Vec::with_capacity(grid.num_nodes());
    let mut comments = Vec::new();
    for line in iter {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            comments.push(comment.to_string());
            continue;
        }
        for tok in trimmed.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Format(format!("bad value token {tok:?}")))?;
            values.push(v);
        }
    }
    if values.len() != grid.num_nodes() {
        return Err(Error::Format(format!(
            "declared shape needs {} values, stream has {}",
            grid.num_nodes(),
            values.len()
        )));
    }
    let function = SampledFunction::new(grid, values)?;
    if clamped_str == "1" && !function.range_clamped() {
        return Err(Error::Format("clamped=1 but values leave [0,1]".into()));
    }
    Ok(LfnDocument { function, comments })
}

fn parse_kv<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::Format(format!("missing {key} line")))?;
    line.trim()
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::Format(format!("expected {key}=..., got {line:?}")))
}

fn parse_kind(line: &str) -> Result<GridKind> {
    let body = parse_kv(Some(line), "kind")?;
    let mut parts = body.split_whitespace();
    match parts.next() {
        Some("box") => {
            let r = parse_kv(parts.next(), "radius")?
                .parse()
                .map_err(|_| Error::Format("bad radius".into()))?;
            Ok(GridKind::Box { radius: r })
        }
        Some("torus") => {
            let p = parse_kv(parts.next(), "period")?
                .parse()
                .map_err(|_| Error::Format("bad period".into()))?;
            Ok(GridKind::Torus { period: p })
        }
        other => Err(Error::Format(format!("unknown kind {other:?}"))),
    }
}

/// Convenience path wrappers.
pub fn save_lfn_path<P: AsRef<Path>>(phi: &SampledFunction, path: P) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_lfn(phi, &mut file)
}

pub fn load_lfn_path<P: AsRef<Path>>(path: P) -> Result<SampledFunction> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    load_lfn(file)
}

pub fn load_lfn_document_path<P: AsRef<Path>>(path: P) -> Result<LfnDocument> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    load_lfn_document(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn box_grid(dim: usize, r: f64, m: usize) -> GridSpec {
        GridSpec::make_grid(dim, GridKind::Box { radius: r }, m).unwrap()
    }

    fn torus_grid(dim: usize, period: f64, m: usize) -> GridSpec {
        GridSpec::make_grid(dim, GridKind::Torus { period }, m).unwrap()
    }

    #[test]
    fn box_nodes_include_origin_and_boundary() {
        let g = box_grid(1, 1.0, 5);
        assert_eq!(g.spacing(), 0.5);
        let coords: Vec<f64> = (0..5).map(|i| g.coord(i)[0]).collect();
        assert_eq!(coords, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.origin_index(), 2);
    }

    #[test]
    fn torus_grid_shape() {
        let g = torus_grid(2, 4.0, 8);
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.num_nodes(), 64);
    }

    #[test]
    fn even_box_count_rejected() {
        assert!(GridSpec::make_grid(1, GridKind::Box { radius: 1.0 }, 4).is_err());
    }

    #[test]
    fn nonpositive_sizes_rejected() {
        assert!(GridSpec::make_grid(1, GridKind::Box { radius: 0.0 }, 5).is_err());
        assert!(GridSpec::make_grid(1, GridKind::Torus { period: -1.0 }, 4).is_err());
    }

    #[test]
    fn sample_field_abs() {
        let g = box_grid(1, 1.0, 5);
        let phi = sample_field(&g, |x| x[0].abs()).unwrap();
        assert_eq!(phi.values(), &[1.0, 0.5, 0.0, 0.5, 1.0]);
        assert!(phi.range_clamped());
    }

    #[test]
    fn sample_field_rejects_nan() {
        let g = box_grid(1, 1.0, 5);
        assert!(sample_field(&g, |_| f64::NAN).is_err());
    }

    #[test]
    fn torus_shift_is_permutation() {
        let g = torus_grid(1, 1.0, 4);
        let phi = SampledFunction::new(g.clone(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let shifted = torus_shift_steps(&phi, &[1]).unwrap();
        assert_eq!(shifted.values(), &[2.0, 3.0, 4.0, 1.0]);
        // Full-period shift is the identity.
        let full = torus_shift_steps(&phi, &[4]).unwrap();
        assert_eq!(full.values(), phi.values());
    }

    #[test]
    fn torus_shift_rejects_off_grid() {
        let g = torus_grid(1, 1.0, 4);
        let phi = SampledFunction::constant(g, 0.5).unwrap();
        assert!(torus_shift(&phi, &[0.3]).is_err());
        assert!(torus_shift(&phi, &[0.25]).is_ok());
    }

    #[test]
    fn shift_composition_exact() {
        let g = torus_grid(2, 2.0, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..g.num_nodes()).map(|_| rng.gen::<f64>()).collect();
        let phi = SampledFunction::new(g, values).unwrap();
        for (u, v) in [([1, 2], [3, 5]), ([0, 1], [5, 0]), ([4, 4], [2, 3])] {
            let a = torus_shift_steps(&torus_shift_steps(&phi, &v).unwrap(), &u).unwrap();
            let b = torus_shift_steps(&phi, &[u[0] + v[0], u[1] + v[1]]).unwrap();
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn torus_distance_wraps() {
        let g = torus_grid(1, 4.0, 8);
        // Nodes 0 and 7 are one step apart around the seam.
        assert_eq!(g.node_distance(0, 7), 0.5);
        // Opposite nodes sit half a period apart.
        assert_eq!(g.node_distance(0, 4), 2.0);
    }

    #[test]
    fn lfn_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..100 {
            let grid = if trial % 2 == 0 {
                box_grid(1 + trial % 2, 1.0 + (trial % 3) as f64, 5 + 2 * (trial % 4))
            } else {
                torus_grid(1 + trial % 3, 1.0 + (trial % 5) as f64, 2 + trial % 7)
            };
            let values: Vec<f64> = (0..grid.num_nodes())
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect();
            let phi = SampledFunction::new(grid, values).unwrap();
            let mut buf = Vec::new();
            save_lfn(&phi, &mut buf).unwrap();
            let back = load_lfn(std::io::Cursor::new(&buf)).unwrap();
            assert_eq!(back.values(), phi.values());
            assert_eq!(back.grid(), phi.grid());
            assert_eq!(back.range_clamped(), phi.range_clamped());
        }
    }

    #[test]
    fn lfn_shape_mismatch_rejected() {
        let text = "lfn 1\ndim=1\nkind=torus period=1\nshape=4\nspacing=0.25\nclamped=0\n0 0 0\n";
        assert!(load_lfn(std::io::Cursor::new(text)).is_err());
    }

    #[test]
    fn lfn_bad_torus_geometry_rejected() {
        // Declared spacing disagrees with period/shape.
        let text = "lfn 1\ndim=1\nkind=torus period=1\nshape=4\nspacing=0.5\nclamped=0\n0 0 0 0\n";
        assert!(load_lfn(std::io::Cursor::new(text)).is_err());
    }

    #[test]
    fn lfn_comments_preserved() {
        let g = torus_grid(1, 1.0, 4);
        let phi = SampledFunction::constant(g, 0.25).unwrap();
        let mut buf = Vec::new();
        save_lfn_with_comments(&phi, &["layout: test".to_string()], &mut buf).unwrap();
        let doc = load_lfn_document(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(doc.comments, vec!["layout: test".to_string()]);
        assert_eq!(doc.function.values(), phi.values());
    }

    #[test]
    fn stride_lattice_density() {
        // Even strides: the farthest node sits at the cell center, distance
        // (s*h/2)*sqrt(n).
        for (dim, m, stride) in [(1, 8, 2), (1, 16, 4), (2, 8, 2), (2, 12, 4), (3, 4, 2)] {
            let g = torus_grid(dim, 1.0, m);
            let lat = LatticeSubset::from_stride(&g, stride).unwrap();
            let expect = (stride as f64) * g.spacing() / 2.0 * (dim as f64).sqrt();
            assert!(
                (lat.density_radius() - expect).abs() < 1e-12,
                "dim={dim} m={m} stride={stride}: {} vs {expect}",
                lat.density_radius()
            );
        }
    }

    #[test]
    fn lattice_extends_to_multiple_period() {
        let g = torus_grid(1, 1.0, 4);
        let lat = LatticeSubset::from_stride(&g, 2).unwrap();
        assert_eq!(lat.len(), 2);
        let big = torus_grid(1, 3.0, 12);
        let nodes = lat.nodes_on(&big).unwrap();
        assert_eq!(nodes, vec![0, 2, 4, 6, 8, 10]);
    }

    #[test]
    fn boundary_layer_distance() {
        let g = box_grid(2, 1.0, 5);
        let origin = g.origin_index();
        assert_eq!(g.dist_to_boundary_layer(origin).unwrap(), 1.0);
        let corner = g.flat_index(&[0, 0]);
        assert_eq!(g.dist_to_boundary_layer(corner).unwrap(), 0.0);
        assert!(g.is_boundary_node(corner));
        assert!(!g.is_boundary_node(origin));
    }
}
