//! Lipschitz primitives: exhaustive and bounded constant estimation, local
//! moduli, the clamped lower-envelope extension, and the least feasible
//! convex-combination scalar used by the discrete filter.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridKind, GridSpec, SampledFunction};

/// Node cap for exhaustive pairwise scans.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipMethod {
    /// Exact discrete constant by an all-pairs scan.
    Exhaustive,
    /// Upper estimate from adjacent differences, valid on any grid size.
    Bound,
}

/// Result of a Lipschitz-constant measurement.
#[derive(Debug, Clone)]
pub struct LipschitzReport {
    /// The measured constant (exact for exhaustive, an upper bound otherwise).
    pub constant: f64,
    /// Node pair realizing the reported quotient; ties resolve to the lowest
    /// row-major pair so reports are reproducible.
    pub witness: (usize, usize),
    pub method: LipMethod,
}

/// Measure the discrete Lipschitz constant of a sampled function.
///
/// `Exhaustive` scans all node pairs and is exact; it refuses grids above
/// `cap` nodes. `Bound` multiplies the worst axis-adjacent quotient by
/// `sqrt(n)`, which dominates the exact constant because any node pair is
/// joined by an axis-monotone path of length at most `sqrt(n)` times the
/// Euclidean distance.
pub fn lipschitz_constant_capped(
    phi: &SampledFunction,
    method: LipMethod,
    cap: usize,
) -> Result<LipschitzReport> {
    match method {
        LipMethod::Exhaustive => {
            let n = phi.grid().num_nodes();
            if n > cap {
                return Err(Error::Precondition(format!(
                    "exhaustive scan capped at {cap} nodes, grid has {n}"
                )));
            }
            Ok(exhaustive_constant(phi))
        }
        LipMethod::Bound => Ok(adjacent_bound(phi)),
    }
}

/// [`lipschitz_constant_capped`] at the default cap.
pub fn lipschitz_constant(phi: &SampledFunction, method: LipMethod) -> Result<LipschitzReport> {
    lipschitz_constant_capped(phi, method, DEFAULT_EXHAUSTIVE_CAP)
}

fn exhaustive_constant(phi: &SampledFunction) -> LipschitzReport {
    let grid = phi.grid();
    let n = grid.num_nodes();
    let multi: Vec<Vec<usize>> = (0..n).map(|i| grid.multi_index(i)).collect();
    let mut best = 0.0f64;
    let mut witness = (0usize, 0usize);
    for a in 0..n {
        for b in (a + 1)..n {
            let d = grid.multi_distance(&multi[a], &multi[b]);
            let q = (phi.value(a) - phi.value(b)).abs() / d;
            if q > best {
                best = q;
                witness = (a, b);
            }
        }
    }
    LipschitzReport { constant: best, witness, method: LipMethod::Exhaustive }
}

fn adjacent_bound(phi: &SampledFunction) -> LipschitzReport {
    let grid = phi.grid();
    let n = grid.num_nodes();
    let m = grid.points_per_axis();
    let h = grid.spacing();
    let mut best = 0.0f64;
    let mut witness = (0usize, 0usize);
    for a in 0..n {
        let mi = grid.multi_index(a);
        for axis in 0..grid.dim() {
            let next = match grid.kind() {
                GridKind::Box { .. } => {
                    if mi[axis] + 1 >= m {
                        continue;
                    }
                    mi[axis] + 1
                }
                GridKind::Torus { .. } => (mi[axis] + 1) % m,
            };
            let mut mj = mi.clone();
            mj[axis] = next;
            let b = grid.flat_index(&mj);
            let q = (phi.value(a) - phi.value(b)).abs() / h;
            if q > best {
                best = q;
                witness = (a.min(b), a.max(b));
            }
        }
    }
    LipschitzReport {
        constant: best * (grid.dim() as f64).sqrt(),
        witness,
        method: LipMethod::Bound,
    }
}

/// Node cap for [`certify_lipschitz`], which uses a flat table-driven scan.
pub const CERTIFY_CAP: usize = 130_000;

/// Exhaustively certify that `phi` is `bound`-Lipschitz up to `slack` on the
/// quotient, returning the measured constant. Unlike the report scan this
/// compares `|dv| <= (bound + slack) * d` pair by pair through a shared
/// `h*sqrt(k)` table, which keeps grids around 200x200 tractable.
pub fn certify_lipschitz(phi: &SampledFunction, bound: f64, slack: f64) -> Result<f64> {
    let grid = phi.grid();
    let n = grid.num_nodes();
    if n > CERTIFY_CAP {
        return Err(Error::Precondition(format!(
            "certification scan capped at {CERTIFY_CAP} nodes, grid has {n}"
        )));
    }
    let dim = grid.dim();
    let m = grid.points_per_axis();
    let wrap = grid.is_torus();
    let half = if wrap { m / 2 } else { m - 1 };
    let max_sq = dim as u64 * (half as u64) * (half as u64);
    let table: Vec<f64> = (0..=max_sq)
        .map(|k| grid.spacing() * (k as f64).sqrt())
        .collect();
    let multi: Vec<Vec<usize>> = (0..n).map(|i| grid.multi_index(i)).collect();
    let vals = phi.values();
    let mut worst_q = 0.0f64;
    let mut worst_pair = (0usize, 0usize);
    for a in 0..n {
        let ma = &multi[a];
        let va = vals[a];
        for b in (a + 1)..n {
            let mb = &multi[b];
            let mut sq: u64 = 0;
            for axis in 0..dim {
                let d = ma[axis].abs_diff(mb[axis]);
                let d = if wrap { d.min(m - d) } else { d };
                sq += (d as u64) * (d as u64);
            }
            let dv = (va - vals[b]).abs();
            let dist = table[sq as usize];
            if dv > worst_q * dist {
                worst_q = dv / dist;
                worst_pair = (a, b);
            }
        }
    }
    if worst_q > bound + slack {
        return Err(Error::NotLipschitz {
            bound,
            measured: worst_q,
            a: worst_pair.0,
            b: worst_pair.1,
        });
    }
    Ok(worst_q)
}

/// Local Lipschitz modulus: the worst difference quotient of `phi` against
/// node `p` over nodes in the punctured ball of radius `r`. Returns 0 when
/// no node lies in the ball.
pub fn local_modulus(phi: &SampledFunction, p: usize, r: f64) -> Result<f64> {
    let grid = phi.grid();
    if p >= grid.num_nodes() {
        return Err(Error::Grid(format!("node {p} out of range")));
    }
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("modulus radius must be positive, got {r}")));
    }
    match grid.kind() {
        GridKind::Box { radius } => {
            // The ball stays inside the closed box iff it fits per axis.
            let pc = grid.coord(p);
            for (axis, x) in pc.iter().enumerate() {
                if x.abs() + r > radius + 1e-12 {
                    return Err(Error::Precondition(format!(
                        "ball of radius {r} at node {p} exits the box on axis {axis}"
                    )));
                }
            }
        }
        GridKind::Torus { period } => {
            if r >= period / 2.0 {
                return Err(Error::Precondition(format!(
                    "modulus radius {r} must stay below half the period {period}"
                )));
            }
        }
    }
    let pm = grid.multi_index(p);
    let mut best = 0.0f64;
    for t in 0..grid.num_nodes() {
        if t == p {
            continue;
        }
        let d = grid.multi_distance(&grid.multi_index(t), &pm);
        if d <= r {
            let q = (phi.value(t) - phi.value(p)).abs() / d;
            if q > best {
                best = q;
            }
        }
    }
    Ok(best)
}

/// The clamped lower envelope `t -> min(1, min_u(data(u) + c|t-u|))` over an
/// anchor set, with no Lipschitz precondition on the anchors. The output is
/// always c-Lipschitz: it is a minimum of c-Lipschitz cones capped at 1.
pub fn clamped_envelope(
    grid: &GridSpec,
    anchors: &[(usize, f64)],
    c: f64,
) -> Result<SampledFunction> {
    if anchors.is_empty() {
        return Err(Error::Precondition("envelope needs a nonempty anchor set".into()));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("envelope slope must be finite and >= 0, got {c}")));
    }
    let n = grid.num_nodes();
    let anchor_multi: Vec<(Vec<usize>, f64)> = anchors
        .iter()
        .map(|&(u, v)| {
            if u >= n {
                return Err(Error::Grid(format!("anchor node {u} out of range")));
            }
            Ok((grid.multi_index(u), v))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let tm = grid.multi_index(t);
        let mut lo = f64::INFINITY;
        for (um, v) in &anchor_multi {
            let cand = v + c * grid.multi_distance(&tm, um);
            if cand < lo {
                lo = cand;
            }
        }
        out.push(lo.min(1.0));
    }
    SampledFunction::new(grid.clone(), out)
}

/// McShane-Whitney extension: given clamped data on a node subset that is
/// c-Lipschitz pairwise, extend to the whole grid by the clamped lower
/// envelope. Agrees with the data bitwise on the subset and is the largest
/// clamped c-Lipschitz extension.
pub fn mcshane_extend(
    grid: &GridSpec,
    data: &[(usize, f64)],
    c: f64,
) -> Result<SampledFunction> {
    if data.is_empty() {
        return Err(Error::Precondition("extension needs a nonempty data set".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for &(u, v) in data {
        if !seen.insert(u) {
            return Err(Error::Precondition(format!("duplicate data node {u}")));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Precondition(format!("data value {v} at node {u} leaves [0,1]")));
        }
    }
    // Pairwise certificate; the same distances the envelope will use.
    for i in 0..data.len() {
        for j in (i + 1)..data.len() {
            let (a, va) = data[i];
            let (b, vb) = data[j];
            let d = grid.node_distance(a, b);
            if (va - vb).abs() > c * d {
                return Err(Error::NotLipschitz {
                    bound: c,
                    measured: (va - vb).abs() / d,
                    a,
                    b,
                });
            }
        }
    }
    let mut ext = clamped_envelope(grid, data, c)?;
    // The envelope equals the data on the subset mathematically; pin it
    // bitwise so rounding in the cone sums cannot drift a data node.
    let mut values = ext.values().to_vec();
    for &(u, v) in data {
        values[u] = v;
    }
    ext = SampledFunction::new(grid.clone(), values)?;
    Ok(ext)
}

/// Least `s` in `[0,1]` with `|(1-s)x + sy| <= c`, by the closed-form case
/// analysis. Requires `|y| < c` so the feasible set is nonempty and an
/// interval `[s, 1]`.
pub fn convex_feasibility(x: f64, y: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("feasibility threshold must be positive, got {c}")));
    }
    if !(y.abs() < c) {
        return Err(Error::Precondition(format!(
            "feasibility needs |y| < c, got |{y}| vs {c}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::Parameter(format!("non-finite x = {x}")));
    }
    let s = if x <= -c {
        (-c - x) / (y - x)
    } else if x >= c {
        (x - c) / (x - y)
    } else {
        0.0
    };
    Ok(s.clamp(0.0, 1.0))
}

/// Max of per-pair feasibility scalars; the least `s` feasible for every
/// pair simultaneously. An empty list is unconstrained and yields 0.
pub fn convex_feasibility_multi(pairs: &[(f64, f64, f64)]) -> Result<f64> {
    let mut s = 0.0f64;
    for &(x, y, c) in pairs {
        s = s.max(convex_feasibility(x, y, c)?);
    }
    Ok(s)
}

/// Deterministic c-Lipschitz test input: uniform values drawn on a sparse
/// random node subset, regularized by the clamped lower envelope at slope c.
pub fn random_lipschitz(grid: &GridSpec, c: f64, seed: u64) -> Result<SampledFunction> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("slope must be finite and >= 0, got {c}")));
    }
    let n = grid.num_nodes();
    let k = (n / 8).clamp(2.min(n), 64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = sample(&mut rng, n, k);
    let anchors: Vec<(usize, f64)> = nodes.iter().map(|u| (u, rng.gen::<f64>())).collect();
    clamped_envelope(grid, &anchors, c)
}

/// A random clamped c-Lipschitz function agreeing with `data` on its nodes:
/// nodes are visited in a seeded shuffle and each new value is drawn
/// uniformly from its feasible interval against everything placed so far.
pub fn random_clamped_extension(
    grid: &GridSpec,
    data: &[(usize, f64)],
    c: f64,
    seed: u64,
) -> Result<SampledFunction> {
    let n = grid.num_nodes();
    let mut values = vec![f64::NAN; n];
    let mut placed: Vec<usize> = Vec::with_capacity(n);
    for &(u, v) in data {
        if u >= n {
            return Err(Error::Grid(format!("data node {u} out of range")));
        }
        if !values[u].is_nan() {
            return Err(Error::Precondition(format!("duplicate data node {u}")));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Precondition(format!("data value {v} leaves [0,1]")));
        }
        values[u] = v;
        placed.push(u);
    }
    for i in 0..placed.len() {
        for j in (i + 1)..placed.len() {
            let (a, b) = (placed[i], placed[j]);
            let d = grid.node_distance(a, b);
            if (values[a] - values[b]).abs() > c * d {
                return Err(Error::NotLipschitz {
                    bound: c,
                    measured: (values[a] - values[b]).abs() / d,
                    a,
                    b,
                });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).filter(|i| values[*i].is_nan()).collect();
    // Fisher-Yates with the seeded generator.
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for t in order {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for &u in &placed {
            let reach = c * grid.node_distance(t, u);
            lo = lo.max(values[u] - reach);
            hi = hi.min(values[u] + reach);
        }
        // Consistent data keeps lo <= hi; a collapsed interval is a forced
        // value, not an error.
        let v = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        values[t] = v;
        placed.push(t);
    }
    SampledFunction::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_field;

    fn box_grid(dim: usize, r: f64, m: usize) -> GridSpec {
        GridSpec::make_grid(dim, GridKind::Box { radius: r }, m).unwrap()
    }

    #[test]
    fn abs_cone_constant_is_one() {
        let g = box_grid(1, 1.0, 5);
        let phi = sample_field(&g, |x| x[0].abs()).unwrap();
        let rep = lipschitz_constant(&phi, LipMethod::Exhaustive).unwrap();
        assert_eq!(rep.constant, 1.0);
        let (a, b) = rep.witness;
        let q = (phi.value(a) - phi.value(b)).abs() / g.node_distance(a, b);
        assert_eq!(q, rep.constant);
    }

    #[test]
    fn constant_function_has_zero_constant() {
        let g = box_grid(2, 1.0, 5);
        let phi = SampledFunction::constant(g, 0.4).unwrap();
        let rep = lipschitz_constant(&phi, LipMethod::Exhaustive).unwrap();
        assert_eq!(rep.constant, 0.0);
    }

    #[test]
    fn bound_dominates_exhaustive() {
        for seed in 0..50 {
            let g = box_grid(1, 1.0, 33);
            let phi = random_lipschitz(&g, 0.7, seed).unwrap();
            let exact = lipschitz_constant(&phi, LipMethod::Exhaustive).unwrap();
            let bound = lipschitz_constant(&phi, LipMethod::Bound).unwrap();
            assert!(
                bound.constant >= exact.constant - 1e-12,
                "seed {seed}: bound {} < exact {}",
                bound.constant,
                exact.constant
            );
        }
    }

    #[test]
    fn exhaustive_cap_enforced() {
        let g = GridSpec::make_grid(2, GridKind::Torus { period: 1.0 }, 70).unwrap();
        let phi = SampledFunction::constant(g, 0.0).unwrap();
        assert!(lipschitz_constant(&phi, LipMethod::Exhaustive).is_err());
        assert!(lipschitz_constant(&phi, LipMethod::Bound).is_ok());
    }

    #[test]
    fn local_modulus_of_cone() {
        let g = box_grid(1, 1.0, 5);
        let phi = sample_field(&g, |x| x[0].abs()).unwrap();
        assert_eq!(local_modulus(&phi, g.origin_index(), 1.0).unwrap(), 1.0);
        let flat = SampledFunction::constant(g, 0.2).unwrap();
        assert_eq!(local_modulus(&flat, 2, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn local_modulus_of_shallow_cone() {
        let g = box_grid(1, 1.0, 9);
        let phi = sample_field(&g, |x| (0.8 * x[0].abs()).min(1.0)).unwrap();
        let m = local_modulus(&phi, g.origin_index(), 0.3).unwrap();
        assert!((m - 0.8).abs() < 1e-12, "modulus {m}");
    }

    #[test]
    fn local_modulus_ball_must_fit() {
        let g = box_grid(1, 1.0, 5);
        let phi = SampledFunction::constant(g, 0.0).unwrap();
        assert!(local_modulus(&phi, 3, 0.75).is_err());
        assert!(local_modulus(&phi, 3, 0.5).is_ok());
    }

    #[test]
    fn local_modulus_bounded_by_constant() {
        for seed in 0..10 {
            let g = box_grid(2, 1.0, 9);
            let phi = random_lipschitz(&g, 0.9, seed).unwrap();
            let rep = lipschitz_constant(&phi, LipMethod::Exhaustive).unwrap();
            for p in [g.origin_index(), g.flat_index(&[3, 5])] {
                let lm = local_modulus(&phi, p, 0.4).unwrap();
                assert!(lm <= rep.constant + 1e-12);
            }
        }
    }

    #[test]
    fn mcshane_single_cone() {
        let g = box_grid(1, 1.0, 5);
        let ext = mcshane_extend(&g, &[(g.origin_index(), 0.0)], 1.0).unwrap();
        assert_eq!(ext.values(), &[1.0, 0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn mcshane_two_cones() {
        let g = box_grid(1, 1.0, 5);
        let ext = mcshane_extend(&g, &[(0, 0.0), (4, 0.0)], 0.25).unwrap();
        assert_eq!(ext.value(g.origin_index()), 0.25);
    }

    #[test]
    fn mcshane_fixes_full_lipschitz_data() {
        let g = box_grid(1, 1.0, 9);
        // c-Lipschitz with max below the clamp; dyadic values so the
        // pairwise certificate is exact arithmetic.
        let phi = sample_field(&g, |x| 0.25 + 0.25 * x[0].abs()).unwrap();
        let data: Vec<(usize, f64)> = phi.values().iter().copied().enumerate().collect();
        let ext = mcshane_extend(&g, &data, 0.25).unwrap();
        assert_eq!(ext.values(), phi.values());
    }

    #[test]
    fn mcshane_rejects_rough_data() {
        let g = box_grid(1, 1.0, 5);
        let err = mcshane_extend(&g, &[(0, 0.0), (1, 0.9)], 0.5).unwrap_err();
        assert!(matches!(err, Error::NotLipschitz { .. }));
    }

    #[test]
    fn feasibility_closed_form() {
        assert_eq!(convex_feasibility(2.0, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(convex_feasibility(0.3, 0.0, 1.0).unwrap(), 0.0);
        let s = convex_feasibility(-3.0, 0.5, 1.0).unwrap();
        assert!((s - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn feasibility_rejects_large_y() {
        assert!(convex_feasibility(0.0, 1.0, 1.0).is_err());
        assert!(convex_feasibility(0.0, -1.5, 1.0).is_err());
    }

    #[test]
    fn feasibility_multi_takes_max() {
        let s = convex_feasibility_multi(&[(2.0, 0.0, 1.0), (3.0, 0.0, 1.0)]).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(convex_feasibility_multi(&[]).unwrap(), 0.0);
        assert_eq!(
            convex_feasibility_multi(&[(0.5, 0.1, 1.0), (-0.9, 0.0, 1.0)]).unwrap(),
            0.0
        );
    }

    #[test]
    fn feasibility_is_infimum_on_mesh() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let c = rng.gen_range(0.1..2.0);
            let y = rng.gen_range(-0.99..0.99) * c;
            let x = rng.gen_range(-4.0..4.0);
            let s = convex_feasibility(x, y, c).unwrap();
            // Nothing feasible below s - 1e-4, feasible just above s.
            let mut probe = 0.0;
            while probe < s - 1e-4 {
                let v = (1.0 - probe) * x + probe * y;
                assert!(v.abs() > c - 1e-9, "x={x} y={y} c={c} s={s} probe={probe}");
                probe += 1e-4;
            }
            let above = (s + 1e-4).min(1.0);
            let v = (1.0 - above) * x + above * y;
            assert!(v.abs() <= c + 1e-9);
        }
    }

    #[test]
    fn random_lipschitz_is_deterministic_and_certified() {
        let g = box_grid(2, 1.0, 9);
        let a = random_lipschitz(&g, 0.8, 7).unwrap();
        let b = random_lipschitz(&g, 0.8, 7).unwrap();
        assert_eq!(a.values(), b.values());
        let rep = lipschitz_constant(&a, LipMethod::Exhaustive).unwrap();
        assert!(rep.constant <= 0.8 + 1e-12);
        let zero_slope = random_lipschitz(&g, 0.0, 3).unwrap();
        let first = zero_slope.value(0);
        assert!(zero_slope.values().iter().all(|&v| v == first));
    }

    #[test]
    fn certify_matches_exhaustive_report() {
        let g = box_grid(2, 1.0, 11);
        let phi = random_lipschitz(&g, 0.7, 11).unwrap();
        let rep = lipschitz_constant(&phi, LipMethod::Exhaustive).unwrap();
        let measured = certify_lipschitz(&phi, 0.7, 1e-9).unwrap();
        assert_eq!(measured, rep.constant);
        let err = certify_lipschitz(&phi, rep.constant / 2.0, 1e-9).unwrap_err();
        match err {
            Error::NotLipschitz { measured: m, .. } => assert_eq!(m, rep.constant),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn certify_handles_torus_wrap() {
        let g = GridSpec::make_grid(1, GridKind::Torus { period: 4.0 }, 8).unwrap();
        // Sawtooth: distance between peaks uses the wrapped metric.
        let vals: Vec<f64> = (0..8)
            .map(|i| {
                let d = (i as i64).min(8 - i as i64) as f64;
                (d * 0.5 * 0.2).min(1.0)
            })
            .collect();
        let phi = SampledFunction::new(g, vals).unwrap();
        let measured = certify_lipschitz(&phi, 0.2, 1e-9).unwrap();
        assert!((measured - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn mcshane_dominates_random_extensions() {
        let g = box_grid(1, 1.0, 17);
        let data = [(0usize, 0.3), (8usize, 0.6), (16usize, 0.2)];
        let c = 0.5;
        let ext = mcshane_extend(&g, &data, c).unwrap();
        for seed in 0..20 {
            let psi = random_clamped_extension(&g, &data, c, seed).unwrap();
            let rep = lipschitz_constant(&psi, LipMethod::Exhaustive).unwrap();
            assert!(rep.constant <= c + 1e-12, "seed {seed}: {}", rep.constant);
            for t in 0..g.num_nodes() {
                assert!(psi.value(t) <= ext.value(t) + 1e-12);
            }
            for &(u, v) in &data {
                assert_eq!(psi.value(u), v);
            }
        }
    }
}
