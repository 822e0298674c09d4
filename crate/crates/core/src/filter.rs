//! The equivariant Lipschitz filter on a torus: a per-coset discrete filter
//! on a periodic lattice, and the continuous filter built from it by a
//! lower envelope and a fundamental-domain average.
//!
//! The continuous filter maps any `[0,1]`-valued grid function to a
//! c'-Lipschitz one, moves c-Lipschitz inputs by less than epsilon, fixes
//! constants, and commutes with grid shifts bitwise. The bitwise claims rest
//! on three implementation rules: all node distances come from integer index
//! deltas through one shared table, every reduction is a min/max or a sorted
//! sum, and the quadrature average subtracts the lattice cone profile
//! term-by-term instead of subtracting its mean afterwards.

use crate::error::{Error, Result};
use crate::grid::{
    torus_shift_steps, GridKind, GridSpec, LatticeSubset, SampledFunction,
};
use crate::lipcore::convex_feasibility;

/// Every constant of the filter in one auditable record.
#[derive(Debug, Clone)]
pub struct FilterParams {
    pub epsilon: f64,
    pub c: f64,
    pub c_prime: f64,
    /// Lattice period M with 1/M < c.
    pub period: f64,
    /// Offset set in the fundamental domain, on the period-M torus.
    pub lattice: LatticeSubset,
    /// Strictly increasing slope chain from c to c', one entry per offset.
    pub chain: Vec<f64>,
    /// Reach L = sum over k >= 2 of 1/c_k: input changes beyond L of a
    /// lattice point cannot move the discrete filter there.
    pub reach: f64,
    /// Support radius R = L + eps/(2c') + 2 sqrt(n) M for the continuous
    /// filter.
    pub support_radius: f64,
}

/// A filter ready to run on one working torus grid.
#[derive(Debug, Clone)]
pub struct FilterPlan {
    params: FilterParams,
    grid: GridSpec,
    /// Cone profile c' * dist(., lattice), sampled on the working grid.
    psi: SampledFunction,
    /// Mean of psi over one fundamental domain's nodes (sorted summation).
    quad_mean: f64,
    /// Working-grid node indices per lattice offset, ascending.
    cosets: Vec<Vec<usize>>,
    /// All lattice nodes on the working grid, ascending.
    gamma: Vec<usize>,
    /// Quadrature shifts: index vectors of one fundamental domain, row-major.
    fd_offsets: Vec<Vec<i64>>,
    /// h * sqrt(k) by squared index distance k; the single distance source.
    dist_table: Vec<f64>,
}

impl FilterPlan {
    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn psi(&self) -> &SampledFunction {
        &self.psi
    }

    /// The fundamental-domain average of psi.
    pub fn quadrature_mean(&self) -> f64 {
        self.quad_mean
    }

    /// All lattice nodes on the working grid, ascending.
    pub fn gamma_nodes(&self) -> &[usize] {
        &self.gamma
    }

    /// Number of quadrature shifts (fundamental-domain nodes).
    pub fn quadrature_count(&self) -> usize {
        self.fd_offsets.len()
    }

    /// Plain-text block of every constant, for reports.
    pub fn describe(&self) -> String {
        let p = &self.params;
        let offsets: Vec<String> = p
            .lattice
            .offset_coords()
            .iter()
            .map(|c| {
                let inner: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
                format!("({})", inner.join(","))
            })
            .collect();
        let chain: Vec<String> = p.chain.iter().map(|c| format!("{c}")).collect();
        format!(
            "epsilon={}\nc={}\nc_prime={}\nperiod={}\ndensity_radius={}\nchain=[{}]\nreach={}\nsupport_radius={}\noffsets=[{}]\nquad_mean={}\n",
            p.epsilon,
            p.c,
            p.c_prime,
            p.period,
            p.lattice.density_radius(),
            chain.join(", "),
            p.reach,
            p.support_radius,
            offsets.join(", "),
            self.quad_mean,
        )
    }

    fn node_dist(&self, ma: &[usize], mb: &[usize]) -> f64 {
        let m = self.grid.points_per_axis();
        let mut sq: u64 = 0;
        for axis in 0..ma.len() {
            let d = ma[axis].abs_diff(mb[axis]);
            let d = d.min(m - d);
            sq += (d as u64) * (d as u64);
        }
        self.dist_table[sq as usize]
    }
}

/// Reach pair from raw chain data: L sums 1/c_k over the chain past its
/// first entry, R adds the envelope slack and the quadrature diameter.
pub fn reach_from_chain(chain: &[f64], epsilon: f64, c_prime: f64, dim: usize, period: f64) -> (f64, f64) {
    let reach: f64 = chain.iter().skip(1).map(|c| 1.0 / c).sum();
    let support = reach + epsilon / (2.0 * c_prime) + 2.0 * (dim as f64).sqrt() * period;
    (reach, support)
}

/// Reach pair of a plan.
pub fn filter_reach(plan: &FilterPlan) -> (f64, f64) {
    let p = plan.params();
    reach_from_chain(&p.chain, p.epsilon, p.c_prime, plan.grid().dim(), p.period)
}

/// Build a filter plan on a working torus grid whose period is a whole
/// multiple of the lattice period M. The offset set is the sub-grid of
/// stride `lattice_stride` on the period-M torus; the slope chain is the
/// geometric interpolation from c to c' (any strictly increasing chain
/// works, this one is fixed for reproducibility).
pub fn build_plan(
    epsilon: f64,
    c: f64,
    c_prime: f64,
    grid: &GridSpec,
    period: f64,
    lattice_stride: usize,
) -> Result<FilterPlan> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(c > 0.0) || !(c < c_prime) || !c_prime.is_finite() {
        return Err(Error::Parameter(format!(
            "slopes must satisfy 0 < c < c', got c={c}, c'={c_prime}"
        )));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Parameter(format!("period must be positive, got {period}")));
    }
    if !(1.0 / period < c) {
        return Err(Error::Parameter(format!(
            "need 1/M < c for the coarsest coset, got 1/{period} >= {c}"
        )));
    }
    let GridKind::Torus { period: big } = grid.kind() else {
        return Err(Error::Grid("filter plans require a torus working grid".into()));
    };
    let ratio = big / period;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
        return Err(Error::Grid(format!(
            "working period {big} must be a whole multiple of the lattice period {period}"
        )));
    }
    let h = grid.spacing();
    let steps = period / h;
    if (steps - steps.round()).abs() > 1e-9 || steps.round() < 2.0 {
        return Err(Error::Grid(format!(
            "lattice period {period} must span a whole number (>= 2) of grid steps of {h}"
        )));
    }
    let steps = steps.round() as usize;

    let lattice_grid = GridSpec::make_grid(grid.dim(), GridKind::Torus { period }, steps)?;
    let lattice = LatticeSubset::from_stride(&lattice_grid, lattice_stride)?;
    let dens_cap = epsilon / (2.0 * c_prime);
    if lattice.density_radius() > dens_cap {
        return Err(Error::Parameter(format!(
            "lattice too coarse: covering radius {} exceeds eps/(2c') = {dens_cap}",
            lattice.density_radius()
        )));
    }

    let n_offsets = lattice.len();
    let chain: Vec<f64> = if n_offsets == 1 {
        vec![c_prime]
    } else {
        let q = c_prime / c;
        let mut chain: Vec<f64> = (0..n_offsets)
            .map(|k| c * q.powf(k as f64 / (n_offsets - 1) as f64))
            .collect();
        chain[0] = c;
        chain[n_offsets - 1] = c_prime;
        chain
    };
    for w in chain.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Parameter(format!(
                "slope chain is not strictly increasing near {} (offset count {n_offsets} too large for ({c}, {c_prime}))",
                w[0]
            )));
        }
    }
    let (reach, support_radius) = reach_from_chain(&chain, epsilon, c_prime, grid.dim(), period);

    // Distance table: every node pair distance is h*sqrt(k) for an integer
    // squared index distance k.
    let half = grid.points_per_axis() / 2;
    let max_sq = grid.dim() as u64 * (half as u64) * (half as u64);
    let dist_table: Vec<f64> = (0..=max_sq).map(|k| h * (k as f64).sqrt()).collect();

    // Cosets: working-grid nodes congruent to each offset modulo the
    // lattice period, in the offsets' row-major order.
    let n_nodes = grid.num_nodes();
    let mut cosets: Vec<Vec<usize>> = vec![Vec::new(); n_offsets];
    for flat in 0..n_nodes {
        let mi = grid.multi_index(flat);
        let reduced: Vec<usize> = mi.iter().map(|&i| i % steps).collect();
        if let Some(k) = lattice.offset_indices().iter().position(|o| *o == reduced) {
            cosets[k].push(flat);
        }
    }
    let mut gamma: Vec<usize> = cosets.iter().flatten().copied().collect();
    gamma.sort_unstable();

    // Cone profile and its fundamental-domain mean.
    let mut psi_vals = Vec::with_capacity(n_nodes);
    let node_multi: Vec<Vec<usize>> = (0..n_nodes).map(|f| grid.multi_index(f)).collect();
    let gamma_multi: Vec<&Vec<usize>> = gamma.iter().map(|&g| &node_multi[g]).collect();
    let m_axis = grid.points_per_axis();
    for mi in &node_multi {
        let mut best = f64::INFINITY;
        for gm in &gamma_multi {
            let mut sq: u64 = 0;
            for axis in 0..grid.dim() {
                let d = mi[axis].abs_diff(gm[axis]);
                let d = d.min(m_axis - d);
                sq += (d as u64) * (d as u64);
            }
            let cand = c_prime * dist_table[sq as usize];
            if cand < best {
                best = cand;
            }
        }
        psi_vals.push(best);
    }
    let psi = SampledFunction::new(grid.clone(), psi_vals)?;

    // Quadrature shifts: one fundamental domain of index vectors, row-major.
    let fd_count = steps.pow(grid.dim() as u32);
    let mut fd_offsets = Vec::with_capacity(fd_count);
    for flat in 0..fd_count {
        let mut v = vec![0i64; grid.dim()];
        let mut rest = flat;
        for axis in (0..grid.dim()).rev() {
            v[axis] = (rest % steps) as i64;
            rest /= steps;
        }
        fd_offsets.push(v);
    }
    let mut fd_psi: Vec<f64> = fd_offsets
        .iter()
        .map(|v| {
            let mi: Vec<usize> = v.iter().map(|&i| i as usize).collect();
            psi.value(grid.flat_index(&mi))
        })
        .collect();
    let quad_mean = sorted_mean(&mut fd_psi);

    Ok(FilterPlan {
        params: FilterParams {
            epsilon,
            c,
            c_prime,
            period,
            lattice,
            chain,
            reach,
            support_radius,
        },
        grid: grid.clone(),
        psi,
        quad_mean,
        cosets,
        gamma,
        fd_offsets,
        dist_table,
    })
}

/// Sort (total order) then sum: one canonical value per multiset of floats.
fn sorted_mean(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    let sum: f64 = xs.iter().sum();
    sum / xs.len() as f64
}

/// The per-coset discrete filter. Reads the input only at lattice nodes,
/// returns `(node, value)` pairs ascending by node. The output restricted to
/// the lattice is c'-Lipschitz; c-Lipschitz inputs come back bitwise equal.
pub fn discrete_filter(phi: &SampledFunction, plan: &FilterPlan) -> Result<Vec<(usize, f64)>> {
    if phi.grid() != plan.grid() {
        return Err(Error::Grid("input grid does not match the plan grid".into()));
    }
    for &g in &plan.gamma {
        let v = phi.value(g);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Precondition(format!(
                "lattice value {v} at node {g} leaves [0,1]"
            )));
        }
    }
    let dense = discrete_filter_dense(phi.values(), plan);
    Ok(plan.gamma.iter().map(|&g| (g, dense[g])).collect())
}

/// Induction over cosets. Per new node the cone extension of the settled
/// values is blended with the raw input by the least feasible scalar; a zero
/// scalar keeps the raw value bitwise, which is what makes the filter the
/// identity on c-Lipschitz inputs.
fn discrete_filter_dense(values: &[f64], plan: &FilterPlan) -> Vec<f64> {
    let grid = plan.grid();
    let chain = &plan.params.chain;
    let mut g = vec![f64::NAN; grid.num_nodes()];
    for &t in &plan.cosets[0] {
        g[t] = values[t];
    }
    let mut processed: Vec<(usize, Vec<usize>)> = plan.cosets[0]
        .iter()
        .map(|&t| (t, grid.multi_index(t)))
        .collect();
    for k in 1..plan.cosets.len() {
        let c_lo = chain[k - 1];
        let c_hi = chain[k];
        let r_env = 1.0 / c_lo;
        let r_feas = 1.0 / c_hi;
        let mut fresh = Vec::with_capacity(plan.cosets[k].len());
        for &t in &plan.cosets[k] {
            let tm = grid.multi_index(t);
            // Clamped cone extension of the settled cosets; nodes beyond
            // 1/c_lo cannot undercut the cap.
            let mut psi_t = 1.0f64;
            for (u, um) in &processed {
                let d = plan.node_dist(&tm, um);
                if d <= r_env {
                    let cand = g[*u] + c_lo * d;
                    if cand < psi_t {
                        psi_t = cand;
                    }
                }
            }
            // Least scalar making every window constraint feasible. Only
            // the nearest periodic image of a settled node matters: the
            // per-pair scalar is nonincreasing in the pair threshold.
            let phi_t = values[t];
            let mut s = 0.0f64;
            for (u, um) in &processed {
                let d = plan.node_dist(&tm, um);
                if d <= r_feas {
                    let pair = convex_feasibility(phi_t - g[*u], psi_t - g[*u], c_hi * d)
                        .expect("cone extension stays strictly inside the pair threshold");
                    if pair > s {
                        s = pair;
                    }
                }
            }
            let v = if s == 0.0 {
                phi_t
            } else {
                ((1.0 - s) * phi_t + s * psi_t).clamp(0.0, 1.0)
            };
            fresh.push((t, tm, v));
        }
        for (t, tm, v) in fresh {
            g[t] = v;
            processed.push((t, tm));
        }
    }
    g
}

/// The continuous filter: for each quadrature shift u the input is shifted,
/// run through the discrete filter, and extended by an unclamped lower
/// envelope at slope c'; the average over u of (envelope - cone profile) is
/// the output. Constant inputs return unchanged. Output values are clamped
/// to [0,1]; a clamp beyond 1e-9 prints a warning.
pub fn apply_filter(phi: &SampledFunction, plan: &FilterPlan) -> Result<SampledFunction> {
    let grid = plan.grid();
    if phi.grid() != grid {
        return Err(Error::Grid("input grid does not match the plan grid".into()));
    }
    if !phi.range_clamped() {
        return Err(Error::Precondition("filter input must take values in [0,1]".into()));
    }
    // Constants are exact fixed points; skip the quadrature.
    let first = phi.value(0);
    if phi.values().iter().all(|&v| v == first) {
        return Ok(phi.clone());
    }

    let n = grid.num_nodes();
    let c_prime = plan.params.c_prime;
    let node_multi: Vec<Vec<usize>> = (0..n).map(|f| grid.multi_index(f)).collect();
    let gamma = &plan.gamma;
    let m_axis = grid.points_per_axis() as i64;
    let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(plan.fd_offsets.len()); n];
    for u in &plan.fd_offsets {
        let shifted = torus_shift_steps(phi, u)?;
        let g = discrete_filter_dense(shifted.values(), plan);
        // Unclamped lower envelope of the lattice values at slope c'.
        let mut f0 = vec![0.0f64; n];
        for w in 0..n {
            let wm = &node_multi[w];
            let mut lo = f64::INFINITY;
            for &gam in gamma {
                let cand = g[gam] + c_prime * plan.node_dist(wm, &node_multi[gam]);
                if cand < lo {
                    lo = cand;
                }
            }
            f0[w] = lo;
        }
        // The mean of psi(t-u) over u equals the stored quadrature mean as
        // an index permutation, so subtracting per term keeps the exact
        // cancellations exact.
        for t in 0..n {
            let tm = &node_multi[t];
            let mut wm = vec![0usize; grid.dim()];
            for axis in 0..grid.dim() {
                wm[axis] = (tm[axis] as i64 - u[axis]).rem_euclid(m_axis) as usize;
            }
            let w = grid.flat_index(&wm);
            terms[t].push(f0[w] - plan.psi.value(w));
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut worst = 0.0f64;
    for t in 0..n {
        let v = sorted_mean(&mut terms[t]);
        worst = worst.max(-v).max(v - 1.0);
        out.push(v.clamp(0.0, 1.0));
    }
    if worst > 1e-9 {
        eprintln!("warning: filter output left [0,1] by {worst:.3e}; clamped");
    }
    SampledFunction::new(grid.clone(), out)
}
