//! Toy linear torus actions and their equivariant machinery.
//!
//! An action moves a point `x` of the `d`-torus by `T^t x = x + B t mod M`
//! for an integer `d x n` matrix `B`. Every map of the torus into `[0, 1]`
//! then spawns a family of *orbit functions* `f(x)(t) = generator(T^t x)`,
//! and all smoothing in this module happens on those orbit functions: the
//! equivariant filter pulls the generator back along one orbit to the
//! `t`-torus, filters there, and scatters the values back. Because the
//! filter commutes bitwise with `t`-grid shifts, the scattered values are
//! independent of the chosen base points.
//!
//! On top of that sit the cutoff/blend/extend operators (graft one family
//! onto another along an invariant set) and a local-section audit for the
//! transverse geometry of the action.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::{apply_filter, build_plan, FilterPlan};
use crate::grid::{GridKind, GridSpec, SampledFunction};
use crate::lipcore::{certify_lipschitz, clamped_envelope};

/// Rank tolerance for the stabilizer factorization.
pub const RANK_TOL: f64 = 1e-10;

/// Pivot tolerance for Gram-Schmidt frames.
pub const PIVOT_TOL: f64 = 1e-8;

/// Perturbation budget used by the internal cutoff/base-map filter plans;
/// it only affects the plan's reach, not the guarantees tested here.
pub const INTERNAL_PLAN_EPS: f64 = 0.5;

/// A linear action of `R^n` on the `d`-torus of period `M`:
/// `T^t x = x + B t mod M` with an integer `d x n` matrix `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusAction {
    b: Vec<Vec<i64>>,
    n: usize,
    d: usize,
    period: f64,
}

impl TorusAction {
    /// Build from a real matrix whose entries must be integers (within
    /// 1e-9): integer columns are what keep grid nodes on grid nodes.
    pub fn new(b_rows: &[Vec<f64>], period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Parameter(format!(
                "torus period must be positive, got {period}"
            )));
        }
        let d = b_rows.len();
        if d == 0 {
            return Err(Error::Parameter("action matrix needs at least one row".into()));
        }
        let n = b_rows[0].len();
        if n == 0 {
            return Err(Error::Parameter(
                "action matrix needs at least one column".into(),
            ));
        }
        let mut b = Vec::with_capacity(d);
        for (i, row) in b_rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Parameter(format!(
                    "action matrix row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            let mut int_row = Vec::with_capacity(n);
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || (v - v.round()).abs() > 1e-9 {
                    return Err(Error::Parameter(format!(
                        "action matrix entry ({i}, {j}) = {v} is not an integer"
                    )));
                }
                int_row.push(v.round() as i64);
            }
            b.push(int_row);
        }
        Ok(TorusAction { b, n, d, period })
    }

    /// Integer matrix convenience constructor.
    pub fn from_integer(b: Vec<Vec<i64>>, period: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = b
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        TorusAction::new(&rows, period)
    }

    /// Acting dimension `n` (the parameter `t` lives in `R^n`).
    pub fn acting_dim(&self) -> usize {
        self.n
    }

    /// Torus dimension `d` (the space `X` is the `d`-torus).
    pub fn torus_dim(&self) -> usize {
        self.d
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.b
    }

    pub fn is_trivial(&self) -> bool {
        self.b.iter().all(|row| row.iter().all(|&v| v == 0))
    }

    /// The matrix as floating point, row major.
    pub fn matrix_f64(&self) -> DMatrix<f64> {
        let flat: Vec<f64> = self
            .b
            .iter()
            .flat_map(|row| row.iter().map(|&v| v as f64))
            .collect();
        DMatrix::from_row_slice(self.d, self.n, &flat)
    }

    /// Continuous action: `x + B t mod M` componentwise.
    pub fn act(&self, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d || t.len() != self.n {
            return Err(Error::Parameter(format!(
                "act expects x in R^{} and t in R^{}, got {} and {}",
                self.d,
                self.n,
                x.len(),
                t.len()
            )));
        }
        let mut out = Vec::with_capacity(self.d);
        for i in 0..self.d {
            let mut v = x[i];
            for j in 0..self.n {
                v += self.b[i][j] as f64 * t[j];
            }
            out.push(v.rem_euclid(self.period));
        }
        Ok(out)
    }

    /// Grid action: move node `x` by `t_steps` whole grid steps of the
    /// `t`-grid. Both grids share the spacing, so one `t`-step along axis
    /// `j` moves the node by the `j`-th matrix column, in index steps.
    pub fn act_steps(&self, grid: &GridSpec, x: usize, t_steps: &[i64]) -> Result<usize> {
        self.check_grid(grid)?;
        if t_steps.len() != self.n {
            return Err(Error::Parameter(format!(
                "act_steps expects {} step components, got {}",
                self.n,
                t_steps.len()
            )));
        }
        let m = grid.points_per_axis() as i64;
        let mut mi = grid.multi_index(x);
        for (i, idx) in mi.iter_mut().enumerate() {
            let mut v = *idx as i64;
            for j in 0..self.n {
                v += self.b[i][j] * t_steps[j];
            }
            *idx = v.rem_euclid(m) as usize;
        }
        Ok(grid.flat_index(&mi))
    }

    /// Grid compatibility: a `d`-torus grid with this action's period.
    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        let GridKind::Torus { period } = grid.kind() else {
            return Err(Error::Grid("torus actions need a torus grid".into()));
        };
        if grid.dim() != self.d {
            return Err(Error::Grid(format!(
                "grid dimension {} does not match the torus dimension {}",
                grid.dim(),
                self.d
            )));
        }
        if (period - self.period).abs() > 1e-12 {
            return Err(Error::Grid(format!(
                "grid period {period} does not match the action period {}",
                self.period
            )));
        }
        Ok(())
    }

    /// Fixed-point nodes: `T^t x = x` for all real `t` forces `B = 0`, so
    /// the fixed set is either every node or none.
    pub fn fix_nodes(&self, grid: &GridSpec) -> Result<Vec<usize>> {
        self.check_grid(grid)?;
        if self.is_trivial() {
            Ok((0..grid.num_nodes()).collect())
        } else {
            Ok(Vec::new())
        }
    }

    /// Whether a node set is closed under the grid orbit steps (one step
    /// along each matrix column suffices: columns generate the orbits).
    pub fn is_invariant(&self, grid: &GridSpec, nodes: &[usize]) -> Result<bool> {
        self.check_grid(grid)?;
        let set: HashSet<usize> = nodes.iter().copied().collect();
        for j in 0..self.n {
            let mut step = vec![0i64; self.n];
            step[j] = 1;
            for &x in nodes {
                if !set.contains(&self.act_steps(grid, x, &step)?) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// The `t`-grid an action filters on: the `n`-torus with the action's
/// period and the same spacing as the generator grid.
pub fn t_grid_for(action: &TorusAction, x_grid: &GridSpec) -> Result<GridSpec> {
    action.check_grid(x_grid)?;
    GridSpec::make_grid(
        action.acting_dim(),
        GridKind::Torus {
            period: action.period(),
        },
        x_grid.points_per_axis(),
    )
}

/// An equivariant family of orbit functions, stored as its generator:
/// `f(x)(t) = generator(T^t x)`.
#[derive(Debug, Clone)]
pub struct EquivariantMap {
    action: TorusAction,
    generator: SampledFunction,
}

impl EquivariantMap {
    pub fn new(action: TorusAction, generator: SampledFunction) -> Result<Self> {
        action.check_grid(generator.grid())?;
        if !generator.range_clamped() {
            return Err(Error::Precondition(
                "equivariant generators must take values in [0, 1]".into(),
            ));
        }
        Ok(EquivariantMap { action, generator })
    }

    pub fn action(&self) -> &TorusAction {
        &self.action
    }

    pub fn generator(&self) -> &SampledFunction {
        &self.generator
    }

    /// Evaluate `f(x)(t)` for a whole-step grid parameter `t`.
    pub fn evaluate_steps(&self, x: usize, t_steps: &[i64]) -> Result<f64> {
        let y = self.action.act_steps(self.generator.grid(), x, t_steps)?;
        Ok(self.generator.value(y))
    }

    /// The orbit function of `x`, sampled on the `t`-grid: a pure index
    /// pullback of the generator values.
    pub fn orbit_function(&self, t_grid: &GridSpec, x: usize) -> Result<SampledFunction> {
        let x_grid = self.generator.grid();
        if t_grid.dim() != self.action.acting_dim() {
            return Err(Error::Grid(format!(
                "t-grid dimension {} does not match the acting dimension {}",
                t_grid.dim(),
                self.action.acting_dim()
            )));
        }
        if !t_grid.is_torus() || (t_grid.spacing() - x_grid.spacing()).abs() > 1e-12 {
            return Err(Error::Grid(
                "orbit functions need a torus t-grid with the generator's spacing".into(),
            ));
        }
        let mut vals = Vec::with_capacity(t_grid.num_nodes());
        for j in 0..t_grid.num_nodes() {
            let steps: Vec<i64> = t_grid.multi_index(j).iter().map(|&v| v as i64).collect();
            let y = self.action.act_steps(x_grid, x, &steps)?;
            vals.push(self.generator.value(y));
        }
        SampledFunction::new(t_grid.clone(), vals)
    }
}

/// Filter every orbit function of the family and return the filtered
/// family. One filter run covers a whole orbit; the scatter is checked
/// for bitwise consistency across base points, which holds because the
/// filter commutes with `t`-grid shifts bit for bit.
pub fn orbit_apply_filter(map: &EquivariantMap, plan: &FilterPlan) -> Result<EquivariantMap> {
    let x_grid = map.generator().grid();
    let t_grid = plan.grid();
    let n_x = x_grid.num_nodes();
    let mut out = vec![0.0f64; n_x];
    let mut assigned = vec![false; n_x];
    for x in 0..n_x {
        if assigned[x] {
            continue;
        }
        let pull = map.orbit_function(t_grid, x)?;
        let filtered = apply_filter(&pull, plan)?;
        for j in 0..t_grid.num_nodes() {
            let steps: Vec<i64> = t_grid.multi_index(j).iter().map(|&v| v as i64).collect();
            let y = map.action().act_steps(x_grid, x, &steps)?;
            let v = filtered.value(j);
            if assigned[y] {
                assert_eq!(
                    out[y].to_bits(),
                    v.to_bits(),
                    "orbit filter scatter disagreed at node {y}"
                );
            } else {
                out[y] = v;
                assigned[y] = true;
            }
        }
    }
    debug_assert!(assigned.iter().all(|&a| a));
    EquivariantMap::new(
        map.action().clone(),
        SampledFunction::new(x_grid.clone(), out)?,
    )
}

/// Certify every orbit function Lipschitz at `bound` (plus `slack` on the
/// quotient), returning the worst measured constant. With `restrict`,
/// only orbits based in that invariant node set are certified.
pub fn certify_orbit_lipschitz(
    map: &EquivariantMap,
    bound: f64,
    slack: f64,
    restrict: Option<&[usize]>,
) -> Result<f64> {
    let x_grid = map.generator().grid();
    let t_grid = t_grid_for(map.action(), x_grid)?;
    let mut seen = vec![false; x_grid.num_nodes()];
    let basepoints: Vec<usize> = match restrict {
        Some(nodes) => nodes.to_vec(),
        None => (0..x_grid.num_nodes()).collect(),
    };
    let mut worst = 0.0f64;
    for &x in &basepoints {
        if seen[x] {
            continue;
        }
        let pull = map.orbit_function(&t_grid, x)?;
        let measured = certify_lipschitz(&pull, bound, slack)?;
        worst = worst.max(measured);
        for j in 0..t_grid.num_nodes() {
            let steps: Vec<i64> = t_grid.multi_index(j).iter().map(|&v| v as i64).collect();
            seen[map.action().act_steps(x_grid, x, &steps)?] = true;
        }
    }
    Ok(worst)
}

/// Level-set node realizations of the cutoff data: `A = {rho_a <= 0}`,
/// `V = {rho_v < 0}`.
fn sublevel_nodes(rho: &SampledFunction, strict: bool) -> Vec<usize> {
    (0..rho.grid().num_nodes())
        .filter(|&x| {
            if strict {
                rho.value(x) < 0.0
            } else {
                rho.value(x) <= 0.0
            }
        })
        .collect()
}

/// Equivariant cutoff: from an invariant closed set `A = {rho_a <= 0}`
/// inside an invariant open set `V = {rho_v < 0}`, build a family `beta`
/// with `beta(x)(t) = 1` for `x` in `A` and `beta(x)(0) = 0` off `V`,
/// whose orbit functions are `delta`-Lipschitz.
///
/// The support function is the indicator of `A`; its orbit functions are
/// constant (invariance), so the filter at constants `(delta/2, delta)`
/// reproduces them bit for bit, which gives the two guarantees exactly.
pub fn equivariant_cutoff(
    action: &TorusAction,
    rho_a: &SampledFunction,
    rho_v: &SampledFunction,
    delta: f64,
) -> Result<EquivariantMap> {
    let grid = rho_a.grid();
    if grid != rho_v.grid() {
        return Err(Error::Grid(
            "cutoff level functions live on different grids".into(),
        ));
    }
    action.check_grid(grid)?;
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!(
            "cutoff slope must be positive, got {delta}"
        )));
    }
    let a_nodes = sublevel_nodes(rho_a, false);
    let v_nodes = sublevel_nodes(rho_v, true);
    if !action.is_invariant(grid, &a_nodes)? {
        return Err(Error::Precondition(
            "cutoff core set is not invariant under the action".into(),
        ));
    }
    if !action.is_invariant(grid, &v_nodes)? {
        return Err(Error::Precondition(
            "cutoff margin set is not invariant under the action".into(),
        ));
    }
    let v_set: HashSet<usize> = v_nodes.iter().copied().collect();
    for &x in &a_nodes {
        if !v_set.contains(&x) {
            return Err(Error::Precondition(format!(
                "no admissible support margin: node {x} of the core set \
                 escapes the open margin set"
            )));
        }
    }
    let mut alpha = vec![0.0f64; grid.num_nodes()];
    for &x in &a_nodes {
        alpha[x] = 1.0;
    }
    let support = EquivariantMap::new(
        action.clone(),
        SampledFunction::new(grid.clone(), alpha)?,
    )?;
    let t_grid = t_grid_for(action, grid)?;
    let plan = build_plan(
        INTERNAL_PLAN_EPS,
        delta / 2.0,
        delta,
        &t_grid,
        action.period(),
        1,
    )?;
    orbit_apply_filter(&support, &plan)
}

/// Blend two families through a cutoff:
/// `h(x)(t) = (1 - beta(x)(t)) f(x)(t) + beta(x)(t) g(x)(t)`.
///
/// Requires `|f - g| < eps` on the blend region (the nodes where `beta`
/// can be nonzero). Where `beta = 1` the result is `g` bitwise, where
/// `beta = 0` it is `f` bitwise.
pub fn equivariant_blend(
    f: &EquivariantMap,
    g: &EquivariantMap,
    beta: &EquivariantMap,
    region: &[usize],
    eps: f64,
) -> Result<EquivariantMap> {
    if f.action() != g.action() || f.action() != beta.action() {
        return Err(Error::Parameter(
            "blend inputs must share one action".into(),
        ));
    }
    let grid = f.generator().grid();
    if grid != g.generator().grid() || grid != beta.generator().grid() {
        return Err(Error::Grid("blend inputs live on different grids".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!(
            "blend budget must be positive, got {eps}"
        )));
    }
    let mut worst = 0.0f64;
    let mut witness = 0usize;
    for &x in region {
        let d = (f.generator().value(x) - g.generator().value(x)).abs();
        if d > worst {
            worst = d;
            witness = x;
        }
    }
    if worst >= eps {
        return Err(Error::Precondition(format!(
            "|f - g| reaches {worst} at node {witness} on the blend region; \
             the blend needs it below {eps}"
        )));
    }
    let mut vals = Vec::with_capacity(grid.num_nodes());
    for x in 0..grid.num_nodes() {
        let b = beta.generator().value(x);
        if b == 0.0 {
            vals.push(f.generator().value(x));
        } else if b == 1.0 {
            vals.push(g.generator().value(x));
        } else {
            let v = (1.0 - b) * f.generator().value(x) + b * g.generator().value(x);
            vals.push(v.clamp(0.0, 1.0));
        }
    }
    EquivariantMap::new(
        f.action().clone(),
        SampledFunction::new(grid.clone(), vals)?,
    )
}

/// The canonical continuous-extension surrogate: a clamped lower envelope
/// steep enough (`max(10 c', 2) / h`) to pin every data value exactly.
fn steep_extension(
    grid: &GridSpec,
    data: &[(usize, f64)],
    c_prime: f64,
) -> Result<SampledFunction> {
    let c_ext = (10.0 * c_prime).max(2.0) / grid.spacing();
    clamped_envelope(grid, data, c_ext)
}

/// Extend a family given on an invariant node set to the whole torus:
/// steep envelope through the given values, then one orbitwise filter at
/// `(eps, c, c_prime)`.
///
/// On the set the result stays within `eps` of the data (the orbit
/// functions there are the original `c`-Lipschitz ones); at fixed points
/// of the action it reproduces the data exactly. An empty set falls back
/// to the filtered zero family with a warning.
pub fn equivariant_extend(
    action: &TorusAction,
    a_nodes: &[usize],
    g: &SampledFunction,
    c: f64,
    c_prime: f64,
    eps: f64,
) -> Result<EquivariantMap> {
    let grid = g.grid();
    action.check_grid(grid)?;
    if !(c > 0.0 && c < c_prime) {
        return Err(Error::Parameter(format!(
            "slopes must satisfy 0 < c < c', got c = {c}, c' = {c_prime}"
        )));
    }
    let t_grid = t_grid_for(action, grid)?;
    let plan = build_plan(eps, c, c_prime, &t_grid, action.period(), 1)?;
    if a_nodes.is_empty() {
        eprintln!("warning: extending from an empty set; defaulting to the zero family");
        let zero = SampledFunction::constant(grid.clone(), 0.0)?;
        return orbit_apply_filter(&EquivariantMap::new(action.clone(), zero)?, &plan);
    }
    if !action.is_invariant(grid, a_nodes)? {
        return Err(Error::Precondition(
            "extension set is not invariant under the action".into(),
        ));
    }
    let mut data = Vec::with_capacity(a_nodes.len());
    for &x in a_nodes {
        let v = g.value(x);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Precondition(format!(
                "extension data at node {x} is {v}, outside [0, 1]"
            )));
        }
        data.push((x, v));
    }
    let ext = steep_extension(grid, &data, c_prime)?;
    let map = EquivariantMap::new(action.clone(), ext)?;
    // Certify the data Lipschitz along the orbits inside the set (the
    // pullbacks there read only set values, which the envelope pinned).
    certify_orbit_lipschitz(&map, c, 1e-9, Some(a_nodes))?;
    orbit_apply_filter(&map, &plan)
}

/// Graft boundary data `g` (on an invariant node set) onto a family `f`:
/// extend `g` at the midpoint slope, then blend the extension back into
/// `f` through a cutoff supported on the set.
///
/// Contracts: `|h - f| < eps1` everywhere, `|h - g| < eps2` on the set,
/// and `h = g` bitwise on the set's fixed-point nodes.
pub fn extend_and_filter(
    action: &TorusAction,
    a_nodes: &[usize],
    f: &EquivariantMap,
    g: &SampledFunction,
    c: f64,
    c_prime: f64,
    eps1: f64,
    eps2: f64,
) -> Result<EquivariantMap> {
    let grid = f.generator().grid();
    if grid != g.grid() {
        return Err(Error::Grid(
            "family and boundary data live on different grids".into(),
        ));
    }
    if f.action() != action {
        return Err(Error::Parameter("family uses a different action".into()));
    }
    if !(c > 0.0 && c < c_prime) {
        return Err(Error::Parameter(format!(
            "slopes must satisfy 0 < c < c', got c = {c}, c' = {c_prime}"
        )));
    }
    if !(eps1 > 0.0 && eps2 > 0.0) {
        return Err(Error::Parameter(
            "both contract budgets must be positive".into(),
        ));
    }
    let mut s0 = 0.0f64;
    for &x in a_nodes {
        s0 = s0.max((f.generator().value(x) - g.value(x)).abs());
    }
    if s0 >= eps1 {
        return Err(Error::Precondition(format!(
            "boundary data strays {s0} from the family on the set; the \
             contract needs strictly less than eps1 = {eps1}"
        )));
    }
    let eps = 0.999 * eps2.min(eps1 - s0);
    let c1 = (c + c_prime) / 2.0;
    let g_ext = equivariant_extend(action, a_nodes, g, c, c1, eps)?;
    if a_nodes.is_empty() {
        // Nothing to graft: the blend below would be vacuous.
        return Ok(f.clone());
    }
    let delta = (c_prime - c1) / 2.0;
    if !(delta > 2.0 / action.period()) {
        return Err(Error::Parameter(format!(
            "torus period {} too small for the blend cutoff slope {delta}",
            action.period()
        )));
    }
    // Indicator level functions: A itself is the cutoff's core and margin.
    let in_a: HashSet<usize> = a_nodes.iter().copied().collect();
    let levels: Vec<f64> = (0..grid.num_nodes())
        .map(|x| if in_a.contains(&x) { -1.0 } else { 1.0 })
        .collect();
    let rho = SampledFunction::new(grid.clone(), levels)?;
    let beta = equivariant_cutoff(action, &rho, &rho, delta)?;
    equivariant_blend(f, &g_ext, &beta, a_nodes, eps1)
}

/// The base family of an action: values prescribed on the fixed-point
/// nodes, extended by the steep envelope and filtered orbitwise at
/// `(delta/2, delta)`. Fixed nodes keep their values exactly (their orbit
/// functions are constant, and the filter fixes constants bitwise). An
/// action without fixed points yields the zero family with a warning.
pub fn base_map(
    action: &TorusAction,
    grid: &GridSpec,
    iota0: &[(usize, f64)],
    delta: f64,
) -> Result<EquivariantMap> {
    action.check_grid(grid)?;
    let fix = action.fix_nodes(grid)?;
    let generator = if fix.is_empty() {
        if !iota0.is_empty() {
            return Err(Error::Parameter(
                "the action has no fixed nodes, but base values were given".into(),
            ));
        }
        eprintln!("warning: action has no fixed points; the base family is zero");
        SampledFunction::constant(grid.clone(), 0.0)?
    } else {
        let fix_set: HashSet<usize> = fix.iter().copied().collect();
        if iota0.len() != fix.len()
            || !iota0.iter().all(|(x, _)| fix_set.contains(x))
        {
            return Err(Error::Parameter(format!(
                "base values must cover the {} fixed nodes exactly",
                fix.len()
            )));
        }
        for &(x, v) in iota0 {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Precondition(format!(
                    "base value at node {x} is {v}, outside [0, 1]"
                )));
            }
        }
        steep_extension(grid, iota0, delta)?
    };
    let map = EquivariantMap::new(action.clone(), generator)?;
    let t_grid = t_grid_for(action, grid)?;
    let plan = build_plan(
        INTERNAL_PLAN_EPS,
        delta / 2.0,
        delta,
        &t_grid,
        action.period(),
        1,
    )?;
    orbit_apply_filter(&map, &plan)
}

/// An orthonormal frame for the transverse subspace of an action: a
/// linear isometry from `R^(n-k)` into the acting space.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    columns: Vec<Vec<f64>>,
}

impl Frame {
    /// Validate columns: equal lengths, orthonormal to 1e-12.
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Parameter("frame needs at least one column".into()));
        }
        let n = columns[0].len();
        for (i, a) in columns.iter().enumerate() {
            if a.len() != n {
                return Err(Error::Parameter("frame columns have mixed lengths".into()));
            }
            for (j, b) in columns.iter().enumerate().take(i + 1) {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-12 {
                    return Err(Error::Parameter(format!(
                        "frame columns {j} and {i} have inner product {dot}"
                    )));
                }
            }
        }
        Ok(Frame { columns })
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Input dimension `n - k`.
    pub fn dim_in(&self) -> usize {
        self.columns.len()
    }

    /// Ambient dimension `n`.
    pub fn dim_out(&self) -> usize {
        self.columns[0].len()
    }

    /// Apply the isometry: `t -> sum t_i u_i`.
    pub fn apply(&self, t: &[f64]) -> Result<Vec<f64>> {
        if t.len() != self.dim_in() {
            return Err(Error::Parameter(format!(
                "frame expects {} coordinates, got {}",
                self.dim_in(),
                t.len()
            )));
        }
        let mut out = vec![0.0; self.dim_out()];
        for (ti, col) in t.iter().zip(&self.columns) {
            for (o, c) in out.iter_mut().zip(col) {
                *o += ti * c;
            }
        }
        Ok(out)
    }
}

fn canonical_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x.abs() > 1e-12 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

/// Split the acting space into the stabilizer component `ker B` and its
/// orthogonal complement (the row space of `B`), both as orthonormal
/// bases, using a rank-revealing factorization with tolerance 1e-10.
pub fn stabilizer_split(action: &TorusAction) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let n = action.acting_dim();
    let mat = action.matrix_f64();
    let svd = mat.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .expect("svd was requested with right singular vectors");
    // Row-space basis: right singular vectors with nonzero singular value.
    let mut h_basis: Vec<Vec<f64>> = Vec::new();
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > RANK_TOL {
            let mut row: Vec<f64> = (0..n).map(|j| v_t[(i, j)]).collect();
            canonical_sign(&mut row);
            h_basis.push(row);
        }
    }
    // Kernel basis: deterministic completion of the complement.
    let mut g_basis: Vec<Vec<f64>> = Vec::new();
    for axis in 0..n {
        if g_basis.len() + h_basis.len() == n {
            break;
        }
        let mut v = vec![0.0f64; n];
        v[axis] = 1.0;
        for b in h_basis.iter().chain(g_basis.iter()) {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > PIVOT_TOL {
            for x in v.iter_mut() {
                *x /= norm;
            }
            canonical_sign(&mut v);
            g_basis.push(v);
        }
    }
    if g_basis.len() + h_basis.len() != n {
        return Err(Error::Parameter(
            "rank factorization failed to split the acting space".into(),
        ));
    }
    Ok((g_basis, h_basis))
}

/// Orthonormal frame from projecting a reference frame onto the subspace
/// spanned by `h_basis` (orthonormal) and running Gram-Schmidt. Fails if
/// the projections are (numerically) dependent.
pub fn gram_schmidt_frame(h_basis: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<Frame> {
    if h_basis.is_empty() {
        return Err(Error::Parameter(
            "the transverse subspace is trivial; no frame exists".into(),
        ));
    }
    let n = h_basis[0].len();
    if reference.len() != h_basis.len() {
        return Err(Error::Parameter(format!(
            "need exactly {} reference vectors, got {}",
            h_basis.len(),
            reference.len()
        )));
    }
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(reference.len());
    for (idx, e) in reference.iter().enumerate() {
        if e.len() != n {
            return Err(Error::Parameter("reference vector has wrong length".into()));
        }
        // Project onto the subspace.
        let mut v = vec![0.0f64; n];
        for b in h_basis {
            let dot: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x += dot * y;
            }
        }
        // Orthogonalize against the frame built so far.
        for u in &columns {
            let dot: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < PIVOT_TOL {
            return Err(Error::Parameter(format!(
                "reference vector {idx} projects onto the span of the \
                 previous ones; choose a different reference frame"
            )));
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        columns.push(v);
    }
    Frame::new(columns)
}

/// Default frame of an action: Gram-Schmidt over the standard basis
/// vectors whose projections onto the transverse subspace survive.
pub fn standard_frame(action: &TorusAction) -> Result<Frame> {
    let (_, h_basis) = stabilizer_split(action)?;
    if h_basis.is_empty() {
        return Err(Error::Parameter(
            "the action is trivial; it has no transverse directions".into(),
        ));
    }
    let n = action.acting_dim();
    let mut reference: Vec<Vec<f64>> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for axis in 0..n {
        if reference.len() == h_basis.len() {
            break;
        }
        let mut e = vec![0.0f64; n];
        e[axis] = 1.0;
        // Tentative projection, orthogonalized against accepted columns.
        let mut v = vec![0.0f64; n];
        for b in &h_basis {
            let dot: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x += dot * y;
            }
        }
        for u in &columns {
            let dot: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm >= PIVOT_TOL {
            for x in v.iter_mut() {
                *x /= norm;
            }
            columns.push(v);
            reference.push(e);
        }
    }
    if reference.len() != h_basis.len() {
        return Err(Error::Parameter(
            "no standard reference frame spans the transverse subspace".into(),
        ));
    }
    gram_schmidt_frame(&h_basis, &reference)
}

fn wrap_min_image(v: f64, period: f64) -> f64 {
    let w = v.rem_euclid(period);
    if w > period / 2.0 {
        w - period
    } else {
        w
    }
}

fn torus_displacement(from: &[f64], to: &[f64], period: f64) -> Vec<f64> {
    from.iter()
        .zip(to)
        .map(|(a, b)| wrap_min_image(b - a, period))
        .collect()
}

fn torus_point_dist(a: &[f64], b: &[f64], period: f64) -> f64 {
    torus_displacement(a, b, period)
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Transverse integral functionals of an action: component `i` is the
/// midpoint-quadrature integral of the bump along the frame directions
/// over the half ball `{|t| <= r, t_i <= 0}`. The bump is read at the
/// nearest grid node; `q` (even, at least 18) midpoints per axis keep
/// every quadrature node strictly off the splitting hyperplanes.
pub fn section_values(
    action: &TorusAction,
    bump: &SampledFunction,
    frame: &Frame,
    r: f64,
    q: usize,
    x: &[f64],
) -> Result<Vec<f64>> {
    let grid = bump.grid();
    action.check_grid(grid)?;
    if frame.dim_out() != action.acting_dim() {
        return Err(Error::Parameter(format!(
            "frame ambient dimension {} does not match the acting dimension {}",
            frame.dim_out(),
            action.acting_dim()
        )));
    }
    if !(r > 0.0 && r < action.period() / 2.0) {
        return Err(Error::Parameter(format!(
            "section radius must lie in (0, {}), got {r}",
            action.period() / 2.0
        )));
    }
    if q < 18 || q % 2 != 0 {
        return Err(Error::Parameter(format!(
            "quadrature needs an even number of midpoints per axis, at \
             least 18, got {q}"
        )));
    }
    let nk = frame.dim_in();
    let cell = 2.0 * r / q as f64;
    let vol = cell.powi(nk as i32);
    let mut out = vec![0.0f64; nk];
    let mut idx = vec![0usize; nk];
    loop {
        let t: Vec<f64> = idx
            .iter()
            .map(|&j| -r + (j as f64 + 0.5) * cell)
            .collect();
        let norm2: f64 = t.iter().map(|v| v * v).sum();
        if norm2 <= r * r {
            let point = action.act(x, &frame.apply(&t)?)?;
            let node = grid.nearest_node(&point)?;
            let hval = bump.value(node);
            if hval != 0.0 {
                for i in 0..nk {
                    if t[i] < 0.0 {
                        out[i] += hval * vol;
                    }
                }
            }
        }
        // Odometer over the quadrature grid.
        let mut axis = nk;
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < q {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// One check of a section audit.
#[derive(Debug, Clone)]
pub struct AuditRow {
    pub name: String,
    pub status: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub witness: String,
}

/// Render audit rows as CSV (header included).
pub fn audit_csv(rows: &[AuditRow]) -> String {
    let mut out = String::from("name,status,measured,tolerance,witness\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.6e},{:.6e},{}\n",
            row.name,
            if row.status { "pass" } else { "fail" },
            row.measured,
            row.tolerance,
            row.witness.replace(',', ";")
        ));
    }
    out
}

/// Result of [`build_local_section`]: the transverse node set, the flow
/// box radius, the audit rows, and the bump that produced them.
#[derive(Debug, Clone)]
pub struct SectionAudit {
    pub e_nodes: Vec<usize>,
    pub delta: f64,
    pub tol_section: f64,
    pub rows: Vec<AuditRow>,
    pub bump: SampledFunction,
}

impl SectionAudit {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.status)
    }
}

/// Sample points of the transverse ball `|t| <= radius` in frame
/// coordinates, `per_axis` per axis.
fn ball_samples(nk: usize, radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; nk];
    loop {
        let t: Vec<f64> = idx
            .iter()
            .map(|&j| {
                if per_axis == 1 {
                    0.0
                } else {
                    -radius + 2.0 * radius * j as f64 / (per_axis - 1) as f64
                }
            })
            .collect();
        if t.iter().map(|v| v * v).sum::<f64>() <= radius * radius + 1e-12 {
            out.push(t);
        }
        let mut axis = nk;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Sample directions of the transverse sphere `|t| = radius`.
fn sphere_samples(nk: usize, radius: f64) -> Vec<Vec<f64>> {
    match nk {
        1 => vec![vec![radius], vec![-radius]],
        2 => (0..32)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / 32.0;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for axis in 0..nk {
                for sign in [1.0, -1.0] {
                    let mut t = vec![0.0; nk];
                    t[axis] = sign * radius;
                    out.push(t);
                }
            }
            out
        }
    }
}

/// Build and audit a local section of the action at node `p`.
///
/// The construction samples the orbit geometry through `p` to place a
/// bump whose support avoids the image of the transverse `r`-sphere,
/// takes `E` as the transverse level set of the section functionals, and
/// audits injectivity of `(x, t) -> T^(rho t) x` over the flow box,
/// coverage of a neighborhood of `p`, monotonicity of each functional
/// along its own direction, and (two or more transverse directions)
/// independence from the other directions. A supplied bump is validated
/// against the sphere-avoidance condition instead of being constructed.
pub fn build_local_section(
    action: &TorusAction,
    grid: &GridSpec,
    p: usize,
    r: f64,
    q: usize,
    custom_bump: Option<&SampledFunction>,
) -> Result<SectionAudit> {
    action.check_grid(grid)?;
    if p >= grid.num_nodes() {
        return Err(Error::Grid(format!("node {p} out of range")));
    }
    let (g_basis, h_basis) = stabilizer_split(action)?;
    let nk = h_basis.len();
    if nk == 0 {
        return Err(Error::Parameter(
            "the action has no transverse directions (full stabilizer)".into(),
        ));
    }
    let frame = standard_frame(action)?;
    let period = action.period();
    let h = grid.spacing();
    let d = grid.dim();
    let p_coord = grid.coord(p);
    let a = r / 4.0;
    let delta = a;
    let tol_section = (2.0 * r / q as f64) * r.powi(nk as i32 - 1) * 4.0;
    let mut rows: Vec<AuditRow> = Vec::new();

    // Orbit geometry through p: how far the transverse ball and sphere
    // move the base point, in torus distance (independent of p).
    let mut gamma_a = 0.0f64;
    for t in ball_samples(nk, a, 9) {
        let moved = action.act(&p_coord, &frame.apply(&t)?)?;
        gamma_a = gamma_a.max(torus_point_dist(&p_coord, &moved, period));
    }
    let mut gamma_ann = f64::INFINITY;
    for t in sphere_samples(nk, r) {
        let moved = action.act(&p_coord, &frame.apply(&t)?)?;
        gamma_ann = gamma_ann.min(torus_point_dist(&p_coord, &moved, period));
    }
    let margin = gamma_ann - gamma_a;
    rows.push(AuditRow {
        name: "margins".into(),
        status: margin > 2.0 * h * (d as f64).sqrt(),
        measured: margin,
        tolerance: 2.0 * h * (d as f64).sqrt(),
        witness: format!("gamma_a={gamma_a:.6e} gamma_ann={gamma_ann:.6e}"),
    });
    if margin <= 2.0 * h * (d as f64).sqrt() {
        return Err(Error::Parameter(format!(
            "no admissible bump margins: the transverse sphere comes as \
             close as {gamma_ann} while the core ball reaches {gamma_a}"
        )));
    }
    let w = margin / 4.0;
    let cut = gamma_a + 2.0 * w;

    // The bump: one on the core ball's reach, zero before the sphere.
    let bump = match custom_bump {
        Some(b) => {
            if b.grid() != grid {
                return Err(Error::Grid("bump lives on a different grid".into()));
            }
            b.clone()
        }
        None => {
            let vals: Vec<f64> = (0..grid.num_nodes())
                .map(|y| {
                    let dist = torus_point_dist(&grid.coord(y), &p_coord, period);
                    ((cut - dist) / w).clamp(0.0, 1.0)
                })
                .collect();
            SampledFunction::new(grid.clone(), vals)?
        }
    };
    // Support condition: the bump must vanish on the sphere image.
    let mut support_worst = 0.0f64;
    let mut support_witness = String::from("-");
    for t in sphere_samples(nk, r) {
        let moved = action.act(&p_coord, &frame.apply(&t)?)?;
        let node = grid.nearest_node(&moved)?;
        let v = bump.value(node);
        if v > support_worst {
            support_worst = v;
            support_witness = format!("node={node}");
        }
    }
    rows.push(AuditRow {
        name: "bump_support".into(),
        status: support_worst == 0.0,
        measured: support_worst,
        tolerance: 0.0,
        witness: support_witness,
    });
    if support_worst != 0.0 {
        return Err(Error::Precondition(format!(
            "bump support touches the transverse sphere image (value \
             {support_worst}); the section needs a clear annulus"
        )));
    }

    // Section functionals at p.
    let f_p = section_values(action, &bump, &frame, r, q, &p_coord)?;

    // Transverse level set: window nodes orthogonal to the flow whose
    // functionals match f(p).
    let flow_cols: Vec<Vec<f64>> = {
        // Orthonormal basis of the flow subspace Im(B) in the torus space.
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for j in 0..action.acting_dim() {
            let mut v: Vec<f64> = (0..d).map(|i| action.matrix()[i][j] as f64).collect();
            for u in &cols {
                let dot: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= dot * y;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > PIVOT_TOL {
                for x in v.iter_mut() {
                    *x /= norm;
                }
                cols.push(v);
            }
        }
        cols
    };
    let mut e_nodes: Vec<usize> = Vec::new();
    for y in 0..grid.num_nodes() {
        let disp = torus_displacement(&p_coord, &grid.coord(y), period);
        let dist: f64 = disp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dist > a {
            continue;
        }
        let proj: f64 = flow_cols
            .iter()
            .map(|u| {
                let dot: f64 = disp.iter().zip(u).map(|(x, y)| x * y).sum();
                dot * dot
            })
            .sum::<f64>()
            .sqrt();
        if proj > 1e-9 {
            continue;
        }
        let f_y = section_values(action, &bump, &frame, r, q, &grid.coord(y))?;
        let diff = f_y
            .iter()
            .zip(&f_p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if diff <= tol_section {
            e_nodes.push(y);
        }
    }
    rows.push(AuditRow {
        name: "e_contains_p".into(),
        status: e_nodes.contains(&p),
        measured: e_nodes.len() as f64,
        tolerance: 1.0,
        witness: format!("|E|={}", e_nodes.len()),
    });

    // Injectivity over the flow box E x B_delta: sampled points with
    // distinct parameters must have distinct images.
    let mut per_axis = 9usize;
    let mut t_samples = ball_samples(nk, delta, per_axis);
    while t_samples.len() * e_nodes.len() < 1000 {
        per_axis = per_axis * 2 + 1;
        t_samples = ball_samples(nk, delta, per_axis);
    }
    let mut points: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for &x in &e_nodes {
        let xc = grid.coord(x);
        for t in &t_samples {
            let image = action.act(&xc, &frame.apply(t)?)?;
            points.push((x, t.clone(), image));
        }
    }
    let mut min_separation = f64::INFINITY;
    let mut collisions = 0usize;
    let mut collision_witness = String::from("-");
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let (xa, ta, ia) = &points[i];
            let (xb, tb, ib) = &points[j];
            let image_dist = torus_point_dist(ia, ib, period);
            let param_dist = if xa != xb {
                f64::INFINITY
            } else {
                ta.iter()
                    .zip(tb)
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum::<f64>()
                    .sqrt()
            };
            if xa != xb || param_dist > 1e-6 {
                if image_dist <= 1e-9 {
                    collisions += 1;
                    collision_witness = format!("x={xa} x'={xb}");
                } else {
                    min_separation = min_separation.min(image_dist);
                }
            }
        }
    }
    rows.push(AuditRow {
        name: "injectivity".into(),
        status: collisions == 0,
        measured: if collisions == 0 {
            min_separation
        } else {
            collisions as f64
        },
        tolerance: 1e-9,
        witness: format!(
            "samples={} {}",
            points.len(),
            if collisions == 0 {
                "min_sep".to_string()
            } else {
                collision_witness
            }
        ),
    });

    // Coverage: every node near p is hit by the flow box, found by least
    // squares along the flow and matching the transverse rest against E.
    let b_rho = {
        let mut m = DMatrix::zeros(d, nk);
        for (col, u) in frame.columns().iter().enumerate() {
            for i in 0..d {
                let mut v = 0.0;
                for j in 0..action.acting_dim() {
                    v += action.matrix()[i][j] as f64 * u[j];
                }
                m[(i, col)] = v;
            }
        }
        m
    };
    let pinv = b_rho
        .clone()
        .pseudo_inverse(RANK_TOL)
        .map_err(|e| Error::Parameter(format!("flow matrix has no pseudo inverse: {e}")))?;
    let mut coverage_worst = 0.0f64;
    let mut coverage_witness = String::from("-");
    let mut covered = true;
    for y in 0..grid.num_nodes() {
        let yc = grid.coord(y);
        let disp = torus_displacement(&p_coord, &yc, period);
        let dist: f64 = disp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dist > delta / 2.0 {
            continue;
        }
        let t_star = &pinv * DVector::from_vec(disp.clone());
        let t_norm = t_star.norm();
        let along = &b_rho * &t_star;
        let x_star: Vec<f64> = (0..d)
            .map(|i| (yc[i] - along[i]).rem_euclid(period))
            .collect();
        let near_e = e_nodes
            .iter()
            .map(|&e| torus_point_dist(&x_star, &grid.coord(e), period))
            .fold(f64::INFINITY, f64::min);
        let slack = h * (d as f64).sqrt() / 2.0 + 1e-9;
        if t_norm > delta + 1e-9 || near_e > slack {
            covered = false;
            coverage_witness = format!("node={y}");
        }
        coverage_worst = coverage_worst.max(near_e);
    }
    rows.push(AuditRow {
        name: "coverage".into(),
        status: covered,
        measured: coverage_worst,
        tolerance: h * (d as f64).sqrt() / 2.0 + 1e-9,
        witness: coverage_witness,
    });

    // Monotonicity: each functional strictly increases along its own
    // transverse direction.
    for i in 0..nk {
        let mut values = Vec::new();
        for step in [-0.5, 0.0, 0.5] {
            let mut t = vec![0.0; nk];
            t[i] = step * a;
            let moved = action.act(&p_coord, &frame.apply(&t)?)?;
            values.push(section_values(action, &bump, &frame, r, q, &moved)?[i]);
        }
        let inc_low = values[1] - values[0];
        let inc_high = values[2] - values[1];
        let margin = inc_low.min(inc_high);
        rows.push(AuditRow {
            name: format!("monotonicity_{i}"),
            status: margin > 0.0,
            measured: margin,
            tolerance: 0.0,
            witness: format!(
                "f({:.3e})={:.6e} f(0)={:.6e} f({:.3e})={:.6e}",
                -0.5 * a,
                values[0],
                values[1],
                0.5 * a,
                values[2]
            ),
        });
    }

    // Independence: functional i must not react to the other transverse
    // directions beyond the quadrature tolerance.
    if nk >= 2 {
        for i in 0..nk {
            for j in 0..nk {
                if i == j {
                    continue;
                }
                let mut worst = 0.0f64;
                for step in 0..9 {
                    let u = -0.5 * a + a * step as f64 / 8.0;
                    let mut t = vec![0.0; nk];
                    t[j] = u;
                    let moved = action.act(&p_coord, &frame.apply(&t)?)?;
                    let v = section_values(action, &bump, &frame, r, q, &moved)?[i];
                    worst = worst.max((v - f_p[i]).abs());
                }
                rows.push(AuditRow {
                    name: format!("independence_{i}_{j}"),
                    status: worst <= tol_section,
                    measured: worst,
                    tolerance: tol_section,
                    witness: "-".into(),
                });
            }
        }
    }
    let _ = g_basis; // stabilizer basis only informs the split here

    Ok(SectionAudit {
        e_nodes,
        delta,
        tol_section,
        rows,
        bump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipcore::random_lipschitz;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus_grid(dim: usize, period: f64, m: usize) -> GridSpec {
        GridSpec::make_grid(dim, GridKind::Torus { period }, m).unwrap()
    }

    #[test]
    fn action_law_holds_on_random_parameters() {
        let action = TorusAction::from_integer(vec![vec![1, 2], vec![0, 1]], 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..4.0)).collect();
            let t: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let s: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let ts: Vec<f64> = t.iter().zip(&s).map(|(a, b)| a + b).collect();
            let lhs = action.act(&x, &ts).unwrap();
            let rhs = action.act(&action.act(&x, &s).unwrap(), &t).unwrap();
            for (a, b) in lhs.iter().zip(&rhs) {
                let diff = (a - b).abs().min(4.0 - (a - b).abs());
                assert!(diff <= 1e-9, "action law broke: {a} vs {b}");
            }
        }
        // t = 0 fixes everything; the zero matrix fixes everything.
        let x = vec![1.25, 3.5];
        assert_eq!(action.act(&x, &[0.0, 0.0]).unwrap(), x);
        let still = TorusAction::from_integer(vec![vec![0, 0], vec![0, 0]], 4.0).unwrap();
        assert_eq!(still.act(&x, &[1.7, -2.3]).unwrap(), x);
        // Non-integer matrices are rejected.
        assert!(TorusAction::new(&[vec![0.5]], 4.0).is_err());
    }

    #[test]
    fn stabilizer_split_matches_inspection() {
        // Rank one in two dimensions: kernel e2, complement e1.
        let a = TorusAction::from_integer(vec![vec![1, 0], vec![0, 0]], 4.0).unwrap();
        let (g, h) = stabilizer_split(&a).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(h.len(), 1);
        assert!((g[0][1].abs() - 1.0).abs() <= 1e-12 && g[0][0].abs() <= 1e-12);
        assert!((h[0][0].abs() - 1.0).abs() <= 1e-12 && h[0][1].abs() <= 1e-12);
        // Full rank: trivial kernel.
        let free = TorusAction::from_integer(vec![vec![1, 0], vec![0, 1]], 4.0).unwrap();
        let (g, h) = stabilizer_split(&free).unwrap();
        assert!(g.is_empty());
        assert_eq!(h.len(), 2);
        // Zero matrix: everything stabilizes.
        let still = TorusAction::from_integer(vec![vec![0, 0], vec![0, 0]], 4.0).unwrap();
        let (g, h) = stabilizer_split(&still).unwrap();
        assert_eq!(g.len(), 2);
        assert!(h.is_empty());
    }

    #[test]
    fn gram_schmidt_frames_are_deterministic() {
        let inv = 1.0 / 2.0f64.sqrt();
        let basis = vec![vec![inv, inv]];
        let e1 = vec![vec![1.0, 0.0]];
        let f1 = gram_schmidt_frame(&basis, &e1).unwrap();
        let f2 = gram_schmidt_frame(&basis, &e1).unwrap();
        assert_eq!(f1, f2);
        assert!((f1.columns()[0][0] - inv).abs() <= 1e-12);
        assert!((f1.columns()[0][1] - inv).abs() <= 1e-12);
        // A reference that projects to zero is rejected.
        let basis_e1 = vec![vec![1.0, 0.0]];
        let e2 = vec![vec![0.0, 1.0]];
        assert!(gram_schmidt_frame(&basis_e1, &e2).is_err());
    }

    #[test]
    fn orbit_functions_respect_the_shift_identity() {
        let grid = torus_grid(1, 4.0, 16);
        let action = TorusAction::from_integer(vec![vec![1]], 4.0).unwrap();
        let gen = random_lipschitz(&grid, 0.4, 8).unwrap();
        let map = EquivariantMap::new(action.clone(), gen).unwrap();
        let t_grid = t_grid_for(&action, &grid).unwrap();
        // f(T^s x)(t) = f(x)(t + s), bit for bit, for grid shifts.
        for x in [0usize, 5] {
            let base = map.orbit_function(&t_grid, x).unwrap();
            for s in [1i64, 3, 7] {
                let shifted_base = action.act_steps(&grid, x, &[s]).unwrap();
                let shifted = map.orbit_function(&t_grid, shifted_base).unwrap();
                for j in 0..16usize {
                    let wrapped = (j + s as usize) % 16;
                    assert_eq!(shifted.value(j), base.value(wrapped));
                }
            }
        }
        // evaluate_steps agrees with the pullback.
        let pull = map.orbit_function(&t_grid, 3).unwrap();
        for j in 0..16 {
            assert_eq!(
                map.evaluate_steps(3, &[j as i64]).unwrap(),
                pull.value(j)
            );
        }
    }

    #[test]
    fn orbit_filter_matches_per_node_filtering() {
        let grid = torus_grid(1, 4.0, 16);
        let action = TorusAction::from_integer(vec![vec![1]], 4.0).unwrap();
        let gen = random_lipschitz(&grid, 0.9, 21).unwrap();
        let map = EquivariantMap::new(action.clone(), gen).unwrap();
        let t_grid = t_grid_for(&action, &grid).unwrap();
        let plan = build_plan(0.5, 0.5, 1.0, &t_grid, 4.0, 2).unwrap();
        let filtered = orbit_apply_filter(&map, &plan).unwrap();
        for x in 0..16 {
            let pull = map.orbit_function(&t_grid, x).unwrap();
            let direct = apply_filter(&pull, &plan).unwrap();
            assert_eq!(
                filtered.generator().value(x),
                direct.value(t_grid.origin_index()),
                "node {x}"
            );
        }
    }

    #[test]
    fn orbit_filter_fixes_invariant_generators_bitwise() {
        let grid = torus_grid(1, 4.0, 16);
        // Steps of two: two orbits (even and odd nodes).
        let action = TorusAction::from_integer(vec![vec![2]], 4.0).unwrap();
        let vals: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.3 } else { 0.8 }).collect();
        let gen = SampledFunction::new(grid.clone(), vals).unwrap();
        let map = EquivariantMap::new(action.clone(), gen.clone()).unwrap();
        let t_grid = t_grid_for(&action, &grid).unwrap();
        let plan = build_plan(0.5, 0.5, 1.0, &t_grid, 4.0, 2).unwrap();
        let filtered = orbit_apply_filter(&map, &plan).unwrap();
        assert_eq!(filtered.generator().values(), gen.values());
    }

    #[test]
    fn cutoff_is_the_invariant_indicator() {
        let grid = torus_grid(1, 4.0, 16);
        let action = TorusAction::from_integer(vec![vec![2]], 4.0).unwrap();
        // Core and margin: the even orbit.
        let levels: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let rho = SampledFunction::new(grid.clone(), levels).unwrap();
        let beta = equivariant_cutoff(&action, &rho, &rho, 0.6).unwrap();
        for x in 0..16 {
            let want = if x % 2 == 0 { 1.0 } else { 0.0 };
            assert_eq!(beta.generator().value(x), want, "node {x}");
        }
        // A set that is not invariant is rejected.
        let mut broken = vec![1.0; 16];
        broken[0] = -1.0;
        let rho_bad = SampledFunction::new(grid.clone(), broken).unwrap();
        assert!(equivariant_cutoff(&action, &rho_bad, &rho_bad, 0.6).is_err());
        // A core escaping the margin is rejected.
        let all: Vec<f64> = vec![-1.0; 16];
        let none: Vec<f64> = vec![1.0; 16];
        let rho_all = SampledFunction::new(grid.clone(), all).unwrap();
        let rho_none = SampledFunction::new(grid.clone(), none).unwrap();
        assert!(equivariant_cutoff(&action, &rho_all, &rho_none, 0.6).is_err());
        // Full core: the constant one family.
        let beta_one = equivariant_cutoff(&action, &rho_all, &rho_all, 0.6).unwrap();
        assert!(beta_one.generator().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn blend_interpolates_bitwise_at_the_ends() {
        let grid = torus_grid(1, 4.0, 16);
        let action = TorusAction::from_integer(vec![vec![2]], 4.0).unwrap();
        let f_gen = random_lipschitz(&grid, 0.3, 4).unwrap();
        let g_gen: Vec<f64> = f_gen
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v + 0.2 * ((i % 3) as f64 - 1.0) * 0.1).clamp(0.0, 1.0))
            .collect();
        let f = EquivariantMap::new(action.clone(), f_gen.clone()).unwrap();
        let g = EquivariantMap::new(
            action.clone(),
            SampledFunction::new(grid.clone(), g_gen).unwrap(),
        )
        .unwrap();
        let all: Vec<usize> = (0..16).collect();
        // beta = 1 everywhere gives g; beta = 0 gives f.
        let one = EquivariantMap::new(
            action.clone(),
            SampledFunction::constant(grid.clone(), 1.0).unwrap(),
        )
        .unwrap();
        let zero = EquivariantMap::new(
            action.clone(),
            SampledFunction::constant(grid.clone(), 0.0).unwrap(),
        )
        .unwrap();
        let h1 = equivariant_blend(&f, &g, &one, &all, 0.5).unwrap();
        assert_eq!(h1.generator().values(), g.generator().values());
        let h0 = equivariant_blend(&f, &g, &zero, &all, 0.5).unwrap();
        assert_eq!(h0.generator().values(), f.generator().values());
        // Precondition violation: distant g.
        let far = EquivariantMap::new(
            action.clone(),
            SampledFunction::constant(grid.clone(), 1.0).unwrap(),
        )
        .unwrap();
        assert!(equivariant_blend(&f, &far, &one, &all, 0.05).is_err());
    }

    #[test]
    fn extension_reproduces_data_along_fixed_orbits() {
        // Trivial action: every node fixed, extension returns the data.
        let grid = torus_grid(1, 8.0, 32);
        let action = TorusAction::from_integer(vec![vec![0]], 8.0).unwrap();
        let g = random_lipschitz(&grid, 0.4, 17).unwrap();
        let a_nodes: Vec<usize> = (0..32).step_by(2).collect();
        let ext = equivariant_extend(&action, &a_nodes, &g, 0.5, 1.5, 0.4).unwrap();
        for &x in &a_nodes {
            assert_eq!(ext.generator().value(x), g.value(x), "fixed node {x}");
        }
        // Free flow: one orbit, the extension stays eps-close on the set.
        let action_free = TorusAction::from_integer(vec![vec![1]], 8.0).unwrap();
        let all: Vec<usize> = (0..32).collect();
        let data = random_lipschitz(&grid, 0.4, 9).unwrap();
        let ext_free =
            equivariant_extend(&action_free, &all, &data, 0.5, 1.5, 0.4).unwrap();
        let mut worst = 0.0f64;
        for x in 0..32 {
            worst = worst.max((ext_free.generator().value(x) - data.value(x)).abs());
        }
        assert!(worst < 0.4, "extension strayed {worst}");
    }

    #[test]
    fn extend_and_filter_honors_the_contracts() {
        let grid = torus_grid(1, 8.0, 40);
        // Trivial action: everything fixed, the graft equals the data on
        // the set.
        let action = TorusAction::from_integer(vec![vec![0]], 8.0).unwrap();
        let f_gen = random_lipschitz(&grid, 0.5, 31).unwrap();
        let f = EquivariantMap::new(action.clone(), f_gen.clone()).unwrap();
        let mut g_vals = f_gen.values().to_vec();
        for (i, v) in g_vals.iter_mut().enumerate() {
            *v = (*v + 0.05 * (1.0 + (i % 5) as f64) / 5.0).clamp(0.0, 1.0);
        }
        let g = SampledFunction::new(grid.clone(), g_vals).unwrap();
        let a_nodes: Vec<usize> = (0..40).step_by(4).collect();
        let h = extend_and_filter(&action, &a_nodes, &f, &g, 0.5, 2.0, 0.5, 0.5).unwrap();
        let mut worst_x = 0.0f64;
        for x in 0..40 {
            worst_x = worst_x.max((h.generator().value(x) - f_gen.value(x)).abs());
        }
        assert!(worst_x < 0.5, "family contract broke: {worst_x}");
        for &x in &a_nodes {
            // All nodes are fixed under the trivial action.
            assert_eq!(h.generator().value(x), g.value(x), "fixed node {x}");
        }
        // Precondition: data straying past eps1 is rejected.
        let far = SampledFunction::constant(grid.clone(), 1.0).unwrap();
        assert!(extend_and_filter(&action, &a_nodes, &f, &far, 0.5, 2.0, 0.1, 0.5).is_err());
    }

    #[test]
    fn base_map_reproduces_fixed_values_exactly() {
        let grid = torus_grid(1, 8.0, 32);
        // Trivial action: the base family is the data itself.
        let action = TorusAction::from_integer(vec![vec![0]], 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let iota: Vec<(usize, f64)> = (0..32).map(|x| (x, rng.gen_range(0.0..1.0))).collect();
        let f = base_map(&action, &grid, &iota, 0.6).unwrap();
        for &(x, v) in &iota {
            assert_eq!(f.generator().value(x), v);
        }
        // Free flow: no fixed points, zero family plus warning.
        let free = TorusAction::from_integer(vec![vec![1]], 8.0).unwrap();
        let zero = base_map(&free, &grid, &[], 0.6).unwrap();
        assert!(zero.generator().values().iter().all(|&v| v == 0.0));
        assert!(base_map(&free, &grid, &[(0, 0.5)], 0.6).is_err());
    }

    #[test]
    fn section_audit_passes_for_the_free_circle_flow() {
        let grid = torus_grid(1, 4.0, 64);
        let action = TorusAction::from_integer(vec![vec![1]], 4.0).unwrap();
        let p = 10usize;
        let audit = build_local_section(&action, &grid, p, 1.0, 18, None).unwrap();
        for row in &audit.rows {
            assert!(
                row.status,
                "audit row {} failed: measured {} vs {} ({})",
                row.name, row.measured, row.tolerance, row.witness
            );
        }
        // The free flow pins the section to the base node alone.
        assert_eq!(audit.e_nodes, vec![p]);
        assert!((audit.delta - 0.25).abs() <= 1e-12);
        let csv = audit_csv(&audit.rows);
        assert!(csv.starts_with("name,status,measured,tolerance,witness"));
        assert!(csv.contains("injectivity,pass"));
    }

    #[test]
    fn section_rejects_a_bump_covering_the_sphere() {
        let grid = torus_grid(1, 4.0, 64);
        let action = TorusAction::from_integer(vec![vec![1]], 4.0).unwrap();
        let ones = SampledFunction::constant(grid.clone(), 1.0).unwrap();
        let err = build_local_section(&action, &grid, 0, 1.0, 18, Some(&ones)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "got {err:?}");
    }

    #[test]
    fn section_audit_passes_for_the_rank_one_plane_action() {
        let grid = torus_grid(2, 4.0, 32);
        let action = TorusAction::from_integer(vec![vec![1, 0], vec![0, 0]], 4.0).unwrap();
        let p = grid.flat_index(&[8, 8]);
        let audit = build_local_section(&action, &grid, p, 1.0, 18, None).unwrap();
        for row in &audit.rows {
            assert!(
                row.status,
                "audit row {} failed: measured {} vs {} ({})",
                row.name, row.measured, row.tolerance, row.witness
            );
        }
        // The section is transverse: all its nodes share the flowing
        // coordinate with p.
        for &e in &audit.e_nodes {
            assert_eq!(grid.multi_index(e)[0], 8, "node {e} drifted along the flow");
        }
        assert!(audit.e_nodes.len() > 1, "expected a transverse segment");
    }
}
