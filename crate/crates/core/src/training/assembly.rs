//! Composite loss over one or more subdomain networks.
//!
//! Every point that enters a loss term is routed to the network that owns it
//! (or, for interface terms, to both neighbours) and appended to one of a
//! fixed set of per-network batches. A single jet pass per batch then serves
//! all terms, and their adjoints are accumulated before one reverse pass.

use crate::diffnet::{JetBatch, JetSpec, JetTrace, NetworkConfig, Parameters};
use crate::error::{Error, Result};
use crate::pdes::{linspace, BoundaryKind, ProblemKind, ProblemSpec, SampleSet, T, X};

use super::{LossBreakdown, LossSpec, Model};

const BOUNDARY: usize = 0;
const COLLOCATION: usize = 1;
const DATA: usize = 2;
const INTERFACE: usize = 3;
const CONSERVATION: usize = 4;
const COLEHOPF: usize = 5;
const KINDS: usize = 6;

#[derive(Debug, Clone, Copy)]
struct Loc {
    net: usize,
    idx: usize,
}

#[derive(Debug, Clone)]
enum BoundaryTerm {
    Value { at: Loc, target: Vec<f64> },
    Periodic { at: Loc, partner: Loc },
}

#[derive(Debug, Clone)]
struct ColeHopfLayout {
    nx: usize,
    nt: usize,
    dx: f64,
    dt: f64,
    /// Row-major in `t` then `x`.
    nodes: Vec<Loc>,
}

#[derive(Debug, Clone)]
struct ConservationLayout {
    slices: usize,
    per_slice: usize,
    per_point_square: bool,
    /// Row-major in `t` then `x`.
    nodes: Vec<Loc>,
}

/// Precomputed point batches and term bookkeeping for a loss evaluation.
#[derive(Debug, Clone)]
pub struct Assembly {
    problem: ProblemSpec,
    configs: Vec<NetworkConfig>,
    spec: LossSpec,
    outputs: usize,
    specs: [JetSpec; KINDS],
    points: Vec<[Vec<f64>; KINDS]>,
    boundary: Vec<BoundaryTerm>,
    collocation: Vec<Loc>,
    data: Vec<(Loc, Vec<f64>)>,
    interfaces: Vec<Vec<(Loc, Loc)>>,
    conservation: Option<ConservationLayout>,
    colehopf: Option<ColeHopfLayout>,
}

impl Assembly {
    /// `configs` has one entry per subdomain network, ordered left to right,
    /// split at `cuts`.
    pub fn new(
        problem: &ProblemSpec,
        samples: &SampleSet,
        spec: &LossSpec,
        configs: &[NetworkConfig],
        cuts: &[f64],
    ) -> Result<Self> {
        problem.validate()?;
        spec.validate()?;
        if configs.len() != cuts.len() + 1 {
            return Err(Error::Shape(format!(
                "{} networks for {} cuts",
                configs.len(),
                cuts.len()
            )));
        }
        let outputs = problem.outputs();
        if configs.iter().any(|c| c.input_dim != 2 || c.output_dim != outputs) {
            return Err(Error::Shape(format!("networks must map (x, t) to {outputs} outputs")));
        }
        let periodic = samples
            .boundary
            .iter()
            .any(|b| matches!(b.kind, BoundaryKind::Periodic { .. }));
        let specs = [
            if periodic { JetSpec::new(vec![X], vec![]) } else { JetSpec::values() },
            JetSpec::new(vec![X, T], vec![X]),
            JetSpec::values(),
            JetSpec::new(vec![X], vec![]),
            JetSpec::new(vec![T], vec![]),
            JetSpec::values(),
        ];
        let mut asm = Self {
            problem: *problem,
            configs: configs.to_vec(),
            spec: spec.clone(),
            outputs,
            specs,
            points: vec![Default::default(); configs.len()],
            boundary: Vec::new(),
            collocation: Vec::new(),
            data: Vec::new(),
            interfaces: Vec::new(),
            conservation: None,
            colehopf: None,
        };
        let owner = |x: f64| cuts.iter().filter(|&&c| x >= c).count();

        let w = &spec.weights;
        if w.bc > 0.0 {
            for b in &samples.boundary {
                let at = asm.push(BOUNDARY, owner(b.point[0]), b.point);
                let term = match &b.kind {
                    BoundaryKind::Value { target, .. } => {
                        if target.len() != outputs {
                            return Err(Error::Shape("boundary target width".into()));
                        }
                        BoundaryTerm::Value { at, target: target.clone() }
                    }
                    BoundaryKind::Periodic { partner } => BoundaryTerm::Periodic {
                        at,
                        partner: asm.push(BOUNDARY, owner(partner[0]), *partner),
                    },
                };
                asm.boundary.push(term);
            }
        }
        if w.pde > 0.0 {
            for &p in &samples.collocation {
                let loc = asm.push(COLLOCATION, owner(p[0]), p);
                asm.collocation.push(loc);
            }
        }
        if w.data > 0.0 {
            for d in &samples.data {
                if d.value.len() != outputs {
                    return Err(Error::Shape("data sample width".into()));
                }
                let loc = asm.push(DATA, owner(d.point[0]), d.point);
                asm.data.push((loc, d.value.clone()));
            }
        }
        let dom = problem.domain;
        if w.interface > 0.0 {
            let ts = linspace(dom.t_min, dom.t_max, spec.interface_points);
            for (j, &c) in cuts.iter().enumerate() {
                let pairs = ts
                    .iter()
                    .map(|&t| (asm.push(INTERFACE, j, [c, t]), asm.push(INTERFACE, j + 1, [c, t])))
                    .collect();
                asm.interfaces.push(pairs);
            }
        }
        if let (Some(grid), true) = (spec.conservation, w.conservation > 0.0) {
            let mut nodes = Vec::with_capacity(grid.slices * grid.points);
            for t in linspace(dom.t_min, dom.t_max, grid.slices) {
                for x in linspace(dom.x_min, dom.x_max, grid.points) {
                    nodes.push(asm.push(CONSERVATION, owner(x), [x, t]));
                }
            }
            asm.conservation = Some(ConservationLayout {
                slices: grid.slices,
                per_slice: grid.points,
                per_point_square: grid.per_point_square,
                nodes,
            });
        }
        if let (Some(grid), true) = (spec.colehopf, w.colehopf > 0.0) {
            if problem.kind != ProblemKind::Burgers {
                return Err(Error::Config("the Cole-Hopf loss applies to Burgers only".into()));
            }
            let mut nodes = Vec::with_capacity(grid.nx * grid.nt);
            for t in linspace(dom.t_min, dom.t_max, grid.nt) {
                for x in linspace(dom.x_min, dom.x_max, grid.nx) {
                    nodes.push(asm.push(COLEHOPF, owner(x), [x, t]));
                }
            }
            asm.colehopf = Some(ColeHopfLayout {
                nx: grid.nx,
                nt: grid.nt,
                dx: dom.width() / (grid.nx - 1) as f64,
                dt: dom.duration() / (grid.nt - 1) as f64,
                nodes,
            });
        }
        Ok(asm)
    }

    fn push(&mut self, kind: usize, net: usize, p: [f64; 2]) -> Loc {
        let batch = &mut self.points[net][kind];
        let idx = batch.len() / 2;
        batch.extend_from_slice(&p);
        Loc { net, idx }
    }

    pub fn num_nets(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[NetworkConfig] {
        &self.configs
    }

    /// Start of each network's block in the concatenated parameter vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0];
        for c in &self.configs {
            offsets.push(offsets[offsets.len() - 1] + c.num_params());
        }
        offsets
    }

    pub fn evaluate_model(&self, model: &Model) -> Result<LossBreakdown> {
        Ok(self.evaluate(&model.flat(), false)?.0)
    }

    /// Loss breakdown, and the gradient of the weighted total if requested.
    pub fn evaluate(&self, theta: &[f64], with_grad: bool) -> Result<(LossBreakdown, Vec<f64>)> {
        let offsets = self.offsets();
        if theta.len() != offsets[self.num_nets()] {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, networks need {}",
                theta.len(),
                offsets[self.num_nets()]
            )));
        }
        let mut traces: Vec<Vec<Option<JetTrace>>> = Vec::with_capacity(self.num_nets());
        let mut params = Vec::with_capacity(self.num_nets());
        for (n, config) in self.configs.iter().enumerate() {
            let p = Parameters(theta[offsets[n]..offsets[n + 1]].to_vec());
            let mut row = Vec::with_capacity(KINDS);
            for k in 0..KINDS {
                let pts = &self.points[n][k];
                row.push(if pts.is_empty() {
                    None
                } else {
                    Some(JetTrace::forward(config, &p, pts, &self.specs[k])?)
                });
            }
            traces.push(row);
            params.push(p);
        }
        let empty = JetBatch::zeros(0, self.outputs, JetSpec::values());
        let jets: Vec<Vec<&JetBatch>> = traces
            .iter()
            .map(|row| row.iter().map(|t| t.as_ref().map_or(&empty, |t| t.output())).collect())
            .collect();
        let mut adj: Vec<Vec<JetBatch>> = jets
            .iter()
            .map(|row| row.iter().map(|j| JetBatch::zeros_like(j)).collect())
            .collect();

        let w = self.spec.weights;
        let mut out = LossBreakdown::default();
        out.bc = self.boundary_term(&jets, &mut adj, w.bc);
        out.pde = self.pde_term(&jets, &mut adj, w.pde);
        out.data = self.data_term(&jets, &mut adj, w.data);
        out.interface = self.interface_term(&jets, &mut adj, w.interface);
        out.conservation = self.conservation_term(&jets, &mut adj, w.conservation);
        out.colehopf = self.colehopf_term(&jets, &mut adj, w.colehopf);
        out.total = w.bc * out.bc
            + w.pde * out.pde
            + w.data * out.data
            + w.interface * out.interface
            + w.conservation * out.conservation
            + w.colehopf * out.colehopf;
        if !out.total.is_finite() {
            return Err(Error::NonFinite(format!("loss = {}", out.total)));
        }
        let mut grad = Vec::new();
        if with_grad {
            grad = vec![0.0; theta.len()];
            for n in 0..self.num_nets() {
                let g = &mut grad[offsets[n]..offsets[n + 1]];
                for k in 0..KINDS {
                    if let Some(trace) = &traces[n][k] {
                        trace.backward(params[n].as_slice(), &adj[n][k], g);
                    }
                }
            }
        }
        Ok((out, grad))
    }

    fn boundary_term(&self, jets: &[Vec<&JetBatch>], adj: &mut [Vec<JetBatch>], w: f64) -> f64 {
        if self.boundary.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / self.boundary.len() as f64;
        let mut sum = 0.0;
        for term in &self.boundary {
            match term {
                BoundaryTerm::Value { at, target } => {
                    for (o, &y) in target.iter().enumerate() {
                        let r = jets[at.net][BOUNDARY].value(at.idx, o) - y;
                        sum += r * r;
                        *adj[at.net][BOUNDARY].value_mut(at.idx, o) += 2.0 * w * scale * r;
                    }
                }
                BoundaryTerm::Periodic { at, partner } => {
                    let (a, b) = (&jets[at.net][BOUNDARY], &jets[partner.net][BOUNDARY]);
                    for o in 0..self.outputs {
                        let r = a.value(at.idx, o) - b.value(partner.idx, o);
                        let rx = a.d1(X, at.idx, o) - b.d1(X, partner.idx, o);
                        sum += r * r + rx * rx;
                        let (g, gx) = (2.0 * w * scale * r, 2.0 * w * scale * rx);
                        *adj[at.net][BOUNDARY].value_mut(at.idx, o) += g;
                        *adj[partner.net][BOUNDARY].value_mut(partner.idx, o) -= g;
                        *adj[at.net][BOUNDARY].d1_mut(X, at.idx, o) += gx;
                        *adj[partner.net][BOUNDARY].d1_mut(X, partner.idx, o) -= gx;
                    }
                }
            }
        }
        sum * scale
    }

    fn pde_term(&self, jets: &[Vec<&JetBatch>], adj: &mut [Vec<JetBatch>], w: f64) -> f64 {
        if self.collocation.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / self.collocation.len() as f64;
        let nu = self.problem.viscosity;
        let mut sum = 0.0;
        for &Loc { net, idx: p } in &self.collocation {
            let j = jets[net][COLLOCATION];
            let a = &mut adj[net][COLLOCATION];
            match self.problem.kind {
                ProblemKind::Schrodinger => {
                    let (u, v) = (j.value(p, 0), j.value(p, 1));
                    let (ut, vt) = (j.d1(T, p, 0), j.d1(T, p, 1));
                    let (uxx, vxx) = (j.d2(X, p, 0), j.d2(X, p, 1));
                    let m = u * u + v * v;
                    let r1 = -vt + 0.5 * uxx + m * u;
                    let r2 = ut + 0.5 * vxx + m * v;
                    sum += r1 * r1 + r2 * r2;
                    let (a1, a2) = (2.0 * w * scale * r1, 2.0 * w * scale * r2);
                    *a.value_mut(p, 0) += a1 * (m + 2.0 * u * u) + a2 * 2.0 * u * v;
                    *a.value_mut(p, 1) += a1 * 2.0 * u * v + a2 * (m + 2.0 * v * v);
                    *a.d1_mut(T, p, 1) -= a1;
                    *a.d1_mut(T, p, 0) += a2;
                    *a.d2_mut(X, p, 0) += 0.5 * a1;
                    *a.d2_mut(X, p, 1) += 0.5 * a2;
                }
                ProblemKind::Burgers => {
                    let u = j.value(p, 0);
                    let (ut, ux, uxx) = (j.d1(T, p, 0), j.d1(X, p, 0), j.d2(X, p, 0));
                    let r = ut + u * ux - nu * uxx;
                    sum += r * r;
                    let g = 2.0 * w * scale * r;
                    *a.value_mut(p, 0) += g * ux;
                    *a.d1_mut(T, p, 0) += g;
                    *a.d1_mut(X, p, 0) += g * u;
                    *a.d2_mut(X, p, 0) -= g * nu;
                }
            }
        }
        sum * scale
    }

    fn data_term(&self, jets: &[Vec<&JetBatch>], adj: &mut [Vec<JetBatch>], w: f64) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / self.data.len() as f64;
        let mut sum = 0.0;
        for (at, value) in &self.data {
            for (o, &y) in value.iter().enumerate() {
                let r = jets[at.net][DATA].value(at.idx, o) - y;
                sum += r * r;
                *adj[at.net][DATA].value_mut(at.idx, o) += 2.0 * w * scale * r;
            }
        }
        sum * scale
    }

    fn interface_term(&self, jets: &[Vec<&JetBatch>], adj: &mut [Vec<JetBatch>], w: f64) -> f64 {
        let mut total = 0.0;
        for pairs in &self.interfaces {
            let scale = 1.0 / pairs.len() as f64;
            let mut sum = 0.0;
            for (l, r) in pairs {
                for o in 0..self.outputs {
                    let (a, b) = (jets[l.net][INTERFACE], jets[r.net][INTERFACE]);
                    let dv = a.value(l.idx, o) - b.value(r.idx, o);
                    let dx = a.d1(X, l.idx, o) - b.d1(X, r.idx, o);
                    sum += dv * dv + dx * dx;
                    let (g, gx) = (2.0 * w * scale * dv, 2.0 * w * scale * dx);
                    *adj[l.net][INTERFACE].value_mut(l.idx, o) += g;
                    *adj[r.net][INTERFACE].value_mut(r.idx, o) -= g;
                    *adj[l.net][INTERFACE].d1_mut(X, l.idx, o) += gx;
                    *adj[r.net][INTERFACE].d1_mut(X, r.idx, o) -= gx;
                }
            }
            total += sum * scale;
        }
        total
    }

    fn conservation_term(&self, jets: &[Vec<&JetBatch>], adj: &mut [Vec<JetBatch>], w: f64) -> f64 {
        let Some(c) = &self.conservation else {
            return 0.0;
        };
        let q = |loc: &Loc| {
            let j = jets[loc.net][CONSERVATION];
            (0..self.outputs)
                .map(|o| j.value(loc.idx, o) * j.d1(T, loc.idx, o))
                .sum::<f64>()
        };
        let norm = 1.0 / (c.slices * c.per_slice) as f64;
        let mut loss = 0.0;
        for slice in c.nodes.chunks(c.per_slice) {
            let qs: Vec<f64> = slice.iter().map(q).collect();
            let dq: Vec<f64> = if c.per_point_square {
                loss += qs.iter().map(|v| v * v).sum::<f64>() * norm;
                qs.iter().map(|v| 2.0 * w * norm * v).collect()
            } else {
                let mean = qs.iter().sum::<f64>() / c.per_slice as f64;
                loss += mean * mean / c.slices as f64;
                vec![2.0 * w * mean * norm; qs.len()]
            };
            for (loc, g) in slice.iter().zip(dq) {
                let j = jets[loc.net][CONSERVATION];
                let a = &mut adj[loc.net][CONSERVATION];
                for o in 0..self.outputs {
                    *a.value_mut(loc.idx, o) += g * j.d1(T, loc.idx, o);
                    *a.d1_mut(T, loc.idx, o) += g * j.value(loc.idx, o);
                }
            }
        }
        loss
    }

    fn colehopf_term(&self, jets: &[Vec<&JetBatch>], adj: &mut [Vec<JetBatch>], w: f64) -> f64 {
        let Some(g) = &self.colehopf else {
            return 0.0;
        };
        let u: Vec<f64> = g
            .nodes
            .iter()
            .map(|l| jets[l.net][COLEHOPF].value(l.idx, 0))
            .collect();
        let (gu, loss) = colehopf_loss_on_grid(&u, g.nx, g.nt, g.dx, g.dt, self.problem.viscosity);
        for (l, d) in g.nodes.iter().zip(gu) {
            *adj[l.net][COLEHOPF].value_mut(l.idx, 0) += w * d;
        }
        loss
    }
}

/// Cole-Hopf residual loss of a gridded `u` (row-major `t` then `x`) and its
/// gradient with respect to every `u` node.
///
/// `v = -(1 / 2 nu) * cumulative trapezoid of u` from the left edge, then
/// `mean over interior nodes of (v_t - nu v_xx)^2` with central differences.
pub fn colehopf_loss_on_grid(
    u: &[f64],
    nx: usize,
    nt: usize,
    dx: f64,
    dt: f64,
    nu: f64,
) -> (Vec<f64>, f64) {
    let c = -1.0 / (2.0 * nu);
    let mut v = vec![0.0; nx * nt];
    for i in 0..nt {
        let row = &u[i * nx..(i + 1) * nx];
        for j in 1..nx {
            v[i * nx + j] = v[i * nx + j - 1] + c * 0.5 * dx * (row[j - 1] + row[j]);
        }
    }
    let interior = ((nt - 2) * (nx - 2)) as f64;
    let mut gv = vec![0.0; nx * nt];
    let mut loss = 0.0;
    for i in 1..nt - 1 {
        for j in 1..nx - 1 {
            let at = |i: usize, j: usize| v[i * nx + j];
            let vt = (at(i + 1, j) - at(i - 1, j)) / (2.0 * dt);
            let vxx = (at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1)) / (dx * dx);
            let r = vt - nu * vxx;
            loss += r * r / interior;
            let g = 2.0 * r / interior;
            gv[(i + 1) * nx + j] += g / (2.0 * dt);
            gv[(i - 1) * nx + j] -= g / (2.0 * dt);
            let k = -nu * g / (dx * dx);
            gv[i * nx + j + 1] += k;
            gv[i * nx + j - 1] += k;
            gv[i * nx + j] -= 2.0 * k;
        }
    }
    let mut gu = vec![0.0; nx * nt];
    for i in 0..nt {
        let mut carry = 0.0;
        for j in (1..nx).rev() {
            carry += gv[i * nx + j];
            gu[i * nx + j - 1] += carry * c * 0.5 * dx;
            gu[i * nx + j] += carry * c * 0.5 * dx;
        }
    }
    (gu, loss)
}
