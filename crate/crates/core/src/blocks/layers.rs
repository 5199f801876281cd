use super::params::{BoundParams, InitKind, ParamSpec};
use super::partition::{dims3, Axis};
use crate::error::{Error, Result};
use crate::tensorgrad::{Graph, Real, Var};

pub const LN_EPS: f64 = 1e-5;

/// Bound of the near-zero uniform init of spatial gating weights.
pub const SPATIAL_INIT: f64 = 1e-3;

/// A parameterised network block: declares its tensors and maps an input
/// `Var` to an output `Var` within a graph.
pub trait Block {
    fn specs(&self) -> Vec<ParamSpec>;

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>>;

    fn param_count(&self) -> usize {
        self.specs().iter().map(ParamSpec::numel).sum()
    }
}

fn fan_in(cin: usize) -> InitKind {
    InitKind::Uniform((6.0 / cin as f64).sqrt())
}

/// Channel-wise affine layer `{name}.w: [cin, cout]`, `{name}.b: [cout]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
}

impl Dense {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize) -> Self {
        Dense { name: name.into(), cin, cout }
    }

    pub fn weight(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias(&self) -> String {
        format!("{}.b", self.name)
    }
}

impl Block for Dense {
    fn specs(&self) -> Vec<ParamSpec> {
        vec![
            ParamSpec::new(self.weight(), &[self.cin, self.cout], fan_in(self.cin)),
            ParamSpec::new(self.bias(), &[self.cout], InitKind::Const(0.0)),
        ]
    }

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        g.dense_channels(x, p.var(&self.weight())?, p.var(&self.bias())?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Norm {
    pub name: String,
    pub c: usize,
}

impl Norm {
    pub fn new(name: impl Into<String>, c: usize) -> Self {
        Norm { name: name.into(), c }
    }
}

impl Block for Norm {
    fn specs(&self) -> Vec<ParamSpec> {
        vec![
            ParamSpec::new(format!("{}.gamma", self.name), &[self.c], InitKind::Const(1.0)),
            ParamSpec::new(format!("{}.beta", self.name), &[self.c], InitKind::Const(0.0)),
        ]
    }

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let gamma = p.var(&format!("{}.gamma", self.name))?;
        let beta = p.var(&format!("{}.beta", self.name))?;
        g.layer_norm(x, gamma, beta, LN_EPS)
    }
}

/// Per-pixel MLP: `LN → dense(C→αC) → GELU → dense(αC→C')`, residual when
/// `C = C'`. The stem variant is a single dense layer with no norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMlp {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub expansion: usize,
    pub stem: bool,
}

impl ChannelMlp {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, expansion: usize) -> Self {
        ChannelMlp { name: name.into(), cin, cout, expansion, stem: false }
    }

    pub fn stem(name: impl Into<String>, cin: usize, cout: usize) -> Self {
        ChannelMlp { name: name.into(), cin, cout, expansion: 1, stem: true }
    }

    fn norm(&self) -> Norm {
        Norm::new(format!("{}.ln", self.name), self.cin)
    }

    fn fc1(&self) -> Dense {
        if self.stem {
            Dense::new(format!("{}.fc", self.name), self.cin, self.cout)
        } else {
            Dense::new(format!("{}.fc1", self.name), self.cin, self.expansion * self.cin)
        }
    }

    fn fc2(&self) -> Dense {
        Dense::new(format!("{}.fc2", self.name), self.expansion * self.cin, self.cout)
    }
}

impl Block for ChannelMlp {
    fn specs(&self) -> Vec<ParamSpec> {
        if self.stem {
            return self.fc1().specs();
        }
        let mut s = self.norm().specs();
        s.extend(self.fc1().specs());
        s.extend(self.fc2().specs());
        s
    }

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        if self.stem {
            return self.fc1().forward(g, p, x);
        }
        let h = self.norm().forward(g, p, x)?;
        let h = g.gelu(&self.fc1().forward(g, p, &h)?);
        let y = self.fc2().forward(g, p, &h)?;
        if self.cin == self.cout {
            g.add(x, &y)
        } else {
            Ok(y)
        }
    }
}

/// Spatial gating unit over the middle axis of `[G, L, C]`:
/// `z = GELU(dense(LN(u), C→2C))`, `z = [z1 | z2]`,
/// `out = u + dense(z1 ⊙ spatial(LN(z2)), C→C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedSpatialMlp {
    pub name: String,
    pub c: usize,
    pub len: usize,
}

impl GatedSpatialMlp {
    pub fn new(name: impl Into<String>, c: usize, len: usize) -> Self {
        GatedSpatialMlp { name: name.into(), c, len }
    }

    fn ln_in(&self) -> Norm {
        Norm::new(format!("{}.ln_in", self.name), self.c)
    }

    fn fc_in(&self) -> Dense {
        Dense::new(format!("{}.fc_in", self.name), self.c, 2 * self.c)
    }

    fn ln_gate(&self) -> Norm {
        Norm::new(format!("{}.ln_gate", self.name), self.c)
    }

    fn fc_out(&self) -> Dense {
        Dense::new(format!("{}.fc_out", self.name), self.c, self.c)
    }

    pub fn spatial_weight(&self) -> String {
        format!("{}.spatial.w", self.name)
    }

    pub fn spatial_bias(&self) -> String {
        format!("{}.spatial.b", self.name)
    }
}

impl Block for GatedSpatialMlp {
    fn specs(&self) -> Vec<ParamSpec> {
        let mut s = self.ln_in().specs();
        s.extend(self.fc_in().specs());
        s.extend(self.ln_gate().specs());
        s.push(ParamSpec::new(
            self.spatial_weight(),
            &[self.len, self.len],
            InitKind::Uniform(SPATIAL_INIT),
        ));
        s.push(ParamSpec::new(self.spatial_bias(), &[self.len], InitKind::Const(1.0)));
        s.extend(self.fc_out().specs());
        s
    }

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, u: &Var<R>) -> Result<Var<R>> {
        match u.shape() {
            [_, l, c] if *l == self.len && *c == self.c => {}
            s => {
                return Err(Error::dim(format!(
                    "{}: expected [G, {}, {}], got {s:?}",
                    self.name, self.len, self.c
                )))
            }
        }
        let z = self.ln_in().forward(g, p, u)?;
        let z = g.gelu(&self.fc_in().forward(g, p, &z)?);
        let z1 = g.slice_channels(&z, 0, self.c)?;
        let z2 = g.slice_channels(&z, self.c, self.c)?;
        let z2 = self.ln_gate().forward(g, p, &z2)?;
        let gate = g.spatial_dense(&z2, p.var(&self.spatial_weight())?, p.var(&self.spatial_bias())?)?;
        let y = self.fc_out().forward(g, p, &g.mul(&z1, &gate)?)?;
        g.add(u, &y)
    }
}

/// Multi-axis gated MLP: half the channels mix within `b×b` windows, the
/// other half across a dilated `g×g` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiAxisGmlp {
    pub name: String,
    pub c: usize,
    pub block: usize,
    pub grid: usize,
}

impl MultiAxisGmlp {
    pub fn new(name: impl Into<String>, c: usize, block: usize, grid: usize) -> Result<Self> {
        if c < 2 || c % 2 != 0 {
            return Err(Error::Config(format!("multi-axis block needs an even channel count, got {c}")));
        }
        if block == 0 || grid == 0 {
            return Err(Error::Config("partition sizes must be positive".into()));
        }
        Ok(MultiAxisGmlp { name: name.into(), c, block, grid })
    }

    fn norm(&self) -> Norm {
        Norm::new(format!("{}.ln", self.name), self.c)
    }

    fn fc_in(&self) -> Dense {
        Dense::new(format!("{}.fc_in", self.name), self.c, self.c)
    }

    pub fn fc_out(&self) -> Dense {
        Dense::new(format!("{}.fc_out", self.name), self.c, self.c)
    }

    pub fn local(&self) -> GatedSpatialMlp {
        GatedSpatialMlp::new(format!("{}.local", self.name), self.c / 2, self.block * self.block)
    }

    pub fn global(&self) -> GatedSpatialMlp {
        GatedSpatialMlp::new(format!("{}.global", self.name), self.c / 2, self.grid * self.grid)
    }
}

impl Block for MultiAxisGmlp {
    fn specs(&self) -> Vec<ParamSpec> {
        let mut s = self.norm().specs();
        s.extend(self.fc_in().specs());
        s.extend(self.local().specs());
        s.extend(self.global().specs());
        s.extend(self.fc_out().specs());
        s
    }

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let (h, w, _) = dims3(x)?;
        for s in [self.block, self.grid] {
            if h % s != 0 || w % s != 0 {
                return Err(Error::Contract(format!(
                    "{}: {h}x{w} map is not divisible by partition size {s}",
                    self.name
                )));
            }
        }
        let half = self.c / 2;
        let y = self.norm().forward(g, p, x)?;
        let y = self.fc_in().forward(g, p, &y)?;

        let local = Axis::Block(self.block);
        let yl = local.partition_var(g, &g.slice_channels(&y, 0, half)?)?;
        let yl = local.unpartition_var(g, &self.local().forward(g, p, &yl)?, h, w)?;

        let global = Axis::Grid(self.grid);
        let yg = global.partition_var(g, &g.slice_channels(&y, half, half)?)?;
        let yg = global.unpartition_var(g, &self.global().forward(g, p, &yg)?, h, w)?;

        let y = self.fc_out().forward(g, p, &g.concat_channels(&yl, &yg)?)?;
        g.add(x, &y)
    }
}

/// Squeeze-and-excitation: per-channel gates from the spatial mean,
/// `sigmoid(dense(GELU(dense(mean, C→C/r)), C/r→C))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeBlock {
    pub name: String,
    pub c: usize,
    pub reduction: usize,
}

impl SeBlock {
    pub fn new(name: impl Into<String>, c: usize, reduction: usize) -> Result<Self> {
        if reduction == 0 || c % reduction != 0 {
            return Err(Error::Config(format!(
                "channel count {c} is not divisible by SE reduction {reduction}"
            )));
        }
        Ok(SeBlock { name: name.into(), c, reduction })
    }

    pub fn fc1(&self) -> Dense {
        Dense::new(format!("{}.fc1", self.name), self.c, self.c / self.reduction)
    }

    pub fn fc2(&self) -> Dense {
        Dense::new(format!("{}.fc2", self.name), self.c / self.reduction, self.c)
    }
}

impl Block for SeBlock {
    fn specs(&self) -> Vec<ParamSpec> {
        let mut s = self.fc1().specs();
        s.extend(self.fc2().specs());
        s
    }

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let squeeze = g.mean_rows(x);
        let e = g.gelu(&self.fc1().forward(g, p, &squeeze)?);
        let gate = g.sigmoid(&self.fc2().forward(g, p, &e)?);
        g.scale_channels(x, &gate)
    }
}

/// Residual MLP attention block: `x + SE(dense(GELU(dense(LN(x)))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rmab {
    pub name: String,
    pub c: usize,
    pub expansion: usize,
    pub se: SeBlock,
}

impl Rmab {
    pub fn new(name: impl Into<String>, c: usize, expansion: usize, se_reduction: usize) -> Result<Self> {
        let name = name.into();
        let se = SeBlock::new(format!("{name}.se"), c, se_reduction)?;
        Ok(Rmab { name, c, expansion, se })
    }

    fn norm(&self) -> Norm {
        Norm::new(format!("{}.ln", self.name), self.c)
    }

    fn fc1(&self) -> Dense {
        Dense::new(format!("{}.fc1", self.name), self.c, self.expansion * self.c)
    }

    pub fn fc2(&self) -> Dense {
        Dense::new(format!("{}.fc2", self.name), self.expansion * self.c, self.c)
    }
}

impl Block for Rmab {
    fn specs(&self) -> Vec<ParamSpec> {
        let mut s = self.norm().specs();
        s.extend(self.fc1().specs());
        s.extend(self.fc2().specs());
        s.extend(self.se.specs());
        s
    }

    fn forward<R: Real>(&self, g: &Graph<R>, p: &BoundParams<R>, x: &Var<R>) -> Result<Var<R>> {
        let h = self.norm().forward(g, p, x)?;
        let h = g.gelu(&self.fc1().forward(g, p, &h)?);
        let h = self.fc2().forward(g, p, &h)?;
        let h = self.se.forward(g, p, &h)?;
        g.add(x, &h)
    }
}
