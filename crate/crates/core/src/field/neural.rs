//! Grid-encoded radiance field with a shallow MLP head.
//!
//! Hash backend: `features = hash(x)`, trunk MLP, `σ = exp(density head)`.
//! Dense backend: `σ = softplus(interp(x, M_dens))`, `features =
//! interp(x, M_feat)`. Both share the trunk and color head
//! `c = sigmoid(W_c [h, enc(d)] + b_c)`.
//!
//! All parameters live in one [`ParamSet`] so the optimizer, the
//! finite-difference checker and the checkpoint writer see a single flat
//! view.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{dense_corners, dense_gather, dense_scatter, DenseGridConfig};
use super::hash::{hash_corners, hash_gather, hash_scatter, Corner, HashGridConfig};
use super::{encode_direction, FieldError, FieldSample, RadianceField};
use crate::diff::{ParamId, ParamSet};
use crate::geometry::{Aabb, Vec3};
use crate::num::Real;

/// Upper clamp on the raw density before `exp`.
const MAX_LOG_DENSITY: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityActivation {
    Exp,
    Softplus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackendConfig {
    Dense(DenseGridConfig),
    Hash(HashGridConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub backend: BackendConfig,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub dir_bands: usize,
    pub density_activation: DensityActivation,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
}

impl FieldConfig {
    pub fn hash_default() -> Self {
        Self {
            backend: BackendConfig::Hash(HashGridConfig::default()),
            hidden_width: 64,
            hidden_layers: 2,
            dir_bands: 4,
            density_activation: DensityActivation::Exp,
            bounds_min: [0.0; 3],
            bounds_max: [1.0; 3],
        }
    }

    pub fn dense_default() -> Self {
        Self {
            backend: BackendConfig::Dense(DenseGridConfig::default()),
            density_activation: DensityActivation::Softplus,
            ..Self::hash_default()
        }
    }

    pub fn encoding_dim(&self) -> usize {
        match &self.backend {
            BackendConfig::Dense(d) => d.feature_dim,
            BackendConfig::Hash(h) => h.output_dim(),
        }
    }

    pub fn dir_dim(&self) -> usize {
        3 + 6 * self.dir_bands
    }

    fn corners_per_sample(&self) -> usize {
        match &self.backend {
            BackendConfig::Dense(_) => 16,
            BackendConfig::Hash(h) => 8 * h.levels,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match &self.backend {
            BackendConfig::Dense(d) if d.density_resolution < 2 || d.feature_resolution < 2 => {
                return Err("dense grid resolutions must be >= 2".into())
            }
            BackendConfig::Hash(h) if !(h.growth_factor > 1.0) || h.levels == 0 || h.base_resolution < 1 => {
                return Err("hash grid needs levels >= 1, base_resolution >= 1, growth_factor > 1".into())
            }
            _ => {}
        }
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err("MLP needs at least one hidden layer of non-zero width".into());
        }
        if (0..3).any(|a| !(self.bounds_max[a] > self.bounds_min[a])) {
            return Err("empty scene bounds".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub grid_density: Option<ParamId>,
    pub grid_features: Option<ParamId>,
    pub hash_tables: Option<ParamId>,
    pub hidden: Vec<(ParamId, ParamId)>,
    pub density_head: Option<(ParamId, ParamId)>,
    pub color_head: (ParamId, ParamId),
}

/// Trainable radiance field. `T = f32` for fitting, `f64` for gradient
/// certification.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralField<T> {
    config: FieldConfig,
    params: ParamSet<T>,
    layout: Layout,
    bounds: Aabb<T>,
}

/// Parameter names in creation order.
pub(crate) fn build_param_shapes(cfg: &FieldConfig) -> Vec<(String, Vec<usize>)> {
    let mut shapes = Vec::new();
    match &cfg.backend {
        BackendConfig::Dense(d) => {
            let rd = d.density_resolution;
            let rf = d.feature_resolution;
            shapes.push(("grid.density".to_string(), vec![rd, rd, rd]));
            shapes.push(("grid.features".to_string(), vec![rf, rf, rf, d.feature_dim]));
        }
        BackendConfig::Hash(h) => {
            shapes.push(("hash.tables".to_string(), vec![h.levels, h.table_size(), h.features_per_level]));
        }
    }
    let w = cfg.hidden_width;
    let mut fan_in = cfg.encoding_dim();
    for l in 0..cfg.hidden_layers {
        shapes.push((format!("mlp.hidden{l}.weight"), vec![w, fan_in]));
        shapes.push((format!("mlp.hidden{l}.bias"), vec![w]));
        fan_in = w;
    }
    if matches!(cfg.backend, BackendConfig::Hash(_)) {
        shapes.push(("mlp.density.weight".to_string(), vec![1, w]));
        shapes.push(("mlp.density.bias".to_string(), vec![1]));
    }
    shapes.push(("mlp.color.weight".to_string(), vec![3, w + cfg.dir_dim()]));
    shapes.push(("mlp.color.bias".to_string(), vec![3]));
    shapes
}

fn layout_of<T: Real>(cfg: &FieldConfig, params: &ParamSet<T>) -> Layout {
    let id = |n: &str| params.id(n);
    let pair = |n: &str| (id(&format!("{n}.weight")).expect("weight"), id(&format!("{n}.bias")).expect("bias"));
    Layout {
        grid_density: id("grid.density"),
        grid_features: id("grid.features"),
        hash_tables: id("hash.tables"),
        hidden: (0..cfg.hidden_layers).map(|l| pair(&format!("mlp.hidden{l}"))).collect(),
        density_head: id("mlp.density.weight").map(|_| pair("mlp.density")),
        color_head: pair("mlp.color"),
    }
}

fn bounds_of<T: Real>(cfg: &FieldConfig) -> Aabb<T> {
    Aabb::new(Vec3::from_f64(cfg.bounds_min), Vec3::from_f64(cfg.bounds_max))
}

impl<T: Real> NeuralField<T> {
    /// Seeded initialization: tables `U(-1e-4, 1e-4)`, MLP weights
    /// He-uniform, biases zero.
    pub fn new(config: FieldConfig, seed: u64) -> Result<Self, FieldError> {
        config.validate().map_err(FieldError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in build_param_shapes(&config) {
            let n: usize = shape.iter().product();
            let values: Vec<T> = if name == "hash.tables" {
                (0..n).map(|_| T::lit(rng.gen_range(-1e-4..1e-4))).collect()
            } else if name == "grid.density" {
                // softplus(-4) ≈ 0.018: nearly empty space at start.
                vec![T::lit(-4.0); n]
            } else if name == "grid.features" {
                (0..n).map(|_| T::lit(rng.gen_range(-0.1..0.1))).collect()
            } else if name.ends_with(".weight") {
                let fan_in = shape[1] as f64;
                let limit = (6.0 / fan_in).sqrt();
                (0..n).map(|_| T::lit(rng.gen_range(-limit..limit))).collect()
            } else {
                vec![T::zero(); n]
            };
            params.add(name, shape, values);
        }
        Ok(Self::from_params(config, params).expect("layout matches freshly built parameters"))
    }

    /// Wraps existing parameters, checking names and shapes.
    pub fn from_params(config: FieldConfig, params: ParamSet<T>) -> Result<Self, FieldError> {
        config.validate().map_err(FieldError::Config)?;
        let expected = build_param_shapes(&config);
        if expected.len() != params.len()
            || expected
                .iter()
                .zip(params.params())
                .any(|((n, s), p)| *n != p.name || *s != p.shape)
        {
            return Err(FieldError::Config("parameter layout does not match the field configuration".into()));
        }
        let layout = layout_of(&config, &params);
        let bounds = bounds_of(&config);
        Ok(Self {
            config,
            params,
            layout,
            bounds,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> NeuralField<U> {
        NeuralField::from_params(self.config.clone(), self.params.cast()).expect("same layout")
    }

    /// Zeroes the color head so every query returns mid-gray.
    pub fn zero_color_head(&mut self) {
        let (w, b) = self.layout.color_head;
        self.params.get_mut(w).iter_mut().for_each(|v| *v = T::zero());
        self.params.get_mut(b).iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn workspace(&self, capacity: usize) -> FieldWorkspace<T> {
        FieldWorkspace::new(&self.config, capacity)
    }

    /// Evaluates `points` along one view direction, caching everything the
    /// backward pass needs in `ws`.
    pub fn forward(&self, points: &[Vec3<T>], dir: Vec3<T>, ws: &mut FieldWorkspace<T>) {
        let n = points.len();
        ws.resize(&self.config, n);
        encode_direction(dir, self.config.dir_bands, &mut ws.dir_enc);
        let in_dim = self.config.encoding_dim();
        let width = self.config.hidden_width;
        let cps = self.config.corners_per_sample();
        let p = &self.params;

        for (i, &x) in points.iter().enumerate() {
            let u = self.bounds.normalize(x);
            let corners = &mut ws.corners[i * cps..(i + 1) * cps];
            let enc = &mut ws.enc[i * in_dim..(i + 1) * in_dim];
            match &self.config.backend {
                BackendConfig::Hash(h) => {
                    hash_corners(h, u, corners);
                    hash_gather(h, p.get(self.layout.hash_tables.unwrap()), corners, enc);
                }
                BackendConfig::Dense(d) => {
                    let (dc, fc) = corners.split_at_mut(8);
                    let dc: &mut [Corner<T>; 8] = dc.try_into().unwrap();
                    let fc: &mut [Corner<T>; 8] = fc.try_into().unwrap();
                    dense_corners(d.density_resolution, 1, u, dc);
                    dense_corners(d.feature_resolution, d.feature_dim, u, fc);
                    let mut raw = [T::zero()];
                    dense_gather(p.get(self.layout.grid_density.unwrap()), 1, dc, &mut raw);
                    ws.raw_density[i] = raw[0];
                    dense_gather(p.get(self.layout.grid_features.unwrap()), d.feature_dim, fc, enc);
                }
            }
        }

        // Trunk.
        for (l, &(wid, bid)) in self.layout.hidden.iter().enumerate() {
            let fan_in = if l == 0 { in_dim } else { width };
            let (w, b) = (p.get(wid), p.get(bid));
            let (prev, rest) = ws.acts.split_at_mut(l);
            let input: &[T] = if l == 0 { &ws.enc } else { &prev[l - 1] };
            let out = &mut rest[0];
            for i in 0..n {
                let x = &input[i * fan_in..(i + 1) * fan_in];
                let y = &mut out[i * width..(i + 1) * width];
                dense_layer(w, b, x, y);
                y.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
        }
        let last = &ws.acts[self.layout.hidden.len() - 1];

        // Density.
        if let Some((wid, bid)) = self.layout.density_head {
            let (w, b) = (p.get(wid), p.get(bid));
            for i in 0..n {
                let h = &last[i * width..(i + 1) * width];
                ws.raw_density[i] = b[0] + dot(w, h);
            }
        }
        let cap = T::lit(MAX_LOG_DENSITY);
        for i in 0..n {
            let raw = ws.raw_density[i];
            ws.sigma[i] = match self.config.density_activation {
                DensityActivation::Exp => raw.min(cap).exp(),
                DensityActivation::Softplus => raw.softplus(),
            };
        }

        // Color: the direction part of the head is shared by every sample.
        let (wc, bc) = (p.get(self.layout.color_head.0), p.get(self.layout.color_head.1));
        let row = width + ws.dir_enc.len();
        let mut dir_term = [T::zero(); 3];
        for (k, dt) in dir_term.iter_mut().enumerate() {
            *dt = bc[k] + dot(&wc[k * row + width..(k + 1) * row], &ws.dir_enc);
        }
        for i in 0..n {
            let h = &last[i * width..(i + 1) * width];
            for k in 0..3 {
                let z = dir_term[k] + dot(&wc[k * row..k * row + width], h);
                ws.color[i * 3 + k] = z.sigmoid();
            }
        }
    }

    /// Accumulates `∂L/∂ψ` into `grads` from `∂L/∂σ_i` and `∂L/∂c_i` of the
    /// batch last passed to [`forward`](Self::forward).
    pub fn backward(&self, ws: &mut FieldWorkspace<T>, d_sigma: &[T], d_color: &[T], grads: &mut ParamSet<T>) {
        let n = ws.n;
        let in_dim = self.config.encoding_dim();
        let width = self.config.hidden_width;
        let cps = self.config.corners_per_sample();
        let p = &self.params;
        let layers = self.layout.hidden.len();
        let dir_dim = ws.dir_enc.len();
        let row = width + dir_dim;

        // ∂L/∂h_last
        let dh = &mut ws.dh;
        dh.iter_mut().for_each(|v| *v = T::zero());
        let (wc_id, bc_id) = self.layout.color_head;
        let mut dz_all = vec![T::zero(); 3 * n];
        for i in 0..n {
            for k in 0..3 {
                let c = ws.color[i * 3 + k];
                dz_all[i * 3 + k] = d_color[i * 3 + k] * c * (T::one() - c);
            }
        }
        {
            let wc = p.get(wc_id);
            let last = &ws.acts[layers - 1];
            let gw = grads.get_mut(wc_id);
            let mut dir_acc = [T::zero(); 3];
            for i in 0..n {
                let h = &last[i * width..(i + 1) * width];
                let dhi = &mut dh[i * width..(i + 1) * width];
                for k in 0..3 {
                    let dz = dz_all[i * 3 + k];
                    if dz == T::zero() {
                        continue;
                    }
                    dir_acc[k] += dz;
                    axpy(dz, h, &mut gw[k * row..k * row + width]);
                    axpy(dz, &wc[k * row..k * row + width], dhi);
                }
            }
            for k in 0..3 {
                axpy(dir_acc[k], &ws.dir_enc, &mut gw[k * row + width..(k + 1) * row]);
            }
            let gb = grads.get_mut(bc_id);
            for k in 0..3 {
                gb[k] += dir_acc[k];
            }
        }

        // ∂L/∂raw density
        let cap = T::lit(MAX_LOG_DENSITY);
        for i in 0..n {
            let raw = ws.raw_density[i];
            let dact = match self.config.density_activation {
                DensityActivation::Exp => {
                    if raw < cap {
                        ws.sigma[i]
                    } else {
                        T::zero()
                    }
                }
                DensityActivation::Softplus => raw.sigmoid(),
            };
            ws.d_raw[i] = d_sigma[i] * dact;
        }
        if let Some((wd_id, bd_id)) = self.layout.density_head {
            let wd = p.get(wd_id);
            let last = &ws.acts[layers - 1];
            let mut db = T::zero();
            {
                let gw = grads.get_mut(wd_id);
                for i in 0..n {
                    let g = ws.d_raw[i];
                    if g == T::zero() {
                        continue;
                    }
                    db += g;
                    axpy(g, &last[i * width..(i + 1) * width], gw);
                    axpy(g, wd, &mut dh[i * width..(i + 1) * width]);
                }
            }
            grads.get_mut(bd_id)[0] += db;
        }

        // Trunk, last layer first. `dh` holds ∂L/∂(post-ReLU output).
        let mut d_in = vec![T::zero(); n * in_dim.max(width)];
        for l in (0..layers).rev() {
            let fan_in = if l == 0 { in_dim } else { width };
            let (wid, bid) = self.layout.hidden[l];
            let w = p.get(wid);
            let out = &ws.acts[l];
            let input: &[T] = if l == 0 { &ws.enc } else { &ws.acts[l - 1] };
            d_in[..n * fan_in].iter_mut().for_each(|v| *v = T::zero());
            let mut gb_acc = vec![T::zero(); width];
            {
                let gw = grads.get_mut(wid);
                for i in 0..n {
                    let x = &input[i * fan_in..(i + 1) * fan_in];
                    let dxi = &mut d_in[i * fan_in..(i + 1) * fan_in];
                    for o in 0..width {
                        if out[i * width + o] <= T::zero() {
                            continue;
                        }
                        let g = dh[i * width + o];
                        if g == T::zero() {
                            continue;
                        }
                        gb_acc[o] += g;
                        axpy(g, x, &mut gw[o * fan_in..(o + 1) * fan_in]);
                        axpy(g, &w[o * fan_in..(o + 1) * fan_in], dxi);
                    }
                }
            }
            for (gb, acc) in grads.get_mut(bid).iter_mut().zip(&gb_acc) {
                *gb += *acc;
            }
            if l > 0 {
                dh[..n * width].copy_from_slice(&d_in[..n * width]);
            }
        }

        // Encoding.
        match &self.config.backend {
            BackendConfig::Hash(h) => {
                let gt = grads.get_mut(self.layout.hash_tables.unwrap());
                for i in 0..n {
                    hash_scatter(h, &ws.corners[i * cps..(i + 1) * cps], &d_in[i * in_dim..(i + 1) * in_dim], gt);
                }
            }
            BackendConfig::Dense(d) => {
                for i in 0..n {
                    let corners = &ws.corners[i * cps..(i + 1) * cps];
                    let dc: &[Corner<T>; 8] = corners[..8].try_into().unwrap();
                    let fc: &[Corner<T>; 8] = corners[8..].try_into().unwrap();
                    dense_scatter(1, dc, &[ws.d_raw[i]], grads.get_mut(self.layout.grid_density.unwrap()));
                    dense_scatter(
                        d.feature_dim,
                        fc,
                        &d_in[i * in_dim..(i + 1) * in_dim],
                        grads.get_mut(self.layout.grid_features.unwrap()),
                    );
                }
            }
        }
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// `y = W x + b`, `W` row-major `(out, in)`.
#[inline]
fn dense_layer<T: Real>(w: &[T], b: &[T], x: &[T], y: &mut [T]) {
    let fan_in = x.len();
    for (o, yo) in y.iter_mut().enumerate() {
        *yo = b[o] + dot(&w[o * fan_in..(o + 1) * fan_in], x);
    }
}

/// Per-batch activations cached between forward and backward.
#[derive(Debug, Clone)]
pub struct FieldWorkspace<T> {
    n: usize,
    corners: Vec<Corner<T>>,
    enc: Vec<T>,
    acts: Vec<Vec<T>>,
    raw_density: Vec<T>,
    d_raw: Vec<T>,
    dh: Vec<T>,
    dir_enc: Vec<T>,
    pub sigma: Vec<T>,
    pub color: Vec<T>,
}

impl<T: Real> FieldWorkspace<T> {
    fn new(cfg: &FieldConfig, capacity: usize) -> Self {
        let mut ws = Self {
            n: 0,
            corners: Vec::new(),
            enc: Vec::new(),
            acts: vec![Vec::new(); cfg.hidden_layers],
            raw_density: Vec::new(),
            d_raw: Vec::new(),
            dh: Vec::new(),
            dir_enc: Vec::with_capacity(cfg.dir_dim()),
            sigma: Vec::new(),
            color: Vec::new(),
        };
        ws.resize(cfg, capacity);
        ws
    }

    fn resize(&mut self, cfg: &FieldConfig, n: usize) {
        self.n = n;
        let w = cfg.hidden_width;
        self.corners.resize(n * cfg.corners_per_sample(), Corner::default());
        self.enc.resize(n * cfg.encoding_dim(), T::zero());
        self.acts.resize(cfg.hidden_layers, Vec::new());
        for a in &mut self.acts {
            a.resize(n * w, T::zero());
        }
        self.raw_density.resize(n, T::zero());
        self.d_raw.resize(n, T::zero());
        self.dh.resize(n * w, T::zero());
        self.sigma.resize(n, T::zero());
        self.color.resize(n * 3, T::zero());
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl<T: Real> RadianceField<T> for NeuralField<T> {
    fn bounds(&self) -> Aabb<T> {
        self.bounds
    }

    fn query(&self, x: Vec3<T>, dir: Vec3<T>) -> FieldSample<T> {
        let mut ws = self.workspace(1);
        self.forward(&[x], dir, &mut ws);
        FieldSample {
            sigma: ws.sigma[0],
            color: [ws.color[0], ws.color[1], ws.color[2]],
        }
    }

    fn query_batch(&self, points: &[Vec3<T>], dir: Vec3<T>, sigma: &mut [T], color: &mut [T]) {
        let mut ws = self.workspace(points.len());
        self.forward(points, dir, &mut ws);
        sigma.copy_from_slice(&ws.sigma);
        color.copy_from_slice(&ws.color);
    }
}
