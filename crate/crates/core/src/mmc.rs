//! Moving Morphable Components: per-component topology description
//! functions, max-combination, the regularized Heaviside, nodal-to-element
//! ersatz moduli and the volume measure.
//!
//! A component is a straight-skeleton hyperelliptic bar with quadratically
//! varying half-thickness:
//!
//! ```text
//! φ(x, y) = 1 − (x'/L)^p − (y'/f(x'))^p
//! f(x')   = t2 + (t3 − t1) x' / (2L) + (t1 + t3 − 2 t2) x'² / (2L²)
//! ```
//!
//! where `(x', y')` is the query point in the component frame (rotated by
//! `−θ` about the centre). `f` passes through `(−L, t1)`, `(0, t2)`, `(L, t3)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::fe::GridSpec;

/// Hyperellipse exponent.
pub const TDF_POWER: i32 = 6;

pub const PARAMS_PER_COMPONENT: usize = 7;

/// Thicknesses closer to zero than this are clamped when dividing.
const THICKNESS_GUARD: f64 = 1e-12;

/// Weight of the centre value `f` in the distance scale.
const BLEND: f64 = 1e-2;

/// Points with `S^{1/p}` below this count as the component centre.
const CENTRE_RADIUS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub x0: f64,
    pub y0: f64,
    pub half_length: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub theta: f64,
}

impl Component {
    pub fn from_params(p: &[f64]) -> Self {
        Component {
            x0: p[0],
            y0: p[1],
            half_length: p[2],
            t1: p[3],
            t2: p[4],
            t3: p[5],
            theta: p[6],
        }
    }

    pub fn params(&self) -> [f64; PARAMS_PER_COMPONENT] {
        [
            self.x0,
            self.y0,
            self.half_length,
            self.t1,
            self.t2,
            self.t3,
            self.theta,
        ]
    }

    fn local(&self, x: f64, y: f64) -> Local {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let xl = c * dx + s * dy;
        let yl = -s * dx + c * dy;
        let l = self.half_length;
        let a1 = (self.t3 - self.t1) / (2.0 * l);
        let a2 = (self.t1 + self.t3 - 2.0 * self.t2) / (2.0 * l * l);
        let mut f = self.t2 + a1 * xl + a2 * xl * xl;
        if f.abs() < THICKNESS_GUARD {
            f = THICKNESS_GUARD.copysign(f);
        }
        Local {
            s,
            c,
            xl,
            yl,
            f,
            df: a1 + 2.0 * a2 * xl,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.params();
        let strs: Vec<String> = p.iter().map(|v| format!("{v:.10e}")).collect();
        write!(f, "{}", strs.join(" "))
    }
}

struct Local {
    s: f64,
    c: f64,
    xl: f64,
    yl: f64,
    f: f64,
    /// df/dx'
    df: f64,
}

/// Topology description function: positive inside, zero on the boundary,
/// negative outside.
pub fn tdf(component: &Component, x: f64, y: f64) -> f64 {
    let loc = component.local(x, y);
    1.0 - (loc.xl / component.half_length).powi(TDF_POWER) - (loc.yl / loc.f).powi(TDF_POWER)
}

/// All seven partial derivatives `∂φ/∂(x0, y0, L, t1, t2, t3, θ)` at a point.
pub fn tdf_gradient_all(component: &Component, x: f64, y: f64) -> [f64; PARAMS_PER_COMPONENT] {
    let p = TDF_POWER as f64;
    let l = component.half_length;
    let loc = component.local(x, y);
    let (xl, yl, f) = (loc.xl, loc.yl, loc.f);

    let rx = (xl / l).powi(TDF_POWER);
    let ry = (yl / f).powi(TDF_POWER);
    // ∂φ/∂f with f held as an independent quantity
    let dphi_df = p * ry / f;
    // total derivative along x' (includes f(x'))
    let dphi_dxl = -p * (xl / l).powi(TDF_POWER - 1) / l + dphi_df * loc.df;
    let dphi_dyl = -p * (yl / f).powi(TDF_POWER - 1) / f;

    let d_x0 = dphi_dxl * (-loc.c) + dphi_dyl * loc.s;
    let d_y0 = dphi_dxl * (-loc.s) + dphi_dyl * (-loc.c);
    let d_theta = dphi_dxl * yl + dphi_dyl * (-xl);

    let (t1, t2, t3) = (component.t1, component.t2, component.t3);
    let df_dl = -(t3 - t1) * xl / (2.0 * l * l) - (t1 + t3 - 2.0 * t2) * xl * xl / (l * l * l);
    let d_l = p * rx / l + dphi_df * df_dl;

    let u = xl / l;
    let d_t1 = dphi_df * (-u / 2.0 + u * u / 2.0);
    let d_t2 = dphi_df * (1.0 - u * u);
    let d_t3 = dphi_df * (u / 2.0 + u * u / 2.0);

    [d_x0, d_y0, d_l, d_t1, d_t2, d_t3, d_theta]
}

/// Single partial derivative `∂φ/∂a` for `param_index` in `0..7`.
pub fn tdf_gradient(component: &Component, x: f64, y: f64, param_index: usize) -> Result<f64> {
    if param_index >= PARAMS_PER_COMPONENT {
        return Err(Error::invalid(format!("parameter index {param_index} out of 0..7")));
    }
    Ok(tdf_gradient_all(component, x, y)[param_index])
}

/// Distance-like rescaling of the TDF that the Heaviside acts on:
///
/// ```text
/// d = m (1 − S^{1/p}),   S = (x'/L)^p + (y'/f)^p = 1 − φ,
/// m = (L (x'/L)^p + f (y'/f)^p + f c) / (S + c)
/// ```
///
/// `d` has the sign and zero set of `φ` and close to unit slope across the
/// boundary, both along the sides (`m ≈ f`) and at the ends (`m ≈ L`), so
/// the Heaviside band is measured in lengths. The small constant `c`
/// keeps `m` smooth through the centre, where it equals `f`.
pub fn tdf_distance(component: &Component, x: f64, y: f64) -> f64 {
    let loc = component.local(x, y);
    let l = component.half_length;
    let rx = (loc.xl / l).powi(TDF_POWER);
    let ry = (loc.yl / loc.f).powi(TDF_POWER);
    let s = rx + ry;
    let fa = loc.f.abs();
    let m = (l * rx + fa * ry + fa * BLEND) / (s + BLEND);
    m * (1.0 - s.powf(1.0 / TDF_POWER as f64))
}

/// All seven partial derivatives of [`tdf_distance`]. At the centre,
/// where `S^{1/p}` has a cone tip, its contribution is taken as zero (the
/// mean of the one-sided slopes).
pub fn tdf_distance_gradient_all(component: &Component, x: f64, y: f64) -> [f64; PARAMS_PER_COMPONENT] {
    let p = TDF_POWER as f64;
    let l = component.half_length;
    let loc = component.local(x, y);
    let (xl, yl, f) = (loc.xl, loc.yl, loc.f);
    let rx = (xl / l).powi(TDF_POWER);
    let ry = (yl / f).powi(TDF_POWER);
    let s = rx + ry;
    let fa = f.abs();
    let sign_f = f.signum();

    // ∂x'/∂a and ∂y'/∂a for (x0, y0, L, t1, t2, t3, θ)
    let dxl = [-loc.c, -loc.s, 0.0, 0.0, 0.0, 0.0, yl];
    let dyl = [loc.s, -loc.c, 0.0, 0.0, 0.0, 0.0, -xl];
    let (t1, t2, t3) = (component.t1, component.t2, component.t3);
    let u = xl / l;
    let df_explicit = [
        0.0,
        0.0,
        -(t3 - t1) * xl / (2.0 * l * l) - (t1 + t3 - 2.0 * t2) * xl * xl / (l * l * l),
        -u / 2.0 + u * u / 2.0,
        1.0 - u * u,
        u / 2.0 + u * u / 2.0,
        0.0,
    ];
    let dl = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];

    let den = s + BLEND;
    let m = (l * rx + fa * ry + fa * BLEND) / den;
    let root = s.powf(1.0 / p);
    let mut out = [0.0; PARAMS_PER_COMPONENT];
    for k in 0..PARAMS_PER_COMPONENT {
        let df = df_explicit[k] + loc.df * dxl[k];
        let drx = p * (xl / l).powi(TDF_POWER - 1) * (dxl[k] / l - xl / (l * l) * dl[k]);
        let dry = p * (yl / f).powi(TDF_POWER - 1) * (dyl[k] / f - yl / (f * f) * df);
        let ds = drx + dry;
        let droot = if root < CENTRE_RADIUS { 0.0 } else { root / (p * s) * ds };
        let dm = (dl[k] * rx + l * drx + sign_f * df * (ry + BLEND) + fa * dry) / den - m * ds / den;
        out[k] = dm * (1.0 - root) - m * droot;
    }
    out
}

/// Max of [`tdf_distance`] over components, with the owning index. Ties go
/// to the lowest index.
pub fn combine_distance_with_owner(components: &[Component], x: f64, y: f64) -> Result<(f64, usize)> {
    let (first, rest) = components
        .split_first()
        .ok_or_else(|| Error::invalid("no components"))?;
    let mut best = (tdf_distance(first, x, y), 0);
    for (i, c) in rest.iter().enumerate() {
        let v = tdf_distance(c, x, y);
        if v > best.0 {
            best = (v, i + 1);
        }
    }
    Ok(best)
}

/// Max over components, with the owning component index. Ties go to the
/// lowest index.
pub fn combine_max_with_owner(components: &[Component], x: f64, y: f64) -> Result<(f64, usize)> {
    let (first, rest) = components
        .split_first()
        .ok_or_else(|| Error::invalid("no components"))?;
    let mut best = (tdf(first, x, y), 0);
    for (i, c) in rest.iter().enumerate() {
        let v = tdf(c, x, y);
        if v > best.0 {
            best = (v, i + 1);
        }
    }
    Ok(best)
}

pub fn combine_max(components: &[Component], x: f64, y: f64) -> Result<f64> {
    combine_max_with_owner(components, x, y).map(|(v, _)| v)
}

/// Regularization of the Heaviside step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavisideParams {
    /// Half width of the transition band, in TDF units.
    pub epsilon_h: f64,
    /// Void value.
    pub alpha: f64,
    /// Ersatz penalization exponent.
    pub q: i32,
}

impl HeavisideParams {
    /// Band equal to the smaller element dimension, `alpha = 1e-3`, `q = 2`.
    pub fn for_grid(grid: &GridSpec) -> Self {
        HeavisideParams {
            epsilon_h: grid.element_width.min(grid.element_height),
            alpha: 1e-3,
            q: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_h > 0.0) || !(self.alpha > 0.0 && self.alpha < 1.0) || self.q < 2 {
            return Err(Error::invalid(format!("bad Heaviside parameters {self:?}")));
        }
        Ok(())
    }

    /// Smallest element modulus for unit Young's modulus.
    pub fn floor(&self) -> f64 {
        self.alpha.powi(self.q)
    }
}

/// C¹ cubic blend between `alpha` and 1 over `|φ| ≤ ε`.
pub fn heaviside(phi: f64, params: &HeavisideParams) -> f64 {
    let eps = params.epsilon_h;
    let a = params.alpha;
    if phi > eps {
        1.0
    } else if phi < -eps {
        a
    } else {
        let r = phi / eps;
        0.75 * (1.0 - a) * (r - r * r * r / 3.0) + 0.5 * (1.0 + a)
    }
}

pub fn heaviside_derivative(phi: f64, params: &HeavisideParams) -> f64 {
    let eps = params.epsilon_h;
    if phi.abs() > eps {
        0.0
    } else {
        let r = phi / eps;
        0.75 * (1.0 - params.alpha) * (1.0 - r * r) / eps
    }
}

/// `E^e = E · mean(H_i^q)` over the element's four nodes; passive elements
/// sit at `E · alpha^q`.
pub fn element_moduli(
    h_nodal: &[f64],
    grid: &GridSpec,
    e_modulus: f64,
    params: &HeavisideParams,
) -> Vec<f64> {
    let void = e_modulus * params.floor();
    (0..grid.element_count())
        .map(|e| {
            if !grid.is_active(e) {
                return void;
            }
            let sum: f64 = grid
                .element_nodes(e)
                .iter()
                .map(|&n| h_nodal[n].powi(params.q))
                .sum();
            (e_modulus * sum / 4.0).max(void)
        })
        .collect()
}

/// Material volume fraction over the active elements, with each element
/// contributing the mean of its nodal H.
pub fn volume_fraction(h_nodal: &[f64], grid: &GridSpec) -> f64 {
    let sum: f64 = (0..grid.element_count())
        .filter(|&e| grid.is_active(e))
        .map(|e| grid.element_nodes(e).iter().map(|&n| h_nodal[n]).sum::<f64>() / 4.0)
        .sum();
    sum / grid.active_count() as f64
}

/// `(fraction, g)` with `g = fraction − bound`.
pub fn volume(h_nodal: &[f64], grid: &GridSpec, bound: f64) -> (f64, f64) {
    let frac = volume_fraction(h_nodal, grid);
    (frac, frac - bound)
}

/// Geometry sampled on the grid nodes for one design.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub phi_nodal: Vec<f64>,
    /// Max over components of [`tdf_distance`]; the Heaviside input.
    pub dist_nodal: Vec<f64>,
    /// Index of the component attaining the distance max at each node.
    pub owner: Vec<usize>,
    pub h_nodal: Vec<f64>,
    pub element_moduli: Vec<f64>,
    pub volume_fraction: f64,
}

impl FieldSnapshot {
    pub fn evaluate(
        components: &[Component],
        grid: &GridSpec,
        e_modulus: f64,
        params: &HeavisideParams,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("no components"));
        }
        let n = grid.node_count();
        let mut phi = Vec::with_capacity(n);
        let mut dist = Vec::with_capacity(n);
        let mut owner = Vec::with_capacity(n);
        for node in 0..n {
            let (x, y) = grid.node_coords(node);
            phi.push(combine_max(components, x, y)?);
            let (d, o) = combine_distance_with_owner(components, x, y)?;
            dist.push(d);
            owner.push(o);
        }
        let h: Vec<f64> = dist.iter().map(|&d| heaviside(d, params)).collect();
        let moduli = element_moduli(&h, grid, e_modulus, params);
        let vf = volume_fraction(&h, grid);
        Ok(FieldSnapshot {
            phi_nodal: phi,
            dist_nodal: dist,
            owner,
            h_nodal: h,
            element_moduli: moduli,
            volume_fraction: vf,
        })
    }

    /// Element-averaged H, one row per element row from the top, `nelx` columns.
    pub fn density_rows(&self, grid: &GridSpec) -> Vec<Vec<f64>> {
        (0..grid.nely)
            .rev()
            .map(|iy| {
                (0..grid.nelx)
                    .map(|ix| {
                        let e = grid.element_index(ix, iy);
                        grid.element_nodes(e).iter().map(|&n| self.h_nodal[n]).sum::<f64>() / 4.0
                    })
                    .collect()
            })
            .collect()
    }
}

/// Writes the component snapshot format: a header line
/// `<count> <DW> <DH> <nelx> <nely>` followed by one line of seven fields
/// per component.
pub fn write_components(components: &[Component], grid: &GridSpec) -> String {
    let mut out = format!(
        "{} {} {} {} {}\n",
        components.len(),
        grid.domain_width,
        grid.domain_height,
        grid.nelx,
        grid.nely
    );
    for c in components {
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}

/// Parses [`write_components`] output; returns components and
/// `(DW, DH, nelx, nely)`.
pub fn read_components(text: &str) -> Result<(Vec<Component>, (f64, f64, usize, usize))> {
    let bad = |detail: String| Error::Parse {
        what: "component snapshot".into(),
        detail,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split_whitespace()
        .collect();
    if header.len() != 5 {
        return Err(bad(format!("header has {} fields", header.len())));
    }
    let count: usize = header[0].parse().map_err(|e| bad(format!("count: {e}")))?;
    let dw: f64 = header[1].parse().map_err(|e| bad(format!("width: {e}")))?;
    let dh: f64 = header[2].parse().map_err(|e| bad(format!("height: {e}")))?;
    let nelx: usize = header[3].parse().map_err(|e| bad(format!("nelx: {e}")))?;
    let nely: usize = header[4].parse().map_err(|e| bad(format!("nely: {e}")))?;
    let mut comps = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
        if vals.len() != PARAMS_PER_COMPONENT {
            return Err(bad(format!("line {} has {} fields", i + 2, vals.len())));
        }
        comps.push(Component::from_params(&vals));
    }
    if comps.len() != count {
        return Err(bad(format!("header says {count} components, found {}", comps.len())));
    }
    Ok((comps, (dw, dh, nelx, nely)))
}
