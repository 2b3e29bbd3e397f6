//! Measurement counts for two-sigma confidence, speed-up over direct
//! detection, optimization of the coherent brightness and grid sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{loglik_moments, n_for_confidence, n_for_confidence_real, HypothesisPair};
use crate::error::{Error, Result};
use crate::io::format_float;
use crate::params::{Protocol, ProtocolParams};
use crate::photon_stats::DEFAULT_TAIL_TOL;

pub const TWO_SIGMA: f64 = 0.954;
pub const DEFAULT_NC_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const GRID_POINTS: usize = 60;
pub const NC_REL_TOL: f64 = 1e-3;
const FLAT_REL_TOL: f64 = 1e-9;
const GOLDEN_MAX_ITER: usize = 200;

fn moments_for(params: &ProtocolParams, saturation: Option<usize>) -> Result<crate::bayes::LogLikMoments> {
    let pair = HypothesisPair::new(params, saturation, DEFAULT_TAIL_TOL)?;
    Ok(loglik_moments(&pair))
}

/// Smallest integer `N` reaching `c_target`.
pub fn n_two_sigma(params: &ProtocolParams, saturation: Option<usize>, c_target: f64) -> Result<u64> {
    n_for_confidence(c_target, &moments_for(params, saturation)?)
}

/// Continuous root of the confidence equation; used as the optimization objective.
pub fn n_two_sigma_real(params: &ProtocolParams, saturation: Option<usize>, c_target: f64) -> Result<f64> {
    n_for_confidence_real(c_target, &moments_for(params, saturation)?)
}

/// Direct-detection counterpart with the same emitter, efficiency and noise.
pub fn direct_counterpart(params: &ProtocolParams) -> ProtocolParams {
    ProtocolParams::direct(params.xi, params.eta, params.n_e, params.n_i)
}

/// `N_direct / N_protocol`; the direct detector saturates at the same `t`.
pub fn speedup(params: &ProtocolParams, saturation: Option<usize>, c_target: f64) -> Result<f64> {
    let n_protocol = n_two_sigma(params, saturation, c_target)?;
    if params.protocol == Protocol::Direct {
        return Ok(1.0);
    }
    let n_direct = n_two_sigma(&direct_counterpart(params), saturation, c_target)?;
    Ok(n_direct as f64 / n_protocol as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcOptimum {
    pub n_c_star: f64,
    pub n_star: u64,
    pub n_star_real: f64,
    /// The best value sits at the upper bound; the optimum may lie beyond.
    pub at_bound: bool,
}

/// Log-spaced grid of `points` values spanning `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

fn check_bounds(bounds: (f64, f64)) -> Result<()> {
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(Error::invalid("nc-bounds", format!("need 0 < lower < upper, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// Minimizes `N` over `n_c` for a HOM template.
///
/// The grid holds `n_c = 0` followed by [`GRID_POINTS`] log-spaced values.
/// Golden-section refinement runs between the neighbours of the best grid
/// point. Failed evaluations count as infinite `N`.
pub fn optimize_nc(
    template: &ProtocolParams,
    saturation: Option<usize>,
    c_target: f64,
    bounds: (f64, f64),
) -> Result<NcOptimum> {
    if !template.protocol.is_hom() {
        return Err(Error::WrongProtocol {
            expected: "coherent-hom or incoherent-hom",
            actual: template.protocol.name(),
        });
    }
    check_bounds(bounds)?;
    template.with_n_c(bounds.0).validate()?;

    let objective = |n_c: f64| n_two_sigma_real(&template.with_n_c(n_c), saturation, c_target);
    let mut grid = vec![0.0];
    grid.extend(log_grid(bounds.0, bounds.1, GRID_POINTS));
    let evaluated: Vec<Result<f64>> = grid.par_iter().map(|&n_c| objective(n_c)).collect();
    let values: Vec<f64> = evaluated.iter().map(|r| *r.as_ref().unwrap_or(&f64::INFINITY)).collect();

    if values.iter().all(|v| !v.is_finite()) {
        return Err(evaluated.into_iter().find_map(|r| r.err()).expect("all evaluations failed"));
    }

    let finite_max = values.iter().copied().filter(|v| v.is_finite()).fold(f64::MIN, f64::max);
    let finite_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let flat = values.iter().all(|v| v.is_finite()) && finite_max - finite_min <= FLAT_REL_TOL * finite_min;

    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }

    let last = grid.len() - 1;
    let (n_c_star, at_bound) = if flat || best == 0 {
        (0.0, false)
    } else if best == last {
        (grid[last], true)
    } else {
        let (lo, hi) = (grid[best - 1], grid[best + 1]);
        let f = |x: f64| objective(x).unwrap_or(f64::INFINITY);
        let candidate = if lo == 0.0 {
            golden_section(&f, lo, hi, |a, b| b - a <= NC_REL_TOL * b)
        } else {
            golden_section(&|u: f64| f(u.exp()), lo.ln(), hi.ln(), |a, b| b - a <= NC_REL_TOL).exp()
        };
        if f(candidate) < values[best] {
            (candidate, false)
        } else {
            (grid[best], false)
        }
    };

    let params = template.with_n_c(n_c_star);
    Ok(NcOptimum {
        n_c_star,
        n_star: n_two_sigma(&params, saturation, c_target)?,
        n_star_real: n_two_sigma_real(&params, saturation, c_target)?,
        at_bound,
    })
}

/// Golden-section minimum of `f` on `[a, b]`; ties move toward `a`.
fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, done: impl Fn(f64, f64) -> bool) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_MAX_ITER {
        if done(a, b) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Coherent-brightness axis: fixed values or per-point optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NcAxisRepr", into = "NcAxisRepr")]
pub enum NcAxis {
    Values(Vec<f64>),
    Optimize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NcAxisRepr {
    Values(Vec<f64>),
    Word(String),
}

impl TryFrom<NcAxisRepr> for NcAxis {
    type Error = String;

    fn try_from(repr: NcAxisRepr) -> std::result::Result<Self, String> {
        match repr {
            NcAxisRepr::Values(v) => Ok(NcAxis::Values(v)),
            NcAxisRepr::Word(w) if w == "optimize" => Ok(NcAxis::Optimize),
            NcAxisRepr::Word(w) => Err(format!("expected a list of values or \"optimize\", got \"{w}\"")),
        }
    }
}

impl From<NcAxis> for NcAxisRepr {
    fn from(axis: NcAxis) -> Self {
        match axis {
            NcAxis::Values(v) => NcAxisRepr::Values(v),
            NcAxis::Optimize => NcAxisRepr::Word("optimize".into()),
        }
    }
}

fn default_template() -> ProtocolParams {
    ProtocolParams::coherent_hom(0.1, 0.9, 0.9, 0.0, 0.0, 0.0, 1.0)
}

fn default_saturation() -> Vec<Option<usize>> {
    vec![None]
}

fn default_c_target() -> f64 {
    TWO_SIGMA
}

fn default_nc_bounds() -> (f64, f64) {
    DEFAULT_NC_BOUNDS
}

/// Cartesian parameter sweep.
///
/// `template` supplies `xi`, `epsilon` and `cos_theta`; its protocol, `eta`,
/// `n_e`, `n_i` and `n_c` are replaced by the axes. With `n_i` absent the
/// electronic noise tracks `n_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_template")]
    pub template: ProtocolParams,
    pub protocols: Vec<Protocol>,
    pub eta: Vec<f64>,
    pub n_e: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_i: Option<Vec<f64>>,
    pub n_c: NcAxis,
    #[serde(default = "default_saturation")]
    pub saturation: Vec<Option<usize>>,
    #[serde(default = "default_c_target")]
    pub c_target: f64,
    #[serde(default = "default_nc_bounds")]
    pub nc_bounds: (f64, f64),
}

fn check_grid(field: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(field, "grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(field, "grid contains a non-finite value"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(field, "grid must be strictly increasing"));
    }
    Ok(())
}

impl SweepSpec {
    pub fn new(protocols: Vec<Protocol>, eta: Vec<f64>, n_e: Vec<f64>, n_c: NcAxis) -> Self {
        SweepSpec {
            template: default_template(),
            protocols,
            eta,
            n_e,
            n_i: None,
            n_c,
            saturation: default_saturation(),
            c_target: TWO_SIGMA,
            nc_bounds: DEFAULT_NC_BOUNDS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() {
            return Err(Error::invalid("protocols", "at least one protocol is required"));
        }
        check_grid("eta", &self.eta)?;
        check_grid("ne", &self.n_e)?;
        if let Some(n_i) = &self.n_i {
            check_grid("ni", n_i)?;
        }
        if let NcAxis::Values(v) = &self.n_c {
            check_grid("nc", v)?;
        }
        if self.saturation.is_empty() {
            return Err(Error::invalid("saturation", "at least one saturation level is required"));
        }
        if self.saturation.contains(&Some(0)) {
            return Err(Error::invalid("saturation", "threshold must be at least 1"));
        }
        if !(self.c_target > 0.5 && self.c_target < 1.0) {
            return Err(Error::invalid("c-target", format!("{} is outside (0.5, 1)", self.c_target)));
        }
        check_bounds(self.nc_bounds)?;
        for &eta in &self.eta {
            for &n_e in &self.n_e {
                for protocol in &self.protocols {
                    let mut p = self.template.with_protocol(*protocol);
                    p.eta = eta;
                    p.n_e = n_e;
                    p.n_i = n_e;
                    p.validate()?;
                }
            }
        }
        for &n_i in self.n_i.iter().flatten() {
            if !(n_i >= 0.0) {
                return Err(Error::invalid("ni", format!("{n_i} must be >= 0")));
            }
        }
        if let NcAxis::Values(v) = &self.n_c {
            if v.iter().any(|&x| x < 0.0) {
                return Err(Error::invalid("nc", "values must be >= 0"));
            }
        }
        Ok(())
    }

    /// Named figure recipe.
    pub fn preset(name: &str) -> Result<Self> {
        let all = Protocol::ALL.to_vec();
        let all_t = vec![None, Some(4), Some(2), Some(1)];
        let eta_axis: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let noise_axis = log_grid(1e-2, 1e2, 13);
        let spec = match name {
            "fig2a" => SweepSpec {
                saturation: all_t,
                ..SweepSpec::new(all, vec![0.9], log_grid(1e-2, 1e1, 31), NcAxis::Values(vec![6.0]))
            },
            "fig2b" => SweepSpec {
                saturation: all_t,
                ..SweepSpec::new(all, vec![0.9], vec![1.0], NcAxis::Values(log_grid(1e-2, 1e2, 41)))
            },
            "fig3a" => SweepSpec::new(vec![Protocol::CoherentHom], eta_axis, noise_axis, NcAxis::Optimize),
            "fig3b" => SweepSpec::new(vec![Protocol::IncoherentHom], eta_axis, noise_axis, NcAxis::Optimize),
            "fig3c" | "figS4" => SweepSpec {
                saturation: vec![Some(4), Some(2), Some(1)],
                ..SweepSpec::new(vec![Protocol::CoherentHom], eta_axis, noise_axis, NcAxis::Optimize)
            },
            other => {
                return Err(Error::invalid(
                    "preset",
                    format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
                ))
            }
        };
        Ok(spec)
    }
}

pub const PRESETS: [&str; 6] = ["fig2a", "fig2b", "fig3a", "fig3b", "fig3c", "figS4"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub protocol: Protocol,
    pub eta: f64,
    pub n_e: f64,
    pub n_i: f64,
    /// Axis value, or the optimum when optimizing. Zero for direct rows
    /// of an optimizing sweep.
    pub n_c: f64,
    pub t: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<u64>,
    pub speedup: Option<f64>,
    pub at_bound: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("protocol,eta,n_e,n_i,n_c,t,N,speedup,at_bound,error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.protocol,
                format_float(r.eta),
                format_float(r.n_e),
                format_float(r.n_i),
                format_float(r.n_c),
                r.t.map_or("inf".to_string(), |t| t.to_string()),
                r.n.map_or(String::new(), |n| n.to_string()),
                r.speedup.map_or(String::new(), format_float),
                r.at_bound,
                csv_field(r.error.as_deref().unwrap_or("")),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep rows serialize")
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    protocol: Protocol,
    t: Option<usize>,
    eta: f64,
    n_e: f64,
    n_i: f64,
    n_c: Option<f64>,
}

fn evaluate(spec: &SweepSpec, pt: &Point) -> SweepRow {
    let mut params = spec.template.with_protocol(pt.protocol);
    params.eta = pt.eta;
    params.n_e = pt.n_e;
    params.n_i = pt.n_i;
    if pt.protocol == Protocol::Direct {
        params = direct_counterpart(&params);
    }
    let mut row = SweepRow {
        protocol: pt.protocol,
        eta: pt.eta,
        n_e: pt.n_e,
        n_i: pt.n_i,
        n_c: pt.n_c.unwrap_or(0.0),
        t: pt.t,
        n: None,
        speedup: None,
        at_bound: false,
        error: None,
    };
    let outcome = (|| -> Result<(u64, f64)> {
        let n = match (pt.protocol, pt.n_c) {
            (Protocol::Direct, _) => n_two_sigma(&params, pt.t, spec.c_target)?,
            (_, Some(n_c)) => n_two_sigma(&params.with_n_c(n_c), pt.t, spec.c_target)?,
            (_, None) => {
                let opt = optimize_nc(&params, pt.t, spec.c_target, spec.nc_bounds)?;
                row.n_c = opt.n_c_star;
                row.at_bound = opt.at_bound;
                opt.n_star
            }
        };
        let n_direct = if pt.protocol == Protocol::Direct {
            n
        } else {
            n_two_sigma(&direct_counterpart(&params), pt.t, spec.c_target)?
        };
        Ok((n, n_direct as f64 / n as f64))
    })();
    match outcome {
        Ok((n, s)) => {
            row.n = Some(n);
            row.speedup = Some(s);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Evaluates every grid point. Row order: protocol, saturation, `eta`,
/// `n_e`, `n_i`, `n_c`, each in spec order. Per-point failures land in the
/// row's `error` field.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut points = Vec::new();
    for &protocol in &spec.protocols {
        for &t in &spec.saturation {
            for &eta in &spec.eta {
                for &n_e in &spec.n_e {
                    let n_i_axis = spec.n_i.clone().unwrap_or_else(|| vec![n_e]);
                    for &n_i in &n_i_axis {
                        let n_c_axis: Vec<Option<f64>> = match (&spec.n_c, protocol) {
                            (NcAxis::Values(v), _) => v.iter().map(|&x| Some(x)).collect(),
                            (NcAxis::Optimize, Protocol::Direct) => vec![Some(0.0)],
                            (NcAxis::Optimize, _) => vec![None],
                        };
                        for n_c in n_c_axis {
                            points.push(Point {
                                protocol,
                                t,
                                eta,
                                n_e,
                                n_i,
                                n_c,
                            });
                        }
                    }
                }
            }
        }
    }
    let rows = points.par_iter().map(|pt| evaluate(spec, pt)).collect();
    Ok(SweepResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2(protocol: Protocol, n_c: f64) -> ProtocolParams {
        ProtocolParams::coherent_hom(0.1, 0.9, 0.9, n_c, 1.0, 1.0, 1.0).with_protocol(protocol)
    }

    #[test]
    fn identical_hypotheses_have_no_finite_n() {
        let p = ProtocolParams::direct(0.0, 0.9, 1.0, 1.0);
        assert!(n_two_sigma(&p, None, TWO_SIGMA).is_err());
    }

    #[test]
    fn direct_ignores_hom_only_fields() {
        let mut a = ProtocolParams::direct(0.1, 0.9, 1.0, 1.0);
        let n = n_two_sigma(&a, None, TWO_SIGMA).unwrap();
        a.n_c = 17.0;
        a.epsilon = 0.3;
        assert_eq!(n_two_sigma(&a, None, TWO_SIGMA).unwrap(), n);
    }

    #[test]
    fn direct_vs_direct_is_one() {
        let p = ProtocolParams::direct(0.1, 0.9, 1.0, 1.0);
        assert_eq!(speedup(&p, Some(2), TWO_SIGMA).unwrap(), 1.0);
    }

    #[test]
    fn vacuum_coherent_equals_vacuum_incoherent() {
        let c = speedup(&fig2(Protocol::CoherentHom, 0.0), None, TWO_SIGMA).unwrap();
        let i = speedup(&fig2(Protocol::IncoherentHom, 0.0), None, TWO_SIGMA).unwrap();
        assert_eq!(c, i);
    }

    #[test]
    fn coherent_n_falls_with_brightness() {
        let ns: Vec<u64> = log_grid(0.1, 10.0, 9)
            .into_iter()
            .map(|n_c| n_two_sigma(&fig2(Protocol::CoherentHom, n_c), None, TWO_SIGMA).unwrap())
            .collect();
        assert!(ns.windows(2).all(|w| w[1] <= w[0]), "{ns:?}");
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1e3, 60);
        assert_eq!(g.len(), 60);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[59], 1e3);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(&|x: f64| (x - 0.3).powi(2), 0.0, 1.0, |a, b| b - a < 1e-9);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn saturated_coherent_optimum_is_interior() {
        let opt = optimize_nc(&fig2(Protocol::CoherentHom, 0.0), Some(1), TWO_SIGMA, DEFAULT_NC_BOUNDS).unwrap();
        assert!(opt.n_c_star > 0.0 && !opt.at_bound, "{opt:?}");
        assert!(opt.n_star >= 1);
    }

    #[test]
    fn optimize_rejects_direct_and_bad_bounds() {
        let d = ProtocolParams::direct(0.1, 0.9, 1.0, 1.0);
        assert!(optimize_nc(&d, None, TWO_SIGMA, DEFAULT_NC_BOUNDS).is_err());
        let h = fig2(Protocol::CoherentHom, 0.0);
        assert!(optimize_nc(&h, None, TWO_SIGMA, (1.0, 0.5)).is_err());
    }

    #[test]
    fn single_point_sweep_matches_n_two_sigma() {
        let spec = SweepSpec::new(vec![Protocol::CoherentHom], vec![0.9], vec![1.0], NcAxis::Values(vec![6.0]));
        let result = run_sweep(&spec).unwrap();
        assert_eq!(result.rows.len(), 1);
        let n = n_two_sigma(&fig2(Protocol::CoherentHom, 6.0), None, TWO_SIGMA).unwrap();
        assert_eq!(result.rows[0].n, Some(n));
    }

    #[test]
    fn point_failures_are_recorded() {
        let mut spec = SweepSpec::new(vec![Protocol::Direct], vec![0.9], vec![1.0], NcAxis::Values(vec![0.0]));
        spec.template.xi = 0.0;
        let result = run_sweep(&spec).unwrap();
        assert!(result.rows[0].error.is_some());
        assert!(result.rows[0].n.is_none());
        assert!(result.to_csv().lines().nth(1).unwrap().starts_with("direct,"));
    }

    #[test]
    fn spec_validation() {
        let good = SweepSpec::new(vec![Protocol::Direct], vec![0.5, 0.9], vec![1.0], NcAxis::Values(vec![0.0]));
        assert!(good.validate().is_ok());
        let mut s = good.clone();
        s.eta = vec![0.9, 0.5];
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.c_target = 0.5;
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.n_e.clear();
        assert!(s.validate().is_err());
        let mut s = good;
        s.saturation = vec![Some(0)];
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        for name in PRESETS {
            let spec = SweepSpec::preset(name).unwrap();
            spec.validate().unwrap();
            let text = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<SweepSpec>(&text).unwrap(), spec);
        }
        let parsed: SweepSpec =
            serde_json::from_str(r#"{"protocols":["direct"],"eta":[0.9],"n_e":[1.0],"n_c":"optimize"}"#).unwrap();
        assert_eq!(parsed.n_c, NcAxis::Optimize);
        assert_eq!(parsed.c_target, TWO_SIGMA);
        assert!(SweepSpec::preset("fig9").is_err());
    }
}
