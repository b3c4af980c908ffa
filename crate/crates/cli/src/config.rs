//! Scenario files: a TOML document with flat sections mirroring the
//! problem data. Every table rejects unknown keys, so typos surface as
//! schema errors with their line and field.

use anyhow::{bail, Context, Result};
use helmholtz_minimax::geometry::{ClosedCurve, OpenArc, RegionSpec};
use helmholtz_minimax::{Complex64 as C, Point, WaveNumber};
use serde::{Deserialize, Serialize};

/// What a scenario computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Forward,
    Subdomain,
    Surface,
    Point,
    MonteCarlo,
}

/// Estimation regime for Monte Carlo runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Subdomain,
    Surface,
    Point,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    pub geometry: Geometry,
    pub wavenumber: Wavenumber,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub uncertainty: Uncertainty,
    #[serde(default)]
    pub observation: Observation,
    #[serde(default)]
    pub functional: Functional,
    #[serde(default)]
    pub forward: Option<Forward>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarlo>,
}

/// The obstacle boundary `Γ`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Circle { center: Point, radius: f64 },
    Ellipse { center: Point, semi_axes: [f64; 2] },
    Kite { center: Point, scale: f64 },
}

impl Geometry {
    pub fn curve(&self) -> Result<ClosedCurve> {
        Ok(match self {
            Geometry::Circle { center, radius } => ClosedCurve::circle(*center, *radius)?,
            Geometry::Ellipse { center, semi_axes } => ClosedCurve::ellipse(*center, semi_axes[0], semi_axes[1])?,
            Geometry::Kite { center, scale } => ClosedCurve::kite(*center, *scale)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Wavenumber {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl Wavenumber {
    pub fn value(&self) -> Result<WaveNumber> {
        WaveNumber::new(self.re, self.im).context("wavenumber")
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    /// Nodes on `Γ` (boundary-integral regimes).
    pub n_gamma: usize,
    /// Gauss–Legendre nodes per observation arc.
    pub arc_nodes: usize,
    /// Combined-field coupling `η`.
    pub eta: f64,
    /// Annulus grid (subdomain regime): truncation radius, radial intervals,
    /// angular nodes and DtN cutoff (0 selects the default).
    pub big_r: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub n_f: usize,
    /// Random seed for Monte Carlo trials.
    pub seed: u64,
}

impl Default for Solver {
    fn default() -> Self {
        Solver { n_gamma: 128, arc_nodes: 48, eta: 1.0, big_r: 3.0, n_r: 32, n_theta: 64, n_f: 0, seed: 0 }
    }
}

/// A real field, polynomial plus Fourier series in the polar angle `θ`
/// about the origin:
/// `c + c_x x + c_y y + c_xx x² + c_xy xy + c_yy y² + Σ_n (a_n cos nθ + b_n sin nθ)`.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealField {
    pub constant: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
    /// `[n, a_n, b_n]` triples.
    pub fourier: Vec<[f64; 3]>,
}

impl RealField {
    pub fn constant(c: f64) -> Self {
        RealField { constant: c, ..Default::default() }
    }

    pub fn eval(&self, p: Point) -> f64 {
        let [x, y] = p;
        let t = y.atan2(x);
        self.constant
            + self.x * x
            + self.y * y
            + self.xx * x * x
            + self.xy * x * y
            + self.yy * y * y
            + self.fourier.iter().map(|[n, a, b]| a * (n * t).cos() + b * (n * t).sin()).sum::<f64>()
    }
}

/// A complex field with the same terms as [`RealField`], each coefficient
/// given as `[re, im]`; Fourier terms are `[n, re, im]` multiplying `e^{inθ}`.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Field {
    pub constant: [f64; 2],
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub xx: [f64; 2],
    pub xy: [f64; 2],
    pub yy: [f64; 2],
    pub fourier: Vec<[f64; 3]>,
}

fn c(v: [f64; 2]) -> C {
    C::new(v[0], v[1])
}

impl Field {
    pub fn constant(re: f64, im: f64) -> Self {
        Field { constant: [re, im], ..Default::default() }
    }

    pub fn eval(&self, p: Point) -> C {
        let [x, y] = p;
        let t = y.atan2(x);
        c(self.constant)
            + c(self.x) * x
            + c(self.y) * y
            + c(self.xx) * x * x
            + c(self.xy) * x * y
            + c(self.yy) * y * y
            + self.fourier.iter().map(|[n, re, im]| C::new(*re, *im) * C::from_polar(1.0, n * t)).sum::<C>()
    }

    /// The field on the circle of radius `a` as a function of the angle.
    pub fn on_circle(&self, a: f64) -> impl Fn(f64) -> C + '_ {
        move |t| self.eval([a * t.cos(), a * t.sin()])
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Disk {
        center: Point,
        radius: f64,
        #[serde(default = "default_order")]
        order: usize,
    },
    Rectangle {
        min: Point,
        max: Point,
        #[serde(default = "default_order")]
        order: usize,
    },
    /// Annular sector `r ∈ [r0, r1]`, `θ ∈ [θ0, θ1]`.
    Sector {
        r: [f64; 2],
        theta: [f64; 2],
        #[serde(default = "default_order")]
        order: usize,
    },
}

fn default_order() -> usize {
    8
}

impl Region {
    pub fn spec(&self) -> Result<RegionSpec> {
        Ok(match self {
            Region::Disk { center, radius, order } => RegionSpec::disk(*center, *radius, *order)?,
            Region::Rectangle { min, max, order } => RegionSpec::rectangle(*min, *max, *order)?,
            Region::Sector { r, theta, order } => RegionSpec::sector(r[0], r[1], theta[0], theta[1], *order)?,
        })
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Uncertainty {
    /// Weight `q₁` on `Γ` (boundary regimes) or on the forcing region
    /// (subdomain regime).
    pub q1: Option<RealField>,
    /// Weight `q₂` on `Γ` (subdomain regime).
    pub q2: Option<RealField>,
    /// Nominal Neumann data on `Γ` (boundary regimes).
    pub h0: Option<Field>,
    /// Nominal forcing and Neumann data (subdomain regime).
    pub f0: Option<Field>,
    pub g0: Option<Field>,
    /// Support of the uncertain forcing (subdomain regime).
    pub forcing_region: Option<Region>,
}

impl Uncertainty {
    pub fn q1(&self) -> RealField {
        self.q1.clone().unwrap_or_else(|| RealField::constant(1.0))
    }

    pub fn q2(&self) -> RealField {
        self.q2.clone().unwrap_or_else(|| RealField::constant(1.0))
    }

    pub fn h0(&self) -> Field {
        self.h0.clone().unwrap_or_default()
    }

    pub fn f0(&self) -> Field {
        self.f0.clone().unwrap_or_default()
    }

    pub fn g0(&self) -> Field {
        self.g0.clone().unwrap_or_default()
    }
}

/// Separable kernel term `a(x) b(y)`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTerm {
    pub a: Field,
    pub b: Field,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegionObservation {
    pub region: Region,
    #[serde(default = "unit_weight")]
    pub r: RealField,
    pub terms: Vec<KernelTerm>,
}

fn unit_weight() -> RealField {
    RealField::constant(1.0)
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Arc {
    Segment { start: Point, end: Point },
    Circular { center: Point, radius: f64, theta: [f64; 2] },
}

impl Arc {
    pub fn open_arc(&self) -> Result<OpenArc> {
        Ok(match self {
            Arc::Segment { start, end } => OpenArc::segment(*start, *end)?,
            Arc::Circular { center, radius, theta } => OpenArc::circular(*center, *radius, theta[0], theta[1])?,
        })
    }
}

/// Polynomial `Σ c_j s^j` in the arc parameter `s ∈ [−1, 1]`, complex
/// coefficients `[re, im]`.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(transparent)]
pub struct ArcPoly(pub Vec<[f64; 2]>);

impl ArcPoly {
    pub fn eval(&self, s: f64) -> C {
        self.0.iter().rev().fold(C::new(0.0, 0.0), |acc, v| acc * s + c(*v))
    }
}

/// Kernel term of `K^(r,j)`: output channel `r`, trace `j` (1: value,
/// 2: normal derivative).
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ArcTerm {
    pub r: usize,
    pub j: usize,
    pub a: ArcPoly,
    pub b: ArcPoly,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ArcObservation {
    pub arc: Arc,
    /// Noise weights of the two channels, constant along the arc.
    #[serde(default = "unit_pair")]
    pub r: [f64; 2],
    pub terms: Vec<ArcTerm>,
}

fn unit_pair() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Observation {
    /// Point regime: observation points and their noise weights.
    pub points: Vec<Point>,
    pub r: Vec<f64>,
    /// Point regime: measured data `[re, im]`; when absent the report uses
    /// noise-free synthetic data at the nominal boundary datum.
    pub data: Option<Vec<[f64; 2]>>,
    /// Subdomain regime.
    pub regions: Vec<RegionObservation>,
    /// Arc regime.
    pub arcs: Vec<ArcObservation>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Functional {
    /// Point regime: `l(φ) = Σ ā_i φ(x_i)`.
    pub points: Vec<Point>,
    pub coefficients: Vec<[f64; 2]>,
    /// Region regimes: `l(φ) = ∫_ω l̄₀ φ`.
    pub region: Option<Region>,
    pub l0: Option<Field>,
}

impl Functional {
    pub fn coefficients(&self) -> Vec<C> {
        self.coefficients.iter().map(|v| c(*v)).collect()
    }
}

/// Forward-mode inputs: Neumann data and evaluation points.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Forward {
    pub h: Field,
    pub targets: Vec<Point>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    pub regime: Regime,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    100
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    /// The estimation regime: the mode itself, or the Monte Carlo regime.
    pub fn regime(&self) -> Option<Regime> {
        match self.mode {
            Mode::Forward => None,
            Mode::Subdomain => Some(Regime::Subdomain),
            Mode::Surface => Some(Regime::Surface),
            Mode::Point => Some(Regime::Point),
            Mode::MonteCarlo => self.monte_carlo.as_ref().map(|m| m.regime),
        }
    }

    fn check(&self) -> Result<()> {
        if self.mode == Mode::MonteCarlo && self.monte_carlo.is_none() {
            bail!("mode = \"monte-carlo\" needs a [monte_carlo] table with `regime`");
        }
        if self.mode == Mode::Forward && self.forward.is_none() {
            bail!("mode = \"forward\" needs a [forward] table");
        }
        let k = self.wavenumber;
        if !(k.im >= 0.0) || (k.re == 0.0 && k.im == 0.0) {
            bail!("wavenumber: need Im k ≥ 0 and k ≠ 0, got ({}, {})", k.re, k.im);
        }
        match self.regime() {
            Some(Regime::Point) => {
                let o = &self.observation;
                if o.points.len() != o.r.len() {
                    bail!("observation: {} points but {} noise weights `r`", o.points.len(), o.r.len());
                }
                if let Some(d) = &o.data {
                    if d.len() != o.points.len() {
                        bail!("observation.data: {} values for {} points", d.len(), o.points.len());
                    }
                }
                let f = &self.functional;
                if f.points.is_empty() || f.points.len() != f.coefficients.len() {
                    bail!("functional: need matching non-empty `points` and `coefficients`");
                }
            }
            Some(Regime::Surface) | Some(Regime::Subdomain) if self.functional.region.is_none() => {
                bail!("functional.region is required in this mode");
            }
            _ => {}
        }
        if self.regime() == Some(Regime::Subdomain) {
            match self.geometry {
                Geometry::Circle { center: [0.0, 0.0], .. } => {}
                _ => bail!("geometry: the subdomain regime needs a circle centred at the origin"),
            }
            if self.uncertainty.forcing_region.is_none() {
                bail!("uncertainty.forcing_region is required in the subdomain regime");
            }
        }
        for (i, a) in self.observation.arcs.iter().enumerate() {
            for t in &a.terms {
                if !(1..=2).contains(&t.r) || !(1..=2).contains(&t.j) {
                    bail!("observation.arcs[{i}]: kernel indices r, j must be 1 or 2");
                }
            }
        }
        Ok(())
    }

    /// Applies a grid-refinement multiplier to every discretization size.
    pub fn refine(&mut self, m: f64) -> Result<()> {
        if !(m > 0.0 && m.is_finite()) {
            bail!("grid multiplier must be positive, got {m}");
        }
        let s = &mut self.solver;
        let scale = |n: usize| ((n as f64 * m).round() as usize).max(1);
        s.n_gamma = scale(s.n_gamma);
        s.arc_nodes = scale(s.arc_nodes);
        s.n_r = scale(s.n_r);
        // Keep the angular count even so sector edges stay on grid lines.
        s.n_theta = scale(s.n_theta).div_ceil(2) * 2;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const POINT: &str = r#"
mode = "point"
geometry = { kind = "ellipse", center = [0.0, 0.0], semi_axes = [1.0, 0.7] }
wavenumber = { re = 2.0 }
[observation]
points = [[2.0, 0.0], [0.0, 2.0]]
r = [1.0, 2.0]
[functional]
points = [[0.0, -2.5]]
coefficients = [[1.0, 0.0]]
"#;

    #[test]
    fn parses_a_minimal_point_scenario() {
        let s = Scenario::parse(POINT).unwrap();
        assert_eq!(s.mode, Mode::Point);
        assert_eq!(s.solver.n_gamma, 128);
        assert_eq!(s.regime(), Some(Regime::Point));
    }

    #[test]
    fn unknown_keys_name_the_field_and_line() {
        let bad = POINT.replace("r = [1.0, 2.0]", "weights = [1.0, 2.0]");
        let msg = format!("{:#}", Scenario::parse(&bad).unwrap_err());
        assert!(msg.contains("weights") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let bad = POINT.replace("r = [1.0, 2.0]", "r = [1.0]");
        assert!(Scenario::parse(&bad).is_err());
    }

    #[test]
    fn fields_evaluate_all_terms() {
        let f = Field { constant: [1.0, 0.0], x: [0.0, 2.0], fourier: vec![[1.0, 1.0, 0.0]], ..Default::default() };
        let v = f.eval([0.0, 1.0]);
        // θ = π/2: e^{iθ} = i.
        assert!((v - C::new(1.0, 1.0)).norm() < 1e-15);
        let p = ArcPoly(vec![[1.0, 0.0], [0.0, 0.0], [2.0, 0.0]]);
        assert_eq!(p.eval(0.5), C::new(1.5, 0.0));
    }

    #[test]
    fn refinement_scales_every_grid() {
        let mut s = Scenario::parse(POINT).unwrap();
        s.refine(1.5).unwrap();
        assert_eq!(s.solver.n_gamma, 192);
        assert_eq!(s.solver.n_theta, 96);
        assert!(s.refine(0.0).is_err());
    }
}
