//! Case files.
//!
//! A case is a TOML document with the sections `[geometry]`, `[material]`,
//! `[forward]` (with a `[forward.flux]` table), `[reconstruction]` (with any
//! number of `[[reconstruction.layout]]` entries) and an optional
//! `[generation]`. Unknown keys are rejected. Coordinates and lengths are in
//! meters, times in seconds, temperatures in °C.
//!
//! ```toml
//! [geometry]
//! lengths = [0.2, 0.2, 0.025]
//! divisions = [24, 24, 6]
//! heated_face = "+z"
//!
//! [material]
//! k = 25.84
//! h = 135.0
//! rho = 7760.0
//! cp = 416.8
//! t_ambient = 20.0
//!
//! [forward]
//! dt_ref = 1.0
//! t_end = 180.0
//! reference_interval = 1.0   # spacing of the stored reference fields
//!
//! [forward.flux]
//! kind = "ramp"              # or "samples" with samples = [[t, q], ...]
//! peak = 600000.0
//! ramp_time = 180.0
//!
//! [reconstruction]
//! dt_rec = 1.0
//! s_ncg = 2
//! s_gn = 1
//! c1 = 1.0
//! c2 = 1.0
//! c3 = 1.0
//!
//! [[reconstruction.layout]]
//! name = "meas9"
//! points = [[0.0, 0.0, 0.025], ...]
//!
//! [generation]
//! dt_rec = 2.0
//! t_end = 30.0
//! s_ncg = 2
//! s_gn = 1
//! c1 = 1.0
//! c3 = 0.1
//! c4 = [0.10, 0.11, 0.14]
//! seeds = [1, 2, 3]
//! t_min = 20.0
//! t_max = 100.0
//! heat_goal = [-0.03, 1.7]   # Q(t) = a t² + b t
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::assembly::{assemble_global, AssembledSystem, MaterialProperties};
use crate::error::{Error, Result};
use crate::forward::{step_count, FluxSchedule};
use crate::inverse::{LossWeights, ReconstructionConfig};
use crate::mesh::{build_box_mesh, classify_boundary, BoundarySets, BoxFace, Mesh};
use crate::multichoice::{GenerationConfig, HeatGoal};

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryConfig {
    pub lengths: [f64; 3],
    pub divisions: [usize; 3],
    pub heated_face: BoxFace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardConfig {
    pub dt_ref: f64,
    pub t_end: f64,
    /// Spacing of the reference fields written next to the measurements.
    pub reference_interval: f64,
    pub flux: FluxSchedule,
    pub noise_stddev: f64,
    pub noise_seed: u64,
}

/// A named set of sensor positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub name: String,
    pub points: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionSection {
    pub dt_rec: f64,
    pub s_ncg: usize,
    pub s_gn: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub layouts: Vec<Layout>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationSection {
    pub dt_rec: f64,
    pub t_end: f64,
    pub s_ncg: usize,
    pub s_gn: usize,
    pub c1: f64,
    pub c3: f64,
    pub c4: Vec<f64>,
    pub seeds: Vec<u64>,
    pub t_min: f64,
    pub t_max: f64,
    pub heat_goal: HeatGoal,
}

/// A validated case file.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialProperties,
    pub forward: ForwardConfig,
    pub reconstruction: ReconstructionSection,
    pub generation: Option<GenerationSection>,
}

/// Mesh, boundary sets and global matrices of a case.
pub struct CaseModel {
    pub mesh: Mesh,
    pub sets: BoundarySets,
    pub system: AssembledSystem,
}

impl CaseConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawCase = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        raw.validate()
    }

    pub fn build_model(&self) -> Result<CaseModel> {
        let mesh = build_box_mesh(self.geometry.lengths, self.geometry.divisions)?;
        let sets = classify_boundary(&mesh, self.geometry.heated_face);
        let system = assemble_global(&mesh, &sets, &self.material)?;
        Ok(CaseModel { mesh, sets, system })
    }

    pub fn layout(&self, name: &str) -> Result<&Layout> {
        self.reconstruction
            .layouts
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| {
                let known: Vec<&str> = self.reconstruction.layouts.iter().map(|l| l.name.as_str()).collect();
                Error::config(
                    "reconstruction.layout",
                    format!("no layout named `{name}` (known: {})", known.join(", ")),
                )
            })
    }

    pub fn reconstruction_config(&self) -> ReconstructionConfig {
        let r = &self.reconstruction;
        ReconstructionConfig {
            dt_rec: r.dt_rec,
            s_ncg: r.s_ncg,
            s_gn: r.s_gn,
            weights: LossWeights {
                c1: r.c1,
                c2: r.c2,
                c3: r.c3,
                c4: 0.0,
            },
        }
    }

    /// One configuration per (c4, seed) pair, c4-major in file order.
    pub fn generation_configs(&self) -> Result<Vec<GenerationConfig>> {
        let g = self
            .generation
            .as_ref()
            .ok_or_else(|| Error::config("generation", "section is required for generation"))?;
        Ok(g.c4
            .iter()
            .flat_map(|&c4| {
                g.seeds.iter().map(move |&seed| GenerationConfig {
                    dt_rec: g.dt_rec,
                    t_end: g.t_end,
                    s_ncg: g.s_ncg,
                    s_gn: g.s_gn,
                    c1: g.c1,
                    c3: g.c3,
                    c4,
                    t_min: g.t_min,
                    t_max: g.t_max,
                    seed,
                })
            })
            .collect())
    }
}

/// Reads and validates a case file.
pub fn read_case_config(path: impl AsRef<Path>) -> Result<CaseConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CaseConfig::parse(&text)
}

fn parse_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    Error::Parse {
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    geometry: Option<RawGeometry>,
    material: Option<RawMaterial>,
    forward: Option<RawForward>,
    reconstruction: Option<RawReconstruction>,
    generation: Option<RawGeneration>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    lengths: Option<[f64; 3]>,
    divisions: Option<[usize; 3]>,
    heated_face: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    k: Option<f64>,
    h: Option<f64>,
    rho: Option<f64>,
    cp: Option<f64>,
    t_ambient: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForward {
    dt_ref: Option<f64>,
    t_end: Option<f64>,
    reference_interval: Option<f64>,
    noise_stddev: Option<f64>,
    noise_seed: Option<u64>,
    flux: Option<RawFlux>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlux {
    kind: Option<String>,
    peak: Option<f64>,
    ramp_time: Option<f64>,
    samples: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReconstruction {
    dt_rec: Option<f64>,
    s_ncg: Option<usize>,
    s_gn: Option<usize>,
    c1: Option<f64>,
    c2: Option<f64>,
    c3: Option<f64>,
    #[serde(default)]
    layout: Vec<RawLayout>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    name: Option<String>,
    points: Option<Vec<[f64; 3]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeneration {
    dt_rec: Option<f64>,
    t_end: Option<f64>,
    s_ncg: Option<usize>,
    s_gn: Option<usize>,
    c1: Option<f64>,
    c3: Option<f64>,
    c4: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    t_min: Option<f64>,
    t_max: Option<f64>,
    heat_goal: Option<[f64; 2]>,
}

fn required<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(field, "is required"))
}

fn finite(v: f64, field: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be finite, got {v}")))
    }
}

fn positive(v: f64, field: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(v: f64, field: &str) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be >= 0, got {v}")))
    }
}

fn multiple_of(span: f64, dt: f64, field: &str) -> Result<()> {
    step_count(span, dt, field)
        .map(|_| ())
        .map_err(|e| Error::config(field, e.to_string()))
}

impl RawCase {
    fn validate(self) -> Result<CaseConfig> {
        let g = required(self.geometry, "geometry")?;
        let lengths = required(g.lengths, "geometry.lengths")?;
        for (i, &l) in lengths.iter().enumerate() {
            positive(l, &format!("geometry.lengths[{i}]"))?;
        }
        let divisions = required(g.divisions, "geometry.divisions")?;
        if divisions.contains(&0) {
            return Err(Error::config(
                "geometry.divisions",
                "every division count must be at least 1",
            ));
        }
        let heated_face: BoxFace = required(g.heated_face, "geometry.heated_face")?
            .parse()
            .map_err(|e: Error| Error::config("geometry.heated_face", e.to_string()))?;
        let geometry = GeometryConfig {
            lengths,
            divisions,
            heated_face,
        };

        let m = required(self.material, "material")?;
        let material = MaterialProperties {
            k: positive(required(m.k, "material.k")?, "material.k")?,
            rho: positive(required(m.rho, "material.rho")?, "material.rho")?,
            cp: positive(required(m.cp, "material.cp")?, "material.cp")?,
            h: non_negative(required(m.h, "material.h")?, "material.h")?,
            t_ambient: finite(required(m.t_ambient, "material.t_ambient")?, "material.t_ambient")?,
        };

        let f = required(self.forward, "forward")?;
        let dt_ref = positive(required(f.dt_ref, "forward.dt_ref")?, "forward.dt_ref")?;
        let t_end = positive(required(f.t_end, "forward.t_end")?, "forward.t_end")?;
        multiple_of(t_end, dt_ref, "forward.t_end")?;
        let reference_interval = positive(f.reference_interval.unwrap_or(dt_ref), "forward.reference_interval")?;
        multiple_of(reference_interval, dt_ref, "forward.reference_interval")?;
        let flux = validate_flux(required(f.flux, "forward.flux")?, t_end)?;
        let forward = ForwardConfig {
            dt_ref,
            t_end,
            reference_interval,
            flux,
            noise_stddev: non_negative(f.noise_stddev.unwrap_or(0.0), "forward.noise_stddev")?,
            noise_seed: f.noise_seed.unwrap_or(0),
        };

        let r = required(self.reconstruction, "reconstruction")?;
        let mut layouts: Vec<Layout> = Vec::with_capacity(r.layout.len());
        for (i, l) in r.layout.into_iter().enumerate() {
            let field = format!("reconstruction.layout[{i}]");
            let name = required(l.name, &format!("{field}.name"))?;
            if name.is_empty() || layouts.iter().any(|o| o.name == name) {
                return Err(Error::config(
                    format!("{field}.name"),
                    format!("`{name}` is empty or used twice"),
                ));
            }
            let points = required(l.points, &format!("{field}.points"))?;
            if points.is_empty() {
                return Err(Error::config(format!("{field}.points"), "needs at least one point"));
            }
            for (j, p) in points.iter().enumerate() {
                for (axis, &c) in p.iter().enumerate() {
                    if !c.is_finite() || c < 0.0 || c > lengths[axis] {
                        return Err(Error::config(
                            format!("{field}.points[{j}]"),
                            format!("coordinate {c} lies outside [0, {}]", lengths[axis]),
                        ));
                    }
                }
            }
            layouts.push(Layout { name, points });
        }
        let reconstruction = ReconstructionSection {
            dt_rec: positive(required(r.dt_rec, "reconstruction.dt_rec")?, "reconstruction.dt_rec")?,
            s_ncg: required(r.s_ncg, "reconstruction.s_ncg")?,
            s_gn: required(r.s_gn, "reconstruction.s_gn")?,
            c1: positive(required(r.c1, "reconstruction.c1")?, "reconstruction.c1")?,
            c2: positive(required(r.c2, "reconstruction.c2")?, "reconstruction.c2")?,
            c3: non_negative(required(r.c3, "reconstruction.c3")?, "reconstruction.c3")?,
            layouts,
        };
        if reconstruction.s_ncg + reconstruction.s_gn == 0 {
            return Err(Error::config(
                "reconstruction.s_gn",
                "at least one optimizer iteration is required",
            ));
        }

        let generation = self.generation.map(validate_generation).transpose()?;
        Ok(CaseConfig {
            geometry,
            material,
            forward,
            reconstruction,
            generation,
        })
    }
}

fn validate_flux(f: RawFlux, t_end: f64) -> Result<FluxSchedule> {
    match required(f.kind, "forward.flux.kind")?.as_str() {
        "ramp" => {
            if f.samples.is_some() {
                return Err(Error::config(
                    "forward.flux.samples",
                    "not allowed with kind = \"ramp\"",
                ));
            }
            Ok(FluxSchedule::Ramp {
                peak: finite(required(f.peak, "forward.flux.peak")?, "forward.flux.peak")?,
                ramp_time: positive(
                    required(f.ramp_time, "forward.flux.ramp_time")?,
                    "forward.flux.ramp_time",
                )?,
            })
        }
        "samples" => {
            if f.peak.is_some() || f.ramp_time.is_some() {
                return Err(Error::config(
                    "forward.flux",
                    "peak/ramp_time are not allowed with kind = \"samples\"",
                ));
            }
            let s = required(f.samples, "forward.flux.samples")?;
            if s.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::config("forward.flux.samples", "values must be finite"));
            }
            if s.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::config(
                    "forward.flux.samples",
                    "times must be strictly increasing",
                ));
            }
            match (s.first(), s.last()) {
                (Some(first), Some(last)) if first[0] <= 0.0 && last[0] >= t_end => {}
                _ => {
                    return Err(Error::config(
                        "forward.flux.samples",
                        format!("samples must cover [0, {t_end}] s"),
                    ))
                }
            }
            Ok(FluxSchedule::Samples(s.into_iter().map(|[t, q]| (t, q)).collect()))
        }
        other => Err(Error::config(
            "forward.flux.kind",
            format!("unknown kind `{other}` (expected \"ramp\" or \"samples\")"),
        )),
    }
}

fn validate_generation(g: RawGeneration) -> Result<GenerationSection> {
    let dt_rec = positive(required(g.dt_rec, "generation.dt_rec")?, "generation.dt_rec")?;
    let t_end = positive(required(g.t_end, "generation.t_end")?, "generation.t_end")?;
    multiple_of(t_end, dt_rec, "generation.t_end")?;
    let c4 = required(g.c4, "generation.c4")?;
    if c4.is_empty() {
        return Err(Error::config("generation.c4", "needs at least one value"));
    }
    for (i, &v) in c4.iter().enumerate() {
        positive(v, &format!("generation.c4[{i}]"))?;
    }
    let seeds = required(g.seeds, "generation.seeds")?;
    if seeds.is_empty() {
        return Err(Error::config("generation.seeds", "needs at least one seed"));
    }
    let t_min = finite(required(g.t_min, "generation.t_min")?, "generation.t_min")?;
    let t_max = finite(required(g.t_max, "generation.t_max")?, "generation.t_max")?;
    if t_min >= t_max {
        return Err(Error::config(
            "generation.t_max",
            format!("must exceed t_min ({t_min})"),
        ));
    }
    let [a, b] = required(g.heat_goal, "generation.heat_goal")?;
    finite(a, "generation.heat_goal[0]")?;
    finite(b, "generation.heat_goal[1]")?;
    let s = GenerationSection {
        dt_rec,
        t_end,
        s_ncg: required(g.s_ncg, "generation.s_ncg")?,
        s_gn: required(g.s_gn, "generation.s_gn")?,
        c1: positive(required(g.c1, "generation.c1")?, "generation.c1")?,
        c3: positive(required(g.c3, "generation.c3")?, "generation.c3")?,
        c4,
        seeds,
        t_min,
        t_max,
        heat_goal: HeatGoal::Quadratic { a, b },
    };
    if s.s_ncg + s.s_gn == 0 {
        return Err(Error::config(
            "generation.s_gn",
            "at least one optimizer iteration is required",
        ));
    }
    Ok(s)
}
