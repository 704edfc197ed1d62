//! Plain-text outputs: CSV tables with `#` metadata headers and JSONL dumps.
//!
//! Every float is printed with 17 significant digits so files round-trip
//! bit-exactly and identical runs give identical bytes.

use std::fmt::{Display, Write as _};
use std::io::Write;

use serde_json::Value;

use crate::boltzmann::{BoltzmannPath, LimitTrajectory, PathEvent};
use crate::coupling::CouplingRow;
use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::field::Scatterer;
use crate::geometry::{Arc, MagneticConfig, ParticleState, Vec2};
use crate::lorentz::{EventKind, TrajectoryRecord};
use crate::stats::ConvergenceReport;

/// Float in scientific notation with 17 significant digits; non-finite
/// values become `nan`, `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// JSON number, or `null` when not finite.
fn json_f64(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        "null".into()
    }
}

/// Ordered `key = value` metadata written as `#` lines above a table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header(pub Vec<(String, String)>);

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.push(key, fmt_f64(value))
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        for (k, v) in &self.0 {
            writeln!(w, "# {k} = {v}")?;
        }
        Ok(())
    }
}

fn kind_name(k: EventKind) -> &'static str {
    match k {
        EventKind::Impact => "impact",
        EventKind::SelfRecollision => "self_recollision",
        EventKind::OtherRecollision => "other_recollision",
    }
}

fn state_json(s: ParticleState) -> String {
    format!(
        "{{\"x\":{},\"y\":{},\"vx\":{},\"vy\":{}}}",
        json_f64(s.x.x),
        json_f64(s.x.y),
        json_f64(s.v.x),
        json_f64(s.v.y)
    )
}

/// `"arcs":[...],"polyline":[...]` fragment shared by both dumps.
fn arcs_json(arcs: &[Arc], mag: &MagneticConfig, per_arc: usize) -> String {
    let mut out = String::from("\"arcs\":[");
    for (i, a) in arcs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"start\":{},\"duration\":{},\"state\":{}}}", json_f64(a.start), json_f64(a.duration), state_json(a.state));
    }
    out.push_str("],\"polyline\":[");
    let mut first = true;
    for a in arcs {
        for p in a.polyline(per_arc.max(2), mag) {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "[{},{}]", json_f64(p.x), json_f64(p.y));
        }
    }
    out.push(']');
    out
}

/// One JSONL line for a Lorentz trajectory; `arcs = Some(n)` adds the arcs
/// and an `n`-points-per-arc polyline.
pub fn trajectory_json(rec: &TrajectoryRecord, arcs: Option<usize>) -> String {
    let mut out = format!(
        "{{\"initial\":{},\"horizon\":{},\"circling\":{},\"events\":[",
        state_json(rec.initial),
        json_f64(rec.horizon),
        rec.circling
    );
    for (i, e) in rec.events.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"t\":{},\"id\":{},\"nx\":{},\"ny\":{},\"kind\":\"{}\",\"theta\":{}}}",
            json_f64(e.time),
            e.obstacle_id,
            json_f64(e.n.x),
            json_f64(e.n.y),
            kind_name(e.kind),
            json_f64(e.theta)
        );
    }
    out.push(']');
    if let Some(n) = arcs {
        out.push(',');
        out.push_str(&arcs_json(&rec.arcs, &rec.mag, n));
    }
    out.push('}');
    out
}

/// One JSONL line for a limit path, with its start state and `k` list.
pub fn path_json(start: ParticleState, path: &BoltzmannPath, mag: &MagneticConfig, flow: Option<(&LimitTrajectory, usize)>) -> String {
    let mut out = format!(
        "{{\"initial\":{},\"horizon\":{},\"circling\":{},\"events\":[",
        state_json(start),
        json_f64(path.horizon),
        path.circling
    );
    for (i, e) in path.events.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"t\":{},\"nx\":{},\"ny\":{}}}", json_f64(e.t), json_f64(e.n.x), json_f64(e.n.y));
    }
    out.push_str("],\"k\":[");
    let k: Vec<String> = path.k(mag).iter().map(|k| k.to_string()).collect();
    out.push_str(&k.join(","));
    out.push(']');
    if let Some((flow, n)) = flow {
        out.push(',');
        out.push_str(&arcs_json(&flow.arcs, mag, n));
    }
    out.push('}');
    out
}

fn num(v: &Value, key: &str) -> Result<f64> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::InvalidParameter(format!("missing number '{key}'")))
}

fn state_from(v: &Value) -> Result<ParticleState> {
    Ok(ParticleState::new(Vec2::new(num(v, "x")?, num(v, "y")?), Vec2::new(num(v, "vx")?, num(v, "vy")?)))
}

/// Parse a line written by [`path_json`].
pub fn parse_path_json(line: &str) -> Result<(ParticleState, BoltzmannPath)> {
    let v: Value = serde_json::from_str(line)?;
    let start = state_from(v.get("initial").unwrap_or(&Value::Null))?;
    let circling = v
        .get("circling")
        .and_then(Value::as_bool)
        .ok_or_else(|| Error::InvalidParameter("missing 'circling'".into()))?;
    let events = v
        .get("events")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidParameter("missing 'events'".into()))?
        .iter()
        .map(|e| Ok(PathEvent { t: num(e, "t")?, n: Vec2::new(num(e, "nx")?, num(e, "ny")?) }))
        .collect::<Result<Vec<_>>>()?;
    Ok((start, BoltzmannPath { horizon: num(&v, "horizon")?, circling, events }))
}

fn write_lines<W: Write>(w: &mut W, lines: impl IntoIterator<Item = String>) -> Result<()> {
    for l in lines {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

pub fn write_trajectories_jsonl<W: Write>(w: &mut W, records: &[TrajectoryRecord], arcs: Option<usize>) -> Result<()> {
    write_lines(w, records.iter().map(|r| trajectory_json(r, arcs)))
}

pub fn write_paths_jsonl<W: Write>(
    w: &mut W,
    paths: &[(ParticleState, BoltzmannPath)],
    mag: &MagneticConfig,
    arcs: Option<usize>,
) -> Result<()> {
    write_lines(
        w,
        paths.iter().map(|(s, p)| match arcs {
            Some(n) => path_json(*s, p, mag, Some((&crate::boltzmann::build_flow(p, mag, *s), n))),
            None => path_json(*s, p, mag, None),
        }),
    )
}

/// Per-trajectory summary table of a Lorentz ensemble.
pub fn write_summary_csv<W: Write>(w: &mut W, header: &Header, records: &[TrajectoryRecord]) -> Result<()> {
    header.write(w)?;
    writeln!(w, "trajectory_index,n_impacts,n_self_recollisions,n_other_recollisions,circling,first_impact_time")?;
    for (i, r) in records.iter().enumerate() {
        let first = r.first_impact_time().map(fmt_f64).unwrap_or_default();
        writeln!(
            w,
            "{i},{},{},{},{},{first}",
            r.count(EventKind::Impact),
            r.count(EventKind::SelfRecollision),
            r.count(EventKind::OtherRecollision),
            r.circling
        )?;
    }
    Ok(())
}

/// Every cell of the grid; the mass that left the box goes in the header.
pub fn write_grid_csv<W: Write>(w: &mut W, header: &Header, grid: &DensityGrid) -> Result<()> {
    let s = &grid.spec;
    let mut h = header.clone();
    h.push("box_center", format!("{} {}", fmt_f64(s.center.x), fmt_f64(s.center.y)))
        .push_f64("box_half_width", s.half_width)
        .push("bins", format!("{} {} {}", s.nx, s.ny, s.na))
        .push("samples", grid.samples)
        .push_f64("escaped_mass", grid.escaped_mass())
        .push_f64("total_mass", grid.mass());
    h.write(w)?;
    writeln!(w, "ix,iy,ia,mass")?;
    for idx in 0..s.len() {
        let (ix, iy, ia) = s.unravel(idx);
        writeln!(w, "{ix},{iy},{ia},{}", fmt_f64(grid.cell_mass(idx)))?;
    }
    Ok(())
}

pub fn write_coupling_csv<W: Write>(w: &mut W, header: &Header, rows: &[CouplingRow]) -> Result<()> {
    header.write(w)?;
    writeln!(w, "path_id,eps,m,sum_k,sup_dev,max_vel_dev,admissible,flag_R,flag_I")?;
    for r in rows {
        let (dx, dv) = r.deviation.map_or((String::new(), String::new()), |d| (fmt_f64(d.position), fmt_f64(d.velocity)));
        writeln!(
            w,
            "{},{},{},{},{dx},{dv},{},{},{}",
            r.path_id,
            fmt_f64(r.eps),
            r.m,
            r.sum_k,
            r.admissible(),
            r.flags.recollision,
            r.flags.interference
        )?;
    }
    Ok(())
}

/// One row per `eps`. Wall-clock time is left out so that reruns are
/// byte-identical; a failed `eps` keeps its row with the reason.
pub fn write_convergence_csv<W: Write>(w: &mut W, header: &Header, report: &ConvergenceReport) -> Result<()> {
    let mut h = header.clone();
    h.push_f64("boltzmann_mass", report.boltzmann_mass);
    h.write(w)?;
    writeln!(
        w,
        "eps,n,circling,circling_lo,circling_hi,ks_first_impact,ks_bound,tv_collision_count,\
         l1_density,l1_density_with_circling,l1_sigma,other_recollision,other_recollision_lo,other_recollision_hi,error"
    )?;
    for (eps, row) in report.eps.iter().zip(&report.rows) {
        match row {
            Ok(r) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                fmt_f64(r.eps),
                r.n,
                fmt_f64(r.circling.estimate),
                fmt_f64(r.circling.lo),
                fmt_f64(r.circling.hi),
                fmt_f64(r.ks_first_impact),
                fmt_f64(r.ks_bound),
                fmt_f64(r.tv_collision_count),
                fmt_f64(r.l1_density),
                fmt_f64(r.l1_density_with_circling),
                fmt_f64(r.l1_sigma),
                fmt_f64(r.other_recollision.estimate),
                fmt_f64(r.other_recollision.lo),
                fmt_f64(r.other_recollision.hi),
            )?,
            Err(e) => writeln!(w, "{},,,,,,,,,,,,,,\"{}\"", fmt_f64(*eps), e.replace('"', "'"))?,
        }
    }
    Ok(())
}

pub fn write_scatterers_csv<W: Write>(w: &mut W, header: &Header, scatterers: &[Scatterer]) -> Result<()> {
    header.write(w)?;
    writeln!(w, "id,cx,cy")?;
    for s in scatterers {
        writeln!(w, "{},{},{}", s.id, fmt_f64(s.c.x), fmt_f64(s.c.y))?;
    }
    Ok(())
}
