//! CSV and JSON serialization of runs, sweeps, and searches.
//!
//! Floats are written in Rust's shortest round-trip decimal form, so parsing
//! a value back yields the exact bits that produced it. Population columns
//! carry the raw integrator output (their sum exposes norm drift); derived
//! metrics are computed from the renormalized state.

use std::fmt::Write as _;

use chrono::{SecondsFormat, Utc};
use serde_json::{json, Value};

use crate::analysis::{entropy_from_state, w_fidelity, FinalStateReport};
use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};
use crate::sweep::{SearchOutcome, SweepPoint};

pub const EXPORT_SCHEMA_VERSION: u32 = 1;

/// Identification block attached to every JSON export.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_sha256: String,
    pub timestamp_utc: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(config_sha256: String) -> Provenance {
        Provenance {
            config_sha256,
            timestamp_utc: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn value(&self) -> Value {
        json!({
            "config_sha256": self.config_sha256,
            "timestamp_utc": self.timestamp_utc,
            "tool_version": self.tool_version,
        })
    }
}

/// Renders a time series as CSV: time, then per-atom amplitude and
/// population columns, then the photon columns, then the entanglement
/// metric defined for the atom count (two-atom entropy or three-atom W
/// overlap).
pub fn timeseries_csv(series: &TimeSeries) -> Result<String> {
    let n = series.labels.len();
    if series.times.len() != series.states.len() {
        return Err(Error::invalid("series times and states disagree in length"));
    }

    let mut out = String::new();
    out.push_str("t_s");
    for label in &series.labels {
        write!(out, ",re_{label},im_{label},pop_{label}").unwrap();
    }
    out.push_str(",re_gamma,im_gamma,pop_photon");
    match n {
        2 => out.push_str(",entropy_nats"),
        3 => out.push_str(",w_fidelity"),
        _ => {}
    }
    out.push('\n');

    for (t, state) in series.times.iter().zip(&series.states) {
        write!(out, "{t}").unwrap();
        for amp in &state.atom_amps {
            write!(out, ",{},{},{}", amp.re, amp.im, amp.norm_sqr()).unwrap();
        }
        write!(
            out,
            ",{},{},{}",
            state.photon_amp.re,
            state.photon_amp.im,
            state.photon_amp.norm_sqr()
        )
        .unwrap();
        match n {
            2 => write!(out, ",{}", entropy_from_state(state)?).unwrap(),
            3 => write!(out, ",{}", w_fidelity(&state.renormalized())?).unwrap(),
            _ => {}
        }
        out.push('\n');
    }
    Ok(out)
}

/// JSON body of a final-state report, without provenance.
pub fn report_value(report: &FinalStateReport) -> Value {
    let atoms: Vec<Value> = report
        .labels
        .iter()
        .zip(&report.amplitudes)
        .zip(&report.populations)
        .map(|((label, amp), pop)| {
            json!({ "label": label, "re": amp.re, "im": amp.im, "population": pop })
        })
        .collect();
    let mut v = json!({
        "atoms": atoms,
        "photon": {
            "re": report.photon_amp.re,
            "im": report.photon_amp.im,
            "population": report.photon_prob,
        },
        "norm_drift": report.norm_drift,
    });
    let obj = v.as_object_mut().unwrap();
    if let Some(s) = report.entropy_nats {
        obj.insert("entropy_nats".into(), s.into());
    }
    if let Some(f) = report.bell_fidelity {
        obj.insert("bell_fidelity".into(), f.into());
    }
    if let Some(f) = report.best_bell_fidelity {
        obj.insert("best_bell_fidelity".into(), f.into());
    }
    if let Some(f) = report.w_fidelity {
        obj.insert("w_fidelity".into(), f.into());
    }
    v
}

/// Standalone final-state report document.
pub fn report_json(report: &FinalStateReport, provenance: &Provenance) -> Value {
    let mut v = report_value(report);
    let obj = v.as_object_mut().unwrap();
    obj.insert("schema_version".into(), EXPORT_SCHEMA_VERSION.into());
    obj.insert("provenance".into(), provenance.value());
    v
}

/// Sweep document: the velocity axes and one report per grid point, in grid
/// order.
pub fn sweep_json(
    vb: &[f64],
    vc: Option<&[f64]>,
    points: &[SweepPoint],
    provenance: &Provenance,
) -> Value {
    let point_values: Vec<Value> = points
        .iter()
        .map(|p| {
            let mut v = json!({
                "i_vb": p.i_vb,
                "vb_mps": p.vb_mps,
            });
            let obj = v.as_object_mut().unwrap();
            if let Some(i) = p.i_vc {
                obj.insert("i_vc".into(), i.into());
            }
            if let Some(vc) = p.vc_mps {
                obj.insert("vc_mps".into(), vc.into());
            }
            obj.insert("report".into(), report_value(&p.report));
            v
        })
        .collect();
    json!({
        "schema_version": EXPORT_SCHEMA_VERSION,
        "axes": {
            "vb_mps": vb,
            "vc_mps": vc,
        },
        "points": point_values,
        "provenance": provenance.value(),
    })
}

/// Flat per-point sweep table: velocities, final populations, photon
/// probability, and the defined entanglement metric.
pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("cannot export an empty sweep"))?;
    let labels = &first.report.labels;
    let two_axis = first.vc_mps.is_some();

    let mut out = String::new();
    out.push_str("vb_mps");
    if two_axis {
        out.push_str(",vc_mps");
    }
    for label in labels {
        write!(out, ",pop_{label}").unwrap();
    }
    out.push_str(",pop_photon");
    match labels.len() {
        2 => out.push_str(",entropy_nats"),
        3 => out.push_str(",w_fidelity"),
        _ => {}
    }
    out.push('\n');

    for p in points {
        if p.report.labels != *labels {
            return Err(Error::invalid("sweep points disagree on atom labels"));
        }
        write!(out, "{}", p.vb_mps).unwrap();
        if let Some(vc) = p.vc_mps {
            write!(out, ",{vc}").unwrap();
        }
        for pop in &p.report.populations {
            write!(out, ",{pop}").unwrap();
        }
        write!(out, ",{}", p.report.photon_prob).unwrap();
        match labels.len() {
            2 => write!(out, ",{}", p.report.entropy_nats.unwrap()).unwrap(),
            3 => write!(out, ",{}", p.report.w_fidelity.unwrap()).unwrap(),
            _ => {}
        }
        out.push('\n');
    }
    Ok(out)
}

/// Search document: target, best velocities, objective, and the report at
/// the best point.
pub fn search_json(target: &str, outcome: &SearchOutcome, provenance: &Provenance) -> Value {
    json!({
        "schema_version": EXPORT_SCHEMA_VERSION,
        "target": target,
        "v_mps": outcome.v_mps,
        "objective": outcome.objective,
        "target_met": outcome.target_met,
        "evaluations": outcome.evaluations,
        "report": report_value(&outcome.report),
        "provenance": provenance.value(),
    })
}
