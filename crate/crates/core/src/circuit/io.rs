//! JSON-lines record files.
//!
//! One record per line:
//!
//! ```text
//! {"version":1,"L":4,"p":..,"seed":..,"label":"0+","scramble_steps":16,
//!  "scramble":[[{"bond":1,"theta":..,"phi":..},..],..],
//!  "hybrid":[[{"bond":1,"kind":"gate","theta":..,"phi":..},
//!             {"bond":3,"kind":"measure","outcome":"s"}],..],
//!  "log_weight":..}
//! ```
//!
//! Scramble and hybrid schedules are flattened to lists of half-steps.
//! Records of the scalar U(1) model add `"model":"u1"`, label themselves
//! `"0"`/`"1"`, carry `alpha`, `beta` and a row-major `block` of 8 reals
//! (re, im pairs) on gate slots, and measure single sites as
//! `{"site":3,"kind":"measure","outcome":"1"}`. All reals are written with
//! 17 significant digits.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64 as C64;
use serde_json::{Map, Value};

use super::{Layer, MeasurementRecord, Model, Schedule, Slot, SlotKind, U1GateParams};
use crate::error::{Error, Result};
use crate::symmetry::{ChargeLabel, GateParams, PairOutcome};

pub const FORMAT_VERSION: u64 = 1;

fn num(out: &mut String, x: f64) {
    assert!(x.is_finite(), "non-finite value in record");
    write!(out, "{x:.16e}").unwrap();
}

fn label_symbol(model: Model, label: ChargeLabel) -> &'static str {
    match (model, label) {
        (Model::U1, ChargeLabel::ZeroPlus) => "0",
        (Model::U1, ChargeLabel::One) => "1",
        (Model::U1xZ2, l) => l.symbol(),
    }
}

fn write_slot(out: &mut String, slot: &Slot, with_kind: bool) {
    let pos_key = if matches!(slot.kind, SlotKind::SiteMeasure(_)) { "site" } else { "bond" };
    write!(out, "{{\"{pos_key}\":{}", slot.pos).unwrap();
    if with_kind {
        let kind = if slot.is_measurement() { "measure" } else { "gate" };
        write!(out, ",\"kind\":\"{kind}\"").unwrap();
    }
    match slot.kind {
        SlotKind::Gate(g) => {
            out.push_str(",\"theta\":");
            num(out, g.theta);
            out.push_str(",\"phi\":");
            num(out, g.phi);
        }
        SlotKind::U1Gate(g) => {
            out.push_str(",\"alpha\":");
            num(out, g.alpha);
            out.push_str(",\"beta\":");
            num(out, g.beta);
            out.push_str(",\"block\":[");
            for (k, z) in g.block.iter().flatten().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                num(out, z.re);
                out.push(',');
                num(out, z.im);
            }
            out.push(']');
        }
        SlotKind::Measure(o) => {
            if let Some(o) = o {
                write!(out, ",\"outcome\":\"{}\"", o.symbol()).unwrap();
            }
        }
        SlotKind::SiteMeasure(o) => {
            if let Some(o) = o {
                write!(out, ",\"outcome\":\"{}\"", if o { "1" } else { "0" }).unwrap();
            }
        }
    }
    out.push('}');
}

fn write_schedule(out: &mut String, sched: &Schedule, with_kind: bool) {
    out.push('[');
    for (h, half) in sched.layers.iter().flatten().enumerate() {
        if h > 0 {
            out.push(',');
        }
        out.push('[');
        for (k, slot) in half.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write_slot(out, slot, with_kind);
        }
        out.push(']');
    }
    out.push(']');
}

/// One record as a single JSON line, without the trailing newline.
pub fn record_to_line(rec: &MeasurementRecord) -> String {
    let mut out = String::new();
    write!(out, "{{\"version\":{}", rec.version).unwrap();
    if rec.model != Model::U1xZ2 {
        write!(out, ",\"model\":\"{}\"", rec.model.tag()).unwrap();
    }
    write!(out, ",\"L\":{},\"p\":", rec.len).unwrap();
    num(&mut out, rec.p);
    write!(
        out,
        ",\"seed\":{},\"label\":\"{}\",\"scramble_steps\":{},\"scramble\":",
        rec.seed,
        label_symbol(rec.model, rec.label),
        rec.scramble_steps
    )
    .unwrap();
    write_schedule(&mut out, &rec.scramble, false);
    out.push_str(",\"hybrid\":");
    write_schedule(&mut out, &rec.hybrid, true);
    out.push_str(",\"log_weight\":");
    num(&mut out, rec.log_weight);
    out.push('}');
    out
}

pub fn write_record<W: Write>(w: &mut W, rec: &MeasurementRecord) -> Result<()> {
    writeln!(w, "{}", record_to_line(rec))?;
    Ok(())
}

pub fn write_records<W: Write>(w: &mut W, recs: &[MeasurementRecord]) -> Result<()> {
    for r in recs {
        write_record(w, r)?;
    }
    Ok(())
}

struct Fields<'a> {
    line: usize,
    map: &'a Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::MalformedRecord { line: self.line, reason: reason.into() }
    }

    fn get(&self, key: &str) -> Result<&'a Value> {
        self.map.get(key).ok_or_else(|| self.err(format!("missing field `{key}`")))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.get(key)?.as_f64().ok_or_else(|| self.err(format!("`{key}` is not a number")))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        self.get(key)?.as_u64().ok_or_else(|| self.err(format!("`{key}` is not an unsigned integer")))
    }

    fn str(&self, key: &str) -> Result<&'a str> {
        self.get(key)?.as_str().ok_or_else(|| self.err(format!("`{key}` is not a string")))
    }

    fn array(&self, key: &str) -> Result<&'a Vec<Value>> {
        self.get(key)?.as_array().ok_or_else(|| self.err(format!("`{key}` is not an array")))
    }

    fn nested(&self, v: &'a Value) -> Result<Fields<'a>> {
        let map = v.as_object().ok_or_else(|| self.err("slot is not an object"))?;
        Ok(Fields { line: self.line, map })
    }
}

fn parse_slot(f: &Fields<'_>, model: Model, hybrid: bool) -> Result<Slot> {
    let kind = if hybrid { f.str("kind")? } else { "gate" };
    match (model, kind) {
        (Model::U1xZ2, "gate") => Ok(Slot {
            pos: f.u64("bond")? as usize,
            kind: SlotKind::Gate(GateParams::new(f.f64("theta")?, f.f64("phi")?)),
        }),
        (Model::U1xZ2, "measure") => {
            let outcome = match f.map.get("outcome") {
                None => None,
                Some(_) => {
                    let s = f.str("outcome")?;
                    Some(PairOutcome::from_symbol(s).ok_or_else(|| f.err(format!("unknown outcome `{s}`")))?)
                }
            };
            Ok(Slot { pos: f.u64("bond")? as usize, kind: SlotKind::Measure(outcome) })
        }
        (Model::U1, "gate") => {
            let raw = f.array("block")?;
            if raw.len() != 8 {
                return Err(f.err("`block` must hold 8 numbers"));
            }
            let vals: Vec<f64> = raw
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| f.err("`block` entry is not a number")))
                .collect::<Result<_>>()?;
            let z = |k: usize| C64::new(vals[2 * k], vals[2 * k + 1]);
            Ok(Slot {
                pos: f.u64("bond")? as usize,
                kind: SlotKind::U1Gate(U1GateParams {
                    alpha: f.f64("alpha")?,
                    beta: f.f64("beta")?,
                    block: [[z(0), z(1)], [z(2), z(3)]],
                }),
            })
        }
        (Model::U1, "measure") => {
            let outcome = match f.map.get("outcome") {
                None => None,
                Some(_) => match f.str("outcome")? {
                    "0" => Some(false),
                    "1" => Some(true),
                    s => return Err(f.err(format!("unknown outcome `{s}`"))),
                },
            };
            Ok(Slot { pos: f.u64("site")? as usize, kind: SlotKind::SiteMeasure(outcome) })
        }
        (_, k) => Err(f.err(format!("unknown slot kind `{k}`"))),
    }
}

fn parse_schedule(f: &Fields<'_>, key: &str, model: Model, len: usize, per_layer: usize) -> Result<Schedule> {
    let halves = f.array(key)?;
    if halves.len() % per_layer != 0 {
        return Err(f.err(format!("`{key}` has {} half-steps, not a multiple of {per_layer}", halves.len())));
    }
    let hybrid = key == "hybrid";
    let mut parsed = Vec::with_capacity(halves.len());
    for half in halves {
        let slots = half.as_array().ok_or_else(|| f.err(format!("`{key}` half-step is not an array")))?;
        let slots: Vec<Slot> = slots
            .iter()
            .map(|v| parse_slot(&f.nested(v)?, model, hybrid))
            .collect::<Result<_>>()?;
        parsed.push(slots);
    }
    let layers: Vec<Layer> = parsed.chunks(per_layer).map(|c| c.to_vec()).collect();
    Ok(Schedule { len, layers })
}

/// Parse one line. `line_no` is used only for error messages.
pub fn record_from_line(text: &str, line_no: usize) -> Result<MeasurementRecord> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::MalformedRecord { line: line_no, reason: e.to_string() })?;
    let map = value
        .as_object()
        .ok_or_else(|| Error::MalformedRecord { line: line_no, reason: "not a JSON object".into() })?;
    let f = Fields { line: line_no, map };
    let version = f.u64("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let model = match map.get("model") {
        None => Model::U1xZ2,
        Some(_) => {
            let tag = f.str("model")?;
            Model::from_tag(tag).ok_or_else(|| f.err(format!("unknown model `{tag}`")))?
        }
    };
    let len = f.u64("L")? as usize;
    let label_str = f.str("label")?;
    let label = match (model, label_str) {
        (Model::U1, "0") => Some(ChargeLabel::ZeroPlus),
        (Model::U1, "1") => Some(ChargeLabel::One),
        (Model::U1, _) => None,
        (Model::U1xZ2, s) => ChargeLabel::from_symbol(s),
    }
    .ok_or_else(|| f.err(format!("unknown label `{label_str}`")))?;
    let rec = MeasurementRecord {
        version,
        model,
        len,
        p: f.f64("p")?,
        seed: f.u64("seed")?,
        label,
        scramble_steps: f.u64("scramble_steps")? as usize,
        scramble: parse_schedule(&f, "scramble", model, len, 2)?,
        hybrid: parse_schedule(&f, "hybrid", model, len, model.hybrid_half_steps())?,
        log_weight: f.f64("log_weight")?,
    };
    rec.validate()?;
    Ok(rec)
}

/// Read every record of a JSONL stream. Blank lines are skipped.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<MeasurementRecord>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(record_from_line(&line, k + 1)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::sample_schedule;
    use crate::rng::stream;

    fn sample_record() -> MeasurementRecord {
        let mut rng = stream(11, 0);
        let scramble = sample_schedule(4, 0.0, 3, &mut rng).unwrap();
        let mut hybrid = sample_schedule(4, 0.5, 4, &mut rng).unwrap();
        for (k, s) in hybrid.slots_mut().enumerate() {
            if let SlotKind::Measure(o) = &mut s.kind {
                *o = Some(PairOutcome::ALL[k % 3]);
            }
        }
        MeasurementRecord {
            version: FORMAT_VERSION,
            model: Model::U1xZ2,
            len: 4,
            p: 0.5,
            seed: 11,
            label: ChargeLabel::One,
            scramble_steps: 3,
            scramble,
            hybrid,
            log_weight: -3.25,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let rec = sample_record();
        let line = record_to_line(&rec);
        let back = record_from_line(&line, 1).unwrap();
        assert_eq!(back, rec);
        assert_eq!(record_to_line(&back), line);
    }

    #[test]
    fn exact_field_set() {
        let line = record_to_line(&sample_record());
        let v: Value = serde_json::from_str(&line).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["L", "hybrid", "label", "log_weight", "p", "scramble", "scramble_steps", "seed", "version"]
        );
    }

    #[test]
    fn angles_carry_seventeen_digits() {
        let line = record_to_line(&sample_record());
        let v: Value = serde_json::from_str(&line).unwrap();
        let theta_text = line.split("\"theta\":").nth(1).unwrap().split(',').next().unwrap();
        let mantissa = theta_text.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
        assert!(v["scramble"][0][0]["theta"].is_f64());
    }

    #[test]
    fn truncated_stream_is_malformed() {
        let line = record_to_line(&sample_record());
        let cut = &line[..line.len() / 2];
        let err = read_records(std::io::Cursor::new(cut)).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 1, .. }), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let line = record_to_line(&sample_record()).replacen("\"version\":1", "\"version\":99", 1);
        let err = record_from_line(&line, 1).unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { found: 99, .. }));
    }

    #[test]
    fn inconsistent_scramble_count_is_rejected() {
        let line = record_to_line(&sample_record()).replacen("\"scramble_steps\":3", "\"scramble_steps\":4", 1);
        assert!(matches!(record_from_line(&line, 1), Err(Error::InconsistentRecord(_))));
    }

    #[test]
    fn missing_outcome_is_rejected() {
        let mut rec = sample_record();
        if let Some(s) = rec.hybrid.slots_mut().find(|s| s.is_measurement()) {
            s.kind = SlotKind::Measure(None);
        }
        let line = record_to_line(&rec);
        assert!(matches!(record_from_line(&line, 1), Err(Error::InconsistentRecord(_))));
    }
}
