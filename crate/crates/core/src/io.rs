//! Output files: `plan.json`, `trajectory.csv` and `audit.txt`, and the
//! readers the `audit` command uses to load them back.
//!
//! `trajectory.csv` columns, in order:
//!
//! ```text
//! n, t_seconds, x_m, y_m,
//! alpha_1 .. alpha_U, beta_1 .. beta_V, p_1 .. p_V,
//! rate_u_1 .. rate_u_U, rate_v_1 .. rate_v_V
//! ```
//!
//! `n` is 1-based, `t_seconds = (n - 1) dt`, powers are in watts and rates
//! in bits per second (the physical slot rate, whether or not the slot
//! counts toward a one-time requirement). Source and destination indices
//! follow the scenario's flow order: relay pairs first, by `pair_id`.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::{Mode, Scenario};
use crate::subproblems::{Allocation, DiscretePlan, Problem};
use serde::Serialize;
use serde_json::Value;
use std::path::Path;

/// Significant digits kept for floats in `plan.json`.
pub const JSON_DIGITS: usize = 12;

pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(0.0), JSON_DIGITS);
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with every float rounded to [`JSON_DIGITS`] significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&round_value(v)).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn csv_header(scn: &Scenario) -> Vec<String> {
    let (u, v) = (scn.n_sources(), scn.n_destinations());
    let mut h: Vec<String> = ["n", "t_seconds", "x_m", "y_m"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=u).map(|i| format!("alpha_{i}")));
    h.extend((1..=v).map(|j| format!("beta_{j}")));
    h.extend((1..=v).map(|j| format!("p_{j}")));
    h.extend((1..=u).map(|i| format!("rate_u_{i}")));
    h.extend((1..=v).map(|j| format!("rate_v_{j}")));
    h
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, scn: &Scenario, plan: &DiscretePlan) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(csv_header(scn)).map_err(csv_error)?;
    let prob = Problem::new(scn, plan.mode, plan.delta_t)?;
    let rates = prob.slot_rates(&plan.q, &plan.alloc);
    let b = scn.radio.bandwidth_hz;
    for n in 0..plan.n_slots() {
        let mut row = vec![(n + 1).to_string(), (n as f64 * plan.delta_t).to_string()];
        row.push(plan.q[n].x.to_string());
        row.push(plan.q[n].y.to_string());
        let a = &plan.alloc;
        for col in a.alpha.iter().chain(&a.beta).chain(&a.power) {
            row.push(col[n].to_string());
        }
        for r in &rates {
            row.push((b * r[n]).to_string());
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Loads positions and allocations from `trajectory.csv`. Rate columns are
/// ignored; the caller recomputes them.
pub fn read_trajectory_csv(path: impl AsRef<Path>, scn: &Scenario, mode: Mode, delta_t: f64) -> Result<DiscretePlan> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let expected = csv_header(scn);
    if header != expected {
        return Err(Error::Parse(format!("trajectory.csv header does not match the scenario: {header:?}")));
    }
    let (u, v) = (scn.n_sources(), scn.n_destinations());
    let mut q = Vec::new();
    let mut alloc = Allocation::zeros(u, v, 0);
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("trajectory.csv row {}: bad value in column {}", line + 2, expected[k])))
        };
        q.push(Point::new(num(2)?, num(3)?));
        for i in 0..u {
            alloc.alpha[i].push(num(4 + i)?);
        }
        for j in 0..v {
            alloc.beta[j].push(num(4 + u + j)?);
            alloc.power[j].push(num(4 + u + v + j)?);
        }
    }
    Ok(DiscretePlan { mode, delta_t, q, alloc, eta: f64::NAN })
}

/// Mode and time step recorded in `plan.json`.
pub fn read_plan_header(path: impl AsRef<Path>) -> Result<(Mode, f64)> {
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("plan.json: {e}")))?;
    let mode = v
        .get("mode")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Parse("plan.json: missing 'mode'".into()))?
        .parse::<Mode>()?;
    let dt = v
        .get("delta_t")
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Parse("plan.json: missing 'delta_t'".into()))?;
    Ok((mode, dt))
}
