//! File formats: system description and plan/gain JSON, run CSV.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::abstraction::{DiscretePlan, Halfspace, Polyhedron};
use crate::linsys::{GainSchedule, LinearSystem, Run};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SystemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, IoError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(IoError::Format(format!("{what} has rows of different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl SystemFile {
    pub fn from_system(sys: &LinearSystem, x0: Option<&DVector<f64>>) -> Self {
        SystemFile {
            a: rows(&sys.a),
            b: rows(&sys.b),
            ts: sys.ts,
            state_names: Some(sys.state_names.clone()),
            input_names: Some(sys.input_names.clone()),
            x0: x0.map(|x| x.iter().copied().collect()),
        }
    }

    pub fn system(&self) -> Result<LinearSystem, IoError> {
        let a = matrix(&self.a, "A")?;
        let b = matrix(&self.b, "B")?;
        let bad = |e: crate::linsys::LinSysError| IoError::Format(e.to_string());
        let base = LinearSystem::new(a.clone(), b.clone(), self.ts).map_err(bad)?;
        let states = self.state_names.clone().unwrap_or(base.state_names);
        let inputs = self.input_names.clone().unwrap_or(base.input_names);
        LinearSystem::with_names(a, b, self.ts, states, inputs).map_err(bad)
    }

    pub fn x0(&self) -> Option<DVector<f64>> {
        self.x0.as_ref().map(|x| DVector::from_column_slice(x))
    }
}

pub fn read_system(r: impl Read) -> Result<SystemFile, IoError> {
    Ok(serde_json::from_reader(r)?)
}

fn facet_rows(p: &Polyhedron) -> Vec<Vec<f64>> {
    p.facets.iter().map(|h| h.coeffs.iter().copied().chain([h.offset]).collect()).collect()
}

fn polyhedron(rows: &[Vec<f64>]) -> Result<Polyhedron, IoError> {
    let facets = rows
        .iter()
        .map(|r| match r.split_last() {
            Some((&offset, coeffs)) => Ok(Halfspace::new(coeffs.to_vec(), offset)),
            None => Err(IoError::Format("empty facet".into())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Polyhedron { facets })
}

/// Plan as stored on disk; each facet is `[h..., a]` for `h·r + a > 0`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PlanFile {
    pub steps: Vec<Vec<Vec<f64>>>,
    pub loop_index: usize,
    pub stretches: Vec<usize>,
}

impl PlanFile {
    pub fn from_plan(plan: &DiscretePlan) -> Self {
        PlanFile {
            steps: plan.steps.iter().map(facet_rows).collect(),
            loop_index: plan.loop_index,
            stretches: plan.stretches.clone(),
        }
    }

    pub fn polyhedra(&self) -> Result<Vec<Polyhedron>, IoError> {
        self.steps.iter().map(|s| polyhedron(s)).collect()
    }
}

/// Gains `F_t` as row-major `m × n` arrays.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GainsFile {
    pub horizon: usize,
    pub loop_index: Option<usize>,
    pub gains: Vec<Vec<Vec<f64>>>,
}

impl GainsFile {
    pub fn from_schedule(g: &GainSchedule) -> Self {
        GainsFile { horizon: g.horizon, loop_index: g.loop_index, gains: g.gains.iter().map(rows).collect() }
    }

    pub fn schedule(&self) -> Result<GainSchedule, IoError> {
        let gains = self.gains.iter().map(|g| matrix(g, "gain")).collect::<Result<_, _>>()?;
        Ok(GainSchedule { gains, horizon: self.horizon, loop_index: self.loop_index })
    }
}

pub fn write_json<T: Serialize>(w: impl Write, value: &T) -> Result<(), IoError> {
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(r: impl Read) -> Result<T, IoError> {
    Ok(serde_json::from_reader(r)?)
}

/// Writes `t, <states>, <inputs>` rows with 17 significant digits. A sample
/// without input leaves the input columns empty.
pub fn write_run(w: impl Write, run: &Run, state_names: &[String], input_names: &[String]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    let header: Vec<&str> = ["t"].into_iter().chain(state_names.iter().map(|s| s.as_str())).chain(input_names.iter().map(|s| s.as_str())).collect();
    out.write_record(&header)?;
    let fmt = |v: f64| format!("{v:.16e}");
    for (k, x) in run.states.iter().enumerate() {
        if x.len() != state_names.len() {
            return Err(IoError::Format(format!("state {k} has {} entries, header has {}", x.len(), state_names.len())));
        }
        let mut rec = vec![fmt(k as f64 * run.ts)];
        rec.extend(x.iter().map(|&v| fmt(v)));
        match run.inputs.get(k) {
            Some(u) => rec.extend(u.iter().map(|&v| fmt(v))),
            None => rec.extend(input_names.iter().map(|_| String::new())),
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Run CSV contents: the run plus the column names after `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunFile {
    pub run: Run,
    pub names: Vec<String>,
}

/// Reads a run CSV. `n` is the number of state columns; the rest are
/// inputs. `ts` falls back to the time column spacing, then 1.
pub fn read_run(r: impl Read, n: usize, ts: Option<f64>) -> Result<RunFile, IoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("t") || header.len() < n + 1 {
        return Err(IoError::Format("run CSV must start with a t column followed by the state columns".into()));
    }
    let names = header[1..].to_vec();
    let m = names.len() - n;
    let (mut times, mut states, mut inputs) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |s: &str| -> Result<Option<f64>, IoError> {
            let s = s.trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| IoError::Format(format!("row {}: bad number {s:?}", row + 1)))
        };
        let vals = rec.iter().map(num).collect::<Result<Vec<_>, _>>()?;
        if vals.len() != header.len() || vals[..=n].iter().any(Option::is_none) {
            return Err(IoError::Format(format!("row {}: expected {} values", row + 1, header.len())));
        }
        times.push(vals[0].unwrap_or_default());
        states.push(DVector::from_iterator(n, vals[1..=n].iter().map(|v| v.unwrap_or_default())));
        let u = &vals[n + 1..];
        if u.iter().all(Option::is_some) {
            if inputs.len() != states.len() - 1 {
                return Err(IoError::Format(format!("row {}: input after a row without input", row + 1)));
            }
            inputs.push(DVector::from_iterator(m, u.iter().map(|v| v.unwrap_or_default())));
        } else if u.iter().any(Option::is_some) {
            return Err(IoError::Format(format!("row {}: partial input", row + 1)));
        }
    }
    let ts = ts.unwrap_or(if times.len() > 1 { times[1] - times[0] } else { 1.0 });
    Ok(RunFile { run: Run { states, inputs, ts }, names })
}
