//! Trace CSV emission and re-parsing, metrics JSON, and SVG plots.

use std::io::Write;
use std::path::Path;

use serde_json::json;

use trignet_core::sim::{MetricsSummary, SimTrace, ZenoReport, ZenoVerdict};

use crate::CliError;

/// Writes the trace as CSV: `t`, state components, held components,
/// per-subsystem Lyapunov values, the overall level, event flags, and
/// suppression flags. Values carry 17 significant digits so the text
/// round-trips to the in-memory floats.
pub fn write_trace_csv(trace: &SimTrace, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let mut header = String::from("t");
    for (i, &d) in trace.dims.iter().enumerate() {
        for c in 0..d {
            header.push_str(&format!(",x{}_{}", i + 1, c + 1));
        }
    }
    for (i, &d) in trace.dims.iter().enumerate() {
        for c in 0..d {
            header.push_str(&format!(",xhat{}_{}", i + 1, c + 1));
        }
    }
    for i in 0..trace.n {
        header.push_str(&format!(",V{}", i + 1));
    }
    header.push_str(",V");
    for i in 0..trace.n {
        header.push_str(&format!(",ev{}", i + 1));
    }
    for i in 0..trace.n {
        header.push_str(&format!(",sup{}", i + 1));
    }
    writeln!(w, "{header}").map_err(io_err)?;

    for row in 0..trace.times.len() {
        write!(w, "{:.16e}", trace.times[row]).map_err(io_err)?;
        for v in &trace.x[row] {
            write!(w, ",{v:.16e}").map_err(io_err)?;
        }
        for v in &trace.xhat[row] {
            write!(w, ",{v:.16e}").map_err(io_err)?;
        }
        for v in &trace.v_sub[row] {
            write!(w, ",{v:.16e}").map_err(io_err)?;
        }
        write!(w, ",{:.16e}", trace.v[row]).map_err(io_err)?;
        for &f in &trace.event_flags[row] {
            write!(w, ",{}", u8::from(f)).map_err(io_err)?;
        }
        for &f in &trace.suppressed_flags[row] {
            write!(w, ",{}", u8::from(f)).map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::io(e.to_string())
}

/// Numeric trace content re-read from CSV (for round-trip checks).
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    pub v_sub: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub event_flags: Vec<Vec<bool>>,
    pub suppressed_flags: Vec<Vec<bool>>,
}

/// Parses a trace CSV written by [`write_trace_csv`].
pub fn parse_trace_csv(path: &Path, dims: &[usize]) -> Result<ParsedTrace, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let n = dims.len();
    let total: usize = dims.iter().sum();
    let expected_cols = 1 + 2 * total + n + 1 + 2 * n;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::validation("empty trace CSV"))?;
    if header.split(',').count() != expected_cols {
        return Err(CliError::validation(format!(
            "trace CSV has {} columns, expected {expected_cols}",
            header.split(',').count()
        )));
    }
    let mut out = ParsedTrace {
        times: Vec::new(),
        x: Vec::new(),
        xhat: Vec::new(),
        v_sub: Vec::new(),
        v: Vec::new(),
        event_flags: Vec::new(),
        suppressed_flags: Vec::new(),
    };
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(CliError::validation(format!(
                "line {}: {} columns, expected {expected_cols}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse::<f64>()
                .map_err(|e| CliError::validation(format!("line {}: {e}", lineno + 2)))
        };
        let mut idx = 0usize;
        let mut take = |k: usize| {
            let slice = &fields[idx..idx + k];
            idx += k;
            slice
        };
        out.times.push(parse(take(1)[0])?);
        out.x.push(take(total).iter().map(|s| parse(s)).collect::<Result<_, _>>()?);
        out.xhat
            .push(take(total).iter().map(|s| parse(s)).collect::<Result<_, _>>()?);
        out.v_sub
            .push(take(n).iter().map(|s| parse(s)).collect::<Result<_, _>>()?);
        out.v.push(parse(take(1)[0])?);
        out.event_flags
            .push(take(n).iter().map(|s| Ok(*s == "1")).collect::<Result<_, CliError>>()?);
        out.suppressed_flags
            .push(take(n).iter().map(|s| Ok(*s == "1")).collect::<Result<_, CliError>>()?);
    }
    Ok(out)
}

/// Metrics and Zeno report as a JSON document.
pub fn metrics_json(metrics: &MetricsSummary, zeno: &ZenoReport) -> serde_json::Value {
    json!({
        "events": {
            "total": metrics.events_total,
            "per_subsystem": metrics.events_per_subsystem,
            "min_gap": metrics.min_gap,
            "mean_gap": metrics.mean_gap,
        },
        "state": {
            "x_end_norm": metrics.x_end_norm,
            "level": metrics.level,
            "time_to_level": metrics.time_to_level,
            "v_end": metrics.v_end,
        },
        "lyapunov": {
            "max_v_increase_rel": finite_or_null(metrics.max_v_increase_rel),
            "max_v_increase_above_chat_rel": finite_or_null(metrics.max_v_increase_above_chat_rel),
            "c_hat": metrics.c_hat,
        },
        "parsimonious": {
            "suppression_count": metrics.suppression_count,
            "suppression_audit_failures": metrics.suppression_audit_failures,
        },
        "diverged": metrics.diverged.map(|d| json!({"t": d.t, "norm": d.norm})),
        "zeno": {
            "verdict": match zeno.verdict { ZenoVerdict::None => "none", ZenoVerdict::Suspected => "suspected" },
            "min_gap_per_subsystem": zeno.min_gap,
            "max_window_events": zeno.max_window_events,
            "gap_floor": zeno.gap_floor,
            "window_limit": zeno.window_limit,
        },
    })
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

pub fn write_json(value: &serde_json::Value, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(format!("JSON encoding failed: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

const PALETTE: [&str; 6] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b"];

/// Static SVG plot: per-subsystem state norms over time with one event
/// raster row per subsystem underneath.
pub fn write_svg(trace: &SimTrace, path: &Path) -> Result<(), CliError> {
    let width = 960.0;
    let plot_h = 360.0;
    let raster_h = 18.0 * trace.n as f64 + 8.0;
    let height = plot_h + raster_h + 50.0;
    let (ml, mr, mt) = (60.0, 20.0, 20.0);
    let plot_w = width - ml - mr;

    let t_end = trace.times.last().copied().unwrap_or(1.0).max(1e-12);
    let mut norms: Vec<Vec<f64>> = vec![Vec::with_capacity(trace.times.len()); trace.n];
    let mut y_max = 0.0_f64;
    for row in &trace.x {
        for i in 0..trace.n {
            let s = &row[trace.offsets[i]..trace.offsets[i] + trace.dims[i]];
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            norms[i].push(norm);
            y_max = y_max.max(norm);
        }
    }
    let y_max = y_max.max(1e-12);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
        ml - 5.0,
        mt + 10.0,
        y_max
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">0</text>\n",
        ml - 5.0,
        mt + plot_h
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">t = {:.4}</text>\n",
        ml + plot_w,
        mt + plot_h + 14.0,
        t_end
    ));

    for i in 0..trace.n {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (k, &t) in trace.times.iter().enumerate() {
            let px = ml + plot_w * t / t_end;
            let py = mt + plot_h * (1.0 - norms[i][k] / y_max);
            points.push_str(&format!("{px:.2},{py:.2} "));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{points}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">|x{}|</text>\n",
            ml + plot_w - 40.0,
            mt + 16.0 * (i + 1) as f64,
            i + 1
        ));
    }

    // event rasters
    for i in 0..trace.n {
        let color = PALETTE[i % PALETTE.len()];
        let y0 = mt + plot_h + 20.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">sys {}</text>\n",
            5.0,
            y0 + 10.0,
            i + 1
        ));
        for ev in trace.events.iter().filter(|e| e.subsystem == i) {
            let px = ml + plot_w * ev.t / t_end;
            svg.push_str(&format!(
                "<line x1=\"{px:.2}\" y1=\"{y0}\" x2=\"{px:.2}\" y2=\"{}\" \
                 stroke=\"{color}\" stroke-width=\"1\"/>\n",
                y0 + 12.0
            ));
        }
    }
    svg.push_str("</svg>\n");

    std::fs::write(path, svg)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}
