use std::io::{BufRead, Write};

use curtail_core::sim::{
    emit_results, evaluate_designs, evaluate_estimation_with, plot_json, write_csv, DesignSet, EstimatorTable,
    EvalMode, OutputFormat, PerformanceRow, ScenarioGrid, ESTIMATION_REPLICATIONS, OC_REPLICATIONS,
};
use curtail_core::{
    final_report, fixed_exact_design, score_sample_size, search_design, simon_search, wald_sample_size, DesignDocument,
    FinalReport, Hypotheses, IntervalMethod, SamplingDistribution, SimonCriterion, SimonDesign, StageDecision,
    TrialMonitor,
};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::error::CliError;
use crate::render::{num, opt_num, Format, Output, Table};

pub fn design(args: &HypothesisArgs) -> Result<Output, CliError> {
    let hyp = args.hypotheses()?;
    let found = search_design(&hyp)?;
    let doc = DesignDocument::new(&hyp, &found.design);
    let mut table = Table::new(["p0", "p1", "alpha", "beta", "u", "K", "alpha_actual", "power", "l"]);
    table.push([
        doc.p0.to_string(),
        doc.p1.to_string(),
        doc.alpha.to_string(),
        doc.beta.to_string(),
        doc.u.to_string(),
        doc.max_n.to_string(),
        num(doc.alpha_actual, 6),
        num(doc.power, 6),
        doc.l.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" "),
    ]);
    Ok(Output::new(&doc, table))
}

#[derive(Serialize)]
struct BoundaryDoc {
    p0: f64,
    p1: f64,
    proposed: ProposedBoundaries,
    fixed: curtail_core::FixedDesign,
    minimax: SimonDesign,
    optimal: SimonDesign,
}

#[derive(Serialize)]
struct ProposedBoundaries {
    u: u32,
    #[serde(rename = "K")]
    max_n: u32,
    /// `(k, l_k)` for every stage where futility stopping is possible.
    futility: Vec<(u32, u32)>,
}

/// Thresholds by stage in the layout of a per-design threshold table:
/// the proposed design's `u` and `l_k`, the fixed design's rejection count
/// at `N`, and each Simon design's futility bound `r1` at `n1` and `r` at `n`.
pub fn boundaries(args: &HypothesisArgs) -> Result<Output, CliError> {
    let hyp = args.hypotheses()?;
    let design = search_design(&hyp)?.design;
    let fixed = fixed_exact_design(&hyp)?;
    let minimax = simon_search(&hyp, SimonCriterion::Minimax)?;
    let optimal = simon_search(&hyp, SimonCriterion::Optimal)?;
    let futility: Vec<(u32, u32)> =
        (1..=design.max_n()).filter_map(|k| u32::try_from(design.futility_bound(k)).ok().map(|l| (k, l))).collect();

    let mut stages: Vec<u32> = vec![design.u()];
    stages.extend(futility.iter().map(|&(k, _)| k));
    stages.extend([fixed.n, minimax.n1, minimax.n, optimal.n1, optimal.n]);
    stages.sort_unstable();
    stages.dedup();

    let cell = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
    let simon_cell = |d: &SimonDesign, k: u32| {
        cell(if k == d.n1 {
            Some(d.r1)
        } else if k == d.n {
            Some(d.r)
        } else {
            None
        })
    };
    let mut table = Table::new(std::iter::once("k".to_string()).chain(stages.iter().map(|k| k.to_string())));
    let row = |label: &str, f: &dyn Fn(u32) -> String| {
        std::iter::once(label.to_string()).chain(stages.iter().map(|&k| f(k))).collect::<Vec<_>>()
    };
    table.push(row("Proposed u", &|k| cell((k >= design.u() && k <= design.max_n()).then_some(design.u()))));
    table.push(row("Proposed l_k", &|k| cell(futility.iter().find(|f| f.0 == k).map(|f| f.1))));
    table.push(row("Fixed", &|k| cell((k == fixed.n).then_some(fixed.r))));
    table.push(row("Simon Minimax", &|k| simon_cell(&minimax, k)));
    table.push(row("Simon Optimal", &|k| simon_cell(&optimal, k)));

    let doc = BoundaryDoc {
        p0: hyp.p0,
        p1: hyp.p1,
        proposed: ProposedBoundaries { u: design.u(), max_n: design.max_n(), futility },
        fixed,
        minimax,
        optimal,
    };
    let title = format!(
        "Thresholds for (p0, p1) = ({}, {}); Fixed rejects at >= r; Simon columns show r1 at n1 and r at n",
        hyp.p0, hyp.p1
    );
    Ok(Output::new(doc, table).titled(title))
}

pub fn oc(args: &OcArgs) -> Result<Output, CliError> {
    let (design, hyp) = args.design.resolve()?;
    let ps = if args.p.is_empty() { ScenarioGrid::standard_p_true() } else { args.p.clone() };
    if let Some(bad) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Usage(format!("--p values must lie in [0, 1], got {bad}")));
    }
    let dist = SamplingDistribution::build(&design);
    let mut table = Table::new(["p", "P(efficacy)", "P(futility)", "ASN"]);
    let mut rows = Vec::new();
    for &p in &ps {
        let power = dist.exact_power(p);
        let asn = dist.expected_sample_size(p);
        table.push([num(p, 4), num(power, 6), num(1.0 - power, 6), num(asn, 4)]);
        rows.push(json!({ "p": p, "power": power, "asn": asn }));
    }
    let mut title = format!("Design u = {}, K = {}", design.u(), design.max_n());
    if let Some(h) = hyp {
        let doc = DesignDocument::new(&h, &design);
        title.push_str(&format!(", alpha = {:.6}, power = {:.6}", doc.alpha_actual, doc.power));
    }
    let doc = json!({ "u": design.u(), "K": design.max_n(), "rows": rows });
    Ok(Output::new(doc, table).titled(title))
}

fn report_table(report: &FinalReport) -> Table {
    let mut t = Table::new(["quantity", "estimate", "lower", "upper"]);
    let e = &report.estimates;
    t.push(["naive".to_string(), num(e.naive, 6), String::new(), String::new()]);
    t.push(["bias-adjusted (plug-in)".to_string(), num(e.bias_adjusted, 6), String::new(), String::new()]);
    t.push(["bias-adjusted (root)".to_string(), num(report.bias_adjusted_root_solve, 6), String::new(), String::new()]);
    t.push(["median unbiased".to_string(), num(e.mue, 6), num(e.mue_lower, 6), num(e.mue_upper, 6)]);
    for ci in &report.intervals {
        t.push([format!("{} {:.0}%", ci.method, 100.0 * ci.level), String::new(), num(ci.lower, 6), num(ci.upper, 6)]);
    }
    t
}

pub fn estimate(args: &EstimateArgs) -> Result<Output, CliError> {
    let (design, _) = args.design.resolve()?;
    let dist = SamplingDistribution::build(&design);
    let report = final_report(&dist, args.m, args.s, args.design.alpha)?;
    let title = format!(
        "Terminal ({}, {}) of design u = {}, K = {}: stopped for {:?}",
        args.m,
        args.s,
        design.u(),
        design.max_n(),
        report.kind
    );
    Ok(Output::new(&report, report_table(&report)).titled(title))
}

/// Interactive loop. Lines: `y`/`1` responder, `n`/`0` non-responder,
/// `u`/`undo` remove the last outcome, `q` quit. Blank lines and `#`
/// comments are ignored.
pub fn monitor<R: BufRead, W: Write>(args: &MonitorArgs, format: Format, input: R, mut out: W) -> Result<(), CliError> {
    let (design, _) = args.design.resolve()?;
    let alpha = args.design.alpha;
    let mut m = TrialMonitor::new(design.clone());
    match format {
        Format::Csv => writeln!(out, "k,s,decision,responders_needed")?,
        Format::Table => writeln!(out, "Design u = {}, K = {}: {}", design.u(), design.max_n(), m.update().message())?,
        Format::Json => {}
    }
    out.flush()?;

    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let token = line.trim().to_ascii_lowercase();
        let update = match token.as_str() {
            "" => continue,
            t if t.starts_with('#') => continue,
            "q" | "quit" => break,
            "y" | "yes" | "1" | "r" => m.record(true),
            "n" | "no" | "0" | "x" => m.record(false),
            "u" | "undo" => m.undo(),
            other => {
                return Err(CliError::Usage(format!("line {}: expected y, n, undo or q, got {other:?}", lineno + 1)))
            }
        }?;
        match format {
            Format::Table => writeln!(out, "{:>3}  {}", update.k, update.message())?,
            Format::Json => {
                writeln!(out, "{}", serde_json::to_string(&json!({ "update": update, "message": update.message() }))?)?
            }
            Format::Csv => writeln!(
                out,
                "{},{},{},{}",
                update.k,
                update.s,
                decision_label(update.decision),
                update.responders_needed
            )?,
        }
        out.flush()?;
        if update.decision.is_stop() {
            break;
        }
    }

    if m.is_stopped() && format != Format::Csv {
        let dist = SamplingDistribution::build(&design);
        let report = final_report(&dist, m.enrolled(), m.responders(), alpha)?;
        match format {
            Format::Json => writeln!(out, "{}", serde_json::to_string(&json!({ "report": report }))?)?,
            _ => {
                writeln!(out)?;
                out.write_all(report_table(&report).to_text().as_bytes())?;
            }
        }
    }
    Ok(())
}

fn decision_label(d: StageDecision) -> &'static str {
    match d {
        StageDecision::Continue => "continue",
        StageDecision::StopEfficacy => "stop_efficacy",
        StageDecision::StopFutility => "stop_futility",
    }
}

fn pairs(p0: Option<f64>, p1: Option<f64>) -> Result<Vec<Hypotheses>, CliError> {
    let grid = match (p0, p1) {
        (Some(p0), Some(p1)) => ScenarioGrid::single(p0, p1),
        _ => ScenarioGrid::standard(),
    };
    Ok(grid.hypotheses()?)
}

pub fn simulate_rows(args: &SimulateArgs) -> Result<Vec<PerformanceRow>, CliError> {
    let p_true = ScenarioGrid::standard_p_true();
    let default_reps = match args.kind {
        SimulateKind::Oc => OC_REPLICATIONS,
        SimulateKind::Estimation => ESTIMATION_REPLICATIONS,
    };
    let mode = match args.mode {
        ModeArg::Exact => EvalMode::Exact,
        ModeArg::MonteCarlo => {
            let replications = args.replications.unwrap_or(default_reps);
            if replications == 0 {
                return Err(CliError::Usage("--replications must be positive".into()));
            }
            EvalMode::MonteCarlo { replications, seed: args.seed }
        }
    };
    let mut rows = Vec::new();
    for (group, hyp) in pairs(args.p0, args.p1)?.iter().enumerate() {
        match args.kind {
            SimulateKind::Oc => {
                let set = DesignSet::for_hypotheses(hyp)?;
                rows.extend(evaluate_designs(hyp, &set.designs(), &p_true, mode, group));
            }
            SimulateKind::Estimation => {
                let dist = SamplingDistribution::build(&search_design(hyp)?.design);
                let table = EstimatorTable::build(&dist, hyp.alpha)?;
                rows.extend(evaluate_estimation_with(hyp, &dist, &table, &p_true, mode, group));
            }
        }
    }
    Ok(rows)
}

pub fn simulate<W: Write>(args: &SimulateArgs, format: Format, mut out: W) -> Result<(), CliError> {
    let rows = simulate_rows(args)?;
    if let Some(path) = &args.output {
        let kind = if format == Format::Json { OutputFormat::PlotJson } else { OutputFormat::Csv };
        emit_results(&rows, kind, path)?;
        return Ok(());
    }
    match format {
        Format::Csv => write_csv(&rows, out)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &plot_json(&rows)?)?;
            out.write_all(b"\n")?;
        }
        Format::Table => out.write_all(simulation_table(&rows, args.kind).to_text().as_bytes())?,
    }
    Ok(())
}

fn simulation_table(rows: &[PerformanceRow], kind: SimulateKind) -> Table {
    let mut headers: Vec<String> =
        ["design", "p0", "p1", "p", "max_n", "power", "ASN"].iter().map(|s| s.to_string()).collect();
    if kind == SimulateKind::Estimation {
        headers.extend(["bias naive", "bias adj", "bias MUE", "rmse naive", "rmse adj", "rmse MUE"].map(String::from));
        headers.extend(IntervalMethod::ALL.iter().map(|m| format!("cov {m}")));
    }
    let mut t = Table::new(headers);
    for r in rows {
        let mut cells = vec![
            r.design.clone(),
            r.p0.to_string(),
            r.p1.to_string(),
            num(r.p_true, 2),
            r.max_n.to_string(),
            num(r.power, 4),
            num(r.asn, 2),
        ];
        if kind == SimulateKind::Estimation {
            for v in [r.bias_naive, r.bias_adjusted, r.bias_mue, r.rmse_naive, r.rmse_adjusted, r.rmse_mue] {
                cells.push(opt_num(v, 4));
            }
            for m in IntervalMethod::ALL {
                cells.push(opt_num(r.coverage(m), 4));
            }
        }
        t.push(cells);
    }
    t
}

type CompareField = fn(&CompareRow) -> u32;

#[derive(Serialize)]
struct CompareRow {
    p0: f64,
    p1: f64,
    proposed: u32,
    fixed: u32,
    minimax: u32,
    optimal: u32,
    wald: u32,
    score: u32,
}

/// Maximum sample size per design and hypothesis pair, one column per pair.
pub fn compare(args: &CompareArgs) -> Result<Output, CliError> {
    let rows = pairs(args.p0, args.p1)?
        .iter()
        .map(|h| {
            Ok(CompareRow {
                p0: h.p0,
                p1: h.p1,
                proposed: search_design(h)?.design.max_n(),
                fixed: fixed_exact_design(h)?.n,
                minimax: simon_search(h, SimonCriterion::Minimax)?.n,
                optimal: simon_search(h, SimonCriterion::Optimal)?.n,
                wald: wald_sample_size(h),
                score: score_sample_size(h),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut table =
        Table::new(std::iter::once("design".to_string()).chain(rows.iter().map(|r| format!("({}, {})", r.p0, r.p1))));
    let fields: [(&str, CompareField); 6] = [
        ("Proposed", |r| r.proposed),
        ("Fixed", |r| r.fixed),
        ("Simon Minimax", |r| r.minimax),
        ("Simon Optimal", |r| r.optimal),
        ("Wald N", |r| r.wald),
        ("Score N", |r| r.score),
    ];
    for (label, get) in fields {
        table.push(std::iter::once(label.to_string()).chain(rows.iter().map(|r| get(r).to_string())));
    }
    Ok(Output::new(&rows, table).titled("Maximum sample size by design and (p0, p1)"))
}
