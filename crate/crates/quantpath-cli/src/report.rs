//! Text reports printed by the commands.

use quantpath::path::{SolutionPath, Termination};
use quantpath::problem::total_loss;
use quantpath::select::BicTrace;

use crate::document::{Metadata, StdDoc};

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e-3 && v.abs() < 1e6 {
        format!("{v:.6}")
    } else {
        format!("{v:.4e}")
    }
}

pub fn fmt_vec(values: &[f64], max_show: usize) -> String {
    let shown: Vec<String> = values.iter().take(max_show).map(|&v| fmt_num(v)).collect();
    if values.len() > max_show {
        format!("({}, ... {} more)", shown.join(", "), values.len() - max_show)
    } else {
        format!("({})", shown.join(", "))
    }
}

fn fmt_lambda_hi(v: f64) -> String {
    if v.is_finite() {
        fmt_num(v)
    } else {
        "inf".to_string()
    }
}

/// Node summary table: one row per breakpoint with the coefficient vector,
/// residuals, norm budget, lambda interval, and the events.
pub fn node_table(path: &SolutionPath) -> String {
    let mut out = String::new();
    out.push_str("  # |          R | lambda interval        | event              | beta / residuals\n");
    out.push_str("----+------------+------------------------+--------------------+------------------\n");
    for (t, node) in path.nodes().iter().enumerate() {
        let exit = node
            .exit_event
            .map(|e| format!(" -> {}", e.label()))
            .unwrap_or_default();
        out.push_str(&format!(
            "{t:>3} | {:>10} | [{}, {}] | {:<18} | beta = {}\n",
            fmt_num(node.radius),
            fmt_num(node.lambda_lo),
            fmt_lambda_hi(node.lambda_hi),
            node.event.label(),
            fmt_vec(&node.beta, 8),
        ));
        out.push_str(&format!(
            "    |            | {exit:<22} |                    | r    = {}\n",
            fmt_vec(&node.residuals, 8),
        ));
    }
    let loss_last = path
        .nodes()
        .last()
        .map(|n| total_loss(&n.beta, path.problem()))
        .unwrap_or_default();
    out.push_str(&format!(
        "{} nodes, termination: {}, final loss {}\n",
        path.nodes().len(),
        termination_label(path.termination()),
        fmt_num(loss_last),
    ));
    out
}

pub fn termination_label(t: &Termination) -> String {
    match t {
        Termination::LambdaZero => "lambda reached zero".to_string(),
        Termination::MaxActiveGroups => "maximum active groups reached".to_string(),
        Termination::UserStop => "radius limit reached".to_string(),
        Termination::Degenerate { detail, .. } => format!("degenerate: {detail}"),
    }
}

pub fn bic_table(trace: &BicTrace) -> String {
    let mut out = String::new();
    out.push_str("        R |       loss | zeros |        BIC\n");
    out.push_str("----------+------------+-------+-----------\n");
    for e in &trace.entries {
        let marker = if e.radius == trace.argmin_radius { " <- selected" } else { "" };
        out.push_str(&format!(
            "{:>9} | {:>10} | {:>5} | {:>10}{marker}\n",
            fmt_num(e.radius),
            fmt_num(e.loss),
            e.zero_residuals,
            if e.bic.is_finite() { fmt_num(e.bic) } else { "inf".to_string() },
        ));
    }
    out
}

/// Coefficients restated in source units using the recorded centering and
/// scaling. Power and dummy columns carry no record of their own and pass
/// through unchanged.
pub fn back_mapped(beta: &[f64], metadata: &Metadata) -> Option<Vec<(String, f64)>> {
    if metadata.column_names.len() != beta.len() {
        return None;
    }
    let y_scale = metadata.response_standardization.as_ref().map_or(1.0, |s| s.scale);
    let y_center = metadata.response_standardization.as_ref().map_or(0.0, |s| s.center);
    let mut out = Vec::with_capacity(beta.len());
    let mut intercept_shift = y_center;
    for ((name, std), &b) in metadata
        .column_names
        .iter()
        .zip(&metadata.standardization)
        .zip(beta)
    {
        let coef = match std {
            Some(StdDoc { center, scale }) => {
                intercept_shift -= y_scale * b * center / scale;
                y_scale * b / scale
            }
            None => y_scale * b,
        };
        out.push((name.clone(), coef));
    }
    if let Some(pos) = metadata.column_names.iter().position(|n| n == "(intercept)") {
        out[pos].1 += intercept_shift;
    }
    Some(out)
}
