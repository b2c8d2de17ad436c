//! CSV serialization and gnuplot scripts.

use std::fmt::Write as _;

use crate::harness::experiment::ResultRecord;

pub const CSV_COLUMNS: [&str; 19] = [
    "experiment_id",
    "variant",
    "M",
    "N",
    "Q",
    "scheme",
    "pilot_structure",
    "snr_db",
    "kappa_max",
    "trials",
    "to_err_mean",
    "to_err_var",
    "cfo_mse",
    "nmse_db",
    "wall_seconds",
    "to_err_bias",
    "cfo_point",
    "nmse",
    "seed",
];

/// Rounds to 9 significant digits and prints the shortest form of the
/// rounded value.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig9).unwrap_or_default()
}

fn tag<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let snr = r.snr_db.map(format_sig9).unwrap_or_else(|| "inf".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment_id,
            r.variant,
            r.m,
            r.n,
            r.q,
            tag(&r.scheme),
            tag(&r.pilot_structure),
            snr,
            format_sig9(r.kappa_max),
            r.trials,
            format_sig9(r.to_err_mean),
            format_sig9(r.to_err_var),
            opt(r.cfo_mse),
            opt(r.nmse_db),
            format_sig9(r.wall_seconds),
            format_sig9(r.to_err_bias),
            opt(r.cfo_point),
            opt(r.nmse),
            r.seed,
        );
    }
    out
}

/// A gnuplot script plotting column `y` against column `x` of `csv_path`,
/// one curve per variant.
pub fn gnuplot_script(csv_path: &str, x: &str, y: &str, variants: &[String], log_y: bool) -> Option<String> {
    let xi = CSV_COLUMNS.iter().position(|c| *c == x)? + 1;
    let yi = CSV_COLUMNS.iter().position(|c| *c == y)? + 1;
    let vi = CSV_COLUMNS.iter().position(|c| *c == "variant")? + 1;
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key outside");
    let _ = writeln!(s, "set xlabel '{x}'");
    let _ = writeln!(s, "set ylabel '{y}'");
    if log_y {
        let _ = writeln!(s, "set logscale y");
    }
    let curves: Vec<String> = variants
        .iter()
        .map(|v| format!("'{csv_path}' every ::1 using {xi}:(strcol({vi}) eq '{v}' ? ${yi} : 1/0) with linespoints title '{v}'"))
        .collect();
    let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    Some(s)
}
