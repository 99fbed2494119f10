use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use vessel_cbf::{SimLog, SimRecord};

use crate::error::CliError;

pub const COLUMNS: [&str; 27] = [
    "t", "x", "y", "psi", "u", "v", "r", "x_d", "y_d", "psi_ld", "u_l", "psi_a", "psi_l", "p_e",
    "psi_b", "psi_le", "tau_u_ref", "tau_r_ref", "tau_u", "tau_r", "X_u", "X_r", "h_cc1", "h_cc2",
    "branch", "qp_status", "V2",
];

/// Formats `x` with 9 significant digits, fixed notation for moderate
/// exponents and scientific otherwise, trailing zeros removed.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn row(r: &SimRecord) -> Vec<String> {
    let s = &r.state;
    let b = &r.bundle;
    let nums = [
        r.t,
        s.x,
        s.y,
        s.psi,
        s.u,
        s.v,
        s.r,
        r.reference.x_d,
        r.reference.y_d,
        r.reference.psi_ld,
        b.u_l,
        b.psi_a,
        b.psi_l,
        b.p_e,
        b.psi_b,
        r.errors.psi_le,
        r.tau_ref.tau_u,
        r.tau_ref.tau_r,
        r.tau.tau_u,
        r.tau.tau_r,
        r.correction.tau_u,
        r.correction.tau_r,
        r.h_cc1,
        r.h_cc2,
    ];
    let mut out: Vec<String> = nums.iter().map(|&v| fmt_sig9(v)).collect();
    out.push(r.branch.index().to_string());
    out.push(r.qp_status.as_ref().map_or("none", |s| s.label()).to_string());
    out.push(fmt_sig9(r.v2));
    out
}

pub fn write_csv(log: &SimLog, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(COLUMNS)?;
    for r in &log.records {
        w.write_record(row(r))?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(0.01), "0.01");
        assert_eq!(fmt_sig9(86.45), "86.45");
        assert_eq!(fmt_sig9(-0.233133333333), "-0.233133333");
        assert_eq!(fmt_sig9(123456789.4), "123456789");
        assert_eq!(fmt_sig9(1234567894.0), "1.23456789e9");
        assert_eq!(fmt_sig9(-2.5e-7), "-2.5e-7");
        assert_eq!(fmt_sig9(1e-5), "0.00001");
        assert_eq!(fmt_sig9(std::f64::consts::PI), "3.14159265");
    }

    #[test]
    fn rounding_carries_into_exponent() {
        // 9.999999999 rounds to 10.0000000 at 9 digits
        assert_eq!(fmt_sig9(9.9999999999), "10");
        assert_eq!(fmt_sig9(999999999.7), "1e9");
    }
}
