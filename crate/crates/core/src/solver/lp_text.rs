//! Fixed-form LP text export (CPLEX LP file format) for debugging and
//! cross-solver checks.

use std::fmt::Write;

use super::{LinearProgram, MilpProgram, Relation, Sense};

/// Render an LP in the standard LP text format. Column and row names are
/// sanitized; unnamed entities get positional names.
pub fn write_lp(lp: &LinearProgram) -> String {
    render(lp, &[])
}

/// Render a MILP, listing binary columns in a `Binaries` section.
pub fn write_milp(milp: &MilpProgram) -> String {
    let bins: Vec<usize> = milp.binary_vars.iter().copied().collect();
    render(&milp.base, &bins)
}

fn render(lp: &LinearProgram, binaries: &[usize]) -> String {
    let mut s = String::new();
    let names: Vec<String> = lp
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| sanitize(&c.name, 'x', j))
        .collect();

    s.push_str(match lp.sense {
        Sense::Maximize => "Maximize\n obj:",
        Sense::Minimize => "Minimize\n obj:",
    });
    let mut any = false;
    for (j, col) in lp.columns.iter().enumerate() {
        if col.cost != 0.0 {
            push_term(&mut s, col.cost, &names[j], &mut any);
        }
    }
    if !any {
        s.push_str(" 0");
    }
    s.push_str("\nSubject To\n");
    for (i, row) in lp.rows.iter().enumerate() {
        let rname = sanitize(&row.name, 'r', i);
        write!(s, " {rname}:").unwrap();
        let mut any = false;
        for &(j, v) in &row.coeffs {
            if v != 0.0 {
                push_term(&mut s, v, &names[j], &mut any);
            }
        }
        if !any {
            s.push_str(" 0");
        }
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        writeln!(s, " {rel} {}", fmt_num(row.rhs)).unwrap();
    }
    s.push_str("Bounds\n");
    for (j, col) in lp.columns.iter().enumerate() {
        let name = &names[j];
        match (col.lower.is_finite(), col.upper.is_finite()) {
            (true, true) if col.lower == col.upper => {
                writeln!(s, " {name} = {}", fmt_num(col.lower)).unwrap()
            }
            (true, true) => writeln!(
                s,
                " {} <= {name} <= {}",
                fmt_num(col.lower),
                fmt_num(col.upper)
            )
            .unwrap(),
            (true, false) => {
                if col.lower != 0.0 {
                    writeln!(s, " {name} >= {}", fmt_num(col.lower)).unwrap()
                }
            }
            (false, true) => writeln!(s, " -inf <= {name} <= {}", fmt_num(col.upper)).unwrap(),
            (false, false) => writeln!(s, " {name} free").unwrap(),
        }
    }
    if !binaries.is_empty() {
        s.push_str("Binaries\n");
        for &j in binaries {
            writeln!(s, " {}", names[j]).unwrap();
        }
    }
    s.push_str("End\n");
    s
}

fn push_term(s: &mut String, coef: f64, name: &str, any: &mut bool) {
    if coef >= 0.0 {
        if *any {
            write!(s, " + {} {name}", fmt_num(coef)).unwrap();
        } else {
            write!(s, " {} {name}", fmt_num(coef)).unwrap();
        }
    } else {
        write!(s, " - {} {name}", fmt_num(-coef)).unwrap();
    }
    *any = true;
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn sanitize(name: &str, prefix: char, idx: usize) -> String {
    if name.is_empty() {
        return format!("{prefix}{idx}");
    }
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if clean.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        format!("{prefix}_{clean}")
    } else {
        clean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::LinearProgram;

    #[test]
    fn renders_sections() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_column("x", 0.0, 1.0, 3.0);
        let y = lp.add_column("y[2]", f64::NEG_INFINITY, f64::INFINITY, -2.5);
        lp.add_row("cap", Relation::Le, 4.0, &[(x, 1.0), (y, -1.0)]);
        let milp = MilpProgram {
            base: lp,
            binary_vars: [x].into_iter().collect(),
        };
        let text = write_milp(&milp);
        assert!(text.contains("Maximize"));
        assert!(text.contains("cap: 1 x - 1 y_2_ <= 4"));
        assert!(text.contains("y_2_ free"));
        assert!(text.contains("Binaries\n x"));
        assert!(text.ends_with("End\n"));
    }
}
