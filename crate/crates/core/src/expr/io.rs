use std::io::{BufRead, Write};

use super::{parse_equation, Expr, ExprError, LabeledEquation};

/// Built-in seed identities, one s-expression per line.
pub const DEFAULT_AXIOMS: &str = include_str!("axioms.txt");

fn parse_lines<T>(
    reader: impl BufRead,
    mut each: impl FnMut(&str, usize) -> Result<T, ExprError>,
) -> Result<Vec<T>, ExprError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ExprError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(each(trimmed, i + 1)?);
    }
    Ok(out)
}

fn at_line(line: usize) -> impl Fn(ExprError) -> ExprError {
    move |e| ExprError::Line {
        line,
        message: e.to_string(),
    }
}

/// Reads an axiom file: one equation per line; blank lines and `#` comments
/// are skipped.
pub fn read_axioms(reader: impl BufRead) -> Result<Vec<Expr>, ExprError> {
    parse_lines(reader, |text, line| parse_equation(text).map_err(at_line(line)))
}

pub fn default_axioms() -> Vec<Expr> {
    read_axioms(DEFAULT_AXIOMS.as_bytes()).expect("built-in axioms parse")
}

/// Writes `label<TAB>depth<TAB>s-expression\n` records.
pub fn write_dataset(mut w: impl Write, items: &[LabeledEquation]) -> std::io::Result<()> {
    for item in items {
        writeln!(w, "{}\t{}\t{}", item.label, item.depth, item.expr)?;
    }
    Ok(())
}

/// Reads records written by [`write_dataset`]. The stored depth must agree
/// with the equation.
pub fn read_dataset(reader: impl BufRead) -> Result<Vec<LabeledEquation>, ExprError> {
    parse_lines(reader, |text, line| {
        let bad = |message: String| ExprError::Line { line, message };
        let mut fields = text.splitn(3, '\t');
        let (Some(label), Some(depth), Some(expr)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad("expected label<TAB>depth<TAB>expression".into()));
        };
        let label = label.parse().map_err(bad)?;
        let depth: usize = depth.parse().map_err(|_| bad(format!("bad depth `{depth}`")))?;
        let expr = parse_equation(expr).map_err(at_line(line))?;
        if expr.depth() != depth {
            return Err(bad(format!(
                "stored depth {depth} but equation has depth {}",
                expr.depth()
            )));
        }
        Ok(LabeledEquation { expr, label, depth })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{label_identity, Label, OracleVerdict};

    #[test]
    fn shipped_axioms_are_identities() {
        let axioms = default_axioms();
        assert!(axioms.len() >= 40, "{}", axioms.len());
        for a in &axioms {
            assert_eq!(label_identity(a, 16, 1e-6), OracleVerdict::Correct, "{a}");
        }
    }

    #[test]
    fn dataset_lines_are_exact() {
        let items = vec![
            LabeledEquation::new(parse_equation("(= (+ x 0) x)").unwrap(), Label::Correct),
            LabeledEquation::new(parse_equation("(= (sin x) 1)").unwrap(), Label::Incorrect),
        ];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &items).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "Correct\t2\t(= (+ x 0) x)\nIncorrect\t2\t(= (sin x) 1)\n"
        );
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), items);
    }

    #[test]
    fn bad_records_name_the_line() {
        let err = read_dataset("Correct\t2\t(= x x)\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 1:"), "{err}");
        let err = read_dataset("Maybe\t1\t(= x x)\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("Maybe"));
        let err = read_axioms("(= x x)\n(+ x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
    }
}
