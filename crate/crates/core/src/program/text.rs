//! Line-oriented pseudocode: `r1 = relate(r0, on, subject, apple)`.

use super::{step_from_parts, Program, ProgramError};

/// One step per line, `rK = op(args)`.
pub fn render_program(program: &Program) -> String {
    program
        .steps()
        .iter()
        .map(|s| format!("{} = {}({})", s.out, s.op.kind(), s.op.args().join(", ")))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`render_program`]. Blank lines are skipped; errors carry the
/// zero-based index of the offending step.
pub fn parse_pseudocode(text: &str) -> Result<Program, ProgramError> {
    let mut steps = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let clause = steps.len();
        let err = |message: &str| ProgramError::Parse { clause, message: message.to_string() };
        let (lhs, rhs) = line.split_once('=').ok_or_else(|| err("expected `rK = op(args)`"))?;
        let rhs = rhs.trim();
        let (op, rest) = rhs.split_once('(').ok_or_else(|| err("expected `(` after operator"))?;
        let inner = rest.strip_suffix(')').ok_or_else(|| err("expected `)` at end of line"))?;
        let args: Vec<String> = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(|a| a.trim().to_string()).collect()
        };
        let step = step_from_parts(clause, op, &args, lhs).map_err(|e| match e {
            ProgramError::Invalid { message, .. } => err(&message),
            other => other,
        })?;
        steps.push(step);
    }
    Program::new(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_select_renders() {
        let p = parse_pseudocode("r0 = select(table)").unwrap();
        assert_eq!(render_program(&p), "r0 = select(table)");
    }

    #[test]
    fn whitespace_tolerant() {
        let p = parse_pseudocode("  r0=select( table )\n\n r1 =  count(r0) ").unwrap();
        assert_eq!(render_program(&p), "r0 = select(table)\nr1 = count(r0)");
    }

    #[test]
    fn errors_carry_line_index() {
        let err = parse_pseudocode("r0 = select(table)\nr1 = frobnicate(r0)").unwrap_err();
        assert!(matches!(err, ProgramError::Parse { clause: 1, .. }), "{err:?}");
        let err = parse_pseudocode("r0 = select(table)\nr1 = count(r0, r0)").unwrap_err();
        assert!(matches!(err, ProgramError::Parse { clause: 1, .. }), "{err:?}");
        assert!(matches!(parse_pseudocode("select table"), Err(ProgramError::Parse { clause: 0, .. })));
        assert_eq!(parse_pseudocode(""), Err(ProgramError::Empty));
    }

    #[test]
    fn multiword_literals_survive() {
        let src = "r0 = select(traffic light)\nr1 = relate(r0, in front of, subject, parked car)";
        assert_eq!(render_program(&parse_pseudocode(src).unwrap()), src);
    }
}
