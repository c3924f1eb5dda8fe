//! GQA-style semantic strings: `select: table → relate: on, subject, apple → exist: ?`.
//!
//! Each clause is `operator: arg, arg, ...`. Register operands are implicit:
//! unary operators read the previous clause, binary operators (`compare`,
//! `and`, `or`) read the two previous clauses. A leading `[k]` argument
//! overrides that default with the output of clause `k`.

use super::{check_literal, Op, OpKind, Program, ProgramError, Register, Step};

/// Semantic-string operator names (the IR names are accepted too).
fn operator(name: &str) -> Option<OpKind> {
    let kind = match name {
        "select" => OpKind::Select,
        "filter" | "filter_attr" => OpKind::FilterAttr,
        "relate" => OpKind::Relate,
        "query" | "query_attr" => OpKind::QueryAttr,
        "common" | "common_attr" => OpKind::CommonAttr,
        "verify" | "verify_attr" => OpKind::VerifyAttr,
        "verify_rel" | "verify rel" => OpKind::VerifyRel,
        "exist" => OpKind::Exist,
        "count" => OpKind::Count,
        "compare" | "compare_attr" => OpKind::CompareAttr,
        "choose" | "choose_attr" => OpKind::ChooseAttr,
        "and" => OpKind::And,
        "or" => OpKind::Or,
        _ => return None,
    };
    Some(kind)
}

fn semantic_name(kind: OpKind) -> &'static str {
    match kind {
        OpKind::FilterAttr => "filter",
        OpKind::QueryAttr => "query",
        OpKind::CommonAttr => "common",
        OpKind::VerifyAttr => "verify",
        OpKind::CompareAttr => "compare",
        OpKind::ChooseAttr => "choose",
        other => other.name(),
    }
}

fn split_clauses(s: &str) -> Vec<&str> {
    s.split('→').flat_map(|c| c.split("->")).collect()
}

/// Parses a semantic string into a program whose step `i` writes `r{i}`.
pub fn parse_semantic_string(s: &str) -> Result<Program, ProgramError> {
    if s.trim().is_empty() {
        return Err(ProgramError::Parse { clause: 0, message: "empty semantic string".into() });
    }
    let mut steps: Vec<Step> = Vec::new();
    for (i, clause) in split_clauses(s).into_iter().enumerate() {
        let err = |message: String| ProgramError::Parse { clause: i, message };
        let (head, rest) = clause
            .split_once(':')
            .ok_or_else(|| err(format!("expected `operator: args` in `{}`", clause.trim())))?;
        let head = head.split_whitespace().collect::<Vec<_>>().join(" ");
        let kind = operator(&head).ok_or_else(|| err(format!("unknown operator `{head}`")))?;
        let mut args: Vec<&str> = rest.split(',').map(str::trim).collect();
        if args.iter().all(|a| a.is_empty() || *a == "?") {
            args.clear();
        }
        let mut explicit = Vec::new();
        while let Some(first) = args.first() {
            let Some(inner) = first.strip_prefix('[').and_then(|a| a.strip_suffix(']')) else {
                break;
            };
            let k: usize = inner
                .trim()
                .parse()
                .map_err(|_| err(format!("bad clause reference `{first}`")))?;
            if k >= i {
                return Err(err(format!("clause reference [{k}] does not precede clause {i}")));
            }
            explicit.push(Register(k as u32));
            args.remove(0);
        }
        let need = kind.register_arity();
        let registers = if !explicit.is_empty() {
            explicit
        } else if need == 0 {
            Vec::new()
        } else if i < need {
            return Err(err(format!("{head} needs {need} earlier clause(s)")));
        } else {
            (i - need..i).map(|k| Register(k as u32)).collect()
        };
        let literals = args
            .iter()
            .map(|a| check_literal(a))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let literal_refs: Vec<&str> = literals.iter().map(String::as_str).collect();
        let op = Op::build(kind, &registers, &literal_refs).map_err(err)?;
        steps.push(Step { out: Register(i as u32), op });
    }
    Program::new(steps).map_err(|e| match e {
        ProgramError::TypeMismatch { step, .. } | ProgramError::UndefinedRegister { step, .. } => {
            ProgramError::Parse { clause: step, message: e.to_string() }
        }
        other => other,
    })
}

/// Renders a program as a semantic string. Register operands are written as
/// `[k]` only when they differ from the implicit default. Registers are
/// mapped to step positions, so programs whose step `i` writes `r{i}`
/// round-trip exactly through [`parse_semantic_string`].
pub fn render_semantic(program: &Program) -> String {
    let index = program.register_index();
    program
        .steps()
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let kind = step.op.kind();
            let positions: Vec<usize> = step.op.inputs().iter().map(|r| index[r]).collect();
            let need = kind.register_arity();
            let implicit = i >= need && positions.iter().copied().eq(i - need..i);
            let mut args: Vec<String> = Vec::new();
            if !implicit {
                args.extend(positions.iter().map(|p| format!("[{p}]")));
            }
            args.extend(step.op.literals());
            let args = if args.is_empty() { "?".to_string() } else { args.join(", ") };
            format!("{}: {}", semantic_name(kind), args)
        })
        .collect::<Vec<_>>()
        .join(" → ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::render_program;

    #[test]
    fn red_apple_string() {
        let p = parse_semantic_string("select: table → relate: on, subject, apple → exist: ?").unwrap();
        assert_eq!(
            render_program(&p),
            "r0 = select(table)\nr1 = relate(r0, on, subject, apple)\nr2 = exist(r1)"
        );
    }

    #[test]
    fn single_clause() {
        assert_eq!(parse_semantic_string("select: sky").unwrap().len(), 1);
    }

    #[test]
    fn rejections_carry_clause_index() {
        assert_eq!(
            parse_semantic_string("frobnicate: x"),
            Err(ProgramError::Parse { clause: 0, message: "unknown operator `frobnicate`".into() })
        );
        assert!(matches!(parse_semantic_string(""), Err(ProgramError::Parse { clause: 0, .. })));
        assert!(matches!(
            parse_semantic_string("select: a → relate: on, apple"),
            Err(ProgramError::Parse { clause: 1, .. })
        ));
        assert!(matches!(parse_semantic_string("exist: ?"), Err(ProgramError::Parse { clause: 0, .. })));
        assert!(matches!(
            parse_semantic_string("select: a → count: ? → exist: ?"),
            Err(ProgramError::Parse { clause: 2, .. })
        ));
    }

    #[test]
    fn ascii_arrow_and_whitespace() {
        let a = parse_semantic_string("select:table->relate:  on ,subject,  apple->exist:?").unwrap();
        let b = parse_semantic_string("select: table → relate: on, subject, apple → exist: ?").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binary_defaults_and_explicit_refs() {
        let p = parse_semantic_string("select: apple → select: knife → compare: color").unwrap();
        assert_eq!(render_program(&p).lines().last().unwrap(), "r2 = compare_attr(r0, r1, color)");
        let s = "select: table → relate: on, subject, _ → select: chair → relate: near, subject, _ → and: [1], [3] → count: ?";
        let p = parse_semantic_string(s).unwrap();
        assert_eq!(render_semantic(&p), s);
        assert_eq!(parse_semantic_string(&render_semantic(&p)).unwrap(), p);
    }
}
