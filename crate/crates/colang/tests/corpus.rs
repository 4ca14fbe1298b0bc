use std::fs;
use std::path::{Path, PathBuf};

use railgate_colang::*;

fn corpus(kind: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(kind);
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "co"))
        .collect();
    files.sort();
    files
}

#[test]
fn valid_scripts_parse_validate_and_roundtrip() {
    let files = corpus("valid");
    assert!(files.len() >= 25);
    for path in files {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let src = fs::read_to_string(&path).unwrap();
        let script = parse_named(&src, &name).unwrap_or_else(|e| panic!("{name}: {e}"));
        let errors: Vec<_> = validate(&script).into_iter().filter(|d| d.is_error()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
        let again = parse_named(&format_script(&script), &name).unwrap();
        assert_eq!(again, script, "{name}");
    }
}

#[test]
fn malformed_scripts_report_positions() {
    let files = corpus("malformed");
    assert!(files.len() >= 10);
    for path in files {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let src = fs::read_to_string(&path).unwrap();
        let expected = src
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# expect: "))
            .unwrap_or_else(|| panic!("{name}: missing expectation header"));
        let (line, col) = expected.split_once(':').unwrap();
        let err = parse_named(&src, &name).expect_err(&name);
        let d = &err.diagnostic;
        assert_eq!(
            (d.line, d.column),
            (line.parse().unwrap(), col.trim().parse().unwrap()),
            "{name}: {d}"
        );
        assert_eq!(d.file.as_deref(), Some(name.as_str()));
    }
}

#[test]
fn math_and_distance_script_shape() {
    let src = fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus/valid/02_math_distance.co"),
    )
    .unwrap();
    let script = parse_script(&src).unwrap();
    assert_eq!(script.flows.len(), 2);
    for flow in &script.flows {
        let kinds: Vec<_> = flow.elements.iter().map(|e| &e.kind).collect();
        assert_eq!(kinds.len(), 3);
        assert!(matches!(kinds[0], Element::UserMatch(Form::Named(_))));
        match kinds[1] {
            Element::ExecuteAction {
                action, result_var, ..
            } => {
                assert_eq!(action, "wolfram_alpha_request");
                assert!(result_var.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(kinds[2], Element::BotEmit(Form::Named(_))));
    }
    let diags = validate(&script);
    assert!(!diags.is_empty());
    assert!(diags.iter().all(|d| !d.is_error()));
}
