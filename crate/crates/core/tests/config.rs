use std::fs;

use railgate_colang::parse_script;
use railgate_core::embedding::{build_indexes, HashingEmbedder};
use railgate_core::{load_app, load_config, ConfigError};

const YAML: &str = "model:\n  engine: mock\nembeddings:\n  engine: mock\n";

fn app_dir(files: &[(&str, &str)]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in files {
        fs::write(dir.path().join(name), text).unwrap();
    }
    dir
}

#[test]
fn duplicate_flow_across_files_names_both() {
    let flow = "define flow greeting\n  user express greeting\n  bot express greeting\n";
    let defs = "define user express greeting\n  \"hi\"\ndefine bot express greeting\n  \"Hello!\"\n";
    let dir = app_dir(&[("config.yml", YAML), ("a.co", &format!("{defs}{flow}")), ("b.co", flow)]);
    let err = load_config(dir.path()).unwrap_err();
    assert!(matches!(err, ConfigError::Invalid(_)), "{err:?}");
    let text = err.to_string();
    assert!(text.contains("a.co") && text.contains("b.co"), "{text}");
    assert!(text.contains("duplicate flow `greeting`"), "{text}");
}

#[test]
fn parse_errors_carry_file_and_line() {
    let dir = app_dir(&[("config.yml", YAML), ("main.co", "define flow x\n  user\n")]);
    let err = load_config(dir.path()).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("main.co"), "{text}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = app_dir(&[("config.yml", &format!("{YAML}colour: blue\n")), ("main.co", "")]);
    let err = load_config(dir.path()).unwrap_err();
    assert!(matches!(err, ConfigError::Yaml { .. }), "{err:?}");
}

#[test]
fn missing_directory_is_an_io_error() {
    let err = load_config(std::path::Path::new("/nonexistent/railgate-app")).unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }), "{err:?}");
}

#[test]
fn loads_a_complete_app_from_disk() {
    let dir = app_dir(&[
        (
            "config.yml",
            "model:\n  engine: mock\n  rules:\n    - task: generate_user_intent\n      tail: user \"hi\"\n      response: express greeting\nembeddings:\n  engine: mock\ninstructions: Be brief.\n",
        ),
        (
            "main.co",
            "define user express greeting\n  \"hi\"\n  \"hello\"\ndefine bot express greeting\n  \"Hello!\"\ndefine flow greeting\n  user express greeting\n  bot express greeting\n",
        ),
    ]);
    let rt = load_app(dir.path()).unwrap();
    let cfg = &rt.app().config;
    assert_eq!(cfg.id, dir.path().file_name().unwrap().to_str().unwrap());
    assert_eq!(cfg.instructions, "Be brief.");
    let mut state = rt.new_session();
    let out = rt.run_turn(&mut state, "hi").unwrap();
    assert_eq!(out.messages, ["Hello!"]);
}

#[test]
fn index_sizes_follow_the_definitions() {
    let script = parse_script(
        "define user a\n  \"one\"\n  \"two\"\n  \"three\"\ndefine user b\n  \"four\"\n\
         define bot x\n  \"X1\"\n  \"X2\"\ndefine bot y\n  \"Y\"\n\
         define flow f\n  user a\n  bot x\ndefine flow g\n  user b\n  bot y\n\
         define flow rail\n  user ...\n  bot y\n",
    )
    .unwrap();
    let embedder = HashingEmbedder::new(32);
    let all = build_indexes(&script, &embedder, None).unwrap();
    assert_eq!(all.user_examples.len(), 4);
    assert_eq!(all.bot_examples.len(), 3);
    assert_eq!(all.flows.len(), 2);
    assert_eq!(all.knowledge.len(), 0);
    let capped = build_indexes(&script, &embedder, Some(1)).unwrap();
    assert_eq!(capped.user_examples.len(), 2);
    assert_eq!(capped.flows.len(), all.flows.len());
}
