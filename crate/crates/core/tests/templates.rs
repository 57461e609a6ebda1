use std::path::{Path, PathBuf};

use drape_core::default_schema;
use drape_core::dsl::{self, parse_templates, print_template, ErrorKind, LibraryError};

fn repo_templates() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../templates")
}

fn canonical(text: &str) -> String {
    parse_templates(text, default_schema())
        .unwrap()
        .iter()
        .map(print_template)
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn shipped_templates_match_goldens() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let files = dsl::template_files(&repo_templates()).unwrap();
    assert_eq!(files.len(), dsl::SHIPPED.len());
    for path in files {
        let stem = path.file_stem().unwrap().to_str().unwrap();
        let expected = std::fs::read_to_string(golden.join(format!("{stem}.txt"))).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(canonical(&text), expected, "{}", path.display());
        // Canonical text is a fixed point.
        assert_eq!(canonical(&expected), expected);
    }
}

#[test]
fn embedded_copies_are_current() {
    for (file, text) in dsl::SHIPPED {
        let on_disk = std::fs::read_to_string(repo_templates().join(file)).unwrap();
        assert_eq!(&on_disk, text, "{file}");
    }
}

#[test]
fn library_names_are_unique_and_complete() {
    let lib = dsl::load_library(&repo_templates(), default_schema()).unwrap();
    let mut names: Vec<&str> = lib.iter().map(|t| t.name.as_str()).collect();
    names.sort();
    for wanted in ["closed", "front_tuck", "half_tuck", "open", "open_wider", "side_tuck", "waist_up"] {
        assert!(names.contains(&wanted), "{wanted}");
    }
    let n = names.len();
    names.dedup();
    assert_eq!(names.len(), n);
}

#[test]
fn file_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.drape");
    std::fs::write(&path, "template \"x\" for category=top {\n  offset points(nope) by (0, 0);\n}\n").unwrap();
    let err = dsl::parse_file(&path, default_schema()).unwrap_err();
    let LibraryError::Parse(e) = &err else { panic!("{err}") };
    assert_eq!(e.kind, ErrorKind::Lint);
    assert_eq!((e.pos.line, e.pos.column), (2, 17));
    assert!(err.to_string().starts_with(&format!("{}:2:17: lint error", path.display())));
}

#[test]
fn duplicate_names_across_files() {
    let dir = tempfile::tempdir().unwrap();
    let t = "template \"dup\" for category=skirt { offset points(*) by (0, 0.01); }";
    std::fs::write(dir.path().join("a.drape"), t).unwrap();
    std::fs::create_dir(dir.path().join("sub")).unwrap();
    std::fs::write(dir.path().join("sub/b.drape"), t).unwrap();
    assert!(matches!(
        dsl::load_library(dir.path(), default_schema()),
        Err(LibraryError::Duplicate { .. })
    ));
}
