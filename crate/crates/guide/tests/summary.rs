use std::path::Path;

#[test]
fn every_chapter_is_listed_and_compiled() {
    let book = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../book/src");
    let summary = std::fs::read_to_string(book.join("SUMMARY.md")).unwrap();
    let mut on_disk: Vec<String> = std::fs::read_dir(&book)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|f| f.ends_with(".md") && f != "SUMMARY.md")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = surveytmle_guide::CHAPTERS.iter().map(|s| s.to_string()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
    for c in surveytmle_guide::CHAPTERS {
        assert!(summary.contains(&format!("({c})")), "{c} missing from SUMMARY.md");
    }
}
