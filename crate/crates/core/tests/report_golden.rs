use robustqa::eval::{render_report, RateRow, RateTable, ReportFormat};
use robustqa::scenarios::Scenario;
use std::path::Path;

fn table(model: &str, cells: [(f64, f64); 5]) -> RateTable {
    RateTable {
        model: model.into(),
        judge: "reported".into(),
        rows: Scenario::ALL
            .iter()
            .zip(cells)
            .map(|(&scenario, (acc, r))| RateRow { scenario, acc, r, w: None })
            .collect(),
    }
}

/// Compares with a checked-in file; `UPDATE_GOLDEN=1` rewrites it instead.
fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{} is out of date", path.display());
}

#[test]
fn text_report_matches_golden() {
    let gpt = table("GPT3.5-Turbo", [(96.7, 0.0), (60.0, 3.3), (95.9, 0.6), (93.9, 1.6), (72.4, 0.8)]);
    let baichuan = table("Baichuan2-13B-Chat", [(93.9, 0.4), (48.8, 20.5), (90.2, 0.6), (88.2, 3.5), (70.7, 0.8)]);
    let mut text = String::new();
    for t in [&gpt, &baichuan] {
        text.push_str(&render_report(&t.to_report::<f64>().unwrap(), ReportFormat::Text));
    }
    check_golden("report.txt", &text);
}

#[test]
fn json_report_matches_golden() {
    let t = table("GPT3.5-Turbo", [(96.7, 0.0), (60.0, 3.3), (95.9, 0.6), (93.9, 1.6), (72.4, 0.8)]);
    check_golden("report.json", &render_report(&t.to_report::<f64>().unwrap(), ReportFormat::Json));
}
