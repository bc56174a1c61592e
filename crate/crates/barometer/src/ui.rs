//! HTML shell for the browser app. The app bundle is served from
//! `/assets/`; the shell only tells it which variable the URL points at.

const HEAD: &str = r#"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<meta name="viewport" content="width=device-width, initial-scale=1">
<title>Growth barometer</title>
<link rel="stylesheet" href="/assets/app.css">
<script type="module" src="/assets/app.js"></script>
</head>
"#;

pub fn shell(variable: Option<u32>) -> String {
    let (attr, fallback) = match variable {
        Some(n) => (
            format!(r#" data-variable="{n}""#),
            format!(
                r#"<a href="/api/statistic/{n}">Variable {n} as JSON</a>, <a href="/api/statistic/{n}/export?format=csv">CSV</a>"#
            ),
        ),
        None => (
            String::new(),
            r#"<a href="/api/groups">Statistics index as JSON</a>"#.to_owned(),
        ),
    };
    format!("{HEAD}<body>\n<main id=\"app\"{attr}>\n<noscript>{fallback}</noscript>\n</main>\n</body>\n</html>\n")
}

pub fn not_found() -> String {
    format!("{HEAD}<body>\n<main id=\"app\" data-not-found=\"true\">\n<h1>Statistic not found</h1>\n<p><a href=\"/\">Back to the index</a></p>\n</main>\n</body>\n</html>\n")
}
