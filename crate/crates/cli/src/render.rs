//! Human-readable renderings of reports and graph data.

use ergomap::PiecewiseMap;

use crate::commands::CheckReport;
use crate::ExpandDemo;

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

/// One line per check: name, verdict, key figure.
pub fn check_table(r: &CheckReport) -> String {
    let mut rows: Vec<(String, bool, String)> = Vec::new();
    rows.push((
        "weak covering".into(),
        r.weak_covering.pass,
        match r.weak_covering.max_n {
            Some(n) => format!("N <= {n}"),
            None => "some cell does not cover".into(),
        },
    ));
    let li = &r.large_image;
    rows.push((
        format!("large image (m = {})", li.m),
        li.pass,
        format!(
            "delta = {:.6}, inf |T'| = {:.6}, required {:.6}",
            li.delta, li.observed_inf_derivative, li.required_inf_derivative
        ),
    ));
    let g = &r.derivative_growth;
    rows.push((
        format!("derivative growth (j0 = {})", g.j0),
        g.pass,
        format!("{:.6e} vs {:.6e}", g.lhs, g.rhs),
    ));
    let q = &r.derivative_ratio;
    rows.push((
        "derivative ratio".into(),
        q.pass,
        format!("spread = {:.6}", q.spread),
    ));
    let d = &r.density_bounds;
    rows.push((
        "density bounds".into(),
        d.pass,
        format!("{:.6} <= phi <= {:.6}, gamma = {}", d.min, d.max, d.gamma),
    ));
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut s = format!(
        "family {} on [{}, {}]\n",
        r.family.as_deref().unwrap_or("(unnamed)"),
        r.interval.0,
        r.interval.1
    );
    for (name, pass, detail) in rows {
        s.push_str(&format!("{name:<width$}  {}  {detail}\n", verdict(pass)));
    }
    s.push_str(&format!("overall: {}\n", verdict(r.pass)));
    s
}

/// Gnuplot data: one block per branch, blocks separated by a blank line.
pub fn graph_blocks(title: &str, t: &PiecewiseMap, demo: &ExpandDemo, expanded: bool, samples: usize) -> String {
    let mut s = format!("# {title}\n");
    for (k, (b, info)) in t.branches().iter().zip(&demo.branches).enumerate() {
        if k > 0 {
            s.push('\n');
        }
        let (lo, hi) = if expanded { info.expanded_image } else { info.image };
        let case = serde_json::to_value(info.case).expect("case serializes");
        s.push_str(&format!(
            "# branch {} {} image {lo} {hi}\n",
            info.branch,
            case.as_str().unwrap_or("?")
        ));
        for i in 0..samples {
            let x = b.left + (b.right - b.left) * i as f64 / (samples - 1) as f64;
            s.push_str(&format!("{x} {}\n", b.eval(x)));
        }
    }
    s
}
