use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::toy_world::Variant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub lambda: f64,
    /// Dynamics variant behind the guiding classifier's labels, if any.
    pub train_variant: Option<Variant>,
    pub eval_variant: Variant,
    pub dynamic_degree: f64,
    /// Mean logit of the condition's classifier on the clean samples.
    pub mean_logit: f64,
    pub logit_se: f64,
    /// Positive rate of video-prior labels regenerated on the samples.
    pub positive_rate: f64,
    pub samples: usize,
}

impl ReportRow {
    /// Series name: the condition plus its train/eval variants.
    pub fn series(&self) -> String {
        match self.train_variant {
            Some(t) => format!("{} {}->{}", self.condition, t, self.eval_variant),
            None => format!("{} ->{}", self.condition, self.eval_variant),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub motion_threshold: f64,
    pub rows: Vec<ReportRow>,
}

impl Report {
    /// Rows of one series in ascending lambda.
    pub fn series(
        &self,
        condition: &str,
        train: Option<Variant>,
        eval: Variant,
    ) -> Vec<&ReportRow> {
        let mut rows: Vec<&ReportRow> = self
            .rows
            .iter()
            .filter(|r| r.condition == condition && r.train_variant == train && r.eval_variant == eval)
            .collect();
        rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        rows
    }

    pub fn row(
        &self,
        condition: &str,
        train: Option<Variant>,
        eval: Variant,
        lambda: f64,
    ) -> Option<&ReportRow> {
        self.series(condition, train, eval)
            .into_iter()
            .find(|r| r.lambda == lambda)
    }

    /// The guided row (lambda > 0) with the highest dynamic degree; ties go
    /// to the smaller lambda.
    pub fn best_guided(
        &self,
        condition: &str,
        train: Option<Variant>,
        eval: Variant,
    ) -> Option<&ReportRow> {
        self.series(condition, train, eval)
            .into_iter()
            .filter(|r| r.lambda > 0.0)
            .fold(None, |best: Option<&ReportRow>, r| match best {
                Some(b) if b.dynamic_degree >= r.dynamic_degree => Some(b),
                _ => Some(r),
            })
    }

    fn series_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            let s = r.series();
            if !names.contains(&s) {
                names.push(s);
            }
        }
        names
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| EvalError::Config(format!("csv: {e}"));
        w.write_record([
            "condition",
            "lambda",
            "train_variant",
            "eval_variant",
            "dynamic_degree",
            "mean_logit",
            "logit_se",
            "positive_rate",
            "samples",
        ])
        .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.condition.clone(),
                fmt_lambda(r.lambda),
                r.train_variant.map(|v| v.to_string()).unwrap_or_default(),
                r.eval_variant.to_string(),
                format!("{:.6}", r.dynamic_degree),
                format!("{:.6}", r.mean_logit),
                format!("{:.6}", r.logit_se),
                format!("{:.6}", r.positive_rate),
                r.samples.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| EvalError::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let header = [
            "Method",
            "λ",
            "Train",
            "Eval",
            "Dynamic Degree",
            "Mean logit (± se)",
            "Positive rate",
            "Samples",
        ];
        let body: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.condition.clone(),
                    fmt_lambda(r.lambda),
                    r.train_variant.map(|v| v.to_string()).unwrap_or("-".into()),
                    r.eval_variant.to_string(),
                    format!("{:.4}", r.dynamic_degree),
                    format!("{:.3} ± {:.3}", r.mean_logit, r.logit_se),
                    format!("{:.4}", r.positive_rate),
                    r.samples.to_string(),
                ]
            })
            .collect();
        let width: Vec<usize> = (0..header.len())
            .map(|c| {
                body.iter()
                    .map(|row| row[c].chars().count())
                    .chain([header[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: Vec<&str>| -> String {
            let padded: Vec<String> = cells
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let mut out = format!("# {}\n\n", self.title);
        out += &format!(
            "Dynamic degree: fraction of generated videos with mean flow above {} px/frame.\n\n",
            self.motion_threshold
        );
        out += &line(header.to_vec());
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        out += &line(rule.iter().map(String::as_str).collect());
        for row in &body {
            out += &line(row.iter().map(String::as_str).collect());
        }
        out
    }

    /// Dynamic degree against lambda, one polyline per series. Lambdas are
    /// placed at equal spacing in ascending order.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const L: f64 = 64.0;
        const R: f64 = 190.0;
        const T: f64 = 36.0;
        const B: f64 = 56.0;
        const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut lambdas: Vec<f64> = self.rows.iter().map(|r| r.lambda).collect();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        let y_max = self
            .rows
            .iter()
            .map(|r| r.dynamic_degree)
            .fold(0.0f64, f64::max)
            .max(0.05);
        let y_max = (y_max * 10.0).ceil() / 10.0;
        let pw = W - L - R;
        let ph = H - T - B;
        let xs = |i: usize| {
            if lambdas.len() == 1 {
                L + pw / 2.0
            } else {
                L + pw * i as f64 / (lambdas.len() - 1) as f64
            }
        };
        let ys = |v: f64| T + ph * (1.0 - v / y_max);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            L + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<path d="M{L:.1},{T:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
            T + ph,
            L + pw
        );
        for k in 0..=5 {
            let v = y_max * k as f64 / 5.0;
            let y = ys(v);
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
                L,
                L + pw,
                L - 6.0,
                y + 4.0
            );
        }
        for (i, l) in lambdas.iter().enumerate() {
            let x = xs(i);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                T + ph,
                T + ph + 5.0,
                T + ph + 19.0,
                fmt_lambda(*l)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">guidance weight λ</text>"#,
            L + pw / 2.0,
            H - 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">dynamic degree</text>"#,
            T + ph / 2.0,
            T + ph / 2.0
        );
        for (k, name) in self.series_names().iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let mut rows: Vec<&ReportRow> = self.rows.iter().filter(|r| &r.series() == name).collect();
            rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| {
                    let i = lambdas.iter().position(|l| *l == r.lambda).expect("collected above");
                    (xs(i), ys(r.dynamic_degree))
                })
                .collect();
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for (x, y) in &pts {
                let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
            }
            let ly = T + 10.0 + 18.0 * k as f64;
            let lx = L + pw + 14.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_lambda(l: f64) -> String {
    if l.fract() == 0.0 {
        format!("{l:.0}")
    } else {
        format!("{l}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `results.csv`, `results.md`, `sweep.svg` and `report.json` into
/// `dir`, creating it if needed.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(EvalError::Config("report has no rows".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    let files = [
        ("results.csv", report.to_csv()?),
        ("results.md", report.to_markdown()),
        ("sweep.svg", report.to_svg()),
        ("report.json", json),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| EvalError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))
}
