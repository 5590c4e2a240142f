//! Influence-diagram export in Graphviz DOT form.
//!
//! Each node carries the proportions of uncertainty resolved step by step
//! (as cumulative percentages in the label and a discrete fill level) and,
//! when present, the size ratio of its adjustment tagged against the
//! calibration thresholds. Pie shadings are not drawn; the numbers are
//! emitted losslessly and rendering is left to Graphviz.

use crate::diagnostics::SizeTag;
use crate::error::{Error, Result};
use crate::tol;

/// One diagram node: a label, the resolution gained at each step of the
/// adjustment sequence, and an optional size ratio.
#[derive(Debug, Clone)]
pub struct DiagramNode {
    pub label: String,
    /// Per-step resolution increments, in sequence order; each in [0, 1]
    /// and summing to at most 1.
    pub segments: Vec<f64>,
    pub size_ratio: Option<f64>,
}

/// Directed arc; `reversed` renders the arrowhead at the tail end.
#[derive(Debug, Clone)]
pub struct DiagramArc {
    pub from: String,
    pub to: String,
    pub reversed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct DiagramModel {
    pub nodes: Vec<DiagramNode>,
    pub arcs: Vec<DiagramArc>,
    /// Thresholds used to tag size ratios, `(upper, lower)`.
    pub ratio_thresholds: Option<(f64, f64)>,
}

impl DiagramModel {
    pub fn validate(&self) -> Result<()> {
        for node in &self.nodes {
            let mut total = 0.0;
            for &seg in &node.segments {
                if !(0.0..=1.0 + 1e-9).contains(&seg) {
                    return Err(Error::Diagram(format!(
                        "node `{}` has segment {} outside [0, 1]",
                        node.label, seg
                    )));
                }
                total += seg;
            }
            if total > 1.0 + tol::NUM.max(1e-9) {
                return Err(Error::Diagram(format!(
                    "node `{}` segments sum to {} > 1",
                    node.label, total
                )));
            }
        }
        Ok(())
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", escape(s))
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn cumulative_percent_label(segments: &[f64]) -> String {
    let mut total = 0.0;
    let parts: Vec<String> = segments
        .iter()
        .map(|seg| {
            total += seg;
            format!("{:.0}", (total * 100.0).round())
        })
        .collect();
    parts.join("/")
}

fn fill_for(total: f64) -> String {
    // Nine discrete fill levels stand in for pie shading depth.
    let level = ((total * 9.0).ceil() as i64).clamp(1, 9);
    format!("/blues9/{level}")
}

/// Emit the model as DOT text. Output is a pure function of the model:
/// stable ordering, fixed formatting, byte-identical across runs.
pub fn diagram_export(model: &DiagramModel) -> Result<String> {
    model.validate()?;
    let (upper, lower) = model
        .ratio_thresholds
        .unwrap_or((tol::RATIO_UPPER, tol::RATIO_LOWER));
    let mut out = String::new();
    out.push_str("digraph belief_adjustment {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=ellipse, style=filled, fontname=\"Helvetica\"];\n");
    for node in &model.nodes {
        let mut label_lines = vec![node.label.clone()];
        if !node.segments.is_empty() {
            label_lines.push(format!(
                "resolved {}%",
                cumulative_percent_label(&node.segments)
            ));
        }
        if let Some(ratio) = node.size_ratio {
            let tag = if ratio > upper {
                SizeTag::LargerThanExpected
            } else if ratio < lower {
                SizeTag::SmallerThanExpected
            } else {
                SizeTag::Consistent
            };
            label_lines.push(format!("size {:.2} {}", ratio, tag.as_str()));
        }
        let fill = if node.segments.is_empty() {
            "/greys9/2".to_string()
        } else {
            fill_for(node.segments.iter().sum())
        };
        // Lines are escaped individually, then joined with the DOT line
        // break sequence so it survives unescaped.
        let label = label_lines
            .iter()
            .map(|line| escape(line))
            .collect::<Vec<_>>()
            .join("\\n");
        out.push_str(&format!(
            "  {} [label=\"{}\", fillcolor=\"{}\"];\n",
            quote(&node.label),
            label,
            fill
        ));
    }
    for arc in &model.arcs {
        if arc.reversed {
            out.push_str(&format!(
                "  {} -> {} [dir=back];\n",
                quote(&arc.from),
                quote(&arc.to)
            ));
        } else {
            out.push_str(&format!("  {} -> {};\n", quote(&arc.from), quote(&arc.to)));
        }
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_is_a_minimal_digraph() {
        let dot = diagram_export(&DiagramModel::default()).unwrap();
        assert!(dot.starts_with("digraph belief_adjustment {"));
        assert!(dot.trim_end().ends_with('}'));
        assert!(!dot.contains("->"));
    }

    #[test]
    fn label_carries_cumulative_percentages() {
        let model = DiagramModel {
            nodes: vec![DiagramNode {
                label: "V".into(),
                segments: vec![0.6, 0.1, 0.05],
                size_ratio: None,
            }],
            arcs: vec![],
            ratio_thresholds: None,
        };
        let dot = diagram_export(&model).unwrap();
        assert!(dot.contains("60/70/75%"), "dot was:\n{dot}");
    }

    #[test]
    fn one_arc_emits_one_edge_statement() {
        let model = DiagramModel {
            nodes: vec![
                DiagramNode {
                    label: "D_S".into(),
                    segments: vec![],
                    size_ratio: Some(1.0),
                },
                DiagramNode {
                    label: "V".into(),
                    segments: vec![0.4],
                    size_ratio: None,
                },
            ],
            arcs: vec![DiagramArc {
                from: "D_S".into(),
                to: "V".into(),
                reversed: false,
            }],
            ratio_thresholds: None,
        };
        let dot = diagram_export(&model).unwrap();
        assert_eq!(dot.matches("->").count(), 1);
        assert!(dot.contains("\"D_S\" -> \"V\";"));
    }

    #[test]
    fn export_is_deterministic() {
        let model = DiagramModel {
            nodes: vec![DiagramNode {
                label: "V".into(),
                segments: vec![0.33, 0.05],
                size_ratio: Some(3.1),
            }],
            arcs: vec![DiagramArc {
                from: "V".into(),
                to: "V".into(),
                reversed: true,
            }],
            ratio_thresholds: None,
        };
        let a = diagram_export(&model).unwrap();
        let b = diagram_export(&model).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("dir=back"));
        assert!(a.contains("larger-than-expected"));
    }

    #[test]
    fn oversized_segments_are_rejected() {
        let model = DiagramModel {
            nodes: vec![DiagramNode {
                label: "V".into(),
                segments: vec![0.8, 0.4],
                size_ratio: None,
            }],
            arcs: vec![],
            ratio_thresholds: None,
        };
        assert!(matches!(diagram_export(&model), Err(Error::Diagram(_))));
    }
}
