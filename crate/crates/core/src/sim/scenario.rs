//! Scenario scripts: ground-truth human activity, gaze and engagement
//! labels over a fixed horizon.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::events::{EventKind, Gaze, SituationEvent};
use crate::llm::HumanSituation;
use crate::validation::Violation;

/// Gap or overlap below this is treated as a shared boundary.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngageLabel {
    NotReady,
    OkToEngage,
    Ready,
}

impl EngageLabel {
    /// Speaking inside this label counts as a success.
    pub fn engageable(self) -> bool {
        !matches!(self, Self::NotReady)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NotReady => "not-ready",
            Self::OkToEngage => "ok-to-engage",
            Self::Ready => "ready",
        }
    }
}

impl fmt::Display for EngageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySegment {
    pub from_s: f64,
    pub to_s: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub from_s: f64,
    pub to_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSegment {
    pub from_s: f64,
    pub to_s: f64,
    pub label: EngageLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub id: String,
    pub duration_s: f64,
    pub activity: Vec<ActivitySegment>,
    #[serde(default)]
    pub gaze_toward: Vec<Span>,
    pub labels: Vec<LabelSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_departs_at_s: Option<f64>,
    /// Per-action duration overrides in seconds.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub durations: BTreeMap<String, f64>,
}

/// Parses and validates a scenario file's text.
pub fn parse_scenario(source: &str) -> Result<ScenarioScript, Vec<Violation>> {
    let script: ScenarioScript =
        toml::from_str(source).map_err(|e| vec![Violation::error("scenario", e.to_string().trim_end())])?;
    let report = script.validate();
    if report.iter().any(Violation::is_error) {
        Err(report)
    } else {
        Ok(script)
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioScript, Vec<Violation>> {
    let file = path.display().to_string();
    let source = std::fs::read_to_string(path)
        .map_err(|e| vec![Violation::error("scenario", e.to_string()).in_file(&file)])?;
    parse_scenario(&source).map_err(|report| report.into_iter().map(|v| v.in_file(&file)).collect())
}

impl ScenarioScript {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        let d = self.duration_s;
        if self.id.trim().is_empty() {
            report.push(Violation::error("id", "scenario id is empty"));
        }
        if !(d.is_finite() && d > 0.0) {
            report.push(Violation::error("duration_s", format!("must be positive, got {d}")));
            return report;
        }

        let activity: Vec<_> = self.activity.iter().map(|s| (s.from_s, s.to_s)).collect();
        check_tiling("activity", &activity, d, &mut report);
        for (i, seg) in self.activity.iter().enumerate() {
            if seg.text.trim().is_empty() {
                report.push(Violation::error(format!("activity[{i}].text"), "activity text is empty"));
            }
        }
        let labels: Vec<_> = self.labels.iter().map(|s| (s.from_s, s.to_s)).collect();
        check_tiling("labels", &labels, d, &mut report);
        if !self.labels.iter().any(|s| s.label.engageable()) {
            report.push(Violation::error(
                "labels",
                "no segment is labeled ok-to-engage or ready",
            ));
        }

        let mut gaze: Vec<_> = self.gaze_toward.iter().map(|s| (s.from_s, s.to_s)).collect();
        for (i, &(from, to)) in gaze.iter().enumerate() {
            if !(from.is_finite() && to.is_finite() && 0.0 <= from && from < to && to <= d + EPS) {
                report.push(Violation::error(
                    format!("gaze_toward[{i}]"),
                    format!("span [{from}, {to}) is empty or outside [0, {d}]"),
                ));
            }
        }
        gaze.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in gaze.windows(2) {
            if pair[1].0 < pair[0].1 - EPS {
                report.push(Violation::error(
                    "gaze_toward",
                    format!("spans overlap at {}", pair[1].0),
                ));
            }
        }

        if let Some(t) = self.person_departs_at_s {
            if !(t.is_finite() && t > 0.0 && t <= d) {
                report.push(Violation::error(
                    "person_departs_at_s",
                    format!("must lie in (0, {d}], got {t}"),
                ));
            }
        }
        for (name, &s) in &self.durations {
            if !(s.is_finite() && s > 0.0) {
                report.push(Violation::error(format!("durations.{name}"), format!("must be positive, got {s}")));
            }
        }
        report
    }

    fn find<T>(segments: &[T], at: f64, span: impl Fn(&T) -> (f64, f64)) -> Option<&T> {
        segments
            .iter()
            .find(|s| {
                let (from, to) = span(s);
                from <= at && at < to
            })
            .or_else(|| segments.last().filter(|s| at >= span(s).1 - EPS))
    }

    pub fn activity_at(&self, at: f64) -> &str {
        Self::find(&self.activity, at, |s| (s.from_s, s.to_s))
            .map(|s| s.text.as_str())
            .unwrap_or("")
    }

    pub fn looking_at(&self, at: f64) -> bool {
        let horizon = at >= self.duration_s - EPS;
        self.gaze_toward
            .iter()
            .any(|s| s.from_s <= at && (at < s.to_s || (horizon && s.to_s >= self.duration_s - EPS)))
    }

    pub fn label_at(&self, at: f64) -> EngageLabel {
        Self::find(&self.labels, at, |s| (s.from_s, s.to_s))
            .map(|s| s.label)
            .unwrap_or(EngageLabel::NotReady)
    }

    pub fn human_situation_at(&self, at: f64) -> HumanSituation {
        HumanSituation::from_activity(self.activity_at(at), self.looking_at(at))
    }

    /// When the trial stops: the departure time or the scenario horizon.
    pub fn end_s(&self) -> f64 {
        self.person_departs_at_s.unwrap_or(self.duration_s).min(self.duration_s)
    }
}

/// Segments, sorted by start, must cover `[0, duration]` without gaps or
/// overlaps.
fn check_tiling(field: &str, segments: &[(f64, f64)], duration: f64, report: &mut Vec<Violation>) {
    if segments.is_empty() {
        report.push(Violation::error(field, "no segments"));
        return;
    }
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| segments[a].0.total_cmp(&segments[b].0));
    let mut cursor = 0.0;
    for i in order {
        let (from, to) = segments[i];
        if !(from.is_finite() && to.is_finite()) || from >= to {
            report.push(Violation::error(
                format!("{field}[{i}]"),
                format!("segment [{from}, {to}) is empty"),
            ));
            continue;
        }
        if from > cursor + EPS {
            report.push(Violation::error(field, format!("gap between {cursor} and {from}")));
        } else if from < cursor - EPS {
            report.push(Violation::error(field, format!("overlap between {from} and {cursor}")));
        }
        cursor = cursor.max(to);
    }
    if cursor < duration - EPS {
        report.push(Violation::error(field, format!("gap between {cursor} and {duration}")));
    } else if cursor > duration + EPS {
        report.push(Violation::error(field, format!("runs past the duration to {cursor}")));
    }
}

/// Ground-truth event stream. The t=0 activity and gaze events carry the
/// initial state.
pub fn publish_events(script: &ScenarioScript) -> Vec<SituationEvent> {
    let mut events = Vec::new();
    let mut activity: Vec<_> = script.activity.iter().collect();
    activity.sort_by(|a, b| a.from_s.total_cmp(&b.from_s));
    for seg in activity {
        events.push(SituationEvent::new(
            seg.from_s,
            EventKind::ActivityChanged { text: seg.text.clone() },
        ));
    }

    let mut toward: Vec<_> = script.gaze_toward.iter().collect();
    toward.sort_by(|a, b| a.from_s.total_cmp(&b.from_s));
    if !toward.first().is_some_and(|s| s.from_s <= EPS) {
        events.push(SituationEvent::new(0.0, EventKind::GazeChanged { gaze: Gaze::Away }));
    }
    for (i, span) in toward.iter().enumerate() {
        let continued = i > 0 && (toward[i - 1].to_s - span.from_s).abs() <= EPS;
        if !continued {
            events.push(SituationEvent::new(span.from_s, EventKind::GazeChanged { gaze: Gaze::Toward }));
        }
        let resumes = toward.get(i + 1).is_some_and(|n| (n.from_s - span.to_s).abs() <= EPS);
        if span.to_s < script.duration_s - EPS && !resumes {
            events.push(SituationEvent::new(span.to_s, EventKind::GazeChanged { gaze: Gaze::Away }));
        }
    }

    if let Some(t) = script.person_departs_at_s {
        events.push(SituationEvent::new(t, EventKind::PersonDeparted));
    }
    events.sort_by(SituationEvent::queue_order);
    events
}
