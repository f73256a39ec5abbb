//! Univariate training-data reconstruction from a network's margin structure.
//!
//! A univariate network near a KKT point either crosses `±m` with nonzero slope
//! or stays flat on the margin over whole linear pieces. Around every window
//! of three consecutive breakpoints whose two pieces are both non-flat, one of
//! the (at most four) margin crossings is a training point; when two flat
//! pieces alternate around a non-flat one, one of the two inner breakpoints
//! is. Collecting these candidates yields a finite set in which at least a
//! quarter of the points are training points.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kkt::KktReport;
use crate::model::{LabeledDataset, NetworkParams, PiecewiseLinear};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    /// A piece is flat when `|slope| <= flat_rel · median |slope|` over all pieces.
    pub flat_rel: f64,
    /// A flat piece lies on the margin when `||value| − m| <= margin_rel · m`.
    pub margin_rel: f64,
    /// Candidates closer than `merge_rel · breakpoint range` are merged.
    pub merge_rel: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            flat_rel: 1e-6,
            margin_rel: 1e-3,
            merge_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Resolved {
    flat: f64,
    margin: f64,
    merge: f64,
}

impl ToleranceConfig {
    fn resolve(&self, pl: &PiecewiseLinear, m: f64) -> Resolved {
        let mut slopes: Vec<f64> = pl.segments().iter().map(|s| s.slope.abs()).collect();
        slopes.sort_by(f64::total_cmp);
        let median = if slopes.len() % 2 == 1 {
            slopes[slopes.len() / 2]
        } else {
            0.5 * (slopes[slopes.len() / 2 - 1] + slopes[slopes.len() / 2])
        };
        Resolved {
            flat: self.flat_rel * median,
            margin: self.margin_rel * m,
            merge: self.merge_rel * pl.range(),
        }
    }
}

/// Which margin line a crossing lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginSide {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub x: f64,
    pub side: MarginSide,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalAnalysis {
    pub left: f64,
    pub right: f64,
    pub slope: f64,
    pub intercept: f64,
    pub is_on_margin: bool,
    pub crossings: Vec<Crossing>,
}

fn check_margin(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("margin must be positive, got {m}")))
    }
}

/// Recovers the single training point of a one-neuron univariate network
/// from the margin value: the unique `x` on the neuron's active side with
/// `|Φ(x)| = m`.
pub fn recover_single(net: &NetworkParams, m: f64) -> Result<f64> {
    if net.input_dim() != 1 {
        return Err(Error::WrongDimension(net.input_dim()));
    }
    if net.width() != 1 {
        return Err(Error::invalid(format!(
            "single-point recovery needs width 1, got {}",
            net.width()
        )));
    }
    check_margin(m)?;
    let (w, b, v) = (net.w()[[0, 0]], net.b()[0], net.v()[0]);
    if v == 0.0 || w == 0.0 {
        return Err(Error::DegenerateNetwork("single neuron has a zero weight".into()));
    }
    Ok((m / v.abs() - b) / w)
}

fn analyze_resolved(pl: &PiecewiseLinear, m: f64, tol: Resolved) -> Vec<IntervalAnalysis> {
    pl.segments()
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let (left, right) = pl.bounds(s);
            let probe = match (left.is_finite(), right.is_finite()) {
                (true, true) => 0.5 * (left + right),
                (true, false) => left,
                (false, true) => right,
                (false, false) => 0.0,
            };
            let value = seg.eval(probe);
            let is_on_margin = seg.slope.abs() <= tol.flat && (value.abs() - m).abs() <= tol.margin;
            let mut crossings = Vec::new();
            if !is_on_margin && seg.slope != 0.0 {
                for (level, side) in [(m, MarginSide::Upper), (-m, MarginSide::Lower)] {
                    let x = (level - seg.intercept) / seg.slope;
                    // Endpoint crossings may round just outside the piece.
                    if x >= left - tol.merge && x <= right + tol.merge {
                        crossings.push(Crossing {
                            x: x.clamp(left, right),
                            side,
                        });
                    }
                }
                crossings.sort_by(|a, b| a.x.total_cmp(&b.x));
            }
            IntervalAnalysis {
                left,
                right,
                slope: seg.slope,
                intercept: seg.intercept,
                is_on_margin,
                crossings,
            }
        })
        .collect()
}

/// Per-piece margin crossings and flat-on-margin flags.
pub fn analyze_intervals(pl: &PiecewiseLinear, m: f64, tol: &ToleranceConfig) -> Result<Vec<IntervalAnalysis>> {
    check_margin(m)?;
    Ok(analyze_resolved(pl, m, tol.resolve(pl, m)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Crossing,
    FlatBoundary,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Crossing => "crossing",
            Provenance::FlatBoundary => "flat-boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub x: f64,
    pub provenance: Provenance,
}

/// Log entry for one breakpoint window `(x, y, z)` that contributed candidates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    /// Index of the window's first breakpoint.
    pub start: usize,
    pub rule: Provenance,
    /// Distinct points added by this window.
    pub added: usize,
    /// For flat-boundary windows: whether the middle piece `[y, z]` was itself
    /// flat on the margin, i.e. the alternating-flat premise did not hold.
    pub middle_flat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSet {
    pub points: Vec<Candidate>,
    /// Fewer than three breakpoints: no window exists.
    pub degenerate: bool,
    pub guaranteed_fraction: f64,
    pub windows: Vec<WindowRecord>,
}

impl CandidateSet {
    pub const GUARANTEED_FRACTION: f64 = 0.25;

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|c| c.x).collect()
    }

    /// Largest number of margin points contributed by a single non-flat window.
    pub fn max_crossing_window(&self) -> usize {
        self.windows
            .iter()
            .filter(|w| w.rule == Provenance::Crossing)
            .map(|w| w.added)
            .max()
            .unwrap_or(0)
    }

    /// Flat-boundary windows where the listing's condition held but the
    /// middle piece was also flat.
    pub fn premise_mismatches(&self) -> Vec<usize> {
        self.windows.iter().filter(|w| w.middle_flat).map(|w| w.start).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,provenance\n");
        for c in &self.points {
            let _ = writeln!(out, "{},{}", c.x, c.provenance.as_str());
        }
        out
    }

    /// Fraction of candidates within `radius` of some true point.
    pub fn matched_fraction(&self, truth: &[f64], radius: f64) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let hits = self
            .points
            .iter()
            .filter(|c| truth.iter().any(|t| (t - c.x).abs() <= radius))
            .count();
        hits as f64 / self.points.len() as f64
    }
}

fn dedup_window(mut xs: Vec<f64>, radius: f64) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= radius);
    xs
}

/// Candidate set of the breakpoint-window algorithm.
pub fn build_candidate_set(pl: &PiecewiseLinear, m: f64, tol: &ToleranceConfig) -> Result<CandidateSet> {
    check_margin(m)?;
    let bps = pl.breakpoints();
    if bps.len() < 3 {
        return Ok(CandidateSet {
            points: Vec::new(),
            degenerate: true,
            guaranteed_fraction: CandidateSet::GUARANTEED_FRACTION,
            windows: Vec::new(),
        });
    }
    let res = tol.resolve(pl, m);
    let pieces = analyze_resolved(pl, m, res);
    // Piece [bps[i], bps[i+1]] is segment i + 1.
    let piece = |i: usize| &pieces[i + 1];

    let mut raw: Vec<Candidate> = Vec::new();
    let mut windows = Vec::new();
    for i in 0..bps.len() - 2 {
        let (xy, yz) = (piece(i), piece(i + 1));
        if !xy.is_on_margin && !yz.is_on_margin {
            let xs: Vec<f64> = xy.crossings.iter().chain(&yz.crossings).map(|c| c.x).collect();
            let xs = dedup_window(xs, res.merge);
            if !xs.is_empty() {
                windows.push(WindowRecord {
                    start: i,
                    rule: Provenance::Crossing,
                    added: xs.len(),
                    middle_flat: false,
                });
            }
            raw.extend(xs.into_iter().map(|x| Candidate {
                x,
                provenance: Provenance::Crossing,
            }));
        }
        if xy.is_on_margin && i + 3 < bps.len() && piece(i + 2).is_on_margin {
            windows.push(WindowRecord {
                start: i,
                rule: Provenance::FlatBoundary,
                added: 2,
                middle_flat: yz.is_on_margin,
            });
            for x in [bps[i + 1], bps[i + 2]] {
                raw.push(Candidate {
                    x,
                    provenance: Provenance::FlatBoundary,
                });
            }
        }
    }

    raw.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut points: Vec<Candidate> = Vec::with_capacity(raw.len());
    for c in raw {
        match points.last_mut() {
            Some(last) if c.x - last.x <= res.merge => {
                // Keep a crossing as the representative so its |Φ| = m property survives.
                if last.provenance == Provenance::FlatBoundary && c.provenance == Provenance::Crossing {
                    *last = c;
                }
            }
            _ => points.push(c),
        }
    }
    Ok(CandidateSet {
        points,
        degenerate: false,
        guaranteed_fraction: CandidateSet::GUARANTEED_FRACTION,
        windows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCount {
    pub left: f64,
    pub right: f64,
    pub breakpoints: usize,
}

/// Structural checks on the breakpoints between support points and the total
/// number of margin crossings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaAudit {
    pub gaps: Vec<GapCount>,
    /// Gaps between adjacent support points holding more than two breakpoints.
    pub gap_violations: Vec<usize>,
    pub total_crossings: usize,
    pub support_points: usize,
    /// Whether some piece is flat on the margin (the crossing bound assumes none is).
    pub has_flat_margin_piece: bool,
    /// `total_crossings > 6 · support_points` on a network with no flat margin piece.
    pub crossing_violation: bool,
}

impl LemmaAudit {
    pub fn flagged(&self) -> bool {
        !self.gap_violations.is_empty() || self.crossing_violation
    }
}

pub fn interval_lemma_audit(
    pl: &PiecewiseLinear,
    data: &LabeledDataset,
    report: &KktReport,
    tol: &ToleranceConfig,
) -> Result<LemmaAudit> {
    if data.dim() != 1 {
        return Err(Error::WrongDimension(data.dim()));
    }
    let m = report.margin_m;
    check_margin(m)?;
    let mut xs: Vec<f64> = report.support_indices.iter().map(|&i| data.point(i)[0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let gaps: Vec<GapCount> = xs
        .windows(2)
        .map(|w| GapCount {
            left: w[0],
            right: w[1],
            breakpoints: pl.breakpoints().iter().filter(|&&b| w[0] <= b && b <= w[1]).count(),
        })
        .collect();
    let gap_violations = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| g.breakpoints > 2)
        .map(|(i, _)| i)
        .collect();

    let res = tol.resolve(pl, m);
    let pieces = analyze_resolved(pl, m, res);
    let has_flat = pieces.iter().any(|p| p.is_on_margin);
    let mut crossings: Vec<f64> = pieces.iter().flat_map(|p| p.crossings.iter().map(|c| c.x)).collect();
    crossings = dedup_window(crossings, res.merge);
    let total = crossings.len();
    Ok(LemmaAudit {
        gaps,
        gap_violations,
        total_crossings: total,
        support_points: xs.len(),
        has_flat_margin_piece: has_flat,
        crossing_violation: !has_flat && total > 6 * xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Neuron, Segment};

    fn seg(slope: f64, intercept: f64) -> Segment {
        Segment { slope, intercept }
    }

    fn single(w: f64, b: f64, v: f64) -> NetworkParams {
        NetworkParams::from_neurons(&[Neuron::relu(vec![w], b, v)]).unwrap()
    }

    #[test]
    fn recover_single_examples() {
        assert_eq!(recover_single(&single(1.0, 0.0, 1.0), 1.0).unwrap(), 1.0);
        assert_eq!(recover_single(&single(1.0, -3.0, -2.0), 4.0).unwrap(), 5.0);
        assert_eq!(recover_single(&single(-1.0, 0.0, 1.0), 2.0).unwrap(), -2.0);
    }

    #[test]
    fn recover_single_rejects_degenerate() {
        assert!(matches!(
            recover_single(&single(1.0, 0.0, 0.0), 1.0),
            Err(Error::DegenerateNetwork(_))
        ));
        assert!(matches!(
            recover_single(&single(0.0, 1.0, 1.0), 1.0),
            Err(Error::DegenerateNetwork(_))
        ));
        assert!(recover_single(&single(1.0, 0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn flat_piece_on_margin() {
        // Constant m on [0, 1], ramps outside.
        let pl = PiecewiseLinear::new(vec![0.0, 1.0], vec![seg(1.0, 1.0), seg(0.0, 1.0), seg(-1.0, 2.0)]).unwrap();
        let pieces = analyze_intervals(&pl, 1.0, &ToleranceConfig::default()).unwrap();
        assert!(pieces[1].is_on_margin);
        assert!(pieces[1].crossings.is_empty());
    }

    #[test]
    fn single_sided_crossing() {
        let pl = PiecewiseLinear::new(vec![0.0, 3.0], vec![seg(0.0, 0.0), seg(2.0, 0.0), seg(0.0, 6.0)]).unwrap();
        let pieces = analyze_intervals(&pl, 2.0, &ToleranceConfig::default()).unwrap();
        let xs: Vec<f64> = pieces[1].crossings.iter().map(|c| c.x).collect();
        assert_eq!(xs, vec![1.0]);
        assert_eq!(pieces[1].crossings[0].side, MarginSide::Upper);
    }

    #[test]
    fn two_sided_crossings() {
        let pl = PiecewiseLinear::new(vec![-3.0, 3.0], vec![seg(0.0, -3.0), seg(1.0, 0.0), seg(0.0, 3.0)]).unwrap();
        let pieces = analyze_intervals(&pl, 2.0, &ToleranceConfig::default()).unwrap();
        let xs: Vec<f64> = pieces[1].crossings.iter().map(|c| c.x).collect();
        assert_eq!(xs, vec![-2.0, 2.0]);
    }

    #[test]
    fn too_few_breakpoints_is_degenerate() {
        let pl = PiecewiseLinear::new(vec![], vec![seg(0.0, 0.0)]).unwrap();
        let set = build_candidate_set(&pl, 1.0, &ToleranceConfig::default()).unwrap();
        assert!(set.degenerate);
        assert!(set.points.is_empty());
    }

    #[test]
    fn alternating_flat_pieces_add_inner_breakpoints() {
        // Flat at m on [0,1], falls to -m on [1,2], flat at -m on [2,3].
        let pl = PiecewiseLinear::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![
                seg(1.0, 1.0),
                seg(0.0, 1.0),
                seg(-2.0, 3.0),
                seg(0.0, -1.0),
                seg(1.0, -4.0),
            ],
        )
        .unwrap();
        let set = build_candidate_set(&pl, 1.0, &ToleranceConfig::default()).unwrap();
        let flat: Vec<f64> = set
            .points
            .iter()
            .filter(|c| c.provenance == Provenance::FlatBoundary)
            .map(|c| c.x)
            .collect();
        assert_eq!(flat, vec![1.0, 2.0]);
        assert!(set.windows.iter().any(|w| w.rule == Provenance::FlatBoundary));
        assert!(set.premise_mismatches().is_empty());
    }

    #[test]
    fn csv_export() {
        let set = CandidateSet {
            points: vec![
                Candidate {
                    x: -0.5,
                    provenance: Provenance::Crossing,
                },
                Candidate {
                    x: 1.25,
                    provenance: Provenance::FlatBoundary,
                },
            ],
            degenerate: false,
            guaranteed_fraction: 0.25,
            windows: vec![],
        };
        assert_eq!(set.to_csv(), "x,provenance\n-0.5,crossing\n1.25,flat-boundary\n");
        assert_eq!(set.matched_fraction(&[1.2505], 1e-3), 0.5);
    }
}
