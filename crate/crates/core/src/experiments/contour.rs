//! Level-set extraction by marching squares.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::grid::GridField;

pub type Polyline = Vec<(f64, f64)>;

/// Grid edge between node `(i, j)` and its right (`horizontal`) or upper
/// neighbour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Edge {
    i: usize,
    j: usize,
    horizontal: bool,
}

/// Polylines along `field == level`. A node exactly at `level` counts as
/// above it. Closed loops repeat their first point at the end.
pub fn boundary_extract(field: &GridField, level: f64) -> Vec<Polyline> {
    let spec = *field.spec();
    let r = spec.resolution;
    let above = |i: usize, j: usize| field.at(i, j) >= level;

    let point = |e: Edge| -> (f64, f64) {
        let (i2, j2) = if e.horizontal {
            (e.i, e.j + 1)
        } else {
            (e.i + 1, e.j)
        };
        let (a, b) = (field.at(e.i, e.j), field.at(i2, j2));
        let t = (level - a) / (b - a);
        let (x0, y0) = (spec.x(e.j), spec.y(e.i));
        let (x1, y1) = (spec.x(j2), spec.y(i2));
        (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..r - 1 {
        for j in 0..r - 1 {
            // Corners counter-clockwise from the lower left; edge k joins
            // corner k and corner k+1.
            let corners = [
                above(i, j),
                above(i, j + 1),
                above(i + 1, j + 1),
                above(i + 1, j),
            ];
            let edges = [
                Edge {
                    i,
                    j,
                    horizontal: true,
                },
                Edge {
                    i,
                    j: j + 1,
                    horizontal: false,
                },
                Edge {
                    i: i + 1,
                    j,
                    horizontal: true,
                },
                Edge {
                    i,
                    j,
                    horizontal: false,
                },
            ];
            let crossing: Vec<usize> = (0..4)
                .filter(|&k| corners[k] != corners[(k + 1) % 4])
                .collect();
            match crossing.len() {
                2 => segments.push((edges[crossing[0]], edges[crossing[1]])),
                4 => {
                    let centre = (field.at(i, j)
                        + field.at(i, j + 1)
                        + field.at(i + 1, j + 1)
                        + field.at(i + 1, j))
                        / 4.0;
                    // Join the crossings around the corners that disagree
                    // with the centre, isolating them.
                    if (centre >= level) == corners[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }

    let mut adjacency: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(s);
        adjacency.entry(*b).or_default().push(s);
    }

    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start: Edge, used: &mut Vec<bool>| -> Polyline {
        let mut line = vec![point(start)];
        let mut at = start;
        while let Some(&s) = adjacency[&at].iter().find(|&&s| !used[s]) {
            used[s] = true;
            let (a, b) = segments[s];
            at = if a == at { b } else { a };
            line.push(point(at));
        }
        line
    };
    // Open chains start at edges touched by a single segment.
    let ends: Vec<Edge> = adjacency
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(e, _)| *e)
        .collect();
    for e in ends {
        if !used[adjacency[&e][0]] {
            lines.push(walk(e, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            lines.push(walk(segments[s].0, &mut used));
        }
    }
    lines
}

/// CSV with header `polyline,x0,x1`.
pub fn polylines_to_csv(lines: &[Polyline]) -> String {
    let mut out = String::from("polyline,x0,x1\n");
    for (k, line) in lines.iter().enumerate() {
        for (x0, x1) in line {
            let _ = writeln!(out, "{k},{x0},{x1}");
        }
    }
    out
}
