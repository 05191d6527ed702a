//! Marching-squares level sets of grid fields.

use std::collections::HashMap;
use std::io::Write;

use crate::error::Result;
use crate::geometry::Vec2;
use crate::grid::ScalarGrid;

/// An ordered polyline; closed curves repeat their first point at the end.
pub type Polyline = Vec<Vec2>;

/// Edge ids: `2 k` joins cell `k` to its right neighbor, `2 k + 1` to the one above.
fn edge_point(grid: &ScalarGrid, edge: usize, level: f64) -> Vec2 {
    let spec = grid.spec();
    let k = edge / 2;
    let (i, j) = spec.coords(k);
    let k2 = if edge.is_multiple_of(2) {
        spec.index(i + 1, j)
    } else {
        spec.index(i, j + 1)
    };
    let (a, b) = (grid.values()[k], grid.values()[k2]);
    let s = ((level - a) / (b - a)).clamp(0.0, 1.0);
    spec.point_at(k) * (1.0 - s) + spec.point_at(k2) * s
}

/// All connected pieces of `{value = level}` over the full grid, outside cells included
/// with their stored values.
pub fn contour(grid: &ScalarGrid, level: f64) -> Vec<Polyline> {
    let spec = *grid.spec();
    let v = grid.values();
    let above = |k: usize| v[k] > level;
    let mut segments: Vec<(usize, usize)> = Vec::new();
    for j in 0..spec.ny.saturating_sub(1) {
        for i in 0..spec.nx.saturating_sub(1) {
            let c = [
                spec.index(i, j),
                spec.index(i + 1, j),
                spec.index(i + 1, j + 1),
                spec.index(i, j + 1),
            ];
            let up = c.map(above);
            // bottom, right, top, left
            let edges = [2 * c[0], 2 * c[1] + 1, 2 * c[3], 2 * c[0] + 1];
            let crossed = [up[0] != up[1], up[1] != up[2], up[3] != up[2], up[0] != up[3]];
            let ids: Vec<usize> = (0..4).filter(|&e| crossed[e]).collect();
            match ids.len() {
                2 => segments.push((edges[ids[0]], edges[ids[1]])),
                4 => {
                    let center = c.iter().map(|&k| v[k]).sum::<f64>() / 4.0 > level;
                    if center == up[0] {
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

    let mut by_edge: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        by_edge.entry(a).or_default().push(s);
        by_edge.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut chains: Vec<Vec<usize>> = Vec::new();

    let walk = |start_seg: usize, start_edge: usize, used: &mut Vec<bool>| -> Vec<usize> {
        let mut chain = vec![start_edge];
        let (mut seg, mut edge) = (start_seg, start_edge);
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            edge = if a == edge { b } else { a };
            chain.push(edge);
            match by_edge[&edge].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        chain
    };

    // open chains start at edges touched by one segment
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let (a, b) = segments[s];
        if by_edge[&a].len() == 1 {
            chains.push(walk(s, a, &mut used));
        } else if by_edge[&b].len() == 1 {
            chains.push(walk(s, b, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            chains.push(walk(s, segments[s].0, &mut used));
        }
    }
    chains
        .into_iter()
        .map(|c| c.into_iter().map(|e| edge_point(grid, e, level)).collect())
        .collect()
}

/// Signed area by the shoelace formula; positive for counterclockwise loops.
pub fn enclosed_area(polyline: &[Vec2]) -> f64 {
    let n = polyline.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (polyline[i], polyline[(i + 1) % n]);
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

/// Writes `x,y` rows of one polyline.
pub fn write_polyline<W: Write>(polyline: &[Vec2], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"])?;
    for p in polyline {
        w.write_record([p.x.to_string(), p.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
