//! Reference engine: every implicit arc is enumerated through the rank predicate.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{DijkstraResult, Direction, Gate, Objective, ResidualView, SearchSpec, SOURCE};
use crate::error::Result;
use crate::weight::{Ordered, Weight};

pub fn dijkstra_explicit<W: Weight, O: Objective<W> + ?Sized>(
    view: &ResidualView<W>,
    spec: &SearchSpec<W>,
    obj: &mut O,
) -> Result<DijkstraResult<W>> {
    let g = view.graph;
    let (na, nb) = (view.a_ids.len(), view.b_ids.len());
    let a_rank: Vec<i64> = view.a_ids.iter().map(|&a| g.a_rank(a)).collect();
    let b_rank: Vec<i64> = view.b_ids.iter().map(|&b| g.b_rank(b)).collect();
    let mut res = DijkstraResult::<W>::new(na, nb);
    let mut tent_a = vec![W::INF; na];
    let mut tent_b = vec![W::INF; nb];
    let mut done_a = vec![false; na];
    let mut done_b = vec![false; nb];
    let mut heap: BinaryHeap<Reverse<(Ordered<W>, Gate)>> = BinaryHeap::new();

    for &(gate, w) in &spec.seeds {
        let Some(l) = view.local(gate) else { continue };
        let slot = match l {
            Gate::A(i) => (&mut tent_a[i], &mut res.a_pred[i]),
            Gate::B(j) => (&mut tent_b[j], &mut res.b_pred[j]),
        };
        if w.total_cmp(slot.0).is_lt() {
            *slot.0 = w;
            *slot.1 = SOURCE;
            heap.push(Reverse((Ordered(w), l)));
        }
    }

    while let Some(Reverse((Ordered(lab), l))) = heap.pop() {
        let (done, tent) = match l {
            Gate::A(i) => (done_a[i], tent_a[i]),
            Gate::B(j) => (done_b[j], tent_b[j]),
        };
        if done || lab.total_cmp(&tent).is_gt() {
            continue;
        }
        if spec.early {
            if let Some(lim) = res.limit(spec.bound) {
                if lab.total_cmp(&lim).is_gt() {
                    break;
                }
            }
        }
        res.settled += 1;
        match l {
            Gate::A(i) => {
                done_a[i] = true;
                res.a_label[i] = lab;
            }
            Gate::B(j) => {
                done_b[j] = true;
                res.b_label[j] = lab;
            }
        }
        res.offer(obj, view.global(l), lab);

        match (view.direction, l) {
            (Direction::Forward, Gate::B(j)) => {
                let b = view.b_ids[j];
                let mate = view.matching.mate_b[b];
                let end = a_rank.partition_point(|&r| r < b_rank[j]);
                for i in 0..end {
                    let a = view.a_ids[i];
                    if done_a[i] || mate == Some(a) {
                        continue;
                    }
                    res.arcs_scanned += 1;
                    let v = lab + view.arc_weight(a, b)?;
                    if v.total_cmp(&tent_a[i]).is_lt() {
                        tent_a[i] = v;
                        res.a_pred[i] = j as u32;
                        heap.push(Reverse((Ordered(v), Gate::A(i))));
                    }
                }
            }
            (Direction::Forward, Gate::A(i)) => {
                let a = view.a_ids[i];
                if let Some(b) = view.matching.mate_a[a] {
                    if let Some(j) = view.local_b(b) {
                        res.arcs_scanned += 1;
                        let v = lab + view.matched_arc_weight(a, b)?;
                        if !done_b[j] && v.total_cmp(&tent_b[j]).is_lt() {
                            tent_b[j] = v;
                            res.b_pred[j] = i as u32;
                            heap.push(Reverse((Ordered(v), Gate::B(j))));
                        }
                    }
                }
            }
            (Direction::Reversed, Gate::A(i)) => {
                let a = view.a_ids[i];
                let mate = view.matching.mate_a[a];
                let start = b_rank.partition_point(|&r| r <= a_rank[i]);
                for j in start..nb {
                    let b = view.b_ids[j];
                    if done_b[j] || mate == Some(b) {
                        continue;
                    }
                    res.arcs_scanned += 1;
                    let v = lab + view.arc_weight(a, b)?;
                    if v.total_cmp(&tent_b[j]).is_lt() {
                        tent_b[j] = v;
                        res.b_pred[j] = i as u32;
                        heap.push(Reverse((Ordered(v), Gate::B(j))));
                    }
                }
            }
            (Direction::Reversed, Gate::B(j)) => {
                let b = view.b_ids[j];
                if let Some(a) = view.matching.mate_b[b] {
                    if let Some(i) = view.local_a(a) {
                        res.arcs_scanned += 1;
                        let v = lab + view.matched_arc_weight(a, b)?;
                        if !done_a[i] && v.total_cmp(&tent_a[i]).is_lt() {
                            tent_a[i] = v;
                            res.a_pred[i] = j as u32;
                            heap.push(Reverse((Ordered(v), Gate::A(i))));
                        }
                    }
                }
            }
        }
    }
    Ok(res)
}
