//! Connected-component labeling over binary masks, 8-connectivity,
//! single-pass union-find.

use super::{BinaryMask, BoundingBox};

/// One maximal 8-connected foreground region.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub bbox: BoundingBox,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Label all 8-connected foreground regions, reporting each once with its
/// exact pixel count and minimum enclosing axis-aligned rectangle. Output is
/// ordered by the rectangle's top-left corner (y, then x), with extent and
/// area as final tie-breakers. Labels are distinct but otherwise arbitrary.
pub fn connected_components(m: &BinaryMask) -> Vec<Component> {
    let (w, h) = (m.width() as usize, m.height() as usize);
    let bits = m.bits();
    let mut labels = vec![u32::MAX; w * h];
    let mut sets = DisjointSet::new();

    // First pass: assign provisional labels, merging with the west and the
    // three north neighbors (8-connectivity). Background runs, the common
    // case on motion masks, are skipped in blocks.
    for y in 0..h {
        let row = &bits[y * w..(y + 1) * w];
        if !row.iter().fold(false, |a, &b| a | b) {
            continue; // motion masks are mostly empty rows
        }
        let mut x = 0usize;
        while x < w {
            if !row[x] {
                x += 1;
                continue;
            }
            let i = y * w + x;
            let mut label = u32::MAX;
            let mut consider = |l: u32, sets: &mut DisjointSet| {
                if l == u32::MAX {
                    return;
                }
                if label == u32::MAX {
                    label = l;
                } else {
                    sets.union(label, l);
                }
            };
            if x > 0 {
                consider(labels[i - 1], &mut sets);
            }
            if y > 0 {
                let up = i - w;
                if x > 0 {
                    consider(labels[up - 1], &mut sets);
                }
                consider(labels[up], &mut sets);
                if x < w - 1 {
                    consider(labels[up + 1], &mut sets);
                }
            }
            labels[i] = if label == u32::MAX { sets.make() } else { label };
            x += 1;
        }
    }

    // Second pass: accumulate area and bounds per root.
    #[derive(Clone)]
    struct Acc {
        area: usize,
        min_x: usize,
        min_y: usize,
        max_x: usize,
        max_y: usize,
    }
    let mut accs: Vec<Option<Acc>> = vec![None; sets.parent.len()];
    for y in 0..h {
        let row = &bits[y * w..(y + 1) * w];
        if !row.iter().fold(false, |a, &b| a | b) {
            continue;
        }
        let mut x = 0usize;
        while x < w {
            if !row[x] {
                x += 1;
                continue;
            }
            let i = y * w + x;
            let root = sets.find(labels[i]) as usize;
            match &mut accs[root] {
                Some(acc) => {
                    acc.area += 1;
                    acc.min_x = acc.min_x.min(x);
                    acc.min_y = acc.min_y.min(y);
                    acc.max_x = acc.max_x.max(x);
                    acc.max_y = acc.max_y.max(y);
                }
                slot => {
                    *slot = Some(Acc { area: 1, min_x: x, min_y: y, max_x: x, max_y: y });
                }
            }
            x += 1;
        }
    }

    let mut out: Vec<Component> = accs
        .into_iter()
        .enumerate()
        .filter_map(|(root, acc)| acc.map(|a| (root, a)))
        .map(|(root, a)| Component {
            label: root as u32,
            area: a.area,
            bbox: BoundingBox::new(
                a.min_x as f64,
                a.min_y as f64,
                (a.max_x - a.min_x + 1) as f64,
                (a.max_y - a.min_y + 1) as f64,
            ),
        })
        .collect();
    out.sort_by(|a, b| {
        let ka = (a.bbox.y, a.bbox.x, a.bbox.w, a.bbox.h, a.area);
        let kb = (b.bbox.y, b.bbox.x, b.bbox.w, b.bbox.h, b.area);
        ka.partial_cmp(&kb).expect("finite box coordinates")
    });
    out
}
