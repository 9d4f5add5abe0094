//! Blocked anchor x pool sweep shared by every diagnosis statistic.

use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::{dot, Embeddings, RadiusTest, SimilarityKernel};
use crate::exec::Executor;

const ANCHOR_BLOCK: usize = 32;
const POOL_TILE: usize = 256;

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct AnchorStat {
    pub count: u64,
    pub similarity: CompensatedSum,
}

/// What to accumulate per anchor.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SweepSpec {
    pub radius: Option<f64>,
    pub theta: Option<f64>,
}

/// Per-anchor neighbor counts and similarity sums over the whole pool.
///
/// Each anchor visits the pool in index order, so its accumulators see the
/// same sequence of values no matter how anchors are spread over workers.
pub(crate) fn sweep<E: Executor>(
    exec: &E,
    anchors: &Embeddings,
    pool: &Embeddings,
    spec: SweepSpec,
) -> Vec<AnchorStat> {
    let m = anchors.len();
    let n = pool.len();
    let radius = spec.radius.map(RadiusTest::new);
    let kernel = spec.theta.map(SimilarityKernel::new);
    let blocks = exec.map_range(m.div_ceil(ANCHOR_BLOCK), |b| {
        let a0 = b * ANCHOR_BLOCK;
        let a1 = (a0 + ANCHOR_BLOCK).min(m);
        let mut stats = vec![AnchorStat::default(); a1 - a0];
        let mut tile = 0;
        while tile < n {
            let tile_end = (tile + POOL_TILE).min(n);
            for (a, st) in (a0..a1).zip(stats.iter_mut()) {
                let row = anchors.row(a);
                for j in tile..tile_end {
                    let d = dot(row, pool.row(j));
                    if let Some(r) = &radius {
                        st.count += u64::from(r.contains(d));
                    }
                    if let Some(k) = &kernel {
                        let s = k.eval(d);
                        if s > 0.0 {
                            st.similarity.add(s);
                        }
                    }
                }
            }
            tile = tile_end;
        }
        stats
    });
    blocks.into_iter().flatten().collect()
}
