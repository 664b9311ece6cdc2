use crate::platform::Platform;

use super::timing::evaluate;
use super::types::{EdgeKind, Schedule, Work};

/// Drop the baseline's program-order chain so independent steps run
/// concurrently, and let consecutive passes on one bank overlap: the next
/// pass converts and tunes while the previous one propagates and detects.
pub fn apply_pipelining(mut schedule: Schedule, enabled: bool) -> Schedule {
    if !enabled {
        return schedule;
    }
    let is_pass: Vec<bool> = schedule.steps.iter().map(|s| s.pass().is_some()).collect();
    for (i, step) in schedule.steps.iter_mut().enumerate() {
        step.deps.retain(|e| e.kind != EdgeKind::Order);
        for e in &mut step.deps {
            if e.kind == EdgeKind::Resource && is_pass[i] && is_pass[e.from as usize] {
                e.overlap = true;
            }
        }
    }
    schedule.opts.pipelining = true;
    schedule
}

/// Let `sharing` bank columns share one DAC set: DAC devices per bank drop by
/// that factor while tuning all MRs takes `sharing` times longer. Only GEMM
/// banks are affected; a factor of 1 returns the schedule unchanged.
pub fn apply_dac_sharing(mut schedule: Schedule, sharing: usize, platform: &Platform) -> Schedule {
    if sharing <= 1 {
        return schedule;
    }
    for step in &mut schedule.steps {
        if let Work::Pass(p) = &mut step.work {
            if p.stage.is_gemm() {
                p.activity.dac_sharing = sharing as u32;
                p.phases = evaluate(&p.activity, platform).0;
            }
        }
    }
    schedule.dac_sharing = sharing;
    schedule.opts.dac_sharing = true;
    schedule
}
