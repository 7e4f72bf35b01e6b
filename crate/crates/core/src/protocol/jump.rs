//! Jumping probabilities: normalisation over success ratios, proportional
//! target sampling and the success/failure adjustments.

use rand::Rng;

use crate::model::{CandidateEntry, NodeId, NodeState};

/// Sets `jump_p = suc / Σ suc`, or `1 / m` for every entry when all ratios
/// are zero.
pub fn jump_probabilities(entries: &mut [CandidateEntry]) {
    if entries.is_empty() {
        return;
    }
    let total: f64 = entries.iter().map(|e| e.suc.max(0.0)).sum();
    if total > 0.0 {
        for e in entries.iter_mut() {
            e.jump_p = e.suc.max(0.0) / total;
        }
    } else {
        let p = 1.0 / entries.len() as f64;
        for e in entries.iter_mut() {
            e.jump_p = p;
        }
    }
}

/// Samples a target proportionally to `jump_p`. FAULTY candidates are
/// skipped and the rest renormalised; `sink` is the last resort when nothing
/// remains.
pub fn choose_jump_target<R: Rng + ?Sized>(
    entries: &[CandidateEntry],
    rng: &mut R,
    sink: Option<NodeId>,
) -> Option<NodeId> {
    choose_jump_target_where(entries, rng, sink, |_| true)
}

/// [`choose_jump_target`] restricted to entries accepted by `admit`.
pub fn choose_jump_target_where<R, F>(
    entries: &[CandidateEntry],
    rng: &mut R,
    sink: Option<NodeId>,
    admit: F,
) -> Option<NodeId>
where
    R: Rng + ?Sized,
    F: Fn(&CandidateEntry) -> bool,
{
    let pool: Vec<&CandidateEntry> = entries
        .iter()
        .filter(|e| e.cached_state != NodeState::Faulty && admit(e))
        .collect();
    if pool.is_empty() {
        return sink;
    }
    let total: f64 = pool.iter().map(|e| e.jump_p.max(0.0)).sum();
    if total <= 0.0 {
        let k = rng.random_range(0..pool.len());
        return Some(pool[k].candidate);
    }
    let mut u = rng.random::<f64>() * total;
    for e in &pool {
        let w = e.jump_p.max(0.0);
        if u < w {
            return Some(e.candidate);
        }
        u -= w;
    }
    pool.iter().rev().find(|e| e.jump_p > 0.0).map(|e| e.candidate)
}

/// Records the outcome of a jump to `target` and renormalises. Returns false
/// when `target` is not in `entries`.
pub fn apply_jump_result(entries: &mut [CandidateEntry], target: NodeId, success: bool) -> bool {
    let Some(entry) = entries.iter_mut().find(|e| e.candidate == target) else {
        return false;
    };
    if success {
        entry.record_success();
    } else {
        entry.record_failure();
    }
    jump_probabilities(entries);
    true
}

/// Upstream adjustment `Suc <- Suc * τ` for the entry leading towards
/// `toward`, followed by renormalisation.
pub fn scale_success(entries: &mut [CandidateEntry], toward: NodeId, tau: f64) -> bool {
    let Some(entry) = entries.iter_mut().find(|e| e.candidate == toward) else {
        return false;
    };
    entry.suc *= tau.clamp(0.0, 1.0);
    jump_probabilities(entries);
    true
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn entry(id: u32, suc: f64) -> CandidateEntry {
        CandidateEntry { suc, ..CandidateEntry::new(NodeId(id)) }
    }

    #[test]
    fn normalises_success_ratios() {
        let mut es = vec![entry(1, 0.75), entry(2, 0.5)];
        jump_probabilities(&mut es);
        assert!((es[0].jump_p - 0.6).abs() < 1e-12);
        assert!((es[1].jump_p - 0.4).abs() < 1e-12);

        let mut one = vec![entry(1, 0.3)];
        jump_probabilities(&mut one);
        assert_eq!(one[0].jump_p, 1.0);

        let mut zero = vec![entry(1, 0.0), entry(2, 0.0), entry(3, 0.0), entry(4, 0.0)];
        jump_probabilities(&mut zero);
        assert!(zero.iter().all(|e| e.jump_p == 0.25));
    }

    #[test]
    fn single_mass_is_deterministic() {
        let mut es = vec![entry(7, 1.0)];
        jump_probabilities(&mut es);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(choose_jump_target(&es, &mut rng, None), Some(NodeId(7)));
        }
    }

    #[test]
    fn sampling_frequency_tracks_probability() {
        let mut es = vec![entry(1, 0.6), entry(2, 0.4)];
        jump_probabilities(&mut es);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| choose_jump_target(&es, &mut rng, None) == Some(NodeId(1)))
            .count();
        let freq = hits as f64 / n as f64;
        assert!((0.59..=0.61).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn faulty_candidates_fall_back_to_sink() {
        let mut es = vec![entry(1, 1.0), entry(2, 1.0)];
        jump_probabilities(&mut es);
        for e in &mut es {
            e.cached_state = NodeState::Faulty;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(choose_jump_target(&es, &mut rng, Some(NodeId(99))), Some(NodeId(99)));
        assert_eq!(choose_jump_target(&es, &mut rng, None), None);
    }

    #[test]
    fn excluded_mass_is_renormalised() {
        let mut es = vec![entry(1, 1.0), entry(2, 1.0), entry(3, 1.0)];
        jump_probabilities(&mut es);
        es[0].cached_state = NodeState::Faulty;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_ne!(choose_jump_target(&es, &mut rng, None), Some(NodeId(1)));
        }
    }

    #[test]
    fn failure_penalty_and_renormalisation() {
        let mut es = vec![
            CandidateEntry { attempts: 4, successes: 3, suc: 0.75, ..CandidateEntry::new(NodeId(1)) },
            entry(2, 0.5),
        ];
        assert!(apply_jump_result(&mut es, NodeId(1), false));
        assert_eq!((es[0].attempts, es[0].successes), (5, 3));
        assert!((es[0].suc - 0.4).abs() < 1e-12);
        assert!((es[0].jump_p - 0.4 / 0.9).abs() < 1e-12);
        assert!((es[1].jump_p - 0.5 / 0.9).abs() < 1e-12);
        assert!(!apply_jump_result(&mut es, NodeId(9), true));
    }

    #[test]
    fn success_updates_counters() {
        let mut es = vec![CandidateEntry { attempts: 4, successes: 3, suc: 0.75, ..CandidateEntry::new(NodeId(1)) }];
        apply_jump_result(&mut es, NodeId(1), true);
        assert_eq!((es[0].attempts, es[0].successes), (5, 4));
        assert!((es[0].suc - 0.8).abs() < 1e-12);
    }

    #[test]
    fn upstream_scaling() {
        let mut es = vec![entry(1, 0.8), entry(2, 0.8)];
        assert!(scale_success(&mut es, NodeId(1), 0.5));
        assert!((es[0].suc - 0.4).abs() < 1e-12);
        assert!((es[0].jump_p - 0.4 / 1.2).abs() < 1e-12);
    }
}
