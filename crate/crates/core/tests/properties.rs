use agentx::action::{ActionEffect, ActionId, ActionSpec, AutonomyLevel, Catalog};
use agentx::agent::{q_update, reward, QTable, RewardInputs, RewardParams, StateKey};
use agentx::cascade::{EnvConstraints, StageThresholds};
use agentx::comms::{send_status, Message, MessageKind, SendStatus, TickRange};
use agentx::guardrails::{default_gates, EmconLevel, GuardrailSet, ImpactBudget, Ruleset, Verdict};
use agentx::sensing::{collect, Baseline, FeatureVector};
use agentx::world::{Address, EventKind, NodeId, ObservedEvent, WorldConfig, WorldState};
use proptest::prelude::*;

fn guard() -> GuardrailSet {
    let rules =
        Ruleset::new(ImpactBudget::default(), default_gates(), StageThresholds::default(), &Catalog::standard(10, 10, true))
            .unwrap();
    GuardrailSet::from_ruleset(&rules)
}

fn kind() -> impl Strategy<Value = EventKind> {
    prop_oneof![
        (1u8..=5).prop_map(|severity| EventKind::IdsAlert { severity }),
        Just(EventKind::AntiMalwareAlert),
        Just(EventKind::UnauthorizedAccess),
        Just(EventKind::HoneyTouch),
        Just(EventKind::DummyFileAccess),
        Just(EventKind::DummyProcessAlert),
        Just(EventKind::FileIntegrityViolation),
        (0.0f64..1.0).prop_map(|load| EventKind::LoadSample { load }),
        Just(EventKind::LogLine),
    ]
}

fn events() -> impl Strategy<Value = Vec<ObservedEvent>> {
    prop::collection::vec((kind(), 0u32..9), 0..60).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (kind, n))| ObservedEvent { tick: i as u64, kind, node: NodeId(n) })
            .collect()
    })
}

fn autonomy() -> impl Strategy<Value = AutonomyLevel> {
    prop_oneof![
        Just(AutonomyLevel::Reflex),
        Just(AutonomyLevel::Previsioned),
        Just(AutonomyLevel::Collaborative),
        Just(AutonomyLevel::Delegated),
    ]
}

fn emcon() -> impl Strategy<Value = EmconLevel> {
    prop_oneof![Just(EmconLevel::Open), Just(EmconLevel::Restricted), Just(EmconLevel::Silent)]
}

fn inputs() -> impl Strategy<Value = RewardInputs> {
    (0u64..100, 0u64..100, -50i64..50, 1u64..500, 0u64..50, 0u64..50).prop_map(|(h, s, d, t, j, w)| RewardInputs {
        honey_events: h,
        security_events: s,
        delta_resources: d,
        total_resources: t,
        justified_cfh: j,
        cw: w,
    })
}

proptest! {
    #[test]
    fn collect_is_additive_over_disjoint_windows(evs in events(), split in 0usize..60) {
        let split = split.min(evs.len());
        let (a, b) = evs.split_at(split);
        let whole = collect(evs.iter(), 20);
        let merged = collect(a.iter(), 10).merge(&collect(b.iter(), 10));
        prop_assert_eq!(whole.ids_alert_count, merged.ids_alert_count);
        prop_assert_eq!(whole.honey_touches, merged.honey_touches);
        prop_assert_eq!(whole.load_samples, merged.load_samples);
        prop_assert_eq!(whole.window_ticks, merged.window_ticks);
        prop_assert!((whole.system_load - merged.system_load).abs() < 1e-9);
    }

    #[test]
    fn baseline_variance_non_negative(xs in prop::collection::vec(0u64..1000, 1..40)) {
        let mut b = Baseline::new();
        for &x in &xs {
            b.update(&FeatureVector { ids_alert_count: x, honey_touches: x / 2, ..Default::default() });
        }
        prop_assert!(b.variance().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(b.sample_count, xs.len() as u64);
    }

    #[test]
    fn guardrail_never_loosens_as_emcon_tightens(
        impact in 0.0f64..8.0,
        emission in 0u32..2,
        level in autonomy(),
    ) {
        let g = guard();
        let spec = ActionSpec {
            id: ActionId(1),
            effect: ActionEffect::DeployDummyFiles,
            resource_delta: 0,
            impact,
            emission_cost: emission,
            autonomy_level: level,
            enabled: true,
        };
        let allowed: Vec<bool> = EmconLevel::ALL
            .iter()
            .map(|&e| g.check(&spec, &EnvConstraints { emcon_level: e, ..Default::default() }) == Verdict::Allow)
            .collect();
        // allowed at a stricter level implies allowed at every looser one
        for i in 1..allowed.len() {
            prop_assert!(!allowed[i] || allowed[i - 1]);
        }
        if impact > 5.0 {
            prop_assert!(allowed.iter().all(|a| !a));
        }
    }

    #[test]
    fn terminate_always_allowed(impact in 0.0f64..100.0, level in autonomy(), e in emcon()) {
        let spec = ActionSpec {
            id: ActionId(12),
            effect: ActionEffect::TerminateSelf,
            resource_delta: 0,
            impact,
            emission_cost: 3,
            autonomy_level: level,
            enabled: true,
        };
        prop_assert_eq!(guard().check(&spec, &EnvConstraints { emcon_level: e, ..Default::default() }), Verdict::Allow);
    }

    #[test]
    fn relaxing_emcon_never_shrinks_sent_set(kinds in prop::collection::vec(0u8..4, 1..30)) {
        let g = guard();
        for msg in kinds.iter().map(|k| {
            let kind = match k {
                0 => MessageKind::CryForHelp { evidence: TickRange { first: 0, last: 3 } },
                1 => MessageKind::Alert { action_taken: ActionId(5) },
                2 => MessageKind::ShareBlocklist { entries: vec![Address(4)] },
                _ => MessageKind::Heartbeat,
            };
            Message::new(kind, 3).unwrap()
        }) {
            let sent: Vec<bool> = EmconLevel::ALL.iter().map(|&e| send_status(&msg, e, &g) == SendStatus::Sent).collect();
            prop_assert!(!sent[1] || sent[0]);
            prop_assert!(!sent[2]);
        }
    }

    #[test]
    fn reward_monotone(x in inputs(), a in 0.01f64..5.0, b in 0.01f64..5.0, c in 0.01f64..5.0) {
        let p = RewardParams { a, b, c, denominator_floor: 1 };
        let r = reward(&p, &x).unwrap();
        let more_honey = RewardInputs { honey_events: x.honey_events + 1, ..x };
        let more_justified = RewardInputs { justified_cfh: x.justified_cfh + 1, ..x };
        let more_cw = RewardInputs { cw: x.cw + 1, ..x };
        prop_assert!(reward(&p, &more_honey).unwrap() > r);
        prop_assert!(reward(&p, &more_justified).unwrap() > r);
        if x.justified_cfh > 0 && x.cw > 0 {
            prop_assert!(reward(&p, &more_cw).unwrap() < r);
        } else {
            prop_assert!(reward(&p, &more_cw).unwrap() <= r);
        }
    }

    #[test]
    fn q_update_moves_toward_target(
        q0 in -10.0f64..10.0, r in -10.0f64..10.0, next in -10.0f64..10.0, alpha in 0.0f64..=1.0, gamma in 0.0f64..0.99,
    ) {
        let s = StateKey::all().next().unwrap();
        let s2 = StateKey::all().nth(1).unwrap();
        let mut q = QTable::new(vec![ActionId(0)], alpha, gamma).unwrap();
        q.set(s, ActionId(0), q0);
        q.set(s2, ActionId(0), next);
        let target = r + gamma * next;
        q_update(&mut q, s, ActionId(0), r, s2).unwrap();
        let q1 = q.get(s, ActionId(0));
        prop_assert!((q1 - target).abs() <= (q0 - target).abs() + 1e-12);
    }

    #[test]
    fn world_pool_accounting_holds(seed in 0u64..500, steps in 1usize..200) {
        let mut w = WorldState::new(&WorldConfig::default(), seed).unwrap();
        for _ in 0..steps {
            w.step();
        }
        prop_assert_eq!(w.pool.used, w.powered_cost());
        prop_assert!(w.pool.used <= w.pool.capacity);
    }
}
