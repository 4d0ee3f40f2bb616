use rsma_harq::fading::UserProfile;
use rsma_harq::harq::{run_trial, HarqConfig, Scheme};
use rsma_harq::HarqKind;

fn cfg(scheme: Scheme, kind: HarqKind, l: u32, rate: f64) -> HarqConfig {
    HarqConfig::new(scheme, kind, l, UserProfile::new(20.0, rate), UserProfile::new(15.0, rate))
}

#[test]
fn more_retransmissions_never_lose_a_first_packet() {
    for scheme in Scheme::ALL {
        for kind in HarqKind::ALL {
            let short = cfg(scheme, kind, 2, 3.5);
            let long = HarqConfig { max_retx: 4, ..short };
            for t in 0..3000 {
                let a = run_trial(&short, 5, t, None).unwrap();
                let b = run_trial(&long, 5, t, None).unwrap();
                assert!(!a.user1_ok || b.user1_ok, "{scheme} {kind} trial {t}");
                assert!(!a.user2_ok || b.user2_ok, "{scheme} {kind} trial {t}");
                assert!(b.rounds_used <= 5 && a.rounds_used <= 3);
            }
        }
    }
}

#[test]
fn energy_is_at_least_one_per_packet() {
    for scheme in Scheme::ALL {
        let c = cfg(scheme, HarqKind::Ir, 3, 4.0);
        for t in 0..2000 {
            let o = run_trial(&c, 6, t, None).unwrap();
            // s11-only rounds cost alpha, so RSMA user 1 can go below one per round
            if scheme != Scheme::Rsma {
                assert!(o.energy_user1 >= f64::from(o.packets[0]));
            }
            assert!(o.energy_user2 >= f64::from(o.packets[1]));
            assert!(o.failures[0] <= o.packets[0] && o.failures[1] <= o.packets[1]);
        }
    }
}

#[test]
fn trials_are_reproducible() {
    for scheme in Scheme::ALL {
        let c = cfg(scheme, HarqKind::Cc, 2, 3.0);
        for t in [0, 17, 123_456] {
            let (mut la, mut lb) = (vec![], vec![]);
            let a = run_trial(&c, 9, t, Some(&mut la)).unwrap();
            let b = run_trial(&c, 9, t, Some(&mut lb)).unwrap();
            assert_eq!(a, b);
            assert_eq!(la, lb);
        }
    }
}
