//! Step-by-step log states for a single four-block sub-path.

use cflog::engine::{Phase, StepOutcome};
use cflog::{encode_raw, expand, AddrWidth, Engine, EngineConfig, LogElement, Mode, SubPathSpec, Transfer};

const A: u32 = 0x0400;
const B: u32 = 0x0410;
const C: u32 = 0x0420;
const D: u32 = 0x0430;
const G: u32 = 0x0460;
const H: u32 = 0x0470;

fn t(src: u32, dest: u32) -> Transfer {
    Transfer::new(src, dest)
}

fn raw(src: u32, dest: u32) -> LogElement {
    LogElement::RawPair(t(src, dest))
}

const SYM: LogElement = LogElement::Symbol(1);

#[test]
fn pair_mode_stages() {
    let spec = SubPathSpec::pair(1, &[t(A, B), t(B, D), t(D, G)]).unwrap();
    let config = EngineConfig::new(Mode::Pair, AddrWidth::W16);
    let mut e = Engine::new(vec![spec.clone()], config.clone()).unwrap();

    let steps: Vec<(Transfer, Vec<LogElement>)> = vec![
        (t(A, B), vec![raw(A, B)]),
        (t(B, D), vec![raw(A, B), raw(B, D)]),
        // (a) the sub-path is complete, (b) it is replaced by its symbol
        (t(D, G), vec![SYM]),
        // (c) later transfers are appended unchanged
        (t(G, C), vec![SYM, raw(G, C)]),
        (t(C, A), vec![SYM, raw(G, C), raw(C, A)]),
        // (d) a second instance builds up
        (t(A, B), vec![SYM, raw(G, C), raw(C, A), raw(A, B)]),
        (t(B, D), vec![SYM, raw(G, C), raw(C, A), raw(A, B), raw(B, D)]),
        // (e) and is replaced
        (t(D, G), vec![SYM, raw(G, C), raw(C, A), SYM]),
        // (f) execution continues
        (t(G, H), vec![SYM, raw(G, C), raw(C, A), SYM, raw(G, H)]),
    ];
    let mut trace = Vec::new();
    for (i, (tr, want)) in steps.iter().enumerate() {
        let outcome = e.step(*tr).unwrap();
        trace.push(*tr);
        assert_eq!(e.log().elements(), want.as_slice(), "after step {i}");
        let completes = i == 2 || i == 7;
        assert_eq!(matches!(outcome, StepOutcome::Replaced { id: 1, .. }), completes, "outcome at step {i}");
        e.check_invariants().unwrap();
    }
    // partial match state in the middle of (d)
    let mut probe = Engine::new(vec![spec.clone()], config.clone()).unwrap();
    probe.step(t(A, B)).unwrap();
    assert_eq!(probe.detectors()[0].phase, Phase::Monitor);
    assert_eq!(probe.detectors()[0].block_ptr, 1);

    let log = e.finalize();
    assert_eq!(log.size_bytes(), 2 + 4 + 4 + 2 + 4);
    assert_eq!(expand(&log, &[spec]).unwrap(), encode_raw(&trace, &config).unwrap());
}

#[test]
fn dest_mode_stages() {
    let spec = SubPathSpec::dest(1, &[A, B, D, G]).unwrap();
    let config = EngineConfig::new(Mode::Dest, AddrWidth::W16);
    let mut e = Engine::new(vec![spec.clone()], config.clone()).unwrap();
    let d = |x: u32| LogElement::RawDest(cflog::Address(x));
    let steps: Vec<(u32, Vec<LogElement>)> = vec![
        (A, vec![d(A)]),
        (B, vec![d(A), d(B)]),
        (D, vec![d(A), d(B), d(D)]),
        (G, vec![SYM]),
        (C, vec![SYM, d(C)]),
        (A, vec![SYM, d(C), d(A)]),
        (B, vec![SYM, d(C), d(A), d(B)]),
        (D, vec![SYM, d(C), d(A), d(B), d(D)]),
        (G, vec![SYM, d(C), SYM]),
        (H, vec![SYM, d(C), SYM, d(H)]),
    ];
    let mut trace = Vec::new();
    for (i, (dest, want)) in steps.iter().enumerate() {
        e.step(Transfer::to(*dest)).unwrap();
        trace.push(Transfer::to(*dest));
        assert_eq!(e.log().elements(), want.as_slice(), "after step {i}");
    }
    let log = e.finalize();
    assert_eq!(expand(&log, &[spec]).unwrap(), encode_raw(&trace, &config).unwrap());
}

#[test]
fn back_to_back_instances_coalesce() {
    let spec = SubPathSpec::pair(1, &[t(A, B), t(B, D), t(D, G), t(G, A)]).unwrap();
    let mut e = Engine::new(vec![spec], EngineConfig::default()).unwrap();
    let body = [t(A, B), t(B, D), t(D, G), t(G, A)];
    for k in 1..=3u16 {
        for tr in body {
            e.step(tr).unwrap();
        }
        let want: Vec<LogElement> = if k == 1 { vec![SYM] } else { vec![SYM, LogElement::RepeatCount(k)] };
        assert_eq!(e.log().elements(), want.as_slice());
    }
}
