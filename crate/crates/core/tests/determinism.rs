use aiot_core::{run_with, LogLevel, Mechanism, RunOptions, Scenario, SimResult, World};

fn small(seed: u64, mechanism: Mechanism) -> Scenario {
    let mut s = Scenario::device1()
        .with_seed(seed)
        .with_mechanism(mechanism);
    s.n_devices = 80;
    s.max_sim_time = 10.0;
    s
}

fn full(s: &Scenario) -> SimResult {
    run_with(
        s,
        RunOptions {
            log: LogLevel::Full,
        },
    )
    .unwrap()
}

#[test]
fn same_seed_gives_identical_outputs() {
    for m in [Mechanism::Em, Mechanism::Dcm] {
        let a = full(&small(4, m));
        let b = full(&small(4, m));
        assert_eq!(a.progress_csv(), b.progress_csv());
        assert_eq!(a.summary_toml(), b.summary_toml());
        assert_eq!(a.pin_csv(), b.pin_csv());
        assert_eq!(a.events_csv(), b.events_csv());
    }
}

#[test]
fn emitted_files_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = small(2, Mechanism::Dcm);
    for name in ["a", "b"] {
        full(&s).emit(&dir.path().join(name), true).unwrap();
    }
    for file in ["progress.csv", "summary.txt", "pin.csv", "events.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn mechanisms_share_population_for_a_seed() {
    let em = full(&small(9, Mechanism::Em));
    let dcm = full(&small(9, Mechanism::Dcm));
    assert_eq!(em.p_in_samples, dcm.p_in_samples);
    let initial = |m| {
        World::new(&small(9, m), RunOptions::default())
            .unwrap()
            .devices
            .iter()
            .map(|d| d.storage.level())
            .collect::<Vec<_>>()
    };
    assert_eq!(initial(Mechanism::Em), initial(Mechanism::Dcm));
}

#[test]
fn different_seeds_differ() {
    let a = full(&small(1, Mechanism::Dcm));
    let b = full(&small(2, Mechanism::Dcm));
    assert_ne!(a.p_in_samples, b.p_in_samples);
}
