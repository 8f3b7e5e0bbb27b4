use std::path::Path;

use dai_core::certify::ChannelMode;
use dai_core::config::{kundur_preset, load_config, to_json};

fn preset_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/kundur.json")
}

#[test]
fn shipped_preset_matches_builder() {
    let loaded = load_config(&preset_path()).unwrap();
    assert_eq!(loaded, kundur_preset());
    let text = std::fs::read_to_string(preset_path()).unwrap();
    assert_eq!(text.trim_end(), to_json(&kundur_preset()).trim_end());
}

#[test]
fn preset_parameters() {
    let c = kundur_preset();
    let a = c.dai(1.0).unwrap().cost;
    for (ai, s) in a.iter().zip([700.0, 700.0, 719.0, 700.0]) {
        assert!((ai - s / 900.0).abs() < 1e-15);
    }
    let k = c.dai(1.0).unwrap().base_gain;
    for (ki, ai) in k.iter().zip(a.iter()) {
        assert!((ki * ai - 0.05).abs() < 1e-15);
    }
    assert_eq!(c.comm.kappa, 1.544);
    let ts = c.topologies().unwrap();
    assert_eq!(ts.len(), 4);
    assert_eq!(ts.graphs()[0].edges().len(), 4);
    assert!(ts.graphs()[1..].iter().all(|g| g.edges().len() == 3));
    assert_eq!(c.delays.channels, ChannelMode::PerLink);
    assert!(c.bounds().unwrap().h.iter().all(|&h| h == 2.0));
    assert!(!c.has_electrical_data());
    assert!(c.certify_setup().is_ok());
}
