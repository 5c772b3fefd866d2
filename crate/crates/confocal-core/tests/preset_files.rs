//! The scenario files shipped under presets/ must stay in lockstep with
//! the builtin scenarios of the same name.

use std::path::PathBuf;

use confocal_core::scenario::{builtin_scenario, parse_scenario, BUILTIN_SCENARIOS};

fn preset_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(format!("{name}.toml"))
}

#[test]
fn shipped_files_reproduce_the_builtins() {
    for name in BUILTIN_SCENARIOS {
        let file = parse_scenario(&preset_path(name)).unwrap();
        let builtin = builtin_scenario(name).unwrap();
        assert_eq!(file.label, builtin.label);
        assert_eq!(file.geometry.mirror_radius, builtin.geometry.mirror_radius);
        assert_eq!(file.geometry.length, builtin.geometry.length, "{name}");
        assert_eq!(
            file.geometry.reflectivity_upper,
            builtin.geometry.reflectivity_upper
        );
        assert_eq!(
            file.geometry.reflectivity_lower,
            builtin.geometry.reflectivity_lower
        );
        assert_eq!(file.geometry.wavelength, builtin.geometry.wavelength);
        assert_eq!(file.geometry.excess_loss, builtin.geometry.excess_loss, "{name}");
        assert_eq!(file.basis_order, builtin.basis_order, "{name}");
        assert_eq!(file.family, builtin.family, "{name}");
        assert_eq!(file.grid.width, builtin.grid.width, "{name}");
        assert_eq!(file.grid.height, builtin.grid.height, "{name}");
        assert_eq!(file.grid.pitch, builtin.grid.pitch, "{name}");
        assert_eq!(file.mask, builtin.mask, "{name}");
        assert_eq!(file.pump, builtin.pump, "{name}");
        assert_eq!(file.noise, builtin.noise, "{name}");
        assert_eq!(file.lock.slope, builtin.lock.slope, "{name}");
        assert_eq!(file.lock.bare_rms, builtin.lock.bare_rms, "{name}");
        assert_eq!(file.analysis.band, builtin.analysis.band, "{name}");
        assert_eq!(file.analysis.window, builtin.analysis.window, "{name}");
    }
}

#[test]
fn science_preset_carries_the_reference_geometry() {
    let scenario = parse_scenario(&preset_path("science-cavity")).unwrap();
    assert_eq!(scenario.geometry.mirror_radius, 10.0e-3);
    assert_eq!(scenario.geometry.length, 10.0e-3);
    assert_eq!(scenario.geometry.reflectivity_upper, 0.997);
    assert_eq!(scenario.geometry.reflectivity_lower, 0.977);
    assert_eq!(scenario.geometry.wavelength, 780.0e-9);
    let waist = scenario.geometry.fundamental_waist();
    assert!((waist - 35.2e-6).abs() < 0.5e-6, "waist {waist}");
}
