//! Shared fixtures for the benchmarks.

use katoklab::{KatokMap, MapParams, Preset, TorusPoint};

/// Map at the pressure preset.
pub fn default_map() -> KatokMap {
    KatokMap::new(MapParams::preset(Preset::Pressure)).expect("preset is valid")
}

/// Deterministic points on a coarse lattice, half of them inside the switching disc.
pub fn sample_points(map: &KatokMap, count: usize) -> Vec<TorusPoint> {
    let r1 = map.params.r1;
    (0..count)
        .map(|i| {
            let t = i as f64 / count as f64;
            if i % 2 == 0 {
                let (a, r) = (t * 40.0, r1 * (0.05 + 0.9 * ((i * 7919) % count) as f64 / count as f64));
                TorusPoint::new(r * a.cos(), r * a.sin())
            } else {
                TorusPoint::new(t, (t * 1.618_033_988_75).fract())
            }
        })
        .collect()
}
