#![no_main]

use gibc_harness::config::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // split off trailing override lines so the override parser is covered too
    let (doc, overrides) = text.split_once("\n#--\n").unwrap_or((text, ""));
    let overrides: Vec<String> = overrides.lines().map(str::to_owned).collect();
    if let Ok(config) = ScenarioConfig::with_overrides(doc, &overrides) {
        let again = ScenarioConfig::from_toml_str(&config.to_toml()).expect("resolved config reparses");
        assert_eq!(again, config);
    }
});
