#![no_main]

use gibc_core::mesh::{read_off, write_off};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = read_off(text) {
        let back = read_off(&write_off(&mesh)).expect("written mesh reparses");
        assert_eq!(back.num_triangles(), mesh.num_triangles());
        assert_eq!(back.num_edges(), mesh.num_edges());
    }
});
