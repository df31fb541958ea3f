#![no_main]

use libfuzzer_sys::fuzz_target;
use muspec::compose::Selector;
use muspec::sni::Mode;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = text.parse::<Selector>() {
        assert_eq!(s.to_string().parse::<Selector>().unwrap(), s);
        let _ = s.descriptor();
    }
    if let Ok(m) = text.parse::<Mode>() {
        assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
    }
});
