#![no_main]

use libfuzzer_sys::fuzz_target;
use robustnet::datagen::{Dataset, InputSpec, Provenance};

// First byte picks d, second byte n; the rest is the CSV body.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let provenance = Provenance {
        format_version: 1,
        target: "fuzz".into(),
        noise: "fuzz".into(),
        n: data[1] as usize,
        d: 1 + (data[0] % 4) as usize,
        seed: 0,
        stream_id: 0,
        inputs: InputSpec::default(),
        noiseless: false,
    };
    if let Ok(ds) = Dataset::read_csv(&data[2..], provenance) {
        assert_eq!(ds.xs.len(), ds.d * ds.len());
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let again = Dataset::read_csv(buf.as_slice(), ds.provenance.clone()).unwrap();
        assert_eq!(again.ys.len(), ds.ys.len());
    }
});
