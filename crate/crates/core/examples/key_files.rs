//! Provisioning keys and writing them to key files.
//!
//! cargo run --example key_files

use oblivious_aggregation::dealer::{decode_user_key, encode_source_key, encode_user_key, provision, KeyPayload};
use oblivious_aggregation::{FieldSpec, Scheme, SessionParams};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let dir = std::env::temp_dir().join("obagg-keys");
    std::fs::create_dir_all(&dir).unwrap();

    let field = FieldSpec::new(65537).unwrap();
    for scheme in [Scheme::NoDropout, Scheme::DropoutTolerant] {
        let params = SessionParams::new(3, field, 2, scheme).unwrap();
        let (source, keys) = provision(&params, &mut ChaCha20Rng::seed_from_u64(1));
        let src_path = dir.join(format!("{scheme}-source.key"));
        std::fs::write(&src_path, encode_source_key(&params, &source)).unwrap();
        println!(
            "{scheme}: source key {} symbols -> {}",
            source.symbol_count(),
            src_path.display()
        );

        for key in &keys {
            let path = dir.join(format!("{scheme}-user{}.key", key.user()));
            std::fs::write(&path, encode_user_key(&params, key)).unwrap();
            let (_, back) = decode_user_key(&std::fs::read(&path).unwrap()).unwrap();
            assert_eq!(&back, key);
            let shape = match back.payload() {
                KeyPayload::NoDropout { .. } => "own noise + noise total",
                KeyPayload::DropoutTolerant { .. } => "every noise vector",
            };
            println!("  user {} key: {} symbols ({shape})", key.user(), key.symbol_count());
        }
    }
}
