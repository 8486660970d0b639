//! A small synthetic fleet and a config that runs the whole grid in seconds.

use std::path::Path;

use vaessl::data::synthetic::{generate, write_subset, SyntheticConfig};

pub const SUBSET: &str = "SYN001";

pub fn write_fleet(dir: &Path) {
    let data = generate(&SyntheticConfig {
        train_engines: 12,
        test_engines: 6,
        min_life: 40,
        max_life: 70,
        seed: 11,
        ..SyntheticConfig::default()
    });
    write_subset(dir, SUBSET, &data).unwrap();
}

pub fn config_text(data_dir: &Path, out: &Path) -> String {
    format!(
        r#"seed = 3
fractions = [1.0, 0.5]
repetitions = 2
ensemble = 2
data_dir = "{}"
subset = "{SUBSET}"
output = "{}"

[data]
window = 8
max_rul = 60.0

[vae]
encoder_widths = [4, 3]
decoder_widths = [4]
latent_dim = 2

[vae.train]
max_epochs = 3
batch_size = 32

[rul]
widths = [6, 4]
max_rul = 60.0

[rul.train]
max_epochs = 3
batch_size = 32
"#,
        data_dir.display(),
        out.display()
    )
}
