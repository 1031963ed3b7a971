#![allow(dead_code)]

use lsa_core::config::Config;

/// A network small enough to train for a few epochs inside a unit test.
pub fn tiny_config(extra: &str) -> Config {
    let mut c = Config::default();
    c.apply_text(
        "stem_stride=2\nstage_widths=8,8,16\nstage_blocks=1,1,1\nstage_strides=1,2,2\n\
         embed_dim=8\nh_dim=16\nattention_dim=16\nclassifier_dim=16\n\
         train_count=96\neval_count=48\nepochs=2\nbatch_size=16\nseeds=1\n",
    )
    .unwrap();
    c.apply_text(extra).unwrap();
    c
}
