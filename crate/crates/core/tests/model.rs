use rand::Rng as _;
use wgpt_core::audio::{FrameScale, MelFrameSequence};
use wgpt_core::model::checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
};
use wgpt_core::model::{decoder_stack, Batch, Model, ModelConfig, SeqShape, SliceBranchConfig, Variant};
use wgpt_core::numcore::{AdamState, Graph, Tensor};
use wgpt_core::rng::stream;
use wgpt_core::tokenizer::{AlignedExample, TokenSequence, TokenSource};

/// Closed form: each block has 12d² + 13d parameters (two layer norms,
/// four d×d projections with biases, a 4d feed-forward) and every stack
/// ends in a 2d layer norm.
fn stack(layers: usize, d: usize) -> usize {
    layers * (12 * d * d + 13 * d) + 2 * d
}

fn head(d: usize, hidden: usize, vocab: usize) -> usize {
    d * hidden + hidden + hidden * vocab + vocab
}

fn closed_form(c: &ModelConfig) -> usize {
    assert_eq!(c.ff_mult, 4);
    let base = c.vocab * c.token_dim() + stack(c.main_layers, c.main_dim) + head(c.main_dim, c.head_hidden, c.vocab);
    match &c.slice {
        None => base,
        Some(s) => {
            base + s.n_mels
                + s.n_mels * s.proj_hidden
                + s.proj_hidden
                + s.proj_hidden * s.dim
                + s.dim
                + stack(s.layers, s.dim)
        }
    }
}

#[test]
fn parameter_counts_match_closed_form() {
    let expected = [
        (ModelConfig::gpt_s(), 2_696_832),
        (ModelConfig::gpt_l(), 9_205_248),
        (ModelConfig::hybrid(), 2_939_104),
    ];
    for (cfg, n) in expected {
        assert_eq!(closed_form(&cfg), n);
        let report = Model::new(cfg).unwrap().count_parameters();
        assert_eq!(report.total, n, "{}", report.variant);
        assert!(report.to_string().contains("reported, not asserted"));
    }
}

#[test]
fn toy_count_by_hand() {
    // vocab 3, width 2, one layer, one head, head hidden 2:
    // embed 3·2 = 6; ln1 4; q,k,v,o 4·(4+2) = 24; ln2 4; ff 2·8+8+8·2+2 = 42;
    // ln_f 4; head 2·2+2+2·3+3 = 15.
    let cfg = ModelConfig {
        variant: Variant::GptS,
        vocab: 3,
        context: 4,
        main_layers: 1,
        main_dim: 2,
        main_heads: 1,
        ff_mult: 4,
        head_hidden: 2,
        slice: None,
    };
    assert_eq!(
        Model::new(cfg).unwrap().count_parameters().total,
        6 + 4 + 24 + 4 + 42 + 4 + 15
    );
}

#[test]
fn hybrid_group_breakdown() {
    let report = Model::new(ModelConfig::hybrid()).unwrap().count_parameters();
    let get = |n: &str| report.groups.iter().find(|g| g.name == n).map(|g| g.count).unwrap();
    assert_eq!(get("slice.proj"), 198_688);
    assert_eq!(get("slice.pad"), 64);
    assert_eq!(get("slice.layers") + get("slice.ln_f"), 76_288);
    assert_eq!(get("embed.tokens"), 32_768);
    assert_eq!(get("main.layers") + get("main.ln_f"), 400_000);
    assert_eq!(get("head"), 2_231_296);
}

fn tiny_hybrid() -> ModelConfig {
    ModelConfig {
        variant: Variant::Hybrid,
        vocab: 8,
        context: 6,
        main_layers: 2,
        main_dim: 16,
        main_heads: 2,
        ff_mult: 4,
        head_hidden: 12,
        slice: Some(SliceBranchConfig {
            layers: 2,
            dim: 8,
            heads: 2,
            proj_hidden: 10,
            n_mels: 4,
            spec_shift: 2,
        }),
    }
}

fn example(len: usize, vocab: usize, n_mels: usize, seed: u64) -> AlignedExample {
    let mut rng = stream(seed, "example");
    AlignedExample {
        tokens: TokenSequence::new(
            (0..len).map(|_| rng.gen_range(0..vocab)).collect(),
            vocab,
            TokenSource::External,
        )
        .unwrap(),
        frames: Some(MelFrameSequence {
            frames: (0..len * n_mels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            n_bins: n_mels,
            scale: FrameScale::Normalized { corpus_id: "x".into() },
        }),
        utterance_id: format!("ex-{seed}"),
    }
}

#[test]
fn gradients_reach_every_group() {
    let model = Model::new(tiny_hybrid()).unwrap();
    let mut ps = model.init_params(1).unwrap();
    let ex = example(6, 8, 4, 2);
    let batch = Batch::from_examples(&[&ex]).unwrap();
    let mut g = Graph::new();
    let logits = model.forward(&mut g, &ps, &batch).unwrap();
    let loss = g.cross_entropy(logits, &[1, 2, 3, 4, 5, 6]).unwrap();
    g.backward(loss, &mut ps).unwrap();
    for group in model.count_parameters().groups {
        let prefix = group.name.replace(".layers", ".layer");
        let norm: f64 = ps
            .iter()
            .filter(|(n, _)| n.starts_with(&prefix))
            .map(|(_, p)| p.grad.sq_norm())
            .sum();
        assert!(norm > 0.0, "no gradient reaches {}", group.name);
    }
    assert!(ps.get("slice.pad").unwrap().grad.sq_norm() > 0.0);
}

#[test]
fn zero_output_projections_leave_the_residual_stream() {
    let model = Model::new(ModelConfig {
        variant: Variant::GptS,
        slice: None,
        ..tiny_hybrid()
    })
    .unwrap();
    let mut ps = model.init_params(4).unwrap();
    for i in 0..2 {
        for w in ["attn.wo", "attn.bo", "ff.w2", "ff.b2"] {
            let name = format!("main.layer{i}.{w}");
            let shape = ps.value(&name).unwrap().shape().to_vec();
            ps.set_value(&name, Tensor::zeros(&shape)).unwrap();
        }
    }
    let mut rng = stream(9, "x");
    let x = Tensor::randn(&[6, 16], 1.0, &mut rng);
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let out = decoder_stack(&mut g, &ps, "main", xv, SeqShape { batch: 1, len: 6 }, 2, 2, None).unwrap();
    let gain = g.param(&ps, "main.ln_f.gain").unwrap();
    let bias = g.param(&ps, "main.ln_f.bias").unwrap();
    let xv2 = g.input(x);
    let expected = g.layer_norm(xv2, gain, bias, 1e-5).unwrap();
    assert_eq!(g.value(out), g.value(expected));
}

#[test]
fn fresh_model_loss_is_near_uniform() {
    let model = Model::new(ModelConfig::gpt_s()).unwrap();
    let ps = model.init_params(0).unwrap();
    let ex = example(200, 1024, 64, 3);
    let batch = Batch::from_examples(&[&ex.crop(0, 199)]).unwrap();
    let mut g = Graph::new();
    let logits = model.forward(&mut g, &ps, &batch).unwrap();
    let loss = g.cross_entropy(logits, &ex.tokens.ids()[1..]).unwrap();
    let l = g.value(loss).item();
    assert!((l - 1024f64.ln()).abs() < 0.5, "{l}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = Model::new(tiny_hybrid()).unwrap();
    let ps = model.init_params(11).unwrap();
    let ck = Checkpoint {
        config: model.config().clone(),
        params: ps.clone(),
        adam: Some(AdamState::new(&ps, Default::default())),
        meta: serde_json::json!({"step": 3}),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.wgp1");
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    let ex = example(6, 8, 4, 5);
    let reloaded = Model::new(back.config).unwrap();
    assert_eq!(
        model.logits(&ps, &ex).unwrap(),
        reloaded.logits(&back.params, &ex).unwrap()
    );

    let mut bytes = encode_checkpoint(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    assert!(decode_checkpoint(&bytes).is_err());
}

#[test]
fn misuse_is_rejected() {
    let model = Model::new(tiny_hybrid()).unwrap();
    let ps = model.init_params(0).unwrap();
    assert!(model.logits(&ps, &example(7, 8, 4, 1)).is_err());
    let mut raw = example(5, 8, 4, 1);
    raw.frames.as_mut().unwrap().scale = FrameScale::Raw;
    assert!(model.logits(&ps, &raw).is_err());
    let mut bare = example(5, 8, 4, 1);
    bare.frames = None;
    assert!(model.logits(&ps, &bare).is_err());
}
