use std::collections::HashMap;

use proptest::prelude::*;
use relcluster_core::corpus::{parse_fewrel, parse_unlabeled, Dataset, EntitySpan, RelationInstance, TokenSpan};
use relcluster_core::encoder::{
    encode, encode_lenient, from_bytes, load_cache, save_cache, to_bytes, top_tokens_for,
    FileBackend, InferenceBackend, InferenceConfig, MlmBackend, StubBackend,
};
use relcluster_core::prompt::{render_all, PromptTemplate, TemplateId, MASK};
use relcluster_core::synthetic::relation_corpus;
use relcluster_core::EmbeddingMatrix;

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z][a-z]{0,7}|[,.;:]"
}

prop_compose! {
    fn instance()(tokens in proptest::collection::vec(word(), 2..20))
        (h in 0..tokens.len(), t in 0..tokens.len(), tokens in Just(tokens)) -> RelationInstance {
        RelationInstance {
            instance_id: String::new(),
            head: EntitySpan { mention_text: tokens[h].clone(), kb_id: None, token_spans: vec![TokenSpan::new(h, h)] },
            tail: EntitySpan { mention_text: tokens[t].clone(), kb_id: None, token_spans: vec![TokenSpan::new(t, t)] },
            tokens,
            gold_relation: Some("P".into()),
        }
    }
}

fn dataset(mut instances: Vec<RelationInstance>) -> Dataset {
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.instance_id = format!("P#{i}");
    }
    Dataset::new("prop", instances).unwrap()
}

proptest! {
    #[test]
    fn every_template_renders_one_mask(insts in proptest::collection::vec(instance(), 1..8)) {
        let ds = dataset(insts);
        for id in TemplateId::ALL {
            for (p, inst) in render_all(&PromptTemplate::new(id), &ds).unwrap().iter().zip(&ds.instances) {
                prop_assert_eq!(p.mask_count(), 1);
                prop_assert_eq!(&p.text[p.mask_offset..p.mask_offset + MASK.len()], MASK);
                prop_assert!(p.text.starts_with("[CLS] ") && p.text.ends_with(". [SEP]"));
                prop_assert!(p.text.contains(&inst.head.mention_text));
                prop_assert!(p.text.contains(&inst.tail.mention_text));
                prop_assert_eq!(&p.source_instance_id, &inst.instance_id);
            }
        }
    }

    #[test]
    fn fewrel_export_round_trips(insts in proptest::collection::vec(instance(), 1..10)) {
        let ds = dataset(insts);
        let back = parse_fewrel("prop", &ds.to_fewrel_json()).unwrap();
        prop_assert_eq!(&back.instances, &ds.instances);
        let unlabeled = parse_unlabeled("prop", &ds.to_unlabeled_json()).unwrap();
        prop_assert_eq!(unlabeled, ds.strip_labels());
    }

    #[test]
    fn cache_round_trips(rows in 1usize..12, dim in 1usize..9, seed in any::<u32>()) {
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|i| (0..dim).map(|j| ((seed as usize + i * 31 + j * 7) % 97) as f64 / 7.0 - 5.0).collect())
            .collect();
        let m = EmbeddingMatrix::from_rows(&data).unwrap();
        let bytes = to_bytes(&m);
        prop_assert_eq!(from_bytes(&bytes).unwrap(), m);
    }
}

#[test]
fn cache_file_serves_file_backend() {
    let ds = relation_corpus(3, 5, 1);
    let labels: HashMap<String, String> = ds
        .instances
        .iter()
        .map(|i| (i.instance_id.clone(), i.gold_relation.clone().unwrap()))
        .collect();
    let prompts = render_all(&PromptTemplate::new(TemplateId::P), &ds).unwrap();
    let m = encode(&StubBackend::gold_direction(32, labels, 0.05), &prompts).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.pore");
    save_cache(&m, &path).unwrap();
    assert_eq!(load_cache(&path).unwrap(), m);
    let file = FileBackend::open(&path).unwrap();
    assert!(!file.has_mlm_head());
    let mut reversed = prompts.clone();
    reversed.reverse();
    let again = encode(&file, &reversed).unwrap();
    let order: Vec<usize> = (0..prompts.len()).rev().collect();
    assert_eq!(again.data(), m.select(&order).data());
}

fn fake_server(max_length: usize) -> InferenceBackend {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fake_mlm_server.py");
    InferenceBackend::spawn(InferenceConfig {
        args: vec![script.into()],
        model: "toy".into(),
        max_length,
        batch_size: 2,
        ..InferenceConfig::default()
    })
    .unwrap()
}

#[test]
fn external_process_backend() {
    let ds = relation_corpus(2, 3, 0);
    let prompts = render_all(&PromptTemplate::new(TemplateId::P), &ds).unwrap();
    let backend = fake_server(512);
    assert_eq!(backend.name(), "fake:toy");
    assert_eq!(backend.hidden_dim(), 4);
    let m = encode(&backend, &prompts).unwrap();
    assert_eq!((m.rows(), m.dim()), (6, 4));
    let words = prompts[0].text.split_whitespace().count() as f32;
    assert_eq!(m.row(0)[0], words);

    let top = top_tokens_for(&backend, &prompts[0], 2).unwrap();
    assert_eq!(top[0].token, "\u{120}Borders");
}

#[test]
fn external_process_reports_long_prompts() {
    let ds = relation_corpus(1, 2, 0);
    let prompts = render_all(&PromptTemplate::new(TemplateId::P1), &ds).unwrap();
    let backend = fake_server(8);
    let (m, failures) = encode_lenient(&backend, &prompts).unwrap();
    assert_eq!(m.rows(), 0);
    assert_eq!(failures.len(), 2);
    assert!(matches!(
        encode(&backend, &prompts),
        Err(relcluster_core::encoder::EncodeError::Instances(_))
    ));
}
