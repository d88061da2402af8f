use std::collections::BTreeMap;
use std::fs;

use crowd_consensus::synthetic::{planted_corpus, random_image_features, split_corpus, SyntheticConfig};
use crowd_consensus::{
    agreement_label, average_precision, corpus_labels, fit_model, load_corpus, load_image_features, load_model,
    make_plan, oracle_ranking, rank_by_disagreement, save_model, simulate_collection, status_quo_ranking,
    stratified_eval, sweep, AblationLayout, AgreementLabel, AnswerCounts, CorpusFormat, Error, FeatureMode,
    ForestConfig, LoadOptions, Parallelism, RankingSet, SimulationMode,
};

const QUESTIONS: &str = r#"{"info": {}, "questions": [
  {"question_id": 20, "image_id": 3, "question": "Is the dog asleep?"},
  {"question_id": 10, "image_id": 4, "question": "Why is the man smiling?"}
]}"#;

const ANNOTATIONS: &str = r#"{"annotations": [
  {"question_id": 10, "image_id": 4, "answer_type": "other", "multiple_choice_answer": "happy",
   "answers": [{"answer": "Happy", "answer_id": 1}, {"answer": "joke", "answer_id": 2},
               {"answer": "happy", "answer_id": 3}, {"answer": "friend", "answer_id": 4},
               {"answer": "joke", "answer_id": 5}, {"answer": "photo", "answer_id": 6},
               {"answer": "happy!", "answer_id": 7}, {"answer": "friends", "answer_id": 8},
               {"answer": "camera", "answer_id": 9}, {"answer": "he is happy", "answer_id": 10}]},
  {"question_id": 20, "image_id": 3, "answer_type": "yes/no", "multiple_choice_answer": "yes",
   "answers": [{"answer": "yes"}, {"answer": "Yes"}, {"answer": "yes"}, {"answer": "yes"}, {"answer": "yes"},
               {"answer": "yes"}, {"answer": "yes"}, {"answer": "YES."}, {"answer": "yes"}, {"answer": "no"}]}
]}"#;

#[test]
fn vqa_files_load_and_label() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("questions.json");
    let a = dir.path().join("annotations.json");
    fs::write(&q, QUESTIONS).unwrap();
    fs::write(&a, ANNOTATIONS).unwrap();
    let corpus = load_corpus(&q, Some(&a), &LoadOptions::new(CorpusFormat::VqaV1Json)).unwrap();
    assert_eq!(corpus.question_ids(), vec![10, 20]);
    let labels = corpus_labels(&corpus).unwrap();
    assert_eq!(labels, vec![AgreementLabel::Disagreement, AgreementLabel::Agreement]);

    // exported JSONL reloads to the same corpus
    let jsonl = dir.path().join("corpus.jsonl");
    corpus.save_jsonl(&jsonl).unwrap();
    let options = LoadOptions {
        source_tag: corpus.source_tag().to_string(),
        ..LoadOptions::default()
    };
    assert_eq!(load_corpus(&jsonl, None, &options).unwrap(), corpus);

    // VQA format without annotations is a configuration error
    assert!(matches!(
        load_corpus(&q, None, &LoadOptions::new(CorpusFormat::VqaV1Json)),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn planted_pipeline_end_to_end() {
    let config = SyntheticConfig {
        n_questions: 400,
        seed: 11,
        ..SyntheticConfig::default()
    };
    let corpus = planted_corpus(&config).unwrap();
    let images = random_image_features(config.n_images, 11).unwrap();
    let (train, test) = split_corpus(&corpus, 300, 11).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let features = dir.path().join("images.csv");
    images.write_csv(fs::File::create(&features).unwrap()).unwrap();
    assert_eq!(load_image_features(&features).unwrap(), images);

    let model = fit_model(
        &train,
        &images,
        FeatureMode::QI,
        AblationLayout::Truncated,
        &ForestConfig::with_seed(1),
        Parallelism::Parallel,
    )
    .unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let reloaded = load_model(&path).unwrap();

    let scores: Vec<f64> = test
        .iter()
        .map(|q| reloaded.predict_question(q, &images).unwrap().p_disagreement)
        .collect();
    let labels = corpus_labels(&test).unwrap();
    assert!(average_precision(&scores, &labels).unwrap() > 0.95);
    let types: Vec<_> = test.iter().map(|q| q.answer_type).collect();
    let report = stratified_eval(&scores, &labels, &types).unwrap();
    // only why-questions (type "other") disagree; the yes/no stratum has no positives
    assert!(report.ap_by_type.contains_key("other"));
    assert!(!report.ap_by_type.contains_key("yes/no"));

    let ids = test.question_ids();
    let predictions: BTreeMap<u64, f64> = ids.iter().copied().zip(scores).collect();
    let counts = AnswerCounts::default();
    let ours = rank_by_disagreement(&ids, &predictions).unwrap();
    let sets = vec![
        RankingSet::single("ours", ours.clone()),
        RankingSet::single("status_quo", status_quo_ranking(&ids, 3)),
        RankingSet::single("oracle", oracle_ranking(&test, counts).unwrap()),
    ];
    let half = ids.len() / 2;
    let rows = sweep(&test, &sets, &[half], counts, SimulationMode::ExactExpectation).unwrap();
    assert!(rows[0].diversity > rows[1].diversity);
    assert!(rows[2].diversity >= rows[0].diversity - 1e-9);

    let plan = make_plan(&ours, half, counts, test.answers_per_question()).unwrap();
    assert_eq!(plan.total_answers(), half * 5 + (ids.len() - half));
    let report = simulate_collection(&plan, &test, SimulationMode::ExactExpectation).unwrap();
    assert_eq!(report.diversity, rows[0].diversity);
}

#[test]
fn label_rule_generalizes_to_other_pool_sizes() {
    assert_eq!(agreement_label(&["a", "a", "b"], 3).unwrap(), AgreementLabel::Agreement);
    assert_eq!(
        agreement_label(&["a", "b", "c"], 3).unwrap(),
        AgreementLabel::Disagreement
    );
    assert!(matches!(
        agreement_label(&["a", "a"], 3),
        Err(Error::AnswerCountMismatch { .. })
    ));
}
