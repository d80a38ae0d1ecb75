// Prompt templates and a machine corpus built from human sources by a generator.
//
// ```bash
// cargo run --example build_corpus
// ```

use std::collections::HashMap;

use taudetect::corpus::{build_machine_corpus, render_prompt, CorpusRecord, DatasetManifest, GenerationRecipe, PromptTemplate};
use taudetect::providers::synthetic::{CharNgramLm, SyntheticGenerator};
use taudetect::risk::Label;

pub fn run_example() -> taudetect::Result<()> {
    let mut bindings = HashMap::new();
    bindings.insert("topic".to_string(), "Sundial".to_string());
    bindings.insert("start_prompt".to_string(), "A sundial tells the time of day".to_string());
    println!("{}", render_prompt(&PromptTemplate::wiki_intro(), &bindings)?);

    let human: Vec<CorpusRecord> = [
        "Lichens grow on bark and stone and can survive long droughts without harm.",
        "A lighthouse carries a lamp and lenses to guide ships along the coast at night.",
        "Granite forms deep underground from slowly cooling magma and is a fine building stone.",
        "The harpsichord plucks its strings with quills when a key is pressed down.",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| CorpusRecord::new(format!("h{i}"), *t, Label::Human, "notes"))
    .collect();

    let manifest = DatasetManifest {
        format_version: 1,
        dataset_id: "writing_prompts".into(),
        context_id: "notes".into(),
        human_source: "inline".into(),
        machine_source: None,
        generation: Some(GenerationRecipe {
            model_id: "toy".into(),
            template: None,
            template_text: None,
            start_prompt_tokens: 5,
            temperature: None,
            max_tokens: None,
            failure_limit: 0.0,
        }),
        sample_size: 2,
        split_seed: 9,
        disjoint_pools: true,
        exclude_ids: vec![],
    };
    let generator = SyntheticGenerator::new(std::sync::Arc::new(CharNgramLm::reference()));
    let built = build_machine_corpus(&manifest, &human, &generator)?;
    for r in &built.machine {
        println!("{} <- {}\n  prompt: {}\n  text:   {}", r.id, r.meta["source_id"], r.meta["prompt"], r.text);
    }
    println!("human side: {:?}", built.human.iter().map(|r| &r.id).collect::<Vec<_>>());
    Ok(())
}

#[allow(dead_code)]
fn main() -> taudetect::Result<()> {
    run_example()
}
