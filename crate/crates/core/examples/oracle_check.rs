//! Development probe: parser-vs-generator agreement across a large sweep.

use srpg_core::model::{canonical_serialize, contexts_equal};
use srpg_core::{
    generate_synthetic, inject_pii, GuardMethod, GuardPipeline, InjectionBank, Reconstructor,
    TemplateBank,
};

fn main() {
    let bank = TemplateBank::bundled();
    let profiles = InjectionBank::bundled_profiles();
    let injection = InjectionBank::bundled();
    let reconstructor = Reconstructor::bundled();
    let pipeline = GuardPipeline::bundled_deterministic();

    let mut mismatches = 0usize;
    let mut leaks = 0usize;
    let mut unsolved = 0usize;
    let mut checked = 0usize;

    for seed in [42u64, 7, 99, 1234] {
        let items = generate_synthetic(seed, 500, &bank).unwrap();
        for (i, item) in items.iter().enumerate() {
            let injected = inject_pii(item, &profiles[i % profiles.len()], seed, &injection);
            let ctx = reconstructor.reconstruct_deterministic(&injected.injected_text);
            checked += 1;
            if !contexts_equal(&ctx, &item.gold_context) {
                mismatches += 1;
                if mismatches <= 5 {
                    eprintln!("MISMATCH [{}] {:?}", item.id, injected.injected_text);
                    eprintln!("  gold: {}", canonical_serialize(&item.gold_context));
                    eprintln!("  got : {}", canonical_serialize(&ctx));
                }
            }
            let out = pipeline.guard(GuardMethod::Srpg, &injected.injected_text).unwrap();
            if !srpg_core::text_is_leak_free(&out.fused_text, &injected.pii) {
                leaks += 1;
                if leaks <= 3 {
                    eprintln!("LEAK [{}] {:?}", item.id, out.fused_text);
                }
            }
            let template = bank.by_id(item.template_id.as_deref().unwrap()).unwrap();
            let extracted = reconstructor.reconstruct_deterministic(&out.fused_text);
            let solved = template.solve(&extracted).ok();
            if solved.as_deref() != item.gold_answer.as_deref() {
                unsolved += 1;
                if unsolved <= 5 {
                    eprintln!("UNSOLVED [{}] {:?}", item.id, out.fused_text);
                    eprintln!("  gold answer: {:?} got {:?}", item.gold_answer, solved);
                    eprintln!("  extracted: {}", canonical_serialize(&extracted));
                }
            }
        }
    }
    println!("checked={checked} mismatches={mismatches} leaks={leaks} unsolved={unsolved}");
}
