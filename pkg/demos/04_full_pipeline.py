"""End-to-end miniature of the whole system, library-first.

Synthesizes a corpus, trains the transport-constrained GAN for a few
epochs, enhances held-out degraded images, and prints both evaluation
protocols. Uses a reduced scale so it finishes in a few minutes on a CPU;
see the README for the CLI equivalent of each stage.

Run:  python3 demos/04_full_pipeline.py
"""

from pathlib import Path

import numpy as np

from otenhance import (
    ClassifierConfig,
    CriticSpec,
    GeneratorSpec,
    ObjectiveConfig,
    QualityLabel,
    TrainConfig,
    converted_ratio,
    load_image,
    load_manifest,
    ms_ssim,
    save_image,
    train,
    train_quality_classifier,
)
from otenhance.evaluation import classify_quality, evaluate_full_reference, render_table
from otenhance.simulate import DegradationSpec, SynthSpec, build_corpus
from otenhance.training import enhance

OUT = Path(__file__).parent / "output" / "pipeline"


def main():
    print("1/5 synthesizing corpus (20 per grade)")
    manifest = build_corpus(
        20, OUT / "corpus",
        template=SynthSpec(side=64, seed=77),
        degradation=DegradationSpec(seed=77),
    )
    records = load_manifest(manifest)
    low = [r for r in records if r.quality is QualityLabel.REJECT]
    high = [r for r in records if r.quality is QualityLabel.GOOD]

    hold = sorted(r.id for r in low)[:10]
    train_low = [r for r in low if r.id not in hold]
    train_high = [r for r in high if r.id + "d" not in hold]

    print("2/5 training (6 epochs at desk scale; a few minutes on CPU)")
    cfg = TrainConfig(
        epochs=6, batch_size=8, image_side=64, seed=1, checkpoint_every=6,
        objective=ObjectiveConfig(divergence_weight=40.0, critic_steps=5),
        generator=GeneratorSpec(base_channels=16, depth=2, residual_blocks=3),
        critic=CriticSpec(base_channels=16, conv_layers=4),
    )
    result = train(cfg, train_low, train_high, OUT / "run")

    print("3/5 enhancing held-out degraded images")
    degraded = [load_image(OUT / "corpus" / "reject" / f"{i}.png") for i in hold]
    enhanced = enhance(result.final_checkpoint, degraded)
    enhanced_dir = OUT / "enhanced"
    enhanced_dir.mkdir(parents=True, exist_ok=True)
    for i, img in zip(hold, enhanced):
        save_image(img, enhanced_dir / f"{i}.png")

    print("4/5 full-reference evaluation on the held-out pairs")
    held_pairs = OUT / "held_pairs.csv"
    with open(OUT / "corpus" / "pairs.csv") as src, open(held_pairs, "w") as dst:
        dst.write(next(src))
        for line in src:
            if line.strip().split(",")[1] in hold:
                dst.write(line)
    report = evaluate_full_reference(held_pairs, OUT / "corpus", enhanced_dir)
    print(render_table(report))

    print("\n5/5 no-reference check: converted ratio before/after enhancement")
    classifier, metrics = train_quality_classifier(
        records, ClassifierConfig(seed=5, epochs=60)
    )
    print(f"quality classifier held-out AUROC: {metrics['auroc_good_vs_rest']:.3f}")
    cr_deg = converted_ratio(classify_quality(classifier, degraded))
    cr_enh = converted_ratio(classify_quality(classifier, enhanced))
    print(f"CR degraded {cr_deg:.2f} -> CR enhanced {cr_enh:.2f}")

    structure = np.mean([ms_ssim(e, d) for e, d in zip(enhanced, degraded)])
    print(f"structure kept against the inputs: MS-SSIM {structure:.3f}")


if __name__ == "__main__":
    main()
