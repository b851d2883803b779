"""Tour of the quality and agreement metrics on synthetic images.

Renders a fundus-like image, perturbs it in controlled ways, and prints how
PSNR, SSIM and multi-scale SSIM respond; then exercises the label metrics
(Cohen's kappa, AUROC, converted ratio) on small hand-made examples.

Run:  python3 demos/01_metrics_tour.py
"""

import numpy as np

from otenhance import (
    QualityLabel,
    auroc,
    cohens_kappa,
    converted_ratio,
    ms_ssim,
    psnr,
    ssim,
)
from otenhance.simulate import DegradationSpec, SynthSpec, degrade, synth_fundus


def main():
    clean, _ = synth_fundus(SynthSpec(side=64, dr_grade=2, seed=3))

    print("Image metrics against increasingly damaged copies")
    print(f"{'perturbation':<28}{'PSNR':>9}{'SSIM':>9}{'MS-SSIM':>9}")
    rng = np.random.default_rng(0)
    cases = {
        "identical": clean.copy(),
        "gaussian noise 0.02": np.clip(clean + rng.normal(0, 0.02, clean.shape), 0, 1),
        "gaussian noise 0.05": np.clip(clean + rng.normal(0, 0.05, clean.shape), 0, 1),
        "blur sigma 1.5": degrade(
            clean, DegradationSpec(illumination_strength=0, blur_sigma=1.5,
                                   artifact_count=0), rng),
        "full degradation": degrade(clean, DegradationSpec(), np.random.default_rng(1)),
    }
    for name, other in cases.items():
        other = other.astype(np.float32)
        p = psnr(clean, other)
        print(f"{name:<28}{p:>9.2f}{ssim(clean, other):>9.4f}{ms_ssim(clean, other):>9.4f}")

    print()
    print("Agreement metrics")
    matrix = np.array([[20, 5], [10, 15]])
    print(f"kappa of [[20,5],[10,15]]      -> {cohens_kappa(matrix):.3f}")
    scored = [(0.9, True), (0.8, False), (0.7, True), (0.6, False)]
    print(f"auroc of a 2+/2- toy ranking   -> {auroc(scored):.3f}")
    labels = [QualityLabel.GOOD] * 3 + [QualityLabel.REJECT] * 5
    print(f"converted ratio of 3 good in 8 -> {converted_ratio(labels):.3f}")


if __name__ == "__main__":
    main()
