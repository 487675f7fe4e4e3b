"""
Latent rank and edge-band scoring
=================================

Two diagnostics used throughout the package.  Effective rank -- the
exponential of the spectral entropy of a matrix's singular values --
counts how many directions a latent field really uses.  The edge-band
score splits restoration error into a band around the sharp image's
strongest gradients and the remaining interior, because deblurring is
won or lost at edges.  The three coupling variants of the operator
model spread their latents over visibly different ranks.
"""

import tempfile
from pathlib import Path

import numpy as np

from dgdeblur import ModelConfig, TrainConfig, build_model, effective_rank
from dgdeblur.blur import gen_dataset, load_dataset
from dgdeblur.metrics import edge_band_psnr
from dgdeblur.training import rank_trajectories, train

rng = np.random.default_rng(8)

# 1. effective rank on matrices whose rank we know by construction
iso = rng.standard_normal((64, 8))                   # isotropic: all 8 used
one = np.outer(rng.standard_normal(64), rng.standard_normal(8))
mixed = iso @ np.diag([1.0, 1.0, 1.0, 0.02, 0.02, 0.02, 0.02, 0.02])
for label, m in [("isotropic", iso), ("rank-one", one), ("3 strong + 5 weak", mixed)]:
    print(f"effective rank of {label:18s} {effective_rank(m):.3f}  (of 8)")

# 2. the same lens on the model's latents: train each coupling variant
# briefly on the same small dataset and track the latent rank per layer
work = Path(tempfile.mkdtemp(prefix="rank_demo_"))
gen_dataset(work / "train", 8, 32, 32, sigma_min=1.0, sigma_max=2.0,
            shapes_range=(2, 4), seed=300)
items = load_dataset(work / "train" / "manifest.csv")

print("\nlatent effective rank after lift (step 0) and after each layer")
for variant in ("gg", "face", "cell"):
    model = build_model(ModelConfig(variant=variant, channels=8, heads=2,
                                    element_size=8, layers=2, seed=7))
    train(model, items, items, TrainConfig(steps=100, batch=4, lr=1e-3,
                                           augment=False, seed=21))
    rows = rank_trajectories(model, items)
    path = "  ".join(f"step {step}: {r_eff:.2f}" for _, step, _, r_eff, _, _ in rows)
    print(f"  {variant:5s} {path}")
print("(the uncoupled global variant collapses first; element-local "
      "coupling keeps more directions alive)")

# 3. where the blur actually hurts: score a blurred input against its
# sharp reference, separately on the edge band and the interior
it = items[0]
rep = edge_band_psnr(it.blurred, it.sharp)
frac = rep.n_edge / (rep.n_edge + rep.n_interior)
print(f"\nblurred vs sharp on one scene: edge band {rep.edge_psnr:.2f} dB, "
      f"interior {rep.interior_psnr:.2f} dB "
      f"({100 * frac:.0f}% of pixels are in the band)")
print("the interior is mostly flat and barely changes; nearly all the "
      "restoration problem lives in the band")
