"""How one coral-cover estimate earns its weight.

Every estimate is weighted by a product of four factors: the image's
physical extent relative to the largest extent in play, the number of
classification points behind it, the classifier's accuracy, and an
image-count factor for transect-level programmes.  Citizens additionally
pool into a single estimate per image.
"""

from coralcast.elicitation import confusion_counts, score_accuracy
from coralcast.weighting import (PerUserImageEstimate, citizen_weight,
                                 coral_fraction, default_source_table,
                                 pool_image)

table = default_source_table()
print("configured source weights (accuracy is 1 for professionals):")
for profile in table.profiles():
    print(f"  {profile.source_id:10s} extent={profile.image_extent_m2:<5g}"
          f" points={profile.n_points_effective:<4g} images={profile.w_N:<4g}"
          f" -> weight {table.weight_for(profile.source_id):g}"
          if profile.source_id != "ReefCheck" else
          f"  {profile.source_id:10s} weight varies per citizen, see below")

# a citizen classifies 20 points on one image; unknowns drop out
labels = ["coral"] * 6 + ["algae"] * 8 + ["sand"] * 4 + ["unknown"] * 2
y, n_used = coral_fraction(labels)
print(f"\ncitizen labelled {len(labels)} points, {n_used} usable;"
      f" coral fraction {y:.3f}")

# accuracy comes from validation images scored against an expert
counts = [confusion_counts(["coral", "coral", "algae", "sand"],
                           ["coral", "algae", "algae", "sand"]),
          confusion_counts(["coral", "algae", "algae", "water"],
                           ["coral", "algae", "coral", "water"])]
w_a = score_accuracy(counts)
print(f"validation accuracy over {len(counts)} images: {w_a:.3f}")

w = citizen_weight(w_e=0.12, w_n=n_used, w_a=w_a, w_N=1)
print(f"classification weight: 0.12 * {n_used} * {w_a:.3f} * 1 = {w:.3f}")

# several citizens on the same image pool into one weighted estimate
pooled = pool_image(
    [PerUserImageEstimate("img-042", "amy", y=0.50, n_points=20, weight=2.0),
     PerUserImageEstimate("img-042", "ben", y=0.25, n_points=20, weight=1.0)],
    source_id="ReefCheck", year=2007, lon=150.231, lat=-22.914)
print(f"\npooled image estimate: cover {pooled.y_bar:.5f} "
      f"with weight {pooled.weight:g}")
print("every extra participant adds weight; the mean stays a convex "
      "combination")
