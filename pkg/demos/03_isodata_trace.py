# # Choosing a global threshold
#
# Start at the midrange of the image. Split the pixels at the current
# threshold, average the two class means, and repeat until the threshold
# moves by less than epsilon.

import numpy as np

from cosmicseg import pipeline, segmentation, synth

field = synth.star_field((128, 128), n_blobs=6, seed=3)
cfg = pipeline.PipelineConfig()
enhanced = pipeline.enhance(field.image, cfg)["smooth"]

trace = segmentation.iterate_threshold(enhanced, epsilon=1e-4)
print("t0 =", round(trace.t0, 4))
print(trace.to_csv())
print(trace.stop_reason, "after", len(trace.steps), "updates")

# The result is a fixed point: one more update barely moves it.

t = trace.final_threshold
print(abs(segmentation.isodata_update(enhanced, t) - t))

# ## How good is the mask?

mask = segmentation.apply_global_threshold(enhanced, t)
print(pipeline.imgcore.compare_masks(mask, field.truth).to_dict())

# ## A reported trace can be checked the same way
#
# Given only the threshold column, the error column is |T_k - T_(k-1)|.

column = [0.4843, 0.3782, 0.3156, 0.2711, 0.2430, 0.2240]
print(segmentation.ThresholdTrace.from_thresholds(column).to_csv())

# ## Local thresholding
#
# On a strongly sloped sky one global cut is not enough. Comparing each
# pixel with the midrange of its own window adapts to the background.

local = segmentation.local_adaptive_threshold(enhanced, window=15, bias=-0.05)
print("global", mask.mean().round(4), "local", local.mean().round(4))

# ## Regions

regions = segmentation.connected_components(mask)
for r in regions[:5]:
    print(r.label, r.pixel_count, r.bbox, np.round(r.centroid, 1))
