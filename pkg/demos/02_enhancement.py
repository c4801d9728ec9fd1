# # Enhancing a faint star field
#
# Three steps prepare an image for thresholding: a log stretch lifts faint
# structure, grayscale erosion strips single hot pixels, and a Gaussian
# blur softens the noise.

import numpy as np

from cosmicseg import preprocess, synth

field = synth.star_field((96, 96), n_blobs=5, n_points=12, seed=1)
img = field.image
print("hot pixels:", len(field.points))

# ## Log stretch
#
# With c = 1/ln 2 the map s = c*log(1 + r) fixes 0 and 1 and raises everything
# in between.

stretched = preprocess.log_transform(img)
print(img.mean().round(3), stretched.mean().round(3))

# ## Erosion
#
# A 3x3 square takes the minimum of each neighbourhood, so an isolated
# bright pixel disappears while a blob several pixels wide only shrinks.

se = preprocess.StructuringElement.square(3)
eroded = preprocess.erode(stretched, se)
for y, x in field.points[:4]:
    print((y, x), stretched[y, x].round(3), "->", eroded[y, x].round(3))

# A cross-shaped element is gentler on diagonal edges.

print(preprocess.StructuringElement.cross(5).mask.astype(int))

# ## Gaussian smoothing
#
# The kernel extends to 3 sigma and is renormalized, so its taps sum to one.

k = preprocess.gaussian_kernel(1.0)
print(k.radius, k.taps.round(4), k.taps.sum())

smooth = preprocess.gaussian_smooth(eroded, 1.0)
print("noise before", np.std(np.diff(eroded, axis=1)).round(4),
      "after", np.std(np.diff(smooth, axis=1)).round(4))
