# # From FITS file to scored detections
#
# Synthetic fields stand in for telescope images: round blobs are the
# objects worth keeping, streaks and hot pixels are artifacts. The truth
# mask covers the blobs only.

import tempfile
from pathlib import Path

from cosmicseg import bpnn, fits_io, pipeline, synth

work = Path(tempfile.mkdtemp(prefix="cosmicseg-demo-"))
cfg = pipeline.PipelineConfig()

# ## Training data
#
# Every field is enhanced and segmented, and each region gets seven shape
# and brightness features. A region is labeled as an object when at least
# half of it lies inside the truth mask.

data = pipeline.synthetic_region_dataset(400, cfg, seed=0)
print(len(data), "regions,", int(data.y.sum()), "objects")
print(pipeline.FEATURE_NAMES)

outcome = pipeline.run_train(cfg, data, work / "model.json")
print(bpnn.format_grid(outcome.reports))
print("best epoch", outcome.result.best_epoch)

# ## A new field

field = synth.star_field((128, 128), n_blobs=6, n_streaks=4, n_points=10, seed=999)
header = fits_io.FitsHeader.for_image(128, 128, bitpix=16)
(work / "field.fits").write_bytes(fits_io.write_fits(header, field.image))
(work / "field.truth.pgm").write_bytes(fits_io.write_mask_pgm(field.truth))

report = pipeline.run_detect(cfg, work / "model.json", work / "field.fits",
                             work / "out", work / "field.truth.pgm")
print(report.metrics.to_dict())
for sr in report.regions:
    print(sr.region.label, sr.region.pixel_count, round(sr.score, 3), sr.predicted)

# Every stage was saved next to the report.

print(sorted(p.name for p in (work / "out").iterdir()))
