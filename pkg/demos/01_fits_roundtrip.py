# # Reading and writing FITS images
#
# A FITS file is a stack of 2880-byte blocks: a header made of 80-column
# keyword cards, then big-endian pixel data. The reader returns the header
# and an image normalized to [0, 1].

import numpy as np

from cosmicseg import fits_io

# ## A 2x2 image assembled by hand

cards = ["SIMPLE  =                    T", "BITPIX  =                    8",
         "NAXIS   =                    2", "NAXIS1  =                    2",
         "NAXIS2  =                    2", "END"]
header_bytes = b"".join(c.ljust(80).encode("ascii") for c in cards).ljust(2880, b" ")
data_bytes = bytes([0, 85, 170, 255]).ljust(2880, b"\0")
raw = header_bytes + data_bytes
print(len(raw), "bytes")

header, img = fits_io.parse_fits(raw)
print(header.bitpix, header.shape)
print(img)

# Writing it back reproduces the file byte for byte.

print(fits_io.write_fits(header, img) == raw)

# ## Integer encodings
#
# 16- and 32-bit integers are stored with a BZERO offset so the whole
# unsigned code range is available. Values on the code grid survive exactly.

rng = np.random.default_rng(0)
q = rng.integers(0, 65535, size=(4, 6), endpoint=True)
q.flat[0], q.flat[-1] = 0, 65535
grid = q / 65535
out = fits_io.write_fits(fits_io.FitsHeader.for_image(6, 4, bitpix=16), grid)
_, back = fits_io.parse_fits(out)
print(np.array_equal(back, grid))

# Float encodings keep about seven significant digits at BITPIX -32.

noisy = rng.random((4, 6))
noisy.flat[0], noisy.flat[-1] = 0.0, 1.0
_, back = fits_io.parse_fits(fits_io.write_fits(fits_io.FitsHeader.for_image(6, 4, -32), noisy))
print(np.abs(back - noisy).max())

# ## Viewing
#
# PGM is the simplest format an image viewer opens.

pgm = fits_io.write_pgm(img)
print(pgm[:15])
