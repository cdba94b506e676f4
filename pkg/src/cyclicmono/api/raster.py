# MIT License
#
# Copyright (c) 2024 cyclicmono contributors
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.


import logging

import numpy as np
from PIL import Image
from matplotlib import cm

logger = logging.getLogger(__name__)


def membership_raster(member):
    """Rows run from the largest second-axis value down, columns follow the first axis."""
    return np.flipud(np.asarray(member, dtype=bool).T)


def save_membership_image(member, path, cmap_name="Greys"):
    """Members dark; .pbm gives a 1-bit bitmap, other suffixes a colour-mapped image."""
    raster = membership_raster(member)
    path = str(path)
    if path.lower().endswith(".pbm"):
        im = Image.fromarray(np.where(raster, 0, 255).astype(np.uint8)).convert("1")
    else:
        if not hasattr(cm, cmap_name):
            raise ValueError("Unknown colour map: " + cmap_name)
        cmap_fn = getattr(cm, cmap_name)
        im = Image.fromarray(np.uint8(255 * cmap_fn(raster.astype(float))))
    im.save(path)
    logger.debug("wrote %dx%d membership image to %s", raster.shape[1], raster.shape[0], path)

