"""Interior samples of cubic-convolution resizing from an independent resampler.

Pillow's float ('F' mode) BICUBIC filter uses the same kernel (a = -0.5), the
same pixel-centre convention and widens the kernel when shrinking. It differs
only at the borders, so just interior samples are emitted. The input is the
smooth 24x24 test pattern defined by pattern() below.
"""

import math

import numpy as np
from PIL import Image


def pattern(x, y):
    return 0.5 + 0.4 * math.sin(0.7 * x + 0.3 * y) * math.cos(0.45 * y - 0.2 * x)


def resize(arr, w, h):
    return np.asarray(Image.fromarray(arr, "F").resize((w, h), Image.BICUBIC), dtype=np.float64)


def emit(name, out, margin):
    h, w = out.shape
    print(f"// {name}: {w}x{h}, rows/cols [{margin}, {w - margin})")
    print(f"inline const std::vector<double> {name}{{")
    for y in range(margin, h - margin):
        print("    " + ", ".join(repr(float(v)) for v in out[y, margin:w - margin]) + ",")
    print("};")


if __name__ == "__main__":
    src = np.array([[pattern(x, y) for x in range(24)] for y in range(24)], dtype=np.float32)
    emit("kBicubicDown2", resize(src, 12, 12), 3)
    emit("kBicubicUp2", resize(src, 48, 48), 5)
