#!/usr/bin/env python3
"""Write torchvision's ImageNet VGG19 convolutions up to conv4_4 as a degsr
checkpoint, for use with the perceptual_weights config key.

    python3 tools/export_vgg19_weights.py vgg19_p.ckpt

Needs torch and torchvision; the weights are fetched by torchvision on first
use unless they are already in its cache.
"""

import argparse
import json
import struct
import zlib

MAGIC = b"DNSRCKPT"
VERSION = 1
# Indices of the conv layers in torchvision's vgg19().features, in order.
CONV_INDICES = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25]
NAMES = ["1_1", "1_2", "2_1", "2_2", "3_1", "3_2", "3_3", "3_4", "4_1", "4_2", "4_3", "4_4"]


def tensor_record(name, array):
    dims = list(array.shape)
    dims = [1] * (4 - len(dims)) + dims
    out = struct.pack("<I", len(name)) + name.encode()
    out += struct.pack("<I", 4) + struct.pack("<4I", *dims)
    out += array.astype("<f4").tobytes()
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output")
    args = parser.parse_args()

    from torchvision.models import VGG19_Weights, vgg19

    features = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).features
    payload = b""
    count = 0
    for index, suffix in zip(CONV_INDICES, NAMES):
        conv = features[index]
        weight = conv.weight.detach().numpy()
        bias = conv.bias.detach().numpy().reshape(-1, 1, 1, 1)
        payload += tensor_record(f"P.conv{suffix}.weight", weight)
        payload += tensor_record(f"P.conv{suffix}.bias", bias)
        count += 2

    descriptor = json.dumps({"format": "degsr-feature-weights", "source": "torchvision vgg19 IMAGENET1K_V1",
                             "tensor_count": count}).encode()
    with open(args.output, "wb") as f:
        f.write(MAGIC + struct.pack("<II", VERSION, len(descriptor)) + descriptor)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


if __name__ == "__main__":
    main()
