"""Exports torchvision's ImageNet VGG-19 convolutions through conv5_1 as safetensors.

Usage:
    python scripts/export_vgg19.py vgg19.safetensors
    python scripts/export_vgg19.py vgg19_random.safetensors --random-init

--random-init skips the download and exports an untrained network with the
same names and shapes, which is enough to exercise the loading path offline.
"""

import argparse

import torch
import torchvision
from safetensors.torch import save_file

# Index of each convolution inside torchvision's `vgg19().features`.
LAYERS = {
    "conv1_1": 0,
    "conv1_2": 2,
    "conv2_1": 5,
    "conv2_2": 7,
    "conv3_1": 10,
    "conv3_2": 12,
    "conv3_3": 14,
    "conv3_4": 16,
    "conv4_1": 19,
    "conv4_2": 21,
    "conv4_3": 23,
    "conv4_4": 25,
    "conv5_1": 28,
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output")
    parser.add_argument("--random-init", action="store_true")
    args = parser.parse_args()

    weights = None if args.random_init else torchvision.models.VGG19_Weights.IMAGENET1K_V1
    features = torchvision.models.vgg19(weights=weights).features
    tensors = {}
    for name, index in LAYERS.items():
        conv = features[index]
        assert isinstance(conv, torch.nn.Conv2d), name
        tensors[f"{name}.weight"] = conv.weight.detach().float().contiguous()
        tensors[f"{name}.bias"] = conv.bias.detach().float().contiguous()
    save_file(tensors, args.output, metadata={"source": "torchvision vgg19", "random_init": str(args.random_init)})


if __name__ == "__main__":
    main()
