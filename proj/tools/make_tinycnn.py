#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates fixtures/tinycnn: a small trained CNN, its eval set, and
reference logits computed by torch.

    python3 tools/make_tinycnn.py [--out fixtures/tinycnn]

The dataset is synthetic: each class is a smooth random 3x16x16 template,
samples are a randomly shifted and scaled template plus noise. Everything is
seeded, but torch kernels may differ across versions, so the committed files
(not this script) are the fixture.
"""
import argparse
import json
import pathlib
import struct

import numpy as np
import torch
from torch import nn

CLASSES = 10
SHAPE = (3, 16, 16)
NOISE = 3.6


def write_blob(path, array, dtype):
    code = {"f32": 0, "i8": 1, "i32": 2}[dtype]
    np_type = {"f32": "<f4", "i8": "i1", "i32": "<i4"}[dtype]
    array = np.ascontiguousarray(array, dtype=np_type)
    with open(path, "wb") as f:
        f.write(b"ISQT")
        f.write(struct.pack("<II", code, array.ndim))
        f.write(struct.pack("<%dQ" % array.ndim, *array.shape))
        f.write(array.tobytes())


def make_templates(rng):
    # Low-frequency patterns: random coarse grids upsampled to 16x16.
    coarse = rng.normal(size=(CLASSES, 3, 4, 4))
    t = torch.nn.functional.interpolate(torch.tensor(coarse), size=SHAPE[1:], mode="bilinear", align_corners=False)
    return t.numpy()


def make_split(rng, templates, count):
    labels = rng.integers(0, CLASSES, size=count)
    x = templates[labels].copy()
    shifts = rng.integers(-2, 3, size=(count, 2))
    for i, (dy, dx) in enumerate(shifts):
        x[i] = np.roll(x[i], (dy, dx), axis=(1, 2))
    x *= rng.uniform(0.6, 1.4, size=(count, 1, 1, 1))
    x += rng.normal(scale=NOISE, size=x.shape)
    return x.astype(np.float32), labels.astype(np.int32)


class TinyCNN(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(8)
        self.conv2 = nn.Conv2d(8, 16, 3, stride=2, padding=1)
        self.bn2 = nn.BatchNorm2d(16)
        self.conv3 = nn.Conv2d(16, 16, 3, padding=1)
        self.bn3 = nn.BatchNorm2d(16)
        self.pool = nn.MaxPool2d(2)
        self.fc = nn.Linear(16 * 4 * 4, CLASSES)

    def forward(self, x):
        x = torch.relu(self.bn1(self.conv1(x)))
        x = torch.relu(self.bn2(self.conv2(x)))
        x = torch.relu(self.bn3(self.conv3(x)))
        x = self.pool(x)
        return self.fc(torch.flatten(x, 1))


def train(model, x, y):
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    xt, yt = torch.tensor(x), torch.tensor(y, dtype=torch.long)
    gen = torch.Generator().manual_seed(1)
    for _ in range(12):
        order = torch.randperm(len(xt), generator=gen)
        for i in range(0, len(xt), 64):
            idx = order[i:i + 64]
            opt.zero_grad()
            loss = nn.functional.cross_entropy(model(xt[idx]), yt[idx])
            loss.backward()
            opt.step()


def export(model, out):
    params, nodes = [], []

    def param(name, tensor):
        file = name + ".bin"
        data = tensor.detach().numpy().astype(np.float32)
        write_blob(out / file, data, "f32")
        params.append({"name": name, "dtype": "f32", "shape": list(data.shape), "file": file})
        return name

    def conv(name, layer, src):
        nodes.append({"id": name, "kind": "conv2d", "inputs": [src],
                      "attrs": {"stride": list(layer.stride), "pad": list(layer.padding), "groups": 1},
                      "params": {"weight": param(name + ".weight", layer.weight),
                                 "bias": param(name + ".bias", layer.bias)}})

    def bn(name, layer, src):
        nodes.append({"id": name, "kind": "batchnorm", "inputs": [src], "attrs": {"epsilon": layer.eps},
                      "params": {"gamma": param(name + ".gamma", layer.weight),
                                 "beta": param(name + ".beta", layer.bias),
                                 "mean": param(name + ".mean", layer.running_mean),
                                 "var": param(name + ".var", layer.running_var)}})

    src = "input"
    for i in (1, 2, 3):
        conv("conv%d" % i, getattr(model, "conv%d" % i), src)
        bn("bn%d" % i, getattr(model, "bn%d" % i), "conv%d" % i)
        nodes.append({"id": "relu%d" % i, "kind": "relu", "inputs": ["bn%d" % i]})
        src = "relu%d" % i
    nodes.append({"id": "pool", "kind": "maxpool", "inputs": [src], "attrs": {"kernel": 2, "stride": 2}})
    nodes.append({"id": "flatten", "kind": "flatten", "inputs": ["pool"]})
    nodes.append({"id": "fc", "kind": "fc", "inputs": ["flatten"],
                  "params": {"weight": param("fc.weight", model.fc.weight), "bias": param("fc.bias", model.fc.bias)}})
    manifest = {"name": "tinycnn", "input": {"shape": [1, *SHAPE]}, "output": "fc", "nodes": nodes, "params": params}
    (out / "tinycnn.json").write_text(json.dumps(manifest, indent=2) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="fixtures/tinycnn")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    (out / "eval").mkdir(parents=True, exist_ok=True)

    torch.manual_seed(0)
    rng = np.random.default_rng(0)
    templates = make_templates(rng)
    x_train, y_train = make_split(rng, templates, 6000)
    x_eval, y_eval = make_split(rng, templates, 1000)
    # Normalize with training statistics so inputs are roughly N(0, 1).
    mean, std = x_train.mean(), x_train.std()
    x_train = (x_train - mean) / std
    x_eval = ((x_eval - mean) / std).astype(np.float32)

    model = TinyCNN()
    train(model, x_train, y_train)
    model.eval()
    export(model, out)
    write_blob(out / "eval" / "inputs.bin", x_eval, "f32")
    write_blob(out / "eval" / "labels.bin", y_eval, "i32")

    with torch.no_grad():
        logits = model(torch.tensor(x_eval)).numpy()
    write_blob(out / "reference_inputs.bin", x_eval[:8], "f32")
    write_blob(out / "reference_logits.bin", logits[:8], "f32")
    acc = (logits.argmax(1) == y_eval).mean() * 100
    print("float top-1 on eval set: %.2f%%" % acc)


if __name__ == "__main__":
    main()
