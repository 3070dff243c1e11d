#!/usr/bin/env python3
"""Regenerates the checked-in ONNX test fixtures under tests/fixtures/.

tiny_backbone.onnx
    Small fixed-weight ResNet-style network (seeded init, then each conv
    rescaled so its tap has unit std on smooth random fields of std 0.1,
    the scale of a normalized interferogram) with the same
    three-tap contract as the production backbone: input N x 3 x H x W,
    outputs feat1 (16 ch, stride 4), feat2 (32 ch, stride 8) and
    feat3 (64 ch, stride 16). Spatial size is dynamic.
tiny_backbone_reference.json
    Torch activations of tiny_backbone for a fixed 1 x 3 x 32 x 32 input,
    used to check the C++ interpreter.
mean_backbone.onnx
    Hand-built graph for an 8 x 8 input whose taps are constant maps equal
    to 1x, 2x and 3x the mean of the input patch.
"""

import json
import math
import pathlib

import numpy as np
import onnx
import torch
from onnx import TensorProto, helper, numpy_helper
from torch import nn

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"


class TinyBackbone(nn.Module):
    def __init__(self):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, 8, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        self.layer1 = nn.Sequential(nn.Conv2d(8, 16, 3, padding=1), nn.ReLU())
        self.layer2 = nn.Sequential(nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU())
        self.layer3_main = nn.Conv2d(32, 64, 3, stride=2, padding=1)
        self.layer3_skip = nn.Conv2d(32, 64, 1, stride=2)
        self.relu = nn.ReLU()

    def forward(self, x):
        f1 = self.layer1(self.stem(x))
        f2 = self.layer2(f1)
        f3 = self.relu(self.layer3_main(f2) + self.layer3_skip(f2))
        return f1, f2, f3


def reference_input(size):
    y, x = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    plane = 0.5 * np.sin(0.3 * x) * np.cos(0.2 * y) + 0.01 * (x - y)
    return np.repeat(plane[None, None, :, :], 3, axis=1).astype(np.float32)


def smooth_fields(count, size, std, generator):
    noise = torch.randn(count, 1, size + 8, size + 8, generator=generator)
    kernel = torch.ones(1, 1, 9, 9) / 81.0
    fields = torch.nn.functional.conv2d(noise, kernel)
    fields = fields - fields.mean(dim=(2, 3), keepdim=True)
    fields = fields / fields.std(dim=(2, 3), keepdim=True) * std
    return fields.repeat(1, 3, 1, 1)


@torch.no_grad()
def rescale_to_unit_std(model):
    gen = torch.Generator().manual_seed(1)
    x = smooth_fields(64, 32, 0.1, gen)

    def fit(convs, forward):
        scale = 1.0 / float(forward().std())
        for conv in convs:
            conv.weight.mul_(scale)
            conv.bias.mul_(scale)

    fit([model.stem[0]], lambda: model.stem[0](x))
    fit([model.layer1[0]], lambda: model.layer1(model.stem(x)))
    fit([model.layer2[0]], lambda: model.layer2(model.layer1(model.stem(x))))
    fit([model.layer3_main, model.layer3_skip], lambda: model(x)[2])


def export_tiny():
    torch.manual_seed(0)
    model = TinyBackbone().eval()
    rescale_to_unit_std(model)
    dummy = torch.zeros(1, 3, 32, 32)
    path = OUT / "tiny_backbone.onnx"
    torch.onnx.export(
        model,
        dummy,
        str(path),
        input_names=["input"],
        output_names=["feat1", "feat2", "feat3"],
        dynamic_axes={"input": {0: "N", 2: "H", 3: "W"}},
        opset_version=13,
        dynamo=False,
    )
    m = onnx.load(str(path))
    m.producer_version = ""
    onnx.checker.check_model(m)
    onnx.save(m, str(path))

    x = reference_input(32)
    with torch.no_grad():
        outs = model(torch.from_numpy(x))
    ref = {
        "input_formula": "0.5*sin(0.3*x)*cos(0.2*y) + 0.01*(x-y), replicated over 3 channels",
        "size": 32,
        "outputs": {
            name: {"shape": list(t.shape), "data": [float(v) for v in t.flatten().tolist()]}
            for name, t in zip(["feat1", "feat2", "feat3"], outs)
        },
    }
    (OUT / "tiny_backbone_reference.json").write_text(json.dumps(ref))


def export_mean():
    size = 8
    nodes = []
    inits = []

    def const(name, array):
        inits.append(numpy_helper.from_array(np.asarray(array, dtype=np.float32), name))

    # Identity batch norm (var = 1 - eps) in front, to exercise the operator.
    eps = 1e-5
    const("bn_scale", np.ones(3))
    const("bn_bias", np.zeros(3))
    const("bn_mean", np.zeros(3))
    const("bn_var", np.full(3, 1.0 - eps))
    nodes.append(
        helper.make_node(
            "BatchNormalization", ["input", "bn_scale", "bn_bias", "bn_mean", "bn_var"], ["bn"], epsilon=eps
        )
    )
    taps = [("feat1", 2, 2, 1.0), ("feat2", 3, 1, 2.0), ("feat3", 4, 1, 3.0)]
    for name, channels, extent, gain in taps:
        const(f"{name}_w", np.full((channels, 3, 1, 1), gain / 3.0))
        const(f"{name}_zeros", np.zeros((1, channels, extent, extent)))
        nodes.append(helper.make_node("Conv", ["bn", f"{name}_w"], [f"{name}_mix"], kernel_shape=[1, 1]))
        nodes.append(
            helper.make_node(
                "AveragePool", [f"{name}_mix"], [f"{name}_avg"], kernel_shape=[size, size], strides=[size, size]
            )
        )
        nodes.append(helper.make_node("Add", [f"{name}_avg", f"{name}_zeros"], [name]))

    graph = helper.make_graph(
        nodes,
        "mean_backbone",
        [helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, size, size])],
        [
            helper.make_tensor_value_info(name, TensorProto.FLOAT, [1, channels, extent, extent])
            for name, channels, extent, _ in taps
        ],
        initializer=inits,
    )
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)], producer_name="unrest-fixtures")
    onnx.checker.check_model(model)
    onnx.save(model, str(OUT / "mean_backbone.onnx"))


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    export_tiny()
    export_mean()
    print("fixtures written to", OUT)
