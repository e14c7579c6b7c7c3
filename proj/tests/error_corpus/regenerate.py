#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Writes the malformed-manifest corpus and expected.json (file -> error code)."""
import copy
import json
import pathlib
import struct

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent


def blob(name, array):
    array = np.ascontiguousarray(array, dtype="<f4")
    with open(HERE / name, "wb") as f:
        f.write(b"ISQT" + struct.pack("<II", 0, array.ndim) + struct.pack("<%dQ" % array.ndim, *array.shape))
        f.write(array.tobytes())


rng = np.random.default_rng(0)
blob("w.bin", rng.normal(size=(4, 2, 3, 3)))
blob("b.bin", rng.normal(size=(4,)))
blob("fcw.bin", rng.normal(size=(3, 4 * 6 * 6)))
blob("v.bin", np.ones(4))
blob("neg.bin", -np.ones(4))

BASE = {
    "name": "small",
    "input": {"shape": [1, 2, 6, 6]},
    "params": [
        {"name": "w", "dtype": "f32", "shape": [4, 2, 3, 3], "file": "w.bin"},
        {"name": "b", "dtype": "f32", "shape": [4], "file": "b.bin"},
        {"name": "fcw", "dtype": "f32", "shape": [3, 144], "file": "fcw.bin"},
        {"name": "v", "dtype": "f32", "shape": [4], "file": "v.bin"},
        {"name": "neg", "dtype": "f32", "shape": [4], "file": "neg.bin"},
    ],
    "nodes": [
        {"id": "conv", "kind": "conv2d", "inputs": ["input"], "attrs": {"stride": 1, "pad": 1},
         "params": {"weight": "w", "bias": "b"}},
        {"id": "relu", "kind": "relu", "inputs": ["conv"]},
        {"id": "flat", "kind": "flatten", "inputs": ["relu"]},
        {"id": "fc", "kind": "fc", "inputs": ["flat"], "params": {"weight": "fcw"}},
    ],
}

cases = {}


def case(name, code, edit):
    doc = copy.deepcopy(BASE)
    text = edit(doc)
    (HERE / name).write_text(text if isinstance(text, str) else json.dumps(doc, indent=2) + "\n")
    cases[name] = code


def set_(path, value):
    def edit(doc):
        target = doc
        for key in path[:-1]:
            target = target[key]
        target[path[-1]] = value
    return edit


def delete(path):
    def edit(doc):
        target = doc
        for key in path[:-1]:
            target = target[key]
        del target[path[-1]]
    return edit


def add_node(node):
    return lambda doc: doc["nodes"].append(node)


case("not_json.json", "model_graph.schema", lambda doc: "{ \"name\": \"small\", ")
case("not_object.json", "model_graph.schema", lambda doc: "[1, 2, 3]\n")
case("missing_name.json", "model_graph.schema", delete(["name"]))
case("unknown_top_field.json", "model_graph.schema", set_(["extra"], 1))
case("unknown_node_field.json", "model_graph.schema", set_(["nodes", 1, "color"], "red"))
case("unknown_kind.json", "model_graph.schema", set_(["nodes", 1, "kind"], "softmax"))
case("unknown_attr.json", "model_graph.schema", set_(["nodes", 0, "attrs", "dilation"], 2))
case("bad_param_dtype.json", "model_graph.schema", set_(["params", 0, "dtype"], "i8"))
case("missing_blob.json", "model_graph.missing_blob", set_(["params", 1, "file"], "nowhere.bin"))
case("blob_shape_mismatch.json", "model_graph.shape_inconsistent", set_(["params", 1, "shape"], [5]))
case("dangling_input.json", "model_graph.dangling_input", set_(["nodes", 1, "inputs"], ["ghost"]))
case("dangling_tensor.json", "model_graph.dangling_tensor", set_(["nodes", 3, "params"], {"weight": "ghost"}))
case("duplicate_id.json", "model_graph.duplicate_id", set_(["nodes", 2, "id"], "relu"))
case("cycle.json", "model_graph.cyclic_graph", set_(["nodes", 1, "inputs"], ["fc"]))
case("missing_weight.json", "model_graph.missing_param", set_(["nodes", 0, "params"], {"bias": "b"}))
case("channel_mismatch.json", "model_graph.shape_inconsistent", set_(["input", "shape"], [1, 3, 6, 6]))
case("fc_mismatch.json", "model_graph.shape_inconsistent", set_(["nodes", 0, "attrs", "stride"], 2))
case("groups.json", "model_graph.unsupported", set_(["nodes", 0, "attrs", "groups"], 2))
case("add_arity.json", "model_graph.shape_inconsistent",
     add_node({"id": "sum", "kind": "add", "inputs": ["fc"]}))
case("negative_variance.json", "model_graph.shape_inconsistent",
     add_node({"id": "bn", "kind": "batchnorm", "inputs": ["conv"],
               "params": {"gamma": "v", "beta": "v", "mean": "v", "var": "neg"}}))
case("bad_output.json", "model_graph.dangling_input", set_(["output"], "nothing"))
case("zero_dim.json", "model_graph.schema", set_(["input", "shape"], [1, 0, 6, 6]))
case("reserved_id.json", "model_graph.schema", set_(["nodes", 1, "id"], "input"))

(HERE / "expected.json").write_text(json.dumps(cases, indent=2, sort_keys=True) + "\n")
(HERE / "valid.json").write_text(json.dumps(BASE, indent=2) + "\n")
