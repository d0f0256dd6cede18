"""Versioned model files.

A model is a self-describing JSON document. Every float array is encoded
as a flat, row-major, space-separated string of 17-significant-digit
decimals, which round-trips float64 bit patterns exactly: loading a saved
model reproduces predictions bitwise.
"""

from __future__ import annotations

import json

import numpy as np

from .backbone import Backbone
from .forest import ForestModel, IndexFunction, Tree, TreeTopology
from .gaussian import LeafGaussian

MODEL_FORMAT = "drforest-model"
MODEL_VERSION = 1


def encode_floats(values):
    flat = np.asarray(values, dtype=np.float64).ravel()
    return " ".join(format(v, ".17g") for v in flat)


def decode_floats(text, shape=None):
    out = np.array([float(token) for token in text.split()], dtype=np.float64)
    return out if shape is None else out.reshape(shape)


def model_to_document(model):
    depths = {tree.topology.depth for tree in model.trees}
    if len(depths) != 1:
        raise ValueError("model file format requires a single shared tree depth")
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "d_x": model.d_x,
        "d_y": model.d_y,
        "units": model.backbone.out_dim,
        "trees": model.n_trees,
        "depth": depths.pop(),
        "target_mean": encode_floats(model.target_mean),
        "target_std": encode_floats(model.target_std),
        "backbone": {
            "widths": list(model.backbone.widths),
            "params": encode_floats(model.backbone.get_params()),
        },
        "tree_data": [
            {
                "unit_of_node": [int(u) for u in tree.index_fn.unit_of_node],
                "leaves": [
                    {"mean": encode_floats(leaf.mean), "cov": encode_floats(leaf.cov)}
                    for leaf in tree.leaves
                ],
            }
            for tree in model.trees
        ],
    }


def save_model(model, path):
    document = model_to_document(model)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(document, handle, indent=1, sort_keys=True)
        handle.write("\n")


def model_from_document(document):
    if not isinstance(document, dict) or document.get("format") != MODEL_FORMAT:
        raise ValueError("not a recognized model file")
    version = document.get("version")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {version!r}")
    d_y = int(document["d_y"])
    widths = [int(w) for w in document["backbone"]["widths"]]
    backbone = Backbone(widths[0], widths[-1], hidden=widths[1:-1])
    backbone.set_params(decode_floats(document["backbone"]["params"]))
    topology = TreeTopology(int(document["depth"]))
    trees = []
    for entry in document["tree_data"]:
        leaves = [
            LeafGaussian(
                decode_floats(leaf["mean"]),
                decode_floats(leaf["cov"], shape=(d_y, d_y)),
            )
            for leaf in entry["leaves"]
        ]
        trees.append(Tree(
            topology=topology,
            index_fn=IndexFunction(np.asarray(entry["unit_of_node"], dtype=np.intp)),
            leaves=leaves,
        ))
    if len(trees) != int(document["trees"]):
        raise ValueError("tree count in header disagrees with tree data")
    model = ForestModel(
        trees=trees,
        backbone=backbone,
        d_y=d_y,
        target_mean=decode_floats(document["target_mean"]),
        target_std=decode_floats(document["target_std"]),
    )
    if model.d_x != int(document["d_x"]):
        raise ValueError("input width in header disagrees with backbone spec")
    return model


def load_model(path):
    with open(path, "r", encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as err:
            raise ValueError(f"malformed model file: {err}") from None
    try:
        return model_from_document(document)
    except (KeyError, TypeError) as err:
        raise ValueError(f"malformed model file: missing or bad field ({err})") from None
