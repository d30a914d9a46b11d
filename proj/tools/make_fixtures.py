#!/usr/bin/env python3
# Copyright 2026 The KernelForge Authors
# SPDX-License-Identifier: Apache-2.0
"""Regenerates assets/seed_catalog.json and tests/fixtures/."""

import json
import math
import os
import shutil

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIX = os.path.join(ROOT, "tests", "fixtures")


def inp(*shape, seedable=True):
    d = {"shape": list(shape), "dtype": "f32"}
    if not seedable:
        d["seedable"] = False
    return d


def ew(id_, op, *inputs, constant=None):
    params = {"op": op}
    if constant is not None:
        params["constant"] = constant
    return {"id": id_, "kind": "elementwise", "inputs": list(inputs), "params": params}


def mm(id_, a, b, transpose_b=False):
    return {"id": id_, "kind": "matmul", "inputs": [a, b], "params": {"transpose_b": transpose_b}}


def red(id_, op, x, axis=None, keepdim=False):
    return {"id": id_, "kind": "reduction", "inputs": [x],
            "params": {"op": op, "axis": axis, "keepdim": keepdim}}


def scale(id_, x, c):
    return {"id": id_, "kind": "scale", "inputs": [x], "params": {"constant": c}}


def conv(id_, x, k):
    return {"id": id_, "kind": "conv", "inputs": [x, k], "params": {}}


def dmm(id_, a, b):
    return {"id": id_, "kind": "diag_matmul", "inputs": [a, b], "params": {}}


def template(name, inputs, nodes, outputs, source="torch"):
    return {"name": name, "source": source, "inputs": inputs, "nodes": nodes, "outputs": outputs}


def task(task_id, inputs, nodes, outputs, level=None, base_seed=0, provenance="seed"):
    return {"task_id": task_id, "provenance": provenance, "level_tag": level,
            "input_seed_domain": {"distribution": "standard_normal", "base_seed": base_seed},
            "inputs": inputs, "nodes": nodes, "outputs": outputs}


def dump(path, obj):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def seed_catalog():
    n = 512
    t = [
        template("add", [inp(n, n), inp(n, n)], [ew("y", "add", "$0", "$1")], ["y"]),
        template("mul", [inp(n, n), inp(n, n)], [ew("y", "mul", "$0", "$1")], ["y"]),
        template("relu", [inp(n, n)], [ew("y", "relu", "$0")], ["y"]),
        template("sigmoid", [inp(n, n)], [ew("y", "sigmoid", "$0")], ["y"]),
        template("div_const", [inp(n, n)], [ew("y", "div_const", "$0", constant=2.0)], ["y"]),
        template("scale", [inp(n, n)], [scale("y", "$0", 0.5)], ["y"]),
        template("matmul", [inp(n, n), inp(n, n)], [mm("y", "$0", "$1")], ["y"]),
        template("matmul_relu", [inp(n, n), inp(n, n)],
                 [mm("h", "$0", "$1"), ew("y", "relu", "h")], ["y"]),
        template("row_sum", [inp(n, n)], [red("y", "sum", "$0", axis=1, keepdim=True)], ["y"]),
        template("col_mean", [inp(n, n)], [red("y", "mean", "$0", axis=0, keepdim=True)], ["y"]),
        template("conv3x3", [inp(n, n), inp(3, 3)], [conv("y", "$0", "$1")], ["y"]),
        template("diag_scale", [inp(n, n), inp(n)], [dmm("y", "$1", "$0")], ["y"]),
        template("attention_core", [inp(384, 384), inp(384, 384), inp(384, 384)],
                 [mm("q", "$0", "$1"), mm("k", "$0", "$2"), mm("s", "q", "k", transpose_b=True),
                  ew("p", "sigmoid", "s"), mm("y", "p", "$0")], ["y"], source="transformers"),
        template("mlp_block", [inp(n, n), inp(n, n), inp(n, n)],
                 [mm("h", "$0", "$1"), ew("a", "relu", "h"), mm("o", "a", "$2"),
                  ew("y", "add", "o", "$0")], ["y"], source="transformers"),
    ]
    dump(os.path.join(ROOT, "assets", "seed_catalog.json"), {"templates": t})


def diag_matmul_task(task_id="diag-matmul", n=512, m=512, level="L1", base_seed=7):
    return task(task_id, [inp(n), inp(n, m)], [dmm("y", "$0", "$1")], ["y"], level, base_seed)


def run_tasks():
    d = os.path.join(FIX, "run_tasks")
    shutil.rmtree(d, ignore_errors=True)
    tasks = [
        diag_matmul_task("run-diag-512", 512, 512, "L1", 1),
        diag_matmul_task("run-diag-256", 256, 384, "L1", 2),
        task("run-sum-dot", [inp(256, 256), inp(256, 256)],
             [mm("p", "$0", "$1"), red("y", "sum", "p", axis=1, keepdim=True)], ["y"], "L2", 3),
        task("run-matmul-relu", [inp(256, 256), inp(256, 256)],
             [mm("h", "$0", "$1"), ew("y", "relu", "h")], ["y"], "L2", 4),
        task("run-ew-chain", [inp(512, 512), inp(512, 512)],
             [ew("a", "add", "$0", "$1"), ew("b", "relu", "a"), scale("y", "b", 0.5)], ["y"],
             "L1", 5),
        task("run-row-mean", [inp(512, 512)],
             [ew("a", "sigmoid", "$0"), red("y", "mean", "a", axis=1, keepdim=False)], ["y"],
             "L2", 6),
        task("run-conv", [inp(256, 256), inp(3, 3)],
             [conv("c", "$0", "$1"), ew("y", "relu", "c")], ["y"], "L3", 7),
        task("run-mlp", [inp(256, 256), inp(256, 256), inp(256, 256)],
             [mm("h", "$0", "$1"), ew("a", "relu", "h"), mm("o", "a", "$2"),
              ew("y", "add", "o", "$0")], ["y"], "L3", 8),
    ]
    for t in tasks:
        dump(os.path.join(d, t["task_id"] + ".json"), t)


def headline_results():
    # Per level: n tasks, passed, faster vs eager, faster vs compile, geomeans.
    levels = [
        ("L1", 100, 100, 99, 97, 2.48, 1.87),
        ("L2", 100, 100, 100, 100, 3.27, 2.80),
        ("L3", 50, 47, 47, 45, 1.80, 1.52),
    ]
    lines = []
    for label, n, passed, fe, fc, ge, gc in levels:
        # Faster tasks share g^(passed/faster) so the level geomean is g.
        se = math.exp(math.log(ge) * passed / fe)
        sc = math.exp(math.log(gc) * passed / fc)
        for i in range(n):
            r = {"task_id": f"{label.lower()}-{i:03d}", "level": label, "passed": i < passed,
                 "speedup_vs_eager": None, "speedup_vs_compile": None}
            if i < passed:
                r["speedup_vs_eager"] = se if i < fe else 1.0
                r["speedup_vs_compile"] = sc if i < fc else 1.0
            lines.append(json.dumps(r))
    with open(os.path.join(FIX, "headline_results.jsonl"), "w") as f:
        f.write("\n".join(lines) + "\n")


def gae_fixture():
    dump(os.path.join(FIX, "gae_t3.json"),
         {"T": 3, "rewards": [0.0, 0.0, 2.0], "values": [0.5, 0.5, 0.5],
          "logp_old": [-1.0, -1.0, -1.0], "logp_new": [-1.0, -1.0, -1.0],
          "loss_mask": [True, True, True]})


if __name__ == "__main__":
    seed_catalog()
    dump(os.path.join(FIX, "diag_matmul", "diag-matmul.json"), diag_matmul_task())
    run_tasks()
    headline_results()
    gae_fixture()
